use std::sync::Arc;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::arch::{ArchKind, ArchSpec};
use crate::seed;
use crate::{Error, Result};

/// A named, shaped extent of the flat parameter array.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Segment {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
    pub len: usize,
}

impl Segment {
    /// Layer part of the name: `lstm3` for `lstm3.W_ifgo`.
    pub fn layer(&self) -> &str {
        self.name.split('.').next().unwrap_or(&self.name)
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len
    }
}

/// Ordered segments tiling a flat parameter array.
///
/// Naming records gate layout: `lstmN.W_ifgo` holds the input, forget, cell
/// and output gate rows (in that order) of a `[4H, I + H]` matrix acting on
/// `[x_t; h_{t-1}]`; `gruN.W_zrn` holds update, reset and candidate rows of a
/// `[3H, I + H]` matrix. Dense layers are `denseN.W` (`[out, in]`) and
/// `denseN.b`; the head is `out.W`, `out.b`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerPartition {
    segments: Vec<Segment>,
    total: usize,
}

impl LayerPartition {
    pub fn for_arch(arch: &ArchSpec) -> Self {
        let mut b = Builder::default();
        let mut input = arch.input_width();
        for (l, &h) in arch.hidden.iter().enumerate() {
            let name = arch.layer_name(l);
            match arch.kind {
                ArchKind::Ann => {
                    b.push(format!("{name}.W"), vec![h, input]);
                    b.push(format!("{name}.b"), vec![h]);
                }
                ArchKind::Lstm => {
                    b.push(format!("{name}.W_ifgo"), vec![4 * h, input + h]);
                    b.push(format!("{name}.b_ifgo"), vec![4 * h]);
                }
                ArchKind::Gru => {
                    b.push(format!("{name}.W_zrn"), vec![3 * h, input + h]);
                    b.push(format!("{name}.b_zrn"), vec![3 * h]);
                }
            }
            input = h;
        }
        b.push("out.W".into(), vec![1, input]);
        b.push("out.b".into(), vec![1]);
        Self {
            total: b.offset,
            segments: b.segments,
        }
    }

    /// Rebuilds a partition from `(name, shape)` pairs laid out in order.
    pub fn from_shapes(shapes: Vec<(String, Vec<usize>)>) -> Self {
        let mut b = Builder::default();
        for (name, shape) in shapes {
            b.push(name, shape);
        }
        Self {
            total: b.offset,
            segments: b.segments,
        }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn segment(&self, name: &str) -> Option<&Segment> {
        self.segments.iter().find(|s| s.name == name)
    }

    pub fn total(&self) -> usize {
        self.total
    }

    /// Distinct layer names in order (`lstm1`, ..., `out`).
    pub fn layers(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for s in &self.segments {
            if out.last() != Some(&s.layer()) {
                out.push(s.layer());
            }
        }
        out
    }
}

#[derive(Default)]
struct Builder {
    segments: Vec<Segment>,
    offset: usize,
}

impl Builder {
    fn push(&mut self, name: String, shape: Vec<usize>) {
        let len = shape.iter().product();
        self.segments.push(Segment {
            name,
            shape,
            offset: self.offset,
            len,
        });
        self.offset += len;
    }
}

/// Flat 64-bit parameters plus their partition; the unit exchanged between
/// clients and aggregators.
#[derive(Debug, Clone)]
pub struct ParamVector {
    partition: Arc<LayerPartition>,
    values: Vec<f64>,
}

impl PartialEq for ParamVector {
    /// Bitwise equality of values (so `-0.0 != 0.0` and `NaN == NaN`).
    fn eq(&self, other: &Self) -> bool {
        self.same_partition(other)
            && self.values.len() == other.values.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl ParamVector {
    pub fn zeros(partition: Arc<LayerPartition>) -> Self {
        let values = vec![0.0; partition.total()];
        Self { partition, values }
    }

    pub fn from_values(partition: Arc<LayerPartition>, values: Vec<f64>) -> Result<Self> {
        if values.len() != partition.total() {
            return Err(Error::PartitionMismatch(format!(
                "{} values for a partition of {}",
                values.len(),
                partition.total()
            )));
        }
        Ok(Self { partition, values })
    }

    pub fn partition(&self) -> &Arc<LayerPartition> {
        &self.partition
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn same_partition(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.partition, &other.partition) || self.partition == other.partition
    }

    pub fn segment(&self, name: &str) -> Option<&[f64]> {
        self.partition
            .segment(name)
            .map(|s| &self.values[s.range()])
    }

    pub fn segment_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let range = self.partition.segment(name)?.range();
        Some(&mut self.values[range])
    }

    /// Splits into per-segment vectors in partition order.
    pub fn to_segments(&self) -> Vec<Vec<f64>> {
        self.partition
            .segments()
            .iter()
            .map(|s| self.values[s.range()].to_vec())
            .collect()
    }

    /// Inverse of [`ParamVector::to_segments`].
    pub fn from_segments(partition: Arc<LayerPartition>, segments: Vec<Vec<f64>>) -> Result<Self> {
        if segments.len() != partition.segments().len() {
            return Err(Error::PartitionMismatch("segment count differs".into()));
        }
        let mut values = Vec::with_capacity(partition.total());
        for (seg, data) in partition.segments().iter().zip(segments) {
            if data.len() != seg.len {
                return Err(Error::PartitionMismatch(format!(
                    "segment `{}` has {} values, expected {}",
                    seg.name,
                    data.len(),
                    seg.len
                )));
            }
            values.extend(data);
        }
        Ok(Self { partition, values })
    }

    pub fn l2_distance(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Glorot-uniform weights and zero biases; LSTM forget-gate biases start at 1.
///
/// Gate blocks are initialized independently with fan-in `I + H` and
/// fan-out `H`.
pub fn init_model(arch: &ArchSpec, seed: u64) -> Result<ParamVector> {
    arch.validate()?;
    let partition = Arc::new(LayerPartition::for_arch(arch));
    let mut params = ParamVector::zeros(partition.clone());
    let mut rng = seed::rng(seed::derive(seed, "init", &[]));
    for seg in partition.segments() {
        let data = &mut params.values[seg.range()];
        if seg.shape.len() == 2 {
            let gates = match arch.kind {
                ArchKind::Lstm if seg.layer() != "out" => 4,
                ArchKind::Gru if seg.layer() != "out" => 3,
                _ => 1,
            };
            let fan_out = seg.shape[0] / gates;
            let fan_in = seg.shape[1];
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for w in data.iter_mut() {
                *w = rng.gen_range(-limit..limit);
            }
        } else if arch.kind == ArchKind::Lstm && seg.name.ends_with(".b_ifgo") {
            let h = seg.len / 4;
            data[h..2 * h].fill(1.0);
        }
    }
    Ok(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parameter_counts() {
        let ann = LayerPartition::for_arch(&ArchSpec::new(ArchKind::Ann, 60));
        assert_eq!(
            ann.total(),
            300 * 40 + 40 + 40 * 32 + 32 + 32 * 16 + 16 + 16 + 1
        );
        assert_eq!(ann.total(), 13_897);
        let lstm = LayerPartition::for_arch(&ArchSpec::new(ArchKind::Lstm, 60));
        let l1 =
            lstm.segment("lstm1.W_ifgo").unwrap().len + lstm.segment("lstm1.b_ifgo").unwrap().len;
        assert_eq!(l1, 7_360);
        assert_eq!(lstm.layers(), vec!["lstm1", "lstm2", "lstm3", "out"]);
        let gru = LayerPartition::for_arch(&ArchSpec::new(ArchKind::Gru, 60));
        assert_eq!(gru.segment("gru1.W_zrn").unwrap().shape, vec![120, 45]);
    }

    #[test]
    fn segments_tile_the_array() {
        for kind in [ArchKind::Ann, ArchKind::Gru, ArchKind::Lstm] {
            let p = LayerPartition::for_arch(&ArchSpec::new(kind, 60));
            let mut next = 0;
            for s in p.segments() {
                assert_eq!(s.offset, next);
                next += s.len;
            }
            assert_eq!(next, p.total());
        }
    }

    #[test]
    fn init_is_deterministic_and_sets_forget_bias() {
        let arch = ArchSpec::new(ArchKind::Lstm, 60);
        let a = init_model(&arch, 3).unwrap();
        let b = init_model(&arch, 3).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, init_model(&arch, 4).unwrap());
        let bias = a.segment("lstm2.b_ifgo").unwrap();
        assert!(bias[..32].iter().all(|&x| x == 0.0));
        assert!(bias[32..64].iter().all(|&x| x == 1.0));
        assert!(bias[64..].iter().all(|&x| x == 0.0));
        assert!(a.segment("out.b").unwrap()[0] == 0.0);
    }

    #[test]
    fn equal_arch_gives_equal_partition() {
        let arch = ArchSpec::new(ArchKind::Gru, 30);
        let a = init_model(&arch, 1).unwrap();
        let b = init_model(&arch, 2).unwrap();
        assert!(a.same_partition(&b));
    }

    proptest! {
        #[test]
        fn flatten_unflatten_is_identity(seed in any::<u64>(), kind in 0usize..3) {
            let kind = [ArchKind::Ann, ArchKind::Gru, ArchKind::Lstm][kind];
            let arch = ArchSpec::new(kind, 4).with_hidden(vec![3, 2, 2]);
            let p = init_model(&arch, seed).unwrap();
            let back = ParamVector::from_segments(p.partition().clone(), p.to_segments()).unwrap();
            prop_assert_eq!(back, p);
        }
    }
}
