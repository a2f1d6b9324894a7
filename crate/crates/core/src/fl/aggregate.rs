use std::ops::Range;

use crate::nn::ParamVector;
use crate::{Error, Result};

/// Weights `n_v / sum(n)`.
pub fn aggregation_weights(counts: &[usize]) -> Vec<f64> {
    let total: usize = counts.iter().sum();
    counts.iter().map(|&n| n as f64 / total as f64).collect()
}

fn check(entries: &[(&ParamVector, usize)]) -> Result<()> {
    let Some((first, _)) = entries.first() else {
        return Err(Error::param("entries", "nothing to average"));
    };
    if entries.iter().any(|(p, _)| !p.same_partition(first)) {
        return Err(Error::PartitionMismatch(
            "clients disagree on the parameter layout".into(),
        ));
    }
    if entries.iter().any(|&(_, n)| n == 0) {
        return Err(Error::param(
            "n_v",
            "every client needs at least one sample",
        ));
    }
    Ok(())
}

/// Sample-weighted average `sum(n_v / n * w_v)`.
///
/// Each coordinate is summed in a canonical order (by value, then count), so
/// the result does not depend on the order of `entries`; a coordinate on
/// which all entries agree is returned unchanged.
pub fn weighted_average(entries: &[(&ParamVector, usize)]) -> Result<ParamVector> {
    check(entries)?;
    let mut out = entries[0].0.clone();
    let len = out.len();
    average_ranges(out.values_mut(), entries, std::iter::once(0..len));
    Ok(out)
}

/// Writes the weighted average of `entries` into `out` on `ranges` only.
pub fn weighted_average_into(
    out: &mut ParamVector,
    entries: &[(&ParamVector, usize)],
    ranges: &[Range<usize>],
) -> Result<()> {
    check(entries)?;
    if !out.same_partition(entries[0].0) {
        return Err(Error::PartitionMismatch(
            "target layout differs from clients".into(),
        ));
    }
    average_ranges(out.values_mut(), entries, ranges.iter().cloned());
    Ok(())
}

fn average_ranges(
    out: &mut [f64],
    entries: &[(&ParamVector, usize)],
    ranges: impl Iterator<Item = Range<usize>>,
) {
    let weights = aggregation_weights(&entries.iter().map(|&(_, n)| n).collect::<Vec<_>>());
    let mut terms: Vec<(f64, usize, f64)> = Vec::with_capacity(entries.len());
    for range in ranges {
        for k in range {
            let first = entries[0].0.values()[k];
            if entries
                .iter()
                .all(|(p, _)| p.values()[k].to_bits() == first.to_bits())
            {
                out[k] = first;
                continue;
            }
            terms.clear();
            terms.extend(
                entries
                    .iter()
                    .zip(&weights)
                    .map(|(&(p, n), &w)| (p.values()[k], n, w)),
            );
            terms.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut acc = terms[0].2 * terms[0].0;
            for &(v, _, w) in &terms[1..] {
                acc += w * v;
            }
            out[k] = acc;
        }
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use proptest::prelude::*;

    use super::*;
    use crate::nn::LayerPartition;

    fn pv(values: Vec<f64>) -> ParamVector {
        let part = Arc::new(LayerPartition::from_shapes(vec![(
            "w".into(),
            vec![values.len()],
        )]));
        ParamVector::from_values(part, values).unwrap()
    }

    #[test]
    fn examples() {
        let (a, b) = (pv(vec![1.0, 1.0]), pv(vec![5.0, 5.0]));
        assert_eq!(
            weighted_average(&[(&a, 2), (&b, 2)]).unwrap().values(),
            &[3.0, 3.0]
        );
        assert_eq!(
            weighted_average(&[(&a, 1), (&b, 3)]).unwrap().values(),
            &[4.0, 4.0]
        );
        let odd = pv(vec![0.1, -0.0, f64::MIN_POSITIVE]);
        assert_eq!(weighted_average(&[(&odd, 7)]).unwrap(), odd);
    }

    #[test]
    fn identical_vectors_are_fixed_points() {
        let v = pv(vec![0.1, 0.7, -1.3e-7]);
        let avg = weighted_average(&[(&v, 1), (&v, 1), (&v, 1)]).unwrap();
        assert_eq!(avg, v);
    }

    #[test]
    fn errors() {
        assert!(weighted_average(&[]).is_err());
        let (a, b) = (pv(vec![1.0]), pv(vec![1.0, 2.0]));
        assert!(matches!(
            weighted_average(&[(&a, 1), (&b, 1)]),
            Err(Error::PartitionMismatch(_))
        ));
    }

    #[test]
    fn masked_average_leaves_other_coordinates() {
        let (a, b) = (pv(vec![1.0, 2.0, 3.0]), pv(vec![3.0, 4.0, 5.0]));
        let mut out = pv(vec![9.0, 9.0, 9.0]);
        weighted_average_into(&mut out, &[(&a, 1), (&b, 1)], &[1..2]).unwrap();
        assert_eq!(out.values(), &[9.0, 3.0, 9.0]);
    }

    proptest! {
        #[test]
        fn weights_sum_to_one(counts in prop::collection::vec(1usize..5000, 1..20)) {
            let s: f64 = aggregation_weights(&counts).iter().sum();
            prop_assert!((s - 1.0).abs() <= 1e-15);
        }

        #[test]
        fn permutation_invariant(
            rows in prop::collection::vec((prop::collection::vec(-10.0f64..10.0, 4), 1usize..100), 1..8),
            rot in 0usize..8,
        ) {
            let vs: Vec<(ParamVector, usize)> = rows.iter().map(|(v, n)| (pv(v.clone()), *n)).collect();
            let entries: Vec<(&ParamVector, usize)> = vs.iter().map(|(p, n)| (p, *n)).collect();
            let mut permuted = entries.clone();
            permuted.rotate_left(rot % entries.len());
            permuted.reverse();
            prop_assert_eq!(weighted_average(&entries).unwrap(), weighted_average(&permuted).unwrap());
        }

        #[test]
        fn stays_within_hull(rows in prop::collection::vec((-10.0f64..10.0, 1usize..100), 1..8)) {
            let vs: Vec<(ParamVector, usize)> = rows.iter().map(|(v, n)| (pv(vec![*v]), *n)).collect();
            let entries: Vec<(&ParamVector, usize)> = vs.iter().map(|(p, n)| (p, *n)).collect();
            let avg = weighted_average(&entries).unwrap().values()[0];
            let lo = rows.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
            let hi = rows.iter().map(|r| r.0).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(avg >= lo - 1e-12 && avg <= hi + 1e-12);
        }
    }
}
