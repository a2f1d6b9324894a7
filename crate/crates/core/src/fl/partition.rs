use std::fmt;
use std::ops::Range;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::plan::Algorithm;
use crate::nn::{ArchSpec, LayerPartition};
use crate::{Error, Result};

/// Which hidden layers stay on the client.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum PartitionPolicy {
    /// FedPer: the last hidden layer; FedRep: the first hidden layer.
    Default,
    /// Nothing personal; every segment is aggregated.
    EmptyPersonal,
    /// Explicit layer names, e.g. `lstm2,lstm3`.
    Layers(Vec<String>),
}

impl fmt::Display for PartitionPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PartitionPolicy::Default => f.write_str("default"),
            PartitionPolicy::EmptyPersonal => f.write_str("none"),
            PartitionPolicy::Layers(l) => f.write_str(&l.join(",")),
        }
    }
}

impl FromStr for PartitionPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "default" => Ok(PartitionPolicy::Default),
            "none" => Ok(PartitionPolicy::EmptyPersonal),
            "" => Err(Error::param("partition", "empty policy")),
            list => Ok(PartitionPolicy::Layers(
                list.split(',').map(|l| l.trim().to_string()).collect(),
            )),
        }
    }
}

impl From<PartitionPolicy> for String {
    fn from(p: PartitionPolicy) -> String {
        p.to_string()
    }
}

impl TryFrom<String> for PartitionPolicy {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Disjoint shared (aggregated) and personal (client-resident) segment sets
/// covering a [`LayerPartition`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SharedPersonalSplit {
    shared: Vec<String>,
    personal: Vec<String>,
    shared_ranges: Vec<Range<usize>>,
    personal_ranges: Vec<Range<usize>>,
}

impl SharedPersonalSplit {
    pub fn shared(&self) -> &[String] {
        &self.shared
    }

    pub fn personal(&self) -> &[String] {
        &self.personal
    }

    pub fn shared_ranges(&self) -> &[Range<usize>] {
        &self.shared_ranges
    }

    pub fn personal_ranges(&self) -> &[Range<usize>] {
        &self.personal_ranges
    }

    pub fn shared_len(&self) -> usize {
        self.shared_ranges.iter().map(|r| r.len()).sum()
    }

    pub fn personal_len(&self) -> usize {
        self.personal_ranges.iter().map(|r| r.len()).sum()
    }
}

/// Splits the segments of `arch` into shared and personal sets.
///
/// The default marks exactly one hidden layer as personal: the last one for
/// FedPer (shared base layers) and the first one for FedRep (shared head
/// side). The output layer is always shared under the default.
pub fn make_partition(
    arch: &ArchSpec,
    algorithm: Algorithm,
    policy: &PartitionPolicy,
) -> Result<SharedPersonalSplit> {
    let partition = LayerPartition::for_arch(arch);
    let layers: Vec<String> = (0..arch.hidden.len()).map(|l| arch.layer_name(l)).collect();
    let personal_layers: Vec<String> = match policy {
        PartitionPolicy::EmptyPersonal => Vec::new(),
        PartitionPolicy::Default => match algorithm {
            Algorithm::Per => vec![layers[layers.len() - 1].clone()],
            Algorithm::Rep => vec![layers[0].clone()],
            other => {
                return Err(Error::param(
                    "partition",
                    format!("{other} has no personal layers; use fl.partition = \"none\""),
                ))
            }
        },
        PartitionPolicy::Layers(names) => {
            let known: Vec<&str> = partition.layers();
            if let Some(bad) = names.iter().find(|n| !known.contains(&n.as_str())) {
                return Err(Error::param(
                    "partition",
                    format!("unknown layer {bad:?} (known: {})", known.join(", ")),
                ));
            }
            names.clone()
        }
    };
    let mut split = SharedPersonalSplit {
        shared: Vec::new(),
        personal: Vec::new(),
        shared_ranges: Vec::new(),
        personal_ranges: Vec::new(),
    };
    for seg in partition.segments() {
        if personal_layers.iter().any(|l| l == seg.layer()) {
            split.personal.push(seg.name.clone());
            split.personal_ranges.push(seg.range());
        } else {
            split.shared.push(seg.name.clone());
            split.shared_ranges.push(seg.range());
        }
    }
    if split.shared.is_empty() {
        return Err(Error::param("partition", "policy leaves no shared segment"));
    }
    Ok(split)
}
