use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Good (`G`) or weak (`W`) performer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Performer {
    G,
    W,
}

/// Disjoint peer groups for a decentralized run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub groups: Vec<Group>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Group {
    pub name: String,
    pub members: Vec<String>,
    /// Optional performer label per member, same order as `members`.
    pub labels: Vec<Option<Performer>>,
}

impl GroupSpec {
    /// Parses `V1,V2;V3,V4`: groups separated by `;`, members by `,`.
    pub fn parse(text: &str) -> Result<Self> {
        let groups = text
            .split(';')
            .map(str::trim)
            .filter(|g| !g.is_empty())
            .enumerate()
            .map(|(i, g)| {
                let members: Vec<String> = g
                    .split(',')
                    .map(|m| m.trim().to_string())
                    .filter(|m| !m.is_empty())
                    .collect();
                Group {
                    name: format!("group{}", i + 1),
                    labels: vec![None; members.len()],
                    members,
                }
            })
            .collect();
        let spec = GroupSpec { groups };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.groups.is_empty() {
            return Err(Error::param("topology.groups", "no groups given"));
        }
        let mut seen = BTreeSet::new();
        for g in &self.groups {
            if g.members.is_empty() {
                return Err(Error::param(
                    "topology.groups",
                    format!("{} is empty", g.name),
                ));
            }
            if g.labels.len() != g.members.len() {
                return Err(Error::param(
                    "topology.groups",
                    format!("{} labels do not match members", g.name),
                ));
            }
            for m in &g.members {
                if !seen.insert(m.as_str()) {
                    return Err(Error::param(
                        "topology.groups",
                        format!("{m} appears in more than one group"),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Ranks clients by baseline test MAE: the `k` lowest are good performers,
/// the `k` highest weak ones. Ties keep the input (fleet) order.
pub fn select_performers(maes: &[(String, f64)], k: usize) -> Result<(Vec<String>, Vec<String>)> {
    if k == 0 || 2 * k > maes.len() {
        return Err(Error::param(
            "k",
            format!(
                "need 1 <= k <= {} for {} clients",
                maes.len() / 2,
                maes.len()
            ),
        ));
    }
    let mut order: Vec<usize> = (0..maes.len()).collect();
    order.sort_by(|&a, &b| maes[a].1.total_cmp(&maes[b].1).then(a.cmp(&b)));
    let good = order[..k].iter().map(|&i| maes[i].0.clone()).collect();
    let mut weak_idx: Vec<usize> = order[order.len() - k..].to_vec();
    weak_idx.sort_by(|&a, &b| maes[b].1.total_cmp(&maes[a].1).then(a.cmp(&b)));
    let weak = weak_idx.iter().map(|&i| maes[i].0.clone()).collect();
    Ok((good, weak))
}

/// The `k + 1` compositions `jG + (k - j)W` for `j = 0..=k`, each a one-group
/// spec: the `j` best good performers with the `k - j` weakest clients.
pub fn case6_groups(good: &[String], weak: &[String]) -> Result<Vec<GroupSpec>> {
    let k = good.len();
    if k == 0 || weak.len() != k {
        return Err(Error::param(
            "case6",
            "need equally many good and weak performers",
        ));
    }
    (0..=k)
        .map(|j| {
            let mut members: Vec<String> = good[..j].to_vec();
            let mut labels = vec![Some(Performer::G); j];
            members.extend(weak[..k - j].iter().cloned());
            labels.extend(std::iter::repeat_n(Some(Performer::W), k - j));
            let spec = GroupSpec {
                groups: vec![Group {
                    name: format!("{j}G+{}W", k - j),
                    members,
                    labels,
                }],
            };
            spec.validate()?;
            Ok(spec)
        })
        .collect()
}
