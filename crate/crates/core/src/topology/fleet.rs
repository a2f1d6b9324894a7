use std::cmp::Ordering;
use std::collections::BTreeSet;

use crate::data::{
    chronological_split, engineer_features, make_windows, speed_energy_lag, SplitSpec,
    Standardizer, TripRecord, WindowedDataset,
};
use crate::{Error, Result};

/// Largest speed-to-energy delay probed by the lag diagnostic, seconds.
const MAX_LAG: usize = 120;

/// One vehicle after the data pipeline: standardized splits and diagnostics.
#[derive(Debug, Clone)]
pub struct ClientData {
    pub id: String,
    pub index: usize,
    pub train: WindowedDataset,
    pub val: WindowedDataset,
    pub test: WindowedDataset,
    /// Windows before splitting.
    pub n_windows: usize,
    /// Delay of energy behind speed, if the correlation is defined.
    pub lag_s: Option<usize>,
    pub standardizer: Standardizer,
}

/// Every client of an experiment, in fleet order.
#[derive(Debug, Clone)]
pub struct Fleet {
    pub clients: Vec<ClientData>,
    pub window: usize,
    pub split: SplitSpec,
}

impl Fleet {
    pub fn len(&self) -> usize {
        self.clients.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clients.is_empty()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.clients.iter().map(|c| c.id.as_str()).collect()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.clients.iter().position(|c| c.id == id)
    }
}

/// Orders ids like `V2 < V10`: by non-digit prefix, then numeric suffix.
pub fn natural_id_order(a: &str, b: &str) -> Ordering {
    fn split(s: &str) -> (&str, Option<u64>) {
        let cut = s.trim_end_matches(|c: char| c.is_ascii_digit()).len();
        (&s[..cut], s[cut..].parse().ok())
    }
    let (pa, na) = split(a);
    let (pb, nb) = split(b);
    pa.cmp(pb).then(na.cmp(&nb)).then(a.cmp(b))
}

/// Features, windows, chronological split and a train-fitted standardizer
/// for every record. Labels stay in Wh.
pub fn prepare_fleet(records: &[TripRecord], window: usize, split: SplitSpec) -> Result<Fleet> {
    if records.is_empty() {
        return Err(Error::param("fleet", "no vehicles"));
    }
    let mut seen = BTreeSet::new();
    if let Some(dup) = records.iter().find(|r| !seen.insert(r.vehicle_id.as_str())) {
        return Err(Error::param(
            "fleet",
            format!("duplicate vehicle id {:?}", dup.vehicle_id),
        ));
    }
    let clients = records
        .iter()
        .enumerate()
        .map(|(index, rec)| {
            let features = engineer_features(rec)?;
            let all = make_windows(&features, &rec.energy_wh, window, 1)?;
            let (train, val, test) = chronological_split(&all, split)?;
            let standardizer = Standardizer::fit(&train);
            Ok(ClientData {
                id: rec.vehicle_id.clone(),
                index,
                train: standardizer.apply(&train),
                val: standardizer.apply(&val),
                test: standardizer.apply(&test),
                n_windows: all.len(),
                lag_s: speed_energy_lag(rec, MAX_LAG).ok(),
                standardizer,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Fleet {
        clients,
        window,
        split,
    })
}
