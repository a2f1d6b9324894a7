use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One vehicle's per-second trip log.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TripRecord {
    pub vehicle_id: String,
    /// s
    pub time: Vec<f64>,
    /// m/s
    pub speed: Vec<f64>,
    /// m/s²
    pub acceleration: Vec<f64>,
    /// Cumulative distance, m.
    pub distance: Vec<f64>,
    /// Per-second pack energy, Wh.
    pub energy_wh: Vec<f64>,
    /// Pass-through columns in file order.
    pub extras: Vec<(String, Vec<f64>)>,
}

impl TripRecord {
    pub fn with_capacity(vehicle_id: &str, n: usize) -> Self {
        Self {
            vehicle_id: vehicle_id.to_string(),
            time: Vec::with_capacity(n),
            speed: Vec::with_capacity(n),
            acceleration: Vec::with_capacity(n),
            distance: Vec::with_capacity(n),
            energy_wh: Vec::with_capacity(n),
            extras: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.time.len()
    }

    pub fn is_empty(&self) -> bool {
        self.time.is_empty()
    }

    pub fn extra(&self, name: &str) -> Option<&[f64]> {
        self.extras
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    /// Checks the record invariants; the error names the offending row.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let n = self.len();
        let lens = [
            self.speed.len(),
            self.acceleration.len(),
            self.distance.len(),
            self.energy_wh.len(),
        ];
        if lens.iter().any(|&l| l != n) || self.extras.iter().any(|(_, c)| c.len() != n) {
            return Err("columns have unequal lengths".into());
        }
        for t in 0..n {
            if t > 0 {
                let dt = self.time[t] - self.time[t - 1];
                if !(dt > 0.0) {
                    return Err(format!("row {}: time is not strictly increasing", t + 1));
                }
                if (dt - 1.0).abs() > 1e-6 {
                    return Err(format!("row {}: time step {dt} s is not 1 Hz", t + 1));
                }
                if self.distance[t] < self.distance[t - 1] {
                    return Err(format!("row {}: distance decreases", t + 1));
                }
            }
            if self.speed[t] < 0.0 {
                return Err(format!("row {}: negative speed", t + 1));
            }
        }
        Ok(())
    }
}

/// Header name for each of the five required column roles.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnMap {
    pub time: String,
    pub speed: String,
    pub acceleration: String,
    pub distance: String,
    pub energy: String,
}

impl Default for ColumnMap {
    fn default() -> Self {
        Self {
            time: "time_s".into(),
            speed: "speed_mps".into(),
            acceleration: "accel_mps2".into(),
            distance: "distance_m".into(),
            energy: "energy_wh".into(),
        }
    }
}

impl ColumnMap {
    fn roles(&self) -> [(&'static str, &str); 5] {
        [
            ("time", &self.time),
            ("speed", &self.speed),
            ("acceleration", &self.acceleration),
            ("distance", &self.distance),
            ("energy", &self.energy),
        ]
    }
}

/// Loads and validates a per-vehicle trip CSV. The vehicle id is the file stem.
pub fn load_trip_csv(path: &Path, columns: &ColumnMap) -> Result<TripRecord> {
    let load_err = |reason: String| Error::Load {
        path: path.to_path_buf(),
        reason,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| load_err(e.to_string()))?;
    let headers: Vec<String> = reader
        .headers()
        .map_err(|e| load_err(e.to_string()))?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();

    let mut role_idx = [0usize; 5];
    for (slot, (role, header)) in role_idx.iter_mut().zip(columns.roles()) {
        *slot = headers
            .iter()
            .position(|h| h == header)
            .ok_or_else(|| Error::MissingColumn {
                path: path.to_path_buf(),
                role,
                header: header.to_string(),
            })?;
    }
    let extra_idx: Vec<usize> = (0..headers.len())
        .filter(|i| !role_idx.contains(i))
        .collect();

    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); headers.len()];
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| load_err(e.to_string()))?;
        if record.len() != headers.len() {
            return Err(load_err(format!(
                "row {}: expected {} fields, found {}",
                row + 1,
                headers.len(),
                record.len()
            )));
        }
        for (c, field) in record.iter().enumerate() {
            let value: f64 = field.trim().parse().map_err(|_| {
                load_err(format!(
                    "row {}, column `{}`: non-numeric value `{field}`",
                    row + 1,
                    headers[c]
                ))
            })?;
            if !value.is_finite() {
                return Err(load_err(format!(
                    "row {}, column `{}`: non-finite value",
                    row + 1,
                    headers[c]
                )));
            }
            cols[c].push(value);
        }
    }

    let vehicle_id = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let extras = extra_idx
        .iter()
        .map(|&i| (headers[i].clone(), std::mem::take(&mut cols[i])))
        .collect();
    let mut take = |i: usize| std::mem::take(&mut cols[role_idx[i]]);
    let rec = TripRecord {
        vehicle_id,
        time: take(0),
        speed: take(1),
        acceleration: take(2),
        distance: take(3),
        energy_wh: take(4),
        extras,
    };
    rec.validate().map_err(load_err)?;
    Ok(rec)
}

/// Writes a record with canonical headers (see [`ColumnMap::default`]).
pub fn write_trip_csv(rec: &TripRecord, path: &Path) -> Result<()> {
    let canon = ColumnMap::default();
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<&str> = vec![
        &canon.time,
        &canon.speed,
        &canon.acceleration,
        &canon.distance,
    ];
    header.extend(rec.extras.iter().map(|(n, _)| n.as_str()));
    header.push(&canon.energy);
    w.write_record(&header)?;
    let mut row: Vec<String> = Vec::with_capacity(header.len());
    for t in 0..rec.len() {
        row.clear();
        // `{}` on f64 prints the shortest representation that round-trips.
        row.push(format!("{}", rec.time[t]));
        row.push(format!("{}", rec.speed[t]));
        row.push(format!("{}", rec.acceleration[t]));
        row.push(format!("{}", rec.distance[t]));
        row.extend(rec.extras.iter().map(|(_, c)| format!("{}", c[t])));
        row.push(format!("{}", rec.energy_wh[t]));
        w.write_record(&row)?;
    }
    w.flush()
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::File::create(&p)
            .unwrap()
            .write_all(body.as_bytes())
            .unwrap();
        p
    }

    const GOOD: &str = "time_s,speed_mps,accel_mps2,distance_m,temp_c,energy_wh\n\
                        0,0,0,0,20,0\n1,1,1,1,20,0.5\n2,3,2,4,21,1.25\n";

    #[test]
    fn loads_canonical_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "V7.csv", GOOD);
        let rec = load_trip_csv(&p, &ColumnMap::default()).unwrap();
        assert_eq!(rec.vehicle_id, "V7");
        assert_eq!(rec.len(), 3);
        assert_eq!(rec.energy_wh, vec![0.0, 0.5, 1.25]);
        assert_eq!(rec.extra("temp_c").unwrap(), &[20.0, 20.0, 21.0]);
    }

    #[test]
    fn remapped_headers_give_identical_record() {
        let dir = tempfile::tempdir().unwrap();
        let a = write(dir.path(), "V1.csv", GOOD);
        let b_dir = dir.path().join("b");
        std::fs::create_dir(&b_dir).unwrap();
        let renamed = GOOD.replacen(
            "time_s,speed_mps,accel_mps2,distance_m,temp_c,energy_wh",
            "t,v,acc,dist,temp_c,E",
            1,
        );
        let b = write(&b_dir, "V1.csv", &renamed);
        let map = ColumnMap {
            time: "t".into(),
            speed: "v".into(),
            acceleration: "acc".into(),
            distance: "dist".into(),
            energy: "E".into(),
        };
        assert_eq!(
            load_trip_csv(&a, &ColumnMap::default()).unwrap(),
            load_trip_csv(&b, &map).unwrap()
        );
    }

    #[test]
    fn missing_energy_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "V1.csv",
            "time_s,speed_mps,accel_mps2,distance_m\n0,0,0,0\n",
        );
        let err = load_trip_csv(&p, &ColumnMap::default()).unwrap_err();
        assert!(matches!(err, Error::MissingColumn { role: "energy", .. }));
    }

    #[test]
    fn reports_bad_cells_with_location() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "V1.csv",
            "time_s,speed_mps,accel_mps2,distance_m,energy_wh\n0,0,0,0,0\n1,abc,0,0,0\n",
        );
        let msg = load_trip_csv(&p, &ColumnMap::default())
            .unwrap_err()
            .to_string();
        assert!(msg.contains("row 2") && msg.contains("speed_mps"), "{msg}");

        let p = write(
            dir.path(),
            "V2.csv",
            "time_s,speed_mps,accel_mps2,distance_m,energy_wh\n0,0,0,0,0\n1,NaN,0,0,0\n",
        );
        assert!(load_trip_csv(&p, &ColumnMap::default()).is_err());

        let p = write(
            dir.path(),
            "V3.csv",
            "time_s,speed_mps,accel_mps2,distance_m,energy_wh\n0,0,0,0,0\n0,0,0,0,0\n",
        );
        let msg = load_trip_csv(&p, &ColumnMap::default())
            .unwrap_err()
            .to_string();
        assert!(msg.contains("not strictly increasing"), "{msg}");
    }

    #[test]
    fn write_then_load_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "V1.csv", GOOD);
        let rec = load_trip_csv(&p, &ColumnMap::default()).unwrap();
        let out = dir.path().join("out");
        std::fs::create_dir(&out).unwrap();
        let q = out.join("V1.csv");
        write_trip_csv(&rec, &q).unwrap();
        assert_eq!(load_trip_csv(&q, &ColumnMap::default()).unwrap(), rec);
    }
}
