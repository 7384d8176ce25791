//! Stop network with routing costs (km) and travel times (minutes).

use std::collections::BTreeMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type StopId = u32;

pub const DEPOT: StopId = 0;
pub const DETOUR_FACTOR: f64 = 1.3;
pub const TIME_PER_KM: f64 = 2.3634;
pub const TIME_INTERCEPT: f64 = 0.2086;

const TRIANGLE_SLACK: f64 = 1e-9;

/// Linear travel-time model (minutes from km). Self-loops take no time.
pub fn travel_time_from_cost(c_km: f64) -> f64 {
    if c_km > 0.0 {
        TIME_PER_KM * c_km + TIME_INTERCEPT
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Stop {
    #[serde(rename = "stop_id")]
    pub id: StopId,
    #[serde(default)]
    pub name: String,
    pub x_km: f64,
    pub y_km: f64,
}

#[derive(Debug, Clone)]
pub struct StopNetwork {
    stops: Vec<Stop>,
    index: BTreeMap<StopId, usize>,
    cost: Vec<Vec<f64>>,
    time: Vec<Vec<f64>>,
}

impl StopNetwork {
    /// Network with Euclidean distances scaled by `detour`, and travel times from
    /// [`travel_time_from_cost`].
    pub fn from_coordinates(stops: Vec<Stop>, detour: f64) -> Result<Self> {
        let cost: Vec<Vec<f64>> = stops
            .iter()
            .map(|a| {
                stops
                    .iter()
                    .map(|b| detour * (a.x_km - b.x_km).hypot(a.y_km - b.y_km))
                    .collect()
            })
            .collect();
        Self::from_cost_matrix(stops, cost)
    }

    /// Network from an explicit cost matrix; travel times follow the linear model.
    pub fn from_cost_matrix(stops: Vec<Stop>, cost: Vec<Vec<f64>>) -> Result<Self> {
        let time = cost
            .iter()
            .map(|row| row.iter().map(|&c| travel_time_from_cost(c)).collect())
            .collect();
        Self::from_matrices(stops, cost, time)
    }

    /// Network from explicit cost and time matrices, indexed like `stops`.
    pub fn from_matrices(stops: Vec<Stop>, cost: Vec<Vec<f64>>, time: Vec<Vec<f64>>) -> Result<Self> {
        let n = stops.len();
        if n < 2 {
            return Err(Error::InvalidNetwork("need at least two stops".into()));
        }
        let mut index = BTreeMap::new();
        for (i, s) in stops.iter().enumerate() {
            if index.insert(s.id, i).is_some() {
                return Err(Error::InvalidNetwork(format!("duplicate stop id {}", s.id)));
            }
        }
        if !index.contains_key(&DEPOT) {
            return Err(Error::InvalidNetwork("depot stop 0 missing".into()));
        }
        for (name, m) in [("cost", &cost), ("time", &time)] {
            if m.len() != n || m.iter().any(|r| r.len() != n) {
                return Err(Error::InvalidNetwork(format!("{name} matrix is not {n}x{n}")));
            }
            for (i, row) in m.iter().enumerate() {
                if row[i] != 0.0 {
                    return Err(Error::InvalidNetwork(format!("{name}[{i}][{i}] is not zero")));
                }
                if row.iter().any(|v| !v.is_finite() || *v < 0.0) {
                    return Err(Error::InvalidNetwork(format!("{name} row {i} has invalid entries")));
                }
            }
            check_triangle(name, m)?;
        }
        Ok(StopNetwork {
            stops,
            index,
            cost,
            time,
        })
    }

    pub fn stops(&self) -> &[Stop] {
        &self.stops
    }

    /// Stop ids except the depot, ascending.
    pub fn service_stops(&self) -> Vec<StopId> {
        self.index.keys().copied().filter(|&s| s != DEPOT).collect()
    }

    pub fn contains(&self, id: StopId) -> bool {
        self.index.contains_key(&id)
    }

    fn idx(&self, id: StopId) -> usize {
        match self.index.get(&id) {
            Some(&i) => i,
            None => panic!("stop {id} is not part of the network"),
        }
    }

    pub fn check(&self, id: StopId) -> Result<()> {
        if self.contains(id) {
            Ok(())
        } else {
            Err(Error::UnknownStop(id))
        }
    }

    /// Routing cost in km. Panics on unknown stops; validate ids with [`Self::check`].
    pub fn cost(&self, a: StopId, b: StopId) -> f64 {
        self.cost[self.idx(a)][self.idx(b)]
    }

    /// Travel time in minutes.
    pub fn time(&self, a: StopId, b: StopId) -> f64 {
        self.time[self.idx(a)][self.idx(b)]
    }

    pub fn is_symmetric(&self) -> bool {
        let n = self.stops.len();
        (0..n).all(|i| (0..i).all(|j| self.cost[i][j] == self.cost[j][i] && self.time[i][j] == self.time[j][i]))
    }

    /// Reads `stop_id,name,x_km,y_km` rows and, optionally, a long-format
    /// `from_stop,to_stop,cost_km` matrix overriding the Euclidean costs.
    pub fn from_csv(stops_csv: &Path, cost_csv: Option<&Path>) -> Result<Self> {
        let stops = read_stops_csv(stops_csv)?;
        match cost_csv {
            None => Self::from_coordinates(stops, DETOUR_FACTOR),
            Some(path) => {
                let pos: BTreeMap<StopId, usize> =
                    stops.iter().enumerate().map(|(i, s)| (s.id, i)).collect();
                let n = stops.len();
                let mut cost = vec![vec![f64::NAN; n]; n];
                for (i, row) in cost.iter_mut().enumerate() {
                    row[i] = 0.0;
                }
                let mut rdr = csv::Reader::from_path(path)?;
                for (row, rec) in rdr.deserialize::<CostRow>().enumerate() {
                    let rec = rec?;
                    let schema = |msg: String| Error::Schema {
                        path: path.to_path_buf(),
                        row: row + 2,
                        msg,
                    };
                    let a = *pos.get(&rec.from_stop).ok_or_else(|| schema(format!("unknown stop {}", rec.from_stop)))?;
                    let b = *pos.get(&rec.to_stop).ok_or_else(|| schema(format!("unknown stop {}", rec.to_stop)))?;
                    cost[a][b] = rec.cost_km;
                }
                if cost.iter().flatten().any(|c| c.is_nan()) {
                    return Err(Error::InvalidNetwork(format!("{}: cost matrix is incomplete", path.display())));
                }
                Self::from_cost_matrix(stops, cost)
            }
        }
    }

    pub fn write_stops_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        for s in &self.stops {
            w.serialize(s)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Deserialize)]
struct CostRow {
    from_stop: StopId,
    to_stop: StopId,
    cost_km: f64,
}

#[derive(Deserialize)]
struct StopRow {
    stop_id: StopId,
    #[serde(default)]
    name: String,
    x_km: f64,
    y_km: f64,
}

pub fn read_stops_csv(path: &Path) -> Result<Vec<Stop>> {
    let mut rdr = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (row, rec) in rdr.deserialize::<StopRow>().enumerate() {
        let r = rec.map_err(|e| Error::Schema {
            path: path.to_path_buf(),
            row: row + 2,
            msg: e.to_string(),
        })?;
        out.push(Stop {
            id: r.stop_id,
            name: r.name,
            x_km: r.x_km,
            y_km: r.y_km,
        });
    }
    Ok(out)
}

#[allow(clippy::needless_range_loop)]
fn check_triangle(name: &str, m: &[Vec<f64>]) -> Result<()> {
    let n = m.len();
    for k in 0..n {
        for i in 0..n {
            let ik = m[i][k];
            for j in 0..n {
                if m[i][j] > ik + m[k][j] + TRIANGLE_SLACK {
                    return Err(Error::InvalidNetwork(format!(
                        "{name} violates the triangle inequality on ({i},{k},{j})"
                    )));
                }
            }
        }
    }
    Ok(())
}

/// Stops uniform in `[0, extent_km]^2` with ids `1..=n_stops`, plus the depot
/// (id 0) at their centroid.
pub fn build_synthetic_network(n_stops: usize, extent_km: f64, seed: u64) -> Result<StopNetwork> {
    if n_stops < 2 {
        return Err(Error::InvalidNetwork("need at least two stops".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stops: Vec<Stop> = (1..=n_stops)
        .map(|i| Stop {
            id: i as StopId,
            name: format!("stop {i}"),
            x_km: rng.random_range(0.0..extent_km),
            y_km: rng.random_range(0.0..extent_km),
        })
        .collect();
    let cx = stops.iter().map(|s| s.x_km).sum::<f64>() / n_stops as f64;
    let cy = stops.iter().map(|s| s.y_km).sum::<f64>() / n_stops as f64;
    stops.insert(
        0,
        Stop {
            id: DEPOT,
            name: "depot".into(),
            x_km: cx,
            y_km: cy,
        },
    );
    StopNetwork::from_coordinates(stops, DETOUR_FACTOR)
}
