//! Station/device geometry and light-travel-time arithmetic.

use serde::{Deserialize, Serialize};

use crate::error::{QlvError, Result};

/// Speed of light in meters per second.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Reference stations. Alice always initiates; Bob is the 1D partner and Dan
/// joins for two-dimensional verification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StationId {
    Alice,
    Bob,
    Dan,
}

impl StationId {
    pub fn name(&self) -> &'static str {
        match self {
            StationId::Alice => "alice",
            StationId::Bob => "bob",
            StationId::Dan => "dan",
        }
    }
}

/// A station and its publicly known position in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StationSite {
    pub id: StationId,
    pub position: [f64; 2],
}

/// Euclidean distance in meters.
pub fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Light travel time between two points, in seconds.
pub fn travel_time(a: [f64; 2], b: [f64; 2]) -> f64 {
    distance(a, b) / SPEED_OF_LIGHT
}

/// Stations, the device's claimed position, and the verification dimension.
///
/// In one dimension the claimed position must sit on the Alice-Bob segment
/// so that `tau_AC + tau_BC = tau_AB`; two-dimensional verification requires
/// at least three stations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Geometry {
    pub dimension: u8,
    pub stations: Vec<StationSite>,
    /// Claimed device position (x_v, y_v) in meters.
    pub device: [f64; 2],
}

impl Geometry {
    pub fn validate(&self) -> Result<()> {
        for site in &self.stations {
            if !site.position.iter().all(|x| x.is_finite()) {
                return Err(QlvError::Config(format!(
                    "station {} has a non-finite position",
                    site.id.name()
                )));
            }
        }
        if !self.device.iter().all(|x| x.is_finite()) {
            return Err(QlvError::Config("device position must be finite".into()));
        }
        for (i, a) in self.stations.iter().enumerate() {
            for b in &self.stations[i + 1..] {
                if a.id == b.id {
                    return Err(QlvError::Config(format!(
                        "duplicate station id {}",
                        a.id.name()
                    )));
                }
            }
        }
        match self.dimension {
            1 => {
                if self.partners() != vec![StationId::Bob] {
                    return Err(QlvError::Config(
                        "1D geometry requires exactly the stations alice and bob".into(),
                    ));
                }
                let a = self.station_position(StationId::Alice)?;
                let b = self.station_position(StationId::Bob)?;
                let ab = distance(a, b);
                if ab == 0.0 {
                    return Err(QlvError::Config(
                        "alice and bob must be at distinct positions".into(),
                    ));
                }
                let ac = distance(a, self.device);
                let bc = distance(b, self.device);
                if (ac + bc - ab).abs() > 1e-12 * ab {
                    return Err(QlvError::Config(format!(
                        "1D constraint violated: tau_AC + tau_BC != tau_AB \
                         (|AC|+|BC|-|AB| = {:.3e} m)",
                        ac + bc - ab
                    )));
                }
                Ok(())
            }
            2 => {
                if self.stations.len() < 3 {
                    return Err(QlvError::Config(format!(
                        "2D verification requires at least 3 stations, got {}",
                        self.stations.len()
                    )));
                }
                self.station_position(StationId::Alice)?;
                self.station_position(StationId::Bob)?;
                self.station_position(StationId::Dan)?;
                Ok(())
            }
            d => Err(QlvError::Config(format!(
                "dimension must be 1 or 2, got {d}"
            ))),
        }
    }

    pub fn station_position(&self, id: StationId) -> Result<[f64; 2]> {
        self.stations
            .iter()
            .find(|s| s.id == id)
            .map(|s| s.position)
            .ok_or_else(|| QlvError::Config(format!("station {} not in geometry", id.name())))
    }

    /// Light travel time from a station to the claimed device position.
    pub fn tau_to_claimed(&self, id: StationId) -> Result<f64> {
        Ok(travel_time(self.station_position(id)?, self.device))
    }

    /// The non-Alice stations, in fixed (Bob, Dan) order.
    pub fn partners(&self) -> Vec<StationId> {
        let mut out = Vec::new();
        for id in [StationId::Bob, StationId::Dan] {
            if self.stations.iter().any(|s| s.id == id) {
                out.push(id);
            }
        }
        out
    }
}
