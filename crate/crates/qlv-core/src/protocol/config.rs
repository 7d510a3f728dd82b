//! Scenario configuration: geometry, resource counts, decoherence model,
//! device behavior and verification thresholds. The JSON form mirrors the
//! struct field-for-field; unknown keys are rejected.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::channels::ChannelSpec;
use crate::error::{QlvError, Result};

use super::geometry::{Geometry, StationId};

/// Fidelity ceiling of an optimal bipartite cloning machine; the challenge
/// carriers are Bell pairs, so this bound feeds the derived error threshold.
pub const BIPARTITE_CLONING_BOUND: f64 = 0.7;

/// Fidelity ceiling of an optimal tripartite cloning machine.
pub const TRIPARTITE_CLONING_BOUND: f64 = 0.6;

/// What the device actually does during the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DeviceBehavior {
    /// Sits at the claimed position and decodes faithfully.
    Honest,
    /// Sits somewhere else; messages travel to (and replies from) the true
    /// position.
    Displaced {
        #[serde(rename = "actualPosition")]
        actual_position: [f64; 2],
    },
    /// Sits at the claimed position but decodes cloned copies whose fidelity
    /// is capped at `cloneFidelity`.
    Cloner {
        #[serde(rename = "cloneFidelity")]
        clone_fidelity: f64,
    },
}

/// Full description of one protocol run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub geometry: Geometry,
    /// Number of Alice-device pairs shared up front.
    #[serde(rename = "L")]
    pub pair_count: usize,
    /// Challenge length in bits (two bits per Bell state).
    #[serde(rename = "K")]
    pub challenge_bits: usize,
    /// Decoherence family applied to stored pairs. Its decoherence parameter
    /// is derived per decode from the storage rates and storage age, so the
    /// spec's own `p` (or `t`) field is ignored here.
    #[serde(rename = "decoherenceChannel")]
    pub decoherence_channel: ChannelSpec,
    /// Memory decoherence rate per station, in inverse seconds. Missing
    /// stations default to 0.
    #[serde(rename = "storageRates", default)]
    pub storage_rates: BTreeMap<StationId, f64>,
    #[serde(rename = "deviceBehavior")]
    pub device_behavior: DeviceBehavior,
    /// Maximum tolerated round-trip timing residual, in seconds.
    #[serde(rename = "timingTolerance")]
    pub timing_tolerance: f64,
    /// Maximum accepted dibit error rate. When absent, the midpoint between
    /// the honest expected error and the bipartite cloning-bound error is
    /// used.
    #[serde(rename = "errorRateThreshold", default)]
    pub error_rate_threshold: Option<f64>,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        let legs = self.geometry.partners().len();
        let share = 2 * legs; // Omega splits across legs, half kept back
        if self.pair_count < share || self.pair_count % share != 0 {
            return Err(QlvError::Config(format!(
                "L must be a positive multiple of {share} for {legs}-leg geometry, got {}",
                self.pair_count
            )));
        }
        if self.challenge_bits == 0 || self.challenge_bits % 2 != 0 {
            return Err(QlvError::Config(format!(
                "K must be a positive even bit count, got {}",
                self.challenge_bits
            )));
        }
        if legs == 2 && self.challenge_bits % 4 != 0 {
            return Err(QlvError::Config(format!(
                "K must be a multiple of 4 in two dimensions (one dibit per leg \
                 per instance), got {}",
                self.challenge_bits
            )));
        }
        if self.challenge_bits >= self.pair_count {
            return Err(QlvError::Config(format!(
                "K must be smaller than L, got K={} L={}",
                self.challenge_bits, self.pair_count
            )));
        }
        let dibits_per_leg = self.challenge_bits / 2 / legs;
        if dibits_per_leg > self.pair_count / share {
            return Err(QlvError::Config(format!(
                "not enough pairs per leg: {dibits_per_leg} dibits need at most {} pairs",
                self.pair_count / share
            )));
        }
        self.decoherence_channel.validate().map_err(|e| {
            QlvError::Config(format!("decoherenceChannel: {e}"))
        })?;
        for (station, rate) in &self.storage_rates {
            if !rate.is_finite() || *rate < 0.0 {
                return Err(QlvError::Config(format!(
                    "storageRates.{} must be a nonnegative rate, got {rate}",
                    station.name()
                )));
            }
        }
        if !self.timing_tolerance.is_finite() || self.timing_tolerance <= 0.0 {
            return Err(QlvError::Config(format!(
                "timingTolerance must be positive, got {}",
                self.timing_tolerance
            )));
        }
        if let Some(th) = self.error_rate_threshold {
            if !(0.0..=1.0).contains(&th) {
                return Err(QlvError::Config(format!(
                    "errorRateThreshold must lie in [0, 1], got {th}"
                )));
            }
        }
        match &self.device_behavior {
            DeviceBehavior::Honest => {}
            DeviceBehavior::Displaced { actual_position } => {
                if !actual_position.iter().all(|x| x.is_finite()) {
                    return Err(QlvError::Config(
                        "deviceBehavior.actualPosition must be finite".into(),
                    ));
                }
            }
            DeviceBehavior::Cloner { clone_fidelity } => {
                if !(0.0..=1.0).contains(clone_fidelity) {
                    return Err(QlvError::Config(format!(
                        "deviceBehavior.cloneFidelity must lie in [0, 1], got {clone_fidelity}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Storage rate of one party's quantum memory.
    pub fn storage_rate(&self, station: StationId) -> f64 {
        self.storage_rates.get(&station).copied().unwrap_or(0.0)
    }

    /// Where the device really is.
    pub fn true_device_position(&self) -> [f64; 2] {
        match &self.device_behavior {
            DeviceBehavior::Displaced { actual_position } => *actual_position,
            _ => self.geometry.device,
        }
    }
}
