//! Fidelity-vs-decoherence curves, verification-instance probabilities,
//! k-of-m decode probabilities, cloning-attack pass probabilities and the
//! Bell-vs-GHZ strategy comparison, plus their CSV serialization.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::{self, ChannelSpec};
use crate::error::{QlvError, Result};
use crate::noise::{self, RandomChannelSpec, WeightMode};

/// Default curve grid: 101 points over the high-fidelity region [0, 0.5].
pub fn default_p_grid() -> Vec<f64> {
    linspace(0.0, 0.5, 101)
}

/// Evenly spaced grid with `points` samples from `start` to `end` inclusive.
pub fn linspace(start: f64, end: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![start];
    }
    (0..points)
        .map(|i| start + (end - start) * i as f64 / (points - 1) as f64)
        .collect()
}

fn default_trials() -> u64 {
    10_000
}

/// A channel family for curve generation: the decoherence parameter comes
/// from the grid, everything else from this description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", deny_unknown_fields)]
pub enum CurveChannel {
    #[serde(rename = "depolarization")]
    Depolarization,
    #[serde(rename = "amplitudeDamping")]
    AmplitudeDamping,
    #[serde(rename = "phaseDamping")]
    PhaseDamping,
    #[serde(rename = "bitFlip")]
    BitFlip,
    #[serde(rename = "phaseFlip")]
    PhaseFlip,
    #[serde(rename = "bitPhaseFlip")]
    BitPhaseFlip,
    #[serde(rename = "combinedDampingRandom")]
    CombinedDampingRandom { eps3: f64, eps4: f64 },
    #[serde(rename = "randomNoise")]
    RandomNoise {
        #[serde(default, rename = "weightMode")]
        weight_mode: WeightMode,
        #[serde(default = "default_trials")]
        trials: u64,
        #[serde(default)]
        seed: u64,
    },
}

impl CurveChannel {
    pub fn family_name(&self) -> &'static str {
        match self {
            CurveChannel::Depolarization => "depolarization",
            CurveChannel::AmplitudeDamping => "amplitudeDamping",
            CurveChannel::PhaseDamping => "phaseDamping",
            CurveChannel::BitFlip => "bitFlip",
            CurveChannel::PhaseFlip => "phaseFlip",
            CurveChannel::BitPhaseFlip => "bitPhaseFlip",
            CurveChannel::CombinedDampingRandom { .. } => "combinedDampingRandom",
            CurveChannel::RandomNoise { .. } => "randomNoise",
        }
    }

    /// Compact parameter string for CSV output ("-" when parameterless).
    pub fn params_string(&self, seed_override: Option<u64>) -> String {
        match self {
            CurveChannel::CombinedDampingRandom { eps3, eps4 } => {
                format!("eps3={eps3};eps4={eps4}")
            }
            CurveChannel::RandomNoise {
                weight_mode,
                trials,
                seed,
            } => {
                let seed = seed_override.unwrap_or(*seed);
                let mode = match weight_mode {
                    WeightMode::UniformSplit => "uniformSplit",
                    WeightMode::RandomSimplex => "randomSimplex",
                };
                format!("weights={mode};trials={trials};seed={seed}")
            }
            _ => "-".to_string(),
        }
    }

    fn catalog_spec(&self, p: f64) -> Option<ChannelSpec> {
        let spec = match self {
            CurveChannel::Depolarization => ChannelSpec::Depolarization { p },
            CurveChannel::AmplitudeDamping => ChannelSpec::AmplitudeDamping { p },
            CurveChannel::PhaseDamping => ChannelSpec::PhaseDamping { p },
            CurveChannel::BitFlip => ChannelSpec::BitFlip { p },
            CurveChannel::PhaseFlip => ChannelSpec::PhaseFlip { p },
            CurveChannel::BitPhaseFlip => ChannelSpec::BitPhaseFlip { p },
            CurveChannel::CombinedDampingRandom { eps3, eps4 } => {
                ChannelSpec::CombinedDampingRandom {
                    p,
                    eps3: *eps3,
                    eps4: *eps4,
                }
            }
            CurveChannel::RandomNoise { .. } => return None,
        };
        Some(spec)
    }

    /// Mean fidelity (and standard error, zero for deterministic families) of
    /// the N-qubit cat state at decoherence parameter `p`.
    pub fn evaluate(&self, n: usize, p: f64, seed_override: Option<u64>) -> Result<(f64, f64)> {
        match self.catalog_spec(p) {
            Some(spec) => Ok((channels::cat_fidelity_after(&spec, n)?, 0.0)),
            None => {
                let CurveChannel::RandomNoise {
                    weight_mode,
                    trials,
                    seed,
                } = self
                else {
                    unreachable!("catalog_spec covers every other variant");
                };
                let spec = RandomChannelSpec::new(
                    p,
                    *weight_mode,
                    seed_override.unwrap_or(*seed),
                    *trials,
                )?;
                let out = noise::mean_fidelity_random_channel(n, &spec)?;
                Ok((out.mean, out.stderr))
            }
        }
    }
}

/// One sampled point of a fidelity curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub p: f64,
    pub mean_fidelity: f64,
    pub stderr: f64,
}

/// Sampled map from decoherence parameter to mean cat-state fidelity.
#[derive(Debug, Clone, PartialEq)]
pub struct FidelityCurve {
    pub channel: CurveChannel,
    pub num_qubits: usize,
    pub points: Vec<CurvePoint>,
}

impl FidelityCurve {
    fn validate(&self) -> Result<()> {
        for pair in self.points.windows(2) {
            if pair[1].p <= pair[0].p {
                return Err(QlvError::Validation(format!(
                    "curve grid must be strictly ascending, got {} after {}",
                    pair[1].p, pair[0].p
                )));
            }
        }
        for pt in &self.points {
            if !(0.0..=1.0).contains(&pt.mean_fidelity) {
                return Err(QlvError::Validation(format!(
                    "mean fidelity {} out of [0, 1] at p={}",
                    pt.mean_fidelity, pt.p
                )));
            }
        }
        Ok(())
    }
}

/// Computes a fidelity curve over `p_grid`. Deterministic (stderr = 0) for
/// catalog channels, Monte Carlo for random-noise channels. Grid points are
/// independent and evaluated in parallel.
pub fn fidelity_curve(
    n: usize,
    channel: &CurveChannel,
    p_grid: &[f64],
    seed_override: Option<u64>,
) -> Result<FidelityCurve> {
    if p_grid.is_empty() {
        return Err(QlvError::Config("curve grid must be nonempty".into()));
    }
    let points: Vec<CurvePoint> = p_grid
        .par_iter()
        .map(|&p| {
            let (mean_fidelity, stderr) = channel.evaluate(n, p, seed_override)?;
            Ok(CurvePoint {
                p,
                mean_fidelity,
                stderr,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let curve = FidelityCurve {
        channel: channel.clone(),
        num_qubits: n,
        points,
    };
    curve.validate()?;
    Ok(curve)
}

/// Which entanglement resource carries one instance of location verification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Strategy {
    /// `ceil(numStations / 2)` Bell states per instance.
    #[serde(rename = "bellStates")]
    BellStates,
    /// One GHZ state with as many qubits as stations.
    #[serde(rename = "ghzState")]
    GhzState,
}

/// Inputs for a verification-instance probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerificationModel {
    pub num_stations: usize,
    pub strategy: Strategy,
    pub per_state_fidelity: f64,
}

/// Probability of a single verification instance succeeding: all required
/// state decodes must succeed, i.e. `F^(ceil(N/2))` for Bell states and `F`
/// itself for one GHZ state.
pub fn instance_probability(model: &VerificationModel) -> Result<f64> {
    if model.num_stations == 0 {
        return Err(QlvError::Domain("station count must be positive".into()));
    }
    if !(0.0..=1.0).contains(&model.per_state_fidelity) {
        return Err(QlvError::Domain(format!(
            "per-state fidelity must lie in [0, 1], got {}",
            model.per_state_fidelity
        )));
    }
    Ok(match model.strategy {
        Strategy::BellStates => {
            let states = model.num_stations.div_ceil(2);
            model.per_state_fidelity.powi(states as i32)
        }
        Strategy::GhzState => model.per_state_fidelity,
    })
}

/// Binomial tail: probability that at least `k` of `m` independent decodes
/// succeed when each succeeds with probability `f`.
pub fn at_least_k_of_m(k: usize, m: usize, f: f64) -> Result<f64> {
    if k > m {
        return Err(QlvError::Domain(format!("need k <= m, got k={k}, m={m}")));
    }
    if !(0.0..=1.0).contains(&f) {
        return Err(QlvError::Domain(format!(
            "success probability must lie in [0, 1], got {f}"
        )));
    }
    let q = 1.0 - f;
    let mut total = 0.0;
    let mut binom = 1.0f64; // C(m, 0)
    for j in 0..=m {
        if j >= k {
            total += binom * f.powi(j as i32) * q.powi((m - j) as i32);
        }
        binom = binom * (m - j) as f64 / (j + 1) as f64;
    }
    Ok(total.min(1.0))
}

/// Probability (and its base-10 logarithm) that an optimal-cloning adversary
/// passes all `l` decodes at clone fidelity `f_clone`. Computed in log space
/// so large `l` does not underflow the exponent arithmetic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CloningPass {
    pub probability: f64,
    pub log10_probability: f64,
}

pub fn cloning_pass_probability(f_clone: f64, l: usize) -> Result<CloningPass> {
    if l == 0 {
        return Err(QlvError::Domain("cloning pass needs l >= 1".into()));
    }
    if !(0.0..=1.0).contains(&f_clone) {
        return Err(QlvError::Domain(format!(
            "clone fidelity must lie in [0, 1], got {f_clone}"
        )));
    }
    let log10 = l as f64 * f_clone.log10();
    Ok(CloningPass {
        probability: 10f64.powf(log10),
        log10_probability: log10,
    })
}

/// One grid point of a Bell-vs-GHZ comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StrategyRow {
    pub p: f64,
    /// Bell-state fidelity (N = 2) under the channel.
    pub f_bell: f64,
    /// N-qubit GHZ fidelity under the channel.
    pub f_ghz: f64,
    /// All-success instance probability `f_bell^(ceil(N/2))`.
    pub instance_prob_bell: f64,
    /// GHZ instance probability, `f_ghz` itself.
    pub instance_prob_ghz: f64,
    /// `instance_prob_bell - instance_prob_ghz`.
    pub difference: f64,
    /// Relaxed Bell decode probability: at least k-of-m with
    /// `m = ceil(N/2)` states and `k = m - 1` (all-success when m = 1).
    pub at_least_k_of_m_bell: f64,
}

/// Comparison of the two strategies for `num_stations` reference stations.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyComparison {
    pub num_stations: usize,
    pub rows: Vec<StrategyRow>,
    /// First grid p at which the Bell strategy's instance probability
    /// overtakes the GHZ strategy's, if any.
    pub crossover_p: Option<f64>,
}

/// Per grid point, reports Bell and GHZ fidelities, the instance
/// probabilities of both strategies, their difference and the k-of-m
/// relaxation, flagging where Bell overtakes GHZ.
pub fn strategy_comparison(
    num_stations: usize,
    channel: &CurveChannel,
    p_grid: &[f64],
    seed_override: Option<u64>,
) -> Result<StrategyComparison> {
    if num_stations < 3 {
        return Err(QlvError::Domain(format!(
            "strategy comparison needs at least 3 stations, got {num_stations}"
        )));
    }
    let bell_curve = fidelity_curve(2, channel, p_grid, seed_override)?;
    let ghz_curve = fidelity_curve(num_stations, channel, p_grid, seed_override)?;
    let m = num_stations.div_ceil(2);
    let k = m.saturating_sub(1).max(1);
    let rows = bell_curve
        .points
        .iter()
        .zip(&ghz_curve.points)
        .map(|(b, g)| {
            let instance_prob_bell = b.mean_fidelity.powi(m as i32);
            let instance_prob_ghz = g.mean_fidelity;
            Ok(StrategyRow {
                p: b.p,
                f_bell: b.mean_fidelity,
                f_ghz: g.mean_fidelity,
                instance_prob_bell,
                instance_prob_ghz,
                difference: instance_prob_bell - instance_prob_ghz,
                at_least_k_of_m_bell: at_least_k_of_m(k, m, b.mean_fidelity)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let crossover_p = rows
        .iter()
        .find(|r| r.instance_prob_bell > r.instance_prob_ghz)
        .map(|r| r.p);
    Ok(StrategyComparison {
        num_stations,
        rows,
        crossover_p,
    })
}

/// Formats a float with 17 significant digits, enough to round-trip any f64.
pub fn fmt_full(x: f64) -> String {
    format!("{x:.16e}")
}

/// CSV header for curve output.
pub const CURVES_CSV_HEADER: &str =
    "channel,family_params,N,p,mean_fidelity,stderr,instance_prob_bell,instance_prob_ghz";

/// Renders fidelity curves as CSV, one row per (channel, N, p).
///
/// `instance_prob_bell` uses the Bell (N = 2) fidelity of the same channel
/// raised to `ceil(N/2)`; `instance_prob_ghz` is the row's own mean fidelity.
pub fn curves_to_csv(
    channels: &[CurveChannel],
    num_qubits: &[usize],
    p_grid: &[f64],
    seed_override: Option<u64>,
) -> Result<String> {
    let mut out = String::from(CURVES_CSV_HEADER);
    out.push('\n');
    for channel in channels {
        let bell = fidelity_curve(2, channel, p_grid, seed_override)?;
        for &n in num_qubits {
            let curve = if n == 2 {
                bell.clone()
            } else {
                fidelity_curve(n, channel, p_grid, seed_override)?
            };
            let states = n.div_ceil(2) as i32;
            let params = channel.params_string(seed_override);
            for (point, bell_point) in curve.points.iter().zip(&bell.points) {
                let instance_bell = bell_point.mean_fidelity.powi(states);
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    channel.family_name(),
                    params,
                    n,
                    fmt_full(point.p),
                    fmt_full(point.mean_fidelity),
                    fmt_full(point.stderr),
                    fmt_full(instance_bell),
                    fmt_full(point.mean_fidelity),
                ));
            }
        }
    }
    Ok(out)
}

/// CSV header for strategy-comparison output.
pub const COMPARE_CSV_HEADER: &str = "channel,family_params,N,p,f_bell,f_ghz,\
instance_prob_bell,instance_prob_ghz,difference,at_least_k_of_m_bell";

/// Renders strategy comparisons as CSV, one row per (N, p).
pub fn comparison_to_csv(
    channel: &CurveChannel,
    station_counts: &[usize],
    p_grid: &[f64],
    seed_override: Option<u64>,
) -> Result<String> {
    let mut out = String::from(COMPARE_CSV_HEADER);
    out.push('\n');
    for &n in station_counts {
        let cmp = strategy_comparison(n, channel, p_grid, seed_override)?;
        let params = channel.params_string(seed_override);
        for row in &cmp.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                channel.family_name(),
                params,
                n,
                fmt_full(row.p),
                fmt_full(row.f_bell),
                fmt_full(row.f_ghz),
                fmt_full(row.instance_prob_bell),
                fmt_full(row.instance_prob_ghz),
                fmt_full(row.difference),
                fmt_full(row.at_least_k_of_m_bell),
            ));
        }
    }
    Ok(out)
}
