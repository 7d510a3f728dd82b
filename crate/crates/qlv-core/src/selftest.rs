//! The release-gate invariant suite: oracle equivalences, channel sanity
//! checks and the exhaustive Pauli-frame check, grouped for the CLI's
//! `selftest` command and reused by the acceptance tests.

use crate::analysis;
use crate::channels::{
    apply_per_qubit, closed_form_amplitude_damped, closed_form_depolarized,
    closed_form_general_z, closed_form_phase_damped, fidelity, fidelity_amplitude_damped,
    fidelity_depolarized, fidelity_phase_damped, kraus_for, p_from_rate, ChannelSpec,
};
use crate::linalg::min_eigenvalue;
use crate::protocol::frame_pipeline_decode;
use crate::states::{cat_density, ghz_state};

/// Outcome of one invariant group.
#[derive(Debug, Clone)]
pub struct GroupResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl GroupResult {
    fn from_check(name: &'static str, check: Result<(), String>) -> Self {
        match check {
            Ok(()) => GroupResult {
                name,
                passed: true,
                detail: String::new(),
            },
            Err(detail) => GroupResult {
                name,
                passed: false,
                detail,
            },
        }
    }
}

fn grid_21() -> Vec<f64> {
    analysis::linspace(0.0, 1.0, 21)
}

/// Every catalog Kraus set satisfies the completeness relation to 1e-10.
pub fn check_kraus_completeness() -> Result<(), String> {
    for p in grid_21() {
        let mut specs = vec![
            ChannelSpec::Depolarization { p },
            ChannelSpec::AmplitudeDamping { p },
            ChannelSpec::PhaseDamping { p },
            ChannelSpec::BitFlip { p },
            ChannelSpec::PhaseFlip { p },
            ChannelSpec::BitPhaseFlip { p },
        ];
        for eps1 in [0.0, 0.1, 0.3] {
            specs.push(ChannelSpec::CombinedDampingRandom {
                p,
                eps3: eps1 / 2.0,
                eps4: eps1 / 2.0,
            });
        }
        for spec in specs {
            let set = kraus_for(&spec).map_err(|e| e.to_string())?;
            let defect = set.completeness_defect();
            if defect > 1e-10 {
                return Err(format!(
                    "{} at p={p}: completeness defect {defect:.3e}",
                    spec.family_name()
                ));
            }
        }
    }
    Ok(())
}

/// Closed-form damping operators match per-qubit Kraus application entrywise
/// to 1e-10 for N in 1..=8 over a 21-point grid.
pub fn check_oracle_equivalence() -> Result<(), String> {
    for n in 1..=8usize {
        let cat = cat_density(n).map_err(|e| e.to_string())?;
        for p in grid_21() {
            let cases = [
                (
                    closed_form_depolarized(n, p),
                    ChannelSpec::Depolarization { p },
                ),
                (
                    closed_form_amplitude_damped(n, p),
                    ChannelSpec::AmplitudeDamping { p },
                ),
                (
                    closed_form_phase_damped(n, p),
                    ChannelSpec::PhaseDamping { p },
                ),
            ];
            for (closed, spec) in cases {
                let closed = closed.map_err(|e| e.to_string())?;
                let set = kraus_for(&spec).map_err(|e| e.to_string())?;
                let kraus = apply_per_qubit(&cat, &set).map_err(|e| e.to_string())?;
                let diff = closed.matrix().max_abs_diff(kraus.matrix());
                if diff > 1e-10 {
                    return Err(format!(
                        "{} N={n} p={p}: closed-form vs Kraus diff {diff:.3e}",
                        spec.family_name()
                    ));
                }
            }
        }
    }
    Ok(())
}

/// The general sigma_z-rotation model reduces to amplitude damping
/// (mu=1, gamma2=gamma1/2, omega=0) and phase damping (gamma1=omega=0) to
/// 1e-10 over a 5 x 21 parameter grid.
pub fn check_general_z_reductions() -> Result<(), String> {
    let times: Vec<f64> = (0..21).map(|i| i as f64 * 0.15).collect();
    for &n in &[1usize, 2, 3, 4, 6] {
        for &t in &times {
            let p = p_from_rate(1.0, t);
            let z_ad = closed_form_general_z(n, 1.0, 0.5, 1.0, 0.0, t)
                .map_err(|e| e.to_string())?;
            let ad = closed_form_amplitude_damped(n, p).map_err(|e| e.to_string())?;
            let diff = z_ad.rho.matrix().max_abs_diff(ad.matrix());
            if diff > 1e-10 {
                return Err(format!(
                    "amplitude-damping reduction N={n} t={t}: diff {diff:.3e}"
                ));
            }
            let z_pd = closed_form_general_z(n, 0.0, 1.0, 0.0, 0.0, t)
                .map_err(|e| e.to_string())?;
            let pd = closed_form_phase_damped(n, p).map_err(|e| e.to_string())?;
            let diff = z_pd.rho.matrix().max_abs_diff(pd.matrix());
            if diff > 1e-10 {
                return Err(format!(
                    "phase-damping reduction N={n} t={t}: diff {diff:.3e}"
                ));
            }
        }
    }
    Ok(())
}

/// Every channel output over the grid keeps unit trace and stays positive
/// semidefinite up to -1e-8.
pub fn check_trace_and_positivity() -> Result<(), String> {
    for n in 1..=8usize {
        let cat = cat_density(n).map_err(|e| e.to_string())?;
        for p in grid_21() {
            for spec in [
                ChannelSpec::Depolarization { p },
                ChannelSpec::AmplitudeDamping { p },
                ChannelSpec::PhaseDamping { p },
                ChannelSpec::BitFlip { p },
                ChannelSpec::PhaseFlip { p },
                ChannelSpec::BitPhaseFlip { p },
                ChannelSpec::CombinedDampingRandom {
                    p,
                    eps3: 0.05,
                    eps4: 0.05,
                },
            ] {
                let set = kraus_for(&spec).map_err(|e| e.to_string())?;
                let out = apply_per_qubit(&cat, &set).map_err(|e| e.to_string())?;
                let trace = out.matrix().trace();
                if (trace.re - 1.0).abs() > 1e-10 || trace.im.abs() > 1e-10 {
                    return Err(format!(
                        "{} N={n} p={p}: trace {trace}",
                        spec.family_name()
                    ));
                }
                let min = min_eigenvalue(out.matrix()).map_err(|e| e.to_string())?;
                if min < -1e-8 {
                    return Err(format!(
                        "{} N={n} p={p}: min eigenvalue {min:.3e}",
                        spec.family_name()
                    ));
                }
            }
        }
    }
    Ok(())
}

/// The scalar fidelity forms match the matrix fidelity to 1e-10 on the grid.
pub fn check_scalar_fidelity_forms() -> Result<(), String> {
    for n in 1..=8usize {
        let cat = cat_density(n).map_err(|e| e.to_string())?;
        for p in grid_21() {
            let cases = [
                (
                    fidelity_depolarized(n, p),
                    closed_form_depolarized(n, p),
                    "depolarization",
                ),
                (
                    fidelity_amplitude_damped(n, p),
                    closed_form_amplitude_damped(n, p),
                    "amplitudeDamping",
                ),
                (
                    fidelity_phase_damped(n, p),
                    closed_form_phase_damped(n, p),
                    "phaseDamping",
                ),
            ];
            for (scalar, rho, name) in cases {
                let rho = rho.map_err(|e| e.to_string())?;
                let matrix = fidelity(&cat, &rho).map_err(|e| e.to_string())?;
                if (scalar - matrix).abs() > 1e-10 {
                    return Err(format!(
                        "{name} N={n} p={p}: scalar {scalar} vs matrix {matrix}"
                    ));
                }
            }
        }
    }
    Ok(())
}

/// The 2^N GHZ basis states form an orthonormal basis for N in 2..=6.
pub fn check_states_orthonormality() -> Result<(), String> {
    for n in 2..=6usize {
        let dim = 1usize << n;
        for i in 0..dim {
            let a = ghz_state(n, i).map_err(|e| e.to_string())?;
            for j in i..dim {
                let b = ghz_state(n, j).map_err(|e| e.to_string())?;
                let ip = a.inner(&b).map_err(|e| e.to_string())?.norm();
                let expected = if i == j { 1.0 } else { 0.0 };
                if (ip - expected).abs() > 1e-10 {
                    return Err(format!("N={n}: |<{i}|{j}>| = {ip}"));
                }
            }
        }
    }
    Ok(())
}

/// All 64 Pauli-frame compositions decode to the identity transformation.
pub fn check_pauli_frames() -> Result<(), String> {
    for encoded in 0..4u8 {
        for swap in 0..4u8 {
            for alice in 0..4u8 {
                for partner in 0..4u8 {
                    let decoded = frame_pipeline_decode(encoded, swap, alice, partner);
                    if decoded != encoded {
                        return Err(format!(
                            "frames ({swap},{alice},{partner}) decoded {encoded} as {decoded}"
                        ));
                    }
                }
            }
        }
    }
    Ok(())
}

/// Runs every invariant group and reports per-group pass/fail.
pub fn run_selftest() -> Vec<GroupResult> {
    vec![
        GroupResult::from_check("kraus-completeness", check_kraus_completeness()),
        GroupResult::from_check("oracle-equivalence", check_oracle_equivalence()),
        GroupResult::from_check("general-z-reductions", check_general_z_reductions()),
        GroupResult::from_check("trace-and-positivity", check_trace_and_positivity()),
        GroupResult::from_check("scalar-fidelity-forms", check_scalar_fidelity_forms()),
        GroupResult::from_check("states-orthonormality", check_states_orthonormality()),
        GroupResult::from_check("pauli-frames", check_pauli_frames()),
    ]
}
