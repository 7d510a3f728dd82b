//! The deterministic channel zoo: Kraus sets for depolarization, amplitude
//! damping, phase damping, the three flip channels and the combined
//! damping+random channel; per-qubit application to N-qubit density
//! operators; closed-form evaluators for the damping families and the general
//! sigma_z-rotation model; and the trace-product fidelity.
//!
//! Each qubit of a multi-qubit state evolves in an equal and independent
//! manner, so the N-qubit channel is the N-fold tensor power of the
//! single-qubit channel.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{QlvError, Result};
use crate::linalg::{pauli, ComplexMatrix, DensityOperator, Tolerances};
use crate::states::cat_density;

/// Completeness tolerance for validated Kraus sets.
pub const KRAUS_COMPLETENESS_TOL: f64 = 1e-10;

/// Upper bound on explicitly enumerated product-operator counts in
/// [`apply_product_kraus`].
pub const PRODUCT_KRAUS_LIMIT: usize = 4096;

/// Converts a decoherence rate and channel time to the decoherence parameter
/// `p = 1 - exp(-gamma * t)`.
pub fn p_from_rate(gamma: f64, t: f64) -> f64 {
    -(-gamma * t).exp_m1()
}

/// An ordered set of single-qubit (2x2) Kraus operators satisfying the
/// completeness relation `sum_a K_a^dagger K_a = I`.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausSet {
    operators: Vec<ComplexMatrix>,
}

impl KrausSet {
    /// Validates operator shapes (2x2, between 1 and 4 of them) and the
    /// completeness relation to `KRAUS_COMPLETENESS_TOL`.
    pub fn new(operators: Vec<ComplexMatrix>) -> Result<Self> {
        if operators.is_empty() || operators.len() > 4 {
            return Err(QlvError::Validation(format!(
                "single-qubit Kraus sets hold 1..=4 operators, got {}",
                operators.len()
            )));
        }
        for op in &operators {
            if op.rows() != 2 || op.cols() != 2 {
                return Err(QlvError::ShapeMismatch(format!(
                    "single-qubit Kraus operators must be 2x2, got {}x{}",
                    op.rows(),
                    op.cols()
                )));
            }
        }
        let set = KrausSet { operators };
        let defect = set.completeness_defect();
        if defect > KRAUS_COMPLETENESS_TOL {
            return Err(QlvError::Validation(format!(
                "Kraus completeness defect {defect:.3e} exceeds {KRAUS_COMPLETENESS_TOL:.1e}"
            )));
        }
        Ok(set)
    }

    pub fn operators(&self) -> &[ComplexMatrix] {
        &self.operators
    }

    pub fn len(&self) -> usize {
        self.operators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.operators.is_empty()
    }

    /// Max entrywise deviation of `sum K^dagger K` from the identity.
    pub fn completeness_defect(&self) -> f64 {
        let mut sum = ComplexMatrix::zeros(2, 2);
        for op in &self.operators {
            let term = op.dagger().matmul(op).expect("2x2 product");
            sum = sum.add(&term).expect("2x2 sum");
        }
        sum.max_abs_diff(&ComplexMatrix::identity(2))
    }
}

/// Named channel family plus its parameters. `p` runs from 0 (no
/// decoherence) to 1 (complete decoherence) for the damping families; the
/// flip channels follow the opposite convention (`sqrt(p)` multiplies the
/// identity operator), matching their usual Kraus forms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", deny_unknown_fields)]
pub enum ChannelSpec {
    #[serde(rename = "depolarization")]
    Depolarization { p: f64 },
    #[serde(rename = "amplitudeDamping")]
    AmplitudeDamping { p: f64 },
    #[serde(rename = "phaseDamping")]
    PhaseDamping { p: f64 },
    #[serde(rename = "bitFlip")]
    BitFlip { p: f64 },
    #[serde(rename = "phaseFlip")]
    PhaseFlip { p: f64 },
    #[serde(rename = "bitPhaseFlip")]
    BitPhaseFlip { p: f64 },
    /// General sigma_z-rotation model; evaluated in closed form only.
    #[serde(rename = "generalZ")]
    GeneralZ {
        gamma1: f64,
        gamma2: f64,
        mu: f64,
        omega: f64,
        t: f64,
    },
    /// Amplitude damping mixed with a random-unitary component, with mixing
    /// weights `eps1 = eps3 + eps4`. The catalog form fixes `U_3 = I` and
    /// `U_4 = sigma_x`; arbitrary unitaries can be supplied through
    /// [`combined_damping_random_kraus`].
    #[serde(rename = "combinedDampingRandom")]
    CombinedDampingRandom { p: f64, eps3: f64, eps4: f64 },
}

impl ChannelSpec {
    pub fn family_name(&self) -> &'static str {
        match self {
            ChannelSpec::Depolarization { .. } => "depolarization",
            ChannelSpec::AmplitudeDamping { .. } => "amplitudeDamping",
            ChannelSpec::PhaseDamping { .. } => "phaseDamping",
            ChannelSpec::BitFlip { .. } => "bitFlip",
            ChannelSpec::PhaseFlip { .. } => "phaseFlip",
            ChannelSpec::BitPhaseFlip { .. } => "bitPhaseFlip",
            ChannelSpec::GeneralZ { .. } => "generalZ",
            ChannelSpec::CombinedDampingRandom { .. } => "combinedDampingRandom",
        }
    }

    /// The decoherence parameter, when the family has one.
    pub fn p(&self) -> Option<f64> {
        match self {
            ChannelSpec::Depolarization { p }
            | ChannelSpec::AmplitudeDamping { p }
            | ChannelSpec::PhaseDamping { p }
            | ChannelSpec::BitFlip { p }
            | ChannelSpec::PhaseFlip { p }
            | ChannelSpec::BitPhaseFlip { p }
            | ChannelSpec::CombinedDampingRandom { p, .. } => Some(*p),
            ChannelSpec::GeneralZ { .. } => None,
        }
    }

    /// Clone of this spec with the decoherence parameter replaced. Errors for
    /// `generalZ`, which is parametrized by rates and time instead.
    pub fn with_p(&self, p: f64) -> Result<ChannelSpec> {
        let spec = match self {
            ChannelSpec::Depolarization { .. } => ChannelSpec::Depolarization { p },
            ChannelSpec::AmplitudeDamping { .. } => ChannelSpec::AmplitudeDamping { p },
            ChannelSpec::PhaseDamping { .. } => ChannelSpec::PhaseDamping { p },
            ChannelSpec::BitFlip { .. } => ChannelSpec::BitFlip { p },
            ChannelSpec::PhaseFlip { .. } => ChannelSpec::PhaseFlip { p },
            ChannelSpec::BitPhaseFlip { .. } => ChannelSpec::BitPhaseFlip { p },
            ChannelSpec::CombinedDampingRandom { eps3, eps4, .. } => {
                ChannelSpec::CombinedDampingRandom {
                    p,
                    eps3: *eps3,
                    eps4: *eps4,
                }
            }
            ChannelSpec::GeneralZ { .. } => {
                return Err(QlvError::Domain(
                    "generalZ is parametrized by rates and time, not p".into(),
                ))
            }
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let check_p = |p: f64, field: &str| {
            if !(0.0..=1.0).contains(&p) {
                Err(QlvError::Validation(format!(
                    "{field} must lie in [0, 1], got {p}"
                )))
            } else {
                Ok(())
            }
        };
        match self {
            ChannelSpec::Depolarization { p }
            | ChannelSpec::AmplitudeDamping { p }
            | ChannelSpec::PhaseDamping { p }
            | ChannelSpec::BitFlip { p }
            | ChannelSpec::PhaseFlip { p }
            | ChannelSpec::BitPhaseFlip { p } => check_p(*p, "p"),
            ChannelSpec::GeneralZ {
                gamma1,
                gamma2,
                mu,
                omega,
                t,
            } => {
                if *gamma1 < 0.0 || *gamma2 < 0.0 {
                    return Err(QlvError::Validation(format!(
                        "generalZ rates must be nonnegative, got gamma1={gamma1}, gamma2={gamma2}"
                    )));
                }
                if mu.abs() > 1.0 {
                    return Err(QlvError::Validation(format!(
                        "generalZ requires |mu| <= 1, got {mu}"
                    )));
                }
                if !omega.is_finite() || *t < 0.0 {
                    return Err(QlvError::Validation(format!(
                        "generalZ requires finite omega and t >= 0, got omega={omega}, t={t}"
                    )));
                }
                Ok(())
            }
            ChannelSpec::CombinedDampingRandom { p, eps3, eps4 } => {
                check_p(*p, "p")?;
                check_p(*eps3, "eps3")?;
                check_p(*eps4, "eps4")?;
                check_p(eps3 + eps4, "eps1 = eps3 + eps4")
            }
        }
    }
}

/// The Kraus set for a catalog channel family.
///
/// Random-noise channels are sampled in the `noise` module instead, and the
/// generalZ model has no catalog Kraus form (it is evaluated in closed form).
pub fn kraus_for(spec: &ChannelSpec) -> Result<KrausSet> {
    spec.validate()?;
    let re = |x: f64| Complex64::new(x, 0.0);
    match spec {
        ChannelSpec::Depolarization { p } => KrausSet::new(vec![
            pauli::sigma_o().scale(re((1.0 - 3.0 * p / 4.0).sqrt())),
            pauli::sigma_x().scale(re((p / 4.0).sqrt())),
            pauli::sigma_y().scale(re((p / 4.0).sqrt())),
            pauli::sigma_z().scale(re((p / 4.0).sqrt())),
        ]),
        ChannelSpec::AmplitudeDamping { p } => {
            KrausSet::new(amplitude_damping_operators(*p).to_vec())
        }
        ChannelSpec::PhaseDamping { p } => KrausSet::new(vec![
            ComplexMatrix::identity(2).scale(re((1.0 - p).sqrt())),
            ComplexMatrix::from_real(2, 2, &[p.sqrt(), 0.0, 0.0, 0.0])?,
            ComplexMatrix::from_real(2, 2, &[0.0, 0.0, 0.0, p.sqrt()])?,
        ]),
        ChannelSpec::BitFlip { p } => KrausSet::new(vec![
            pauli::sigma_o().scale(re(p.sqrt())),
            pauli::sigma_x().scale(re((1.0 - p).sqrt())),
        ]),
        ChannelSpec::PhaseFlip { p } => KrausSet::new(vec![
            pauli::sigma_o().scale(re(p.sqrt())),
            pauli::sigma_z().scale(re((1.0 - p).sqrt())),
        ]),
        ChannelSpec::BitPhaseFlip { p } => KrausSet::new(vec![
            pauli::sigma_o().scale(re(p.sqrt())),
            pauli::sigma_y().scale(re((1.0 - p).sqrt())),
        ]),
        ChannelSpec::CombinedDampingRandom { p, eps3, eps4 } => {
            combined_damping_random_kraus(*p, *eps3, *eps4, &pauli::sigma_o(), &pauli::sigma_x())
        }
        ChannelSpec::GeneralZ { .. } => Err(QlvError::Validation(
            "generalZ has no catalog Kraus form; use closed_form_general_z".into(),
        )),
    }
}

fn amplitude_damping_operators(p: f64) -> [ComplexMatrix; 2] {
    let k1 = ComplexMatrix::from_real(2, 2, &[1.0, 0.0, 0.0, (1.0 - p).sqrt()])
        .expect("static shape");
    let k2 = ComplexMatrix::from_real(2, 2, &[0.0, p.sqrt(), 0.0, 0.0]).expect("static shape");
    [k1, k2]
}

/// Combined damping+random channel with caller-supplied unitaries `u3`, `u4`:
/// `{sqrt(1-eps1) K1_AD, sqrt(1-eps1) K2_AD, sqrt(eps3) U3, sqrt(eps4) U4}`
/// with `eps1 = eps3 + eps4`.
pub fn combined_damping_random_kraus(
    p: f64,
    eps3: f64,
    eps4: f64,
    u3: &ComplexMatrix,
    u4: &ComplexMatrix,
) -> Result<KrausSet> {
    ChannelSpec::CombinedDampingRandom { p, eps3, eps4 }.validate()?;
    for (name, u) in [("u3", u3), ("u4", u4)] {
        if u.rows() != 2 || u.cols() != 2 {
            return Err(QlvError::ShapeMismatch(format!("{name} must be 2x2")));
        }
        let defect = u
            .matmul(&u.dagger())?
            .max_abs_diff(&ComplexMatrix::identity(2));
        if defect > 1e-10 {
            return Err(QlvError::Validation(format!(
                "{name} is not unitary (defect {defect:.3e})"
            )));
        }
    }
    let eps1 = eps3 + eps4;
    let re = |x: f64| Complex64::new(x, 0.0);
    let [k1, k2] = amplitude_damping_operators(p);
    KrausSet::new(vec![
        k1.scale(re((1.0 - eps1).sqrt())),
        k2.scale(re((1.0 - eps1).sqrt())),
        u3.scale(re(eps3.sqrt())),
        u4.scale(re(eps4.sqrt())),
    ])
}

#[inline]
fn lift_left(
    op: &ComplexMatrix,
    input: &[Complex64],
    output: &mut [Complex64],
    mask: usize,
    dim: usize,
) {
    let k00 = op.get(0, 0);
    let k01 = op.get(0, 1);
    let k10 = op.get(1, 0);
    let k11 = op.get(1, 1);
    for i0 in 0..dim {
        if i0 & mask != 0 {
            continue;
        }
        let i1 = i0 | mask;
        let (r0, r1) = (i0 * dim, i1 * dim);
        for j in 0..dim {
            let a = input[r0 + j];
            let b = input[r1 + j];
            output[r0 + j] = k00 * a + k01 * b;
            output[r1 + j] = k10 * a + k11 * b;
        }
    }
}

#[inline]
fn lift_right_dagger_accumulate(
    op: &ComplexMatrix,
    input: &[Complex64],
    accum: &mut [Complex64],
    mask: usize,
    dim: usize,
) {
    let c00 = op.get(0, 0).conj();
    let c01 = op.get(0, 1).conj();
    let c10 = op.get(1, 0).conj();
    let c11 = op.get(1, 1).conj();
    for j0 in 0..dim {
        if j0 & mask != 0 {
            continue;
        }
        let j1 = j0 | mask;
        for i in 0..dim {
            let row = i * dim;
            let a = input[row + j0];
            let b = input[row + j1];
            accum[row + j0] += a * c00 + b * c01;
            accum[row + j1] += a * c10 + b * c11;
        }
    }
}

/// Applies the single-qubit channel independently to every qubit of `rho`.
///
/// Uses sequential per-qubit lifting (`I (x) ... (x) K_a (x) ... (x) I`),
/// which realizes exactly the channel whose Kraus set is all `M^N` tensor
/// products of single-qubit operators; [`apply_product_kraus`] provides that
/// literal enumeration as a cross-check route for small systems.
pub fn apply_per_qubit(rho: &DensityOperator, kraus: &KrausSet) -> Result<DensityOperator> {
    let n = rho.num_qubits();
    let dim = rho.dim();
    let mut current = rho.matrix().data().to_vec();
    let mut lifted = vec![Complex64::ZERO; dim * dim];
    let mut accum = vec![Complex64::ZERO; dim * dim];
    for qubit in 0..n {
        let mask = 1usize << (n - 1 - qubit);
        accum.fill(Complex64::ZERO);
        for op in kraus.operators() {
            lift_left(op, &current, &mut lifted, mask, dim);
            lift_right_dagger_accumulate(op, &lifted, &mut accum, mask, dim);
        }
        std::mem::swap(&mut current, &mut accum);
    }
    DensityOperator::from_matrix_trusted(n, ComplexMatrix::new(dim, dim, current)?)
}

/// Same channel as [`apply_per_qubit`], computed by explicitly enumerating
/// all `M^N` product Kraus operators. Errors once the operator count exceeds
/// [`PRODUCT_KRAUS_LIMIT`].
pub fn apply_product_kraus(rho: &DensityOperator, kraus: &KrausSet) -> Result<DensityOperator> {
    let n = rho.num_qubits();
    let m = kraus.len();
    let count = m.checked_pow(n as u32).filter(|&c| c <= PRODUCT_KRAUS_LIMIT);
    let Some(count) = count else {
        return Err(QlvError::SizeLimit(format!(
            "product enumeration of {m}^{n} Kraus operators exceeds {PRODUCT_KRAUS_LIMIT}"
        )));
    };
    let dim = rho.dim();
    let mut out = ComplexMatrix::zeros(dim, dim);
    for combo in 0..count {
        let mut digits = combo;
        let mut product = kraus.operators()[digits % m].clone();
        digits /= m;
        for _ in 1..n {
            product = kraus.operators()[digits % m].kron(&product)?;
            digits /= m;
        }
        let term = product.matmul(rho.matrix())?.matmul(&product.dagger())?;
        out = out.add(&term)?;
    }
    DensityOperator::from_matrix_trusted(n, out)
}

/// Evaluates the shared GHZ-family operator form
/// `2^-(N+1) [ (s_o + alpha s_z)^(x)N + (s_o + beta s_z)^(x)N
///            + c_plus (s_x + i s_y)^(x)N + c_minus (s_x - i s_y)^(x)N ]`.
///
/// The diagonal tensor powers contribute `(1+a)^(N-w) (1-a)^w` at the basis
/// state with `w` set bits; the corner powers collapse to the (0, M) and
/// (M, 0) entries with `M = 2^N - 1`.
fn ghz_family_matrix(
    n: usize,
    alpha: f64,
    beta: f64,
    c_plus: Complex64,
    c_minus: Complex64,
) -> Result<ComplexMatrix> {
    if n == 0 || n > crate::linalg::MAX_QUBITS {
        return Err(QlvError::SizeLimit(format!(
            "supported qubit counts are 1..={}, got {n}",
            crate::linalg::MAX_QUBITS
        )));
    }
    let dim = 1usize << n;
    let norm = 1.0 / 2f64.powi(n as i32 + 1);
    let mut m = ComplexMatrix::zeros(dim, dim);
    for x in 0..dim {
        let w = x.count_ones() as i32;
        let nw = n as i32 - w;
        let diag = (1.0 + alpha).powi(nw) * (1.0 - alpha).powi(w)
            + (1.0 + beta).powi(nw) * (1.0 - beta).powi(w);
        m.set(x, x, Complex64::new(diag * norm, 0.0));
    }
    let corner_scale = 2f64.powi(n as i32) * norm; // = 1/2
    let last = dim - 1;
    m.set(0, last, c_plus * corner_scale);
    m.set(last, 0, c_minus * corner_scale);
    Ok(m)
}

/// Closed form for the N-qubit cat state after per-qubit depolarization,
/// with `exp(-gamma_d t) := 1 - p`.
pub fn closed_form_depolarized(n: usize, p: f64) -> Result<DensityOperator> {
    check_p(p)?;
    let s = 1.0 - p;
    let c = Complex64::new(s.powi(n as i32), 0.0);
    DensityOperator::from_matrix_trusted(n, ghz_family_matrix(n, s, -s, c, c)?)
}

/// Closed form for the N-qubit cat state after per-qubit amplitude damping,
/// with `exp(-gamma_a t) := 1 - p` and off-diagonal factor `(1-p)^(N/2)`.
pub fn closed_form_amplitude_damped(n: usize, p: f64) -> Result<DensityOperator> {
    check_p(p)?;
    let q = 1.0 - p;
    let c = Complex64::new(q.sqrt().powi(n as i32), 0.0);
    DensityOperator::from_matrix_trusted(n, ghz_family_matrix(n, 1.0, 1.0 - 2.0 * q, c, c)?)
}

/// Closed form for the N-qubit cat state after per-qubit phase damping,
/// with `exp(-gamma_p t) := 1 - p`.
pub fn closed_form_phase_damped(n: usize, p: f64) -> Result<DensityOperator> {
    check_p(p)?;
    let q = 1.0 - p;
    let c = Complex64::new(q.powi(n as i32), 0.0);
    DensityOperator::from_matrix_trusted(n, ghz_family_matrix(n, 1.0, -1.0, c, c)?)
}

fn check_p(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(QlvError::Validation(format!(
            "decoherence parameter must lie in [0, 1], got {p}"
        )));
    }
    Ok(())
}

/// Result of the general sigma_z-rotation closed form: parameter sets that
/// break complete positivity are flagged, not rejected.
#[derive(Debug, Clone)]
pub struct GeneralZOutput {
    pub rho: DensityOperator,
    /// True when the evaluated operator has an eigenvalue below the PSD
    /// tolerance, i.e. the parameters do not describe a CP map.
    pub non_cp: bool,
}

/// Evaluates the general sigma_z-rotation decoherence model with rates
/// `gamma1`, `gamma2`, asymmetry `mu`, rotation frequency `omega` and time
/// `t`, including the complex `exp(-N (gamma2 +- i omega) t)` off-diagonal
/// factors.
///
/// Setting `mu = 1, gamma2 = gamma1/2 = gamma_a/2, omega = 0` reproduces
/// amplitude damping with `p = 1 - exp(-gamma_a t)`; setting
/// `gamma1 = omega = 0, gamma2 = gamma_p` reproduces phase damping.
pub fn closed_form_general_z(
    n: usize,
    gamma1: f64,
    gamma2: f64,
    mu: f64,
    omega: f64,
    t: f64,
) -> Result<GeneralZOutput> {
    let spec = ChannelSpec::GeneralZ {
        gamma1,
        gamma2,
        mu,
        omega,
        t,
    };
    spec.validate()?;
    let u = (-gamma1 * t).exp();
    let alpha = u + mu * (1.0 - u);
    let beta = -(u - mu * (1.0 - u));
    let c_plus = Complex64::new(-(n as f64) * gamma2 * t, -(n as f64) * omega * t).exp();
    let c_minus = c_plus.conj();
    let matrix = ghz_family_matrix(n, alpha, beta, c_plus, c_minus)?;
    let tol = Tolerances::default();
    let min = crate::linalg::min_eigenvalue_with(&matrix, &tol)?;
    let rho = DensityOperator::from_matrix_trusted(n, matrix)?;
    Ok(GeneralZOutput {
        rho,
        non_cp: min < -tol.psd,
    })
}

/// The recovery-probability fidelity `F = Tr(rho_ref rho_evolved)`, defined
/// for a pure reference state. This is the square of the conventional
/// fidelity. Numerical noise outside [0, 1] is clamped.
pub fn fidelity(reference: &DensityOperator, evolved: &DensityOperator) -> Result<f64> {
    if reference.dim() != evolved.dim() {
        return Err(QlvError::ShapeMismatch(format!(
            "fidelity between {}-qubit and {}-qubit operators",
            reference.num_qubits(),
            evolved.num_qubits()
        )));
    }
    let purity = reference.purity();
    if purity < 1.0 - 1e-8 {
        return Err(QlvError::Contract(format!(
            "fidelity requires a pure reference state (purity {purity} < 1 - 1e-8)"
        )));
    }
    let t = crate::linalg::trace_product(reference.matrix(), evolved.matrix())?;
    Ok(t.re.clamp(0.0, 1.0))
}

/// Scalar fidelity of the N-qubit cat state under depolarization:
/// `[(1+s)^N + (1-s)^N] / 2^(N+1) + s^N / 2` with `s = 1 - p`.
pub fn fidelity_depolarized(n: usize, p: f64) -> f64 {
    let s = 1.0 - p;
    let n_i = n as i32;
    ((1.0 + s).powi(n_i) + (1.0 - s).powi(n_i)) / 2f64.powi(n_i + 1) + s.powi(n_i) / 2.0
}

/// Scalar fidelity of the N-qubit cat state under amplitude damping:
/// `(1 + p^N + (1-p)^N + 2 (1-p)^(N/2)) / 4`.
pub fn fidelity_amplitude_damped(n: usize, p: f64) -> f64 {
    let q = 1.0 - p;
    let n_i = n as i32;
    0.25 * (1.0 + p.powi(n_i) + q.powi(n_i) + 2.0 * q.sqrt().powi(n_i))
}

/// Scalar fidelity of the N-qubit cat state under phase damping:
/// `(1 + (1-p)^N) / 2`.
pub fn fidelity_phase_damped(n: usize, p: f64) -> f64 {
    (1.0 + (1.0 - p).powi(n as i32)) / 2.0
}

/// Fidelity of the N-qubit cat state after the channel described by `spec`,
/// computed through the matrix route (closed forms for the damping families,
/// per-qubit Kraus application otherwise).
pub fn cat_fidelity_after(spec: &ChannelSpec, n: usize) -> Result<f64> {
    let reference = cat_density(n)?;
    let evolved = match spec {
        ChannelSpec::Depolarization { p } => closed_form_depolarized(n, *p)?,
        ChannelSpec::AmplitudeDamping { p } => closed_form_amplitude_damped(n, *p)?,
        ChannelSpec::PhaseDamping { p } => closed_form_phase_damped(n, *p)?,
        ChannelSpec::GeneralZ {
            gamma1,
            gamma2,
            mu,
            omega,
            t,
        } => closed_form_general_z(n, *gamma1, *gamma2, *mu, *omega, *t)?.rho,
        _ => apply_per_qubit(&reference, &kraus_for(spec)?)?,
    };
    fidelity(&reference, &evolved)
}
