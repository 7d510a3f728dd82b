//! Bell and GHZ basis states, the cat-state density operator, and the
//! superdense-coding dibit encoding.
//!
//! Global phase is ignored throughout: states are compared via density
//! operators or |<a|b>|.

use num_complex::Complex64;

use crate::error::{QlvError, Result};
use crate::linalg::{ComplexMatrix, DensityOperator, MAX_QUBITS};

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Normalized pure state of `num_qubits` qubits.
///
/// Basis ordering: qubit 0 owns the most significant bit, matching the
/// convention of [`ComplexMatrix::kron`] (left factor on the high bits).
#[derive(Debug, Clone, PartialEq)]
pub struct PureState {
    num_qubits: usize,
    amplitudes: Vec<Complex64>,
}

impl PureState {
    /// Builds a state, enforcing the unit-norm invariant to 1e-12.
    pub fn new(num_qubits: usize, amplitudes: Vec<Complex64>) -> Result<Self> {
        if num_qubits == 0 || num_qubits > MAX_QUBITS {
            return Err(QlvError::SizeLimit(format!(
                "pure states support 1..={MAX_QUBITS} qubits, got {num_qubits}"
            )));
        }
        let dim = 1usize << num_qubits;
        if amplitudes.len() != dim {
            return Err(QlvError::ShapeMismatch(format!(
                "a {num_qubits}-qubit state needs {dim} amplitudes, got {}",
                amplitudes.len()
            )));
        }
        let norm_sq: f64 = amplitudes.iter().map(|a| a.norm_sqr()).sum();
        if (norm_sq.sqrt() - 1.0).abs() > 1e-12 {
            return Err(QlvError::Validation(format!(
                "state norm is {}, expected 1",
                norm_sq.sqrt()
            )));
        }
        Ok(PureState {
            num_qubits,
            amplitudes,
        })
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn dim(&self) -> usize {
        1 << self.num_qubits
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    /// Inner product `<self|other>`.
    pub fn inner(&self, other: &PureState) -> Result<Complex64> {
        if self.num_qubits != other.num_qubits {
            return Err(QlvError::ShapeMismatch(format!(
                "inner product between {}-qubit and {}-qubit states",
                self.num_qubits, other.num_qubits
            )));
        }
        Ok(self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum())
    }

    /// True when the two states agree up to a global phase.
    pub fn same_up_to_phase(&self, other: &PureState) -> bool {
        match self.inner(other) {
            Ok(ip) => (ip.norm() - 1.0).abs() < 1e-10,
            Err(_) => false,
        }
    }

    /// Outer product |psi><psi| as a density operator.
    pub fn density(&self) -> DensityOperator {
        let dim = self.dim();
        let mut m = ComplexMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..dim {
                m.set(i, j, self.amplitudes[i] * self.amplitudes[j].conj());
            }
        }
        DensityOperator::from_matrix_trusted(self.num_qubits, m)
            .expect("outer product of a normalized state is a valid density operator")
    }

    /// Applies a single-qubit operator to `qubit`. The result must still be
    /// normalized, so this is intended for unitary operators.
    pub fn apply_single_qubit(&self, op: &ComplexMatrix, qubit: usize) -> Result<PureState> {
        if op.rows() != 2 || op.cols() != 2 {
            return Err(QlvError::ShapeMismatch(
                "single-qubit operators must be 2x2".into(),
            ));
        }
        if qubit >= self.num_qubits {
            return Err(QlvError::Domain(format!(
                "qubit index {qubit} out of range for {} qubits",
                self.num_qubits
            )));
        }
        let dim = self.dim();
        let mask = 1usize << (self.num_qubits - 1 - qubit);
        let mut out = vec![Complex64::ZERO; dim];
        for idx in 0..dim {
            let bit = usize::from(idx & mask != 0);
            let base = idx & !mask;
            out[idx] = op.get(bit, 0) * self.amplitudes[base]
                + op.get(bit, 1) * self.amplitudes[base | mask];
        }
        PureState::new(self.num_qubits, out)
    }
}

/// Which maximally entangled basis family a label refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BasisFamily {
    Bell,
    Ghz,
}

/// Identifies one orthogonal basis state of a Bell or GHZ family together
/// with its public classical message encoding.
///
/// GHZ index convention: `index = (sign_bit << (N-1)) | pattern`, where the
/// state is `(|0,pattern> + (-1)^sign |1,!pattern>)/sqrt(2)`. The classical
/// N-bit message for a GHZ label is the index itself; for Bell labels the
/// two-bit message is the Bell index (the superdense dibit).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BasisLabel {
    family: BasisFamily,
    num_qubits: usize,
    index: usize,
}

impl BasisLabel {
    pub fn new(family: BasisFamily, num_qubits: usize, index: usize) -> Result<Self> {
        match family {
            BasisFamily::Bell => {
                if num_qubits != 2 {
                    return Err(QlvError::Domain(format!(
                        "Bell labels are two-qubit, got {num_qubits}"
                    )));
                }
                if index >= 4 {
                    return Err(QlvError::Domain(format!(
                        "Bell index must be in 0..4, got {index}"
                    )));
                }
            }
            BasisFamily::Ghz => {
                if num_qubits < 2 || num_qubits > MAX_QUBITS {
                    return Err(QlvError::Domain(format!(
                        "GHZ labels need 2..={MAX_QUBITS} qubits, got {num_qubits}"
                    )));
                }
                if index >= (1usize << num_qubits) {
                    return Err(QlvError::Domain(format!(
                        "GHZ index must be in 0..{}, got {index}",
                        1usize << num_qubits
                    )));
                }
            }
        }
        Ok(BasisLabel {
            family,
            num_qubits,
            index,
        })
    }

    pub fn family(&self) -> BasisFamily {
        self.family
    }

    pub fn num_qubits(&self) -> usize {
        self.num_qubits
    }

    pub fn index(&self) -> usize {
        self.index
    }

    /// The public classical message bits carried by this basis state,
    /// most significant bit first.
    pub fn message_bits(&self) -> Vec<u8> {
        (0..self.num_qubits)
            .rev()
            .map(|k| ((self.index >> k) & 1) as u8)
            .collect()
    }

    /// Materializes the basis state.
    pub fn state(&self) -> PureState {
        match self.family {
            BasisFamily::Bell => bell_state(self.index).expect("validated index"),
            BasisFamily::Ghz => {
                ghz_state(self.num_qubits, self.index).expect("validated index")
            }
        }
    }
}

/// The four orthogonal Bell basis states:
/// indices 0,1 -> `(|00> +- |11>)/sqrt(2)`, indices 2,3 -> `(|10> +- |01>)/sqrt(2)`.
pub fn bell_state(index: usize) -> Result<PureState> {
    let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
    let z = Complex64::ZERO;
    let amplitudes = match index {
        0 => vec![h, z, z, h],
        1 => vec![h, z, z, -h],
        2 => vec![z, h, h, z],
        3 => vec![z, -h, h, z],
        _ => {
            return Err(QlvError::Domain(format!(
                "Bell index must be in 0..4, got {index}"
            )))
        }
    };
    PureState::new(2, amplitudes)
}

/// The `2^N` orthogonal GHZ-type basis states of an N-qubit register.
///
/// `index = (sign << (N-1)) | pattern` selects
/// `(|0,pattern> + (-1)^sign |1,!pattern>)/sqrt(2)`; index 0 is the cat state
/// `(|0...0> + |1...1>)/sqrt(2)`.
pub fn ghz_state(num_qubits: usize, index: usize) -> Result<PureState> {
    if num_qubits < 2 {
        return Err(QlvError::Domain(format!(
            "GHZ states need at least 2 qubits, got {num_qubits}"
        )));
    }
    if num_qubits > MAX_QUBITS {
        return Err(QlvError::SizeLimit(format!(
            "GHZ states support up to {MAX_QUBITS} qubits, got {num_qubits}"
        )));
    }
    let dim = 1usize << num_qubits;
    if index >= dim {
        return Err(QlvError::Domain(format!(
            "GHZ index must be in 0..{dim}, got {index}"
        )));
    }
    let sign_bit = index >> (num_qubits - 1);
    let pattern = index & ((1usize << (num_qubits - 1)) - 1);
    let x = pattern; // (N-1)-bit pattern prefixed with 0
    let x_bar = !x & (dim - 1); // bitwise complement within N bits
    let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
    let mut amplitudes = vec![Complex64::ZERO; dim];
    amplitudes[x] = h;
    amplitudes[x_bar] = if sign_bit == 0 { h } else { -h };
    PureState::new(num_qubits, amplitudes)
}

/// Density operator of the N-qubit cat state `(|0...0> + |1...1>)/sqrt(2)`.
///
/// Evaluated from the Pauli tensor-sum form: the four tensor powers collapse
/// to 1/2 at the four corner entries (0,0), (0,M), (M,0), (M,M) with
/// `M = 2^N - 1`; everything else vanishes. For N = 1 this is |+><+|.
pub fn cat_density(num_qubits: usize) -> Result<DensityOperator> {
    if num_qubits == 0 {
        return Err(QlvError::Domain("cat states need at least 1 qubit".into()));
    }
    if num_qubits > MAX_QUBITS {
        return Err(QlvError::SizeLimit(format!(
            "cat states support up to {MAX_QUBITS} qubits, got {num_qubits}"
        )));
    }
    let dim = 1usize << num_qubits;
    let last = dim - 1;
    let mut m = ComplexMatrix::zeros(dim, dim);
    let half = Complex64::new(0.5, 0.0);
    m.set(0, 0, half);
    m.set(0, last, half);
    m.set(last, 0, half);
    m.set(last, last, half);
    DensityOperator::from_matrix_trusted(num_qubits, m)
}

/// Superdense-coding encoder: applies the public Pauli for `dibit` to the
/// first qubit of a shared `(|00>+|11>)/sqrt(2)` pair.
///
/// The fixed public assignment is 00 -> I, 01 -> sigma_z, 10 -> sigma_x,
/// 11 -> sigma_x sigma_z, which maps dibit `d` to Bell index `d`.
pub fn encode_dibit(pair: &PureState, dibit: u8) -> Result<PureState> {
    if pair.num_qubits() != 2 {
        return Err(QlvError::ShapeMismatch(format!(
            "superdense coding operates on two-qubit pairs, got {} qubits",
            pair.num_qubits()
        )));
    }
    if dibit > 3 {
        return Err(QlvError::Domain(format!(
            "dibit must be in 0..4, got {dibit}"
        )));
    }
    use crate::linalg::pauli::{sigma_x, sigma_z};
    let state = match dibit {
        0 => pair.clone(),
        1 => pair.apply_single_qubit(&sigma_z(), 0)?,
        2 => pair.apply_single_qubit(&sigma_x(), 0)?,
        _ => pair
            .apply_single_qubit(&sigma_z(), 0)?
            .apply_single_qubit(&sigma_x(), 0)?,
    };
    Ok(state)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::trace_product;
    use proptest::prelude::*;

    #[test]
    fn bell_zero_amplitudes() {
        let s = bell_state(0).unwrap();
        let h = FRAC_1_SQRT_2;
        let amps = s.amplitudes();
        assert!((amps[0].re - h).abs() < 1e-15);
        assert_eq!(amps[1], Complex64::ZERO);
        assert_eq!(amps[2], Complex64::ZERO);
        assert!((amps[3].re - h).abs() < 1e-15);
    }

    #[test]
    fn bell_states_are_orthonormal() {
        for i in 0..4 {
            for j in 0..4 {
                let ip = bell_state(i)
                    .unwrap()
                    .inner(&bell_state(j).unwrap())
                    .unwrap();
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!(
                    (ip.norm() - expected).abs() < 1e-12,
                    "bell({i}) . bell({j}) = {ip}"
                );
            }
        }
    }

    #[test]
    fn bell_index_out_of_range() {
        assert!(matches!(bell_state(4), Err(QlvError::Domain(_))));
    }

    #[test]
    fn bell_zero_density_matches_outer_product_oracle() {
        let rho = bell_state(0).unwrap().density();
        // Oracle: outer product computed by explicit loops over amplitudes.
        let s = bell_state(0).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let expected = s.amplitudes()[i] * s.amplitudes()[j].conj();
                assert!((rho.matrix().get(i, j) - expected).norm() < 1e-15);
            }
        }
        for (i, j) in [(0usize, 0usize), (0, 3), (3, 0), (3, 3)] {
            assert!((rho.matrix().get(i, j).re - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn ghz_3_index_0_is_cat() {
        let s = ghz_state(3, 0).unwrap();
        let h = FRAC_1_SQRT_2;
        assert!((s.amplitudes()[0].re - h).abs() < 1e-15);
        assert!((s.amplitudes()[7].re - h).abs() < 1e-15);
        assert_eq!(
            s.amplitudes()[1..7]
                .iter()
                .filter(|a| a.norm() > 0.0)
                .count(),
            0
        );
    }

    #[test]
    fn ghz_2_spans_the_bell_basis() {
        // Every N=2 GHZ basis state must have unit total overlap with the
        // Bell set, i.e. live entirely inside its span.
        for i in 0..4 {
            let g = ghz_state(2, i).unwrap();
            let total: f64 = (0..4)
                .map(|j| g.inner(&bell_state(j).unwrap()).unwrap().norm_sqr())
                .sum();
            assert!((total - 1.0).abs() < 1e-12, "ghz(2,{i}) overlap {total}");
        }
    }

    #[test]
    fn ghz_3_gram_matrix_is_identity() {
        // Inner-product oracle over all 8 basis states.
        for i in 0..8 {
            for j in 0..8 {
                let ip = ghz_state(3, i)
                    .unwrap()
                    .inner(&ghz_state(3, j).unwrap())
                    .unwrap();
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((ip.norm() - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ghz_gram_is_identity_for_n_up_to_6() {
        for n in 2..=6usize {
            let dim = 1 << n;
            for i in 0..dim {
                for j in 0..dim {
                    let ip = ghz_state(n, i)
                        .unwrap()
                        .inner(&ghz_state(n, j).unwrap())
                        .unwrap();
                    let expected = if i == j { 1.0 } else { 0.0 };
                    assert!(
                        (ip.norm() - expected).abs() < 1e-10,
                        "n={n} i={i} j={j} ip={ip}"
                    );
                }
            }
        }
    }

    #[test]
    fn ghz_rejects_bad_arguments() {
        assert!(matches!(ghz_state(1, 0), Err(QlvError::Domain(_))));
        assert!(matches!(ghz_state(3, 8), Err(QlvError::Domain(_))));
    }

    #[test]
    fn cat_density_1_is_plus_projector() {
        let rho = cat_density(1).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                assert!((rho.matrix().get(i, j).re - 0.5).abs() < 1e-15);
                assert!(rho.matrix().get(i, j).im.abs() < 1e-15);
            }
        }
    }

    #[test]
    fn cat_density_2_is_bell_zero_projector() {
        let rho = cat_density(2).unwrap();
        let bell = bell_state(0).unwrap().density();
        assert!(rho.matrix().max_abs_diff(bell.matrix()) < 1e-12);
    }

    #[test]
    fn cat_density_3_corners() {
        let rho = cat_density(3).unwrap();
        // Oracle: expand the Pauli tensor sums by explicit kron folding.
        use crate::linalg::pauli::*;
        use crate::linalg::kron_power;
        let n = 3;
        let i_c = Complex64::new(0.0, 1.0);
        let diag_plus = sigma_o().add(&sigma_z()).unwrap();
        let diag_minus = sigma_o().sub(&sigma_z()).unwrap();
        let corner_plus = sigma_x().add(&sigma_y().scale(i_c)).unwrap();
        let corner_minus = sigma_x().sub(&sigma_y().scale(i_c)).unwrap();
        let mut sum = kron_power(&diag_plus, n).unwrap();
        sum = sum.add(&kron_power(&diag_minus, n).unwrap()).unwrap();
        sum = sum.add(&kron_power(&corner_plus, n).unwrap()).unwrap();
        sum = sum.add(&kron_power(&corner_minus, n).unwrap()).unwrap();
        let oracle = sum.scale(Complex64::new(1.0 / 2f64.powi(n as i32 + 1), 0.0));
        assert!(rho.matrix().max_abs_diff(&oracle) < 1e-12);
        for (i, j) in [(0usize, 0usize), (0, 7), (7, 0), (7, 7)] {
            assert!((rho.matrix().get(i, j).re - 0.5).abs() < 1e-15);
        }
    }

    #[test]
    fn cat_density_matches_ghz_outer_product() {
        for n in 2..=6usize {
            let rho = cat_density(n).unwrap();
            let outer = ghz_state(n, 0).unwrap().density();
            assert!(rho.matrix().max_abs_diff(outer.matrix()) < 1e-12);
        }
    }

    #[test]
    fn cat_density_is_pure_and_valid() {
        for n in 1..=6usize {
            let rho = cat_density(n).unwrap();
            rho.validate(&crate::linalg::Tolerances::default()).unwrap();
            assert!((rho.purity() - 1.0).abs() < 1e-10, "purity at n={n}");
        }
    }

    #[test]
    fn cat_density_rejects_oversized_n() {
        assert!(matches!(
            cat_density(MAX_QUBITS + 1),
            Err(QlvError::SizeLimit(_))
        ));
    }

    #[test]
    fn encode_dibit_hits_the_bell_basis() {
        let reference = bell_state(0).unwrap();
        for d in 0..4u8 {
            let encoded = encode_dibit(&reference, d).unwrap();
            let target = bell_state(d as usize).unwrap();
            assert!(
                encoded.same_up_to_phase(&target),
                "dibit {d} should encode Bell index {d}"
            );
        }
    }

    #[test]
    fn encoded_states_are_orthonormal() {
        let reference = bell_state(0).unwrap();
        let encoded: Vec<_> = (0..4u8)
            .map(|d| encode_dibit(&reference, d).unwrap())
            .collect();
        for i in 0..4 {
            for j in 0..4 {
                let ip = encoded[i].inner(&encoded[j]).unwrap();
                let expected = if i == j { 1.0 } else { 0.0 };
                assert!((ip.norm() - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn basis_label_round_trips_message_bits() {
        let label = BasisLabel::new(BasisFamily::Ghz, 3, 0b101).unwrap();
        assert_eq!(label.message_bits(), vec![1, 0, 1]);
        assert_eq!(label.state().num_qubits(), 3);
        assert!(BasisLabel::new(BasisFamily::Bell, 3, 0).is_err());
        assert!(BasisLabel::new(BasisFamily::Bell, 2, 5).is_err());
    }

    #[test]
    fn fidelity_of_cat_against_itself_is_one() {
        for n in 1..=4usize {
            let rho = cat_density(n).unwrap();
            let t = trace_product(rho.matrix(), rho.matrix()).unwrap();
            assert!((t.re - 1.0).abs() < 1e-12);
        }
    }

    proptest! {
        #[test]
        fn constructed_states_have_unit_norm(
            n in 2usize..=6,
            index in 0usize..64,
        ) {
            let index = index % (1 << n);
            let s = ghz_state(n, index).unwrap();
            let norm: f64 = s.amplitudes().iter().map(|a| a.norm_sqr()).sum();
            prop_assert!((norm.sqrt() - 1.0).abs() < 1e-12);
        }
    }
}
