//! Python bindings for the QLV toolkit: states, channels, fidelity analysis
//! and the protocol simulator.

use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use qlv_core::channels::{self, ChannelSpec};
use qlv_core::noise::{self, RandomChannelSpec, RngStream, WeightMode};
use qlv_core::protocol::{ProtocolWorld, ScenarioConfig};
use qlv_core::{analysis, linalg, states, QlvError};

fn to_py_err(err: QlvError) -> PyErr {
    PyValueError::new_err(err.to_string())
}

fn matrix_entries(m: &linalg::ComplexMatrix) -> Vec<Vec<Complex64>> {
    (0..m.rows())
        .map(|i| (0..m.cols()).map(|j| m.get(i, j)).collect())
        .collect()
}

fn spec_from(family: &str, p: f64, eps3: Option<f64>, eps4: Option<f64>) -> PyResult<ChannelSpec> {
    let spec = match family {
        "depolarization" => ChannelSpec::Depolarization { p },
        "amplitudeDamping" => ChannelSpec::AmplitudeDamping { p },
        "phaseDamping" => ChannelSpec::PhaseDamping { p },
        "bitFlip" => ChannelSpec::BitFlip { p },
        "phaseFlip" => ChannelSpec::PhaseFlip { p },
        "bitPhaseFlip" => ChannelSpec::BitPhaseFlip { p },
        "combinedDampingRandom" => ChannelSpec::CombinedDampingRandom {
            p,
            eps3: eps3.unwrap_or(0.0),
            eps4: eps4.unwrap_or(0.0),
        },
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown channel family {other:?}"
            )))
        }
    };
    spec.validate().map_err(to_py_err)?;
    Ok(spec)
}

/// An N-qubit density operator (2^N x 2^N complex Hermitian matrix).
#[pyclass(name = "DensityOperator")]
#[derive(Clone)]
struct PyDensityOperator {
    inner: linalg::DensityOperator,
}

#[pymethods]
impl PyDensityOperator {
    #[getter]
    fn num_qubits(&self) -> usize {
        self.inner.num_qubits()
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    /// Matrix entries as a nested list of complex numbers, row-major.
    fn entries(&self) -> Vec<Vec<Complex64>> {
        matrix_entries(self.inner.matrix())
    }

    /// Tr(rho^2); 1 for pure states.
    fn purity(&self) -> f64 {
        self.inner.purity()
    }

    /// Smallest eigenvalue of the operator.
    fn min_eigenvalue(&self) -> PyResult<f64> {
        linalg::min_eigenvalue(self.inner.matrix()).map_err(to_py_err)
    }

    fn __repr__(&self) -> String {
        format!("DensityOperator(num_qubits={})", self.inner.num_qubits())
    }
}

/// A single-qubit Kraus set defining a CPTP channel.
#[pyclass(name = "KrausSet")]
#[derive(Clone)]
struct PyKrausSet {
    inner: channels::KrausSet,
}

#[pymethods]
impl PyKrausSet {
    /// The operators as nested lists of complex numbers.
    fn operators(&self) -> Vec<Vec<Vec<Complex64>>> {
        self.inner.operators().iter().map(matrix_entries).collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    /// Max entrywise deviation of sum K^dagger K from the identity.
    fn completeness_defect(&self) -> f64 {
        self.inner.completeness_defect()
    }

    fn __repr__(&self) -> String {
        format!("KrausSet(operators={})", self.inner.len())
    }
}

/// Amplitudes of one of the four Bell basis states.
#[pyfunction]
fn bell_state(index: usize) -> PyResult<Vec<Complex64>> {
    Ok(states::bell_state(index)
        .map_err(to_py_err)?
        .amplitudes()
        .to_vec())
}

/// Amplitudes of one of the 2^N GHZ basis states.
#[pyfunction]
fn ghz_state(num_qubits: usize, index: usize) -> PyResult<Vec<Complex64>> {
    Ok(states::ghz_state(num_qubits, index)
        .map_err(to_py_err)?
        .amplitudes()
        .to_vec())
}

/// Density operator of the N-qubit cat state.
#[pyfunction]
fn cat_density(num_qubits: usize) -> PyResult<PyDensityOperator> {
    Ok(PyDensityOperator {
        inner: states::cat_density(num_qubits).map_err(to_py_err)?,
    })
}

/// Superdense coding: amplitudes of the Bell state encoding `dibit`.
#[pyfunction]
fn encode_dibit(dibit: u8) -> PyResult<Vec<Complex64>> {
    let reference = states::bell_state(0).map_err(to_py_err)?;
    Ok(states::encode_dibit(&reference, dibit)
        .map_err(to_py_err)?
        .amplitudes()
        .to_vec())
}

/// Kraus set for a catalog channel family at decoherence parameter `p`.
#[pyfunction]
#[pyo3(signature = (family, p, eps3=None, eps4=None))]
fn kraus_for(family: &str, p: f64, eps3: Option<f64>, eps4: Option<f64>) -> PyResult<PyKrausSet> {
    let spec = spec_from(family, p, eps3, eps4)?;
    Ok(PyKrausSet {
        inner: channels::kraus_for(&spec).map_err(to_py_err)?,
    })
}

/// Applies a single-qubit channel independently to every qubit.
#[pyfunction]
fn apply_per_qubit(rho: &PyDensityOperator, kraus: &PyKrausSet) -> PyResult<PyDensityOperator> {
    Ok(PyDensityOperator {
        inner: channels::apply_per_qubit(&rho.inner, &kraus.inner).map_err(to_py_err)?,
    })
}

/// Closed-form damped cat state for "depolarization", "amplitudeDamping" or
/// "phaseDamping".
#[pyfunction]
fn closed_form(family: &str, num_qubits: usize, p: f64) -> PyResult<PyDensityOperator> {
    let inner = match family {
        "depolarization" => channels::closed_form_depolarized(num_qubits, p),
        "amplitudeDamping" => channels::closed_form_amplitude_damped(num_qubits, p),
        "phaseDamping" => channels::closed_form_phase_damped(num_qubits, p),
        other => {
            return Err(PyValueError::new_err(format!(
                "no closed form for family {other:?}"
            )))
        }
    }
    .map_err(to_py_err)?;
    Ok(PyDensityOperator { inner })
}

/// General sigma_z-rotation model; returns the operator and a flag marking
/// non-completely-positive parameter sets.
#[pyfunction]
fn closed_form_general_z(
    num_qubits: usize,
    gamma1: f64,
    gamma2: f64,
    mu: f64,
    omega: f64,
    t: f64,
) -> PyResult<(PyDensityOperator, bool)> {
    let out = channels::closed_form_general_z(num_qubits, gamma1, gamma2, mu, omega, t)
        .map_err(to_py_err)?;
    Ok((PyDensityOperator { inner: out.rho }, out.non_cp))
}

/// Recovery-probability fidelity Tr(rho_ref rho_evolved) for a pure
/// reference.
#[pyfunction]
fn fidelity(reference: &PyDensityOperator, evolved: &PyDensityOperator) -> PyResult<f64> {
    channels::fidelity(&reference.inner, &evolved.inner).map_err(to_py_err)
}

/// One Haar-random 2x2 unitary from the (seed, stream) generator.
#[pyfunction]
fn sample_unitary_2(seed: u64, stream: u64) -> Vec<Vec<Complex64>> {
    matrix_entries(&noise::sample_unitary_2(&RngStream::new(seed, stream)))
}

/// Monte Carlo mean fidelity (and standard error) of the N-qubit cat state
/// under random-noise channels.
#[pyfunction]
#[pyo3(signature = (num_qubits, p, trials=10_000, seed=0, weight_mode="uniformSplit"))]
fn mean_fidelity_random_channel(
    num_qubits: usize,
    p: f64,
    trials: u64,
    seed: u64,
    weight_mode: &str,
) -> PyResult<(f64, f64)> {
    let mode = match weight_mode {
        "uniformSplit" => WeightMode::UniformSplit,
        "randomSimplex" => WeightMode::RandomSimplex,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown weight mode {other:?}"
            )))
        }
    };
    let spec = RandomChannelSpec::new(p, mode, seed, trials).map_err(to_py_err)?;
    let out = noise::mean_fidelity_random_channel(num_qubits, &spec).map_err(to_py_err)?;
    Ok((out.mean, out.stderr))
}

/// Probability that one verification instance succeeds, for strategy
/// "bellStates" or "ghzState".
#[pyfunction]
fn instance_probability(strategy: &str, num_stations: usize, fidelity: f64) -> PyResult<f64> {
    let strategy = match strategy {
        "bellStates" => analysis::Strategy::BellStates,
        "ghzState" => analysis::Strategy::GhzState,
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown strategy {other:?}"
            )))
        }
    };
    analysis::instance_probability(&analysis::VerificationModel {
        num_stations,
        strategy,
        per_state_fidelity: fidelity,
    })
    .map_err(to_py_err)
}

/// Probability that at least k of m independent decodes succeed.
#[pyfunction]
fn at_least_k_of_m(k: usize, m: usize, fidelity: f64) -> PyResult<f64> {
    analysis::at_least_k_of_m(k, m, fidelity).map_err(to_py_err)
}

/// (probability, log10(probability)) of an optimal-cloning adversary passing
/// all `l` decodes.
#[pyfunction]
fn cloning_pass_probability(clone_fidelity: f64, l: usize) -> PyResult<(f64, f64)> {
    let out = analysis::cloning_pass_probability(clone_fidelity, l).map_err(to_py_err)?;
    Ok((out.probability, out.log10_probability))
}

/// Runs a verification scenario from its JSON configuration; returns the
/// verdict JSON and the event trace as JSON lines.
#[pyfunction]
fn run_scenario(config_json: &str) -> PyResult<(String, String)> {
    let config: ScenarioConfig =
        serde_json::from_str(config_json).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let (verdict, trace) = ProtocolWorld::run(config).map_err(to_py_err)?;
    let verdict_json =
        serde_json::to_string_pretty(&verdict).map_err(|e| PyValueError::new_err(e.to_string()))?;
    let trace_jsonl = ProtocolWorld::trace_to_jsonl(&trace).map_err(to_py_err)?;
    Ok((verdict_json, trace_jsonl))
}

#[pymodule]
fn qlv_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDensityOperator>()?;
    m.add_class::<PyKrausSet>()?;
    m.add_function(wrap_pyfunction!(bell_state, m)?)?;
    m.add_function(wrap_pyfunction!(ghz_state, m)?)?;
    m.add_function(wrap_pyfunction!(cat_density, m)?)?;
    m.add_function(wrap_pyfunction!(encode_dibit, m)?)?;
    m.add_function(wrap_pyfunction!(kraus_for, m)?)?;
    m.add_function(wrap_pyfunction!(apply_per_qubit, m)?)?;
    m.add_function(wrap_pyfunction!(closed_form, m)?)?;
    m.add_function(wrap_pyfunction!(closed_form_general_z, m)?)?;
    m.add_function(wrap_pyfunction!(fidelity, m)?)?;
    m.add_function(wrap_pyfunction!(sample_unitary_2, m)?)?;
    m.add_function(wrap_pyfunction!(mean_fidelity_random_channel, m)?)?;
    m.add_function(wrap_pyfunction!(instance_probability, m)?)?;
    m.add_function(wrap_pyfunction!(at_least_k_of_m, m)?)?;
    m.add_function(wrap_pyfunction!(cloning_pass_probability, m)?)?;
    m.add_function(wrap_pyfunction!(run_scenario, m)?)?;
    Ok(())
}
