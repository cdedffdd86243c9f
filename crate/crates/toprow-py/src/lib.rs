//! Python bindings: circuit parsing/reduction, parameter derivation, and
//! single-session protocol runs. Values cross the boundary as plain floats,
//! strings, and JSON; the exact arbitrary-precision arithmetic stays on the
//! Rust side.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use rand::SeedableRng;

use toprow::circuit::{
    parse_circuit, postbqp_trace_pair, qcircuit_reduction, random_circuit, serialize_circuit,
    top_row_matrix,
};
use toprow::experiment::{run_experiment as run_experiment_rs, ExperimentSpec};
use toprow::protocol::{
    decide_postbqp as decide_postbqp_rs, honest_factory, run_protocol, ClaimSpec, PostBqpOutcome,
    ProtocolParams, SimulatorProver, Strategy, Verdict,
};

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// A gate list over labeled qubits, held in the engine's text format.
#[pyclass(name = "Circuit")]
#[derive(Clone)]
struct PyCircuit {
    inner: toprow::circuit::Circuit,
}

#[pymethods]
impl PyCircuit {
    #[staticmethod]
    fn parse(text: &str) -> PyResult<Self> {
        Ok(Self { inner: parse_circuit(text).map_err(err)? })
    }

    #[staticmethod]
    fn random(n: u32, t: usize, seed: u64) -> Self {
        let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
        Self { inner: random_circuit(&mut rng, n, t) }
    }

    #[getter]
    fn num_qubits(&self) -> u32 {
        self.inner.n
    }

    #[getter]
    fn num_gates(&self) -> usize {
        self.inner.len()
    }

    fn text(&self) -> String {
        serialize_circuit(&self.inner)
    }

    /// Trace of the top row matrix at precision `p`, as (re, im).
    #[pyo3(signature = (p = 64))]
    fn top_row_trace(&self, p: u32) -> PyResult<(f64, f64)> {
        Ok(top_row_matrix(&self.inner, p).map_err(err)?.trace().to_f64_pair())
    }

    /// One extra qubit, gates conjugated so the all-zeros probability of
    /// qubit 1 becomes a top-row trace.
    fn reduce_qcircuit(&self) -> PyResult<Self> {
        Ok(Self { inner: qcircuit_reduction(&self.inner).map_err(err)? })
    }

    /// The (numerator, denominator) trace-pair circuits of the two-run
    /// decision procedure.
    fn postbqp_pair(&self) -> PyResult<(Self, Self)> {
        let (cy, cz) = postbqp_trace_pair(&self.inner).map_err(err)?;
        Ok((Self { inner: cy }, Self { inner: cz }))
    }

    fn __repr__(&self) -> String {
        format!("Circuit(n={}, gates={})", self.inner.n, self.inner.len())
    }
}

/// Derived verifier parameters for one (n, T).
#[pyclass(name = "Params")]
#[derive(Clone)]
struct PyParams {
    inner: ProtocolParams,
}

#[pymethods]
impl PyParams {
    #[staticmethod]
    fn derive(n: u32, t: u32) -> PyResult<Self> {
        Ok(Self { inner: ProtocolParams::derive(n, t).map_err(err)? })
    }

    #[staticmethod]
    fn relaxed(n: u32, t: u32, mu_pow: u32, xi_exp: u32) -> PyResult<Self> {
        Ok(Self { inner: ProtocolParams::relaxed(n, t, mu_pow, xi_exp).map_err(err)? })
    }

    #[staticmethod]
    fn w_mode(n: u32, t: u32) -> PyResult<Self> {
        Ok(Self { inner: ProtocolParams::w_mode(n, t).map_err(err)? })
    }

    #[getter]
    fn n(&self) -> u32 {
        self.inner.n
    }

    #[getter]
    fn t(&self) -> u32 {
        self.inner.t
    }

    #[getter]
    fn p(&self) -> u32 {
        self.inner.p
    }

    #[getter]
    fn m(&self) -> u32 {
        self.inner.m
    }

    #[getter]
    fn xi_exp(&self) -> i32 {
        self.inner.xi_exp
    }

    fn bit_cap(&self) -> u64 {
        self.inner.bit_cap()
    }

    fn report(&self) -> String {
        self.inner.report()
    }

    fn __repr__(&self) -> String {
        format!("Params(n={}, t={}, p={})", self.inner.n, self.inner.t, self.inner.p)
    }
}

/// Outcome of one verifier/prover session.
#[pyclass(name = "SessionResult")]
struct PySessionResult {
    #[pyo3(get)]
    accept: bool,
    #[pyo3(get)]
    reject_round: Option<u32>,
    #[pyo3(get)]
    reject_reason: Option<String>,
    #[pyo3(get)]
    total_bits: u64,
    #[pyo3(get)]
    claim: (f64, f64),
    #[pyo3(get)]
    transcript_jsonl: String,
}

#[pymethods]
impl PySessionResult {
    fn __repr__(&self) -> String {
        match self.reject_round {
            None => "SessionResult(accept)".into(),
            Some(r) => format!("SessionResult(reject at round {r})"),
        }
    }
}

fn strategy_from_str(s: &str) -> PyResult<(Strategy, ClaimSpec)> {
    match s {
        "honest" => Ok((Strategy::Honest, ClaimSpec::Honest)),
        "constant-offset" => Ok((Strategy::ConstantOffset, ClaimSpec::OffsetByK)),
        "spread-error" => Ok((Strategy::SpreadError, ClaimSpec::OffsetByK)),
        other => Err(PyValueError::new_err(format!("unknown strategy '{other}'"))),
    }
}

/// Run one interactive session and return its outcome with the transcript.
#[pyfunction]
#[pyo3(signature = (circuit, params, seed, strategy = "honest"))]
fn run_session(
    circuit: &PyCircuit,
    params: &PyParams,
    seed: u64,
    strategy: &str,
) -> PyResult<PySessionResult> {
    let (strat, claim) = strategy_from_str(strategy)?;
    let mut prover =
        SimulatorProver::new(&circuit.inner, &params.inner, strat, claim).map_err(err)?;
    let tr = run_protocol(&circuit.inner, &params.inner, &mut prover, seed).map_err(err)?;
    let (reject_round, reject_reason) = match &tr.verdict {
        Verdict::Accept => (None, None),
        Verdict::Reject { round, reason } => (Some(*round), Some(reason.clone())),
    };
    let claim_value = tr
        .messages
        .iter()
        .find_map(|m| match &m.payload {
            toprow::protocol::Payload::Claim(c) => Some(c.to_f64_pair()),
            _ => None,
        })
        .unwrap_or((0.0, 0.0));
    let mut buf = Vec::new();
    tr.write_jsonl(&mut buf).map_err(err)?;
    Ok(PySessionResult {
        accept: tr.verdict.is_accept(),
        reject_round,
        reject_reason,
        total_bits: tr.total_bits(),
        claim: claim_value,
        transcript_jsonl: String::from_utf8(buf).map_err(err)?,
    })
}

/// Two-trace decision for a circuit with postselection qubit 1 and answer
/// qubit 2, with honest provers: "accept", "reject", "caught-cheating", or
/// "indeterminate".
#[pyfunction]
fn decide_postbqp(circuit: &PyCircuit, seed: u64) -> PyResult<String> {
    let mut factory = honest_factory();
    let outcome = decide_postbqp_rs(&circuit.inner, &mut factory, seed).map_err(err)?;
    Ok(match outcome {
        PostBqpOutcome::Accept => "accept",
        PostBqpOutcome::Reject => "reject",
        PostBqpOutcome::CaughtCheating => "caught-cheating",
        PostBqpOutcome::Indeterminate => "indeterminate",
    }
    .into())
}

/// Run a Monte Carlo experiment from its JSON spec; returns the report JSON.
#[pyfunction]
fn run_experiment(spec_json: &str) -> PyResult<String> {
    let spec: ExperimentSpec = serde_json::from_str(spec_json).map_err(err)?;
    let report = run_experiment_rs(&spec).map_err(err)?;
    report.to_json().map_err(err)
}

#[pymodule]
fn toprow_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyCircuit>()?;
    m.add_class::<PyParams>()?;
    m.add_class::<PySessionResult>()?;
    m.add_function(wrap_pyfunction!(run_session, m)?)?;
    m.add_function(wrap_pyfunction!(decide_postbqp, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
