//! Circuits over the {H, X, CNOT, TOFFOLI} gate set, the top-row-matrix
//! construction, a statevector simulator, and the two reductions that turn
//! circuit-acceptance questions into top-row traces.

use std::fmt::Write as _;

use num_bigint::BigInt;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::fixed::{inv_sqrt2, FixedComplex, FixedReal};
use crate::linalg::DenseOperator;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GateKind {
    H,
    X,
    Cnot,
    Toffoli,
}

impl GateKind {
    pub fn arity(self) -> usize {
        match self {
            GateKind::H | GateKind::X => 1,
            GateKind::Cnot => 2,
            GateKind::Toffoli => 3,
        }
    }

    fn token(self) -> &'static str {
        match self {
            GateKind::H => "H",
            GateKind::X => "X",
            GateKind::Cnot => "CNOT",
            GateKind::Toffoli => "TOFFOLI",
        }
    }
}

/// A gate application. Every kind in the set is self-inverse, so the
/// `adjoint` flag never changes the matrix; it is kept so that reduction
/// outputs read naturally and round-trip exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gate {
    pub kind: GateKind,
    pub adjoint: bool,
    /// For CNOT the control comes first; for TOFFOLI the two controls do.
    pub targets: Vec<u32>,
}

impl Gate {
    pub fn new(kind: GateKind, targets: Vec<u32>) -> Result<Self> {
        Self::with_adjoint(kind, targets, false)
    }

    pub fn with_adjoint(kind: GateKind, targets: Vec<u32>, adjoint: bool) -> Result<Self> {
        if targets.len() != kind.arity() {
            return Err(Error::Input(format!(
                "{} takes {} targets, got {:?}",
                kind.token(),
                kind.arity(),
                targets
            )));
        }
        let mut sorted = targets.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != targets.len() {
            return Err(Error::Input(format!("duplicate targets in {targets:?}")));
        }
        Ok(Self { kind, adjoint, targets })
    }

    /// Dense matrix on this gate's own targets (control qubits most
    /// significant). Self-inverse and real, so the adjoint flag is moot.
    pub fn matrix(&self, p: u32) -> DenseOperator {
        let one = FixedComplex::one(p);
        let zero = FixedComplex::zero(p);
        match self.kind {
            GateKind::H => {
                let h = FixedComplex::from_real(inv_sqrt2(p));
                DenseOperator::from_entries(
                    self.targets.clone(),
                    vec![h.clone(), h.clone(), h.clone(), h.neg()],
                    p,
                )
                .unwrap()
            }
            GateKind::X => DenseOperator::from_entries(
                self.targets.clone(),
                vec![zero.clone(), one.clone(), one, zero],
                p,
            )
            .unwrap(),
            GateKind::Cnot => {
                Self::permutation(&self.targets, &[0, 1, 3, 2], p)
            }
            GateKind::Toffoli => {
                Self::permutation(&self.targets, &[0, 1, 2, 3, 4, 5, 7, 6], p)
            }
        }
    }

    fn permutation(labels: &[u32], perm: &[usize], p: u32) -> DenseOperator {
        let mut op = DenseOperator::zero(labels.to_vec(), p);
        for (col, &row) in perm.iter().enumerate() {
            *op.entry_mut(row, col) = FixedComplex::one(p);
        }
        op
    }

    fn token_string(&self) -> String {
        let mut s = self.kind.token().to_string();
        if self.adjoint {
            s.push('\'');
        }
        s
    }
}

/// Gates are listed in application order: `gates[0]` acts on the state first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Circuit {
    pub n: u32,
    pub gates: Vec<Gate>,
}

impl Circuit {
    pub fn new(n: u32, gates: Vec<Gate>) -> Result<Self> {
        if n == 0 {
            return Err(Error::Input("circuit needs at least one qubit".into()));
        }
        if gates.is_empty() {
            return Err(Error::Input("circuit needs at least one gate".into()));
        }
        for g in &gates {
            for &t in &g.targets {
                if t == 0 || t > n {
                    return Err(Error::Input(format!(
                        "target {t} out of range 1..={n}"
                    )));
                }
            }
        }
        Ok(Self { n, gates })
    }

    pub fn len(&self) -> usize {
        self.gates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gates.is_empty()
    }
}

/// A gate padded out to exactly three target qubits, identity on the padding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CanonicalGate {
    pub gate: Gate,
    /// Always three labels, sorted ascending.
    pub padded_targets: [u32; 3],
}

impl CanonicalGate {
    /// Dense 8x8 matrix on `padded_targets`.
    pub fn operator(&self, p: u32) -> DenseOperator {
        self.gate.matrix(p).embed(&self.padded_targets).unwrap()
    }
}

/// Pad every gate to three targets using the lowest-index qubits it does not
/// already touch.
pub fn canonicalize(c: &Circuit) -> Result<Vec<CanonicalGate>> {
    if c.n < 3 {
        return Err(Error::Input(format!(
            "canonicalization needs n >= 3 qubits, circuit has {}",
            c.n
        )));
    }
    Ok(c.gates
        .iter()
        .map(|g| {
            let mut padded: Vec<u32> = g.targets.clone();
            let mut candidate = 1u32;
            while padded.len() < 3 {
                if !padded.contains(&candidate) {
                    padded.push(candidate);
                }
                candidate += 1;
            }
            padded.sort_unstable();
            CanonicalGate { gate: g.clone(), padded_targets: [padded[0], padded[1], padded[2]] }
        })
        .collect())
}

/// Reference oracle: the full `2^n x 2^n` matrix `|0^n><0^n| G_T ... G_1`.
/// Exponential in `n`; only the projector's surviving row is ever nonzero.
pub fn top_row_matrix(c: &Circuit, p: u32) -> Result<DenseOperator> {
    if c.n > 14 {
        return Err(Error::Input(format!(
            "top_row_matrix limited to 14 qubits, circuit has {}",
            c.n
        )));
    }
    let register: Vec<u32> = (1..=c.n).collect();
    let mut m = DenseOperator::zero_projector(register.clone(), p);
    // |0><0| G_T ... G_1 accumulated right-to-left: ((|0><0| G_T) G_{T-1}) ...
    for g in c.gates.iter().rev() {
        m = m.matmul(&g.matrix(p).embed(&register)?)?;
    }
    Ok(m)
}

/// Statevector on `n` qubits; qubit 1 is the most significant index bit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StateVector {
    n: u32,
    amps: Vec<FixedComplex>,
}

impl StateVector {
    pub fn zero_state(n: u32, p: u32) -> Self {
        let mut amps = vec![FixedComplex::zero(p); 1 << n];
        amps[0] = FixedComplex::one(p);
        Self { n, amps }
    }

    pub fn num_qubits(&self) -> u32 {
        self.n
    }

    pub fn amps(&self) -> &[FixedComplex] {
        &self.amps
    }

    pub fn amp(&self, idx: usize) -> &FixedComplex {
        &self.amps[idx]
    }

    fn bit_mask(&self, label: u32) -> usize {
        1usize << (self.n - label)
    }

    /// Apply one gate in place. Arithmetic is the same fixed-point
    /// multiply/add the dense path uses, so permutation gates are exact and
    /// Hadamards truncate identically.
    pub fn apply_gate(&mut self, g: &Gate) {
        match g.kind {
            GateKind::H => {
                let m = self.bit_mask(g.targets[0]);
                let h = inv_sqrt2(self.amps[0].precision());
                let h = FixedComplex::from_real(h);
                for i in 0..self.amps.len() {
                    if i & m == 0 {
                        let a0 = self.amps[i].clone();
                        let a1 = self.amps[i | m].clone();
                        self.amps[i] = h.mul(&a0).add(&h.mul(&a1));
                        self.amps[i | m] = h.mul(&a0).sub(&h.mul(&a1));
                    }
                }
            }
            GateKind::X => {
                let m = self.bit_mask(g.targets[0]);
                for i in 0..self.amps.len() {
                    if i & m == 0 {
                        self.amps.swap(i, i | m);
                    }
                }
            }
            GateKind::Cnot => {
                let c = self.bit_mask(g.targets[0]);
                let t = self.bit_mask(g.targets[1]);
                for i in 0..self.amps.len() {
                    if i & c != 0 && i & t == 0 {
                        self.amps.swap(i, i | t);
                    }
                }
            }
            GateKind::Toffoli => {
                let c1 = self.bit_mask(g.targets[0]);
                let c2 = self.bit_mask(g.targets[1]);
                let t = self.bit_mask(g.targets[2]);
                for i in 0..self.amps.len() {
                    if i & c1 != 0 && i & c2 != 0 && i & t == 0 {
                        self.amps.swap(i, i | t);
                    }
                }
            }
        }
    }

    /// Apply an arbitrary 2x2 operator to one qubit.
    pub fn apply_single_qubit(&mut self, label: u32, m: &DenseOperator) {
        assert_eq!(m.dim(), 2);
        let mask = self.bit_mask(label);
        for i in 0..self.amps.len() {
            if i & mask == 0 {
                let a0 = self.amps[i].clone();
                let a1 = self.amps[i | mask].clone();
                self.amps[i] = m.entry(0, 0).mul(&a0).add(&m.entry(0, 1).mul(&a1));
                self.amps[i | mask] = m.entry(1, 0).mul(&a0).add(&m.entry(1, 1).mul(&a1));
            }
        }
    }

    pub fn run(&mut self, c: &Circuit) {
        for g in &c.gates {
            self.apply_gate(g);
        }
    }

    /// Probability that the listed qubits all measure 0 (exact sum of
    /// truncated squared moduli).
    pub fn prob_all_zero(&self, labels: &[u32]) -> FixedReal {
        let mask: usize = labels.iter().map(|&l| self.bit_mask(l)).sum();
        let p = self.amps[0].precision();
        let mut acc = BigInt::from(0);
        for (i, a) in self.amps.iter().enumerate() {
            if i & mask == 0 {
                acc += a.re.mantissa() * a.re.mantissa() + a.im.mantissa() * a.im.mantissa();
            }
        }
        // scale 2^-2p down to 2^-p, toward zero (all terms nonnegative)
        FixedReal::from_mantissa(acc >> p, p)
    }

    /// `<other|self>` with exact accumulation of truncated products.
    pub fn inner_product(&self, other: &Self) -> FixedComplex {
        let p = self.amps[0].precision();
        let mut acc = FixedComplex::zero(p);
        for (a, b) in self.amps.iter().zip(&other.amps) {
            acc = acc.add(&b.conj().mul(a));
        }
        acc
    }
}

/// Claim-2.4-style reduction: the returned circuit on `n+1` qubits has
/// top-row trace equal to the probability that `c` leaves qubit 1 in |0>.
pub fn qcircuit_reduction(c: &Circuit) -> Result<Circuit> {
    reduction_with_ancillas(c, &[1])
}

fn reduction_with_ancillas(c: &Circuit, projected: &[u32]) -> Result<Circuit> {
    let n = c.n + projected.len() as u32;
    let mut gates = c.gates.clone();
    for (i, &q) in projected.iter().enumerate() {
        gates.push(Gate::new(GateKind::Cnot, vec![q, c.n + 1 + i as u32])?);
    }
    for g in c.gates.iter().rev() {
        gates.push(Gate::with_adjoint(g.kind, g.targets.clone(), !g.adjoint)?);
    }
    Circuit::new(n, gates)
}

/// Build the two circuits whose top-row traces give the numerator and
/// denominator of the postselected acceptance ratio. Qubit 1 is the
/// postselection qubit and qubit 2 the answer qubit, so
/// `tr(top_row(c_y)) = Pr(q1=0 and q2=0)` and `tr(top_row(c_z)) = Pr(q1=0)`.
pub fn postbqp_trace_pair(c: &Circuit) -> Result<(Circuit, Circuit)> {
    if c.n < 2 {
        return Err(Error::Input(
            "trace-pair reduction needs a postselection and an answer qubit".into(),
        ));
    }
    let c_y = reduction_with_ancillas(c, &[1, 2])?;
    let c_z = reduction_with_ancillas(c, &[1])?;
    Ok((c_y, c_z))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Accept,
    Reject,
    Indeterminate,
}

/// Threshold the estimated ratio `y/z` against `1/2 ± 0.01`, exactly in
/// integer arithmetic on the mantissas.
pub fn decide_from_trace_estimates(y_est: &FixedReal, z_est: &FixedReal) -> Decision {
    use num_traits::Zero;
    if z_est.mantissa() <= &BigInt::zero() {
        return Decision::Indeterminate;
    }
    // align the two scales exactly: compare 100 y 2^pz against {51,49} z 2^py
    let hundred_y = (y_est.mantissa() * 100) << z_est.precision();
    let z = z_est.mantissa() << y_est.precision();
    if hundred_y > &z * 51 {
        Decision::Accept
    } else if hundred_y < &z * 49 {
        Decision::Reject
    } else {
        Decision::Indeterminate
    }
}

pub fn parse_circuit(text: &str) -> Result<Circuit> {
    let mut n: Option<u32> = None;
    let mut gates = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        let head = parts.next().unwrap();
        let err = |msg: String| Error::Parse { line: line_no, msg };
        match head {
            "qubits" => {
                if n.is_some() {
                    return Err(err("duplicate qubits declaration".into()));
                }
                let v: u32 = parts
                    .next()
                    .ok_or_else(|| err("missing qubit count".into()))?
                    .parse()
                    .map_err(|e| err(format!("bad qubit count: {e}")))?;
                if parts.next().is_some() {
                    return Err(err("trailing tokens after qubit count".into()));
                }
                n = Some(v);
            }
            "gate" => {
                if n.is_none() {
                    return Err(err("gate before qubits declaration".into()));
                }
                let kind_tok = parts.next().ok_or_else(|| err("missing gate kind".into()))?;
                let (kind_name, adjoint) = match kind_tok.strip_suffix('\'') {
                    Some(base) => (base, true),
                    None => (kind_tok, false),
                };
                let kind = match kind_name {
                    "H" => GateKind::H,
                    "X" => GateKind::X,
                    "CNOT" => GateKind::Cnot,
                    "TOFFOLI" => GateKind::Toffoli,
                    other => return Err(err(format!("unknown gate kind {other:?}"))),
                };
                let targets: Vec<u32> = parts
                    .map(|t| t.parse().map_err(|e| err(format!("bad target {t:?}: {e}"))))
                    .collect::<Result<_>>()?;
                let gate =
                    Gate::with_adjoint(kind, targets, adjoint).map_err(|e| err(e.to_string()))?;
                for &t in &gate.targets {
                    if t == 0 || t > n.unwrap() {
                        return Err(err(format!("target {t} out of range")));
                    }
                }
                gates.push(gate);
            }
            other => return Err(err(format!("unknown directive {other:?}"))),
        }
    }
    let n = n.ok_or(Error::Parse { line: 0, msg: "missing qubits declaration".into() })?;
    Circuit::new(n, gates).map_err(|e| Error::Parse { line: 0, msg: e.to_string() })
}

pub fn serialize_circuit(c: &Circuit) -> String {
    let mut out = format!("qubits {}\n", c.n);
    for g in &c.gates {
        let _ = write!(out, "gate {}", g.token_string());
        for t in &g.targets {
            let _ = write!(out, " {t}");
        }
        out.push('\n');
    }
    out
}

/// Uniform random circuit over the full gate set (no adjoint flags), for
/// experiments and stress tests.
pub fn random_circuit<R: Rng>(rng: &mut R, n: u32, t: usize) -> Circuit {
    assert!(n >= 3 && t >= 1);
    let gates = (0..t)
        .map(|_| {
            let kind = match rng.gen_range(0..4) {
                0 => GateKind::H,
                1 => GateKind::X,
                2 => GateKind::Cnot,
                _ => GateKind::Toffoli,
            };
            let mut pool: Vec<u32> = (1..=n).collect();
            let mut targets = Vec::new();
            for _ in 0..kind.arity() {
                targets.push(pool.swap_remove(rng.gen_range(0..pool.len())));
            }
            Gate::new(kind, targets).unwrap()
        })
        .collect();
    Circuit::new(n, gates).unwrap()
}
