//! The interactive-proof engine: parameter derivation, the verifier state
//! machine, simulator provers (honest and adversarial), transcripts, and the
//! higher-level decision procedures built on repeated runs.
//!
//! One session verifies a claimed value C for tr(|0^n><0^n| G_T ... G_1).
//! Round 0 the prover sends C and a reduced 8x8 matrix M'_0; each later
//! round the verifier samples a random local unitary, sends its grid
//! indices, and checks the prover's next matrix against a trace identity up
//! to the tolerance mu. After round T the verifier computes the trace of its
//! own accumulated random product in factorized form -- never touching any
//! 2^n-dimensional object -- and compares once more.

use std::io::{BufRead, Write};

use num_bigint::{BigInt, BigUint};
use num_traits::One;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::circuit::{
    canonicalize, postbqp_trace_pair, decide_from_trace_estimates, CanonicalGate, Circuit,
    Decision, Gate, GateKind, StateVector,
};
use crate::fixed::{div_trunc_pow2, FixedComplex, FixedReal, PrecisionContext};
use crate::linalg::DenseOperator;
use crate::sampling::{sample_local_unitary, LocalUnitaryDescriptor};
use crate::{Error, Result};

/// Above this precision a session is refused instead of started.
pub const DEFAULT_MAX_P: u32 = 16384;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ParamProfile {
    /// Exact tolerance chain; the only profile that counts for soundness
    /// claims.
    PaperExact,
    /// User-supplied tolerances for larger-T experiments; outputs are
    /// labeled experimental.
    Relaxed,
    /// The idealized protocol realized as a very fine grid (p = 256) with a
    /// near-zero tolerance.
    W,
}

/// All session parameters. The tolerance is the exact rational
/// `mu = 1/mu_den`; the grid spacing is the power of two `xi = 2^-xi_exp`,
/// snapped down so that `xi <= mu/(2^{2n+11} T)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub n: u32,
    pub t: u32,
    pub n_prime: u32,
    /// acceptance gap K = 1/k_den = 1/(10*2^n)
    #[serde(with = "crate::sampling::biguint_decimal")]
    pub k_den: BigUint,
    /// chi = 60^12 * T^9
    #[serde(with = "crate::sampling::biguint_decimal")]
    pub chi: BigUint,
    /// mu = 1/mu_den = K/(4 chi^T) = 1/(40 * 2^n * chi^T)
    #[serde(with = "crate::sampling::biguint_decimal")]
    pub mu_den: BigUint,
    pub xi_exp: i32,
    pub m: u32,
    pub p: u32,
    pub profile: ParamProfile,
}

fn ceil_log2(v: &BigUint) -> u64 {
    if v.count_ones() == 1 {
        v.bits() - 1
    } else {
        v.bits()
    }
}

impl ProtocolParams {
    /// Paper-exact derivation from the register size and gate count.
    pub fn derive(n: u32, t: u32) -> Result<Self> {
        Self::derive_capped(n, t, DEFAULT_MAX_P)
    }

    pub fn derive_capped(n: u32, t: u32, max_p: u32) -> Result<Self> {
        if n < 3 || t < 1 {
            return Err(Error::Input(format!("need n >= 3 and T >= 1, got n={n}, T={t}")));
        }
        let chi = BigUint::from(60u32).pow(12) * BigUint::from(t).pow(9);
        let k_den = BigUint::from(10u32) << n;
        let mu_den = (BigUint::from(40u32) << n) * chi.pow(t);
        // xi <= mu / (2^{2n+11} T), snapped down to a power of two
        let xi_den_target = (&mu_den * BigUint::from(t)) << (2 * n + 11);
        let xi_exp = ceil_log2(&xi_den_target) as i64;
        let p = (xi_exp + 4) as u64;
        if p > max_p as u64 {
            return Err(Error::ParamRefusal { required_p: p.min(u32::MAX as u64) as u32, max_p });
        }
        Ok(Self {
            n,
            t,
            n_prime: 3,
            k_den,
            chi,
            mu_den,
            xi_exp: xi_exp as i32,
            m: 60 * t,
            p: p as u32,
            profile: ParamProfile::PaperExact,
        })
    }

    /// Relaxed profile with explicit tolerances: mu = 2^-mu_pow,
    /// xi = 2^-xi_exp, p = xi_exp + 4.
    pub fn relaxed(n: u32, t: u32, mu_pow: u32, xi_exp: u32) -> Result<Self> {
        if n < 3 || t < 1 {
            return Err(Error::Input(format!("need n >= 3 and T >= 1, got n={n}, T={t}")));
        }
        if xi_exp < mu_pow {
            return Err(Error::Input("xi must be finer than mu".into()));
        }
        Ok(Self {
            n,
            t,
            n_prime: 3,
            k_den: BigUint::from(10u32) << n,
            chi: BigUint::from(60u32).pow(12) * BigUint::from(t).pow(9),
            mu_den: BigUint::one() << mu_pow,
            xi_exp: xi_exp as i32,
            m: 60 * t,
            p: xi_exp + 4,
            profile: ParamProfile::Relaxed,
        })
    }

    /// The idealized-protocol profile: fine fixed grid, tolerance 2^-200.
    pub fn w_mode(n: u32, t: u32) -> Result<Self> {
        let mut params = Self::relaxed(n, t, 200, 252)?;
        params.p = 256;
        params.profile = ParamProfile::W;
        Ok(params)
    }

    pub fn k_as_fixed(&self, p: u32) -> FixedReal {
        FixedReal::from_ratio(&BigInt::one(), &BigInt::from(self.k_den.clone()), p)
    }

    /// True iff `|z| <= mu`, decided exactly in integers.
    pub fn within_mu(&self, z: &FixedComplex) -> bool {
        z.modulus_le_ratio(&BigUint::one(), &self.mu_den)
    }

    /// Human-readable bit-size report.
    pub fn report(&self) -> String {
        format!(
            "n={} T={} profile={:?}\n  K   = 1/{}\n  chi = {} (~2^{})\n  mu  = 1/{} (~2^-{})\n  xi  = 2^-{}\n  m   = {}\n  p   = {} bits",
            self.n,
            self.t,
            self.profile,
            self.k_den,
            self.chi,
            self.chi.bits().saturating_sub(1),
            self.mu_den,
            ceil_log2(&self.mu_den),
            self.xi_exp,
            self.m,
            self.p
        )
    }

    /// Closed-form transcript bit cap.
    pub fn bit_cap(&self) -> u64 {
        (self.t as u64 + 1) * (64 * 2 * self.p as u64 * 64 + 9 * (self.p as u64 + 8)) + 1024
    }

    fn claim_bits(&self) -> u64 {
        2 * (self.p as u64 + 64)
    }

    fn matrix_bits(&self) -> u64 {
        128 * (self.p as u64 + 64)
    }

    fn unitary_bits(&self) -> u64 {
        9 * (self.p as u64 + 8)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Party {
    V,
    P,
}

/// An 8x8 message matrix in wire form: 64 complex entries, each a pair of
/// decimal mantissa strings at scale 2^-p.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixMsg {
    pub qubits: Vec<u32>,
    pub p: u32,
    pub entries: Vec<[String; 2]>,
}

impl MatrixMsg {
    pub fn from_operator(op: &DenseOperator) -> Self {
        Self {
            qubits: op.qubits().to_vec(),
            p: op.precision(),
            entries: op
                .entries()
                .iter()
                .map(|e| [e.re.mantissa().to_string(), e.im.mantissa().to_string()])
                .collect(),
        }
    }

    pub fn to_operator(&self) -> Result<DenseOperator> {
        let parse = |s: &str| -> Result<BigInt> {
            s.parse().map_err(|e| Error::Input(format!("bad mantissa {s:?}: {e}")))
        };
        let entries = self
            .entries
            .iter()
            .map(|[re, im]| {
                Ok(FixedComplex::new(
                    FixedReal::from_mantissa(parse(re)?, self.p),
                    FixedReal::from_mantissa(parse(im)?, self.p),
                ))
            })
            .collect::<Result<Vec<_>>>()?;
        DenseOperator::from_entries(self.qubits.clone(), entries, self.p)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "lowercase")]
pub enum Verdict {
    Accept,
    Reject { round: u32, reason: String },
}

impl Verdict {
    pub fn is_accept(&self) -> bool {
        matches!(self, Verdict::Accept)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Payload {
    Claim(FixedComplex),
    Matrix(MatrixMsg),
    Unitary(LocalUnitaryDescriptor),
    Verdict(Verdict),
    /// Wire-only: the verifier's session-opening message in two-process
    /// mode. Never recorded in transcripts.
    Start,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub round: u32,
    pub from: Party,
    pub payload: Payload,
    pub bits: u64,
}

#[derive(Serialize, Deserialize)]
struct WireMessage {
    round: u32,
    from: String,
    kind: String,
    payload: serde_json::Value,
    bits: u64,
}

impl Message {
    pub fn kind(&self) -> &'static str {
        match self.payload {
            Payload::Claim(_) => "claim",
            Payload::Matrix(_) => "matrix",
            Payload::Unitary(_) => "unitary",
            Payload::Verdict(_) => "verdict",
            Payload::Start => "start",
        }
    }

    pub fn to_json_line(&self) -> Result<String> {
        let payload = match &self.payload {
            Payload::Claim(c) => serde_json::to_value(c)?,
            Payload::Matrix(m) => serde_json::to_value(m)?,
            Payload::Unitary(u) => serde_json::to_value(u)?,
            Payload::Verdict(v) => serde_json::to_value(v)?,
            Payload::Start => serde_json::Value::Null,
        };
        let wire = WireMessage {
            round: self.round,
            from: match self.from {
                Party::V => "V".into(),
                Party::P => "P".into(),
            },
            kind: self.kind().into(),
            payload,
            bits: self.bits,
        };
        Ok(serde_json::to_string(&wire)?)
    }

    pub fn from_json_line(line: &str) -> Result<Self> {
        let wire: WireMessage = serde_json::from_str(line)?;
        let payload = match wire.kind.as_str() {
            "claim" => Payload::Claim(serde_json::from_value(wire.payload)?),
            "matrix" => Payload::Matrix(serde_json::from_value(wire.payload)?),
            "unitary" => Payload::Unitary(serde_json::from_value(wire.payload)?),
            "verdict" => Payload::Verdict(serde_json::from_value(wire.payload)?),
            "start" => Payload::Start,
            other => return Err(Error::Input(format!("unknown message kind {other:?}"))),
        };
        let from = match wire.from.as_str() {
            "V" => Party::V,
            "P" => Party::P,
            other => return Err(Error::Input(format!("unknown sender {other:?}"))),
        };
        Ok(Self { round: wire.round, from, payload, bits: wire.bits })
    }
}

/// A complete session record: every message in order plus the verdict and
/// per-round measured slack (the modulus of each checked difference).
#[derive(Debug, Clone)]
pub struct Transcript {
    pub seed: u64,
    pub params: ProtocolParams,
    pub messages: Vec<Message>,
    pub verdict: Verdict,
    pub round_slacks: Vec<FixedReal>,
    /// Peak number of fixed-point matrix entries the verifier held at once;
    /// independent of 2^n by construction, asserted in tests.
    pub verifier_peak_entries: usize,
}

impl Transcript {
    pub fn total_bits(&self) -> u64 {
        self.messages.iter().map(|m| m.bits).sum()
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        let header = serde_json::json!({
            "seed": self.seed,
            "params": self.params,
            "total_bits": self.total_bits(),
            "verifier_peak_entries": self.verifier_peak_entries,
        });
        writeln!(w, "{header}")?;
        for m in &self.messages {
            writeln!(w, "{}", m.to_json_line()?)?;
        }
        Ok(())
    }
}

/// The prover side of one session. `round_step` returns the next message
/// matrix for rounds `1..T` and `None` for the final round, where the
/// verifier checks on its own.
pub trait Prover {
    fn round0(&mut self) -> Result<(FixedComplex, DenseOperator)>;
    fn round_step(
        &mut self,
        round: u32,
        desc: &LocalUnitaryDescriptor,
    ) -> Result<Option<DenseOperator>>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Honest,
    /// Spread the initial claim error over the diagonal once and never
    /// update it; caught at the first consistency check.
    ConstantOffset,
    /// Re-spread the surviving error each round; passes every intermediate
    /// check and is caught by the final factorized trace.
    SpreadError,
}

#[derive(Debug, Clone)]
pub enum ClaimSpec {
    /// Claim the true value.
    Honest,
    /// Claim true value + K, the soundness-experiment offset.
    OffsetByK,
    Explicit(FixedComplex),
}

/// Exact rank-1 reduction `M[x,y] = sum_r psi[(x,r)] conj(phi[(y,r)])` onto
/// three target qubits: the prover's whole per-round work, O(2^n) instead
/// of O(4^n).
pub fn rank_one_reduction(
    psi: &StateVector,
    phi: &StateVector,
    targets: &[u32; 3],
) -> DenseOperator {
    let n = psi.num_qubits();
    let p = psi.amp(0).precision();
    let shifts: Vec<u32> = targets.iter().map(|&l| n - l).collect();
    let kept_mask: usize = shifts.iter().map(|&s| 1usize << s).sum();
    let rest: Vec<usize> =
        (0..1usize << n).filter(|i| i & kept_mask == 0).collect();
    let place = |sub: usize| -> usize {
        let mut idx = 0;
        for (bit_pos, &s) in shifts.iter().enumerate() {
            idx |= ((sub >> (2 - bit_pos)) & 1) << s;
        }
        idx
    };
    let mut m = DenseOperator::zero(targets.to_vec(), p);
    for x in 0..8 {
        for y in 0..8 {
            let mut acc = FixedComplex::zero(p);
            for &r in &rest {
                acc = acc.add(&psi.amp(place(x) | r).mul(&phi.amp(place(y) | r).conj()));
            }
            *m.entry_mut(x, y) = acc;
        }
    }
    m
}

/// Trace of the verifier's accumulated random product against the all-zeros
/// projector: the product over qubits of each 2x2 factor product's (0,0)
/// entry.
pub fn final_trace_factorized(
    n: u32,
    history: &[LocalUnitaryDescriptor],
    ctx: &PrecisionContext,
) -> FixedComplex {
    let mut w: Vec<DenseOperator> =
        (1..=n).map(|j| DenseOperator::identity(vec![j], ctx.p)).collect();
    for desc in history {
        for k in 0..3 {
            let j = desc.targets[k] as usize - 1;
            let factor = crate::sampling::realize_unitary(&desc.triples[k], desc.targets[k], ctx);
            w[j] = factor.matmul(&w[j]).unwrap();
        }
    }
    let mut acc = FixedComplex::one(ctx.p);
    for wj in &w {
        acc = acc.mul(wj.entry(0, 0));
    }
    acc
}

/// In-process prover holding the rank-1 factorization of the current A_i as
/// two statevectors.
pub struct SimulatorProver {
    params: ProtocolParams,
    ctx: PrecisionContext,
    gates: Vec<CanonicalGate>,
    psi: StateVector,
    phi: StateVector,
    strategy: Strategy,
    claim: ClaimSpec,
    /// Per-diagonal offset added to the honest matrix this round.
    offset: FixedComplex,
    /// delta_i trajectory (trace-level error), logged for experiments.
    pub delta_log: Vec<FixedComplex>,
}

impl SimulatorProver {
    pub fn new(
        circuit: &Circuit,
        params: &ProtocolParams,
        strategy: Strategy,
        claim: ClaimSpec,
    ) -> Result<Self> {
        if circuit.n != params.n || circuit.len() as u32 != params.t {
            return Err(Error::Input(format!(
                "params are for n={}, T={} but circuit has n={}, T={}",
                params.n,
                params.t,
                circuit.n,
                circuit.len()
            )));
        }
        let gates = canonicalize(circuit)?;
        let psi = StateVector::zero_state(circuit.n, params.p);
        let mut phi = StateVector::zero_state(circuit.n, params.p);
        // phi_0 = G_1^† ... G_T^† |0^n> (all gates self-inverse)
        for g in circuit.gates.iter().rev() {
            phi.apply_gate(g);
        }
        Ok(Self {
            params: params.clone(),
            ctx: PrecisionContext::new(params.p),
            gates,
            psi,
            phi,
            strategy,
            claim,
            offset: FixedComplex::zero(params.p),
            delta_log: Vec::new(),
        })
    }

    fn honest_matrix(&self, round: usize) -> DenseOperator {
        rank_one_reduction(&self.psi, &self.phi, &self.gates[round].padded_targets)
    }

    fn emit(&self, honest: &DenseOperator) -> DenseOperator {
        if matches!(self.strategy, Strategy::Honest) || self.offset.is_zero() {
            return honest.clone();
        }
        let mut m = honest.clone();
        for i in 0..8 {
            *m.entry_mut(i, i) = m.entry(i, i).add(&self.offset);
        }
        m
    }

    fn div8(v: &FixedComplex) -> FixedComplex {
        let p = v.precision();
        FixedComplex::new(
            FixedReal::from_mantissa(div_trunc_pow2(v.re.mantissa(), 3), p),
            FixedReal::from_mantissa(div_trunc_pow2(v.im.mantissa(), 3), p),
        )
    }
}

impl Prover for SimulatorProver {
    fn round0(&mut self) -> Result<(FixedComplex, DenseOperator)> {
        let m0 = self.honest_matrix(0);
        let honest_c = m0.trace();
        let c = match &self.claim {
            ClaimSpec::Honest => honest_c.clone(),
            ClaimSpec::OffsetByK => honest_c
                .add(&FixedComplex::from_real(self.params.k_as_fixed(self.params.p))),
            ClaimSpec::Explicit(v) => v.clone(),
        };
        let delta0 = c.sub(&honest_c);
        self.delta_log.push(delta0.clone());
        self.offset = Self::div8(&delta0);
        Ok((c, self.emit(&m0)))
    }

    fn round_step(
        &mut self,
        round: u32,
        desc: &LocalUnitaryDescriptor,
    ) -> Result<Option<DenseOperator>> {
        let i = round as usize;
        // advance the factorization: psi <- u_i psi, phi <- G_i phi
        for k in 0..3 {
            let u =
                crate::sampling::realize_unitary(&desc.triples[k], desc.targets[k], &self.ctx);
            self.psi.apply_single_qubit(desc.targets[k], &u);
        }
        self.phi.apply_gate(&self.gates[i - 1].gate);
        if round == self.params.t {
            return Ok(None);
        }
        match self.strategy {
            Strategy::Honest => {}
            Strategy::ConstantOffset => {
                // offset stays delta_0/8 forever
            }
            Strategy::SpreadError => {
                // delta_i = tr((offset * I) g_i^{-1} u_i) = offset * tr(g_i^{-1} u_i)
                let g_inv = self.gates[i - 1].operator(self.params.p);
                let tr = g_inv.matmul(&desc.realize(&self.ctx))?.trace();
                let delta = self.offset.mul(&tr);
                self.delta_log.push(delta.clone());
                self.offset = Self::div8(&delta);
            }
        }
        Ok(Some(self.emit(&self.honest_matrix(i))))
    }
}

/// Run one full session. Deterministic given the seed; the verifier samples
/// all randomness from a ChaCha20 stream.
pub fn run_protocol(
    circuit: &Circuit,
    params: &ProtocolParams,
    prover: &mut dyn Prover,
    seed: u64,
) -> Result<Transcript> {
    if circuit.n != params.n || circuit.len() as u32 != params.t {
        return Err(Error::Input("params do not match circuit".into()));
    }
    let gates = canonicalize(circuit)?;
    let t = params.t;
    let n = params.n;
    let ctx = PrecisionContext::new(params.p);
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut messages = Vec::new();
    let mut slacks = Vec::new();

    // The verifier's whole state: one 8x8 matrix, n 2x2 products, and
    // per-round 8x8 scratch. Tracked for the poly-work assertion.
    let peak_entries = 64 + 4 * n as usize + 3 * 64;

    let finish = |messages: Vec<Message>, slacks: Vec<FixedReal>, verdict: Verdict| {
        let mut messages = messages;
        messages.push(Message {
            round: match &verdict {
                Verdict::Reject { round, .. } => *round,
                Verdict::Accept => t,
            },
            from: Party::V,
            payload: Payload::Verdict(verdict.clone()),
            bits: 64,
        });
        Ok(Transcript {
            seed,
            params: params.clone(),
            messages,
            verdict,
            round_slacks: slacks,
            verifier_peak_entries: peak_entries,
        })
    };

    // round 0: prover sends C and M'_0
    let (claim, m0) = prover.round0()?;
    messages.push(Message {
        round: 0,
        from: Party::P,
        payload: Payload::Claim(claim.clone()),
        bits: params.claim_bits(),
    });
    messages.push(Message {
        round: 0,
        from: Party::P,
        payload: Payload::Matrix(MatrixMsg::from_operator(&m0)),
        bits: params.matrix_bits(),
    });
    if m0.qubits() != gates[0].padded_targets || m0.precision() != params.p {
        return finish(messages, slacks, Verdict::Reject {
            round: 0,
            reason: "malformed round-0 matrix".into(),
        });
    }
    let diff0 = claim.sub(&m0.trace());
    slacks.push(diff0.modulus());
    if !params.within_mu(&diff0) {
        return finish(messages, slacks, Verdict::Reject {
            round: 0,
            reason: "claim disagrees with tr(M'_0)".into(),
        });
    }

    let mut w: Vec<DenseOperator> =
        (1..=n).map(|j| DenseOperator::identity(vec![j], params.p)).collect();
    let mut m_prev = m0;

    for i in 1..=t {
        let targets = gates[i as usize - 1].padded_targets;
        let desc = sample_local_unitary(&mut rng, targets, params.xi_exp)?;
        messages.push(Message {
            round: i,
            from: Party::V,
            payload: Payload::Unitary(desc.clone()),
            bits: params.unitary_bits(),
        });
        for k in 0..3 {
            let j = targets[k] as usize - 1;
            let factor = crate::sampling::realize_unitary(&desc.triples[k], targets[k], &ctx);
            w[j] = factor.matmul(&w[j])?;
        }
        let g_inv = gates[i as usize - 1].operator(params.p);
        let rhs = m_prev.matmul(&g_inv)?.matmul(&desc.realize(&ctx))?.trace();

        let reply = prover.round_step(i, &desc)?;
        if i < t {
            let m_i = match reply {
                Some(m) => m,
                None => {
                    return finish(messages, slacks, Verdict::Reject {
                        round: i,
                        reason: "prover stopped early".into(),
                    })
                }
            };
            messages.push(Message {
                round: i,
                from: Party::P,
                payload: Payload::Matrix(MatrixMsg::from_operator(&m_i)),
                bits: params.matrix_bits(),
            });
            if m_i.qubits() != gates[i as usize].padded_targets || m_i.precision() != params.p {
                return finish(messages, slacks, Verdict::Reject {
                    round: i,
                    reason: "malformed matrix".into(),
                });
            }
            if m_i.any_entry_modulus_above_pow2(n) {
                return finish(messages, slacks, Verdict::Reject {
                    round: i,
                    reason: format!("entry modulus exceeds 2^{n}"),
                });
            }
            let diff = m_i.trace().sub(&rhs);
            slacks.push(diff.modulus());
            if !params.within_mu(&diff) {
                return finish(messages, slacks, Verdict::Reject {
                    round: i,
                    reason: "trace consistency check failed".into(),
                });
            }
            m_prev = m_i;
        } else {
            // final check against the factorized trace of the verifier's
            // own product
            let mut lhs = FixedComplex::one(params.p);
            for wj in &w {
                lhs = lhs.mul(wj.entry(0, 0));
            }
            let diff = lhs.sub(&rhs);
            slacks.push(diff.modulus());
            if !params.within_mu(&diff) {
                return finish(messages, slacks, Verdict::Reject {
                    round: t,
                    reason: "final trace check failed".into(),
                });
            }
        }
    }
    finish(messages, slacks, Verdict::Accept)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum PostBqpOutcome {
    Accept,
    Reject,
    CaughtCheating,
    Indeterminate,
}

/// Factory for provers, one per sub-session; lets callers inject
/// adversarial provers into the decision procedures.
pub type ProverFactory<'a> =
    dyn FnMut(&Circuit, &ProtocolParams) -> Result<Box<dyn Prover>> + 'a;

pub fn honest_factory() -> impl FnMut(&Circuit, &ProtocolParams) -> Result<Box<dyn Prover>> {
    |c, params| {
        Ok(Box::new(SimulatorProver::new(c, params, Strategy::Honest, ClaimSpec::Honest)?)
            as Box<dyn Prover>)
    }
}

/// Decide a postselected instance: build the two trace circuits, run the
/// protocol twice per trace, and threshold the verified claims. Any
/// rejection or claim inconsistency means the prover was caught.
pub fn decide_postbqp(
    c: &Circuit,
    make_prover: &mut ProverFactory,
    seed: u64,
) -> Result<PostBqpOutcome> {
    let (cy, cz) = postbqp_trace_pair(c)?;
    let mut claims = Vec::new();
    for (idx, rc) in [&cy, &cz].into_iter().enumerate() {
        let params = ProtocolParams::derive(rc.n, rc.len() as u32)?;
        let mut claim: Option<FixedComplex> = None;
        for rep in 0..2u64 {
            let run_seed = seed
                .wrapping_mul(0x9e3779b97f4a7c15)
                .wrapping_add(idx as u64 * 2 + rep);
            let mut prover = make_prover(rc, &params)?;
            let tr = run_protocol(rc, &params, prover.as_mut(), run_seed)?;
            if !tr.verdict.is_accept() {
                return Ok(PostBqpOutcome::CaughtCheating);
            }
            let this_claim = tr
                .messages
                .iter()
                .find_map(|m| match &m.payload {
                    Payload::Claim(v) => Some(v.clone()),
                    _ => None,
                })
                .ok_or_else(|| Error::Protocol("transcript missing claim".into()))?;
            match &claim {
                None => claim = Some(this_claim),
                Some(prev) if *prev != this_claim => {
                    return Ok(PostBqpOutcome::CaughtCheating)
                }
                _ => {}
            }
        }
        claims.push(claim.unwrap());
    }
    let (y, z) = (&claims[0], &claims[1]);
    Ok(match decide_from_trace_estimates(&y.re, &z.re) {
        Decision::Accept => PostBqpOutcome::Accept,
        Decision::Reject => PostBqpOutcome::Reject,
        Decision::Indeterminate => PostBqpOutcome::Indeterminate,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum OracleOutcome {
    Bits(Vec<bool>),
    Abort { query: usize },
}

/// The oracle-call schedule: each query's positive instance is repeated
/// ceil(log2 m)+2 times; on any failure the complement instance (answer
/// qubit flipped after the computation) gets the same treatment; if both
/// fail, abort. Failure probability against an honest-on-some-queries
/// cheater is at most 2m/3^{log2(m)+2} < 1/3.
pub fn oracle_orchestrator(
    queries: &[Circuit],
    make_prover: &mut ProverFactory,
    seed: u64,
) -> Result<OracleOutcome> {
    let m = queries.len();
    if m == 0 {
        return Ok(OracleOutcome::Bits(Vec::new()));
    }
    let reps = (m as f64).log2().ceil() as u64 + 2;
    let mut bits = Vec::with_capacity(m);
    'queries: for (qi, q) in queries.iter().enumerate() {
        let mut all_accept = true;
        for r in 0..reps {
            let s = seed.wrapping_add((qi as u64) << 32).wrapping_add(r * 1001);
            if decide_postbqp(q, make_prover, s)? != PostBqpOutcome::Accept {
                all_accept = false;
                break;
            }
        }
        if all_accept {
            bits.push(true);
            continue 'queries;
        }
        let complement = complement_query(q)?;
        for r in 0..reps {
            let s = seed
                .wrapping_add((qi as u64) << 32)
                .wrapping_add(0x8000_0000)
                .wrapping_add(r * 1001);
            if decide_postbqp(&complement, make_prover, s)? != PostBqpOutcome::Accept {
                return Ok(OracleOutcome::Abort { query: qi });
            }
        }
        bits.push(false);
    }
    Ok(OracleOutcome::Bits(bits))
}

/// The complement instance: flip the answer qubit after the computation.
pub fn complement_query(c: &Circuit) -> Result<Circuit> {
    if c.n < 2 {
        return Err(Error::Input("complement needs an answer qubit".into()));
    }
    let mut gates = c.gates.clone();
    gates.push(Gate::new(GateKind::X, vec![2])?);
    Circuit::new(c.n, gates)
}

/// Closed-form check of the orchestrator failure bound 2m/3^{log2 m + 2}.
pub fn orchestrator_failure_bound(m: u64) -> f64 {
    2.0 * m as f64 / 3f64.powf((m as f64).log2() + 2.0)
}

// ---------------------------------------------------------------------------
// Two-process mode: the same messages over a line-delimited byte stream.
// The verifier initiates with a `start` line; strict alternation follows.
// ---------------------------------------------------------------------------

/// Verifier-side adapter speaking to a prover over a duplex stream.
pub struct RemoteProver<R: BufRead, W: Write> {
    reader: R,
    writer: W,
    t: u32,
}

impl<R: BufRead, W: Write> RemoteProver<R, W> {
    pub fn new(reader: R, writer: W, t: u32) -> Self {
        Self { reader, writer, t }
    }

    fn send(&mut self, msg: &Message) -> Result<()> {
        writeln!(self.writer, "{}", msg.to_json_line()?)?;
        self.writer.flush()?;
        Ok(())
    }

    fn recv(&mut self) -> Result<Message> {
        let mut line = String::new();
        if self.reader.read_line(&mut line)? == 0 {
            return Err(Error::Protocol("prover closed the stream".into()));
        }
        Message::from_json_line(line.trim())
    }
}

impl<R: BufRead, W: Write> Prover for RemoteProver<R, W> {
    fn round0(&mut self) -> Result<(FixedComplex, DenseOperator)> {
        self.send(&Message { round: 0, from: Party::V, payload: Payload::Start, bits: 0 })?;
        let claim = match self.recv()?.payload {
            Payload::Claim(c) => c,
            other => {
                return Err(Error::Protocol(format!(
                    "expected claim, got {other:?}"
                )))
            }
        };
        let matrix = match self.recv()?.payload {
            Payload::Matrix(m) => m.to_operator()?,
            other => return Err(Error::Protocol(format!("expected matrix, got {other:?}"))),
        };
        Ok((claim, matrix))
    }

    fn round_step(
        &mut self,
        round: u32,
        desc: &LocalUnitaryDescriptor,
    ) -> Result<Option<DenseOperator>> {
        self.send(&Message {
            round,
            from: Party::V,
            payload: Payload::Unitary(desc.clone()),
            bits: 0,
        })?;
        if round == self.t {
            return Ok(None);
        }
        match self.recv()?.payload {
            Payload::Matrix(m) => Ok(Some(m.to_operator()?)),
            other => Err(Error::Protocol(format!("expected matrix, got {other:?}"))),
        }
    }
}

/// Prover-side loop for two-process mode: reads verifier messages, drives
/// the inner prover, replies until the stream closes.
pub fn serve_prover<R: BufRead, W: Write>(
    prover: &mut dyn Prover,
    t: u32,
    mut reader: R,
    mut writer: W,
) -> Result<()> {
    let mut send = |msg: Message| -> Result<()> {
        writeln!(writer, "{}", msg.to_json_line()?)?;
        writer.flush()?;
        Ok(())
    };
    loop {
        let mut line = String::new();
        if reader.read_line(&mut line)? == 0 {
            return Ok(());
        }
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let msg = Message::from_json_line(line)?;
        match msg.payload {
            Payload::Start => {
                let (claim, m0) = prover.round0()?;
                send(Message { round: 0, from: Party::P, payload: Payload::Claim(claim), bits: 0 })?;
                send(Message {
                    round: 0,
                    from: Party::P,
                    payload: Payload::Matrix(MatrixMsg::from_operator(&m0)),
                    bits: 0,
                })?;
            }
            Payload::Unitary(desc) => {
                if let Some(m) = prover.round_step(msg.round, &desc)? {
                    send(Message {
                        round: msg.round,
                        from: Party::P,
                        payload: Payload::Matrix(MatrixMsg::from_operator(&m)),
                        bits: 0,
                    })?;
                } else if msg.round == t {
                    // final round: nothing to send; keep looping for the
                    // verdict / stream close
                }
            }
            Payload::Verdict(_) => return Ok(()),
            other => return Err(Error::Protocol(format!("unexpected message {other:?}"))),
        }
    }
}
