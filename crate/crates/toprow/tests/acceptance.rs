//! Full acceptance gate: every release-blocking property at its stated
//! tolerance, one printed pass/fail line per criterion. Monte Carlo scales
//! here are the real ones, so this target runs for a few minutes.

use num_bigint::BigInt;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use toprow::circuit::{
    decide_from_trace_estimates, postbqp_trace_pair, qcircuit_reduction, random_circuit,
    top_row_matrix, Decision, StateVector,
};
use toprow::experiment::{measure_claim_chains, run_experiment, ExperimentSpec};
use toprow::fixed::{FixedComplex, FixedReal, PrecisionContext};
use toprow::linalg::{DenseOperator, QubitSet};
use toprow::protocol::{final_trace_factorized, ProtocolParams, Strategy};
use toprow::sampling::sample_local_unitary;

fn report(idx: u32, label: &str, result: Result<String, String>) {
    match result {
        Ok(detail) => println!("[{idx:2}] {label}: pass ({detail})"),
        Err(msg) => {
            println!("[{idx:2}] {label}: FAIL ({msg})");
            panic!("criterion {idx} failed: {msg}");
        }
    }
}

fn random_operator(rng: &mut ChaCha20Rng, labels: Vec<u32>, p: u32) -> DenseOperator {
    let dim = 1usize << labels.len();
    let mut d = DenseOperator::zero(labels, p);
    let bound = 1i64 << 30;
    for r in 0..dim {
        for c in 0..dim {
            let re = BigInt::from(rng.gen_range(-bound..=bound)) << (p - 30);
            let im = BigInt::from(rng.gen_range(-bound..=bound)) << (p - 30);
            *d.entry_mut(r, c) =
                FixedComplex::new(FixedReal::from_mantissa(re, p), FixedReal::from_mantissa(im, p));
        }
    }
    d
}

#[test]
fn c01_completeness_exact_profile() {
    let mut worst = 0.0f64;
    for (n, t) in [(3u32, 1u32), (3, 2), (4, 3), (4, 4), (5, 4)] {
        let spec = ExperimentSpec::Completeness { n, t, trials: 100, seed: 0xacc0 + t as u64 };
        let rep = run_experiment(&spec).unwrap();
        let accepted = rep.aggregates["accepted"];
        if !rep.passed || accepted != 100.0 {
            report(1, "completeness", Err(format!("(n={n},T={t}) accepted {accepted}/100")));
        }
        worst = worst.max(rep.aggregates["worst_slack"]);
    }
    report(1, "completeness", Ok(format!("5 configs x 100 honest runs, worst slack {worst:.2e}")));
}

#[test]
fn c02_soundness_both_strategies() {
    let mut freqs = Vec::new();
    for (n, t) in [(3u32, 2u32), (4, 3)] {
        for strategy in [Strategy::ConstantOffset, Strategy::SpreadError] {
            let spec =
                ExperimentSpec::Soundness { n, t, trials: 300, seed: 0x50d + n as u64, strategy };
            let rep = run_experiment(&spec).unwrap();
            let freq = rep.aggregates["acceptance_frequency"];
            if !rep.passed {
                report(2, "soundness", Err(format!("(n={n},T={t}) {strategy:?} freq {freq}")));
            }
            freqs.push(freq);
        }
    }
    let worst = freqs.iter().cloned().fold(0.0f64, f64::max);
    report(2, "soundness", Ok(format!("4 cells x 300 cheating runs, worst frequency {worst:.3}")));
}

#[test]
fn c03_small_ball_tails() {
    let mut worst_margin = f64::INFINITY;
    for n_prime in [1u32, 2, 3] {
        for m in [4u32, 8, 16, 32] {
            let spec =
                ExperimentSpec::Lemma4 { n_prime, m, trials: 10_000, seed: 0x7a11, deltas: 5 };
            let rep = run_experiment(&spec).unwrap();
            for c in &rep.checks {
                if !c.ok {
                    report(
                        3,
                        "small-ball tails",
                        Err(format!(
                            "n'={n_prime} m={m}: {} = {:.4} > {:.4}+{:.4}",
                            c.name, c.empirical, c.bound, c.slack
                        )),
                    );
                }
                worst_margin = worst_margin.min(c.bound + c.slack - c.empirical);
            }
        }
    }
    report(
        3,
        "small-ball tails",
        Ok(format!("12 cells x 1e4 samples x 5 deltas, min margin {worst_margin:.4}")),
    );
}

#[test]
fn c04_trace_never_exactly_zero() {
    let spec = ExperimentSpec::Lemma1 { trials: 100_000, seed: 0x2e10, deltas: 5 };
    let rep = run_experiment(&spec).unwrap();
    let zeros = rep.aggregates["exact_zeros"];
    let min_mod = rep.aggregates["min_trace_modulus"];
    if !rep.passed || zeros != 0.0 {
        report(4, "fine-grid trace zeros", Err(format!("{zeros} exact zeros")));
    }
    report(
        4,
        "fine-grid trace zeros",
        Ok(format!("1e5 draws x 5 deltas at p=256, min |trace| {min_mod:.2e}")),
    );
}

#[test]
fn c05_error_chains() {
    let mut rows = 0usize;
    for run in 0..50u64 {
        let (n, t) = if run % 2 == 0 { (3, 2) } else { (4, 3) };
        let chain = measure_claim_chains(n, t, 0xc4a1 + run).unwrap();
        if !chain.passed {
            let bad = chain.rows.iter().find(|r| !r.ok).unwrap();
            report(
                5,
                "error chains",
                Err(format!(
                    "run {run} (n={n},T={t}): {} round {} deviation {:.2e} > {:.2e}",
                    bad.claim, bad.round, bad.deviation, bad.bound
                )),
            );
        }
        rows += chain.rows.len();
    }
    report(5, "error chains", Ok(format!("50 honest runs, {rows} measured deviations in bound")));
}

#[test]
fn c06_final_trace_vs_brute_force() {
    let mut rng = ChaCha20Rng::seed_from_u64(0xfac7);
    let xi_exp = 40i32;
    let ctx = PrecisionContext::new(48);
    let mut worst_ratio = 0.0f64;
    for hist in 0..100 {
        let n = rng.gen_range(3..=5u32);
        let t = rng.gen_range(1..=6usize);
        let mut history = Vec::new();
        for _ in 0..t {
            let mut pool: Vec<u32> = (1..=n).collect();
            let mut targets = [0u32; 3];
            for slot in targets.iter_mut() {
                *slot = pool.swap_remove(rng.gen_range(0..pool.len()));
            }
            targets.sort_unstable();
            history.push(sample_local_unitary(&mut rng, targets, xi_exp).unwrap());
        }
        let fast = final_trace_factorized(n, &history, &ctx);
        let register: Vec<u32> = (1..=n).collect();
        let mut acc = DenseOperator::zero_projector(register.clone(), ctx.p);
        for desc in &history {
            acc = desc.realize(&ctx).embed(&register).unwrap().matmul(&acc).unwrap();
        }
        let dev = fast.sub(&acc.trace()).modulus().to_f64();
        let bound = 2f64.powi(n as i32) * t as f64 * 2f64.powi(-xi_exp);
        if dev > bound {
            report(
                6,
                "factorized final trace",
                Err(format!("history {hist} (n={n},T={t}): {dev:.2e} > {bound:.2e}")),
            );
        }
        worst_ratio = worst_ratio.max(dev / bound);
    }
    report(
        6,
        "factorized final trace",
        Ok(format!("100 histories vs dense product, worst deviation {worst_ratio:.3} of bound")),
    );
}

#[test]
fn c07_reductions_and_decision_margins() {
    let p = 64u32;
    let tol = 2f64.powi(-(p as i32) + 16);
    let mut rng = ChaCha20Rng::seed_from_u64(0x2ed);
    let mut worst = 0.0f64;
    for i in 0..50 {
        let n = rng.gen_range(3..=4u32);
        let t = rng.gen_range(1..=5usize);
        let c = random_circuit(&mut rng, n, t);
        let mut sv = StateVector::zero_state(n, p);
        sv.run(&c);

        let r = qcircuit_reduction(&c).unwrap();
        let tr = top_row_matrix(&r, p).unwrap().trace().to_f64_pair().0;
        let prob = sv.prob_all_zero(&[1]).to_f64();
        let (cy, cz) = postbqp_trace_pair(&c).unwrap();
        let y = top_row_matrix(&cy, p).unwrap().trace().to_f64_pair().0;
        let z = top_row_matrix(&cz, p).unwrap().trace().to_f64_pair().0;
        let py = sv.prob_all_zero(&[1, 2]).to_f64();
        for (label, got, want) in
            [("qcircuit", tr, prob), ("pair_y", y, py), ("pair_z", z, prob)]
        {
            let dev = (got - want).abs();
            if dev > tol {
                report(
                    7,
                    "reductions",
                    Err(format!("circuit {i} {label}: |{got} - {want}| > {tol:.2e}")),
                );
            }
            worst = worst.max(dev);
        }
    }
    // decision margins at 1/2 +- 0.01, including mismatched precisions
    let fr = |num: i64, den: i64, prec: u32| {
        FixedReal::from_ratio(&BigInt::from(num), &BigInt::from(den), prec)
    };
    let cases = [
        (fr(52, 100, 128), fr(1, 1, 128), Decision::Accept),
        (fr(511, 1000, 128), fr(1, 1, 128), Decision::Accept),
        (fr(1, 2, 128), fr(1, 1, 128), Decision::Indeterminate),
        // exact boundary ratios: y/z = 51/100 and 49/100 with integer operands
        (fr(51, 1, 128), fr(100, 1, 128), Decision::Indeterminate),
        (fr(49, 1, 128), fr(100, 1, 128), Decision::Indeterminate),
        (fr(489, 1000, 128), fr(1, 1, 128), Decision::Reject),
        (fr(48, 100, 128), fr(1, 1, 128), Decision::Reject),
        (fr(26, 100, 100), fr(1, 2, 200), Decision::Accept),
        (fr(24, 100, 200), fr(1, 2, 100), Decision::Reject),
        (fr(1, 1, 128), fr(0, 1, 128), Decision::Indeterminate),
    ];
    for (i, (y, z, want)) in cases.iter().enumerate() {
        let got = decide_from_trace_estimates(y, z);
        if got != *want {
            report(7, "reductions", Err(format!("margin case {i}: {got:?} != {want:?}")));
        }
    }
    report(
        7,
        "reductions",
        Ok(format!("50 circuits vs statevector oracle, worst dev {worst:.2e}; 10 margin cases")),
    );
}

#[test]
fn c08_spread_error_decay() {
    // relaxed profile (mu = 2^-128, xi = 2^-192): labeled as such; the exact
    // profile's chi makes the per-round ratio astronomically small either way
    let mut summary = Vec::new();
    for t in [4u32, 6] {
        let spec = ExperimentSpec::DeltaTrajectory { n: 3, t, runs: 100, seed: 0xdeca, relaxed: true };
        let rep = run_experiment(&spec).unwrap();
        let decay = rep.aggregates["decay_factor"];
        let lo = rep.aggregates["decay_ci_low"];
        let hi = rep.aggregates["decay_ci_high"];
        if !rep.passed || !(decay < 1.0) || !(hi < 1.0) {
            report(8, "spread-error decay", Err(format!("T={t}: decay {decay:.3e} CI [{lo:.3e}, {hi:.3e}]")));
        }
        summary.push(format!("T={t} decay {decay:.2e} CI [{lo:.2e},{hi:.2e}]"));
    }
    report(8, "spread-error decay", Ok(format!("relaxed profile, 100 runs each: {}", summary.join("; "))));
}

#[test]
fn c09_linear_algebra_property_suite() {
    use proptest::test_runner::{Config, TestCaseError, TestRunner};

    let p = 64u32;
    let tol = 2f64.powi(-(p as i32) + 8);
    let mut runner = TestRunner::new(Config {
        cases: 275,
        failure_persistence: None,
        ..Config::default()
    });
    let result = runner.run(&proptest::prelude::any::<u64>(), |seed| {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let n = rng.gen_range(2..=5u32);
        let register: Vec<u32> = (1..=n).collect();
        let u = random_operator(&mut rng, register.clone(), p);
        let a = random_operator(&mut rng, register.clone(), p);

        // reduction commutes with a factor supported inside the kept set
        let q_size = rng.gen_range(1..=n.min(2));
        let mut pool = register.clone();
        let mut kept = Vec::new();
        for _ in 0..q_size {
            kept.push(pool.swap_remove(rng.gen_range(0..pool.len())));
        }
        kept.sort_unstable();
        let q = random_operator(&mut rng, kept.clone(), p);
        let keep = QubitSet::new(kept).unwrap();
        let lhs = u
            .matmul(&q.embed(&register).unwrap())
            .unwrap()
            .partial_trace(&keep)
            .unwrap();
        let rhs = u.partial_trace(&keep).unwrap().matmul(&q).unwrap();
        for r in 0..lhs.dim() {
            for c in 0..lhs.dim() {
                let dev = lhs.entry(r, c).sub(rhs.entry(r, c)).modulus().to_f64();
                if dev > tol {
                    return Err(TestCaseError::fail(format!(
                        "reduction/factor mismatch {dev:.2e} at n={n}"
                    )));
                }
            }
        }

        // partial trace preserves the trace exactly
        if u.partial_trace(&keep).unwrap().trace() != u.trace() {
            return Err(TestCaseError::fail(proptest::test_runner::Reason::from("partial trace changed the trace")));
        }

        // trace cyclicity under truncated matmul
        let cyc = u
            .matmul(&a)
            .unwrap()
            .trace()
            .sub(&a.matmul(&u).unwrap().trace())
            .modulus()
            .to_f64();
        if cyc > 2f64.powi(-(p as i32) + 13) {
            return Err(TestCaseError::fail(format!("tr(AB) != tr(BA): {cyc:.2e}")));
        }

        // adjoint anti-homomorphism is exact in truncated arithmetic
        let ab = u.matmul(&a).unwrap().adjoint();
        let ba = a.adjoint().matmul(&u.adjoint()).unwrap();
        for r in 0..ab.dim() {
            for c in 0..ab.dim() {
                if ab.entry(r, c) != ba.entry(r, c) {
                    return Err(TestCaseError::fail(proptest::test_runner::Reason::from("(AB)+ != B+A+")));
                }
            }
        }
        Ok(())
    });
    match result {
        Ok(()) => report(
            9,
            "linear-algebra properties",
            Ok("275 cases x 4 identities (1100 instances), zero failures".into()),
        ),
        Err(e) => report(9, "linear-algebra properties", Err(format!("{e}"))),
    }
}

#[derive(serde::Deserialize)]
struct Golden {
    frozen_p_bits: std::collections::BTreeMap<String, u32>,
    transcript_total_bits: std::collections::BTreeMap<String, u64>,
}

fn golden() -> Golden {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/golden/derivation.json");
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn c10_communication_bound_and_golden_totals() {
    let gold = golden();
    for (n, t) in [(3u32, 1u32), (3, 2), (4, 3)] {
        let spec = ExperimentSpec::CommAccounting { n, t, runs: 5, seed: 0xb175 };
        let rep = run_experiment(&spec).unwrap();
        if !rep.passed {
            report(10, "communication bound", Err(format!("(n={n},T={t}) cap or stability check failed")));
        }
        let total = rep.aggregates["total_bits"] as u64;
        let want = gold.transcript_total_bits[&format!("n{n}_t{t}")];
        if total != want {
            report(
                10,
                "communication bound",
                Err(format!("(n={n},T={t}) total {total} bits != golden {want}")),
            );
        }
    }
    report(10, "communication bound", Ok("3 configs x 5 runs under cap, totals match golden".into()));
}

#[test]
fn derived_precision_matches_golden() {
    let gold = golden();
    for (key, want) in &gold.frozen_p_bits {
        let (n, t) = key[1..].split_once("_t").unwrap();
        let params = ProtocolParams::derive(n.parse().unwrap(), t.parse().unwrap()).unwrap();
        assert_eq!(params.p, *want, "p for {key}");
    }
}
