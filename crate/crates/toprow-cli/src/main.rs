//! `toprow` command line: run protocol sessions, drive experiments, apply
//! the circuit reductions, and inspect parameter derivations.
//!
//! Exit status: 0 success / accept, 1 protocol rejection or violated bound,
//! 2 usage errors.

use std::fs;
use std::io::{BufReader, Write};
use std::path::PathBuf;
use std::process::{Command, Stdio};

use clap::{Args, Parser, Subcommand, ValueEnum};

use toprow::circuit::{parse_circuit, postbqp_trace_pair, qcircuit_reduction, serialize_circuit};
use toprow::experiment::{run_experiment, ExperimentSpec};
use toprow::protocol::{
    run_protocol, serve_prover, ClaimSpec, ProtocolParams, Prover, RemoteProver, SimulatorProver,
    Strategy, Verdict,
};

#[derive(Parser)]
#[command(name = "toprow", about = "Interactive-proof engine for top-row-matrix traces")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one protocol session against a circuit file.
    Run(RunArgs),
    /// Run a Monte Carlo experiment from a JSON spec.
    Experiment(ExperimentArgs),
    /// Apply a circuit reduction and write the result(s).
    Reduce(ReduceArgs),
    /// Print the derived parameter table for (n, T).
    Params(ParamsArgs),
    /// Run the built-in invariant suite.
    Selftest,
    /// Prover side of two-process mode; speaks the protocol on stdio.
    ProverStdio(ProverArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum StrategyArg {
    Honest,
    ConstantOffset,
    SpreadError,
}

impl From<StrategyArg> for Strategy {
    fn from(v: StrategyArg) -> Self {
        match v {
            StrategyArg::Honest => Strategy::Honest,
            StrategyArg::ConstantOffset => Strategy::ConstantOffset,
            StrategyArg::SpreadError => Strategy::SpreadError,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ProfileArg {
    /// Exact tolerance chain (the default).
    Paper,
    /// Idealized-protocol profile: p = 256, tolerance 2^-200.
    W,
    /// Experimental profile with user-supplied tolerances.
    Relaxed,
}

#[derive(Args, Clone)]
struct SessionArgs {
    /// Circuit file (text format).
    #[arg(long)]
    circuit: PathBuf,
    /// Claimed trace: "auto" (honest value) or "offset-k" (honest + K).
    #[arg(long, default_value = "auto")]
    claim: String,
    #[arg(long, value_enum, default_value = "honest")]
    strategy: StrategyArg,
    #[arg(long, value_enum, default_value = "paper")]
    profile: ProfileArg,
    /// mu = 2^-MU_POW (relaxed profile only).
    #[arg(long, default_value_t = 128)]
    mu_pow: u32,
    /// xi = 2^-XI_EXP (relaxed profile only).
    #[arg(long, default_value_t = 192)]
    xi_exp: u32,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    session: SessionArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the transcript (JSON lines) here.
    #[arg(long)]
    transcript: Option<PathBuf>,
    /// Spawn the prover as a separate process speaking on stdio.
    #[arg(long)]
    two_process: bool,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Inline JSON experiment spec.
    #[arg(long, conflicts_with = "spec_file")]
    spec: Option<String>,
    /// Path to a JSON experiment spec.
    #[arg(long)]
    spec_file: Option<PathBuf>,
    /// Write the full report as JSON.
    #[arg(long)]
    json: Option<PathBuf>,
    /// Write per-trial rows as CSV.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct ReduceArgs {
    #[command(subcommand)]
    which: ReduceCmd,
}

#[derive(Subcommand)]
enum ReduceCmd {
    /// Acceptance-probability reduction: L gates -> 2L+1 gates on n+1 qubits.
    Qcircuit {
        #[arg(long, name = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Postselection trace pair: write the numerator and denominator circuits.
    Postbqp {
        #[arg(long, name = "in")]
        input: PathBuf,
        #[arg(long)]
        out_y: PathBuf,
        #[arg(long)]
        out_z: PathBuf,
    },
}

#[derive(Args)]
struct ParamsArgs {
    #[arg(short)]
    n: u32,
    #[arg(short = 'T')]
    t: u32,
}

#[derive(Args)]
struct ProverArgs {
    #[command(flatten)]
    session: SessionArgs,
}

fn build_prover(args: &SessionArgs) -> Result<(toprow::circuit::Circuit, ProtocolParams, SimulatorProver), toprow::Error> {
    let text = fs::read_to_string(&args.circuit)?;
    let circuit = parse_circuit(&text)?;
    let t = circuit.len() as u32;
    let params = match args.profile {
        ProfileArg::Paper => ProtocolParams::derive(circuit.n, t)?,
        ProfileArg::W => ProtocolParams::w_mode(circuit.n, t)?,
        ProfileArg::Relaxed => {
            ProtocolParams::relaxed(circuit.n, t, args.mu_pow, args.xi_exp)?
        }
    };
    let claim = match args.claim.as_str() {
        "auto" => ClaimSpec::Honest,
        "offset-k" => ClaimSpec::OffsetByK,
        other => {
            return Err(toprow::Error::Input(format!(
                "unknown claim spec {other:?} (use \"auto\" or \"offset-k\")"
            )))
        }
    };
    let prover = SimulatorProver::new(&circuit, &params, args.strategy.into(), claim)?;
    Ok((circuit, params, prover))
}

fn cmd_run(args: &RunArgs) -> Result<i32, toprow::Error> {
    let (circuit, params, mut local_prover) = build_prover(&args.session)?;
    let transcript = if args.two_process {
        let exe = std::env::current_exe()?;
        let mut cmd = Command::new(exe);
        cmd.arg("prover-stdio")
            .arg("--circuit")
            .arg(&args.session.circuit)
            .arg("--claim")
            .arg(&args.session.claim)
            .arg("--strategy")
            .arg(match args.session.strategy {
                StrategyArg::Honest => "honest",
                StrategyArg::ConstantOffset => "constant-offset",
                StrategyArg::SpreadError => "spread-error",
            })
            .arg("--profile")
            .arg(match args.session.profile {
                ProfileArg::Paper => "paper",
                ProfileArg::W => "w",
                ProfileArg::Relaxed => "relaxed",
            })
            .arg("--mu-pow")
            .arg(args.session.mu_pow.to_string())
            .arg("--xi-exp")
            .arg(args.session.xi_exp.to_string())
            .stdin(Stdio::piped())
            .stdout(Stdio::piped());
        let mut child = cmd.spawn()?;
        let child_in = child.stdin.take().expect("child stdin");
        let child_out = BufReader::new(child.stdout.take().expect("child stdout"));
        let mut remote = RemoteProver::new(child_out, child_in, params.t);
        let tr = run_protocol(&circuit, &params, &mut remote, args.seed)?;
        drop(remote);
        let _ = child.wait()?;
        tr
    } else {
        run_protocol(&circuit, &params, &mut local_prover, args.seed)?
    };
    if let Some(path) = &args.transcript {
        let mut f = fs::File::create(path)?;
        transcript.write_jsonl(&mut f)?;
        println!("transcript: {}", path.display());
    }
    match &transcript.verdict {
        Verdict::Accept => {
            println!("accept");
            Ok(0)
        }
        Verdict::Reject { round, reason } => {
            println!("reject at round {round}: {reason}");
            Ok(1)
        }
    }
}

fn cmd_experiment(args: &ExperimentArgs) -> Result<i32, toprow::Error> {
    let text = match (&args.spec, &args.spec_file) {
        (Some(inline), None) => inline.clone(),
        (None, Some(path)) => fs::read_to_string(path)?,
        _ => {
            return Err(toprow::Error::Input(
                "provide exactly one of --spec or --spec-file".into(),
            ))
        }
    };
    let spec: ExperimentSpec = serde_json::from_str(&text)?;
    let report = run_experiment(&spec)?;
    if let Some(path) = &args.json {
        fs::write(path, report.to_json()?)?;
    }
    if let Some(path) = &args.csv {
        fs::write(path, report.to_csv())?;
    }
    for check in &report.checks {
        println!(
            "{} [{}]: empirical {:.3e} vs bound {:.3e} (+{:.1e} slack) -> {}",
            check.name,
            check.anchor,
            check.empirical,
            check.bound,
            check.slack,
            if check.ok { "ok" } else { "VIOLATED" }
        );
    }
    Ok(if report.passed { 0 } else { 1 })
}

fn cmd_reduce(args: &ReduceArgs) -> Result<i32, toprow::Error> {
    match &args.which {
        ReduceCmd::Qcircuit { input, out } => {
            let c = parse_circuit(&fs::read_to_string(input)?)?;
            let r = qcircuit_reduction(&c)?;
            fs::write(out, serialize_circuit(&r))?;
            println!("wrote {} ({} gates on {} qubits)", out.display(), r.len(), r.n);
        }
        ReduceCmd::Postbqp { input, out_y, out_z } => {
            let c = parse_circuit(&fs::read_to_string(input)?)?;
            let (cy, cz) = postbqp_trace_pair(&c)?;
            fs::write(out_y, serialize_circuit(&cy))?;
            fs::write(out_z, serialize_circuit(&cz))?;
            println!("wrote {} and {}", out_y.display(), out_z.display());
        }
    }
    Ok(0)
}

fn cmd_params(args: &ParamsArgs) -> Result<i32, toprow::Error> {
    match ProtocolParams::derive(args.n, args.t) {
        Ok(p) => {
            println!("{}", p.report());
            println!("  transcript bit cap = {}", p.bit_cap());
            Ok(0)
        }
        Err(toprow::Error::ParamRefusal { required_p, max_p }) => {
            println!("refused: required precision {required_p} bits exceeds cap {max_p}");
            Ok(1)
        }
        Err(e) => Err(e),
    }
}

fn cmd_selftest() -> Result<i32, toprow::Error> {
    let mut failures = 0;
    let mut check = |name: &str, ok: bool| {
        println!("{name}: {}", if ok { "pass" } else { "FAIL" });
        if !ok {
            failures += 1;
        }
    };

    let completeness = run_experiment(&ExperimentSpec::Completeness {
        n: 3,
        t: 2,
        trials: 10,
        seed: 1,
    })?;
    check("honest runs accept", completeness.passed);

    let soundness = run_experiment(&ExperimentSpec::Soundness {
        n: 3,
        t: 2,
        trials: 20,
        seed: 2,
        strategy: Strategy::SpreadError,
    })?;
    check("spread-error cheater caught", soundness.passed);

    let lemma4 = run_experiment(&ExperimentSpec::Lemma4 {
        n_prime: 2,
        m: 8,
        trials: 2000,
        seed: 3,
        deltas: 3,
    })?;
    check("small-ball tail bound", lemma4.passed);

    let comm = run_experiment(&ExperimentSpec::CommAccounting { n: 3, t: 2, runs: 3, seed: 4 })?;
    check("communication bit cap", comm.passed);

    let chains = toprow::experiment::measure_claim_chains(3, 2, 5)?;
    check("error-chain bounds", chains.passed);

    Ok(if failures == 0 { 0 } else { 1 })
}

fn cmd_prover_stdio(args: &ProverArgs) -> Result<i32, toprow::Error> {
    let (_, params, mut prover) = build_prover(&args.session)?;
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    serve_prover(
        &mut prover as &mut dyn Prover,
        params.t,
        stdin.lock(),
        stdout.lock(),
    )?;
    Ok(0)
}

fn main() {
    let cli = Cli::parse();
    let result = match &cli.command {
        Cmd::Run(args) => cmd_run(args),
        Cmd::Experiment(args) => cmd_experiment(args),
        Cmd::Reduce(args) => cmd_reduce(args),
        Cmd::Params(args) => cmd_params(args),
        Cmd::Selftest => cmd_selftest(),
        Cmd::ProverStdio(args) => cmd_prover_stdio(args),
    };
    match result {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            let _ = writeln!(std::io::stderr(), "error: {e}");
            std::process::exit(2);
        }
    }
}
