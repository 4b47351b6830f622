//! `ugstream`: generate, solve and estimate Unique Games streams, and run the
//! hidden-matching and hybrid experiments.

mod output;

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Serialize, Serializer};
use serde_json::Value;
use ugstream_core::commlab::{ratio_to_f64, tvd_chain};
use ugstream_core::seed::{derive_rng, master_rng};
use ugstream_core::streaming::run_stream;
use ugstream_core::verify::{self, Suite};
use ugstream_core::{
    exact_optimum, expected_tvd, hybrid_experiment, make_toy_algorithm, parse_stream,
    preimage_probability, protocol_advantage, reduction_protocol, sample_ug, write_stream,
    CountEstimator, Dist, Error, MessagePartition, PreimageMode, SamplingEstimator, ToyKind,
    TvdMode, ZpVector,
};

use output::{emit, num, Format, Table};

#[derive(Parser, Debug)]
#[command(
    name = "ugstream",
    version,
    about = "Streaming Unique Games laboratory"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a Y or N instance and write it as a `ug v1` stream.
    Gen(GenArgs),
    /// Exact optimum of a stream.
    Solve(SolveArgs),
    /// Run a streaming estimator over a stream.
    Estimate(EstimateArgs),
    /// Hidden-matching experiments.
    Hm {
        #[command(subcommand)]
        command: HmCommand,
    },
    /// Stage-wise hybrid experiment for a toy streaming algorithm.
    Hybrid(HybridArgs),
    /// Run the property suites.
    Verify(VerifyArgs),
}

fn display<T: std::fmt::Display, S: Serializer>(value: &T, s: S) -> Result<S::Ok, S::Error> {
    s.collect_str(value)
}

#[derive(Args, Debug, Serialize)]
struct GenArgs {
    #[arg(long, value_parser = parse_dist)]
    #[serde(serialize_with = "display")]
    dist: Dist,
    #[arg(long)]
    p: u32,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    alpha_r: usize,
    #[arg(long)]
    k: usize,
    #[arg(long)]
    seed: u64,
    /// Output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct SolveArgs {
    /// Input stream (default: stdin).
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Algo {
    Count,
    Sample,
}

#[derive(Args, Debug, Serialize)]
struct EstimateArgs {
    #[arg(long, value_enum)]
    algo: Algo,
    /// Reservoir size for `sample`.
    #[arg(long, default_value_t = 800)]
    budget: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also solve exactly and report estimate / optimum.
    #[arg(long)]
    oracle: bool,
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
}

#[derive(Subcommand, Debug)]
enum HmCommand {
    /// Exhaustive preimage probabilities against the binomial ratio, by weight.
    Preimage(PreimageArgs),
    /// Expected distance of `w = Mx` from uniform for a random structured set A.
    Tvd(TvdArgs),
    /// One-way protocol advantage with Bob's MAP rule.
    Advantage(AdvantageArgs),
}

#[derive(Args, Debug, Serialize)]
struct PreimageArgs {
    #[arg(long)]
    p: u32,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    r: usize,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
}

#[derive(Args, Debug, Serialize)]
struct TvdArgs {
    #[arg(long)]
    p: u32,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    r: usize,
    /// Number of random sets A.
    #[arg(long, default_value_t = 10)]
    sets: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum PartitionKind {
    Constant,
    Identity,
    Prefix,
}

#[derive(Args, Debug, Serialize)]
struct AdvantageArgs {
    #[arg(long, value_enum)]
    partition: PartitionKind,
    /// Prefix length in coordinates (prefix partitions only).
    #[arg(long, default_value_t = 0)]
    bits: usize,
    #[arg(long)]
    p: u32,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    r: usize,
    #[arg(long, default_value_t = 100_000)]
    trials: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
}

#[derive(Args, Debug, Serialize)]
struct HybridArgs {
    #[arg(long = "alg", value_parser = parse_kind)]
    #[serde(serialize_with = "display")]
    alg: ToyKind,
    #[arg(long)]
    bits: u32,
    #[arg(long)]
    p: u32,
    #[arg(long)]
    n: usize,
    #[arg(long)]
    alpha_r: usize,
    #[arg(long = "stages")]
    k: usize,
    #[arg(long, default_value_t = 20_000)]
    trials: usize,
    #[arg(long)]
    seed: u64,
    /// Also run the reduction protocol at the informative index.
    #[arg(long)]
    reduce: bool,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
}

#[derive(Args, Debug, Serialize)]
struct VerifyArgs {
    /// `all` or one of parseval, hypercontractivity, lemma3, level-mass, lemma4, lemma5-identity.
    #[arg(long, default_value = "all", value_parser = clap::builder::PossibleValuesParser::new(
        ["all", "parseval", "hypercontractivity", "lemma3", "level-mass", "lemma4", "lemma5-identity"]
    ))]
    suite: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t)]
    format: Format,
}

fn parse_dist(s: &str) -> Result<Dist, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_kind(s: &str) -> Result<ToyKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

enum Failure {
    Run(Error),
    Verify(usize),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Run(Error::Io(e))
    }
}

type Outcome = Result<(), Failure>;

fn open_input(path: &Option<PathBuf>) -> io::Result<Box<dyn BufRead>> {
    Ok(match path {
        Some(path) => Box::new(BufReader::new(File::open(path)?)),
        None => Box::new(io::stdin().lock()),
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let stdout = io::stdout();
    let mut out = BufWriter::new(stdout.lock());
    let result = run(cli.command, &mut out).and_then(|()| out.flush().map_err(Failure::from));
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Run(e)) => {
            let _ = out.flush();
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(Failure::Verify(failed)) => {
            let _ = out.flush();
            eprintln!(
                "{failed} propert{} failed",
                if failed == 1 { "y" } else { "ies" }
            );
            ExitCode::from(3)
        }
    }
}

fn run<W: Write>(command: Command, out: &mut W) -> Outcome {
    match command {
        Command::Gen(args) => gen(&args, out),
        Command::Solve(args) => solve(&args, out),
        Command::Estimate(args) => estimate(&args, out),
        Command::Hm { command } => match command {
            HmCommand::Preimage(args) => preimage(&args, out),
            HmCommand::Tvd(args) => hm_tvd(&args, out),
            HmCommand::Advantage(args) => advantage(&args, out),
        },
        Command::Hybrid(args) => hybrid(&args, out),
        Command::Verify(args) => run_verify(&args, out),
    }
}

fn gen<W: Write>(args: &GenArgs, out: &mut W) -> Outcome {
    let mut rng = derive_rng(args.seed, "gen", 0);
    let instance = sample_ug(args.p, args.n, args.alpha_r, args.k, args.dist, &mut rng)?;
    match &args.out {
        Some(path) => {
            let mut file = BufWriter::new(File::create(path)?);
            write_stream(&instance, &mut file)?;
            file.flush()?;
        }
        None => write_stream(&instance, out)?,
    }
    Ok(())
}

fn solve<W: Write>(args: &SolveArgs, out: &mut W) -> Outcome {
    let instance = parse_stream(open_input(&args.input)?)?;
    let solved = exact_optimum(&instance)?;
    let fraction = if instance.m() == 0 {
        1.0
    } else {
        solved.opt_value as f64 / instance.m() as f64
    };
    let witness: Vec<String> = solved
        .witness
        .entries()
        .iter()
        .map(u32::to_string)
        .collect();
    let mut table = Table::new(&["opt_value", "m", "fraction", "witness"]);
    table.push(vec![
        solved.opt_value.into(),
        instance.m().into(),
        num(fraction),
        Value::String(witness.join(" ")),
    ]);
    emit(out, args.format, "solve", None, args, &table)?;
    Ok(())
}

fn estimate<W: Write>(args: &EstimateArgs, out: &mut W) -> Outcome {
    let mut text = Vec::new();
    open_input(&args.input)?.read_to_end(&mut text)?;
    let value = match args.algo {
        Algo::Count => run_stream(&mut CountEstimator::new(), text.as_slice())?,
        Algo::Sample => {
            let mut estimator =
                SamplingEstimator::new(args.budget, derive_rng(args.seed, "estimate", 0))?;
            run_stream(&mut estimator, text.as_slice())?
        }
    };
    let decimal = *value.numer() as f64 / *value.denom() as f64;
    let algo = match args.algo {
        Algo::Count => "count",
        Algo::Sample => "sample",
    };
    let seed = (args.algo == Algo::Sample).then_some(args.seed);
    if args.oracle {
        let opt = exact_optimum(&parse_stream(text.as_slice())?)?.opt_value;
        let ratio = if opt == 0 {
            f64::NAN
        } else {
            decimal / opt as f64
        };
        let mut table = Table::new(&["algo", "estimate", "estimate_decimal", "opt_value", "ratio"]);
        table.push(vec![
            algo.into(),
            value.to_string().into(),
            num(decimal),
            opt.into(),
            num(ratio),
        ]);
        emit(out, args.format, "estimate", seed, args, &table)?;
    } else {
        let mut table = Table::new(&["algo", "estimate", "estimate_decimal"]);
        table.push(vec![algo.into(), value.to_string().into(), num(decimal)]);
        emit(out, args.format, "estimate", seed, args, &table)?;
    }
    Ok(())
}

fn preimage<W: Write>(args: &PreimageArgs, out: &mut W) -> Outcome {
    let len = ugstream_core::zp::checked_pow(args.p, args.n)
        .ok_or_else(|| Error::Capacity(format!("{}^{} vectors", args.p, args.n)))?;
    // per weight: (vectors, largest exact probability, bound, violations)
    let mut by_weight = vec![(0usize, 0.0f64, 0.0f64, 0usize); args.n + 1];
    for idx in 0..len {
        let x = ZpVector::from_index(args.p, args.n, idx)?;
        let exact = preimage_probability(&x, args.r, PreimageMode::Exact)?;
        let bound = preimage_probability(&x, args.r, PreimageMode::Formula)?;
        let row = &mut by_weight[x.weight()];
        row.0 += 1;
        row.1 = row.1.max(ratio_to_f64(&exact));
        row.2 = ratio_to_f64(&bound);
        if exact > bound {
            row.3 += 1;
        }
    }
    let mut table = Table::new(&["weight", "vectors", "max_exact", "bound", "violations"]);
    for (k, (count, exact, bound, bad)) in by_weight.into_iter().enumerate() {
        table.push(vec![
            k.into(),
            count.into(),
            num(exact),
            num(bound),
            bad.into(),
        ]);
    }
    emit(out, args.format, "hm preimage", None, args, &table)?;
    Ok(())
}

fn hm_tvd<W: Write>(args: &TvdArgs, out: &mut W) -> Outcome {
    let mut table = Table::new(&[
        "set",
        "density",
        "mean_tvd",
        "l2_term",
        "preimage_term",
        "binomial_term",
        "chain_holds",
    ]);
    for i in 0..args.sets {
        let mut rng = derive_rng(args.seed, "hm-tvd", i as u64);
        let a = verify::random_subset(args.p, args.n, &mut rng)?;
        let density = a.support_size()? as f64 / a.len() as f64;
        let exact = expected_tvd(&a, args.r, TvdMode::Exact)?;
        let chain = tvd_chain(&a, args.r)?;
        table.push(vec![
            i.into(),
            num(density),
            num(exact.mean),
            num(chain.l2_term),
            num(chain.preimage_term),
            num(chain.binomial_term),
            chain.holds(1e-9).into(),
        ]);
    }
    emit(out, args.format, "hm tvd", Some(args.seed), args, &table)?;
    Ok(())
}

fn advantage<W: Write>(args: &AdvantageArgs, out: &mut W) -> Outcome {
    let partition = match args.partition {
        PartitionKind::Constant => MessagePartition::constant(args.p, args.n)?,
        PartitionKind::Identity => MessagePartition::identity(args.p, args.n)?,
        PartitionKind::Prefix => MessagePartition::prefix(args.p, args.n, args.bits)?,
    };
    let est = protocol_advantage(&partition, args.r, args.trials, &mut master_rng(args.seed))?;
    let mut table = Table::new(&[
        "message_bits",
        "advantage",
        "std_error",
        "accept_yes",
        "accept_no",
        "trials",
    ]);
    table.push(vec![
        partition.bits().into(),
        num(est.advantage),
        num(est.std_error),
        num(est.accept_yes),
        num(est.accept_no),
        est.trials.into(),
    ]);
    emit(
        out,
        args.format,
        "hm advantage",
        Some(args.seed),
        args,
        &table,
    )?;
    Ok(())
}

fn hybrid<W: Write>(args: &HybridArgs, out: &mut W) -> Outcome {
    let mut rng = master_rng(args.seed);
    let alg = make_toy_algorithm(args.alg, args.bits, args.p, &mut rng)?;
    let report = hybrid_experiment(
        alg.as_ref(),
        args.p,
        args.n,
        args.alpha_r,
        args.k,
        args.trials,
        &mut rng,
    )?;
    let mut table = Table::new(&["record", "stage", "value", "std_error", "bias_bound"]);
    for (j, t) in report.stages.iter().enumerate() {
        table.push(vec![
            "tvd".into(),
            j.into(),
            num(t.value),
            num(t.std_error),
            num(t.bias_bound),
        ]);
    }
    for (j, d) in report.increments.iter().enumerate() {
        table.push(vec![
            "increment".into(),
            j.into(),
            num(*d),
            "".into(),
            "".into(),
        ]);
    }
    if args.reduce {
        let j = report.informative_index;
        let red = reduction_protocol(
            alg.as_ref(),
            j,
            args.p,
            args.n,
            args.alpha_r,
            args.trials,
            &mut rng,
        )?;
        let a = &red.advantage;
        table.push(vec![
            "reduction_advantage".into(),
            j.into(),
            num(a.advantage),
            num(a.std_error),
            "".into(),
        ]);
        table.push(vec![
            "reduction_gap".into(),
            j.into(),
            num(red.gap()),
            num(red.gap_std_error()),
            "".into(),
        ]);
        for (name, t) in [
            ("reduction_tilde_tvd", &red.tilde),
            ("data_processing_lhs", &red.data_processing),
            ("data_processing_rhs", &red.before),
        ] {
            table.push(vec![
                name.into(),
                j.into(),
                num(t.value),
                num(t.std_error),
                num(t.bias_bound),
            ]);
        }
    }
    emit(out, args.format, "hybrid", Some(args.seed), args, &table)?;
    Ok(())
}

fn run_verify<W: Write>(args: &VerifyArgs, out: &mut W) -> Outcome {
    let suites = if args.suite == "all" {
        Suite::ALL.to_vec()
    } else {
        vec![args.suite.parse::<Suite>()?]
    };
    let mut table = Table::new(&["suite", "cases", "violations", "worst_excess", "status"]);
    let mut failed = 0;
    for suite in suites {
        let report = verify::run_suite(suite, args.seed)?;
        if !report.passed() {
            failed += 1;
        }
        table.push(vec![
            report.name.clone().into(),
            report.cases.into(),
            report.violations.into(),
            num(report.worst),
            if report.passed() { "pass" } else { "fail" }.into(),
        ]);
    }
    emit(out, args.format, "verify", Some(args.seed), args, &table)?;
    if failed > 0 {
        return Err(Failure::Verify(failed));
    }
    Ok(())
}
