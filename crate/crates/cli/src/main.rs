use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

use uhat_core::dsl::{run, Expr, RunConfig, RunOutcome};
use uhat_core::frontend::{builtin_spec, parse_config, parse_expr, parse_spec, ParseError, SpecFile};
use uhat_core::harness::{make_handler, random_baseline, run_campaign, tsv, CampaignConfig, HarnessError};
use uhat_core::logic::{Domain, FiniteDomain, Sort, SortEnv};
use uhat_core::sre::{accepts_erased, SfaEnv, Sre, SreError};
use uhat_core::synth::{synthesize, SynthConfig, SynthError};
use uhat_core::trace::{erase_ghost, from_text, to_text, TraceError};

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}:{0}", path = .1)]
    Parse(ParseError, String),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Sre(#[from] SreError),
    #[error(transparent)]
    Trace(#[from] TraceError),
}

#[derive(Parser)]
#[command(name = "uhat", version, about = "Synthesize effectful test generators from trace specifications")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Synthesize generators for a property and write them to a directory.
    Synth(SynthArgs),
    /// Run a generator against a built-in handler until a violation or the run budget.
    Run(RunArgs),
    /// Check a trace file against a property.
    Check(CheckArgs),
    /// Compare a synthesized generator with the random baseline.
    Bench(BenchArgs),
}

#[derive(Args, Clone, Default)]
struct Tuning {
    /// `key = value` file; explicit flags take precedence over it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    unroll_bound: Option<usize>,
    #[arg(long)]
    max_candidates: Option<usize>,
    /// Synthesis timeout in seconds.
    #[arg(long)]
    timeout: Option<u64>,
    #[arg(long)]
    star_bound: Option<usize>,
    /// Value domain as `LO..HI`.
    #[arg(long)]
    domain: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SynthArgs {
    /// Spec file, or a bundled spec name (`stack`, `transaction`).
    #[arg(long)]
    spec: String,
    #[arg(long)]
    property: String,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    tuning: Tuning,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    gen: PathBuf,
    #[arg(long)]
    handler: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    max_runs: usize,
    /// Where to write the last run's trace; printed to stdout otherwise.
    #[arg(long)]
    trace_out: Option<PathBuf>,
    #[arg(long)]
    domain: Option<String>,
    /// Exit with status 1 unless a violation is found.
    #[arg(long)]
    expect_violation: bool,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long)]
    trace: PathBuf,
    #[arg(long)]
    property: String,
    #[arg(long)]
    spec: String,
    #[arg(long)]
    domain: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Baseline {
    Random,
    None,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    spec: String,
    #[arg(long)]
    property: String,
    #[arg(long)]
    handler: String,
    /// Generator executions per strategy.
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long, value_enum, default_value_t = Baseline::Random)]
    baseline: Baseline,
    /// Longest operation sequence of the random baseline.
    #[arg(long)]
    max_len: Option<usize>,
    #[arg(long)]
    jobs: Option<usize>,
    /// Write the table here as well as to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    tuning: Tuning,
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|source| CliError::Io { path: path.display().to_string(), source })
}

fn write(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| CliError::Io { path: path.display().to_string(), source })
}

fn load_spec(name: &str) -> Result<SpecFile, CliError> {
    let path = Path::new(name);
    let src = if path.exists() {
        read(path)?
    } else if let Some(s) = builtin_spec(name) {
        s.to_string()
    } else {
        return Err(CliError::Usage(format!("no spec file or bundled spec named `{name}`")));
    };
    parse_spec(&src).map_err(|e| CliError::Parse(e, name.to_string()))
}

fn parse_domain(s: &str) -> Result<Domain, CliError> {
    let bad = || CliError::Usage(format!("bad domain `{s}`, expected LO..HI"));
    let (lo, hi) = s.split_once("..").ok_or_else(bad)?;
    let (lo, hi): (i64, i64) = (lo.trim().parse().map_err(|_| bad())?, hi.trim().parse().map_err(|_| bad())?);
    if lo > hi {
        return Err(bad());
    }
    Ok(Domain::new(lo, hi))
}

/// Settings from the spec's `config` lines, then the `--config` file, then flags.
struct Settings(BTreeMap<String, String>);

impl Settings {
    fn new(spec: &SpecFile, t: &Tuning, extra: &[(&str, Option<String>)]) -> Result<Self, CliError> {
        let mut m = spec.config.clone();
        if let Some(p) = &t.config {
            let text = read(p)?;
            m.extend(parse_config(&text).map_err(|e| CliError::Parse(e, p.display().to_string()))?);
        }
        let flags = [
            ("unroll-bound", t.unroll_bound.map(|v| v.to_string())),
            ("max-candidates", t.max_candidates.map(|v| v.to_string())),
            ("timeout", t.timeout.map(|v| v.to_string())),
            ("star-bound", t.star_bound.map(|v| v.to_string())),
            ("domain", t.domain.clone()),
            ("seed", t.seed.map(|v| v.to_string())),
        ];
        for (k, v) in flags.into_iter().chain(extra.iter().map(|(k, v)| (*k, v.clone()))) {
            if let Some(v) = v {
                m.insert(k.to_string(), v);
            }
        }
        Ok(Settings(m))
    }

    fn num<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, CliError> {
        match self.0.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|_| CliError::Usage(format!("bad value `{v}` for `{key}`"))),
        }
    }

    fn domain(&self) -> Result<Domain, CliError> {
        self.0.get("domain").map(|d| parse_domain(d)).transpose().map(|d| d.unwrap_or_default())
    }

    fn synth(&self) -> Result<SynthConfig, CliError> {
        let d = SynthConfig::default();
        Ok(SynthConfig {
            unroll_bound: self.num("unroll-bound", d.unroll_bound)?,
            max_candidates: self.num("max-candidates", d.max_candidates)?,
            timeout: Duration::from_secs(self.num("timeout", d.timeout.as_secs())?),
            star_bound: self.num("star-bound", d.star_bound)?,
            max_refine_steps: self.num("max-refine-steps", d.max_refine_steps)?,
            domain: self.domain()?,
            ..d
        })
    }
}

fn property<'a>(spec: &'a SpecFile, name: &str) -> Result<(&'a Sre, Vec<(String, Sort)>), CliError> {
    let a = spec.property(name).ok_or_else(|| CliError::Usage(format!("no property named `{name}`")))?;
    let mut env = SortEnv::new();
    a.infer_free_sorts(&spec.delta.alphabet(), &mut env)?;
    Ok((a, env.into_iter().collect()))
}

fn cmd_synth(args: &SynthArgs) -> Result<ExitCode, CliError> {
    let spec = load_spec(&args.spec)?;
    let settings = Settings::new(&spec, &args.tuning, &[])?;
    let cfg = settings.synth()?;
    let (a, vars) = property(&spec, &args.property)?;
    let out = synthesize(&spec.delta, &vars, a, &cfg)?;
    fs::create_dir_all(&args.out).map_err(|source| CliError::Io { path: args.out.display().to_string(), source })?;
    for (k, p) in out.programs.iter().enumerate() {
        let stem = format!("gen_{}", k + 1);
        let header = format!("# property {}\n# {} generator\n", args.property, if p.recursive { "recursive" } else { "straightline" });
        let gen = args.out.join(format!("{stem}.gen"));
        write(&gen, &format!("{header}{}\n", p.expr))?;
        let mut side = format!("context: {}\nclaimed: {}\n", p.gamma, p.claimed);
        for s in &p.sources {
            side.push_str(&format!("source: {s}\n"));
        }
        write(&args.out.join(format!("{stem}.type")), &side)?;
        println!("wrote {}", gen.display());
    }
    println!("{} candidate(s), {} program(s), {} refinement step(s)", out.candidates.len(), out.programs.len(), out.report.steps);
    Ok(ExitCode::SUCCESS)
}

fn load_gen(path: &Path) -> Result<Expr, CliError> {
    parse_expr(&read(path)?).map_err(|e| CliError::Parse(e, path.display().to_string()))
}

fn cmd_run(args: &RunArgs) -> Result<ExitCode, CliError> {
    let e = load_gen(&args.gen)?;
    let mut h = make_handler(&args.handler)?;
    let cfg = RunConfig { domain: args.domain.as_deref().map(parse_domain).transpose()?.unwrap_or_default(), ..RunConfig::default() };
    let mut counts: BTreeMap<&'static str, usize> = BTreeMap::new();
    let mut last = None;
    let mut violation = false;
    for i in 0..args.max_runs.max(1) {
        h.reset();
        let out = run(&e, &mut *h, args.seed.wrapping_add(i as u64), &cfg);
        *counts.entry(out.label()).or_default() += 1;
        let stop = matches!(out, RunOutcome::AssertViolated { .. } | RunOutcome::SutFault { .. });
        if stop {
            println!("run {}: {}", i + 1, describe(&out));
        }
        last = Some(out);
        if stop {
            violation = true;
            break;
        }
    }
    let summary: Vec<String> = counts.iter().map(|(k, v)| format!("{k}={v}")).collect();
    println!("outcomes: {}", summary.join(" "));
    let trace = to_text(last.as_ref().map(|o| o.trace().as_slice()).unwrap_or(&[]));
    match &args.trace_out {
        Some(p) => write(p, &trace)?,
        None => print!("{trace}"),
    }
    Ok(if args.expect_violation && !violation { ExitCode::from(1) } else { ExitCode::SUCCESS })
}

fn describe(o: &RunOutcome) -> String {
    match o {
        RunOutcome::AssertViolated { failed, .. } => format!("assertion failed: {failed}"),
        RunOutcome::SutFault { fault, .. } => format!("SUT fault: {fault}"),
        other => other.label().to_string(),
    }
}

fn cmd_check(args: &CheckArgs) -> Result<ExitCode, CliError> {
    let spec = load_spec(&args.spec)?;
    let (a, vars) = property(&spec, &args.property)?;
    let alpha = erase_ghost(&from_text(&read(&args.trace)?)?);
    let domain = args.domain.as_deref().map(parse_domain).transpose()?.unwrap_or_default();
    let oracle = FiniteDomain::new(domain);
    let alphabet = spec.delta.alphabet();
    let sfa = SfaEnv::new(&alphabet, &oracle).with_ctx(vec![], vars.into_iter().collect());
    if accepts_erased(&sfa, a, &alpha)? {
        println!("accepted");
        Ok(ExitCode::SUCCESS)
    } else {
        println!("rejected");
        Ok(ExitCode::from(1))
    }
}

fn cmd_bench(args: &BenchArgs) -> Result<ExitCode, CliError> {
    let spec = load_spec(&args.spec)?;
    let settings = Settings::new(
        &spec,
        &args.tuning,
        &[
            ("runs", args.runs.map(|v| v.to_string())),
            ("jobs", args.jobs.map(|v| v.to_string())),
            ("max-len", args.max_len.map(|v| v.to_string())),
        ],
    )?;
    make_handler(&args.handler)?;
    let (a, vars) = property(&spec, &args.property)?;
    let out = synthesize(&spec.delta, &vars, a, &settings.synth()?)?;
    let campaign = CampaignConfig {
        executions: settings.num("runs", 10_000)?,
        seed: settings.num("seed", 0)?,
        run: RunConfig { domain: settings.domain()?, ..RunConfig::default() },
        jobs: settings.num("jobs", 1)?,
        ..CampaignConfig::default()
    };
    let mut rows = vec![run_campaign(&out.programs[0].expr, "synthesized", &args.handler, &campaign)?];
    if let Baseline::Random = args.baseline {
        let baseline = random_baseline(&spec.delta, settings.num("max-len", 10)?);
        rows.push(run_campaign(&baseline, "random", &args.handler, &campaign)?);
    }
    let table = tsv(&rows);
    print!("{table}");
    if let Some(p) = &args.out {
        write(p, &table)?;
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let r = match &cli.cmd {
        Cmd::Synth(a) => cmd_synth(a),
        Cmd::Run(a) => cmd_run(a),
        Cmd::Check(a) => cmd_check(a),
        Cmd::Bench(a) => cmd_bench(a),
    };
    match r {
        Ok(code) => code,
        Err(e @ CliError::Usage(_)) => {
            eprintln!("uhat: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("uhat: {e}");
            ExitCode::from(1)
        }
    }
}
