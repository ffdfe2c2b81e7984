//! The `pvd` command line.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use pvd_core::cost::{assess, Calibration, CostReport};
use pvd_core::optimizer::{optimize, OptimizerConfig, ParetoPoint};
use pvd_core::relation::Database;
use pvd_core::stats::{database_stats, DatabaseStats};
use pvd_core::{samples, validate_spec, InterfaceSpec, PhysicalPlan, SiteId};
use serde::Serialize;

use crate::bench::{bench, write_bench_csv};
use crate::calibrate::{calibrate, DEFAULT_ROWS, DEFAULT_RUNS};
use crate::config::{load_deployment, RunConfig};
use crate::datagen;
use crate::executor::{Fault, NetMode, Sampling, Session, TraceInput};
use crate::load::{load_database, write_database};
use crate::trace::{read_jsonl, write_jsonl};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_VERIFY_FAILED: i32 = 3;

/// Samples drawn when a binding space is too large to sweep.
const DEFAULT_SAMPLE: usize = 1000;

#[derive(Debug, Parser)]
#[command(name = "pvd", version, about = "Physical visualization design: plan, check and time interactive views")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Interface spec JSON, or a bundled sample name prefixed with `sample:`.
    #[arg(long, global = true)]
    spec: Option<String>,
    /// Directory holding one CSV per source.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    /// `lan`, `wan`, or a deployment JSON file.
    #[arg(long, global = true)]
    deploy: Option<String>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Run configuration JSON; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    cap_candidates: Option<usize>,
    /// Cost-model constants JSON (defaults to the fixed reference values).
    #[arg(long, global = true)]
    calibration: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SampleArgs {
    /// Sweep every binding regardless of the cap.
    #[arg(long, conflicts_with = "sample")]
    exhaustive: bool,
    /// Check a seeded sample of N bindings per interaction.
    #[arg(long, value_name = "N")]
    sample: Option<usize>,
    #[arg(long, default_value = "simulated")]
    net: NetMode,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write synthetic data and the matching spec for a bundled sample.
    Generate {
        #[arg(long)]
        sample: String,
        #[arg(long, default_value_t = datagen::DEFAULT_ROWS)]
        rows: usize,
    },
    /// Write per-relation column statistics.
    Stats,
    /// Search for feasible plans and write the resource frontier.
    Optimize,
    /// Print the cost breakdown of a plan file.
    Explain {
        plan: PathBuf,
        #[arg(long)]
        json: bool,
    },
    /// Execute a plan and compare every output with the oracle.
    Verify {
        plan: PathBuf,
        #[command(flatten)]
        sampling: SampleArgs,
        /// Corrupt cube counts after each build (checks that verification catches it).
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
    /// Time interactions over a binding sweep and write a latency table.
    Bench {
        plan: PathBuf,
        #[command(flatten)]
        sampling: SampleArgs,
    },
    /// Measure cost-model constants on this machine.
    Calibrate {
        #[arg(long, default_value_t = DEFAULT_ROWS)]
        rows: usize,
        #[arg(long, default_value_t = DEFAULT_RUNS)]
        runs: usize,
    },
    /// Run a JSON lines trace of interactions through a plan.
    Replay {
        plan: PathBuf,
        #[arg(long)]
        trace: PathBuf,
        #[arg(long, default_value = "simulated")]
        net: NetMode,
    },
}

enum Outcome {
    Done,
    Infeasible,
    VerifyFailed,
}

/// Parses `args` and runs the command, returning the process exit code.
/// `println!` that reports a closed stdout as an error instead of panicking.
macro_rules! say {
    ($($arg:tt)*) => {
        writeln!(std::io::stdout(), $($arg)*)?
    };
}

fn is_broken_pipe(e: &anyhow::Error) -> bool {
    let closed = |io: &std::io::Error| io.kind() == std::io::ErrorKind::BrokenPipe;
    e.chain().any(|c| {
        c.downcast_ref::<std::io::Error>().is_some_and(closed)
            || c.downcast_ref::<csv::Error>().is_some_and(|c| matches!(c.kind(), csv::ErrorKind::Io(io) if closed(io)))
    })
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli) {
        Ok(Outcome::Done) => EXIT_OK,
        Ok(Outcome::Infeasible) => EXIT_INFEASIBLE,
        Ok(Outcome::VerifyFailed) => EXIT_VERIFY_FAILED,
        Err(e) if is_broken_pipe(&e) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_ERROR
        }
    }
}

pub fn main() -> i32 {
    run(std::env::args_os())
}

struct Ctx {
    cfg: RunConfig,
    calibration: Calibration,
}

impl Ctx {
    fn new(common: &Common) -> Result<Ctx> {
        let mut cfg = match &common.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = &common.spec {
            cfg.spec_path = Some(PathBuf::from(s));
        }
        if let Some(d) = &common.data {
            cfg.data_dir = Some(d.clone());
        }
        if let Some(d) = &common.deploy {
            cfg.deployment = load_deployment(d)?;
        }
        if let Some(s) = common.seed {
            cfg.seed = s;
        }
        if let Some(o) = &common.out {
            cfg.output_dir = Some(o.clone());
        }
        if let Some(c) = common.cap_candidates {
            cfg.caps.candidates = c;
        }
        let calibration = match &common.calibration {
            Some(p) => {
                let cal: Calibration = read_json(p)?;
                if !cal.is_valid() {
                    bail!("{}: every constant must be positive", p.display());
                }
                cal
            }
            None => Calibration::default(),
        };
        Ok(Ctx { cfg, calibration })
    }

    fn spec(&self) -> Result<InterfaceSpec> {
        let arg = self.cfg.spec_path.as_ref().ok_or_else(|| anyhow!("--spec is required"))?;
        let text = arg.to_string_lossy();
        let spec = match text.strip_prefix("sample:") {
            Some(name) => samples::by_name(name).ok_or_else(|| anyhow!("unknown sample `{name}`"))?,
            None => read_json(arg)?,
        };
        let diags = validate_spec(&spec);
        if !diags.is_empty() {
            let list: Vec<String> = diags.iter().map(ToString::to_string).collect();
            bail!("invalid spec:\n  {}", list.join("\n  "));
        }
        Ok(spec)
    }

    fn data(&self, spec: &InterfaceSpec) -> Result<Database> {
        let dir = self.cfg.data_dir.as_ref().ok_or_else(|| anyhow!("--data is required"))?;
        Ok(load_database(spec, dir)?)
    }

    fn out(&self) -> Result<PathBuf> {
        let dir = self.cfg.output_dir.clone().unwrap_or_else(|| PathBuf::from("."));
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(dir)
    }

    fn sampling(&self, args: &SampleArgs) -> Sampling {
        if args.exhaustive {
            Sampling::Exhaustive
        } else if let Some(n) = args.sample {
            Sampling::Sample { n, seed: self.cfg.seed }
        } else {
            Sampling::Auto {
                cap: self.cfg.caps.bindings,
                n: DEFAULT_SAMPLE,
                seed: self.cfg.seed,
            }
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn stats_of(db: &Database) -> DatabaseStats {
    database_stats(db.values())
}

fn dispatch(cli: Cli) -> Result<Outcome> {
    let ctx = Ctx::new(&cli.common)?;
    match cli.command {
        Command::Generate { sample, rows } => generate(&ctx, &sample, rows),
        Command::Stats => stats(&ctx),
        Command::Optimize => optimize_cmd(&ctx),
        Command::Explain { plan, json } => explain(&ctx, &plan, json),
        Command::Verify {
            plan,
            sampling,
            inject_fault,
        } => verify(&ctx, &plan, &sampling, inject_fault),
        Command::Bench { plan, sampling } => bench_cmd(&ctx, &plan, &sampling),
        Command::Calibrate { rows, runs } => {
            let cal = calibrate(rows, runs);
            let path = ctx.out()?.join("calibration.json");
            write_json(&path, &cal)?;
            say!(
                "c_scan={:.3e} c_hash={:.3e} c_probe={:.3e} c_sort={:.3e} c_cell={:.3e} ms/unit",
                cal.c_scan, cal.c_hash, cal.c_probe, cal.c_sort, cal.c_cell
            );
            say!("wrote {}", path.display());
            Ok(Outcome::Done)
        }
        Command::Replay { plan, trace, net } => replay(&ctx, &plan, &trace, net),
    }
}

fn generate(ctx: &Ctx, sample: &str, rows: usize) -> Result<Outcome> {
    let spec = samples::by_name(sample).ok_or_else(|| anyhow!("unknown sample `{sample}` (one of {})", samples::NAMES.join(", ")))?;
    let db = datagen::generate(sample, rows, ctx.cfg.seed).expect("every bundled sample has a generator");
    let dir = ctx.out()?;
    write_database(&spec, &db, &dir)?;
    write_json(&dir.join("spec.json"), &spec)?;
    for (name, rel) in &db {
        say!("{name}: {} rows", rel.row_count());
    }
    say!("wrote {}", dir.display());
    Ok(Outcome::Done)
}

fn stats(ctx: &Ctx) -> Result<Outcome> {
    let spec = ctx.spec()?;
    let db = ctx.data(&spec)?;
    let path = ctx.out()?.join("stats.json");
    write_json(&path, &stats_of(&db))?;
    say!("wrote {}", path.display());
    Ok(Outcome::Done)
}

#[derive(Serialize)]
struct FrontierEntry<'a> {
    plan_file: String,
    client_bytes: u64,
    server_bytes: u64,
    max_latency_headroom_ms: Option<f64>,
    summary: String,
    provenance: &'a [pvd_core::physical::RuleApplication],
    report: &'a CostReport,
}

#[derive(Serialize)]
struct ParetoFile<'a> {
    candidates: usize,
    truncated: bool,
    feasible: usize,
    pruned: &'a [pvd_core::optimizer::PrunedMatch],
    frontier: Vec<FrontierEntry<'a>>,
}

fn plan_file_name(i: usize) -> String {
    format!("plan-{i:02}.json")
}

fn optimize_cmd(ctx: &Ctx) -> Result<Outcome> {
    let spec = ctx.spec()?;
    let db = ctx.data(&spec)?;
    let stats = stats_of(&db);
    let cfg = OptimizerConfig {
        candidate_cap: ctx.cfg.caps.candidates,
        ..OptimizerConfig::default()
    };
    let result = optimize(&spec, &ctx.cfg.deployment, &ctx.calibration, &stats, &cfg)?;
    let dir = ctx.out()?;
    if result.truncated {
        eprintln!("warning: candidate cap {} reached, search truncated", cfg.candidate_cap);
    }
    say!(
        "{} candidates, {} feasible, {} on the frontier",
        result.candidates,
        result.feasible,
        result.frontier.len()
    );
    if let Some(why) = &result.infeasible {
        write_json(&dir.join("infeasible.json"), why)?;
        eprintln!("infeasible interface");
        if let (Some(i), Some(b), Some(e)) = (&why.interaction, why.bound_ms, why.estimate_ms) {
            eprintln!("  {i}: estimate {e:.3} ms exceeds bound {b:.3} ms");
        }
        if let Some(b) = &why.binding {
            eprintln!("  binding {b}");
        }
        for s in &why.over_budget {
            eprintln!("  {s} is over its memory budget");
        }
        if let Some(p) = &why.closest_plan {
            eprintln!("  closest plan: {p}");
        }
        return Ok(Outcome::Infeasible);
    }
    let frontier: Vec<FrontierEntry<'_>> = result
        .frontier
        .iter()
        .enumerate()
        .map(|(i, p): (usize, &ParetoPoint)| FrontierEntry {
            plan_file: plan_file_name(i),
            client_bytes: p.client_bytes,
            server_bytes: p.server_bytes,
            max_latency_headroom_ms: p.max_latency_headroom_ms,
            summary: p.plan.summary(),
            provenance: &p.plan.provenance,
            report: &p.report,
        })
        .collect();
    for (i, p) in result.frontier.iter().enumerate() {
        write_json(&dir.join(plan_file_name(i)), &p.plan)?;
        say!("  {}  client={} server={}  {}", plan_file_name(i), p.client_bytes, p.server_bytes, p.plan.summary());
    }
    write_json(
        &dir.join("pareto.json"),
        &ParetoFile {
            candidates: result.candidates,
            truncated: result.truncated,
            feasible: result.feasible,
            pruned: &result.pruned,
            frontier,
        },
    )?;
    say!("wrote {}", dir.join("pareto.json").display());
    Ok(Outcome::Done)
}

fn load_plan(path: &Path) -> Result<PhysicalPlan> {
    let plan: PhysicalPlan = read_json(path)?;
    plan.validate().with_context(|| format!("checking {}", path.display()))?;
    Ok(plan)
}

fn explain(ctx: &Ctx, plan_path: &Path, json: bool) -> Result<Outcome> {
    let spec = ctx.spec()?;
    let plan = load_plan(plan_path)?;
    let db = ctx.data(&spec)?;
    let report = assess(&plan, &spec, &ctx.cfg.deployment, &ctx.calibration, &stats_of(&db))?;
    if json {
        say!("{}", serde_json::to_string_pretty(&report)?);
        return Ok(Outcome::Done);
    }
    let mut out = std::io::stdout().lock();
    writeln!(out, "plan: {}", plan.summary())?;
    writeln!(
        out,
        "{:<20} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}  status",
        "interaction", "bound_ms", "total_ms", "build", "eval", "ship", "residual"
    )?;
    for i in &spec.interactions {
        let Some(b) = report.breakdown.get(&i.name) else { continue };
        let status = if b.total_ms <= i.latency_bound_ms { "ok" } else { "VIOLATED" };
        writeln!(
            out,
            "{:<20} {:>10.3} {:>10.3} {:>10.3} {:>10.3} {:>10.3} {:>10.3}  {status}",
            i.name, i.latency_bound_ms, b.total_ms, b.build_ms, b.eval_ms, b.ship_ms, b.residual_ms
        )?;
    }
    let bytes: Vec<String> = SiteId::ALL
        .iter()
        .map(|s| format!("{s}={}", report.site_bytes.get(s).copied().unwrap_or(0)))
        .collect();
    writeln!(out, "site bytes: {}", bytes.join(" "))?;
    for s in &report.over_budget {
        writeln!(out, "over budget: {s}")?;
    }
    writeln!(out, "feasible: {}", if report.feasible { "yes" } else { "no" })?;
    Ok(Outcome::Done)
}

fn verify(ctx: &Ctx, plan_path: &Path, args: &SampleArgs, inject_fault: bool) -> Result<Outcome> {
    let spec = ctx.spec()?;
    let plan = load_plan(plan_path)?;
    let db = ctx.data(&spec)?;
    let mut session = Session::new(&spec, plan, &db, ctx.cfg.deployment.clone(), args.net)?.with_cell_cap(ctx.cfg.caps.cube_cells);
    if inject_fault {
        session.inject(Fault::DoubleCubeCounts);
    }
    let report = session.verify(ctx.sampling(args))?;
    for v in &report.interactions {
        say!(
            "{:<20} {:>6} checked {:>6} passed {:>6} failed  max {:.3} ms ({})",
            v.interaction,
            v.checked,
            v.passed,
            v.failed,
            v.max_total_ms,
            if v.exhaustive { "exhaustive" } else { "sampled" }
        );
        for f in &v.failures {
            say!("  mismatch at {}: {}", f.binding, f.reason);
        }
    }
    if let Some(dir) = &ctx.cfg.output_dir {
        fs::create_dir_all(dir)?;
        write_json(&dir.join("verify.json"), &report)?;
    }
    if report.passed() {
        say!("verification passed ({} bindings)", report.checked());
        Ok(Outcome::Done)
    } else {
        say!("verification FAILED");
        Ok(Outcome::VerifyFailed)
    }
}

fn bench_cmd(ctx: &Ctx, plan_path: &Path, args: &SampleArgs) -> Result<Outcome> {
    let spec = ctx.spec()?;
    let plan = load_plan(plan_path)?;
    let db = ctx.data(&spec)?;
    let mut session = Session::new(&spec, plan, &db, ctx.cfg.deployment.clone(), args.net)?.with_cell_cap(ctx.cfg.caps.cube_cells);
    let sampling = match ctx.sampling(args) {
        Sampling::Auto { n, seed, .. } => Sampling::Sample { n, seed },
        s => s,
    };
    let (rows, events) = bench(&mut session, &spec, sampling)?;
    write_bench_csv(std::io::stdout().lock(), &rows)?;
    let dir = ctx.out()?;
    write_bench_csv(fs::File::create(dir.join("bench.csv"))?, &rows)?;
    write_jsonl(&dir.join("trace.jsonl"), &events)?;
    Ok(Outcome::Done)
}

fn replay(ctx: &Ctx, plan_path: &Path, trace: &Path, net: NetMode) -> Result<Outcome> {
    let spec = ctx.spec()?;
    let plan = load_plan(plan_path)?;
    let db = ctx.data(&spec)?;
    let inputs: Vec<TraceInput> = read_jsonl(trace)?;
    let mut session = Session::new(&spec, plan, &db, ctx.cfg.deployment.clone(), net)?
        .with_cell_cap(ctx.cfg.caps.cube_cells)
        .with_oracle(true);
    session.warm()?;
    let events = session.replay(&inputs)?;
    let path = ctx.out()?.join("events.jsonl");
    write_jsonl(&path, &events)?;
    let mismatches = events.iter().filter(|e| e.matches_oracle == Some(false)).count();
    say!("{} events, {} oracle mismatches; wrote {}", events.len(), mismatches, path.display());
    Ok(if mismatches == 0 { Outcome::Done } else { Outcome::VerifyFailed })
}
