//! Command-line driver for the lattice simulator.
//!
//! Four subcommands: `contract-bench` times all-ones network contractions
//! over a size range, `ite` evolves a lattice in imaginary time, `sweep`
//! repeats the evolution over a transverse-field grid, and `ed` solves small
//! grids exactly as a reference. Every command prints its primary CSV to
//! stdout and writes the full artifact set (CSV, `metrics.json`, checkpoint)
//! under the output directory.

mod config;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use config::FileConfig;
use peps_core::checkpoint;
use peps_core::ed;
use peps_core::engine::execute_parallel;
use peps_core::ite::{ite_run_observed, IteConfig, TracePoint};
use peps_core::lattice::PepsLattice;
use peps_core::network::ClosedNetwork;
use peps_core::observables::{full_report, ObsOptions, ObservableReport};
use peps_core::plan::{
    estimate_cost, execute_sequential, plan_quadrant, plan_row, plan_row_bands, Plan, PlanKind,
};
use peps_core::tensor::MemLimit;
use serde_json::json;
use std::fmt;
use std::fs::{self, File};
use std::io::Write;
use std::path::PathBuf;
use std::time::Instant;

const REPORT_HEADER: &str = "gamma,J,Lh,Lw,chi_max,epsilon,steps,norm,energy_total,energy_per_site,avg_mx,paper_Mx,avg_mz,paper_Czz,runtime_s";
const TRACE_HEADER: &str = "step,energy,norm,max_chi,elapsed_s";
const BENCH_HEADER: &str = "L,chi,plan,scalar,seconds,peak_elements,messages,bytes";
const EARLY_STOP_THRESHOLD: f64 = 1e-8;

#[derive(Parser)]
#[command(
    name = "peps",
    version,
    about = "Exact tensor-network simulator for the 2D transverse-field Ising model",
    arg_required_else_help = true
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Contract all-ones networks over a size range and report cost columns
    ContractBench(BenchArgs),
    /// Imaginary-time evolution from the uniform product state
    Ite(IteArgs),
    /// One evolution and report per transverse-field value on a grid
    Sweep(SweepArgs),
    /// Dense reference ground state for grids of up to 14 sites
    Ed(EdArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Flat key=value config file; flags override file entries
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for CSV, JSON, and checkpoint artifacts
    #[arg(long)]
    out: Option<PathBuf>,
    /// Single-tensor element ceiling (default 2^30, env PEPS_MEM_CEILING)
    #[arg(long)]
    mem_ceiling: Option<u64>,
    /// Run every network contraction on the four-worker channel engine
    #[arg(long)]
    parallel: bool,
    /// Recorded in metrics.json; current drivers are deterministic
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct BenchArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Smallest square size L
    #[arg(long)]
    l_min: Option<usize>,
    /// Largest square size L
    #[arg(long)]
    l_max: Option<usize>,
    /// Uniform bond dimension of the benchmark networks
    #[arg(long)]
    chi: Option<usize>,
    /// Benchmark a single schedule; default runs both
    #[arg(long, value_enum)]
    plan: Option<PlanArg>,
    /// Write each schedule as plan_<name>_L<size>.txt in the output directory
    #[arg(long)]
    dump_plan: bool,
}

#[derive(Args)]
struct IteArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    lh: Option<usize>,
    #[arg(long)]
    lw: Option<usize>,
    #[arg(long)]
    j: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    /// Total imaginary time; the step extent is tau / steps
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    chi_max: Option<usize>,
    /// Relative singular-value cutoff in [0, 1)
    #[arg(long)]
    epsilon: Option<f64>,
    /// Trace cadence in steps; the final step is always evaluated
    #[arg(long)]
    energy_eval_period: Option<usize>,
    /// Stop once |dE/E| between evaluations falls below 1e-8
    #[arg(long)]
    early_stop: bool,
    /// Contraction schedule for expectation values
    #[arg(long, value_enum)]
    plan: Option<PlanArg>,
}

#[derive(Args)]
struct SweepArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    lh: Option<usize>,
    #[arg(long)]
    lw: Option<usize>,
    #[arg(long)]
    j: Option<f64>,
    #[arg(long)]
    gamma_min: Option<f64>,
    #[arg(long)]
    gamma_max: Option<f64>,
    #[arg(long)]
    gamma_step: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    chi_max: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    energy_eval_period: Option<usize>,
    #[arg(long)]
    early_stop: bool,
    /// Start each point from the previous point's final state instead of the
    /// uniform state
    #[arg(long)]
    warm_start: bool,
    #[arg(long, value_enum)]
    plan: Option<PlanArg>,
}

#[derive(Args)]
struct EdArgs {
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    lh: Option<usize>,
    #[arg(long)]
    lw: Option<usize>,
    #[arg(long)]
    j: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PlanArg {
    Row,
    Quadrant,
}

impl fmt::Display for PlanArg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PlanArg::Row => "row",
            PlanArg::Quadrant => "quadrant",
        })
    }
}

impl std::str::FromStr for PlanArg {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "row" => Ok(PlanArg::Row),
            "quadrant" => Ok(PlanArg::Quadrant),
            other => Err(format!("expected row or quadrant, got `{other}`")),
        }
    }
}

/// Configuration failures carry every collected message and exit 2; runtime
/// failures exit 1.
enum Failure {
    Config(Vec<String>),
    Run(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Run(e)
    }
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(()) => 0,
        Err(Failure::Config(errs)) => {
            for e in &errs {
                eprintln!("error: {e}");
            }
            2
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e:#}");
            1
        }
    };
    std::process::exit(code);
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.cmd {
        Cmd::ContractBench(a) => cmd_contract_bench(resolve_bench(a)?),
        Cmd::Ite(a) => cmd_ite(resolve_ite(a)?),
        Cmd::Sweep(a) => cmd_sweep(resolve_sweep(a)?),
        Cmd::Ed(a) => cmd_ed(resolve_ed(a)?),
    }
    .map_err(Failure::from)
}

/// Settings shared by every subcommand after merging flags and file.
struct CommonCfg {
    out: PathBuf,
    ceiling: u64,
    parallel: bool,
    seed: u64,
}

/// Flag wins over file, but the file key is always consumed so an overridden
/// entry is not misreported as unknown.
fn merge<T>(
    flag: Option<T>,
    file: &mut FileConfig,
    key: &str,
    errors: &mut Vec<String>,
    default: T,
) -> T
where
    T: std::str::FromStr,
    T::Err: fmt::Display,
{
    let from_file = file.take(key, errors);
    flag.or(from_file).unwrap_or(default)
}

/// Merge for switch flags: either source can turn the setting on.
fn merge_switch(flag: bool, file: &mut FileConfig, key: &str, errors: &mut Vec<String>) -> bool {
    let from_file = file.take(key, errors).unwrap_or(false);
    flag || from_file
}

fn resolve_common(
    args: &CommonArgs,
    file: &mut FileConfig,
    errors: &mut Vec<String>,
) -> CommonCfg {
    let out = merge(
        args.out.clone(),
        file,
        "out",
        errors,
        PathBuf::from("out"),
    );
    let file_ceiling = file.take("mem_ceiling", errors);
    let ceiling = config::mem_ceiling(args.mem_ceiling, file_ceiling, errors);
    let parallel = merge_switch(args.parallel, file, "parallel", errors);
    let seed = merge(args.seed, file, "seed", errors, 0);
    CommonCfg {
        out,
        ceiling,
        parallel,
        seed,
    }
}

fn load_file(args: &CommonArgs, errors: &mut Vec<String>) -> FileConfig {
    match &args.config {
        Some(p) => FileConfig::load(p, errors),
        None => FileConfig::empty(),
    }
}

fn finish_resolve(file: FileConfig, errors: Vec<String>) -> Result<(), Failure> {
    let mut errors = errors;
    file.reject_leftovers(&mut errors);
    if errors.is_empty() {
        Ok(())
    } else {
        Err(Failure::Config(errors))
    }
}

struct BenchCfg {
    common: CommonCfg,
    l_min: usize,
    l_max: usize,
    chi: usize,
    plans: Vec<PlanArg>,
    dump_plan: bool,
}

fn resolve_bench(args: BenchArgs) -> Result<BenchCfg, Failure> {
    let mut errors = Vec::new();
    let mut file = load_file(&args.common, &mut errors);
    let common = resolve_common(&args.common, &mut file, &mut errors);
    let l_min = merge(args.l_min, &mut file, "l_min", &mut errors, 4);
    let l_max = merge(args.l_max, &mut file, "l_max", &mut errors, 8);
    let chi = merge(args.chi, &mut file, "chi", &mut errors, 2);
    let file_plan = file.take("plan", &mut errors);
    let plan = args.plan.or(file_plan);
    let dump_plan = merge_switch(args.dump_plan, &mut file, "dump_plan", &mut errors);
    config::require(
        l_min >= 2,
        &mut errors,
        format!("l_min must be at least 2 (got {l_min})"),
    );
    config::require(
        l_max >= l_min,
        &mut errors,
        format!("l_max must be at least l_min (got {l_max} < {l_min})"),
    );
    config::require(
        chi >= 1,
        &mut errors,
        format!("chi must be at least 1 (got {chi})"),
    );
    finish_resolve(file, errors)?;
    Ok(BenchCfg {
        common,
        l_min,
        l_max,
        chi,
        plans: match plan {
            Some(p) => vec![p],
            None => vec![PlanArg::Row, PlanArg::Quadrant],
        },
        dump_plan,
    })
}

struct EvoCfg {
    common: CommonCfg,
    lh: usize,
    lw: usize,
    ite: IteConfig,
    plan: PlanArg,
}

/// Fields shared by `ite` and `sweep`; gamma handling differs between them.
#[allow(clippy::too_many_arguments)]
fn resolve_evolution(
    file: &mut FileConfig,
    errors: &mut Vec<String>,
    lh: Option<usize>,
    lw: Option<usize>,
    j: Option<f64>,
    tau: Option<f64>,
    steps: Option<usize>,
    chi_max: Option<usize>,
    epsilon: Option<f64>,
    energy_eval_period: Option<usize>,
    early_stop: bool,
    plan: Option<PlanArg>,
) -> (usize, usize, IteConfig, PlanArg) {
    let lh = merge(lh, file, "lh", errors, 4);
    let lw = merge(lw, file, "lw", errors, 4);
    let j = merge(j, file, "j", errors, 1.0);
    let tau = merge(tau, file, "tau", errors, 3.0);
    let steps = merge(steps, file, "steps", errors, 100);
    let chi_max = merge(chi_max, file, "chi_max", errors, 2);
    let epsilon = merge(epsilon, file, "epsilon", errors, 0.01);
    let energy_eval_period = merge(energy_eval_period, file, "energy_eval_period", errors, 2);
    let early_stop = merge_switch(early_stop, file, "early_stop", errors);
    let plan = merge(plan, file, "plan", errors, PlanArg::Quadrant);

    config::require(
        lh >= 2,
        errors,
        format!("lh must be at least 2 (got {lh})"),
    );
    config::require(
        lw >= 2,
        errors,
        format!("lw must be at least 2 (got {lw})"),
    );
    config::require(j.is_finite(), errors, format!("j must be finite (got {j})"));
    config::require(
        tau.is_finite() && tau > 0.0,
        errors,
        format!("tau must be positive and finite (got {tau})"),
    );
    config::require(
        steps >= 1,
        errors,
        format!("steps must be at least 1 (got {steps})"),
    );
    config::require(
        chi_max >= 1,
        errors,
        format!("chi_max must be at least 1 (got {chi_max})"),
    );
    config::require(
        (0.0..1.0).contains(&epsilon),
        errors,
        format!("epsilon must lie in [0, 1) (got {epsilon})"),
    );
    config::require(
        energy_eval_period >= 1,
        errors,
        format!("energy_eval_period must be at least 1 (got {energy_eval_period})"),
    );

    let ite = IteConfig {
        j,
        gamma: 0.0,
        tau,
        steps,
        epsilon,
        chi_max,
        energy_eval_period,
        early_stop: early_stop.then_some(EARLY_STOP_THRESHOLD),
    };
    (lh, lw, ite, plan)
}

fn resolve_ite(args: IteArgs) -> Result<EvoCfg, Failure> {
    let mut errors = Vec::new();
    let mut file = load_file(&args.common, &mut errors);
    let common = resolve_common(&args.common, &mut file, &mut errors);
    let (lh, lw, mut ite, plan) = resolve_evolution(
        &mut file,
        &mut errors,
        args.lh,
        args.lw,
        args.j,
        args.tau,
        args.steps,
        args.chi_max,
        args.epsilon,
        args.energy_eval_period,
        args.early_stop,
        args.plan,
    );
    let gamma = merge(args.gamma, &mut file, "gamma", &mut errors, 1.0);
    config::require(
        gamma.is_finite(),
        &mut errors,
        format!("gamma must be finite (got {gamma})"),
    );
    ite.gamma = gamma;
    finish_resolve(file, errors)?;
    Ok(EvoCfg {
        common,
        lh,
        lw,
        ite,
        plan,
    })
}

struct SweepCfg {
    evo: EvoCfg,
    gammas: Vec<f64>,
    warm_start: bool,
}

fn resolve_sweep(args: SweepArgs) -> Result<SweepCfg, Failure> {
    let mut errors = Vec::new();
    let mut file = load_file(&args.common, &mut errors);
    let common = resolve_common(&args.common, &mut file, &mut errors);
    let (lh, lw, ite, plan) = resolve_evolution(
        &mut file,
        &mut errors,
        args.lh,
        args.lw,
        args.j,
        args.tau,
        args.steps,
        args.chi_max,
        args.epsilon,
        args.energy_eval_period,
        args.early_stop,
        args.plan,
    );
    let gamma_min = merge(args.gamma_min, &mut file, "gamma_min", &mut errors, 0.0);
    let gamma_max = merge(args.gamma_max, &mut file, "gamma_max", &mut errors, 4.0);
    let gamma_step = merge(args.gamma_step, &mut file, "gamma_step", &mut errors, 0.5);
    let warm_start = merge_switch(args.warm_start, &mut file, "warm_start", &mut errors);
    config::require(
        gamma_min.is_finite(),
        &mut errors,
        format!("gamma_min must be finite (got {gamma_min})"),
    );
    config::require(
        gamma_max.is_finite() && gamma_max >= gamma_min,
        &mut errors,
        format!("gamma_max must be finite and at least gamma_min (got {gamma_max})"),
    );
    config::require(
        gamma_step.is_finite() && gamma_step > 0.0,
        &mut errors,
        format!("gamma_step must be positive and finite (got {gamma_step})"),
    );
    finish_resolve(file, errors)?;
    Ok(SweepCfg {
        evo: EvoCfg {
            common,
            lh,
            lw,
            ite,
            plan,
        },
        gammas: gamma_grid(gamma_min, gamma_max, gamma_step),
        warm_start,
    })
}

struct EdCfg {
    common: CommonCfg,
    lh: usize,
    lw: usize,
    j: f64,
    gamma: f64,
}

fn resolve_ed(args: EdArgs) -> Result<EdCfg, Failure> {
    let mut errors = Vec::new();
    let mut file = load_file(&args.common, &mut errors);
    let common = resolve_common(&args.common, &mut file, &mut errors);
    let lh = merge(args.lh, &mut file, "lh", &mut errors, 2);
    let lw = merge(args.lw, &mut file, "lw", &mut errors, 2);
    let j = merge(args.j, &mut file, "j", &mut errors, 1.0);
    let gamma = merge(args.gamma, &mut file, "gamma", &mut errors, 1.0);
    config::require(
        lh >= 1,
        &mut errors,
        format!("lh must be at least 1 (got {lh})"),
    );
    config::require(
        lw >= 1,
        &mut errors,
        format!("lw must be at least 1 (got {lw})"),
    );
    config::require(
        lh * lw <= ed::MAX_SITES,
        &mut errors,
        format!(
            "lh*lw must be at most {} for the dense solver (got {})",
            ed::MAX_SITES,
            lh * lw
        ),
    );
    config::require(j.is_finite(), &mut errors, format!("j must be finite (got {j})"));
    config::require(
        gamma.is_finite(),
        &mut errors,
        format!("gamma must be finite (got {gamma})"),
    );
    finish_resolve(file, errors)?;
    Ok(EdCfg {
        common,
        lh,
        lw,
        j,
        gamma,
    })
}

fn gamma_grid(min: f64, max: f64, step: f64) -> Vec<f64> {
    let mut grid = Vec::new();
    for k in 0.. {
        let g = min + k as f64 * step;
        if g > max + 1e-9 * step {
            break;
        }
        grid.push(g);
    }
    grid
}

/// Observable options for a requested schedule. Under the worker engine the
/// row sweep runs as its banded variant so the rows are actually distributed;
/// a single-worker chain would make the engine a no-op.
fn obs_options(plan: PlanArg, parallel: bool, ceiling: u64) -> ObsOptions {
    let kind = match (plan, parallel) {
        (PlanArg::Row, false) => PlanKind::Row,
        (PlanArg::Row, true) => PlanKind::RowBands,
        (PlanArg::Quadrant, _) => PlanKind::Quadrant,
    };
    ObsOptions {
        limit: MemLimit::new(ceiling),
        plan: kind,
        parallel,
    }
}

fn report_row(
    gamma: f64,
    j: f64,
    lh: usize,
    lw: usize,
    chi_max: usize,
    epsilon: f64,
    steps: usize,
    rep: &ObservableReport,
    runtime_s: f64,
) -> String {
    format!(
        "{gamma},{j},{lh},{lw},{chi_max},{epsilon},{steps},{},{},{},{},{},{},{},{runtime_s}",
        rep.norm,
        rep.energy_total,
        rep.energy_per_site,
        rep.avg_mx,
        rep.paper_mx,
        rep.avg_mz,
        rep.paper_czz
    )
}

fn trace_line(p: &TracePoint) -> String {
    format!(
        "{},{},{},{},{}",
        p.step, p.energy, p.norm, p.max_chi, p.elapsed_s
    )
}

fn write_text(path: &PathBuf, content: &str) -> Result<()> {
    fs::write(path, content).with_context(|| format!("writing {}", path.display()))
}

fn cmd_contract_bench(cfg: BenchCfg) -> Result<()> {
    fs::create_dir_all(&cfg.common.out)
        .with_context(|| format!("creating {}", cfg.common.out.display()))?;
    let path = cfg.common.out.join("bench.csv");
    let mut out = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    writeln!(out, "{BENCH_HEADER}")?;
    println!("{BENCH_HEADER}");
    let limit = MemLimit::new(cfg.common.ceiling);

    for l in cfg.l_min..=cfg.l_max {
        let net = ClosedNetwork::all_ones(l, l, cfg.chi);
        for &which in &cfg.plans {
            let plan = build_bench_plan(&net, which, cfg.common.parallel, l)?;
            if cfg.dump_plan {
                let name = cfg.common.out.join(format!("plan_{which}_L{l}.txt"));
                write_text(&name, &plan.render())?;
            }
            let row = bench_row(&net, &plan, l, cfg.chi, which, cfg.common.parallel, limit, cfg.common.ceiling);
            writeln!(out, "{row}")?;
            out.flush()?;
            println!("{row}");
        }
    }
    write_text(
        &cfg.common.out.join("metrics.json"),
        &serde_json::to_string_pretty(&json!({
            "l_min": cfg.l_min,
            "l_max": cfg.l_max,
            "chi": cfg.chi,
            "parallel": cfg.common.parallel,
            "mem_ceiling": cfg.common.ceiling,
            "seed": cfg.common.seed,
        }))?,
    )?;
    Ok(())
}

fn build_bench_plan(
    net: &ClosedNetwork,
    which: PlanArg,
    parallel: bool,
    l: usize,
) -> Result<Plan> {
    let plan = match (which, parallel) {
        (PlanArg::Row, false) => plan_row(net),
        (PlanArg::Row, true) => plan_row_bands(net, l).map_err(|e| anyhow!("row bands: {e}"))?,
        (PlanArg::Quadrant, _) => plan_quadrant(net).map_err(|e| anyhow!("quadrant: {e}"))?,
    };
    Ok(plan)
}

/// One benchmark CSV row. A predicted or actual breach of the ceiling marks
/// the scalar and timing columns `OOM` and keeps the predicted peak, so the
/// sweep continues past sizes this machine cannot contract.
#[allow(clippy::too_many_arguments)]
fn bench_row(
    net: &ClosedNetwork,
    plan: &Plan,
    l: usize,
    chi: usize,
    which: PlanArg,
    parallel: bool,
    limit: MemLimit,
    ceiling: u64,
) -> String {
    let predicted = match estimate_cost(net, plan) {
        Ok(c) => c.peak_elements,
        Err(e) => return format!("{l},{chi},{which},ERR({e}),0,0,0,0"),
    };
    if predicted > ceiling {
        return format!("{l},{chi},{which},OOM,OOM,{predicted},0,0");
    }
    let t0 = Instant::now();
    let outcome = if parallel {
        execute_parallel(net, plan, limit)
            .map(|(v, stats, cost)| (v, cost.peak_elements, stats.messages_sent, stats.bytes_sent))
            .map_err(|e| e.to_string())
    } else {
        execute_sequential(net, plan, limit)
            .map(|(v, cost)| (v, cost.peak_elements, 0, 0))
            .map_err(|e| e.to_string())
    };
    let seconds = t0.elapsed().as_secs_f64();
    match outcome {
        Ok((value, peak, messages, bytes)) => format!(
            "{l},{chi},{which},{},{seconds},{peak},{messages},{bytes}",
            value.log2()
        ),
        Err(_) => format!("{l},{chi},{which},OOM,OOM,{predicted},0,0"),
    }
}

fn cmd_ite(cfg: EvoCfg) -> Result<()> {
    fs::create_dir_all(&cfg.common.out)
        .with_context(|| format!("creating {}", cfg.common.out.display()))?;
    let opts = obs_options(cfg.plan, cfg.common.parallel, cfg.common.ceiling);
    let trace_path = cfg.common.out.join("trace.csv");
    let mut trace_file =
        File::create(&trace_path).with_context(|| format!("creating {}", trace_path.display()))?;
    writeln!(trace_file, "{TRACE_HEADER}")?;
    trace_file.flush()?;
    println!("{TRACE_HEADER}");

    let t0 = Instant::now();
    let initial = PepsLattice::init_uniform(cfg.lh, cfg.lw)
        .map_err(|e| anyhow!("initial state: {e}"))?;
    let mut io_error: Option<std::io::Error> = None;
    let mut observe = |p: &TracePoint| {
        let line = trace_line(p);
        println!("{line}");
        if io_error.is_none() {
            // Flush per point so the file survives a failure mid-run.
            io_error = writeln!(trace_file, "{line}")
                .and_then(|_| trace_file.flush())
                .err();
        }
    };
    let outcome = ite_run_observed(&cfg.ite, initial, &opts, &mut observe)
        .map_err(|e| anyhow!("evolution failed (partial trace kept): {e}"))?;
    if let Some(e) = io_error {
        return Err(anyhow!("writing {}: {e}", trace_path.display()));
    }

    let (report, ledger) = full_report(&outcome.lattice, cfg.ite.j, cfg.ite.gamma, &opts)
        .map_err(|e| anyhow!("final report: {e}"))?;
    let runtime_s = t0.elapsed().as_secs_f64();
    let row = report_row(
        cfg.ite.gamma,
        cfg.ite.j,
        cfg.lh,
        cfg.lw,
        cfg.ite.chi_max,
        cfg.ite.epsilon,
        cfg.ite.steps,
        &report,
        runtime_s,
    );
    write_text(
        &cfg.common.out.join("report.csv"),
        &format!("{REPORT_HEADER}\n{row}\n"),
    )?;
    println!("{REPORT_HEADER}");
    println!("{row}");

    checkpoint::save(&outcome.lattice, cfg.common.out.join("final.peps"))
        .map_err(|e| anyhow!("checkpoint: {e}"))?;
    write_text(
        &cfg.common.out.join("metrics.json"),
        &serde_json::to_string_pretty(&json!({
            "phases": outcome.phases,
            "ledger": ledger,
            "runtime_s": runtime_s,
            "traced_points": outcome.trace.len(),
            "lh": cfg.lh,
            "lw": cfg.lw,
            "gamma": cfg.ite.gamma,
            "j": cfg.ite.j,
            "tau": cfg.ite.tau,
            "steps": cfg.ite.steps,
            "chi_max": cfg.ite.chi_max,
            "epsilon": cfg.ite.epsilon,
            "parallel": cfg.common.parallel,
            "mem_ceiling": cfg.common.ceiling,
            "seed": cfg.common.seed,
        }))?,
    )?;
    Ok(())
}

fn cmd_sweep(cfg: SweepCfg) -> Result<()> {
    let evo = &cfg.evo;
    fs::create_dir_all(&evo.common.out)
        .with_context(|| format!("creating {}", evo.common.out.display()))?;
    let opts = obs_options(evo.plan, evo.common.parallel, evo.common.ceiling);
    let path = evo.common.out.join("sweep.csv");
    let mut out = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    writeln!(out, "{REPORT_HEADER}")?;
    println!("{REPORT_HEADER}");

    let mut carried: Option<PepsLattice> = None;
    let mut failures: Vec<String> = Vec::new();
    let mut point_metrics = Vec::new();
    for &gamma in &cfg.gammas {
        let mut ite_cfg = evo.ite.clone();
        ite_cfg.gamma = gamma;
        let initial = match (&carried, cfg.warm_start) {
            (Some(prev), true) => prev.clone(),
            _ => PepsLattice::init_uniform(evo.lh, evo.lw)
                .map_err(|e| anyhow!("initial state: {e}"))?,
        };
        let t0 = Instant::now();
        let point = peps_core::ite::ite_run(&ite_cfg, initial, &opts)
            .map_err(|e| e.to_string())
            .and_then(|o| {
                full_report(&o.lattice, ite_cfg.j, gamma, &opts)
                    .map(|(rep, led)| (o, rep, led))
                    .map_err(|e| e.to_string())
            });
        match point {
            Ok((outcome, report, ledger)) => {
                let row = report_row(
                    gamma,
                    ite_cfg.j,
                    evo.lh,
                    evo.lw,
                    ite_cfg.chi_max,
                    ite_cfg.epsilon,
                    ite_cfg.steps,
                    &report,
                    t0.elapsed().as_secs_f64(),
                );
                writeln!(out, "{row}")?;
                out.flush()?;
                println!("{row}");
                point_metrics.push(json!({
                    "gamma": gamma,
                    "phases": outcome.phases,
                    "ledger": ledger,
                    "runtime_s": t0.elapsed().as_secs_f64(),
                }));
                carried = Some(outcome.lattice);
            }
            Err(e) => {
                // A failed point is recorded and the grid continues; rows
                // stay ordered because each is flushed as it lands.
                let note = format!("gamma={gamma}: {e}");
                eprintln!("error: {note}");
                failures.push(note);
                carried = None;
            }
        }
    }
    if !failures.is_empty() {
        write_text(
            &evo.common.out.join("errors.log"),
            &(failures.join("\n") + "\n"),
        )?;
    }
    write_text(
        &evo.common.out.join("metrics.json"),
        &serde_json::to_string_pretty(&json!({
            "points": point_metrics,
            "failures": failures,
            "lh": evo.lh,
            "lw": evo.lw,
            "j": evo.ite.j,
            "tau": evo.ite.tau,
            "steps": evo.ite.steps,
            "chi_max": evo.ite.chi_max,
            "epsilon": evo.ite.epsilon,
            "warm_start": cfg.warm_start,
            "parallel": evo.common.parallel,
            "mem_ceiling": evo.common.ceiling,
            "seed": evo.common.seed,
        }))?,
    )?;
    Ok(())
}

fn cmd_ed(cfg: EdCfg) -> Result<()> {
    fs::create_dir_all(&cfg.common.out)
        .with_context(|| format!("creating {}", cfg.common.out.display()))?;
    let t0 = Instant::now();
    let result = ed::ground_state(cfg.lh, cfg.lw, cfg.j, cfg.gamma)
        .map_err(|e| anyhow!("ground state: {e}"))?;
    let report = ed::ed_observables(cfg.lh, cfg.lw, cfg.j, cfg.gamma, &result.ground_state)
        .map_err(|e| anyhow!("observables: {e}"))?;
    let runtime_s = t0.elapsed().as_secs_f64();
    let row = report_row(
        cfg.gamma, cfg.j, cfg.lh, cfg.lw, 0, 0.0, 0, &report, runtime_s,
    );
    println!("{REPORT_HEADER}");
    println!("{row}");
    println!("ground_energy,{}", result.ground_energy);
    write_text(
        &cfg.common.out.join("report.csv"),
        &format!("{REPORT_HEADER}\n{row}\n"),
    )?;
    write_text(
        &cfg.common.out.join("metrics.json"),
        &serde_json::to_string_pretty(&json!({
            "ground_energy": result.ground_energy,
            "residual": result.residual,
            "iterations": result.iterations,
            "runtime_s": runtime_s,
            "lh": cfg.lh,
            "lw": cfg.lw,
            "j": cfg.j,
            "gamma": cfg.gamma,
            "seed": cfg.common.seed,
        }))?,
    )?;
    Ok(())
}
