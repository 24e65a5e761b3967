//! `cmt-balance`: run balanced particle-simulation scenarios, or partition a
//! load array offline.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use cmt_balance_core::{
    partition_centralized, partition_distributed, partition_hybrid, run_simulation, total_sim_time,
    Algorithm, ElementLoadArray, ElementProcessorMap, Error, ExecMode, GlobalElementIndex,
    PartitionConfig, RankEnsemble, RunConfigBuilder,
};

#[derive(Parser)]
#[command(
    name = "cmt-balance",
    version,
    about = "Dynamic load balancing for particle-laden spectral-element runs"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a full simulated scenario and write its trace.
    Run(RunArgs),
    /// Partition one load array and print each rank's first element.
    Partition(PartitionArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Flat `key = value` config file; flags below override its keys.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of logical ranks.
    #[arg(long)]
    ranks: Option<usize>,
    /// Elements per axis, e.g. 12,1,1.
    #[arg(long)]
    elements: Option<String>,
    /// Total particle count.
    #[arg(long)]
    particles: Option<usize>,
    /// centralized | distributed | hybrid
    #[arg(long)]
    algorithm: Option<String>,
    /// fixed:<k> | adaptive | never
    #[arg(long)]
    trigger: Option<String>,
    /// Maximum elements any rank may own.
    #[arg(long)]
    lelt: Option<usize>,
    /// Per-element fluid cost, in per-particle units.
    #[arg(long = "fluid-load")]
    fluid_load: Option<f64>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// sequential | threaded
    #[arg(long = "exec-mode")]
    exec_mode: Option<String>,
    /// Trace CSV path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PartitionArgs {
    /// File of per-element loads, comma- or line-separated.
    #[arg(long)]
    loads: PathBuf,
    #[arg(long)]
    np: usize,
    #[arg(long)]
    lelt: usize,
    /// centralized | distributed | hybrid
    #[arg(long)]
    algorithm: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Run(args) => cmd_run(args),
        Cmd::Partition(args) => cmd_partition(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            let infeasible = e
                .chain()
                .filter_map(|c| c.downcast_ref::<Error>())
                .any(|c| matches!(c, Error::Infeasible { .. }));
            ExitCode::from(if infeasible { 2 } else { 1 })
        }
    }
}

fn cmd_run(args: RunArgs) -> anyhow::Result<()> {
    let file = match &args.config {
        Some(p) => RunConfigBuilder::from_file(p)
            .with_context(|| format!("loading config {}", p.display()))?,
        None => RunConfigBuilder::default(),
    };
    let mut flags = RunConfigBuilder::default();
    if let Some(n) = args.ranks {
        flags.np = Some(n);
    }
    if let Some(v) = &args.elements {
        flags.set("elements", v)?;
    }
    if let Some(n) = args.particles {
        flags.particles = Some(n);
    }
    if let Some(v) = &args.algorithm {
        flags.set("algorithm", v)?;
    }
    if let Some(v) = &args.trigger {
        flags.set("trigger", v)?;
    }
    if let Some(n) = args.lelt {
        flags.lelt = Some(n);
    }
    if let Some(f) = args.fluid_load {
        flags.fluid_load = Some(f);
    }
    if let Some(n) = args.steps {
        flags.steps = Some(n);
    }
    if let Some(n) = args.seed {
        flags.seed = Some(n);
    }
    if let Some(v) = &args.exec_mode {
        flags.set("exec_mode", v)?;
    }
    if let Some(p) = args.out {
        flags.out = Some(p);
    }

    let cfg = file.merge(flags).build()?;
    let out = run_simulation(&cfg)?;

    let last = out.traces.last().expect("steps >= 1");
    println!(
        "ran {} steps on {} ranks ({:?}, {} elements, {} particles)",
        cfg.steps,
        cfg.np,
        cfg.algorithm,
        cfg.nelgt(),
        cfg.particles
    );
    match out.lb_steps.len() {
        0 => println!("balancing events: initial only"),
        n => println!(
            "balancing events: initial + {n} at steps {:?}",
            out.lb_steps
        ),
    }
    println!("total simulated time: {}", total_sim_time(&out));
    println!("final imbalance: {:.4}", last.imbalance);
    if let Some(path) = &cfg.out {
        println!("trace written to {}", path.display());
    }
    Ok(())
}

fn cmd_partition(args: PartitionArgs) -> anyhow::Result<()> {
    let text = std::fs::read_to_string(&args.loads)
        .with_context(|| format!("reading {}", args.loads.display()))?;
    let mut loads = Vec::new();
    for tok in text.split(|c: char| c == ',' || c.is_whitespace()) {
        let tok = tok.trim();
        if tok.is_empty() {
            continue;
        }
        let v: f64 = tok
            .parse()
            .with_context(|| format!("bad load value `{tok}`"))?;
        if !(v >= 0.0) || !v.is_finite() {
            bail!("load values must be finite and >= 0, got {v}");
        }
        loads.push(v);
    }
    if loads.is_empty() {
        bail!("{} contains no load values", args.loads.display());
    }
    if args.np < 1 {
        bail!("--np must be >= 1");
    }

    let algorithm: Algorithm = args.algorithm.parse::<Algorithm>()?;
    let nelgt = loads.len();
    let pcfg = PartitionConfig::new(args.np, args.lelt);
    let map = match algorithm {
        Algorithm::Centralized => partition_centralized(&ElementLoadArray::global(loads), &pcfg)?,
        Algorithm::Distributed | Algorithm::Hybrid => {
            // Offline runs start from the uniform split, matching how a live
            // run's very first balance sees its loads.
            let start = ElementProcessorMap::uniform(args.np, nelgt);
            let locals = split_by_map(&loads, &start)?;
            let ens = RankEnsemble::new(args.np, ExecMode::Sequential);
            match algorithm {
                Algorithm::Distributed => partition_distributed(&ens, &locals, &pcfg)?,
                _ => partition_hybrid(&ens, &locals, &pcfg)?,
            }
        }
    };
    let rendered: Vec<String> = map.first_elements().iter().map(u32::to_string).collect();
    println!("{}", rendered.join(","));
    Ok(())
}

fn split_by_map(loads: &[f64], map: &ElementProcessorMap) -> anyhow::Result<Vec<ElementLoadArray>> {
    let mut out = Vec::with_capacity(map.np());
    for rank in 0..map.np() {
        let (ids, vals) = match map.range(rank) {
            Some((s, e)) => (
                (s..=e).map(GlobalElementIndex).collect::<Vec<_>>(),
                loads[s as usize - 1..e as usize].to_vec(),
            ),
            None => (Vec::new(), Vec::new()),
        };
        out.push(ElementLoadArray::new(ids, vals)?);
    }
    Ok(out)
}
