use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use mbdiff::diffusion::write_trace_csv;
use mbdiff::experiment::{self, rng_for, ExperimentConfig, RunRecord};
use mbdiff::SeedPlan;

/// Multi-behavior diffusion under per-node resource budgets.
#[derive(Parser)]
#[command(name = "mbdiff", version, arg_required_else_help = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a generated (or re-read) topology as an edge list.
    Generate {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Edge-list file to write.
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Select the seeds of one run and write seeds.csv.
    Seeds {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 0)]
        run: usize,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Diffuse one run; writes seeds.csv, trace.csv and metrics.json.
    Simulate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 0)]
        run: usize,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Monte Carlo experiment; writes runs.csv and aggregate.json.
    Experiment {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Run several heuristics on shared streams and test every pair.
    Compare {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Comma-separated heuristic codes, e.g. h1,h4,h7.
        #[arg(long)]
        heuristics: Option<String>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Utilization across seed fractions for several heuristics.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        heuristics: Option<String>,
        /// Comma-separated seed fractions.
        #[arg(long)]
        alphas: Option<String>,
        #[arg(short, long)]
        out: PathBuf,
    },
}

/// Config file plus flag overrides; flags win.
#[derive(Args)]
struct ConfigArgs {
    /// `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// pa, sw, sc, or an edge-list path.
    #[arg(long)]
    topology: Option<String>,
    #[arg(long)]
    n: Option<String>,
    #[arg(long)]
    w: Option<String>,
    /// Comma-separated behavior costs.
    #[arg(long)]
    costs: Option<String>,
    #[arg(long)]
    utilities: Option<String>,
    #[arg(long)]
    alpha: Option<String>,
    /// Explicit seed count; overrides alpha.
    #[arg(long)]
    b: Option<String>,
    /// h1..h7, full or full-pinned.
    #[arg(long)]
    heuristic: Option<String>,
    /// low, inv, unif, prop or high.
    #[arg(long)]
    distribution: Option<String>,
    /// Target ratio such as 1:2:3.
    #[arg(long)]
    target: Option<String>,
    /// threshold or network.
    #[arg(long)]
    regime: Option<String>,
    #[arg(long)]
    runs: Option<String>,
    /// Master seed.
    #[arg(long)]
    seed: Option<String>,
    #[arg(long)]
    max_epochs: Option<String>,
    #[arg(long)]
    rewire_p: Option<String>,
    #[arg(long)]
    avg_degree: Option<String>,
    #[arg(long)]
    drop_allowed: bool,
    #[arg(long)]
    fix_resources: bool,
    #[arg(long)]
    keep_isolated: bool,
    /// Record the per-epoch adoption trace of run 0.
    #[arg(long)]
    trace: bool,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path).with_context(|| format!("config {}", path.display()))?,
            None => ExperimentConfig::default(),
        };
        let values = [
            ("topology", &self.topology),
            ("n", &self.n),
            ("w", &self.w),
            ("costs", &self.costs),
            ("utilities", &self.utilities),
            ("alpha", &self.alpha),
            ("b", &self.b),
            ("heuristic", &self.heuristic),
            ("distribution", &self.distribution),
            ("regime", &self.regime),
            ("runs", &self.runs),
            ("seed", &self.seed),
            ("max_epochs", &self.max_epochs),
            ("rewire_p", &self.rewire_p),
            ("avg_degree", &self.avg_degree),
            ("target", &self.target),
        ];
        for (key, value) in values {
            if let Some(v) = value {
                cfg.set(key, v)
                    .with_context(|| format!("--{}", key.replace('_', "-")))?;
            }
        }
        let flags = [
            ("drop_allowed", self.drop_allowed),
            ("fix_resources", self.fix_resources),
            ("keep_isolated", self.keep_isolated),
            ("trace", self.trace),
        ];
        for (key, on) in flags {
            if on {
                cfg.set(key, "true")?;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let cfg = match cli.command.config_args().resolve() {
        Ok(cfg) => cfg,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    match execute(cli.command, cfg) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

impl Command {
    fn config_args(&self) -> &ConfigArgs {
        match self {
            Self::Generate { cfg, .. }
            | Self::Seeds { cfg, .. }
            | Self::Simulate { cfg, .. }
            | Self::Experiment { cfg, .. }
            | Self::Compare { cfg, .. }
            | Self::Sweep { cfg, .. } => cfg,
        }
    }
}

fn execute(command: Command, mut cfg: ExperimentConfig) -> Result<()> {
    match command {
        Command::Generate { out, .. } => {
            let g = experiment::build_graph(&cfg, &mut rng_for(cfg.master_seed, 0, "topology"))?;
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            write_with(&out, |w| g.write_edge_list(w))?;
            let mut sidecar = out.clone().into_os_string();
            sidecar.push(".cfg");
            fs::write(&sidecar, cfg.to_kv_string())?;
            println!(
                "{} nodes, {} edges -> {}",
                g.node_count(),
                g.edge_count(),
                out.display()
            );
        }
        Command::Seeds { run, out, .. } => {
            prepare(&out, &cfg)?;
            let (_, _, seeds) = experiment::select_seeds(&cfg, run)?;
            write_with(&out.join("seeds.csv"), |w| seeds.write_csv(w))?;
            println!("{} seeds {:?} -> {}", seeds.seed_count(), seeds.counts(), out.display());
        }
        Command::Simulate { run, out, .. } => {
            cfg.trace = true;
            prepare(&out, &cfg)?;
            let detail = experiment::run_single(&cfg, run)?;
            if let Some(seeds) = &detail.assignment {
                write_with(&out.join("seeds.csv"), |w| seeds.write_csv(w))?;
            }
            if let Some(trace) = &detail.trace {
                write_with(&out.join("trace.csv"), |w| write_trace_csv(trace, w))?;
            }
            write_json(&out.join("metrics.json"), &serde_json::to_value(&detail.record)?)?;
            print_record(&detail.record);
        }
        Command::Experiment { out, .. } => {
            prepare(&out, &cfg)?;
            let res = experiment::run_experiment(&cfg)?;
            write_with(&out.join("runs.csv"), |w| {
                experiment::write_runs_csv(&res.records, cfg.costs.len(), w)
            })?;
            write_json(&out.join("aggregate.json"), &serde_json::to_value(&res.aggregate)?)?;
            if let Some(trace) = &res.trace {
                write_with(&out.join("trace.csv"), |w| write_trace_csv(trace, w))?;
            }
            let a = &res.aggregate;
            println!(
                "{} runs: utilization {:.4} ± {:.4}, participation {:.2}, adoption {:.2}, converged {:.1}%",
                a.runs,
                a.utilization.mean,
                a.utilization.stderr,
                a.participation.mean,
                a.adoption.mean,
                100.0 * a.converged_fraction
            );
            if let (Some(kl), Some(klm)) = (a.kl, a.kl_of_mean) {
                println!("kl {:.4} ± {:.4} (of mean distribution {:.4})", kl.mean, kl.stderr, klm);
            }
        }
        Command::Compare { heuristics, out, .. } => {
            if let Some(h) = heuristics {
                cfg.set("heuristics", &h)?;
            }
            prepare(&out, &cfg)?;
            let table = experiment::compare_heuristics(&cfg, &cfg.heuristics)?;
            write_with(&out.join("compare.csv"), |w| table.write_csv(w))?;
            let summary: Vec<_> = table
                .summaries
                .iter()
                .map(|s| serde_json::json!({ "heuristic": s.heuristic, "aggregate": s.aggregate }))
                .collect();
            write_json(&out.join("summary.json"), &summary.into())?;
            for s in &table.summaries {
                let u = s.aggregate.utilization;
                println!("{}: utilization {:.4} ± {:.4}", s.heuristic, u.mean, u.stderr);
            }
        }
        Command::Sweep {
            heuristics,
            alphas,
            out,
            ..
        } => {
            if let Some(h) = heuristics {
                cfg.set("heuristics", &h)?;
            }
            if let Some(a) = alphas {
                cfg.set("alphas", &a)?;
            }
            prepare(&out, &cfg)?;
            let points = experiment::sweep_alpha(&cfg, &cfg.alphas, &cfg.heuristics)?;
            write_with(&out.join("sweep.csv"), |w| experiment::write_sweep_csv(&points, w))?;
            for p in &points {
                println!("alpha {} {}: {:.4}", p.alpha, p.heuristic, p.aggregate.utilization.mean);
            }
        }
    }
    Ok(())
}

/// Creates `dir` and writes the effective config into it.
fn prepare(dir: &Path, cfg: &ExperimentConfig) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut text = cfg.to_kv_string();
    if let SeedPlan::FullKnapsack(_) = cfg.heuristic {
        text.push_str("# seed counts and distribution are unused by full plans\n");
    }
    fs::write(dir.join("effective.cfg"), text)?;
    Ok(())
}

fn write_with(path: &Path, f: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    f(&mut w)?;
    w.flush()?;
    Ok(())
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<()> {
    write_with(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w)
    })
}

fn print_record(r: &RunRecord) {
    println!(
        "run {}: {} seeds, utilization {:.4}, participation {}, adoption {}, {} epochs{}",
        r.run_id,
        r.seeds,
        r.utilization,
        r.participation,
        r.adoption,
        r.epochs,
        if r.converged { "" } else { " (not converged)" }
    );
}
