//! Monte Carlo harness: threshold-average and network-average regimes,
//! heuristic comparison, target-distribution matching and alpha sweeps.
//!
//! Every random stream is derived from `(master_seed, run index, tag)`, so a
//! config plus its master seed fixes every reported number regardless of how
//! runs are scheduled.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::PathBuf;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::diffusion::{self, DiffusionConfig};
use crate::error::{Error, Result};
use crate::graph::{self, Graph};
use crate::metrics::{compute_metrics, kl_divergence, seed_everyone, Estimate, FullSeedMode};
use crate::model::{draw_uniform, Population, Roster};
use crate::par;
use crate::seeding::{allocate_counts, apply_seeds, Distribution, Heuristic, SeedAssignment};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Topology {
    PreferentialAttachment,
    SmallWorld,
    SpatiallyClustered,
    File(PathBuf),
}

impl Topology {
    pub fn label(&self) -> String {
        match self {
            Self::PreferentialAttachment => "pa".into(),
            Self::SmallWorld => "sw".into(),
            Self::SpatiallyClustered => "sc".into(),
            Self::File(p) => p.display().to_string(),
        }
    }
}

impl FromStr for Topology {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        Ok(match t.to_ascii_lowercase().as_str() {
            "pa" => Self::PreferentialAttachment,
            "sw" => Self::SmallWorld,
            "sc" => Self::SpatiallyClustered,
            "" => return Err(Error::Config("empty topology".into())),
            _ => Self::File(PathBuf::from(t.strip_prefix("file:").unwrap_or(t))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    /// One topology, fresh node randomness per run.
    ThresholdAverage,
    /// One draw of node randomness, fresh topology per run.
    NetworkAverage,
}

impl Regime {
    pub fn tag(self) -> &'static str {
        match self {
            Self::ThresholdAverage => "threshold",
            Self::NetworkAverage => "network",
        }
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "threshold" | "threshold_average" => Ok(Self::ThresholdAverage),
            "network" | "network_average" => Ok(Self::NetworkAverage),
            other => Err(Error::Config(format!("unknown regime {other:?}"))),
        }
    }
}

/// Which nodes start as early adopters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SeedPlan {
    Heuristic(Heuristic),
    /// Every node starts from its intrinsic knapsack set.
    FullKnapsack(FullSeedMode),
}

impl SeedPlan {
    pub fn code(self) -> &'static str {
        match self {
            Self::Heuristic(h) => h.code(),
            Self::FullKnapsack(FullSeedMode::Aligning) => "full",
            Self::FullKnapsack(FullSeedMode::Pinned) => "full-pinned",
        }
    }
}

impl FromStr for SeedPlan {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "full" => Ok(Self::FullKnapsack(FullSeedMode::Aligning)),
            "full-pinned" | "full_pinned" => Ok(Self::FullKnapsack(FullSeedMode::Pinned)),
            other => other.parse().map(Self::Heuristic),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub topology: Topology,
    pub n: usize,
    pub costs: Vec<f64>,
    pub utilities: Vec<f64>,
    pub w: f64,
    /// Seed fraction; ignored when `b` is set.
    pub alpha: f64,
    pub b: Option<usize>,
    pub heuristic: SeedPlan,
    pub distribution: Distribution,
    pub regime: Regime,
    pub runs: usize,
    pub master_seed: u64,
    pub max_epochs: usize,
    pub drop_allowed: bool,
    /// Threshold average only: keep resources from the master stream.
    pub fix_resources: bool,
    pub keep_isolated: bool,
    pub rewire_p: f64,
    pub avg_degree: f64,
    /// Record the per-epoch trace of run 0.
    pub trace: bool,
    /// Heuristics run side by side by `compare` and `sweep`.
    pub heuristics: Vec<Heuristic>,
    /// Seed fractions visited by `sweep`.
    pub alphas: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            topology: Topology::PreferentialAttachment,
            n: 500,
            costs: vec![0.2, 0.5, 0.7],
            utilities: vec![0.2, 0.5, 0.7],
            w: 0.5,
            alpha: 0.1,
            b: None,
            heuristic: SeedPlan::Heuristic(Heuristic::EiaHillClimbing),
            distribution: Distribution::Unif,
            regime: Regime::ThresholdAverage,
            runs: 500,
            master_seed: 1,
            max_epochs: 1000,
            drop_allowed: false,
            fix_resources: false,
            keep_isolated: false,
            rewire_p: 0.2,
            avg_degree: 10.0,
            trace: false,
            heuristics: Heuristic::ALL.to_vec(),
            alphas: vec![0.02, 0.04, 0.06, 0.08, 0.1, 0.12, 0.14, 0.16, 0.18, 0.2],
        }
    }
}

fn parse_list(value: &str) -> Result<Vec<f64>> {
    value
        .split([',', ':'])
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad number {t:?} in list {value:?}")))
        })
        .collect()
}

fn parse_bool(value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        other => Err(Error::Config(format!("bad boolean {other:?}"))),
    }
}

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad value {value:?} for {key}")))
}

/// Normalizes a ratio such as `3:2:1` to a probability vector.
pub fn normalize_ratio(ratio: &[f64]) -> Result<Vec<f64>> {
    let sum: f64 = ratio.iter().sum();
    if ratio.is_empty() || ratio.iter().any(|&x| x.is_nan() || x < 0.0) || sum <= 0.0 {
        return Err(Error::Config(format!("invalid target ratio {ratio:?}")));
    }
    if (sum - 1.0).abs() < 1e-12 {
        return Ok(ratio.to_vec());
    }
    Ok(ratio.iter().map(|x| x / sum).collect())
}

impl ExperimentConfig {
    /// Parses `key = value` lines on top of the defaults. `#` starts a
    /// comment; list values are comma separated.
    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut target = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", idx + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            if key == "target" {
                target = Some(value.to_string());
            } else {
                cfg.set(key, value)?;
            }
        }
        if let Some(t) = target {
            cfg.set("target", &t)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        Self::from_kv_str(&std::fs::read_to_string(path)?)
    }

    /// Applies one setting; keys match the config file and CLI flags.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key.trim().replace('-', "_").as_str() {
            "topology" => self.topology = value.parse()?,
            "n" => self.n = parse_num(key, value)?,
            "costs" => self.costs = parse_list(value)?,
            "utilities" => self.utilities = parse_list(value)?,
            "w" => self.w = parse_num(key, value)?,
            "alpha" => {
                self.alpha = parse_num(key, value)?;
                self.b = None;
            }
            "b" => {
                self.b = match value.trim() {
                    "" | "none" => None,
                    v => Some(parse_num(key, v)?),
                }
            }
            "heuristic" => self.heuristic = value.parse()?,
            "distribution" => {
                let d: Distribution = value.parse()?;
                if !matches!(
                    (&d, &self.distribution),
                    (Distribution::Target(_), Distribution::Target(_))
                ) {
                    self.distribution = d;
                }
            }
            "target" => self.distribution = Distribution::Target(normalize_ratio(&parse_list(value)?)?),
            "regime" => self.regime = value.parse()?,
            "runs" => self.runs = parse_num(key, value)?,
            "seed" | "master_seed" => self.master_seed = parse_num(key, value)?,
            "max_epochs" => self.max_epochs = parse_num(key, value)?,
            "drop_allowed" => self.drop_allowed = parse_bool(value)?,
            "fix_resources" => self.fix_resources = parse_bool(value)?,
            "keep_isolated" => self.keep_isolated = parse_bool(value)?,
            "rewire_p" => self.rewire_p = parse_num(key, value)?,
            "avg_degree" => self.avg_degree = parse_num(key, value)?,
            "trace" => self.trace = parse_bool(value)?,
            "heuristics" => {
                self.heuristics = value
                    .split(',')
                    .map(str::trim)
                    .filter(|t| !t.is_empty())
                    .map(str::parse)
                    .collect::<Result<_>>()?
            }
            "alphas" => self.alphas = parse_list(value)?,
            other => return Err(Error::Config(format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.roster()?;
        if self.runs == 0 {
            return Err(Error::Config("runs must be >= 1".into()));
        }
        if self.max_epochs == 0 {
            return Err(Error::Config("max_epochs must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.w) {
            return Err(Error::Config(format!("w = {} outside [0, 1]", self.w)));
        }
        if self.b.is_none() && !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Config(format!("alpha = {} outside (0, 1]", self.alpha)));
        }
        if let Distribution::Target(q) = &self.distribution {
            if q.len() != self.costs.len() {
                return Err(Error::Config(format!(
                    "target needs {} entries, got {}",
                    self.costs.len(),
                    q.len()
                )));
            }
        }
        if self.regime == Regime::NetworkAverage && matches!(self.topology, Topology::File(_)) {
            return Err(Error::Config(
                "network average needs a generated topology; a file topology is fixed".into(),
            ));
        }
        Ok(())
    }

    pub fn roster(&self) -> Result<Roster> {
        Roster::new(&self.costs, &self.utilities)
    }

    /// Canonical `key = value` form; parsing it back yields an equal config.
    pub fn to_kv_string(&self) -> String {
        let list = |xs: &[f64]| xs.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        let mut s = String::new();
        let _ = writeln!(s, "topology = {}", self.topology.label());
        let _ = writeln!(s, "n = {}", self.n);
        let _ = writeln!(s, "costs = {}", list(&self.costs));
        let _ = writeln!(s, "utilities = {}", list(&self.utilities));
        let _ = writeln!(s, "w = {}", self.w);
        match self.b {
            Some(b) => {
                let _ = writeln!(s, "b = {b}");
            }
            None => {
                let _ = writeln!(s, "alpha = {}", self.alpha);
            }
        }
        let _ = writeln!(s, "heuristic = {}", self.heuristic.code());
        let _ = writeln!(s, "distribution = {}", self.distribution.label());
        if let Distribution::Target(q) = &self.distribution {
            let _ = writeln!(s, "target = {}", list(q));
        }
        let _ = writeln!(s, "regime = {}", self.regime.tag());
        let _ = writeln!(s, "runs = {}", self.runs);
        let _ = writeln!(s, "seed = {}", self.master_seed);
        let _ = writeln!(s, "max_epochs = {}", self.max_epochs);
        let _ = writeln!(s, "drop_allowed = {}", self.drop_allowed);
        let _ = writeln!(s, "fix_resources = {}", self.fix_resources);
        let _ = writeln!(s, "keep_isolated = {}", self.keep_isolated);
        let _ = writeln!(s, "rewire_p = {}", self.rewire_p);
        let _ = writeln!(s, "avg_degree = {}", self.avg_degree);
        let _ = writeln!(s, "trace = {}", self.trace);
        let codes: Vec<&str> = self.heuristics.iter().map(|h| h.code()).collect();
        let _ = writeln!(s, "heuristics = {}", codes.join(","));
        let _ = writeln!(s, "alphas = {}", list(&self.alphas));
        s
    }

    /// Short hash identifying the config together with its master seed.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.to_kv_string().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Seed count for a graph of `n` nodes: `b` if given, else
    /// `round(alpha * n)` moved to the nearest multiple of the behavior count.
    pub fn seed_total(&self, n: usize) -> usize {
        if let Some(b) = self.b {
            return b;
        }
        let k = self.costs.len().max(1);
        let raw = (self.alpha * n as f64).round() as usize;
        let snapped = ((raw as f64 / k as f64).round() as usize * k).max(k);
        if snapped > n {
            raw.clamp(1, n)
        } else {
            snapped
        }
    }

    fn diffusion_config(&self) -> DiffusionConfig {
        DiffusionConfig {
            max_epochs: self.max_epochs,
            drop_allowed: self.drop_allowed,
            record_trace: false,
            parallel_nodes: false,
        }
    }
}

/// Per-stream seed from the master seed, a run index and a purpose tag.
///
/// For a fixed master seed and tag the map from run index is injective:
/// an odd-multiplier affine step followed by the splitmix64 finalizer, both
/// bijections on `u64`.
pub fn derive_seed(master: u64, run: u64, tag: &str) -> u64 {
    let tag_hash = tag.bytes().fold(0xcbf2_9ce4_8422_2325u64, |h, b| {
        (h ^ b as u64).wrapping_mul(0x0100_0000_01b3)
    });
    let base = splitmix(master ^ splitmix(tag_hash));
    splitmix(base.wrapping_add(run.wrapping_mul(0x9e37_79b9_7f4a_7c15)))
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn rng_for(master: u64, run: u64, tag: &str) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(master, run, tag))
}

/// Builds the topology for `cfg` from the given stream.
pub fn build_graph(cfg: &ExperimentConfig, rng: &mut ChaCha8Rng) -> Result<Graph> {
    match &cfg.topology {
        Topology::PreferentialAttachment => graph::generate_preferential_attachment(cfg.n, rng),
        Topology::SmallWorld => graph::generate_small_world(cfg.n, cfg.rewire_p, rng),
        Topology::SpatiallyClustered => graph::generate_spatially_clustered(cfg.n, cfg.avg_degree, rng),
        Topology::File(path) => {
            let file = File::open(path)
                .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
            graph::load_edge_list(BufReader::new(file), cfg.keep_isolated)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run_id: usize,
    pub seeds: usize,
    pub participation: usize,
    pub adoption: usize,
    pub utilization: f64,
    pub per_behavior_counts: Vec<usize>,
    pub behavior_distribution: Vec<f64>,
    pub epochs: usize,
    pub converged: bool,
    /// `D(q ‖ p_T)` when the seed distribution is a target.
    pub kl: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateResult {
    pub fingerprint: String,
    pub runs: usize,
    pub seed_total: usize,
    pub participation: Estimate,
    pub adoption: Estimate,
    pub utilization: Estimate,
    pub epochs: Estimate,
    pub converged_fraction: f64,
    pub behavior_distribution_mean: Vec<f64>,
    pub kl: Option<Estimate>,
    /// KL of the target against the mean equilibrium distribution.
    pub kl_of_mean: Option<f64>,
    pub config: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub records: Vec<RunRecord>,
    pub aggregate: AggregateResult,
    /// Per-epoch new adoptions of run 0 when tracing was requested.
    pub trace: Option<Vec<Vec<usize>>>,
}

impl ExperimentResult {
    pub fn utilizations(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.utilization).collect()
    }
}

/// Dispatches on `cfg.regime`.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    match cfg.regime {
        Regime::ThresholdAverage => run_threshold_average(cfg),
        Regime::NetworkAverage => run_network_average(cfg),
    }
}

/// Fixed topology from the master seed (or file); each run redraws
/// thresholds and, unless `fix_resources`, resources.
pub fn run_threshold_average(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let roster = cfg.roster()?;
    let g = build_graph(cfg, &mut rng_for(cfg.master_seed, 0, "topology"))?;
    let fixed_resources = fixed_resources(cfg, g.node_count());
    let outcomes = par::map_indexed(cfg.runs, |run| {
        let pop = threshold_population(cfg, &roster, g.node_count(), fixed_resources.as_deref(), run)?;
        simulate_run(cfg, &roster, &g, pop, run, cfg.trace && run == 0).map(RunDetail::into_outcome)
    });
    collect(cfg, outcomes)
}

/// Node randomness drawn once from the master seed; each run generates a
/// fresh topology of the same size.
pub fn run_network_average(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let roster = cfg.roster()?;
    let base = network_population(cfg, &roster)?;
    let outcomes = par::map_indexed(cfg.runs, |run| {
        let g = build_graph(cfg, &mut rng_for(cfg.master_seed, run as u64, "topology"))?;
        simulate_run(cfg, &roster, &g, base.clone(), run, cfg.trace && run == 0).map(RunDetail::into_outcome)
    });
    collect(cfg, outcomes)
}

fn fixed_resources(cfg: &ExperimentConfig, n: usize) -> Option<Vec<f64>> {
    cfg.fix_resources
        .then(|| draw_uniform(n, &mut rng_for(cfg.master_seed, 0, "resources")))
}

fn threshold_population(
    cfg: &ExperimentConfig,
    roster: &Roster,
    n: usize,
    fixed_resources: Option<&[f64]>,
    run: usize,
) -> Result<Population> {
    let k = roster.len();
    let mut rng = rng_for(cfg.master_seed, run as u64, "population");
    match fixed_resources {
        Some(r) => Population::from_parts(r.to_vec(), draw_uniform(n * k, &mut rng), k, cfg.w),
        None => Population::init(n, roster, cfg.w, &mut rng),
    }
}

fn network_population(cfg: &ExperimentConfig, roster: &Roster) -> Result<Population> {
    Population::init(cfg.n, roster, cfg.w, &mut rng_for(cfg.master_seed, 0, "population"))
}

/// Graph and pre-seeding population of run `run`, drawn from the same
/// streams the regime functions use.
pub fn run_inputs(cfg: &ExperimentConfig, run: usize) -> Result<(Graph, Population)> {
    cfg.validate()?;
    let roster = cfg.roster()?;
    match cfg.regime {
        Regime::ThresholdAverage => {
            let g = build_graph(cfg, &mut rng_for(cfg.master_seed, 0, "topology"))?;
            let fixed = fixed_resources(cfg, g.node_count());
            let pop = threshold_population(cfg, &roster, g.node_count(), fixed.as_deref(), run)?;
            Ok((g, pop))
        }
        Regime::NetworkAverage => {
            let g = build_graph(cfg, &mut rng_for(cfg.master_seed, run as u64, "topology"))?;
            Ok((g, network_population(cfg, &roster)?))
        }
    }
}

/// Everything one run produced.
#[derive(Debug, Clone)]
pub struct RunDetail {
    pub record: RunRecord,
    /// `None` for full-knapsack plans.
    pub assignment: Option<SeedAssignment>,
    pub trace: Option<Vec<Vec<usize>>>,
    pub seed_total: usize,
}

impl RunDetail {
    fn into_outcome(self) -> RunOutcome {
        (self.record, self.trace, self.seed_total)
    }
}

/// Run `run` of `cfg` alone; its record equals the matching row of
/// [`run_experiment`]. The trace is recorded whenever `cfg.trace` is set.
pub fn run_single(cfg: &ExperimentConfig, run: usize) -> Result<RunDetail> {
    let (g, pop) = run_inputs(cfg, run)?;
    simulate_run(cfg, &cfg.roster()?, &g, pop, run, cfg.trace)
}

/// Seed assignment of run `run` without diffusing.
pub fn select_seeds(cfg: &ExperimentConfig, run: usize) -> Result<(Graph, Population, SeedAssignment)> {
    let SeedPlan::Heuristic(h) = cfg.heuristic else {
        return Err(Error::Config("seed selection needs a heuristic h1..h7".into()));
    };
    let roster = cfg.roster()?;
    let (g, pop) = run_inputs(cfg, run)?;
    let budget = allocate_counts(cfg.seed_total(g.node_count()), &roster, &cfg.distribution)?;
    let assignment = h.select(
        &g,
        &pop,
        &roster,
        &budget,
        &mut rng_for(cfg.master_seed, run as u64, "seeding"),
    )?;
    Ok((g, pop, assignment))
}

type RunOutcome = (RunRecord, Option<Vec<Vec<usize>>>, usize);

fn simulate_run(
    cfg: &ExperimentConfig,
    roster: &Roster,
    g: &Graph,
    mut pop: Population,
    run: usize,
    record_trace: bool,
) -> Result<RunDetail> {
    let mut rng = rng_for(cfg.master_seed, run as u64, "seeding");
    let b = cfg.seed_total(g.node_count());
    let mut dcfg = cfg.diffusion_config();
    dcfg.record_trace = record_trace;
    let (seeds, assignment) = match cfg.heuristic {
        SeedPlan::Heuristic(h) => {
            let budget = allocate_counts(b, roster, &cfg.distribution)?;
            let assignment = h.select(g, &pop, roster, &budget, &mut rng)?;
            if assignment.partial {
                log::warn!(
                    "run {run}: population exhausted, only {} seeds placed",
                    assignment.seed_count()
                );
            }
            apply_seeds(&mut pop, &assignment)?;
            (assignment.seed_count(), Some(assignment))
        }
        SeedPlan::FullKnapsack(mode) => {
            dcfg = seed_everyone(&mut pop, roster, mode, dcfg)?;
            (pop.adopted.iter().filter(|m| !m.is_empty()).count(), None)
        }
    };
    let out = diffusion::run(g, &mut pop, roster, &dcfg)?;
    let m = compute_metrics(&pop, roster, &out.final_adopted);
    let kl = match &cfg.distribution {
        Distribution::Target(q) => Some(kl_divergence(q, &m.behavior_distribution)?),
        _ => None,
    };
    let record = RunRecord {
        run_id: run,
        seeds,
        participation: m.participation,
        adoption: m.adoption,
        utilization: m.utilization,
        per_behavior_counts: m.per_behavior_counts,
        behavior_distribution: m.behavior_distribution,
        epochs: out.epochs_run,
        converged: out.converged,
        kl,
    };
    Ok(RunDetail {
        record,
        assignment,
        trace: out.adoption_events,
        seed_total: b,
    })
}

fn collect(cfg: &ExperimentConfig, outcomes: Vec<Result<RunOutcome>>) -> Result<ExperimentResult> {
    let mut records = Vec::with_capacity(outcomes.len());
    let mut trace = None;
    let mut seed_total = 0;
    for o in outcomes {
        let (record, t, b) = o?;
        if t.is_some() {
            trace = t;
        }
        seed_total = b;
        records.push(record);
    }
    let aggregate = aggregate(cfg, &records, seed_total)?;
    Ok(ExperimentResult {
        records,
        aggregate,
        trace,
    })
}

/// Folds run records in run order.
pub fn aggregate(cfg: &ExperimentConfig, records: &[RunRecord], seed_total: usize) -> Result<AggregateResult> {
    let col = |f: &dyn Fn(&RunRecord) -> f64| records.iter().map(f).collect::<Vec<f64>>();
    let k = cfg.costs.len();
    let mut dist = vec![0.0; k];
    for r in records {
        for (d, x) in dist.iter_mut().zip(&r.behavior_distribution) {
            *d += x;
        }
    }
    let count = records.len().max(1) as f64;
    dist.iter_mut().for_each(|d| *d /= count);
    let (kl, kl_of_mean) = match &cfg.distribution {
        Distribution::Target(q) => (
            Some(Estimate::from_samples(&col(&|r| r.kl.unwrap_or(f64::NAN)))),
            Some(kl_divergence(q, &dist)?),
        ),
        _ => (None, None),
    };
    let config = cfg
        .to_kv_string()
        .lines()
        .filter_map(|l| l.split_once(" = "))
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .collect();
    Ok(AggregateResult {
        fingerprint: cfg.fingerprint(),
        runs: records.len(),
        seed_total,
        participation: Estimate::from_samples(&col(&|r| r.participation as f64)),
        adoption: Estimate::from_samples(&col(&|r| r.adoption as f64)),
        utilization: Estimate::from_samples(&col(&|r| r.utilization)),
        epochs: Estimate::from_samples(&col(&|r| r.epochs as f64)),
        converged_fraction: records.iter().filter(|r| r.converged).count() as f64 / count,
        behavior_distribution_mean: dist,
        kl,
        kl_of_mean,
        config,
    })
}

/// `runs.csv`: one row per run.
pub fn write_runs_csv<W: Write>(records: &[RunRecord], k: usize, mut out: W) -> std::io::Result<()> {
    let mut header = String::from("run_id,seeds,participation,adoption,utilization");
    for i in 0..k {
        let _ = write!(header, ",count_b{i}");
    }
    header.push_str(",epochs,converged,kl");
    writeln!(out, "{header}")?;
    for r in records {
        let mut line = format!(
            "{},{},{},{},{:.6}",
            r.run_id, r.seeds, r.participation, r.adoption, r.utilization
        );
        for c in &r.per_behavior_counts {
            let _ = write!(line, ",{c}");
        }
        let _ = write!(line, ",{},{}", r.epochs, r.converged);
        match r.kl {
            Some(kl) => {
                let _ = write!(line, ",{kl:.6}");
            }
            None => line.push(','),
        }
        writeln!(out, "{line}")?;
    }
    Ok(())
}

/// Welch two-sample comparison of means.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanComparison {
    pub mean_a: f64,
    pub mean_b: f64,
    pub difference: f64,
    pub t: f64,
    pub df: f64,
    pub p_value: f64,
}

/// Unequal-variance t-test of `mean(a) - mean(b)` with a two-sided p-value.
pub fn welch_test(a: &[f64], b: &[f64]) -> Result<MeanComparison> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::InvalidParameter("need at least 2 samples per group".into()));
    }
    let ea = Estimate::from_samples(a);
    let eb = Estimate::from_samples(b);
    let difference = ea.mean - eb.mean;
    let va = ea.stderr * ea.stderr;
    let vb = eb.stderr * eb.stderr;
    let se = (va + vb).sqrt();
    let (t, df, p_value) = if se == 0.0 {
        let p = if difference == 0.0 { 1.0 } else { 0.0 };
        (0.0, f64::INFINITY, p)
    } else {
        let t = difference / se;
        let df = (va + vb).powi(2) / (va.powi(2) / (a.len() - 1) as f64 + vb.powi(2) / (b.len() - 1) as f64);
        let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::InvalidParameter(format!("t distribution: {e}")))?;
        (t, df, (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0))
    };
    Ok(MeanComparison {
        mean_a: ea.mean,
        mean_b: eb.mean,
        difference,
        t,
        df,
        p_value,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeuristicSummary {
    pub heuristic: Heuristic,
    pub aggregate: AggregateResult,
    pub utilization_samples: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseComparison {
    pub a: Heuristic,
    pub b: Heuristic,
    pub test: MeanComparison,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub summaries: Vec<HeuristicSummary>,
    pub pairs: Vec<PairwiseComparison>,
}

impl ComparisonTable {
    pub fn summary(&self, h: Heuristic) -> Option<&HeuristicSummary> {
        self.summaries.iter().find(|s| s.heuristic == h)
    }

    pub fn pair(&self, a: Heuristic, b: Heuristic) -> Option<&PairwiseComparison> {
        self.pairs.iter().find(|p| p.a == a && p.b == b)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "a,b,mean_a,mean_b,difference,t,df,p_value")?;
        for p in &self.pairs {
            let t = &p.test;
            writeln!(
                out,
                "{},{},{:.6},{:.6},{:.6},{:.4},{:.2},{:.3e}",
                p.a, p.b, t.mean_a, t.mean_b, t.difference, t.t, t.df, t.p_value
            )?;
        }
        Ok(())
    }
}

/// Runs `cfg` once per heuristic on shared random streams and tests every
/// pair of utilization samples.
pub fn compare_heuristics(cfg: &ExperimentConfig, heuristics: &[Heuristic]) -> Result<ComparisonTable> {
    if heuristics.len() < 2 {
        return Err(Error::InvalidParameter("compare needs at least two heuristics".into()));
    }
    if cfg.runs < 2 {
        return Err(Error::InvalidParameter("compare needs runs >= 2".into()));
    }
    let mut summaries = Vec::with_capacity(heuristics.len());
    for &h in heuristics {
        let mut c = cfg.clone();
        c.heuristic = SeedPlan::Heuristic(h);
        let res = run_experiment(&c)?;
        summaries.push(HeuristicSummary {
            heuristic: h,
            utilization_samples: res.utilizations(),
            aggregate: res.aggregate,
        });
    }
    let mut pairs = Vec::new();
    for (i, a) in summaries.iter().enumerate() {
        for b in &summaries[i + 1..] {
            pairs.push(PairwiseComparison {
                a: a.heuristic,
                b: b.heuristic,
                test: welch_test(&a.utilization_samples, &b.utilization_samples)?,
            });
        }
    }
    Ok(ComparisonTable { summaries, pairs })
}

/// Seeds in the proportions of target `q` with H7 and reports `D(q ‖ p_T)`.
pub fn target_distribution_experiment(cfg: &ExperimentConfig, q: &[f64]) -> Result<AggregateResult> {
    let mut c = cfg.clone();
    c.distribution = Distribution::Target(normalize_ratio(q)?);
    c.heuristic = SeedPlan::Heuristic(Heuristic::EiaHillClimbing);
    Ok(run_experiment(&c)?.aggregate)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub alpha: f64,
    pub heuristic: Heuristic,
    pub aggregate: AggregateResult,
}

/// One aggregate per `(alpha, heuristic)`.
pub fn sweep_alpha(cfg: &ExperimentConfig, alphas: &[f64], heuristics: &[Heuristic]) -> Result<Vec<SweepPoint>> {
    let mut out = Vec::with_capacity(alphas.len() * heuristics.len());
    for &alpha in alphas {
        if !(alpha > 0.0 && alpha <= 1.0) {
            return Err(Error::InvalidParameter(format!("alpha {alpha} outside (0, 1]")));
        }
        for &h in heuristics {
            let mut c = cfg.clone();
            c.alpha = alpha;
            c.b = None;
            c.heuristic = SeedPlan::Heuristic(h);
            out.push(SweepPoint {
                alpha,
                heuristic: h,
                aggregate: run_experiment(&c)?.aggregate,
            });
        }
    }
    Ok(out)
}

pub fn write_sweep_csv<W: Write>(points: &[SweepPoint], mut out: W) -> std::io::Result<()> {
    writeln!(
        out,
        "alpha,heuristic,seeds,utilization_mean,utilization_stderr,participation_mean,adoption_mean,runs"
    )?;
    for p in points {
        let a = &p.aggregate;
        writeln!(
            out,
            "{},{},{},{:.6},{:.6},{:.3},{:.3},{}",
            p.alpha,
            p.heuristic,
            a.seed_total,
            a.utilization.mean,
            a.utilization.stderr,
            a.participation.mean,
            a.adoption.mean,
            a.runs
        )?;
    }
    Ok(())
}
