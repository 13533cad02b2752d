//! Participation, adoption and resource utilization, plus behavior
//! distributions and their KL divergence from a target.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffusion::{self, DiffusionConfig};
use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::model::{BehaviorMask, Population, Roster};
use crate::seeding::{apply_seeds, full_knapsack_seeding};

/// Smoothing mass added to each achieved-distribution entry.
pub const KL_SMOOTHING: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    /// Nodes holding at least one behavior.
    pub participation: usize,
    /// Total (node, behavior) adoption pairs.
    pub adoption: usize,
    pub utilization: f64,
    pub per_behavior_counts: Vec<usize>,
    /// `per_behavior_counts / adoption`; all zeros when nothing was adopted.
    pub behavior_distribution: Vec<f64>,
}

/// Metrics of a final adoption state. Utilization divides total adopted cost
/// by the total resource in `pop`, which already includes seed top-ups.
pub fn compute_metrics(pop: &Population, roster: &Roster, adopted: &[BehaviorMask]) -> MetricsReport {
    let k = roster.len();
    let mut counts = vec![0usize; k];
    let mut participation = 0;
    let mut used = 0.0;
    for set in adopted {
        if !set.is_empty() {
            participation += 1;
        }
        for i in set.iter() {
            counts[i] += 1;
        }
        used += roster.set_cost(*set);
    }
    let adoption: usize = counts.iter().sum();
    let available: f64 = pop.resource.iter().sum();
    let utilization = if available > 0.0 { used / available } else { 0.0 };
    let behavior_distribution = if adoption > 0 {
        counts.iter().map(|&c| c as f64 / adoption as f64).collect()
    } else {
        vec![0.0; k]
    };
    MetricsReport {
        participation,
        adoption,
        utilization,
        per_behavior_counts: counts,
        behavior_distribution,
    }
}

/// `D(target ‖ achieved)` in nats. `achieved` is smoothed by
/// [`KL_SMOOTHING`] per entry and renormalized; zero target entries add 0.
pub fn kl_divergence(target: &[f64], achieved: &[f64]) -> Result<f64> {
    if target.len() != achieved.len() || target.is_empty() {
        return Err(Error::InvalidParameter(format!(
            "distribution lengths differ ({} vs {})",
            target.len(),
            achieved.len()
        )));
    }
    let norm: f64 = achieved.iter().sum::<f64>() + KL_SMOOTHING * achieved.len() as f64;
    Ok(target
        .iter()
        .zip(achieved)
        .filter(|(&q, _)| q > 0.0)
        .map(|(&q, &p)| q * (q / ((p + KL_SMOOTHING) / norm)).ln())
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub count: usize,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let count = xs.len();
        if count == 0 {
            return Self {
                mean: f64::NAN,
                stderr: 0.0,
                count,
            };
        }
        let mean = xs.iter().sum::<f64>() / count as f64;
        let stderr = if count > 1 {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (count - 1) as f64;
            (var / count as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, stderr, count }
    }
}

/// How the full-seed start state evolves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FullSeedMode {
    /// Initial sets are not pinned and nodes may swap toward what their
    /// neighbors hold. Runs stopped by the epoch cap keep their last state.
    #[default]
    Aligning,
    /// Initial sets are pinned and adoption is monotone. Every node already
    /// sits at a knapsack optimum with no room left, so nothing moves.
    Pinned,
}

/// Utilization when every node starts from its own intrinsic knapsack set and
/// diffusion then runs. Each run draws a fresh population on the fixed `g`.
pub fn max_utilization_estimate(g: &Graph, roster: &Roster, w: f64, runs: usize, seed: u64) -> Result<Estimate> {
    max_utilization_estimate_with(g, roster, w, runs, seed, FullSeedMode::default())
}

pub fn max_utilization_estimate_with(
    g: &Graph,
    roster: &Roster,
    w: f64,
    runs: usize,
    seed: u64,
    mode: FullSeedMode,
) -> Result<Estimate> {
    if runs == 0 {
        return Err(Error::InvalidParameter("runs must be >= 1".into()));
    }
    let samples: Vec<Result<f64>> = crate::par::map_indexed(runs, |run| {
        let mut rng = ChaCha8Rng::seed_from_u64(crate::experiment::derive_seed(seed, run as u64, "max-util"));
        let mut pop = Population::init(g.node_count(), roster, w, &mut rng)?;
        let cfg = seed_everyone(&mut pop, roster, mode, DiffusionConfig::default())?;
        let out = diffusion::run(g, &mut pop, roster, &cfg)?;
        Ok(compute_metrics(&pop, roster, &out.final_adopted).utilization)
    });
    let samples: Vec<f64> = samples.into_iter().collect::<Result<_>>()?;
    Ok(Estimate::from_samples(&samples))
}

/// Installs every node's intrinsic knapsack set and returns `base` adjusted
/// to the dynamics `mode` requires.
pub fn seed_everyone(
    pop: &mut Population,
    roster: &Roster,
    mode: FullSeedMode,
    base: DiffusionConfig,
) -> Result<DiffusionConfig> {
    let seeds = full_knapsack_seeding(pop, roster);
    apply_seeds(pop, &seeds)?;
    Ok(match mode {
        FullSeedMode::Pinned => base,
        FullSeedMode::Aligning => {
            pop.pinned.iter_mut().for_each(|p| *p = BehaviorMask::EMPTY);
            DiffusionConfig {
                drop_allowed: true,
                ..base
            }
        }
    })
}
