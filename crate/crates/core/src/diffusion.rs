//! Synchronous epoch engine. Every node decides from the same epoch-start
//! snapshot, so the update order within an epoch is irrelevant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::model::{knapsack_select, payoff, signals_in, BehaviorMask, KnapsackItem, Population, Roster, EPS};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionConfig {
    pub max_epochs: usize,
    /// Let nodes abandon non-seeded behaviors when a better subset appears.
    pub drop_allowed: bool,
    /// Record per-epoch new adoptions per behavior.
    pub record_trace: bool,
    /// Fan the per-node decisions of an epoch out over the worker pool.
    pub parallel_nodes: bool,
}

impl Default for DiffusionConfig {
    fn default() -> Self {
        Self {
            max_epochs: 1000,
            drop_allowed: false,
            record_trace: false,
            parallel_nodes: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiffusionOutcome {
    pub final_adopted: Vec<BehaviorMask>,
    /// Epochs executed, including the final quiescent one when converged.
    pub epochs_run: usize,
    pub converged: bool,
    /// `adoption_events[epoch][behavior]` = nodes newly holding the behavior.
    pub adoption_events: Option<Vec<Vec<usize>>>,
}

/// One synchronous epoch. Returns whether any adopted set changed.
pub fn step(g: &Graph, pop: &mut Population, roster: &Roster, drop_allowed: bool) -> Result<bool> {
    step_with(g, pop, roster, drop_allowed, false)
}

fn step_with(
    g: &Graph,
    pop: &mut Population,
    roster: &Roster,
    drop_allowed: bool,
    parallel_nodes: bool,
) -> Result<bool> {
    let next: Vec<Result<BehaviorMask>> = {
        let view: &Population = pop;
        let decide = |v: NodeId| decide(g, view, roster, v, drop_allowed);
        if parallel_nodes {
            par::map_indexed(g.node_count(), decide)
        } else {
            par::map_indexed_seq(g.node_count(), decide)
        }
    };
    let mut changed = false;
    for (slot, new) in pop.adopted.iter_mut().zip(next) {
        let new = new?;
        if *slot != new {
            *slot = new;
            changed = true;
        }
    }
    Ok(changed)
}

/// The adoption decision of node `v` against the current `pop.adopted`.
fn decide(g: &Graph, pop: &Population, roster: &Roster, v: NodeId, drop_allowed: bool) -> Result<BehaviorMask> {
    let current = pop.adopted[v];
    let signals = signals_in(g, &pop.adopted, v, roster.len());
    let candidates = pop.candidates_from_signals(roster, v, &signals, current);
    let forced = if drop_allowed { pop.pinned[v] } else { current };
    let forced_cost = roster.set_cost(forced);
    let resource = pop.resource[v];
    if forced_cost > resource + EPS {
        return Err(Error::PinnedOverBudget {
            node: v,
            pinned_cost: forced_cost,
            resource,
        });
    }
    let free = candidates.difference(forced);
    if free.is_empty() {
        return Ok(forced);
    }
    let items: Vec<KnapsackItem> = free
        .iter()
        .map(|j| {
            let b = roster.get(j);
            KnapsackItem {
                id: j,
                payoff: payoff(pop.w, b.utility, signals[j]),
                cost: b.cost,
            }
        })
        .collect();
    let chosen = knapsack_select(&items, resource - forced_cost)?;
    Ok(forced.union(chosen.members))
}

/// Steps until an epoch changes nothing or `max_epochs` is reached.
pub fn run(g: &Graph, pop: &mut Population, roster: &Roster, cfg: &DiffusionConfig) -> Result<DiffusionOutcome> {
    if cfg.max_epochs == 0 {
        return Err(Error::InvalidParameter("max_epochs must be >= 1".into()));
    }
    let k = roster.len();
    let mut trace = cfg.record_trace.then(Vec::new);
    let mut epochs_run = 0;
    let mut converged = false;
    while epochs_run < cfg.max_epochs {
        let before = trace.as_ref().map(|_| pop.adopted.clone());
        let changed = step_with(g, pop, roster, cfg.drop_allowed, cfg.parallel_nodes)?;
        epochs_run += 1;
        if let (Some(trace), Some(before)) = (trace.as_mut(), before) {
            let mut fresh = vec![0usize; k];
            for (old, new) in before.iter().zip(&pop.adopted) {
                for i in new.difference(*old).iter() {
                    fresh[i] += 1;
                }
            }
            trace.push(fresh);
        }
        if !changed {
            converged = true;
            break;
        }
    }
    Ok(DiffusionOutcome {
        final_adopted: pop.adopted.clone(),
        epochs_run,
        converged,
        adoption_events: trace,
    })
}

/// Writes `epoch,behavior_id,new_adoptions` rows.
pub fn write_trace_csv<W: std::io::Write>(events: &[Vec<usize>], mut out: W) -> std::io::Result<()> {
    writeln!(out, "epoch,behavior_id,new_adoptions")?;
    for (epoch, row) in events.iter().enumerate() {
        for (i, count) in row.iter().enumerate() {
            writeln!(out, "{},{},{}", epoch + 1, i, count)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generate_preferential_attachment;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn seed(pop: &mut Population, v: NodeId, i: usize) {
        pop.adopted[v].insert(i);
        pop.pinned[v].insert(i);
    }

    #[test]
    fn one_epoch_hand_trace() {
        let roster = Roster::new(&[0.2], &[0.2]).unwrap();
        let g = Graph::from_edges(2, [(0, 1)]).unwrap();
        let mut pop = Population::from_parts(vec![0.2, 0.5], vec![0.9, 0.3], 1, 1.0).unwrap();
        seed(&mut pop, 0, 0);
        assert!(step(&g, &mut pop, &roster, false).unwrap());
        assert!(pop.adopted[1].contains(0));
        assert!(!step(&g, &mut pop, &roster, false).unwrap());
    }

    #[test]
    fn no_seeds_is_a_fixed_point() {
        let roster = Roster::standard();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = generate_preferential_attachment(50, &mut rng).unwrap();
        let mut pop = Population::init(50, &roster, 0.5, &mut rng).unwrap();
        // thresholds are strictly positive with probability one
        let out = run(&g, &mut pop, &roster, &DiffusionConfig::default()).unwrap();
        assert!(out.converged);
        assert_eq!(out.epochs_run, 1);
        assert!(out.final_adopted.iter().all(|m| m.is_empty()));
    }

    #[test]
    fn path_converges_with_all_active() {
        let roster = Roster::new(&[0.3], &[0.3]).unwrap();
        let g = Graph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        let mut pop = Population::from_parts(vec![1.0; 3], vec![0.0; 3], 1, 0.5).unwrap();
        seed(&mut pop, 0, 0);
        let out = run(&g, &mut pop, &roster, &DiffusionConfig::default()).unwrap();
        assert!(out.converged);
        assert!(out.epochs_run <= 3);
        assert!(out.final_adopted.iter().all(|m| m.contains(0)));
    }

    #[test]
    fn already_optimal_is_fixed() {
        let roster = Roster::standard();
        let g = Graph::from_edges(2, [(0, 1)]).unwrap();
        let mut pop = Population::from_parts(vec![0.9, 0.9], vec![0.0; 6], 3, 0.5).unwrap();
        pop.adopted = vec![BehaviorMask::from_ids([0, 2]); 2];
        assert!(!step(&g, &mut pop, &roster, false).unwrap());
    }

    #[test]
    fn pinned_over_budget_is_reported() {
        let roster = Roster::new(&[0.7, 0.2], &[0.7, 0.2]).unwrap();
        let g = Graph::from_edges(2, [(0, 1)]).unwrap();
        let mut pop = Population::from_parts(vec![0.1, 0.9], vec![0.0; 4], 2, 0.5).unwrap();
        seed(&mut pop, 0, 0);
        seed(&mut pop, 1, 1);
        assert!(matches!(
            step(&g, &mut pop, &roster, false),
            Err(Error::PinnedOverBudget { node: 0, .. })
        ));
    }

    #[test]
    fn swap_mode_keeps_pins_and_may_drop() {
        // Node 1 holds behavior 0 unpinned; behavior 1 beats it once its
        // signal arrives and both cannot fit.
        let roster = Roster::new(&[0.5, 0.5], &[0.1, 0.9]).unwrap();
        let g = Graph::from_edges(2, [(0, 1)]).unwrap();
        let mut pop = Population::from_parts(vec![0.5, 0.6], vec![0.0; 4], 2, 0.5).unwrap();
        seed(&mut pop, 0, 1);
        pop.adopted[1] = BehaviorMask::single(0);
        let mut mono = pop.clone();
        step(&g, &mut pop, &roster, true).unwrap();
        assert_eq!(pop.adopted[1], BehaviorMask::single(1));
        assert_eq!(pop.adopted[0], BehaviorMask::single(1));
        step(&g, &mut mono, &roster, false).unwrap();
        assert_eq!(mono.adopted[1], BehaviorMask::single(0));
    }

    #[test]
    fn trace_counts_new_adoptions() {
        let roster = Roster::new(&[0.3], &[0.3]).unwrap();
        let g = Graph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        let mut pop = Population::from_parts(vec![1.0; 3], vec![0.1; 3], 1, 0.5).unwrap();
        seed(&mut pop, 0, 0);
        let cfg = DiffusionConfig {
            record_trace: true,
            ..Default::default()
        };
        let out = run(&g, &mut pop, &roster, &cfg).unwrap();
        assert_eq!(out.adoption_events.unwrap(), vec![vec![1], vec![1], vec![0]]);
    }

    #[test]
    fn max_epochs_bounds_and_flags() {
        let roster = Roster::new(&[0.3], &[0.3]).unwrap();
        let g = Graph::from_edges(4, [(0, 1), (1, 2), (2, 3)]).unwrap();
        let mut pop = Population::from_parts(vec![1.0; 4], vec![0.1; 4], 1, 0.5).unwrap();
        seed(&mut pop, 0, 0);
        let cfg = DiffusionConfig {
            max_epochs: 2,
            ..Default::default()
        };
        let out = run(&g, &mut pop, &roster, &cfg).unwrap();
        assert_eq!(out.epochs_run, 2);
        assert!(!out.converged);
        let zero = DiffusionConfig {
            max_epochs: 0,
            ..Default::default()
        };
        assert!(run(&g, &mut pop, &roster, &zero).is_err());
    }

    #[test]
    fn parallel_epochs_match_sequential() {
        let roster = Roster::standard();
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g = generate_preferential_attachment(300, &mut rng).unwrap();
        let mut pop = Population::init(300, &roster, 0.5, &mut rng).unwrap();
        for v in 0..30 {
            pop.resource[v] = 1.0;
            seed(&mut pop, v, v % 3);
        }
        let mut other = pop.clone();
        let seq = run(&g, &mut pop, &roster, &DiffusionConfig::default()).unwrap();
        let cfg = DiffusionConfig {
            parallel_nodes: true,
            ..Default::default()
        };
        assert_eq!(run(&g, &mut other, &roster, &cfg).unwrap(), seq);
    }
}
