//! Behaviors, per-node state and the per-node adoption rule: candidate
//! filtering followed by an exact knapsack over payoffs.

use std::cmp::Ordering;
use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};

pub type BehaviorId = usize;

/// Largest candidate set the exhaustive knapsack will enumerate.
pub const KNAPSACK_CAP: usize = 20;

/// Slack for floating point budget and payoff comparisons.
pub const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Behavior {
    pub cost: f64,
    pub utility: f64,
}

/// The ordered list of behaviors being spread; a behavior's id is its index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Roster(Vec<Behavior>);

impl Roster {
    pub fn new(costs: &[f64], utilities: &[f64]) -> Result<Self> {
        if costs.is_empty() || costs.len() != utilities.len() {
            return Err(Error::InvalidParameter(format!(
                "need matching, non-empty cost and utility lists (got {} and {})",
                costs.len(),
                utilities.len()
            )));
        }
        if costs.len() > 32 {
            return Err(Error::InvalidParameter("at most 32 behaviors".into()));
        }
        let unit = |x: f64| (0.0..=1.0).contains(&x);
        if !costs.iter().chain(utilities).all(|&x| unit(x)) {
            return Err(Error::InvalidParameter("costs and utilities must lie in [0, 1]".into()));
        }
        Ok(Self(
            costs
                .iter()
                .zip(utilities)
                .map(|(&cost, &utility)| Behavior { cost, utility })
                .collect(),
        ))
    }

    /// Costs (0.2, 0.5, 0.7) with utility equal to cost.
    pub fn standard() -> Self {
        Self::new(&[0.2, 0.5, 0.7], &[0.2, 0.5, 0.7]).expect("valid roster")
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, id: BehaviorId) -> Behavior {
        self.0[id]
    }

    pub fn cost(&self, id: BehaviorId) -> f64 {
        self.0[id].cost
    }

    pub fn costs(&self) -> Vec<f64> {
        self.0.iter().map(|b| b.cost).collect()
    }

    pub fn utilities(&self) -> Vec<f64> {
        self.0.iter().map(|b| b.utility).collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Behavior> {
        self.0.iter()
    }

    /// Total cost of the behaviors in `set`.
    pub fn set_cost(&self, set: BehaviorMask) -> f64 {
        set.iter().map(|i| self.0[i].cost).sum()
    }
}

/// A set of behavior ids stored as a bitmask.
#[derive(Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BehaviorMask(pub u32);

impl BehaviorMask {
    pub const EMPTY: Self = Self(0);

    pub fn single(id: BehaviorId) -> Self {
        Self(1 << id)
    }

    pub fn from_ids<I: IntoIterator<Item = BehaviorId>>(ids: I) -> Self {
        Self(ids.into_iter().fold(0, |m, i| m | (1 << i)))
    }

    #[inline]
    pub fn contains(self, id: BehaviorId) -> bool {
        self.0 & (1 << id) != 0
    }

    #[inline]
    pub fn insert(&mut self, id: BehaviorId) {
        self.0 |= 1 << id;
    }

    #[inline]
    pub fn union(self, other: Self) -> Self {
        Self(self.0 | other.0)
    }

    #[inline]
    pub fn difference(self, other: Self) -> Self {
        Self(self.0 & !other.0)
    }

    #[inline]
    pub fn is_subset(self, other: Self) -> bool {
        self.0 & !other.0 == 0
    }

    #[inline]
    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    #[inline]
    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    /// Ids in ascending order.
    pub fn iter(self) -> impl Iterator<Item = BehaviorId> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                return None;
            }
            let i = bits.trailing_zeros() as usize;
            bits &= bits - 1;
            Some(i)
        })
    }

    /// Lexicographic order of the ascending id sequences.
    pub fn lex_cmp(self, other: Self) -> Ordering {
        self.iter().cmp(other.iter())
    }
}

impl fmt::Debug for BehaviorMask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

/// Per-run node state: resources, thresholds and adopted/pinned behaviors.
#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub resource: Vec<f64>,
    /// Row-major `node * k + behavior`.
    pub threshold: Vec<f64>,
    pub adopted: Vec<BehaviorMask>,
    pub pinned: Vec<BehaviorMask>,
    /// Weight of intrinsic utility against the social signal.
    pub w: f64,
    k: usize,
}

impl Population {
    /// Resources then thresholds, all i.i.d. `U(0,1)`, drawn from `rng`.
    pub fn init<R: Rng + ?Sized>(n: usize, roster: &Roster, w: f64, rng: &mut R) -> Result<Self> {
        let resource = draw_uniform(n, rng);
        let threshold = draw_uniform(n * roster.len(), rng);
        Self::from_parts(resource, threshold, roster.len(), w)
    }

    pub fn from_parts(resource: Vec<f64>, threshold: Vec<f64>, k: usize, w: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&w) {
            return Err(Error::InvalidParameter(format!("w = {w} outside [0, 1]")));
        }
        if k == 0 || threshold.len() != resource.len() * k {
            return Err(Error::InvalidParameter(format!(
                "{} thresholds do not cover {} nodes x {k} behaviors",
                threshold.len(),
                resource.len()
            )));
        }
        let n = resource.len();
        Ok(Self {
            resource,
            threshold,
            adopted: vec![BehaviorMask::EMPTY; n],
            pinned: vec![BehaviorMask::EMPTY; n],
            w,
            k,
        })
    }

    pub fn node_count(&self) -> usize {
        self.resource.len()
    }

    pub fn behavior_count(&self) -> usize {
        self.k
    }

    #[inline]
    pub fn threshold(&self, v: NodeId, i: BehaviorId) -> f64 {
        self.threshold[v * self.k + i]
    }

    /// Social signal for `i` at `v` given `adopted` states; 0 for isolated nodes.
    pub fn local_signal(&self, g: &Graph, v: NodeId, i: BehaviorId) -> f64 {
        local_signal_in(g, &self.adopted, v, i)
    }

    /// `w·u + (1-w)·l`.
    #[inline]
    pub fn payoff(&self, behavior: Behavior, signal: f64) -> f64 {
        payoff(self.w, behavior.utility, signal)
    }

    pub fn candidate_behaviors(&self, g: &Graph, roster: &Roster, v: NodeId) -> BehaviorMask {
        let signals = signals_in(g, &self.adopted, v, self.k);
        self.candidates_from_signals(roster, v, &signals, self.adopted[v])
    }

    pub(crate) fn candidates_from_signals(
        &self,
        roster: &Roster,
        v: NodeId,
        signals: &[f64],
        adopted: BehaviorMask,
    ) -> BehaviorMask {
        let r = self.resource[v];
        let mut out = adopted;
        for (j, b) in roster.iter().enumerate() {
            if signals[j] >= self.threshold(v, j) && r >= b.cost {
                out.insert(j);
            }
        }
        out
    }
}

pub fn draw_uniform<R: Rng + ?Sized>(count: usize, rng: &mut R) -> Vec<f64> {
    (0..count).map(|_| rng.gen::<f64>()).collect()
}

#[inline]
pub fn payoff(w: f64, utility: f64, signal: f64) -> f64 {
    w * utility + (1.0 - w) * signal
}

pub(crate) fn local_signal_in(g: &Graph, adopted: &[BehaviorMask], v: NodeId, i: BehaviorId) -> f64 {
    let ns = g.neighbors(v);
    if ns.is_empty() {
        return 0.0;
    }
    let count = ns.iter().filter(|&&u| adopted[u].contains(i)).count();
    count as f64 / ns.len() as f64
}

/// Signals for every behavior at `v` in one pass over its neighbors.
pub(crate) fn signals_in(g: &Graph, adopted: &[BehaviorMask], v: NodeId, k: usize) -> Vec<f64> {
    let ns = g.neighbors(v);
    let mut counts = vec![0usize; k];
    for &u in ns {
        for i in adopted[u].iter() {
            counts[i] += 1;
        }
    }
    if ns.is_empty() {
        return vec![0.0; k];
    }
    let d = ns.len() as f64;
    counts.into_iter().map(|c| c as f64 / d).collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KnapsackItem {
    pub id: BehaviorId,
    pub payoff: f64,
    pub cost: f64,
}

/// Subset chosen by [`knapsack_select`] with its totals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BehaviorSet {
    pub members: BehaviorMask,
    pub total_cost: f64,
    pub total_payoff: f64,
}

impl BehaviorSet {
    pub const EMPTY: Self = Self {
        members: BehaviorMask::EMPTY,
        total_cost: 0.0,
        total_payoff: 0.0,
    };
}

/// Exact 0/1 knapsack by subset enumeration.
///
/// Maximizes total payoff under `Σ cost <= budget`. Ties (within [`EPS`]) go to
/// the larger total cost, then to the lexicographically smallest id set.
pub fn knapsack_select(items: &[KnapsackItem], budget: f64) -> Result<BehaviorSet> {
    if items.len() > KNAPSACK_CAP {
        return Err(Error::TooManyCandidates {
            count: items.len(),
            cap: KNAPSACK_CAP,
        });
    }
    let mut best = BehaviorSet::EMPTY;
    for subset in 1u32..(1 << items.len()) {
        let mut cost = 0.0;
        let mut payoff = 0.0;
        let mut members = BehaviorMask::EMPTY;
        let mut bits = subset;
        while bits != 0 {
            let item = &items[bits.trailing_zeros() as usize];
            cost += item.cost;
            payoff += item.payoff;
            members.insert(item.id);
            bits &= bits - 1;
        }
        if cost > budget + EPS {
            continue;
        }
        let better = if payoff > best.total_payoff + EPS {
            true
        } else if payoff < best.total_payoff - EPS {
            false
        } else if cost > best.total_cost + EPS {
            true
        } else if cost < best.total_cost - EPS {
            false
        } else {
            members.lex_cmp(best.members) == Ordering::Less
        };
        if better {
            best = BehaviorSet {
                members,
                total_cost: cost,
                total_payoff: payoff,
            };
        }
    }
    Ok(best)
}

/// Knapsack over the whole roster with no social signal (`l = 0`), as solved
/// by a node choosing on intrinsic utility alone.
pub fn intrinsic_knapsack(roster: &Roster, w: f64, budget: f64) -> BehaviorSet {
    let items: Vec<KnapsackItem> = roster
        .iter()
        .enumerate()
        .map(|(id, b)| KnapsackItem {
            id,
            payoff: payoff(w, b.utility, 0.0),
            cost: b.cost,
        })
        .collect();
    knapsack_select(&items, budget).expect("roster size checked at construction")
}
