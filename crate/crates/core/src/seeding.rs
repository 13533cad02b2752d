//! Seed budgets across behaviors and the seven seed-selection heuristics.
//!
//! Every heuristic reads the population without mutating it and returns a
//! [`SeedAssignment`]; [`apply_seeds`] installs it. Rankings break score ties
//! with a per-invocation random priority drawn from the caller's rng.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use log::warn;
use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, NodeId};
use crate::model::{intrinsic_knapsack, BehaviorId, BehaviorMask, Population, Roster, EPS};

/// How the seed budget is split across behaviors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Distribution {
    /// Everything to the cheapest behavior.
    Low,
    /// Proportional to `1 / cost`.
    Inv,
    Unif,
    /// Proportional to cost.
    Prop,
    /// Everything to the most expensive behavior.
    High,
    /// Proportional to a target probability vector.
    Target(Vec<f64>),
}

impl Distribution {
    pub fn label(&self) -> &'static str {
        match self {
            Self::Low => "low",
            Self::Inv => "inv",
            Self::Unif => "unif",
            Self::Prop => "prop",
            Self::High => "high",
            Self::Target(_) => "target",
        }
    }
}

impl FromStr for Distribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "low" => Self::Low,
            "inv" | "inverse" => Self::Inv,
            "unif" | "uniform" => Self::Unif,
            "prop" | "proportional" => Self::Prop,
            "high" => Self::High,
            "target" => Self::Target(Vec::new()),
            other => return Err(Error::Config(format!("unknown distribution {other:?}"))),
        })
    }
}

/// Required number of seeds per behavior.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedBudget {
    pub per_behavior: Vec<usize>,
}

impl SeedBudget {
    pub fn new(per_behavior: Vec<usize>) -> Self {
        Self { per_behavior }
    }

    pub fn total(&self) -> usize {
        self.per_behavior.iter().sum()
    }
}

/// Splits `total` seeds by `strategy`, resolving fractional shares with
/// largest-remainder rounding (remainder ties go to the lower behavior id).
pub fn allocate_counts(total: usize, roster: &Roster, strategy: &Distribution) -> Result<SeedBudget> {
    let k = roster.len();
    if total == 0 {
        return Err(Error::InvalidParameter("seed total must be >= 1".into()));
    }
    let costs = roster.costs();
    let pick = |better: fn(f64, f64) -> bool| {
        let mut best = 0;
        for i in 1..k {
            if better(costs[i], costs[best]) {
                best = i;
            }
        }
        let mut counts = vec![0; k];
        counts[best] = total;
        SeedBudget::new(counts)
    };
    let weights: Vec<f64> = match strategy {
        Distribution::Low => return Ok(pick(|a, b| a < b)),
        Distribution::High => return Ok(pick(|a, b| a > b)),
        Distribution::Unif => vec![1.0; k],
        Distribution::Prop => costs.clone(),
        Distribution::Inv => {
            if costs.iter().any(|&c| c <= 0.0) {
                return Err(Error::InvalidParameter(
                    "inverse-cost allocation needs strictly positive costs".into(),
                ));
            }
            costs.iter().map(|c| 1.0 / c).collect()
        }
        Distribution::Target(q) => {
            if q.len() != k {
                return Err(Error::InvalidParameter(format!(
                    "target has {} entries for {k} behaviors",
                    q.len()
                )));
            }
            if q.iter().any(|&x| x.is_nan() || x < 0.0) || (q.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
                return Err(Error::InvalidParameter("target must be a probability vector".into()));
            }
            q.clone()
        }
    };
    let sum: f64 = weights.iter().sum();
    if sum <= 0.0 {
        return Err(Error::InvalidParameter("allocation weights sum to zero".into()));
    }
    let shares: Vec<f64> = weights.iter().map(|w| total as f64 * w / sum).collect();
    let mut counts: Vec<usize> = shares.iter().map(|s| s.floor() as usize).collect();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| {
        let ra = shares[a] - shares[a].floor();
        let rb = shares[b] - shares[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    let assigned: usize = counts.iter().sum();
    for &i in order.iter().take(total - assigned) {
        counts[i] += 1;
    }
    Ok(SeedBudget::new(counts))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TopUp {
    pub node: NodeId,
    pub resource: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SeedAssignment {
    /// Seed nodes per behavior, in selection order.
    pub sets: Vec<Vec<NodeId>>,
    pub topped_up: Vec<TopUp>,
    /// Candidates ran out before every count was met.
    pub partial: bool,
    /// A node may seed several behaviors (knapsack seeding).
    pub multi_behavior: bool,
}

impl SeedAssignment {
    pub fn empty(k: usize) -> Self {
        Self {
            sets: vec![Vec::new(); k],
            ..Default::default()
        }
    }

    pub fn seed_count(&self) -> usize {
        let mut nodes: Vec<NodeId> = self.sets.iter().flatten().copied().collect();
        nodes.sort_unstable();
        nodes.dedup();
        nodes.len()
    }

    pub fn counts(&self) -> Vec<usize> {
        self.sets.iter().map(Vec::len).collect()
    }

    /// Writes `node_id,behavior_id,topped_up_to` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "node_id,behavior_id,topped_up_to")?;
        for (i, set) in self.sets.iter().enumerate() {
            for &v in set {
                match self.topped_up.iter().find(|t| t.node == v) {
                    Some(t) => writeln!(out, "{v},{i},{}", t.resource)?,
                    None => writeln!(out, "{v},{i},")?,
                }
            }
        }
        Ok(())
    }
}

/// Marks every seed as adopted and pinned and applies recorded top-ups.
pub fn apply_seeds(pop: &mut Population, assignment: &SeedAssignment) -> Result<()> {
    let n = pop.node_count();
    let mut owner = vec![BehaviorMask::EMPTY; n];
    for (i, set) in assignment.sets.iter().enumerate() {
        for &v in set {
            if v >= n {
                return Err(Error::NodeOutOfRange { node: v, node_count: n });
            }
            if !assignment.multi_behavior && !owner[v].is_empty() {
                return Err(Error::OverlappingSeeds(v));
            }
            owner[v].insert(i);
        }
    }
    for t in &assignment.topped_up {
        pop.resource[t.node] = pop.resource[t.node].max(t.resource);
    }
    for (v, set) in owner.into_iter().enumerate() {
        pop.adopted[v] = pop.adopted[v].union(set);
        pop.pinned[v] = pop.pinned[v].union(set);
    }
    Ok(())
}

/// The seven seed-selection heuristics.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Heuristic {
    /// H1
    Random,
    /// H2
    NaiveDegreeNoTopUp,
    /// H3
    NaiveDegreeKnapsack,
    /// H4
    NaiveDegreeTopUp,
    /// H5
    DegreeResourceRanked,
    /// H6
    EiaRanked,
    /// H7
    EiaHillClimbing,
}

impl Heuristic {
    pub const ALL: [Heuristic; 7] = [
        Self::Random,
        Self::NaiveDegreeNoTopUp,
        Self::NaiveDegreeKnapsack,
        Self::NaiveDegreeTopUp,
        Self::DegreeResourceRanked,
        Self::EiaRanked,
        Self::EiaHillClimbing,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Self::Random => "h1",
            Self::NaiveDegreeNoTopUp => "h2",
            Self::NaiveDegreeKnapsack => "h3",
            Self::NaiveDegreeTopUp => "h4",
            Self::DegreeResourceRanked => "h5",
            Self::EiaRanked => "h6",
            Self::EiaHillClimbing => "h7",
        }
    }

    pub fn select<R: Rng + ?Sized>(
        self,
        g: &Graph,
        pop: &Population,
        roster: &Roster,
        budget: &SeedBudget,
        rng: &mut R,
    ) -> Result<SeedAssignment> {
        check_budget(g, roster, budget)?;
        match self {
            Self::Random => h1_random(g, pop, roster, budget, rng),
            Self::NaiveDegreeNoTopUp => naive_degree(g, pop, roster, budget, false, rng),
            Self::NaiveDegreeKnapsack => h3_naive_degree_knapsack(g, pop, roster, budget, rng),
            Self::NaiveDegreeTopUp => naive_degree(g, pop, roster, budget, true, rng),
            Self::DegreeResourceRanked => h5_degree_resource_ranked(g, pop, roster, budget, rng),
            Self::EiaRanked => h6_eia_ranked(g, pop, roster, budget, rng),
            Self::EiaHillClimbing => h7_eia_hill_climbing(g, pop, roster, budget, rng),
        }
    }
}

impl fmt::Display for Heuristic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.code().to_uppercase())
    }
}

impl FromStr for Heuristic {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim().to_ascii_lowercase();
        Self::ALL
            .into_iter()
            .find(|h| h.code() == t)
            .ok_or_else(|| Error::Config(format!("unknown heuristic {s:?} (expected h1..h7)")))
    }
}

fn check_budget(g: &Graph, roster: &Roster, budget: &SeedBudget) -> Result<()> {
    if budget.per_behavior.len() != roster.len() {
        return Err(Error::InvalidParameter(format!(
            "budget has {} entries for {} behaviors",
            budget.per_behavior.len(),
            roster.len()
        )));
    }
    if budget.total() > g.node_count() {
        return Err(Error::BudgetExceedsPopulation {
            requested: budget.total(),
            available: g.node_count(),
        });
    }
    Ok(())
}

fn top_up(pop: &Population, roster: &Roster, v: NodeId, j: BehaviorId, out: &mut SeedAssignment) {
    let c = roster.cost(j);
    if pop.resource[v] < c {
        out.topped_up.push(TopUp { node: v, resource: c });
    }
}

/// Random priority per node, used to break ranking ties.
fn tie_priority<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

/// Scores snapped to a 1e-9 grid so summation-order noise does not decide
/// ties.
fn score_key(x: f64) -> i64 {
    (x * 1e9).round() as i64
}

/// Nodes in `pool` ordered by descending score, random priority on ties.
fn ranked(pool: impl Iterator<Item = NodeId>, score: &[i64], priority: &[usize]) -> Vec<NodeId> {
    let mut nodes: Vec<NodeId> = pool.collect();
    nodes.sort_by(|&a, &b| score[b].cmp(&score[a]).then(priority[a].cmp(&priority[b])));
    nodes
}

/// H1: uniform sample of seed nodes, behaviors dealt per budget, top-up.
pub fn h1_random<R: Rng + ?Sized>(
    g: &Graph,
    pop: &Population,
    roster: &Roster,
    budget: &SeedBudget,
    rng: &mut R,
) -> Result<SeedAssignment> {
    check_budget(g, roster, budget)?;
    let mut out = SeedAssignment::empty(roster.len());
    let nodes = index::sample(rng, g.node_count(), budget.total()).into_vec();
    let mut labels: Vec<BehaviorId> = budget
        .per_behavior
        .iter()
        .enumerate()
        .flat_map(|(i, &c)| std::iter::repeat_n(i, c))
        .collect();
    labels.shuffle(rng);
    for (v, j) in nodes.into_iter().zip(labels) {
        top_up(pop, roster, v, j, &mut out);
        out.sets[j].push(v);
    }
    Ok(out)
}

/// H2 (`topup = false`) and H4 (`topup = true`): walk nodes by degree, draw a
/// behavior uniformly among those still short of seeds.
///
/// Without top-up a node that cannot afford its drawn behavior is used up
/// without being seeded.
fn naive_degree<R: Rng + ?Sized>(
    g: &Graph,
    pop: &Population,
    roster: &Roster,
    budget: &SeedBudget,
    topup: bool,
    rng: &mut R,
) -> Result<SeedAssignment> {
    let n = g.node_count();
    let priority = tie_priority(n, rng);
    let degree: Vec<i64> = (0..n).map(|v| g.degree(v) as i64).collect();
    let order = ranked(0..n, &degree, &priority);
    let mut remaining = budget.per_behavior.clone();
    let mut out = SeedAssignment::empty(roster.len());
    let mut walk = order.into_iter();
    while remaining.iter().any(|&b| b > 0) {
        let Some(v) = walk.next() else {
            out.partial = true;
            warn!("naive degree seeding ran out of nodes with {remaining:?} seeds unassigned");
            break;
        };
        let open: Vec<BehaviorId> = (0..remaining.len()).filter(|&i| remaining[i] > 0).collect();
        let j = open[rng.gen_range(0..open.len())];
        if topup {
            top_up(pop, roster, v, j, &mut out);
        } else if pop.resource[v] < roster.cost(j) {
            continue;
        }
        out.sets[j].push(v);
        remaining[j] -= 1;
    }
    Ok(out)
}

pub fn h2_naive_degree_no_topup<R: Rng + ?Sized>(
    g: &Graph,
    pop: &Population,
    roster: &Roster,
    budget: &SeedBudget,
    rng: &mut R,
) -> Result<SeedAssignment> {
    check_budget(g, roster, budget)?;
    naive_degree(g, pop, roster, budget, false, rng)
}

pub fn h4_naive_degree_topup<R: Rng + ?Sized>(
    g: &Graph,
    pop: &Population,
    roster: &Roster,
    budget: &SeedBudget,
    rng: &mut R,
) -> Result<SeedAssignment> {
    check_budget(g, roster, budget)?;
    naive_degree(g, pop, roster, budget, true, rng)
}

/// H3: the `b` highest-degree nodes each adopt their intrinsic knapsack set
/// over all behaviors. Only the total `b` is used; the per-behavior split is
/// whatever the knapsacks produce. A node whose set is empty still uses up
/// its slot.
pub fn h3_naive_degree_knapsack<R: Rng + ?Sized>(
    g: &Graph,
    pop: &Population,
    roster: &Roster,
    budget: &SeedBudget,
    rng: &mut R,
) -> Result<SeedAssignment> {
    check_budget(g, roster, budget)?;
    let n = g.node_count();
    let priority = tie_priority(n, rng);
    let degree: Vec<i64> = (0..n).map(|v| g.degree(v) as i64).collect();
    let mut out = SeedAssignment::empty(roster.len());
    out.multi_behavior = true;
    for v in ranked(0..n, &degree, &priority).into_iter().take(budget.total()) {
        for i in intrinsic_knapsack(roster, pop.w, pop.resource[v]).members.iter() {
            out.sets[i].push(v);
        }
    }
    Ok(out)
}

/// `d^i(v)`: neighbors of `v` that can afford behavior `i`.
pub fn resource_sufficient_degree(g: &Graph, pop: &Population, cost: f64) -> Vec<usize> {
    (0..g.node_count())
        .map(|v| g.neighbors(v).iter().filter(|&&u| pop.resource[u] >= cost).count())
        .collect()
}

/// `e^i(v) = 1 + Σ 1/|N(u)|` over neighbors `u` outside `excluded` that can
/// afford behavior `i`. Entries for excluded nodes are `NaN`.
pub fn expected_immediate_adoption(
    g: &Graph,
    pop: &Population,
    roster: &Roster,
    i: BehaviorId,
    excluded: &[bool],
) -> Vec<f64> {
    let cost = roster.cost(i);
    (0..g.node_count())
        .map(|v| {
            if excluded[v] {
                return f64::NAN;
            }
            1.0 + g
                .neighbors(v)
                .iter()
                .filter(|&&u| !excluded[u] && pop.resource[u] >= cost)
                .map(|&u| 1.0 / g.degree(u) as f64)
                .sum::<f64>()
        })
        .collect()
}

/// Shared round structure of H5-H7: every behavior proposes up to its open
/// count from the remaining pool, proposals are removed from the pool, and each
/// proposed node takes one of the behaviors that proposed it at random.
fn ranked_rounds<R, F>(
    g: &Graph,
    pop: &Population,
    roster: &Roster,
    budget: &SeedBudget,
    rng: &mut R,
    mut propose: F,
) -> SeedAssignment
where
    R: Rng + ?Sized,
    F: FnMut(BehaviorId, usize, &[bool], &[Vec<NodeId>], &mut R) -> Vec<NodeId>,
{
    let n = g.node_count();
    let k = roster.len();
    let mut available = vec![true; n];
    let mut remaining = budget.per_behavior.clone();
    let mut out = SeedAssignment::empty(k);
    while remaining.iter().any(|&b| b > 0) {
        let mut proposals: Vec<BehaviorMask> = vec![BehaviorMask::EMPTY; n];
        let mut any = false;
        for (i, &left) in remaining.iter().enumerate() {
            if left == 0 {
                continue;
            }
            for v in propose(i, left, &available, &out.sets, rng) {
                proposals[v].insert(i);
                any = true;
            }
        }
        if !any {
            out.partial = true;
            warn!("ranked seeding ran out of nodes with {remaining:?} seeds unassigned");
            break;
        }
        for v in 0..n {
            let wanted = proposals[v];
            if wanted.is_empty() {
                continue;
            }
            available[v] = false;
            let options: Vec<BehaviorId> = wanted.iter().collect();
            let j = options[rng.gen_range(0..options.len())];
            top_up(pop, roster, v, j, &mut out);
            out.sets[j].push(v);
            remaining[j] -= 1;
        }
    }
    out
}

/// H5: per behavior, rank remaining nodes by `d^i(v)`.
pub fn h5_degree_resource_ranked<R: Rng + ?Sized>(
    g: &Graph,
    pop: &Population,
    roster: &Roster,
    budget: &SeedBudget,
    rng: &mut R,
) -> Result<SeedAssignment> {
    check_budget(g, roster, budget)?;
    let n = g.node_count();
    let priority = tie_priority(n, rng);
    let scores: Vec<Vec<i64>> = (0..roster.len())
        .map(|i| {
            resource_sufficient_degree(g, pop, roster.cost(i))
                .into_iter()
                .map(|d| d as i64)
                .collect()
        })
        .collect();
    Ok(ranked_rounds(
        g,
        pop,
        roster,
        budget,
        rng,
        |i, count, available, _, _| {
            let pool = (0..n).filter(|&v| available[v]);
            ranked(pool, &scores[i], &priority).into_iter().take(count).collect()
        },
    ))
}

/// H6: per behavior, rank remaining nodes by `e^i(v)` over the whole graph.
pub fn h6_eia_ranked<R: Rng + ?Sized>(
    g: &Graph,
    pop: &Population,
    roster: &Roster,
    budget: &SeedBudget,
    rng: &mut R,
) -> Result<SeedAssignment> {
    check_budget(g, roster, budget)?;
    let n = g.node_count();
    let priority = tie_priority(n, rng);
    let none = vec![false; n];
    let scores: Vec<Vec<i64>> = (0..roster.len())
        .map(|i| {
            expected_immediate_adoption(g, pop, roster, i, &none)
                .into_iter()
                .map(score_key)
                .collect()
        })
        .collect();
    Ok(ranked_rounds(
        g,
        pop,
        roster,
        budget,
        rng,
        |i, count, available, _, _| {
            let pool = (0..n).filter(|&v| available[v]);
            ranked(pool, &scores[i], &priority).into_iter().take(count).collect()
        },
    ))
}

/// Greedy marginal one-step spread for a single behavior.
///
/// `e^i` is computed with this behavior's existing seeds excluded. After each
/// pick `u`, every still-eligible neighbor loses `u`'s contribution
/// `1/|N(u)|`, provided `u` was counted (it can afford the behavior).
#[allow(clippy::too_many_arguments)]
pub fn core_hill_climbing(
    g: &Graph,
    pop: &Population,
    roster: &Roster,
    i: BehaviorId,
    count: usize,
    existing: &[bool],
    available: &[bool],
    priority: &[usize],
) -> Vec<NodeId> {
    let cost = roster.cost(i);
    let mut e = expected_immediate_adoption(g, pop, roster, i, existing);
    let mut picked = vec![false; g.node_count()];
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let best = (0..g.node_count())
            .filter(|&v| available[v] && !picked[v])
            .max_by(|&a, &b| {
                score_key(e[a])
                    .cmp(&score_key(e[b]))
                    .then(priority[b].cmp(&priority[a]))
            });
        let Some(u) = best else { break };
        picked[u] = true;
        out.push(u);
        if pop.resource[u] >= cost && !existing[u] {
            let w = 1.0 / g.degree(u) as f64;
            for &v in g.neighbors(u) {
                if available[v] && !picked[v] {
                    e[v] -= w;
                }
            }
        }
    }
    out
}

/// H7: the round structure of H6 with proposals from [`core_hill_climbing`].
pub fn h7_eia_hill_climbing<R: Rng + ?Sized>(
    g: &Graph,
    pop: &Population,
    roster: &Roster,
    budget: &SeedBudget,
    rng: &mut R,
) -> Result<SeedAssignment> {
    check_budget(g, roster, budget)?;
    let n = g.node_count();
    let priority = tie_priority(n, rng);
    Ok(ranked_rounds(
        g,
        pop,
        roster,
        budget,
        rng,
        |i, count, available, sets, _| {
            let mut existing = vec![false; n];
            for &v in &sets[i] {
                existing[v] = true;
            }
            core_hill_climbing(g, pop, roster, i, count, &existing, available, &priority)
        },
    ))
}

/// Seeds every node with its intrinsic knapsack set (no social signal).
pub fn full_knapsack_seeding(pop: &Population, roster: &Roster) -> SeedAssignment {
    let mut out = SeedAssignment::empty(roster.len());
    out.multi_behavior = true;
    for v in 0..pop.node_count() {
        for i in intrinsic_knapsack(roster, pop.w, pop.resource[v]).members.iter() {
            out.sets[i].push(v);
        }
    }
    out
}

/// Asserts the structural contract shared by all heuristics.
pub fn assignment_is_consistent(a: &SeedAssignment, pop: &Population, roster: &Roster) -> bool {
    let n = pop.node_count();
    let mut owner = vec![0usize; n];
    for (i, set) in a.sets.iter().enumerate() {
        for &v in set {
            owner[v] += 1;
            let r = a
                .topped_up
                .iter()
                .find(|t| t.node == v)
                .map_or(pop.resource[v], |t| t.resource.max(pop.resource[v]));
            if !a.multi_behavior && r + EPS < roster.cost(i) {
                return false;
            }
        }
    }
    a.multi_behavior || owner.iter().all(|&c| c <= 1)
}
