//! Neighborhood sampling and the fairness edge modifier.
//!
//! Every node first draws a uniform subset of its prediction-graph in-neighbors
//! (the initial set); the rest form the candidate pool. Fair modes then inject
//! or remove neighbors and rescale pooling weights so that influence is
//! balanced across sensitive groups, or spread across sensitive values.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{PredictionGraph, SegmentId};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SamplerMode {
    Random,
    FairDiscrete,
    FairContinuous,
    FairEdgeAblation,
    FairAdjAblation,
}

impl SamplerMode {
    pub const ALL: [SamplerMode; 5] = [
        SamplerMode::Random,
        SamplerMode::FairEdgeAblation,
        SamplerMode::FairAdjAblation,
        SamplerMode::FairDiscrete,
        SamplerMode::FairContinuous,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SamplerMode::Random => "random",
            SamplerMode::FairDiscrete => "fair-discrete",
            SamplerMode::FairContinuous => "fair-continuous",
            SamplerMode::FairEdgeAblation => "fair-edge-ablation",
            SamplerMode::FairAdjAblation => "fair-adj-ablation",
        }
    }
}

impl std::fmt::Display for SamplerMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

fn default_budget() -> usize {
    5
}
fn default_tolerance() -> f64 {
    0.1
}
fn default_similarity_weight() -> f64 {
    0.3
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerConfig {
    pub mode: SamplerMode,
    #[serde(default = "default_budget")]
    pub neighbor_budget: usize,
    /// Allowed relative excess of the largest over the smallest group
    /// influence sum.
    #[serde(default = "default_tolerance")]
    pub balance_tolerance: f64,
    #[serde(default = "default_similarity_weight")]
    pub feature_similarity_weight: f64,
    /// Replaced by the run seed during training.
    #[serde(default)]
    pub seed: u64,
    /// Average influence over this day range instead of the whole record.
    #[serde(default)]
    pub influence_window: Option<[usize; 2]>,
}

impl SamplerConfig {
    pub fn new(mode: SamplerMode) -> Self {
        SamplerConfig {
            mode,
            neighbor_budget: default_budget(),
            balance_tolerance: default_tolerance(),
            feature_similarity_weight: default_similarity_weight(),
            seed: 0,
            influence_window: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.neighbor_budget == 0 {
            return Err(Error::InvalidConfig("neighbor_budget must be >= 1".into()));
        }
        if !(self.balance_tolerance.is_finite() && self.balance_tolerance >= 0.0) {
            return Err(Error::InvalidConfig("balance_tolerance must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.feature_similarity_weight) {
            return Err(Error::InvalidConfig(
                "feature_similarity_weight must be in [0,1]".into(),
            ));
        }
        if let Some([a, b]) = self.influence_window {
            if a >= b {
                return Err(Error::InvalidConfig("influence_window must be non-empty".into()));
            }
        }
        Ok(())
    }
}

/// Initial neighbors and candidate pool of one node, as prediction-graph edge
/// ids in ascending order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InitialSample {
    pub initial: Vec<usize>,
    pub candidates: Vec<usize>,
}

impl InitialSample {
    pub fn is_headwater(&self) -> bool {
        self.initial.is_empty()
    }
}

/// Uniform `budget`-subset of the in-edges of `node`, keyed by
/// `(seed, node id, epoch)`.
pub fn sample_initial(
    pgraph: &PredictionGraph,
    node: usize,
    budget: usize,
    seed: u64,
    epoch: u64,
) -> InitialSample {
    let in_edges = pgraph.in_edges(node);
    if in_edges.len() <= budget {
        return InitialSample {
            initial: in_edges.to_vec(),
            candidates: Vec::new(),
        };
    }
    let mut rng = rng::stream(
        seed,
        &[rng::TAG_SAMPLER, u64::from(pgraph.segments()[node]), epoch],
    );
    let mut chosen = vec![false; in_edges.len()];
    for k in index::sample(&mut rng, in_edges.len(), budget) {
        chosen[k] = true;
    }
    let (mut initial, mut candidates) = (Vec::new(), Vec::new());
    for (k, &e) in in_edges.iter().enumerate() {
        if chosen[k] {
            initial.push(e);
        } else {
            candidates.push(e);
        }
    }
    InitialSample { initial, candidates }
}

/// A neighbor (or candidate) as seen by the discrete modifier. `value` is the
/// quantity being balanced: physical influence, 1 for FairEdge, base weight
/// for FairAdj.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroupMember {
    pub id: usize,
    pub group: usize,
    pub value: f64,
    /// Feature similarity to the target node.
    pub similarity: f64,
}

fn group_sums(set: &[GroupMember], present: &BTreeSet<usize>) -> BTreeMap<usize, f64> {
    let mut sums: BTreeMap<usize, f64> = present.iter().map(|&g| (g, 0.0)).collect();
    for m in set {
        *sums.entry(m.group).or_insert(0.0) += m.value;
    }
    sums
}

/// Max/min ratio of group sums; infinite when some present group is empty.
pub fn balance_ratio(sums: &BTreeMap<usize, f64>) -> f64 {
    let max = sums.values().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = sums.values().copied().fold(f64::INFINITY, f64::min);
    if sums.len() <= 1 {
        1.0
    } else if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Greedy discrete edge modifier. While the max/min ratio of per-group sums
/// exceeds `1 + tolerance`, inject the best-scoring candidate of the weakest
/// group whose injection lowers the ratio; otherwise remove the smallest
/// member of the strongest group if that lowers the ratio; otherwise stop.
/// At most `4 · budget` moves. Groups absent from both sets are ignored.
pub fn modify_discrete(
    initial: &[GroupMember],
    pool: &[GroupMember],
    budget: usize,
    tolerance: f64,
    similarity_weight: f64,
) -> Vec<GroupMember> {
    let present: BTreeSet<usize> = initial.iter().chain(pool).map(|m| m.group).collect();
    let mut set = initial.to_vec();
    if present.len() <= 1 {
        return set;
    }
    let mut pool = pool.to_vec();
    let pool_max = pool.iter().map(|m| m.value).fold(0.0, f64::max);
    let score = |m: &GroupMember| {
        let norm = if pool_max > 0.0 { m.value / pool_max } else { 0.0 };
        (1.0 - similarity_weight) * norm + similarity_weight * m.similarity
    };
    for _ in 0..4 * budget {
        let sums = group_sums(&set, &present);
        let ratio = balance_ratio(&sums);
        if ratio <= 1.0 + tolerance {
            break;
        }
        let under = sums
            .iter()
            .min_by(|a, b| a.1.total_cmp(b.1).then(a.0.cmp(b.0)))
            .map(|(&g, _)| g)
            .expect("at least two groups");
        let over = sums
            .iter()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(a.0)))
            .map(|(&g, _)| g)
            .expect("at least two groups");

        let mut injectable: Vec<usize> = (0..pool.len()).filter(|&k| pool[k].group == under).collect();
        injectable.sort_by(|&a, &b| {
            score(&pool[b])
                .total_cmp(&score(&pool[a]))
                .then(pool[b].value.total_cmp(&pool[a].value))
                .then(pool[a].id.cmp(&pool[b].id))
        });
        let injection = injectable.into_iter().find(|&k| {
            let mut trial = sums.clone();
            *trial.get_mut(&pool[k].group).expect("present") += pool[k].value;
            balance_ratio(&trial) < ratio
        });
        if let Some(k) = injection {
            set.push(pool.remove(k));
            continue;
        }

        let removal = (0..set.len())
            .filter(|&k| set[k].group == over)
            .min_by(|&a, &b| {
                set[a]
                    .value
                    .total_cmp(&set[b].value)
                    .then(set[b].id.cmp(&set[a].id))
            });
        let Some(k) = removal else { break };
        let mut trial = sums.clone();
        *trial.get_mut(&over).expect("present") -= set[k].value;
        // An emptied group leaves its sum at (or numerically near) zero.
        if set.iter().filter(|m| m.group == over).count() == 1 {
            trial.insert(over, 0.0);
        }
        if balance_ratio(&trial) < ratio {
            set.remove(k);
        } else {
            break;
        }
    }
    set
}

/// Pooling weights after group rescaling:
/// `A'_j = A_j · max_k SI_k / SI_{group(j)}` where `SI_k` sums `value` over
/// the members of group `k`.
pub fn rescale_weights(members: &[GroupMember], base: &[f64]) -> Vec<f64> {
    let mut sums: BTreeMap<usize, f64> = BTreeMap::new();
    for m in members {
        *sums.entry(m.group).or_insert(0.0) += m.value;
    }
    if sums.len() <= 1 {
        return base.to_vec();
    }
    let top = sums.values().copied().fold(f64::NEG_INFINITY, f64::max);
    members
        .iter()
        .zip(base)
        .map(|(m, &a)| a * (top / sums[&m.group]))
        .collect()
}

/// `1 - |a - b| / range`, or 1 when the range is zero.
pub fn similarity(a: f64, b: f64, range: f64) -> f64 {
    if range > 0.0 {
        1.0 - (a - b).abs() / range
    } else {
        1.0
    }
}

/// Similarity-weighted influence of the initial neighbors around sensitive
/// value `s`. `initial` holds `(s, influence)` pairs.
pub fn density(s: f64, initial: &[(f64, f64)], range: f64) -> f64 {
    initial
        .iter()
        .map(|&(sj, inf)| similarity(s, sj, range) * inf)
        .sum()
}

/// Population variance.
pub fn variance(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContinuousMember {
    pub id: usize,
    pub s: f64,
    pub influence: f64,
}

/// Continuous modifier: candidates ranked by ascending density (ties: higher
/// influence, then smaller id) are injected while each one raises the
/// variance of the neighborhood's sensitive values, at most
/// `max(1, budget / 2)` times.
pub fn modify_continuous(
    initial: &[ContinuousMember],
    pool: &[ContinuousMember],
    budget: usize,
) -> Vec<ContinuousMember> {
    let mut set = initial.to_vec();
    if pool.is_empty() {
        return set;
    }
    let (lo, hi) = initial
        .iter()
        .chain(pool)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), m| (lo.min(m.s), hi.max(m.s)));
    let range = hi - lo;
    let base: Vec<(f64, f64)> = initial.iter().map(|m| (m.s, m.influence)).collect();
    let mut ranked: Vec<(f64, ContinuousMember)> =
        pool.iter().map(|&m| (density(m.s, &base, range), m)).collect();
    ranked.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(b.1.influence.total_cmp(&a.1.influence))
            .then(a.1.id.cmp(&b.1.id))
    });
    let cap = (budget / 2).max(1);
    let mut values: Vec<f64> = set.iter().map(|m| m.s).collect();
    let mut injected = 0;
    for (_, cand) in ranked {
        if injected >= cap {
            break;
        }
        let before = variance(&values);
        values.push(cand.s);
        if variance(&values) > before {
            set.push(cand);
            injected += 1;
        } else {
            values.pop();
            break;
        }
    }
    set
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na > 0.0 && nb > 0.0 {
        dot / (na * nb)
    } else {
        0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledNeighbor {
    pub source: usize,
    pub edge: usize,
    /// Pooling weight after any rescaling.
    pub weight: f64,
    /// Physical influence of the edge.
    pub influence: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeighborSample {
    pub target: usize,
    pub neighbors: Vec<SampledNeighbor>,
    /// Group → summed balanced quantity over the final neighbors.
    pub groups_present: BTreeMap<usize, f64>,
    pub headwater: bool,
}

/// Read-only tables the sampler draws on; all indexed by node or edge.
#[derive(Clone, Copy)]
pub struct SamplerInputs<'a> {
    pub pgraph: &'a PredictionGraph,
    /// Per prediction-graph edge.
    pub influence: &'a [f64],
    pub groups: &'a [usize],
    pub sensitive: &'a [f64],
    /// Time-averaged standardized features per node.
    pub feature_summary: &'a [Vec<f64>],
}

pub fn sample_node(inputs: &SamplerInputs<'_>, cfg: &SamplerConfig, node: usize, epoch: u64) -> NeighborSample {
    let pg = inputs.pgraph;
    let init = sample_initial(pg, node, cfg.neighbor_budget, cfg.seed, epoch);
    if init.is_headwater() {
        return NeighborSample {
            target: node,
            neighbors: Vec::new(),
            groups_present: BTreeMap::new(),
            headwater: true,
        };
    }
    let adjacency = pg.adjacency();
    let source = |e: usize| pg.edge(e).upstream;
    let balance_value = |e: usize| match cfg.mode {
        SamplerMode::FairEdgeAblation => 1.0,
        SamplerMode::FairAdjAblation => adjacency[e],
        _ => inputs.influence[e],
    };
    let group_member = |e: usize| GroupMember {
        id: e,
        group: inputs.groups[source(e)],
        value: balance_value(e),
        similarity: cosine_similarity(
            &inputs.feature_summary[source(e)],
            &inputs.feature_summary[node],
        ),
    };

    let (edges, weights, balanced): (Vec<usize>, Vec<f64>, Vec<GroupMember>) = match cfg.mode {
        SamplerMode::Random => {
            let members: Vec<GroupMember> = init.initial.iter().map(|&e| group_member(e)).collect();
            let w = init.initial.iter().map(|&e| adjacency[e]).collect();
            (init.initial.clone(), w, members)
        }
        SamplerMode::FairContinuous => {
            let member = |e: usize| ContinuousMember {
                id: e,
                s: inputs.sensitive[source(e)],
                influence: inputs.influence[e],
            };
            let a: Vec<_> = init.initial.iter().map(|&e| member(e)).collect();
            let c: Vec<_> = init.candidates.iter().map(|&e| member(e)).collect();
            let chosen = modify_continuous(&a, &c, cfg.neighbor_budget);
            let edges: Vec<usize> = chosen.iter().map(|m| m.id).collect();
            let members = edges.iter().map(|&e| group_member(e)).collect();
            let w = edges.iter().map(|&e| adjacency[e]).collect();
            (edges, w, members)
        }
        SamplerMode::FairDiscrete | SamplerMode::FairEdgeAblation | SamplerMode::FairAdjAblation => {
            let a: Vec<_> = init.initial.iter().map(|&e| group_member(e)).collect();
            let c: Vec<_> = init.candidates.iter().map(|&e| group_member(e)).collect();
            let chosen = modify_discrete(
                &a,
                &c,
                cfg.neighbor_budget,
                cfg.balance_tolerance,
                cfg.feature_similarity_weight,
            );
            let edges: Vec<usize> = chosen.iter().map(|m| m.id).collect();
            let base: Vec<f64> = edges.iter().map(|&e| adjacency[e]).collect();
            let w = rescale_weights(&chosen, &base);
            (edges, w, chosen)
        }
    };
    let mut groups_present = BTreeMap::new();
    for m in &balanced {
        *groups_present.entry(m.group).or_insert(0.0) += m.value;
    }
    NeighborSample {
        target: node,
        neighbors: edges
            .iter()
            .zip(weights)
            .map(|(&e, weight)| SampledNeighbor {
                source: source(e),
                edge: e,
                weight,
                influence: inputs.influence[e],
            })
            .collect(),
        groups_present,
        headwater: false,
    }
}

pub type Neighborhoods = Vec<NeighborSample>;

pub fn sample_all(inputs: &SamplerInputs<'_>, cfg: &SamplerConfig, epoch: u64) -> Neighborhoods {
    (0..inputs.pgraph.node_count())
        .into_par_iter()
        .map(|node| sample_node(inputs, cfg, node, epoch))
        .collect()
}

#[derive(Serialize)]
struct NeighborhoodFile {
    schema_version: u32,
    epoch: u64,
    mode: SamplerMode,
    nodes: Vec<NeighborhoodRecord>,
}

#[derive(Serialize)]
struct NeighborhoodRecord {
    target: SegmentId,
    headwater: bool,
    neighbors: Vec<NeighborRecord>,
}

#[derive(Serialize)]
struct NeighborRecord {
    segment: SegmentId,
    weight: f64,
    influence: f64,
}

/// Audit dump of one epoch's neighborhoods.
pub fn neighborhoods_json(hoods: &[NeighborSample], segments: &[SegmentId], mode: SamplerMode, epoch: u64) -> String {
    let file = NeighborhoodFile {
        schema_version: 1,
        epoch,
        mode,
        nodes: hoods
            .iter()
            .map(|h| NeighborhoodRecord {
                target: segments[h.target],
                headwater: h.headwater,
                neighbors: h
                    .neighbors
                    .iter()
                    .map(|n| NeighborRecord {
                        segment: segments[n.source],
                        weight: n.weight,
                        influence: n.influence,
                    })
                    .collect(),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("neighborhoods serialize")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{expand_multihop, BasinGraph, DirectEdge};

    fn gm(id: usize, group: usize, value: f64) -> GroupMember {
        GroupMember { id, group, value, similarity: 0.0 }
    }

    /// Star: segments 1..=k drain directly into 0.
    fn star(k: u32) -> PredictionGraph {
        let edges = (1..=k)
            .map(|u| DirectEdge { upstream: u, downstream: 0, distance: f64::from(u) })
            .collect();
        expand_multihop(&BasinGraph::new((0..=k).collect(), edges).unwrap(), None).unwrap()
    }

    #[test]
    fn initial_sample_cardinality() {
        let p = star(3);
        let s = sample_initial(&p, 0, 5, 1, 0);
        assert_eq!(s.initial.len(), 3);
        assert!(s.candidates.is_empty());

        let p = star(10);
        let s = sample_initial(&p, 0, 4, 1, 0);
        assert_eq!((s.initial.len(), s.candidates.len()), (4, 6));
        assert_eq!(s, sample_initial(&p, 0, 4, 1, 0));
        assert!(sample_initial(&p, 3, 4, 1, 0).is_headwater());
    }

    #[test]
    fn single_group_is_left_alone() {
        let a = [gm(0, 1, 0.9), gm(1, 1, 0.1)];
        let c = [gm(2, 1, 0.5)];
        assert_eq!(modify_discrete(&a, &c, 2, 0.0, 0.3), a.to_vec());
    }

    #[test]
    fn injects_the_missing_group() {
        let out = modify_discrete(&[gm(0, 0, 0.4)], &[gm(1, 1, 0.4)], 1, 0.0, 0.0);
        assert_eq!(out, vec![gm(0, 0, 0.4), gm(1, 1, 0.4)]);
    }

    #[test]
    fn removal_trace_stops_without_improving_move() {
        let a = [gm(0, 0, 0.6), gm(1, 0, 0.1), gm(2, 1, 0.1)];
        let out = modify_discrete(&a, &[], 3, 0.5, 0.0);
        assert_eq!(out, vec![gm(0, 0, 0.6), gm(2, 1, 0.1)]);
    }

    #[test]
    fn injection_prefers_similar_features() {
        let mut near = gm(1, 1, 0.2);
        near.similarity = 1.0;
        let mut far = gm(2, 1, 0.2);
        far.similarity = -1.0;
        let out = modify_discrete(&[gm(0, 0, 0.2)], &[far, near], 1, 0.0, 0.5);
        assert_eq!(out[1].id, 1);
    }

    #[test]
    fn rescale_hand_values() {
        let m = [gm(0, 0, 1.0), gm(1, 0, 1.0), gm(2, 1, 4.0)];
        assert_eq!(rescale_weights(&m, &[0.5, 0.25, 0.5]), vec![1.0, 0.5, 0.5]);
        let m = [gm(0, 0, 1.0), gm(1, 1, 1.0)];
        assert_eq!(rescale_weights(&m, &[0.3, 0.7]), vec![0.3, 0.7]);
        let m = [gm(0, 2, 1.0), gm(1, 2, 3.0)];
        assert_eq!(rescale_weights(&m, &[0.3, 0.7]), vec![0.3, 0.7]);
    }

    #[test]
    fn fair_adj_and_edge_scales() {
        // FairAdj: summed weights G0 = 0.5, G1 = 1.0 → G0 scaled by 2
        let m = [gm(0, 0, 0.5), gm(1, 1, 0.6), gm(2, 1, 0.4)];
        let w = rescale_weights(&m, &[0.5, 0.6, 0.4]);
        assert_eq!(w, vec![1.0, 0.6, 0.4]);
        // FairEdge: counts 1 vs 3 → scale 3
        let m = [gm(0, 0, 1.0), gm(1, 1, 1.0), gm(2, 1, 1.0), gm(3, 1, 1.0)];
        let w = rescale_weights(&m, &[0.5; 4]);
        assert_eq!(w, vec![1.5, 0.5, 0.5, 0.5]);
        // equal counts: no moves
        let a = [gm(0, 0, 1.0), gm(1, 0, 1.0), gm(2, 1, 1.0), gm(3, 1, 1.0)];
        assert_eq!(modify_discrete(&a, &[gm(4, 1, 1.0)], 4, 0.0, 0.3), a.to_vec());
    }

    #[test]
    fn density_hand_values() {
        let init = [(0.0, 0.5), (1.0, 0.5)];
        assert_eq!(density(0.0, &init, 1.0), 0.5);
        assert_eq!(density(0.5, &init, 1.0), 0.5);
        assert_eq!(density(0.3, &[], 1.0), 0.0);
        assert_eq!(similarity(3.0, 7.0, 0.0), 1.0);
    }

    fn cm(id: usize, s: f64, influence: f64) -> ContinuousMember {
        ContinuousMember { id, s, influence }
    }

    #[test]
    fn continuous_injection_trace() {
        let a = [cm(0, 0.5, 0.3), cm(1, 0.5, 0.3)];
        let c = [cm(2, 0.5, 0.3), cm(3, 0.9, 0.3)];
        let out = modify_continuous(&a, &c, 4);
        assert_eq!(out, vec![a[0], a[1], c[1]]);

        let same = [cm(2, 0.5, 0.3), cm(3, 0.5, 0.9)];
        assert_eq!(modify_continuous(&a, &same, 4), a.to_vec());
        assert_eq!(modify_continuous(&a, &[], 4), a.to_vec());
    }

    #[test]
    fn sample_node_modes() {
        let p = star(6);
        let influence: Vec<f64> = (0..p.edges().len()).map(|k| 0.1 + 0.1 * k as f64).collect();
        let groups = vec![0, 0, 0, 0, 0, 1, 1];
        let sensitive = vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let summary = vec![vec![1.0, 0.0]; 7];
        let inputs = SamplerInputs {
            pgraph: &p,
            influence: &influence,
            groups: &groups,
            sensitive: &sensitive,
            feature_summary: &summary,
        };
        for mode in SamplerMode::ALL {
            let mut cfg = SamplerConfig::new(mode);
            cfg.neighbor_budget = 3;
            cfg.seed = 5;
            let s = sample_node(&inputs, &cfg, 0, 1);
            assert!(!s.headwater);
            assert!(s.neighbors.iter().all(|n| n.weight > 0.0));
            assert_eq!(s, sample_node(&inputs, &cfg, 0, 1));
            let h = sample_node(&inputs, &cfg, 2, 1);
            assert!(h.headwater && h.neighbors.is_empty());
        }
    }
}
