#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use streamfair::basin::{self, BasinSpec};
use streamfair::graph::{self, BasinGraph};
use streamfair::influence::{self, FlowTable};
use streamfair::metrics::SegmentError;
use streamfair::model::{self, FeatureCube, ModelConfig, ModelState, Observation};
use streamfair::rng;
use streamfair::sampler::{self, GroupMember};

pub fn rng(seed: u64) -> ChaCha8Rng {
    rng::stream(seed, &[0xfeed])
}

/// A random small model problem: ≤ 5 nodes, ≤ 8 days, hidden ≤ 6.
pub struct SmallInstance {
    pub state: ModelState,
    pub cube: FeatureCube,
    pub pools: Vec<Vec<(usize, f64)>>,
    pub days: usize,
    pub observations: Vec<Observation>,
}

pub fn small_instance(seed: u64) -> SmallInstance {
    let mut r = rng(seed);
    let nodes = r.gen_range(2..=5);
    let days = r.gen_range(2..=8);
    let features = r.gen_range(1..=4);
    let mut cfg = ModelConfig::new(features);
    cfg.hidden_dim = r.gen_range(1..=6);
    cfg.gnn_layers = r.gen_range(1..=2);
    cfg.output_hidden_dims = (0..r.gen_range(0..=2)).map(|_| r.gen_range(1..=4)).collect();
    let state = ModelState::new(cfg, seed, 0.001).unwrap();
    let data = (0..nodes * days * features).map(|_| r.gen_range(-1.5..1.5)).collect();
    let cube = FeatureCube::new(nodes, days, features, data).unwrap();
    // node k may pool from any lower index, like a downstream ordering
    let mut pools = Vec::with_capacity(nodes);
    for k in 0..nodes {
        let mut list = Vec::new();
        for j in 0..k {
            if r.gen_bool(0.6) {
                list.push((j, r.gen_range(0.05..2.0)));
            }
        }
        pools.push(list);
    }
    let mut observations = Vec::new();
    for node in 0..nodes {
        for day in 0..days {
            if r.gen_bool(0.5) {
                observations.push(Observation { node, day, value: r.gen_range(-2.0..2.0) });
            }
        }
    }
    if observations.is_empty() {
        observations.push(Observation { node: nodes - 1, day: days - 1, value: 0.5 });
    }
    SmallInstance { state, cube, pools, days, observations }
}

/// Largest relative error between the analytic gradient and central
/// differences (step 1e-5) over every parameter.
pub fn max_gradient_error(inst: &SmallInstance) -> f64 {
    let (_, grad) = model::loss_and_gradient(
        &inst.state,
        &inst.cube,
        &inst.pools,
        0..inst.days,
        &inst.observations,
    )
    .unwrap();
    let eps = 1e-5;
    let mut probe = inst.state.clone();
    let mut worst: f64 = 0.0;
    for k in 0..grad.len() {
        let orig = probe.params[k];
        probe.params[k] = orig + eps;
        let plus = model::loss_and_gradient(&probe, &inst.cube, &inst.pools, 0..inst.days, &inst.observations)
            .unwrap()
            .0;
        probe.params[k] = orig - eps;
        let minus = model::loss_and_gradient(&probe, &inst.cube, &inst.pools, 0..inst.days, &inst.observations)
            .unwrap()
            .0;
        probe.params[k] = orig;
        let numeric = (plus - minus) / (2.0 * eps);
        let rel = (grad[k] - numeric).abs() / grad[k].abs().max(numeric.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    worst
}

/// A random tree basin of `2..=max_segments` segments with positive daily
/// flows spanning several orders of magnitude.
pub fn random_basin(seed: u64, max_segments: usize, days: usize) -> (BasinGraph, FlowTable) {
    let mut r = rng(seed);
    let mut spec = BasinSpec::new(r.gen_range(2..=max_segments), days.max(2), seed);
    spec.tree_branching = r.gen_range(0.5..3.0);
    let graph = basin::generate_topology(&spec).unwrap();
    let flow: Vec<Vec<f64>> = (0..graph.len())
        .map(|_| (0..days).map(|_| 10f64.powf(r.gen_range(-2.0..3.0))).collect())
        .collect();
    let observed = vec![vec![true; days]; graph.len()];
    (graph, FlowTable::from_filled(flow, &observed))
}

/// Over every prediction edge and day: the largest gap between the stored
/// multi-hop influence and the left-to-right product of one-hop values, and
/// the largest gap between a one-hop value and `q_j / (q_j + q_i)`.
pub fn telescoping_errors(graph: &BasinGraph, flows: &FlowTable) -> (f64, f64) {
    let pg = graph::expand_multihop(graph, None).unwrap();
    let mut product_gap: f64 = 0.0;
    let mut hop_gap: f64 = 0.0;
    for e in pg.edges() {
        for day in 0..flows.days() {
            let mut product = 1.0;
            for w in e.path.windows(2) {
                assert!(graph.upstream_of(w[1]).iter().any(|&(u, _)| u == w[0]), "path skips a reach");
                let (qj, qi) = (flows.flow[w[0]][day], flows.flow[w[1]][day]);
                let one = influence::one_hop_influence(qj, qi).unwrap();
                hop_gap = hop_gap.max((one - qj / (qj + qi)).abs());
                product *= one;
            }
            let stored = influence::path_influence(&pg, e.upstream, e.downstream, day, flows).unwrap();
            product_gap = product_gap.max((stored - product).abs());
        }
    }
    (product_gap, hop_gap)
}

/// Random neighborhood with 2..=4 groups, positive influence and weights.
pub fn random_neighborhood(r: &mut ChaCha8Rng) -> (Vec<GroupMember>, Vec<f64>) {
    let groups = r.gen_range(1..=4);
    let size = r.gen_range(1..=15);
    let members: Vec<GroupMember> = (0..size)
        .map(|id| GroupMember {
            id,
            group: r.gen_range(0..groups),
            value: 10f64.powf(r.gen_range(-4.0..0.0)),
            similarity: r.gen_range(0.0..1.0),
        })
        .collect();
    let base = (0..size).map(|_| r.gen_range(0.01..1.0)).collect();
    (members, base)
}

/// Largest relative spread of per-group sums of `value · A'/A` after
/// rescaling.
pub fn rescaled_spread(members: &[GroupMember], base: &[f64]) -> f64 {
    let scaled = sampler::rescale_weights(members, base);
    let mut sums: std::collections::BTreeMap<usize, f64> = Default::default();
    for ((m, a), a2) in members.iter().zip(base).zip(&scaled) {
        *sums.entry(m.group).or_default() += m.value * (a2 / a);
    }
    let hi = sums.values().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = sums.values().copied().fold(f64::INFINITY, f64::min);
    (hi - lo) / hi
}

/// Largest gap between `sampler::density` and a plain double loop over
/// candidates and initial neighbors.
pub fn density_gap(r: &mut ChaCha8Rng) -> f64 {
    let initial: Vec<(f64, f64)> = (0..r.gen_range(0..=100))
        .map(|_| (r.gen_range(0.0..150_000.0), r.gen_range(0.0..1.0)))
        .collect();
    let candidates: Vec<f64> = (0..r.gen_range(1..=100)).map(|_| r.gen_range(0.0..150_000.0)).collect();
    let all = initial.iter().map(|p| p.0).chain(candidates.iter().copied());
    let lo = all.clone().fold(f64::INFINITY, f64::min);
    let hi = all.fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    let mut worst: f64 = 0.0;
    for &s in &candidates {
        let mut expected = 0.0;
        for &(sj, inf) in &initial {
            let sim = if range > 0.0 { 1.0 - (s - sj).abs() / range } else { 1.0 };
            expected += sim * inf;
        }
        let got = sampler::density(s, &initial, range);
        worst = worst.max((got - expected).abs() / expected.abs().max(1.0));
    }
    worst
}

/// Random per-segment errors; some segments have no observations and some
/// share a sensitive value.
pub fn random_errors(r: &mut ChaCha8Rng, max_segments: usize) -> Vec<SegmentError> {
    let n = r.gen_range(1..=max_segments);
    let mut out: Vec<SegmentError> = (0..n)
        .map(|_| {
            let count = if r.gen_bool(0.15) { 0 } else { r.gen_range(1..40) };
            SegmentError {
                s: (r.gen_range(0.0..20_000.0f64)).round(),
                sse: count as f64 * r.gen_range(0.0..9.0),
                count,
            }
        })
        .collect();
    if out.iter().all(|e| e.count == 0) {
        out[0].count = 3;
        out[0].sse = 2.0;
    }
    out
}

fn pooled_rmse(members: &[&SegmentError]) -> Option<f64> {
    let count: usize = members.iter().map(|e| e.count).sum();
    let sse: f64 = members.iter().map(|e| e.sse).sum();
    (count > 0).then(|| (sse / count as f64).sqrt())
}

/// Worst window RMSE by enumerating every run of sorted distinct values and
/// keeping those some window `[a, a + w]`, `a` in `[lo, max(lo, hi - w)]`,
/// selects exactly.
pub fn brute_force_worst(errors: &[SegmentError], width: f64) -> f64 {
    let live: Vec<&SegmentError> = errors.iter().filter(|e| e.count > 0).collect();
    let mut values: Vec<f64> = live.iter().map(|e| e.s).collect();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let (lo, hi) = (values[0], values[values.len() - 1]);
    let top = lo.max(hi - width);
    let mut best = f64::NEG_INFINITY;
    for a in 0..values.len() {
        for b in a..values.len() {
            // starts selecting exactly values[a..=b]: above values[a-1], at most
            // values[a], reaching values[b], stopping short of values[b+1]
            let (mut lower, mut lower_open) = (lo.max(values[b] - width), false);
            if a > 0 && values[a - 1] >= lower {
                (lower, lower_open) = (values[a - 1], true);
            }
            let (mut upper, mut upper_open) = (values[a].min(top), false);
            if b + 1 < values.len() && values[b + 1] - width <= upper {
                (upper, upper_open) = (values[b + 1] - width, true);
            }
            let feasible = lower < upper || (lower == upper && !lower_open && !upper_open);
            if !feasible {
                continue;
            }
            let run: Vec<&SegmentError> = live
                .iter()
                .copied()
                .filter(|e| e.s >= values[a] && e.s <= values[b])
                .collect();
            if let Some(v) = pooled_rmse(&run) {
                best = best.max(v);
            }
        }
    }
    best
}

/// Windows at `lo + k · stride · w` until one reaches the largest value,
/// membership recomputed by a linear filter.
pub fn naive_stride_curve(errors: &[SegmentError], width: f64, stride: f64) -> Vec<(f64, f64)> {
    let live: Vec<&SegmentError> = errors.iter().filter(|e| e.count > 0).collect();
    let lo = live.iter().map(|e| e.s).fold(f64::INFINITY, f64::min);
    let hi = live.iter().map(|e| e.s).fold(f64::NEG_INFINITY, f64::max);
    let mut out = Vec::new();
    let mut k = 0u64;
    loop {
        let start = lo + k as f64 * (stride * width);
        let inside: Vec<&SegmentError> = live
            .iter()
            .copied()
            .filter(|e| e.s >= start && e.s <= start + width)
            .collect();
        if let Some(v) = pooled_rmse(&inside) {
            out.push((start, v));
        }
        if start + width >= hi {
            return out;
        }
        k += 1;
    }
}

/// Runs the generator without noise or relaxation and returns the largest
/// amount by which a simulated temperature leaves the range of its mixing
/// inputs (previous own temperature and same-day upstream temperatures).
pub fn convexity_violation(seed: u64) -> f64 {
    let mut r = rng(seed);
    let mut spec = BasinSpec::new(r.gen_range(2..=30), r.gen_range(5..=60), seed);
    spec.noise_scale = 0.0;
    spec.relaxation = 0.0;
    spec.tree_branching = r.gen_range(0.5..3.0);
    spec.sensitive_clustering = r.gen_range(0.0..1.0);
    let graph = basin::generate_topology(&spec).unwrap();
    let sensitive = basin::assign_sensitive(&graph, &spec);
    let series = basin::simulate_flow_and_weather(&graph, &spec, &sensitive).unwrap();
    let temp = basin::simulate_temperature(&graph, &series, &spec).unwrap();
    let mut worst: f64 = 0.0;
    for ix in 0..graph.len() {
        for t in 1..spec.time_steps {
            let inputs = std::iter::once(temp[ix][t - 1]).chain(graph.upstream_of(ix).iter().map(|&(u, _)| temp[u][t]));
            let lo = inputs.clone().fold(f64::INFINITY, f64::min);
            let hi = inputs.fold(f64::NEG_INFINITY, f64::max);
            let v = temp[ix][t];
            worst = worst.max(lo - v).max(v - hi);
        }
    }
    worst
}
