//! Synthetic river basins: topology, weather drivers, routed streamflow,
//! heat-mixed water temperature, sparse observation masks and a spatially
//! clustered sensitive attribute.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{BasinGraph, DirectEdge};
use crate::rng;

/// Day-of-year sine, day-of-year cosine, air temperature, solar radiation,
/// precipitation, riparian shade.
pub const FEATURE_COUNT: usize = 6;
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] =
    ["doy_sin", "doy_cos", "air_temp", "solar", "precip", "shade"];

const YEAR: f64 = 365.0;

fn default_branching() -> f64 {
    1.6
}
fn default_distance_range() -> [f64; 2] {
    [1.0, 10.0]
}
fn default_relaxation() -> f64 {
    0.1
}
fn default_min_flow() -> f64 {
    1e-3
}
fn default_sensitive_range() -> [f64; 2] {
    [0.0, 150_000.0]
}
fn default_sim_flow_error() -> f64 {
    0.1
}
fn default_solar_heating() -> f64 {
    0.02
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasinSpec {
    pub segment_count: usize,
    /// Mean number of upstream children per segment.
    #[serde(default = "default_branching")]
    pub tree_branching: f64,
    pub time_steps: usize,
    pub observation_density: f64,
    pub streamflow_observation_density: f64,
    pub sensitive_clustering: f64,
    /// Standard deviation (°C) of local weather and temperature noise.
    pub noise_scale: f64,
    pub seed: u64,
    #[serde(default = "default_distance_range")]
    pub distance_range: [f64; 2],
    /// Daily relaxation of water temperature toward equilibrium.
    #[serde(default = "default_relaxation")]
    pub relaxation: f64,
    #[serde(default = "default_min_flow")]
    pub min_flow: f64,
    #[serde(default = "default_sensitive_range")]
    pub sensitive_range: [f64; 2],
    /// In [0,1]. Scales per-segment temperature observation density from
    /// `1 - g` (lowest sensitive value) to `1 + g` (highest).
    #[serde(default)]
    pub observation_sensitive_gradient: f64,
    /// In [0,1]. How strongly riparian shade increases with the sensitive
    /// value; low-valued segments then run warmer under the same weather.
    #[serde(default)]
    pub shade_sensitivity: f64,
    /// Log-normal error of the simulated streamflow relative to the gauge.
    #[serde(default = "default_sim_flow_error")]
    pub simulated_flow_error: f64,
    /// °C of equilibrium warming per W/m² of unshaded radiation.
    #[serde(default = "default_solar_heating")]
    pub solar_heating: f64,
}

impl BasinSpec {
    pub fn new(segment_count: usize, time_steps: usize, seed: u64) -> Self {
        BasinSpec {
            segment_count,
            tree_branching: default_branching(),
            time_steps,
            observation_density: 0.3,
            streamflow_observation_density: 0.7,
            sensitive_clustering: 0.7,
            noise_scale: 0.3,
            seed,
            distance_range: default_distance_range(),
            relaxation: default_relaxation(),
            min_flow: default_min_flow(),
            sensitive_range: default_sensitive_range(),
            observation_sensitive_gradient: 0.0,
            shade_sensitivity: 0.0,
            simulated_flow_error: default_sim_flow_error(),
            solar_heating: default_solar_heating(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.segment_count < 2 {
            return bad(format!("segment_count must be >= 2, got {}", self.segment_count));
        }
        if self.time_steps < 2 {
            return bad(format!("time_steps must be >= 2, got {}", self.time_steps));
        }
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must be in [0,1], got {v}")))
            }
        };
        unit("observation_density", self.observation_density)?;
        unit(
            "streamflow_observation_density",
            self.streamflow_observation_density,
        )?;
        unit("sensitive_clustering", self.sensitive_clustering)?;
        unit("relaxation", self.relaxation)?;
        unit(
            "observation_sensitive_gradient",
            self.observation_sensitive_gradient,
        )?;
        unit("shade_sensitivity", self.shade_sensitivity)?;
        let nonneg = |name: &str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must be finite and >= 0, got {v}")))
            }
        };
        nonneg("tree_branching", self.tree_branching)?;
        nonneg("noise_scale", self.noise_scale)?;
        nonneg("simulated_flow_error", self.simulated_flow_error)?;
        nonneg("solar_heating", self.solar_heating)?;
        if !(self.min_flow.is_finite() && self.min_flow > 0.0) {
            return bad(format!("min_flow must be > 0, got {}", self.min_flow));
        }
        let [lo, hi] = self.distance_range;
        if !(lo.is_finite() && hi.is_finite() && lo > 0.0 && hi >= lo) {
            return bad(format!("distance_range must satisfy 0 < lo <= hi, got [{lo}, {hi}]"));
        }
        let [lo, hi] = self.sensitive_range;
        if !(lo.is_finite() && hi.is_finite() && hi >= lo) {
            return bad(format!("sensitive_range must satisfy lo <= hi, got [{lo}, {hi}]"));
        }
        if u32::try_from(self.segment_count).is_err() {
            return bad("segment_count exceeds the id space".into());
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SegmentSeries {
    /// `time_steps × FEATURE_COUNT`, day-major.
    pub features: Vec<f64>,
    /// Gauge streamflow, meaningful where `flow_observed`.
    pub flow: Vec<f64>,
    pub flow_observed: Vec<bool>,
    /// Modelled streamflow available for every day.
    pub flow_simulated: Vec<f64>,
    /// Observed water temperature; NaN where unobserved.
    pub temp: Vec<f64>,
    pub temp_observed: Vec<bool>,
}

impl SegmentSeries {
    pub fn days(&self) -> usize {
        self.flow.len()
    }

    pub fn feature_row(&self, day: usize) -> &[f64] {
        &self.features[day * FEATURE_COUNT..(day + 1) * FEATURE_COUNT]
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticBasin {
    pub spec: BasinSpec,
    pub graph: BasinGraph,
    pub series: Vec<SegmentSeries>,
    pub sensitive: Vec<f64>,
    /// Dense per-segment, per-day water temperature (°C).
    pub ground_truth_temperature: Vec<Vec<f64>>,
}

/// Random downstream-pointing tree rooted at segment 0. Segments are added
/// breadth first; each receives `floor(b)` or `ceil(b)` upstream children
/// (mean `b = tree_branching`) until the segment budget is spent.
pub fn generate_topology(spec: &BasinSpec) -> Result<BasinGraph> {
    spec.validate()?;
    let mut rng = rng::stream(spec.seed, &[rng::TAG_TOPOLOGY]);
    let n = spec.segment_count;
    let [dlo, dhi] = spec.distance_range;
    let whole = spec.tree_branching.floor();
    let frac = spec.tree_branching - whole;
    let mut edges = Vec::with_capacity(n - 1);
    let mut queue = std::collections::VecDeque::from([0usize]);
    let mut next = 1usize;
    while next < n {
        let parent = match queue.pop_front() {
            Some(p) => p,
            None => rng.gen_range(0..next),
        };
        let mut children = whole as usize + usize::from(rng.gen_bool(frac));
        if children == 0 && queue.is_empty() {
            children = 1;
        }
        for _ in 0..children {
            if next >= n {
                break;
            }
            let distance = if dhi > dlo { rng.gen_range(dlo..dhi) } else { dlo };
            edges.push(DirectEdge {
                upstream: next as u32,
                downstream: parent as u32,
                distance,
            });
            queue.push_back(next);
            next += 1;
        }
    }
    BasinGraph::new((0..n as u32).collect(), edges)
}

/// Continuous sensitive value per segment. Segments are visited in index
/// order; each draws `c · mean(already assigned neighbors) + (1 - c) · U`
/// with `U` uniform on `sensitive_range` and `c = sensitive_clustering`.
pub fn assign_sensitive(graph: &BasinGraph, spec: &BasinSpec) -> Vec<f64> {
    let mut rng = rng::stream(spec.seed, &[rng::TAG_SENSITIVE]);
    let [lo, hi] = spec.sensitive_range;
    let c = spec.sensitive_clustering;
    let mut s = vec![f64::NAN; graph.len()];
    for ix in 0..graph.len() {
        let draw = if hi > lo { rng.gen_range(lo..hi) } else { lo };
        let (sum, count) = graph
            .upstream_of(ix)
            .iter()
            .chain(graph.downstream_of(ix))
            .filter(|&&(nb, _)| nb < ix)
            .fold((0.0, 0usize), |(acc, k), &(nb, _)| (acc + s[nb], k + 1));
        s[ix] = if count == 0 {
            draw
        } else {
            c * (sum / count as f64) + (1.0 - c) * draw
        };
    }
    s
}

/// Maps sensitive values onto [0,1] by the basin's observed range.
fn unit_rank(sensitive: &[f64]) -> Vec<f64> {
    let lo = sensitive.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = sensitive.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    sensitive
        .iter()
        .map(|&v| if hi > lo { (v - lo) / (hi - lo) } else { 0.5 })
        .collect()
}

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

fn season(day: usize, peak_day: f64) -> f64 {
    (2.0 * PI * (day as f64 - peak_day) / YEAR).cos()
}

/// Weather features and routed streamflow. Streamflow at each segment is its
/// own runoff plus the same-day flow of its direct upstream neighbors; runoff
/// is floored at `min_flow`.
pub fn simulate_flow_and_weather(
    graph: &BasinGraph,
    spec: &BasinSpec,
    sensitive: &[f64],
) -> Result<Vec<SegmentSeries>> {
    spec.validate()?;
    if sensitive.len() != graph.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} sensitive values for {} segments",
            sensitive.len(),
            graph.len()
        )));
    }
    let order = graph.topological_order()?;
    let n = graph.len();
    let t_len = spec.time_steps;
    let mut rng = rng::stream(spec.seed, &[rng::TAG_WEATHER]);
    let rank = unit_rank(sensitive);

    // basin-wide drivers
    let storm = Exp::new(1.0 / 8.0).expect("positive rate");
    let mut anomaly: f64 = 0.0;
    let mut shared_anomaly = Vec::with_capacity(t_len);
    let mut shared_precip = Vec::with_capacity(t_len);
    for _ in 0..t_len {
        anomaly = 0.8 * anomaly + 1.2 * normal(&mut rng);
        shared_anomaly.push(anomaly);
        let p = if rng.gen_bool(0.25) {
            storm.sample(&mut rng)
        } else {
            0.0
        };
        shared_precip.push(p);
    }

    // per-segment static properties
    let mut offset = Vec::with_capacity(n);
    let mut shade = Vec::with_capacity(n);
    let mut base_runoff = Vec::with_capacity(n);
    let mut precip_scale = Vec::with_capacity(n);
    for &u in &rank {
        offset.push(rng.gen_range(-1.5..1.5));
        let sh: f64 = 0.45 + 0.8 * spec.shade_sensitivity * (u - 0.5) + 0.12 * normal(&mut rng);
        shade.push(sh.clamp(0.02, 0.95));
        base_runoff.push(rng.gen_range(0.2..2.0));
        precip_scale.push(rng.gen_range(0.7..1.3));
    }

    let mut series: Vec<SegmentSeries> = (0..n)
        .map(|_| SegmentSeries {
            features: vec![0.0; t_len * FEATURE_COUNT],
            flow: vec![0.0; t_len],
            flow_observed: vec![false; t_len],
            flow_simulated: vec![0.0; t_len],
            temp: vec![f64::NAN; t_len],
            temp_observed: vec![false; t_len],
        })
        .collect();

    for ix in 0..n {
        let mut wetness: f64 = 0.0;
        for t in 0..t_len {
            let doy = (t % 365) as f64;
            let angle = 2.0 * PI * doy / YEAR;
            let precip: f64 = shared_precip[t] * precip_scale[ix];
            let air = 11.0
                + 10.0 * season(t, 200.0)
                + offset[ix]
                + shared_anomaly[t]
                + spec.noise_scale * normal(&mut rng);
            let clearness = 1.0 - 0.6 * (precip / 20.0).min(1.0);
            let solar = (180.0 + 110.0 * season(t, 172.0)) * clearness;
            let row = &mut series[ix].features[t * FEATURE_COUNT..(t + 1) * FEATURE_COUNT];
            row.copy_from_slice(&[angle.sin(), angle.cos(), air, solar, precip, shade[ix]]);

            wetness = 0.7 * wetness + 0.3 * precip;
            let runoff = base_runoff[ix] * (1.0 + 0.6 * season(t, 95.0)) * (0.1 * normal(&mut rng)).exp()
                + 0.04 * base_runoff[ix] * wetness;
            series[ix].flow[t] = runoff.max(spec.min_flow);
        }
    }
    // accumulate downstream; topological order visits upstream first
    for &ix in &order {
        for t in 0..t_len {
            let inflow: f64 = graph
                .upstream_of(ix)
                .iter()
                .map(|&(up, _)| series[up].flow[t])
                .sum();
            series[ix].flow[t] += inflow;
        }
    }
    let mut sim_rng = rng::stream(spec.seed, &[rng::TAG_FLOW_SIM]);
    for s in &mut series {
        for t in 0..t_len {
            let err = (spec.simulated_flow_error * normal(&mut sim_rng)).exp();
            s.flow_simulated[t] = (s.flow[t] * err).max(spec.min_flow);
        }
    }
    Ok(series)
}

/// Flow-weighted mixing of a segment's previous temperature with the current
/// temperatures of its direct upstream neighbors:
/// `(y_prev · q_own + Σ y_j · q_j) / (q_own + Σ q_j)`.
pub fn heat_mix(prev_own: f64, own_flow: f64, upstream: &[(f64, f64)]) -> f64 {
    let mut num = prev_own * own_flow;
    let mut den = own_flow;
    for &(temp, flow) in upstream {
        num += temp * flow;
        den += flow;
    }
    num / den
}

/// Dense water temperature (°C), `[segment][day]`. Day 0 starts at the
/// equilibrium temperature; later days mix upstream water in topological
/// order, relax toward equilibrium and add noise.
pub fn simulate_temperature(
    graph: &BasinGraph,
    series: &[SegmentSeries],
    spec: &BasinSpec,
) -> Result<Vec<Vec<f64>>> {
    let n = graph.len();
    let t_len = spec.time_steps;
    if series.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "{} series for {} segments",
            series.len(),
            n
        )));
    }
    for (ix, s) in series.iter().enumerate() {
        if s.days() != t_len {
            return Err(Error::DimensionMismatch(format!(
                "segment {} has {} days, expected {t_len}",
                graph.id(ix),
                s.days()
            )));
        }
        if let Some(day) = s.flow.iter().position(|&q| !(q > 0.0)) {
            return Err(Error::NonPositiveFlow {
                segment: graph.id(ix),
                day,
                value: s.flow[day],
            });
        }
    }
    let order = graph.topological_order()?;
    let mut rng = rng::stream(spec.seed, &[rng::TAG_TEMPERATURE]);
    let equilibrium = |s: &SegmentSeries, t: usize| {
        let row = s.feature_row(t);
        row[2] + spec.solar_heating * row[3] * (1.0 - row[5])
    };
    let mut temp = vec![vec![0.0; t_len]; n];
    for ix in 0..n {
        temp[ix][0] = equilibrium(&series[ix], 0).max(0.0);
    }
    let mut upstream = Vec::new();
    for t in 1..t_len {
        for &ix in &order {
            upstream.clear();
            upstream.extend(
                graph
                    .upstream_of(ix)
                    .iter()
                    .map(|&(up, _)| (temp[up][t], series[up].flow[t])),
            );
            let mixed = heat_mix(temp[ix][t - 1], series[ix].flow[t], &upstream);
            let target = equilibrium(&series[ix], t);
            let noise = if spec.noise_scale > 0.0 {
                spec.noise_scale * normal(&mut rng)
            } else {
                0.0
            };
            temp[ix][t] = (mixed + spec.relaxation * (target - mixed) + noise).max(0.0);
        }
    }
    Ok(temp)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ObservedView {
    pub values: Vec<f64>,
    pub mask: Vec<bool>,
}

impl ObservedView {
    pub fn observed_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

/// Independent Bernoulli(`density`) mask per cell.
pub fn mask_observations(values: &[f64], density: f64, seed: u64) -> Result<ObservedView> {
    if !(0.0..=1.0).contains(&density) {
        return Err(Error::InvalidConfig(format!(
            "density must be in [0,1], got {density}"
        )));
    }
    let mut rng = rng::stream(seed, &[rng::TAG_TEMP_MASK]);
    Ok(ObservedView {
        values: values.to_vec(),
        mask: values.iter().map(|_| rng.gen_bool(density)).collect(),
    })
}

fn bernoulli_rows(rows: usize, cols: usize, density: impl Fn(usize) -> f64, mut rng: ChaCha8Rng) -> Vec<Vec<bool>> {
    (0..rows)
        .map(|r| {
            let d = density(r).clamp(0.0, 1.0);
            (0..cols).map(|_| rng.gen_bool(d)).collect()
        })
        .collect()
}

/// Per-segment temperature observation density.
pub fn observation_densities(spec: &BasinSpec, sensitive: &[f64]) -> Vec<f64> {
    let g = spec.observation_sensitive_gradient;
    unit_rank(sensitive)
        .into_iter()
        .map(|u| (spec.observation_density * (1.0 - g + 2.0 * g * u)).clamp(0.0, 1.0))
        .collect()
}

pub fn generate(spec: &BasinSpec) -> Result<SyntheticBasin> {
    spec.validate()?;
    let graph = generate_topology(spec)?;
    let sensitive = assign_sensitive(&graph, spec);
    let mut series = simulate_flow_and_weather(&graph, spec, &sensitive)?;
    let truth = simulate_temperature(&graph, &series, spec)?;

    let densities = observation_densities(spec, &sensitive);
    let temp_masks = bernoulli_rows(
        graph.len(),
        spec.time_steps,
        |r| densities[r],
        rng::stream(spec.seed, &[rng::TAG_TEMP_MASK]),
    );
    let flow_masks = bernoulli_rows(
        graph.len(),
        spec.time_steps,
        |_| spec.streamflow_observation_density,
        rng::stream(spec.seed, &[rng::TAG_FLOW_MASK]),
    );
    for (ix, s) in series.iter_mut().enumerate() {
        s.temp_observed = temp_masks[ix].clone();
        s.temp = truth[ix]
            .iter()
            .zip(&s.temp_observed)
            .map(|(&y, &m)| if m { y } else { f64::NAN })
            .collect();
        s.flow_observed = flow_masks[ix].clone();
    }
    Ok(SyntheticBasin {
        spec: spec.clone(),
        graph,
        series,
        sensitive,
        ground_truth_temperature: truth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(n: usize, t: usize, seed: u64) -> BasinSpec {
        BasinSpec::new(n, t, seed)
    }

    #[test]
    fn two_segments_have_one_edge() {
        let g = generate_topology(&spec(2, 10, 7)).unwrap();
        assert_eq!(g.edges().len(), 1);
    }

    #[test]
    fn topology_is_deterministic() {
        let s = spec(40, 10, 3);
        assert_eq!(generate_topology(&s).unwrap(), generate_topology(&s).unwrap());
    }

    #[test]
    fn fifty_segments_form_a_tree() {
        let mut s = spec(50, 10, 1);
        s.tree_branching = 2.0;
        let g = generate_topology(&s).unwrap();
        assert_eq!(g.edges().len(), 49);
        assert_eq!(g.topological_order().unwrap().len(), 50);
        assert_eq!(g.outlets(), &[0]);
    }

    #[test]
    fn zero_branching_still_builds_a_chain() {
        let mut s = spec(6, 10, 1);
        s.tree_branching = 0.0;
        let g = generate_topology(&s).unwrap();
        assert_eq!(g.edges().len(), 5);
    }

    #[test]
    fn rejects_invalid_spec() {
        assert!(generate_topology(&spec(1, 10, 0)).is_err());
        let mut s = spec(5, 10, 0);
        s.observation_density = 1.5;
        assert!(matches!(s.validate(), Err(Error::InvalidConfig(_))));
        let mut s = spec(5, 1, 0);
        s.time_steps = 1;
        assert!(s.validate().is_err());
    }

    #[test]
    fn leaf_flow_is_its_runoff_and_confluence_adds() {
        // 1 -> 0 <- 2 : leaves 1 and 2 drain into 0
        let g = BasinGraph::new(
            vec![0, 1, 2],
            vec![
                DirectEdge { upstream: 1, downstream: 0, distance: 1.0 },
                DirectEdge { upstream: 2, downstream: 0, distance: 1.0 },
            ],
        )
        .unwrap();
        let s = spec(3, 30, 11);
        let series = simulate_flow_and_weather(&g, &s, &[1.0, 2.0, 3.0]).unwrap();
        // Recompute runoff of the outlet by subtracting routed inflow; it must be
        // at least the floor, and the outlet flow must exceed each leaf flow.
        for t in 0..30 {
            let own = series[0].flow[t] - series[1].flow[t] - series[2].flow[t];
            assert!(own >= s.min_flow - 1e-12);
            assert!(series[0].flow[t] > series[1].flow[t]);
            assert!(series[1].flow[t] >= s.min_flow);
        }
    }

    #[test]
    fn heat_mix_hand_values() {
        assert_eq!(heat_mix(10.0, 3.0, &[(20.0, 1.0)]), 12.5);
        assert_eq!(heat_mix(7.0, 2.0, &[(7.0, 5.0), (7.0, 1.0)]), 7.0);
        assert_eq!(heat_mix(4.0, 1.0, &[]), 4.0);
    }

    #[test]
    fn temperature_rejects_nonpositive_flow() {
        let s = spec(3, 5, 2);
        let basin = generate(&s).unwrap();
        let mut series = basin.series.clone();
        series[1].flow[2] = 0.0;
        assert!(matches!(
            simulate_temperature(&basin.graph, &series, &s),
            Err(Error::NonPositiveFlow { day: 2, .. })
        ));
    }

    #[test]
    fn full_clustering_propagates_the_root_value() {
        let mut s = spec(30, 5, 9);
        s.sensitive_clustering = 1.0;
        let g = generate_topology(&s).unwrap();
        let v = assign_sensitive(&g, &s);
        assert!(v.iter().all(|&x| x == v[0]));
    }

    #[test]
    fn sensitive_assignment_is_deterministic() {
        let s = spec(30, 5, 9);
        let g = generate_topology(&s).unwrap();
        assert_eq!(assign_sensitive(&g, &s), assign_sensitive(&g, &s));
    }

    #[test]
    fn unclustered_sensitive_values_are_uncorrelated() {
        let mut s = spec(500, 5, 21);
        s.sensitive_clustering = 0.0;
        let g = generate_topology(&s).unwrap();
        let v = assign_sensitive(&g, &s);
        let pairs: Vec<(f64, f64)> = g
            .edges()
            .iter()
            .map(|e| (v[e.upstream as usize], v[e.downstream as usize]))
            .collect();
        let rho = pearson(&pairs);
        assert!(rho.abs() < 0.1, "rho = {rho}");

        s.sensitive_clustering = 0.7;
        let v = assign_sensitive(&g, &s);
        let pairs: Vec<(f64, f64)> = g
            .edges()
            .iter()
            .map(|e| (v[e.upstream as usize], v[e.downstream as usize]))
            .collect();
        assert!(pearson(&pairs) > 0.4);
    }

    fn pearson(pairs: &[(f64, f64)]) -> f64 {
        let n = pairs.len() as f64;
        let mx = pairs.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pairs.iter().map(|p| p.1).sum::<f64>() / n;
        let cov: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let vx: f64 = pairs.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let vy: f64 = pairs.iter().map(|p| (p.1 - my).powi(2)).sum();
        cov / (vx * vy).sqrt()
    }

    #[test]
    fn mask_density_extremes_and_concentration() {
        let values = vec![1.0; 10_000];
        assert!(mask_observations(&values, 1.0, 3).unwrap().mask.iter().all(|&m| m));
        assert!(mask_observations(&values, 0.0, 3).unwrap().mask.iter().all(|&m| !m));
        let frac = mask_observations(&values, 0.3, 3).unwrap().observed_count() as f64 / 1e4;
        assert!((0.27..=0.33).contains(&frac), "{frac}");
        assert!(mask_observations(&values, 1.2, 3).is_err());
    }

    #[test]
    fn observed_temperatures_are_a_subset_of_truth() {
        let basin = generate(&spec(12, 60, 5)).unwrap();
        for (ix, s) in basin.series.iter().enumerate() {
            for t in 0..60 {
                if s.temp_observed[t] {
                    assert_eq!(s.temp[t], basin.ground_truth_temperature[ix][t]);
                } else {
                    assert!(s.temp[t].is_nan());
                }
            }
        }
    }

    #[test]
    fn observation_gradient_favors_high_values() {
        let mut s = spec(10, 5, 1);
        s.observation_sensitive_gradient = 0.8;
        let d = observation_densities(&s, &[0.0, 5.0, 10.0]);
        assert!(d[0] < d[1] && d[1] < d[2]);
        assert!((d[1] - s.observation_density).abs() < 1e-12);
    }
}
