//! Recurrent encoder + weighted neighborhood aggregation + dense head, with
//! hand-derived reverse-mode gradients through the whole architecture.
//!
//! Per segment `i` and day `t`:
//!
//! ```text
//! h_i        = LSTM(x_i)                                     (z^0 = h)
//! a^l_{i,t}  = Σ_j w_ji z^{l-1}_{j,t} / Σ_j w_ji             (0 for headwaters)
//! z^l_{i,t}  = act(W^l [z^{l-1}_{i,t}; a^l_{i,t}] + b^l)
//! ŷ_{i,t}    = head(z^L_{i,t})
//! ```
//!
//! Gradients flow from a node's loss into its neighbors' recurrent states.

mod adam;
mod lstm;

use std::collections::HashMap;
use std::ops::Range;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use adam::Adam;

use crate::error::{Error, Result};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    Tanh,
    Sigmoid,
}

impl Activation {
    #[inline]
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => lstm::sigmoid(x),
        }
    }

    /// Derivative expressed through the activated output.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

fn default_hidden() -> usize {
    20
}
fn default_layers() -> usize {
    1
}
fn default_activation() -> Activation {
    Activation::Tanh
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub feature_dim: usize,
    #[serde(default = "default_hidden")]
    pub hidden_dim: usize,
    #[serde(default = "default_layers")]
    pub gnn_layers: usize,
    #[serde(default)]
    pub output_hidden_dims: Vec<usize>,
    #[serde(default = "default_activation")]
    pub activation: Activation,
}

impl ModelConfig {
    pub fn new(feature_dim: usize) -> Self {
        ModelConfig {
            feature_dim,
            hidden_dim: default_hidden(),
            gnn_layers: default_layers(),
            output_hidden_dims: Vec::new(),
            activation: default_activation(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_dim == 0 || self.hidden_dim == 0 || self.output_hidden_dims.contains(&0) {
            return Err(Error::InvalidConfig("model dimensions must be >= 1".into()));
        }
        if self.gnn_layers == 0 {
            return Err(Error::InvalidConfig("gnn_layers must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseSlot {
    pub weight: Range<usize>,
    pub bias: Range<usize>,
    pub inputs: usize,
    pub outputs: usize,
}

/// Offsets of every parameter block in the flat parameter vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Layout {
    pub features: usize,
    pub hidden: usize,
    pub lstm_w: Range<usize>,
    pub lstm_u: Range<usize>,
    pub lstm_b: Range<usize>,
    pub aggregation: Vec<DenseSlot>,
    pub head: Vec<DenseSlot>,
    pub total: usize,
}

impl Layout {
    pub fn new(cfg: &ModelConfig) -> Self {
        let (f, h) = (cfg.feature_dim, cfg.hidden_dim);
        let mut at = 0;
        let mut take = |n: usize| {
            let r = at..at + n;
            at += n;
            r
        };
        let lstm_w = take(4 * h * f);
        let lstm_u = take(4 * h * h);
        let lstm_b = take(4 * h);
        let aggregation = (0..cfg.gnn_layers)
            .map(|_| DenseSlot {
                weight: take(h * 2 * h),
                bias: take(h),
                inputs: 2 * h,
                outputs: h,
            })
            .collect();
        let mut dims = vec![h];
        dims.extend(&cfg.output_hidden_dims);
        dims.push(1);
        let head = dims
            .windows(2)
            .map(|w| DenseSlot {
                weight: take(w[0] * w[1]),
                bias: take(w[1]),
                inputs: w[0],
                outputs: w[1],
            })
            .collect();
        Layout {
            features: f,
            hidden: h,
            lstm_w,
            lstm_u,
            lstm_b,
            aggregation,
            head,
            total: at,
        }
    }

    fn lstm<'a>(&self, params: &'a [f64]) -> lstm::LstmParams<'a> {
        lstm::LstmParams {
            w: &params[self.lstm_w.clone()],
            u: &params[self.lstm_u.clone()],
            b: &params[self.lstm_b.clone()],
            features: self.features,
            hidden: self.hidden,
        }
    }
}

/// Uniform `±1/sqrt(fan_in)` initialization; the LSTM fan-in is
/// `features + hidden`.
pub fn init_params(cfg: &ModelConfig, seed: u64) -> Vec<f64> {
    let layout = Layout::new(cfg);
    let mut rng = rng::stream(seed, &[rng::TAG_INIT]);
    let mut params = vec![0.0; layout.total];
    let mut fill = |range: Range<usize>, fan_in: usize, rng: &mut rand_chacha::ChaCha8Rng| {
        let bound = 1.0 / (fan_in as f64).sqrt();
        for p in &mut params[range] {
            *p = rng.gen_range(-bound..=bound);
        }
    };
    let lstm_fan = layout.features + layout.hidden;
    fill(layout.lstm_w.clone(), lstm_fan, &mut rng);
    fill(layout.lstm_u.clone(), lstm_fan, &mut rng);
    fill(layout.lstm_b.clone(), lstm_fan, &mut rng);
    for slot in layout.aggregation.iter().chain(&layout.head) {
        fill(slot.weight.clone(), slot.inputs, &mut rng);
        fill(slot.bias.clone(), slot.inputs, &mut rng);
    }
    params
}

/// Learnable parameters plus optimizer state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub config: ModelConfig,
    pub params: Vec<f64>,
    pub optimizer: Adam,
}

impl ModelState {
    pub fn new(config: ModelConfig, seed: u64, learning_rate: f64) -> Result<Self> {
        config.validate()?;
        let params = init_params(&config, seed);
        let optimizer = Adam::new(params.len(), learning_rate);
        Ok(ModelState {
            config,
            params,
            optimizer,
        })
    }

    pub fn layout(&self) -> Layout {
        Layout::new(&self.config)
    }

    /// One Adam step; rejects non-finite gradients without touching state.
    pub fn step(&mut self, grads: &[f64]) -> Result<()> {
        self.optimizer.update(&mut self.params, grads)
    }
}

/// Standardized inputs, `nodes × days × dim`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureCube {
    pub nodes: usize,
    pub days: usize,
    pub dim: usize,
    pub data: Vec<f64>,
}

impl FeatureCube {
    pub fn new(nodes: usize, days: usize, dim: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != nodes * days * dim {
            return Err(Error::DimensionMismatch(format!(
                "feature cube {nodes}×{days}×{dim} needs {} values, got {}",
                nodes * days * dim,
                data.len()
            )));
        }
        Ok(FeatureCube { nodes, days, dim, data })
    }

    pub fn series(&self, node: usize, days: Range<usize>) -> &[f64] {
        let base = node * self.days * self.dim;
        &self.data[base + days.start * self.dim..base + days.end * self.dim]
    }
}

/// Pooling list of each node: `(source node, weight)`.
pub type PoolingLists = [Vec<(usize, f64)>];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Observation {
    pub node: usize,
    pub day: usize,
    pub value: f64,
}

/// Runs the LSTM over one sequence (`days × features`) and returns the hidden
/// states (`days × hidden`).
pub fn encode_sequence(state: &ModelState, x: &[f64]) -> Result<Vec<f64>> {
    let layout = state.layout();
    if x.len() % layout.features != 0 {
        return Err(Error::DimensionMismatch(format!(
            "sequence length {} is not a multiple of {} features",
            x.len(),
            layout.features
        )));
    }
    let days = x.len() / layout.features;
    Ok(lstm::forward(&layout.lstm(&state.params), x, days).hidden)
}

/// Weighted mean of neighbor embeddings; zero vector for an empty list.
pub fn weighted_mean(neighbors: &[(&[f64], f64)], dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; dim];
    let total: f64 = neighbors.iter().map(|n| n.1).sum();
    if neighbors.is_empty() || total == 0.0 {
        return out;
    }
    for &(z, w) in neighbors {
        let c = w / total;
        for k in 0..dim {
            out[k] += c * z[k];
        }
    }
    out
}

fn dense(weight: &[f64], bias: &[f64], input: &[f64], out: &mut [f64], act: Option<Activation>) {
    let n_in = input.len();
    for (r, o) in out.iter_mut().enumerate() {
        let row = &weight[r * n_in..(r + 1) * n_in];
        let mut acc = bias[r];
        for k in 0..n_in {
            acc += row[k] * input[k];
        }
        *o = act.map_or(acc, |a| a.apply(acc));
    }
}

/// One aggregation layer for one node and day.
pub fn aggregate(
    state: &ModelState,
    layer: usize,
    own: &[f64],
    neighbors: &[(&[f64], f64)],
) -> Vec<f64> {
    let layout = state.layout();
    let slot = &layout.aggregation[layer];
    let h = layout.hidden;
    let mut input = own.to_vec();
    input.extend(weighted_mean(neighbors, h));
    let mut out = vec![0.0; h];
    dense(
        &state.params[slot.weight.clone()],
        &state.params[slot.bias.clone()],
        &input,
        &mut out,
        Some(state.config.activation),
    );
    out
}

fn head_forward(layout: &Layout, params: &[f64], act: Activation, z: &[f64]) -> Vec<Vec<f64>> {
    let last = layout.head.len() - 1;
    let mut acts: Vec<Vec<f64>> = Vec::with_capacity(layout.head.len() + 1);
    acts.push(z.to_vec());
    for (m, slot) in layout.head.iter().enumerate() {
        let mut next = vec![0.0; slot.outputs];
        dense(
            &params[slot.weight.clone()],
            &params[slot.bias.clone()],
            &acts[m],
            &mut next,
            (m < last).then_some(act),
        );
        acts.push(next);
    }
    acts
}

/// Accumulates head parameter gradients and returns `dŷ/dz · d_out`.
fn head_backward(
    layout: &Layout,
    params: &[f64],
    act: Activation,
    acts: &[Vec<f64>],
    d_out: f64,
    grad: &mut [f64],
) -> Vec<f64> {
    let last = layout.head.len() - 1;
    let mut delta = vec![d_out];
    for m in (0..=last).rev() {
        let slot = &layout.head[m];
        if m < last {
            for (d, &y) in delta.iter_mut().zip(&acts[m + 1]) {
                *d *= act.derivative_from_output(y);
            }
        }
        let input = &acts[m];
        let w = &params[slot.weight.clone()];
        let mut d_in = vec![0.0; slot.inputs];
        for r in 0..slot.outputs {
            let d = delta[r];
            grad[slot.bias.start + r] += d;
            let row = slot.weight.start + r * slot.inputs;
            for c in 0..slot.inputs {
                grad[row + c] += d * input[c];
                d_in[c] += w[r * slot.inputs + c] * d;
            }
        }
        delta = d_in;
    }
    delta
}

/// Output head for one embedding.
pub fn predict(state: &ModelState, z: &[f64]) -> f64 {
    let layout = state.layout();
    let acts = head_forward(&layout, &state.params, state.config.activation, z);
    acts[layout.head.len()][0]
}

/// Head output and its gradient with respect to the embedding.
pub fn predict_with_gradient(state: &ModelState, z: &[f64]) -> (f64, Vec<f64>) {
    let layout = state.layout();
    let acts = head_forward(&layout, &state.params, state.config.activation, z);
    let mut scratch = vec![0.0; layout.total];
    let dz = head_backward(&layout, &state.params, state.config.activation, &acts, 1.0, &mut scratch);
    (acts[layout.head.len()][0], dz)
}

/// Mean squared error over the observation set.
pub fn loss(predictions: &[f64], observations: &[f64]) -> Result<f64> {
    if predictions.len() != observations.len() {
        return Err(Error::DimensionMismatch("predictions vs observations".into()));
    }
    if observations.is_empty() {
        return Err(Error::Empty("observation set"));
    }
    let sse: f64 = predictions
        .iter()
        .zip(observations)
        .map(|(p, y)| (p - y) * (p - y))
        .sum();
    Ok(sse / observations.len() as f64)
}

/// Forward state for a set of output cells.
struct Pass<'a> {
    layout: Layout,
    act: Activation,
    params: &'a [f64],
    cube: &'a FeatureCube,
    days: Range<usize>,
    width: usize,
    /// Local index → global node.
    nodes: Vec<usize>,
    /// Local pooling lists with normalized weights.
    pools: Vec<Vec<(usize, f64)>>,
    /// Nodes needed at each level, `levels[0]` = all local nodes.
    levels: Vec<Vec<usize>>,
    /// `needed[l][local * width + t]` for levels 1..=L.
    needed: Vec<Vec<bool>>,
    traces: Vec<lstm::LstmTrace>,
    /// `z[l][(local * width + t) * H ..]`.
    z: Vec<Vec<f64>>,
    outputs: Vec<(usize, usize)>, // (local, t)
    head_acts: Vec<Vec<Vec<f64>>>, // per output: activations of each head layer input
    predictions: Vec<f64>,
}

impl<'a> Pass<'a> {
    fn run(
        state_cfg: &ModelConfig,
        params: &'a [f64],
        cube: &'a FeatureCube,
        pools: &PoolingLists,
        days: Range<usize>,
        outputs: &[(usize, usize)],
    ) -> Result<Pass<'a>> {
        let layout = Layout::new(state_cfg);
        if params.len() != layout.total {
            return Err(Error::DimensionMismatch(format!(
                "{} parameters, layout needs {}",
                params.len(),
                layout.total
            )));
        }
        if cube.dim != layout.features {
            return Err(Error::DimensionMismatch(format!(
                "features have {} columns, model expects {}",
                cube.dim, layout.features
            )));
        }
        if days.is_empty() || days.end > cube.days {
            return Err(Error::DimensionMismatch(format!(
                "day range {days:?} outside 0..{}",
                cube.days
            )));
        }
        if pools.len() != cube.nodes {
            return Err(Error::DimensionMismatch(format!(
                "{} pooling lists for {} nodes",
                pools.len(),
                cube.nodes
            )));
        }
        let width = days.len();
        let n_layers = layout.aggregation.len();
        let mut local: HashMap<usize, usize> = HashMap::new();
        let mut nodes: Vec<usize> = Vec::new();
        let mut intern = |g: usize, nodes: &mut Vec<usize>| -> usize {
            *local.entry(g).or_insert_with(|| {
                nodes.push(g);
                nodes.len() - 1
            })
        };

        // output cells at level L
        let mut out_local = Vec::with_capacity(outputs.len());
        for &(node, day) in outputs {
            if node >= cube.nodes || !days.contains(&day) {
                return Err(Error::DimensionMismatch(format!(
                    "output cell ({node}, {day}) outside the batch"
                )));
            }
            out_local.push((intern(node, &mut nodes), day - days.start));
        }
        // levels from top down: level l needs its members and their neighbors
        let mut members: Vec<Vec<usize>> = vec![Vec::new(); n_layers + 1];
        {
            let mut seen = vec![false; nodes.len()];
            for &(u, _) in &out_local {
                if !seen[u] {
                    seen[u] = true;
                    members[n_layers].push(u);
                }
            }
        }
        let mut pool_local: HashMap<usize, Vec<(usize, f64)>> = HashMap::new();
        for l in (1..=n_layers).rev() {
            let mut next: Vec<usize> = members[l].clone();
            let mut in_next: std::collections::HashSet<usize> = next.iter().copied().collect();
            for idx in 0..members[l].len() {
                let u = members[l][idx];
                if !pool_local.contains_key(&u) {
                    let list = &pools[nodes[u]];
                    let total: f64 = list.iter().map(|p| p.1).sum();
                    if list.iter().any(|p| !(p.1 > 0.0 && p.1.is_finite())) {
                        return Err(Error::InvalidConfig(format!(
                            "pooling weights of node {} must be positive",
                            nodes[u]
                        )));
                    }
                    let mut lp = Vec::with_capacity(list.len());
                    for &(src, w) in list {
                        if src >= cube.nodes {
                            return Err(Error::DimensionMismatch(format!(
                                "neighbor {src} has no feature sequence"
                            )));
                        }
                        lp.push((intern(src, &mut nodes), w / total));
                    }
                    pool_local.insert(u, lp);
                }
                for &(v, _) in &pool_local[&u] {
                    if in_next.insert(v) {
                        next.push(v);
                    }
                }
            }
            members[l - 1] = next;
        }
        members[0] = (0..nodes.len()).collect();
        let n_local = nodes.len();
        let pools_vec: Vec<Vec<(usize, f64)>> = (0..n_local)
            .map(|u| pool_local.remove(&u).unwrap_or_default())
            .collect();

        let mut needed = vec![Vec::new(); n_layers + 1];
        for lvl in needed.iter_mut().skip(1) {
            *lvl = vec![false; n_local * width];
        }
        if n_layers >= 1 {
            for &(u, t) in &out_local {
                needed[n_layers][u * width + t] = true;
            }
        }
        for l in (2..=n_layers).rev() {
            let (lower, upper) = needed.split_at_mut(l);
            let lower = &mut lower[l - 1];
            for &u in &members[l] {
                for t in 0..width {
                    if upper[0][u * width + t] {
                        lower[u * width + t] = true;
                        for &(v, _) in &pools_vec[u] {
                            lower[v * width + t] = true;
                        }
                    }
                }
            }
        }

        let lp = layout.lstm(params);
        let h = layout.hidden;
        let mut z: Vec<Vec<f64>> = vec![Vec::new(); n_layers + 1];
        let mut traces = Vec::with_capacity(n_local);
        z[0] = vec![0.0; n_local * width * h];
        for (u, &g) in nodes.iter().enumerate() {
            let trace = lstm::forward(&lp, cube.series(g, days.clone()), width);
            z[0][u * width * h..(u + 1) * width * h].copy_from_slice(&trace.hidden);
            traces.push(trace);
        }
        let act = state_cfg.activation;
        let mut input = vec![0.0; 2 * h];
        for l in 1..=n_layers {
            let slot = &layout.aggregation[l - 1];
            let (w, b) = (&params[slot.weight.clone()], &params[slot.bias.clone()]);
            let mut zl = vec![0.0; n_local * width * h];
            let prev = &z[l - 1];
            for &u in &members[l] {
                for t in 0..width {
                    if !needed[l][u * width + t] {
                        continue;
                    }
                    input[..h].copy_from_slice(&prev[(u * width + t) * h..(u * width + t + 1) * h]);
                    input[h..].iter_mut().for_each(|v| *v = 0.0);
                    for &(v, c) in &pools_vec[u] {
                        let zv = &prev[(v * width + t) * h..(v * width + t + 1) * h];
                        for k in 0..h {
                            input[h + k] += c * zv[k];
                        }
                    }
                    dense(w, b, &input, &mut zl[(u * width + t) * h..(u * width + t + 1) * h], Some(act));
                }
            }
            z[l] = zl;
        }

        let mut head_acts = Vec::with_capacity(out_local.len());
        let mut predictions = Vec::with_capacity(out_local.len());
        for &(u, t) in &out_local {
            let acts = head_forward(&layout, params, act, &z[n_layers][(u * width + t) * h..(u * width + t + 1) * h]);
            predictions.push(acts[layout.head.len()][0]);
            head_acts.push(acts);
        }

        Ok(Pass {
            layout,
            act,
            params,
            cube,
            days,
            width,
            nodes,
            pools: pools_vec,
            levels: members,
            needed,
            traces,
            z,
            outputs: out_local,
            head_acts,
            predictions,
        })
    }

    /// Gradient of `Σ d_out[k] · prediction[k]` with respect to all parameters.
    fn backward(&self, d_out: &[f64]) -> Vec<f64> {
        let layout = &self.layout;
        let params = self.params;
        let h = layout.hidden;
        let width = self.width;
        let n_layers = layout.aggregation.len();
        let n_local = self.nodes.len();
        let mut grad = vec![0.0; layout.total];
        let mut dz: Vec<Vec<f64>> = (0..=n_layers).map(|_| vec![0.0; n_local * width * h]).collect();

        for (k, &(u, t)) in self.outputs.iter().enumerate() {
            if d_out[k] == 0.0 {
                continue;
            }
            let delta = head_backward(layout, params, self.act, &self.head_acts[k], d_out[k], &mut grad);
            let dst = &mut dz[n_layers][(u * width + t) * h..(u * width + t + 1) * h];
            for kk in 0..h {
                dst[kk] += delta[kk];
            }
        }

        let mut input = vec![0.0; 2 * h];
        let mut du = vec![0.0; h];
        let mut d_in = vec![0.0; 2 * h];
        for l in (1..=n_layers).rev() {
            let slot = &layout.aggregation[l - 1];
            let w = &params[slot.weight.clone()];
            let (lower, upper) = dz.split_at_mut(l);
            let d_prev = &mut lower[l - 1];
            let d_cur = &upper[0];
            let prev = &self.z[l - 1];
            let cur = &self.z[l];
            for &u in &self.levels[l] {
                for t in 0..width {
                    let cell = u * width + t;
                    if !self.needed[l][cell] {
                        continue;
                    }
                    let mut any = false;
                    for k in 0..h {
                        let y = cur[cell * h + k];
                        du[k] = d_cur[cell * h + k] * self.act.derivative_from_output(y);
                        any |= du[k] != 0.0;
                    }
                    if !any {
                        continue;
                    }
                    input[..h].copy_from_slice(&prev[cell * h..(cell + 1) * h]);
                    input[h..].iter_mut().for_each(|v| *v = 0.0);
                    for &(v, c) in &self.pools[u] {
                        let zv = &prev[(v * width + t) * h..(v * width + t + 1) * h];
                        for k in 0..h {
                            input[h + k] += c * zv[k];
                        }
                    }
                    d_in.iter_mut().for_each(|v| *v = 0.0);
                    for r in 0..h {
                        let d = du[r];
                        grad[slot.bias.start + r] += d;
                        let base = slot.weight.start + r * 2 * h;
                        for c in 0..2 * h {
                            grad[base + c] += d * input[c];
                            d_in[c] += w[r * 2 * h + c] * d;
                        }
                    }
                    for k in 0..h {
                        d_prev[cell * h + k] += d_in[k];
                    }
                    for &(v, c) in &self.pools[u] {
                        let dst = &mut d_prev[(v * width + t) * h..(v * width + t + 1) * h];
                        for k in 0..h {
                            dst[k] += c * d_in[h + k];
                        }
                    }
                }
            }
        }

        let lp = layout.lstm(params);
        let (gw, rest) = grad.split_at_mut(layout.lstm_u.start);
        let (gu, rest) = rest.split_at_mut(layout.lstm_b.start - layout.lstm_u.start);
        let gb = &mut rest[..layout.lstm_b.len()];
        let gw = &mut gw[layout.lstm_w.clone()];
        for (u, &g) in self.nodes.iter().enumerate() {
            let dh = &dz[0][u * width * h..(u + 1) * width * h];
            if dh.iter().all(|&v| v == 0.0) {
                continue;
            }
            lstm::backward(
                &lp,
                self.cube.series(g, self.days.clone()),
                &self.traces[u],
                dh,
                gw,
                gu,
                gb,
            );
        }
        grad
    }
}

/// Mean squared error over `observations` (all inside `days`) and
/// its exact gradient with respect to every parameter.
pub fn loss_and_gradient(
    state: &ModelState,
    cube: &FeatureCube,
    pools: &PoolingLists,
    days: Range<usize>,
    observations: &[Observation],
) -> Result<(f64, Vec<f64>)> {
    if observations.is_empty() {
        return Err(Error::Empty("observation set"));
    }
    let cells: Vec<(usize, usize)> = observations.iter().map(|o| (o.node, o.day)).collect();
    let pass = Pass::run(&state.config, &state.params, cube, pools, days, &cells)?;
    let targets: Vec<f64> = observations.iter().map(|o| o.value).collect();
    let value = loss(&pass.predictions, &targets)?;
    if !value.is_finite() {
        return Err(Error::NonFinite(format!("loss is {value}")));
    }
    let n = observations.len() as f64;
    let d_out: Vec<f64> = pass
        .predictions
        .iter()
        .zip(&targets)
        .map(|(p, y)| 2.0 * (p - y) / n)
        .collect();
    let grad = pass.backward(&d_out);
    if let Some(k) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("gradient of parameter {k} is {}", grad[k])));
    }
    Ok((value, grad))
}

/// Predictions for the given `(node, day)` cells.
pub fn predict_cells(
    state: &ModelState,
    cube: &FeatureCube,
    pools: &PoolingLists,
    days: Range<usize>,
    cells: &[(usize, usize)],
) -> Result<Vec<f64>> {
    if cells.is_empty() {
        return Ok(Vec::new());
    }
    Ok(Pass::run(&state.config, &state.params, cube, pools, days, cells)?.predictions)
}

/// Predictions for every node over `days`, `[node][day - days.start]`.
pub fn predict_all(
    state: &ModelState,
    cube: &FeatureCube,
    pools: &PoolingLists,
    days: Range<usize>,
) -> Result<Vec<Vec<f64>>> {
    let width = days.len();
    let cells: Vec<(usize, usize)> = (0..cube.nodes)
        .flat_map(|n| days.clone().map(move |d| (n, d)))
        .collect();
    let flat = predict_cells(state, cube, pools, days, &cells)?;
    Ok(flat.chunks(width).map(<[f64]>::to_vec).collect())
}
