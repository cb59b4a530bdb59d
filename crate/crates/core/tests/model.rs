mod common;

use rand::Rng;
use streamfair::model::{self, FeatureCube, ModelConfig, ModelState, Observation};

#[test]
fn full_model_gradients_match_central_differences() {
    for seed in 0..12 {
        let inst = common::small_instance(seed);
        let err = common::max_gradient_error(&inst);
        assert!(err < 1e-4, "seed {seed}: relative error {err}");
    }
}

#[test]
fn five_node_eight_step_gradient_check() {
    let mut r = common::rng(5);
    let mut cfg = ModelConfig::new(3);
    cfg.hidden_dim = 5;
    cfg.gnn_layers = 2;
    cfg.output_hidden_dims = vec![4];
    let state = ModelState::new(cfg, 77, 0.001).unwrap();
    let data = (0..5 * 8 * 3).map(|_| r.gen_range(-1.0..1.0)).collect();
    let cube = FeatureCube::new(5, 8, 3, data).unwrap();
    // a small tree: 0,1 → 2; 2,3 → 4
    let pools = vec![
        vec![],
        vec![],
        vec![(0, 0.4), (1, 0.7)],
        vec![],
        vec![(2, 0.6), (3, 0.3), (0, 0.2), (1, 0.1)],
    ];
    let observations = (0..5)
        .flat_map(|n| (0..8).map(move |d| (n, d)))
        .filter(|&(n, d)| (n + d) % 3 != 0)
        .map(|(node, day)| Observation { node, day, value: ((node * 8 + day) as f64).sin() })
        .collect();
    let inst = common::SmallInstance { state, cube, pools, days: 8, observations };
    let err = common::max_gradient_error(&inst);
    assert!(err < 1e-4, "relative error {err}");
}

/// Straight-line forward pass written from the architecture definition,
/// sharing nothing with the library beyond the parameter layout.
fn reference_forward(state: &ModelState, cube: &FeatureCube, pools: &[Vec<(usize, f64)>]) -> Vec<Vec<f64>> {
    let lay = state.layout();
    let p = &state.params;
    let (f, h) = (lay.features, lay.hidden);
    let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
    let mut z: Vec<Vec<Vec<f64>>> = Vec::new(); // node → day → vec
    for n in 0..cube.nodes {
        let mut hs = vec![vec![0.0; h]];
        let mut cs = vec![vec![0.0; h]];
        for t in 0..cube.days {
            let x = &cube.data[(n * cube.days + t) * f..(n * cube.days + t + 1) * f];
            let pre = |row: usize| {
                let mut acc = p[lay.lstm_b.start + row];
                for k in 0..f {
                    acc += p[lay.lstm_w.start + row * f + k] * x[k];
                }
                for k in 0..h {
                    acc += p[lay.lstm_u.start + row * h + k] * hs[t][k];
                }
                acc
            };
            let mut hn = vec![0.0; h];
            let mut cn = vec![0.0; h];
            for k in 0..h {
                let i = sig(pre(k));
                let fg = sig(pre(h + k));
                let g = pre(2 * h + k).tanh();
                let o = sig(pre(3 * h + k));
                cn[k] = fg * cs[t][k] + i * g;
                hn[k] = o * cn[k].tanh();
            }
            hs.push(hn);
            cs.push(cn);
        }
        z.push(hs[1..].to_vec());
    }
    for slot in &lay.aggregation {
        let mut next = z.clone();
        for n in 0..cube.nodes {
            let total: f64 = pools[n].iter().map(|x| x.1).sum();
            for t in 0..cube.days {
                let mut a = vec![0.0; h];
                for &(j, w) in &pools[n] {
                    for k in 0..h {
                        a[k] += w / total * z[j][t][k];
                    }
                }
                let cat: Vec<f64> = z[n][t].iter().chain(&a).copied().collect();
                for r in 0..h {
                    let mut acc = p[slot.bias.start + r];
                    for c in 0..2 * h {
                        acc += p[slot.weight.start + r * 2 * h + c] * cat[c];
                    }
                    next[n][t][r] = acc.tanh();
                }
            }
        }
        z = next;
    }
    let mut out = vec![vec![0.0; cube.days]; cube.nodes];
    for n in 0..cube.nodes {
        for t in 0..cube.days {
            let mut v = z[n][t].clone();
            for (m, slot) in lay.head.iter().enumerate() {
                let mut nv = vec![0.0; slot.outputs];
                for r in 0..slot.outputs {
                    let mut acc = p[slot.bias.start + r];
                    for c in 0..slot.inputs {
                        acc += p[slot.weight.start + r * slot.inputs + c] * v[c];
                    }
                    nv[r] = if m + 1 < lay.head.len() { acc.tanh() } else { acc };
                }
                v = nv;
            }
            out[n][t] = v[0];
        }
    }
    out
}

#[test]
fn forward_matches_straight_line_reimplementation() {
    for seed in 0..10 {
        let mut r = common::rng(100 + seed);
        let mut cfg = ModelConfig::new(2);
        cfg.hidden_dim = 3;
        cfg.gnn_layers = 1 + (seed as usize % 2);
        cfg.output_hidden_dims = vec![2];
        let state = ModelState::new(cfg, seed, 0.001).unwrap();
        let data = (0..4 * 6 * 2).map(|_| r.gen_range(-1.0..1.0)).collect();
        let cube = FeatureCube::new(4, 6, 2, data).unwrap();
        let pools = vec![vec![], vec![(0, 0.5)], vec![(0, 0.2), (1, 0.9)], vec![(2, 1.0), (0, 0.3)]];
        let expected = reference_forward(&state, &cube, &pools);
        let got = model::predict_all(&state, &cube, &pools, 0..6).unwrap();
        for n in 0..4 {
            for t in 0..6 {
                assert!((expected[n][t] - got[n][t]).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn forward_does_not_mutate_state_and_is_deterministic() {
    let inst = common::small_instance(3);
    let before = inst.state.clone();
    let a = model::loss_and_gradient(&inst.state, &inst.cube, &inst.pools, 0..inst.days, &inst.observations).unwrap();
    let b = model::loss_and_gradient(&inst.state, &inst.cube, &inst.pools, 0..inst.days, &inst.observations).unwrap();
    assert_eq!(before, inst.state);
    assert_eq!(a.0.to_bits(), b.0.to_bits());
    assert_eq!(a.1, b.1);
}

#[test]
fn masking_observations_only_changes_the_averaging_set() {
    let inst = common::small_instance(9);
    let half: Vec<Observation> = inst.observations.iter().step_by(2).copied().collect();
    let cells: Vec<(usize, usize)> = half.iter().map(|o| (o.node, o.day)).collect();
    let preds = model::predict_cells(&inst.state, &inst.cube, &inst.pools, 0..inst.days, &cells).unwrap();
    let manual = preds.iter().zip(&half).map(|(p, o)| (p - o.value).powi(2)).sum::<f64>() / half.len() as f64;
    let (l, _) = model::loss_and_gradient(&inst.state, &inst.cube, &inst.pools, 0..inst.days, &half).unwrap();
    assert!((l - manual).abs() < 1e-14);
}

#[test]
fn adam_training_reduces_loss_on_a_fixed_batch() {
    let inst = common::small_instance(4);
    let mut state = inst.state.clone();
    state.optimizer.learning_rate = 0.01;
    let eval = |s: &ModelState| {
        model::loss_and_gradient(s, &inst.cube, &inst.pools, 0..inst.days, &inst.observations).unwrap()
    };
    let start = eval(&state).0;
    for _ in 0..200 {
        let (_, g) = eval(&state);
        state.step(&g).unwrap();
    }
    assert!(eval(&state).0 < 0.5 * start);
}
