//! Single-layer LSTM over one segment's feature sequence, with exact
//! backpropagation through time. Gate order in the stacked weights is
//! input, forget, cell, output.

#[inline]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Activations kept from the forward pass, all `days × hidden`.
#[derive(Clone, Debug, Default)]
pub(crate) struct LstmTrace {
    pub gates: Vec<f64>, // days × 4H: i, f, g, o (activated)
    pub cell: Vec<f64>,
    pub cell_tanh: Vec<f64>,
    pub hidden: Vec<f64>,
}

pub(crate) struct LstmParams<'a> {
    pub w: &'a [f64], // 4H × F
    pub u: &'a [f64], // 4H × H
    pub b: &'a [f64], // 4H
    pub features: usize,
    pub hidden: usize,
}

pub(crate) fn forward(p: &LstmParams<'_>, x: &[f64], days: usize) -> LstmTrace {
    let (f_dim, h_dim) = (p.features, p.hidden);
    let g_dim = 4 * h_dim;
    let mut trace = LstmTrace {
        gates: vec![0.0; days * g_dim],
        cell: vec![0.0; days * h_dim],
        cell_tanh: vec![0.0; days * h_dim],
        hidden: vec![0.0; days * h_dim],
    };
    let mut pre = vec![0.0; g_dim];
    let mut h_prev = vec![0.0; h_dim];
    let mut c_prev = vec![0.0; h_dim];
    for t in 0..days {
        let xt = &x[t * f_dim..(t + 1) * f_dim];
        for r in 0..g_dim {
            let wr = &p.w[r * f_dim..(r + 1) * f_dim];
            let ur = &p.u[r * h_dim..(r + 1) * h_dim];
            let mut acc = p.b[r];
            for k in 0..f_dim {
                acc += wr[k] * xt[k];
            }
            for k in 0..h_dim {
                acc += ur[k] * h_prev[k];
            }
            pre[r] = acc;
        }
        let gates = &mut trace.gates[t * g_dim..(t + 1) * g_dim];
        for k in 0..h_dim {
            gates[k] = sigmoid(pre[k]);
            gates[h_dim + k] = sigmoid(pre[h_dim + k]);
            gates[2 * h_dim + k] = pre[2 * h_dim + k].tanh();
            gates[3 * h_dim + k] = sigmoid(pre[3 * h_dim + k]);
        }
        for k in 0..h_dim {
            let c = gates[h_dim + k] * c_prev[k] + gates[k] * gates[2 * h_dim + k];
            let tc = c.tanh();
            let h = gates[3 * h_dim + k] * tc;
            trace.cell[t * h_dim + k] = c;
            trace.cell_tanh[t * h_dim + k] = tc;
            trace.hidden[t * h_dim + k] = h;
            c_prev[k] = c;
            h_prev[k] = h;
        }
    }
    trace
}

/// Accumulates parameter gradients given `d_hidden` (`days × hidden`), the
/// loss gradient with respect to every hidden state.
pub(crate) fn backward(
    p: &LstmParams<'_>,
    x: &[f64],
    trace: &LstmTrace,
    d_hidden: &[f64],
    grad_w: &mut [f64],
    grad_u: &mut [f64],
    grad_b: &mut [f64],
) {
    let (f_dim, h_dim) = (p.features, p.hidden);
    let g_dim = 4 * h_dim;
    let days = d_hidden.len() / h_dim;
    let mut dh_next = vec![0.0; h_dim];
    let mut dc_next = vec![0.0; h_dim];
    let mut dpre = vec![0.0; g_dim];
    for t in (0..days).rev() {
        let gates = &trace.gates[t * g_dim..(t + 1) * g_dim];
        for k in 0..h_dim {
            let dh = d_hidden[t * h_dim + k] + dh_next[k];
            let (i, f, g, o) = (gates[k], gates[h_dim + k], gates[2 * h_dim + k], gates[3 * h_dim + k]);
            let tc = trace.cell_tanh[t * h_dim + k];
            let c_prev = if t == 0 { 0.0 } else { trace.cell[(t - 1) * h_dim + k] };
            let d_o = dh * tc;
            let dc = dc_next[k] + dh * o * (1.0 - tc * tc);
            dpre[k] = dc * g * i * (1.0 - i);
            dpre[h_dim + k] = dc * c_prev * f * (1.0 - f);
            dpre[2 * h_dim + k] = dc * i * (1.0 - g * g);
            dpre[3 * h_dim + k] = d_o * o * (1.0 - o);
            dc_next[k] = dc * f;
        }
        let xt = &x[t * f_dim..(t + 1) * f_dim];
        dh_next.iter_mut().for_each(|v| *v = 0.0);
        for r in 0..g_dim {
            let d = dpre[r];
            grad_b[r] += d;
            if d == 0.0 {
                continue;
            }
            let gw = &mut grad_w[r * f_dim..(r + 1) * f_dim];
            for k in 0..f_dim {
                gw[k] += d * xt[k];
            }
            if t > 0 {
                let h_prev = &trace.hidden[(t - 1) * h_dim..t * h_dim];
                let gu = &mut grad_u[r * h_dim..(r + 1) * h_dim];
                for k in 0..h_dim {
                    gu[k] += d * h_prev[k];
                }
            }
            let ur = &p.u[r * h_dim..(r + 1) * h_dim];
            for k in 0..h_dim {
                dh_next[k] += ur[k] * d;
            }
        }
    }
}
