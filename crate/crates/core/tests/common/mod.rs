//! Independent reference implementations for the integration tests.
//!
//! Everything here is written from the model equations with plain nested
//! vectors and explicit loops, sharing no code with the library beyond the
//! parameter containers it reads.

#![allow(dead_code)]

use mglstm::features::{FeatureSequence, ProposalId};
use mglstm::nnet::{loss_nll, ConcatModelParams, FusionModelParams, LstmParams, Model};
use mglstm::rng::SplitMix64;

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Weight matrix as rows of `[x; h]` coefficients.
fn rows(p: &LstmParams) -> Vec<Vec<f64>> {
    let cols = p.input_dim + p.hidden;
    (0..4 * p.hidden).map(|r| p.w[r * cols..(r + 1) * cols].to_vec()).collect()
}

/// One step: returns `(h_t, c_t)`.
pub fn oracle_cell(p: &LstmParams, x: &[f64], h_prev: &[f64], c_prev: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let m = rows(p);
    let hd = p.hidden;
    let mut input = x.to_vec();
    input.extend_from_slice(h_prev);
    let mut pre = vec![0.0; 4 * hd];
    for r in 0..4 * hd {
        let mut s = p.b[r];
        for j in 0..input.len() {
            s += m[r][j] * input[j];
        }
        pre[r] = s;
    }
    let mut h = vec![0.0; hd];
    let mut c = vec![0.0; hd];
    for k in 0..hd {
        let i = logistic(pre[k]);
        let f = logistic(pre[hd + k]);
        let o = logistic(pre[2 * hd + k]);
        let u = pre[3 * hd + k].tanh();
        c[k] = i * u + f * c_prev[k];
        h[k] = o * c[k].tanh();
    }
    (h, c)
}

/// Hidden states `h_1..h_T` of a chain started from zeros.
pub fn oracle_chain(p: &LstmParams, inputs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut h = vec![0.0; p.hidden];
    let mut c = vec![0.0; p.hidden];
    let mut out = Vec::new();
    for x in inputs {
        let (hn, cn) = oracle_cell(p, x, &h, &c);
        h = hn;
        c = cn;
        out.push(h.clone());
    }
    out
}

fn readout(w: &[f64], b: f64, h: &[f64]) -> f64 {
    let mut s = b;
    for k in 0..w.len() {
        s += w[k] * h[k];
    }
    logistic(s)
}

fn rows_of(seq: &FeatureSequence, color: bool) -> Vec<Vec<f64>> {
    (0..seq.steps())
        .map(|t| {
            let r = if color { seq.color_row(t) } else { seq.depth_row(t) };
            r.iter().map(|&v| v as f64).collect()
        })
        .collect()
}

pub fn oracle_concat(m: &ConcatModelParams, seq: &FeatureSequence) -> f64 {
    let c = rows_of(seq, true);
    let d = rows_of(seq, false);
    let inputs: Vec<Vec<f64>> = c.iter().zip(&d).map(|(a, b)| a.iter().chain(b.iter()).copied().collect()).collect();
    let hs = oracle_chain(&m.chain, &inputs);
    readout(&m.head_w, m.head_b, hs.last().unwrap())
}

pub fn oracle_fusion(m: &FusionModelParams, seq: &FeatureSequence) -> f64 {
    let hc = oracle_chain(&m.color_chain, &rows_of(seq, true));
    let hd = oracle_chain(&m.depth_chain, &rows_of(seq, false));
    let fused: Vec<Vec<f64>> = hc.iter().zip(&hd).map(|(a, b)| a.iter().chain(b.iter()).copied().collect()).collect();
    let hf = oracle_chain(&m.fusion_chain, &fused);
    readout(&m.head_w, m.head_b, hf.last().unwrap())
}

pub fn oracle_predict(model: &Model, seq: &FeatureSequence) -> f64 {
    match model {
        Model::Concat(m) => oracle_concat(m, seq),
        Model::Fusion(m) => oracle_fusion(m, seq),
    }
}

pub fn random_sequence(rng: &mut SplitMix64, steps: usize, dim: usize, label: Option<bool>) -> FeatureSequence {
    let color = (0..steps * dim).map(|_| rng.normal() as f32).collect();
    let depth = (0..steps * dim).map(|_| rng.normal() as f32).collect();
    FeatureSequence::new(ProposalId { image: 0, proposal: 0 }, label, steps, dim, color, depth).unwrap()
}

/// Model with every parameter drawn from `N(0, scale^2)`, biases included.
pub fn random_model(
    rng: &mut SplitMix64,
    variant: mglstm::nnet::Variant,
    dim: usize,
    hidden: usize,
    scale: f64,
) -> Model {
    let mut m = Model::zeros(variant, dim, hidden);
    for t in m.tensors_mut() {
        for x in t.iter_mut() {
            *x = scale * rng.normal();
        }
    }
    m
}

/// Five-point central differences of the loss with respect to every
/// parameter: `(-f(x+2e) + 8f(x+e) - 8f(x-e) + f(x-2e)) / 12e`.
pub fn numeric_gradient(model: &Model, seq: &FeatureSequence, y: bool, eps: f64) -> Model {
    let mut grad = model.zeros_like();
    let mut probe = model.clone();
    let sizes: Vec<usize> = model.tensors().iter().map(|t| t.len()).collect();
    let mut out: Vec<Vec<f64>> = Vec::new();
    for (ti, &n) in sizes.iter().enumerate() {
        let mut g = vec![0.0; n];
        for (k, gk) in g.iter_mut().enumerate() {
            let orig = probe.tensors()[ti][k];
            let mut at = |x: f64| {
                probe.tensors_mut()[ti][k] = x;
                loss_nll(oracle_predict(&probe, seq), y)
            };
            let (p2, p1, m1, m2) = (at(orig + 2.0 * eps), at(orig + eps), at(orig - eps), at(orig - 2.0 * eps));
            probe.tensors_mut()[ti][k] = orig;
            *gk = (-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * eps);
        }
        out.push(g);
    }
    for (dst, src) in grad.tensors_mut().into_iter().zip(out) {
        dst.copy_from_slice(&src);
    }
    grad
}

/// Relative error with the denominator floored at `floor`, so that
/// gradients that are exactly or nearly zero are compared absolutely.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs().max(numeric.abs())).max(floor)
}
