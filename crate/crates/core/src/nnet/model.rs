use serde::{Deserialize, Serialize};

use super::lstm::{backward_chain, run_chain, sigmoid, ChainTrace, LstmParams};
use crate::error::{Error, Result};
use crate::features::FeatureSequence;
use crate::rng::SplitMix64;

/// Which network consumes the two feature streams.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    /// One chain over `[color_t; depth_t]`.
    Concat,
    /// Color and depth bypass chains feeding a main fusion chain.
    Fusion,
}

impl Variant {
    pub fn tag(self) -> u8 {
        match self {
            Variant::Concat => 0,
            Variant::Fusion => 1,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(Variant::Concat),
            1 => Some(Variant::Fusion),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConcatModelParams {
    /// Input dimension `2D`.
    pub chain: LstmParams,
    pub head_w: Vec<f64>,
    pub head_b: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionModelParams {
    pub color_chain: LstmParams,
    pub depth_chain: LstmParams,
    /// Input dimension `2H`: the color then depth hidden states of the step.
    pub fusion_chain: LstmParams,
    pub head_w: Vec<f64>,
    pub head_b: f64,
}

/// Parameters of either variant. Gradients use the same type.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Concat(ConcatModelParams),
    Fusion(FusionModelParams),
}

/// Activations of a forward pass. `chains` holds the single chain for the
/// concat variant and `[color, depth, fusion]` for the fusion variant.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace {
    pub variant: Variant,
    pub chains: Vec<ChainTrace>,
    pub logit: f64,
    pub p: f64,
}

fn head_init(hidden: usize, rng: &mut SplitMix64) -> Vec<f64> {
    let k = 1.0 / (hidden as f64).sqrt();
    (0..hidden).map(|_| rng.uniform(-k, k)).collect()
}

fn widen(row: &[f32]) -> Vec<f64> {
    row.iter().map(|&x| f64::from(x)).collect()
}

fn head(head_w: &[f64], head_b: f64, h_last: &[f64]) -> (f64, f64) {
    let logit = head_w.iter().zip(h_last).map(|(w, h)| w * h).sum::<f64>() + head_b;
    (logit, sigmoid(logit))
}

fn check_sequence(seq: &FeatureSequence, dim: usize) -> Result<()> {
    if seq.dim() != dim {
        return Err(Error::Shape(format!("model expects feature dimension {dim}, sequence has {}", seq.dim())));
    }
    if seq.steps() == 0 {
        return Err(Error::Shape("empty glimpse sequence".into()));
    }
    Ok(())
}

pub fn forward_concat(params: &ConcatModelParams, seq: &FeatureSequence) -> Result<ForwardTrace> {
    check_sequence(seq, params.chain.input_dim / 2)?;
    let inputs = (0..seq.steps())
        .map(|t| seq.color_row(t).iter().chain(seq.depth_row(t)).map(|&x| f64::from(x)).collect::<Vec<f64>>());
    let chain = run_chain(&params.chain, inputs)?;
    let (logit, p) = head(&params.head_w, params.head_b, chain.last_h().unwrap());
    Ok(ForwardTrace { variant: Variant::Concat, chains: vec![chain], logit, p })
}

pub fn forward_fusion(params: &FusionModelParams, seq: &FeatureSequence) -> Result<ForwardTrace> {
    check_sequence(seq, params.color_chain.input_dim)?;
    let color = run_chain(&params.color_chain, (0..seq.steps()).map(|t| widen(seq.color_row(t))))?;
    let depth = run_chain(&params.depth_chain, (0..seq.steps()).map(|t| widen(seq.depth_row(t))))?;
    // The main chain sees only the bypass hidden states, never raw features.
    let fused_inputs = color.steps.iter().zip(&depth.steps).map(|(c, d)| {
        let mut x = c.next.h.clone();
        x.extend_from_slice(&d.next.h);
        x
    });
    let fusion = run_chain(&params.fusion_chain, fused_inputs)?;
    let (logit, p) = head(&params.head_w, params.head_b, fusion.last_h().unwrap());
    Ok(ForwardTrace { variant: Variant::Fusion, chains: vec![color, depth, fusion], logit, p })
}

/// Negative log-likelihood of label `y` under probability `p`, with `p`
/// clamped to `[1e-12, 1 - 1e-12]`.
pub fn loss_nll(p: f64, y: bool) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    if y {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// `p > 0.5` is a detection; an exact tie is negative.
pub fn classify(p: f64) -> bool {
    p > 0.5
}

impl Model {
    pub fn init(variant: Variant, dim: usize, hidden: usize, rng: &mut SplitMix64) -> Self {
        match variant {
            Variant::Concat => Model::Concat(ConcatModelParams {
                chain: LstmParams::init(2 * dim, hidden, rng),
                head_w: head_init(hidden, rng),
                head_b: 0.0,
            }),
            Variant::Fusion => Model::Fusion(FusionModelParams {
                color_chain: LstmParams::init(dim, hidden, rng),
                depth_chain: LstmParams::init(dim, hidden, rng),
                fusion_chain: LstmParams::init(2 * hidden, hidden, rng),
                head_w: head_init(hidden, rng),
                head_b: 0.0,
            }),
        }
    }

    pub fn zeros(variant: Variant, dim: usize, hidden: usize) -> Self {
        match variant {
            Variant::Concat => Model::Concat(ConcatModelParams {
                chain: LstmParams::zeros(2 * dim, hidden),
                head_w: vec![0.0; hidden],
                head_b: 0.0,
            }),
            Variant::Fusion => Model::Fusion(FusionModelParams {
                color_chain: LstmParams::zeros(dim, hidden),
                depth_chain: LstmParams::zeros(dim, hidden),
                fusion_chain: LstmParams::zeros(2 * hidden, hidden),
                head_w: vec![0.0; hidden],
                head_b: 0.0,
            }),
        }
    }

    pub fn variant(&self) -> Variant {
        match self {
            Model::Concat(_) => Variant::Concat,
            Model::Fusion(_) => Variant::Fusion,
        }
    }

    pub fn hidden(&self) -> usize {
        match self {
            Model::Concat(m) => m.chain.hidden,
            Model::Fusion(m) => m.fusion_chain.hidden,
        }
    }

    /// Per-modality feature dimension `D`.
    pub fn feature_dim(&self) -> usize {
        match self {
            Model::Concat(m) => m.chain.input_dim / 2,
            Model::Fusion(m) => m.color_chain.input_dim,
        }
    }

    pub fn zeros_like(&self) -> Self {
        Model::zeros(self.variant(), self.feature_dim(), self.hidden())
    }

    /// Parameter tensors in declaration order: each chain's `w` then `b`,
    /// chains in declaration order, then `head_w` and `head_b`.
    pub fn tensors(&self) -> Vec<&[f64]> {
        match self {
            Model::Concat(m) => vec![&m.chain.w, &m.chain.b, &m.head_w, std::slice::from_ref(&m.head_b)],
            Model::Fusion(m) => vec![
                &m.color_chain.w,
                &m.color_chain.b,
                &m.depth_chain.w,
                &m.depth_chain.b,
                &m.fusion_chain.w,
                &m.fusion_chain.b,
                &m.head_w,
                std::slice::from_ref(&m.head_b),
            ],
        }
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        match self {
            Model::Concat(m) => {
                vec![&mut m.chain.w, &mut m.chain.b, &mut m.head_w, std::slice::from_mut(&mut m.head_b)]
            }
            Model::Fusion(m) => vec![
                &mut m.color_chain.w,
                &mut m.color_chain.b,
                &mut m.depth_chain.w,
                &mut m.depth_chain.b,
                &mut m.fusion_chain.w,
                &mut m.fusion_chain.b,
                &mut m.head_w,
                std::slice::from_mut(&mut m.head_b),
            ],
        }
    }

    pub fn tensor_names(&self) -> &'static [&'static str] {
        match self {
            Model::Concat(_) => &["chain.w", "chain.b", "head_w", "head_b"],
            Model::Fusion(_) => &[
                "color_chain.w",
                "color_chain.b",
                "depth_chain.w",
                "depth_chain.b",
                "fusion_chain.w",
                "fusion_chain.b",
                "head_w",
                "head_b",
            ],
        }
    }

    pub fn num_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|x| x.is_finite()))
    }

    /// `self += alpha * other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &Model, alpha: f64) {
        assert_eq!(self.variant(), other.variant());
        for (dst, src) in self.tensors_mut().into_iter().zip(other.tensors()) {
            assert_eq!(dst.len(), src.len());
            dst.iter_mut().zip(src).for_each(|(d, s)| *d += alpha * s);
        }
    }

    pub fn forward(&self, seq: &FeatureSequence) -> Result<ForwardTrace> {
        match self {
            Model::Concat(m) => forward_concat(m, seq),
            Model::Fusion(m) => forward_fusion(m, seq),
        }
    }

    pub fn predict(&self, seq: &FeatureSequence) -> Result<f64> {
        Ok(self.forward(seq)?.p)
    }

    /// Exact gradient of [`loss_nll`] with respect to every parameter,
    /// accumulated over all steps.
    pub fn backward(&self, trace: &ForwardTrace, y: bool) -> Result<Model> {
        if trace.variant != self.variant() {
            return Err(Error::Shape("trace comes from the other model variant".into()));
        }
        let dlogit = trace.p - if y { 1.0 } else { 0.0 };
        match self {
            Model::Concat(m) => {
                let chain = &trace.chains[0];
                let (head_w, dh) = head_grads(&m.head_w, chain, dlogit)?;
                let (g, _) = backward_chain(&m.chain, chain, &dh)?;
                Ok(Model::Concat(ConcatModelParams { chain: g, head_w, head_b: dlogit }))
            }
            Model::Fusion(m) => {
                let [color, depth, fusion] = &trace.chains[..] else {
                    return Err(Error::Shape("fusion trace needs three chains".into()));
                };
                let (head_w, dh) = head_grads(&m.head_w, fusion, dlogit)?;
                let (g_fusion, dx) = backward_chain(&m.fusion_chain, fusion, &dh)?;
                let hidden = m.fusion_chain.hidden;
                let dh_color: Vec<Vec<f64>> = dx.iter().map(|d| d[..hidden].to_vec()).collect();
                let dh_depth: Vec<Vec<f64>> = dx.iter().map(|d| d[hidden..].to_vec()).collect();
                let (g_color, _) = backward_chain(&m.color_chain, color, &dh_color)?;
                let (g_depth, _) = backward_chain(&m.depth_chain, depth, &dh_depth)?;
                Ok(Model::Fusion(FusionModelParams {
                    color_chain: g_color,
                    depth_chain: g_depth,
                    fusion_chain: g_fusion,
                    head_w,
                    head_b: dlogit,
                }))
            }
        }
    }

    /// Loss and gradient for one labeled sequence.
    pub fn loss_and_grad(&self, seq: &FeatureSequence, y: bool) -> Result<(f64, f64, Model)> {
        let trace = self.forward(seq)?;
        let grad = self.backward(&trace, y)?;
        Ok((loss_nll(trace.p, y), trace.p, grad))
    }
}

/// Classifier gradient plus the per-step gradient it injects into the chain
/// (non-zero only at the last step).
fn head_grads(head_w: &[f64], chain: &ChainTrace, dlogit: f64) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let last = chain.last_h().ok_or_else(|| Error::Shape("trace has no steps".into()))?;
    let g_w = last.iter().map(|h| dlogit * h).collect();
    let hidden = head_w.len();
    let mut dh = vec![vec![0.0; hidden]; chain.steps.len()];
    *dh.last_mut().unwrap() = head_w.iter().map(|w| dlogit * w).collect();
    Ok((g_w, dh))
}
