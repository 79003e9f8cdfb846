//! A single LSTM chain: the cell transition and its exact reverse pass.
//!
//! Gates are stacked `[i; f; o; u]` in one affine map `M` of shape
//! `4H x (input + H)` acting on `[x_t; h_{t-1}]`:
//!
//! ```text
//! i, f, o = sigmoid(M_{i,f,o} [x_t; h_{t-1}])
//! u       = tanh(M_u [x_t; h_{t-1}])
//! c_t     = i * u + f * c_{t-1}
//! h_t     = o * tanh(c_t)
//! ```

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Weights `w` (row-major, `4H x (input_dim + H)`) and bias `b` (`4H`).
#[derive(Debug, Clone, PartialEq)]
pub struct LstmParams {
    pub input_dim: usize,
    pub hidden: usize,
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl LstmParams {
    pub fn zeros(input_dim: usize, hidden: usize) -> Self {
        Self { input_dim, hidden, w: vec![0.0; 4 * hidden * (input_dim + hidden)], b: vec![0.0; 4 * hidden] }
    }

    /// Uniform weights in `[-1/sqrt(fan_in), 1/sqrt(fan_in)]`, forget bias 1.
    pub fn init(input_dim: usize, hidden: usize, rng: &mut SplitMix64) -> Self {
        let mut p = Self::zeros(input_dim, hidden);
        let k = 1.0 / ((input_dim + hidden) as f64).sqrt();
        p.w.iter_mut().for_each(|x| *x = rng.uniform(-k, k));
        p.b[hidden..2 * hidden].iter_mut().for_each(|x| *x = 1.0);
        p
    }

    pub fn cols(&self) -> usize {
        self.input_dim + self.hidden
    }

    pub fn check(&self) -> Result<()> {
        let h = self.hidden;
        if self.w.len() != 4 * h * self.cols() || self.b.len() != 4 * h {
            return Err(Error::Shape(format!(
                "LSTM with input {} and hidden {h} has {} weights and {} biases",
                self.input_dim,
                self.w.len(),
                self.b.len()
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl CellState {
    pub fn zeros(hidden: usize) -> Self {
        Self { h: vec![0.0; hidden], c: vec![0.0; hidden] }
    }
}

/// Gate activations of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct Gates {
    pub i: Vec<f64>,
    pub f: Vec<f64>,
    pub o: Vec<f64>,
    pub u: Vec<f64>,
}

/// One cell transition.
pub fn lstm_cell(params: &LstmParams, x: &[f64], prev: &CellState) -> Result<(CellState, Gates)> {
    let h = params.hidden;
    if x.len() != params.input_dim || prev.h.len() != h || prev.c.len() != h {
        return Err(Error::Shape(format!(
            "cell expects input {} and state {h}, got input {} and state {}/{}",
            params.input_dim,
            x.len(),
            prev.h.len(),
            prev.c.len()
        )));
    }
    params.check()?;
    let cols = params.cols();
    let mut z = params.b.clone();
    for (r, zr) in z.iter_mut().enumerate() {
        let row = &params.w[r * cols..(r + 1) * cols];
        let (wx, wh) = row.split_at(params.input_dim);
        *zr += dot(wx, x) + dot(wh, &prev.h);
    }
    let gates = Gates {
        i: z[..h].iter().map(|&a| sigmoid(a)).collect(),
        f: z[h..2 * h].iter().map(|&a| sigmoid(a)).collect(),
        o: z[2 * h..3 * h].iter().map(|&a| sigmoid(a)).collect(),
        u: z[3 * h..].iter().map(|&a| a.tanh()).collect(),
    };
    let c: Vec<f64> = (0..h).map(|k| gates.i[k] * gates.u[k] + gates.f[k] * prev.c[k]).collect();
    let hn = (0..h).map(|k| gates.o[k] * c[k].tanh()).collect();
    Ok((CellState { h: hn, c }, gates))
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Everything the reverse pass needs from one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub x: Vec<f64>,
    pub prev: CellState,
    pub gates: Gates,
    pub next: CellState,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChainTrace {
    pub steps: Vec<StepRecord>,
}

impl ChainTrace {
    pub fn last_h(&self) -> Option<&[f64]> {
        self.steps.last().map(|s| s.next.h.as_slice())
    }
}

/// Run the chain from a zero state over `inputs`.
pub fn run_chain<I>(params: &LstmParams, inputs: I) -> Result<ChainTrace>
where
    I: IntoIterator<Item = Vec<f64>>,
{
    let mut state = CellState::zeros(params.hidden);
    let mut steps = Vec::new();
    for x in inputs {
        let (next, gates) = lstm_cell(params, &x, &state)?;
        steps.push(StepRecord { x, prev: state, gates, next: next.clone() });
        state = next;
    }
    Ok(ChainTrace { steps })
}

/// Backpropagate through a whole chain.
///
/// `dh_ext[t]` is the loss gradient arriving at `h_t` from outside the chain
/// (the classifier, or a downstream chain that consumes `h_t`). Returns the
/// parameter gradient and the gradient with respect to every input `x_t`.
pub fn backward_chain(
    params: &LstmParams,
    trace: &ChainTrace,
    dh_ext: &[Vec<f64>],
) -> Result<(LstmParams, Vec<Vec<f64>>)> {
    let h = params.hidden;
    let n_in = params.input_dim;
    let cols = params.cols();
    if dh_ext.len() != trace.steps.len() {
        return Err(Error::Shape(format!("{} external gradients for {} steps", dh_ext.len(), trace.steps.len())));
    }
    let mut grad = LstmParams::zeros(n_in, h);
    let mut dx_all = vec![Vec::new(); trace.steps.len()];
    let mut dh_next = vec![0.0; h];
    let mut dc_next = vec![0.0; h];
    let mut dz = vec![0.0; 4 * h];

    for (t, step) in trace.steps.iter().enumerate().rev() {
        let g = &step.gates;
        if dh_ext[t].len() != h || step.x.len() != n_in {
            return Err(Error::Shape(format!("step {t} does not match the chain")));
        }
        for k in 0..h {
            let dh = dh_ext[t][k] + dh_next[k];
            let tc = step.next.c[k].tanh();
            let dc = dh * g.o[k] * (1.0 - tc * tc) + dc_next[k];
            let (i, f, o, u) = (g.i[k], g.f[k], g.o[k], g.u[k]);
            dz[k] = dc * u * i * (1.0 - i);
            dz[h + k] = dc * step.prev.c[k] * f * (1.0 - f);
            dz[2 * h + k] = dh * tc * o * (1.0 - o);
            dz[3 * h + k] = dc * i * (1.0 - u * u);
            dc_next[k] = dc * f;
        }
        let mut dx = vec![0.0; n_in];
        dh_next.iter_mut().for_each(|x| *x = 0.0);
        for (r, &d) in dz.iter().enumerate() {
            grad.b[r] += d;
            let row = r * cols;
            let w_row = &params.w[row..row + cols];
            let g_row = &mut grad.w[row..row + cols];
            for j in 0..n_in {
                g_row[j] += d * step.x[j];
                dx[j] += d * w_row[j];
            }
            for j in 0..h {
                g_row[n_in + j] += d * step.prev.h[j];
                dh_next[j] += d * w_row[n_in + j];
            }
        }
        dx_all[t] = dx;
    }
    Ok((grad, dx_all))
}
