//! Fixed-length descriptors for clipped glimpse patches.
//!
//! [`GridExtractor`] is a deterministic stand-in for a learned CNN: it turns a
//! patch into a single channel (luminance for color, meters for depth with
//! holes at zero), resamples it bilinearly to a `G x G` grid and standardizes
//! the result to zero mean and unit population variance. Patches are
//! standardized individually rather than L2-normalized. Anything implementing
//! [`PatchExtractor`] can replace it.

mod io;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::glimpse::{Clip, GlimpseSet, Patch};
use crate::imaging::{ColorImage, DepthMap};
use crate::par::Exec;

pub use io::{decode_features, encode_features, load_features, save_features, FEATURE_MAGIC, FEATURE_VERSION};

const VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(pub Vec<f64>);

impl FeatureVector {
    pub fn zeros(dim: usize) -> Self {
        Self(vec![0.0; dim])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ProposalId {
    /// Index of the frame in the dataset manifest.
    pub image: u32,
    /// Index of the proposal within that frame.
    pub proposal: u32,
}

/// Color and depth glimpse features of one proposal, `steps x dim` each,
/// rows ordered largest window first.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub id: ProposalId,
    pub label: Option<bool>,
    steps: usize,
    dim: usize,
    color: Vec<f32>,
    depth: Vec<f32>,
}

impl FeatureSequence {
    pub fn new(
        id: ProposalId,
        label: Option<bool>,
        steps: usize,
        dim: usize,
        color: Vec<f32>,
        depth: Vec<f32>,
    ) -> Result<Self> {
        if color.len() != steps * dim || depth.len() != steps * dim {
            return Err(Error::Shape(format!(
                "feature matrices of {} and {} values do not match {steps}x{dim}",
                color.len(),
                depth.len()
            )));
        }
        Ok(Self { id, label, steps, dim, color, depth })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn color(&self) -> &[f32] {
        &self.color
    }

    pub fn depth(&self) -> &[f32] {
        &self.depth
    }

    pub fn color_row(&self, t: usize) -> &[f32] {
        &self.color[t * self.dim..(t + 1) * self.dim]
    }

    pub fn depth_row(&self, t: usize) -> &[f32] {
        &self.depth[t * self.dim..(t + 1) * self.dim]
    }

    /// The last `k` glimpses, i.e. the `k` smallest windows.
    pub fn tail(&self, k: usize) -> Result<Self> {
        if k == 0 || k > self.steps {
            return Err(Error::Shape(format!("cannot keep {k} of {} glimpses", self.steps)));
        }
        let from = (self.steps - k) * self.dim;
        Ok(Self {
            id: self.id,
            label: self.label,
            steps: k,
            dim: self.dim,
            color: self.color[from..].to_vec(),
            depth: self.depth[from..].to_vec(),
        })
    }
}

/// Pluggable per-patch feature extraction.
pub trait PatchExtractor: Sync {
    fn dim(&self) -> usize;
    fn color(&self, patch: &Patch<[u8; 3]>) -> FeatureVector;
    fn depth(&self, patch: &Patch<u16>) -> FeatureVector;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractorConfig {
    pub grid: usize,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        Self { grid: 16 }
    }
}

impl ExtractorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid < 2 {
            return Err(Error::Config(format!("extractor.grid must be >= 2, got {}", self.grid)));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.grid * self.grid
    }
}

/// Resample-and-standardize extractor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GridExtractor {
    pub grid: usize,
}

impl From<ExtractorConfig> for GridExtractor {
    fn from(c: ExtractorConfig) -> Self {
        Self { grid: c.grid }
    }
}

pub fn luminance([r, g, b]: [u8; 3]) -> f64 {
    0.299 * f64::from(r) + 0.587 * f64::from(g) + 0.114 * f64::from(b)
}

pub fn depth_meters(mm: u16) -> f64 {
    f64::from(mm) / 1000.0
}

/// Bilinear resampling with pixel-center alignment; identity when sizes match.
pub fn resize_bilinear(src: &[f64], width: usize, height: usize, out_w: usize, out_h: usize) -> Vec<f64> {
    assert_eq!(src.len(), width * height);
    fn taps(i: usize, n_in: usize, n_out: usize) -> (usize, usize, f64) {
        let pos = ((i as f64 + 0.5) * n_in as f64 / n_out as f64 - 0.5).clamp(0.0, (n_in - 1) as f64);
        let lo = pos.floor() as usize;
        let hi = (lo + 1).min(n_in - 1);
        (lo, hi, pos - lo as f64)
    }
    let cols: Vec<_> = (0..out_w).map(|x| taps(x, width, out_w)).collect();
    let mut out = Vec::with_capacity(out_w * out_h);
    for y in 0..out_h {
        let (y0, y1, fy) = taps(y, height, out_h);
        for &(x0, x1, fx) in &cols {
            let top = src[y0 * width + x0] * (1.0 - fx) + src[y0 * width + x1] * fx;
            let bottom = src[y1 * width + x0] * (1.0 - fx) + src[y1 * width + x1] * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    out
}

/// Shift to zero mean and scale to unit population variance in place;
/// near-constant input becomes all zeros.
pub fn standardize(values: &mut [f64]) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    if var < VARIANCE_FLOOR {
        values.iter_mut().for_each(|x| *x = 0.0);
        return;
    }
    let inv = 1.0 / var.sqrt();
    values.iter_mut().for_each(|x| *x = (*x - mean) * inv);
}

impl GridExtractor {
    fn channel_features(&self, channel: &[f64], width: usize, height: usize) -> FeatureVector {
        if width == 0 || height == 0 {
            return FeatureVector::zeros(self.dim());
        }
        let mut grid = resize_bilinear(channel, width, height, self.grid, self.grid);
        standardize(&mut grid);
        FeatureVector(grid)
    }
}

impl PatchExtractor for GridExtractor {
    fn dim(&self) -> usize {
        self.grid * self.grid
    }

    fn color(&self, patch: &Patch<[u8; 3]>) -> FeatureVector {
        let channel: Vec<f64> = patch.data.iter().map(|&p| luminance(p)).collect();
        self.channel_features(&channel, patch.width, patch.height)
    }

    fn depth(&self, patch: &Patch<u16>) -> FeatureVector {
        let channel: Vec<f64> = patch.data.iter().map(|&d| depth_meters(d)).collect();
        self.channel_features(&channel, patch.width, patch.height)
    }
}

/// Clip every window of `set` from both frames and extract its features.
pub fn extract_sequence<E: PatchExtractor + ?Sized>(
    set: &GlimpseSet,
    id: ProposalId,
    color: &ColorImage,
    depth: &DepthMap,
    extractor: &E,
) -> Result<FeatureSequence> {
    let dim = extractor.dim();
    let mut c = Vec::with_capacity(set.len() * dim);
    let mut d = Vec::with_capacity(set.len() * dim);
    for &rect in &set.windows {
        let fc = extractor.color(&color.clip_patch(rect)?);
        let fd = extractor.depth(&depth.clip_patch(rect)?);
        c.extend(fc.0.iter().map(|&x| x as f32));
        d.extend(fd.0.iter().map(|&x| x as f32));
    }
    FeatureSequence::new(id, None, set.len(), dim, c, d)
}

/// One frame's worth of extraction work.
pub struct FrameJob<'a> {
    pub image: u32,
    pub color: &'a ColorImage,
    pub depth: &'a DepthMap,
    pub sets: &'a [GlimpseSet],
}

/// Extract all glimpse sets of all frames, in frame then proposal order.
pub fn extract_batch<E: PatchExtractor>(
    jobs: &[FrameJob<'_>],
    extractor: &E,
    exec: Exec,
) -> Result<Vec<FeatureSequence>> {
    let flat: Vec<(usize, usize)> =
        jobs.iter().enumerate().flat_map(|(j, job)| (0..job.sets.len()).map(move |k| (j, k))).collect();
    exec.map(&flat, |&(j, k)| {
        let job = &jobs[j];
        let id = ProposalId { image: job.image, proposal: k as u32 };
        extract_sequence(&job.sets[k], id, job.color, job.depth, extractor)
    })
    .into_iter()
    .collect()
}
