//! Stage glue shared by the command-line tool and the end-to-end tests.
//!
//! Each stage reads and writes the on-disk formats, so the five stages can be
//! run as separate processes. Per-image work goes through [`Exec`].

use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{
    compute_curve, log_average_miss_rate, AdaptiveRadius, Detection, EvalCurve, GroundTruth, MatchParams,
};
use crate::features::{extract_sequence, ExtractorConfig, FeatureSequence, GridExtractor, ProposalId};
use crate::glimpse::{build_glimpse_set, GlimpseConfig};
use crate::imaging::{load_color_ppm, load_depth_pgm, CameraIntrinsics, ColorImage, DepthMap};
use crate::nnet::Checkpoint;
use crate::par::Exec;
use crate::proposals::{generate_proposals, Proposal, ProposalParams};
use crate::synth::Manifest;
use crate::training::{predict_batch, train, Dataset, TrainConfig, TrainOutcome};

/// Write `bytes` to a temporary file next to `path`, then rename it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let wrap = |e: std::io::Error| Error::from(e).in_file(path);
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(wrap)?;
    tmp.write_all(bytes).map_err(wrap)?;
    tmp.as_file().sync_all().map_err(wrap)?;
    tmp.persist(path).map_err(|e| wrap(e.error))?;
    Ok(())
}

pub fn to_jsonl<T: Serialize>(items: &[T]) -> Result<String> {
    let mut out = String::new();
    for item in items {
        out.push_str(&serde_json::to_string(item)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    write_atomic(path, to_jsonl(items)?.as_bytes())
}

/// Parse one JSON value per non-blank line. Errors carry the byte offset of
/// the offending line.
pub fn parse_jsonl<T: DeserializeOwned>(text: &str) -> Result<Vec<T>> {
    let mut out = Vec::new();
    let mut offset = 0u64;
    for line in text.split_inclusive('\n') {
        let trimmed = line.trim();
        if !trimmed.is_empty() {
            let item = serde_json::from_str(trimmed).map_err(|e| Error::format(offset, e.to_string()))?;
            out.push(item);
        }
        offset += line.len() as u64;
    }
    Ok(out)
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
    parse_jsonl(&text).map_err(|e| e.in_file(path))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Pixels.
    pub radius: f64,
    /// Scale the radius with proposal depth (half the projected head width).
    pub adaptive: bool,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self { radius: 25.0, adaptive: false }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(Error::Config(format!("eval.radius must be positive, got {}", self.radius)));
        }
        Ok(())
    }

    pub fn match_params(&self, intrinsics: &CameraIntrinsics, head_width: f64) -> MatchParams {
        MatchParams {
            radius: self.radius,
            adaptive: self.adaptive.then_some(AdaptiveRadius { head_width, fx: intrinsics.fx }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Relative paths resolve against the config file's directory. When
    /// absent, the dataset's own intrinsics file is used.
    pub intrinsics_path: Option<PathBuf>,
    pub proposals: ProposalParams,
    pub glimpse: GlimpseConfig,
    pub extractor: ExtractorConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        self.proposals.validate()?;
        self.glimpse.validate()?;
        self.extractor.validate()?;
        self.train.validate()?;
        self.eval.validate()?;
        if let Some(k) = self.train.sequence_length {
            if k > self.glimpse.steps() {
                return Err(Error::Config(format!(
                    "train.sequence_length {k} exceeds the {} glimpses per proposal",
                    self.glimpse.steps()
                )));
            }
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
        let mut cfg = Self::from_json(&text).map_err(|e| e.in_file(path))?;
        if let (Some(k), Some(dir)) = (&cfg.intrinsics_path, path.parent()) {
            if k.is_relative() {
                cfg.intrinsics_path = Some(dir.join(k));
            }
        }
        Ok(cfg)
    }

    pub fn match_params(&self, intrinsics: &CameraIntrinsics) -> MatchParams {
        self.eval.match_params(intrinsics, self.proposals.head_width)
    }
}

/// One line of a proposals file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProposalRecord {
    pub image_id: String,
    pub u: u32,
    pub v: u32,
    pub depth_mm: u16,
}

impl ProposalRecord {
    pub fn proposal(&self) -> Proposal {
        Proposal { u: self.u, v: self.v, depth: self.depth_mm }
    }
}

/// A generated dataset on disk.
#[derive(Debug, Clone)]
pub struct DatasetDir {
    pub root: PathBuf,
    pub manifest: Manifest,
}

impl DatasetDir {
    pub fn open(root: &Path) -> Result<Self> {
        Ok(Self { root: root.to_path_buf(), manifest: Manifest::load(root)? })
    }

    pub fn len(&self) -> usize {
        self.manifest.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.images.is_empty()
    }

    pub fn intrinsics_path(&self) -> PathBuf {
        self.root.join(&self.manifest.intrinsics)
    }

    pub fn truth_path(&self) -> PathBuf {
        self.root.join(&self.manifest.truth)
    }

    pub fn load_frame(&self, i: usize) -> Result<(DepthMap, ColorImage)> {
        let img = &self.manifest.images[i];
        let depth = load_depth_pgm(&self.root.join(&img.depth))?;
        let color = load_color_ppm(&self.root.join(&img.color))?;
        if (depth.width(), depth.height()) != (color.width(), color.height()) {
            return Err(Error::Shape(format!(
                "image {}: depth {}x{} vs color {}x{}",
                img.id,
                depth.width(),
                depth.height(),
                color.width(),
                color.height()
            )));
        }
        Ok((depth, color))
    }

    /// Ground truth aligned with the manifest order, or `None` when the
    /// dataset has no truth file.
    pub fn truths(&self) -> Result<Option<Vec<GroundTruth>>> {
        let path = self.truth_path();
        if !path.exists() {
            return Ok(None);
        }
        let all: Vec<GroundTruth> = read_jsonl(&path)?;
        let mut by_id: HashMap<String, GroundTruth> = all.into_iter().map(|t| (t.image_id.clone(), t)).collect();
        let aligned = self
            .manifest
            .images
            .iter()
            .map(|img| by_id.remove(&img.id).unwrap_or(GroundTruth { image_id: img.id.clone(), head_tops: Vec::new() }))
            .collect();
        Ok(Some(aligned))
    }
}

fn within_radius(p: &ProposalRecord, truth: &[[u32; 2]], params: &MatchParams) -> bool {
    let det = Detection { image_id: p.image_id.clone(), u: p.u, v: p.v, score: 0.0, depth_mm: Some(p.depth_mm) };
    let r = params.radius_for(&det);
    truth.iter().any(|t| {
        let du = f64::from(p.u) - f64::from(t[0]);
        let dv = f64::from(p.v) - f64::from(t[1]);
        du * du + dv * dv <= r * r
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProposeSummary {
    pub images: usize,
    pub proposals: usize,
    pub mean_per_image: f64,
    /// Fraction of head tops with a proposal inside the match radius.
    pub recall: Option<f64>,
}

/// Head-top proposals for every image, in manifest then row-major order.
pub fn propose_dataset(
    data: &DatasetDir,
    intrinsics: &CameraIntrinsics,
    params: &ProposalParams,
    matching: &MatchParams,
    exec: Exec,
) -> Result<(Vec<ProposalRecord>, ProposeSummary)> {
    let truths = data.truths()?;
    let per_image = exec.map_range(data.len(), |i| -> Result<Vec<ProposalRecord>> {
        let (depth, _) = data.load_frame(i)?;
        let id = &data.manifest.images[i].id;
        Ok(generate_proposals(&depth, intrinsics, params)
            .into_iter()
            .map(|p| ProposalRecord { image_id: id.clone(), u: p.u, v: p.v, depth_mm: p.depth })
            .collect())
    });
    let per_image = per_image.into_iter().collect::<Result<Vec<_>>>()?;

    let recall = truths.as_ref().and_then(|truths| {
        let mut total = 0usize;
        let mut found = 0usize;
        for (props, t) in per_image.iter().zip(truths) {
            total += t.head_tops.len();
            found += t.head_tops.iter().filter(|&&h| props.iter().any(|p| within_radius(p, &[h], matching))).count();
        }
        (total > 0).then(|| found as f64 / total as f64)
    });
    let records: Vec<ProposalRecord> = per_image.into_iter().flatten().collect();
    let images = data.len();
    let summary = ProposeSummary {
        images,
        proposals: records.len(),
        mean_per_image: records.len() as f64 / images.max(1) as f64,
        recall,
    };
    Ok((records, summary))
}

/// Group proposal records under `ids`, keeping file order within an image.
fn group_by_image<'a>(ids: &[&str], records: &'a [ProposalRecord]) -> Result<Vec<Vec<&'a ProposalRecord>>> {
    let index: HashMap<&str, usize> = ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    let mut groups = vec![Vec::new(); ids.len()];
    for r in records {
        let i = index
            .get(r.image_id.as_str())
            .ok_or_else(|| Error::Contract(format!("proposal for unknown image {:?}", r.image_id)))?;
        groups[*i].push(r);
    }
    Ok(groups)
}

/// Glimpse features for every proposal. Image `i` of the manifest becomes
/// `ProposalId::image = i`; proposals are numbered per image in file order.
/// With `labels`, a proposal is positive iff it lies within the match radius
/// of a ground-truth head top.
pub fn extract_dataset(
    data: &DatasetDir,
    proposals: &[ProposalRecord],
    intrinsics: &CameraIntrinsics,
    glimpse: &GlimpseConfig,
    extractor: &ExtractorConfig,
    labels: Option<(&[GroundTruth], &MatchParams)>,
    exec: Exec,
) -> Result<Vec<FeatureSequence>> {
    let ids: Vec<&str> = data.manifest.images.iter().map(|m| m.id.as_str()).collect();
    let groups = group_by_image(&ids, proposals)?;
    let grid = GridExtractor::from(*extractor);
    let per_image = exec.map_range(data.len(), |i| -> Result<Vec<FeatureSequence>> {
        let group = &groups[i];
        if group.is_empty() {
            return Ok(Vec::new());
        }
        let (depth, color) = data.load_frame(i)?;
        let mut out = Vec::with_capacity(group.len());
        for (k, rec) in group.iter().enumerate() {
            let set = build_glimpse_set(&rec.proposal(), intrinsics, depth.bounds(), glimpse)?;
            let id = ProposalId { image: i as u32, proposal: k as u32 };
            let mut seq = extract_sequence(&set, id, &color, &depth, &grid)?;
            if let Some((truths, params)) = labels {
                seq.label = Some(within_radius(rec, &truths[i].head_tops, params));
            }
            out.push(seq);
        }
        Ok(out)
    });
    let mut all = Vec::new();
    for r in per_image {
        all.extend(r?);
    }
    Ok(all)
}

/// Train on labeled features whose length must match the glimpse config.
pub fn train_features(records: Vec<FeatureSequence>, config: &PipelineConfig, exec: Exec) -> Result<TrainOutcome> {
    let expect = config.glimpse.steps();
    if let Some(bad) = records.iter().find(|r| r.steps() != expect) {
        return Err(Error::Shape(format!(
            "features have {} glimpses per proposal, config expects {expect}",
            bad.steps()
        )));
    }
    if let Some(bad) = records.iter().find(|r| r.dim() != config.extractor.dim()) {
        return Err(Error::Shape(format!(
            "features have dimension {}, config expects {}",
            bad.dim(),
            config.extractor.dim()
        )));
    }
    train(&Dataset::from_labeled(records)?, &config.train, exec)
}

#[derive(Debug, Clone)]
pub struct EvalReport {
    pub detections: Vec<Detection>,
    pub curve: EvalCurve,
    pub lamr: f64,
}

/// Score every feature record and evaluate against ground truth.
///
/// Feature image indices refer to the order of `truths`, and proposal
/// indices to the per-image order of `proposals`. Sequences longer than the
/// checkpoint's are cut to their last glimpses.
pub fn evaluate_features(
    checkpoint: &Checkpoint,
    features: &[FeatureSequence],
    proposals: &[ProposalRecord],
    truths: &[GroundTruth],
    matching: &MatchParams,
    exec: Exec,
) -> Result<EvalReport> {
    let steps = checkpoint.steps;
    let dim = checkpoint.model.feature_dim();
    let mut inputs = Vec::with_capacity(features.len());
    for f in features {
        if f.steps() < steps || f.dim() != dim {
            return Err(Error::Shape(format!("features are {}x{}, model expects {steps}x{dim}", f.steps(), f.dim())));
        }
        inputs.push(if f.steps() > steps { f.tail(steps)? } else { f.clone() });
    }
    let scores = predict_batch(&checkpoint.model, &inputs, exec)?;

    let ids: Vec<&str> = truths.iter().map(|t| t.image_id.as_str()).collect();
    let groups = group_by_image(&ids, proposals)?;
    let mut detections = Vec::with_capacity(features.len());
    for (f, score) in features.iter().zip(scores) {
        let rec = groups.get(f.id.image as usize).and_then(|g| g.get(f.id.proposal as usize)).ok_or_else(|| {
            Error::Contract(format!("feature record {}/{} has no matching proposal", f.id.image, f.id.proposal))
        })?;
        detections.push(Detection {
            image_id: rec.image_id.clone(),
            u: rec.u,
            v: rec.v,
            score,
            depth_mm: Some(rec.depth_mm),
        });
    }
    let curve = compute_curve(&detections, truths, matching)?;
    let lamr = log_average_miss_rate(&curve)?;
    Ok(EvalReport { detections, curve, lamr })
}
