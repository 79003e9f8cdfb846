//! Head-top proposal generation from a single depth map.
//!
//! Every valid pixel is tested as a possible head top with three conditions,
//! all sized by the pinhole projection `w` of a real head width at the
//! pixel's own depth `z`:
//!
//! * the pixel has a depth return;
//! * a band `w` wide and `w/2` tall directly above it is free: each valid
//!   pixel there lies more than `top_margin` behind `z` (holes count as free,
//!   rows outside the image are skipped, but at least one band row must lie
//!   inside the image);
//! * a `w`-by-`w` window hanging below the pixel is filled: at least
//!   `fill_ratio` of its in-image pixels are within `depth_tolerance` of `z`.
//!
//! These conditions reconstruct a per-pixel head-top retriever from first
//! principles; they are not a port of any published detector.
//!
//! Survivors are thinned greedily, nearest first, so no two kept proposals lie
//! within `suppression_radius_factor * w` pixels of each other.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{project_size, CameraIntrinsics, DepthMap};
use crate::par::Exec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Proposal {
    pub u: u32,
    pub v: u32,
    pub depth: u16,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProposalParams {
    /// Meters.
    pub head_width: f64,
    /// Millimeters.
    pub depth_tolerance: u32,
    pub fill_ratio: f64,
    /// Millimeters.
    pub top_margin: u32,
    pub suppression_radius_factor: f64,
}

impl Default for ProposalParams {
    fn default() -> Self {
        Self {
            head_width: 0.25,
            depth_tolerance: 300,
            fill_ratio: 0.6,
            top_margin: 400,
            suppression_radius_factor: 0.5,
        }
    }
}

impl ProposalParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.fill_ratio > 0.0 && self.fill_ratio <= 1.0) {
            return Err(Error::Config(format!("proposals.fill_ratio must be in (0, 1], got {}", self.fill_ratio)));
        }
        if !(self.head_width > 0.0) {
            return Err(Error::Config(format!("proposals.head_width must be positive, got {}", self.head_width)));
        }
        if !(self.suppression_radius_factor >= 0.0) {
            return Err(Error::Config("proposals.suppression_radius_factor must be non-negative".into()));
        }
        Ok(())
    }
}

/// Per-candidate measurements that feed suppression ordering.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    proposal: Proposal,
    width: u32,
    fill: f64,
}

/// Head width in pixels at `depth`, or `None` for a hole.
fn head_px(depth: u16, intrinsics: &CameraIntrinsics, params: &ProposalParams) -> Option<u32> {
    project_size(params.head_width, u32::from(depth), intrinsics.fx).ok()
}

fn top_is_free(map: &DepthMap, u: usize, v: usize, z: u16, w: u32, margin: u32) -> bool {
    let half = (w / 2).max(1) as i64;
    let row_lo = v as i64 - half;
    if v == 0 {
        // The band would lie entirely above the image; there is no evidence
        // of free space and every top-row pixel of a flat surface would pass.
        return false;
    }
    let x0 = u as i64 - i64::from(w / 2);
    let col_lo = x0.max(0) as usize;
    let col_hi = (x0 + i64::from(w)).min(map.width() as i64) as usize;
    let limit = u32::from(z) + margin;
    // Walk upward from the row just above: interior pixels fail immediately.
    for row in (row_lo.max(0) as usize..v).rev() {
        for col in col_lo..col_hi {
            let d = map.get(col, row);
            if d != 0 && u32::from(d) <= limit {
                return false;
            }
        }
    }
    true
}

fn fill_fraction(map: &DepthMap, u: usize, v: usize, z: u16, w: u32, tolerance: u32) -> f64 {
    let x0 = u as i64 - i64::from(w / 2);
    let col_lo = x0.max(0) as usize;
    let col_hi = (x0 + i64::from(w)).min(map.width() as i64) as usize;
    let row_hi = (v + w as usize).min(map.height());
    let mut hit = 0usize;
    for row in v..row_hi {
        for col in col_lo..col_hi {
            let d = map.get(col, row);
            if d != 0 && u32::from(d).abs_diff(u32::from(z)) <= tolerance {
                hit += 1;
            }
        }
    }
    let area = (col_hi - col_lo) * (row_hi - v);
    hit as f64 / area as f64
}

fn evaluate(
    map: &DepthMap,
    u: usize,
    v: usize,
    intrinsics: &CameraIntrinsics,
    params: &ProposalParams,
) -> Option<Candidate> {
    let z = map.get(u, v);
    let w = head_px(z, intrinsics, params)?;
    if !top_is_free(map, u, v, z, w, params.top_margin) {
        return None;
    }
    let fill = fill_fraction(map, u, v, z, w, params.depth_tolerance);
    (fill >= params.fill_ratio).then_some(Candidate {
        proposal: Proposal { u: u as u32, v: v as u32, depth: z },
        width: w,
        fill,
    })
}

/// Whether `(u, v)` passes the head-top test. Panics if out of bounds.
pub fn is_head_top(map: &DepthMap, u: usize, v: usize, intrinsics: &CameraIntrinsics, params: &ProposalParams) -> bool {
    assert!(u < map.width() && v < map.height(), "pixel ({u}, {v}) out of bounds");
    evaluate(map, u, v, intrinsics, params).is_some()
}

/// All head-top proposals of one depth map, sorted row-major.
pub fn generate_proposals(map: &DepthMap, intrinsics: &CameraIntrinsics, params: &ProposalParams) -> Vec<Proposal> {
    let mut candidates = Vec::new();
    for v in 0..map.height() {
        for u in 0..map.width() {
            if let Some(c) = evaluate(map, u, v, intrinsics, params) {
                candidates.push(c);
            }
        }
    }
    suppress(candidates, params.suppression_radius_factor)
}

fn suppress(mut candidates: Vec<Candidate>, radius_factor: f64) -> Vec<Proposal> {
    // Nearest first; among equal depths the best-centered (highest fill)
    // candidate wins, then row-major order.
    candidates.sort_by(|a, b| {
        a.proposal
            .depth
            .cmp(&b.proposal.depth)
            .then(b.fill.total_cmp(&a.fill))
            .then(a.proposal.v.cmp(&b.proposal.v))
            .then(a.proposal.u.cmp(&b.proposal.u))
    });
    let mut kept: Vec<Proposal> = Vec::new();
    for c in candidates {
        let r = radius_factor * f64::from(c.width);
        let r2 = r * r;
        let clear = kept.iter().all(|k| {
            let du = f64::from(k.u) - f64::from(c.proposal.u);
            let dv = f64::from(k.v) - f64::from(c.proposal.v);
            du * du + dv * dv > r2
        });
        if clear {
            kept.push(c.proposal);
        }
    }
    kept.sort_by_key(|p| (p.v, p.u));
    kept
}

/// [`generate_proposals`] over many frames.
pub fn generate_proposals_batch(
    maps: &[DepthMap],
    intrinsics: &CameraIntrinsics,
    params: &ProposalParams,
    exec: Exec,
) -> Vec<Vec<Proposal>> {
    exec.map(maps, |m| generate_proposals(m, intrinsics, params))
}
