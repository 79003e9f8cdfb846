//! Multi-scale glimpse windows around a head-top proposal.
//!
//! A glimpse set is ordered largest first: `peripheral_count` enlarged body
//! windows, then the body, upper-body and head windows. The `n`-th peripheral
//! side is `S_b * (1 + 0.3 n)` where `S_b` is the body side in pixels. All
//! windows are squares centered on the proposal column with their top edge a
//! little above the head top, cropped (never shifted) at the image border.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::{clamp_rect, project_size, round_half_up, Bounds, CameraIntrinsics, ColorImage, DepthMap, Rect};
use crate::proposals::Proposal;

/// Growth of each successive peripheral window relative to the body window.
pub const PERIPHERAL_RATIO: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GlimpseConfig {
    /// Meters.
    pub head_size: f64,
    /// Meters.
    pub upper_size: f64,
    /// Meters.
    pub body_size: f64,
    pub peripheral_count: u32,
    /// Fraction of the window side placed above the head top.
    pub headroom: f64,
}

impl Default for GlimpseConfig {
    fn default() -> Self {
        Self { head_size: 0.30, upper_size: 0.70, body_size: 1.90, peripheral_count: 6, headroom: 0.1 }
    }
}

impl GlimpseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 < self.head_size && self.head_size < self.upper_size && self.upper_size < self.body_size) {
            return Err(Error::Config(format!(
                "glimpse sizes must satisfy 0 < head < upper < body, got {} / {} / {}",
                self.head_size, self.upper_size, self.body_size
            )));
        }
        if !(0.0..1.0).contains(&self.headroom) {
            return Err(Error::Config(format!("glimpse.headroom must be in [0, 1), got {}", self.headroom)));
        }
        Ok(())
    }

    /// Sequence length `peripheral_count + 3`.
    pub fn steps(&self) -> usize {
        self.peripheral_count as usize + 3
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    /// 1-based peripheral index; larger is wider.
    Peripheral(u32),
    Body,
    UpperBody,
    Head,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlimpseSet {
    pub proposal: Proposal,
    /// Clamped windows, largest first.
    pub windows: Vec<Rect>,
    /// Square sides before clamping, parallel to `windows`.
    pub sides: Vec<u32>,
    pub scales: Vec<Scale>,
}

impl GlimpseSet {
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }
}

pub fn peripheral_size(body_side: u32, n: u32) -> u32 {
    round_half_up(f64::from(body_side) * (1.0 + PERIPHERAL_RATIO * f64::from(n))) as u32
}

pub fn window_for_scale(proposal: &Proposal, side: u32, headroom: f64, bounds: Bounds) -> Rect {
    let side = i64::from(side.max(1));
    let x0 = i64::from(proposal.u) - side / 2;
    let y0 = i64::from(proposal.v) - round_half_up(headroom * side as f64);
    clamp_rect(Rect::new(x0, y0, side, side), bounds)
}

pub fn build_glimpse_set(
    proposal: &Proposal,
    intrinsics: &CameraIntrinsics,
    bounds: Bounds,
    config: &GlimpseConfig,
) -> Result<GlimpseSet> {
    let z = u32::from(proposal.depth);
    let head = project_size(config.head_size, z, intrinsics.fx)?;
    let upper = project_size(config.upper_size, z, intrinsics.fx)?;
    let body = project_size(config.body_size, z, intrinsics.fx)?;

    let mut sides = Vec::with_capacity(config.steps());
    let mut scales = Vec::with_capacity(config.steps());
    for n in (1..=config.peripheral_count).rev() {
        sides.push(peripheral_size(body, n));
        scales.push(Scale::Peripheral(n));
    }
    sides.extend([body, upper, head]);
    scales.extend([Scale::Body, Scale::UpperBody, Scale::Head]);

    let windows = sides.iter().map(|&s| window_for_scale(proposal, s, config.headroom, bounds)).collect();
    Ok(GlimpseSet { proposal: *proposal, windows, sides, scales })
}

/// A copied sub-window. Zero width or height is the empty-patch sentinel.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch<P> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<P>,
}

impl<P> Patch<P> {
    pub fn empty() -> Self {
        Self { width: 0, height: 0, data: Vec::new() }
    }

    pub fn is_empty(&self) -> bool {
        self.width == 0 || self.height == 0
    }

    pub fn get(&self, x: usize, y: usize) -> &P {
        &self.data[y * self.width + x]
    }
}

/// Frames that windows can be clipped from.
pub trait Clip {
    type Pixel: Copy;

    fn bounds(&self) -> Bounds;
    fn pixel(&self, u: usize, v: usize) -> Self::Pixel;

    fn clip_patch(&self, rect: Rect) -> Result<Patch<Self::Pixel>> {
        if rect.is_empty() {
            return Ok(Patch::empty());
        }
        if !rect.within(self.bounds()) {
            return Err(Error::Contract(format!(
                "window {rect:?} exceeds {}x{} image",
                self.bounds().width,
                self.bounds().height
            )));
        }
        let (x0, y0) = (rect.x0 as usize, rect.y0 as usize);
        let (w, h) = (rect.w as usize, rect.h as usize);
        let mut data = Vec::with_capacity(w * h);
        for v in y0..y0 + h {
            for u in x0..x0 + w {
                data.push(self.pixel(u, v));
            }
        }
        Ok(Patch { width: w, height: h, data })
    }
}

impl Clip for DepthMap {
    type Pixel = u16;

    fn bounds(&self) -> Bounds {
        DepthMap::bounds(self)
    }

    fn pixel(&self, u: usize, v: usize) -> u16 {
        self.get(u, v)
    }
}

impl Clip for ColorImage {
    type Pixel = [u8; 3];

    fn bounds(&self) -> Bounds {
        ColorImage::bounds(self)
    }

    fn pixel(&self, u: usize, v: usize) -> [u8; 3] {
        self.get(u, v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at(u: u32, v: u32, depth: u16) -> Proposal {
        Proposal { u, v, depth }
    }

    #[test]
    fn peripheral_size_examples() {
        assert_eq!(peripheral_size(100, 3), 190);
        assert_eq!(peripheral_size(100, 0), 100);
        assert_eq!(peripheral_size(37, 1), 48);
    }

    #[test]
    fn window_examples() {
        let b = Bounds::new(640, 480);
        assert_eq!(window_for_scale(&at(320, 100, 1), 100, 0.1, b), Rect::new(270, 90, 100, 100));
        assert_eq!(window_for_scale(&at(5, 5, 1), 100, 0.1, b), Rect::new(0, 0, 55, 95));
        assert_eq!(window_for_scale(&at(320, 100, 1), 100, 0.0, b).y0, 100);
    }

    #[test]
    fn default_set_has_nine_steps_largest_first() {
        // fx chosen so the 1.90 m body is exactly 100 px at 1900 mm.
        let k = CameraIntrinsics { fx: 100.0, fy: 100.0, cx: 0.0, cy: 0.0 };
        let cfg = GlimpseConfig::default();
        let set = build_glimpse_set(&at(2000, 2000, 1900), &k, Bounds::new(5000, 5000), &cfg).unwrap();
        let upper = project_size(0.70, 1900, 100.0).unwrap();
        let head = project_size(0.30, 1900, 100.0).unwrap();
        assert_eq!(set.sides, vec![280, 250, 220, 190, 160, 130, 100, upper, head]);
        assert_eq!(set.len(), 9);
        assert_eq!(set.scales[0], Scale::Peripheral(6));
        assert_eq!(set.scales[8], Scale::Head);
    }

    #[test]
    fn no_peripherals_gives_three_steps() {
        let k = CameraIntrinsics::default();
        let cfg = GlimpseConfig { peripheral_count: 0, ..Default::default() };
        let set = build_glimpse_set(&at(320, 100, 2500), &k, Bounds::new(640, 480), &cfg).unwrap();
        assert_eq!(set.scales, vec![Scale::Body, Scale::UpperBody, Scale::Head]);
        let body = project_size(1.9, 2500, 525.0).unwrap();
        assert_eq!(set.sides[0], body);
    }

    #[test]
    fn corner_proposal_is_clamped() {
        let set = build_glimpse_set(
            &at(0, 0, 1500),
            &CameraIntrinsics::default(),
            Bounds::new(640, 480),
            &GlimpseConfig::default(),
        )
        .unwrap();
        for w in &set.windows {
            assert!(w.within(Bounds::new(640, 480)));
        }
    }

    #[test]
    fn invalid_depth_is_rejected() {
        let r = build_glimpse_set(
            &at(1, 1, 0),
            &CameraIntrinsics::default(),
            Bounds::new(640, 480),
            &GlimpseConfig::default(),
        );
        assert!(matches!(r, Err(Error::InvalidDepth(0))));
    }

    #[test]
    fn config_validation() {
        assert!(GlimpseConfig::default().validate().is_ok());
        let bad = GlimpseConfig { upper_size: 0.2, ..Default::default() };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn clip_examples() {
        let data: Vec<u16> = (0..12).collect();
        let map = DepthMap::new(4, 3, data.clone()).unwrap();
        let full = map.clip_patch(Rect::new(0, 0, 4, 3)).unwrap();
        assert_eq!(full.data, data);
        let one = map.clip_patch(Rect::new(2, 1, 1, 1)).unwrap();
        assert_eq!(one.data, vec![6]);
        assert!(map.clip_patch(Rect::new(2, 1, 0, 1)).unwrap().is_empty());
        assert!(matches!(map.clip_patch(Rect::new(3, 1, 2, 1)), Err(Error::Contract(_))));

        let img = ColorImage::filled(3, 3, [9, 8, 7]);
        assert_eq!(img.clip_patch(Rect::new(1, 1, 2, 2)).unwrap().data, vec![[9, 8, 7]; 4]);
    }
}
