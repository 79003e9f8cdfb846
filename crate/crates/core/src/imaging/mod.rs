//! Registered depth/color frames, pinhole sizing and window arithmetic.

mod pnm;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use pnm::{
    decode_color_ppm, decode_depth_pgm, encode_color_ppm, encode_depth_pgm, load_color_ppm, load_depth_pgm,
    save_color_ppm, save_depth_pgm,
};

/// Row-major depth in millimeters. Zero means the sensor returned nothing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DepthMap {
    width: usize,
    height: usize,
    data: Vec<u16>,
}

impl DepthMap {
    pub fn new(width: usize, height: usize, data: Vec<u16>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Shape(format!("depth data has {} samples, expected {}x{}", data.len(), width, height)));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: u16) -> Self {
        Self { width, height, data: vec![value; width * height] }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u16] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u16] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> u16 {
        self.data[v * self.width + u]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, depth: u16) {
        self.data[v * self.width + u] = depth;
    }

    pub fn bounds(&self) -> Bounds {
        Bounds::new(self.width, self.height)
    }
}

/// Row-major 8-bit RGB.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColorImage {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

impl ColorImage {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != 3 * width * height {
            return Err(Error::Shape(format!("color data has {} bytes, expected 3x{}x{}", data.len(), width, height)));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        let data = rgb.iter().copied().cycle().take(3 * width * height).collect();
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, u: usize, v: usize) -> [u8; 3] {
        let i = 3 * (v * self.width + u);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, u: usize, v: usize, rgb: [u8; 3]) {
        let i = 3 * (v * self.width + u);
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn bounds(&self) -> Bounds {
        Bounds::new(self.width, self.height)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
}

impl Default for CameraIntrinsics {
    /// Conventional Kinect VGA calibration.
    fn default() -> Self {
        Self { fx: 525.0, fy: 525.0, cx: 319.5, cy: 239.5 }
    }
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) || !self.cx.is_finite() || !self.cy.is_finite() {
            return Err(Error::Config(format!(
                "intrinsics need positive focal lengths, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::from(e).in_file(path))?;
        let k: Self = serde_json::from_str(&text).map_err(|e| Error::from(e).in_file(path))?;
        k.validate().map_err(|e| e.in_file(path))?;
        Ok(k)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("intrinsics serialize")
    }
}

/// Image extent used for clamping.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bounds {
    pub width: usize,
    pub height: usize,
}

impl Bounds {
    pub fn new(width: usize, height: usize) -> Self {
        Self { width, height }
    }
}

/// Axis-aligned pixel window: columns `x0..x0+w`, rows `y0..y0+h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rect {
    pub x0: i64,
    pub y0: i64,
    pub w: i64,
    pub h: i64,
}

impl Rect {
    pub fn new(x0: i64, y0: i64, w: i64, h: i64) -> Self {
        debug_assert!(w >= 0 && h >= 0, "negative extent {w}x{h}");
        Self { x0, y0, w, h }
    }

    pub fn is_empty(&self) -> bool {
        self.w <= 0 || self.h <= 0
    }

    pub fn area(&self) -> i64 {
        self.w.max(0) * self.h.max(0)
    }

    pub fn x1(&self) -> i64 {
        self.x0 + self.w
    }

    pub fn y1(&self) -> i64 {
        self.y0 + self.h
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        other.x0 >= self.x0 && other.y0 >= self.y0 && other.x1() <= self.x1() && other.y1() <= self.y1()
    }

    pub fn within(&self, bounds: Bounds) -> bool {
        self.x0 >= 0 && self.y0 >= 0 && self.x1() <= bounds.width as i64 && self.y1() <= bounds.height as i64
    }
}

/// Round half up, i.e. `floor(x + 0.5)`.
#[inline]
pub fn round_half_up(x: f64) -> i64 {
    (x + 0.5).floor() as i64
}

/// Pixel extent of an object of `real_size` meters seen at `depth_mm`.
pub fn project_size(real_size: f64, depth_mm: u32, focal: f64) -> Result<u32> {
    if depth_mm == 0 {
        return Err(Error::InvalidDepth(depth_mm));
    }
    let px = round_half_up(focal * real_size * 1000.0 / depth_mm as f64);
    Ok(px.clamp(1, u32::MAX as i64) as u32)
}

/// Intersect `r` with the image. Each side is cropped independently and the
/// window is never shifted; an empty intersection has zero width or height.
pub fn clamp_rect(r: Rect, bounds: Bounds) -> Rect {
    fn axis(start: i64, len: i64, limit: i64) -> (i64, i64) {
        let lo = start.clamp(0, limit);
        let hi = (start + len.max(0)).clamp(0, limit);
        (lo, (hi - lo).max(0))
    }
    let (x0, w) = axis(r.x0, r.w, bounds.width as i64);
    let (y0, h) = axis(r.y0, r.h, bounds.height as i64);
    Rect { x0, y0, w, h }
}
