//! Deterministic synthetic RGB-D scenes with head-top ground truth.
//!
//! The camera looks horizontally from `camera_height` meters above a flat
//! floor toward a wall at `background_depth`. People are painted as a head
//! disc on top of a shoulder-wide slab that reaches the floor; clutter items
//! are either low boxes or narrow posts, also standing on the floor, and
//! optional lookalikes are busts on thin stands. Entities
//! are painted far to near, so nearer ones occlude farther ones. Depth noise
//! is Gaussian, truncated at three sigma, and never turns a pixel into a hole.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::eval::GroundTruth;
use crate::imaging::{encode_color_ppm, encode_depth_pgm, CameraIntrinsics, ColorImage, DepthMap};
use crate::par::Exec;
use crate::pipeline::{write_atomic, write_jsonl};
use crate::rng::SplitMix64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HumanSpec {
    /// Lateral offset from the optical axis, meters.
    pub x: f64,
    /// Distance from the camera, meters.
    pub z: f64,
    pub height: f64,
    pub head_w: f64,
    pub shoulder_w: f64,
}

impl HumanSpec {
    pub fn at(x: f64, z: f64) -> Self {
        Self { x, z, height: 1.7, head_w: 0.25, shoulder_w: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub humans: Vec<HumanSpec>,
    /// Millimeters.
    pub background_depth: u16,
    pub clutter: u32,
    /// Busts on stands: a head disc over a short shoulder block on a thin
    /// pole. Head-like up close, not person-like from farther out.
    #[serde(default)]
    pub lookalikes: u32,
    /// Millimeters.
    pub noise_sigma: f64,
    /// Per-channel standard deviation of color noise.
    pub color_noise: f64,
    /// Meters above the floor.
    pub camera_height: f64,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            humans: Vec::new(),
            background_depth: 6000,
            clutter: 0,
            lookalikes: 0,
            noise_sigma: 10.0,
            color_noise: 4.0,
            camera_height: 1.3,
            seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        for (i, h) in self.humans.iter().enumerate() {
            if !(h.z > 0.0 && h.height > h.head_w && h.head_w > 0.0 && h.shoulder_w > 0.0) {
                return Err(Error::Config(format!("human {i} has an invalid shape: {h:?}")));
            }
        }
        if self.background_depth == 0 || !(self.noise_sigma >= 0.0) || !(self.color_noise >= 0.0) {
            return Err(Error::Config("scene needs a valid background and non-negative noise".into()));
        }
        Ok(())
    }
}

/// A visible head top.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HeadTop {
    pub u: u32,
    pub v: u32,
    /// Index into `SceneSpec::humans`.
    pub human: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub depth: DepthMap,
    pub color: ColorImage,
    pub head_tops: Vec<HeadTop>,
    /// One line per human left out of the ground truth.
    pub warnings: Vec<String>,
}

/// Image-space footprint of a painted entity.
#[derive(Debug, Clone)]
enum Shape {
    Rect { u0: f64, u1: f64, v0: f64, v1: f64 },
    Disc { uc: f64, vc: f64, ru: f64, rv: f64 },
}

impl Shape {
    fn covers(&self, u: usize, v: usize) -> bool {
        let (pu, pv) = (u as f64 + 0.5, v as f64 + 0.5);
        match *self {
            Shape::Rect { u0, u1, v0, v1 } => pu >= u0 && pu < u1 && pv >= v0 && pv < v1,
            Shape::Disc { uc, vc, ru, rv } => {
                let (a, b) = ((pu - uc) / ru, (pv - vc) / rv);
                a * a + b * b <= 1.0
            }
        }
    }

    fn bbox(&self, width: usize, height: usize) -> (usize, usize, usize, usize) {
        let (u0, u1, v0, v1) = match *self {
            Shape::Rect { u0, u1, v0, v1 } => (u0, u1, v0, v1),
            Shape::Disc { uc, vc, ru, rv } => (uc - ru, uc + ru, vc - rv, vc + rv),
        };
        let c = |x: f64, n: usize| x.floor().clamp(0.0, n as f64) as usize;
        (c(u0, width), c(u1 + 1.0, width), c(v0, height), c(v1 + 1.0, height))
    }
}

struct Entity {
    depth_m: f64,
    shapes: Vec<(Shape, [u8; 3])>,
    /// `Some(i)` for the head disc of human `i`.
    head_of: Option<usize>,
}

struct Camera {
    k: CameraIntrinsics,
    height: f64,
}

impl Camera {
    fn col(&self, x: f64, z: f64) -> f64 {
        self.k.cx + self.k.fx * x / z
    }

    /// Image row of a point `y` meters above the floor. Pixel centers sit at
    /// integer + 0.5, so the continuous coordinate is offset accordingly.
    fn row(&self, y: f64, z: f64) -> f64 {
        self.k.cy + 0.5 - self.k.fy * (y - self.height) / z
    }

    fn px(&self, meters: f64, z: f64) -> f64 {
        self.k.fx * meters / z
    }
}

fn human_entities(h: &HumanSpec, index: usize, cam: &Camera, palette: &mut SplitMix64) -> [Entity; 2] {
    let uc = cam.col(h.x, h.z) + 0.5;
    let r = h.head_w / 2.0;
    let skin = [200 + palette.below(40) as u8, 150 + palette.below(40) as u8, 110 + palette.below(30) as u8];
    let shirt = [palette.below(256) as u8, palette.below(256) as u8, palette.below(256) as u8];
    let head = Shape::Disc { uc, vc: cam.row(h.height - r, h.z), ru: cam.px(r, h.z), rv: cam.k.fy * r / h.z };
    let half = cam.px(h.shoulder_w / 2.0, h.z);
    let slab =
        Shape::Rect { u0: uc - half, u1: uc + half, v0: cam.row(h.height - h.head_w, h.z), v1: cam.row(0.0, h.z) };
    [
        Entity { depth_m: h.z, shapes: vec![(slab, shirt)], head_of: None },
        Entity { depth_m: h.z, shapes: vec![(head, skin)], head_of: Some(index) },
    ]
}

/// Pixel box around a head that clutter must stay clear of: the head square
/// itself plus the free band above it.
fn head_keepout(h: &HumanSpec, cam: &Camera) -> (f64, f64, f64, f64) {
    let uc = cam.col(h.x, h.z) + 0.5;
    let w = cam.px(h.head_w, h.z);
    let top = cam.row(h.height, h.z);
    (uc - w, uc + w, top - w, top + 1.5 * w)
}

fn clutter_entity(
    spec: &SceneSpec,
    cam: &Camera,
    width: usize,
    rng: &mut SplitMix64,
) -> Option<(Entity, (f64, f64, f64, f64))> {
    let far = f64::from(spec.background_depth) / 1000.0 - 0.3;
    if far <= 1.0 {
        return None;
    }
    let z = rng.uniform(1.0, far);
    let post = rng.next_f64() < 0.5;
    let (w, top) = if post {
        (rng.uniform(0.15, 0.35), rng.uniform(1.4, 1.9))
    } else {
        (rng.uniform(0.3, 1.2), rng.uniform(0.3, 1.1))
    };
    let reach = (cam.k.cx.max(width as f64 - cam.k.cx)) * z / cam.k.fx;
    let x = rng.uniform(-reach, reach);
    let color = [rng.below(256) as u8, rng.below(256) as u8, rng.below(256) as u8];
    let (uc, half) = (cam.col(x, z) + 0.5, cam.px(w / 2.0, z));
    let shape = Shape::Rect { u0: uc - half, u1: uc + half, v0: cam.row(top, z), v1: cam.row(0.0, z) };
    let bbox = (uc - half, uc + half, cam.row(top, z), cam.row(0.0, z));
    Some((Entity { depth_m: z, shapes: vec![(shape, color)], head_of: None }, bbox))
}

fn lookalike_entity(
    spec: &SceneSpec,
    cam: &Camera,
    width: usize,
    rng: &mut SplitMix64,
) -> Option<(Entity, (f64, f64, f64, f64))> {
    let far = f64::from(spec.background_depth) / 1000.0 - 0.3;
    if far <= 1.5 {
        return None;
    }
    let z = rng.uniform(1.5, far.min(5.0));
    let d = rng.uniform(0.22, 0.28);
    let top = rng.uniform(1.5, 1.85);
    let (bust_w, bust_h) = (rng.uniform(0.3, 0.45), rng.uniform(0.1, 0.25));
    let pole = rng.uniform(0.04, 0.08);
    let reach = (cam.k.cx.max(width as f64 - cam.k.cx)) * z / cam.k.fx;
    let x = rng.uniform(-reach, reach);
    let skin = [200 + rng.below(40) as u8, 150 + rng.below(40) as u8, 110 + rng.below(30) as u8];
    let cloth = [rng.below(256) as u8, rng.below(256) as u8, rng.below(256) as u8];
    let stand = [rng.below(256) as u8, rng.below(256) as u8, rng.below(256) as u8];
    let uc = cam.col(x, z) + 0.5;
    let rect = |w: f64, y0: f64, y1: f64| Shape::Rect {
        u0: uc - cam.px(w / 2.0, z),
        u1: uc + cam.px(w / 2.0, z),
        v0: cam.row(y0, z),
        v1: cam.row(y1, z),
    };
    let disc = Shape::Disc { uc, vc: cam.row(top - d / 2.0, z), ru: cam.px(d / 2.0, z), rv: cam.k.fy * d / 2.0 / z };
    let r = cam.px(bust_w / 2.0, z);
    let bbox = (uc - r, uc + r, cam.row(top, z), cam.row(0.0, z));
    Some((
        Entity {
            depth_m: z,
            shapes: vec![
                (rect(pole, top - d - bust_h, 0.0), stand),
                (rect(bust_w, top - d, top - d - bust_h), cloth),
                (disc, skin),
            ],
            head_of: None,
        },
        bbox,
    ))
}

fn overlaps(a: (f64, f64, f64, f64), b: (f64, f64, f64, f64)) -> bool {
    a.0 < b.1 && b.0 < a.1 && a.2 < b.3 && b.2 < a.3
}

fn truncated_normal(rng: &mut SplitMix64, sigma: f64) -> f64 {
    if sigma == 0.0 {
        return 0.0;
    }
    (rng.normal() * sigma).clamp(-3.0 * sigma, 3.0 * sigma)
}

/// Render depth, color and visible head tops.
pub fn render_scene(spec: &SceneSpec, intrinsics: &CameraIntrinsics, width: usize, height: usize) -> Result<Scene> {
    spec.validate()?;
    intrinsics.validate()?;
    let cam = Camera { k: *intrinsics, height: spec.camera_height };
    let mut rng = SplitMix64::new(spec.seed);
    let mut palette = rng.fork();
    let mut clutter_rng = rng.fork();
    let mut noise = rng.fork();
    let mut lookalike_rng = rng.fork();

    let mut entities: Vec<Entity> = Vec::new();
    for (i, h) in spec.humans.iter().enumerate() {
        entities.extend(human_entities(h, i, &cam, &mut palette));
    }
    let keepouts: Vec<_> = spec.humans.iter().map(|h| head_keepout(h, &cam)).collect();
    for _ in 0..spec.clutter {
        // A few attempts to keep heads unoccluded; give up on the item after.
        for _ in 0..20 {
            if let Some((e, bbox)) = clutter_entity(spec, &cam, width, &mut clutter_rng) {
                if keepouts.iter().all(|k| !overlaps(*k, bbox)) {
                    entities.push(e);
                    break;
                }
            }
        }
    }
    for _ in 0..spec.lookalikes {
        for _ in 0..20 {
            if let Some((e, bbox)) = lookalike_entity(spec, &cam, width, &mut lookalike_rng) {
                if keepouts.iter().all(|k| !overlaps(*k, bbox)) {
                    entities.push(e);
                    break;
                }
            }
        }
    }
    // Far to near; the sort is stable so equal depths keep spec order.
    entities.sort_by(|a, b| b.depth_m.total_cmp(&a.depth_m));

    let n = width * height;
    let mut depth_m = vec![f64::from(spec.background_depth) / 1000.0; n];
    let bg = [110 + palette.below(40) as u8, 110 + palette.below(40) as u8, 110 + palette.below(40) as u8];
    let mut rgb = vec![bg; n];
    // usize::MAX marks pixels not owned by a head.
    let mut head_owner = vec![usize::MAX; n];
    for e in &entities {
        for (shape, color) in &e.shapes {
            let (u0, u1, v0, v1) = shape.bbox(width, height);
            for v in v0..v1 {
                for u in u0..u1 {
                    if shape.covers(u, v) {
                        let i = v * width + u;
                        depth_m[i] = e.depth_m;
                        rgb[i] = *color;
                        head_owner[i] = e.head_of.unwrap_or(usize::MAX);
                    }
                }
            }
        }
    }

    let mut head_tops = Vec::new();
    let mut warnings = Vec::new();
    for (i, h) in spec.humans.iter().enumerate() {
        let uc = cam.col(h.x, h.z) + 0.5;
        let top = cam.row(h.height, h.z);
        let u = uc.floor();
        if u < 0.0 || u >= width as f64 || top < 0.0 || top >= height as f64 {
            warnings.push(format!("human {i}: head top projects outside the frame"));
            continue;
        }
        let u = u as usize;
        match (0..height).find(|&v| head_owner[v * width + u] == i) {
            Some(v) if v as f64 <= top + 1.0 => head_tops.push(HeadTop { u: u as u32, v: v as u32, human: i }),
            _ => warnings.push(format!("human {i}: head top is occluded")),
        }
    }

    let mut depth = DepthMap::filled(width, height, 0);
    let mut color = ColorImage::filled(width, height, [0, 0, 0]);
    for v in 0..height {
        for u in 0..width {
            let i = v * width + u;
            let mm = depth_m[i] * 1000.0 + truncated_normal(&mut noise, spec.noise_sigma);
            depth.set(u, v, mm.round().clamp(1.0, 65535.0) as u16);
            let mut c = [0u8; 3];
            for (ch, out) in c.iter_mut().enumerate() {
                let x = f64::from(rgb[i][ch]) + truncated_normal(&mut noise, spec.color_noise);
                *out = x.round().clamp(0.0, 255.0) as u8;
            }
            color.set(u, v, c);
        }
    }
    Ok(Scene { depth, color, head_tops, warnings })
}

/// How random scenes are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneDistribution {
    pub humans_min: u32,
    pub humans_max: u32,
    pub clutter: u32,
    pub lookalikes: u32,
    pub noise_sigma: f64,
    pub background_depth: u16,
    /// Meters.
    pub z_range: (f64, f64),
    /// Meters.
    pub height_range: (f64, f64),
    pub camera_height: f64,
    pub width: usize,
    pub height: usize,
}

impl Default for SceneDistribution {
    fn default() -> Self {
        Self {
            humans_min: 1,
            humans_max: 3,
            clutter: 3,
            lookalikes: 0,
            noise_sigma: 10.0,
            background_depth: 6000,
            z_range: (1.5, 5.0),
            height_range: (1.6, 1.8),
            camera_height: 1.3,
            width: 640,
            height: 480,
        }
    }
}

impl SceneDistribution {
    /// Draw a scene. People keep at least 0.1 m of clear space between their
    /// projected silhouettes (so 0.6 m apart at equal depth) and their heads
    /// stay inside the frame.
    pub fn sample(&self, intrinsics: &CameraIntrinsics, rng: &mut SplitMix64) -> SceneSpec {
        let cam = Camera { k: *intrinsics, height: self.camera_height };
        let span = u64::from(self.humans_max.saturating_sub(self.humans_min)) + 1;
        let want = self.humans_min + rng.below(span) as u32;
        let mut humans: Vec<HumanSpec> = Vec::new();
        let mut extents: Vec<(f64, f64)> = Vec::new();
        for _ in 0..want {
            for _ in 0..50 {
                let z = rng.uniform(self.z_range.0, self.z_range.1);
                let mut h = HumanSpec::at(0.0, z);
                h.height = rng.uniform(self.height_range.0, self.height_range.1);
                let margin = cam.px(h.shoulder_w / 2.0 + 0.05, z);
                let u = rng.uniform(margin, self.width as f64 - margin);
                h.x = (u - intrinsics.cx) * z / intrinsics.fx;
                if cam.row(h.height, z) < 2.0 {
                    continue;
                }
                let ext = (u - margin, u + margin);
                if extents.iter().all(|e| ext.1 <= e.0 || e.1 <= ext.0) {
                    extents.push(ext);
                    humans.push(h);
                    break;
                }
            }
        }
        SceneSpec {
            humans,
            background_depth: self.background_depth,
            clutter: self.clutter,
            lookalikes: self.lookalikes,
            noise_sigma: self.noise_sigma,
            camera_height: self.camera_height,
            seed: rng.next_u64(),
            ..SceneSpec::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestImage {
    pub id: String,
    pub depth: PathBuf,
    pub color: PathBuf,
    /// SHA-256 of the depth file bytes followed by the color file bytes.
    pub sha256: String,
}

/// Dataset index. Paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub images: Vec<ManifestImage>,
    pub intrinsics: PathBuf,
    pub truth: PathBuf,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::from(e).in_file(&path))?;
        serde_json::from_str(&text).map_err(|e| Error::from(e).in_file(&path))
    }
}

pub fn content_hash(depth_bytes: &[u8], color_bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(depth_bytes);
    h.update(color_bytes);
    hex::encode(h.finalize())
}

/// Summary of a generated dataset.
#[derive(Debug, Clone)]
pub struct GeneratedDataset {
    pub manifest: Manifest,
    pub truths: Vec<GroundTruth>,
    pub warnings: Vec<String>,
}

/// Render `n_images` scenes and write them under `out_dir`.
pub fn generate_dataset(
    n_images: usize,
    dist: &SceneDistribution,
    intrinsics: &CameraIntrinsics,
    seed: u64,
    out_dir: &Path,
    exec: Exec,
) -> Result<GeneratedDataset> {
    if n_images == 0 {
        return Err(Error::Config("a dataset needs at least one image".into()));
    }
    let mut rng = SplitMix64::new(seed);
    let specs: Vec<SceneSpec> = (0..n_images).map(|_| dist.sample(intrinsics, &mut rng)).collect();

    for sub in ["depth", "color"] {
        let d = out_dir.join(sub);
        std::fs::create_dir_all(&d).map_err(|e| Error::from(e).in_file(&d))?;
    }
    let written = exec.map_range(n_images, |i| -> Result<(ManifestImage, GroundTruth, Vec<String>)> {
        let scene = render_scene(&specs[i], intrinsics, dist.width, dist.height)?;
        let id = format!("{i:05}");
        let depth_rel = PathBuf::from("depth").join(format!("{id}.pgm"));
        let color_rel = PathBuf::from("color").join(format!("{id}.ppm"));
        let depth_bytes = encode_depth_pgm(&scene.depth);
        let color_bytes = encode_color_ppm(&scene.color);
        write_atomic(&out_dir.join(&depth_rel), &depth_bytes)?;
        write_atomic(&out_dir.join(&color_rel), &color_bytes)?;
        let truth =
            GroundTruth { image_id: id.clone(), head_tops: scene.head_tops.iter().map(|h| [h.u, h.v]).collect() };
        let warnings = scene.warnings.iter().map(|w| format!("image {id}: {w}")).collect();
        Ok((
            ManifestImage { id, depth: depth_rel, color: color_rel, sha256: content_hash(&depth_bytes, &color_bytes) },
            truth,
            warnings,
        ))
    });

    let mut images = Vec::with_capacity(n_images);
    let mut truths = Vec::with_capacity(n_images);
    let mut warnings = Vec::new();
    for w in written {
        let (img, truth, warn) = w?;
        images.push(img);
        truths.push(truth);
        warnings.extend(warn);
    }
    let manifest =
        Manifest { images, intrinsics: PathBuf::from("intrinsics.json"), truth: PathBuf::from("truth.jsonl") };
    write_atomic(&out_dir.join(&manifest.intrinsics), intrinsics.to_json().as_bytes())?;
    write_jsonl(&out_dir.join(&manifest.truth), &truths)?;
    let text = serde_json::to_string_pretty(&manifest)?;
    write_atomic(&out_dir.join(MANIFEST_FILE), text.as_bytes())?;
    Ok(GeneratedDataset { manifest, truths, warnings })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::project_size;

    fn k() -> CameraIntrinsics {
        CameraIntrinsics::default()
    }

    #[test]
    fn empty_noiseless_scene_is_uniform() {
        let spec = SceneSpec { noise_sigma: 0.0, color_noise: 0.0, ..Default::default() };
        let s = render_scene(&spec, &k(), 64, 48).unwrap();
        assert!(s.depth.data().iter().all(|&d| d == 6000));
        assert!(s.head_tops.is_empty());
    }

    #[test]
    fn centered_human_geometry() {
        let spec = SceneSpec { humans: vec![HumanSpec::at(0.0, 2.0)], noise_sigma: 0.0, ..Default::default() };
        let s = render_scene(&spec, &k(), 640, 480).unwrap();
        assert_eq!(s.head_tops.len(), 1);
        let top = s.head_tops[0];
        // Head top projects to row 239.5 - 525 * (1.7 - 1.3) / 2.0 = 134.5,
        // the boundary between rows 134 and 135.
        assert_eq!(top.u, 320);
        assert_eq!(top.v, 135);
        // Widest head row, measured 0.125 m below the top.
        let row = top.v as usize + 33;
        let width = (0..640).filter(|&u| s.depth.get(u, row) == 2000).count();
        let expect = project_size(0.25, 2000, 525.0).unwrap() as usize;
        assert_eq!(expect, 66);
        assert!(width.abs_diff(expect) <= 1, "head row width {width}");
        assert_eq!(s.depth.get(top.u as usize, top.v as usize - 1), 6000);
    }

    #[test]
    fn nearer_entity_occludes() {
        let spec = SceneSpec {
            humans: vec![HumanSpec::at(0.0, 4.0), HumanSpec::at(0.0, 2.0)],
            noise_sigma: 0.0,
            ..Default::default()
        };
        let s = render_scene(&spec, &k(), 640, 480).unwrap();
        // The far person's head sits right behind the near person's head.
        assert_eq!(s.depth.get(319, 200), 2000);
        assert_eq!(s.head_tops.len(), 1);
        assert_eq!(s.head_tops[0].human, 1);
        assert_eq!(s.warnings.len(), 1);
    }

    #[test]
    fn off_frame_human_is_dropped() {
        let spec = SceneSpec { humans: vec![HumanSpec::at(40.0, 2.0)], ..Default::default() };
        let s = render_scene(&spec, &k(), 640, 480).unwrap();
        assert!(s.head_tops.is_empty());
        assert!(s.warnings[0].contains("outside"));
    }

    #[test]
    fn rendering_is_deterministic() {
        let mut rng = SplitMix64::new(5);
        let spec = SceneDistribution::default().sample(&k(), &mut rng);
        let a = render_scene(&spec, &k(), 320, 240).unwrap();
        let b = render_scene(&spec, &k(), 320, 240).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn truth_pixels_have_valid_depth() {
        let dist = SceneDistribution::default();
        let mut rng = SplitMix64::new(77);
        for _ in 0..20 {
            let spec = dist.sample(&k(), &mut rng);
            let s = render_scene(&spec, &k(), 640, 480).unwrap();
            for t in &s.head_tops {
                let d = s.depth.get(t.u as usize, t.v as usize) as f64;
                let z = spec.humans[t.human].z * 1000.0;
                assert!((d - z).abs() <= 3.0 * spec.noise_sigma + 50.0, "{d} vs {z}");
            }
            assert!(s.depth.data().iter().all(|&d| d > 0));
        }
    }

    #[test]
    fn sampled_people_are_separated() {
        let dist = SceneDistribution { humans_min: 3, humans_max: 3, ..Default::default() };
        let mut rng = SplitMix64::new(8);
        for _ in 0..50 {
            let spec = dist.sample(&k(), &mut rng);
            for (i, a) in spec.humans.iter().enumerate() {
                for b in &spec.humans[i + 1..] {
                    if (a.z - b.z).abs() < 1e-9 {
                        assert!((a.x - b.x).abs() >= 0.6);
                    }
                }
            }
        }
    }

    #[test]
    fn dataset_files_and_hashes() {
        let dir = tempfile::tempdir().unwrap();
        let dist = SceneDistribution { width: 160, height: 120, ..Default::default() };
        let k = CameraIntrinsics { fx: 130.0, fy: 130.0, cx: 79.5, cy: 59.5 };
        let out = generate_dataset(1, &dist, &k, 3, dir.path(), Exec::default()).unwrap();
        let m = Manifest::load(dir.path()).unwrap();
        assert_eq!(m, out.manifest);
        assert_eq!(m.images.len(), 1);
        let img = &m.images[0];
        let d = std::fs::read(dir.path().join(&img.depth)).unwrap();
        let c = std::fs::read(dir.path().join(&img.color)).unwrap();
        assert_eq!(content_hash(&d, &c), img.sha256);
        assert!(dir.path().join("truth.jsonl").exists());
        assert_eq!(CameraIntrinsics::load(&dir.path().join("intrinsics.json")).unwrap(), k);
        assert!(generate_dataset(0, &dist, &k, 3, dir.path(), Exec::default()).is_err());
    }

    #[test]
    fn distinct_seeds_give_distinct_layouts() {
        let dist = SceneDistribution { width: 96, height: 72, ..Default::default() };
        let k = CameraIntrinsics { fx: 79.0, fy: 79.0, cx: 47.5, cy: 35.5 };
        let mut same = 0;
        for s in 0..100u64 {
            let a = render_scene(&dist.sample(&k, &mut SplitMix64::new(2 * s)), &k, 96, 72).unwrap();
            let b = render_scene(&dist.sample(&k, &mut SplitMix64::new(2 * s + 1)), &k, 96, 72).unwrap();
            let ha = content_hash(&encode_depth_pgm(&a.depth), &encode_color_ppm(&a.color));
            let hb = content_hash(&encode_depth_pgm(&b.depth), &encode_color_ppm(&b.color));
            same += usize::from(ha == hb);
        }
        assert!(same <= 1);
    }
}
