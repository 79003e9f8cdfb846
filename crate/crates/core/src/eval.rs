//! FPPI versus miss-rate evaluation of scored head-top detections.
//!
//! Detections and ground truth are points. Within an image, detections are
//! taken in descending score order and each claims the nearest still
//! unmatched head top within the match radius; leftovers are false
//! positives, unclaimed head tops are misses.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::project_size;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub image_id: String,
    pub u: u32,
    pub v: u32,
    pub score: f64,
    /// Proposal depth, used by the adaptive match radius.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub depth_mm: Option<u16>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub image_id: String,
    pub head_tops: Vec<[u32; 2]>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveRadius {
    /// Meters.
    pub head_width: f64,
    pub fx: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchParams {
    /// Pixels.
    pub radius: f64,
    /// When set, detections with a known depth use half the projected head
    /// width as their radius instead.
    pub adaptive: Option<AdaptiveRadius>,
}

impl Default for MatchParams {
    fn default() -> Self {
        Self { radius: 25.0, adaptive: None }
    }
}

impl MatchParams {
    pub fn radius_for(&self, det: &Detection) -> f64 {
        match (self.adaptive, det.depth_mm) {
            (Some(a), Some(d)) if d > 0 => {
                project_size(a.head_width, u32::from(d), a.fx).map(|w| 0.5 * f64::from(w)).unwrap_or(self.radius)
            }
            _ => self.radius,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct MatchCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

fn dist2(det: &Detection, t: [u32; 2]) -> f64 {
    let du = f64::from(det.u) - f64::from(t[0]);
    let dv = f64::from(det.v) - f64::from(t[1]);
    du * du + dv * dv
}

/// For each detection in `order`, whether it claimed a head top.
fn greedy_claims(dets: &[&Detection], order: &[usize], truths: &[[u32; 2]], params: &MatchParams) -> Vec<bool> {
    let mut taken = vec![false; truths.len()];
    let mut hit = vec![false; dets.len()];
    for &i in order {
        let det = dets[i];
        let r = params.radius_for(det);
        let best = truths
            .iter()
            .enumerate()
            .filter(|(j, _)| !taken[*j])
            .map(|(j, &t)| (j, dist2(det, t)))
            .filter(|&(_, d)| d <= r * r)
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        if let Some((j, _)) = best {
            taken[j] = true;
            hit[i] = true;
        }
    }
    hit
}

fn score_order(dets: &[&Detection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score).then(a.cmp(&b)));
    order
}

/// Match one image's (already thresholded) detections against its head tops.
pub fn match_image(dets: &[&Detection], truths: &[[u32; 2]], params: &MatchParams) -> MatchCounts {
    let hit = greedy_claims(dets, &score_order(dets), truths, params);
    let tp = hit.iter().filter(|&&h| h).count();
    MatchCounts { tp, fp: dets.len() - tp, fn_: truths.len() - tp }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub threshold: f64,
    pub fppi: f64,
    pub miss_rate: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalCurve {
    /// Ascending FPPI, non-increasing miss rate.
    pub points: Vec<CurvePoint>,
}

/// Sweep the threshold over every distinct score.
///
/// Greedy matching in descending score order never revisits a decision, so
/// the detections above any threshold are matched exactly as they would be in
/// isolation; one pass per image yields the whole curve.
pub fn compute_curve(dets: &[Detection], truths: &[GroundTruth], params: &MatchParams) -> Result<EvalCurve> {
    let mut images: BTreeMap<&str, (Vec<&Detection>, Vec<[u32; 2]>)> = BTreeMap::new();
    for t in truths {
        images.entry(&t.image_id).or_default().1.extend(&t.head_tops);
    }
    for d in dets {
        images.entry(&d.image_id).or_default().0.push(d);
    }
    let total_truths: usize = images.values().map(|(_, t)| t.len()).sum();
    if total_truths == 0 {
        return Err(Error::Config("evaluation needs at least one ground-truth head top".into()));
    }
    let n_images = images.len() as f64;

    // (score, is_tp) for every detection.
    let mut outcomes: Vec<(f64, bool)> = Vec::with_capacity(dets.len());
    for (img_dets, img_truths) in images.values() {
        let order = score_order(img_dets);
        let hit = greedy_claims(img_dets, &order, img_truths, params);
        outcomes.extend(img_dets.iter().zip(hit).map(|(d, h)| (d.score, h)));
    }
    if outcomes.is_empty() {
        return Ok(EvalCurve { points: vec![CurvePoint { threshold: f64::INFINITY, fppi: 0.0, miss_rate: 1.0 }] });
    }
    outcomes.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut points: Vec<CurvePoint> = Vec::new();
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < outcomes.len() {
        let s = outcomes[i].0;
        while i < outcomes.len() && outcomes[i].0 == s {
            if outcomes[i].1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let p = CurvePoint {
            threshold: s,
            fppi: fp as f64 / n_images,
            miss_rate: (total_truths - tp) as f64 / total_truths as f64,
        };
        let dup = points.last().is_some_and(|q| q.fppi == p.fppi && q.miss_rate == p.miss_rate);
        if !dup {
            points.push(p);
        }
    }
    Ok(EvalCurve { points })
}

/// FPPI values at which the log-average miss rate samples the curve.
pub fn lamr_reference_points() -> [f64; 9] {
    std::array::from_fn(|i| 10f64.powf(-2.0 + 2.0 * i as f64 / 8.0))
}

/// Geometric mean of the miss rate at nine log-spaced FPPI values in
/// `[0.01, 1]`. Each sample takes the highest-FPPI point not beyond it (miss
/// rate 1 if there is none), clamped below at `1e-4`.
pub fn log_average_miss_rate(curve: &EvalCurve) -> Result<f64> {
    if curve.points.is_empty() {
        return Err(Error::Config("log-average miss rate of an empty curve".into()));
    }
    let sum: f64 = lamr_reference_points()
        .iter()
        .map(|&f| {
            let miss = curve.points.iter().rev().find(|p| p.fppi <= f).map_or(1.0, |p| p.miss_rate);
            miss.max(1e-4).ln()
        })
        .sum();
    Ok((sum / 9.0).exp())
}

pub fn curve_to_csv(curve: &EvalCurve) -> String {
    let mut out = String::from("threshold,fppi,miss_rate\n");
    for p in &curve.points {
        let _ = writeln!(out, "{},{},{}", p.threshold, p.fppi, p.miss_rate);
    }
    out
}

pub fn curve_from_csv(text: &str) -> Result<EvalCurve> {
    let mut lines = text.lines();
    if lines.next() != Some("threshold,fppi,miss_rate") {
        return Err(Error::format(0, "missing curve CSV header"));
    }
    let mut points = Vec::new();
    let mut offset = "threshold,fppi,miss_rate\n".len() as u64;
    for line in lines {
        let fields: Vec<&str> = line.split(',').collect();
        let parsed: Option<Vec<f64>> =
            (fields.len() == 3).then(|| fields.iter().map(|f| f.trim().parse().ok()).collect()).flatten();
        let Some(v) = parsed else {
            return Err(Error::format(offset, format!("bad curve row {line:?}")));
        };
        points.push(CurvePoint { threshold: v[0], fppi: v[1], miss_rate: v[2] });
        offset += line.len() as u64 + 1;
    }
    Ok(EvalCurve { points })
}

/// A small standalone chart: log-scaled FPPI on x, miss rate on y.
pub fn curve_to_svg(curve: &EvalCurve) -> String {
    const W: f64 = 480.0;
    const H: f64 = 360.0;
    const PAD: f64 = 48.0;
    let (lo, hi) = (-3.0f64, 1.0f64);
    let x = |fppi: f64| {
        let l = fppi.max(10f64.powf(lo)).log10().clamp(lo, hi);
        PAD + (l - lo) / (hi - lo) * (W - 2.0 * PAD)
    };
    let y = |miss: f64| PAD + (1.0 - miss.clamp(0.0, 1.0)) * (H - 2.0 * PAD);
    let mut svg = String::new();
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">"#);
    let _ = writeln!(svg, r#"<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>"#);
    let _ = writeln!(
        svg,
        r#"<rect x="{PAD}" y="{PAD}" width="{}" height="{}" fill="none" stroke="black"/>"#,
        W - 2.0 * PAD,
        H - 2.0 * PAD
    );
    for e in lo as i32..=hi as i32 {
        let xe = x(10f64.powi(e));
        let _ = writeln!(
            svg,
            r##"<line x1="{xe:.1}" y1="{PAD}" x2="{xe:.1}" y2="{}" stroke="#ccc"/><text x="{xe:.1}" y="{}" font-size="11" text-anchor="middle">1e{e}</text>"##,
            H - PAD,
            H - PAD + 16.0
        );
    }
    for k in 0..=4 {
        let m = k as f64 / 4.0;
        let _ = writeln!(
            svg,
            r#"<text x="{}" y="{:.1}" font-size="11" text-anchor="end">{m:.2}</text>"#,
            PAD - 6.0,
            y(m) + 4.0
        );
    }
    let pts: Vec<String> = curve.points.iter().map(|p| format!("{:.2},{:.2}", x(p.fppi), y(p.miss_rate))).collect();
    let _ = writeln!(svg, r##"<polyline points="{}" fill="none" stroke="#c0392b" stroke-width="2"/>"##, pts.join(" "));
    let _ = writeln!(
        svg,
        r#"<text x="{}" y="{}" font-size="12" text-anchor="middle">false positives per image</text>"#,
        W / 2.0,
        H - 8.0
    );
    let _ = writeln!(
        svg,
        r#"<text x="14" y="{}" font-size="12" transform="rotate(-90 14 {})" text-anchor="middle">miss rate</text>"#,
        H / 2.0,
        H / 2.0
    );
    svg.push_str("</svg>\n");
    svg
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveFormat {
    Csv,
    Svg,
}

pub fn emit_curve(curve: &EvalCurve, path: &Path, format: CurveFormat) -> Result<()> {
    if curve.points.is_empty() {
        return Err(Error::Config("refusing to write an empty curve".into()));
    }
    let body = match format {
        CurveFormat::Csv => curve_to_csv(curve),
        CurveFormat::Svg => curve_to_svg(curve),
    };
    crate::pipeline::write_atomic(path, body.as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(img: &str, u: u32, v: u32, score: f64) -> Detection {
        Detection { image_id: img.into(), u, v, score, depth_mm: None }
    }

    fn gt(img: &str, pts: &[[u32; 2]]) -> GroundTruth {
        GroundTruth { image_id: img.into(), head_tops: pts.to_vec() }
    }

    #[test]
    fn match_examples() {
        let p = MatchParams::default();
        let a = det("a", 100, 100, 0.9);
        assert_eq!(match_image(&[&a], &[[100, 100]], &p), MatchCounts { tp: 1, fp: 0, fn_: 0 });
        let b = det("a", 105, 100, 0.8);
        assert_eq!(match_image(&[&b, &a], &[[100, 100]], &p), MatchCounts { tp: 1, fp: 1, fn_: 0 });
        assert_eq!(match_image(&[], &[[1, 1], [50, 50]], &p), MatchCounts { tp: 0, fp: 0, fn_: 2 });
    }

    #[test]
    fn higher_score_claims_first() {
        let p = MatchParams::default();
        // The weaker detection is closer, but the stronger one picks first.
        let strong = det("a", 110, 100, 0.9);
        let weak = det("a", 101, 100, 0.5);
        let hit = greedy_claims(&[&weak, &strong], &score_order(&[&weak, &strong]), &[[100, 100]], &p);
        assert_eq!(hit, vec![false, true]);
    }

    #[test]
    fn adaptive_radius() {
        let p = MatchParams { radius: 25.0, adaptive: Some(AdaptiveRadius { head_width: 0.25, fx: 525.0 }) };
        let mut d = det("a", 0, 0, 1.0);
        assert_eq!(p.radius_for(&d), 25.0);
        d.depth_mm = Some(2000);
        // 525 * 250 / 2000 = 65.6 -> 66 px head
        assert_eq!(p.radius_for(&d), 33.0);
    }

    #[test]
    fn perfect_detector() {
        let truths = vec![gt("a", &[[10, 10]]), gt("b", &[[50, 60]])];
        let dets = vec![det("a", 10, 10, 1.0), det("b", 50, 60, 1.0)];
        let c = compute_curve(&dets, &truths, &MatchParams::default()).unwrap();
        assert_eq!(c.points, vec![CurvePoint { threshold: 1.0, fppi: 0.0, miss_rate: 0.0 }]);
    }

    #[test]
    fn no_detections() {
        let c = compute_curve(&[], &[gt("a", &[[1, 1]])], &MatchParams::default()).unwrap();
        assert_eq!((c.points[0].fppi, c.points[0].miss_rate), (0.0, 1.0));
        assert_eq!(c.points.len(), 1);
    }

    #[test]
    fn two_image_hand_example() {
        let truths = vec![gt("A", &[[100, 100]]), gt("B", &[[300, 200]])];
        let dets = vec![det("A", 100, 100, 0.9), det("B", 30, 30, 0.8)];
        let c = compute_curve(&dets, &truths, &MatchParams::default()).unwrap();
        // 0.9: A hits, B not yet considered -> FP 0 over 2 images, 1 of 2 missed.
        // 0.8: B's detection is far from its head top -> one FP.
        assert_eq!(
            c.points,
            vec![
                CurvePoint { threshold: 0.9, fppi: 0.0, miss_rate: 0.5 },
                CurvePoint { threshold: 0.8, fppi: 0.5, miss_rate: 0.5 },
            ]
        );
    }

    #[test]
    fn zero_truths_is_an_error() {
        assert!(compute_curve(&[det("a", 1, 1, 0.3)], &[gt("a", &[])], &MatchParams::default()).is_err());
    }

    #[test]
    fn lamr_constant_curves() {
        let flat = |m| EvalCurve { points: vec![CurvePoint { threshold: 0.5, fppi: 0.0, miss_rate: m }] };
        assert!((log_average_miss_rate(&flat(1.0)).unwrap() - 1.0).abs() < 1e-12);
        assert!((log_average_miss_rate(&flat(0.0)).unwrap() - 1e-4).abs() < 1e-16);
        assert!(log_average_miss_rate(&EvalCurve { points: vec![] }).is_err());
    }

    #[test]
    fn lamr_two_point_curve() {
        // Reference FPPIs are 10^(-2 + i/4). The point at 0.05 covers
        // i = 3..5 (0.0562, 0.1, 0.178) and the one at 0.3 covers i = 6..8;
        // i = 0..2 (0.01, 0.0178, 0.0316) precede both and count as misses.
        let c = EvalCurve {
            points: vec![
                CurvePoint { threshold: 0.9, fppi: 0.05, miss_rate: 0.4 },
                CurvePoint { threshold: 0.5, fppi: 0.3, miss_rate: 0.2 },
            ],
        };
        let expect = ((3.0 * 1f64.ln() + 3.0 * 0.4f64.ln() + 3.0 * 0.2f64.ln()) / 9.0).exp();
        assert!((log_average_miss_rate(&c).unwrap() - expect).abs() < 1e-12);
    }

    #[test]
    fn csv_round_trip_and_svg() {
        let c = EvalCurve {
            points: vec![
                CurvePoint { threshold: 0.9731, fppi: 0.0, miss_rate: 0.123456789012345 },
                CurvePoint { threshold: 0.1, fppi: 1.0 / 3.0, miss_rate: 0.0 },
            ],
        };
        assert_eq!(curve_from_csv(&curve_to_csv(&c)).unwrap(), c);
        let inf = EvalCurve { points: vec![CurvePoint { threshold: f64::INFINITY, fppi: 0.0, miss_rate: 1.0 }] };
        assert_eq!(curve_from_csv(&curve_to_csv(&inf)).unwrap(), inf);
        assert!(curve_to_svg(&c).starts_with("<svg"));

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.svg");
        emit_curve(&c, &path, CurveFormat::Svg).unwrap();
        assert!(std::fs::read_to_string(&path).unwrap().starts_with("<svg"));
        assert!(emit_curve(&EvalCurve { points: vec![] }, &path, CurveFormat::Csv).is_err());
    }
}
