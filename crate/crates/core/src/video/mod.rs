//! Video preprocessing: face alignment from five stable landmarks, mouth
//! ROI extraction, crop/flip augmentation, and per-utterance intensity
//! normalization.

mod format;

pub use format::{read_frame_stack, write_frame_stack};

use ndarray::Array3;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::View;
use crate::error::{Error, Result};

/// Fixed pipeline frame rate.
pub const VIDEO_FPS: u32 = 25;

/// A stack of equally sized grayscale frames at 25 fps. Doubles as the ROI
/// sequence type, since ROIs are just smaller frames.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameSequence {
    pub height: usize,
    pub width: usize,
    data: Vec<u8>,
}

impl FrameSequence {
    pub fn new(height: usize, width: usize, n_frames: usize) -> FrameSequence {
        FrameSequence {
            height,
            width,
            data: vec![0; height * width * n_frames],
        }
    }

    pub fn from_frames(height: usize, width: usize, data: Vec<u8>) -> Result<FrameSequence> {
        if height == 0 || width == 0 || data.is_empty() || data.len() % (height * width) != 0 {
            return Err(Error::Parse {
                what: "frame stack dimensions",
                input: format!("{height}x{width}, {} bytes", data.len()),
            });
        }
        Ok(FrameSequence {
            height,
            width,
            data,
        })
    }

    pub fn n_frames(&self) -> usize {
        self.data.len() / (self.height * self.width)
    }

    pub fn frame(&self, t: usize) -> &[u8] {
        let size = self.height * self.width;
        &self.data[t * size..(t + 1) * size]
    }

    pub fn get(&self, t: usize, y: usize, x: usize) -> u8 {
        self.data[(t * self.height + y) * self.width + x]
    }

    pub fn set(&mut self, t: usize, y: usize, x: usize, value: u8) {
        self.data[(t * self.height + y) * self.width + x] = value;
    }

    pub fn bytes(&self) -> &[u8] {
        &self.data
    }

    /// The t-th frame as an owned image.
    pub fn image(&self, t: usize) -> Image {
        Image {
            height: self.height,
            width: self.width,
            data: self.frame(t).to_vec(),
        }
    }

    pub fn push_image(&mut self, image: &Image) -> Result<()> {
        if image.height != self.height || image.width != self.width {
            return Err(Error::FrameDimMismatch {
                got_h: image.height,
                got_w: image.width,
                want_h: self.height,
                want_w: self.width,
            });
        }
        self.data.extend_from_slice(&image.data);
        Ok(())
    }

    /// An empty stack frames can be pushed onto.
    pub fn empty(height: usize, width: usize) -> FrameSequence {
        FrameSequence {
            height,
            width,
            data: Vec::new(),
        }
    }
}

/// One grayscale image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    pub height: usize,
    pub width: usize,
    pub data: Vec<u8>,
}

impl Image {
    pub fn new(height: usize, width: usize) -> Image {
        Image {
            height,
            width,
            data: vec![0; height * width],
        }
    }

    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, y: usize, x: usize, value: u8) {
        self.data[y * self.width + x] = value;
    }

    /// Bilinear sample at real coordinates, zero outside the frame.
    fn sample(&self, x: f64, y: f64) -> f64 {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let mut acc = 0.0;
        for (dy, wy) in [(0.0, 1.0 - fy), (1.0, fy)] {
            for (dx, wx) in [(0.0, 1.0 - fx), (1.0, fx)] {
                let xi = x0 + dx;
                let yi = y0 + dy;
                let v = if xi >= 0.0
                    && yi >= 0.0
                    && (xi as usize) < self.width
                    && (yi as usize) < self.height
                {
                    self.data[yi as usize * self.width + xi as usize] as f64
                } else {
                    0.0
                };
                acc += wx * wy * v;
            }
        }
        acc
    }
}

/// 2D pixel position; `x` is the column, `y` the row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Point {
        Point { x, y }
    }
}

/// Named facial landmarks: the five stable alignment points (four eye
/// corners and the nose tip) plus mouth-contour points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LandmarkSet {
    pub eye_outer_left: Point,
    pub eye_inner_left: Point,
    pub eye_inner_right: Point,
    pub eye_outer_right: Point,
    pub nose_tip: Point,
    pub mouth: Vec<Point>,
}

impl LandmarkSet {
    pub fn stable_points(&self) -> [Point; 5] {
        [
            self.eye_outer_left,
            self.eye_inner_left,
            self.eye_inner_right,
            self.eye_outer_right,
            self.nose_tip,
        ]
    }

    /// Centroid of the mouth-contour points.
    pub fn mouth_center(&self) -> Point {
        let n = self.mouth.len().max(1) as f64;
        let x = self.mouth.iter().map(|p| p.x).sum::<f64>() / n;
        let y = self.mouth.iter().map(|p| p.y).sum::<f64>() / n;
        Point { x, y }
    }

    pub fn validate(&self, height: usize, width: usize) -> Result<()> {
        if self.mouth.is_empty() {
            return Err(Error::Parse {
                what: "landmark set mouth contour",
                input: "empty".to_string(),
            });
        }
        let inside = |p: &Point| {
            p.x >= 0.0 && p.y >= 0.0 && p.x < width as f64 && p.y < height as f64
        };
        for p in self.stable_points().iter().chain(self.mouth.iter()) {
            if !inside(p) {
                return Err(Error::Parse {
                    what: "landmark outside frame bounds",
                    input: format!("({}, {}) in {width}x{height}", p.x, p.y),
                });
            }
        }
        Ok(())
    }

    #[cfg(test)]
    fn map(&self, f: impl Fn(Point) -> Point) -> LandmarkSet {
        LandmarkSet {
            eye_outer_left: f(self.eye_outer_left),
            eye_inner_left: f(self.eye_inner_left),
            eye_inner_right: f(self.eye_inner_right),
            eye_outer_right: f(self.eye_outer_right),
            nose_tip: f(self.nose_tip),
            mouth: self.mouth.iter().map(|&p| f(p)).collect(),
        }
    }
}

/// The canonical face layout fixtures draw and alignment targets, scaled to
/// the frame size.
pub fn synthetic_face_layout(height: usize, width: usize) -> LandmarkSet {
    let h = height as f64;
    let w = width as f64;
    let eye_y = 0.375 * h;
    let mouth = Point::new(0.50 * w, 0.75 * h);
    LandmarkSet {
        eye_outer_left: Point::new(0.30 * w, eye_y),
        eye_inner_left: Point::new(0.42 * w, eye_y),
        eye_inner_right: Point::new(0.58 * w, eye_y),
        eye_outer_right: Point::new(0.70 * w, eye_y),
        nose_tip: Point::new(0.50 * w, 0.5625 * h),
        mouth: vec![
            Point::new(mouth.x - 6.0, mouth.y),
            Point::new(mouth.x + 6.0, mouth.y),
            Point::new(mouth.x, mouth.y - 3.0),
            Point::new(mouth.x, mouth.y + 3.0),
        ],
    }
}

/// Per-frame landmark acquisition. Implementations must be pure per frame
/// so utterances can be processed concurrently; real detectors plug in
/// here, tests use the synthetic layout.
pub trait LandmarkProvider {
    fn landmarks(&self, frame: &Image) -> Result<LandmarkSet>;
}

/// Provider for fixture corpora, whose faces follow the canonical layout.
pub struct SyntheticLandmarkProvider;

impl LandmarkProvider for SyntheticLandmarkProvider {
    fn landmarks(&self, frame: &Image) -> Result<LandmarkSet> {
        Ok(synthetic_face_layout(frame.height, frame.width))
    }
}

/// 2D affine transform `(x, y) -> (a·x + b·y + c, d·x + e·y + f)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Affine {
    pub coeffs: [f64; 6],
}

impl Affine {
    pub fn identity() -> Affine {
        Affine {
            coeffs: [1.0, 0.0, 0.0, 0.0, 1.0, 0.0],
        }
    }

    pub fn apply(&self, p: Point) -> Point {
        let [a, b, c, d, e, f] = self.coeffs;
        Point {
            x: a * p.x + b * p.y + c,
            y: d * p.x + e * p.y + f,
        }
    }

    /// Determinant of the linear part; its square root is the isotropic
    /// scale factor for similarity transforms.
    pub fn determinant(&self) -> f64 {
        let [a, b, _, d, e, _] = self.coeffs;
        a * e - b * d
    }

    pub fn scale(&self) -> f64 {
        self.determinant().abs().sqrt()
    }
}

/// Least-squares affine mapping `from[i]` onto `to[i]`. Errors when the
/// source points are collinear, which leaves the transform underdetermined.
pub fn estimate_affine(from: &[Point], to: &[Point]) -> Result<Affine> {
    assert_eq!(from.len(), to.len());
    assert!(from.len() >= 3);
    // Normal equations with the 3x3 Gram matrix of [x, y, 1] vectors; the
    // x and y target rows share it.
    let mut g = [[0.0f64; 3]; 3];
    let mut rx = [0.0f64; 3];
    let mut ry = [0.0f64; 3];
    for (p, q) in from.iter().zip(to) {
        let v = [p.x, p.y, 1.0];
        for i in 0..3 {
            for j in 0..3 {
                g[i][j] += v[i] * v[j];
            }
            rx[i] += v[i] * q.x;
            ry[i] += v[i] * q.y;
        }
    }
    let sx = solve3(g, rx);
    let sy = solve3(g, ry);
    match (sx, sy) {
        (Some([a, b, c]), Some([d, e, f])) => Ok(Affine {
            coeffs: [a, b, c, d, e, f],
        }),
        _ => Err(Error::DegenerateLandmarks(format!(
            "{} source points span no area",
            from.len()
        ))),
    }
}

/// Gaussian elimination with partial pivoting; `None` on a singular system.
fn solve3(mut m: [[f64; 3]; 3], mut rhs: [f64; 3]) -> Option<[f64; 3]> {
    let scale = m
        .iter()
        .flatten()
        .fold(0.0f64, |acc, v| acc.max(v.abs()))
        .max(1e-30);
    for col in 0..3 {
        let pivot = (col..3)
            .max_by(|&a, &b| m[a][col].abs().partial_cmp(&m[b][col].abs()).unwrap())
            .unwrap();
        if m[pivot][col].abs() < 1e-9 * scale {
            return None;
        }
        m.swap(col, pivot);
        rhs.swap(col, pivot);
        for row in col + 1..3 {
            let factor = m[row][col] / m[col][col];
            for k in col..3 {
                m[row][k] -= factor * m[col][k];
            }
            rhs[row] -= factor * rhs[col];
        }
    }
    let mut out = [0.0f64; 3];
    for col in (0..3).rev() {
        let mut acc = rhs[col];
        for k in col + 1..3 {
            acc -= m[col][k] * out[k];
        }
        out[col] = acc / m[col][col];
    }
    Some(out)
}

/// Warps a frame so its stable landmarks land on the reference layout.
/// Sampling uses the inverse map (reference onto input) with bilinear
/// interpolation and zero padding.
pub fn align_face(
    frame: &Image,
    landmarks: &LandmarkSet,
    reference: &LandmarkSet,
) -> Result<Image> {
    let sample_map = estimate_affine(&reference.stable_points(), &landmarks.stable_points())?;
    let mut out = Image::new(frame.height, frame.width);
    for y in 0..frame.height {
        for x in 0..frame.width {
            let src = sample_map.apply(Point::new(x as f64, y as f64));
            let v = frame.sample(src.x, src.y).round().clamp(0.0, 255.0);
            out.set(y, x, v as u8);
        }
    }
    Ok(out)
}

/// View-dependent ROI geometry: the extraction box and the (strictly
/// smaller) final crop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoiSpec {
    pub view: View,
    pub box_w: usize,
    pub box_h: usize,
    pub crop_w: usize,
    pub crop_h: usize,
}

impl RoiSpec {
    pub fn new(
        view: View,
        box_w: usize,
        box_h: usize,
        crop_w: usize,
        crop_h: usize,
    ) -> Result<RoiSpec> {
        if crop_w >= box_w || crop_h >= box_h || crop_w == 0 || crop_h == 0 {
            return Err(Error::InvalidRoiSpec {
                box_w,
                box_h,
                crop_w,
                crop_h,
            });
        }
        Ok(RoiSpec {
            view,
            box_w,
            box_h,
            crop_w,
            crop_h,
        })
    }

    /// Full-scale frontal geometry: 140x200 box, 130x190 crop.
    pub fn frontal() -> RoiSpec {
        RoiSpec::new(View::Frontal, 140, 200, 130, 190).expect("static dims are valid")
    }

    /// Full-scale profile geometry: 80x60 box, 75x55 crop.
    pub fn profile() -> RoiSpec {
        RoiSpec::new(View::Profile, 80, 60, 75, 55).expect("static dims are valid")
    }

    /// Desk-scale geometry matching the fixture corpus: 40x32 box, 36x28
    /// crop around the fixture mouth.
    pub fn fixture() -> RoiSpec {
        RoiSpec::new(View::Frontal, 40, 32, 36, 28).expect("static dims are valid")
    }

    pub fn for_view(view: View) -> RoiSpec {
        match view {
            View::Frontal => RoiSpec::frontal(),
            View::Profile => RoiSpec::profile(),
        }
    }
}

/// Cuts the spec-sized box centered on the mouth centroid; pixels outside
/// the frame are zero.
pub fn extract_mouth_roi(frame: &Image, landmarks: &LandmarkSet, spec: &RoiSpec) -> Image {
    let center = landmarks.mouth_center();
    let x0 = (center.x - (spec.box_w as f64 - 1.0) / 2.0).round() as isize;
    let y0 = (center.y - (spec.box_h as f64 - 1.0) / 2.0).round() as isize;
    let mut out = Image::new(spec.box_h, spec.box_w);
    for y in 0..spec.box_h {
        for x in 0..spec.box_w {
            let sy = y0 + y as isize;
            let sx = x0 + x as isize;
            if sy >= 0 && sx >= 0 && (sy as usize) < frame.height && (sx as usize) < frame.width {
                out.set(y, x, frame.get(sy as usize, sx as usize));
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AugmentMode {
    Train,
    Test,
}

/// Crops box-sized ROIs down to crop size: one random offset per utterance
/// plus a whole-sequence horizontal flip with probability one half in train
/// mode, the deterministic center patch in test mode.
pub fn augment_rois(
    seq: &FrameSequence,
    spec: &RoiSpec,
    mode: AugmentMode,
    rng: &mut impl Rng,
) -> Result<FrameSequence> {
    if seq.height != spec.box_h || seq.width != spec.box_w {
        return Err(Error::FrameDimMismatch {
            got_h: seq.height,
            got_w: seq.width,
            want_h: spec.box_h,
            want_w: spec.box_w,
        });
    }
    let max_dx = spec.box_w - spec.crop_w;
    let max_dy = spec.box_h - spec.crop_h;
    let (dx, dy, flip) = match mode {
        AugmentMode::Train => (
            rng.gen_range(0..=max_dx),
            rng.gen_range(0..=max_dy),
            rng.gen_bool(0.5),
        ),
        AugmentMode::Test => (max_dx / 2, max_dy / 2, false),
    };

    let mut out = FrameSequence::new(spec.crop_h, spec.crop_w, seq.n_frames());
    for t in 0..seq.n_frames() {
        for y in 0..spec.crop_h {
            for x in 0..spec.crop_w {
                let sx = if flip {
                    dx + (spec.crop_w - 1 - x)
                } else {
                    dx + x
                };
                out.set(t, y, x, seq.get(t, y + dy, sx));
            }
        }
    }
    Ok(out)
}

/// Per-utterance zero-mean unit-variance intensities as a (T, H, W) array.
/// A constant sequence has no contrast to preserve and comes back all zero.
pub fn normalize_sequence(seq: &FrameSequence) -> Array3<f64> {
    let t = seq.n_frames();
    let n = seq.bytes().len() as f64;
    let mean = seq.bytes().iter().map(|&v| v as f64).sum::<f64>() / n;
    let var = seq
        .bytes()
        .iter()
        .map(|&v| (v as f64 - mean).powi(2))
        .sum::<f64>()
        / n;
    let std = var.sqrt();
    let denom = if std < 1e-12 { 1.0 } else { std };
    let mut out = Array3::zeros((t, seq.height, seq.width));
    for ti in 0..t {
        let frame = seq.frame(ti);
        for y in 0..seq.height {
            for x in 0..seq.width {
                out[[ti, y, x]] = (frame[y * seq.width + x] as f64 - mean) / denom;
            }
        }
    }
    out
}

/// Median-filters each landmark coordinate over time with an odd window,
/// shrinking the window near sequence edges.
pub fn smooth_landmarks(tracks: &[LandmarkSet], width: usize) -> Vec<LandmarkSet> {
    assert!(width % 2 == 1, "median window must be odd");
    if tracks.len() <= 1 || width == 1 {
        return tracks.to_vec();
    }
    let half = width / 2;
    let median_at = |t: usize, pick: &dyn Fn(&LandmarkSet) -> f64| -> f64 {
        let lo = t.saturating_sub(half);
        let hi = (t + half).min(tracks.len() - 1);
        let mut vals: Vec<f64> = (lo..=hi).map(|i| pick(&tracks[i])).collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        vals[vals.len() / 2]
    };
    (0..tracks.len())
        .map(|t| {
            let template = &tracks[t];
            let n_mouth = template.mouth.len();
            let smooth_point = |getter: Box<dyn Fn(&LandmarkSet) -> Point>| -> Point {
                Point {
                    x: median_at(t, &|l| getter(l).x),
                    y: median_at(t, &|l| getter(l).y),
                }
            };
            LandmarkSet {
                eye_outer_left: smooth_point(Box::new(|l| l.eye_outer_left)),
                eye_inner_left: smooth_point(Box::new(|l| l.eye_inner_left)),
                eye_inner_right: smooth_point(Box::new(|l| l.eye_inner_right)),
                eye_outer_right: smooth_point(Box::new(|l| l.eye_outer_right)),
                nose_tip: smooth_point(Box::new(|l| l.nose_tip)),
                mouth: (0..n_mouth)
                    .map(|i| smooth_point(Box::new(move |l| l.mouth[i])))
                    .collect(),
            }
        })
        .collect()
}

/// Landmark smoothing window applied by the standard pipeline.
pub const LANDMARK_SMOOTHING_WIDTH: usize = 5;

/// Deterministic front half of the visual pipeline: per-frame landmarks,
/// median smoothing, alignment to the canonical layout and mouth ROI
/// extraction at box size. The output is augmentation-ready and safe to
/// cache per utterance.
pub fn mouth_roi_track(
    seq: &FrameSequence,
    provider: &dyn LandmarkProvider,
    spec: &RoiSpec,
) -> Result<FrameSequence> {
    let reference = synthetic_face_layout(seq.height, seq.width);
    let mut tracks = Vec::with_capacity(seq.n_frames());
    for t in 0..seq.n_frames() {
        let frame = seq.image(t);
        let landmarks = provider.landmarks(&frame)?;
        landmarks.validate(seq.height, seq.width)?;
        tracks.push(landmarks);
    }
    let tracks = smooth_landmarks(&tracks, LANDMARK_SMOOTHING_WIDTH);

    let mut rois = FrameSequence::empty(spec.box_h, spec.box_w);
    for t in 0..seq.n_frames() {
        let frame = seq.image(t);
        let aligned = align_face(&frame, &tracks[t], &reference)?;
        // After alignment the face sits at the reference layout, so the ROI
        // centers on the reference mouth.
        let roi = extract_mouth_roi(&aligned, &reference, spec);
        rois.push_image(&roi)?;
    }
    Ok(rois)
}

/// Full visual front end for one utterance: per-frame landmarks, median
/// smoothing, alignment to the canonical layout, mouth ROI extraction,
/// crop/flip augmentation, then intensity normalization.
pub fn preprocess_video(
    seq: &FrameSequence,
    provider: &dyn LandmarkProvider,
    spec: &RoiSpec,
    mode: AugmentMode,
    rng: &mut impl Rng,
) -> Result<Array3<f64>> {
    let rois = mouth_roi_track(seq, provider, spec)?;
    let cropped = augment_rois(&rois, spec, mode, rng)?;
    Ok(normalize_sequence(&cropped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn gradient_image(h: usize, w: usize) -> Image {
        let mut img = Image::new(h, w);
        for y in 0..h {
            for x in 0..w {
                img.set(y, x, ((x * 2 + y * 3) % 256) as u8);
            }
        }
        img
    }

    #[test]
    fn identity_alignment_leaves_frame_unchanged() {
        let img = gradient_image(80, 100);
        let layout = synthetic_face_layout(80, 100);
        let aligned = align_face(&img, &layout, &layout).unwrap();
        assert_eq!(aligned, img);
    }

    #[test]
    fn estimated_transform_inverts_known_scaling() {
        let reference = synthetic_face_layout(80, 100);
        // Input face uniformly scaled 2x relative to the reference.
        let scaled = reference.map(|p| Point::new(2.0 * p.x, 2.0 * p.y));
        let recovered =
            estimate_affine(&scaled.stable_points(), &reference.stable_points()).unwrap();
        assert!((recovered.scale() - 0.5).abs() < 1e-6);
        assert!((recovered.coeffs[0] - 0.5).abs() < 1e-6);
        assert!((recovered.coeffs[4] - 0.5).abs() < 1e-6);
    }

    #[test]
    fn affine_recovery_on_rotation_translation() {
        let reference = synthetic_face_layout(80, 100);
        let angle = 0.3f64;
        let (s, c) = angle.sin_cos();
        let moved = reference.map(|p| {
            Point::new(c * p.x - s * p.y + 7.0, s * p.x + c * p.y - 4.0)
        });
        let forward = estimate_affine(&reference.stable_points(), &moved.stable_points()).unwrap();
        for (p, q) in reference
            .stable_points()
            .iter()
            .zip(moved.stable_points().iter())
        {
            let mapped = forward.apply(*p);
            assert!((mapped.x - q.x).abs() < 1e-9);
            assert!((mapped.y - q.y).abs() < 1e-9);
        }
    }

    #[test]
    fn collinear_points_are_degenerate() {
        let from: Vec<Point> = (0..5).map(|i| Point::new(i as f64, 2.0 * i as f64)).collect();
        let to: Vec<Point> = (0..5).map(|i| Point::new(i as f64, 0.0)).collect();
        assert!(matches!(
            estimate_affine(&from, &to),
            Err(Error::DegenerateLandmarks(_))
        ));
    }

    #[test]
    fn roi_has_spec_dimensions() {
        let img = gradient_image(400, 400);
        let mut landmarks = synthetic_face_layout(400, 400);
        landmarks.mouth = vec![Point::new(200.0, 300.0)];
        let spec = RoiSpec::frontal();
        let roi = extract_mouth_roi(&img, &landmarks, &spec);
        assert_eq!(roi.height, 200);
        assert_eq!(roi.width, 140);
    }

    #[test]
    fn roi_centers_bright_rectangle() {
        let mut img = Image::new(200, 200);
        for y in 95..105 {
            for x in 90..110 {
                img.set(y, x, 255);
            }
        }
        let mut landmarks = synthetic_face_layout(200, 200);
        landmarks.mouth = vec![Point::new(99.5, 99.5)];
        let spec = RoiSpec::new(View::Frontal, 60, 50, 50, 40).unwrap();
        let roi = extract_mouth_roi(&img, &landmarks, &spec);
        // The rectangle straddles the ROI center.
        let cy = spec.box_h / 2;
        let cx = spec.box_w / 2;
        assert_eq!(roi.get(cy, cx), 255);
        assert_eq!(roi.get(cy - 6, cx), 0);
        // Symmetric coverage around the center row.
        let top = (0..spec.box_h).position(|y| roi.get(y, cx) == 255).unwrap();
        let bottom = (0..spec.box_h).rposition(|y| roi.get(y, cx) == 255).unwrap();
        assert_eq!(top + (spec.box_h - 1 - bottom), spec.box_h - 1 - 9);
    }

    #[test]
    fn roi_zero_pads_at_corners() {
        let img = gradient_image(100, 100);
        let mut landmarks = synthetic_face_layout(100, 100);
        landmarks.mouth = vec![Point::new(0.0, 0.0)];
        let spec = RoiSpec::new(View::Frontal, 40, 30, 36, 26).unwrap();
        let roi = extract_mouth_roi(&img, &landmarks, &spec);
        assert_eq!(roi.height, 30);
        assert_eq!(roi.width, 40);
        assert_eq!(roi.get(0, 0), 0);
        // Bottom-right quadrant holds real pixels.
        assert_eq!(
            roi.get(spec.box_h - 1, spec.box_w - 1),
            img.get(spec.box_h / 2 - 1, spec.box_w / 2 - 1)
        );
    }

    fn roi_stack(spec: &RoiSpec, n: usize) -> FrameSequence {
        let mut seq = FrameSequence::new(spec.box_h, spec.box_w, n);
        for t in 0..n {
            for y in 0..spec.box_h {
                for x in 0..spec.box_w {
                    seq.set(t, y, x, ((t * 31 + y * 7 + x * 13) % 256) as u8);
                }
            }
        }
        seq
    }

    #[test]
    fn test_mode_center_crop_is_deterministic() {
        let spec = RoiSpec::frontal();
        let seq = roi_stack(&spec, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = augment_rois(&seq, &spec, AugmentMode::Test, &mut rng).unwrap();
        let b = augment_rois(&seq, &spec, AugmentMode::Test, &mut rng).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.height, 190);
        assert_eq!(a.width, 130);
        // Center patch: offset (5, 5).
        assert_eq!(a.get(0, 0, 0), seq.get(0, 5, 5));
    }

    #[test]
    fn train_mode_offsets_stay_in_range_and_are_shared() {
        let spec = RoiSpec::frontal();
        let seq = roi_stack(&spec, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let out = augment_rois(&seq, &spec, AugmentMode::Train, &mut rng).unwrap();
            assert_eq!(out.height, 190);
            assert_eq!(out.width, 130);
            // Recover the offset from frame 0, then check frames agree.
            let mut found = None;
            'outer: for dy in 0..=10usize {
                for dx in 0..=10usize {
                    let direct = (0..20).all(|i| {
                        out.get(0, i, i) == seq.get(0, dy + i, dx + i)
                    });
                    let flipped = (0..20).all(|i| {
                        out.get(0, i, i) == seq.get(0, dy + i, dx + (spec.crop_w - 1 - i))
                    });
                    if direct || flipped {
                        found = Some((dy, dx, flipped));
                        break 'outer;
                    }
                }
            }
            let (dy, dx, flipped) = found.expect("crop offset must be within [0,10]^2");
            for t in 0..seq.n_frames() {
                for (y, x) in [(0usize, 0usize), (100, 60), (189, 129)] {
                    let sx = if flipped {
                        dx + (spec.crop_w - 1 - x)
                    } else {
                        dx + x
                    };
                    assert_eq!(out.get(t, y, x), seq.get(t, y + dy, sx));
                }
            }
        }
    }

    #[test]
    fn flip_rate_is_about_half() {
        let spec = RoiSpec::fixture();
        let seq = roi_stack(&spec, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut flips = 0usize;
        let n = 10_000;
        for _ in 0..n {
            let out = augment_rois(&seq, &spec, AugmentMode::Train, &mut rng).unwrap();
            // A flip reverses the row direction: detect via a probe row
            // compared under both hypotheses at the recovered offset.
            let mut is_flip = None;
            'outer: for dy in 0..=(spec.box_h - spec.crop_h) {
                for dx in 0..=(spec.box_w - spec.crop_w) {
                    let direct = (0..spec.crop_w)
                        .all(|x| out.get(0, 0, x) == seq.get(0, dy, dx + x));
                    if direct {
                        is_flip = Some(false);
                        break 'outer;
                    }
                    let flipped = (0..spec.crop_w).all(|x| {
                        out.get(0, 0, x) == seq.get(0, dy, dx + (spec.crop_w - 1 - x))
                    });
                    if flipped {
                        is_flip = Some(true);
                        break 'outer;
                    }
                }
            }
            if is_flip.expect("output must be some crop of the input") {
                flips += 1;
            }
        }
        let rate = flips as f64 / n as f64;
        assert!((rate - 0.5).abs() < 0.02, "flip rate {rate}");
    }

    #[test]
    fn double_flip_restores_sequence() {
        let spec = RoiSpec::fixture();
        let seq = roi_stack(&spec, 2);
        let flip = |s: &FrameSequence| -> FrameSequence {
            let mut out = FrameSequence::new(s.height, s.width, s.n_frames());
            for t in 0..s.n_frames() {
                for y in 0..s.height {
                    for x in 0..s.width {
                        out.set(t, y, x, s.get(t, y, s.width - 1 - x));
                    }
                }
            }
            out
        };
        assert_eq!(flip(&flip(&seq)), seq);
    }

    #[test]
    fn augment_rejects_wrong_dims() {
        let spec = RoiSpec::frontal();
        let seq = FrameSequence::new(100, 100, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            augment_rois(&seq, &spec, AugmentMode::Test, &mut rng),
            Err(Error::FrameDimMismatch { .. })
        ));
    }

    #[test]
    fn roi_spec_validation() {
        assert!(RoiSpec::new(View::Frontal, 100, 100, 100, 90).is_err());
        assert!(RoiSpec::new(View::Frontal, 100, 100, 90, 100).is_err());
        assert!(RoiSpec::new(View::Frontal, 100, 100, 90, 90).is_ok());
        let frontal = RoiSpec::frontal();
        assert_eq!((frontal.box_w, frontal.box_h), (140, 200));
        assert_eq!((frontal.crop_w, frontal.crop_h), (130, 190));
        let profile = RoiSpec::profile();
        assert_eq!((profile.box_w, profile.box_h), (80, 60));
        assert_eq!((profile.crop_w, profile.crop_h), (75, 55));
    }

    #[test]
    fn normalization_is_zero_mean_unit_variance() {
        let spec = RoiSpec::fixture();
        let seq = roi_stack(&spec, 3);
        let normed = normalize_sequence(&seq);
        let n = normed.len() as f64;
        let mean = normed.iter().sum::<f64>() / n;
        let var = normed.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        assert!(mean.abs() < 1e-9);
        assert!((var - 1.0).abs() < 1e-9);

        let flat = FrameSequence::new(10, 10, 2);
        let normed = normalize_sequence(&flat);
        assert!(normed.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn median_smoothing_removes_spikes() {
        let base = synthetic_face_layout(80, 100);
        let mut tracks: Vec<LandmarkSet> = (0..9).map(|_| base.clone()).collect();
        tracks[4].nose_tip = Point::new(90.0, 5.0);
        let smoothed = smooth_landmarks(&tracks, 5);
        assert_eq!(smoothed[4].nose_tip, base.nose_tip);
        // Other frames untouched.
        assert_eq!(smoothed[0], base);
        assert_eq!(smoothed[8], base);
    }

    #[test]
    fn preprocess_video_shapes_and_determinism() {
        let mut seq = FrameSequence::new(80, 100, 6);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for t in 0..6 {
            for y in 0..80 {
                for x in 0..100 {
                    seq.set(t, y, x, rng.gen());
                }
            }
        }
        let spec = RoiSpec::fixture();
        let a = preprocess_video(
            &seq,
            &SyntheticLandmarkProvider,
            &spec,
            AugmentMode::Test,
            &mut ChaCha8Rng::seed_from_u64(0),
        )
        .unwrap();
        let b = preprocess_video(
            &seq,
            &SyntheticLandmarkProvider,
            &spec,
            AugmentMode::Test,
            &mut ChaCha8Rng::seed_from_u64(99),
        )
        .unwrap();
        assert_eq!(a.shape(), &[6, 28, 36]);
        assert_eq!(a, b, "test mode ignores the RNG");
    }
}
