//! Crop filtering, perspective rectification and model-input construction.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::image::{GrayImage, RgbImage};
use crate::math;
use crate::tensor::Tensor;

/// Side length the network sees by default.
pub const MODEL_INPUT_SIZE: usize = 256;

const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PreprocError {
    #[error("degenerate quadrilateral (area {area:.3} px^2)")]
    DegenerateQuad { area: f64 },
    #[error("quadrilateral edges intersect")]
    SelfIntersecting,
    #[error("invalid model input: {0}")]
    InvalidInput(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    fn dist(self, o: Point) -> f64 {
        math::hypot(self.x - o.x, self.y - o.y)
    }
}

/// Four corners in reading order: top-left, top-right, bottom-right, bottom-left.
///
/// Coordinates are continuous image coordinates in which pixel `(i, j)`
/// covers `[i, i+1) × [j, j+1)`.
pub type Quad = [Point; 4];

/// One detected text region.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCrop {
    /// Pixels the quad refers to (the source image or a region of it).
    pub pixels: RgbImage,
    pub quad: Quad,
    pub ocr_confidence: Option<f64>,
    pub source_image_id: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FilterConfig {
    pub conf_threshold: f64,
    pub min_height: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig { conf_threshold: 0.2, min_height: 20.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscardReason {
    LowConfidence,
    TooSmall,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "decision", content = "reason")]
pub enum FilterDecision {
    Keep,
    Discard(DiscardReason),
}

/// Drops crops whose OCR confidence is below the threshold or whose
/// rectified height is below the minimum. Confidence is checked first.
pub fn filter_crop(crop: &RawCrop, config: &FilterConfig) -> FilterDecision {
    if let Some(c) = crop.ocr_confidence {
        if c < config.conf_threshold {
            return FilterDecision::Discard(DiscardReason::LowConfidence);
        }
    }
    let (_, h) = rectified_size(&crop.quad);
    if (h as f64) < config.min_height {
        return FilterDecision::Discard(DiscardReason::TooSmall);
    }
    FilterDecision::Keep
}

/// Shoelace area of the quad.
pub fn quad_area(q: &Quad) -> f64 {
    let mut s = 0.0;
    for i in 0..4 {
        let (a, b) = (q[i], q[(i + 1) % 4]);
        s += a.x * b.y - b.x * a.y;
    }
    (s / 2.0).abs()
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)
}

fn segments_cross(a: Point, b: Point, c: Point, d: Point) -> bool {
    let (d1, d2) = (orient(a, b, c), orient(a, b, d));
    let (d3, d4) = (orient(c, d, a), orient(c, d, b));
    d1 * d2 < 0.0 && d3 * d4 < 0.0
}

/// `(width, height)` of the rectified crop: the mean lengths of the
/// horizontal and vertical edge pairs, rounded up, at least 1.
pub fn rectified_size(q: &Quad) -> (usize, usize) {
    let w = (q[0].dist(q[1]) + q[3].dist(q[2])) / 2.0;
    let h = (q[0].dist(q[3]) + q[1].dist(q[2])) / 2.0;
    // Tolerate float noise so an exact 40.0 does not round up to 41.
    let up = |v: f64| (math::ceil(v - 1e-9).max(1.0)) as usize;
    (up(w), up(h))
}

/// Projective map stored row-major with the last entry fixed at 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Homography([f64; 9]);

impl Homography {
    /// Map taking each `from[i]` to `to[i]`; `None` when the points are degenerate.
    pub fn from_correspondences(from: &[Point; 4], to: &[Point; 4]) -> Option<Self> {
        // Rows of A·h = b for h = (h11..h32), h33 = 1.
        let mut a = [[0.0f64; 9]; 8];
        for i in 0..4 {
            let (x, y) = (from[i].x, from[i].y);
            let (u, v) = (to[i].x, to[i].y);
            a[2 * i] = [x, y, 1.0, 0.0, 0.0, 0.0, -u * x, -u * y, u];
            a[2 * i + 1] = [0.0, 0.0, 0.0, x, y, 1.0, -v * x, -v * y, v];
        }
        let h = solve8(a)?;
        Some(Homography([h[0], h[1], h[2], h[3], h[4], h[5], h[6], h[7], 1.0]))
    }

    pub fn apply(&self, p: Point) -> Point {
        let m = &self.0;
        let w = m[6] * p.x + m[7] * p.y + m[8];
        Point::new((m[0] * p.x + m[1] * p.y + m[2]) / w, (m[3] * p.x + m[4] * p.y + m[5]) / w)
    }
}

/// Gaussian elimination with partial pivoting on an 8×8 augmented system.
fn solve8(mut a: [[f64; 9]; 8]) -> Option<[f64; 8]> {
    for col in 0..8 {
        let piv = (col..8).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        for row in 0..8 {
            if row != col {
                let f = a[row][col] / a[col][col];
                if f != 0.0 {
                    for k in col..9 {
                        a[row][k] -= f * a[col][k];
                    }
                }
            }
        }
    }
    let mut x = [0.0; 8];
    for i in 0..8 {
        x[i] = a[i][8] / a[i][i];
    }
    Some(x)
}

fn bilinear_rgb(img: &RgbImage, x: f64, y: f64) -> [f64; 3] {
    let (w, h) = (img.width() as isize, img.height() as isize);
    let x0f = math::floor(x);
    let y0f = math::floor(y);
    let (fx, fy) = (x - x0f, y - y0f);
    let (x0, y0) = (x0f as isize, y0f as isize);
    let px = |xx: isize, yy: isize| img.pixel(xx.clamp(0, w - 1) as usize, yy.clamp(0, h - 1) as usize);
    let (p00, p10, p01, p11) = (px(x0, y0), px(x0 + 1, y0), px(x0, y0 + 1), px(x0 + 1, y0 + 1));
    let mut out = [0.0; 3];
    for c in 0..3 {
        let top = p00[c] as f64 * (1.0 - fx) + p10[c] as f64 * fx;
        let bot = p01[c] as f64 * (1.0 - fx) + p11[c] as f64 * fx;
        out[c] = top * (1.0 - fy) + bot * fy;
    }
    out
}

/// Warps the quad to an axis-aligned image with bilinear sampling.
pub fn rectify(crop: &RawCrop) -> Result<RgbImage, PreprocError> {
    let q = &crop.quad;
    let area = quad_area(q);
    if !(area >= 1.0) {
        return Err(PreprocError::DegenerateQuad { area });
    }
    if segments_cross(q[0], q[1], q[2], q[3]) || segments_cross(q[1], q[2], q[3], q[0]) {
        return Err(PreprocError::SelfIntersecting);
    }
    let (w, h) = rectified_size(q);
    let rect = [
        Point::new(0.0, 0.0),
        Point::new(w as f64, 0.0),
        Point::new(w as f64, h as f64),
        Point::new(0.0, h as f64),
    ];
    let to_src = Homography::from_correspondences(&rect, q).ok_or(PreprocError::DegenerateQuad { area })?;
    let mut out = RgbImage::filled(w, h, [0, 0, 0]);
    for j in 0..h {
        for i in 0..w {
            let s = to_src.apply(Point::new(i as f64 + 0.5, j as f64 + 0.5));
            let v = bilinear_rgb(&crop.pixels, s.x - 0.5, s.y - 0.5);
            out.put_pixel(i, j, v.map(|c| math::round(c).clamp(0.0, 255.0) as u8));
        }
    }
    Ok(out)
}

/// `(0.299 R + 0.587 G + 0.114 B) / 255`.
pub fn grayscale(image: &RgbImage) -> GrayImage {
    let mut g = GrayImage::new(image.width(), image.height());
    for (dst, px) in g.data.iter_mut().zip(image.data().chunks_exact(3)) {
        *dst = (LUMA[0] * px[0] as f64 + LUMA[1] * px[1] as f64 + LUMA[2] * px[2] as f64) / 255.0;
    }
    g
}

/// Bilinear resize with pixel centres aligned and replicated borders.
pub fn resize_bilinear(src: &GrayImage, width: usize, height: usize) -> GrayImage {
    let mut out = GrayImage::new(width, height);
    let sx = src.width as f64 / width as f64;
    let sy = src.height as f64 / height as f64;
    for j in 0..height {
        let y = (j as f64 + 0.5) * sy - 0.5;
        let y0 = math::floor(y);
        let fy = y - y0;
        for i in 0..width {
            let x = (i as f64 + 0.5) * sx - 0.5;
            let x0 = math::floor(x);
            let fx = x - x0;
            let (xi, yi) = (x0 as isize, y0 as isize);
            let top = src.at_clamped(xi, yi) * (1.0 - fx) + src.at_clamped(xi + 1, yi) * fx;
            let bot = src.at_clamped(xi, yi + 1) * (1.0 - fx) + src.at_clamped(xi + 1, yi + 1) * fx;
            out.data[j * width + i] = top * (1.0 - fy) + bot * fy;
        }
    }
    out
}

/// Sobel gradient magnitude divided by `4√2` and clamped to `[0, 1]`.
pub fn sobel_magnitude(src: &GrayImage) -> GrayImage {
    let norm = 4.0 * core::f64::consts::SQRT_2;
    let mut out = GrayImage::new(src.width, src.height);
    for y in 0..src.height as isize {
        for x in 0..src.width as isize {
            let p = |dx: isize, dy: isize| src.at_clamped(x + dx, y + dy);
            let gx = (p(1, -1) + 2.0 * p(1, 0) + p(1, 1)) - (p(-1, -1) + 2.0 * p(-1, 0) + p(-1, 1));
            let gy = (p(-1, 1) + 2.0 * p(0, 1) + p(1, 1)) - (p(-1, -1) + 2.0 * p(0, -1) + p(1, -1));
            out.data[y as usize * src.width + x as usize] = (math::sqrt(gx * gx + gy * gy) / norm).clamp(0.0, 1.0);
        }
    }
    out
}

/// Two-channel `[2, S, S]` network input: grayscale and Sobel magnitude, both in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    tensor: Tensor,
}

impl ModelInput {
    pub fn new(tensor: Tensor) -> Result<Self, PreprocError> {
        match tensor.shape() {
            [2, h, w] if h == w => {}
            s => return Err(PreprocError::InvalidInput(format!("expected [2, S, S], got {s:?}"))),
        }
        if tensor.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(PreprocError::InvalidInput("values must lie in [0, 1]".into()));
        }
        Ok(ModelInput { tensor })
    }

    pub fn size(&self) -> usize {
        self.tensor.shape()[1]
    }

    pub fn tensor(&self) -> &Tensor {
        &self.tensor
    }

    pub fn gray(&self) -> &[f64] {
        let n = self.size() * self.size();
        &self.tensor.data()[..n]
    }

    pub fn edges(&self) -> &[f64] {
        let n = self.size() * self.size();
        &self.tensor.data()[n..]
    }

    pub fn into_tensor(self) -> Tensor {
        self.tensor
    }
}

/// Grayscale, resize to `size × size`, then attach the Sobel channel.
pub fn to_model_input(image: &RgbImage, size: usize) -> ModelInput {
    let gray = grayscale(image);
    let resized = if gray.width == size && gray.height == size { gray } else { resize_bilinear(&gray, size, size) };
    let edges = sobel_magnitude(&resized);
    let mut data = Vec::with_capacity(2 * size * size);
    data.extend(resized.data.iter().map(|v| v.clamp(0.0, 1.0)));
    data.extend_from_slice(&edges.data);
    ModelInput { tensor: Tensor::new(alloc::vec![2, size, size], data).expect("2·S·S values") }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect_quad(x0: f64, y0: f64, w: f64, h: f64) -> Quad {
        [Point::new(x0, y0), Point::new(x0 + w, y0), Point::new(x0 + w, y0 + h), Point::new(x0, y0 + h)]
    }

    fn crop(conf: Option<f64>, h: f64) -> RawCrop {
        RawCrop {
            pixels: RgbImage::filled(200, 100, [255, 255, 255]),
            quad: rect_quad(0.0, 0.0, 120.0, h),
            ocr_confidence: conf,
            source_image_id: "img".into(),
        }
    }

    #[test]
    fn filter_examples() {
        let cfg = FilterConfig::default();
        assert_eq!(filter_crop(&crop(Some(0.19), 50.0), &cfg), FilterDecision::Discard(DiscardReason::LowConfidence));
        assert_eq!(filter_crop(&crop(Some(0.9), 19.0), &cfg), FilterDecision::Discard(DiscardReason::TooSmall));
        assert_eq!(filter_crop(&crop(None, 64.0), &cfg), FilterDecision::Keep);
        assert_eq!(filter_crop(&crop(Some(0.2), 20.0), &cfg), FilterDecision::Keep);
    }

    fn pattern(w: usize, h: usize) -> RgbImage {
        RgbImage::from_fn(w, h, |x, y| [((x * 37 + y * 11) % 256) as u8, ((x * 5) % 256) as u8, ((y * 13) % 256) as u8])
    }

    #[test]
    fn axis_aligned_rectify_is_a_sub_image() {
        let src = pattern(60, 40);
        let c = RawCrop { pixels: src.clone(), quad: rect_quad(7.0, 5.0, 30.0, 12.0), ocr_confidence: None, source_image_id: String::new() };
        let out = rectify(&c).unwrap();
        assert_eq!((out.width(), out.height()), (30, 12));
        for y in 0..12 {
            for x in 0..30 {
                let (a, b) = (out.pixel(x, y), src.pixel(x + 7, y + 5));
                for ch in 0..3 {
                    assert!((a[ch] as i32 - b[ch] as i32).abs() <= 1);
                }
            }
        }
    }

    #[test]
    fn rotated_text_is_derotated() {
        // Wide text (40x10) rotated 90° clockwise into a tall 10x40 source.
        let text = pattern(40, 10);
        let (tw, th) = (40usize, 10usize);
        let src = RgbImage::from_fn(th, tw, |sx, sy| text.pixel(sy, th - 1 - sx));
        // Reading-order corners of the text inside the rotated source.
        let quad = [Point::new(10.0, 0.0), Point::new(10.0, 40.0), Point::new(0.0, 40.0), Point::new(0.0, 0.0)];
        let c = RawCrop { pixels: src, quad, ocr_confidence: None, source_image_id: String::new() };
        let out = rectify(&c).unwrap();
        assert_eq!((out.width(), out.height()), (40, 10));
        assert!(out.width() > out.height());
        assert_eq!(out, text);
    }

    #[test]
    fn collapsed_quad_is_rejected() {
        let p = Point::new(3.0, 3.0);
        let c = RawCrop { pixels: pattern(8, 8), quad: [p; 4], ocr_confidence: None, source_image_id: String::new() };
        assert!(matches!(rectify(&c), Err(PreprocError::DegenerateQuad { .. })));
        let bow = [Point::new(0.0, 0.0), Point::new(8.0, 8.0), Point::new(8.0, 0.0), Point::new(0.0, 8.0)];
        let c = RawCrop { pixels: pattern(8, 8), quad: bow, ocr_confidence: None, source_image_id: String::new() };
        assert!(rectify(&c).is_err());
    }

    #[test]
    fn constant_image_has_no_edges() {
        let m = to_model_input(&RgbImage::filled(37, 19, [120, 40, 200]), 64);
        assert!(m.edges().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pure_red_luma() {
        let m = to_model_input(&RgbImage::filled(10, 10, [255, 0, 0]), 32);
        assert!(m.gray().iter().all(|&v| (v - 0.299).abs() < 1e-12));
    }

    #[test]
    fn step_edge_band() {
        let img = RgbImage::from_fn(256, 256, |x, _| if x < 128 { [0; 3] } else { [255; 3] });
        let m = to_model_input(&img, 256);
        let e = m.edges();
        for y in 0..256 {
            for x in 0..256 {
                let v = e[y * 256 + x];
                if x == 127 || x == 128 {
                    assert!((v - 1.0 / core::f64::consts::SQRT_2).abs() < 1e-9, "{x},{y}: {v}");
                } else {
                    assert_eq!(v, 0.0, "{x},{y}");
                }
            }
        }
    }

    #[test]
    fn gray_replicated_input_is_a_fixed_point() {
        let img = RgbImage::from_fn(256, 256, |x, y| [((x * y) % 256) as u8; 3]);
        let once = to_model_input(&img, 256);
        let back = RgbImage::from_fn(256, 256, |x, y| [math::round(once.gray()[y * 256 + x] * 255.0) as u8; 3]);
        let twice = to_model_input(&back, 256);
        for (a, b) in once.gray().iter().zip(twice.gray()) {
            assert!((a - b).abs() < 1e-6);
        }
    }
}
