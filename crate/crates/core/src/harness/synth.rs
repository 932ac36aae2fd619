//! Procedural text-like crops with a known quality level.
//!
//! Each crop shows a row of pseudo-glyphs drawn as short polylines. A scalar
//! degradation `d ∈ [0, 1]` breaks strokes, jitters their control points,
//! blurs the result, fades the ink and adds pixel noise. The synthetic MOS is
//! `5(1 − d)` plus bounded uniform noise, and the OCR confidence proxy is a
//! noisy logistic in `d`.
//!
//! Samples are organised in groups of `K` (one synthetic prompt rendered by
//! one synthetic generator). Generators differ by a fixed offset on `d`, and
//! overall-quality MOS follows text quality only loosely.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::image::RgbImage;
use crate::math;
use crate::rng::{self, Rng};

use super::{GroupRecord, HarnessError, Member};

/// Parameters of the synthetic degradation model. Field values are frozen
/// per `version` so that benchmark numbers stay comparable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DegradationModel {
    pub version: u32,
    /// Side of the square crop in pixels.
    pub size: usize,
    pub glyphs_min: usize,
    pub glyphs_max: usize,
    pub strokes_per_glyph_max: usize,
    /// Stroke half-width in pixels.
    pub stroke_radius: f64,
    /// Probability of dropping a stroke piece at `d = 1`.
    pub breakage: f64,
    /// Standard deviation of control-point jitter in pixels at `d = 1`.
    pub jitter: f64,
    /// Gaussian blur sigma in pixels at `d = 1`.
    pub blur: f64,
    /// Fraction of ink contrast lost at `d = 1`.
    pub fade: f64,
    /// Pixel noise standard deviation (0–255 scale) at `d = 1`.
    pub pixel_noise: f64,
    /// Half-width of the uniform noise added to the MOS.
    pub mos_noise: f64,
    /// Spread of `d` around a group's centre.
    pub group_spread: f64,
    /// Additive shift of `d` per generator.
    pub generator_offsets: Vec<f64>,
    /// Logistic steepness and standard deviation of the confidence proxy.
    pub ocr_steepness: f64,
    pub ocr_noise: f64,
    /// Weight of text quality in the overall-quality MOS.
    pub oq_text_weight: f64,
}

impl DegradationModel {
    pub fn v1() -> Self {
        DegradationModel {
            version: 1,
            size: 64,
            glyphs_min: 3,
            glyphs_max: 5,
            strokes_per_glyph_max: 3,
            stroke_radius: 1.6,
            breakage: 0.6,
            jitter: 2.5,
            blur: 2.0,
            fade: 0.5,
            pixel_noise: 30.0,
            mos_noise: 0.25,
            group_spread: 0.3,
            generator_offsets: vec![-0.15, -0.05, 0.0, 0.05, 0.15],
            ocr_steepness: 6.0,
            ocr_noise: 0.8,
            oq_text_weight: 0.4,
        }
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Param(m));
        if self.size < 8 {
            return bad(format!("crop size {} too small", self.size));
        }
        if self.glyphs_min == 0 || self.glyphs_max < self.glyphs_min || self.strokes_per_glyph_max == 0 {
            return bad("glyph and stroke counts must be positive and ordered".into());
        }
        let nonneg = [
            self.stroke_radius,
            self.breakage,
            self.jitter,
            self.blur,
            self.fade,
            self.pixel_noise,
            self.mos_noise,
            self.group_spread,
            self.ocr_steepness,
            self.ocr_noise,
        ];
        if nonneg.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || !(self.stroke_radius > 0.0) {
            return bad("model parameters must be finite and non-negative".into());
        }
        if self.breakage > 1.0 || self.fade > 1.0 || !(0.0..=1.0).contains(&self.oq_text_weight) {
            return bad("breakage, fade and oq_text_weight must lie in [0, 1]".into());
        }
        if self.generator_offsets.is_empty() {
            return bad("at least one generator offset is needed".into());
        }
        Ok(())
    }
}

impl Default for DegradationModel {
    fn default() -> Self {
        Self::v1()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCrop {
    pub id: String,
    pub image: RgbImage,
    pub degradation: f64,
    /// Text-quality MOS, the regression target.
    pub mos: f64,
    pub oq_mos: f64,
    pub ocr_confidence: f64,
    pub generator: String,
    pub prompt: String,
    pub group: usize,
    /// Share of a notional full image the crop covers.
    pub area_fraction: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub crops: Vec<SynthCrop>,
    pub groups: Vec<GroupRecord>,
}

/// Synthetic MOS for a degradation level and a noise draw in `[-1, 1]`.
pub fn synthetic_mos(d: f64, unit_noise: f64, model: &DegradationModel) -> f64 {
    (5.0 * (1.0 - d) + model.mos_noise * unit_noise).clamp(0.0, 5.0)
}

/// Renders one crop at degradation `d`.
pub fn render(d: f64, model: &DegradationModel, rng: &mut Rng) -> RgbImage {
    let s = model.size;
    let sf = s as f64;
    let mut cover = vec![0.0f64; s * s];
    let glyphs = rng.random_range(model.glyphs_min..=model.glyphs_max);
    let margin = 0.12 * sf;
    let cell = (sf - 2.0 * margin) / glyphs as f64;
    let (top, bottom) = (0.25 * sf, 0.75 * sf);
    let radius = model.stroke_radius * (sf / 64.0);
    for gi in 0..glyphs {
        let x0 = margin + gi as f64 * cell + 0.1 * cell;
        let x1 = margin + (gi + 1) as f64 * cell - 0.1 * cell;
        let strokes = rng.random_range(1..=model.strokes_per_glyph_max);
        for _ in 0..strokes {
            let points = rng.random_range(2..=4);
            let mut pts: Vec<(f64, f64)> = (0..points)
                .map(|_| (rng.random_range(x0..=x1), rng.random_range(top..=bottom)))
                .collect();
            for p in &mut pts {
                p.0 += model.jitter * d * rng::normal(rng);
                p.1 += model.jitter * d * rng::normal(rng);
            }
            for w in pts.windows(2) {
                draw_segment(&mut cover, s, w[0], w[1], radius, model.breakage * d, rng);
            }
        }
    }
    let sigma = model.blur * d * (sf / 64.0);
    if sigma > 0.05 {
        cover = gaussian_blur(&cover, s, sigma);
    }
    let bg: [f64; 3] = core::array::from_fn(|_| rng.random_range(200.0..250.0));
    let ink_full: [f64; 3] = core::array::from_fn(|_| rng.random_range(10.0..60.0));
    let ink: [f64; 3] = core::array::from_fn(|c| ink_full[c] + (bg[c] - ink_full[c]) * model.fade * d);
    let noise = model.pixel_noise * d;
    let mut data = Vec::with_capacity(s * s * 3);
    for &a in &cover {
        let a = a.clamp(0.0, 1.0);
        for c in 0..3 {
            let v = bg[c] + (ink[c] - bg[c]) * a + noise * rng::normal(rng);
            data.push(math::round(v).clamp(0.0, 255.0) as u8);
        }
    }
    RgbImage::new(s, s, data).expect("buffer matches size")
}

/// Adds a round-capped stroke as short pieces, each dropped with probability `drop`.
fn draw_segment(cover: &mut [f64], s: usize, a: (f64, f64), b: (f64, f64), radius: f64, drop: f64, rng: &mut Rng) {
    let len = math::hypot(b.0 - a.0, b.1 - a.1);
    let pieces = (math::ceil(len / 2.0) as usize).max(1);
    for k in 0..pieces {
        if drop > 0.0 && rng.random::<f64>() < drop {
            continue;
        }
        let t0 = k as f64 / pieces as f64;
        let t1 = (k + 1) as f64 / pieces as f64;
        let p = (a.0 + (b.0 - a.0) * t0, a.1 + (b.1 - a.1) * t0);
        let q = (a.0 + (b.0 - a.0) * t1, a.1 + (b.1 - a.1) * t1);
        let reach = radius + 1.0;
        let xmin = math::floor(p.0.min(q.0) - reach).max(0.0) as usize;
        let ymin = math::floor(p.1.min(q.1) - reach).max(0.0) as usize;
        let xmax = (math::ceil(p.0.max(q.0) + reach) as usize).min(s - 1);
        let ymax = (math::ceil(p.1.max(q.1) + reach) as usize).min(s - 1);
        for y in ymin..=ymax {
            for x in xmin..=xmax {
                let dist = point_segment_distance((x as f64 + 0.5, y as f64 + 0.5), p, q);
                // One-pixel linear falloff at the stroke edge.
                let c = (radius + 0.5 - dist).clamp(0.0, 1.0);
                let cell = &mut cover[y * s + x];
                *cell = cell.max(c);
            }
        }
    }
}

fn point_segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let l2 = dx * dx + dy * dy;
    let t = if l2 == 0.0 { 0.0 } else { (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / l2).clamp(0.0, 1.0) };
    math::hypot(p.0 - (a.0 + t * dx), p.1 - (a.1 + t * dy))
}

/// Separable Gaussian blur with replicate padding.
fn gaussian_blur(src: &[f64], s: usize, sigma: f64) -> Vec<f64> {
    let r = math::ceil(3.0 * sigma) as isize;
    let kernel: Vec<f64> = (-r..=r).map(|i| math::exp(-((i * i) as f64) / (2.0 * sigma * sigma))).collect();
    let norm: f64 = kernel.iter().sum();
    let kernel: Vec<f64> = kernel.iter().map(|k| k / norm).collect();
    let at = |i: isize| i.clamp(0, s as isize - 1) as usize;
    let mut tmp = vec![0.0; s * s];
    for y in 0..s {
        for x in 0..s {
            tmp[y * s + x] = kernel.iter().enumerate().map(|(k, w)| w * src[y * s + at(x as isize + k as isize - r)]).sum();
        }
    }
    let mut out = vec![0.0; s * s];
    for y in 0..s {
        for x in 0..s {
            out[y * s + x] = kernel.iter().enumerate().map(|(k, w)| w * tmp[at(y as isize + k as isize - r) * s + x]).sum();
        }
    }
    out
}

/// `n_groups` groups of `k` crops. Crop `i` is rendered from its own
/// generator derived from `(seed, i)`, so any crop can be regenerated alone.
pub fn synth_generate(
    n_groups: usize,
    k: usize,
    model: &DegradationModel,
    seed: u64,
) -> Result<SynthDataset, HarnessError> {
    model.validate()?;
    if n_groups == 0 || k == 0 {
        return Err(HarnessError::Param("n_groups and k must be positive".into()));
    }
    let n_gen = model.generator_offsets.len();
    let mut group_rng = rng::derive(seed, 0);
    let mut crops = Vec::with_capacity(n_groups * k);
    let mut groups = Vec::with_capacity(n_groups);
    for gi in 0..n_groups {
        let gen = gi % n_gen;
        let generator = format!("gen{gen}");
        let prompt = format!("prompt{}", gi / n_gen);
        let centre: f64 = group_rng.random_range(0.1..0.9);
        let oq_base: f64 = group_rng.random_range(1.0..4.5);
        let mut members = Vec::with_capacity(k);
        for m in 0..k {
            let idx = gi * k + m;
            let mut r = rng::derive(seed, 1 + idx as u64);
            let spread = model.group_spread * r.random_range(-1.0..1.0);
            let d = (centre + spread + model.generator_offsets[gen]).clamp(0.0, 1.0);
            let mos = synthetic_mos(d, r.random_range(-1.0..=1.0), model);
            let oq = (model.oq_text_weight * mos + (1.0 - model.oq_text_weight) * oq_base + 0.3 * rng::normal(&mut r))
                .clamp(0.0, 5.0);
            let conf = math::sigmoid(model.ocr_steepness * (0.5 - d) + model.ocr_noise * rng::normal(&mut r));
            let area_fraction = r.random_range(0.01..0.2);
            let image = render(d, model, &mut r);
            let id = format!("s{seed}-{idx:06}");
            members.push(Member { id: id.clone(), tq_mos: mos, oq_mos: oq, predicted: None });
            crops.push(SynthCrop {
                id,
                image,
                degradation: d,
                mos,
                oq_mos: oq,
                ocr_confidence: conf,
                generator: generator.clone(),
                prompt: prompt.clone(),
                group: gi,
                area_fraction,
            });
        }
        groups.push(GroupRecord { generator, prompt, members });
    }
    Ok(SynthDataset { crops, groups })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics;

    #[test]
    fn mos_endpoints() {
        let m = DegradationModel::v1();
        for u in [-1.0, 0.0, 1.0] {
            assert!((synthetic_mos(0.0, u, &m) - 5.0).abs() <= m.mos_noise);
            assert!(synthetic_mos(1.0, u, &m).abs() <= m.mos_noise);
        }
    }

    #[test]
    fn mos_decreases_with_degradation() {
        let ds = synth_generate(40, 5, &DegradationModel::v1(), 11).unwrap();
        let d: Vec<f64> = ds.crops.iter().map(|c| c.degradation).collect();
        let mos: Vec<f64> = ds.crops.iter().map(|c| c.mos).collect();
        let r = metrics::srocc(metrics::PairedScores::new(&d, &mos).unwrap()).unwrap();
        assert!(r < -0.9, "{r}");
    }

    #[test]
    fn deterministic_per_seed() {
        let m = DegradationModel::v1();
        let a = synth_generate(3, 2, &m, 5).unwrap();
        let b = synth_generate(3, 2, &m, 5).unwrap();
        assert_eq!(a, b);
        let c = synth_generate(3, 2, &m, 6).unwrap();
        assert_ne!(a.crops[0].image, c.crops[0].image);
    }

    #[test]
    fn clean_crop_has_ink_and_background() {
        let m = DegradationModel::v1();
        let img = render(0.0, &m, &mut rng::seeded(4));
        let lum: Vec<u8> = img.data().chunks(3).map(|p| p[0]).collect();
        assert!(lum.iter().any(|&v| v < 80));
        assert!(lum.iter().any(|&v| v > 190));
    }

    #[test]
    fn blur_preserves_constant() {
        let out = gaussian_blur(&[0.5; 64], 8, 1.3);
        assert!(out.iter().all(|v| (v - 0.5).abs() < 1e-12));
    }
}
