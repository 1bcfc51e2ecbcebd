//! Corruption toolkit: center-crop baselines live in [`crate::image`];
//! this module owns the severity ladder, background replacement, poster-style
//! overlays, and their token-space analogs for the synthetic encoder.
//!
//! All stochastic choices come from a per-image stream derived from
//! `(corpus seed, item id)`, so a corrupted corpus is a pure function of
//! `(corpus, spec, seed)`. Draw order per image is pinned: background coin,
//! background parameters (if taken), overlay coin, overlay count, then each
//! overlay's parameters.

use crate::encoders::{EncodedItem, Encoder, EncoderMode};
use crate::error::{Error, Result};
use crate::image::{text_width, Image, Rgb};
use crate::rng::NamedRng;
use crate::tensor::Tensor;

/// Severity ladder rows: (p_bg, p_overlay, max overlays).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Severity {
    Clean,
    Light,
    Medium,
    Heavy,
}

impl Severity {
    pub const ALL: [Severity; 4] = [Severity::Clean, Severity::Light, Severity::Medium, Severity::Heavy];

    pub fn name(self) -> &'static str {
        match self {
            Severity::Clean => "clean",
            Severity::Light => "light",
            Severity::Medium => "medium",
            Severity::Heavy => "heavy",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "clean" => Ok(Severity::Clean),
            "light" => Ok(Severity::Light),
            "medium" => Ok(Severity::Medium),
            "heavy" => Ok(Severity::Heavy),
            other => Err(Error::Config(format!(
                "unknown severity {other:?}; expected one of clean, light, medium, heavy"
            ))),
        }
    }
}

/// One severity row plus the corpus seed corruption streams derive from.
#[derive(Debug, Clone, Copy)]
pub struct CorruptionSpec {
    pub severity: Severity,
    pub p_bg: f64,
    pub p_overlay: f64,
    pub n_overlays: usize,
    pub seed: u64,
}

impl CorruptionSpec {
    pub fn new(severity: Severity, seed: u64) -> Self {
        let (p_bg, p_overlay, n_overlays) = match severity {
            Severity::Clean => (0.0, 0.0, 0),
            Severity::Light => (0.0, 0.4, 1),
            Severity::Medium => (0.5, 0.7, 3),
            Severity::Heavy => (0.8, 0.9, 5),
        };
        CorruptionSpec { severity, p_bg, p_overlay, n_overlays, seed }
    }

    /// The per-image stream for `(spec.seed, item_id)`.
    pub fn item_rng(&self, item_id: &str) -> NamedRng {
        NamedRng::derive(self.seed, &format!("noise.item.{item_id}"))
    }
}

/// Fixed marketing-text vocabularies.
pub struct OverlayVocab {
    pub badge: &'static [&'static str],
    pub banner_bar: &'static [&'static str],
}

impl Default for OverlayVocab {
    fn default() -> Self {
        OverlayVocab {
            badge: &["HOT", "SALE", "50%", "NEW", "No.1", "TOP", "9.9", "Best"],
            banner_bar: &["Free Shipping", "Flash Sale", "New Arrival", "Limited Offer"],
        }
    }
}

const OVERLAY_PALETTE: [Rgb; 4] = [[220, 30, 40], [250, 140, 0], [255, 200, 0], [30, 90, 220]];

/// True = foreground. A pixel is background iff min(R, G, B) >= 240.
pub fn foreground_mask(img: &Image) -> Vec<bool> {
    img.pixels
        .chunks_exact(3)
        .map(|p| *p.iter().min().unwrap() < 240)
        .collect()
}

/// Composite the image's foreground over a blurred crop of a donor image.
///
/// Draw order: donor index, crop x offset, crop y offset.
pub fn replace_background(
    img: &Image,
    donor_pool: &[Image],
    blur_radius: f64,
    rng: &mut NamedRng,
) -> Result<Image> {
    if donor_pool.is_empty() {
        return Err(Error::Config("replace_background needs a non-empty donor pool".into()));
    }
    let donor = &donor_pool[rng.below(donor_pool.len())];
    let side = ((0.8 * donor.width.min(donor.height) as f64).floor() as usize).max(1);
    let x0 = rng.below(donor.width - side + 1);
    let y0 = rng.below(donor.height - side + 1);
    let mut crop = Image::new(side, side, [0, 0, 0]);
    for y in 0..side {
        for x in 0..side {
            crop.set(x, y, donor.get(x0 + x, y0 + y));
        }
    }
    let background = crop.resize(img.width, img.height).gaussian_blur(blur_radius);

    let mask = foreground_mask(img);
    let mut out = background;
    for y in 0..img.height {
        for x in 0..img.width {
            if mask[y * img.width + x] {
                out.set(x, y, img.get(x, y));
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OverlayKind {
    Badge,
    Banner,
    Bar,
}

/// A sampled overlay with its resolved geometry, ready to draw.
#[derive(Debug, Clone)]
pub struct Overlay {
    pub kind: OverlayKind,
    /// Badge outer radius, banner side, or bar height (pixels).
    pub size: f64,
    /// Anchor inside a corner's 10%-margin box (badge/banner) or the bar's
    /// top-left corner.
    pub x: f64,
    pub y: f64,
    /// 0 = top-left, 1 = top-right, 2 = bottom-left, 3 = bottom-right
    /// (banners use 0/1; bars use 0 = top, 1 = bottom).
    pub corner: usize,
    pub rotation: f64,
    pub text: String,
    pub color: Rgb,
}

/// Sample one overlay. Draw order: kind, size, corner, anchor x, anchor y,
/// rotation (badge only), text, color.
pub fn sample_overlay(rng: &mut NamedRng, width: usize, height: usize, vocab: &OverlayVocab) -> Overlay {
    let (w, h) = (width as f64, height as f64);
    let short = w.min(h);
    let kind = match rng.below(3) {
        0 => OverlayKind::Badge,
        1 => OverlayKind::Banner,
        _ => OverlayKind::Bar,
    };
    match kind {
        OverlayKind::Badge => {
            let size = rng.uniform_in(0.15, 0.20) * short;
            let corner = rng.below(4);
            let (x, y) = corner_anchor(rng, w, h, corner);
            let rotation = rng.uniform_in(0.0, std::f64::consts::TAU);
            let text = vocab.badge[rng.below(vocab.badge.len())].to_string();
            let color = OVERLAY_PALETTE[rng.below(OVERLAY_PALETTE.len())];
            Overlay { kind, size, x, y, corner, rotation, text, color }
        }
        OverlayKind::Banner => {
            let size = rng.uniform_in(0.35, 0.45) * short;
            let corner = rng.below(2); // top-left or top-right
            let (x, y) = corner_anchor(rng, w, h, corner);
            let text = vocab.banner_bar[rng.below(vocab.banner_bar.len())].to_string();
            let color = OVERLAY_PALETTE[rng.below(OVERLAY_PALETTE.len())];
            Overlay { kind, size, x, y, corner, rotation: 0.0, text, color }
        }
        OverlayKind::Bar => {
            let size = rng.uniform_in(0.15, 0.20) * h;
            let corner = rng.below(2); // top or bottom
            let y = if corner == 0 { 0.0 } else { h - size };
            let text = vocab.banner_bar[rng.below(vocab.banner_bar.len())].to_string();
            let color = OVERLAY_PALETTE[rng.below(OVERLAY_PALETTE.len())];
            Overlay { kind, size, x: 0.0, y, corner, rotation: 0.0, text, color }
        }
    }
}

/// Anchor uniformly inside the outer-10% margin box of the given corner.
fn corner_anchor(rng: &mut NamedRng, w: f64, h: f64, corner: usize) -> (f64, f64) {
    let mx = 0.1 * w;
    let my = 0.1 * h;
    let x = rng.uniform_in(0.0, mx);
    let y = rng.uniform_in(0.0, my);
    match corner {
        0 => (x, y),
        1 => (w - mx + x, y),
        2 => (x, h - my + y),
        _ => (w - mx + x, h - my + y),
    }
}

/// Render an overlay; geometry exceeding the image is clipped, never an error.
pub fn draw_overlay(img: &mut Image, ov: &Overlay) {
    let white: Rgb = [255, 255, 255];
    match ov.kind {
        OverlayKind::Badge => {
            img.fill_star(ov.x, ov.y, ov.size, ov.rotation, ov.color);
            let scale = ((1.2 * ov.size) / text_width(&ov.text, 1) as f64).floor().max(1.0) as i64;
            let tw = text_width(&ov.text, scale);
            img.draw_text(ov.x as i64 - tw / 2, ov.y as i64 - 3 * scale, &ov.text, scale, white);
        }
        OverlayKind::Banner => {
            // right triangle hugging the anchored corner
            let pts = if ov.corner == 0 {
                [(ov.x, ov.y), (ov.x + ov.size, ov.y), (ov.x, ov.y + ov.size)]
            } else {
                [(ov.x, ov.y), (ov.x - ov.size, ov.y), (ov.x, ov.y + ov.size)]
            };
            img.fill_polygon(&pts, ov.color);
            let scale = ((0.5 * ov.size) / text_width(&ov.text, 1) as f64).floor().max(1.0) as i64;
            let tx = if ov.corner == 0 { ov.x as i64 + 2 } else { ov.x as i64 - ov.size as i64 / 2 };
            img.draw_text(tx, ov.y as i64 + (ov.size / 4.0) as i64, &ov.text, scale, white);
        }
        OverlayKind::Bar => {
            img.fill_rect(0, ov.y as i64, img.width as i64, ov.size as i64, ov.color);
            let scale = ((0.7 * ov.size) / 7.0)
                .min(img.width as f64 / text_width(&ov.text, 1) as f64)
                .floor()
                .max(1.0) as i64;
            let tw = text_width(&ov.text, scale);
            img.draw_text(
                (img.width as i64 - tw) / 2,
                ov.y as i64 + (ov.size as i64 - 7 * scale) / 2,
                &ov.text,
                scale,
                white,
            );
        }
    }
}

/// Draw `n` sampled overlays.
pub fn apply_overlays(img: &Image, n: usize, vocab: &OverlayVocab, rng: &mut NamedRng) -> Result<Image> {
    if n < 1 {
        return Err(Error::Contract("apply_overlays needs n >= 1".into()));
    }
    let mut out = img.clone();
    for _ in 0..n {
        let ov = sample_overlay(rng, img.width, img.height, vocab);
        draw_overlay(&mut out, &ov);
    }
    Ok(out)
}

/// Apply one severity spec to an image: background replacement first (with
/// probability p_bg), then 1..=n_overlays overlays (with probability
/// p_overlay). The clean spec is the identity.
pub fn corrupt(img: &Image, spec: &CorruptionSpec, donor_pool: &[Image], rng: &mut NamedRng) -> Result<Image> {
    let vocab = OverlayVocab::default();
    let mut out = img.clone();
    if rng.uniform() < spec.p_bg {
        out = replace_background(&out, donor_pool, 2.0, rng)?;
    }
    if rng.uniform() < spec.p_overlay {
        let count = 1 + rng.below(spec.n_overlays.max(1));
        out = apply_overlays(&out, count, &vocab, rng)?;
    }
    Ok(out)
}

/// Token-space corruption analog for the synthetic encoder.
///
/// The overlay analog replaces a contiguous token block with a vector from a
/// fixed "promo pattern" family constructed orthogonal to the planted
/// content subspace; the background analog re-draws noise inside that
/// subspace (background clutter shifts content statistics, it does not add
/// promo structure).
pub struct TokenCorruptor {
    promo: Vec<Vec<f64>>,
    basis: Tensor,
    d_v: usize,
    content_dims: usize,
    synthetic: bool,
}

const PROMO_FAMILY: usize = 8;
const PROMO_NORM: f64 = 1.2;
const BG_TOKEN_SCALE: f64 = 0.35;

impl TokenCorruptor {
    pub fn new(encoder: &Encoder) -> Self {
        let cfg = encoder.config();
        let basis = encoder.planted_basis().clone();
        let mut promo = Vec::with_capacity(PROMO_FAMILY);
        for k in 0..PROMO_FAMILY {
            let mut rng = NamedRng::derive(cfg.seed, &format!("noise.promo.{k}"));
            let mut v: Vec<f64> = (0..cfg.d_v).map(|_| rng.gaussian()).collect();
            // project out the planted subspace
            for f in 0..cfg.content_dims {
                let dot: f64 = (0..cfg.d_v).map(|j| v[j] * basis.at(f, j)).sum();
                for (j, x) in v.iter_mut().enumerate() {
                    *x -= dot * basis.at(f, j);
                }
            }
            let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            for x in &mut v {
                *x *= PROMO_NORM / norm;
            }
            promo.push(v);
        }
        TokenCorruptor {
            promo,
            basis,
            d_v: cfg.d_v,
            content_dims: cfg.content_dims,
            synthetic: cfg.mode == EncoderMode::Synthetic,
        }
    }

    pub fn promo_family(&self) -> &[Vec<f64>] {
        &self.promo
    }

    /// Corrupt an encoded item's visual tokens. Text is never touched.
    pub fn token_corrupt(
        &self,
        encoded: &EncodedItem,
        spec: &CorruptionSpec,
        rng: &mut NamedRng,
    ) -> Result<EncodedItem> {
        if !self.synthetic {
            return Err(Error::Contract("token_corrupt requires the synthetic encoder mode".into()));
        }
        let l_v = encoded.visual_tokens.rows();
        let d_v = encoded.visual_tokens.cols();
        if d_v != self.d_v {
            return Err(Error::dimension("token_corrupt", self.d_v, d_v));
        }
        let mut tokens = encoded.visual_tokens.clone();

        if rng.uniform() < spec.p_bg {
            for t in 0..l_v {
                let noise: Vec<f64> = (0..self.content_dims).map(|_| rng.gaussian()).collect();
                for j in 0..d_v {
                    let lifted: f64 = (0..self.content_dims).map(|f| noise[f] * self.basis.at(f, j)).sum();
                    let v = tokens.at(t, j) + BG_TOKEN_SCALE * lifted;
                    tokens.set(t, j, v);
                }
            }
        }

        if rng.uniform() < spec.p_overlay {
            let count = 1 + rng.below(spec.n_overlays.max(1));
            for _ in 0..count {
                let frac = rng.uniform_in(0.15, 0.20);
                let block = ((frac * l_v as f64).round() as usize).clamp(1, l_v);
                let start = rng.below(l_v - block + 1);
                let pattern = &self.promo[rng.below(self.promo.len())];
                for t in start..start + block {
                    for j in 0..d_v {
                        tokens.set(t, j, pattern[j]);
                    }
                }
            }
        }

        let mut global = vec![0.0; d_v];
        for t in 0..l_v {
            for (j, g) in global.iter_mut().enumerate() {
                *g += tokens.at(t, j);
            }
        }
        for g in &mut global {
            *g /= l_v as f64;
        }
        Ok(EncodedItem {
            visual_tokens: tokens,
            image_global: Tensor::row(global),
            text_tokens: encoded.text_tokens.clone(),
            title_global: encoded.title_global.clone(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::EncoderConfig;

    #[test]
    fn severity_table_rows_are_pinned() {
        let rows: Vec<(f64, f64, usize)> = Severity::ALL
            .iter()
            .map(|&s| {
                let c = CorruptionSpec::new(s, 0);
                (c.p_bg, c.p_overlay, c.n_overlays)
            })
            .collect();
        assert_eq!(rows, vec![(0.0, 0.0, 0), (0.0, 0.4, 1), (0.5, 0.7, 3), (0.8, 0.9, 5)]);
        assert!(Severity::from_name("extreme").is_err());
    }

    #[test]
    fn foreground_threshold_is_inclusive_at_240() {
        let mut img = Image::new(3, 1, [0, 0, 0]);
        img.set(0, 0, [245, 250, 241]); // min 241 -> background
        img.set(1, 0, [239, 255, 255]); // min 239 -> foreground
        img.set(2, 0, [240, 240, 240]); // min 240 -> background (inclusive)
        let mask = foreground_mask(&img);
        assert_eq!(mask, vec![false, true, false]);

        let white = Image::new(4, 4, [255, 255, 255]);
        assert!(foreground_mask(&white).iter().all(|&fg| !fg));
    }

    #[test]
    fn clean_corruption_is_identity() {
        let mut rng = NamedRng::derive(1, "noise.item.x");
        let img = Image::new(20, 20, [120, 40, 200]);
        let spec = CorruptionSpec::new(Severity::Clean, 1);
        let out = corrupt(&img, &spec, &[], &mut rng).unwrap();
        assert_eq!(out, img);
        assert_eq!(out.to_ppm(), img.to_ppm());
    }

    #[test]
    fn replace_background_keeps_pure_foreground_images() {
        let img = Image::new(16, 16, [10, 10, 10]); // nothing near-white
        let donor = Image::new(16, 16, [200, 0, 0]);
        let mut rng = NamedRng::derive(2, "bg");
        let out = replace_background(&img, &[donor], 2.0, &mut rng).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn replace_background_on_all_white_equals_blurred_donor_crop() {
        let img = Image::new(16, 16, [255, 255, 255]);
        let mut donor = Image::new(20, 20, [40, 80, 120]);
        donor.set(5, 5, [250, 10, 10]);
        let mut rng = NamedRng::derive(3, "bg2");
        let out = replace_background(&img, &[donor.clone()], 2.0, &mut rng).unwrap();

        // oracle: replay the documented draw order
        let mut oracle_rng = NamedRng::derive(3, "bg2");
        let _donor_idx = oracle_rng.below(1);
        let side = (0.8f64 * 20.0).floor() as usize;
        let x0 = oracle_rng.below(20 - side + 1);
        let y0 = oracle_rng.below(20 - side + 1);
        let mut crop = Image::new(side, side, [0, 0, 0]);
        for y in 0..side {
            for x in 0..side {
                crop.set(x, y, donor.get(x0 + x, y0 + y));
            }
        }
        let expected = crop.resize(16, 16).gaussian_blur(2.0);
        assert_eq!(out, expected);
    }

    #[test]
    fn replace_background_requires_donors() {
        let img = Image::new(8, 8, [255, 255, 255]);
        let mut rng = NamedRng::derive(4, "bg3");
        assert!(matches!(replace_background(&img, &[], 2.0, &mut rng), Err(Error::Config(_))));
    }

    #[test]
    fn corruption_is_deterministic_per_item_stream() {
        let img = Image::new(24, 24, [250, 250, 250]);
        let donor = Image::new(24, 24, [10, 60, 90]);
        let spec = CorruptionSpec::new(Severity::Heavy, 99);
        let a = corrupt(&img, &spec, &[donor.clone()], &mut spec.item_rng("item7")).unwrap();
        let b = corrupt(&img, &spec, &[donor.clone()], &mut spec.item_rng("item7")).unwrap();
        let c = corrupt(&img, &spec, &[donor], &mut spec.item_rng("item8")).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn overlay_geometry_stays_in_sampled_ranges() {
        let vocab = OverlayVocab::default();
        let mut rng = NamedRng::derive(7, "geom");
        let (w, h) = (200usize, 480usize);
        let short = 200.0;
        let mut seen = [false; 3];
        for _ in 0..1000 {
            let ov = sample_overlay(&mut rng, w, h, &vocab);
            match ov.kind {
                OverlayKind::Badge => {
                    seen[0] = true;
                    assert!(ov.size >= 0.15 * short && ov.size <= 0.20 * short);
                    assert!(ov.x >= 0.0 && ov.x <= w as f64);
                    assert!(ov.y >= 0.0 && ov.y <= h as f64);
                    // anchor inside one of the four 10% margin boxes
                    let in_x = ov.x <= 0.1 * w as f64 || ov.x >= 0.9 * w as f64;
                    let in_y = ov.y <= 0.1 * h as f64 || ov.y >= 0.9 * h as f64;
                    assert!(in_x && in_y, "badge anchor outside margin boxes: {:?}", (ov.x, ov.y));
                }
                OverlayKind::Banner => {
                    seen[1] = true;
                    assert!(ov.size >= 0.35 * short && ov.size <= 0.45 * short);
                    assert!(ov.corner < 2);
                    assert!(ov.y <= 0.1 * h as f64);
                }
                OverlayKind::Bar => {
                    seen[2] = true;
                    assert!(ov.size >= 0.15 * h as f64 && ov.size <= 0.20 * h as f64);
                    assert!(ov.corner < 2);
                }
            }
        }
        assert!(seen.iter().all(|&s| s));
    }

    #[test]
    fn badge_radius_on_200px_image_is_30_to_40() {
        let vocab = OverlayVocab::default();
        let mut rng = NamedRng::derive(8, "badge");
        let mut count = 0;
        for _ in 0..200 {
            let ov = sample_overlay(&mut rng, 200, 200, &vocab);
            if ov.kind == OverlayKind::Badge {
                assert!(ov.size >= 30.0 && ov.size <= 40.0);
                count += 1;
            }
        }
        assert!(count > 0);
    }

    #[test]
    fn overlays_change_pixels_and_never_panic_when_clipped() {
        let img = Image::new(20, 20, [0, 0, 0]);
        let vocab = OverlayVocab::default();
        let mut rng = NamedRng::derive(9, "ov");
        let out = apply_overlays(&img, 5, &vocab, &mut rng).unwrap();
        assert_ne!(out, img);
        assert!(apply_overlays(&img, 0, &vocab, &mut rng).is_err());
    }

    fn encoded_fixture(encoder: &Encoder) -> EncodedItem {
        let mut tex = NamedRng::derive(10, "tex");
        let img = encoder.paint(&[0.3, -0.2, 0.1, 0.4, -0.1, 0.2], 60, 60, &mut tex);
        let (tokens, global) = encoder.encode_image_pixels(&img);
        EncodedItem {
            visual_tokens: tokens,
            image_global: global,
            text_tokens: encoder.encode_text("some words").unwrap(),
            title_global: encoder.title_global("some words").unwrap(),
        }
    }

    #[test]
    fn token_corrupt_clean_is_identity_and_heavy_replaces_blocks() {
        let encoder = Encoder::new(EncoderConfig::default()).unwrap();
        let corruptor = TokenCorruptor::new(&encoder);
        let item = encoded_fixture(&encoder);

        let clean = CorruptionSpec::new(Severity::Clean, 5);
        let out = corruptor.token_corrupt(&item, &clean, &mut clean.item_rng("a")).unwrap();
        assert_eq!(out.visual_tokens, item.visual_tokens);
        assert_eq!(out.image_global, item.image_global);

        let heavy = CorruptionSpec::new(Severity::Heavy, 5);
        // p_overlay = 0.9: try a few streams until the overlay branch fires
        let mut replaced_any = false;
        for i in 0..8 {
            let out = corruptor
                .token_corrupt(&item, &heavy, &mut heavy.item_rng(&format!("it{i}")))
                .unwrap();
            for t in 0..out.visual_tokens.rows() {
                let row: Vec<f64> = (0..out.visual_tokens.cols()).map(|j| out.visual_tokens.at(t, j)).collect();
                if corruptor.promo_family().iter().any(|p| p == &row) {
                    replaced_any = true;
                    // promo rows are orthogonal to the planted subspace
                    let proj = encoder.project_content(&row);
                    assert!(proj.iter().all(|v| v.abs() < 1e-10));
                }
            }
        }
        assert!(replaced_any);
    }

    #[test]
    fn token_corrupt_rejects_ingest_mode() {
        let cfg = EncoderConfig { mode: EncoderMode::Ingest, ..Default::default() };
        let encoder = Encoder::new(cfg).unwrap();
        let corruptor = TokenCorruptor::new(&encoder);
        let synth = Encoder::new(EncoderConfig::default()).unwrap();
        let item = encoded_fixture(&synth);
        let spec = CorruptionSpec::new(Severity::Medium, 1);
        assert!(matches!(
            corruptor.token_corrupt(&item, &spec, &mut spec.item_rng("x")),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn promo_patterns_are_orthogonal_to_planted_subspace() {
        let encoder = Encoder::new(EncoderConfig::default()).unwrap();
        let corruptor = TokenCorruptor::new(&encoder);
        for p in corruptor.promo_family() {
            let proj = encoder.project_content(p);
            assert!(proj.iter().all(|v| v.abs() < 1e-10));
            let norm: f64 = p.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!((norm - PROMO_NORM).abs() < 1e-9);
        }
    }
}
