//! Frozen encoders: visual tokens + global image vector, text tokens +
//! global title vector.
//!
//! The synthetic encoder is a pure function of pixel/text content and the
//! encoder seed. Visual tokens come from horizontal image strips: each strip
//! is reduced to per-segment brightness statistics, decoded into a low-dim
//! content estimate, and lifted into token space through a fixed orthonormal
//! basis. Spatially localized image edits therefore perturb a contiguous
//! block of tokens, and all clean tokens live in a known "planted" subspace
//! that corruption operators can avoid or exploit.
//!
//! Ingest mode reads precomputed features from `TGQT` blobs instead.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::corpus::ItemRecord;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::NamedRng;
use crate::tensor::{read_blob, Tensor};

/// Brightness amplitude used when painting content into synthetic images.
const PAINT_AMP: f64 = 90.0;
/// Per-pixel texture noise amplitude (gray levels).
const TEXTURE_AMP: f64 = 5.0;
/// Scale of sinusoidal position offsets added to text tokens.
const POS_SCALE: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncoderMode {
    Synthetic,
    Ingest,
}

#[derive(Debug, Clone)]
pub struct EncoderConfig {
    /// Token embedding width shared by both modalities.
    pub d_v: usize,
    /// Number of visual tokens per image.
    pub l_v: usize,
    /// Text token cap.
    pub max_title_tokens: usize,
    pub mode: EncoderMode,
    /// Stream namespace for all synthetic-encoder draws.
    pub seed: u64,
    /// Dimension of the planted content subspace (strictly below `d_v`).
    pub content_dims: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        EncoderConfig {
            d_v: 16,
            l_v: 12,
            max_title_tokens: 50,
            mode: EncoderMode::Synthetic,
            seed: 7001,
            content_dims: 6,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_v < 4 {
            return Err(Error::Config(format!("encoder d_v must be >= 4, got {}", self.d_v)));
        }
        if self.l_v < 1 {
            return Err(Error::Config("encoder l_v must be >= 1".into()));
        }
        if self.content_dims == 0 || self.content_dims >= self.d_v {
            return Err(Error::Config(format!(
                "content_dims must be in 1..d_v ({}), got {}",
                self.d_v, self.content_dims
            )));
        }
        Ok(())
    }
}

/// Frozen-encoder outputs for one item. Enters graphs as constants only.
#[derive(Debug, Clone)]
pub struct EncodedItem {
    /// L_v × d_v visual tokens.
    pub visual_tokens: Tensor,
    /// 1 × d_v mean-pooled image vector.
    pub image_global: Tensor,
    /// L_t × d_v metadata text tokens (positions included).
    pub text_tokens: Tensor,
    /// 1 × d_v title vector: mean of position-free token embeddings, so a
    /// duplicated token sequence pools to the same vector.
    pub title_global: Tensor,
}

/// Optional ingest manifest: item_id → image blob path (+ text blob path).
pub struct IngestManifest {
    entries: BTreeMap<String, (PathBuf, Option<PathBuf>)>,
}

impl IngestManifest {
    /// Lines: `item_id<TAB>image_blob[<TAB>text_blob]`, paths relative to the
    /// manifest's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut entries = BTreeMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let mut parts = line.split('\t');
            let id = parts.next().unwrap_or_default().to_string();
            let img = parts
                .next()
                .ok_or_else(|| Error::Parse(format!("ingest manifest line missing image path: {line}")))?;
            let txt = parts.next().map(|p| base.join(p));
            entries.insert(id, (base.join(img), txt));
        }
        Ok(IngestManifest { entries })
    }
}

/// The frozen encoder pair (vision + text) plus its planted world model.
pub struct Encoder {
    cfg: EncoderConfig,
    /// content_dims × d_v orthonormal rows spanning the planted subspace.
    basis: Tensor,
    ingest: Option<IngestManifest>,
}

impl Encoder {
    pub fn new(cfg: EncoderConfig) -> Result<Self> {
        cfg.validate()?;
        let basis = orthonormal_rows(cfg.seed, cfg.content_dims, cfg.d_v);
        Ok(Encoder { cfg, basis, ingest: None })
    }

    pub fn with_ingest_manifest(cfg: EncoderConfig, manifest: IngestManifest) -> Result<Self> {
        let mut enc = Encoder::new(cfg)?;
        enc.ingest = Some(manifest);
        Ok(enc)
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.cfg
    }

    /// Orthonormal rows of the planted content subspace (content_dims × d_v).
    pub fn planted_basis(&self) -> &Tensor {
        &self.basis
    }

    // ── Full item ────────────────────────────────────────────────────

    /// Encode one item; file refs resolve relative to `base_dir`.
    pub fn encode_item(&self, item: &ItemRecord, base_dir: &Path) -> Result<EncodedItem> {
        let (visual_tokens, image_global) = if let Some(manifest) = &self.ingest {
            if let Some((img_path, _)) = manifest.entries.get(&item.item_id) {
                self.ingest_image_blob(read_blob(img_path)?)?
            } else {
                return Err(Error::Lookup(format!("item {} missing from ingest manifest", item.item_id)));
            }
        } else {
            match (&item.image_ref, &item.feature_ref) {
                (Some(rel), None) => {
                    if self.cfg.mode == EncoderMode::Ingest {
                        return Err(Error::Contract(format!(
                            "ingest mode requires feature blobs, item {} has an image",
                            item.item_id
                        )));
                    }
                    let img = Image::read_ppm(&base_dir.join(rel))?;
                    self.encode_image_pixels(&img)
                }
                (None, Some(rel)) => self.ingest_image_blob(read_blob(&base_dir.join(rel))?)?,
                _ => {
                    return Err(Error::Contract(format!(
                        "item {} must carry exactly one of image_ref/feature_ref",
                        item.item_id
                    )))
                }
            }
        };

        let text_tokens = if let Some((_, Some(txt_path))) =
            self.ingest.as_ref().and_then(|m| m.entries.get(&item.item_id))
        {
            let t = read_blob(txt_path)?;
            if t.cols() != self.cfg.d_v {
                return Err(Error::dimension("ingest text blob", format!("[*, {}]", self.cfg.d_v), format!("{:?}", t.shape())));
            }
            t
        } else {
            self.encode_text(&item.metadata_text())?
        };

        let title_global = if let Some((_, Some(txt_path))) =
            self.ingest.as_ref().and_then(|m| m.entries.get(&item.item_id))
        {
            mean_rows(&read_blob(txt_path)?)
        } else {
            self.title_global(&item.title)?
        };

        Ok(EncodedItem { visual_tokens, image_global, text_tokens, title_global })
    }

    // ── Vision ───────────────────────────────────────────────────────

    /// Synthetic vision encoding: strips → content estimates → tokens.
    pub fn encode_image_pixels(&self, img: &Image) -> (Tensor, Tensor) {
        let l_v = self.cfg.l_v;
        let d_f = self.cfg.content_dims;
        let mut tokens = vec![0.0; l_v * self.cfg.d_v];
        for strip in 0..l_v {
            let y0 = strip * img.height / l_v;
            let y1 = ((strip + 1) * img.height / l_v).max(y0 + 1).min(img.height);
            let mut content = vec![0.0; d_f];
            for (seg, c) in content.iter_mut().enumerate() {
                let x0 = seg * img.width / d_f;
                let x1 = ((seg + 1) * img.width / d_f).max(x0 + 1).min(img.width);
                let mut sum = 0.0;
                let mut count = 0.0;
                for y in y0..y1 {
                    for x in x0..x1 {
                        let p = img.get(x, y);
                        sum += (p[0] as f64 + p[1] as f64 + p[2] as f64) / 3.0;
                        count += 1.0;
                    }
                }
                *c = (sum / count - 128.0) / PAINT_AMP;
            }
            let token = self.lift_content(&content);
            tokens[strip * self.cfg.d_v..(strip + 1) * self.cfg.d_v].copy_from_slice(&token);
        }
        let tokens = Tensor::matrix(l_v, self.cfg.d_v, tokens).expect("token shape");
        let global = mean_rows(&tokens);
        (tokens, global)
    }

    /// Map a content vector into token space through the planted basis.
    pub fn lift_content(&self, content: &[f64]) -> Vec<f64> {
        let d_v = self.cfg.d_v;
        let mut out = vec![0.0; d_v];
        for (f, &c) in content.iter().enumerate() {
            for j in 0..d_v {
                out[j] += c * self.basis.at(f, j);
            }
        }
        out
    }

    /// Project a d_v vector onto content coordinates (U·x).
    pub fn project_content(&self, x: &[f64]) -> Vec<f64> {
        (0..self.cfg.content_dims)
            .map(|f| (0..self.cfg.d_v).map(|j| self.basis.at(f, j) * x[j]).sum())
            .collect()
    }

    /// Accept a precomputed L_v × d_v feature blob verbatim.
    pub fn ingest_image_blob(&self, t: Tensor) -> Result<(Tensor, Tensor)> {
        let expected = [self.cfg.l_v, self.cfg.d_v];
        if t.shape() != expected {
            return Err(Error::dimension(
                "image feature blob",
                format!("{expected:?}"),
                format!("{:?}", t.shape()),
            ));
        }
        let global = mean_rows(&t);
        Ok((t, global))
    }

    // ── Text ─────────────────────────────────────────────────────────

    /// Whitespace tokens, truncated at the cap.
    pub fn tokenize<'a>(&self, text: &'a str) -> Vec<&'a str> {
        text.split_whitespace().take(self.cfg.max_title_tokens).collect()
    }

    /// Deterministic per-token embedding (no position).
    pub fn token_embedding(&self, token: &str) -> Vec<f64> {
        let mut rng = NamedRng::derive(self.cfg.seed, &format!("enc.txt.tok.{token}"));
        let scale = 1.0 / (self.cfg.d_v as f64).sqrt();
        (0..self.cfg.d_v).map(|_| rng.gaussian() * scale).collect()
    }

    /// L_t × d_v token embeddings with sinusoidal position offsets.
    pub fn encode_text(&self, text: &str) -> Result<Tensor> {
        let tokens = self.tokenize(text);
        if tokens.is_empty() {
            return Err(Error::Contract("encode_text on empty text".into()));
        }
        let d_v = self.cfg.d_v;
        let pos = crate::nn::sinusoidal_positions(tokens.len(), d_v);
        let mut data = vec![0.0; tokens.len() * d_v];
        for (i, tok) in tokens.iter().enumerate() {
            let base = self.token_embedding(tok);
            for j in 0..d_v {
                data[i * d_v + j] = base[j] + POS_SCALE * pos.at(i, j);
            }
        }
        Tensor::matrix(tokens.len(), d_v, data)
    }

    /// Global title vector: mean over position-free token embeddings.
    pub fn title_global(&self, title: &str) -> Result<Tensor> {
        let tokens = self.tokenize(title);
        if tokens.is_empty() {
            return Err(Error::Contract("title_global on empty title".into()));
        }
        let d_v = self.cfg.d_v;
        let mut acc = vec![0.0; d_v];
        for tok in &tokens {
            for (a, v) in acc.iter_mut().zip(self.token_embedding(tok)) {
                *a += v;
            }
        }
        for a in &mut acc {
            *a /= tokens.len() as f64;
        }
        Ok(Tensor::row(acc))
    }

    /// Mean position-free embedding of a token set (the corpus synthesizer
    /// uses this to derive planted image content from metadata).
    pub fn semantic_vector(&self, tokens: &[&str]) -> Vec<f64> {
        let d_v = self.cfg.d_v;
        let mut acc = vec![0.0; d_v];
        for tok in tokens {
            for (a, v) in acc.iter_mut().zip(self.token_embedding(tok)) {
                *a += v;
            }
        }
        for a in &mut acc {
            *a /= tokens.len().max(1) as f64;
        }
        acc
    }

    // ── Painting (synthetic world) ───────────────────────────────────

    /// Paint a content vector into an image: every strip carries the same
    /// per-segment brightness pattern plus per-pixel texture noise.
    pub fn paint(&self, content: &[f64], width: usize, height: usize, texture: &mut NamedRng) -> Image {
        assert_eq!(content.len(), self.cfg.content_dims);
        let d_f = self.cfg.content_dims;
        let mut img = Image::new(width, height, [128, 128, 128]);
        for y in 0..height {
            for x in 0..width {
                let seg = (x * d_f / width).min(d_f - 1);
                let base = 128.0 + PAINT_AMP * content[seg];
                let noise = texture.uniform_in(-TEXTURE_AMP, TEXTURE_AMP);
                let v = (base + noise).round().clamp(0.0, 255.0) as u8;
                img.set(x, y, [v, v, v]);
            }
        }
        img
    }
}

fn mean_rows(t: &Tensor) -> Tensor {
    let (r, c) = (t.rows(), t.cols());
    let mut out = vec![0.0; c];
    for i in 0..r {
        for j in 0..c {
            out[j] += t.at(i, j);
        }
    }
    for v in &mut out {
        *v /= r as f64;
    }
    Tensor::row(out)
}

/// Gram-Schmidt rows from a seeded Gaussian draw.
fn orthonormal_rows(seed: u64, rows: usize, cols: usize) -> Tensor {
    assert!(rows <= cols);
    let mut rng = NamedRng::derive(seed, "enc.content.basis");
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(rows);
    while basis.len() < rows {
        let mut v: Vec<f64> = (0..cols).map(|_| rng.gaussian()).collect();
        for prev in &basis {
            let dot: f64 = v.iter().zip(prev).map(|(a, b)| a * b).sum();
            for (x, p) in v.iter_mut().zip(prev) {
                *x -= dot * p;
            }
        }
        let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-8 {
            for x in &mut v {
                *x /= norm;
            }
            basis.push(v);
        }
    }
    Tensor::matrix(rows, cols, basis.concat()).expect("basis shape")
}

#[cfg(test)]
mod tests {
    use super::*;

    fn enc() -> Encoder {
        Encoder::new(EncoderConfig::default()).unwrap()
    }

    #[test]
    fn config_bounds_are_enforced() {
        let mut cfg = EncoderConfig::default();
        cfg.d_v = 3;
        assert!(Encoder::new(cfg).is_err());
        let mut cfg = EncoderConfig::default();
        cfg.content_dims = cfg.d_v;
        assert!(Encoder::new(cfg).is_err());
    }

    #[test]
    fn basis_rows_are_orthonormal() {
        let e = enc();
        let b = e.planted_basis();
        for i in 0..b.rows() {
            for j in 0..b.rows() {
                let dot: f64 = (0..b.cols()).map(|k| b.at(i, k) * b.at(j, k)).sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((dot - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn ingest_blob_accepted_verbatim_and_mean_pooled() {
        let e = enc();
        let ones = Tensor::full(vec![e.cfg.l_v, e.cfg.d_v], 1.0);
        let (tokens, global) = e.ingest_image_blob(ones.clone()).unwrap();
        assert_eq!(tokens, ones);
        assert!(global.data().iter().all(|&v| v == 1.0));

        let bad = Tensor::zeros(vec![e.cfg.l_v + 1, e.cfg.d_v]);
        let err = e.ingest_image_blob(bad).unwrap_err();
        assert!(err.to_string().contains("expected"));
    }

    #[test]
    fn global_pool_of_constant_tokens_is_that_constant() {
        // mean pooling over an all-ones 4x3 token block
        let t = Tensor::full(vec![4, 3], 1.0);
        let m = mean_rows(&t);
        assert_eq!(m.data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn same_image_encodes_identically() {
        let e = enc();
        let mut tex = NamedRng::derive(5, "tex");
        let img = e.paint(&[0.3, -0.2, 0.5, 0.0, -0.4, 0.1], 60, 60, &mut tex);
        let (a, ga) = e.encode_image_pixels(&img);
        let (b, gb) = e.encode_image_pixels(&img);
        assert_eq!(a, b);
        assert_eq!(ga, gb);
    }

    #[test]
    fn painted_content_is_recovered_in_planted_subspace() {
        let e = enc();
        let content = [0.4, -0.3, 0.2, -0.1, 0.35, -0.25];
        let mut tex = NamedRng::derive(6, "tex2");
        let img = e.paint(&content, 60, 60, &mut tex);
        let (tokens, _) = e.encode_image_pixels(&img);
        // each token should decode back to roughly the painted content
        for strip in 0..tokens.rows() {
            let row: Vec<f64> = (0..tokens.cols()).map(|j| tokens.at(strip, j)).collect();
            let decoded = e.project_content(&row);
            for (d, c) in decoded.iter().zip(content.iter()) {
                assert!((d - c).abs() < 0.05, "decoded {d} vs painted {c}");
            }
        }
    }

    #[test]
    fn text_truncates_at_fifty_tokens() {
        let e = enc();
        let long: Vec<String> = (0..60).map(|i| format!("tok{i}")).collect();
        let t = e.encode_text(&long.join(" ")).unwrap();
        assert_eq!(t.rows(), 50);
        let one = e.encode_text("solo").unwrap();
        assert_eq!(one.rows(), 1);
    }

    #[test]
    fn empty_text_is_a_contract_error() {
        let e = enc();
        assert!(matches!(e.encode_text("  "), Err(Error::Contract(_))));
        assert!(matches!(e.title_global(""), Err(Error::Contract(_))));
    }

    #[test]
    fn repeated_token_keeps_base_plus_position_structure() {
        let e = enc();
        let t = e.encode_text("red red").unwrap();
        let base = e.token_embedding("red");
        let pos = crate::nn::sinusoidal_positions(2, e.cfg.d_v);
        for j in 0..e.cfg.d_v {
            assert!((t.at(0, j) - (base[j] + POS_SCALE * pos.at(0, j))).abs() < 1e-12);
            assert!((t.at(1, j) - (base[j] + POS_SCALE * pos.at(1, j))).abs() < 1e-12);
        }
    }

    #[test]
    fn title_global_is_duplication_invariant() {
        let e = enc();
        let once = e.title_global("alpha beta").unwrap();
        let twice = e.title_global("alpha beta alpha beta").unwrap();
        for (a, b) in once.data().iter().zip(twice.data()) {
            assert!((a - b).abs() < 1e-12);
        }
        // single-token title equals that token's embedding
        let single = e.title_global("alpha").unwrap();
        assert_eq!(single.data(), e.token_embedding("alpha").as_slice());
    }
}
