//! Item corpora: records, validation, pair construction, and the planted
//! synthetic generator.
//!
//! Corpus files are newline-delimited JSON records. Pair files are
//! `query_id<TAB>target_id` lines; blocklists are one id per line. The
//! related graph is directed and never symmetrized. Items that fail
//! validation are dropped (and reported), never patched.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::encoders::Encoder;
use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::NamedRng;

/// One product record.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ItemRecord {
    pub item_id: String,
    pub title: String,
    pub brand: String,
    /// Exactly 3 levels after validation.
    pub categories: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_ref: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_ref: Option<String>,
    #[serde(default)]
    pub related: Vec<String>,
}

impl ItemRecord {
    /// Text fed to the metadata encoder: brand, categories, then title.
    pub fn metadata_text(&self) -> String {
        format!("{} {} {}", self.brand, self.categories.join(" "), self.title)
    }
}

/// Keep the first three category levels; pad by repeating the last level.
pub fn parse_categories(raw_path: &[String]) -> Result<[String; 3]> {
    if raw_path.is_empty() {
        return Err(Error::Contract("empty category path".into()));
    }
    let mut out = [const { String::new() }; 3];
    for (i, slot) in out.iter_mut().enumerate() {
        let idx = i.min(raw_path.len() - 1);
        *slot = raw_path[idx].clone();
    }
    Ok(out)
}

/// A validated, id-indexed corpus.
pub struct Corpus {
    items: Vec<ItemRecord>,
    index: BTreeMap<String, usize>,
    base_dir: PathBuf,
}

impl Corpus {
    /// Build from records, dropping invalid ones. Returns the corpus and one
    /// reason string per dropped record.
    pub fn from_records(records: Vec<ItemRecord>, base_dir: PathBuf) -> (Corpus, Vec<String>) {
        let mut items = Vec::with_capacity(records.len());
        let mut index = BTreeMap::new();
        let mut dropped = Vec::new();
        for mut rec in records {
            if rec.item_id.is_empty() {
                dropped.push("record with empty item_id".to_string());
                continue;
            }
            if rec.title.trim().is_empty() {
                dropped.push(format!("{}: empty title", rec.item_id));
                continue;
            }
            match parse_categories(&rec.categories) {
                Ok(cats) => rec.categories = cats.to_vec(),
                Err(_) => {
                    dropped.push(format!("{}: empty category path", rec.item_id));
                    continue;
                }
            }
            match (&rec.image_ref, &rec.feature_ref) {
                (Some(_), None) | (None, Some(_)) => {}
                _ => {
                    dropped.push(format!("{}: needs exactly one of image_ref/feature_ref", rec.item_id));
                    continue;
                }
            }
            if index.contains_key(&rec.item_id) {
                dropped.push(format!("{}: duplicate id", rec.item_id));
                continue;
            }
            index.insert(rec.item_id.clone(), items.len());
            items.push(rec);
        }
        (Corpus { items, index, base_dir }, dropped)
    }

    pub fn load(path: &Path) -> Result<(Corpus, Vec<String>)> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut records = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: ItemRecord = serde_json::from_str(line)
                .map_err(|e| Error::Parse(format!("{}:{}: {e}", path.display(), lineno + 1)))?;
            records.push(rec);
        }
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        Ok(Corpus::from_records(records, base))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for item in &self.items {
            out.push_str(&serde_json::to_string(item).expect("record serializes"));
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[ItemRecord] {
        &self.items
    }

    pub fn get(&self, id: &str) -> Option<&ItemRecord> {
        self.index.get(id).map(|&i| &self.items[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    /// Directory file refs resolve against.
    pub fn base_dir(&self) -> &Path {
        &self.base_dir
    }
}

/// Directed (query, target) pairs.
#[derive(Debug, Clone)]
pub struct PairSet {
    pub pairs: Vec<(String, String)>,
    pub seed: u64,
    pub cap: usize,
}

impl PairSet {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for (q, t) in &self.pairs {
            out.push_str(q);
            out.push('\t');
            out.push_str(t);
            out.push('\n');
        }
        fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
    }

    pub fn load(path: &Path) -> Result<Vec<(String, String)>> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
        let mut pairs = Vec::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (q, t) = line
                .split_once('\t')
                .ok_or_else(|| Error::Parse(format!("bad pair line: {line}")))?;
            pairs.push((q.to_string(), t.to_string()));
        }
        Ok(pairs)
    }
}

pub fn save_blocklist(path: &Path, blocklist: &BTreeSet<String>) -> Result<()> {
    let mut out = String::new();
    for id in blocklist {
        out.push_str(id);
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_blocklist(path: &Path) -> Result<BTreeSet<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(text.lines().filter(|l| !l.trim().is_empty()).map(|l| l.to_string()).collect())
}

/// Enumerate directed related pairs, drop blocklisted ends, shuffle with the
/// seed, and truncate to `cap`.
pub fn build_pairs(corpus: &Corpus, blocklist: &BTreeSet<String>, cap: usize, seed: u64) -> PairSet {
    let mut pairs = Vec::new();
    for item in corpus.items() {
        if blocklist.contains(&item.item_id) {
            continue;
        }
        for target in &item.related {
            if corpus.contains(target) && !blocklist.contains(target) {
                pairs.push((item.item_id.clone(), target.clone()));
            }
        }
    }
    let mut rng = NamedRng::derive(seed, "corpus.pairs.shuffle");
    rng.shuffle(&mut pairs);
    pairs.truncate(cap);
    PairSet { pairs, seed, cap }
}

/// Sampled test pairs plus the blocklist / candidate pool they induce.
pub struct TestSplit {
    pub pairs: PairSet,
    /// Every id appearing in the pairs; doubles as the candidate pool.
    pub blocklist: BTreeSet<String>,
    /// True when fewer than the requested pairs could be formed.
    pub shortfall: bool,
}

/// Shuffle ids with the seed, take each candidate query's first valid
/// related target, and stop after `n_pairs`. Queries without a valid target
/// are skipped.
pub fn sample_test_pairs(corpus: &Corpus, n_pairs: usize, seed: u64) -> Result<TestSplit> {
    if n_pairs < 1 {
        return Err(Error::Contract("sample_test_pairs needs n_pairs >= 1".into()));
    }
    let mut ids: Vec<&str> = corpus.items().iter().map(|i| i.item_id.as_str()).collect();
    let mut rng = NamedRng::derive(seed, "corpus.test.shuffle");
    rng.shuffle(&mut ids);

    let mut pairs = Vec::new();
    let mut blocklist = BTreeSet::new();
    for id in ids {
        if pairs.len() >= n_pairs {
            break;
        }
        let item = corpus.get(id).expect("listed id");
        let target = item.related.iter().find(|t| corpus.contains(t));
        if let Some(target) = target {
            pairs.push((id.to_string(), target.clone()));
            blocklist.insert(id.to_string());
            blocklist.insert(target.clone());
        }
    }
    let shortfall = pairs.len() < n_pairs;
    Ok(TestSplit {
        pairs: PairSet { pairs, seed, cap: n_pairs },
        blocklist,
        shortfall,
    })
}

/// Knobs for the planted synthetic corpus.
#[derive(Debug, Clone)]
pub struct SynthOpts {
    pub n_items: usize,
    pub n_brands: usize,
    pub n_cats: usize,
    /// 0 = images carry pure noise, 1 = images are fully product-driven.
    pub planted_overlap: f64,
    pub seed: u64,
    pub image_size: usize,
}

impl Default for SynthOpts {
    fn default() -> Self {
        SynthOpts {
            n_items: 200,
            n_brands: 10,
            n_cats: 5,
            planted_overlap: 0.9,
            seed: 42,
            image_size: 60,
        }
    }
}

/// Generated corpus: records plus the painted images backing their refs.
pub struct SynthCorpus {
    pub items: Vec<ItemRecord>,
    /// (relative path, image) in record order.
    pub images: Vec<(String, Image)>,
}

/// Number of latent product factors for a corpus size (about 4 items each).
pub fn factor_count(n_items: usize) -> usize {
    (n_items / 4).max(1)
}

/// Mix of planted signal and item noise that drives an item's image.
///
/// The planted part blends a metadata-derived direction (so image and title
/// globals agree) with a factor-specific direction (so images separate items
/// sharing the same coarse text). `overlap` then trades the blend against
/// per-item noise.
pub fn item_content(
    encoder: &Encoder,
    semantic: &[f64],
    factor_dir: &[f64],
    noise_dir: &[f64],
    overlap: f64,
) -> Vec<f64> {
    let sem_c = normalize(encoder.project_content(semantic));
    let mut planted: Vec<f64> = sem_c
        .iter()
        .zip(factor_dir)
        .map(|(s, f)| 0.5 * s + 0.5 * f)
        .collect();
    planted = normalize(planted);
    let mixed: Vec<f64> = planted
        .iter()
        .zip(noise_dir)
        .map(|(p, n)| overlap * p + (1.0 - overlap) * n)
        .collect();
    normalize(mixed)
}

fn normalize(mut v: Vec<f64>) -> Vec<f64> {
    let n: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 1e-12 {
        for x in &mut v {
            *x /= n;
        }
    }
    v
}

fn unit_vector(rng: &mut NamedRng, dims: usize) -> Vec<f64> {
    normalize((0..dims).map(|_| rng.gaussian()).collect())
}

/// Generate a planted-structure corpus.
///
/// Items sharing a latent factor are mutually related. Text fields are
/// nested interval coarsenings of the factor index (brand and every category
/// level), so metadata narrows a query down to a factor block but never to a
/// single factor; images carry the fine identity.
pub fn synth_corpus(encoder: &Encoder, opts: &SynthOpts) -> Result<SynthCorpus> {
    if opts.n_items < 1 {
        return Err(Error::Contract("synth_corpus needs at least one item".into()));
    }
    if !(0.0..=1.0).contains(&opts.planted_overlap) {
        return Err(Error::Config(format!(
            "planted_overlap must be in [0, 1], got {}",
            opts.planted_overlap
        )));
    }
    let n = opts.n_items;
    let n_factors = factor_count(n);
    let d_f = encoder.config().content_dims;
    let c1_count = opts.n_cats.max(1).min(n_factors);
    let c2_count = (2 * opts.n_cats).max(1).min(n_factors);
    let c3_count = (5 * opts.n_cats).max(1).min(n_factors);
    let b_count = opts.n_brands.max(1).min(n_factors);

    // factor -> member item indices
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); n_factors];
    for i in 0..n {
        groups[i % n_factors].push(i);
    }

    let mut items = Vec::with_capacity(n);
    let mut images = Vec::with_capacity(n);
    for i in 0..n {
        let factor = i % n_factors;
        let item_id = format!("item{i:06}");
        let c1 = factor * c1_count / n_factors;
        let c2 = factor * c2_count / n_factors;
        let c3 = factor * c3_count / n_factors;
        let brand_idx = factor * b_count / n_factors;

        let mut title_rng = NamedRng::derive(opts.seed, &format!("corpus.title.{item_id}"));
        let f1 = title_rng.below(50);
        let f2 = title_rng.below(50);
        let title = format!("prod{c2} kind{c3} fx{f1} fx{f2}");
        let brand = format!("brand{brand_idx}");
        let categories = vec![format!("cat{c1}"), format!("sub{c2}"), format!("leaf{c3}")];

        let semantic_tokens = [format!("kind{c3}"), format!("sub{c2}"), brand.clone()];
        let semantic = encoder.semantic_vector(&[
            semantic_tokens[0].as_str(),
            semantic_tokens[1].as_str(),
            semantic_tokens[2].as_str(),
        ]);
        let mut factor_rng = NamedRng::derive(opts.seed, &format!("corpus.factor.{factor}"));
        let factor_dir = unit_vector(&mut factor_rng, d_f);
        let mut noise_rng = NamedRng::derive(opts.seed, &format!("corpus.noise.{item_id}"));
        let noise_dir = unit_vector(&mut noise_rng, d_f);
        let content = item_content(encoder, &semantic, &factor_dir, &noise_dir, opts.planted_overlap);

        let mut texture = NamedRng::derive(opts.seed, &format!("corpus.texture.{item_id}"));
        let img = encoder.paint(&content, opts.image_size, opts.image_size, &mut texture);
        let image_ref = format!("images/{item_id}.ppm");

        let related: Vec<String> = groups[factor]
            .iter()
            .filter(|&&j| j != i)
            .map(|&j| format!("item{j:06}"))
            .collect();

        items.push(ItemRecord {
            item_id,
            title,
            brand,
            categories,
            image_ref: Some(image_ref.clone()),
            feature_ref: None,
            related,
        });
        images.push((image_ref, img));
    }
    Ok(SynthCorpus { items, images })
}

/// Write a synthetic corpus to `dir`: `corpus.jsonl` plus `images/`.
pub fn write_synth_corpus(dir: &Path, synth: &SynthCorpus) -> Result<()> {
    let images_dir = dir.join("images");
    fs::create_dir_all(&images_dir).map_err(|e| Error::io(images_dir.display().to_string(), e))?;
    for (rel, img) in &synth.images {
        img.write_ppm(&dir.join(rel))?;
    }
    let (corpus, dropped) = Corpus::from_records(synth.items.clone(), dir.to_path_buf());
    debug_assert!(dropped.is_empty(), "synthetic records must validate: {dropped:?}");
    corpus.save(&dir.join("corpus.jsonl"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::EncoderConfig;

    fn rec(id: &str, related: &[&str]) -> ItemRecord {
        ItemRecord {
            item_id: id.into(),
            title: format!("title {id}"),
            brand: "b".into(),
            categories: vec!["a".into(), "b".into(), "c".into()],
            image_ref: None,
            feature_ref: Some(format!("{id}.tgqt")),
            related: related.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn parse_categories_truncates_and_pads() {
        let four: Vec<String> = ["Clothing", "Men", "Shirts", "Casual"].iter().map(|s| s.to_string()).collect();
        assert_eq!(
            parse_categories(&four).unwrap(),
            ["Clothing".to_string(), "Men".to_string(), "Shirts".to_string()]
        );
        let two: Vec<String> = ["Clothing", "Men"].iter().map(|s| s.to_string()).collect();
        assert_eq!(
            parse_categories(&two).unwrap(),
            ["Clothing".to_string(), "Men".to_string(), "Men".to_string()]
        );
        let one = vec!["Jewelry".to_string()];
        assert_eq!(
            parse_categories(&one).unwrap(),
            ["Jewelry".to_string(), "Jewelry".to_string(), "Jewelry".to_string()]
        );
        assert!(parse_categories(&[]).is_err());
    }

    #[test]
    fn parse_categories_is_idempotent_on_three_levels() {
        let three: Vec<String> = ["A", "B", "C"].iter().map(|s| s.to_string()).collect();
        let first = parse_categories(&three).unwrap();
        let again = parse_categories(&first.to_vec()).unwrap();
        assert_eq!(first, again);
    }

    #[test]
    fn validation_drops_bad_records() {
        let mut no_title = rec("x1", &[]);
        no_title.title = "  ".into();
        let mut both_refs = rec("x2", &[]);
        both_refs.image_ref = Some("img.ppm".into());
        let mut no_cats = rec("x3", &[]);
        no_cats.categories = vec![];
        let good = rec("x4", &[]);
        let (corpus, dropped) =
            Corpus::from_records(vec![no_title, both_refs, no_cats, good], PathBuf::from("."));
        assert_eq!(corpus.len(), 1);
        assert_eq!(dropped.len(), 3);
        assert!(corpus.contains("x4"));
    }

    #[test]
    fn build_pairs_matches_reference_shuffle_order() {
        // three valid directed pairs in enumeration order
        let records = vec![rec("a", &["b"]), rec("b", &["c"]), rec("c", &["a"])];
        let (corpus, _) = Corpus::from_records(records, PathBuf::from("."));
        let got = build_pairs(&corpus, &BTreeSet::new(), 2, 42);

        // independent oracle: enumerate, then Fisher-Yates from the back with
        // j = next_u64 % (i+1) on the documented stream
        let mut expected = vec![
            ("a".to_string(), "b".to_string()),
            ("b".to_string(), "c".to_string()),
            ("c".to_string(), "a".to_string()),
        ];
        let mut rng = NamedRng::derive(42, "corpus.pairs.shuffle");
        let mut i = expected.len() - 1;
        while i >= 1 {
            let j = (rng.next_u64() % (i as u64 + 1)) as usize;
            expected.swap(i, j);
            i -= 1;
        }
        expected.truncate(2);
        assert_eq!(got.pairs, expected);
    }

    #[test]
    fn build_pairs_excludes_blocklisted_ends_and_honors_cap_zero() {
        let records = vec![rec("a", &["b", "c"]), rec("b", &["a"]), rec("c", &[])];
        let (corpus, _) = Corpus::from_records(records, PathBuf::from("."));
        let mut blocklist = BTreeSet::new();
        blocklist.insert("c".to_string());
        let pairs = build_pairs(&corpus, &blocklist, 100, 1);
        assert!(pairs.pairs.iter().all(|(q, t)| q != "c" && t != "c"));
        assert_eq!(pairs.pairs.len(), 2); // a->b, b->a

        let empty = build_pairs(&corpus, &blocklist, 0, 1);
        assert!(empty.pairs.is_empty());
    }

    #[test]
    fn build_pairs_on_empty_graph_is_empty() {
        let records = vec![rec("a", &[]), rec("b", &[])];
        let (corpus, _) = Corpus::from_records(records, PathBuf::from("."));
        assert!(build_pairs(&corpus, &BTreeSet::new(), 10, 7).pairs.is_empty());
    }

    #[test]
    fn sample_test_pairs_skips_items_without_valid_targets() {
        let records = vec![
            rec("a", &["missing"]), // only dangling target: skipped
            rec("b", &["c"]),
            rec("c", &["b"]),
        ];
        let (corpus, _) = Corpus::from_records(records, PathBuf::from("."));
        let split = sample_test_pairs(&corpus, 10, 5).unwrap();
        assert!(split.shortfall);
        assert!(split.pairs.pairs.iter().all(|(q, _)| q != "a"));
        for (q, t) in &split.pairs.pairs {
            assert!(split.blocklist.contains(q) && split.blocklist.contains(t));
        }
    }

    #[test]
    fn sample_test_pairs_on_mutual_pair_pools_two_ids() {
        let records = vec![rec("a", &["b"]), rec("b", &["a"])];
        let (corpus, _) = Corpus::from_records(records, PathBuf::from("."));
        let split = sample_test_pairs(&corpus, 1, 9).unwrap();
        assert_eq!(split.pairs.pairs.len(), 1);
        assert_eq!(split.blocklist.len(), 2);
        assert!(!split.shortfall);

        let again = sample_test_pairs(&corpus, 1, 9).unwrap();
        assert_eq!(split.pairs.pairs, again.pairs.pairs);
    }

    #[test]
    fn train_and_test_ids_are_disjoint_under_blocklist() {
        let encoder = Encoder::new(EncoderConfig::default()).unwrap();
        let synth = synth_corpus(&encoder, &SynthOpts { n_items: 60, ..Default::default() }).unwrap();
        let (corpus, _) = Corpus::from_records(synth.items, PathBuf::from("."));
        let split = sample_test_pairs(&corpus, 8, 3).unwrap();
        let train = build_pairs(&corpus, &split.blocklist, 1000, 3);
        for (q, t) in &train.pairs {
            assert!(!split.blocklist.contains(q));
            assert!(!split.blocklist.contains(t));
        }
    }

    #[test]
    fn synth_same_factor_items_are_mutually_related() {
        let encoder = Encoder::new(EncoderConfig::default()).unwrap();
        let synth = synth_corpus(&encoder, &SynthOpts { n_items: 8, ..Default::default() }).unwrap();
        // 8 items -> 2 factors -> items 0,2,4,6 share factor 0
        let a = &synth.items[0];
        let b = &synth.items[2];
        assert!(a.related.contains(&b.item_id));
        assert!(b.related.contains(&a.item_id));
    }

    #[test]
    fn synth_overlap_zero_ignores_planted_signal() {
        let encoder = Encoder::new(EncoderConfig::default()).unwrap();
        let sem_a = encoder.semantic_vector(&["kind0"]);
        let sem_b = encoder.semantic_vector(&["kind9"]);
        let factor = vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.0];
        let other = vec![0.0, 1.0, 0.0, 0.0, 0.0, 0.0];
        let noise = vec![0.0, 0.0, 1.0, 0.0, 0.0, 0.0];
        let a = item_content(&encoder, &sem_a, &factor, &noise, 0.0);
        let b = item_content(&encoder, &sem_b, &other, &noise, 0.0);
        assert_eq!(a, b); // only the noise direction survives
    }

    #[test]
    fn synth_is_reproducible_and_tiny_corpora_are_valid() {
        let encoder = Encoder::new(EncoderConfig::default()).unwrap();
        let opts = SynthOpts { n_items: 3, ..Default::default() };
        let a = synth_corpus(&encoder, &opts).unwrap();
        let b = synth_corpus(&encoder, &opts).unwrap();
        assert_eq!(a.items.len(), 3);
        for (x, y) in a.images.iter().zip(&b.images) {
            assert_eq!(x.1, y.1);
        }
        let (corpus, dropped) = Corpus::from_records(a.items, PathBuf::from("."));
        assert_eq!(corpus.len(), 3);
        assert!(dropped.is_empty());
    }

    #[test]
    fn corpus_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("corpus.jsonl");
        let records = vec![rec("a", &["b"]), rec("b", &[])];
        let (corpus, _) = Corpus::from_records(records, dir.path().to_path_buf());
        corpus.save(&path).unwrap();
        let (loaded, dropped) = Corpus::load(&path).unwrap();
        assert!(dropped.is_empty());
        assert_eq!(loaded.len(), 2);
        assert_eq!(loaded.get("a").unwrap().related, vec!["b".to_string()]);
    }
}
