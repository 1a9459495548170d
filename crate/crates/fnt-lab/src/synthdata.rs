//! Synthetic two-domain data: weighted bigram word chains for text, and
//! deterministic per-token acoustic templates plus Gaussian noise for
//! features. The general and adaptation domains share one word list and
//! one template set; only the transition weights differ, so adaptation
//! shifts language priors without touching acoustics.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nncore::Mat;
use crate::tokenizer::Vocabulary;

#[derive(Debug, Clone)]
pub struct DomainSpec {
    pub words: Vec<String>,
    /// Row w = transition weights out of word w; non-negative, each row
    /// must have positive sum.
    pub bigram_weights: Mat,
    pub sentence_len: (usize, usize),
    pub seed: u64,
}

impl DomainSpec {
    pub fn validate(&self) -> Result<()> {
        let n = self.words.len();
        if self.bigram_weights.rows != n || self.bigram_weights.cols != n {
            return Err(Error::ShapeMismatch(format!("bigram table must be {n}×{n}")));
        }
        if self.bigram_weights.data.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::Format("bigram weights must be non-negative".into()));
        }
        for r in 0..n {
            if self.bigram_weights.row(r).iter().sum::<f64>() <= 0.0 {
                return Err(Error::Format(format!("bigram row {r} sums to zero")));
            }
        }
        let (lo, hi) = self.sentence_len;
        if lo < 1 || hi < lo {
            return Err(Error::Format("sentence length range must satisfy 1 ≤ min ≤ max".into()));
        }
        Ok(())
    }
}

/// T × D acoustic frames.
#[derive(Debug, Clone)]
pub struct FeatureSequence {
    pub frames: Mat,
}

impl FeatureSequence {
    pub fn len(&self) -> usize {
        self.frames.rows
    }

    pub fn is_empty(&self) -> bool {
        self.frames.rows == 0
    }

    pub fn dim(&self) -> usize {
        self.frames.cols
    }
}

fn weighted_choice(weights: &[f64], rng: &mut ChaCha8Rng) -> usize {
    let total: f64 = weights.iter().sum();
    let mut pick = rng.gen_range(0.0..total);
    for (i, w) in weights.iter().enumerate() {
        pick -= w;
        if pick < 0.0 {
            return i;
        }
    }
    weights.len() - 1
}

/// Deterministic given the spec seed; sentence i derives its generator
/// from (seed, i), so generation can shard without changing output.
pub fn sample_text(spec: &DomainSpec, n: usize) -> Result<Vec<String>> {
    spec.validate()?;
    let n_words = spec.words.len();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        rng.set_stream(i as u64 + 1);
        let len = rng.gen_range(spec.sentence_len.0..=spec.sentence_len.1);
        let mut words = Vec::with_capacity(len);
        let mut cur = rng.gen_range(0..n_words);
        words.push(spec.words[cur].as_str());
        for _ in 1..len {
            cur = weighted_choice(spec.bigram_weights.row(cur), &mut rng);
            words.push(spec.words[cur].as_str());
        }
        out.push(words.join(" "));
    }
    Ok(out)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h = (h ^ *b as u64).wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box–Muller; the second draw is discarded for simplicity.
    let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Fixed D-dimensional template for one unit, seeded by the unit string so
/// the same unit gets the same acoustics in every domain and vocabulary.
pub fn token_template(unit: &str, dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(unit.as_bytes()) ^ 0x5eed_7e4c);
    (0..dim).map(|_| gaussian(&mut rng)).collect()
}

/// Emit each token for a uniformly drawn duration of template frames plus
/// additive Gaussian noise.
pub fn synthesize_features(
    tokens: &[usize],
    vocab: &Vocabulary,
    dim: usize,
    dur_range: (usize, usize),
    noise_sd: f64,
    seed: u64,
) -> Result<FeatureSequence> {
    if tokens.is_empty() {
        return Err(Error::EmptyUtterance);
    }
    if let Some(&bad) = tokens.iter().find(|&&t| t >= vocab.size()) {
        return Err(Error::IdOutOfRange { id: bad, vocab: vocab.size() });
    }
    let (lo, hi) = dur_range;
    assert!(lo >= 1 && hi >= lo, "duration range must satisfy 1 ≤ min ≤ max");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows: Vec<f64> = Vec::new();
    let mut t_total = 0;
    for &tok in tokens {
        let template = token_template(vocab.unit(tok), dim);
        let dur = rng.gen_range(lo..=hi);
        for _ in 0..dur {
            for d in 0..dim {
                let noise = if noise_sd > 0.0 { noise_sd * gaussian(&mut rng) } else { 0.0 };
                rows.push(template[d] + noise);
            }
            t_total += 1;
        }
    }
    Ok(FeatureSequence { frames: Mat::from_vec(t_total, dim, rows) })
}

/// One manifest row: utterance id, transcript, feature file.
#[derive(Debug, Clone)]
pub struct ManifestEntry {
    pub id: String,
    pub transcript: String,
    pub feat_path: PathBuf,
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut body = String::new();
    for e in entries {
        body.push_str(&format!("{}\t{}\t{}\n", e.id, e.transcript, e.feat_path.display()));
    }
    fs::write(path, body).map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new(""));
    let mut entries = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::Format(format!(
                "{}:{}: expected 3 tab-separated fields",
                path.display(),
                ln + 1
            )));
        }
        let feat = PathBuf::from(fields[2]);
        let feat_path = if feat.is_absolute() { feat } else { base.join(feat) };
        entries.push(ManifestEntry {
            id: fields[0].to_string(),
            transcript: fields[1].to_string(),
            feat_path,
        });
    }
    Ok(entries)
}

/// Feature file: 8-byte header (T, D as little-endian u32) then row-major
/// little-endian f32 frames.
pub fn write_features(path: &Path, feats: &FeatureSequence) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut buf = Vec::with_capacity(8 + feats.frames.data.len() * 4);
    buf.extend_from_slice(&(feats.len() as u32).to_le_bytes());
    buf.extend_from_slice(&(feats.dim() as u32).to_le_bytes());
    for v in &feats.frames.data {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

pub fn read_features(path: &Path) -> Result<FeatureSequence> {
    let mut f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::new();
    f.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    if bytes.len() < 8 {
        return Err(Error::Format(format!("{}: truncated header", path.display())));
    }
    let t = u32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]) as usize;
    let d = u32::from_le_bytes([bytes[4], bytes[5], bytes[6], bytes[7]]) as usize;
    if bytes.len() != 8 + t * d * 4 {
        return Err(Error::Format(format!("{}: size does not match header", path.display())));
    }
    let data: Vec<f64> = bytes[8..]
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    Ok(FeatureSequence { frames: Mat::from_vec(t, d, data) })
}

/// Fixture word list shared by both domains: short, highly confusable
/// words over a five-letter alphabet, so the language prior has to carry
/// weight during decoding.
pub fn fixture_words() -> Vec<String> {
    ["bat", "bet", "bad", "bed", "tab", "ted", "dab", "deb"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

fn peaked_weights(n: usize, favored: impl Fn(usize) -> usize, peak: f64) -> Mat {
    let mut m = Mat::from_vec(n, n, vec![1.0; n * n]);
    for r in 0..n {
        let c = favored(r);
        m.set(r, c, peak);
    }
    m
}

/// General-domain fixture: each word strongly prefers the next word in
/// list order.
pub fn general_domain(seed: u64) -> DomainSpec {
    let words = fixture_words();
    let n = words.len();
    DomainSpec {
        words,
        bigram_weights: peaked_weights(n, |r| (r + 1) % n, 12.0),
        sentence_len: (3, 6),
        seed,
    }
}

/// Adaptation-domain fixture: same words, but transitions jump three
/// positions, so word-pair statistics shift while acoustics stay put.
pub fn adaptation_domain(seed: u64) -> DomainSpec {
    let words = fixture_words();
    let n = words.len();
    DomainSpec {
        words,
        bigram_weights: peaked_weights(n, |r| (r + 3) % n, 12.0),
        sentence_len: (3, 6),
        seed,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tokenizer::TokenizerMode;

    fn char_vocab() -> Vocabulary {
        Vocabulary::build(&["abt de".to_string()], TokenizerMode::Char).unwrap()
    }

    #[test]
    fn sampling_is_deterministic_given_seed() {
        let spec = general_domain(42);
        let a = sample_text(&spec, 3).unwrap();
        let b = sample_text(&spec, 3).unwrap();
        assert_eq!(a.len(), 3);
        assert_eq!(a, b);
    }

    #[test]
    fn degenerate_single_word_chain() {
        let spec = DomainSpec {
            words: vec!["go".into()],
            bigram_weights: Mat::from_vec(1, 1, vec![1.0]),
            sentence_len: (2, 2),
            seed: 1,
        };
        for line in sample_text(&spec, 5).unwrap() {
            assert_eq!(line, "go go");
        }
    }

    #[test]
    fn different_seeds_differ_somewhere() {
        let a = sample_text(&general_domain(1), 100).unwrap();
        let b = sample_text(&general_domain(2), 100).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn durations_add_up_and_shape_is_t_by_d() {
        let v = char_vocab();
        let feats = synthesize_features(&[1, 2], &v, 16, (3, 3), 0.0, 9).unwrap();
        assert_eq!(feats.len(), 6);
        assert_eq!(feats.dim(), 16);
    }

    #[test]
    fn zero_noise_is_deterministic() {
        let v = char_vocab();
        let a = synthesize_features(&[1, 2, 3], &v, 8, (2, 4), 0.0, 5).unwrap();
        let b = synthesize_features(&[1, 2, 3], &v, 8, (2, 4), 0.0, 5).unwrap();
        assert_eq!(a.frames.data, b.frames.data);
    }

    #[test]
    fn noisy_frames_stay_near_templates() {
        let v = char_vocab();
        let noise_sd = 0.1;
        let dim = 16;
        let tokens: Vec<usize> = (0..250).map(|i| 1 + (i % (v.size() - 1))).collect();
        let feats = synthesize_features(&tokens, &v, dim, (4, 4), noise_sd, 11).unwrap();
        let mut total = 0.0;
        for (i, &tok) in tokens.iter().enumerate() {
            let template = token_template(v.unit(tok), dim);
            for f in 0..4 {
                let row = feats.frames.row(i * 4 + f);
                let dist: f64 =
                    row.iter().zip(&template).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
                total += dist;
            }
        }
        let mean = total / feats.len() as f64;
        assert!(mean < 3.0 * noise_sd * (dim as f64).sqrt(), "mean distance {mean}");
    }

    #[test]
    fn templates_of_distinct_units_differ() {
        let v = char_vocab();
        for a in 0..v.size() {
            for b in (a + 1)..v.size() {
                let ta = token_template(v.unit(a), 16);
                let tb = token_template(v.unit(b), 16);
                let dist: f64 = ta.iter().zip(&tb).map(|(x, y)| (x - y) * (x - y)).sum();
                assert!(dist > 0.0, "units {a} and {b} share a template");
            }
        }
    }

    #[test]
    fn empty_utterance_is_an_error() {
        let v = char_vocab();
        assert_eq!(
            synthesize_features(&[], &v, 4, (1, 2), 0.0, 1).unwrap_err().code(),
            "empty-utterance"
        );
    }

    #[test]
    fn fixture_domains_share_words_but_not_weights() {
        let g = general_domain(7);
        let a = adaptation_domain(7);
        assert_eq!(g.words, a.words);
        assert_ne!(g.bigram_weights.data, a.bigram_weights.data);
        g.validate().unwrap();
        a.validate().unwrap();
    }

    #[test]
    fn feature_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("utt0.feat");
        let v = char_vocab();
        let feats = synthesize_features(&[1, 2], &v, 4, (2, 2), 0.1, 3).unwrap();
        write_features(&path, &feats).unwrap();
        let loaded = read_features(&path).unwrap();
        assert_eq!(loaded.len(), feats.len());
        assert_eq!(loaded.dim(), feats.dim());
        for (a, b) in loaded.frames.data.iter().zip(&feats.frames.data) {
            assert!((a - b).abs() < 1e-6); // f32 round trip
        }
    }

    #[test]
    fn manifest_round_trip_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let manifest = dir.path().join("train.tsv");
        let entries = vec![ManifestEntry {
            id: "utt0".into(),
            transcript: "bat bet".into(),
            feat_path: PathBuf::from("feats/utt0.feat"),
        }];
        write_manifest(&manifest, &entries).unwrap();
        let loaded = read_manifest(&manifest).unwrap();
        assert_eq!(loaded[0].id, "utt0");
        assert_eq!(loaded[0].transcript, "bat bet");
        assert!(loaded[0].feat_path.starts_with(dir.path()));
    }
}
