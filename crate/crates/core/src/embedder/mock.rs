//! Deterministic feature-hashing embedder for offline runs and statistical calibration.
//!
//! Tokens (lowercased alphanumeric runs) are hashed with the seed into `dim` buckets
//! with a ±1 sign and summed. The unit bag-of-words vector can be perturbed by a
//! per-text Gaussian term (`noise`) and shifted by `delta · direction` when the text's
//! first token is a first name of a biased group; the result is renormalized.

use std::collections::HashSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use super::{basis, normalize, EmbeddingBackend, EmbeddingVector, Role};
use crate::error::{Error, Result};

pub const MIN_MOCK_DIM: usize = 8;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Seeded 64-bit hash of a byte string; stable across platforms and releases.
pub(crate) fn seeded_hash(seed: u64, bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET ^ splitmix64(seed);
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    splitmix64(h)
}

pub(crate) fn tokens(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
}

/// Shift applied to texts that open with one of `names`.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasInjection {
    names: HashSet<String>,
    delta: f64,
    direction: Vec<f64>,
}

impl BiasInjection {
    /// `direction` is normalized; `names` are matched case-insensitively.
    pub fn new(
        names: impl IntoIterator<Item = String>,
        delta: f64,
        direction: &[f32],
    ) -> Result<Self> {
        let unit = normalize(direction)
            .ok_or_else(|| Error::Domain("bias direction must be non-zero".into()))?;
        Ok(BiasInjection {
            names: names.into_iter().map(|n| n.to_lowercase()).collect(),
            delta,
            direction: unit.iter().map(|&x| x as f64).collect(),
        })
    }

    /// Direction taken from the unbiased mock embedding of `text`.
    pub fn toward_text(
        seed: u64,
        dim: usize,
        text: &str,
        delta: f64,
        names: impl IntoIterator<Item = String>,
    ) -> Result<Self> {
        let direction = MockEmbedder::new("direction", seed, dim, 0.0, None)?.embed(text);
        BiasInjection::new(names, delta, &direction)
    }

    pub fn applies_to(&self, text: &str) -> bool {
        tokens(text).next().is_some_and(|t| self.names.contains(&t))
    }
}

#[derive(Debug, Clone)]
pub struct MockEmbedder {
    id: String,
    seed: u64,
    dim: usize,
    noise: f64,
    bias: Option<BiasInjection>,
}

impl MockEmbedder {
    pub fn new(
        id: impl Into<String>,
        seed: u64,
        dim: usize,
        noise: f64,
        bias: Option<BiasInjection>,
    ) -> Result<Self> {
        if dim < MIN_MOCK_DIM {
            return Err(Error::Config(format!("mock dim must be at least {MIN_MOCK_DIM}, got {dim}")));
        }
        if let Some(b) = &bias {
            if b.direction.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    actual: b.direction.len(),
                });
            }
        }
        if !(noise >= 0.0) {
            return Err(Error::Config(format!("mock noise must be non-negative, got {noise}")));
        }
        Ok(MockEmbedder {
            id: id.into(),
            seed,
            dim,
            noise,
            bias,
        })
    }

    pub fn embed(&self, text: &str) -> Vec<f32> {
        let mut acc = vec![0.0f64; self.dim];
        for tok in tokens(text) {
            let h = seeded_hash(self.seed, tok.as_bytes());
            let bucket = (h % self.dim as u64) as usize;
            acc[bucket] += if h >> 63 == 1 { 1.0 } else { -1.0 };
        }
        let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            log::debug!("mock embedder: empty bag of words, using e1");
            return basis(self.dim);
        }
        acc.iter_mut().for_each(|x| *x /= norm);

        if self.noise > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seeded_hash(!self.seed, text.as_bytes()));
            let scale = self.noise / (self.dim as f64).sqrt();
            for x in acc.iter_mut() {
                let g: f64 = StandardNormal.sample(&mut rng);
                *x += scale * g;
            }
        }
        if let Some(b) = self.bias.as_ref().filter(|b| b.applies_to(text)) {
            for (x, d) in acc.iter_mut().zip(&b.direction) {
                *x += b.delta * d;
            }
        }
        let norm = acc.iter().map(|x| x * x).sum::<f64>().sqrt();
        acc.iter().map(|x| (x / norm) as f32).collect()
    }
}

impl EmbeddingBackend for MockEmbedder {
    fn backend_id(&self) -> &str {
        &self.id
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_raw(&self, texts: &[&str], _role: Role) -> Result<Vec<Vec<f32>>> {
        Ok(texts.par_iter().map(|t| self.embed(t)).collect())
    }
}

/// Noise-free mock embedding of one text.
pub fn mock_embed(seed: u64, dim: usize, text: &str, bias: Option<BiasInjection>) -> Result<EmbeddingVector> {
    let m = MockEmbedder::new("mock", seed, dim, 0.0, bias)?;
    Ok(EmbeddingVector::from_unit(m.embed(text), "mock".into()))
}
