//! Embedding backends behind one contract: unit-norm `f32` vectors, one per input text,
//! in input order.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::augment::QueryTemplate;
use crate::error::{Error, Result};
use crate::namebank::{NameBank, NameGroup};

pub mod cache;
pub mod mock;
pub mod remote;

pub use cache::{CacheKey, EmbeddingCache};
pub use mock::{mock_embed, BiasInjection, MockEmbedder};
pub use remote::{HealthStatus, RemoteBackend, RemoteConfig};

/// Maximum allowed deviation of `‖v‖₂` from 1.
pub const UNIT_NORM_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Query,
    Document,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::Query => "query",
            Role::Document => "document",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    values: Vec<f32>,
    backend_id: Arc<str>,
}

impl EmbeddingVector {
    /// Scales `raw` to unit length. A zero or non-finite vector becomes `e₁`.
    pub fn normalized(raw: &[f32], backend_id: Arc<str>) -> Self {
        let values = match normalize(raw) {
            Some(v) => v,
            None => {
                log::warn!("degenerate embedding from {backend_id}; substituting e1");
                basis(raw.len().max(1))
            }
        };
        EmbeddingVector { values, backend_id }
    }

    /// Wraps values that are already unit length (e.g. read back from the cache).
    pub(crate) fn from_unit(values: Vec<f32>, backend_id: Arc<str>) -> Self {
        EmbeddingVector { values, backend_id }
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn backend_id(&self) -> &str {
        &self.backend_id
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt()
    }
}

pub(crate) fn basis(dim: usize) -> Vec<f32> {
    let mut v = vec![0.0; dim];
    v[0] = 1.0;
    v
}

pub(crate) fn normalize(raw: &[f32]) -> Option<Vec<f32>> {
    let norm = raw.iter().map(|&x| (x as f64) * (x as f64)).sum::<f64>().sqrt();
    if !(norm > 0.0) || !norm.is_finite() {
        return None;
    }
    Some(raw.iter().map(|&x| (x as f64 / norm) as f32).collect())
}

/// Something that turns texts into raw vectors of a fixed width.
pub trait EmbeddingBackend: Send + Sync {
    fn backend_id(&self) -> &str;
    fn dim(&self) -> usize;
    /// One vector per text, in order. Vectors need not be normalized.
    fn embed_raw(&self, texts: &[&str], role: Role) -> Result<Vec<Vec<f32>>>;
}

/// A backend plus optional on-disk cache; every vector it returns is unit length.
#[derive(Clone)]
pub struct Embedder {
    backend: Arc<dyn EmbeddingBackend>,
    cache: Option<EmbeddingCache>,
    id: Arc<str>,
}

impl Embedder {
    pub fn new(backend: Arc<dyn EmbeddingBackend>, cache: Option<EmbeddingCache>) -> Self {
        let id: Arc<str> = Arc::from(backend.backend_id());
        Embedder { backend, cache, id }
    }

    pub fn backend_id(&self) -> &str {
        &self.id
    }

    pub fn dim(&self) -> usize {
        self.backend.dim()
    }

    pub fn embed_batch(&self, texts: &[String], role: Role) -> Result<Vec<EmbeddingVector>> {
        if texts.is_empty() {
            return Err(Error::EmptyInput("texts"));
        }
        let dim = self.backend.dim();
        let mut out: Vec<Option<EmbeddingVector>> = vec![None; texts.len()];

        // cache lookups, then one backend call for the distinct misses
        let mut misses: Vec<&str> = Vec::new();
        let mut miss_slots: HashMap<&str, Vec<usize>> = HashMap::new();
        for (i, text) in texts.iter().enumerate() {
            if let Some(cache) = &self.cache {
                let key = CacheKey::new(&self.id, role, text);
                if let Some(values) = cache.get(&key, dim) {
                    out[i] = Some(EmbeddingVector::from_unit(values, Arc::clone(&self.id)));
                    continue;
                }
            }
            let slots = miss_slots.entry(text.as_str()).or_default();
            if slots.is_empty() {
                misses.push(text.as_str());
            }
            slots.push(i);
        }

        if !misses.is_empty() {
            let raw = self.backend.embed_raw(&misses, role).map_err(|e| match e {
                // report failures against the caller's indices
                Error::Transport { failed, message } => Error::Transport {
                    failed: failed
                        .iter()
                        .flat_map(|&m| miss_slots[misses[m]].iter().copied())
                        .collect(),
                    message,
                },
                other => other,
            })?;
            if raw.len() != misses.len() {
                return Err(Error::LengthMismatch {
                    left: misses.len(),
                    right: raw.len(),
                });
            }
            for (text, values) in misses.iter().zip(raw) {
                if values.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        actual: values.len(),
                    });
                }
                let v = EmbeddingVector::normalized(&values, Arc::clone(&self.id));
                if let Some(cache) = &self.cache {
                    cache.put(&CacheKey::new(&self.id, role, text), v.values())?;
                }
                for &slot in &miss_slots[text] {
                    out[slot] = Some(v.clone());
                }
            }
        }
        Ok(out.into_iter().map(|v| v.expect("every slot filled")).collect())
    }
}

/// Parameters for the injected group bias of the mock backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasSpec {
    /// Variants whose first name belongs to any of these groups are shifted.
    pub groups: Vec<NameGroup>,
    pub delta: f64,
    /// Text whose mock embedding gives the shift direction.
    pub direction: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MockParams {
    /// Added to the run seed to form the hashing seed.
    #[serde(default)]
    pub seed_offset: u64,
    /// Scale of the per-text Gaussian perturbation, relative to the unit bag-of-words vector.
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub bias: Option<BiasSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendKind {
    Mock(MockParams),
    Remote(RemoteConfig),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackendDescriptor {
    pub id: String,
    pub dim: usize,
    #[serde(default)]
    pub query_template: QueryTemplate,
    #[serde(flatten)]
    pub kind: BackendKind,
}

impl BackendDescriptor {
    /// Instantiates the backend. `seed` feeds the mock; `bank` resolves bias groups.
    pub fn build(&self, seed: u64, bank: &NameBank) -> Result<Arc<dyn EmbeddingBackend>> {
        if self.dim == 0 {
            return Err(Error::Config(format!("backend {}: dim must be positive", self.id)));
        }
        match &self.kind {
            BackendKind::Mock(p) => {
                let seed = seed.wrapping_add(p.seed_offset);
                let bias = p
                    .bias
                    .as_ref()
                    .map(|b| {
                        let names = b
                            .groups
                            .iter()
                            .flat_map(|g| bank.group(*g))
                            .map(|r| r.first.clone());
                        BiasInjection::toward_text(seed, self.dim, &b.direction, b.delta, names)
                    })
                    .transpose()?;
                Ok(Arc::new(MockEmbedder::new(&self.id, seed, self.dim, p.noise, bias)?))
            }
            BackendKind::Remote(cfg) => Ok(Arc::new(RemoteBackend::new(&self.id, self.dim, cfg.clone())?)),
        }
    }
}
