//! Hashed n-gram text encoder.
//!
//! Featurization lowercases, keeps the first [`MAX_TOKENS`] whitespace
//! tokens, pads each token with one leading space, and hashes every char
//! 3..=5-gram into a fixed bucket count with FNV-1a. An embedding is the
//! count-weighted sum of per-bucket weight rows, L2-normalized.
//!
//! Weights live in f32 and are laid out bucket-major so a sparse feature
//! touches one contiguous row. Embeddings and gradients are f64: the
//! finite-difference checks in the loss layer need more headroom than f32
//! offers. Serialization transposes to row-major (dim x buckets) so the
//! file is a conventional weight matrix.

use alloc::vec;
use alloc::vec::Vec;
use core::hash::Hasher;

use fnv::FnvHasher;
use rand::distr::{Distribution, Uniform};

use crate::error::CoreError;
use crate::rng;

/// Default truncation: queries and passages keep this many tokens.
pub const MAX_TOKENS: usize = 28;
const NGRAM_MIN: usize = 3;
const NGRAM_MAX: usize = 5;

const PARAMS_MAGIC: &[u8; 4] = b"ENCP";
const PARAMS_VERSION: u16 = 1;

/// Sparse bucket counts for one text, sorted by bucket.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    pub counts: Vec<(usize, f64)>,
    pub num_buckets: usize,
}

fn bucket_of(ngram: &[char], num_buckets: usize) -> usize {
    let mut h = FnvHasher::default();
    let mut buf = [0u8; 4];
    for c in ngram {
        h.write(c.encode_utf8(&mut buf).as_bytes());
    }
    (h.finish() % num_buckets as u64) as usize
}

// all 3..=5-grams of the token with one leading space attached
fn for_each_padded_ngram(token: &str, mut f: impl FnMut(&[char])) {
    let padded: Vec<char> = core::iter::once(' ').chain(token.chars()).collect();
    for len in NGRAM_MIN..=NGRAM_MAX {
        if padded.len() < len {
            break;
        }
        for start in 0..=padded.len() - len {
            f(&padded[start..start + len]);
        }
    }
}

pub fn featurize(text: &str, max_tokens: usize, num_buckets: usize) -> Result<Features, CoreError> {
    if num_buckets == 0 || max_tokens == 0 {
        return Err(CoreError::InvalidInput(
            "max_tokens and num_buckets must be positive".into(),
        ));
    }
    let lowered = text.to_lowercase();
    let mut acc: alloc::collections::BTreeMap<usize, f64> = alloc::collections::BTreeMap::new();
    for token in lowered.split_whitespace().take(max_tokens) {
        for_each_padded_ngram(token, |ngram| {
            *acc.entry(bucket_of(ngram, num_buckets)).or_insert(0.0) += 1.0;
        });
    }
    Ok(Features { counts: acc.into_iter().collect(), num_buckets })
}

/// One encoder tower: a dense bucket-to-dim weight matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    dim: usize,
    num_buckets: usize,
    frozen: bool,
    // bucket-major: weights[b * dim + d]
    weights: Vec<f32>,
}

/// Forward-pass state kept for backpropagation through the normalizer.
#[derive(Debug, Clone)]
pub struct Forward {
    /// L2-normalized embedding; all zeros when the input had no features.
    pub embedding: Vec<f64>,
    /// Norm of the pre-normalization sum.
    pub norm: f64,
}

impl EncoderParams {
    /// Fresh weights, uniform on [-s, s] with s = 1/sqrt(num_buckets).
    pub fn init(dim: usize, num_buckets: usize, seed: u64) -> Result<EncoderParams, CoreError> {
        if dim == 0 || num_buckets == 0 {
            return Err(CoreError::InvalidInput("dim and num_buckets must be positive".into()));
        }
        let scale = 1.0 / libm::sqrt(num_buckets as f64);
        let dist = Uniform::new_inclusive(-scale, scale)
            .map_err(|e| CoreError::InvalidInput(alloc::format!("bad init range: {e}")))?;
        let mut stream = rng::stream(seed);
        let weights = (0..num_buckets * dim)
            .map(|_| dist.sample(&mut stream) as f32)
            .collect();
        Ok(EncoderParams { dim, num_buckets, frozen: false, weights })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_buckets(&self) -> usize {
        self.num_buckets
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    /// Immutable snapshot used as an anchor; updates against it fail.
    pub fn clone_frozen(&self) -> EncoderParams {
        EncoderParams { frozen: true, ..self.clone() }
    }

    pub fn forward(&self, feats: &Features) -> Result<Forward, CoreError> {
        if feats.num_buckets != self.num_buckets {
            return Err(CoreError::ShapeMismatch(alloc::format!(
                "features hashed into {} buckets, params have {}",
                feats.num_buckets, self.num_buckets
            )));
        }
        if let Some(&(b, _)) = feats.counts.iter().find(|(b, _)| *b >= self.num_buckets) {
            return Err(CoreError::ShapeMismatch(alloc::format!(
                "feature bucket {b} out of range for {} buckets",
                self.num_buckets
            )));
        }
        let mut u = vec![0.0f64; self.dim];
        for &(b, c) in &feats.counts {
            let row = &self.weights[b * self.dim..(b + 1) * self.dim];
            for (acc, w) in u.iter_mut().zip(row) {
                *acc += c * *w as f64;
            }
        }
        let norm = libm::sqrt(u.iter().map(|x| x * x).sum());
        let embedding = if norm > 0.0 {
            u.iter().map(|x| x / norm).collect()
        } else {
            u
        };
        Ok(Forward { embedding, norm })
    }

    pub fn embed(&self, feats: &Features) -> Result<Vec<f64>, CoreError> {
        Ok(self.forward(feats)?.embedding)
    }

    /// One SGD step from the gradient wrt the pre-normalization sum.
    pub fn apply_gradient(
        &mut self,
        feats: &Features,
        grad_u: &[f64],
        lr: f64,
    ) -> Result<(), CoreError> {
        if grad_u.len() != self.dim {
            return Err(CoreError::ShapeMismatch(alloc::format!(
                "gradient has dim {}, params have {}",
                grad_u.len(), self.dim
            )));
        }
        if feats.num_buckets != self.num_buckets {
            return Err(CoreError::ShapeMismatch("feature/param bucket mismatch".into()));
        }
        let mut rows = SparseGrad::new(self.dim);
        rows.add(feats, grad_u, 1.0);
        self.apply_row_gradients(&rows, lr)
    }

    /// One SGD step from per-bucket gradient rows accumulated over a
    /// batch: w[b][d] becomes (w - lr * rows[b][d]) rounded to f32.
    pub fn apply_row_gradients(&mut self, rows: &SparseGrad, lr: f64) -> Result<(), CoreError> {
        if self.frozen {
            return Err(CoreError::Frozen("gradient step on frozen params".into()));
        }
        if rows.dim != self.dim {
            return Err(CoreError::ShapeMismatch("gradient/param dim mismatch".into()));
        }
        for (&b, grad_row) in &rows.rows {
            if b >= self.num_buckets {
                return Err(CoreError::ShapeMismatch(alloc::format!(
                    "gradient bucket {b} out of range"
                )));
            }
            let row = &mut self.weights[b * self.dim..(b + 1) * self.dim];
            for (w, g) in row.iter_mut().zip(grad_row) {
                *w = (*w as f64 - lr * g) as f32;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(15 + self.weights.len() * 4);
        out.extend_from_slice(PARAMS_MAGIC);
        out.extend_from_slice(&PARAMS_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        out.extend_from_slice(&(self.num_buckets as u32).to_le_bytes());
        out.push(self.frozen as u8);
        // transpose to row-major dim x buckets
        for d in 0..self.dim {
            for b in 0..self.num_buckets {
                out.extend_from_slice(&self.weights[b * self.dim + d].to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<EncoderParams, CoreError> {
        let header = 4 + 2 + 4 + 4 + 1;
        if bytes.len() < header {
            return Err(CoreError::Format("params block truncated".into()));
        }
        if &bytes[0..4] != PARAMS_MAGIC {
            return Err(CoreError::Format("bad params magic".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != PARAMS_VERSION {
            return Err(CoreError::Format(alloc::format!("unsupported params version {version}")));
        }
        let dim = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
        let num_buckets = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
        let frozen = match bytes[14] {
            0 => false,
            1 => true,
            v => return Err(CoreError::Format(alloc::format!("bad frozen flag {v}"))),
        };
        if dim == 0 || num_buckets == 0 {
            return Err(CoreError::Format("zero dim or bucket count".into()));
        }
        let expected = header + dim * num_buckets * 4;
        if bytes.len() != expected {
            return Err(CoreError::Format(alloc::format!(
                "params block is {} bytes, expected {expected}",
                bytes.len()
            )));
        }
        let mut weights = vec![0.0f32; dim * num_buckets];
        let mut off = header;
        for d in 0..dim {
            for b in 0..num_buckets {
                weights[b * dim + d] =
                    f32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
                off += 4;
            }
        }
        Ok(EncoderParams { dim, num_buckets, frozen, weights })
    }

    #[cfg(test)]
    fn scale_weights(&mut self, c: f32) {
        for w in &mut self.weights {
            *w *= c;
        }
    }
}

/// Per-bucket gradient accumulator for batched SGD. Contributions are
/// added in caller order, so a fixed example order makes the reduction
/// deterministic regardless of how examples were computed.
#[derive(Debug, Clone)]
pub struct SparseGrad {
    dim: usize,
    rows: alloc::collections::BTreeMap<usize, Vec<f64>>,
}

impl SparseGrad {
    pub fn new(dim: usize) -> SparseGrad {
        SparseGrad { dim, rows: alloc::collections::BTreeMap::new() }
    }

    /// Accumulates scale * count * grad_u into every bucket the features
    /// touch.
    pub fn add(&mut self, feats: &Features, grad_u: &[f64], scale: f64) {
        debug_assert_eq!(grad_u.len(), self.dim);
        for &(b, c) in &feats.counts {
            let row = self.rows.entry(b).or_insert_with(|| vec![0.0; self.dim]);
            for (acc, g) in row.iter_mut().zip(grad_u) {
                *acc += scale * c * g;
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Converts a gradient wrt the normalized embedding into one wrt the raw
/// sum: g_u = (g_y - y <g_y, y>) / norm. Zero-norm inputs get a zero
/// gradient, matching the zero-stays-zero normalizer.
pub fn backprop_normalize(fwd: &Forward, grad_y: &[f64]) -> Result<Vec<f64>, CoreError> {
    if grad_y.len() != fwd.embedding.len() {
        return Err(CoreError::ShapeMismatch("gradient/embedding dim mismatch".into()));
    }
    if fwd.norm == 0.0 {
        return Ok(vec![0.0; grad_y.len()]);
    }
    let dot: f64 = grad_y.iter().zip(&fwd.embedding).map(|(g, y)| g * y).sum();
    Ok(grad_y
        .iter()
        .zip(&fwd.embedding)
        .map(|(g, y)| (g - y * dot) / fwd.norm)
        .collect())
}

/// Query and passage towers. The towers share dim and bucket count so
/// both sides land in one comparable space.
#[derive(Debug, Clone, PartialEq)]
pub struct DualEncoder {
    pub query: EncoderParams,
    pub doc: EncoderParams,
}

impl DualEncoder {
    pub fn new(query: EncoderParams, doc: EncoderParams) -> Result<DualEncoder, CoreError> {
        if query.dim != doc.dim || query.num_buckets != doc.num_buckets {
            return Err(CoreError::ShapeMismatch("tower shapes differ".into()));
        }
        Ok(DualEncoder { query, doc })
    }

    /// Two independently seeded towers of the same shape.
    pub fn init(dim: usize, num_buckets: usize, seed: u64) -> Result<DualEncoder, CoreError> {
        let query = EncoderParams::init(dim, num_buckets, rng::derive_seed(seed, &["query"]))?;
        let doc = EncoderParams::init(dim, num_buckets, rng::derive_seed(seed, &["doc"]))?;
        Ok(DualEncoder { query, doc })
    }
}
