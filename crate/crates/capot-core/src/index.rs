//! Immutable document-vector store: exact top-k inner-product search,
//! an optional inverted-file coarse quantizer for approximate search,
//! and a little-endian binary codec.
//!
//! Vectors are held as f32, exactly what the file stores, so a loaded
//! index scores bit-identically to the one that was saved. Scores are
//! accumulated in f64. Ties are broken by ascending passage id; the
//! store is never mutated after construction (the coarse quantizer is
//! attached by building a new value).

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::RngExt;

use crate::corpus::Passage;
use crate::encoder::{featurize, EncoderParams, MAX_TOKENS};
use crate::error::CoreError;
use crate::rng;

const INDEX_MAGIC: &[u8; 4] = b"CIDX";
const INDEX_VERSION: u32 = 1;
const KMEANS_ITERATIONS: usize = 25;

/// Coarse quantizer: centroid matrix plus one posting list per
/// centroid. The lists partition the document indices.
#[derive(Debug, Clone, PartialEq)]
pub struct Ivf {
    centroids: Vec<f32>,
    postings: Vec<Vec<u32>>,
}

impl Ivf {
    pub fn num_centroids(&self) -> usize {
        self.postings.len()
    }

    pub fn posting(&self, c: usize) -> &[u32] {
        &self.postings[c]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DocumentIndex {
    ids: Vec<String>,
    vectors: Vec<f32>,
    dim: usize,
    ivf: Option<Ivf>,
}

/// Ranked hits: (passage id, inner-product score), scores non-
/// increasing, ties broken by ascending id. Exact search returns
/// min(k, num_docs) hits; probed search may return fewer when the
/// scanned posting lists hold fewer than k documents.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchResult {
    pub hits: Vec<(String, f64)>,
}

impl SearchResult {
    pub fn ids(&self) -> Vec<&str> {
        self.hits.iter().map(|(id, _)| id.as_str()).collect()
    }
}

fn dot_mixed(q: &[f64], v: &[f32]) -> f64 {
    q.iter().zip(v).map(|(a, b)| a * *b as f64).sum()
}

fn dist2_mixed(q: &[f64], v: &[f32]) -> f64 {
    q.iter()
        .zip(v)
        .map(|(a, b)| {
            let d = a - *b as f64;
            d * d
        })
        .sum()
}

impl DocumentIndex {
    /// Builds a store directly from vectors laid out row-major
    /// (num_docs x dim).
    pub fn from_vectors(
        ids: Vec<String>,
        vectors: Vec<f32>,
        dim: usize,
    ) -> Result<DocumentIndex, CoreError> {
        if ids.is_empty() {
            return Err(CoreError::InvalidInput("cannot index zero documents".to_string()));
        }
        if dim == 0 {
            return Err(CoreError::InvalidInput("vector dim must be at least 1".to_string()));
        }
        if vectors.len() != ids.len() * dim {
            return Err(CoreError::ShapeMismatch(format!(
                "{} docs of dim {} need {} values, got {}",
                ids.len(),
                dim,
                ids.len() * dim,
                vectors.len()
            )));
        }
        let mut seen = BTreeSet::new();
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(CoreError::InvalidInput(format!("duplicate passage id {id:?}")));
            }
        }
        if vectors.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::Numeric("non-finite value in document vectors".to_string()));
        }
        Ok(DocumentIndex { ids, vectors, dim, ivf: None })
    }

    pub fn num_docs(&self) -> usize {
        self.ids.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn ivf(&self) -> Option<&Ivf> {
        self.ivf.as_ref()
    }

    pub fn vector(&self, doc: usize) -> &[f32] {
        &self.vectors[doc * self.dim..(doc + 1) * self.dim]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(INDEX_MAGIC);
        out.extend_from_slice(&INDEX_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.ids.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for id in &self.ids {
            out.extend_from_slice(&(id.len() as u32).to_le_bytes());
            out.extend_from_slice(id.as_bytes());
        }
        for v in &self.vectors {
            out.extend_from_slice(&v.to_le_bytes());
        }
        match &self.ivf {
            None => out.push(0),
            Some(ivf) => {
                out.push(1);
                out.extend_from_slice(&(ivf.postings.len() as u32).to_le_bytes());
                for c in &ivf.centroids {
                    out.extend_from_slice(&c.to_le_bytes());
                }
                for list in &ivf.postings {
                    out.extend_from_slice(&(list.len() as u32).to_le_bytes());
                    for doc in list {
                        out.extend_from_slice(&doc.to_le_bytes());
                    }
                }
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<DocumentIndex, CoreError> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4)?;
        if magic != INDEX_MAGIC {
            return Err(CoreError::Format("not an index file (bad magic)".to_string()));
        }
        let version = r.u32()?;
        if version != INDEX_VERSION {
            return Err(CoreError::Format(format!(
                "unsupported index version {version}, expected {INDEX_VERSION}"
            )));
        }
        let num_docs = r.u32()? as usize;
        let dim = r.u32()? as usize;
        let mut ids = Vec::with_capacity(num_docs);
        for _ in 0..num_docs {
            let len = r.u32()? as usize;
            let raw = r.take(len)?;
            let id = core::str::from_utf8(raw)
                .map_err(|_| CoreError::Format("passage id is not valid UTF-8".to_string()))?;
            ids.push(id.to_string());
        }
        let mut vectors = Vec::with_capacity(num_docs * dim);
        for _ in 0..num_docs * dim {
            vectors.push(r.f32()?);
        }
        let ivf = match r.u8()? {
            0 => None,
            1 => {
                let num_centroids = r.u32()? as usize;
                let mut centroids = Vec::with_capacity(num_centroids * dim);
                for _ in 0..num_centroids * dim {
                    centroids.push(r.f32()?);
                }
                let mut postings = Vec::with_capacity(num_centroids);
                for _ in 0..num_centroids {
                    let len = r.u32()? as usize;
                    let mut list = Vec::with_capacity(len);
                    for _ in 0..len {
                        list.push(r.u32()?);
                    }
                    postings.push(list);
                }
                Some(Ivf { centroids, postings })
            }
            other => {
                return Err(CoreError::Format(format!("bad quantizer flag {other}")));
            }
        };
        if r.pos != bytes.len() {
            return Err(CoreError::Format(format!(
                "{} trailing bytes after index payload",
                bytes.len() - r.pos
            )));
        }
        let index = DocumentIndex::from_vectors(ids, vectors, dim)?;
        if let Some(ivf) = &ivf {
            validate_partition(&ivf.postings, num_docs)?;
        }
        Ok(DocumentIndex { ivf, ..index })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CoreError> {
        if self.pos + n > self.bytes.len() {
            return Err(CoreError::Format("unexpected end of index file".to_string()));
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self) -> Result<u8, CoreError> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32, CoreError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn f32(&mut self) -> Result<f32, CoreError> {
        Ok(f32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

fn validate_partition(postings: &[Vec<u32>], num_docs: usize) -> Result<(), CoreError> {
    let mut seen = vec![false; num_docs];
    let mut total = 0usize;
    for list in postings {
        for &doc in list {
            let doc = doc as usize;
            if doc >= num_docs || seen[doc] {
                return Err(CoreError::Format(
                    "posting lists do not partition the document set".to_string(),
                ));
            }
            seen[doc] = true;
            total += 1;
        }
    }
    if total != num_docs {
        return Err(CoreError::Format(
            "posting lists do not partition the document set".to_string(),
        ));
    }
    Ok(())
}

/// Embeds every passage with the document tower and freezes the result
/// into an index.
pub fn build_index(
    document_params: &EncoderParams,
    passages: &[Passage],
) -> Result<DocumentIndex, CoreError> {
    if passages.is_empty() {
        return Err(CoreError::InvalidInput("cannot index zero documents".to_string()));
    }
    let dim = document_params.dim();
    let mut ids = Vec::with_capacity(passages.len());
    let mut vectors = Vec::with_capacity(passages.len() * dim);
    for p in passages {
        let feats = featurize(&p.text, MAX_TOKENS, document_params.num_buckets())?;
        let emb = document_params.embed(&feats)?;
        ids.push(p.id.clone());
        vectors.extend(emb.iter().map(|x| *x as f32));
    }
    DocumentIndex::from_vectors(ids, vectors, dim)
}

fn check_query(index: &DocumentIndex, query: &[f64], k: usize) -> Result<(), CoreError> {
    if k == 0 {
        return Err(CoreError::InvalidInput("k must be at least 1".to_string()));
    }
    if query.len() != index.dim {
        return Err(CoreError::ShapeMismatch(format!(
            "query dim {} does not match index dim {}",
            query.len(),
            index.dim
        )));
    }
    if query.iter().any(|x| !x.is_finite()) {
        return Err(CoreError::Numeric("non-finite value in query vector".to_string()));
    }
    Ok(())
}

fn rank(index: &DocumentIndex, query: &[f64], k: usize, docs: &[u32]) -> SearchResult {
    let mut scored: Vec<(u32, f64)> =
        docs.iter().map(|&d| (d, dot_mixed(query, index.vector(d as usize)))).collect();
    scored.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("scores are finite")
            .then_with(|| index.ids[a.0 as usize].cmp(&index.ids[b.0 as usize]))
    });
    scored.truncate(k);
    SearchResult {
        hits: scored.into_iter().map(|(d, s)| (index.ids[d as usize].clone(), s)).collect(),
    }
}

/// Exact top-k by inner product over every document.
pub fn search_exact(
    index: &DocumentIndex,
    query: &[f64],
    k: usize,
) -> Result<SearchResult, CoreError> {
    check_query(index, query, k)?;
    let all: Vec<u32> = (0..index.num_docs() as u32).collect();
    Ok(rank(index, query, k, &all))
}

/// Attaches a coarse quantizer to a copy of the index: k-means++
/// seeding, then a fixed 25 Lloyd iterations, all in f64 from the
/// stored f32 vectors. Empty clusters keep their previous centroid.
pub fn build_ivf(
    index: &DocumentIndex,
    num_centroids: usize,
    seed: u64,
) -> Result<DocumentIndex, CoreError> {
    let n = index.num_docs();
    if num_centroids == 0 {
        return Err(CoreError::InvalidInput("need at least one centroid".to_string()));
    }
    if num_centroids > n {
        return Err(CoreError::InvalidInput(format!(
            "{num_centroids} centroids exceed {n} documents"
        )));
    }
    let dim = index.dim;
    let mut stream = rng::labeled_stream(seed, &["ivf"]);

    // k-means++: first centroid uniform, the rest proportional to the
    // squared distance to the nearest chosen one
    let as_f64 = |doc: usize| -> Vec<f64> {
        index.vector(doc).iter().map(|x| *x as f64).collect()
    };
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(num_centroids);
    centroids.push(as_f64(stream.random_range(0..n)));
    let mut d2: Vec<f64> = (0..n)
        .map(|doc| dist2_centroid(&centroids[0], index.vector(doc)))
        .collect();
    while centroids.len() < num_centroids {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut r = stream.random_range(0.0..total);
            let mut chosen = n - 1;
            for (doc, &w) in d2.iter().enumerate() {
                if r < w {
                    chosen = doc;
                    break;
                }
                r -= w;
            }
            chosen
        } else {
            // all remaining distances zero (duplicated vectors)
            stream.random_range(0..n)
        };
        let c = as_f64(pick);
        for doc in 0..n {
            let d = dist2_centroid(&c, index.vector(doc));
            if d < d2[doc] {
                d2[doc] = d;
            }
        }
        centroids.push(c);
    }

    let mut assignment = vec![0usize; n];
    for _ in 0..KMEANS_ITERATIONS {
        for (doc, slot) in assignment.iter_mut().enumerate() {
            *slot = nearest_centroid(&centroids, index.vector(doc));
        }
        let mut sums = vec![vec![0.0f64; dim]; num_centroids];
        let mut counts = vec![0usize; num_centroids];
        for (doc, &c) in assignment.iter().enumerate() {
            counts[c] += 1;
            for (acc, x) in sums[c].iter_mut().zip(index.vector(doc)) {
                *acc += *x as f64;
            }
        }
        for (c, centroid) in centroids.iter_mut().enumerate() {
            if counts[c] > 0 {
                for (slot, s) in centroid.iter_mut().zip(&sums[c]) {
                    *slot = s / counts[c] as f64;
                }
            }
        }
    }
    for (doc, slot) in assignment.iter_mut().enumerate() {
        *slot = nearest_centroid(&centroids, index.vector(doc));
    }

    let mut postings = vec![Vec::new(); num_centroids];
    for (doc, &c) in assignment.iter().enumerate() {
        postings[c].push(doc as u32);
    }
    let mut flat = Vec::with_capacity(num_centroids * dim);
    for c in &centroids {
        flat.extend(c.iter().map(|x| *x as f32));
    }
    Ok(DocumentIndex {
        ids: index.ids.clone(),
        vectors: index.vectors.clone(),
        dim,
        ivf: Some(Ivf { centroids: flat, postings }),
    })
}

fn dist2_centroid(c: &[f64], v: &[f32]) -> f64 {
    c.iter()
        .zip(v)
        .map(|(a, b)| {
            let d = a - *b as f64;
            d * d
        })
        .sum()
}

fn nearest_centroid(centroids: &[Vec<f64>], v: &[f32]) -> usize {
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for (c, centroid) in centroids.iter().enumerate() {
        let d = dist2_centroid(centroid, v);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

/// Scans only the posting lists of the nprobe centroids nearest to the
/// query (by squared distance, ties to the lower centroid index).
pub fn search_ivf(
    index: &DocumentIndex,
    query: &[f64],
    k: usize,
    nprobe: usize,
) -> Result<SearchResult, CoreError> {
    check_query(index, query, k)?;
    let ivf = index
        .ivf
        .as_ref()
        .ok_or_else(|| CoreError::InvalidInput("index has no coarse quantizer".to_string()))?;
    let c = ivf.num_centroids();
    if nprobe == 0 || nprobe > c {
        return Err(CoreError::InvalidInput(format!(
            "nprobe must be in 1..={c}, got {nprobe}"
        )));
    }
    let mut order: Vec<(usize, f64)> = (0..c)
        .map(|ci| (ci, dist2_mixed(query, &ivf.centroids[ci * index.dim..(ci + 1) * index.dim])))
        .collect();
    order.sort_by(|a, b| a.1.partial_cmp(&b.1).expect("distances are finite").then(a.0.cmp(&b.0)));
    let mut candidates = Vec::new();
    for &(ci, _) in order.iter().take(nprobe) {
        candidates.extend_from_slice(&ivf.postings[ci]);
    }
    Ok(rank(index, query, k, &candidates))
}
