//! The four training regimes: baseline bi-encoder training, data
//! augmentation over noised variants, post-training alignment of the
//! query tower against a frozen copy of itself, and pre-training
//! alignment on an external query corpus followed by baseline training.
//!
//! Every regime is a pure function of (data, config, seed). Baseline and
//! DA update both towers with in-batch softmax cross-entropy over inner
//! products; alignment updates only the query tower and by construction
//! cannot reach document parameters or a stored index. The optimizer is
//! plain SGD so a single step equals exactly -lr times the analytic
//! gradient.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::RngExt;

use crate::corpus::{Passage, Qrels};
use crate::encoder::{
    backprop_normalize, featurize, DualEncoder, EncoderParams, Features, Forward, SparseGrad,
    MAX_TOKENS,
};
use crate::error::CoreError;
use crate::loss::{capot_loss, LossWeights};
use crate::noise::{noise_dataset, NoiseConfig, NoisedQuery, Query};
use crate::resources::Resources;
use crate::rewrite::Rewriter;
use crate::rng;

/// Which training regime a run belongs to. The functions below do not
/// branch on it; it exists so configs and run manifests are explicit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Baseline,
    Da,
    Pt,
    Capot,
}

impl Regime {
    pub fn label(self) -> &'static str {
        match self {
            Regime::Baseline => "baseline",
            Regime::Da => "da",
            Regime::Pt => "pt",
            Regime::Capot => "capot",
        }
    }

    pub fn parse(s: &str) -> Result<Regime, CoreError> {
        match s {
            "baseline" => Ok(Regime::Baseline),
            "da" => Ok(Regime::Da),
            "pt" => Ok(Regime::Pt),
            "capot" => Ok(Regime::Capot),
            other => Err(CoreError::InvalidInput(format!("unknown regime {other:?}"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub regime: Regime,
    /// In-batch softmax needs at least two examples per batch to produce
    /// cross-query negatives; a trailing partial batch may be smaller.
    pub batch_size: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Explicit negatives sampled per query, on top of in-batch ones.
    pub negatives_per_positive: usize,
    pub seed: u64,
    pub loss_weights: LossWeights,
    /// Model shape; training owns encoder construction.
    pub dim: usize,
    pub num_buckets: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            regime: Regime::Baseline,
            batch_size: 32,
            learning_rate: 0.5,
            epochs: 50,
            negatives_per_positive: 1,
            seed: 0,
            loss_weights: LossWeights::default(),
            dim: 64,
            num_buckets: 4096,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), CoreError> {
        if self.batch_size < 2 {
            return Err(CoreError::InvalidInput(format!(
                "batch_size {} too small: in-batch negatives need at least 2",
                self.batch_size
            )));
        }
        if !self.learning_rate.is_finite() || self.learning_rate <= 0.0 {
            return Err(CoreError::InvalidInput(format!(
                "learning_rate must be a finite positive number, got {}",
                self.learning_rate
            )));
        }
        if self.dim == 0 || self.num_buckets == 0 {
            return Err(CoreError::InvalidInput(
                "dim and num_buckets must be at least 1".to_string(),
            ));
        }
        self.loss_weights.validate()
    }
}

/// One retrieval training example: a query, its positive passage, and
/// explicit negative passages.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainingTriple {
    pub query: Query,
    pub positive_passage_id: String,
    pub negative_passage_ids: Vec<String>,
}

impl TrainingTriple {
    pub fn new(
        query: Query,
        positive_passage_id: impl Into<String>,
        negative_passage_ids: Vec<String>,
    ) -> Result<TrainingTriple, CoreError> {
        let positive_passage_id = positive_passage_id.into();
        if negative_passage_ids.contains(&positive_passage_id) {
            return Err(CoreError::InvalidInput(format!(
                "positive passage {positive_passage_id:?} listed among negatives for query {:?}",
                query.id
            )));
        }
        Ok(TrainingTriple { query, positive_passage_id, negative_passage_ids })
    }
}

/// One alignment example: a clean query x, one of its noised variants
/// x+, and a different query x- drawn as the negative.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignmentTriple {
    pub anchor: Query,
    pub positive: NoisedQuery,
    pub negative: Query,
}

impl AlignmentTriple {
    pub fn new(
        anchor: Query,
        positive: NoisedQuery,
        negative: Query,
    ) -> Result<AlignmentTriple, CoreError> {
        if positive.anchor_id != anchor.id {
            return Err(CoreError::InvalidInput(format!(
                "noised variant is anchored to {:?}, not {:?}",
                positive.anchor_id, anchor.id
            )));
        }
        if negative.id == anchor.id {
            return Err(CoreError::InvalidInput(format!(
                "negative query must differ from the anchor {:?}",
                anchor.id
            )));
        }
        Ok(AlignmentTriple { anchor, positive, negative })
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: DualEncoder,
    /// Mean per-example loss for each epoch, in epoch order.
    pub loss_trace: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct AlignOutput {
    pub params: EncoderParams,
    /// Mean per-drawn-example loss for each epoch, in epoch order.
    pub loss_trace: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct PretrainOutput {
    /// The stage-1 checkpoint: the fresh query tower after alignment on
    /// the external corpus, before any retrieval training.
    pub stage1_query: EncoderParams,
    pub align_trace: Vec<f64>,
    pub model: DualEncoder,
    pub loss_trace: Vec<f64>,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Builds one TrainingTriple per query: positive is the
/// lexicographically smallest relevant passage, negatives are sampled
/// per query from the non-relevant pool without replacement, each from
/// its own labeled stream so example order never shifts the draws.
fn build_examples(
    queries: &[Query],
    passages: &[Passage],
    qrels: &Qrels,
    config: &TrainConfig,
) -> Result<Vec<TrainingTriple>, CoreError> {
    if queries.is_empty() {
        return Err(CoreError::InvalidInput("no training queries".to_string()));
    }
    qrels.validate_against(queries, passages)?;
    let missing: Vec<&str> = queries
        .iter()
        .filter(|q| qrels.relevant(&q.id).is_none())
        .map(|q| q.id.as_str())
        .collect();
    if !missing.is_empty() {
        return Err(CoreError::InvalidInput(format!(
            "queries without relevance judgments: {missing:?}"
        )));
    }
    let mut examples = Vec::with_capacity(queries.len());
    for q in queries {
        let relevant = qrels.relevant(&q.id).expect("checked above");
        let positive = relevant.first().expect("qrels sets are non-empty").clone();
        let pool: Vec<&str> = passages
            .iter()
            .map(|p| p.id.as_str())
            .filter(|id| !relevant.contains(*id))
            .collect();
        let count = config.negatives_per_positive.min(pool.len());
        let mut stream = rng::labeled_stream(config.seed, &["negatives", &q.id]);
        let mut negatives: Vec<String> = rand::seq::index::sample(&mut stream, pool.len(), count)
            .into_iter()
            .map(|i| pool[i].to_string())
            .collect();
        negatives.sort();
        examples.push(TrainingTriple::new(q.clone(), positive, negatives)?);
    }
    Ok(examples)
}

fn featurize_examples(
    examples: &[TrainingTriple],
    passages: &[Passage],
    num_buckets: usize,
) -> Result<(Vec<Features>, BTreeMap<String, Features>), CoreError> {
    let by_id: BTreeMap<&str, &Passage> =
        passages.iter().map(|p| (p.id.as_str(), p)).collect();
    let mut query_feats = Vec::with_capacity(examples.len());
    let mut needed: BTreeSet<&str> = BTreeSet::new();
    for ex in examples {
        query_feats.push(featurize(&ex.query.text, MAX_TOKENS, num_buckets)?);
        needed.insert(ex.positive_passage_id.as_str());
        for n in &ex.negative_passage_ids {
            needed.insert(n.as_str());
        }
    }
    let mut passage_feats = BTreeMap::new();
    for id in needed {
        let p = by_id.get(id).ok_or_else(|| {
            CoreError::InvalidInput(format!("training example references unknown passage {id:?}"))
        })?;
        passage_feats.insert(id.to_string(), featurize(&p.text, MAX_TOKENS, num_buckets)?);
    }
    Ok((query_feats, passage_feats))
}

/// One batch of in-batch softmax cross-entropy. Candidates are the
/// deduplicated batch positives (in batch order) followed by explicit
/// negatives not already present. Returns the summed loss.
fn train_batch(
    model: &mut DualEncoder,
    batch: &[usize],
    examples: &[TrainingTriple],
    query_feats: &[Features],
    passage_feats: &BTreeMap<String, Features>,
    lr: f64,
) -> Result<f64, CoreError> {
    let dim = model.query.dim();
    let mut candidates: Vec<&str> = Vec::new();
    let mut column: BTreeMap<&str, usize> = BTreeMap::new();
    for &i in batch {
        let pid = examples[i].positive_passage_id.as_str();
        if !column.contains_key(pid) {
            column.insert(pid, candidates.len());
            candidates.push(pid);
        }
    }
    for &i in batch {
        for nid in &examples[i].negative_passage_ids {
            if !column.contains_key(nid.as_str()) {
                column.insert(nid, candidates.len());
                candidates.push(nid);
            }
        }
    }
    let q_fwd: Vec<Forward> = batch
        .iter()
        .map(|&i| model.query.forward(&query_feats[i]))
        .collect::<Result<_, _>>()?;
    let d_fwd: Vec<Forward> = candidates
        .iter()
        .map(|id| model.doc.forward(&passage_feats[*id]))
        .collect::<Result<_, _>>()?;

    let mut loss = 0.0;
    let mut q_grad = SparseGrad::new(dim);
    // grads wrt the normalized candidate embeddings, accumulated over
    // queries in batch order so the reduction order is fixed
    let mut d_grad_y = vec![vec![0.0f64; dim]; candidates.len()];
    for (bi, &i) in batch.iter().enumerate() {
        let target = column[examples[i].positive_passage_id.as_str()];
        let scores: Vec<f64> =
            d_fwd.iter().map(|d| dot(&q_fwd[bi].embedding, &d.embedding)).collect();
        let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = scores.iter().map(|s| libm::exp(s - max)).collect();
        let z: f64 = exps.iter().sum();
        loss += libm::log(z) - (scores[target] - max);
        let mut g_q = vec![0.0f64; dim];
        for (j, d) in d_fwd.iter().enumerate() {
            let g = exps[j] / z - if j == target { 1.0 } else { 0.0 };
            for k in 0..dim {
                g_q[k] += g * d.embedding[k];
                d_grad_y[j][k] += g * q_fwd[bi].embedding[k];
            }
        }
        q_grad.add(&query_feats[i], &backprop_normalize(&q_fwd[bi], &g_q)?, 1.0);
    }
    let mut d_grad = SparseGrad::new(dim);
    for (j, id) in candidates.iter().enumerate() {
        d_grad.add(&passage_feats[*id], &backprop_normalize(&d_fwd[j], &d_grad_y[j])?, 1.0);
    }
    model.query.apply_row_gradients(&q_grad, lr)?;
    model.doc.apply_row_gradients(&d_grad, lr)?;
    Ok(loss)
}

fn train_examples(
    mut model: DualEncoder,
    examples: &[TrainingTriple],
    passages: &[Passage],
    config: &TrainConfig,
) -> Result<TrainOutput, CoreError> {
    let (query_feats, passage_feats) =
        featurize_examples(examples, passages, config.num_buckets)?;
    let mut loss_trace = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut order: Vec<usize> = (0..examples.len()).collect();
        let mut stream = rng::labeled_stream(config.seed, &["epoch", &epoch.to_string()]);
        order.shuffle(&mut stream);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            epoch_loss += train_batch(
                &mut model,
                batch,
                examples,
                &query_feats,
                &passage_feats,
                config.learning_rate,
            )?;
        }
        loss_trace.push(epoch_loss / examples.len() as f64);
    }
    Ok(TrainOutput { model, loss_trace })
}

/// Trains both towers from scratch with in-batch softmax cross-entropy
/// over inner products. Softmax candidates for each query are all batch
/// positives plus the batch's explicit negatives. Fails on dangling
/// qrels or judged-less queries before touching any parameters.
pub fn train_baseline(
    queries: &[Query],
    passages: &[Passage],
    qrels: &Qrels,
    config: &TrainConfig,
) -> Result<TrainOutput, CoreError> {
    config.validate()?;
    let examples = build_examples(queries, passages, qrels, config)?;
    let model =
        DualEncoder::init(config.dim, config.num_buckets, rng::derive_seed(config.seed, &["init"]))?;
    train_examples(model, &examples, passages, config)
}

/// The union dataset behind the DA regime: one example per clean query
/// plus one per noised variant, the variant inheriting its anchor's
/// positive and negatives. No extra randomness is drawn, so an empty
/// noised set reproduces the baseline exactly.
fn augmented_examples(
    queries: &[Query],
    noised: &[NoisedQuery],
    passages: &[Passage],
    qrels: &Qrels,
    config: &TrainConfig,
) -> Result<Vec<TrainingTriple>, CoreError> {
    let mut examples = build_examples(queries, passages, qrels, config)?;
    let by_id: BTreeMap<String, usize> =
        examples.iter().enumerate().map(|(i, e)| (e.query.id.clone(), i)).collect();
    for (k, nq) in noised.iter().enumerate() {
        let &i = by_id.get(nq.anchor_id.as_str()).ok_or_else(|| {
            CoreError::InvalidInput(format!(
                "noised query anchored to unknown query {:?}",
                nq.anchor_id
            ))
        })?;
        let positive = examples[i].positive_passage_id.clone();
        let negatives = examples[i].negative_passage_ids.clone();
        examples.push(TrainingTriple::new(
            Query::new(format!("{}#aug{k}", nq.anchor_id), nq.text.clone()),
            positive,
            negatives,
        )?);
    }
    Ok(examples)
}

/// Baseline training on the union of clean queries and noised variants.
/// The document tower changes, so any stored index must be regenerated
/// afterward.
pub fn train_data_augmentation(
    queries: &[Query],
    noised: &[NoisedQuery],
    passages: &[Passage],
    qrels: &Qrels,
    config: &TrainConfig,
) -> Result<TrainOutput, CoreError> {
    config.validate()?;
    let examples = augmented_examples(queries, noised, passages, qrels, config)?;
    let model =
        DualEncoder::init(config.dim, config.num_buckets, rng::derive_seed(config.seed, &["init"]))?;
    train_examples(model, &examples, passages, config)
}

/// Post-training alignment of the query tower. Clones the input as the
/// frozen reference f_a, then runs SGD on the combined alignment loss
/// over with-replacement draws of the triples. Document parameters and
/// any stored index are not inputs and cannot change.
pub fn align_capot(
    query_params: &EncoderParams,
    triples: &[AlignmentTriple],
    config: &TrainConfig,
) -> Result<AlignOutput, CoreError> {
    config.validate()?;
    if query_params.is_frozen() {
        return Err(CoreError::Frozen("cannot align a frozen encoder".to_string()));
    }
    if triples.is_empty() {
        return Err(CoreError::InvalidInput("no alignment triples".to_string()));
    }
    let num_buckets = query_params.num_buckets();
    let dim = query_params.dim();
    let mut anchor_feats = Vec::with_capacity(triples.len());
    let mut pos_feats = Vec::with_capacity(triples.len());
    let mut neg_feats = Vec::with_capacity(triples.len());
    for t in triples {
        AlignmentTriple::new(t.anchor.clone(), t.positive.clone(), t.negative.clone())?;
        anchor_feats.push(featurize(&t.anchor.text, MAX_TOKENS, num_buckets)?);
        pos_feats.push(featurize(&t.positive.text, MAX_TOKENS, num_buckets)?);
        neg_feats.push(featurize(&t.negative.text, MAX_TOKENS, num_buckets)?);
    }
    let frozen = query_params.clone_frozen();
    // the frozen placement of each anchor never moves; embed once
    let frozen_emb: Vec<Vec<f64>> = anchor_feats
        .iter()
        .map(|f| frozen.embed(f))
        .collect::<Result<_, _>>()?;

    let mut params = query_params.clone();
    let mut loss_trace = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let mut stream = rng::labeled_stream(config.seed, &["align-epoch", &epoch.to_string()]);
        let draws: Vec<usize> =
            (0..triples.len()).map(|_| stream.random_range(0..triples.len())).collect();
        let mut epoch_loss = 0.0;
        for batch in draws.chunks(config.batch_size) {
            let mut grad = SparseGrad::new(dim);
            for &ti in batch {
                let f_x = params.forward(&anchor_feats[ti])?;
                let f_pos = params.forward(&pos_feats[ti])?;
                let f_neg = params.forward(&neg_feats[ti])?;
                let (breakdown, grads) = capot_loss(
                    &f_x.embedding,
                    &f_pos.embedding,
                    &f_neg.embedding,
                    &frozen_emb[ti],
                    &config.loss_weights,
                )?;
                epoch_loss += breakdown.total;
                grad.add(&anchor_feats[ti], &backprop_normalize(&f_x, &grads.x)?, 1.0);
                grad.add(&pos_feats[ti], &backprop_normalize(&f_pos, &grads.pos)?, 1.0);
                grad.add(&neg_feats[ti], &backprop_normalize(&f_neg, &grads.neg)?, 1.0);
            }
            params.apply_row_gradients(&grad, config.learning_rate)?;
        }
        loss_trace.push(epoch_loss / draws.len() as f64);
    }
    Ok(AlignOutput { params, loss_trace })
}

/// Pre-training alignment: stage 1 aligns a fresh query tower on noised
/// variants of an external query corpus, anchored to its own
/// initialization; stage 2 runs baseline training initialized from the
/// aligned tower. The fresh towers take stage 2's init seed, so a
/// zero-epoch stage 1 reduces exactly to train_baseline.
pub fn pretrain_align(
    external_queries: &[Query],
    noise_config: &NoiseConfig,
    resources: &Resources,
    rewriter: &mut dyn Rewriter,
    queries: &[Query],
    passages: &[Passage],
    qrels: &Qrels,
    align_config: &TrainConfig,
    train_config: &TrainConfig,
) -> Result<PretrainOutput, CoreError> {
    align_config.validate()?;
    train_config.validate()?;
    if align_config.dim != train_config.dim
        || align_config.num_buckets != train_config.num_buckets
    {
        return Err(CoreError::ShapeMismatch(
            "alignment and training configs disagree on model shape".to_string(),
        ));
    }
    let fresh = DualEncoder::init(
        train_config.dim,
        train_config.num_buckets,
        rng::derive_seed(train_config.seed, &["init"]),
    )?;
    let noised = noise_dataset(external_queries, noise_config, resources, rewriter)?;
    let triples = sample_alignment_triples(external_queries, &noised, align_config.seed)?;
    let stage1 = align_capot(&fresh.query, &triples, align_config)?;
    let model = DualEncoder::new(stage1.params.clone(), fresh.doc)?;
    let examples = build_examples(queries, passages, qrels, train_config)?;
    let out = train_examples(model, &examples, passages, train_config)?;
    Ok(PretrainOutput {
        stage1_query: stage1.params,
        align_trace: stage1.loss_trace,
        model: out.model,
        loss_trace: out.loss_trace,
    })
}

/// One triple per noised query: anchor is its root, negative drawn
/// uniformly over the other queries from a single labeled stream in
/// input order.
pub fn sample_alignment_triples(
    queries: &[Query],
    noised: &[NoisedQuery],
    seed: u64,
) -> Result<Vec<AlignmentTriple>, CoreError> {
    let index: BTreeMap<&str, usize> =
        queries.iter().enumerate().map(|(i, q)| (q.id.as_str(), i)).collect();
    if index.len() != queries.len() {
        return Err(CoreError::InvalidInput("duplicate query ids".to_string()));
    }
    if queries.len() < 2 {
        return Err(CoreError::InvalidInput(format!(
            "need at least 2 distinct anchors to draw negatives, got {}",
            queries.len()
        )));
    }
    let mut stream = rng::labeled_stream(seed, &["triples"]);
    let mut out = Vec::with_capacity(noised.len());
    for nq in noised {
        let &a = index.get(nq.anchor_id.as_str()).ok_or_else(|| {
            CoreError::InvalidInput(format!(
                "noised query references unknown anchor {:?}",
                nq.anchor_id
            ))
        })?;
        // uniform over the n-1 other queries: skip over the anchor slot
        let mut j = stream.random_range(0..queries.len() - 1);
        if j >= a {
            j += 1;
        }
        out.push(AlignmentTriple::new(queries[a].clone(), nq.clone(), queries[j].clone())?);
    }
    Ok(out)
}
