//! Deterministic query noising.
//!
//! Ten noise types form a closed set. Eight run fully offline; two
//! (back-translation and paraphrase) go through a [`Rewriter`]. Character
//! and word edits follow one protocol: draw an anchor index uniformly,
//! then place the edit left of, right of, or at the anchor with
//! configurable probabilities.
//!
//! Each (query, noise type) record draws from its own stream seeded by
//! hash(master seed, query id, type label), so records are independent:
//! any subset of queries or types can be regenerated bit-identically, in
//! any order.

use alloc::borrow::ToOwned;
use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::IndexedRandom;
use rand::RngExt;
use unicode_normalization::UnicodeNormalization;

use crate::error::CoreError;
use crate::resources::Resources;
use crate::rewrite::{RewriteMode, Rewriter};
use crate::rng::{self, Stream};

/// A clean query: non-empty id, non-empty text after trimming.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Query {
    pub id: String,
    pub text: String,
}

impl Query {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Query {
        Query { id: id.into(), text: text.into() }
    }
}

/// The closed set of noise types, in canonical order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NoiseType {
    Determiner,
    Synonym,
    Lemmatize,
    Stem,
    Rcs,
    Kcs,
    Cd,
    Rw,
    Bt,
    Paraphrase,
}

impl NoiseType {
    pub const ALL: [NoiseType; 10] = [
        NoiseType::Determiner,
        NoiseType::Synonym,
        NoiseType::Lemmatize,
        NoiseType::Stem,
        NoiseType::Rcs,
        NoiseType::Kcs,
        NoiseType::Cd,
        NoiseType::Rw,
        NoiseType::Bt,
        NoiseType::Paraphrase,
    ];

    /// The three character-level typo classes.
    pub const TYPOS: [NoiseType; 3] = [NoiseType::Rcs, NoiseType::Kcs, NoiseType::Cd];

    pub fn label(self) -> &'static str {
        match self {
            NoiseType::Determiner => "determiner",
            NoiseType::Synonym => "synonym",
            NoiseType::Lemmatize => "lemmatize",
            NoiseType::Stem => "stem",
            NoiseType::Rcs => "rcs",
            NoiseType::Kcs => "kcs",
            NoiseType::Cd => "cd",
            NoiseType::Rw => "rw",
            NoiseType::Bt => "bt",
            NoiseType::Paraphrase => "paraphrase",
        }
    }

    pub fn parse(s: &str) -> Result<NoiseType, CoreError> {
        NoiseType::ALL
            .into_iter()
            .find(|t| t.label() == s)
            .ok_or_else(|| CoreError::InvalidInput(format!("unknown noise type {s:?}")))
    }

    /// True for types that need no rewrite backend.
    pub fn is_offline(self) -> bool {
        !matches!(self, NoiseType::Bt | NoiseType::Paraphrase)
    }
}

/// One noised variant of one query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NoisedQuery {
    pub anchor_id: String,
    pub noise_type: NoiseType,
    pub text: String,
    /// The record's own stream seed; recorded so any single record can be
    /// reproduced in isolation.
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct NoiseConfig {
    pub enabled: Vec<NoiseType>,
    pub master_seed: u64,
    /// Word budget for stem/lemmatize noise per query.
    pub max_stem_lemma_words: usize,
    /// Probabilities of placing an edit left of, right of, or at the
    /// anchor. Must be non-negative and sum to 1.
    pub placement_probabilities: [f64; 3],
}

impl Default for NoiseConfig {
    fn default() -> Self {
        NoiseConfig {
            enabled: NoiseType::ALL.to_vec(),
            master_seed: 0,
            max_stem_lemma_words: 5,
            placement_probabilities: [1.0 / 3.0; 3],
        }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<(), CoreError> {
        if self.enabled.is_empty() {
            return Err(CoreError::InvalidInput("no noise types enabled".to_owned()));
        }
        let p = self.placement_probabilities;
        if p.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(CoreError::InvalidInput(
                "placement probabilities must be non-negative".to_owned(),
            ));
        }
        let sum: f64 = p.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(CoreError::InvalidInput(format!(
                "placement probabilities sum to {sum}, expected 1"
            )));
        }
        if self.max_stem_lemma_words == 0 {
            return Err(CoreError::InvalidInput(
                "max_stem_lemma_words must be at least 1".to_owned(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Granularity {
    Char,
    Word,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Placement {
    Left,
    Right,
    At,
}

/// Uniformly selects an anchor position: a char index for `Char`, a token
/// index for `Word`. Errors when the text has no positions.
pub fn select_anchor_index(
    text: &str,
    granularity: Granularity,
    rng: &mut Stream,
) -> Result<usize, CoreError> {
    let n = match granularity {
        Granularity::Char => text.chars().count(),
        Granularity::Word => text.split_whitespace().count(),
    };
    if n == 0 {
        return Err(CoreError::InvalidInput("empty text has no anchor".to_owned()));
    }
    Ok(rng.random_range(0..n))
}

fn draw_placement(rng: &mut Stream, probs: [f64; 3]) -> Placement {
    let u: f64 = rng.random();
    if u < probs[0] {
        Placement::Left
    } else if u < probs[0] + probs[1] {
        Placement::Right
    } else {
        Placement::At
    }
}

/// Applies one noise type to one query under its record seed.
///
/// Degenerate inputs that a type cannot noise (one deletable character for
/// `cd`, a single token for `rw`, no synonym-bearing token) pass through
/// un-noised, as do stem/lemmatize calls that change nothing.
pub fn apply_noise(
    query: &Query,
    noise_type: NoiseType,
    config: &NoiseConfig,
    resources: &Resources,
    rewriter: &mut dyn Rewriter,
) -> Result<NoisedQuery, CoreError> {
    if query.id.is_empty() {
        return Err(CoreError::InvalidInput("query id is empty".to_owned()));
    }
    if query.text.trim().is_empty() {
        return Err(CoreError::InvalidInput(format!("query {}: empty text", query.id)));
    }
    let seed = rng::derive_seed(config.master_seed, &[&query.id, noise_type.label()]);
    let mut stream = rng::stream(seed);
    let text: String = query.text.nfc().collect();
    let noised = match noise_type {
        NoiseType::Rcs => char_edit(&text, config, &mut stream, |rng| random_char(rng)),
        NoiseType::Kcs => {
            // anchor first so the neighbor lookup can see the anchored char
            let chars: Vec<char> = text.chars().collect();
            let anchor = stream.random_range(0..chars.len());
            let placement = draw_placement(&mut stream, config.placement_probabilities);
            let neighbors = resources.keyboard_neighbors(chars[anchor]);
            let c = match neighbors.choose(&mut stream) {
                Some(c) => *c,
                // unmapped key: fall back to the rcs pool
                None => random_char(&mut stream),
            };
            Ok(place_char(&chars, anchor, placement, c))
        }
        NoiseType::Cd => delete_char(&text, &mut stream),
        NoiseType::Rw => reorder_words(&text, &mut stream),
        NoiseType::Determiner => determiner_edit(&text, config, resources, &mut stream),
        NoiseType::Synonym => synonym_edit(&text, resources, &mut stream),
        NoiseType::Lemmatize => {
            map_sampled_words(&text, config.max_stem_lemma_words, &mut stream, |w| {
                resources.lemmatize(w)
            })
        }
        NoiseType::Stem => {
            map_sampled_words(&text, config.max_stem_lemma_words, &mut stream, |w| {
                crate::resources::stem(w)
            })
        }
        NoiseType::Bt => rewritten(&text, RewriteMode::BackTranslation, rewriter),
        NoiseType::Paraphrase => rewritten(&text, RewriteMode::Paraphrase, rewriter),
    }?;
    // degenerate edits (e.g. replacing a lone char with space) must not
    // produce an effectively empty record
    let final_text = if noised.trim().is_empty() { text } else { noised };
    Ok(NoisedQuery {
        anchor_id: query.id.clone(),
        noise_type,
        text: final_text,
        seed,
    })
}

/// Noises every query with every enabled type, in input x canonical-type
/// order. Fails on duplicate or empty ids; individual type errors carry
/// the offending query id.
pub fn noise_dataset(
    queries: &[Query],
    config: &NoiseConfig,
    resources: &Resources,
    rewriter: &mut dyn Rewriter,
) -> Result<Vec<NoisedQuery>, CoreError> {
    config.validate()?;
    let mut seen = BTreeSet::new();
    for q in queries {
        if q.id.is_empty() {
            return Err(CoreError::InvalidInput("query with empty id".to_owned()));
        }
        if !seen.insert(&q.id) {
            return Err(CoreError::InvalidInput(format!("duplicate query id {:?}", q.id)));
        }
    }
    let enabled: Vec<NoiseType> = NoiseType::ALL
        .into_iter()
        .filter(|t| config.enabled.contains(t))
        .collect();
    let mut out = Vec::with_capacity(queries.len() * enabled.len());
    for q in queries {
        for t in &enabled {
            let record = apply_noise(q, *t, config, resources, rewriter).map_err(|e| {
                let context = format!("query {:?}, {} noise: {e}", q.id, t.label());
                // keep backend failures distinguishable from bad input
                match e {
                    CoreError::Rewrite(_) => CoreError::Rewrite(context),
                    _ => CoreError::InvalidInput(context),
                }
            })?;
            out.push(record);
        }
    }
    Ok(out)
}

fn random_char(rng: &mut Stream) -> char {
    // lowercase letters plus space
    const POOL: &[u8; 27] = b"abcdefghijklmnopqrstuvwxyz ";
    POOL[rng.random_range(0..POOL.len())] as char
}

fn char_edit(
    text: &str,
    config: &NoiseConfig,
    rng: &mut Stream,
    mut pick: impl FnMut(&mut Stream) -> char,
) -> Result<String, CoreError> {
    let chars: Vec<char> = text.chars().collect();
    let anchor = rng.random_range(0..chars.len());
    let placement = draw_placement(rng, config.placement_probabilities);
    let c = pick(rng);
    Ok(place_char(&chars, anchor, placement, c))
}

fn place_char(chars: &[char], anchor: usize, placement: Placement, c: char) -> String {
    let mut out: Vec<char> = chars.to_vec();
    match placement {
        Placement::Left => out.insert(anchor, c),
        Placement::Right => out.insert(anchor + 1, c),
        Placement::At => out[anchor] = c,
    }
    out.into_iter().collect()
}

// Deletes one non-whitespace character; whitespace is never a deletion
// target so tokens merge only by explicit edits, not by accident.
fn delete_char(text: &str, rng: &mut Stream) -> Result<String, CoreError> {
    let chars: Vec<char> = text.chars().collect();
    let targets: Vec<usize> = (0..chars.len())
        .filter(|&i| !chars[i].is_whitespace())
        .collect();
    if targets.len() <= 1 {
        return Ok(text.to_owned());
    }
    let at = targets[rng.random_range(0..targets.len())];
    let mut out = chars;
    out.remove(at);
    Ok(out.into_iter().collect())
}

fn reorder_words(text: &str, rng: &mut Stream) -> Result<String, CoreError> {
    let mut tokens: Vec<&str> = text.split_whitespace().collect();
    let n = tokens.len();
    if n < 2 {
        return Ok(text.to_owned());
    }
    let anchor = rng.random_range(0..n);
    let other = {
        let j = rng.random_range(0..n - 1);
        if j >= anchor {
            j + 1
        } else {
            j
        }
    };
    tokens.swap(anchor, other);
    Ok(tokens.join(" "))
}

fn determiner_edit(
    text: &str,
    config: &NoiseConfig,
    resources: &Resources,
    rng: &mut Stream,
) -> Result<String, CoreError> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    // noun-phrase anchors approximated as non-stopword tokens; an
    // all-stopword query falls back to every position
    let mut eligible: Vec<usize> = (0..tokens.len())
        .filter(|&i| !resources.is_stopword(tokens[i]))
        .collect();
    if eligible.is_empty() {
        eligible = (0..tokens.len()).collect();
    }
    let anchor = eligible[rng.random_range(0..eligible.len())];
    let placement = draw_placement(rng, config.placement_probabilities);
    let determiner = resources
        .determiners()
        .choose(rng)
        .expect("determiner list is validated non-empty")
        .as_str();
    let mut out: Vec<&str> = tokens;
    match placement {
        Placement::Left => out.insert(anchor, determiner),
        Placement::Right => out.insert(anchor + 1, determiner),
        Placement::At => out[anchor] = determiner,
    }
    Ok(out.join(" "))
}

fn synonym_edit(
    text: &str,
    resources: &Resources,
    rng: &mut Stream,
) -> Result<String, CoreError> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    let qualifying: Vec<usize> = (0..tokens.len())
        .filter(|&i| !resources.synonyms_of(tokens[i]).is_empty())
        .collect();
    if qualifying.is_empty() {
        return Ok(text.to_owned());
    }
    let at = qualifying[rng.random_range(0..qualifying.len())];
    let replacement = resources
        .synonyms_of(tokens[at])
        .choose(rng)
        .expect("qualifying token has synonyms")
        .clone();
    let mut out: Vec<String> = tokens.iter().map(|t| t.to_string()).collect();
    out[at] = replacement;
    Ok(out.join(" "))
}

// Applies a word-level map to up to `budget` tokens sampled without
// replacement; may return the input unchanged when the map is identity on
// the sampled tokens.
fn map_sampled_words(
    text: &str,
    budget: usize,
    rng: &mut Stream,
    mut f: impl FnMut(&str) -> String,
) -> Result<String, CoreError> {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    let n = tokens.len();
    let k = budget.min(n);
    let picked = rand::seq::index::sample(rng, n, k);
    let mut out: Vec<String> = tokens.iter().map(|t| t.to_string()).collect();
    for i in picked {
        out[i] = f(tokens[i]);
    }
    Ok(out.join(" "))
}

fn rewritten(
    text: &str,
    mode: RewriteMode,
    rewriter: &mut dyn Rewriter,
) -> Result<String, CoreError> {
    let out = rewriter.rewrite(text, mode)?;
    if out.trim().is_empty() {
        return Err(CoreError::Rewrite(format!(
            "backend returned empty text for mode {}",
            mode.label()
        )));
    }
    Ok(out)
}
