//! Seeded synthetic retrieval corpora.
//!
//! Pseudo-words are consonant-vowel-consonant syllables, so distinct
//! vocabularies still share many character 3-grams. A corpus pairs each
//! query with one relevant passage that embeds every query token, plus
//! four distractors that share at least one token.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::IndexedRandom;
use rand::RngExt;

use crate::error::CoreError;
use crate::noise::Query;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Passage {
    pub id: String,
    pub text: String,
}

impl Passage {
    pub fn new(id: impl Into<String>, text: impl Into<String>) -> Passage {
        Passage { id: id.into(), text: text.into() }
    }
}

/// Relevance judgments: query id to a non-empty set of passage ids.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    map: BTreeMap<String, BTreeSet<String>>,
}

impl Qrels {
    pub fn new() -> Qrels {
        Qrels::default()
    }

    pub fn insert(&mut self, query_id: impl Into<String>, passage_id: impl Into<String>) {
        self.map.entry(query_id.into()).or_default().insert(passage_id.into());
    }

    pub fn relevant(&self, query_id: &str) -> Option<&BTreeSet<String>> {
        self.map.get(query_id)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &BTreeSet<String>)> {
        self.map.iter()
    }

    /// Every judged query and passage must exist in the datasets.
    pub fn validate_against(
        &self,
        queries: &[Query],
        passages: &[Passage],
    ) -> Result<(), CoreError> {
        let query_ids: BTreeSet<&str> = queries.iter().map(|q| q.id.as_str()).collect();
        let passage_ids: BTreeSet<&str> = passages.iter().map(|p| p.id.as_str()).collect();
        for (qid, pids) in &self.map {
            if !query_ids.contains(qid.as_str()) {
                return Err(CoreError::InvalidInput(format!(
                    "qrels reference unknown query {qid:?}"
                )));
            }
            for pid in pids {
                if !passage_ids.contains(pid.as_str()) {
                    return Err(CoreError::InvalidInput(format!(
                        "qrels for {qid:?} reference unknown passage {pid:?}"
                    )));
                }
            }
        }
        Ok(())
    }
}

const CONSONANTS: &[u8] = b"bcdfghjklmnpqrstvwxz";
const VOWELS: &[u8] = b"aeiou";

fn syllable(stream: &mut rng::Stream) -> String {
    let c1 = *CONSONANTS.choose(stream).expect("non-empty") as char;
    let v = *VOWELS.choose(stream).expect("non-empty") as char;
    let c2 = *CONSONANTS.choose(stream).expect("non-empty") as char;
    [c1, v, c2].iter().collect()
}

fn build_vocab(size: usize, stream: &mut rng::Stream) -> Result<Vec<String>, CoreError> {
    let mut seen = BTreeSet::new();
    let mut vocab = Vec::with_capacity(size);
    let mut attempts = 0usize;
    while vocab.len() < size {
        attempts += 1;
        if attempts > size * 100 {
            return Err(CoreError::InvalidInput(format!(
                "cannot draw {size} distinct pseudo-words"
            )));
        }
        let syllables = stream.random_range(1..=3usize);
        let word: String = (0..syllables).map(|_| syllable(stream)).collect();
        if seen.insert(word.clone()) {
            vocab.push(word);
        }
    }
    Ok(vocab)
}

const QUERY_TOKENS: core::ops::RangeInclusive<usize> = 4..=9;
const PASSAGE_TOKENS: core::ops::RangeInclusive<usize> = 30..=60;
const DISTRACTORS_PER_QUERY: usize = 4;

/// Generates queries, passages, and qrels. Each query has exactly one
/// relevant passage containing all its tokens in order, interleaved with
/// filler, plus four distractors sharing at least one token.
pub fn generate_synthetic_corpus(
    num_queries: usize,
    vocab_size: usize,
    seed: u64,
) -> Result<(Vec<Query>, Vec<Passage>, Qrels), CoreError> {
    if num_queries < 10 {
        return Err(CoreError::InvalidInput(format!(
            "need at least 10 queries, got {num_queries}"
        )));
    }
    if vocab_size < 3 * *QUERY_TOKENS.end() {
        return Err(CoreError::InvalidInput(format!(
            "vocabulary of {vocab_size} is too small to vary queries"
        )));
    }
    let mut stream = rng::labeled_stream(seed, &["corpus"]);
    let vocab = build_vocab(vocab_size, &mut stream)?;

    let id_width = num_queries.to_string().len().max(5);
    let mut queries = Vec::with_capacity(num_queries);
    let mut passages = Vec::with_capacity(num_queries * (1 + DISTRACTORS_PER_QUERY));
    let mut qrels = Qrels::new();

    for qi in 0..num_queries {
        let qlen = stream.random_range(QUERY_TOKENS);
        let picked = rand::seq::index::sample(&mut stream, vocab.len(), qlen);
        let query_tokens: Vec<&str> = picked.iter().map(|i| vocab[i].as_str()).collect();
        let query_id = format!("q{qi:0id_width$}");
        queries.push(Query::new(query_id.clone(), query_tokens.join(" ")));

        // Filler never reuses this query's own tokens, so token counts in
        // this query's passages are fixed by construction. Other queries'
        // passages may still contain them by chance; the relevant passage
        // splices the query twice so that accidental overlap elsewhere
        // cannot outweigh it.
        let filler: Vec<&str> = vocab
            .iter()
            .map(String::as_str)
            .filter(|w| !query_tokens.contains(w))
            .collect();
        let plen = stream.random_range(PASSAGE_TOKENS);
        let mut tokens: Vec<&str> =
            (0..plen).map(|_| *filler.choose(&mut stream).expect("non-empty")).collect();
        let mut slots: Vec<usize> =
            rand::seq::index::sample(&mut stream, plen, 2 * qlen).into_iter().collect();
        slots.sort_unstable();
        for (slot, token) in slots.iter().zip(query_tokens.iter().chain(&query_tokens)) {
            tokens[*slot] = token;
        }
        let rel_id = format!("p{qi:0id_width$}-rel");
        passages.push(Passage::new(rel_id.clone(), tokens.join(" ")));
        qrels.insert(query_id, rel_id);

        for dj in 0..DISTRACTORS_PER_QUERY {
            let dlen = stream.random_range(PASSAGE_TOKENS);
            let mut tokens: Vec<&str> =
                (0..dlen).map(|_| *filler.choose(&mut stream).expect("non-empty")).collect();
            let shared = *query_tokens.choose(&mut stream).expect("non-empty query");
            let at = stream.random_range(0..dlen);
            tokens[at] = shared;
            passages.push(Passage::new(format!("p{qi:0id_width$}-d{dj}"), tokens.join(" ")));
        }
    }
    Ok((queries, passages, qrels))
}
