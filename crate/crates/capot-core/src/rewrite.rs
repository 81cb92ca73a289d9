//! Query rewriting: the trait the noise pipeline calls for
//! back-translation and paraphrase, plus the deterministic offline stub.
//!
//! The HTTP-backed implementation lives in the companion CLI crate; this
//! module has no IO.

use alloc::borrow::ToOwned;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::CoreError;
use crate::resources::Resources;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RewriteMode {
    BackTranslation,
    Paraphrase,
}

impl RewriteMode {
    pub fn label(self) -> &'static str {
        match self {
            RewriteMode::BackTranslation => "bt",
            RewriteMode::Paraphrase => "paraphrase",
        }
    }
}

/// A rewrite backend. Implementations must be deterministic per
/// (mode, text) for reproducible noising runs; the stub is, and the HTTP
/// backend gets determinism from its on-disk cache.
pub trait Rewriter {
    fn rewrite(&mut self, text: &str, mode: RewriteMode) -> Result<String, CoreError>;
}

// One-way substitution table emulating a translation round trip. Keys and
// replacements are disjoint sets, which is what makes the pass idempotent.
const ROUND_TRIP_TABLE: &[(&str, &str)] = &[
    ("movie", "film"),
    ("movies", "films"),
    ("song", "tune"),
    ("songs", "tunes"),
    ("start", "begin"),
    ("started", "began"),
    ("starts", "begins"),
    ("buy", "purchase"),
    ("bought", "purchased"),
    ("big", "large"),
    ("small", "little"),
    ("fast", "quick"),
    ("happy", "glad"),
    ("sad", "unhappy"),
    ("smart", "clever"),
    ("famous", "renowned"),
    ("rich", "wealthy"),
    ("old", "ancient"),
    ("new", "recent"),
    ("good", "fine"),
    ("bad", "awful"),
    ("get", "obtain"),
    ("got", "obtained"),
    ("make", "produce"),
    ("made", "produced"),
    ("show", "display"),
    ("showed", "displayed"),
    ("help", "assist"),
    ("helped", "assisted"),
    ("need", "require"),
    ("needed", "required"),
    ("want", "desire"),
    ("wanted", "desired"),
    ("use", "employ"),
    ("used", "employed"),
    ("find", "locate"),
    ("found", "located"),
    ("give", "supply"),
    ("gave", "supplied"),
    ("tell", "inform"),
    ("told", "informed"),
    ("ask", "inquire"),
    ("asked", "inquired"),
    ("answer", "reply"),
    ("answered", "replied"),
    ("walk", "stroll"),
    ("walked", "strolled"),
    ("eat", "consume"),
    ("house", "residence"),
    ("car", "automobile"),
    ("job", "occupation"),
    ("money", "currency"),
    ("kid", "child"),
    ("kids", "children"),
    ("world", "globe"),
    ("sea", "ocean"),
    ("street", "road"),
    ("city", "metropolis"),
    ("doctor", "physician"),
    ("lawyer", "attorney"),
];

/// Offline backend: a fixed word-substitution round trip for
/// back-translation, and a synonym pass with determiner normalization for
/// paraphrase. Both are pure functions of (mode, text).
pub struct StubRewriter<'a> {
    resources: &'a Resources,
}

impl<'a> StubRewriter<'a> {
    pub fn new(resources: &'a Resources) -> Self {
        StubRewriter { resources }
    }

    fn back_translate(&self, text: &str) -> String {
        map_tokens(text, |token| {
            let lower = token.to_lowercase();
            ROUND_TRIP_TABLE
                .iter()
                .find(|(from, _)| *from == lower)
                .map(|(_, to)| restore_case(token, to))
        })
    }

    fn paraphrase(&self, text: &str) -> String {
        map_tokens(text, |token| {
            let lower = token.to_lowercase();
            if self.resources.determiners().contains(&lower) {
                return Some(restore_case(token, "the"));
            }
            self.resources
                .synonyms_of(token)
                .first()
                .map(|s| restore_case(token, s))
        })
    }
}

impl Rewriter for StubRewriter<'_> {
    fn rewrite(&mut self, text: &str, mode: RewriteMode) -> Result<String, CoreError> {
        if text.trim().is_empty() {
            return Err(CoreError::Rewrite("empty text".to_owned()));
        }
        Ok(match mode {
            RewriteMode::BackTranslation => self.back_translate(text),
            RewriteMode::Paraphrase => self.paraphrase(text),
        })
    }
}

fn map_tokens(text: &str, mut f: impl FnMut(&str) -> Option<String>) -> String {
    let mapped: Vec<String> = text
        .split_whitespace()
        .map(|tok| f(tok).unwrap_or_else(|| tok.to_owned()))
        .collect();
    mapped.join(" ")
}

// Carries an original token's leading capitalization onto its replacement.
fn restore_case(original: &str, replacement: &str) -> String {
    let mut chars = original.chars();
    let first_upper = chars.next().is_some_and(char::is_uppercase);
    if !first_upper {
        return replacement.to_owned();
    }
    let mut out = String::with_capacity(replacement.len());
    let mut rest = replacement.chars();
    if let Some(c) = rest.next() {
        out.extend(c.to_uppercase());
    }
    out.extend(rest);
    out
}
