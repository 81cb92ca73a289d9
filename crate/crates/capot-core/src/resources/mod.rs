//! Lexical resources: synonym lexicon, lemma exception table plus suffix
//! rules, keyboard adjacency, stopwords, and determiners.
//!
//! Defaults are embedded in the binary; each file can be swapped out by
//! loading alternative sources through [`ResourceSources`]. Files are plain
//! UTF-8, one entry per line, TAB-separated where a line has two fields.

pub mod porter;

pub use porter::stem;

use alloc::borrow::ToOwned;
use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::CoreError;

/// Raw resource file contents, defaulting to the bundled data.
#[derive(Debug, Clone, Copy)]
pub struct ResourceSources<'a> {
    pub synonyms: &'a str,
    pub lemma_exceptions: &'a str,
    pub keyboard: &'a str,
    pub stopwords: &'a str,
    pub determiners: &'a str,
}

impl Default for ResourceSources<'_> {
    fn default() -> Self {
        ResourceSources {
            synonyms: include_str!("data/synonyms.tsv"),
            lemma_exceptions: include_str!("data/lemma_exceptions.tsv"),
            keyboard: include_str!("data/keyboard.tsv"),
            stopwords: include_str!("data/stopwords.txt"),
            determiners: include_str!("data/determiners.txt"),
        }
    }
}

/// Parsed and validated lexical resources.
#[derive(Debug, Clone)]
pub struct Resources {
    synonyms: BTreeMap<String, Vec<String>>,
    lemma_exceptions: BTreeMap<String, String>,
    keyboard: BTreeMap<char, Vec<char>>,
    stopwords: BTreeSet<String>,
    determiners: Vec<String>,
}

impl Resources {
    /// Loads the data shipped with the crate. Bundled files are validated
    /// by this crate's tests, so this cannot fail at runtime.
    pub fn bundled() -> Resources {
        Resources::from_sources(ResourceSources::default())
            .expect("bundled resource data is self-consistent")
    }

    pub fn from_sources(sources: ResourceSources<'_>) -> Result<Resources, CoreError> {
        Ok(Resources {
            synonyms: parse_synonyms(sources.synonyms)?,
            lemma_exceptions: parse_lemma_exceptions(sources.lemma_exceptions)?,
            keyboard: parse_keyboard(sources.keyboard)?,
            stopwords: parse_word_lines(sources.stopwords, "stopwords")?
                .into_iter()
                .collect(),
            determiners: parse_word_lines(sources.determiners, "determiners")?,
        })
    }

    /// Synonyms for a token, empty when the lexicon has none. Lookup is
    /// case-insensitive; the lexicon itself is all lowercase.
    pub fn synonyms_of(&self, token: &str) -> &[String] {
        let lower = token.to_lowercase();
        self.synonyms.get(&lower).map(Vec::as_slice).unwrap_or(&[])
    }

    /// Adjacent keys on the keyboard grid, empty for unmapped characters
    /// such as space. Case-insensitive.
    pub fn keyboard_neighbors(&self, key: char) -> &[char] {
        let lower = key.to_ascii_lowercase();
        self.keyboard.get(&lower).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn is_stopword(&self, token: &str) -> bool {
        self.stopwords.contains(&token.to_lowercase())
    }

    /// The closed determiner list, in file order.
    pub fn determiners(&self) -> &[String] {
        &self.determiners
    }

    /// Maps a token to a plausible canonical form: the exception table
    /// first, then one pass of suffix stripping (ies/es/s/ing/ed) with the
    /// usual end-of-stem repairs. Non-alphabetic tokens come back
    /// unchanged; alphabetic ones are lowercased.
    pub fn lemmatize(&self, token: &str) -> String {
        if token.is_empty() || !token.bytes().all(|b| b.is_ascii_alphabetic()) {
            return token.to_owned();
        }
        let lower = token.to_ascii_lowercase();
        if let Some(lemma) = self.lemma_exceptions.get(&lower) {
            return lemma.clone();
        }
        strip_suffix_once(&lower)
    }
}

fn strip_suffix_once(word: &str) -> String {
    let b = word.as_bytes();
    let n = b.len();
    if n >= 5 && word.ends_with("ies") {
        let mut out = word[..n - 3].to_owned();
        out.push('y');
        return out;
    }
    for sib in ["ches", "shes", "sses", "xes", "zes"] {
        if word.ends_with(sib) {
            return word[..n - 2].to_owned();
        }
    }
    if n >= 4
        && word.ends_with('s')
        && !word.ends_with("ss")
        && !word.ends_with("us")
        && !word.ends_with("is")
    {
        return word[..n - 1].to_owned();
    }
    if n >= 6 && word.ends_with("ing") {
        return repair_stem(&word[..n - 3]).unwrap_or_else(|| word.to_owned());
    }
    if n >= 5 && word.ends_with("ed") {
        return repair_stem(&word[..n - 2]).unwrap_or_else(|| word.to_owned());
    }
    word.to_owned()
}

// After stripping -ing/-ed: undouble a trailing consonant or restore a
// dropped final e on short stems (hopp -> hop, mak -> make). Returns None
// when the stem has no vowel, which means the suffix was not inflectional
// (as in "sing").
fn repair_stem(stem: &str) -> Option<String> {
    let b = stem.as_bytes();
    if !(0..b.len()).any(|i| !is_consonant(b, i)) {
        return None;
    }
    for (tail, fixed) in [("at", "ate"), ("bl", "ble"), ("iz", "ize")] {
        if stem.ends_with(tail) {
            return Some(format!("{}{}", &stem[..stem.len() - tail.len()], fixed));
        }
    }
    let last = b.len() - 1;
    if last >= 1 && b[last] == b[last - 1] && is_consonant(b, last) {
        if !matches!(b[last], b'l' | b's' | b'z') {
            return Some(stem[..last].to_owned());
        }
        return Some(stem.to_owned());
    }
    if measure(b) == 1 && ends_cvc(b) {
        let mut out = stem.to_owned();
        out.push('e');
        return Some(out);
    }
    Some(stem.to_owned())
}

fn is_consonant(b: &[u8], i: usize) -> bool {
    match b[i] {
        b'a' | b'e' | b'i' | b'o' | b'u' => false,
        b'y' => i == 0 || !is_consonant(b, i - 1),
        _ => true,
    }
}

// Consonant-vowel sequence count over the whole stem.
fn measure(b: &[u8]) -> usize {
    let mut m = 0;
    let mut prev_vowel = false;
    for i in 0..b.len() {
        let cons = is_consonant(b, i);
        if cons && prev_vowel {
            m += 1;
        }
        prev_vowel = !cons;
    }
    m
}

fn ends_cvc(b: &[u8]) -> bool {
    let n = b.len();
    if n < 3 || !is_consonant(b, n - 1) || is_consonant(b, n - 2) || !is_consonant(b, n - 3) {
        return false;
    }
    !matches!(b[n - 1], b'w' | b'x' | b'y')
}

fn parse_synonyms(text: &str) -> Result<BTreeMap<String, Vec<String>>, CoreError> {
    let mut map = BTreeMap::new();
    for (idx, line) in nonempty_lines(text) {
        let (head, tail) = line.split_once('\t').ok_or_else(|| {
            CoreError::Resource(format!("synonyms line {idx}: expected two TAB-separated fields"))
        })?;
        let head = head.trim();
        check_lexicon_word(head, "synonyms", idx)?;
        let mut mates = Vec::new();
        for raw in tail.split(',') {
            let w = raw.trim();
            check_lexicon_word(w, "synonyms", idx)?;
            if w == head {
                return Err(CoreError::Resource(format!(
                    "synonyms line {idx}: {head:?} lists itself"
                )));
            }
            mates.push(w.to_owned());
        }
        if mates.is_empty() {
            return Err(CoreError::Resource(format!(
                "synonyms line {idx}: empty synonym list for {head:?}"
            )));
        }
        if map.insert(head.to_owned(), mates).is_some() {
            return Err(CoreError::Resource(format!(
                "synonyms line {idx}: duplicate entry for {head:?}"
            )));
        }
    }
    Ok(map)
}

fn parse_lemma_exceptions(text: &str) -> Result<BTreeMap<String, String>, CoreError> {
    let mut map = BTreeMap::new();
    for (idx, line) in nonempty_lines(text) {
        let (form, lemma) = line.split_once('\t').ok_or_else(|| {
            CoreError::Resource(format!(
                "lemma exceptions line {idx}: expected two TAB-separated fields"
            ))
        })?;
        let (form, lemma) = (form.trim(), lemma.trim());
        check_lexicon_word(form, "lemma exceptions", idx)?;
        check_lexicon_word(lemma, "lemma exceptions", idx)?;
        if map.insert(form.to_owned(), lemma.to_owned()).is_some() {
            return Err(CoreError::Resource(format!(
                "lemma exceptions line {idx}: duplicate entry for {form:?}"
            )));
        }
    }
    Ok(map)
}

fn parse_keyboard(text: &str) -> Result<BTreeMap<char, Vec<char>>, CoreError> {
    let mut map: BTreeMap<char, Vec<char>> = BTreeMap::new();
    for (idx, line) in nonempty_lines(text) {
        let (key, neighbors) = line.split_once('\t').ok_or_else(|| {
            CoreError::Resource(format!("keyboard line {idx}: expected two TAB-separated fields"))
        })?;
        let mut key_chars = key.trim().chars();
        let key = key_chars.next().ok_or_else(|| {
            CoreError::Resource(format!("keyboard line {idx}: empty key"))
        })?;
        if key_chars.next().is_some() {
            return Err(CoreError::Resource(format!(
                "keyboard line {idx}: key must be a single character"
            )));
        }
        let mates: Vec<char> = neighbors.trim().chars().collect();
        if mates.contains(&key) {
            return Err(CoreError::Resource(format!(
                "keyboard line {idx}: {key:?} lists itself as a neighbor"
            )));
        }
        if map.insert(key, mates).is_some() {
            return Err(CoreError::Resource(format!(
                "keyboard line {idx}: duplicate entry for {key:?}"
            )));
        }
    }
    for (key, mates) in &map {
        for m in mates {
            let reciprocal = map.get(m).is_some_and(|back| back.contains(key));
            if !reciprocal {
                return Err(CoreError::Resource(format!(
                    "keyboard adjacency is not symmetric: {key:?} -> {m:?}"
                )));
            }
        }
    }
    Ok(map)
}

fn parse_word_lines(text: &str, what: &str) -> Result<Vec<String>, CoreError> {
    let mut out = Vec::new();
    for (idx, line) in nonempty_lines(text) {
        let w = line.trim();
        if w.chars().any(char::is_whitespace) {
            return Err(CoreError::Resource(format!(
                "{what} line {idx}: entry {w:?} contains whitespace"
            )));
        }
        if w.to_lowercase() != w {
            return Err(CoreError::Resource(format!(
                "{what} line {idx}: entry {w:?} is not lowercase"
            )));
        }
        out.push(w.to_owned());
    }
    if out.is_empty() {
        return Err(CoreError::Resource(format!("{what}: no entries")));
    }
    Ok(out)
}

fn check_lexicon_word(w: &str, what: &str, line: usize) -> Result<(), CoreError> {
    if w.is_empty() {
        return Err(CoreError::Resource(format!("{what} line {line}: empty word")));
    }
    if w.chars().any(char::is_whitespace) {
        return Err(CoreError::Resource(format!(
            "{what} line {line}: {w:?} contains whitespace"
        )));
    }
    if w.to_lowercase() != w {
        return Err(CoreError::Resource(format!(
            "{what} line {line}: {w:?} is not lowercase"
        )));
    }
    Ok(())
}

fn nonempty_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
}
