//! Dataset and artifact IO: query/passage JSONL, noised-query JSONL,
//! qrels TSV, ranked-run TSV, encoder checkpoints, index files, sha256
//! hashing, and the per-run provenance manifest. Read errors carry the
//! file path (and line number where one makes sense).
//!
//! Noised rows serialize with exactly the fields anchor_id, noise_type,
//! text, seed; those names are part of the format contract.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use capot_core::corpus::{Passage, Qrels};
use capot_core::encoder::EncoderParams;
use capot_core::index::{DocumentIndex, SearchResult};
use capot_core::noise::{NoiseType, NoisedQuery, Query};

use crate::config::RunConfig;
use crate::error::CliError;

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))
}

pub fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))
}

pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

pub fn hash_file(path: &Path) -> Result<String, CliError> {
    Ok(sha256_hex(&read_bytes(path)?))
}

#[derive(Serialize)]
struct TextRowRef<'a> {
    id: &'a str,
    text: &'a str,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct TextRow {
    id: String,
    text: String,
}

fn read_text_rows(path: &Path, what: &str) -> Result<Vec<TextRow>, CliError> {
    let text = read_text(path)?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: TextRow = serde_json::from_str(line)
            .map_err(|e| CliError::Data(format!("{}:{}: {e}", path.display(), i + 1)))?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Data(format!("{}: no {what}", path.display())));
    }
    Ok(rows)
}

fn write_text_rows<'a>(
    path: &Path,
    rows: impl Iterator<Item = (&'a str, &'a str)>,
) -> Result<(), CliError> {
    let mut out = String::new();
    for (id, text) in rows {
        out.push_str(&serde_json::to_string(&TextRowRef { id, text }).expect("row serializes"));
        out.push('\n');
    }
    write_bytes(path, out.as_bytes())
}

pub fn read_queries(path: &Path) -> Result<Vec<Query>, CliError> {
    Ok(read_text_rows(path, "queries")?
        .into_iter()
        .map(|r| Query::new(r.id, r.text))
        .collect())
}

pub fn write_queries(path: &Path, queries: &[Query]) -> Result<(), CliError> {
    write_text_rows(path, queries.iter().map(|q| (q.id.as_str(), q.text.as_str())))
}

pub fn read_passages(path: &Path) -> Result<Vec<Passage>, CliError> {
    Ok(read_text_rows(path, "passages")?
        .into_iter()
        .map(|r| Passage::new(r.id, r.text))
        .collect())
}

pub fn write_passages(path: &Path, passages: &[Passage]) -> Result<(), CliError> {
    write_text_rows(path, passages.iter().map(|p| (p.id.as_str(), p.text.as_str())))
}

#[derive(Serialize)]
struct NoisedRowRef<'a> {
    anchor_id: &'a str,
    noise_type: &'a str,
    text: &'a str,
    seed: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct NoisedRow {
    anchor_id: String,
    noise_type: String,
    text: String,
    seed: u64,
}

pub fn read_noised(path: &Path) -> Result<Vec<NoisedQuery>, CliError> {
    let text = read_text(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row: NoisedRow = serde_json::from_str(line)
            .map_err(|e| CliError::Data(format!("{}:{}: {e}", path.display(), i + 1)))?;
        let noise_type = NoiseType::parse(&row.noise_type)
            .map_err(|e| CliError::Data(format!("{}:{}: {e}", path.display(), i + 1)))?;
        out.push(NoisedQuery { anchor_id: row.anchor_id, noise_type, text: row.text, seed: row.seed });
    }
    if out.is_empty() {
        return Err(CliError::Data(format!("{}: no noised queries", path.display())));
    }
    Ok(out)
}

pub fn write_noised(path: &Path, noised: &[NoisedQuery]) -> Result<(), CliError> {
    let mut out = String::new();
    for n in noised {
        let row = NoisedRowRef {
            anchor_id: &n.anchor_id,
            noise_type: n.noise_type.label(),
            text: &n.text,
            seed: n.seed,
        };
        out.push_str(&serde_json::to_string(&row).expect("row serializes"));
        out.push('\n');
    }
    write_bytes(path, out.as_bytes())
}

/// Qrels TSV: query_id TAB passage_id, one pair per line.
pub fn read_qrels(path: &Path) -> Result<Qrels, CliError> {
    let text = read_text(path)?;
    let mut qrels = Qrels::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        match (parts.next(), parts.next(), parts.next()) {
            (Some(qid), Some(pid), None) if !qid.is_empty() && !pid.is_empty() => {
                qrels.insert(qid, pid);
            }
            _ => {
                return Err(CliError::Data(format!(
                    "{}:{}: expected query_id<TAB>passage_id",
                    path.display(),
                    i + 1
                )));
            }
        }
    }
    if qrels.is_empty() {
        return Err(CliError::Data(format!("{}: no qrels", path.display())));
    }
    Ok(qrels)
}

pub fn write_qrels(path: &Path, qrels: &Qrels) -> Result<(), CliError> {
    let mut out = String::new();
    for (qid, pids) in qrels.iter() {
        for pid in pids {
            out.push_str(qid);
            out.push('\t');
            out.push_str(pid);
            out.push('\n');
        }
    }
    write_bytes(path, out.as_bytes())
}

/// Ranked run TSV: query_id TAB passage_id TAB rank TAB score, ranks
/// 1-based and contiguous per query. Scores print in Rust's shortest
/// round-trip form, so a written run reads back bit-identically.
pub fn write_run(path: &Path, results: &BTreeMap<String, SearchResult>) -> Result<(), CliError> {
    let mut out = String::new();
    for (qid, result) in results {
        for (rank0, (pid, score)) in result.hits.iter().enumerate() {
            out.push_str(&format!("{qid}\t{pid}\t{}\t{score}\n", rank0 + 1));
        }
    }
    write_bytes(path, out.as_bytes())
}

pub fn read_run(path: &Path) -> Result<BTreeMap<String, SearchResult>, CliError> {
    let text = read_text(path)?;
    let mut results: BTreeMap<String, SearchResult> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad =
            || CliError::Data(format!("{}:{}: bad run row {line:?}", path.display(), i + 1));
        let fields: Vec<&str> = line.split('\t').collect();
        let [qid, pid, rank, score] = fields.as_slice() else {
            return Err(bad());
        };
        let rank: usize = rank.parse().map_err(|_| bad())?;
        let score: f64 = score.parse().map_err(|_| bad())?;
        let entry = results.entry(qid.to_string()).or_insert_with(|| SearchResult { hits: Vec::new() });
        if rank != entry.hits.len() + 1 {
            return Err(CliError::Data(format!(
                "{}:{}: rank {rank} out of order for query {qid:?}",
                path.display(),
                i + 1
            )));
        }
        entry.hits.push((pid.to_string(), score));
    }
    if results.is_empty() {
        return Err(CliError::Data(format!("{}: no queries", path.display())));
    }
    Ok(results)
}

pub fn load_tower(path: &Path) -> Result<EncoderParams, CliError> {
    EncoderParams::from_bytes(&read_bytes(path)?)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn save_tower(path: &Path, params: &EncoderParams) -> Result<(), CliError> {
    write_bytes(path, &params.to_bytes())
}

pub fn load_index(path: &Path) -> Result<DocumentIndex, CliError> {
    DocumentIndex::from_bytes(&read_bytes(path)?)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn save_index(path: &Path, index: &DocumentIndex) -> Result<(), CliError> {
    write_bytes(path, &index.to_bytes())
}

/// Sidecar manifest path for a single-file artifact.
pub fn sidecar(path: &Path) -> PathBuf {
    PathBuf::from(format!("{}.manifest.json", path.display()))
}

/// Provenance for one command run: config hash, seeds, input and output
/// file hashes, the rewrite backend when one was used, loss traces for
/// training commands, and wall-clock time. Artifacts themselves are
/// byte-reproducible; the manifest records how they were made.
#[derive(Serialize)]
pub struct Manifest {
    pub command: String,
    pub config_hash: String,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub backend: Option<String>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub loss_trace: Vec<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub align_trace: Vec<f64>,
    #[serde(skip_serializing_if = "BTreeMap::is_empty")]
    pub notes: BTreeMap<String, String>,
    pub wall_clock_secs: f64,
    #[serde(skip)]
    started: Instant,
}

impl Manifest {
    pub fn new(command: &str, config: &RunConfig) -> Manifest {
        Manifest {
            command: command.to_string(),
            config_hash: config.hash(),
            seeds: BTreeMap::new(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            backend: None,
            loss_trace: Vec::new(),
            align_trace: Vec::new(),
            notes: BTreeMap::new(),
            wall_clock_secs: 0.0,
            started: Instant::now(),
        }
    }

    pub fn seed(&mut self, name: &str, value: u64) {
        self.seeds.insert(name.to_string(), value);
    }

    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        let hash = hash_file(path)?;
        self.inputs.insert(path.display().to_string(), hash);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> Result<(), CliError> {
        let hash = hash_file(path)?;
        self.outputs.insert(path.display().to_string(), hash);
        Ok(())
    }

    pub fn note(&mut self, key: &str, value: impl Into<String>) {
        self.notes.insert(key.to_string(), value.into());
    }

    pub fn write(mut self, path: &Path) -> Result<(), CliError> {
        self.wall_clock_secs = self.started.elapsed().as_secs_f64();
        let mut json = serde_json::to_string_pretty(&self).expect("manifest serializes");
        json.push('\n');
        write_bytes(path, json.as_bytes())
    }
}
