//! Evaluation surface: retrieval accuracy at k, MRR@k, per-noise-type
//! degradation reports, and side-by-side regime comparisons.
//!
//! Reports key rows by noise type plus three special rows: "none" for
//! clean queries, "typos" aggregating the three character edits, and
//! "average" aggregating all ten types. Every relative loss is
//! recomputed from the accuracy cells, never stored independently, so
//! a report cannot disagree with its own accuracies. Accuracies live in
//! [0,1] internally; CSV reports percentages at two decimals.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::corpus::Qrels;
use crate::error::CoreError;
use crate::index::SearchResult;
use crate::noise::NoiseType;
use crate::train::Regime;

/// A report row: clean queries, one noise type, or an aggregate. The
/// derived order is the table order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum RowKey {
    None,
    Noise(NoiseType),
    Typos,
    Average,
}

impl RowKey {
    pub const TABLE_ORDER: [RowKey; 13] = [
        RowKey::None,
        RowKey::Noise(NoiseType::Determiner),
        RowKey::Noise(NoiseType::Synonym),
        RowKey::Noise(NoiseType::Lemmatize),
        RowKey::Noise(NoiseType::Stem),
        RowKey::Noise(NoiseType::Rcs),
        RowKey::Noise(NoiseType::Kcs),
        RowKey::Noise(NoiseType::Cd),
        RowKey::Noise(NoiseType::Rw),
        RowKey::Noise(NoiseType::Bt),
        RowKey::Noise(NoiseType::Paraphrase),
        RowKey::Typos,
        RowKey::Average,
    ];

    pub fn label(self) -> &'static str {
        match self {
            RowKey::None => "none",
            RowKey::Noise(t) => t.label(),
            RowKey::Typos => "typos",
            RowKey::Average => "average",
        }
    }

    pub fn parse(s: &str) -> Result<RowKey, CoreError> {
        match s {
            "none" => Ok(RowKey::None),
            "typos" => Ok(RowKey::Typos),
            "average" => Ok(RowKey::Average),
            other => Ok(RowKey::Noise(NoiseType::parse(other)?)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalCell {
    pub accuracy: f64,
    /// (accuracy - clean accuracy) / clean accuracy at the same depth.
    pub relative_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub regime: Regime,
    pub seed: u64,
    pub dataset_hash: String,
    depths: Vec<usize>,
    rows: BTreeMap<RowKey, BTreeMap<usize, EvalCell>>,
}

const REPORT_CSV_HEADER: &str = "noise_type,k,accuracy,relative_loss,regime,seed";

fn percent(v: f64) -> String {
    let p = v * 100.0;
    // avoid "-0.00"
    format!("{:.2}", if p == 0.0 { 0.0 } else { p })
}

impl EvalReport {
    /// Builds a report from raw accuracy cells (fractions in [0,1]).
    /// Needs a "none" cell at every depth; every relative loss is
    /// computed here. Rows must cover the same depth set.
    pub fn from_cells(
        regime: Regime,
        seed: u64,
        dataset_hash: impl Into<String>,
        cells: &[(RowKey, usize, f64)],
    ) -> Result<EvalReport, CoreError> {
        if cells.is_empty() {
            return Err(CoreError::InvalidInput("no accuracy cells".to_string()));
        }
        let mut accuracy: BTreeMap<RowKey, BTreeMap<usize, f64>> = BTreeMap::new();
        let mut depth_set: BTreeSet<usize> = BTreeSet::new();
        for &(key, k, acc) in cells {
            if k == 0 {
                return Err(CoreError::InvalidInput("depth k must be at least 1".to_string()));
            }
            if !(0.0..=1.0).contains(&acc) {
                return Err(CoreError::InvalidInput(format!(
                    "accuracy {acc} for row {:?} at k={k} is outside [0,1]",
                    key.label()
                )));
            }
            if accuracy.entry(key).or_default().insert(k, acc).is_some() {
                return Err(CoreError::InvalidInput(format!(
                    "duplicate cell for row {:?} at k={k}",
                    key.label()
                )));
            }
            depth_set.insert(k);
        }
        let depths: Vec<usize> = depth_set.iter().copied().collect();
        for (key, row) in &accuracy {
            if row.len() != depths.len() {
                return Err(CoreError::InvalidInput(format!(
                    "row {:?} does not cover every depth in {depths:?}",
                    key.label()
                )));
            }
        }
        let clean = accuracy.get(&RowKey::None).ok_or_else(|| {
            CoreError::InvalidInput("report needs a \"none\" row to compute losses".to_string())
        })?;
        for (&k, &acc) in clean {
            if acc == 0.0 {
                return Err(CoreError::Numeric(format!(
                    "clean accuracy is zero at k={k}; relative loss is undefined"
                )));
            }
        }
        let clean = clean.clone();
        let mut rows: BTreeMap<RowKey, BTreeMap<usize, EvalCell>> = BTreeMap::new();
        for (key, row) in accuracy {
            let mut out = BTreeMap::new();
            for (k, acc) in row {
                let base = clean[&k];
                out.insert(k, EvalCell { accuracy: acc, relative_loss: (acc - base) / base });
            }
            rows.insert(key, out);
        }
        let report =
            EvalReport { regime, seed, dataset_hash: dataset_hash.into(), depths, rows };
        report.validate()?;
        Ok(report)
    }

    pub fn depths(&self) -> &[usize] {
        &self.depths
    }

    pub fn row_keys(&self) -> Vec<RowKey> {
        self.rows.keys().copied().collect()
    }

    pub fn cell(&self, key: RowKey, k: usize) -> Option<EvalCell> {
        self.rows.get(&key).and_then(|row| row.get(&k)).copied()
    }

    /// Checks the report's published invariants: rectangular depth
    /// coverage, bounded accuracies, losses that recompute from the
    /// accuracy cells, and aggregate rows equal to the mean of their
    /// constituents whenever all constituents are present.
    pub fn validate(&self) -> Result<(), CoreError> {
        if self.depths.is_empty() {
            return Err(CoreError::InvalidInput("report has no depths".to_string()));
        }
        let clean = self
            .rows
            .get(&RowKey::None)
            .ok_or_else(|| CoreError::InvalidInput("report has no \"none\" row".to_string()))?
            .clone();
        for (key, row) in &self.rows {
            let ks: Vec<usize> = row.keys().copied().collect();
            if ks != self.depths {
                return Err(CoreError::InvalidInput(format!(
                    "row {:?} covers depths {ks:?}, report has {:?}",
                    key.label(),
                    self.depths
                )));
            }
            for (k, cell) in row {
                if !(0.0..=1.0).contains(&cell.accuracy) || !cell.relative_loss.is_finite() {
                    return Err(CoreError::Numeric(format!(
                        "row {:?} at k={k} has out-of-range values",
                        key.label()
                    )));
                }
                let base = clean[k].accuracy;
                let expected = (cell.accuracy - base) / base;
                if (cell.relative_loss - expected).abs() > 1e-6 {
                    return Err(CoreError::Numeric(format!(
                        "row {:?} at k={k}: stored loss {} disagrees with accuracies ({expected})",
                        key.label(),
                        cell.relative_loss
                    )));
                }
            }
        }
        self.check_aggregate(RowKey::Typos, &NoiseType::TYPOS)?;
        self.check_aggregate(RowKey::Average, &NoiseType::ALL)?;
        Ok(())
    }

    fn check_aggregate(&self, agg: RowKey, parts: &[NoiseType]) -> Result<(), CoreError> {
        let Some(row) = self.rows.get(&agg) else { return Ok(()) };
        if !parts.iter().all(|t| self.rows.contains_key(&RowKey::Noise(*t))) {
            return Ok(());
        }
        for &k in &self.depths {
            let mean = parts
                .iter()
                .map(|t| self.rows[&RowKey::Noise(*t)][&k].accuracy)
                .sum::<f64>()
                / parts.len() as f64;
            if (row[&k].accuracy - mean).abs() > 1e-9 {
                return Err(CoreError::Numeric(format!(
                    "{:?} row at k={k} is {}, constituents average {mean}",
                    agg.label(),
                    row[&k].accuracy
                )));
            }
        }
        Ok(())
    }

    /// CSV with percentages at two decimals; full precision stays
    /// internal. Rows in table order, then by depth.
    pub fn to_csv(&self) -> String {
        let mut out = String::from(REPORT_CSV_HEADER);
        out.push('\n');
        for key in RowKey::TABLE_ORDER {
            let Some(row) = self.rows.get(&key) else { continue };
            for (k, cell) in row {
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    key.label(),
                    k,
                    percent(cell.accuracy),
                    percent(cell.relative_loss),
                    self.regime.label(),
                    self.seed
                ));
            }
        }
        out
    }

    /// Parses a report CSV. Losses are recomputed from the parsed
    /// accuracy cells rather than trusted, so the result always
    /// validates; the dataset hash is not part of the CSV.
    pub fn from_csv(text: &str) -> Result<EvalReport, CoreError> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| CoreError::Format("empty report CSV".to_string()))?;
        if header.trim_end() != REPORT_CSV_HEADER {
            return Err(CoreError::Format(format!(
                "bad report header {header:?}, expected {REPORT_CSV_HEADER:?}"
            )));
        }
        let mut cells = Vec::new();
        let mut meta: Option<(Regime, u64)> = None;
        for line in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 6 {
                return Err(CoreError::Format(format!("bad report row {line:?}")));
            }
            let key = RowKey::parse(fields[0].trim())?;
            let k: usize = fields[1]
                .trim()
                .parse()
                .map_err(|_| CoreError::Format(format!("bad depth {:?}", fields[1])))?;
            let acc: f64 = fields[2]
                .trim()
                .parse()
                .map_err(|_| CoreError::Format(format!("bad accuracy {:?}", fields[2])))?;
            let regime = Regime::parse(fields[4].trim())?;
            let seed: u64 = fields[5]
                .trim()
                .parse()
                .map_err(|_| CoreError::Format(format!("bad seed {:?}", fields[5])))?;
            match meta {
                None => meta = Some((regime, seed)),
                Some(m) if m != (regime, seed) => {
                    return Err(CoreError::Format(
                        "report rows disagree on regime/seed".to_string(),
                    ));
                }
                Some(_) => {}
            }
            cells.push((key, k, acc / 100.0));
        }
        let (regime, seed) =
            meta.ok_or_else(|| CoreError::Format("report CSV has no rows".to_string()))?;
        EvalReport::from_cells(regime, seed, "", &cells)
    }
}

fn check_results(
    results: &BTreeMap<String, SearchResult>,
    qrels: &Qrels,
    k: usize,
) -> Result<(), CoreError> {
    if k == 0 {
        return Err(CoreError::InvalidInput("depth k must be at least 1".to_string()));
    }
    if results.is_empty() {
        return Err(CoreError::InvalidInput("no queries to evaluate".to_string()));
    }
    let missing: Vec<&str> = results
        .keys()
        .filter(|qid| qrels.relevant(qid).is_none())
        .map(String::as_str)
        .collect();
    if !missing.is_empty() {
        return Err(CoreError::InvalidInput(format!(
            "queries missing from qrels: {missing:?}"
        )));
    }
    Ok(())
}

/// Fraction of queries whose top-k holds at least one relevant passage.
pub fn retrieval_accuracy(
    results: &BTreeMap<String, SearchResult>,
    qrels: &Qrels,
    k: usize,
) -> Result<f64, CoreError> {
    check_results(results, qrels, k)?;
    let mut hits = 0usize;
    for (qid, result) in results {
        let relevant = qrels.relevant(qid).expect("checked above");
        if result.hits.iter().take(k).any(|(id, _)| relevant.contains(id)) {
            hits += 1;
        }
    }
    Ok(hits as f64 / results.len() as f64)
}

/// Mean over queries of 1/rank of the first relevant passage within the
/// top k, counting 0 when none appears.
pub fn mrr_at_k(
    results: &BTreeMap<String, SearchResult>,
    qrels: &Qrels,
    k: usize,
) -> Result<f64, CoreError> {
    check_results(results, qrels, k)?;
    let mut total = 0.0;
    for (qid, result) in results {
        let relevant = qrels.relevant(qid).expect("checked above");
        if let Some(pos) =
            result.hits.iter().take(k).position(|(id, _)| relevant.contains(id))
        {
            total += 1.0 / (pos + 1) as f64;
        }
    }
    Ok(total / results.len() as f64)
}

/// Assembles the full degradation grid from retrieval runs: a "none"
/// row from the clean results, one row per supplied noise type (keyed
/// by anchor query id), a "typos" aggregate when all three character
/// edits are present, and an "average" aggregate when all ten types
/// are. Every run must cover exactly the clean query id set.
pub fn degradation_report(
    clean: &BTreeMap<String, SearchResult>,
    noisy_by_type: &BTreeMap<NoiseType, BTreeMap<String, SearchResult>>,
    qrels: &Qrels,
    depths: &[usize],
    regime: Regime,
    seed: u64,
    dataset_hash: &str,
) -> Result<EvalReport, CoreError> {
    if depths.is_empty() {
        return Err(CoreError::InvalidInput("no recall depths requested".to_string()));
    }
    let clean_ids: BTreeSet<&str> = clean.keys().map(String::as_str).collect();
    for (t, results) in noisy_by_type {
        let ids: BTreeSet<&str> = results.keys().map(String::as_str).collect();
        if ids != clean_ids {
            return Err(CoreError::InvalidInput(format!(
                "{} results cover a different query set than the clean run",
                t.label()
            )));
        }
    }
    let mut cells: Vec<(RowKey, usize, f64)> = Vec::new();
    for &k in depths {
        cells.push((RowKey::None, k, retrieval_accuracy(clean, qrels, k)?));
        for (t, results) in noisy_by_type {
            cells.push((RowKey::Noise(*t), k, retrieval_accuracy(results, qrels, k)?));
        }
    }
    for (agg, parts) in
        [(RowKey::Typos, &NoiseType::TYPOS[..]), (RowKey::Average, &NoiseType::ALL[..])]
    {
        if parts.iter().all(|t| noisy_by_type.contains_key(t)) {
            for &k in depths {
                let mean = cells
                    .iter()
                    .filter(|(key, ck, _)| {
                        *ck == k
                            && matches!(key, RowKey::Noise(t) if parts.contains(t))
                    })
                    .map(|(_, _, acc)| acc)
                    .sum::<f64>()
                    / parts.len() as f64;
                cells.push((agg, k, mean));
            }
        }
    }
    EvalReport::from_cells(regime, seed, dataset_hash, &cells)
}

/// Side-by-side regime table: shared row keys and depths, one
/// accuracy/loss column pair per report.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub columns: Vec<String>,
    pub keys: Vec<RowKey>,
    pub depths: Vec<usize>,
    cells: BTreeMap<(RowKey, usize), Vec<EvalCell>>,
}

impl Comparison {
    pub fn cell(&self, key: RowKey, k: usize, column: usize) -> Option<EvalCell> {
        self.cells.get(&(key, k)).and_then(|row| row.get(column)).copied()
    }

    /// Accuracy difference of a column against the first column.
    pub fn delta_vs_first(&self, key: RowKey, k: usize, column: usize) -> Option<f64> {
        let row = self.cells.get(&(key, k))?;
        Some(row.get(column)?.accuracy - row.first()?.accuracy)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("noise_type,k");
        for c in &self.columns {
            out.push_str(&format!(",{c}_accuracy,{c}_relative_loss"));
        }
        out.push('\n');
        for key in RowKey::TABLE_ORDER {
            if !self.keys.contains(&key) {
                continue;
            }
            for &k in &self.depths {
                out.push_str(&format!("{},{k}", key.label()));
                for cell in &self.cells[&(key, k)] {
                    out.push_str(&format!(
                        ",{},{}",
                        percent(cell.accuracy),
                        percent(cell.relative_loss)
                    ));
                }
                out.push('\n');
            }
        }
        out
    }
}

/// Joins reports into one table. All reports must share depths and row
/// keys; columns are labeled by regime ("regular" for the baseline) and
/// disambiguated by position when regimes repeat.
pub fn compare_runs(reports: &[EvalReport]) -> Result<Comparison, CoreError> {
    if reports.is_empty() {
        return Err(CoreError::InvalidInput("no reports to compare".to_string()));
    }
    let depths = reports[0].depths.clone();
    let keys = reports[0].row_keys();
    for r in &reports[1..] {
        if r.depths != depths || r.row_keys() != keys {
            return Err(CoreError::InvalidInput(
                "reports disagree on rows or depths".to_string(),
            ));
        }
    }
    let mut columns: Vec<String> = Vec::with_capacity(reports.len());
    for r in reports {
        let base = match r.regime {
            Regime::Baseline => "regular".to_string(),
            other => other.label().to_string(),
        };
        let mut label = base.clone();
        let mut n = 2;
        while columns.contains(&label) {
            label = format!("{base}#{n}");
            n += 1;
        }
        columns.push(label);
    }
    let mut cells = BTreeMap::new();
    for &key in &keys {
        for &k in &depths {
            let row: Vec<EvalCell> =
                reports.iter().map(|r| r.cell(key, k).expect("schema checked")).collect();
            cells.insert((key, k), row);
        }
    }
    Ok(Comparison { columns, keys, depths, cells })
}
