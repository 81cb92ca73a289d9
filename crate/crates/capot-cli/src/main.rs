//! The `capot` binary: synthetic corpora, query noising, dual-encoder
//! training, index construction, query-tower alignment against a frozen
//! index, retrieval, and degradation reporting.
//!
//! Exit codes: 0 success, 1 usage, 2 data error, 3 rewrite-backend
//! error. Errors print as exactly one stderr line.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use capot_cli::config::RunConfig;
use capot_cli::error::CliError;
use capot_cli::io;
use capot_cli::io::Manifest;
use capot_cli::rewrite::make_rewriter;

use capot_core::corpus::generate_synthetic_corpus;
use capot_core::encoder::{featurize, EncoderParams, MAX_TOKENS};
use capot_core::index::{build_index, build_ivf, search_exact, search_ivf, SearchResult};
use capot_core::metrics::{compare_runs, degradation_report, EvalReport};
use capot_core::noise::{noise_dataset, NoiseType};
use capot_core::resources::Resources;
use capot_core::train::{
    align_capot, pretrain_align, sample_alignment_triples, train_baseline,
    train_data_augmentation, Regime,
};

#[derive(Parser)]
#[command(
    name = "capot",
    version,
    about = "Dense-retrieval robustness toolkit: train a dual encoder, freeze its document index, align the query tower against noised queries, and measure degradation"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct ConfigArgs {
    /// key=value config file (# comments allowed)
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn load(&self) -> Result<RunConfig, CliError> {
        RunConfig::load(self.config.as_deref(), &self.set)
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a synthetic retrieval corpus (queries, passages, qrels)
    Synth {
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Apply the enabled noising functions to a query file
    Noise {
        #[arg(long)]
        queries: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Train a dual encoder (train.regime: baseline, da, or pt)
    Train {
        #[arg(long)]
        queries: Option<PathBuf>,
        #[arg(long)]
        passages: Option<PathBuf>,
        #[arg(long)]
        qrels: Option<PathBuf>,
        /// Noised training queries (da regime only)
        #[arg(long)]
        noised: Option<PathBuf>,
        /// External query corpus (pt regime only)
        #[arg(long)]
        external_queries: Option<PathBuf>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Embed passages with the document tower and freeze them into an index
    Index {
        #[arg(long)]
        passages: Option<PathBuf>,
        #[arg(long)]
        doc_tower: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Align the query tower toward noised variants; the index stays frozen
    Align {
        #[arg(long)]
        query_tower: Option<PathBuf>,
        #[arg(long)]
        index: Option<PathBuf>,
        /// Also report the document tower checksum before and after
        #[arg(long)]
        doc_tower: Option<PathBuf>,
        #[arg(long)]
        queries: Option<PathBuf>,
        #[arg(long)]
        noised: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Retrieve the top-k passages for each query
    Search {
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long)]
        query_tower: Option<PathBuf>,
        #[arg(long)]
        queries: Option<PathBuf>,
        /// Search noised variants instead, keyed by their anchor ids
        #[arg(long, conflicts_with = "queries")]
        noised: Option<PathBuf>,
        /// Which noise type to select from --noised
        #[arg(long, requires = "noised")]
        noise_type: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Score runs against qrels and write a degradation report CSV
    Eval {
        /// Run over clean queries
        #[arg(long)]
        clean: Option<PathBuf>,
        /// TYPE=RUN.tsv for a run over noised queries (repeatable)
        #[arg(long = "noisy", value_name = "TYPE=PATH")]
        noisy: Vec<String>,
        #[arg(long)]
        qrels: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Join report CSVs into one side-by-side table on stdout
    Compare {
        /// Report CSV (repeatable, order fixes the columns)
        #[arg(long = "report", value_name = "CSV", required = true)]
        reports: Vec<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        cfg: ConfigArgs,
    },
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.one_line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn run() -> Result<(), CliError> {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e)
            if matches!(
                e.kind(),
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion
            ) =>
        {
            print!("{e}");
            return Ok(());
        }
        Err(e) => {
            let rendered = e.to_string();
            let first = rendered.lines().find(|l| !l.trim().is_empty()).unwrap_or("bad usage");
            let first = first.strip_prefix("error: ").unwrap_or(first);
            return Err(CliError::Usage(first.to_string()));
        }
    };
    match cli.command {
        Cmd::Synth { out_dir, cfg } => run_synth(out_dir, &cfg),
        Cmd::Noise { queries, out, cfg } => run_noise(queries, out, &cfg),
        Cmd::Train { queries, passages, qrels, noised, external_queries, out_dir, cfg } => {
            run_train(queries, passages, qrels, noised, external_queries, out_dir, &cfg)
        }
        Cmd::Index { passages, doc_tower, out, cfg } => {
            run_index(passages, doc_tower, out, &cfg)
        }
        Cmd::Align { query_tower, index, doc_tower, queries, noised, out, cfg } => {
            run_align(query_tower, index, doc_tower, queries, noised, out, &cfg)
        }
        Cmd::Search { index, query_tower, queries, noised, noise_type, out, cfg } => {
            run_search(index, query_tower, queries, noised, noise_type, out, &cfg)
        }
        Cmd::Eval { clean, noisy, qrels, out, cfg } => run_eval(clean, &noisy, qrels, out, &cfg),
        Cmd::Compare { reports, out, cfg } => run_compare(&reports, out, &cfg),
    }
}

/// A path from its flag, falling back to the config's paths section.
fn need_path(
    flag: Option<PathBuf>,
    config: &RunConfig,
    name: &str,
    flag_name: &str,
) -> Result<PathBuf, CliError> {
    flag.or_else(|| config.path(name)).ok_or_else(|| {
        CliError::Usage(format!("missing {flag_name} (or config paths.{name})"))
    })
}

fn make_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path)
        .map_err(|e| CliError::Data(format!("cannot create {}: {e}", path.display())))
}

fn run_synth(out_dir: Option<PathBuf>, cfg: &ConfigArgs) -> Result<(), CliError> {
    let config = cfg.load()?;
    let out = need_path(out_dir, &config, "out", "--out-dir")?;
    let num_queries = config.usize_or("corpus.num_queries", 500)?;
    let vocab_size = config.usize_or("corpus.vocab_size", 600)?;
    let seed = config.u64_or("corpus.seed", 7)?;

    let mut manifest = Manifest::new("synth", &config);
    manifest.seed("corpus.seed", seed);
    let (queries, passages, qrels) = generate_synthetic_corpus(num_queries, vocab_size, seed)?;

    make_dir(&out)?;
    let qpath = out.join("queries.jsonl");
    let ppath = out.join("passages.jsonl");
    let rpath = out.join("qrels.tsv");
    io::write_queries(&qpath, &queries)?;
    io::write_passages(&ppath, &passages)?;
    io::write_qrels(&rpath, &qrels)?;
    for p in [&qpath, &ppath, &rpath] {
        manifest.output(p)?;
    }
    manifest.write(&out.join("manifest.json"))?;
    println!(
        "synth: {} queries, {} passages, {} qrels -> {}",
        queries.len(),
        passages.len(),
        qrels.len(),
        out.display()
    );
    Ok(())
}

fn run_noise(
    queries: Option<PathBuf>,
    out: Option<PathBuf>,
    cfg: &ConfigArgs,
) -> Result<(), CliError> {
    let config = cfg.load()?;
    let qpath = need_path(queries, &config, "queries", "--queries")?;
    let opath = need_path(out, &config, "out", "--out")?;
    let noise_config = config.noise_config()?;
    let queries = io::read_queries(&qpath)?;

    let mut manifest = Manifest::new("noise", &config);
    manifest.seed("noise.seed", noise_config.master_seed);
    manifest.input(&qpath)?;
    let resources = Resources::bundled();
    let (mut rewriter, backend) = make_rewriter(&config, &resources)?;
    let noised = noise_dataset(&queries, &noise_config, &resources, &mut rewriter)?;
    io::write_noised(&opath, &noised)?;
    manifest.backend = Some(backend);
    manifest.output(&opath)?;
    manifest.write(&io::sidecar(&opath))?;
    println!(
        "noise: {} variants from {} queries ({} types) -> {}",
        noised.len(),
        queries.len(),
        noise_config.enabled.len(),
        opath.display()
    );
    Ok(())
}

fn run_train(
    queries: Option<PathBuf>,
    passages: Option<PathBuf>,
    qrels: Option<PathBuf>,
    noised: Option<PathBuf>,
    external_queries: Option<PathBuf>,
    out_dir: Option<PathBuf>,
    cfg: &ConfigArgs,
) -> Result<(), CliError> {
    let config = cfg.load()?;
    let qpath = need_path(queries, &config, "queries", "--queries")?;
    let ppath = need_path(passages, &config, "passages", "--passages")?;
    let rpath = need_path(qrels, &config, "qrels", "--qrels")?;
    let out = need_path(out_dir, &config, "out", "--out-dir")?;
    let train_config = config.train_config()?;
    if train_config.regime == Regime::Capot {
        return Err(CliError::Usage(
            "train does not run capot; align a trained query tower with the align subcommand"
                .to_string(),
        ));
    }

    let noised = match (train_config.regime, noised.or_else(|| config.path("noised"))) {
        (Regime::Da, None) => {
            return Err(CliError::Usage("da training needs --noised".to_string()));
        }
        (Regime::Da, Some(p)) => Some(p),
        (_, Some(_)) => {
            return Err(CliError::Usage(format!(
                "--noised only applies to da training, not {}",
                train_config.regime.label()
            )));
        }
        (_, None) => None,
    };
    let external = match (
        train_config.regime,
        external_queries.or_else(|| config.path("external_queries")),
    ) {
        (Regime::Pt, None) => {
            return Err(CliError::Usage("pt training needs --external-queries".to_string()));
        }
        (Regime::Pt, Some(p)) => Some(p),
        (_, Some(_)) => {
            return Err(CliError::Usage(format!(
                "--external-queries only applies to pt training, not {}",
                train_config.regime.label()
            )));
        }
        (_, None) => None,
    };

    let query_set = io::read_queries(&qpath)?;
    let passage_set = io::read_passages(&ppath)?;
    let qrel_set = io::read_qrels(&rpath)?;

    let mut manifest = Manifest::new("train", &config);
    manifest.seed("train.seed", train_config.seed);
    for p in [&qpath, &ppath, &rpath] {
        manifest.input(p)?;
    }
    manifest.note("regime", train_config.regime.label());

    make_dir(&out)?;
    let query_out = out.join("query.encp");
    let doc_out = out.join("doc.encp");
    let model = match train_config.regime {
        Regime::Baseline => {
            let run = train_baseline(&query_set, &passage_set, &qrel_set, &train_config)?;
            manifest.loss_trace = run.loss_trace;
            run.model
        }
        Regime::Da => {
            let npath = noised.expect("checked above");
            manifest.input(&npath)?;
            let noised_set = io::read_noised(&npath)?;
            let run = train_data_augmentation(
                &query_set,
                &noised_set,
                &passage_set,
                &qrel_set,
                &train_config,
            )?;
            manifest.loss_trace = run.loss_trace;
            run.model
        }
        Regime::Pt => {
            let epath = external.expect("checked above");
            manifest.input(&epath)?;
            let external_set = io::read_queries(&epath)?;
            let noise_config = config.noise_config()?;
            let align_config = config.align_config()?;
            manifest.seed("noise.seed", noise_config.master_seed);
            manifest.seed("align.seed", align_config.seed);
            let resources = Resources::bundled();
            let (mut rewriter, backend) = make_rewriter(&config, &resources)?;
            let run = pretrain_align(
                &external_set,
                &noise_config,
                &resources,
                &mut rewriter,
                &query_set,
                &passage_set,
                &qrel_set,
                &align_config,
                &train_config,
            )?;
            manifest.backend = Some(backend);
            manifest.align_trace = run.align_trace;
            manifest.loss_trace = run.loss_trace;
            let stage1 = out.join("pt_stage1_query.encp");
            io::save_tower(&stage1, &run.stage1_query)?;
            manifest.output(&stage1)?;
            run.model
        }
        Regime::Capot => unreachable!("rejected above"),
    };

    io::save_tower(&query_out, &model.query)?;
    io::save_tower(&doc_out, &model.doc)?;
    manifest.output(&query_out)?;
    manifest.output(&doc_out)?;
    let final_loss = manifest.loss_trace.last().copied();
    manifest.write(&out.join("manifest.json"))?;
    match final_loss {
        Some(loss) => println!(
            "train[{}]: {} epochs, final loss {loss:.6} -> {}",
            train_config.regime.label(),
            train_config.epochs,
            out.display()
        ),
        None => println!(
            "train[{}]: 0 epochs (initialization only) -> {}",
            train_config.regime.label(),
            out.display()
        ),
    }
    Ok(())
}

fn run_index(
    passages: Option<PathBuf>,
    doc_tower: Option<PathBuf>,
    out: Option<PathBuf>,
    cfg: &ConfigArgs,
) -> Result<(), CliError> {
    let config = cfg.load()?;
    let ppath = need_path(passages, &config, "passages", "--passages")?;
    let tpath = need_path(doc_tower, &config, "doc_tower", "--doc-tower")?;
    let opath = need_path(out, &config, "out", "--out")?;
    let num_centroids = config.usize_or("index.num_centroids", 0)?;
    let seed = config.u64_or("index.seed", 0)?;

    let mut manifest = Manifest::new("index", &config);
    manifest.input(&ppath)?;
    manifest.input(&tpath)?;
    let passage_set = io::read_passages(&ppath)?;
    let params = io::load_tower(&tpath)?;
    let mut index = build_index(&params, &passage_set)?;
    if num_centroids > 0 {
        manifest.seed("index.seed", seed);
        index = build_ivf(&index, num_centroids, seed)?;
    }
    io::save_index(&opath, &index)?;
    manifest.output(&opath)?;
    manifest.write(&io::sidecar(&opath))?;
    let quantizer = match index.ivf() {
        Some(ivf) => format!("{} centroids", ivf.num_centroids()),
        None => "exact-only".to_string(),
    };
    println!(
        "index: {} docs, dim {}, {quantizer} -> {}",
        index.num_docs(),
        index.dim(),
        opath.display()
    );
    Ok(())
}

fn run_align(
    query_tower: Option<PathBuf>,
    index: Option<PathBuf>,
    doc_tower: Option<PathBuf>,
    queries: Option<PathBuf>,
    noised: Option<PathBuf>,
    out: Option<PathBuf>,
    cfg: &ConfigArgs,
) -> Result<(), CliError> {
    let config = cfg.load()?;
    let tpath = need_path(query_tower, &config, "query_tower", "--query-tower")?;
    let ipath = need_path(index, &config, "index", "--index")?;
    let qpath = need_path(queries, &config, "queries", "--queries")?;
    let npath = need_path(noised, &config, "noised", "--noised")?;
    let opath = need_path(out, &config, "out", "--out")?;
    let doc_path = doc_tower.or_else(|| config.path("doc_tower"));
    let align_config = config.align_config()?;

    // the index is never opened for writing; hashing it twice is the
    // command's own proof that alignment left it untouched
    let index_before = io::hash_file(&ipath)?;
    let doc_before = doc_path.as_deref().map(io::hash_file).transpose()?;

    let mut manifest = Manifest::new("align", &config);
    manifest.seed("align.seed", align_config.seed);
    for p in [&tpath, &ipath, &qpath, &npath] {
        manifest.input(p)?;
    }
    let query_set = io::read_queries(&qpath)?;
    let noised_set = io::read_noised(&npath)?;
    let params = io::load_tower(&tpath)?;
    let triples = sample_alignment_triples(&query_set, &noised_set, align_config.seed)?;
    let aligned = align_capot(&params, &triples, &align_config)?;
    io::save_tower(&opath, &aligned.params)?;

    let index_after = io::hash_file(&ipath)?;
    println!("index checksum before: {index_before}");
    println!("index checksum after:  {index_after}");
    if index_before != index_after {
        return Err(CliError::Data(format!(
            "index {} changed during alignment",
            ipath.display()
        )));
    }
    if let (Some(path), Some(before)) = (&doc_path, &doc_before) {
        let after = io::hash_file(path)?;
        println!("doc tower checksum before: {before}");
        println!("doc tower checksum after:  {after}");
        if *before != after {
            return Err(CliError::Data(format!(
                "document tower {} changed during alignment",
                path.display()
            )));
        }
    }
    manifest.note("index_checksum", index_before);
    manifest.loss_trace = aligned.loss_trace;
    manifest.output(&opath)?;
    manifest.write(&io::sidecar(&opath))?;
    println!(
        "align: {} triples, {} epochs -> {}",
        triples.len(),
        align_config.epochs,
        opath.display()
    );
    Ok(())
}

fn embed_queries(
    params: &EncoderParams,
    queries: &[capot_core::noise::Query],
) -> Result<Vec<Vec<f64>>, CliError> {
    let mut out = Vec::with_capacity(queries.len());
    for q in queries {
        let feats = featurize(&q.text, MAX_TOKENS, params.num_buckets())?;
        out.push(params.embed(&feats)?);
    }
    Ok(out)
}

fn run_search(
    index: Option<PathBuf>,
    query_tower: Option<PathBuf>,
    queries: Option<PathBuf>,
    noised: Option<PathBuf>,
    noise_type: Option<String>,
    out: Option<PathBuf>,
    cfg: &ConfigArgs,
) -> Result<(), CliError> {
    let config = cfg.load()?;
    let ipath = need_path(index, &config, "index", "--index")?;
    let tpath = need_path(query_tower, &config, "query_tower", "--query-tower")?;
    let opath = need_path(out, &config, "out", "--out")?;
    let k = config.usize_or("search.k", 20)?;
    let nprobe = config.usize_or("search.nprobe", 0)?;

    let mut manifest = Manifest::new("search", &config);
    for p in [&ipath, &tpath] {
        manifest.input(p)?;
    }
    // either clean queries, or one noise type's variants keyed by
    // anchor id so runs line up with the clean qrels
    let (qpath, query_set) = match (&noised, queries) {
        (Some(npath), None) => {
            let label = noise_type.as_deref().ok_or_else(|| {
                CliError::Usage("--noised needs --noise-type".to_string())
            })?;
            let wanted =
                NoiseType::parse(label).map_err(|e| CliError::Usage(e.to_string()))?;
            let rows = io::read_noised(npath)?;
            let selected: Vec<capot_core::noise::Query> = rows
                .into_iter()
                .filter(|n| n.noise_type == wanted)
                .map(|n| capot_core::noise::Query::new(n.anchor_id, n.text))
                .collect();
            if selected.is_empty() {
                return Err(CliError::Data(format!(
                    "{}: no {} variants",
                    npath.display(),
                    wanted.label()
                )));
            }
            manifest.note("noise_type", wanted.label());
            (npath.clone(), selected)
        }
        (None, q) => {
            let qpath = need_path(q, &config, "queries", "--queries")?;
            let query_set = io::read_queries(&qpath)?;
            (qpath, query_set)
        }
        (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
    };
    manifest.input(&qpath)?;
    let doc_index = io::load_index(&ipath)?;
    let params = io::load_tower(&tpath)?;
    let embeddings = embed_queries(&params, &query_set)?;

    let mut results: BTreeMap<String, SearchResult> = BTreeMap::new();
    for (q, emb) in query_set.iter().zip(&embeddings) {
        let hits = if nprobe == 0 {
            search_exact(&doc_index, emb, k)?
        } else {
            search_ivf(&doc_index, emb, k, nprobe)?
        };
        if results.insert(q.id.clone(), hits).is_some() {
            return Err(CliError::Data(format!(
                "{}: duplicate query id {:?}",
                qpath.display(),
                q.id
            )));
        }
    }
    io::write_run(&opath, &results)?;
    manifest.note("k", k.to_string());
    manifest.note("probe", if nprobe == 0 { "exact".to_string() } else { nprobe.to_string() });
    manifest.output(&opath)?;
    manifest.write(&io::sidecar(&opath))?;
    println!("search: {} queries, k={k} -> {}", results.len(), opath.display());
    Ok(())
}

fn run_eval(
    clean: Option<PathBuf>,
    noisy: &[String],
    qrels: Option<PathBuf>,
    out: Option<PathBuf>,
    cfg: &ConfigArgs,
) -> Result<(), CliError> {
    let config = cfg.load()?;
    let cpath = need_path(clean, &config, "queries", "--clean")?;
    let rpath = need_path(qrels, &config, "qrels", "--qrels")?;
    let opath = need_path(out, &config, "out", "--out")?;
    let depths = config.depths()?;
    let regime = Regime::parse(config.str_or("eval.regime", "baseline"))
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let seed = config.u64_or("eval.seed", 0)?;

    let mut manifest = Manifest::new("eval", &config);
    manifest.seed("eval.seed", seed);
    manifest.input(&cpath)?;
    manifest.input(&rpath)?;
    let clean_run = io::read_run(&cpath)?;
    let qrel_set = io::read_qrels(&rpath)?;
    let dataset_hash = io::hash_file(&rpath)?;

    let mut noisy_by_type: BTreeMap<NoiseType, BTreeMap<String, SearchResult>> = BTreeMap::new();
    for spec in noisy {
        let (label, path) = spec.split_once('=').ok_or_else(|| {
            CliError::Usage(format!("--noisy expects TYPE=PATH, got {spec:?}"))
        })?;
        let noise_type =
            NoiseType::parse(label.trim()).map_err(|e| CliError::Usage(e.to_string()))?;
        let path = PathBuf::from(path.trim());
        manifest.input(&path)?;
        if noisy_by_type.insert(noise_type, io::read_run(&path)?).is_some() {
            return Err(CliError::Usage(format!("--noisy {} given twice", label.trim())));
        }
    }

    let report = degradation_report(
        &clean_run,
        &noisy_by_type,
        &qrel_set,
        &depths,
        regime,
        seed,
        &dataset_hash,
    )?;
    io::write_bytes(&opath, report.to_csv().as_bytes())?;
    manifest.note("regime", regime.label());
    manifest.output(&opath)?;
    manifest.write(&io::sidecar(&opath))?;
    println!(
        "eval[{}]: {} queries, {} noise types, depths {:?} -> {}",
        regime.label(),
        clean_run.len(),
        noisy_by_type.len(),
        depths,
        opath.display()
    );
    Ok(())
}

fn run_compare(
    reports: &[PathBuf],
    out: Option<PathBuf>,
    cfg: &ConfigArgs,
) -> Result<(), CliError> {
    let config = cfg.load()?;
    let mut manifest = Manifest::new("compare", &config);
    let mut parsed = Vec::with_capacity(reports.len());
    for path in reports {
        manifest.input(path)?;
        let report = EvalReport::from_csv(&io::read_text(path)?)
            .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
        parsed.push(report);
    }
    let comparison = compare_runs(&parsed)?;
    let csv = comparison.to_csv();
    print!("{csv}");
    if let Some(opath) = out.or_else(|| config.path("out")) {
        io::write_bytes(&opath, csv.as_bytes())?;
        manifest.output(&opath)?;
        manifest.write(&io::sidecar(&opath))?;
    }
    Ok(())
}
