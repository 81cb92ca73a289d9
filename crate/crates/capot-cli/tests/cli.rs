//! End-to-end tests of the `capot` binary: pipeline plumbing, byte
//! determinism, exit codes, format contracts, and the record/replay
//! behavior of the HTTP rewrite backend.

use std::collections::BTreeSet;
use std::fs;
use std::io::{Read, Write};
use std::net::TcpListener;
use std::path::Path;
use std::process::{Command, Output};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

fn capot(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_capot"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = capot(args);
    assert!(
        out.status.success(),
        "capot {args:?} failed\nstderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).expect("utf-8 stdout")
}

/// Asserts the exit code and the one-line stderr contract.
fn fails(args: &[&str], code: i32) -> String {
    let out = capot(args);
    assert_eq!(
        out.status.code(),
        Some(code),
        "capot {args:?}\nstderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stderr = String::from_utf8(out.stderr).expect("utf-8 stderr");
    assert_eq!(stderr.lines().count(), 1, "multi-line stderr: {stderr:?}");
    assert!(stderr.starts_with("error: "), "{stderr:?}");
    stderr
}

fn p(path: &Path) -> &str {
    path.to_str().expect("utf-8 path")
}

/// synth -> train(baseline) -> index in `dir`, small enough to run in
/// a few hundred milliseconds.
fn seed_pipeline(dir: &Path) {
    ok(&[
        "synth",
        "--out-dir",
        p(dir),
        "--set",
        "corpus.num_queries=30",
        "--set",
        "corpus.vocab_size=150",
        "--set",
        "corpus.seed=5",
    ]);
    ok(&[
        "train",
        "--queries",
        p(&dir.join("queries.jsonl")),
        "--passages",
        p(&dir.join("passages.jsonl")),
        "--qrels",
        p(&dir.join("qrels.tsv")),
        "--out-dir",
        p(&dir.join("model")),
        "--set",
        "train.epochs=3",
        "--set",
        "train.batch_size=8",
        "--set",
        "train.dim=16",
        "--set",
        "train.num_buckets=512",
    ]);
    ok(&[
        "index",
        "--passages",
        p(&dir.join("passages.jsonl")),
        "--doc-tower",
        p(&dir.join("model/doc.encp")),
        "--out",
        p(&dir.join("docs.index")),
    ]);
}

#[test]
fn pipeline_runs_end_to_end_and_is_byte_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    seed_pipeline(dir);

    // rerunning synth and train reproduces identical artifact bytes
    let again = dir.join("again");
    ok(&[
        "synth",
        "--out-dir",
        p(&again),
        "--set",
        "corpus.num_queries=30",
        "--set",
        "corpus.vocab_size=150",
        "--set",
        "corpus.seed=5",
    ]);
    for name in ["queries.jsonl", "passages.jsonl", "qrels.tsv"] {
        assert_eq!(
            fs::read(dir.join(name)).unwrap(),
            fs::read(again.join(name)).unwrap(),
            "{name} differs between identical synth runs"
        );
    }

    // noise everything offline, then search clean and noised queries
    ok(&[
        "noise",
        "--queries",
        p(&dir.join("queries.jsonl")),
        "--out",
        p(&dir.join("noised.jsonl")),
        "--set",
        "noise.seed=3",
    ]);
    ok(&[
        "search",
        "--index",
        p(&dir.join("docs.index")),
        "--query-tower",
        p(&dir.join("model/query.encp")),
        "--queries",
        p(&dir.join("queries.jsonl")),
        "--out",
        p(&dir.join("clean.tsv")),
        "--set",
        "search.k=10",
    ]);
    ok(&[
        "search",
        "--index",
        p(&dir.join("docs.index")),
        "--query-tower",
        p(&dir.join("model/query.encp")),
        "--noised",
        p(&dir.join("noised.jsonl")),
        "--noise-type",
        "rcs",
        "--out",
        p(&dir.join("rcs.tsv")),
        "--set",
        "search.k=10",
    ]);

    // eval produces the contractual CSV header
    ok(&[
        "eval",
        "--clean",
        p(&dir.join("clean.tsv")),
        "--noisy",
        &format!("rcs={}", p(&dir.join("rcs.tsv"))),
        "--qrels",
        p(&dir.join("qrels.tsv")),
        "--out",
        p(&dir.join("report.csv")),
        "--set",
        "eval.depths=5,10",
    ]);
    let report = fs::read_to_string(dir.join("report.csv")).unwrap();
    assert!(report.starts_with("noise_type,k,accuracy,relative_loss,regime,seed\n"));
    assert!(report.contains("\nrcs,5,"));

    // compare passes a single report through
    let table = ok(&["compare", "--report", p(&dir.join("report.csv"))]);
    assert!(table.starts_with("noise_type,k,regular_accuracy,regular_relative_loss\n"));

    // every artifact carries a provenance manifest
    for manifest in [
        dir.join("manifest.json"),
        dir.join("model/manifest.json"),
        dir.join("docs.index.manifest.json"),
        dir.join("noised.jsonl.manifest.json"),
        dir.join("clean.tsv.manifest.json"),
        dir.join("report.csv.manifest.json"),
    ] {
        let text = fs::read_to_string(&manifest).unwrap();
        let value: serde_json::Value = serde_json::from_str(&text).unwrap();
        assert!(value["config_hash"].is_string(), "{}", manifest.display());
        assert!(value["outputs"].is_object());
    }
}

#[test]
fn align_is_deterministic_and_keeps_the_index_frozen() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    seed_pipeline(dir);
    ok(&[
        "noise",
        "--queries",
        p(&dir.join("queries.jsonl")),
        "--out",
        p(&dir.join("noised.jsonl")),
        "--set",
        "noise.types=typos",
    ]);

    let index_before = fs::read(dir.join("docs.index")).unwrap();
    let doc_before = fs::read(dir.join("model/doc.encp")).unwrap();
    let align = |out: &str| {
        ok(&[
            "align",
            "--query-tower",
            p(&dir.join("model/query.encp")),
            "--index",
            p(&dir.join("docs.index")),
            "--doc-tower",
            p(&dir.join("model/doc.encp")),
            "--queries",
            p(&dir.join("queries.jsonl")),
            "--noised",
            p(&dir.join("noised.jsonl")),
            "--out",
            p(&dir.join(out)),
            "--set",
            "train.dim=16",
            "--set",
            "train.num_buckets=512",
            "--set",
            "align.epochs=2",
            "--set",
            "align.batch_size=8",
        ])
    };
    let stdout = align("aligned_a.encp");
    assert!(stdout.contains("index checksum before: "));
    let before_line = stdout
        .lines()
        .find(|l| l.starts_with("index checksum before"))
        .unwrap()
        .split(": ")
        .nth(1)
        .unwrap()
        .trim()
        .to_string();
    let after_line = stdout
        .lines()
        .find(|l| l.starts_with("index checksum after"))
        .unwrap()
        .split(": ")
        .nth(1)
        .unwrap()
        .trim()
        .to_string();
    assert_eq!(before_line, after_line);
    assert!(stdout.contains("doc tower checksum before"));

    align("aligned_b.encp");
    let a = fs::read(dir.join("aligned_a.encp")).unwrap();
    let b = fs::read(dir.join("aligned_b.encp")).unwrap();
    assert_eq!(a, b, "same inputs must give identical checkpoint bytes");
    assert_ne!(a, fs::read(dir.join("model/query.encp")).unwrap());
    assert_eq!(index_before, fs::read(dir.join("docs.index")).unwrap());
    assert_eq!(doc_before, fs::read(dir.join("model/doc.encp")).unwrap());
}

#[test]
fn usage_and_data_errors_use_the_documented_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();

    fails(&["frobnicate"], 1);
    fails(&["synth"], 1); // missing --out-dir
    let stderr = fails(
        &["synth", "--out-dir", p(&dir.join("x")), "--set", "corpus.quries=5"],
        1,
    );
    assert!(stderr.contains("unknown config key"), "{stderr}");
    let stderr = fails(
        &["train", "--queries", "q", "--passages", "p", "--qrels", "r", "--out-dir", "o", "--set", "train.regime=capot"],
        1,
    );
    assert!(stderr.contains("align"), "{stderr}");

    // data errors: missing file, then an empty run file
    fails(
        &["noise", "--queries", p(&dir.join("missing.jsonl")), "--out", p(&dir.join("n.jsonl"))],
        2,
    );
    let empty = dir.join("empty.tsv");
    fs::write(&empty, "").unwrap();
    fs::write(dir.join("qrels.tsv"), "q1\tp1\n").unwrap();
    let stderr = fails(
        &[
            "eval",
            "--clean",
            p(&empty),
            "--qrels",
            p(&dir.join("qrels.tsv")),
            "--out",
            p(&dir.join("r.csv")),
        ],
        2,
    );
    assert!(stderr.contains("no queries"), "{stderr}");
}

#[test]
fn noise_is_byte_deterministic_with_contractual_fields() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let queries = dir.join("queries.jsonl");
    fs::write(
        &queries,
        "{\"id\":\"q1\",\"text\":\"who played the capital record\"}\n\
         {\"id\":\"q2\",\"text\":\"when was the old bridge built\"}\n",
    )
    .unwrap();
    let run = |out: &str| {
        ok(&[
            "noise",
            "--queries",
            p(&queries),
            "--out",
            p(&dir.join(out)),
            "--set",
            "noise.seed=11",
        ]);
        fs::read(dir.join(out)).unwrap()
    };
    let first = run("a.jsonl");
    let second = run("b.jsonl");
    assert_eq!(first, second, "same seed must produce identical bytes");

    let text = String::from_utf8(first).unwrap();
    let mut types = BTreeSet::new();
    for line in text.lines() {
        let value: serde_json::Value = serde_json::from_str(line).unwrap();
        let keys: Vec<&str> = value.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(keys, ["anchor_id", "noise_type", "seed", "text"]);
        types.insert(value["noise_type"].as_str().unwrap().to_string());
    }
    assert_eq!(types.len(), 10, "all ten noise types present: {types:?}");
}

/// Minimal HTTP/1.1 server answering the rewrite protocol: reads
/// {"text","mode"}, answers {"text": "<text> [<mode>]"}.
fn mock_rewrite_server() -> (String, Arc<AtomicUsize>, Arc<AtomicBool>, thread::JoinHandle<()>) {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/rewrite", listener.local_addr().unwrap());
    let hits = Arc::new(AtomicUsize::new(0));
    let stop = Arc::new(AtomicBool::new(false));
    let (hits2, stop2) = (hits.clone(), stop.clone());
    listener.set_nonblocking(true).unwrap();
    let handle = thread::spawn(move || {
        while !stop2.load(Ordering::SeqCst) {
            match listener.accept() {
                Ok((mut stream, _)) => {
                    stream.set_nonblocking(false).unwrap();
                    stream
                        .set_read_timeout(Some(Duration::from_secs(5)))
                        .unwrap();
                    let mut buf = Vec::new();
                    let mut chunk = [0u8; 1024];
                    // read headers, then exactly content-length body bytes
                    let body_start = loop {
                        let n = stream.read(&mut chunk).unwrap();
                        buf.extend_from_slice(&chunk[..n]);
                        if let Some(pos) =
                            buf.windows(4).position(|w| w == b"\r\n\r\n")
                        {
                            break pos + 4;
                        }
                    };
                    let headers = String::from_utf8_lossy(&buf[..body_start]).to_lowercase();
                    let length: usize = headers
                        .lines()
                        .find_map(|l| l.strip_prefix("content-length:"))
                        .unwrap()
                        .trim()
                        .parse()
                        .unwrap();
                    while buf.len() < body_start + length {
                        let n = stream.read(&mut chunk).unwrap();
                        buf.extend_from_slice(&chunk[..n]);
                    }
                    let request: serde_json::Value =
                        serde_json::from_slice(&buf[body_start..]).unwrap();
                    let rewritten = format!(
                        "{} [{}]",
                        request["text"].as_str().unwrap(),
                        request["mode"].as_str().unwrap()
                    );
                    let body = serde_json::json!({ "text": rewritten }).to_string();
                    let response = format!(
                        "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{body}",
                        body.len()
                    );
                    stream.write_all(response.as_bytes()).unwrap();
                    hits2.fetch_add(1, Ordering::SeqCst);
                }
                Err(ref e) if e.kind() == std::io::ErrorKind::WouldBlock => {
                    thread::sleep(Duration::from_millis(5));
                }
                Err(e) => panic!("accept: {e}"),
            }
        }
    });
    (url, hits, stop, handle)
}

#[test]
fn http_rewrites_record_to_cache_then_replay_offline() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let queries = dir.join("queries.jsonl");
    fs::write(
        &queries,
        "{\"id\":\"q1\",\"text\":\"first question text\"}\n\
         {\"id\":\"q2\",\"text\":\"second question text\"}\n\
         {\"id\":\"q3\",\"text\":\"third question text\"}\n",
    )
    .unwrap();
    let cache = dir.join("cache");
    let (url, hits, stop, handle) = mock_rewrite_server();

    // the endpoint env var overrides a dead endpoint in the config
    let record = Command::new(env!("CARGO_BIN_EXE_capot"))
        .args([
            "noise",
            "--queries",
            p(&queries),
            "--out",
            p(&dir.join("live.jsonl")),
            "--set",
            "noise.types=bt,paraphrase",
            "--set",
            "rewrite.backend=http",
            "--set",
            "rewrite.endpoint=http://127.0.0.1:1/dead",
            "--set",
            &format!("rewrite.cache_dir={}", p(&cache)),
        ])
        .env("CAPOT_REWRITE_ENDPOINT", &url)
        .output()
        .unwrap();
    assert!(
        record.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&record.stderr)
    );
    assert_eq!(hits.load(Ordering::SeqCst), 6, "2 modes x 3 queries");
    let live = fs::read(dir.join("live.jsonl")).unwrap();
    assert!(String::from_utf8_lossy(&live).contains("[bt]"));

    stop.store(true, Ordering::SeqCst);
    handle.join().unwrap();

    // server gone: the populated cache must answer everything
    ok(&[
        "noise",
        "--queries",
        p(&queries),
        "--out",
        p(&dir.join("replay.jsonl")),
        "--set",
        "noise.types=bt,paraphrase",
        "--set",
        "rewrite.backend=http",
        "--set",
        &format!("rewrite.endpoint={url}"),
        "--set",
        &format!("rewrite.cache_dir={}", p(&cache)),
    ]);
    assert_eq!(live, fs::read(dir.join("replay.jsonl")).unwrap());
    assert_eq!(
        fs::read_to_string(cache.join("rewrites.jsonl")).unwrap().lines().count(),
        6
    );

    // a cache miss against the dead endpoint is a backend error
    fs::write(&queries, "{\"id\":\"q9\",\"text\":\"never seen before\"}\n").unwrap();
    fails(
        &[
            "noise",
            "--queries",
            p(&queries),
            "--out",
            p(&dir.join("miss.jsonl")),
            "--set",
            "noise.types=bt",
            "--set",
            "rewrite.backend=http",
            "--set",
            &format!("rewrite.endpoint={url}"),
            "--set",
            &format!("rewrite.cache_dir={}", p(&cache)),
        ],
        3,
    );
}

#[test]
fn compare_widens_columns_per_regime() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    use capot_core::metrics::{EvalReport, RowKey};
    use capot_core::noise::NoiseType;
    use capot_core::train::Regime;

    let mut paths = Vec::new();
    for (regime, none, rcs) in [
        (Regime::Baseline, 0.7973, 0.6712),
        (Regime::Pt, 0.7504, 0.6681),
        (Regime::Da, 0.7961, 0.7524),
        (Regime::Capot, 0.7784, 0.7543),
    ] {
        let report = EvalReport::from_cells(
            regime,
            7,
            "shared",
            &[(RowKey::None, 20, none), (RowKey::Noise(NoiseType::Rcs), 20, rcs)],
        )
        .unwrap();
        let path = dir.join(format!("{}.csv", regime.label()));
        fs::write(&path, report.to_csv()).unwrap();
        paths.push(path);
    }
    let mut args = vec!["compare".to_string()];
    for path in &paths {
        args.push("--report".to_string());
        args.push(p(path).to_string());
    }
    let refs: Vec<&str> = args.iter().map(String::as_str).collect();
    let table = ok(&refs);
    let header = table.lines().next().unwrap();
    assert_eq!(
        header,
        "noise_type,k,regular_accuracy,regular_relative_loss,pt_accuracy,pt_relative_loss,da_accuracy,da_relative_loss,capot_accuracy,capot_relative_loss"
    );
    let rcs_row = table.lines().find(|l| l.starts_with("rcs,20")).unwrap();
    assert!(rcs_row.contains("67.12") && rcs_row.contains("75.43"), "{rcs_row}");

    // schema mismatch between reports is a data error
    let bad = dir.join("bad.csv");
    fs::write(
        &bad,
        "noise_type,k,accuracy,relative_loss,regime,seed\nnone,100,80.00,0.00,capot,7\n",
    )
    .unwrap();
    fails(
        &["compare", "--report", p(&paths[0]), "--report", p(&bad)],
        2,
    );
}
