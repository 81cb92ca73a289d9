//! Whole-system acceptance checks, one test per shipping requirement.
//!
//! Criteria 1-4 exercise the numeric core directly: degradation
//! arithmetic against published retrieval figures, gradient exactness,
//! search-oracle equivalence, and bulk noising invariants. Criteria 5-8
//! share one expensive fixture: the four training regimes on the default
//! synthetic corpus, evaluated under held-out noise. Run with
//! --nocapture to see the measured numbers behind each PASS line.

use std::collections::{BTreeMap, BTreeSet};
use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use capot_core::corpus::{generate_synthetic_corpus, Qrels};
use capot_core::encoder::{featurize, EncoderParams, Features, MAX_TOKENS};
use capot_core::index::{
    build_index, build_ivf, search_exact, search_ivf, DocumentIndex, SearchResult,
};
use capot_core::loss::{anchor_loss, capot_loss, contrastive_loss, ranking_loss, LossWeights};
use capot_core::metrics::{compare_runs, degradation_report, EvalReport, RowKey};
use capot_core::noise::{
    apply_noise, noise_dataset, NoiseConfig, NoiseType, NoisedQuery, Query,
};
use capot_core::resources::{stem, Resources};
use capot_core::rewrite::StubRewriter;
use capot_core::rng;
use capot_core::train::{
    align_capot, pretrain_align, sample_alignment_triples, train_baseline,
    train_data_augmentation, Regime, TrainConfig,
};
use capot_cli::io;
use rand::RngExt;

const DEPTHS: [usize; 3] = [20, 100, 200];
const MAX_DEPTH: usize = 200;

// The default synthetic benchmark: 500 queries, 5 passages each.
const CORPUS_QUERIES: usize = 500;
const CORPUS_VOCAB: usize = 300;
const CORPUS_SEED: u64 = 7;
// A second pseudo-vocabulary for out-of-distribution alignment.
const EXTERNAL_SEED: u64 = 13;
// Training-time noise and held-out evaluation noise draw different edits.
const TRAIN_NOISE_SEED: u64 = 1;
const EVAL_NOISE_SEED: u64 = 2;
// Independent character-noise draws per query for alignment exposure;
// each draw corrupts a different position, so coverage of which token
// breaks is what lets alignment generalize to unseen edits.
const TRAIN_NOISE_DRAWS: u64 = 8;

// A deliberately cramped model: few dimensions and heavy bucket
// collisions keep ranking margins close to the perturbation a single
// character edit causes, which is the failure mode worth measuring.
const DIM: usize = 16;
const NUM_BUCKETS: usize = 512;
const TRAIN_EPOCHS: usize = 25;
const ALIGN_EPOCHS: usize = 12;
const ALIGN_LR: f64 = 0.2;

fn tokens(text: &str) -> Vec<&str> {
    text.split_whitespace().collect()
}

// ---------------------------------------------------------------------
// criterion 1: the degradation arithmetic reproduces published cells

#[test]
fn criterion_1_degradation_arithmetic_reproduces_published_cells() {
    let started = Instant::now();
    // (clean accuracy, average noisy accuracy, expected relative loss),
    // all at depth 20, quoted to two decimals in the source material
    let cases = [
        ("nq", 0.7973, 0.7230, -0.0931),
        ("msmarco", 0.7163, 0.5845, -0.1840),
        ("triviaqa", 0.7940, 0.7586, -0.0446),
    ];
    for (dataset, clean, noisy, expected) in cases {
        let report = EvalReport::from_cells(
            Regime::Baseline,
            0,
            dataset,
            &[(RowKey::None, 20, clean), (RowKey::Average, 20, noisy)],
        )
        .expect("published cells form a valid report");
        let cell = report.cell(RowKey::Average, 20).expect("average row present");
        let err = (cell.relative_loss - expected).abs();
        // +/- 0.01 percentage points = 1e-4 in fractional terms
        assert!(
            err <= 1e-4,
            "{dataset}: relative loss {:.6} differs from published {expected} by {err:.2e}",
            cell.relative_loss
        );
    }
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "arithmetic took {elapsed:?}");
    println!(
        "PASS criterion 1: three published degradation cells reproduced to <=0.01pp in {elapsed:?}"
    );
}

// ---------------------------------------------------------------------
// criterion 2: analytic gradients vs central finite differences

fn random_vec(stream: &mut rng::Stream, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| stream.random_range(-1.0..1.0)).collect()
}

fn random_weights(stream: &mut rng::Stream) -> LossWeights {
    LossWeights {
        tau_positive: stream.random_range(0.2..1.5),
        tau_negative: stream.random_range(0.05..0.8),
        tau_contrastive: stream.random_range(0.1..2.0),
        tau_anchor: stream.random_range(0.1..2.0),
        tau_ranking: stream.random_range(0.1..2.0),
        eps_contrastive: stream.random_range(0.0..0.6),
        eps_anchor: stream.random_range(0.0..0.3),
        eps_ranking: stream.random_range(0.0..0.3),
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[test]
fn criterion_2_loss_gradients_match_finite_differences() {
    let started = Instant::now();
    let dim = 8;
    let h = 1e-5;
    let close = |fd: f64, analytic: f64| (fd - analytic).abs() <= 1e-4 * (1.0 + fd.abs());
    let mut stream = rng::stream(2002);
    let mut checked = 0usize;
    while checked < 1000 {
        let w = random_weights(&mut stream);
        let x = random_vec(&mut stream, dim);
        let pos = random_vec(&mut stream, dim);
        let neg = random_vec(&mut stream, dim);
        let frozen = random_vec(&mut stream, dim);
        // margin-slack-safe: every hinge pre-activation stays clear of
        // its kink, so the loss is differentiable across the FD window
        let pre_c = w.tau_positive * sq_dist(&x, &pos) - w.tau_negative * sq_dist(&x, &neg)
            + w.eps_contrastive;
        let pre_a = sq_dist(&x, &frozen) + w.eps_anchor;
        let pre_r = -(dot(&pos, &x) - dot(&frozen, &x)) + w.eps_ranking;
        if pre_c.abs() < 1e-3 || pre_a.abs() < 1e-3 || pre_r.abs() < 1e-3 {
            continue;
        }

        // combined objective, gradients wrt all three trainable embeddings
        let (_, grads) = capot_loss(&x, &pos, &neg, &frozen, &w).expect("loss");
        let total =
            |x: &[f64], p: &[f64], n: &[f64]| capot_loss(x, p, n, &frozen, &w).unwrap().0.total;
        for d in 0..dim {
            let bump = |v: &[f64], delta: f64| {
                let mut out = v.to_vec();
                out[d] += delta;
                out
            };
            let fd_x = (total(&bump(&x, h), &pos, &neg) - total(&bump(&x, -h), &pos, &neg))
                / (2.0 * h);
            let fd_pos = (total(&x, &bump(&pos, h), &neg) - total(&x, &bump(&pos, -h), &neg))
                / (2.0 * h);
            let fd_neg = (total(&x, &pos, &bump(&neg, h)) - total(&x, &pos, &bump(&neg, -h)))
                / (2.0 * h);
            for (fd, an) in [(fd_x, grads.x[d]), (fd_pos, grads.pos[d]), (fd_neg, grads.neg[d])] {
                assert!(close(fd, an), "sample {checked} dim {d}: fd {fd} vs analytic {an}");
            }

            // each term separately, against its own reported gradient
            let (_, g_c) = contrastive_loss(&x, &pos, &neg, &w).unwrap();
            let c_of = |x: &[f64], p: &[f64], n: &[f64]| contrastive_loss(x, p, n, &w).unwrap().0;
            let fd = (c_of(&bump(&x, h), &pos, &neg) - c_of(&bump(&x, -h), &pos, &neg)) / (2.0 * h);
            assert!(close(fd, g_c.x[d]), "contrastive x[{d}]: fd {fd} vs {}", g_c.x[d]);
            let fd = (c_of(&x, &bump(&pos, h), &neg) - c_of(&x, &bump(&pos, -h), &neg)) / (2.0 * h);
            assert!(close(fd, g_c.pos[d]), "contrastive pos[{d}]: fd {fd} vs {}", g_c.pos[d]);
            let fd = (c_of(&x, &pos, &bump(&neg, h)) - c_of(&x, &pos, &bump(&neg, -h))) / (2.0 * h);
            assert!(close(fd, g_c.neg[d]), "contrastive neg[{d}]: fd {fd} vs {}", g_c.neg[d]);

            let (_, g_a) = anchor_loss(&x, &frozen, &w).unwrap();
            let a_of = |x: &[f64]| anchor_loss(x, &frozen, &w).unwrap().0;
            let fd = (a_of(&bump(&x, h)) - a_of(&bump(&x, -h))) / (2.0 * h);
            assert!(close(fd, g_a[d]), "anchor x[{d}]: fd {fd} vs {}", g_a[d]);
        }
        // the score-gap term is a function of two scalars
        let s_pos = dot(&pos, &x);
        let s_anchor = dot(&frozen, &x);
        let (_, (g_pos, g_anchor)) = ranking_loss(s_pos, s_anchor, &w).unwrap();
        let r_of = |a: f64, b: f64| ranking_loss(a, b, &w).unwrap().0;
        let fd = (r_of(s_pos + h, s_anchor) - r_of(s_pos - h, s_anchor)) / (2.0 * h);
        assert!(close(fd, g_pos), "ranking d/ds_pos: fd {fd} vs {g_pos}");
        let fd = (r_of(s_pos, s_anchor + h) - r_of(s_pos, s_anchor - h)) / (2.0 * h);
        assert!(close(fd, g_anchor), "ranking d/ds_anchor: fd {fd} vs {g_anchor}");

        checked += 1;
    }

    // the total is linear in the three mix weights: additive in the mix
    // vector and homogeneous under scaling, with the raw terms untouched
    for case in 0..200u64 {
        let mut s = rng::stream(9000 + case);
        let x = random_vec(&mut s, dim);
        let pos = random_vec(&mut s, dim);
        let neg = random_vec(&mut s, dim);
        let frozen = random_vec(&mut s, dim);
        let base = random_weights(&mut s);
        let eval = |c: f64, a: f64, r: f64| {
            let w = LossWeights { tau_contrastive: c, tau_anchor: a, tau_ranking: r, ..base };
            capot_loss(&x, &pos, &neg, &frozen, &w).unwrap().0
        };
        let (c1, a1, r1) = (s.random_range(0.0..2.0), s.random_range(0.0..2.0), s.random_range(0.0..2.0));
        let (c2, a2, r2) = (s.random_range(0.0..2.0), s.random_range(0.0..2.0), s.random_range(0.0..2.0));
        let scale: f64 = s.random_range(0.0..3.0);
        let b1 = eval(c1, a1, r1);
        let b2 = eval(c2, a2, r2);
        let sum = eval(c1 + c2, a1 + a2, r1 + r2);
        let scaled = eval(scale * c1, scale * a1, scale * r1);
        assert!(
            (sum.total - (b1.total + b2.total)).abs() <= 1e-9 * (1.0 + sum.total.abs()),
            "additivity: {} vs {}",
            sum.total,
            b1.total + b2.total
        );
        assert!(
            (scaled.total - scale * b1.total).abs() <= 1e-9 * (1.0 + scaled.total.abs()),
            "homogeneity: {} vs {}",
            scaled.total,
            scale * b1.total
        );
        // the per-term values report the unweighted hinges
        assert_eq!(b1.contrastive, b2.contrastive);
        assert_eq!(b1.anchor, b2.anchor);
        assert_eq!(b1.ranking, b2.ranking);
    }

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "gradient suite took {elapsed:?}");
    println!(
        "PASS criterion 2: 1000 margin-safe gradient checks at <=1e-4 rel error and \
         200 mix-weight linearity checks at 1e-9 in {elapsed:?}"
    );
}

// ---------------------------------------------------------------------
// criterion 3: exact search vs a naive scan oracle, and IVF convergence

fn oracle_top_k(ids: &[String], vectors: &[f32], dim: usize, q: &[f64], k: usize) -> Vec<(String, f64)> {
    let mut scored: Vec<(String, f64)> = (0..ids.len())
        .map(|d| {
            let mut s = 0.0;
            for (a, b) in q.iter().zip(&vectors[d * dim..(d + 1) * dim]) {
                s += a * *b as f64;
            }
            (ids[d].clone(), s)
        })
        .collect();
    scored.sort_by(|x, y| {
        y.1.partial_cmp(&x.1).expect("finite scores").then_with(|| x.0.cmp(&y.0))
    });
    scored.truncate(k);
    scored
}

#[test]
fn criterion_3_exact_search_matches_naive_oracle_and_ivf_converges() {
    let started = Instant::now();
    let (n, dim, num_centroids, num_queries) = (1000usize, 24usize, 25usize, 100usize);
    let mut stream = rng::stream(3003);
    let unit = |stream: &mut rng::Stream| -> Vec<f64> {
        loop {
            let v: Vec<f64> = (0..dim).map(|_| stream.random_range(-1.0..1.0)).collect();
            let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.1 {
                return v.iter().map(|x| x / norm).collect();
            }
        }
    };

    // 900 random directions plus 100 byte-identical duplicates: equal
    // scores force the id tie-break on every query that lands near one
    let mut vectors: Vec<f32> = Vec::with_capacity(n * dim);
    for _ in 0..900 {
        vectors.extend(unit(&mut stream).iter().map(|x| *x as f32));
    }
    for j in 0..100 {
        let src = (j * 9) * dim;
        let row: Vec<f32> = vectors[src..src + dim].to_vec();
        vectors.extend(row);
    }
    // scrambled ids so duplicates sort before their originals about half
    // the time, exercising the tie-break in both directions
    let ids: Vec<String> = (0..n).map(|i| format!("d{:04}", (i * 7) % n)).collect();
    let index = DocumentIndex::from_vectors(ids.clone(), vectors.clone(), dim).expect("index");

    let mut queries: Vec<Vec<f64>> = (0..num_queries - 10).map(|_| unit(&mut stream)).collect();
    for j in 0..10 {
        // aim straight at a duplicated vector: its two copies tie at rank 1
        let src = (j * 9) * dim;
        queries.push(vectors[src..src + dim].iter().map(|x| *x as f64).collect());
    }

    let mut tied_pairs = 0usize;
    for q in &queries {
        for k in DEPTHS {
            let got = search_exact(&index, q, k).expect("exact search");
            let want = oracle_top_k(&ids, &vectors, dim, q, k);
            assert_eq!(got.hits, want, "exact search disagrees with the scan oracle at k={k}");
            tied_pairs += got.hits.windows(2).filter(|w| w[0].1 == w[1].1).count();
        }
    }
    assert!(tied_pairs >= 10, "expected duplicated vectors to force ties, saw {tied_pairs}");

    let ivf = build_ivf(&index, num_centroids, 303).expect("ivf");
    for q in &queries {
        for k in DEPTHS {
            let exact = search_exact(&ivf, q, k).expect("exact");
            let full_probe = search_ivf(&ivf, q, k, num_centroids).expect("full probe");
            assert_eq!(full_probe.hits, exact.hits, "full-probe IVF must equal exact at k={k}");
            // probing more centroids can only add candidates; anything in
            // the exact top-k that is a candidate stays in the probed top-k
            let exact_ids: BTreeSet<&str> = exact.hits.iter().map(|(id, _)| id.as_str()).collect();
            let mut last = 0usize;
            for nprobe in 1..=num_centroids {
                let probed = search_ivf(&ivf, q, k, nprobe).expect("probed");
                let found =
                    probed.hits.iter().filter(|(id, _)| exact_ids.contains(id.as_str())).count();
                assert!(
                    found >= last,
                    "recall dropped from {last} to {found} at nprobe={nprobe}, k={k}"
                );
                last = found;
            }
            assert_eq!(last, exact.hits.len(), "full probe must recover the whole exact top-k");
        }
    }

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "search oracle suite took {elapsed:?}");
    println!(
        "PASS criterion 3: exact search matched the scan oracle on 100 queries x 3 depths \
         ({tied_pairs} tied pairs exercised), IVF monotone and exact at full probe, in {elapsed:?}"
    );
}

// ---------------------------------------------------------------------
// criterion 4: bulk noising invariants, determinism, lexical exemplars

// Every way a single aligned edit can explain `after`: (position in
// `after`, the new char, true when it substituted). Empty means the
// strings are equal; ambiguous insertions list all candidate positions.
fn edit_explanations(before: &str, after: &str) -> Result<Vec<(usize, char, bool)>, String> {
    let av: Vec<char> = before.chars().collect();
    let bv: Vec<char> = after.chars().collect();
    if bv.len() == av.len() {
        let diffs: Vec<usize> = (0..av.len()).filter(|&i| av[i] != bv[i]).collect();
        match diffs.len() {
            0 => Ok(Vec::new()),
            1 => Ok(vec![(diffs[0], bv[diffs[0]], true)]),
            n => Err(format!("{n} aligned substitutions")),
        }
    } else if bv.len() == av.len() + 1 {
        let skips: Vec<(usize, char, bool)> = (0..bv.len())
            .filter(|&skip| bv[..skip] == av[..skip] && bv[skip + 1..] == av[skip..])
            .map(|skip| (skip, bv[skip], false))
            .collect();
        if skips.is_empty() {
            Err("length grew by one but no single insertion explains it".to_string())
        } else {
            Ok(skips)
        }
    } else {
        Err(format!("length went from {} to {}", av.len(), bv.len()))
    }
}

fn random_text(stream: &mut rng::Stream) -> String {
    let words = stream.random_range(1..6usize);
    (0..words)
        .map(|_| {
            let len = stream.random_range(1..=8usize);
            (0..len).map(|_| (b'a' + stream.random_range(0..26u8)) as char).collect::<String>()
        })
        .collect::<Vec<_>>()
        .join(" ")
}

fn check_noise_structure(t: NoiseType, before: &str, after: &str, res: &Resources) {
    let b_tokens = tokens(before);
    let a_tokens = tokens(after);
    let ctx = || format!("{}: {before:?} -> {after:?}", t.label());
    match t {
        NoiseType::Rcs | NoiseType::Kcs => {
            let edits =
                edit_explanations(before, after).unwrap_or_else(|e| panic!("{}: {e}", ctx()));
            let pool_ok = |c: char| c.is_ascii_lowercase() || c == ' ';
            if edits.is_empty() {
                // drew the char already there, or degenerate passthrough
            } else if t == NoiseType::Rcs {
                let (_, c, _) = edits[0];
                assert!(pool_ok(c), "{}: drew {c:?} outside a-z/space", ctx());
            } else {
                // the drawn char must sit next to its anchor on the keyboard,
                // falling back to the plain pool when the anchor is unmapped
                let av: Vec<char> = before.chars().collect();
                let anchor_ok = |a: char, c: char| {
                    let n = res.keyboard_neighbors(a);
                    if n.is_empty() { pool_ok(c) } else { n.contains(&c) }
                };
                let ok = edits.iter().any(|&(i, c, substituted)| {
                    if substituted {
                        anchor_ok(av[i], c)
                    } else {
                        (i < av.len() && anchor_ok(av[i], c))
                            || (i > 0 && anchor_ok(av[i - 1], c))
                    }
                });
                assert!(ok, "{}: edit has no keyboard-adjacent anchor", ctx());
            }
        }
        NoiseType::Cd => {
            let ws = |s: &str| s.chars().filter(|c| c.is_whitespace()).count();
            assert_eq!(ws(before), ws(after), "{}: separators changed", ctx());
            let non_ws = before.chars().filter(|c| !c.is_whitespace()).count();
            if non_ws >= 2 {
                assert_eq!(after.chars().count(), before.chars().count() - 1, "{}", ctx());
            } else {
                assert_eq!(before, after, "{}", ctx());
            }
        }
        NoiseType::Rw => {
            let mut b = b_tokens.clone();
            let mut a = a_tokens.clone();
            b.sort_unstable();
            a.sort_unstable();
            assert_eq!(b, a, "{}: token multiset changed", ctx());
        }
        NoiseType::Determiner => {
            assert!(
                a_tokens.len() == b_tokens.len() || a_tokens.len() == b_tokens.len() + 1,
                "{}: token count went {} -> {}",
                ctx(),
                b_tokens.len(),
                a_tokens.len()
            );
        }
        NoiseType::Stem | NoiseType::Lemmatize => {
            assert_eq!(a_tokens.len(), b_tokens.len(), "{}: token count changed", ctx());
            let changed: Vec<usize> =
                (0..a_tokens.len()).filter(|&i| a_tokens[i] != b_tokens[i]).collect();
            assert!(changed.len() <= 5, "{}: {} tokens changed", ctx(), changed.len());
            for &i in &changed {
                let mapped = match t {
                    NoiseType::Stem => stem(b_tokens[i]),
                    _ => res.lemmatize(b_tokens[i]),
                };
                assert_eq!(a_tokens[i], mapped, "{}", ctx());
            }
        }
        NoiseType::Synonym => {
            assert_eq!(a_tokens.len(), b_tokens.len(), "{}: token count changed", ctx());
            let changed: Vec<usize> =
                (0..a_tokens.len()).filter(|&i| a_tokens[i] != b_tokens[i]).collect();
            assert!(changed.len() <= 1, "{}: {} tokens changed", ctx(), changed.len());
            for &i in &changed {
                assert!(
                    res.synonyms_of(b_tokens[i]).iter().any(|s| s == a_tokens[i]),
                    "{}: {:?} is not a listed synonym of {:?}",
                    ctx(),
                    a_tokens[i],
                    b_tokens[i]
                );
            }
        }
        NoiseType::Bt | NoiseType::Paraphrase => {
            assert!(!after.trim().is_empty(), "{}: empty rewrite", ctx());
            assert_eq!(a_tokens.len(), b_tokens.len(), "{}: token count changed", ctx());
        }
    }
}

#[test]
fn criterion_4_noising_invariants_hold_in_bulk() {
    let started = Instant::now();
    let res = Resources::bundled();
    let mut stub = StubRewriter::new(&res);
    let cases = 10_000usize;
    for t in NoiseType::ALL {
        let mut stream = rng::labeled_stream(4004, &[t.label()]);
        for case in 0..cases {
            let text = random_text(&mut stream);
            let cfg = NoiseConfig { master_seed: case as u64, ..NoiseConfig::default() };
            let q = Query::new("q", text.clone());
            let rec = apply_noise(&q, t, &cfg, &res, &mut stub)
                .unwrap_or_else(|e| panic!("{} on {text:?}: {e}", t.label()));
            let again = apply_noise(&q, t, &cfg, &res, &mut stub).unwrap();
            assert_eq!(rec, again, "{} is not deterministic on {text:?}", t.label());
            assert_eq!(rec.seed, rng::derive_seed(case as u64, &["q", t.label()]));
            check_noise_structure(t, &text, &rec.text, &res);
            if t == NoiseType::Bt {
                // the round-trip substitution table is closed
                let twice = apply_noise(&Query::new("q", rec.text.clone()), t, &cfg, &res, &mut stub)
                    .unwrap();
                assert_eq!(twice.text, rec.text, "bt not idempotent on {text:?}");
            }
        }
    }

    // byte-level determinism of the full dataset pass, via the real codec
    let (queries, _, _) = generate_synthetic_corpus(100, 300, 11).expect("corpus");
    let cfg = NoiseConfig { master_seed: 5, ..NoiseConfig::default() };
    let dir = tempfile::tempdir().expect("tempdir");
    let mut paths = Vec::new();
    for run in 0..2 {
        let mut stub = StubRewriter::new(&res);
        let noised = noise_dataset(&queries, &cfg, &res, &mut stub).expect("dataset");
        assert_eq!(noised.len(), queries.len() * NoiseType::ALL.len());
        let path = dir.path().join(format!("noised-{run}.jsonl"));
        io::write_noised(&path, &noised).expect("write");
        paths.push(path);
    }
    let a = io::read_bytes(&paths[0]).unwrap();
    let b = io::read_bytes(&paths[1]).unwrap();
    assert_eq!(a, b, "noised dataset bytes differ between identical runs");

    // lexical exemplars from the bundled resources
    assert_eq!(stem("record"), "record");
    assert_eq!(stem("recorded"), "record");
    assert!(
        res.synonyms_of("capital").iter().any(|s| s == "majuscule"),
        "capital must list majuscule as a synonym"
    );
    assert_eq!(res.lemmatize("plays"), "play");

    let elapsed = started.elapsed();
    println!(
        "PASS criterion 4: 10 noise types x {cases} structural checks, byte-identical \
         dataset reruns, and the three lexical exemplars, in {elapsed:?}"
    );
}

// ---------------------------------------------------------------------
// shared fixture for criteria 5-8: the four regimes on one corpus

struct EvalSets {
    clean: Vec<(String, Features)>,
    noised: BTreeMap<NoiseType, Vec<(String, Features)>>,
}

struct Fixture {
    build_secs: f64,
    queries: Vec<Query>,
    noised_train: Vec<NoisedQuery>,
    baseline_query: EncoderParams,
    baseline_doc: EncoderParams,
    baseline_index: DocumentIndex,
    external_queries: usize,
    regular: EvalReport,
    da: EvalReport,
    pt: EvalReport,
    capot: EvalReport,
    capot_ext: EvalReport,
}

fn base_train_config() -> TrainConfig {
    TrainConfig {
        regime: Regime::Baseline,
        batch_size: 32,
        learning_rate: 0.5,
        epochs: TRAIN_EPOCHS,
        negatives_per_positive: 1,
        seed: CORPUS_SEED,
        loss_weights: LossWeights::default(),
        dim: DIM,
        num_buckets: NUM_BUCKETS,
    }
}

fn align_config(seed: u64) -> TrainConfig {
    TrainConfig {
        regime: Regime::Capot,
        epochs: ALIGN_EPOCHS,
        learning_rate: ALIGN_LR,
        seed,
        ..base_train_config()
    }
}

fn feats(text: &str) -> Features {
    featurize(text, MAX_TOKENS, NUM_BUCKETS).expect("featurize")
}

fn run_queries(
    tower: &EncoderParams,
    index: &DocumentIndex,
    set: &[(String, Features)],
) -> BTreeMap<String, SearchResult> {
    set.iter()
        .map(|(id, f)| {
            let emb = tower.embed(f).expect("embed");
            (id.clone(), search_exact(index, &emb, MAX_DEPTH).expect("search"))
        })
        .collect()
}

fn regime_report(
    tower: &EncoderParams,
    index: &DocumentIndex,
    sets: &EvalSets,
    types: &[NoiseType],
    regime: Regime,
    qrels: &Qrels,
) -> EvalReport {
    let clean = run_queries(tower, index, &sets.clean);
    let noisy: BTreeMap<NoiseType, _> =
        types.iter().map(|t| (*t, run_queries(tower, index, &sets.noised[t]))).collect();
    degradation_report(&clean, &noisy, qrels, &DEPTHS, regime, EVAL_NOISE_SEED, "synthetic-v1")
        .expect("degradation report")
}

fn typo_noise(seed: u64) -> NoiseConfig {
    NoiseConfig {
        enabled: NoiseType::TYPOS.to_vec(),
        master_seed: seed,
        ..NoiseConfig::default()
    }
}

// Several independent draws of the three character-noise classes, so a
// query's variants break different tokens in different ways.
fn multi_draw_typos(queries: &[Query], base_seed: u64, res: &Resources) -> Vec<NoisedQuery> {
    let mut out = Vec::new();
    for draw in 0..TRAIN_NOISE_DRAWS {
        let mut stub = StubRewriter::new(res);
        let batch = noise_dataset(queries, &typo_noise(base_seed + 1000 * draw), res, &mut stub)
            .expect("noise draw");
        out.extend(batch);
    }
    out
}

fn build_fixture() -> Fixture {
    let started = Instant::now();
    let res = Resources::bundled();
    let (queries, passages, qrels) =
        generate_synthetic_corpus(CORPUS_QUERIES, CORPUS_VOCAB, CORPUS_SEED).expect("corpus");

    // character-edit noise for training-time exposure, a different draw
    // of the same noise for held-out evaluation
    let noised_train = multi_draw_typos(&queries, TRAIN_NOISE_SEED, &res);
    let eval_cfg = NoiseConfig { master_seed: EVAL_NOISE_SEED, ..NoiseConfig::default() };
    let mut stub = StubRewriter::new(&res);
    let noised_eval = noise_dataset(&queries, &eval_cfg, &res, &mut stub).expect("eval noise");

    let mut sets = EvalSets {
        clean: queries.iter().map(|q| (q.id.clone(), feats(&q.text))).collect(),
        noised: BTreeMap::new(),
    };
    for nq in &noised_eval {
        sets.noised
            .entry(nq.noise_type)
            .or_default()
            .push((nq.anchor_id.clone(), feats(&nq.text)));
    }

    let tcfg = base_train_config();
    let baseline = train_baseline(&queries, &passages, &qrels, &tcfg).expect("baseline");
    let baseline_index = build_index(&baseline.model.doc, &passages).expect("index");

    let triples =
        sample_alignment_triples(&queries, &noised_train, TRAIN_NOISE_SEED).expect("triples");
    let aligned = align_capot(&baseline.model.query, &triples, &align_config(TRAIN_NOISE_SEED))
        .expect("alignment");

    let da_out = train_data_augmentation(
        &queries,
        &noised_train,
        &passages,
        &qrels,
        &TrainConfig { regime: Regime::Da, ..tcfg.clone() },
    )
    .expect("augmented training");
    let da_index = build_index(&da_out.model.doc, &passages).expect("augmented index");

    // a second pseudo-vocabulary; accidental token collisions with the
    // main corpus are filtered so the distributions stay disjoint
    let (ext_raw, _, _) =
        generate_synthetic_corpus(CORPUS_QUERIES, CORPUS_VOCAB, EXTERNAL_SEED).expect("external");
    let main_tokens: BTreeSet<&str> = queries
        .iter()
        .map(|q| q.text.as_str())
        .chain(passages.iter().map(|p| p.text.as_str()))
        .flat_map(str::split_whitespace)
        .collect();
    let ext_queries: Vec<Query> = ext_raw
        .into_iter()
        .filter(|q| q.text.split_whitespace().all(|t| !main_tokens.contains(t)))
        .collect();

    let mut stub = StubRewriter::new(&res);
    let pt_out = pretrain_align(
        &ext_queries,
        &typo_noise(EXTERNAL_SEED),
        &res,
        &mut stub,
        &queries,
        &passages,
        &qrels,
        &align_config(EXTERNAL_SEED),
        &TrainConfig { regime: Regime::Pt, ..tcfg.clone() },
    )
    .expect("pretraining alignment");
    let pt_index = build_index(&pt_out.model.doc, &passages).expect("pt index");

    let ext_noised = multi_draw_typos(&ext_queries, EXTERNAL_SEED, &res);
    let ext_triples =
        sample_alignment_triples(&ext_queries, &ext_noised, EXTERNAL_SEED).expect("ext triples");
    let ext_aligned =
        align_capot(&baseline.model.query, &ext_triples, &align_config(EXTERNAL_SEED))
            .expect("external alignment");

    let all = &NoiseType::ALL[..];
    let typos = &NoiseType::TYPOS[..];
    let regular =
        regime_report(&baseline.model.query, &baseline_index, &sets, all, Regime::Baseline, &qrels);
    let capot = regime_report(&aligned.params, &baseline_index, &sets, all, Regime::Capot, &qrels);
    let da = regime_report(&da_out.model.query, &da_index, &sets, all, Regime::Da, &qrels);
    let pt = regime_report(&pt_out.model.query, &pt_index, &sets, all, Regime::Pt, &qrels);
    let capot_ext =
        regime_report(&ext_aligned.params, &baseline_index, &sets, typos, Regime::Capot, &qrels);

    for (name, report) in [
        ("regular", &regular),
        ("capot", &capot),
        ("da", &da),
        ("pt", &pt),
        ("capot-ext", &capot_ext),
    ] {
        let grab = |key: RowKey, k: usize| {
            report.cell(key, k).map(|c| c.accuracy).unwrap_or(f64::NAN)
        };
        println!(
            "fixture {name:>9}: clean@20 {:.4} typos@20 {:.4} typos@100 {:.4} typos@200 {:.4}",
            grab(RowKey::None, 20),
            grab(RowKey::Typos, 20),
            grab(RowKey::Typos, 100),
            grab(RowKey::Typos, 200)
        );
    }

    Fixture {
        build_secs: started.elapsed().as_secs_f64(),
        queries,
        noised_train,
        baseline_query: baseline.model.query,
        baseline_doc: baseline.model.doc,
        baseline_index,
        external_queries: ext_queries.len(),
        regular,
        da,
        pt,
        capot,
        capot_ext,
    }
}

fn fixture() -> &'static Fixture {
    static FIXTURE: OnceLock<Fixture> = OnceLock::new();
    FIXTURE.get_or_init(build_fixture)
}

// ---------------------------------------------------------------------
// criterion 5: alignment leaves the stored index and doc tower untouched

#[test]
fn criterion_5_alignment_leaves_index_and_doc_tower_bytes_unchanged() {
    let fix = fixture();
    let dir = tempfile::tempdir().expect("tempdir");
    let index_path = dir.path().join("index.bin");
    let doc_path = dir.path().join("doc.encp");
    let tower_path = dir.path().join("query.encp");
    let queries_path = dir.path().join("queries.jsonl");
    let noised_path = dir.path().join("noised.jsonl");
    let out_path = dir.path().join("aligned.encp");
    io::save_index(&index_path, &fix.baseline_index).expect("index");
    io::save_tower(&doc_path, &fix.baseline_doc).expect("doc tower");
    io::save_tower(&tower_path, &fix.baseline_query).expect("query tower");
    io::write_queries(&queries_path, &fix.queries).expect("queries");
    io::write_noised(&noised_path, &fix.noised_train).expect("noised");

    let index_before = io::hash_file(&index_path).unwrap();
    let doc_before = io::hash_file(&doc_path).unwrap();

    let out = Command::new(env!("CARGO_BIN_EXE_capot"))
        .arg("align")
        .arg("--index")
        .arg(&index_path)
        .arg("--doc-tower")
        .arg(&doc_path)
        .arg("--query-tower")
        .arg(&tower_path)
        .arg("--queries")
        .arg(&queries_path)
        .arg("--noised")
        .arg(&noised_path)
        .arg("--out")
        .arg(&out_path)
        .args(["--set", "align.epochs=2", "--set", "align.seed=1"])
        .output()
        .expect("spawn align");
    assert!(
        out.status.success(),
        "align failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains(&format!("index checksum before: {index_before}")), "{stdout}");
    assert!(stdout.contains(&format!("index checksum after:  {index_before}")), "{stdout}");
    assert!(stdout.contains(&format!("doc tower checksum before: {doc_before}")), "{stdout}");
    assert!(stdout.contains(&format!("doc tower checksum after:  {doc_before}")), "{stdout}");

    assert_eq!(io::hash_file(&index_path).unwrap(), index_before, "index bytes changed");
    assert_eq!(io::hash_file(&doc_path).unwrap(), doc_before, "doc tower bytes changed");
    assert_ne!(
        io::read_bytes(&out_path).unwrap(),
        io::read_bytes(&tower_path).unwrap(),
        "alignment should move the query tower"
    );
    println!(
        "PASS criterion 5: index {} and doc tower {} byte-identical through alignment",
        &index_before[..12],
        &doc_before[..12]
    );
}

// ---------------------------------------------------------------------
// criterion 6: alignment recovers noisy recall without breaking clean

#[test]
fn criterion_6_alignment_recovers_typo_recall_within_clean_budget() {
    let fix = fixture();
    assert!(
        fix.build_secs < 540.0,
        "regime fixture took {:.1}s, over the end-to-end budget",
        fix.build_secs
    );
    let cell = |r: &EvalReport, key: RowKey, k: usize| r.cell(key, k).expect("cell");
    let b_typo = cell(&fix.regular, RowKey::Typos, 20);
    let c_typo = cell(&fix.capot, RowKey::Typos, 20);
    let b_clean = cell(&fix.regular, RowKey::None, 20);
    let c_clean = cell(&fix.capot, RowKey::None, 20);
    assert!(
        c_typo.accuracy >= b_typo.accuracy + 0.05,
        "typo recall@20: aligned {:.4} vs unaltered {:.4}, need +0.05",
        c_typo.accuracy,
        b_typo.accuracy
    );
    assert!(
        (c_clean.accuracy - b_clean.accuracy).abs() <= 0.04,
        "clean recall@20 drifted: aligned {:.4} vs unaltered {:.4}",
        c_clean.accuracy,
        b_clean.accuracy
    );
    // the regimes' relative-degradation gap shrinks with depth
    let gap = |k: usize| {
        cell(&fix.capot, RowKey::Typos, k).relative_loss
            - cell(&fix.regular, RowKey::Typos, k).relative_loss
    };
    assert!(gap(20) > 0.0, "aligned tower should degrade less at depth 20, gap {:.4}", gap(20));
    assert!(
        gap(200) < gap(20),
        "degradation gap should narrow with depth: {:.4} at 20 vs {:.4} at 200",
        gap(20),
        gap(200)
    );
    println!(
        "PASS criterion 6: typo recall@20 {:.4} -> {:.4} (+{:.1}pts), clean {:.4} -> {:.4}, \
         degradation gap {:.4} at k=20 narrowing to {:.4} at k=200, fixture {:.1}s",
        b_typo.accuracy,
        c_typo.accuracy,
        (c_typo.accuracy - b_typo.accuracy) * 100.0,
        b_clean.accuracy,
        c_clean.accuracy,
        gap(20),
        gap(200),
        fix.build_secs
    );
}

// ---------------------------------------------------------------------
// criterion 7: alignment on a disjoint query distribution still helps

#[test]
fn criterion_7_external_distribution_alignment_transfers() {
    let fix = fixture();
    assert!(
        fix.external_queries >= 50,
        "only {} external queries survived the disjointness filter",
        fix.external_queries
    );
    let typo = |r: &EvalReport, k: usize| r.cell(RowKey::Typos, k).expect("typos row").accuracy;
    assert!(
        typo(&fix.capot_ext, 20) > typo(&fix.regular, 20),
        "external alignment must still improve typo recall@20: {:.4} vs {:.4}",
        typo(&fix.capot_ext, 20),
        typo(&fix.regular, 20)
    );
    let ordered = DEPTHS
        .iter()
        .filter(|&&k| {
            typo(&fix.regular, k) < typo(&fix.capot_ext, k)
                && typo(&fix.capot_ext, k) <= typo(&fix.capot, k)
        })
        .count();
    assert!(
        ordered >= 2,
        "unaltered < external <= in-distribution held on {ordered}/3 depths: \
         regular {:?}, external {:?}, in-distribution {:?}",
        DEPTHS.map(|k| typo(&fix.regular, k)),
        DEPTHS.map(|k| typo(&fix.capot_ext, k)),
        DEPTHS.map(|k| typo(&fix.capot, k))
    );
    println!(
        "PASS criterion 7: {} disjoint-vocabulary queries; typo recall by depth {:?}: \
         unaltered {:?} < external {:?} <= in-distribution {:?} on {ordered}/3 depths",
        fix.external_queries,
        DEPTHS,
        DEPTHS.map(|k| typo(&fix.regular, k)),
        DEPTHS.map(|k| typo(&fix.capot_ext, k)),
        DEPTHS.map(|k| typo(&fix.capot, k))
    );
}

// ---------------------------------------------------------------------
// criterion 8: the comparison table carries all four regimes

#[test]
fn criterion_8_compare_emits_the_four_regime_table() {
    let fix = fixture();
    let cmp = compare_runs(&[
        fix.regular.clone(),
        fix.pt.clone(),
        fix.da.clone(),
        fix.capot.clone(),
    ])
    .expect("comparison");
    assert_eq!(cmp.columns, ["regular", "pt", "da", "capot"]);
    assert_eq!(cmp.depths, DEPTHS);

    // one row per noise type plus the clean row and both aggregates
    let keys: BTreeSet<RowKey> = cmp.keys.iter().copied().collect();
    assert_eq!(cmp.keys.len(), 13, "rows: {:?}", cmp.keys);
    assert!(keys.contains(&RowKey::None));
    assert!(keys.contains(&RowKey::Typos));
    assert!(keys.contains(&RowKey::Average));
    for t in NoiseType::ALL {
        assert!(keys.contains(&RowKey::Noise(t)), "missing {} row", t.label());
    }
    // every cell filled for every regime at every depth
    for key in &cmp.keys {
        for k in DEPTHS {
            for col in 0..4 {
                let cell = cmp.cell(*key, k, col).unwrap_or_else(|| {
                    panic!("missing {} at k={k} column {col}", key.label())
                });
                assert!((0.0..=1.0).contains(&cell.accuracy));
            }
        }
    }
    let csv = cmp.to_csv();
    let header = csv.lines().next().expect("header");
    assert_eq!(
        header,
        "noise_type,k,regular_accuracy,regular_relative_loss,pt_accuracy,pt_relative_loss,\
         da_accuracy,da_relative_loss,capot_accuracy,capot_relative_loss"
    );
    // the pretrained column is surfaced as data, not held to a direction
    let pt_typo = cmp.cell(RowKey::Typos, 20, 1).expect("pt typos cell");
    assert!(pt_typo.accuracy.is_finite() && pt_typo.relative_loss.is_finite());
    println!(
        "PASS criterion 8: four-regime table with {} rows x {} depths; typo recall@20 \
         regular {:.4}, pt {:.4}, da {:.4}, capot {:.4}",
        cmp.keys.len(),
        cmp.depths.len(),
        cmp.cell(RowKey::Typos, 20, 0).unwrap().accuracy,
        pt_typo.accuracy,
        cmp.cell(RowKey::Typos, 20, 2).unwrap().accuracy,
        cmp.cell(RowKey::Typos, 20, 3).unwrap().accuracy
    );
}
