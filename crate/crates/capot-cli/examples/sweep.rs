//! Scratch calibration sweep for the acceptance fixture, not shipped.
//! Prints baseline clean/typo recall across corpus and model shapes, and
//! with "align" as the first argument also runs the alignment phases.

use std::collections::{BTreeMap, BTreeSet};

use capot_core::corpus::generate_synthetic_corpus;
use capot_core::encoder::{featurize, EncoderParams, Features, MAX_TOKENS};
use capot_core::index::{build_index, search_exact, DocumentIndex, SearchResult};
use capot_core::loss::LossWeights;
use capot_core::metrics::retrieval_accuracy;
use capot_core::noise::{noise_dataset, NoiseConfig, NoiseType, NoisedQuery, Query};
use capot_core::resources::Resources;
use capot_core::rewrite::StubRewriter;
use capot_core::train::{align_capot, sample_alignment_triples, train_baseline, Regime, TrainConfig};

fn feats(text: &str, buckets: usize) -> Features {
    featurize(text, MAX_TOKENS, buckets).unwrap()
}

fn run_set(
    tower: &EncoderParams,
    index: &DocumentIndex,
    set: &[(String, Features)],
) -> BTreeMap<String, SearchResult> {
    set.iter()
        .map(|(qid, f)| {
            let emb = tower.embed(f).unwrap();
            (qid.clone(), search_exact(index, &emb, 200).unwrap())
        })
        .collect()
}

fn typo_noise(seed: u64) -> NoiseConfig {
    NoiseConfig {
        enabled: NoiseType::TYPOS.to_vec(),
        master_seed: seed,
        ..NoiseConfig::default()
    }
}

fn multi_draw(queries: &[Query], base_seed: u64, draws: u64, res: &Resources) -> Vec<NoisedQuery> {
    let mut out = Vec::new();
    for d in 0..draws {
        let mut stub = StubRewriter::new(res);
        out.extend(noise_dataset(queries, &typo_noise(base_seed + 1000 * d), res, &mut stub).unwrap());
    }
    out
}

#[allow(clippy::too_many_arguments)]
fn align_mode(args: &[String]) {
    // align vocab dim buckets epochs align_epochs align_lr tau_anchor draws batch tau_ranking eps_anchor
    let v: Vec<f64> = args.iter().map(|a| a.parse().unwrap()).collect();
    let (vocab, dim, buckets, epochs) = (v[0] as usize, v[1] as usize, v[2] as usize, v[3] as usize);
    let (align_epochs, align_lr, tau_anchor, draws) = (v[4] as usize, v[5], v[6], v[7] as u64);
    let batch = v.get(8).map(|x| *x as usize).unwrap_or(32);
    let tau_ranking = v.get(9).copied().unwrap_or(1.0);
    let eps_anchor = v.get(10).copied().unwrap_or(0.0);
    let eps_ranking = v.get(11).copied().unwrap_or(0.1);
    let res = Resources::bundled();
    let t0 = std::time::Instant::now();

    let (queries, passages, qrels) = generate_synthetic_corpus(500, vocab, 7).unwrap();
    let tcfg = TrainConfig {
        regime: Regime::Baseline,
        batch_size: batch,
        learning_rate: 0.5,
        epochs,
        negatives_per_positive: 1,
        seed: 7,
        dim,
        num_buckets: buckets,
        ..TrainConfig::default()
    };
    let baseline = train_baseline(&queries, &passages, &qrels, &tcfg).unwrap();
    let index = build_index(&baseline.model.doc, &passages).unwrap();

    let acfg = TrainConfig {
        regime: Regime::Capot,
        epochs: align_epochs,
        learning_rate: align_lr,
        seed: 1,
        loss_weights: LossWeights {
            tau_anchor,
            tau_ranking,
            eps_anchor,
            eps_ranking,
            ..LossWeights::default()
        },
        ..tcfg.clone()
    };
    let noised_train = multi_draw(&queries, 1, draws, &res);
    let triples = sample_alignment_triples(&queries, &noised_train, 1).unwrap();
    let aligned = align_capot(&baseline.model.query, &triples, &acfg).unwrap();

    let (ext_raw, _, _) = generate_synthetic_corpus(500, vocab, 13).unwrap();
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
    let ext_epochs = v.get(12).map(|x| *x as usize).unwrap_or(align_epochs);
    let ext_lr = v.get(13).copied().unwrap_or(align_lr);
    let ext_draws = v.get(14).map(|x| *x as u64).unwrap_or(draws);
    let ext_noised = multi_draw(&ext_queries, 13, ext_draws, &res);
    let ext_triples = sample_alignment_triples(&ext_queries, &ext_noised, 13).unwrap();
    let ext_acfg =
        TrainConfig { seed: 13, epochs: ext_epochs, learning_rate: ext_lr, ..acfg.clone() };
    let ext_aligned = align_capot(&baseline.model.query, &ext_triples, &ext_acfg).unwrap();

    let clean: Vec<(String, Features)> =
        queries.iter().map(|q| (q.id.clone(), feats(&q.text, buckets))).collect();
    let mut stub = StubRewriter::new(&res);
    let noised_eval = noise_dataset(&queries, &typo_noise(2), &res, &mut stub).unwrap();
    let mut by_type: BTreeMap<NoiseType, Vec<(String, Features)>> = BTreeMap::new();
    for nq in &noised_eval {
        by_type
            .entry(nq.noise_type)
            .or_default()
            .push((nq.anchor_id.clone(), feats(&nq.text, buckets)));
    }

    let eval = |tower: &EncoderParams| -> (f64, f64, f64, f64) {
        let acc = |set: &BTreeMap<String, SearchResult>, k: usize| {
            retrieval_accuracy(set, &qrels, k).unwrap()
        };
        let clean_run = run_set(tower, &index, &clean);
        let (mut t20, mut t200) = (0.0, 0.0);
        for set in by_type.values() {
            let run = run_set(tower, &index, set);
            t20 += acc(&run, 20);
            t200 += acc(&run, 200);
        }
        let n = by_type.len() as f64;
        (acc(&clean_run, 20), t20 / n, acc(&clean_run, 200), t200 / n)
    };
    let b = eval(&baseline.model.query);
    let c = eval(&aligned.params);
    let e = eval(&ext_aligned.params);

    // how close noisy variants sit to their roots, seen vs held-out noise
    let root_feats: BTreeMap<&str, &Features> =
        clean.iter().map(|(qid, f)| (qid.as_str(), f)).collect();
    let cos_stats = |tower: &EncoderParams, noised: &[NoisedQuery]| -> (f64, f64) {
        let mut all: Vec<f64> = noised
            .iter()
            .map(|nq| {
                let e_n = tower.embed(&feats(&nq.text, buckets)).unwrap();
                let e_r = tower.embed(root_feats[nq.anchor_id.as_str()]).unwrap();
                e_n.iter().zip(&e_r).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect();
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mean = all.iter().sum::<f64>() / all.len() as f64;
        (mean, all[all.len() / 10])
    };
    let seen = &noised_train[..noised_eval.len().min(noised_train.len())];
    let (bs_m, bs_p) = cos_stats(&baseline.model.query, seen);
    let (be_m, be_p) = cos_stats(&baseline.model.query, &noised_eval);
    let (cs_m, cs_p) = cos_stats(&aligned.params, seen);
    let (ce_m, ce_p) = cos_stats(&aligned.params, &noised_eval);
    println!(
        "  cos(noisy,root) baseline: seen {bs_m:.4}/p10 {bs_p:.4} eval {be_m:.4}/p10 {be_p:.4}"
    );
    println!(
        "  cos(noisy,root) aligned:  seen {cs_m:.4}/p10 {cs_p:.4} eval {ce_m:.4}/p10 {ce_p:.4}"
    );
    println!(
        "v{vocab} d{dim} b{buckets} e{epochs} ae{align_epochs} alr{align_lr} ta{tau_anchor} k{draws} tr{tau_ranking} er{eps_ranking} ({} ext q, {:.1}s)",
        ext_queries.len(),
        t0.elapsed().as_secs_f64()
    );
    println!("  baseline: clean@20 {:.4} typo@20 {:.4} | clean@200 {:.4} typo@200 {:.4}", b.0, b.1, b.2, b.3);
    println!(
        "  capot:    clean@20 {:.4} typo@20 {:.4} | clean@200 {:.4} typo@200 {:.4}  (typo {:+.2}pts, clean {:+.2}pts)",
        c.0, c.1, c.2, c.3,
        (c.1 - b.1) * 100.0,
        (c.0 - b.0) * 100.0
    );
    println!(
        "  ext:      clean@20 {:.4} typo@20 {:.4} | clean@200 {:.4} typo@200 {:.4}  (typo {:+.2}pts vs baseline)",
        e.0, e.1, e.2, e.3,
        (e.1 - b.1) * 100.0
    );
}

fn main() {
    let res = Resources::bundled();
    let mut args: Vec<String> = std::env::args().skip(1).collect();
    if args.first().map(String::as_str) == Some("align") {
        args.remove(0);
        for chunk in args.chunks(12) {
            align_mode(chunk);
        }
        return;
    }
    let grid: Vec<(usize, usize, usize, usize, usize)> = if args.is_empty() {
        let mut g = Vec::new();
        for &vocab in &[80usize, 100, 120, 160] {
            for &epochs in &[8usize, 25] {
                g.push((vocab, 16, 512, epochs, 32));
            }
        }
        g
    } else {
        // vocab dim buckets epochs batch [vocab dim buckets epochs batch ...]
        args.chunks(5)
            .map(|c| {
                (
                    c[0].parse().unwrap(),
                    c[1].parse().unwrap(),
                    c[2].parse().unwrap(),
                    c[3].parse().unwrap(),
                    c[4].parse().unwrap(),
                )
            })
            .collect()
    };

    for (vocab, dim, buckets, epochs, batch) in grid {
        let t0 = std::time::Instant::now();
        let (queries, passages, qrels) = generate_synthetic_corpus(500, vocab, 7).unwrap();
        let cfg = TrainConfig {
            regime: Regime::Baseline,
            batch_size: batch,
            learning_rate: 0.5,
            epochs,
            negatives_per_positive: 1,
            seed: 7,
            dim,
            num_buckets: buckets,
            ..TrainConfig::default()
        };
        let out = train_baseline(&queries, &passages, &qrels, &cfg).unwrap();
        let index = build_index(&out.model.doc, &passages).unwrap();

        let clean: Vec<(String, Features)> =
            queries.iter().map(|q| (q.id.clone(), feats(&q.text, buckets))).collect();
        let typo_cfg = NoiseConfig {
            enabled: NoiseType::TYPOS.to_vec(),
            master_seed: 2,
            ..NoiseConfig::default()
        };
        let mut stub = StubRewriter::new(&res);
        let noised = noise_dataset(&queries, &typo_cfg, &res, &mut stub).unwrap();
        let mut by_type: BTreeMap<NoiseType, Vec<(String, Features)>> = BTreeMap::new();
        for nq in &noised {
            by_type
                .entry(nq.noise_type)
                .or_default()
                .push((nq.anchor_id.clone(), feats(&nq.text, buckets)));
        }

        let acc = |set: &BTreeMap<String, SearchResult>, k: usize| {
            retrieval_accuracy(set, &qrels, k).unwrap()
        };
        let clean_run = run_set(&out.model.query, &index, &clean);
        let c20 = acc(&clean_run, 20);
        let c200 = acc(&clean_run, 200);
        let mut t20 = 0.0;
        let mut t200 = 0.0;
        for set in by_type.values() {
            let run = run_set(&out.model.query, &index, set);
            t20 += acc(&run, 20);
            t200 += acc(&run, 200);
        }
        t20 /= by_type.len() as f64;
        t200 /= by_type.len() as f64;
        println!(
            "vocab {vocab:>4} dim {dim:>3} buckets {buckets:>5} epochs {epochs:>3} batch {batch:>3}: \
             clean@20 {c20:.4} typo@20 {t20:.4} gap {:.2}pts | clean@200 {c200:.4} \
             typo@200 {t200:.4} | {:.1}s",
            (c20 - t20) * 100.0,
            t0.elapsed().as_secs_f64()
        );
    }
}

// Queries are unused directly but keep the import graph honest.
#[allow(dead_code)]
fn _t(q: &Query) -> &str {
    &q.text
}
