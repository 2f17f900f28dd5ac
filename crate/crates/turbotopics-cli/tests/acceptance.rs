//! Acceptance checks: each test pins one externally observable guarantee of
//! the toolkit at its stated tolerance and prints a one-line verdict.

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;
use turbotopics::{
    derive_seed, grow_phrases, likelihood_ratio, merge_ngram_masses, permutation_test_max_lr,
    run_benchmark, seeded_rng, AnnotatedToken, BackoffModel, BenchConfig, GrowthConfig,
    HistoryScorer, Method, ModelStructure, PermutationConfig, PhraseStream, Sym, Token,
};

type Rng8 = rand_chacha::ChaCha8Rng;

fn random_stream(rng: &mut Rng8, n_types: usize, len: usize) -> PhraseStream {
    let items: Vec<Sym> = (0..len).map(|_| rng.gen_range(0..n_types as Sym)).collect();
    let anchors = vec![true; items.len()];
    PhraseStream::new(items, anchors, n_types)
}

/// Endows up to `max_endow` observed (history, follower) pairs so counts are
/// always positive and the structure is realizable on the stream.
fn random_structure(rng: &mut Rng8, stream: &PhraseStream, max_endow: usize) -> ModelStructure {
    let mut structure = ModelStructure::unigram();
    let items = stream.items();
    for _ in 0..max_endow {
        if items.len() < 4 {
            break;
        }
        let hist_len = rng.gen_range(1..=2usize);
        let start = rng.gen_range(0..items.len() - hist_len);
        let words = items[start..start + hist_len].to_vec();
        let v = items[start + hist_len];
        if structure.is_endowed(&words, v) {
            continue;
        }
        structure.endow(&words, None, v).expect("fresh anchorless endowment");
    }
    structure
}

// ---------------------------------------------------------------------------

#[test]
fn criterion_1_permutation_leads_small_corpora_and_asymptotics_recover() {
    let config = BenchConfig::<f64>::default();
    assert_eq!(config.sizes, vec![1000, 10_000]);
    assert_eq!(config.thresholds, vec![0.05, 0.01, 0.005]);
    assert_eq!(config.replications, 5);
    assert_eq!(config.permutations, 1000);
    let rows = run_benchmark(&config).expect("benchmark");

    let mean_f = |method: Method, size: usize| -> f64 {
        let cell: Vec<f64> = rows
            .iter()
            .filter(|r| r.method == method && r.size == size)
            .map(|r| r.f)
            .collect();
        assert!(!cell.is_empty());
        cell.iter().sum::<f64>() / cell.len() as f64
    };

    let perm_small = mean_f(Method::BackoffPermutation, 1000);
    let dunning_small = mean_f(Method::DunningLr, 1000);
    let asym_small = mean_f(Method::BackoffLrAsymptotic, 1000);
    assert!(
        perm_small >= dunning_small && perm_small >= asym_small,
        "permutation F {perm_small:.4} should lead dunning {dunning_small:.4} and asymptotic {asym_small:.4} at 1e3 tokens"
    );

    let dunning_large = mean_f(Method::DunningLr, 10_000);
    let asym_large = mean_f(Method::BackoffLrAsymptotic, 10_000);
    assert!(
        dunning_large >= dunning_small,
        "dunning F should not drop with more data: {dunning_small:.4} -> {dunning_large:.4}"
    );
    assert!(
        asym_large >= asym_small,
        "asymptotic backoff F should not drop with more data: {asym_small:.4} -> {asym_large:.4}"
    );

    println!(
        "criterion 1 PASS: mean F at 1e3 perm {perm_small:.4} >= dunning {dunning_small:.4}, backoff-asym {asym_small:.4}; at 1e4 dunning {dunning_large:.4}, backoff-asym {asym_large:.4}"
    );
}

#[test]
fn criterion_2_backoff_conditionals_normalize() {
    let mut checked = 0u32;
    let mut attempts = 0u64;
    while checked < 1000 {
        attempts += 1;
        assert!(attempts < 5000, "too many degenerate structures");
        let mut rng = seeded_rng(derive_seed(0xA2, attempts, 0, 0));
        let n_types = rng.gen_range(2..=10usize);
        let len = rng.gen_range(20..=120usize);
        let stream = random_stream(&mut rng, n_types, len);
        let n_endow = rng.gen_range(0..=3usize);
        let structure = random_structure(&mut rng, &stream, n_endow);
        let Ok(model) = BackoffModel::<f64>::estimate(&structure, &stream) else {
            continue;
        };
        for entry in model.structure().hists() {
            let total: f64 =
                (0..n_types as Sym).map(|v| model.conditional(&entry.words, v)).sum();
            assert!(
                (total - 1.0).abs() <= 1e-10,
                "conditional rows must normalize: history {:?} sums to {total}",
                entry.words
            );
        }
        checked += 1;
    }
    println!("criterion 2 PASS: {checked} random sparse models normalized within 1e-10 ({attempts} draws)");
}

#[test]
fn criterion_3_incremental_lr_equals_model_refit() {
    let mut streams_checked = 0u32;
    let mut pairs_checked = 0u64;
    let mut attempts = 0u64;
    while streams_checked < 100 {
        attempts += 1;
        assert!(attempts < 1000, "too many degenerate streams");
        let mut rng = seeded_rng(derive_seed(0xA3, attempts, 0, 0));
        let n_types = rng.gen_range(3..=15usize);
        let len = rng.gen_range(50..=500usize);
        let stream = random_stream(&mut rng, n_types, len);
        let n_endow = rng.gen_range(0..=2usize);
        let structure = random_structure(&mut rng, &stream, n_endow);
        let Ok(model) = BackoffModel::<f64>::estimate(&structure, &stream) else {
            continue;
        };

        let items = stream.items();
        let hist_len = rng.gen_range(1..=2usize);
        let start = rng.gen_range(0..items.len() - hist_len);
        let history = items[start..start + hist_len].to_vec();
        let Ok(scorer) = HistoryScorer::new(&model, &stream, &history, None) else {
            continue;
        };
        let candidates: Vec<Sym> = scorer.candidates().map(|(v, _)| v).collect();

        let mut stream_pairs = 0u64;
        for v in candidates {
            let Ok(exact) = likelihood_ratio(&model, &history, None, v, &stream) else {
                continue;
            };
            let incremental = scorer.score(v).expect("observed candidate must be scorable");
            assert!(
                (incremental - exact.lr).abs() <= 1e-8,
                "incremental {incremental} vs refit {} for history {history:?} word {v}",
                exact.lr
            );
            stream_pairs += 1;
        }
        if stream_pairs > 0 {
            streams_checked += 1;
            pairs_checked += stream_pairs;
        }
    }
    println!(
        "criterion 3 PASS: incremental LR matched the two-model refit on {streams_checked} streams / {pairs_checked} expansions within 1e-8"
    );
}

fn golden_max(mut lo: f64, mut hi: f64, f: impl Fn(f64) -> f64) -> f64 {
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - phi * (hi - lo);
    let mut d = lo + phi * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..200 {
        if fc > fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - phi * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + phi * (hi - lo);
            fd = f(d);
        }
    }
    (lo + hi) / 2.0
}

/// Derivative-free concave maximization on the probability simplex by
/// pairwise mass transfers with a shrinking step.
fn simplex_max(k: usize, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut q = vec![1.0 / k as f64; k];
    let mut best = f(&q);
    let mut step = 0.25;
    while step > 1e-10 {
        let mut improved = false;
        for i in 0..k {
            for j in 0..k {
                if i == j || q[j] <= step {
                    continue;
                }
                let mut trial = q.clone();
                trial[i] += step;
                trial[j] -= step;
                let value = f(&trial);
                if value > best {
                    q = trial;
                    best = value;
                    improved = true;
                }
            }
        }
        if !improved {
            step /= 2.0;
        }
    }
    q
}

#[test]
fn criterion_4_count_estimates_maximize_the_likelihood() {
    let mut checked = 0u32;
    let mut attempts = 0u64;
    while checked < 50 {
        attempts += 1;
        assert!(attempts < 500, "too many degenerate draws");
        let mut rng = seeded_rng(derive_seed(0xA4, attempts, 0, 0));
        let k = rng.gen_range(4..=8usize);

        // Every type occurs standalone at least once, `u w` is injected as a
        // strong pair, and one `u <other>` occurrence keeps the endowed
        // parameter interior.
        let mut items: Vec<Sym> = (0..k as Sym).collect();
        for _ in 0..rng.gen_range(15..=40usize) {
            items.push(rng.gen_range(0..k as Sym));
        }
        let u = rng.gen_range(0..k as Sym);
        let w = (u + 1 + rng.gen_range(0..k as Sym - 1)) % k as Sym;
        for _ in 0..rng.gen_range(3..=8usize) {
            let at = rng.gen_range(0..=items.len());
            items.splice(at..at, [u, w]);
        }
        let other = (w + 1 + rng.gen_range(0..k as Sym - 1)) % k as Sym;
        items.extend([u, if other == u { w } else { other }]);
        if other == u {
            continue;
        }

        let anchors = vec![true; items.len()];
        let stream = PhraseStream::new(items.clone(), anchors, k);
        let mut structure = ModelStructure::unigram();
        structure.endow(&[u], None, w).expect("endow");
        let Ok(model) = BackoffModel::<f64>::estimate(&structure, &stream) else {
            continue;
        };
        let id = model.structure().find(&[u]).expect("registered");
        let pi_hat = model.endowed_cond(id)[&w];
        let q_hat: Vec<f64> = (0..k as Sym).map(|v| model.unigram_prob(v)).collect();

        // Independent counts for the likelihood objective.
        let mut n_u = 0u64;
        let mut n_uw = 0u64;
        let mut d = vec![0u64; k];
        for (i, &word) in items.iter().enumerate() {
            let after_u = i > 0 && items[i - 1] == u;
            if after_u {
                n_u += 1;
                if word == w {
                    n_uw += 1;
                }
            }
            if !(after_u && word == w) {
                d[word as usize] += 1;
            }
        }
        assert!(n_uw > 0 && n_u > n_uw, "pair must be present and non-exhaustive");

        // Stream log likelihood as a function of the endowed parameter with
        // the back-off level fixed, and the back-off level's own likelihood.
        let q_w = q_hat[w as usize];
        let full_ll = |pi: f64| {
            n_uw as f64 * pi.ln()
                + (n_u - n_uw) as f64 * ((1.0 - pi).ln() - (1.0 - q_w).ln())
                + d.iter()
                    .zip(&q_hat)
                    .map(|(&dv, &qv)| if dv == 0 { 0.0 } else { dv as f64 * qv.ln() })
                    .sum::<f64>()
        };
        let pi_star = golden_max(1e-9, 1.0 - 1e-9, full_ll);
        assert!(
            (pi_hat - pi_star).abs() <= 1e-4,
            "endowed estimate {pi_hat} vs numeric maximizer {pi_star}"
        );

        let backoff_ll = |q: &[f64]| {
            d.iter()
                .zip(q)
                .map(|(&dv, &qv)| if dv == 0 { 0.0 } else { dv as f64 * qv.ln() })
                .sum::<f64>()
        };
        let q_star = simplex_max(k, backoff_ll);
        for (v, (&hat, &star)) in q_hat.iter().zip(&q_star).enumerate() {
            assert!(
                (hat - star).abs() <= 1e-4,
                "unigram estimate for type {v}: {hat} vs numeric maximizer {star}"
            );
        }
        checked += 1;
    }
    println!(
        "criterion 4 PASS: closed-form estimates matched numeric maximization on {checked} endowed-bigram streams within 1e-4"
    );
}

#[test]
fn criterion_5_null_p_values_are_uniform() {
    const RUNS: usize = 200;
    const N_TYPES: usize = 12;
    const LEN: usize = 300;

    let weights: Vec<f64> = (0..N_TYPES).map(|v| 1.0 / (v + 1) as f64).collect();
    let total: f64 = weights.iter().sum();
    let mut cum = Vec::with_capacity(N_TYPES);
    let mut acc = 0.0;
    for w in &weights {
        acc += w / total;
        cum.push(acc);
    }

    let mut p_values: Vec<f64> = (0..RUNS as u64)
        .into_par_iter()
        .map(|run| {
            let mut rng = seeded_rng(derive_seed(0xA5, run, 0, 0));
            let items: Vec<Sym> = (0..LEN)
                .map(|_| {
                    let x: f64 = rng.gen();
                    cum.partition_point(|&c| c < x) as Sym
                })
                .collect();
            let anchors = vec![true; items.len()];
            let stream = PhraseStream::new(items.clone(), anchors, N_TYPES);

            // The tested history is picked from the count profile, which is
            // permutation invariant, so the null stays exchangeable.
            let mut counts = vec![0u32; N_TYPES];
            for &w in &items {
                counts[w as usize] += 1;
            }
            let h = counts
                .iter()
                .enumerate()
                .max_by_key(|&(v, &c)| (c, std::cmp::Reverse(v)))
                .map(|(v, _)| v as Sym)
                .expect("nonempty");

            let model = BackoffModel::<f64>::estimate(&ModelStructure::unigram(), &stream)
                .expect("unigram estimate");
            let config = PermutationConfig::<f64> {
                permutations: 199,
                p_threshold: 0.01,
                min_count: 2,
                count_ties: false,
                seed: derive_seed(0xA5A5, run, 1, 0),
            };
            let test = permutation_test_max_lr(&model, &[h], None, &stream, &config)
                .expect("test runs")
                .expect("a frequent history always has candidates");
            test.verdict.p_value
        })
        .collect();

    p_values.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let n = p_values.len() as f64;
    let mut d_stat = 0.0f64;
    for (i, &p) in p_values.iter().enumerate() {
        let upper = (i + 1) as f64 / n - p;
        let lower = p - i as f64 / n;
        d_stat = d_stat.max(upper).max(lower);
    }
    let d_crit = 1.3581 / (n.sqrt() + 0.12 + 0.11 / n.sqrt());
    assert!(
        d_stat <= d_crit,
        "null p-values must look uniform: KS D {d_stat:.4} > critical {d_crit:.4}"
    );
    println!("criterion 5 PASS: KS D {d_stat:.4} <= {d_crit:.4} over {RUNS} null p-values");
}

#[test]
fn criterion_6_planted_trigram_is_grown_recursively() {
    const SEEDS: u64 = 100;
    const FILLERS: usize = 1000;
    const TRIGRAMS: usize = 33;

    let pool: Vec<String> = (0..25).map(|i| format!("f{i:02}")).collect();
    let outcomes: Vec<(bool, u32, u32)> = (0..SEEDS)
        .into_par_iter()
        .map(|run| {
            let mut rng = seeded_rng(derive_seed(0xA6, run, 0, 0));
            let mut tokens: Vec<&str> =
                (0..FILLERS).map(|_| pool[rng.gen_range(0..pool.len())].as_str()).collect();
            let mut slots: Vec<usize> =
                (0..TRIGRAMS).map(|_| rng.gen_range(0..=tokens.len())).collect();
            slots.sort_unstable_by(|a, b| b.cmp(a));
            for at in slots {
                tokens.splice(at..at, ["pa", "pb", "pc"]);
            }

            let annotated: Vec<AnnotatedToken> = tokens
                .iter()
                .enumerate()
                .map(|(position, &surface)| AnnotatedToken {
                    token: Token { surface: surface.to_owned(), doc: 0, position },
                    topic: Some(0),
                })
                .collect();

            let config = GrowthConfig::<f64> {
                p_threshold: 0.01,
                permutations: 100,
                max_phrase_len: 5,
                min_count: 2,
                top_seed_words: 30,
                seed: derive_seed(0xA6A6, run, 1, 0),
            };
            let growth = grow_phrases(&annotated, 0, &config).expect("growth");

            let lex = &growth.lexicon;
            let planted = ["pa", "pb", "pc"];
            let trigram_found = growth.phrases.iter().any(|phrase| {
                phrase.chain.iter().any(|step| {
                    step.phrase.len() == 3
                        && step.phrase.iter().zip(&planted).all(|(&s, &w)| lex.resolve(s) == w)
                })
            });
            // Filler seeds face only null hypotheses; a calibrated test at
            // p < 0.01 falsely accepts about 1% of them, so the clean rate
            // is measured per seed-growth attempt.
            let mut filler_attempts = 0u32;
            let mut clean_attempts = 0u32;
            for phrase in &growth.phrases {
                let seed_word = lex.resolve(phrase.words[phrase.seed_index]);
                if planted.contains(&seed_word) {
                    continue;
                }
                filler_attempts += 1;
                let dirty = phrase.chain.iter().any(|step| {
                    step.phrase.iter().all(|&s| !planted.contains(&lex.resolve(s)))
                });
                if !dirty {
                    clean_attempts += 1;
                }
            }
            (trigram_found, filler_attempts, clean_attempts)
        })
        .collect();

    let trigram_hits = outcomes.iter().filter(|(tri, _, _)| *tri).count();
    let attempts: u32 = outcomes.iter().map(|(_, a, _)| a).sum();
    let clean: u32 = outcomes.iter().map(|(_, _, c)| c).sum();
    assert!(
        trigram_hits >= 95,
        "trigram must be grown bigram-then-trigram in >=95/100 seeds, got {trigram_hits}"
    );
    assert!(
        u64::from(clean) * 100 >= u64::from(attempts) * 95,
        "filler seeds must stay clean in >=95% of growth attempts, got {clean}/{attempts}"
    );
    println!(
        "criterion 6 PASS: trigram recovered in {trigram_hits}/100 seeds, {clean}/{attempts} filler seed growths accepted no filler phrase"
    );
}

// ---------------------------------------------------------------------------

fn bin(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_turbotopics"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("spawn turbotopics")
}

fn run_ok(dir: &Path, args: &[&str]) {
    let out = bin(dir, args);
    assert!(
        out.status.success(),
        "command {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

struct PlantedCorpus {
    text: String,
    /// One entry per planted phrase: (true topic, surface words).
    phrases: Vec<(usize, Vec<String>)>,
}

fn planted_lda_corpus(seed: u64) -> PlantedCorpus {
    const N_TOPICS: usize = 4;
    const N_DOCS: usize = 500;
    const SLOTS: usize = 60;
    const FILLERS_PER_TOPIC: usize = 40;

    let mut rng = seeded_rng(seed);
    let fillers: Vec<Vec<String>> = (0..N_TOPICS)
        .map(|t| (0..FILLERS_PER_TOPIC).map(|j| format!("t{t}w{j}")).collect())
        .collect();
    let phrases: Vec<(usize, Vec<String>)> = (0..N_TOPICS)
        .flat_map(|t| {
            [
                (t, vec![format!("p{t}a"), format!("p{t}b")]),
                (t, vec![format!("p{t}c"), format!("p{t}d")]),
                (t, vec![format!("p{t}e"), format!("p{t}f"), format!("p{t}g")]),
            ]
        })
        .collect();

    let weights: Vec<f64> = (0..FILLERS_PER_TOPIC).map(|j| 1.0 / (j + 1) as f64).collect();
    let total: f64 = weights.iter().sum();
    let mut cum = Vec::with_capacity(FILLERS_PER_TOPIC);
    let mut acc = 0.0;
    for w in &weights {
        acc += w / total;
        cum.push(acc);
    }

    let mut text = String::new();
    for d in 0..N_DOCS {
        let dominant = d % N_TOPICS;
        let mut words: Vec<&str> = Vec::with_capacity(SLOTS * 2);
        for _ in 0..SLOTS {
            let t = if rng.gen::<f64>() < 0.8 { dominant } else { rng.gen_range(0..N_TOPICS) };
            if rng.gen::<f64>() < 0.25 {
                let (_, phrase) = &phrases[t * 3 + rng.gen_range(0..3)];
                words.extend(phrase.iter().map(String::as_str));
            } else {
                let x: f64 = rng.gen();
                let j = cum.partition_point(|&c| c < x);
                words.push(&fillers[t][j]);
            }
        }
        text.push_str(&words.join(" "));
        text.push('\n');
    }
    PlantedCorpus { text, phrases }
}

#[test]
fn criterion_7_pipeline_recovers_planted_phrases() {
    let dir = tempfile::tempdir().expect("tempdir");
    let corpus = planted_lda_corpus(0xA7);
    fs::write(dir.path().join("corpus.txt"), &corpus.text).expect("write corpus");

    let started = Instant::now();
    run_ok(
        dir.path(),
        &[
            "lda-fit",
            "--corpus",
            "corpus.txt",
            "--out",
            "ann.jsonl",
            "--topics",
            "4",
            "--alpha",
            "0.5",
            "--sweeps",
            "300",
            "--burn-in",
            "150",
            "--seed",
            "99",
        ],
    );
    run_ok(
        dir.path(),
        &[
            "grow",
            "--annotation",
            "ann.jsonl",
            "--out",
            "grow.json",
            "--topics",
            "4",
            "--permutations",
            "100",
            "--p-threshold",
            "0.01",
            "--seed",
            "7",
        ],
    );
    let elapsed = started.elapsed();
    assert!(elapsed.as_secs() < 600, "pipeline took {elapsed:?}, budget is 10 minutes");

    // Majority fitted topic per planted phrase, voted by its first word.
    let mut votes: HashMap<String, [u32; 4]> = HashMap::new();
    let annotation = fs::read_to_string(dir.path().join("ann.jsonl")).expect("read");
    for line in annotation.lines().filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let token: serde_json::Value = serde_json::from_str(line).expect("token line");
        let word = token["w"].as_str().expect("word");
        if let Some(z) = token["z"].as_u64() {
            votes.entry(word.to_owned()).or_default()[z as usize] += 1;
        }
    }

    let grow: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("grow.json")).expect("read"))
            .expect("grow artifact");
    let reports = grow["reports"].as_array().expect("reports");

    let mut recovered = 0usize;
    let mut missing: Vec<String> = Vec::new();
    for (_, phrase) in &corpus.phrases {
        let tally = votes.get(&phrase[0]).copied().unwrap_or_default();
        let fitted = (0..4).max_by_key(|&t| tally[t]).expect("four topics");
        let needle = format!(" {} ", phrase.join(" "));
        let hit = reports[fitted]["entries"].as_array().expect("entries").iter().any(|e| {
            let ngram = e["ngram"].as_str().expect("ngram");
            format!(" {ngram} ").contains(&needle)
        });
        if hit {
            recovered += 1;
        } else {
            missing.push(phrase.join(" "));
        }
    }
    let total = corpus.phrases.len();
    assert!(
        recovered * 10 >= total * 8,
        "recovered {recovered}/{total} planted phrases (missing: {missing:?})"
    );
    println!(
        "criterion 7 PASS: {recovered}/{total} planted phrases recovered in {:.1}s",
        elapsed.as_secs_f64()
    );
}

#[test]
fn criterion_8_merge_conserves_and_splits_mass() {
    // Nested phrase weaker than its container: its mass folds upward.
    let nested = merge_ngram_masses::<f64>(
        &[(vec![0, 1, 2], 10), (vec![1, 2], 2), (vec![2], 1)],
        100,
    )
    .expect("merge");
    assert_eq!(nested.len(), 1);
    assert_eq!(nested[0].words, vec![0, 1, 2]);
    assert!((nested[0].mass - 0.13).abs() <= 1e-12, "folded mass {}", nested[0].mass);

    // Shorter phrase stronger than its container: both stay listed.
    let split = merge_ngram_masses::<f64>(&[(vec![5], 50), (vec![4, 5], 20)], 100).expect("merge");
    assert_eq!(split.len(), 2);
    assert!((split[0].mass - 0.50).abs() <= 1e-12);
    assert!((split[1].mass - 0.20).abs() <= 1e-12);

    // Randomized conservation sweep.
    let mut cases = 0u32;
    for run in 0..300u64 {
        let mut rng = seeded_rng(derive_seed(0xA8, run, 0, 0));
        let mut ngrams: Vec<(Vec<Sym>, u32)> = Vec::new();
        for _ in 0..rng.gen_range(1..=8usize) {
            let len = rng.gen_range(1..=4usize);
            let words: Vec<Sym> = (0..len).map(|_| rng.gen_range(0..4u32)).collect();
            if ngrams.iter().all(|(w, _)| *w != words) {
                ngrams.push((words, rng.gen_range(0..=40u32)));
            }
        }
        let total = 1000u64;
        let merged = merge_ngram_masses::<f64>(&ngrams, total).expect("merge");
        let input_mass: f64 = ngrams.iter().map(|(_, c)| *c as f64 / total as f64).sum();
        let output_mass: f64 = merged.iter().map(|m| m.mass).sum();
        assert!(
            (input_mass - output_mass).abs() <= 1e-9,
            "mass must be conserved: in {input_mass} out {output_mass}"
        );
        for m in &merged {
            assert!(ngrams.iter().any(|(w, _)| *w == m.words), "no invented n-grams");
        }
        cases += 1;
    }
    println!(
        "criterion 8 PASS: fold and keep cases exact, mass conserved within 1e-9 over {cases} random merges"
    );
}

#[test]
fn criterion_9_artifacts_rerun_byte_identical() {
    let dir = tempfile::tempdir().expect("tempdir");

    run_ok(dir.path(), &["simulate", "--out", "sim.json", "--n-tokens", "2000", "--seed", "41"]);
    run_ok(
        dir.path(),
        &[
            "bench",
            "--out",
            "grid.csv",
            "--sizes",
            "300",
            "--thresholds",
            "0.05",
            "--replications",
            "2",
            "--permutations",
            "40",
            "--seed",
            "17",
        ],
    );
    let mut corpus = String::new();
    for _ in 0..30 {
        corpus.push_str("the supreme court ruled on the case today\n");
        corpus.push_str("the stock market fell sharply on monday\n");
    }
    fs::write(dir.path().join("corpus.txt"), corpus).expect("write");
    run_ok(
        dir.path(),
        &[
            "lda-fit", "--corpus", "corpus.txt", "--out", "ann.jsonl", "--model-out", "model.json",
            "--topics", "2", "--sweeps", "50", "--burn-in", "25", "--seed", "5",
        ],
    );
    run_ok(
        dir.path(),
        &["grow", "--annotation", "ann.jsonl", "--out", "grow.json", "--permutations", "30", "--seed", "3"],
    );

    let artifacts =
        ["sim.json", "grid.csv", "grid.summary.csv", "ann.jsonl", "model.json", "grow.json"];
    let before: Vec<Vec<u8>> =
        artifacts.iter().map(|a| fs::read(dir.path().join(a)).expect("read")).collect();

    for rerun in ["sim.json", "grid.csv", "ann.jsonl", "grow.json"] {
        run_ok(dir.path(), &["rerun", "--artifact", rerun]);
    }

    for (artifact, expected) in artifacts.iter().zip(&before) {
        let after = fs::read(dir.path().join(artifact)).expect("read");
        assert_eq!(&after, expected, "{artifact} must be byte-identical after rerun");
    }
    println!("criterion 9 PASS: {} artifacts byte-identical after manifest rerun", artifacts.len());
}
