//! Expansion significance: the recursive permutation test on the back-off
//! model's maximum likelihood ratio, plus the baseline collocation tests it
//! is benchmarked against (Pearson chi-square, the Dunning likelihood-ratio
//! test, and a multinomial permutation test on raw shuffles).

use rand::seq::SliceRandom;
use rayon::prelude::*;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::backoff::{BackoffModel, ExpansionScore};
use crate::error::{Error, Result};
use crate::num::Scalar;
use crate::rng::{derive_seed, seeded_rng};
use crate::scorer::HistoryScorer;
use crate::stream::{PhraseStream, Sym, SENTINEL};

/// Context tag for permutation-replicate sub-seeds.
const PERMUTE_TAG: u64 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PermutationConfig<F> {
    pub permutations: u32,
    pub p_threshold: F,
    /// Candidates need at least this many history-follower occurrences, in
    /// the observed stream and in every permuted replicate alike.
    pub min_count: u32,
    /// Count permuted scores equal to the observed one as exceedances (the
    /// conservative convention); by default only strictly greater ones count.
    pub count_ties: bool,
    pub seed: u64,
}

impl<F: Scalar> Default for PermutationConfig<F> {
    fn default() -> Self {
        Self {
            permutations: 1000,
            p_threshold: F::from_f64(0.01).expect("constant"),
            min_count: 2,
            count_ties: false,
            seed: 0,
        }
    }
}

impl<F: Scalar> PermutationConfig<F> {
    pub fn validate(&self) -> Result<()> {
        if self.permutations == 0 {
            return Err(Error::InvalidArgument("permutations must be at least 1".into()));
        }
        let p = self.p_threshold.to_f64().unwrap_or(f64::NAN);
        if !(0.0 < p && p < 1.0) {
            return Err(Error::InvalidArgument(format!("p threshold {p} outside (0, 1)")));
        }
        if self.min_count == 0 {
            return Err(Error::InvalidArgument("min count must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestVerdict<F> {
    pub statistic: F,
    pub p_value: F,
    pub significant: bool,
}

/// One tested candidate expansion: the argmax continuation, its score, and
/// the permutation verdict on it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionTest<F> {
    pub score: ExpansionScore<F>,
    pub verdict: TestVerdict<F>,
    pub exceed: u32,
    pub permutations: u32,
}

/// Joint occurrence table for a word pair over in-document adjacent
/// positions: rows condition on the first word, columns on the second.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable {
    pub n11: u64,
    pub n12: u64,
    pub n21: u64,
    pub n22: u64,
}

impl ContingencyTable {
    pub fn new(n11: u64, n12: u64, n21: u64, n22: u64) -> Self {
        Self { n11, n12, n21, n22 }
    }

    pub fn from_stream(stream: &PhraseStream, u: Sym, v: Sym) -> Self {
        let mut n11 = 0u64;
        let mut first_u = 0u64;
        let mut second_v = 0u64;
        let mut total = 0u64;
        for w in stream.items().windows(2) {
            if w[0] == SENTINEL || w[1] == SENTINEL {
                continue;
            }
            total += 1;
            if w[0] == u {
                first_u += 1;
            }
            if w[1] == v {
                second_v += 1;
            }
            if w[0] == u && w[1] == v {
                n11 += 1;
            }
        }
        Self {
            n11,
            n12: first_u - n11,
            n21: second_v - n11,
            n22: total - first_u - second_v + n11,
        }
    }

    pub fn total(&self) -> u64 {
        self.n11 + self.n12 + self.n21 + self.n22
    }

    /// Joint count above its independence expectation. Association tests are
    /// two-sided; collocation discovery additionally requires this direction.
    pub fn positive_association(&self) -> bool {
        let row = self.n11 + self.n12;
        let col = self.n11 + self.n21;
        self.n11 * self.total() > row * col
    }
}

/// Upper-tail probability of the chi-square distribution with one degree of
/// freedom: P(X > x) = erfc(sqrt(x / 2)).
pub fn chisq1_survival<F: Scalar>(x: F) -> Result<F> {
    if x.is_nan() || x < F::zero() {
        return Err(Error::InvalidArgument(format!("chi-square statistic {x} is negative")));
    }
    Ok((x / F::from_count(2)).sqrt().erfc())
}

pub fn chi_square_test<F: Scalar>(table: &ContingencyTable, threshold: F) -> TestVerdict<F> {
    let r1 = table.n11 + table.n12;
    let r2 = table.n21 + table.n22;
    let c1 = table.n11 + table.n21;
    let c2 = table.n12 + table.n22;
    if r1 == 0 || r2 == 0 || c1 == 0 || c2 == 0 {
        return TestVerdict { statistic: F::zero(), p_value: F::one(), significant: false };
    }
    let t = F::from_count(table.total() as usize);
    let mut statistic = F::zero();
    for (obs, row, col) in [
        (table.n11, r1, c1),
        (table.n12, r1, c2),
        (table.n21, r2, c1),
        (table.n22, r2, c2),
    ] {
        let expected = F::from_count(row as usize) * F::from_count(col as usize) / t;
        let d = F::from_count(obs as usize) - expected;
        statistic = statistic + d * d / expected;
    }
    let p_value = chisq1_survival(statistic).expect("non-negative statistic");
    TestVerdict { statistic, p_value, significant: p_value < threshold }
}

fn xlogy<F: Scalar>(k: u64, p: F) -> F {
    if k == 0 {
        F::zero()
    } else {
        F::from_count(k as usize) * p.ln()
    }
}

fn binomial_ll<F: Scalar>(k: u64, n: u64) -> F {
    if n == 0 {
        return F::zero();
    }
    let nf = F::from_count(n as usize);
    xlogy(k, F::from_count(k as usize) / nf) + xlogy(n - k, F::from_count((n - k) as usize) / nf)
}

/// Twice the log ratio of the dependent (per-row rates) to the independent
/// (pooled rate) binomial likelihoods of the table's first column.
pub fn dunning_statistic<F: Scalar>(table: &ContingencyTable) -> F {
    let r1 = table.n11 + table.n12;
    let r2 = table.n21 + table.n22;
    let c1 = table.n11 + table.n21;
    let dep = binomial_ll::<F>(table.n11, r1) + binomial_ll::<F>(table.n21, r2);
    let indep = binomial_ll::<F>(c1, r1 + r2);
    (F::from_count(2) * (dep - indep)).max(F::zero())
}

pub fn dunning_lr_test<F: Scalar>(table: &ContingencyTable, threshold: F) -> TestVerdict<F> {
    let statistic = dunning_statistic(table);
    let p_value = chisq1_survival(statistic).expect("non-negative statistic");
    TestVerdict { statistic, p_value, significant: p_value < threshold }
}

/// Asymptotic verdict on a back-off expansion: twice the log-likelihood ratio
/// against chi-square with one degree of freedom (one added parameter).
/// A negative ratio carries no evidence, so its p-value is 1.
pub fn backoff_lr_asymptotic_test<F: Scalar>(score: &ExpansionScore<F>, threshold: F) -> TestVerdict<F> {
    let statistic = F::from_count(2) * score.lr;
    let p_value = chisq1_survival(statistic.max(F::zero())).expect("clamped statistic");
    TestVerdict { statistic, p_value, significant: p_value < threshold }
}

/// Shuffles the stream uniformly while keeping every currently modeled phrase
/// occurrence as one atomic unit. Freezing scans left to right, taking the
/// longest anchor-valid phrase at each position. Document sentinels are
/// dropped: the output is one flat document.
pub fn permute_stream(
    stream: &PhraseStream,
    phrases: &[(Vec<Sym>, Option<usize>)],
    seed: u64,
) -> PhraseStream {
    let mut by_words: FxHashMap<&[Sym], Option<usize>> = FxHashMap::default();
    let mut max_len = 1;
    for (words, anchor) in phrases {
        if words.len() > 1 {
            max_len = max_len.max(words.len());
            by_words.insert(words.as_slice(), *anchor);
        }
    }
    let items = stream.items();
    let anchors = stream.anchors();
    let mut units: Vec<(usize, usize)> = Vec::new();
    let mut i = 0;
    while i < items.len() {
        if items[i] == SENTINEL {
            i += 1;
            continue;
        }
        let mut len = 1;
        let cap = max_len.min(items.len() - i);
        for l in (2..=cap).rev() {
            if let Some(&anchor) = by_words.get(&items[i..i + l]) {
                let ok = match anchor {
                    Some(off) => anchors[i + off],
                    None => true,
                };
                if ok {
                    len = l;
                    break;
                }
            }
        }
        units.push((i, len));
        i += len;
    }
    let mut rng = seeded_rng(seed);
    units.shuffle(&mut rng);
    let mut out_items = Vec::with_capacity(stream.n_tokens());
    let mut out_anchors = Vec::with_capacity(stream.n_tokens());
    for &(start, len) in &units {
        out_items.extend_from_slice(&items[start..start + len]);
        out_anchors.extend_from_slice(&anchors[start..start + len]);
    }
    PhraseStream::new(out_items, out_anchors, stream.n_symbols())
}

fn best_candidate<F: Scalar>(scorer: &HistoryScorer<F>, min_count: u32) -> Option<(Sym, u32, F)> {
    let mut best: Option<(Sym, u32, F)> = None;
    for (v, c) in scorer.candidates() {
        if c < min_count {
            continue;
        }
        let Some(lr) = scorer.score(v) else { continue };
        if lr.is_nan() {
            continue;
        }
        let better = match best {
            None => true,
            Some((bv, bc, blr)) => lr > blr || (lr == blr && (c > bc || (c == bc && v < bv))),
        };
        if better {
            best = Some((v, c, lr));
        }
    }
    best
}

/// The recursive test: pick the best-scoring candidate continuation of the
/// history, then compare its likelihood ratio against the maxima obtained on
/// permuted streams that retain the modeled phrases. None when no candidate
/// meets `min_count`. A best candidate with lr <= 0 cannot improve the model,
/// so it is reported as not significant without running replicates.
pub fn permutation_test_max_lr<F: Scalar>(
    base: &BackoffModel<F>,
    history: &[Sym],
    anchor: Option<usize>,
    stream: &PhraseStream,
    config: &PermutationConfig<F>,
) -> Result<Option<ExpansionTest<F>>> {
    config.validate()?;
    let scorer = HistoryScorer::new(base, stream, history, anchor)?;
    let Some((v_star, n_hv, observed)) = best_candidate(&scorer, config.min_count) else {
        return Ok(None);
    };
    let score = ExpansionScore {
        history: history.to_vec(),
        anchor,
        candidate: v_star,
        lr: observed,
        n_h: scorer.n_h(),
        n_hv,
    };
    if observed <= F::zero() {
        return Ok(Some(ExpansionTest {
            score,
            verdict: TestVerdict { statistic: observed, p_value: F::one(), significant: false },
            exceed: config.permutations,
            permutations: config.permutations,
        }));
    }
    let structure = base.structure();
    let phrases = structure.phrases();
    let exceed: u32 = (0..config.permutations)
        .into_par_iter()
        .map(|r| {
            let seed = derive_seed(config.seed, PERMUTE_TAG, u64::from(r), 0);
            let permuted = permute_stream(stream, &phrases, seed);
            // A replicate can lose a modeled history (for example, its only
            // occurrences end up at the stream tail); it then carries no
            // null statistic and counts as a non-exceedance.
            let Ok(null_model) = BackoffModel::<F>::estimate(structure, &permuted) else {
                return 0u32;
            };
            let Ok(null_scorer) = HistoryScorer::new(&null_model, &permuted, history, anchor)
            else {
                return 0;
            };
            match best_candidate(&null_scorer, config.min_count) {
                Some((_, _, lr)) if lr > observed || (config.count_ties && lr == observed) => 1,
                _ => 0,
            }
        })
        .sum();
    let p_value = F::from_count(exceed as usize) / F::from_count(config.permutations as usize);
    Ok(Some(ExpansionTest {
        score,
        verdict: TestVerdict {
            statistic: observed,
            p_value,
            significant: p_value < config.p_threshold,
        },
        exceed,
        permutations: config.permutations,
    }))
}

/// Per-pair permutation test on the Dunning statistic over raw shuffles with
/// no phrase freezing.
pub fn multinomial_permutation_test<F: Scalar>(
    stream: &PhraseStream,
    u: Sym,
    v: Sym,
    config: &PermutationConfig<F>,
) -> Result<TestVerdict<F>> {
    config.validate()?;
    let observed = dunning_statistic::<F>(&ContingencyTable::from_stream(stream, u, v));
    let exceed: u32 = (0..config.permutations)
        .into_par_iter()
        .map(|r| {
            let seed = derive_seed(config.seed, PERMUTE_TAG, u64::from(r), 0);
            let permuted = permute_stream(stream, &[], seed);
            let stat = dunning_statistic::<F>(&ContingencyTable::from_stream(&permuted, u, v));
            u32::from(stat > observed || (config.count_ties && stat == observed))
        })
        .sum();
    let p_value = F::from_count(exceed as usize) / F::from_count(config.permutations as usize);
    Ok(TestVerdict { statistic: observed, p_value, significant: p_value < config.p_threshold })
}
