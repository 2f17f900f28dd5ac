//! Bigram-discovery benchmark on simulated corpora: five methods propose
//! collocations on the same planted streams and are scored by weighted
//! precision, recall, and F-measure.

use rayon::prelude::*;
use rustc_hash::{FxHashMap, FxHashSet};
use serde::{Deserialize, Serialize};

use crate::backoff::ModelStructure;
use crate::error::{Error, Result};
use crate::num::Scalar;
use crate::rng::derive_seed;
use crate::scorer::FlatScorer;
use crate::significance::{
    chi_square_test, chisq1_survival, dunning_lr_test, dunning_statistic, permute_stream,
    ContingencyTable,
};
use crate::sim::{f_measure, simulate_corpus, weighted_precision_recall, SimConfig};
use crate::stream::{pack_pair, unpack_pair, PhraseStream, Sym, SENTINEL};

const CORPUS_TAG: u64 = 2;
const CELL_TAG: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    ChiSquare,
    DunningLr,
    BackoffLrAsymptotic,
    MultinomialPermutation,
    BackoffPermutation,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::ChiSquare,
        Method::DunningLr,
        Method::BackoffLrAsymptotic,
        Method::MultinomialPermutation,
        Method::BackoffPermutation,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Method::ChiSquare => "chi_square",
            Method::DunningLr => "dunning_lr",
            Method::BackoffLrAsymptotic => "backoff_lr_asymptotic",
            Method::MultinomialPermutation => "multinomial_permutation",
            Method::BackoffPermutation => "backoff_permutation",
        }
    }

    pub fn parse(id: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.id() == id)
            .ok_or_else(|| {
                let known: Vec<&str> = Self::ALL.iter().map(|m| m.id()).collect();
                Error::InvalidArgument(format!(
                    "unknown method {id:?}; expected one of {}",
                    known.join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig<F> {
    pub methods: Vec<Method>,
    pub sizes: Vec<usize>,
    pub thresholds: Vec<F>,
    pub replications: u32,
    pub permutations: u32,
    /// Candidate floor for the back-off methods' follower counts; the flat
    /// per-pair baselines test every observed pair.
    pub min_count: u32,
    pub crp_alpha: F,
    pub beta_bigram: F,
    pub seed: u64,
}

impl<F: Scalar> Default for BenchConfig<F> {
    fn default() -> Self {
        Self {
            methods: Method::ALL.to_vec(),
            sizes: vec![1000, 10_000],
            thresholds: vec![
                F::from_f64(0.05).expect("constant"),
                F::from_f64(0.01).expect("constant"),
                F::from_f64(0.005).expect("constant"),
            ],
            replications: 5,
            permutations: 1000,
            min_count: 2,
            crp_alpha: F::from_count(1000),
            beta_bigram: F::from_f64(0.1).expect("constant"),
            seed: 0,
        }
    }
}

impl<F: Scalar> BenchConfig<F> {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::InvalidArgument("no methods selected".into()));
        }
        if self.sizes.is_empty() || self.sizes.iter().any(|&s| s < 2) {
            return Err(Error::InvalidArgument("sizes must all be at least 2".into()));
        }
        if self.thresholds.is_empty()
            || self.thresholds.iter().any(|t| {
                let t = t.to_f64().unwrap_or(f64::NAN);
                !(0.0 < t && t < 1.0)
            })
        {
            return Err(Error::InvalidArgument("thresholds must lie in (0, 1)".into()));
        }
        if self.replications == 0 {
            return Err(Error::InvalidArgument("replications must be at least 1".into()));
        }
        if self.permutations == 0 {
            return Err(Error::InvalidArgument("permutations must be at least 1".into()));
        }
        if self.min_count == 0 {
            return Err(Error::InvalidArgument("min count must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BenchRow<F> {
    pub method: Method,
    pub size: usize,
    pub threshold: F,
    pub replication: u32,
    pub precision: F,
    pub recall: F,
    pub f: F,
}

/// Runs every (method, size, threshold, replication) cell. Cells sharing
/// (size, replication) share one simulated corpus, so methods face identical
/// data; everything else is keyed by derived sub-seeds and cells are safe to
/// evaluate in parallel.
pub fn run_benchmark<F: Scalar>(config: &BenchConfig<F>) -> Result<Vec<BenchRow<F>>> {
    config.validate()?;
    let mut cells: Vec<(usize, u32)> = Vec::new();
    for &size in &config.sizes {
        for repl in 0..config.replications {
            cells.push((size, repl));
        }
    }
    let nested: Result<Vec<Vec<BenchRow<F>>>> = cells
        .par_iter()
        .map(|&(size, repl)| {
            let sim_config = SimConfig {
                crp_alpha: config.crp_alpha,
                beta_bigram: config.beta_bigram,
                n_tokens: size,
                seed: derive_seed(config.seed, CORPUS_TAG, size as u64, u64::from(repl)),
            };
            let truth = simulate_corpus(&sim_config)?;
            let cell_seed = derive_seed(config.seed, CELL_TAG, size as u64, u64::from(repl));
            let mut rows = Vec::new();
            for (mi, &method) in config.methods.iter().enumerate() {
                for (ti, &threshold) in config.thresholds.iter().enumerate() {
                    let run_seed = derive_seed(cell_seed, mi as u64, ti as u64, 0);
                    let found = discover(method, &truth.stream, threshold, config, run_seed)?;
                    let (precision, recall) = weighted_precision_recall(&found, &truth);
                    rows.push(BenchRow {
                        method,
                        size,
                        threshold,
                        replication: repl,
                        precision,
                        recall,
                        f: f_measure(precision, recall),
                    });
                }
            }
            Ok(rows)
        })
        .collect();
    let mut rows: Vec<BenchRow<F>> = nested?.into_iter().flatten().collect();
    rows.sort_by(|a, b| {
        (a.method.id(), a.size, a.replication)
            .cmp(&(b.method.id(), b.size, b.replication))
            .then(a.threshold.partial_cmp(&b.threshold).expect("validated thresholds"))
    });
    Ok(rows)
}

/// The asymptotic tests screen nothing (every observed pair is a candidate,
/// as the classical tests are applied, and sparse pairs are exactly where
/// their approximations break down); the permutation methods carry the
/// procedure's own candidate floor, `min_count`.
pub fn discover<F: Scalar>(
    method: Method,
    stream: &PhraseStream,
    threshold: F,
    config: &BenchConfig<F>,
    seed: u64,
) -> Result<Vec<(Sym, Sym)>> {
    match method {
        Method::ChiSquare => Ok(flat_table_discover(stream, threshold, false)),
        Method::DunningLr => Ok(flat_table_discover(stream, threshold, true)),
        Method::MultinomialPermutation => Ok(multinomial_discover(
            stream,
            threshold,
            config.min_count,
            config.permutations,
            seed,
        )),
        Method::BackoffLrAsymptotic => backoff_discover(stream, threshold, 1, None, seed),
        Method::BackoffPermutation => backoff_discover(
            stream,
            threshold,
            config.min_count,
            Some(config.permutations),
            seed,
        ),
    }
}

/// Pair-count marginals for O(1) contingency tables per pair.
struct PairStats {
    pairs: FxHashMap<u64, u32>,
    first: FxHashMap<Sym, u32>,
    second: FxHashMap<Sym, u32>,
    total: u64,
}

impl PairStats {
    fn new(stream: &PhraseStream) -> Self {
        let mut pairs: FxHashMap<u64, u32> = FxHashMap::default();
        let mut first: FxHashMap<Sym, u32> = FxHashMap::default();
        let mut second: FxHashMap<Sym, u32> = FxHashMap::default();
        let mut total = 0u64;
        for w in stream.items().windows(2) {
            if w[0] == SENTINEL || w[1] == SENTINEL {
                continue;
            }
            *pairs.entry(pack_pair(w[0], w[1])).or_insert(0) += 1;
            *first.entry(w[0]).or_insert(0) += 1;
            *second.entry(w[1]).or_insert(0) += 1;
            total += 1;
        }
        Self { pairs, first, second, total }
    }

    fn table(&self, u: Sym, v: Sym) -> ContingencyTable {
        let n11 = u64::from(self.pairs.get(&pack_pair(u, v)).copied().unwrap_or(0));
        let r1 = u64::from(self.first.get(&u).copied().unwrap_or(0));
        let c1 = u64::from(self.second.get(&v).copied().unwrap_or(0));
        ContingencyTable::new(n11, r1 - n11, c1 - n11, self.total - r1 - c1 + n11)
    }
}

fn flat_table_discover<F: Scalar>(
    stream: &PhraseStream,
    threshold: F,
    dunning: bool,
) -> Vec<(Sym, Sym)> {
    let stats = PairStats::new(stream);
    let mut found = Vec::new();
    for &key in stats.pairs.keys() {
        let (u, v) = unpack_pair(key);
        let table = stats.table(u, v);
        if !table.positive_association() {
            continue;
        }
        let verdict = if dunning {
            dunning_lr_test(&table, threshold)
        } else {
            chi_square_test(&table, threshold)
        };
        if verdict.significant {
            found.push((u, v));
        }
    }
    found.sort_unstable();
    found
}

fn multinomial_discover<F: Scalar>(
    stream: &PhraseStream,
    threshold: F,
    min_count: u32,
    permutations: u32,
    seed: u64,
) -> Vec<(Sym, Sym)> {
    let stats = PairStats::new(stream);
    let mut candidates: Vec<(Sym, Sym, F)> = Vec::new();
    for (&key, &c) in &stats.pairs {
        if c < min_count {
            continue;
        }
        let (u, v) = unpack_pair(key);
        let table = stats.table(u, v);
        if table.positive_association() {
            candidates.push((u, v, dunning_statistic(&table)));
        }
    }
    if candidates.is_empty() {
        return Vec::new();
    }
    candidates.sort_by_key(|&(u, v, _)| pack_pair(u, v));
    let exceeds: Vec<u32> = (0..permutations)
        .into_par_iter()
        .map(|r| {
            let permuted = permute_stream(stream, &[], derive_seed(seed, 0, u64::from(r), 0));
            let null_stats = PairStats::new(&permuted);
            candidates
                .iter()
                .map(|&(u, v, observed)| {
                    u32::from(dunning_statistic::<F>(&null_stats.table(u, v)) > observed)
                })
                .collect()
        })
        .reduce(
            || vec![0u32; candidates.len()],
            |mut a, b| {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
                a
            },
        );
    let m = F::from_count(permutations as usize);
    candidates
        .iter()
        .zip(exceeds)
        .filter(|&(_, e)| F::from_count(e as usize) / m < threshold)
        .map(|(&(u, v, _), _)| (u, v))
        .collect()
}

/// The recursive back-off engine, restricted to bigrams: rounds of testing
/// every live history's best continuation, accepting all significant ones at
/// once, and retiring the rest. Accepted pairs join the endowed structure,
/// so later rounds (and their frozen permutations) condition on them.
/// `permutations: None` judges 2*LR against chi-square(1) instead.
fn backoff_discover<F: Scalar>(
    stream: &PhraseStream,
    threshold: F,
    min_count: u32,
    permutations: Option<u32>,
    seed: u64,
) -> Result<Vec<(Sym, Sym)>> {
    let mut structure = ModelStructure::unigram();
    let mut retired: FxHashSet<Sym> = FxHashSet::default();
    let pairs = stream.pair_counts();
    let two = F::from_count(2);
    for round in 0u64.. {
        let mut scorer: FlatScorer<F> = match FlatScorer::new(stream, &structure) {
            Ok(s) => s,
            // The endowed sets can saturate the back-off mass on tiny
            // streams; growth simply stops there.
            Err(Error::BackoffMassExhausted { .. }) => break,
            Err(e) => return Err(e),
        };
        let mut best: FxHashMap<Sym, (Sym, u32, F)> = FxHashMap::default();
        for (&key, &c) in &pairs {
            if c < min_count {
                continue;
            }
            let (u, v) = unpack_pair(key);
            if retired.contains(&u) {
                continue;
            }
            let Some(lr) = scorer.score(u, v) else { continue };
            if lr.is_nan() {
                continue;
            }
            let better = match best.get(&u) {
                None => true,
                Some(&(bv, bc, blr)) => {
                    lr > blr || (lr == blr && (c > bc || (c == bc && v < bv)))
                }
            };
            if better {
                best.insert(u, (v, c, lr));
            }
        }
        if best.is_empty() {
            break;
        }
        let mut live: Vec<(Sym, Sym, F)> =
            best.into_iter().map(|(u, (v, _, lr))| (u, v, lr)).collect();
        live.sort_unstable_by_key(|&(u, _, _)| u);

        let mut accepted: Vec<(Sym, Sym)> = Vec::new();
        match permutations {
            None => {
                for &(u, v, lr) in &live {
                    let p = chisq1_survival((two * lr).max(F::zero())).expect("clamped");
                    if lr > F::zero() && p < threshold {
                        accepted.push((u, v));
                    } else {
                        retired.insert(u);
                    }
                }
            }
            Some(m) => {
                let mut testable: Vec<(Sym, Sym, F)> = Vec::new();
                for &(u, v, lr) in &live {
                    if lr > F::zero() {
                        testable.push((u, v, lr));
                    } else {
                        retired.insert(u);
                    }
                }
                if testable.is_empty() {
                    break;
                }
                let live_set: FxHashSet<Sym> = testable.iter().map(|&(u, _, _)| u).collect();
                let phrases = structure.phrases();
                let exceeds: Vec<u32> = (0..m)
                    .into_par_iter()
                    .map(|r| {
                        let mut out = vec![0u32; testable.len()];
                        let pseed = derive_seed(seed, round, u64::from(r), 1);
                        let permuted = permute_stream(stream, &phrases, pseed);
                        let Ok(mut null_scorer) = FlatScorer::<F>::new(&permuted, &structure)
                        else {
                            return out;
                        };
                        let null_pairs = null_scorer.pairs().clone();
                        let mut null_max: FxHashMap<Sym, F> = FxHashMap::default();
                        for (&key, &c) in &null_pairs {
                            if c < min_count {
                                continue;
                            }
                            let (u, v) = unpack_pair(key);
                            if !live_set.contains(&u) {
                                continue;
                            }
                            let Some(lr) = null_scorer.score(u, v) else { continue };
                            if lr.is_nan() {
                                continue;
                            }
                            null_max
                                .entry(u)
                                .and_modify(|mx| *mx = mx.max(lr))
                                .or_insert(lr);
                        }
                        for (i, &(u, _, observed)) in testable.iter().enumerate() {
                            if null_max.get(&u).is_some_and(|&mx| mx > observed) {
                                out[i] = 1;
                            }
                        }
                        out
                    })
                    .reduce(
                        || vec![0u32; testable.len()],
                        |mut a, b| {
                            for (x, y) in a.iter_mut().zip(b) {
                                *x += y;
                            }
                            a
                        },
                    );
                let m_f = F::from_count(m as usize);
                for (&(u, v, _), e) in testable.iter().zip(exceeds) {
                    if F::from_count(e as usize) / m_f < threshold {
                        accepted.push((u, v));
                    } else {
                        retired.insert(u);
                    }
                }
            }
        }
        if accepted.is_empty() {
            break;
        }
        for &(u, v) in &accepted {
            structure.endow(&[u], None, v)?;
        }
    }

    let mut found: Vec<(Sym, Sym)> = structure
        .hists()
        .iter()
        .flat_map(|h| h.endowed.iter().map(|&v| (h.words[0], v)))
        .collect();
    found.sort_unstable();
    Ok(found)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded_rng;
    use rand::Rng;

    #[test]
    fn method_ids_round_trip() {
        for m in Method::ALL {
            assert_eq!(Method::parse(m.id()).unwrap(), m);
        }
        assert!(Method::parse("mutual_information").is_err());
    }

    fn planted_stream(seed: u64, n_fillers: usize) -> PhraseStream {
        const U: Sym = 0;
        const V: Sym = 1;
        let mut items = Vec::new();
        for _ in 0..30 {
            items.push(U);
            items.push(V);
        }
        items.extend(2..2 + n_fillers as Sym);
        let raw = PhraseStream::unanchored(items, 2 + n_fillers);
        permute_stream(&raw, &[(vec![U, V], None)], derive_seed(seed, 7, 0, 0))
    }

    #[test]
    fn backoff_permutation_finds_the_planted_pair() {
        let stream = planted_stream(5, 400);
        let config = BenchConfig::<f64> { permutations: 100, ..Default::default() };
        let found = discover(Method::BackoffPermutation, &stream, 0.01, &config, 42).unwrap();
        assert!(found.contains(&(0, 1)), "found {found:?}");
        let counts = stream.pair_counts();
        for &(u, v) in &found {
            assert!(counts[&pack_pair(u, v)] >= config.min_count);
        }
    }

    #[test]
    fn asymptotic_backoff_finds_the_planted_pair() {
        let stream = planted_stream(6, 400);
        let config = BenchConfig::<f64>::default();
        let found = discover(Method::BackoffLrAsymptotic, &stream, 0.01, &config, 42).unwrap();
        assert!(found.contains(&(0, 1)), "found {found:?}");
    }

    #[test]
    fn flat_tests_fire_on_strong_association() {
        let stream = planted_stream(7, 400);
        let config = BenchConfig::<f64>::default();
        for method in [Method::ChiSquare, Method::DunningLr, Method::MultinomialPermutation] {
            let config = BenchConfig { permutations: 100, ..config.clone() };
            let found = discover(method, &stream, 0.01, &config, 9).unwrap();
            assert!(found.contains(&(0, 1)), "{method:?} missed: {found:?}");
        }
    }

    #[test]
    fn null_stream_stays_mostly_empty_for_permutation_test() {
        // No planted structure: words drawn independently.
        let mut rng = seeded_rng(33);
        let items: Vec<Sym> = (0..400).map(|_| rng.gen_range(0..40)).collect();
        let stream = PhraseStream::unanchored(items, 40);
        let config = BenchConfig::<f64> { permutations: 200, ..Default::default() };
        let found = discover(Method::BackoffPermutation, &stream, 0.01, &config, 4).unwrap();
        assert!(found.len() <= 2, "found {found:?}");
    }

    #[test]
    fn grid_is_complete_and_deterministic() {
        let config = BenchConfig::<f64> {
            methods: vec![Method::ChiSquare, Method::DunningLr, Method::BackoffPermutation],
            sizes: vec![300],
            thresholds: vec![0.05, 0.01],
            replications: 2,
            permutations: 50,
            crp_alpha: 30.0,
            beta_bigram: 0.2,
            ..Default::default()
        };
        let rows = run_benchmark(&config).unwrap();
        assert_eq!(rows.len(), 3 * 2 * 2);
        for row in &rows {
            assert!((0.0..=1.0).contains(&row.precision));
            assert!((0.0..=1.0).contains(&row.recall));
            assert!((0.0..=1.0).contains(&row.f));
        }
        let again = run_benchmark(&config).unwrap();
        assert_eq!(rows, again);
    }

    #[test]
    fn config_validation() {
        let ok = BenchConfig::<f64>::default();
        assert!(ok.validate().is_ok());
        assert!(BenchConfig { methods: vec![], ..ok.clone() }.validate().is_err());
        assert!(BenchConfig { sizes: vec![1], ..ok.clone() }.validate().is_err());
        assert!(BenchConfig { thresholds: vec![1.5], ..ok.clone() }.validate().is_err());
        assert!(BenchConfig { replications: 0, ..ok.clone() }.validate().is_err());
        assert!(BenchConfig { permutations: 0, ..ok.clone() }.validate().is_err());
        assert!(BenchConfig { min_count: 0, ..ok }.validate().is_err());
    }
}
