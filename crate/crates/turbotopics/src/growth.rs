use rayon::prelude::*;
use rustc_hash::{FxHashMap, FxHashSet};
use serde::{Deserialize, Serialize};

use crate::backoff::{BackoffModel, ModelStructure};
use crate::corpus::{extract_topic_stream, ranked_topic_words, AnnotatedToken};
use crate::error::{Error, Result};
use crate::num::Scalar;
use crate::rng::derive_seed;
use crate::significance::{permutation_test_max_lr, ExpansionTest, PermutationConfig};
use crate::stream::{Lexicon, PhraseStream, Sym, SENTINEL};

pub const DEFAULT_GROWTH_P_THRESHOLD: f64 = 0.01;
pub const DEFAULT_GROWTH_PERMUTATIONS: u32 = 100;
pub const DEFAULT_MAX_PHRASE_LEN: usize = 5;
pub const DEFAULT_GROWTH_MIN_COUNT: u32 = 2;
pub const DEFAULT_TOP_SEED_WORDS: usize = 30;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthConfig<F> {
    pub p_threshold: F,
    pub permutations: u32,
    pub max_phrase_len: usize,
    pub min_count: u32,
    /// How many of the highest-count topic words get grown as seeds.
    pub top_seed_words: usize,
    pub seed: u64,
}

impl<F: Scalar> Default for GrowthConfig<F> {
    fn default() -> Self {
        Self {
            p_threshold: F::from_f64(DEFAULT_GROWTH_P_THRESHOLD).unwrap(),
            permutations: DEFAULT_GROWTH_PERMUTATIONS,
            max_phrase_len: DEFAULT_MAX_PHRASE_LEN,
            min_count: DEFAULT_GROWTH_MIN_COUNT,
            top_seed_words: DEFAULT_TOP_SEED_WORDS,
            seed: 0,
        }
    }
}

impl<F: Scalar> GrowthConfig<F> {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_threshold > F::zero() && self.p_threshold < F::one()) {
            return Err(Error::InvalidArgument(format!(
                "p_threshold must lie in (0, 1), got {}",
                self.p_threshold
            )));
        }
        if self.permutations == 0 {
            return Err(Error::InvalidArgument("permutations must be positive".into()));
        }
        if self.max_phrase_len == 0 {
            return Err(Error::InvalidArgument("max_phrase_len must be positive".into()));
        }
        if self.min_count == 0 {
            return Err(Error::InvalidArgument("min_count must be positive".into()));
        }
        if self.top_seed_words == 0 {
            return Err(Error::InvalidArgument("top_seed_words must be positive".into()));
        }
        Ok(())
    }
}

/// One accepted expansion: the test that admitted it and the phrase it
/// produced. `seed_index` tracks where the original topic word sits after
/// leftward insertions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthStep<F> {
    pub phrase: Vec<Sym>,
    pub seed_index: usize,
    pub test: ExpansionTest<F>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrownPhrase<F> {
    pub words: Vec<Sym>,
    pub seed_index: usize,
    pub chain: Vec<GrowthStep<F>>,
}

#[derive(Debug)]
pub struct TopicGrowth<F> {
    pub topic: usize,
    pub phrases: Vec<GrownPhrase<F>>,
    pub lexicon: Lexicon,
    pub stream: PhraseStream,
    /// Tokens carrying this topic's label; the denominator for report masses.
    pub labeled_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhraseEntry<F> {
    pub ngram: String,
    pub mass: F,
    pub count: u32,
    pub p_chain: Vec<F>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceRecord<F> {
    pub ngram: String,
    pub chain: Vec<ExpansionTest<F>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicPhraseReport<F> {
    pub topic: usize,
    pub entries: Vec<PhraseEntry<F>>,
    pub provenance: Vec<ProvenanceRecord<F>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

impl<F> TopicPhraseReport<F> {
    pub fn empty(topic: usize, diagnostic: Option<String>) -> Self {
        Self { topic, entries: Vec::new(), provenance: Vec::new(), diagnostic }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Direction {
    Right,
    Left,
}

struct Grower<'a, F: Scalar> {
    stream: &'a PhraseStream,
    reversed: &'a PhraseStream,
    forward: ModelStructure,
    backward: ModelStructure,
    forward_model: Option<BackoffModel<F>>,
    backward_model: Option<BackoffModel<F>>,
    config: &'a GrowthConfig<F>,
    topic: usize,
    tests_run: u64,
}

impl<'a, F: Scalar> Grower<'a, F> {
    fn new(
        stream: &'a PhraseStream,
        reversed: &'a PhraseStream,
        config: &'a GrowthConfig<F>,
        topic: usize,
    ) -> Self {
        Self {
            stream,
            reversed,
            forward: ModelStructure::unigram(),
            backward: ModelStructure::unigram(),
            forward_model: None,
            backward_model: None,
            config,
            topic,
            tests_run: 0,
        }
    }

    fn grow_seed(&mut self, seed: Sym) -> Result<GrownPhrase<F>> {
        let mut words = vec![seed];
        let mut seed_index = 0usize;
        let mut chain = Vec::new();
        // A direction is retried only after the phrase changed since that
        // direction last failed to expand; otherwise the same test would be
        // rerun against an unchanged model.
        let mut right_open = true;
        let mut left_open = true;
        while right_open || left_open {
            if right_open {
                right_open = false;
                if self.fixate(&mut words, &mut seed_index, &mut chain, Direction::Right)? {
                    left_open = true;
                }
            }
            if left_open {
                left_open = false;
                if self.fixate(&mut words, &mut seed_index, &mut chain, Direction::Left)? {
                    right_open = true;
                }
            }
        }
        Ok(GrownPhrase { words, seed_index, chain })
    }

    fn fixate(
        &mut self,
        words: &mut Vec<Sym>,
        seed_index: &mut usize,
        chain: &mut Vec<GrowthStep<F>>,
        dir: Direction,
    ) -> Result<bool> {
        let mut grew = false;
        while words.len() < self.config.max_phrase_len {
            let Some(test) = self.try_step(words, *seed_index, dir)? else { break };
            if !test.verdict.significant {
                break;
            }
            let v = test.score.candidate;
            match dir {
                Direction::Right => words.push(v),
                Direction::Left => {
                    words.insert(0, v);
                    *seed_index += 1;
                }
            }
            self.accept(words, *seed_index)?;
            chain.push(GrowthStep { phrase: words.clone(), seed_index: *seed_index, test });
            grew = true;
        }
        Ok(grew)
    }

    fn try_step(
        &mut self,
        words: &[Sym],
        seed_index: usize,
        dir: Direction,
    ) -> Result<Option<ExpansionTest<F>>> {
        let test_seed = derive_seed(self.config.seed, self.topic as u64, self.tests_run, dir as u64);
        self.tests_run += 1;
        let pconf = PermutationConfig {
            permutations: self.config.permutations,
            p_threshold: self.config.p_threshold,
            min_count: self.config.min_count,
            count_ties: false,
            seed: test_seed,
        };
        let (history, seed_offset, stream) = match dir {
            Direction::Right => (words.to_vec(), seed_index, self.stream),
            Direction::Left => {
                let rev: Vec<Sym> = words.iter().rev().copied().collect();
                (rev, words.len() - 1 - seed_index, self.reversed)
            }
        };
        // A history already registered by some acceptance keeps its anchor;
        // the scorer would reject the same words under a different one.
        let structure = match dir {
            Direction::Right => &self.forward,
            Direction::Left => &self.backward,
        };
        let anchor = match structure.find(&history) {
            Some(id) => structure.hists()[id].anchor,
            None => Some(seed_offset),
        };
        let model = match dir {
            Direction::Right => {
                if self.forward_model.is_none() {
                    self.forward_model = Some(BackoffModel::estimate(&self.forward, self.stream)?);
                }
                self.forward_model.as_ref().unwrap()
            }
            Direction::Left => {
                if self.backward_model.is_none() {
                    self.backward_model =
                        Some(BackoffModel::estimate(&self.backward, self.reversed)?);
                }
                self.backward_model.as_ref().unwrap()
            }
        };
        match permutation_test_max_lr(model, &history, anchor, stream, &pconf) {
            // A phrase that never occurs with a follower simply has nothing
            // to expand into; only the caller-side stream can tell.
            Err(Error::HistoryUnseen { .. }) => Ok(None),
            other => other,
        }
    }

    /// Endows the accepted phrase in both directions so later tests (either
    /// side, any seed) treat it as modeled structure and freeze it when
    /// permuting.
    fn accept(&mut self, words: &[Sym], seed_index: usize) -> Result<()> {
        let n = words.len();
        let forward_anchor = (seed_index < n - 1).then_some(seed_index);
        let changed_fwd =
            endow_tolerant(&mut self.forward, &words[..n - 1], forward_anchor, words[n - 1])?;
        let rev: Vec<Sym> = words.iter().rev().copied().collect();
        let rev_index = n - 1 - seed_index;
        let backward_anchor = (rev_index < n - 1).then_some(rev_index);
        let changed_bwd =
            endow_tolerant(&mut self.backward, &rev[..n - 1], backward_anchor, rev[n - 1])?;
        if changed_fwd {
            self.forward_model = None;
        }
        if changed_bwd {
            self.backward_model = None;
        }
        Ok(())
    }
}

/// Endows `v` under `hist` unless it already is; a history created earlier
/// (possibly by another seed's chain) keeps its original anchor.
fn endow_tolerant(
    structure: &mut ModelStructure,
    hist: &[Sym],
    anchor: Option<usize>,
    v: Sym,
) -> Result<bool> {
    let anchor = match structure.find(hist) {
        Some(id) => structure.hists()[id].anchor,
        None => anchor,
    };
    if structure.is_endowed(hist, v) {
        return Ok(false);
    }
    structure.endow(hist, anchor, v)?;
    Ok(true)
}

/// Grows every seed word of `topic` into its maximal significant phrase.
/// Seeds are the highest-count topic words; growth alternates rightward and
/// leftward (the latter on the reversed stream) until neither side expands.
pub fn grow_phrases<F: Scalar>(
    annotated: &[AnnotatedToken],
    topic: usize,
    config: &GrowthConfig<F>,
) -> Result<TopicGrowth<F>> {
    config.validate()?;
    let mut lexicon = Lexicon::new();
    let stream = extract_topic_stream(annotated, topic, &mut lexicon);
    let labeled_tokens = stream.anchors().iter().filter(|&&a| a).count() as u64;
    let seeds: Vec<Sym> = ranked_topic_words(annotated, topic, &mut lexicon)
        .into_iter()
        .filter(|&(_, count)| count >= config.min_count)
        .take(config.top_seed_words)
        .map(|(sym, _)| sym)
        .collect();
    let reversed = stream.reversed();
    let mut grower = Grower::new(&stream, &reversed, config, topic);
    let mut phrases = Vec::with_capacity(seeds.len());
    for seed in seeds {
        phrases.push(grower.grow_seed(seed)?);
    }
    Ok(TopicGrowth { topic, phrases, lexicon, stream, labeled_tokens })
}

/// Occurrences of each phrase not claimed by a longer one: a greedy
/// longest-match scan claims disjoint anchor-valid occurrences, mirroring how
/// permutation freezing decodes the stream. Returned counts align with the
/// input slice.
pub fn standalone_counts(
    stream: &PhraseStream,
    phrases: &[(Vec<Sym>, Option<usize>)],
) -> Vec<u32> {
    let mut by_words: FxHashMap<&[Sym], usize> = FxHashMap::default();
    let mut max_len = 1;
    for (idx, (words, _)) in phrases.iter().enumerate() {
        by_words.entry(words.as_slice()).or_insert(idx);
        max_len = max_len.max(words.len());
    }
    let mut counts = vec![0u32; phrases.len()];
    let items = stream.items();
    let mut i = 0;
    while i < items.len() {
        if items[i] == SENTINEL {
            i += 1;
            continue;
        }
        let cap = max_len.min(items.len() - i);
        let mut claimed = None;
        for len in (1..=cap).rev() {
            let end = i + len;
            if let Some(&idx) = by_words.get(&items[i..end]) {
                let (words, anchor) = &phrases[idx];
                if stream.matches_at(words, *anchor, end) {
                    claimed = Some((idx, len));
                    break;
                }
            }
        }
        match claimed {
            Some((idx, len)) => {
                counts[idx] += 1;
                i += len;
            }
            None => i += 1,
        }
    }
    counts
}

#[derive(Debug, Clone, PartialEq)]
pub struct MergedNgram<F> {
    pub words: Vec<Sym>,
    pub mass: F,
    pub count: u32,
}

/// Folds nested n-gram masses: processing shorter n-grams first, each one
/// whose standalone mass falls below the mass of some containing n-gram
/// donates its mass to the heaviest such container and disappears; shorter
/// n-grams at least as heavy as every container survive alongside them.
/// Masses are counts over `total`; the output is ranked by merged mass.
pub fn merge_ngram_masses<F: Scalar>(
    ngrams: &[(Vec<Sym>, u32)],
    total: u64,
) -> Result<Vec<MergedNgram<F>>> {
    if ngrams.is_empty() {
        return Ok(Vec::new());
    }
    if total == 0 {
        return Err(Error::InvalidArgument("zero total count for n-gram masses".into()));
    }
    let mut seen: FxHashSet<&[Sym]> = FxHashSet::default();
    for (words, _) in ngrams {
        if words.is_empty() {
            return Err(Error::InvalidArgument("empty n-gram".into()));
        }
        if !seen.insert(words.as_slice()) {
            return Err(Error::InvalidArgument(format!("duplicate n-gram {words:?}")));
        }
    }
    let denom = F::from_count(total as usize);
    let mut alive: Vec<Option<MergedNgram<F>>> = ngrams
        .iter()
        .map(|(words, count)| {
            Some(MergedNgram {
                words: words.clone(),
                mass: F::from_count(*count as usize) / denom,
                count: *count,
            })
        })
        .collect();
    let mut order: Vec<usize> = (0..alive.len()).collect();
    order.sort_by(|&a, &b| {
        let (wa, wb) = (&ngrams[a].0, &ngrams[b].0);
        wa.len().cmp(&wb.len()).then_with(|| wa.cmp(wb))
    });
    for &i in &order {
        let Some(shorter) = alive[i].clone() else { continue };
        let container = alive
            .iter()
            .enumerate()
            .filter(|&(j, entry)| {
                j != i
                    && entry
                        .as_ref()
                        .is_some_and(|e| contains_subsequence(&e.words, &shorter.words))
            })
            .max_by(|(_, a), (_, b)| {
                let (a, b) = (a.as_ref().unwrap(), b.as_ref().unwrap());
                a.mass
                    .partial_cmp(&b.mass)
                    .unwrap()
                    .then(a.words.len().cmp(&b.words.len()))
                    .then_with(|| b.words.cmp(&a.words))
            })
            .map(|(j, _)| j);
        if let Some(j) = container {
            let container_mass = alive[j].as_ref().unwrap().mass;
            if shorter.mass < container_mass {
                alive[j].as_mut().unwrap().mass = container_mass + shorter.mass;
                alive[i] = None;
            }
        }
    }
    let mut merged: Vec<MergedNgram<F>> = alive.into_iter().flatten().collect();
    merged.sort_by(|a, b| {
        b.mass
            .partial_cmp(&a.mass)
            .unwrap()
            .then(b.count.cmp(&a.count))
            .then_with(|| a.words.cmp(&b.words))
    });
    Ok(merged)
}

fn contains_subsequence(longer: &[Sym], shorter: &[Sym]) -> bool {
    longer.len() > shorter.len() && longer.windows(shorter.len()).any(|w| w == shorter)
}

struct AcceptedNgram<F> {
    words: Vec<Sym>,
    seed_index: usize,
    p_chain: Vec<F>,
    chain: Vec<ExpansionTest<F>>,
}

/// Turns one topic's growth into its ranked report: the accepted set is every
/// seed word plus every phrase some chain step produced, counted standalone
/// and merged by mass.
pub fn assemble_report<F: Scalar>(growth: &TopicGrowth<F>) -> TopicPhraseReport<F> {
    let mut accepted: Vec<AcceptedNgram<F>> = Vec::new();
    let mut seen: FxHashSet<Vec<Sym>> = FxHashSet::default();
    for phrase in &growth.phrases {
        let seed_word = vec![phrase.words[phrase.seed_index]];
        if seen.insert(seed_word.clone()) {
            accepted.push(AcceptedNgram {
                words: seed_word,
                seed_index: 0,
                p_chain: Vec::new(),
                chain: Vec::new(),
            });
        }
        for (k, step) in phrase.chain.iter().enumerate() {
            if seen.insert(step.phrase.clone()) {
                accepted.push(AcceptedNgram {
                    words: step.phrase.clone(),
                    seed_index: step.seed_index,
                    p_chain: phrase.chain[..=k]
                        .iter()
                        .map(|s| s.test.verdict.p_value)
                        .collect(),
                    chain: phrase.chain[..=k].iter().map(|s| s.test.clone()).collect(),
                });
            }
        }
    }
    if accepted.is_empty() {
        return TopicPhraseReport::empty(growth.topic, None);
    }
    let specs: Vec<(Vec<Sym>, Option<usize>)> = accepted
        .iter()
        .map(|a| (a.words.clone(), Some(a.seed_index)))
        .collect();
    let counts = standalone_counts(&growth.stream, &specs);
    let pairs: Vec<(Vec<Sym>, u32)> = accepted
        .iter()
        .zip(&counts)
        .map(|(a, &c)| (a.words.clone(), c))
        .collect();
    let merged = match merge_ngram_masses::<F>(&pairs, growth.labeled_tokens) {
        Ok(m) => m,
        Err(e) => return TopicPhraseReport::empty(growth.topic, Some(e.to_string())),
    };
    let by_words: FxHashMap<&[Sym], &AcceptedNgram<F>> =
        accepted.iter().map(|a| (a.words.as_slice(), a)).collect();
    let entries = merged
        .iter()
        .map(|m| PhraseEntry {
            ngram: growth.lexicon.resolve_phrase(&m.words),
            mass: m.mass,
            count: m.count,
            p_chain: by_words[m.words.as_slice()].p_chain.clone(),
        })
        .collect();
    let provenance = accepted
        .iter()
        .filter(|a| !a.chain.is_empty())
        .map(|a| ProvenanceRecord {
            ngram: growth.lexicon.resolve_phrase(&a.words),
            chain: a.chain.clone(),
        })
        .collect();
    TopicPhraseReport { topic: growth.topic, entries, provenance, diagnostic: None }
}

pub fn build_topic_report<F: Scalar>(
    annotated: &[AnnotatedToken],
    topic: usize,
    config: &GrowthConfig<F>,
) -> Result<TopicPhraseReport<F>> {
    let growth = grow_phrases(annotated, topic, config)?;
    Ok(assemble_report(&growth))
}

/// Grows and reports every topic. Topics run in parallel; a topic whose
/// growth fails yields an empty report carrying the error as a diagnostic.
pub fn build_turbo_topics<F: Scalar>(
    annotated: &[AnnotatedToken],
    n_topics: usize,
    config: &GrowthConfig<F>,
) -> Vec<TopicPhraseReport<F>> {
    (0..n_topics)
        .into_par_iter()
        .map(|topic| match build_topic_report(annotated, topic, config) {
            Ok(report) => report,
            Err(e) => TopicPhraseReport::empty(topic, Some(e.to_string())),
        })
        .collect()
}
