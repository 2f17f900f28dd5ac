//! Topic assignment by collapsed sampling: integrate out the topic and
//! document distributions and resample one token's topic at a time from its
//! count-based conditional. Annotation takes each position's most frequent
//! post-burn-in sample, a stable point estimate of its posterior topic.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{AnnotatedToken, Token, Vocabulary};
use crate::error::{Error, Result};
use crate::num::Scalar;
use crate::rng::seeded_rng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LdaConfig<F> {
    pub n_topics: usize,
    /// Symmetric Dirichlet on per-document topic proportions (per component).
    pub alpha: F,
    /// Symmetric Dirichlet on per-topic word distributions.
    pub eta: F,
    pub sweeps: u32,
    pub burn_in: u32,
    pub seed: u64,
}

impl<F: Scalar> LdaConfig<F> {
    /// Standard-practice defaults: alpha = 50/K, eta = 0.01, 1000 sweeps
    /// with the first half discarded.
    pub fn with_topics(n_topics: usize) -> Self {
        Self {
            n_topics,
            alpha: F::from_count(50) / F::from_count(n_topics.max(1)),
            eta: F::from_f64(0.01).expect("constant"),
            sweeps: 1000,
            burn_in: 500,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_topics == 0 || self.n_topics > usize::from(u16::MAX) {
            return Err(Error::InvalidArgument(format!(
                "topic count {} outside 1..={}",
                self.n_topics,
                u16::MAX
            )));
        }
        let alpha = self.alpha.to_f64().unwrap_or(f64::NAN);
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("alpha {alpha} must be positive")));
        }
        let eta = self.eta.to_f64().unwrap_or(f64::NAN);
        if !(eta > 0.0 && eta.is_finite()) {
            return Err(Error::InvalidArgument(format!("eta {eta} must be positive")));
        }
        if self.sweeps == 0 {
            return Err(Error::InvalidArgument("sweeps must be at least 1".into()));
        }
        if self.burn_in >= self.sweeps {
            return Err(Error::InvalidArgument(format!(
                "burn-in {} must be below sweeps {}",
                self.burn_in, self.sweeps
            )));
        }
        Ok(())
    }
}

/// Count-matrix state of a fitted model. Positions index the in-vocabulary
/// tokens in corpus order; `token_index` maps them back to the full token
/// slice. Matrices are row-major: `topic_word_counts[k * n_terms + w]`,
/// `doc_topic_counts[d * n_topics + k]`, `annotation_tally[i * n_topics + k]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LdaState {
    pub n_topics: usize,
    pub n_terms: usize,
    pub n_docs: usize,
    pub assignments: Vec<u16>,
    pub token_index: Vec<usize>,
    pub topic_word_counts: Vec<u32>,
    pub doc_topic_counts: Vec<u32>,
    pub topic_totals: Vec<u32>,
    pub annotation_tally: Vec<u32>,
}

impl LdaState {
    /// Top `m` terms per topic by count, (term id, count), count-descending
    /// with term-id ties ascending.
    pub fn top_words(&self, m: usize) -> Vec<Vec<(usize, u32)>> {
        (0..self.n_topics)
            .map(|k| {
                let row = &self.topic_word_counts[k * self.n_terms..(k + 1) * self.n_terms];
                let mut ranked: Vec<(usize, u32)> =
                    row.iter().enumerate().filter(|&(_, &c)| c > 0).map(|(w, &c)| (w, c)).collect();
                ranked.sort_by_key(|&(w, c)| (std::cmp::Reverse(c), w));
                ranked.truncate(m);
                ranked
            })
            .collect()
    }

    /// Posterior-mode topic of position `i`, ties to the lowest topic id.
    fn tally_mode(&self, i: usize) -> usize {
        let row = &self.annotation_tally[i * self.n_topics..(i + 1) * self.n_topics];
        let mut best = 0;
        for (k, &c) in row.iter().enumerate() {
            if c > row[best] {
                best = k;
            }
        }
        best
    }
}

fn in_vocab_positions(tokens: &[Token], vocab: &Vocabulary) -> (Vec<usize>, Vec<u32>, Vec<u32>) {
    let mut index = Vec::new();
    let mut words = Vec::new();
    let mut docs = Vec::new();
    for (i, t) in tokens.iter().enumerate() {
        if let Some(w) = vocab.id(&t.surface) {
            index.push(i);
            words.push(w as u32);
            docs.push(t.doc as u32);
        }
    }
    (index, words, docs)
}

pub fn fit_lda<F: Scalar>(
    tokens: &[Token],
    vocab: &Vocabulary,
    config: &LdaConfig<F>,
) -> Result<LdaState> {
    config.validate()?;
    let (token_index, words, docs) = in_vocab_positions(tokens, vocab);
    if token_index.is_empty() {
        return Err(Error::InvalidArgument("no in-vocabulary tokens to fit".into()));
    }
    let k = config.n_topics;
    let v = vocab.len();
    let n_docs = tokens.iter().map(|t| t.doc + 1).max().unwrap_or(0);
    let distinct_types = {
        let mut seen = vec![false; v];
        let mut n = 0usize;
        for &w in &words {
            if !seen[w as usize] {
                seen[w as usize] = true;
                n += 1;
            }
        }
        n
    };
    if k > distinct_types {
        log::warn!("{k} topics requested but only {distinct_types} word types occur");
    }

    let mut rng = seeded_rng(config.seed);
    let n = words.len();
    let mut assignments: Vec<u16> = (0..n).map(|_| rng.gen_range(0..k) as u16).collect();
    let mut topic_word = vec![0u32; k * v];
    let mut doc_topic = vec![0u32; n_docs * k];
    let mut topic_total = vec![0u32; k];
    for i in 0..n {
        let z = assignments[i] as usize;
        topic_word[z * v + words[i] as usize] += 1;
        doc_topic[docs[i] as usize * k + z] += 1;
        topic_total[z] += 1;
    }

    let eta_total = config.eta * F::from_count(v);
    let mut weights = vec![F::zero(); k];
    let mut tally = vec![0u32; n * k];
    for sweep in 0..config.sweeps {
        for i in 0..n {
            let w = words[i] as usize;
            let d = docs[i] as usize;
            let z = assignments[i] as usize;
            topic_word[z * v + w] -= 1;
            doc_topic[d * k + z] -= 1;
            topic_total[z] -= 1;

            let mut total = F::zero();
            for (t, weight) in weights.iter_mut().enumerate() {
                *weight = (F::from_count(doc_topic[d * k + t] as usize) + config.alpha)
                    * (F::from_count(topic_word[t * v + w] as usize) + config.eta)
                    / (F::from_count(topic_total[t] as usize) + eta_total);
                total = total + *weight;
            }
            assert!(total > F::zero() && total.is_finite(), "improper sampling weights");
            let mut target = F::from_f64(rng.gen::<f64>()).expect("unit uniform") * total;
            let mut choice = k - 1;
            for (t, &weight) in weights.iter().enumerate() {
                if target < weight {
                    choice = t;
                    break;
                }
                target = target - weight;
            }

            assignments[i] = choice as u16;
            topic_word[choice * v + w] += 1;
            doc_topic[d * k + choice] += 1;
            topic_total[choice] += 1;
        }
        if sweep >= config.burn_in {
            for i in 0..n {
                tally[i * k + assignments[i] as usize] += 1;
            }
        }
    }

    Ok(LdaState {
        n_topics: k,
        n_terms: v,
        n_docs,
        assignments,
        token_index,
        topic_word_counts: topic_word,
        doc_topic_counts: doc_topic,
        topic_totals: topic_total,
        annotation_tally: tally,
    })
}

/// Labels every in-vocabulary token with its posterior-mode topic;
/// out-of-vocabulary tokens (stop words, pruned terms) carry no topic.
pub fn annotate_corpus(
    tokens: &[Token],
    vocab: &Vocabulary,
    state: &LdaState,
) -> Result<Vec<AnnotatedToken>> {
    let (token_index, _, _) = in_vocab_positions(tokens, vocab);
    if token_index != state.token_index || state.n_terms != vocab.len() {
        return Err(Error::InvalidArgument(
            "annotation state was fitted on a different corpus or vocabulary".into(),
        ));
    }
    let mut out: Vec<AnnotatedToken> =
        tokens.iter().map(|t| AnnotatedToken { token: t.clone(), topic: None }).collect();
    for (i, &orig) in state.token_index.iter().enumerate() {
        out[orig].topic = Some(state.tally_mode(i));
    }
    Ok(out)
}
