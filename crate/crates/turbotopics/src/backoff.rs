use std::collections::{BTreeMap, BTreeSet};

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Scalar;
use crate::stream::{PhraseStream, Sym, SENTINEL};

/// Sparsity pattern of a back-off model: which histories carry endowed
/// continuation sets. Parameters live in `BackoffModel`; the structure is
/// what grows during phrase discovery and what permutation replicates share.
#[derive(Debug, Clone, Default)]
pub struct ModelStructure {
    hists: Vec<HistEntry>,
    index: FxHashMap<Box<[Sym]>, usize>,
    max_len: usize,
}

#[derive(Debug, Clone)]
pub struct HistEntry {
    pub words: Vec<Sym>,
    /// Offset of the token that must carry the topic label for an occurrence
    /// to count. None for unanchored analyses.
    pub anchor: Option<usize>,
    pub endowed: BTreeSet<Sym>,
}

impl ModelStructure {
    /// Pure unigram model: no endowed histories at all.
    pub fn unigram() -> Self {
        Self::default()
    }

    pub fn endow(&mut self, words: &[Sym], anchor: Option<usize>, v: Sym) -> Result<()> {
        let id = self.add_history(words, anchor)?;
        if !self.hists[id].endowed.insert(v) {
            return Err(Error::InvalidArgument(format!(
                "word #{v} already endowed under {}",
                phrase_label(words)
            )));
        }
        Ok(())
    }

    /// Registers a history without endowing anything; an empty endowed set is
    /// transparent (gamma 1), which the incremental scorers rely on.
    pub fn add_history(&mut self, words: &[Sym], anchor: Option<usize>) -> Result<usize> {
        if words.is_empty() {
            return Err(Error::InvalidArgument("empty history".into()));
        }
        if let Some(off) = anchor {
            if off >= words.len() {
                return Err(Error::InvalidArgument(format!(
                    "anchor offset {off} outside history of length {}",
                    words.len()
                )));
            }
        }
        match self.index.get(words) {
            Some(&id) => {
                if self.hists[id].anchor != anchor {
                    return Err(Error::InvalidArgument(format!(
                        "history {} already present with a different anchor",
                        phrase_label(words)
                    )));
                }
                Ok(id)
            }
            None => {
                let id = self.hists.len();
                self.hists.push(HistEntry {
                    words: words.to_vec(),
                    anchor,
                    endowed: BTreeSet::new(),
                });
                self.index.insert(words.to_vec().into_boxed_slice(), id);
                self.max_len = self.max_len.max(words.len());
                Ok(id)
            }
        }
    }

    pub fn find(&self, words: &[Sym]) -> Option<usize> {
        self.index.get(words).copied()
    }

    pub fn is_endowed(&self, words: &[Sym], v: Sym) -> bool {
        self.find(words).is_some_and(|id| self.hists[id].endowed.contains(&v))
    }

    pub fn hists(&self) -> &[HistEntry] {
        &self.hists
    }

    pub fn n_hists(&self) -> usize {
        self.hists.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hists.is_empty()
    }

    pub fn max_len(&self) -> usize {
        self.max_len
    }

    /// Every modeled phrase `h ++ [v]` with its anchor offset. These are the
    /// units a permutation must freeze.
    pub fn phrases(&self) -> Vec<(Vec<Sym>, Option<usize>)> {
        let mut out = Vec::new();
        for h in &self.hists {
            for &v in &h.endowed {
                let mut phrase = h.words.clone();
                phrase.push(v);
                out.push((phrase, h.anchor));
            }
        }
        out
    }

    /// Endowed suffixes of the window ending at `end` (exclusive), longest
    /// first. Matching respects document boundaries and anchor flags, so this
    /// is the realized back-off chain at a stream position.
    pub fn chain_at(&self, stream: &PhraseStream, end: usize, doc_start: usize, out: &mut Vec<usize>) {
        out.clear();
        let longest = self.max_len.min(end - doc_start);
        let items = stream.items();
        for len in (1..=longest).rev() {
            if let Some(&id) = self.index.get(&items[end - len..end]) {
                let h = &self.hists[id];
                let ok = match h.anchor {
                    Some(off) => stream.anchors()[end - len + off],
                    None => true,
                };
                if ok {
                    out.push(id);
                }
            }
        }
    }

    /// Abstract back-off chain for a context given as plain words (no anchor
    /// information), longest suffix first. Used by Eq.-style conditional
    /// queries and scaling-constant denominators.
    pub fn chain_for(&self, context: &[Sym]) -> Vec<usize> {
        let mut out = Vec::new();
        let longest = self.max_len.min(context.len());
        for len in (1..=longest).rev() {
            if let Some(&id) = self.index.get(&context[context.len() - len..]) {
                out.push(id);
            }
        }
        out
    }
}

/// Back-off n-gram model with sparse endowed sets, estimated from a token
/// stream by normalized counts: conditionals are n_hv / n_h, the unigram
/// table is discounted to the positions the endowed conditionals do not
/// generate. n_h counts history occurrences with a continuation inside the
/// same document, which is what the transition likelihood maximizes.
#[derive(Debug, Clone)]
pub struct BackoffModel<F: Scalar = f64> {
    structure: ModelStructure,
    cond: Vec<BTreeMap<Sym, F>>,
    n_h: Vec<u32>,
    n_hv: Vec<BTreeMap<Sym, u32>>,
    gamma: Vec<F>,
    /// Decode positions that pass through each history's scaling constant.
    pass_count: Vec<u32>,
    unigram: Vec<F>,
    /// Occurrences of each word not generated through an endowed conditional.
    m: Vec<u32>,
    m_total: u64,
    word_counts: Vec<u32>,
    n_tokens: u64,
}

impl<F: Scalar> BackoffModel<F> {
    pub fn estimate(structure: &ModelStructure, stream: &PhraseStream) -> Result<Self> {
        if stream.n_tokens() == 0 {
            return Err(Error::EmptyCorpus);
        }
        let n_hists = structure.n_hists();
        let mut n_h = vec![0u32; n_hists];
        let mut n_hv: Vec<BTreeMap<Sym, u32>> = vec![BTreeMap::new(); n_hists];

        // Single pass: every anchor-valid history match ending at a
        // continuation position bumps that history's raw counts, and the
        // longest match that endows the continuation claims the position;
        // everything else is a back-off (unigram) position.
        let items = stream.items();
        let mut m = vec![0u32; stream.n_symbols()];
        let mut pass_count = vec![0u32; n_hists];
        let mut chain = Vec::new();
        let mut doc_start = 0;
        for (i, &w) in items.iter().enumerate() {
            if w == SENTINEL {
                doc_start = i + 1;
                continue;
            }
            structure.chain_at(stream, i, doc_start, &mut chain);
            let mut endowed_here = false;
            let mut terminated = false;
            for &hid in &chain {
                n_h[hid] += 1;
                let endows = structure.hists()[hid].endowed.contains(&w);
                if endows {
                    *n_hv[hid].entry(w).or_insert(0) += 1;
                }
                if !terminated {
                    if endows {
                        endowed_here = true;
                        terminated = true;
                    } else {
                        pass_count[hid] += 1;
                    }
                }
            }
            if !endowed_here {
                m[w as usize] += 1;
            }
        }

        let mut cond: Vec<BTreeMap<Sym, F>> = vec![BTreeMap::new(); n_hists];
        for (id, hist) in structure.hists().iter().enumerate() {
            if n_h[id] == 0 {
                return Err(Error::HistoryUnseen { history: phrase_label(&hist.words) });
            }
            for &v in &hist.endowed {
                let c = *n_hv[id].entry(v).or_insert(0);
                cond[id].insert(v, F::from_count(c as usize) / F::from_count(n_h[id] as usize));
            }
        }
        let m_total: u64 = m.iter().map(|&c| u64::from(c)).sum();
        debug_assert!(m_total > 0, "first token of each document always backs off");
        let unigram: Vec<F> = m
            .iter()
            .map(|&c| F::from_count(c as usize) / F::from_count(m_total as usize))
            .collect();

        let mut model = Self {
            structure: structure.clone(),
            cond,
            n_h,
            n_hv,
            gamma: vec![F::one(); n_hists],
            pass_count,
            unigram,
            m,
            m_total,
            word_counts: stream.unigram_counts(),
            n_tokens: stream.n_tokens() as u64,
        };

        // Scaling constants bottom-up: a history's back-off distribution only
        // involves strictly shorter histories.
        let mut order: Vec<usize> = (0..n_hists).collect();
        order.sort_by_key(|&id| structure.hists()[id].words.len());
        for id in order {
            let hist = &structure.hists()[id];
            let endowed_total: u32 = model.n_hv[id].values().copied().sum();
            if endowed_total == model.n_h[id] {
                // The endowed set owns every continuation, so nothing ever
                // passes through this scaling constant; it pins to zero.
                model.gamma[id] = F::zero();
                continue;
            }
            let pi_sum: F = model.cond[id].values().copied().sum();
            let numer = (F::one() - pi_sum).max(F::zero());
            let backoff = &hist.words[1..];
            let mut backoff_sum = F::zero();
            for &v in &hist.endowed {
                backoff_sum = backoff_sum + model.conditional(backoff, v);
            }
            let denom = F::one() - backoff_sum;
            if denom <= F::zero() {
                return Err(Error::BackoffMassExhausted { history: phrase_label(&hist.words) });
            }
            model.gamma[id] = numer / denom;
        }
        Ok(model)
    }

    pub fn structure(&self) -> &ModelStructure {
        &self.structure
    }

    /// p(v | context), walking the abstract suffix chain: endowed entries pay
    /// their conditional, everything else scales by gamma and backs off until
    /// the unigram table. Unknown words get probability zero; no smoothing.
    pub fn conditional(&self, context: &[Sym], v: Sym) -> F {
        let mut scale = F::one();
        for hid in self.structure.chain_for(context) {
            if let Some(&p) = self.cond[hid].get(&v) {
                return scale * p;
            }
            scale = scale * self.gamma[hid];
        }
        scale * self.unigram.get(v as usize).copied().unwrap_or_else(F::zero)
    }

    /// Scaling constant for an endowed history; 1 for any other history
    /// (an empty endowed set removes nothing from the back-off mass).
    pub fn scaling_gamma(&self, words: &[Sym]) -> F {
        match self.structure.find(words) {
            Some(id) => self.gamma[id],
            None => F::one(),
        }
    }

    /// Total stream log likelihood under longest-match decoding.
    pub fn log_likelihood(&self, stream: &PhraseStream) -> Result<F> {
        let items = stream.items();
        let mut total = F::zero();
        let mut chain = Vec::new();
        let mut doc_start = 0;
        for (i, &w) in items.iter().enumerate() {
            if w == SENTINEL {
                doc_start = i + 1;
                continue;
            }
            self.structure.chain_at(stream, i, doc_start, &mut chain);
            let mut contribution = F::zero();
            let mut terminated = false;
            for &hid in &chain {
                if let Some(&p) = self.cond[hid].get(&w) {
                    if p <= F::zero() {
                        return Err(zero_prob(i, w));
                    }
                    contribution = contribution + p.ln();
                    terminated = true;
                    break;
                }
                let g = self.gamma[hid];
                if g <= F::zero() {
                    return Err(zero_prob(i, w));
                }
                contribution = contribution + g.ln();
            }
            if !terminated {
                let p = self.unigram.get(w as usize).copied().unwrap_or_else(F::zero);
                if p <= F::zero() {
                    return Err(zero_prob(i, w));
                }
                contribution = contribution + p.ln();
            }
            total = total + contribution;
        }
        Ok(total)
    }

    pub fn hist_count(&self, id: usize) -> u32 {
        self.n_h[id]
    }

    pub fn endowed_count(&self, id: usize, v: Sym) -> u32 {
        self.n_hv[id].get(&v).copied().unwrap_or(0)
    }

    pub fn endowed_cond(&self, id: usize) -> &BTreeMap<Sym, F> {
        &self.cond[id]
    }

    pub fn gamma_of(&self, id: usize) -> F {
        self.gamma[id]
    }

    pub fn pass_count_of(&self, id: usize) -> u32 {
        self.pass_count[id]
    }

    pub fn unigram_prob(&self, v: Sym) -> F {
        self.unigram.get(v as usize).copied().unwrap_or_else(F::zero)
    }

    pub fn backoff_count(&self, v: Sym) -> u32 {
        self.m.get(v as usize).copied().unwrap_or(0)
    }

    pub fn backoff_total(&self) -> u64 {
        self.m_total
    }

    pub fn word_count(&self, v: Sym) -> u32 {
        self.word_counts.get(v as usize).copied().unwrap_or(0)
    }

    pub fn n_tokens(&self) -> u64 {
        self.n_tokens
    }
}

/// Exact log-likelihood ratio for expanding `S_h` by `v`: both models are
/// re-estimated from the stream and evaluated in full. This is the reference
/// the incremental scorers must reproduce.
pub fn likelihood_ratio<F: Scalar>(
    base: &BackoffModel<F>,
    history: &[Sym],
    anchor: Option<usize>,
    v: Sym,
    stream: &PhraseStream,
) -> Result<ExpansionScore<F>> {
    if base.structure.is_endowed(history, v) {
        return Err(Error::InvalidArgument(format!(
            "word #{v} already endowed under {}",
            phrase_label(history)
        )));
    }
    let mut expanded_structure = base.structure.clone();
    expanded_structure.endow(history, anchor, v)?;
    let expanded = BackoffModel::<F>::estimate(&expanded_structure, stream)?;
    let lr = expanded.log_likelihood(stream)? - base.log_likelihood(stream)?;
    let id = expanded_structure.find(history).expect("just endowed");
    Ok(ExpansionScore {
        history: history.to_vec(),
        anchor,
        candidate: v,
        lr,
        n_h: expanded.n_h[id],
        n_hv: expanded.n_hv[id][&v],
    })
}

/// One scored candidate expansion (history, continuation word).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionScore<F> {
    pub history: Vec<Sym>,
    pub anchor: Option<usize>,
    pub candidate: Sym,
    pub lr: F,
    pub n_h: u32,
    pub n_hv: u32,
}

pub(crate) fn zero_prob(position: usize, w: Sym) -> Error {
    Error::ZeroProbability { position, word: format!("#{w}") }
}

pub(crate) fn phrase_label(words: &[Sym]) -> String {
    let parts: Vec<String> = words.iter().map(|s| format!("#{s}")).collect();
    parts.join(" ")
}

/// Serialization form: endowed histories keyed by space-joined surface words,
/// with conditionals, counts, the scaling constants, and the unigram table.
#[derive(Debug, Serialize, Deserialize)]
pub struct ModelDump<F> {
    pub histories: BTreeMap<String, HistoryDump<F>>,
    pub unigram: BTreeMap<String, F>,
    pub n_tokens: u64,
    pub backoff_positions: u64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct HistoryDump<F> {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub anchor: Option<usize>,
    pub gamma: F,
    pub n_h: u32,
    pub endowed: BTreeMap<String, EndowedDump<F>>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EndowedDump<F> {
    pub prob: F,
    pub count: u32,
}

impl<F: Scalar> BackoffModel<F> {
    pub fn dump(&self, resolve: impl Fn(Sym) -> String) -> ModelDump<F> {
        let mut histories = BTreeMap::new();
        for (id, hist) in self.structure.hists().iter().enumerate() {
            let words: Vec<String> = hist.words.iter().map(|&s| resolve(s)).collect();
            let endowed = hist
                .endowed
                .iter()
                .map(|&v| {
                    (resolve(v), EndowedDump { prob: self.cond[id][&v], count: self.n_hv[id][&v] })
                })
                .collect();
            histories.insert(
                words.join(" "),
                HistoryDump {
                    anchor: hist.anchor,
                    gamma: self.gamma[id],
                    n_h: self.n_h[id],
                    endowed,
                },
            );
        }
        let unigram = self
            .m
            .iter()
            .enumerate()
            .filter(|&(_, &c)| c > 0)
            .map(|(s, _)| (resolve(s as Sym), self.unigram[s]))
            .collect();
        ModelDump { histories, unigram, n_tokens: self.n_tokens, backoff_positions: self.m_total }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stream::PhraseStream;

    fn stream(items: &[Sym]) -> PhraseStream {
        let n = items.iter().filter(|&&s| s != SENTINEL).map(|&s| s + 1).max().unwrap_or(0);
        PhraseStream::unanchored(items.to_vec(), n as usize)
    }

    const A: Sym = 0;
    const B: Sym = 1;
    const C: Sym = 2;
    const X: Sym = 3;

    #[test]
    fn deterministic_bigram_has_unit_probabilities() {
        let s = stream(&[A, B, A, B]);
        let mut st = ModelStructure::unigram();
        st.endow(&[A], None, B).unwrap();
        let model = BackoffModel::<f64>::estimate(&st, &s).unwrap();
        assert_eq!(model.conditional(&[A], B), 1.0);
        assert_eq!(model.scaling_gamma(&[A]), 0.0);
        assert_eq!(model.unigram_prob(A), 1.0);
        assert_eq!(model.unigram_prob(B), 0.0);
        assert_eq!(model.log_likelihood(&s).unwrap(), 0.0);
    }

    #[test]
    fn discounted_unigram_uses_backoff_positions_only() {
        // a b a b a c: two endowed draws of b after a; one a->c back-off.
        let s = stream(&[A, B, A, B, A, C]);
        let mut st = ModelStructure::unigram();
        st.endow(&[A], None, B).unwrap();
        let model = BackoffModel::<f64>::estimate(&st, &s).unwrap();
        // Positions 0, 2, 4 (a) and 5 (c) back off; b never does.
        assert_eq!(model.backoff_count(A), 3);
        assert_eq!(model.backoff_count(B), 0);
        assert_eq!(model.backoff_count(C), 1);
        assert_eq!(model.backoff_total(), 4);
        assert_eq!(model.unigram_prob(A), 0.75);
        assert_eq!(model.conditional(&[A], B), 2.0 / 3.0);
        // gamma_a = (1 - 2/3) / (1 - 0) = 1/3.
        assert!((model.scaling_gamma(&[A]) - 1.0 / 3.0).abs() < 1e-12);
        // p(c | a) = gamma_a * pi_c.
        assert!((model.conditional(&[A], C) - (1.0 / 3.0) * 0.25).abs() < 1e-12);
    }

    #[test]
    fn conditionals_normalize() {
        let s = stream(&[A, B, C, A, B, A, C, B, B, A, SENTINEL, C, A, B, C, C, A]);
        let mut st = ModelStructure::unigram();
        st.endow(&[A], None, B).unwrap();
        st.endow(&[C], None, A).unwrap();
        st.endow(&[A, B], None, C).unwrap();
        let model = BackoffModel::<f64>::estimate(&st, &s).unwrap();
        for context in [&[][..], &[A][..], &[C][..], &[A, B][..], &[B, C][..], &[C, A, B][..]] {
            let total: f64 = (0..3).map(|v| model.conditional(context, v)).sum();
            assert!((total - 1.0).abs() < 1e-12, "context {context:?} sums to {total}");
        }
    }

    #[test]
    fn unseen_history_is_an_error() {
        let s = stream(&[A, B, A, B]);
        let mut st = ModelStructure::unigram();
        st.endow(&[C], None, B).unwrap();
        assert!(matches!(
            BackoffModel::<f64>::estimate(&st, &s),
            Err(Error::HistoryUnseen { .. })
        ));
    }

    #[test]
    fn fully_endowed_histories_pin_gamma_to_zero() {
        // pi(b|a) = pi(b|x,a) = 1: both endowed sets own every continuation,
        // which is a valid model whose scaling constants vanish.
        let s = stream(&[X, A, B, A, B]);
        let mut st = ModelStructure::unigram();
        st.endow(&[A], None, B).unwrap();
        st.endow(&[X, A], None, B).unwrap();
        let model = BackoffModel::<f64>::estimate(&st, &s).unwrap();
        assert_eq!(model.scaling_gamma(&[A]), 0.0);
        assert_eq!(model.scaling_gamma(&[X, A]), 0.0);
        assert!(model.log_likelihood(&s).unwrap().is_finite());
        let eval = stream(&[A, C]);
        assert!(matches!(
            model.log_likelihood(&eval),
            Err(Error::ZeroProbability { position: 1, .. })
        ));
    }

    #[test]
    fn zero_probability_token_is_located() {
        let train = stream(&[A, B, A, B]);
        let st = ModelStructure::unigram();
        let model = BackoffModel::<f64>::estimate(&st, &train).unwrap();
        let eval = stream(&[A, C]);
        match model.log_likelihood(&eval) {
            Err(Error::ZeroProbability { position, .. }) => assert_eq!(position, 1),
            other => panic!("expected zero-probability error, got {other:?}"),
        }
    }

    #[test]
    fn repeated_bigram_scores_positive_lr() {
        // "a b" planted among singleton filler.
        let mut items = Vec::new();
        for i in 0..6 {
            items.extend_from_slice(&[A, B]);
            items.push(10 + i);
        }
        let s = PhraseStream::unanchored(items, 16);
        let base = BackoffModel::<f64>::estimate(&ModelStructure::unigram(), &s).unwrap();
        let score = likelihood_ratio(&base, &[A], None, B, &s).unwrap();
        assert!(score.lr > 0.0, "lr = {}", score.lr);
        assert_eq!(score.n_h, 6);
        assert_eq!(score.n_hv, 6);
    }

    #[test]
    fn anchored_counts_exclude_unlabeled_occurrences() {
        let items = vec![A, B, A, B, A, B];
        let anchors = vec![true, false, true, false, false, false];
        let s = PhraseStream::new(items, anchors, 2);
        let mut st = ModelStructure::unigram();
        st.endow(&[A], Some(0), B).unwrap();
        let model = BackoffModel::<f64>::estimate(&st, &s).unwrap();
        let id = st.find(&[A]).unwrap();
        assert_eq!(model.hist_count(id), 2);
        assert_eq!(model.endowed_count(id, B), 2);
        // The unlabeled "a b" at positions 4-5 backs off.
        assert_eq!(model.backoff_count(B), 1);
    }
}
