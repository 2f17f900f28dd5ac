//! Incremental likelihood-ratio scorers.
//!
//! `likelihood_ratio` re-estimates and re-evaluates two full models per
//! candidate, which is O(stream) each. Permutation tests score thousands of
//! candidates per replicate, so these scorers compute the same number from
//! count aggregates: only positions following the history or priced by the
//! rescaled unigram/scaling constants contribute to the difference, and those
//! contributions close over a handful of sums collected in one pass.

use std::collections::BTreeSet;

use rustc_hash::FxHashMap;

use crate::backoff::{BackoffModel, ModelStructure};
use crate::error::{Error, Result};
use crate::num::Scalar;
use crate::stream::{pack_pair, unpack_pair, PhraseStream, Sym, SENTINEL};

#[derive(Debug, Clone)]
struct CandAgg<F> {
    /// Raw anchored count of the history followed by this word.
    n_hv: u32,
    /// Positions that reach the history in the expanded decode (not captured
    /// by a longer endowed history and not already endowed here).
    reach: u32,
    /// Summed base log contributions of the reached positions.
    sum_old: F,
    /// Reached positions that terminated in the unigram table.
    u_unigram: u32,
    /// Base scaling constants passed by reached positions, by history id.
    passed: Vec<(usize, u32)>,
    /// Subset of `passed` strictly longer than the tested history; these are
    /// still passed after the expansion.
    longer_passed: Vec<(usize, u32)>,
}

impl<F: Scalar> Default for CandAgg<F> {
    fn default() -> Self {
        Self {
            n_hv: 0,
            reach: 0,
            sum_old: F::zero(),
            u_unigram: 0,
            passed: Vec::new(),
            longer_passed: Vec::new(),
        }
    }
}

fn bump(list: &mut Vec<(usize, u32)>, id: usize) {
    match list.iter_mut().find(|(g, _)| *g == id) {
        Some((_, c)) => *c += 1,
        None => list.push((id, 1)),
    }
}

/// Scores every candidate continuation of one history against one stream.
/// Equal to `likelihood_ratio` up to float error for every candidate.
pub struct HistoryScorer<'m, F: Scalar> {
    model: &'m BackoffModel<F>,
    /// Base structure plus the tested history (empty endowed set when it was
    /// not endowed before); candidate scoring treats `v` as endowed there.
    e_structure: ModelStructure,
    h_id: usize,
    h_new: bool,
    n_h: u32,
    /// Continuations of the history already claimed by its base endowed set.
    h_base_endowed_n: u32,
    total_reach: u32,
    cand: FxHashMap<Sym, CandAgg<F>>,
    order: Vec<usize>,
}

impl<'m, F: Scalar> HistoryScorer<'m, F> {
    pub fn new(
        model: &'m BackoffModel<F>,
        stream: &PhraseStream,
        history: &[Sym],
        anchor: Option<usize>,
    ) -> Result<Self> {
        let base = model.structure();
        let mut e_structure = base.clone();
        let h_id = e_structure.add_history(history, anchor)?;
        let h_new = h_id >= base.n_hists();
        let base_endowed: Option<&BTreeSet<Sym>> = (!h_new).then(|| &base.hists()[h_id].endowed);

        let mut order: Vec<usize> = (0..e_structure.n_hists()).collect();
        order.sort_by_key(|&id| e_structure.hists()[id].words.len());

        let mut n_h = 0u32;
        let mut h_base_endowed_n = 0u32;
        let mut total_reach = 0u32;
        let mut cand: FxHashMap<Sym, CandAgg<F>> = FxHashMap::default();

        let items = stream.items();
        let mut chain = Vec::new();
        let mut doc_start = 0;
        for (i, &w) in items.iter().enumerate() {
            if w == SENTINEL {
                doc_start = i + 1;
                continue;
            }
            if !stream.matches_at(history, anchor, i) {
                continue;
            }
            n_h += 1;
            if base_endowed.is_some_and(|s| s.contains(&w)) {
                // Terminates at the history itself in both models.
                h_base_endowed_n += 1;
                continue;
            }
            let agg = cand.entry(w).or_default();
            agg.n_hv += 1;

            base.chain_at(stream, i, doc_start, &mut chain);
            let captured = chain.iter().any(|&g| {
                base.hists()[g].words.len() > history.len()
                    && base.hists()[g].endowed.contains(&w)
            });
            if captured {
                // A longer history claims this position in both models.
                continue;
            }
            total_reach += 1;
            agg.reach += 1;
            let mut old = F::zero();
            let mut terminated = false;
            for &g in &chain {
                if let Some(&p) = model.endowed_cond(g).get(&w) {
                    old = old + p.ln();
                    terminated = true;
                    break;
                }
                old = old + model.gamma_of(g).ln();
                bump(&mut agg.passed, g);
                if base.hists()[g].words.len() > history.len() {
                    bump(&mut agg.longer_passed, g);
                }
            }
            if !terminated {
                old = old + model.unigram_prob(w).ln();
                agg.u_unigram += 1;
            }
            agg.sum_old = agg.sum_old + old;
        }

        Ok(Self { model, e_structure, h_id, h_new, n_h, h_base_endowed_n, total_reach, cand, order })
    }

    pub fn n_h(&self) -> u32 {
        self.n_h
    }

    pub fn candidate_count(&self, v: Sym) -> u32 {
        self.cand.get(&v).map_or(0, |a| a.n_hv)
    }

    /// Follower words not already endowed under the history, with raw counts.
    pub fn candidates(&self) -> impl Iterator<Item = (Sym, u32)> + '_ {
        self.cand.iter().map(|(&v, a)| (v, a.n_hv))
    }

    /// Log-likelihood ratio of endowing the history with `v`. None when `v`
    /// never follows the history; -inf when the expanded model assigns some
    /// position probability zero.
    pub fn score(&self, v: Sym) -> Option<F> {
        let agg = self.cand.get(&v)?;
        let model = self.model;
        let q = F::from_count(agg.n_hv as usize) / F::from_count(self.n_h as usize);
        let u = agg.u_unigram;
        let m_v = model.backoff_count(v);
        let big_m = model.backoff_total();
        debug_assert!(u64::from(u) <= u64::from(m_v) && u64::from(u) < big_m);
        let m_e_v = m_v - u;
        let m_e_total = big_m - u64::from(u);

        // Expanded scaling constants, shortest history first: the unigram
        // rescale touches every one of them, and a back-off chain only ever
        // queries strictly shorter histories.
        let e_unigram = |w: Sym| -> F {
            let c = if w == v { m_e_v } else { model.backoff_count(w) };
            F::from_count(c as usize) / F::from_count(m_e_total as usize)
        };
        let e_cond_entry = |g: usize, w: Sym| -> Option<F> {
            if g == self.h_id && w == v {
                return Some(q);
            }
            if self.h_new && g == self.h_id {
                return None;
            }
            model.endowed_cond(g).get(&w).copied()
        };
        let n_e = self.e_structure.n_hists();
        let mut gamma_e = vec![F::one(); n_e];
        for &g in &self.order {
            // Exhaustion must match the estimator's integer rule: endowing v
            // can exhaust the tested history, while any other history keeps
            // the base verdict (expansion never changes its counts).
            let exhausted = if g == self.h_id {
                agg.n_hv + self.h_base_endowed_n == self.n_h
            } else {
                model.gamma_of(g) == F::zero()
            };
            if exhausted {
                gamma_e[g] = F::zero();
                continue;
            }
            let hist = &self.e_structure.hists()[g];
            let backoff = &hist.words[1..];
            let backoff_chain = self.e_structure.chain_for(backoff);
            let mut endowed_words: Vec<Sym> = hist.endowed.iter().copied().collect();
            if g == self.h_id {
                endowed_words.push(v);
            }
            let mut pi_sum = F::zero();
            let mut backoff_sum = F::zero();
            for w in endowed_words {
                pi_sum = pi_sum + e_cond_entry(g, w).expect("endowed entry");
                let mut scale = F::one();
                let mut p = None;
                for &gid in &backoff_chain {
                    if let Some(pe) = e_cond_entry(gid, w) {
                        p = Some(scale * pe);
                        break;
                    }
                    scale = scale * gamma_e[gid];
                }
                backoff_sum = backoff_sum + p.unwrap_or_else(|| scale * e_unigram(w));
            }
            let denom = F::one() - backoff_sum;
            if denom <= F::zero() {
                return Some(F::neg_infinity());
            }
            gamma_e[g] = (F::one() - pi_sum).max(F::zero()) / denom;
        }

        let mut delta = F::zero();
        if agg.reach > 0 {
            delta = delta + F::from_count(agg.reach as usize) * q.ln();
            for &(g, c) in &agg.longer_passed {
                delta = delta + F::from_count(c as usize) * gamma_e[g].ln();
            }
            delta = delta - agg.sum_old;
        }

        // Scaling-constant shift on positions whose decode is unchanged.
        for g in 0..n_e {
            let new_hist = g == self.h_id && self.h_new;
            let pass_base = if new_hist { self.total_reach } else { model.pass_count_of(g) };
            let overlap = if g == self.h_id {
                agg.reach
            } else {
                agg.passed.iter().find(|(id, _)| *id == g).map_or(0, |&(_, c)| c)
            };
            let unchanged = pass_base - overlap;
            if unchanged > 0 {
                let old_gamma = if new_hist { F::one() } else { model.gamma_of(g) };
                delta =
                    delta + F::from_count(unchanged as usize) * (gamma_e[g].ln() - old_gamma.ln());
            }
        }

        // Unigram rescale on unchanged back-off positions.
        if u > 0 {
            let other = big_m - u64::from(m_v);
            if other > 0 {
                let ratio = F::from_count(big_m as usize) / F::from_count(m_e_total as usize);
                delta = delta + F::from_count(other as usize) * ratio.ln();
            }
            if m_e_v > 0 {
                let new_p = F::from_count(m_e_v as usize) / F::from_count(m_e_total as usize);
                delta = delta
                    + F::from_count(m_e_v as usize) * (new_p.ln() - model.unigram_prob(v).ln());
            }
        }
        Some(delta)
    }
}

/// Batch scorer for flat structures: every endowed history is a single
/// unanchored word, as in corpus-wide bigram discovery. One O(stream) pass,
/// then O(structure) per candidate pair with memoized rescale corrections.
pub struct FlatScorer<F: Scalar> {
    n_tokens: u64,
    pairs: FxHashMap<u64, u32>,
    transitions: FxHashMap<Sym, u32>,
    hist_of: FxHashMap<Sym, usize>,
    endowed: Vec<BTreeSet<Sym>>,
    q_sum: Vec<F>,
    t_g: Vec<u64>,
    p_g: Vec<u32>,
    ln_gamma_b: Vec<F>,
    m: Vec<u32>,
    m_total: u64,
    /// x = n_uv -> sum over endowed histories of P_g * (ln gamma_e - ln
    /// gamma_b) under the rescale M -> M - x, assuming the candidate word is
    /// endowed nowhere; score() repairs the few histories where it is.
    corr: FxHashMap<u32, F>,
}

impl<F: Scalar> FlatScorer<F> {
    pub fn new(stream: &PhraseStream, structure: &ModelStructure) -> Result<Self> {
        let mut endowed = Vec::new();
        let mut hist_word = Vec::new();
        let mut hist_of = FxHashMap::default();
        for (id, h) in structure.hists().iter().enumerate() {
            if h.words.len() != 1 || h.anchor.is_some() {
                return Err(Error::InvalidArgument(
                    "flat scorer requires single-word unanchored histories".into(),
                ));
            }
            endowed.push(h.endowed.clone());
            hist_word.push(h.words[0]);
            hist_of.insert(h.words[0], id);
        }
        let n = structure.n_hists();
        let pairs = stream.pair_counts();
        let mut transitions: FxHashMap<Sym, u32> = FxHashMap::default();
        for (&key, &c) in &pairs {
            let (u, _) = unpack_pair(key);
            *transitions.entry(u).or_insert(0) += c;
        }
        let mut m: Vec<u32> = stream.unigram_counts();
        let mut n_h = vec![0u32; n];
        let mut endowed_pair_total = 0u64;
        for id in 0..n {
            let u = hist_word[id];
            let t = transitions.get(&u).copied().unwrap_or(0);
            if t == 0 {
                return Err(Error::HistoryUnseen { history: format!("#{u}") });
            }
            n_h[id] = t;
            for &w in &endowed[id] {
                let c = pairs.get(&pack_pair(u, w)).copied().unwrap_or(0);
                m[w as usize] -= c;
                endowed_pair_total += u64::from(c);
            }
        }
        let m_total = stream.n_tokens() as u64 - endowed_pair_total;

        let mut q_sum = vec![F::zero(); n];
        let mut t_g = vec![0u64; n];
        let mut p_g = vec![0u32; n];
        let mut ln_gamma_b = vec![F::zero(); n];
        for id in 0..n {
            let u = hist_word[id];
            let mut endowed_count = 0u32;
            for &w in &endowed[id] {
                let c = pairs.get(&pack_pair(u, w)).copied().unwrap_or(0);
                endowed_count += c;
                q_sum[id] = q_sum[id] + F::from_count(c as usize);
                t_g[id] += u64::from(m[w as usize]);
            }
            q_sum[id] = q_sum[id] / F::from_count(n_h[id] as usize);
            p_g[id] = n_h[id] - endowed_count;
            if p_g[id] == 0 {
                // Fully endowed history: gamma pins to zero and no realized
                // position in this stream multiplies it.
                ln_gamma_b[id] = F::neg_infinity();
                continue;
            }
            let denom =
                F::one() - F::from_count(t_g[id] as usize) / F::from_count(m_total as usize);
            if denom <= F::zero() {
                return Err(Error::BackoffMassExhausted { history: format!("#{u}") });
            }
            ln_gamma_b[id] = ((F::one() - q_sum[id]).max(F::zero()) / denom).ln();
        }

        Ok(Self {
            n_tokens: stream.n_tokens() as u64,
            pairs,
            transitions,
            hist_of,
            endowed,
            q_sum,
            t_g,
            p_g,
            ln_gamma_b,
            m,
            m_total,
            corr: FxHashMap::default(),
        })
    }

    pub fn pair_count(&self, u: Sym, v: Sym) -> u32 {
        self.pairs.get(&pack_pair(u, v)).copied().unwrap_or(0)
    }

    pub fn pairs(&self) -> &FxHashMap<u64, u32> {
        &self.pairs
    }

    pub fn transition_count(&self, u: Sym) -> u32 {
        self.transitions.get(&u).copied().unwrap_or(0)
    }

    pub fn is_endowed(&self, u: Sym, v: Sym) -> bool {
        self.hist_of.get(&u).is_some_and(|&id| self.endowed[id].contains(&v))
    }

    pub fn n_tokens(&self) -> u64 {
        self.n_tokens
    }

    /// ln gamma of endowed history `id` after a rescale that removes `x`
    /// back-off positions of the candidate word; `v_here` marks the candidate
    /// word as a member of this history's endowed set.
    fn ln_gamma_e(&self, id: usize, x: u32, v_here: bool) -> F {
        let t = self.t_g[id] - if v_here { u64::from(x) } else { 0 };
        let m_e = self.m_total - u64::from(x);
        let denom = F::one() - F::from_count(t as usize) / F::from_count(m_e as usize);
        if denom <= F::zero() {
            return F::neg_infinity();
        }
        ((F::one() - self.q_sum[id]).max(F::zero()) / denom).ln()
    }

    fn corr_for(&mut self, x: u32) -> F {
        if let Some(&c) = self.corr.get(&x) {
            return c;
        }
        let mut total = F::zero();
        for id in 0..self.p_g.len() {
            if self.p_g[id] > 0 {
                total = total
                    + F::from_count(self.p_g[id] as usize)
                        * (self.ln_gamma_e(id, x, false) - self.ln_gamma_b[id]);
            }
        }
        self.corr.insert(x, total);
        total
    }

    /// Log-likelihood ratio for endowing `S_u` with `v`. None when the pair
    /// never occurs in a document or is already endowed.
    pub fn score(&mut self, u: Sym, v: Sym) -> Option<F> {
        let x = self.pair_count(u, v);
        if x == 0 || self.is_endowed(u, v) {
            return None;
        }
        let n_h_u = self.transitions[&u];
        let q = F::from_count(x as usize) / F::from_count(n_h_u as usize);
        let m_v = self.m[v as usize];
        debug_assert!(x <= m_v, "every u->v position backs off in the flat base");
        let m_e_v = m_v - x;
        let m_e_total = self.m_total - u64::from(x);
        let big_m = self.m_total;

        let u_id = self.hist_of.get(&u).copied();
        let ln_gamma_b_u = u_id.map_or(F::zero(), |id| self.ln_gamma_b[id]);
        let ln_pi_b_v = (F::from_count(m_v as usize) / F::from_count(big_m as usize)).ln();

        // Changed positions: all x of them backed off through gamma_u to the
        // unigram before, and pay the new conditional afterwards.
        let mut delta = F::from_count(x as usize) * (q.ln() - ln_gamma_b_u - ln_pi_b_v);

        // The expanded history's own scaling constant.
        let (p_u, q_sum_u, t_u) = match u_id {
            Some(id) => (self.p_g[id], self.q_sum[id], self.t_g[id]),
            None => (n_h_u, F::zero(), 0),
        };
        let unchanged_u = p_u - x;
        if unchanged_u > 0 {
            let numer = (F::one() - q_sum_u - q).max(F::zero());
            let t_e = t_u + u64::from(m_e_v);
            let denom =
                F::one() - F::from_count(t_e as usize) / F::from_count(m_e_total as usize);
            if denom <= F::zero() {
                return Some(F::neg_infinity());
            }
            let ln_gamma_e_u = (numer / denom).ln();
            delta = delta + F::from_count(unchanged_u as usize) * (ln_gamma_e_u - ln_gamma_b_u);
        }

        // Every other endowed history's constant shifts through the rescale.
        let mut shift = self.corr_for(x);
        if let Some(id) = u_id {
            if self.p_g[id] > 0 {
                shift = shift
                    - F::from_count(self.p_g[id] as usize)
                        * (self.ln_gamma_e(id, x, false) - self.ln_gamma_b[id]);
            }
        }
        for id in 0..self.p_g.len() {
            if Some(id) == u_id || self.p_g[id] == 0 || !self.endowed[id].contains(&v) {
                continue;
            }
            let wrong = self.ln_gamma_e(id, x, false);
            let right = self.ln_gamma_e(id, x, true);
            shift = shift + F::from_count(self.p_g[id] as usize) * (right - wrong);
        }
        delta = delta + shift;

        // Unigram rescale on unchanged back-off positions.
        let other = big_m - u64::from(m_v);
        if other > 0 {
            let ratio = F::from_count(big_m as usize) / F::from_count(m_e_total as usize);
            delta = delta + F::from_count(other as usize) * ratio.ln();
        }
        if m_e_v > 0 {
            let new_p = F::from_count(m_e_v as usize) / F::from_count(m_e_total as usize);
            delta = delta + F::from_count(m_e_v as usize) * (new_p.ln() - ln_pi_b_v);
        }
        Some(delta)
    }
}
