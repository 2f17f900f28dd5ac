//! Synthetic corpora with planted collocations. A Chinese restaurant process
//! over vocabulary types is embellished with bigram types: a new type is,
//! with some probability, a pair of two existing singleton types, and drawing
//! it emits both component tokens. The emitted stream carries no markup, so
//! discovery methods can be scored against the recorded truth.

use rand::Rng;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Scalar;
use crate::rng::seeded_rng;
use crate::stream::{pack_pair, PhraseStream, Sym};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig<F> {
    /// New-type rate: a fresh type appears with probability
    /// crp_alpha / (crp_alpha + draws so far).
    pub crp_alpha: F,
    /// Probability that a fresh type is a bigram of two existing singletons.
    pub beta_bigram: F,
    pub n_tokens: usize,
    pub seed: u64,
}

impl<F: Scalar> SimConfig<F> {
    pub fn validate(&self) -> Result<()> {
        let alpha = self.crp_alpha.to_f64().unwrap_or(f64::NAN);
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("crp alpha {alpha} must be positive")));
        }
        let beta = self.beta_bigram.to_f64().unwrap_or(f64::NAN);
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::InvalidArgument(format!("bigram probability {beta} outside [0, 1]")));
        }
        if self.n_tokens == 0 {
            return Err(Error::InvalidArgument("n_tokens must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrueBigram {
    pub first: Sym,
    pub second: Sym,
    /// Occurrences of the adjacent pair in the emitted stream, which is also
    /// how found bigrams are weighted when scoring.
    pub count: u32,
}

#[derive(Debug, Clone)]
pub struct SimTruth {
    pub stream: PhraseStream,
    pub true_bigrams: Vec<TrueBigram>,
}

impl SimTruth {
    pub fn true_pairs(&self) -> FxHashMap<u64, u32> {
        self.true_bigrams.iter().map(|b| (pack_pair(b.first, b.second), b.count)).collect()
    }
}

/// Tokens are plain word symbols; this names them for serialized corpora.
pub fn surface_form(sym: Sym) -> String {
    format!("w{sym}")
}

enum TypeKind {
    Singleton(Sym),
    Bigram(Sym, Sym),
}

pub fn simulate_corpus<F: Scalar>(config: &SimConfig<F>) -> Result<SimTruth> {
    config.validate()?;
    let alpha = config.crp_alpha.to_f64().expect("validated");
    let beta = config.beta_bigram.to_f64().expect("validated");
    let mut rng = seeded_rng(config.seed);

    let mut types: Vec<TypeKind> = Vec::new();
    // One entry per type-draw; uniform indexing realizes the rich-get-richer
    // weights. The singleton-only copy backs the final-slot draw below.
    let mut draws: Vec<u32> = Vec::new();
    let mut singleton_draws: Vec<u32> = Vec::new();
    let mut singleton_syms: Vec<Sym> = Vec::new();
    let mut n_syms: Sym = 0;
    let mut items: Vec<Sym> = Vec::with_capacity(config.n_tokens);
    let mut planted: Vec<(Sym, Sym)> = Vec::new();

    while items.len() < config.n_tokens {
        let last_slot = config.n_tokens - items.len() == 1;
        let type_id = if last_slot {
            // Condition the draw on emitting exactly one token: existing
            // singletons keep their counts, the new-type mass keeps only its
            // singleton share.
            let new_mass = alpha * (1.0 - beta);
            let z = new_mass + singleton_draws.len() as f64;
            if z > 0.0 && rng.gen::<f64>() * z >= new_mass {
                singleton_draws[rng.gen_range(0..singleton_draws.len())]
            } else {
                new_singleton(&mut types, &mut singleton_syms, &mut n_syms)
            }
        } else {
            let z = alpha + draws.len() as f64;
            if rng.gen::<f64>() * z >= alpha {
                draws[rng.gen_range(0..draws.len())]
            } else if singleton_syms.len() >= 2 && rng.gen::<f64>() < beta {
                let a = rng.gen_range(0..singleton_syms.len());
                let mut b = rng.gen_range(0..singleton_syms.len() - 1);
                if b >= a {
                    b += 1;
                }
                let pair = (singleton_syms[a], singleton_syms[b]);
                planted.push(pair);
                types.push(TypeKind::Bigram(pair.0, pair.1));
                (types.len() - 1) as u32
            } else {
                // Covers the fallback before two singleton types exist.
                new_singleton(&mut types, &mut singleton_syms, &mut n_syms)
            }
        };
        draws.push(type_id);
        match types[type_id as usize] {
            TypeKind::Singleton(s) => {
                singleton_draws.push(type_id);
                items.push(s);
            }
            TypeKind::Bigram(u, v) => {
                items.push(u);
                items.push(v);
            }
        }
    }
    debug_assert_eq!(items.len(), config.n_tokens);

    let stream = PhraseStream::unanchored(items, n_syms as usize);
    let pair_counts = stream.pair_counts();
    planted.sort_unstable();
    planted.dedup();
    let true_bigrams = planted
        .into_iter()
        .map(|(first, second)| TrueBigram {
            first,
            second,
            count: pair_counts.get(&pack_pair(first, second)).copied().unwrap_or(0),
        })
        .collect();
    Ok(SimTruth { stream, true_bigrams })
}

fn new_singleton(types: &mut Vec<TypeKind>, singleton_syms: &mut Vec<Sym>, n_syms: &mut Sym) -> u32 {
    let sym = *n_syms;
    *n_syms += 1;
    singleton_syms.push(sym);
    types.push(TypeKind::Singleton(sym));
    (types.len() - 1) as u32
}

/// Frequency-weighted precision and recall: each bigram counts with its
/// stream occurrence count. An empty found set has precision 1 by
/// convention; an empty truth set likewise yields recall 1.
pub fn weighted_precision_recall<F: Scalar>(found: &[(Sym, Sym)], truth: &SimTruth) -> (F, F) {
    let pair_counts = truth.stream.pair_counts();
    let true_pairs = truth.true_pairs();
    let mut seen: Vec<(Sym, Sym)> = found.to_vec();
    seen.sort_unstable();
    seen.dedup();

    let mut found_mass = 0u64;
    let mut hit_mass = 0u64;
    for &(u, v) in &seen {
        let key = pack_pair(u, v);
        let count = u64::from(pair_counts.get(&key).copied().unwrap_or(0));
        found_mass += count;
        if true_pairs.contains_key(&key) {
            hit_mass += count;
        }
    }
    let true_mass: u64 = true_pairs.values().map(|&c| u64::from(c)).sum();

    let ratio = |num: u64, den: u64| {
        if den == 0 {
            F::one()
        } else {
            F::from_count(num as usize) / F::from_count(den as usize)
        }
    };
    (ratio(hit_mass, found_mass), ratio(hit_mass, true_mass))
}

pub fn f_measure<F: Scalar>(precision: F, recall: F) -> F {
    if precision + recall == F::zero() {
        F::zero()
    } else {
        F::from_count(2) * precision * recall / (precision + recall)
    }
}
