use rustc_hash::FxHashMap;

pub type Sym = u32;

/// Document boundary marker. Never interned, never joins an n-gram.
pub const SENTINEL: Sym = Sym::MAX;

/// Bidirectional string <-> symbol table. Ids are dense and assigned in
/// first-seen order, so every structure keyed by `Sym` is deterministic.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    words: Vec<String>,
    index: FxHashMap<String, Sym>,
}

impl Lexicon {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn intern(&mut self, word: &str) -> Sym {
        if let Some(&sym) = self.index.get(word) {
            return sym;
        }
        let sym = Sym::try_from(self.words.len()).expect("lexicon overflow");
        assert!(sym != SENTINEL, "lexicon overflow");
        self.words.push(word.to_owned());
        self.index.insert(word.to_owned(), sym);
        sym
    }

    pub fn get(&self, word: &str) -> Option<Sym> {
        self.index.get(word).copied()
    }

    pub fn resolve(&self, sym: Sym) -> &str {
        &self.words[sym as usize]
    }

    pub fn resolve_phrase(&self, phrase: &[Sym]) -> String {
        let words: Vec<&str> = phrase.iter().map(|&s| self.resolve(s)).collect();
        words.join(" ")
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

/// Flat token stream for phrase analysis. `items` holds interned symbols with
/// `SENTINEL` between documents; `anchors[i]` marks tokens carrying the topic
/// label under study (all true for unanchored analyses). Invariant:
/// `items.len() == anchors.len()` and anchors at sentinels are false.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhraseStream {
    items: Vec<Sym>,
    anchors: Vec<bool>,
    n_symbols: usize,
    n_tokens: usize,
}

impl PhraseStream {
    pub fn new(items: Vec<Sym>, anchors: Vec<bool>, n_symbols: usize) -> Self {
        assert_eq!(items.len(), anchors.len());
        let n_tokens = items.iter().filter(|&&s| s != SENTINEL).count();
        debug_assert!(items
            .iter()
            .zip(&anchors)
            .all(|(&s, &a)| if s == SENTINEL { !a } else { (s as usize) < n_symbols }));
        Self { items, anchors, n_symbols, n_tokens }
    }

    pub fn unanchored(items: Vec<Sym>, n_symbols: usize) -> Self {
        let anchors = items.iter().map(|&s| s != SENTINEL).collect();
        Self::new(items, anchors, n_symbols)
    }

    /// One sentinel between consecutive documents, none at the ends.
    pub fn from_documents(docs: &[Vec<Sym>], n_symbols: usize) -> Self {
        let mut items = Vec::new();
        for (i, doc) in docs.iter().enumerate() {
            if i > 0 {
                items.push(SENTINEL);
            }
            items.extend_from_slice(doc);
        }
        Self::unanchored(items, n_symbols)
    }

    pub fn items(&self) -> &[Sym] {
        &self.items
    }

    pub fn anchors(&self) -> &[bool] {
        &self.anchors
    }

    pub fn n_symbols(&self) -> usize {
        self.n_symbols
    }

    /// Real tokens, sentinels excluded.
    pub fn n_tokens(&self) -> usize {
        self.n_tokens
    }

    /// Same tokens in reverse order; sentinels keep separating the same
    /// documents, so "preceding word" becomes "following word".
    pub fn reversed(&self) -> Self {
        let items: Vec<Sym> = self.items.iter().rev().copied().collect();
        let anchors: Vec<bool> = self.anchors.iter().rev().copied().collect();
        Self { items, anchors, n_symbols: self.n_symbols, n_tokens: self.n_tokens }
    }

    pub fn unigram_counts(&self) -> Vec<u32> {
        let mut counts = vec![0u32; self.n_symbols];
        for &s in &self.items {
            if s != SENTINEL {
                counts[s as usize] += 1;
            }
        }
        counts
    }

    /// Adjacent pairs within documents, keyed as `(u << 32) | v`.
    pub fn pair_counts(&self) -> FxHashMap<u64, u32> {
        let mut counts = FxHashMap::default();
        for w in self.items.windows(2) {
            if w[0] != SENTINEL && w[1] != SENTINEL {
                *counts.entry(pack_pair(w[0], w[1])).or_insert(0) += 1;
            }
        }
        counts
    }

    /// True when `phrase` occurs ending just before `end` (exclusive), inside
    /// one document, with the anchor constraint satisfied.
    pub fn matches_at(&self, phrase: &[Sym], anchor: Option<usize>, end: usize) -> bool {
        if phrase.len() > end {
            return false;
        }
        let start = end - phrase.len();
        if self.items[start..end] != *phrase {
            return false;
        }
        match anchor {
            Some(off) => self.anchors[start + off],
            None => true,
        }
    }

    /// Occurrences of `phrase` as a history: matches with at least one token
    /// following inside the same document. Returns (n_h, follower counts).
    pub fn follower_counts(
        &self,
        phrase: &[Sym],
        anchor: Option<usize>,
    ) -> (u32, FxHashMap<Sym, u32>) {
        let mut n_h = 0u32;
        let mut followers = FxHashMap::default();
        if phrase.is_empty() {
            return (n_h, followers);
        }
        for end in phrase.len()..self.items.len() {
            let next = self.items[end];
            if next == SENTINEL {
                continue;
            }
            if self.matches_at(phrase, anchor, end) {
                n_h += 1;
                *followers.entry(next).or_insert(0) += 1;
            }
        }
        (n_h, followers)
    }

    /// All occurrences of `phrase`, trailing context or not.
    pub fn occurrence_count(&self, phrase: &[Sym], anchor: Option<usize>) -> u32 {
        let mut n = 0u32;
        for end in phrase.len()..=self.items.len() {
            if self.matches_at(phrase, anchor, end) {
                n += 1;
            }
        }
        n
    }
}

pub fn pack_pair(u: Sym, v: Sym) -> u64 {
    (u64::from(u) << 32) | u64::from(v)
}

pub fn unpack_pair(key: u64) -> (Sym, Sym) {
    ((key >> 32) as Sym, key as Sym)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stream(items: &[Sym]) -> PhraseStream {
        let n = items.iter().filter(|&&s| s != SENTINEL).map(|&s| s + 1).max().unwrap_or(0);
        PhraseStream::unanchored(items.to_vec(), n as usize)
    }

    #[test]
    fn pairs_never_cross_documents() {
        let s = stream(&[0, 1, SENTINEL, 1, 0]);
        let pairs = s.pair_counts();
        assert_eq!(pairs.get(&pack_pair(0, 1)), Some(&1));
        assert_eq!(pairs.get(&pack_pair(1, 0)), Some(&1));
        assert_eq!(pairs.get(&pack_pair(1, 1)), None);
        assert_eq!(s.n_tokens(), 4);
    }

    #[test]
    fn follower_counts_respect_anchors() {
        // "a b" twice, anchored on the first token only once.
        let items = vec![0, 1, 0, 1];
        let anchors = vec![true, false, false, false];
        let s = PhraseStream::new(items, anchors, 2);
        let (n_h, followers) = s.follower_counts(&[0], Some(0));
        assert_eq!(n_h, 1);
        assert_eq!(followers.get(&1), Some(&1));
        let (n_h, _) = s.follower_counts(&[0], None);
        assert_eq!(n_h, 2);
    }

    #[test]
    fn history_needs_a_continuation() {
        // Final "a" has no follower; "a" at a document edge has none either.
        let s = stream(&[0, 1, 0, SENTINEL, 0]);
        let (n_h, _) = s.follower_counts(&[0], None);
        assert_eq!(n_h, 1);
        assert_eq!(s.occurrence_count(&[0], None), 3);
    }

    #[test]
    fn reversal_swaps_direction() {
        let s = stream(&[0, 1, SENTINEL, 2]);
        let r = s.reversed();
        assert_eq!(r.items(), &[2, SENTINEL, 1, 0]);
        let (n_h, followers) = r.follower_counts(&[1], None);
        assert_eq!(n_h, 1);
        assert_eq!(followers.get(&0), Some(&1));
    }
}
