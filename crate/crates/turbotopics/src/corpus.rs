use std::collections::HashSet;
use std::io::{BufRead, Write};

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Scalar;
use crate::stream::{Lexicon, PhraseStream, Sym, SENTINEL};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub surface: String,
    /// Document id; positions restart at 0 in each document.
    pub doc: usize,
    pub position: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotatedToken {
    pub token: Token,
    /// None for tokens outside the model vocabulary (stop words, rare terms).
    pub topic: Option<usize>,
}

/// Lower-cases and splits on non-alphanumeric characters. No stemming, no
/// stop-word removal; filtering is the vocabulary's job.
pub fn tokenize_corpus<'a, I>(documents: I) -> Result<Vec<Token>>
where
    I: IntoIterator<Item = &'a str>,
{
    let mut tokens = Vec::new();
    let mut n_docs = 0;
    for (doc, text) in documents.into_iter().enumerate() {
        n_docs += 1;
        let mut position = 0;
        for piece in text.split(|c: char| !c.is_alphanumeric()) {
            if piece.is_empty() {
                continue;
            }
            tokens.push(Token { surface: piece.to_lowercase(), doc, position });
            position += 1;
        }
    }
    if n_docs == 0 || tokens.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    Ok(tokens)
}

/// Modeling vocabulary: stop words and terms below the document-frequency
/// threshold are excluded. Terms are ordered by descending corpus count,
/// ties alphabetically, so term ids are deterministic.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Vocabulary {
    terms: Vec<String>,
    #[serde(skip)]
    index: FxHashMap<String, usize>,
}

impl Vocabulary {
    pub fn from_terms(terms: Vec<String>) -> Self {
        let index = terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { terms, index }
    }

    pub fn id(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn term(&self, id: usize) -> &str {
        &self.terms[id]
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Restores the lookup index after deserialization.
    pub fn rebuild_index(&mut self) {
        self.index = self.terms.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    }
}

pub fn build_vocabulary(
    tokens: &[Token],
    stopwords: &HashSet<String>,
    min_doc_freq: usize,
) -> Result<Vocabulary> {
    let mut doc_freq: FxHashMap<&str, usize> = FxHashMap::default();
    let mut corpus_count: FxHashMap<&str, usize> = FxHashMap::default();
    let mut last_doc: FxHashMap<&str, usize> = FxHashMap::default();
    for token in tokens {
        let surface = token.surface.as_str();
        *corpus_count.entry(surface).or_insert(0) += 1;
        if last_doc.insert(surface, token.doc) != Some(token.doc) {
            *doc_freq.entry(surface).or_insert(0) += 1;
        }
    }
    let mut kept: Vec<(&str, usize)> = doc_freq
        .into_iter()
        .filter(|(term, df)| *df >= min_doc_freq && !stopwords.contains(*term))
        .map(|(term, _)| (term, corpus_count[term]))
        .collect();
    if kept.is_empty() {
        return Err(Error::EmptyVocabulary);
    }
    kept.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    Ok(Vocabulary::from_terms(kept.into_iter().map(|(t, _)| t.to_owned()).collect()))
}

/// One line of the annotated-stream interchange format.
#[derive(Debug, Serialize, Deserialize)]
struct StreamLine<'a> {
    w: std::borrow::Cow<'a, str>,
    d: usize,
    p: usize,
    z: Option<usize>,
}

pub fn write_stream<W: Write>(stream: &[AnnotatedToken], mut writer: W) -> Result<()> {
    for t in stream {
        let line = StreamLine {
            w: std::borrow::Cow::Borrowed(t.token.surface.as_str()),
            d: t.token.doc,
            p: t.token.position,
            z: t.topic,
        };
        serde_json::to_writer(&mut writer, &line)?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_stream<R: BufRead>(reader: R) -> Result<Vec<AnnotatedToken>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let parsed: StreamLine = serde_json::from_str(&line).map_err(|e| Error::MalformedLine {
            line: i + 1,
            reason: e.to_string(),
        })?;
        out.push(AnnotatedToken {
            token: Token { surface: parsed.w.into_owned(), doc: parsed.d, position: parsed.p },
            topic: parsed.z,
        });
    }
    Ok(out)
}

/// Full raw stream with anchor flags on tokens labeled `topic` and sentinels
/// at document boundaries. Every token is kept; the flags alone restrict the
/// phrase statistics to the topic.
pub fn extract_topic_stream(
    annotated: &[AnnotatedToken],
    topic: usize,
    lexicon: &mut Lexicon,
) -> PhraseStream {
    let mut items = Vec::with_capacity(annotated.len());
    let mut anchors = Vec::with_capacity(annotated.len());
    let mut current_doc = None;
    for t in annotated {
        if current_doc.is_some() && current_doc != Some(t.token.doc) {
            items.push(SENTINEL);
            anchors.push(false);
        }
        current_doc = Some(t.token.doc);
        items.push(lexicon.intern(&t.token.surface));
        anchors.push(t.topic == Some(topic));
    }
    PhraseStream::new(items, anchors, lexicon.len())
}

/// Per-topic unigram distribution over labeled tokens, most probable first.
/// This is the plain list a phrase report is laid side by side with.
pub fn topic_unigram_baseline<F: Scalar>(
    annotated: &[AnnotatedToken],
    topic: usize,
    top: usize,
) -> Vec<(String, F)> {
    let mut counts: FxHashMap<&str, usize> = FxHashMap::default();
    let mut total = 0usize;
    for t in annotated {
        if t.topic == Some(topic) {
            *counts.entry(t.token.surface.as_str()).or_insert(0) += 1;
            total += 1;
        }
    }
    let mut ranked: Vec<(&str, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked
        .into_iter()
        .take(top)
        .map(|(w, c)| (w.to_owned(), F::from_count(c) / F::from_count(total)))
        .collect()
}

/// Symbols of `annotated` tokens labeled with `topic`, ranked by label count
/// (descending, ties by first appearance). Seed candidates for phrase growth.
pub fn ranked_topic_words(
    annotated: &[AnnotatedToken],
    topic: usize,
    lexicon: &mut Lexicon,
) -> Vec<(Sym, u32)> {
    let mut counts: FxHashMap<Sym, u32> = FxHashMap::default();
    for t in annotated {
        if t.topic == Some(topic) {
            *counts.entry(lexicon.intern(&t.token.surface)).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<(Sym, u32)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked
}
