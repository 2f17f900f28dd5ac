use std::collections::HashSet;
use std::fs;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use turbotopics::{
    annotate_corpus, build_turbo_topics, build_vocabulary, fit_lda, read_stream, run_benchmark,
    simulate_corpus, tokenize_corpus, topic_unigram_baseline, write_stream, AnnotatedToken,
    BenchConfig, BenchRow, GrowthConfig, LdaConfig, Method, SimConfig, Sym, TopicPhraseReport,
    TrueBigram,
};

use crate::CliError;

const MODEL_TOP_WORDS: usize = 30;

/// Everything needed to reproduce a run: re-executing the recorded command
/// with the recorded config against the recorded inputs rewrites the
/// recorded outputs byte for byte.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: serde_json::Value,
    pub inputs: Vec<String>,
    pub outputs: Vec<String>,
}

impl RunManifest {
    fn new<P: Serialize>(
        command: &str,
        params: &P,
        inputs: Vec<String>,
        outputs: Vec<String>,
    ) -> Result<Self, CliError> {
        Ok(Self {
            command: command.to_owned(),
            version: env!("CARGO_PKG_VERSION").to_owned(),
            config: serde_json::to_value(params)?,
            inputs,
            outputs,
        })
    }
}

/// Line-oriented outputs carry the manifest as a leading `# ...` comment;
/// readers of the payload skip comment lines.
fn manifest_comment(manifest: &RunManifest) -> Result<String, CliError> {
    Ok(format!("# {}\n", serde_json::to_string(manifest)?))
}

fn write_json_artifact<T: Serialize>(path: &str, artifact: &T) -> Result<(), CliError> {
    let mut body = serde_json::to_string_pretty(artifact)?;
    body.push('\n');
    fs::write(path, body)?;
    Ok(())
}

pub fn generated_seed() -> u64 {
    let nanos = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_nanos() as u64)
        .unwrap_or(0);
    nanos ^ (u64::from(std::process::id()) << 32)
}

// ---------------------------------------------------------------------------
// lda-fit

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LdaFitParams {
    pub corpus: String,
    pub out: String,
    pub model_out: Option<String>,
    pub topics: usize,
    pub alpha: f64,
    pub eta: f64,
    pub sweeps: u32,
    pub burn_in: u32,
    pub min_doc_freq: usize,
    pub stopwords: Option<String>,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct WordCount {
    word: String,
    count: u32,
}

#[derive(Serialize, Deserialize)]
struct TopicTopWords {
    topic: usize,
    words: Vec<WordCount>,
}

#[derive(Serialize, Deserialize)]
struct ModelArtifact {
    manifest: RunManifest,
    n_topics: usize,
    n_terms: usize,
    n_docs: usize,
    top_words: Vec<TopicTopWords>,
}

pub fn run_lda_fit(params: &LdaFitParams) -> Result<(), CliError> {
    let text = fs::read_to_string(&params.corpus)?;
    let tokens = tokenize_corpus(text.lines())?;

    let stopwords: HashSet<String> = match &params.stopwords {
        Some(path) => fs::read_to_string(path)?
            .lines()
            .map(|l| l.trim().to_lowercase())
            .filter(|l| !l.is_empty())
            .collect(),
        None => HashSet::new(),
    };
    let vocab = build_vocabulary(&tokens, &stopwords, params.min_doc_freq)?;

    let config = LdaConfig::<f64> {
        n_topics: params.topics,
        alpha: params.alpha,
        eta: params.eta,
        sweeps: params.sweeps,
        burn_in: params.burn_in,
        seed: params.seed,
    };
    let state = fit_lda(&tokens, &vocab, &config)?;
    let annotated = annotate_corpus(&tokens, &vocab, &state)?;

    let mut inputs = vec![params.corpus.clone()];
    if let Some(s) = &params.stopwords {
        inputs.push(s.clone());
    }
    let mut outputs = vec![params.out.clone()];
    if let Some(m) = &params.model_out {
        outputs.push(m.clone());
    }
    let manifest = RunManifest::new("lda-fit", params, inputs, outputs)?;

    let mut writer = BufWriter::new(fs::File::create(&params.out)?);
    writer.write_all(manifest_comment(&manifest)?.as_bytes())?;
    write_stream(&annotated, &mut writer)?;
    writer.flush()?;

    if let Some(model_out) = &params.model_out {
        let top_words = state
            .top_words(MODEL_TOP_WORDS)
            .into_iter()
            .enumerate()
            .map(|(topic, words)| TopicTopWords {
                topic,
                words: words
                    .into_iter()
                    .map(|(term, count)| WordCount { word: vocab.term(term).to_owned(), count })
                    .collect(),
            })
            .collect();
        let artifact = ModelArtifact {
            manifest: manifest.clone(),
            n_topics: state.n_topics,
            n_terms: state.n_terms,
            n_docs: state.n_docs,
            top_words,
        };
        write_json_artifact(model_out, &artifact)?;
    }

    log::info!("annotated {} tokens with {} topics", annotated.len(), params.topics);
    Ok(())
}

// ---------------------------------------------------------------------------
// grow

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GrowParams {
    pub annotation: String,
    pub out: String,
    /// When absent the topic count is inferred from the annotation labels.
    pub topics: Option<usize>,
    pub p_threshold: f64,
    pub permutations: u32,
    pub max_phrase_len: usize,
    pub min_count: u32,
    pub top_seed_words: usize,
    pub baseline_top: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BaselineWord {
    pub word: String,
    pub probability: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TopicBaseline {
    pub topic: usize,
    pub words: Vec<BaselineWord>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GrowArtifact {
    pub manifest: RunManifest,
    pub n_topics: usize,
    pub baselines: Vec<TopicBaseline>,
    pub reports: Vec<TopicPhraseReport<f64>>,
}

fn read_annotation(path: &str) -> Result<Vec<AnnotatedToken>, CliError> {
    let reader = BufReader::new(fs::File::open(path)?);
    Ok(read_stream(reader)?)
}

pub fn run_grow(params: &GrowParams) -> Result<(), CliError> {
    let annotated = read_annotation(&params.annotation)?;
    let n_topics = match params.topics {
        Some(k) => k,
        None => annotated.iter().filter_map(|t| t.topic).max().map_or(0, |m| m + 1),
    };
    if n_topics == 0 {
        return Err(CliError::Data(format!(
            "{}: no topic labels present and no --topics given",
            params.annotation
        )));
    }

    let config = GrowthConfig::<f64> {
        p_threshold: params.p_threshold,
        permutations: params.permutations,
        max_phrase_len: params.max_phrase_len,
        min_count: params.min_count,
        top_seed_words: params.top_seed_words,
        seed: params.seed,
    };
    config.validate()?;

    let reports = build_turbo_topics(&annotated, n_topics, &config);
    let baselines = (0..n_topics)
        .map(|topic| TopicBaseline {
            topic,
            words: topic_unigram_baseline::<f64>(&annotated, topic, params.baseline_top)
                .into_iter()
                .map(|(word, probability)| BaselineWord { word, probability })
                .collect(),
        })
        .collect();

    let manifest = RunManifest::new(
        "grow",
        params,
        vec![params.annotation.clone()],
        vec![params.out.clone()],
    )?;
    let artifact = GrowArtifact { manifest, n_topics, baselines, reports };
    write_json_artifact(&params.out, &artifact)?;
    log::info!("grew phrases for {n_topics} topics");
    Ok(())
}

// ---------------------------------------------------------------------------
// simulate

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulateParams {
    pub out: String,
    pub n_tokens: usize,
    pub crp_alpha: f64,
    pub beta_bigram: f64,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct SimArtifact {
    manifest: RunManifest,
    n_tokens: usize,
    n_types: usize,
    true_bigrams: Vec<TrueBigram>,
    stream: Vec<Sym>,
}

pub fn run_simulate(params: &SimulateParams) -> Result<(), CliError> {
    let config = SimConfig::<f64> {
        crp_alpha: params.crp_alpha,
        beta_bigram: params.beta_bigram,
        n_tokens: params.n_tokens,
        seed: params.seed,
    };
    let truth = simulate_corpus(&config)?;

    let manifest = RunManifest::new("simulate", params, vec![], vec![params.out.clone()])?;
    let artifact = SimArtifact {
        manifest,
        n_tokens: truth.stream.items().len(),
        n_types: truth.stream.n_symbols(),
        true_bigrams: truth.true_bigrams.clone(),
        stream: truth.stream.items().to_vec(),
    };
    write_json_artifact(&params.out, &artifact)?;
    log::info!(
        "simulated {} tokens over {} types with {} planted bigrams",
        artifact.n_tokens,
        artifact.n_types,
        artifact.true_bigrams.len()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// bench

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchParams {
    pub out: String,
    pub summary_out: String,
    pub methods: Vec<String>,
    pub sizes: Vec<usize>,
    pub thresholds: Vec<f64>,
    pub replications: u32,
    pub permutations: u32,
    pub min_count: u32,
    pub crp_alpha: f64,
    pub beta_bigram: f64,
    pub seed: u64,
}

fn grid_csv(manifest: &RunManifest, rows: &[BenchRow<f64>]) -> Result<String, CliError> {
    let mut out = manifest_comment(manifest)?;
    out.push_str("method,size,threshold,replication,precision,recall,f\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.method.id(),
            r.size,
            r.threshold,
            r.replication,
            r.precision,
            r.recall,
            r.f
        ));
    }
    Ok(out)
}

fn summary_csv(
    manifest: &RunManifest,
    config: &BenchConfig<f64>,
    rows: &[BenchRow<f64>],
) -> Result<String, CliError> {
    let mut out = manifest_comment(manifest)?;
    out.push_str("method,size,threshold,mean_precision,mean_recall,mean_f\n");
    for &method in &config.methods {
        for &size in &config.sizes {
            for &threshold in &config.thresholds {
                let cell: Vec<&BenchRow<f64>> = rows
                    .iter()
                    .filter(|r| r.method == method && r.size == size && r.threshold == threshold)
                    .collect();
                if cell.is_empty() {
                    continue;
                }
                let n = cell.len() as f64;
                let mean = |f: fn(&BenchRow<f64>) -> f64| cell.iter().map(|r| f(r)).sum::<f64>() / n;
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    method.id(),
                    size,
                    threshold,
                    mean(|r| r.precision),
                    mean(|r| r.recall),
                    mean(|r| r.f)
                ));
            }
        }
    }
    Ok(out)
}

pub fn run_bench(params: &BenchParams) -> Result<(), CliError> {
    let methods = params
        .methods
        .iter()
        .map(|m| Method::parse(m))
        .collect::<turbotopics::Result<Vec<Method>>>()?;
    let config = BenchConfig::<f64> {
        methods,
        sizes: params.sizes.clone(),
        thresholds: params.thresholds.clone(),
        replications: params.replications,
        permutations: params.permutations,
        min_count: params.min_count,
        crp_alpha: params.crp_alpha,
        beta_bigram: params.beta_bigram,
        seed: params.seed,
    };
    let rows = run_benchmark(&config)?;

    let manifest = RunManifest::new(
        "bench",
        params,
        vec![],
        vec![params.out.clone(), params.summary_out.clone()],
    )?;
    fs::write(&params.out, grid_csv(&manifest, &rows)?)?;
    fs::write(&params.summary_out, summary_csv(&manifest, &config, &rows)?)?;
    log::info!("wrote {} benchmark rows", rows.len());
    Ok(())
}

// ---------------------------------------------------------------------------
// report

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ReportFormat {
    Text,
    Html,
}

pub fn load_grow_artifact(path: &str) -> Result<GrowArtifact, CliError> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

// ---------------------------------------------------------------------------
// rerun

fn manifest_of(path: &Path) -> Result<RunManifest, CliError> {
    let text = fs::read_to_string(path)?;
    if let Some(first) = text.lines().next() {
        if let Some(comment) = first.strip_prefix('#') {
            return Ok(serde_json::from_str(comment.trim())?);
        }
    }
    #[derive(Deserialize)]
    struct Holder {
        manifest: RunManifest,
    }
    let holder: Holder = serde_json::from_str(&text)?;
    Ok(holder.manifest)
}

fn params_of<P: DeserializeOwned>(manifest: &RunManifest) -> Result<P, CliError> {
    serde_json::from_value(manifest.config.clone())
        .map_err(|e| CliError::Data(format!("manifest config does not match `{}`: {e}", manifest.command)))
}

pub fn run_rerun(artifact: &Path) -> Result<(), CliError> {
    let manifest = manifest_of(artifact)?;
    log::info!("re-running `{}` from {}", manifest.command, artifact.display());
    match manifest.command.as_str() {
        "lda-fit" => run_lda_fit(&params_of(&manifest)?),
        "grow" => run_grow(&params_of(&manifest)?),
        "simulate" => run_simulate(&params_of(&manifest)?),
        "bench" => run_bench(&params_of(&manifest)?),
        other => Err(CliError::Data(format!("manifest command `{other}` is not re-runnable"))),
    }
}
