use std::collections::HashMap;
use std::fmt::Write;

use turbotopics::Error;

use crate::cmd::{GrowArtifact, TopicBaseline};
use crate::CliError;

const LEFT_HEADER: &str = "unigram";
const RIGHT_HEADER: &str = "phrase";

fn baselines_by_topic(artifact: &GrowArtifact) -> Result<HashMap<usize, &TopicBaseline>, CliError> {
    let by_topic: HashMap<usize, &TopicBaseline> =
        artifact.baselines.iter().map(|b| (b.topic, b)).collect();
    let mut missing: Vec<usize> = artifact
        .reports
        .iter()
        .map(|r| r.topic)
        .filter(|t| !by_topic.contains_key(t))
        .collect();
    if !missing.is_empty() {
        missing.sort_unstable();
        missing.dedup();
        return Err(Error::MissingBaselines(missing).into());
    }
    Ok(by_topic)
}

pub fn render_text(artifact: &GrowArtifact) -> Result<String, CliError> {
    let by_topic = baselines_by_topic(artifact)?;
    let mut out = String::new();
    for report in &artifact.reports {
        let baseline = by_topic[&report.topic];
        if !out.is_empty() {
            out.push('\n');
        }
        let _ = writeln!(out, "topic {}", report.topic);
        if let Some(diag) = &report.diagnostic {
            let _ = writeln!(out, "  [{diag}]");
        }
        let lw = baseline
            .words
            .iter()
            .map(|w| w.word.len())
            .chain([LEFT_HEADER.len()])
            .max()
            .unwrap_or(0);
        let rw = report
            .entries
            .iter()
            .map(|e| e.ngram.len())
            .chain([RIGHT_HEADER.len()])
            .max()
            .unwrap_or(0);
        let _ = writeln!(out, "  {LEFT_HEADER:<lw$}      prob    {RIGHT_HEADER:<rw$}      mass");
        let rows = baseline.words.len().max(report.entries.len());
        for i in 0..rows {
            let (word, prob) = match baseline.words.get(i) {
                Some(w) => (w.word.as_str(), format!("{:.6}", w.probability)),
                None => ("", String::new()),
            };
            let (ngram, mass) = match report.entries.get(i) {
                Some(e) => (e.ngram.as_str(), format!("{:.6}", e.mass)),
                None => ("", String::new()),
            };
            let line = format!("  {word:<lw$}  {prob:>8}    {ngram:<rw$}  {mass:>8}");
            let _ = writeln!(out, "{}", line.trim_end());
        }
    }
    Ok(out)
}

fn escape(text: &str) -> String {
    text.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

pub fn render_html(artifact: &GrowArtifact) -> Result<String, CliError> {
    let by_topic = baselines_by_topic(artifact)?;
    let mut out = String::from(
        "<!doctype html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>turbo topics</title>\n\
         <style>\nbody { font-family: sans-serif; }\ntable { border-collapse: collapse; margin-bottom: 1.5em; }\n\
         th, td { padding: 2px 12px; text-align: left; }\ntd.num { text-align: right; }\n\
         th { border-bottom: 1px solid #999; }\n</style>\n</head>\n<body>\n",
    );
    for report in &artifact.reports {
        let baseline = by_topic[&report.topic];
        let _ = writeln!(out, "<h2>topic {}</h2>", report.topic);
        if let Some(diag) = &report.diagnostic {
            let _ = writeln!(out, "<p><em>{}</em></p>", escape(diag));
        }
        out.push_str("<table>\n<tr><th>unigram</th><th>prob</th><th>phrase</th><th>mass</th></tr>\n");
        let rows = baseline.words.len().max(report.entries.len());
        for i in 0..rows {
            let (word, prob) = match baseline.words.get(i) {
                Some(w) => (escape(&w.word), format!("{:.6}", w.probability)),
                None => (String::new(), String::new()),
            };
            let (ngram, mass) = match report.entries.get(i) {
                Some(e) => (escape(&e.ngram), format!("{:.6}", e.mass)),
                None => (String::new(), String::new()),
            };
            let _ = writeln!(
                out,
                "<tr><td>{word}</td><td class=\"num\">{prob}</td><td>{ngram}</td><td class=\"num\">{mass}</td></tr>"
            );
        }
        out.push_str("</table>\n");
    }
    out.push_str("</body>\n</html>\n");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cmd::{BaselineWord, RunManifest};
    use turbotopics::{PhraseEntry, TopicPhraseReport};

    fn manifest() -> RunManifest {
        RunManifest {
            command: "grow".into(),
            version: "0.0.0".into(),
            config: serde_json::Value::Null,
            inputs: vec![],
            outputs: vec![],
        }
    }

    fn artifact() -> GrowArtifact {
        GrowArtifact {
            manifest: manifest(),
            n_topics: 1,
            baselines: vec![TopicBaseline {
                topic: 0,
                words: vec![
                    BaselineWord { word: "court".into(), probability: 0.04 },
                    BaselineWord { word: "supreme".into(), probability: 0.02 },
                ],
            }],
            reports: vec![TopicPhraseReport {
                topic: 0,
                entries: vec![PhraseEntry {
                    ngram: "supreme court".into(),
                    mass: 0.06,
                    count: 12,
                    p_chain: vec![0.001],
                }],
                provenance: vec![],
                diagnostic: None,
            }],
        }
    }

    #[test]
    fn text_report_pairs_columns_by_rank() {
        let text = render_text(&artifact()).expect("render");
        assert!(text.contains("topic 0"));
        let court = text.lines().find(|l| l.contains("court ")).expect("row");
        assert!(court.contains("0.040000"));
        assert!(court.contains("supreme court"));
        assert!(court.contains("0.060000"));
        assert!(text.lines().any(|l| l.trim().starts_with("supreme ") && l.contains("0.020000")));
    }

    #[test]
    fn html_report_escapes_and_tabulates() {
        let mut art = artifact();
        art.reports[0].entries[0].ngram = "a<b".into();
        let html = render_html(&art).expect("render");
        assert!(html.contains("<td>a&lt;b</td>"));
        assert!(html.contains("<h2>topic 0</h2>"));
        assert!(html.starts_with("<!doctype html>"));
    }

    #[test]
    fn missing_baselines_are_listed() {
        let mut art = artifact();
        art.baselines.clear();
        let err = render_text(&art).unwrap_err();
        match err {
            CliError::Data(msg) => assert!(msg.contains('0'), "message should list topic: {msg}"),
            other => panic!("expected data error, got {other:?}"),
        }
    }

    #[test]
    fn empty_artifact_renders_empty_text() {
        let art = GrowArtifact {
            manifest: manifest(),
            n_topics: 0,
            baselines: vec![],
            reports: vec![],
        };
        assert_eq!(render_text(&art).expect("render"), "");
        let html = render_html(&art).expect("render");
        assert!(html.contains("<body>"));
    }

    #[test]
    fn diagnostics_are_shown() {
        let mut art = artifact();
        art.reports[0].entries.clear();
        art.reports[0].diagnostic = Some("no labeled tokens".into());
        let text = render_text(&art).expect("render");
        assert!(text.contains("[no labeled tokens]"));
    }
}
