//! Automatic metrics: rule-based oracle classification, corpus BLEU,
//! G-score, transfer evaluation, and style-space separation.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;
use std::sync::LazyLock;

use ndarray::Array2;
use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusRecord, StyleAxis, SyntheticStyleSpec};
use crate::error::{RestyleError, Result};
use crate::inference::{ExemplarConfig, TransferMode, TransferRequest, TransferSession};
use crate::model::{DecodeOptions, Model};
use crate::rng::stream;

/// Classifies one axis by marker counts: the side with strictly more
/// markers wins; no markers or a tie is an abstention.
pub fn classify_axis(text: &str, axis: &StyleAxis) -> Option<usize> {
    let mut counts = [0usize; 2];
    for tok in text.split_whitespace() {
        let tok = tok.trim_end_matches('.');
        for side in 0..2 {
            if axis.markers(side).any(|m| m == tok) {
                counts[side] += 1;
            }
        }
    }
    match counts[0].cmp(&counts[1]) {
        std::cmp::Ordering::Greater => Some(0),
        std::cmp::Ordering::Less => Some(1),
        std::cmp::Ordering::Equal => None,
    }
}

/// Deterministic rule-based label over every axis of the spec, in the same
/// `side|side|...` format the generator records. Abstains (None) if any
/// axis lacks evidence.
pub fn oracle_classify(text: &str, spec: &SyntheticStyleSpec) -> Option<String> {
    let mut sides = Vec::with_capacity(spec.axes.len());
    for axis in &spec.axes {
        sides.push(classify_axis(text, axis)?);
    }
    Some(spec.style_id(&sides))
}

// --- BLEU -----------------------------------------------------------------

static TOK_PERIOD_BEFORE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"([^0-9])([\.,])").unwrap());
static TOK_PERIOD_AFTER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"([\.,])([^0-9])").unwrap());
static TOK_DIGIT_DASH: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"([0-9])(-)").unwrap());

/// mteval-13a-style tokenization: split out most punctuation, periods and
/// commas unless digit-adjacent, and dashes after digits. Case is kept.
fn tok_13a(line: &str) -> Vec<String> {
    let mut norm = line.replace("<skipped>", "");
    norm = norm.replace("-\n", "");
    norm = norm.replace('\n', " ");
    if norm.contains('&') {
        norm = norm
            .replace("&quot;", "\"")
            .replace("&amp;", "&")
            .replace("&lt;", "<")
            .replace("&gt;", ">");
    }
    let padded = format!(" {norm} ");
    let spaced: String = padded
        .chars()
        .flat_map(|c| {
            if is_13a_punct(c) {
                vec![' ', c, ' ']
            } else {
                vec![c]
            }
        })
        .collect();
    let spaced = TOK_PERIOD_BEFORE.replace_all(&spaced, "${1} ${2} ");
    let spaced = TOK_PERIOD_AFTER.replace_all(&spaced, " ${1} ${2}");
    let spaced = TOK_DIGIT_DASH.replace_all(&spaced, "${1} - ");
    spaced.split_whitespace().map(str::to_string).collect()
}

/// The 13a punctuation class: `{-~`, `[-\``, space-`&`, `(-+`, `:-@`, `/`
/// (periods, commas, dashes, and digits are handled separately).
fn is_13a_punct(c: char) -> bool {
    matches!(c, '{'..='~' | '['..='`' | '!'..='&' | '('..='+' | ':'..='@' | '/')
}

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts: HashMap<&[String], usize> = HashMap::new();
    if tokens.len() >= n {
        for window in tokens.windows(n) {
            *counts.entry(window).or_insert(0) += 1;
        }
    }
    counts
}

const BLEU_ORDER: usize = 4;

/// Corpus-level BLEU-4 with exponential smoothing and 13a tokenization,
/// mixed case, one reference per candidate, on the 0-100 scale.
pub fn bleu(candidates: &[String], references: &[String]) -> Result<f64> {
    if candidates.len() != references.len() || candidates.is_empty() {
        return Err(RestyleError::LengthMismatch {
            candidates: candidates.len(),
            references: references.len(),
        });
    }
    let mut correct = [0usize; BLEU_ORDER];
    let mut total = [0usize; BLEU_ORDER];
    let mut sys_len = 0usize;
    let mut ref_len = 0usize;
    for (cand, reference) in candidates.iter().zip(references) {
        let c = tok_13a(cand);
        let r = tok_13a(reference);
        sys_len += c.len();
        ref_len += r.len();
        for n in 1..=BLEU_ORDER {
            if c.len() >= n {
                total[n - 1] += c.len() - n + 1;
            }
            let rn = ngram_counts(&r, n);
            for (gram, count) in ngram_counts(&c, n) {
                correct[n - 1] += (*rn.get(gram).unwrap_or(&0)).min(count);
            }
        }
    }
    if sys_len == 0 {
        return Ok(0.0);
    }
    let mut precisions = [0.0f64; BLEU_ORDER];
    let mut smooth = 1.0f64;
    let mut effective_order = 0usize;
    for n in 1..=BLEU_ORDER {
        if total[n - 1] == 0 {
            break;
        }
        effective_order = n;
        precisions[n - 1] = if correct[n - 1] == 0 {
            smooth *= 2.0;
            100.0 / (smooth * total[n - 1] as f64)
        } else {
            100.0 * correct[n - 1] as f64 / total[n - 1] as f64
        };
    }
    if effective_order == 0 {
        return Ok(0.0);
    }
    let bp = if sys_len < ref_len {
        (1.0 - ref_len as f64 / sys_len as f64).exp()
    } else {
        1.0
    };
    let log_sum: f64 = precisions[..effective_order].iter().map(|p| p.ln()).sum();
    Ok(bp * (log_sum / effective_order as f64).exp())
}

// --- G-score ----------------------------------------------------------------

/// Geometric mean of accuracy and content, both on the 0-100 scale.
pub fn g_score(accuracy: f64, content: f64) -> f64 {
    (accuracy * content).sqrt()
}

/// Published (accuracy, content, G) triples used as fixtures for the
/// geometric-mean arithmetic: the sentiment-transfer comparison table and
/// the three-task benchmark table.
pub const REFERENCE_SCORE_TRIPLES: &[(f64, f64, f64)] = &[
    // Sentiment transfer comparison (few-shot block, then labeled block).
    (54.0, 55.8, 54.9),
    (73.7, 34.7, 50.6),
    (23.4, 84.4, 44.4),
    (70.0, 27.8, 44.1),
    (13.3, 98.7, 36.2),
    (66.1, 42.1, 52.8),
    (70.3, 34.1, 49.0),
    (52.4, 44.2, 48.1),
    (74.5, 37.2, 52.6),
    (71.5, 39.4, 53.1),
    (25.3, 55.8, 37.6),
    (74.5, 33.4, 49.9),
    (51.1, 35.5, 42.6),
    (36.3, 39.8, 38.0),
    (68.2, 2.9, 14.1),
    (49.4, 56.9, 53.0),
    (60.2, 54.2, 57.1),
    // Three-task benchmark: sentiment / author / personality.
    (44.9, 54.4, 49.4),
    (68.5, 7.8, 23.1),
    (59.3, 12.4, 27.1),
    (68.5, 12.5, 29.2),
    (81.7, 13.8, 33.5),
    (91.6, 21.6, 44.5),
    (66.2, 29.7, 44.3),
    (67.6, 22.9, 39.3),
    (88.0, 20.3, 42.3),
    (49.3, 46.0, 47.6),
];

/// Tolerance when reproducing a reported G value from its reported inputs:
/// half an ulp of one-decimal reporting on G itself, plus the first-order
/// propagation of the inputs' own half-ulp rounding through the geometric
/// mean. A few reported rows need the propagation term (their G was
/// computed from unrounded inputs).
pub fn g_score_tolerance(accuracy: f64, content: f64) -> f64 {
    let g = g_score(accuracy, content);
    0.05 + 0.5 * g * (0.05 / accuracy + 0.05 / content)
}

// --- Transfer evaluation ----------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DirectionReport {
    pub source: String,
    pub target: String,
    pub count: usize,
    pub accuracy: f64,
    pub self_bleu: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalReport {
    /// Percent of outputs the oracle labels as the target class
    /// (abstentions count as failures).
    pub accuracy: f64,
    /// Self-BLEU of outputs against inputs.
    pub content: f64,
    pub g_score: f64,
    pub num_cases: usize,
    pub per_direction: Vec<DirectionReport>,
}

/// One transfer case prepared for metric computation.
#[derive(Debug, Clone)]
pub struct TransferCase {
    pub input: String,
    pub output: String,
    pub source_side: usize,
    pub target_side: usize,
}

/// Metric core, independent of how the outputs were produced: oracle
/// accuracy toward each case's target side, pooled self-BLEU, G-score, and
/// a per-direction breakdown.
pub fn evaluate_outputs(cases: &[TransferCase], axis: &StyleAxis) -> Result<EvalReport> {
    if cases.is_empty() {
        return Err(RestyleError::EmptyInput);
    }
    let inputs: Vec<String> = cases.iter().map(|c| c.input.clone()).collect();
    let outputs: Vec<String> = cases.iter().map(|c| c.output.clone()).collect();
    let content = bleu(&outputs, &inputs)?;
    let hit = |case: &TransferCase| classify_axis(&case.output, axis) == Some(case.target_side);
    let accuracy = 100.0 * cases.iter().filter(|c| hit(c)).count() as f64 / cases.len() as f64;

    let mut per_direction = Vec::new();
    for (src, trg) in [(0usize, 1usize), (1, 0)] {
        let subset: Vec<&TransferCase> = cases
            .iter()
            .filter(|c| c.source_side == src && c.target_side == trg)
            .collect();
        if subset.is_empty() {
            continue;
        }
        let sub_in: Vec<String> = subset.iter().map(|c| c.input.clone()).collect();
        let sub_out: Vec<String> = subset.iter().map(|c| c.output.clone()).collect();
        per_direction.push(DirectionReport {
            source: axis.sides[src].clone(),
            target: axis.sides[trg].clone(),
            count: subset.len(),
            accuracy: 100.0 * subset.iter().filter(|c| hit(c)).count() as f64
                / subset.len() as f64,
            self_bleu: bleu(&sub_out, &sub_in)?,
        });
    }
    Ok(EvalReport {
        accuracy,
        content,
        g_score: g_score(accuracy, content),
        num_cases: cases.len(),
        per_direction,
    })
}

/// Runs exemplar-based transfer over labeled test records in both
/// directions and scores the outputs. Records must carry the oracle source
/// label (`style_id`); the exemplar config's class names must match the
/// axis sides.
pub fn evaluate_transfer(
    model: &Model,
    test_records: &[CorpusRecord],
    exemplars: &ExemplarConfig,
    spec: &SyntheticStyleSpec,
    seed: u64,
) -> Result<EvalReport> {
    exemplars.validate()?;
    let axis_name = exemplars.axis.as_deref().unwrap_or(&spec.axes[0].name);
    let (axis_idx, axis) = spec
        .axes
        .iter()
        .enumerate()
        .find(|(_, a)| a.name == axis_name)
        .ok_or_else(|| RestyleError::Config(format!("spec has no axis named '{axis_name}'")))?;
    let decode = exemplars
        .decode
        .unwrap_or_else(|| DecodeOptions::greedy(model.config().max_seq_len));

    let mut session = TransferSession::new(model);
    let mut cases = Vec::new();
    for (i, record) in test_records.iter().enumerate() {
        let style_id = record.style_id.as_deref().ok_or_else(|| {
            RestyleError::Config("test records must carry style_id labels".into())
        })?;
        let side_name = style_id.split('|').nth(axis_idx).unwrap_or("");
        let source_side = axis
            .sides
            .iter()
            .position(|s| s == side_name)
            .ok_or_else(|| RestyleError::Config(format!("unknown style_id '{style_id}'")))?;
        let target_side = 1 - source_side;
        let req = TransferRequest {
            input: record.target.clone(),
            source: exemplars.class(&axis.sides[source_side])?.clone(),
            target: exemplars.class(&axis.sides[target_side])?.clone(),
            lambda: exemplars.lambda,
            ranges: exemplars.ranges,
            mode: TransferMode::Delta,
            decode,
        };
        let mut rng = stream(seed, &["eval-transfer".into(), i.into()]);
        let output = session.transfer(&req, &mut rng)?;
        cases.push(TransferCase {
            input: record.target.clone(),
            output,
            source_side,
            target_side,
        });
    }
    evaluate_outputs(&cases, axis)
}

// --- Separation ---------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SeparationReport {
    pub mean_within: f64,
    pub mean_across: f64,
    /// Relative increase of across-class over within-class mean distance,
    /// as a percentage.
    pub separation: f64,
}

/// Mean pairwise Euclidean distance within classes vs. across classes
/// (all cross pairs pooled). Needs at least two classes and two vectors
/// per class; errors when the within-class mean distance is zero.
pub fn separation(vectors: &Array2<f64>, labels: &[String]) -> Result<SeparationReport> {
    if vectors.nrows() != labels.len() {
        return Err(RestyleError::LengthMismatch {
            candidates: vectors.nrows(),
            references: labels.len(),
        });
    }
    let mut class_counts: HashMap<&str, usize> = HashMap::new();
    for label in labels {
        *class_counts.entry(label.as_str()).or_insert(0) += 1;
    }
    if class_counts.len() < 2 {
        return Err(RestyleError::DegenerateSeparation(
            "need at least two classes".into(),
        ));
    }
    if class_counts.values().any(|&c| c < 2) {
        return Err(RestyleError::DegenerateSeparation(
            "every class needs at least two vectors".into(),
        ));
    }
    let n = vectors.nrows();
    let mut within_sum = 0.0;
    let mut within_count = 0usize;
    let mut across_sum = 0.0;
    let mut across_count = 0usize;
    for i in 0..n {
        let vi = vectors.row(i);
        for j in (i + 1)..n {
            let vj = vectors.row(j);
            let dist = vi
                .iter()
                .zip(vj.iter())
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if labels[i] == labels[j] {
                within_sum += dist;
                within_count += 1;
            } else {
                across_sum += dist;
                across_count += 1;
            }
        }
    }
    let mean_within = within_sum / within_count as f64;
    let mean_across = across_sum / across_count as f64;
    if mean_within == 0.0 {
        return Err(RestyleError::DegenerateSeparation(
            "within-class mean distance is zero".into(),
        ));
    }
    Ok(SeparationReport {
        mean_within,
        mean_across,
        separation: (mean_across - mean_within) / mean_within * 100.0,
    })
}

/// Writes style vectors as a flat little-endian f64 binary matrix with a
/// JSON sidecar carrying the shape and per-row labels.
pub fn export_style_vectors(
    bin_path: &Path,
    meta_path: &Path,
    vectors: &Array2<f64>,
    labels: &[String],
) -> Result<()> {
    if vectors.nrows() != labels.len() {
        return Err(RestyleError::LengthMismatch {
            candidates: vectors.nrows(),
            references: labels.len(),
        });
    }
    let mut out = std::io::BufWriter::new(std::fs::File::create(bin_path)?);
    for row in vectors.rows() {
        for v in row {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    let meta = serde_json::json!({
        "rows": vectors.nrows(),
        "cols": vectors.ncols(),
        "dtype": "f64-le",
        "labels": labels,
    });
    std::fs::write(meta_path, serde_json::to_string_pretty(&meta)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::StyleAxis;
    use crate::rng::stream;
    use ndarray::Array1;
    use rand::Rng;

    fn axis() -> StyleAxis {
        StyleAxis {
            name: "dialect".into(),
            sides: ["us".into(), "uk".into()],
            lexicon: vec![
                ["truck".into(), "lorry".into()],
                ["apartment".into(), "flat".into()],
            ],
            connectors: None,
        }
    }

    fn spec() -> SyntheticStyleSpec {
        SyntheticStyleSpec {
            base_vocab_size: 50,
            sentence_length_range: (7, 11),
            sentences_per_doc: (2, 4),
            styled_per_sentence: (1, 2),
            axes: vec![axis()],
        }
    }

    #[test]
    fn oracle_labels_markers_and_abstains() {
        let spec = spec();
        assert_eq!(oracle_classify("the truck is here .", &spec), Some("us".into()));
        assert_eq!(oracle_classify("the lorry near the flat .", &spec), Some("uk".into()));
        assert_eq!(oracle_classify("nothing marked at all .", &spec), None);
        // Tie: one marker per side.
        assert_eq!(oracle_classify("truck meets lorry .", &spec), None);
        // Attached terminal period does not hide a marker.
        assert_eq!(oracle_classify("she took the truck.", &spec), Some("us".into()));
    }

    #[test]
    fn bleu_identity_is_100() {
        let texts: Vec<String> = vec![
            "the quick brown fox .".into(),
            "a stitch in time, saves nine!".into(),
        ];
        let score = bleu(&texts, &texts).unwrap();
        assert!((score - 100.0).abs() < 1e-9);
    }

    #[test]
    fn bleu_matches_frozen_reference_fixture() {
        let cands: Vec<String> = [
            "the quick brown fox jumps over the lazy dog .",
            "a stitch in time saves nine",
            "the cat sat on the mat",
            "it was the best of times, it was the worst of times",
            "all happy families are alike",
        ]
        .map(String::from)
        .to_vec();
        let refs: Vec<String> = [
            "the quick brown fox jumped over the lazy dog .",
            "a stitch in time saves nine",
            "the cat sat on a mat",
            "it was the best of times, it was the blurst of times",
            "every happy family is alike",
        ]
        .map(String::from)
        .to_vec();
        let score = bleu(&cands, &refs).unwrap();
        assert!((score - 68.120498).abs() < 0.1, "score {score}");
    }

    #[test]
    fn bleu_handles_digit_adjacent_punctuation() {
        let c = vec!["prices rose 3.5% in 2020, then fell".to_string()];
        let r = vec!["prices rose 3.5% in 2021, then fell".to_string()];
        let score = bleu(&c, &r).unwrap();
        assert!((score - 59.694918).abs() < 0.1, "score {score}");
    }

    #[test]
    fn bleu_disjoint_hits_the_smoothed_floor() {
        let c: Vec<String> = ["aa bb cc dd", "ee ff gg"].map(String::from).to_vec();
        let r: Vec<String> = ["xx yy zz ww", "vv uu tt"].map(String::from).to_vec();
        let score = bleu(&c, &r).unwrap();
        assert!(score > 0.0 && score < 10.0, "score {score}");
        assert!((score - 5.522398).abs() < 0.1);
    }

    #[test]
    fn bleu_applies_brevity_penalty() {
        let c = vec!["the small cat".to_string()];
        let r = vec!["the small cat sat on the mat quietly today".to_string()];
        let score = bleu(&c, &r).unwrap();
        assert!((score - 13.533528).abs() < 0.1, "score {score}");
    }

    #[test]
    fn bleu_rejects_length_mismatch() {
        let c = vec!["a".to_string()];
        assert!(bleu(&c, &[]).is_err());
    }

    #[test]
    fn g_score_spec_examples() {
        assert!((g_score(73.7, 34.7) - 50.6).abs() < 0.05);
        assert!((g_score(54.0, 55.8) - 54.9).abs() < 0.05);
        assert_eq!(g_score(88.0, 0.0), 0.0);
    }

    #[test]
    fn g_score_reproduces_reported_tables() {
        for &(acc, content, g) in REFERENCE_SCORE_TRIPLES {
            let computed = g_score(acc, content);
            let tol = g_score_tolerance(acc, content);
            assert!(
                (computed - g).abs() <= tol,
                "({acc}, {content}): computed {computed}, reported {g}, tol {tol}"
            );
        }
    }

    #[test]
    fn separation_geometry() {
        // Two tight clusters distance ~10 apart.
        let mut v = Array2::zeros((8, 2));
        let mut labels = Vec::new();
        for i in 0..4 {
            v[[i, 0]] = 0.001 * i as f64;
            labels.push("a".to_string());
        }
        for i in 4..8 {
            v[[i, 0]] = 10.0 + 0.001 * i as f64;
            labels.push("b".to_string());
        }
        let report = separation(&v, &labels).unwrap();
        assert!(report.separation > 1000.0, "tight clusters: {}", report.separation);
        assert!(report.mean_across > 9.9);
    }

    #[test]
    fn separation_null_distribution_is_flat() {
        let mut rng = stream(11, &["sep-null".into()]);
        let n = 1000;
        let d = 8;
        let v = Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0));
        let labels: Vec<String> = (0..n)
            .map(|_| if rng.random_bool(0.5) { "a".into() } else { "b".into() })
            .collect();
        let report = separation(&v, &labels).unwrap();
        assert!(report.separation.abs() < 2.0, "null separation {}", report.separation);
    }

    #[test]
    fn separation_invariances() {
        let mut rng = stream(12, &["sep-inv".into()]);
        let n = 40;
        let d = 4;
        let v = Array2::from_shape_fn((n, d), |_| rng.random_range(-1.0..1.0));
        let labels: Vec<String> = (0..n)
            .map(|i| if i % 2 == 0 { "a".into() } else { "b".into() })
            .collect();
        let base = separation(&v, &labels).unwrap();

        // Translation.
        let shift = Array1::from_shape_fn(d, |_| rng.random_range(-5.0..5.0));
        let mut translated = v.clone();
        for mut row in translated.rows_mut() {
            row += &shift;
        }
        let t = separation(&translated, &labels).unwrap();
        assert!((t.separation - base.separation).abs() < 1e-9);

        // Uniform scaling.
        let scaled = &v * 3.7;
        let s = separation(&scaled, &labels).unwrap();
        assert!((s.separation - base.separation).abs() < 1e-9);

        // Rotation: Gram-Schmidt of a random matrix.
        let raw = Array2::from_shape_fn((d, d), |_| rng.random_range(-1.0..1.0));
        let mut q: Vec<Array1<f64>> = Vec::new();
        for i in 0..d {
            let mut col = raw.row(i).to_owned();
            for prev in &q {
                let dot = col.dot(prev);
                col = &col - &(dot * prev);
            }
            let norm = col.dot(&col).sqrt();
            q.push(col / norm);
        }
        let mut qmat = Array2::zeros((d, d));
        for (i, col) in q.iter().enumerate() {
            qmat.row_mut(i).assign(col);
        }
        let rotated = v.dot(&qmat.t());
        let r = separation(&rotated, &labels).unwrap();
        assert!((r.separation - base.separation).abs() < 1e-6);
    }

    #[test]
    fn separation_degenerate_inputs_error() {
        let v = Array2::zeros((4, 2));
        let labels: Vec<String> = vec!["a".into(), "a".into(), "b".into(), "b".into()];
        // Identical points: within-class mean distance is zero.
        assert!(matches!(
            separation(&v, &labels),
            Err(RestyleError::DegenerateSeparation(_))
        ));
        let one_class: Vec<String> = vec!["a".into(); 4];
        assert!(separation(&v, &one_class).is_err());
        let lonely: Vec<String> = vec!["a".into(), "a".into(), "a".into(), "b".into()];
        assert!(separation(&v, &lonely).is_err());
    }

    #[test]
    fn evaluate_outputs_identity_and_perfect_rewriter() {
        let spec = spec();
        let axis = &spec.axes[0];
        let inputs = [
            "the truck waits near the door .",
            "a new apartment opens today .",
            "the lorry turns at the corner .",
            "that old flat looks warm .",
        ];
        let sides = [0usize, 0, 1, 1];
        // Identity "model": outputs equal inputs.
        let identity_cases: Vec<TransferCase> = inputs
            .iter()
            .zip(sides)
            .map(|(inp, side)| TransferCase {
                input: inp.to_string(),
                output: inp.to_string(),
                source_side: side,
                target_side: 1 - side,
            })
            .collect();
        let report = evaluate_outputs(&identity_cases, axis).unwrap();
        assert!((report.content - 100.0).abs() < 1e-9);
        assert_eq!(report.accuracy, 0.0, "identity transfers nothing");

        // Oracle-perfect rewriter: accuracy 100, content below 100.
        let rewriter_cases: Vec<TransferCase> = inputs
            .iter()
            .zip(sides)
            .map(|(inp, side)| TransferCase {
                input: inp.to_string(),
                output: spec.rewrite(inp),
                source_side: side,
                target_side: 1 - side,
            })
            .collect();
        let report = evaluate_outputs(&rewriter_cases, axis).unwrap();
        assert_eq!(report.accuracy, 100.0);
        assert!(report.content < 100.0 && report.content > 20.0);
        let expected_g = g_score(report.accuracy, report.content);
        assert!((report.g_score - expected_g).abs() < 1e-9);
        assert_eq!(report.per_direction.len(), 2);
    }
}
