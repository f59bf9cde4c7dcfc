//! Edit-distance error rates (UER / PER).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::LabelSequence;

/// Unit-cost Levenshtein distance over arbitrary symbols.
pub fn edit_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() {
        return b.len();
    }
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for (i, x) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, y) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(x != y);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

pub fn levenshtein(a: &LabelSequence, b: &LabelSequence) -> Result<usize> {
    if !a.same_vocab(b) {
        return Err(Error::InvalidArgument(format!(
            "vocabulary mismatch: {:?}/{} vs {:?}/{}",
            a.kind(),
            a.vocab_size(),
            b.kind(),
            b.vocab_size()
        )));
    }
    Ok(edit_distance(a.symbols(), b.symbols()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceError {
    pub edits: usize,
    pub target_len: usize,
    /// `edits / target_len`; equals `edits` for empty targets.
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub per_utterance: Vec<UtteranceError>,
    /// Total edits over total target length.
    pub aggregate: f64,
    /// Unweighted mean of per-utterance rates.
    pub mean_of_rates: f64,
    /// Pairs with an empty target, left out of both averages.
    pub empty_targets: usize,
}

pub fn error_rate(targets: &[LabelSequence], predictions: &[LabelSequence]) -> Result<ErrorReport> {
    if targets.len() != predictions.len() {
        return Err(Error::LengthMismatch {
            what: "targets vs predictions".into(),
            left: targets.len(),
            right: predictions.len(),
        });
    }
    let mut per_utterance = Vec::with_capacity(targets.len());
    let (mut edits_total, mut len_total, mut rate_sum, mut counted, mut empty) = (0, 0, 0.0, 0, 0);
    for (t, p) in targets.iter().zip(predictions) {
        let edits = levenshtein(t, p)?;
        let n = t.len();
        let rate = if n == 0 {
            empty += 1;
            edits as f64
        } else {
            edits_total += edits;
            len_total += n;
            rate_sum += edits as f64 / n as f64;
            counted += 1;
            edits as f64 / n as f64
        };
        per_utterance.push(UtteranceError {
            edits,
            target_len: n,
            rate,
        });
    }
    if empty > 0 {
        log::warn!("{empty} utterance(s) with empty targets excluded from error-rate averages");
    }
    if len_total == 0 {
        return Err(Error::InvalidArgument("total target length is zero".into()));
    }
    Ok(ErrorReport {
        per_utterance,
        aggregate: edits_total as f64 / len_total as f64,
        mean_of_rates: rate_sum / counted as f64,
        empty_targets: empty,
    })
}

/// Spread of a rate over independent training runs (seeds).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSpread {
    pub runs: usize,
    pub mean: f64,
    /// Sample standard deviation (n − 1); zero for a single run.
    pub std: f64,
}

impl RunSpread {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let std = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Self {
            runs: values.len(),
            mean,
            std,
        })
    }
}

/// Aggregate and mean-of-rates spreads over several runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiRunReport {
    pub aggregate: RunSpread,
    pub mean_of_rates: RunSpread,
}

pub fn summarize_runs(reports: &[ErrorReport]) -> Option<MultiRunReport> {
    let agg: Vec<f64> = reports.iter().map(|r| r.aggregate).collect();
    let mor: Vec<f64> = reports.iter().map(|r| r.mean_of_rates).collect();
    Some(MultiRunReport {
        aggregate: RunSpread::of(&agg)?,
        mean_of_rates: RunSpread::of(&mor)?,
    })
}
