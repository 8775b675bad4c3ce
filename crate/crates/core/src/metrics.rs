//! AUC and HTER for liveness scores (higher = more likely real).
//!
//! A sample is accepted as real when `score >= threshold`. FAR is the share
//! of fakes accepted, FRR the share of reals rejected, HTER their mean. All
//! metrics are reported in percent.

use crate::error::{Error, Result};
use crate::scf::Label;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoredSample {
    pub score: f64,
    pub label: Label,
    pub domain_tag: String,
}

impl ScoredSample {
    pub fn new(score: f64, label: Label, domain_tag: &str) -> Self {
        Self {
            score,
            label,
            domain_tag: domain_tag.to_string(),
        }
    }
}

fn check(samples: &[ScoredSample]) -> Result<(usize, usize)> {
    if let Some(s) = samples.iter().find(|s| !(s.score.is_finite() && (0.0..=1.0).contains(&s.score))) {
        return Err(Error::Metric(format!("score {} outside [0, 1]", s.score)));
    }
    let reals = samples.iter().filter(|s| s.label == Label::Real).count();
    let fakes = samples.len() - reals;
    if reals == 0 || fakes == 0 {
        return Err(Error::Metric(format!(
            "need both classes, got {reals} real and {fakes} fake"
        )));
    }
    Ok((reals, fakes))
}

/// Mann–Whitney AUC: `P(real > fake) + P(tie) / 2`, in percent.
pub fn compute_auc(samples: &[ScoredSample]) -> Result<f64> {
    let (n_real, n_fake) = check(samples)?;
    let mut order: Vec<&ScoredSample> = samples.iter().collect();
    order.sort_by(|a, b| a.score.total_cmp(&b.score));
    // sum of mid-ranks (1-based) of the real samples
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && order[j].score == order[i].score {
            j += 1;
        }
        let mid_rank = (i + 1 + j) as f64 / 2.0;
        let reals = order[i..j].iter().filter(|s| s.label == Label::Real).count();
        rank_sum += mid_rank * reals as f64;
        i = j;
    }
    let u = rank_sum - (n_real * (n_real + 1)) as f64 / 2.0;
    Ok(100.0 * u / (n_real as f64 * n_fake as f64))
}

/// Error counts at a threshold: `(false accepts, false rejects)`.
fn error_counts(samples: &[ScoredSample], threshold: f64) -> (usize, usize) {
    let mut fa = 0;
    let mut fr = 0;
    for s in samples {
        match s.label {
            Label::Fake if s.score >= threshold => fa += 1,
            Label::Real if s.score < threshold => fr += 1,
            _ => {}
        }
    }
    (fa, fr)
}

fn hter_from_counts(fa: usize, fr: usize, n_real: usize, n_fake: usize) -> f64 {
    50.0 * (fa as f64 / n_fake as f64 + fr as f64 / n_real as f64)
}

/// `(FAR + FRR) / 2` in percent.
pub fn compute_hter(samples: &[ScoredSample], threshold: f64) -> Result<f64> {
    let (n_real, n_fake) = check(samples)?;
    let (fa, fr) = error_counts(samples, threshold);
    Ok(hter_from_counts(fa, fr, n_real, n_fake))
}

/// Candidate thresholds, ascending: the lowest score (accept everything),
/// the midpoint of each pair of adjacent distinct scores, and the float just
/// above the highest score (reject everything).
pub fn candidate_thresholds(samples: &[ScoredSample]) -> Vec<f64> {
    let mut scores: Vec<f64> = samples.iter().map(|s| s.score).collect();
    scores.sort_by(f64::total_cmp);
    scores.dedup();
    let Some(&last) = scores.last() else { return vec![] };
    let mut out = Vec::with_capacity(scores.len() + 1);
    out.push(scores[0]);
    for w in scores.windows(2) {
        let mid = w[0] + (w[1] - w[0]) / 2.0;
        out.push(if mid > w[0] && mid <= w[1] { mid } else { w[1] });
    }
    out.push(last.next_up());
    out
}

/// Per-candidate `(threshold, false accepts, false rejects)` via one sorted
/// sweep.
fn sweep(samples: &[ScoredSample]) -> Vec<(f64, usize, usize)> {
    let cands = candidate_thresholds(samples);
    let mut sorted: Vec<&ScoredSample> = samples.iter().collect();
    sorted.sort_by(|a, b| a.score.total_cmp(&b.score));
    let total_fake = sorted.iter().filter(|s| s.label == Label::Fake).count();
    let mut out = Vec::with_capacity(cands.len());
    let mut below = 0;
    let (mut reals_below, mut fakes_below) = (0, 0);
    for &t in &cands {
        while below < sorted.len() && sorted[below].score < t {
            match sorted[below].label {
                Label::Real => reals_below += 1,
                Label::Fake => fakes_below += 1,
            }
            below += 1;
        }
        out.push((t, total_fake - fakes_below, reals_below));
    }
    out
}

/// Threshold with the lowest HTER on `dev`; ties go to the smallest.
pub fn select_threshold(dev: &[ScoredSample]) -> Result<f64> {
    let (n_real, n_fake) = check(dev)?;
    // HTER ∝ fa·n_real + fr·n_fake, compared exactly in integers
    let best = sweep(dev)
        .into_iter()
        .min_by_key(|&(_, fa, fr)| fa as u128 * n_real as u128 + fr as u128 * n_fake as u128)
        .expect("non-empty candidates");
    Ok(best.0)
}

/// Threshold where FAR and FRR are closest; ties go to the smallest.
pub fn eer_threshold(samples: &[ScoredSample]) -> Result<f64> {
    let (n_real, n_fake) = check(samples)?;
    let best = sweep(samples)
        .into_iter()
        .min_by_key(|&(_, fa, fr)| (fa as i128 * n_real as i128 - fr as i128 * n_fake as i128).unsigned_abs())
        .expect("non-empty candidates");
    Ok(best.0)
}

/// Share of correct hard judgments, in percent.
pub fn accuracy(pairs: &[(Label, Label)]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    100.0 * pairs.iter().filter(|(p, t)| p == t).count() as f64 / pairs.len() as f64
}
