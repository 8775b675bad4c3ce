//! Independent reference implementations. None of these call into the
//! code they check.

use spoofvqa::scf::{CaptionRecord, KeywordDictionary, Label, SpoofType};
use spoofvqa::metrics::ScoredSample;

pub fn naive_matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            for p in 0..k {
                c[i * n + j] += a[i * k + p] * b[p * n + j];
            }
        }
    }
    c
}

fn split(s: &[ScoredSample]) -> (Vec<f64>, Vec<f64>) {
    let r = s.iter().filter(|x| x.label == Label::Real).map(|x| x.score).collect();
    let f = s.iter().filter(|x| x.label == Label::Fake).map(|x| x.score).collect();
    (r, f)
}

/// O(n²) pairwise AUC in percent.
pub fn auc_pairwise(s: &[ScoredSample]) -> f64 {
    let (reals, fakes) = split(s);
    let mut wins = 0.0;
    for r in &reals {
        for f in &fakes {
            if r > f {
                wins += 1.0;
            } else if r == f {
                wins += 0.5;
            }
        }
    }
    100.0 * wins / (reals.len() * fakes.len()) as f64
}

/// Trapezoidal area under the ROC curve traced by descending thresholds.
pub fn auc_trapezoid(s: &[ScoredSample]) -> f64 {
    let (reals, fakes) = split(s);
    let mut ts: Vec<f64> = s.iter().map(|x| x.score).collect();
    ts.sort_by(|a, b| b.partial_cmp(a).unwrap());
    ts.dedup();
    let mut pts = vec![(0.0, 0.0)];
    for t in ts {
        let tpr = reals.iter().filter(|&&r| r >= t).count() as f64 / reals.len() as f64;
        let fpr = fakes.iter().filter(|&&f| f >= t).count() as f64 / fakes.len() as f64;
        pts.push((fpr, tpr));
    }
    let area: f64 = pts.windows(2).map(|w| (w[1].0 - w[0].0) * (w[1].1 + w[0].1) / 2.0).sum();
    100.0 * area
}

/// HTER in percent by direct counting.
pub fn hter_count(s: &[ScoredSample], t: f64) -> f64 {
    let (reals, fakes) = split(s);
    let far = fakes.iter().filter(|&&f| f >= t).count() as f64 / fakes.len() as f64;
    let frr = reals.iter().filter(|&&r| r < t).count() as f64 / reals.len() as f64;
    50.0 * (far + frr)
}

/// Exhaustive sweep: every midpoint of sorted unique scores plus both
/// extremes; returns the smallest threshold with the minimum counted HTER.
pub fn best_threshold_sweep(s: &[ScoredSample]) -> (f64, f64) {
    let mut u: Vec<f64> = s.iter().map(|x| x.score).collect();
    u.sort_by(|a, b| a.partial_cmp(b).unwrap());
    u.dedup();
    let mut cands = vec![u[0]];
    for w in u.windows(2) {
        cands.push((w[0] + w[1]) / 2.0);
    }
    cands.push(u[u.len() - 1] + 1e-9);
    let (nr, nf) = {
        let (r, f) = split(s);
        (r.len(), f.len())
    };
    let mut best = (f64::INFINITY, usize::MAX);
    for &t in &cands {
        let fa = s.iter().filter(|x| x.label == Label::Fake && x.score >= t).count();
        let fr = s.iter().filter(|x| x.label == Label::Real && x.score < t).count();
        let cost = fa * nr + fr * nf;
        if cost < best.1 {
            best = (t, cost);
        }
    }
    (best.0, hter_count(s, best.0))
}

fn lower_collapse(s: &str) -> String {
    let mut out = String::new();
    for w in s.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(&w.to_lowercase());
    }
    out
}

fn occurs_at_boundary(text: &[char], kw: &[char]) -> bool {
    if kw.len() > text.len() {
        return false;
    }
    (0..=text.len() - kw.len()).any(|i| {
        text[i..i + kw.len()] == *kw
            && (i == 0 || !text[i - 1].is_alphanumeric())
            && (i + kw.len() == text.len() || !text[i + kw.len()].is_alphanumeric())
    })
}

/// Double loop over (record, keyword).
pub fn naive_scan(records: &[CaptionRecord], dict: &KeywordDictionary, word_boundary: bool) -> Vec<CaptionRecord> {
    let entries: Vec<(String, SpoofType)> = dict.iter().map(|(k, t)| (k.to_string(), t)).collect();
    let mut kept = Vec::new();
    for r in records {
        let text = lower_collapse(&r.caption);
        let chars: Vec<char> = text.chars().collect();
        let mut hit = false;
        for (k, t) in &entries {
            let present = if word_boundary {
                occurs_at_boundary(&chars, &k.chars().collect::<Vec<_>>())
            } else {
                text.contains(k.as_str())
            };
            if present && Some(*t) == r.spoof_type {
                hit = true;
            }
        }
        if hit {
            kept.push(r.clone());
        }
    }
    kept
}

/// `(before, after)` for one keyword by recounting from scratch: records
/// whose caption contains it, and retained records of the keyword's own type
/// that contain it.
pub fn recount_keyword(records: &[CaptionRecord], kept: &[CaptionRecord], keyword: &str, t: SpoofType) -> (usize, usize) {
    let has = |r: &&CaptionRecord| lower_collapse(&r.caption).contains(keyword);
    let before = records.iter().filter(has).count();
    let after = kept.iter().filter(has).filter(|r| r.spoof_type == Some(t)).count();
    (before, after)
}

/// L2-regularised logistic regression by full-batch gradient descent on
/// standardised features; returns held-out scores.
pub fn logistic_probe(train: &[(Vec<f64>, bool)], test: &[Vec<f64>]) -> Vec<f64> {
    let d = train[0].0.len();
    let n = train.len() as f64;
    let mut mean = vec![0.0; d];
    let mut sd = vec![0.0; d];
    for (x, _) in train {
        for j in 0..d {
            mean[j] += x[j] / n;
        }
    }
    for (x, _) in train {
        for j in 0..d {
            sd[j] += (x[j] - mean[j]).powi(2) / n;
        }
    }
    let sd: Vec<f64> = sd.iter().map(|v| v.sqrt().max(1e-9)).collect();
    let z = |x: &[f64]| -> Vec<f64> { (0..d).map(|j| (x[j] - mean[j]) / sd[j]).collect() };
    let xs: Vec<(Vec<f64>, f64)> = train.iter().map(|(x, y)| (z(x), if *y { 1.0 } else { 0.0 })).collect();
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    for _ in 0..300 {
        let mut gw = vec![0.0; d];
        let mut gb = 0.0;
        for (x, y) in &xs {
            let s: f64 = b + x.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>();
            let p = 1.0 / (1.0 + (-s).exp());
            for j in 0..d {
                gw[j] += (p - y) * x[j] / n;
            }
            gb += (p - y) / n;
        }
        for j in 0..d {
            w[j] -= 0.5 * (gw[j] + 1e-3 * w[j]);
        }
        b -= 0.5 * gb;
    }
    test.iter()
        .map(|x| {
            let x = z(x);
            let s: f64 = b + x.iter().zip(&w).map(|(a, c)| a * c).sum::<f64>();
            1.0 / (1.0 + (-s).exp())
        })
        .collect()
}

/// Plain row-major matrices for the straight-line connector oracle.
pub mod mat {
    pub type M = Vec<Vec<f64>>;

    pub fn mm(a: &M, b: &M) -> M {
        a.iter()
            .map(|r| (0..b[0].len()).map(|j| r.iter().zip(b).map(|(x, br)| x * br[j]).sum()).collect())
            .collect()
    }
    pub fn add(a: &M, b: &M) -> M {
        a.iter().zip(b).map(|(x, y)| x.iter().zip(y).map(|(p, q)| p + q).collect()).collect()
    }
    pub fn add_bias(a: &M, b: &[f64]) -> M {
        a.iter().map(|r| r.iter().zip(b).map(|(x, y)| x + y).collect()).collect()
    }
    pub fn linear(x: &M, w: &M, b: &[f64]) -> M {
        add_bias(&mm(x, w), b)
    }
    pub fn t(a: &M) -> M {
        (0..a[0].len()).map(|j| a.iter().map(|r| r[j]).collect()).collect()
    }
    pub fn ln(a: &M, g: &[f64], b: &[f64]) -> M {
        a.iter()
            .map(|r| {
                let d = r.len() as f64;
                let mu = r.iter().sum::<f64>() / d;
                let var = r.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / d;
                r.iter()
                    .enumerate()
                    .map(|(j, x)| (x - mu) / (var + 1e-5).sqrt() * g[j] + b[j])
                    .collect()
            })
            .collect()
    }
    pub fn softmax_rows(a: &M) -> M {
        a.iter()
            .map(|r| {
                let m = r.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let e: Vec<f64> = r.iter().map(|x| (x - m).exp()).collect();
                let s: f64 = e.iter().sum();
                e.into_iter().map(|x| x / s).collect()
            })
            .collect()
    }
    pub fn gelu(a: &M) -> M {
        let c = (2.0 / std::f64::consts::PI).sqrt();
        a.iter()
            .map(|r| r.iter().map(|&x| 0.5 * x * (1.0 + (c * (x + 0.044715 * x.powi(3))).tanh())).collect())
            .collect()
    }
}

/// Mean token cross-entropy of `rows` computed with a direct log-sum-exp.
pub fn mean_ce(logits: &[Vec<f64>], targets: &[usize], rows: std::ops::Range<usize>) -> f64 {
    let n = rows.len() as f64;
    rows.map(|r| {
        let m = logits[r].iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + logits[r].iter().map(|x| (x - m).exp()).sum::<f64>().ln();
        lse - logits[r][targets[r]]
    })
    .sum::<f64>()
        / n
}
