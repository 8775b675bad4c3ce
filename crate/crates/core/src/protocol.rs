//! Cross-domain protocols: train on source domains, score unseen targets,
//! repeat per seed, aggregate.
//!
//! The HTER threshold is chosen on a held-out dev split of the sources, so
//! targets are never peeked at. An equal-error-rate HTER computed on each
//! target itself is reported alongside as `hter_oracle_eer`; it is an
//! optimistic number.

use crate::error::{config_err, Result};
use crate::gac::VisualFeatures;
use crate::metrics::{self, ScoredSample};
use crate::rng::{hash_str, stream_rng, Stream};
use crate::scf::{CaptionerStub, KeywordDictionary, Label};
use crate::synth::{generate_domain, DomainSpec, FeatureDims, SynthSample};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::io::Write;

/// Environment variable capping worker threads.
pub const THREADS_ENV: &str = "SPOOFVQA_THREADS";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSpec {
    pub name: String,
    pub sources: Vec<DomainSpec>,
    pub targets: Vec<DomainSpec>,
    /// Share of each source domain held out for threshold selection.
    #[serde(default = "default_dev_fraction")]
    pub dev_fraction: f64,
}

fn default_dev_fraction() -> f64 {
    0.2
}

impl ProtocolSpec {
    pub fn validate(&self) -> Result<()> {
        if self.sources.is_empty() {
            return Err(config_err("protocol.sources must list at least one domain"));
        }
        if self.targets.is_empty() {
            return Err(config_err("protocol.targets must list at least one domain"));
        }
        let mut seen = HashSet::new();
        for d in self.sources.iter().chain(&self.targets) {
            d.validate()?;
            if !seen.insert(d.domain_tag.as_str()) {
                return Err(config_err(format!(
                    "protocol: domain tag `{}` appears more than once (sources and targets must be disjoint)",
                    d.domain_tag
                )));
            }
        }
        if !(self.dev_fraction > 0.0 && self.dev_fraction < 1.0) {
            return Err(config_err("protocol.dev_fraction must lie in (0, 1)"));
        }
        Ok(())
    }
}

/// Every domain in turn held out as the target, the rest as sources.
pub fn leave_one_domain_out(domains: &[DomainSpec]) -> Vec<ProtocolSpec> {
    (0..domains.len())
        .map(|i| {
            let sources: Vec<DomainSpec> = domains
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, d)| d.clone())
                .collect();
            let tags: Vec<&str> = sources.iter().map(|d| d.domain_tag.as_str()).collect();
            ProtocolSpec {
                name: format!("{} to {}", tags.join("&"), domains[i].domain_tag),
                sources,
                targets: vec![domains[i].clone()],
                dev_fraction: default_dev_fraction(),
            }
        })
        .collect()
}

/// One source domain, many targets.
pub fn one_to_many(source: DomainSpec, targets: Vec<DomainSpec>) -> ProtocolSpec {
    ProtocolSpec {
        name: format!("{} to {} targets", source.domain_tag, targets.len()),
        sources: vec![source],
        targets,
        dev_fraction: default_dev_fraction(),
    }
}

/// Score plus hard judgment for one image.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Prediction {
    pub score: f64,
    pub judgment: Label,
}

pub trait LivenessModel: Send + Sync {
    fn predict(&self, vis: &VisualFeatures) -> Result<Prediction>;
}

pub trait LivenessTrainer: Sync {
    type Model: LivenessModel;
    fn train(&self, train: &[SynthSample], seed: u64) -> Result<Self::Model>;
}

/// Data a protocol runs on, generated once and shared by all seeds.
#[derive(Clone, Debug)]
pub struct ProtocolData {
    pub train: Vec<SynthSample>,
    pub dev: Vec<SynthSample>,
    pub targets: Vec<(String, Vec<SynthSample>)>,
}

impl ProtocolData {
    pub fn generate(
        spec: &ProtocolSpec,
        dims: &FeatureDims,
        captioner: &CaptionerStub,
        dict: &KeywordDictionary,
    ) -> Result<Self> {
        spec.validate()?;
        let mut train = Vec::new();
        let mut dev = Vec::new();
        for d in &spec.sources {
            let mut samples = generate_domain(d, dims, captioner, dict)?;
            samples.shuffle(&mut stream_rng(d.seed, Stream::Split, hash_str(&d.domain_tag)));
            let n_dev = ((samples.len() as f64 * spec.dev_fraction).round() as usize).clamp(1, samples.len() - 1);
            let rest = samples.split_off(n_dev);
            dev.extend(samples);
            train.extend(rest);
        }
        let targets = spec
            .targets
            .iter()
            .map(|d| Ok((d.domain_tag.clone(), generate_domain(d, dims, captioner, dict)?)))
            .collect::<Result<_>>()?;
        Ok(Self { train, dev, targets })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainResult {
    pub domain_tag: String,
    pub auc: f64,
    pub hter: f64,
    pub hter_oracle_eer: f64,
    pub judgment_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub threshold: f64,
    pub domains: Vec<DomainResult>,
    pub avg_auc: f64,
    pub avg_hter: f64,
    pub avg_hter_oracle_eer: f64,
    pub avg_judgment_accuracy: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    /// Sample variance (n − 1); zero for a single value.
    pub variance: f64,
}

impl Aggregate {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = mean(values);
        let variance = if values.len() > 1 {
            values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Self { mean, variance }
    }
}

pub fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSummary {
    pub domain_tag: String,
    pub auc: Aggregate,
    pub hter: Aggregate,
    pub hter_oracle_eer: Aggregate,
    pub judgment_accuracy: Aggregate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub protocol: String,
    pub seeds: Vec<SeedResult>,
    pub per_domain: Vec<DomainSummary>,
    /// Aggregates over seeds of the cross-domain averages.
    pub auc: Aggregate,
    pub hter: Aggregate,
    pub hter_oracle_eer: Aggregate,
    pub judgment_accuracy: Aggregate,
}

impl EvalReport {
    pub fn from_seeds(protocol: &str, seeds: Vec<SeedResult>) -> Self {
        let pick = |f: fn(&SeedResult) -> f64| Aggregate::of(&seeds.iter().map(f).collect::<Vec<_>>());
        let tags: Vec<String> = seeds
            .first()
            .map(|s| s.domains.iter().map(|d| d.domain_tag.clone()).collect())
            .unwrap_or_default();
        let per_domain = tags
            .iter()
            .enumerate()
            .map(|(i, tag)| {
                let col = |f: fn(&DomainResult) -> f64| {
                    Aggregate::of(&seeds.iter().map(|s| f(&s.domains[i])).collect::<Vec<_>>())
                };
                DomainSummary {
                    domain_tag: tag.clone(),
                    auc: col(|d| d.auc),
                    hter: col(|d| d.hter),
                    hter_oracle_eer: col(|d| d.hter_oracle_eer),
                    judgment_accuracy: col(|d| d.judgment_accuracy),
                }
            })
            .collect();
        Self {
            protocol: protocol.to_string(),
            auc: pick(|s| s.avg_auc),
            hter: pick(|s| s.avg_hter),
            hter_oracle_eer: pick(|s| s.avg_hter_oracle_eer),
            judgment_accuracy: pick(|s| s.avg_judgment_accuracy),
            per_domain,
            seeds,
        }
    }

    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    /// One row per (seed, domain), per-seed `avg` rows, then `mean` and
    /// `variance` rows across seeds.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["seed", "domain", "auc", "hter", "hter_oracle_eer", "judgment_accuracy"])?;
        let num = |v: f64| format!("{v}");
        for s in &self.seeds {
            let seed = s.seed.to_string();
            for d in &s.domains {
                wtr.write_record([
                    seed.as_str(),
                    &d.domain_tag,
                    &num(d.auc),
                    &num(d.hter),
                    &num(d.hter_oracle_eer),
                    &num(d.judgment_accuracy),
                ])?;
            }
            wtr.write_record([
                seed.as_str(),
                "avg",
                &num(s.avg_auc),
                &num(s.avg_hter),
                &num(s.avg_hter_oracle_eer),
                &num(s.avg_judgment_accuracy),
            ])?;
        }
        for (stat, get) in [("mean", (|a: &Aggregate| a.mean) as fn(&Aggregate) -> f64), ("variance", |a| a.variance)] {
            for d in &self.per_domain {
                wtr.write_record([
                    stat,
                    &d.domain_tag,
                    &num(get(&d.auc)),
                    &num(get(&d.hter)),
                    &num(get(&d.hter_oracle_eer)),
                    &num(get(&d.judgment_accuracy)),
                ])?;
            }
            wtr.write_record([
                stat,
                "avg",
                &num(get(&self.auc)),
                &num(get(&self.hter)),
                &num(get(&self.hter_oracle_eer)),
                &num(get(&self.judgment_accuracy)),
            ])?;
        }
        wtr.flush()?;
        Ok(())
    }
}

/// Scores every sample with `model`.
pub fn score_samples<M: LivenessModel>(model: &M, samples: &[SynthSample], tag: &str) -> Result<(Vec<ScoredSample>, Vec<(Label, Label)>)> {
    let mut scored = Vec::with_capacity(samples.len());
    let mut judged = Vec::with_capacity(samples.len());
    for s in samples {
        let p = model.predict(&s.vis)?;
        scored.push(ScoredSample::new(p.score, s.label, tag));
        judged.push((p.judgment, s.label));
    }
    Ok((scored, judged))
}

/// Evaluates one trained model on prepared protocol data.
pub fn evaluate_seed<M: LivenessModel>(model: &M, data: &ProtocolData, seed: u64) -> Result<SeedResult> {
    let (dev_scores, _) = score_samples(model, &data.dev, "dev")?;
    let threshold = metrics::select_threshold(&dev_scores)?;
    let mut domains = Vec::with_capacity(data.targets.len());
    for (tag, samples) in &data.targets {
        let (scored, judged) = score_samples(model, samples, tag)?;
        let eer_t = metrics::eer_threshold(&scored)?;
        domains.push(DomainResult {
            domain_tag: tag.clone(),
            auc: metrics::compute_auc(&scored)?,
            hter: metrics::compute_hter(&scored, threshold)?,
            hter_oracle_eer: metrics::compute_hter(&scored, eer_t)?,
            judgment_accuracy: metrics::accuracy(&judged),
        });
    }
    let avg = |f: fn(&DomainResult) -> f64| mean(&domains.iter().map(f).collect::<Vec<_>>());
    Ok(SeedResult {
        seed,
        threshold,
        avg_auc: avg(|d| d.auc),
        avg_hter: avg(|d| d.hter),
        avg_hter_oracle_eer: avg(|d| d.hter_oracle_eer),
        avg_judgment_accuracy: avg(|d| d.judgment_accuracy),
        domains,
    })
}

/// Worker count from [`THREADS_ENV`], defaulting to rayon's choice.
pub fn worker_threads() -> Option<usize> {
    std::env::var(THREADS_ENV).ok()?.parse().ok().filter(|&n| n > 0)
}

/// Runs `f` over `items` in parallel, honouring [`THREADS_ENV`]; results
/// keep input order.
pub fn par_map<T: Sync, U: Send>(items: &[T], f: impl Fn(&T) -> Result<U> + Sync + Send) -> Result<Vec<U>> {
    let run = || items.par_iter().map(&f).collect::<Result<Vec<U>>>();
    match worker_threads() {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| config_err(format!("{THREADS_ENV}: {e}")))?
            .install(run),
        None => run(),
    }
}

/// Trains per seed on the sources, scores every target, aggregates.
pub fn run_protocol<T: LivenessTrainer>(
    spec: &ProtocolSpec,
    data: &ProtocolData,
    trainer: &T,
    seeds: &[u64],
) -> Result<EvalReport> {
    spec.validate()?;
    if seeds.is_empty() {
        return Err(config_err("seeds must list at least one seed"));
    }
    let results = par_map(seeds, |&seed| {
        let model = trainer.train(&data.train, seed)?;
        evaluate_seed(&model, data, seed)
    })?;
    Ok(EvalReport::from_seeds(&spec.name, results))
}
