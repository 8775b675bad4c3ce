//! File-level commands behind the command-line tool. Each one validates its
//! whole configuration before touching the filesystem.

use crate::answer_lm::DecoderConfig;
use crate::error::{config_err, Error, Result};
use crate::gac::GacConfig;
use crate::model::{ModelConfig, TrainConfig, VqaTrainer};
use crate::protocol::{run_protocol, Aggregate, EvalReport, ProtocolData, ProtocolSpec};
use crate::scf::{
    assemble_dcap, filter_with_stats, read_corpus, write_corpus, CaptionRecord, CaptionSource, CaptionerStub,
    FilterStats, KeywordDictionary, Label, MatchOptions,
};
use crate::synth::{generate_domain, write_features, DomainSpec, FeatureDims};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read};
use std::path::{Path, PathBuf};

pub const DEFAULT_ALPHA_GRID: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

/// Reads a JSON config; parse failures become config errors naming the file.
pub fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| config_err(format!("{}: {e}", path.display())))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub domains: Vec<DomainSpec>,
    #[serde(default)]
    pub dims: FeatureDims,
    #[serde(default)]
    pub captioner: CaptionerStub,
    #[serde(default)]
    pub dictionary: KeywordDictionary,
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.domains.is_empty() {
            return Err(config_err("domains must list at least one domain"));
        }
        let mut tags = std::collections::HashSet::new();
        for d in &self.domains {
            d.validate()?;
            if !tags.insert(&d.domain_tag) {
                return Err(config_err(format!("domains: duplicate domain_tag `{}`", d.domain_tag)));
            }
        }
        self.dims.validate()?;
        self.captioner.validate()
    }

    /// Replaces every domain's seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        for d in &mut self.domains {
            d.seed = seed;
        }
        self
    }
}

/// Files written by [`cmd_gen`] for one domain.
#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedDomain {
    pub domain_tag: String,
    pub corpus: PathBuf,
    pub features: PathBuf,
    pub n_samples: usize,
}

/// Writes `<tag>.jsonl` (caption records) and `<tag>.feat` (features) for
/// each domain.
pub fn cmd_gen(config: &GenConfig, out: &Path) -> Result<Vec<GeneratedDomain>> {
    config.validate()?;
    fs::create_dir_all(out)?;
    let mut written = Vec::new();
    for d in &config.domains {
        let samples = generate_domain(d, &config.dims, &config.captioner, &config.dictionary)?;
        let corpus = out.join(format!("{}.jsonl", d.domain_tag));
        let features = out.join(format!("{}.feat", d.domain_tag));
        let records: Vec<CaptionRecord> = samples.iter().map(|s| s.record.clone()).collect();
        write_corpus(create(&corpus)?, &records)?;
        write_features(create(&features)?, &d.domain_tag, &config.dims, &samples)?;
        written.push(GeneratedDomain {
            domain_tag: d.domain_tag.clone(),
            corpus,
            features,
            n_samples: samples.len(),
        });
    }
    Ok(written)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScfConfig {
    /// Caption corpus (one JSON record per line).
    pub corpus: PathBuf,
    #[serde(default)]
    pub captioner: CaptionerStub,
    #[serde(default)]
    pub dictionary: KeywordDictionary,
    #[serde(default)]
    pub word_boundary: bool,
    #[serde(default)]
    pub seed: u64,
}

impl ScfConfig {
    pub fn validate(&self) -> Result<()> {
        if self.corpus.as_os_str().is_empty() {
            return Err(config_err("corpus must name a file"));
        }
        self.captioner.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScfOutcome {
    pub n_real: usize,
    pub n_fake: usize,
    pub n_dcap: usize,
    pub stats: FilterStats,
}

/// Recaptions fakes spoof-aware (records already captioned that way are
/// kept as is), filters them and assembles the captioned dataset. Writes
/// `ds.jsonl` (unfiltered spoof-aware fakes), `dcap.jsonl` and
/// `scf_stats.csv`.
pub fn cmd_scf(config: &ScfConfig, out: &Path) -> Result<ScfOutcome> {
    config.validate()?;
    let file = File::open(&config.corpus).map_err(|e| config_err(format!("corpus {}: {e}", config.corpus.display())))?;
    let records = read_corpus(BufReader::new(file))?;
    let (reals, fakes): (Vec<CaptionRecord>, Vec<CaptionRecord>) =
        records.into_iter().partition(|r| r.label == Label::Real);
    let ds: Vec<CaptionRecord> = fakes
        .iter()
        .map(|r| match r.caption_source {
            CaptionSource::SpoofAware => r.clone(),
            CaptionSource::General => {
                config
                    .captioner
                    .recaption(r, CaptionSource::SpoofAware, config.seed, &config.dictionary)
            }
        })
        .collect();
    let opts = MatchOptions {
        word_boundary: config.word_boundary,
    };
    let (kept, stats) = filter_with_stats(&ds, &config.dictionary, opts)?;
    let n_real = reals.len();
    let dcap = assemble_dcap(reals, kept, stats)?;
    fs::create_dir_all(out)?;
    write_corpus(create(&out.join("ds.jsonl"))?, &ds)?;
    write_corpus(create(&out.join("dcap.jsonl"))?, &dcap.records)?;
    dcap.stats.write_csv(create(&out.join("scf_stats.csv"))?)?;
    Ok(ScfOutcome {
        n_real,
        n_fake: ds.len(),
        n_dcap: dcap.records.len(),
        stats: dcap.stats,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub protocol: ProtocolSpec,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub dims: FeatureDims,
    #[serde(default)]
    pub captioner: CaptionerStub,
    #[serde(default)]
    pub dictionary: KeywordDictionary,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainConfig,
    /// Grid for the alpha sweep.
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
}

fn default_alphas() -> Vec<f64> {
    DEFAULT_ALPHA_GRID.to_vec()
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.protocol.validate()?;
        if self.seeds.is_empty() {
            return Err(config_err("seeds must list at least one seed"));
        }
        self.dims.validate()?;
        self.captioner.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        if self.model.gac.d_enc != self.dims.d_enc || self.model.gac.n_layers_vision != self.dims.n_layers {
            return Err(config_err(format!(
                "model.gac (d_enc {}, n_layers_vision {}) must match dims (d_enc {}, n_layers {})",
                self.model.gac.d_enc, self.model.gac.n_layers_vision, self.dims.d_enc, self.dims.n_layers
            )));
        }
        if self.alphas.is_empty() {
            return Err(config_err("alphas must list at least one value"));
        }
        if let Some((i, a)) = self.alphas.iter().enumerate().find(|(_, a)| !(0.0..=1.0).contains(*a)) {
            return Err(config_err(format!("alphas[{i}] ({a}) must lie in [0, 1]")));
        }
        Ok(())
    }

    /// Two sources, three shifted targets, a one-block model: trains in
    /// seconds per seed on one core.
    pub fn desk_scale(seeds: Vec<u64>) -> Self {
        let mix = [0.25; 4];
        let dom = |tag: &str, n: usize, mix: [f64; 4], shift: f64, seed: u64| DomainSpec::new(tag, n, mix, 3.0, shift, seed);
        let dims = FeatureDims::default();
        Self {
            protocol: ProtocolSpec {
                name: "src_a&src_b to 3 targets".into(),
                sources: vec![dom("src_a", 1000, mix, 0.2, 11), dom("src_b", 1000, mix, 0.4, 12)],
                targets: vec![
                    dom("tgt_c", 500, mix, 0.3, 21),
                    dom("tgt_d", 500, [0.4, 0.4, 0.1, 0.1], 0.5, 22),
                    dom("tgt_e", 500, [0.1, 0.1, 0.4, 0.4], 0.6, 23),
                ],
                dev_fraction: 0.2,
            },
            seeds,
            model: ModelConfig {
                gac: GacConfig {
                    d_model: 32,
                    n_heads: 2,
                    n_learnable: 4,
                    n_layers_vision: dims.n_layers,
                    mlp_hidden: 64,
                    d_enc: dims.d_enc,
                },
                decoder: DecoderConfig {
                    d_model: 32,
                    n_heads: 2,
                    n_blocks: 1,
                    mlp_hidden: 64,
                    ..Default::default()
                },
            },
            train: TrainConfig {
                epochs: 10,
                ..Default::default()
            },
            dims,
            captioner: CaptionerStub::default(),
            dictionary: KeywordDictionary::default(),
            alphas: default_alphas(),
        }
    }

    pub fn trainer(&self) -> VqaTrainer {
        VqaTrainer {
            model: self.model.clone(),
            train: self.train.clone(),
            captioner: self.captioner,
            dict: self.dictionary.clone(),
        }
    }

    pub fn data(&self) -> Result<ProtocolData> {
        ProtocolData::generate(&self.protocol, &self.dims, &self.captioner, &self.dictionary)
    }
}

/// Runs the protocol for every seed and writes `report.json` and
/// `report.csv`.
pub fn cmd_train_eval(config: &ExperimentConfig, out: &Path) -> Result<EvalReport> {
    config.validate()?;
    fs::create_dir_all(out)?;
    let data = config.data()?;
    let report = run_protocol(&config.protocol, &data, &config.trainer(), &config.seeds)?;
    report.write_json(create(&out.join("report.json"))?)?;
    report.write_csv(create(&out.join("report.csv"))?)?;
    Ok(report)
}

/// One row of the alpha sweep: aggregates plus the paired per-seed values.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub alpha: f64,
    pub hter: Aggregate,
    pub auc: Aggregate,
    pub judgment_accuracy: Aggregate,
    /// `(seed, hter, auc, judgment accuracy)`
    pub per_seed: Vec<(u64, f64, f64, f64)>,
}

impl SweepRow {
    fn from_report(alpha: f64, r: &EvalReport) -> Self {
        Self {
            alpha,
            hter: r.hter,
            auc: r.auc,
            judgment_accuracy: r.judgment_accuracy,
            per_seed: r
                .seeds
                .iter()
                .map(|s| (s.seed, s.avg_hter, s.avg_auc, s.avg_judgment_accuracy))
                .collect(),
        }
    }
}

const SWEEP_HEAD: [&str; 7] = [
    "alpha",
    "mean_hter",
    "var_hter",
    "mean_auc",
    "var_auc",
    "mean_judgment_accuracy",
    "var_judgment_accuracy",
];

pub fn write_sweep_csv<W: std::io::Write>(mut w: W, rows: &[SweepRow]) -> Result<()> {
    let seeds: Vec<u64> = rows.first().map(|r| r.per_seed.iter().map(|s| s.0).collect()).unwrap_or_default();
    let list: Vec<String> = seeds.iter().map(u64::to_string).collect();
    writeln!(w, "# paired seeds: every alpha was trained on seeds {}", list.join(","))?;
    let mut wtr = csv::Writer::from_writer(w);
    let mut head: Vec<String> = SWEEP_HEAD.iter().map(|s| s.to_string()).collect();
    for s in &seeds {
        head.extend([format!("hter_seed{s}"), format!("auc_seed{s}"), format!("judgment_accuracy_seed{s}")]);
    }
    wtr.write_record(&head)?;
    for r in rows {
        let mut rec = vec![
            r.alpha,
            r.hter.mean,
            r.hter.variance,
            r.auc.mean,
            r.auc.variance,
            r.judgment_accuracy.mean,
            r.judgment_accuracy.variance,
        ];
        for &(_, h, a, j) in &r.per_seed {
            rec.extend([h, a, j]);
        }
        wtr.write_record(rec.iter().map(f64::to_string))?;
    }
    wtr.flush()?;
    Ok(())
}

/// Parses a sweep CSV and recomputes the aggregates from its per-seed
/// columns.
pub fn read_sweep_csv<R: Read>(r: R) -> Result<Vec<SweepRow>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
    let head = rdr.headers()?.clone();
    if head.len() < SWEEP_HEAD.len() || (head.len() - SWEEP_HEAD.len()) % 3 != 0 {
        return Err(Error::Data(format!("unexpected sweep header with {} columns", head.len())));
    }
    let seeds = (SWEEP_HEAD.len()..head.len())
        .step_by(3)
        .map(|i| {
            head[i]
                .strip_prefix("hter_seed")
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| Error::Data(format!("bad sweep column `{}`", &head[i])))
        })
        .collect::<Result<Vec<u64>>>()?;
    let mut rows = Vec::new();
    for (line, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let vals = rec
            .iter()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<Vec<f64>, _>>()
            .map_err(|e| Error::DataLine {
                line: line + 3,
                msg: e.to_string(),
            })?;
        let per_seed: Vec<(u64, f64, f64, f64)> = seeds
            .iter()
            .enumerate()
            .map(|(k, &s)| {
                let o = SWEEP_HEAD.len() + 3 * k;
                (s, vals[o], vals[o + 1], vals[o + 2])
            })
            .collect();
        let col = |f: fn(&(u64, f64, f64, f64)) -> f64| Aggregate::of(&per_seed.iter().map(f).collect::<Vec<_>>());
        rows.push(SweepRow {
            alpha: vals[0],
            hter: col(|s| s.1),
            auc: col(|s| s.2),
            judgment_accuracy: col(|s| s.3),
            per_seed,
        });
    }
    Ok(rows)
}

/// Runs the protocol once per alpha with the same seeds and data, writing
/// `alpha_sweep.csv`.
pub fn cmd_sweep_alpha(config: &ExperimentConfig, out: &Path) -> Result<Vec<SweepRow>> {
    config.validate()?;
    fs::create_dir_all(out)?;
    let data = config.data()?;
    let mut rows = Vec::with_capacity(config.alphas.len());
    for &alpha in &config.alphas {
        let mut trainer = config.trainer();
        trainer.train.alpha = alpha;
        let report = run_protocol(&config.protocol, &data, &trainer, &config.seeds)?;
        rows.push(SweepRow::from_report(alpha, &report));
    }
    write_sweep_csv(create(&out.join("alpha_sweep.csv"))?, &rows)?;
    Ok(rows)
}
