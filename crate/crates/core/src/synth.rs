//! Seeded multi-domain corpora with planted spoof cues.
//!
//! Every sample has `N` local patch features and `L` per-layer global tokens
//! drawn from a standard normal. Fake samples additionally carry a cue whose
//! direction depends only on the spoof type (so it is shared by all
//! domains) and whose placement follows the layer contract:
//!
//! * print / replay: global tokens of layers `1..=ceil(L/2)` only;
//! * mask / mannequin: global tokens of layers `ceil(L/2)+1..=L` and every
//!   local feature.
//!
//! A domain then applies its own affine shift (one scale, one offset vector)
//! to all features.

use crate::container::{read_container, write_container};
use crate::error::{config_err, Error, Result};
use crate::gac::VisualFeatures;
use crate::rng::{hash_str, stream_rng, Stream};
use crate::scf::{CaptionRecord, CaptionSource, CaptionerStub, KeywordDictionary, Label, SpoofType};
use crate::tensor::Tensor;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

/// Cue directions are drawn once from this seed, independent of any domain.
const CUE_SEED: u64 = 0x5eed_c0de;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DomainSpec {
    pub domain_tag: String,
    pub n_samples: usize,
    /// Probabilities of print, replay, mask, mannequin among fakes.
    pub spoof_mix: [f64; 4],
    pub cue_strength: f64,
    pub shift: f64,
    pub seed: u64,
    #[serde(default = "half")]
    pub real_fraction: f64,
}

fn half() -> f64 {
    0.5
}

impl DomainSpec {
    pub fn new(tag: &str, n_samples: usize, spoof_mix: [f64; 4], cue_strength: f64, shift: f64, seed: u64) -> Self {
        Self {
            domain_tag: tag.to_string(),
            n_samples,
            spoof_mix,
            cue_strength,
            shift,
            seed,
            real_fraction: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let field = |f: &str| format!("domain `{}`: {f}", self.domain_tag);
        if self.domain_tag.is_empty() {
            return Err(config_err("domain_tag must be non-empty"));
        }
        if self.spoof_mix.iter().any(|p| !(p.is_finite() && *p >= 0.0))
            || (self.spoof_mix.iter().sum::<f64>() - 1.0).abs() > 1e-9
        {
            return Err(config_err(field("spoof_mix must be non-negative and sum to 1")));
        }
        if !(self.cue_strength.is_finite() && self.cue_strength >= 0.0) {
            return Err(config_err(field("cue_strength must be >= 0")));
        }
        if !self.shift.is_finite() {
            return Err(config_err(field("shift must be finite")));
        }
        if !(0.0..=1.0).contains(&self.real_fraction) {
            return Err(config_err(field("real_fraction must lie in [0, 1]")));
        }
        let (reals, fakes) = self.class_counts();
        if self.n_samples < 2 || reals == 0 || fakes == 0 {
            return Err(config_err(field("n_samples must be >= 2 with both classes present")));
        }
        Ok(())
    }

    /// `(reals, fakes)` after rounding.
    pub fn class_counts(&self) -> (usize, usize) {
        let reals = (self.n_samples as f64 * self.real_fraction).round() as usize;
        let reals = reals.min(self.n_samples);
        (reals, self.n_samples - reals)
    }

    /// Fake counts per spoof type by largest remainder.
    pub fn type_counts(&self) -> [usize; 4] {
        let (_, fakes) = self.class_counts();
        let exact: Vec<f64> = self.spoof_mix.iter().map(|p| p * fakes as f64).collect();
        let mut counts = [0usize; 4];
        for (c, e) in counts.iter_mut().zip(&exact) {
            *c = e.floor() as usize;
        }
        let mut left = fakes - counts.iter().sum::<usize>();
        let mut order: Vec<usize> = (0..4).collect();
        order.sort_by(|&a, &b| {
            let ra = exact[a] - exact[a].floor();
            let rb = exact[b] - exact[b].floor();
            rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
        });
        for i in order {
            if left == 0 {
                break;
            }
            counts[i] += 1;
            left -= 1;
        }
        counts
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureDims {
    pub n_local: usize,
    pub n_layers: usize,
    pub d_enc: usize,
}

impl Default for FeatureDims {
    fn default() -> Self {
        Self {
            n_local: 16,
            n_layers: 6,
            d_enc: 32,
        }
    }
}

impl FeatureDims {
    pub fn validate(&self) -> Result<()> {
        if self.n_local == 0 || self.n_layers == 0 || self.d_enc == 0 {
            return Err(config_err("feature dims must all be >= 1"));
        }
        Ok(())
    }

    /// Number of leading layers that carry low-level cues.
    pub fn early_layers(&self) -> usize {
        self.n_layers.div_ceil(2)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthSample {
    pub vis: VisualFeatures,
    pub record: CaptionRecord,
    pub label: Label,
}

fn unit_vector(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

/// Type-specific cue directions shared by every domain. A type's global cue
/// is the same direction in every layer of its band.
struct Cues {
    /// `[type] -> direction`
    global: Vec<Vec<f64>>,
    /// `[type] -> direction`
    local: Vec<Vec<f64>>,
}

impl Cues {
    fn new(dims: &FeatureDims) -> Self {
        let mut rng = stream_rng(CUE_SEED, Stream::Data, dims.d_enc as u64);
        let global = (0..4).map(|_| unit_vector(&mut rng, dims.d_enc)).collect();
        let local = (0..4).map(|_| unit_vector(&mut rng, dims.d_enc)).collect();
        Self { global, local }
    }
}

/// Generates one domain. Same spec and dims → bit-identical output.
pub fn generate_domain(
    spec: &DomainSpec,
    dims: &FeatureDims,
    captioner: &CaptionerStub,
    dict: &KeywordDictionary,
) -> Result<Vec<SynthSample>> {
    spec.validate()?;
    dims.validate()?;
    captioner.validate()?;
    let cues = Cues::new(dims);
    let mut rng = stream_rng(spec.seed, Stream::Data, hash_str(&spec.domain_tag));

    let (reals, _) = spec.class_counts();
    let mut kinds: Vec<Option<SpoofType>> = vec![None; reals];
    for (t, &n) in SpoofType::ALL.iter().zip(&spec.type_counts()) {
        kinds.extend(std::iter::repeat_n(Some(*t), n));
    }
    kinds.shuffle(&mut rng);

    let d = dims.d_enc;
    let scale = 1.0 + spec.shift * (rng.random::<f64>() - 0.5);
    let offset: Vec<f64> = unit_vector(&mut rng, d).into_iter().map(|x| x * spec.shift).collect();
    let early = dims.early_layers();

    let mut out = Vec::with_capacity(spec.n_samples);
    for (i, kind) in kinds.into_iter().enumerate() {
        let mut local: Vec<f64> = (0..dims.n_local * d).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut globals: Vec<f64> = (0..dims.n_layers * d).map(|_| StandardNormal.sample(&mut rng)).collect();
        if let Some(t) = kind {
            let s = spec.cue_strength;
            let layers = if t.is_low_level() { 0..early } else { early..dims.n_layers };
            for l in layers {
                for (g, c) in globals[l * d..(l + 1) * d].iter_mut().zip(&cues.global[t.index()]) {
                    *g += s * c;
                }
            }
            if !t.is_low_level() {
                for row in local.chunks_mut(d) {
                    for (x, c) in row.iter_mut().zip(&cues.local[t.index()]) {
                        *x += s * c;
                    }
                }
            }
        }
        for buf in [&mut local, &mut globals] {
            for row in buf.chunks_mut(d) {
                for (x, o) in row.iter_mut().zip(&offset) {
                    *x = scale * *x + o;
                }
            }
        }
        let label = if kind.is_some() { Label::Fake } else { Label::Real };
        let image_id = format!("{}-{i:05}", spec.domain_tag);
        let caption = captioner.caption(&image_id, label, kind, CaptionSource::General, spec.seed, dict);
        out.push(SynthSample {
            vis: VisualFeatures {
                local: Tensor::new(vec![dims.n_local, d], local)?,
                globals: Tensor::new(vec![dims.n_layers, d], globals)?,
            },
            record: CaptionRecord {
                image_id,
                label,
                spoof_type: kind,
                caption,
                caption_source: CaptionSource::General,
            },
            label,
        });
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct FeatureHeader {
    domain_tag: String,
    dims: FeatureDims,
    image_ids: Vec<String>,
}

/// Writes features as a JSON header followed by each sample's local then
/// global values, little-endian.
pub fn write_features<W: Write>(w: W, domain_tag: &str, dims: &FeatureDims, samples: &[SynthSample]) -> Result<()> {
    let header = FeatureHeader {
        domain_tag: domain_tag.to_string(),
        dims: *dims,
        image_ids: samples.iter().map(|s| s.record.image_id.clone()).collect(),
    };
    let mut payload = Vec::with_capacity(samples.len() * (dims.n_local + dims.n_layers) * dims.d_enc);
    for s in samples {
        payload.extend_from_slice(s.vis.local.data());
        payload.extend_from_slice(s.vis.globals.data());
    }
    write_container(w, &header, &payload)
}

/// Features keyed by image id, in file order.
pub fn read_features<R: Read>(r: R) -> Result<(String, FeatureDims, Vec<(String, VisualFeatures)>)> {
    let (header, payload): (FeatureHeader, Vec<f64>) = read_container(r)?;
    let dims = header.dims;
    let per_local = dims.n_local * dims.d_enc;
    let per = per_local + dims.n_layers * dims.d_enc;
    if payload.len() != per * header.image_ids.len() {
        return Err(Error::Data(format!(
            "feature payload has {} values, expected {}",
            payload.len(),
            per * header.image_ids.len()
        )));
    }
    let mut out = Vec::with_capacity(header.image_ids.len());
    for (id, chunk) in header.image_ids.into_iter().zip(payload.chunks(per)) {
        out.push((
            id,
            VisualFeatures {
                local: Tensor::new(vec![dims.n_local, dims.d_enc], chunk[..per_local].to_vec())?,
                globals: Tensor::new(vec![dims.n_layers, dims.d_enc], chunk[per_local..].to_vec())?,
            },
        ));
    }
    Ok((header.domain_tag, dims, out))
}
