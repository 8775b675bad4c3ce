//! Spoof-aware captioning and filtering.
//!
//! A fake sample's caption is kept only when it mentions a keyword whose
//! spoof type equals the sample's own spoof type. Retained captions stand in
//! for the data a spoof-aware captioner would be tuned on; the final dataset
//! pairs real images with general captions and fake images with spoof-aware
//! ones.

use crate::error::{Error, Result};
use crate::rng::{hash_str, stream_rng, Stream};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Real,
    Fake,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpoofType {
    Print,
    Replay,
    Mask,
    Mannequin,
}

impl SpoofType {
    pub const ALL: [SpoofType; 4] = [SpoofType::Print, SpoofType::Replay, SpoofType::Mask, SpoofType::Mannequin];

    pub fn index(self) -> usize {
        self as usize
    }

    /// Print and replay attacks leave low-level texture cues; masks and
    /// mannequins leave semantic ones.
    pub fn is_low_level(self) -> bool {
        matches!(self, SpoofType::Print | SpoofType::Replay)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SpoofType::Print => "print",
            SpoofType::Replay => "replay",
            SpoofType::Mask => "mask",
            SpoofType::Mannequin => "mannequin",
        }
    }
}

impl fmt::Display for SpoofType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SpoofType {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        SpoofType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| Error::Data(format!("unknown spoof type `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaptionSource {
    General,
    SpoofAware,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaptionRecord {
    pub image_id: String,
    pub label: Label,
    pub spoof_type: Option<SpoofType>,
    pub caption: String,
    pub caption_source: CaptionSource,
}

impl CaptionRecord {
    pub fn validate(&self) -> Result<()> {
        match (self.label, self.spoof_type) {
            (Label::Fake, None) => Err(Error::Data(format!("fake record `{}` has no spoof_type", self.image_id))),
            (Label::Real, Some(_)) => Err(Error::Data(format!("real record `{}` has a spoof_type", self.image_id))),
            _ => Ok(()),
        }
    }
}

/// Keyword → spoof type.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "BTreeMap<String, SpoofType>", into = "BTreeMap<String, SpoofType>")]
pub struct KeywordDictionary {
    entries: BTreeMap<String, SpoofType>,
}

impl TryFrom<BTreeMap<String, SpoofType>> for KeywordDictionary {
    type Error = Error;
    fn try_from(entries: BTreeMap<String, SpoofType>) -> Result<Self> {
        Self::new(entries)
    }
}

impl From<KeywordDictionary> for BTreeMap<String, SpoofType> {
    fn from(d: KeywordDictionary) -> Self {
        d.entries
    }
}

impl Default for KeywordDictionary {
    fn default() -> Self {
        use SpoofType::*;
        let table: [(&str, SpoofType); 22] = [
            ("paper", Print),
            ("cardboard", Print),
            ("paper card", Print),
            ("poster", Print),
            ("picture", Print),
            ("screen", Replay),
            ("monitor", Replay),
            ("cell", Replay),
            ("phone", Replay),
            ("tablet", Replay),
            ("laptop", Replay),
            ("ipad", Replay),
            ("mask", Mask),
            ("sticker", Mask),
            ("plastic", Mask),
            ("fake face", Mask),
            ("plaster", Mask),
            ("mannequin", Mannequin),
            ("doll", Mannequin),
            ("statue", Mannequin),
            ("sculpture", Mannequin),
            ("fake head", Mannequin),
        ];
        Self {
            entries: table.iter().map(|(k, t)| (k.to_string(), *t)).collect(),
        }
    }
}

impl KeywordDictionary {
    pub fn new(entries: BTreeMap<String, SpoofType>) -> Result<Self> {
        let mut seen = HashSet::new();
        for k in entries.keys() {
            let norm = normalize(k);
            if norm.is_empty() || norm != *k {
                return Err(Error::Data(format!(
                    "keyword `{k}` must be non-empty, lowercase, single-spaced"
                )));
            }
            if !seen.insert(norm) {
                return Err(Error::Data(format!("duplicate keyword `{k}`")));
            }
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, keyword: &str) -> Option<SpoofType> {
        self.entries.get(keyword).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, SpoofType)> {
        self.entries.iter().map(|(k, t)| (k.as_str(), *t))
    }

    pub fn keywords_for(&self, t: SpoofType) -> Vec<&str> {
        self.iter().filter(|(_, ty)| *ty == t).map(|(k, _)| k).collect()
    }

    pub fn insert(&mut self, keyword: &str, t: SpoofType) -> Result<()> {
        let norm = normalize(keyword);
        if norm.is_empty() || norm != keyword {
            return Err(Error::Data(format!("keyword `{keyword}` is not normalised")));
        }
        self.entries.insert(norm, t);
        Ok(())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// Lowercase and collapse whitespace runs to one space.
pub fn normalize(text: &str) -> String {
    text.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchOptions {
    /// Require non-alphanumeric characters (or text edges) around a match.
    pub word_boundary: bool,
}

/// Whether `keyword` occurs in an already normalised caption.
pub fn keyword_occurs(caption: &str, keyword: &str, opts: MatchOptions) -> bool {
    if !opts.word_boundary {
        return caption.contains(keyword);
    }
    caption.match_indices(keyword).any(|(i, m)| {
        let before = caption[..i].chars().next_back();
        let after = caption[i + m.len()..].chars().next();
        !before.is_some_and(char::is_alphanumeric) && !after.is_some_and(char::is_alphanumeric)
    })
}

/// Keywords whose type equals the record's spoof type and that occur in its
/// caption.
pub fn matching_keywords<'d>(
    record: &CaptionRecord,
    dict: &'d KeywordDictionary,
    opts: MatchOptions,
) -> Result<Vec<&'d str>> {
    let spoof = fake_type(record)?;
    let caption = normalize(&record.caption);
    Ok(dict
        .iter()
        .filter(|(k, t)| *t == spoof && keyword_occurs(&caption, k, opts))
        .map(|(k, _)| k)
        .collect())
}

fn fake_type(record: &CaptionRecord) -> Result<SpoofType> {
    match (record.label, record.spoof_type) {
        (Label::Fake, Some(t)) => Ok(t),
        _ => Err(Error::Data(format!(
            "record `{}` is not a fake sample with a spoof_type",
            record.image_id
        ))),
    }
}

/// Keeps fake records whose caption contains a keyword of their own type.
/// Order is preserved.
pub fn filter_spoof_aware(
    records: &[CaptionRecord],
    dict: &KeywordDictionary,
    opts: MatchOptions,
) -> Result<Vec<CaptionRecord>> {
    filter_with_stats(records, dict, opts).map(|(kept, _)| kept)
}

/// One row of the filtering report. `keyword == "*"` rows carry per-type
/// totals: `before` counts input records of that type, `after` the retained
/// ones. Keyword rows count input records mentioning the keyword (`before`)
/// and retained records it matched (`after`).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatRow {
    pub spoof_type: SpoofType,
    pub keyword: String,
    pub before: usize,
    pub after: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterStats {
    pub rows: Vec<StatRow>,
}

impl FilterStats {
    pub fn type_total(&self, t: SpoofType) -> Option<&StatRow> {
        self.rows.iter().find(|r| r.spoof_type == t && r.keyword == "*")
    }

    pub fn keyword_row(&self, keyword: &str) -> Option<&StatRow> {
        self.rows.iter().find(|r| r.keyword == keyword)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(w);
        for row in &self.rows {
            wtr.serialize(row)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(r);
        let rows = rdr.deserialize().collect::<std::result::Result<Vec<StatRow>, _>>()?;
        Ok(Self { rows })
    }
}

/// Filtering plus per-type and per-keyword counts.
pub fn filter_with_stats(
    records: &[CaptionRecord],
    dict: &KeywordDictionary,
    opts: MatchOptions,
) -> Result<(Vec<CaptionRecord>, FilterStats)> {
    let keywords: Vec<(&str, SpoofType)> = dict.iter().collect();
    let mut kw_before = vec![0usize; keywords.len()];
    let mut kw_after = vec![0usize; keywords.len()];
    let mut type_before = [0usize; 4];
    let mut type_after = [0usize; 4];
    let mut kept = Vec::new();

    for rec in records {
        let spoof = fake_type(rec)?;
        let caption = normalize(&rec.caption);
        type_before[spoof.index()] += 1;
        let mut retained = false;
        for (i, (k, t)) in keywords.iter().enumerate() {
            if keyword_occurs(&caption, k, opts) {
                kw_before[i] += 1;
                if *t == spoof {
                    kw_after[i] += 1;
                    retained = true;
                }
            }
        }
        if retained {
            type_after[spoof.index()] += 1;
            kept.push(rec.clone());
        }
    }

    let mut rows = Vec::new();
    for t in SpoofType::ALL {
        rows.push(StatRow {
            spoof_type: t,
            keyword: "*".into(),
            before: type_before[t.index()],
            after: type_after[t.index()],
        });
        for (i, (k, kt)) in keywords.iter().enumerate() {
            if *kt == t {
                rows.push(StatRow {
                    spoof_type: t,
                    keyword: k.to_string(),
                    before: kw_before[i],
                    after: kw_after[i],
                });
            }
        }
    }
    Ok((kept, FilterStats { rows }))
}

/// Real samples with general captions plus fake samples with spoof-aware
/// captions.
#[derive(Clone, Debug, PartialEq)]
pub struct CaptionedDataset {
    pub records: Vec<CaptionRecord>,
    pub stats: FilterStats,
}

impl CaptionedDataset {
    pub fn count(&self, source: CaptionSource) -> usize {
        self.records.iter().filter(|r| r.caption_source == source).count()
    }
}

pub fn assemble_dcap(
    reals: Vec<CaptionRecord>,
    fakes: Vec<CaptionRecord>,
    stats: FilterStats,
) -> Result<CaptionedDataset> {
    let mut seen = HashSet::new();
    for r in reals.iter().chain(&fakes) {
        r.validate()?;
        if !seen.insert(r.image_id.as_str()) {
            return Err(Error::Data(format!("duplicate image id `{}`", r.image_id)));
        }
        if r.caption.trim().is_empty() {
            return Err(Error::Data(format!("missing caption for `{}`", r.image_id)));
        }
    }
    if let Some(r) = reals
        .iter()
        .find(|r| r.label != Label::Real || r.caption_source != CaptionSource::General)
    {
        return Err(Error::Data(format!("`{}` is not a real record with a general caption", r.image_id)));
    }
    if let Some(r) = fakes
        .iter()
        .find(|r| r.label != Label::Fake || r.caption_source != CaptionSource::SpoofAware)
    {
        return Err(Error::Data(format!(
            "`{}` is not a fake record with a spoof-aware caption",
            r.image_id
        )));
    }
    let mut records = reals;
    records.extend(fakes);
    Ok(CaptionedDataset { records, stats })
}

const SUBJECTS: [&str; 6] = ["a man", "a woman", "a young man", "an old woman", "a person", "a girl"];
const ATTRIBUTES: [&str; 6] = [
    "with short hair",
    "with long hair",
    "wearing glasses",
    "smiling",
    "with a beard",
    "in a white shirt",
];
const SETTINGS: [&str; 5] = ["in an office", "in front of a wall", "outdoors", "in a room", "near a window"];

/// Template captioner standing in for the general and spoof-aware
/// captioners.
///
/// For fake records a type-correct keyword is injected with probability
/// `p_hit`, and a keyword of a different type with probability `p_confuse`.
/// Real records never receive keywords. Neutral templates contain no keyword
/// of the default dictionary.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CaptionerStub {
    pub p_hit: f64,
    pub p_confuse: f64,
}

impl Default for CaptionerStub {
    fn default() -> Self {
        Self {
            p_hit: 0.9,
            p_confuse: 0.0,
        }
    }
}

impl CaptionerStub {
    pub fn new(p_hit: f64, p_confuse: f64) -> Result<Self> {
        let s = Self { p_hit, p_confuse };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.p_hit)
            && (0.0..=1.0).contains(&self.p_confuse)
            && self.p_hit + self.p_confuse <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "captioner probabilities p_hit={} p_confuse={} must lie in [0,1] and sum to <= 1",
                self.p_hit, self.p_confuse
            )))
        }
    }

    pub fn caption(
        &self,
        image_id: &str,
        label: Label,
        spoof_type: Option<SpoofType>,
        mode: CaptionSource,
        seed: u64,
        dict: &KeywordDictionary,
    ) -> String {
        let salt = hash_str(image_id) ^ (mode as u64).wrapping_mul(0x5851_F42D_4C95_7F2D);
        let mut rng = stream_rng(seed, Stream::Caption, salt);
        let subject = SUBJECTS[rng.random_range(0..SUBJECTS.len())];
        let attribute = ATTRIBUTES[rng.random_range(0..ATTRIBUTES.len())];
        let setting = SETTINGS[rng.random_range(0..SETTINGS.len())];
        let neutral = format!("{subject} {attribute} {setting}");
        let (Label::Fake, Some(spoof)) = (label, spoof_type) else {
            return neutral;
        };
        let u: f64 = rng.random();
        let inject = if u < self.p_hit {
            Some(spoof)
        } else if u < self.p_hit + self.p_confuse {
            let others: Vec<SpoofType> = SpoofType::ALL.into_iter().filter(|t| *t != spoof).collect();
            Some(others[rng.random_range(0..others.len())])
        } else {
            None
        };
        let Some(kind) = inject else { return neutral };
        let kws = dict.keywords_for(kind);
        if kws.is_empty() {
            return neutral;
        }
        let kw = kws[rng.random_range(0..kws.len())];
        match kind {
            SpoofType::Print => format!("{subject} holding up a {kw} with a photo {setting}"),
            SpoofType::Replay => format!("a face of {subject} displayed on a {kw}"),
            SpoofType::Mask => format!("{subject} wearing a {kw} {setting}"),
            SpoofType::Mannequin => format!("a {kw} {attribute} {setting}"),
        }
    }

    pub fn recaption(&self, record: &CaptionRecord, mode: CaptionSource, seed: u64, dict: &KeywordDictionary) -> CaptionRecord {
        CaptionRecord {
            caption: self.caption(&record.image_id, record.label, record.spoof_type, mode, seed, dict),
            caption_source: mode,
            ..record.clone()
        }
    }
}

/// Reads newline-delimited JSON records; blank lines are skipped.
pub fn read_corpus<R: BufRead>(r: R) -> Result<Vec<CaptionRecord>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: CaptionRecord = serde_json::from_str(&line).map_err(|e| Error::DataLine {
            line: i + 1,
            msg: e.to_string(),
        })?;
        rec.validate().map_err(|e| Error::DataLine {
            line: i + 1,
            msg: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_corpus<W: Write>(mut w: W, records: &[CaptionRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
