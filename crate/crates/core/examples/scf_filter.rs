//! Spoof-aware captioning and keyword filtering on a synthetic corpus,
//! with the per-type and per-keyword counts.

use spoofvqa::scf::{
    filter_with_stats, CaptionRecord, CaptionSource, CaptionerStub, KeywordDictionary, Label, MatchOptions, SpoofType,
};

fn main() -> spoofvqa::Result<()> {
    let dict = KeywordDictionary::default();
    // 70% type-correct keywords, 10% keywords of another type
    let stub = CaptionerStub::new(0.7, 0.1)?;
    let fakes: Vec<CaptionRecord> = (0..2000)
        .map(|i| {
            let t = SpoofType::ALL[i % 4];
            let id = format!("img-{i:04}");
            CaptionRecord {
                caption: stub.caption(&id, Label::Fake, Some(t), CaptionSource::SpoofAware, 1, &dict),
                image_id: id,
                label: Label::Fake,
                spoof_type: Some(t),
                caption_source: CaptionSource::SpoofAware,
            }
        })
        .collect();
    for r in fakes.iter().take(4) {
        println!("{:?}: {}", r.spoof_type.unwrap(), r.caption);
    }

    let (kept, stats) = filter_with_stats(&fakes, &dict, MatchOptions::default())?;
    println!("\nretained {} of {}", kept.len(), fakes.len());
    stats.write_csv(std::io::stdout())?;

    let strict = filter_with_stats(&fakes, &dict, MatchOptions { word_boundary: true })?.0;
    println!("\nword-boundary matching retains {}", strict.len());
    Ok(())
}
