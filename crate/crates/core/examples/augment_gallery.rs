//! Applies every augmentation scenario to one synthetic image and prints the
//! transform log as NDJSON.

use augunlearn::augment::{write_transform_log, AugmentPolicy, Image, Scenario, TransformRecord};
use augunlearn::data::{make_synthetic, Split, SyntheticSpec};

fn main() -> augunlearn::Result<()> {
    let data = make_synthetic(&SyntheticSpec::new(2, 1, [3, 16, 16], 5), Split::Train)?;
    let img = Image::from_slice(data.image_shape(), data.image(0))?;
    let seed = 11;

    let mut records = Vec::new();
    for scenario in Scenario::ALL {
        let policy = AugmentPolicy::new(scenario);
        for epoch in 0..2 {
            let (out, ops) = policy.apply_logged(&img, 0, epoch, seed);
            let moved = out
                .data
                .iter()
                .zip(&img.data)
                .filter(|(a, b)| a != b)
                .count();
            eprintln!(
                "{:<22} epoch {epoch}: {moved:>3} of {} pixels changed",
                scenario.name(),
                img.data.len()
            );
            records.push(TransformRecord {
                sample_index: 0,
                scenario,
                epoch,
                ops,
            });
        }
    }
    write_transform_log(&mut std::io::stdout().lock(), &records)
}
