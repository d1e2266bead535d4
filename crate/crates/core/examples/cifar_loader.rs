//! Loads CIFAR binary batches. With no argument it writes a small fake
//! CIFAR-10 directory first so the example runs offline.
//!
//! cargo run --example cifar_loader -- [cifar-10-batches-bin dir]

use std::fs;
use std::path::PathBuf;

use augunlearn::data::{
    encode_cifar, load_cifar, make_synthetic, CifarVariant, Split, SyntheticSpec,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = match std::env::args().nth(1) {
        Some(d) => PathBuf::from(d),
        None => {
            let dir = std::env::temp_dir().join("augunlearn_fake_cifar10");
            fs::create_dir_all(&dir)?;
            let fake = make_synthetic(&SyntheticSpec::new(10, 4, [3, 32, 32], 1), Split::Train)?;
            let bytes = encode_cifar(&fake, CifarVariant::Cifar10)?;
            for name in (1..=5)
                .map(|i| format!("data_batch_{i}.bin"))
                .chain(["test_batch.bin".to_string()])
            {
                fs::write(dir.join(name), &bytes)?;
            }
            dir
        }
    };
    let (train, test) = load_cifar(&dir, CifarVariant::Cifar10)?;
    println!(
        "{}: train {} images, test {} images, shape {:?}",
        dir.display(),
        train.len(),
        test.len(),
        train.image_shape()
    );
    let mut counts = vec![0usize; train.classes()];
    for &y in train.labels() {
        counts[y] += 1;
    }
    println!("train label counts {counts:?}");
    Ok(())
}
