//! Trains the tiny ResNet on a synthetic 10-class set and round-trips the checkpoint.
//!
//! cargo run --example train_model -- [epochs]

use augunlearn::augment::{AugmentPolicy, Scenario};
use augunlearn::data::{make_synthetic, Split, SyntheticSpec};
use augunlearn::models::{accuracy, ArchSpec, Model};
use augunlearn::unlearn::{train, TrainConfig};

fn main() -> augunlearn::Result<()> {
    let epochs = std::env::args()
        .nth(1)
        .and_then(|a| a.parse().ok())
        .unwrap_or(8);
    let mut spec = SyntheticSpec::new(10, 100, [3, 16, 16], 2024);
    spec.noise = 0.2;
    spec.max_shift = 3;
    let train_set = make_synthetic(&spec, Split::Train)?;
    let test_set = make_synthetic(&spec, Split::Test)?;

    let arch = ArchSpec::tiny_resnet([3, 16, 16], 10);
    println!("{} parameters", arch.param_count());
    let cfg = TrainConfig::new(epochs, 0.01, 32, 0)
        .with_momentum(0.9, 5e-4)
        .with_policy(AugmentPolicy::new(Scenario::Default));
    let out = train(arch, &train_set, &cfg)?;
    for (e, loss) in out.history.epoch_loss.iter().enumerate() {
        println!("epoch {e:>2}  loss {loss:.4}");
    }
    println!(
        "train acc {:.2}%  test acc {:.2}%",
        accuracy(&out.model, &train_set)?,
        accuracy(&out.model, &test_set)?
    );

    let path = std::env::temp_dir().join("augunlearn_train_model.ckpt");
    out.model.save(&path)?;
    let back = Model::load(&path)?;
    assert_eq!(back, out.model);
    println!("checkpoint written to {}", path.display());
    Ok(())
}
