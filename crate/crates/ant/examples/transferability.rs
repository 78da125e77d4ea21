//! Do perturbations transfer between architectures?
//!
//! The attacker optimizes against a model they can query (here: a 1-D
//! CNN) and deploys the result against one they cannot (a dense
//! stacked-autoencoder-style network trained on the same data). If the
//! same pad bytes also break the second model, robustness cannot be
//! restored by hiding the architecture.
//!
//! Run with: `cargo run --release --example transferability`

use std::fs;
use std::path::PathBuf;

use ant::attacks::PadLocation;
use ant::eval::{
    clean_test_metrics, experiment_table, prepare, run_transfer_experiment, train_model,
    transfer_table, AttackFamily, ExperimentPlan, Variant,
};
use ant::features::EncodingKind;
use ant::ingest::{ingest_manifest, IngestConfig};
use ant::nn::{default_cnn, default_sae, TrainConfig};
use ant::synth::write_corpus;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = PathBuf::from("target/ant-examples/transfer");
    let _ = fs::remove_dir_all(&root);
    let manifest = write_corpus(&root.join("corpus"), 40, 0)?;
    let (bundle, _) = ingest_manifest(&manifest, &root.join("bundle"), &IngestConfig::default())?;
    let data = prepare(&bundle)?;

    let kind = EncodingKind::PcP { max_pkt_size: 128 };
    let config = TrainConfig { epochs: 10, batch_size: 64, learning_rate: 0.05, seed: 0, patience: None };
    println!("training the source CNN on {} ...", kind.name());
    let source = train_model(&data, &default_cnn(kind.len(), data.class_count()), kind, &config)?;
    println!("training the target dense network on the same data ...");
    let target = train_model(
        &data,
        &default_sae(kind.len(), data.class_count()),
        kind,
        &TrainConfig { seed: 1, ..config },
    )?;
    println!(
        "clean accuracy: source {:.1}%, target {:.1}%\n",
        100.0 * clean_test_metrics(&data, &source)?.accuracy,
        100.0 * clean_test_metrics(&data, &target)?.accuracy
    );

    // Generate padding perturbations on the source, then apply the same
    // vectors to the target's test traffic. The sweep on the source also
    // runs, for side-by-side reading.
    let mut plan =
        ExperimentPlan::standard(AttackFamily::Pad { location: PadLocation::Start }, &source, 0);
    plan.strengths = vec![20, 40];
    plan.variants = vec![Variant::NoAttack, Variant::Adv];
    plan.rand_runs = 1;
    plan.gen.iterations = 200;
    let (rows, out) = run_transfer_experiment(&source, &target, &data, &plan)?;

    println!("mean recall on the SOURCE model (%), the attacker's view:");
    println!("{}", experiment_table(&out.result, None));
    println!("each perturbation replayed against the TARGET model:");
    println!("{}", transfer_table(&rows, &data.labels));
    println!("Rows list the target's accuracy and per-class recall on the");
    println!("whole perturbed test split; the targeted class's recall column");
    println!("dropping below its clean value means the attack transferred.");
    Ok(())
}
