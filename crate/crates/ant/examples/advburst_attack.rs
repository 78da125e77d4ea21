//! Burst-statistics attack against a time-series classifier.
//!
//! Time-series models never see payload bytes — only packet sizes or
//! inter-arrival gaps. To perturb them on the wire you must send real
//! packets: this attack appends d dummy packets to one burst of each
//! flow (here: the first forward burst) and optimizes the sizes those
//! dummies should have. The perturbation decodes back to concrete,
//! sendable packet sizes, clamped to what a link can carry.
//!
//! Run with: `cargo run --release --example advburst_attack`

use std::fs;
use std::path::PathBuf;

use ant::attacks::{decode_dummy_features, gen_advburst, materialize_advburst, BurstPolicy, GenParams};
use ant::eval::{
    clean_test_metrics, experiment_table, prepare, run_experiment, train_model, AttackFamily,
    ExperimentPlan,
};
use ant::features::EncodingKind;
use ant::ingest::{ingest_manifest, IngestConfig};
use ant::nn::{default_cnn, TrainConfig};
use ant::synth::write_corpus;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = PathBuf::from("target/ant-examples/advburst");
    let _ = fs::remove_dir_all(&root);
    let manifest = write_corpus(&root.join("corpus"), 60, 0)?;
    let (bundle, _) = ingest_manifest(&manifest, &root.join("bundle"), &IngestConfig::default())?;
    let data = prepare(&bundle)?;

    // The first 64 signed packet sizes of each flow, z-normalized with
    // statistics fitted on the training flows.
    let kind = EncodingKind::FtscPs { m: 64 };
    let config = TrainConfig { epochs: 30, batch_size: 32, learning_rate: 0.1, seed: 0, patience: None };
    println!("training the victim CNN on {} ...", kind.name());
    let model = train_model(&data, &default_cnn(kind.len(), data.class_count()), kind, &config)?;
    let clean = clean_test_metrics(&data, &model)?;
    println!("clean test accuracy: {:.1}%\n", 100.0 * clean.accuracy);

    // --- one perturbation, by hand -------------------------------------
    let target = 2; // "stream"
    let flows: Vec<_> =
        data.flows.train.iter().filter(|f| f.label == Some(target)).cloned().collect();
    let params = GenParams { iterations: 300, batch_size: 16, epsilon: 0.01, seed: 1 };
    let dummy_count = 5;
    let uap = gen_advburst(
        &model,
        &flows,
        target,
        dummy_count,
        BurstPolicy::FirstForward,
        1500,
        &params,
    )?;

    // The optimized values live in normalized feature space; decoded they
    // are the byte sizes the dummy packets must have on the wire.
    let sizes = decode_dummy_features(&uap, &data.stats)?;
    let rendered: Vec<String> = sizes.iter().map(|s| format!("{s:.0}")).collect();
    println!(
        "{} dummy packets appended to the first forward burst of every {} flow,",
        dummy_count,
        data.labels[usize::from(target)]
    );
    println!("with optimized sizes [{}] bytes", rendered.join(", "));

    let victim = &flows[0];
    let carried = materialize_advburst(victim, &uap, &data.stats)?;
    assert_eq!(carried.packets.len(), victim.packets.len() + dummy_count);
    println!(
        "flow grows {} -> {} packets; original packets untouched\n",
        victim.packets.len(),
        carried.packets.len()
    );

    // --- the full sweep ------------------------------------------------
    // Strength = number of dummy packets per flow.
    let mut plan = ExperimentPlan::standard(
        AttackFamily::Burst { policy: BurstPolicy::FirstForward, max_dummy_size: 1500 },
        &model,
        0,
    );
    plan.strengths = vec![1, 5, 10];
    plan.rand_runs = 10;
    plan.gen.iterations = 300;
    plan.gen.batch_size = 16;
    let out = run_experiment(&model, &data, &plan)?;
    println!("mean recall over all four classes (%), by dummy count:");
    println!("{}", experiment_table(&out.result, None));
    println!("recall of the {} class alone:", data.labels[usize::from(target)]);
    println!("{}", experiment_table(&out.result, Some(target)));
    println!("The same attack drives the gap variant (ftsc_iat); there the");
    println!("values decode to inter-arrival delays between dummy packets.");
    Ok(())
}
