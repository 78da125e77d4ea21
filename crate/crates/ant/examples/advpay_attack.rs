//! Dummy-packet payload attack against a flow-content classifier.
//!
//! Flow-content models read the first n packets of a flow as one long
//! byte vector. This attack crafts a single dummy packet — its payload is
//! the perturbation — and inserts it into every flow of the target class
//! (here: right after the first forward packet). Real packets are only
//! displaced within the window, never altered, so the flow still works;
//! the receiver discards one junk packet.
//!
//! Run with: `cargo run --release --example advpay_attack`

use std::fs;
use std::path::PathBuf;

use ant::attacks::{gen_advpay, materialize_advpay, DummyIndexPolicy, GenParams};
use ant::eval::{
    clean_test_metrics, experiment_table, prepare, run_experiment, train_model, AttackFamily,
    ExperimentPlan,
};
use ant::features::EncodingKind;
use ant::ingest::{ingest_manifest, IngestConfig};
use ant::nn::{default_cnn, TrainConfig};
use ant::synth::write_corpus;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = PathBuf::from("target/ant-examples/advpay");
    let _ = fs::remove_dir_all(&root);
    let manifest = write_corpus(&root.join("corpus"), 50, 0)?;
    let (bundle, _) = ingest_manifest(&manifest, &root.join("bundle"), &IngestConfig::default())?;
    let data = prepare(&bundle)?;

    // First 6 packets x 128 payload bytes each, concatenated.
    let kind = EncodingKind::FccP { n: 6, max_pkt_size: 128 };
    let config = TrainConfig { epochs: 30, batch_size: 32, learning_rate: 0.1, seed: 0, patience: None };
    println!("training the victim CNN on {} ({} inputs) ...", kind.name(), kind.len());
    let model = train_model(&data, &default_cnn(kind.len(), data.class_count()), kind, &config)?;
    let clean = clean_test_metrics(&data, &model)?;
    println!("clean test accuracy: {:.1}%\n", 100.0 * clean.accuracy);

    // --- one perturbation, by hand -------------------------------------
    let target = 1; // "chat"
    let flows: Vec<_> =
        data.flows.train.iter().filter(|f| f.label == Some(target)).cloned().collect();
    let params = GenParams { iterations: 400, batch_size: 16, epsilon: 0.01, seed: 1 };
    let payload_size = 120;
    let uap = gen_advpay(
        &model,
        &flows,
        target,
        payload_size,
        DummyIndexPolicy::AfterFirstForward,
        &params,
    )?;
    println!(
        "crafted a {payload_size}-byte dummy payload against class {}",
        data.labels[usize::from(target)]
    );
    let (lo, hi) = uap.values.iter().fold((f32::MAX, f32::MIN), |(l, h), &v| (l.min(v), h.max(v)));
    let mean: f32 = uap.values.iter().sum::<f32>() / uap.values.len() as f32;
    let extreme = uap.values.iter().filter(|&&v| v < 0.02 || v > 0.98).count();
    println!("DEBUG uap stats: min {lo:.4} max {hi:.4} mean {mean:.4} extreme {extreme}/{}", uap.values.len());

    // Materialize: the flow gains exactly one packet; everything real
    // survives byte-for-byte.
    let victim = &flows[0];
    let carried = materialize_advpay(victim, &uap)?;
    assert_eq!(carried.packets.len(), victim.packets.len() + 1);
    let inserted = carried
        .packets
        .iter()
        .zip(&victim.packets)
        .position(|(a, b)| a.payload != b.payload)
        .unwrap_or(victim.packets.len());
    println!(
        "dummy rides at position {inserted} with {} payload bytes; flow grows {} -> {} packets\n",
        carried.packets[inserted].payload.len(),
        victim.packets.len(),
        carried.packets.len()
    );

    // --- the full sweep ------------------------------------------------
    // Strength = dummy payload size in bytes. Random dummies of the same
    // size are the honesty check.
    let mut plan = ExperimentPlan::standard(
        AttackFamily::Pay { dummy_index: DummyIndexPolicy::AfterFirstForward },
        &model,
        0,
    );
    plan.strengths = vec![10, 60, 120];
    plan.rand_runs = 10;
    plan.gen.iterations = 400;
    plan.gen.batch_size = 16;
    plan.gen.epsilon = 0.01;
    let out = run_experiment(&model, &data, &plan)?;
    println!("mean recall over all four classes (%), by dummy payload bytes:");
    println!("{}", experiment_table(&out.result, None));
    println!("recall of the {} class alone:", data.labels[usize::from(target)]);
    println!("{}", experiment_table(&out.result, Some(target)));
    Ok(())
}
