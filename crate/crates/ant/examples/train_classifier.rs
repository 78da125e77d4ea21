//! The full training pipeline: synthesize captures, ingest them into a
//! balanced three-way split bundle, train a 1-D CNN on per-packet payload
//! bytes, and score it on the held-out test split.
//!
//! Run with: `cargo run --release --example train_classifier`

use std::fs;
use std::path::PathBuf;

use ant::eval::{clean_test_metrics, metrics_table, prepare, train_model};
use ant::features::EncodingKind;
use ant::ingest::{ingest_manifest, IngestConfig};
use ant::nn::{default_cnn, load_model, save_model, TrainConfig};
use ant::synth::write_corpus;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = PathBuf::from("target/ant-examples/train_classifier");
    let _ = fs::remove_dir_all(&root);

    // Corpus -> bundle. Ingest drops background noise, assembles flows,
    // splits them 60/20/20 per class, and balances the training split.
    let manifest = write_corpus(&root.join("corpus"), 40, 0)?;
    let (bundle, summary) = ingest_manifest(&manifest, &root.join("bundle"), &IngestConfig::default())?;
    for class in &summary.classes {
        println!(
            "{:<8} {} flows / {} packets -> {} train, {} validation, {} test",
            class.label,
            class.flows,
            class.packets,
            class.train_flows_balanced,
            class.validation_flows,
            class.test_flows
        );
    }

    // Bundle -> tensors. `prepare` materializes both sample universes
    // (flows and packets) with leak-checked splits and fits the
    // normalization statistics on the training flows alone.
    let data = prepare(&bundle)?;

    // Per-packet payload bytes into a small 1-D CNN. Validation picks the
    // best epoch; everything is seeded, so this run reproduces exactly.
    let kind = EncodingKind::PcP { max_pkt_size: 128 };
    let spec = default_cnn(kind.len(), data.class_count());
    let config = TrainConfig {
        epochs: 10,
        batch_size: 64,
        learning_rate: 0.05,
        seed: 0,
        patience: None,
    };
    println!("\ntraining a CNN on {} ({} inputs) ...", kind.name(), kind.len());
    let model = train_model(&data, &spec, kind, &config)?;

    let metrics = clean_test_metrics(&data, &model)?;
    println!("\ntest-split metrics:\n{}", metrics_table(&metrics, &data.labels));

    // Models round-trip through a binary file format; the id is a content
    // hash, so equal ids mean bit-equal weights and config.
    let path = root.join("pcp_cnn.antm");
    save_model(&model, &path)?;
    let reloaded = load_model(&path)?;
    assert_eq!(model.id(), reloaded.id());
    println!("saved and reloaded {} (model id {})", path.display(), model.id_hex());
    Ok(())
}
