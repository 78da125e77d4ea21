//! ant — probe the robustness of deep-learning network-traffic classifiers
//! with universal adversarial perturbations.
//!
//! The crate models captured TCP/UDP traffic (packets, bidirectional flows,
//! bursts), encodes it into the six classifier input spaces (per-packet
//! bytes, first-n-packet bytes, and per-flow statistical time series, each
//! with or without transport headers / direction signs), trains small 1-D
//! CNN or dense classifiers with an in-crate differentiable core, and
//! generates three universal perturbations against them:
//!
//! - **AdvPad** — adversarial payload padding at the start or end of packets;
//! - **AdvPay** — a dummy packet whose payload carries the perturbation;
//! - **AdvBurst** — dummy packets appended to a burst, perturbing size/IAT
//!   statistics.
//!
//! Random, port-randomization, and composed baselines plus an experiment
//! runner report per-class recall curves the same way the robustness
//! figures are usually drawn.
//!
//! Start with the runnable examples (`cargo run --release --example <name>`):
//!
//! - `synthetic_corpus` — generate the bundled 4-class benchmark corpus
//! - `flow_assembly`    — parse a capture and inspect flows and bursts
//! - `encodings`        — all six encodings of one flow, side by side
//! - `train_classifier` — train and score a CNN on the corpus
//! - `advpad_attack`    — payload-padding UAP against a packet classifier
//! - `advpay_attack`    — dummy-packet UAP against a flow-content classifier
//! - `advburst_attack`  — burst-statistics UAP against a time-series classifier
//! - `transferability`  — reuse CNN-generated UAPs against an SAE model
//!
//! The same pipelines are scriptable through the thin `ant` binary
//! (`ingest`, `train`, `attack`, `eval`, `transfer`, `report`).

pub mod attacks;
pub mod cli;
pub mod eval;
pub mod features;
pub mod ingest;
pub mod nn;
pub mod seed;
pub mod synth;
pub mod traffic;
