//! Experiment harness: stored dataset bundles → per-encoding train/test
//! material → attack-strength sweeps with baselines → transfer scoring →
//! CSV reports.
//!
//! Hygiene rules enforced here:
//! * perturbations are always *generated* on the validation split and
//!   *scored* on the test split (checked by sample id),
//! * normalization statistics come from the raw training split,
//! * class balancing happens at training time only; evaluation splits stay
//!   as ingested,
//! * every job derives its randomness from the experiment seed, so a whole
//!   sweep is reproducible bit for bit regardless of thread count.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attacks::{
    apply_advburst, apply_advpad, apply_advpay, ensure_port_compatible, gen_advburst, gen_advpad,
    gen_advpay, port_attack_flow, port_attack_packet, rand_baseline, AttackError, AttackSpec,
    BurstPolicy, DummyIndexPolicy, GenParams, PadLocation, Uap,
};
use crate::features::{
    encode_flow_content, encode_flow_timeseries, encode_packet, fit_norm_stats, EncodedSample,
    EncodingKind, FeatureError, NormStats,
};
use crate::ingest::{balance, median, split_stratified, Bundle, IngestError, SPLIT_NAMES};
use crate::nn::{
    evaluate, metrics_from_predictions, predict_rows, train, EvalMetrics, Model, ModelSpec,
    NnError, TrainConfig,
};
use crate::seed::subseed;
use crate::traffic::BidirectionalFlow;
use crate::ingest::SplitDataset;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("experiment plan: {0}")]
    BadPlan(String),
    #[error("dataset: {0}")]
    Data(String),
    #[error("validation and test splits share sample ids; refusing to evaluate")]
    SplitLeak,
    #[error("report table: {0}")]
    BadReport(String),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

// --- data preparation ---------------------------------------------------------

/// One labeled packet with a corpus-unique id (used for split-hygiene
/// checks and as the encoded sample's source id).
#[derive(Clone, Debug, PartialEq)]
pub struct PacketSample {
    pub id: u64,
    pub label: u16,
    pub packet: Packet,
}

use crate::traffic::Packet;

/// Everything experiments need from a bundle, materialized once:
/// flow-level splits (training balanced, evaluation splits raw) and
/// packet-level splits (the bundle's packets pooled and re-split at packet
/// granularity, since per-packet classifiers treat packets as samples).
/// Sample ids are unique across splits within each universe.
#[derive(Clone, Debug, PartialEq)]
pub struct PreparedData {
    pub labels: Vec<String>,
    pub seed: u64,
    /// Fitted on the raw training flows.
    pub stats: NormStats,
    pub flows: SplitDataset<BidirectionalFlow>,
    pub packets: SplitDataset<PacketSample>,
}

const VALIDATION_ID_BASE: u64 = 1 << 40;
const TEST_ID_BASE: u64 = 2 << 40;

fn group_flows(
    flows: Vec<BidirectionalFlow>,
    id_base: u64,
) -> Result<BTreeMap<u16, Vec<BidirectionalFlow>>, EvalError> {
    let mut by_class: BTreeMap<u16, Vec<BidirectionalFlow>> = BTreeMap::new();
    for (i, mut f) in flows.into_iter().enumerate() {
        let label = f
            .label
            .ok_or_else(|| EvalError::Data("bundle flow without a label".into()))?;
        f.id = id_base + i as u64;
        by_class.entry(label).or_default().push(f);
    }
    Ok(by_class)
}

fn flatten<T>(classes: BTreeMap<u16, Vec<T>>) -> Vec<T> {
    classes.into_values().flatten().collect()
}

/// Loads a bundle into experiment-ready splits. Deterministic given the
/// bundle: all randomness (packet re-split, balancing) derives from the
/// bundle's own seed.
pub fn prepare(bundle: &Bundle) -> Result<PreparedData, EvalError> {
    let meta = &bundle.meta;
    let labels = meta.labels.clone();

    // Flow universe: balance the training split to the bundle's target;
    // leave validation/test untouched.
    let raw_train = bundle.read_flows("train")?;
    if raw_train.is_empty() {
        return Err(EvalError::Data("bundle has no training flows".into()));
    }
    let stats = fit_norm_stats(&raw_train)?;
    let train_classes = group_flows(raw_train, 0)?;
    let balanced = balance(
        &train_classes,
        &labels,
        meta.balance_target,
        subseed(meta.seed, "train-balance/flows"),
    )?;
    let flows = SplitDataset {
        train: flatten(balanced),
        validation: flatten(group_flows(bundle.read_flows("validation")?, VALIDATION_ID_BASE)?),
        test: flatten(group_flows(bundle.read_flows("test")?, TEST_ID_BASE)?),
    };

    // Packet universe: pool every packet the bundle holds, then re-split
    // at packet granularity so per-packet classifiers get a stratified
    // sample of the whole corpus.
    let mut pool_classes: BTreeMap<u16, Vec<PacketSample>> = BTreeMap::new();
    let mut next_id = 0u64;
    for split in SPLIT_NAMES {
        for (label, packet) in bundle.read_packets(split)? {
            pool_classes
                .entry(label)
                .or_default()
                .push(PacketSample { id: next_id, label, packet });
            next_id += 1;
        }
    }
    let split = split_stratified(&pool_classes, &labels, meta.fractions, subseed(meta.seed, "pc-split"))?;
    let packet_target = median(split.train.values().map(Vec::len).collect()).max(1);
    let train_packets = balance(
        &split.train,
        &labels,
        packet_target,
        subseed(meta.seed, "train-balance/packets"),
    )?;
    let packets = SplitDataset {
        train: flatten(train_packets),
        validation: flatten(split.validation),
        test: flatten(split.test),
    };

    Ok(PreparedData { labels, seed: meta.seed, stats, flows, packets })
}

impl PreparedData {
    pub fn class_count(&self) -> usize {
        self.labels.len()
    }
}

/// Encodes all three splits under one encoding, ready for training.
pub fn encode_dataset(
    data: &PreparedData,
    kind: &EncodingKind,
) -> Result<SplitDataset<EncodedSample>, EvalError> {
    kind.validate()?;
    let encode_packets = |samples: &[PacketSample]| {
        samples
            .iter()
            .map(|s| encode_packet(&s.packet, kind, s.label, s.id))
            .collect::<Result<Vec<_>, _>>()
    };
    let encode_flows = |flows: &[BidirectionalFlow]| {
        flows
            .iter()
            .map(|f| {
                if kind.needs_stats() {
                    encode_flow_timeseries(f, kind, &data.stats)
                } else {
                    encode_flow_content(f, kind)
                }
            })
            .collect::<Result<Vec<_>, _>>()
    };
    Ok(if kind.is_packet_level() {
        SplitDataset {
            train: encode_packets(&data.packets.train)?,
            validation: encode_packets(&data.packets.validation)?,
            test: encode_packets(&data.packets.test)?,
        }
    } else {
        SplitDataset {
            train: encode_flows(&data.flows.train)?,
            validation: encode_flows(&data.flows.validation)?,
            test: encode_flows(&data.flows.test)?,
        }
    })
}

/// Encodes the prepared splits under the given encoding and trains a
/// model on them (normalization statistics attached automatically for
/// time-series encodings).
pub fn train_model(
    data: &PreparedData,
    spec: &ModelSpec,
    kind: EncodingKind,
    config: &TrainConfig,
) -> Result<Model, EvalError> {
    let encoded = encode_dataset(data, &kind)?;
    let stats = kind.needs_stats().then_some(data.stats);
    Ok(train(spec, kind, data.labels.clone(), stats, &encoded, config)?)
}

/// Scores the model on its clean test split (the packet or flow universe,
/// matching the encoding): the baseline every attacked number is compared
/// against.
pub fn clean_test_metrics(data: &PreparedData, model: &Model) -> Result<EvalMetrics, EvalError> {
    let kind = &model.encoding;
    let samples: Vec<EncodedSample> = if kind.is_packet_level() {
        data.packets
            .test
            .iter()
            .map(|p| encode_packet(&p.packet, kind, p.label, p.id))
            .collect::<Result<_, _>>()?
    } else {
        data.flows
            .test
            .iter()
            .map(|f| {
                if kind.needs_stats() {
                    encode_flow_timeseries(f, kind, &data.stats)
                } else {
                    encode_flow_content(f, kind)
                }
            })
            .collect::<Result<_, _>>()?
    };
    Ok(evaluate(model, &samples)?)
}

// --- experiment plans ---------------------------------------------------------

/// Evaluation conditions, in report-column order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Clean test samples.
    NoAttack,
    /// The optimized perturbation.
    Adv,
    /// Random draws from the same domain (mean over runs).
    Rand,
    /// Source ports randomized, then the optimized perturbation.
    AdvPort,
    /// Source ports randomized, then random perturbations.
    RandPort,
    /// Source ports randomized only.
    Port,
}

pub const VARIANTS: [Variant; 6] = [
    Variant::NoAttack,
    Variant::Adv,
    Variant::Rand,
    Variant::AdvPort,
    Variant::RandPort,
    Variant::Port,
];

impl Variant {
    pub fn column(&self) -> &'static str {
        match self {
            Variant::NoAttack => "no_attack",
            Variant::Adv => "adv",
            Variant::Rand => "rand",
            Variant::AdvPort => "adv_port",
            Variant::RandPort => "rand_port",
            Variant::Port => "port",
        }
    }

    fn uses_ports(&self) -> bool {
        matches!(self, Variant::Port | Variant::AdvPort | Variant::RandPort)
    }

    fn uses_rand(&self) -> bool {
        matches!(self, Variant::Rand | Variant::RandPort)
    }

    /// All conditions that make sense for an encoding: port randomization
    /// only affects encodings that can see header bytes.
    pub fn defaults_for(kind: &EncodingKind) -> Vec<Variant> {
        if kind.includes_headers() {
            VARIANTS.to_vec()
        } else {
            vec![Variant::NoAttack, Variant::Adv, Variant::Rand]
        }
    }
}

/// Which perturbation family a sweep exercises; the swept strength is the
/// family's size knob (pad overhead %, dummy payload bytes, dummy packet
/// count).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum AttackFamily {
    Pad { location: PadLocation },
    Pay { dummy_index: DummyIndexPolicy },
    Burst { policy: BurstPolicy, max_dummy_size: usize },
}

impl AttackFamily {
    pub fn name(&self) -> &'static str {
        match self {
            AttackFamily::Pad { .. } => "adv_pad",
            AttackFamily::Pay { .. } => "adv_pay",
            AttackFamily::Burst { .. } => "adv_burst",
        }
    }

    /// What the swept number means for this family.
    pub fn strength_label(&self) -> &'static str {
        match self {
            AttackFamily::Pad { .. } => "overhead_pct",
            AttackFamily::Pay { .. } => "payload_bytes",
            AttackFamily::Burst { .. } => "dummy_count",
        }
    }

    pub fn default_strengths(&self) -> Vec<u32> {
        match self {
            AttackFamily::Pad { .. } => vec![0, 10, 20, 30, 40, 50],
            AttackFamily::Pay { .. } => vec![10, 100, 300, 500, 750, 1000, 1200, 1400],
            AttackFamily::Burst { .. } => vec![1, 3, 5, 7, 10, 12, 15, 17, 20],
        }
    }

    pub fn default_gen(&self) -> GenParams {
        match self {
            AttackFamily::Pad { .. } => GenParams::advpad_defaults(),
            AttackFamily::Pay { .. } => GenParams::advpay_defaults(),
            AttackFamily::Burst { .. } => GenParams::advburst_defaults(),
        }
    }

    fn compatible_with(&self, kind: &EncodingKind) -> bool {
        match self {
            AttackFamily::Pad { .. } => kind.is_packet_level(),
            AttackFamily::Pay { .. } => matches!(kind, EncodingKind::FccHp { .. } | EncodingKind::FccP { .. }),
            AttackFamily::Burst { .. } => kind.needs_stats(),
        }
    }
}

/// A full sweep: every target class × strength × variant. `seed` drives
/// every random choice; `gen.seed` is ignored (each job derives its own).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentPlan {
    pub family: AttackFamily,
    pub strengths: Vec<u32>,
    pub variants: Vec<Variant>,
    /// Empty = all classes.
    pub target_classes: Vec<u16>,
    /// Draws averaged for the random-baseline conditions.
    pub rand_runs: usize,
    pub gen: GenParams,
    pub seed: u64,
}

impl ExperimentPlan {
    /// The standard sweep for a model: family defaults, all classes, port
    /// conditions included when the encoding can see headers. Strengths
    /// that cannot fit the encoding (dummy payloads wider than a packet
    /// slot) are dropped.
    pub fn standard(family: AttackFamily, model: &Model, seed: u64) -> ExperimentPlan {
        let mut strengths = family.default_strengths();
        if let (AttackFamily::Pay { .. }, Some(mps)) = (&family, model.encoding.max_pkt_size()) {
            strengths.retain(|&s| s as usize <= mps);
        }
        ExperimentPlan {
            gen: family.default_gen(),
            strengths,
            variants: Variant::defaults_for(&model.encoding),
            target_classes: Vec::new(),
            rand_runs: 10,
            seed,
            family,
        }
    }

    fn validate(&self, model: &Model, class_count: usize) -> Result<(), EvalError> {
        let bad = |msg: String| Err(EvalError::BadPlan(msg));
        if !self.family.compatible_with(&model.encoding) {
            return bad(format!(
                "{} cannot target a {} model",
                self.family.name(),
                model.encoding.name()
            ));
        }
        if self.strengths.is_empty() {
            return bad("no strengths to sweep".into());
        }
        if self.variants.is_empty() {
            return bad("no variants to evaluate".into());
        }
        if let AttackFamily::Pay { .. } = self.family {
            let mps = model.encoding.max_pkt_size().unwrap_or(0);
            if let Some(&s) = self.strengths.iter().find(|&&s| s == 0 || s as usize > mps) {
                return bad(format!(
                    "dummy payload of {s} bytes is outside the packet slot (1..={mps})"
                ));
            }
        }
        if self.variants.iter().any(Variant::uses_ports) {
            ensure_port_compatible(&model.encoding)?;
        }
        if self.variants.iter().any(Variant::uses_rand) && self.rand_runs == 0 {
            return bad("random baselines need rand_runs ≥ 1".into());
        }
        if let Some(&c) = self.target_classes.iter().find(|&&c| usize::from(c) >= class_count) {
            return bad(format!("target class {c} out of range (have {class_count} classes)"));
        }
        Ok(())
    }
}

// --- experiment results -------------------------------------------------------

/// One grid cell: recall of the target class on its perturbed test
/// samples. `skipped` counts samples the perturbation did not apply to.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Measurement {
    pub target_class: u16,
    pub strength: u32,
    pub variant: Variant,
    pub recall: f64,
    pub scored: usize,
    pub skipped: usize,
}

/// One log line per grid cell, with timing; kept out of the result proper
/// so result artifacts stay byte-identical across reruns.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RunLogEntry {
    pub target_class: u16,
    pub strength: u32,
    pub variant: Variant,
    pub gen_seed: u64,
    pub scored: usize,
    pub skipped: usize,
    pub recall: f64,
    /// Individual run recalls behind a random-baseline mean, so the
    /// averaging is auditable. Empty for other variants.
    pub rand_recalls: Vec<f64>,
    pub wall_ms: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub attack: String,
    pub strength_label: String,
    pub encoding: EncodingKind,
    pub model_id: String,
    pub labels: Vec<String>,
    pub strengths: Vec<u32>,
    pub variants: Vec<Variant>,
    pub rand_runs: usize,
    pub seed: u64,
    /// Clean test metrics; the no-attack rows are read from here.
    pub clean: EvalMetrics,
    pub measurements: Vec<Measurement>,
}

pub struct ExperimentOutput {
    pub result: ExperimentResult,
    pub log: Vec<RunLogEntry>,
    /// The optimized perturbation of each (class, strength > 0) job.
    pub uaps: Vec<Uap>,
}

impl ExperimentResult {
    pub fn recall(&self, class: u16, strength: u32, variant: Variant) -> Option<f64> {
        self.measurements
            .iter()
            .find(|m| m.target_class == class && m.strength == strength && m.variant == variant)
            .map(|m| m.recall)
    }
}

// --- scoring ------------------------------------------------------------------

/// Test-sample views of one target class.
enum ClassUniverse<'a> {
    Packets(Vec<&'a PacketSample>),
    Flows(Vec<&'a BidirectionalFlow>),
}

impl ClassUniverse<'_> {
    fn len(&self) -> usize {
        match self {
            ClassUniverse::Packets(v) => v.len(),
            ClassUniverse::Flows(v) => v.len(),
        }
    }
}

/// How to materialize one scored sample.
enum Mode<'a> {
    Adv(&'a Uap),
    Port(u64),
    AdvPort(&'a Uap, u64),
}

fn encode_clean_flow(
    flow: &BidirectionalFlow,
    kind: &EncodingKind,
    stats: &NormStats,
) -> Result<EncodedSample, AttackError> {
    let sample = if kind.needs_stats() {
        encode_flow_timeseries(flow, kind, stats)
    } else {
        encode_flow_content(flow, kind)
    };
    Ok(sample.map_err(AttackError::from)?)
}

fn sample_values(
    universe: &ClassUniverse<'_>,
    idx: usize,
    mode: &Mode<'_>,
    kind: &EncodingKind,
    stats: &NormStats,
) -> Result<Vec<f32>, AttackError> {
    let apply_flow = |flow: &BidirectionalFlow, uap: &Uap| match uap.attack {
        AttackSpec::AdvPay { .. } => apply_advpay(flow, uap),
        AttackSpec::AdvBurst { .. } => apply_advburst(flow, uap, stats),
        AttackSpec::AdvPad { .. } => Err(AttackError::WrongAttack {
            expected: "a flow-level perturbation".into(),
            got: "adv_pad",
        }),
    };
    let sample = match universe {
        ClassUniverse::Packets(packets) => {
            let p = packets[idx];
            match mode {
                Mode::Adv(uap) => apply_advpad(&p.packet, uap, p.label, p.id)?,
                Mode::Port(seed) => {
                    encode_packet(&port_attack_packet(&p.packet, *seed), kind, p.label, p.id)?
                }
                Mode::AdvPort(uap, seed) => {
                    apply_advpad(&port_attack_packet(&p.packet, *seed), uap, p.label, p.id)?
                }
            }
        }
        ClassUniverse::Flows(flows) => {
            let f = flows[idx];
            match mode {
                Mode::Adv(uap) => apply_flow(f, uap)?,
                Mode::Port(seed) => encode_clean_flow(&port_attack_flow(f, *seed), kind, stats)?,
                Mode::AdvPort(uap, seed) => apply_flow(&port_attack_flow(f, *seed), uap)?,
            }
        }
    };
    Ok(sample.values)
}

#[derive(Clone)]
struct Score {
    recall: f64,
    scored: usize,
    skipped: usize,
}

/// The clean score of one class, read off the full-test-split metrics so
/// no-attack rows agree with the clean block bit for bit.
fn clean_class_score(metrics: &EvalMetrics, class: u16) -> Score {
    let pc = &metrics.per_class[usize::from(class)];
    Score { recall: pc.recall, scored: pc.support, skipped: 0 }
}

/// Applies one condition to every test sample of the class and measures
/// how often the model still predicts that class. Samples the condition
/// cannot be applied to are skipped and counted.
fn score_condition(
    model: &Model,
    universe: &ClassUniverse<'_>,
    mode: &Mode<'_>,
    stats: &NormStats,
    class: u16,
) -> Result<Score, EvalError> {
    let kind = &model.encoding;
    let mut rows: Vec<Vec<f32>> = Vec::with_capacity(universe.len());
    let mut skipped = 0usize;
    for idx in 0..universe.len() {
        match sample_values(universe, idx, mode, kind, stats) {
            Ok(values) => rows.push(values),
            Err(AttackError::NotUsable(_)) => skipped += 1,
            Err(e) => return Err(e.into()),
        }
    }
    if rows.is_empty() {
        return Ok(Score { recall: 0.0, scored: 0, skipped });
    }
    let mut x = Array2::zeros((rows.len(), rows[0].len()));
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            x[[i, j]] = v;
        }
    }
    let predictions = predict_rows(model, &x)?;
    let hits = predictions.iter().filter(|&&p| p == class).count();
    Ok(Score { recall: hits as f64 / predictions.len() as f64, scored: predictions.len(), skipped })
}

/// Arithmetic mean over baseline runs, keeping the per-run recalls so the
/// average stays auditable in the log.
fn mean_score(scores: &[Score]) -> (Score, Vec<f64>) {
    let recalls: Vec<f64> = scores.iter().map(|s| s.recall).collect();
    let n = scores.len().max(1) as f64;
    (
        Score {
            recall: recalls.iter().sum::<f64>() / n,
            scored: scores.first().map_or(0, |s| s.scored),
            skipped: scores.first().map_or(0, |s| s.skipped),
        },
        recalls,
    )
}

// --- the sweep ----------------------------------------------------------------

fn assert_split_hygiene(data: &PreparedData, packet_level: bool) -> Result<(), EvalError> {
    let (val, test): (BTreeSet<u64>, BTreeSet<u64>) = if packet_level {
        (
            data.packets.validation.iter().map(|p| p.id).collect(),
            data.packets.test.iter().map(|p| p.id).collect(),
        )
    } else {
        (
            data.flows.validation.iter().map(|f| f.id).collect(),
            data.flows.test.iter().map(|f| f.id).collect(),
        )
    };
    if val.intersection(&test).next().is_some() {
        return Err(EvalError::SplitLeak);
    }
    Ok(())
}

struct JobOutput {
    measurements: Vec<Measurement>,
    log: Vec<RunLogEntry>,
    uap: Option<Uap>,
}

fn class_universe(data: &PreparedData, packet_level: bool, class: u16) -> ClassUniverse<'_> {
    if packet_level {
        ClassUniverse::Packets(data.packets.test.iter().filter(|p| p.label == class).collect())
    } else {
        ClassUniverse::Flows(data.flows.test.iter().filter(|f| f.label == Some(class)).collect())
    }
}

#[allow(clippy::too_many_arguments)]
fn run_job(
    model: &Model,
    data: &PreparedData,
    plan: &ExperimentPlan,
    class: u16,
    strength: u32,
    port_seed: u64,
    clean: &Score,
    port: Option<&Score>,
) -> Result<JobOutput, EvalError> {
    let packet_level = model.encoding.is_packet_level();
    let gen_seed = subseed(plan.seed, &format!("gen/{}/{class}/{strength}", plan.family.name()));
    let rand_seed = subseed(plan.seed, &format!("rand/{}/{class}/{strength}", plan.family.name()));
    let gen = GenParams { seed: gen_seed, ..plan.gen };
    let port_score = || port.expect("port variants imply a precomputed port score").clone();

    let universe = class_universe(data, packet_level, class);

    let needs_adv = strength > 0
        && plan.variants.iter().any(|v| {
            matches!(v, Variant::Adv | Variant::Rand | Variant::AdvPort | Variant::RandPort)
        });
    let adv_uap: Option<Uap> = if needs_adv {
        Some(match &plan.family {
            AttackFamily::Pad { location } => {
                let candidates: Vec<Packet> = data
                    .packets
                    .validation
                    .iter()
                    .filter(|p| p.label == class)
                    .map(|p| p.packet.clone())
                    .collect();
                gen_advpad(model, &candidates, class, *location, strength, &gen)?
            }
            AttackFamily::Pay { dummy_index } => {
                let flows: Vec<BidirectionalFlow> = data
                    .flows
                    .validation
                    .iter()
                    .filter(|f| f.label == Some(class))
                    .cloned()
                    .collect();
                gen_advpay(model, &flows, class, strength as usize, *dummy_index, &gen)?
            }
            AttackFamily::Burst { policy, max_dummy_size } => {
                let flows: Vec<BidirectionalFlow> = data
                    .flows
                    .validation
                    .iter()
                    .filter(|f| f.label == Some(class))
                    .cloned()
                    .collect();
                gen_advburst(model, &flows, class, strength as usize, *policy, *max_dummy_size, &gen)?
            }
        })
    } else {
        None
    };
    let needs_rand = strength > 0 && plan.variants.iter().any(Variant::uses_rand);
    let rand_uaps: Vec<Uap> = match (&adv_uap, needs_rand) {
        (Some(uap), true) => rand_baseline(uap, plan.rand_runs, rand_seed)?,
        _ => Vec::new(),
    };

    let mut measurements = Vec::with_capacity(plan.variants.len());
    let mut log = Vec::with_capacity(plan.variants.len());
    for &variant in &plan.variants {
        let started = Instant::now();
        let mut rand_recalls = Vec::new();
        let score = match variant {
            Variant::NoAttack => clean.clone(),
            Variant::Adv => match &adv_uap {
                Some(uap) => score_condition(model, &universe, &Mode::Adv(uap), &data.stats, class)?,
                None => clean.clone(),
            },
            Variant::Port => port_score(),
            Variant::AdvPort => match &adv_uap {
                Some(uap) => {
                    score_condition(model, &universe, &Mode::AdvPort(uap, port_seed), &data.stats, class)?
                }
                None => port_score(),
            },
            Variant::Rand => {
                if rand_uaps.is_empty() {
                    clean.clone()
                } else {
                    let scores = rand_uaps
                        .iter()
                        .map(|u| score_condition(model, &universe, &Mode::Adv(u), &data.stats, class))
                        .collect::<Result<Vec<_>, _>>()?;
                    let (mean, recalls) = mean_score(&scores);
                    rand_recalls = recalls;
                    mean
                }
            }
            Variant::RandPort => {
                if rand_uaps.is_empty() {
                    port_score()
                } else {
                    let scores = rand_uaps
                        .iter()
                        .map(|u| {
                            score_condition(model, &universe, &Mode::AdvPort(u, port_seed), &data.stats, class)
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    let (mean, recalls) = mean_score(&scores);
                    rand_recalls = recalls;
                    mean
                }
            }
        };
        measurements.push(Measurement {
            target_class: class,
            strength,
            variant,
            recall: score.recall,
            scored: score.scored,
            skipped: score.skipped,
        });
        log.push(RunLogEntry {
            target_class: class,
            strength,
            variant,
            gen_seed,
            scored: score.scored,
            skipped: score.skipped,
            recall: score.recall,
            rand_recalls,
            wall_ms: started.elapsed().as_millis() as u64,
        });
    }
    Ok(JobOutput { measurements, log, uap: adv_uap })
}

/// Runs the full sweep: for every target class and strength, optimizes the
/// perturbation on validation samples of that class, then scores each
/// requested condition on the test samples of that class. Jobs run in
/// parallel; results are ordered (class, strength, variant) regardless.
pub fn run_experiment(
    model: &Model,
    data: &PreparedData,
    plan: &ExperimentPlan,
) -> Result<ExperimentOutput, EvalError> {
    plan.validate(model, data.class_count())?;
    let packet_level = model.encoding.is_packet_level();
    assert_split_hygiene(data, packet_level)?;
    let classes: Vec<u16> = if plan.target_classes.is_empty() {
        (0..data.class_count() as u16).collect()
    } else {
        plan.target_classes.clone()
    };
    let port_seed = subseed(plan.seed, "port-map");

    // Strength-independent conditions, computed once per class: the clean
    // block (also reported) and, when needed, the ports-only rewrite.
    let clean = clean_test_metrics(data, model)?;
    let wants_ports = plan.variants.iter().any(Variant::uses_ports);
    let mut port_scores: BTreeMap<u16, Score> = BTreeMap::new();
    for &c in &classes {
        if wants_ports {
            let universe = class_universe(data, packet_level, c);
            let score = score_condition(model, &universe, &Mode::Port(port_seed), &data.stats, c)?;
            port_scores.insert(c, score);
        }
    }

    let jobs: Vec<(u16, u32)> = classes
        .iter()
        .flat_map(|&c| plan.strengths.iter().map(move |&s| (c, s)))
        .collect();
    let outputs: Vec<JobOutput> = jobs
        .par_iter()
        .map(|&(c, s)| {
            run_job(
                model,
                data,
                plan,
                c,
                s,
                port_seed,
                &clean_class_score(&clean, c),
                port_scores.get(&c),
            )
        })
        .collect::<Result<Vec<_>, _>>()?;

    let mut measurements = Vec::new();
    let mut log = Vec::new();
    let mut uaps = Vec::new();
    for out in outputs {
        measurements.extend(out.measurements);
        log.extend(out.log);
        uaps.extend(out.uap);
    }
    Ok(ExperimentOutput {
        result: ExperimentResult {
            attack: plan.family.name().into(),
            strength_label: plan.family.strength_label().into(),
            encoding: model.encoding,
            model_id: format!("{:016x}", model.id()),
            labels: data.labels.clone(),
            strengths: plan.strengths.clone(),
            variants: plan.variants.clone(),
            rand_runs: plan.rand_runs,
            seed: plan.seed,
            clean,
            measurements,
        },
        log,
        uaps,
    })
}

// --- transfer -----------------------------------------------------------------

/// One perturbation scored against a (usually different) model over the
/// whole test split: overall accuracy plus per-class recall.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferRow {
    pub attack: String,
    pub parameter: u32,
    pub target_class: u16,
    pub source_model: String,
    pub target_model: String,
    pub accuracy: f64,
    pub recalls: Vec<f64>,
    pub scored: usize,
    pub skipped: usize,
}

/// Applies each perturbation to every test sample (all classes) and
/// evaluates `model` on the survivors. The perturbations may come from any
/// source model with the same encoding; that is the point.
pub fn run_transfer(
    model: &Model,
    uaps: &[Uap],
    data: &PreparedData,
) -> Result<Vec<TransferRow>, EvalError> {
    if model.labels != data.labels {
        return Err(EvalError::BadPlan(format!(
            "model labels {:?} do not match the dataset's {:?}",
            model.labels, data.labels
        )));
    }
    let target_model = format!("{:016x}", model.id());
    let class_count = data.class_count();
    let mut rows = Vec::with_capacity(uaps.len());
    for uap in uaps {
        if uap.encoding != model.encoding {
            return Err(EvalError::BadPlan(format!(
                "perturbation built for {} cannot be scored on a {} model",
                uap.encoding.name(),
                model.encoding.name()
            )));
        }
        let mut truth: Vec<u16> = Vec::new();
        let mut values: Vec<Vec<f32>> = Vec::new();
        let mut skipped = 0usize;
        if model.encoding.is_packet_level() {
            for p in &data.packets.test {
                match apply_advpad(&p.packet, uap, p.label, p.id) {
                    Ok(s) => {
                        truth.push(p.label);
                        values.push(s.values);
                    }
                    Err(AttackError::NotUsable(_)) => skipped += 1,
                    Err(e) => return Err(e.into()),
                }
            }
        } else {
            for f in &data.flows.test {
                let applied = match uap.attack {
                    AttackSpec::AdvPay { .. } => apply_advpay(f, uap),
                    AttackSpec::AdvBurst { .. } => apply_advburst(f, uap, &data.stats),
                    AttackSpec::AdvPad { .. } => {
                        return Err(EvalError::BadPlan(
                            "per-packet perturbation scored on a flow-level model".into(),
                        ))
                    }
                };
                match applied {
                    Ok(s) => {
                        truth.push(f.label.unwrap_or(0));
                        values.push(s.values);
                    }
                    Err(AttackError::NotUsable(_)) => skipped += 1,
                    Err(e) => return Err(e.into()),
                }
            }
        }
        if values.is_empty() {
            return Err(EvalError::Data("perturbation applied to no test samples".into()));
        }
        let mut x = Array2::zeros((values.len(), values[0].len()));
        for (i, row) in values.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                x[[i, j]] = v;
            }
        }
        let predictions = predict_rows(model, &x)?;
        let metrics = metrics_from_predictions(&truth, &predictions, class_count);
        rows.push(TransferRow {
            attack: uap.attack.name().into(),
            parameter: uap.attack.strength(),
            target_class: uap.target_class,
            source_model: format!("{:016x}", uap.source_model_id),
            target_model: target_model.clone(),
            accuracy: metrics.accuracy,
            recalls: metrics.per_class.iter().map(|c| c.recall).collect(),
            scored: truth.len(),
            skipped,
        });
    }
    Ok(rows)
}

/// Full transfer study: optimizes perturbations against `source` (the
/// usual sweep), then scores them on `target`, which never contributes a
/// gradient. Both models must share the encoding and label set.
pub fn run_transfer_experiment(
    source: &Model,
    target: &Model,
    data: &PreparedData,
    plan: &ExperimentPlan,
) -> Result<(Vec<TransferRow>, ExperimentOutput), EvalError> {
    if source.encoding != target.encoding {
        return Err(EvalError::BadPlan(format!(
            "source model encodes {} but target encodes {}",
            source.encoding.name(),
            target.encoding.name()
        )));
    }
    if source.labels != target.labels {
        return Err(EvalError::BadPlan(
            "source and target models were trained on different label sets".into(),
        ));
    }
    let out = run_experiment(source, data, plan)?;
    let rows = run_transfer(target, &out.uaps, data)?;
    Ok((rows, out))
}

// --- reports ------------------------------------------------------------------

pub const TABLE_HEADER: &str = "strength,no_attack,adv,rand,adv_port,rand_port,port";

fn pct(v: f64) -> String {
    format!("{:.2}", v * 100.0)
}

/// Renders the sweep as a CSV table: one row per strength, recall
/// percentages (2 decimals) per condition, empty cells for conditions the
/// sweep did not include. `class` picks one target class; `None` averages
/// over all swept classes.
pub fn experiment_table(result: &ExperimentResult, class: Option<u16>) -> String {
    let mut by_cell: BTreeMap<(u32, Variant), Vec<f64>> = BTreeMap::new();
    for m in &result.measurements {
        if class.is_none_or(|c| c == m.target_class) {
            by_cell.entry((m.strength, m.variant)).or_default().push(m.recall);
        }
    }
    let mut out = String::from(TABLE_HEADER);
    out.push('\n');
    for &s in &result.strengths {
        out.push_str(&s.to_string());
        for v in VARIANTS {
            out.push(',');
            if let Some(recalls) = by_cell.get(&(s, v)) {
                out.push_str(&pct(recalls.iter().sum::<f64>() / recalls.len() as f64));
            }
        }
        out.push('\n');
    }
    out
}

/// One parsed report row: recall percentages in [`VARIANTS`] order, `None`
/// where the table left the cell empty.
#[derive(Clone, Debug, PartialEq)]
pub struct TableRow {
    pub strength: u32,
    pub recall_pct: [Option<f64>; 6],
}

/// Parses a table produced by [`experiment_table`].
pub fn parse_experiment_table(text: &str) -> Result<Vec<TableRow>, EvalError> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim_end() == TABLE_HEADER => {}
        other => {
            return Err(EvalError::BadReport(format!(
                "expected header {TABLE_HEADER:?}, found {other:?}"
            )))
        }
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(EvalError::BadReport(format!(
                "row {}: expected 7 fields, found {}",
                i + 2,
                fields.len()
            )));
        }
        let strength = fields[0]
            .trim()
            .parse::<u32>()
            .map_err(|e| EvalError::BadReport(format!("row {}: strength: {e}", i + 2)))?;
        let mut recall_pct = [None; 6];
        for (slot, field) in recall_pct.iter_mut().zip(&fields[1..]) {
            let field = field.trim();
            if !field.is_empty() {
                *slot = Some(field.parse::<f64>().map_err(|e| {
                    EvalError::BadReport(format!("row {}: recall: {e}", i + 2))
                })?);
            }
        }
        rows.push(TableRow { strength, recall_pct });
    }
    Ok(rows)
}

/// Renders transfer rows as CSV: accuracy and per-class recall
/// percentages, one row per scored perturbation.
pub fn transfer_table(rows: &[TransferRow], labels: &[String]) -> String {
    let mut out = String::from("attack,parameter,target_class,source_model,target_model,accuracy");
    for l in labels {
        out.push_str(",recall_");
        out.push_str(l);
    }
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}",
            r.attack,
            r.parameter,
            r.target_class,
            r.source_model,
            r.target_model,
            pct(r.accuracy)
        ));
        for v in &r.recalls {
            out.push(',');
            out.push_str(&pct(*v));
        }
        out.push('\n');
    }
    out
}

/// Renders per-class precision/recall/F-score plus a final overall row as
/// CSV percentages. In the overall row the three metric columns coincide:
/// micro-averaged precision, recall, and F-score all equal accuracy for
/// single-label classification.
pub fn metrics_table(metrics: &EvalMetrics, labels: &[String]) -> String {
    let mut out = String::from("class,precision,recall,fscore\n");
    for c in &metrics.per_class {
        let name = labels
            .get(usize::from(c.label))
            .cloned()
            .unwrap_or_else(|| c.label.to_string());
        out.push_str(&format!("{name},{},{},{}\n", pct(c.precision), pct(c.recall), pct(c.fscore)));
    }
    let acc = pct(metrics.accuracy);
    out.push_str(&format!("overall,{acc},{acc},{acc}\n"));
    out
}

/// Serializes log entries as JSON lines.
pub fn log_to_jsonl(entries: &[RunLogEntry]) -> Result<String, EvalError> {
    let mut out = String::new();
    for e in entries {
        out.push_str(&serde_json::to_string(e)?);
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{ingest_manifest, IngestConfig};
    use crate::nn::{ArchFamily, LayerSpec};
    use crate::synth::write_corpus;
    use std::path::Path;

    fn bundle(dir: &Path, flows_per_class: usize, seed: u64) -> Bundle {
        let manifest = write_corpus(&dir.join("corpus"), flows_per_class, seed).unwrap();
        let config = IngestConfig { seed, ..IngestConfig::default() };
        let (bundle, _) = ingest_manifest(&manifest, &dir.join("bundle"), &config).unwrap();
        bundle
    }

    fn linear_spec(input_length: usize, class_count: usize) -> ModelSpec {
        ModelSpec {
            layers: vec![
                LayerSpec::Flatten,
                LayerSpec::Dense { units: class_count },
                LayerSpec::Softmax,
            ],
            input_length,
            class_count,
            family: ArchFamily::Sae,
        }
    }

    fn quick_train(data: &PreparedData, kind: EncodingKind) -> Model {
        let spec = linear_spec(kind.len(), data.class_count());
        let config = TrainConfig { epochs: 8, batch_size: 32, learning_rate: 0.05, seed: 5, patience: None };
        train_model(data, &spec, kind, &config).unwrap()
    }

    #[test]
    fn preparation_balances_training_and_keeps_eval_splits_disjoint() {
        let dir = tempfile::tempdir().unwrap();
        let b = bundle(dir.path(), 12, 3);
        let data = prepare(&b).unwrap();

        // Training flows: every class at exactly the bundle's target.
        let mut flow_counts: BTreeMap<u16, usize> = BTreeMap::new();
        for f in &data.flows.train {
            *flow_counts.entry(f.label.unwrap()).or_default() += 1;
        }
        assert_eq!(flow_counts.len(), 4);
        assert!(flow_counts.values().all(|&n| n == b.meta.balance_target));

        // Training packets: balanced to one shared count.
        let mut pkt_counts: BTreeMap<u16, usize> = BTreeMap::new();
        for p in &data.packets.train {
            *pkt_counts.entry(p.label).or_default() += 1;
        }
        assert_eq!(pkt_counts.len(), 4);
        let first = *pkt_counts.values().next().unwrap();
        assert!(pkt_counts.values().all(|&n| n == first), "{pkt_counts:?}");

        // Evaluation splits never share ids, in either universe.
        let val: BTreeSet<u64> = data.flows.validation.iter().map(|f| f.id).collect();
        let test: BTreeSet<u64> = data.flows.test.iter().map(|f| f.id).collect();
        assert!(val.is_disjoint(&test));
        let val: BTreeSet<u64> = data.packets.validation.iter().map(|p| p.id).collect();
        let test: BTreeSet<u64> = data.packets.test.iter().map(|p| p.id).collect();
        assert!(val.is_disjoint(&test));

        // Stats match an independent fit on the raw training flows.
        assert_eq!(data.stats, fit_norm_stats(&b.read_flows("train").unwrap()).unwrap());

        // Deterministic end to end.
        assert_eq!(data, prepare(&b).unwrap());
    }

    #[test]
    fn packet_resplit_covers_the_whole_pool_once() {
        let dir = tempfile::tempdir().unwrap();
        let b = bundle(dir.path(), 12, 4);
        let data = prepare(&b).unwrap();
        let pool: usize =
            SPLIT_NAMES.iter().map(|s| b.read_packets(s).unwrap().len()).sum();
        let mut ids: BTreeSet<u64> = BTreeSet::new();
        for p in data
            .packets
            .validation
            .iter()
            .chain(&data.packets.test)
        {
            assert!(ids.insert(p.id), "id {} appears twice", p.id);
        }
        let train_ids: BTreeSet<u64> = data.packets.train.iter().map(|p| p.id).collect();
        for id in &train_ids {
            assert!(ids.insert(*id), "training id {id} leaked into an evaluation split");
        }
        // Balancing may duplicate or drop training packets, but the three
        // splits together never invent ids outside the pool.
        assert!(ids.len() <= pool);
        assert!(ids.iter().all(|&id| id < pool as u64));
        for split in [&data.packets.validation, &data.packets.test] {
            let mut by_class: BTreeMap<u16, usize> = BTreeMap::new();
            for p in split {
                *by_class.entry(p.label).or_default() += 1;
            }
            assert_eq!(by_class.len(), 4);
            assert!(by_class.values().all(|&n| n > 0));
        }
    }

    #[test]
    fn strength_zero_reduces_to_the_clean_and_port_baselines() {
        let dir = tempfile::tempdir().unwrap();
        let data = prepare(&bundle(dir.path(), 10, 7)).unwrap();
        let model = quick_train(&data, EncodingKind::PcHp { max_pkt_size: 60 });
        let plan = ExperimentPlan {
            family: AttackFamily::Pad { location: PadLocation::Start },
            strengths: vec![0, 20],
            variants: VARIANTS.to_vec(),
            target_classes: vec![0, 2],
            rand_runs: 2,
            gen: GenParams { iterations: 5, ..GenParams::advpad_defaults() },
            seed: 9,
        };
        let out = run_experiment(&model, &data, &plan).unwrap();
        assert_eq!(out.uaps.len(), 2, "strength 0 optimizes nothing; strength 20 does");
        for &c in &[0u16, 2] {
            let clean = out.result.recall(c, 0, Variant::NoAttack).unwrap();
            let port = out.result.recall(c, 0, Variant::Port).unwrap();
            assert_eq!(out.result.recall(c, 0, Variant::Adv).unwrap(), clean);
            assert_eq!(out.result.recall(c, 0, Variant::Rand).unwrap(), clean);
            assert_eq!(out.result.recall(c, 0, Variant::AdvPort).unwrap(), port);
            assert_eq!(out.result.recall(c, 0, Variant::RandPort).unwrap(), port);

            // The no-attack row reads off the clean block, and the
            // strength-independent rows never move across strengths.
            assert_eq!(clean, out.result.clean.recall(c));
            assert_eq!(out.result.recall(c, 20, Variant::NoAttack).unwrap(), clean);
            assert_eq!(out.result.recall(c, 20, Variant::Port).unwrap(), port);
        }
    }

    #[test]
    fn sweeps_are_deterministic_and_fully_logged() {
        let dir = tempfile::tempdir().unwrap();
        let data = prepare(&bundle(dir.path(), 10, 1)).unwrap();
        let model = quick_train(&data, EncodingKind::PcP { max_pkt_size: 60 });
        let plan = ExperimentPlan {
            family: AttackFamily::Pad { location: PadLocation::End },
            strengths: vec![0, 40],
            variants: vec![Variant::NoAttack, Variant::Adv, Variant::Rand],
            target_classes: vec![1],
            rand_runs: 2,
            gen: GenParams { iterations: 10, batch_size: 32, epsilon: 0.05, seed: 0 },
            seed: 33,
        };
        let a = run_experiment(&model, &data, &plan).unwrap();
        let b = run_experiment(&model, &data, &plan).unwrap();
        assert_eq!(a.result, b.result);
        assert_eq!(a.uaps.len(), 1);
        assert_eq!(a.uaps[0].values, b.uaps[0].values);
        assert_eq!(a.uaps[0].target_class, 1);

        // One log line per grid cell, JSONL round-trippable.
        assert_eq!(a.log.len(), plan.strengths.len() * plan.variants.len());
        let jsonl = log_to_jsonl(&a.log).unwrap();
        for (line, entry) in jsonl.lines().zip(&a.log) {
            let parsed: RunLogEntry = serde_json::from_str(line).unwrap();
            assert_eq!(parsed.recall, entry.recall);
            assert_eq!(parsed.variant, entry.variant);
        }

        // Random-baseline means stay auditable: the logged per-run recalls
        // average to the reported number exactly.
        for entry in &a.log {
            if entry.variant == Variant::Rand && entry.strength > 0 {
                assert_eq!(entry.rand_recalls.len(), plan.rand_runs);
                let mean = entry.rand_recalls.iter().sum::<f64>() / plan.rand_runs as f64;
                assert_eq!(mean, entry.recall);
            } else {
                assert!(entry.rand_recalls.is_empty());
            }
        }

        // Every measurement scored every usable sample.
        for m in &a.result.measurements {
            assert!(m.scored > 0);
            assert!((0.0..=1.0).contains(&m.recall));
        }
    }

    #[test]
    fn report_tables_round_trip_and_leave_missing_variants_empty() {
        let dir = tempfile::tempdir().unwrap();
        let data = prepare(&bundle(dir.path(), 10, 2)).unwrap();
        let model = quick_train(&data, EncodingKind::PcP { max_pkt_size: 60 });
        let plan = ExperimentPlan {
            family: AttackFamily::Pad { location: PadLocation::Start },
            strengths: vec![0, 30],
            variants: vec![Variant::NoAttack, Variant::Adv],
            target_classes: vec![0, 1],
            rand_runs: 1,
            gen: GenParams { iterations: 5, batch_size: 16, epsilon: 0.05, seed: 0 },
            seed: 4,
        };
        let out = run_experiment(&model, &data, &plan).unwrap();

        let text = experiment_table(&out.result, None);
        assert!(text.starts_with(TABLE_HEADER));
        let rows = parse_experiment_table(&text).unwrap();
        assert_eq!(rows.len(), 2);
        for (row, &s) in rows.iter().zip(&plan.strengths) {
            assert_eq!(row.strength, s);
            // Mean over both classes, at 2-decimal precision.
            let expect = (out.result.recall(0, s, Variant::Adv).unwrap()
                + out.result.recall(1, s, Variant::Adv).unwrap())
                / 2.0;
            let printed = row.recall_pct[1].unwrap();
            assert!((printed - expect * 100.0).abs() < 0.005 + 1e-9);
            assert!(row.recall_pct[0].is_some(), "no_attack present");
            for missing in 2..6 {
                assert_eq!(row.recall_pct[missing], None, "unswept variants stay empty");
            }
        }

        // Single-class table differs from the mean table when classes differ.
        let one = experiment_table(&out.result, Some(0));
        parse_experiment_table(&one).unwrap();

        // Parser rejects a wrong header.
        assert!(matches!(
            parse_experiment_table("strength,foo\n1,2"),
            Err(EvalError::BadReport(_))
        ));
    }

    #[test]
    fn plans_reject_incompatible_requests() {
        let dir = tempfile::tempdir().unwrap();
        let data = prepare(&bundle(dir.path(), 10, 6)).unwrap();
        let pc_p = quick_train(&data, EncodingKind::PcP { max_pkt_size: 60 });

        let base = ExperimentPlan {
            family: AttackFamily::Pad { location: PadLocation::Start },
            strengths: vec![10],
            variants: vec![Variant::NoAttack, Variant::Adv],
            target_classes: vec![],
            rand_runs: 2,
            gen: GenParams { iterations: 1, ..GenParams::advpad_defaults() },
            seed: 0,
        };

        // Port conditions need header bytes in the encoding.
        let ports = ExperimentPlan { variants: vec![Variant::Port], ..base.clone() };
        assert!(matches!(run_experiment(&pc_p, &data, &ports), Err(EvalError::Attack(_))));

        // Family and encoding must match.
        let pay = ExperimentPlan {
            family: AttackFamily::Pay { dummy_index: DummyIndexPolicy::AfterFirstForward },
            ..base.clone()
        };
        assert!(matches!(run_experiment(&pc_p, &data, &pay), Err(EvalError::BadPlan(_))));

        // Sweeping nothing is a plan error.
        let empty = ExperimentPlan { strengths: vec![], ..base.clone() };
        assert!(matches!(run_experiment(&pc_p, &data, &empty), Err(EvalError::BadPlan(_))));

        // Out-of-range target class.
        let class = ExperimentPlan { target_classes: vec![9], ..base.clone() };
        assert!(matches!(run_experiment(&pc_p, &data, &class), Err(EvalError::BadPlan(_))));

        // Random baselines need at least one draw.
        let norand = ExperimentPlan {
            variants: vec![Variant::Rand],
            rand_runs: 0,
            ..base.clone()
        };
        assert!(matches!(run_experiment(&pc_p, &data, &norand), Err(EvalError::BadPlan(_))));

        // Dummy payloads must fit the packet slot.
        let fcc = quick_train(&data, EncodingKind::FccP { n: 3, max_pkt_size: 60 });
        let wide = ExperimentPlan {
            family: AttackFamily::Pay { dummy_index: DummyIndexPolicy::AfterFirstForward },
            strengths: vec![61],
            ..base
        };
        assert!(matches!(run_experiment(&fcc, &data, &wide), Err(EvalError::BadPlan(_))));
    }

    #[test]
    fn standard_plans_match_the_encoding() {
        let dir = tempfile::tempdir().unwrap();
        let data = prepare(&bundle(dir.path(), 10, 8)).unwrap();
        let hp = quick_train(&data, EncodingKind::FccHp { n: 3, max_pkt_size: 60 });
        let plan = ExperimentPlan::standard(
            AttackFamily::Pay { dummy_index: DummyIndexPolicy::AfterFirstForward },
            &hp,
            1,
        );
        assert_eq!(plan.variants, VARIANTS.to_vec());
        assert!(plan.strengths.iter().all(|&s| s as usize <= 60), "{:?}", plan.strengths);
        assert!(!plan.strengths.is_empty());

        let p = quick_train(&data, EncodingKind::PcP { max_pkt_size: 60 });
        let plan = ExperimentPlan::standard(AttackFamily::Pad { location: PadLocation::Start }, &p, 1);
        assert_eq!(plan.variants, vec![Variant::NoAttack, Variant::Adv, Variant::Rand]);
        assert_eq!(plan.strengths, vec![0, 10, 20, 30, 40, 50]);
    }

    #[test]
    fn transfer_scores_whole_test_sets_and_validates_encodings() {
        let dir = tempfile::tempdir().unwrap();
        let data = prepare(&bundle(dir.path(), 10, 5)).unwrap();
        let kind = EncodingKind::FccP { n: 3, max_pkt_size: 60 };
        let source = quick_train(&data, kind);
        let spec = linear_spec(kind.len(), data.class_count());
        let config = TrainConfig { epochs: 6, batch_size: 32, learning_rate: 0.03, seed: 77, patience: None };
        let target = train_model(&data, &spec, kind, &config).unwrap();
        assert_ne!(source.id(), target.id());

        let flows: Vec<BidirectionalFlow> = data
            .flows
            .validation
            .iter()
            .filter(|f| f.label == Some(2))
            .cloned()
            .collect();
        let uap = gen_advpay(
            &source,
            &flows,
            2,
            24,
            DummyIndexPolicy::AfterFirstForward,
            &GenParams { iterations: 10, batch_size: 16, epsilon: 0.01, seed: 3 },
        )
        .unwrap();

        let rows = run_transfer(&target, &[uap.clone()], &data).unwrap();
        assert_eq!(rows.len(), 1);
        let row = &rows[0];
        assert_eq!(row.attack, "adv_pay");
        assert_eq!(row.parameter, 24);
        assert_eq!(row.target_class, 2);
        assert_eq!(row.source_model, format!("{:016x}", source.id()));
        assert_eq!(row.target_model, format!("{:016x}", target.id()));
        assert_eq!(row.scored + row.skipped, data.flows.test.len());
        assert_eq!(row.recalls.len(), 4);
        assert!((0.0..=1.0).contains(&row.accuracy));

        let text = transfer_table(&rows, &data.labels);
        assert!(text.starts_with(
            "attack,parameter,target_class,source_model,target_model,accuracy,recall_bulk,recall_chat,recall_stream,recall_web\n"
        ));
        assert_eq!(text.lines().count(), 2);

        // Mismatched encodings are refused.
        let pc = quick_train(&data, EncodingKind::PcP { max_pkt_size: 60 });
        assert!(matches!(run_transfer(&pc, &[uap], &data), Err(EvalError::BadPlan(_))));
    }

    #[test]
    fn transfer_experiments_generate_on_source_and_score_on_target() {
        let dir = tempfile::tempdir().unwrap();
        let data = prepare(&bundle(dir.path(), 10, 13)).unwrap();
        let kind = EncodingKind::FccP { n: 3, max_pkt_size: 60 };
        let source = quick_train(&data, kind);
        let plan = ExperimentPlan {
            family: AttackFamily::Pay { dummy_index: DummyIndexPolicy::AfterFirstForward },
            strengths: vec![24],
            variants: vec![Variant::NoAttack, Variant::Adv],
            target_classes: vec![1],
            rand_runs: 1,
            gen: GenParams { iterations: 10, batch_size: 16, epsilon: 0.01, seed: 0 },
            seed: 6,
        };

        // Scoring perturbations back on their own source model agrees with
        // the sweep's own numbers for the targeted class.
        let (rows, out) = run_transfer_experiment(&source, &source, &data, &plan).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].source_model, rows[0].target_model);
        let swept = out.result.recall(1, 24, Variant::Adv).unwrap();
        assert!(
            (rows[0].recalls[1] - swept).abs() < 1e-9,
            "transfer {} vs sweep {swept}",
            rows[0].recalls[1]
        );

        // Encoding mismatch between source and target is refused up front.
        let pc = quick_train(&data, EncodingKind::PcP { max_pkt_size: 60 });
        assert!(matches!(
            run_transfer_experiment(&source, &pc, &data, &plan),
            Err(EvalError::BadPlan(_))
        ));
    }

    #[test]
    fn metrics_tables_put_accuracy_in_the_overall_row() {
        let metrics = metrics_from_predictions(&[0, 0, 1, 1], &[0, 1, 1, 1], 2);
        let text = metrics_table(&metrics, &["alpha".into(), "beta".into()]);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "class,precision,recall,fscore");
        assert!(lines[1].starts_with("alpha,100.00,50.00,"));
        assert!(lines[2].starts_with("beta,66.67,100.00,"));
        assert_eq!(lines[3], "overall,75.00,75.00,75.00");
    }

    #[test]
    fn split_leaks_abort_experiments() {
        let dir = tempfile::tempdir().unwrap();
        let mut data = prepare(&bundle(dir.path(), 10, 11)).unwrap();
        let model = quick_train(&data, EncodingKind::PcP { max_pkt_size: 60 });
        // Smuggle a test packet into validation.
        let stolen = data.packets.test[0].clone();
        data.packets.validation.push(stolen);
        let plan = ExperimentPlan {
            family: AttackFamily::Pad { location: PadLocation::Start },
            strengths: vec![10],
            variants: vec![Variant::NoAttack],
            target_classes: vec![],
            rand_runs: 1,
            gen: GenParams::advpad_defaults(),
            seed: 0,
        };
        assert!(matches!(run_experiment(&model, &data, &plan), Err(EvalError::SplitLeak)));
    }
}
