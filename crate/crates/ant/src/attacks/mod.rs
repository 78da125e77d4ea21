//! Universal perturbation search against trained traffic classifiers.
//!
//! Every attack here shares one mechanism. A perturbation vector ξ lives in
//! a box [`ClipDomain`] in *pre-sign* feature space (direction signs are
//! applied at placement time, never stored in ξ). A placement rule turns
//! each candidate packet or flow into a [`Template`]: the encoded input with
//! ξ's slots left open. Projected gradient ascent on the classifier's own
//! training loss then searches for one ξ that pushes *every* input of the
//! target class away from it:
//!
//! * [`gen_advpad`](advpad) pads individual packets with crafted bytes,
//! * [`gen_advpay`](advpay) injects one crafted dummy packet into a flow's
//!   content window,
//! * [`gen_advburst`](advburst) appends crafted dummy packets to one burst
//!   of a flow's time-series encoding,
//! * [`rand_baseline`](baselines) draws random vectors in the same domain
//!   and placement, and the port rewrite in [`baselines`] randomizes the
//!   transport ports a header-aware model may have keyed on.
//!
//! Found perturbations are saved to a checksummed binary file (see
//! [`save_uap`] / [`load_uap`]) together with everything needed to re-apply
//! them: target class, encoding, placement parameters, and the id of the
//! model they were generated against.

mod advburst;
mod advpad;
mod advpay;
mod baselines;

pub use advburst::{
    apply_advburst, apply_advburst_with_layout, burst_iat_domain, burst_ps_domain,
    decode_dummy_features, default_burst_policy, gen_advburst, materialize_advburst,
    MAX_DUMMY_IAT_US, MIN_DUMMY_IAT_US, MIN_DUMMY_PACKET_SIZE,
};
pub use advpad::{apply_advpad, apply_advpad_with_layout, gen_advpad, materialize_advpad};
pub use advpay::{apply_advpay, apply_advpay_with_layout, gen_advpay, materialize_advpay};
pub use baselines::{
    ensure_port_compatible, flow_port_pair, port_attack_flow, port_attack_packet, rand_baseline,
    PORT_RANGE,
};

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{EncodingKind, FeatureError};
use crate::nn::{Model, NnError};
use crate::seed::subseed;
use crate::traffic::TrafficError;

#[derive(Debug, Error)]
pub enum AttackError {
    #[error("invalid attack parameters: {0}")]
    BadParams(String),
    #[error("no candidate inputs supplied")]
    EmptyInputs,
    #[error("every candidate packet's pad size is zero; raise the overhead or use larger packets")]
    PadAlwaysZero,
    #[error("input not usable for this attack: {0}")]
    NotUsable(String),
    #[error("no usable candidates out of {total}: {reason}")]
    NoUsableInputs { total: usize, reason: String },
    #[error("{attack} needs a {expected} encoding, the model uses {got}")]
    EncodingMismatch { attack: &'static str, expected: &'static str, got: String },
    #[error("perturbation is {expected}, not {got}")]
    WrongAttack { expected: &'static str, got: &'static str },
    #[error("model carries no normalization statistics")]
    MissingStats,
    #[error("port rewriting only affects header-bearing content encodings (PC_HP, FCC_HP), got {0}")]
    PortNeedsHeaders(&'static str),
    #[error("bad perturbation file {path}: {reason}")]
    BadUapFile { path: String, reason: String },
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Traffic(#[from] TrafficError),
    #[error("perturbation io: {0}")]
    Io(#[from] std::io::Error),
    #[error("perturbation metadata: {0}")]
    Json(#[from] serde_json::Error),
}

/// Closed box the perturbation values must stay inside, in pre-sign feature
/// space. `dummy_sign` is the direction any materialized dummy content
/// carries (+1 forward / −1 backward); it scales nothing here — placement
/// rules multiply it in where a signed slot is filled.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClipDomain {
    pub lower: f32,
    pub upper: f32,
    pub dummy_sign: i8,
}

impl ClipDomain {
    pub fn new(lower: f32, upper: f32, dummy_sign: i8) -> Result<Self, AttackError> {
        if !(lower.is_finite() && upper.is_finite() && lower <= upper) {
            return Err(AttackError::BadParams(format!(
                "clip domain [{lower}, {upper}] is not a finite, ordered interval"
            )));
        }
        if dummy_sign != 1 && dummy_sign != -1 {
            return Err(AttackError::BadParams(format!("dummy sign must be ±1, got {dummy_sign}")));
        }
        Ok(ClipDomain { lower, upper, dummy_sign })
    }

    /// Normalized byte values: [0, 1], forward dummies.
    pub fn bytes() -> Self {
        ClipDomain { lower: 0.0, upper: 1.0, dummy_sign: 1 }
    }

    /// Projects one value back into the box.
    pub fn clip_value(&self, v: f32) -> f32 {
        v.clamp(self.lower, self.upper)
    }

    /// Projects a whole vector back into the box, in place.
    pub fn clip(&self, values: &mut [f32]) {
        for v in values {
            *v = self.clip_value(*v);
        }
    }

    pub fn contains(&self, v: f32) -> bool {
        (self.lower..=self.upper).contains(&v)
    }

    /// One uniform draw from the box.
    pub fn sample(&self, rng: &mut impl Rng) -> f32 {
        rng.gen_range(self.lower..=self.upper)
    }
}

/// Where crafted pad bytes go relative to the original payload.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PadLocation {
    Start,
    End,
}

/// Which window slot the crafted dummy packet takes in the payload-injection
/// attack. The dummy always follows an existing packet, whose direction and
/// (for header-aware encodings) header it adopts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "policy", content = "value", rename_all = "snake_case")]
pub enum DummyIndexPolicy {
    /// Right after the first forward packet of the window.
    AfterFirstForward,
    /// Fixed slot index k ≥ 1 (the dummy needs a predecessor).
    Fixed(usize),
}

/// Which burst of a flow receives the crafted dummy packets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "policy", content = "value", rename_all = "snake_case")]
pub enum BurstPolicy {
    FirstForward,
    FirstBackward,
    /// The i-th burst (0-based) regardless of direction.
    Index(usize),
}

impl BurstPolicy {
    /// Dummy direction implied by the policy; index selection adopts each
    /// flow's own burst direction, so +1 is only nominal there.
    pub fn nominal_sign(&self) -> i8 {
        match self {
            BurstPolicy::FirstBackward => -1,
            _ => 1,
        }
    }
}

/// Gradient-ascent search hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    /// Ascent iterations T. Zero returns the initialization untouched.
    pub iterations: usize,
    /// Candidates sampled (without replacement) per iteration.
    pub batch_size: usize,
    /// Ascent step size ε.
    pub epsilon: f32,
    /// Master seed for initialization and batch sampling.
    pub seed: u64,
}

impl GenParams {
    pub fn advpad_defaults() -> Self {
        GenParams { iterations: 1000, batch_size: 128, epsilon: 0.01, seed: 0 }
    }

    pub fn advpay_defaults() -> Self {
        GenParams { iterations: 1000, batch_size: 64, epsilon: 0.001, seed: 0 }
    }

    pub fn advburst_defaults() -> Self {
        GenParams { iterations: 2000, batch_size: 64, epsilon: 0.01, seed: 0 }
    }

    pub(crate) fn validate(&self) -> Result<(), AttackError> {
        if self.batch_size == 0 {
            return Err(AttackError::BadParams("batch size must be at least 1".into()));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(AttackError::BadParams(format!(
                "step size must be finite and positive, got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

/// Which attack produced a perturbation, with its placement parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "attack", rename_all = "snake_case")]
pub enum AttackSpec {
    AdvPad { location: PadLocation, overhead_pct: u32 },
    AdvPay { payload_size: usize, dummy_index: DummyIndexPolicy },
    AdvBurst { dummy_count: usize, burst: BurstPolicy, max_dummy_size: usize },
}

impl AttackSpec {
    pub fn name(&self) -> &'static str {
        match self {
            AttackSpec::AdvPad { .. } => "adv_pad",
            AttackSpec::AdvPay { .. } => "adv_pay",
            AttackSpec::AdvBurst { .. } => "adv_burst",
        }
    }

    /// The family's swept size knob: pad overhead %, dummy payload bytes,
    /// or dummy packet count.
    pub fn strength(&self) -> u32 {
        match *self {
            AttackSpec::AdvPad { overhead_pct, .. } => overhead_pct,
            AttackSpec::AdvPay { payload_size, .. } => payload_size as u32,
            AttackSpec::AdvBurst { dummy_count, .. } => dummy_count as u32,
        }
    }
}

/// A universal perturbation: one vector that, spliced into any input of
/// `target_class` by its attack's placement rule, degrades that class's
/// recall. Values are stored pre-sign, inside `domain`.
#[derive(Clone, Debug, PartialEq)]
pub struct Uap {
    pub values: Vec<f32>,
    pub target_class: u16,
    pub encoding: EncodingKind,
    pub attack: AttackSpec,
    pub domain: ClipDomain,
    pub gen_params: GenParams,
    /// Identity of the model the search ran against.
    pub source_model_id: u64,
}

// --- perturbation file format ------------------------------------------------
// magic "ANTU", format version u16 LE, JSON metadata block (u32 LE length
// prefix), values as LE f32, CRC-32 of all preceding bytes.

const UAP_MAGIC: &[u8; 4] = b"ANTU";
const UAP_FORMAT_VERSION: u16 = 1;

#[derive(Serialize, Deserialize)]
struct UapHeader {
    target_class: u16,
    encoding: EncodingKind,
    attack: AttackSpec,
    domain: ClipDomain,
    gen_params: GenParams,
    source_model_id: String,
    value_count: u32,
}

fn bad_file(path: &Path, reason: impl Into<String>) -> AttackError {
    AttackError::BadUapFile { path: path.display().to_string(), reason: reason.into() }
}

pub fn save_uap(path: impl AsRef<Path>, uap: &Uap) -> Result<(), AttackError> {
    let header = UapHeader {
        target_class: uap.target_class,
        encoding: uap.encoding,
        attack: uap.attack,
        domain: uap.domain,
        gen_params: uap.gen_params,
        source_model_id: format!("{:016x}", uap.source_model_id),
        value_count: u32::try_from(uap.values.len())
            .map_err(|_| AttackError::BadParams("perturbation too long to store".into()))?,
    };
    let json = serde_json::to_vec(&header)?;
    let mut bytes = Vec::with_capacity(4 + 2 + 4 + json.len() + 4 * uap.values.len() + 4);
    bytes.extend_from_slice(UAP_MAGIC);
    bytes.extend_from_slice(&UAP_FORMAT_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(json.len() as u32).to_le_bytes());
    bytes.extend_from_slice(&json);
    for v in &uap.values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let crc = crc32fast::hash(&bytes);
    bytes.extend_from_slice(&crc.to_le_bytes());
    fs::write(path, bytes)?;
    Ok(())
}

pub fn load_uap(path: impl AsRef<Path>) -> Result<Uap, AttackError> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    if bytes.len() < 14 {
        return Err(bad_file(path, "file too short"));
    }
    let (body, crc_bytes) = bytes.split_at(bytes.len() - 4);
    let stored = u32::from_le_bytes(crc_bytes.try_into().unwrap());
    if crc32fast::hash(body) != stored {
        return Err(bad_file(path, "checksum mismatch (corrupted or truncated file)"));
    }
    if &body[0..4] != UAP_MAGIC {
        return Err(bad_file(path, "bad magic (not a perturbation file)"));
    }
    let version = u16::from_le_bytes(body[4..6].try_into().unwrap());
    if version != UAP_FORMAT_VERSION {
        return Err(bad_file(path, format!("unsupported format version {version}")));
    }
    let json_len = u32::from_le_bytes(body[6..10].try_into().unwrap()) as usize;
    let values_at = 10 + json_len;
    if body.len() < values_at {
        return Err(bad_file(path, "metadata block runs past end of file"));
    }
    let header: UapHeader = serde_json::from_slice(&body[10..values_at])
        .map_err(|e| bad_file(path, format!("metadata: {e}")))?;
    let count = header.value_count as usize;
    if body.len() != values_at + 4 * count {
        return Err(bad_file(
            path,
            format!("expected {count} values, file holds {} bytes of them", body.len() - values_at),
        ));
    }
    let values = body[values_at..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let source_model_id = u64::from_str_radix(&header.source_model_id, 16)
        .map_err(|_| bad_file(path, "source model id is not a hex integer"))?;
    Ok(Uap {
        values,
        target_class: header.target_class,
        encoding: header.encoding,
        attack: header.attack,
        domain: header.domain,
        gen_params: header.gen_params,
        source_model_id,
    })
}

// --- placement templates and the shared ascent loop --------------------------

/// One candidate input with the perturbation's slots left open: `base` is
/// the encoded vector with original content in place, and each entry
/// (ξ index, vector position, coefficient) assigns `coef · ξ[index]` into
/// `position`. Splice structure is fixed once, so every ascent iteration is
/// a fill plus one forward/backward pass.
#[derive(Clone, Debug)]
pub(crate) struct Template {
    pub base: Vec<f32>,
    pub entries: Vec<(u32, u32, f32)>,
}

impl Template {
    pub fn instantiate(&self, xi: &[f32]) -> Vec<f32> {
        let mut v = self.base.clone();
        self.fill(xi, &mut v);
        v
    }

    pub fn fill(&self, xi: &[f32], out: &mut [f32]) {
        for &(xi_idx, pos, coef) in &self.entries {
            out[pos as usize] = coef * xi[xi_idx as usize];
        }
    }
}

/// A built placement: the template plus every vector position holding new
/// (non-original) content — perturbation slots, dummy headers, dummy slot
/// padding. Positions outside `inserted` carry original content only.
#[derive(Clone, Debug)]
pub(crate) struct Placement {
    pub template: Template,
    pub inserted: Vec<usize>,
}

/// Nearest byte of a normalized value, for materializing perturbations as
/// real packet content.
pub(crate) fn quantize_byte(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Uniform initialization inside the domain, reproducible from the search
/// seed.
pub(crate) fn init_xi_uniform(len: usize, domain: &ClipDomain, seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(subseed(seed, "attack/init"));
    (0..len).map(|_| domain.sample(&mut rng)).collect()
}

/// Projected gradient ascent of the model's training loss over the shared
/// perturbation. Each iteration samples a batch of templates (without
/// replacement), labels every row with the target class, takes the mean
/// cross-entropy gradient with respect to the inputs, folds it back onto ξ
/// through the placement coefficients, steps by ε, and clips back into the
/// domain.
pub(crate) fn ascend(
    model: &Model,
    templates: &[Template],
    xi: &mut [f32],
    domain: &ClipDomain,
    target_class: u16,
    params: &GenParams,
) -> Result<(), AttackError> {
    let n = templates.len();
    debug_assert!(n > 0);
    let input_len = model.spec.input_length;
    for t in templates {
        if t.base.len() != input_len {
            return Err(AttackError::BadParams(format!(
                "encoded candidate has {} features but the model takes {input_len}",
                t.base.len()
            )));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(subseed(params.seed, "attack/batches"));
    for _ in 0..params.iterations {
        let batch: Vec<usize> = if params.batch_size >= n {
            (0..n).collect()
        } else {
            let mut idx = rand::seq::index::sample(&mut rng, n, params.batch_size).into_vec();
            idx.sort_unstable();
            idx
        };
        let mut x = Array2::<f32>::zeros((batch.len(), input_len));
        for (mut row, &ti) in x.rows_mut().into_iter().zip(&batch) {
            let row = row.as_slice_mut().expect("batch rows are contiguous");
            row.copy_from_slice(&templates[ti].base);
            templates[ti].fill(xi, row);
        }
        let y = vec![target_class; batch.len()];
        let (_, _, dx) = model.loss_and_grads(&x, &y)?;
        let mut grad = vec![0f64; xi.len()];
        for (ri, &ti) in batch.iter().enumerate() {
            for &(xi_idx, pos, coef) in &templates[ti].entries {
                grad[xi_idx as usize] += f64::from(coef) * f64::from(dx[[ri, pos as usize]]);
            }
        }
        for (v, g) in xi.iter_mut().zip(&grad) {
            *v = domain.clip_value(*v + params.epsilon * (*g as f32));
        }
    }
    Ok(())
}

/// Checks that a perturbed vector keeps the original content intact: drop
/// the inserted positions, strip trailing zero padding, and what remains
/// must be exactly a prefix of the clean encoding — original features in
/// their original order, merely shifted (and possibly truncated) by the
/// insertions.
pub fn preserves_original_content(clean: &[f32], perturbed: &[f32], inserted: &[usize]) -> bool {
    let inserted: HashSet<usize> = inserted.iter().copied().collect();
    let retained: Vec<f32> = perturbed
        .iter()
        .enumerate()
        .filter(|(i, _)| !inserted.contains(i))
        .map(|(_, v)| *v)
        .collect();
    let end = retained.iter().rposition(|v| *v != 0.0).map_or(0, |p| p + 1);
    if end > clean.len() {
        return false;
    }
    retained[..end]
        .iter()
        .zip(&clean[..end])
        .all(|(a, b)| a.to_bits() == b.to_bits())
}
