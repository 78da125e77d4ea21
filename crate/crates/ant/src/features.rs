//! The six classifier input encodings and their normalizations.
//!
//! Three sample universes: PC encodes one packet's bytes, FCC the bytes of
//! a flow's first n payload-bearing packets, FTSC a flow's statistical time
//! series (packet sizes or inter-arrival times). The -HP variants include
//! the transport-layer header, -P is payload only. FCC/FTSC values carry the
//! packet direction sign. Byte values are divided by 255; sizes are
//! standardized against training statistics; IATs get a log map with the
//! training maximum as base.

use crate::traffic::{BidirectionalFlow, Packet};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use thiserror::Error;

pub const DEFAULT_MAX_PKT_SIZE: usize = 1500;
pub const DEFAULT_FCC_N: usize = 10;
pub const DEFAULT_FTSC_M: usize = 100;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("packet has an empty payload")]
    EmptyPayload,
    #[error("flow has no payload-bearing packets")]
    NoPayloadPackets,
    #[error("flow has {got} packets, {needed} required")]
    TooFewPackets { needed: usize, got: usize },
    #[error("{op} expects a {expected} encoding, got {got}")]
    WrongKind { op: &'static str, expected: &'static str, got: String },
    #[error("invalid encoding parameters: {0}")]
    BadParams(String),
    #[error("need at least 2 packet sizes to fit statistics, got {0}")]
    TooFewSizes(usize),
    #[error("packet sizes have zero variance")]
    ZeroVariance,
    #[error("malformed sample record: {0}")]
    BadSampleRecord(String),
    #[error("sample io: {0}")]
    Io(#[from] std::io::Error),
}

/// Which of the six input spaces a vector lives in, with its window
/// parameters. `n` = packets per content window, `m` = packets per time
/// series, `max_pkt_size` = per-packet byte budget.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EncodingKind {
    PcHp { max_pkt_size: usize },
    PcP { max_pkt_size: usize },
    FccHp { n: usize, max_pkt_size: usize },
    FccP { n: usize, max_pkt_size: usize },
    FtscPs { m: usize },
    FtscIat { m: usize },
}

impl EncodingKind {
    pub fn pc_hp() -> Self {
        EncodingKind::PcHp { max_pkt_size: DEFAULT_MAX_PKT_SIZE }
    }
    pub fn pc_p() -> Self {
        EncodingKind::PcP { max_pkt_size: DEFAULT_MAX_PKT_SIZE }
    }
    pub fn fcc_hp() -> Self {
        EncodingKind::FccHp { n: DEFAULT_FCC_N, max_pkt_size: DEFAULT_MAX_PKT_SIZE }
    }
    pub fn fcc_p() -> Self {
        EncodingKind::FccP { n: DEFAULT_FCC_N, max_pkt_size: DEFAULT_MAX_PKT_SIZE }
    }
    pub fn ftsc_ps() -> Self {
        EncodingKind::FtscPs { m: DEFAULT_FTSC_M }
    }
    pub fn ftsc_iat() -> Self {
        EncodingKind::FtscIat { m: DEFAULT_FTSC_M }
    }

    pub fn validate(&self) -> Result<(), FeatureError> {
        let ok = match *self {
            EncodingKind::PcHp { max_pkt_size } | EncodingKind::PcP { max_pkt_size } => {
                max_pkt_size >= 60
            }
            EncodingKind::FccHp { n, max_pkt_size } | EncodingKind::FccP { n, max_pkt_size } => {
                n >= 1 && max_pkt_size >= 60
            }
            EncodingKind::FtscPs { m } | EncodingKind::FtscIat { m } => m >= 2,
        };
        if ok {
            Ok(())
        } else {
            Err(FeatureError::BadParams(format!("{self:?} (need n ≥ 1, m ≥ 2, max_pkt_size ≥ 60)")))
        }
    }

    /// Vector length of samples in this encoding.
    pub fn len(&self) -> usize {
        match *self {
            EncodingKind::PcHp { max_pkt_size } | EncodingKind::PcP { max_pkt_size } => max_pkt_size,
            EncodingKind::FccHp { n, max_pkt_size } | EncodingKind::FccP { n, max_pkt_size } => {
                n * max_pkt_size
            }
            EncodingKind::FtscPs { m } => m,
            EncodingKind::FtscIat { m } => m - 1,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn max_pkt_size(&self) -> Option<usize> {
        match *self {
            EncodingKind::PcHp { max_pkt_size }
            | EncodingKind::PcP { max_pkt_size }
            | EncodingKind::FccHp { max_pkt_size, .. }
            | EncodingKind::FccP { max_pkt_size, .. } => Some(max_pkt_size),
            _ => None,
        }
    }

    /// True for the -HP variants, whose vectors contain header bytes.
    pub fn includes_headers(&self) -> bool {
        matches!(self, EncodingKind::PcHp { .. } | EncodingKind::FccHp { .. })
    }

    /// True for time-series kinds that need fitted NormStats.
    pub fn needs_stats(&self) -> bool {
        matches!(self, EncodingKind::FtscPs { .. } | EncodingKind::FtscIat { .. })
    }

    /// Per-packet samples (true) vs per-flow samples (false).
    pub fn is_packet_level(&self) -> bool {
        matches!(self, EncodingKind::PcHp { .. } | EncodingKind::PcP { .. })
    }

    pub fn code(&self) -> u8 {
        match self {
            EncodingKind::PcHp { .. } => 0,
            EncodingKind::PcP { .. } => 1,
            EncodingKind::FccHp { .. } => 2,
            EncodingKind::FccP { .. } => 3,
            EncodingKind::FtscPs { .. } => 4,
            EncodingKind::FtscIat { .. } => 5,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            EncodingKind::PcHp { .. } => "pc_hp",
            EncodingKind::PcP { .. } => "pc_p",
            EncodingKind::FccHp { .. } => "fcc_hp",
            EncodingKind::FccP { .. } => "fcc_p",
            EncodingKind::FtscPs { .. } => "ftsc_ps",
            EncodingKind::FtscIat { .. } => "ftsc_iat",
        }
    }
}

/// One classifier input vector plus its class and the id of the packet or
/// flow it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedSample {
    pub kind: EncodingKind,
    pub values: Vec<f32>,
    pub label: u16,
    pub source_id: u64,
}

/// Normalization statistics fitted on the training split only.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub ps_mean: f64,
    pub ps_std: f64,
    pub iat_max_us: u64,
}

/// Fits packet-size mean/std (population form) and the maximum IAT over
/// all packets of the given flows. The log base needs to exceed 1, so
/// `iat_max_us` is floored at 2 µs when the data never gets that far.
pub fn fit_norm_stats(flows: &[BidirectionalFlow]) -> Result<NormStats, FeatureError> {
    let mut sizes: Vec<f64> = Vec::new();
    let mut iat_max: u64 = 0;
    for f in flows {
        for p in &f.packets {
            sizes.push(p.size() as f64);
        }
        for iat in f.iats_us() {
            iat_max = iat_max.max(iat);
        }
    }
    if sizes.len() < 2 {
        return Err(FeatureError::TooFewSizes(sizes.len()));
    }
    let mean = sizes.iter().sum::<f64>() / sizes.len() as f64;
    let var = sizes.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / sizes.len() as f64;
    if var == 0.0 {
        return Err(FeatureError::ZeroVariance);
    }
    Ok(NormStats { ps_mean: mean, ps_std: var.sqrt(), iat_max_us: iat_max.max(2) })
}

impl NormStats {
    /// Standardized packet size, before the direction sign.
    pub fn encode_ps(&self, size_bytes: f64) -> f64 {
        (size_bytes - self.ps_mean) / self.ps_std
    }

    /// Inverse of `encode_ps` (direction sign not involved). Fractional
    /// byte counts are kept; round only when materializing packets.
    pub fn decode_ps(&self, value: f64) -> f64 {
        self.ps_mean + value * self.ps_std
    }

    /// 2·log_base(iat + 1 µs) with base = iat_max_us, before the sign.
    pub fn encode_iat(&self, iat_us: f64) -> f64 {
        2.0 * (iat_us + 1.0).ln() / (self.iat_max_us as f64).ln()
    }

    /// Inverse of `encode_iat`, ignoring the direction sign: result rounded
    /// to the nearest µs and floored at 0.
    pub fn decode_iat(&self, value: f64) -> u64 {
        let iat = ((value.abs() / 2.0) * (self.iat_max_us as f64).ln()).exp() - 1.0;
        iat.round().max(0.0) as u64
    }
}

fn pc_bytes<'a>(packet: &'a Packet, with_header: bool) -> impl Iterator<Item = u8> + 'a {
    let header = if with_header { &packet.tl_header[..] } else { &[][..] };
    header.iter().chain(packet.payload.iter()).copied()
}

/// Per-packet byte encoding: bytes / 255, zero-padded (and truncated) to
/// max_pkt_size. PC_HP prepends the transport-layer header bytes.
pub fn encode_packet(
    packet: &Packet,
    kind: &EncodingKind,
    label: u16,
    source_id: u64,
) -> Result<EncodedSample, FeatureError> {
    kind.validate()?;
    let with_header = match kind {
        EncodingKind::PcHp { .. } => true,
        EncodingKind::PcP { .. } => false,
        other => {
            return Err(FeatureError::WrongKind {
                op: "encode_packet",
                expected: "PC",
                got: other.name().into(),
            })
        }
    };
    if !packet.has_payload() {
        return Err(FeatureError::EmptyPayload);
    }
    let mps = kind.max_pkt_size().unwrap();
    let mut values = vec![0f32; mps];
    for (slot, b) in values.iter_mut().zip(pc_bytes(packet, with_header)) {
        *slot = f32::from(b) / 255.0;
    }
    Ok(EncodedSample { kind: *kind, values, label, source_id })
}

/// Flow-content encoding: the first n payload-bearing packets, each laid
/// out as in `encode_packet` inside its own max_pkt_size slot and
/// multiplied by the packet's direction sign. Missing slots stay zero.
pub fn encode_flow_content(
    flow: &BidirectionalFlow,
    kind: &EncodingKind,
) -> Result<EncodedSample, FeatureError> {
    kind.validate()?;
    let with_header = match kind {
        EncodingKind::FccHp { .. } => true,
        EncodingKind::FccP { .. } => false,
        other => {
            return Err(FeatureError::WrongKind {
                op: "encode_flow_content",
                expected: "FCC",
                got: other.name().into(),
            })
        }
    };
    let (n, mps) = match *kind {
        EncodingKind::FccHp { n, max_pkt_size } | EncodingKind::FccP { n, max_pkt_size } => {
            (n, max_pkt_size)
        }
        _ => unreachable!(),
    };
    let window: Vec<&Packet> = flow.packets.iter().filter(|p| p.has_payload()).take(n).collect();
    if window.is_empty() {
        return Err(FeatureError::NoPayloadPackets);
    }
    let mut values = vec![0f32; n * mps];
    for (slot_idx, pkt) in window.iter().enumerate() {
        let sign = f32::from(pkt.direction);
        let slot = &mut values[slot_idx * mps..(slot_idx + 1) * mps];
        for (v, b) in slot.iter_mut().zip(pc_bytes(pkt, with_header)) {
            *v = sign * f32::from(b) / 255.0;
        }
    }
    Ok(EncodedSample {
        kind: *kind,
        values,
        label: flow.label.unwrap_or(0),
        source_id: flow.id,
    })
}

/// Raw packet-size series of a flow: (size, direction sign) per packet.
pub fn ps_entries(flow: &BidirectionalFlow) -> Vec<(f64, i8)> {
    flow.packets.iter().map(|p| (p.size() as f64, p.direction)).collect()
}

/// Raw IAT series of a flow: (µs gap, sign of the later packet) per
/// consecutive packet pair.
pub fn iat_entries(flow: &BidirectionalFlow) -> Vec<(f64, i8)> {
    flow.packets
        .windows(2)
        .map(|w| ((w[1].timestamp_us - w[0].timestamp_us) as f64, w[1].direction))
        .collect()
}

/// Normalizes a signed feature series into a fixed-length vector:
/// (entry, sign) pairs through `norm`, zero-padded / truncated to `len`.
pub(crate) fn timeseries_vector(
    entries: &[(f64, i8)],
    len: usize,
    norm: impl Fn(f64) -> f64,
) -> Vec<f32> {
    let mut values = vec![0f32; len];
    for (slot, (raw, sign)) in values.iter_mut().zip(entries.iter()) {
        *slot = (norm(*raw) * f64::from(*sign)) as f32;
    }
    values
}

/// Statistical time-series encoding: the first m standardized packet sizes
/// (FTSC_PS) or the first m−1 log-normalized IATs (FTSC_IAT), each
/// multiplied by the direction sign (of the later packet, for IATs).
pub fn encode_flow_timeseries(
    flow: &BidirectionalFlow,
    kind: &EncodingKind,
    stats: &NormStats,
) -> Result<EncodedSample, FeatureError> {
    kind.validate()?;
    let values = match *kind {
        EncodingKind::FtscPs { m } => {
            if flow.packets.is_empty() {
                return Err(FeatureError::TooFewPackets { needed: 1, got: 0 });
            }
            timeseries_vector(&ps_entries(flow), m, |s| stats.encode_ps(s))
        }
        EncodingKind::FtscIat { m } => {
            if flow.packets.len() < 2 {
                return Err(FeatureError::TooFewPackets { needed: 2, got: flow.packets.len() });
            }
            timeseries_vector(&iat_entries(flow), m - 1, |i| stats.encode_iat(i))
        }
        ref other => {
            return Err(FeatureError::WrongKind {
                op: "encode_flow_timeseries",
                expected: "FTSC",
                got: other.name().into(),
            })
        }
    };
    Ok(EncodedSample {
        kind: *kind,
        values,
        label: flow.label.unwrap_or(0),
        source_id: flow.id,
    })
}

// --- binary sample records -------------------------------------------------
// Record: kind code u8, vector length u32 LE, label u16 LE, then LE f32s.

pub fn write_samples<W: Write>(w: &mut W, samples: &[EncodedSample]) -> Result<(), FeatureError> {
    for s in samples {
        w.write_all(&[s.kind.code()])?;
        w.write_all(&(s.values.len() as u32).to_le_bytes())?;
        w.write_all(&s.label.to_le_bytes())?;
        for v in &s.values {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

/// Reads records written by `write_samples`. The expected kind restores the
/// window parameters the record header does not carry; source ids are
/// assigned sequentially.
pub fn read_samples<R: Read>(
    r: &mut R,
    expected: &EncodingKind,
) -> Result<Vec<EncodedSample>, FeatureError> {
    let mut samples = Vec::new();
    loop {
        let mut code = [0u8; 1];
        match r.read_exact(&mut code) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        }
        if code[0] != expected.code() {
            return Err(FeatureError::BadSampleRecord(format!(
                "kind code {} does not match expected {} ({})",
                code[0],
                expected.code(),
                expected.name()
            )));
        }
        let mut len4 = [0u8; 4];
        r.read_exact(&mut len4)?;
        let len = u32::from_le_bytes(len4) as usize;
        if len != expected.len() {
            return Err(FeatureError::BadSampleRecord(format!(
                "vector length {} does not match {} for {}",
                len,
                expected.len(),
                expected.name()
            )));
        }
        let mut lab2 = [0u8; 2];
        r.read_exact(&mut lab2)?;
        let label = u16::from_le_bytes(lab2);
        let mut buf = vec![0u8; len * 4];
        r.read_exact(&mut buf)?;
        let values = buf.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]])).collect();
        samples.push(EncodedSample {
            kind: *expected,
            values,
            label,
            source_id: samples.len() as u64,
        });
    }
    Ok(samples)
}
