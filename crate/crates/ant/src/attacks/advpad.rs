//! Packet-padding attack: appends or prepends crafted bytes to each
//! packet's payload, sized as a fixed percentage of the packet, and learns
//! one shared pad that degrades a per-packet content classifier.

use crate::features::{encode_packet, EncodedSample, EncodingKind};
use crate::nn::Model;
use crate::traffic::Packet;

use super::{
    ascend, init_xi_uniform, quantize_byte, AttackError, AttackSpec, ClipDomain, GenParams,
    PadLocation, Placement, Template, Uap,
};

/// Pad budget of one packet: ⌊size · overhead% / 100⌋ bytes.
fn pad_size(packet: &Packet, overhead_pct: u32) -> usize {
    packet.size() * overhead_pct as usize / 100
}

fn require_pc(attack: &'static str, kind: &EncodingKind) -> Result<usize, AttackError> {
    match kind {
        EncodingKind::PcHp { max_pkt_size } | EncodingKind::PcP { max_pkt_size } => {
            Ok(*max_pkt_size)
        }
        other => Err(AttackError::EncodingMismatch {
            attack,
            expected: "per-packet content (PC)",
            got: other.name().to_string(),
        }),
    }
}

/// Splices a zero pad of this packet's budget into the payload and encodes
/// the result; the pad positions become the perturbation's slots. Encoding
/// the padded packet through the ordinary encoder keeps truncation and
/// header handling identical to clean encodings.
pub(crate) fn advpad_placement(
    packet: &Packet,
    kind: &EncodingKind,
    location: PadLocation,
    overhead_pct: u32,
) -> Result<Placement, AttackError> {
    let mps = require_pc("adv_pad", kind)?;
    if !packet.has_payload() {
        return Err(AttackError::NotUsable("packet has no payload".into()));
    }
    let pad = pad_size(packet, overhead_pct);
    let at = match location {
        PadLocation::Start => 0,
        PadLocation::End => packet.payload.len(),
    };
    let mut padded = packet.clone();
    padded.payload.splice(at..at, std::iter::repeat(0u8).take(pad));
    let base = encode_packet(&padded, kind, 0, 0)?.values;

    let hlen = if kind.includes_headers() { packet.tl_header.len() } else { 0 };
    let first = hlen + at;
    let mut entries = Vec::new();
    let mut inserted = Vec::new();
    for j in 0..pad {
        let pos = first + j;
        if pos >= mps {
            break;
        }
        entries.push((j as u32, pos as u32, 1.0f32));
        inserted.push(pos);
    }
    Ok(Placement { template: Template { base, entries }, inserted })
}

/// Searches for one pad-byte vector (length max_pkt_size, values in [0, 1])
/// whose per-packet prefix of ⌊size · overhead% / 100⌋ bytes, spliced at
/// `location`, maximizes the model's loss on the target class.
pub fn gen_advpad(
    model: &Model,
    candidates: &[Packet],
    target_class: u16,
    location: PadLocation,
    overhead_pct: u32,
    params: &GenParams,
) -> Result<Uap, AttackError> {
    params.validate()?;
    let kind = model.encoding;
    let mps = require_pc("adv_pad", &kind)?;
    if candidates.is_empty() {
        return Err(AttackError::EmptyInputs);
    }

    let mut templates = Vec::new();
    let mut skipped = 0usize;
    for packet in candidates {
        match advpad_placement(packet, &kind, location, overhead_pct) {
            Ok(p) => templates.push(p.template),
            Err(AttackError::NotUsable(_)) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    if templates.is_empty() {
        return Err(AttackError::NoUsableInputs {
            total: candidates.len(),
            reason: format!("all {skipped} candidate packets lack a payload"),
        });
    }
    if templates.iter().all(|t| t.entries.is_empty()) {
        return Err(AttackError::PadAlwaysZero);
    }

    let domain = ClipDomain::bytes();
    let mut xi = init_xi_uniform(mps, &domain, params.seed);
    ascend(model, &templates, &mut xi, &domain, target_class, params)?;
    Ok(Uap {
        values: xi,
        target_class,
        encoding: kind,
        attack: AttackSpec::AdvPad { location, overhead_pct },
        domain,
        gen_params: *params,
        source_model_id: model.id(),
    })
}

fn require_advpad(uap: &Uap) -> Result<(PadLocation, u32), AttackError> {
    match uap.attack {
        AttackSpec::AdvPad { location, overhead_pct } => Ok((location, overhead_pct)),
        ref other => Err(AttackError::WrongAttack { expected: "adv_pad", got: other.name() }),
    }
}

/// Encodes the packet with the perturbation's pad spliced in, plus the list
/// of vector positions the pad occupies.
pub fn apply_advpad_with_layout(
    packet: &Packet,
    uap: &Uap,
    label: u16,
    source_id: u64,
) -> Result<(EncodedSample, Vec<usize>), AttackError> {
    let (location, overhead_pct) = require_advpad(uap)?;
    let placement = advpad_placement(packet, &uap.encoding, location, overhead_pct)?;
    let values = placement.template.instantiate(&uap.values);
    Ok((EncodedSample { kind: uap.encoding, values, label, source_id }, placement.inserted))
}

/// Encodes the packet with the perturbation's pad spliced in.
pub fn apply_advpad(
    packet: &Packet,
    uap: &Uap,
    label: u16,
    source_id: u64,
) -> Result<EncodedSample, AttackError> {
    Ok(apply_advpad_with_layout(packet, uap, label, source_id)?.0)
}

/// The on-wire counterpart of [`apply_advpad`]: the pad values rounded to
/// bytes and spliced into the payload itself. Re-encoding the returned
/// packet agrees with [`apply_advpad`] up to that half-byte rounding.
pub fn materialize_advpad(packet: &Packet, uap: &Uap) -> Result<Packet, AttackError> {
    let (location, overhead_pct) = require_advpad(uap)?;
    if !packet.has_payload() {
        return Err(AttackError::NotUsable("packet has no payload".into()));
    }
    let pad = pad_size(packet, overhead_pct).min(uap.values.len());
    let bytes: Vec<u8> = uap.values[..pad].iter().map(|&v| quantize_byte(v)).collect();
    let mut out = packet.clone();
    let at = match location {
        PadLocation::Start => 0,
        PadLocation::End => out.payload.len(),
    };
    out.payload.splice(at..at, bytes);
    Ok(out)
}
