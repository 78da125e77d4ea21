//! Baselines the learned perturbations are judged against: random vectors
//! drawn in the same domain and placement, and a port rewrite that
//! randomizes the transport ports a header-aware model may have keyed on.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::features::EncodingKind;
use crate::seed::{subseed, Fnv1a};
use crate::traffic::{canonicalize, BidirectionalFlow, FiveTuple, Packet};

use super::{AttackError, GenParams, Uap};

/// Replacement ports are drawn from the ephemeral/registered range.
pub const PORT_RANGE: (u16, u16) = (1024, 65535);

/// Draws `runs` independent random perturbations shaped exactly like a
/// learned one — same length, domain, placement metadata — each from its
/// own derived seed. Applying them through the same placement rules gives
/// the random baseline the learned perturbation must beat.
pub fn rand_baseline(reference: &Uap, runs: usize, seed: u64) -> Result<Vec<Uap>, AttackError> {
    if runs == 0 {
        return Err(AttackError::BadParams("at least one random run is needed".into()));
    }
    let mut out = Vec::with_capacity(runs);
    for r in 0..runs {
        let run_seed = subseed(seed, &format!("rand/run{r}"));
        let mut rng = ChaCha8Rng::seed_from_u64(run_seed);
        let values: Vec<f32> =
            (0..reference.values.len()).map(|_| reference.domain.sample(&mut rng)).collect();
        out.push(Uap {
            values,
            gen_params: GenParams {
                iterations: 0,
                batch_size: reference.gen_params.batch_size,
                epsilon: reference.gen_params.epsilon,
                seed: run_seed,
            },
            ..reference.clone()
        });
    }
    Ok(out)
}

/// Port randomization only changes header bytes, so it can only affect
/// encodings that look at headers.
pub fn ensure_port_compatible(kind: &EncodingKind) -> Result<(), AttackError> {
    match kind {
        EncodingKind::PcHp { .. } | EncodingKind::FccHp { .. } => Ok(()),
        other => Err(AttackError::PortNeedsHeaders(other.name())),
    }
}

fn pair_for_canonical(canon: &FiveTuple, seed: u64) -> (u16, u16) {
    let mut h = Fnv1a::new();
    h.update(&seed.to_le_bytes());
    h.update(b"port-attack/");
    h.update(&canon.src_ip);
    h.update(&canon.src_port.to_le_bytes());
    h.update(&canon.dst_ip);
    h.update(&canon.dst_port.to_le_bytes());
    h.update(&[canon.protocol]);
    let mut rng = ChaCha8Rng::seed_from_u64(h.finish());
    let (lo, hi) = PORT_RANGE;
    (rng.gen_range(lo..=hi), rng.gen_range(lo..=hi))
}

/// The flow's replacement (source, destination) ports as seen from this
/// tuple's direction. Derived from the flow's direction-insensitive key,
/// so both directions of one flow always agree on the pair.
pub fn flow_port_pair(tuple: &FiveTuple, seed: u64) -> (u16, u16) {
    let canon = canonicalize(tuple);
    let (a, b) = pair_for_canonical(&canon, seed);
    if *tuple == canon {
        (a, b)
    } else {
        (b, a)
    }
}

/// Rewrites one packet's ports — in the 5-tuple and in the first four
/// header bytes (source, destination, both big-endian), as far as the
/// header reaches. Every other byte is untouched.
pub fn port_attack_packet(packet: &Packet, seed: u64) -> Packet {
    let (sp, dp) = flow_port_pair(&packet.tuple, seed);
    let mut out = packet.clone();
    out.tuple.src_port = sp;
    out.tuple.dst_port = dp;
    if out.tl_header.len() >= 2 {
        out.tl_header[0..2].copy_from_slice(&sp.to_be_bytes());
    }
    if out.tl_header.len() >= 4 {
        out.tl_header[2..4].copy_from_slice(&dp.to_be_bytes());
    }
    out
}

/// Rewrites a whole flow with one consistent replacement pair: packets in
/// the flow's orientation get (a, b), replies get (b, a).
pub fn port_attack_flow(flow: &BidirectionalFlow, seed: u64) -> BidirectionalFlow {
    let mut out = flow.clone();
    for p in &mut out.packets {
        *p = port_attack_packet(p, seed);
    }
    let (sp, dp) = flow_port_pair(&flow.orientation, seed);
    out.orientation.src_port = sp;
    out.orientation.dst_port = dp;
    out
}
