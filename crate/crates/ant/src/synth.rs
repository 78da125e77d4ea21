//! Synthetic labeled traffic for benchmarks, demos, and tests.
//!
//! Four application-like classes — `bulk`, `chat`, `stream`, `web` — with
//! separable signals on every feature family the encoders look at:
//!
//! * payload bytes biased toward a per-class 64-value range, the rest
//!   uniform noise (so payloads look high-entropy, yet carry a
//!   statistical signature a crafted pad can mimic),
//! * distinct packet-size profiles per direction,
//! * distinct inter-arrival scales (≈2 / 145 / 10 / 40 ms),
//! * distinct turn-taking patterns, every flow starting client→server and
//!   always containing backward runs,
//! * one well-known server port per class (8001–8004), so header-aware
//!   models can also key on ports.
//!
//! The signals overlap on purpose: a small, seeded fraction of flows
//! borrows another class's byte range, packet sizes, timing, or turn
//! pattern (see the `*_SWAP` constants), and a few individual packets do
//! the same. Real application mixes are never cleanly separable, and the
//! crossover keeps trained classifiers in the realistic 90–97% band
//! instead of saturating at 100% — models that never see a hard example
//! produce near-zero loss gradients, which starves gradient-driven
//! robustness probes. Ports never cross over, so header-aware models can
//! still reach ~100% and port-swap baselines stay meaningful.
//!
//! Each flow gets its own client address and port. Output is a classic
//! pcap per class (raw-IPv4 link type, TCP with plain 20-byte headers) and
//! a `path,label` manifest, ready for the ingest pipeline.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::seed::subseed;
use crate::traffic::{FiveTuple, Packet};

/// Class labels in index order (alphabetical, matching ingest's ordering).
pub const CLASS_NAMES: [&str; 4] = ["bulk", "chat", "stream", "web"];

struct Profile {
    name: &'static str,
    server_port: u16,
    /// Payload bytes live in [byte_lo, byte_lo + 63].
    byte_lo: u8,
    fwd_payload: (usize, usize),
    back_payload: (usize, usize),
    iat_us: (u64, u64),
    fwd_run: (usize, usize),
    back_run: (usize, usize),
    packets: (usize, usize),
}

const PROFILES: [Profile; 4] = [
    Profile {
        name: "bulk",
        server_port: 8001,
        byte_lo: 0,
        fwd_payload: (600, 1400),
        back_payload: (20, 60),
        iat_us: (800, 3_000),
        fwd_run: (3, 6),
        back_run: (1, 1),
        packets: (14, 28),
    },
    Profile {
        name: "chat",
        server_port: 8002,
        byte_lo: 64,
        fwd_payload: (30, 180),
        back_payload: (30, 180),
        iat_us: (100_000, 190_000),
        fwd_run: (1, 1),
        back_run: (1, 1),
        packets: (12, 20),
    },
    Profile {
        name: "stream",
        server_port: 8003,
        byte_lo: 128,
        fwd_payload: (50, 120),
        back_payload: (700, 1400),
        iat_us: (6_000, 14_000),
        fwd_run: (1, 1),
        back_run: (4, 8),
        packets: (14, 28),
    },
    Profile {
        name: "web",
        server_port: 8004,
        byte_lo: 192,
        fwd_payload: (80, 300),
        back_payload: (200, 900),
        iat_us: (26_000, 55_000),
        fwd_run: (1, 1),
        back_run: (2, 4),
        packets: (12, 24),
    },
];

/// Per-flow chance that payload bytes mimic a random other class.
const BYTE_SWAP_FLOW: f64 = 0.04;
/// Per-packet chance of borrowing yet another class's byte range.
const BYTE_SWAP_PACKET: f64 = 0.01;
/// Per-flow chance that packet sizes come from another class.
const SIZE_SWAP: f64 = 0.06;
/// Per-flow chance that inter-arrival gaps come from another class.
const TIMING_SWAP: f64 = 0.06;
/// Per-flow chance that turn-taking run lengths come from another class.
const RUN_SWAP: f64 = 0.07;

/// Corpus epoch: keeps pcap second counters well inside u32.
const BASE_TIME_US: u64 = 1_700_000_000_000_000;
/// New flows start every 50 ms, so neighbors overlap in time.
const FLOW_SPACING_US: u64 = 50_000;

/// With probability `prob`, a uniformly random class other than `own`;
/// otherwise `own`.
fn confusable(rng: &mut ChaCha8Rng, own: usize, prob: f64) -> usize {
    if rng.gen::<f64>() < prob {
        let mut other = rng.gen_range(0..PROFILES.len() - 1);
        if other >= own {
            other += 1;
        }
        other
    } else {
        own
    }
}

fn tcp_header(src_port: u16, dst_port: u16, seq: u32, ack: u32) -> Vec<u8> {
    let mut h = Vec::with_capacity(20);
    h.extend(src_port.to_be_bytes());
    h.extend(dst_port.to_be_bytes());
    h.extend(seq.to_be_bytes());
    h.extend(ack.to_be_bytes());
    h.push(0x50); // data offset 5 words: no options
    h.push(0x18); // PSH|ACK
    h.extend(0x7210u16.to_be_bytes()); // window
    h.extend(0u16.to_be_bytes()); // checksum left zero (offload-style)
    h.extend(0u16.to_be_bytes()); // urgent pointer
    h
}

/// Share of payload bytes drawn from the class's 64-value range; the rest
/// are uniform noise, like compressed or encrypted content. High-entropy
/// payloads keep a *random*-byte pad looking like plausible content, so
/// only the class-range statistics carry the label.
const BAND_SHARE: f64 = 0.55;

fn class_payload(rng: &mut ChaCha8Rng, lo: u8, len: usize) -> Vec<u8> {
    (0..len)
        .map(|_| {
            if rng.gen::<f64>() < BAND_SHARE {
                rng.gen_range(lo..=lo + 63)
            } else {
                rng.gen()
            }
        })
        .collect()
}

fn gen_flow(class: usize, flow_idx: usize, start_us: u64, seed: u64) -> Vec<Packet> {
    let prof = &PROFILES[class];
    let mut rng =
        ChaCha8Rng::seed_from_u64(subseed(seed, &format!("synth/class{class}/flow{flow_idx}")));

    // Cross-class aspects for this flow, drawn in a fixed order. Most flows
    // keep their own class on every axis; the rest mimic one other class on
    // one or more axes, which is what keeps the corpus from being trivially
    // separable.
    let flow_bytes = confusable(&mut rng, class, BYTE_SWAP_FLOW);
    let sizes_of = &PROFILES[confusable(&mut rng, class, SIZE_SWAP)];
    let timing_of = &PROFILES[confusable(&mut rng, class, TIMING_SWAP)];
    let runs_of = &PROFILES[confusable(&mut rng, class, RUN_SWAP)];

    let client_ip =
        [10, class as u8 + 1, (flow_idx / 200) as u8, (flow_idx % 200) as u8 + 2];
    let client_port = 20_000 + (flow_idx % 40_000) as u16;
    let server_ip = [192, 168, 0, class as u8 + 1];
    let forward_tuple = FiveTuple {
        src_ip: client_ip,
        src_port: client_port,
        dst_ip: server_ip,
        dst_port: prof.server_port,
        protocol: 6,
    };

    let total = rng.gen_range(prof.packets.0..=prof.packets.1);
    let mut packets = Vec::with_capacity(total);
    let mut t = start_us;
    let mut forward = true;
    let mut seq_fwd: u32 = rng.gen();
    let mut seq_back: u32 = rng.gen();
    while packets.len() < total {
        let (run_lo, run_hi) = if forward { runs_of.fwd_run } else { runs_of.back_run };
        let run = rng.gen_range(run_lo..=run_hi).min(total - packets.len());
        for _ in 0..run {
            let (lo, hi) = if forward { sizes_of.fwd_payload } else { sizes_of.back_payload };
            let payload_len = rng.gen_range(lo..=hi);
            let pkt_bytes = confusable(&mut rng, flow_bytes, BYTE_SWAP_PACKET);
            let payload = class_payload(&mut rng, PROFILES[pkt_bytes].byte_lo, payload_len);
            let (tuple, tl_header) = if forward {
                let h = tcp_header(client_port, prof.server_port, seq_fwd, seq_back);
                seq_fwd = seq_fwd.wrapping_add(payload.len() as u32);
                (forward_tuple, h)
            } else {
                let h = tcp_header(prof.server_port, client_port, seq_back, seq_fwd);
                seq_back = seq_back.wrapping_add(payload.len() as u32);
                (forward_tuple.reversed(), h)
            };
            packets.push(Packet { timestamp_us: t, tuple, tl_header, payload, direction: 1 });
            t += rng.gen_range(timing_of.iat_us.0..=timing_of.iat_us.1);
        }
        forward = !forward;
    }
    packets
}

/// All packets of one class, `flows` conversations interleaved in time.
/// Every flow is seeded independently, so corpora of different sizes share
/// their common prefix of flows.
pub fn generate_class_packets(class: usize, flows: usize, seed: u64) -> Vec<Packet> {
    assert!(class < PROFILES.len(), "classes are 0..{}", PROFILES.len());
    let mut all = Vec::new();
    for i in 0..flows {
        let start = BASE_TIME_US + i as u64 * FLOW_SPACING_US;
        all.extend(gen_flow(class, i, start, seed));
    }
    all.sort_by_key(|p| p.timestamp_us);
    all
}

/// Writes packets as a classic little-endian microsecond pcap with the
/// raw-IPv4 link type: each record is an IPv4 header without options, then
/// the packet's transport header and payload, verbatim. Records are sorted
/// by timestamp so the capture is directly ingestible.
pub fn write_pcap(path: &Path, packets: &[Packet]) -> std::io::Result<()> {
    let mut out = Vec::with_capacity(24 + packets.len() * 64);
    out.extend(0xa1b2_c3d4u32.to_le_bytes());
    out.extend(2u16.to_le_bytes()); // major
    out.extend(4u16.to_le_bytes()); // minor
    out.extend(0u32.to_le_bytes()); // tz offset
    out.extend(0u32.to_le_bytes()); // sigfigs
    out.extend(65_535u32.to_le_bytes()); // snaplen
    out.extend(101u32.to_le_bytes()); // raw IPv4 link type

    let mut sorted: Vec<&Packet> = packets.iter().collect();
    sorted.sort_by_key(|p| p.timestamp_us);
    for p in sorted {
        let ip_len = 20 + p.tl_header.len() + p.payload.len();
        out.extend(((p.timestamp_us / 1_000_000) as u32).to_le_bytes());
        out.extend(((p.timestamp_us % 1_000_000) as u32).to_le_bytes());
        out.extend((ip_len as u32).to_le_bytes());
        out.extend((ip_len as u32).to_le_bytes());

        out.push(0x45); // version 4, IHL 5: no options
        out.push(0);
        out.extend((ip_len as u16).to_be_bytes());
        out.extend(0u16.to_be_bytes()); // identification
        out.extend(0x4000u16.to_be_bytes()); // don't-fragment, offset 0
        out.push(64); // TTL
        out.push(p.tuple.protocol);
        out.extend(0u16.to_be_bytes()); // header checksum (not validated)
        out.extend(p.tuple.src_ip);
        out.extend(p.tuple.dst_ip);
        out.extend(&p.tl_header);
        out.extend(&p.payload);
    }
    fs::write(path, out)
}

/// Generates the whole corpus under `dir`: one pcap per class plus
/// `manifest.csv`. Returns the manifest path.
pub fn write_corpus(dir: &Path, flows_per_class: usize, seed: u64) -> std::io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let mut manifest = String::from("path,label\n");
    for (class, prof) in PROFILES.iter().enumerate() {
        let packets = generate_class_packets(class, flows_per_class, seed);
        let file = format!("{}.pcap", prof.name);
        write_pcap(&dir.join(&file), &packets)?;
        manifest.push_str(&format!("{file},{}\n", prof.name));
    }
    let manifest_path = dir.join("manifest.csv");
    fs::write(&manifest_path, manifest)?;
    Ok(manifest_path)
}
