//! One flow, six classifier input spaces.
//!
//! Every model in this crate consumes one of six encodings:
//!
//! - `pc_hp` / `pc_p`   — one packet's bytes (with / without the transport
//!                        header), scaled to [0,1] and signed by direction;
//! - `fcc_hp` / `fcc_p` — the first n payload-bearing packets of a flow,
//!                        concatenated the same way;
//! - `ftsc_ps` / `ftsc_iat` — the flow's first m packet sizes or
//!                        inter-arrival gaps, z- and log-normalized with
//!                        statistics fitted on training flows only.
//!
//! Run with: `cargo run --release --example encodings`

use ant::features::{
    encode_flow_content, encode_flow_timeseries, encode_packet, fit_norm_stats, EncodingKind,
};
use ant::synth::generate_class_packets;
use ant::traffic::{assemble_flows, DEFAULT_TIMEOUT_US};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // A few dozen "web" conversations; statistics want more than one flow.
    let packets = generate_class_packets(3, 40, 0);
    let flows = assemble_flows(&packets, DEFAULT_TIMEOUT_US)?;
    let stats = fit_norm_stats(&flows)?;
    let flow = &flows[0];
    println!(
        "encoding flow {} ({} packets, first packet {} bytes)\n",
        flow.id,
        flow.packets.len(),
        flow.packets[0].size()
    );

    let kinds = [
        EncodingKind::PcHp { max_pkt_size: 64 },
        EncodingKind::PcP { max_pkt_size: 64 },
        EncodingKind::FccHp { n: 4, max_pkt_size: 64 },
        EncodingKind::FccP { n: 4, max_pkt_size: 64 },
        EncodingKind::FtscPs { m: 12 },
        EncodingKind::FtscIat { m: 12 },
    ];

    for kind in kinds {
        kind.validate()?;
        let sample = if kind.is_packet_level() {
            encode_packet(&flow.packets[0], &kind, 3, flow.id)?
        } else if kind.needs_stats() {
            encode_flow_timeseries(flow, &kind, &stats)?
        } else {
            encode_flow_content(flow, &kind)?
        };
        let head: Vec<String> =
            sample.values.iter().take(8).map(|v| format!("{v:+.3}")).collect();
        println!("{:<8} len {:>4}   [{} ...]", kind.name(), sample.values.len(), head.join(", "));
    }

    println!("\nByte encodings put header bytes first: pc_hp opens with the");
    println!("source port {} = bytes [78, 32], scaled to +0.306, +0.125 —",
        flow.packets[0].tuple.src_port);
    println!("payload bytes follow; the _p variants skip the header. Signs");
    println!("carry direction: backward packets encode negative. Time-series");
    println!("values are unit-free z-scores (sizes) and log-scores (gaps),");
    println!("again signed, padded with zeros past the flow's length.");
    Ok(())
}
