//! On-disk dataset bundle: a directory holding `meta.json` plus one binary
//! record file per split. Each record is one labeled packet:
//!
//! label u16 LE | timestamp u64 LE µs | tuple 13 bytes
//! (src_ip 4, src_port u16 LE, dst_ip 4, dst_port u16 LE, protocol 1)
//! | tl_header len u16 LE + bytes | payload len u16 LE + bytes
//!
//! A flow's packets are written contiguously in time order, flows in
//! first-packet order, so split record files can be regrouped into the
//! original flows without a separate index (a new flow starts when the
//! label or canonical tuple changes, time runs backward, or the gap
//! exceeds the timeout).

use crate::traffic::{canonicalize, BidirectionalFlow, FiveTuple, Packet};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use super::IngestError;

pub const SPLIT_NAMES: [&str; 3] = ["train", "validation", "test"];
pub const BUNDLE_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct BundleMeta {
    pub format_version: u32,
    pub labels: Vec<String>,
    pub seed: u64,
    pub fractions: [f64; 3],
    pub timeout_us: u64,
    pub balance_target: usize,
    /// Per split name, flow count per label index.
    pub flow_counts: BTreeMap<String, Vec<usize>>,
    /// Per split name, packet count per label index.
    pub packet_counts: BTreeMap<String, Vec<usize>>,
}

#[derive(Clone, Debug)]
pub struct Bundle {
    pub dir: PathBuf,
    pub meta: BundleMeta,
}

fn write_record<W: Write>(w: &mut W, label: u16, p: &Packet) -> std::io::Result<()> {
    w.write_all(&label.to_le_bytes())?;
    w.write_all(&p.timestamp_us.to_le_bytes())?;
    w.write_all(&p.tuple.src_ip)?;
    w.write_all(&p.tuple.src_port.to_le_bytes())?;
    w.write_all(&p.tuple.dst_ip)?;
    w.write_all(&p.tuple.dst_port.to_le_bytes())?;
    w.write_all(&[p.tuple.protocol])?;
    w.write_all(&(p.tl_header.len() as u16).to_le_bytes())?;
    w.write_all(&p.tl_header)?;
    w.write_all(&(p.payload.len() as u16).to_le_bytes())?;
    w.write_all(&p.payload)?;
    Ok(())
}

struct RecordReader<R: Read> {
    inner: R,
}

impl<R: Read> RecordReader<R> {
    fn next_record(&mut self) -> Result<Option<(u16, Packet)>, IngestError> {
        let mut lab = [0u8; 2];
        match self.inner.read_exact(&mut lab) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
            Err(e) => return Err(e.into()),
        }
        let mut buf8 = [0u8; 8];
        self.inner.read_exact(&mut buf8)?;
        let timestamp_us = u64::from_le_bytes(buf8);
        let mut tup = [0u8; 13];
        self.inner.read_exact(&mut tup)?;
        let tuple = FiveTuple {
            src_ip: [tup[0], tup[1], tup[2], tup[3]],
            src_port: u16::from_le_bytes([tup[4], tup[5]]),
            dst_ip: [tup[6], tup[7], tup[8], tup[9]],
            dst_port: u16::from_le_bytes([tup[10], tup[11]]),
            protocol: tup[12],
        };
        let mut len2 = [0u8; 2];
        self.inner.read_exact(&mut len2)?;
        let mut tl_header = vec![0u8; usize::from(u16::from_le_bytes(len2))];
        self.inner.read_exact(&mut tl_header)?;
        self.inner.read_exact(&mut len2)?;
        let mut payload = vec![0u8; usize::from(u16::from_le_bytes(len2))];
        self.inner.read_exact(&mut payload)?;
        Ok(Some((
            u16::from_le_bytes(lab),
            Packet { timestamp_us, tuple, tl_header, payload, direction: 1 },
        )))
    }
}

/// Writes meta.json and one record file per split. Flows must carry labels.
pub fn write_bundle(
    dir: &Path,
    meta: &BundleMeta,
    splits: [&[BidirectionalFlow]; 3],
) -> Result<(), IngestError> {
    std::fs::create_dir_all(dir)?;
    let json = serde_json::to_string_pretty(meta)?;
    std::fs::write(dir.join("meta.json"), json.as_bytes())?;
    for (name, flows) in SPLIT_NAMES.iter().zip(splits) {
        let file = std::fs::File::create(dir.join(format!("{name}.records")))?;
        let mut w = BufWriter::new(file);
        for flow in flows {
            let label = flow.label.ok_or_else(|| {
                IngestError::Bundle(format!("flow {} has no label", flow.id))
            })?;
            for p in &flow.packets {
                write_record(&mut w, label, p)?;
            }
        }
        w.flush()?;
    }
    Ok(())
}

pub fn read_bundle(dir: &Path) -> Result<Bundle, IngestError> {
    let meta_path = dir.join("meta.json");
    let raw = std::fs::read_to_string(&meta_path)
        .map_err(|e| IngestError::Bundle(format!("{}: {e}", meta_path.display())))?;
    let meta: BundleMeta = serde_json::from_str(&raw)?;
    if meta.format_version != BUNDLE_FORMAT_VERSION {
        return Err(IngestError::Bundle(format!(
            "bundle format version {} (tool supports {})",
            meta.format_version, BUNDLE_FORMAT_VERSION
        )));
    }
    Ok(Bundle { dir: dir.to_path_buf(), meta })
}

impl Bundle {
    fn records_path(&self, split: &str) -> PathBuf {
        self.dir.join(format!("{split}.records"))
    }

    /// All labeled packets of one split, in file order.
    pub fn read_packets(&self, split: &str) -> Result<Vec<(u16, Packet)>, IngestError> {
        let path = self.records_path(split);
        let file = std::fs::File::open(&path)
            .map_err(|e| IngestError::Bundle(format!("{}: {e}", path.display())))?;
        let mut reader = RecordReader { inner: BufReader::new(file) };
        let mut out = Vec::new();
        while let Some(rec) = reader.next_record()? {
            out.push(rec);
        }
        Ok(out)
    }

    /// Regroups one split's records into flows. Packets of a flow are
    /// contiguous on disk; boundaries are label/tuple changes, backward
    /// time, or a gap beyond the bundle timeout.
    pub fn read_flows(&self, split: &str) -> Result<Vec<BidirectionalFlow>, IngestError> {
        let records = self.read_packets(split)?;
        let timeout = self.meta.timeout_us;
        let mut flows: Vec<BidirectionalFlow> = Vec::new();
        for (label, mut packet) in records {
            let boundary = match flows.last() {
                None => true,
                Some(f) => {
                    let last = f.packets.last().unwrap();
                    f.label != Some(label)
                        || canonicalize(&last.tuple) != canonicalize(&packet.tuple)
                        || packet.timestamp_us < last.timestamp_us
                        || packet.timestamp_us - last.timestamp_us > timeout
                }
            };
            if boundary {
                packet.direction = 1;
                flows.push(BidirectionalFlow {
                    id: flows.len() as u64,
                    orientation: packet.tuple,
                    packets: vec![packet],
                    label: Some(label),
                });
            } else {
                let flow = flows.last_mut().unwrap();
                packet.direction = if packet.tuple == flow.orientation { 1 } else { -1 };
                flow.packets.push(packet);
            }
        }
        Ok(flows)
    }
}
