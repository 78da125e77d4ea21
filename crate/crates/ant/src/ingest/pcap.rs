//! Classic pcap reader: µs and ns timestamp magics in either byte order,
//! Ethernet (1) and Raw IPv4 (101) link types. Produces one Packet per
//! IPv4 TCP/UDP record; everything else is skipped with a counter.

use crate::traffic::{FiveTuple, Packet};
use std::path::Path;
use thiserror::Error;

const MAGIC_US: u32 = 0xa1b2_c3d4;
const MAGIC_NS: u32 = 0xa1b2_3c4d;
pub const LINKTYPE_ETHERNET: u32 = 1;
pub const LINKTYPE_RAW_IPV4: u32 = 101;

#[derive(Debug, Error)]
pub enum PcapError {
    #[error("not a pcap file (magic {magic:#010x})")]
    UnsupportedFormat { magic: u32 },
    #[error("unsupported link type {0} (expected Ethernet=1 or Raw IPv4=101)")]
    UnsupportedLinkType(u32),
    #[error("file too short for a pcap global header")]
    TooShort,
    #[error("truncated record at byte offset {offset} ({} packets parsed before it)", .packets.len())]
    Truncated { offset: usize, packets: Vec<Packet>, counters: ParseCounters },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Skip counts accumulated while parsing one capture.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ParseCounters {
    pub non_ip: u64,
    pub ipv6: u64,
    pub non_tcp_udp: u64,
    pub fragments: u64,
    pub malformed: u64,
}

impl ParseCounters {
    pub fn skipped(&self) -> u64 {
        self.non_ip + self.ipv6 + self.non_tcp_udp + self.fragments + self.malformed
    }
}

#[derive(Clone, Copy)]
struct ByteOrder {
    big: bool,
}

impl ByteOrder {
    fn u32(&self, b: &[u8]) -> u32 {
        let a = [b[0], b[1], b[2], b[3]];
        if self.big { u32::from_be_bytes(a) } else { u32::from_le_bytes(a) }
    }
}

enum Parsed {
    Keep(Packet),
    NonIp,
    Ipv6,
    NonTcpUdp,
    Fragment,
    Malformed,
}

fn parse_ipv4(data: &[u8], timestamp_us: u64) -> Parsed {
    if data.len() < 20 {
        return Parsed::Malformed;
    }
    let version = data[0] >> 4;
    if version == 6 {
        return Parsed::Ipv6;
    }
    if version != 4 {
        return Parsed::Malformed;
    }
    let ihl = usize::from(data[0] & 0x0f) * 4;
    if ihl < 20 || ihl > data.len() {
        return Parsed::Malformed;
    }
    let total_len = usize::from(u16::from_be_bytes([data[2], data[3]]));
    let end = total_len.clamp(ihl, data.len());
    let frag = u16::from_be_bytes([data[6], data[7]]);
    if frag & 0x1fff != 0 {
        return Parsed::Fragment; // non-first fragment: no transport header
    }
    let protocol = data[9];
    let src_ip = [data[12], data[13], data[14], data[15]];
    let dst_ip = [data[16], data[17], data[18], data[19]];
    let l4 = &data[ihl..end];
    let (header_len, payload_end) = match protocol {
        6 => {
            if l4.len() < 20 {
                return Parsed::Malformed;
            }
            let doff = usize::from(l4[12] >> 4) * 4;
            if doff < 20 || doff > l4.len() {
                return Parsed::Malformed;
            }
            (doff, l4.len())
        }
        17 => {
            if l4.len() < 8 {
                return Parsed::Malformed;
            }
            let udp_len = usize::from(u16::from_be_bytes([l4[4], l4[5]]));
            if udp_len < 8 {
                return Parsed::Malformed;
            }
            (8, udp_len.min(l4.len()))
        }
        _ => return Parsed::NonTcpUdp,
    };
    let src_port = u16::from_be_bytes([l4[0], l4[1]]);
    let dst_port = u16::from_be_bytes([l4[2], l4[3]]);
    Parsed::Keep(Packet {
        timestamp_us,
        tuple: FiveTuple { src_ip, src_port, dst_ip, dst_port, protocol },
        tl_header: l4[..header_len].to_vec(),
        payload: l4[header_len..payload_end].to_vec(),
        direction: 1,
    })
}

fn parse_record(data: &[u8], linktype: u32, timestamp_us: u64) -> Parsed {
    match linktype {
        LINKTYPE_ETHERNET => {
            if data.len() < 14 {
                return Parsed::Malformed;
            }
            match u16::from_be_bytes([data[12], data[13]]) {
                0x0800 => parse_ipv4(&data[14..], timestamp_us),
                0x86dd => Parsed::Ipv6,
                _ => Parsed::NonIp,
            }
        }
        LINKTYPE_RAW_IPV4 => parse_ipv4(data, timestamp_us),
        _ => unreachable!("link type validated before records"),
    }
}

/// Parses a whole classic-pcap byte buffer. On a truncated trailing record
/// the error keeps everything parsed up to that point.
pub fn parse_pcap_bytes(data: &[u8]) -> Result<(Vec<Packet>, ParseCounters), PcapError> {
    if data.len() < 24 {
        return Err(PcapError::TooShort);
    }
    let magic_le = u32::from_le_bytes([data[0], data[1], data[2], data[3]]);
    let magic_be = u32::from_be_bytes([data[0], data[1], data[2], data[3]]);
    let (order, nanos) = if magic_le == MAGIC_US {
        (ByteOrder { big: false }, false)
    } else if magic_be == MAGIC_US {
        (ByteOrder { big: true }, false)
    } else if magic_le == MAGIC_NS {
        (ByteOrder { big: false }, true)
    } else if magic_be == MAGIC_NS {
        (ByteOrder { big: true }, true)
    } else {
        return Err(PcapError::UnsupportedFormat { magic: magic_le });
    };
    let linktype = order.u32(&data[20..24]);
    if linktype != LINKTYPE_ETHERNET && linktype != LINKTYPE_RAW_IPV4 {
        return Err(PcapError::UnsupportedLinkType(linktype));
    }

    let mut packets = Vec::new();
    let mut counters = ParseCounters::default();
    let mut offset = 24usize;
    while offset < data.len() {
        if data.len() - offset < 16 {
            return Err(PcapError::Truncated { offset, packets, counters });
        }
        let ts_sec = u64::from(order.u32(&data[offset..]));
        let ts_frac = u64::from(order.u32(&data[offset + 4..]));
        let incl_len = order.u32(&data[offset + 8..]) as usize;
        let body = offset + 16;
        if data.len() - body < incl_len {
            return Err(PcapError::Truncated { offset, packets, counters });
        }
        let timestamp_us = ts_sec * 1_000_000 + if nanos { ts_frac / 1000 } else { ts_frac };
        match parse_record(&data[body..body + incl_len], linktype, timestamp_us) {
            Parsed::Keep(p) => packets.push(p),
            Parsed::NonIp => counters.non_ip += 1,
            Parsed::Ipv6 => counters.ipv6 += 1,
            Parsed::NonTcpUdp => counters.non_tcp_udp += 1,
            Parsed::Fragment => counters.fragments += 1,
            Parsed::Malformed => counters.malformed += 1,
        }
        offset = body + incl_len;
    }
    Ok((packets, counters))
}

pub fn parse_pcap_file(path: &Path) -> Result<(Vec<Packet>, ParseCounters), PcapError> {
    let data = std::fs::read(path)?;
    parse_pcap_bytes(&data)
}
