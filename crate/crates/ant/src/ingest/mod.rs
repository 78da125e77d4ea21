//! Capture ingestion: pcap parsing, background filtering, class balancing,
//! stratified splitting, and the on-disk dataset bundle.

pub mod bundle;
pub mod pcap;

pub use bundle::{read_bundle, write_bundle, Bundle, BundleMeta, SPLIT_NAMES};
pub use pcap::{parse_pcap_bytes, parse_pcap_file, ParseCounters, PcapError};

use crate::seed::subseed;
use crate::traffic::{assemble_flows, BidirectionalFlow, Packet};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("{path}: {source}")]
    Pcap {
        path: PathBuf,
        #[source]
        source: PcapError,
    },
    #[error("manifest: {0}")]
    Manifest(String),
    #[error("manifest lists {0} twice")]
    DuplicatePath(PathBuf),
    #[error("class {0} has no samples")]
    EmptyClass(String),
    #[error("class {label} has {count} samples; at least 3 required to stratify")]
    ClassTooSmall { label: String, count: usize },
    #[error("fractions {0:?} must be nonnegative and sum to 1")]
    BadFractions([f64; 3]),
    #[error("balance target must be ≥ 1")]
    BadTarget,
    #[error("bundle: {0}")]
    Bundle(String),
    #[error("traffic: {0}")]
    Traffic(#[from] crate::traffic::TrafficError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

// --- manifest ---------------------------------------------------------------

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub label: String,
}

/// Reads a `path,label` CSV. Relative paths resolve against the manifest's
/// own directory.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>, IngestError> {
    let base = path.parent().unwrap_or_else(|| Path::new("")).to_path_buf();
    let mut reader = csv::Reader::from_path(path)
        .map_err(|e| IngestError::Manifest(format!("{}: {e}", path.display())))?;
    let headers = reader
        .headers()
        .map_err(|e| IngestError::Manifest(e.to_string()))?
        .clone();
    if headers.len() < 2 || &headers[0] != "path" || &headers[1] != "label" {
        return Err(IngestError::Manifest(format!(
            "expected header `path,label`, found {headers:?}"
        )));
    }
    let mut seen = BTreeSet::new();
    let mut entries = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| IngestError::Manifest(e.to_string()))?;
        if row.len() < 2 {
            return Err(IngestError::Manifest(format!("short row: {row:?}")));
        }
        let raw = PathBuf::from(&row[0]);
        let resolved = if raw.is_absolute() { raw } else { base.join(raw) };
        if !seen.insert(resolved.clone()) {
            return Err(IngestError::DuplicatePath(resolved));
        }
        entries.push(ManifestEntry { path: resolved, label: row[1].to_string() });
    }
    Ok(entries)
}

// --- background filter ------------------------------------------------------

/// Drops service noise before flow assembly: packets on the configured
/// ports (either side) and packets with no payload bytes.
#[derive(Clone, Debug)]
pub struct BackgroundFilter {
    pub drop_ports: BTreeSet<u16>,
    pub drop_empty_payload: bool,
}

impl Default for BackgroundFilter {
    fn default() -> Self {
        BackgroundFilter {
            drop_ports: [53, 137, 138, 139].into_iter().collect(),
            drop_empty_payload: true,
        }
    }
}

impl BackgroundFilter {
    pub fn keeps(&self, p: &Packet) -> bool {
        if self.drop_ports.contains(&p.tuple.src_port) || self.drop_ports.contains(&p.tuple.dst_port)
        {
            return false;
        }
        !(self.drop_empty_payload && p.payload.is_empty())
    }
}

pub fn filter_background(packets: Vec<Packet>, filter: &BackgroundFilter) -> Vec<Packet> {
    packets.into_iter().filter(|p| filter.keeps(p)).collect()
}

// --- balancing and splitting ------------------------------------------------

/// Equalizes class sizes: classes above `target` are subsampled without
/// replacement, classes below are replicated (whole copies, then a seeded
/// random remainder of distinct originals). Input order is preserved among
/// kept elements.
pub fn balance<T: Clone>(
    classes: &BTreeMap<u16, Vec<T>>,
    labels: &[String],
    target: usize,
    seed: u64,
) -> Result<BTreeMap<u16, Vec<T>>, IngestError> {
    if target == 0 {
        return Err(IngestError::BadTarget);
    }
    let mut out = BTreeMap::new();
    for (&label, samples) in classes {
        let name = labels
            .get(usize::from(label))
            .cloned()
            .unwrap_or_else(|| label.to_string());
        if samples.is_empty() {
            return Err(IngestError::EmptyClass(name));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(subseed(seed, &format!("balance/{label}")));
        let n = samples.len();
        let balanced = if n == target {
            samples.clone()
        } else if n > target {
            let mut idx = rand::seq::index::sample(&mut rng, n, target).into_vec();
            idx.sort_unstable();
            idx.into_iter().map(|i| samples[i].clone()).collect()
        } else {
            let mut v: Vec<T> = Vec::with_capacity(target);
            for _ in 0..target / n {
                v.extend(samples.iter().cloned());
            }
            let remainder = target % n;
            if remainder > 0 {
                let mut idx = rand::seq::index::sample(&mut rng, n, remainder).into_vec();
                idx.sort_unstable();
                v.extend(idx.into_iter().map(|i| samples[i].clone()));
            }
            v
        };
        out.insert(label, balanced);
    }
    Ok(out)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SplitDataset<T> {
    pub train: Vec<T>,
    pub validation: Vec<T>,
    pub test: Vec<T>,
}

/// Per-class view of a stratified split.
#[derive(Clone, Debug)]
pub struct SplitClasses<T> {
    pub train: BTreeMap<u16, Vec<T>>,
    pub validation: BTreeMap<u16, Vec<T>>,
    pub test: BTreeMap<u16, Vec<T>>,
}

impl<T> Default for SplitClasses<T> {
    fn default() -> Self {
        SplitClasses {
            train: BTreeMap::new(),
            validation: BTreeMap::new(),
            test: BTreeMap::new(),
        }
    }
}

/// Per-class split counts: largest-remainder allocation of n·fraction,
/// then every split is topped up to at least one sample (possible because
/// classes of fewer than 3 samples are rejected).
fn allocate(n: usize, fractions: [f64; 3]) -> [usize; 3] {
    let mut counts = [0usize; 3];
    let mut rems: Vec<(usize, f64)> = Vec::new();
    let mut assigned = 0;
    for (i, f) in fractions.iter().enumerate() {
        let q = n as f64 * f;
        counts[i] = q.floor() as usize;
        assigned += counts[i];
        rems.push((i, q - q.floor()));
    }
    rems.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap().then(a.0.cmp(&b.0)));
    for k in 0..n - assigned {
        counts[rems[k % 3].0] += 1;
    }
    while counts.iter().any(|&c| c == 0) {
        let min = (0..3).find(|&i| counts[i] == 0).unwrap();
        let max = (0..3).max_by_key(|&i| counts[i]).unwrap();
        counts[min] += 1;
        counts[max] -= 1;
    }
    counts
}

/// Stratified split, deterministic given the seed; membership shuffled per
/// class, order within a split preserved from the input.
pub fn split_stratified<T: Clone>(
    classes: &BTreeMap<u16, Vec<T>>,
    labels: &[String],
    fractions: [f64; 3],
    seed: u64,
) -> Result<SplitClasses<T>, IngestError> {
    if fractions.iter().any(|f| *f < 0.0) || (fractions.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(IngestError::BadFractions(fractions));
    }
    let mut out = SplitClasses::default();
    for (&label, samples) in classes {
        let name = labels
            .get(usize::from(label))
            .cloned()
            .unwrap_or_else(|| label.to_string());
        if samples.len() < 3 {
            return Err(IngestError::ClassTooSmall { label: name, count: samples.len() });
        }
        let counts = allocate(samples.len(), fractions);
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(subseed(seed, &format!("split/{label}")));
        order.shuffle(&mut rng);
        let pick = |idx: &[usize]| {
            let mut sorted = idx.to_vec();
            sorted.sort_unstable();
            sorted.into_iter().map(|i| samples[i].clone()).collect::<Vec<T>>()
        };
        out.train.insert(label, pick(&order[..counts[0]]));
        out.validation.insert(label, pick(&order[counts[0]..counts[0] + counts[1]]));
        out.test.insert(label, pick(&order[counts[0] + counts[1]..]));
    }
    Ok(out)
}

// --- manifest → bundle pipeline ----------------------------------------------

#[derive(Clone, Debug)]
pub struct IngestConfig {
    pub timeout_us: u64,
    pub fractions: [f64; 3],
    /// Flow-count target for training-split balancing; None = median class size.
    pub balance_target: Option<usize>,
    pub seed: u64,
    pub filter: BackgroundFilter,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            timeout_us: crate::traffic::DEFAULT_TIMEOUT_US,
            fractions: [0.6, 0.2, 0.2],
            balance_target: None,
            seed: 0,
            filter: BackgroundFilter::default(),
        }
    }
}

/// Per-class ingest accounting (Table-style summary source).
#[derive(Clone, Debug, Default)]
pub struct ClassSummary {
    pub label: String,
    pub flows: usize,
    pub packets: usize,
    pub train_flows: usize,
    pub train_flows_balanced: usize,
    pub validation_flows: usize,
    pub test_flows: usize,
}

#[derive(Clone, Debug, Default)]
pub struct IngestSummary {
    pub classes: Vec<ClassSummary>,
    pub counters: ParseCounters,
    pub dropped_by_filter: usize,
}

pub(crate) fn median(mut counts: Vec<usize>) -> usize {
    counts.sort_unstable();
    let n = counts.len();
    if n % 2 == 1 {
        counts[n / 2]
    } else {
        (counts[n / 2 - 1] + counts[n / 2]) / 2
    }
}

/// Full ingest pipeline: parse every manifest entry, filter background
/// packets, assemble flows per capture, stratify-split flows per class,
/// and write the bundle. Balancing happens at training time against
/// `meta.balance_target`; the bundle stores raw flows.
pub fn ingest_manifest(
    manifest_path: &Path,
    out_dir: &Path,
    config: &IngestConfig,
) -> Result<(Bundle, IngestSummary), IngestError> {
    let entries = read_manifest(manifest_path)?;
    if entries.is_empty() {
        return Err(IngestError::Manifest("manifest has no rows".into()));
    }
    let mut label_names: Vec<String> = entries.iter().map(|e| e.label.clone()).collect();
    label_names.sort();
    label_names.dedup();
    let label_index: BTreeMap<&str, u16> = label_names
        .iter()
        .enumerate()
        .map(|(i, l)| (l.as_str(), i as u16))
        .collect();

    let mut classes: BTreeMap<u16, Vec<BidirectionalFlow>> = BTreeMap::new();
    let mut counters = ParseCounters::default();
    let mut dropped = 0usize;
    for entry in &entries {
        if !entry.path.exists() {
            return Err(IngestError::Pcap {
                path: entry.path.clone(),
                source: PcapError::Io(std::io::Error::new(
                    std::io::ErrorKind::NotFound,
                    "no such file",
                )),
            });
        }
        let (packets, file_counters) = parse_pcap_file(&entry.path)
            .map_err(|source| IngestError::Pcap { path: entry.path.clone(), source })?;
        counters.non_ip += file_counters.non_ip;
        counters.ipv6 += file_counters.ipv6;
        counters.non_tcp_udp += file_counters.non_tcp_udp;
        counters.fragments += file_counters.fragments;
        counters.malformed += file_counters.malformed;
        let before = packets.len();
        let kept = filter_background(packets, &config.filter);
        dropped += before - kept.len();
        let label = label_index[entry.label.as_str()];
        let flows = assemble_flows(&kept, config.timeout_us)?;
        let class = classes.entry(label).or_default();
        for mut f in flows {
            f.label = Some(label);
            class.push(f);
        }
    }
    for name in &label_names {
        let idx = label_index[name.as_str()];
        if classes.get(&idx).map_or(true, |v| v.is_empty()) {
            return Err(IngestError::EmptyClass(name.clone()));
        }
    }

    let split = split_stratified(
        &classes,
        &label_names,
        config.fractions,
        subseed(config.seed, "ingest/split"),
    )?;
    let (train, validation, test) = (&split.train, &split.validation, &split.test);

    let target = config.balance_target.unwrap_or_else(|| {
        median(train.values().map(|v| v.len()).collect()).max(1)
    });

    let flatten = |m: &BTreeMap<u16, Vec<BidirectionalFlow>>| -> Vec<BidirectionalFlow> {
        let mut all: Vec<BidirectionalFlow> = m.values().flatten().cloned().collect();
        all.sort_by_key(|f| (f.packets[0].timestamp_us, f.id));
        all
    };
    let (train_flows, val_flows, test_flows) = (flatten(train), flatten(validation), flatten(test));

    let mut flow_counts = BTreeMap::new();
    let mut packet_counts = BTreeMap::new();
    for (name, m) in SPLIT_NAMES.iter().zip([train, validation, test]) {
        let mut fc = vec![0usize; label_names.len()];
        let mut pc = vec![0usize; label_names.len()];
        for (&label, flows) in m {
            fc[usize::from(label)] = flows.len();
            pc[usize::from(label)] = flows.iter().map(|f| f.packets.len()).sum();
        }
        flow_counts.insert((*name).to_string(), fc);
        packet_counts.insert((*name).to_string(), pc);
    }

    let meta = BundleMeta {
        format_version: bundle::BUNDLE_FORMAT_VERSION,
        labels: label_names.clone(),
        seed: config.seed,
        fractions: config.fractions,
        timeout_us: config.timeout_us,
        balance_target: target,
        flow_counts,
        packet_counts,
    };
    write_bundle(out_dir, &meta, [&train_flows, &val_flows, &test_flows])?;

    let classes_summary = label_names
        .iter()
        .map(|name| {
            let idx = label_index[name.as_str()];
            let all = &classes[&idx];
            ClassSummary {
                label: name.clone(),
                flows: all.len(),
                packets: all.iter().map(|f| f.packets.len()).sum(),
                train_flows: train[&idx].len(),
                train_flows_balanced: target,
                validation_flows: validation[&idx].len(),
                test_flows: test[&idx].len(),
            }
        })
        .collect();

    Ok((
        Bundle { dir: out_dir.to_path_buf(), meta },
        IngestSummary { classes: classes_summary, counters, dropped_by_filter: dropped },
    ))
}

/// Groups labeled samples per class for balance/split.
pub fn group_by_class<T>(samples: Vec<(u16, T)>) -> BTreeMap<u16, Vec<T>> {
    let mut m: BTreeMap<u16, Vec<T>> = BTreeMap::new();
    for (label, s) in samples {
        m.entry(label).or_default().push(s);
    }
    m
}
