//! Burst-injection attack on time-series encodings: appends crafted dummy
//! packets to the end of one chosen burst and learns their features — d
//! standardized packet sizes for the size series, d log-normalized gaps for
//! the inter-arrival series. Values stay in a decodable range so every
//! learned feature is a packet that could really be sent.

use crate::features::{encode_flow_timeseries, EncodedSample, EncodingKind, NormStats};
use crate::nn::Model;
use crate::traffic::{split_bursts, BidirectionalFlow, Burst, Packet};

use super::{
    ascend, init_xi_uniform, AttackError, AttackSpec, BurstPolicy, ClipDomain, GenParams,
    Placement, Template, Uap,
};

/// Smallest packet a size-series dummy may decode to (a bare TCP/IP frame).
pub const MIN_DUMMY_PACKET_SIZE: usize = 40;
/// Dummy inter-arrival bounds: 1 ms to 100 ms.
pub const MIN_DUMMY_IAT_US: u64 = 1_000;
pub const MAX_DUMMY_IAT_US: u64 = 100_000;

fn require_ftsc(attack: &'static str, kind: &EncodingKind) -> Result<(), AttackError> {
    match kind {
        EncodingKind::FtscPs { .. } | EncodingKind::FtscIat { .. } => Ok(()),
        other => Err(AttackError::EncodingMismatch {
            attack,
            expected: "time series (FTSC)",
            got: other.name().to_string(),
        }),
    }
}

/// Pre-sign box of standardized sizes whose decoded byte counts stay within
/// [MIN_DUMMY_PACKET_SIZE, max_dummy_size]. The f32 bounds are nudged
/// inward until decoding (done in f64) actually lands inside.
pub fn burst_ps_domain(
    stats: &NormStats,
    max_dummy_size: usize,
    dummy_sign: i8,
) -> Result<ClipDomain, AttackError> {
    if max_dummy_size < MIN_DUMMY_PACKET_SIZE {
        return Err(AttackError::BadParams(format!(
            "maximum dummy size {max_dummy_size} is below the smallest sendable packet ({MIN_DUMMY_PACKET_SIZE} bytes)"
        )));
    }
    let lo = MIN_DUMMY_PACKET_SIZE as f64;
    let hi = max_dummy_size as f64;
    let mut lower = stats.encode_ps(lo) as f32;
    while stats.decode_ps(f64::from(lower)) < lo {
        lower = lower.next_up();
    }
    let mut upper = stats.encode_ps(hi) as f32;
    while stats.decode_ps(f64::from(upper)) > hi {
        upper = upper.next_down();
    }
    ClipDomain::new(lower, upper, dummy_sign)
}

/// Pre-sign box of log-normalized gaps whose decoded inter-arrivals stay
/// within [MIN_DUMMY_IAT_US, MAX_DUMMY_IAT_US].
pub fn burst_iat_domain(stats: &NormStats, dummy_sign: i8) -> Result<ClipDomain, AttackError> {
    let mut lower = stats.encode_iat(MIN_DUMMY_IAT_US as f64) as f32;
    while stats.decode_iat(f64::from(lower)) < MIN_DUMMY_IAT_US {
        lower = lower.next_up();
    }
    let mut upper = stats.encode_iat(MAX_DUMMY_IAT_US as f64) as f32;
    while stats.decode_iat(f64::from(upper)) > MAX_DUMMY_IAT_US {
        upper = upper.next_down();
    }
    ClipDomain::new(lower, upper, dummy_sign)
}

/// The burst selection that hides dummies best by default: inside forward
/// traffic for the size series, inside backward traffic for inter-arrivals.
pub fn default_burst_policy(kind: &EncodingKind) -> BurstPolicy {
    match kind {
        EncodingKind::FtscIat { .. } => BurstPolicy::FirstBackward,
        _ => BurstPolicy::FirstForward,
    }
}

fn select_burst(flow: &BidirectionalFlow, policy: BurstPolicy) -> Result<Burst, AttackError> {
    let bursts = split_bursts(flow)
        .map_err(|_| AttackError::NotUsable("flow has no packets".into()))?;
    let found = match policy {
        BurstPolicy::FirstForward => bursts.iter().find(|b| b.direction == 1),
        BurstPolicy::FirstBackward => bursts.iter().find(|b| b.direction == -1),
        BurstPolicy::Index(i) => bursts.get(i),
    };
    found.copied().ok_or_else(|| {
        AttackError::NotUsable("no burst of the flow matches the selection policy".into())
    })
}

/// Builds the spliced series for one flow: d placeholder dummies appended
/// to the selected burst's last packet, encoded through the ordinary
/// series encoder. For the size series the dummies occupy the d positions
/// after the burst; for inter-arrivals they occupy the d gaps they create,
/// and the original junction gap survives, shifted right past them.
pub(crate) fn advburst_placement(
    flow: &BidirectionalFlow,
    kind: &EncodingKind,
    stats: &NormStats,
    policy: BurstPolicy,
    dummy_count: usize,
) -> Result<Placement, AttackError> {
    require_ftsc("adv_burst", kind)?;
    let burst = select_burst(flow, policy)?;
    let sign = burst.direction;
    let last = burst.start + burst.count - 1;
    let anchor = &flow.packets[last];
    let dummy = Packet {
        timestamp_us: anchor.timestamp_us,
        tuple: anchor.tuple,
        tl_header: Vec::new(),
        payload: vec![0u8; 1],
        direction: sign,
    };

    let mut packets = flow.packets[..=last].to_vec();
    packets.extend((0..dummy_count).map(|_| dummy.clone()));
    packets.extend_from_slice(&flow.packets[last + 1..]);
    let synthetic =
        BidirectionalFlow { id: 0, orientation: flow.orientation, packets, label: None };
    let base = encode_flow_timeseries(&synthetic, kind, stats)?.values;

    let (first, cap) = match *kind {
        EncodingKind::FtscPs { m } => (last + 1, m),
        EncodingKind::FtscIat { m } => (last, m - 1),
        _ => unreachable!(),
    };
    let mut entries = Vec::new();
    let mut inserted = Vec::new();
    for j in 0..dummy_count {
        let pos = first + j;
        if pos >= cap {
            break;
        }
        entries.push((j as u32, pos as u32, f32::from(sign)));
        inserted.push(pos);
    }
    Ok(Placement { template: Template { base, entries }, inserted })
}

/// Searches for d dummy-packet features which, appended to each flow's
/// selected burst, maximize the model's loss on the target class. Flows
/// without a matching burst are skipped; it is an error if none remain.
/// `max_dummy_size` caps decoded dummy sizes for the size series (it is
/// ignored for inter-arrivals, which use the fixed 1–100 ms window).
pub fn gen_advburst(
    model: &Model,
    flows: &[BidirectionalFlow],
    target_class: u16,
    dummy_count: usize,
    policy: BurstPolicy,
    max_dummy_size: usize,
    params: &GenParams,
) -> Result<Uap, AttackError> {
    params.validate()?;
    let kind = model.encoding;
    require_ftsc("adv_burst", &kind)?;
    let stats = model.norm_stats.ok_or(AttackError::MissingStats)?;
    if dummy_count == 0 {
        return Err(AttackError::BadParams("at least one dummy packet is needed".into()));
    }
    if flows.is_empty() {
        return Err(AttackError::EmptyInputs);
    }

    let domain = match kind {
        EncodingKind::FtscIat { .. } => burst_iat_domain(&stats, policy.nominal_sign())?,
        _ => burst_ps_domain(&stats, max_dummy_size, policy.nominal_sign())?,
    };

    let mut templates = Vec::new();
    let mut skipped = 0usize;
    for flow in flows {
        match advburst_placement(flow, &kind, &stats, policy, dummy_count) {
            Ok(p) => templates.push(p.template),
            Err(AttackError::NotUsable(_)) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    if templates.is_empty() {
        return Err(AttackError::NoUsableInputs {
            total: flows.len(),
            reason: format!("no burst matches the policy in any of the {skipped} skipped flows"),
        });
    }

    let mut xi = init_xi_uniform(dummy_count, &domain, params.seed);
    ascend(model, &templates, &mut xi, &domain, target_class, params)?;
    Ok(Uap {
        values: xi,
        target_class,
        encoding: kind,
        attack: AttackSpec::AdvBurst { dummy_count, burst: policy, max_dummy_size },
        domain,
        gen_params: *params,
        source_model_id: model.id(),
    })
}

fn require_advburst(uap: &Uap) -> Result<(usize, BurstPolicy), AttackError> {
    match uap.attack {
        AttackSpec::AdvBurst { dummy_count, burst, .. } => Ok((dummy_count, burst)),
        ref other => Err(AttackError::WrongAttack { expected: "adv_burst", got: other.name() }),
    }
}

/// Encodes the flow with the perturbation's dummies appended to its
/// selected burst, plus the series positions they occupy.
pub fn apply_advburst_with_layout(
    flow: &BidirectionalFlow,
    uap: &Uap,
    stats: &NormStats,
) -> Result<(EncodedSample, Vec<usize>), AttackError> {
    let (dummy_count, policy) = require_advburst(uap)?;
    let placement = advburst_placement(flow, &uap.encoding, stats, policy, dummy_count)?;
    let values = placement.template.instantiate(&uap.values);
    Ok((
        EncodedSample {
            kind: uap.encoding,
            values,
            label: flow.label.unwrap_or(0),
            source_id: flow.id,
        },
        placement.inserted,
    ))
}

/// Encodes the flow with the perturbation's dummies appended to its
/// selected burst.
pub fn apply_advburst(
    flow: &BidirectionalFlow,
    uap: &Uap,
    stats: &NormStats,
) -> Result<EncodedSample, AttackError> {
    Ok(apply_advburst_with_layout(flow, uap, stats)?.0)
}

/// Decodes the perturbation back to concrete dummy features: packet sizes
/// in bytes for the size series, inter-arrival µs for the gap series.
pub fn decode_dummy_features(uap: &Uap, stats: &NormStats) -> Result<Vec<f64>, AttackError> {
    match uap.encoding {
        EncodingKind::FtscPs { .. } => {
            Ok(uap.values.iter().map(|&v| stats.decode_ps(f64::from(v))).collect())
        }
        EncodingKind::FtscIat { .. } => {
            Ok(uap.values.iter().map(|&v| stats.decode_iat(f64::from(v)) as f64).collect())
        }
        ref other => Err(AttackError::EncodingMismatch {
            attack: "adv_burst",
            expected: "time series (FTSC)",
            got: other.name().to_string(),
        }),
    }
}

/// The on-wire counterpart of [`apply_advburst`]: real dummy packets after
/// the selected burst. Size-series dummies get their decoded (rounded)
/// sizes at the anchor's timestamp; gap-series dummies advance time by
/// their decoded inter-arrivals, and everything after shifts accordingly so
/// the original junction gap survives.
pub fn materialize_advburst(
    flow: &BidirectionalFlow,
    uap: &Uap,
    stats: &NormStats,
) -> Result<BidirectionalFlow, AttackError> {
    let (_, policy) = require_advburst(uap)?;
    require_ftsc("adv_burst", &uap.encoding)?;
    let burst = select_burst(flow, policy)?;
    let sign = burst.direction;
    let last = burst.start + burst.count - 1;
    let anchor = flow.packets[last].clone();

    let mut dummies = Vec::with_capacity(uap.values.len());
    let mut shift = 0u64;
    for &v in &uap.values {
        let (timestamp_us, payload_len) = match uap.encoding {
            EncodingKind::FtscPs { .. } => {
                let size = stats.decode_ps(f64::from(v)).round().max(1.0) as usize;
                (anchor.timestamp_us, size)
            }
            _ => {
                shift += stats.decode_iat(f64::from(v));
                (anchor.timestamp_us + shift, 1)
            }
        };
        dummies.push(Packet {
            timestamp_us,
            tuple: anchor.tuple,
            tl_header: Vec::new(),
            payload: vec![0u8; payload_len],
            direction: sign,
        });
    }

    let mut packets = flow.packets[..=last].to_vec();
    packets.append(&mut dummies);
    for p in &flow.packets[last + 1..] {
        let mut p = p.clone();
        p.timestamp_us += shift;
        packets.push(p);
    }
    Ok(BidirectionalFlow { packets, ..flow.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::preserves_original_content;
    use crate::nn::{ArchFamily, LayerSpec, LayerState, ModelSpec};
    use crate::traffic::FiveTuple;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn stats() -> NormStats {
        NormStats { ps_mean: 200.0, ps_std: 100.0, iat_max_us: 50_000 }
    }

    fn tuple() -> FiveTuple {
        FiveTuple {
            src_ip: [10, 0, 0, 1],
            src_port: 40000,
            dst_ip: [10, 0, 0, 2],
            dst_port: 8003,
            protocol: 6,
        }
    }

    /// Flow from (direction, total size, timestamp µs) triples; size is
    /// split as an 8-byte header plus payload.
    fn flow(specs: &[(i8, usize, u64)]) -> BidirectionalFlow {
        let packets = specs
            .iter()
            .map(|&(dir, size, ts)| Packet {
                timestamp_us: ts,
                tuple: tuple(),
                tl_header: vec![0u8; 8.min(size)],
                payload: vec![0xCD; size.saturating_sub(8)],
                direction: dir,
            })
            .collect();
        BidirectionalFlow { id: 11, orientation: tuple(), packets, label: Some(2) }
    }

    fn linear_ftsc_model(kind: EncodingKind, classes: usize, seed: u64) -> Model {
        let spec = ModelSpec {
            layers: vec![
                LayerSpec::Flatten,
                LayerSpec::Dense { units: classes },
                LayerSpec::Softmax,
            ],
            input_length: kind.len(),
            class_count: classes,
            family: ArchFamily::Sae,
        };
        Model::new(
            spec,
            kind,
            (0..classes).map(|c| format!("c{c}")).collect(),
            Some(stats()),
            seed,
        )
        .unwrap()
    }

    fn uap_with(kind: EncodingKind, policy: BurstPolicy, values: Vec<f32>, domain: ClipDomain) -> Uap {
        Uap {
            target_class: 2,
            encoding: kind,
            attack: AttackSpec::AdvBurst {
                dummy_count: values.len(),
                burst: policy,
                max_dummy_size: 1500,
            },
            values,
            domain,
            gen_params: GenParams::advburst_defaults(),
            source_model_id: 0,
        }
    }

    fn ps(size: f64) -> f32 {
        stats().encode_ps(size) as f32
    }

    fn iat(us: f64) -> f32 {
        stats().encode_iat(us) as f32
    }

    #[test]
    fn size_domain_always_decodes_to_sendable_packets() {
        let s = stats();
        let d = burst_ps_domain(&s, 1500, 1).unwrap();
        assert!(s.decode_ps(f64::from(d.lower)) >= 40.0);
        assert!(s.decode_ps(f64::from(d.upper)) <= 1500.0);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..1000 {
            let v = d.sample(&mut rng);
            let size = s.decode_ps(f64::from(v));
            assert!((40.0..=1500.0).contains(&size), "{size}");
        }
        assert!(burst_ps_domain(&s, 39, 1).is_err());
    }

    #[test]
    fn gap_domain_always_decodes_between_1ms_and_100ms() {
        let s = stats();
        let d = burst_iat_domain(&s, -1).unwrap();
        assert_eq!(d.dummy_sign, -1);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert!((1000..=100_000).contains(&s.decode_iat(f64::from(d.lower))));
        assert!((1000..=100_000).contains(&s.decode_iat(f64::from(d.upper))));
        for _ in 0..1000 {
            let us = s.decode_iat(f64::from(d.sample(&mut rng)));
            assert!((1000..=100_000).contains(&us), "{us}");
        }
    }

    #[test]
    fn size_series_dummies_go_right_after_the_selected_burst() {
        let kind = EncodingKind::FtscPs { m: 8 };
        let f = flow(&[(1, 10, 0), (1, 18, 100), (-1, 12, 200), (1, 14, 300)]);
        let pl =
            advburst_placement(&f, &kind, &stats(), BurstPolicy::FirstBackward, 2).unwrap();

        assert_eq!(pl.template.entries, vec![(0, 3, -1.0), (1, 4, -1.0)]);
        assert_eq!(pl.inserted, vec![3, 4]);
        let v = pl.template.instantiate(&[0.5, 0.7]);
        assert_eq!(v[0], ps(10.0));
        assert_eq!(v[1], ps(18.0));
        assert_eq!(v[2], -ps(12.0));
        assert_eq!(v[3], -0.5);
        assert_eq!(v[4], -0.7);
        // The displaced fourth packet follows the dummies.
        assert_eq!(v[5], ps(14.0));
        assert_eq!(&v[6..8], &[0.0, 0.0]);
    }

    #[test]
    fn gap_series_dummies_shift_the_junction_instead_of_replacing_it() {
        let kind = EncodingKind::FtscIat { m: 8 };
        let f = flow(&[(1, 100, 0), (-1, 100, 10_000), (1, 100, 30_000)]);
        let pl =
            advburst_placement(&f, &kind, &stats(), BurstPolicy::FirstBackward, 2).unwrap();

        // Backward burst is packet 1; its entry index 1 gap (20 ms to the
        // next packet) moves right past the two dummy gaps.
        assert_eq!(pl.template.entries, vec![(0, 1, -1.0), (1, 2, -1.0)]);
        let v = pl.template.instantiate(&[0.3, 0.4]);
        assert_eq!(v.len(), 7);
        assert_eq!(v[0], -iat(10_000.0));
        assert_eq!(v[1], -0.3);
        assert_eq!(v[2], -0.4);
        assert_eq!(v[3], iat(20_000.0), "original junction gap survives");
        assert!(v[4..].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn burst_at_the_flow_end_just_appends() {
        let f = flow(&[(1, 100, 0), (-1, 100, 1_000), (-1, 100, 2_000)]);
        let ps_pl = advburst_placement(
            &f,
            &EncodingKind::FtscPs { m: 8 },
            &stats(),
            BurstPolicy::FirstBackward,
            2,
        )
        .unwrap();
        assert_eq!(ps_pl.inserted, vec![3, 4]);

        let iat_pl = advburst_placement(
            &f,
            &EncodingKind::FtscIat { m: 8 },
            &stats(),
            BurstPolicy::FirstBackward,
            2,
        )
        .unwrap();
        assert_eq!(iat_pl.inserted, vec![2, 3]);
    }

    #[test]
    fn dummies_are_truncated_at_the_series_boundary() {
        let kind = EncodingKind::FtscPs { m: 4 };
        let f = flow(&[(1, 10, 0), (1, 18, 100), (-1, 12, 200)]);
        // Forward burst ends at index 1; five dummies only have positions
        // 2 and 3 available.
        let pl = advburst_placement(&f, &kind, &stats(), BurstPolicy::FirstForward, 5).unwrap();
        assert_eq!(pl.template.entries.len(), 2);
        assert_eq!(pl.inserted, vec![2, 3]);
    }

    #[test]
    fn flows_without_a_matching_burst_are_unusable() {
        let forward_only = flow(&[(1, 100, 0), (1, 100, 1000)]);
        let kind = EncodingKind::FtscPs { m: 8 };
        assert!(matches!(
            advburst_placement(&forward_only, &kind, &stats(), BurstPolicy::FirstBackward, 2),
            Err(AttackError::NotUsable(_))
        ));
        assert!(matches!(
            advburst_placement(&forward_only, &kind, &stats(), BurstPolicy::Index(5), 2),
            Err(AttackError::NotUsable(_))
        ));
    }

    #[test]
    fn generation_validates_inputs() {
        let kind = EncodingKind::FtscPs { m: 8 };
        let model = linear_ftsc_model(kind, 3, 5);
        let params = GenParams { iterations: 0, batch_size: 4, epsilon: 0.01, seed: 1 };
        let f = flow(&[(1, 100, 0), (-1, 120, 1000)]);

        assert!(matches!(
            gen_advburst(&model, &[], 0, 2, BurstPolicy::FirstForward, 1500, &params),
            Err(AttackError::EmptyInputs)
        ));
        assert!(matches!(
            gen_advburst(&model, &[f.clone()], 0, 0, BurstPolicy::FirstForward, 1500, &params),
            Err(AttackError::BadParams(_))
        ));

        let forward_only = flow(&[(1, 100, 0), (1, 100, 1000)]);
        assert!(matches!(
            gen_advburst(
                &model,
                &[forward_only],
                0,
                2,
                BurstPolicy::FirstBackward,
                1500,
                &params
            ),
            Err(AttackError::NoUsableInputs { total: 1, .. })
        ));

        let statless = {
            let spec = ModelSpec {
                layers: vec![
                    LayerSpec::Flatten,
                    LayerSpec::Dense { units: 3 },
                    LayerSpec::Softmax,
                ],
                input_length: 8,
                class_count: 3,
                family: ArchFamily::Sae,
            };
            Model::new(spec, kind, vec!["a".into(), "b".into(), "c".into()], None, 0).unwrap()
        };
        assert!(matches!(
            gen_advburst(&statless, &[f], 0, 2, BurstPolicy::FirstForward, 1500, &params),
            Err(AttackError::MissingStats)
        ));
    }

    #[test]
    fn zero_iterations_returns_a_uniform_draw_from_the_domain() {
        let kind = EncodingKind::FtscIat { m: 8 };
        let model = linear_ftsc_model(kind, 3, 6);
        let f = flow(&[(1, 100, 0), (-1, 100, 5_000), (1, 100, 9_000)]);
        let params = GenParams { iterations: 0, batch_size: 4, epsilon: 0.01, seed: 42 };
        let uap =
            gen_advburst(&model, &[f.clone()], 1, 3, BurstPolicy::FirstBackward, 1500, &params)
                .unwrap();
        assert_eq!(uap.values.len(), 3);
        let domain = burst_iat_domain(&stats(), -1).unwrap();
        assert_eq!(uap.domain, domain);
        for &v in &uap.values {
            assert!(domain.contains(v));
        }
        let again =
            gen_advburst(&model, &[f], 1, 3, BurstPolicy::FirstBackward, 1500, &params).unwrap();
        assert_eq!(uap.values, again.values);
    }

    /// One ascent step against a flatten→dense→softmax model, checked
    /// against the hand-computed f64 input gradient at the dummy positions.
    #[test]
    fn one_step_follows_the_signed_input_gradient() {
        let kind = EncodingKind::FtscPs { m: 6 };
        let classes = 3;
        let model = linear_ftsc_model(kind, classes, 51);
        let (w, b) = match &model.weights[1] {
            LayerState::Dense { w, b } => (w.clone(), b.clone()),
            _ => unreachable!(),
        };

        let f = flow(&[(1, 220, 0), (-1, 180, 2_000)]);
        let target: u16 = 1;
        let params = GenParams { iterations: 1, batch_size: 2, epsilon: 0.05, seed: 23 };
        let uap =
            gen_advburst(&model, &[f.clone()], target, 2, BurstPolicy::FirstForward, 1500, &params)
                .unwrap();

        let domain = burst_ps_domain(&stats(), 1500, 1).unwrap();
        let init = init_xi_uniform(2, &domain, 23);
        let pl = advburst_placement(&f, &kind, &stats(), BurstPolicy::FirstForward, 2).unwrap();
        assert_eq!(pl.template.entries, vec![(0, 1, 1.0), (1, 2, 1.0)]);
        let x0 = pl.template.instantiate(&init);

        let mut logits = vec![0f64; classes];
        for c in 0..classes {
            logits[c] = f64::from(b[c]);
            for j in 0..6 {
                logits[c] += f64::from(x0[j]) * f64::from(w[[j, c]]);
            }
        }
        let m = logits.iter().cloned().fold(f64::MIN, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
        let z: f64 = exps.iter().sum();

        for (j, &(_, pos, coef)) in pl.template.entries.iter().enumerate() {
            let mut dx = 0f64;
            for c in 0..classes {
                let pc = exps[c] / z;
                let delta = pc - if c == usize::from(target) { 1.0 } else { 0.0 };
                dx += f64::from(w[[pos as usize, c]]) * delta;
            }
            let expected =
                domain.clip_value(init[j] + params.epsilon * (f64::from(coef) * dx) as f32);
            assert!(
                (f64::from(uap.values[j]) - f64::from(expected)).abs() < 1e-5,
                "coordinate {j}: got {}, expected {expected}",
                uap.values[j]
            );
        }
    }

    #[test]
    fn applications_keep_original_content_in_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        let s = stats();
        let ps_domain = burst_ps_domain(&s, 1500, 1).unwrap();
        let iat_domain = burst_iat_domain(&s, -1).unwrap();
        let mut checked = 0;
        for _ in 0..100 {
            let count = rng.gen_range(2..9);
            let mut ts = 0u64;
            let specs: Vec<(i8, usize, u64)> = (0..count)
                .map(|_| {
                    ts += rng.gen_range(100..20_000);
                    let dir = if rng.gen_bool(0.5) { 1 } else { -1 };
                    (dir, rng.gen_range(40..400), ts)
                })
                .collect();
            let f = flow(&specs);

            for (kind, domain, policy) in [
                (EncodingKind::FtscPs { m: 10 }, ps_domain, BurstPolicy::FirstForward),
                (EncodingKind::FtscIat { m: 10 }, iat_domain, BurstPolicy::FirstBackward),
            ] {
                let clean = match encode_flow_timeseries(&f, &kind, &s) {
                    Ok(c) => c,
                    Err(_) => continue,
                };
                let values: Vec<f32> = (0..3).map(|_| domain.sample(&mut rng)).collect();
                let uap = uap_with(kind, policy, values, domain);
                match apply_advburst_with_layout(&f, &uap, &s) {
                    Ok((sample, inserted)) => {
                        checked += 1;
                        assert!(
                            preserves_original_content(&clean.values, &sample.values, &inserted),
                            "{}",
                            kind.name()
                        );
                    }
                    Err(AttackError::NotUsable(_)) => continue,
                    Err(e) => panic!("unexpected error: {e}"),
                }
            }
        }
        assert!(checked > 50, "only {checked} usable flows generated");
    }

    #[test]
    fn materialized_size_dummies_reencode_within_rounding() {
        let s = stats();
        let kind = EncodingKind::FtscPs { m: 8 };
        let f = flow(&[(1, 100, 0), (1, 250, 2_000), (-1, 300, 5_000)]);
        let domain = burst_ps_domain(&s, 1500, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let values: Vec<f32> = (0..2).map(|_| domain.sample(&mut rng)).collect();
        let uap = uap_with(kind, BurstPolicy::FirstForward, values, domain);

        let wire = materialize_advburst(&f, &uap, &s).unwrap();
        assert_eq!(wire.packets.len(), 5);
        let sizes = decode_dummy_features(&uap, &s).unwrap();
        for (i, dummy) in wire.packets[2..4].iter().enumerate() {
            assert_eq!(dummy.direction, 1);
            assert_eq!(dummy.timestamp_us, f.packets[1].timestamp_us);
            assert_eq!(dummy.size() as f64, sizes[i].round());
        }
        // Original tail packet unmoved (size series leaves time alone).
        assert_eq!(wire.packets[4].timestamp_us, f.packets[2].timestamp_us);

        let reencoded = encode_flow_timeseries(&wire, &kind, &s).unwrap();
        let (applied, inserted) = apply_advburst_with_layout(&f, &uap, &s).unwrap();
        for (i, (a, b)) in reencoded.values.iter().zip(&applied.values).enumerate() {
            let tol = if inserted.contains(&i) { 0.5 / s.ps_std as f32 + 1e-6 } else { 0.0 };
            assert!((a - b).abs() <= tol, "position {i}: wire {a} vs applied {b}");
        }
    }

    #[test]
    fn materialized_gap_dummies_shift_the_tail_and_keep_the_junction() {
        let s = stats();
        let kind = EncodingKind::FtscIat { m: 8 };
        let f = flow(&[(1, 100, 0), (-1, 100, 10_000), (1, 100, 30_000)]);
        let domain = burst_iat_domain(&s, -1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let values: Vec<f32> = (0..2).map(|_| domain.sample(&mut rng)).collect();
        let uap = uap_with(kind, BurstPolicy::FirstBackward, values, domain);

        let gaps = decode_dummy_features(&uap, &s).unwrap();
        let wire = materialize_advburst(&f, &uap, &s).unwrap();
        assert_eq!(wire.packets.len(), 5);
        assert_eq!(wire.packets[2].timestamp_us, 10_000 + gaps[0] as u64);
        assert_eq!(wire.packets[3].timestamp_us, 10_000 + (gaps[0] + gaps[1]) as u64);
        // The tail shifts by the total inserted time: its gap to the last
        // dummy stays exactly the original junction's 20 ms.
        let total = (gaps[0] + gaps[1]) as u64;
        assert_eq!(wire.packets[4].timestamp_us, 30_000 + total);

        let reencoded = encode_flow_timeseries(&wire, &kind, &s).unwrap();
        let (applied, inserted) = apply_advburst_with_layout(&f, &uap, &s).unwrap();
        for (i, (a, b)) in reencoded.values.iter().zip(&applied.values).enumerate() {
            let tol = if inserted.contains(&i) { 1e-3 } else { 0.0 };
            assert!((a - b).abs() <= tol, "position {i}: wire {a} vs applied {b}");
        }
    }

    #[test]
    fn generated_gap_dummies_always_decode_between_1ms_and_100ms() {
        let kind = EncodingKind::FtscIat { m: 8 };
        let model = linear_ftsc_model(kind, 3, 61);
        let flows: Vec<BidirectionalFlow> = (0..4)
            .map(|i| {
                flow(&[
                    (1, 120 + i * 10, 0),
                    (-1, 90, 3_000 + 500 * i as u64),
                    (1, 200, 20_000),
                ])
            })
            .collect();
        let params = GenParams { iterations: 25, batch_size: 4, epsilon: 0.2, seed: 3 };
        let uap =
            gen_advburst(&model, &flows, 0, 3, BurstPolicy::FirstBackward, 1500, &params).unwrap();
        for us in decode_dummy_features(&uap, &stats()).unwrap() {
            assert!((1000.0..=100_000.0).contains(&us), "{us}");
        }
    }

    #[test]
    fn default_policies_match_the_series_kind() {
        assert_eq!(default_burst_policy(&EncodingKind::FtscPs { m: 8 }), BurstPolicy::FirstForward);
        assert_eq!(
            default_burst_policy(&EncodingKind::FtscIat { m: 8 }),
            BurstPolicy::FirstBackward
        );
    }
}
