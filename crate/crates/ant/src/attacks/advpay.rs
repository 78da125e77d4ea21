//! Dummy-payload injection attack: inserts one crafted packet into a flow's
//! content window, right after an existing packet whose direction (and, for
//! header-aware encodings, header) the dummy adopts, and learns that
//! packet's payload bytes.

use crate::features::{encode_flow_content, EncodedSample, EncodingKind};
use crate::nn::Model;
use crate::traffic::{BidirectionalFlow, Packet};

use super::{
    ascend, quantize_byte, AttackError, AttackSpec, ClipDomain, DummyIndexPolicy, GenParams,
    Placement, Template, Uap,
};

fn require_fcc(attack: &'static str, kind: &EncodingKind) -> Result<(usize, usize), AttackError> {
    match kind {
        EncodingKind::FccHp { n, max_pkt_size } | EncodingKind::FccP { n, max_pkt_size } => {
            Ok((*n, *max_pkt_size))
        }
        other => Err(AttackError::EncodingMismatch {
            attack,
            expected: "flow content (FCC)",
            got: other.name().to_string(),
        }),
    }
}

/// Window slot the dummy takes. Structural violations (a dummy that could
/// never fit any flow) are parameter errors; per-flow violations mark the
/// flow unusable so generation can skip it.
fn resolve_slot(
    window: &[&Packet],
    n: usize,
    policy: DummyIndexPolicy,
) -> Result<usize, AttackError> {
    let k = match policy {
        DummyIndexPolicy::Fixed(k) => {
            validate_fixed_slot(k, n)?;
            if k > window.len() {
                return Err(AttackError::NotUsable(format!(
                    "content window has {} packets, dummy slot {k} needs that many before it",
                    window.len()
                )));
            }
            k
        }
        DummyIndexPolicy::AfterFirstForward => {
            let first_forward = window
                .iter()
                .position(|p| p.direction == 1)
                .ok_or_else(|| AttackError::NotUsable("window has no forward packet".into()))?;
            first_forward + 1
        }
    };
    if k >= n {
        return Err(AttackError::NotUsable(
            "the packet the dummy would follow sits in the window's last slot".into(),
        ));
    }
    Ok(k)
}

fn validate_fixed_slot(k: usize, n: usize) -> Result<(), AttackError> {
    if k == 0 {
        return Err(AttackError::BadParams(
            "the dummy packet needs a predecessor: slot index must be ≥ 1".into(),
        ));
    }
    if k >= n {
        return Err(AttackError::BadParams(format!(
            "dummy slot {k} falls outside a {n}-packet content window"
        )));
    }
    Ok(())
}

/// Builds the spliced window for one flow: the dummy (zero payload for now)
/// inserted after its predecessor, encoded through the ordinary window
/// encoder — which also drops the window's last packet when it was full.
/// The dummy's payload byte positions become the perturbation's slots.
pub(crate) fn advpay_placement(
    flow: &BidirectionalFlow,
    kind: &EncodingKind,
    policy: DummyIndexPolicy,
    payload_size: usize,
) -> Result<Placement, AttackError> {
    let (n, mps) = require_fcc("adv_pay", kind)?;
    if payload_size == 0 {
        return Err(AttackError::BadParams("dummy payload must hold at least one byte".into()));
    }
    let window: Vec<&Packet> = flow.packets.iter().filter(|p| p.has_payload()).take(n).collect();
    if window.is_empty() {
        return Err(AttackError::NotUsable("flow has no payload-bearing packets".into()));
    }
    let k = resolve_slot(&window, n, policy)?;
    let prev = window[k - 1];
    let dummy = Packet {
        timestamp_us: prev.timestamp_us,
        tuple: prev.tuple,
        tl_header: prev.tl_header.clone(),
        payload: vec![0u8; payload_size],
        direction: prev.direction,
    };

    let mut packets: Vec<Packet> = Vec::with_capacity(window.len() + 1);
    packets.extend(window[..k].iter().map(|p| (*p).clone()));
    packets.push(dummy);
    packets.extend(window[k..].iter().map(|p| (*p).clone()));
    let synthetic =
        BidirectionalFlow { id: 0, orientation: flow.orientation, packets, label: None };
    let base = encode_flow_content(&synthetic, kind)?.values;

    let hlen = if kind.includes_headers() { prev.tl_header.len() } else { 0 };
    let sign = f32::from(prev.direction);
    let slot = k * mps;
    let mut entries = Vec::new();
    for j in 0..payload_size {
        let off = hlen + j;
        if off >= mps {
            break;
        }
        entries.push((j as u32, (slot + off) as u32, sign));
    }
    Ok(Placement {
        template: Template { base, entries },
        inserted: (slot..slot + mps).collect(),
    })
}

/// Searches for one dummy payload (values in [0, 1], pre-sign) that, when
/// its packet is injected into each flow's content window, maximizes the
/// model's loss on the target class. Flows the dummy cannot fit into are
/// skipped; it is an error if none remain.
pub fn gen_advpay(
    model: &Model,
    flows: &[BidirectionalFlow],
    target_class: u16,
    payload_size: usize,
    dummy_index: DummyIndexPolicy,
    params: &GenParams,
) -> Result<Uap, AttackError> {
    params.validate()?;
    let kind = model.encoding;
    let (n, mps) = require_fcc("adv_pay", &kind)?;
    if payload_size == 0 || payload_size > mps {
        return Err(AttackError::BadParams(format!(
            "dummy payload of {payload_size} bytes must be between 1 and the packet window width {mps}"
        )));
    }
    if let DummyIndexPolicy::Fixed(k) = dummy_index {
        validate_fixed_slot(k, n)?;
    }
    if flows.is_empty() {
        return Err(AttackError::EmptyInputs);
    }

    let mut templates = Vec::new();
    let mut skipped = 0usize;
    for flow in flows {
        match advpay_placement(flow, &kind, dummy_index, payload_size) {
            Ok(p) => templates.push(p.template),
            Err(AttackError::NotUsable(_)) => skipped += 1,
            Err(e) => return Err(e),
        }
    }
    if templates.is_empty() {
        return Err(AttackError::NoUsableInputs {
            total: flows.len(),
            reason: format!("the dummy slot fits none of the {skipped} skipped flows"),
        });
    }

    let domain = ClipDomain::bytes();
    // Unlike the other searches this one starts from silence, not noise:
    // an all-zero payload.
    let mut xi = vec![0f32; payload_size];
    ascend(model, &templates, &mut xi, &domain, target_class, params)?;
    Ok(Uap {
        values: xi,
        target_class,
        encoding: kind,
        attack: AttackSpec::AdvPay { payload_size, dummy_index },
        domain,
        gen_params: *params,
        source_model_id: model.id(),
    })
}

fn require_advpay(uap: &Uap) -> Result<(usize, DummyIndexPolicy), AttackError> {
    match uap.attack {
        AttackSpec::AdvPay { payload_size, dummy_index } => Ok((payload_size, dummy_index)),
        ref other => Err(AttackError::WrongAttack { expected: "adv_pay", got: other.name() }),
    }
}

/// Encodes the flow with the perturbation's dummy packet injected, plus the
/// vector positions of the dummy's whole window slot.
pub fn apply_advpay_with_layout(
    flow: &BidirectionalFlow,
    uap: &Uap,
) -> Result<(EncodedSample, Vec<usize>), AttackError> {
    let (payload_size, dummy_index) = require_advpay(uap)?;
    let placement = advpay_placement(flow, &uap.encoding, dummy_index, payload_size)?;
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

/// Encodes the flow with the perturbation's dummy packet injected.
pub fn apply_advpay(flow: &BidirectionalFlow, uap: &Uap) -> Result<EncodedSample, AttackError> {
    Ok(apply_advpay_with_layout(flow, uap)?.0)
}

/// The on-wire counterpart of [`apply_advpay`]: a real packet with the
/// quantized payload, its predecessor's header, direction, and timestamp,
/// inserted right after that predecessor. Re-encoding the returned flow
/// agrees with [`apply_advpay`] up to half-byte rounding.
pub fn materialize_advpay(
    flow: &BidirectionalFlow,
    uap: &Uap,
) -> Result<BidirectionalFlow, AttackError> {
    let (_, dummy_index) = require_advpay(uap)?;
    let (n, _) = require_fcc("adv_pay", &uap.encoding)?;
    let window: Vec<&Packet> = flow.packets.iter().filter(|p| p.has_payload()).take(n).collect();
    if window.is_empty() {
        return Err(AttackError::NotUsable("flow has no payload-bearing packets".into()));
    }
    let k = resolve_slot(&window, n, dummy_index)?;

    // Position of the k-th payload-bearing packet in the full packet list.
    let mut seen = 0usize;
    let mut insert_after = 0usize;
    for (i, p) in flow.packets.iter().enumerate() {
        if p.has_payload() {
            seen += 1;
            if seen == k {
                insert_after = i;
                break;
            }
        }
    }
    let prev = &flow.packets[insert_after];
    let dummy = Packet {
        timestamp_us: prev.timestamp_us,
        tuple: prev.tuple,
        tl_header: prev.tl_header.clone(),
        payload: uap.values.iter().map(|&v| quantize_byte(v)).collect(),
        direction: prev.direction,
    };
    let mut out = flow.clone();
    out.packets.insert(insert_after + 1, dummy);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::{init_xi_uniform, preserves_original_content};
    use crate::nn::{ArchFamily, LayerSpec, LayerState, ModelSpec};
    use crate::traffic::FiveTuple;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const MPS: usize = 60;

    fn tuple() -> FiveTuple {
        FiveTuple {
            src_ip: [10, 0, 0, 1],
            src_port: 40000,
            dst_ip: [10, 0, 0, 2],
            dst_port: 8002,
            protocol: 6,
        }
    }

    /// Flow from (direction, payload) pairs; packet i gets header
    /// [0xE0 + i, 2i] and timestamp 1000·i.
    fn flow(specs: &[(i8, Vec<u8>)]) -> BidirectionalFlow {
        let packets = specs
            .iter()
            .enumerate()
            .map(|(i, (dir, payload))| Packet {
                timestamp_us: 1000 * i as u64,
                tuple: tuple(),
                tl_header: vec![0xE0 + i as u8, 2 * i as u8],
                payload: payload.clone(),
                direction: *dir,
            })
            .collect();
        BidirectionalFlow { id: 7, orientation: tuple(), packets, label: Some(1) }
    }

    fn byte(b: u8) -> f32 {
        f32::from(b) / 255.0
    }

    fn linear_fcc_model(kind: EncodingKind, classes: usize, seed: u64) -> Model {
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
        Model::new(spec, kind, (0..classes).map(|c| format!("c{c}")).collect(), None, seed)
            .unwrap()
    }

    fn uap_with(kind: EncodingKind, policy: DummyIndexPolicy, values: Vec<f32>) -> Uap {
        Uap {
            target_class: 1,
            encoding: kind,
            attack: AttackSpec::AdvPay { payload_size: values.len(), dummy_index: policy },
            values,
            domain: ClipDomain::bytes(),
            gen_params: GenParams::advpay_defaults(),
            source_model_id: 0,
        }
    }

    #[test]
    fn dummy_takes_its_predecessors_header_sign_and_slot() {
        let kind = EncodingKind::FccHp { n: 3, max_pkt_size: MPS };
        let f = flow(&[(1, vec![1, 2, 3]), (-1, vec![4, 5]), (1, vec![6])]);
        let pl = advpay_placement(&f, &kind, DummyIndexPolicy::Fixed(2), 4).unwrap();

        // Dummy follows the backward packet: its slot is index 2, its sign
        // −1, its header a copy of [0xE1, 0x02]; the third original packet
        // is pushed out of the full window.
        assert_eq!(
            pl.template.entries,
            vec![(0, 122, -1.0), (1, 123, -1.0), (2, 124, -1.0), (3, 125, -1.0)]
        );
        assert_eq!(pl.inserted, (120..180).collect::<Vec<_>>());

        let v = pl.template.instantiate(&[0.1, 0.2, 0.3, 0.4]);
        assert_eq!(v.len(), 180);
        // Slot 0: forward packet, header then payload.
        assert_eq!(v[0], byte(0xE0));
        assert_eq!(v[1], byte(0x00));
        assert_eq!(&v[2..5], &[byte(1), byte(2), byte(3)]);
        // Slot 1: backward packet, negated.
        assert_eq!(v[60], -byte(0xE1));
        assert_eq!(v[61], -byte(0x02));
        assert_eq!(&v[62..64], &[-byte(4), -byte(5)]);
        assert!(v[64..120].iter().all(|&x| x == 0.0));
        // Slot 2: the dummy — copied header as constants, then ξ, negated.
        assert_eq!(v[120], -byte(0xE1));
        assert_eq!(v[121], -byte(0x02));
        assert_eq!(&v[122..126], &[-0.1, -0.2, -0.3, -0.4]);
        assert!(v[126..180].iter().all(|&x| x == 0.0));
    }

    #[test]
    fn default_policy_follows_the_first_forward_packet() {
        let kind = EncodingKind::FccP { n: 5, max_pkt_size: MPS };
        let f = flow(&[(-1, vec![1]), (-1, vec![2]), (1, vec![3]), (-1, vec![4])]);
        let pl = advpay_placement(&f, &kind, DummyIndexPolicy::AfterFirstForward, 2).unwrap();
        // First forward packet sits at window index 2 → dummy slot 3 with
        // sign +1; payload-only encoding puts ξ at the slot start.
        assert_eq!(pl.template.entries, vec![(0, 180, 1.0), (1, 181, 1.0)]);
        let v = pl.template.instantiate(&[0.9, 0.8]);
        assert_eq!(v[0], -byte(1));
        assert_eq!(v[60], -byte(2));
        assert_eq!(v[120], byte(3));
        assert_eq!(&v[180..182], &[0.9, 0.8]);
        // The displaced fourth packet moves to the last slot.
        assert_eq!(v[240], -byte(4));
    }

    #[test]
    fn unusable_flows_are_reported_as_such() {
        let kind = EncodingKind::FccP { n: 4, max_pkt_size: MPS };
        let backward_only = flow(&[(-1, vec![1]), (-1, vec![2])]);
        assert!(matches!(
            advpay_placement(&backward_only, &kind, DummyIndexPolicy::AfterFirstForward, 2),
            Err(AttackError::NotUsable(_))
        ));

        let short = flow(&[(1, vec![1]), (1, vec![2])]);
        assert!(matches!(
            advpay_placement(&short, &kind, DummyIndexPolicy::Fixed(3), 2),
            Err(AttackError::NotUsable(_))
        ));

        let no_payload = flow(&[(1, vec![]), (-1, vec![])]);
        assert!(matches!(
            advpay_placement(&no_payload, &kind, DummyIndexPolicy::AfterFirstForward, 2),
            Err(AttackError::NotUsable(_))
        ));

        // First forward packet in the window's last slot: nowhere to put
        // the dummy.
        let kind2 = EncodingKind::FccP { n: 2, max_pkt_size: MPS };
        let late_forward = flow(&[(-1, vec![1]), (1, vec![2]), (1, vec![3])]);
        assert!(matches!(
            advpay_placement(&late_forward, &kind2, DummyIndexPolicy::AfterFirstForward, 2),
            Err(AttackError::NotUsable(_))
        ));
    }

    #[test]
    fn structurally_impossible_slots_are_parameter_errors() {
        let kind = EncodingKind::FccP { n: 4, max_pkt_size: MPS };
        let f = flow(&[(1, vec![1])]);
        assert!(matches!(
            advpay_placement(&f, &kind, DummyIndexPolicy::Fixed(0), 2),
            Err(AttackError::BadParams(_))
        ));
        assert!(matches!(
            advpay_placement(&f, &kind, DummyIndexPolicy::Fixed(4), 2),
            Err(AttackError::BadParams(_))
        ));
        assert!(matches!(
            advpay_placement(&f, &kind, DummyIndexPolicy::Fixed(1), 0),
            Err(AttackError::BadParams(_))
        ));
    }

    #[test]
    fn generation_skips_unusable_flows_and_errors_when_none_remain() {
        let kind = EncodingKind::FccP { n: 4, max_pkt_size: MPS };
        let model = linear_fcc_model(kind, 3, 4);
        let params = GenParams { iterations: 0, batch_size: 4, epsilon: 0.01, seed: 3 };

        let usable = flow(&[(1, vec![1, 2]), (-1, vec![3])]);
        let hopeless = flow(&[(-1, vec![1]), (-1, vec![2])]);
        let uap = gen_advpay(
            &model,
            &[usable, hopeless.clone()],
            0,
            8,
            DummyIndexPolicy::AfterFirstForward,
            &params,
        )
        .unwrap();
        assert_eq!(uap.values, vec![0.0; 8], "zero iterations keep the all-zero init");

        let err = gen_advpay(
            &model,
            &[hopeless],
            0,
            8,
            DummyIndexPolicy::AfterFirstForward,
            &params,
        );
        assert!(matches!(err, Err(AttackError::NoUsableInputs { total: 1, .. })));

        assert!(matches!(
            gen_advpay(&model, &[], 0, 8, DummyIndexPolicy::AfterFirstForward, &params),
            Err(AttackError::EmptyInputs)
        ));
        let f = flow(&[(1, vec![1])]);
        assert!(matches!(
            gen_advpay(&model, &[f.clone()], 0, 0, DummyIndexPolicy::AfterFirstForward, &params),
            Err(AttackError::BadParams(_))
        ));
        assert!(matches!(
            gen_advpay(&model, &[f], 0, MPS + 1, DummyIndexPolicy::AfterFirstForward, &params),
            Err(AttackError::BadParams(_))
        ));
    }

    /// One ascent step against a flatten→dense→softmax model. The dummy
    /// follows a backward packet, so each payload coordinate moves along
    /// −dx at its position — and nothing else moves (the init is zero and
    /// gradients only reach ξ through the placement).
    #[test]
    fn one_step_follows_the_signed_input_gradient() {
        let kind = EncodingKind::FccP { n: 2, max_pkt_size: MPS };
        let classes = 3;
        let model = linear_fcc_model(kind, classes, 41);
        let (w, b) = match &model.weights[1] {
            LayerState::Dense { w, b } => (w.clone(), b.clone()),
            _ => unreachable!(),
        };

        let f = flow(&[(-1, vec![11, 22, 33]), (1, vec![44, 55])]);
        let size = 4;
        let target: u16 = 0;
        let params = GenParams { iterations: 1, batch_size: 2, epsilon: 0.5, seed: 19 };
        let uap =
            gen_advpay(&model, &[f.clone()], target, size, DummyIndexPolicy::Fixed(1), &params)
                .unwrap();

        // ξ starts at zero, so the forward input is just the base.
        let pl = advpay_placement(&f, &kind, DummyIndexPolicy::Fixed(1), size).unwrap();
        let x0 = pl.template.instantiate(&vec![0.0; size]);
        let len = kind.len();

        let mut logits = vec![0f64; classes];
        for c in 0..classes {
            logits[c] = f64::from(b[c]);
            for j in 0..len {
                logits[c] += f64::from(x0[j]) * f64::from(w[[j, c]]);
            }
        }
        let m = logits.iter().cloned().fold(f64::MIN, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
        let z: f64 = exps.iter().sum();

        for (j, &(xi_idx, pos, coef)) in pl.template.entries.iter().enumerate() {
            assert_eq!(xi_idx as usize, j);
            assert_eq!(coef, -1.0, "dummy follows a backward packet");
            let mut dx = 0f64;
            for c in 0..classes {
                let pc = exps[c] / z;
                let delta = pc - if c == usize::from(target) { 1.0 } else { 0.0 };
                dx += f64::from(w[[pos as usize, c]]) * delta;
            }
            let expected = (params.epsilon * (f64::from(coef) * dx) as f32).clamp(0.0, 1.0);
            assert!(
                (f64::from(uap.values[j]) - f64::from(expected)).abs() < 1e-5,
                "coordinate {j}: got {}, expected {expected}",
                uap.values[j]
            );
        }
    }

    #[test]
    fn applications_keep_original_content_in_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let kinds = [
            EncodingKind::FccHp { n: 4, max_pkt_size: MPS },
            EncodingKind::FccP { n: 4, max_pkt_size: MPS },
        ];
        let mut checked = 0;
        for _ in 0..100 {
            let count = rng.gen_range(2..8);
            let specs: Vec<(i8, Vec<u8>)> = (0..count)
                .map(|_| {
                    let dir = if rng.gen_bool(0.5) { 1 } else { -1 };
                    let payload: Vec<u8> =
                        (0..rng.gen_range(0..30)).map(|_| rng.gen()).collect();
                    (dir, payload)
                })
                .collect();
            let f = flow(&specs);
            for kind in kinds {
                let clean = match encode_flow_content(&f, &kind) {
                    Ok(s) => s,
                    Err(_) => continue,
                };
                let values: Vec<f32> = (0..6).map(|_| rng.gen_range(0.0..=1.0)).collect();
                let uap = uap_with(kind, DummyIndexPolicy::AfterFirstForward, values);
                match apply_advpay_with_layout(&f, &uap) {
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
    fn materialized_flows_reencode_like_the_applied_vector() {
        let kind = EncodingKind::FccHp { n: 3, max_pkt_size: MPS };
        let f = flow(&[(1, vec![1, 2, 3]), (-1, vec![4, 5]), (1, vec![6, 7])]);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let values: Vec<f32> = (0..5).map(|_| rng.gen_range(0.0..=1.0)).collect();
        let uap = uap_with(kind, DummyIndexPolicy::Fixed(2), values);

        let wire = materialize_advpay(&f, &uap).unwrap();
        assert_eq!(wire.packets.len(), f.packets.len() + 1);
        let dummy = &wire.packets[2];
        assert_eq!(dummy.tl_header, f.packets[1].tl_header);
        assert_eq!(dummy.direction, f.packets[1].direction);
        assert_eq!(dummy.timestamp_us, f.packets[1].timestamp_us);
        assert_eq!(dummy.payload.len(), 5);
        assert_eq!(&wire.packets[3].payload, &f.packets[2].payload);

        let reencoded = encode_flow_content(&wire, &kind).unwrap();
        let (applied, inserted) = apply_advpay_with_layout(&f, &uap).unwrap();
        for (i, (a, b)) in reencoded.values.iter().zip(&applied.values).enumerate() {
            let tol = if inserted.contains(&i) { 0.5 / 255.0 + 1e-6 } else { 0.0 };
            assert!((a - b).abs() <= tol, "position {i}: wire {a} vs applied {b}");
        }
    }

    #[test]
    fn init_is_all_zeros_and_sample_metadata_comes_from_the_flow() {
        let kind = EncodingKind::FccP { n: 3, max_pkt_size: MPS };
        let model = linear_fcc_model(kind, 2, 6);
        let f = flow(&[(1, vec![9, 9]), (-1, vec![8])]);
        let params = GenParams { iterations: 0, batch_size: 2, epsilon: 0.01, seed: 55 };
        let uap =
            gen_advpay(&model, &[f.clone()], 1, 16, DummyIndexPolicy::AfterFirstForward, &params)
                .unwrap();
        assert_eq!(uap.values, vec![0.0; 16]);
        // The seeded uniform init would not be all zeros.
        assert_ne!(uap.values, init_xi_uniform(16, &ClipDomain::bytes(), 55));

        let sample = apply_advpay(&f, &uap).unwrap();
        assert_eq!(sample.label, 1);
        assert_eq!(sample.source_id, 7);
        assert_eq!(sample.kind, kind);
    }

    #[test]
    fn apply_rejects_perturbations_from_other_attacks() {
        let kind = EncodingKind::FccP { n: 3, max_pkt_size: MPS };
        let mut uap = uap_with(kind, DummyIndexPolicy::Fixed(1), vec![0.5; 4]);
        uap.attack = AttackSpec::AdvPad { location: super::super::PadLocation::Start, overhead_pct: 20 };
        let f = flow(&[(1, vec![1])]);
        assert!(matches!(
            apply_advpay(&f, &uap),
            Err(AttackError::WrongAttack { .. })
        ));
    }
}
