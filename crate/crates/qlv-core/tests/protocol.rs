//! End-to-end tests of the entanglement-swapping verification protocol.

use std::collections::BTreeMap;

use qlv_core::channels::ChannelSpec;
use qlv_core::protocol::{
    travel_time, DeviceBehavior, Geometry, MessageChannel, MessagePayload, ProtocolWorld,
    ScenarioConfig, SetName, StationId, StationSite, SPEED_OF_LIGHT,
};

fn geometry_1d(device_x: f64) -> Geometry {
    Geometry {
        dimension: 1,
        stations: vec![
            StationSite {
                id: StationId::Alice,
                position: [0.0, 0.0],
            },
            StationSite {
                id: StationId::Bob,
                position: [100_000.0, 0.0],
            },
        ],
        device: [device_x, 0.0],
    }
}

fn honest_config(pairs: usize, challenge_bits: usize, seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        geometry: geometry_1d(30_000.0),
        pair_count: pairs,
        challenge_bits,
        decoherence_channel: ChannelSpec::PhaseDamping { p: 0.0 },
        storage_rates: BTreeMap::new(),
        device_behavior: DeviceBehavior::Honest,
        timing_tolerance: 1e-6,
        error_rate_threshold: None,
        seed,
    }
}

#[test]
fn setup_creates_the_expected_registries() {
    let world = ProtocolWorld::setup(honest_config(100, 20, 1)).unwrap();
    let omega = world.registry(SetName::OmegaAC).unwrap();
    assert_eq!(omega.len(), 100);
    assert_eq!(omega.unconsumed_count(), 100);
    let lambda = world.registry(SetName::Lambda(StationId::Bob)).unwrap();
    assert_eq!(lambda.len(), 50);
    let lambda_prime = world
        .registry(SetName::LambdaPrime(StationId::Bob))
        .unwrap();
    assert_eq!(lambda_prime.len(), 50);
    assert!(world.registry(SetName::Gamma(StationId::Bob)).unwrap().is_empty());

    for pair in omega.pairs().iter().chain(lambda.pairs()) {
        assert_eq!(pair.pauli_frame, 0);
        assert_eq!(pair.state, 0);
        assert_eq!(pair.birth_time, 0.0);
        assert!(!pair.consumed);
    }
}

#[test]
fn setup_is_pure() {
    let a = ProtocolWorld::setup(honest_config(40, 8, 7)).unwrap();
    let b = ProtocolWorld::setup(honest_config(40, 8, 7)).unwrap();
    let digest = |w: &ProtocolWorld| {
        serde_json::to_string(w.registry(SetName::OmegaAC).unwrap().pairs()).unwrap()
    };
    assert_eq!(digest(&a), digest(&b));
}

#[test]
fn swap_halves_the_omega_set() {
    let mut world = ProtocolWorld::setup(honest_config(4, 2, 3)).unwrap();
    world.entanglement_swap().unwrap();
    let omega = world.registry(SetName::OmegaAC).unwrap();
    assert_eq!(omega.unconsumed_count(), 2);
    assert_eq!(omega.len(), 4);
    let gamma = world.registry(SetName::Gamma(StationId::Bob)).unwrap();
    assert_eq!(gamma.len(), 2);
    for pair in gamma.pairs() {
        assert!(pair.origin_label.is_some());
    }
}

#[test]
fn swap_cannot_run_twice() {
    let mut world = ProtocolWorld::setup(honest_config(4, 2, 3)).unwrap();
    world.entanglement_swap().unwrap();
    let err = world.entanglement_swap().unwrap_err();
    assert!(err.to_string().contains("protocol order"));
}

#[test]
fn inform_partner_travels_at_light_speed_and_delivers_the_mapping() {
    let mut world = ProtocolWorld::setup(honest_config(20, 4, 5)).unwrap();
    world.entanglement_swap().unwrap();
    assert!(world.partner_swap_entries(StationId::Bob).is_empty());
    world.inform_partner().unwrap();

    let tau_ab = travel_time([0.0, 0.0], [100_000.0, 0.0]);
    let report = world
        .messages()
        .iter()
        .find(|m| matches!(m.payload, MessagePayload::SwapReport { .. }))
        .expect("swap report sent");
    assert!((report.arrive_time - report.emit_time - tau_ab).abs() < 1e-15);
    assert_eq!(report.channel, MessageChannel::Secured);

    let entries = world.partner_swap_entries(StationId::Bob);
    assert_eq!(entries.len(), 10);
    // Corrections applied: every gamma pair back to Bell index 0.
    for pair in world.registry(SetName::Gamma(StationId::Bob)).unwrap().pairs() {
        assert_eq!(pair.state, 0);
        assert_eq!(pair.pauli_frame, 0);
    }
}

#[test]
fn open_channel_never_carries_the_mapping() {
    // The device's view is exactly the open-channel traffic; it must never
    // contain swap reports or challenge plans.
    let config = honest_config(40, 12, 11);
    let mut world = ProtocolWorld::setup(config).unwrap();
    world.entanglement_swap().unwrap();
    world.inform_partner().unwrap();
    world.generate_challenge().unwrap();
    world.teleport_challenge().unwrap();
    world.decode_at_device().unwrap();
    world.verify().unwrap();

    for message in world.messages() {
        match message.channel {
            MessageChannel::Open => assert!(
                matches!(
                    message.payload,
                    MessagePayload::TeleportReport { .. } | MessagePayload::DecodedReply { .. }
                ),
                "open channel leaked: {:?}",
                message.payload
            ),
            MessageChannel::Secured => assert!(matches!(
                (&message.sender, &message.receiver),
                (
                    qlv_core::protocol::Actor::Station(_),
                    qlv_core::protocol::Actor::Station(_)
                )
            )),
        }
    }
}

#[test]
fn challenge_encodes_the_dibits_into_lambda_prime() {
    let mut world = ProtocolWorld::setup(honest_config(20, 8, 13)).unwrap();
    world.entanglement_swap().unwrap();
    world.inform_partner().unwrap();
    world.generate_challenge().unwrap();

    let bits = world.challenge_bits().to_vec();
    assert_eq!(bits.len(), 8);
    let registry = world.registry(SetName::LambdaPrime(StationId::Bob)).unwrap();
    // 4 dibits encoded into the first 4 pairs, in order.
    for (idx, pair) in registry.pairs().iter().take(4).enumerate() {
        let dibit = (bits[2 * idx] << 1) | bits[2 * idx + 1];
        assert_eq!(pair.state, dibit, "pair {idx}");
        assert!(!pair.consumed, "encoding must not consume the pair yet");
    }

    // Identical seed regenerates identical bits.
    let mut other = ProtocolWorld::setup(honest_config(20, 8, 13)).unwrap();
    other.entanglement_swap().unwrap();
    other.inform_partner().unwrap();
    other.generate_challenge().unwrap();
    assert_eq!(world.challenge_bits(), other.challenge_bits());
}

#[test]
fn challenge_needs_enough_lambda_prime_pairs() {
    // L = 4 gives 2 LambdaPrime pairs but K = 8 asks for 4 encodings; the
    // K < L validation already rejects this, so bypass it with a legal
    // config and drain the registry through a bigger challenge instead.
    let mut config = honest_config(8, 6, 17);
    config.challenge_bits = 6; // 3 dibits vs 4 LambdaPrime pairs: fine
    let mut world = ProtocolWorld::setup(config).unwrap();
    world.entanglement_swap().unwrap();
    world.inform_partner().unwrap();
    world.generate_challenge().unwrap();

    let mut config = honest_config(8, 6, 17);
    config.pair_count = 8;
    config.challenge_bits = 10 // 5 dibits vs 4 pairs
        ;
    assert!(ScenarioConfig::validate(&config).is_err());
}

#[test]
fn teleport_messages_arrive_simultaneously_at_the_claimed_position() {
    let mut world = ProtocolWorld::setup(honest_config(20, 6, 19)).unwrap();
    world.entanglement_swap().unwrap();
    world.inform_partner().unwrap();
    world.generate_challenge().unwrap();
    world.teleport_challenge().unwrap();

    let mut arrivals: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    let mut emits: BTreeMap<usize, BTreeMap<&str, f64>> = BTreeMap::new();
    for message in world.messages() {
        if let MessagePayload::TeleportReport { challenge, .. } = &message.payload {
            arrivals.entry(*challenge).or_default().push(message.arrive_time);
            emits
                .entry(*challenge)
                .or_default()
                .insert(message.sender.name(), message.emit_time);
        }
    }
    assert_eq!(arrivals.len(), 3);
    for (challenge, times) in &arrivals {
        assert_eq!(times.len(), 2);
        assert!(
            (times[0] - times[1]).abs() < 1e-12,
            "challenge {challenge}: arrivals {times:?}"
        );
    }

    // Alice is farther from the claimed position (30 km vs Bob's 70 km)...
    // actually tau_AC = 30km/c < tau_BC = 70km/c, so Bob leads. The station
    // with the larger travel time emits earlier by |tau_AC - tau_BC|.
    let tau_ac = 30_000.0 / SPEED_OF_LIGHT;
    let tau_bc = 70_000.0 / SPEED_OF_LIGHT;
    for per_station in emits.values() {
        let lead = per_station["alice"] - per_station["bob"];
        assert!((lead - (tau_bc - tau_ac)).abs() < 1e-15);
    }

    // Each challenge consumed exactly one Omega and one Gamma pair.
    let omega = world.registry(SetName::OmegaAC).unwrap();
    assert_eq!(omega.unconsumed_count(), 20 - 10 - 3);
    let gamma = world.registry(SetName::Gamma(StationId::Bob)).unwrap();
    assert_eq!(gamma.unconsumed_count(), 10 - 3);
}

#[test]
fn honest_run_accepts_with_zero_residuals() {
    for seed in 0..20 {
        let (verdict, _) = ProtocolWorld::run(honest_config(100, 20, seed)).unwrap();
        assert!(verdict.accept, "seed {seed}: {:?}", verdict.reject_reasons);
        assert!(verdict.max_residual_s() < 1e-12);
        assert_eq!(verdict.error_rate, 0.0);
        for challenge in &verdict.challenges {
            assert!(challenge.correct);
            assert_eq!(challenge.sent_dibit, challenge.decoded_dibit);
        }
    }
}

#[test]
fn runs_are_byte_identical() {
    let run = |seed| {
        let (verdict, trace) = ProtocolWorld::run(honest_config(60, 14, seed)).unwrap();
        let mut text = serde_json::to_string(&verdict).unwrap();
        text.push_str(&ProtocolWorld::trace_to_jsonl(&trace).unwrap());
        text
    };
    assert_eq!(run(5), run(5));
    assert_ne!(run(5), run(6));
}

#[test]
fn trace_is_chronological_and_causal() {
    let (_, trace) = ProtocolWorld::run(honest_config(40, 8, 23)).unwrap();
    for pair in trace.windows(2) {
        assert!(pair[1].time_s >= pair[0].time_s - 1e-12);
        assert!(pair[1].seq > pair[0].seq);
    }
    let config = honest_config(40, 8, 23);
    let mut world = ProtocolWorld::setup(config).unwrap();
    world.entanglement_swap().unwrap();
    world.inform_partner().unwrap();
    world.generate_challenge().unwrap();
    world.teleport_challenge().unwrap();
    world.decode_at_device().unwrap();
    for message in world.messages() {
        assert!(message.arrive_time >= message.emit_time);
    }
}

#[test]
fn pair_conservation_across_the_run() {
    for seed in [1u64, 99, 12345] {
        let config = honest_config(40, 8, seed);
        let mut world = ProtocolWorld::setup(config).unwrap();
        let total = |w: &ProtocolWorld, set: SetName| {
            w.registry(set).map(|r| r.len()).unwrap_or(0)
        };
        world.entanglement_swap().unwrap();
        world.inform_partner().unwrap();
        world.generate_challenge().unwrap();
        world.teleport_challenge().unwrap();
        world.decode_at_device().unwrap();
        world.verify().unwrap();
        assert_eq!(total(&world, SetName::OmegaAC), 40);
        assert_eq!(total(&world, SetName::Lambda(StationId::Bob)), 20);
        assert_eq!(total(&world, SetName::LambdaPrime(StationId::Bob)), 20);
        assert_eq!(total(&world, SetName::Gamma(StationId::Bob)), 20);
        // Consumption tallies: swap used 20 Omega + all Lambda; teleports
        // used 4 Omega, 4 Gamma, 4 LambdaPrime.
        let omega = world.registry(SetName::OmegaAC).unwrap();
        assert_eq!(omega.unconsumed_count(), 40 - 20 - 4);
    }
}

#[test]
fn displaced_device_trips_the_timing_check() {
    let delta = 1_000.0;
    let mut config = honest_config(100, 20, 31);
    config.device_behavior = DeviceBehavior::Displaced {
        actual_position: [30_000.0 + delta, 0.0],
    };
    let (verdict, _) = ProtocolWorld::run(config).unwrap();
    assert!(!verdict.accept);
    assert_eq!(verdict.reject_reasons, vec!["timing".to_string()]);
    let expected = 2.0 * delta / SPEED_OF_LIGHT;
    assert!(
        (verdict.max_residual_s() - expected).abs() < 1e-12,
        "residual {} vs 2d/c {}",
        verdict.max_residual_s(),
        expected
    );
    // Decodes themselves are fine; only the timing gives the game away.
    assert_eq!(verdict.error_rate, 0.0);
}

#[test]
fn displacement_sweep_rejections_start_at_half_c_tolerance() {
    // With a 1 microsecond tolerance the first rejected displacement is just
    // above c * tol / 2, about 150 m.
    let threshold = SPEED_OF_LIGHT * 1e-6 / 2.0;
    for delta in [0.0, 50.0, 100.0, 149.0, 151.0, 200.0, 300.0] {
        let mut config = honest_config(40, 8, 37);
        config.device_behavior = if delta == 0.0 {
            DeviceBehavior::Honest
        } else {
            DeviceBehavior::Displaced {
                actual_position: [30_000.0 + delta, 0.0],
            }
        };
        let (verdict, _) = ProtocolWorld::run(config).unwrap();
        let should_reject = delta > threshold;
        assert_eq!(
            !verdict.accept, should_reject,
            "delta={delta}: verdict {:?}",
            verdict.reject_reasons
        );
    }
}

#[test]
fn cloner_passes_timing_but_fails_on_error_rate() {
    let mut config = honest_config(200, 100, 41);
    config.device_behavior = DeviceBehavior::Cloner {
        clone_fidelity: 0.7,
    };
    let (verdict, _) = ProtocolWorld::run(config).unwrap();
    assert!(!verdict.accept);
    assert_eq!(verdict.reject_reasons, vec!["error-rate".to_string()]);
    assert!(verdict.max_residual_s() < 1e-12);
    // 50 dibits at 30% error probability: the observed rate should be in the
    // broad vicinity of 0.3 (this seed gives a fixed value).
    assert!(verdict.error_rate > 0.1 && verdict.error_rate < 0.5);
    // Derived threshold: midpoint between honest error 0 and 1 - 0.7.
    assert!((verdict.error_rate_threshold - 0.15).abs() < 1e-12);
}

#[test]
fn cloner_error_rate_matches_the_binomial_oracle() {
    // Mean fraction of wrong dibits over many seeded runs must approach
    // 1 - 0.7, within a few standard errors.
    let runs = 2_000;
    let mut total_rate = 0.0;
    for seed in 0..runs {
        let mut config = honest_config(20, 8, seed);
        config.device_behavior = DeviceBehavior::Cloner {
            clone_fidelity: 0.7,
        };
        let (verdict, _) = ProtocolWorld::run(config).unwrap();
        total_rate += verdict.error_rate;
    }
    let mean = total_rate / runs as f64;
    // stderr of the mean ~ sqrt(0.3*0.7/4) / sqrt(2000) ~ 0.005
    assert!((mean - 0.3).abs() < 0.02, "mean error rate {mean}");
}

#[test]
fn decode_success_counts_match_binomial_anchors_at_f_09() {
    // Configure storage rates so the effective decode fidelity is 0.9 under
    // phase damping, then check P(all 3 correct) ~ 0.729 and
    // P(at least 2) ~ 0.972 over many seeds.
    let probe = {
        let mut config = honest_config(12, 6, 0);
        config.decoherence_channel = ChannelSpec::PhaseDamping { p: 0.0 };
        let mut world = ProtocolWorld::setup(config).unwrap();
        world.entanglement_swap().unwrap();
        world.inform_partner().unwrap();
        world.generate_challenge().unwrap();
        world.teleport_challenge().unwrap();
        world.decode_at_device().unwrap();
        *world.decode_times().values().next().unwrap()
    };
    // Phase damping: F = (1 + (1-p)^2) / 2 = 0.9 at p = 1 - sqrt(0.8);
    // p = 1 - exp(-2 gamma t) gives gamma = ln(1.25) / (4 t).
    let gamma = (1.25f64).ln() / (4.0 * probe);

    let runs = 10_000u64;
    let mut all_three = 0u32;
    let mut at_least_two = 0u32;
    for seed in 0..runs {
        let mut config = honest_config(12, 6, seed);
        config.storage_rates = BTreeMap::from([
            (StationId::Alice, gamma),
            (StationId::Bob, gamma),
        ]);
        config.error_rate_threshold = Some(1.0); // observe, never reject
        let (verdict, _) = ProtocolWorld::run(config).unwrap();
        let correct = verdict.challenges.iter().filter(|c| c.correct).count();
        if correct == 3 {
            all_three += 1;
        }
        if correct >= 2 {
            at_least_two += 1;
        }
    }
    let p3 = all_three as f64 / runs as f64;
    let p2 = at_least_two as f64 / runs as f64;
    // Binomial oracle: 0.9^3 = 0.729 (sigma ~ 0.0044), tail = 0.972
    // (sigma ~ 0.0016); allow 4 sigma.
    assert!((p3 - 0.729).abs() < 0.018, "P(all 3) = {p3}");
    assert!((p2 - 0.972).abs() < 0.0066, "P(>=2) = {p2}");
}

#[test]
fn honest_and_cloner_error_rates_separate() {
    // Honest decodes at F_eff = 0.9 against a cloner capped at 0.7 (composite
    // success 0.63), over K/2 = 50 dibits per run. Per paired seed the
    // cloner's observed error rate must exceed the honest one in at least
    // 99% of runs, and the aggregate means must sit far more than four
    // combined standard errors apart.
    let probe = {
        let mut world = ProtocolWorld::setup(honest_config(200, 100, 0)).unwrap();
        world.entanglement_swap().unwrap();
        world.inform_partner().unwrap();
        world.generate_challenge().unwrap();
        world.teleport_challenge().unwrap();
        world.decode_at_device().unwrap();
        *world.decode_times().values().next().unwrap()
    };
    let gamma = (1.25f64).ln() / (4.0 * probe);
    let runs = 1_000u64;
    let mut separated = 0u32;
    let (mut honest_sum, mut clone_sum) = (0.0f64, 0.0f64);
    let (mut honest_sq, mut clone_sq) = (0.0f64, 0.0f64);
    for seed in 0..runs {
        let mut honest = honest_config(200, 100, seed);
        honest.storage_rates =
            BTreeMap::from([(StationId::Alice, gamma), (StationId::Bob, gamma)]);
        honest.error_rate_threshold = Some(1.0);
        let (hv, _) = ProtocolWorld::run(honest.clone()).unwrap();

        let mut cloner = honest;
        cloner.device_behavior = DeviceBehavior::Cloner {
            clone_fidelity: 0.7,
        };
        let (cv, _) = ProtocolWorld::run(cloner).unwrap();

        if cv.error_rate > hv.error_rate {
            separated += 1;
        }
        honest_sum += hv.error_rate;
        honest_sq += hv.error_rate * hv.error_rate;
        clone_sum += cv.error_rate;
        clone_sq += cv.error_rate * cv.error_rate;
    }
    let frac = separated as f64 / runs as f64;
    assert!(frac >= 0.99, "separated in {frac} of runs");

    let n = runs as f64;
    let honest_mean = honest_sum / n;
    let clone_mean = clone_sum / n;
    let honest_se = ((honest_sq / n - honest_mean * honest_mean) / n).sqrt();
    let clone_se = ((clone_sq / n - clone_mean * clone_mean) / n).sqrt();
    assert!(
        clone_mean - honest_mean > 4.0 * (honest_se + clone_se),
        "means {honest_mean} vs {clone_mean}"
    );
}

#[test]
fn two_dimensional_honest_run_accepts() {
    let geometry = Geometry {
        dimension: 2,
        stations: vec![
            StationSite {
                id: StationId::Alice,
                position: [0.0, 0.0],
            },
            StationSite {
                id: StationId::Bob,
                position: [100_000.0, 0.0],
            },
            StationSite {
                id: StationId::Dan,
                position: [50_000.0, 90_000.0],
            },
        ],
        device: [40_000.0, 20_000.0],
    };
    let config = ScenarioConfig {
        geometry,
        pair_count: 80,
        challenge_bits: 16,
        decoherence_channel: ChannelSpec::PhaseDamping { p: 0.0 },
        storage_rates: BTreeMap::new(),
        device_behavior: DeviceBehavior::Honest,
        timing_tolerance: 1e-6,
        error_rate_threshold: None,
        seed: 77,
    };
    let (verdict, _) = ProtocolWorld::run(config.clone()).unwrap();
    assert!(verdict.accept, "{:?}", verdict.reject_reasons);
    assert!(verdict.max_residual_s() < 1e-12);
    assert_eq!(verdict.stations.len(), 3);
    assert_eq!(verdict.challenges.len(), 8);

    // Displace the device; at least one station must see a residual at or
    // above the displacement bound 2*delta/c... in 2D the residual depends
    // on direction, but it must trip a 1 us tolerance for a 1 km shift.
    let mut attacked = config;
    attacked.device_behavior = DeviceBehavior::Displaced {
        actual_position: [41_000.0, 20_000.0],
    };
    let (verdict, _) = ProtocolWorld::run(attacked).unwrap();
    assert!(!verdict.accept);
    assert!(verdict.reject_reasons.contains(&"timing".to_string()));
}

#[test]
fn general_z_decoherence_drives_decode_errors() {
    // generalZ takes the storage age as its channel time directly.
    let mut config = honest_config(40, 20, 91);
    let probe = {
        let mut world = ProtocolWorld::setup(config.clone()).unwrap();
        world.entanglement_swap().unwrap();
        world.inform_partner().unwrap();
        world.generate_challenge().unwrap();
        world.teleport_challenge().unwrap();
        world.decode_at_device().unwrap();
        *world.decode_times().values().next().unwrap()
    };
    // Choose gamma2 so phase-type damping at the decode age gives F ~ 0.75.
    let p_target = 1.0 - 0.5f64.sqrt(); // F = (1 + (1-p)^2)/2 = 0.75
    let gamma2 = -(1.0 - p_target).ln() / probe;
    config.decoherence_channel = ChannelSpec::GeneralZ {
        gamma1: 0.0,
        gamma2,
        mu: 0.0,
        omega: 0.0,
        t: 0.0,
    };
    config.error_rate_threshold = Some(1.0);
    let mut wrong = 0usize;
    let mut total = 0usize;
    for seed in 0..2_000u64 {
        config.seed = seed;
        let (verdict, _) = ProtocolWorld::run(config.clone()).unwrap();
        wrong += verdict.challenges.iter().filter(|c| !c.correct).count();
        total += verdict.challenges.len();
    }
    let rate = wrong as f64 / total as f64;
    assert!((rate - 0.25).abs() < 0.02, "error rate {rate}");
}
