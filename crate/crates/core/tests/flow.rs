//! Flow simulator against independent Brownian oracles.

use coalesce::flow::simulate_point_measures;
use coalesce::kernels::coalescence_probability;
use coalesce::stats;
use coalesce::{CoalescenceMode, ParticleSystem, ReplicaStream, SimConfig};

/// Hitting probability of 0 within `dt` for a gap with variance rate 2,
/// by the reflection principle. Does not use the bridge formula.
fn one_step_merge_oracle(d0: f64, dt: f64) -> f64 {
    libm::erfc(d0 / (2.0 * dt.sqrt()))
}

#[test]
fn one_step_merge_rate_matches_reflection_principle() {
    let dt = 1e-2;
    let reps = 40_000u32;
    for &d0 in &[0.05, 0.1, 0.2] {
        let mut merged = 0u32;
        for r in 0..reps {
            let mut ps = ParticleSystem::from_positions(vec![0.0, d0], dt, CoalescenceMode::Bridge).unwrap();
            ps.step(dt, &ReplicaStream::new(17, r));
            merged += (ps.len() == 1) as u32;
        }
        let p = merged as f64 / reps as f64;
        let expect = one_step_merge_oracle(d0, dt);
        let se = (expect * (1.0 - expect) / reps as f64).sqrt();
        assert!((p - expect).abs() < 4.0 * se, "d0 {d0}: {p} vs {expect} (se {se})");
    }
}

#[test]
fn order_merge_undercounts_coalescence() {
    // without the bridge correction, crossings inside a step go unseen
    let dt = 1e-2;
    let d0 = 0.1;
    let reps = 20_000u32;
    let mut merged = 0u32;
    for r in 0..reps {
        let mut ps = ParticleSystem::from_positions(vec![0.0, d0], dt, CoalescenceMode::OrderMerge).unwrap();
        ps.step(dt, &ReplicaStream::new(18, r));
        merged += (ps.len() == 1) as u32;
    }
    let p = merged as f64 / reps as f64;
    let crossing = 0.5 * libm::erfc(d0 / (2.0 * dt.sqrt()));
    assert!((p - crossing).abs() < 0.01, "{p} vs {crossing}");
    assert!(p < one_step_merge_oracle(d0, dt) - 0.05);
}

#[test]
fn single_particle_marginal_is_gaussian() {
    let dt = 1e-3;
    let xs: Vec<f64> = (0..2000u32)
        .map(|r| {
            let mut ps = ParticleSystem::from_positions(vec![0.3], dt, CoalescenceMode::Bridge).unwrap();
            ps.run_to(1.0, &ReplicaStream::new(19, r)).unwrap();
            ps.positions()[0]
        })
        .collect();
    assert!((stats::mean(&xs) - 0.3).abs() < 4.0 * (1.0f64 / 2000.0).sqrt());
    assert!((stats::variance(&xs) - 1.0).abs() < 0.1);
    assert!(stats::ks_normal(&xs, 0.3, 1.0) < 0.04);
}

#[test]
fn pair_coalescence_by_time_s() {
    let dt = 1e-3;
    let (gap, s) = (0.8, 0.5);
    let reps = 3000u32;
    let merged = (0..reps)
        .filter(|&r| {
            let mut ps = ParticleSystem::from_positions(vec![0.0, gap], dt, CoalescenceMode::Bridge).unwrap();
            ps.run_to(s, &ReplicaStream::new(20, r)).unwrap();
            ps.len() == 1
        })
        .count();
    let p = merged as f64 / reps as f64;
    let expect = coalescence_probability(s, gap);
    let se = (expect * (1.0 - expect) / reps as f64).sqrt();
    assert!((p - expect).abs() < 4.0 * se, "{p} vs {expect}");
}

#[test]
fn replicas_are_reproducible_and_distinct() {
    let cfg = SimConfig::new((0.0, 8.0), vec![0.5, 1.0], 21);
    let a = simulate_point_measures(&cfg, 3).unwrap();
    let b = simulate_point_measures(&cfg, 3).unwrap();
    let c = simulate_point_measures(&cfg, 4).unwrap();
    assert_eq!(a, b);
    assert_ne!(a[1].atoms(), c[1].atoms());
    // coalescence only removes atoms
    assert!(a[1].len() <= a[0].len() + 2);
}

#[test]
fn web_maps_compose_across_checkpoints() {
    let cfg = SimConfig::new((0.0, 6.0), vec![0.5, 1.0, 1.5], 22);
    let rng = ReplicaStream::new(cfg.seed, 0);
    let mut ps = ParticleSystem::init_grid(&cfg).unwrap();
    let mut states = Vec::new();
    for &t in &cfg.checkpoints {
        ps.run_to(t, &rng).unwrap();
        states.push(ps.clone());
    }
    let w01 = states[0].web_map_to(&states[1], cfg.window).unwrap();
    let w12 = states[1].web_map_to(&states[2], (f64::NEG_INFINITY, f64::INFINITY)).unwrap();
    let w02 = states[0].web_map_to(&states[2], cfg.window).unwrap();
    let composed = w01.compose(&w12).unwrap();
    assert_eq!(composed.image(), w02.image());
    assert!(w02.is_monotone());
    assert!(w02.cluster_count() <= w01.cluster_count());
}
