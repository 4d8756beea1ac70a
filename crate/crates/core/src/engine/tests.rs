use super::*;
use crate::network::{Area, BsParams, ChannelModel, Position, RadioParams};

/// MBS at the center, one SBS at (100, 100) with `n_ue` UEs huddled around it.
fn one_sbs_topology(n_ue: usize) -> Topology {
    let bs = vec![
        BsParams::new(0, Position::new(250.0, 250.0), &RadioParams::default_mbs()),
        BsParams::new(1, Position::new(100.0, 100.0), &RadioParams::default_sbs()),
    ];
    let ue = (0..n_ue)
        .map(|i| Position::new(100.0 + i as f64, 103.0))
        .collect();
    Topology::new(
        Area::default(),
        bs,
        ue,
        crate::units::dbm_to_watts(-104.0),
        ChannelModel::default(),
    )
    .unwrap()
}

fn one_sbs_cfg(policy: PolicySpec) -> ScenarioConfig {
    ScenarioConfig {
        horizon_periods: 1,
        placement: PlacementParams {
            n_sbs: 1,
            n_ue: 5,
            ..PlacementParams::default()
        },
        policy,
        ..ScenarioConfig::default()
    }
}

fn run_one(cfg: &ScenarioConfig, topo: &Topology, harvest: &HarvestTrace) -> PeriodResult {
    let mut energy = EnergyState::new(topo.n_sbs(), cfg.initial_energy, cfg.capacity).unwrap();
    let mut rngs: Vec<SimRng> = (1..=topo.n_sbs())
        .map(|j| Streams::new(9, 0).policy(j))
        .collect();
    run_period(cfg, topo, &mut energy, harvest, &mut rngs, 0).unwrap()
}

#[test]
fn immediate_off_costs_the_buy_price() {
    let cfg = one_sbs_cfg(PolicySpec::Fixed(0.0));
    let topo = one_sbs_topology(5);
    let h = HarvestTrace::zeros(cfg.dt, 1, cfg.slots_per_period());
    let r = run_one(&cfg, &topo, &h);
    let s = &r.sbs[0];
    assert!(s.used);
    assert!(s.buy_price > 0.0);
    assert_eq!(r.total_cost, s.buy_price);
    assert_eq!(s.on_time, 0.0);
    assert!(s.decision.bought);
    assert_eq!(s.decision.off_time, Some(0.0));
}

#[test]
fn never_off_pays_rent_for_the_period() {
    let cfg = ScenarioConfig {
        initial_energy: 100.0,
        ..one_sbs_cfg(PolicySpec::Fixed(10.0))
    };
    let topo = one_sbs_topology(5);
    let h = HarvestTrace::zeros(cfg.dt, 1, cfg.slots_per_period());
    let r = run_one(&cfg, &topo, &h);
    let s = &r.sbs[0];
    assert!(!s.decision.bought);
    assert_eq!(s.depleted_at, None);
    assert!((r.total_cost - s.rent_price * 10.0).abs() < 1e-12 * r.total_cost);
    assert!((s.on_time - 10.0).abs() < 1e-9);
}

#[test]
fn depletion_after_exactly_ten_slots() {
    // q = 1 makes the draw exactly 10 W; 12.5 J at 1/8 s slots lasts 10 slots.
    let cfg = ScenarioConfig {
        dt: 0.125,
        initial_energy: 12.5,
        power: PowerModelParams { q: 1.0 },
        ..one_sbs_cfg(PolicySpec::Fixed(10.0))
    };
    let topo = one_sbs_topology(5);
    let h = HarvestTrace::zeros(cfg.dt, 1, cfg.slots_per_period());
    let r = run_one(&cfg, &topo, &h);
    let s = &r.sbs[0];
    assert_eq!(s.frozen_power, 10.0);
    assert_eq!(s.depleted_at, Some(1.25));
    assert_eq!(s.on_time, 1.25);
    assert!(!s.decision.bought);
    assert_eq!(s.rent_cost, s.rent_price * (10.0 * 0.125));
    assert_eq!(s.energy_end, 0.0);
    assert_eq!(s.switch_count, 1);
}

#[test]
fn energy_carries_over_the_boundary() {
    let cfg = ScenarioConfig {
        horizon_periods: 2,
        ..one_sbs_cfg(PolicySpec::Fixed(0.0))
    };
    let topo = one_sbs_topology(5);
    let mut h = HarvestTrace::zeros(cfg.dt, 1, cfg.total_slots());
    for s in 0..cfg.total_slots() {
        h.set(s, 0, 0.2 * (s % 3) as f64);
    }
    let (periods, _) = run_horizon(&cfg, &topo, &h, &Streams::new(1, 0), false).unwrap();
    let first: f64 = (0..100).map(|s| h.get(s, 0)).sum();
    let p2 = &periods[1].sbs[0];
    assert!((p2.energy_start - (cfg.initial_energy + first).min(cfg.capacity)).abs() < 1e-9);
    assert_eq!(periods[0].sbs[0].energy_harvested, first);
}

#[test]
fn unused_sbs_stays_off_for_free() {
    // Second SBS far from every UE never wins an association.
    let mut bs = one_sbs_topology(5).base_stations().to_vec();
    bs.push(BsParams::new(
        2,
        Position::new(480.0, 480.0),
        &RadioParams::default_sbs(),
    ));
    let users = one_sbs_topology(5).users().to_vec();
    let topo = Topology::new(
        Area::default(),
        bs,
        users,
        crate::units::dbm_to_watts(-104.0),
        ChannelModel::default(),
    )
    .unwrap();
    let cfg = ScenarioConfig {
        placement: PlacementParams {
            n_sbs: 2,
            ..one_sbs_cfg(PolicySpec::Doa).placement
        },
        ..one_sbs_cfg(PolicySpec::Doa)
    };
    let h = HarvestTrace::zeros(cfg.dt, 2, cfg.slots_per_period());
    let r = run_one(&cfg, &topo, &h);
    let idle = &r.sbs[1];
    assert!(!idle.used);
    assert_eq!(idle.control, SbsControl::Idle);
    assert_eq!(idle.cost(), 0.0);
    assert_eq!(idle.on_time, 0.0);
    assert_eq!(idle.switch_count, 0);
    assert_eq!(idle.buy_price, 0.0);
    assert_eq!(r.unused_sbs_fraction, 0.5);
}

#[test]
fn step_zero_rent_matches_frozen_price() {
    let cfg = ScenarioConfig {
        horizon_periods: 1,
        ..ScenarioConfig::default()
    };
    for index in 0..20 {
        let rep = simulate_with(
            &cfg,
            index,
            &RunOptions {
                harvest: None,
                trace: true,
            },
        )
        .unwrap();
        let p = &rep.periods[0];
        if p.unused_count() > 0 {
            continue;
        }
        for s in &p.sbs {
            let row = rep
                .trace
                .iter()
                .find(|r| r.t == 0.0 && r.sbs_id == s.sbs)
                .unwrap();
            if row.sigma == 1 {
                assert!((row.rent_rate - s.rent_price).abs() <= 1e-12 * s.rent_price);
            }
        }
    }
}

#[test]
fn rent_is_zero_without_weights() {
    let cfg = ScenarioConfig {
        horizon_periods: 1,
        weights: CostWeights {
            alpha_d: 0.0,
            alpha_p: 0.0,
            alpha_b: 0.05,
        },
        ..ScenarioConfig::default()
    };
    let rep = simulate_with(
        &cfg,
        0,
        &RunOptions {
            harvest: None,
            trace: true,
        },
    )
    .unwrap();
    assert!(rep.trace.iter().all(|r| r.rent_rate == 0.0));
    assert_eq!(rep.total_cost(), 0.0);
}

#[test]
fn trace_has_one_row_per_slot_and_sbs() {
    let cfg = ScenarioConfig::default();
    let rep = simulate_with(
        &cfg,
        3,
        &RunOptions {
            harvest: None,
            trace: true,
        },
    )
    .unwrap();
    assert_eq!(rep.trace.len(), cfg.total_slots() * cfg.placement.n_sbs);
}

#[test]
fn same_seed_same_results() {
    let cfg = ScenarioConfig::default();
    let a = simulate(&cfg, 4).unwrap();
    let b = simulate(&cfg, 4).unwrap();
    assert_eq!(a, b);
    let c = simulate(&ScenarioConfig { seed: 2, ..cfg }, 4).unwrap();
    assert_ne!(a.periods, c.periods);
}

#[test]
fn commit_once_rules_switch_at_most_once() {
    for policy in [PolicySpec::Doa, PolicySpec::Roa, PolicySpec::Fixed(7.0)] {
        let cfg = ScenarioConfig {
            policy,
            ..ScenarioConfig::default()
        };
        for i in 0..10 {
            for p in simulate(&cfg, i).unwrap().periods {
                assert!(p.sbs.iter().all(|s| s.switch_count <= 1));
            }
        }
    }
}

#[test]
fn frozen_run_decomposes_per_sbs() {
    for policy in [
        PolicySpec::Roa,
        PolicySpec::Adaptive,
        PolicySpec::Threshold(50.0),
    ] {
        let cfg = ScenarioConfig {
            policy,
            accounting: Accounting::Frozen,
            initial_energy: 20.0,
            ..ScenarioConfig::default()
        };
        let rep = simulate(&cfg, 7).unwrap();
        let n = cfg.slots_per_period();
        for p in &rep.periods {
            let mut joint = 0.0;
            for s in &p.sbs {
                let h: Vec<f64> = (0..n)
                    .map(|k| rep.harvest.get(p.index * n + k, s.sbs - 1))
                    .collect();
                let out = run_subproblem(&Subproblem {
                    control: s.control,
                    rent: s.rent_price,
                    buy: s.buy_price,
                    power: s.frozen_power,
                    stored: s.energy_start,
                    capacity: cfg.capacity,
                    dt: cfg.dt,
                    rounding: cfg.off_rounding,
                    precedence: cfg.off_precedence,
                    harvest: &h,
                })
                .unwrap();
                assert!((out.cost - s.cost()).abs() < 1e-9);
                joint += out.cost;
            }
            assert!((joint - p.total_cost).abs() < 1e-9);
        }
    }
}

#[test]
fn rejects_non_dividing_slot() {
    let cfg = ScenarioConfig {
        dt: 0.3,
        ..ScenarioConfig::default()
    };
    match cfg.validate() {
        Err(EngineError::InvalidConfig { field, .. }) => assert_eq!(field, "dt"),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn tx_schedule_changes_topology_mid_period() {
    let cfg = ScenarioConfig {
        horizon_periods: 1,
        policy: PolicySpec::Adaptive,
        sbs_tx_schedule: vec![
            TxChange {
                at: 0.0,
                watts: 0.2,
            },
            TxChange {
                at: 3.0,
                watts: 0.5,
            },
        ],
        ..one_sbs_cfg(PolicySpec::Adaptive)
    };
    let topo = one_sbs_topology(5);
    let plan = plan_period(&cfg, &topo, 0).unwrap();
    assert_eq!(plan.epochs.len(), 2);
    assert_eq!(plan.epochs[1].from_slot, 30);
    assert_eq!(plan.epochs[1].topo.bs(1).tx_power, 0.5);
}
