use ehsched::engine::{simulate, simulate_with, RunOptions};
use ehsched::network::PlacementParams;
use ehsched::{Accounting, CostWeights, HarvestParams, PolicySpec, Replication, ScenarioConfig};
use proptest::prelude::*;
use rayon::prelude::*;

fn policy() -> impl Strategy<Value = PolicySpec> {
    prop_oneof![
        Just(PolicySpec::Doa),
        Just(PolicySpec::Roa),
        Just(PolicySpec::Adaptive),
        (0.0f64..=10.0).prop_map(PolicySpec::Fixed),
        (0.0f64..=100.0).prop_map(PolicySpec::Threshold),
    ]
}

prop_compose! {
    fn config()(
        policy in policy(),
        dt in prop::sample::select(vec![0.1, 0.2, 0.5]),
        n_sbs in 1usize..6,
        n_ue in 1usize..30,
        rate in 0.0f64..40.0,
        initial_energy in 0.0f64..=100.0,
        alpha in (0.0f64..0.1, 0.0f64..0.1, 0.0f64..0.1),
        frozen in any::<bool>(),
        seed in any::<u64>(),
    ) -> ScenarioConfig {
        ScenarioConfig {
            dt,
            placement: PlacementParams { n_sbs, n_ue, ..PlacementParams::default() },
            harvest: HarvestParams { rate, ..HarvestParams::default() },
            weights: CostWeights { alpha_d: alpha.0, alpha_p: alpha.1, alpha_b: alpha.2 },
            initial_energy,
            seed,
            policy,
            accounting: if frozen { Accounting::Frozen } else { Accounting::Live },
            ..ScenarioConfig::default()
        }
    }
}

fn traced(cfg: &ScenarioConfig, index: u64) -> Replication {
    simulate_with(
        cfg,
        index,
        &RunOptions {
            harvest: None,
            trace: true,
        },
    )
    .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn energy_is_conserved(cfg in config(), index in 0u64..100) {
        let rep = simulate(&cfg, index).unwrap();
        for p in &rep.periods {
            for s in &p.sbs {
                prop_assert!(s.energy_consumed <= s.energy_start + s.energy_harvested + 1e-9);
                let balance = (s.energy_start + s.energy_harvested - s.energy_consumed).min(cfg.capacity);
                prop_assert!(s.energy_end <= balance + 1e-9);
            }
        }
    }

    #[test]
    fn off_stations_only_gain_energy(cfg in config(), index in 0u64..100) {
        let rep = traced(&cfg, index);
        let n_sbs = cfg.placement.n_sbs;
        for pair in rep.trace.chunks(n_sbs).collect::<Vec<_>>().windows(2) {
            for (now, next) in pair[0].iter().zip(pair[1]) {
                if now.sigma == 0 {
                    prop_assert!(next.energy >= now.energy, "{now:?} -> {next:?}");
                }
            }
        }
    }

    #[test]
    fn depleted_stations_stay_off(cfg in config(), index in 0u64..100) {
        let rep = traced(&cfg, index);
        for p in &rep.periods {
            for s in &p.sbs {
                let Some(d) = s.depleted_at else { continue };
                let after = rep.trace.iter().filter(|r| {
                    r.sbs_id == s.sbs && r.t >= p.start + d - 1e-9 && r.t < p.start + cfg.period - 1e-9
                });
                for row in after {
                    prop_assert_eq!(row.sigma, 0);
                }
            }
        }
    }

    #[test]
    fn rent_stops_at_the_first_of_off_depletion_and_period_end(cfg in config(), index in 0u64..100) {
        let rep = simulate(&cfg, index).unwrap();
        for p in &rep.periods {
            for s in &p.sbs {
                let mut bound = s.depleted_at.unwrap_or(cfg.period);
                if let (true, Some(t)) = (s.switch_count <= 1, s.decision.off_time) {
                    bound = bound.min(t);
                }
                prop_assert!(s.on_time <= bound + 1e-9, "{s:?}");
                if cfg.accounting == Accounting::Frozen {
                    let expected = s.rent_price * s.on_time;
                    prop_assert!((s.rent_cost - expected).abs() <= 1e-9 * expected.max(1.0));
                }
            }
        }
    }

    #[test]
    fn totals_add_up_per_station(cfg in config(), index in 0u64..100) {
        let rep = simulate(&cfg, index).unwrap();
        for p in &rep.periods {
            let sum = p.sbs.iter().fold(0.0, |acc, s| acc + s.cost());
            prop_assert_eq!(p.total_cost, sum);
        }
    }
}

#[test]
fn parallel_and_sequential_runs_agree() {
    let cfg = ScenarioConfig {
        policy: PolicySpec::Roa,
        ..ScenarioConfig::default()
    };
    let sequential: Vec<_> = (0..32).map(|i| simulate(&cfg, i).unwrap()).collect();
    let parallel: Vec<_> = (0..32usize)
        .into_par_iter()
        .map(|i| simulate(&cfg, 31 - i as u64).unwrap())
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    assert_eq!(sequential, parallel);
}
