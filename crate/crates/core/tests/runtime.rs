use proptest::prelude::*;

use schwarz_core::config::{CoarseLayout, IsyncMode, Scheme, SolverConfig, Zeta};
use schwarz_core::decomposition::{partition_box, CoarseKind};
use schwarz_core::problem::{assemble_poisson, PoissonSpec};
use schwarz_core::runtime::{simulate, ActiveSetRule, DelaySchedule, SimOptions};
use schwarz_core::schwarz::SchwarzSetup;
use schwarz_core::sync::solve_sync;

fn setup(cells: [usize; 3], procs: [usize; 3], config: &SolverConfig) -> SchwarzSetup {
    let (a, b) = assemble_poisson(&PoissonSpec::new(cells)).unwrap();
    let d = partition_box(cells, procs, 1).unwrap();
    SchwarzSetup::new(a, b, d, config, CoarseKind::Aggregation).unwrap()
}

#[derive(Debug, Clone)]
struct Scenario {
    max_delay: u64,
    seed: u64,
    slowdown: Vec<f64>,
    activity: Option<f64>,
    layout: CoarseLayout,
}

impl Scenario {
    fn schedule(&self) -> DelaySchedule {
        let schedule = DelaySchedule::random(self.max_delay, self.seed).with_slowdown(self.slowdown.clone());
        match self.activity {
            Some(activity) => schedule.with_active(ActiveSetRule::Random { activity, seed: self.seed }),
            None => schedule,
        }
    }
}

fn scenarios() -> impl Strategy<Value = Scenario> {
    (
        0u64..=8,
        any::<u64>(),
        prop::collection::vec(prop_oneof![Just(1.0), 1.0f64..4.0], 4),
        prop::option::of(0.3f64..1.0),
        prop_oneof![Just(CoarseLayout::Replicated), Just(CoarseLayout::Centralized)],
    )
        .prop_map(|(max_delay, seed, slowdown, activity, layout)| Scenario { max_delay, seed, slowdown, activity, layout })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn bounded_delay_runs_converge(scenario in scenarios()) {
        let config = SolverConfig { layout: scenario.layout, isync: IsyncMode::XTau, ..SolverConfig::default() };
        let s = setup([6, 6, 4], [2, 2, 1], &config);
        let schedule = scenario.schedule();
        let out = simulate(&s, &config, &schedule, SimOptions::default()).unwrap();
        prop_assert!(out.report.converged, "{:?}", out.stops);
        prop_assert!(out.report.final_residual <= 10.0 * config.epsilon);
        // every eligible process keeps getting turns
        prop_assert!(out.max_skipped <= schedule.skip_bound);
        prop_assert!(out.report.processes.iter().all(|p| p.iterations > 0));
    }

    #[test]
    fn corrections_per_solution_respect_zeta(scenario in scenarios(), zeta in 1u32..=4) {
        let config = SolverConfig { zeta: Zeta::Finite(zeta), layout: scenario.layout, ..SolverConfig::default() };
        let s = setup([6, 6, 4], [2, 2, 1], &config);
        let out = simulate(&s, &config, &scenario.schedule(), SimOptions::default()).unwrap();
        for p in &out.report.processes {
            prop_assert!(p.max_corrections_per_install <= zeta);
            prop_assert!(p.corrections as u64 <= u64::from(zeta) * p.coarse_installs as u64);
        }
    }

    #[test]
    fn coarse_right_hand_sides_come_from_one_snapshot(scenario in scenarios()) {
        let config = SolverConfig { layout: scenario.layout, ..SolverConfig::default() };
        let s = setup([6, 6, 4], [2, 2, 1], &config);
        let options = SimOptions { record_coarse: true, ..SimOptions::default() };
        let out = simulate(&s, &config, &scenario.schedule(), options).unwrap();
        let restriction = s.coarse().unwrap().space().restriction();
        prop_assert!(!out.coarse_solves.is_empty());
        for record in &out.coarse_solves {
            let mut parts: Vec<_> = out.snapshots.iter().filter(|snap| snap.epoch == record.epoch).collect();
            parts.sort_by_key(|snap| snap.rank);
            prop_assert_eq!(parts.len(), s.num_subdomains());
            let locals: Vec<Vec<f64>> = parts.iter().map(|snap| snap.x.clone()).collect();
            let x_bar = s.decomposition().assemble(&locals);
            let expected = restriction.spmv(&s.matrix().residual(s.rhs(), &x_bar).unwrap()).unwrap();
            for (u, v) in record.rhs.iter().zip(&expected) {
                prop_assert!((u - v).abs() <= 1e-13 * v.abs().max(1.0), "{u} vs {v}");
            }
        }
    }

    #[test]
    fn seeded_runs_repeat_exactly(scenario in scenarios(), scheme in prop_oneof![Just(Scheme::OneLevel), Just(Scheme::TwoLevelMult), Just(Scheme::TwoLevelAdd)]) {
        let config = SolverConfig { scheme, layout: scenario.layout, ..SolverConfig::default() };
        let s = setup([6, 6, 4], [2, 2, 1], &config);
        let options = SimOptions { trace: true, ..SimOptions::default() };
        let a = simulate(&s, &config, &scenario.schedule(), options).unwrap();
        let b = simulate(&s, &config, &scenario.schedule(), options).unwrap();
        prop_assert_eq!(a.report.to_json().unwrap(), b.report.to_json().unwrap());
        prop_assert_eq!(a.trace, b.trace);
    }

    #[test]
    fn zero_delay_reproduces_the_synchronous_iterates(
        scheme in prop_oneof![Just(Scheme::OneLevel), Just(Scheme::TwoLevelMult), Just(Scheme::TwoLevelAdd)],
        theta in prop_oneof![Just(1.0), Just(0.5)],
        procs in prop_oneof![Just([2, 1, 1]), Just([2, 2, 1]), Just([2, 2, 2])],
    ) {
        let config = SolverConfig { scheme, theta, ..SolverConfig::default() };
        let s = setup([6, 6, 6], procs, &config);
        let sync = solve_sync(&s, &config, true).unwrap();
        let options = SimOptions { record_iterates: true, ..SimOptions::default() };
        let sim = simulate(&s, &config, &DelaySchedule::zero(), options).unwrap();
        let sim_iterates = sim.iterates.unwrap();
        for (k, step) in sync.iterates.unwrap().iter().enumerate() {
            for (rank, local) in step.iter().enumerate() {
                prop_assert_eq!(local, &sim_iterates[rank][k]);
            }
        }
        prop_assert_eq!(sim.report.residual_history, sync.report.residual_history);
    }
}
