use haloforge::exec::{ordered_reduce, ReduceOp};
use haloforge::{
    run, ExecConfig, ExecError, GlobalGrid, InitialCondition, Mode, ModelKind, Problem, RankBackend, Schedule,
    Simulation,
};
use proptest::prelude::*;

fn advection(n: usize) -> Problem {
    let model = ModelKind::Advection { velocity: [1.0, 1.0, 1.0] };
    Problem::new(model, GlobalGrid::cube(n).unwrap(), InitialCondition::Sine, 0.4).unwrap()
}

fn mhd(n: usize) -> Problem {
    let model = ModelKind::IdealMhd { gamma: 5.0 / 3.0 };
    Problem::new(model, GlobalGrid::cube(n).unwrap(), InitialCondition::Smooth, 0.4).unwrap()
}

#[test]
fn listed_rank_thread_pairs_agree_bitwise() {
    let p = advection(32);
    let reference = run(p.clone(), ExecConfig::new(1, 1), 20).unwrap().field;
    for (ranks, threads) in [(2, 2), (4, 1), (8, 2)] {
        let got = run(p.clone(), ExecConfig::new(ranks, threads), 20).unwrap().field;
        assert_eq!(got.to_le_bytes(), reference.to_le_bytes(), "({ranks}, {threads})");
    }
}

#[test]
fn stepping_in_pieces_matches_one_call() {
    let p = mhd(16);
    let whole = run(p.clone(), ExecConfig::new(2, 2), 6).unwrap();
    let mut sim = Simulation::new(p, ExecConfig::new(2, 2)).unwrap();
    sim.advance(2).unwrap();
    sim.advance(4).unwrap();
    assert_eq!(sim.steps_taken(), 6);
    assert_eq!(sim.time(), whole.time);
    assert_eq!(sim.assemble(), whole.field);
}

#[test]
fn every_step_records_the_four_regions() {
    let out = run(mhd(16), ExecConfig::new(2, 2), 3).unwrap();
    for name in ["halo_exchange", "reconstruct_flux", "update", "reduce"] {
        let r = out.metrics.record(name).unwrap_or_else(|| panic!("{name} missing"));
        assert!(r.count >= 3, "{name} recorded {} times", r.count);
    }
    assert_eq!(out.metrics.steps, 3);
    assert!(out.metrics.sec_per_iter > 0.0);
}

#[test]
fn impossible_layouts_are_rejected_before_running() {
    assert!(matches!(
        Simulation::new(advection(16), ExecConfig::new(64, 1)),
        Err(ExecError::Grid(_))
    ));
    assert!(matches!(
        Simulation::new(advection(16), ExecConfig::new(0, 1)),
        Err(ExecError::Config(_))
    ));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn any_configuration_matches_the_serial_run(
        ranks in prop::sample::select(vec![1usize, 2, 3, 4, 6, 8]),
        threads in 1usize..5,
        guided in any::<bool>(),
        min_chunk in 1usize..4,
        baseline in any::<bool>(),
        concurrent in any::<bool>(),
    ) {
        let p = advection(24);
        let reference = run(p.clone(), ExecConfig::new(1, 1), 3).unwrap().field;
        let config = ExecConfig {
            ranks,
            threads_per_rank: threads,
            schedule: if guided { Schedule::Guided { min_chunk } } else { Schedule::Static },
            mode: if baseline { Mode::Baseline } else { Mode::Optimized },
            backend: if concurrent { RankBackend::Concurrent } else { RankBackend::Sequential },
        };
        let got = run(p, config, 3).unwrap().field;
        prop_assert_eq!(got.to_le_bytes(), reference.to_le_bytes());
    }

    #[test]
    fn reduction_ignores_completion_order(values in prop::collection::vec(-1e6f64..1e6, 1..40), seed in any::<u64>()) {
        // values arrive in a shuffled order but are placed by rank id before reducing
        let mut arrival: Vec<usize> = (0..values.len()).collect();
        let mut s = seed;
        for i in (1..arrival.len()).rev() {
            s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            arrival.swap(i, (s >> 33) as usize % (i + 1));
        }
        let mut slots = vec![0.0; values.len()];
        for &r in &arrival {
            slots[r] = values[r];
        }
        let a = ordered_reduce(&values, ReduceOp::Sum).unwrap();
        let b = ordered_reduce(&slots, ReduceOp::Sum).unwrap();
        prop_assert_eq!(a.to_bits(), b.to_bits());
    }
}
