mod common;

use common::*;
use hrz_core::grid::{CellState, GridIndex};
use hrz_core::metrics::{classify_cells, compute_metrics, wall_mask_from_base, CellMask, ConfusionCounts};
use hrz_core::navsim::{fixture, run_trial, TrialResult};
use hrz_core::planner::{path_length, plan, Cost, PlanConfig, PlanError};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

#[test]
fn heuristic_is_admissible_along_optimal_paths() {
    let mut rng = StdRng::seed_from_u64(11);
    let cfg = PlanConfig::default();
    let mut checked = 0;
    while checked < 50 {
        let grid = random_map(&mut rng, 20, 20);
        let (Some(s), Some(g)) = (random_free_cell(&mut rng, &grid), random_free_cell(&mut rng, &grid)) else {
            continue;
        };
        let Ok(path) = plan(&grid, s, g, &cfg) else { continue };
        // every suffix of an optimal path is optimal, and octile never overestimates it
        for (i, &c) in path.cells.iter().enumerate() {
            let rest = shortest_cost_oracle(&grid, c, g, true).unwrap();
            let h = Cost::octile(c, g);
            assert!(!cost_less(rest, (h.straight, h.diagonal)), "octile overestimates at {c:?}");
            if i == 0 {
                assert_eq!(rest, (path.cost.straight, path.cost.diagonal));
            }
        }
        let metres = path_length(&path, grid.resolution());
        assert!((metres - path.cost.value() * grid.resolution()).abs() < 1e-9);
        checked += 1;
    }
}

#[test]
fn blocking_cells_never_shortens_the_plan() {
    let mut rng = StdRng::seed_from_u64(12);
    let cfg = PlanConfig::default();
    for _ in 0..100 {
        let mut grid = random_map(&mut rng, 16, 16);
        let (Some(s), Some(g)) = (random_free_cell(&mut rng, &grid), random_free_cell(&mut rng, &grid)) else {
            continue;
        };
        let mut prev = plan(&grid, s, g, &cfg).ok().map(|p| p.cost);
        for _ in 0..10 {
            let c = GridIndex::new(rng.gen_range(0..16), rng.gen_range(0..16));
            if c == s || c == g {
                continue;
            }
            grid.set(c, CellState::Occupied);
            let next = plan(&grid, s, g, &cfg).ok().map(|p| p.cost);
            match (prev, next) {
                (None, Some(_)) => panic!("blocking a cell made an unreachable goal reachable"),
                (Some(a), Some(b)) => assert!(b >= a, "cost fell from {a} to {b}"),
                _ => {}
            }
            prev = next;
        }
    }
}

#[test]
fn unknown_cells_follow_the_config() {
    let mut grid = free_grid(5, 3, 0.05);
    for r in 0..3 {
        grid.set(GridIndex::new(2, r), CellState::Unknown);
    }
    let (s, g) = (GridIndex::new(0, 1), GridIndex::new(4, 1));
    assert_eq!(plan(&grid, s, g, &PlanConfig::default()), Err(PlanError::NoPath));
    let lenient = PlanConfig { unknown_is_blocked: false, ..PlanConfig::default() };
    assert_eq!(plan(&grid, s, g, &lenient).unwrap().cost, Cost { straight: 4, diagonal: 0 });
    assert_eq!(shortest_cost_oracle(&grid, s, g, false), Some((4, 0)));
}

#[test]
fn four_connected_uses_straight_moves_only() {
    let grid = free_grid(6, 6, 0.05);
    let cfg = PlanConfig { allow_diagonal: false, ..PlanConfig::default() };
    let p = plan(&grid, GridIndex::new(0, 0), GridIndex::new(5, 3), &cfg).unwrap();
    assert_eq!(p.cost, Cost { straight: 8, diagonal: 0 });
}

#[test]
fn wall_cells_are_excluded_from_fixture_metrics() {
    let fx = fixture("stage1").unwrap();
    let sc = &fx.scenario;
    let walls = wall_mask_from_base(&sc.base);
    let c = classify_cells(&sc.ground_truth, &sc.base, &walls).unwrap();
    assert_eq!(c.excluded_wall_cells as usize, sc.base.count(CellState::Occupied));
    assert_eq!(c.tp + c.fp, 0, "the bare base draws nothing");
    assert_eq!(c.fn_ as usize, sc.ground_truth.count(CellState::Occupied) - sc.base.count(CellState::Occupied));

    let exact = classify_cells(&sc.ground_truth, &fx.drawn(&fx.reference_zones), &walls).unwrap();
    assert_eq!((exact.fp, exact.fn_), (0, 0));
    let over = compute_metrics(&classify_cells(&sc.ground_truth, &fx.drawn(&fx.oversized_zones), &walls).unwrap());
    assert_eq!(over.recall.get(), Some(1.0));
    assert!(over.precision.get().unwrap() < 1.0);
}

#[test]
fn trial_outcomes_on_hand_built_map() {
    let fx = fixture("stage2").unwrap();
    let cfg = PlanConfig::default();
    let t = run_trial(&fx.scenario, &fx.scenario.base, &cfg).unwrap();
    assert_eq!(t.result, TrialResult::CollisionFailure);
    assert!(!t.collisions.is_empty());
    for c in &t.collisions {
        assert_eq!(fx.scenario.ground_truth.get(*c), Some(CellState::Occupied));
    }
}

proptest! {
    #[test]
    fn ratios_stay_in_unit_interval(tp in 0u64..1000, fp in 0u64..1000, fn_ in 0u64..1000, tn in 0u64..1000) {
        let m = compute_metrics(&ConfusionCounts { tp, fp, fn_, tn, excluded_wall_cells: 0 });
        for r in [m.accuracy, m.precision, m.recall, m.specificity, m.f1] {
            if let Some(v) = r.get() {
                prop_assert!((0.0..=1.0).contains(&v));
            }
        }
        if let (Some(p), Some(r), Some(f)) = (m.precision.get(), m.recall.get(), m.f1.get()) {
            prop_assert!(f <= p.max(r) + 1e-12 && f >= p.min(r) - 1e-12);
        }
    }

    #[test]
    fn masked_cells_never_count(seed in any::<u64>()) {
        let mut rng = StdRng::seed_from_u64(seed);
        let (w, h) = (rng.gen_range(1..12), rng.gen_range(1..12));
        let gt = random_base(&mut rng, w, h, 0.05);
        let drawn = random_base(&mut rng, w, h, 0.05);
        let all = CellMask::from_cells(w, h, gt.iter().map(|(i, _)| i));
        let c = classify_cells(&gt, &drawn, &all).unwrap();
        prop_assert_eq!(c.classified(), 0);
        prop_assert_eq!(c.excluded_wall_cells as usize, w * h);
        let none = classify_cells(&gt, &drawn, &CellMask::empty(w, h)).unwrap();
        prop_assert_eq!(none.classified() as usize, w * h);
    }
}
