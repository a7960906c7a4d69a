mod common;

use lossbalance::data::{synth_oracle_solve, SyntheticQuadratic};
use lossbalance::el::{disadvantaged_group, Segment};
use lossbalance::solver::{KktResiduals, LevelConstrainedSolver};
use lossbalance::{
    group_optima, optimal_gamma_el, suboptimal_gamma_el, ElConfig, Group, SolverConfig, TwoGroupProblem,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tight(gamma: f64) -> ElConfig {
    ElConfig::new(gamma, 1e-8)
}

#[test]
fn closed_form_oracle_matches_grid() {
    for seed in 0..20u64 {
        for dim in [1, 2] {
            for gamma in [0.0, 0.1, 1.0] {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let p = SyntheticQuadratic::random(dim, gamma, &mut rng);
                let (_, l_closed) = synth_oracle_solve(&p, gamma).unwrap();
                let (_, l_grid) = common::grid_el_optimum(&p, gamma);
                assert!(
                    (l_closed - l_grid).abs() < 1e-3,
                    "seed {seed} dim {dim} gamma {gamma}: closed {l_closed} grid {l_grid}"
                );
            }
        }
    }
}

#[test]
fn grid_oracle_on_hand_fixture() {
    let p = SyntheticQuadratic::scalar_pair(1.0, -1.0, 0.75);
    let (w, l) = common::grid_el_optimum(&p, 1.0);
    assert!((w[0] - 0.25).abs() < 1e-9);
    assert!((l - 0.8125).abs() < 1e-9);
}

#[test]
fn optimal_el_matches_oracle_across_dims() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for k in 0..15 {
        let dim = 1 + k % 3;
        let gamma = [0.0, 0.2, 0.5][k % 3];
        let p = SyntheticQuadratic::random(dim, gamma, &mut rng);
        let (_, l_star) = synth_oracle_solve(&p, gamma).unwrap();
        let r = optimal_gamma_el(&p, &tight(gamma)).unwrap();
        assert!(
            (r.train.overall - l_star).abs() < 1e-4,
            "instance {k}: {} vs {l_star}",
            r.train.overall
        );
        assert!(r.train.gap <= gamma + 1e-4, "instance {k}: gap {}", r.train.gap);
    }
}

#[test]
fn suboptimal_never_beats_optimal_and_is_fair() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let dim = rng.gen_range(1..=3);
        let gamma = 0.1;
        let p = SyntheticQuadratic::random(dim, gamma, &mut rng);
        let opt = optimal_gamma_el(&p, &tight(gamma)).unwrap();
        let sub = suboptimal_gamma_el(&p, &tight(gamma)).unwrap();
        assert!(sub.train.overall >= opt.train.overall - 1e-6);
        assert!(sub.train.gap <= gamma + 1e-5);
    }
}

#[test]
fn segment_profiles_are_monotone() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..20 {
        let dim = rng.gen_range(1..=3);
        let p = SyntheticQuadratic::random(dim, 0.0, &mut rng);
        let optima = group_optima(&p, &SolverConfig::default()).unwrap();
        let a = disadvantaged_group(&p, &optima.w_o);
        let seg = Segment::new(&p, &optima.w_o, optima.group(a), a);
        let betas: Vec<f64> = (0..=20).map(|i| i as f64 * 0.05).collect();
        for pair in betas.windows(2) {
            assert!(seg.gap(pair[1]) <= seg.gap(pair[0]) + 1e-9);
            assert!(seg.overall(pair[1]) >= seg.overall(pair[0]) - 1e-9);
        }
    }
}

#[test]
fn suboptimal_respects_disadvantaged_loss_bound() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..30 {
        let dim = rng.gen_range(1..=3);
        let gamma = 0.05;
        let p = SyntheticQuadratic::random(dim, gamma, &mut rng);
        let optima = group_optima(&p, &SolverConfig::default()).unwrap();
        let at_o = p.losses(&optima.w_o);
        let r = suboptimal_gamma_el(&p, &tight(gamma)).unwrap();
        assert!(r.train.overall <= at_o.loss_g0.max(at_o.loss_g1) + 1e-9);
    }
}

#[test]
fn level_subproblems_satisfy_kkt() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cfg = SolverConfig::default();
    for _ in 0..40 {
        let dim = rng.gen_range(1..=3);
        let p = SyntheticQuadratic::random(dim, 0.0, &mut rng);
        let optima = group_optima(&p, &cfg).unwrap();
        let (l0, l1) = (p.group(Group::Zero), p.group(Group::One));
        let lo = l0.value(&optima.w_g0);
        let hi = l0.value(&optima.w_g1);
        let lambda = lo + (hi - lo) * 0.37;
        let mut solver = LevelConstrainedSolver::new(l1, l0, cfg);
        let sol = solver.solve(lambda).unwrap();
        let kkt = KktResiduals::compute(l1, l0, lambda, &sol);
        assert!(kkt.within_default_tolerances(sol.multiplier), "{kkt:?}");
        assert!(sol.active);
    }
}

#[test]
fn bgl_implication_on_constructed_pairs() {
    // L_a = (w ∓ a)^2: min max(L_0, L_1) = a^2 at w = 0, and margins are 4a^2.
    for a in [0.5, 1.0, 2.0] {
        let p = SyntheticQuadratic::scalar_pair(a, -a, 0.7);
        let bgl_level = common::grid_min_max_loss(&p);
        assert!((bgl_level - a * a).abs() < 1e-6);
        let gamma = 1.5 * a * a;
        let r = optimal_gamma_el(&p, &tight(gamma)).unwrap();
        let (lo, hi) = (
            r.train.loss_g0.min(r.train.loss_g1),
            r.train.loss_g0.max(r.train.loss_g1),
        );
        assert!(lo <= gamma + 1e-6 && hi <= 2.0 * gamma + 1e-6, "a {a}: {:?}", r.train);
    }
}
