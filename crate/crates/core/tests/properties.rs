mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sublinear_clt::blocking::plan_from_beta;
use sublinear_clt::conditions::{capacity_tail, lindeberg, variance_ratio};
use sublinear_clt::engine::oracle::oracle_policy_enum;
use sublinear_clt::gnormal::{solve_gheat, GParams, PdeGrid};
use sublinear_clt::mdep::{factorization_gap, z_reduce};
use sublinear_clt::{AmbiguitySet, Engine, Event, Functional, Growth, SequenceModel};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_event(r: &mut ChaCha8Rng) -> Event {
    let x = r.gen_range(-2.0..2.0);
    match r.gen_range(0..6) {
        0 => Event::AtLeast(x),
        1 => Event::Above(x),
        2 => Event::AbsAbove(x.abs()),
        3 => Event::Below(x),
        4 => Event::AtMost(x),
        _ => Event::AbsAtMost(x.abs()),
    }
}

fn moving_window(r: &mut ChaCha8Rng, m: usize, n: usize) -> SequenceModel {
    let weights = (0..=m).map(|_| [1.0, -1.0, 0.5, 2.0][r.gen_range(0..4)]).collect();
    let set = common::random_set(r, 2, 3, true);
    SequenceModel::moving_window(set, weights, n, 1.0).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn capacities_are_conjugate_and_ordered(seed in any::<u64>()) {
        let mut r = rng(seed);
        let lattice = r.gen_bool(0.5);
        let set = common::random_set(&mut r, 3, 4, lattice);
        let a = random_event(&mut r);
        let upper = set.upper_capacity(a);
        let lower = set.lower_capacity(a);
        prop_assert!(lower <= upper + 1e-15);
        prop_assert!((lower - (1.0 - set.upper_capacity(a.complement()))).abs() <= 1e-15);
        prop_assert!((0.0..=1.0 + 1e-15).contains(&upper));
    }

    #[test]
    fn capacities_are_monotone_and_subadditive(seed in any::<u64>()) {
        let mut r = rng(seed);
        let set = common::random_set(&mut r, 3, 4, false);
        let x = r.gen_range(0.0..2.0);
        let y = x + r.gen_range(0.0..1.0);
        prop_assert!(set.upper_capacity(Event::Above(y)) <= set.upper_capacity(Event::Above(x)));
        prop_assert!(set.upper_capacity(Event::Above(x)) <= set.upper_capacity(Event::AtLeast(x)));
        let union = set.upper_capacity(Event::AbsAbove(x));
        let right = set.upper_capacity(Event::Above(x));
        let left = set.upper_capacity(Event::Below(-x));
        prop_assert!(union <= right + left + 1e-15);
        prop_assert!(set.lower_capacity(Event::AbsAbove(x)) <= set.lower_capacity(Event::Above(x)) + left + 1e-15);
    }

    #[test]
    fn truncation_is_idempotent_and_m2_grows_with_level(seed in any::<u64>()) {
        let mut r = rng(seed);
        let lattice = r.gen_bool(0.5);
        let set = common::random_set(&mut r, 3, 4, lattice);
        let c = r.gen_range(0.1..2.0);
        let once = set.truncate(c).unwrap();
        let twice = once.truncate(c).unwrap();
        let f = common::random_function(&mut r);
        let (a, b) = (once.upper_expect(|x| f.eval(x)), twice.upper_expect(|x| f.eval(x)));
        prop_assert!((a - b).abs() <= 1e-14 * (1.0 + a.abs()));
        let d = c + r.gen_range(0.0..1.0);
        let m_c = set.truncate(c).unwrap().moments(2.0).unwrap().upper_m2;
        let m_d = set.truncate(d).unwrap().moments(2.0).unwrap().upper_m2;
        prop_assert!(m_c <= m_d + 1e-15);
    }

    #[test]
    fn engine_matches_policy_enumeration(seed in any::<u64>()) {
        let mut r = rng(seed);
        let model = common::random_model(&mut r, 3);
        let f = common::random_catalog_or_function(&mut r);
        let oracle = oracle_policy_enum(&model, &f).unwrap();
        let e = Engine::default().eval_sum(&model, &f).unwrap();
        prop_assert!((oracle.upper - e.upper).abs() <= 1e-10);
        prop_assert!((oracle.lower - e.lower).abs() <= 1e-10);
        prop_assert!(e.lower <= e.upper + 1e-12);
    }

    #[test]
    fn engine_lower_is_conjugate(seed in any::<u64>()) {
        let mut r = rng(seed);
        let model = common::random_model(&mut r, 4);
        let f = common::random_function(&mut r);
        let engine = Engine::default();
        let e = engine.eval_sum(&model, &f).unwrap();
        let neg = engine.eval_sum(&model, &f.negated()).unwrap();
        prop_assert!((e.lower + neg.upper).abs() <= 1e-12 * (1.0 + e.lower.abs()));
    }

    #[test]
    fn gheat_respects_comparison(seed in any::<u64>()) {
        let mut r = rng(seed);
        let lo = r.gen_range(0.1..1.0);
        let p = GParams::new(lo, lo + r.gen_range(0.0..1.0)).unwrap();
        let grid = PdeGrid::new(12.0, 241, &p);
        let f = common::random_function(&mut r);
        let h = common::random_function(&mut r);
        let g = {
            let (f, h) = (f.clone(), h.clone());
            Functional::custom("dominating", Growth::Quadratic, move |x| f.eval(x) + h.eval(x).abs())
        };
        let uf = solve_gheat(&f, &p, &grid, 0.5).unwrap();
        let ug = solve_gheat(&g, &p, &grid, 0.5).unwrap();
        prop_assert!(uf <= ug + 1e-12);
    }

    #[test]
    fn blocking_plans_keep_spacing(seed in any::<u64>()) {
        let mut r = rng(seed);
        let k_n = r.gen_range(1..=120);
        let p_n = 2 * r.gen_range(1..=8);
        let beta: Vec<f64> = (0..k_n).map(|_| r.gen_range(0.0..1.0)).collect();
        let plan = plan_from_beta(beta, p_n).unwrap();
        prop_assert!(plan.check().is_ok(), "{:?}", plan.check());
        let total: f64 = plan.beta.iter().sum();
        let cuts: f64 = plan.cuts().iter().map(|&k| plan.beta[k - 1]).sum();
        prop_assert!(cuts <= 2.0 / p_n as f64 * total + 1e-12);
    }

    #[test]
    fn separated_blocks_factorize(seed in any::<u64>()) {
        let mut r = rng(seed);
        let m = r.gen_range(1..=2);
        let a = r.gen_range(1..=2);
        let b = r.gen_range(1..=2);
        let n = a + m + b;
        let model = moving_window(&mut r, m, n);
        let first: Vec<usize> = (1..=a).collect();
        let second: Vec<usize> = (a + m + 1..=n).collect();
        let c = r.gen_range(0.2..1.5);
        let gap = factorization_gap(&Engine::default(), &model, &first, &second, move |x, y| (c * x * y).cos() + x * y.abs())
            .unwrap();
        prop_assert!(gap <= 1e-10, "gap {gap}");
    }

    #[test]
    fn z_reduction_preserves_the_sum(seed in any::<u64>()) {
        let mut r = rng(seed);
        let m = r.gen_range(1..=2);
        let n = r.gen_range(1..=6);
        let model = moving_window(&mut r, m, n);
        let z = z_reduce(&model, m).unwrap();
        prop_assert!(z.model.dependence_width() <= 1);
        let f = common::random_catalog_or_function(&mut r);
        let engine = Engine::default();
        let a = engine.eval_sum(&model, &f).unwrap();
        let b = engine.eval_sum(&z.model, &f).unwrap();
        prop_assert!((a.upper - b.upper).abs() <= 1e-12 * (1.0 + a.upper.abs()));
        prop_assert!((a.lower - b.lower).abs() <= 1e-12 * (1.0 + a.lower.abs()));
    }

    #[test]
    fn lindeberg_is_non_increasing_in_eps(seed in any::<u64>()) {
        let mut r = rng(seed);
        let model = common::random_model(&mut r, 5);
        let engine = Engine::default();
        let e1 = r.gen_range(0.01..1.0);
        let e2 = e1 + r.gen_range(0.0..1.0);
        let l1 = lindeberg(&engine, &model, e1).unwrap();
        let l2 = lindeberg(&engine, &model, e2).unwrap();
        prop_assert!(l2 >= 0.0);
        prop_assert!(l2 <= l1 + 1e-12);
    }

    #[test]
    fn variance_ratio_is_a_ratio(seed in any::<u64>()) {
        let mut r = rng(seed);
        let model = common::random_model(&mut r, 5);
        let engine = Engine::default();
        let m = r.gen_range(1..=model.n());
        if let Some(v) = variance_ratio(&engine, &model, m).unwrap() {
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&v), "ratio {v}");
        }
        let law = common::random_law(&mut r, 3, true);
        let single = SequenceModel::iid(AmbiguitySet::singleton(law), model.n(), 1.0).unwrap();
        if let Some(v) = variance_ratio(&engine, &single, m).unwrap() {
            prop_assert!((v - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn capacity_tail_is_bounded_by_n(seed in any::<u64>()) {
        let mut r = rng(seed);
        let model = common::random_model(&mut r, 5);
        let eps = r.gen_range(0.01..2.0);
        let t = capacity_tail(&Engine::default(), &model, eps).unwrap();
        prop_assert!(t >= 0.0 && t <= model.n() as f64 + 1e-12);
    }
}
