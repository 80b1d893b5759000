#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use sublinear_clt::functional::default_catalog;
use sublinear_clt::{AmbiguitySet, DiscreteLaw, Functional, Growth, SequenceModel};

pub fn random_law(rng: &mut ChaCha8Rng, max_support: usize, lattice: bool) -> DiscreteLaw {
    let size = rng.gen_range(1..=max_support);
    let mut pairs = Vec::with_capacity(size);
    for _ in 0..size {
        let v = if lattice {
            f64::from(rng.gen_range(-8i32..=8)) * 0.25
        } else {
            rng.gen_range(-2.0..2.0)
        };
        pairs.push((v, f64::from(rng.gen_range(1u32..=10))));
    }
    let total: f64 = pairs.iter().map(|p| p.1).sum();
    DiscreteLaw::from_pairs(pairs.into_iter().map(|(v, w)| (v, w / total)).collect()).unwrap()
}

pub fn random_set(rng: &mut ChaCha8Rng, max_laws: usize, max_support: usize, lattice: bool) -> AmbiguitySet {
    let k = rng.gen_range(1..=max_laws);
    AmbiguitySet::new((0..k).map(|_| random_law(rng, max_support, lattice)).collect()).unwrap()
}

/// Independent, moving-window or block-sum model with `n <= max_n`.
pub fn random_model(rng: &mut ChaCha8Rng, max_n: usize) -> SequenceModel {
    let lattice = rng.gen_bool(0.7);
    let n = rng.gen_range(1..=max_n);
    let scale = [1.0, 0.5, 1.0 / 3.0, 0.7][rng.gen_range(0..4)];
    match rng.gen_range(0..3) {
        0 => {
            let sets = (0..n).map(|_| random_set(rng, 3, 3, lattice)).collect();
            SequenceModel::independent(sets, scale).unwrap()
        }
        1 => {
            let m = rng.gen_range(1..=2);
            let weights = (0..=m).map(|_| [1.0, -1.0, 0.5, 2.0][rng.gen_range(0..4)]).collect();
            SequenceModel::moving_window(random_set(rng, 3, 3, lattice), weights, n, scale).unwrap()
        }
        _ => {
            let base = SequenceModel::moving_window(random_set(rng, 2, 3, lattice), vec![1.0, 1.0], n + 1, scale).unwrap();
            let rows = (1..=n).map(|k| base.combine_rows(&[k, k + 1]).unwrap()).collect();
            base.with_rows(rows).unwrap()
        }
    }
}

/// `a x^2 + b x + c cos(d x) + e |x - f|`
pub fn random_function(rng: &mut ChaCha8Rng) -> Functional {
    let a = rng.gen_range(-1.0..1.0);
    let b = rng.gen_range(-1.0..1.0);
    let c = rng.gen_range(-1.0..1.0);
    let d = rng.gen_range(0.5..2.0);
    let e = rng.gen_range(-1.0..1.0);
    let f = rng.gen_range(-1.0..1.0);
    Functional::custom("random", Growth::Quadratic, move |x: f64| {
        a * x * x + b * x + c * (d * x).cos() + e * (x - f).abs()
    })
}

pub fn random_catalog_or_function(rng: &mut ChaCha8Rng) -> Functional {
    let cat = default_catalog();
    let i = rng.gen_range(0..=cat.len());
    if i == cat.len() {
        random_function(rng)
    } else {
        cat[i].clone()
    }
}
