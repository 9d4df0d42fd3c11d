//! Brute-force optimal transport for small instances, used as the reference
//! for the score-sorting solver.
//!
//! Every weight is a multiple of 1/8, so both distributions expand to eight
//! unit slots and the optimal plan is the best of the 8! slot assignments.
//! Costs are evaluated straight from `|<v, clip(v+a, c)> - <v, clip(v+b, c)>|`
//! with the public vector operations.
#![allow(dead_code)]

use clipbias::{clip, inner, ClipThreshold, Empirical, RealVector};
use rand::Rng;

pub const SLOTS: usize = 8;

pub struct Instance {
    pub v: RealVector,
    pub c: ClipThreshold,
    pub p: Empirical,
    pub q: Empirical,
}

/// Random distribution with at most eight atoms and weights in eighths.
pub fn eighths_empirical<R: Rng>(rng: &mut R, dim: usize, scale: f64) -> Empirical {
    let k = rng.random_range(1..=SLOTS);
    let mut units = vec![0u32; k];
    for _ in 0..SLOTS {
        units[rng.random_range(0..k)] += 1;
    }
    let mut atoms = Vec::new();
    let mut weights = Vec::new();
    for u in units.into_iter().filter(|&u| u > 0) {
        let a: Vec<f64> = (0..dim).map(|_| scale * rng.random_range(-1.0..1.0)).collect();
        atoms.push(RealVector::new(a).unwrap());
        weights.push(u as f64 / SLOTS as f64);
    }
    Empirical::new(atoms, weights).unwrap()
}

pub fn random_instance<R: Rng>(rng: &mut R) -> Instance {
    let dim = rng.random_range(1..=4);
    let scale = rng.random_range(0.1..5.0);
    let v = RealVector::new((0..dim).map(|_| rng.random_range(-2.0..2.0)).collect()).unwrap();
    let c = ClipThreshold::new(rng.random_range(0.2..3.0)).unwrap();
    let p = eighths_empirical(rng, dim, scale);
    let q = eighths_empirical(rng, dim, scale);
    Instance { v, c, p, q }
}

fn slots(model: &Empirical) -> Vec<RealVector> {
    let mut out = Vec::with_capacity(SLOTS);
    for (a, w) in model.iter() {
        let units = (w * SLOTS as f64).round() as usize;
        assert!((units as f64 - w * SLOTS as f64).abs() < 1e-12, "weight {w} is not a multiple of 1/8");
        out.extend(std::iter::repeat(a.clone()).take(units));
    }
    assert_eq!(out.len(), SLOTS);
    out
}

pub fn ground_cost(v: &RealVector, c: ClipThreshold, a: &RealVector, b: &RealVector) -> f64 {
    let sa = inner(v, &clip(&v.add(a).unwrap(), c)).unwrap();
    let sb = inner(v, &clip(&v.add(b).unwrap(), c)).unwrap();
    (sa - sb).abs()
}

/// Minimum over all slot assignments (Heap's algorithm).
pub fn brute_force_transport(v: &RealVector, c: ClipThreshold, p: &Empirical, q: &Empirical) -> f64 {
    let a = slots(p);
    let b = slots(q);
    let mut cost = [[0.0; SLOTS]; SLOTS];
    for i in 0..SLOTS {
        for j in 0..SLOTS {
            cost[i][j] = ground_cost(v, c, &a[i], &b[j]);
        }
    }
    let total = |perm: &[usize; SLOTS]| -> f64 { (0..SLOTS).map(|i| cost[i][perm[i]]).sum::<f64>() };

    let mut perm: [usize; SLOTS] = std::array::from_fn(|i| i);
    let mut best = total(&perm);
    let mut counters = [0usize; SLOTS];
    let mut i = 1;
    while i < SLOTS {
        if counters[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(counters[i], i);
            }
            best = best.min(total(&perm));
            counters[i] += 1;
            i = 1;
        } else {
            counters[i] = 0;
            i += 1;
        }
    }
    best / SLOTS as f64
}
