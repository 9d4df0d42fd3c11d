//! Gradient-noise distributions.
//!
//! Finite (empirical) models are handled exactly everywhere; Gaussian parts
//! are sampled through the counter-based streams of [`crate::rng`].

use std::collections::HashMap;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::rng::{DrawRng, SeededStream};
use crate::stats::{gaussian_norm_below, monte_carlo, Estimate};
use crate::vector::{l2_norm, RealVector};

const WEIGHT_SUM_TOL: f64 = 1e-12;

/// A finite distribution: atoms with strictly positive weights summing to 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EmpiricalJson", into = "EmpiricalJson")]
pub struct Empirical {
    dim: usize,
    atoms: Vec<RealVector>,
    weights: Vec<f64>,
}

/// On-disk schema: `{"dim": int, "atoms": [[...]], "weights": [...]}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmpiricalJson {
    pub dim: usize,
    pub atoms: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
}

impl TryFrom<EmpiricalJson> for Empirical {
    type Error = Error;

    fn try_from(value: EmpiricalJson) -> Result<Self> {
        let atoms = value
            .atoms
            .into_iter()
            .map(RealVector::new)
            .collect::<Result<Vec<_>>>()?;
        let model = Empirical::new(atoms, value.weights)?;
        check_dim(value.dim, model.dim)?;
        Ok(model)
    }
}

impl From<Empirical> for EmpiricalJson {
    fn from(value: Empirical) -> Self {
        EmpiricalJson {
            dim: value.dim,
            atoms: value.atoms.into_iter().map(RealVector::into_inner).collect(),
            weights: value.weights,
        }
    }
}

fn atom_key(v: &RealVector) -> Vec<u64> {
    v.as_slice()
        .iter()
        .map(|&x| if x == 0.0 { 0u64 } else { x.to_bits() })
        .collect()
}

impl Empirical {
    pub fn new(atoms: Vec<RealVector>, weights: Vec<f64>) -> Result<Self> {
        let first = atoms
            .first()
            .ok_or_else(|| Error::InvalidInput("empirical model needs at least one atom".into()))?;
        let dim = first.dim();
        if atoms.len() != weights.len() {
            return Err(Error::InvalidInput(format!(
                "{} atoms but {} weights",
                atoms.len(),
                weights.len()
            )));
        }
        for a in &atoms {
            check_dim(dim, a.dim())?;
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(Error::InvalidInput(format!("weight {w} is not positive")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidInput(format!("weights sum to {total}, not 1")));
        }
        Ok(Self {
            dim,
            atoms,
            weights,
        })
    }

    /// Each atom gets weight `1/n`; duplicates are kept as separate atoms.
    pub fn uniform(atoms: Vec<RealVector>) -> Result<Self> {
        let n = atoms.len();
        Self::new(atoms, vec![1.0 / n as f64; n])
    }

    pub fn point_mass(atom: RealVector) -> Self {
        Self {
            dim: atom.dim(),
            atoms: vec![atom],
            weights: vec![1.0],
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn atoms(&self) -> &[RealVector] {
        &self.atoms
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn iter(&self) -> impl Iterator<Item = (&RealVector, f64)> {
        self.atoms.iter().zip(self.weights.iter().copied())
    }

    /// Merges coincident atoms (exact component equality), keeping the order
    /// of first appearance.
    pub fn merged(&self) -> Empirical {
        merge_atoms(self.iter().map(|(a, w)| (a.clone(), w)), self.dim)
    }

    /// `p~(xi) = (p(xi) + p(-xi)) / 2`.
    pub fn symmetrize(&self) -> Empirical {
        merge_atoms(
            self.iter()
                .flat_map(|(a, w)| [(a.clone(), 0.5 * w), (a.neg(), 0.5 * w)]),
            self.dim,
        )
    }

    /// True iff every atom `xi` of weight `w` has a partner `-xi` of the same
    /// weight (after merging duplicates). Weights are compared to 1e-12.
    pub fn is_symmetric(&self) -> bool {
        self.symmetry_defect().is_none()
    }

    pub(crate) fn symmetry_defect(&self) -> Option<String> {
        let merged = self.merged();
        let index: HashMap<Vec<u64>, f64> = merged
            .iter()
            .map(|(a, w)| (atom_key(a), w))
            .collect();
        for (a, w) in merged.iter() {
            match index.get(&atom_key(&a.neg())) {
                Some(&w2) if (w - w2).abs() <= WEIGHT_SUM_TOL => {}
                Some(&w2) => return Some(format!("atom {a} has weight {w} but its mirror has {w2}")),
                None => return Some(format!("atom {a} has no mirror image")),
            }
        }
        None
    }

    pub fn mean(&self) -> RealVector {
        let mut acc = vec![0.0; self.dim];
        for (a, w) in self.iter() {
            for (s, x) in acc.iter_mut().zip(a.as_slice()) {
                *s += w * x;
            }
        }
        RealVector::new(acc).expect("weighted mean of finite atoms is finite")
    }

    /// Total variance `E|xi - E xi|^2`.
    pub fn variance(&self) -> f64 {
        let mu = self.mean();
        self.iter()
            .map(|(a, w)| {
                let d: f64 = a
                    .as_slice()
                    .iter()
                    .zip(mu.as_slice())
                    .map(|(x, m)| (x - m) * (x - m))
                    .sum();
                w * d
            })
            .sum()
    }

    /// Exact `P(|xi| < radius)`.
    pub fn prob_norm_below(&self, radius: f64) -> f64 {
        self.iter()
            .filter(|(a, _)| a.norm() < radius)
            .map(|(_, w)| w)
            .sum::<f64>()
            .min(1.0)
    }

    fn sample_into(&self, rng: &mut DrawRng, out: &mut [f64]) {
        // Inverse-CDF lookup over the cumulative weights.
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = self.atoms.len() - 1;
        for (i, w) in self.weights.iter().enumerate() {
            acc += w;
            if u < acc {
                pick = i;
                break;
            }
        }
        out.copy_from_slice(self.atoms[pick].as_slice());
    }
}

fn merge_atoms(items: impl Iterator<Item = (RealVector, f64)>, dim: usize) -> Empirical {
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut atoms = Vec::new();
    let mut weights: Vec<f64> = Vec::new();
    for (a, w) in items {
        match index.get(&atom_key(&a)) {
            Some(&i) => weights[i] += w,
            None => {
                index.insert(atom_key(&a), atoms.len());
                atoms.push(a);
                weights.push(w);
            }
        }
    }
    Empirical {
        dim,
        atoms,
        weights,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub weight: f64,
    pub center: RealVector,
    /// Standard deviation of the isotropic Gaussian spread around `center`.
    pub radial_scale: f64,
}

/// Mixture of spherical (isotropic Gaussian) components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphericalMixture {
    components: Vec<MixtureComponent>,
}

impl SphericalMixture {
    pub fn new(components: Vec<MixtureComponent>) -> Result<Self> {
        let first = components
            .first()
            .ok_or_else(|| Error::InvalidInput("mixture needs at least one component".into()))?;
        let dim = first.center.dim();
        for comp in &components {
            check_dim(dim, comp.center.dim())?;
            if !(comp.weight.is_finite() && comp.weight > 0.0) {
                return Err(Error::InvalidInput(format!("weight {} is not positive", comp.weight)));
            }
            if !(comp.radial_scale.is_finite() && comp.radial_scale >= 0.0) {
                return Err(Error::InvalidInput(format!(
                    "radial scale {} is not >= 0",
                    comp.radial_scale
                )));
            }
        }
        let total: f64 = components.iter().map(|c| c.weight).sum();
        if (total - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(Error::InvalidInput(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { components })
    }

    pub fn components(&self) -> &[MixtureComponent] {
        &self.components
    }

    pub fn dim(&self) -> usize {
        self.components[0].center.dim()
    }

    pub fn mean(&self) -> RealVector {
        let mut acc = vec![0.0; self.dim()];
        for comp in &self.components {
            for (s, x) in acc.iter_mut().zip(comp.center.as_slice()) {
                *s += comp.weight * x;
            }
        }
        RealVector::new(acc).expect("weighted mean of finite centers is finite")
    }

    fn sample_into(&self, rng: &mut DrawRng, out: &mut [f64]) {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut pick = &self.components[self.components.len() - 1];
        for comp in &self.components {
            acc += comp.weight;
            if u < acc {
                pick = comp;
                break;
            }
        }
        for (o, m) in out.iter_mut().zip(pick.center.as_slice()) {
            let z: f64 = rng.sample(StandardNormal);
            *o = m + pick.radial_scale * z;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NoiseModel {
    IsotropicGaussian { scale: f64, dim: usize },
    Empirical(Empirical),
    SphericalMixture(SphericalMixture),
    /// `xi + k * zeta` with `xi ~ base` and `zeta ~ N(0, I)` independent.
    Perturbed { base: Box<NoiseModel>, k: f64 },
}

impl From<Empirical> for NoiseModel {
    fn from(value: Empirical) -> Self {
        NoiseModel::Empirical(value)
    }
}

impl From<SphericalMixture> for NoiseModel {
    fn from(value: SphericalMixture) -> Self {
        NoiseModel::SphericalMixture(value)
    }
}

impl NoiseModel {
    pub fn isotropic_gaussian(scale: f64, dim: usize) -> Result<Self> {
        if !(scale.is_finite() && scale >= 0.0) || dim == 0 {
            return Err(Error::InvalidInput(format!(
                "gaussian needs scale >= 0 and dim >= 1 (got {scale}, {dim})"
            )));
        }
        Ok(NoiseModel::IsotropicGaussian { scale, dim })
    }

    pub fn dim(&self) -> usize {
        match self {
            NoiseModel::IsotropicGaussian { dim, .. } => *dim,
            NoiseModel::Empirical(e) => e.dim(),
            NoiseModel::SphericalMixture(m) => m.dim(),
            NoiseModel::Perturbed { base, .. } => base.dim(),
        }
    }

    pub fn as_empirical(&self) -> Option<&Empirical> {
        match self {
            NoiseModel::Empirical(e) => Some(e),
            _ => None,
        }
    }

    /// Whether `p(A) = p(-A)`. Checked exactly for finite models; structural
    /// for the continuous ones (a mixture counts as symmetric only when every
    /// center is the origin).
    pub fn symmetry_defect(&self) -> Option<String> {
        match self {
            NoiseModel::IsotropicGaussian { .. } => None,
            NoiseModel::Empirical(e) => e.symmetry_defect(),
            NoiseModel::SphericalMixture(m) => m
                .components()
                .iter()
                .find(|c| !c.center.is_zero())
                .map(|c| format!("mixture component centered at {}", c.center)),
            NoiseModel::Perturbed { base, .. } => base.symmetry_defect(),
        }
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetry_defect().is_none()
    }

    /// Fills `out` with one draw using the given generator.
    pub fn sample_into(&self, rng: &mut DrawRng, out: &mut [f64]) {
        match self {
            NoiseModel::IsotropicGaussian { scale, .. } => {
                for o in out.iter_mut() {
                    let z: f64 = rng.sample(StandardNormal);
                    *o = scale * z;
                }
            }
            NoiseModel::Empirical(e) => e.sample_into(rng, out),
            NoiseModel::SphericalMixture(m) => m.sample_into(rng, out),
            NoiseModel::Perturbed { base, k } => {
                base.sample_into(rng, out);
                if *k != 0.0 {
                    for o in out.iter_mut() {
                        let z: f64 = rng.sample(StandardNormal);
                        *o += k * z;
                    }
                }
            }
        }
    }

    pub fn sample_one(&self, stream: &SeededStream, index: u64) -> RealVector {
        let mut out = vec![0.0; self.dim()];
        self.sample_into(&mut stream.draw(index), &mut out);
        RealVector::new(out).expect("samples of a finite model are finite")
    }

    /// `count` i.i.d. draws; draw `i` uses index `i` of `stream`.
    pub fn sample(&self, stream: &SeededStream, count: usize) -> Vec<RealVector> {
        (0..count as u64).map(|i| self.sample_one(stream, i)).collect()
    }

    /// `P(|xi| < radius)`: exact for finite models and for centered Gaussian
    /// models (chi distribution), Monte Carlo otherwise.
    pub fn prob_norm_below(&self, radius: f64, stream: &SeededStream, mc_samples: usize) -> Estimate {
        match self {
            NoiseModel::Empirical(e) => Estimate::exact(e.prob_norm_below(radius)),
            NoiseModel::IsotropicGaussian { scale, dim } => {
                Estimate::exact(gaussian_norm_below(*scale, *dim, radius))
            }
            NoiseModel::SphericalMixture(m) if m.components().iter().all(|c| c.center.is_zero()) => {
                Estimate::exact(
                    m.components()
                        .iter()
                        .map(|c| c.weight * gaussian_norm_below(c.radial_scale, m.dim(), radius))
                        .sum(),
                )
            }
            NoiseModel::Perturbed { base, k } if *k == 0.0 => {
                base.prob_norm_below(radius, stream, mc_samples)
            }
            _ => {
                let dim = self.dim();
                monte_carlo(stream, mc_samples, |rng| {
                    let mut buf = vec![0.0; dim];
                    self.sample_into(rng, &mut buf);
                    if l2_norm(&buf) < radius {
                        1.0
                    } else {
                        0.0
                    }
                })
            }
        }
    }
}

/// Distribution of `xi + k zeta`, `zeta ~ N(0, I)`.
pub fn perturb(model: NoiseModel, k: f64) -> Result<NoiseModel> {
    if !(k.is_finite() && k >= 0.0) {
        return Err(Error::InvalidInput(format!("perturbation scale must be >= 0, got {k}")));
    }
    Ok(NoiseModel::Perturbed {
        base: Box::new(model),
        k,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rv(x: &[f64]) -> RealVector {
        RealVector::new(x.to_vec()).unwrap()
    }

    fn emp(pairs: &[(f64, f64)]) -> Empirical {
        Empirical::new(
            pairs.iter().map(|(a, _)| rv(&[*a])).collect(),
            pairs.iter().map(|(_, w)| *w).collect(),
        )
        .unwrap()
    }

    fn weight_of(e: &Empirical, x: f64) -> f64 {
        e.iter().find(|(a, _)| a[0] == x).map(|(_, w)| w).unwrap_or(0.0)
    }

    #[test]
    fn single_atom_samples() {
        let v = rv(&[1.5, -2.0]);
        let m = NoiseModel::Empirical(Empirical::point_mass(v.clone()));
        assert_eq!(m.sample(&SeededStream::new(1, 0), 3), vec![v.clone(), v.clone(), v]);
    }

    #[test]
    fn degenerate_gaussian_is_zero() {
        let m = NoiseModel::isotropic_gaussian(0.0, 2).unwrap();
        assert_eq!(m.sample(&SeededStream::new(1, 0), 1), vec![rv(&[0.0, 0.0])]);
    }

    #[test]
    fn two_atom_frequencies() {
        let m = NoiseModel::Empirical(emp(&[(-1.0, 0.5), (1.0, 0.5)]));
        let draws = m.sample(&SeededStream::new(9, 2), 100_000);
        let hi = draws.iter().filter(|d| d[0] > 0.0).count() as f64 / 1e5;
        assert!((hi - 0.5).abs() < 0.01, "{hi}");
    }

    #[test]
    fn symmetrize_examples() {
        let s = emp(&[(1.0, 1.0)]).symmetrize();
        assert_eq!(s, emp(&[(1.0, 0.5), (-1.0, 0.5)]));

        let already = emp(&[(2.0, 0.5), (-2.0, 0.5)]);
        assert_eq!(already.symmetrize(), already);

        let s = emp(&[(4.0, 2.0 / 3.0), (-8.0, 1.0 / 3.0)]).symmetrize();
        assert_eq!(s.len(), 4);
        assert!((weight_of(&s, 4.0) - 1.0 / 3.0).abs() < 1e-15);
        assert!((weight_of(&s, -4.0) - 1.0 / 3.0).abs() < 1e-15);
        assert!((weight_of(&s, 8.0) - 1.0 / 6.0).abs() < 1e-15);
        assert!((weight_of(&s, -8.0) - 1.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn symmetry_check() {
        assert!(emp(&[(3.0, 0.5), (-3.0, 0.5)]).is_symmetric());
        assert!(emp(&[(0.0, 1.0)]).is_symmetric());
        assert!(!emp(&[(4.0, 2.0 / 3.0), (-8.0, 1.0 / 3.0)]).is_symmetric());
        assert!(!emp(&[(3.0, 0.4), (-3.0, 0.6)]).is_symmetric());
    }

    #[test]
    fn prob_norm_below_examples() {
        let s = SeededStream::new(0, 0);
        let far = NoiseModel::Empirical(emp(&[(10.0, 1.0)]));
        assert_eq!(far.prob_norm_below(0.25, &s, 0).mean, 0.0);

        let g = NoiseModel::isotropic_gaussian(1.0, 1).unwrap();
        let p = g.prob_norm_below(0.25, &s, 0);
        assert!(p.is_exact());
        assert!((p.mean - 0.1974).abs() < 1e-4);
        // 0.75 * P is the 0.148 lower bound at |v| = 1.
        assert!((0.75 * p.mean - 0.148).abs() < 1e-3);

        let mixed = NoiseModel::Empirical(emp(&[(0.1, 0.5), (9.0, 0.5)]));
        assert_eq!(mixed.prob_norm_below(0.25, &s, 0).mean, 0.5);
    }

    #[test]
    fn gaussian_prob_matches_monte_carlo() {
        let s = SeededStream::new(3, 3);
        let g = NoiseModel::isotropic_gaussian(0.7, 5).unwrap();
        let exact = g.prob_norm_below(1.4, &s, 0).mean;
        let mixed = perturb(NoiseModel::Empirical(Empirical::point_mass(RealVector::zeros(5))), 0.7).unwrap();
        let mc = mixed.prob_norm_below(1.4, &s, 50_000);
        assert!(!mc.is_exact());
        assert!((mc.mean - exact).abs() < 3.0 * mc.std_error, "{exact} vs {mc:?}");
    }

    #[test]
    fn perturb_with_zero_scale_is_transparent() {
        let base = NoiseModel::Empirical(emp(&[(-4.0, 2.0 / 3.0), (8.0, 1.0 / 3.0)]));
        let p = perturb(base.clone(), 0.0).unwrap();
        let s = SeededStream::new(5, 1);
        assert_eq!(p.sample(&s, 50), base.sample(&s, 50));
    }

    #[test]
    fn perturb_point_mass_mean() {
        let mu = 2.5;
        let p = perturb(NoiseModel::Empirical(emp(&[(mu, 1.0)])), 3.0).unwrap();
        let e = monte_carlo(&SeededStream::new(11, 0), 40_000, |rng| {
            let mut b = [0.0];
            p.sample_into(rng, &mut b);
            b[0]
        });
        assert!((e.mean - mu).abs() < 3.0 * e.std_error, "{e:?}");
        // sd of the sample mean is k / sqrt(n)
        assert!((e.std_error - 3.0 / 200.0).abs() < 1e-3);
    }

    #[test]
    fn perturb_origin_is_standard_normal() {
        let p = perturb(NoiseModel::Empirical(emp(&[(0.0, 1.0)])), 1.0).unwrap();
        let s = SeededStream::new(2, 8);
        let second = monte_carlo(&s, 40_000, |rng| {
            let mut b = [0.0];
            p.sample_into(rng, &mut b);
            b[0] * b[0]
        });
        assert!((second.mean - 1.0).abs() < 3.0 * second.std_error);
    }

    #[test]
    fn json_schema() {
        let e = emp(&[(-4.0, 0.25), (8.0, 0.75)]);
        let text = serde_json::to_string(&e).unwrap();
        assert_eq!(text, r#"{"dim":1,"atoms":[[-4.0],[8.0]],"weights":[0.25,0.75]}"#);
        let back: Empirical = serde_json::from_str(&text).unwrap();
        assert_eq!(back, e);
        assert!(serde_json::from_str::<Empirical>(r#"{"dim":2,"atoms":[[1.0]],"weights":[1.0]}"#).is_err());
        assert!(serde_json::from_str::<Empirical>(r#"{"dim":1,"atoms":[[1.0]],"weights":[0.5]}"#).is_err());
    }

    #[test]
    fn variance_of_example_one_residuals() {
        let e = emp(&[(-4.0, 2.0 / 3.0), (8.0, 1.0 / 3.0)]);
        assert!((e.variance() - 32.0).abs() < 1e-12);
    }
}
