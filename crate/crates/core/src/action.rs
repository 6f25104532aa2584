//! Height-respecting self-maps of the interior and the boundary constants
//! they induce.
//!
//! A height-respecting map permutes height level sets up to a bounded error:
//! `φ(t, p) = (t + a ± ε, F(p))`. Only this normal form is modeled — the
//! height shift `a`, the boundary part `F`, and the additive fuzz `ε` are
//! exactly the data the induced-similarity argument consumes. On the
//! boundary such a map acts as a quasi-similarity with factor `e^a` and
//! multiplicative fuzz `e^ε`; for `ε = 0` it is an exact similarity.

use serde::Serialize;

use crate::basis::OrderedBasis;
use crate::error::{Error, Result};
use crate::maps::MapDescriptor;
use crate::sample::{rng_for, Sampler};
use crate::solve::SOLVER_TOL;

/// `φ(t, p) = (t + a ± ε, F(p))`.
pub struct HeightRespectingMap {
    pub boundary_part: MapDescriptor,
    pub height_shift: f64,
    pub additive_fuzz: f64,
}

impl HeightRespectingMap {
    pub fn new(boundary_part: MapDescriptor, height_shift: f64, additive_fuzz: f64) -> Result<Self> {
        if !(additive_fuzz >= 0.0) {
            return Err(Error::domain("additive fuzz must be nonnegative"));
        }
        Ok(HeightRespectingMap { boundary_part, height_shift, additive_fuzz })
    }
}

/// Empirical similarity constants of an induced boundary map.
#[derive(Clone, Debug, Serialize)]
pub struct InducedConstants {
    /// Geometric mean of the observed distance ratios, `e^â`.
    pub factor: f64,
    /// `e^{ε̂}` with `ε̂` the largest log-deviation of a ratio from the mean.
    pub fuzz: f64,
    pub min_ratio: f64,
    pub max_ratio: f64,
}

impl OrderedBasis {
    /// Sample distinct pairs and extract the similarity factor (geometric
    /// mean of the distance ratios) and the fuzz (max deviation). Every
    /// observed ratio must lie inside the band `e^{a ± ε}` declared by the
    /// map; a ratio outside it is a contract violation carrying the pair.
    pub fn induced_boundary_constants(
        &self,
        map: &HeightRespectingMap,
        sampler: &Sampler,
        trials: usize,
        seed: u64,
    ) -> Result<InducedConstants> {
        assert!(trials >= 1);
        let a = map.height_shift;
        let eps = map.additive_fuzz;
        let slack = 1e-9;
        let mut log_ratios = Vec::with_capacity(trials);
        let mut min_ratio = f64::INFINITY;
        let mut max_ratio = 0.0f64;
        for trial in 0..trials {
            let mut rng = rng_for(seed, trial as u64);
            let (p, q) = sampler.distinct_pair(&mut rng, self.n(), 1e-9);
            let base = self.dm(&p, &q);
            if base.value == 0.0 {
                continue;
            }
            let image = self.dm(
                &map.boundary_part.apply(self, &p),
                &map.boundary_part.apply(self, &q),
            );
            // Ratios compare e^{T'} to e^{T}; work in heights to dodge
            // overflow.
            let log_ratio = image.t0 - base.t0;
            if log_ratio < a - eps - slack || log_ratio > a + eps + slack {
                return Err(Error::ContractViolation(format!(
                    "observed ratio e^{log_ratio:.12} outside declared band \
                     e^({a} ± {eps}) for pair p={p:?}, q={q:?}"
                )));
            }
            log_ratios.push(log_ratio);
            min_ratio = min_ratio.min(log_ratio.exp());
            max_ratio = max_ratio.max(log_ratio.exp());
        }
        if log_ratios.is_empty() {
            return Err(Error::domain("no usable pairs sampled"));
        }
        let mean = log_ratios.iter().sum::<f64>() / log_ratios.len() as f64;
        let deviation =
            log_ratios.iter().map(|r| (r - mean).abs()).fold(0.0f64, f64::max);
        Ok(InducedConstants {
            factor: mean.exp(),
            fuzz: deviation.exp(),
            min_ratio,
            max_ratio,
        })
    }

    /// `T' - T - a`, where `T` and `T'` are the first-contact heights of a
    /// pair and of its image. Must lie within `±(ε + solver tolerance)`.
    pub fn first_contact_consistency(
        &self,
        map: &HeightRespectingMap,
        p: &[f64],
        q: &[f64],
    ) -> f64 {
        let t = self.first_contact_height(p, q);
        let t_prime = self.first_contact_height(
            &map.boundary_part.apply(self, p),
            &map.boundary_part.apply(self, q),
        );
        t_prime - t - map.height_shift
    }
}

/// The residual band allowed by the solver for exact (`ε = 0`) models.
pub fn consistency_band(additive_fuzz: f64) -> f64 {
    additive_fuzz + 10.0 * SOLVER_TOL
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::JordanSpec;
    use crate::maps::AffineQSim;
    use crate::matrix::Matrix;

    fn basis(blocks: Vec<(f64, Vec<usize>)>) -> OrderedBasis {
        OrderedBasis::build(JordanSpec::new(blocks).unwrap()).unwrap()
    }

    #[test]
    fn exact_similarity_constants() {
        let b = basis(vec![(1.0, vec![2]), (2.0, vec![1])]);
        let a = 1.3f64;
        let map = HeightRespectingMap::new(
            MapDescriptor::dilation(&b, a.exp()).unwrap(),
            a,
            0.0,
        )
        .unwrap();
        let out = b.induced_boundary_constants(&map, &Sampler::new(10.0), 64, 2).unwrap();
        assert!((out.factor - a.exp()).abs() <= 1e-9 * a.exp());
        assert!(out.fuzz <= 1.0 + 1e-9);
        assert!((out.max_ratio - out.min_ratio).abs() <= 1e-9 * out.max_ratio);
    }

    #[test]
    fn identity_constants() {
        let b = basis(vec![(1.0, vec![1])]);
        let map = HeightRespectingMap::new(MapDescriptor::identity(), 0.0, 0.0).unwrap();
        let out = b.induced_boundary_constants(&map, &Sampler::new(10.0), 32, 4).unwrap();
        assert!((out.factor - 1.0).abs() < 1e-9);
        assert!(out.fuzz <= 1.0 + 1e-9);
    }

    #[test]
    fn fuzzy_model_stays_in_band() {
        // Per-level scales act as bounded height jitter: ratios vary inside
        // e^{a ± 0.1} but are no longer constant.
        let b = basis(vec![(1.0, vec![1]), (2.0, vec![1])]);
        let a = 0.6f64;
        let scaled = AffineQSim::new(
            &b,
            a,
            Matrix::identity(2),
            vec![0.0, 0.0],
            Some(vec![(0.08f64).exp(), (-0.15f64).exp()]),
        )
        .unwrap();
        let map =
            HeightRespectingMap::new(MapDescriptor::AffineQSim(scaled), a, 0.1).unwrap();
        let out = b.induced_boundary_constants(&map, &Sampler::new(10.0), 128, 6).unwrap();
        assert!(out.fuzz > 1.0 + 1e-6, "ratios should vary, fuzz {}", out.fuzz);
        assert!(out.max_ratio <= (a + 0.1).exp() * (1.0 + 1e-9));
        assert!(out.min_ratio >= (a - 0.1).exp() * (1.0 - 1e-9));
    }

    #[test]
    fn band_violation_is_reported() {
        let b = basis(vec![(1.0, vec![1, 1])]);
        let doubling = MapDescriptor::sampled(|p: &[f64]| vec![2.0 * p[0], p[1]]);
        let map = HeightRespectingMap::new(doubling, 0.0, 0.0).unwrap();
        let err = b.induced_boundary_constants(&map, &Sampler::new(10.0), 64, 8);
        assert!(matches!(err, Err(Error::ContractViolation(_))));
    }

    #[test]
    fn first_contact_consistency_examples() {
        let b = basis(vec![(1.0, vec![2]), (2.0, vec![1])]);
        let p = [1.0, -2.0, 0.5];
        let q = [0.0, 3.0, -1.5];

        let shift = HeightRespectingMap::new(
            MapDescriptor::dilation(&b, std::f64::consts::E).unwrap(),
            1.0,
            0.0,
        )
        .unwrap();
        assert!(b.first_contact_consistency(&shift, &p, &q).abs() < 1e-9);

        let id = HeightRespectingMap::new(MapDescriptor::identity(), 0.0, 0.0).unwrap();
        assert!(b.first_contact_consistency(&id, &p, &q).abs() <= consistency_band(0.0));

        let translation =
            HeightRespectingMap::new(MapDescriptor::translation(vec![2.0, 0.5, -3.0]), 0.0, 0.0)
                .unwrap();
        assert!(b.first_contact_consistency(&translation, &p, &q).abs() <= 1e-9);
    }
}
