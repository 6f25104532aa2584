//! The boundary quasimetric `D(p,q) = e^{t₀}`, its per-coordinate formula,
//! the parabolic visual (Euclid–Cygan) comparison, and metric-axiom audits.

use serde::Serialize;

use crate::basis::OrderedBasis;
use crate::error::{Error, Result};
use crate::sample::{rng_for, Sampler};
use crate::solve::{first_contact, first_crossing_below_one, FiberDifference};
use crate::space::{SpacePoint, TriangleAuditReport};

/// The coordinate triple attaining the max in the per-coordinate formula at
/// the solved height: eigenvalue `alpha`, chain length `ell`, output level `j`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct WitnessLevel {
    pub alpha: f64,
    pub ell: usize,
    pub j: usize,
}

/// Result of a boundary distance query. `value = e^{t0}`; `t0` is kept
/// alongside because for widely separated points `value` may overflow while
/// `t0` stays finite. `value = 0` iff `t0 = -∞` iff the points coincide.
#[derive(Clone, Debug, Serialize)]
pub struct BoundaryDistanceResult {
    pub value: f64,
    pub t0: f64,
    pub witness_level: Option<WitnessLevel>,
}

impl OrderedBasis {
    /// Boundary quasimetric via the matrix exponential: `e^{t₀}` with `t₀`
    /// the smallest height at which `‖e^{-t₀A}(p-q)‖_∞ ≤ 1`. Zero when
    /// `p = q`; symmetric; depends on `p - q` only.
    pub fn dm(&self, p: &[f64], q: &[f64]) -> BoundaryDistanceResult {
        let diff = FiberDifference::build(self, p, q);
        if diff.is_zero() {
            return BoundaryDistanceResult {
                value: 0.0,
                t0: f64::NEG_INFINITY,
                witness_level: None,
            };
        }
        let t0 = first_contact(&diff);
        BoundaryDistanceResult { value: t0.exp(), t0, witness_level: self.dm_witness(p, q, t0) }
    }

    /// Boundary quasimetric via the explicit per-coordinate max formula
    /// solved for its first crossing of 1, together with the attaining
    /// `(α, ℓ, j)`. Agrees with [`OrderedBasis::dm`], which is the ground
    /// truth.
    ///
    /// Sign convention: the reference form of the inner sum alternates as
    /// `(-1)^i t^{i-j}/(i-j)!`; relative to the exact expansion of
    /// `e^{-tA}`, whose entries are `(-t)^{i-j}/(i-j)!`, this differs by the
    /// global factor `(-1)^j`, which the absolute value cancels. The signs
    /// implemented here are `(-1)^{i-j}`, reconciled against the
    /// matrix-exponential oracle.
    pub fn dm_coordinate(&self, p: &[f64], q: &[f64]) -> BoundaryDistanceResult {
        assert_eq!(p.len(), self.n());
        assert_eq!(q.len(), self.n());
        let chains: Vec<(f64, Vec<f64>)> = self
            .chains
            .iter()
            .map(|c| (c.alpha, c.coord_at.iter().map(|&i| p[i] - q[i]).collect()))
            .collect();
        if chains.iter().all(|(_, d)| d.iter().all(|&x| x == 0.0)) {
            return BoundaryDistanceResult {
                value: 0.0,
                t0: f64::NEG_INFINITY,
                witness_level: None,
            };
        }

        let term = |alpha: f64, delta: &[f64], j: usize, t: f64| -> f64 {
            // e^{-αt} |Σ_{i=j}^{ℓ} (-1)^{i-j} t^{i-j}/(i-j)! Δx_i|
            let mut sum = 0.0;
            let mut factorial = 1.0;
            let mut power = 1.0;
            for (offset, &dx) in delta[j - 1..].iter().enumerate() {
                if offset > 0 {
                    factorial *= offset as f64;
                    power *= -t;
                }
                sum += power / factorial * dx;
            }
            (-alpha * t).exp() * sum.abs()
        };
        let g = |t: f64| -> f64 {
            let mut best = 0.0f64;
            for (alpha, delta) in &chains {
                for j in 1..=delta.len() {
                    best = best.max(term(*alpha, delta, j, t));
                }
            }
            best
        };

        let floor = chains
            .iter()
            .filter_map(|(alpha, delta)| {
                delta.iter().rposition(|&x| x != 0.0).map(|i| delta[i].abs().ln() / alpha)
            })
            .fold(f64::NEG_INFINITY, f64::max);
        let t0 = first_crossing_below_one(g, floor);

        let mut witness = None;
        let mut best = f64::NEG_INFINITY;
        for (alpha, delta) in &chains {
            for j in 1..=delta.len() {
                let v = term(*alpha, delta, j, t0);
                if v > best {
                    best = v;
                    witness = Some(WitnessLevel { alpha: *alpha, ell: delta.len(), j });
                }
            }
        }
        BoundaryDistanceResult { value: t0.exp(), t0, witness_level: witness }
    }

    fn dm_witness(&self, p: &[f64], q: &[f64], t0: f64) -> Option<WitnessLevel> {
        let image = self.apply_exp(-t0, &p.iter().zip(q).map(|(a, b)| a - b).collect::<Vec<_>>());
        let argmax = image
            .iter()
            .enumerate()
            .max_by(|(_, a), (_, b)| a.abs().total_cmp(&b.abs()))
            .map(|(i, _)| i)?;
        let idx = self.index_of(argmax).ok()?;
        let chain = &self.chains[self.chain_of(argmax)];
        Some(WitnessLevel { alpha: idx.alpha, ell: chain.len, j: idx.ell })
    }

    /// The parabolic visual metric evaluated at finite depth:
    /// `e^{-½(-2t - d_L(p_t, q_t))}` at `t = t_cut`. Once `t_cut` is at
    /// least 5 below the first-contact height this equals `e^{t₀ + ½}`
    /// exactly, i.e. `e^{1/2} · D(p,q)`.
    pub fn euclid_cygan(&self, p: &[f64], q: &[f64], t_cut: f64) -> Result<f64> {
        let diff = FiberDifference::build(self, p, q);
        if diff.is_zero() {
            return Ok(0.0);
        }
        let t0 = first_contact(&diff);
        if t_cut > t0 - 5.0 {
            return Err(Error::Precision(format!(
                "cut height {t_cut} is not at least 5 below the first-contact height {t0}"
            )));
        }
        let d = self.d_l(
            &SpacePoint::new(t_cut, p.to_vec()),
            &SpacePoint::new(t_cut, q.to_vec()),
        );
        Ok((-0.5 * (-2.0 * t_cut - d)).exp())
    }

    /// Max over sampled triples of `D(a,c) / (D(a,b) + D(b,c))`. Every eighth
    /// trial uses a constructed collinear triple `(x, x+d, x+2d)`, the
    /// adversarial configuration for power-law gauges. Deterministic in the
    /// seed; ties resolved by trial order.
    pub fn quasi_triangle_audit(
        &self,
        sampler: &Sampler,
        trials: usize,
        seed: u64,
    ) -> TriangleAuditReport<Vec<f64>> {
        assert!(trials >= 1, "at least one trial");
        let mut max_c = 0.0f64;
        let mut worst = None;
        for trial in 0..trials {
            let mut rng = rng_for(seed, trial as u64);
            let (a, b, c) = if trial % 8 == 7 {
                let a = sampler.point(&mut rng, self.n());
                let d = sampler.point(&mut rng, self.n());
                let b: Vec<f64> = a.iter().zip(&d).map(|(a, d)| a + d).collect();
                let c: Vec<f64> = a.iter().zip(&d).map(|(a, d)| a + 2.0 * d).collect();
                (a, b, c)
            } else {
                (
                    sampler.point(&mut rng, self.n()),
                    sampler.point(&mut rng, self.n()),
                    sampler.point(&mut rng, self.n()),
                )
            };
            let through = self.dm(&a, &b).value + self.dm(&b, &c).value;
            if through <= 0.0 {
                continue;
            }
            let ratio = self.dm(&a, &c).value / through;
            if ratio > max_c {
                max_c = ratio;
                worst = Some((a, b, c));
            }
        }
        TriangleAuditReport { max_c, worst, trials }
    }
}
