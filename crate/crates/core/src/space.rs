//! The interior model: height level sets, the level metrics `d_{t}`, the
//! path-model metric `d_L`, and vertical geodesics.

use serde::{Deserialize, Serialize};

use crate::basis::{BoundaryPoint, OrderedBasis};
use crate::sample::{rng_for, Sampler};
use crate::solve::{first_contact, FiberDifference};

/// A point `(t, p)` of the interior: height `t` over fiber coordinate `p`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpacePoint {
    pub height: f64,
    pub fiber: BoundaryPoint,
}

impl SpacePoint {
    pub fn new(height: f64, fiber: impl Into<BoundaryPoint>) -> Self {
        SpacePoint { height, fiber: fiber.into() }
    }
}

impl OrderedBasis {
    /// The metric on the height-`t` level set: `d_t(p,q) = ‖e^{-tA}(p-q)‖_∞`.
    pub fn level_metric(&self, t: f64, p: &[f64], q: &[f64]) -> f64 {
        assert!(t.is_finite(), "level metric requires finite height");
        FiberDifference::build(self, p, q).norm_at(t)
    }

    /// The smallest height `t₀` with `‖e^{-t₀A}(p-q)‖_∞ ≤ 1`; `-∞` when
    /// `p = q`. Solved by bracketing, a halving first-crossing scan, and
    /// bisection to `1e-12` (the level metric is not globally monotone for
    /// nondiagonal blocks, so the scan guards against skipping the first
    /// crossing).
    pub fn first_contact_height(&self, p: &[f64], q: &[f64]) -> f64 {
        first_contact(&FiberDifference::build(self, p, q))
    }

    /// The path-model metric on the interior. With `t₀` the first-contact
    /// height of the fibers: if `t₀ ≥ max(t, t')` the points are joined
    /// through height `t₀` and `d_L = |t-t₀| + |t₀-t'| + 1`; otherwise, with
    /// the pair relabeled so `t ≥ t'`, `d_L = (t-t') + ‖e^{-tA}(p-q)‖`.
    /// Relabeling makes the lower branch symmetric.
    pub fn d_l(&self, x: &SpacePoint, y: &SpacePoint) -> f64 {
        let diff = FiberDifference::build(self, &x.fiber, &y.fiber);
        let t0 = first_contact(&diff);
        let (t, t_prime) = (x.height, y.height);
        if t0 >= t.max(t_prime) {
            (t - t0).abs() + (t0 - t_prime).abs() + 1.0
        } else {
            let upper = t.max(t_prime);
            (t - t_prime).abs() + diff.norm_at(upper)
        }
    }

    /// The vertical geodesic through boundary point `p`, parametrized by
    /// height.
    pub fn vertical_geodesic(&self, p: &[f64], t: f64) -> SpacePoint {
        assert_eq!(p.len(), self.n(), "point dimension mismatch");
        SpacePoint::new(t, p.to_vec())
    }

    /// Max over sampled triples of `d_L(x,z) / (d_L(x,y) + d_L(y,z))`.
    /// `d_L` is only bilipschitz-equivalent to a true metric, so the audit
    /// reports the observed constant instead of asserting an exact triangle
    /// inequality; branch-boundary discontinuities show up here rather than
    /// being smoothed away.
    pub fn d_l_quasimetric_audit(
        &self,
        sampler: &Sampler,
        trials: usize,
        seed: u64,
    ) -> TriangleAuditReport<SpacePoint> {
        assert!(trials >= 1, "at least one trial");
        let mut max_c = 0.0f64;
        let mut worst = None;
        for trial in 0..trials {
            let mut rng = rng_for(seed, trial as u64);
            let height_span = 5.0;
            let mk = |rng: &mut _| {
                SpacePoint::new(
                    sampler.uniform(rng, height_span),
                    sampler.point(rng, self.n()),
                )
            };
            let (x, y, z) = if trial % 8 == 7 {
                // Collinear fiber triple at a common height.
                let a = sampler.point(&mut rng, self.n());
                let d = sampler.point(&mut rng, self.n());
                let h = sampler.uniform(&mut rng, height_span);
                let b: Vec<f64> = a.iter().zip(&d).map(|(a, d)| a + d).collect();
                let c: Vec<f64> = a.iter().zip(&d).map(|(a, d)| a + 2.0 * d).collect();
                (SpacePoint::new(h, a), SpacePoint::new(h, b), SpacePoint::new(h, c))
            } else {
                (mk(&mut rng), mk(&mut rng), mk(&mut rng))
            };
            let through = self.d_l(&x, &y) + self.d_l(&y, &z);
            if through <= 0.0 {
                continue;
            }
            let c = self.d_l(&x, &z) / through;
            if c > max_c {
                max_c = c;
                worst = Some((x, y, z));
            }
        }
        TriangleAuditReport { max_c, worst, trials }
    }
}

/// Outcome of a triangle-inequality audit.
#[derive(Clone, Debug, Serialize)]
pub struct TriangleAuditReport<P> {
    pub max_c: f64,
    pub worst: Option<(P, P, P)>,
    pub trials: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::JordanSpec;
    use crate::matrix::max_norm;

    fn basis(blocks: Vec<(f64, Vec<usize>)>) -> OrderedBasis {
        OrderedBasis::build(JordanSpec::new(blocks).unwrap()).unwrap()
    }

    #[test]
    fn level_metric_examples() {
        let b = basis(vec![(1.0, vec![1])]);
        assert_eq!(b.level_metric(0.0, &[3.0], &[0.0]), 3.0);
        assert_eq!(b.level_metric(2.5, &[1.0], &[1.0]), 0.0);

        // Difference (0, 1) sits on the level-2 coordinate; e^{-A}(0,1) =
        // e^{-1}(-1, 1), so the max norm is e^{-1}.
        let b = basis(vec![(1.0, vec![2])]);
        let got = b.level_metric(1.0, &[0.0, 1.0], &[0.0, 0.0]);
        assert!((got - (-1.0f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn first_contact_examples() {
        let b = basis(vec![(1.0, vec![1])]);
        assert_eq!(b.first_contact_height(&[2.0], &[2.0]), f64::NEG_INFINITY);

        let b = basis(vec![(2.0, vec![1])]);
        let t0 = b.first_contact_height(&[9.0], &[0.0]);
        assert!((t0 - 9.0f64.ln() / 2.0).abs() < 1e-11);

        // f(t) = e^{-t} max(|t|, 1) crosses 1 exactly at t = 0.
        let b = basis(vec![(1.0, vec![2])]);
        let t0 = b.first_contact_height(&[0.0, 1.0], &[0.0, 0.0]);
        assert!(t0.abs() < 1e-11, "t0 = {t0}");
    }

    #[test]
    fn first_contact_dense_oracle_spot_checks() {
        // Independent dense scan at 1e-4 plus bisection, written against the
        // matrix exponential directly.
        let b = basis(vec![(0.5, vec![2]), (2.0, vec![2, 1])]);
        let p = vec![4.0, -3.0, 0.5, 7.0, -2.0];
        let q = vec![-1.0, 2.0, 0.25, -8.0, 0.0];
        let solver = b.first_contact_height(&p, &q);

        let f = |t: f64| {
            let m = b.exp_ta(-t);
            let d: Vec<f64> = p.iter().zip(&q).map(|(a, c)| a - c).collect();
            max_norm(&m.matvec(&d))
        };
        let mut t = -40.0;
        while f(t) > 1.0 {
            t += 1e-4;
            assert!(t < 60.0);
        }
        let (mut lo, mut hi) = (t - 1e-4, t);
        while hi - lo > 1e-12 {
            let mid = 0.5 * (lo + hi);
            if f(mid) <= 1.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let oracle = 0.5 * (lo + hi);
        assert!((solver - oracle).abs() < 1e-9, "solver {solver} oracle {oracle}");
    }

    #[test]
    fn d_l_examples() {
        // Same fiber, heights 0 and 5: a vertical segment.
        let b = basis(vec![(1.0, vec![1])]);
        let p = b.vertical_geodesic(&[1.5], 0.0);
        let q = b.vertical_geodesic(&[1.5], 5.0);
        assert_eq!(b.d_l(&p, &q), 5.0);

        // Scalar, widely separated fibers: through-the-top branch.
        let x = SpacePoint::new(0.0, vec![0.0]);
        let y = SpacePoint::new(0.0, vec![10.0f64.exp()]);
        assert!((b.d_l(&x, &y) - 21.0).abs() < 1e-9);

        // t0 = 0 < 2: lower branch, (2-0) + e^{-2}.
        let x = SpacePoint::new(2.0, vec![0.0]);
        let y = SpacePoint::new(0.0, vec![1.0]);
        assert!((b.d_l(&x, &y) - (2.0 + (-2.0f64).exp())).abs() < 1e-9);

        assert_eq!(b.d_l(&x, &x), 0.0);
    }

    #[test]
    fn d_l_symmetry_and_branch_consistency() {
        let b = basis(vec![(1.0, vec![2]), (2.0, vec![1])]);
        let sampler = Sampler::new(10.0);
        for trial in 0..200u64 {
            let mut rng = rng_for(9, trial);
            let x = SpacePoint::new(sampler.uniform(&mut rng, 4.0), sampler.point(&mut rng, 3));
            let y = SpacePoint::new(sampler.uniform(&mut rng, 4.0), sampler.point(&mut rng, 3));
            let d_xy = b.d_l(&x, &y);
            let d_yx = b.d_l(&y, &x);
            assert!((d_xy - d_yx).abs() <= 1e-12 * d_xy.max(1.0));
        }

        // At t = t' = t0 the upper branch gives exactly 1 and the lower
        // branch would give the level metric at t0, also 1; they agree to
        // within the additive constant and the implementation picks the
        // upper branch.
        let p = vec![3.0, -1.0, 2.0];
        let q = vec![-2.0, 0.5, 1.0];
        let t0 = b.first_contact_height(&p, &q);
        let d = b.d_l(&SpacePoint::new(t0, p.clone()), &SpacePoint::new(t0, q.clone()));
        assert!((d - 1.0).abs() < 1e-9);
        let lower = b.level_metric(t0, &p, &q);
        assert!((d - lower).abs() <= 1.0 + 1e-9);
    }

    #[test]
    fn monotone_separation() {
        let b = basis(vec![(0.5, vec![2]), (1.0, vec![1])]);
        let sampler = Sampler::new(10.0);
        for trial in 0..50u64 {
            let mut rng = rng_for(11, trial);
            let p = sampler.point(&mut rng, 3);
            let mut q = sampler.point(&mut rng, 3);
            if max_norm(&p.iter().zip(&q).map(|(a, b)| a - b).collect::<Vec<_>>()) < 1e-3 {
                q[0] += 1.0;
            }
            assert!(b.level_metric(100.0, &p, &q) < 1e-10);
            assert!(b.level_metric(-100.0, &p, &q) > 1e10);
        }
    }

    #[test]
    fn vertical_geodesic_height() {
        let b = basis(vec![(1.0, vec![1])]);
        assert_eq!(b.vertical_geodesic(&[2.0], 0.0).height, 0.0);
        assert_eq!(b.vertical_geodesic(&[2.0], -7.0).height, -7.0);
        assert_eq!(b.vertical_geodesic(&[2.0], 3.25).height, 3.25);
    }
}
