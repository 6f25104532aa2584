//! First-crossing machinery for the level metric.
//!
//! For a fixed fiber difference `Δ = p - q` the function
//! `f(t) = ‖e^{-tA} Δ‖_∞` tends to `+∞` as `t → -∞` and to `0` as
//! `t → +∞` (all eigenvalues of `A` are positive), but it is not monotone:
//! the polynomial factors of nontrivial Jordan blocks can produce local dips.
//! The first-contact height is `t₀ = inf { t : f(t) ≤ 1 }`, so a naive
//! bisection can land on a later crossing. The solver below brackets by
//! doubling, scans for the first crossing with a step that halves until the
//! detected bracket is stable, runs one fine verification sweep over the
//! remaining left segment, and finishes with bisection on the predicate
//! `f(t) ≤ 1`.

use crate::basis::OrderedBasis;

pub(crate) const SOLVER_TOL: f64 = 1e-12;

/// Per-chain view of a fiber difference; evaluates `‖e^{-tA}Δ‖_∞` in closed
/// form without allocating.
pub(crate) struct FiberDifference {
    chains: Vec<ChainDiff>,
}

struct ChainDiff {
    alpha: f64,
    /// Difference coefficients by ascending level, i.e. `coeffs[ℓ-1]` is the
    /// level-`ℓ` coordinate of `Δ` on this chain.
    coeffs: Vec<f64>,
    /// Largest `ℓ` with a nonzero coefficient (1-based), 0 if none.
    top: usize,
}

impl FiberDifference {
    pub fn build(basis: &OrderedBasis, p: &[f64], q: &[f64]) -> Self {
        assert_eq!(p.len(), basis.n(), "point dimension mismatch");
        assert_eq!(q.len(), basis.n(), "point dimension mismatch");
        let chains = basis
            .chains
            .iter()
            .map(|chain| {
                let coeffs: Vec<f64> =
                    chain.coord_at.iter().map(|&pos| p[pos] - q[pos]).collect();
                let top = coeffs.iter().rposition(|&c| c != 0.0).map_or(0, |i| i + 1);
                ChainDiff { alpha: chain.alpha, coeffs, top }
            })
            .collect();
        FiberDifference { chains }
    }

    pub fn is_zero(&self) -> bool {
        self.chains.iter().all(|c| c.top == 0)
    }

    /// With every chain supported at level 1 only, the norm is a max of
    /// pure exponentials, hence strictly decreasing.
    fn is_monotone(&self) -> bool {
        self.chains.iter().all(|c| c.top <= 1)
    }

    /// `‖e^{-tA}Δ‖_∞`.
    pub fn norm_at(&self, t: f64) -> f64 {
        let mut best = 0.0f64;
        for chain in &self.chains {
            if chain.top == 0 {
                continue;
            }
            let scale = (-t * chain.alpha).exp();
            best = best.max(scale * chain.poly_norm(t));
        }
        best
    }

    /// Provable lower bound for `t₀`: the top nonzero coefficient of each
    /// chain has no polynomial factor, so `e^{-αt}|Δ_top| ≤ 1` forces
    /// `t ≥ ln|Δ_top| / α`.
    pub fn crossing_floor(&self) -> f64 {
        self.chains
            .iter()
            .filter(|c| c.top > 0)
            .map(|c| c.coeffs[c.top - 1].abs().ln() / c.alpha)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// First grid point `t` in `start, start+step, …` (at most `max_steps`)
    /// with `f(t) ≤ 1`. Exponentials advance incrementally; candidates are
    /// confirmed with a full evaluation.
    pub fn scan_first_leq_one(&self, start: f64, step: f64, max_steps: usize) -> Option<f64> {
        let mut scales: Vec<f64> =
            self.chains.iter().map(|c| (-start * c.alpha).exp()).collect();
        let factors: Vec<f64> = self.chains.iter().map(|c| (-step * c.alpha).exp()).collect();
        for k in 0..max_steps {
            let t = start + step * k as f64;
            let mut norm = 0.0f64;
            for (chain, &scale) in self.chains.iter().zip(&scales) {
                if chain.top == 0 {
                    continue;
                }
                norm = norm.max(scale * chain.poly_norm(t));
            }
            if norm <= 1.0 && self.norm_at(t) <= 1.0 {
                return Some(t);
            }
            for (s, f) in scales.iter_mut().zip(&factors) {
                *s *= f;
            }
        }
        None
    }
}

impl ChainDiff {
    /// `max_j |Σ_{m≥0} (-t)^m/m! · Δ_{j+m}|` over output levels `j` of this
    /// chain — the polynomial part of `‖(e^{-tA}Δ)|_chain‖_∞`.
    #[inline]
    fn poly_norm(&self, t: f64) -> f64 {
        let mut best = 0.0f64;
        for j in 1..=self.top {
            let mut acc = 0.0;
            let mut coeff = 1.0;
            for (m, &c) in self.coeffs[j - 1..self.top].iter().enumerate() {
                acc += coeff * c;
                coeff *= -t / (m + 1) as f64;
            }
            best = best.max(acc.abs());
        }
        best
    }
}

/// `inf { t : f(t) ≤ 1 }` for an `f` that blows up to the left and decays to
/// the right. Returns `NEG_INFINITY` for an identically-zero difference.
pub(crate) fn first_contact(diff: &FiberDifference) -> f64 {
    if diff.is_zero() {
        return f64::NEG_INFINITY;
    }
    let floor = diff.crossing_floor();

    // Left bracket: walk down from the floor until f > 1.
    let mut t_lo = floor;
    let mut step = 0.5;
    while diff.norm_at(t_lo) <= 1.0 {
        t_lo -= step;
        step *= 2.0;
        if step > 1e30 {
            unreachable!("level metric must exceed 1 for small heights");
        }
    }
    // Right bracket: walk up until f <= 1.
    let mut t_hi = floor.max(t_lo);
    step = 0.5;
    while diff.norm_at(t_hi) > 1.0 {
        t_hi += step;
        step *= 2.0;
        if step > 1e30 {
            unreachable!("level metric must decay below 1 for large heights");
        }
    }

    if diff.is_monotone() {
        // Single crossing; no scan needed.
        let (mut lo, mut hi) = (t_lo, t_hi);
        while hi - lo > SOLVER_TOL {
            let mid = 0.5 * (lo + hi);
            if diff.norm_at(mid) <= 1.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        return 0.5 * (lo + hi);
    }

    // First-crossing scan, halving the step until the bracket stabilizes.
    let mut h = 0.5;
    let mut hit = t_hi;
    loop {
        let steps = ((hit - t_lo) / h).ceil() as usize + 2;
        if let Some(t) = diff.scan_first_leq_one(t_lo, h, steps) {
            hit = t;
        }
        if h <= 1.0 / 256.0 {
            break;
        }
        h /= 2.0;
    }
    // Fine sweep over what remains on the left in case a narrow dip crosses
    // first.
    if hit - t_lo > 1e-3 {
        let steps = ((hit - t_lo) / 1e-3).ceil() as usize + 1;
        if let Some(t) = diff.scan_first_leq_one(t_lo, 1e-3, steps) {
            hit = hit.min(t);
        }
    }

    // Bisection on the predicate f(t) <= 1 inside [hit - h_last, hit].
    let mut lo = (hit - 1e-3).max(t_lo - 1.0);
    if diff.norm_at(lo) <= 1.0 {
        // The crossing is at or left of the scan start; tighten from t_lo.
        lo = t_lo;
    }
    let mut hi = hit;
    while hi - lo > SOLVER_TOL {
        let mid = 0.5 * (lo + hi);
        if diff.norm_at(mid) <= 1.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Generic first crossing of `g(t) ≤ 1` for evaluators with the same shape
/// (blow-up left, decay right), used by the coordinate-formula route.
pub(crate) fn first_crossing_below_one(
    g: impl Fn(f64) -> f64,
    floor: f64,
) -> f64 {
    let mut t_lo = floor;
    let mut step = 0.5;
    while g(t_lo) <= 1.0 {
        t_lo -= step;
        step *= 2.0;
        assert!(step <= 1e30, "no blow-up on the left");
    }
    let mut t_hi = floor.max(t_lo);
    step = 0.5;
    while g(t_hi) > 1.0 {
        t_hi += step;
        step *= 2.0;
        assert!(step <= 1e30, "no decay on the right");
    }
    let mut h = 0.5;
    let mut hit = t_hi;
    loop {
        let steps = ((hit - t_lo) / h).ceil() as usize + 2;
        for k in 0..steps {
            let t = t_lo + h * k as f64;
            if g(t) <= 1.0 {
                hit = hit.min(t);
                break;
            }
        }
        if h <= 1.0 / 256.0 {
            break;
        }
        h /= 2.0;
    }
    if hit - t_lo > 1e-3 {
        let steps = ((hit - t_lo) / 1e-3).ceil() as usize + 1;
        for k in 0..steps {
            let t = t_lo + 1e-3 * k as f64;
            if g(t) <= 1.0 {
                hit = hit.min(t);
                break;
            }
        }
    }
    let mut lo = (hit - 1e-3).max(t_lo - 1.0);
    if g(lo) <= 1.0 {
        lo = t_lo;
    }
    let mut hi = hit;
    while hi - lo > SOLVER_TOL {
        let mid = 0.5 * (lo + hi);
        if g(mid) <= 1.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}
