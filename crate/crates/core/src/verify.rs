//! Structural verifiers for boundary self-maps: bilipschitz-constant
//! estimation, foliation preservation, divergence witnesses, modulus-of-
//! continuity curves, rotation-blowup and shear-cocycle experiments.
//!
//! Estimates from sampling are certificates in one direction only: a
//! bilipschitz constant is certified from below by the worst observed
//! distortion, and non-bilipschitzness is certified by a pair whose chain
//! functional jumps from a finite value to divergence under the map. Upper
//! bilipschitz certification for black-box maps is out of reach.

use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use crate::basis::{Level, OrderedBasis};
use crate::error::{Error, Result};
use crate::length::{Classification, ClassifyParams, Kind};
use crate::maps::{BlockFn, MapDescriptor, TriangularMap};
use crate::matrix::{euclid_norm, Matrix};
use crate::sample::{rng_for, Sampler};

/// Lower estimate of a bilipschitz constant from sampled pairs.
#[derive(Clone, Debug, Serialize)]
pub struct BilipEstimate {
    /// `max(max_ratio, 1/min_ratio)`; a lower bound on the true constant.
    pub khat: f64,
    /// Present when every observed ratio agrees to within `1e-9` relative:
    /// the map acted as a similarity with this factor (and `khat = 1`).
    pub sim_factor: Option<f64>,
    pub min_ratio: f64,
    pub max_ratio: f64,
    /// The pair attaining the worst distortion.
    pub witness: (Vec<f64>, Vec<f64>),
}

/// Outcome of a foliation-preservation check.
#[derive(Clone, Debug, Serialize)]
pub enum FoliationOutcome {
    Pass,
    Witness { p: Vec<f64>, q: Vec<f64>, image_level: Level },
}

impl FoliationOutcome {
    pub fn is_pass(&self) -> bool {
        matches!(self, FoliationOutcome::Pass)
    }
}

/// Outcome of the divergence-witness search.
#[derive(Clone, Debug, Serialize)]
pub enum NonBilipOutcome {
    Witness {
        p: Vec<f64>,
        q: Vec<f64>,
        pre: Classification,
        post: Classification,
    },
    NotFound,
}

impl NonBilipOutcome {
    pub fn is_witness(&self) -> bool {
        matches!(self, NonBilipOutcome::Witness { .. })
    }
}

/// One modulus-of-continuity curve: observed sup displacement of a target
/// level against perturbation size at a source level, with its monotone
/// envelope.
#[derive(Clone, Debug, Serialize)]
pub struct ModulusCurve {
    /// `(w, sup displacement)` per grid point, ascending in `w`.
    pub samples: Vec<(f64, f64)>,
    /// Nondecreasing envelope over the samples.
    pub envelope: Vec<(f64, f64)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum BlowupVerdict {
    Violation,
    NoBlowup,
}

/// Rows of the rotation-blowup experiment: for each radius, the image
/// displacement of the antipodal construction and the (constant) distance of
/// the preimage pair.
#[derive(Clone, Debug, Serialize)]
pub struct RotationBlowupReport {
    pub rows: Vec<BlowupRow>,
    /// Top singular value of the rotation difference; the displacement
    /// growth rate.
    pub sigma: f64,
    pub verdict: BlowupVerdict,
}

#[derive(Clone, Debug, Serialize)]
pub struct BlowupRow {
    pub radius: f64,
    pub displacement: f64,
    pub preimage_dm: f64,
}

/// Inputs of the rotation-blowup experiment: two leaf rotations and
/// translations at one level, two base leaves, and the radii to probe.
pub struct RotationBlowupConfig {
    pub level: Level,
    pub rot_a: Matrix,
    pub rot_b: Matrix,
    pub trans_a: Vec<f64>,
    pub trans_b: Vec<f64>,
    pub leaf_a: Vec<f64>,
    pub leaf_b: Vec<f64>,
    pub radii: Vec<f64>,
}

/// Observed oscillation data for a unipotent shear under iteration.
#[derive(Clone, Debug, Serialize)]
pub struct ShearBoundReport {
    /// `|B_{γⁿ}(y) - B_{γⁿ}(y')|` for n = 1..n_max.
    pub iterate_osc: Vec<f64>,
    /// `|B_γ(γˢy) - B_γ(y)|` for s = 1..n_max.
    pub step_osc_a: Vec<f64>,
    /// Same for `y'`.
    pub step_osc_b: Vec<f64>,
    /// `iterate_osc[n]/n + max step oscillation of both leaves`, the
    /// averaging bound that must dominate `|B_γ(y) - B_γ(y')|`.
    pub per_n_bound: Vec<f64>,
    pub base_osc: f64,
    /// Whether `base_osc ≤ per_n_bound[n] + 1e-9` held for every n.
    pub bound_observed: bool,
}

impl OrderedBasis {
    /// Sample pairs and report the worst distortion ratio of the boundary
    /// quasimetric under `map`. Every fourth trial perturbs a single
    /// coordinate so axis-aligned distortions are always probed. Pairs at
    /// distance zero are skipped.
    pub fn bilip_constant_estimate(
        &self,
        map: &MapDescriptor,
        sampler: &Sampler,
        trials: usize,
        seed: u64,
    ) -> BilipEstimate {
        assert!(trials >= 1);
        let mut min_ratio = f64::INFINITY;
        let mut max_ratio = 0.0f64;
        let mut witness_min = (Vec::new(), Vec::new());
        let mut witness_max = (Vec::new(), Vec::new());
        let mut seen = false;
        for trial in 0..trials {
            let mut rng = rng_for(seed, trial as u64);
            let (p, q) = if trial % 4 == 3 {
                let p = sampler.point(&mut rng, self.n());
                let mut q = p.clone();
                let pos = (trial / 4) % self.n();
                q[pos] += sampler.uniform(&mut rng, sampler.radius).abs().max(1e-3);
                (p, q)
            } else {
                sampler.distinct_pair(&mut rng, self.n(), 1e-9)
            };
            let base = self.dm(&p, &q).value;
            if base == 0.0 {
                continue;
            }
            let ratio = self.dm(&map.apply(self, &p), &map.apply(self, &q)).value / base;
            seen = true;
            if ratio < min_ratio {
                min_ratio = ratio;
                witness_min = (p.clone(), q.clone());
            }
            if ratio > max_ratio {
                max_ratio = ratio;
                witness_max = (p, q);
            }
        }
        assert!(seen, "no usable pairs sampled");
        let spread = max_ratio / min_ratio;
        if spread <= 1.0 + 1e-9 {
            BilipEstimate {
                khat: 1.0,
                sim_factor: Some((min_ratio * max_ratio).sqrt()),
                min_ratio,
                max_ratio,
                witness: witness_max,
            }
        } else {
            let khat = max_ratio.max(1.0 / min_ratio);
            let witness = if max_ratio >= 1.0 / min_ratio { witness_max } else { witness_min };
            BilipEstimate { khat, sim_factor: None, min_ratio, max_ratio, witness }
        }
    }

    /// Sample pairs lying in a common coset of the foliation at `level`
    /// (difference supported on the levels it dominates) and check that the
    /// images stay in a common coset. Returns the first violating pair with
    /// the dominant level its image difference reaches.
    pub fn foliation_check(
        &self,
        map: &MapDescriptor,
        level: Level,
        sampler: &Sampler,
        trials: usize,
        seed: u64,
        tol: f64,
    ) -> Result<FoliationOutcome> {
        assert!(trials >= 1);
        let subordinate = self.subordinate_positions(level)?;
        if subordinate.is_empty() {
            return Ok(FoliationOutcome::Pass);
        }
        for trial in 0..trials {
            let mut rng = rng_for(seed, trial as u64);
            let p = sampler.point(&mut rng, self.n());
            let amount = sampler.uniform(&mut rng, sampler.radius).abs().max(1e-3);
            let dir = sampler.block_direction(&mut rng, self.n(), &subordinate);
            let q: Vec<f64> = p.iter().zip(&dir).map(|(a, d)| a + amount * d).collect();
            let fp = map.apply(self, &p);
            let fq = map.apply(self, &q);
            let mut offending: Option<Level> = None;
            for i in 0..self.n() {
                if subordinate.contains(&i) {
                    continue;
                }
                if (fp[i] - fq[i]).abs() > tol {
                    let l = self.index_of(i)?.level();
                    offending = match offending {
                        Some(prev) if prev.dominates(&l) => Some(prev),
                        _ => Some(l),
                    };
                }
            }
            if let Some(image_level) = offending {
                return Ok(FoliationOutcome::Witness { p, q, image_level });
            }
        }
        Ok(FoliationOutcome::Pass)
    }

    /// Search for a pair whose chain functional at `level` is finite but
    /// diverges after the map: sound refutation of bilipschitzness. The
    /// preimage pair differs in a single coordinate of `level`, so its
    /// classification is exact; divergence of the image is accepted either
    /// from the classifier or from lower-bound evidence growing by more
    /// than `10³` across the schedule.
    pub fn nonbilip_witness_via_triangle(
        &self,
        map: &MapDescriptor,
        level: Level,
        sampler: &Sampler,
        trials: usize,
        seed: u64,
        params: &ClassifyParams,
    ) -> Result<NonBilipOutcome> {
        assert!(trials >= 1);
        let range = self.level_range(level)?;
        for trial in 0..trials {
            let mut rng = rng_for(seed, trial as u64);
            let p = sampler.point(&mut rng, self.n());
            let mut q = p.clone();
            let slot = range.start + rng.gen_range(0..range.len());
            q[slot] += sampler.uniform(&mut rng, sampler.radius).abs().max(1e-2);
            let pre = self.classify_triangle(&p, &q, level, params)?;
            if pre.kind != Kind::Finite {
                continue;
            }
            let post =
                self.classify_triangle(&map.apply(self, &p), &map.apply(self, &q), level, params)?;
            let lowers: Vec<f64> = post.evidence.iter().map(|b| b.lower).collect();
            let diverging = post.kind == Kind::Infinite
                || (lowers.windows(2).all(|w| w[1] > w[0])
                    && lowers.last().unwrap() > &(1e3 * lowers[0].max(f64::MIN_POSITIVE)));
            if diverging {
                return Ok(NonBilipOutcome::Witness { p, q, pre, post });
            }
        }
        Ok(NonBilipOutcome::NotFound)
    }

    /// Perturb `source` coordinates by each size in `grid` and record the
    /// sup displacement of the `target` block under `map`, with the
    /// monotone envelope. `source` must dominate `target`, matching the
    /// modulus bound's hypothesis.
    pub fn xi_modulus_curve(
        &self,
        map: &MapDescriptor,
        source: Level,
        target: Level,
        grid: &[f64],
        samples_per_size: usize,
        sampler: &Sampler,
        seed: u64,
    ) -> Result<ModulusCurve> {
        let source_range = self.level_range(source)?;
        let target_range = self.level_range(target)?;
        if !source.dominates(&target) {
            return Err(Error::domain(format!(
                "source level {source} must dominate target level {target}"
            )));
        }
        if grid.is_empty() || grid.iter().any(|&w| !(w > 0.0)) {
            return Err(Error::domain("perturbation grid must be positive"));
        }
        let mut sizes: Vec<f64> = grid.to_vec();
        sizes.sort_by(f64::total_cmp);
        let source_positions: Vec<usize> = source_range.collect();
        let mut samples = Vec::with_capacity(sizes.len());
        for (wi, &w) in sizes.iter().enumerate() {
            let mut sup = 0.0f64;
            for s in 0..samples_per_size {
                let mut rng = rng_for(seed, (wi * samples_per_size + s) as u64);
                let p = sampler.point(&mut rng, self.n());
                let dir = sampler.block_direction(&mut rng, self.n(), &source_positions);
                let q: Vec<f64> = p.iter().zip(&dir).map(|(a, d)| a + w * d).collect();
                let fp = map.apply(self, &p);
                let fq = map.apply(self, &q);
                let disp: Vec<f64> =
                    target_range.clone().map(|i| fp[i] - fq[i]).collect();
                sup = sup.max(euclid_norm(&disp));
            }
            samples.push((w, sup));
        }
        let mut envelope = Vec::with_capacity(samples.len());
        let mut running = 0.0f64;
        for &(w, v) in &samples {
            running = running.max(v);
            envelope.push((w, running));
        }
        Ok(ModulusCurve { samples, envelope })
    }

    /// The uniform-rotation-constant experiment: if the leaf rotations of an
    /// affine quasi-similarity differed between two leaves, the image
    /// displacement of `z ↦ (rot_a - rot_b)z` would grow linearly in `|z|`
    /// while the preimage pair `x = z - B_a`, `x' = z - B_b` keeps constant
    /// separation. Probes the top singular direction at each radius.
    pub fn rotation_blowup_experiment(
        &self,
        cfg: &RotationBlowupConfig,
    ) -> Result<RotationBlowupReport> {
        let range = self.level_range(cfg.level)?;
        let d = range.len();
        for (name, m) in [("rot_a", &cfg.rot_a), ("rot_b", &cfg.rot_b)] {
            if m.rows() != d || m.cols() != d {
                return Err(Error::domain(format!("{name} must be {d} x {d}")));
            }
            if !m.is_orthogonal(1e-10) {
                return Err(Error::domain(format!("{name} is not orthogonal")));
            }
        }
        if cfg.trans_a.len() != d || cfg.trans_b.len() != d {
            return Err(Error::domain("translations must match the level block size"));
        }
        let suffix_len = self.n() - range.end;
        if cfg.leaf_a.len() != suffix_len || cfg.leaf_b.len() != suffix_len {
            return Err(Error::domain(format!(
                "leaf coordinates must have the dominating-suffix dimension {suffix_len}"
            )));
        }
        if cfg.radii.is_empty() || cfg.radii.iter().any(|&r| !(r > 0.0)) {
            return Err(Error::domain("radii must be positive"));
        }

        let diff = cfg.rot_a.sub(&cfg.rot_b);
        if diff.max_abs() <= 1e-10 {
            return Ok(RotationBlowupReport {
                rows: Vec::new(),
                sigma: 0.0,
                verdict: BlowupVerdict::NoBlowup,
            });
        }
        let (direction, sigma) = top_singular(&diff);

        let embed = |block: &[f64], leaf: &[f64]| -> Vec<f64> {
            let mut p = vec![0.0; self.n()];
            p[range.clone()].copy_from_slice(block);
            p[range.end..].copy_from_slice(leaf);
            p
        };
        let mut rows = Vec::with_capacity(cfg.radii.len());
        for &r in &cfg.radii {
            let z: Vec<f64> = direction.iter().map(|v| r * v).collect();
            let moved: Vec<f64> = cfg
                .rot_a
                .matvec(&z)
                .iter()
                .zip(cfg.rot_b.matvec(&z))
                .map(|(a, b)| a - b)
                .collect();
            let x_a: Vec<f64> = z.iter().zip(&cfg.trans_a).map(|(z, b)| z - b).collect();
            let x_b: Vec<f64> = z.iter().zip(&cfg.trans_b).map(|(z, b)| z - b).collect();
            let preimage_dm =
                self.dm(&embed(&x_a, &cfg.leaf_a), &embed(&x_b, &cfg.leaf_b)).value;
            rows.push(BlowupRow { radius: r, displacement: euclid_norm(&moved), preimage_dm });
        }
        let pre_min = rows.iter().map(|r| r.preimage_dm).fold(f64::INFINITY, f64::min);
        let pre_max = rows.iter().map(|r| r.preimage_dm).fold(0.0, f64::max);
        let pre_constant = pre_max - pre_min <= 1e-9 * pre_max.max(1.0);
        let growing = rows.len() < 2
            || rows.last().unwrap().displacement
                > 0.5 * sigma * rows.last().unwrap().radius;
        let verdict = if pre_constant && growing && sigma > 0.0 {
            BlowupVerdict::Violation
        } else {
            BlowupVerdict::NoBlowup
        };
        Ok(RotationBlowupReport { rows, sigma, verdict })
    }

    /// Check the iterate identity of a unipotent shear: the level-`L`
    /// displacement of `γⁿ` equals the sum of the level-`L` displacements of
    /// `γ` along the orbit of the dominating coordinates. Returns the max
    /// residual over all levels and slots.
    pub fn cocycle_iterate_check(
        &self,
        shear: &crate::maps::UnipotentShear,
        base: &[f64],
        n: usize,
    ) -> f64 {
        assert!(n >= 1, "at least one iterate");
        assert_eq!(base.len(), self.n());
        let levels = self.levels();
        let mut sums: Vec<Vec<f64>> = levels
            .iter()
            .map(|&l| vec![0.0; self.level_range(l).expect("level").len()])
            .collect();
        let mut z = base.to_vec();
        for _ in 0..n {
            for (li, &level) in levels.iter().enumerate() {
                let disp = shear.displacement(self, level, &z);
                for (acc, d) in sums[li].iter_mut().zip(&disp) {
                    *acc += d;
                }
            }
            let mapped = MapDescriptor::UnipotentShear(shear.clone()).apply(self, &z);
            z = mapped;
        }
        let mut residual = 0.0f64;
        for (li, &level) in levels.iter().enumerate() {
            let range = self.level_range(level).expect("level");
            for (offset, i) in range.enumerate() {
                let lhs = z[i] - base[i];
                residual = residual.max((lhs - sums[li][offset]).abs());
            }
        }
        residual
    }

    /// Track the oscillation of one level's shear displacement under
    /// iteration and report whether the averaging bound
    /// `|B_γ(y) - B_γ(y')| ≤ osc_n/n + step oscillations` is observed.
    pub fn shear_bound_experiment(
        &self,
        shear: &crate::maps::UnipotentShear,
        level: Level,
        leaf_a: &[f64],
        leaf_b: &[f64],
        n_max: usize,
    ) -> Result<ShearBoundReport> {
        if n_max < 2 {
            return Err(Error::domain("n_max must be at least 2"));
        }
        let range = self.level_range(level)?;
        let suffix_len = self.n() - range.end;
        if leaf_a.len() != suffix_len || leaf_b.len() != suffix_len {
            return Err(Error::domain(format!(
                "leaf coordinates must have the dominating-suffix dimension {suffix_len}"
            )));
        }
        let embed = |leaf: &[f64]| {
            let mut p = vec![0.0; self.n()];
            p[range.end..].copy_from_slice(leaf);
            p
        };
        let gamma = MapDescriptor::UnipotentShear(shear.clone());
        let b_at = |point: &[f64]| shear.displacement(self, level, point);
        let osc = |a: &[f64], b: &[f64]| {
            a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0f64, f64::max)
        };

        let p_a = embed(leaf_a);
        let p_b = embed(leaf_b);
        let base_osc = osc(&b_at(&p_a), &b_at(&p_b));

        let mut iterate_osc = Vec::with_capacity(n_max);
        let mut step_osc_a = Vec::with_capacity(n_max);
        let mut step_osc_b = Vec::with_capacity(n_max);
        let mut za = p_a.clone();
        let mut zb = p_b.clone();
        let mut sums_a = vec![0.0; range.len()];
        let mut sums_b = vec![0.0; range.len()];
        let b0_a = b_at(&p_a);
        let b0_b = b_at(&p_b);
        for _ in 1..=n_max {
            for (acc, d) in sums_a.iter_mut().zip(b_at(&za)) {
                *acc += d;
            }
            for (acc, d) in sums_b.iter_mut().zip(b_at(&zb)) {
                *acc += d;
            }
            // B_{γⁿ}(y) is the accumulated displacement.
            iterate_osc.push(osc(&sums_a, &sums_b));
            za = gamma.apply(self, &za);
            zb = gamma.apply(self, &zb);
            step_osc_a.push(osc(&b_at(&za), &b0_a));
            step_osc_b.push(osc(&b_at(&zb), &b0_b));
        }
        let mut per_n_bound = Vec::with_capacity(n_max);
        let mut max_step_a = 0.0f64;
        let mut max_step_b = 0.0f64;
        let mut observed = true;
        for n in 1..=n_max {
            max_step_a = max_step_a.max(step_osc_a[n - 1]);
            max_step_b = max_step_b.max(step_osc_b[n - 1]);
            let bound = iterate_osc[n - 1] / n as f64 + max_step_a + max_step_b;
            per_n_bound.push(bound);
            if base_osc > bound + 1e-9 {
                observed = false;
            }
        }
        Ok(ShearBoundReport {
            iterate_osc,
            step_osc_a,
            step_osc_b,
            per_n_bound,
            base_osc,
            bound_observed: observed,
        })
    }
}

fn top_singular(m: &Matrix) -> (Vec<f64>, f64) {
    let gram = m.transpose().matmul(m);
    let d = gram.rows();
    let mut v = vec![0.0; d];
    v[0] = 1.0;
    for it in 0..256 {
        let mut w = gram.matvec(&v);
        let norm = euclid_norm(&w);
        if norm < 1e-300 {
            // Restart from another axis; D ≠ 0 guarantees some direction works.
            v = vec![0.0; d];
            v[(it + 1) % d] = 1.0;
            continue;
        }
        for x in &mut w {
            *x /= norm;
        }
        v = w;
    }
    let sigma = euclid_norm(&m.matvec(&v));
    (v, sigma)
}

/// A random triangular map: each level's block is scaled by a nonzero
/// factor, shifted, and perturbed by bounded functions of the dominating
/// suffix. Structurally foliation-preserving by construction.
pub fn random_triangular(basis: &OrderedBasis, seed: u64) -> MapDescriptor {
    let mut rng = rng_for(seed, 0);
    let mut fns: Vec<BlockFn> = Vec::new();
    for level in basis.levels().into_iter().rev() {
        let range = basis.level_range(level).expect("level from basis");
        let d = range.len();
        let scale = {
            let magnitude = rng.gen_range(0.5..2.0);
            if rng.gen_bool(0.5) {
                -magnitude
            } else {
                magnitude
            }
        };
        let shift: Vec<f64> = (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let weights: Vec<f64> = (0..basis.n() - range.end)
            .map(|_| rng.gen_range(-2.0..2.0))
            .collect();
        let phase: f64 = rng.gen_range(0.0..6.28);
        let coupling: f64 = rng.gen_range(-2.0..2.0);
        fns.push(Arc::new(move |own: &[f64], dominating: &[f64]| {
            let mix: f64 = dominating.iter().zip(&weights).map(|(x, w)| x * w).sum();
            let bump = coupling * (mix + phase).sin();
            own.iter().zip(&shift).map(|(x, b)| scale * x + b + bump).collect()
        }) as BlockFn);
    }
    MapDescriptor::Triangular(TriangularMap::new(basis, fns).expect("one fn per level"))
}

/// The linear map exchanging the blocks of two same-size levels; the
/// standard example of a leaf-breaking map.
pub fn swap_levels_map(basis: &OrderedBasis, a: Level, b: Level) -> Result<MapDescriptor> {
    let ra = basis.level_range(a)?;
    let rb = basis.level_range(b)?;
    if ra.len() != rb.len() {
        return Err(Error::domain(format!("levels {a} and {b} have different block sizes")));
    }
    let mut m = Matrix::identity(basis.n());
    for (i, j) in ra.clone().zip(rb.clone()) {
        m.set(i, i, 0.0);
        m.set(j, j, 0.0);
        m.set(i, j, 1.0);
        m.set(j, i, 1.0);
    }
    MapDescriptor::linear(m)
}
