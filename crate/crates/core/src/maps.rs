//! Boundary self-map descriptors.
//!
//! Storage order increases in dominance, so the coordinates of all levels
//! strictly dominating a level form the *suffix* of the vector after that
//! level's block. Structured maps exploit this:
//!
//! * [`TriangularMap`] — per-level functions that receive their own block
//!   and the dominating suffix, nothing else. Reading subordinate
//!   coordinates is impossible by construction, which turns foliation
//!   preservation into a type-level property.
//! * [`AffineQSim`] — `x ↦ M^s·Λ·R·(x + B)` with `R` per-level orthogonal,
//!   `Λ` optional per-level positive scales, `B` a translation.
//! * [`UnipotentShear`] — `x_L ↦ x_L + B_L(dominating coordinates)`, with
//!   the most dominant level shifted by a constant; exactly invertible by
//!   back-substitution from the top of the flag.
//! * [`SampledMap`] — an arbitrary black-box evaluator.
//!
//! Affine quasi-similarities and polynomial unipotent shears have a JSON
//! form (see [`map_from_json`]); arbitrary functions are library-only.

use std::sync::Arc;

use serde::Deserialize;

use crate::basis::{Level, OrderedBasis};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub type BlockFn = Arc<dyn Fn(&[f64], &[f64]) -> Vec<f64> + Send + Sync>;
pub type PointFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

const ORTHOGONALITY_TOL: f64 = 1e-10;

/// A boundary self-map in one of the structured forms, or a black box.
#[derive(Clone)]
pub enum MapDescriptor {
    Triangular(TriangularMap),
    AffineQSim(AffineQSim),
    UnipotentShear(UnipotentShear),
    Sampled(SampledMap),
}

impl MapDescriptor {
    pub fn apply(&self, basis: &OrderedBasis, p: &[f64]) -> Vec<f64> {
        assert_eq!(p.len(), basis.n(), "point dimension mismatch");
        match self {
            MapDescriptor::Triangular(m) => m.apply(basis, p),
            MapDescriptor::AffineQSim(m) => m.apply(basis, p),
            MapDescriptor::UnipotentShear(m) => m.apply(basis, p),
            MapDescriptor::Sampled(m) => {
                let out = (m.0)(p);
                assert_eq!(out.len(), basis.n(), "sampled map changed dimension");
                out
            }
        }
    }

    pub fn identity() -> Self {
        MapDescriptor::Sampled(SampledMap(Arc::new(|p: &[f64]| p.to_vec())))
    }

    pub fn sampled(f: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        MapDescriptor::Sampled(SampledMap(Arc::new(f)))
    }

    /// A black-box linear map given by a square matrix in storage
    /// coordinates.
    pub fn linear(matrix: Matrix) -> Result<Self> {
        if matrix.rows() != matrix.cols() {
            return Err(Error::domain("linear map matrix must be square"));
        }
        Ok(MapDescriptor::sampled(move |p: &[f64]| matrix.matvec(p)))
    }

    /// The translation `p ↦ p + v`.
    pub fn translation(v: Vec<f64>) -> Self {
        MapDescriptor::sampled(move |p: &[f64]| p.iter().zip(&v).map(|(a, b)| a + b).collect())
    }

    /// The standard dilation `δ_t` as a map descriptor.
    pub fn dilation(basis: &OrderedBasis, t: f64) -> Result<Self> {
        if !(t > 0.0) {
            return Err(Error::domain("dilation parameter must be positive"));
        }
        let rotation = Matrix::identity(basis.n());
        AffineQSim::new(basis, t.ln(), rotation, vec![0.0; basis.n()], None)
            .map(MapDescriptor::AffineQSim)
    }
}

#[derive(Clone)]
pub struct SampledMap(pub PointFn);

/// Per-level functions of the own block and the dominating suffix, in
/// ascending storage level order.
#[derive(Clone)]
pub struct TriangularMap {
    fns: Vec<BlockFn>,
}

impl TriangularMap {
    /// `fns` runs over the basis levels in ascending storage order (from the
    /// least dominant level to the most dominant). Each function receives
    /// `(own_block, dominating_suffix)` and must return a block of the same
    /// size.
    pub fn new(basis: &OrderedBasis, fns: Vec<BlockFn>) -> Result<Self> {
        if fns.len() != basis.levels().len() {
            return Err(Error::domain(format!(
                "triangular map needs one function per level ({} levels, got {})",
                basis.levels().len(),
                fns.len()
            )));
        }
        Ok(TriangularMap { fns })
    }

    pub fn apply(&self, basis: &OrderedBasis, p: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; basis.n()];
        // levels() is dominant-first; iterate ascending.
        for (f, level) in self.fns.iter().zip(basis.levels().into_iter().rev()) {
            let range = basis.level_range(level).expect("level from basis");
            let block = f(&p[range.clone()], &p[range.end..]);
            assert_eq!(block.len(), range.len(), "triangular block size changed");
            out[range].copy_from_slice(&block);
        }
        out
    }
}

/// `x ↦ M^s·Λ·R·(x + B)`.
#[derive(Clone)]
pub struct AffineQSim {
    pub s: f64,
    rotation: Matrix,
    pub translation: Vec<f64>,
    /// Per-level positive scales in ascending storage level order.
    pub scales: Vec<f64>,
}

impl AffineQSim {
    pub fn new(
        basis: &OrderedBasis,
        s: f64,
        rotation: Matrix,
        translation: Vec<f64>,
        scales: Option<Vec<f64>>,
    ) -> Result<Self> {
        let n = basis.n();
        if rotation.rows() != n || rotation.cols() != n {
            return Err(Error::domain("rotation must be n x n"));
        }
        if translation.len() != n {
            return Err(Error::domain("translation must have dimension n"));
        }
        let n_levels = basis.levels().len();
        let scales = scales.unwrap_or_else(|| vec![1.0; n_levels]);
        if scales.len() != n_levels {
            return Err(Error::domain("one scale per level required"));
        }
        if scales.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::domain("scales must be positive"));
        }
        validate_per_level_orthogonal(basis, &rotation)?;
        Ok(AffineQSim { s, rotation, translation, scales })
    }

    pub fn rotation(&self) -> &Matrix {
        &self.rotation
    }

    pub fn apply(&self, basis: &OrderedBasis, p: &[f64]) -> Vec<f64> {
        let shifted: Vec<f64> = p.iter().zip(&self.translation).map(|(a, b)| a + b).collect();
        let mut rotated = self.rotation.matvec(&shifted);
        for (scale, level) in self.scales.iter().zip(basis.levels().into_iter().rev()) {
            let range = basis.level_range(level).expect("level from basis");
            for v in &mut rotated[range] {
                *v *= scale;
            }
        }
        basis.apply_exp(self.s, &rotated)
    }

    /// Algebraic composition `self ∘ inner`, staying in the class when the
    /// conjugated rotation part still decomposes into per-level positive
    /// scales times orthogonal blocks.
    pub fn compose(&self, basis: &OrderedBasis, inner: &AffineQSim) -> Result<AffineQSim> {
        let n = basis.n();
        // C = Λ₂R₂ and D = Λ₁R₁ as matrices.
        let c = self.scaled_rotation(basis);
        let d = inner.scaled_rotation(basis);
        // G = M^{-s₁} C M^{s₁} · D.
        let m_pos = basis.exp_ta(inner.s);
        let m_neg = basis.exp_ta(-inner.s);
        let c_tilde = m_neg.matmul(&c).matmul(&m_pos);
        let g = c_tilde.matmul(&d);

        // Decompose G per level: positive scale times orthogonal block.
        let mut scales = Vec::new();
        let mut rotation = Matrix::zeros(n, n);
        for level in basis.levels().into_iter().rev() {
            let range = basis.level_range(level).expect("level from basis");
            for i in 0..n {
                for j in range.clone() {
                    let v = g.get(i, j);
                    if !range.contains(&i) && v.abs() > 1e-8 {
                        return Err(Error::domain(
                            "composition does not stay per-level block-diagonal",
                        ));
                    }
                }
            }
            let d = range.len();
            let mut block = Matrix::zeros(d, d);
            for (bi, i) in range.clone().enumerate() {
                for (bj, j) in range.clone().enumerate() {
                    block.set(bi, bj, g.get(i, j));
                }
            }
            let scale = (0..d).map(|i| block.get(i, 0).powi(2)).sum::<f64>().sqrt();
            if !(scale > 0.0) {
                return Err(Error::domain("degenerate composed block"));
            }
            let mut unit = Matrix::zeros(d, d);
            for i in 0..d {
                for j in 0..d {
                    unit.set(i, j, block.get(i, j) / scale);
                }
            }
            if !unit.is_orthogonal(1e-8) {
                return Err(Error::domain(
                    "composition leaves the affine quasi-similarity class",
                ));
            }
            for (bi, i) in range.clone().enumerate() {
                for (bj, j) in range.clone().enumerate() {
                    rotation.set(i, j, unit.get(bi, bj));
                }
            }
            scales.push(scale);
        }

        // B' = B₁ + G⁻¹ M^{-s₁} C B₂.
        let correction = g.inverse()?.matmul(&m_neg).matmul(&c).matvec(&self.translation);
        let translation =
            inner.translation.iter().zip(&correction).map(|(a, b)| a + b).collect();
        AffineQSim::new(basis, self.s + inner.s, rotation, translation, Some(scales))
    }

    fn scaled_rotation(&self, basis: &OrderedBasis) -> Matrix {
        let n = basis.n();
        let mut m = Matrix::zeros(n, n);
        for (scale, level) in self.scales.iter().zip(basis.levels().into_iter().rev()) {
            let range = basis.level_range(level).expect("level from basis");
            for i in range.clone() {
                for j in 0..n {
                    m.set(i, j, scale * self.rotation.get(i, j));
                }
            }
        }
        m
    }
}

fn validate_per_level_orthogonal(basis: &OrderedBasis, rotation: &Matrix) -> Result<()> {
    let n = basis.n();
    for level in basis.levels() {
        let range = basis.level_range(level)?;
        for i in range.clone() {
            for j in 0..n {
                if !range.contains(&j) && rotation.get(i, j).abs() > ORTHOGONALITY_TOL {
                    return Err(Error::domain(format!(
                        "rotation mixes level {level} with other levels"
                    )));
                }
            }
        }
        let d = range.len();
        let mut block = Matrix::zeros(d, d);
        for (bi, i) in range.clone().enumerate() {
            for (bj, j) in range.clone().enumerate() {
                block.set(bi, bj, rotation.get(i, j));
            }
        }
        if !block.is_orthogonal(ORTHOGONALITY_TOL) {
            return Err(Error::domain(format!("rotation block at level {level} not orthogonal")));
        }
    }
    Ok(())
}

/// Displacement of one level of a unipotent shear, as a function of the
/// dominating suffix.
#[derive(Clone)]
pub enum LevelShear {
    /// Suffix-independent displacement.
    Constant(Vec<f64>),
    /// One polynomial per slot of the level; variables are absolute storage
    /// positions inside the dominating suffix.
    Poly(Vec<Vec<PolyTerm>>),
    /// Arbitrary displacement function of the suffix.
    Func(PointFn),
}

#[derive(Clone, Debug, Deserialize)]
pub struct PolyTerm {
    pub coeff: f64,
    /// `(storage position, exponent)` factors.
    #[serde(default)]
    pub powers: Vec<(usize, u32)>,
}

/// `x_L ↦ x_L + B_L(dominating suffix)` for every level `L`.
#[derive(Clone)]
pub struct UnipotentShear {
    /// Ascending storage level order.
    shears: Vec<LevelShear>,
}

impl UnipotentShear {
    pub fn new(basis: &OrderedBasis, shears: Vec<LevelShear>) -> Result<Self> {
        let levels = basis.levels();
        if shears.len() != levels.len() {
            return Err(Error::domain(format!(
                "unipotent shear needs one displacement per level ({} levels, got {})",
                levels.len(),
                shears.len()
            )));
        }
        for (shear, level) in shears.iter().zip(levels.into_iter().rev()) {
            let range = basis.level_range(level)?;
            match shear {
                LevelShear::Constant(v) => {
                    if v.len() != range.len() {
                        return Err(Error::domain(format!(
                            "constant shear at level {level} has wrong block size"
                        )));
                    }
                }
                LevelShear::Poly(slots) => {
                    if slots.len() != range.len() {
                        return Err(Error::domain(format!(
                            "polynomial shear at level {level} needs one polynomial per slot"
                        )));
                    }
                    for term in slots.iter().flatten() {
                        for &(pos, _) in &term.powers {
                            if pos < range.end || pos >= basis.n() {
                                return Err(Error::domain(format!(
                                    "shear at level {level} reads position {pos}, which is \
                                     not strictly dominating"
                                )));
                            }
                        }
                    }
                }
                LevelShear::Func(_) => {}
            }
        }
        Ok(UnipotentShear { shears })
    }

    /// Displacement `B_L` evaluated on a full point's dominating suffix.
    pub fn displacement(&self, basis: &OrderedBasis, level: Level, point: &[f64]) -> Vec<f64> {
        let range = basis.level_range(level).expect("level from basis");
        let n_levels = self.shears.len();
        let index = basis
            .levels()
            .into_iter()
            .rev()
            .position(|l| l == level)
            .expect("level from basis");
        debug_assert!(index < n_levels);
        let suffix = &point[range.end..];
        match &self.shears[index] {
            LevelShear::Constant(v) => v.clone(),
            LevelShear::Poly(slots) => slots
                .iter()
                .map(|terms| {
                    terms
                        .iter()
                        .map(|t| {
                            t.coeff
                                * t.powers
                                    .iter()
                                    .map(|&(pos, exp)| point[pos].powi(exp as i32))
                                    .product::<f64>()
                        })
                        .sum()
                })
                .collect(),
            LevelShear::Func(f) => {
                let out = f(suffix);
                assert_eq!(out.len(), range.len(), "shear block size changed");
                out
            }
        }
    }

    pub fn apply(&self, basis: &OrderedBasis, p: &[f64]) -> Vec<f64> {
        let mut out = p.to_vec();
        for level in basis.levels() {
            let range = basis.level_range(level).expect("level from basis");
            let disp = self.displacement(basis, level, p);
            for (o, d) in out[range].iter_mut().zip(&disp) {
                *o += d;
            }
        }
        out
    }

    /// Exact inverse by back-substitution from the most dominant level down.
    pub fn apply_inverse(&self, basis: &OrderedBasis, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), basis.n());
        let mut x = y.to_vec();
        // levels() is dominant-first; the suffix of each level is already
        // recovered when its turn comes.
        for level in basis.levels() {
            let range = basis.level_range(level).expect("level from basis");
            let disp = self.displacement(basis, level, &x);
            for (i, d) in range.zip(&disp) {
                x[i] = y[i] - d;
            }
        }
        x
    }
}

// ---------------------------------------------------------------------------
// JSON descriptors

#[derive(Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
enum MapJson {
    #[serde(rename = "affine_qsim")]
    AffineQSim {
        s: f64,
        rotation: Vec<Vec<f64>>,
        translation: Vec<f64>,
        #[serde(default)]
        scales: Option<Vec<f64>>,
    },
    #[serde(rename = "unipotent_shear")]
    UnipotentShear { entries: Vec<ShearEntryJson> },
    #[serde(rename = "linear")]
    Linear { matrix: Vec<Vec<f64>> },
}

#[derive(Deserialize)]
struct ShearEntryJson {
    level: (f64, usize),
    #[serde(default)]
    slot: usize,
    terms: Vec<PolyTerm>,
}

/// Build a map descriptor from its JSON form. Supported kinds:
/// `affine_qsim`, `unipotent_shear` (polynomial displacements only), and
/// `linear`.
pub fn map_from_json(basis: &OrderedBasis, text: &str) -> Result<MapDescriptor> {
    let parsed: MapJson =
        serde_json::from_str(text).map_err(|e| Error::domain(format!("bad map JSON: {e}")))?;
    match parsed {
        MapJson::AffineQSim { s, rotation, translation, scales } => {
            let rotation = Matrix::from_rows(rotation)?;
            AffineQSim::new(basis, s, rotation, translation, scales)
                .map(MapDescriptor::AffineQSim)
        }
        MapJson::Linear { matrix } => MapDescriptor::linear(Matrix::from_rows(matrix)?),
        MapJson::UnipotentShear { entries } => {
            let levels: Vec<Level> = basis.levels().into_iter().rev().collect();
            let mut slots: Vec<Vec<Vec<PolyTerm>>> = levels
                .iter()
                .map(|&l| {
                    let d = basis.level_range(l).expect("level from basis").len();
                    vec![Vec::new(); d]
                })
                .collect();
            for entry in entries {
                let level = Level::new(entry.level.0, entry.level.1);
                let li = levels
                    .iter()
                    .position(|&l| l == level)
                    .ok_or_else(|| Error::index(format!("level {level}")))?;
                if entry.slot >= slots[li].len() {
                    return Err(Error::index(format!(
                        "slot {} out of range at level {level}",
                        entry.slot
                    )));
                }
                slots[li][entry.slot].extend(entry.terms);
            }
            let shears = slots.into_iter().map(LevelShear::Poly).collect();
            UnipotentShear::new(basis, shears).map(MapDescriptor::UnipotentShear)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::JordanSpec;
    use crate::sample::{rng_for, Sampler};

    fn basis(blocks: Vec<(f64, Vec<usize>)>) -> OrderedBasis {
        OrderedBasis::build(JordanSpec::new(blocks).unwrap()).unwrap()
    }

    #[test]
    fn triangular_identity() {
        let b = basis(vec![(1.0, vec![2]), (2.0, vec![1])]);
        let fns: Vec<BlockFn> =
            (0..3).map(|_| Arc::new(|own: &[f64], _: &[f64]| own.to_vec()) as BlockFn).collect();
        let map = MapDescriptor::Triangular(TriangularMap::new(&b, fns).unwrap());
        let p = [1.0, -2.0, 3.0];
        assert_eq!(map.apply(&b, &p), p.to_vec());
    }

    #[test]
    fn affine_qsim_identity_and_validation() {
        let b = basis(vec![(1.0, vec![2]), (2.0, vec![1])]);
        let id = AffineQSim::new(&b, 0.0, Matrix::identity(3), vec![0.0; 3], None).unwrap();
        let p = [0.5, 1.5, -2.0];
        let out = MapDescriptor::AffineQSim(id).apply(&b, &p);
        for (a, c) in out.iter().zip(&p) {
            assert!((a - c).abs() < 1e-15);
        }

        // A rotation mixing levels is rejected.
        let mut bad = Matrix::identity(3);
        bad.set(0, 2, 1.0);
        assert!(AffineQSim::new(&b, 0.0, bad, vec![0.0; 3], None).is_err());
        // A non-orthogonal block is rejected.
        let mut bad = Matrix::identity(3);
        bad.set(0, 0, 2.0);
        assert!(AffineQSim::new(&b, 0.0, bad, vec![0.0; 3], None).is_err());
    }

    #[test]
    fn shear_constant_hits_most_dominant_level() {
        // The most dominant level has an empty suffix: its displacement is
        // constant. Here that level is (2,1), stored last.
        let b = basis(vec![(1.0, vec![2]), (2.0, vec![1])]);
        let shears = vec![
            LevelShear::Constant(vec![0.0]),
            LevelShear::Constant(vec![0.0]),
            LevelShear::Constant(vec![4.0]),
        ];
        let map = UnipotentShear::new(&b, shears).unwrap();
        let out = map.apply(&b, &[1.0, 1.0, 1.0]);
        assert_eq!(out, vec![1.0, 1.0, 5.0]);
    }

    #[test]
    fn shear_rejects_subordinate_reads() {
        let b = basis(vec![(1.0, vec![2]), (2.0, vec![1])]);
        // Level (2,1) occupies position 2 and dominates everything; a
        // polynomial there may not read position 0.
        let shears = vec![
            LevelShear::Poly(vec![vec![]]),
            LevelShear::Poly(vec![vec![]]),
            LevelShear::Poly(vec![vec![PolyTerm { coeff: 1.0, powers: vec![(0, 1)] }]]),
        ];
        assert!(UnipotentShear::new(&b, shears).is_err());
    }

    #[test]
    fn shear_inverse_roundtrip() {
        let b = basis(vec![(1.0, vec![2]), (2.0, vec![2])]);
        let shears = vec![
            LevelShear::Poly(vec![vec![
                PolyTerm { coeff: 0.3, powers: vec![(1, 2)] },
                PolyTerm { coeff: -0.7, powers: vec![(2, 1), (3, 1)] },
            ]]),
            LevelShear::Poly(vec![vec![PolyTerm { coeff: 0.5, powers: vec![(3, 1)] }]]),
            LevelShear::Poly(vec![vec![PolyTerm { coeff: -0.2, powers: vec![(3, 2)] }]]),
            LevelShear::Constant(vec![1.25]),
        ];
        let map = UnipotentShear::new(&b, shears).unwrap();
        let sampler = Sampler::new(5.0);
        for trial in 0..50u64 {
            let mut rng = rng_for(17, trial);
            let p = sampler.point(&mut rng, 4);
            let there = map.apply(&b, &p);
            let back = map.apply_inverse(&b, &there);
            for (a, c) in back.iter().zip(&p) {
                assert!((a - c).abs() <= 1e-12 * c.abs().max(1.0));
            }
        }
    }

    #[test]
    fn qsim_composition_matches_pointwise() {
        // Rotations that act identically across the two same-length chains
        // of one eigenvalue commute with M, so composition stays in class.
        let b = basis(vec![(1.0, vec![1, 1])]);
        let rot = |theta: f64| {
            Matrix::from_rows(vec![
                vec![theta.cos(), -theta.sin()],
                vec![theta.sin(), theta.cos()],
            ])
            .unwrap()
        };
        let f = AffineQSim::new(&b, 0.4, rot(0.3), vec![1.0, -2.0], Some(vec![1.5])).unwrap();
        let g = AffineQSim::new(&b, -0.9, rot(-1.1), vec![0.5, 0.25], Some(vec![0.8])).unwrap();
        let composed = f.compose(&b, &g).unwrap();
        assert!((composed.s - (f.s + g.s)).abs() < 1e-12);

        let sampler = Sampler::new(3.0);
        for trial in 0..40u64 {
            let mut rng = rng_for(23, trial);
            let p = sampler.point(&mut rng, 2);
            let via_apply = f.apply(&b, &g.apply(&b, &p));
            let via_compose = composed.apply(&b, &p);
            for (a, c) in via_apply.iter().zip(&via_compose) {
                assert!((a - c).abs() <= 1e-10 * c.abs().max(1.0), "{a} vs {c}");
            }
        }
    }

    #[test]
    fn map_json_parsing() {
        let b = basis(vec![(1.0, vec![2]), (2.0, vec![1])]);
        let qsim = map_from_json(
            &b,
            r#"{"kind":"affine_qsim","s":0.7,
                "rotation":[[1.0,0.0,0.0],[0.0,1.0,0.0],[0.0,0.0,1.0]],
                "translation":[0.0,0.0,0.0]}"#,
        )
        .unwrap();
        let p = [1.0, 2.0, 3.0];
        let out = qsim.apply(&b, &p);
        let expected = b.apply_exp(0.7, &p);
        for (a, c) in out.iter().zip(&expected) {
            assert!((a - c).abs() < 1e-12);
        }

        let shear = map_from_json(
            &b,
            r#"{"kind":"unipotent_shear","entries":[
                {"level":[1.0,1],"terms":[{"coeff":2.0,"powers":[[2,1]]}]}
            ]}"#,
        )
        .unwrap();
        let out = shear.apply(&b, &[0.0, 0.0, 3.0]);
        assert_eq!(out, vec![6.0, 0.0, 3.0]);

        // Unknown level in JSON.
        assert!(map_from_json(
            &b,
            r#"{"kind":"unipotent_shear","entries":[{"level":[5.0,1],"terms":[]}]}"#
        )
        .is_err());

        let swap = map_from_json(
            &b,
            r#"{"kind":"linear","matrix":[[0.0,0.0,1.0],[0.0,1.0,0.0],[1.0,0.0,0.0]]}"#,
        )
        .unwrap();
        assert_eq!(swap.apply(&b, &[1.0, 2.0, 3.0]), vec![3.0, 2.0, 1.0]);
    }
}
