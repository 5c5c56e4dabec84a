//! Hybrid densities `ρ̂(x)`: a positive matrix per classical point, jointly
//! normalized by `Σ_x w_x Tr ρ̂(x) = 1`.
//!
//! Constructors only check shapes. Whether a state is a legitimate hybrid
//! density is answered by [`validate`], which always returns a report.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::json;
use crate::linalg::{self, CMatrix, C64};
use crate::space::ClassicalSpace;

pub const HERMITICITY_TOL: f64 = 1e-12;
pub const EIGENVALUE_TOL: f64 = -1e-10;
pub const HYBRID_NORM_TOL: f64 = 1e-10;
pub const MATRIX_TRACE_TOL: f64 = 1e-12;
pub const CLASSICAL_NORM_TOL: f64 = 1e-12;
/// Below this block trace a conditional state is undefined.
pub const EPS_COND: f64 = 1e-12;
/// Largest imaginary part tolerated in an expectation value.
pub const EXPECTATION_IMAG_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub ok: bool,
    pub worst_eigenvalue: f64,
    pub hermiticity_defect: f64,
    pub normalization_defect: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawClassical")]
pub struct ClassicalDensity {
    pub space: ClassicalSpace,
    pub values: Vec<f64>,
}

#[derive(Deserialize)]
struct RawClassical {
    space: ClassicalSpace,
    values: Vec<f64>,
}

impl TryFrom<RawClassical> for ClassicalDensity {
    type Error = Error;
    fn try_from(r: RawClassical) -> Result<Self> {
        ClassicalDensity::new(r.space, r.values)
    }
}

impl ClassicalDensity {
    pub fn new(space: ClassicalSpace, values: Vec<f64>) -> Result<Self> {
        if values.len() != space.len() {
            return Err(Error::DimensionMismatch { expected: space.len(), found: values.len() });
        }
        Ok(ClassicalDensity { space, values })
    }

    /// Unit mass at point `index`.
    pub fn delta(space: ClassicalSpace, index: usize) -> Result<Self> {
        if index >= space.len() {
            return Err(Error::DimensionMismatch { expected: space.len(), found: index });
        }
        let mut values = vec![0.0; space.len()];
        values[index] = 1.0 / space.weight();
        Self::new(space, values)
    }

    pub fn uniform(space: ClassicalSpace) -> Self {
        let v = 1.0 / (space.len() as f64 * space.weight());
        let values = vec![v; space.len()];
        ClassicalDensity { space, values }
    }

    /// Sampled Gaussian on a grid, renormalized so the weighted sum is 1.
    pub fn gaussian(space: ClassicalSpace, mean: f64, sd: f64) -> Result<Self> {
        if !(sd > 0.0) {
            return Err(Error::InvalidParameter(format!("gaussian width must be positive, got {sd}")));
        }
        let xs = {
            space.require_grid()?;
            space.coordinates()?
        };
        let mut values: Vec<f64> = xs.iter().map(|x| (-(x - mean).powi(2) / (2.0 * sd * sd)).exp()).collect();
        let total: f64 = values.iter().sum::<f64>() * space.weight();
        values.iter_mut().for_each(|v| *v /= total);
        Self::new(space, values)
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.space.weight()
    }

    pub fn validate(&self) -> ValidationReport {
        let worst = self.values.iter().cloned().fold(f64::INFINITY, f64::min);
        let norm = (self.total() - 1.0).abs();
        ValidationReport {
            ok: worst >= 0.0 && norm <= CLASSICAL_NORM_TOL,
            worst_eigenvalue: worst,
            hermiticity_defect: 0.0,
            normalization_defect: norm,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DensityMatrix {
    #[serde(with = "json::matrix")]
    matrix: CMatrix,
}

impl DensityMatrix {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || matrix.nrows() == 0 {
            return Err(Error::DimensionMismatch { expected: matrix.nrows(), found: matrix.ncols() });
        }
        Ok(DensityMatrix { matrix })
    }

    pub fn pure(psi: &[C64]) -> Result<Self> {
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        let psi: Vec<C64> = psi.iter().map(|z| z / norm.sqrt()).collect();
        Self::new(linalg::projector(&psi))
    }

    pub fn maximally_mixed(d: usize) -> Self {
        DensityMatrix { matrix: linalg::identity(d).map(|z| z / d as f64) }
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub(crate) fn matrix_mut(&mut self) -> &mut CMatrix {
        &mut self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix).trace().re
    }

    pub fn validate(&self) -> ValidationReport {
        let herm = linalg::hermiticity_defect(&self.matrix);
        let worst = linalg::min_eigenvalue(&self.matrix);
        let norm = (self.matrix.trace() - C64::new(1.0, 0.0)).norm();
        ValidationReport {
            ok: herm <= HERMITICITY_TOL && worst >= EIGENVALUE_TOL && norm <= MATRIX_TRACE_TOL,
            worst_eigenvalue: worst,
            hermiticity_defect: herm,
            normalization_defect: norm,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawHybrid")]
pub struct HybridDensity {
    space: ClassicalSpace,
    dim: usize,
    #[serde(with = "json::flat_blocks")]
    blocks: Vec<CMatrix>,
}

#[derive(Deserialize)]
struct RawHybrid {
    space: ClassicalSpace,
    dim: usize,
    #[serde(with = "json::flat_blocks")]
    blocks: Vec<CMatrix>,
}

impl TryFrom<RawHybrid> for HybridDensity {
    type Error = Error;
    fn try_from(r: RawHybrid) -> Result<Self> {
        HybridDensity::new(r.space, r.dim, r.blocks)
    }
}

impl HybridDensity {
    pub fn new(space: ClassicalSpace, dim: usize, blocks: Vec<CMatrix>) -> Result<Self> {
        if blocks.len() != space.len() {
            return Err(Error::DimensionMismatch { expected: space.len(), found: blocks.len() });
        }
        if let Some(b) = blocks.iter().find(|b| b.nrows() != dim || b.ncols() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: b.nrows().max(b.ncols()) });
        }
        Ok(HybridDensity { space, dim, blocks })
    }

    pub fn zeros(space: ClassicalSpace, dim: usize) -> Self {
        let blocks = vec![linalg::zeros(dim); space.len()];
        HybridDensity { space, dim, blocks }
    }

    /// Same space and dimension, new blocks.
    pub fn with_blocks(&self, blocks: Vec<CMatrix>) -> Result<Self> {
        Self::new(self.space.clone(), self.dim, blocks)
    }

    pub fn space(&self) -> &ClassicalSpace {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.blocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    pub fn blocks(&self) -> &[CMatrix] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [CMatrix] {
        &mut self.blocks
    }

    pub fn into_blocks(self) -> Vec<CMatrix> {
        self.blocks
    }

    pub fn block(&self, x: usize) -> &CMatrix {
        &self.blocks[x]
    }

    /// `Σ_x w_x Tr ρ̂(x)`, real part.
    pub fn total_trace(&self) -> f64 {
        self.space.weight() * self.blocks.iter().map(|b| b.trace().re).sum::<f64>()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.blocks
            .iter()
            .map(linalg::min_eigenvalue)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn max_abs_diff(&self, other: &HybridDensity) -> f64 {
        max_block_diff(&self.blocks, &other.blocks)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

pub fn max_block_diff(a: &[CMatrix], b: &[CMatrix]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| linalg::max_abs_diff(x, y))
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HybridObservable {
    pub space: ClassicalSpace,
    #[serde(with = "json::matrix_list")]
    pub blocks: Vec<CMatrix>,
}

impl HybridObservable {
    pub fn new(space: ClassicalSpace, blocks: Vec<CMatrix>) -> Result<Self> {
        if blocks.len() != space.len() {
            return Err(Error::DimensionMismatch { expected: space.len(), found: blocks.len() });
        }
        Ok(HybridObservable { space, blocks })
    }

    /// The same operator at every point.
    pub fn constant(space: ClassicalSpace, op: CMatrix) -> Self {
        let blocks = vec![op; space.len()];
        HybridObservable { space, blocks }
    }

    /// `f(x)·Ô` using the numeric coordinate of each point.
    pub fn coordinate_weighted(space: ClassicalSpace, op: &CMatrix) -> Result<Self> {
        let xs = space.coordinates()?;
        let blocks = xs.iter().map(|&x| op.map(|z| z * x)).collect();
        Self::new(space, blocks)
    }

    pub fn hermiticity_defect(&self) -> f64 {
        self.blocks
            .iter()
            .map(linalg::hermiticity_defect)
            .fold(0.0, f64::max)
    }
}

/// `ρ̂(x) = ρ(x)·ρ̂` for an independent classical and quantum pair.
pub fn make_product(rho_c: &ClassicalDensity, rho_q: &DensityMatrix, dim: usize) -> Result<HybridDensity> {
    if rho_q.dim() != dim {
        return Err(Error::DimensionMismatch { expected: dim, found: rho_q.dim() });
    }
    let blocks = rho_c
        .values
        .iter()
        .map(|&p| rho_q.matrix().map(|z| z * p))
        .collect();
    HybridDensity::new(rho_c.space.clone(), dim, blocks)
}

pub fn validate(hd: &HybridDensity) -> ValidationReport {
    let herm = hd
        .blocks
        .iter()
        .map(linalg::hermiticity_defect)
        .fold(0.0, f64::max);
    let worst = hd.min_eigenvalue();
    let total = hd.space.weight() * hd.blocks.iter().map(|b| b.trace()).sum::<C64>();
    let norm = (total - C64::new(1.0, 0.0)).norm();
    ValidationReport {
        ok: herm <= HERMITICITY_TOL && worst >= EIGENVALUE_TOL && norm <= HYBRID_NORM_TOL,
        worst_eigenvalue: worst,
        hermiticity_defect: herm,
        normalization_defect: norm,
    }
}

/// Quantum marginal `Σ_x w_x ρ̂(x)`.
pub fn reduce_quantum(hd: &HybridDensity) -> DensityMatrix {
    let w = hd.space.weight();
    let sum = hd
        .blocks
        .iter()
        .fold(linalg::zeros(hd.dim), |acc, b| acc + b);
    DensityMatrix { matrix: sum.map(|z| z * w) }
}

/// Classical marginal `Tr ρ̂(x)`.
pub fn reduce_classical(hd: &HybridDensity) -> ClassicalDensity {
    ClassicalDensity {
        space: hd.space.clone(),
        values: hd.blocks.iter().map(|b| b.trace().re).collect(),
    }
}

/// Conditional state `ρ̂(x) / Tr ρ̂(x)` at point index `x`.
pub fn conditional_quantum(hd: &HybridDensity, x: usize) -> Result<DensityMatrix> {
    let block = hd
        .blocks
        .get(x)
        .ok_or(Error::DimensionMismatch { expected: hd.len(), found: x })?;
    let p = block.trace().re;
    if p <= EPS_COND {
        return Err(Error::ZeroProbabilityCondition { index: x, weight: p });
    }
    Ok(DensityMatrix { matrix: block.map(|z| z / p) })
}

/// `Σ_x w_x Tr[Ô(x) ρ̂(x)]`.
pub fn expectation(hd: &HybridDensity, obs: &HybridObservable) -> Result<f64> {
    hd.space.check_same(&obs.space)?;
    if let Some(b) = obs.blocks.iter().find(|b| b.nrows() != hd.dim || b.ncols() != hd.dim) {
        return Err(Error::DimensionMismatch { expected: hd.dim, found: b.nrows() });
    }
    let defect = obs.hermiticity_defect();
    if defect > EXPECTATION_IMAG_TOL {
        return Err(Error::NonHermitianObservable { defect });
    }
    let w = hd.space.weight();
    let value: C64 = obs
        .blocks
        .iter()
        .zip(&hd.blocks)
        .map(|(o, r)| (o * r).trace())
        .sum::<C64>()
        * w;
    if value.im.abs() > EXPECTATION_IMAG_TOL {
        return Err(Error::ComplexExpectation { imag: value.im });
    }
    Ok(value.re)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, identity, max_abs_diff, pauli_z, projector};

    fn ket0() -> CMatrix {
        projector(&[c(1., 0.), c(0., 0.)])
    }
    fn ket1() -> CMatrix {
        projector(&[c(0., 0.), c(1., 0.)])
    }
    fn plus() -> CMatrix {
        let s = 0.5f64.sqrt();
        projector(&[c(s, 0.), c(s, 0.)])
    }
    fn two() -> ClassicalSpace {
        ClassicalSpace::indexed(2).unwrap()
    }
    fn split() -> HybridDensity {
        HybridDensity::new(two(), 2, vec![ket0().map(|z| z * 0.5), ket1().map(|z| z * 0.5)]).unwrap()
    }

    #[test]
    fn product_examples() {
        let rc = ClassicalDensity::new(two(), vec![0.5, 0.5]).unwrap();
        let hd = make_product(&rc, &DensityMatrix::new(ket0()).unwrap(), 2).unwrap();
        assert_eq!(hd.block(0), &ket0().map(|z| z * 0.5));
        assert_eq!(hd.block(1), &ket0().map(|z| z * 0.5));

        let delta = ClassicalDensity::delta(ClassicalSpace::indexed(3).unwrap(), 1).unwrap();
        let hd = make_product(&delta, &DensityMatrix::maximally_mixed(2), 2).unwrap();
        assert_eq!(hd.block(1), &identity(2).map(|z| z * 0.5));
        assert_eq!(hd.block(0), &linalg::zeros(2));
        assert_eq!(hd.block(2), &linalg::zeros(2));

        let rc = ClassicalDensity::new(two(), vec![0.25, 0.75]).unwrap();
        let hd = make_product(&rc, &DensityMatrix::new(plus()).unwrap(), 2).unwrap();
        assert!(max_abs_diff(hd.block(0), &plus().map(|z| z * 0.25)) < 1e-15);
        assert!(max_abs_diff(hd.block(1), &plus().map(|z| z * 0.75)) < 1e-15);
        assert!(validate(&hd).ok);
    }

    #[test]
    fn product_dimension_mismatch() {
        let rc = ClassicalDensity::uniform(two());
        assert!(matches!(
            make_product(&rc, &DensityMatrix::maximally_mixed(2), 3),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn validate_examples() {
        assert!(validate(&split()).ok);

        let mut bad = split();
        bad.blocks_mut()[0] = CMatrix::from_row_slice(2, 2, &[c(0.6, 0.), c(0., 0.), c(0., 0.), c(-0.1, 0.)]);
        let r = validate(&bad);
        assert!(!r.ok);
        assert!((r.worst_eigenvalue + 0.1).abs() < 1e-15);

        let short = HybridDensity::new(two(), 2, vec![ket0().map(|z| z * 0.45), ket1().map(|z| z * 0.45)]).unwrap();
        let r = validate(&short);
        assert!(!r.ok);
        assert!((r.normalization_defect - 0.1).abs() < 1e-15);
    }

    #[test]
    fn reductions() {
        let q = reduce_quantum(&split());
        assert!(max_abs_diff(q.matrix(), &identity(2).map(|z| z * 0.5)) < 1e-15);
        let cl = reduce_classical(&split());
        assert_eq!(cl.values, vec![0.5, 0.5]);

        let rc = ClassicalDensity::new(two(), vec![0.3, 0.7]).unwrap();
        let rq = DensityMatrix::new(plus()).unwrap();
        let hd = make_product(&rc, &rq, 2).unwrap();
        assert!(max_abs_diff(reduce_quantum(&hd).matrix(), rq.matrix()) < 1e-15);
        let back = reduce_classical(&hd);
        assert!((back.values[0] - 0.3).abs() < 1e-15 && (back.values[1] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn reductions_on_grid_use_weights() {
        let g = ClassicalSpace::grid_span(-1.0, 1.0, 21, crate::space::Boundary::Periodic).unwrap();
        let rc = ClassicalDensity::gaussian(g, 0.0, 0.3).unwrap();
        assert!(rc.validate().ok);
        let hd = make_product(&rc, &DensityMatrix::new(plus()).unwrap(), 2).unwrap();
        assert!(validate(&hd).ok);
        assert!(reduce_quantum(&hd).validate().ok);
        assert!(reduce_classical(&hd).validate().ok);
    }

    #[test]
    fn conditionals() {
        let c0 = conditional_quantum(&split(), 0).unwrap();
        assert!(max_abs_diff(c0.matrix(), &ket0()) < 1e-15);

        let rc = ClassicalDensity::new(two(), vec![0.2, 0.8]).unwrap();
        let hd = make_product(&rc, &DensityMatrix::new(plus()).unwrap(), 2).unwrap();
        for x in 0..2 {
            assert!(max_abs_diff(conditional_quantum(&hd, x).unwrap().matrix(), &plus()) < 1e-15);
        }

        let hd = HybridDensity::new(two(), 2, vec![ket0(), linalg::zeros(2)]).unwrap();
        assert!(matches!(
            conditional_quantum(&hd, 1),
            Err(Error::ZeroProbabilityCondition { index: 1, .. })
        ));
    }

    #[test]
    fn expectation_examples() {
        let one = HybridObservable::constant(two(), identity(2));
        assert!((expectation(&split(), &one).unwrap() - 1.0).abs() < 1e-15);

        let xobs = HybridObservable::coordinate_weighted(two(), &identity(2)).unwrap();
        let uniform = make_product(&ClassicalDensity::uniform(two()), &DensityMatrix::maximally_mixed(2), 2).unwrap();
        assert!((expectation(&uniform, &xobs).unwrap() - 0.5).abs() < 1e-15);

        // Ô(x) = x·σz with ½|0⟩⟨0| at x=+1 and ½|1⟩⟨1| at x=-1
        let pm = ClassicalSpace::discrete(["1", "-1"]).unwrap();
        let hd = HybridDensity::new(pm.clone(), 2, vec![ket0().map(|z| z * 0.5), ket1().map(|z| z * 0.5)]).unwrap();
        let obs = HybridObservable::coordinate_weighted(pm, &pauli_z()).unwrap();
        assert!((expectation(&hd, &obs).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn expectation_errors() {
        let mut o = identity(2);
        o[(0, 1)] = c(1.0, 0.0);
        let obs = HybridObservable::constant(two(), o);
        assert!(matches!(expectation(&split(), &obs), Err(Error::NonHermitianObservable { .. })));

        let other = HybridObservable::constant(ClassicalSpace::indexed(3).unwrap(), identity(2));
        assert!(matches!(expectation(&split(), &other), Err(Error::SpaceMismatch(_))));
    }

    #[test]
    fn json_layout() {
        let s = split().to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        assert_eq!(v["dim"], 2);
        assert_eq!(v["space"]["kind"], "discrete");
        assert_eq!(v["blocks"][0].as_array().unwrap().len(), 4);
        assert_eq!(v["blocks"][1][3], serde_json::json!([0.5, 0.0]));
        assert_eq!(HybridDensity::from_json(&s).unwrap(), split());
    }

    #[test]
    fn json_rejects_wrong_block_count() {
        let s = r#"{"space":{"kind":"discrete","labels":["a","b"]},"dim":1,"blocks":[[[1.0,0.0]]]}"#;
        assert!(HybridDensity::from_json(s).is_err());
    }
}
