//! Measurement channels that turn a density matrix into a hybrid density.
//!
//! The post-measurement hybrid state is `ρ̂(x) = M̂_x ρ̂ M̂_x†`; outcome
//! statistics and conditional states follow from the hybrid-state
//! reductions. Outcome labels are a [`ClassicalSpace`], and continuous
//! outcomes are integrated with the grid's rectangle-rule weights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hybrid_state::{DensityMatrix, HybridDensity};
use crate::json;
use crate::linalg::{self, CMatrix, C64};
use crate::space::ClassicalSpace;

/// Largest completeness defect accepted by [`kraus_channel`].
pub const KRAUS_COMPLETENESS_TOL: f64 = 1e-8;
pub const PROJECTIVE_COMPLETENESS_TOL: f64 = 1e-12;
pub const PROJECTOR_TOL: f64 = 1e-10;
/// Gaussian families must extend this many σ past the spectrum of q̂.
pub const GRID_MARGIN_SIGMAS: f64 = 4.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KrausFamily {
    pub space: ClassicalSpace,
    #[serde(with = "json::matrix_list")]
    pub operators: Vec<CMatrix>,
}

impl KrausFamily {
    pub fn new(space: ClassicalSpace, operators: Vec<CMatrix>) -> Result<Self> {
        if operators.len() != space.len() {
            return Err(Error::DimensionMismatch { expected: space.len(), found: operators.len() });
        }
        let d = operators[0].nrows();
        if let Some(m) = operators.iter().find(|m| m.nrows() != d || m.ncols() != d) {
            return Err(Error::DimensionMismatch { expected: d, found: m.nrows().max(m.ncols()) });
        }
        Ok(KrausFamily { space, operators })
    }

    pub fn dim(&self) -> usize {
        self.operators[0].nrows()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianKrausSpec {
    pub sigma2: f64,
    #[serde(with = "json::matrix")]
    pub q_op: CMatrix,
    pub grid: ClassicalSpace,
}

impl GaussianKrausSpec {
    pub fn new(sigma2: f64, q_op: CMatrix, grid: ClassicalSpace) -> Result<Self> {
        if !(sigma2 > 0.0 && sigma2.is_finite()) {
            return Err(Error::InvalidParameter(format!("sigma2 must be positive, got {sigma2}")));
        }
        let defect = linalg::hermiticity_defect(&q_op);
        if defect > 1e-12 {
            return Err(Error::NonHermitian { defect });
        }
        grid.require_grid()?;
        Ok(GaussianKrausSpec { sigma2, q_op, grid })
    }

    /// Enforce the ±4σ margin around the spectrum of q̂.
    pub fn check_margin(&self) -> Result<()> {
        let (vals, _) = linalg::eigh(&self.q_op);
        let margin = GRID_MARGIN_SIGMAS * self.sigma2.sqrt();
        let need_lo = vals[0] - margin;
        let need_hi = vals[vals.len() - 1] + margin;
        let (lo, hi) = self.grid.extent()?;
        if lo > need_lo || hi < need_hi {
            return Err(Error::GridTooNarrow { lo, hi, need_lo, need_hi });
        }
        Ok(())
    }
}

/// `‖Σ_x w_x M̂_x†M̂_x − Î‖_max`
pub fn completeness_defect(family: &KrausFamily) -> f64 {
    let d = family.dim();
    let w = family.space.weight();
    let sum = family
        .operators
        .iter()
        .fold(linalg::zeros(d), |acc, m| acc + m.adjoint() * m);
    linalg::max_abs_diff(&sum.map(|z| z * w), &linalg::identity(d))
}

fn apply_family(rho: &DensityMatrix, space: ClassicalSpace, ops: &[CMatrix]) -> Result<HybridDensity> {
    let r = rho.matrix();
    let blocks = ops.iter().map(|m| m * r * m.adjoint()).collect();
    HybridDensity::new(space, rho.dim(), blocks)
}

/// Projective measurement `ρ̂ → ρ̂(x) = P̂_x ρ̂ P̂_x` over outcomes `0..k`.
pub fn projective_channel(rho: &DensityMatrix, projectors: &[CMatrix]) -> Result<HybridDensity> {
    let d = rho.dim();
    if projectors.is_empty() {
        return Err(Error::IncompleteFamily { defect: 1.0 });
    }
    for (i, p) in projectors.iter().enumerate() {
        if p.nrows() != d || p.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, found: p.nrows() });
        }
        let defect = linalg::hermiticity_defect(p).max(linalg::max_abs_diff(&(p * p), p));
        if defect > PROJECTOR_TOL {
            return Err(Error::NotAProjector { index: i, defect });
        }
    }
    for i in 0..projectors.len() {
        for j in i + 1..projectors.len() {
            let defect = linalg::max_abs(&(&projectors[i] * &projectors[j]));
            if defect > PROJECTOR_TOL {
                return Err(Error::NonOrthogonal { i, j, defect });
            }
        }
    }
    let sum = projectors.iter().fold(linalg::zeros(d), |acc, p| acc + p);
    let defect = linalg::max_abs_diff(&sum, &linalg::identity(d));
    if defect > PROJECTIVE_COMPLETENESS_TOL {
        return Err(Error::IncompleteFamily { defect });
    }
    apply_family(rho, ClassicalSpace::indexed(projectors.len())?, projectors)
}

/// General measurement `ρ̂ → ρ̂(x) = M̂_x ρ̂ M̂_x†`.
pub fn kraus_channel(rho: &DensityMatrix, family: &KrausFamily) -> Result<HybridDensity> {
    if family.dim() != rho.dim() {
        return Err(Error::DimensionMismatch { expected: rho.dim(), found: family.dim() });
    }
    let defect = completeness_defect(family);
    if defect > KRAUS_COMPLETENESS_TOL {
        return Err(Error::IncompleteFamily { defect });
    }
    apply_family(rho, family.space.clone(), &family.operators)
}

/// `M̂_x = (2πσ²)^{-1/4} exp[−(q̂−x)²/4σ²]` at every grid point, built in the
/// eigenbasis of q̂.
pub fn gaussian_kraus_family(spec: &GaussianKrausSpec) -> Result<KrausFamily> {
    spec.check_margin()?;
    let (vals, vecs) = linalg::eigh(&spec.q_op);
    let s2 = spec.sigma2;
    let norm = (2.0 * std::f64::consts::PI * s2).powf(-0.25);
    let vdag = vecs.adjoint();
    let operators = spec
        .grid
        .coordinates()?
        .into_iter()
        .map(|x| {
            let diag = nalgebra::DVector::from_iterator(
                vals.len(),
                vals.iter().map(|&q| C64::new(norm * (-(q - x).powi(2) / (4.0 * s2)).exp(), 0.0)),
            );
            let m = &vecs * CMatrix::from_diagonal(&diag) * &vdag;
            linalg::hermitian_part(&m)
        })
        .collect();
    KrausFamily::new(spec.grid.clone(), operators)
}

/// Outcome-averaged Gaussian measurement `∫ M̂_x ρ̂ M̂_x dx`, in closed form:
/// in the q̂ eigenbasis entry (a,b) is damped by `exp[−(q_a−q_b)²/8σ²]`.
pub fn averaged_gaussian(rho: &DensityMatrix, q_op: &CMatrix, sigma2: f64) -> Result<DensityMatrix> {
    if q_op.nrows() != rho.dim() {
        return Err(Error::DimensionMismatch { expected: rho.dim(), found: q_op.nrows() });
    }
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidParameter(format!("sigma2 must be positive, got {sigma2}")));
    }
    let (vals, vecs) = linalg::eigh(q_op);
    let mut r = vecs.adjoint() * rho.matrix() * &vecs;
    for a in 0..vals.len() {
        for b in 0..vals.len() {
            if a != b {
                r[(a, b)] *= (-(vals[a] - vals[b]).powi(2) / (8.0 * sigma2)).exp();
            }
        }
    }
    let out = &vecs * r * vecs.adjoint();
    // keep the trace exact: the damping never touches the diagonal
    let mut out = linalg::hermitian_part(&out);
    let shift = (rho.matrix().trace() - out.trace()) / rho.dim() as f64;
    for i in 0..rho.dim() {
        out[(i, i)] += shift;
    }
    DensityMatrix::new(out)
}

pub fn averaged_gaussian_channel(rho: &DensityMatrix, spec: &GaussianKrausSpec) -> Result<DensityMatrix> {
    averaged_gaussian(rho, &spec.q_op, spec.sigma2)
}
