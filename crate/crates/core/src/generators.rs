//! Classical Pauli/diffusion generators and quantum Lindblad/decoherence
//! generators. Each `*_apply` returns the time derivative of its input state.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hybrid_state::{ClassicalDensity, DensityMatrix};
use crate::json;
use crate::linalg::{self, CMatrix, C64, I};
use crate::space::{self, ClassicalSpace};

/// Gaussian jump kernels are cut off at this many standard deviations.
pub const KERNEL_CUTOFF_SIGMAS: f64 = 6.0;

/// Transition rates `T(x,y)` for jumps y→x, with an optional drift velocity
/// on grid spaces. Diagonal entries are ignored.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPauli")]
pub struct PauliRates {
    pub space: ClassicalSpace,
    #[serde(with = "json::real_matrix")]
    pub rates: DMatrix<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<Vec<f64>>,
}

#[derive(Deserialize)]
struct RawPauli {
    space: Option<ClassicalSpace>,
    #[serde(with = "json::real_matrix")]
    rates: DMatrix<f64>,
    #[serde(default)]
    drift: Option<Vec<f64>>,
}

impl TryFrom<RawPauli> for PauliRates {
    type Error = Error;
    fn try_from(r: RawPauli) -> Result<Self> {
        let space = match r.space {
            Some(s) => s,
            None => ClassicalSpace::indexed(r.rates.nrows())?,
        };
        PauliRates::new(space, r.rates, r.drift)
    }
}

impl PauliRates {
    pub fn new(space: ClassicalSpace, rates: DMatrix<f64>, drift: Option<Vec<f64>>) -> Result<Self> {
        let n = space.len();
        if rates.nrows() != n || rates.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, found: rates.nrows() });
        }
        for x in 0..n {
            for y in 0..n {
                if x != y && !(rates[(x, y)] >= 0.0) {
                    return Err(Error::NegativeRate { x, y, rate: rates[(x, y)] });
                }
            }
        }
        if let Some(v) = &drift {
            space.require_grid()?;
            if v.len() != n {
                return Err(Error::DimensionMismatch { expected: n, found: v.len() });
            }
        }
        Ok(PauliRates { space, rates, drift })
    }

    /// Largest total exit rate `max_y Σ_{x≠y} T(x,y)`.
    pub fn max_exit_rate(&self) -> f64 {
        let n = self.space.len();
        (0..n)
            .map(|y| (0..n).filter(|&x| x != y).map(|x| self.rates[(x, y)]).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

/// `dρ(x)/dt = Σ_y [T(x,y)ρ(y) − T(y,x)ρ(x)] − ∂_x(v ρ)`.
pub fn pauli_apply(rates: &PauliRates, rho: &ClassicalDensity) -> Result<Vec<f64>> {
    rates.space.check_same(&rho.space)?;
    let n = rates.space.len();
    let t = &rates.rates;
    let p = &rho.values;
    let mut out: Vec<f64> = (0..n)
        .map(|x| {
            (0..n)
                .filter(|&y| y != x)
                .map(|y| t[(x, y)] * p[y] - t[(y, x)] * p[x])
                .sum()
        })
        .collect();
    if let Some(v) = &rates.drift {
        let flux: Vec<f64> = v.iter().zip(p).map(|(v, p)| v * p).collect();
        let k = space::central_difference(&rates.space, &flux)?;
        out.iter_mut().zip(k).for_each(|(o, k)| *o -= k);
    }
    Ok(out)
}

/// Row-discretized Gaussian jump kernel
/// `T(x,y) = (1/τ)(4πDτ)^{-1/2} exp[−(x−y)²/4Dτ]·dx`, the finite-τ member of
/// the family whose τ→0 limit is diffusion with coefficient `D`.
pub fn gaussian_jump_rates(diffusion: f64, tau: f64, grid: &ClassicalSpace) -> Result<PauliRates> {
    if !(diffusion > 0.0 && tau > 0.0) {
        return Err(Error::InvalidParameter(format!("need D > 0 and tau > 0, got D={diffusion}, tau={tau}")));
    }
    let dx = grid.dx()?;
    let width = (4.0 * diffusion * tau).sqrt();
    if width < dx {
        return Err(Error::KernelUnderresolved { width, dx });
    }
    let cutoff = KERNEL_CUTOFF_SIGMAS * (2.0 * diffusion * tau).sqrt();
    let amp = dx / (tau * (4.0 * std::f64::consts::PI * diffusion * tau).sqrt());
    let n = grid.len();
    let mut rates = DMatrix::zeros(n, n);
    for x in 0..n {
        for y in 0..n {
            if x == y {
                continue;
            }
            let r = grid.separation(x, y)?;
            if r.abs() <= cutoff {
                rates[(x, y)] = amp * (-r * r / (4.0 * diffusion * tau)).exp();
            }
        }
    }
    PauliRates::new(grid.clone(), rates, None)
}

/// `D ∂²_x ρ` with the three-point stencil and the grid's boundary rule.
pub fn diffusion_apply(diffusion: f64, rho: &ClassicalDensity) -> Result<Vec<f64>> {
    let lap = space::laplacian(&rho.space, &rho.values)?;
    Ok(lap.into_iter().map(|v| diffusion * v).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLindblad")]
pub struct LindbladModel {
    #[serde(with = "json::matrix")]
    pub hamiltonian: CMatrix,
    #[serde(with = "json::matrix_list")]
    pub lindblad_ops: Vec<CMatrix>,
}

#[derive(Deserialize)]
struct RawLindblad {
    #[serde(with = "json::matrix")]
    hamiltonian: CMatrix,
    #[serde(with = "json::matrix_list", default)]
    lindblad_ops: Vec<CMatrix>,
}

impl TryFrom<RawLindblad> for LindbladModel {
    type Error = Error;
    fn try_from(r: RawLindblad) -> Result<Self> {
        LindbladModel::new(r.hamiltonian, r.lindblad_ops)
    }
}

impl LindbladModel {
    pub fn new(hamiltonian: CMatrix, lindblad_ops: Vec<CMatrix>) -> Result<Self> {
        let d = hamiltonian.nrows();
        if hamiltonian.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, found: hamiltonian.ncols() });
        }
        let defect = linalg::hermiticity_defect(&hamiltonian);
        if defect > 1e-12 {
            return Err(Error::NonHermitian { defect });
        }
        if let Some(l) = lindblad_ops.iter().find(|l| l.nrows() != d || l.ncols() != d) {
            return Err(Error::DimensionMismatch { expected: d, found: l.nrows() });
        }
        Ok(LindbladModel { hamiltonian, lindblad_ops })
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.nrows()
    }
}

/// `−i[Ĥ,ρ̂] + Σ_α (L̂_α ρ̂ L̂_α† − ½{L̂_α†L̂_α, ρ̂})`
pub fn lindblad_apply(model: &LindbladModel, rho: &DensityMatrix) -> Result<CMatrix> {
    if rho.dim() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), found: rho.dim() });
    }
    Ok(lindblad_rhs(&model.hamiltonian, &model.lindblad_ops, rho.matrix()))
}

pub(crate) fn lindblad_rhs(h: &CMatrix, ops: &[CMatrix], r: &CMatrix) -> CMatrix {
    let mut out = linalg::commutator(h, r) * (-I);
    for l in ops {
        let ld = l.adjoint();
        let ldl = &ld * l;
        out += l * r * &ld - linalg::anticommutator(&ldl, r) * C64::from(0.5);
    }
    out
}

/// `−i[Ĥ,ρ̂] − D′[q̂,[q̂,ρ̂]]`
pub fn decoherence_apply(h: &CMatrix, dprime: f64, q_op: &CMatrix, rho: &DensityMatrix) -> Result<CMatrix> {
    Ok(decoherence_rhs(h, dprime, q_op, rho.matrix()))
}

pub(crate) fn decoherence_rhs(h: &CMatrix, dprime: f64, q_op: &CMatrix, r: &CMatrix) -> CMatrix {
    let inner = linalg::commutator(q_op, r);
    linalg::commutator(h, r) * (-I) - linalg::commutator(q_op, &inner) * C64::from(dprime)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, max_abs_diff, pauli_x, pauli_z, projector};
    use crate::space::Boundary;

    fn plus() -> DensityMatrix {
        DensityMatrix::pure(&[c(1., 0.), c(1., 0.)]).unwrap()
    }

    #[test]
    fn two_state_decay() {
        let s = ClassicalSpace::indexed(2).unwrap();
        let rates = PauliRates::new(s.clone(), DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.5, 0.0]), None).unwrap();
        let rho = ClassicalDensity::new(s, vec![1.0, 0.0]).unwrap();
        assert_eq!(pauli_apply(&rates, &rho).unwrap(), vec![-0.5, 0.5]);
    }

    #[test]
    fn symmetric_rates_keep_uniform_state() {
        let s = ClassicalSpace::indexed(4).unwrap();
        let t = DMatrix::from_fn(4, 4, |x, y| 0.1 + 0.05 * (x + y) as f64);
        let rates = PauliRates::new(s.clone(), t, None).unwrap();
        let d = pauli_apply(&rates, &ClassicalDensity::uniform(s)).unwrap();
        assert!(d.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn negative_rate_rejected() {
        let s = ClassicalSpace::indexed(2).unwrap();
        let t = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 0.5, 0.0]);
        assert!(matches!(PauliRates::new(s.clone(), t, None), Err(Error::NegativeRate { x: 0, y: 1, .. })));
        // the diagonal is ignored
        let t = DMatrix::from_row_slice(2, 2, &[-3.0, 1.0, 0.5, 0.0]);
        assert!(PauliRates::new(s.clone(), t.clone(), None).is_ok());
        assert!(matches!(PauliRates::new(s, t, Some(vec![1.0, 1.0])), Err(Error::DiscreteSpace)));
    }

    #[test]
    fn drift_conserves_and_translates() {
        let g = ClassicalSpace::grid_span(-5.0, 5.0, 201, Boundary::Periodic).unwrap();
        let rho = ClassicalDensity::gaussian(g.clone(), 0.0, 0.5).unwrap();
        let rates = PauliRates::new(g.clone(), DMatrix::zeros(201, 201), Some(vec![1.0; 201])).unwrap();
        let d = pauli_apply(&rates, &rho).unwrap();
        let w = g.weight();
        assert!((d.iter().sum::<f64>() * w).abs() < 1e-12);
        // d<x>/dt = v for compact support
        let xs = g.coordinates().unwrap();
        let dmean: f64 = xs.iter().zip(&d).map(|(x, v)| x * v).sum::<f64>() * w;
        assert!((dmean - 1.0).abs() < 1e-10);
    }

    #[test]
    fn gaussian_rates_second_moment() {
        let g = ClassicalSpace::grid_span(-5.0, 5.0, 201, Boundary::Truncated).unwrap();
        let rates = gaussian_jump_rates(0.1, 1e-2, &g).unwrap();
        assert!(rates.rates.iter().all(|&r| r >= 0.0));
        let mid = 100;
        let m2: f64 = (0..201)
            .map(|y| g.separation(mid, y).unwrap().powi(2) * rates.rates[(mid, y)])
            .sum();
        assert!((m2 - 0.2).abs() <= 0.02 * 0.2, "second moment {m2}");
    }

    #[test]
    fn gaussian_rates_underresolved() {
        let g = ClassicalSpace::grid_span(-5.0, 5.0, 201, Boundary::Truncated).unwrap();
        assert!(matches!(gaussian_jump_rates(0.1, 1e-3, &g), Err(Error::KernelUnderresolved { .. })));
        assert!(matches!(
            gaussian_jump_rates(0.1, 1e-2, &ClassicalSpace::indexed(3).unwrap()),
            Err(Error::DiscreteSpace)
        ));
    }

    #[test]
    fn diffusion_examples() {
        let g = ClassicalSpace::grid_span(-1.0, 1.0, 41, Boundary::Periodic).unwrap();
        let flat = diffusion_apply(0.3, &ClassicalDensity::uniform(g.clone())).unwrap();
        assert!(flat.iter().all(|v| v.abs() < 1e-12));

        let spike = ClassicalDensity::delta(g.clone(), 20).unwrap();
        let d = diffusion_apply(0.3, &spike).unwrap();
        for k in 1..20 {
            assert_eq!(d[20 - k], d[20 + k]);
        }
        assert!(d[20] < 0.0 && d[19] > 0.0);
        assert!(d.iter().sum::<f64>().abs() < 1e-9);

        assert!(matches!(
            diffusion_apply(0.3, &ClassicalDensity::uniform(ClassicalSpace::indexed(2).unwrap())),
            Err(Error::DiscreteSpace)
        ));
    }

    #[test]
    fn lindblad_examples() {
        let model = LindbladModel::new(pauli_z(), vec![]).unwrap();
        let d = lindblad_apply(&model, &plus()).unwrap();
        let expected = linalg::commutator(&pauli_z(), plus().matrix()) * (-I);
        assert!(max_abs_diff(&d, &expected) < 1e-15);

        let lower = CMatrix::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(0., 0.), c(0., 0.)]);
        let model = LindbladModel::new(linalg::zeros(2), vec![lower]).unwrap();
        let excited = DensityMatrix::new(projector(&[c(0., 0.), c(1., 0.)])).unwrap();
        let d = lindblad_apply(&model, &excited).unwrap();
        let expected = CMatrix::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)]);
        assert!(max_abs_diff(&d, &expected) < 1e-15);
        assert!(d.trace().norm() < 1e-15);
    }

    #[test]
    fn lindblad_rejects_non_hermitian_hamiltonian() {
        let mut h = pauli_x();
        h[(0, 1)] = c(2.0, 0.0);
        assert!(matches!(LindbladModel::new(h, vec![]), Err(Error::NonHermitian { .. })));
    }

    #[test]
    fn decoherence_examples() {
        let d = decoherence_apply(&linalg::zeros(2), 0.3, &pauli_z(), &plus()).unwrap();
        assert!((d[(0, 1)] - plus().matrix()[(0, 1)] * (-4.0 * 0.3)).norm() < 1e-15);

        let diag = DensityMatrix::new(CMatrix::from_row_slice(2, 2, &[c(0.2, 0.), c(0., 0.), c(0., 0.), c(0.8, 0.)])).unwrap();
        let d = decoherence_apply(&linalg::zeros(2), 0.3, &pauli_z(), &diag).unwrap();
        assert!(linalg::max_abs(&d) < 1e-15);
    }
}
