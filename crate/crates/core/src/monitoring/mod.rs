//! Time-continuous monitoring of an observable `q̂` with signal `X`.
//!
//! The monitoring generator on a periodic `X` grid is
//!
//! ```text
//! dρ̂(X)/dt = −i[Ĥ, ρ̂(X)] − ½ ∂_X{q̂, ρ̂(X)} + D ∂²_X ρ̂(X) − (1/16D)[q̂,[q̂, ρ̂(X)]]
//! ```
//!
//! with central differences for `∂_X` and the 3-point Laplacian for `∂²_X`.
//! Dropping the last two terms gives the naive generator, which does not
//! preserve positivity. Summed over `X` the stencil terms telescope, so the
//! quantum marginal obeys the decoherence equation with `D′ = 1/16D`, and the
//! block traces obey a Fokker–Planck equation with drift `⟨q̂⟩_X`.

pub mod sampler;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generators::decoherence_rhs;
use crate::hybrid_me::{big_lindblad_apply, extract_blocks, EnlargedModel, EnlargedState, SparseOp};
use crate::hybrid_state::{reduce_quantum, HybridDensity};
use crate::json;
use crate::linalg::{self, CMatrix, C64, I};
use crate::runtime::integrator::TimeSeries;
use crate::space::{self, Boundary, ClassicalSpace};

/// Probability mass tolerated near the ends of the periodic `X` grid.
pub const BOUNDARY_MASS_TOL: f64 = 1e-6;
/// Fraction of the span at each end counted as boundary region.
pub const BOUNDARY_FRACTION: f64 = 0.1;
/// Largest population allowed in the top two levels of a truncated oscillator.
pub const TAIL_MASS_TOL: f64 = 1e-6;
/// Signal spread margin, in standard deviations of the diffusion.
pub const MARGIN_SIGMAS: f64 = 6.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMonitoring", into = "RawMonitoring")]
pub struct MonitoringModel {
    hamiltonian: CMatrix,
    q_op: CMatrix,
    diffusion: f64,
    xspace: ClassicalSpace,
    tail_guard: bool,
}

#[derive(Clone, Serialize, Deserialize)]
struct RawMonitoring {
    #[serde(with = "json::matrix")]
    hamiltonian: CMatrix,
    #[serde(with = "json::matrix")]
    q_op: CMatrix,
    diffusion: f64,
    xspace: ClassicalSpace,
    #[serde(default)]
    tail_guard: bool,
}

impl TryFrom<RawMonitoring> for MonitoringModel {
    type Error = Error;
    fn try_from(r: RawMonitoring) -> Result<Self> {
        let mut m = MonitoringModel::new(r.hamiltonian, r.q_op, r.diffusion, r.xspace)?;
        m.tail_guard = r.tail_guard;
        Ok(m)
    }
}

impl From<MonitoringModel> for RawMonitoring {
    fn from(m: MonitoringModel) -> Self {
        RawMonitoring {
            hamiltonian: m.hamiltonian,
            q_op: m.q_op,
            diffusion: m.diffusion,
            xspace: m.xspace,
            tail_guard: m.tail_guard,
        }
    }
}

impl MonitoringModel {
    pub fn new(hamiltonian: CMatrix, q_op: CMatrix, diffusion: f64, xspace: ClassicalSpace) -> Result<Self> {
        let d = hamiltonian.nrows();
        if hamiltonian.ncols() != d || q_op.nrows() != d || q_op.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, found: q_op.nrows() });
        }
        for m in [&hamiltonian, &q_op] {
            let defect = linalg::hermiticity_defect(m);
            if defect > 1e-12 {
                return Err(Error::NonHermitian { defect });
            }
        }
        if !(diffusion > 0.0 && diffusion.is_finite()) {
            return Err(Error::InvalidParameter(format!("diffusion must be positive, got {diffusion}")));
        }
        if xspace.boundary() != Some(Boundary::Periodic) {
            return Err(Error::InvalidParameter("monitoring needs a periodic X grid".into()));
        }
        Ok(MonitoringModel { hamiltonian, q_op, diffusion, xspace, tail_guard: false })
    }

    /// Truncated oscillator with `q̂ = (â+â†)/√2`; evolved states are checked
    /// for population in the two highest levels.
    pub fn oscillator(hamiltonian: CMatrix, diffusion: f64, xspace: ClassicalSpace) -> Result<Self> {
        let q = linalg::truncated_oscillator_position(hamiltonian.nrows());
        let mut m = Self::new(hamiltonian, q, diffusion, xspace)?;
        m.tail_guard = true;
        Ok(m)
    }

    pub fn hamiltonian(&self) -> &CMatrix {
        &self.hamiltonian
    }

    pub fn q_op(&self) -> &CMatrix {
        &self.q_op
    }

    pub fn diffusion(&self) -> f64 {
        self.diffusion
    }

    pub fn xspace(&self) -> &ClassicalSpace {
        &self.xspace
    }

    pub fn dim(&self) -> usize {
        self.q_op.nrows()
    }

    /// `D′ = 1/16D`
    pub fn decoherence(&self) -> f64 {
        1.0 / (16.0 * self.diffusion)
    }

    /// Grid must cover `[λ_min t + lo, λ_max t + hi]` widened by
    /// `6√(2Dt)`, where `(lo, hi)` bounds the initial signal support.
    pub fn check_margin(&self, t_final: f64, initial: (f64, f64)) -> Result<()> {
        let (vals, _) = linalg::eigh(&self.q_op);
        let spread = MARGIN_SIGMAS * (2.0 * self.diffusion * t_final).sqrt();
        let need_lo = initial.0 + (vals[0] * t_final).min(0.0) - spread;
        let need_hi = initial.1 + (vals[vals.len() - 1] * t_final).max(0.0) + spread;
        let (lo, hi) = self.xspace.extent()?;
        if lo > need_lo || hi < need_hi {
            return Err(Error::GridTooNarrow { lo, hi, need_lo, need_hi });
        }
        Ok(())
    }

    /// Population of the two highest levels of the quantum marginal.
    pub fn check_tail(&self, hd: &HybridDensity) -> Result<()> {
        if !self.tail_guard || self.dim() < 3 {
            return Ok(());
        }
        let r = reduce_quantum(hd);
        let d = self.dim();
        let mass = r.matrix()[(d - 1, d - 1)].re + r.matrix()[(d - 2, d - 2)].re;
        if mass > TAIL_MASS_TOL {
            return Err(Error::TailMass { mass });
        }
        Ok(())
    }

    fn check_state(&self, hd: &HybridDensity) -> Result<()> {
        self.xspace.check_same(hd.space())?;
        if hd.dim() != self.dim() {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: hd.dim() });
        }
        Ok(())
    }
}

fn apply(mm: &MonitoringModel, hd: &HybridDensity, corrected: bool) -> Result<Vec<CMatrix>> {
    mm.check_state(hd)?;
    let rho = hd.blocks();
    let anti: Vec<CMatrix> = rho.iter().map(|r| linalg::anticommutator(&mm.q_op, r)).collect();
    let drift = space::central_difference(&mm.xspace, &anti)?;
    let mut out: Vec<CMatrix> = rho
        .iter()
        .zip(drift)
        .map(|(r, k)| linalg::commutator(&mm.hamiltonian, r) * (-I) - k * C64::from(0.5))
        .collect();
    if corrected {
        let lap = space::laplacian(&mm.xspace, rho)?;
        let dp = mm.decoherence();
        for ((o, r), l) in out.iter_mut().zip(rho).zip(lap) {
            let inner = linalg::commutator(&mm.q_op, r);
            *o += l * C64::from(mm.diffusion) - linalg::commutator(&mm.q_op, &inner) * C64::from(dp);
        }
    }
    Ok(out)
}

/// `−i[Ĥ,ρ̂(X)] − ½∂_X{q̂,ρ̂(X)}` only.
pub fn naive_apply(mm: &MonitoringModel, hd: &HybridDensity) -> Result<Vec<CMatrix>> {
    apply(mm, hd, false)
}

pub fn monitoring_apply(mm: &MonitoringModel, hd: &HybridDensity) -> Result<Vec<CMatrix>> {
    apply(mm, hd, true)
}

/// Right-hand side of the marginal Fokker–Planck equation,
/// `−∂_X(Tr[q̂ρ̂(X)]) + D ∂²_X Tr ρ̂(X)`, with the generator's stencils.
pub fn fokker_planck_rhs(mm: &MonitoringModel, hd: &HybridDensity) -> Result<Vec<f64>> {
    mm.check_state(hd)?;
    let flux: Vec<f64> = hd.blocks().iter().map(|r| (&mm.q_op * r).trace().re).collect();
    let marginal: Vec<f64> = hd.blocks().iter().map(|r| r.trace().re).collect();
    let k = space::central_difference(&mm.xspace, &flux)?;
    let l = space::laplacian(&mm.xspace, &marginal)?;
    Ok(k.iter().zip(l).map(|(k, l)| -k + mm.diffusion * l).collect())
}

/// Probability mass in the outer tenth of the grid on each side.
pub fn boundary_mass(hd: &HybridDensity) -> Result<f64> {
    let (lo, hi) = hd.space().extent()?;
    let band = BOUNDARY_FRACTION * (hi - lo);
    let w = hd.space().weight();
    Ok(hd
        .space()
        .coordinates()?
        .iter()
        .zip(hd.blocks())
        .filter(|(x, _)| **x < lo + band || **x > hi - band)
        .map(|(_, b)| w * b.trace().re.abs())
        .sum())
}

/// `(⟨X⟩, Var X)` of the classical marginal.
pub fn signal_moments(hd: &HybridDensity) -> Result<(f64, f64)> {
    let w = hd.space().weight();
    let xs = hd.space().coordinates()?;
    let p: Vec<f64> = hd.blocks().iter().map(|b| w * b.trace().re).collect();
    let mean: f64 = xs.iter().zip(&p).map(|(x, p)| x * p).sum();
    let var: f64 = xs.iter().zip(&p).map(|(x, p)| (x - mean).powi(2) * p).sum();
    Ok((mean, var))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MonitoringResiduals {
    /// `max_t |d⟨X⟩/dt − ⟨q̂⟩|`
    pub drift_residual: f64,
    /// `max_t ‖d(Σ_X w ρ̂)/dt − decoherence rhs‖_max`
    pub reduced_lindblad_residual: f64,
    /// `max_t max_X |d Tr ρ̂(X)/dt − Fokker–Planck rhs|`
    pub fokker_planck_residual: f64,
    pub min_eigenvalue: f64,
    pub max_boundary_mass: f64,
}

/// Diagnostics over the snapshots of a monitoring run. Time derivatives are
/// those of the semi-discrete system, i.e. the generator applied to each
/// snapshot.
pub fn monitoring_residuals(mm: &MonitoringModel, ts: &TimeSeries<HybridDensity>) -> Result<MonitoringResiduals> {
    if ts.snapshots.is_empty() {
        return Err(Error::InvalidParameter("monitoring diagnostics need state snapshots".into()));
    }
    let w = mm.xspace.weight();
    let xs = mm.xspace.coordinates()?;
    let mut res = MonitoringResiduals {
        drift_residual: 0.0,
        reduced_lindblad_residual: 0.0,
        fokker_planck_residual: 0.0,
        min_eigenvalue: f64::INFINITY,
        max_boundary_mass: 0.0,
    };
    for hd in &ts.snapshots {
        let mass = boundary_mass(hd)?;
        if mass > BOUNDARY_MASS_TOL {
            return Err(Error::BoundaryLeak { mass });
        }
        mm.check_tail(hd)?;
        res.max_boundary_mass = res.max_boundary_mass.max(mass);
        res.min_eigenvalue = res.min_eigenvalue.min(hd.min_eigenvalue());

        let deriv = monitoring_apply(mm, hd)?;
        let dx_dt: f64 = xs.iter().zip(&deriv).map(|(x, b)| w * x * b.trace().re).sum();
        let mean_q: f64 = hd.blocks().iter().map(|b| w * (&mm.q_op * b).trace().re).sum();
        res.drift_residual = res.drift_residual.max((dx_dt - mean_q).abs());

        let summed = deriv.iter().fold(linalg::zeros(mm.dim()), |acc, b| acc + b) * C64::from(w);
        let marginal = reduce_quantum(hd);
        let expect = decoherence_rhs(&mm.hamiltonian, mm.decoherence(), &mm.q_op, marginal.matrix());
        res.reduced_lindblad_residual = res.reduced_lindblad_residual.max(linalg::max_abs_diff(&summed, &expect));

        let fp = fokker_planck_rhs(mm, hd)?;
        for (b, f) in deriv.iter().zip(fp) {
            res.fokker_planck_residual = res.fokker_planck_residual.max((b.trace().re - f).abs());
        }
    }
    Ok(res)
}

/// Coefficients recovered from the diagonal-block projection of the
/// enlarged-space generator with the single operator
/// `L̂ = q̂/√(8D) ⊗ Î + √(2D) Î ⊗ K_X`, `K_X` the antisymmetric
/// central-difference matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EmbeddingExperiment {
    /// Coefficient of `−½K_X{q̂,ρ̂}`.
    pub drift: f64,
    /// Coefficient of the 3-point Laplacian.
    pub diffusion: f64,
    /// Coefficient of `−[q̂,[q̂,ρ̂]]`.
    pub decoherence: f64,
    /// Relative least-squares residual of the three-term fit.
    pub fit_residual: f64,
    /// Largest off-diagonal block generated from a block-diagonal state.
    pub off_block: f64,
}

pub fn single_operator_embedding(mm: &MonitoringModel) -> Result<EnlargedModel> {
    let (n, d) = (mm.xspace.len(), mm.dim());
    let dx = mm.xspace.dx()?;
    let a = 1.0 / (8.0 * mm.diffusion).sqrt();
    let b = (2.0 * mm.diffusion).sqrt() / (2.0 * dx);
    let mut entries = Vec::new();
    for x in 0..n {
        for i in 0..d {
            for j in 0..d {
                let q = mm.q_op[(i, j)];
                if q != C64::new(0.0, 0.0) {
                    entries.push((x * d + i, x * d + j, q * a));
                }
            }
            entries.push((x * d + i, ((x + 1) % n) * d + i, C64::new(b, 0.0)));
            entries.push((x * d + i, ((x + n - 1) % n) * d + i, C64::new(-b, 0.0)));
        }
    }
    let h = SparseOp::from_dense(&block_diagonal(&mm.hamiltonian, n));
    Ok(EnlargedModel::new(n, d, h, vec![SparseOp { dim: n * d, entries }]))
}

fn block_diagonal(m: &CMatrix, n: usize) -> CMatrix {
    let d = m.nrows();
    let mut out = CMatrix::zeros(n * d, n * d);
    for x in 0..n {
        out.view_mut((x * d, x * d), (d, d)).copy_from(m);
    }
    out
}

/// Fit the projected single-operator generator on `probe` to the three
/// monitoring terms.
pub fn embedding_experiment(mm: &MonitoringModel, probe: &HybridDensity) -> Result<EmbeddingExperiment> {
    mm.check_state(probe)?;
    let em = single_operator_embedding(mm)?;
    let big = big_lindblad_apply(&em, &crate::hybrid_me::embed_state(probe))?;
    let proj = extract_blocks(&big, &mm.xspace, mm.dim())?;
    let rho = probe.blocks();

    let unitary: Vec<CMatrix> = rho.iter().map(|r| linalg::commutator(&mm.hamiltonian, r) * (-I)).collect();
    let anti: Vec<CMatrix> = rho.iter().map(|r| linalg::anticommutator(&mm.q_op, r)).collect();
    let drift: Vec<CMatrix> = space::central_difference(&mm.xspace, &anti)?
        .into_iter()
        .map(|k| k * C64::from(-0.5))
        .collect();
    let lap = space::laplacian(&mm.xspace, rho)?;
    let dec: Vec<CMatrix> = rho
        .iter()
        .map(|r| linalg::commutator(&mm.q_op, &linalg::commutator(&mm.q_op, r)) * C64::from(-1.0))
        .collect();

    let flat = |v: &[CMatrix]| -> Vec<f64> { v.iter().flat_map(|m| m.iter().flat_map(|z| [z.re, z.im])).collect() };
    let target: Vec<f64> = flat(&proj.blocks)
        .iter()
        .zip(flat(&unitary))
        .map(|(p, u)| p - u)
        .collect();
    let basis = [flat(&drift), flat(&lap), flat(&dec)];
    let gram = nalgebra::Matrix3::from_fn(|i, j| dot(&basis[i], &basis[j]));
    let rhs = nalgebra::Vector3::from_fn(|i, _| dot(&basis[i], &target));
    let coef = gram
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::InvalidParameter("probe state does not separate the monitoring terms".into()))?;
    let resid: f64 = target
        .iter()
        .enumerate()
        .map(|(k, t)| (t - coef[0] * basis[0][k] - coef[1] * basis[1][k] - coef[2] * basis[2][k]).powi(2))
        .sum();
    let scale = dot(&target, &target).max(f64::MIN_POSITIVE);
    Ok(EmbeddingExperiment {
        drift: coef[0],
        diffusion: coef[1],
        decoherence: coef[2],
        fit_residual: (resid / scale).sqrt(),
        off_block: EnlargedState { n: mm.xspace.len(), d: mm.dim(), matrix: big }.off_block_residual(),
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hybrid_state::{make_product, ClassicalDensity, DensityMatrix};
    use crate::linalg::{c, pauli_x, pauli_z};
    use crate::random;
    use crate::runtime::integrator::{evolve, IntegratorConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    fn plus() -> DensityMatrix {
        DensityMatrix::pure(&[c(1., 0.), c(1., 0.)]).unwrap()
    }

    fn model(h: CMatrix, d: f64, lo: f64, hi: f64, n: usize) -> MonitoringModel {
        let s = ClassicalSpace::grid_span(lo, hi, n, Boundary::Periodic).unwrap();
        MonitoringModel::new(h, pauli_z(), d, s).unwrap()
    }

    fn gaussian_plus(mm: &MonitoringModel, sd: f64) -> HybridDensity {
        let rc = ClassicalDensity::gaussian(mm.xspace().clone(), 0.0, sd).unwrap();
        make_product(&rc, &plus(), 2).unwrap()
    }

    #[test]
    fn construction_rules() {
        let s = ClassicalSpace::grid_span(-1.0, 1.0, 11, Boundary::Truncated).unwrap();
        assert!(MonitoringModel::new(pauli_x(), pauli_z(), 0.1, s).is_err());
        let s = ClassicalSpace::grid_span(-1.0, 1.0, 11, Boundary::Periodic).unwrap();
        assert!(MonitoringModel::new(pauli_x(), pauli_z(), 0.0, s.clone()).is_err());
        let m = MonitoringModel::new(pauli_x(), pauli_z(), 0.25, s).unwrap();
        assert_eq!(m.decoherence() * m.diffusion(), 1.0 / 16.0);
    }

    #[test]
    fn margin_rule() {
        let mm = model(pauli_x(), 0.05, -6.0, 6.0, 241);
        mm.check_margin(1.0, (-1.0, 1.0)).unwrap();
        assert!(matches!(mm.check_margin(4.0, (-1.0, 1.0)), Err(Error::GridTooNarrow { .. })));
    }

    #[test]
    fn reduced_identities_on_random_states() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        let s = ClassicalSpace::grid_span(-2.0, 2.0, 21, Boundary::Periodic).unwrap();
        for d in [2, 3] {
            let h = random::hermitian(d, 1.0, &mut rng);
            let q = random::hermitian(d, 1.0, &mut rng);
            let mm = MonitoringModel::new(h, q, 0.3, s.clone()).unwrap();
            let hd = random::hybrid_density(&s, d, &mut rng);
            let out = monitoring_apply(&mm, &hd).unwrap();
            let w = s.weight();
            let summed = out.iter().fold(linalg::zeros(d), |a, b| a + b) * C64::from(w);
            let expect = decoherence_rhs(mm.hamiltonian(), mm.decoherence(), mm.q_op(), reduce_quantum(&hd).matrix());
            assert!(linalg::max_abs_diff(&summed, &expect) <= 1e-12);
            let fp = fokker_planck_rhs(&mm, &hd).unwrap();
            for (b, f) in out.iter().zip(fp) {
                assert!((b.trace().re - f).abs() <= 1e-12);
            }
            for gen in [naive_apply, monitoring_apply] {
                let tr: f64 = gen(&mm, &hd).unwrap().iter().map(|b| w * b.trace().re).sum();
                assert!(tr.abs() <= 1e-11);
            }
        }
    }

    #[test]
    fn trivial_observable_is_advection_diffusion() {
        let s = ClassicalSpace::grid_span(-3.0, 3.0, 61, Boundary::Periodic).unwrap();
        let q = linalg::identity(2) * c(0.7, 0.0);
        let mm = MonitoringModel::new(pauli_x(), q, 0.2, s.clone()).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let hd = random::hybrid_density(&s, 2, &mut rng);
        let out = monitoring_apply(&mm, &hd).unwrap();
        let rho = hd.blocks();
        let k = space::central_difference(&s, rho).unwrap();
        let l = space::laplacian(&s, rho).unwrap();
        for i in 0..s.len() {
            let e = linalg::commutator(&pauli_x(), &rho[i]) * (-I) - &k[i] * c(0.7, 0.0) + &l[i] * c(0.2, 0.0);
            assert!(linalg::max_abs_diff(&out[i], &e) < 1e-12);
        }
    }

    #[test]
    fn naive_diagonal_states_are_pure_transport() {
        let mm = model(linalg::zeros(2), 0.1, -3.0, 3.0, 121);
        let rc = ClassicalDensity::gaussian(mm.xspace().clone(), 0.0, 0.3).unwrap();
        let diag = DensityMatrix::new(CMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![c(0.4, 0.), c(0.6, 0.)]))).unwrap();
        let hd = make_product(&rc, &diag, 2).unwrap();
        let ts = evolve(
            |s: &HybridDensity| s.with_blocks(naive_apply(&mm, s)?),
            hd,
            &IntegratorConfig::new(5e-3, 0.5),
            &mut [],
        )
        .unwrap();
        for b in ts.final_state.blocks() {
            assert!(b[(0, 1)].norm() < 1e-15);
        }
        // populations move in opposite directions at unit speed
        let p0: Vec<f64> = ts.final_state.blocks().iter().map(|b| b[(0, 0)].re).collect();
        let xs = mm.xspace().coordinates().unwrap();
        let m0: f64 = xs.iter().zip(&p0).map(|(x, p)| x * p).sum::<f64>() / p0.iter().sum::<f64>();
        assert!((m0 - 0.5).abs() < 1e-9, "{m0}");
    }

    #[test]
    fn naive_violates_positivity_and_correction_does_not() {
        let naive = model(linalg::zeros(2), 0.05, -4.0, 4.0, 161);
        let hd = gaussian_plus(&naive, 0.25);
        let cfg = IntegratorConfig::new(1e-3, 0.5).record_every(50);
        let ts = evolve(|s: &HybridDensity| s.with_blocks(naive_apply(&naive, s)?), hd.clone(), &cfg, &mut []).unwrap();
        assert!(ts.min_eigenvalue_overall() < -1e-3);
        let ts = evolve(|s: &HybridDensity| s.with_blocks(monitoring_apply(&naive, s)?), hd, &cfg, &mut []).unwrap();
        assert!(ts.min_eigenvalue_overall() >= -1e-6, "{}", ts.min_eigenvalue_overall());
    }

    #[test]
    fn residuals_need_snapshots_and_detect_leaks() {
        let mm = model(pauli_x() * c(0.5, 0.), 0.05, -2.0, 2.0, 81);
        let hd = gaussian_plus(&mm, 0.25);
        let cfg = IntegratorConfig::new(1e-3, 0.01);
        let gen = |s: &HybridDensity| s.with_blocks(monitoring_apply(&mm, s)?);
        let ts = evolve(gen, hd.clone(), &cfg, &mut []).unwrap();
        assert!(monitoring_residuals(&mm, &ts).is_err());
        let ts = evolve(gen, hd, &cfg.clone().keep_snapshots(true), &mut []).unwrap();
        let r = monitoring_residuals(&mm, &ts).unwrap();
        assert!(r.reduced_lindblad_residual <= 1e-11 && r.fokker_planck_residual <= 1e-11);

        let wide = gaussian_plus(&mm, 0.8);
        let ts = evolve(gen, wide, &cfg.keep_snapshots(true), &mut []).unwrap();
        assert!(matches!(monitoring_residuals(&mm, &ts), Err(Error::BoundaryLeak { .. })));
    }

    #[test]
    fn oscillator_tail_guard() {
        let s = ClassicalSpace::grid_span(-6.0, 6.0, 61, Boundary::Periodic).unwrap();
        let mm = MonitoringModel::oscillator(linalg::zeros(6), 0.1, s.clone()).unwrap();
        let rc = ClassicalDensity::gaussian(s.clone(), 0.0, 0.5).unwrap();
        let mut psi = vec![c(0., 0.); 6];
        psi[0] = c(1.0, 0.0);
        let ground = make_product(&rc, &DensityMatrix::pure(&psi).unwrap(), 6).unwrap();
        mm.check_tail(&ground).unwrap();
        psi[5] = c(0.1, 0.0);
        let leaky = make_product(&rc, &DensityMatrix::pure(&psi).unwrap(), 6).unwrap();
        assert!(matches!(mm.check_tail(&leaky), Err(Error::TailMass { .. })));
    }

    #[test]
    fn single_operator_embedding_coefficients() {
        let mm = model(pauli_x() * c(0.5, 0.), 0.2, -3.0, 3.0, 31);
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let probe = random::hybrid_density(mm.xspace(), 2, &mut rng);
        let e = embedding_experiment(&mm, &probe).unwrap();
        assert!(e.drift.abs() < 1e-10, "{e:?}");
        assert!((e.diffusion - 0.1).abs() < 1e-10, "{e:?}");
        assert!((e.decoherence - mm.decoherence()).abs() < 1e-10, "{e:?}");
        assert!(e.fit_residual < 1e-12);
        assert!(e.off_block > 0.0);
    }

    #[test]
    fn model_json_roundtrip() {
        let mm = model(pauli_x(), 0.05, -6.0, 6.0, 241);
        let s = serde_json::to_string(&mm).unwrap();
        let back: MonitoringModel = serde_json::from_str(&s).unwrap();
        assert_eq!(back, mm);
        let bad = s.replace("0.05", "-1.0");
        assert!(serde_json::from_str::<MonitoringModel>(&bad).is_err());
    }
}
