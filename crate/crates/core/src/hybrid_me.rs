//! Hybrid Pauli–Lindblad generator and its enlarged-space Lindblad embedding.
//!
//! The hybrid generator is
//!
//! ```text
//! dρ̂(x)/dt = −i[Ĥ(x), ρ̂(x)]
//!          + Σ_{y,α} [ L_α(x,y) ρ̂(y) L_α†(x,y) − ½{L_α†(y,x) L_α(y,x), ρ̂(x)} ]
//! ```
//!
//! Re-quantizing the classical index as an orthonormal basis `|x⟩` turns it
//! into an ordinary Lindblad equation on `C^n ⊗ C^d` (composite index
//! `x·d + i`). Each amplitude becomes its own jump operator
//! `L_α(x,y) ⊗ |x⟩⟨y|`, which keeps block-diagonal states block diagonal, and
//! the diagonal blocks of the enlarged evolution reproduce the hybrid one.
//! [`embed_model_summed`] builds the single-operator-per-channel variant for
//! comparison; it agrees on the projected generator but leaks into
//! off-diagonal blocks.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::generators::{LindbladModel, PauliRates};
use crate::hybrid_state::HybridDensity;
use crate::json;
use crate::linalg::{self, CMatrix, C64, I};
use crate::random;
use crate::runtime::integrator::{evolve, IntegratorConfig, Observer, OdeState};
use crate::space::ClassicalSpace;

/// `(alpha, x, y)`: channel, target point, source point.
pub type AmplitudeKey = (usize, usize, usize);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawModel", into = "RawModel")]
pub struct HybridLindbladModel {
    space: ClassicalSpace,
    dim: usize,
    hamiltonians: Vec<CMatrix>,
    amplitudes: BTreeMap<AmplitudeKey, CMatrix>,
    /// `Σ_{α,y} L_α†(y,x) L_α(y,x)` per source point `x`.
    loss: Vec<CMatrix>,
}

#[derive(Clone, Serialize, Deserialize)]
struct RawAmplitude {
    alpha: usize,
    x: usize,
    y: usize,
    #[serde(with = "json::matrix")]
    matrix: CMatrix,
}

#[derive(Clone, Serialize, Deserialize)]
struct RawModel {
    space: ClassicalSpace,
    dim: usize,
    #[serde(with = "json::matrix_list")]
    hamiltonians: Vec<CMatrix>,
    #[serde(default)]
    amplitudes: Vec<RawAmplitude>,
}

impl TryFrom<RawModel> for HybridLindbladModel {
    type Error = Error;
    fn try_from(r: RawModel) -> Result<Self> {
        let amps = r.amplitudes.into_iter().map(|a| ((a.alpha, a.x, a.y), a.matrix));
        HybridLindbladModel::new(r.space, r.dim, r.hamiltonians, amps)
    }
}

impl From<HybridLindbladModel> for RawModel {
    fn from(m: HybridLindbladModel) -> Self {
        RawModel {
            space: m.space,
            dim: m.dim,
            hamiltonians: m.hamiltonians,
            amplitudes: m
                .amplitudes
                .into_iter()
                .map(|((alpha, x, y), matrix)| RawAmplitude { alpha, x, y, matrix })
                .collect(),
        }
    }
}

impl HybridLindbladModel {
    pub fn new(
        space: ClassicalSpace,
        dim: usize,
        hamiltonians: Vec<CMatrix>,
        amplitudes: impl IntoIterator<Item = (AmplitudeKey, CMatrix)>,
    ) -> Result<Self> {
        let n = space.len();
        if hamiltonians.len() != n {
            return Err(Error::DimensionMismatch { expected: n, found: hamiltonians.len() });
        }
        for h in &hamiltonians {
            if h.nrows() != dim || h.ncols() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: h.nrows() });
            }
            let defect = linalg::hermiticity_defect(h);
            if defect > 1e-12 {
                return Err(Error::NonHermitian { defect });
            }
        }
        let mut map = BTreeMap::new();
        for (key @ (_, x, y), l) in amplitudes {
            if x >= n || y >= n {
                return Err(Error::InvalidParameter(format!("amplitude {key:?} outside the {n}-point space")));
            }
            if l.nrows() != dim || l.ncols() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: l.nrows() });
            }
            if map.insert(key, l).is_some() {
                return Err(Error::InvalidParameter(format!("duplicate amplitude {key:?}")));
            }
        }
        let mut loss = vec![linalg::zeros(dim); n];
        for ((_, _, y), l) in &map {
            loss[*y] += l.adjoint() * l;
        }
        Ok(HybridLindbladModel { space, dim, hamiltonians, amplitudes: map, loss })
    }

    /// Classical Pauli process: `L(x,y) = √T(x,y)·Î`, no Hamiltonian.
    pub fn from_pauli(rates: &PauliRates, dim: usize) -> Result<Self> {
        if rates.drift.is_some() {
            return Err(Error::InvalidParameter("drift has no jump-amplitude form".into()));
        }
        let n = rates.space.len();
        let mut amps = Vec::new();
        for x in 0..n {
            for y in 0..n {
                let t = rates.rates[(x, y)];
                if x != y && t > 0.0 {
                    amps.push(((0, x, y), linalg::identity(dim).map(|z| z * t.sqrt())));
                }
            }
        }
        Self::new(rates.space.clone(), dim, vec![linalg::zeros(dim); n], amps)
    }

    /// The same Lindblad generator at every point: `L_α(x,y) = δ_xy L̂_α`.
    pub fn from_lindblad(space: ClassicalSpace, model: &LindbladModel) -> Result<Self> {
        let n = space.len();
        let mut amps = Vec::new();
        for (alpha, l) in model.lindblad_ops.iter().enumerate() {
            for x in 0..n {
                amps.push(((alpha, x, x), l.clone()));
            }
        }
        Self::new(space, model.dim(), vec![model.hamiltonian.clone(); n], amps)
    }

    /// Random dense model for consistency testing.
    pub fn random<R: Rng + ?Sized>(space: &ClassicalSpace, dim: usize, channels: usize, amp_sd: f64, rng: &mut R) -> Self {
        random::hybrid_model(space, dim, channels, 1.0, amp_sd, rng)
    }

    pub fn space(&self) -> &ClassicalSpace {
        &self.space
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hamiltonians(&self) -> &[CMatrix] {
        &self.hamiltonians
    }

    pub fn amplitudes(&self) -> &BTreeMap<AmplitudeKey, CMatrix> {
        &self.amplitudes
    }

    pub fn channels(&self) -> usize {
        self.amplitudes.keys().map(|k| k.0 + 1).max().unwrap_or(0)
    }

    fn check_state(&self, hd: &HybridDensity) -> Result<()> {
        self.space.check_same(hd.space())?;
        if hd.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, found: hd.dim() });
        }
        Ok(())
    }
}

/// Time derivative of every block under the hybrid generator.
pub fn hybrid_apply(model: &HybridLindbladModel, hd: &HybridDensity) -> Result<Vec<CMatrix>> {
    model.check_state(hd)?;
    let rho = hd.blocks();
    let mut out: Vec<CMatrix> = rho
        .iter()
        .zip(&model.hamiltonians)
        .zip(&model.loss)
        .map(|((r, h), g)| linalg::commutator(h, r) * (-I) - linalg::anticommutator(g, r) * C64::from(0.5))
        .collect();
    for ((_, x, y), l) in &model.amplitudes {
        out[*x] += l * &rho[*y] * l.adjoint();
    }
    Ok(out)
}

/// Sparse operator on the enlarged space as `(row, col, value)` triplets.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseOp {
    pub dim: usize,
    pub entries: Vec<(usize, usize, C64)>,
}

impl SparseOp {
    pub fn from_dense(m: &CMatrix) -> Self {
        let mut entries = Vec::new();
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                if m[(r, c)] != C64::new(0.0, 0.0) {
                    entries.push((r, c, m[(r, c)]));
                }
            }
        }
        SparseOp { dim: m.nrows(), entries }
    }

    pub fn to_dense(&self) -> CMatrix {
        let mut m = CMatrix::zeros(self.dim, self.dim);
        for &(r, c, v) in &self.entries {
            m[(r, c)] += v;
        }
        m
    }

    pub fn nnz(&self) -> usize {
        self.entries.len()
    }

    /// `A·M`
    fn left_mul(&self, m: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(self.dim, m.ncols());
        for &(r, k, v) in &self.entries {
            for c in 0..m.ncols() {
                out[(r, c)] += v * m[(k, c)];
            }
        }
        out
    }

    /// `M·A`
    fn right_mul(&self, m: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(m.nrows(), self.dim);
        for &(k, c, v) in &self.entries {
            for r in 0..m.nrows() {
                out[(r, c)] += m[(r, k)] * v;
            }
        }
        out
    }

    /// `M·A†`
    fn right_mul_adjoint(&self, m: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(m.nrows(), self.dim);
        for &(j, k, v) in &self.entries {
            let vc = v.conj();
            for r in 0..m.nrows() {
                out[(r, j)] += m[(r, k)] * vc;
            }
        }
        out
    }
}

/// Lindblad model on the `n·d`-dimensional enlarged space.
#[derive(Clone, Debug)]
pub struct EnlargedModel {
    pub n: usize,
    pub d: usize,
    pub hamiltonian: SparseOp,
    pub lindblad_ops: Vec<SparseOp>,
    /// Dense `Σ_k L_k†L_k`.
    loss: CMatrix,
}

impl EnlargedModel {
    pub fn new(n: usize, d: usize, hamiltonian: SparseOp, lindblad_ops: Vec<SparseOp>) -> Self {
        let big = n * d;
        let mut loss = CMatrix::zeros(big, big);
        for l in &lindblad_ops {
            let dense = l.to_dense();
            loss += dense.adjoint() * dense;
        }
        EnlargedModel { n, d, hamiltonian, lindblad_ops, loss }
    }

    pub fn dim(&self) -> usize {
        self.n * self.d
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnlargedState {
    pub n: usize,
    pub d: usize,
    pub matrix: CMatrix,
}

impl EnlargedState {
    pub fn with_matrix(&self, matrix: CMatrix) -> Self {
        EnlargedState { n: self.n, d: self.d, matrix }
    }

    /// Frobenius norm of the largest off-diagonal `(x,y)` block.
    pub fn off_block_residual(&self) -> f64 {
        off_block_residual(&self.matrix, self.n, self.d)
    }
}

impl OdeState for EnlargedState {
    fn axpy(&mut self, a: f64, x: &Self) {
        self.matrix.zip_apply(&x.matrix, |y, x| *y += x * a);
    }
    fn scale_by(&mut self, a: f64) {
        self.matrix *= C64::new(a, 0.0);
    }
    fn hermitize(&mut self) {
        self.matrix = linalg::hermitian_part(&self.matrix);
    }
    fn is_finite(&self) -> bool {
        self.matrix.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
    fn total_trace(&self) -> f64 {
        self.matrix.trace().re
    }
    fn min_eigenvalue(&self) -> f64 {
        linalg::min_eigenvalue(&self.matrix)
    }
    fn norm_sq(&self) -> f64 {
        self.matrix.iter().map(C64::norm_sqr).sum()
    }
    fn random_like<R: Rng + ?Sized>(&self, rng: &mut R) -> Self {
        self.with_matrix(random::hermitian(self.matrix.nrows(), 1.0, rng))
    }
}

/// `Ρ̂ = Σ_x w_x ρ̂(x) ⊗ |x⟩⟨x|`, unit trace.
pub fn embed_state(hd: &HybridDensity) -> EnlargedState {
    let (n, d) = (hd.len(), hd.dim());
    let w = hd.space().weight();
    let mut m = CMatrix::zeros(n * d, n * d);
    for (x, b) in hd.blocks().iter().enumerate() {
        m.view_mut((x * d, x * d), (d, d)).copy_from(&b.map(|z| z * w));
    }
    EnlargedState { n, d, matrix: m }
}

fn hamiltonian_big(model: &HybridLindbladModel) -> SparseOp {
    let d = model.dim;
    let mut entries = Vec::new();
    for (x, h) in model.hamiltonians.iter().enumerate() {
        for i in 0..d {
            for j in 0..d {
                if h[(i, j)] != C64::new(0.0, 0.0) {
                    entries.push((x * d + i, x * d + j, h[(i, j)]));
                }
            }
        }
    }
    SparseOp { dim: model.space.len() * d, entries }
}

fn push_block(entries: &mut Vec<(usize, usize, C64)>, d: usize, x: usize, y: usize, l: &CMatrix) {
    for i in 0..d {
        for j in 0..d {
            if l[(i, j)] != C64::new(0.0, 0.0) {
                entries.push((x * d + i, y * d + j, l[(i, j)]));
            }
        }
    }
}

/// One enlarged jump operator `L_α(x,y) ⊗ |x⟩⟨y|` per nonzero amplitude.
pub fn embed_model(model: &HybridLindbladModel) -> EnlargedModel {
    let (n, d) = (model.space.len(), model.dim);
    let ops = model
        .amplitudes
        .iter()
        .filter(|(_, l)| l.iter().any(|z| *z != C64::new(0.0, 0.0)))
        .map(|(&(_, x, y), l)| {
            let mut entries = Vec::new();
            push_block(&mut entries, d, x, y, l);
            SparseOp { dim: n * d, entries }
        })
        .collect();
    EnlargedModel::new(n, d, hamiltonian_big(model), ops)
}

/// One enlarged operator per channel, `L̂_α = Σ_{x,y} L_α(x,y) ⊗ |x⟩⟨y|`.
pub fn embed_model_summed(model: &HybridLindbladModel) -> EnlargedModel {
    let (n, d) = (model.space.len(), model.dim);
    let mut per_channel: BTreeMap<usize, Vec<(usize, usize, C64)>> = BTreeMap::new();
    for (&(alpha, x, y), l) in &model.amplitudes {
        push_block(per_channel.entry(alpha).or_default(), d, x, y, l);
    }
    let ops = per_channel
        .into_values()
        .map(|entries| SparseOp { dim: n * d, entries })
        .collect();
    EnlargedModel::new(n, d, hamiltonian_big(model), ops)
}

/// Standard Lindblad derivative on the enlarged space.
pub fn big_lindblad_apply(em: &EnlargedModel, p: &EnlargedState) -> Result<CMatrix> {
    let big = em.dim();
    if p.matrix.nrows() != big || p.matrix.ncols() != big {
        return Err(Error::DimensionMismatch { expected: big, found: p.matrix.nrows() });
    }
    let r = &p.matrix;
    let comm = em.hamiltonian.left_mul(r) - em.hamiltonian.right_mul(r);
    let mut out = comm * (-I) - linalg::anticommutator(&em.loss, r) * C64::from(0.5);
    for l in &em.lindblad_ops {
        out += l.right_mul_adjoint(&l.left_mul(r));
    }
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct BlockExtraction {
    pub blocks: Vec<CMatrix>,
    /// Frobenius norm of the largest discarded off-diagonal block.
    pub residual: f64,
}

fn off_block_residual(m: &CMatrix, n: usize, d: usize) -> f64 {
    let mut worst = 0.0_f64;
    for x in 0..n {
        for y in 0..n {
            if x != y {
                worst = worst.max(m.view((x * d, y * d), (d, d)).norm());
            }
        }
    }
    worst
}

/// Diagonal blocks divided by the quadrature weight, i.e. the inverse of
/// [`embed_state`]. Works on states and on derivatives alike.
pub fn extract_blocks(m: &CMatrix, space: &ClassicalSpace, d: usize) -> Result<BlockExtraction> {
    let n = space.len();
    if m.nrows() != n * d || m.ncols() != n * d {
        return Err(Error::DimensionMismatch { expected: n * d, found: m.nrows() });
    }
    let w = space.weight();
    let blocks = (0..n)
        .map(|x| m.view((x * d, x * d), (d, d)).map(|z| z / w))
        .collect();
    Ok(BlockExtraction { blocks, residual: off_block_residual(m, n, d) })
}

#[derive(Clone, Debug)]
pub struct EquivalenceReport {
    /// Largest entrywise difference between hybrid and projected blocks at `t_final`.
    pub residual: f64,
    pub hybrid_min_eigenvalue: f64,
    pub hybrid_max_trace_defect: f64,
    pub enlarged_max_trace_defect: f64,
    /// Largest off-diagonal block of the enlarged state over all steps.
    pub max_off_block: f64,
    pub hybrid_final: HybridDensity,
}

/// Evolve `hd` under the hybrid generator and its embedding under the
/// enlarged Lindblad generator with identical RK4 stepping, then compare.
pub fn equivalence_check(
    model: &HybridLindbladModel,
    hd: &HybridDensity,
    t_final: f64,
    dt: f64,
) -> Result<EquivalenceReport> {
    model.check_state(hd)?;
    let cfg = IntegratorConfig::new(dt, t_final);
    let em = embed_model(model);
    let (hybrid, enlarged) = rayon::join(
        || {
            let gen = |s: &HybridDensity| s.with_blocks(hybrid_apply(model, s)?);
            evolve(gen, hd.clone(), &cfg, &mut [])
        },
        || {
            let gen = |p: &EnlargedState| Ok(p.with_matrix(big_lindblad_apply(&em, p)?));
            let mut obs = [Observer::new("off_block", |_t: f64, p: &EnlargedState| Ok(p.off_block_residual()))];
            let ts = evolve(gen, embed_state(hd), &cfg, &mut obs)?;
            let off = ts.observable("off_block").unwrap_or(&[]).iter().cloned().fold(0.0, f64::max);
            Ok::<_, Error>((ts, off))
        },
    );
    let hybrid = hybrid?;
    let (enlarged, max_off_block) = enlarged?;
    let projected = extract_blocks(&enlarged.final_state.matrix, hd.space(), hd.dim())?;
    let residual = crate::hybrid_state::max_block_diff(hybrid.final_state.blocks(), &projected.blocks);
    Ok(EquivalenceReport {
        residual,
        hybrid_min_eigenvalue: hybrid.min_eigenvalue_overall(),
        hybrid_max_trace_defect: hybrid.max_trace_defect(),
        enlarged_max_trace_defect: enlarged.max_trace_defect(),
        max_off_block,
        hybrid_final: hybrid.final_state,
    })
}

pub fn equivalence_residual(model: &HybridLindbladModel, hd: &HybridDensity, t_final: f64, dt: f64) -> Result<f64> {
    Ok(equivalence_check(model, hd, t_final, dt)?.residual)
}
