//! Repeated Gaussian measurements of `q̂` as a Monte Carlo oracle for the
//! monitoring equation.
//!
//! Every `τ = 1/ν` the state is measured with a Gaussian Kraus operator of
//! variance `σ² = 2Dν`, evolved unitarily for `τ`, and the signal advances by
//! `ξτ`. With this choice `ν/8σ² = 1/16D` for every `ν`, so only `ν`
//! controls convergence.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::MonitoringModel;
use crate::error::{Error, Result};
use crate::hybrid_state::{DensityMatrix, HybridDensity};
use crate::linalg::{self, CMatrix, C64};
use crate::runtime::integrator::fmt_f64;

/// Recorded in outputs next to the seed.
pub const RNG_ALGORITHM: &str = "ChaCha20 (seed, stream = trajectory index)";
/// Fewest trajectories accepted by the ensemble estimators.
pub const MIN_ENSEMBLE: usize = 100;
const MAX_DRAWS: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub nu: f64,
    pub sigma2: f64,
    pub t_final: f64,
    pub n_traj: usize,
    pub seed: u64,
    /// Record every this many measurement steps (and the last one).
    #[serde(default = "one")]
    pub record_every: usize,
}

fn one() -> usize {
    1
}

impl SamplerConfig {
    /// `σ² = 2Dν`.
    pub fn new(mm: &MonitoringModel, nu: f64, t_final: f64, n_traj: usize, seed: u64) -> Result<Self> {
        let cfg = SamplerConfig { nu, sigma2: 2.0 * mm.diffusion() * nu, t_final, n_traj, seed, record_every: 1 };
        cfg.validate(mm)?;
        Ok(cfg)
    }

    pub fn record_every(mut self, k: usize) -> Self {
        self.record_every = k;
        self
    }

    pub fn tau(&self) -> f64 {
        1.0 / self.nu
    }

    pub fn steps(&self) -> Result<usize> {
        let raw = self.t_final * self.nu;
        let n = raw.round();
        if !(n >= 0.0) || (raw - n).abs() > 1e-9 * raw.max(1.0) {
            return Err(Error::InvalidParameter(format!(
                "t_final·ν = {raw} must be a whole number of measurements"
            )));
        }
        Ok(n as usize)
    }

    pub fn validate(&self, mm: &MonitoringModel) -> Result<()> {
        if !(self.nu > 0.0 && self.nu.is_finite()) || !(self.sigma2 > 0.0) {
            return Err(Error::InvalidParameter("ν and σ² must be positive".into()));
        }
        if self.n_traj == 0 || self.record_every == 0 {
            return Err(Error::InvalidParameter("n_traj and record_every must be positive".into()));
        }
        let defect = (self.nu / (8.0 * self.sigma2) - mm.decoherence()).abs();
        if defect > 1e-12 * mm.decoherence() {
            return Err(Error::InvalidParameter(format!("σ² = {} is not 2Dν", self.sigma2)));
        }
        self.steps()?;
        Ok(())
    }
}

/// Distribution of the initial signal value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialSignal {
    Fixed { x0: f64 },
    Gaussian { mean: f64, sd: f64 },
}

impl InitialSignal {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            InitialSignal::Fixed { x0 } => x0,
            InitialSignal::Gaussian { mean, sd } => mean + sd * rng.sample::<f64, _>(StandardNormal),
        }
    }

    /// Interval holding the initial signal up to 6 standard deviations.
    pub fn support(&self) -> (f64, f64) {
        match *self {
            InitialSignal::Fixed { x0 } => (x0, x0),
            InitialSignal::Gaussian { mean, sd } => (mean - 6.0 * sd, mean + 6.0 * sd),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    /// Measurement step count at each recorded time.
    pub steps: Vec<usize>,
    pub x: Vec<f64>,
    /// One outcome per measurement step.
    pub xi: Vec<f64>,
    /// Conditional state at each recorded time.
    pub states: Vec<DensityMatrix>,
}

/// Model quantities shared by every trajectory, in the eigenbasis of `q̂`.
struct Prepared {
    eigenvalues: Vec<f64>,
    basis: CMatrix,
    unitary: CMatrix,
}

impl Prepared {
    fn new(mm: &MonitoringModel, tau: f64) -> Self {
        let (eigenvalues, basis) = linalg::eigh(mm.q_op());
        let u = linalg::unitary_propagator(mm.hamiltonian(), tau);
        let unitary = basis.adjoint() * u * &basis;
        Prepared { eigenvalues, basis, unitary }
    }
}

fn per_trajectory_rng(seed: u64, index: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Draw `ξ`, apply the Kraus update in place and return `ξ`.
fn measure<R: Rng + ?Sized>(p: &Prepared, rho: &mut CMatrix, sigma: f64, step: usize, rng: &mut R) -> Result<f64> {
    let d = p.eigenvalues.len();
    for _ in 0..MAX_DRAWS {
        let pops: Vec<f64> = (0..d).map(|a| rho[(a, a)].re.max(0.0)).collect();
        let total: f64 = pops.iter().sum();
        let mut u = rng.random::<f64>() * total;
        let mut a = d - 1;
        for (k, pk) in pops.iter().enumerate() {
            if u < *pk {
                a = k;
                break;
            }
            u -= pk;
        }
        let xi = p.eigenvalues[a] + sigma * rng.sample::<f64, _>(StandardNormal);

        // exponents relative to the largest keep the ratios exact
        let e: Vec<f64> = p.eigenvalues.iter().map(|l| -(l - xi).powi(2) / (4.0 * sigma * sigma)).collect();
        let top = e.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let g: Vec<f64> = e.iter().map(|x| (x - top).exp()).collect();
        let mut next = rho.clone();
        for i in 0..d {
            for j in 0..d {
                next[(i, j)] *= g[i] * g[j];
            }
        }
        let norm = next.trace().re;
        if norm.is_finite() && norm > f64::MIN_POSITIVE * 1e10 {
            *rho = next.map(|z| z / norm);
            return Ok(xi);
        }
    }
    Err(Error::NormUnderflow { step, attempts: MAX_DRAWS })
}

fn run<R: Rng + ?Sized>(
    p: &Prepared,
    cfg: &SamplerConfig,
    rho0: &DensityMatrix,
    x0: f64,
    rng: &mut R,
) -> Result<TrajectoryRecord> {
    let steps = cfg.steps()?;
    let tau = cfg.tau();
    let sigma = cfg.sigma2.sqrt();
    let udag = p.unitary.adjoint();
    let mut rho = p.basis.adjoint() * rho0.matrix() * &p.basis;
    let mut x = x0;
    let n_rec = steps / cfg.record_every + 2;
    let mut rec = TrajectoryRecord {
        times: Vec::with_capacity(n_rec),
        steps: Vec::with_capacity(n_rec),
        x: Vec::with_capacity(n_rec),
        xi: Vec::with_capacity(steps),
        states: Vec::with_capacity(n_rec),
    };
    let snapshot = |rho: &CMatrix| DensityMatrix::new(linalg::hermitian_part(&(&p.basis * rho * p.basis.adjoint())));
    rec.times.push(0.0);
    rec.steps.push(0);
    rec.x.push(x);
    rec.states.push(snapshot(&rho)?);
    for k in 1..=steps {
        let xi = measure(p, &mut rho, sigma, k, rng)?;
        rho = &p.unitary * &rho * &udag;
        x += xi * tau;
        rec.xi.push(xi);
        if k % cfg.record_every == 0 || k == steps {
            rec.times.push(k as f64 * tau);
            rec.steps.push(k);
            rec.x.push(x);
            rec.states.push(snapshot(&rho)?);
        }
    }
    Ok(rec)
}

/// Trajectory number `index` of the ensemble seeded by `cfg.seed`.
pub fn sample_trajectory(
    mm: &MonitoringModel,
    cfg: &SamplerConfig,
    rho0: &DensityMatrix,
    x0: f64,
    index: u64,
) -> Result<TrajectoryRecord> {
    cfg.validate(mm)?;
    check_dim(mm, rho0)?;
    let p = Prepared::new(mm, cfg.tau());
    run(&p, cfg, rho0, x0, &mut per_trajectory_rng(cfg.seed, index))
}

/// `cfg.n_traj` independent trajectories, in parallel. Trajectory `i` draws
/// its initial signal and all outcomes from stream `i`, so the result does
/// not depend on the thread count.
pub fn sample_ensemble(
    mm: &MonitoringModel,
    cfg: &SamplerConfig,
    rho0: &DensityMatrix,
    initial: InitialSignal,
) -> Result<Vec<TrajectoryRecord>> {
    cfg.validate(mm)?;
    check_dim(mm, rho0)?;
    let p = Prepared::new(mm, cfg.tau());
    (0..cfg.n_traj as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = per_trajectory_rng(cfg.seed, i);
            let x0 = initial.draw(&mut rng);
            run(&p, cfg, rho0, x0, &mut rng)
        })
        .collect()
}

fn check_dim(mm: &MonitoringModel, rho0: &DensityMatrix) -> Result<()> {
    if rho0.dim() != mm.dim() {
        return Err(Error::DimensionMismatch { expected: mm.dim(), found: rho0.dim() });
    }
    Ok(())
}

fn time_index(records: &[TrajectoryRecord], t: f64) -> Result<usize> {
    if records.len() < MIN_ENSEMBLE {
        return Err(Error::EmptyEnsemble { needed: MIN_ENSEMBLE, found: records.len() });
    }
    let times = &records[0].times;
    let k = times
        .iter()
        .position(|s| (s - t).abs() <= 1e-9 * t.abs().max(1.0))
        .ok_or_else(|| Error::InvalidParameter(format!("t = {t} is not a recorded time")))?;
    if records.iter().any(|r| r.times.len() != times.len()) {
        return Err(Error::InvalidParameter("records do not share a time grid".into()));
    }
    Ok(k)
}

/// Histogram estimate of `ρ̂(X)` at time `t`: conditional states summed per
/// nearest grid point and divided by `N·w`.
pub fn ensemble_hybrid_estimate(records: &[TrajectoryRecord], mm: &MonitoringModel, t: f64) -> Result<HybridDensity> {
    let k = time_index(records, t)?;
    let space = mm.xspace();
    let mut hd = HybridDensity::zeros(space.clone(), mm.dim());
    let scale = 1.0 / (records.len() as f64 * space.weight());
    for r in records {
        let i = space.nearest_index(r.x[k])?;
        hd.blocks_mut()[i] += r.states[k].matrix().map(|z| z * scale);
    }
    Ok(hd)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Moments {
    pub t: f64,
    pub mean_x: f64,
    pub var_x: f64,
    pub mean_q: f64,
    pub purity: f64,
}

/// Ensemble moments with their standard errors.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EnsembleMoments {
    pub moments: Moments,
    pub se_mean_x: f64,
    pub se_var_x: f64,
    pub se_mean_q: f64,
    pub se_purity: f64,
    pub n: usize,
}

/// Moments of the PDE state: signal mean and variance, `⟨q̂⟩` and the purity
/// of the quantum marginal.
pub fn pde_moments(mm: &MonitoringModel, hd: &HybridDensity, t: f64) -> Result<Moments> {
    let (mean_x, var_x) = super::signal_moments(hd)?;
    let marginal = crate::hybrid_state::reduce_quantum(hd);
    Ok(Moments {
        t,
        mean_x,
        var_x,
        mean_q: (mm.q_op() * marginal.matrix()).trace().re,
        purity: marginal.purity(),
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn sample_sd(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)).sqrt()
}

pub fn ensemble_moments(mm: &MonitoringModel, records: &[TrajectoryRecord], t: f64) -> Result<EnsembleMoments> {
    let k = time_index(records, t)?;
    let n = records.len();
    let sqrt_n = (n as f64).sqrt();
    let xs: Vec<f64> = records.iter().map(|r| r.x[k]).collect();
    let qs: Vec<f64> = records.iter().map(|r| (mm.q_op() * r.states[k].matrix()).trace().re).collect();

    let mean_x = mean(&xs);
    let dev2: Vec<f64> = xs.iter().map(|x| (x - mean_x).powi(2)).collect();
    let var_x = mean(&dev2);
    let m4 = mean(&dev2.iter().map(|d| d * d).collect::<Vec<_>>());

    let avg = records
        .iter()
        .fold(linalg::zeros(mm.dim()), |acc, r| acc + r.states[k].matrix())
        .map(|z| z / n as f64);
    // Tr ρ̄² overshoots Tr(Eρ)² by Var/N; drop the diagonal pairs
    let mean_self: f64 = records.iter().map(|r| r.states[k].purity()).sum::<f64>() / n as f64;
    let nf = n as f64;
    let purity = (nf * (&avg * &avg).trace().re - mean_self) / (nf - 1.0);
    // influence of each trajectory on Tr ρ̄²
    let infl: Vec<f64> = records
        .iter()
        .map(|r| 2.0 * (&avg * r.states[k].matrix()).trace().re)
        .collect();

    Ok(EnsembleMoments {
        moments: Moments { t, mean_x, var_x, mean_q: mean(&qs), purity },
        se_mean_x: sample_sd(&xs) / sqrt_n,
        se_var_x: ((m4 - var_x * var_x).max(0.0) / n as f64).sqrt(),
        se_mean_q: sample_sd(&qs) / sqrt_n,
        se_purity: sample_sd(&infl) / sqrt_n,
        n,
    })
}

/// Piecewise-linear CDF of a grid density: cell `i` spreads its mass
/// uniformly over `[x_i − dx/2, x_i + dx/2]`.
struct GridCdf {
    edges: Vec<f64>,
    cum: Vec<f64>,
}

impl GridCdf {
    fn new(hd: &HybridDensity) -> Result<Self> {
        let dx = hd.space().dx()?;
        let xs = hd.space().coordinates()?;
        let mut edges = Vec::with_capacity(xs.len() + 1);
        edges.push(xs[0] - 0.5 * dx);
        edges.extend(xs.iter().map(|x| x + 0.5 * dx));
        let mut cum = vec![0.0];
        let mut acc = 0.0;
        for b in hd.blocks() {
            acc += dx * b.trace().re;
            cum.push(acc);
        }
        // round-off in the total must not bias the tails
        let total = acc;
        cum.iter_mut().for_each(|c| *c /= total);
        Ok(GridCdf { edges, cum })
    }

    fn eval(&self, x: f64) -> f64 {
        let n = self.edges.len();
        if x <= self.edges[0] {
            return 0.0;
        }
        if x >= self.edges[n - 1] {
            return 1.0;
        }
        let i = self.edges.partition_point(|e| *e <= x) - 1;
        let f = (x - self.edges[i]) / (self.edges[i + 1] - self.edges[i]);
        self.cum[i] + f * (self.cum[i + 1] - self.cum[i])
    }
}

/// `∫|a + b·s| ds` over `s ∈ [0, h]`.
fn abs_linear_integral(a: f64, b: f64, h: f64) -> f64 {
    let end = a + b * h;
    if a * end >= 0.0 {
        0.5 * h * (a.abs() + end.abs())
    } else {
        let root = -a / b;
        0.5 * root * a.abs() + 0.5 * (h - root) * end.abs()
    }
}

/// Wasserstein-1 distance between the samples' empirical law and the grid
/// density, together with its standard-error scale `∫√(F(1−F)/N) dX`.
pub fn wasserstein1(samples: &[f64], hd: &HybridDensity) -> Result<(f64, f64)> {
    if samples.is_empty() {
        return Err(Error::EmptyEnsemble { needed: 1, found: 0 });
    }
    let cdf = GridCdf::new(hd)?;
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;

    let mut points: Vec<f64> = cdf.edges.iter().chain(sorted.iter()).cloned().collect();
    points.sort_by(f64::total_cmp);
    points.dedup();
    let mut w1 = 0.0;
    let mut se = 0.0;
    let mut below = 0usize;
    for pair in points.windows(2) {
        let (a, b) = (pair[0], pair[1]);
        while below < sorted.len() && sorted[below] <= a {
            below += 1;
        }
        let emp = below as f64 / n;
        let (fa, fb) = (cdf.eval(a), cdf.eval(b));
        let h = b - a;
        if h <= 0.0 {
            continue;
        }
        w1 += abs_linear_integral(fa - emp, (fb - fa) / h, h);
        let fm = cdf.eval(0.5 * (a + b));
        // Simpson on the smooth square-root profile
        let s = |f: f64| (f * (1.0 - f)).max(0.0).sqrt();
        se += h / 6.0 * (s(fa) + 4.0 * s(fm) + s(fb));
    }
    Ok((w1, se / n.sqrt()))
}

pub fn trajectory_csv(rec: &TrajectoryRecord) -> String {
    let mut out = String::from("t,X,xi,p0,coh_re,coh_im\n");
    for (k, ((t, x), s)) in rec.times.iter().zip(&rec.x).zip(&rec.states).enumerate() {
        // outcome of the step that ended at this record; none at t = 0
        let xi = match rec.steps[k] {
            0 => f64::NAN,
            n => rec.xi[n - 1],
        };
        let m = s.matrix();
        let coh = if m.nrows() > 1 { m[(0, 1)] } else { C64::new(0.0, 0.0) };
        let row = [fmt_f64(*t), fmt_f64(*x), fmt_f64(xi), fmt_f64(m[(0, 0)].re), fmt_f64(coh.re), fmt_f64(coh.im)];
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

pub fn ensemble_summary_csv(rows: &[EnsembleMoments]) -> String {
    let mut out =
        String::from("t,mean_X,var_X,mean_q,purity,stderr_mean_X,stderr_var_X,stderr_mean_q,stderr_purity\n");
    for r in rows {
        let m = &r.moments;
        let row = [m.t, m.mean_x, m.var_x, m.mean_q, m.purity, r.se_mean_x, r.se_var_x, r.se_mean_q, r.se_purity];
        out.push_str(&row.iter().map(|v| fmt_f64(*v)).collect::<Vec<_>>().join(","));
        out.push('\n');
    }
    out
}
