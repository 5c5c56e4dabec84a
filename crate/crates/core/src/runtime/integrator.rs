//! Fixed-step RK4 time integration with observer instrumentation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hybrid_state::{ClassicalDensity, DensityMatrix, HybridDensity};
use crate::linalg::{self, CMatrix, C64};
use crate::random;

/// Safety factor in the step-size bound.
pub const STABILITY_FACTOR: f64 = 0.2;

/// A state that a linear generator can be integrated on.
pub trait OdeState: Clone {
    /// self += a·x
    fn axpy(&mut self, a: f64, x: &Self);
    fn scale_by(&mut self, a: f64);
    /// Project every matrix onto its Hermitian part.
    fn hermitize(&mut self) {}
    fn is_finite(&self) -> bool;
    /// Weighted total trace (total probability for classical states).
    fn total_trace(&self) -> f64;
    fn min_eigenvalue(&self) -> f64;
    fn norm_sq(&self) -> f64;
    /// Same shape, random entries.
    fn random_like<R: Rng + ?Sized>(&self, rng: &mut R) -> Self;
}

fn axpy_matrix(y: &mut CMatrix, a: f64, x: &CMatrix) {
    y.zip_apply(x, |yi, xi| *yi += xi * a);
}

fn finite(m: &CMatrix) -> bool {
    m.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

fn norm_sq(m: &CMatrix) -> f64 {
    m.iter().map(C64::norm_sqr).sum()
}

impl OdeState for ClassicalDensity {
    fn axpy(&mut self, a: f64, x: &Self) {
        self.values.iter_mut().zip(&x.values).for_each(|(y, x)| *y += a * x);
    }
    fn scale_by(&mut self, a: f64) {
        self.values.iter_mut().for_each(|v| *v *= a);
    }
    fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
    fn total_trace(&self) -> f64 {
        self.total()
    }
    fn min_eigenvalue(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }
    fn norm_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }
    fn random_like<R: Rng + ?Sized>(&self, rng: &mut R) -> Self {
        let values = self.values.iter().map(|_| rng.random_range(-1.0..1.0)).collect();
        ClassicalDensity { space: self.space.clone(), values }
    }
}

impl OdeState for DensityMatrix {
    fn axpy(&mut self, a: f64, x: &Self) {
        axpy_matrix(self.matrix_mut(), a, x.matrix());
    }
    fn scale_by(&mut self, a: f64) {
        *self.matrix_mut() *= C64::new(a, 0.0);
    }
    fn hermitize(&mut self) {
        let h = linalg::hermitian_part(self.matrix());
        *self.matrix_mut() = h;
    }
    fn is_finite(&self) -> bool {
        finite(self.matrix())
    }
    fn total_trace(&self) -> f64 {
        self.matrix().trace().re
    }
    fn min_eigenvalue(&self) -> f64 {
        linalg::min_eigenvalue(self.matrix())
    }
    fn norm_sq(&self) -> f64 {
        norm_sq(self.matrix())
    }
    fn random_like<R: Rng + ?Sized>(&self, rng: &mut R) -> Self {
        DensityMatrix::new(random::hermitian(self.dim(), 1.0, rng)).expect("square")
    }
}

impl OdeState for HybridDensity {
    fn axpy(&mut self, a: f64, x: &Self) {
        self.blocks_mut()
            .iter_mut()
            .zip(x.blocks())
            .for_each(|(y, x)| axpy_matrix(y, a, x));
    }
    fn scale_by(&mut self, a: f64) {
        self.blocks_mut().iter_mut().for_each(|b| *b *= C64::new(a, 0.0));
    }
    fn hermitize(&mut self) {
        self.blocks_mut()
            .iter_mut()
            .for_each(|b| *b = linalg::hermitian_part(b));
    }
    fn is_finite(&self) -> bool {
        self.blocks().iter().all(finite)
    }
    fn total_trace(&self) -> f64 {
        HybridDensity::total_trace(self)
    }
    fn min_eigenvalue(&self) -> f64 {
        HybridDensity::min_eigenvalue(self)
    }
    fn norm_sq(&self) -> f64 {
        self.blocks().iter().map(norm_sq).sum()
    }
    fn random_like<R: Rng + ?Sized>(&self, rng: &mut R) -> Self {
        let blocks = (0..self.len()).map(|_| random::hermitian(self.dim(), 1.0, rng)).collect();
        self.with_blocks(blocks).expect("same shape")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Rk4,
}

fn default_true() -> bool {
    true
}

fn default_one() -> usize {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    #[serde(default)]
    pub method: Method,
    pub dt: f64,
    pub t_final: f64,
    #[serde(default = "default_one")]
    pub record_every: usize,
    #[serde(default = "default_true")]
    pub hermitize: bool,
    #[serde(default)]
    pub keep_snapshots: bool,
}

impl IntegratorConfig {
    pub fn new(dt: f64, t_final: f64) -> Self {
        IntegratorConfig {
            method: Method::Rk4,
            dt,
            t_final,
            record_every: 1,
            hermitize: true,
            keep_snapshots: false,
        }
    }

    pub fn record_every(mut self, k: usize) -> Self {
        self.record_every = k;
        self
    }

    pub fn hermitize(mut self, on: bool) -> Self {
        self.hermitize = on;
        self
    }

    pub fn keep_snapshots(mut self, on: bool) -> Self {
        self.keep_snapshots = on;
        self
    }

    /// Number of steps; `t_final` must be a whole multiple of `dt`.
    pub fn steps(&self) -> Result<usize> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(Error::Config(format!("t_final must be >= 0, got {}", self.t_final)));
        }
        if self.record_every == 0 {
            return Err(Error::Config("record_every must be >= 1".into()));
        }
        let steps = (self.t_final / self.dt).round();
        if (steps * self.dt - self.t_final).abs() > 1e-9 * self.t_final.max(1.0) {
            return Err(Error::Config(format!(
                "t_final {} is not a multiple of dt {}",
                self.t_final, self.dt
            )));
        }
        Ok(steps as usize)
    }

    pub fn check_stability(&self, bound: f64) -> Result<()> {
        if self.dt > bound {
            return Err(Error::Config(format!("dt {} exceeds the stability bound {bound:.3e}", self.dt)));
        }
        Ok(())
    }
}

type ObserverFn<'a, S> = Box<dyn FnMut(f64, &S) -> std::result::Result<f64, String> + 'a>;

/// Named scalar probe evaluated at every recorded time.
pub struct Observer<'a, S> {
    name: String,
    probe: ObserverFn<'a, S>,
}

impl<'a, S> Observer<'a, S> {
    pub fn new<F>(name: impl Into<String>, probe: F) -> Self
    where
        F: FnMut(f64, &S) -> std::result::Result<f64, String> + 'a,
    {
        Observer { name: name.into(), probe: Box::new(probe) }
    }

    pub fn name(&self) -> &str {
        &self.name
    }
}

#[derive(Clone, Debug)]
pub struct TimeSeries<S> {
    pub times: Vec<f64>,
    pub trace_defect: Vec<f64>,
    pub min_eigenvalue: Vec<f64>,
    pub observables: Vec<(String, Vec<f64>)>,
    pub snapshots: Vec<S>,
    pub final_state: S,
    pub hermitized: bool,
}

impl<S> TimeSeries<S> {
    pub fn observable(&self, name: &str) -> Option<&[f64]> {
        self.observables
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.as_slice())
    }

    pub fn max_trace_defect(&self) -> f64 {
        self.trace_defect.iter().cloned().fold(0.0, f64::max)
    }

    pub fn min_eigenvalue_overall(&self) -> f64 {
        self.min_eigenvalue.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    /// CSV with columns `t, trace_defect, min_eigenvalue, <observables…>`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,trace_defect,min_eigenvalue");
        for (name, _) in &self.observables {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (i, t) in self.times.iter().enumerate() {
            let mut row = vec![fmt_f64(*t), fmt_f64(self.trace_defect[i]), fmt_f64(self.min_eigenvalue[i])];
            row.extend(self.observables.iter().map(|(_, v)| fmt_f64(v[i])));
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// One classical RK4 step of `dS/dt = G(S)`.
pub fn step_rk4<S, G>(generator: &G, state: &S, dt: f64, hermitize: bool) -> Result<S>
where
    S: OdeState,
    G: Fn(&S) -> Result<S>,
{
    let k1 = generator(state)?;
    let mut s = state.clone();
    s.axpy(0.5 * dt, &k1);
    let k2 = generator(&s)?;
    let mut s = state.clone();
    s.axpy(0.5 * dt, &k2);
    let k3 = generator(&s)?;
    let mut s = state.clone();
    s.axpy(dt, &k3);
    let k4 = generator(&s)?;

    let mut next = state.clone();
    next.axpy(dt / 6.0, &k1);
    next.axpy(dt / 3.0, &k2);
    next.axpy(dt / 3.0, &k3);
    next.axpy(dt / 6.0, &k4);
    if hermitize {
        next.hermitize();
    }
    if !next.is_finite() {
        return Err(Error::NonFiniteState { time: f64::NAN });
    }
    Ok(next)
}

/// Fixed-step evolution. Records at step 0, every `record_every` steps and
/// at the final step; trace defect `|Tr − 1|` and minimum eigenvalue are
/// always recorded.
pub fn evolve<S, G>(
    generator: G,
    state0: S,
    cfg: &IntegratorConfig,
    observers: &mut [Observer<'_, S>],
) -> Result<TimeSeries<S>>
where
    S: OdeState,
    G: Fn(&S) -> Result<S>,
{
    let steps = cfg.steps()?;
    let mut series = TimeSeries {
        times: Vec::new(),
        trace_defect: Vec::new(),
        min_eigenvalue: Vec::new(),
        observables: observers.iter().map(|o| (o.name.clone(), Vec::new())).collect(),
        snapshots: Vec::new(),
        final_state: state0.clone(),
        hermitized: cfg.hermitize,
    };
    let mut record = |t: f64, s: &S, series: &mut TimeSeries<S>| -> Result<()> {
        series.times.push(t);
        series.trace_defect.push((s.total_trace() - 1.0).abs());
        series.min_eigenvalue.push(s.min_eigenvalue());
        for (o, (_, col)) in observers.iter_mut().zip(series.observables.iter_mut()) {
            let v = (o.probe)(t, s).map_err(|message| Error::ObserverFailure {
                name: o.name.clone(),
                time: t,
                message,
            })?;
            col.push(v);
        }
        if cfg.keep_snapshots {
            series.snapshots.push(s.clone());
        }
        Ok(())
    };

    let mut state = state0;
    record(0.0, &state, &mut series)?;
    for k in 1..=steps {
        let t = k as f64 * cfg.dt;
        state = step_rk4(&generator, &state, cfg.dt, cfg.hermitize).map_err(|e| match e {
            Error::NonFiniteState { .. } => Error::NonFiniteState { time: t },
            other => other,
        })?;
        if k % cfg.record_every == 0 || k == steps {
            record(t, &state, &mut series)?;
        }
    }
    series.final_state = state;
    Ok(series)
}

/// Power-iteration estimate of the spectral radius of a linear generator.
pub fn estimate_generator_norm<S, G>(generator: G, template: &S, iterations: usize, seed: u64) -> Result<f64>
where
    S: OdeState,
    G: Fn(&S) -> Result<S>,
{
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut v = template.random_like(&mut rng);
    let n0 = v.norm_sq().sqrt();
    if n0 == 0.0 {
        return Ok(0.0);
    }
    v.scale_by(1.0 / n0);
    let mut estimate = 0.0_f64;
    for i in 0..iterations {
        let mut w = generator(&v)?;
        let nw = w.norm_sq().sqrt();
        if nw == 0.0 {
            return Ok(estimate);
        }
        // late iterates only: early ones overweight the random start
        if i >= iterations / 2 {
            estimate = estimate.max(nw);
        }
        w.scale_by(1.0 / nw);
        v = w;
    }
    Ok(estimate)
}

/// `0.2·min(ΔX²/(2 D_max), 1/‖G‖)`.
pub fn stability_bound(generator_norm: f64, diffusion: Option<(f64, f64)>) -> f64 {
    let mut bound = if generator_norm > 0.0 { 1.0 / generator_norm } else { f64::INFINITY };
    if let Some((dx, d_max)) = diffusion {
        if d_max > 0.0 {
            bound = bound.min(dx * dx / (2.0 * d_max));
        }
    }
    STABILITY_FACTOR * bound
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, pauli_x};
    use crate::space::ClassicalSpace;

    fn scalar(v: f64) -> ClassicalDensity {
        ClassicalDensity::new(ClassicalSpace::indexed(1).unwrap(), vec![v]).unwrap()
    }

    fn decay(s: &ClassicalDensity) -> Result<ClassicalDensity> {
        let mut d = s.clone();
        d.scale_by(-1.0);
        Ok(d)
    }

    #[test]
    fn zero_generator_is_identity() {
        let rho = DensityMatrix::pure(&[c(1., 0.), c(0., 1.)]).unwrap();
        let zero = |s: &DensityMatrix| -> Result<DensityMatrix> {
            let mut z = s.clone();
            z.scale_by(0.0);
            Ok(z)
        };
        assert_eq!(step_rk4(&zero, &rho, 0.1, false).unwrap(), rho);
    }

    #[test]
    fn fourth_order_convergence() {
        // oracle: exp(-1)
        let exact = (-1.0f64).exp();
        let errors: Vec<f64> = [1e-1, 1e-2, 1e-3]
            .iter()
            .map(|&dt| {
                let ts = evolve(decay, scalar(1.0), &IntegratorConfig::new(dt, 1.0), &mut []).unwrap();
                (ts.final_state.values[0] - exact).abs()
            })
            .collect();
        let ratio = errors[0] / errors[1];
        assert!((5e3..2e4).contains(&ratio), "ratio {ratio}, errors {errors:?}");
        assert!(errors[2] < 1e-13);
    }

    #[test]
    fn linear_in_state() {
        let g = |s: &DensityMatrix| -> Result<DensityMatrix> {
            let h = pauli_x();
            DensityMatrix::new(linalg::commutator(&h, s.matrix()) * (-linalg::I))
        };
        let a = DensityMatrix::pure(&[c(1., 0.), c(0., 0.)]).unwrap();
        let b = DensityMatrix::pure(&[c(1., 0.), c(0., 1.)]).unwrap();
        let mut mix = a.clone();
        mix.scale_by(0.3);
        mix.axpy(-1.7, &b);
        let lhs = step_rk4(&g, &mix, 0.05, false).unwrap();
        let mut rhs = step_rk4(&g, &a, 0.05, false).unwrap();
        rhs.scale_by(0.3);
        rhs.axpy(-1.7, &step_rk4(&g, &b, 0.05, false).unwrap());
        assert!(linalg::max_abs_diff(lhs.matrix(), rhs.matrix()) < 1e-12);
    }

    #[test]
    fn zero_duration_records_initial_state() {
        let ts = evolve(decay, scalar(1.0), &IntegratorConfig::new(0.1, 0.0).keep_snapshots(true), &mut []).unwrap();
        assert_eq!(ts.times, vec![0.0]);
        assert_eq!(ts.snapshots.len(), 1);
        assert_eq!(ts.final_state.values[0], 1.0);
    }

    #[test]
    fn record_cadence_and_observers() {
        let mut obs = [Observer::new("value", |_t: f64, s: &ClassicalDensity| Ok(s.values[0]))];
        let cfg = IntegratorConfig::new(0.1, 1.0).record_every(3);
        let ts = evolve(decay, scalar(1.0), &cfg, &mut obs).unwrap();
        assert_eq!(ts.times.len(), 5); // steps 0,3,6,9,10
        assert!(ts.times.windows(2).all(|w| w[1] > w[0]));
        assert!((ts.times[4] - 1.0).abs() < 1e-12);
        assert_eq!(ts.observable("value").unwrap()[4], ts.final_state.values[0]);
        assert!(ts.to_csv().starts_with("t,trace_defect,min_eigenvalue,value\n"));
    }

    #[test]
    fn observers_do_not_interfere() {
        let cfg = IntegratorConfig::new(0.01, 0.5);
        let bare = evolve(decay, scalar(1.0), &cfg, &mut []).unwrap();
        let mut obs = [Observer::new("x", |_t: f64, s: &ClassicalDensity| Ok(s.values[0] * 2.0))];
        let watched = evolve(decay, scalar(1.0), &cfg, &mut obs).unwrap();
        assert_eq!(bare.final_state, watched.final_state);
    }

    #[test]
    fn observer_failure_carries_time() {
        let mut obs = [Observer::new("boom", |t: f64, _s: &ClassicalDensity| {
            if t > 0.25 {
                Err("too late".to_string())
            } else {
                Ok(0.0)
            }
        })];
        let err = evolve(decay, scalar(1.0), &IntegratorConfig::new(0.1, 1.0), &mut obs).unwrap_err();
        match err {
            Error::ObserverFailure { name, time, .. } => {
                assert_eq!(name, "boom");
                assert!((time - 0.3).abs() < 1e-12);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn non_finite_state_detected() {
        let blow = |s: &ClassicalDensity| -> Result<ClassicalDensity> {
            let mut d = s.clone();
            d.scale_by(f64::MAX);
            Ok(d)
        };
        let err = evolve(blow, scalar(1.0), &IntegratorConfig::new(1.0, 3.0), &mut []).unwrap_err();
        assert!(matches!(err, Error::NonFiniteState { time } if time == 1.0));
    }

    #[test]
    fn bad_configs() {
        assert!(IntegratorConfig::new(0.0, 1.0).steps().is_err());
        assert!(IntegratorConfig::new(0.3, 1.0).steps().is_err());
        assert!(IntegratorConfig::new(0.1, 1.0).record_every(0).steps().is_err());
        assert_eq!(IntegratorConfig::new(1e-3, 1.0).steps().unwrap(), 1000);
    }

    #[test]
    fn power_iteration_finds_decay_rate() {
        let est = estimate_generator_norm(decay, &scalar(1.0), 10, 1).unwrap();
        assert!((est - 1.0).abs() < 1e-12);
        assert!((stability_bound(10.0, Some((0.1, 0.5))) - 0.002).abs() < 1e-15);
        assert!((stability_bound(10.0, None) - 0.02).abs() < 1e-15);
    }
}
