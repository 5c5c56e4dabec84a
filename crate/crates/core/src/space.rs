//! Classical index sets: discrete labels or uniform 1-D grids.
//!
//! A grid point carries quadrature weight `dx`, a discrete label weight 1, so
//! that every normalization in the crate is the weighted sum `Σ_x w_x f(x)`.
//! Finite-difference stencils live here as well, written in flux form so that
//! both boundary rules conserve the weighted sum exactly.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::CMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    #[default]
    Periodic,
    /// Zero-flux walls at both ends.
    Truncated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", try_from = "RawSpace")]
pub enum ClassicalSpace {
    Discrete {
        labels: Vec<String>,
    },
    Grid {
        x0: f64,
        dx: f64,
        n: usize,
        #[serde(default)]
        boundary: Boundary,
    },
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum RawSpace {
    Discrete {
        labels: Vec<String>,
    },
    Grid {
        x0: f64,
        dx: f64,
        n: usize,
        #[serde(default)]
        boundary: Boundary,
    },
}

impl TryFrom<RawSpace> for ClassicalSpace {
    type Error = Error;

    fn try_from(raw: RawSpace) -> Result<Self> {
        match raw {
            RawSpace::Discrete { labels } => ClassicalSpace::discrete(labels),
            RawSpace::Grid { x0, dx, n, boundary } => ClassicalSpace::grid(x0, dx, n, boundary),
        }
    }
}

impl ClassicalSpace {
    pub fn discrete<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.is_empty() {
            return Err(Error::InvalidParameter("discrete space needs at least one label".into()));
        }
        Ok(ClassicalSpace::Discrete { labels })
    }

    /// Labels "0", "1", …, "n-1".
    pub fn indexed(n: usize) -> Result<Self> {
        Self::discrete((0..n).map(|i| i.to_string()))
    }

    pub fn grid(x0: f64, dx: f64, n: usize, boundary: Boundary) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("grid needs n >= 1".into()));
        }
        if !(dx > 0.0 && dx.is_finite() && x0.is_finite()) {
            return Err(Error::InvalidParameter(format!("grid needs finite x0 and dx > 0, got x0={x0}, dx={dx}")));
        }
        Ok(ClassicalSpace::Grid { x0, dx, n, boundary })
    }

    /// Uniform grid with `n` points from `lo` to `hi` inclusive.
    pub fn grid_span(lo: f64, hi: f64, n: usize, boundary: Boundary) -> Result<Self> {
        if n < 2 || hi <= lo {
            return Err(Error::InvalidParameter(format!("bad grid span [{lo}, {hi}] with n={n}")));
        }
        Self::grid(lo, (hi - lo) / (n - 1) as f64, n, boundary)
    }

    pub fn len(&self) -> usize {
        match self {
            ClassicalSpace::Discrete { labels } => labels.len(),
            ClassicalSpace::Grid { n, .. } => *n,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_grid(&self) -> bool {
        matches!(self, ClassicalSpace::Grid { .. })
    }

    /// Quadrature weight, uniform over the space.
    pub fn weight(&self) -> f64 {
        match self {
            ClassicalSpace::Discrete { .. } => 1.0,
            ClassicalSpace::Grid { dx, .. } => *dx,
        }
    }

    pub fn dx(&self) -> Result<f64> {
        match self {
            ClassicalSpace::Grid { dx, .. } => Ok(*dx),
            _ => Err(Error::DiscreteSpace),
        }
    }

    pub fn boundary(&self) -> Option<Boundary> {
        match self {
            ClassicalSpace::Grid { boundary, .. } => Some(*boundary),
            _ => None,
        }
    }

    /// Numeric coordinate of point `i`: the grid abscissa, or the label parsed
    /// as a number for discrete spaces.
    pub fn coordinate(&self, i: usize) -> Option<f64> {
        match self {
            ClassicalSpace::Grid { x0, dx, .. } => Some(x0 + i as f64 * dx),
            ClassicalSpace::Discrete { labels } => labels.get(i)?.parse().ok(),
        }
    }

    pub fn coordinates(&self) -> Result<Vec<f64>> {
        (0..self.len())
            .map(|i| {
                self.coordinate(i)
                    .ok_or_else(|| Error::InvalidParameter(format!("point {i} has no numeric coordinate")))
            })
            .collect()
    }

    /// Grid extent `[x_0, x_{n-1}]`.
    pub fn extent(&self) -> Result<(f64, f64)> {
        match self {
            ClassicalSpace::Grid { x0, dx, n, .. } => Ok((*x0, x0 + (*n as f64 - 1.0) * dx)),
            _ => Err(Error::DiscreteSpace),
        }
    }

    pub fn index_of_label(&self, label: &str) -> Option<usize> {
        match self {
            ClassicalSpace::Discrete { labels } => labels.iter().position(|l| l == label),
            ClassicalSpace::Grid { .. } => None,
        }
    }

    /// Nearest grid index for coordinate `x`; periodic grids wrap, truncated
    /// grids clamp.
    pub fn nearest_index(&self, x: f64) -> Result<usize> {
        match self {
            ClassicalSpace::Grid { x0, dx, n, boundary } => {
                let k = ((x - x0) / dx).round();
                let n = *n as i64;
                let k = k as i64;
                Ok(match boundary {
                    Boundary::Periodic => k.rem_euclid(n) as usize,
                    Boundary::Truncated => k.clamp(0, n - 1) as usize,
                })
            }
            _ => Err(Error::DiscreteSpace),
        }
    }

    /// Signed separation `x_i - x_j`, minimum image on periodic grids.
    pub fn separation(&self, i: usize, j: usize) -> Result<f64> {
        match self {
            ClassicalSpace::Grid { dx, n, boundary, .. } => {
                let mut k = i as i64 - j as i64;
                if *boundary == Boundary::Periodic {
                    let n = *n as i64;
                    k = k.rem_euclid(n);
                    if 2 * k > n {
                        k -= n;
                    }
                }
                Ok(k as f64 * dx)
            }
            _ => Err(Error::DiscreteSpace),
        }
    }

    pub fn require_grid(&self) -> Result<()> {
        if self.is_grid() {
            Ok(())
        } else {
            Err(Error::DiscreteSpace)
        }
    }

    pub fn check_same(&self, other: &ClassicalSpace) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::SpaceMismatch(format!("{self:?} vs {other:?}")))
        }
    }
}

/// Values that stencils can combine linearly.
pub trait StencilValue: Clone {
    fn zero_like(&self) -> Self;
    /// a·x + b·y
    fn lin(a: f64, x: &Self, b: f64, y: &Self) -> Self;
}

impl StencilValue for f64 {
    fn zero_like(&self) -> Self {
        0.0
    }
    fn lin(a: f64, x: &Self, b: f64, y: &Self) -> Self {
        a * x + b * y
    }
}

impl StencilValue for CMatrix {
    fn zero_like(&self) -> Self {
        CMatrix::zeros(self.nrows(), self.ncols())
    }
    fn lin(a: f64, x: &Self, b: f64, y: &Self) -> Self {
        x.map(|z| z * a) + y.map(|z| z * b)
    }
}

fn neighbours(n: usize, i: usize, boundary: Boundary) -> (Option<usize>, Option<usize>) {
    match boundary {
        Boundary::Periodic => (Some((i + n - 1) % n), Some((i + 1) % n)),
        Boundary::Truncated => {
            let left = if i > 0 { Some(i - 1) } else { None };
            let right = if i + 1 < n { Some(i + 1) } else { None };
            (left, right)
        }
    }
}

/// Central-difference derivative `(f_{i+1} - f_{i-1}) / 2dx` in flux form.
///
/// Face flux is the two-point average; truncated walls carry zero flux, so
/// `Σ_i dx·K f_i = 0` for both boundary rules.
pub fn central_difference<T: StencilValue>(space: &ClassicalSpace, f: &[T]) -> Result<Vec<T>> {
    let (dx, boundary) = match space {
        ClassicalSpace::Grid { dx, boundary, .. } => (*dx, *boundary),
        _ => return Err(Error::DiscreteSpace),
    };
    let n = f.len();
    if n != space.len() {
        return Err(Error::DimensionMismatch { expected: space.len(), found: n });
    }
    let inv = 1.0 / (2.0 * dx);
    Ok((0..n)
        .map(|i| {
            let (l, r) = neighbours(n, i, boundary);
            match (l, r) {
                (Some(l), Some(r)) => T::lin(inv, &f[r], -inv, &f[l]),
                // (F_{1/2} - 0)/dx with F_{1/2} = (f_0 + f_1)/2
                (None, Some(r)) => T::lin(inv, &f[r], inv, &f[i]),
                (Some(l), None) => T::lin(-inv, &f[i], -inv, &f[l]),
                (None, None) => f[i].zero_like(),
            }
        })
        .collect())
}

/// Three-point Laplacian `(f_{i+1} - 2f_i + f_{i-1}) / dx²` (zero-flux walls
/// on truncated grids).
pub fn laplacian<T: StencilValue>(space: &ClassicalSpace, f: &[T]) -> Result<Vec<T>> {
    let (dx, boundary) = match space {
        ClassicalSpace::Grid { dx, boundary, .. } => (*dx, *boundary),
        _ => return Err(Error::DiscreteSpace),
    };
    let n = f.len();
    if n != space.len() {
        return Err(Error::DimensionMismatch { expected: space.len(), found: n });
    }
    let inv = 1.0 / (dx * dx);
    Ok((0..n)
        .map(|i| {
            let (l, r) = neighbours(n, i, boundary);
            let mut acc = f[i].zero_like();
            for j in [l, r].into_iter().flatten() {
                acc = T::lin(1.0, &acc, inv, &T::lin(1.0, &f[j], -1.0, &f[i]));
            }
            acc
        })
        .collect())
}
