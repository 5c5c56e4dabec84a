//! Random states and models for property tests and the `embed-check` command.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::hybrid_me::HybridLindbladModel;
use crate::hybrid_state::{DensityMatrix, HybridDensity};
use crate::linalg::{self, CMatrix, C64};
use crate::space::ClassicalSpace;

/// Matrix with i.i.d. complex Gaussian entries, real and imaginary parts of
/// standard deviation `sd`.
pub fn ginibre<R: Rng + ?Sized>(d: usize, sd: f64, rng: &mut R) -> CMatrix {
    CMatrix::from_fn(d, d, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        C64::new(sd * re, sd * im)
    })
}

pub fn hermitian<R: Rng + ?Sized>(d: usize, sd: f64, rng: &mut R) -> CMatrix {
    linalg::hermitian_part(&ginibre(d, sd, rng))
}

/// `G G† / Tr(G G†)`: full rank with probability one.
pub fn density_matrix<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DensityMatrix {
    let g = ginibre(d, 1.0, rng);
    let m = &g * g.adjoint();
    let t = m.trace().re;
    DensityMatrix::new(linalg::hermitian_part(&m.map(|z| z / t))).expect("square by construction")
}

/// Positive blocks with random classical weights, normalized with the
/// space's quadrature weight.
pub fn hybrid_density<R: Rng + ?Sized>(space: &ClassicalSpace, d: usize, rng: &mut R) -> HybridDensity {
    let raw: Vec<CMatrix> = (0..space.len())
        .map(|_| {
            let g = ginibre(d, 1.0, rng);
            let p: f64 = rng.random_range(0.05..1.0);
            (&g * g.adjoint()).map(|z| z * p)
        })
        .collect();
    let total: f64 = raw.iter().map(|b| b.trace().re).sum::<f64>() * space.weight();
    let blocks = raw
        .into_iter()
        .map(|b| linalg::hermitian_part(&b.map(|z| z / total)))
        .collect();
    HybridDensity::new(space.clone(), d, blocks).expect("shapes by construction")
}

/// Dense random hybrid model: random Hermitian `Ĥ(x)` (entry sd `h_sd`) and
/// every amplitude `L_α(x,y)` with complex Gaussian entries of sd `amp_sd`.
pub fn hybrid_model<R: Rng + ?Sized>(
    space: &ClassicalSpace,
    d: usize,
    channels: usize,
    h_sd: f64,
    amp_sd: f64,
    rng: &mut R,
) -> HybridLindbladModel {
    let n = space.len();
    let hamiltonians = (0..n).map(|_| hermitian(d, h_sd, rng)).collect();
    let mut amplitudes = Vec::with_capacity(channels * n * n);
    for alpha in 0..channels {
        for x in 0..n {
            for y in 0..n {
                amplitudes.push(((alpha, x, y), ginibre(d, amp_sd, rng)));
            }
        }
    }
    HybridLindbladModel::new(space.clone(), d, hamiltonians, amplitudes).expect("shapes by construction")
}
