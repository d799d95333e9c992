//! Small dense solves for local RBF systems.

use nalgebra::DMatrix;

/// Relative pivot size below which a factorization is treated as singular.
const PIVOT_RATIO: f64 = 1e-15;

fn try_solve(a: &DMatrix<f64>, rhs: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let lu = a.clone().lu();
    let u = lu.u();
    let diag: Vec<f64> = u.diagonal().iter().map(|v| v.abs()).collect();
    let max = diag.iter().cloned().fold(0.0, f64::max);
    let min = diag.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(max > 0.0) || min < PIVOT_RATIO * max {
        return None;
    }
    let x = lu.solve(rhs)?;
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Solves `a x = rhs` for an RBF saddle-point system whose leading
/// `kernel_size` rows and columns hold the kernel matrix.
///
/// On a (near) singular factorization the kernel diagonal is shifted by
/// `1e-12 * trace / kernel_size` and the solve is retried once.
pub fn solve_regularized(
    a: &DMatrix<f64>,
    kernel_size: usize,
    rhs: &DMatrix<f64>,
) -> Option<DMatrix<f64>> {
    if let Some(x) = try_solve(a, rhs) {
        return Some(x);
    }
    let trace: f64 = (0..kernel_size).map(|i| a[(i, i)]).sum();
    let shift = 1e-12 * trace.abs().max(f64::MIN_POSITIVE) / kernel_size.max(1) as f64;
    let mut jittered = a.clone();
    for i in 0..kernel_size {
        jittered[(i, i)] += shift;
    }
    try_solve(&jittered, rhs)
}
