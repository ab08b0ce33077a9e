//! Small dense-matrix helpers shared by the solvers.

use nalgebra::DMatrix;

pub type Mat = DMatrix<f64>;

pub fn symmetrize(m: &Mat) -> Mat {
    (m + m.transpose()) * 0.5
}

/// Frobenius norm, used for every `|·|` of a matrix-valued coefficient.
pub fn norm(m: &Mat) -> f64 {
    m.norm()
}

pub fn sym_eigenvalues(m: &Mat) -> Vec<f64> {
    let s = symmetrize(m);
    let mut ev: Vec<f64> = s.symmetric_eigen().eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

pub fn min_eigenvalue(m: &Mat) -> f64 {
    sym_eigenvalues(m)[0]
}

pub fn max_eigenvalue(m: &Mat) -> f64 {
    *sym_eigenvalues(m).last().unwrap()
}

/// Symmetric square-root factor L with L Lᵀ = m, clipping negative eigenvalues to zero.
pub fn psd_factor(m: &Mat) -> Mat {
    let eig = symmetrize(m).symmetric_eigen();
    let mut v = eig.eigenvectors.clone();
    for (j, lambda) in eig.eigenvalues.iter().enumerate() {
        let s = lambda.max(0.0).sqrt();
        v.column_mut(j).scale_mut(s);
    }
    v
}

pub fn max_abs(m: &Mat) -> f64 {
    m.iter().fold(0.0_f64, |a, x| a.max(x.abs()))
}

pub fn is_finite(m: &Mat) -> bool {
    m.iter().all(|x| x.is_finite())
}

pub fn scalar(x: f64) -> Mat {
    Mat::from_element(1, 1, x)
}

pub fn invert(m: &Mat) -> Option<Mat> {
    m.clone().try_inverse()
}

/// Power iteration for the largest eigenvalue of a self-adjoint positive operator.
pub fn power_iteration<F>(dim: usize, mut apply: F, iters: usize, tol: f64) -> f64
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    if dim == 0 {
        return 0.0;
    }
    let mut v: Vec<f64> = (0..dim).map(|i| 1.0 + 0.1 * ((i * 7919) % 13) as f64).collect();
    normalize(&mut v);
    let mut lambda = 0.0;
    for _ in 0..iters {
        let w = apply(&v);
        let next = dot(&v, &w);
        let mut w = w;
        if normalize(&mut w) == 0.0 {
            return 0.0;
        }
        v = w;
        if (next - lambda).abs() <= tol * next.abs().max(1e-300) {
            return next;
        }
        lambda = next;
    }
    lambda
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = dot(v, v).sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}
