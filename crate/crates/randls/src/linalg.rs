//! Small dense vector/matrix helpers used throughout the crate.

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

/// y += alpha * x
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn scale(alpha: f64, x: &mut [f64]) {
    for xi in x {
        *xi *= alpha;
    }
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Dense row-major matrix-vector product, y = A v, A of shape m x d.
pub fn dense_matvec(a: &[f64], m: usize, d: usize, v: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), m * d);
    debug_assert_eq!(v.len(), d);
    let mut y = vec![0.0; m];
    for i in 0..m {
        y[i] = dot(&a[i * d..(i + 1) * d], v);
    }
    y
}

/// Dense row-major transposed product, y = A^T w.
pub fn dense_matvec_t(a: &[f64], m: usize, d: usize, w: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.len(), m * d);
    debug_assert_eq!(w.len(), m);
    let mut y = vec![0.0; d];
    for i in 0..m {
        let row = &a[i * d..(i + 1) * d];
        let wi = w[i];
        for j in 0..d {
            y[j] += row[j] * wi;
        }
    }
    y
}
