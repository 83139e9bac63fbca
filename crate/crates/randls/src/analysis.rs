//! Spectral machinery behind the convergence rates.
//!
//! Desk-scale dense SVD (one-sided Jacobi), Monte-Carlo estimation of the
//! matrix M = E(xx^T / |Ax|^2) that governs random descent, closed-form
//! rate constants, Gamma-function eigenvalue bounds for Gaussian sampling,
//! and the singular-vector error-coefficient bookkeeping for the ill-posed
//! diagnostics.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{dot, norm, norm_sq, sub};
use crate::operator::OperatorHandle;
use crate::rng::RngState;
use crate::sampling::{sample, SamplerSpec};

/// Relative squared-norm threshold below which a draw counts as a kernel
/// direction and is skipped by the M estimator.
const NULL_DRAW_EPS: f64 = 1e-28;

/// SVD of a dense operator: A = W diag(sigma) U^T with orthonormal columns.
#[derive(Debug, Clone)]
pub struct SpectralData {
    /// sigma_1 >= ... >= sigma_r > 0.
    pub singular_values: Vec<f64>,
    /// Right singular vectors u_i, each of length d.
    pub right_vectors: Vec<Vec<f64>>,
    /// Left singular vectors w_i, each of length m.
    pub left_vectors: Vec<Vec<f64>>,
    pub rank: usize,
    /// Input dimension d of the decomposed operator.
    pub dim: usize,
}

impl SpectralData {
    pub fn sigma_max(&self) -> f64 {
        self.singular_values.first().copied().unwrap_or(0.0)
    }

    /// Smallest positive singular value.
    pub fn sigma_min(&self) -> f64 {
        self.singular_values.last().copied().unwrap_or(0.0)
    }

    pub fn lambda_max(&self) -> f64 {
        let s = self.sigma_max();
        s * s
    }

    /// Smallest eigenvalue of A^T A, zero when rank < d.
    pub fn lambda_min_full(&self) -> f64 {
        if self.rank < self.dim {
            0.0
        } else {
            let s = self.sigma_min();
            s * s
        }
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.singular_values.iter().map(|s| s * s).sum()
    }

    /// Eigenvalues of A^T A including the zero block for rank-deficient A.
    pub fn gram_eigenvalues(&self) -> Vec<f64> {
        let mut ev: Vec<f64> = self.singular_values.iter().map(|s| s * s).collect();
        ev.resize(self.dim, 0.0);
        ev
    }
}

/// One-sided Jacobi SVD of a dense row-major m x d matrix. Deterministic
/// cyclic pivot ordering, off-diagonal tolerance 1e-14 relative, at most 60
/// sweeps. Singular values below 1e-12 * sigma_1 are truncated from the
/// rank.
pub fn svd_small_dense(a: &[f64], m: usize, d: usize) -> Result<SpectralData> {
    if m.max(d) > 2000 {
        return Err(Error::TooLarge(m.max(d)));
    }
    assert_eq!(a.len(), m * d);
    // work on columns of A
    let mut cols: Vec<Vec<f64>> = (0..d)
        .map(|j| (0..m).map(|i| a[i * d + j]).collect())
        .collect();
    let mut v: Vec<Vec<f64>> = (0..d)
        .map(|j| {
            let mut e = vec![0.0; d];
            e[j] = 1.0;
            e
        })
        .collect();

    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..d {
            for q in p + 1..d {
                let app = norm_sq(&cols[p]);
                let aqq = norm_sq(&cols[q]);
                let apq = dot(&cols[p], &cols[q]);
                if apq.abs() <= 1e-14 * (app * aqq).sqrt() || apq == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (aqq - app) / (2.0 * apq);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let cp = cols[p][i];
                    let cq = cols[q][i];
                    cols[p][i] = c * cp - s * cq;
                    cols[q][i] = s * cp + c * cq;
                }
                for i in 0..d {
                    let vp = v[p][i];
                    let vq = v[q][i];
                    v[p][i] = c * vp - s * vq;
                    v[q][i] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<usize> = (0..d).collect();
    let norms: Vec<f64> = cols.iter().map(|c| norm(c)).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]));
    let sigma_max = norms[order[0]];
    let mut singular_values = Vec::new();
    let mut right_vectors = Vec::new();
    let mut left_vectors = Vec::new();
    for &j in &order {
        let s = norms[j];
        if s <= 1e-12 * sigma_max || s == 0.0 {
            break;
        }
        singular_values.push(s);
        right_vectors.push(v[j].clone());
        left_vectors.push(cols[j].iter().map(|x| x / s).collect());
    }
    let rank = singular_values.len();
    Ok(SpectralData { singular_values, right_vectors, left_vectors, rank, dim: d })
}

/// Symmetric eigendecomposition of a row-major n x n matrix by the cyclic
/// Jacobi method. Returns eigenvalues in descending order with matching
/// eigenvector columns.
pub fn sym_eigen(s: &[f64], n: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    assert_eq!(s.len(), n * n);
    let mut a = s.to_vec();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|j| {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            e
        })
        .collect();
    let scale: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for p in 0..n {
            for q in p + 1..n {
                off += a[p * n + q] * a[p * n + q];
            }
        }
        if off.sqrt() <= 1e-14 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let zeta = (aqq - app) / (2.0 * apq);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let sn = c * t;
                for i in 0..n {
                    let aip = a[i * n + p];
                    let aiq = a[i * n + q];
                    a[i * n + p] = c * aip - sn * aiq;
                    a[i * n + q] = sn * aip + c * aiq;
                }
                for i in 0..n {
                    let api = a[p * n + i];
                    let aqi = a[q * n + i];
                    a[p * n + i] = c * api - sn * aqi;
                    a[q * n + i] = sn * api + c * aqi;
                }
                for i in 0..n {
                    let vip = v[p][i];
                    let viq = v[q][i];
                    v[p][i] = c * vip - sn * viq;
                    v[q][i] = sn * vip + c * viq;
                }
            }
        }
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]));
    let eigvals: Vec<f64> = order.iter().map(|&i| a[i * n + i]).collect();
    let eigvecs: Vec<Vec<f64>> = order.iter().map(|&i| v[i].clone()).collect();
    (eigvals, eigvecs)
}

/// Monte-Carlo estimate of M = E(xx^T / |Ax|^2).
#[derive(Debug, Clone)]
pub struct MEstimate {
    /// Row-major d x d symmetric matrix.
    pub matrix: Vec<f64>,
    pub dim: usize,
    pub n_samples: usize,
    /// Draws with |Ax| = 0 (skipped).
    pub n_null_directions: usize,
    /// Heavy-tailed running mean of 1/|Ax|^2: the observable symptom of a
    /// non-existent expectation (continuous sampler with nontrivial kernel).
    pub diverged: bool,
}

impl MEstimate {
    pub fn eigenvalues(&self) -> Vec<f64> {
        sym_eigen(&self.matrix, self.dim).0
    }

    /// Projection U^T M U onto a singular basis, row-major r x r.
    pub fn project(&self, spectral: &SpectralData) -> Vec<f64> {
        let r = spectral.rank;
        let d = self.dim;
        let mut out = vec![0.0; r * r];
        for i in 0..r {
            let ui = &spectral.right_vectors[i];
            // M u_i
            let mut mu = vec![0.0; d];
            for row in 0..d {
                mu[row] = dot(&self.matrix[row * d..(row + 1) * d], ui);
            }
            for j in 0..r {
                out[j * r + i] = dot(&spectral.right_vectors[j], &mu);
            }
        }
        out
    }

    /// Diagonal entries u_i^T M u_i in the singular basis.
    pub fn projected_diagonal(&self, spectral: &SpectralData) -> Vec<f64> {
        let p = self.project(spectral);
        (0..spectral.rank).map(|i| p[i * spectral.rank + i]).collect()
    }
}

pub fn estimate_m(
    op: &OperatorHandle,
    spec: &SamplerSpec,
    rng: &mut RngState,
    n: usize,
) -> Result<MEstimate> {
    assert!(n >= 1);
    let d = op.input_dim();
    let mut sigma_rng = rng.substream(0x4d455354);
    let sigma1 = crate::operator::estimate_operator_norm(op, &mut sigma_rng, 30.min(n).max(5));
    let null_threshold = |x_sq: f64| NULL_DRAW_EPS * x_sq * sigma1 * sigma1;

    let mut matrix = vec![0.0; d * d];
    let mut n_null = 0usize;
    let n_blocks = 10usize;
    let block_size = n.div_ceil(n_blocks);
    let mut block_means = Vec::with_capacity(n_blocks);
    let mut block_sum = 0.0;
    let mut block_count = 0usize;

    for i in 0..n {
        let x = sample(spec, rng);
        let ax = op.apply(&x)?;
        let ax_sq = norm_sq(&ax);
        if ax_sq <= null_threshold(norm_sq(&x)) || ax_sq == 0.0 {
            n_null += 1;
        } else {
            let w = 1.0 / ax_sq;
            for r in 0..d {
                let xr = x[r];
                if xr == 0.0 {
                    continue;
                }
                for c in 0..d {
                    matrix[r * d + c] += w * xr * x[c];
                }
            }
            block_sum += w;
            block_count += 1;
        }
        if (i + 1) % block_size == 0 || i + 1 == n {
            if block_count > 0 {
                block_means.push(block_sum / block_count as f64);
            }
            block_sum = 0.0;
            block_count = 0;
        }
    }

    let n_valid = n - n_null;
    if n_valid == 0 {
        return Err(Error::AllDirectionsNull);
    }
    let inv = 1.0 / n_valid as f64;
    for entry in &mut matrix {
        *entry *= inv;
    }

    let diverged = if block_means.len() >= 3 {
        let mut sorted = block_means.clone();
        sorted.sort_by(|a, b| a.total_cmp(b));
        let median = sorted[sorted.len() / 2];
        let max = sorted[sorted.len() - 1];
        median > 0.0 && max / median > 100.0
    } else {
        false
    };

    Ok(MEstimate { matrix, dim: d, n_samples: n, n_null_directions: n_null, diverged })
}

/// Exact M for uniform coordinate sampling: (1/d) diag(|a_j|^{-2}).
pub fn coordinate_m_exact(col_norms: &[f64]) -> Result<Vec<f64>> {
    let d = col_norms.len();
    if let Some(j) = col_norms.iter().position(|&n| n == 0.0) {
        return Err(Error::ZeroColumn(j));
    }
    let mut m = vec![0.0; d * d];
    for j in 0..d {
        m[j * d + j] = 1.0 / (d as f64 * col_norms[j] * col_norms[j]);
    }
    Ok(m)
}

/// Optimal fixed SGDAS stepsize and its contraction factor.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct OptimalStepsize {
    pub tau_opt: f64,
    pub lambda_opt: f64,
}

/// The contraction polynomial Theta_tau(mu) = 1 - tau mu (2 - tau c mu).
pub fn theta(tau: f64, c: f64, mu: f64) -> f64 {
    1.0 - tau * mu * (2.0 - tau * c * mu)
}

pub fn sgdas_optimal_stepsize(lambda_max: f64, lambda_min: f64, c: f64) -> Result<OptimalStepsize> {
    if lambda_min <= 0.0 || lambda_max < lambda_min {
        return Err(Error::DegenerateSpectrum);
    }
    assert!(c > 0.0);
    let tau_opt = (2.0 / c) / (lambda_max + lambda_min);
    let kappa = lambda_max / lambda_min;
    let lambda_opt = 1.0 - (4.0 / c) * kappa / ((kappa + 1.0) * (kappa + 1.0));
    Ok(OptimalStepsize { tau_opt, lambda_opt })
}

/// Spectral radius of I - tau A^T A (2I - tau c A^T A) over the given
/// eigenvalues of A^T A.
pub fn contraction_spectral_radius(gram_eigenvalues: &[f64], tau: f64, c: f64) -> f64 {
    gram_eigenvalues
        .iter()
        .map(|&mu| theta(tau, c, mu).abs())
        .fold(0.0, f64::max)
}

/// Closed-form rate constants for a given operator spectrum, sampler
/// constant and stepsize. Fields that do not apply to the input (a
/// rank-deficient spectrum, a missing M estimate) are absent rather than
/// defaulted.
#[derive(Debug, Clone, Serialize)]
pub struct RateReport {
    pub c: f64,
    pub tau: f64,
    pub lambda_max: f64,
    /// Smallest eigenvalue of A^T A; zero when rank deficient.
    pub lambda_min: f64,
    pub sigma_min: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub kappa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_opt: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_opt: Option<f64>,
    /// Spectral radius of the SGDAS iterate contraction at the given tau.
    pub lambda: f64,
    /// Residual contraction 1 - tau sigma_min^2 (2 - tau c |A|^2).
    pub beta: f64,
    /// RD contraction 1 - lambda_min(M) sigma_min^2, when an M estimate was
    /// supplied.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rd_bound: Option<f64>,
    /// General isotropic bracket for the eigenvalues of M.
    pub m_bracket_lower: f64,
    pub m_bracket_upper: f64,
    /// Gaussian closed-form eigenvalue bounds for M, when computed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normal_lower: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub normal_upper: Option<f64>,
    /// Steady-state offset bound for inconsistent systems, when computed.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inconsistent_offset: Option<f64>,
}

pub fn rate_bounds(spectral: &SpectralData, m_min_eig: Option<f64>, c: f64, tau: f64) -> RateReport {
    assert!(tau > 0.0);
    let lambda_max = spectral.lambda_max();
    let lambda_min = spectral.lambda_min_full();
    let sigma_min = spectral.sigma_min();
    let gram = spectral.gram_eigenvalues();
    let beta = 1.0 - tau * sigma_min * sigma_min * (2.0 - tau * c * lambda_max);
    let opt = sgdas_optimal_stepsize(lambda_max, lambda_min, c).ok();
    let d = spectral.dim as f64;
    RateReport {
        c,
        tau,
        lambda_max,
        lambda_min,
        sigma_min,
        kappa: (lambda_min > 0.0).then(|| lambda_max / lambda_min),
        tau_opt: opt.map(|o| o.tau_opt),
        lambda_opt: opt.map(|o| o.lambda_opt),
        lambda: contraction_spectral_radius(&gram, tau, c),
        beta,
        rd_bound: m_min_eig.map(|mu| 1.0 - mu * sigma_min * sigma_min),
        m_bracket_lower: 1.0 / (d * lambda_max),
        m_bracket_upper: 1.0 / (d * sigma_min * sigma_min),
        normal_lower: None,
        normal_upper: None,
        inconsistent_offset: None,
    }
}

/// Gamma function for positive arguments, fixed-coefficient Lanczos
/// approximation (g = 7, 9 coefficients). Accurate to better than 1e-12
/// relative and platform-stable.
pub fn gamma_function(z: f64) -> Result<f64> {
    if z <= 0.0 {
        return Err(Error::NonPositiveArgument(z));
    }
    const G: f64 = 7.0;
    const COEFFS: [f64; 9] = [
        0.999_999_999_999_809_93,
        676.520_368_121_885_1,
        -1259.139_216_722_402_8,
        771.323_428_777_653_13,
        -176.615_029_162_140_59,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_571_6e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if z < 0.5 {
        // reflection keeps the Lanczos series in its accurate range
        let pi = std::f64::consts::PI;
        return Ok(pi / ((pi * z).sin() * gamma_function(1.0 - z)?));
    }
    let z = z - 1.0;
    let mut x = COEFFS[0];
    for (i, &coef) in COEFFS.iter().enumerate().skip(1) {
        x += coef / (z + i as f64);
    }
    let t = z + G + 0.5;
    Ok((2.0 * std::f64::consts::PI).sqrt() * t.powf(z + 0.5) * (-t).exp() * x)
}

/// Eigenvalue bounds for M under Gaussian (and sphere) sampling.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct NormalMEigenBounds {
    pub lower: f64,
    pub upper: f64,
    pub approx_lower: f64,
    pub approx_upper: f64,
}

/// Closed-form and large-d approximate bounds on the eigenvalues of M for
/// standard normal directions, from the squared singular values
/// lambda_i = sigma_i^2.
pub fn normal_m_eigen_bounds(singular_values: &[f64], d: usize) -> Result<NormalMEigenBounds> {
    if d <= 2 {
        return Err(Error::DimensionTooSmall(d));
    }
    assert_eq!(singular_values.len(), d);
    assert!(singular_values.iter().all(|&s| s > 0.0));
    let lambdas: Vec<f64> = singular_values.iter().map(|s| s * s).collect();
    let sum: f64 = lambdas.iter().sum();
    let df = d as f64;
    // geometric mean through logs to avoid under/overflow
    let log_geo_mean = lambdas.iter().map(|l| l.ln()).sum::<f64>() / df;
    let geo_mean = log_geo_mean.exp();

    let lower = gamma_function(df / 2.0)? / (2.0 * sum * gamma_function((df + 1.0) / 2.0)?);
    let upper = {
        let g32 = gamma_function(1.5 - 1.0 / df)?;
        let g12 = gamma_function(0.5 - 1.0 / df)?;
        // Gamma(1/2 - 1/d)^(d-1) / pi^(d/2) in log space
        let log_num = g32.ln() + (df - 1.0) * g12.ln();
        let log_den = (df / 2.0) * std::f64::consts::PI.ln();
        (log_num - log_den).exp() / (df * geo_mean)
    };
    let approx_lower = 1.0 / (2.0 * (2.0 * df).sqrt() * sum);
    let approx_upper = 1.0 / (2.0 * df * geo_mean);
    Ok(NormalMEigenBounds { lower, upper, approx_lower, approx_upper })
}

/// Error coefficients along the right singular vectors, <v - v_hat, u_i>.
pub fn singular_coefficients(v: &[f64], v_hat: &[f64], spectral: &SpectralData) -> Vec<f64> {
    let diff = sub(v, v_hat);
    spectral.right_vectors.iter().map(|u| dot(&diff, u)).collect()
}

/// Predicted error coefficient after k iterations:
/// (1 - rho)^k * initial + (1 - (1 - rho)^k)/sigma_i * noise, where rho is
/// omega sigma_i^2 for Landweber or mu_i sigma_i^2 for random descent.
pub fn predict_coefficient(
    k: usize,
    initial_coeff: f64,
    noise_coeff: f64,
    sigma_i: f64,
    rate_factor: f64,
) -> f64 {
    debug_assert!((0.0..2.0).contains(&rate_factor));
    let geo = (1.0 - rate_factor).powi(k as i32);
    geo * initial_coeff + (1.0 - geo) / sigma_i * noise_coeff
}

/// Steady-state offset bound for SGDAS on an inconsistent system:
/// tau^2 * 2((1-lambda) c + 2 |I - tau c A^T A|^2) / (1-lambda)^2 * |A^T r'|^2.
pub fn inconsistent_offset_bound(
    tau: f64,
    c: f64,
    lambda: f64,
    spectral: &SpectralData,
    range_noise_norm: f64,
) -> Result<f64> {
    if !(0.0..1.0).contains(&lambda) {
        return Err(Error::RateDegenerate(lambda));
    }
    let shift_norm = spectral
        .gram_eigenvalues()
        .iter()
        .map(|&mu| (1.0 - tau * c * mu).abs())
        .fold(0.0, f64::max);
    let one_minus = 1.0 - lambda;
    Ok(tau * tau * 2.0 * (one_minus * c + 2.0 * shift_norm * shift_norm) / (one_minus * one_minus)
        * range_noise_norm
        * range_noise_norm)
}

/// Orthogonal split of a noise vector into its range and range-perp parts.
#[derive(Debug, Clone)]
pub struct NoiseSplit {
    pub r_range: Vec<f64>,
    pub r_perp: Vec<f64>,
}

/// Project r onto rg(A) = span(w_i) using a dense SVD of A.
pub fn split_noise(a_dense: &[f64], m: usize, d: usize, r: &[f64]) -> Result<NoiseSplit> {
    assert_eq!(r.len(), m);
    let spectral = svd_small_dense(a_dense, m, d)?;
    let mut r_range = vec![0.0; m];
    for w in &spectral.left_vectors {
        let coeff = dot(r, w);
        for i in 0..m {
            r_range[i] += coeff * w[i];
        }
    }
    let r_perp = sub(r, &r_range);
    Ok(NoiseSplit { r_range, r_perp })
}
