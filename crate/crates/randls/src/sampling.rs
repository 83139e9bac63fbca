//! Random search directions.
//!
//! Five sampling schemes for the direction vector x. Four of them are
//! isotropic, i.e. E(xx^T) = I, with a known constant c such that
//! E(xx^T |x|^2) = c I: c = d for Rademacher, coordinate and sphere
//! sampling, c = d + 2 for the standard normal. Weighted coordinate sampling
//! is deliberately non-isotropic and carries its own selection
//! probabilities.

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng::RngState;

#[derive(Debug, Clone, PartialEq)]
pub enum SamplerVariant {
    /// Entries +-1, each with probability 1/2, independently.
    Rademacher,
    /// sqrt(d) * e_k with k uniform in {0, .., d-1}.
    Coordinate,
    /// sqrt(d) * e_k with k drawn from the given probability vector.
    WeightedCoordinate(Vec<f64>),
    /// I.i.d. standard normal entries.
    NormalStd,
    /// Uniform on the sphere of radius sqrt(d).
    SphereSqrtD,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SamplerSpec {
    pub variant: SamplerVariant,
    pub dim: usize,
}

impl SamplerSpec {
    pub fn new(variant: SamplerVariant, dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidSpec("sampler dimension must be positive".into()));
        }
        if let SamplerVariant::WeightedCoordinate(w) = &variant {
            if w.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: w.len() });
            }
            if w.iter().any(|&p| p <= 0.0) {
                return Err(Error::InvalidSpec("weights must be strictly positive".into()));
            }
            let total: f64 = w.iter().sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidSpec(format!("weights sum to {total}, expected 1")));
            }
        }
        Ok(SamplerSpec { variant, dim })
    }

    /// CLI token: `rademacher | coordinate | weighted | normal | sphere`.
    /// `weighted` must be resolved to concrete weights by the caller first,
    /// so it is rejected here.
    pub fn from_token(token: &str, dim: usize) -> Result<Self> {
        let variant = match token {
            "rademacher" => SamplerVariant::Rademacher,
            "coordinate" => SamplerVariant::Coordinate,
            "normal" => SamplerVariant::NormalStd,
            "sphere" => SamplerVariant::SphereSqrtD,
            other => {
                return Err(Error::InvalidSpec(format!("unknown sampler token `{other}`")));
            }
        };
        SamplerSpec::new(variant, dim)
    }

    pub fn token(&self) -> &'static str {
        match self.variant {
            SamplerVariant::Rademacher => "rademacher",
            SamplerVariant::Coordinate => "coordinate",
            SamplerVariant::WeightedCoordinate(_) => "weighted",
            SamplerVariant::NormalStd => "normal",
            SamplerVariant::SphereSqrtD => "sphere",
        }
    }

    pub fn is_isotropic(&self) -> bool {
        !matches!(self.variant, SamplerVariant::WeightedCoordinate(_))
    }
}

/// Draw one direction from the sampler's distribution.
pub fn sample(spec: &SamplerSpec, rng: &mut RngState) -> Vec<f64> {
    let d = spec.dim;
    match &spec.variant {
        SamplerVariant::Rademacher => (0..d)
            .map(|_| if rng.next_u64() & 1 == 0 { 1.0 } else { -1.0 })
            .collect(),
        SamplerVariant::Coordinate => {
            let mut x = vec![0.0; d];
            x[rng.next_index(d)] = (d as f64).sqrt();
            x
        }
        SamplerVariant::WeightedCoordinate(weights) => {
            let u = rng.next_f64();
            let mut acc = 0.0;
            let mut k = d - 1;
            for (j, p) in weights.iter().enumerate() {
                acc += p;
                if u < acc {
                    k = j;
                    break;
                }
            }
            let mut x = vec![0.0; d];
            x[k] = (d as f64).sqrt();
            x
        }
        SamplerVariant::NormalStd => loop {
            let x: Vec<f64> = (0..d).map(|_| rng.next_gaussian()).collect();
            // an exact zero draw has probability zero but would break the
            // sphere rescaling downstream; resample
            if x.iter().any(|&v| v != 0.0) {
                return x;
            }
        },
        SamplerVariant::SphereSqrtD => {
            let gauss = sample(&SamplerSpec { variant: SamplerVariant::NormalStd, dim: d }, rng);
            let mut x = gauss;
            let scale = (d as f64).sqrt() / linalg::norm(&x);
            linalg::scale(scale, &mut x);
            x
        }
    }
}

/// The constant c with E(xx^T |x|^2) = c I, defined for isotropic variants.
pub fn c_constant(spec: &SamplerSpec) -> Result<f64> {
    match spec.variant {
        SamplerVariant::Rademacher | SamplerVariant::Coordinate | SamplerVariant::SphereSqrtD => {
            Ok(spec.dim as f64)
        }
        SamplerVariant::NormalStd => Ok(spec.dim as f64 + 2.0),
        SamplerVariant::WeightedCoordinate(_) => Err(Error::NotIsotropic),
    }
}

/// Empirical second and fourth moments, the quantities constrained by the
/// isotropy assumption.
#[derive(Debug)]
pub struct SecondMoments {
    /// (1/n) sum of x x^T, row-major d x d.
    pub cov: Vec<f64>,
    /// (1/n) sum of x x^T |x|^2, row-major d x d.
    pub fourth: Vec<f64>,
    pub n: usize,
}

pub fn empirical_second_moments(spec: &SamplerSpec, rng: &mut RngState, n: usize) -> SecondMoments {
    assert!(n >= 1);
    let d = spec.dim;
    let mut cov = vec![0.0; d * d];
    let mut fourth = vec![0.0; d * d];
    for _ in 0..n {
        let x = sample(spec, rng);
        let nsq = linalg::norm_sq(&x);
        for i in 0..d {
            let xi = x[i];
            if xi == 0.0 {
                continue;
            }
            for j in 0..d {
                let p = xi * x[j];
                cov[i * d + j] += p;
                fourth[i * d + j] += p * nsq;
            }
        }
    }
    let inv = 1.0 / n as f64;
    linalg::scale(inv, &mut cov);
    linalg::scale(inv, &mut fourth);
    SecondMoments { cov, fourth, n }
}

/// Kaczmarz-style selection probabilities p_j = |a_j|^2 / |A|_F^2 from
/// column norms. Zero-norm columns (kernel coordinates) get weight zero and
/// the rest is renormalized; the flag reports that this happened.
pub fn kaczmarz_weights(col_norms: &[f64]) -> Result<(Vec<f64>, bool)> {
    let total: f64 = col_norms.iter().map(|n| n * n).sum();
    if total == 0.0 {
        return Err(Error::InvalidSpec("all columns have zero norm".into()));
    }
    let had_zero = col_norms.iter().any(|&n| n == 0.0);
    let weights: Vec<f64> = col_norms.iter().map(|n| n * n / total).collect();
    Ok((weights, had_zero))
}
