use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::dense::{Matrix, Vector};
use crate::error::{Error, Result};
use crate::exponent::Exponent;

/// Deterministic random stream: the same seed and the same call sequence
/// produce the same values on every platform and run.
///
/// Parallel or repeated work should not share one stream; derive a child
/// stream per lane with [`SeededRng::child`] instead.
#[derive(Debug, Clone)]
pub struct SeededRng {
    seed: u64,
    inner: ChaCha8Rng,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E3779B97F4A7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

impl SeededRng {
    pub fn new(seed: u64) -> SeededRng {
        SeededRng {
            seed,
            inner: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Child stream for lane `lane`, independent of this stream's position.
    pub fn child(&self, lane: u64) -> SeededRng {
        SeededRng::new(splitmix64(self.seed ^ splitmix64(lane)))
    }

    /// Uniform in [0, 1).
    pub fn uniform(&mut self) -> f64 {
        self.inner.gen::<f64>()
    }

    /// Uniform in the open interval (0, 1).
    pub fn open_uniform(&mut self) -> f64 {
        loop {
            let u = self.inner.gen::<f64>();
            if u > 0.0 {
                return u;
            }
        }
    }

    pub fn gaussian(&mut self) -> f64 {
        StandardNormal.sample(&mut self.inner)
    }

    /// Standard exponential via inverse CDF.
    pub fn exponential(&mut self) -> f64 {
        -self.open_uniform().ln()
    }

    /// Fair +-1.
    pub fn sign(&mut self) -> f64 {
        if self.inner.gen::<bool>() {
            1.0
        } else {
            -1.0
        }
    }

    pub fn index(&mut self, n: usize) -> usize {
        self.inner.gen_range(0..n)
    }

    /// One standard symmetric p-stable variate via the Chambers-Mallows-Stuck
    /// transform of a (uniform angle, exponential) pair.
    ///
    /// Convention: alpha = 2 yields N(0, 2) (variance two), alpha = 1 yields
    /// the standard Cauchy. Estimators divide by calibrated constants, so the
    /// convention cancels downstream.
    pub fn pstable(&mut self, alpha: f64) -> f64 {
        debug_assert!(alpha > 0.0 && alpha <= 2.0);
        let theta = std::f64::consts::PI * (self.open_uniform() - 0.5);
        let w = self.exponential();
        let a = (alpha * theta).sin() / theta.cos().powf(1.0 / alpha);
        let b = (((1.0 - alpha) * theta).cos() / w).powf((1.0 - alpha) / alpha);
        a * b
    }
}

/// n x d matrix of i.i.d. N(0, scale^2) entries, filled row-major.
pub fn sample_gaussian_matrix(
    rng: &mut SeededRng,
    n: usize,
    d: usize,
    scale: f64,
) -> Result<Matrix> {
    if n == 0 || d == 0 {
        return Err(Error::guard("positive-dims", format!("got {n}x{d}")));
    }
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::guard(
            "positive-scale",
            format!("scale must be finite and > 0, got {scale}"),
        ));
    }
    Ok(Matrix::from_fn(n, d, |_, _| scale * rng.gaussian()))
}

/// `count` i.i.d. standard p-stable variates; see [`SeededRng::pstable`] for
/// the convention.
pub fn sample_pstable(rng: &mut SeededRng, p: Exponent, count: usize) -> Result<Vector> {
    let alpha = match p {
        Exponent::Finite(v) if v > 0.0 && v <= 2.0 => v,
        _ => {
            return Err(Error::guard(
                "pstable-exponent",
                format!("p must lie in (0, 2], got {p}"),
            ))
        }
    };
    let entries = (0..count).map(|_| rng.pstable(alpha)).collect();
    Vector::new(entries)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let mut a = SeededRng::new(42);
        let mut b = SeededRng::new(42);
        for _ in 0..100 {
            assert_eq!(a.uniform().to_bits(), b.uniform().to_bits());
        }
        let ga = sample_gaussian_matrix(&mut SeededRng::new(7), 5, 5, 1.0).unwrap();
        let gb = sample_gaussian_matrix(&mut SeededRng::new(7), 5, 5, 1.0).unwrap();
        assert_eq!(ga, gb);
    }

    #[test]
    fn children_are_independent_of_position() {
        let mut a = SeededRng::new(3);
        let c1 = a.child(5);
        a.uniform();
        let c2 = a.child(5);
        assert_eq!(c1.seed(), c2.seed());
        assert_ne!(a.child(5).seed(), a.child(6).seed());
    }

    #[test]
    fn zero_scale_rejected() {
        let mut rng = SeededRng::new(1);
        assert!(sample_gaussian_matrix(&mut rng, 2, 2, 0.0).is_err());
    }

    #[test]
    fn gaussian_matrix_moments() {
        // Law of large numbers at 10^6 samples: mean within 0.01, variance
        // within 5% of 1.
        let mut rng = SeededRng::new(2024);
        let m = sample_gaussian_matrix(&mut rng, 1000, 1000, 1.0).unwrap();
        let n = m.entries().len() as f64;
        let mean = m.entries().iter().sum::<f64>() / n;
        let var = m.entries().iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        assert!(mean.abs() < 0.01, "mean {mean}");
        assert!((var - 1.0).abs() < 0.05, "var {var}");
    }

    #[test]
    fn pstable_two_matches_gaussian_convention() {
        let mut rng = SeededRng::new(5);
        let xs = sample_pstable(&mut rng, Exponent::TWO, 100_000).unwrap();
        let var = xs.as_slice().iter().map(|v| v * v).sum::<f64>() / 100_000.0;
        assert!((var - 2.0).abs() / 2.0 < 0.05, "variance {var}, expected 2");
    }

    #[test]
    fn pstable_one_matches_cauchy_median() {
        let mut rng = SeededRng::new(6);
        let xs = sample_pstable(&mut rng, Exponent::ONE, 100_000).unwrap();
        let mut abs: Vec<f64> = xs.as_slice().iter().map(|v| v.abs()).collect();
        abs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let med = abs[abs.len() / 2];
        assert!((med - 1.0).abs() < 0.05, "median {med}, expected 1");
    }

    #[test]
    fn pstable_empty_and_guards() {
        let mut rng = SeededRng::new(7);
        let v = sample_pstable(&mut rng, Exponent::ONE, 0).unwrap();
        assert_eq!(v.dim(), 0);
        assert!(sample_pstable(&mut rng, Exponent::new(3.0).unwrap(), 4).is_err());
        assert!(sample_pstable(&mut rng, Exponent::INF, 4).is_err());
    }
}
