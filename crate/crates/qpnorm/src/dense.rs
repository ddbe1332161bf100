use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::exponent::Exponent;

/// Dense real vector. Entries are finite by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector {
    entries: Vec<f64>,
}

impl Vector {
    pub fn new(entries: Vec<f64>) -> Result<Vector> {
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("vector entries".into()));
        }
        Ok(Vector { entries })
    }

    pub fn zeros(dim: usize) -> Vector {
        Vector {
            entries: vec![0.0; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.entries.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.entries
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.entries
    }

    pub fn norm(&self, p: Exponent) -> f64 {
        lp_norm(&self.entries, p)
    }
}

impl From<Vector> for Vec<f64> {
    fn from(v: Vector) -> Vec<f64> {
        v.entries
    }
}

/// The l_p norm of a slice, max-norm for p = inf.
///
/// Finite p factors out the largest magnitude before raising to the p-th
/// power, so large exponents neither overflow nor underflow. A side effect
/// relied on by the sketch estimators: scaling the input by a power of two
/// scales the result exactly.
pub fn lp_norm(xs: &[f64], p: Exponent) -> f64 {
    match p {
        Exponent::Infinity => xs.iter().fold(0.0, |m, v| m.max(v.abs())),
        Exponent::Finite(p) => {
            let m = xs.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
            if m == 0.0 {
                return 0.0;
            }
            if p == 1.0 {
                return xs.iter().map(|v| v.abs()).sum();
            }
            let s: f64 = if p == 2.0 {
                xs.iter().map(|v| (v / m) * (v / m)).sum()
            } else {
                xs.iter().map(|v| (v.abs() / m).powf(p)).sum()
            };
            m * s.powf(1.0 / p)
        }
    }
}

/// Dense real matrix, row-major. Entries are finite by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    entries: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<f64>) -> Result<Matrix> {
        if rows == 0 || cols == 0 {
            return Err(Error::DimMismatch(format!(
                "matrix dimensions must be positive, got {rows}x{cols}"
            )));
        }
        if entries.len() != rows * cols {
            return Err(Error::DimMismatch(format!(
                "{rows}x{cols} matrix needs {} entries, got {}",
                rows * cols,
                entries.len()
            )));
        }
        if entries.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("matrix entries".into()));
        }
        Ok(Matrix {
            rows,
            cols,
            entries,
        })
    }

    pub fn zeros(rows: usize, cols: usize) -> Matrix {
        Matrix {
            rows,
            cols,
            entries: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Matrix {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    /// Build from a function of (row, col).
    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Matrix {
        let mut entries = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                entries.push(f(i, j));
            }
        }
        Matrix {
            rows,
            cols,
            entries,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        debug_assert!(i < self.rows && j < self.cols);
        self.entries[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        debug_assert!(i < self.rows && j < self.cols);
        self.entries[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn entries(&self) -> &[f64] {
        &self.entries
    }

    pub fn transpose(&self) -> Matrix {
        Matrix::from_fn(self.cols, self.rows, |i, j| self.get(j, i))
    }

    /// Matrix-vector product A x.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.cols {
            return Err(Error::DimMismatch(format!(
                "cannot apply {}x{} matrix to vector of dim {}",
                self.rows,
                self.cols,
                x.len()
            )));
        }
        Ok(self.apply_unchecked(x))
    }

    pub(crate) fn apply_unchecked(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|i| {
                self.row(i)
                    .iter()
                    .zip(x)
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
            })
            .collect()
    }

    /// Matrix product self * other.
    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::DimMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for l in 0..self.cols {
                let a = self.get(i, l);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    let v = out.get(i, j) + a * other.get(l, j);
                    out.set(i, j, v);
                }
            }
        }
        Ok(out)
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::DimMismatch(format!(
                "cannot add {}x{} and {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a + b)
            .collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            entries,
        })
    }

    pub fn scale(&self, c: f64) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(|v| c * v).collect(),
        }
    }

    pub fn frobenius(&self) -> f64 {
        lp_norm(&self.entries, Exponent::TWO)
    }

    /// Text form: header "rows cols", then one space-separated line per row.
    /// Values use the shortest round-trip decimal form, so writing and
    /// re-reading reproduces the matrix bit for bit.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{} {}", self.rows, self.cols);
        for i in 0..self.rows {
            let row = self
                .row(i)
                .iter()
                .map(|v| format!("{v}"))
                .collect::<Vec<_>>()
                .join(" ");
            let _ = writeln!(s, "{row}");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Matrix> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty matrix file".into()))?;
        let mut hp = header.split_whitespace();
        let rows: usize = hp
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::Parse(format!("bad matrix header {header:?}")))?;
        let cols: usize = hp
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::Parse(format!("bad matrix header {header:?}")))?;
        let mut entries = Vec::with_capacity(rows * cols);
        for line in lines {
            for tok in line.split_whitespace() {
                let v: f64 = tok
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad matrix entry {tok:?}")))?;
                if !v.is_finite() {
                    return Err(Error::NonFinite(format!("matrix entry {tok:?}")));
                }
                entries.push(v);
            }
        }
        Matrix::new(rows, cols, entries)
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read_file(path: &Path) -> Result<Matrix> {
        let text = std::fs::read_to_string(path)?;
        Matrix::from_text(&text)
    }
}

/// Free-function forms kept alongside the methods for call-site symmetry
/// with the norm oracles.
pub fn vector_norm(x: &Vector, p: Exponent) -> f64 {
    lp_norm(x.as_slice(), p)
}

pub fn mat_apply(a: &Matrix, x: &Vector) -> Result<Vector> {
    let out = a.apply(x.as_slice())?;
    Vector::new(out)
}

pub fn transpose(a: &Matrix) -> Matrix {
    a.transpose()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeededRng;
    use proptest::prelude::*;

    #[test]
    fn vector_rejects_nan_and_inf() {
        assert!(Vector::new(vec![1.0, f64::NAN]).is_err());
        assert!(Vector::new(vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn norm_345() {
        let v = Vector::new(vec![3.0, 4.0]).unwrap();
        assert_eq!(v.norm(Exponent::TWO), 5.0);
    }

    #[test]
    fn norm_inf_of_signs() {
        let v = Vector::new(vec![1.0, -1.0, 1.0]).unwrap();
        assert_eq!(v.norm(Exponent::INF), 1.0);
    }

    #[test]
    fn norm_four_thirds_all_ones() {
        // n^{1/p} for the all-ones vector: 4^{3/4} = 2.8284271247461903.
        let v = Vector::new(vec![1.0, 1.0, 1.0, 1.0]).unwrap();
        let got = v.norm(Exponent::new(4.0 / 3.0).unwrap());
        assert!((got - 2.8284271247461903).abs() < 1e-12, "got {got}");
    }

    #[test]
    fn large_p_does_not_overflow() {
        let v = Vector::new(vec![1e200, 5e199]).unwrap();
        let got = v.norm(Exponent::new(64.0).unwrap());
        assert!(got.is_finite());
        assert!((got - 1e200).abs() / 1e200 < 1e-3);
    }

    #[test]
    fn identity_apply_is_identity() {
        let a = Matrix::identity(3);
        let x = vec![1.5, -2.0, 0.25];
        assert_eq!(a.apply(&x).unwrap(), x);
    }

    #[test]
    fn transpose_involution() {
        let a = Matrix::new(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        assert_eq!(a.transpose().transpose(), a);
    }

    #[test]
    fn apply_matches_brute_force_sum() {
        // Independent oracle: entry-by-entry accumulation in a plain loop.
        let mut rng = SeededRng::new(7032024);
        let a = crate::rng::sample_gaussian_matrix(&mut rng, 3, 2, 1.0).unwrap();
        let x = vec![0.7, -1.3];
        let got = a.apply(&x).unwrap();
        for i in 0..3 {
            let mut acc = 0.0;
            for j in 0..2 {
                acc += a.get(i, j) * x[j];
            }
            assert!((got[i] - acc).abs() < 1e-12);
        }
    }

    #[test]
    fn apply_dim_mismatch_errors() {
        let a = Matrix::identity(3);
        assert!(a.apply(&[1.0, 2.0]).is_err());
    }

    #[test]
    fn text_roundtrip_is_exact() {
        let mut rng = SeededRng::new(99);
        let a = crate::rng::sample_gaussian_matrix(&mut rng, 4, 3, 1.0).unwrap();
        let b = Matrix::from_text(&a.to_text()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn text_rejects_nan() {
        assert!(Matrix::from_text("1 2\nNaN 3\n").is_err());
        assert!(Matrix::from_text("1 1\ninf\n").is_err());
    }

    proptest! {
        #[test]
        fn norm_monotone_in_p(xs in proptest::collection::vec(-100.0f64..100.0, 1..12),
                              a in 1.0f64..8.0, b in 0.0f64..8.0) {
            let p = Exponent::new(a).unwrap();
            let q = Exponent::new(a + b).unwrap();
            let np = lp_norm(&xs, p);
            let nq = lp_norm(&xs, q);
            prop_assert!(np >= nq - 1e-9 * nq.max(1.0));
        }

        #[test]
        fn norm_homogeneous(xs in proptest::collection::vec(-50.0f64..50.0, 1..10),
                            c in -20.0f64..20.0,
                            pv in 1.0f64..10.0) {
            let p = Exponent::new(pv).unwrap();
            let lhs = lp_norm(&xs.iter().map(|v| c * v).collect::<Vec<_>>(), p);
            let rhs = c.abs() * lp_norm(&xs, p);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.max(1e-300));
        }

        #[test]
        fn norm_triangle_inequality(xs in proptest::collection::vec(-50.0f64..50.0, 1..10),
                                    ys in proptest::collection::vec(-50.0f64..50.0, 1..10)) {
            let n = xs.len().min(ys.len());
            let sum: Vec<f64> = (0..n).map(|i| xs[i] + ys[i]).collect();
            for p in [
                Exponent::ONE,
                Exponent::new(1.5).unwrap(),
                Exponent::TWO,
                Exponent::new(3.0).unwrap(),
                Exponent::INF,
            ] {
                let l = lp_norm(&sum, p);
                let r = lp_norm(&xs[..n], p) + lp_norm(&ys[..n], p);
                prop_assert!(l <= r + 1e-9 * r.max(1.0));
            }
        }

        #[test]
        fn norm_zero_iff_zero(xs in proptest::collection::vec(-10.0f64..10.0, 1..8)) {
            let p = Exponent::TWO;
            let n = lp_norm(&xs, p);
            prop_assert_eq!(n == 0.0, xs.iter().all(|v| *v == 0.0));
            prop_assert!(n >= 0.0);
        }
    }

    #[test]
    fn power_of_two_scaling_is_exact() {
        let xs = vec![0.3, -1.7, 2.9, 0.041];
        for p in [Exponent::ONE, Exponent::new(1.5).unwrap(), Exponent::TWO, Exponent::new(4.0).unwrap(), Exponent::INF] {
            let scaled: Vec<f64> = xs.iter().map(|v| 8.0 * v).collect();
            assert_eq!(lp_norm(&scaled, p), 8.0 * lp_norm(&xs, p));
        }
    }
}
