//! Randomized linear maps used as sketch building blocks, and the calibration
//! constants their estimators divide by.
//!
//! Every map is described by an immutable [`LinearMapDescriptor`]; the same
//! descriptor always materializes to bit-identical entries because each draw
//! comes from a child stream of the descriptor seed.

use std::fmt::Write as _;
use std::path::Path;

use crate::dense::{lp_norm, Matrix};
use crate::error::{Error, Result};
use crate::exponent::Exponent;
use crate::rng::SeededRng;

pub const HIGHP_DEFAULT_C0: f64 = 4.0;
const MU_P_SAMPLES: usize = 200_000;

/// Map shapes. `out_dim` x `in_dim` when materialized.
#[derive(Debug, Clone, PartialEq)]
pub enum MapKind {
    /// Dense Gaussian with entries N(0, 1/out_dim); an oblivious subspace
    /// embedding for low-dimensional subspaces.
    Ose,
    /// Dense Gaussian scaled so that E||Tx||_p ~ ||x||_2 for any fixed x
    /// (l_2 -> l_p embedding, p <= 2). `scale` is fixed at construction from
    /// the calibrated mean of |N(0,1)|^p.
    Dvoretzky { p: Exponent, scale: f64 },
    /// Dense i.i.d. p-stable entries; estimate with the median of absolute
    /// coordinates.
    PStable { p: Exponent },
    /// Max-stability sketch for p > 2: coordinate i is scaled by
    /// E_i^{-1/p} for exponential E_i and hashed with a random sign into
    /// `buckets` buckets, independently `reps` times. When the total row
    /// count would reach the input dimension the map degenerates to the
    /// identity (and the estimator to the exact norm), unless the caller
    /// disabled that fallback.
    HighP {
        p: Exponent,
        buckets: usize,
        reps: usize,
        identity: bool,
    },
    /// Block-sign rows: row i of the map carries +-1 signs on input block i
    /// ((i-1)B, iB] and zeros elsewhere.
    BlockSignRow { block: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearMapDescriptor {
    pub kind: MapKind,
    pub out_dim: usize,
    pub in_dim: usize,
    pub seed: u64,
}

impl LinearMapDescriptor {
    /// Dense out_dim x in_dim realization. Deterministic per descriptor.
    pub fn materialize(&self) -> Matrix {
        match &self.kind {
            MapKind::Ose => {
                let mut rng = SeededRng::new(self.seed);
                let s = (self.out_dim as f64).sqrt().recip();
                Matrix::from_fn(self.out_dim, self.in_dim, |_, _| s * rng.gaussian())
            }
            MapKind::Dvoretzky { scale, .. } => {
                let mut rng = SeededRng::new(self.seed);
                Matrix::from_fn(self.out_dim, self.in_dim, |_, _| scale * rng.gaussian())
            }
            MapKind::PStable { p } => {
                let mut rng = SeededRng::new(self.seed);
                let alpha = p.as_f64();
                Matrix::from_fn(self.out_dim, self.in_dim, |_, _| rng.pstable(alpha))
            }
            MapKind::HighP { identity: true, .. } => Matrix::identity(self.in_dim),
            MapKind::HighP {
                buckets, reps, ..
            } => {
                let plan = self.highp_plan();
                let mut m = Matrix::zeros(buckets * reps, self.in_dim);
                for (r, rep) in plan.iter().enumerate() {
                    for i in 0..self.in_dim {
                        m.set(r * buckets + rep.bucket[i], i, rep.coeff[i]);
                    }
                }
                m
            }
            MapKind::BlockSignRow { block } => {
                let signs = self.block_signs();
                let mut m = Matrix::zeros(self.out_dim, self.in_dim);
                for i in 0..self.in_dim {
                    m.set(i / block, i, signs[i]);
                }
                m
            }
        }
    }

    /// Fast structured application; agrees with `materialize().apply()` up to
    /// summation order.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.in_dim {
            return Err(Error::DimMismatch(format!(
                "map expects dim {}, got {}",
                self.in_dim,
                x.len()
            )));
        }
        Ok(match &self.kind {
            MapKind::HighP { identity: true, .. } => x.to_vec(),
            MapKind::HighP { buckets, reps, .. } => {
                let plan = self.highp_plan();
                let mut y = vec![0.0; buckets * reps];
                for (r, rep) in plan.iter().enumerate() {
                    for i in 0..self.in_dim {
                        y[r * buckets + rep.bucket[i]] += rep.coeff[i] * x[i];
                    }
                }
                y
            }
            MapKind::BlockSignRow { block } => {
                let signs = self.block_signs();
                let mut y = vec![0.0; self.out_dim];
                for i in 0..self.in_dim {
                    y[i / block] += signs[i] * x[i];
                }
                y
            }
            _ => self.materialize().apply_unchecked(x),
        })
    }

    /// Per-repetition hashing plan of a HighP map.
    fn highp_plan(&self) -> Vec<HighPRep> {
        let MapKind::HighP {
            p, buckets, reps, ..
        } = &self.kind
        else {
            unreachable!()
        };
        let inv_p = p.recip();
        let base = SeededRng::new(self.seed);
        (0..*reps)
            .map(|r| {
                let mut rng = base.child(r as u64);
                let mut bucket = Vec::with_capacity(self.in_dim);
                let mut coeff = Vec::with_capacity(self.in_dim);
                for _ in 0..self.in_dim {
                    bucket.push(rng.index(*buckets));
                    let e = rng.exponential();
                    coeff.push(rng.sign() * e.powf(-inv_p));
                }
                HighPRep { bucket, coeff }
            })
            .collect()
    }

    /// The +-1 sign per input coordinate of a BlockSignRow map.
    pub(crate) fn block_signs(&self) -> Vec<f64> {
        debug_assert!(matches!(self.kind, MapKind::BlockSignRow { .. }));
        let mut rng = SeededRng::new(self.seed);
        (0..self.in_dim).map(|_| rng.sign()).collect()
    }

    /// Materialize the draws once for repeated use.
    pub fn compile(&self) -> CompiledMap {
        match &self.kind {
            MapKind::HighP { identity: true, .. } => CompiledMap::Identity(self.in_dim),
            MapKind::HighP { buckets, .. } => CompiledMap::HighP {
                buckets: *buckets,
                reps: self.highp_plan(),
            },
            _ => CompiledMap::Dense(self.materialize()),
        }
    }
}

pub struct HighPRep {
    bucket: Vec<usize>,
    coeff: Vec<f64>,
}

/// A map with its random draws materialized once, for repeated application
/// and per-column access during streaming updates.
pub enum CompiledMap {
    Dense(Matrix),
    HighP {
        buckets: usize,
        reps: Vec<HighPRep>,
    },
    Identity(usize),
}

impl CompiledMap {
    pub fn out_dim(&self) -> usize {
        match self {
            CompiledMap::Dense(m) => m.rows(),
            CompiledMap::HighP { buckets, reps } => buckets * reps.len(),
            CompiledMap::Identity(n) => *n,
        }
    }

    pub fn in_dim(&self) -> usize {
        match self {
            CompiledMap::Dense(m) => m.cols(),
            CompiledMap::HighP { reps, .. } => reps.first().map_or(0, |r| r.bucket.len()),
            CompiledMap::Identity(n) => *n,
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        match self {
            CompiledMap::Dense(m) => m.apply_unchecked(x),
            CompiledMap::HighP { buckets, reps } => {
                let mut y = vec![0.0; buckets * reps.len()];
                for (r, rep) in reps.iter().enumerate() {
                    for (i, xi) in x.iter().enumerate() {
                        y[r * buckets + rep.bucket[i]] += rep.coeff[i] * xi;
                    }
                }
                y
            }
            CompiledMap::Identity(_) => x.to_vec(),
        }
    }

    /// Column i as sparse (row, coefficient) pairs.
    pub fn column(&self, i: usize) -> Vec<(usize, f64)> {
        match self {
            CompiledMap::Dense(m) => (0..m.rows()).map(|r| (r, m.get(r, i))).collect(),
            CompiledMap::HighP { buckets, reps } => reps
                .iter()
                .enumerate()
                .map(|(r, rep)| (r * buckets + rep.bucket[i], rep.coeff[i]))
                .collect(),
            CompiledMap::Identity(_) => vec![(i, 1.0)],
        }
    }
}

/// Dense Gaussian OSE with `rows` rows; preserves Euclidean norms on any
/// subspace of dimension about rows/4 up to constant factors.
pub fn make_ose(seed: u64, rows: usize, d: usize) -> Result<LinearMapDescriptor> {
    if rows == 0 || d == 0 {
        return Err(Error::guard("ose-dims", format!("got {rows}x{d}")));
    }
    Ok(LinearMapDescriptor {
        kind: MapKind::Ose,
        out_dim: rows,
        in_dim: d,
        seed,
    })
}

/// Mean of |N(0,1)|^p, calibrated by Monte Carlo from a child of `seed`.
fn mu_p(p: f64, seed: u64) -> f64 {
    let mut rng = SeededRng::new(seed).child(0x_A1B2);
    let mut acc = 0.0;
    for _ in 0..MU_P_SAMPLES {
        acc += rng.gaussian().abs().powf(p);
    }
    acc / MU_P_SAMPLES as f64
}

/// Gaussian l_2 -> l_p embedding with an explicit row count; rows are i.i.d.
/// N(0,1) scaled by 1/(rows^{1/p} mu_p^{1/p}) so E||Tx||_p^p = ||x||_2^p.
pub fn gaussian_lp_map(
    seed: u64,
    p: Exponent,
    rows: usize,
    in_dim: usize,
) -> Result<LinearMapDescriptor> {
    let pv = match p {
        Exponent::Finite(v) if v <= 2.0 => v,
        _ => {
            return Err(Error::guard(
                "dvoretzky-exponent",
                format!("l2->lp embeddings need p in [1,2], got {p}"),
            ))
        }
    };
    if rows == 0 || in_dim == 0 {
        return Err(Error::guard("dvoretzky-dims", format!("got {rows}x{in_dim}")));
    }
    let scale = 1.0 / ((rows as f64).powf(1.0 / pv) * mu_p(pv, seed).powf(1.0 / pv));
    Ok(LinearMapDescriptor {
        kind: MapKind::Dvoretzky { p, scale },
        out_dim: rows,
        in_dim,
        seed,
    })
}

/// l_2 -> l_p embedding of R^n with expansion factor `c_p` >= 1.
pub fn make_dvoretzky(
    seed: u64,
    p: Exponent,
    n: usize,
    c_p: f64,
) -> Result<LinearMapDescriptor> {
    if !(c_p >= 1.0) {
        return Err(Error::guard(
            "dvoretzky-expansion",
            format!("expansion must be >= 1, got {c_p}"),
        ));
    }
    gaussian_lp_map(seed, p, (c_p * n as f64).ceil() as usize, n)
}

/// Dense p-stable sketch with an odd number of rows (>= 7) so the median
/// estimator is well-defined.
pub fn make_pstable_sketch(
    seed: u64,
    p: Exponent,
    rows: usize,
    n: usize,
) -> Result<LinearMapDescriptor> {
    match p {
        Exponent::Finite(v) if (1.0..=2.0).contains(&v) => {}
        _ => {
            return Err(Error::guard(
                "pstable-exponent",
                format!("p-stable sketches need p in [1,2], got {p}"),
            ))
        }
    }
    if rows % 2 == 0 {
        return Err(Error::guard(
            "pstable-odd-rows",
            format!("row count must be odd for the median, got {rows}"),
        ));
    }
    if rows < 7 {
        return Err(Error::guard(
            "pstable-min-rows",
            format!("need at least 7 rows, got {rows}"),
        ));
    }
    if n == 0 {
        return Err(Error::guard("pstable-dims", "input dimension 0"));
    }
    Ok(LinearMapDescriptor {
        kind: MapKind::PStable { p },
        out_dim: rows,
        in_dim: n,
        seed,
    })
}

/// Sizing of the max-stability sketch: `buckets` per repetition and the
/// repetition count for failure probability `delta`.
pub fn highp_dims(p: Exponent, n: usize, delta: f64, c0: f64) -> (usize, usize) {
    let exp = 1.0 - 2.0 * p.recip();
    let buckets = (c0 * (n as f64).powf(exp) * (n as f64).ln().max(1.0))
        .ceil()
        .max(1.0) as usize;
    let reps = (1.0 / delta).log2().ceil().max(1.0) as usize;
    (buckets, reps)
}

pub fn make_highp_sketch(
    seed: u64,
    p: Exponent,
    n: usize,
    delta: f64,
) -> Result<LinearMapDescriptor> {
    make_highp_sketch_with(seed, p, n, delta, HIGHP_DEFAULT_C0, true)
}

/// As [`make_highp_sketch`] with the leading constant exposed and the
/// m >= n identity fallback optional.
pub fn make_highp_sketch_with(
    seed: u64,
    p: Exponent,
    n: usize,
    delta: f64,
    c0: f64,
    allow_identity: bool,
) -> Result<LinearMapDescriptor> {
    match p {
        Exponent::Infinity => {}
        Exponent::Finite(v) if v > 2.0 => {}
        _ => {
            return Err(Error::guard(
                "highp-exponent",
                format!("max-stability sketches need p > 2, got {p}"),
            ))
        }
    }
    if !(delta > 0.0 && delta < 0.5) {
        return Err(Error::guard(
            "highp-delta",
            format!("delta must lie in (0, 1/2), got {delta}"),
        ));
    }
    if n == 0 {
        return Err(Error::guard("highp-dims", "input dimension 0"));
    }
    let (buckets, reps) = highp_dims(p, n, delta, c0);
    let identity = allow_identity && buckets * reps >= n;
    let out_dim = if identity { n } else { buckets * reps };
    Ok(LinearMapDescriptor {
        kind: MapKind::HighP {
            p,
            buckets,
            reps,
            identity,
        },
        out_dim,
        in_dim: n,
        seed,
    })
}

/// Median of |median-estimator sketch coordinates| divided by the calibrated
/// scale: a constant-factor estimate of ||x||_p from y = Sx.
pub fn estimate_pstable(y: &[f64], p: Exponent, table: &CalibrationTable) -> Result<f64> {
    let entry = table.require(p)?;
    let mut abs: Vec<f64> = y.iter().map(|v| v.abs()).collect();
    abs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if abs.is_empty() {
        return Ok(0.0);
    }
    Ok(abs[abs.len() / 2] / entry.median_scale)
}

/// Median over repetitions of the max bucket magnitude, divided by the
/// calibrated max-stability scale. For identity-fallback maps the estimate is
/// the exact norm.
pub fn estimate_highp(
    y: &[f64],
    desc: &LinearMapDescriptor,
    table: &CalibrationTable,
) -> Result<f64> {
    let MapKind::HighP {
        p,
        buckets,
        reps,
        identity,
    } = &desc.kind
    else {
        return Err(Error::guard(
            "highp-estimator",
            "descriptor is not a max-stability sketch",
        ));
    };
    if *identity {
        return Ok(lp_norm(y, *p));
    }
    if y.len() != buckets * reps {
        return Err(Error::DimMismatch(format!(
            "expected {} sketch coordinates, got {}",
            buckets * reps,
            y.len()
        )));
    }
    let entry = table.require(*p)?;
    let mut maxes: Vec<f64> = (0..*reps)
        .map(|r| lp_norm(&y[r * buckets..(r + 1) * buckets], Exponent::INF))
        .collect();
    maxes.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(maxes[maxes.len() / 2] / entry.median_scale)
}

/// Calibration constants for one exponent.
#[derive(Debug, Clone, PartialEq)]
pub struct CalEntry {
    pub p: Exponent,
    pub median_scale: f64,
    pub mean_scale: f64,
    pub samples: u64,
    pub seed: u64,
}

/// Monte Carlo calibration of the estimator statistic for `p`:
/// - p <= 2: median and mean of |X| for standard p-stable X;
/// - p > 2 (including inf): median and mean of E^{-1/p} for exponential E,
///   the max-stability attenuation of the largest scaled coordinate.
pub fn calibrate(p: Exponent, samples: u64, seed: u64) -> Result<CalEntry> {
    if samples < 10_000 {
        return Err(Error::guard(
            "calibrate-samples",
            format!("need at least 10^4 samples, got {samples}"),
        ));
    }
    let mut rng = SeededRng::new(seed);
    let draws: Vec<f64> = match p {
        Exponent::Finite(v) if v <= 2.0 && v >= 1.0 => (0..samples)
            .map(|_| rng.pstable(v).abs())
            .collect(),
        Exponent::Finite(v) if v > 2.0 => (0..samples)
            .map(|_| rng.exponential().powf(-1.0 / v))
            .collect(),
        Exponent::Infinity => vec![1.0; samples as usize],
        _ => {
            return Err(Error::guard(
                "calibrate-exponent",
                format!("cannot calibrate p = {p}"),
            ))
        }
    };
    let mean = draws.iter().sum::<f64>() / draws.len() as f64;
    let mut sorted = draws;
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median = sorted[sorted.len() / 2];
    Ok(CalEntry {
        p,
        median_scale: median,
        mean_scale: mean,
        samples,
        seed,
    })
}

/// Estimator constants per exponent, persisted as one
/// "p median_scale mean_scale samples seed" line each.
#[derive(Debug, Clone, Default)]
pub struct CalibrationTable {
    entries: Vec<CalEntry>,
}

impl CalibrationTable {
    pub fn new() -> CalibrationTable {
        CalibrationTable::default()
    }

    /// Table holding exactly the entry for `p`, calibrated from `seed`.
    pub fn for_exponent(p: Exponent, seed: u64) -> Result<CalibrationTable> {
        let mut t = CalibrationTable::new();
        t.insert(calibrate(p, 20_000, seed)?);
        Ok(t)
    }

    pub fn insert(&mut self, entry: CalEntry) {
        self.entries.retain(|e| e.p != entry.p);
        self.entries.push(entry);
    }

    pub fn get(&self, p: Exponent) -> Option<&CalEntry> {
        self.entries.iter().find(|e| match (e.p, p) {
            (Exponent::Infinity, Exponent::Infinity) => true,
            (Exponent::Finite(a), Exponent::Finite(b)) => (a - b).abs() <= 1e-12 * a.abs().max(1.0),
            _ => false,
        })
    }

    pub fn require(&self, p: Exponent) -> Result<&CalEntry> {
        self.get(p).ok_or_else(|| {
            Error::guard("calibration-missing", format!("no calibration entry for p = {p}"))
        })
    }

    pub fn entries(&self) -> &[CalEntry] {
        &self.entries
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for e in &self.entries {
            let _ = writeln!(
                s,
                "{} {} {} {} {}",
                e.p, e.median_scale, e.mean_scale, e.samples, e.seed
            );
        }
        s
    }

    pub fn from_text(text: &str) -> Result<CalibrationTable> {
        let mut table = CalibrationTable::new();
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let tok: Vec<&str> = line.split_whitespace().collect();
            if tok.len() != 5 {
                return Err(Error::Parse(format!("bad calibration line {line:?}")));
            }
            table.insert(CalEntry {
                p: tok[0].parse()?,
                median_scale: tok[1]
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad median scale {:?}", tok[1])))?,
                mean_scale: tok[2]
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad mean scale {:?}", tok[2])))?,
                samples: tok[3]
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad sample count {:?}", tok[3])))?,
                seed: tok[4]
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad seed {:?}", tok[4])))?,
            });
        }
        Ok(table)
    }

    pub fn write_file(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read_file(path: &Path) -> Result<CalibrationTable> {
        CalibrationTable::from_text(&std::fs::read_to_string(path)?)
    }
}
