//! Ground-truth q->p norms: exact where a closed form or finite enumeration
//! exists, rigorously bracketed otherwise. Every sketch in this crate is
//! validated against these.

use std::sync::Arc;

use crate::dense::{lp_norm, Matrix};
use crate::error::{Error, Result};
use crate::exponent::Exponent;
use crate::net::{self, Net};
use crate::rng::SeededRng;
use crate::svd::{jacobi_svd, numerical_rank};

pub const SIGN_ENUM_MAX_COLS: usize = 24;
pub const LOWRANK_MAX_RANK: usize = 6;
pub const RANK_REL_TOL: f64 = 1e-9;

const POWER_ITER_TOL: f64 = 1e-9;
const POWER_ITER_MAX: usize = 10_000;
/// Relative margin put around the power-iteration value when it is reported
/// as a bracket.
const POWER_ITER_MARGIN: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    ColumnMax,
    RowMax,
    SignEnum,
    Net,
    LowrankNet,
    PowerIter,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::ColumnMax => "column_max",
            Method::RowMax => "row_max",
            Method::SignEnum => "sign_enum",
            Method::Net => "net",
            Method::LowrankNet => "lowrank_net",
            Method::PowerIter => "power_iter",
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Method::ColumnMax | Method::RowMax | Method::SignEnum)
    }
}

/// A certified interval around a q->p norm. Exact methods have
/// `lower == upper`.
#[derive(Debug, Clone)]
pub struct NormBracket {
    pub lower: f64,
    pub upper: f64,
    pub method: Method,
}

impl NormBracket {
    pub fn exact(value: f64, method: Method) -> NormBracket {
        NormBracket {
            lower: value,
            upper: value,
            method,
        }
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.lower + self.upper)
    }

    pub fn contains(&self, v: f64) -> bool {
        self.lower <= v && v <= self.upper
    }

    /// Containment up to relative rounding slack; bracket endpoints and the
    /// value being tested usually come from different summation orders.
    pub fn contains_approx(&self, v: f64, rtol: f64) -> bool {
        let slack = rtol * v.abs().max(self.upper.abs()).max(1e-300);
        self.lower - slack <= v && v <= self.upper + slack
    }

    pub fn overlaps(&self, other: &NormBracket) -> bool {
        self.lower <= other.upper && other.lower <= self.upper
    }
}

/// What attained the norm: a column or row index for the max-scan oracles, a
/// sign assignment for the enumeration oracle, a unit direction for nets.
#[derive(Debug, Clone, PartialEq)]
pub enum Witness {
    Column(usize),
    Row(usize),
    Signs(Vec<i8>),
    Direction(Vec<f64>),
}

impl Witness {
    pub fn render(&self) -> String {
        match self {
            Witness::Column(i) => format!("col:{i}"),
            Witness::Row(i) => format!("row:{i}"),
            Witness::Signs(s) => {
                let body: String = s.iter().map(|v| if *v >= 0 { '+' } else { '-' }).collect();
                format!("signs:{body}")
            }
            Witness::Direction(v) => {
                let body = v
                    .iter()
                    .map(|x| format!("{x:.6}"))
                    .collect::<Vec<_>>()
                    .join(",");
                format!("dir:{body}")
            }
        }
    }
}

/// ||A||_{1->p}: the largest l_p column norm. Ties break to the lowest index.
pub fn norm_one_to_p(a: &Matrix, p: Exponent) -> f64 {
    one_to_p_witness(a, p).0
}

pub fn one_to_p_witness(a: &Matrix, p: Exponent) -> (f64, usize) {
    let mut best = f64::NEG_INFINITY;
    let mut arg = 0;
    for j in 0..a.cols() {
        let n = lp_norm(&a.col(j), p);
        if n > best {
            best = n;
            arg = j;
        }
    }
    (best, arg)
}

/// ||A||_{q->inf}: the largest l_{q*} row norm, by duality with the column
/// characterization of the transpose.
pub fn norm_q_to_infty(a: &Matrix, q: Exponent) -> f64 {
    q_to_infty_witness(a, q).0
}

pub fn q_to_infty_witness(a: &Matrix, q: Exponent) -> (f64, usize) {
    let qd = q.dual();
    let mut best = f64::NEG_INFINITY;
    let mut arg = 0;
    for i in 0..a.rows() {
        let n = lp_norm(a.row(i), qd);
        if n > best {
            best = n;
            arg = i;
        }
    }
    (best, arg)
}

/// ||A||_{inf->p}: exact maximum of ||Ax||_p over sign vectors x. Sign
/// symmetry pins the first coordinate to +1, halving the search; the rest is
/// enumerated in Gray-code order with rank-one updates to Ax.
pub fn norm_infty_to_p_exact(a: &Matrix, p: Exponent) -> Result<f64> {
    infty_to_p_witness(a, p).map(|(v, _)| v)
}

pub fn infty_to_p_witness(a: &Matrix, p: Exponent) -> Result<(f64, Vec<i8>)> {
    let d = a.cols();
    if d > SIGN_ENUM_MAX_COLS {
        return Err(Error::guard(
            "sign-enum-cols",
            format!("sign enumeration is limited to {SIGN_ENUM_MAX_COLS} columns, got {d}"),
        ));
    }
    let cols: Vec<Vec<f64>> = (0..d).map(|j| a.col(j)).collect();
    let mut signs = vec![1i8; d];
    let mut y: Vec<f64> = (0..a.rows())
        .map(|i| cols.iter().map(|c| c[i]).sum())
        .collect();
    let mut best = lp_norm(&y, p);
    let mut best_signs = signs.clone();
    if d > 1 {
        let steps = 1u64 << (d - 1);
        for k in 1..steps {
            // Gray code over coordinates 1..d; coordinate 0 stays +1.
            let flip = k.trailing_zeros() as usize + 1;
            signs[flip] = -signs[flip];
            let delta = 2.0 * signs[flip] as f64;
            for (yi, ci) in y.iter_mut().zip(&cols[flip]) {
                *yi += delta * ci;
            }
            let n = lp_norm(&y, p);
            if n > best {
                best = n;
                best_signs = signs.clone();
            }
        }
    }
    Ok((best, best_signs))
}

/// Bracket for ||A||_{q->p} from an epsilon-net of the l_q unit sphere of the
/// input space. The max over net points is a true lower bound (net points are
/// unit vectors); dividing by 1-eps gives the upper bound.
pub fn net_norm(a: &Matrix, q: Exponent, p: Exponent, eps: f64) -> Result<NormBracket> {
    net_norm_witness(a, q, p, eps).map(|(b, _)| b)
}

pub fn net_norm_witness(
    a: &Matrix,
    q: Exponent,
    p: Exponent,
    eps: f64,
) -> Result<(NormBracket, Witness)> {
    let net = net::cached(q, a.cols(), eps)?;
    Ok(eval_net(a, &net, p, Method::Net))
}

fn eval_net(a: &Matrix, net: &Arc<Net>, p: Exponent, method: Method) -> (NormBracket, Witness) {
    let mut best = 0.0f64;
    let mut arg = 0usize;
    for (idx, v) in net.points.iter().enumerate() {
        let n = lp_norm(&a.apply_unchecked(v), p);
        if n > best {
            best = n;
            arg = idx;
        }
    }
    (
        NormBracket {
            lower: best,
            upper: best / (1.0 - net.eps),
            method,
        },
        Witness::Direction(net.points[arg].clone()),
    )
}

/// Bracket for ||A||_{2->p} of a numerically low-rank matrix: restrict to an
/// orthonormal rowspace basis Q (the only directions A sees), then net the
/// r-dimensional Euclidean sphere of coefficients applied to AQ.
pub fn lowrank_norm_two_to_p(a: &Matrix, p: Exponent, eps: f64) -> Result<NormBracket> {
    let svd = jacobi_svd(a);
    let rank = numerical_rank(&svd.sigma, RANK_REL_TOL);
    if rank == 0 {
        return Ok(NormBracket {
            lower: 0.0,
            upper: 0.0,
            method: Method::LowrankNet,
        });
    }
    if rank > LOWRANK_MAX_RANK {
        return Err(Error::guard(
            "lowrank-rank",
            format!("numerical rank {rank} exceeds the cap {LOWRANK_MAX_RANK}"),
        ));
    }
    let q_basis = Matrix::from_fn(a.cols(), rank, |i, j| svd.v.get(i, j));
    let reduced = a.matmul(&q_basis)?;
    let net = net::cached(Exponent::TWO, rank, eps)?;
    let (bracket, _) = eval_net(&reduced, &net, p, Method::LowrankNet);
    Ok(bracket)
}

/// Largest singular value by power iteration on A^T A, deterministic seeded
/// start, relative tolerance 1e-9, at most 10^4 iterations.
pub fn operator_norm(a: &Matrix) -> f64 {
    let mut rng = SeededRng::new(0x5EED_0A11_F1E1_D000 ^ ((a.rows() as u64) << 32 | a.cols() as u64));
    let mut v: Vec<f64> = (0..a.cols()).map(|_| rng.gaussian()).collect();
    let nv = lp_norm(&v, Exponent::TWO);
    v.iter_mut().for_each(|x| *x /= nv);

    let at = a.transpose();
    let mut sigma = 0.0f64;
    for _ in 0..POWER_ITER_MAX {
        let w = a.apply_unchecked(&v);
        let s = lp_norm(&w, Exponent::TWO);
        if s == 0.0 {
            return 0.0;
        }
        let u = at.apply_unchecked(&w);
        let nu = lp_norm(&u, Exponent::TWO);
        if nu == 0.0 {
            return s;
        }
        v = u.iter().map(|x| x / nu).collect();
        if (s - sigma).abs() <= POWER_ITER_TOL * s {
            return s;
        }
        sigma = s;
    }
    sigma
}

pub fn operator_norm_bracket(a: &Matrix) -> NormBracket {
    let v = operator_norm(a);
    NormBracket {
        lower: v * (1.0 - POWER_ITER_MARGIN),
        upper: v * (1.0 + POWER_ITER_MARGIN),
        method: Method::PowerIter,
    }
}

/// Dispatch to the best available oracle for (q, p): exact scans and
/// enumerations first (directly or through the transpose), power iteration
/// for 2->2, nets when a side is small enough, the low-rank reduction last.
pub fn best_oracle(
    a: &Matrix,
    q: Exponent,
    p: Exponent,
    eps: f64,
) -> Result<(NormBracket, Option<Witness>)> {
    if q.is_one() {
        let (v, j) = one_to_p_witness(a, p);
        return Ok((
            NormBracket::exact(v, Method::ColumnMax),
            Some(Witness::Column(j)),
        ));
    }
    if p.is_infinite() {
        let (v, i) = q_to_infty_witness(a, q);
        return Ok((
            NormBracket::exact(v, Method::RowMax),
            Some(Witness::Row(i)),
        ));
    }
    if q.is_infinite() && a.cols() <= SIGN_ENUM_MAX_COLS {
        let (v, s) = infty_to_p_witness(a, p)?;
        return Ok((
            NormBracket::exact(v, Method::SignEnum),
            Some(Witness::Signs(s)),
        ));
    }
    // ||A||_{q->1} = ||A^T||_{inf->q*}.
    if p.is_one() && a.rows() <= SIGN_ENUM_MAX_COLS {
        let (v, s) = infty_to_p_witness(&a.transpose(), q.dual())?;
        return Ok((
            NormBracket::exact(v, Method::SignEnum),
            Some(Witness::Signs(s)),
        ));
    }
    if q == Exponent::TWO && p == Exponent::TWO {
        return Ok((operator_norm_bracket(a), None));
    }
    if a.cols() <= net::MAX_NET_DIM {
        let (b, w) = net_norm_witness(a, q, p, eps)?;
        return Ok((b, Some(w)));
    }
    if a.rows() <= net::MAX_NET_DIM {
        let (b, w) = net_norm_witness(&a.transpose(), p.dual(), q.dual(), eps)?;
        return Ok((b, Some(w)));
    }
    if q == Exponent::TWO {
        if let Ok(b) = lowrank_norm_two_to_p(a, p, eps) {
            return Ok((b, None));
        }
    }
    if p == Exponent::TWO {
        if let Ok(b) = lowrank_norm_two_to_p(&a.transpose(), q.dual(), eps) {
            return Ok((b, None));
        }
    }
    Err(Error::NoOracle {
        q: q.to_string(),
        p: p.to_string(),
        rows: a.rows(),
        cols: a.cols(),
    })
}
