//! Deterministic epsilon-nets on l_q unit spheres in dimension <= 6.
//!
//! The net is grown by greedy packing over a fixed candidate stream: first
//! the signed basis vectors, then all normalized sign corners, then a
//! low-discrepancy Kronecker sequence in the cube projected radially onto the
//! sphere. A candidate joins the net when it is at least eps away (in l_q)
//! from every current member. Greedy packing over a dense stream gives an
//! empirically covering net while staying fully deterministic; the structured
//! seed points make the max over the net exact for the polytope spheres
//! (q = 1 attains at basis vectors, q = inf at corners).

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::dense::lp_norm;
use crate::error::{Error, Result};
use crate::exponent::Exponent;

pub const MAX_NET_DIM: usize = 6;
pub const MAX_CANDIDATES: usize = 100_000;

#[derive(Debug)]
pub struct Net {
    pub q: Exponent,
    pub dim: usize,
    pub eps: f64,
    pub points: Vec<Vec<f64>>,
}

impl Net {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Positive root of t^{d+1} = t + 1, the base of the d-dimensional Kronecker
/// (R_d) sequence.
fn harmonious(d: usize) -> f64 {
    let mut x = 1.5f64;
    for _ in 0..64 {
        let f = x.powi(d as i32 + 1) - x - 1.0;
        let fp = (d as f64 + 1.0) * x.powi(d as i32) - 1.0;
        x -= f / fp;
    }
    x
}

/// Whether ||v - w||_q >= eps, aborting as soon as the running partial sum
/// (monotone in the coordinates) settles the answer.
fn dist_at_least(v: &[f64], w: &[f64], q: Exponent, eps: f64) -> bool {
    match q {
        Exponent::Infinity => v.iter().zip(w).any(|(a, b)| (a - b).abs() >= eps),
        Exponent::Finite(qv) => {
            let target = eps.powf(qv);
            let mut acc = 0.0;
            for (a, b) in v.iter().zip(w) {
                let d = (a - b).abs();
                acc += if qv == 1.0 {
                    d
                } else if qv == 2.0 {
                    d * d
                } else {
                    d.powf(qv)
                };
                if acc >= target {
                    return true;
                }
            }
            false
        }
    }
}

fn validate(dim: usize, eps: f64) -> Result<()> {
    if dim == 0 || dim > MAX_NET_DIM {
        return Err(Error::guard(
            "net-dimension",
            format!("nets are limited to dimensions 1..={MAX_NET_DIM}, got {dim}"),
        ));
    }
    if !(0.05..=0.5).contains(&eps) {
        return Err(Error::guard(
            "net-eps",
            format!("eps must lie in [0.05, 0.5], got {eps}"),
        ));
    }
    Ok(())
}

pub fn build(q: Exponent, dim: usize, eps: f64) -> Result<Net> {
    validate(dim, eps)?;

    // Cardinality bound ((2+eps)/eps)^dim, saturating.
    let bound = ((2.0 + eps) / eps).powi(dim as i32);
    let cap = if bound >= usize::MAX as f64 {
        usize::MAX
    } else {
        bound.ceil() as usize
    };

    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut candidates = 0usize;
    let mut offer = |v: Vec<f64>, points: &mut Vec<Vec<f64>>| -> bool {
        candidates += 1;
        let far = points.iter().all(|w| dist_at_least(&v, w, q, eps));
        if far && points.len() < cap {
            points.push(v);
        }
        points.len() >= cap || candidates >= MAX_CANDIDATES
    };

    // Signed basis vectors (on every l_q sphere).
    'seed: {
        for i in 0..dim {
            for s in [1.0, -1.0] {
                let mut v = vec![0.0; dim];
                v[i] = s;
                if offer(v, &mut points) {
                    break 'seed;
                }
            }
        }
        // Sign corners, normalized onto the sphere.
        for mask in 0..(1usize << dim) {
            let mut v: Vec<f64> = (0..dim)
                .map(|i| if mask >> i & 1 == 1 { -1.0 } else { 1.0 })
                .collect();
            let norm = lp_norm(&v, q);
            v.iter_mut().for_each(|x| *x /= norm);
            if offer(v, &mut points) {
                break 'seed;
            }
        }
        // Kronecker sequence, centered and projected radially.
        let phi = harmonious(dim);
        let gammas: Vec<f64> = (1..=dim).map(|i| phi.powi(-(i as i32))).collect();
        let mut x = vec![0.5; dim];
        loop {
            for i in 0..dim {
                x[i] = (x[i] + gammas[i]).fract();
            }
            let mut v: Vec<f64> = x.iter().map(|u| 2.0 * u - 1.0).collect();
            let norm = lp_norm(&v, q);
            if norm < 1e-9 {
                continue;
            }
            v.iter_mut().for_each(|t| *t /= norm);
            if offer(v, &mut points) {
                break 'seed;
            }
        }
    }

    Ok(Net {
        q,
        dim,
        eps,
        points,
    })
}

type NetKey = (u64, usize, u64);

fn cache() -> &'static Mutex<HashMap<NetKey, Arc<Net>>> {
    static CACHE: OnceLock<Mutex<HashMap<NetKey, Arc<Net>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

/// Memoized [`build`]; nets depend only on (q, dim, eps), never on the matrix
/// they are evaluated against, so repeated oracle calls share one net.
pub fn cached(q: Exponent, dim: usize, eps: f64) -> Result<Arc<Net>> {
    let key = (q.to_bits(), dim, eps.to_bits());
    if let Some(net) = cache().lock().unwrap().get(&key) {
        return Ok(Arc::clone(net));
    }
    let net = Arc::new(build(q, dim, eps)?);
    cache()
        .lock()
        .unwrap()
        .entry(key)
        .or_insert_with(|| Arc::clone(&net));
    Ok(net)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn guards() {
        assert!(build(Exponent::TWO, 0, 0.1).is_err());
        assert!(build(Exponent::TWO, 7, 0.1).is_err());
        assert!(build(Exponent::TWO, 3, 0.01).is_err());
        assert!(build(Exponent::TWO, 3, 0.7).is_err());
    }

    #[test]
    fn points_lie_on_sphere_and_are_separated() {
        for q in [Exponent::ONE, Exponent::TWO, Exponent::INF] {
            let net = build(q, 3, 0.3).unwrap();
            assert!(!net.is_empty());
            for v in &net.points {
                let n = lp_norm(v, q);
                assert!((n - 1.0).abs() < 1e-9, "point off sphere: |v|_q = {n}");
            }
            for (i, v) in net.points.iter().enumerate() {
                for w in net.points.iter().skip(i + 1) {
                    let d: Vec<f64> = v.iter().zip(w).map(|(a, b)| a - b).collect();
                    assert!(lp_norm(&d, q) >= 0.3 - 1e-12);
                }
            }
        }
    }

    #[test]
    fn respects_cardinality_bound() {
        let eps = 0.5;
        let net = build(Exponent::TWO, 2, eps).unwrap();
        let bound = ((2.0 + eps) / eps).powi(2);
        assert!(net.len() <= bound.ceil() as usize);
    }

    #[test]
    fn contains_basis_directions() {
        let net = build(Exponent::ONE, 4, 0.2).unwrap();
        for i in 0..4 {
            let hit = net.points.iter().any(|v| v[i] == 1.0);
            assert!(hit, "missing +e_{i}");
        }
    }

    #[test]
    fn deterministic_and_cached() {
        let a = build(Exponent::TWO, 2, 0.1).unwrap();
        let b = build(Exponent::TWO, 2, 0.1).unwrap();
        assert_eq!(a.points, b.points);
        let c1 = cached(Exponent::TWO, 2, 0.1).unwrap();
        let c2 = cached(Exponent::TWO, 2, 0.1).unwrap();
        assert!(Arc::ptr_eq(&c1, &c2));
    }

    #[test]
    fn circle_net_covers_reasonably() {
        // In 2D the greedy packing over ~1e5 candidates should bring every
        // direction within eps of the net.
        let net = build(Exponent::TWO, 2, 0.1).unwrap();
        for k in 0..360 {
            let t = k as f64 * std::f64::consts::PI / 180.0;
            let v = [t.cos(), t.sin()];
            let min = net
                .points
                .iter()
                .map(|w| ((v[0] - w[0]).powi(2) + (v[1] - w[1]).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min);
            assert!(min < 0.1, "direction {k} deg is {min} from the net");
        }
    }
}
