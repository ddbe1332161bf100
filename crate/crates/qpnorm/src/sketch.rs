//! Sketching families for matrix q->p norms: a seeded plan describing a
//! linear compression L(A), the k-number state it produces, streaming
//! updates, merging, and the per-family estimators.
//!
//! Payload layouts (row-major throughout):
//! - `one_to_p`: `copies` blocks, block c holding the t x d product S_c A of
//!   that copy's vector sketch with A.
//! - `two_to_p_lowrank`: the e_rows x (beta r) product E (A W), where
//!   W = S^T G^T stacks the subspace embedding and the l2->l1 map.
//! - `blockcol_inf_to_q`: the n x (d/B) product A S for the block-sign
//!   column matrix S.
//! - `blockrow_q_to_p`: `copies` blocks of the (n/B) x d products S_c A for
//!   block-sign row matrices S_c.
//! - `two_to_q_large`: the n x (m/B) block-sign column sketch of A G^T,
//!   G an l2->l1 map with m rows.
//! - `identity`: A itself (the q >= 2, p <= 2 regime where no sublinear
//!   sketch helps).
//! - `gaussian_vec`: a k-row dense Gaussian measurement of vec(A), the
//!   generic linear sketch used by the distinguishing experiments.

use crate::dense::{lp_norm, Matrix};
use crate::embed::{
    self, make_highp_sketch_with, make_ose, make_pstable_sketch, CompiledMap,
    LinearMapDescriptor, MapKind,
};
use crate::error::{Error, Result};
use crate::exponent::Exponent;
use crate::oracles::{self, Witness};
use crate::rng::SeededRng;

pub const DEFAULT_ROWS_PER_COPY: usize = 21;
pub const BLOCK_ENUM_CAP: usize = 20;
pub const LOCAL_SEARCH_RESTARTS: usize = 50;

/// Copies multiplier for `one_to_p`, sized so the per-column median fails
/// with probability at most 1/n^2: ceil(48 / ln(3/2)) = 119.
pub fn default_copies_constant() -> f64 {
    (48.0 / 1.5f64.ln()).ceil()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    OneToP,
    TwoToPLowrank,
    BlockcolInfToQ,
    BlockrowQToP,
    TwoToQLarge,
    Identity,
    GaussianVec,
}

impl Family {
    pub fn as_str(&self) -> &'static str {
        match self {
            Family::OneToP => "one_to_p",
            Family::TwoToPLowrank => "two_to_p_lowrank",
            Family::BlockcolInfToQ => "blockcol_inf_to_q",
            Family::BlockrowQToP => "blockrow_q_to_p",
            Family::TwoToQLarge => "two_to_q_large",
            Family::Identity => "identity",
            Family::GaussianVec => "gaussian_vec",
        }
    }

    pub fn parse(s: &str) -> Result<Family> {
        Ok(match s {
            "one_to_p" => Family::OneToP,
            "two_to_p_lowrank" => Family::TwoToPLowrank,
            "blockcol_inf_to_q" => Family::BlockcolInfToQ,
            "blockrow_q_to_p" => Family::BlockrowQToP,
            "two_to_q_large" => Family::TwoToQLarge,
            "identity" => Family::Identity,
            "gaussian_vec" => Family::GaussianVec,
            other => return Err(Error::Parse(format!("unknown sketch family {other:?}"))),
        })
    }
}

/// Per-copy vector sketch used inside `one_to_p`.
#[derive(Debug, Clone, PartialEq)]
pub enum VectorSketch {
    PStable { rows: usize },
    HighP { buckets: usize, reps: usize, identity: bool },
}

impl VectorSketch {
    fn out_dim(&self, n: usize) -> usize {
        match self {
            VectorSketch::PStable { rows } => *rows,
            VectorSketch::HighP {
                buckets,
                reps,
                identity,
            } => {
                if *identity {
                    n
                } else {
                    buckets * reps
                }
            }
        }
    }
}

/// Fully resolved family parameters; every default has been expanded.
#[derive(Debug, Clone, PartialEq)]
pub enum FamilyPlan {
    OneToP {
        copies: usize,
        per_copy: VectorSketch,
        scale: f64,
    },
    TwoToPLowrank {
        rank: usize,
        ose_rows: usize,
        dv_rows: usize,
        e: VectorSketch,
        scale: f64,
    },
    Blockcol {
        block: usize,
    },
    Blockrow {
        block: usize,
        copies: usize,
    },
    TwoToQLarge {
        dv_rows: usize,
        block: usize,
    },
    Identity,
    GaussianVec {
        rows: usize,
    },
}

/// Tunable knobs with the library defaults; `plan` resolves these into a
/// [`FamilyPlan`].
#[derive(Debug, Clone)]
pub struct PlanOptions {
    /// t, rows of each p-stable copy (odd, >= 7).
    pub rows_per_copy: usize,
    /// c in copies = ceil(c log2 n).
    pub copies_constant: f64,
    /// Rank budget r of the low-rank pipeline.
    pub rank: usize,
    /// OSE rows multiplier C (rows = C r).
    pub ose_mult: usize,
    /// l2->l1 rows multiplier beta (rows = beta r).
    pub beta: usize,
    /// Block size B for the block-sign families.
    pub block: usize,
    /// Leading constant of the max-stability sketch size.
    pub highp_c0: f64,
    /// Failure probability of each high-p copy inside one_to_p.
    pub highp_delta: f64,
    /// Degenerate to the identity when the high-p sketch would have at least
    /// n rows.
    pub highp_identity_fallback: bool,
    /// Expansion of the l2->l1 map inside two_to_q_large.
    pub dvoretzky_expansion: f64,
    /// Row count of gaussian_vec.
    pub k: usize,
    /// Copies override for blockrow (default ceil(log2 n)).
    pub copies: Option<usize>,
}

impl Default for PlanOptions {
    fn default() -> Self {
        PlanOptions {
            rows_per_copy: DEFAULT_ROWS_PER_COPY,
            copies_constant: default_copies_constant(),
            rank: 2,
            ose_mult: 4,
            beta: 2,
            block: 1,
            highp_c0: embed::HIGHP_DEFAULT_C0,
            highp_delta: 1.0 / 3.0,
            highp_identity_fallback: true,
            dvoretzky_expansion: 8.0,
            k: 0,
            copies: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SketchFamilyDescriptor {
    pub n: usize,
    pub d: usize,
    pub p: Exponent,
    pub q: Exponent,
    pub seed: u64,
    pub plan: FamilyPlan,
}

fn lane(seed: u64, idx: u64) -> u64 {
    SeededRng::new(seed).child(idx).seed()
}

impl SketchFamilyDescriptor {
    pub fn family(&self) -> Family {
        match self.plan {
            FamilyPlan::OneToP { .. } => Family::OneToP,
            FamilyPlan::TwoToPLowrank { .. } => Family::TwoToPLowrank,
            FamilyPlan::Blockcol { .. } => Family::BlockcolInfToQ,
            FamilyPlan::Blockrow { .. } => Family::BlockrowQToP,
            FamilyPlan::TwoToQLarge { .. } => Family::TwoToQLarge,
            FamilyPlan::Identity => Family::Identity,
            FamilyPlan::GaussianVec { .. } => Family::GaussianVec,
        }
    }

    /// Total sketch size, a deterministic function of the descriptor.
    pub fn k(&self) -> usize {
        match &self.plan {
            FamilyPlan::OneToP { copies, per_copy, .. } => {
                copies * per_copy.out_dim(self.n) * self.d
            }
            FamilyPlan::TwoToPLowrank { dv_rows, e, .. } => e.out_dim(self.n) * dv_rows,
            FamilyPlan::Blockcol { block } => self.n * (self.d / block),
            FamilyPlan::Blockrow { block, copies } => copies * (self.n / block) * self.d,
            FamilyPlan::TwoToQLarge { dv_rows, block } => self.n * (dv_rows / block),
            FamilyPlan::Identity => self.n * self.d,
            FamilyPlan::GaussianVec { rows } => *rows,
        }
    }

    /// FNV-1a hash of every descriptor field; states carry this so that only
    /// states of the same plan can merge or stream together.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Fnv::new();
        h.word(match self.family() {
            Family::OneToP => 1,
            Family::TwoToPLowrank => 2,
            Family::BlockcolInfToQ => 3,
            Family::BlockrowQToP => 4,
            Family::TwoToQLarge => 5,
            Family::Identity => 6,
            Family::GaussianVec => 7,
        });
        h.word(self.n as u64);
        h.word(self.d as u64);
        h.word(self.p.to_bits());
        h.word(self.q.to_bits());
        h.word(self.seed);
        match &self.plan {
            FamilyPlan::OneToP {
                copies,
                per_copy,
                scale,
            } => {
                h.word(*copies as u64);
                match per_copy {
                    VectorSketch::PStable { rows } => {
                        h.word(10);
                        h.word(*rows as u64);
                    }
                    VectorSketch::HighP {
                        buckets,
                        reps,
                        identity,
                    } => {
                        h.word(11);
                        h.word(*buckets as u64);
                        h.word(*reps as u64);
                        h.word(*identity as u64);
                    }
                }
                h.word(scale.to_bits());
            }
            FamilyPlan::TwoToPLowrank {
                rank,
                ose_rows,
                dv_rows,
                e,
                scale,
            } => {
                h.word(*rank as u64);
                h.word(*ose_rows as u64);
                h.word(*dv_rows as u64);
                if let VectorSketch::HighP {
                    buckets,
                    reps,
                    identity,
                } = e
                {
                    h.word(*buckets as u64);
                    h.word(*reps as u64);
                    h.word(*identity as u64);
                }
                h.word(scale.to_bits());
            }
            FamilyPlan::Blockcol { block } => h.word(*block as u64),
            FamilyPlan::Blockrow { block, copies } => {
                h.word(*block as u64);
                h.word(*copies as u64);
            }
            FamilyPlan::TwoToQLarge { dv_rows, block } => {
                h.word(*dv_rows as u64);
                h.word(*block as u64);
            }
            FamilyPlan::Identity => {}
            FamilyPlan::GaussianVec { rows } => h.word(*rows as u64),
        }
        h.finish()
    }
}

struct Fnv(u64);

impl Fnv {
    fn new() -> Fnv {
        Fnv(0xcbf29ce484222325)
    }
    fn word(&mut self, w: u64) {
        for byte in w.to_le_bytes() {
            self.0 ^= byte as u64;
            self.0 = self.0.wrapping_mul(0x100000001b3);
        }
    }
    fn finish(&self) -> u64 {
        self.0
    }
}

/// Resolve a family plan. Guards are named after the violated precondition.
pub fn plan(
    family: Family,
    n: usize,
    d: usize,
    p: Exponent,
    q: Exponent,
    seed: u64,
    opts: &PlanOptions,
) -> Result<SketchFamilyDescriptor> {
    if n == 0 || d == 0 {
        return Err(Error::guard("matrix-dims", format!("got {n}x{d}")));
    }
    let plan = match family {
        Family::OneToP => {
            let copies = ((opts.copies_constant * (n as f64).log2()).ceil() as usize).max(1);
            let per_copy = match p {
                Exponent::Finite(v) if v <= 2.0 => {
                    // Validation of t via the embedding constructor.
                    make_pstable_sketch(seed, p, opts.rows_per_copy, n)?;
                    VectorSketch::PStable {
                        rows: opts.rows_per_copy,
                    }
                }
                _ => {
                    let desc = make_highp_sketch_with(
                        seed,
                        p,
                        n,
                        opts.highp_delta,
                        opts.highp_c0,
                        opts.highp_identity_fallback,
                    )?;
                    let MapKind::HighP {
                        buckets,
                        reps,
                        identity,
                        ..
                    } = desc.kind
                    else {
                        unreachable!()
                    };
                    VectorSketch::HighP {
                        buckets,
                        reps,
                        identity,
                    }
                }
            };
            let scale = embed::calibrate(p, 20_000, lane(seed, 50))?.median_scale;
            FamilyPlan::OneToP {
                copies,
                per_copy,
                scale,
            }
        }
        Family::TwoToPLowrank => {
            match p {
                Exponent::Finite(v) if v > 2.0 => {}
                Exponent::Infinity => {}
                _ => {
                    return Err(Error::guard(
                        "lowrank-exponent",
                        format!("two_to_p_lowrank needs p > 2, got {p}"),
                    ))
                }
            }
            let r = opts.rank;
            if r == 0 || r > oracles::LOWRANK_MAX_RANK {
                return Err(Error::guard(
                    "lowrank-rank",
                    format!("rank budget must lie in 1..={}, got {r}", oracles::LOWRANK_MAX_RANK),
                ));
            }
            let dv_rows = opts.beta * r;
            if dv_rows > 20 {
                return Err(Error::guard(
                    "lowrank-enumeration",
                    format!("beta*r must be at most 20, got {dv_rows}"),
                ));
            }
            let delta = 2f64.powi(-(2 * dv_rows as i32));
            let e_desc = make_highp_sketch_with(
                seed,
                p,
                n,
                delta,
                opts.highp_c0,
                opts.highp_identity_fallback,
            )?;
            let MapKind::HighP {
                buckets,
                reps,
                identity,
                ..
            } = e_desc.kind
            else {
                unreachable!()
            };
            let scale = embed::calibrate(p, 20_000, lane(seed, 50))?.median_scale;
            FamilyPlan::TwoToPLowrank {
                rank: r,
                ose_rows: opts.ose_mult * r,
                dv_rows,
                e: VectorSketch::HighP {
                    buckets,
                    reps,
                    identity,
                },
                scale,
            }
        }
        Family::BlockcolInfToQ => {
            if opts.block == 0 || d % opts.block != 0 {
                return Err(Error::guard(
                    "blockcol-divisibility",
                    format!("block size {} must divide the column count {d}", opts.block),
                ));
            }
            FamilyPlan::Blockcol { block: opts.block }
        }
        Family::BlockrowQToP => {
            if opts.block == 0 || n % opts.block != 0 {
                return Err(Error::guard(
                    "blockrow-divisibility",
                    format!("block size {} must divide the row count {n}", opts.block),
                ));
            }
            let copies = opts
                .copies
                .unwrap_or(((n as f64).log2().ceil() as usize).max(1));
            FamilyPlan::Blockrow {
                block: opts.block,
                copies,
            }
        }
        Family::TwoToQLarge => {
            if q.as_f64() < 2.0 {
                return Err(Error::guard(
                    "large-q",
                    format!("two_to_q_large needs q >= 2, got {q}"),
                ));
            }
            let dv_rows = (opts.dvoretzky_expansion * d as f64).ceil() as usize;
            if opts.block == 0 || dv_rows % opts.block != 0 {
                return Err(Error::guard(
                    "large-divisibility",
                    format!(
                        "block size {} must divide the embedded column count {dv_rows}",
                        opts.block
                    ),
                ));
            }
            FamilyPlan::TwoToQLarge {
                dv_rows,
                block: opts.block,
            }
        }
        Family::Identity => FamilyPlan::Identity,
        Family::GaussianVec => {
            if opts.k == 0 {
                return Err(Error::guard(
                    "gaussian-vec-rows",
                    "gaussian_vec needs an explicit row count k >= 1",
                ));
            }
            FamilyPlan::GaussianVec { rows: opts.k }
        }
    };
    Ok(SketchFamilyDescriptor {
        n,
        d,
        p,
        q,
        seed,
        plan,
    })
}

/// The k numbers L(A) with the provenance fingerprint of their plan.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchState {
    fingerprint: u64,
    payload: Vec<f64>,
}

impl SketchState {
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn payload(&self) -> &[f64] {
        &self.payload
    }
}

#[derive(Debug, Clone)]
pub struct EstimateResult {
    pub value: f64,
    pub family: Family,
    pub witness: Option<Witness>,
    /// Set when the estimator had to fall back to local search and can only
    /// certify a lower bound on its internal maximum.
    pub lower_bound_only: bool,
}

/// Entrywise sum of two states of the same plan.
pub fn merge(s1: &SketchState, s2: &SketchState) -> Result<SketchState> {
    if s1.fingerprint != s2.fingerprint {
        return Err(Error::FingerprintMismatch {
            expected: s1.fingerprint,
            got: s2.fingerprint,
        });
    }
    let payload = s1
        .payload
        .iter()
        .zip(&s2.payload)
        .map(|(a, b)| a + b)
        .collect();
    Ok(SketchState {
        fingerprint: s1.fingerprint,
        payload,
    })
}

/// Materialized sketching operator: build once, then apply, stream, and
/// estimate any number of states.
pub struct Sketcher {
    desc: SketchFamilyDescriptor,
    maps: Maps,
}

enum Maps {
    OneToP { copies: Vec<CompiledMap> },
    Lowrank { w: Matrix, e: CompiledMap },
    Blockcol { signs: Vec<f64> },
    Blockrow { signs: Vec<Vec<f64>> },
    TwoToQLarge { g: Matrix, signs: Vec<f64> },
    Identity,
    GaussianVec { l: Matrix },
}

impl Sketcher {
    pub fn new(desc: &SketchFamilyDescriptor) -> Result<Sketcher> {
        let maps = match &desc.plan {
            FamilyPlan::OneToP {
                copies, per_copy, ..
            } => {
                let compiled = (0..*copies)
                    .map(|c| compile_vector_sketch(per_copy, desc, lane(desc.seed, 100 + c as u64)))
                    .collect::<Result<Vec<_>>>()?;
                Maps::OneToP { copies: compiled }
            }
            FamilyPlan::TwoToPLowrank {
                ose_rows,
                dv_rows,
                e,
                ..
            } => {
                let s = make_ose(lane(desc.seed, 1), *ose_rows, desc.d)?.materialize();
                let g = embed::gaussian_lp_map(
                    lane(desc.seed, 2),
                    Exponent::ONE,
                    *dv_rows,
                    *ose_rows,
                )?
                .materialize();
                let w = g.matmul(&s)?.transpose();
                let e = compile_vector_sketch(e, desc, lane(desc.seed, 3))?;
                Maps::Lowrank { w, e }
            }
            FamilyPlan::Blockcol { .. } => {
                let mut rng = SeededRng::new(lane(desc.seed, 1));
                Maps::Blockcol {
                    signs: (0..desc.d).map(|_| rng.sign()).collect(),
                }
            }
            FamilyPlan::Blockrow { copies, .. } => {
                let signs = (0..*copies)
                    .map(|c| {
                        let mut rng = SeededRng::new(lane(desc.seed, 200 + c as u64));
                        (0..desc.n).map(|_| rng.sign()).collect()
                    })
                    .collect();
                Maps::Blockrow { signs }
            }
            FamilyPlan::TwoToQLarge { dv_rows, .. } => {
                let g = embed::gaussian_lp_map(
                    lane(desc.seed, 1),
                    Exponent::ONE,
                    *dv_rows,
                    desc.d,
                )?
                .materialize();
                let mut rng = SeededRng::new(lane(desc.seed, 2));
                Maps::TwoToQLarge {
                    g,
                    signs: (0..*dv_rows).map(|_| rng.sign()).collect(),
                }
            }
            FamilyPlan::Identity => Maps::Identity,
            FamilyPlan::GaussianVec { rows } => {
                let mut rng = SeededRng::new(lane(desc.seed, 1));
                let s = (*rows as f64).sqrt().recip();
                Maps::GaussianVec {
                    l: Matrix::from_fn(*rows, desc.n * desc.d, |_, _| s * rng.gaussian()),
                }
            }
        };
        Ok(Sketcher {
            desc: desc.clone(),
            maps,
        })
    }

    pub fn descriptor(&self) -> &SketchFamilyDescriptor {
        &self.desc
    }

    fn check_dims(&self, a: &Matrix) -> Result<()> {
        if a.rows() != self.desc.n || a.cols() != self.desc.d {
            return Err(Error::DimMismatch(format!(
                "descriptor expects {}x{}, matrix is {}x{}",
                self.desc.n,
                self.desc.d,
                a.rows(),
                a.cols()
            )));
        }
        Ok(())
    }

    pub fn apply(&self, a: &Matrix) -> Result<SketchState> {
        self.check_dims(a)?;
        let d = self.desc.d;
        let n = self.desc.n;
        let payload = match (&self.maps, &self.desc.plan) {
            (Maps::OneToP { copies }, FamilyPlan::OneToP { .. }) => {
                let mut payload = Vec::with_capacity(self.desc.k());
                let cols: Vec<Vec<f64>> = (0..d).map(|j| a.col(j)).collect();
                for map in copies {
                    let t = map.out_dim();
                    let mut block = vec![0.0; t * d];
                    for (j, col) in cols.iter().enumerate() {
                        for (r, v) in map.apply(col).into_iter().enumerate() {
                            block[r * d + j] = v;
                        }
                    }
                    payload.extend_from_slice(&block);
                }
                payload
            }
            (Maps::Lowrank { w, e }, FamilyPlan::TwoToPLowrank { dv_rows, .. }) => {
                let aw = a.matmul(w)?;
                let mut payload = vec![0.0; e.out_dim() * dv_rows];
                for c2 in 0..*dv_rows {
                    let col = aw.col(c2);
                    for (r, v) in e.apply(&col).into_iter().enumerate() {
                        payload[r * dv_rows + c2] = v;
                    }
                }
                payload
            }
            (Maps::Blockcol { signs }, FamilyPlan::Blockcol { block }) => {
                let cols_out = d / block;
                let mut payload = vec![0.0; n * cols_out];
                for i in 0..n {
                    for j in 0..d {
                        payload[i * cols_out + j / block] += signs[j] * a.get(i, j);
                    }
                }
                payload
            }
            (Maps::Blockrow { signs }, FamilyPlan::Blockrow { block, copies }) => {
                let rows_out = n / block;
                let mut payload = vec![0.0; copies * rows_out * d];
                for (c, sc) in signs.iter().enumerate() {
                    let off = c * rows_out * d;
                    for i in 0..n {
                        let b = i / block;
                        for j in 0..d {
                            payload[off + b * d + j] += sc[i] * a.get(i, j);
                        }
                    }
                }
                payload
            }
            (Maps::TwoToQLarge { g, signs }, FamilyPlan::TwoToQLarge { dv_rows, block }) => {
                let t = a.matmul(&g.transpose())?;
                let cols_out = dv_rows / block;
                let mut payload = vec![0.0; n * cols_out];
                for i in 0..n {
                    for j in 0..*dv_rows {
                        payload[i * cols_out + j / block] += signs[j] * t.get(i, j);
                    }
                }
                payload
            }
            (Maps::Identity, _) => a.entries().to_vec(),
            (Maps::GaussianVec { l }, _) => l.apply_unchecked(a.entries()),
            _ => unreachable!("maps match the plan by construction"),
        };
        Ok(SketchState {
            fingerprint: self.desc.fingerprint(),
            payload,
        })
    }

    /// In-place streaming update: the state becomes L(A + delta e_ij).
    pub fn update(&self, state: &mut SketchState, i: usize, j: usize, delta: f64) -> Result<()> {
        let fp = self.desc.fingerprint();
        if state.fingerprint != fp {
            return Err(Error::FingerprintMismatch {
                expected: fp,
                got: state.fingerprint,
            });
        }
        let (n, d) = (self.desc.n, self.desc.d);
        if i >= n || j >= d {
            return Err(Error::DimMismatch(format!(
                "update index ({i}, {j}) out of range for {n}x{d}"
            )));
        }
        match (&self.maps, &self.desc.plan) {
            (Maps::OneToP { copies }, FamilyPlan::OneToP { .. }) => {
                let mut off = 0;
                for map in copies {
                    let t = map.out_dim();
                    for (r, coeff) in map.column(i) {
                        state.payload[off + r * d + j] += delta * coeff;
                    }
                    off += t * d;
                }
            }
            (Maps::Lowrank { w, e }, FamilyPlan::TwoToPLowrank { dv_rows, .. }) => {
                let ecol = e.column(i);
                for c2 in 0..*dv_rows {
                    let coef = delta * w.get(j, c2);
                    for &(r, ev) in &ecol {
                        state.payload[r * dv_rows + c2] += coef * ev;
                    }
                }
            }
            (Maps::Blockcol { signs }, FamilyPlan::Blockcol { block }) => {
                let cols_out = d / block;
                state.payload[i * cols_out + j / block] += delta * signs[j];
            }
            (Maps::Blockrow { signs }, FamilyPlan::Blockrow { block, copies: _ }) => {
                let rows_out = n / block;
                for (c, sc) in signs.iter().enumerate() {
                    state.payload[c * rows_out * d + (i / block) * d + j] += delta * sc[i];
                }
            }
            (Maps::TwoToQLarge { g, signs }, FamilyPlan::TwoToQLarge { dv_rows, block }) => {
                let cols_out = dv_rows / block;
                for l_idx in 0..*dv_rows {
                    state.payload[i * cols_out + l_idx / block] +=
                        delta * signs[l_idx] * g.get(l_idx, j);
                }
            }
            (Maps::Identity, _) => state.payload[i * d + j] += delta,
            (Maps::GaussianVec { l }, _) => {
                let col = i * d + j;
                for r in 0..l.rows() {
                    state.payload[r] += delta * l.get(r, col);
                }
            }
            _ => unreachable!(),
        }
        Ok(())
    }

    /// The uncompressed low-rank pipeline matrix A W; lets callers re-check a
    /// sign witness against the estimator chain.
    pub fn pipeline_matrix(&self, a: &Matrix) -> Result<Matrix> {
        match &self.maps {
            Maps::Lowrank { w, .. } => {
                self.check_dims(a)?;
                a.matmul(w)
            }
            _ => Err(Error::guard(
                "pipeline-matrix",
                "only the low-rank family exposes its pipeline matrix",
            )),
        }
    }

    pub fn estimate(&self, state: &SketchState) -> Result<EstimateResult> {
        let fp = self.desc.fingerprint();
        if state.fingerprint != fp {
            return Err(Error::FingerprintMismatch {
                expected: fp,
                got: state.fingerprint,
            });
        }
        let d = self.desc.d;
        let n = self.desc.n;
        let family = self.desc.family();
        match (&self.maps, &self.desc.plan) {
            (
                Maps::OneToP { copies },
                FamilyPlan::OneToP {
                    per_copy, scale, ..
                },
            ) => {
                let t = per_copy.out_dim(n);
                let mut best = f64::NEG_INFINITY;
                let mut arg = 0;
                let mut buf = vec![0.0; t];
                let mut per_copy_est = Vec::with_capacity(copies.len());
                for j in 0..d {
                    per_copy_est.clear();
                    for (c, _) in copies.iter().enumerate() {
                        let off = c * t * d;
                        for r in 0..t {
                            buf[r] = state.payload[off + r * d + j];
                        }
                        per_copy_est.push(vector_estimate(&buf, per_copy, self.desc.p, *scale));
                    }
                    per_copy_est.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    let med = per_copy_est[per_copy_est.len() / 2];
                    if med > best {
                        best = med;
                        arg = j;
                    }
                }
                Ok(EstimateResult {
                    value: best,
                    family,
                    witness: Some(Witness::Column(arg)),
                    lower_bound_only: false,
                })
            }
            (
                Maps::Lowrank { .. },
                FamilyPlan::TwoToPLowrank {
                    dv_rows, e, scale, ..
                },
            ) => {
                let e_out = e.out_dim(n);
                let cols: Vec<Vec<f64>> = (0..*dv_rows)
                    .map(|c2| {
                        (0..e_out)
                            .map(|r| state.payload[r * dv_rows + c2])
                            .collect()
                    })
                    .collect();
                // Gray-code walk over sign vectors with rank-one updates;
                // the estimator is symmetric under z -> -z, so the first
                // sign stays positive.
                let mut signs = vec![1i8; *dv_rows];
                let mut z: Vec<f64> = (0..e_out)
                    .map(|r| cols.iter().map(|c| c[r]).sum())
                    .collect();
                let mut best = vector_estimate(&z, e, self.desc.p, *scale);
                let mut best_signs = signs.clone();
                if *dv_rows > 1 {
                    let steps = 1u64 << (dv_rows - 1);
                    for kk in 1..steps {
                        let flip = kk.trailing_zeros() as usize + 1;
                        signs[flip] = -signs[flip];
                        let coeff = 2.0 * signs[flip] as f64;
                        for (zr, cr) in z.iter_mut().zip(&cols[flip]) {
                            *zr += coeff * cr;
                        }
                        let est = vector_estimate(&z, e, self.desc.p, *scale);
                        if est > best {
                            best = est;
                            best_signs = signs.clone();
                        }
                    }
                }
                Ok(EstimateResult {
                    value: best,
                    family,
                    witness: Some(Witness::Signs(best_signs)),
                    lower_bound_only: false,
                })
            }
            (Maps::Blockcol { .. }, FamilyPlan::Blockcol { block }) => self.estimate_sign_max(
                state,
                d / block,
                self.desc.q,
                family,
            ),
            (
                Maps::Blockrow { .. },
                FamilyPlan::Blockrow { block, copies },
            ) => {
                let rows_out = n / block;
                // Per block, keep the copy whose row has the median l_p norm
                // (the per-block contribution), then hand the reduced matrix
                // to an exact oracle.
                let mut reduced = Matrix::zeros(rows_out, d);
                for b in 0..rows_out {
                    let mut by_norm: Vec<(f64, usize)> = (0..*copies)
                        .map(|c| {
                            let off = c * rows_out * d + b * d;
                            let row = &state.payload[off..off + d];
                            (lp_norm(row, self.desc.p), c)
                        })
                        .collect();
                    by_norm.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    let chosen = by_norm[by_norm.len() / 2].1;
                    let off = chosen * rows_out * d + b * d;
                    for j in 0..d {
                        reduced.set(b, j, state.payload[off + j]);
                    }
                }
                let (value, witness) = reduced_exact_norm(&reduced, self.desc.q, self.desc.p)?;
                Ok(EstimateResult {
                    value,
                    family,
                    witness,
                    lower_bound_only: false,
                })
            }
            (Maps::TwoToQLarge { .. }, FamilyPlan::TwoToQLarge { dv_rows, block }) => self
                .estimate_sign_max(
                    state,
                    dv_rows / block,
                    self.desc.q,
                    family,
                ),
            (Maps::Identity, _) => {
                let a = Matrix::new(n, d, state.payload.clone())?;
                let (bracket, witness) = oracles::best_oracle(&a, self.desc.q, self.desc.p, 0.25)?;
                let value = if bracket.method.is_exact() {
                    bracket.lower
                } else {
                    bracket.midpoint()
                };
                Ok(EstimateResult {
                    value,
                    family,
                    witness,
                    lower_bound_only: false,
                })
            }
            (Maps::GaussianVec { .. }, _) => Ok(EstimateResult {
                value: lp_norm(&state.payload, Exponent::TWO),
                family,
                witness: None,
                lower_bound_only: false,
            }),
            _ => unreachable!(),
        }
    }

    /// max over sign vectors of || payload . x ||_q, exact by enumeration up
    /// to [`BLOCK_ENUM_CAP`] reduced columns, greedy local search with
    /// restarts beyond (a certified lower bound on the inner maximum).
    fn estimate_sign_max(
        &self,
        state: &SketchState,
        cols_out: usize,
        q: Exponent,
        family: Family,
    ) -> Result<EstimateResult> {
        let n = self.desc.n;
        let m = Matrix::new(n, cols_out, state.payload.clone())?;
        if cols_out <= BLOCK_ENUM_CAP {
            let (value, signs) = oracles::infty_to_p_witness(&m, q)?;
            return Ok(EstimateResult {
                value,
                family,
                witness: Some(Witness::Signs(signs)),
                lower_bound_only: false,
            });
        }
        let cols: Vec<Vec<f64>> = (0..cols_out).map(|j| m.col(j)).collect();
        let mut best = f64::NEG_INFINITY;
        let mut best_signs = vec![1i8; cols_out];
        let base = SeededRng::new(lane(self.desc.seed, 0xA5));
        for restart in 0..LOCAL_SEARCH_RESTARTS {
            let mut rng = base.child(restart as u64);
            let mut signs: Vec<i8> = (0..cols_out)
                .map(|_| if rng.sign() > 0.0 { 1 } else { -1 })
                .collect();
            let mut y: Vec<f64> = (0..n)
                .map(|r| {
                    cols.iter()
                        .zip(&signs)
                        .map(|(c, s)| *s as f64 * c[r])
                        .sum()
                })
                .collect();
            let mut value = lp_norm(&y, q);
            loop {
                let mut improved = false;
                for j in 0..cols_out {
                    let coeff = -2.0 * signs[j] as f64;
                    let trial: Vec<f64> =
                        y.iter().zip(&cols[j]).map(|(v, c)| v + coeff * c).collect();
                    let tv = lp_norm(&trial, q);
                    if tv > value * (1.0 + 1e-12) {
                        signs[j] = -signs[j];
                        y = trial;
                        value = tv;
                        improved = true;
                    }
                }
                if !improved {
                    break;
                }
            }
            if value > best {
                best = value;
                best_signs = signs;
            }
        }
        Ok(EstimateResult {
            value: best,
            family,
            witness: Some(Witness::Signs(best_signs)),
            lower_bound_only: true,
        })
    }
}

fn compile_vector_sketch(
    vs: &VectorSketch,
    desc: &SketchFamilyDescriptor,
    seed: u64,
) -> Result<CompiledMap> {
    let n = desc.n;
    let map = match vs {
        VectorSketch::PStable { rows } => make_pstable_sketch(seed, desc.p, *rows, n)?,
        VectorSketch::HighP {
            buckets,
            reps,
            identity,
        } => LinearMapDescriptor {
            kind: MapKind::HighP {
                p: desc.p,
                buckets: *buckets,
                reps: *reps,
                identity: *identity,
            },
            out_dim: if *identity { n } else { buckets * reps },
            in_dim: n,
            seed,
        },
    };
    Ok(map.compile())
}

/// One vector-sketch estimate: median-of-|coordinates| for p-stable maps,
/// median-of-max-bucket for max-stability maps, exact norm for the identity
/// fallback.
fn vector_estimate(y: &[f64], vs: &VectorSketch, p: Exponent, scale: f64) -> f64 {
    match vs {
        VectorSketch::PStable { .. } => {
            let mut abs: Vec<f64> = y.iter().map(|v| v.abs()).collect();
            abs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            abs[abs.len() / 2] / scale
        }
        VectorSketch::HighP {
            buckets,
            reps,
            identity,
        } => {
            if *identity {
                return lp_norm(y, p);
            }
            let mut maxes: Vec<f64> = (0..*reps)
                .map(|r| lp_norm(&y[r * buckets..(r + 1) * buckets], Exponent::INF))
                .collect();
            maxes.sort_by(|a, b| a.partial_cmp(b).unwrap());
            maxes[maxes.len() / 2] / scale
        }
    }
}

/// Exact oracle dispatch for the reduced matrix of a block-row sketch.
fn reduced_exact_norm(
    m: &Matrix,
    q: Exponent,
    p: Exponent,
) -> Result<(f64, Option<Witness>)> {
    if q.is_one() {
        let (v, j) = oracles::one_to_p_witness(m, p);
        return Ok((v, Some(Witness::Column(j))));
    }
    if p.is_infinite() {
        let (v, i) = oracles::q_to_infty_witness(m, q);
        return Ok((v, Some(Witness::Row(i))));
    }
    if q.is_infinite() {
        let (v, s) = oracles::infty_to_p_witness(m, p)?;
        return Ok((v, Some(Witness::Signs(s))));
    }
    if q == Exponent::TWO && p == Exponent::TWO {
        return Ok((oracles::operator_norm(m), None));
    }
    Err(Error::guard(
        "blockrow-oracle",
        format!("no exact oracle for the reduced matrix at q={q} p={p}"),
    ))
}

/// Convenience wrappers matching the one-shot call layout; repeated work
/// should hold a [`Sketcher`] instead.
pub fn apply(desc: &SketchFamilyDescriptor, a: &Matrix) -> Result<SketchState> {
    Sketcher::new(desc)?.apply(a)
}

pub fn update(
    desc: &SketchFamilyDescriptor,
    state: &SketchState,
    i: usize,
    j: usize,
    delta: f64,
) -> Result<SketchState> {
    let sk = Sketcher::new(desc)?;
    let mut out = state.clone();
    sk.update(&mut out, i, j, delta)?;
    Ok(out)
}

pub fn estimate(desc: &SketchFamilyDescriptor, state: &SketchState) -> Result<EstimateResult> {
    Sketcher::new(desc)?.estimate(state)
}

/// State file: header "family n d p q seed k", then one payload value per
/// line. Plans are reconstructed from the header (defaults plus whichever of
/// r/B/k the size pins down), so only default-shaped plans round-trip.
pub fn state_to_text(desc: &SketchFamilyDescriptor, state: &SketchState) -> String {
    use std::fmt::Write as _;
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{} {} {} {} {} {} {}",
        desc.family().as_str(),
        desc.n,
        desc.d,
        desc.p,
        desc.q,
        desc.seed,
        desc.k()
    );
    for v in &state.payload {
        let _ = writeln!(s, "{v}");
    }
    s
}

pub fn state_from_text(text: &str) -> Result<(SketchFamilyDescriptor, SketchState)> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty state file".into()))?;
    let tok: Vec<&str> = header.split_whitespace().collect();
    if tok.len() != 7 {
        return Err(Error::Parse(format!("bad state header {header:?}")));
    }
    let family = Family::parse(tok[0])?;
    let n: usize = tok[1]
        .parse()
        .map_err(|_| Error::Parse(format!("bad n {:?}", tok[1])))?;
    let d: usize = tok[2]
        .parse()
        .map_err(|_| Error::Parse(format!("bad d {:?}", tok[2])))?;
    let p: Exponent = tok[3].parse()?;
    let q: Exponent = tok[4].parse()?;
    let seed: u64 = tok[5]
        .parse()
        .map_err(|_| Error::Parse(format!("bad seed {:?}", tok[5])))?;
    let k: usize = tok[6]
        .parse()
        .map_err(|_| Error::Parse(format!("bad k {:?}", tok[6])))?;

    let desc = reconstruct(family, n, d, p, q, seed, k)?;
    let mut payload = Vec::with_capacity(k);
    for line in lines {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let v: f64 = line
            .parse()
            .map_err(|_| Error::Parse(format!("bad payload value {line:?}")))?;
        if !v.is_finite() {
            return Err(Error::NonFinite("sketch payload".into()));
        }
        payload.push(v);
    }
    if payload.len() != k {
        return Err(Error::Parse(format!(
            "state header promises k={k} values, found {}",
            payload.len()
        )));
    }
    let state = SketchState {
        fingerprint: desc.fingerprint(),
        payload,
    };
    Ok((desc, state))
}

/// Rebuild a descriptor from the state header. Every free parameter is
/// either a library default or pinned by k.
fn reconstruct(
    family: Family,
    n: usize,
    d: usize,
    p: Exponent,
    q: Exponent,
    seed: u64,
    k: usize,
) -> Result<SketchFamilyDescriptor> {
    let mut opts = PlanOptions::default();
    match family {
        Family::OneToP => {
            let desc = plan(family, n, d, p, q, seed, &opts)?;
            if desc.k() == k {
                return Ok(desc);
            }
            // Non-default t (p <= 2 only): copies and d pin it.
            if matches!(p, Exponent::Finite(v) if v <= 2.0) {
                let copies = ((opts.copies_constant * (n as f64).log2()).ceil() as usize).max(1);
                if k % (copies * d) == 0 {
                    opts.rows_per_copy = k / (copies * d);
                    let desc = plan(family, n, d, p, q, seed, &opts)?;
                    if desc.k() == k {
                        return Ok(desc);
                    }
                }
            }
        }
        Family::TwoToPLowrank => {
            for r in 1..=oracles::LOWRANK_MAX_RANK {
                opts.rank = r;
                if let Ok(desc) = plan(family, n, d, p, q, seed, &opts) {
                    if desc.k() == k {
                        return Ok(desc);
                    }
                }
            }
        }
        Family::BlockcolInfToQ => {
            if k > 0 && k % n == 0 && d % (k / n) == 0 {
                opts.block = d / (k / n);
                let desc = plan(family, n, d, p, q, seed, &opts)?;
                if desc.k() == k {
                    return Ok(desc);
                }
            }
        }
        Family::BlockrowQToP => {
            let copies = ((n as f64).log2().ceil() as usize).max(1);
            if k > 0 && k % (copies * d) == 0 {
                let rows_out = k / (copies * d);
                if rows_out > 0 && n % rows_out == 0 {
                    opts.block = n / rows_out;
                    let desc = plan(family, n, d, p, q, seed, &opts)?;
                    if desc.k() == k {
                        return Ok(desc);
                    }
                }
            }
        }
        Family::TwoToQLarge => {
            let dv_rows = (opts.dvoretzky_expansion * d as f64).ceil() as usize;
            if k > 0 && k % n == 0 && dv_rows % (k / n) == 0 {
                opts.block = dv_rows / (k / n);
                let desc = plan(family, n, d, p, q, seed, &opts)?;
                if desc.k() == k {
                    return Ok(desc);
                }
            }
        }
        Family::Identity => {
            let desc = plan(family, n, d, p, q, seed, &opts)?;
            if desc.k() == k {
                return Ok(desc);
            }
        }
        Family::GaussianVec => {
            opts.k = k;
            let desc = plan(family, n, d, p, q, seed, &opts)?;
            if desc.k() == k {
                return Ok(desc);
            }
        }
    }
    Err(Error::Parse(format!(
        "cannot reconstruct a {} plan with k={k} from the header",
        family.as_str()
    )))
}

pub fn write_state(
    desc: &SketchFamilyDescriptor,
    state: &SketchState,
    path: &std::path::Path,
) -> Result<()> {
    std::fs::write(path, state_to_text(desc, state))?;
    Ok(())
}

pub fn read_state(path: &std::path::Path) -> Result<(SketchFamilyDescriptor, SketchState)> {
    state_from_text(&std::fs::read_to_string(path)?)
}
