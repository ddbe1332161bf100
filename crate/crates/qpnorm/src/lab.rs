//! Planted-distribution experiments: samplers for null/planted Gaussian
//! ensembles, exact-oracle separation measurements, and sketch-based
//! distinguishers whose success rate probes how much a sketch dimension k
//! can see.

use std::fmt::Write as _;

use crate::dense::{lp_norm, Matrix};
use crate::embed::gaussian_lp_map;
use crate::error::{Error, Result};
use crate::exponent::Exponent;
use crate::oracles;
use crate::rng::SeededRng;
use crate::sketch::{SketchFamilyDescriptor, Sketcher};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DistKind {
    G1Dense,
    G2Column,
    G2Entry,
    DiagNull,
    DiagPlanted,
    RankrNull,
    RankrPlanted,
}

impl DistKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            DistKind::G1Dense => "g1_dense",
            DistKind::G2Column => "g2_column",
            DistKind::G2Entry => "g2_entry",
            DistKind::DiagNull => "diag_null",
            DistKind::DiagPlanted => "diag_planted",
            DistKind::RankrNull => "rankr_null",
            DistKind::RankrPlanted => "rankr_planted",
        }
    }

    pub fn parse(s: &str) -> Result<DistKind> {
        Ok(match s {
            "g1_dense" => DistKind::G1Dense,
            "g2_column" => DistKind::G2Column,
            "g2_entry" => DistKind::G2Entry,
            "diag_null" => DistKind::DiagNull,
            "diag_planted" => DistKind::DiagPlanted,
            "rankr_null" => DistKind::RankrNull,
            "rankr_planted" => DistKind::RankrPlanted,
            other => return Err(Error::Parse(format!("unknown distribution kind {other:?}"))),
        })
    }

    pub fn is_planted(&self) -> bool {
        matches!(
            self,
            DistKind::G2Column | DistKind::G2Entry | DistKind::DiagPlanted | DistKind::RankrPlanted
        )
    }
}

/// A distribution over matrices. The planted kinds add a hidden spike scaled
/// by `alpha`; with `alpha = 0` they fall through to their null counterpart
/// bit for bit (no extra draws are consumed).
#[derive(Debug, Clone, PartialEq)]
pub struct DistributionSpec {
    pub kind: DistKind,
    pub n: usize,
    pub d: usize,
    pub r: usize,
    pub alpha: f64,
    /// Target separation constant carried alongside alpha; informational.
    pub kappa: f64,
    pub p: Exponent,
    pub q: Exponent,
}

impl DistributionSpec {
    pub fn new(kind: DistKind, n: usize, d: usize) -> DistributionSpec {
        DistributionSpec {
            kind,
            n,
            d,
            r: 1,
            alpha: 0.0,
            kappa: 0.0,
            p: Exponent::TWO,
            q: Exponent::ONE,
        }
    }

    pub fn with_alpha(mut self, alpha: f64) -> DistributionSpec {
        self.alpha = alpha;
        self
    }

    pub fn with_rank(mut self, r: usize) -> DistributionSpec {
        self.r = r;
        self
    }

    pub fn with_exponents(mut self, q: Exponent, p: Exponent) -> DistributionSpec {
        self.q = q;
        self.p = p;
        self
    }

    /// Output matrix shape: rank-r kinds sample r x n, diagonal kinds n x n,
    /// dense kinds n x d.
    pub fn dims(&self) -> (usize, usize) {
        match self.kind {
            DistKind::RankrNull | DistKind::RankrPlanted => (self.r, self.n),
            DistKind::DiagNull | DistKind::DiagPlanted => (self.n, self.n),
            _ => (self.n, self.d),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 {
            return Err(Error::guard(
                "dist-dims",
                format!("got n={} d={}", self.n, self.d),
            ));
        }
        if self.alpha < 0.0 || !self.alpha.is_finite() {
            return Err(Error::guard(
                "dist-alpha",
                format!("alpha must be finite and >= 0, got {}", self.alpha),
            ));
        }
        match self.kind {
            DistKind::RankrNull | DistKind::RankrPlanted => {
                if self.r == 0 || self.r > self.n {
                    return Err(Error::guard(
                        "dist-rank",
                        format!("need 1 <= r <= n, got r={} n={}", self.r, self.n),
                    ));
                }
            }
            DistKind::DiagNull | DistKind::DiagPlanted => {
                if self.d != self.n {
                    return Err(Error::guard(
                        "dist-square",
                        format!(
                            "diagonal ensembles are square, got n={} d={}",
                            self.n, self.d
                        ),
                    ));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

/// Validated sampler with the per-spec constants (eta_p for the entry spike)
/// precomputed from a deterministic stream.
pub struct Sampler {
    spec: DistributionSpec,
    eta_p: f64,
}

impl Sampler {
    pub fn new(spec: &DistributionSpec) -> Result<Sampler> {
        spec.validate()?;
        let eta_p = if spec.kind == DistKind::G2Entry {
            let mut rng = SeededRng::new(0xE7A).child(spec.n as u64);
            estimate_eta_p(spec.p, spec.n, 2000, &mut rng)?
        } else {
            0.0
        };
        Ok(Sampler {
            spec: spec.clone(),
            eta_p,
        })
    }

    pub fn spec(&self) -> &DistributionSpec {
        &self.spec
    }

    /// Expected l_p norm of a standard Gaussian column, as used by the entry
    /// spike; zero for other kinds.
    pub fn eta_p(&self) -> f64 {
        self.eta_p
    }

    pub fn sample(&self, rng: &mut SeededRng) -> Matrix {
        let s = &self.spec;
        match s.kind {
            DistKind::G1Dense | DistKind::G2Column | DistKind::G2Entry => {
                let mut a = Matrix::from_fn(s.n, s.d, |_, _| rng.gaussian());
                if s.alpha > 0.0 {
                    match s.kind {
                        DistKind::G2Column => {
                            let j = rng.index(s.d);
                            for i in 0..s.n {
                                let v = a.get(i, j) + s.alpha * rng.gaussian();
                                a.set(i, j, v);
                            }
                        }
                        DistKind::G2Entry => {
                            let i = rng.index(s.n);
                            let j = rng.index(s.d);
                            a.set(i, j, a.get(i, j) + s.alpha * self.eta_p);
                        }
                        _ => {}
                    }
                }
                a
            }
            DistKind::DiagNull | DistKind::DiagPlanted => {
                let mut a = Matrix::zeros(s.n, s.n);
                for i in 0..s.n {
                    a.set(i, i, rng.gaussian());
                }
                if s.kind == DistKind::DiagPlanted && s.alpha > 0.0 {
                    let i = rng.index(s.n);
                    let bump = s.alpha * (s.n as f64).ln().sqrt();
                    a.set(i, i, a.get(i, i) + bump);
                }
                a
            }
            DistKind::RankrNull | DistKind::RankrPlanted => {
                let mut a = Matrix::from_fn(s.r, s.n, |_, _| rng.gaussian());
                if s.kind == DistKind::RankrPlanted && s.alpha > 0.0 {
                    // Spike scale alpha d / sqrt(r) with d = max(n^{1/q}, sqrt(r)).
                    let d_scale = (s.n as f64).powf(s.q.recip()).max((s.r as f64).sqrt());
                    let scale = s.alpha * d_scale / (s.r as f64).sqrt();
                    let j = rng.index(s.n);
                    for i in 0..s.r {
                        let v = a.get(i, j) + scale * rng.gaussian();
                        a.set(i, j, v);
                    }
                }
                a
            }
        }
    }
}

/// Monte Carlo estimate of eta_p = E||g||_p for an n-vector of standard
/// Gaussians.
pub fn estimate_eta_p(p: Exponent, n: usize, trials: usize, rng: &mut SeededRng) -> Result<f64> {
    if trials < 1000 {
        return Err(Error::guard(
            "eta-trials",
            format!("need at least 10^3 trials, got {trials}"),
        ));
    }
    let mut acc = 0.0;
    let mut g = vec![0.0; n];
    for _ in 0..trials {
        for v in g.iter_mut() {
            *v = rng.gaussian();
        }
        acc += lp_norm(&g, p);
    }
    Ok(acc / trials as f64)
}

/// Mean of |sum_i s_i x_i|^power over random sign vectors s.
pub fn signed_sum_moment(x: &[f64], power: f64, trials: usize, rng: &mut SeededRng) -> f64 {
    let mut acc = 0.0;
    for _ in 0..trials {
        let mut s = 0.0;
        for &xi in x {
            s += rng.sign() * xi;
        }
        acc += s.abs().powf(power);
    }
    acc / trials as f64
}

/// Exact norms the experiments are allowed to use; net brackets are excluded
/// so distribution gaps never mix with net error.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExactOracle {
    /// 1->p, the max column l_p norm.
    ColumnMax,
    /// q->inf, the max row l_{q*} norm.
    RowMax,
    /// inf->p by sign enumeration (cols <= 24).
    SignEnum,
    /// q->p of a diagonal matrix with q <= p: the max |diagonal|.
    Diagonal,
    /// 2->2 by power iteration.
    Spectral,
}

impl ExactOracle {
    pub fn parse(s: &str) -> Result<ExactOracle> {
        Ok(match s {
            "column_max" => ExactOracle::ColumnMax,
            "row_max" => ExactOracle::RowMax,
            "sign_enum" => ExactOracle::SignEnum,
            "diagonal" => ExactOracle::Diagonal,
            "spectral" => ExactOracle::Spectral,
            other => return Err(Error::Parse(format!("unknown oracle {other:?}"))),
        })
    }

    pub fn eval(&self, a: &Matrix, q: Exponent, p: Exponent) -> Result<f64> {
        match self {
            ExactOracle::ColumnMax => {
                if !q.is_one() {
                    return Err(Error::guard(
                        "oracle-q",
                        format!("column_max needs q=1, got {q}"),
                    ));
                }
                Ok(oracles::norm_one_to_p(a, p))
            }
            ExactOracle::RowMax => {
                if !p.is_infinite() {
                    return Err(Error::guard(
                        "oracle-p",
                        format!("row_max needs p=inf, got {p}"),
                    ));
                }
                Ok(oracles::norm_q_to_infty(a, q))
            }
            ExactOracle::SignEnum => {
                if !q.is_infinite() {
                    return Err(Error::guard(
                        "oracle-q",
                        format!("sign_enum needs q=inf, got {q}"),
                    ));
                }
                oracles::norm_infty_to_p_exact(a, p)
            }
            ExactOracle::Diagonal => {
                if q.as_f64() > p.as_f64() {
                    return Err(Error::guard(
                        "oracle-diagonal",
                        format!("the diagonal characterization needs q <= p, got q={q} p={p}"),
                    ));
                }
                if a.rows() != a.cols() {
                    return Err(Error::DimMismatch(
                        "diagonal oracle needs a square matrix".into(),
                    ));
                }
                Ok((0..a.rows()).fold(0.0f64, |m, i| m.max(a.get(i, i).abs())))
            }
            ExactOracle::Spectral => {
                if q != Exponent::TWO || p != Exponent::TWO {
                    return Err(Error::guard(
                        "oracle-spectral",
                        format!("spectral oracle is for q=p=2, got q={q} p={p}"),
                    ));
                }
                Ok(oracles::operator_norm(a))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Null,
    Planted,
}

impl Source {
    pub fn as_str(&self) -> &'static str {
        match self {
            Source::Null => "null",
            Source::Planted => "planted",
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrialRow {
    pub trial: usize,
    pub source: Source,
    pub value: f64,
    pub decision: Source,
}

#[derive(Debug, Clone, Copy)]
pub struct Quantiles {
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
}

impl Quantiles {
    fn of(values: &[f64]) -> Quantiles {
        let mut v = values.to_vec();
        v.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let at = |f: f64| v[((v.len() - 1) as f64 * f).round() as usize];
        Quantiles {
            min: v[0],
            q25: at(0.25),
            median: at(0.5),
            q75: at(0.75),
            max: v[v.len() - 1],
        }
    }
}

/// Outcome of a separation or distinguishing run. Reproducible bit for bit
/// from (spec pair, seed, trials).
#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub kind: &'static str,
    pub null_spec: DistributionSpec,
    pub planted_spec: DistributionSpec,
    /// Trials per source; the report holds 2*trials rows.
    pub trials: usize,
    pub rows: Vec<TrialRow>,
    pub null_quantiles: Quantiles,
    pub planted_quantiles: Quantiles,
    /// min(planted values) - max(null values); positive means the two samples
    /// are fully separated.
    pub gap_stat: f64,
    pub threshold: f64,
    pub success_rate: f64,
    pub seed: u64,
}

impl ExperimentReport {
    /// One row per trial plus a summary footer in comment lines.
    pub fn to_csv(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "trial_id,source,norm_or_estimate,decision");
        for row in &self.rows {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                row.trial,
                row.source.as_str(),
                row.value,
                row.decision.as_str()
            );
        }
        let _ = writeln!(
            s,
            "# summary kind={} null={} planted={} trials={} seed={} success_rate={} threshold={} gap={}",
            self.kind,
            self.null_spec.kind.as_str(),
            self.planted_spec.kind.as_str(),
            self.trials,
            self.seed,
            self.success_rate,
            self.threshold,
            self.gap_stat
        );
        for (name, qs) in [
            ("null", self.null_quantiles),
            ("planted", self.planted_quantiles),
        ] {
            let _ = writeln!(
                s,
                "# {name} min={} q25={} median={} q75={} max={}",
                qs.min, qs.q25, qs.median, qs.q75, qs.max
            );
        }
        s
    }
}

fn classify(value: f64, threshold: f64, planted_above: bool) -> Source {
    if (value > threshold) == planted_above {
        Source::Planted
    } else {
        Source::Null
    }
}

fn assemble_report(
    kind: &'static str,
    null_spec: &DistributionSpec,
    planted_spec: &DistributionSpec,
    trials: usize,
    seed: u64,
    threshold: f64,
    planted_above: bool,
    null_vals: Vec<f64>,
    planted_vals: Vec<f64>,
) -> ExperimentReport {
    let mut rows = Vec::with_capacity(2 * trials);
    let mut correct = 0usize;
    for t in 0..trials {
        for (source, v) in [
            (Source::Null, null_vals[t]),
            (Source::Planted, planted_vals[t]),
        ] {
            let decision = classify(v, threshold, planted_above);
            if decision == source {
                correct += 1;
            }
            rows.push(TrialRow {
                trial: t,
                source,
                value: v,
                decision,
            });
        }
    }
    let null_quantiles = Quantiles::of(&null_vals);
    let planted_quantiles = Quantiles::of(&planted_vals);
    let gap_stat = planted_vals.iter().cloned().fold(f64::INFINITY, f64::min)
        - null_vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    ExperimentReport {
        kind,
        null_spec: null_spec.clone(),
        planted_spec: planted_spec.clone(),
        trials,
        rows,
        null_quantiles,
        planted_quantiles,
        gap_stat,
        threshold,
        success_rate: correct as f64 / (2 * trials) as f64,
        seed,
    }
}

fn check_pair(null: &DistributionSpec, planted: &DistributionSpec) -> Result<()> {
    if null.dims() != planted.dims() {
        return Err(Error::DimMismatch(format!(
            "spec pair has mismatched shapes {:?} vs {:?}",
            null.dims(),
            planted.dims()
        )));
    }
    if null.q != planted.q || null.p != planted.p {
        return Err(Error::guard(
            "pair-exponents",
            "null and planted specs must agree on (q, p)",
        ));
    }
    // The null slot may hold any spec that behaves like a null (alpha = 0);
    // a planted spec with a positive spike in that slot is a swapped pair.
    if null.kind.is_planted() && null.alpha > 0.0 {
        return Err(Error::guard(
            "pair-roles",
            "the first spec plays the null role; pass the planted spec second",
        ));
    }
    Ok(())
}

/// Draw `trials` matrices from each spec, score them with the exact oracle,
/// and report per-source quantiles plus the gap statistic
/// min(planted) - max(null). The threshold line is the midpoint of the two
/// sample medians.
pub fn separation_experiment(
    null: &DistributionSpec,
    planted: &DistributionSpec,
    oracle: ExactOracle,
    trials: usize,
    rng: &mut SeededRng,
) -> Result<ExperimentReport> {
    check_pair(null, planted)?;
    if trials == 0 {
        return Err(Error::guard("trials", "need at least one trial"));
    }
    let (q, p) = (null.q, null.p);
    let null_sampler = Sampler::new(null)?;
    let planted_sampler = Sampler::new(planted)?;
    let root = rng.child(0x5E9A);

    let mut null_vals = Vec::with_capacity(trials);
    let mut planted_vals = Vec::with_capacity(trials);
    for t in 0..trials as u64 {
        let mut rn = root.child(2 * t);
        let mut rp = root.child(2 * t + 1);
        null_vals.push(oracle.eval(&null_sampler.sample(&mut rn), q, p)?);
        planted_vals.push(oracle.eval(&planted_sampler.sample(&mut rp), q, p)?);
    }
    let threshold = 0.5 * (Quantiles::of(&null_vals).median + Quantiles::of(&planted_vals).median);
    let planted_above = Quantiles::of(&planted_vals).median >= Quantiles::of(&null_vals).median;
    Ok(assemble_report(
        "separation",
        null,
        planted,
        trials,
        rng.seed(),
        threshold,
        planted_above,
        null_vals,
        planted_vals,
    ))
}

/// Sketch-based distinguisher. One operator is drawn from the family
/// descriptor; the decision threshold is the midpoint of the two estimate
/// medians on a held-out calibration run; the reported success rate comes
/// from fresh draws only.
pub fn distinguisher_experiment(
    null: &DistributionSpec,
    planted: &DistributionSpec,
    desc: &SketchFamilyDescriptor,
    trials: usize,
    rng: &mut SeededRng,
) -> Result<ExperimentReport> {
    check_pair(null, planted)?;
    if trials == 0 {
        return Err(Error::guard("trials", "need at least one trial"));
    }
    let (nrows, ncols) = null.dims();
    if nrows != desc.n || ncols != desc.d {
        return Err(Error::DimMismatch(format!(
            "sketch descriptor is {}x{}, specs sample {}x{}",
            desc.n, desc.d, nrows, ncols
        )));
    }
    let null_sampler = Sampler::new(null)?;
    let planted_sampler = Sampler::new(planted)?;
    let sketcher = Sketcher::new(desc)?;
    let score = |a: &Matrix| -> Result<f64> {
        let st = sketcher.apply(a)?;
        Ok(sketcher.estimate(&st)?.value)
    };

    // Held-out calibration.
    let cal = rng.child(0x0C);
    let mut cal_null = Vec::with_capacity(trials);
    let mut cal_planted = Vec::with_capacity(trials);
    for t in 0..trials as u64 {
        let mut rn = cal.child(2 * t);
        let mut rp = cal.child(2 * t + 1);
        cal_null.push(score(&null_sampler.sample(&mut rn))?);
        cal_planted.push(score(&planted_sampler.sample(&mut rp))?);
    }
    let m0 = Quantiles::of(&cal_null).median;
    let m1 = Quantiles::of(&cal_planted).median;
    let threshold = 0.5 * (m0 + m1);
    let planted_above = m1 >= m0;

    // Fresh draws for the reported rate.
    let fresh = rng.child(0x0F);
    let mut null_vals = Vec::with_capacity(trials);
    let mut planted_vals = Vec::with_capacity(trials);
    for t in 0..trials as u64 {
        let mut rn = fresh.child(2 * t);
        let mut rp = fresh.child(2 * t + 1);
        null_vals.push(score(&null_sampler.sample(&mut rn))?);
        planted_vals.push(score(&planted_sampler.sample(&mut rp))?);
    }
    Ok(assemble_report(
        "distinguish",
        null,
        planted,
        trials,
        rng.seed(),
        threshold,
        planted_above,
        null_vals,
        planted_vals,
    ))
}

/// Sandwich a matrix between two l2->lp embeddings around a transpose:
/// M = T2 A^T T1^T with T1 mapping the l2 output of A into l_{q*} and T2
/// mapping the l2 output of A^T into l_p. Then ||M||_{q->p} tracks
/// ||A||_{2->2} up to the two embedding distortions. Requires q >= 2 and
/// p <= 2 so both embedding exponents lie in [1, 2].
pub fn double_dvoretzky_reduce(
    a: &Matrix,
    q: Exponent,
    p: Exponent,
    expansion: f64,
    seed: u64,
) -> Result<Matrix> {
    let root = SeededRng::new(seed);
    let rows1 = (expansion * a.rows() as f64).ceil() as usize;
    let rows2 = (expansion * a.cols() as f64).ceil() as usize;
    let t1 = gaussian_lp_map(root.child(1).seed(), q.dual(), rows1, a.rows())?.materialize();
    let t2 = gaussian_lp_map(root.child(2).seed(), p, rows2, a.cols())?.materialize();
    t2.matmul(&a.transpose())?.matmul(&t1.transpose())
}

/// One-sided variant for low-rank inputs: M = T A^T with T an l2->lp
/// embedding of the output space of A^T, so ||M||_{q*->p} tracks
/// ||A||_{2->q} for a rank-r matrix A (r x n), with `rows` about C r.
pub fn dual_side_reduce(a: &Matrix, p: Exponent, rows: usize, seed: u64) -> Result<Matrix> {
    let t = gaussian_lp_map(seed, p, rows, a.cols())?.materialize();
    t.matmul(&a.transpose())
}
