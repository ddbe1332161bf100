//! Acceptance suite: one test per criterion, each printing a pass/fail line
//! with the measured statistic before asserting. Tolerances and trial counts
//! are pinned here, not configurable.

use qpnorm::dense::Matrix;
use qpnorm::exponent::Exponent;
use qpnorm::lab::{
    self, distinguisher_experiment, separation_experiment, DistKind, DistributionSpec, ExactOracle,
};
use qpnorm::oracles::{
    best_oracle, lowrank_norm_two_to_p, net_norm, norm_infty_to_p_exact, norm_one_to_p,
    NormBracket,
};
use qpnorm::rng::{sample_gaussian_matrix, SeededRng};
use qpnorm::sketch::{self, Family, PlanOptions, Sketcher};

fn random(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = SeededRng::new(seed);
    sample_gaussian_matrix(&mut rng, rows, cols, 1.0).unwrap()
}

fn rank_two(n: usize, seed: u64) -> Matrix {
    let mut rng = SeededRng::new(seed);
    let b1 = sample_gaussian_matrix(&mut rng, n, 2, 1.0).unwrap();
    let b2 = sample_gaussian_matrix(&mut rng, 2, n, 1.0).unwrap();
    b1.matmul(&b2).unwrap()
}

fn overlaps_with_slack(a: &NormBracket, b: &NormBracket) -> bool {
    let slack = 1e-12 * a.upper.abs().max(b.upper.abs()).max(1e-300);
    a.lower - slack <= b.upper && b.lower - slack <= a.upper
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

/// Criterion 1: exact/bracketed q->p norms agree with the transposed dual
/// problem on 100 random matrices up to 5x5 for all (q,p) in {1,2,inf}^2.
#[test]
fn c01_duality_suite() {
    let exps = [Exponent::ONE, Exponent::TWO, Exponent::INF];
    let mut checked = 0usize;
    let mut worst_rel = 0.0f64;
    let mut ok = true;
    for trial in 0..100u64 {
        let rows = 1 + (trial as usize) % 5;
        let cols = 1 + (trial as usize / 5) % 5;
        let a = random(rows, cols, 0xC1_000 + trial);
        let at = a.transpose();
        for q in exps {
            for p in exps {
                let (lhs, _) = best_oracle(&a, q, p, 0.25).unwrap();
                let (rhs, _) = best_oracle(&at, p.dual(), q.dual(), 0.25).unwrap();
                if lhs.method.is_exact() && rhs.method.is_exact() {
                    let rel = (lhs.lower - rhs.lower).abs() / lhs.lower.abs().max(1e-300);
                    worst_rel = worst_rel.max(rel);
                    if rel > 1e-10 {
                        ok = false;
                    }
                } else if !overlaps_with_slack(&lhs, &rhs) {
                    ok = false;
                }
                checked += 1;
            }
        }
    }
    println!(
        "ACCEPTANCE C1 duality-suite: {} ({checked} comparisons, worst exact rel err {worst_rel:.2e})",
        verdict(ok)
    );
    assert!(ok);
}

/// Criterion 2: net brackets contain the independent exact oracles.
#[test]
fn c02_oracle_cross_validation() {
    let mut ok = true;
    for trial in 0..50u64 {
        let a = random(2, 3, 0xC2_000 + trial);
        let exact = norm_infty_to_p_exact(&a, Exponent::TWO).unwrap();
        let bracket = net_norm(&a, Exponent::INF, Exponent::TWO, 0.1).unwrap();
        if !bracket.contains_approx(exact, 1e-9) {
            println!(
                "  trial {trial}: exact {exact} outside [{}, {}]",
                bracket.lower, bracket.upper
            );
            ok = false;
        }
    }
    for trial in 0..50u64 {
        let a = random(6, 6, 0xC2_100 + trial);
        let exact = norm_one_to_p(&a, Exponent::TWO);
        let bracket = net_norm(&a, Exponent::ONE, Exponent::TWO, 0.25).unwrap();
        if !bracket.contains_approx(exact, 1e-9) {
            println!(
                "  trial {trial}: exact {exact} outside [{}, {}]",
                bracket.lower, bracket.upper
            );
            ok = false;
        }
    }
    println!(
        "ACCEPTANCE C2 oracle-cross-validation: {} (50 sign-enum + 50 column-max containments)",
        verdict(ok)
    );
    assert!(ok);
}

/// Criterion 3: the 1->p sketch estimates the max column norm within the
/// stated factors often enough, for small p with the p-stable copies and for
/// large p with the max-stability copies (identity fallback disabled).
#[test]
fn c03_one_to_p_sketch_contract() {
    let n = 32;
    let mut all_ok = true;
    for pv in [1.0, 1.5, 2.0] {
        let p = Exponent::new(pv).unwrap();
        let a = random(n, n, 0xC3_000 + pv.to_bits() % 97);
        let truth = norm_one_to_p(&a, p);
        let mut wins = 0;
        for seed in 0..100u64 {
            let desc = sketch::plan(
                Family::OneToP,
                n,
                n,
                p,
                Exponent::ONE,
                0xC3_100 + seed,
                &PlanOptions::default(),
            )
            .unwrap();
            let sk = Sketcher::new(&desc).unwrap();
            let est = sk.estimate(&sk.apply(&a).unwrap()).unwrap().value;
            if est > truth / 2.0 && est < truth * 2.0 {
                wins += 1;
            }
        }
        let ok = wins >= 78;
        all_ok &= ok;
        println!(
            "ACCEPTANCE C3 one-to-p-sketch p={pv}: {} ({wins}/100 within factor 2, need 78)",
            verdict(ok)
        );
    }
    for p in [Exponent::new(3.0).unwrap(), Exponent::INF] {
        let a = random(n, n, 0xC3_200 + p.to_string().len() as u64);
        let truth = norm_one_to_p(&a, p);
        let mut wins = 0;
        for seed in 0..100u64 {
            let opts = PlanOptions {
                highp_identity_fallback: false,
                ..PlanOptions::default()
            };
            let desc =
                sketch::plan(Family::OneToP, n, n, p, Exponent::ONE, 0xC3_300 + seed, &opts)
                    .unwrap();
            let sk = Sketcher::new(&desc).unwrap();
            let est = sk.estimate(&sk.apply(&a).unwrap()).unwrap().value;
            if est > truth / 4.0 && est < truth * 4.0 {
                wins += 1;
            }
        }
        let ok = wins >= 70;
        all_ok &= ok;
        println!(
            "ACCEPTANCE C3 one-to-p-sketch p={p}: {} ({wins}/100 within factor 4, need 70)",
            verdict(ok)
        );
    }
    assert!(all_ok);
}

/// Criterion 4: the 2->p low-rank pipeline lands within factor 8 of the
/// low-rank oracle bracket midpoint in at least 90 of 100 seeds.
#[test]
fn c04_two_to_p_lowrank_pipeline() {
    let n = 64;
    let p = Exponent::new(4.0).unwrap();
    let a = rank_two(n, 0xC4_000);
    let bracket = lowrank_norm_two_to_p(&a, p, 0.1).unwrap();
    let mid = bracket.midpoint();
    let mut wins = 0;
    for seed in 0..100u64 {
        let opts = PlanOptions {
            rank: 2,
            ose_mult: 4,
            beta: 2,
            ..PlanOptions::default()
        };
        let desc =
            sketch::plan(Family::TwoToPLowrank, n, n, p, Exponent::TWO, 0xC4_100 + seed, &opts)
                .unwrap();
        let sk = Sketcher::new(&desc).unwrap();
        let est = sk.estimate(&sk.apply(&a).unwrap()).unwrap().value;
        if est > mid / 8.0 && est < mid * 8.0 {
            wins += 1;
        }
    }
    let ok = wins >= 90;
    println!(
        "ACCEPTANCE C4 two-to-p-lowrank: {} ({wins}/100 within factor 8 of midpoint {mid:.4}, need 90)",
        verdict(ok)
    );
    assert!(ok);
}

/// Criterion 5: the block-column sketch never overestimates the inf->q norm
/// (a deterministic containment), and clears the scaled lower bound in at
/// least 45% of trials.
#[test]
fn c05_blockcol_no_overestimate() {
    let n = 12;
    let block = 3;
    let mut all_ok = true;
    for q in [Exponent::TWO, Exponent::new(4.0).unwrap()] {
        let mut no_over = 0usize;
        let mut lower_hits = 0usize;
        let trials = 100u64;
        for trial in 0..trials {
            let a = random(n, n, 0xC5_000 + trial);
            let exact = norm_infty_to_p_exact(&a, q).unwrap();
            let opts = PlanOptions {
                block,
                ..PlanOptions::default()
            };
            let desc = sketch::plan(
                Family::BlockcolInfToQ,
                n,
                n,
                q,
                q,
                0xC5_100 + trial,
                &opts,
            )
            .unwrap();
            let sk = Sketcher::new(&desc).unwrap();
            let est = sk.estimate(&sk.apply(&a).unwrap()).unwrap().value;
            if est <= exact * (1.0 + 1e-12) {
                no_over += 1;
            }
            if est >= 0.1 * (block as f64 / n as f64) * exact {
                lower_hits += 1;
            }
        }
        let ok = no_over == trials as usize && lower_hits * 100 >= 45 * trials as usize;
        all_ok &= ok;
        println!(
            "ACCEPTANCE C5 blockcol q={q}: {} (no-overestimate {no_over}/{trials}, lower-bound hits {lower_hits}/{trials}, need 45%)",
            verdict(ok)
        );
    }
    assert!(all_ok);
}

/// Criterion 6: block-row sketch; B=1 reproduces the oracle exactly, B=4 at
/// p=q=1 stays inside the order-of-magnitude sandwich on every trial.
#[test]
fn c06_blockrow_sandwich() {
    let mut b1_ok = true;
    for trial in 0..50u64 {
        let a = random(8, 8, 0xC6_000 + trial);
        let desc = sketch::plan(
            Family::BlockrowQToP,
            8,
            8,
            Exponent::TWO,
            Exponent::ONE,
            0xC6_100 + trial,
            &PlanOptions {
                block: 1,
                ..PlanOptions::default()
            },
        )
        .unwrap();
        let sk = Sketcher::new(&desc).unwrap();
        let est = sk.estimate(&sk.apply(&a).unwrap()).unwrap().value;
        let truth = norm_one_to_p(&a, Exponent::TWO);
        if (est - truth).abs() > 1e-12 * truth {
            println!("  B=1 trial {trial}: estimate {est} vs oracle {truth}");
            b1_ok = false;
        }
    }
    println!(
        "ACCEPTANCE C6 blockrow B=1 exactness: {} (50 matrices)",
        verdict(b1_ok)
    );

    // B = 4, p = q = 1, n = 16: oracle/estimate within
    // [0.1 / B^{1-1/p}, 10 B^{1/p-1/2}] = [0.1, 20] on every trial.
    let n = 16;
    let block = 4usize;
    let (lo, hi) = (0.1, 10.0 * (block as f64).sqrt());
    let mut sandwich_ok = true;
    let mut worst = (1.0f64, 1.0f64);
    for trial in 0..100u64 {
        let a = random(n, n, 0xC6_200 + trial);
        let desc = sketch::plan(
            Family::BlockrowQToP,
            n,
            n,
            Exponent::ONE,
            Exponent::ONE,
            0xC6_300 + trial,
            &PlanOptions {
                block,
                ..PlanOptions::default()
            },
        )
        .unwrap();
        let sk = Sketcher::new(&desc).unwrap();
        let est = sk.estimate(&sk.apply(&a).unwrap()).unwrap().value;
        let truth = norm_one_to_p(&a, Exponent::ONE);
        let ratio = truth / est;
        worst = (worst.0.min(ratio), worst.1.max(ratio));
        if !(lo..=hi).contains(&ratio) {
            println!("  B=4 trial {trial}: ratio {ratio} outside [{lo}, {hi}]");
            sandwich_ok = false;
        }
    }
    println!(
        "ACCEPTANCE C6 blockrow B=4 sandwich: {} (ratio range [{:.3}, {:.3}] within [{lo}, {hi}])",
        verdict(sandwich_ok),
        worst.0,
        worst.1
    );
    assert!(b1_ok && sandwich_ok);
}

/// Criterion 7: the second moment of random signed sums reproduces the
/// squared Euclidean norm within 5%.
#[test]
fn c07_khintchine_second_moment() {
    let mut rng = SeededRng::new(0xC7_000);
    let x: Vec<f64> = (0..32).map(|_| rng.gaussian()).collect();
    let moment = lab::signed_sum_moment(&x, 2.0, 100_000, &mut rng);
    let truth: f64 = x.iter().map(|v| v * v).sum();
    let rel = (moment - truth).abs() / truth;
    let ok = rel < 0.05;
    println!(
        "ACCEPTANCE C7 khintchine-p2: {} (mean {moment:.4} vs ||x||_2^2 {truth:.4}, rel err {rel:.4})",
        verdict(ok)
    );
    assert!(ok);
}

/// Criterion 8: separation experiments. Diagonal pair: some alpha in the
/// sweep gives a positive 50+50 gap. Column pair at n=256: planted/null
/// median ratio at least 2 at the kappa-scaled alpha.
#[test]
fn c08_separation_suite() {
    let n = 64;
    let base = DistributionSpec::new(DistKind::DiagNull, n, n)
        .with_exponents(Exponent::ONE, Exponent::INF);
    let mut gap_alpha = None;
    for alpha in [1.0, 2.0, 4.0, 8.0, 16.0, 20.0] {
        let planted = DistributionSpec::new(DistKind::DiagPlanted, n, n)
            .with_alpha(alpha)
            .with_exponents(Exponent::ONE, Exponent::INF);
        let mut rng = SeededRng::new(0xC8_000);
        let rep =
            separation_experiment(&base, &planted, ExactOracle::Diagonal, 50, &mut rng).unwrap();
        println!("  diagonal pair alpha={alpha}: gap {:.4}", rep.gap_stat);
        if rep.gap_stat > 0.0 {
            gap_alpha = Some(alpha);
            break;
        }
    }
    let diag_ok = gap_alpha.is_some();
    println!(
        "ACCEPTANCE C8 diagonal separation: {} (positive gap at alpha={:?})",
        verdict(diag_ok),
        gap_alpha
    );

    // Column spike scaled by kappa = 4, so alpha = 4 and the planted
    // column norm inflates by sqrt(1 + 16).
    let n = 256;
    let alpha = 4.0;
    let null = DistributionSpec::new(DistKind::G1Dense, n, n)
        .with_exponents(Exponent::ONE, Exponent::TWO);
    let mut planted = DistributionSpec::new(DistKind::G2Column, n, n)
        .with_alpha(alpha)
        .with_exponents(Exponent::ONE, Exponent::TWO);
    planted.kappa = 4.0;
    let mut rng = SeededRng::new(0xC8_100);
    let rep = separation_experiment(&null, &planted, ExactOracle::ColumnMax, 50, &mut rng).unwrap();
    let ratio = rep.planted_quantiles.median / rep.null_quantiles.median;
    let col_ok = ratio >= 2.0;
    println!(
        "ACCEPTANCE C8 column separation: {} (median ratio {ratio:.3}, need >= 2)",
        verdict(col_ok)
    );
    assert!(diag_ok && col_ok);
}

/// Criterion 9: distinguishing success is ~chance at k=4, near-perfect at
/// k=n^2, and non-decreasing (within 0.05 noise) across the sweep.
#[test]
fn c09_distinguisher_monotonicity() {
    let n = 64;
    let alpha = 4.0;
    let null = DistributionSpec::new(DistKind::G1Dense, n, n)
        .with_exponents(Exponent::ONE, Exponent::TWO);
    let planted = DistributionSpec::new(DistKind::G2Column, n, n)
        .with_alpha(alpha)
        .with_exponents(Exponent::ONE, Exponent::TWO);
    let trials = 150;
    let ks = [4usize, 16, 64, 4096];
    let mut rates = Vec::new();
    for &k in &ks {
        let opts = PlanOptions {
            k,
            ..PlanOptions::default()
        };
        let desc = sketch::plan(
            Family::GaussianVec,
            n,
            n,
            Exponent::TWO,
            Exponent::ONE,
            0xC9_000 + k as u64,
            &opts,
        )
        .unwrap();
        let mut rng = SeededRng::new(0xC9_100 + k as u64);
        let rep = distinguisher_experiment(&null, &planted, &desc, trials, &mut rng).unwrap();
        println!("  k={k}: success_rate {:.3}", rep.success_rate);
        rates.push(rep.success_rate);
    }
    let small_ok = (0.4..=0.65).contains(&rates[0]);
    let big_ok = rates[3] >= 0.95;
    let mono_ok = rates.windows(2).all(|w| w[1] >= w[0] - 0.05);
    let ok = small_ok && big_ok && mono_ok;
    println!(
        "ACCEPTANCE C9 distinguisher-monotonicity: {} (rates {:?}; k=4 in [0.4,0.65], k=4096 >= 0.95, non-decreasing within 0.05)",
        verdict(ok),
        rates
    );
    assert!(ok);
}

/// Criterion 10: streaming and merge algebra across the families.
#[test]
fn c10_streaming_merge_algebra() {
    let mut stream_ok = true;
    let mut merge_ok = true;
    for pair in 0..20u64 {
        let (desc, n, d) = match pair % 5 {
            0 => (
                sketch::plan(
                    Family::OneToP,
                    8,
                    6,
                    Exponent::new(1.5).unwrap(),
                    Exponent::ONE,
                    0xCA_000 + pair,
                    &PlanOptions::default(),
                )
                .unwrap(),
                8,
                6,
            ),
            1 => (
                sketch::plan(
                    Family::BlockcolInfToQ,
                    9,
                    12,
                    Exponent::TWO,
                    Exponent::TWO,
                    0xCA_000 + pair,
                    &PlanOptions {
                        block: 3,
                        ..PlanOptions::default()
                    },
                )
                .unwrap(),
                9,
                12,
            ),
            2 => (
                sketch::plan(
                    Family::BlockrowQToP,
                    8,
                    7,
                    Exponent::TWO,
                    Exponent::ONE,
                    0xCA_000 + pair,
                    &PlanOptions {
                        block: 2,
                        ..PlanOptions::default()
                    },
                )
                .unwrap(),
                8,
                7,
            ),
            3 => (
                sketch::plan(
                    Family::TwoToQLarge,
                    8,
                    6,
                    Exponent::new(1.5).unwrap(),
                    Exponent::new(4.0).unwrap(),
                    0xCA_000 + pair,
                    &PlanOptions {
                        block: 4,
                        ..PlanOptions::default()
                    },
                )
                .unwrap(),
                8,
                6,
            ),
            _ => (
                sketch::plan(
                    Family::TwoToPLowrank,
                    8,
                    8,
                    Exponent::new(3.0).unwrap(),
                    Exponent::TWO,
                    0xCA_000 + pair,
                    &PlanOptions {
                        rank: 2,
                        ..PlanOptions::default()
                    },
                )
                .unwrap(),
                8,
                8,
            ),
        };
        let a = random(n, d, 0xCA_100 + pair);
        let b = random(n, d, 0xCA_200 + pair);
        let sk = Sketcher::new(&desc).unwrap();

        // Batch vs stream: replay a random update stream on top of A.
        let mut stream_rng = SeededRng::new(0xCA_300 + pair);
        let mut updated = a.clone();
        let mut st = sk.apply(&a).unwrap();
        for _ in 0..30 {
            let i = stream_rng.index(n);
            let j = stream_rng.index(d);
            let delta = stream_rng.gaussian();
            updated.set(i, j, updated.get(i, j) + delta);
            sk.update(&mut st, i, j, delta).unwrap();
        }
        let batch = sk.apply(&updated).unwrap();
        for (x, y) in st.payload().iter().zip(batch.payload()) {
            if (x - y).abs() > 1e-9 * y.abs().max(1.0) {
                println!("  pair {pair}: streamed {x} vs batch {y}");
                stream_ok = false;
            }
        }

        // Merge linearity.
        let merged = sketch::merge(&sk.apply(&a).unwrap(), &sk.apply(&b).unwrap()).unwrap();
        let direct = sk.apply(&a.add(&b).unwrap()).unwrap();
        for (x, y) in merged.payload().iter().zip(direct.payload()) {
            if (x - y).abs() > 1e-10 * y.abs().max(1.0) {
                println!("  pair {pair}: merged {x} vs direct {y}");
                merge_ok = false;
            }
        }
    }
    println!(
        "ACCEPTANCE C10 streaming-merge-algebra: {} (20 pairs, stream tol 1e-9, merge tol 1e-10)",
        verdict(stream_ok && merge_ok)
    );
    assert!(stream_ok && merge_ok);
}

/// On-demand robustness sweep: the statistical criteria above use fixed
/// seeds; this reruns the tightest ones under alternative seed bases to
/// confirm the margins are not seed luck. Run with
/// `cargo test -p qpnorm --test acceptance -- --ignored --nocapture`.
#[test]
#[ignore = "slow; exploratory sweep, not part of the gate"]
fn seed_robustness_sweep() {
    for (round, base) in [0xAAAA_u64, 0xBBBB, 0xCCCC].into_iter().enumerate() {
        // 1->2 sketch contract at factor 2.
        let n = 32;
        let a = random(n, n, base);
        let truth = norm_one_to_p(&a, Exponent::TWO);
        let mut wins = 0;
        for seed in 0..100u64 {
            let desc = sketch::plan(
                Family::OneToP,
                n,
                n,
                Exponent::TWO,
                Exponent::ONE,
                base ^ (7_000 + seed),
                &PlanOptions::default(),
            )
            .unwrap();
            let sk = Sketcher::new(&desc).unwrap();
            let est = sk.estimate(&sk.apply(&a).unwrap()).unwrap().value;
            if est > truth / 2.0 && est < truth * 2.0 {
                wins += 1;
            }
        }
        println!("round {round}: one_to_p wins {wins}/100");
        assert!(wins >= 78);

        // Low-rank pipeline at factor 8.
        let a = rank_two(64, base ^ 0xF00D);
        let mid = lowrank_norm_two_to_p(&a, Exponent::new(4.0).unwrap(), 0.1)
            .unwrap()
            .midpoint();
        let mut wins = 0;
        for seed in 0..100u64 {
            let desc = sketch::plan(
                Family::TwoToPLowrank,
                64,
                64,
                Exponent::new(4.0).unwrap(),
                Exponent::TWO,
                base ^ (8_000 + seed),
                &PlanOptions {
                    rank: 2,
                    ..PlanOptions::default()
                },
            )
            .unwrap();
            let sk = Sketcher::new(&desc).unwrap();
            let est = sk.estimate(&sk.apply(&a).unwrap()).unwrap().value;
            if est > mid / 8.0 && est < mid * 8.0 {
                wins += 1;
            }
        }
        println!("round {round}: lowrank wins {wins}/100");
        assert!(wins >= 90);

        // Distinguisher endpoints.
        let null = DistributionSpec::new(DistKind::G1Dense, 64, 64)
            .with_exponents(Exponent::ONE, Exponent::TWO);
        let planted = DistributionSpec::new(DistKind::G2Column, 64, 64)
            .with_alpha(4.0)
            .with_exponents(Exponent::ONE, Exponent::TWO);
        let mut rates = Vec::new();
        for k in [4usize, 4096] {
            let desc = sketch::plan(
                Family::GaussianVec,
                64,
                64,
                Exponent::TWO,
                Exponent::ONE,
                base ^ (9_000 + k as u64),
                &PlanOptions {
                    k,
                    ..PlanOptions::default()
                },
            )
            .unwrap();
            let mut rng = SeededRng::new(base ^ (9_500 + k as u64));
            let rep = distinguisher_experiment(&null, &planted, &desc, 150, &mut rng).unwrap();
            rates.push(rep.success_rate);
        }
        println!("round {round}: distinguisher k=4 {} k=4096 {}", rates[0], rates[1]);
        assert!((0.35..=0.7).contains(&rates[0]), "k=4 rate {}", rates[0]);
        assert!(rates[1] >= 0.95, "k=4096 rate {}", rates[1]);
    }
}
