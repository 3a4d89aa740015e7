//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::gamma::gamma;

use cardsketch::harness::{run_equivalence, run_experiment_timed, Algo, AlgoSpec, ExperimentConfig, ExperimentReport};
use cardsketch::inference::{chernoff_bounds, optimal_lambda, psi_infinity};
use cardsketch::order::{combine_kth, kth_mle, MaxSketch};
use cardsketch::stats::{mean, sample_correlation, variance};
use cardsketch::{HashConfig, HashDistribution, Sketch, SketchParams, SketchType, StreamElement};

const SEED: u64 = 20_240_601;
const SUITE_BUDGET_S: f64 = 15.0 * 60.0;

type Check = Result<String, String>;

fn tuned(algo: Algo, q: Option<f64>, alpha: Option<f64>) -> AlgoSpec {
    AlgoSpec::Tuned { algo, q, p: None, alpha, k: None }
}

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn experiment(cfg: &ExperimentConfig) -> (ExperimentReport, f64) {
    let (report, timing) = run_experiment_timed(cfg).expect("experiment runs");
    for s in &report.summaries {
        assert_eq!(s.errors, 0, "{} failed on some replicates", s.algo);
    }
    (report, timing.elapsed_seconds)
}

/// Maximal-term estimators at c = 1e5, m = 2^10.
fn run_a1() -> &'static (ExperimentReport, f64) {
    static CELL: OnceLock<(ExperimentReport, f64)> = OnceLock::new();
    CELL.get_or_init(|| {
        let mut cfg = ExperimentConfig::new(100_000, 1024, &[Algo::MaxExp], 500, SEED);
        cfg.algos.extend([
            tuned(Algo::MaxGeom, Some(0.5), None),
            tuned(Algo::MaxGeom, Some(10.0 / 11.0), None),
            tuned(Algo::GeomRecursive, Some(10.0 / 11.0), None),
        ]);
        experiment(&cfg)
    })
}

/// Register baselines on the same streams as `run_a1`.
fn run_a3() -> &'static (ExperimentReport, f64) {
    static CELL: OnceLock<(ExperimentReport, f64)> = OnceLock::new();
    CELL.get_or_init(|| {
        experiment(&ExperimentConfig::new(
            100_000,
            1024,
            &[Algo::Hll, Algo::Loglog, Algo::Mincount],
            500,
            SEED,
        ))
    })
}

/// Projection and median estimators at c = 1e5, m = 2^10, alpha = 0.05.
fn run_projection() -> &'static (ExperimentReport, f64) {
    static CELL: OnceLock<(ExperimentReport, f64)> = OnceLock::new();
    CELL.get_or_init(|| {
        experiment(&ExperimentConfig::new(
            100_000,
            1024,
            &[Algo::Projection, Algo::ProjectionMedian],
            200,
            SEED + 13,
        ))
    })
}

fn fine_geom() -> String {
    format!("max-geom(q={})", 10.0 / 11.0)
}

fn share_below(rel: &[f64], limit: f64) -> f64 {
    rel.iter().filter(|r| (*r - 1.0).abs() < limit).count() as f64 / rel.len() as f64
}

fn example_geometric() -> Check {
    let (report, _) = run_a1();
    let share = share_below(&report.relative_estimates(&fine_geom())[..200], 0.1);
    ensure(share >= 0.95, format!("q=10/11 at c=1e5: {share:.3} of 200 within 10%"))
}

fn example_geometric_recursive() -> Check {
    let (report, _) = run_a1();
    let q: f64 = 10.0 / 11.0;
    let mle = report.relative_estimates(&fine_geom());
    let recursive = report.relative_estimates(&format!("geom-recursive(q={q})"));
    let gaps: Vec<f64> = mle.iter().zip(&recursive).map(|(a, b)| b / a - 1.0).collect();
    let worst = gaps.iter().map(|g| g.abs()).fold(0.0, f64::max);
    // Rounding maxima up to integers scales q^Y by E[q^U] = (1 - q) / -ln q for U ~ U(0, 1).
    let predicted = -q.ln() / (1.0 - q) - 1.0;
    ensure(
        worst < 0.01,
        format!(
            "recursive vs MLE gap: worst {worst:.4}, mean {:.4}, discretization bias {predicted:.4}",
            mean(&gaps)
        ),
    )
}

fn example_projection() -> Check {
    let (report, secs) = run_projection();
    let share = share_below(&report.relative_estimates("projection"), 0.1);
    ensure(
        share >= 0.95,
        format!("alpha=0.05 at c=1e5: {share:.3} of 200 within 10%, {secs:.1} s"),
    )
}

fn criterion_1() -> Check {
    let cfg = ExperimentConfig::new(1000, 64, &[Algo::MaxUniform], 500, SEED + 1);
    let (report, secs) = experiment(&cfg);
    let s = report.summary("max-uniform").unwrap();
    let (ks, crit) = (s.pivot_ks.unwrap(), s.pivot_ks_critical.unwrap());
    let cov = s.coverage.unwrap();
    ensure(
        ks < crit && (0.92..=0.98).contains(&cov) && secs < 60.0,
        format!("pivot KS {ks:.4} (1% critical {crit:.4}), coverage {cov:.3}, {secs:.1} s"),
    )
}

fn criterion_2() -> Check {
    let (report, _) = run_a1();
    let s = report.summary("max-exp").unwrap();
    let scaled = s.var_relative.sqrt() * 32.0;
    ensure(
        (0.8..=1.2).contains(&scaled),
        format!("sd(c_hat/c) * sqrt(m) = {scaled:.4}, band [0.8, 1.2]"),
    )
}

fn criterion_3() -> Check {
    let (report, secs) = run_a1();
    let cont = report.summary("max-exp").unwrap().var_relative;
    let half = report.summary("max-geom(q=0.5)").unwrap().var_relative;
    let fine = report.summary(&fine_geom()).unwrap().var_relative;
    let (r_half, r_fine) = (cont / half, cont / fine);
    ensure(
        (r_half - 0.9304).abs() <= 0.05 && (r_fine - 0.9985).abs() <= 0.05 && *secs < 300.0,
        format!("Var ratio q=1/2 {r_half:.4}, q=10/11 {r_fine:.4}, {secs:.1} s"),
    )
}

fn criterion_4() -> Check {
    let lambda = optimal_lambda();
    let psi_half = psi_infinity(0.5).unwrap();
    let psi_fine = psi_infinity(10.0 / 11.0).unwrap();
    let b = chernoff_bounds(1e-4, 1).unwrap();
    ensure(
        (lambda - 1.594).abs() <= 1e-3
            && (psi_half - 0.9304).abs() <= 1e-4
            && (psi_fine - 0.9985).abs() <= 1e-4
            && (b.c1 - 2.0).abs() <= 1e-3
            && (b.c2 - 2.0).abs() <= 1e-3,
        format!(
            "lambda0 {lambda:.5}, psi(1/2) {psi_half:.5}, psi(10/11) {psi_fine:.5}, C1 {:.5}, C2 {:.5}",
            b.c1, b.c2
        ),
    )
}

fn criterion_5() -> Check {
    let cfg = ExperimentConfig::new(1000, 256, &[Algo::MaxUniform], 10_000, SEED + 5);
    let (report, _) = experiment(&cfg);
    let rel = report.relative_estimates("max-uniform");
    let mut ok = true;
    let mut parts = Vec::new();
    for eps in [0.05, 0.1] {
        let b = chernoff_bounds(eps, 256).unwrap();
        let n = rel.len() as f64;
        let up = rel.iter().filter(|&&r| r >= 1.0 + eps).count() as f64 / n;
        let lo = rel.iter().filter(|&&r| r <= 1.0 - eps).count() as f64 / n;
        ok &= up <= b.upper && lo <= b.lower;
        parts.push(format!(
            "eps {eps}: upper {up:.4} <= {:.4}, lower {lo:.4} <= {:.4}",
            b.upper, b.lower
        ));
    }
    ensure(ok, parts.join("; "))
}

fn criterion_6() -> Check {
    let alpha = 0.02;
    let mut cfg = ExperimentConfig::new(10_000, 64, &[Algo::Projection], 500, SEED + 6);
    cfg.alpha = alpha;
    let (report, _) = experiment(&cfg);
    let s = report.summary("projection").unwrap();
    let (ks, crit) = (s.pivot_ks.unwrap(), s.pivot_ks_critical.unwrap());
    // The limit law has mean m; at this alpha the pivot's exact mean is m / Gamma(1 + alpha).
    let pivot_mean = mean(&report.pivots("projection")) / 64.0;
    let exact_mean = 1.0 / gamma(1.0 + alpha);

    let mut cfg = ExperimentConfig::new(10_000, 1025, &[Algo::Projection, Algo::ProjectionMedian], 500, SEED + 7);
    cfg.alpha = alpha;
    let (report, _) = experiment(&cfg);
    let ratio = report.summary("projection-median").unwrap().var_relative
        / report.summary("projection").unwrap().var_relative;
    ensure(
        ks < crit && (ratio - 2.08).abs() <= 0.3,
        format!(
            "pivot KS {ks:.4} (1% critical {crit:.4}), pivot mean / m {pivot_mean:.4} \
             (exact {exact_mean:.4}), median/projection variance {ratio:.3}"
        ),
    )
}

fn criterion_7() -> Check {
    let alphas = [0.2, 0.1, 0.05, 0.02];
    let rep = run_equivalence(10_000, 256, &alphas, 10, SEED + 8).unwrap();
    let med: Vec<f64> = rep.rows.iter().map(|r| r.median_abs_residual).collect();
    let falling = med.windows(2).all(|w| w[1] < w[0]);
    let held = rep.rows.iter().all(|r| r.sandwich_held);
    ensure(
        falling && held,
        format!(
            "median residuals {:?}, sandwich held {held}",
            med.iter().map(|x| format!("{x:.3e}")).collect::<Vec<_>>()
        ),
    )
}

fn split_case(rng: &mut ChaCha8Rng, case: usize) -> Result<(), String> {
    let kinds = [
        (SketchType::MaxUniform, SketchParams::default()),
        (SketchType::MaxExp, SketchParams::default()),
        (SketchType::MaxGeom, SketchParams { q: 10.0 / 11.0, ..SketchParams::default() }),
        (SketchType::Kth, SketchParams { k: 3, ..SketchParams::default() }),
        (SketchType::Bernoulli, SketchParams { p: 0.002, ..SketchParams::default() }),
    ];
    let (kind, params) = kinds[case % kinds.len()];
    let salt = rng.random();
    let n = rng.random_range(1..2000u32);
    let universe = rng.random_range(1..=n);
    let stream: Vec<StreamElement> = (0..n)
        .map(|_| StreamElement::insert(format!("u{}", rng.random_range(0..universe))))
        .collect();
    let mut whole = Sketch::new(kind, 64, salt, &params).unwrap();
    let mut left = whole.clone();
    let mut right = whole.clone();
    for e in &stream {
        whole.update_element(e).unwrap();
        match rng.random_range(0..3) {
            0 => left.update_element(e).unwrap(),
            1 => right.update_element(e).unwrap(),
            _ => {
                left.update_element(e).unwrap();
                right.update_element(e).unwrap();
            }
        }
    }
    left.merge_from(&right).unwrap();
    if left.to_bytes() == whole.to_bytes() {
        Ok(())
    } else {
        Err(format!("split {case} ({}) differs", kind.name()))
    }
}

fn criterion_8() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 9);
    let splits: Result<Vec<()>, String> = (0..100).map(|i| split_case(&mut rng, i)).collect();
    splits?;

    let (m, k) = (256, 3);
    let mut worst = 0f64;
    for rep in 0..10u64 {
        let cfg = HashConfig::new(m, SEED ^ rep, HashDistribution::Uniform01).unwrap();
        let mut s = MaxSketch::new_kth(cfg, k).unwrap();
        for i in 0..10_000u32 {
            s.insert(format!("r{rep}-{i}").as_bytes());
        }
        let ys = s.kth_values().unwrap();
        let (a, b) = ys.split_at(m / 2);
        let c1 = kth_mle(a, k).unwrap();
        let c2 = kth_mle(b, k).unwrap();
        let combined = combine_kth(c1, a.len(), c2, b.len(), k).unwrap();
        let pooled = kth_mle(&ys, k).unwrap();
        worst = worst.max((combined / pooled - 1.0).abs());
    }
    ensure(
        worst < 0.01,
        format!("100 splits bit-identical; combine_kth worst relative gap {worst:.2e}"),
    )
}

/// Pitman-Morgan statistic for `Var(x) > Var(y)` on paired samples.
fn pitman_morgan(x: &[f64], y: &[f64]) -> f64 {
    let s: Vec<f64> = x.iter().zip(y).map(|(a, b)| a + b).collect();
    let d: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    let r = sample_correlation(&s, &d);
    r * ((x.len() as f64 - 2.0) / (1.0 - r * r)).sqrt()
}

fn bootstrap_ratio_se(num: &[f64], den: &[f64], seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = num.len();
    let ratios: Vec<f64> = (0..400)
        .map(|_| {
            let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..n)).collect();
            let a: Vec<f64> = idx.iter().map(|&i| num[i]).collect();
            let b: Vec<f64> = idx.iter().map(|&i| den[i]).collect();
            variance(&a) / variance(&b)
        })
        .collect();
    variance(&ratios).sqrt()
}

fn criterion_9(start: Instant) -> Check {
    let mut notes = Vec::new();
    let mut ok = true;

    // Mean percent error against three asymptotic standard deviations.
    let mut small_cfg = ExperimentConfig::new(
        10_000,
        512,
        &[
            Algo::MaxExp,
            Algo::MaxGeom,
            Algo::Hll,
            Algo::Mincount,
            Algo::Projection,
            Algo::ProjectionMedian,
            Algo::Loglog,
        ],
        500,
        SEED + 10,
    );
    small_cfg.q = 10.0 / 11.0;
    let (small, _) = experiment(&small_cfg);
    let (a1, _) = run_a1();
    let (a3, _) = run_a3();
    let (proj, _) = run_projection();
    let mut worst = 0f64;
    for report in [&small, a1, a3, proj] {
        let m = report.config.m as f64;
        for s in &report.summaries {
            let bound = 300.0 / (m * s.nominal_are).sqrt();
            worst = worst.max(s.mean_percent_error / bound);
            if s.mean_percent_error > bound {
                ok = false;
                notes.push(format!("{} mean error {:.2}% > {bound:.2}%", s.algo, s.mean_percent_error));
            }
        }
    }
    notes.push(format!("worst mean error / bound {worst:.3}"));

    // Expected orderings Var(first) <= Var(second), paired by replicate.
    let mut contradictions = Vec::new();
    let pairs = [("max-exp", "mincount"), ("mincount", "hll"), ("hll", "loglog")];
    for (a, b) in pairs {
        let t = pitman_morgan(&small.relative_estimates(a), &small.relative_estimates(b));
        if t > 3.0 {
            contradictions.push(format!("{a} vs {b} at c=1e4: t = {t:.2}"));
        }
    }
    let large_pairs = [
        (a1.relative_estimates("max-exp"), a3.relative_estimates("mincount"), "max-exp vs mincount"),
        (a3.relative_estimates("mincount"), a3.relative_estimates("hll"), "mincount vs hll"),
        (a3.relative_estimates("hll"), a3.relative_estimates("loglog"), "hll vs loglog"),
    ];
    for (x, y, name) in &large_pairs {
        let t = pitman_morgan(x, y);
        if t > 3.0 {
            contradictions.push(format!("{name} at c=1e5: t = {t:.2}"));
        }
    }
    ok &= contradictions.is_empty();
    notes.extend(contradictions);

    // A long, cheap baseline run resolves the strict orderings.
    let long_cfg = ExperimentConfig::new(10_000, 512, &[Algo::Hll, Algo::Loglog, Algo::Mincount], 8000, SEED + 11);
    let (long, _) = experiment(&long_cfg);
    let v = |l: &str| long.summary(l).unwrap().var_relative;
    let strict = v("mincount") < v("hll") && v("hll") < v("loglog");
    ok &= strict;
    notes.push(format!(
        "Var mincount {:.3e} < hll {:.3e} < loglog {:.3e}: {strict}",
        v("mincount"),
        v("hll"),
        v("loglog")
    ));
    for s in &long.summaries {
        let rel = s.empirical_are / s.nominal_are;
        if !(0.8..=1.2).contains(&rel) {
            ok = false;
            notes.push(format!("{} ARE {:.3} vs nominal {:.3}", s.algo, s.empirical_are, s.nominal_are));
        }
    }
    let v_max = small.summary("max-exp").unwrap().var_relative;
    let v_min = small.summary("mincount").unwrap().var_relative;
    notes.push(format!("Var max-exp / mincount at c=1e4 {:.3}", v_max / v_min));

    // Median versus projection.
    let target = 1.0 / std::f64::consts::LN_2.powi(2);
    for (report, name) in [(&small, "c=1e4"), (proj, "c=1e5")] {
        let med = report.relative_estimates("projection-median");
        let pr = report.relative_estimates("projection");
        let ratio = variance(&med) / variance(&pr);
        let se = bootstrap_ratio_se(&med, &pr, SEED + 12);
        let close = ratio > 1.0 && (ratio - target).abs() <= 3.0 * se;
        ok &= close;
        notes.push(format!(
            "median/projection variance at {name} {ratio:.3} (se {se:.3}, target {target:.3}), \
             projection mean bias {:+.4}",
            mean(&pr) - 1.0
        ));
    }

    let secs = start.elapsed().as_secs_f64();
    ok &= secs < SUITE_BUDGET_S;
    notes.push(format!("acceptance runtime {secs:.0} s"));
    ensure(ok, notes.join("; "))
}

fn main() -> ExitCode {
    let start = Instant::now();
    let criteria: Vec<(usize, Box<dyn Fn() -> Check>)> = vec![
        (1, Box::new(criterion_1)),
        (2, Box::new(criterion_2)),
        (3, Box::new(criterion_3)),
        (4, Box::new(criterion_4)),
        (5, Box::new(criterion_5)),
        (6, Box::new(criterion_6)),
        (7, Box::new(criterion_7)),
        (8, Box::new(criterion_8)),
        (9, Box::new(move || criterion_9(start))),
    ];
    let examples: Vec<(&str, Box<dyn Fn() -> Check>)> = vec![
        ("geometric", Box::new(example_geometric)),
        ("geometric-recursive", Box::new(example_geometric_recursive)),
        ("projection", Box::new(example_projection)),
    ];
    let mut failed = 0;
    for (n, check) in criteria {
        let t = Instant::now();
        let (verdict, detail) = match check() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("criterion {n} {verdict}: {detail} [{:.1} s]", t.elapsed().as_secs_f64());
    }
    for (name, check) in examples {
        let (verdict, detail) = match check() {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("example {name} {verdict}: {detail}");
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} checks failed");
        ExitCode::FAILURE
    }
}
