//! Acceptance gate. Prints one PASS/FAIL line per criterion, with details
//! indented below it, and exits non-zero if any criterion fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use toalift::gradcheck::{check_gradients, GradientCheckConfig};
use toalift::model::ScenarioGenerator;
use toalift::{
    apply_noise, cost, curvature_indicator, lm_solve, reduce_lambdas, run_experiment,
    run_experiment_with_workers, true_ranges, EvalPoint, ExperimentConfig, ExperimentOutput,
    LmParams, MeasurementSet, ObjectiveKind, Point, Scenario, Strategy, SummaryRow,
};

const M_TABLE: usize = 2000;
const OUTLIER_THRESHOLD: f64 = 0.5;

struct Outcome {
    passed: bool,
    details: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Outcome {
            passed: true,
            details: Vec::new(),
        }
    }

    fn check(&mut self, ok: bool, what: impl Into<String>) {
        self.passed &= ok;
        let tag = if ok { "ok  " } else { "FAIL" };
        self.details.push(format!("{tag} {}", what.into()));
    }

    fn note(&mut self, what: impl Into<String>) {
        self.details.push(format!("info {}", what.into()));
    }
}

fn demo_start() -> Point {
    Point::xy(2.0, -1.0)
}

fn near(p: &Point, x: f64, y: f64, tol: f64) -> bool {
    (p.coords()[0] - x).abs() < tol && (p.coords()[1] - y).abs() < tol
}

fn fmt_point(p: &Point) -> String {
    let c: Vec<String> = p.coords().iter().map(|v| format!("{v:.6e}")).collect();
    format!("({})", c.join(", "))
}

fn criterion_demo() -> Outcome {
    let mut out = Outcome::new();
    let started = Instant::now();
    let s = Scenario::demo_2d();
    let m = MeasurementSet::exact(&s);
    let params = LmParams::default();
    let plain = lm_solve(
        ObjectiveKind::PlainRange,
        &s,
        &m,
        &EvalPoint::plain(demo_start()),
        &params,
    )
    .unwrap();
    let lifted = lm_solve(
        ObjectiveKind::LiftedRange { k: 1 },
        &s,
        &m,
        &EvalPoint::lifted(demo_start(), vec![1.0]),
        &params,
    )
    .unwrap();
    let elapsed = started.elapsed();

    let p = &plain.final_point.position;
    out.check(
        near(p, 0.0, 0.0, 1e-3),
        format!(
            "plain from (2,-1) ends within 1e-3 of (0,0): {} [{}]",
            fmt_point(p),
            plain.reason
        ),
    );
    let q = &lifted.final_point.position;
    out.check(
        near(q, 1.0, 0.0, 1e-3),
        format!(
            "lifted(1,1) from (2,-1) ends within 1e-3 of (1,0): {} [{}]",
            fmt_point(q),
            lifted.reason
        ),
    );
    let lambda = lifted.final_point.lambdas[0];
    out.check(
        lambda.abs() < 1e-3,
        format!("final |lambda| < 1e-3: {:.3e}", lambda.abs()),
    );
    out.check(
        elapsed < Duration::from_secs(1),
        format!("runtime < 1 s: {elapsed:?}"),
    );

    let mirrored = Point::xy(-2.0, 1.0);
    let plain_m = lm_solve(
        ObjectiveKind::PlainRange,
        &s,
        &m,
        &EvalPoint::plain(mirrored.clone()),
        &params,
    )
    .unwrap();
    let lifted_m = lm_solve(
        ObjectiveKind::LiftedRange { k: 1 },
        &s,
        &m,
        &EvalPoint::lifted(mirrored, vec![1.0]),
        &params,
    )
    .unwrap();
    out.note(format!(
        "from (-2,1): plain ends at {}, lifted(1,1) ends at {}",
        fmt_point(&plain_m.final_point.position),
        fmt_point(&lifted_m.final_point.position)
    ));
    out
}

fn criterion_curvature() -> Outcome {
    let mut out = Outcome::new();
    let s = Scenario::demo_2d();
    let m = MeasurementSet::exact(&s);
    let origin = Point::xy(0.0, 0.0);
    let c = curvature_indicator(&origin, &s, &m).unwrap();
    let expected = 2.0 - 5.0f64.sqrt();
    out.check(
        (c.value - expected).abs() < 1e-10,
        format!(
            "indicator at (0,0) = {:.12} vs 2 - sqrt(5) = {expected:.12}",
            c.value
        ),
    );

    let kind = ObjectiveKind::LiftedRange { k: 1 };
    let at = |l: f64| cost(kind, &EvalPoint::lifted(origin.clone(), vec![l]), &s, &m).unwrap();
    let h = 1e-3;
    let halved = (at(h) - 2.0 * at(0.0) + at(-h)) / (h * h) / 2.0;
    let rel = ((halved - c.value) / c.value).abs();
    out.check(
        rel < 1e-4,
        format!("half the finite-difference second derivative = {halved:.10}, relative error {rel:.3e} < 1e-4"),
    );
    out
}

fn table_config(sigma: f64, strategies: Vec<Strategy>) -> ExperimentConfig {
    ExperimentConfig {
        dim: 2,
        n_stations: 4,
        sigma,
        trials: M_TABLE,
        outlier_threshold: OUTLIER_THRESHOLD,
        strategies,
        ..ExperimentConfig::default()
    }
}

fn describe(row: &SummaryRow) -> String {
    format!(
        "{}: L = {}, mean = {:.6}, mean without outliers = {}",
        row.strategy,
        row.outliers,
        row.mean,
        row.mean_no_outliers
            .map_or("n/a".into(), |v| format!("{v:.6}"))
    )
}

fn in_range(v: Option<f64>, lo: f64, hi: f64) -> bool {
    v.is_some_and(|v| v >= lo && v <= hi)
}

fn criterion_table_sigma_001(run: &ExperimentOutput, elapsed: Duration) -> Outcome {
    let mut out = Outcome::new();
    let plain = &run.summary[0];
    let lifted = &run.summary[1];
    out.note(describe(plain));
    out.note(describe(lifted));
    out.check(
        lifted.outliers == 0,
        format!("lifted L = 0: {}", lifted.outliers),
    );
    let fraction = plain.outliers as f64 / plain.trials as f64;
    out.check(
        (0.05..=0.30).contains(&fraction),
        format!(
            "plain outlier fraction in [5%, 30%]: {:.2}%",
            100.0 * fraction
        ),
    );
    out.check(
        in_range(plain.mean_no_outliers, 0.02, 0.05),
        format!(
            "plain mean without outliers in [0.02, 0.05]: {:?}",
            plain.mean_no_outliers
        ),
    );
    out.check(
        in_range(lifted.mean_no_outliers, 0.02, 0.06),
        format!(
            "lifted mean without outliers in [0.02, 0.06]: {:?}",
            lifted.mean_no_outliers
        ),
    );
    out.check(
        elapsed < Duration::from_secs(120),
        format!("runtime < 2 min: {elapsed:?}"),
    );
    out
}

fn criterion_ordering() -> Outcome {
    let mut out = Outcome::new();
    for sigma in [0.05, 0.1] {
        let run = run_experiment(&table_config(
            sigma,
            vec![Strategy::Plain, Strategy::lifted(1, 1.0).unwrap()],
        ))
        .unwrap();
        let (plain, lifted) = (&run.summary[0], &run.summary[1]);
        out.note(format!("sigma {sigma}: {}", describe(plain)));
        out.note(format!("sigma {sigma}: {}", describe(lifted)));
        if sigma == 0.05 {
            out.check(
                lifted.outliers < plain.outliers
                    && plain.outliers as f64 >= 1.5 * lifted.outliers as f64,
                format!(
                    "sigma 0.05: lifted L strictly below plain L and at least 1.5x fewer: {} vs {}",
                    lifted.outliers, plain.outliers
                ),
            );
        } else {
            out.check(
                lifted.outliers <= plain.outliers,
                format!(
                    "sigma 0.1: lifted L <= plain L: {} vs {}",
                    lifted.outliers, plain.outliers
                ),
            );
        }
    }
    out
}

fn criterion_restart(run: &ExperimentOutput) -> Outcome {
    let mut out = Outcome::new();
    let lifted = &run.summary[1];
    let restart = &run.summary[2];
    out.note(describe(restart));
    out.check(
        restart.outliers == 0,
        format!("restart L = 0: {}", restart.outliers),
    );
    out.check(
        restart.mean < lifted.mean,
        format!(
            "restart mean {:.6} < lifted mean {:.6} on the same trials",
            restart.mean, lifted.mean
        ),
    );
    out.check(
        (0.015..=0.04).contains(&restart.mean),
        format!("restart mean in [0.015, 0.04]: {:.6}", restart.mean),
    );
    out
}

fn criterion_equivalence() -> Outcome {
    let mut out = Outcome::new();
    let params = LmParams::default();
    let tol = 10.0 * params.step_tolerance;
    // The k variables start at 1/sqrt(k) each, so the initial lift has the
    // same magnitude for every k.
    let strategies: Vec<Strategy> = (1..=3)
        .map(|k| Strategy::lifted(k, 1.0 / (k as f64).sqrt()).unwrap())
        .collect();
    let config = ExperimentConfig {
        n_stations: 10,
        sigma: 0.01,
        trials: 500,
        geometry_filter: None,
        strategies,
        lm: params,
        ..ExperimentConfig::default()
    };
    let run = run_experiment(&config).unwrap();
    let errors: Vec<Vec<f64>> = (0..3).map(|i| run.errors(i)).collect();
    let agreeing = (0..config.trials)
        .filter(|&t| (0..3).all(|a| (a + 1..3).all(|b| (errors[a][t] - errors[b][t]).abs() <= tol)))
        .count();
    let fraction = agreeing as f64 / config.trials as f64;
    out.check(
        fraction >= 0.99,
        format!(
            "k = 1, 2, 3 errors agree pairwise within {tol:.0e} in >= 99% of trials: {agreeing}/{}",
            config.trials
        ),
    );

    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    let mut evaluations = 0;
    while evaluations < 100_000 {
        let dim = rng.random_range(2..=3);
        let n = rng.random_range(dim + 1..=10);
        let s = ScenarioGenerator::new(dim, n, 10.0)
            .unwrap()
            .with_filter(None)
            .generate(&mut rng)
            .unwrap();
        let m = apply_noise(&true_ranges(&s), 0.1, &mut rng).unwrap();
        for _ in 0..100 {
            let p = Point::new((0..dim).map(|_| rng.random_range(-5.0..15.0)).collect()).unwrap();
            let k = rng.random_range(2..=5);
            let lambdas: Vec<f64> = (0..k).map(|_| rng.random_range(-3.0..3.0)).collect();
            let single = vec![reduce_lambdas(&lambdas)];
            for (multi, one) in [
                (
                    ObjectiveKind::LiftedRange { k },
                    ObjectiveKind::LiftedRange { k: 1 },
                ),
                (
                    ObjectiveKind::LiftedSquared { k },
                    ObjectiveKind::LiftedSquared { k: 1 },
                ),
            ] {
                let a = cost(
                    multi,
                    &EvalPoint::lifted(p.clone(), lambdas.clone()),
                    &s,
                    &m,
                )
                .unwrap();
                let b = cost(one, &EvalPoint::lifted(p.clone(), single.clone()), &s, &m).unwrap();
                worst = worst.max((a - b).abs() / a.abs().max(f64::MIN_POSITIVE));
                evaluations += 1;
            }
        }
    }
    out.check(
        worst <= 64.0 * f64::EPSILON,
        format!("multi-lambda cost identity over {evaluations} evaluations, worst relative difference {worst:.3e} <= 64 eps"),
    );
    out
}

fn random_solves(count: usize, seed: u64) -> (usize, Vec<String>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut violations = Vec::new();
    for i in 0..count {
        let dim = rng.random_range(2..=3);
        let n = rng.random_range(dim + 1..=8);
        let s = ScenarioGenerator::new(dim, n, 10.0)
            .unwrap()
            .generate(&mut rng)
            .unwrap();
        let sigma = [0.0, 0.01, 0.1][i % 3];
        let m = apply_noise(&true_ranges(&s), sigma, &mut rng).unwrap();
        let kind = match i % 4 {
            0 => ObjectiveKind::PlainRange,
            1 => ObjectiveKind::LiftedRange { k: 1 },
            2 => ObjectiveKind::LiftedRange { k: 2 },
            _ => ObjectiveKind::LiftedSquared { k: 1 },
        };
        let position =
            Point::new((0..dim).map(|_| rng.random_range(0.0..=10.0)).collect()).unwrap();
        let x0 = EvalPoint::lifted(position, vec![rng.random_range(0.1..2.0); kind.n_lambdas()]);
        let mut params = LmParams::default();
        if i % 5 == 0 {
            params.max_iterations = rng.random_range(1..10);
        }
        if i % 7 == 0 {
            params.max_function_evals = Some(rng.random_range(1..20));
        }
        let r = lm_solve(kind, &s, &m, &x0, &params).unwrap();
        let budget = params.function_eval_budget(kind.n_variables(dim));
        let ok = r.trace_costs.windows(2).all(|w| w[1] < w[0])
            && r.final_cost <= r.trace_costs[0]
            && r.trace.len() == r.iterations + 1
            && r.trace.first() == Some(&x0)
            && r.iterations <= params.max_iterations
            && r.function_evals <= budget
            && r.function_evals > r.iterations;
        if !ok {
            violations.push(format!(
                "solve {i}: {kind}, {} iterations, {} evaluations",
                r.iterations, r.function_evals
            ));
        }
    }
    (count, violations)
}

fn zero_lambda_tracks_plain(count: usize, seed: u64) -> usize {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = LmParams::default();
    let mut matching = 0;
    for _ in 0..count {
        let s = ScenarioGenerator::new(2, 4, 10.0)
            .unwrap()
            .generate(&mut rng)
            .unwrap();
        let m = apply_noise(&true_ranges(&s), 0.01, &mut rng).unwrap();
        let p = Point::new((0..2).map(|_| rng.random_range(0.0..=10.0)).collect()).unwrap();
        let plain = lm_solve(
            ObjectiveKind::PlainRange,
            &s,
            &m,
            &EvalPoint::plain(p.clone()),
            &params,
        )
        .unwrap();
        let lifted = lm_solve(
            ObjectiveKind::LiftedRange { k: 1 },
            &s,
            &m,
            &EvalPoint::lifted(p, vec![0.0]),
            &params,
        )
        .unwrap();
        let same = plain.trace.len() == lifted.trace.len()
            && plain
                .trace
                .iter()
                .zip(&lifted.trace)
                .all(|(a, b)| a.position == b.position && b.lambdas == [0.0])
            && plain.trace_costs == lifted.trace_costs;
        matching += same as usize;
    }
    matching
}

fn criterion_properties() -> Outcome {
    let mut out = Outcome::new();
    let report = check_gradients(&GradientCheckConfig::default()).unwrap();
    for k in &report.kinds {
        out.note(format!(
            "{}: {} points ({} with lambda = 0), max relative error {:.3e}",
            k.kind, k.points, k.zero_lambda_points, k.max_relative_error
        ));
    }
    out.check(
        report.passed() && report.kinds.iter().all(|k| k.points >= 100),
        format!(
            "analytic vs finite-difference Jacobians < 1e-6 over 100 points per kind: max {:.3e}",
            report.max_relative_error()
        ),
    );

    let (count, violations) = random_solves(1000, 77);
    for v in violations.iter().take(5) {
        out.note(v.clone());
    }
    out.check(
        violations.is_empty(),
        format!(
            "cost monotonicity and budgets on {count} random solves: {} violations",
            violations.len()
        ),
    );

    let matching = zero_lambda_tracks_plain(200, 78);
    out.check(
        matching == 200,
        format!("lambda = 0 lifted solve equals plain solve iterate by iterate: {matching}/200"),
    );

    let config = ExperimentConfig {
        trials: 500,
        sigma: 0.05,
        master_seed: 31,
        strategies: vec![
            Strategy::Plain,
            Strategy::lifted(1, 1.0).unwrap(),
            Strategy::restart(1, 1.0).unwrap(),
        ],
        ..ExperimentConfig::default()
    };
    let runs: Vec<(String, ExperimentOutput)> = [1, 4, 16]
        .into_iter()
        .map(|w| {
            let r = run_experiment_with_workers(&config, w).unwrap();
            (serde_json::to_string(&r.summary).unwrap(), r)
        })
        .collect();
    let identical = runs
        .iter()
        .all(|(s, r)| *s == runs[0].0 && r.trials == runs[0].1.trials);
    out.check(
        identical,
        "run_experiment under 1, 4 and 16 workers gives bit-identical summaries and trials",
    );
    out
}

fn criterion_noiseless() -> Outcome {
    let mut out = Outcome::new();
    let run = run_experiment(&table_config(0.0, vec![Strategy::lifted(1, 1.0).unwrap()])).unwrap();
    let lifted = &run.summary[0];
    out.note(describe(lifted));
    out.check(
        lifted.outliers == 0,
        format!("lifted L = 0 at sigma 0: {}", lifted.outliers),
    );
    out
}

fn main() -> ExitCode {
    let mut results: Vec<(&str, Outcome)> = Vec::new();
    results.push(("1 demo reproduction", criterion_demo()));
    results.push(("2 curvature indicator", criterion_curvature()));

    let started = Instant::now();
    let sigma_001 = run_experiment(&table_config(
        0.01,
        vec![
            Strategy::Plain,
            Strategy::lifted(1, 1.0).unwrap(),
            Strategy::restart(1, 1.0).unwrap(),
        ],
    ))
    .unwrap();
    let elapsed = started.elapsed();
    results.push((
        "3 sigma 0.01 table row",
        criterion_table_sigma_001(&sigma_001, elapsed),
    ));
    results.push((
        "4 outlier ordering at sigma 0.05 and 0.1",
        criterion_ordering(),
    ));
    results.push(("5 restart at sigma 0.01", criterion_restart(&sigma_001)));
    results.push(("6 multi-lambda equivalence", criterion_equivalence()));
    results.push(("7 property suite", criterion_properties()));
    results.push(("8 noiseless lifted has no outliers", criterion_noiseless()));

    let mut failed = 0;
    for (name, outcome) in &results {
        let tag = if outcome.passed { "PASS" } else { "FAIL" };
        println!("{tag} criterion {name}");
        for d in &outcome.details {
            println!("    {d}");
        }
        failed += !outcome.passed as usize;
    }
    println!(
        "{} of {} criteria passed",
        results.len() - failed,
        results.len()
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
