use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use toalift::gradcheck::{check_gradients_with, GradientCheckConfig};
use toalift::model::ScenarioRecord;
use toalift::{
    curvature_indicator, jacobian, lm_solve, run_experiment, run_experiment_with_workers,
    EvalPoint, ExperimentConfig, LmParams, MeasurementSet, ObjectiveKind, Point, Scenario,
    SolveResult, Strategy, TerminationReason,
};

use crate::table::{opt6, sig6, Table};

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))
}

#[derive(Debug, Serialize)]
struct DemoConfig {
    x0: [f64; 2],
    lambda0: f64,
    lm: LmParams,
}

#[derive(Debug, Serialize)]
struct DemoRun {
    objective: ObjectiveKind,
    final_position: Point,
    final_lambdas: Vec<f64>,
    final_cost: f64,
    termination: TerminationReason,
    iterations: usize,
    function_evals: usize,
}

impl DemoRun {
    fn new(kind: ObjectiveKind, r: &SolveResult) -> Self {
        DemoRun {
            objective: kind,
            final_position: r.final_point.position.clone(),
            final_lambdas: r.final_point.lambdas.clone(),
            final_cost: r.final_cost,
            termination: r.reason,
            iterations: r.iterations,
            function_evals: r.function_evals,
        }
    }
}

#[derive(Debug, Serialize)]
struct DemoSummary {
    scenario: ScenarioRecord,
    config: DemoConfig,
    plain: DemoRun,
    lifted: DemoRun,
}

fn write_trace(path: &Path, r: &SolveResult) -> Result<()> {
    let lifted = !r.final_point.lambdas.is_empty();
    let mut w = csv_writer(path)?;
    let mut header = vec!["iter", "x", "y"];
    if lifted {
        header.push("lambda");
    }
    header.push("cost");
    w.write_record(&header)?;
    for (i, (p, c)) in r.trace.iter().zip(&r.trace_costs).enumerate() {
        let mut row = vec![i.to_string()];
        row.extend(p.position.coords().iter().map(f64::to_string));
        row.extend(p.lambdas.iter().map(f64::to_string));
        row.push(c.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn demo2d(out: &Path, x0: [f64; 2], lambda0: f64) -> Result<bool> {
    let s = Scenario::demo_2d();
    let m = MeasurementSet::exact(&s);
    let params = LmParams::default();
    let start = Point::new(x0.to_vec())?;
    let lifted_kind = ObjectiveKind::LiftedRange { k: 1 };
    let plain = lm_solve(
        ObjectiveKind::PlainRange,
        &s,
        &m,
        &EvalPoint::plain(start.clone()),
        &params,
    )?;
    let lifted = lm_solve(
        lifted_kind,
        &s,
        &m,
        &EvalPoint::lifted(start, vec![lambda0]),
        &params,
    )?;

    create_dir(out)?;
    write_trace(&out.join("plain_trace.csv"), &plain)?;
    write_trace(&out.join("lifted_trace.csv"), &lifted)?;
    let config = DemoConfig {
        x0,
        lambda0,
        lm: params,
    };
    write_json(&out.join("config.json"), &config)?;
    let summary = DemoSummary {
        scenario: ScenarioRecord::new(&s, &m),
        config,
        plain: DemoRun::new(ObjectiveKind::PlainRange, &plain),
        lifted: DemoRun::new(lifted_kind, &lifted),
    };
    write_json(&out.join("demo.json"), &summary)?;

    let mut t = Table::new([
        "objective",
        "x",
        "y",
        "lambda",
        "cost",
        "termination",
        "iterations",
    ]);
    for run in [&summary.plain, &summary.lifted] {
        let c = run.final_position.coords();
        t.row(vec![
            run.objective.to_string(),
            sig6(c[0]),
            sig6(c[1]),
            run.final_lambdas.first().map_or("-".into(), |l| sig6(*l)),
            sig6(run.final_cost),
            run.termination.to_string(),
            run.iterations.to_string(),
        ]);
    }
    print!("{}", t.render());
    println!("wrote {}", out.display());
    Ok(true)
}

/// Input of the `curvature` subcommand. Without a scenario the noiseless
/// demo is used; without a point, the origin.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurvatureConfig {
    pub scenario: Option<ScenarioRecord>,
    pub point: Option<Vec<f64>>,
    pub range_offset: f64,
}

#[derive(Debug, Serialize)]
struct CurvatureReport {
    point: Point,
    indicator: f64,
    classification: &'static str,
    clamped: bool,
}

pub struct CurvatureRequest {
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub point: Option<Vec<f64>>,
    pub range_offset: Option<f64>,
}

pub fn classify(indicator: f64) -> &'static str {
    if indicator < 0.0 {
        "saddle (escape direction exists)"
    } else if indicator > 0.0 {
        "possibly trapped"
    } else {
        "flat (zero curvature)"
    }
}

pub fn curvature(req: CurvatureRequest) -> Result<bool> {
    let mut config: CurvatureConfig = match &req.config {
        Some(p) => read_json(p)?,
        None => CurvatureConfig::default(),
    };
    if let Some(p) = req.point {
        config.point = Some(p);
    }
    if let Some(o) = req.range_offset {
        config.range_offset = o;
    }
    let (s, m) = match config.scenario.clone() {
        Some(r) => r.into_parts()?,
        None => {
            let s = Scenario::demo_2d();
            let m = MeasurementSet::exact(&s);
            (s, m)
        }
    };
    let m = m.with_range_offset(config.range_offset);
    let point = Point::new(config.point.clone().unwrap_or_else(|| vec![0.0; s.dim()]))?;
    let c = curvature_indicator(&point, &s, &m)?;
    let report = CurvatureReport {
        point,
        indicator: c.value,
        classification: classify(c.value),
        clamped: c.clamped,
    };

    println!("point:          {:?}", report.point.coords());
    println!("indicator:      {}", sig6(report.indicator));
    println!("classification: {}", report.classification);
    if report.clamped {
        println!("clamped:        the point coincides with a station; result is not meaningful");
    }
    if let Some(out) = &req.out {
        create_dir(out)?;
        write_json(&out.join("config.json"), &config)?;
        write_json(&out.join("curvature.json"), &report)?;
    }
    Ok(true)
}

pub struct MonteCarloRequest {
    pub out: PathBuf,
    pub config: Option<PathBuf>,
    pub seed: Option<u64>,
    pub trials: Option<usize>,
    pub sigma: Option<f64>,
    pub stations: Option<usize>,
    pub dim: Option<usize>,
    pub strategies: Vec<Strategy>,
    pub workers: Option<usize>,
    pub no_geometry_filter: bool,
}

pub fn experiment_config(req: &MonteCarloRequest) -> Result<ExperimentConfig> {
    let mut c: ExperimentConfig = match &req.config {
        Some(p) => read_json(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(v) = req.seed {
        c.master_seed = v;
    }
    if let Some(v) = req.trials {
        c.trials = v;
    }
    if let Some(v) = req.sigma {
        c.sigma = v;
    }
    if let Some(v) = req.stations {
        c.n_stations = v;
    }
    if let Some(v) = req.dim {
        c.dim = v;
    }
    if !req.strategies.is_empty() {
        c.strategies = req.strategies.clone();
    }
    if req.no_geometry_filter {
        c.geometry_filter = None;
    }
    c.validate()?;
    Ok(c)
}

pub fn montecarlo(req: MonteCarloRequest) -> Result<bool> {
    let config = experiment_config(&req)?;
    let out = &req.out;
    create_dir(out)?;
    write_json(&out.join("config.json"), &config)?;

    let result = match req.workers {
        Some(w) if w > 0 => run_experiment_with_workers(&config, w)?,
        _ => run_experiment(&config)?,
    };

    let mut w = csv_writer(&out.join("trials.csv"))?;
    for row in result.trial_rows() {
        w.serialize(row)?;
    }
    w.flush()?;

    let mut w = csv_writer(&out.join("summary.csv"))?;
    for row in &result.summary {
        w.serialize(row)?;
    }
    w.flush()?;
    write_json(&out.join("summary.json"), &result.summary)?;

    let mut w = csv_writer(&out.join("scatter.csv"))?;
    let mut header = vec!["trial_index".to_string()];
    header.extend(config.strategies.iter().map(Strategy::to_string));
    w.write_record(&header)?;
    for t in &result.trials {
        let mut row = vec![t.trial_index.to_string()];
        row.extend(t.outcomes.iter().map(|o| o.error.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;

    let mut t = Table::new([
        "strategy",
        "sigma",
        "M",
        "mean",
        "std",
        "L",
        "mean w/o L",
        "std w/o L",
    ]);
    for r in &result.summary {
        t.row(vec![
            r.strategy.clone(),
            sig6(r.sigma),
            r.trials.to_string(),
            sig6(r.mean),
            sig6(r.std),
            r.outliers.to_string(),
            opt6(r.mean_no_outliers),
            opt6(r.std_no_outliers),
        ]);
    }
    print!("{}", t.render());
    println!("wrote {}", out.display());
    Ok(true)
}

pub struct GradientRequest {
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub points: Option<usize>,
    pub corrupt_jacobian: bool,
}

pub fn check_gradients(req: GradientRequest) -> Result<bool> {
    let mut config: GradientCheckConfig = match &req.config {
        Some(p) => read_json(p)?,
        None => GradientCheckConfig::default(),
    };
    if let Some(v) = req.seed {
        config.seed = v;
    }
    if let Some(v) = req.points {
        config.points_per_kind = v;
    }
    let corrupt = req.corrupt_jacobian;
    let report = check_gradients_with(&config, |kind, p, s, m| {
        let mut j = jacobian(kind, p, s, m)?;
        if corrupt {
            j.matrix[(0, 0)] *= 1.01;
        }
        Ok(j)
    })?;

    let mut t = Table::new([
        "objective",
        "points",
        "lambda=0",
        "max rel err",
        "lambda col",
        "status",
    ]);
    for k in &report.kinds {
        let ok = k.max_relative_error < report.tolerance
            && k.max_lambda_column_at_zero
                .is_none_or(|v| v < report.tolerance);
        t.row(vec![
            k.kind.to_string(),
            k.points.to_string(),
            k.zero_lambda_points.to_string(),
            sig6(k.max_relative_error),
            opt6(k.max_lambda_column_at_zero),
            if ok { "ok" } else { "FAIL" }.to_string(),
        ]);
    }
    print!("{}", t.render());
    let passed = report.passed();
    println!(
        "max relative error {} (tolerance {}): {}",
        sig6(report.max_relative_error()),
        sig6(report.tolerance),
        if passed { "pass" } else { "FAIL" }
    );
    if let Some(out) = &req.out {
        create_dir(out)?;
        write_json(&out.join("config.json"), &config)?;
        write_json(&out.join("gradients.json"), &report)?;
    }
    Ok(passed)
}
