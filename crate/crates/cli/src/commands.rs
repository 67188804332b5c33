use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::time::Instant;

use bham::metrics::MetricReport;
use bham::selection::grid;
use bham::sim::{generate_replicate, SimConfig, SimSample};
use bham::tune::log_spaced;
use bham::{cv_path, BhamModel, CvResult, EmSettings, Family, SmoothSpec, SsPrior, TuneGrid};
use serde::Serialize;

use crate::config::SmoothConfig;
use crate::error::CliError;
use crate::ingest::{ingest_csv, Ingested};
use crate::output::{csv_bytes, num, Outputs};
use crate::{FitArgs, ModelArgs, PredictArgs, ReportArgs, SimulateArgs, TuneArgs};

const CURVE_POINTS: usize = 101;

pub fn simulate(args: &SimulateArgs) -> Result<(), CliError> {
    let config = SimConfig {
        n_train: args.n_train,
        n_test: args.n_test,
        p: args.p,
        family: args.family.into(),
        dispersion: args.dispersion,
        seed: args.seed,
    };
    let data = generate_replicate(&config, args.replicate)?;
    let mut out = Outputs::default();
    out.add("train.csv", sample_csv(&data.train)?);
    out.add("test.csv", sample_csv(&data.test)?);
    report_written(out.commit(&args.out_dir)?);
    Ok(())
}

fn sample_csv(sample: &SimSample) -> Result<Vec<u8>, CliError> {
    let d = sample.to_dataset();
    let header: Vec<&str> = d.names().iter().map(String::as_str).collect();
    let rows = (0..d.n_rows()).map(|i| d.columns().iter().map(|c| num(c[i])).collect());
    csv_bytes(&header, rows)
}

/// Training data, smooth specs and prior shared by `fit` and `tune`.
struct Prepared {
    train: Ingested,
    specs: Vec<SmoothSpec>,
    family: Family,
    settings: EmSettings,
}

fn prepare(args: &ModelArgs) -> Result<Prepared, CliError> {
    let train = ingest_csv(&args.data, Some(&args.outcome), args.predictors.as_deref())?;
    let config = match &args.smooth_config {
        Some(path) => SmoothConfig::load(path)?,
        None => SmoothConfig::default(),
    };
    let specs = config.specs(train.predictors.names(), args.default_k)?;
    let settings = EmSettings {
        epsilon: args.epsilon,
        max_em_iter: args.max_iter,
        ..EmSettings::default()
    };
    settings.validate()?;
    if !(0.0..=1.0).contains(&args.threshold) {
        return Err(CliError::Usage("--threshold must lie in [0, 1]".into()));
    }
    Ok(Prepared {
        train,
        specs,
        family: args.family.into(),
        settings,
    })
}

fn make_prior(args: &ModelArgs, s0: f64) -> Result<SsPrior, CliError> {
    Ok(SsPrior::new(s0, args.s1)?
        .with_kind(args.prior.into())
        .with_beta(args.a, args.b)?)
}

#[derive(Debug, Serialize)]
struct Timing {
    cv_seconds: f64,
    final_seconds: f64,
    total_seconds: f64,
}

#[derive(Debug, Serialize)]
struct MetricsFile {
    n_train: usize,
    dropped_rows: usize,
    in_sample: MetricReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    n_test: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    test_dropped_rows: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    out_of_sample: Option<MetricReport>,
}

pub fn fit(args: &FitArgs) -> Result<(), CliError> {
    let start = Instant::now();
    let prep = prepare(&args.model)?;
    let prior = make_prior(&args.model, args.s0)?;
    let model = BhamModel::fit(
        &prep.train.predictors,
        &prep.specs,
        &prep.train.outcome,
        prep.family,
        &prior,
        args.model.solver.into(),
        &prep.settings,
    )?;
    let final_seconds = start.elapsed().as_secs_f64();
    let timing = Timing {
        cv_seconds: 0.0,
        final_seconds,
        total_seconds: final_seconds,
    };
    let out = model_outputs(&args.model, &prep, &model, None, &timing)?;
    report_written(out.commit(&args.model.out_dir)?);
    Ok(())
}

pub fn tune(args: &TuneArgs) -> Result<(), CliError> {
    let m = &args.model;
    let start = Instant::now();
    let prep = prepare(m)?;
    if args.s0_count == 0 {
        return Err(CliError::Usage("--s0-count must be positive".into()));
    }
    let grid = TuneGrid {
        s0_values: log_spaced(args.s0_min, args.s0_max, args.s0_count),
        s1: m.s1,
        folds: args.folds,
        seed: args.seed,
        criterion: args.criterion.into(),
    };
    grid.validate()?;
    let base = make_prior(m, grid.s0_values[0])?;
    let cv = cv_path(
        &prep.train.predictors,
        &prep.specs,
        &prep.train.outcome,
        prep.family,
        &base,
        &grid,
        m.solver.into(),
        &prep.settings,
    )?;
    let cv_done = Instant::now();
    if cv.any_failed() {
        eprintln!("warning: some cross-validation fits failed and were scored as worst");
    }
    let mut model = BhamModel::fit(
        &prep.train.predictors,
        &prep.specs,
        &prep.train.outcome,
        prep.family,
        &base.with_s0(cv.selected_s0)?,
        m.solver.into(),
        &prep.settings,
    )?;
    model.selected_s0 = Some(cv.selected_s0);
    let end = Instant::now();
    let timing = Timing {
        cv_seconds: (cv_done - start).as_secs_f64(),
        final_seconds: (end - cv_done).as_secs_f64(),
        total_seconds: (end - start).as_secs_f64(),
    };
    let out = model_outputs(m, &prep, &model, Some(&cv), &timing)?;
    report_written(out.commit(&m.out_dir)?);
    Ok(())
}

fn model_outputs(
    args: &ModelArgs,
    prep: &Prepared,
    model: &BhamModel,
    cv: Option<&CvResult>,
    timing: &Timing,
) -> Result<Outputs, CliError> {
    let mut out = Outputs::default();
    let train = &prep.train;
    let mut json = model.to_json()?;
    json.push('\n');
    out.add("model.bham", json.into_bytes());

    if let Some(cv) = cv {
        let mut rows = Vec::with_capacity(cv.cells.len());
        for (i, s0) in cv.s0_values.iter().enumerate() {
            for (f, v) in cv.fold_values(i).into_iter().enumerate() {
                rows.push(vec![
                    num(*s0),
                    f.to_string(),
                    num(v),
                    num(cv.mean[i]),
                    num(cv.se[i]),
                ]);
            }
        }
        out.add(
            "cv_table.csv",
            csv_bytes(&["s0", "fold", "criterion", "mean", "se"], rows)?,
        );
    }

    let eta = model.predict_eta(&train.predictors)?;
    let mu = model.family.linkinv(&eta);
    let fitted_rows = (0..eta.len()).map(|i| vec![num(train.outcome[i]), num(eta[i]), num(mu[i])]);
    out.add("fitted.csv", csv_bytes(&["y", "eta", "mu"], fitted_rows)?);

    let mut metrics = MetricsFile {
        n_train: train.outcome.len(),
        dropped_rows: train.dropped_rows,
        in_sample: MetricReport::compute(model.family, &train.outcome, &mu, model.fit.phi)?,
        n_test: None,
        test_dropped_rows: None,
        out_of_sample: None,
    };
    if let Some(path) = &args.test_data {
        let names: Vec<String> = model
            .variable_names()
            .iter()
            .map(|s| s.to_string())
            .collect();
        let test = ingest_csv(path, Some(&args.outcome), Some(&names))?;
        let mu_test = model.predict(&test.predictors)?;
        metrics.n_test = Some(test.outcome.len());
        metrics.test_dropped_rows = Some(test.dropped_rows);
        metrics.out_of_sample = Some(MetricReport::compute(
            model.family,
            &test.outcome,
            &mu_test,
            model.fit.phi,
        )?);
    }
    out.add_json("metrics.json", &metrics)?;

    let selection = model.selection(args.threshold);
    let rows = selection.variables.iter().map(|v| {
        vec![
            v.variable.clone(),
            num(v.p_lin),
            num(v.p_nonlin),
            v.category.as_str().to_string(),
        ]
    });
    out.add(
        "selection.csv",
        csv_bytes(&["variable", "p_lin", "p_nonlin", "category"], rows)?,
    );

    for (j, name) in model.variable_names().iter().enumerate() {
        let x = train.predictors.column(name)?;
        let lo = x.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let c = model.curve(j, &grid(lo, hi, CURVE_POINTS))?;
        let (lower, upper) = (c.lower(), c.upper());
        let rows = (0..c.x.len()).map(|i| {
            let opt = |v: &Option<Vec<f64>>| v.as_ref().map_or(String::new(), |v| num(v[i]));
            vec![
                num(c.x[i]),
                num(c.fit[i]),
                opt(&c.se),
                opt(&lower),
                opt(&upper),
            ]
        });
        out.add(
            format!("curves/{name}.csv"),
            csv_bytes(&["x", "fit", "se", "lower", "upper"], rows)?,
        );
    }

    out.add_json("timing.json", timing)?;
    Ok(out)
}

fn load_model(path: &std::path::Path) -> Result<BhamModel, CliError> {
    let text =
        fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(BhamModel::from_json(&text)?)
}

pub fn predict(args: &PredictArgs) -> Result<(), CliError> {
    let model = load_model(&args.model)?;
    let names: Vec<String> = model
        .variable_names()
        .iter()
        .map(|s| s.to_string())
        .collect();
    let data = ingest_csv(&args.data, None, Some(&names))?;
    if data.dropped_rows > 0 {
        eprintln!("dropped {} rows with missing values", data.dropped_rows);
    }
    let eta = model.predict_eta(&data.predictors)?;
    let mu = model.family.linkinv(&eta);
    let bytes = csv_bytes(
        &["eta", "mu"],
        (0..eta.len()).map(|i| vec![num(eta[i]), num(mu[i])]),
    )?;
    match &args.output {
        Some(path) => {
            fs::write(path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?
        }
        None => write_stdout(&bytes)?,
    }
    Ok(())
}

pub fn report(args: &ReportArgs) -> Result<(), CliError> {
    let model = load_model(&args.model)?;
    let text = render_report(&model, args.threshold).expect("writing to a String cannot fail");
    write_stdout(text.as_bytes())
}

fn render_report(model: &BhamModel, threshold: f64) -> Result<String, std::fmt::Error> {
    let mut t = String::new();
    let fit = &model.fit;
    writeln!(t, "family      {}", model.family.name())?;
    writeln!(t, "solver      {}", model.solver.name())?;
    writeln!(
        t,
        "prior       s0 = {}, s1 = {}, a = {}, b = {}",
        model.prior.s0, model.prior.s1, model.prior.a, model.prior.b
    )?;
    if let Some(s0) = model.selected_s0 {
        writeln!(t, "tuned s0    {s0}")?;
    }
    writeln!(t, "dispersion  {}", fit.phi)?;
    writeln!(
        t,
        "iterations  {} (converged: {})",
        fit.iterations, fit.converged
    )?;
    if let Some(dev) = fit.deviance_trace.last() {
        writeln!(t, "deviance    {dev}")?;
    }
    writeln!(t)?;
    writeln!(
        t,
        "{:<16} {:>10} {:>10} {:>10}  category",
        "variable", "theta", "p_lin", "p_nonlin"
    )?;
    let selection = model.selection(threshold);
    for (j, v) in selection.variables.iter().enumerate() {
        writeln!(
            t,
            "{:<16} {:>10.4} {:>10.4} {:>10.4}  {}",
            v.variable,
            fit.theta[j],
            v.p_lin,
            v.p_nonlin,
            v.category.as_str()
        )?;
    }
    writeln!(t)?;
    let se = |i: usize| model.covariance.as_ref().map(|c| c[(i, i)].max(0.0).sqrt());
    let fmt_se = |s: Option<f64>| s.map_or("-".to_string(), |s| format!("{s:.6}"));
    writeln!(
        t,
        "{:<20} {:>14} {:>14}",
        "coefficient", "estimate", "std_error"
    )?;
    writeln!(
        t,
        "{:<20} {:>14.6} {:>14}",
        "(intercept)",
        fit.beta0,
        fmt_se(se(0))
    )?;
    for b in &model.blocks {
        for k in 0..b.len() {
            let label = if k < b.n_linear {
                format!("{}.lin", b.name)
            } else {
                format!("{}.nl{}", b.name, k - b.n_linear + 1)
            };
            let i = b.start + k;
            writeln!(
                t,
                "{:<20} {:>14.6} {:>14}",
                label,
                fit.beta[i],
                fmt_se(se(i + 1))
            )?;
        }
    }
    Ok(t)
}

/// Writes to standard output; a closed pipe (e.g. `| head`) is not an error.
fn write_stdout(bytes: &[u8]) -> Result<(), CliError> {
    match std::io::stdout().lock().write_all(bytes) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(CliError::Io(e.to_string())),
        _ => Ok(()),
    }
}

fn report_written(paths: Vec<std::path::PathBuf>) {
    for p in paths {
        eprintln!("wrote {}", p.display());
    }
}
