//! The subcommands.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use chrono::{NaiveDate, NaiveDateTime, Timelike};

use log::{error, info, warn};
use serde::Serialize;
use voltrisk_core::density::{condition, DensityModel};
use voltrisk_core::io::{format_timestamp, load_predictions, load_series, series_to_csv, DayAhead};
use voltrisk_core::manage::{
    binding_buses, build_curtailment_milp, build_lp, build_pwl_tables, solve_problem, uniform_grid,
    CurtailedBusModel, ManagementProblem, ManagementSpec, Solved, Strategy, TieBreak, Variant,
};
use voltrisk_core::pipeline::{
    compare_on_records, fit_curtailed_models, fit_models, held_out_case, records_from_series, residual_covariance,
    ComparisonSetup, CurtailmentFallback, DayRecord, System,
};
use voltrisk_core::risk::{write_risk_csv, RiskProfile};
use voltrisk_core::synth::{Generator, SynthConfig};
use voltrisk_core::uvc::InjectionSeries;
use voltrisk_core::validate::{compare_methods, HeldOutCase, MethodRun, Side, ValidationReport};
use voltrisk_core::{CoreError, Result};
use voltrisk_solver::SolverOptions;

use crate::config::RunConfig;
use crate::files::{
    baseline_path, list_strategies, load_baseline, load_bank, load_curtailed, load_strategy, model_path,
    save_curtailed, strategy_path, write_json, write_text, Baseline,
};

/// How a command that ran to completion ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Done,
    /// Some hour had no feasible dispatch.
    Infeasible,
    /// A violation frequency exceeded `(1 − τ) + 0.01`.
    Exceeded,
}

/// Slack on the violation threshold before `validate` flags a report.
pub const EXCEEDANCE_SLACK: f64 = 0.01;

fn spec_for(cfg: &RunConfig, sys: &System, curtailment: bool) -> Result<ManagementSpec> {
    let mut spec = sys.spec(cfg.tau, cfg.variant, curtailment)?;
    spec.alpha_grid = uniform_grid(cfg.grid_points);
    spec.validate()?;
    Ok(spec)
}

fn load_history(cfg: &RunConfig, sys: &System, key: &str) -> Result<InjectionSeries> {
    let path = cfg.required(if key == "test" { &cfg.test } else { &cfg.history }, key)?;
    let (series, filled) = load_series(path, &sys.layout)?;
    if filled {
        info!("{}: no predicted values, using persistence predictions", path.display());
    }
    Ok(series)
}

#[derive(Debug, Clone)]
pub struct SynthArgs {
    pub days: usize,
    pub test_days: usize,
    pub pv_scale: f64,
    pub load_scale: f64,
    pub load_noise: f64,
}

/// Writes a synthetic history, a held-out test series and one day-ahead
/// prediction file per test day.
pub fn synth(cfg: &RunConfig, args: &SynthArgs) -> Result<Outcome> {
    let sys = cfg.system()?;
    if args.days == 0 || args.test_days == 0 {
        return Err(CoreError::Input("synth needs at least one training and one test day".into()));
    }
    let gen = Generator::new(
        &sys.layout,
        SynthConfig {
            seed: cfg.seed,
            days: args.days + args.test_days,
            pv_scale: args.pv_scale,
            load_scale: args.load_scale,
            load_noise: args.load_noise,
            ..Default::default()
        },
    )?;
    let series = gen.series();
    let cut = args.days * 24;
    let (hist, test) = (series.slice(0..cut), series.slice(cut..series.len()));
    write_text(&cfg.out.join("history.csv"), &series_to_csv(&hist, &sys.layout))?;
    write_text(&cfg.out.join("test.csv"), &series_to_csv(&test, &sys.layout))?;
    for day in 0..args.test_days {
        let mut pred = String::from("timestamp,id,predicted\n");
        for t in day * 24..(day + 1) * 24 {
            let ts = format_timestamp(&test.timestamps[t]);
            let cols = sys
                .layout
                .uncertain_gens
                .iter()
                .zip(&test.gen_pred)
                .chain(sys.layout.uncertain_loads.iter().zip(&test.load_pred));
            for (e, p) in cols {
                pred.push_str(&format!("{ts},{},{}\n", e.id, p[t]));
            }
        }
        let date = test.timestamps[day * 24].date();
        write_text(&cfg.out.join("predictions").join(format!("{date}.csv")), &pred)?;
    }
    info!("wrote {} training and {} test days to {}", args.days, args.test_days, cfg.out.display());
    Ok(Outcome::Done)
}

pub fn fit(cfg: &RunConfig) -> Result<Outcome> {
    let sys = cfg.system()?;
    let hist = load_history(cfg, &sys, "history")?;
    let hours = cfg.hour_list();
    let (bank, failures) = fit_models(&sys, &hist, &hours, cfg.components)?;
    for ((bus, hour), g) in &bank.models {
        let mut text = DensityModel::new(*bus, *hour, g).to_json();
        text.push('\n');
        write_text(&model_path(&cfg.out, *bus, *hour), &text)?;
    }
    let mut listing = String::from("bus,hour,reason\n");
    for f in &failures {
        warn!("bus {} hour {}: {}", f.bus, f.hour, f.error);
        listing.push_str(&format!("{},{},\"{}\"\n", f.bus, f.hour, f.error.to_string().replace('"', "'")));
    }
    write_text(&cfg.out.join("models").join("insufficient.csv"), &listing)?;

    let mut baseline = Baseline::default();
    for &hour in &hours {
        match residual_covariance(&hist, hour) {
            Ok(cov) => {
                baseline.covariances.insert(hour, cov);
            }
            Err(e @ CoreError::InsufficientData(_)) => warn!("baseline at hour {hour}: {e}"),
            Err(e) => return Err(e),
        }
    }
    write_json(&baseline_path(&cfg.out), &baseline)?;

    if cfg.curtailment {
        let grid = uniform_grid(cfg.grid_points);
        for &hour in &hours {
            match fit_curtailed_models(&sys, &hist, hour, &grid, cfg.components) {
                Ok(b) => save_curtailed(&cfg.out, &sys, &b)?,
                Err(e @ CoreError::InsufficientData(_)) => warn!("curtailed models at hour {hour}: {e}"),
                Err(e) => return Err(e),
            }
        }
    }
    info!(
        "fitted {} models; {} (bus, hour) pairs lacked data",
        bank.models.len(),
        failures.len()
    );
    Ok(Outcome::Done)
}

/// Day-ahead hours that the config selects.
fn day_ahead(cfg: &RunConfig, sys: &System) -> Result<(DayAhead, Vec<u32>, NaiveDate)> {
    let pred = load_predictions(cfg.required(&cfg.predictions, "predictions")?, &sys.layout)?;
    let hours: Vec<u32> = pred.hours.keys().copied().filter(|h| cfg.hours.contains(h)).collect();
    if hours.is_empty() {
        return Err(CoreError::Input("the predictions cover none of the configured hours".into()));
    }
    let date = pred.date().expect("non-empty predictions");
    Ok((pred, hours, date))
}

/// Risk profiles of every bus at every hour; pairs without a model are
/// returned as error rows.
type ErrorRow = (usize, u32, String);

fn profiles(cfg: &RunConfig, sys: &System, pred: &DayAhead, hours: &[u32]) -> Result<(Vec<RiskProfile>, Vec<ErrorRow>)> {
    let (bank, _) = load_bank(&cfg.out, sys, hours)?;
    let mut rows = Vec::new();
    let mut errors = Vec::new();
    for &hour in hours {
        let (gen, load) = &pred.hours[&hour];
        let (g, l) = sys.parts(gen, load);
        for (row, &bus) in sys.buses().iter().enumerate() {
            match bank.get(bus, hour) {
                Ok(m) => rows.push(RiskProfile::from_model(&condition(m, g[row] - l[row])?, bus, hour, cfg.tau)?),
                Err(e) => errors.push((bus, hour, e.to_string())),
            }
        }
    }
    Ok((rows, errors))
}

fn missing_models(errors: &[ErrorRow]) -> CoreError {
    CoreError::Input(format!(
        "{} (bus, hour) pairs have no fitted model, first bus {} at hour {}",
        errors.len(),
        errors[0].0,
        errors[0].1
    ))
}

pub fn assess(cfg: &RunConfig) -> Result<Outcome> {
    let sys = cfg.system()?;
    let (pred, hours, date) = day_ahead(cfg, &sys)?;
    let (rows, errors) = profiles(cfg, &sys, &pred, &hours)?;
    let mut buf = Vec::new();
    write_risk_csv(&mut buf, &rows)?;
    let dir = cfg.out.join("risk");
    voltrisk_core::io::write_atomic(&dir.join(format!("{date}.csv")), &buf)?;
    let err_path = dir.join(format!("{date}_errors.csv"));
    if errors.is_empty() {
        if err_path.exists() {
            std::fs::remove_file(&err_path).map_err(|source| CoreError::Io { path: err_path, source })?;
        }
        info!("wrote {} risk rows", rows.len());
        return Ok(Outcome::Done);
    }
    let mut text = String::from("bus,hour,error\n");
    for (bus, hour, e) in &errors {
        text.push_str(&format!("{bus},{hour},\"{}\"\n", e.replace('"', "'")));
    }
    write_text(&err_path, &text)?;
    Err(missing_models(&errors))
}

#[derive(Debug, Serialize)]
struct SolveRecord {
    hour: u32,
    problem: &'static str,
    rows: usize,
    columns: usize,
    binaries: usize,
    iterations: usize,
    nodes: usize,
    solves: usize,
    solve_ms: f64,
    status: &'static str,
    cost: Option<f64>,
    alpha: Option<f64>,
    binding_buses: Vec<usize>,
}

fn record(hour: u32, problem: &ManagementProblem, outcome: &Result<Solved>, elapsed: f64) -> SolveRecord {
    let (kind, binaries) = if problem.is_milp() {
        ("milp", problem.milp.binaries().len())
    } else {
        ("lp", 0)
    };
    let (iterations, nodes, solves, status, cost, alpha) = match outcome {
        Ok(s) => (
            s.primary.iterations,
            s.primary.nodes,
            s.solves,
            "optimal",
            Some(s.strategy.cost),
            Some(s.strategy.alpha),
        ),
        Err(CoreError::Infeasible(_)) => (0, 0, 1, "infeasible", None, None),
        Err(_) => (0, 0, 1, "error", None, None),
    };
    SolveRecord {
        hour,
        problem: kind,
        rows: problem.lp().num_constraints(),
        columns: problem.lp().num_vars(),
        binaries,
        iterations,
        nodes,
        solves,
        solve_ms: elapsed,
        status,
        cost,
        alpha,
        binding_buses: Vec::new(),
    }
}

fn timed(problem: &ManagementProblem, spec: &ManagementSpec, opts: &SolverOptions) -> (Result<Solved>, f64) {
    let start = Instant::now();
    let out = solve_problem(problem, spec, opts, TieBreak::Lexicographic);
    (out, start.elapsed().as_secs_f64() * 1e3)
}

pub fn manage(cfg: &RunConfig) -> Result<Outcome> {
    let sys = cfg.system()?;
    let (pred, hours, date) = day_ahead(cfg, &sys)?;
    let (rows, errors) = profiles(cfg, &sys, &pred, &hours)?;
    if !errors.is_empty() {
        return Err(missing_models(&errors));
    }
    let lp_spec = spec_for(cfg, &sys, false)?;
    let milp_spec = spec_for(cfg, &sys, true)?;
    let opts = SolverOptions::default();
    let mut log = Vec::new();
    let mut infeasible = Vec::new();
    for &hour in &hours {
        let hp: Vec<RiskProfile> = rows.iter().filter(|r| r.hour == hour).copied().collect();
        let lp = build_lp(&lp_spec, &hp)?;
        let (mut outcome, ms) = timed(&lp, &lp_spec, &opts);
        let mut entry = record(hour, &lp, &outcome, ms);
        if let Err(CoreError::Infeasible(_)) = outcome {
            let (up, lo): (Vec<f64>, Vec<f64>) = match cfg.variant {
                Variant::Var => hp.iter().map(|r| (r.var_upper, r.var_lower)).unzip(),
                Variant::Cvar => hp.iter().map(|r| (r.cvar_upper, r.cvar_lower)).unzip(),
            };
            entry.binding_buses = binding_buses(&lp_spec, &up, &lo);
            if cfg.curtailment {
                log.push(entry);
                let bank = load_curtailed(&cfg.out, &sys, hour)?;
                let (gen, load) = &pred.hours[&hour];
                let (g, l) = sys.parts(gen, load);
                let inputs: Vec<CurtailedBusModel> = sys
                    .buses()
                    .iter()
                    .enumerate()
                    .map(|(row, &bus)| CurtailedBusModel {
                        bus,
                        models: bank.models[row].clone(),
                        pred_gen: g[row],
                        pred_load: l[row],
                    })
                    .collect();
                if bank.grid != milp_spec.alpha_grid {
                    return Err(CoreError::Input(format!(
                        "curtailed models of hour {hour} use {} grid points, config asks for {}",
                        bank.grid.len(),
                        cfg.grid_points
                    )));
                }
                let milp = build_curtailment_milp(&milp_spec, &build_pwl_tables(&milp_spec, &inputs)?)?;
                let (o, ms) = timed(&milp, &milp_spec, &opts);
                outcome = o;
                entry = record(hour, &milp, &outcome, ms);
            }
        }
        info!(
            "hour {hour:02}: {} {}x{} ({} binaries) {} in {:.2} ms",
            entry.problem, entry.rows, entry.columns, entry.binaries, entry.status, entry.solve_ms
        );
        match outcome {
            Ok(s) => {
                let mut text = s.strategy.to_json();
                text.push('\n');
                write_text(&strategy_path(&cfg.out, cfg.variant, pred.stamps[&hour].date(), hour), &text)?;
            }
            Err(CoreError::Infeasible(_)) => {
                if cfg.curtailment {
                    error!("hour {hour:02}: infeasible even with full curtailment");
                } else if entry.binding_buses.is_empty() {
                    error!("hour {hour:02}: infeasible without curtailment; the bus limits conflict jointly");
                } else {
                    error!(
                        "hour {hour:02}: infeasible without curtailment; binding buses {:?}",
                        entry.binding_buses
                    );
                }
                infeasible.push(hour);
            }
            Err(e) => return Err(e),
        }
        log.push(entry);
    }
    write_json(&cfg.out.join("strategies").join(format!("{}_{date}_log.json", cfg.variant)), &log)?;
    Ok(if infeasible.is_empty() { Outcome::Done } else { Outcome::Infeasible })
}

fn write_report(dir: &Path, r: &ValidationReport) -> Result<()> {
    write_text(&dir.join(format!("{}_report.json", r.method)), &(r.to_json() + "\n"))?;
    write_text(&dir.join(format!("{}_upper.csv", r.method)), &r.heatmap_csv(Side::Upper))?;
    write_text(&dir.join(format!("{}_lower.csv", r.method)), &r.heatmap_csv(Side::Lower))
}

fn exceeds(r: &ValidationReport) -> bool {
    r.max_frequency > r.threshold + EXCEEDANCE_SLACK
}

fn announce(r: &ValidationReport) {
    println!(
        "{}: max violation frequency {:.4} at bus {} (limit {:.4}) over {} cases",
        r.method,
        r.max_frequency,
        r.max_bus,
        r.threshold + EXCEEDANCE_SLACK,
        r.cases
    );
}

pub fn validate(cfg: &RunConfig) -> Result<Outcome> {
    let sys = cfg.system()?;
    let test = load_history(cfg, &sys, "test")?;
    let found = list_strategies(&cfg.out)?;
    if found.is_empty() {
        return Err(CoreError::Input(format!(
            "no strategies under {}; run `manage` first",
            cfg.out.join("strategies").display()
        )));
    }
    let spec = spec_for(cfg, &sys, false)?;
    let index: BTreeMap<NaiveDateTime, usize> = test.timestamps.iter().enumerate().map(|(t, &ts)| (ts, t)).collect();
    let first = test.timestamps.first().map(|t| t.date());
    let mut by_variant: BTreeMap<Variant, (Vec<HeldOutCase>, Vec<Strategy>)> = BTreeMap::new();
    let mut unmatched = 0;
    for ((variant, when), path) in &found {
        let Some(&t) = index.get(when) else {
            unmatched += 1;
            continue;
        };
        let s = load_strategy(path)?;
        let buses: Vec<usize> = s.v_c.iter().map(|c| c.bus).collect();
        if buses != sys.buses() {
            return Err(CoreError::Input(format!("{} does not match the feeder buses", path.display())));
        }
        let q = s.q_values();
        if q.len() != spec.providers.len()
            || (0..spec.buses.len()).any(|i| {
                let v: f64 = spec.b_q[i].iter().zip(&q).map(|(b, x)| b * x).sum::<f64>() + spec.v_c_fixed(i);
                (v - s.v_c[i].pu2).abs() > 1e-9 * v.abs().max(1.0)
            })
        {
            return Err(CoreError::Input(format!(
                "{}: controllable components disagree with the setpoints",
                path.display()
            )));
        }
        if s.tau != cfg.tau {
            return Err(CoreError::Input(format!(
                "{} was computed at tau {}, config has {}",
                path.display(),
                s.tau,
                cfg.tau
            )));
        }
        let record = DayRecord {
            day: first.map_or(0, |f| (when.date() - f).num_days() as usize),
            hour: when.hour(),
            gen_true: test.gen_at(t, false),
            gen_pred: test.gen_at(t, true),
            load_true: test.load_at(t, false),
            load_pred: test.load_at(t, true),
        };
        let entry = by_variant.entry(*variant).or_default();
        entry.0.push(held_out_case(&sys, &record));
        entry.1.push(s);
    }
    if unmatched > 0 {
        warn!("{unmatched} strategies have no realization in the test series");
    }
    if by_variant.is_empty() {
        return Err(CoreError::Input("no strategy matches a timestamp of the test series".into()));
    }
    let dir = cfg.out.join("validation");
    let mut outcome = Outcome::Done;
    for (variant, (cases, strategies)) in by_variant {
        let run = MethodRun {
            name: variant.to_string(),
            strategies,
            track: None,
        };
        for r in compare_methods(&[run], &cases, &sys.net, &sys.v_o(), cfg.tau)? {
            write_report(&dir, &r)?;
            announce(&r);
            if exceeds(&r) {
                outcome = Outcome::Exceeded;
            }
        }
    }
    Ok(outcome)
}

#[derive(Debug, Serialize)]
struct MethodSummary {
    method: String,
    max_frequency: f64,
    mean_cost: f64,
    curtailed_days: usize,
    infeasible_days: usize,
    tau_act_upper: Option<f64>,
    tau_act_lower: Option<f64>,
}

#[derive(Debug, Serialize)]
struct CompareSummary {
    tau: f64,
    hours: Vec<u32>,
    cases: usize,
    methods: Vec<MethodSummary>,
}

/// UVC-based dispatch against the Gaussian baseline on the test series.
pub fn compare(cfg: &RunConfig) -> Result<Outcome> {
    let sys = cfg.system()?;
    let test = load_history(cfg, &sys, "test")?;
    let baseline = load_baseline(&cfg.out)?;
    let requested = cfg.hour_list();
    let (bank, missing) = load_bank(&cfg.out, &sys, &requested)?;
    let hours: Vec<u32> = requested
        .iter()
        .copied()
        .filter(|h| !missing.iter().any(|m| m.1 == *h) && baseline.covariances.contains_key(h))
        .collect();
    for h in requested.iter().filter(|h| !hours.contains(h)) {
        warn!("hour {h:02} skipped: models or baseline covariance missing");
    }
    if hours.is_empty() {
        return Err(CoreError::Input("no configured hour has a complete set of models".into()));
    }
    let spec = spec_for(cfg, &sys, false)?;
    let fb_spec = spec_for(cfg, &sys, true)?;
    let banks = if cfg.curtailment {
        hours
            .iter()
            .map(|&h| load_curtailed(&cfg.out, &sys, h).map(|b| (h, b)))
            .collect::<Result<BTreeMap<_, _>>>()?
    } else {
        BTreeMap::new()
    };
    let setup = ComparisonSetup {
        sys: &sys,
        spec: &spec,
        bank: &bank,
        covariances: &baseline.covariances,
        fallback: cfg.curtailment.then_some(CurtailmentFallback {
            spec: &fb_spec,
            banks: &banks,
        }),
        opts: SolverOptions::default(),
        tie: TieBreak::Vertex,
        track: cfg
            .track_bus
            .filter(|_| hours.contains(&cfg.track_hour))
            .map(|b| (b, cfg.track_hour)),
    };
    let records = records_from_series(&test, &hours);
    if records.is_empty() {
        return Err(CoreError::Input(format!("the test series has no records at hours {hours:?}")));
    }
    let cmp = compare_on_records(&setup, &records)?;
    let reports = compare_methods(&cmp.runs, &cmp.cases, &sys.net, &sys.v_o(), cfg.tau)?;
    let dir = cfg.out.join("compare");
    let mut methods = Vec::new();
    for (k, r) in reports.iter().enumerate() {
        write_report(&dir, r)?;
        announce(r);
        methods.push(MethodSummary {
            method: r.method.clone(),
            max_frequency: r.max_frequency,
            mean_cost: r.cost.mean,
            curtailed_days: cmp.curtailed[k],
            infeasible_days: cmp.infeasible[k],
            tau_act_upper: r.tau_act_upper,
            tau_act_lower: r.tau_act_lower,
        });
    }
    write_json(
        &dir.join("summary.json"),
        &CompareSummary {
            tau: cfg.tau,
            hours,
            cases: cmp.cases.len(),
            methods,
        },
    )?;
    Ok(Outcome::Done)
}
