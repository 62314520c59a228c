//! End-to-end wiring: model fitting, day-ahead risk, dispatch and held-out
//! comparison against the Gaussian baseline.

use std::collections::BTreeMap;

use voltrisk_solver::SolverOptions;

use crate::density::{condition, fit_model, Gmm1, Gmm2};
use crate::error::{CoreError, Result};
use crate::grid_model::{compute_sensitivities, uvc_coefficients, InjectionLayout, Network, SensitivityMatrices, UvcCoefficients};
use crate::manage::{
    build_curtailment_milp, build_lp, build_ppo_baseline, build_pwl_tables, solve_problem, CurtailedBusModel,
    GaussianInjectionModel, ManagementSpec, Strategy, TieBreak, Variant,
};
use crate::risk::RiskProfile;
use crate::synth::HourCase;
use crate::uvc::{
    compute_curtailed_uvc_samples, compute_uvc_samples, constant_component, uvc_parts, InjectionSeries, UvcSampleSet,
};
use crate::validate::{HeldOutCase, MethodRun, VarTrack};

/// A feeder with its layout and derived coefficients.
#[derive(Debug, Clone)]
pub struct System {
    pub net: Network,
    pub layout: InjectionLayout,
    pub sens: SensitivityMatrices,
    pub coeffs: UvcCoefficients,
}

impl System {
    pub fn new(net: Network, layout: InjectionLayout) -> Result<Self> {
        layout.validate(&net)?;
        let sens = compute_sensitivities(&net);
        let coeffs = uvc_coefficients(&sens, &layout)?;
        Ok(Self { net, layout, sens, coeffs })
    }

    /// The bundled 33-bus feeder.
    pub fn ieee33() -> Self {
        let (net, layout) = crate::io::ieee33();
        Self::new(net, layout).expect("bundled feeder is valid")
    }

    pub fn buses(&self) -> &[usize] {
        &self.coeffs.buses
    }

    /// Constant voltage components in bus order.
    pub fn v_o(&self) -> Vec<f64> {
        (0..self.coeffs.buses.len())
            .map(|row| constant_component(&self.coeffs, &self.layout, row, self.net.v0()))
            .collect()
    }

    pub fn spec(&self, tau: f64, variant: Variant, curtailment: bool) -> Result<ManagementSpec> {
        ManagementSpec::new(&self.net, &self.layout, &self.coeffs, tau, variant, curtailment)
    }

    /// Generation and load parts of every bus's UVC.
    pub fn parts(&self, gen: &[f64], load: &[f64]) -> (Vec<f64>, Vec<f64>) {
        (0..self.coeffs.buses.len())
            .map(|row| uvc_parts(&self.coeffs, row, gen, load))
            .unzip()
    }
}

/// Fitted joint models keyed by (bus, hour).
#[derive(Debug, Clone, Default)]
pub struct ModelBank {
    pub models: BTreeMap<(usize, u32), Gmm2>,
}

impl ModelBank {
    pub fn get(&self, bus: usize, hour: u32) -> Result<&Gmm2> {
        self.models
            .get(&(bus, hour))
            .ok_or_else(|| CoreError::Input(format!("no model for bus {bus} at hour {hour}")))
    }
}

/// A (bus, hour) pair that could not be fitted.
#[derive(Debug)]
pub struct FitFailure {
    pub bus: usize,
    pub hour: u32,
    pub error: CoreError,
}

/// Fits one model per non-slack bus and hour in `hours`. Pairs without
/// enough data are reported, not fatal.
pub fn fit_models(sys: &System, hist: &InjectionSeries, hours: &[u32], k: usize) -> Result<(ModelBank, Vec<FitFailure>)> {
    hist.validate()?;
    let mut bank = ModelBank::default();
    let mut failures = Vec::new();
    for &hour in hours {
        for &bus in sys.buses() {
            let fitted = compute_uvc_samples(&sys.coeffs, hist, bus, hour).and_then(|s| fit_model(&s, k));
            match fitted {
                Ok(g) => {
                    bank.models.insert((bus, hour), g);
                }
                Err(error @ CoreError::InsufficientData(_)) => failures.push(FitFailure { bus, hour, error }),
                Err(e) => return Err(e),
            }
        }
    }
    Ok((bank, failures))
}

/// Models of every bus at one hour fitted on history curtailed at each
/// point of `grid`: `models[row][k]`.
#[derive(Debug, Clone)]
pub struct CurtailedBank {
    pub hour: u32,
    pub grid: Vec<f64>,
    pub models: Vec<Vec<Gmm2>>,
}

pub fn fit_curtailed_models(sys: &System, hist: &InjectionSeries, hour: u32, grid: &[f64], k: usize) -> Result<CurtailedBank> {
    hist.validate()?;
    let models = sys
        .buses()
        .iter()
        .map(|&bus| {
            let mut row: Vec<Gmm2> = Vec::with_capacity(grid.len());
            let mut last: Option<UvcSampleSet> = None;
            for &a in grid {
                let s = compute_curtailed_uvc_samples(&sys.coeffs, hist, bus, hour, a)?;
                // Without generation at this bus and hour every grid point
                // sees the same samples.
                match (&last, row.last()) {
                    (Some(prev), Some(g)) if *prev == s => row.push(g.clone()),
                    _ => row.push(fit_model(&s, k)?),
                }
                last = Some(s);
            }
            Ok(row)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CurtailedBank {
        hour,
        grid: grid.to_vec(),
        models,
    })
}

/// Conditional UVC models of every bus given day-ahead point predictions.
pub fn conditional_models(sys: &System, bank: &ModelBank, hour: u32, gen_pred: &[f64], load_pred: &[f64]) -> Result<Vec<Gmm1>> {
    check_lengths(sys, gen_pred, load_pred)?;
    let (g, l) = sys.parts(gen_pred, load_pred);
    sys.buses()
        .iter()
        .enumerate()
        .map(|(row, &bus)| condition(bank.get(bus, hour)?, g[row] - l[row]))
        .collect()
}

pub fn uvcp_profiles(
    sys: &System,
    bank: &ModelBank,
    hour: u32,
    gen_pred: &[f64],
    load_pred: &[f64],
    tau: f64,
) -> Result<Vec<RiskProfile>> {
    conditional_models(sys, bank, hour, gen_pred, load_pred)?
        .iter()
        .zip(sys.buses())
        .map(|(g, &bus)| RiskProfile::from_model(g, bus, hour, tau))
        .collect()
}

fn check_lengths(sys: &System, gen: &[f64], load: &[f64]) -> Result<()> {
    if gen.len() != sys.layout.uncertain_gens.len() || load.len() != sys.layout.uncertain_loads.len() {
        return Err(CoreError::Input("prediction vectors do not match the layout".into()));
    }
    Ok(())
}

/// Sample covariance (denominator N − 1) of the prediction errors of all
/// uncertain injections at `hour`, generators first.
pub fn residual_covariance(hist: &InjectionSeries, hour: u32) -> Result<Vec<Vec<f64>>> {
    let records = hist.records_at(hour);
    if records.len() < 2 {
        return Err(CoreError::InsufficientData(format!(
            "hour {hour}: {} records, need at least 2",
            records.len()
        )));
    }
    let errors: Vec<Vec<f64>> = hist
        .gen_true
        .iter()
        .zip(&hist.gen_pred)
        .chain(hist.load_true.iter().zip(&hist.load_pred))
        .map(|(t, p)| records.iter().map(|&r| t[r] - p[r]).collect())
        .collect();
    let n = records.len() as f64;
    let means: Vec<f64> = errors.iter().map(|e| e.iter().sum::<f64>() / n).collect();
    let m = errors.len();
    let mut cov = vec![vec![0.0; m]; m];
    for a in 0..m {
        for b in 0..=a {
            let s: f64 = errors[a]
                .iter()
                .zip(&errors[b])
                .map(|(x, y)| (x - means[a]) * (y - means[b]))
                .sum();
            cov[a][b] = s / (n - 1.0);
            cov[b][a] = cov[a][b];
        }
    }
    Ok(cov)
}

/// Gaussian baseline model: mean at the point prediction, covariance of
/// historical errors.
pub fn ppo_model(cov: &[Vec<f64>], gen_pred: &[f64], load_pred: &[f64]) -> GaussianInjectionModel {
    GaussianInjectionModel {
        mean_gen: gen_pred.to_vec(),
        mean_load: load_pred.to_vec(),
        cov: cov.to_vec(),
    }
}

/// UVCP dispatch without curtailment.
#[allow(clippy::too_many_arguments)]
pub fn dispatch_uvcp(
    sys: &System,
    spec: &ManagementSpec,
    bank: &ModelBank,
    hour: u32,
    gen_pred: &[f64],
    load_pred: &[f64],
    opts: &SolverOptions,
    tie: TieBreak,
) -> Result<Strategy> {
    let profiles = uvcp_profiles(sys, bank, hour, gen_pred, load_pred, spec.tau)?;
    Ok(solve_problem(&build_lp(spec, &profiles)?, spec, opts, tie)?.strategy)
}

/// UVCP dispatch with curtailment, using models fitted on curtailed history.
#[allow(clippy::too_many_arguments)]
pub fn dispatch_uvcp_curtailed(
    sys: &System,
    spec: &ManagementSpec,
    curtailed: &CurtailedBank,
    gen_pred: &[f64],
    load_pred: &[f64],
    opts: &SolverOptions,
    tie: TieBreak,
) -> Result<Strategy> {
    check_lengths(sys, gen_pred, load_pred)?;
    if curtailed.grid != spec.alpha_grid {
        return Err(CoreError::Input("curtailed models were fitted on a different grid".into()));
    }
    let (g, l) = sys.parts(gen_pred, load_pred);
    let inputs: Vec<CurtailedBusModel> = sys
        .buses()
        .iter()
        .enumerate()
        .map(|(row, &bus)| CurtailedBusModel {
            bus,
            models: curtailed.models[row].clone(),
            pred_gen: g[row],
            pred_load: l[row],
        })
        .collect();
    let tables = build_pwl_tables(spec, &inputs)?;
    Ok(solve_problem(&build_curtailment_milp(spec, &tables)?, spec, opts, tie)?.strategy)
}

#[allow(clippy::too_many_arguments)]
pub fn dispatch_ppo(
    sys: &System,
    spec: &ManagementSpec,
    cov: &[Vec<f64>],
    hour: u32,
    gen_pred: &[f64],
    load_pred: &[f64],
    opts: &SolverOptions,
    tie: TieBreak,
) -> Result<Strategy> {
    check_lengths(sys, gen_pred, load_pred)?;
    let model = ppo_model(cov, gen_pred, load_pred);
    let problem = build_ppo_baseline(&model, &sys.coeffs, spec, hour)?;
    Ok(solve_problem(&problem, spec, opts, tie)?.strategy)
}

/// Actual and predicted injections of one held-out (day, hour).
#[derive(Debug, Clone, PartialEq)]
pub struct DayRecord {
    pub day: usize,
    pub hour: u32,
    pub gen_true: Vec<f64>,
    pub gen_pred: Vec<f64>,
    pub load_true: Vec<f64>,
    pub load_pred: Vec<f64>,
}

impl DayRecord {
    pub fn from_case(c: &HourCase, hour: u32) -> Self {
        Self {
            day: c.day,
            hour,
            gen_true: c.actual.gen.clone(),
            gen_pred: c.predicted.gen.clone(),
            load_true: c.actual.load.clone(),
            load_pred: c.predicted.load.clone(),
        }
    }
}

/// Records of `series` at `hours`, numbering days from the series start.
pub fn records_from_series(series: &InjectionSeries, hours: &[u32]) -> Vec<DayRecord> {
    let Some(first) = series.timestamps.first().map(|t| t.date()) else {
        return Vec::new();
    };
    (0..series.len())
        .filter(|&t| hours.contains(&chrono::Timelike::hour(&series.timestamps[t])))
        .map(|t| DayRecord {
            day: (series.timestamps[t].date() - first).num_days() as usize,
            hour: chrono::Timelike::hour(&series.timestamps[t]),
            gen_true: series.gen_at(t, false),
            gen_pred: series.gen_at(t, true),
            load_true: series.load_at(t, false),
            load_pred: series.load_at(t, true),
        })
        .collect()
}

pub fn held_out_case(sys: &System, r: &DayRecord) -> HeldOutCase {
    let (gen, load) = sys.parts(&r.gen_true, &r.load_true);
    HeldOutCase {
        day: r.day,
        hour: r.hour,
        gen,
        load,
    }
}

/// Curtailment fallback for days on which reactive power alone cannot meet
/// the risk limits.
#[derive(Debug, Clone, Copy)]
pub struct CurtailmentFallback<'a> {
    /// Same settings as the primary spec with curtailment enabled.
    pub spec: &'a ManagementSpec,
    pub banks: &'a BTreeMap<u32, CurtailedBank>,
}

/// Everything a held-out comparison needs besides the data.
#[derive(Debug, Clone)]
pub struct ComparisonSetup<'a> {
    pub sys: &'a System,
    pub spec: &'a ManagementSpec,
    pub bank: &'a ModelBank,
    /// Error covariance of the baseline by hour.
    pub covariances: &'a BTreeMap<u32, Vec<Vec<f64>>>,
    pub fallback: Option<CurtailmentFallback<'a>>,
    pub opts: SolverOptions,
    pub tie: TieBreak,
    /// (bus, hour) whose VaR estimates are tracked for the confidence levels.
    pub track: Option<(usize, u32)>,
}

/// Strategies of both methods on every record, with their VaR tracks.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub cases: Vec<HeldOutCase>,
    pub runs: Vec<MethodRun>,
    /// Days per method that needed curtailment.
    pub curtailed: Vec<usize>,
    /// Days per method with no feasible dispatch at all; these fall back
    /// to the idle strategy.
    pub infeasible: Vec<usize>,
}

const METHODS: [&str; 2] = ["uvcp", "ppo"];

/// Runs UVCP and the Gaussian baseline on every record. Each method first
/// solves its LP; when that is infeasible and a fallback is configured, it
/// solves the curtailment MILP instead.
pub fn compare_on_records(setup: &ComparisonSetup, records: &[DayRecord]) -> Result<Comparison> {
    let sys = setup.sys;
    let spec = setup.spec;
    let tau = spec.tau;
    let track_row = setup.track.map(|(b, _)| sys.coeffs.row(b)).transpose()?;
    let mut strategies = [Vec::with_capacity(records.len()), Vec::with_capacity(records.len())];
    let mut curtailed = [0usize; 2];
    let mut infeasible = [0usize; 2];
    let mut tracks = [(Vec::new(), Vec::new()), (Vec::new(), Vec::new())];
    let mut realized = Vec::new();
    let mut cases = Vec::with_capacity(records.len());
    for r in records {
        let case = held_out_case(sys, r);
        let profiles = uvcp_profiles(sys, setup.bank, r.hour, &r.gen_pred, &r.load_pred, tau)?;
        let cov = setup
            .covariances
            .get(&r.hour)
            .ok_or_else(|| CoreError::Input(format!("no error covariance for hour {}", r.hour)))?;
        if let (Some(row), Some((bus, hour))) = (track_row, setup.track) {
            if r.hour == hour {
                let g = ppo_model(cov, &r.gen_pred, &r.load_pred).profile(&sys.coeffs, bus, hour, tau, 0.0)?;
                tracks[0].0.push(profiles[row].var_upper);
                tracks[0].1.push(profiles[row].var_lower);
                tracks[1].0.push(g.var_upper);
                tracks[1].1.push(g.var_lower);
                realized.push(case.gen[row] - case.load[row]);
            }
        }
        for k in 0..2 {
            let primary = if k == 0 {
                build_lp(spec, &profiles).and_then(|p| solve_problem(&p, spec, &setup.opts, setup.tie).map(|s| s.strategy))
            } else {
                dispatch_ppo(sys, spec, cov, r.hour, &r.gen_pred, &r.load_pred, &setup.opts, setup.tie)
            };
            let outcome = match (primary, &setup.fallback) {
                (Err(CoreError::Infeasible(_)), Some(fb)) => {
                    curtailed[k] += 1;
                    if k == 0 {
                        let bank = fb
                            .banks
                            .get(&r.hour)
                            .ok_or_else(|| CoreError::Input(format!("no curtailed models for hour {}", r.hour)))?;
                        dispatch_uvcp_curtailed(sys, fb.spec, bank, &r.gen_pred, &r.load_pred, &setup.opts, setup.tie)
                    } else {
                        dispatch_ppo(sys, fb.spec, cov, r.hour, &r.gen_pred, &r.load_pred, &setup.opts, setup.tie)
                    }
                }
                (other, _) => other,
            };
            match outcome {
                Ok(s) => strategies[k].push(s),
                Err(CoreError::Infeasible(_)) => {
                    infeasible[k] += 1;
                    strategies[k].push(Strategy::idle(spec));
                }
                Err(e) => return Err(e),
            }
        }
        cases.push(case);
    }
    let runs = strategies
        .into_iter()
        .zip(tracks)
        .zip(METHODS)
        .map(|((strategies, (upper, lower)), name)| MethodRun {
            name: name.into(),
            strategies,
            track: setup.track.map(|(bus, hour)| VarTrack {
                bus,
                hour,
                upper,
                lower,
                realized: realized.clone(),
            }),
        })
        .collect();
    Ok(Comparison {
        cases,
        runs,
        curtailed: curtailed.to_vec(),
        infeasible: infeasible.to_vec(),
    })
}
