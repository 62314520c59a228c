//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

#[path = "../../core/tests/common/mod.rs"]
mod common;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use voltrisk_core::density::{condition, fit_kde, gmm_moments, reduce_gmm, Gmm1};
use voltrisk_core::grid_model::{assemble_injections, compute_sensitivities, voltage_from_injections};
use voltrisk_core::io::ieee33;
use voltrisk_core::manage::{
    binding_buses, build_curtailment_milp, build_lp, build_pwl_tables, build_var_lp, solve_problem,
    CurtailedBusModel, ManagementProblem, ManagementSpec, PwlRiskTable, Strategy, TieBreak, Variant,
};
use voltrisk_core::pipeline::{
    compare_on_records, conditional_models, fit_curtailed_models, fit_models, ppo_model, residual_covariance,
    uvcp_profiles, ComparisonSetup, CurtailedBank, CurtailmentFallback, DayRecord, ModelBank, System,
};
use voltrisk_core::risk::{cvar_gmm, var_gmm, var_gmm_detailed, RiskProfile, RootMethod};
use voltrisk_core::synth::{Generator, HourCase, SynthConfig};
use voltrisk_core::uvc::{decompose_voltage, InjectionSeries, UvcSampleSet};
use voltrisk_core::validate::{compare_methods, sample_scenarios, var_confidence, violation_frequency, Side};
use voltrisk_core::CoreError;
use voltrisk_solver::{solve_lp, solve_milp, MilpProblem, Sense, SolveStatus, SolverOptions, VarId};

use common::{integrate, path_oracle, random_gmm1, random_gmm2, support};

const TAU: f64 = 0.95;
const TAUS: [f64; 3] = [0.9, 0.95, 0.99];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

/// 200 mixtures with up to 10 components, fixed seed.
fn sweep_mixtures() -> Vec<Gmm1> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    (0..200).map(|_| random_gmm1(&mut rng, 10)).collect()
}

fn c1_cvar_integration() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for g in sweep_mixtures() {
        let (_, hi) = support(&g, 40.0);
        for tau in TAUS {
            let var = var_gmm(&g, tau).unwrap();
            let oracle = integrate(&|x| x * g.pdf(x), var, hi, 1e-13) / (1.0 - tau);
            let cvar = cvar_gmm(&g, tau).unwrap();
            worst = worst.max((cvar - oracle).abs() / oracle.abs().max(f64::MIN_POSITIVE));
        }
    }
    let t = start.elapsed();
    outcome(
        worst <= 1e-6 && t < Duration::from_secs(10),
        format!("max relative error {worst:.2e} (tol 1e-6), {:.2} s (limit 10 s)", t.as_secs_f64()),
    )
}

fn c2_var_consistency() -> Outcome {
    let mut worst: f64 = 0.0;
    let (mut newton_ok, mut total, mut uncovered) = (0usize, 0usize, 0usize);
    for g in sweep_mixtures() {
        for tau in TAUS {
            let s = var_gmm_detailed(&g, tau).unwrap();
            let err = (g.cdf(s.value) - tau).abs();
            worst = worst.max(err);
            total += 1;
            if s.method == RootMethod::Newton && s.newton_iterations <= 50 {
                newton_ok += 1;
            } else if err > 1e-10 {
                uncovered += 1;
            }
        }
    }
    // Standard normal quantiles.
    let z = [1.2815515655446004, 1.6448536269514722, 2.3263478740408408];
    let mut gauss: f64 = 0.0;
    for (mu, sigma) in [(0.0, 1.0), (1.03, 0.02), (-2.5, 3.7)] {
        let g = Gmm1::normal(mu, sigma * sigma).unwrap();
        for (tau, z) in TAUS.iter().zip(z) {
            gauss = gauss.max((var_gmm(&g, *tau).unwrap() - (mu + z * sigma)).abs());
        }
    }
    let share = newton_ok as f64 / total as f64;
    outcome(
        worst <= 1e-10 && share >= 0.99 && uncovered == 0 && gauss <= 1e-7,
        format!(
            "max |cdf − τ| {worst:.1e} (tol 1e-10), Newton share {share:.3} (min 0.99), fallback misses {uncovered}, \
             Gaussian error {gauss:.1e} (tol 1e-7)"
        ),
    )
}

fn bimodal_samples(seed: u64, n: usize) -> UvcSampleSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut actual = Vec::with_capacity(n);
    let mut predicted = Vec::with_capacity(n);
    for _ in 0..n {
        let p: f64 = if rng.random_bool(0.6) { rng.random_range(0.7..1.0) } else { rng.random_range(0.0..0.5) };
        let z: f64 = StandardNormal.sample(&mut rng);
        predicted.push(p);
        actual.push(p + 0.1 * z);
    }
    UvcSampleSet { bus: 18, hour: 13, actual, predicted }
}

fn c3_conditioning() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let mut ratio_err: f64 = 0.0;
    for _ in 0..50 {
        let g = random_gmm2(&mut rng, 8);
        for &vp in &[-1.5, -0.2, 0.7, 2.5] {
            let c = condition(&g, vp).unwrap();
            let m = g.marginal_pred_pdf(vp);
            for k in 0..=100 {
                let v = -4.0 + 0.08 * k as f64;
                let ratio = g.pdf(v, vp) / m;
                ratio_err = ratio_err.max((c.pdf(v) - ratio).abs() / ratio.max(1.0));
            }
        }
    }
    let g = reduce_gmm(&fit_kde(&bimodal_samples(5, 500)).unwrap(), 10).unwrap();
    let vp = 0.8;
    let c = condition(&g, vp).unwrap();
    let (mean, var) = gmm_moments(&c);
    let (lo, hi) = (mean - 12.0 * var.sqrt(), mean + 12.0 * var.sqrt());
    let peak = (0..4000)
        .map(|k| g.pdf(lo + (hi - lo) * k as f64 / 3999.0, vp))
        .fold(0.0, f64::max)
        * 1.05;
    let n_draws = 1_000_000;
    let mut draws = Vec::with_capacity(n_draws);
    while draws.len() < n_draws {
        let v = rng.random_range(lo..hi);
        if rng.random::<f64>() * peak < g.pdf(v, vp) {
            draws.push(v);
        }
    }
    let n = n_draws as f64;
    let m = draws.iter().sum::<f64>() / n;
    let s2 = draws.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
    let m4 = draws.iter().map(|v| (v - m).powi(4)).sum::<f64>() / n;
    let z_mean = (m - mean).abs() / (s2 / n).sqrt();
    let z_var = (s2 - var).abs() / ((m4 - s2 * s2) / n).sqrt();
    outcome(
        ratio_err <= 1e-10 && z_mean <= 3.0 && z_var <= 3.0,
        format!(
            "ratio error {ratio_err:.1e} (tol 1e-10), mean {z_mean:.2} SE, variance {z_var:.2} SE (limit 3) \
             over {n_draws} draws"
        ),
    )
}

fn c4_reduction() -> Outcome {
    let g = fit_kde(&bimodal_samples(9, 1000)).unwrap();
    let r = reduce_gmm(&g, 10).unwrap();
    let (m0, m1) = (g.mean(), r.mean());
    let (s0, s1) = (g.second_moment(), r.second_moment());
    let mut err: f64 = 0.0;
    for a in 0..2 {
        err = err.max((m0[a] - m1[a]).abs());
        for b in 0..2 {
            err = err.max((s0[a][b] - s1[a][b]).abs());
        }
    }
    outcome(
        g.len() == 1000 && r.len() == 10 && err <= 1e-10,
        format!("{} -> {} components, moment error {err:.1e} (tol 1e-10)", g.len(), r.len()),
    )
}

fn c5_sensitivities() -> Outcome {
    let (net, layout) = ieee33();
    let sens = compute_sensitivities(&net);
    let (r, x) = path_oracle(&net);
    let mut sens_err: f64 = 0.0;
    for i in 0..sens.len() {
        for l in 0..sens.len() {
            sens_err = sens_err.max((sens.r[i][l] - r[i][l]).abs()).max((sens.x[i][l] - x[i][l]).abs());
        }
    }
    let sys = System::new(net.clone(), layout.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut rec_err: f64 = 0.0;
    for _ in 0..1000 {
        let chi: Vec<f64> = layout.uncertain_gens.iter().map(|_| rng.random_range(0.0..1.0)).collect();
        let zeta: Vec<f64> = layout.uncertain_loads.iter().map(|_| rng.random_range(0.0..0.4)).collect();
        let q: Vec<f64> = layout.providers.iter().map(|p| rng.random_range(p.q_min..=p.q_max)).collect();
        let alpha = rng.random_range(0.0..=1.0);
        let (p, qi) = assemble_injections(&net, &layout, &chi, &zeta, &q, alpha).unwrap();
        let v = voltage_from_injections(&sens, &p, &qi, net.v0()).unwrap();
        for (row, &bus) in net.bus_order().iter().enumerate() {
            let d = decompose_voltage(&sys.coeffs, &layout, &chi, &zeta, &q, net.v0(), bus, alpha).unwrap();
            rec_err = rec_err.max((d.total() - v[row]).abs());
        }
    }
    outcome(
        sens_err <= 1e-12 && rec_err <= 1e-12,
        format!("sensitivity error {sens_err:.1e}, reconstruction error {rec_err:.1e} (tol 1e-12, 1000 inputs)"),
    )
}

/// Synthetic feeder data with the generator defaults at the given PV scale.
struct Fixture {
    sys: System,
    gen: Generator,
    train: InjectionSeries,
}

impl Fixture {
    fn new(pv_scale: f64) -> Self {
        let sys = System::ieee33();
        let gen = Generator::new(&sys.layout, SynthConfig { pv_scale, ..Default::default() }).unwrap();
        let (train, _) = gen.series().split_days(0.7);
        Self { sys, gen, train }
    }
}

fn solve(problem: &ManagementProblem, spec: &ManagementSpec) -> Result<Strategy, CoreError> {
    solve_problem(problem, spec, &SolverOptions::default(), TieBreak::Vertex).map(|s| s.strategy)
}

fn c6_saa(fx: &Fixture, bank: &ModelBank) -> Outcome {
    let sys = &fx.sys;
    let var_spec = sys.spec(TAU, Variant::Var, false).unwrap();
    let cvar_spec = sys.spec(TAU, Variant::Cvar, false).unwrap();
    // First (hour, test day) whose VaR dispatch is active and whose CVaR LP
    // is feasible.
    let chosen = (9..=16u32).find_map(|hour| {
        fx.gen.hour_cases(3000..3500, hour).into_iter().find_map(|c| {
            let p = uvcp_profiles(sys, bank, hour, &c.predicted.gen, &c.predicted.load, TAU).unwrap();
            let v = solve(&build_lp(&var_spec, &p).unwrap(), &var_spec).ok()?;
            let cv = solve(&build_lp(&cvar_spec, &p).unwrap(), &cvar_spec).ok()?;
            (v.cost > 0.0).then_some((hour, c, v, cv))
        })
    });
    let Some((hour, case, s_var, s_cvar)) = chosen else {
        return outcome(false, "no test day with an active VaR and a feasible CVaR dispatch".into());
    };
    let models = conditional_models(sys, bank, hour, &case.predicted.gen, &case.predicted.load).unwrap();
    let paired: Vec<(usize, Gmm1)> = sys.buses().iter().copied().zip(models).collect();
    let scen = sample_scenarios(&paired, 100_000, 606).unwrap();
    let v_o = sys.v_o();
    let f_var = violation_frequency(&s_var, &scen, &sys.net, &v_o).unwrap();
    let f_cvar = violation_frequency(&s_cvar, &scen, &sys.net, &v_o).unwrap();
    let max_var = f_var.iter().map(|f| f.upper.max(f.lower)).fold(0.0, f64::max);
    let max_cvar = f_cvar.iter().map(|f| f.upper.max(f.lower)).fold(0.0, f64::max);
    let upper: Vec<usize> = f_var.iter().zip(&f_cvar).filter(|(a, b)| b.upper > a.upper).map(|(a, _)| a.bus).collect();
    let lower: Vec<usize> = f_var.iter().zip(&f_cvar).filter(|(a, b)| b.lower > a.lower).map(|(a, _)| a.bus).collect();
    outcome(
        max_var <= 0.055 && upper.is_empty() && lower.is_empty(),
        format!(
            "hour {hour} day {}: VaR max frequency {max_var:.4} (limit 0.055), CVaR max {max_cvar:.4}; \
             buses where CVaR exceeds VaR: upper {upper:?}, lower {lower:?}; 100000 scenarios",
            case.day
        ),
    )
}

fn curtailment_tables(sys: &System, spec: &ManagementSpec, bank: &CurtailedBank, c: &HourCase) -> PwlRiskTable {
    let (g, l) = sys.parts(&c.predicted.gen, &c.predicted.load);
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
    build_pwl_tables(spec, &inputs).unwrap()
}

/// LP feasibility with the table interpolated at `alpha` as fixed bounds.
fn feasible_at(spec: &ManagementSpec, t: &PwlRiskTable, alpha: f64) -> bool {
    let profiles: Vec<RiskProfile> = spec
        .buses
        .iter()
        .enumerate()
        .map(|(row, &bus)| {
            let (b, g) = t.interpolate(row, alpha);
            RiskProfile { bus, hour: 13, tau: TAU, var_upper: b, var_lower: -g, cvar_upper: b, cvar_lower: -g }
        })
        .collect();
    match solve(&build_var_lp(spec, &profiles).unwrap(), spec) {
        Ok(_) => true,
        Err(CoreError::Infeasible(_)) => false,
        Err(e) => panic!("sweep solve failed: {e}"),
    }
}

struct Timings {
    lp: Duration,
    milp: Duration,
}

fn c7_curtailment(timings: &mut Timings) -> Outcome {
    let fx = Fixture::new(1.5);
    let sys = &fx.sys;
    let (bank, _) = fit_models(sys, &fx.train, &[13], 10).unwrap();
    let spec = sys.spec(TAU, Variant::Var, false).unwrap();
    let cspec = sys.spec(TAU, Variant::Var, true).unwrap();
    let curtailed = fit_curtailed_models(sys, &fx.train, 13, &cspec.alpha_grid, 10).unwrap();
    let cases = fx.gen.hour_cases(3000..3200, 13);
    let window = |row: usize| spec.v_max[row] - spec.v_min[row];

    let spread_case = cases.iter().find_map(|c| {
        let p = uvcp_profiles(sys, &bank, 13, &c.predicted.gen, &c.predicted.load, TAU).unwrap();
        let wide = p.iter().enumerate().find(|(row, q)| q.var_upper - q.var_lower > window(*row))?;
        Some((c, p.clone(), wide.1.bus))
    });
    let Some((case, profiles, wide_bus)) = spread_case else {
        return outcome(false, "no test day whose VaR spread exceeds the voltage window".into());
    };
    let t0 = Instant::now();
    let lp_result = solve(&build_lp(&spec, &profiles).unwrap(), &spec);
    timings.lp = t0.elapsed();
    let lp_infeasible = matches!(lp_result, Err(CoreError::Infeasible(_)));
    let up: Vec<f64> = profiles.iter().map(|p| p.var_upper).collect();
    let lo: Vec<f64> = profiles.iter().map(|p| p.var_lower).collect();
    let binding = binding_buses(&spec, &up, &lo);

    let tables = curtailment_tables(sys, &cspec, &curtailed, case);
    let problem = build_curtailment_milp(&cspec, &tables).unwrap();
    let t0 = Instant::now();
    let milp = solve(&problem, &cspec);
    timings.milp = t0.elapsed();
    let Ok(milp) = milp else {
        return outcome(false, format!("curtailment MILP failed: {:?}", milp.err()));
    };
    let grid = &cspec.alpha_grid;
    let Some(k_star) = grid.iter().position(|&a| feasible_at(&cspec, &tables, a)) else {
        return outcome(false, "no grid point is feasible".into());
    };
    // Smallest feasible interpolated α: fine sweep, then bisection.
    let fine: Vec<f64> = (0..=2000).map(|k| k as f64 / 2000.0).collect();
    let j = fine.iter().position(|&a| feasible_at(&cspec, &tables, a)).unwrap();
    let (mut a, mut b) = (if j == 0 { 0.0 } else { fine[j - 1] }, fine[j]);
    if j > 0 {
        for _ in 0..60 {
            let mid = 0.5 * (a + b);
            if feasible_at(&cspec, &tables, mid) {
                b = mid;
            } else {
                a = mid;
            }
        }
    }
    let alpha_sweep = b;
    let lower_grid = if k_star == 0 { -1.0 } else { grid[k_star - 1] };
    let bracketed = milp.alpha > lower_grid && milp.alpha <= grid[k_star] + 1e-12;
    let matches_sweep = (milp.alpha - alpha_sweep).abs() <= 1e-6;

    // A day on which reactive power alone suffices, on the default fixture.
    let dfx = Fixture::new(SynthConfig::default().pv_scale);
    let fhour = 13;
    let (dbank, _) = fit_models(&dfx.sys, &dfx.train, &[fhour], 10).unwrap();
    let feasible_case = dfx.gen.hour_cases(3000..3200, fhour).into_iter().find_map(|c| {
        let p = uvcp_profiles(&dfx.sys, &dbank, fhour, &c.predicted.gen, &c.predicted.load, TAU).unwrap();
        let s = solve(&build_lp(&spec, &p).unwrap(), &spec).ok()?;
        (s.cost > 0.0).then_some((c, s))
    });
    let Some((fcase, lp_strategy)) = feasible_case else {
        return outcome(false, "no test day with a feasible active LP".into());
    };
    let fcurtailed = fit_curtailed_models(&dfx.sys, &dfx.train, fhour, &cspec.alpha_grid, 10).unwrap();
    let ftables = curtailment_tables(sys, &cspec, &fcurtailed, &fcase);
    let fmilp = solve(&build_curtailment_milp(&cspec, &ftables).unwrap(), &cspec).unwrap();
    let cost_gap = (fmilp.cost - lp_strategy.cost).abs();

    outcome(
        lp_infeasible
            && binding.contains(&wide_bus)
            && bracketed
            && matches_sweep
            && fmilp.alpha == 0.0
            && cost_gap <= 1e-8,
        format!(
            "day {} bus {wide_bus}: LP infeasible {lp_infeasible}, MILP α {:.6} in ({lower_grid:.2}, {:.2}] \
             (first feasible grid point), sweep α {alpha_sweep:.6} (tol 1e-6); hour {fhour} day {}: α {} and \
             cost gap {cost_gap:.1e} (tol 1e-8)",
            case.day, milp.alpha, grid[k_star], fcase.day, fmilp.alpha
        ),
    )
}

fn random_milp(seed: u64, n_bin: usize) -> MilpProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m = MilpProblem::default();
    let bins: Vec<VarId> = (0..n_bin)
        .map(|k| m.add_binary(format!("b{k}"), rng.random_range(-2.0..2.0)))
        .collect();
    let conts: Vec<VarId> = (0..3)
        .map(|k| m.lp.add_var(format!("c{k}"), -1.0, 1.0, rng.random_range(-1.0..1.0)))
        .collect();
    for r in 0..rng.random_range(2..6) {
        let mut row = Vec::new();
        for &v in bins.iter().chain(&conts) {
            if rng.random_bool(0.5) {
                row.push((v, rng.random_range(-1.0..1.0)));
            }
        }
        let rhs = rng.random_range(-0.5..1.5);
        m.lp.add_constraint(format!("r{r}"), &row, Sense::Le, rhs);
    }
    m
}

fn enumerate(m: &MilpProblem) -> Option<f64> {
    let bins = m.binaries().to_vec();
    let opts = SolverOptions::default();
    let mut best: Option<f64> = None;
    for mask in 0u32..(1 << bins.len()) {
        let mut lp = m.lp.clone();
        for (k, &b) in bins.iter().enumerate() {
            let v = f64::from((mask >> k) & 1);
            lp.set_bounds(b, v, v);
        }
        let r = solve_lp(&lp, &opts).unwrap();
        if r.status == SolveStatus::Optimal {
            best = Some(best.map_or(r.objective, |b: f64| b.min(r.objective)));
        }
    }
    best
}

fn c8_milp_exactness() -> Outcome {
    let opts = SolverOptions::default();
    let mut fixtures: Vec<(String, MilpProblem)> = (0..100u64)
        .map(|s| (format!("random {s}"), random_milp(s, 1 + (s as usize % 12))))
        .collect();
    // Curtailment problems on an 11-point grid: 10 adjacency binaries.
    let fx = Fixture::new(1.5);
    let mut cspec = fx.sys.spec(TAU, Variant::Var, true).unwrap();
    cspec.alpha_grid = voltrisk_core::manage::uniform_grid(11);
    let curtailed = fit_curtailed_models(&fx.sys, &fx.train, 13, &cspec.alpha_grid, 10).unwrap();
    for c in fx.gen.hour_cases(3000..3006, 13) {
        let t = curtailment_tables(&fx.sys, &cspec, &curtailed, &c);
        fixtures.push((format!("curtailment day {}", c.day), build_curtailment_milp(&cspec, &t).unwrap().milp));
    }
    let mut worst: f64 = 0.0;
    let mut mismatches = Vec::new();
    let max_bins = fixtures.iter().map(|(_, m)| m.binaries().len()).max().unwrap_or(0);
    for (name, m) in &fixtures {
        let r = solve_milp(m, &opts).unwrap();
        match (enumerate(m), r.status) {
            (Some(best), SolveStatus::Optimal) => {
                let gap = (r.objective - best).abs() / best.abs().max(1.0);
                worst = worst.max(gap);
                if gap > 1e-9 {
                    mismatches.push(name.clone());
                }
            }
            (None, SolveStatus::Infeasible) => {}
            _ => mismatches.push(name.clone()),
        }
    }
    outcome(
        mismatches.is_empty() && max_bins <= 12,
        format!(
            "{} fixtures with at most {max_bins} binaries, max gap {worst:.1e} (tol 1e-9), mismatches {mismatches:?}",
            fixtures.len()
        ),
    )
}

struct Comparison9 {
    outcome: Outcome,
    pipeline: Duration,
}

fn c9_comparison(fx: &Fixture) -> (Comparison9, ModelBank) {
    let sys = &fx.sys;
    let all_hours: Vec<u32> = (0..24).collect();
    let hours: Vec<u32> = (9..=16).collect();
    let start = Instant::now();
    let (bank, failures) = fit_models(sys, &fx.train, &all_hours, 10).unwrap();
    assert!(failures.is_empty(), "fit failures: {failures:?}");
    let spec = sys.spec(TAU, Variant::Var, false).unwrap();
    let cspec = sys.spec(TAU, Variant::Var, true).unwrap();
    let covariances: BTreeMap<u32, Vec<Vec<f64>>> =
        hours.iter().map(|&h| (h, residual_covariance(&fx.train, h).unwrap())).collect();
    let banks: BTreeMap<u32, CurtailedBank> = hours
        .iter()
        .map(|&h| (h, fit_curtailed_models(sys, &fx.train, h, &cspec.alpha_grid, 10).unwrap()))
        .collect();
    let records: Vec<DayRecord> = hours
        .iter()
        .flat_map(|&h| fx.gen.hour_cases(3000..3500, h).into_iter().map(move |c| DayRecord::from_case(&c, h)))
        .collect();
    let setup = ComparisonSetup {
        sys,
        spec: &spec,
        bank: &bank,
        covariances: &covariances,
        fallback: Some(CurtailmentFallback { spec: &cspec, banks: &banks }),
        opts: SolverOptions::default(),
        tie: TieBreak::Vertex,
        track: None,
    };
    let cmp = compare_on_records(&setup, &records).unwrap();
    let reports = compare_methods(&cmp.runs, &cmp.cases, &sys.net, &sys.v_o(), TAU).unwrap();
    let pipeline = start.elapsed();
    let (uvcp, ppo) = (&reports[0], &reports[1]);
    let dev = |f: f64| (f - 0.05).abs();

    // Lower-side confidence of the VaR estimates at bus 18, hour 13.
    let row = sys.coeffs.row(18).unwrap();
    let model = bank.get(18, 13).unwrap();
    let (mut est_u, mut est_p, mut realized) = (Vec::new(), Vec::new(), Vec::new());
    for c in fx.gen.hour_cases(5000..105_000, 13) {
        let (gp, lp) = sys.parts(&c.predicted.gen, &c.predicted.load);
        let cond = condition(model, gp[row] - lp[row]).unwrap();
        est_u.push(RiskProfile::from_model(&cond, 18, 13, TAU).unwrap().var_lower);
        let g = ppo_model(&covariances[&13], &c.predicted.gen, &c.predicted.load)
            .profile(&sys.coeffs, 18, 13, TAU, 0.0)
            .unwrap();
        est_p.push(g.var_lower);
        let (ga, la) = sys.parts(&c.actual.gen, &c.actual.load);
        realized.push(ga[row] - la[row]);
    }
    let tau_u = var_confidence(&est_u, &realized, Side::Lower).unwrap();
    let tau_p = var_confidence(&est_p, &realized, Side::Lower).unwrap();

    let pass = dev(uvcp.max_frequency) < dev(ppo.max_frequency) && tau_p < 0.95 && (0.93..=0.98).contains(&tau_u);
    let detail = format!(
        "{} held-out cases, hours 9-16: UVCP max frequency {:.4} (bus {}), PPO {:.4} (bus {}); \
         lower confidence at bus 18 hour 13 over {} days: UVCP {tau_u:.4} (range 0.93-0.98), PPO {tau_p:.4} \
         (limit < 0.95); curtailed {:?}, infeasible {:?}",
        cmp.cases.len(),
        uvcp.max_frequency,
        uvcp.max_bus,
        ppo.max_frequency,
        ppo.max_bus,
        realized.len(),
        cmp.curtailed,
        cmp.infeasible
    );
    (Comparison9 { outcome: outcome(pass, detail), pipeline }, bank)
}

fn c10_runtime(t: &Timings, pipeline: Duration) -> Outcome {
    outcome(
        t.lp < Duration::from_secs(1) && t.milp < Duration::from_secs(5) && pipeline < Duration::from_secs(120),
        format!(
            "VaR LP {:.1} ms (limit 1 s), curtailment MILP {:.1} ms (limit 5 s), fit-manage-validate {:.1} s \
             (limit 120 s)",
            t.lp.as_secs_f64() * 1e3,
            t.milp.as_secs_f64() * 1e3,
            pipeline.as_secs_f64()
        ),
    )
}

fn guarded(f: impl FnOnce() -> Outcome) -> Outcome {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        outcome(false, format!("panicked: {msg}"))
    })
}

fn main() {
    let mut results: Vec<(usize, Outcome)> = Vec::new();
    let mut report = |n: usize, o: Outcome| {
        println!("criterion {n:>2} {}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        results.push((n, o));
    };
    report(1, guarded(c1_cvar_integration));
    report(2, guarded(c2_var_consistency));
    report(3, guarded(c3_conditioning));
    report(4, guarded(c4_reduction));
    report(5, guarded(c5_sensitivities));

    let fx = Fixture::new(SynthConfig::default().pv_scale);
    let mut c9 = None;
    let mut bank = None;
    let nine = guarded(|| {
        let (c, b) = c9_comparison(&fx);
        bank = Some(b);
        let o = Outcome { pass: c.outcome.pass, detail: c.outcome.detail.clone() };
        c9 = Some(c);
        o
    });
    report(
        6,
        match &bank {
            Some(b) => guarded(|| c6_saa(&fx, b)),
            None => outcome(false, "model fitting failed".into()),
        },
    );
    let mut timings = Timings { lp: Duration::MAX, milp: Duration::MAX };
    report(7, guarded(|| c7_curtailment(&mut timings)));
    report(8, guarded(c8_milp_exactness));
    report(9, nine);
    report(
        10,
        match &c9 {
            Some(c) => c10_runtime(&timings, c.pipeline),
            None => outcome(false, "pipeline did not complete".into()),
        },
    );
    let failed: Vec<usize> = results.iter().filter(|(_, o)| !o.pass).map(|(n, _)| *n).collect();
    if failed.is_empty() {
        println!("acceptance: all {} criteria passed", results.len());
    } else {
        println!("acceptance: failed criteria {failed:?}");
        std::process::exit(1);
    }
}
