//! Reactive-power risk management problems and their solutions.

use serde::{Deserialize, Serialize};
use voltrisk_solver::{solve_lp, solve_milp, LpProblem, MilpProblem, Sense, SolveResult, SolveStatus, SolverOptions, VarId};

use crate::density::{condition, normal, Gmm2};
use crate::error::{CoreError, Result};
use crate::grid_model::{InjectionLayout, Network, Provider, UvcCoefficients};
use crate::risk::{assess_bus, RiskProfile};
use crate::uvc::constant_component;

/// Default number of curtailment grid points.
pub const DEFAULT_GRID_POINTS: usize = 21;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Var,
    Cvar,
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Variant::Var => "var",
            Variant::Cvar => "cvar",
        })
    }
}

/// Everything a management problem needs besides the risk figures. Per-bus
/// vectors follow `buses`; squared voltages throughout.
#[derive(Debug, Clone)]
pub struct ManagementSpec {
    pub variant: Variant,
    pub curtailment: bool,
    pub tau: f64,
    pub alpha_grid: Vec<f64>,
    pub big_m: f64,
    pub providers: Vec<Provider>,
    pub buses: Vec<usize>,
    pub v_min: Vec<f64>,
    pub v_max: Vec<f64>,
    pub v_o: Vec<f64>,
    pub b_q: Vec<Vec<f64>>,
    pub b_p: Vec<Vec<f64>>,
}

impl ManagementSpec {
    pub fn new(
        net: &Network,
        layout: &InjectionLayout,
        coeffs: &UvcCoefficients,
        tau: f64,
        variant: Variant,
        curtailment: bool,
    ) -> Result<Self> {
        let v_o = (0..coeffs.buses.len())
            .map(|row| constant_component(coeffs, layout, row, net.v0()))
            .collect();
        let spec = Self {
            variant,
            curtailment,
            tau,
            alpha_grid: uniform_grid(DEFAULT_GRID_POINTS),
            big_m: default_big_m(&layout.providers),
            providers: layout.providers.clone(),
            buses: coeffs.buses.clone(),
            v_min: net.v_min(),
            v_max: net.v_max(),
            v_o,
            b_q: coeffs.b_q.clone(),
            b_p: coeffs.b_p.clone(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(CoreError::Input(format!("confidence level {} outside (0, 1)", self.tau)));
        }
        let g = &self.alpha_grid;
        if g.len() < 2 || g[0] != 0.0 || g[g.len() - 1] != 1.0 || g.windows(2).any(|w| w[1] <= w[0]) {
            return Err(CoreError::Input(
                "curtailment grid must increase strictly from 0 to 1 with at least 2 points".into(),
            ));
        }
        if !(self.big_m > 0.0 && self.big_m.is_finite()) {
            return Err(CoreError::Input(format!("curtailment weight {} must be positive", self.big_m)));
        }
        let n = self.buses.len();
        if [self.v_min.len(), self.v_max.len(), self.v_o.len(), self.b_q.len(), self.b_p.len()]
            .iter()
            .any(|&l| l != n)
            || self
                .b_q
                .iter()
                .chain(&self.b_p)
                .any(|row| row.len() != self.providers.len())
        {
            return Err(CoreError::Input("management data do not match the bus or provider count".into()));
        }
        Ok(())
    }

    pub fn row(&self, bus: usize) -> Result<usize> {
        self.buses
            .iter()
            .position(|&b| b == bus)
            .ok_or_else(|| CoreError::Input(format!("bus {bus} is not managed")))
    }

    /// Active-power part of the controllable component at `row`.
    pub fn v_c_fixed(&self, row: usize) -> f64 {
        self.providers
            .iter()
            .enumerate()
            .map(|(j, p)| self.b_p[row][j] * p.p)
            .sum()
    }
}

/// `l` equally spaced points on [0, 1].
pub fn uniform_grid(l: usize) -> Vec<f64> {
    let last = (l.max(2) - 1) as f64;
    (0..l.max(2)).map(|k| k as f64 / last).collect()
}

/// `10⁴ · Σ c_j · max(|q_min|, q_max)`; falls back to 10⁴ when that is zero.
pub fn default_big_m(providers: &[Provider]) -> f64 {
    let m: f64 = providers
        .iter()
        .map(|p| p.cost * p.q_min.abs().max(p.q_max))
        .sum::<f64>()
        * 1e4;
    if m > 0.0 {
        m
    } else {
        1e4
    }
}

/// Upper (β) and lower (γ) UVC risk terms of each bus on the curtailment
/// grid; γ is the risk of `−v_r`, so the lower voltage bound is `−γ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PwlRiskTable {
    pub buses: Vec<usize>,
    pub alpha: Vec<f64>,
    pub beta: Vec<Vec<f64>>,
    pub gamma: Vec<Vec<f64>>,
}

impl PwlRiskTable {
    /// Linear interpolation of bus `row`'s upper and lower terms at `alpha`.
    pub fn interpolate(&self, row: usize, alpha: f64) -> (f64, f64) {
        let a = &self.alpha;
        let k = a.partition_point(|&x| x <= alpha).clamp(1, a.len() - 1);
        let t = (alpha - a[k - 1]) / (a[k] - a[k - 1]);
        let lerp = |v: &[f64]| v[k - 1] + t * (v[k] - v[k - 1]);
        (lerp(&self.beta[row]), lerp(&self.gamma[row]))
    }
}

/// Per-bus inputs of the curtailment tables: for each grid point, the model
/// fitted on curtailed history, plus the generation and load parts of the
/// day-ahead prediction.
#[derive(Debug, Clone)]
pub struct CurtailedBusModel {
    pub bus: usize,
    pub models: Vec<Gmm2>,
    pub pred_gen: f64,
    pub pred_load: f64,
}

pub fn build_pwl_tables(spec: &ManagementSpec, inputs: &[CurtailedBusModel]) -> Result<PwlRiskTable> {
    spec.validate()?;
    let l = spec.alpha_grid.len();
    let mut beta = vec![Vec::with_capacity(l); spec.buses.len()];
    let mut gamma = vec![Vec::with_capacity(l); spec.buses.len()];
    let mut seen = vec![false; spec.buses.len()];
    for m in inputs {
        let row = spec.row(m.bus)?;
        if m.models.len() != l {
            return Err(CoreError::Input(format!(
                "bus {} has {} curtailed models for {l} grid points",
                m.bus,
                m.models.len()
            )));
        }
        for (g, &alpha) in m.models.iter().zip(&spec.alpha_grid) {
            let v_pred = (1.0 - alpha) * m.pred_gen - m.pred_load;
            let b = assess_bus(&condition(g, v_pred)?, spec.tau, 0.0, 0.0)?;
            let (up, lo) = match spec.variant {
                Variant::Var => (b.var_upper, b.var_lower),
                Variant::Cvar => (b.cvar_upper, b.cvar_lower),
            };
            beta[row].push(up);
            gamma[row].push(-lo);
        }
        seen[row] = true;
    }
    if let Some(row) = seen.iter().position(|s| !s) {
        return Err(CoreError::Input(format!("no curtailment models for bus {}", spec.buses[row])));
    }
    Ok(PwlRiskTable {
        buses: spec.buses.clone(),
        alpha: spec.alpha_grid.clone(),
        beta,
        gamma,
    })
}

/// Handles of the decision variables in a built problem.
#[derive(Debug, Clone)]
pub struct ProblemVars {
    pub q: Vec<VarId>,
    pub q_abs: Vec<VarId>,
    pub v_c: Vec<VarId>,
    pub alpha: Option<VarId>,
    pub lambdas: Vec<VarId>,
}

/// A built management problem; a pure LP has no binaries.
#[derive(Debug, Clone)]
pub struct ManagementProblem {
    pub milp: MilpProblem,
    pub vars: ProblemVars,
}

impl ManagementProblem {
    pub fn lp(&self) -> &LpProblem {
        &self.milp.lp
    }

    pub fn is_milp(&self) -> bool {
        !self.milp.binaries().is_empty()
    }
}

/// Variables, the absolute-value rows and the definition of `v_c`; the
/// risk rows are added by the caller.
fn skeleton(spec: &ManagementSpec) -> (LpProblem, ProblemVars) {
    let mut lp = LpProblem::new();
    let mut q = Vec::new();
    let mut q_abs = Vec::new();
    for p in &spec.providers {
        q.push(lp.add_var(format!("q_{}", p.id), p.q_min, p.q_max, 0.0));
    }
    for p in &spec.providers {
        q_abs.push(lp.add_var(format!("qabs_{}", p.id), 0.0, f64::INFINITY, p.cost));
    }
    let v_c: Vec<VarId> = spec
        .buses
        .iter()
        .map(|b| lp.add_var(format!("vc_{b}"), f64::NEG_INFINITY, f64::INFINITY, 0.0))
        .collect();
    for (j, p) in spec.providers.iter().enumerate() {
        lp.add_constraint(format!("abs_pos_{}", p.id), &[(q_abs[j], 1.0), (q[j], -1.0)], Sense::Ge, 0.0);
        lp.add_constraint(format!("abs_neg_{}", p.id), &[(q_abs[j], 1.0), (q[j], 1.0)], Sense::Ge, 0.0);
    }
    for (i, b) in spec.buses.iter().enumerate() {
        let mut row = vec![(v_c[i], 1.0)];
        row.extend(q.iter().zip(&spec.b_q[i]).map(|(&v, &c)| (v, -c)));
        lp.add_constraint(format!("vc_def_{b}"), &row, Sense::Eq, spec.v_c_fixed(i));
    }
    (
        lp,
        ProblemVars {
            q,
            q_abs,
            v_c,
            alpha: None,
            lambdas: Vec::new(),
        },
    )
}

/// Risk-constrained LP with fixed per-bus upper and lower UVC bounds.
fn bounds_lp(spec: &ManagementSpec, upper: &[f64], lower: &[f64]) -> ManagementProblem {
    let (mut lp, vars) = skeleton(spec);
    for (i, b) in spec.buses.iter().enumerate() {
        lp.add_constraint(
            format!("vmax_{b}"),
            &[(vars.v_c[i], 1.0)],
            Sense::Le,
            spec.v_max[i] - spec.v_o[i] - upper[i],
        );
        lp.add_constraint(
            format!("vmin_{b}"),
            &[(vars.v_c[i], 1.0)],
            Sense::Ge,
            spec.v_min[i] - spec.v_o[i] - lower[i],
        );
    }
    ManagementProblem {
        milp: MilpProblem::new(lp),
        vars,
    }
}

fn profile_rows<'a>(spec: &ManagementSpec, profiles: &'a [RiskProfile]) -> Result<Vec<&'a RiskProfile>> {
    spec.buses
        .iter()
        .map(|&b| {
            profiles
                .iter()
                .find(|p| p.bus == b)
                .ok_or_else(|| CoreError::Input(format!("no risk profile for bus {b}")))
        })
        .collect()
}

/// VaR-constrained dispatch.
pub fn build_var_lp(spec: &ManagementSpec, profiles: &[RiskProfile]) -> Result<ManagementProblem> {
    spec.validate()?;
    let rows = profile_rows(spec, profiles)?;
    let up: Vec<f64> = rows.iter().map(|p| p.var_upper).collect();
    let lo: Vec<f64> = rows.iter().map(|p| p.var_lower).collect();
    Ok(bounds_lp(spec, &up, &lo))
}

/// CVaR-constrained dispatch.
pub fn build_cvar_lp(spec: &ManagementSpec, profiles: &[RiskProfile]) -> Result<ManagementProblem> {
    spec.validate()?;
    let rows = profile_rows(spec, profiles)?;
    let up: Vec<f64> = rows.iter().map(|p| p.cvar_upper).collect();
    let lo: Vec<f64> = rows.iter().map(|p| p.cvar_lower).collect();
    Ok(bounds_lp(spec, &up, &lo))
}

/// The LP of `spec.variant`.
pub fn build_lp(spec: &ManagementSpec, profiles: &[RiskProfile]) -> Result<ManagementProblem> {
    match spec.variant {
        Variant::Var => build_var_lp(spec, profiles),
        Variant::Cvar => build_cvar_lp(spec, profiles),
    }
}

/// Dispatch plus a global curtailment ratio, with the risk terms
/// interpolated over the grid through an SOS2 weight set.
pub fn build_curtailment_milp(spec: &ManagementSpec, tables: &PwlRiskTable) -> Result<ManagementProblem> {
    spec.validate()?;
    if tables.alpha != spec.alpha_grid || tables.buses != spec.buses {
        return Err(CoreError::Input("curtailment tables do not match the management grid".into()));
    }
    let (mut lp, mut vars) = skeleton(spec);
    let alpha = lp.add_var("alpha", 0.0, 1.0, spec.big_m);
    let lambdas: Vec<VarId> = (0..spec.alpha_grid.len())
        .map(|l| lp.add_var(format!("lambda_{}", l + 1), 0.0, f64::INFINITY, 0.0))
        .collect();
    let ones: Vec<(VarId, f64)> = lambdas.iter().map(|&v| (v, 1.0)).collect();
    lp.add_constraint("lambda_sum", &ones, Sense::Eq, 1.0);
    let mut def = vec![(alpha, 1.0)];
    def.extend(lambdas.iter().zip(&spec.alpha_grid).map(|(&v, &a)| (v, -a)));
    lp.add_constraint("alpha_def", &def, Sense::Eq, 0.0);
    for (i, b) in spec.buses.iter().enumerate() {
        let mut up = vec![(vars.v_c[i], 1.0)];
        up.extend(lambdas.iter().zip(&tables.beta[i]).map(|(&v, &c)| (v, c)));
        lp.add_constraint(format!("vmax_{b}"), &up, Sense::Le, spec.v_max[i] - spec.v_o[i]);
        let mut lo = vec![(vars.v_c[i], 1.0)];
        lo.extend(lambdas.iter().zip(&tables.gamma[i]).map(|(&v, &c)| (v, -c)));
        lp.add_constraint(format!("vmin_{b}"), &lo, Sense::Ge, spec.v_min[i] - spec.v_o[i]);
    }
    let mut milp = MilpProblem::new(lp);
    milp.add_sos2("sos", &lambdas);
    vars.alpha = Some(alpha);
    vars.lambdas = lambdas;
    Ok(ManagementProblem { milp, vars })
}

/// Gaussian predictive model of all uncertain injections: mean vector and
/// covariance over `[χ; ζ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianInjectionModel {
    pub mean_gen: Vec<f64>,
    pub mean_load: Vec<f64>,
    /// Square matrix over generators then loads.
    pub cov: Vec<Vec<f64>>,
}

impl GaussianInjectionModel {
    pub fn validate(&self) -> Result<()> {
        let n = self.mean_gen.len() + self.mean_load.len();
        if self.cov.len() != n || self.cov.iter().any(|r| r.len() != n) {
            return Err(CoreError::Input("covariance does not match the mean vector".into()));
        }
        for a in 0..n {
            if !(self.cov[a][a] >= 0.0) {
                return Err(CoreError::Input(format!("covariance has negative variance at {a}")));
            }
            for b in 0..a {
                if self.cov[a][b] != self.cov[b][a] {
                    return Err(CoreError::Input("covariance is not symmetric".into()));
                }
            }
        }
        // Positive semidefinite check by pivoted Cholesky with a small slack.
        let mut m = self.cov.clone();
        let scale = (0..n).map(|a| m[a][a]).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
        for k in 0..n {
            let d = m[k][k];
            if d < -1e-10 * scale {
                return Err(CoreError::Input("covariance is not positive semidefinite".into()));
            }
            if d <= 1e-14 * scale {
                continue;
            }
            for a in k + 1..n {
                let f = m[a][k] / d;
                for b in k + 1..n {
                    m[a][b] -= f * m[k][b];
                }
            }
        }
        Ok(())
    }

    /// Mean and variance of the UVC of `row` at curtailment `alpha`.
    pub fn uvc_moments(&self, coeffs: &UvcCoefficients, row: usize, alpha: f64) -> (f64, f64) {
        let ng = self.mean_gen.len();
        let bg = &coeffs.b_gen[row];
        let bd = &coeffs.b_load[row];
        let mean_g: f64 = bg.iter().zip(&self.mean_gen).map(|(b, m)| b * m).sum();
        let mean_d: f64 = bd.iter().zip(&self.mean_load).map(|(b, m)| b * m).sum();
        let quad = |u: &[f64], off_u: usize, v: &[f64], off_v: usize| -> f64 {
            let mut s = 0.0;
            for (a, &x) in u.iter().enumerate() {
                for (b, &y) in v.iter().enumerate() {
                    s += x * self.cov[off_u + a][off_v + b] * y;
                }
            }
            s
        };
        let s = 1.0 - alpha;
        let var = s * s * quad(bg, 0, bg, 0) + quad(bd, ng, bd, ng) - 2.0 * s * quad(bg, 0, bd, ng);
        (s * mean_g - mean_d, var.max(0.0))
    }

    /// Gaussian risk profile of `bus`: `E ± Φ⁻¹(τ)·√D`, with the matching
    /// Gaussian CVaR.
    pub fn profile(&self, coeffs: &UvcCoefficients, bus: usize, hour: u32, tau: f64, alpha: f64) -> Result<RiskProfile> {
        let row = coeffs.row(bus)?;
        let (mean, var) = self.uvc_moments(coeffs, row, alpha);
        let sd = var.sqrt();
        let z = normal::quantile(tau);
        let tail = normal::pdf(z) / (1.0 - tau);
        Ok(RiskProfile {
            bus,
            hour,
            tau,
            var_upper: mean + z * sd,
            var_lower: mean - z * sd,
            cvar_upper: mean + tail * sd,
            cvar_lower: mean - tail * sd,
        })
    }
}

/// The Gaussian baseline: an LP without curtailment, or the SOS2 MILP with
/// the Gaussian risk terms tabulated over the curtailment grid.
pub fn build_ppo_baseline(
    model: &GaussianInjectionModel,
    coeffs: &UvcCoefficients,
    spec: &ManagementSpec,
    hour: u32,
) -> Result<ManagementProblem> {
    model.validate()?;
    spec.validate()?;
    if !spec.curtailment {
        let profiles = spec
            .buses
            .iter()
            .map(|&b| model.profile(coeffs, b, hour, spec.tau, 0.0))
            .collect::<Result<Vec<_>>>()?;
        return build_lp(spec, &profiles);
    }
    let mut beta = Vec::new();
    let mut gamma = Vec::new();
    for &b in &spec.buses {
        let mut up = Vec::new();
        let mut lo = Vec::new();
        for &a in &spec.alpha_grid {
            let p = model.profile(coeffs, b, hour, spec.tau, a)?;
            let (u, l) = match spec.variant {
                Variant::Var => (p.var_upper, p.var_lower),
                Variant::Cvar => (p.cvar_upper, p.cvar_lower),
            };
            up.push(u);
            lo.push(-l);
        }
        beta.push(up);
        gamma.push(lo);
    }
    let tables = PwlRiskTable {
        buses: spec.buses.clone(),
        alpha: spec.alpha_grid.clone(),
        beta,
        gamma,
    };
    build_curtailment_milp(spec, &tables)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderSetpoint {
    pub id: String,
    pub mvar: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BusComponent {
    pub bus: usize,
    pub pu2: f64,
}

/// A solved dispatch. `cost` excludes the curtailment penalty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    pub variant: Variant,
    pub tau: f64,
    pub alpha: f64,
    pub cost: f64,
    pub q: Vec<ProviderSetpoint>,
    pub v_c: Vec<BusComponent>,
    #[serde(skip)]
    pub q_abs: Vec<f64>,
}

impl Strategy {
    pub fn q_values(&self) -> Vec<f64> {
        self.q.iter().map(|s| s.mvar).collect()
    }

    pub fn v_c_values(&self) -> Vec<f64> {
        self.v_c.iter().map(|c| c.pu2).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("strategies serialize")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let mut s: Strategy =
            serde_json::from_str(text).map_err(|e| CoreError::Input(format!("strategy JSON: {e}")))?;
        s.q_abs = s.q.iter().map(|p| p.mvar.abs()).collect();
        Ok(s)
    }

    /// A strategy that dispatches nothing.
    pub fn idle(spec: &ManagementSpec) -> Self {
        Self {
            variant: spec.variant,
            tau: spec.tau,
            alpha: 0.0,
            cost: 0.0,
            q: spec
                .providers
                .iter()
                .map(|p| ProviderSetpoint {
                    id: p.id.clone(),
                    mvar: 0.0,
                })
                .collect(),
            v_c: spec
                .buses
                .iter()
                .enumerate()
                .map(|(i, &bus)| BusComponent {
                    bus,
                    pu2: spec.v_c_fixed(i),
                })
                .collect(),
            q_abs: vec![0.0; spec.providers.len()],
        }
    }
}

/// Reads the strategy out of an optimal solve and checks it against the
/// problem: bounds on q, cost against the objective.
pub fn extract_strategy(result: &SolveResult, problem: &ManagementProblem, spec: &ManagementSpec) -> Result<Strategy> {
    match result.status {
        SolveStatus::Optimal => {}
        SolveStatus::Infeasible => return Err(CoreError::Infeasible("no dispatch satisfies the risk limits".into())),
        SolveStatus::Unbounded => return Err(CoreError::Unbounded("management problem".into())),
    }
    let v = &problem.vars;
    let q: Vec<f64> = v
        .q
        .iter()
        .zip(&spec.providers)
        .map(|(&id, p)| result.value(id).clamp(p.q_min, p.q_max))
        .collect();
    let q_abs: Vec<f64> = q.iter().map(|x| x.abs()).collect();
    let alpha = v.alpha.map_or(0.0, |a| result.value(a).clamp(0.0, 1.0));
    let cost: f64 = spec.providers.iter().zip(&q_abs).map(|(p, a)| p.cost * a).sum();
    let penalty = v.alpha.map_or(0.0, |_| spec.big_m * alpha);
    let reported = result.objective - penalty;
    // Rounding scales with the whole objective, penalty included.
    if (cost - reported).abs() > 1e-8 * result.objective.abs().max(1.0) {
        return Err(CoreError::Numeric(format!(
            "dispatch cost {cost} disagrees with the solver objective {reported}"
        )));
    }
    let v_c = spec
        .buses
        .iter()
        .enumerate()
        .map(|(i, &bus)| BusComponent {
            bus,
            pu2: spec.b_q[i].iter().zip(&q).map(|(b, x)| b * x).sum::<f64>() + spec.v_c_fixed(i),
        })
        .collect();
    Ok(Strategy {
        variant: spec.variant,
        tau: spec.tau,
        alpha,
        cost,
        q: spec
            .providers
            .iter()
            .zip(&q)
            .map(|(p, &mvar)| ProviderSetpoint { id: p.id.clone(), mvar })
            .collect(),
        v_c,
        q_abs,
    })
}

/// How ties among optimal dispatches are resolved.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TieBreak {
    /// Whatever vertex the simplex lands on (already deterministic).
    Vertex,
    /// Lexicographically smallest `|q|`, by re-solving with the cost fixed.
    Lexicographic,
}

/// Solve outcome with the primary solve's statistics.
#[derive(Debug, Clone)]
pub struct Solved {
    pub strategy: Strategy,
    pub primary: SolveResult,
    pub solves: usize,
}

pub fn solve_problem(
    problem: &ManagementProblem,
    spec: &ManagementSpec,
    opts: &SolverOptions,
    tie: TieBreak,
) -> Result<Solved> {
    let primary = if problem.is_milp() {
        solve_milp(&problem.milp, opts)?
    } else {
        solve_lp(problem.lp(), opts)?
    };
    if !primary.is_optimal() {
        // Surface the typed error.
        extract_strategy(&primary, problem, spec)?;
    }
    let mut solves = 1;
    let mut final_result = primary.clone();
    if tie == TieBreak::Lexicographic {
        let mut lp = problem.lp().clone();
        for &b in problem.milp.binaries() {
            let z = primary.value(b).round();
            lp.set_bounds(b, z, z);
        }
        // Curtailment stays put; only the dispatch cost is capped.
        let mut cap = primary.objective;
        if let Some(a) = problem.vars.alpha {
            let z = primary.value(a);
            lp.set_bounds(a, z, z);
            cap -= lp.variable(a).cost * z;
        }
        let objective: Vec<(VarId, f64)> = lp
            .var_ids()
            .filter(|&v| Some(v) != problem.vars.alpha)
            .map(|v| (v, lp.variable(v).cost))
            .filter(|&(_, c)| c != 0.0)
            .collect();
        let slack = 1e-11 * cap.abs().max(1.0);
        lp.add_constraint("cost_cap", &objective, Sense::Le, cap + slack);
        for v in lp.var_ids().collect::<Vec<_>>() {
            lp.set_cost(v, 0.0);
        }
        for (j, &a) in problem.vars.q_abs.iter().enumerate() {
            lp.set_cost(a, 1.0);
            let r = solve_lp(&lp, opts)?;
            solves += 1;
            if !r.is_optimal() {
                return Err(CoreError::Numeric(format!(
                    "tie-break solve for provider {} returned {:?}",
                    spec.providers[j].id, r.status
                )));
            }
            lp.set_cost(a, 0.0);
            lp.add_constraint(format!("lex_{j}"), &[(a, 1.0)], Sense::Le, r.objective + 1e-11);
            final_result.values = r.values;
        }
        final_result.objective = problem.lp().objective_value(&final_result.values);
    }
    let strategy = extract_strategy(&final_result, problem, spec)?;
    Ok(Solved {
        strategy,
        primary,
        solves,
    })
}

/// Buses whose risk window cannot be met by any dispatch on its own: the
/// spread between the risk bounds exceeds the voltage window, or the
/// required controllable component is out of the providers' reach.
pub fn binding_buses(spec: &ManagementSpec, upper: &[f64], lower: &[f64]) -> Vec<usize> {
    let mut out = Vec::new();
    for (i, &bus) in spec.buses.iter().enumerate() {
        let hi = spec.v_max[i] - spec.v_o[i] - upper[i];
        let lo = spec.v_min[i] - spec.v_o[i] - lower[i];
        let fixed = spec.v_c_fixed(i);
        let (mut reach_lo, mut reach_hi) = (fixed, fixed);
        for (j, p) in spec.providers.iter().enumerate() {
            let (a, b) = (spec.b_q[i][j] * p.q_min, spec.b_q[i][j] * p.q_max);
            reach_lo += a.min(b);
            reach_hi += a.max(b);
        }
        if lo > hi || lo > reach_hi || hi < reach_lo {
            out.push(bus);
        }
    }
    out
}
