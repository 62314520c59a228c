//! Value-at-risk and conditional value-at-risk of mixture distributions.

use std::io::{Read, Write};

use crate::density::{gmm_moments, negate, normal, Gmm1};
use crate::error::{CoreError, Result};

const CDF_TOL: f64 = 1e-10;
const MAX_NEWTON: usize = 50;
const MAX_BISECTION: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RootMethod {
    Newton,
    Bisection,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarSolution {
    pub value: f64,
    /// Newton steps taken before convergence or fallback.
    pub newton_iterations: usize,
    pub bisection_iterations: usize,
    pub method: RootMethod,
}

/// τ-quantile of `g`.
pub fn var_gmm(g: &Gmm1, tau: f64) -> Result<f64> {
    var_gmm_detailed(g, tau).map(|s| s.value)
}

/// Newton iteration on the probit of `cdf(x) = τ` from the best of a few
/// quantile guesses, falling back to bisection when an iterate leaves the
/// bracket or the density vanishes.
pub fn var_gmm_detailed(g: &Gmm1, tau: f64) -> Result<VarSolution> {
    if !(tau > 0.0 && tau < 1.0) {
        return Err(CoreError::Input(format!("confidence level {tau} outside (0, 1)")));
    }
    let (mean, var) = gmm_moments(g);
    let std = var.sqrt();
    let (mut lo, mut hi) = (mean - 10.0 * std, mean + 10.0 * std);
    let mut width = 10.0 * std;
    while g.cdf(lo) > tau {
        lo -= width;
        width *= 2.0;
    }
    width = 10.0 * std;
    while g.cdf(hi) < tau {
        hi += width;
        width *= 2.0;
    }

    // The moment-matched start competes with the per-component quantiles;
    // the guess closest in cdf wins and every probe tightens the bracket.
    let z = normal::quantile(tau);
    let mut x = mean + z * std;
    let mut best = f64::INFINITY;
    for probe in std::iter::once(x).chain(g.components().iter().map(|c| c.mu + z * c.var.sqrt())) {
        if !(probe > lo && probe < hi) {
            continue;
        }
        let f = g.cdf(probe) - tau;
        if f < 0.0 {
            lo = probe;
        } else {
            hi = probe;
        }
        if f.abs() < best {
            best = f.abs();
            x = probe;
        }
    }
    let mut newton = 0;
    let mut fell_back = false;
    while newton < MAX_NEWTON {
        let f = g.cdf(x) - tau;
        if f.abs() <= CDF_TOL {
            return Ok(VarSolution {
                value: x,
                newton_iterations: newton,
                bisection_iterations: 0,
                method: RootMethod::Newton,
            });
        }
        if f < 0.0 {
            lo = lo.max(x);
        } else {
            hi = hi.min(x);
        }
        let pdf = g.pdf(x);
        if pdf < 1e-300 {
            fell_back = true;
            break;
        }
        // Newton on Φ⁻¹(cdf(x)) = Φ⁻¹(τ): same root, near-linear in the tails.
        let u = normal::quantile((f + tau).clamp(1e-300, 1.0 - 1e-16));
        let next = x - (u - z) * normal::pdf(u) / pdf;
        newton += 1;
        if !(next > lo && next < hi) {
            fell_back = true;
            break;
        }
        x = next;
    }
    debug_assert!(fell_back || newton == MAX_NEWTON);

    let mut steps = 0;
    loop {
        let mid = 0.5 * (lo + hi);
        let f = g.cdf(mid) - tau;
        if f.abs() <= CDF_TOL || mid <= lo || mid >= hi {
            // The second case: adjacent floats, so the quantile is pinned
            // to machine precision even if the cdf jumps by more than the
            // tolerance (near point masses).
            return Ok(VarSolution {
                value: mid,
                newton_iterations: newton,
                bisection_iterations: steps,
                method: RootMethod::Bisection,
            });
        }
        if f < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        steps += 1;
        if steps > MAX_BISECTION {
            return Err(CoreError::Numeric(format!(
                "quantile {tau} did not converge; bracket [{lo}, {hi}]"
            )));
        }
    }
}

/// Mean of the upper `1 − τ` tail of `g`. At τ = 0 this is the mean.
pub fn cvar_gmm(g: &Gmm1, tau: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&tau) {
        return Err(CoreError::Input(format!("confidence level {tau} outside [0, 1)")));
    }
    if tau == 0.0 {
        return Ok(gmm_moments(g).0);
    }
    let v = var_gmm(g, tau)?;
    // ∫_v^∞ x φ_{μ,σ}(x) dx = μ·[1 − F(v)] + σ²·f(v) per component.
    let tail: f64 = g
        .components()
        .iter()
        .map(|c| {
            let s = c.var.sqrt();
            let z = (v - c.mu) / s;
            c.w * (c.mu * normal::sf(z) + c.var * normal::pdf(z) / s)
        })
        .sum();
    Ok(tail / (1.0 - tau))
}

/// Upper and lower risk bounds of one random quantity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskBounds {
    pub var_upper: f64,
    /// `−VaR_τ(−X)`.
    pub var_lower: f64,
    pub cvar_upper: f64,
    /// `−CVaR_τ(−X)`.
    pub cvar_lower: f64,
}

/// Risk of the bus voltage `v_r + v_c + v_o` where `v_r ~ g`.
pub fn assess_bus(g: &Gmm1, tau: f64, v_c: f64, v_o: f64) -> Result<RiskBounds> {
    if !(v_c.is_finite() && v_o.is_finite()) {
        return Err(CoreError::Input("voltage components must be finite".into()));
    }
    let neg = negate(g);
    let shift = v_c + v_o;
    Ok(RiskBounds {
        var_upper: var_gmm(g, tau)? + shift,
        var_lower: -var_gmm(&neg, tau)? + shift,
        cvar_upper: cvar_gmm(g, tau)? + shift,
        cvar_lower: -cvar_gmm(&neg, tau)? + shift,
    })
}

/// UVC risk of one bus at one hour.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskProfile {
    pub bus: usize,
    pub hour: u32,
    pub tau: f64,
    pub var_upper: f64,
    pub var_lower: f64,
    pub cvar_upper: f64,
    pub cvar_lower: f64,
}

impl RiskProfile {
    pub fn from_model(g: &Gmm1, bus: usize, hour: u32, tau: f64) -> Result<Self> {
        let b = assess_bus(g, tau, 0.0, 0.0)?;
        Ok(Self::from_bounds(bus, hour, tau, b))
    }

    pub fn from_bounds(bus: usize, hour: u32, tau: f64, b: RiskBounds) -> Self {
        Self {
            bus,
            hour,
            tau,
            var_upper: b.var_upper,
            var_lower: b.var_lower,
            cvar_upper: b.cvar_upper,
            cvar_lower: b.cvar_lower,
        }
    }

    /// Profile of a known value: every bound equals it.
    pub fn deterministic(bus: usize, hour: u32, tau: f64, value: f64) -> Self {
        Self::from_bounds(
            bus,
            hour,
            tau,
            RiskBounds {
                var_upper: value,
                var_lower: value,
                cvar_upper: value,
                cvar_lower: value,
            },
        )
    }
}

const CSV_HEADER: [&str; 7] = ["bus", "hour", "tau", "var_up", "var_lo", "cvar_up", "cvar_lo"];

/// Twelve significant digits.
pub fn fmt12(x: f64) -> String {
    format!("{x:.11e}")
}

pub fn write_risk_csv<W: Write>(out: W, rows: &[RiskProfile]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| CoreError::Input(format!("writing risk report: {e}"));
    w.write_record(CSV_HEADER).map_err(io)?;
    for p in rows {
        w.write_record([
            p.bus.to_string(),
            p.hour.to_string(),
            fmt12(p.tau),
            fmt12(p.var_upper),
            fmt12(p.var_lower),
            fmt12(p.cvar_upper),
            fmt12(p.cvar_lower),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| CoreError::Input(format!("writing risk report: {e}")))?;
    Ok(())
}

pub fn read_risk_csv<R: Read>(input: R) -> Result<Vec<RiskProfile>> {
    let mut r = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|e| CoreError::Input(format!("risk report line {line}: {e}")))?;
        let field = |i: usize| -> Result<&str> {
            rec.get(i)
                .ok_or_else(|| CoreError::Input(format!("risk report line {line}: missing {}", CSV_HEADER[i])))
        };
        let num = |i: usize| -> Result<f64> {
            field(i)?
                .trim()
                .parse()
                .map_err(|e| CoreError::Input(format!("risk report line {line} {}: {e}", CSV_HEADER[i])))
        };
        rows.push(RiskProfile {
            bus: field(0)?
                .trim()
                .parse()
                .map_err(|e| CoreError::Input(format!("risk report line {line} bus: {e}")))?,
            hour: field(1)?
                .trim()
                .parse()
                .map_err(|e| CoreError::Input(format!("risk report line {line} hour: {e}")))?,
            tau: num(2)?,
            var_upper: num(3)?,
            var_lower: num(4)?,
            cvar_upper: num(5)?,
            cvar_lower: num(6)?,
        });
    }
    Ok(rows)
}
