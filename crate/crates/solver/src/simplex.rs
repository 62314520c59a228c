//! Bounded-variable revised simplex with an explicit dense basis inverse.
//!
//! Every row `r` is turned into the equation `Σ a_rj x_j − s_r = 0`, where
//! the logical `s_r` carries the row sense as bounds. Rows that cannot start
//! with a feasible basic variable get an artificial column and a phase-1
//! objective minimizing the sum of artificials. Entering and leaving
//! variables follow Bland's smallest-index rule, so the method terminates on
//! degenerate problems and is fully deterministic.

use std::time::Instant;

use crate::{LpProblem, Sense, SolveResult, SolveStatus, SolverError, SolverOptions};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Slot {
    Basic,
    AtLower,
    AtUpper,
    /// Nonbasic free variable held at zero.
    FreeZero,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Phase {
    One,
    Two,
}

impl Phase {
    fn name(self) -> &'static str {
        match self {
            Phase::One => "phase 1",
            Phase::Two => "phase 2",
        }
    }
}

/// Consecutive degenerate pivots after which the leaving rule switches to
/// Bland's.
const DEGENERATE_LIMIT: usize = 50;

enum Outcome {
    Optimal,
    Unbounded,
}

struct Simplex<'a> {
    opts: &'a SolverOptions,
    m: usize,
    n_struct: usize,
    columns: Vec<Vec<(usize, f64)>>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    cost: Vec<f64>,
    x: Vec<f64>,
    slot: Vec<Slot>,
    /// Column index basic in each row position.
    basis: Vec<usize>,
    /// Row-major `m × m` inverse of the basis matrix.
    binv: Vec<f64>,
    first_artificial: usize,
    iterations: usize,
    since_refactor: usize,
}

/// Solves `p` to optimality, or reports it infeasible or unbounded.
pub fn solve_lp(p: &LpProblem, opts: &SolverOptions) -> Result<SolveResult, SolverError> {
    p.validate()?;
    let start = Instant::now();
    let mut s = Simplex::new(p, opts);

    if s.first_artificial < s.columns.len() {
        s.set_phase_costs(Phase::One, p);
        s.refactor(Phase::One)?;
        match s.iterate(Phase::One)? {
            Outcome::Optimal => {}
            Outcome::Unbounded => {
                return Err(SolverError::Numeric {
                    phase: "phase 1",
                    iterations: s.iterations,
                    detail: "phase-1 objective reported unbounded".into(),
                })
            }
        }
        // Half the final tolerance, so a problem accepted here cannot trip
        // the residual check after phase 2.
        let infeasibility: f64 = (s.first_artificial..s.columns.len()).map(|j| s.x[j]).sum();
        if infeasibility > 0.5 * opts.feasibility_tol {
            return Ok(SolveResult::without_solution(
                SolveStatus::Infeasible,
                s.iterations,
                1,
                start.elapsed(),
            ));
        }
        for j in s.first_artificial..s.columns.len() {
            s.lower[j] = 0.0;
            s.upper[j] = 0.0;
            if s.slot[j] != Slot::Basic {
                s.x[j] = 0.0;
                s.slot[j] = Slot::AtLower;
            }
        }
    }

    s.set_phase_costs(Phase::Two, p);
    s.refactor(Phase::Two)?;
    if let Outcome::Unbounded = s.iterate(Phase::Two)? {
        return Ok(SolveResult::without_solution(
            SolveStatus::Unbounded,
            s.iterations,
            1,
            start.elapsed(),
        ));
    }
    s.refactor(Phase::Two)?;

    let mut values = s.x[..s.n_struct].to_vec();
    for (j, v) in values.iter_mut().enumerate() {
        // Basic values may sit a rounding error outside their bounds.
        if *v < s.lower[j] && s.lower[j] - *v <= opts.feasibility_tol {
            *v = s.lower[j];
        }
        if *v > s.upper[j] && *v - s.upper[j] <= opts.feasibility_tol {
            *v = s.upper[j];
        }
    }
    let residual = p.max_violation(&values);
    if residual > opts.feasibility_tol {
        return Err(SolverError::Numeric {
            phase: "phase 2",
            iterations: s.iterations,
            detail: format!("primal residual {residual:.3e} exceeds tolerance"),
        });
    }
    Ok(SolveResult {
        status: SolveStatus::Optimal,
        objective: p.objective_value(&values),
        values,
        iterations: s.iterations,
        nodes: 1,
        solve_time: start.elapsed(),
    })
}

fn initial_value(lo: f64, hi: f64) -> (f64, Slot) {
    if lo.is_finite() {
        (lo, Slot::AtLower)
    } else if hi.is_finite() {
        (hi, Slot::AtUpper)
    } else {
        (0.0, Slot::FreeZero)
    }
}

impl<'a> Simplex<'a> {
    fn new(p: &LpProblem, opts: &'a SolverOptions) -> Self {
        let m = p.num_constraints();
        let n_struct = p.num_vars();
        let mut columns: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_struct];
        for (r, c) in p.constraints().iter().enumerate() {
            for &(v, a) in &c.coeffs {
                columns[v.index()].push((r, a));
            }
        }
        let mut lower: Vec<f64> = p.variables().iter().map(|v| v.lower).collect();
        let mut upper: Vec<f64> = p.variables().iter().map(|v| v.upper).collect();
        let mut x = Vec::with_capacity(n_struct + m);
        let mut slot = Vec::with_capacity(n_struct + m);
        for j in 0..n_struct {
            let (v, s) = initial_value(lower[j], upper[j]);
            x.push(v);
            slot.push(s);
        }

        // Crash: a free structural with a single nonzero among equality rows
        // can be basic in that row from the start.
        let mut crashed: Vec<Option<usize>> = vec![None; m];
        let mut crashed_rows: Vec<usize> = Vec::new();
        let mut is_crashed_col = vec![false; n_struct];
        for (r, c) in p.constraints().iter().enumerate() {
            if c.sense != Sense::Eq {
                continue;
            }
            let pick = c.coeffs.iter().find(|&&(v, a)| {
                let j = v.index();
                lower[j] == f64::NEG_INFINITY
                    && upper[j] == f64::INFINITY
                    && !is_crashed_col[j]
                    && a.abs() >= 1e-6
                    && columns[j].iter().all(|&(row, _)| row == r || crashed[row].is_none())
                    && crashed_rows.iter().all(|&cr| {
                        let jj = crashed[cr].unwrap_or(usize::MAX);
                        columns[jj].iter().all(|&(row, _)| row != r)
                    })
            });
            if let Some(&(v, _)) = pick {
                crashed[r] = Some(v.index());
                crashed_rows.push(r);
                is_crashed_col[v.index()] = true;
            }
        }
        for &r in &crashed_rows {
            let j = crashed[r].unwrap();
            let c = &p.constraints()[r];
            let mut rest = c.rhs;
            let mut pivot = 0.0;
            for &(v, a) in &c.coeffs {
                if v.index() == j {
                    pivot = a;
                } else {
                    rest -= a * x[v.index()];
                }
            }
            x[j] = rest / pivot;
            slot[j] = Slot::Basic;
        }

        let mut basis = vec![usize::MAX; m];
        let mut artificials: Vec<(usize, f64, f64)> = Vec::new();
        for (r, c) in p.constraints().iter().enumerate() {
            let (lo, hi) = match c.sense {
                Sense::Le => (f64::NEG_INFINITY, c.rhs),
                Sense::Ge => (c.rhs, f64::INFINITY),
                Sense::Eq => (c.rhs, c.rhs),
            };
            let logical = columns.len();
            columns.push(vec![(r, -1.0)]);
            lower.push(lo);
            upper.push(hi);
            if let Some(j) = crashed[r] {
                basis[r] = j;
                x.push(c.rhs);
                slot.push(Slot::AtLower);
                continue;
            }
            let activity: f64 = c.coeffs.iter().map(|&(v, a)| a * x[v.index()]).sum();
            if activity >= lo && activity <= hi {
                basis[r] = logical;
                x.push(activity);
                slot.push(Slot::Basic);
            } else {
                let (b, s) = if activity < lo { (lo, Slot::AtLower) } else { (hi, Slot::AtUpper) };
                x.push(b);
                slot.push(s);
                let residual = activity - b;
                artificials.push((r, -residual.signum(), residual.abs()));
            }
        }
        let first_artificial = columns.len();
        for (r, sign, value) in artificials {
            basis[r] = columns.len();
            columns.push(vec![(r, sign)]);
            lower.push(0.0);
            upper.push(f64::INFINITY);
            x.push(value);
            slot.push(Slot::Basic);
        }
        let total = columns.len();
        Self {
            opts,
            m,
            n_struct,
            columns,
            lower,
            upper,
            cost: vec![0.0; total],
            x,
            slot,
            basis,
            binv: vec![0.0; m * m],
            first_artificial,
            iterations: 0,
            since_refactor: 0,
        }
    }

    fn set_phase_costs(&mut self, phase: Phase, p: &LpProblem) {
        self.cost.iter_mut().for_each(|c| *c = 0.0);
        match phase {
            Phase::One => {
                for j in self.first_artificial..self.columns.len() {
                    self.cost[j] = 1.0;
                }
            }
            Phase::Two => {
                for (j, v) in p.variables().iter().enumerate() {
                    self.cost[j] = v.cost;
                }
            }
        }
    }

    /// Rebuilds the basis inverse by Gauss-Jordan elimination and recomputes
    /// basic values from the nonbasic ones.
    fn refactor(&mut self, phase: Phase) -> Result<(), SolverError> {
        let m = self.m;
        let mut a = vec![0.0; m * m];
        for (pos, &j) in self.basis.iter().enumerate() {
            for &(r, v) in &self.columns[j] {
                a[r * m + pos] = v;
            }
        }
        let mut inv = vec![0.0; m * m];
        for i in 0..m {
            inv[i * m + i] = 1.0;
        }
        for col in 0..m {
            let mut piv = col;
            let mut best = a[col * m + col].abs();
            for r in col + 1..m {
                let v = a[r * m + col].abs();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if best < 1e-12 {
                return Err(SolverError::Numeric {
                    phase: phase.name(),
                    iterations: self.iterations,
                    detail: format!("singular basis at column {col} (pivot {best:.3e})"),
                });
            }
            if piv != col {
                for k in 0..m {
                    a.swap(piv * m + k, col * m + k);
                    inv.swap(piv * m + k, col * m + k);
                }
            }
            let d = a[col * m + col];
            for k in 0..m {
                a[col * m + k] /= d;
                inv[col * m + k] /= d;
            }
            for r in 0..m {
                if r == col {
                    continue;
                }
                let f = a[r * m + col];
                if f != 0.0 {
                    for k in 0..m {
                        a[r * m + k] -= f * a[col * m + k];
                        inv[r * m + k] -= f * inv[col * m + k];
                    }
                }
            }
        }
        self.binv = inv;

        let mut rhs = vec![0.0; m];
        for (j, col) in self.columns.iter().enumerate() {
            if self.slot[j] == Slot::Basic {
                continue;
            }
            let xj = self.x[j];
            if xj != 0.0 {
                for &(r, v) in col {
                    rhs[r] -= v * xj;
                }
            }
        }
        for pos in 0..m {
            let row = &self.binv[pos * m..(pos + 1) * m];
            let v: f64 = row.iter().zip(&rhs).map(|(a, b)| a * b).sum();
            self.x[self.basis[pos]] = v;
        }
        self.since_refactor = 0;
        Ok(())
    }

    fn iterate(&mut self, phase: Phase) -> Result<Outcome, SolverError> {
        let m = self.m;
        let tol = self.opts.optimality_tol;
        let mut y = vec![0.0; m];
        let mut w = vec![0.0; m];
        let mut degenerate_run = 0usize;
        loop {
            if self.iterations >= self.opts.max_iterations {
                return Err(SolverError::IterationLimit(self.opts.max_iterations));
            }
            if self.since_refactor >= self.opts.refactor_interval {
                self.refactor(phase)?;
            }

            y.iter_mut().for_each(|v| *v = 0.0);
            for pos in 0..m {
                let cb = self.cost[self.basis[pos]];
                if cb != 0.0 {
                    let row = &self.binv[pos * m..(pos + 1) * m];
                    for (yk, bk) in y.iter_mut().zip(row) {
                        *yk += cb * bk;
                    }
                }
            }

            // Bland: first eligible column by index.
            let mut entering = None;
            for (j, col) in self.columns.iter().enumerate() {
                let s = self.slot[j];
                if s == Slot::Basic || self.lower[j] == self.upper[j] {
                    continue;
                }
                let d = self.cost[j] - col.iter().map(|&(r, a)| y[r] * a).sum::<f64>();
                let dir = match s {
                    Slot::AtLower if d < -tol => 1.0,
                    Slot::AtUpper if d > tol => -1.0,
                    Slot::FreeZero if d.abs() > tol => -d.signum(),
                    _ => continue,
                };
                entering = Some((j, dir));
                break;
            }
            let Some((q, dir)) = entering else {
                return Ok(Outcome::Optimal);
            };

            w.iter_mut().for_each(|v| *v = 0.0);
            for &(r, a) in &self.columns[q] {
                for (pos, wp) in w.iter_mut().enumerate() {
                    *wp += self.binv[pos * m + r] * a;
                }
            }

            let (step, leave) = self.ratio_test(q, dir, &w, degenerate_run > DEGENERATE_LIMIT);
            if step == f64::INFINITY {
                return Ok(Outcome::Unbounded);
            }
            degenerate_run = if step == 0.0 { degenerate_run + 1 } else { 0 };

            self.x[q] += dir * step;
            for pos in 0..m {
                let j = self.basis[pos];
                self.x[j] -= dir * step * w[pos];
            }
            match leave {
                None => {
                    // Bound flip; no basis change.
                    if dir > 0.0 {
                        self.x[q] = self.upper[q];
                        self.slot[q] = Slot::AtUpper;
                    } else {
                        self.x[q] = self.lower[q];
                        self.slot[q] = Slot::AtLower;
                    }
                }
                Some((r, target)) => {
                    let out = self.basis[r];
                    self.x[out] = target;
                    self.slot[out] = if target == self.lower[out] { Slot::AtLower } else { Slot::AtUpper };
                    self.slot[q] = Slot::Basic;
                    self.basis[r] = q;
                    self.pivot(r, &w);
                }
            }
            self.iterations += 1;
            self.since_refactor += 1;
        }
    }

    /// Two-pass Harris ratio test: bounds are relaxed by a fraction of the
    /// feasibility tolerance to find the step limit, then the largest pivot
    /// among the rows blocking within that limit leaves. With `bland`, the
    /// smallest-index blocking row leaves instead, which rules out cycling.
    /// Returns the step and the leaving position with its target bound, or
    /// no position for a bound flip of the entering variable.
    fn ratio_test(&self, q: usize, dir: f64, w: &[f64], bland: bool) -> (f64, Option<(usize, f64)>) {
        let piv_tol = self.opts.pivot_tol;
        let relax = 0.1 * self.opts.feasibility_tol;
        let flip = self.upper[q] - self.lower[q];
        let blocking = |pos: usize| -> Option<(f64, f64, f64)> {
            let delta = -dir * w[pos];
            let j = self.basis[pos];
            if delta < -piv_tol && self.lower[j].is_finite() {
                Some(((self.x[j] - self.lower[j]) / -delta, -delta, self.lower[j]))
            } else if delta > piv_tol && self.upper[j].is_finite() {
                Some(((self.upper[j] - self.x[j]) / delta, delta, self.upper[j]))
            } else {
                None
            }
        };
        if bland {
            let mut best: Option<(usize, f64, f64)> = None;
            for pos in 0..self.m {
                let Some((ratio, _, target)) = blocking(pos) else { continue };
                let ratio = ratio.max(0.0);
                let better = match best {
                    None => true,
                    Some((cur, r, _)) => {
                        let scale = 1e-12 * r.abs().max(1.0);
                        ratio < r - scale || (ratio <= r + scale && self.basis[pos] < self.basis[cur])
                    }
                };
                if better {
                    best = Some((pos, ratio, target));
                }
            }
            return match best {
                Some((pos, r, target)) if r < flip => (r, Some((pos, target))),
                _ => (flip, None),
            };
        }
        let mut theta = flip;
        for pos in 0..self.m {
            if let Some((ratio, mag, _)) = blocking(pos) {
                theta = theta.min(ratio.max(0.0) + relax / mag);
            }
        }
        if theta == f64::INFINITY {
            return (theta, None);
        }
        let mut best: Option<(usize, f64, f64, f64)> = None;
        for pos in 0..self.m {
            let Some((ratio, mag, target)) = blocking(pos) else { continue };
            if ratio.max(0.0) > theta {
                continue;
            }
            let better = match best {
                None => true,
                Some((cur, _, m, _)) => mag > m || (mag == m && self.basis[pos] < self.basis[cur]),
            };
            if better {
                best = Some((pos, ratio.max(0.0), mag, target));
            }
        }
        match best {
            Some((pos, ratio, _, target)) if ratio < flip => (ratio, Some((pos, target))),
            _ => (flip, None),
        }
    }

    fn pivot(&mut self, r: usize, w: &[f64]) {
        let m = self.m;
        let wr = w[r];
        for k in 0..m {
            self.binv[r * m + k] /= wr;
        }
        let (head, rest) = self.binv.split_at_mut(r * m);
        let (pivot_row, tail) = rest.split_at_mut(m);
        for (pos, row) in head.chunks_exact_mut(m).enumerate() {
            let f = w[pos];
            if f != 0.0 {
                for (a, b) in row.iter_mut().zip(pivot_row.iter()) {
                    *a -= f * b;
                }
            }
        }
        for (off, row) in tail.chunks_exact_mut(m).enumerate() {
            let f = w[r + 1 + off];
            if f != 0.0 {
                for (a, b) in row.iter_mut().zip(pivot_row.iter()) {
                    *a -= f * b;
                }
            }
        }
    }
}
