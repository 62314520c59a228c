use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::Instant;

use crate::{solve_lp, LpProblem, Sense, SolveResult, SolveStatus, SolverError, SolverOptions, VarId};

/// An ordered set of weights of which at most two adjacent ones may be
/// nonzero, together with the adjacency binaries that enforce it.
#[derive(Debug, Clone)]
pub struct Sos2Group {
    pub name: String,
    pub lambdas: Vec<VarId>,
    pub binaries: Vec<VarId>,
}

/// An [`LpProblem`] in which some variables are restricted to {0, 1}.
#[derive(Debug, Clone, Default)]
pub struct MilpProblem {
    pub lp: LpProblem,
    binaries: Vec<VarId>,
    sos2: Vec<Sos2Group>,
}

impl MilpProblem {
    pub fn new(lp: LpProblem) -> Self {
        Self {
            lp,
            binaries: Vec::new(),
            sos2: Vec::new(),
        }
    }

    pub fn add_binary(&mut self, name: impl Into<String>, cost: f64) -> VarId {
        let v = self.lp.add_var(name, 0.0, 1.0, cost);
        self.binaries.push(v);
        v
    }

    pub fn binaries(&self) -> &[VarId] {
        &self.binaries
    }

    pub fn sos2_groups(&self) -> &[Sos2Group] {
        &self.sos2
    }

    /// Constrains `lambdas` to SOS2 form with `L − 1` adjacency binaries:
    /// `Σ z = 1`, `λ_1 ≤ z_1`, `λ_L ≤ z_{L−1}` and `λ_l ≤ z_{l−1} + z_l`
    /// in between. Returns the binaries.
    pub fn add_sos2(&mut self, name: &str, lambdas: &[VarId]) -> Vec<VarId> {
        let len = lambdas.len();
        assert!(len >= 2, "an SOS2 group needs at least two members");
        let z: Vec<VarId> = (0..len - 1)
            .map(|k| self.add_binary(format!("{name}_z{}", k + 1), 0.0))
            .collect();
        let ones: Vec<(VarId, f64)> = z.iter().map(|&v| (v, 1.0)).collect();
        self.lp.add_constraint(format!("{name}_one"), &ones, Sense::Eq, 1.0);
        for (l, &lam) in lambdas.iter().enumerate() {
            let mut row = vec![(lam, 1.0)];
            if l > 0 {
                row.push((z[l - 1], -1.0));
            }
            if l < len - 1 {
                row.push((z[l], -1.0));
            }
            self.lp.add_constraint(format!("{name}_adj{}", l + 1), &row, Sense::Le, 0.0);
        }
        self.sos2.push(Sos2Group {
            name: name.to_string(),
            lambdas: lambdas.to_vec(),
            binaries: z.clone(),
        });
        z
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        self.lp.validate()?;
        for &b in &self.binaries {
            let v = self.lp.variable(b);
            if v.lower < 0.0 || v.upper > 1.0 {
                return Err(SolverError::Malformed(format!(
                    "binary {} has bounds [{}, {}] outside [0, 1]",
                    v.name, v.lower, v.upper
                )));
            }
        }
        for g in &self.sos2 {
            if g.lambdas.iter().chain(&g.binaries).any(|v| v.index() >= self.lp.num_vars()) {
                return Err(SolverError::Malformed(format!(
                    "SOS2 group {} references unknown variables",
                    g.name
                )));
            }
        }
        Ok(())
    }
}

struct Node {
    bound: f64,
    seq: usize,
    fixings: Vec<(VarId, f64)>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Node {}

impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Node {
    // BinaryHeap is a max-heap: reverse so the smallest bound (then the
    // oldest node) pops first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .bound
            .total_cmp(&self.bound)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Exact best-first branch-and-bound over the binaries of `p`.
pub fn solve_milp(p: &MilpProblem, opts: &SolverOptions) -> Result<SolveResult, SolverError> {
    p.validate()?;
    let start = Instant::now();
    let mut heap = BinaryHeap::new();
    heap.push(Node {
        bound: f64::NEG_INFINITY,
        seq: 0,
        fixings: Vec::new(),
    });
    let mut seq = 1;
    let mut nodes = 0;
    let mut iterations = 0;
    let mut incumbent: Option<(f64, Vec<f64>)> = None;
    let mut lp = p.lp.clone();

    while let Some(node) = heap.pop() {
        if let Some((best, _)) = &incumbent {
            if node.bound >= best - prune_gap(*best) {
                continue;
            }
        }
        nodes += 1;
        if nodes > opts.node_limit {
            return Err(SolverError::NodeLimit(opts.node_limit));
        }
        for &b in &p.binaries {
            let v = p.lp.variable(b);
            lp.set_bounds(b, v.lower, v.upper);
        }
        for &(b, val) in &node.fixings {
            lp.set_bounds(b, val, val);
        }
        let relax = solve_lp(&lp, opts)?;
        iterations += relax.iterations;
        match relax.status {
            SolveStatus::Infeasible => continue,
            SolveStatus::Unbounded => {
                if incumbent.is_none() && node.fixings.is_empty() {
                    return Ok(SolveResult::without_solution(
                        SolveStatus::Unbounded,
                        iterations,
                        nodes,
                        start.elapsed(),
                    ));
                }
                continue;
            }
            SolveStatus::Optimal => {}
        }
        if let Some((best, _)) = &incumbent {
            if relax.objective >= best - prune_gap(*best) {
                continue;
            }
        }
        let branch = p.binaries.iter().copied().find(|&b| {
            let v = relax.values[b.index()];
            (v - v.round()).abs() > opts.integrality_tol
        });
        match branch {
            None => incumbent = Some((relax.objective, relax.values)),
            Some(b) => {
                for val in [0.0, 1.0] {
                    let mut fixings = node.fixings.clone();
                    fixings.push((b, val));
                    heap.push(Node {
                        bound: relax.objective,
                        seq,
                        fixings,
                    });
                    seq += 1;
                }
            }
        }
    }

    match incumbent {
        None => Ok(SolveResult::without_solution(
            SolveStatus::Infeasible,
            iterations,
            nodes,
            start.elapsed(),
        )),
        Some((objective, mut values)) => {
            for &b in &p.binaries {
                values[b.index()] = values[b.index()].round();
            }
            Ok(SolveResult {
                status: SolveStatus::Optimal,
                objective,
                values,
                iterations,
                nodes,
                solve_time: start.elapsed(),
            })
        }
    }
}

fn prune_gap(best: f64) -> f64 {
    1e-12 * best.abs().max(1.0)
}
