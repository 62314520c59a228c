use crate::SolverError;

/// Handle to a variable of an [`LpProblem`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VarId(pub(crate) usize);

impl VarId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone)]
pub struct Variable {
    pub name: String,
    pub lower: f64,
    pub upper: f64,
    pub cost: f64,
}

/// One linear row `Σ coeff·x (sense) rhs`. Coefficients are stored sparsely
/// with each variable appearing at most once.
#[derive(Debug, Clone)]
pub struct Constraint {
    pub name: String,
    pub coeffs: Vec<(VarId, f64)>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Constraint {
    pub fn activity(&self, values: &[f64]) -> f64 {
        self.coeffs.iter().map(|&(v, a)| a * values[v.0]).sum()
    }

    /// Amount by which `values` violates this row (0 when satisfied).
    pub fn violation(&self, values: &[f64]) -> f64 {
        let lhs = self.activity(values);
        match self.sense {
            Sense::Le => (lhs - self.rhs).max(0.0),
            Sense::Ge => (self.rhs - lhs).max(0.0),
            Sense::Eq => (lhs - self.rhs).abs(),
        }
    }
}

/// A minimization LP over bounded variables.
#[derive(Debug, Clone, Default)]
pub struct LpProblem {
    vars: Vec<Variable>,
    constraints: Vec<Constraint>,
}

impl LpProblem {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a variable with bounds `[lower, upper]` (either may be infinite)
    /// and objective coefficient `cost`.
    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64, cost: f64) -> VarId {
        self.vars.push(Variable {
            name: name.into(),
            lower,
            upper,
            cost,
        });
        VarId(self.vars.len() - 1)
    }

    /// Adds a row; repeated variables in `coeffs` are summed.
    pub fn add_constraint(
        &mut self,
        name: impl Into<String>,
        coeffs: &[(VarId, f64)],
        sense: Sense,
        rhs: f64,
    ) -> usize {
        let mut merged: Vec<(VarId, f64)> = Vec::with_capacity(coeffs.len());
        for &(v, a) in coeffs {
            match merged.iter_mut().find(|(w, _)| *w == v) {
                Some(entry) => entry.1 += a,
                None => merged.push((v, a)),
            }
        }
        merged.retain(|&(_, a)| a != 0.0);
        self.constraints.push(Constraint {
            name: name.into(),
            coeffs: merged,
            sense,
            rhs,
        });
        self.constraints.len() - 1
    }

    pub fn set_bounds(&mut self, var: VarId, lower: f64, upper: f64) {
        let v = &mut self.vars[var.0];
        v.lower = lower;
        v.upper = upper;
    }

    pub fn set_cost(&mut self, var: VarId, cost: f64) {
        self.vars[var.0].cost = cost;
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraints.len()
    }

    pub fn variables(&self) -> &[Variable] {
        &self.vars
    }

    pub fn variable(&self, var: VarId) -> &Variable {
        &self.vars[var.0]
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn var_ids(&self) -> impl Iterator<Item = VarId> {
        (0..self.vars.len()).map(VarId)
    }

    pub fn objective_value(&self, values: &[f64]) -> f64 {
        self.vars.iter().zip(values).map(|(v, x)| v.cost * x).sum()
    }

    /// Largest row or bound violation of `values`.
    pub fn max_violation(&self, values: &[f64]) -> f64 {
        let rows = self
            .constraints
            .iter()
            .map(|c| c.violation(values))
            .fold(0.0, f64::max);
        let bounds = self
            .vars
            .iter()
            .zip(values)
            .map(|(v, &x)| (v.lower - x).max(x - v.upper).max(0.0))
            .fold(0.0, f64::max);
        rows.max(bounds)
    }

    pub fn validate(&self) -> Result<(), SolverError> {
        for v in &self.vars {
            if v.lower.is_nan() || v.upper.is_nan() || v.lower > v.upper {
                return Err(SolverError::Malformed(format!(
                    "variable {} has inconsistent bounds [{}, {}]",
                    v.name, v.lower, v.upper
                )));
            }
            if v.lower == f64::INFINITY || v.upper == f64::NEG_INFINITY {
                return Err(SolverError::Malformed(format!(
                    "variable {} has an empty domain",
                    v.name
                )));
            }
            if !v.cost.is_finite() {
                return Err(SolverError::Malformed(format!(
                    "variable {} has non-finite cost",
                    v.name
                )));
            }
        }
        for c in &self.constraints {
            if !c.rhs.is_finite() {
                return Err(SolverError::Malformed(format!(
                    "constraint {} has non-finite rhs",
                    c.name
                )));
            }
            for &(v, a) in &c.coeffs {
                if v.0 >= self.vars.len() {
                    return Err(SolverError::Malformed(format!(
                        "constraint {} references unknown variable {}",
                        c.name, v.0
                    )));
                }
                if !a.is_finite() {
                    return Err(SolverError::Malformed(format!(
                        "constraint {} has non-finite coefficient",
                        c.name
                    )));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn repeated_coefficients_are_merged() {
        let mut lp = LpProblem::new();
        let x = lp.add_var("x", 0.0, 1.0, 1.0);
        let y = lp.add_var("y", 0.0, 1.0, 1.0);
        lp.add_constraint("c", &[(x, 1.0), (y, 2.0), (x, 0.5), (y, -2.0)], Sense::Le, 1.0);
        assert_eq!(lp.constraints()[0].coeffs, vec![(x, 1.5)]);
    }

    #[test]
    fn inverted_bounds_are_malformed() {
        let mut lp = LpProblem::new();
        lp.add_var("x", 1.0, 0.0, 0.0);
        assert!(matches!(lp.validate(), Err(SolverError::Malformed(_))));
    }

    #[test]
    fn violation_measures_each_sense() {
        let mut lp = LpProblem::new();
        let x = lp.add_var("x", 0.0, 10.0, 0.0);
        lp.add_constraint("le", &[(x, 1.0)], Sense::Le, 2.0);
        lp.add_constraint("ge", &[(x, 1.0)], Sense::Ge, 5.0);
        lp.add_constraint("eq", &[(x, 1.0)], Sense::Eq, 4.0);
        let c = lp.constraints();
        assert_eq!(c[0].violation(&[3.0]), 1.0);
        assert_eq!(c[1].violation(&[3.0]), 2.0);
        assert_eq!(c[2].violation(&[3.0]), 1.0);
        assert_eq!(lp.max_violation(&[3.0]), 2.0);
    }
}
