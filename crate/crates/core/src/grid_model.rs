//! Radial feeder model and linear DistFlow sensitivities.

use std::collections::{BTreeMap, HashSet};

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Bus {
    pub id: usize,
    /// Voltage magnitude limits in pu (not squared).
    pub vmin_pu: f64,
    pub vmax_pu: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub from_bus: usize,
    pub to_bus: usize,
    pub r: f64,
    pub x: f64,
}

/// A radial feeder rooted at the slack bus.
#[derive(Debug, Clone)]
pub struct Network {
    buses: Vec<Bus>,
    slack_bus: usize,
    v0: f64,
    branches: Vec<Branch>,
    /// Non-slack buses in ascending id order; this is the row order of
    /// every per-bus vector in the crate.
    order: Vec<usize>,
    position: BTreeMap<usize, usize>,
    /// For each non-slack bus (by position), the branch that feeds it.
    feeder: Vec<usize>,
    /// Parent bus position, `None` when the parent is the slack.
    parent: Vec<Option<usize>>,
}

impl Network {
    /// `v0` is the squared slack voltage in pu².
    pub fn new(buses: Vec<Bus>, slack_bus: usize, v0: f64, branches: Vec<Branch>) -> Result<Self> {
        if !(v0 > 0.0 && v0.is_finite()) {
            return Err(CoreError::Input(format!("slack voltage {v0} must be positive")));
        }
        let mut ids = HashSet::new();
        for b in &buses {
            if !ids.insert(b.id) {
                return Err(CoreError::Input(format!("bus {} listed twice", b.id)));
            }
            if !(b.vmin_pu > 0.0 && b.vmin_pu < b.vmax_pu && b.vmax_pu.is_finite()) {
                return Err(CoreError::Input(format!(
                    "bus {} limits [{}, {}] must satisfy 0 < vmin < vmax",
                    b.id, b.vmin_pu, b.vmax_pu
                )));
            }
        }
        if !ids.contains(&slack_bus) {
            return Err(CoreError::Topology(format!("slack bus {slack_bus} is not a bus")));
        }
        for br in &branches {
            if !ids.contains(&br.from_bus) || !ids.contains(&br.to_bus) {
                return Err(CoreError::Topology(format!(
                    "branch {}-{} references an unknown bus",
                    br.from_bus, br.to_bus
                )));
            }
            if br.from_bus == br.to_bus {
                return Err(CoreError::Topology(format!("branch {0}-{0} is a self loop", br.from_bus)));
            }
            if !(br.r >= 0.0 && br.r.is_finite() && br.x.is_finite()) {
                return Err(CoreError::Input(format!(
                    "branch {}-{} has invalid impedance ({}, {})",
                    br.from_bus, br.to_bus, br.r, br.x
                )));
            }
        }
        if branches.len() + 1 != buses.len() {
            return Err(CoreError::Topology(format!(
                "{} branches cannot form a spanning tree over {} buses",
                branches.len(),
                buses.len()
            )));
        }

        let mut order: Vec<usize> = buses.iter().map(|b| b.id).filter(|&id| id != slack_bus).collect();
        order.sort_unstable();
        let position: BTreeMap<usize, usize> = order.iter().enumerate().map(|(k, &id)| (id, k)).collect();

        let mut adjacency: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (k, br) in branches.iter().enumerate() {
            adjacency.entry(br.from_bus).or_default().push(k);
            adjacency.entry(br.to_bus).or_default().push(k);
        }
        let n = order.len();
        let mut feeder = vec![usize::MAX; n];
        let mut parent = vec![None; n];
        let mut seen = HashSet::from([slack_bus]);
        let mut stack = vec![slack_bus];
        while let Some(bus) = stack.pop() {
            for &k in adjacency.get(&bus).map(Vec::as_slice).unwrap_or(&[]) {
                let br = &branches[k];
                let next = if br.from_bus == bus { br.to_bus } else { br.from_bus };
                if seen.insert(next) {
                    let p = position[&next];
                    feeder[p] = k;
                    parent[p] = position.get(&bus).copied();
                    stack.push(next);
                }
            }
        }
        // With exactly n − 1 branches, reaching every bus rules out loops.
        if let Some(&lost) = order.iter().find(|id| !seen.contains(id)) {
            return Err(CoreError::Topology(format!("bus {lost} is not connected to the slack bus")));
        }

        Ok(Self {
            buses,
            slack_bus,
            v0,
            branches,
            order,
            position,
            feeder,
            parent,
        })
    }

    pub fn buses(&self) -> &[Bus] {
        &self.buses
    }

    pub fn branches(&self) -> &[Branch] {
        &self.branches
    }

    pub fn slack_bus(&self) -> usize {
        self.slack_bus
    }

    pub fn v0(&self) -> f64 {
        self.v0
    }

    /// Non-slack bus ids in index order.
    pub fn bus_order(&self) -> &[usize] {
        &self.order
    }

    pub fn index_of(&self, bus: usize) -> Option<usize> {
        self.position.get(&bus).copied()
    }

    pub fn bus(&self, id: usize) -> Option<&Bus> {
        self.buses.iter().find(|b| b.id == id)
    }

    /// Squared upper limits (pu²) in index order.
    pub fn v_max(&self) -> Vec<f64> {
        self.order.iter().map(|&id| self.bus(id).unwrap().vmax_pu.powi(2)).collect()
    }

    /// Squared lower limits (pu²) in index order.
    pub fn v_min(&self) -> Vec<f64> {
        self.order.iter().map(|&id| self.bus(id).unwrap().vmin_pu.powi(2)).collect()
    }

    /// Branch indices on the path from the slack bus to `bus`.
    pub fn path_to(&self, bus: usize) -> Result<Vec<usize>> {
        let mut p = self
            .index_of(bus)
            .ok_or_else(|| CoreError::Input(format!("bus {bus} is not a non-slack bus")))?;
        let mut path = Vec::new();
        loop {
            path.push(self.feeder[p]);
            match self.parent[p] {
                Some(q) => p = q,
                None => break,
            }
        }
        path.reverse();
        Ok(path)
    }
}

/// Squared-voltage sensitivities to active (R) and reactive (X) injections.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityMatrices {
    pub buses: Vec<usize>,
    pub r: Vec<Vec<f64>>,
    pub x: Vec<Vec<f64>>,
}

impl SensitivityMatrices {
    pub fn len(&self) -> usize {
        self.buses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.buses.is_empty()
    }

    pub fn index_of(&self, bus: usize) -> Option<usize> {
        self.buses.iter().position(|&b| b == bus)
    }
}

/// Path accumulation: the entry for (i, l) is twice the impedance summed
/// over the branches shared by the slack-to-i and slack-to-l paths, which
/// is the cumulative impedance down to their deepest common ancestor.
pub fn compute_sensitivities(net: &Network) -> SensitivityMatrices {
    let n = net.order.len();
    // Parents precede children in a traversal from the root, so cumulative
    // sums can be filled in depth order.
    let mut depth = vec![0usize; n];
    let mut cum_r = vec![f64::NAN; n];
    let mut cum_x = vec![f64::NAN; n];
    fn fill(net: &Network, p: usize, depth: &mut [usize], cr: &mut [f64], cx: &mut [f64]) {
        if !cr[p].is_nan() {
            return;
        }
        let br = &net.branches[net.feeder[p]];
        match net.parent[p] {
            None => {
                depth[p] = 1;
                cr[p] = br.r;
                cx[p] = br.x;
            }
            Some(q) => {
                fill(net, q, depth, cr, cx);
                depth[p] = depth[q] + 1;
                cr[p] = cr[q] + br.r;
                cx[p] = cx[q] + br.x;
            }
        }
    }
    for p in 0..n {
        fill(net, p, &mut depth, &mut cum_r, &mut cum_x);
    }

    let mut r = vec![vec![0.0; n]; n];
    let mut x = vec![vec![0.0; n]; n];
    for i in 0..n {
        for l in i..n {
            let (mut a, mut b) = (Some(i), Some(l));
            while a != b {
                let (pa, pb) = (a.unwrap(), b.unwrap());
                if depth[pa] >= depth[pb] {
                    a = net.parent[pa];
                } else {
                    b = net.parent[pb];
                }
                if a.is_none() || b.is_none() {
                    a = None;
                    b = None;
                }
            }
            if let Some(c) = a {
                r[i][l] = 2.0 * cum_r[c];
                x[i][l] = 2.0 * cum_x[c];
                r[l][i] = r[i][l];
                x[l][i] = x[i][l];
            }
        }
    }
    SensitivityMatrices {
        buses: net.order.clone(),
        r,
        x,
    }
}

/// Linear DistFlow voltages: `v = R·P + X·Q + v0`, all per non-slack bus.
pub fn voltage_from_injections(sens: &SensitivityMatrices, p: &[f64], q: &[f64], v0: f64) -> Result<Vec<f64>> {
    let n = sens.len();
    if p.len() != n || q.len() != n {
        return Err(CoreError::Input(format!(
            "injection vectors have lengths {} and {}, network has {n} buses",
            p.len(),
            q.len()
        )));
    }
    Ok((0..n)
        .map(|i| {
            let mut v = 0.0;
            for l in 0..n {
                v += sens.r[i][l] * p[l] + sens.x[i][l] * q[l];
            }
            v + v0
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct UncertainElement {
    pub id: String,
    pub bus: usize,
    pub kappa: f64,
    /// Nominal active power in pu (rating or base load); informational.
    pub nominal: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstantElement {
    pub id: String,
    pub bus: usize,
    pub kappa: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Provider {
    pub id: String,
    pub bus: usize,
    pub q_min: f64,
    pub q_max: f64,
    /// $ per Mvar.
    pub cost: f64,
    /// Fixed active power in pu.
    pub p: f64,
}

/// Placement and power-factor tangents of every injection.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct InjectionLayout {
    pub uncertain_gens: Vec<UncertainElement>,
    pub uncertain_loads: Vec<UncertainElement>,
    pub constant_gens: Vec<ConstantElement>,
    pub constant_loads: Vec<ConstantElement>,
    pub providers: Vec<Provider>,
}

impl InjectionLayout {
    pub fn validate(&self, net: &Network) -> Result<()> {
        let mut ids = HashSet::new();
        let buses = self
            .uncertain_gens
            .iter()
            .chain(&self.uncertain_loads)
            .map(|e| (&e.id, e.bus, e.kappa))
            .chain(self.constant_gens.iter().chain(&self.constant_loads).map(|e| (&e.id, e.bus, e.kappa)))
            .chain(self.providers.iter().map(|e| (&e.id, e.bus, 0.0)));
        for (id, bus, kappa) in buses {
            if !ids.insert(id.clone()) {
                return Err(CoreError::Input(format!("element id {id} is not unique")));
            }
            if net.index_of(bus).is_none() {
                return Err(CoreError::Input(format!(
                    "element {id} sits on bus {bus}, which is unknown or the slack bus"
                )));
            }
            if !kappa.is_finite() {
                return Err(CoreError::Input(format!("element {id} has non-finite kappa")));
            }
        }
        for c in self.constant_gens.iter().chain(&self.constant_loads) {
            if !c.p.is_finite() {
                return Err(CoreError::Input(format!("element {} has non-finite power", c.id)));
            }
        }
        for p in &self.providers {
            if !(p.q_min <= p.q_max && p.q_min.is_finite() && p.q_max.is_finite()) {
                return Err(CoreError::Input(format!(
                    "provider {} has range [{}, {}]",
                    p.id, p.q_min, p.q_max
                )));
            }
            if !(p.cost >= 0.0 && p.cost.is_finite()) || !p.p.is_finite() {
                return Err(CoreError::Input(format!("provider {} has invalid cost or power", p.id)));
            }
        }
        Ok(())
    }

    pub fn provider_index(&self, id: &str) -> Option<usize> {
        self.providers.iter().position(|p| p.id == id)
    }
}

/// Per-bus sensitivity coefficients of each injection role; rows follow
/// the network's bus order, columns the layout's element order.
#[derive(Debug, Clone, PartialEq)]
pub struct UvcCoefficients {
    pub buses: Vec<usize>,
    pub b_gen: Vec<Vec<f64>>,
    pub b_load: Vec<Vec<f64>>,
    pub b_q: Vec<Vec<f64>>,
    pub b_p: Vec<Vec<f64>>,
    pub b_const_gen: Vec<Vec<f64>>,
    pub b_const_load: Vec<Vec<f64>>,
}

impl UvcCoefficients {
    pub fn index_of(&self, bus: usize) -> Option<usize> {
        self.buses.iter().position(|&b| b == bus)
    }

    pub fn row(&self, bus: usize) -> Result<usize> {
        self.index_of(bus)
            .ok_or_else(|| CoreError::Input(format!("bus {bus} is not a non-slack bus")))
    }
}

pub fn uvc_coefficients(sens: &SensitivityMatrices, layout: &InjectionLayout) -> Result<UvcCoefficients> {
    let col = |bus: usize, id: &str| {
        sens.index_of(bus).ok_or_else(|| {
            CoreError::Input(format!("element {id} sits on bus {bus}, which is unknown or the slack bus"))
        })
    };
    let n = sens.len();
    let build = |elements: Vec<(usize, f64, bool)>| -> Vec<Vec<f64>> {
        (0..n)
            .map(|i| {
                elements
                    .iter()
                    .map(|&(l, kappa, reactive_only)| {
                        if reactive_only {
                            sens.x[i][l]
                        } else {
                            sens.r[i][l] + kappa * sens.x[i][l]
                        }
                    })
                    .collect()
            })
            .collect()
    };
    let uncertain = |v: &[UncertainElement]| -> Result<Vec<(usize, f64, bool)>> {
        v.iter().map(|e| Ok((col(e.bus, &e.id)?, e.kappa, false))).collect()
    };
    let constant = |v: &[ConstantElement]| -> Result<Vec<(usize, f64, bool)>> {
        v.iter().map(|e| Ok((col(e.bus, &e.id)?, e.kappa, false))).collect()
    };
    let prov_q = layout
        .providers
        .iter()
        .map(|p| Ok((col(p.bus, &p.id)?, 0.0, true)))
        .collect::<Result<Vec<_>>>()?;
    let prov_p = layout
        .providers
        .iter()
        .map(|p| Ok((col(p.bus, &p.id)?, 0.0, false)))
        .collect::<Result<Vec<_>>>()?;
    Ok(UvcCoefficients {
        buses: sens.buses.clone(),
        b_gen: build(uncertain(&layout.uncertain_gens)?),
        b_load: build(uncertain(&layout.uncertain_loads)?),
        b_q: build(prov_q),
        b_p: build(prov_p),
        b_const_gen: build(constant(&layout.constant_gens)?),
        b_const_load: build(constant(&layout.constant_loads)?),
    })
}

/// Nodal injections `(P, Q)` in bus order from the per-element powers.
/// Generator outputs are scaled by `1 − alpha` in both channels.
pub fn assemble_injections(
    net: &Network,
    layout: &InjectionLayout,
    chi: &[f64],
    zeta: &[f64],
    q: &[f64],
    alpha: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if chi.len() != layout.uncertain_gens.len()
        || zeta.len() != layout.uncertain_loads.len()
        || q.len() != layout.providers.len()
    {
        return Err(CoreError::Input("injection vectors do not match the layout".into()));
    }
    let n = net.bus_order().len();
    let mut p_inj = vec![0.0; n];
    let mut q_inj = vec![0.0; n];
    let at = |bus: usize| {
        net.index_of(bus)
            .ok_or_else(|| CoreError::Input(format!("bus {bus} is not a non-slack bus")))
    };
    for (g, &c) in layout.uncertain_gens.iter().zip(chi) {
        let l = at(g.bus)?;
        p_inj[l] += (1.0 - alpha) * c;
        q_inj[l] += g.kappa * (1.0 - alpha) * c;
    }
    for (d, &z) in layout.uncertain_loads.iter().zip(zeta) {
        let l = at(d.bus)?;
        p_inj[l] -= z;
        q_inj[l] -= d.kappa * z;
    }
    for g in &layout.constant_gens {
        let l = at(g.bus)?;
        p_inj[l] += g.p;
        q_inj[l] += g.kappa * g.p;
    }
    for d in &layout.constant_loads {
        let l = at(d.bus)?;
        p_inj[l] -= d.p;
        q_inj[l] -= d.kappa * d.p;
    }
    for (pr, &qj) in layout.providers.iter().zip(q) {
        let l = at(pr.bus)?;
        p_inj[l] += pr.p;
        q_inj[l] += qj;
    }
    Ok((p_inj, q_inj))
}
