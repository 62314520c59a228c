//! Monte-Carlo and held-out evaluation of dispatch strategies.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::density::Gmm1;
use crate::error::{CoreError, Result};
use crate::grid_model::Network;
use crate::manage::Strategy;

/// A generator for stream `stream` of `seed`; streams never overlap, so
/// parallel consumers reproduce sequential results.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One draw from `g`.
pub fn draw<R: Rng + ?Sized>(g: &Gmm1, rng: &mut R) -> f64 {
    let u: f64 = rng.random();
    let comps = g.components();
    let mut acc = 0.0;
    let mut pick = comps.len() - 1;
    for (k, c) in comps.iter().enumerate() {
        acc += c.w;
        if u < acc {
            pick = k;
            break;
        }
    }
    let z: f64 = StandardNormal.sample(rng);
    comps[pick].mu + comps[pick].var.sqrt() * z
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Provenance {
    SampledFromModel,
    HeldOutHistory,
}

/// Realized UVCs per bus: `values[i][n]` for bus `buses[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet {
    pub buses: Vec<usize>,
    pub values: Vec<Vec<f64>>,
    pub provenance: Provenance,
    pub seed: u64,
}

impl ScenarioSet {
    pub fn count(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }
}

/// Independent draws per bus; bus `k` in `models` uses stream `k`.
pub fn sample_scenarios(models: &[(usize, Gmm1)], count: usize, seed: u64) -> Result<ScenarioSet> {
    if count == 0 {
        return Err(CoreError::Input("scenario count must be positive".into()));
    }
    Ok(ScenarioSet {
        buses: models.iter().map(|(b, _)| *b).collect(),
        values: models
            .iter()
            .enumerate()
            .map(|(k, (_, g))| {
                let mut rng = stream_rng(seed, k as u64);
                (0..count).map(|_| draw(g, &mut rng)).collect()
            })
            .collect(),
        provenance: Provenance::SampledFromModel,
        seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BusFrequency {
    pub bus: usize,
    pub upper: f64,
    pub lower: f64,
}

/// Share of scenarios with `v_r + v_c + v_o` above the upper or below the
/// lower squared limit, per bus. `v_o` follows the network's bus order.
pub fn violation_frequency(
    strategy: &Strategy,
    scenarios: &ScenarioSet,
    net: &Network,
    v_o: &[f64],
) -> Result<Vec<BusFrequency>> {
    if v_o.len() != net.bus_order().len() {
        return Err(CoreError::Input("constant components do not match the network".into()));
    }
    let (v_min, v_max) = (net.v_min(), net.v_max());
    let n = scenarios.count();
    scenarios
        .buses
        .iter()
        .zip(&scenarios.values)
        .map(|(&bus, vals)| {
            let row = net
                .index_of(bus)
                .ok_or_else(|| CoreError::Input(format!("scenario bus {bus} is not in the network")))?;
            let v_c = strategy
                .v_c
                .iter()
                .find(|c| c.bus == bus)
                .ok_or_else(|| CoreError::Input(format!("strategy has no component for bus {bus}")))?
                .pu2;
            let shift = v_c + v_o[row];
            let upper = vals.iter().filter(|&&v| v + shift > v_max[row]).count();
            let lower = vals.iter().filter(|&&v| v + shift < v_min[row]).count();
            Ok(BusFrequency {
                bus,
                upper: upper as f64 / n as f64,
                lower: lower as f64 / n as f64,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Upper,
    Lower,
}

/// Share of days on which the estimated bound holds strictly: the upper
/// estimate exceeds the realization, or the lower estimate falls below it.
pub fn var_confidence(estimates: &[f64], realized: &[f64], side: Side) -> Result<f64> {
    if estimates.is_empty() || estimates.len() != realized.len() {
        return Err(CoreError::Input(format!(
            "{} estimates for {} realizations",
            estimates.len(),
            realized.len()
        )));
    }
    let hits = estimates
        .iter()
        .zip(realized)
        .filter(|(e, r)| match side {
            Side::Upper => e > r,
            Side::Lower => e < r,
        })
        .count();
    Ok(hits as f64 / estimates.len() as f64)
}

/// Realized injections of one held-out (day, hour), reduced to the
/// generation and load parts of every bus's UVC.
#[derive(Debug, Clone, PartialEq)]
pub struct HeldOutCase {
    pub day: usize,
    pub hour: u32,
    pub gen: Vec<f64>,
    pub load: Vec<f64>,
}

/// Estimated UVC risk bounds against realizations at one bus and hour.
#[derive(Debug, Clone, PartialEq)]
pub struct VarTrack {
    pub bus: usize,
    pub hour: u32,
    pub upper: Vec<f64>,
    pub lower: Vec<f64>,
    pub realized: Vec<f64>,
}

/// Strategies of one method, aligned with the held-out cases.
#[derive(Debug, Clone)]
pub struct MethodRun {
    pub name: String,
    pub strategies: Vec<Strategy>,
    pub track: Option<VarTrack>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyCell {
    pub bus: usize,
    pub hour: u32,
    pub cases: usize,
    pub upper: f64,
    pub lower: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extreme {
    pub frequency: f64,
    pub bus: usize,
    pub hour: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self { mean: f64::NAN, median: f64::NAN, min: f64::NAN, max: f64::NAN };
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let mid = v.len() / 2;
        Self {
            mean: v.iter().sum::<f64>() / v.len() as f64,
            median: if v.len().is_multiple_of(2) { 0.5 * (v[mid - 1] + v[mid]) } else { v[mid] },
            min: v[0],
            max: v[v.len() - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub method: String,
    pub tau: f64,
    /// Desired violation level `1 − τ`.
    pub threshold: f64,
    pub cases: usize,
    pub max_upper: Extreme,
    pub max_lower: Extreme,
    pub max_frequency: f64,
    pub max_bus: usize,
    /// `|max_frequency − threshold|`.
    pub deviation: f64,
    pub cost: Summary,
    pub alpha: Summary,
    pub tau_act_upper: Option<f64>,
    pub tau_act_lower: Option<f64>,
    pub cells: Vec<FrequencyCell>,
}

impl ValidationReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports serialize")
    }

    /// Rows are buses, columns hours; empty cells for hours without cases.
    pub fn heatmap_csv(&self, side: Side) -> String {
        let hours: Vec<u32> = {
            let mut h: Vec<u32> = self.cells.iter().map(|c| c.hour).collect();
            h.sort_unstable();
            h.dedup();
            h
        };
        let mut by_bus: BTreeMap<usize, BTreeMap<u32, f64>> = BTreeMap::new();
        for c in &self.cells {
            let v = match side {
                Side::Upper => c.upper,
                Side::Lower => c.lower,
            };
            by_bus.entry(c.bus).or_default().insert(c.hour, v);
        }
        let mut out = String::from("bus");
        for h in &hours {
            out.push_str(&format!(",h{h:02}"));
        }
        out.push('\n');
        for (bus, row) in by_bus {
            out.push_str(&bus.to_string());
            for h in &hours {
                match row.get(h) {
                    Some(v) => out.push_str(&format!(",{v}")),
                    None => out.push(','),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Per-(bus, hour) violation frequencies of each method's strategies on the
/// held-out cases, with summary statistics. Realized voltages apply each
/// strategy's curtailment to the generation part of the UVC.
pub fn compare_methods(
    runs: &[MethodRun],
    cases: &[HeldOutCase],
    net: &Network,
    v_o: &[f64],
    tau: f64,
) -> Result<Vec<ValidationReport>> {
    let n_bus = net.bus_order().len();
    if v_o.len() != n_bus {
        return Err(CoreError::Input("constant components do not match the network".into()));
    }
    if cases.iter().any(|c| c.gen.len() != n_bus || c.load.len() != n_bus) {
        return Err(CoreError::Input("held-out case does not cover every bus".into()));
    }
    let (v_min, v_max) = (net.v_min(), net.v_max());
    let threshold = 1.0 - tau;
    runs.iter()
        .map(|run| {
            if run.strategies.len() != cases.len() {
                return Err(CoreError::Input(format!(
                    "method {} has {} strategies for {} cases",
                    run.name,
                    run.strategies.len(),
                    cases.len()
                )));
            }
            // (bus row, hour) -> (cases, upper count, lower count)
            let mut counts: BTreeMap<(usize, u32), (usize, usize, usize)> = BTreeMap::new();
            for (case, s) in cases.iter().zip(&run.strategies) {
                if s.v_c.len() != n_bus {
                    return Err(CoreError::Input(format!("method {} strategy misses buses", run.name)));
                }
                for i in 0..n_bus {
                    let v = (1.0 - s.alpha) * case.gen[i] - case.load[i] + s.v_c[i].pu2 + v_o[i];
                    let e = counts.entry((i, case.hour)).or_default();
                    e.0 += 1;
                    e.1 += usize::from(v > v_max[i]);
                    e.2 += usize::from(v < v_min[i]);
                }
            }
            let cells: Vec<FrequencyCell> = counts
                .iter()
                .map(|(&(i, hour), &(n, up, lo))| FrequencyCell {
                    bus: net.bus_order()[i],
                    hour,
                    cases: n,
                    upper: up as f64 / n as f64,
                    lower: lo as f64 / n as f64,
                })
                .collect();
            let pick = |f: fn(&FrequencyCell) -> f64| {
                cells.iter().fold(
                    Extreme { frequency: 0.0, bus: net.bus_order()[0], hour: 0 },
                    |best, c| if f(c) > best.frequency { Extreme { frequency: f(c), bus: c.bus, hour: c.hour } } else { best },
                )
            };
            let max_upper = pick(|c| c.upper);
            let max_lower = pick(|c| c.lower);
            let top = if max_lower.frequency > max_upper.frequency { max_lower } else { max_upper };
            let costs: Vec<f64> = run.strategies.iter().map(|s| s.cost).collect();
            let alphas: Vec<f64> = run.strategies.iter().map(|s| s.alpha).collect();
            let (tau_act_upper, tau_act_lower) = match &run.track {
                Some(t) => (
                    Some(var_confidence(&t.upper, &t.realized, Side::Upper)?),
                    Some(var_confidence(&t.lower, &t.realized, Side::Lower)?),
                ),
                None => (None, None),
            };
            Ok(ValidationReport {
                method: run.name.clone(),
                tau,
                threshold,
                cases: cases.len(),
                max_upper,
                max_lower,
                max_frequency: top.frequency,
                max_bus: top.bus,
                deviation: (top.frequency - threshold).abs(),
                cost: Summary::of(&costs),
                alpha: Summary::of(&alphas),
                tau_act_upper,
                tau_act_lower,
                cells,
            })
        })
        .collect()
}
