//! Uncertain voltage components: historical samples, point predictions and
//! the three-way voltage decomposition.

use chrono::{NaiveDateTime, Timelike};

use crate::error::{CoreError, Result};
use crate::grid_model::{InjectionLayout, UvcCoefficients};

/// Hourly true and predicted powers of every uncertain element, stored
/// element-major: `gen_true[g][t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct InjectionSeries {
    pub timestamps: Vec<NaiveDateTime>,
    pub gen_true: Vec<Vec<f64>>,
    pub gen_pred: Vec<Vec<f64>>,
    pub load_true: Vec<Vec<f64>>,
    pub load_pred: Vec<Vec<f64>>,
}

impl InjectionSeries {
    pub fn validate(&self) -> Result<()> {
        let t = self.timestamps.len();
        let columns = self
            .gen_true
            .iter()
            .chain(&self.gen_pred)
            .chain(&self.load_true)
            .chain(&self.load_pred);
        if self.gen_true.len() != self.gen_pred.len() || self.load_true.len() != self.load_pred.len() {
            return Err(CoreError::Input("true and predicted series cover different elements".into()));
        }
        for c in columns {
            if c.len() != t {
                return Err(CoreError::Input(format!(
                    "a series has {} records, timestamps have {t}",
                    c.len()
                )));
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(CoreError::Input("series contains non-finite values".into()));
            }
        }
        if self.gen_true.iter().flatten().any(|&v| v < 0.0) {
            return Err(CoreError::Input("generation must be nonnegative".into()));
        }
        for ts in &self.timestamps {
            if ts.minute() != 0 || ts.second() != 0 || ts.nanosecond() != 0 {
                return Err(CoreError::Input(format!("timestamp {ts} is not on the hour")));
            }
        }
        for w in self.timestamps.windows(2) {
            if w[1] <= w[0] {
                return Err(CoreError::Input(format!("timestamps not increasing at {}", w[1])));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    /// Records `range` of every column.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        let cut = |cols: &[Vec<f64>]| cols.iter().map(|c| c[range.clone()].to_vec()).collect();
        Self {
            timestamps: self.timestamps[range.clone()].to_vec(),
            gen_true: cut(&self.gen_true),
            gen_pred: cut(&self.gen_pred),
            load_true: cut(&self.load_true),
            load_pred: cut(&self.load_pred),
        }
    }

    /// Record indices whose timestamp falls at hour-of-day `hour`.
    pub fn records_at(&self, hour: u32) -> Vec<usize> {
        (0..self.len()).filter(|&t| self.timestamps[t].hour() == hour).collect()
    }

    /// Splits at the first record of day `ceil(frac · days)`, counting
    /// calendar days in the series.
    pub fn split_days(&self, frac: f64) -> (Self, Self) {
        let mut days: Vec<_> = self.timestamps.iter().map(|t| t.date()).collect();
        days.dedup();
        let n_train = ((days.len() as f64) * frac).round() as usize;
        let cut = days
            .get(n_train)
            .map(|d| self.timestamps.iter().position(|t| t.date() >= *d).unwrap())
            .unwrap_or(self.len());
        (self.slice(0..cut), self.slice(cut..self.len()))
    }

    pub fn gen_at(&self, t: usize, predicted: bool) -> Vec<f64> {
        let src = if predicted { &self.gen_pred } else { &self.gen_true };
        src.iter().map(|c| c[t]).collect()
    }

    pub fn load_at(&self, t: usize, predicted: bool) -> Vec<f64> {
        let src = if predicted { &self.load_pred } else { &self.load_true };
        src.iter().map(|c| c[t]).collect()
    }
}

/// Paired true/predicted UVC samples of one bus at one hour of day (pu²).
#[derive(Debug, Clone, PartialEq)]
pub struct UvcSampleSet {
    pub bus: usize,
    pub hour: u32,
    pub actual: Vec<f64>,
    pub predicted: Vec<f64>,
}

impl UvcSampleSet {
    pub fn len(&self) -> usize {
        self.actual.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actual.is_empty()
    }
}

/// Generation and load parts of the UVC, kept apart so curtailment can be
/// applied afterwards: `v_r = (1 − α)·gen − load`.
pub fn uvc_parts(coeffs: &UvcCoefficients, row: usize, chi: &[f64], zeta: &[f64]) -> (f64, f64) {
    let gen: f64 = coeffs.b_gen[row].iter().zip(chi).map(|(b, c)| b * c).sum();
    let load: f64 = coeffs.b_load[row].iter().zip(zeta).map(|(b, z)| b * z).sum();
    (gen, load)
}

pub fn compute_uvc_samples(
    coeffs: &UvcCoefficients,
    hist: &InjectionSeries,
    bus: usize,
    hour: u32,
) -> Result<UvcSampleSet> {
    compute_curtailed_uvc_samples(coeffs, hist, bus, hour, 0.0)
}

/// Samples with every generator scaled by `1 − alpha` in both the actual
/// and the predicted column.
pub fn compute_curtailed_uvc_samples(
    coeffs: &UvcCoefficients,
    hist: &InjectionSeries,
    bus: usize,
    hour: u32,
    alpha: f64,
) -> Result<UvcSampleSet> {
    check_alpha(alpha)?;
    let row = coeffs.row(bus)?;
    if hist.gen_true.len() != coeffs.b_gen[row].len() || hist.load_true.len() != coeffs.b_load[row].len() {
        return Err(CoreError::Input("series and coefficients cover different elements".into()));
    }
    let records = hist.records_at(hour);
    if records.len() < 2 {
        return Err(CoreError::InsufficientData(format!(
            "bus {bus} hour {hour}: {} records, need at least 2",
            records.len()
        )));
    }
    let mut actual = Vec::with_capacity(records.len());
    let mut predicted = Vec::with_capacity(records.len());
    for &t in &records {
        let (g, l) = uvc_parts(coeffs, row, &hist.gen_at(t, false), &hist.load_at(t, false));
        actual.push((1.0 - alpha) * g - l);
        let (g, l) = uvc_parts(coeffs, row, &hist.gen_at(t, true), &hist.load_at(t, true));
        predicted.push((1.0 - alpha) * g - l);
    }
    Ok(UvcSampleSet {
        bus,
        hour,
        actual,
        predicted,
    })
}

fn check_alpha(alpha: f64) -> Result<()> {
    if (0.0..=1.0).contains(&alpha) {
        Ok(())
    } else {
        Err(CoreError::Input(format!("curtailment ratio {alpha} outside [0, 1]")))
    }
}

/// Predicted UVC of `bus` from point predictions of every uncertain element.
pub fn predict_uvc(
    coeffs: &UvcCoefficients,
    chi_pred: &[f64],
    zeta_pred: &[f64],
    bus: usize,
    alpha: f64,
) -> Result<f64> {
    check_alpha(alpha)?;
    let row = coeffs.row(bus)?;
    if chi_pred.len() != coeffs.b_gen[row].len() || zeta_pred.len() != coeffs.b_load[row].len() {
        return Err(CoreError::Input("prediction vectors do not match the layout".into()));
    }
    let (g, l) = uvc_parts(coeffs, row, chi_pred, zeta_pred);
    Ok((1.0 - alpha) * g - l)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoltageDecomposition {
    pub v_r: f64,
    pub v_c: f64,
    pub v_o: f64,
}

impl VoltageDecomposition {
    pub fn total(&self) -> f64 {
        self.v_r + self.v_c + self.v_o
    }
}

/// Controllable component of `row` for provider set-points `q`.
pub fn controllable_component(coeffs: &UvcCoefficients, layout: &InjectionLayout, row: usize, q: &[f64]) -> f64 {
    let mut v = 0.0;
    for (j, p) in layout.providers.iter().enumerate() {
        v += coeffs.b_q[row][j] * q[j] + coeffs.b_p[row][j] * p.p;
    }
    v
}

/// Constant component of `row`: slack voltage plus fixed injections.
pub fn constant_component(coeffs: &UvcCoefficients, layout: &InjectionLayout, row: usize, v0: f64) -> f64 {
    let gen: f64 = layout
        .constant_gens
        .iter()
        .enumerate()
        .map(|(k, g)| coeffs.b_const_gen[row][k] * g.p)
        .sum();
    let load: f64 = layout
        .constant_loads
        .iter()
        .enumerate()
        .map(|(k, d)| coeffs.b_const_load[row][k] * d.p)
        .sum();
    gen - load + v0
}

#[allow(clippy::too_many_arguments)]
pub fn decompose_voltage(
    coeffs: &UvcCoefficients,
    layout: &InjectionLayout,
    chi: &[f64],
    zeta: &[f64],
    q: &[f64],
    v0: f64,
    bus: usize,
    alpha: f64,
) -> Result<VoltageDecomposition> {
    check_alpha(alpha)?;
    let row = coeffs.row(bus)?;
    if chi.len() != layout.uncertain_gens.len()
        || zeta.len() != layout.uncertain_loads.len()
        || q.len() != layout.providers.len()
        || coeffs.b_gen[row].len() != chi.len()
        || coeffs.b_load[row].len() != zeta.len()
    {
        return Err(CoreError::Input("vectors do not match the layout".into()));
    }
    let (g, l) = uvc_parts(coeffs, row, chi, zeta);
    Ok(VoltageDecomposition {
        v_r: (1.0 - alpha) * g - l,
        v_c: controllable_component(coeffs, layout, row, q),
        v_o: constant_component(coeffs, layout, row, v0),
    })
}

/// Seasonal persistence: the prediction for hour `t` is the value at
/// `t − 24`. Returns `series.len() + horizon` predictions; the first day
/// has no history and repeats the series itself.
pub fn baseline_point_predictor(series: &[f64], horizon: usize) -> Result<Vec<f64>> {
    if series.len() < 48 {
        return Err(CoreError::InsufficientData(format!(
            "persistence needs at least 48 hours, got {}",
            series.len()
        )));
    }
    if horizon > 24 {
        return Err(CoreError::Input(format!("horizon {horizon} exceeds the 24 h lag")));
    }
    Ok((0..series.len() + horizon)
        .map(|t| if t < 24 { series[t] } else { series[t - 24] })
        .collect())
}
