//! Synthetic PV and load histories with regime-switching cloud cover.
//!
//! Each day is either sunny or cloudy, following a two-state Markov chain.
//! PV output is a clear-sky envelope times a cloud factor drawn from a
//! regime-specific Beta law, so the day-ahead error of a persistence
//! forecast is bimodal. Loads follow a daily profile with Gaussian noise.
//! Every (day, hour) draws from its own ChaCha stream, so any slice of days
//! can be regenerated without the rest.

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, StandardNormal};

use crate::error::{CoreError, Result};
use crate::grid_model::InjectionLayout;
use crate::uvc::InjectionSeries;

/// Relative load level by hour of day.
pub const LOAD_PROFILE: [f64; 24] = [
    0.62, 0.58, 0.56, 0.55, 0.57, 0.62, 0.72, 0.83, 0.90, 0.93, 0.95, 0.96, 0.95, 0.94, 0.93, 0.93, 0.95,
    1.00, 1.00, 0.98, 0.93, 0.85, 0.75, 0.67,
];

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub seed: u64,
    pub start: NaiveDate,
    pub days: usize,
    /// Scales every PV unit's nominal rating.
    pub pv_scale: f64,
    /// Scales every load's nominal base.
    pub load_scale: f64,
    pub sunny_stay: f64,
    pub cloudy_stay: f64,
    pub sunny_beta: (f64, f64),
    pub cloudy_beta: (f64, f64),
    /// Relative spread of each unit's cloud factor around the common one.
    pub unit_jitter: f64,
    pub load_noise: f64,
    /// Relative amplitude of the seasonal swing of the clear-sky envelope.
    pub seasonal: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            start: NaiveDate::from_ymd_opt(2021, 1, 1).unwrap(),
            days: 730,
            pv_scale: 0.8,
            load_scale: 0.6,
            sunny_stay: 0.8,
            cloudy_stay: 0.8,
            sunny_beta: (18.0, 2.0),
            cloudy_beta: (2.0, 5.0),
            unit_jitter: 0.05,
            load_noise: 0.05,
            seasonal: 0.075,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let prob = |p: f64| (0.0..=1.0).contains(&p);
        let shape = |(a, b): (f64, f64)| a > 0.0 && b > 0.0;
        if !(prob(self.sunny_stay) && prob(self.cloudy_stay))
            || !(shape(self.sunny_beta) && shape(self.cloudy_beta))
            || !(self.pv_scale >= 0.0 && self.load_scale >= 0.0)
            || !(self.unit_jitter >= 0.0 && self.load_noise >= 0.0)
            || !(0.0..1.0).contains(&self.seasonal)
        {
            return Err(CoreError::Input("synthetic generator settings out of range".into()));
        }
        Ok(())
    }
}

/// Clear-sky output fraction at `hour` on day-of-year `doy`.
pub fn clear_sky(hour: u32, doy: u32, seasonal: f64) -> f64 {
    if !(6..=18).contains(&hour) {
        return 0.0;
    }
    let shape = (std::f64::consts::PI * (hour as f64 - 6.0) / 12.0).sin().max(0.0);
    let season = 1.0 - seasonal + seasonal * (2.0 * std::f64::consts::PI * (doy as f64 - 172.0) / 365.0).cos();
    shape * season
}

/// The generator state for one layout.
#[derive(Debug, Clone)]
pub struct Generator {
    cfg: SynthConfig,
    ratings: Vec<f64>,
    bases: Vec<f64>,
}

/// True injections of one (day, hour).
#[derive(Debug, Clone, PartialEq)]
pub struct HourDraw {
    pub gen: Vec<f64>,
    pub load: Vec<f64>,
}

/// Actual and persistence-predicted injections of one (day, hour).
#[derive(Debug, Clone, PartialEq)]
pub struct HourCase {
    pub day: usize,
    pub actual: HourDraw,
    pub predicted: HourDraw,
}

impl Generator {
    pub fn new(layout: &InjectionLayout, cfg: SynthConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            ratings: layout.uncertain_gens.iter().map(|g| g.nominal * cfg.pv_scale).collect(),
            bases: layout.uncertain_loads.iter().map(|d| d.nominal * cfg.load_scale).collect(),
            cfg,
        })
    }

    pub fn config(&self) -> &SynthConfig {
        &self.cfg
    }

    /// Weather regime (true = sunny) of days `0..n`; day 0 starts from the
    /// stationary law.
    pub fn regimes(&self, n: usize) -> Vec<bool> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(u64::MAX);
        let (ps, pc) = (self.cfg.sunny_stay, self.cfg.cloudy_stay);
        let stationary = (1.0 - pc) / ((1.0 - ps) + (1.0 - pc)).max(f64::MIN_POSITIVE);
        let mut out = Vec::with_capacity(n);
        let mut sunny = rng.random::<f64>() < stationary;
        for _ in 0..n {
            out.push(sunny);
            let stay = if sunny { ps } else { pc };
            if rng.random::<f64>() >= stay {
                sunny = !sunny;
            }
        }
        out
    }

    /// Injections on `day` at `hour` given the day's regime.
    pub fn draw(&self, day: usize, hour: u32, sunny: bool) -> HourDraw {
        let mut rng = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        rng.set_stream(((day as u64) << 8) | hour as u64);
        let date = self.cfg.start + Duration::days(day as i64);
        let env = clear_sky(hour, date.ordinal(), self.cfg.seasonal);
        let (a, b) = if sunny { self.cfg.sunny_beta } else { self.cfg.cloudy_beta };
        let cloud: f64 = Beta::new(a, b).expect("validated shape").sample(&mut rng);
        let gen = self
            .ratings
            .iter()
            .map(|&r| {
                let z: f64 = StandardNormal.sample(&mut rng);
                let c = (cloud * (1.0 + self.cfg.unit_jitter * z)).clamp(0.0, 1.0);
                r * env * c
            })
            .collect();
        let level = LOAD_PROFILE[hour as usize];
        let load = self
            .bases
            .iter()
            .map(|&base| {
                let z: f64 = StandardNormal.sample(&mut rng);
                base * level * (1.0 + self.cfg.load_noise * z)
            })
            .collect();
        HourDraw { gen, load }
    }

    /// Actual and persistence-predicted injections at `hour` for every day
    /// in `days`; the prediction of day d is the actual of day d − 1.
    /// Days are counted from the day after the configured start, which
    /// only serves as history.
    pub fn hour_cases(&self, days: std::ops::Range<usize>, hour: u32) -> Vec<HourCase> {
        let regimes = self.regimes(days.end + 1);
        days.map(|d| HourCase {
            day: d,
            actual: self.draw(d + 1, hour, regimes[d + 1]),
            predicted: self.draw(d, hour, regimes[d]),
        })
        .collect()
    }

    /// Hourly series over `cfg.days` days with persistence predictions.
    pub fn series(&self) -> InjectionSeries {
        let n_days = self.cfg.days;
        let regimes = self.regimes(n_days + 1);
        let hours = n_days * 24;
        let (ng, nd) = (self.ratings.len(), self.bases.len());
        let mut s = InjectionSeries {
            timestamps: Vec::with_capacity(hours),
            gen_true: vec![Vec::with_capacity(hours); ng],
            gen_pred: vec![Vec::with_capacity(hours); ng],
            load_true: vec![Vec::with_capacity(hours); nd],
            load_pred: vec![Vec::with_capacity(hours); nd],
        };
        let mut previous: Vec<HourDraw> = (0..24).map(|h| self.draw(0, h, regimes[0])).collect();
        for d in 1..=n_days {
            let date: NaiveDateTime = (self.cfg.start + Duration::days(d as i64)).and_hms_opt(0, 0, 0).unwrap();
            for h in 0..24u32 {
                let today = self.draw(d, h, regimes[d]);
                s.timestamps.push(date + Duration::hours(h as i64));
                let prev = &previous[h as usize];
                for g in 0..ng {
                    s.gen_true[g].push(today.gen[g]);
                    s.gen_pred[g].push(prev.gen[g]);
                }
                for k in 0..nd {
                    s.load_true[k].push(today.load[k]);
                    s.load_pred[k].push(prev.load[k]);
                }
                previous[h as usize] = today;
            }
        }
        s
    }
}
