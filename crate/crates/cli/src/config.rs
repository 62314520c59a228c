//! Run configuration read from a TOML file.

use std::path::{Path, PathBuf};

use serde::Deserialize;
use voltrisk_core::density::DEFAULT_COMPONENTS;
use voltrisk_core::io::{load_layout, load_network, read_text};
use voltrisk_core::manage::{Variant, DEFAULT_GRID_POINTS};
use voltrisk_core::pipeline::System;
use voltrisk_core::{CoreError, Result};

/// Paths are relative to the directory of the config file. Without
/// `network` the bundled 33-bus feeder is used.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub network: Option<PathBuf>,
    pub buses: Option<PathBuf>,
    pub layout: Option<PathBuf>,
    pub slack_bus: usize,
    pub slack_pu: f64,
    /// Training series (`timestamp,id,true[,predicted]`).
    pub history: Option<PathBuf>,
    /// Day-ahead predictions (`timestamp,id,predicted`).
    pub predictions: Option<PathBuf>,
    /// Held-out series used by `validate` and `compare`.
    pub test: Option<PathBuf>,
    pub tau: f64,
    pub variant: Variant,
    pub curtailment: bool,
    pub components: usize,
    pub grid_points: usize,
    pub seed: u64,
    pub out: PathBuf,
    pub hours: Vec<u32>,
    /// Bus whose VaR estimates `compare` tracks for the confidence levels.
    pub track_bus: Option<usize>,
    pub track_hour: u32,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            network: None,
            buses: None,
            layout: None,
            slack_bus: 1,
            slack_pu: 1.0,
            history: None,
            predictions: None,
            test: None,
            tau: 0.95,
            variant: Variant::Var,
            curtailment: false,
            components: DEFAULT_COMPONENTS,
            grid_points: DEFAULT_GRID_POINTS,
            seed: 7,
            out: PathBuf::from("out"),
            hours: (0..24).collect(),
            track_bus: None,
            track_hour: 13,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        let mut cfg: RunConfig = toml::from_str(&text).map_err(|e| CoreError::Parse {
            path: path.to_path_buf(),
            line: e.span().map_or(0, |s| text[..s.start].lines().count().max(1) as u64),
            msg: e.message().to_string(),
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [
            &mut cfg.network,
            &mut cfg.buses,
            &mut cfg.layout,
            &mut cfg.history,
            &mut cfg.predictions,
            &mut cfg.test,
        ]
        .into_iter()
        .flatten()
        {
            *p = base.join(&*p);
        }
        cfg.out = base.join(&cfg.out);
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(CoreError::Input(msg));
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return bad(format!("tau must lie in (0, 1), got {}", self.tau));
        }
        if self.components == 0 {
            return bad("components must be positive".into());
        }
        if self.grid_points < 2 {
            return bad("grid_points must be at least 2".into());
        }
        if let Some(h) = self.hours.iter().find(|&&h| h > 23) {
            return bad(format!("hour {h} is out of range"));
        }
        if self.track_hour > 23 {
            return bad(format!("track_hour {} is out of range", self.track_hour));
        }
        if self.network.is_some() != self.buses.is_some() {
            return bad("network and buses must be given together".into());
        }
        if self.network.is_some() && self.layout.is_none() {
            return bad("a custom network needs a layout".into());
        }
        Ok(())
    }

    pub fn system(&self) -> Result<System> {
        match (&self.network, &self.buses) {
            (Some(branches), Some(buses)) => {
                let net = load_network(branches, buses, self.slack_bus, self.slack_pu)?;
                let layout = load_layout(self.layout.as_deref().expect("validated"))?;
                System::new(net, layout)
            }
            _ => {
                let sys = System::ieee33();
                match &self.layout {
                    Some(p) => System::new(sys.net, load_layout(p)?),
                    None => Ok(sys),
                }
            }
        }
    }

    pub fn required<'a>(&self, path: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
        path.as_deref()
            .ok_or_else(|| CoreError::Input(format!("config sets no `{key}` path")))
    }

    /// Hours in ascending order without repeats.
    pub fn hour_list(&self) -> Vec<u32> {
        let mut h = self.hours.clone();
        h.sort_unstable();
        h.dedup();
        h
    }
}
