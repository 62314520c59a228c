//! On-disk layout of the output directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::{NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};
use voltrisk_core::density::DensityModel;
use voltrisk_core::io::{read_text, write_atomic};
use voltrisk_core::manage::{Strategy, Variant};
use voltrisk_core::pipeline::{CurtailedBank, ModelBank, System};
use voltrisk_core::{CoreError, Result};

pub fn model_path(out: &Path, bus: usize, hour: u32) -> PathBuf {
    out.join("models").join(format!("bus{bus:02}_h{hour:02}.json"))
}

pub fn curtailed_path(out: &Path, hour: u32) -> PathBuf {
    out.join("models").join(format!("curtailed_h{hour:02}.json"))
}

pub fn baseline_path(out: &Path) -> PathBuf {
    out.join("models").join("baseline.json")
}

pub fn strategy_path(out: &Path, variant: Variant, date: NaiveDate, hour: u32) -> PathBuf {
    out.join("strategies").join(format!("{variant}_{date}_h{hour:02}.json"))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write_atomic(path, text.as_bytes())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).expect("outputs serialize");
    text.push('\n');
    write_text(path, &text)
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_str(&read_text(path)?).map_err(|e| CoreError::Parse {
        path: path.to_path_buf(),
        line: e.line() as u64,
        msg: e.to_string(),
    })
}

/// Loads the models of every bus at `hours`; pairs without a file are
/// returned separately.
pub fn load_bank(out: &Path, sys: &System, hours: &[u32]) -> Result<(ModelBank, Vec<(usize, u32)>)> {
    let mut bank = ModelBank::default();
    let mut missing = Vec::new();
    for &hour in hours {
        for &bus in sys.buses() {
            let path = model_path(out, bus, hour);
            if !path.exists() {
                missing.push((bus, hour));
                continue;
            }
            let m: DensityModel = read_json(&path)?;
            if (m.bus, m.hour) != (bus, hour) {
                return Err(CoreError::Input(format!(
                    "{} holds the model of bus {} at hour {}",
                    path.display(),
                    m.bus,
                    m.hour
                )));
            }
            bank.models.insert((bus, hour), m.gmm()?);
        }
    }
    Ok((bank, missing))
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CurtailedBus {
    bus: usize,
    models: Vec<DensityModel>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CurtailedFile {
    hour: u32,
    grid: Vec<f64>,
    buses: Vec<CurtailedBus>,
}

pub fn save_curtailed(out: &Path, sys: &System, bank: &CurtailedBank) -> Result<()> {
    let file = CurtailedFile {
        hour: bank.hour,
        grid: bank.grid.clone(),
        buses: sys
            .buses()
            .iter()
            .zip(&bank.models)
            .map(|(&bus, row)| CurtailedBus {
                bus,
                models: row.iter().map(|g| DensityModel::new(bus, bank.hour, g)).collect(),
            })
            .collect(),
    };
    write_json(&curtailed_path(out, bank.hour), &file)
}

pub fn load_curtailed(out: &Path, sys: &System, hour: u32) -> Result<CurtailedBank> {
    let path = curtailed_path(out, hour);
    if !path.exists() {
        return Err(CoreError::Input(format!(
            "no curtailed models for hour {hour}; run `fit` with curtailment enabled"
        )));
    }
    let file: CurtailedFile = read_json(&path)?;
    let buses: Vec<usize> = file.buses.iter().map(|b| b.bus).collect();
    if file.hour != hour || buses != sys.buses() || file.buses.iter().any(|b| b.models.len() != file.grid.len()) {
        return Err(CoreError::Input(format!("{} does not match the feeder", path.display())));
    }
    let models = file
        .buses
        .iter()
        .map(|b| b.models.iter().map(DensityModel::gmm).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    Ok(CurtailedBank {
        hour,
        grid: file.grid,
        models,
    })
}

/// Error covariances of the Gaussian baseline by hour.
#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Baseline {
    pub covariances: BTreeMap<u32, Vec<Vec<f64>>>,
}

pub fn load_baseline(out: &Path) -> Result<Baseline> {
    let path = baseline_path(out);
    if !path.exists() {
        return Err(CoreError::Input(format!("{} is missing; run `fit` first", path.display())));
    }
    read_json(&path)
}

pub fn load_strategy(path: &Path) -> Result<Strategy> {
    Strategy::from_json(&read_text(path)?).map_err(|e| CoreError::Parse {
        path: path.to_path_buf(),
        line: 0,
        msg: e.to_string(),
    })
}

/// Strategy files present under `out/strategies`, by variant and the
/// hour they dispatch.
pub fn list_strategies(out: &Path) -> Result<BTreeMap<(Variant, NaiveDateTime), PathBuf>> {
    let dir = out.join("strategies");
    let mut found = BTreeMap::new();
    let entries = match std::fs::read_dir(&dir) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(found),
        Err(source) => return Err(CoreError::Io { path: dir, source }),
    };
    for entry in entries {
        let entry = entry.map_err(|source| CoreError::Io { path: dir.clone(), source })?;
        let name = entry.file_name().to_string_lossy().into_owned();
        let Some(stem) = name.strip_suffix(".json") else { continue };
        let Some((head, hour)) = stem.rsplit_once("_h") else { continue };
        let Some((variant, date)) = head.split_once('_') else { continue };
        let variant = match variant {
            "var" => Variant::Var,
            "cvar" => Variant::Cvar,
            _ => continue,
        };
        let when = NaiveDate::parse_from_str(date, "%Y-%m-%d")
            .ok()
            .zip(hour.parse::<u32>().ok())
            .and_then(|(d, h)| d.and_hms_opt(h, 0, 0));
        if let Some(when) = when {
            found.insert((variant, when), entry.path());
        }
    }
    Ok(found)
}
