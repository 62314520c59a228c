//! File formats: feeder and layout CSVs, long-format time series, atomic
//! writes.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDateTime;
use serde::Deserialize;

use crate::error::{CoreError, Result};
use crate::grid_model::{Branch, Bus, ConstantElement, InjectionLayout, Network, Provider, UncertainElement};
use crate::uvc::{baseline_point_predictor, InjectionSeries};

const IEEE33_BRANCHES: &str = include_str!("../data/ieee33/branches.csv");
const IEEE33_BUSES: &str = include_str!("../data/ieee33/buses.csv");
const IEEE33_LAYOUT: &str = include_str!("../data/ieee33/layout.csv");

pub fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| CoreError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes through a temporary sibling and renames it into place.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let io = |source| CoreError::Io {
        path: path.to_path_buf(),
        source,
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

fn parse_rows<T: for<'de> Deserialize<'de>>(text: &str, origin: &Path) -> Result<Vec<T>> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut out = Vec::new();
    for rec in reader.deserialize() {
        let row: T = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            CoreError::Parse {
                path: origin.to_path_buf(),
                line,
                msg: match e.kind() {
                    csv::ErrorKind::Deserialize { err, .. } => err.to_string(),
                    _ => e.to_string(),
                },
            }
        })?;
        out.push(row);
    }
    Ok(out)
}

#[derive(Deserialize)]
struct BranchRow {
    from: usize,
    to: usize,
    r_pu: f64,
    x_pu: f64,
}

#[derive(Deserialize)]
struct BusRow {
    bus: usize,
    vmin_pu: f64,
    vmax_pu: f64,
}

#[derive(Deserialize)]
struct LayoutRow {
    id: String,
    role: String,
    bus: usize,
    kappa: Option<f64>,
    p_fixed: Option<f64>,
    q_min: Option<f64>,
    q_max: Option<f64>,
    cost: Option<f64>,
}

/// Builds a network from branch and bus CSV text. `v0_pu` is the slack
/// voltage magnitude; it is squared here.
pub fn parse_network(
    branches: &str,
    branches_origin: &Path,
    buses: &str,
    buses_origin: &Path,
    slack_bus: usize,
    v0_pu: f64,
) -> Result<Network> {
    let branches: Vec<BranchRow> = parse_rows(branches, branches_origin)?;
    let buses: Vec<BusRow> = parse_rows(buses, buses_origin)?;
    Network::new(
        buses
            .into_iter()
            .map(|b| Bus {
                id: b.bus,
                vmin_pu: b.vmin_pu,
                vmax_pu: b.vmax_pu,
            })
            .collect(),
        slack_bus,
        v0_pu * v0_pu,
        branches
            .into_iter()
            .map(|b| Branch {
                from_bus: b.from,
                to_bus: b.to,
                r: b.r_pu,
                x: b.x_pu,
            })
            .collect(),
    )
}

pub fn load_network(branches: &Path, buses: &Path, slack_bus: usize, v0_pu: f64) -> Result<Network> {
    parse_network(&read_text(branches)?, branches, &read_text(buses)?, buses, slack_bus, v0_pu)
}

pub fn parse_layout(text: &str, origin: &Path) -> Result<InjectionLayout> {
    let mut layout = InjectionLayout::default();
    for (k, row) in parse_rows::<LayoutRow>(text, origin)?.into_iter().enumerate() {
        let line = k as u64 + 2;
        let need = |v: Option<f64>, what: &str| {
            v.ok_or_else(|| CoreError::Parse {
                path: origin.to_path_buf(),
                line,
                msg: format!("{} needs {what}", row.role),
            })
        };
        match row.role.as_str() {
            "ugen" | "uload" => {
                let e = UncertainElement {
                    id: row.id.clone(),
                    bus: row.bus,
                    kappa: row.kappa.unwrap_or(0.0),
                    nominal: row.p_fixed.unwrap_or(0.0),
                };
                if row.role == "ugen" {
                    layout.uncertain_gens.push(e);
                } else {
                    layout.uncertain_loads.push(e);
                }
            }
            "cgen" | "cload" => {
                let e = ConstantElement {
                    id: row.id.clone(),
                    bus: row.bus,
                    kappa: row.kappa.unwrap_or(0.0),
                    p: need(row.p_fixed, "p_fixed")?,
                };
                if row.role == "cgen" {
                    layout.constant_gens.push(e);
                } else {
                    layout.constant_loads.push(e);
                }
            }
            "provider" => layout.providers.push(Provider {
                id: row.id.clone(),
                bus: row.bus,
                q_min: need(row.q_min, "q_min")?,
                q_max: need(row.q_max, "q_max")?,
                cost: need(row.cost, "cost")?,
                p: row.p_fixed.unwrap_or(0.0),
            }),
            other => {
                return Err(CoreError::Parse {
                    path: origin.to_path_buf(),
                    line,
                    msg: format!("unknown role {other:?}"),
                })
            }
        }
    }
    Ok(layout)
}

pub fn load_layout(path: &Path) -> Result<InjectionLayout> {
    parse_layout(&read_text(path)?, path)
}

/// The bundled 33-bus feeder (slack bus 1 at 1.0 pu) with its four PV
/// units, 32 loads and six reactive providers.
pub fn ieee33() -> (Network, InjectionLayout) {
    let net = parse_network(
        IEEE33_BRANCHES,
        Path::new("ieee33/branches.csv"),
        IEEE33_BUSES,
        Path::new("ieee33/buses.csv"),
        1,
        1.0,
    )
    .expect("bundled feeder parses");
    let layout = parse_layout(IEEE33_LAYOUT, Path::new("ieee33/layout.csv")).expect("bundled layout parses");
    layout.validate(&net).expect("bundled layout is valid");
    (net, layout)
}

const TIME_FORMATS: [&str; 3] = ["%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M"];

pub fn parse_timestamp(s: &str) -> Option<NaiveDateTime> {
    TIME_FORMATS
        .iter()
        .find_map(|f| NaiveDateTime::parse_from_str(s.trim(), f).ok())
}

pub fn format_timestamp(t: &NaiveDateTime) -> String {
    t.format("%Y-%m-%d %H:%M").to_string()
}

/// Reads `timestamp,id,true[,predicted]` rows. Without a `predicted`
/// column the persistence predictor fills it in, and the flag in the
/// result is set.
pub fn parse_series(text: &str, origin: &Path, layout: &InjectionLayout) -> Result<(InjectionSeries, bool)> {
    let err = |line: u64, msg: String| CoreError::Parse {
        path: origin.to_path_buf(),
        line,
        msg,
    };
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| err(1, e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (c_ts, c_id, c_true) = match (col("timestamp"), col("id"), col("true")) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => return Err(err(1, "header must contain timestamp,id,true".into())),
    };
    let c_pred = col("predicted");

    let mut slot: HashMap<&str, (bool, usize)> = HashMap::new();
    for (k, g) in layout.uncertain_gens.iter().enumerate() {
        slot.insert(&g.id, (true, k));
    }
    for (k, d) in layout.uncertain_loads.iter().enumerate() {
        slot.insert(&d.id, (false, k));
    }
    let mut times: Vec<NaiveDateTime> = Vec::new();
    let mut index: HashMap<NaiveDateTime, usize> = HashMap::new();
    let mut cells: Vec<(usize, bool, usize, f64, Option<f64>)> = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let ts = parse_timestamp(&rec[c_ts]).ok_or_else(|| err(line, format!("bad timestamp {:?}", &rec[c_ts])))?;
        let &(is_gen, k) = slot
            .get(&rec[c_id])
            .ok_or_else(|| err(line, format!("unknown element {:?}", &rec[c_id])))?;
        let num = |s: &str| s.parse::<f64>().map_err(|e| err(line, format!("{s:?}: {e}")));
        let actual = num(&rec[c_true])?;
        let pred = match c_pred.map(|c| &rec[c]) {
            Some(s) if !s.is_empty() => Some(num(s)?),
            _ => None,
        };
        let t = *index.entry(ts).or_insert_with(|| {
            times.push(ts);
            times.len() - 1
        });
        cells.push((t, is_gen, k, actual, pred));
    }
    let mut order: Vec<usize> = (0..times.len()).collect();
    order.sort_by_key(|&t| times[t]);
    let mut rank = vec![0; times.len()];
    for (r, &t) in order.iter().enumerate() {
        rank[t] = r;
    }
    let n = times.len();
    let blank = |m: usize| vec![vec![f64::NAN; n]; m];
    let (ng, nd) = (layout.uncertain_gens.len(), layout.uncertain_loads.len());
    let mut s = InjectionSeries {
        timestamps: order.iter().map(|&t| times[t]).collect(),
        gen_true: blank(ng),
        gen_pred: blank(ng),
        load_true: blank(nd),
        load_pred: blank(nd),
    };
    let mut all_predicted = true;
    for (t, is_gen, k, a, p) in cells {
        let t = rank[t];
        let (tc, pc) = if is_gen {
            (&mut s.gen_true, &mut s.gen_pred)
        } else {
            (&mut s.load_true, &mut s.load_pred)
        };
        tc[k][t] = a;
        match p {
            Some(p) => pc[k][t] = p,
            None => all_predicted = false,
        }
    }
    if let Some((k, t)) = s
        .gen_true
        .iter()
        .chain(&s.load_true)
        .enumerate()
        .find_map(|(k, c)| c.iter().position(|v| v.is_nan()).map(|t| (k, t)))
    {
        return Err(err(0, format!("element #{k} has no value at {}", s.timestamps[t])));
    }
    let filled = !all_predicted;
    if filled {
        for (tc, pc) in s.gen_true.iter().zip(s.gen_pred.iter_mut()).chain(s.load_true.iter().zip(s.load_pred.iter_mut())) {
            *pc = baseline_point_predictor(tc, 0)?;
        }
    }
    s.validate()?;
    Ok((s, filled))
}

pub fn load_series(path: &Path, layout: &InjectionLayout) -> Result<(InjectionSeries, bool)> {
    parse_series(&read_text(path)?, path, layout)
}

/// Day-ahead point predictions of one horizon, keyed by hour of day.
#[derive(Debug, Clone, PartialEq)]
pub struct DayAhead {
    pub hours: std::collections::BTreeMap<u32, (Vec<f64>, Vec<f64>)>,
    /// Timestamp of each hour.
    pub stamps: std::collections::BTreeMap<u32, NaiveDateTime>,
}

impl DayAhead {
    /// Date of the earliest timestamp.
    pub fn date(&self) -> Option<chrono::NaiveDate> {
        self.stamps.values().min().map(|t| t.date())
    }
}

/// Reads `timestamp,id,predicted` rows covering each element once per
/// timestamp; hours of day must not repeat.
pub fn parse_predictions(text: &str, origin: &Path, layout: &InjectionLayout) -> Result<DayAhead> {
    let err = |line: u64, msg: String| CoreError::Parse {
        path: origin.to_path_buf(),
        line,
        msg,
    };
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| err(1, e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let (c_ts, c_id, c_pred) = match (col("timestamp"), col("id"), col("predicted")) {
        (Some(a), Some(b), Some(c)) => (a, b, c),
        _ => return Err(err(1, "header must contain timestamp,id,predicted".into())),
    };
    let (ng, nd) = (layout.uncertain_gens.len(), layout.uncertain_loads.len());
    let mut slot: HashMap<&str, (bool, usize)> = HashMap::new();
    for (k, g) in layout.uncertain_gens.iter().enumerate() {
        slot.insert(&g.id, (true, k));
    }
    for (k, d) in layout.uncertain_loads.iter().enumerate() {
        slot.insert(&d.id, (false, k));
    }
    let mut stamps: std::collections::BTreeMap<NaiveDateTime, (Vec<f64>, Vec<f64>)> = Default::default();
    for rec in reader.records() {
        let rec = rec.map_err(|e| err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        let ts = parse_timestamp(&rec[c_ts]).ok_or_else(|| err(line, format!("bad timestamp {:?}", &rec[c_ts])))?;
        let &(is_gen, k) = slot
            .get(&rec[c_id])
            .ok_or_else(|| err(line, format!("unknown element {:?}", &rec[c_id])))?;
        let v: f64 = rec[c_pred]
            .parse()
            .map_err(|e| err(line, format!("{:?}: {e}", &rec[c_pred])))?;
        let entry = stamps
            .entry(ts)
            .or_insert_with(|| (vec![f64::NAN; ng], vec![f64::NAN; nd]));
        let cell = if is_gen { &mut entry.0[k] } else { &mut entry.1[k] };
        if !cell.is_nan() {
            return Err(err(line, format!("duplicate prediction for {:?}", &rec[c_id])));
        }
        *cell = v;
    }
    let mut hours = std::collections::BTreeMap::new();
    let mut when = std::collections::BTreeMap::new();
    for (ts, (g, l)) in stamps {
        if g.iter().chain(&l).any(|v| v.is_nan()) {
            return Err(err(0, format!("predictions at {} do not cover every element", format_timestamp(&ts))));
        }
        let hour = chrono::Timelike::hour(&ts);
        if hours.insert(hour, (g, l)).is_some() {
            return Err(err(0, format!("hour of {} appears twice", format_timestamp(&ts))));
        }
        when.insert(hour, ts);
    }
    Ok(DayAhead { hours, stamps: when })
}

pub fn load_predictions(path: &Path, layout: &InjectionLayout) -> Result<DayAhead> {
    parse_predictions(&read_text(path)?, path, layout)
}

pub fn series_to_csv(s: &InjectionSeries, layout: &InjectionLayout) -> String {
    let mut out = String::from("timestamp,id,true,predicted\n");
    for t in 0..s.len() {
        let ts = format_timestamp(&s.timestamps[t]);
        let cols = layout
            .uncertain_gens
            .iter()
            .zip(s.gen_true.iter().zip(&s.gen_pred))
            .chain(layout.uncertain_loads.iter().zip(s.load_true.iter().zip(&s.load_pred)));
        for (e, (a, p)) in cols {
            out.push_str(&format!("{ts},{},{},{}\n", e.id, a[t], p[t]));
        }
    }
    out
}
