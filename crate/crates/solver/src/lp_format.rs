//! CPLEX-style LP text dump for cross-checking against external solvers.

use std::fmt::Write;

use crate::{LpProblem, MilpProblem, Sense};

fn sanitize(name: &str) -> String {
    let cleaned: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "_.[]".contains(c) { c } else { '_' })
        .collect();
    match cleaned.chars().next() {
        Some(c) if c.is_ascii_digit() || c == '.' => format!("_{cleaned}"),
        None => "_".to_string(),
        _ => cleaned,
    }
}

fn num(x: f64) -> String {
    format!("{x:?}")
}

fn linear(out: &mut String, terms: impl Iterator<Item = (String, f64)>) {
    let mut first = true;
    for (name, a) in terms {
        if a == 0.0 {
            continue;
        }
        let sign = if a < 0.0 { "-" } else { "+" };
        if first && a >= 0.0 {
            let _ = write!(out, " {} {}", num(a), name);
        } else {
            let _ = write!(out, " {} {} {}", sign, num(a.abs()), name);
        }
        first = false;
    }
    if first {
        out.push_str(" 0");
    }
}

/// Renders `lp` (with the binaries and SOS2 groups of `milp`, if given) in
/// LP file format.
pub fn write_lp(lp: &LpProblem, milp: Option<&MilpProblem>) -> String {
    let names: Vec<String> = lp.variables().iter().map(|v| sanitize(&v.name)).collect();
    let mut out = String::new();
    out.push_str("Minimize\n obj:");
    linear(
        &mut out,
        lp.variables().iter().enumerate().map(|(j, v)| (names[j].clone(), v.cost)),
    );
    out.push_str("\nSubject To\n");
    for (r, c) in lp.constraints().iter().enumerate() {
        let _ = write!(out, " {}_{}:", sanitize(&c.name), r);
        linear(&mut out, c.coeffs.iter().map(|&(v, a)| (names[v.index()].clone(), a)));
        let op = match c.sense {
            Sense::Le => "<=",
            Sense::Ge => ">=",
            Sense::Eq => "=",
        };
        let _ = writeln!(out, " {} {}", op, num(c.rhs));
    }
    out.push_str("Bounds\n");
    for (j, v) in lp.variables().iter().enumerate() {
        let n = &names[j];
        match (v.lower.is_finite(), v.upper.is_finite()) {
            (false, false) => {
                let _ = writeln!(out, " {n} free");
            }
            (true, true) if v.lower == v.upper => {
                let _ = writeln!(out, " {n} = {}", num(v.lower));
            }
            (true, true) => {
                let _ = writeln!(out, " {} <= {n} <= {}", num(v.lower), num(v.upper));
            }
            (true, false) => {
                let _ = writeln!(out, " {n} >= {}", num(v.lower));
            }
            (false, true) => {
                let _ = writeln!(out, " -inf <= {n} <= {}", num(v.upper));
            }
        }
    }
    if let Some(m) = milp {
        if !m.binaries().is_empty() {
            out.push_str("Binaries\n");
            for b in m.binaries() {
                let _ = writeln!(out, " {}", names[b.index()]);
            }
        }
        if !m.sos2_groups().is_empty() {
            out.push_str("SOS\n");
            for g in m.sos2_groups() {
                let _ = write!(out, " {}: S2::", sanitize(&g.name));
                for (k, l) in g.lambdas.iter().enumerate() {
                    let _ = write!(out, " {}:{}", names[l.index()], k + 1);
                }
                out.push('\n');
            }
        }
    }
    out.push_str("End\n");
    out
}
