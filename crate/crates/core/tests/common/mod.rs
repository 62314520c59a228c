#![allow(dead_code)]

use std::collections::{BTreeMap, VecDeque};

use rand::Rng;
use voltrisk_core::density::{Component1, Component2, Gmm1, Gmm2};
use voltrisk_core::grid_model::{Branch, Bus, Network};

pub fn random_gmm1<R: Rng>(rng: &mut R, max_k: usize) -> Gmm1 {
    let k = rng.random_range(1..=max_k);
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    Gmm1::new(
        raw.iter()
            .map(|w| Component1 {
                w: w / total,
                mu: rng.random_range(-3.0..3.0),
                var: rng.random_range(0.01..2.0f64).powi(2),
            })
            .collect(),
    )
    .unwrap()
}

pub fn random_gmm2<R: Rng>(rng: &mut R, max_k: usize) -> Gmm2 {
    let k = rng.random_range(1..=max_k);
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    Gmm2::new(
        raw.iter()
            .map(|w| {
                let (s0, s1) = (rng.random_range(0.1..1.5), rng.random_range(0.1..1.5));
                let rho: f64 = rng.random_range(-0.9..0.9);
                Component2 {
                    w: w / total,
                    mu: [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)],
                    cov: [[s0 * s0, rho * s0 * s1], [rho * s0 * s1, s1 * s1]],
                }
            })
            .collect(),
    )
    .unwrap()
}

/// Adaptive Gauss-Kronrod (7-15) quadrature of `f` on [a, b].
#[allow(clippy::excessive_precision)]
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    const XK: [f64; 8] = [
        0.991455371120812639206854697526329,
        0.949107912342758524526189684047851,
        0.864864423359769072789712788640926,
        0.741531185599394439863864773280788,
        0.586087235467691130294144845693013,
        0.405845151377397166906606412076961,
        0.207784955007898467600689403773245,
        0.000000000000000000000000000000000,
    ];
    const WK: [f64; 8] = [
        0.022935322010529224963732008058970,
        0.063092092629978553290700663189204,
        0.104790010322250183839876322541518,
        0.140653259715525918745189590510238,
        0.169004726639267902826583426598550,
        0.190350578064785409913256402421014,
        0.204432940075298892414161999234649,
        0.209482141084727828012999174891714,
    ];
    const WG: [f64; 4] = [
        0.129484966168869693270611432679082,
        0.279705391489276667901467771423780,
        0.381830050505118944950369775488975,
        0.417959183673469387755102040816327,
    ];
    let rule = |a: f64, b: f64| -> (f64, f64) {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        let fc = f(c);
        let mut kron = WK[7] * fc;
        let mut gauss = WG[3] * fc;
        for i in 0..7 {
            let s = f(c - h * XK[i]) + f(c + h * XK[i]);
            kron += WK[i] * s;
            if i % 2 == 1 {
                gauss += WG[i / 2] * s;
            }
        }
        (kron * h, ((kron - gauss) * h).abs())
    };
    let mut stack = vec![(a, b, 0usize)];
    let mut total = 0.0;
    while let Some((lo, hi, depth)) = stack.pop() {
        let (val, err) = rule(lo, hi);
        if err <= tol * (hi - lo) / (b - a) || depth > 40 {
            total += val;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((mid, hi, depth + 1));
            stack.push((lo, mid, depth + 1));
        }
    }
    total
}

/// Support box of `g` wide enough that the tails beyond it are negligible.
pub fn support(g: &Gmm1, width: f64) -> (f64, f64) {
    g.components().iter().fold((f64::MAX, f64::MIN), |(lo, hi), c| {
        let s = c.var.sqrt();
        (lo.min(c.mu - width * s), hi.max(c.mu + width * s))
    })
}

/// Path-accumulation sensitivities computed from scratch: breadth-first
/// parents from the slack, then `R[i][l] = 2 Σ r` over branches on both
/// root paths.
pub fn path_oracle(net: &Network) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut adj: BTreeMap<usize, Vec<(usize, f64, f64)>> = BTreeMap::new();
    for b in net.branches() {
        adj.entry(b.from_bus).or_default().push((b.to_bus, b.r, b.x));
        adj.entry(b.to_bus).or_default().push((b.from_bus, b.r, b.x));
    }
    let mut edge: BTreeMap<usize, (usize, f64, f64)> = BTreeMap::new();
    let mut queue = VecDeque::from([net.slack_bus()]);
    let mut seen = vec![net.slack_bus()];
    while let Some(u) = queue.pop_front() {
        for &(v, r, x) in adj.get(&u).map(Vec::as_slice).unwrap_or(&[]) {
            if !seen.contains(&v) {
                seen.push(v);
                edge.insert(v, (u, r, x));
                queue.push_back(v);
            }
        }
    }
    let path = |mut bus: usize| {
        let mut out = Vec::new();
        while bus != net.slack_bus() {
            out.push(bus);
            bus = edge[&bus].0;
        }
        out
    };
    let order = net.bus_order();
    let n = order.len();
    let mut r = vec![vec![0.0; n]; n];
    let mut x = vec![vec![0.0; n]; n];
    for (i, &a) in order.iter().enumerate() {
        let pa = path(a);
        for (l, &b) in order.iter().enumerate() {
            let pb = path(b);
            for bus in pa.iter().filter(|bus| pb.contains(bus)) {
                r[i][l] += 2.0 * edge[bus].1;
                x[i][l] += 2.0 * edge[bus].2;
            }
        }
    }
    (r, x)
}

/// A random radial feeder on buses `1..=n` rooted at bus 1.
pub fn random_feeder<R: Rng>(rng: &mut R, n: usize) -> Network {
    let buses = (1..=n)
        .map(|id| Bus {
            id,
            vmin_pu: 0.95,
            vmax_pu: 1.05,
        })
        .collect();
    let branches = (2..=n)
        .map(|to| Branch {
            from_bus: rng.random_range(1..to),
            to_bus: to,
            r: rng.random_range(0.0..0.1),
            x: rng.random_range(0.0..0.1),
        })
        .collect();
    Network::new(buses, 1, 1.0, branches).unwrap()
}
