mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use voltrisk_core::density::{
    condition, fit_kde, gmm_eval, gmm_moments, negate, reduce_gmm, Component1, Gmm1,
};
use voltrisk_core::risk::{assess_bus, cvar_gmm, var_gmm};
use voltrisk_core::uvc::UvcSampleSet;
use voltrisk_core::validate::draw;

use common::{integrate, random_gmm1, random_gmm2, support};

fn sample_set<R: Rng>(rng: &mut R, n: usize) -> UvcSampleSet {
    let mut actual = Vec::with_capacity(n);
    let mut predicted = Vec::with_capacity(n);
    for _ in 0..n {
        let sunny = rng.random_bool(0.6);
        let p: f64 = if sunny { rng.random_range(0.7..1.0) } else { rng.random_range(0.0..0.5) };
        let z: f64 = StandardNormal.sample(rng);
        predicted.push(p);
        actual.push(p + 0.1 * z);
    }
    UvcSampleSet { bus: 18, hour: 13, actual, predicted }
}

#[test]
fn kde_integrates_to_one_and_keeps_sample_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let s = sample_set(&mut rng, 60);
    let g = fit_kde(&s).unwrap();
    let marginal = |vp: f64| integrate(&|v| g.pdf(v, vp), -2.0, 3.0, 1e-11);
    let mass = integrate(&marginal, -2.0, 3.0, 1e-9);
    assert!((mass - 1.0).abs() < 1e-6, "mass {mass}");
    let mean = g.mean();
    let n = s.actual.len() as f64;
    assert!((mean[0] - s.actual.iter().sum::<f64>() / n).abs() < 1e-14);
    assert!((mean[1] - s.predicted.iter().sum::<f64>() / n).abs() < 1e-14);
    for &vp in &s.predicted {
        assert!(g.marginal_pred_pdf(vp) > 0.0);
    }
}

#[test]
fn reduction_from_a_thousand_components_keeps_moments() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let g = fit_kde(&sample_set(&mut rng, 1000)).unwrap();
    assert_eq!(g.len(), 1000);
    let r = reduce_gmm(&g, 10).unwrap();
    assert_eq!(r.len(), 10);
    let (m0, m1) = (g.mean(), r.mean());
    let (s0, s1) = (g.second_moment(), r.second_moment());
    for a in 0..2 {
        assert!((m0[a] - m1[a]).abs() < 1e-10);
        for b in 0..2 {
            assert!((s0[a][b] - s1[a][b]).abs() < 1e-10);
        }
    }
    let w: f64 = r.components().iter().map(|c| c.w).sum();
    assert!((w - 1.0).abs() < 1e-12);
}

#[test]
fn conditional_density_is_the_joint_over_the_marginal() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let g = random_gmm2(&mut rng, 6);
        for &vp in &[-1.5, 0.0, 0.7, 2.5] {
            let c = condition(&g, vp).unwrap();
            let m = g.marginal_pred_pdf(vp);
            for k in 0..=60 {
                let v = -4.0 + k as f64 * 8.0 / 60.0;
                let ratio = g.pdf(v, vp) / m;
                assert!((c.pdf(v) - ratio).abs() <= 1e-10 * ratio.max(1.0));
            }
        }
    }
}

#[test]
fn conditional_moments_match_rejection_sampling() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let g = fit_kde(&sample_set(&mut rng, 400)).and_then(|k| reduce_gmm(&k, 10)).unwrap();
    let vp = 0.8;
    let c = condition(&g, vp).unwrap();
    let (mean, var) = gmm_moments(&c);
    // Exact rejection sampling of f(v | vp) ∝ f(v, vp) under a uniform
    // proposal on a box holding all but a negligible tail.
    let (lo, hi) = (mean - 12.0 * var.sqrt(), mean + 12.0 * var.sqrt());
    let peak = (0..4000)
        .map(|k| g.pdf(lo + (hi - lo) * k as f64 / 3999.0, vp))
        .fold(0.0, f64::max)
        * 1.05;
    let mut accepted = Vec::new();
    for _ in 0..1_000_000 {
        let v = rng.random_range(lo..hi);
        if rng.random::<f64>() * peak < g.pdf(v, vp) {
            accepted.push(v);
        }
    }
    let n = accepted.len() as f64;
    let m = accepted.iter().sum::<f64>() / n;
    let s2 = accepted.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
    let m4 = accepted.iter().map(|v| (v - m).powi(4)).sum::<f64>() / n;
    assert!((m - mean).abs() < 3.0 * (s2 / n).sqrt(), "mean {m} vs {mean}");
    assert!((s2 - var).abs() < 3.0 * ((m4 - s2 * s2) / n).sqrt(), "var {s2} vs {var}");
}

#[test]
fn mixture_cdf_matches_empirical_cdf() {
    let g = Gmm1::new(vec![
        Component1 { w: 0.35, mu: -1.0, var: 0.2 },
        Component1 { w: 0.65, mu: 1.5, var: 0.6 },
    ])
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut xs: Vec<f64> = (0..1_000_000).map(|_| draw(&g, &mut rng)).collect();
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut sup: f64 = 0.0;
    for (k, &x) in xs.iter().enumerate().step_by(97) {
        let f = gmm_eval(&g, x).1;
        sup = sup.max((f - k as f64 / n).abs()).max((f - (k + 1) as f64 / n).abs());
    }
    assert!(sup < 0.002, "sup distance {sup}");
}

#[test]
fn saa_matches_var_and_cvar() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..5 {
        let g = random_gmm1(&mut rng, 5);
        let tau = 0.95;
        let mut xs: Vec<f64> = (0..1_000_000).map(|_| draw(&g, &mut rng)).collect();
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        let var = var_gmm(&g, tau).unwrap();
        let cvar = cvar_gmm(&g, tau).unwrap();
        // Quantile standard error via the density at the quantile.
        let se_q = (tau * (1.0 - tau) / n).sqrt() / g.pdf(var);
        let q = xs[(tau * n) as usize];
        assert!((q - var).abs() < 4.0 * se_q, "quantile {q} vs {var}");
        let tail: Vec<f64> = xs.iter().copied().filter(|&x| x >= var).collect();
        let m = tail.iter().sum::<f64>() / tail.len() as f64;
        let sd = (tail.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / tail.len() as f64).sqrt();
        assert!((m - cvar).abs() < 4.0 * sd / (tail.len() as f64).sqrt() + 4.0 * se_q, "tail mean {m} vs {cvar}");
    }
}

#[test]
fn cvar_equals_tail_integral() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for _ in 0..50 {
        let g = random_gmm1(&mut rng, 10);
        for tau in [0.9, 0.95, 0.99] {
            let var = var_gmm(&g, tau).unwrap();
            let (_, hi) = support(&g, 40.0);
            let tail = integrate(&|x| x * g.pdf(x), var, hi, 1e-13) / (1.0 - tau);
            let cvar = cvar_gmm(&g, tau).unwrap();
            assert!((cvar - tail).abs() <= 1e-6 * tail.abs(), "{cvar} vs {tail}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn produced_mixtures_are_valid(seed in any::<u64>(), vp in -3.0f64..3.0, k in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_gmm2(&mut rng, 12);
        let r = reduce_gmm(&g, k.min(g.len())).unwrap();
        prop_assert!(r.len() <= g.len());
        let w: f64 = r.components().iter().map(|c| c.w).sum();
        prop_assert!((w - 1.0).abs() < 1e-12);
        for c in r.components() {
            prop_assert!(c.cov[0][0] > 0.0 && c.cov[0][0] * c.cov[1][1] - c.cov[0][1] * c.cov[1][0] > 0.0);
        }
        let (m0, m1) = (g.mean(), r.mean());
        let (s0, s1) = (g.second_moment(), r.second_moment());
        for a in 0..2 {
            prop_assert!((m0[a] - m1[a]).abs() < 1e-10);
            for b in 0..2 {
                prop_assert!((s0[a][b] - s1[a][b]).abs() < 1e-10);
            }
        }
        let c = condition(&r, vp).unwrap();
        let w: f64 = c.components().iter().map(|c| c.w).sum();
        prop_assert!((w - 1.0).abs() < 1e-12);
        let (_, var) = gmm_moments(&c);
        let floor = c.components().iter().map(|c| c.var).fold(f64::MAX, f64::min);
        prop_assert!(var >= floor * (1.0 - 1e-12));
    }

    #[test]
    fn quantiles_are_consistent(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_gmm1(&mut rng, 10);
        let mut last = f64::NEG_INFINITY;
        for tau in [0.5, 0.9, 0.95, 0.99] {
            let v = var_gmm(&g, tau).unwrap();
            prop_assert!((g.cdf(v) - tau).abs() <= 1e-10);
            prop_assert!(v >= last);
            prop_assert!(cvar_gmm(&g, tau).unwrap() >= v);
            last = v;
        }
    }

    #[test]
    fn risk_is_equivariant(seed in any::<u64>(), a in 0.1f64..5.0, b in -3.0f64..3.0, tau in 0.6f64..0.99) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_gmm1(&mut rng, 6);
        let t = g.affine(a, b).unwrap();
        let (v, vt) = (var_gmm(&g, tau).unwrap(), var_gmm(&t, tau).unwrap());
        prop_assert!((vt - (a * v + b)).abs() < 1e-8 * (1.0 + vt.abs()));
        let (c, ct) = (cvar_gmm(&g, tau).unwrap(), cvar_gmm(&t, tau).unwrap());
        prop_assert!((ct - (a * c + b)).abs() < 1e-9 * (1.0 + ct.abs()));
        let base = assess_bus(&g, tau, 0.0, 0.0).unwrap();
        let shifted = assess_bus(&g, tau, 0.0, b).unwrap();
        prop_assert_eq!(shifted.var_upper, base.var_upper + b);
        prop_assert_eq!(shifted.cvar_lower, base.cvar_lower + b);
    }

    #[test]
    fn negation_is_a_reflection(seed in any::<u64>(), x in -5.0f64..5.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let g = random_gmm1(&mut rng, 6);
        let n = negate(&g);
        prop_assert!((n.cdf(x) - (1.0 - g.cdf(-x))).abs() <= 1e-12);
        prop_assert_eq!(negate(&n), g);
    }
}
