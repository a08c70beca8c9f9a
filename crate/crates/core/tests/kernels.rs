//! Kernel evaluations checked against independent numerical oracles.

use std::f64::consts::PI;

use coalesce::kernels::{coalescence_probability, gaussian_density, q_density};
use coalesce::rng::AuxStream;
use coalesce::{KernelContext, PeriodicFunction};

/// Composite Simpson rule with `n` (even) intervals.
fn simpson<F: Fn(f64) -> f64>(a: f64, b: f64, n: usize, f: F) -> f64 {
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(a + i as f64 * h);
    }
    s * h / 3.0
}

/// rho2 with the inner Gaussian integral done by brute-force quadrature
/// instead of erfc.
fn rho2_oracle(t: f64, z: f64) -> f64 {
    let lo = z / t.sqrt();
    let tail = if lo > 40.0 {
        0.0
    } else {
        simpson(lo, lo.max(0.0) + 40.0, 400_000, |v| (-v * v / 4.0).exp())
    };
    (1.0 + z / (2.0 * t.sqrt()) * (-z * z / (4.0 * t)).exp() * tail - (-z * z / (2.0 * t)).exp())
        / (PI * t)
}

fn g_oracle(t: f64, x: f64) -> f64 {
    rho2_oracle(t, x.abs()) - 1.0 / (PI * t)
}

/// `int_R g(x) cos(2 pi k x) dx`, twice the half-line integral.
fn g_fourier(t: f64, k: f64) -> f64 {
    let x_max = 14.0 * t.sqrt();
    2.0 * simpson(0.0, x_max, 40_000, |x| {
        g_oracle_fast(t, x) * (2.0 * PI * k * x).cos()
    })
}

fn g_oracle_fast(t: f64, x: f64) -> f64 {
    coalesce::kernels::pair_correlation(t, x)
}

#[test]
fn rho2_matches_integral_form() {
    for t in [0.3, 1.0, 2.5] {
        let ctx = KernelContext::new(t).unwrap();
        for z in [0.0, 0.05, 0.25, 0.5, 1.0, 2.0, 4.0] {
            let a = ctx.rho2(1.0, 1.0 + z);
            let b = rho2_oracle(t, z);
            assert!((a - b).abs() < 1e-11, "t={t} z={z}: {a} vs {b}");
        }
    }
}

#[test]
fn g_kernel_two_truncations_agree() {
    let a = KernelContext::with_truncation(1.0, 50, 64, 1e-10).unwrap();
    let b = KernelContext::with_truncation(1.0, 10, 64, 1e-10).unwrap();
    assert!((a.g_kernel(0.0, 0.0) - b.g_kernel(0.0, 0.0)).abs() <= 1e-10);
}

#[test]
fn g_kernel_matches_high_resolution_oracle() {
    let t = 2.0;
    let ctx = KernelContext::new(t).unwrap();
    let d = 0.2 - 0.8;
    let mut oracle = g_oracle(t, d);
    for l in 1..=200 {
        oracle += 2.0 * g_oracle(t, d + l as f64);
    }
    assert!((ctx.g_kernel(0.2, 0.8) - oracle).abs() < 1e-9);
}

#[test]
fn sigma2_of_trig_matches_fourier_oracle() {
    for t in [0.5, 1.0, 2.0] {
        let ctx = KernelContext::new(t).unwrap();
        for k in [1u32, 2, 5] {
            let f = PeriodicFunction::cos(k);
            let oracle = 0.5 * g_fourier(t, k as f64) + 0.5 / (PI * t).sqrt();
            let got = ctx.sigma2(&f).unwrap();
            assert!((got - oracle).abs() < 1e-9, "t={t} k={k}: {got} vs {oracle}");
            let s = PeriodicFunction::sin(k);
            assert!((ctx.sigma2(&s).unwrap() - oracle).abs() < 1e-9);
        }
    }
}

#[test]
fn cov_zeta_of_distinct_frequencies_vanishes() {
    let ctx = KernelContext::new(1.0).unwrap();
    let c = ctx
        .cov_zeta(&PeriodicFunction::cos(1), &PeriodicFunction::cos(2))
        .unwrap();
    assert!(c.abs() < 1e-12);
    let c = ctx
        .cov_zeta(&PeriodicFunction::cos(3), &PeriodicFunction::sin(3))
        .unwrap();
    assert!(c.abs() < 1e-12);
}

#[test]
fn bilinear_for_nonsmooth_functions_matches_direct_double_integral() {
    // Direct 2D midpoint sum on a fine grid converges at second order; the
    // comparison tolerance reflects that, not the library's accuracy.
    let ctx = KernelContext::new(1.0).unwrap();
    let f = PeriodicFunction::hat(0.2).unwrap();
    let h = PeriodicFunction::table(vec![(0.0, 0.0), (0.3, 1.0), (0.6, -0.5), (1.0, 0.0)]).unwrap();
    let n = 1200;
    let mut direct = 0.0;
    for i in 0..n {
        let u = (i as f64 + 0.5) / n as f64;
        for j in 0..n {
            let v = (j as f64 + 0.5) / n as f64;
            direct += f.eval(u) * h.eval(v) * ctx.periodized(u - v);
        }
    }
    direct /= (n * n) as f64;
    let got = ctx.kernel_bilinear(&f, &h);
    assert!((got - direct).abs() < 2e-6, "{got} vs {direct}");
}

#[test]
fn sigma2_nonnegative_on_random_family() {
    let ctx = KernelContext::new(1.0).unwrap();
    let mut rng = AuxStream::new(99, 1);
    for _ in 0..50 {
        let nodes = 2 + rng.below(6);
        let mut xs: Vec<f64> = (0..nodes).map(|_| rng.uniform()).collect();
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut pts = vec![(0.0, rng.normal())];
        for x in xs {
            if x > pts.last().unwrap().0 + 1e-3 && x < 1.0 - 1e-3 {
                pts.push((x, rng.normal()));
            }
        }
        pts.push((1.0, pts[0].1));
        let f = PeriodicFunction::table(pts).unwrap();
        assert!(ctx.sigma2(&f).unwrap() >= 0.0);
    }
}

#[test]
fn bilinear_matrix_agrees_with_pairwise_evaluation() {
    let ctx = KernelContext::new(1.0).unwrap();
    let trig: Vec<PeriodicFunction> = vec![
        PeriodicFunction::constant(1.0),
        PeriodicFunction::cos(1).scaled(2f64.sqrt()),
        PeriodicFunction::sin(1).scaled(2f64.sqrt()),
        PeriodicFunction::cos(4).scaled(2f64.sqrt()),
        PeriodicFunction::sin(7).scaled(2f64.sqrt()),
    ];
    let m = ctx.kernel_bilinear_matrix(&trig);
    for i in 0..trig.len() {
        for j in 0..trig.len() {
            let v = 0.5 * (ctx.kernel_bilinear(&trig[i], &trig[j]) + ctx.kernel_bilinear(&trig[j], &trig[i]));
            assert!((m[(i, j)] - v).abs() < 1e-10, "({i},{j}) {} vs {v}", m[(i, j)]);
        }
    }
    let haar: Vec<PeriodicFunction> = vec![
        PeriodicFunction::constant(1.0),
        PeriodicFunction::haar(0, 0).unwrap(),
        PeriodicFunction::haar(1, 1).unwrap(),
        PeriodicFunction::haar(3, 2).unwrap(),
        PeriodicFunction::haar(3, 5).unwrap(),
    ];
    let m = ctx.kernel_bilinear_matrix(&haar);
    for i in 0..haar.len() {
        for j in 0..haar.len() {
            let v = 0.5 * (ctx.kernel_bilinear(&haar[i], &haar[j]) + ctx.kernel_bilinear(&haar[j], &haar[i]));
            assert!((m[(i, j)] - v).abs() < 1e-10, "({i},{j}) {} vs {v}", m[(i, j)]);
        }
    }
}

#[test]
fn mixing_integral_form_matches_quadrature() {
    let ctx = KernelContext::new(1.0).unwrap();
    for h in [1.0, 2.0, 5.0] {
        let b = ctx.mixing_bound(h).unwrap();
        let numeric = 4.0
            * simpson(h / 3.0, h / 3.0 + 40.0, 40_000, |x| {
                (-x * x / 2.0).exp() / (2.0 * PI).sqrt()
            });
        assert!((b.integral_form - numeric).abs() < 1e-10);
        assert!(numeric <= b.closed_form);
    }
}

/// q via the hitting-time integral in the original variable `r`, with the
/// substitution `r = s w^2` and Simpson's rule.
fn q_oracle(s: f64, a: f64, b: f64, u: f64) -> f64 {
    let z = b - a;
    let mid = 0.5 * (a + b);
    simpson(0.0, 1.0, 20_000, |w| {
        if w == 0.0 {
            return 0.0;
        }
        let r = s * w * w;
        let hit = z / (4.0 * PI * r.powi(3)).sqrt() * (-z * z / (4.0 * r)).exp();
        hit * gaussian_density(mid, s - 0.5 * r, u) * 2.0 * s * w
    })
}

#[test]
fn q_density_matches_direct_hitting_integral() {
    for (s, a, b) in [(1.0, 0.0, 1.0), (0.5, -0.2, 0.3), (2.0, 1.0, 3.5)] {
        for u in [-1.0, 0.0, 0.5, 1.2, 3.0] {
            let q = q_density(s, a, b, u).unwrap();
            let o = q_oracle(s, a, b, u);
            assert!((q - o).abs() < 1e-8, "s={s} a={a} b={b} u={u}: {q} vs {o}");
        }
    }
}

#[test]
fn q_density_mass_and_domination() {
    for (s, a, b) in [(1.0, 0.0, 1.0), (0.5, 0.0, 0.1), (0.3, 2.0, 3.0)] {
        let mass = simpson(a - 12.0, b + 12.0, 6000, |u| q_density(s, a, b, u).unwrap());
        assert!((mass - coalescence_probability(s, b - a)).abs() < 1e-8);
        for i in 0..=60 {
            let u = a - 3.0 + 0.1 * i as f64 + 0.1 * (b - a);
            let q = q_density(s, a, b, u).unwrap();
            assert!(q <= gaussian_density(a, s, u) + 1e-15);
            assert!(q <= gaussian_density(b, s, u) + 1e-15, "s={s} a={a} b={b} u={u} q={q} p={}", gaussian_density(b, s, u));
        }
    }
    let s: f64 = 0.4;
    let far = 10.0 * s.sqrt();
    let mass = simpson(-10.0, far + 10.0, 4000, |u| q_density(s, 0.0, far, u).unwrap());
    assert!(mass <= 1e-8);
}
