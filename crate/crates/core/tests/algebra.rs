//! Closed forms against numerical integration, and distance matrices
//! against plain loops.

use gmbound::gm_algebra::{
    eval_density, gauss_inner, mixture_inner, mixture_moment, mixture_norm, Gaussian,
    GaussianMixture, Mode,
};
use gmbound::gram::{gauss_gram, joint_gram, pairwise_sq_dists};
use gmbound::linalg_ad::Graph;
use gmbound::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_mixture(rng: &mut ChaCha8Rng, d: usize) -> GaussianMixture {
    let k = rng.random_range(1..=3);
    let comps = (0..k)
        .map(|_| {
            let mean = (0..d).map(|_| rng.random_range(-1.5..1.5)).collect();
            if rng.random_bool(0.5) {
                Gaussian::isotropic(mean, rng.random_range(0.05..0.6)).unwrap()
            } else {
                Gaussian::diagonal(mean, (0..d).map(|_| rng.random_range(0.05..0.6)).collect())
                    .unwrap()
            }
        })
        .collect::<Vec<_>>();
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.2..1.0)).collect();
    let s: f64 = raw.iter().sum();
    GaussianMixture::new(comps, raw.iter().map(|w| w / s).collect(), Mode::True).unwrap()
}

/// Smallest standard deviation appearing in any component.
fn min_std(ps: &[&GaussianMixture]) -> f64 {
    let mut lo = f64::INFINITY;
    for p in ps {
        for c in p.components() {
            for l in 0..c.dim() {
                lo = lo.min(c.var(l).sqrt());
            }
        }
    }
    lo
}

/// Trapezoid rule on a uniform grid, which converges geometrically for
/// smooth integrands that decay to zero at the ends.
fn quad<F: Fn(&[f64]) -> f64>(d: usize, h: f64, lim: f64, f: F) -> f64 {
    let m = (2.0 * lim / h).ceil() as usize + 1;
    let pts: Vec<f64> = (0..m).map(|i| -lim + i as f64 * h).collect();
    let mut total = 0.0;
    match d {
        1 => {
            for &a in &pts {
                total += f(&[a]);
            }
            total * h
        }
        2 => {
            for &a in &pts {
                for &b in &pts {
                    total += f(&[a, b]);
                }
            }
            total * h * h
        }
        _ => unreachable!(),
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

#[test]
fn closed_forms_match_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    for case in 0..100 {
        let d = if case < 50 { 1 } else { 2 };
        let p = random_mixture(&mut rng, d);
        let q = random_mixture(&mut rng, d);
        // Integrands are products of up to three densities; σ/h ≥ 2.5 keeps the
        // trapezoid error far below 1e-10.
        let h = min_std(&[&p, &q]) / if d == 1 { 6.0 } else { 2.5 };
        let lim = 1.5 + 6.0 * 0.6f64.sqrt();
        let dens = |m: &GaussianMixture, x: &[f64]| eval_density(m, x).unwrap();
        let inner = quad(d, h, lim, |x| dens(&p, x) * dens(&q, x));
        let norm = quad(d, h, lim, |x| dens(&p, x).powi(2));
        let m3 = quad(d, h, lim, |x| dens(&p, x).powi(3));
        worst = worst
            .max(rel(mixture_inner(&p, &q).unwrap(), inner))
            .max(rel(mixture_norm(&p), norm))
            .max(rel(mixture_moment(&p, 3).unwrap(), m3));
        if d == 1 {
            let m4 = quad(d, h, lim, |x| dens(&p, x).powi(4));
            worst = worst.max(rel(mixture_moment(&p, 4).unwrap(), m4));
        }
    }
    assert!(worst < 1e-6, "worst relative error {worst:e}");
}

#[test]
fn moment_of_order_two_is_the_norm() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let p = random_mixture(&mut rng, 3);
        assert!(rel(mixture_moment(&p, 2).unwrap(), mixture_norm(&p)) < 1e-12);
    }
}

#[test]
fn stabilized_pair_drops_only_the_constant() {
    // With d = 1 the stabilized term is N(Δ; v_a + v_b)·√(2π(v_a + v_b)).
    let a = Gaussian::isotropic(vec![0.3], 0.2).unwrap();
    let b = Gaussian::isotropic(vec![-0.4], 0.1).unwrap();
    let t = gauss_inner(&a, &b, Mode::True).unwrap();
    let s = gauss_inner(&a, &b, Mode::Stabilized).unwrap();
    assert!(rel(s, t * (2.0 * std::f64::consts::PI * 0.3).sqrt()) < 1e-14);
}

#[test]
fn inner_product_is_exactly_symmetric() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..50 {
        let p = random_mixture(&mut rng, 2);
        let q = random_mixture(&mut rng, 2);
        assert_eq!(
            mixture_inner(&p, &q).unwrap(),
            mixture_inner(&q, &p).unwrap()
        );
    }
}

fn naive_dists(a: &Mat, b: &Mat) -> Mat {
    let d = a.ncols() as f64;
    Mat::from_fn(a.nrows(), b.nrows(), |i, j| {
        let mut s = 0.0;
        for l in 0..a.ncols() {
            let t = a[(i, l)] - b[(j, l)];
            s += t * t;
        }
        s / d
    })
}

fn random_mat(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Mat {
    Mat::from_fn(r, c, |_, _| rng.random_range(-2.0..2.0))
}

#[test]
fn distance_trick_matches_loops() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let (n, k, d) = (
            rng.random_range(1..40),
            rng.random_range(1..40),
            rng.random_range(1..30),
        );
        let a = random_mat(&mut rng, n, d);
        let b = random_mat(&mut rng, k, d);
        let oracle = naive_dists(&a, &b);
        let fast = pairwise_sq_dists(&a, &b).unwrap().values;
        let g = Graph::new();
        let t = g
            .constant(a.clone())
            .pairwise_sq_dists(g.constant(b.clone()))
            .value();
        let scale = oracle.norm().max(1e-300);
        assert!((&fast - &oracle).norm() / scale < 1e-10);
        assert!((t.as_ref() - &oracle).norm() / scale < 1e-10);
    }
}

#[test]
fn joint_gram_is_the_product_of_grams() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random_mat(&mut rng, 12, 3);
    let xp = random_mat(&mut rng, 12, 3);
    let y = random_mat(&mut rng, 12, 2);
    let yp = random_mat(&mut rng, 12, 2);
    let mx = pairwise_sq_dists(&x, &xp).unwrap();
    let my = pairwise_sq_dists(&y, &yp).unwrap();
    let joint = joint_gram(&mx, 0.3, &my, 0.7).unwrap().values;
    let prod = gauss_gram(&mx, 0.3)
        .unwrap()
        .values
        .component_mul(&gauss_gram(&my, 0.7).unwrap().values);
    assert!((joint - prod).amax() < 1e-15);
}
