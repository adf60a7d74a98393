//! Helpers shared by the oracle tests: random instances, rejection sampling,
//! a planar convex hull and a derivative-free quadratic minimizer.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector, RowDVector};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use zonodiff::{Strip, Zonotope};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.gen_range(-scale..scale))
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.gen_range(-scale..scale))
}

pub fn random_zonotope(rng: &mut ChaCha8Rng, n: usize, e: usize) -> Zonotope {
    Zonotope::new(random_vector(rng, n, 2.0), random_matrix(rng, n, e, 1.0)).unwrap()
}

pub fn random_beta(rng: &mut ChaCha8Rng, e: usize) -> DVector<f64> {
    DVector::from_fn(e, |_, _| rng.gen_range(-1.0..=1.0))
}

pub fn point_at(z: &Zonotope, beta: &DVector<f64>) -> DVector<f64> {
    z.center() + z.generators() * beta
}

pub fn sample(rng: &mut ChaCha8Rng, z: &Zonotope) -> DVector<f64> {
    let beta = random_beta(rng, z.num_generators());
    point_at(z, &beta)
}

/// `c + G·s` for a uniformly drawn sign vector `s ∈ {−1, 1}^e`.
pub fn sample_corner(rng: &mut ChaCha8Rng, z: &Zonotope) -> DVector<f64> {
    let signs = DVector::from_fn(z.num_generators(), |_, _| if rng.gen_bool(0.5) { 1.0 } else { -1.0 });
    point_at(z, &signs)
}

/// A strip through a point of `z`, so `z ∩ strip` is never empty.
pub fn random_strip_through(rng: &mut ChaCha8Rng, z: &Zonotope, axis_aligned: bool) -> Strip {
    let n = z.dim();
    let h = if axis_aligned {
        let mut h = RowDVector::zeros(n);
        h[rng.gen_range(0..n)] = 1.0;
        h
    } else {
        loop {
            let h = RowDVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
            if h.norm() > 0.1 {
                break h;
            }
        }
    };
    let x = sample(rng, z);
    let r = rng.gen_range(0.05..1.0);
    let y = (&h * &x)[0] + r * rng.gen_range(-1.0..1.0);
    Strip::new(h, y, r).unwrap()
}

/// Points of `z` that satisfy every predicate, by rejection sampling.
pub fn rejection_sample(
    rng: &mut ChaCha8Rng,
    z: &Zonotope,
    wanted: usize,
    max_tries: usize,
    keep: impl Fn(&DVector<f64>) -> bool,
) -> Vec<DVector<f64>> {
    let mut out = Vec::new();
    for _ in 0..max_tries {
        if out.len() == wanted {
            break;
        }
        let x = sample(rng, z);
        if keep(&x) {
            out.push(x);
        }
    }
    out
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Counter-clockwise convex hull (Andrew's monotone chain), collinear points dropped.
pub fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 1e-12 {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

pub fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        / 2.0
}

/// Hausdorff distance by the textbook double loop.
pub fn brute_hausdorff(a: &[[f64; 2]], b: &[[f64; 2]]) -> f64 {
    let dist = |p: &[f64; 2], q: &[f64; 2]| ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
    let mut worst = 0.0_f64;
    for p in a {
        let mut best = f64::INFINITY;
        for q in b {
            best = best.min(dist(p, q));
        }
        worst = worst.max(best);
    }
    for q in b {
        let mut best = f64::INFINITY;
        for p in a {
            best = best.min(dist(p, q));
        }
        worst = worst.max(best);
    }
    worst
}

pub fn frobenius_sq(m: &DMatrix<f64>) -> f64 {
    m.iter().map(|v| v * v).sum()
}

/// Central-difference gradient.
pub fn fd_gradient(f: &dyn Fn(&DVector<f64>) -> f64, x: &DVector<f64>, h: f64) -> DVector<f64> {
    DVector::from_fn(x.len(), |i, _| {
        let mut plus = x.clone();
        let mut minus = x.clone();
        plus[i] += h;
        minus[i] -= h;
        (f(&plus) - f(&minus)) / (2.0 * h)
    })
}

/// Minimizes a convex quadratic using only function values: conjugate
/// gradients with central-difference gradients and an exact parabolic line
/// search. Exact in at most `dim` iterations up to rounding; restarted a few
/// times to wash rounding out.
pub fn minimize_quadratic(f: &dyn Fn(&DVector<f64>) -> f64, x0: &DVector<f64>) -> DVector<f64> {
    let mut x = x0.clone();
    let h = 1e-4;
    for _restart in 0..4 {
        let mut g = fd_gradient(f, &x, h);
        let mut d = -&g;
        for _ in 0..x.len() {
            if g.norm() < 1e-13 {
                break;
            }
            // f(x + t d) = a t² + b t + c; a and b from three samples.
            let scale = 1.0 / d.norm().max(1e-300);
            let f0 = f(&x);
            let fp = f(&(&x + &d * scale));
            let fm = f(&(&x - &d * scale));
            let a = (fp + fm - 2.0 * f0) / (2.0 * scale * scale);
            let b = (fp - fm) / (2.0 * scale);
            if a <= 0.0 {
                break;
            }
            let t = -b / (2.0 * a);
            x += &d * t;
            let g_new = fd_gradient(f, &x, h);
            let beta = (g_new.dot(&g_new) / g.dot(&g)).max(0.0);
            d = -&g_new + d * beta;
            g = g_new;
        }
    }
    x
}

/// Golden-section search for the minimum of a unimodal function on [lo, hi].
pub fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - ratio * (hi - lo);
    let mut b = lo + ratio * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..200 {
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - ratio * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + ratio * (hi - lo);
            fb = f(b);
        }
    }
    (lo + hi) / 2.0
}
