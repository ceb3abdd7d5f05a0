#![allow(dead_code)]

use blscale_core::random::random_orthogonal;
use blscale_core::{make_random_feasible, make_random_feasible_with, CenteredGaussian, Matrix, NamedDatum};
use rand::Rng;

/// Adaptive Simpson quadrature on `[a, b]`.
pub fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn step(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) + step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    // Split first so a narrow peak cannot hide between the initial nodes.
    let pieces = 64;
    let h = (b - a) / pieces as f64;
    (0..pieces)
        .map(|i| {
            let (lo, hi) = (a + i as f64 * h, a + (i + 1) as f64 * h);
            let (fa, fm, fb) = (f(lo), f(0.5 * (lo + hi)), f(hi));
            let whole = (hi - lo) / 6.0 * (fa + 4.0 * fm + fb);
            step(f, lo, hi, fa, fm, fb, whole, tol / pieces as f64, 40)
        })
        .sum()
}

/// Half-width of a window outside which `exp(−π λ_min s²)` is below `e^{-45}`.
pub fn window(a: &Matrix<f64>) -> f64 {
    let lmin = blscale_core::linalg::sym_eig(a).unwrap().min_eigenvalue();
    (45.0 / (std::f64::consts::PI * lmin)).sqrt()
}

/// `∫_{ℝ^dim} g(x) dx` for dim ∈ {1, 2} over the window of `a`, which should
/// bound the decay of `g` from below.
pub fn integrate(dim: usize, a: &Matrix<f64>, g: &dyn Fn(&[f64]) -> f64) -> f64 {
    let w = window(a);
    match dim {
        1 => simpson(&|x| g(&[x]), -w, w, 1e-13),
        2 => simpson(
            &|x| simpson(&|y| g(&[x, y]), -w, w, 1e-11),
            -w,
            w,
            1e-10,
        ),
        _ => panic!("quadrature only in dimensions 1 and 2"),
    }
}

/// `(B_*f)(y)` for a `1×2` map by integrating `f` along the fibre `Bx = y`.
pub fn pushforward_density_1x2(b: &[f64; 2], f: &CenteredGaussian<f64>, y: f64) -> f64 {
    let norm = (b[0] * b[0] + b[1] * b[1]).sqrt();
    let base = [y * b[0] / (norm * norm), y * b[1] / (norm * norm)];
    let perp = [-b[1] / norm, b[0] / norm];
    let w = window(&f.a) + base[0].abs() + base[1].abs();
    simpson(
        &|t| f.eval(&[base[0] + t * perp[0], base[1] + t * perp[1]]),
        -w,
        w,
        1e-15,
    ) / norm
}

/// Symmetric positive definite `A` with `tr A = n` and `tr(A − I)² = ε`,
/// built as `Q diag(1 + √ε·v) Qᵀ` with `Σv = 0`, `|v| = 1`.
pub fn spd_with_defect<R: Rng>(rng: &mut R, n: usize, eps: f64) -> Matrix<f64> {
    loop {
        let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mean = v.iter().sum::<f64>() / n as f64;
        v.iter_mut().for_each(|x| *x -= mean);
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm < 1e-3 {
            continue;
        }
        let lambda: Vec<f64> = v.iter().map(|x| 1.0 + eps.sqrt() * x / norm).collect();
        if lambda.iter().any(|&l| l <= 0.0) {
            continue;
        }
        let q = random_orthogonal::<f64, _>(rng, n);
        return (&(&q * &Matrix::from_diagonal(&lambda)) * &q.transpose()).symmetrize();
    }
}

/// Shape of the `index`-th member of the seeded random ensemble, `n ∈ 2..=6`.
/// Two families alternate, both strictly inside the feasible region for
/// generic maps: `m ∈ n+1..=n+3` rank-one maps, or `m ∈ n+1..=n+2` maps of
/// rank `n − 1`; exponents are uniform, `c_j = n / (m·n_j)`.
pub fn ensemble_shape(index: u64) -> (usize, Vec<usize>, Vec<f64>) {
    let n = 2 + (index % 5) as usize;
    let corank_one = (index / 5) % 2 == 1 && n > 2;
    let (m, d) = if corank_one {
        (n + 1 + ((index / 10) % 2) as usize, n - 1)
    } else {
        (n + 1 + ((index / 10) % 3) as usize, 1)
    };
    (n, vec![d; m], vec![n as f64 / (m * d) as f64; m])
}

pub fn ensemble_member(index: u64) -> NamedDatum<f64> {
    let (n, dims, c) = ensemble_shape(index);
    make_random_feasible(n, dims.len(), &dims, &c, 1000 + index).unwrap()
}

pub fn geometric_member(index: u64) -> NamedDatum<f64> {
    let (n, dims, c) = ensemble_shape(index);
    make_random_feasible_with(n, dims.len(), &dims, &c, 1000 + index, None).unwrap()
}
