//! Shared numerical oracles: grid and Monte Carlo integration, finite
//! differences, Hessian sup-norm estimation, and exact small-N optimal
//! transport.
//!
//! These routines are deliberately independent of the kernel/measure/field
//! machinery so they can serve as cross-checks for it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vecops;

/// Default central-difference step for first-order quantities.
pub fn fd_step(z: &[f64]) -> f64 {
    1e-4 * (1.0 + vecops::norm(z))
}

/// Default step for finite-difference Hessians (coarser: second differences
/// lose more bits to cancellation).
pub fn hessian_step(z: &[f64]) -> f64 {
    1e-3 * (1.0 + vecops::norm(z))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuadratureRule {
    Trapezoid,
    Simpson,
}

/// Tensor-product quadrature grid on a box, d <= 2.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub points_per_dim: usize,
    pub rule: QuadratureRule,
}

impl GridSpec {
    pub fn new(
        lo: Vec<f64>,
        hi: Vec<f64>,
        points_per_dim: usize,
        rule: QuadratureRule,
    ) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::InvalidParameter(
                "grid bounds must share a nonzero dimension".into(),
            ));
        }
        if lo.iter().zip(&hi).any(|(a, b)| !(a < b)) {
            return Err(Error::InvalidParameter(
                "grid requires lo < hi componentwise".into(),
            ));
        }
        if points_per_dim < 16 {
            return Err(Error::InvalidParameter(
                "grid requires points_per_dim >= 16".into(),
            ));
        }
        if rule == QuadratureRule::Simpson && points_per_dim % 2 == 0 {
            return Err(Error::InvalidParameter(
                "Simpson rule requires an odd points_per_dim".into(),
            ));
        }
        Ok(GridSpec {
            lo,
            hi,
            points_per_dim,
            rule,
        })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    /// Grid nodes along one axis.
    pub fn axis_nodes(&self, axis: usize) -> Vec<f64> {
        let n = self.points_per_dim;
        let (a, b) = (self.lo[axis], self.hi[axis]);
        let step = (b - a) / (n - 1) as f64;
        (0..n).map(|i| a + i as f64 * step).collect()
    }
}

fn axis_weights(rule: QuadratureRule, n: usize, step: f64) -> Vec<f64> {
    match rule {
        QuadratureRule::Trapezoid => (0..n)
            .map(|i| {
                if i == 0 || i == n - 1 {
                    0.5 * step
                } else {
                    step
                }
            })
            .collect(),
        QuadratureRule::Simpson => (0..n)
            .map(|i| {
                let w = if i == 0 || i == n - 1 {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                w * step / 3.0
            })
            .collect(),
    }
}

/// Composite quadrature of a scalar field over the grid box.
///
/// Returns `(value, refinement_error)` where the error estimate is the
/// difference against the integral recomputed on the stride-2 subgrid
/// (same rule when the subgrid keeps Simpson parity, trapezoid otherwise).
pub fn grid_integrate<F: Fn(&[f64]) -> f64>(f: F, grid: &GridSpec) -> Result<(f64, f64)> {
    let d = grid.dim();
    if d > 2 {
        return Err(Error::UnsupportedDimension {
            dim: d,
            op: "grid_integrate",
        });
    }
    let n = grid.points_per_dim;
    let nodes: Vec<Vec<f64>> = (0..d).map(|a| grid.axis_nodes(a)).collect();
    let steps: Vec<f64> = (0..d)
        .map(|a| (grid.hi[a] - grid.lo[a]) / (n - 1) as f64)
        .collect();

    // Evaluate once; both the fine and the coarse sums reuse the samples.
    let values: Vec<f64> = match d {
        1 => nodes[0].iter().map(|&x| f(&[x])).collect(),
        _ => {
            let mut v = Vec::with_capacity(n * n);
            for &x in &nodes[0] {
                for &y in &nodes[1] {
                    v.push(f(&[x, y]));
                }
            }
            v
        }
    };
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("grid_integrate sample"));
    }

    let fine = weighted_sum(&values, grid.rule, n, &steps, d, 1);

    // Coarse pass: every other node. (n-1) is even for odd n, so the stride-2
    // subgrid always exists; it keeps Simpson parity only when (n-1) % 4 == 0.
    let coarse = if (n - 1) % 2 == 0 {
        let rule = if grid.rule == QuadratureRule::Simpson && (n - 1) % 4 == 0 {
            QuadratureRule::Simpson
        } else {
            QuadratureRule::Trapezoid
        };
        let nc = (n - 1) / 2 + 1;
        let cs: Vec<f64> = steps.iter().map(|s| 2.0 * s).collect();
        let cvals: Vec<f64> = match d {
            1 => (0..nc).map(|i| values[2 * i]).collect(),
            _ => {
                let mut v = Vec::with_capacity(nc * nc);
                for i in 0..nc {
                    for j in 0..nc {
                        v.push(values[2 * i * n + 2 * j]);
                    }
                }
                v
            }
        };
        weighted_sum(&cvals, rule, nc, &cs, d, 1)
    } else {
        fine
    };

    Ok((fine, (fine - coarse).abs()))
}

fn weighted_sum(
    values: &[f64],
    rule: QuadratureRule,
    n: usize,
    steps: &[f64],
    d: usize,
    _stride: usize,
) -> f64 {
    match d {
        1 => {
            let w = axis_weights(rule, n, steps[0]);
            values.iter().zip(&w).map(|(v, w)| v * w).sum()
        }
        _ => {
            let wx = axis_weights(rule, n, steps[0]);
            let wy = axis_weights(rule, n, steps[1]);
            let mut total = 0.0;
            for i in 0..n {
                let mut row = 0.0;
                for j in 0..n {
                    row += values[i * n + j] * wy[j];
                }
                total += row * wx[i];
            }
            total
        }
    }
}

/// Importance-sampling Monte Carlo: mean of `f/weight` under the sampler,
/// with its standard error. The weight must be the sampler's density.
pub fn mc_integrate<F, S, W>(
    f: F,
    mut sampler: S,
    weight: W,
    n: usize,
    seed: u64,
) -> Result<(f64, f64)>
where
    F: Fn(&[f64]) -> f64,
    S: FnMut(&mut ChaCha8Rng) -> Vec<f64>,
    W: Fn(&[f64]) -> f64,
{
    if n == 0 {
        return Err(Error::InvalidParameter(
            "mc_integrate requires n >= 1".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n {
        let z = sampler(&mut rng);
        let w = weight(&z);
        if !(w > 0.0) {
            return Err(Error::SingularDenominator {
                context: "mc_integrate weight",
                value: w,
            });
        }
        let v = f(&z) / w;
        if !v.is_finite() {
            return Err(Error::NonFinite("mc_integrate sample"));
        }
        sum += v;
        sum_sq += v * v;
    }
    let nf = n as f64;
    let mean = sum / nf;
    let var = if n > 1 {
        (sum_sq - nf * mean * mean).max(0.0) / (nf - 1.0)
    } else {
        0.0
    };
    Ok((mean, (var / nf).sqrt()))
}

/// Central-difference gradient of a scalar field.
pub fn fd_gradient<F: Fn(&[f64]) -> f64>(f: F, z: &[f64], step: f64) -> Result<Vec<f64>> {
    let mut g = Vec::with_capacity(z.len());
    let mut zp = z.to_vec();
    for i in 0..z.len() {
        zp[i] = z[i] + step;
        let fp = f(&zp);
        zp[i] = z[i] - step;
        let fm = f(&zp);
        zp[i] = z[i];
        let gi = (fp - fm) / (2.0 * step);
        if !gi.is_finite() {
            return Err(Error::NonFinite("fd_gradient stencil"));
        }
        g.push(gi);
    }
    Ok(g)
}

/// Central-difference divergence of a vector field.
pub fn fd_divergence<F: Fn(&[f64]) -> Vec<f64>>(f: F, z: &[f64], step: f64) -> Result<f64> {
    let mut div = 0.0;
    let mut zp = z.to_vec();
    for i in 0..z.len() {
        zp[i] = z[i] + step;
        let fp = f(&zp)[i];
        zp[i] = z[i] - step;
        let fm = f(&zp)[i];
        zp[i] = z[i];
        let t = (fp - fm) / (2.0 * step);
        if !t.is_finite() {
            return Err(Error::NonFinite("fd_divergence stencil"));
        }
        div += t;
    }
    Ok(div)
}

/// Central-difference Hessian of a scalar field, symmetric by construction.
pub fn fd_hessian<F: Fn(&[f64]) -> f64>(f: F, z: &[f64], step: f64) -> Result<Vec<Vec<f64>>> {
    let d = z.len();
    let f0 = f(z);
    let mut h = vec![vec![0.0; d]; d];
    let mut zp = z.to_vec();
    for i in 0..d {
        zp[i] = z[i] + step;
        let fp = f(&zp);
        zp[i] = z[i] - step;
        let fm = f(&zp);
        zp[i] = z[i];
        h[i][i] = (fp - 2.0 * f0 + fm) / (step * step);
    }
    for i in 0..d {
        for j in (i + 1)..d {
            zp[i] = z[i] + step;
            zp[j] = z[j] + step;
            let fpp = f(&zp);
            zp[j] = z[j] - step;
            let fpm = f(&zp);
            zp[i] = z[i] - step;
            let fmm = f(&zp);
            zp[j] = z[j] + step;
            let fmp = f(&zp);
            zp[i] = z[i];
            zp[j] = z[j];
            let v = (fpp - fpm - fmp + fmm) / (4.0 * step * step);
            h[i][j] = v;
            h[j][i] = v;
        }
    }
    if h.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("fd_hessian stencil"));
    }
    Ok(h)
}

/// Operator norm of a symmetric matrix, closed form for d <= 2.
fn sym_opnorm(h: &[Vec<f64>]) -> Result<f64> {
    match h.len() {
        1 => Ok(h[0][0].abs()),
        2 => {
            let (a, b, c) = (h[0][0], h[0][1], h[1][1]);
            let mid = 0.5 * (a + c);
            let rad = (0.25 * (a - c) * (a - c) + b * b).sqrt();
            Ok((mid + rad).abs().max((mid - rad).abs()))
        }
        d => Err(Error::UnsupportedDimension {
            dim: d,
            op: "sym_opnorm",
        }),
    }
}

/// Max over grid nodes of the finite-difference Hessian operator norm.
pub fn hessian_sup_estimate<F: Fn(&[f64]) -> f64>(f: F, grid: &GridSpec, step: f64) -> Result<f64> {
    let d = grid.dim();
    if d > 2 {
        return Err(Error::UnsupportedDimension {
            dim: d,
            op: "hessian_sup_estimate",
        });
    }
    let mut sup: f64 = 0.0;
    match d {
        1 => {
            for x in grid.axis_nodes(0) {
                let h = fd_hessian(&f, &[x], step)?;
                sup = sup.max(sym_opnorm(&h)?);
            }
        }
        _ => {
            let xs = grid.axis_nodes(0);
            let ys = grid.axis_nodes(1);
            for &x in &xs {
                for &y in &ys {
                    let h = fd_hessian(&f, &[x, y], step)?;
                    sup = sup.max(sym_opnorm(&h)?);
                }
            }
        }
    }
    Ok(sup)
}

/// Exact W2 between two equal-size uniform point clouds, via a shortest
/// augmenting path assignment on the squared-distance cost matrix.
pub fn exact_w2_empirical(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::SizeMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let n = a.len();
    if n == 0 {
        return Err(Error::InvalidParameter(
            "exact_w2_empirical requires nonempty clouds".into(),
        ));
    }
    if n > 256 {
        return Err(Error::InvalidParameter(
            "exact_w2_empirical supports at most 256 points".into(),
        ));
    }
    let d = a[0].len();
    if a.iter().chain(b.iter()).any(|p| p.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: 0,
        });
    }

    let cost: Vec<Vec<f64>> = a
        .iter()
        .map(|p| b.iter().map(|q| vecops::dist(p, q).powi(2)).collect())
        .collect();

    let assignment = min_cost_assignment(&cost);
    let total: f64 = assignment
        .iter()
        .enumerate()
        .map(|(i, &j)| cost[i][j])
        .sum();
    Ok((total / n as f64).sqrt())
}

/// Shortest augmenting path (Jonker-Volgenant style) minimum-cost perfect
/// matching on a square cost matrix; returns column assigned to each row.
fn min_cost_assignment(cost: &[Vec<f64>]) -> Vec<usize> {
    let n = cost.len();
    // 1-based arrays; index 0 is the virtual root column.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];

    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }

    let mut row_to_col = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            row_to_col[p[j] - 1] = j - 1;
        }
    }
    row_to_col
}

/// Adaptive Simpson quadrature on [a, b].
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, a: f64, b: f64) -> f64 {
        (b - a) / 6.0 * (fa + 4.0 * fm + fb)
    }
    fn recurse<F: Fn(f64) -> f64>(
        f: &F,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, a, m);
        let right = simpson(fm, frm, fb, m, b);
        let err = left + right - whole;
        if depth == 0 || err.abs() <= 15.0 * tol {
            left + right + err / 15.0
        } else {
            recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = simpson(fa, fm, fb, a, b);
    recurse(&f, a, b, fa, fm, fb, whole, tol, 48)
}

/// Gamma function at half-integer arguments: k is twice the argument.
fn gamma_half(k: usize) -> f64 {
    debug_assert!(k >= 1);
    match k {
        1 => std::f64::consts::PI.sqrt(),
        2 => 1.0,
        _ => (k as f64 / 2.0 - 1.0) * gamma_half(k - 2),
    }
}

/// Surface area of the unit sphere in R^d: 2 pi^{d/2} / Gamma(d/2).
pub fn sphere_surface_area(d: usize) -> f64 {
    debug_assert!(d >= 1);
    2.0 * std::f64::consts::PI.powf(d as f64 / 2.0) / gamma_half(d)
}
