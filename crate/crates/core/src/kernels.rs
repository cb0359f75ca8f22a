//! Radial kernels with bandwidth scaling and derived constants.
//!
//! Three families: Gaussian, Laplace, and a smooth compactly supported bump
//! `(1 - ||u||^2)^3` on the unit ball. The base kernel is `K(u) = c * phi(||u||)`
//! with `c` chosen so `K` integrates to one; the bandwidth-h kernel is
//! `K_h(u) = h^{-d} K(u/h)`. The Laplace family additionally carries the sharp
//! companion kernel `L_h(u) = h(||u|| + h) K_h(u)`, whose gradient is
//! `-u K_h(u)`, turning mean-shift numerators into gradients.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{adaptive_simpson, sphere_surface_area};
use crate::vecops;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Gaussian,
    Laplace,
    SmoothCompact,
}

impl Family {
    pub fn name(self) -> &'static str {
        match self {
            Family::Gaussian => "gaussian",
            Family::Laplace => "laplace",
            Family::SmoothCompact => "smooth_compact",
        }
    }

    /// Radial profile before normalization, phi(r) with phi(0) = 1.
    fn profile(self, r: f64) -> f64 {
        match self {
            Family::Gaussian => (-0.5 * r * r).exp(),
            Family::Laplace => (-r).exp(),
            Family::SmoothCompact => {
                if r < 1.0 {
                    let t = 1.0 - r * r;
                    t * t * t
                } else {
                    0.0
                }
            }
        }
    }
}

/// A kernel family at a fixed dimension and bandwidth, with derived constants
/// frozen at construction.
#[derive(Debug, Clone, Serialize)]
pub struct KernelSpec {
    family: Family,
    dim: usize,
    bandwidth: f64,
    /// Base-kernel normalizer c = K(0): (2 pi)^{-d/2} for Gaussian, c_d for
    /// Laplace, bump constant for SmoothCompact.
    normalizer: f64,
    /// Laplacian of the base kernel at the origin; NaN for the Laplace family
    /// (not twice differentiable there).
    lap_at_zero: f64,
    m1_base: f64,
    m2_base: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentOrder {
    First,
    Second,
}

/// Radial integral of r^k * phi(r) over [0, inf).
fn radial_integral(family: Family, k: usize) -> f64 {
    match family {
        Family::SmoothCompact => {
            adaptive_simpson(|r| r.powi(k as i32) * family.profile(r), 0.0, 1.0, 1e-14)
        }
        Family::Gaussian => {
            adaptive_simpson(|r| r.powi(k as i32) * family.profile(r), 0.0, 16.0, 1e-14)
        }
        Family::Laplace => {
            let cutoff = 60.0;
            let body = adaptive_simpson(|r| r.powi(k as i32) * (-r).exp(), 0.0, cutoff, 1e-14);
            // Analytic tail: int_R^inf r^k e^{-r} dr = k! e^{-R} sum_{j<=k} R^j / j!.
            let mut factorial = 1.0;
            for j in 1..=k {
                factorial *= j as f64;
            }
            let mut series = 0.0;
            let mut term = 1.0;
            for j in 0..=k {
                if j > 0 {
                    term *= cutoff / j as f64;
                }
                series += term;
            }
            body + factorial * (-cutoff).exp() * series
        }
    }
}

impl KernelSpec {
    pub fn new(family: Family, dim: usize, bandwidth: f64) -> Result<Self> {
        if dim < 1 {
            return Err(Error::InvalidParameter(
                "kernel dimension must be >= 1".into(),
            ));
        }
        if !(bandwidth > 0.0) || !bandwidth.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "bandwidth must be positive, got {bandwidth}"
            )));
        }
        let area = sphere_surface_area(dim);
        let normalizer = match family {
            Family::Gaussian => (2.0 * std::f64::consts::PI).powf(-(dim as f64) / 2.0),
            // Dimension-generic: c = 1 / (area * int r^{d-1} phi(r) dr).
            Family::Laplace | Family::SmoothCompact => {
                1.0 / (area * radial_integral(family, dim - 1))
            }
        };
        let m1_base = normalizer * area * radial_integral(family, dim);
        let m2_base = normalizer * area * radial_integral(family, dim + 1);
        let lap_at_zero = match family {
            Family::Gaussian => -(dim as f64) * normalizer,
            // K(u) = c (1 - s)^3 with s = ||u||^2 gives Laplacian 2 d f'(0) = -6 d c.
            Family::SmoothCompact => -6.0 * dim as f64 * normalizer,
            Family::Laplace => f64::NAN,
        };
        Ok(KernelSpec {
            family,
            dim,
            bandwidth,
            normalizer,
            lap_at_zero,
            m1_base,
            m2_base,
        })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// Base-kernel value at the origin, K(0).
    pub fn normalizer(&self) -> f64 {
        self.normalizer
    }

    /// Delta K(0) of the base kernel; NaN for Laplace.
    pub fn lap_at_zero(&self) -> f64 {
        self.lap_at_zero
    }

    pub fn m1_base(&self) -> f64 {
        self.m1_base
    }

    pub fn m2_base(&self) -> f64 {
        self.m2_base
    }

    /// Whether the family is differentiable everywhere (Laplace is not, at 0).
    pub fn is_smooth(&self) -> bool {
        self.family != Family::Laplace
    }

    fn check_dim(&self, u: &[f64]) -> Result<()> {
        if u.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: u.len(),
            });
        }
        Ok(())
    }
}

/// K_h(u) = h^{-d} K(u/h).
pub fn eval_kernel(k: &KernelSpec, u: &[f64]) -> Result<f64> {
    k.check_dim(u)?;
    let r = vecops::norm(u) / k.bandwidth;
    Ok(k.bandwidth.powi(-(k.dim as i32)) * k.normalizer * k.family.profile(r))
}

/// Analytic gradient of K_h. The Laplace family errors at the origin.
pub fn grad_kernel(k: &KernelSpec, u: &[f64]) -> Result<Vec<f64>> {
    k.check_dim(u)?;
    let h = k.bandwidth;
    match k.family {
        Family::Gaussian => {
            let kv = eval_kernel(k, u)?;
            Ok(u.iter().map(|&ui| -ui / (h * h) * kv).collect())
        }
        Family::Laplace => {
            let r = vecops::norm(u);
            if r == 0.0 {
                return Err(Error::NotDifferentiableAtOrigin);
            }
            let kv = eval_kernel(k, u)?;
            Ok(u.iter().map(|&ui| -ui / (h * r) * kv).collect())
        }
        Family::SmoothCompact => {
            let r = vecops::norm(u) / h;
            if r >= 1.0 {
                return Ok(vec![0.0; k.dim]);
            }
            let t = 1.0 - r * r;
            let scale = -6.0 / (h * h) * h.powi(-(k.dim as i32)) * k.normalizer * t * t;
            Ok(u.iter().map(|&ui| scale * ui).collect())
        }
    }
}

/// Delta K_h(0) = h^{-d-2} Delta K(0); unsupported for Laplace.
pub fn laplacian_at_zero(k: &KernelSpec) -> Result<f64> {
    if k.family == Family::Laplace {
        return Err(Error::UnsupportedFamily {
            family: k.family.name(),
            op: "laplacian_at_zero",
        });
    }
    Ok(k.bandwidth.powi(-(k.dim as i32) - 2) * k.lap_at_zero)
}

/// m_p(K_h) = h^p m_p(K).
pub fn kernel_moment(k: &KernelSpec, order: MomentOrder) -> f64 {
    match order {
        MomentOrder::First => k.bandwidth * k.m1_base,
        MomentOrder::Second => k.bandwidth * k.bandwidth * k.m2_base,
    }
}

fn require_laplace(k: &KernelSpec, op: &'static str) -> Result<()> {
    if k.family != Family::Laplace {
        return Err(Error::UnsupportedFamily {
            family: k.family.name(),
            op,
        });
    }
    Ok(())
}

/// Sharp companion kernel L_h(u) = h (||u|| + h) K_h(u), Laplace only.
pub fn sharp_kernel_eval(k: &KernelSpec, u: &[f64]) -> Result<f64> {
    require_laplace(k, "sharp_kernel_eval")?;
    k.check_dim(u)?;
    let h = k.bandwidth;
    Ok(h * (vecops::norm(u) + h) * eval_kernel(k, u)?)
}

/// Gradient of the sharp kernel: -u K_h(u), continuous through the origin.
pub fn sharp_kernel_grad(k: &KernelSpec, u: &[f64]) -> Result<Vec<f64>> {
    require_laplace(k, "sharp_kernel_grad")?;
    k.check_dim(u)?;
    let kv = eval_kernel(k, u)?;
    Ok(u.iter().map(|&ui| -ui * kv).collect())
}

/// Mass of the sharp kernel: Z_h = h (m_1(K_h) + h), equal to h^2 (d + 1).
pub fn sharp_normalizer(k: &KernelSpec) -> Result<f64> {
    require_laplace(k, "sharp_normalizer")?;
    let h = k.bandwidth;
    Ok(h * (kernel_moment(k, MomentOrder::First) + h))
}
