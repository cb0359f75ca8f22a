//! Probability measures (weighted empirical clouds and isotropic Gaussian
//! mixtures), their kernel-smoothed densities, scores, mean shifts, and the
//! Laplace sharp-smoothed quantities.

use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::error::{Error, Result};
use crate::kernels::{self, Family, KernelSpec};
use crate::vecops;

/// Densities below this floor make score/mean-shift denominators singular.
pub const DENSITY_FLOOR: f64 = 1e-300;

const WEIGHT_SUM_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub enum Measure {
    Empirical {
        points: Vec<Vec<f64>>,
        weights: Vec<f64>,
    },
    GaussianMixture {
        means: Vec<Vec<f64>>,
        /// Isotropic component variances.
        variances: Vec<f64>,
        weights: Vec<f64>,
    },
}

fn check_cloud(points: &[Vec<f64>]) -> Result<usize> {
    if points.is_empty() {
        return Err(Error::InvalidParameter(
            "measure needs at least one point".into(),
        ));
    }
    let d = points[0].len();
    if d == 0 {
        return Err(Error::InvalidParameter(
            "points must have dimension >= 1".into(),
        ));
    }
    for p in points {
        if p.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: p.len(),
            });
        }
        if !vecops::all_finite(p) {
            return Err(Error::NonFinite("measure point"));
        }
    }
    Ok(d)
}

fn check_weights(weights: &[f64], n: usize) -> Result<()> {
    if weights.len() != n {
        return Err(Error::SizeMismatch {
            left: weights.len(),
            right: n,
        });
    }
    if weights.iter().any(|w| !(*w > 0.0) || !w.is_finite()) {
        return Err(Error::InvalidParameter("weights must be positive".into()));
    }
    let sum: f64 = weights.iter().sum();
    if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::InvalidParameter(format!(
            "weights must sum to 1, got {sum}"
        )));
    }
    Ok(())
}

impl Measure {
    /// Uniformly weighted empirical measure.
    pub fn empirical(points: Vec<Vec<f64>>) -> Result<Self> {
        check_cloud(&points)?;
        let n = points.len();
        let weights = vec![1.0 / n as f64; n];
        Ok(Measure::Empirical { points, weights })
    }

    pub fn weighted_empirical(points: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        check_cloud(&points)?;
        check_weights(&weights, points.len())?;
        Ok(Measure::Empirical { points, weights })
    }

    pub fn gaussian_mixture(
        means: Vec<Vec<f64>>,
        variances: Vec<f64>,
        weights: Vec<f64>,
    ) -> Result<Self> {
        check_cloud(&means)?;
        if variances.len() != means.len() {
            return Err(Error::SizeMismatch {
                left: variances.len(),
                right: means.len(),
            });
        }
        if variances.iter().any(|v| !(*v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParameter(
                "mixture variances must be positive".into(),
            ));
        }
        check_weights(&weights, means.len())?;
        Ok(Measure::GaussianMixture {
            means,
            variances,
            weights,
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            Measure::Empirical { points, .. } => points[0].len(),
            Measure::GaussianMixture { means, .. } => means[0].len(),
        }
    }

    pub fn is_empirical(&self) -> bool {
        matches!(self, Measure::Empirical { .. })
    }

    /// Atom locations (empirical) or component means (mixture); anchors for
    /// quadrature windows.
    pub fn support_points(&self) -> &[Vec<f64>] {
        match self {
            Measure::Empirical { points, .. } => points,
            Measure::GaussianMixture { means, .. } => means,
        }
    }

    /// Analytic density of a Gaussian mixture (not kernel-smoothed).
    pub fn mixture_density(&self, z: &[f64]) -> Result<f64> {
        match self {
            Measure::GaussianMixture {
                means,
                variances,
                weights,
            } => {
                if z.len() != self.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: self.dim(),
                        got: z.len(),
                    });
                }
                let d = z.len() as f64;
                let mut total = 0.0;
                for ((m, &v), &w) in means.iter().zip(variances).zip(weights) {
                    let q = vecops::dist(z, m).powi(2) / (2.0 * v);
                    total += w * (2.0 * std::f64::consts::PI * v).powf(-d / 2.0) * (-q).exp();
                }
                Ok(total)
            }
            Measure::Empirical { .. } => Err(Error::UnsupportedCombination(
                "mixture_density requires an analytic mixture".into(),
            )),
        }
    }

    /// Load an empirical measure from CSV. Columns named `x_0..x_{d-1}` (or
    /// any header starting with `x`) are coordinates, in header order; an
    /// optional `w`/`weight` column is normalized to sum to one.
    pub fn empirical_from_csv<P: AsRef<Path>>(path: P) -> Result<Self> {
        let mut reader = csv::Reader::from_path(path)?;
        let headers = reader.headers()?.clone();
        let mut coord_cols = Vec::new();
        let mut weight_col = None;
        for (idx, name) in headers.iter().enumerate() {
            let name = name.trim();
            if name == "w" || name == "weight" {
                weight_col = Some(idx);
            } else if name.starts_with('x') {
                coord_cols.push(idx);
            }
        }
        if coord_cols.is_empty() {
            return Err(Error::InvalidParameter(
                "CSV needs coordinate columns named x_0, x_1, ...".into(),
            ));
        }
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for record in reader.records() {
            let record = record?;
            let mut p = Vec::with_capacity(coord_cols.len());
            for &c in &coord_cols {
                let v: f64 = record
                    .get(c)
                    .ok_or_else(|| Error::InvalidParameter("short CSV row".into()))?
                    .trim()
                    .parse()
                    .map_err(|e| Error::InvalidParameter(format!("bad coordinate: {e}")))?;
                p.push(v);
            }
            points.push(p);
            if let Some(c) = weight_col {
                let w: f64 = record
                    .get(c)
                    .ok_or_else(|| Error::InvalidParameter("short CSV row".into()))?
                    .trim()
                    .parse()
                    .map_err(|e| Error::InvalidParameter(format!("bad weight: {e}")))?;
                weights.push(w);
            }
        }
        if weights.is_empty() {
            Measure::empirical(points)
        } else {
            if weights.iter().any(|w| !(*w > 0.0)) {
                return Err(Error::InvalidParameter(
                    "CSV weights must be positive".into(),
                ));
            }
            let sum: f64 = weights.iter().sum();
            let weights = weights.into_iter().map(|w| w / sum).collect();
            Measure::weighted_empirical(points, weights)
        }
    }
}

/// Ordered particle configuration; order is identity, preserved over time.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleConfig {
    positions: Vec<Vec<f64>>,
}

impl ParticleConfig {
    pub fn new(positions: Vec<Vec<f64>>) -> Result<Self> {
        check_cloud(&positions)?;
        Ok(ParticleConfig { positions })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.positions[0].len()
    }

    pub fn positions(&self) -> &[Vec<f64>] {
        &self.positions
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.positions[i]
    }

    pub(crate) fn positions_mut(&mut self) -> &mut Vec<Vec<f64>> {
        &mut self.positions
    }

    /// Uniform empirical measure over the particles.
    pub fn to_measure(&self) -> Measure {
        Measure::empirical(self.positions.clone()).expect("validated at construction")
    }

    /// Minimum pairwise distance and the realizing pair.
    pub fn min_pairwise_distance(&self) -> Option<(f64, usize, usize)> {
        let n = self.len();
        let mut best: Option<(f64, usize, usize)> = None;
        for i in 0..n {
            for j in (i + 1)..n {
                let d = vecops::dist(&self.positions[i], &self.positions[j]);
                if best.map_or(true, |(b, _, _)| d < b) {
                    best = Some((d, i, j));
                }
            }
        }
        best
    }
}

fn check_eval_dims(alpha: &Measure, k: &KernelSpec, z: &[f64]) -> Result<()> {
    if alpha.dim() != k.dim() {
        return Err(Error::DimensionMismatch {
            expected: k.dim(),
            got: alpha.dim(),
        });
    }
    if z.len() != k.dim() {
        return Err(Error::DimensionMismatch {
            expected: k.dim(),
            got: z.len(),
        });
    }
    Ok(())
}

/// Kernel-smoothed density of `alpha` at `z`. Mixtures are supported under
/// the Gaussian kernel through the closed-form convolution (variances add).
pub fn kde_density(alpha: &Measure, k: &KernelSpec, z: &[f64]) -> Result<f64> {
    check_eval_dims(alpha, k, z)?;
    match alpha {
        Measure::Empirical { points, weights } => {
            let mut total = 0.0;
            for (y, &w) in points.iter().zip(weights) {
                total += w * kernels::eval_kernel(k, &vecops::sub(z, y))?;
            }
            Ok(total)
        }
        Measure::GaussianMixture {
            means,
            variances,
            weights,
        } => {
            if k.family() != Family::Gaussian {
                return Err(Error::UnsupportedCombination(format!(
                    "Gaussian mixtures are smoothable only by the Gaussian kernel, not {}",
                    k.family().name()
                )));
            }
            let h2 = k.bandwidth() * k.bandwidth();
            let d = k.dim() as f64;
            let mut total = 0.0;
            for ((m, &v), &w) in means.iter().zip(variances).zip(weights) {
                let s2 = v + h2;
                let q = vecops::dist(z, m).powi(2) / (2.0 * s2);
                total += w * (2.0 * std::f64::consts::PI * s2).powf(-d / 2.0) * (-q).exp();
            }
            Ok(total)
        }
    }
}

fn guard_density(q: f64, context: &'static str) -> Result<f64> {
    if !(q > DENSITY_FLOOR) {
        return Err(Error::SingularDenominator { context, value: q });
    }
    Ok(q)
}

/// Score of the smoothed density: grad log (K_h * alpha)(z).
pub fn kde_score(alpha: &Measure, k: &KernelSpec, z: &[f64]) -> Result<Vec<f64>> {
    check_eval_dims(alpha, k, z)?;
    match alpha {
        Measure::Empirical { points, weights } => {
            let mut num = vec![0.0; z.len()];
            let mut den = 0.0;
            for (y, &w) in points.iter().zip(weights) {
                let u = vecops::sub(z, y);
                den += w * kernels::eval_kernel(k, &u)?;
                let g = kernels::grad_kernel(k, &u)?;
                for (ni, gi) in num.iter_mut().zip(&g) {
                    *ni += w * gi;
                }
            }
            guard_density(den, "kde_score")?;
            Ok(vecops::scale(&num, 1.0 / den))
        }
        Measure::GaussianMixture {
            means,
            variances,
            weights,
        } => {
            if k.family() != Family::Gaussian {
                return Err(Error::UnsupportedCombination(
                    "mixture scores need the Gaussian kernel".into(),
                ));
            }
            let h2 = k.bandwidth() * k.bandwidth();
            let d = k.dim() as f64;
            let mut num = vec![0.0; z.len()];
            let mut den = 0.0;
            for ((m, &v), &w) in means.iter().zip(variances).zip(weights) {
                let s2 = v + h2;
                let q = vecops::dist(z, m).powi(2) / (2.0 * s2);
                let comp = w * (2.0 * std::f64::consts::PI * s2).powf(-d / 2.0) * (-q).exp();
                den += comp;
                for i in 0..z.len() {
                    num[i] += comp * (m[i] - z[i]) / s2;
                }
            }
            guard_density(den, "kde_score")?;
            Ok(vecops::scale(&num, 1.0 / den))
        }
    }
}

/// Local kernel mean-shift vector M(z): kernel-weighted average of y - z.
pub fn mean_shift(alpha: &Measure, k: &KernelSpec, z: &[f64]) -> Result<Vec<f64>> {
    check_eval_dims(alpha, k, z)?;
    match alpha {
        Measure::Empirical { points, weights } => {
            let mut num = vec![0.0; z.len()];
            let mut den = 0.0;
            for (y, &w) in points.iter().zip(weights) {
                let u = vecops::sub(z, y);
                let kv = w * kernels::eval_kernel(k, &u)?;
                den += kv;
                for i in 0..z.len() {
                    num[i] += kv * (y[i] - z[i]);
                }
            }
            guard_density(den, "mean_shift")?;
            Ok(vecops::scale(&num, 1.0 / den))
        }
        Measure::GaussianMixture { .. } => {
            // Closed form: under a Gaussian kernel the mean shift is h^2 times
            // the smoothed score, for any measure.
            let h2 = k.bandwidth() * k.bandwidth();
            Ok(vecops::scale(&kde_score(alpha, k, z)?, h2))
        }
    }
}

/// Laplace-weighted local mean radius: kernel-weighted average of ||y - z||.
pub fn mean_radius(alpha: &Measure, k: &KernelSpec, z: &[f64]) -> Result<f64> {
    if k.family() != Family::Laplace {
        return Err(Error::UnsupportedFamily {
            family: k.family().name(),
            op: "mean_radius",
        });
    }
    check_eval_dims(alpha, k, z)?;
    match alpha {
        Measure::Empirical { points, weights } => {
            let mut num = 0.0;
            let mut den = 0.0;
            for (y, &w) in points.iter().zip(weights) {
                let u = vecops::sub(z, y);
                let kv = w * kernels::eval_kernel(k, &u)?;
                den += kv;
                num += kv * vecops::norm(&u);
            }
            guard_density(den, "mean_radius")?;
            Ok(num / den)
        }
        Measure::GaussianMixture { .. } => Err(Error::UnsupportedCombination(
            "mean_radius needs an empirical measure".into(),
        )),
    }
}

fn empirical_parts<'m>(
    alpha: &'m Measure,
    op: &'static str,
) -> Result<(&'m [Vec<f64>], &'m [f64])> {
    match alpha {
        Measure::Empirical { points, weights } => Ok((points, weights)),
        Measure::GaussianMixture { .. } => Err(Error::UnsupportedCombination(format!(
            "{op} needs an empirical measure"
        ))),
    }
}

/// Sharp-smoothed density R(z): convolution with the sharp kernel L_h.
pub fn sharp_density(alpha: &Measure, k: &KernelSpec, z: &[f64]) -> Result<f64> {
    check_eval_dims(alpha, k, z)?;
    let (points, weights) = empirical_parts(alpha, "sharp_density")?;
    let mut total = 0.0;
    for (y, &w) in points.iter().zip(weights) {
        total += w * kernels::sharp_kernel_eval(k, &vecops::sub(z, y))?;
    }
    Ok(total)
}

/// Sharp-smoothed score sigma(z) = grad log R(z).
pub fn sharp_score(alpha: &Measure, k: &KernelSpec, z: &[f64]) -> Result<Vec<f64>> {
    check_eval_dims(alpha, k, z)?;
    let (points, weights) = empirical_parts(alpha, "sharp_score")?;
    let mut num = vec![0.0; z.len()];
    let mut den = 0.0;
    for (y, &w) in points.iter().zip(weights) {
        let u = vecops::sub(z, y);
        den += w * kernels::sharp_kernel_eval(k, &u)?;
        let g = kernels::sharp_kernel_grad(k, &u)?;
        for (ni, gi) in num.iter_mut().zip(&g) {
            *ni += w * gi;
        }
    }
    guard_density(den, "sharp_score")?;
    Ok(vecops::scale(&num, 1.0 / den))
}

/// Local scale factor a(z) = R(z) / Q(z), equal to h (mean radius + h).
pub fn scale_factor(alpha: &Measure, k: &KernelSpec, z: &[f64]) -> Result<f64> {
    let q = kde_density(alpha, k, z)?;
    guard_density(q, "scale_factor")?;
    Ok(sharp_density(alpha, k, z)? / q)
}

/// Leave-one-out empirical measure: uniform over the other N-1 particles.
pub fn loo_measure(config: &ParticleConfig, i: usize) -> Result<Measure> {
    let n = config.len();
    if n < 2 {
        return Err(Error::DegenerateConfig(
            "leave-one-out needs at least two particles".into(),
        ));
    }
    if i >= n {
        return Err(Error::InvalidParameter(format!(
            "particle index {i} out of range {n}"
        )));
    }
    let points: Vec<Vec<f64>> = config
        .positions()
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != i)
        .map(|(_, p)| p.clone())
        .collect();
    Measure::empirical(points)
}

fn gaussian_direction(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let g: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let n = vecops::norm(&g);
        if n > 1e-12 {
            return vecops::scale(&g, 1.0 / n);
        }
    }
}

/// Exact samples from the smoothed measure K_h * alpha: pick an atom by
/// weight, then add kernel noise. Deterministic per seed.
pub fn sample_from_kde(
    alpha: &Measure,
    k: &KernelSpec,
    count: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if count == 0 {
        return Err(Error::InvalidParameter("sample count must be >= 1".into()));
    }
    let (points, weights) = empirical_parts(alpha, "sample_from_kde")?;
    if alpha.dim() != k.dim() {
        return Err(Error::DimensionMismatch {
            expected: k.dim(),
            got: alpha.dim(),
        });
    }
    let d = k.dim();
    let h = k.bandwidth();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pick = WeightedIndex::new(weights)
        .map_err(|e| Error::InvalidParameter(format!("weight table: {e}")))?;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let atom = &points[pick.sample(&mut rng)];
        let noise: Vec<f64> = match k.family() {
            Family::Gaussian => (0..d)
                .map(|_| {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    h * g
                })
                .collect(),
            Family::Laplace => {
                // Radial density r^{d-1} e^{-r/h} is Gamma(d, h).
                let gamma = Gamma::new(d as f64, h)
                    .map_err(|e| Error::InvalidParameter(format!("gamma sampler: {e}")))?;
                let r = gamma.sample(&mut rng);
                vecops::scale(&gaussian_direction(&mut rng, d), r)
            }
            Family::SmoothCompact => {
                // Rejection against the r^{d-1} envelope on [0, h].
                let r = loop {
                    let u: f64 = rng.random();
                    let r = h * u.powf(1.0 / d as f64);
                    let t = 1.0 - (r / h) * (r / h);
                    let accept: f64 = rng.random();
                    if accept < t * t * t {
                        break r;
                    }
                };
                vecops::scale(&gaussian_direction(&mut rng, d), r)
            }
        };
        out.push(vecops::add(atom, &noise));
    }
    Ok(out)
}
