//! Drift velocity fields and their differential operators.
//!
//! Three field kinds drive the particle dynamics:
//! - `Conservative`: the smoothed-score residual `b_x = s_rho - s_x`, a
//!   gradient field (requires a differentiable kernel family);
//! - `Displacement`: the mean-shift difference `u_x = M_target - M_model`;
//! - `LaplaceLoo`: the self-masked displacement field where particle i sees
//!   the model with itself removed.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::kernels::{self, Family, KernelSpec};
use crate::measures::{self, Measure, ParticleConfig};
use crate::numerics;
use crate::vecops;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Conservative,
    Displacement,
    LaplaceLoo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelSource {
    FullConfig,
    LeaveOneOut,
}

/// A drift field bound to a target measure and a kernel.
#[derive(Debug, Clone)]
pub struct FieldSpec {
    pub kind: FieldKind,
    pub target: Measure,
    pub kernel: KernelSpec,
    pub model_source: ModelSource,
}

impl FieldSpec {
    pub fn new(
        kind: FieldKind,
        target: Measure,
        kernel: KernelSpec,
        model_source: ModelSource,
    ) -> Result<Self> {
        if target.dim() != kernel.dim() {
            return Err(Error::DimensionMismatch {
                expected: kernel.dim(),
                got: target.dim(),
            });
        }
        match kind {
            FieldKind::Conservative => {
                if !kernel.is_smooth() {
                    return Err(Error::UnsupportedCombination(
                        "the conservative field needs a differentiable kernel (gaussian or smooth_compact)"
                            .into(),
                    ));
                }
                if model_source != ModelSource::FullConfig {
                    return Err(Error::UnsupportedCombination(
                        "the conservative field uses the full-configuration model".into(),
                    ));
                }
            }
            FieldKind::Displacement => {
                if model_source != ModelSource::FullConfig {
                    return Err(Error::UnsupportedCombination(
                        "the displacement field uses the full-configuration model".into(),
                    ));
                }
            }
            FieldKind::LaplaceLoo => {
                if kernel.family() != Family::Laplace {
                    return Err(Error::UnsupportedCombination(
                        "the leave-one-out field is defined for the Laplace kernel".into(),
                    ));
                }
                if model_source != ModelSource::LeaveOneOut {
                    return Err(Error::UnsupportedCombination(
                        "the leave-one-out field requires the leave-one-out model source".into(),
                    ));
                }
            }
        }
        if !target.is_empirical() && kernel.family() != Family::Gaussian {
            return Err(Error::UnsupportedCombination(
                "analytic mixture targets are supported only under the Gaussian kernel".into(),
            ));
        }
        Ok(FieldSpec {
            kind,
            target,
            kernel,
            model_source,
        })
    }

    pub fn conservative(target: Measure, kernel: KernelSpec) -> Result<Self> {
        FieldSpec::new(
            FieldKind::Conservative,
            target,
            kernel,
            ModelSource::FullConfig,
        )
    }

    pub fn displacement(target: Measure, kernel: KernelSpec) -> Result<Self> {
        FieldSpec::new(
            FieldKind::Displacement,
            target,
            kernel,
            ModelSource::FullConfig,
        )
    }

    pub fn laplace_loo(target: Measure, kernel: KernelSpec) -> Result<Self> {
        FieldSpec::new(
            FieldKind::LaplaceLoo,
            target,
            kernel,
            ModelSource::LeaveOneOut,
        )
    }

    pub fn dim(&self) -> usize {
        self.kernel.dim()
    }

    /// Velocity of particle i under this field's dynamics.
    pub fn velocity(&self, config: &ParticleConfig, i: usize) -> Result<Vec<f64>> {
        match self.kind {
            FieldKind::Conservative => conservative_field(self, config, config.point(i)),
            FieldKind::Displacement => displacement_field(self, config, config.point(i)),
            FieldKind::LaplaceLoo => laplace_loo_field(self, config, i, config.point(i)),
        }
    }

    /// All particle velocities from the frozen configuration.
    pub fn velocities(&self, config: &ParticleConfig) -> Result<Vec<Vec<f64>>> {
        let bound = self.bind(config);
        (0..config.len()).map(|i| bound.velocity(i)).collect()
    }

    /// Bind to a configuration: precomputes the model measure for repeated
    /// spatial evaluation.
    pub fn bind<'a>(&'a self, config: &'a ParticleConfig) -> BoundField<'a> {
        BoundField {
            spec: self,
            config,
            model: config.to_measure(),
        }
    }

    /// Reference score for the Stein operator of this field kind: the
    /// smoothed-target score for conservative/displacement analysis, the
    /// sharp-smoothed score for the Laplace leave-one-out analysis.
    pub fn reference_score(&self, z: &[f64]) -> Result<Vec<f64>> {
        match self.kind {
            FieldKind::Conservative | FieldKind::Displacement => {
                measures::kde_score(&self.target, &self.kernel, z)
            }
            FieldKind::LaplaceLoo => measures::sharp_score(&self.target, &self.kernel, z),
        }
    }
}

/// A field spec evaluated against a frozen configuration.
pub struct BoundField<'a> {
    spec: &'a FieldSpec,
    config: &'a ParticleConfig,
    model: Measure,
}

impl BoundField<'_> {
    /// Frozen-configuration spatial field at z (the full-config field;
    /// leave-one-out masking applies only at particle centers).
    pub fn eval(&self, z: &[f64]) -> Result<Vec<f64>> {
        match self.spec.kind {
            FieldKind::Conservative => {
                let s_target = measures::kde_score(&self.spec.target, &self.spec.kernel, z)?;
                let s_model = measures::kde_score(&self.model, &self.spec.kernel, z)?;
                Ok(vecops::sub(&s_target, &s_model))
            }
            FieldKind::Displacement | FieldKind::LaplaceLoo => {
                let m_target = measures::mean_shift(&self.spec.target, &self.spec.kernel, z)?;
                let m_model = measures::mean_shift(&self.model, &self.spec.kernel, z)?;
                Ok(vecops::sub(&m_target, &m_model))
            }
        }
    }

    pub fn velocity(&self, i: usize) -> Result<Vec<f64>> {
        match self.spec.kind {
            FieldKind::Conservative | FieldKind::Displacement => self.eval(self.config.point(i)),
            FieldKind::LaplaceLoo => {
                laplace_loo_field(self.spec, self.config, i, self.config.point(i))
            }
        }
    }
}

/// Conservative drift: smoothed target score minus model KDE score.
pub fn conservative_field(
    spec: &FieldSpec,
    config: &ParticleConfig,
    z: &[f64],
) -> Result<Vec<f64>> {
    let s_target = measures::kde_score(&spec.target, &spec.kernel, z)?;
    let s_model = measures::kde_score(&config.to_measure(), &spec.kernel, z)?;
    Ok(vecops::sub(&s_target, &s_model))
}

/// Displacement drift: mean shift toward the target minus mean shift toward
/// the full-configuration model.
pub fn displacement_field(
    spec: &FieldSpec,
    config: &ParticleConfig,
    z: &[f64],
) -> Result<Vec<f64>> {
    let m_target = measures::mean_shift(&spec.target, &spec.kernel, z)?;
    let m_model = measures::mean_shift(&config.to_measure(), &spec.kernel, z)?;
    Ok(vecops::sub(&m_target, &m_model))
}

/// Self-masked displacement drift: the model term leaves particle i out.
pub fn laplace_loo_field(
    spec: &FieldSpec,
    config: &ParticleConfig,
    i: usize,
    z: &[f64],
) -> Result<Vec<f64>> {
    let m_target = measures::mean_shift(&spec.target, &spec.kernel, z)?;
    let loo = measures::loo_measure(config, i)?;
    let m_model = measures::mean_shift(&loo, &spec.kernel, z)?;
    Ok(vecops::sub(&m_target, &m_model))
}

/// Sharp-score mismatch: sigma_target - sigma_model (Laplace kernel).
pub fn sharp_mismatch_field(
    spec: &FieldSpec,
    config: &ParticleConfig,
    z: &[f64],
) -> Result<Vec<f64>> {
    let s_target = measures::sharp_score(&spec.target, &spec.kernel, z)?;
    let s_model = measures::sharp_score(&config.to_measure(), &spec.kernel, z)?;
    Ok(vecops::sub(&s_target, &s_model))
}

/// Scale-mismatch residual: (a_target - a_model) sigma_target. With the
/// sharp mismatch it reassembles the displacement field:
/// u = a_model * mismatch + residual.
pub fn scale_residual_field(
    spec: &FieldSpec,
    config: &ParticleConfig,
    z: &[f64],
) -> Result<Vec<f64>> {
    let a_target = measures::scale_factor(&spec.target, &spec.kernel, z)?;
    let a_model = measures::scale_factor(&config.to_measure(), &spec.kernel, z)?;
    let sigma = measures::sharp_score(&spec.target, &spec.kernel, z)?;
    Ok(vecops::scale(&sigma, a_target - a_model))
}

/// Stein divergence of a vector field: central-difference divergence plus
/// the dot product with the reference score at z.
pub fn stein_divergence<F, S>(field: F, score_ref: S, z: &[f64], fd_step: f64) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
    S: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let mut div = 0.0;
    let mut zp = z.to_vec();
    for i in 0..z.len() {
        zp[i] = z[i] + fd_step;
        let fp = field(&zp)?[i];
        zp[i] = z[i] - fd_step;
        let fm = field(&zp)?[i];
        zp[i] = z[i];
        let t = (fp - fm) / (2.0 * fd_step);
        if !t.is_finite() {
            return Err(Error::NonFinite("stein_divergence stencil"));
        }
        div += t;
    }
    let s = score_ref(z)?;
    let f0 = field(z)?;
    let value = div + vecops::dot(&s, &f0);
    if !value.is_finite() {
        return Err(Error::NonFinite("stein_divergence"));
    }
    Ok(value)
}

/// Both sides of the per-particle divergence identity for the conservative
/// field: moving particle i moves the evaluation point AND the i-th KDE
/// center, which adds the self-interaction correction
/// `Delta K_h(0) / (N q_x(x_i))` to the frozen spatial divergence.
pub fn particle_divergence_pair(
    config: &ParticleConfig,
    target: &Measure,
    k: &KernelSpec,
    i: usize,
) -> Result<(f64, f64)> {
    let spec = FieldSpec::conservative(target.clone(), k.clone())?;
    let xi = config.point(i).to_vec();
    let step = numerics::fd_step(&xi);

    // lhs: divergence of y -> b_{x[i := y]}(y).
    let mut div_moving = 0.0;
    let mut y = xi.clone();
    for m in 0..xi.len() {
        let mut eval = |val: f64| -> Result<f64> {
            y[m] = val;
            let mut moved = config.clone();
            moved.positions_mut()[i] = y.clone();
            let v = conservative_field(&spec, &moved, &y)?;
            Ok(v[m])
        };
        let fp = eval(xi[m] + step)?;
        let fm = eval(xi[m] - step)?;
        y[m] = xi[m];
        div_moving += (fp - fm) / (2.0 * step);
    }

    // rhs: frozen spatial divergence plus the self-interaction correction.
    let bound = spec.bind(config);
    let mut div_frozen = 0.0;
    let mut zp = xi.clone();
    for m in 0..xi.len() {
        zp[m] = xi[m] + step;
        let fp = bound.eval(&zp)?[m];
        zp[m] = xi[m] - step;
        let fm = bound.eval(&zp)?[m];
        zp[m] = xi[m];
        div_frozen += (fp - fm) / (2.0 * step);
    }
    let q = measures::kde_density(&config.to_measure(), k, &xi)?;
    if !(q > measures::DENSITY_FLOOR) {
        return Err(Error::SingularDenominator {
            context: "particle_divergence_pair",
            value: q,
        });
    }
    let correction = kernels::laplacian_at_zero(k)? / (config.len() as f64 * q);

    Ok((div_moving, div_frozen + correction))
}

/// Planar curl via central differences: d1 f2 - d2 f1. Two dimensions only.
pub fn curl2d<F>(field: F, z: &[f64], fd_step: f64) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    if z.len() != 2 {
        return Err(Error::UnsupportedDimension {
            dim: z.len(),
            op: "curl2d",
        });
    }
    let mut zp = z.to_vec();
    zp[0] = z[0] + fd_step;
    let f2p = field(&zp)?[1];
    zp[0] = z[0] - fd_step;
    let f2m = field(&zp)?[1];
    zp[0] = z[0];
    zp[1] = z[1] + fd_step;
    let f1p = field(&zp)?[0];
    zp[1] = z[1] - fd_step;
    let f1m = field(&zp)?[0];
    let curl = (f2p - f2m) / (2.0 * fd_step) - (f1p - f1m) / (2.0 * fd_step);
    if !curl.is_finite() {
        return Err(Error::NonFinite("curl2d"));
    }
    Ok(curl)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_cloud(rng: &mut ChaCha8Rng, n: usize, d: usize, scale: f64) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| {
                (0..d)
                    .map(|_| (rng.random::<f64>() - 0.5) * 2.0 * scale)
                    .collect()
            })
            .collect()
    }

    fn gaussian(d: usize, h: f64) -> KernelSpec {
        KernelSpec::new(Family::Gaussian, d, h).unwrap()
    }

    fn laplace(d: usize, h: f64) -> KernelSpec {
        KernelSpec::new(Family::Laplace, d, h).unwrap()
    }

    #[test]
    fn conservative_vanishes_when_model_matches_target() {
        let pts = vec![vec![0.0, 0.0], vec![1.0, -0.5], vec![-0.7, 0.3]];
        let target = Measure::empirical(pts.clone()).unwrap();
        let config = ParticleConfig::new(pts).unwrap();
        let spec = FieldSpec::conservative(target, gaussian(2, 0.8)).unwrap();
        for z in [vec![0.2, 0.1], vec![-1.0, 0.4], vec![2.0, 2.0]] {
            let b = conservative_field(&spec, &config, &z).unwrap();
            assert!(vecops::norm(&b) < 1e-13, "{b:?}");
        }
    }

    #[test]
    fn single_atom_closed_form() {
        let target = Measure::empirical(vec![vec![2.0]]).unwrap();
        let config = ParticleConfig::new(vec![vec![-1.0]]).unwrap();
        let h = 0.9;
        let spec = FieldSpec::conservative(target, gaussian(1, h)).unwrap();
        let b = conservative_field(&spec, &config, &[0.3]).unwrap();
        assert_relative_eq!(b[0], (2.0 - -1.0) / (h * h), max_relative = 1e-12);

        // Displacement collapses to y - x for single atoms.
        let target = Measure::empirical(vec![vec![2.0]]).unwrap();
        let spec = FieldSpec::displacement(target, gaussian(1, h)).unwrap();
        let u = displacement_field(&spec, &config, &[0.3]).unwrap();
        assert_relative_eq!(u[0], 3.0, max_relative = 1e-12);
    }

    #[test]
    fn gaussian_proportionality_between_field_kinds() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..50 {
            let target = Measure::empirical(random_cloud(&mut rng, 6, 2, 1.5)).unwrap();
            let config = ParticleConfig::new(random_cloud(&mut rng, 5, 2, 1.5)).unwrap();
            let h = 0.4 + rng.random::<f64>();
            let cons = FieldSpec::conservative(target.clone(), gaussian(2, h)).unwrap();
            let disp = FieldSpec::displacement(target, gaussian(2, h)).unwrap();
            let z = vec![rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5];
            let b = conservative_field(&cons, &config, &z).unwrap();
            let u = displacement_field(&disp, &config, &z).unwrap();
            let scale = 1.0 + vecops::norm(&b);
            for i in 0..2 {
                assert!((b[i] - u[i] / (h * h)).abs() <= 1e-12 * scale);
            }
        }
    }

    #[test]
    fn loo_field_of_two_particles() {
        let target = Measure::empirical(vec![vec![3.0]]).unwrap();
        let config = ParticleConfig::new(vec![vec![0.0], vec![1.0]]).unwrap();
        let spec = FieldSpec::laplace_loo(target, laplace(1, 1.0)).unwrap();
        let z = [0.25];
        let u = laplace_loo_field(&spec, &config, 0, &z).unwrap();
        // Model reduces to the atom at x_2 = 1.
        assert_relative_eq!(u[0], (3.0 - z[0]) - (1.0 - z[0]), max_relative = 1e-12);
    }

    #[test]
    fn laplace_decomposition_reassembles_displacement() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for _ in 0..50 {
            let target = Measure::empirical(random_cloud(&mut rng, 8, 2, 1.2)).unwrap();
            let config = ParticleConfig::new(random_cloud(&mut rng, 6, 2, 1.2)).unwrap();
            let h = 0.35 + 0.8 * rng.random::<f64>();
            let spec = FieldSpec::displacement(target, laplace(2, h)).unwrap();
            let z = vec![
                rng.random::<f64>() * 2.0 - 1.0,
                rng.random::<f64>() * 2.0 - 1.0,
            ];

            let u = displacement_field(&spec, &config, &z).unwrap();
            let mismatch = sharp_mismatch_field(&spec, &config, &z).unwrap();
            let residual = scale_residual_field(&spec, &config, &z).unwrap();
            let a_model = measures::scale_factor(&config.to_measure(), &spec.kernel, &z).unwrap();

            let scale = 1.0 + vecops::norm(&u);
            for i in 0..2 {
                let rhs = a_model * mismatch[i] + residual[i];
                assert!((u[i] - rhs).abs() <= 1e-10 * scale, "{} vs {}", u[i], rhs);
            }
        }
    }

    #[test]
    fn residual_equals_radius_gap_times_sharp_score() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..20 {
            let target = Measure::empirical(random_cloud(&mut rng, 7, 2, 1.0)).unwrap();
            let config = ParticleConfig::new(random_cloud(&mut rng, 5, 2, 1.0)).unwrap();
            let h = 0.5;
            let k = laplace(2, h);
            let spec = FieldSpec::displacement(target.clone(), k.clone()).unwrap();
            let z = vec![rng.random::<f64>(), rng.random::<f64>()];

            let e = scale_residual_field(&spec, &config, &z).unwrap();
            let r_t = measures::mean_radius(&target, &k, &z).unwrap();
            let r_m = measures::mean_radius(&config.to_measure(), &k, &z).unwrap();
            let sigma = measures::sharp_score(&target, &k, &z).unwrap();
            for i in 0..2 {
                let want = h * (r_t - r_m) * sigma[i];
                assert!((e[i] - want).abs() <= 1e-12 * (1.0 + e[i].abs()));
            }
        }
    }

    #[test]
    fn stein_divergence_closed_forms() {
        let target = Measure::gaussian_mixture(vec![vec![0.0, 0.0]], vec![1.0], vec![1.0]).unwrap();
        let k = gaussian(2, 1.0);
        let spec = FieldSpec::conservative(target, k).unwrap();
        let z = [0.4, -0.3];
        let score = |z: &[f64]| spec.reference_score(z);

        // Constant field: divergence vanishes, A f = s . c.
        let c = vec![0.7, -0.2];
        let a = stein_divergence(|_| Ok(c.clone()), score, &z, 1e-4).unwrap();
        let s = spec.reference_score(&z).unwrap();
        assert_relative_eq!(a, vecops::dot(&s, &c), max_relative = 1e-8);

        // Identity field in d = 2: divergence is 2.
        let a = stein_divergence(|z: &[f64]| Ok(z.to_vec()), score, &z, 1e-4).unwrap();
        let s = spec.reference_score(&z).unwrap();
        assert!((a - (2.0 + vecops::dot(&s, &z))).abs() < 1e-7);
    }

    #[test]
    fn conservative_is_a_gradient_field() {
        // Matches the finite-difference gradient of log rho - log q.
        let mut rng = ChaCha8Rng::seed_from_u64(24);
        let target = Measure::empirical(random_cloud(&mut rng, 6, 2, 1.0)).unwrap();
        let config = ParticleConfig::new(random_cloud(&mut rng, 5, 2, 1.0)).unwrap();
        let k = gaussian(2, 0.7);
        let spec = FieldSpec::conservative(target.clone(), k.clone()).unwrap();
        let model = config.to_measure();
        for _ in 0..10 {
            let z = vec![rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5];
            let b = conservative_field(&spec, &config, &z).unwrap();
            let fd = numerics::fd_gradient(
                |v| {
                    measures::kde_density(&target, &k, v).unwrap().ln()
                        - measures::kde_density(&model, &k, v).unwrap().ln()
                },
                &z,
                1e-5,
            )
            .unwrap();
            for i in 0..2 {
                assert!(
                    (b[i] - fd[i]).abs() <= 1e-5 * (1.0 + b[i].abs()),
                    "{b:?} vs {fd:?}"
                );
            }
        }
    }

    #[test]
    fn potential_increases_along_frozen_flow() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let target = Measure::empirical(random_cloud(&mut rng, 5, 2, 1.0)).unwrap();
        let config = ParticleConfig::new(random_cloud(&mut rng, 4, 2, 1.0)).unwrap();
        let k = gaussian(2, 0.8);
        let spec = FieldSpec::conservative(target.clone(), k.clone()).unwrap();
        let model = config.to_measure();
        let bound = spec.bind(&config);
        let phi = |z: &[f64]| {
            measures::kde_density(&target, &k, z).unwrap().ln()
                - measures::kde_density(&model, &k, z).unwrap().ln()
        };
        let mut z = vec![1.5, -1.3];
        let mut last = phi(&z);
        for _ in 0..200 {
            let v = bound.eval(&z).unwrap();
            z = vecops::axpy(&z, 1e-3, &v);
            let now = phi(&z);
            assert!(now >= last - 1e-9, "potential decreased: {last} -> {now}");
            last = now;
        }
    }

    #[test]
    fn divergence_pair_single_particle_correction() {
        // N = 1, d = 1, h = 1: the correction equals -1 exactly.
        let target = Measure::gaussian_mixture(vec![vec![0.0]], vec![1.0], vec![1.0]).unwrap();
        let k = gaussian(1, 1.0);
        let config = ParticleConfig::new(vec![vec![0.4]]).unwrap();
        let q = measures::kde_density(&config.to_measure(), &k, &[0.4]).unwrap();
        let correction = kernels::laplacian_at_zero(&k).unwrap() / q;
        assert_relative_eq!(correction, -1.0, max_relative = 1e-12);

        let (lhs, rhs) = particle_divergence_pair(&config, &target, &k, 0).unwrap();
        assert!((lhs - rhs).abs() < 1e-4, "{lhs} vs {rhs}");
    }

    #[test]
    fn divergence_pair_agrees_on_random_configs() {
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        for rep in 0..50 {
            let n = [1usize, 5, 20][rep % 3];
            let d = [1usize, 2][rep % 2];
            let target =
                Measure::gaussian_mixture(vec![vec![0.0; d]], vec![1.0], vec![1.0]).unwrap();
            let k = gaussian(d, 0.7 + 0.5 * rng.random::<f64>());
            let config = ParticleConfig::new(random_cloud(&mut rng, n, d, 1.0)).unwrap();
            let i = rng.random_range(0..n);
            let (lhs, rhs) = particle_divergence_pair(&config, &target, &k, i).unwrap();
            assert!((lhs - rhs).abs() < 1e-4, "n={n} d={d}: {lhs} vs {rhs}");
        }
    }

    #[test]
    fn self_interaction_shrinks_like_one_over_n() {
        // With a fixed sampling distribution, |moving - frozen| divergence is
        // the correction term, of size |lap K_h(0)| / (N q).
        let mut rng = ChaCha8Rng::seed_from_u64(28);
        let target = Measure::gaussian_mixture(vec![vec![0.0]], vec![1.0], vec![1.0]).unwrap();
        let k = gaussian(1, 1.0);
        let mut logs = Vec::new();
        for &n in &[10usize, 20, 40, 80] {
            let config = ParticleConfig::new(random_cloud(&mut rng, n, 1, 1.0)).unwrap();
            let spec = FieldSpec::conservative(target.clone(), k.clone()).unwrap();
            let bound = spec.bind(&config);
            let xi = config.point(0).to_vec();
            let step = numerics::fd_step(&xi);
            let mut frozen = 0.0;
            let mut zp = xi.clone();
            zp[0] = xi[0] + step;
            frozen += bound.eval(&zp).unwrap()[0];
            zp[0] = xi[0] - step;
            frozen -= bound.eval(&zp).unwrap()[0];
            let frozen_div = frozen / (2.0 * step);
            let (lhs, _) = particle_divergence_pair(&config, &target, &k, 0).unwrap();
            logs.push(((n as f64).ln(), (lhs - frozen_div).abs().ln()));
        }
        let mx = logs.iter().map(|p| p.0).sum::<f64>() / logs.len() as f64;
        let my = logs.iter().map(|p| p.1).sum::<f64>() / logs.len() as f64;
        let slope = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum::<f64>()
            / logs.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum::<f64>();
        assert!((-1.4..=-0.6).contains(&slope), "1/N slope {slope}");
    }

    #[test]
    fn curl_of_gradient_field_vanishes_and_rotation_does_not() {
        let mut rng = ChaCha8Rng::seed_from_u64(27);
        let target = Measure::empirical(random_cloud(&mut rng, 6, 2, 1.0)).unwrap();
        let config = ParticleConfig::new(random_cloud(&mut rng, 5, 2, 1.0)).unwrap();
        let spec = FieldSpec::conservative(target, gaussian(2, 0.8)).unwrap();
        let bound = spec.bind(&config);
        for _ in 0..5 {
            let z = vec![rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5];
            let c = curl2d(|v| bound.eval(v), &z, 1e-4).unwrap();
            assert!(c.abs() <= 1e-5, "curl {c}");
        }

        let c = curl2d(|z: &[f64]| Ok(vec![-z[1], z[0]]), &[0.3, 0.4], 1e-4).unwrap();
        assert_relative_eq!(c, 2.0, max_relative = 1e-8);

        assert!(curl2d(|z: &[f64]| Ok(z.to_vec()), &[0.0], 1e-4).is_err());
    }

    #[test]
    fn spec_validation_rejects_bad_combinations() {
        let target = Measure::empirical(vec![vec![0.0]]).unwrap();
        assert!(FieldSpec::conservative(target.clone(), laplace(1, 1.0)).is_err());
        assert!(FieldSpec::laplace_loo(target.clone(), gaussian(1, 1.0)).is_err());
        assert!(FieldSpec::new(
            FieldKind::Displacement,
            target.clone(),
            laplace(1, 1.0),
            ModelSource::LeaveOneOut
        )
        .is_err());
        let mix = Measure::gaussian_mixture(vec![vec![0.0]], vec![1.0], vec![1.0]).unwrap();
        assert!(FieldSpec::displacement(mix, laplace(1, 1.0)).is_err());
    }
}
