//! Time integration of the finite-particle ODEs.
//!
//! The frozen-field Euler update moves every particle using velocities
//! computed from the same pre-step snapshot; sequential updates are not
//! offered. RK4 on the same interacting field serves as the reference
//! solution for step-size order checks.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{FieldKind, FieldSpec};
use crate::kernels::Family;
use crate::measures::ParticleConfig;
use crate::vecops;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    FrozenEuler,
    Rk4,
}

#[derive(Debug, Clone, Serialize)]
pub struct IntegratorParams {
    pub eta: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    pub record_every: usize,
    /// Minimum pairwise distance tolerated under a Laplace kernel; `None`
    /// defaults to 1e-8 * h at integration time.
    pub collision_guard: Option<f64>,
}

impl IntegratorParams {
    pub fn new(eta: f64, t_end: f64) -> Result<Self> {
        if !(eta > 0.0) || !eta.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "eta must be positive, got {eta}"
            )));
        }
        if !(t_end >= eta) {
            return Err(Error::InvalidParameter(format!(
                "t_end must be at least one step, got {t_end} with eta {eta}"
            )));
        }
        Ok(IntegratorParams {
            eta,
            t_end,
            scheme: Scheme::FrozenEuler,
            record_every: 1,
            collision_guard: None,
        })
    }

    pub fn with_scheme(mut self, scheme: Scheme) -> Self {
        self.scheme = scheme;
        self
    }

    pub fn with_record_every(mut self, every: usize) -> Self {
        self.record_every = every.max(1);
        self
    }

    pub fn with_collision_guard(mut self, guard: f64) -> Self {
        self.collision_guard = Some(guard);
        self
    }
}

/// Metadata frozen into every trajectory for reproducibility.
#[derive(Debug, Clone, Serialize)]
pub struct TrajectoryMeta {
    pub field_kind: FieldKind,
    pub kernel_family: Family,
    pub dim: usize,
    pub bandwidth: f64,
    pub n_particles: usize,
    pub eta: f64,
    pub t_end: f64,
    pub scheme: Scheme,
    pub record_every: usize,
    pub collision_guard: f64,
    pub seed: Option<u64>,
}

/// Recorded states of one integration run.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<ParticleConfig>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn final_state(&self) -> &ParticleConfig {
        self.states
            .last()
            .expect("trajectory has at least the initial state")
    }
}

fn effective_guard(spec: &FieldSpec, params: &IntegratorParams) -> f64 {
    params
        .collision_guard
        .unwrap_or(1e-8 * spec.kernel.bandwidth())
}

fn check_collision_guard(config: &ParticleConfig, spec: &FieldSpec, guard: f64) -> Result<()> {
    if spec.kernel.family() != Family::Laplace {
        return Ok(());
    }
    if let Some((dist, i, j)) = config.min_pairwise_distance() {
        if dist <= guard {
            return Err(Error::CollisionGuard { i, j, dist, guard });
        }
    }
    Ok(())
}

/// One frozen-field Euler step: x_i += eta * v_i with every velocity taken
/// from the pre-step configuration.
pub fn step_frozen_euler(
    config: &ParticleConfig,
    spec: &FieldSpec,
    eta: f64,
) -> Result<ParticleConfig> {
    let velocities = spec.velocities(config)?;
    let positions = config
        .positions()
        .iter()
        .zip(&velocities)
        .map(|(x, v)| vecops::axpy(x, eta, v))
        .collect();
    ParticleConfig::new(positions)
}

/// One classical RK4 step on the interacting field x -> (v_x(x_1), ...).
pub fn step_rk4(config: &ParticleConfig, spec: &FieldSpec, eta: f64) -> Result<ParticleConfig> {
    let shift = |base: &ParticleConfig, dir: &[Vec<f64>], s: f64| -> Result<ParticleConfig> {
        let positions = base
            .positions()
            .iter()
            .zip(dir)
            .map(|(x, v)| vecops::axpy(x, s, v))
            .collect();
        ParticleConfig::new(positions)
    };
    let k1 = spec.velocities(config)?;
    let k2 = spec.velocities(&shift(config, &k1, 0.5 * eta)?)?;
    let k3 = spec.velocities(&shift(config, &k2, 0.5 * eta)?)?;
    let k4 = spec.velocities(&shift(config, &k3, eta)?)?;
    let positions = config
        .positions()
        .iter()
        .enumerate()
        .map(|(i, x)| {
            x.iter()
                .enumerate()
                .map(|(m, &xm)| {
                    xm + eta / 6.0 * (k1[i][m] + 2.0 * k2[i][m] + 2.0 * k3[i][m] + k4[i][m])
                })
                .collect()
        })
        .collect();
    ParticleConfig::new(positions)
}

/// Integrate on the uniform grid t_k = k * eta up to t_end, recording every
/// `record_every` steps (the initial and final states always included).
pub fn integrate(
    config0: &ParticleConfig,
    spec: &FieldSpec,
    params: &IntegratorParams,
) -> Result<Trajectory> {
    let n_steps = ((params.t_end / params.eta).round() as usize).max(1);
    let guard = effective_guard(spec, params);
    let meta = TrajectoryMeta {
        field_kind: spec.kind,
        kernel_family: spec.kernel.family(),
        dim: spec.dim(),
        bandwidth: spec.kernel.bandwidth(),
        n_particles: config0.len(),
        eta: params.eta,
        t_end: n_steps as f64 * params.eta,
        scheme: params.scheme,
        record_every: params.record_every,
        collision_guard: guard,
        seed: None,
    };

    let mut times = vec![0.0];
    let mut states = vec![config0.clone()];
    let mut current = config0.clone();
    for k in 0..n_steps {
        let t = k as f64 * params.eta;
        let abort = |e: Error| Error::IntegrationAbort {
            t,
            source: Box::new(e),
        };
        check_collision_guard(&current, spec, guard).map_err(abort)?;
        current = match params.scheme {
            Scheme::FrozenEuler => step_frozen_euler(&current, spec, params.eta).map_err(abort)?,
            Scheme::Rk4 => step_rk4(&current, spec, params.eta).map_err(abort)?,
        };
        let step_index = k + 1;
        if step_index % params.record_every == 0 || step_index == n_steps {
            times.push(step_index as f64 * params.eta);
            states.push(current.clone());
        }
    }
    Ok(Trajectory {
        times,
        states,
        meta,
    })
}

/// RK4 run on the same field; reference solution for order checks.
pub fn integrate_rk4(
    config0: &ParticleConfig,
    spec: &FieldSpec,
    params: &IntegratorParams,
) -> Result<Trajectory> {
    let params = params.clone().with_scheme(Scheme::Rk4);
    integrate(config0, spec, &params)
}

/// Empirical lower estimate of the spatial Lipschitz constant of the frozen
/// field: max finite-difference Jacobian operator norm over probe points.
#[derive(Debug, Clone)]
pub struct LipschitzEstimate {
    pub value: f64,
    /// Probe indices skipped because the field was not evaluable there.
    pub skipped: Vec<usize>,
}

pub fn estimate_lipschitz(
    config: &ParticleConfig,
    spec: &FieldSpec,
    probe_points: &[Vec<f64>],
    fd_step: f64,
) -> Result<LipschitzEstimate> {
    if probe_points.is_empty() {
        return Err(Error::InvalidParameter(
            "estimate_lipschitz needs probe points".into(),
        ));
    }
    let d = spec.dim();
    let bound = spec.bind(config);
    let mut value: f64 = 0.0;
    let mut skipped = Vec::new();
    'probes: for (idx, z) in probe_points.iter().enumerate() {
        // FD Jacobian J[r][c] = d f_r / d z_c.
        let mut jac = vec![vec![0.0; d]; d];
        let mut zp = z.clone();
        for c in 0..d {
            zp[c] = z[c] + fd_step;
            let fp = match bound.eval(&zp) {
                Ok(v) => v,
                Err(_) => {
                    skipped.push(idx);
                    zp[c] = z[c];
                    continue 'probes;
                }
            };
            zp[c] = z[c] - fd_step;
            let fm = match bound.eval(&zp) {
                Ok(v) => v,
                Err(_) => {
                    skipped.push(idx);
                    zp[c] = z[c];
                    continue 'probes;
                }
            };
            zp[c] = z[c];
            for r in 0..d {
                jac[r][c] = (fp[r] - fm[r]) / (2.0 * fd_step);
            }
        }
        value = value.max(jacobian_opnorm(&jac));
    }
    Ok(LipschitzEstimate { value, skipped })
}

/// Largest singular value via 50 power iterations on J^T J.
fn jacobian_opnorm(jac: &[Vec<f64>]) -> f64 {
    let d = jac.len();
    // M = J^T J.
    let mut m = vec![vec![0.0; d]; d];
    for i in 0..d {
        for j in 0..d {
            m[i][j] = (0..d).map(|r| jac[r][i] * jac[r][j]).sum();
        }
    }
    let mut v = vec![1.0 / (d as f64).sqrt(); d];
    for _ in 0..50 {
        let mut w = vec![0.0; d];
        for i in 0..d {
            w[i] = vecops::dot(&m[i], &v);
        }
        let n = vecops::norm(&w);
        if n < 1e-300 {
            return 0.0;
        }
        v = vecops::scale(&w, 1.0 / n);
    }
    let mut w = vec![0.0; d];
    for i in 0..d {
        w[i] = vecops::dot(&m[i], &v);
    }
    vecops::dot(&v, &w).max(0.0).sqrt()
}

/// Accumulated Lipschitz exposure over a trajectory: trapezoid rule over the
/// per-time estimates probed at the current particle positions. Returns the
/// integral and the per-time estimates.
pub fn gamma_hat(traj: &Trajectory, spec: &FieldSpec, fd_step: f64) -> Result<(f64, Vec<f64>)> {
    let mut per_time = Vec::with_capacity(traj.states.len());
    for state in &traj.states {
        let est = estimate_lipschitz(state, spec, state.positions(), fd_step)?;
        per_time.push(est.value);
    }
    let mut total = 0.0;
    for i in 1..traj.times.len() {
        let dt = traj.times[i] - traj.times[i - 1];
        total += 0.5 * dt * (per_time[i] + per_time[i - 1]);
    }
    Ok((total, per_time))
}

/// Pairwise distance distortion along a trajectory against the bound
/// exp(gamma_hat). The estimate is a lower bound of the true Lipschitz
/// integral, so violations are possible and are reported, not hidden.
#[derive(Debug, Clone, Serialize)]
pub struct DistortionReport {
    pub max_ratio: f64,
    pub bound: f64,
    /// Pairs whose distance ratio exceeded bound * (1 + tol).
    pub violating_pairs: Vec<(usize, usize, f64)>,
    /// Pairs excluded because they started coincident.
    pub excluded_pairs: Vec<(usize, usize)>,
}

pub fn distortion_report(traj: &Trajectory, gamma_hat: f64, tol: f64) -> DistortionReport {
    let initial = &traj.states[0];
    let n = initial.len();
    let bound = gamma_hat.exp();
    let mut max_ratio: f64 = 0.0;
    let mut violating = Vec::new();
    let mut excluded = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            let d0 = vecops::dist(initial.point(i), initial.point(j));
            if d0 == 0.0 {
                excluded.push((i, j));
                continue;
            }
            let mut worst: f64 = 0.0;
            for state in &traj.states[1..] {
                worst = worst.max(vecops::dist(state.point(i), state.point(j)) / d0);
            }
            max_ratio = max_ratio.max(worst);
            if worst > bound * (1.0 + tol) {
                violating.push((i, j, worst));
            }
        }
    }
    if traj.states.len() == 1 {
        max_ratio = 1.0;
    }
    DistortionReport {
        max_ratio,
        bound,
        violating_pairs: violating,
        excluded_pairs: excluded,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::KernelSpec;
    use crate::measures::Measure;
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

    #[test]
    fn stationary_when_field_vanishes() {
        let pts = vec![vec![0.0], vec![1.0], vec![-1.0]];
        let target = Measure::empirical(pts.clone()).unwrap();
        let config = ParticleConfig::new(pts).unwrap();
        let spec = FieldSpec::conservative(target, gaussian(1, 0.7)).unwrap();
        let params = IntegratorParams::new(0.05, 0.5).unwrap();
        let traj = integrate(&config, &spec, &params).unwrap();
        for state in &traj.states {
            assert_eq!(state, &config);
        }
    }

    #[test]
    fn single_particle_euler_step_closed_form() {
        let target = Measure::empirical(vec![vec![2.0]]).unwrap();
        let config = ParticleConfig::new(vec![vec![0.5]]).unwrap();
        let h = 0.8;
        let spec = FieldSpec::conservative(target, gaussian(1, h)).unwrap();
        let stepped = step_frozen_euler(&config, &spec, 0.01).unwrap();
        assert_relative_eq!(
            stepped.point(0)[0],
            0.5 + 0.01 * (2.0 - 0.5) / (h * h),
            max_relative = 1e-12
        );
    }

    #[test]
    fn integration_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let target = Measure::empirical(random_cloud(&mut rng, 6, 2, 1.0)).unwrap();
        let config = ParticleConfig::new(random_cloud(&mut rng, 5, 2, 1.0)).unwrap();
        let spec = FieldSpec::conservative(target, gaussian(2, 0.8)).unwrap();
        let params = IntegratorParams::new(0.02, 0.2).unwrap();
        let a = integrate(&config, &spec, &params).unwrap();
        let b = integrate(&config, &spec, &params).unwrap();
        assert_eq!(a.times, b.times);
        for (sa, sb) in a.states.iter().zip(&b.states) {
            assert_eq!(sa, sb);
        }
    }

    #[test]
    fn update_is_permutation_equivariant() {
        // Equivariance holds exactly in real arithmetic; floating summation
        // order shifts the last bits, so compare at 1e-13.
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let target = Measure::empirical(random_cloud(&mut rng, 6, 2, 1.0)).unwrap();
        let pts = random_cloud(&mut rng, 5, 2, 1.0);
        let spec = FieldSpec::conservative(target, gaussian(2, 0.9)).unwrap();

        let perm = [3usize, 0, 4, 1, 2];
        let permuted: Vec<Vec<f64>> = perm.iter().map(|&i| pts[i].clone()).collect();

        let a = step_frozen_euler(&ParticleConfig::new(pts.clone()).unwrap(), &spec, 0.05).unwrap();
        let b = step_frozen_euler(&ParticleConfig::new(permuted).unwrap(), &spec, 0.05).unwrap();
        for (slot, &src) in perm.iter().enumerate() {
            for m in 0..2 {
                assert!(
                    (a.point(src)[m] - b.point(slot)[m]).abs() <= 1e-13,
                    "slot {slot} src {src}"
                );
            }
        }
    }

    #[test]
    fn rk4_matches_exponential_decay_per_particle() {
        // v(z) = -z decouples per particle: single-atom target at 0 with the
        // conservative field gives b(z) = (0 - z)/h^2 - 0 ... not linear; use
        // a synthetic check through displacement of single atoms instead:
        // a single particle and single-atom target y gives u(z) = y - z, so
        // with y = 0 the flow is exactly exponential decay.
        let target = Measure::empirical(vec![vec![0.0, 0.0]]).unwrap();
        let config = ParticleConfig::new(vec![vec![1.0, -2.0]]).unwrap();
        let spec = FieldSpec::displacement(target, gaussian(2, 1.0)).unwrap();
        let params = IntegratorParams::new(0.01, 2.0).unwrap();
        let traj = integrate_rk4(&config, &spec, &params).unwrap();
        let endpoint = traj.final_state().point(0).to_vec();
        let decay = (-2.0f64).exp();
        assert_relative_eq!(endpoint[0], decay, max_relative = 1e-8);
        assert_relative_eq!(endpoint[1], -2.0 * decay, max_relative = 1e-8);
    }

    #[test]
    fn euler_approaches_rk4_as_eta_shrinks() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let target = Measure::gaussian_mixture(
            vec![vec![1.0, 0.0], vec![-1.0, 0.0]],
            vec![0.5, 0.5],
            vec![0.5, 0.5],
        )
        .unwrap();
        let config = ParticleConfig::new(random_cloud(&mut rng, 8, 2, 1.0)).unwrap();
        let spec = FieldSpec::conservative(target, gaussian(2, 0.9)).unwrap();

        let reference =
            integrate_rk4(&config, &spec, &IntegratorParams::new(0.002, 0.4).unwrap()).unwrap();
        let end_ref = reference.final_state().clone();

        let mut errors = Vec::new();
        for eta in [0.04, 0.02, 0.01] {
            let traj =
                integrate(&config, &spec, &IntegratorParams::new(eta, 0.4).unwrap()).unwrap();
            let err: f64 = traj
                .final_state()
                .positions()
                .iter()
                .zip(end_ref.positions())
                .map(|(a, b)| vecops::dist(a, b))
                .sum();
            errors.push(err);
        }
        assert!(errors[0] > errors[1] && errors[1] > errors[2], "{errors:?}");
        let ratio = errors[0] / errors[1];
        assert!(ratio > 1.7 && ratio < 2.3, "halving ratio {ratio}");
    }

    #[test]
    fn collision_guard_names_the_offending_pair() {
        let target = Measure::empirical(vec![vec![3.0]]).unwrap();
        let k = KernelSpec::new(Family::Laplace, 1, 1.0).unwrap();
        let spec = FieldSpec::laplace_loo(target, k).unwrap();
        let config = ParticleConfig::new(vec![vec![0.0], vec![1e-12], vec![1.0]]).unwrap();
        let params = IntegratorParams::new(0.01, 0.1)
            .unwrap()
            .with_collision_guard(1e-8);
        let err = integrate(&config, &spec, &params).unwrap_err();
        match err {
            Error::IntegrationAbort { t, source } => {
                assert_eq!(t, 0.0);
                assert!(matches!(*source, Error::CollisionGuard { i: 0, j: 1, .. }));
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn lipschitz_estimate_behaviors() {
        // Single particle vs single atom: the conservative field is constant,
        // so the Jacobian norm is ~0.
        let target = Measure::empirical(vec![vec![2.0]]).unwrap();
        let config = ParticleConfig::new(vec![vec![0.0]]).unwrap();
        let spec = FieldSpec::conservative(target, gaussian(1, 1.0)).unwrap();
        let probes = vec![vec![0.3], vec![-0.4]];
        let est = estimate_lipschitz(&config, &spec, &probes, 1e-4).unwrap();
        assert!(est.value < 1e-8, "{}", est.value);
        assert!(est.skipped.is_empty());

        // Growing the probe set cannot decrease the estimate.
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let target = Measure::empirical(random_cloud(&mut rng, 5, 2, 1.0)).unwrap();
        let config = ParticleConfig::new(random_cloud(&mut rng, 4, 2, 1.0)).unwrap();
        let spec = FieldSpec::conservative(target, gaussian(2, 0.7)).unwrap();
        let probes: Vec<Vec<f64>> = random_cloud(&mut rng, 12, 2, 1.5);
        let small = estimate_lipschitz(&config, &spec, &probes[..4], 1e-4).unwrap();
        let large = estimate_lipschitz(&config, &spec, &probes, 1e-4).unwrap();
        assert!(large.value >= small.value);
    }

    #[test]
    fn distortion_report_cases() {
        // Stationary trajectory: max ratio 1.
        let pts = vec![vec![0.0], vec![1.0]];
        let target = Measure::empirical(pts.clone()).unwrap();
        let config = ParticleConfig::new(pts).unwrap();
        let spec = FieldSpec::conservative(target, gaussian(1, 0.7)).unwrap();
        let traj = integrate(&config, &spec, &IntegratorParams::new(0.05, 0.2).unwrap()).unwrap();
        let report = distortion_report(&traj, 0.0, 0.05);
        assert_relative_eq!(report.max_ratio, 1.0, max_relative = 1e-12);
        assert!(report.violating_pairs.is_empty());

        // Contracting field (u = -z per particle): ratios stay below 1.
        let target = Measure::empirical(vec![vec![0.0, 0.0]]).unwrap();
        let config =
            ParticleConfig::new(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![-1.0, 0.5]]).unwrap();
        let spec = FieldSpec::displacement(target, gaussian(2, 1.0)).unwrap();
        let traj = integrate(&config, &spec, &IntegratorParams::new(0.01, 1.0).unwrap()).unwrap();
        let report = distortion_report(&traj, 0.0, 0.05);
        assert!(report.max_ratio <= 1.0 + 1e-12, "{}", report.max_ratio);

        // Coincident initial pair is excluded and reported.
        let config = ParticleConfig::new(vec![vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap();
        let target = Measure::empirical(vec![vec![0.0, 0.0]]).unwrap();
        let spec = FieldSpec::displacement(target, gaussian(2, 1.0)).unwrap();
        let traj = integrate(&config, &spec, &IntegratorParams::new(0.01, 0.05).unwrap()).unwrap();
        let report = distortion_report(&traj, 0.0, 0.05);
        assert_eq!(report.excluded_pairs, vec![(0, 1)]);
    }

    #[test]
    fn gamma_hat_covers_random_gaussian_run() {
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        let target = Measure::gaussian_mixture(vec![vec![0.0, 0.0]], vec![1.0], vec![1.0]).unwrap();
        let config = ParticleConfig::new(random_cloud(&mut rng, 6, 2, 1.0)).unwrap();
        let spec = FieldSpec::conservative(target, gaussian(2, 1.0)).unwrap();
        let traj = integrate(&config, &spec, &IntegratorParams::new(0.02, 0.4).unwrap()).unwrap();
        let (gamma, per_time) = gamma_hat(&traj, &spec, 1e-4).unwrap();
        assert_eq!(per_time.len(), traj.states.len());
        assert!(gamma > 0.0);
        let report = distortion_report(&traj, gamma, 0.05);
        assert!(
            report.violating_pairs.is_empty(),
            "unexpected distortion violations: {:?}",
            report.violating_pairs
        );
    }
}
