//! Scalar functionals of a configuration, occupancy predicates, rate-bound
//! evaluators, coercivity constants, and one-step transport checks.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::fields::{self, FieldKind, FieldSpec};
use crate::kernels::{self, Family, KernelSpec};
use crate::measures::{self, Measure, ParticleConfig, DENSITY_FLOOR};
use crate::numerics::{self, GridSpec};
use crate::vecops;

/// Per-time diagnostics of a trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    /// Mean squared particle speed under the active field.
    pub v_n: f64,
    /// Mean Stein divergence of the active field at the particles.
    pub s_n: f64,
    /// Mean reciprocal KDE at the particles.
    pub r_n: f64,
    pub min_q: f64,
    /// Smallest neighbor count within r_k * h (self included).
    pub occupancy_min: usize,
    pub i_n: Option<f64>,
    pub curl_max_abs: Option<f64>,
    pub v_n_lap: Option<f64>,
    pub s_n_lap: Option<f64>,
    pub j_lap: Option<f64>,
    pub vcal_lap: Option<f64>,
    pub delta_sq: Option<f64>,
}

/// Quadrature backend for integral functionals.
#[derive(Debug, Clone)]
pub enum InMode {
    Grid(GridSpec),
    Mc { budget: usize, seed: u64 },
}

/// Value with an attached accuracy estimate (grid refinement error or Monte
/// Carlo standard error) and a coarseness warning.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct QuadratureEstimate {
    pub value: f64,
    pub error: f64,
    pub warn_coarse: bool,
}

fn at_particle(index: usize) -> impl Fn(Error) -> Error {
    move |source| Error::AtParticle {
        index,
        source: Box::new(source),
    }
}

/// Mean squared particle speed: (1/N) sum ||v_i||^2 with v_i the active
/// field's velocity at particle i (leave-one-out for the Laplace dynamics).
/// Failures name the offending particle.
pub fn v_n(config: &ParticleConfig, spec: &FieldSpec) -> Result<f64> {
    let bound = spec.bind(config);
    let mut total = 0.0;
    for i in 0..config.len() {
        let v = bound.velocity(i).map_err(at_particle(i))?;
        total += vecops::norm_sq(&v);
    }
    Ok(total / config.len() as f64)
}

/// Mean Stein divergence of the drift at the particles. The reference score
/// is the smoothed-target score, or the sharp-smoothed score for the
/// leave-one-out Laplace field.
pub fn s_n(config: &ParticleConfig, spec: &FieldSpec, fd_step: f64) -> Result<f64> {
    let score = |z: &[f64]| spec.reference_score(z);
    let mut total = 0.0;
    match spec.kind {
        FieldKind::Conservative | FieldKind::Displacement => {
            let bound = spec.bind(config);
            for i in 0..config.len() {
                total +=
                    fields::stein_divergence(|z| bound.eval(z), score, config.point(i), fd_step)
                        .map_err(at_particle(i))?;
            }
        }
        FieldKind::LaplaceLoo => {
            for i in 0..config.len() {
                let field = |z: &[f64]| fields::laplace_loo_field(spec, config, i, z);
                total += fields::stein_divergence(field, score, config.point(i), fd_step)
                    .map_err(at_particle(i))?;
            }
        }
    }
    Ok(total / config.len() as f64)
}

/// Smoothed Fisher-type discrepancy: integral of ||field||^2 against the
/// model KDE q_x. Grid quadrature needs d <= 2; Monte Carlo samples q_x
/// exactly, so the importance weight cancels.
pub fn i_n(config: &ParticleConfig, spec: &FieldSpec, mode: &InMode) -> Result<QuadratureEstimate> {
    let bound = spec.bind(config);
    let model = config.to_measure();
    let k = &spec.kernel;
    match mode {
        InMode::Grid(grid) => {
            if grid.dim() != spec.dim() {
                return Err(Error::DimensionMismatch {
                    expected: spec.dim(),
                    got: grid.dim(),
                });
            }
            let integrand = |z: &[f64]| {
                let q = measures::kde_density(&model, k, z).unwrap_or(f64::NAN);
                // Outside the KDE support (compact kernels) the weighted
                // integrand vanishes even though the field is undefined.
                if q <= DENSITY_FLOOR {
                    return 0.0;
                }
                let f = bound
                    .eval(z)
                    .map(|v| vecops::norm_sq(&v))
                    .unwrap_or(f64::NAN);
                f * q
            };
            let (value, error) = numerics::grid_integrate(integrand, grid)?;
            Ok(QuadratureEstimate {
                value,
                error,
                warn_coarse: error > 0.1 * value.abs().max(1e-12),
            })
        }
        InMode::Mc { budget, seed } => {
            let samples = measures::sample_from_kde(&model, k, *budget, *seed)?;
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for z in &samples {
                let v = vecops::norm_sq(&bound.eval(z)?);
                sum += v;
                sum_sq += v * v;
            }
            let n = samples.len() as f64;
            let mean = sum / n;
            let var = if samples.len() > 1 {
                (sum_sq - n * mean * mean).max(0.0) / (n - 1.0)
            } else {
                0.0
            };
            let stderr = (var / n).sqrt();
            Ok(QuadratureEstimate {
                value: mean,
                error: stderr,
                warn_coarse: stderr > 0.1 * mean.abs().max(1e-12),
            })
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ReciprocalKde {
    pub r_n: f64,
    pub min_q: f64,
}

/// Mean reciprocal KDE over the particles, with the smallest denominator.
/// The deterministic self-bound R_N <= N h^d / K(0) holds on every
/// configuration and is asserted here.
pub fn r_n(config: &ParticleConfig, k: &KernelSpec) -> Result<ReciprocalKde> {
    let model = config.to_measure();
    let n = config.len() as f64;
    let mut sum = 0.0;
    let mut min_q = f64::INFINITY;
    for i in 0..config.len() {
        let q = measures::kde_density(&model, k, config.point(i))?;
        if !(q > DENSITY_FLOOR) {
            return Err(Error::SingularDenominator {
                context: "r_n",
                value: q,
            });
        }
        min_q = min_q.min(q);
        sum += 1.0 / q;
    }
    let value = sum / n;
    let self_bound = n * k.bandwidth().powi(k.dim() as i32) / k.normalizer();
    assert!(
        value <= self_bound * (1.0 + 1e-9),
        "reciprocal-KDE self-bound violated: R_N = {value}, bound = {self_bound}"
    );
    Ok(ReciprocalKde { r_n: value, min_q })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct LaplacePopulation {
    /// Sharp-smoothed Stein drift of the full displacement field.
    pub j_lap: f64,
    /// Sharp-smoothed drift energy.
    pub vcal_lap: f64,
    /// Sharp-smoothed squared scale-mismatch residual.
    pub delta_sq: f64,
    pub j_err: f64,
    pub v_err: f64,
    pub d_err: f64,
}

/// The three sharp-smoothed population functionals of the Laplace analysis,
/// integrated against the normalized sharp model density.
pub fn laplace_population_pair(
    config: &ParticleConfig,
    target: &Measure,
    k: &KernelSpec,
    mode: &InMode,
) -> Result<LaplacePopulation> {
    if k.family() != Family::Laplace {
        return Err(Error::UnsupportedFamily {
            family: k.family().name(),
            op: "laplace_population_pair",
        });
    }
    let spec = FieldSpec::displacement(target.clone(), k.clone())?;
    let bound = spec.bind(config);
    let model = config.to_measure();
    let z_sharp = kernels::sharp_normalizer(k)?;

    let sharp_model_density =
        |z: &[f64]| measures::sharp_density(&model, k, z).map(|r| r / z_sharp);
    let stein = |z: &[f64]| {
        fields::stein_divergence(
            |w| bound.eval(w),
            |w| measures::sharp_score(target, k, w),
            z,
            numerics::fd_step(z),
        )
    };
    let residual = |z: &[f64]| fields::scale_residual_field(&spec, config, z);

    match mode {
        InMode::Grid(grid) => {
            if grid.dim() != k.dim() {
                return Err(Error::DimensionMismatch {
                    expected: k.dim(),
                    got: grid.dim(),
                });
            }
            let (j_lap, j_err) = numerics::grid_integrate(
                |z| stein(z).unwrap_or(f64::NAN) * sharp_model_density(z).unwrap_or(f64::NAN),
                grid,
            )?;
            let (vcal_lap, v_err) = numerics::grid_integrate(
                |z| {
                    bound
                        .eval(z)
                        .map(|v| vecops::norm_sq(&v))
                        .unwrap_or(f64::NAN)
                        * sharp_model_density(z).unwrap_or(f64::NAN)
                },
                grid,
            )?;
            let (delta_sq, d_err) = numerics::grid_integrate(
                |z| {
                    residual(z).map(|e| vecops::norm_sq(&e)).unwrap_or(f64::NAN)
                        * sharp_model_density(z).unwrap_or(f64::NAN)
                },
                grid,
            )?;
            Ok(LaplacePopulation {
                j_lap,
                vcal_lap,
                delta_sq,
                j_err,
                v_err,
                d_err,
            })
        }
        InMode::Mc { budget, seed } => {
            let samples = sample_from_sharp_kde(&model, k, *budget, *seed)?;
            let mut acc = [(0.0f64, 0.0f64); 3];
            for z in &samples {
                let vals = [
                    stein(z)?,
                    vecops::norm_sq(&bound.eval(z)?),
                    vecops::norm_sq(&residual(z)?),
                ];
                for (a, v) in acc.iter_mut().zip(vals) {
                    a.0 += v;
                    a.1 += v * v;
                }
            }
            let n = samples.len() as f64;
            let stat = |&(s, sq): &(f64, f64)| {
                let mean = s / n;
                let var = if n > 1.0 {
                    (sq - n * mean * mean).max(0.0) / (n - 1.0)
                } else {
                    0.0
                };
                (mean, (var / n).sqrt())
            };
            let (j_lap, j_err) = stat(&acc[0]);
            let (vcal_lap, v_err) = stat(&acc[1]);
            let (delta_sq, d_err) = stat(&acc[2]);
            Ok(LaplacePopulation {
                j_lap,
                vcal_lap,
                delta_sq,
                j_err,
                v_err,
                d_err,
            })
        }
    }
}

/// Exact samples from the normalized sharp-smoothed empirical density: pick
/// an atom, then draw the radius from the Gamma mixture
/// d/(d+1) Gamma(d+1, h) + 1/(d+1) Gamma(d, h).
fn sample_from_sharp_kde(
    alpha: &Measure,
    k: &KernelSpec,
    count: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    use rand::distr::weighted::WeightedIndex;
    use rand::{Rng, SeedableRng};
    use rand_distr::{Distribution, Gamma, StandardNormal};

    let (points, weights) = match alpha {
        Measure::Empirical { points, weights } => (points, weights),
        _ => {
            return Err(Error::UnsupportedCombination(
                "sharp sampling needs an empirical measure".into(),
            ))
        }
    };
    let d = k.dim();
    let h = k.bandwidth();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let pick = WeightedIndex::new(weights)
        .map_err(|e| Error::InvalidParameter(format!("weight table: {e}")))?;
    let heavy = Gamma::new(d as f64 + 1.0, h)
        .map_err(|e| Error::InvalidParameter(format!("gamma sampler: {e}")))?;
    let light = Gamma::new(d as f64, h)
        .map_err(|e| Error::InvalidParameter(format!("gamma sampler: {e}")))?;
    let p_heavy = d as f64 / (d as f64 + 1.0);
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let atom = &points[pick.sample(&mut rng)];
        let r = if rng.random::<f64>() < p_heavy {
            heavy.sample(&mut rng)
        } else {
            light.sample(&mut rng)
        };
        let dir: Vec<f64> = loop {
            let g: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
            let n = vecops::norm(&g);
            if n > 1e-12 {
                break vecops::scale(&g, 1.0 / n);
            }
        };
        out.push(vecops::axpy(atom, r, &dir));
    }
    Ok(out)
}

/// Coercivity constants gamma = lambda / (4 L^2) and
/// beta = lambda / (2 L^2) + 1 / (2 lambda) from scale-factor bounds.
pub fn coercivity_constants(lambda_h: f64, l_h: f64) -> Result<(f64, f64)> {
    if !(lambda_h > 0.0) || !(lambda_h <= l_h) {
        return Err(Error::InvalidParameter(format!(
            "coercivity needs 0 < lambda <= L, got lambda = {lambda_h}, L = {l_h}"
        )));
    }
    let gamma = lambda_h / (4.0 * l_h * l_h);
    let beta = lambda_h / (2.0 * l_h * l_h) + 1.0 / (2.0 * lambda_h);
    Ok((gamma, beta))
}

/// Per-particle neighbor counts within radius r_k * h, self included.
pub fn occupancy_counts(config: &ParticleConfig, h: f64, r_k: f64) -> Vec<usize> {
    let radius = r_k * h;
    let n = config.len();
    let mut counts = vec![0usize; n];
    for i in 0..n {
        for j in 0..n {
            if vecops::dist(config.point(i), config.point(j)) <= radius {
                counts[i] += 1;
            }
        }
    }
    counts
}

#[derive(Debug, Clone, Serialize)]
pub struct OccupancyReport {
    /// Whether every neighbor count reached alpha * N * h^d.
    pub holds: bool,
    pub occupancy_min: usize,
    pub threshold: f64,
    /// Direct minimum of q_x(x_i) over the particles.
    pub min_q: f64,
    /// Certified lower bound kappa_K * alpha (valid when `holds`).
    pub q_bound: f64,
    pub r_n: f64,
    /// Certified upper bound 1 / (kappa_K * alpha) (valid when `holds`).
    pub r_n_bound: f64,
}

/// Deterministic occupancy implication: if every particle has at least
/// alpha N h^d neighbors within r_k h, then q_x(x_i) >= kappa_k alpha and
/// R_N <= 1/(kappa_k alpha). Both sides are computed and reported.
pub fn occupancy_implication_check(
    config: &ParticleConfig,
    k: &KernelSpec,
    r_k: f64,
    kappa_k: f64,
    alpha: f64,
) -> Result<OccupancyReport> {
    if !(r_k > 0.0) || !(kappa_k > 0.0) || !(alpha > 0.0) {
        return Err(Error::InvalidParameter(
            "occupancy check needs positive r_k, kappa_k, alpha".into(),
        ));
    }
    let h = k.bandwidth();
    let d = k.dim();
    // Validity of the (r_k, kappa_k) pair: the kernel at radius r_k h must
    // dominate kappa_k h^{-d}. Radial monotonicity extends it inside.
    let mut edge = vec![0.0; d];
    edge[0] = r_k * h;
    let at_edge = kernels::eval_kernel(k, &edge)?;
    if at_edge < kappa_k * h.powi(-(d as i32)) * (1.0 - 1e-12) {
        return Err(Error::InvalidParameter(format!(
            "kernel lower bound fails: K_h(r_k h) = {at_edge} < kappa_k h^-d = {}",
            kappa_k * h.powi(-(d as i32))
        )));
    }

    let counts = occupancy_counts(config, h, r_k);
    let occupancy_min = counts.iter().copied().min().unwrap_or(0);
    let threshold = alpha * config.len() as f64 * h.powi(d as i32);
    let holds = counts.iter().all(|&c| c as f64 >= threshold);

    let rec = r_n(config, k)?;
    let q_bound = kappa_k * alpha;
    if holds {
        // The certificate is a theorem; a failure here is an implementation bug.
        assert!(
            rec.min_q >= q_bound * (1.0 - 1e-12) && rec.r_n <= (1.0 + 1e-12) / q_bound,
            "occupancy certificate violated: min_q = {}, bound = {q_bound}",
            rec.min_q
        );
    }
    Ok(OccupancyReport {
        holds,
        occupancy_min,
        threshold,
        min_q: rec.min_q,
        q_bound,
        r_n: rec.r_n,
        r_n_bound: 1.0 / q_bound,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct LooOccupancyReport {
    pub holds: bool,
    pub occupancy_min: usize,
    pub threshold: f64,
    /// Direct minimum of the leave-one-out KDE at the particles.
    pub min_q_loo: f64,
    /// Certified lower bound c_d e^{-r0} alpha (valid when `holds`).
    pub q_bound: f64,
}

/// Leave-one-out denominator control for the Laplace kernel: if every
/// particle has at least alpha (N-1) h^d strict neighbors within r0 h, the
/// leave-one-out KDE at that particle is at least c_d e^{-r0} alpha.
pub fn loo_occupancy_check(
    config: &ParticleConfig,
    k: &KernelSpec,
    r0: f64,
    alpha: f64,
) -> Result<LooOccupancyReport> {
    if k.family() != Family::Laplace {
        return Err(Error::UnsupportedFamily {
            family: k.family().name(),
            op: "loo_occupancy_check",
        });
    }
    if config.len() < 2 {
        return Err(Error::DegenerateConfig(
            "leave-one-out occupancy needs N >= 2".into(),
        ));
    }
    if !(r0 > 0.0) || !(alpha > 0.0) {
        return Err(Error::InvalidParameter(
            "loo occupancy needs positive r0, alpha".into(),
        ));
    }
    let h = k.bandwidth();
    let n = config.len();
    let radius = r0 * h;
    let mut occupancy_min = usize::MAX;
    for i in 0..n {
        let mut count = 0usize;
        for j in 0..n {
            if j != i && vecops::dist(config.point(i), config.point(j)) <= radius {
                count += 1;
            }
        }
        occupancy_min = occupancy_min.min(count);
    }
    let threshold = alpha * (n as f64 - 1.0) * h.powi(k.dim() as i32);
    let holds = occupancy_min as f64 >= threshold;

    let mut min_q_loo = f64::INFINITY;
    for i in 0..n {
        let loo = measures::loo_measure(config, i)?;
        min_q_loo = min_q_loo.min(measures::kde_density(&loo, k, config.point(i))?);
    }
    let q_bound = k.normalizer() * (-r0).exp() * alpha;
    if holds {
        assert!(
            min_q_loo >= q_bound * (1.0 - 1e-12),
            "leave-one-out certificate violated: min_q_loo = {min_q_loo}, bound = {q_bound}"
        );
    }
    Ok(LooOccupancyReport {
        holds,
        occupancy_min,
        threshold,
        min_q_loo,
        q_bound,
    })
}

/// Union-Chernoff occupancy failure bound: min(1, N exp(-p0 N h^d / 16)).
pub fn chernoff_occupancy_bound(p0: f64, n: usize, h: f64, d: usize) -> Result<f64> {
    if !(p0 > 0.0 && p0 <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "p0 must lie in (0, 1], got {p0}"
        )));
    }
    if n < 2 {
        return Err(Error::InvalidParameter(
            "chernoff bound needs N >= 2".into(),
        ));
    }
    if !(h > 0.0) {
        return Err(Error::InvalidParameter("bandwidth must be positive".into()));
    }
    Ok((n as f64 * (-p0 * n as f64 * h.powi(d as i32) / 16.0).exp()).min(1.0))
}

/// Inputs for the rate right-hand sides. The entropy surrogate kappa0 stands
/// in for the initial joint relative entropy per particle.
#[derive(Debug, Clone, Serialize)]
pub struct RateInputs {
    pub kappa0: f64,
    pub a1: f64,
    pub lambda_t: f64,
    pub b_a: f64,
    pub b_v: f64,
    pub m2_base: f64,
    pub n: usize,
    pub t: f64,
    pub h: f64,
    pub dim: usize,
    pub beta: f64,
    pub a_const: f64,
    pub c_const: f64,
    pub gamma_h: f64,
    pub beta_h: f64,
    pub delta_sq: f64,
    pub eps_s: f64,
    pub eps_v: f64,
}

impl Default for RateInputs {
    fn default() -> Self {
        RateInputs {
            kappa0: 0.0,
            a1: 0.0,
            lambda_t: 0.0,
            b_a: 0.0,
            b_v: 0.0,
            m2_base: 1.0,
            n: 1,
            t: 1.0,
            h: 1.0,
            dim: 1,
            beta: 0.0,
            a_const: 1.0,
            c_const: 1.0,
            gamma_h: 1.0,
            beta_h: 1.0,
            delta_sq: 0.0,
            eps_s: 0.0,
            eps_v: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct ConservativeRate {
    /// kappa0 / T.
    pub entropy_term: f64,
    /// a1 Lambda_T / (N h^{d+2}).
    pub self_term: f64,
    /// (1/2)(B_A + B_V) m2(K) h^2.
    pub quad_term: f64,
    pub total: f64,
}

pub fn rate_rhs_conservative(inputs: &RateInputs) -> Result<ConservativeRate> {
    if !(inputs.h > 0.0) || !(inputs.t > 0.0) || inputs.n == 0 {
        return Err(Error::InvalidParameter(
            "rate inputs need positive h, T and N >= 1".into(),
        ));
    }
    let entropy_term = inputs.kappa0 / inputs.t;
    let self_term =
        inputs.a1 * inputs.lambda_t / (inputs.n as f64 * inputs.h.powi(inputs.dim as i32 + 2));
    let quad_term = 0.5 * (inputs.b_a + inputs.b_v) * inputs.m2_base * inputs.h * inputs.h;
    Ok(ConservativeRate {
        entropy_term,
        self_term,
        quad_term,
        total: entropy_term + self_term + quad_term,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct LaplaceRate {
    /// kappa0 / (gamma_h N).
    pub entropy_term: f64,
    /// (beta_h / gamma_h) Delta^2.
    pub delta_term: f64,
    /// eps_S / gamma_h.
    pub eps_s_term: f64,
    pub eps_v_term: f64,
    pub total: f64,
}

pub fn rate_rhs_laplace(inputs: &RateInputs) -> Result<LaplaceRate> {
    if !(inputs.gamma_h > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "degenerate coercivity: gamma_h must be positive, got {}",
            inputs.gamma_h
        )));
    }
    if inputs.n == 0 {
        return Err(Error::InvalidParameter("rate inputs need N >= 1".into()));
    }
    let entropy_term = inputs.kappa0 / (inputs.gamma_h * inputs.n as f64);
    let delta_term = inputs.beta_h / inputs.gamma_h * inputs.delta_sq;
    let eps_s_term = inputs.eps_s / inputs.gamma_h;
    let eps_v_term = inputs.eps_v;
    Ok(LaplaceRate {
        entropy_term,
        delta_term,
        eps_s_term,
        eps_v_term,
        total: entropy_term + delta_term + eps_s_term + eps_v_term,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct BandwidthChoice {
    pub h_star: f64,
    /// A / (N h^{d+2}) at the minimizer.
    pub self_term: f64,
    /// C h^{2 - beta} at the minimizer.
    pub quad_term: f64,
}

/// Closed-form minimizer of A/(N h^{d+2}) + C h^{2-beta}:
/// h = ((d+2) A / ((2-beta) C N))^{1/(d+4-beta)}.
pub fn optimal_bandwidth(a: f64, c: f64, beta: f64, d: usize, n: usize) -> Result<BandwidthChoice> {
    if !(a > 0.0) || !(c > 0.0) || n == 0 {
        return Err(Error::InvalidParameter(
            "optimal_bandwidth needs positive A, C and N >= 1".into(),
        ));
    }
    if !(0.0..2.0).contains(&beta) {
        return Err(Error::OutOfRegime(format!(
            "beta = {beta}: the quadrature term h^(2-beta) does not vanish for beta >= 2"
        )));
    }
    let df = d as f64;
    let h_star = ((df + 2.0) * a / ((2.0 - beta) * c * n as f64)).powf(1.0 / (df + 4.0 - beta));
    let self_term = a / (n as f64 * h_star.powf(df + 2.0));
    let quad_term = c * h_star.powf(2.0 - beta);
    Ok(BandwidthChoice {
        h_star,
        self_term,
        quad_term,
    })
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct W2Report {
    /// eta * sqrt(V_N): cost of the identity coupling.
    pub coupling_bound: f64,
    /// Optimal-assignment W2 between the cloud and its drifted image.
    pub exact_w2: f64,
    pub dominated: bool,
}

/// One explicit drift step changes the empirical law by at most
/// eta sqrt(V_N); the exact assignment can only improve on the identity
/// coupling.
pub fn one_step_w2_check(config: &ParticleConfig, spec: &FieldSpec, eta: f64) -> Result<W2Report> {
    if config.len() > 256 {
        return Err(Error::InvalidParameter(
            "one_step_w2_check supports N <= 256".into(),
        ));
    }
    let velocities = spec.velocities(config)?;
    let v_mean_sq =
        velocities.iter().map(|v| vecops::norm_sq(v)).sum::<f64>() / config.len() as f64;
    let coupling_bound = eta * v_mean_sq.sqrt();
    let drifted: Vec<Vec<f64>> = config
        .positions()
        .iter()
        .zip(&velocities)
        .map(|(x, v)| vecops::axpy(x, eta, v))
        .collect();
    let exact_w2 = numerics::exact_w2_empirical(config.positions(), &drifted)?;
    Ok(W2Report {
        coupling_bound,
        exact_w2,
        dominated: exact_w2 <= coupling_bound + 1e-12,
    })
}

/// Leave-one-out approximation errors of the Laplace dynamics: the mean
/// absolute gaps between masked and full-field Stein divergences and squared
/// speeds at the particles.
pub fn loo_errors(
    config: &ParticleConfig,
    target: &Measure,
    k: &KernelSpec,
    fd_step: f64,
) -> Result<(f64, f64)> {
    if k.family() != Family::Laplace {
        return Err(Error::UnsupportedFamily {
            family: k.family().name(),
            op: "loo_errors",
        });
    }
    let spec = FieldSpec::displacement(target.clone(), k.clone())?;
    let bound = spec.bind(config);
    let score = |z: &[f64]| measures::sharp_score(target, k, z);
    let n = config.len();
    if n < 2 {
        return Err(Error::DegenerateConfig("loo_errors needs N >= 2".into()));
    }
    let mut ell_s = 0.0;
    let mut ell_v = 0.0;
    for i in 0..n {
        let xi = config.point(i);
        let loo_field = |z: &[f64]| fields::laplace_loo_field(&spec, config, i, z);
        let a_loo = fields::stein_divergence(loo_field, score, xi, fd_step)?;
        let a_full = fields::stein_divergence(|z| bound.eval(z), score, xi, fd_step)?;
        ell_s += (a_loo - a_full).abs();

        let u_loo = fields::laplace_loo_field(&spec, config, i, xi)?;
        let u_full = bound.eval(xi)?;
        ell_v += (vecops::norm_sq(&u_loo) - vecops::norm_sq(&u_full)).abs();
    }
    Ok((ell_s / n as f64, ell_v / n as f64))
}

/// Bounding box of the given point sets padded by pad * h on every side.
pub fn quadrature_window(
    point_sets: &[&[Vec<f64>]],
    h: f64,
    pad: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let first = point_sets
        .iter()
        .flat_map(|s| s.iter())
        .next()
        .ok_or_else(|| Error::InvalidParameter("quadrature window needs points".into()))?;
    let d = first.len();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for set in point_sets {
        for p in *set {
            for m in 0..d {
                lo[m] = lo[m].min(p[m]);
                hi[m] = hi[m].max(p[m]);
            }
        }
    }
    for m in 0..d {
        lo[m] -= pad * h;
        hi[m] += pad * h;
    }
    Ok((lo, hi))
}

/// Empirical sup-norm estimates of the Hessians of the Stein divergence and
/// of the squared field, over the grid. Estimates, not certified bounds.
pub fn hessian_sup_pair(
    config: &ParticleConfig,
    spec: &FieldSpec,
    grid: &GridSpec,
    hessian_step: f64,
    fd_step: f64,
) -> Result<(f64, f64)> {
    let bound = spec.bind(config);
    let score = |z: &[f64]| spec.reference_score(z);
    let stein = |z: &[f64]| {
        fields::stein_divergence(|w| bound.eval(w), score, z, fd_step).unwrap_or(f64::NAN)
    };
    let energy = |z: &[f64]| {
        bound
            .eval(z)
            .map(|v| vecops::norm_sq(&v))
            .unwrap_or(f64::NAN)
    };
    let b_a = numerics::hessian_sup_estimate(stein, grid, hessian_step)?;
    let b_v = numerics::hessian_sup_estimate(energy, grid, hessian_step)?;
    Ok((b_a, b_v))
}

/// Entropy surrogate kappa0 = KL(mu0 || rho) by grid quadrature, for an
/// analytic mixture initialization against the smoothed target.
pub fn kappa0_from_mixture(
    initial: &Measure,
    target: &Measure,
    k: &KernelSpec,
    grid: &GridSpec,
) -> Result<f64> {
    let integrand = |z: &[f64]| {
        let mu = initial.mixture_density(z).unwrap_or(f64::NAN);
        if mu < 1e-300 {
            return 0.0;
        }
        let rho = measures::kde_density(target, k, z).unwrap_or(f64::NAN);
        mu * (mu.ln() - rho.ln())
    };
    let (value, _) = numerics::grid_integrate(integrand, grid)?;
    Ok(value)
}

/// Which optional diagnostics to compute per recorded time.
#[derive(Debug, Clone)]
pub struct DiagnosticsOptions {
    pub i_n: Option<InMode>,
    pub curl: bool,
    pub laplace_population: Option<InMode>,
    /// Neighbor radius in bandwidth units for the occupancy count.
    pub r_k: f64,
}

impl Default for DiagnosticsOptions {
    fn default() -> Self {
        DiagnosticsOptions {
            i_n: None,
            curl: false,
            laplace_population: None,
            r_k: 1.0,
        }
    }
}

/// Diagnostics for every recorded state of a trajectory.
pub fn trajectory_records(
    traj: &crate::dynamics::Trajectory,
    spec: &FieldSpec,
    opts: &DiagnosticsOptions,
) -> Result<Vec<DiagnosticsRecord>> {
    let mut records = Vec::with_capacity(traj.states.len());
    for (&t, state) in traj.times.iter().zip(&traj.states) {
        records.push(record_at(t, state, spec, opts)?);
    }
    Ok(records)
}

fn record_at(
    t: f64,
    state: &ParticleConfig,
    spec: &FieldSpec,
    opts: &DiagnosticsOptions,
) -> Result<DiagnosticsRecord> {
    let max_norm = state
        .positions()
        .iter()
        .map(|p| vecops::norm(p))
        .fold(0.0, f64::max);
    let fd = 1e-4 * (1.0 + max_norm);

    let v = v_n(state, spec)?;
    let s = s_n(state, spec, fd)?;
    let rec = r_n(state, &spec.kernel)?;
    let occupancy_min = occupancy_counts(state, spec.kernel.bandwidth(), opts.r_k)
        .into_iter()
        .min()
        .unwrap_or(0);

    let i_n_value = match &opts.i_n {
        Some(mode) => Some(i_n(state, spec, mode)?.value),
        None => None,
    };

    let curl_max_abs = if opts.curl && spec.dim() == 2 {
        let bound = spec.bind(state);
        let mut worst: f64 = 0.0;
        for i in 0..state.len() {
            let z = state.point(i);
            worst = worst.max(fields::curl2d(|w| bound.eval(w), z, numerics::fd_step(z))?.abs());
        }
        Some(worst)
    } else {
        None
    };

    let laplace_kernel = spec.kernel.family() == Family::Laplace;
    let (v_lap, s_lap) = if laplace_kernel && state.len() >= 2 {
        match spec.kind {
            FieldKind::LaplaceLoo => (Some(v), Some(s)),
            _ => {
                let loo_spec = FieldSpec::laplace_loo(spec.target.clone(), spec.kernel.clone())?;
                (
                    Some(v_n(state, &loo_spec)?),
                    Some(s_n(state, &loo_spec, fd)?),
                )
            }
        }
    } else {
        (None, None)
    };

    let (j_lap, vcal_lap, delta_sq) = match (&opts.laplace_population, laplace_kernel) {
        (Some(mode), true) => {
            let pop = laplace_population_pair(state, &spec.target, &spec.kernel, mode)?;
            (Some(pop.j_lap), Some(pop.vcal_lap), Some(pop.delta_sq))
        }
        _ => (None, None, None),
    };

    Ok(DiagnosticsRecord {
        t,
        v_n: v,
        s_n: s,
        r_n: rec.r_n,
        min_q: rec.min_q,
        occupancy_min,
        i_n: i_n_value,
        curl_max_abs,
        v_n_lap: v_lap,
        s_n_lap: s_lap,
        j_lap,
        vcal_lap,
        delta_sq,
    })
}
