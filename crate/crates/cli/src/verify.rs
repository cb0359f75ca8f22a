//! Verification suites: seeded property checks over the library's
//! identities, bounds, occupancy certificates, and integrator order, each
//! reported as JSON with measured values and tolerances.

use anyhow::{bail, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use driftlab::diagnostics::{self, InMode};
use driftlab::dynamics::{self, IntegratorParams};
use driftlab::fields::{self, FieldSpec};
use driftlab::kernels::{self, Family, KernelSpec, MomentOrder};
use driftlab::measures::{self, Measure, ParticleConfig};
use driftlab::numerics::{self, GridSpec, QuadratureRule};
use driftlab::vecops;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    /// Slug of the identity or bound the check exercises.
    pub anchor: String,
    pub value: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    fn at_most(name: &str, anchor: &str, value: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            anchor: anchor.into(),
            value,
            tolerance,
            pass: value <= tolerance,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub suite: String,
    pub seed: u64,
    pub params_hash: String,
    pub quadrature_window: Option<(Vec<f64>, Vec<f64>)>,
    pub checks: Vec<Check>,
    pub all_pass: bool,
}

fn params_hash(suite: &str, seed: u64) -> String {
    let digest = Sha256::digest(format!("driftlab-verify:{suite}:{seed}:v1").as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

fn cloud(rng: &mut ChaCha8Rng, n: usize, d: usize, scale: f64) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            (0..d)
                .map(|_| (rng.random::<f64>() - 0.5) * 2.0 * scale)
                .collect()
        })
        .collect()
}

fn point(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> Vec<f64> {
    (0..d)
        .map(|_| (rng.random::<f64>() - 0.5) * 2.0 * scale)
        .collect()
}

/// Simpson quadrature at the finest level with a conservative error: the
/// worst refinement gap across the given resolutions. Robust for integrands
/// with kinks at the atoms.
fn integrate_robust<F: Fn(&[f64]) -> f64>(
    f: F,
    lo: &[f64],
    hi: &[f64],
    levels: &[usize],
) -> Result<(f64, f64)> {
    let mut value = 0.0;
    let mut err: f64 = 0.0;
    for (i, &n) in levels.iter().enumerate() {
        let grid = GridSpec::new(lo.to_vec(), hi.to_vec(), n, QuadratureRule::Simpson)?;
        let (v, e) = numerics::grid_integrate(&f, &grid)?;
        if i == 0 {
            value = v;
        }
        err = err.max(e);
    }
    Ok((value, err))
}

pub fn run_suite(suite: &str, seed: u64) -> Result<Report> {
    let (checks, window) = match suite {
        "identities" => identities_suite(seed)?,
        "bounds" => bounds_suite(seed)?,
        "occupancy" => occupancy_suite(seed)?,
        "euler" => (euler_suite(seed)?, None),
        other => bail!("unknown suite {other:?} (expected identities|bounds|occupancy|euler)"),
    };
    let all_pass = checks.iter().all(|c| c.pass);
    Ok(Report {
        suite: suite.into(),
        seed,
        params_hash: params_hash(suite, seed),
        quadrature_window: window,
        checks,
        all_pass,
    })
}

type SuiteOutput = (Vec<Check>, Option<(Vec<f64>, Vec<f64>)>);

fn identities_suite(seed: u64) -> Result<SuiteOutput> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();

    // Gaussian kernels: score residual equals the mean-shift difference over h^2.
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let d = rng.random_range(1..3);
        let h = 0.3 + rng.random::<f64>();
        let target = Measure::empirical(cloud(&mut rng, 6, d, 1.5))?;
        let config = ParticleConfig::new(cloud(&mut rng, 5, d, 1.5))?;
        let k = KernelSpec::new(Family::Gaussian, d, h)?;
        let cons = FieldSpec::conservative(target.clone(), k.clone())?;
        let disp = FieldSpec::displacement(target, k)?;
        let z = point(&mut rng, d, 2.0);
        let b = fields::conservative_field(&cons, &config, &z)?;
        let u = fields::displacement_field(&disp, &config, &z)?;
        let gap: f64 = (0..d)
            .map(|i| (b[i] - u[i] / (h * h)).powi(2))
            .sum::<f64>()
            .sqrt();
        worst = worst.max(gap / (1.0 + vecops::norm(&b)));
    }
    checks.push(Check::at_most(
        "gaussian proportionality",
        "score-residual-equals-meanshift-over-h2",
        worst,
        1e-12,
    ));

    // Sharp companion kernel gradient.
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let d = rng.random_range(1..4);
        let h = 0.3 + 1.2 * rng.random::<f64>();
        let k = KernelSpec::new(Family::Laplace, d, h)?;
        let r = h * 0.01 * 1000f64.powf(rng.random::<f64>());
        let mut u = point(&mut rng, d, 1.0);
        let n = vecops::norm(&u).max(1e-12);
        u = vecops::scale(&u, r / n);
        let fd =
            numerics::fd_gradient(|v| kernels::sharp_kernel_eval(&k, v).unwrap(), &u, 1e-6 * h)?;
        let exact = kernels::sharp_kernel_grad(&k, &u)?;
        let gap: f64 = (0..d)
            .map(|i| (fd[i] - exact[i]).powi(2))
            .sum::<f64>()
            .sqrt();
        worst = worst.max(gap / vecops::norm(&exact).max(1e-30));
    }
    checks.push(Check::at_most(
        "sharp kernel gradient",
        "companion-kernel-gradient-is-minus-u-times-kernel",
        worst,
        1e-6,
    ));

    // Scale-radius identity and sharp-score factorization.
    let mut worst_radius: f64 = 0.0;
    let mut worst_factor: f64 = 0.0;
    for _ in 0..50 {
        let d = rng.random_range(1..3);
        let h = 0.3 + rng.random::<f64>();
        let k = KernelSpec::new(Family::Laplace, d, h)?;
        let alpha = Measure::empirical(cloud(&mut rng, 7, d, 1.2))?;
        let z = point(&mut rng, d, 1.5);
        let a = measures::scale_factor(&alpha, &k, &z)?;
        let rbar = measures::mean_radius(&alpha, &k, &z)?;
        worst_radius = worst_radius.max((a - h * (rbar + h)).abs() / (1.0 + a.abs()));
        let m = measures::mean_shift(&alpha, &k, &z)?;
        let sigma = measures::sharp_score(&alpha, &k, &z)?;
        let scale = 1.0 + vecops::norm(&m);
        for i in 0..d {
            worst_factor = worst_factor.max((m[i] - a * sigma[i]).abs() / scale);
        }
    }
    checks.push(Check::at_most(
        "scale radius identity",
        "scale-factor-equals-h-radius-plus-h",
        worst_radius,
        1e-10,
    ));
    checks.push(Check::at_most(
        "sharp score representation",
        "meanshift-factors-through-sharp-score",
        worst_factor,
        1e-10,
    ));

    // Displacement field decomposition.
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let d = rng.random_range(1..3);
        let h = 0.3 + rng.random::<f64>();
        let k = KernelSpec::new(Family::Laplace, d, h)?;
        let target = Measure::empirical(cloud(&mut rng, 7, d, 1.2))?;
        let config = ParticleConfig::new(cloud(&mut rng, 6, d, 1.2))?;
        let spec = FieldSpec::displacement(target, k.clone())?;
        let z = point(&mut rng, d, 1.5);
        let u = fields::displacement_field(&spec, &config, &z)?;
        let mismatch = fields::sharp_mismatch_field(&spec, &config, &z)?;
        let residual = fields::scale_residual_field(&spec, &config, &z)?;
        let a_model = measures::scale_factor(&config.to_measure(), &k, &z)?;
        let scale = 1.0 + vecops::norm(&u);
        for i in 0..d {
            worst = worst.max((u[i] - a_model * mismatch[i] - residual[i]).abs() / scale);
        }
    }
    checks.push(Check::at_most(
        "laplace decomposition",
        "displacement-equals-scaled-mismatch-plus-residual",
        worst,
        1e-10,
    ));

    // Stein identities by quadrature; the window of the first setup is
    // embedded in the report.
    let mut window = None;
    let mut worst_margin = f64::NEG_INFINITY;
    for _ in 0..2 {
        let h = 0.4 + 0.5 * rng.random::<f64>();
        let target = Measure::empirical(cloud(&mut rng, 6, 1, 1.0))?;
        let config = ParticleConfig::new(cloud(&mut rng, 5, 1, 1.0))?;
        let k = KernelSpec::new(Family::Gaussian, 1, h)?;
        let spec = FieldSpec::conservative(target.clone(), k.clone())?;
        let bound = spec.bind(&config);
        let model = config.to_measure();
        let (lo, hi) =
            diagnostics::quadrature_window(&[config.positions(), target.support_points()], h, 6.0)?;
        if window.is_none() {
            window = Some((lo.clone(), hi.clone()));
        }
        let (lhs, err_lhs) = integrate_robust(
            |z| {
                fields::stein_divergence(
                    |w| bound.eval(w),
                    |w| spec.reference_score(w),
                    z,
                    numerics::fd_step(z),
                )
                .unwrap()
                    * measures::kde_density(&model, &k, z).unwrap()
            },
            &lo,
            &hi,
            &[513, 257],
        )?;
        let (rhs, err_rhs) = integrate_robust(
            |z| {
                vecops::norm_sq(&bound.eval(z).unwrap())
                    * measures::kde_density(&model, &k, z).unwrap()
            },
            &lo,
            &hi,
            &[513, 257],
        )?;
        let tol = (1e-3 * rhs.abs()).max(2.0 * (err_lhs + err_rhs + 1e-5 * (1.0 + rhs.abs())));
        worst_margin = worst_margin.max((lhs - rhs).abs() - tol);
    }
    checks.push(Check::at_most(
        "kde averaged stein identity",
        "stein-integral-equals-fisher",
        worst_margin,
        0.0,
    ));

    let mut worst_margin = f64::NEG_INFINITY;
    for _ in 0..2 {
        let h = 0.4 + 0.3 * rng.random::<f64>();
        let target = Measure::empirical(cloud(&mut rng, 6, 1, 1.0))?;
        let config = ParticleConfig::new(cloud(&mut rng, 5, 1, 1.0))?;
        let k = KernelSpec::new(Family::Laplace, 1, h)?;
        let spec = FieldSpec::displacement(target.clone(), k.clone())?;
        let bound = spec.bind(&config);
        let model = config.to_measure();
        let z_sharp = kernels::sharp_normalizer(&k)?;
        let (lo, hi) = diagnostics::quadrature_window(
            &[config.positions(), target.support_points()],
            h,
            25.0,
        )?;
        let rho_sharp = |z: &[f64]| measures::sharp_density(&model, &k, z).unwrap() / z_sharp;
        let (lhs, err_lhs) = integrate_robust(
            |z| {
                fields::stein_divergence(
                    |w| bound.eval(w),
                    |w| measures::sharp_score(&target, &k, w),
                    z,
                    numerics::fd_step(z),
                )
                .unwrap()
                    * rho_sharp(z)
            },
            &lo,
            &hi,
            &[1025, 513, 257],
        )?;
        let (rhs, err_rhs) = integrate_robust(
            |z| {
                let mismatch = fields::sharp_mismatch_field(&spec, &config, z).unwrap();
                vecops::dot(&mismatch, &bound.eval(z).unwrap()) * rho_sharp(z)
            },
            &lo,
            &hi,
            &[1025, 513, 257],
        )?;
        let tol = (1e-3 * rhs.abs()).max(2.0 * (err_lhs + err_rhs + 1e-5 * (1.0 + rhs.abs())));
        worst_margin = worst_margin.max((lhs - rhs).abs() - tol);
    }
    checks.push(Check::at_most(
        "sharp smoothed stein identity",
        "sharp-stein-integral-equals-mismatch-projection",
        worst_margin,
        0.0,
    ));

    // Center-evaluation divergence: moving vs frozen plus self-interaction.
    let mut worst: f64 = 0.0;
    for _ in 0..8 {
        let d = rng.random_range(1..3);
        let n = rng.random_range(1..12);
        let h = 0.6 + 0.5 * rng.random::<f64>();
        let k = KernelSpec::new(Family::Gaussian, d, h)?;
        let target = Measure::gaussian_mixture(vec![vec![0.0; d]], vec![1.0], vec![1.0])?;
        let config = ParticleConfig::new(cloud(&mut rng, n, d, 1.0))?;
        let i = rng.random_range(0..n);
        let (lhs, rhs) = fields::particle_divergence_pair(&config, &target, &k, i)?;
        worst = worst.max((lhs - rhs).abs());
    }
    checks.push(Check::at_most(
        "center divergence self interaction",
        "moving-divergence-equals-frozen-plus-correction",
        worst,
        1e-4,
    ));

    // Conservative field is the gradient of the log-density ratio.
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let h = 0.5 + 0.4 * rng.random::<f64>();
        let target = Measure::empirical(cloud(&mut rng, 6, 2, 1.0))?;
        let config = ParticleConfig::new(cloud(&mut rng, 5, 2, 1.0))?;
        let k = KernelSpec::new(Family::Gaussian, 2, h)?;
        let spec = FieldSpec::conservative(target.clone(), k.clone())?;
        let model = config.to_measure();
        let z = point(&mut rng, 2, 1.0);
        let b = fields::conservative_field(&spec, &config, &z)?;
        let fd = numerics::fd_gradient(
            |v| {
                measures::kde_density(&target, &k, v).unwrap().ln()
                    - measures::kde_density(&model, &k, v).unwrap().ln()
            },
            &z,
            1e-5,
        )?;
        for i in 0..2 {
            worst = worst.max((b[i] - fd[i]).abs() / (1.0 + b[i].abs()));
        }
    }
    checks.push(Check::at_most(
        "gradient structure",
        "conservative-field-is-a-gradient",
        worst,
        1e-5,
    ));

    Ok((checks, window))
}

fn bounds_suite(seed: u64) -> Result<SuiteOutput> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();

    // Deterministic reciprocal-KDE self-bound.
    let mut worst_ratio: f64 = 0.0;
    for _ in 0..300 {
        let d = rng.random_range(1..4);
        let family = match rng.random_range(0..3) {
            0 => Family::Gaussian,
            1 => Family::Laplace,
            _ => Family::SmoothCompact,
        };
        let h = 0.2 + 1.2 * rng.random::<f64>();
        let k = KernelSpec::new(family, d, h)?;
        let n = rng.random_range(1..16);
        let config = ParticleConfig::new(cloud(&mut rng, n, d, 1.5))?;
        let rec = diagnostics::r_n(&config, &k)?;
        let bound = n as f64 * h.powi(d as i32) / k.normalizer();
        worst_ratio = worst_ratio.max(rec.r_n / bound);
    }
    checks.push(Check::at_most(
        "reciprocal kde self bound",
        "r-n-at-most-n-h-d-over-k0",
        worst_ratio,
        1.0 + 1e-9,
    ));

    // Point-evaluation quadrature sandwich.
    let mut window = None;
    let mut worst_margin = f64::NEG_INFINITY;
    for _ in 0..5 {
        let h = 0.5 + 0.5 * rng.random::<f64>();
        let target = Measure::empirical(cloud(&mut rng, 6, 1, 1.0))?;
        let n_c = rng.random_range(4..8);
        let config = ParticleConfig::new(cloud(&mut rng, n_c, 1, 1.0))?;
        let k = KernelSpec::new(Family::Gaussian, 1, h)?;
        let spec = FieldSpec::conservative(target.clone(), k.clone())?;
        let (lo, hi) =
            diagnostics::quadrature_window(&[config.positions(), target.support_points()], h, 6.0)?;
        if window.is_none() {
            window = Some((lo.clone(), hi.clone()));
        }
        let grid = GridSpec::new(lo.clone(), hi.clone(), 513, QuadratureRule::Simpson)?;
        let s_n = diagnostics::s_n(&config, &spec, 1e-4)?;
        let v_n = diagnostics::v_n(&config, &spec)?;
        let i_n = diagnostics::i_n(&config, &spec, &InMode::Grid(grid.clone()))?;
        let hess_step = 1e-3 * (1.0 + lo[0].abs().max(hi[0].abs()));
        let (b_a, b_v) = diagnostics::hessian_sup_pair(&config, &spec, &grid, hess_step, 1e-4)?;
        let m2_h = kernels::kernel_moment(&k, MomentOrder::Second);
        worst_margin = worst_margin.max((s_n - i_n.value).abs() - 0.5 * b_a * m2_h);
        worst_margin = worst_margin.max((v_n - i_n.value).abs() - 0.5 * b_v * m2_h);
    }
    checks.push(Check::at_most(
        "quadrature sandwich",
        "point-evaluation-error-bounded-by-hessian-sup",
        worst_margin,
        0.0,
    ));

    // Coercivity of the sharp-smoothed Stein drift.
    let mut worst_margin = f64::NEG_INFINITY;
    for _ in 0..10 {
        let h = 0.4 + 0.4 * rng.random::<f64>();
        let target = Measure::empirical(cloud(&mut rng, 6, 1, 1.0))?;
        let n_c = rng.random_range(4..8);
        let config = ParticleConfig::new(cloud(&mut rng, n_c, 1, 1.0))?;
        let k = KernelSpec::new(Family::Laplace, 1, h)?;
        let (lo, hi) = diagnostics::quadrature_window(
            &[config.positions(), target.support_points()],
            h,
            25.0,
        )?;
        let grid = GridSpec::new(lo, hi, 1025, QuadratureRule::Simpson)?;
        let model = config.to_measure();
        let mut lambda = f64::INFINITY;
        let mut big_l = 0.0f64;
        for x in grid.axis_nodes(0) {
            let a = measures::scale_factor(&model, &k, &[x])?;
            lambda = lambda.min(a);
            big_l = big_l.max(a);
        }
        let (gamma, beta) = diagnostics::coercivity_constants(lambda, big_l)?;
        let pop = diagnostics::laplace_population_pair(&config, &target, &k, &InMode::Grid(grid))?;
        let tol = 2.0 * (pop.j_err + gamma * pop.v_err + beta * pop.d_err)
            + 1e-5 * (1.0 + pop.j_lap.abs());
        worst_margin =
            worst_margin.max(gamma * pop.vcal_lap - beta * pop.delta_sq - tol - pop.j_lap);
    }
    checks.push(Check::at_most(
        "laplace coercivity",
        "stein-drift-dominates-energy-minus-residual",
        worst_margin,
        0.0,
    ));

    // Identity-coupling domination of the exact one-step W2.
    let mut worst_margin = f64::NEG_INFINITY;
    for _ in 0..30 {
        let d = rng.random_range(1..3);
        let n = rng.random_range(2..40);
        let h = 0.4 + 0.6 * rng.random::<f64>();
        let target = Measure::empirical(cloud(&mut rng, 6, d, 1.2))?;
        let config = ParticleConfig::new(cloud(&mut rng, n, d, 1.2))?;
        let k = KernelSpec::new(Family::Gaussian, d, h)?;
        let spec = FieldSpec::conservative(target, k)?;
        let eta = 0.01 + 0.2 * rng.random::<f64>();
        let report = diagnostics::one_step_w2_check(&config, &spec, eta)?;
        worst_margin = worst_margin.max(report.exact_w2 - report.coupling_bound);
    }
    checks.push(Check::at_most(
        "w2 domination",
        "identity-coupling-bounds-w2",
        worst_margin,
        1e-12,
    ));

    // Balanced-bandwidth split of the two-term rate.
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        let a = 0.1 + 5.0 * rng.random::<f64>();
        let c = 0.1 + 5.0 * rng.random::<f64>();
        let beta = 1.9 * rng.random::<f64>();
        let d = rng.random_range(1..4);
        let n = rng.random_range(10..100_000);
        let choice = diagnostics::optimal_bandwidth(a, c, beta, d, n)?;
        let want = (2.0 - beta) / (d as f64 + 2.0) * choice.quad_term;
        worst = worst.max((choice.self_term - want).abs() / want.abs());
    }
    checks.push(Check::at_most(
        "balanced bandwidth",
        "terms-balance-at-closed-form-minimizer",
        worst,
        1e-10,
    ));

    Ok((checks, window))
}

fn occupancy_suite(seed: u64) -> Result<SuiteOutput> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();

    let mut false_full = 0usize;
    let mut false_loo = 0usize;
    let mut certified = 0usize;
    for _ in 0..200 {
        let d = rng.random_range(1..3);
        let family = if rng.random::<f64>() < 0.5 {
            Family::Gaussian
        } else {
            Family::Laplace
        };
        let h = 0.3 + 0.9 * rng.random::<f64>();
        let k = KernelSpec::new(family, d, h)?;
        let n = rng.random_range(4..24);
        let spread = if rng.random::<f64>() < 0.5 { 0.4 } else { 3.0 };
        let config = ParticleConfig::new(cloud(&mut rng, n, d, spread))?;

        let r_k = 0.5 + rng.random::<f64>();
        let mut edge = vec![0.0; d];
        edge[0] = r_k * h;
        let kappa_k = kernels::eval_kernel(&k, &edge)? * h.powi(d as i32) * 0.999;
        let counts = diagnostics::occupancy_counts(&config, h, r_k);
        let min_count = *counts.iter().min().unwrap() as f64;
        let alpha = (0.2 + rng.random::<f64>()) * min_count / (n as f64 * h.powi(d as i32));

        let report = diagnostics::occupancy_implication_check(&config, &k, r_k, kappa_k, alpha)?;
        if report.holds {
            certified += 1;
            if report.min_q < report.q_bound * (1.0 - 1e-12) {
                false_full += 1;
            }
        }
        if family == Family::Laplace && n >= 2 {
            let loo = diagnostics::loo_occupancy_check(&config, &k, r_k, alpha)?;
            if loo.holds && loo.min_q_loo < loo.q_bound * (1.0 - 1e-12) {
                false_loo += 1;
            }
        }
    }
    checks.push(Check::at_most(
        "occupancy certificates",
        "neighbor-counts-certify-denominators",
        false_full as f64,
        0.0,
    ));
    checks.push(Check::at_most(
        "leave one out certificates",
        "loo-neighbor-counts-certify-denominators",
        false_loo as f64,
        0.0,
    ));
    checks.push(Check {
        name: "certificate coverage".into(),
        anchor: "certificates-actually-issued".into(),
        value: certified as f64,
        tolerance: 20.0,
        pass: certified >= 20,
    });

    // Union-Chernoff domination of the empirical occupancy failure rate for
    // uniform draws on [0, 1].
    let (n, h, r_k, trials) = (400usize, 0.5, 1.0, 800usize);
    let p0 = r_k;
    let bound = diagnostics::chernoff_occupancy_bound(p0, n, h, 1)?;
    let threshold = p0 / 4.0 * n as f64 * h;
    let mut failures = 0usize;
    for _ in 0..trials {
        let pts: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random::<f64>()]).collect();
        let config = ParticleConfig::new(pts)?;
        let counts = diagnostics::occupancy_counts(&config, h, r_k);
        if counts.iter().any(|&c| (c as f64) < threshold) {
            failures += 1;
        }
    }
    let freq = failures as f64 / trials as f64;
    let stderr = (freq * (1.0 - freq) / trials as f64).sqrt();
    checks.push(Check::at_most(
        "chernoff domination",
        "union-chernoff-bounds-failure-frequency",
        freq - (bound + 3.0 * stderr),
        0.0,
    ));

    // Probability cap.
    let capped = diagnostics::chernoff_occupancy_bound(0.01, 10, 0.1, 2)?;
    checks.push(Check::at_most(
        "chernoff cap",
        "bound-capped-at-one",
        (capped - 1.0).abs(),
        0.0,
    ));

    Ok((checks, None))
}

fn euler_suite(seed: u64) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checks = Vec::new();

    let target = Measure::gaussian_mixture(
        vec![vec![1.2, 0.0], vec![-1.2, 0.0]],
        vec![0.4, 0.4],
        vec![0.5, 0.5],
    )?;
    let config = ParticleConfig::new(cloud(&mut rng, 12, 2, 1.2))?;
    let k = KernelSpec::new(Family::Gaussian, 2, 0.8)?;
    let spec = FieldSpec::conservative(target, k)?;
    let t_end = 0.4;

    let mut errors = Vec::new();
    let etas = [0.04, 0.02, 0.01, 0.005];
    for &eta in &etas {
        let reference = dynamics::integrate_rk4(
            &config,
            &spec,
            &IntegratorParams::new(eta / 100.0, t_end)?.with_record_every(usize::MAX),
        )?;
        let euler = dynamics::integrate(
            &config,
            &spec,
            &IntegratorParams::new(eta, t_end)?.with_record_every(usize::MAX),
        )?;
        let err: f64 = euler
            .final_state()
            .positions()
            .iter()
            .zip(reference.final_state().positions())
            .map(|(a, b)| vecops::dist(a, b).powi(2))
            .sum::<f64>()
            .sqrt();
        errors.push(err);
    }
    let xs: Vec<f64> = etas.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
    let mx = xs.iter().sum::<f64>() / 4.0;
    let my = ys.iter().sum::<f64>() / 4.0;
    let slope = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .sum::<f64>()
        / xs.iter().map(|x| (x - mx) * (x - mx)).sum::<f64>();
    checks.push(Check::at_most(
        "first order in eta",
        "euler-endpoint-error-slope-near-one",
        (slope - 1.0).abs(),
        0.2,
    ));

    let halving = errors[0] / errors[1];
    checks.push(Check::at_most(
        "halving ratio",
        "halving-eta-halves-the-error",
        (halving - 2.0).abs(),
        0.3,
    ));

    // RK4 on the exactly-exponential single-particle displacement flow.
    let target = Measure::empirical(vec![vec![0.0, 0.0]])?;
    let single = ParticleConfig::new(vec![vec![1.0, -2.0]])?;
    let k = KernelSpec::new(Family::Gaussian, 2, 1.0)?;
    let dspec = FieldSpec::displacement(target, k)?;
    let traj = dynamics::integrate_rk4(&single, &dspec, &IntegratorParams::new(0.01, 2.0)?)?;
    let endpoint = traj.final_state().point(0);
    let decay = (-2.0f64).exp();
    let rel = ((endpoint[0] - decay).powi(2) + (endpoint[1] + 2.0 * decay).powi(2)).sqrt() / decay;
    checks.push(Check::at_most(
        "rk4 exactness",
        "rk4-matches-exponential-flow",
        rel,
        1e-8,
    ));

    // Bitwise determinism of the frozen-field update.
    let a = dynamics::integrate(&config, &spec, &IntegratorParams::new(0.02, 0.2)?)?;
    let b = dynamics::integrate(&config, &spec, &IntegratorParams::new(0.02, 0.2)?)?;
    let mut max_gap: f64 = 0.0;
    for (sa, sb) in a.states.iter().zip(&b.states) {
        for (pa, pb) in sa.positions().iter().zip(sb.positions()) {
            for m in 0..2 {
                max_gap = max_gap.max((pa[m] - pb[m]).abs());
            }
        }
    }
    checks.push(Check::at_most(
        "determinism",
        "identical-inputs-identical-trajectories",
        max_gap,
        0.0,
    ));

    // Stationarity at the target atoms.
    let pts = cloud(&mut rng, 6, 2, 1.0);
    let target = Measure::empirical(pts.clone())?;
    let stationary = ParticleConfig::new(pts)?;
    let k = KernelSpec::new(Family::Gaussian, 2, 0.7)?;
    let spec = FieldSpec::conservative(target, k)?;
    let traj = dynamics::integrate(&stationary, &spec, &IntegratorParams::new(0.05, 0.5)?)?;
    let mut max_move: f64 = 0.0;
    for state in &traj.states {
        for (p, q) in state.positions().iter().zip(stationary.positions()) {
            max_move = max_move.max(vecops::dist(p, q));
        }
    }
    checks.push(Check::at_most(
        "stationarity",
        "matched-configuration-is-a-fixed-point",
        max_move,
        0.0,
    ));

    Ok(checks)
}
