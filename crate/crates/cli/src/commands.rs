//! Subcommand implementations: simulate, figure1, sweep.

use std::path::Path;

use anyhow::{bail, Context, Result};
use serde::Serialize;

use driftlab::diagnostics::{self, InMode, RateInputs};
use driftlab::dynamics::{self, IntegratorParams, Trajectory, TrajectoryMeta};
use driftlab::experiments::{run_two_cluster, TwoClusterOptions};
use driftlab::fields::FieldKind;
use driftlab::kernels::{self, Family, MomentOrder};
use driftlab::measures::{self, Measure};
use driftlab::numerics::{self, GridSpec, QuadratureRule};
use driftlab::vecops;

use crate::config::{ExperimentConfig, InitialSpec};
use crate::io;

#[derive(Serialize)]
struct SimulateMeta<'a> {
    config_hash: &'a str,
    seed: u64,
    trajectory: &'a TrajectoryMeta,
    bounds: BoundsReport,
    outputs: Vec<String>,
}

/// Rate-bound breakdown evaluated on the run itself: the inputs are
/// empirical surrogates measured along the trajectory (labeled estimates,
/// never certified constants), the terms come straight from the evaluators.
#[derive(Serialize, Default)]
struct BoundsReport {
    window: Option<(Vec<f64>, Vec<f64>)>,
    conservative: Option<ConservativeBounds>,
    laplace: Option<LaplaceBounds>,
    notes: Vec<String>,
}

#[derive(Serialize)]
struct ConservativeBounds {
    inputs: RateInputs,
    breakdown: driftlab::diagnostics::ConservativeRate,
}

#[derive(Serialize)]
struct LaplaceBounds {
    scale_lower: f64,
    scale_upper: f64,
    inputs: RateInputs,
    breakdown: driftlab::diagnostics::LaplaceRate,
}

/// Run one experiment from a JSON config: trajectory CSV, diagnostics CSV,
/// meta JSON (with the bound breakdown embedded).
pub fn simulate(config_path: &Path, out_dir: &Path) -> Result<()> {
    let config = ExperimentConfig::load(config_path)?;
    let built = config.build()?;
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;

    let mut traj = dynamics::integrate(&built.initial, &built.spec, &built.params)?;
    traj.meta.seed = Some(built.seed);
    let records = diagnostics::trajectory_records(&traj, &built.spec, &built.diagnostics)?;
    let max_r_n = records.iter().map(|r| r.r_n).fold(0.0, f64::max);
    let bounds =
        bounds_report(&config, &built.spec, &traj, max_r_n).unwrap_or_else(|e| BoundsReport {
            notes: vec![format!("bounds unavailable: {e:#}")],
            ..Default::default()
        });

    let traj_path = out_dir.join("trajectory.csv");
    let diag_path = out_dir.join("diagnostics.csv");
    let meta_path = out_dir.join("meta.json");
    io::write_trajectory_csv(&traj_path, &traj)?;
    io::write_diagnostics_csv(&diag_path, &records)?;
    io::write_json(
        &meta_path,
        &SimulateMeta {
            config_hash: &built.config_hash,
            seed: built.seed,
            trajectory: &traj.meta,
            bounds,
            outputs: vec![
                traj_path.display().to_string(),
                diag_path.display().to_string(),
                meta_path.display().to_string(),
            ],
        },
    )?;
    Ok(())
}

fn initial_mixture(config: &ExperimentConfig) -> Option<Measure> {
    match &config.initial {
        InitialSpec::Sample {
            means,
            variances,
            weights,
        } => Measure::gaussian_mixture(means.clone(), variances.clone(), weights.clone()).ok(),
        InitialSpec::Csv { .. } => None,
    }
}

fn bounds_report(
    config: &ExperimentConfig,
    spec: &driftlab::FieldSpec,
    traj: &Trajectory,
    max_r_n: f64,
) -> Result<BoundsReport> {
    let mut report = BoundsReport::default();
    let dim = spec.dim();
    if dim > 2 {
        report
            .notes
            .push("bound breakdowns need grid quadrature (d <= 2)".into());
        return Ok(report);
    }
    let final_state = traj.final_state();
    let k = &spec.kernel;
    let h = k.bandwidth();
    let pad = if k.family() == Family::Laplace {
        25.0
    } else {
        6.0
    };
    let (lo, hi) = diagnostics::quadrature_window(
        &[final_state.positions(), spec.target.support_points()],
        h,
        pad,
    )?;
    let points = if dim == 1 { 257 } else { 65 };
    let grid = GridSpec::new(lo.clone(), hi.clone(), points, QuadratureRule::Simpson)?;
    report.window = Some((lo, hi));

    let kappa0 = match initial_mixture(config) {
        Some(mu0) if spec.kind == FieldKind::Conservative => Some(
            diagnostics::kappa0_from_mixture(&mu0, &spec.target, k, &grid)?,
        ),
        Some(_) => None,
        None => {
            report
                .notes
                .push("kappa0 needs an analytic mixture initialization; reported as 0".into());
            None
        }
    };

    match spec.kind {
        FieldKind::Conservative => {
            let (b_a, b_v) = diagnostics::hessian_sup_pair(
                final_state,
                spec,
                &grid,
                1e-3 * (1.0 + vecops::norm(&grid.hi)),
                1e-4,
            )?;
            let inputs = RateInputs {
                kappa0: kappa0.unwrap_or(0.0),
                a1: (-k.lap_at_zero()).max(0.0),
                lambda_t: max_r_n,
                b_a,
                b_v,
                m2_base: k.m2_base(),
                n: final_state.len(),
                t: traj.meta.t_end,
                h,
                dim,
                ..RateInputs::default()
            };
            let breakdown = diagnostics::rate_rhs_conservative(&inputs)?;
            report.notes.push(
                "lambda_t is the largest observed reciprocal KDE; b_a/b_v are windowed Hessian sup estimates"
                    .into(),
            );
            report.conservative = Some(ConservativeBounds { inputs, breakdown });
        }
        FieldKind::Displacement | FieldKind::LaplaceLoo => {
            if k.family() != Family::Laplace {
                report.notes.push(
                    "displacement dynamics under a Gaussian kernel rescale the conservative analysis by h^2; run the conservative kind for its breakdown"
                        .into(),
                );
                return Ok(report);
            }
            if final_state.len() < 2 {
                report
                    .notes
                    .push("laplace bounds need at least two particles".into());
                return Ok(report);
            }
            let model = final_state.to_measure();
            let mut lambda = f64::INFINITY;
            let mut upper = 0.0f64;
            for x in grid_nodes(&grid) {
                let a = measures::scale_factor(&model, k, &x)?;
                lambda = lambda.min(a);
                upper = upper.max(a);
            }
            let (gamma_h, beta_h) = diagnostics::coercivity_constants(lambda, upper)?;
            let pop = diagnostics::laplace_population_pair(
                final_state,
                &spec.target,
                k,
                &InMode::Grid(grid.clone()),
            )?;
            // Empirical center-evaluation quantities at the final state.
            let loo_spec = driftlab::FieldSpec::laplace_loo(spec.target.clone(), k.clone())?;
            let fd = 1e-4
                * (1.0
                    + final_state
                        .positions()
                        .iter()
                        .map(|p| vecops::norm(p))
                        .fold(0.0, f64::max));
            let s_lap = diagnostics::s_n(final_state, &loo_spec, fd)?;
            let v_lap = diagnostics::v_n(final_state, &loo_spec)?;
            let kappa0_sharp = match initial_mixture(config) {
                Some(mu0) => {
                    let z_sharp = kernels::sharp_normalizer(k)?;
                    let target = spec.target.clone();
                    let integrand = |z: &[f64]| {
                        let mu = mu0.mixture_density(z).unwrap_or(f64::NAN);
                        if mu < 1e-300 {
                            return 0.0;
                        }
                        let rho =
                            measures::sharp_density(&target, k, z).unwrap_or(f64::NAN) / z_sharp;
                        mu * (mu.ln() - rho.ln())
                    };
                    numerics::grid_integrate(integrand, &grid)?.0
                }
                None => 0.0,
            };
            let inputs = RateInputs {
                kappa0: kappa0_sharp,
                m2_base: kernels::kernel_moment(k, MomentOrder::Second),
                n: final_state.len(),
                t: traj.meta.t_end,
                h,
                dim,
                gamma_h,
                beta_h,
                delta_sq: pop.delta_sq,
                eps_s: (s_lap - pop.j_lap).abs(),
                eps_v: (v_lap - pop.vcal_lap).abs(),
                ..RateInputs::default()
            };
            let breakdown = diagnostics::rate_rhs_laplace(&inputs)?;
            report.notes.push(
                "scale bounds are windowed extrema; eps terms are the measured center-evaluation vs sharp-smoothed gaps at the final state"
                    .into(),
            );
            report.laplace = Some(LaplaceBounds {
                scale_lower: lambda,
                scale_upper: upper,
                inputs,
                breakdown,
            });
        }
    }
    Ok(report)
}

fn grid_nodes(grid: &GridSpec) -> Vec<Vec<f64>> {
    match grid.dim() {
        1 => grid.axis_nodes(0).into_iter().map(|x| vec![x]).collect(),
        _ => {
            let xs = grid.axis_nodes(0);
            let ys = grid.axis_nodes(1);
            let mut nodes = Vec::with_capacity(xs.len() * ys.len());
            for &x in &xs {
                for &y in &ys {
                    nodes.push(vec![x, y]);
                }
            }
            nodes
        }
    }
}

#[derive(Serialize)]
struct Figure1Meta {
    options: TwoClusterOptions,
    tracer_indices: Vec<usize>,
    conservative_curl_max: f64,
    displacement_curl_max: f64,
    tracer_endpoint_gap: f64,
    outputs: Vec<String>,
}

/// Two-cluster contrast: both dynamics from identical initial states, tracer
/// paths side by side, and a planar curl map per field.
pub fn figure1(out_dir: &Path, options: &TwoClusterOptions) -> Result<()> {
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let result = run_two_cluster(options)?;

    // Tracer paths: one row per recorded step of either run, 4 tracers x
    // 2 fields; the runs keep their own time columns.
    let tracers_path = out_dir.join("tracers.csv");
    {
        let mut w = csv::Writer::from_path(&tracers_path)?;
        let mut header = vec!["t_conservative".to_string()];
        for k in 0..result.tracer_indices.len() {
            header.push(format!("cons{k}_x0"));
            header.push(format!("cons{k}_x1"));
        }
        header.push("t_laplace".to_string());
        for k in 0..result.tracer_indices.len() {
            header.push(format!("lap{k}_x0"));
            header.push(format!("lap{k}_x1"));
        }
        w.write_record(&header)?;
        let rows = result
            .conservative
            .times
            .len()
            .max(result.displacement.times.len());
        for row in 0..rows {
            let mut record: Vec<String> = Vec::with_capacity(header.len());
            let push_side = |record: &mut Vec<String>, traj: &driftlab::dynamics::Trajectory| {
                if let Some(t) = traj.times.get(row) {
                    record.push(format!("{t}"));
                    for &idx in &result.tracer_indices {
                        let p = traj.states[row].point(idx);
                        record.push(format!("{}", p[0]));
                        record.push(format!("{}", p[1]));
                    }
                } else {
                    record.extend(std::iter::repeat_n(
                        String::new(),
                        1 + 2 * result.tracer_indices.len(),
                    ));
                }
            };
            push_side(&mut record, &result.conservative);
            push_side(&mut record, &result.displacement);
            w.write_record(&record)?;
        }
        w.flush()?;
    }

    let cons_traj_path = out_dir.join("trajectory_conservative.csv");
    let disp_traj_path = out_dir.join("trajectory_laplace.csv");
    let cons_curl_path = out_dir.join("curl_conservative.csv");
    let disp_curl_path = out_dir.join("curl_laplace.csv");
    io::write_trajectory_csv(&cons_traj_path, &result.conservative)?;
    io::write_trajectory_csv(&disp_traj_path, &result.displacement)?;
    io::write_curl_csv(&cons_curl_path, &result.conservative_curl)?;
    io::write_curl_csv(&disp_curl_path, &result.displacement_curl)?;

    let cons_end = result.conservative.final_state();
    let disp_end = result.displacement.final_state();
    let gap: f64 = result
        .tracer_indices
        .iter()
        .map(|&i| vecops::dist(cons_end.point(i), disp_end.point(i)))
        .sum();

    let meta_path = out_dir.join("meta.json");
    io::write_json(
        &meta_path,
        &Figure1Meta {
            options: options.clone(),
            tracer_indices: result.tracer_indices.clone(),
            conservative_curl_max: result.conservative_curl.max_abs,
            displacement_curl_max: result.displacement_curl.max_abs,
            tracer_endpoint_gap: gap,
            outputs: [
                &tracers_path,
                &cons_traj_path,
                &disp_traj_path,
                &cons_curl_path,
                &disp_curl_path,
                &meta_path,
            ]
            .iter()
            .map(|p| p.display().to_string())
            .collect(),
        },
    )?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    N,
    H,
    Eta,
}

impl std::str::FromStr for SweepParam {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "n" => Ok(SweepParam::N),
            "h" => Ok(SweepParam::H),
            "eta" => Ok(SweepParam::Eta),
            other => Err(format!(
                "unknown sweep parameter {other:?} (expected N, h, or eta)"
            )),
        }
    }
}

#[derive(Serialize)]
struct SweepRow {
    param: String,
    value: f64,
    v_n_time_avg: Option<f64>,
    endpoint_error_vs_rk4: Option<f64>,
    status: String,
}

#[derive(Serialize)]
struct SweepMeta {
    config_hash: String,
    param: String,
    values: Vec<f64>,
    log_log_slope_v_n: Option<f64>,
    log_log_slope_endpoint_error: Option<f64>,
    predicted_h_star: Option<f64>,
    rate_a: f64,
    rate_c: f64,
    rate_beta: f64,
}

fn fit_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let cov: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let var: f64 = points.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    (var > 0.0).then(|| cov / var)
}

/// Sweep N, h, or eta over the supplied values; per value the time-averaged
/// mean squared speed, plus the fitted log-log slope. Failures are recorded
/// per row, not fatal.
pub fn sweep(
    param: SweepParam,
    values: &[f64],
    config_path: &Path,
    out_dir: &Path,
    rate_a: f64,
    rate_c: f64,
    rate_beta: f64,
) -> Result<()> {
    if values.len() < 3 {
        bail!("sweep needs at least 3 values");
    }
    if values.iter().any(|v| !(*v > 0.0)) {
        bail!("sweep values must be positive");
    }
    let base = ExperimentConfig::load(config_path)?;
    std::fs::create_dir_all(out_dir)?;

    let mut rows = Vec::new();
    let mut v_points = Vec::new();
    let mut err_points = Vec::new();
    let param_name = match param {
        SweepParam::N => "N",
        SweepParam::H => "h",
        SweepParam::Eta => "eta",
    };

    for &value in values {
        let mut config = base.clone();
        match param {
            SweepParam::N => config.n_particles = value.round() as usize,
            SweepParam::H => config.bandwidth = value,
            SweepParam::Eta => config.eta = value,
        }
        let outcome = run_one_sweep_point(&config, param);
        match outcome {
            Ok((v_avg, endpoint_err)) => {
                if v_avg > 0.0 {
                    v_points.push((value.ln(), v_avg.ln()));
                }
                if let Some(e) = endpoint_err {
                    if e > 0.0 {
                        err_points.push((value.ln(), e.ln()));
                    }
                }
                rows.push(SweepRow {
                    param: param_name.into(),
                    value,
                    v_n_time_avg: Some(v_avg),
                    endpoint_error_vs_rk4: endpoint_err,
                    status: "ok".into(),
                });
            }
            Err(e) => rows.push(SweepRow {
                param: param_name.into(),
                value,
                v_n_time_avg: None,
                endpoint_error_vs_rk4: None,
                status: format!("error: {e:#}"),
            }),
        }
    }

    let csv_path = out_dir.join("sweep.csv");
    let mut w = csv::Writer::from_path(&csv_path)?;
    w.write_record([
        "param",
        "value",
        "v_n_time_avg",
        "endpoint_error_vs_rk4",
        "status",
    ])?;
    for row in &rows {
        w.write_record(&[
            row.param.clone(),
            format!("{}", row.value),
            row.v_n_time_avg.map(|v| format!("{v}")).unwrap_or_default(),
            row.endpoint_error_vs_rk4
                .map(|v| format!("{v}"))
                .unwrap_or_default(),
            row.status.clone(),
        ])?;
    }
    w.flush()?;

    let predicted_h_star = (param == SweepParam::H)
        .then(|| {
            diagnostics::optimal_bandwidth(rate_a, rate_c, rate_beta, base.dim, base.n_particles)
                .map(|c| c.h_star)
        })
        .transpose()?;

    io::write_json(
        &out_dir.join("sweep_meta.json"),
        &SweepMeta {
            config_hash: base.hash(),
            param: param_name.into(),
            values: values.to_vec(),
            log_log_slope_v_n: fit_slope(&v_points),
            log_log_slope_endpoint_error: fit_slope(&err_points),
            predicted_h_star,
            rate_a,
            rate_c,
            rate_beta,
        },
    )?;
    Ok(())
}

fn run_one_sweep_point(config: &ExperimentConfig, param: SweepParam) -> Result<(f64, Option<f64>)> {
    let built = config.build()?;
    let traj = dynamics::integrate(&built.initial, &built.spec, &built.params)?;
    let mut v_sum = 0.0;
    for state in &traj.states {
        v_sum += diagnostics::v_n(state, &built.spec)?;
    }
    let v_avg = v_sum / traj.states.len() as f64;

    // eta sweeps additionally report the endpoint gap against an RK4
    // reference at eta/100.
    let endpoint_err = if param == SweepParam::Eta {
        let fine = IntegratorParams::new(built.params.eta / 100.0, built.params.t_end)?
            .with_record_every(usize::MAX);
        let reference = dynamics::integrate_rk4(&built.initial, &built.spec, &fine)?;
        let err: f64 = traj
            .final_state()
            .positions()
            .iter()
            .zip(reference.final_state().positions())
            .map(|(a, b)| vecops::dist(a, b).powi(2))
            .sum::<f64>()
            .sqrt();
        Some(err)
    } else {
        None
    };
    Ok((v_avg, endpoint_err))
}

/// Figure-1 defaults with a caller seed.
pub fn figure1_options(seed: u64) -> TwoClusterOptions {
    TwoClusterOptions {
        seed,
        record_every: 5,
        ..TwoClusterOptions::default()
    }
}
