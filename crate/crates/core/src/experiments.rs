//! The two-cluster contrast experiment: data on a thin horizontal cluster,
//! model initialized on a thin vertical cluster, run once under the
//! conservative Gaussian drift and once under the Laplace displacement drift
//! from bit-identical initial states, with planar curl maps of both fields.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;

use crate::dynamics::{self, IntegratorParams, Trajectory};
use crate::error::Result;
use crate::fields::{self, FieldSpec};
use crate::kernels::{Family, KernelSpec};
use crate::measures::{Measure, ParticleConfig};
use crate::numerics;

#[derive(Debug, Clone, Serialize)]
pub struct TwoClusterOptions {
    pub n_particles: usize,
    pub n_data: usize,
    pub bandwidth: f64,
    /// Step for the conservative (score-scale) dynamics.
    pub eta_conservative: f64,
    /// Step for the displacement dynamics; `None` scales the conservative
    /// step by h^2, the factor relating the two field magnitudes under a
    /// Gaussian kernel.
    pub eta_displacement: Option<f64>,
    pub t_end_conservative: f64,
    pub t_end_displacement: f64,
    pub n_tracers: usize,
    pub cluster_halflength: f64,
    pub cluster_noise: f64,
    pub curl_grid_points: usize,
    pub curl_grid_pad: f64,
    pub record_every: usize,
    pub seed: u64,
}

impl Default for TwoClusterOptions {
    fn default() -> Self {
        TwoClusterOptions {
            n_particles: 80,
            n_data: 80,
            bandwidth: 0.55,
            eta_conservative: 0.01,
            eta_displacement: None,
            t_end_conservative: 1.2,
            t_end_displacement: 4.0,
            n_tracers: 4,
            cluster_halflength: 1.5,
            cluster_noise: 0.05,
            curl_grid_points: 41,
            curl_grid_pad: 0.5,
            record_every: 1,
            seed: 0,
        }
    }
}

/// Planar curl of a field sampled on a regular grid.
#[derive(Debug, Clone, Serialize)]
pub struct CurlMap {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// Row-major `values[ix][iy]`.
    pub values: Vec<Vec<f64>>,
    pub max_abs: f64,
}

#[derive(Debug, Clone)]
pub struct TwoClusterResult {
    pub data: Measure,
    pub initial: ParticleConfig,
    pub tracer_indices: Vec<usize>,
    pub conservative: Trajectory,
    pub displacement: Trajectory,
    pub conservative_curl: CurlMap,
    pub displacement_curl: CurlMap,
    pub options: TwoClusterOptions,
}

fn thin_cluster(
    rng: &mut ChaCha8Rng,
    n: usize,
    halflength: f64,
    noise: f64,
    horizontal: bool,
) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| {
            let along = rng.random_range(-halflength..halflength);
            let across: f64 = {
                let g: f64 = StandardNormal.sample(rng);
                noise * g
            };
            if horizontal {
                vec![along, across]
            } else {
                vec![across, along]
            }
        })
        .collect()
}

/// Curl map of the frozen field over the padded bounding box of the scene.
pub fn curl_map<F>(field: F, lo: [f64; 2], hi: [f64; 2], points: usize) -> Result<CurlMap>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let xs: Vec<f64> = (0..points)
        .map(|i| lo[0] + (hi[0] - lo[0]) * i as f64 / (points - 1) as f64)
        .collect();
    let ys: Vec<f64> = (0..points)
        .map(|i| lo[1] + (hi[1] - lo[1]) * i as f64 / (points - 1) as f64)
        .collect();
    let mut values = Vec::with_capacity(points);
    let mut max_abs: f64 = 0.0;
    for &x in &xs {
        let mut row = Vec::with_capacity(points);
        for &y in &ys {
            let z = [x, y];
            let c = fields::curl2d(&field, &z, numerics::fd_step(&z))?;
            max_abs = max_abs.max(c.abs());
            row.push(c);
        }
        values.push(row);
    }
    Ok(CurlMap {
        xs,
        ys,
        values,
        max_abs,
    })
}

/// Build the two-cluster scene and run both dynamics from the same initial
/// configuration.
pub fn run_two_cluster(options: &TwoClusterOptions) -> Result<TwoClusterResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let data_points = thin_cluster(
        &mut rng,
        options.n_data,
        options.cluster_halflength,
        options.cluster_noise,
        true,
    );
    let model_points = thin_cluster(
        &mut rng,
        options.n_particles,
        options.cluster_halflength,
        options.cluster_noise,
        false,
    );
    let data = Measure::empirical(data_points)?;
    let initial = ParticleConfig::new(model_points)?;

    // Tracers: particles nearest the quartiles of the vertical extent.
    let mut order: Vec<usize> = (0..initial.len()).collect();
    order.sort_by(|&a, &b| initial.point(a)[1].total_cmp(&initial.point(b)[1]));
    let tracer_indices: Vec<usize> = (0..options.n_tracers)
        .map(|k| order[(2 * k + 1) * initial.len() / (2 * options.n_tracers)])
        .collect();

    let h = options.bandwidth;
    let cons_kernel = KernelSpec::new(Family::Gaussian, 2, h)?;
    let lap_kernel = KernelSpec::new(Family::Laplace, 2, h)?;
    let cons_spec = FieldSpec::conservative(data.clone(), cons_kernel)?;
    let disp_spec = FieldSpec::displacement(data.clone(), lap_kernel)?;

    let eta_disp = options
        .eta_displacement
        .unwrap_or(options.eta_conservative * h * h);
    let cons_params = IntegratorParams::new(options.eta_conservative, options.t_end_conservative)?
        .with_record_every(options.record_every);
    let disp_params = IntegratorParams::new(eta_disp, options.t_end_displacement)?
        .with_record_every(options.record_every);

    let conservative = dynamics::integrate(&initial, &cons_spec, &cons_params)?;
    let displacement = dynamics::integrate(&initial, &disp_spec, &disp_params)?;

    // Curl maps of both t = 0 fields on one shared grid.
    let pad = options.curl_grid_pad;
    let ext = options.cluster_halflength;
    let lo = [-ext - pad, -ext - pad];
    let hi = [ext + pad, ext + pad];
    let cons_bound = cons_spec.bind(&initial);
    let disp_bound = disp_spec.bind(&initial);
    let conservative_curl = curl_map(|z| cons_bound.eval(z), lo, hi, options.curl_grid_points)?;
    let displacement_curl = curl_map(|z| disp_bound.eval(z), lo, hi, options.curl_grid_points)?;

    Ok(TwoClusterResult {
        data,
        initial,
        tracer_indices,
        conservative,
        displacement,
        conservative_curl,
        displacement_curl,
        options: options.clone(),
    })
}
