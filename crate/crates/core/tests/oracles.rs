//! Cross-oracle and composite checks that span several modules: grid vs
//! Monte Carlo quadrature agreement, and occupancy propagation along a flow.

mod common;

use common::{random_cloud, rng};
use driftlab::diagnostics::{self, InMode};
use driftlab::dynamics::{self, IntegratorParams};
use driftlab::fields::FieldSpec;
use driftlab::kernels::{self, Family, KernelSpec};
use driftlab::measures::{Measure, ParticleConfig};
use driftlab::vecops;
use driftlab::{GridSpec, QuadratureRule};
use rand::Rng;

#[test]
fn grid_and_mc_agree_on_twenty_random_kde_integrands() {
    let mut rng = rng(301);
    for trial in 0..20 {
        // Strictly positive kernels: the score of a compact-kernel target is
        // undefined outside its support, so the conservative field (and
        // hence this integrand) only makes sense for Gaussian smoothing.
        let h = 0.4 + 0.7 * rng.random::<f64>();
        let (n_t, n_c) = (rng.random_range(3..8), rng.random_range(3..8));
        let target = Measure::empirical(random_cloud(&mut rng, n_t, 1, 1.0)).unwrap();
        let config = ParticleConfig::new(random_cloud(&mut rng, n_c, 1, 1.0)).unwrap();
        let k = KernelSpec::new(Family::Gaussian, 1, h).unwrap();
        let spec = FieldSpec::conservative(target.clone(), k).unwrap();

        let (lo, hi) =
            diagnostics::quadrature_window(&[config.positions(), target.support_points()], h, 6.0)
                .unwrap();
        let grid = GridSpec::new(lo, hi, 1025, QuadratureRule::Simpson).unwrap();

        let by_grid = diagnostics::i_n(&config, &spec, &InMode::Grid(grid)).unwrap();
        let by_mc = diagnostics::i_n(
            &config,
            &spec,
            &InMode::Mc {
                budget: 30_000,
                seed: 1000 + trial,
            },
        )
        .unwrap();
        assert!(
            (by_grid.value - by_mc.value).abs() <= 3.0 * by_mc.error + by_grid.error + 1e-9,
            "trial {trial}: grid {} vs mc {} +- {}",
            by_grid.value,
            by_mc.value,
            by_mc.error
        );
    }
}

#[test]
fn initial_occupancy_plus_distortion_controls_reciprocal_kde_along_flow() {
    // Composite propagation argument: neighbor counts at the shrunken radius
    // r_k h exp(-gamma) at t = 0, together with the accumulated Lipschitz
    // exposure gamma, bound R_N at every recorded time by
    // exp(d gamma) / (kappa_k alpha). The exposure is an empirical lower
    // estimate, so a small slack is allowed and any violation would surface.
    let mut rng = rng(302);
    let target = Measure::gaussian_mixture(
        vec![vec![-1.0], vec![1.0]],
        vec![0.25, 0.25],
        vec![0.5, 0.5],
    )
    .unwrap();
    let h = 0.5;
    let k = KernelSpec::new(Family::Gaussian, 1, h).unwrap();
    let spec = FieldSpec::conservative(target, k.clone()).unwrap();
    let config = ParticleConfig::new(random_cloud(&mut rng, 30, 1, 1.2)).unwrap();
    let params = IntegratorParams::new(0.02, 0.5).unwrap();
    let traj = dynamics::integrate(&config, &spec, &params).unwrap();

    let (gamma, _) = dynamics::gamma_hat(&traj, &spec, 1e-4).unwrap();
    assert!(gamma > 0.0 && gamma < 5.0, "gamma {gamma}");

    let r_k = 1.0;
    let kappa_k = kernels::eval_kernel(&k, &[r_k * h]).unwrap() * h; // K(r_k), d = 1
    let shrunk = r_k * h * (-gamma).exp();
    let min_count = config
        .positions()
        .iter()
        .map(|p| {
            config
                .positions()
                .iter()
                .filter(|q| vecops::dist(p, q) <= shrunk)
                .count()
        })
        .min()
        .unwrap();
    // Largest alpha for which the shrunken-radius occupancy hypothesis
    // min_count >= alpha N h^d exp(-d gamma) holds (d = 1 here).
    let alpha = min_count as f64 * gamma.exp() / (30.0 * h);
    assert!(alpha > 0.0);

    let cap = gamma.exp() / (kappa_k * alpha);
    for state in &traj.states {
        let rec = diagnostics::r_n(state, &k).unwrap();
        assert!(
            rec.r_n <= cap * 1.05,
            "propagated reciprocal bound violated: {} > {}",
            rec.r_n,
            cap
        );
    }
}
