//! Experiment configuration: a single JSON document, unknown keys rejected.

use std::path::Path;

use anyhow::{bail, Context, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use driftlab::diagnostics::DiagnosticsOptions;
use driftlab::dynamics::IntegratorParams;
use driftlab::fields::{FieldKind, FieldSpec, ModelSource};
use driftlab::kernels::{Family, KernelSpec};
use driftlab::measures::{Measure, ParticleConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKindCfg {
    Conservative,
    Displacement,
    LaplaceLoo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamilyCfg {
    Gaussian,
    Laplace,
    SmoothCompact,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum TargetSpec {
    /// Analytic isotropic Gaussian mixture (Gaussian kernel only).
    Mixture {
        means: Vec<Vec<f64>>,
        variances: Vec<f64>,
        weights: Vec<f64>,
    },
    /// Empirical cloud drawn once from a mixture with the run seed.
    Sample {
        means: Vec<Vec<f64>>,
        variances: Vec<f64>,
        weights: Vec<f64>,
        count: usize,
    },
    /// Empirical cloud loaded from CSV (columns x_0.., optional w).
    Csv { path: String },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    /// n_particles points drawn from a mixture with the run seed.
    Sample {
        means: Vec<Vec<f64>>,
        variances: Vec<f64>,
        weights: Vec<f64>,
    },
    Csv {
        path: String,
    },
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiagnosticsToggles {
    pub i_n: bool,
    pub curl: bool,
    pub laplace_population: bool,
}

fn default_record_every() -> usize {
    1
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub field: FieldKindCfg,
    pub kernel: KernelFamilyCfg,
    pub dim: usize,
    pub bandwidth: f64,
    pub eta: f64,
    pub t_end: f64,
    pub n_particles: usize,
    pub seed: u64,
    pub target: TargetSpec,
    pub initial: InitialSpec,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default)]
    pub diagnostics: DiagnosticsToggles,
    #[serde(default)]
    pub collision_guard: Option<f64>,
}

/// Everything needed to run one experiment, built from a validated config.
#[derive(Debug)]
pub struct BuiltExperiment {
    pub spec: FieldSpec,
    pub initial: ParticleConfig,
    pub params: IntegratorParams,
    pub diagnostics: DiagnosticsOptions,
    pub seed: u64,
    pub config_hash: String,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: ExperimentConfig =
            serde_json::from_str(&text).context("parsing experiment config")?;
        Ok(config)
    }

    /// Canonical hash of the parsed document; reports embed it so every
    /// number is reproducible from the report alone.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&bytes);
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn build(&self) -> Result<BuiltExperiment> {
        if self.dim == 0 {
            bail!("dim must be >= 1");
        }
        if self.n_particles == 0 {
            bail!("n_particles must be >= 1");
        }
        let family = match self.kernel {
            KernelFamilyCfg::Gaussian => Family::Gaussian,
            KernelFamilyCfg::Laplace => Family::Laplace,
            KernelFamilyCfg::SmoothCompact => Family::SmoothCompact,
        };
        let kernel = KernelSpec::new(family, self.dim, self.bandwidth)?;

        let (kind, source) = match self.field {
            FieldKindCfg::Conservative => (FieldKind::Conservative, ModelSource::FullConfig),
            FieldKindCfg::Displacement => (FieldKind::Displacement, ModelSource::FullConfig),
            FieldKindCfg::LaplaceLoo => (FieldKind::LaplaceLoo, ModelSource::LeaveOneOut),
        };
        if self.diagnostics.curl && self.dim != 2 {
            bail!("curl diagnostics require dim = 2, got {}", self.dim);
        }
        if self.diagnostics.laplace_population && family != Family::Laplace {
            bail!("laplace_population diagnostics require the laplace kernel");
        }

        // One deterministic stream: target sample first, then the initial
        // configuration.
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let target = self.build_target(&mut rng)?;
        let initial = self.build_initial(&mut rng)?;
        if target.dim() != self.dim {
            bail!(
                "target dimension {} does not match dim {}",
                target.dim(),
                self.dim
            );
        }
        if initial.dim() != self.dim {
            bail!(
                "initial dimension {} does not match dim {}",
                initial.dim(),
                self.dim
            );
        }
        if initial.len() != self.n_particles {
            bail!(
                "initial configuration has {} particles, expected {}",
                initial.len(),
                self.n_particles
            );
        }

        let spec = FieldSpec::new(kind, target, kernel, source).context("validating field spec")?;
        let mut params = IntegratorParams::new(self.eta, self.t_end)?
            .with_record_every(self.record_every.max(1));
        if let Some(guard) = self.collision_guard {
            params = params.with_collision_guard(guard);
        }

        let pad = match family {
            Family::Laplace => 25.0,
            _ => 6.0,
        };
        let window_points = 257;
        let grid_mode =
            |target: &Measure, initial: &ParticleConfig| -> Result<driftlab::GridSpec> {
                let (lo, hi) = driftlab::diagnostics::quadrature_window(
                    &[initial.positions(), target.support_points()],
                    self.bandwidth,
                    pad,
                )?;
                Ok(driftlab::GridSpec::new(
                    lo,
                    hi,
                    window_points,
                    driftlab::QuadratureRule::Simpson,
                )?)
            };

        let mut diagnostics = DiagnosticsOptions {
            curl: self.diagnostics.curl,
            ..Default::default()
        };
        if self.diagnostics.i_n {
            if self.dim <= 2 {
                diagnostics.i_n = Some(driftlab::diagnostics::InMode::Grid(grid_mode(
                    &spec.target,
                    &initial,
                )?));
            } else {
                diagnostics.i_n = Some(driftlab::diagnostics::InMode::Mc {
                    budget: 20_000,
                    seed: self.seed ^ 0xD1A6,
                });
            }
        }
        if self.diagnostics.laplace_population {
            if self.dim <= 2 {
                diagnostics.laplace_population = Some(driftlab::diagnostics::InMode::Grid(
                    grid_mode(&spec.target, &initial)?,
                ));
            } else {
                diagnostics.laplace_population = Some(driftlab::diagnostics::InMode::Mc {
                    budget: 20_000,
                    seed: self.seed ^ 0x1A9,
                });
            }
        }

        Ok(BuiltExperiment {
            spec,
            initial,
            params,
            diagnostics,
            seed: self.seed,
            config_hash: self.hash(),
        })
    }

    fn build_target(&self, rng: &mut ChaCha8Rng) -> Result<Measure> {
        match &self.target {
            TargetSpec::Mixture {
                means,
                variances,
                weights,
            } => Ok(Measure::gaussian_mixture(
                means.clone(),
                variances.clone(),
                weights.clone(),
            )?),
            TargetSpec::Sample {
                means,
                variances,
                weights,
                count,
            } => {
                let mixture =
                    Measure::gaussian_mixture(means.clone(), variances.clone(), weights.clone())?;
                Ok(Measure::empirical(sample_mixture(&mixture, *count, rng)?)?)
            }
            TargetSpec::Csv { path } => Ok(Measure::empirical_from_csv(path)?),
        }
    }

    fn build_initial(&self, rng: &mut ChaCha8Rng) -> Result<ParticleConfig> {
        match &self.initial {
            InitialSpec::Sample {
                means,
                variances,
                weights,
            } => {
                let mixture =
                    Measure::gaussian_mixture(means.clone(), variances.clone(), weights.clone())?;
                Ok(ParticleConfig::new(sample_mixture(
                    &mixture,
                    self.n_particles,
                    rng,
                )?)?)
            }
            InitialSpec::Csv { path } => {
                let m = Measure::empirical_from_csv(path)?;
                match m {
                    Measure::Empirical { points, .. } => Ok(ParticleConfig::new(points)?),
                    _ => unreachable!("CSV loads are empirical"),
                }
            }
        }
    }
}

/// Draw i.i.d. points from an isotropic Gaussian mixture.
pub fn sample_mixture(
    mixture: &Measure,
    count: usize,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<Vec<f64>>> {
    let (means, variances, weights) = match mixture {
        Measure::GaussianMixture {
            means,
            variances,
            weights,
        } => (means, variances, weights),
        _ => bail!("sample_mixture needs an analytic mixture"),
    };
    let pick = rand::distr::weighted::WeightedIndex::new(weights).context("mixture weights")?;
    let d = means[0].len();
    Ok((0..count)
        .map(|_| {
            let c = pick.sample(rng);
            let sd = variances[c].sqrt();
            (0..d)
                .map(|m| {
                    let g: f64 = StandardNormal.sample(rng);
                    means[c][m] + sd * g
                })
                .collect()
        })
        .collect())
}
