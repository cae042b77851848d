//! Problem, solver and corrector sections shared by `solve` and `sweep-m`.

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Result;
use serde::{Deserialize, Serialize};

use himnet::correctors::{Corrector, MionetCorrector, OracleMode, ScaledCorrector, SpectralOracle};
use himnet::fem::{assemble_augmented_2d, assemble_load, assemble_stiffness, PaddingMode, PiecewiseLinearFn, StructuredGrid};
use himnet::gp::{positivity_guard, GpSampler, GpSpec, DEFAULT_JITTER, DEFAULT_POSITIVITY_FLOOR};
use himnet::hybrid::{HybridConfig, InnerSolver, ResidualNorm, StopRule};
use himnet::mionet::MionetModel;
use himnet::multigrid::{MgHierarchy, MgParams};
use himnet::smoothers::SmootherKind;
use himnet::{CsrMatrix64, Grid64};

use crate::config::usage;

/// Gaussian-process field; a `period` switches to the periodic kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GpField {
    #[serde(default)]
    pub mean: f64,
    pub std: f64,
    pub length_scale: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub period: Option<f64>,
}

impl GpField {
    pub fn spec(&self) -> GpSpec {
        match self.period {
            Some(p) => GpSpec::exp_sine_squared(self.mean, self.std, self.length_scale, p, self.seed),
            None => GpSpec::rbf(self.mean, self.std, self.length_scale, self.seed),
        }
    }
}

/// A scalar field over the domain (or over the boundary parameter `t`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum FieldSpec {
    Constant {
        value: f64,
    },
    Gp {
        #[serde(default)]
        mean: f64,
        std: f64,
        length_scale: f64,
        #[serde(default)]
        seed: u64,
        #[serde(default)]
        period: Option<f64>,
    },
    /// `amplitude * prod_d sin(mode pi x_d)`; on the boundary `amplitude * sin(mode pi t / 2)`.
    Sine {
        #[serde(default = "one_usize")]
        mode: usize,
        #[serde(default = "one")]
        amplitude: f64,
    },
}

fn one() -> f64 {
    1.0
}

fn one_usize() -> usize {
    1
}

impl FieldSpec {
    fn gp(&self) -> Option<GpSpec> {
        match *self {
            FieldSpec::Gp { mean, std, length_scale, seed, period } => {
                Some(GpField { mean, std, length_scale, seed, period }.spec())
            }
            _ => None,
        }
    }

    /// Values at the padded lattice of `grid` (x fastest).
    fn on_lattice(&self, grid: &Grid64) -> Result<Vec<f64>> {
        let pts = grid.padded_points();
        Ok(match *self {
            FieldSpec::Constant { value } => vec![value; pts.len()],
            FieldSpec::Sine { mode, amplitude } => pts
                .iter()
                .map(|x| amplitude * x.iter().map(|c| (mode as f64 * std::f64::consts::PI * c).sin()).product::<f64>())
                .collect(),
            FieldSpec::Gp { .. } => {
                let spec = self.gp().expect("gp variant");
                let s = if grid.dim() == 1 {
                    GpSampler::<f64>::new(&spec, &pts, DEFAULT_JITTER)?
                } else {
                    GpSampler::<f64>::lattice_2d(&spec, grid.n() + 2, DEFAULT_JITTER)?
                };
                s.draw(&mut s.rng())
            }
        })
    }

    /// Values at the boundary parameters `ts`.
    fn on_boundary(&self, ts: &[f64]) -> Result<Vec<f64>> {
        Ok(match *self {
            FieldSpec::Constant { value } => vec![value; ts.len()],
            FieldSpec::Sine { mode, amplitude } => ts
                .iter()
                .map(|t| amplitude * (mode as f64 * std::f64::consts::PI * t / 2.0).sin())
                .collect(),
            FieldSpec::Gp { .. } => {
                let pts: Vec<Vec<f64>> = ts.iter().map(|&t| vec![t]).collect();
                let s = GpSampler::<f64>::new(&self.gp().expect("gp variant"), &pts, DEFAULT_JITTER)?;
                s.draw(&mut s.rng())
            }
        })
    }
}

fn default_dim() -> usize {
    1
}

fn default_n() -> usize {
    48
}

fn default_coefficient() -> FieldSpec {
    FieldSpec::Constant { value: 1.0 }
}

fn default_source() -> FieldSpec {
    FieldSpec::Gp { mean: 0.0, std: 1.0, length_scale: 0.1, seed: 1, period: None }
}

fn default_floor() -> f64 {
    DEFAULT_POSITIVITY_FLOOR
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    #[serde(default = "default_dim")]
    pub dim: usize,
    /// Interior nodes per axis.
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_coefficient")]
    pub coefficient: FieldSpec,
    #[serde(default = "default_source")]
    pub source: FieldSpec,
    /// Dirichlet data over the boundary parameter `t in [0, 4)`; 2-d only.
    #[serde(default)]
    pub boundary: Option<FieldSpec>,
    #[serde(default = "default_floor")]
    pub positivity_floor: f64,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            dim: default_dim(),
            n: default_n(),
            coefficient: default_coefficient(),
            source: default_source(),
            boundary: None,
            positivity_floor: default_floor(),
        }
    }
}

/// Assembled linear system plus what the correctors need.
pub struct Problem {
    pub grid: Grid64,
    pub a: CsrMatrix64,
    pub b: Vec<f64>,
    pub k: PiecewiseLinearFn<f64>,
    /// Unknowns are all padded nodes, boundary rows are identity rows.
    pub augmented: bool,
}

impl ProblemConfig {
    pub fn build(&self) -> Result<Problem> {
        if self.boundary.is_some() && self.dim != 2 {
            return Err(usage("problem.boundary is only supported with dim = 2"));
        }
        let grid = StructuredGrid::<f64>::new(self.dim, self.n)?;
        let m = grid.n() + 2;
        let (k_raw, clamped) = positivity_guard(&self.coefficient.on_lattice(&grid)?, self.positivity_floor)?;
        if clamped > 0 {
            eprintln!("note: {clamped} coefficient samples raised to the floor {}", self.positivity_floor);
        }
        let k = PiecewiseLinearFn::from_lattice(self.dim, m, k_raw)?;
        let f = PiecewiseLinearFn::from_lattice(self.dim, m, self.source.on_lattice(&grid)?)?;
        let kf = |x: &[f64]| k.eval(x).unwrap_or(f64::NAN);
        let ff = |x: &[f64]| f.eval(x).unwrap_or(f64::NAN);
        match &self.boundary {
            None => {
                let a = assemble_stiffness(&grid, kf)?;
                let b = assemble_load(&grid, ff)?.values;
                Ok(Problem { grid, a, b, k, augmented: false })
            }
            Some(g) => {
                let ts: Vec<f64> = (0..grid.num_padded())
                    .filter_map(|p| {
                        let (i, j) = grid.padded_to_axes(p);
                        grid.boundary_parameter(i, j)
                    })
                    .collect();
                let gv = g.on_boundary(&ts)?;
                let table: HashMap<u64, f64> = ts.iter().map(|t| t.to_bits()).zip(gv).collect();
                let (a, rhs) =
                    assemble_augmented_2d(&grid, kf, ff, |t: f64| table.get(&t.to_bits()).copied().unwrap_or(f64::NAN))?;
                Ok(Problem { grid, a, b: rhs.values, k, augmented: true })
            }
        }
    }
}

/// Step between corrections. Richardson defaults to `omega = h/4` in 1-d and
/// `1/8` in 2-d.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InnerConfig {
    Richardson {
        #[serde(default)]
        omega: Option<f64>,
    },
    Jacobi {
        omega: f64,
    },
    GaussSeidel,
    Sor {
        omega: f64,
    },
    Multigrid {
        #[serde(default)]
        levels: Option<usize>,
        #[serde(default = "two")]
        nu1: usize,
        #[serde(default = "two")]
        nu2: usize,
        #[serde(default = "three")]
        min_coarse: usize,
    },
}

fn two() -> usize {
    2
}

fn three() -> usize {
    3
}

fn default_m() -> usize {
    20
}

fn default_tol() -> f64 {
    1e-10
}

fn default_max_iter() -> usize {
    1_000_000
}

fn default_true() -> bool {
    true
}

fn default_inner() -> InnerConfig {
    InnerConfig::Richardson { omega: None }
}

fn default_norm() -> ResidualNorm {
    ResidualNorm::L2
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    /// Correction period.
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_inner")]
    pub inner: InnerConfig,
    /// Absolute residual tolerance.
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "default_norm")]
    pub norm: ResidualNorm,
    #[serde(default = "default_true")]
    pub use_initial_guess: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            m: default_m(),
            inner: default_inner(),
            tol: default_tol(),
            max_iter: default_max_iter(),
            norm: default_norm(),
            use_initial_guess: true,
        }
    }
}

impl SolverConfig {
    pub fn stop(&self) -> Result<StopRule<f64>> {
        let mut s = StopRule::new(self.tol, self.max_iter)?;
        s.norm = self.norm;
        Ok(s)
    }

    pub fn inner(&self, prob: &Problem) -> Result<InnerSolver<f64>> {
        let kind = match self.inner {
            InnerConfig::Richardson { omega } => SmootherKind::Richardson {
                omega: omega.unwrap_or(if prob.grid.dim() == 1 { prob.grid.h() / 4.0 } else { 0.125 }),
            },
            InnerConfig::Jacobi { omega } => SmootherKind::Jacobi { omega },
            InnerConfig::GaussSeidel => SmootherKind::GaussSeidel,
            InnerConfig::Sor { omega } => SmootherKind::Sor { omega },
            InnerConfig::Multigrid { levels, nu1, nu2, min_coarse } => {
                if prob.augmented {
                    return Err(usage("the multigrid inner solver needs homogeneous boundary data"));
                }
                let auto = MgParams::auto(&prob.grid, min_coarse);
                let params = MgParams { levels: levels.unwrap_or(auto.levels), nu1, nu2 };
                let k = &prob.k;
                let h = MgHierarchy::build(&prob.grid, |x: &[f64]| k.eval(x).unwrap_or(f64::NAN), params)?;
                return Ok(InnerSolver::Multigrid(h));
            }
        };
        kind.validate()?;
        Ok(InnerSolver::Smoother(kind))
    }

    pub fn hybrid(&self, prob: &Problem) -> Result<HybridConfig<f64>> {
        let mut cfg = HybridConfig::new(self.m, self.inner(prob)?, self.stop()?);
        cfg.use_initial_guess = self.use_initial_guess;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn default_mode() -> OracleMode {
    OracleMode::DiscreteExact
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum CorrectorConfig {
    #[default]
    None,
    /// Exact inverse on the lowest `n0` modes of the unit-coefficient operator.
    Oracle {
        n0: usize,
        #[serde(default = "default_mode")]
        mode: OracleMode,
        #[serde(default = "one")]
        scale: f64,
    },
    Mionet {
        model: PathBuf,
        #[serde(default)]
        padding: PaddingMode,
        #[serde(default = "one")]
        scale: f64,
    },
}

impl CorrectorConfig {
    pub fn label(&self) -> String {
        match self {
            CorrectorConfig::None => "none".into(),
            CorrectorConfig::Oracle { n0, mode, .. } => format!("oracle n0={n0} {mode:?}"),
            CorrectorConfig::Mionet { model, .. } => format!("mionet {}", model.display()),
        }
    }

    pub fn build(&self, prob: &Problem) -> Result<Option<Box<dyn Corrector<f64>>>> {
        fn scaled<C: Corrector<f64> + 'static>(c: C, factor: f64) -> Box<dyn Corrector<f64>> {
            if factor == 1.0 {
                Box::new(c)
            } else {
                Box::new(ScaledCorrector { inner: c, factor })
            }
        }
        Ok(match self {
            CorrectorConfig::None => None,
            CorrectorConfig::Oracle { n0, mode, scale } => {
                if prob.augmented {
                    return Err(usage("the oracle corrector needs homogeneous boundary data"));
                }
                Some(scaled(SpectralOracle::new(prob.grid, *n0, *mode)?, *scale))
            }
            CorrectorConfig::Mionet { model, padding, scale } => {
                let m = Arc::new(MionetModel::<f64>::load(model)?);
                let ks = prob.k.eval_many(m.k_sensors())?;
                let c = if prob.augmented {
                    MionetCorrector::new_augmented(m, prob.grid, &ks)?
                } else {
                    MionetCorrector::new(m, prob.grid, &ks, *padding)?
                };
                Some(scaled(c, *scale))
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_problem_matches_direct_assembly() {
        let p = ProblemConfig { source: FieldSpec::Constant { value: 1.0 }, n: 7, ..Default::default() };
        let prob = p.build().unwrap();
        let g = StructuredGrid::<f64>::new_1d(7).unwrap();
        let b = assemble_load(&g, |_: &[f64]| 1.0).unwrap().values;
        for (x, y) in prob.b.iter().zip(&b) {
            assert!((x - y).abs() < 1e-15);
        }
        assert!(!prob.augmented);
    }

    #[test]
    fn boundary_needs_two_dimensions() {
        let p = ProblemConfig { boundary: Some(FieldSpec::Constant { value: 1.0 }), ..Default::default() };
        assert!(p.build().is_err());
    }

    #[test]
    fn boundary_rows_carry_g() {
        let p = ProblemConfig {
            dim: 2,
            n: 5,
            source: FieldSpec::Constant { value: 0.0 },
            boundary: Some(FieldSpec::Sine { mode: 1, amplitude: 2.0 }),
            ..Default::default()
        };
        let prob = p.build().unwrap();
        assert!(prob.augmented);
        // node (i, 0) sits at t = x on the bottom edge
        let x = prob.grid.axis_coord(3);
        let want = 2.0 * (std::f64::consts::PI * x / 2.0).sin();
        assert!((prob.b[prob.grid.padded_index(3, 0)] - want).abs() < 1e-15);
    }
}
