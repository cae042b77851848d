use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::container::{Container, Tensor};
use crate::error::{Error, Result};
use crate::fem::{assemble_augmented_2d, assemble_load, PaddingMode, PiecewiseLinearFn, StructuredGrid};
use crate::gp::{positivity_guard, GpSampler, GpSpec, DEFAULT_JITTER, DEFAULT_POSITIVITY_FLOOR};
use crate::hybrid::{SolveStatus, StopRule};
use crate::mionet::model::sensor_lattice;
use crate::multigrid::{solve_multigrid, MgHierarchy, MgParams};
use crate::scalar::Scalar;

/// Training records `(k, f) -> u` sharing one set of sensors and query points.
///
/// `k` and `f` hold samples at the sensor lattice; `u` holds the solution at
/// the query points. In 2-d problems with boundary data the boundary ring of
/// `f` carries `g` instead of the source.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    pub dim: usize,
    pub k_sensors: Vec<Vec<T>>,
    pub f_sensors: Vec<Vec<T>>,
    pub query_points: Vec<Vec<T>>,
    pub k: Vec<Vec<T>>,
    pub f: Vec<Vec<T>>,
    pub u: Vec<Vec<T>>,
    pub metadata: Value,
}

impl<T: Scalar> Dataset<T> {
    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let (nk, nf, nq) = (self.k_sensors.len(), self.f_sensors.len(), self.query_points.len());
        if self.k.len() != self.u.len() || self.f.len() != self.u.len() {
            return Err(Error::Dimension("dataset columns have different record counts".into()));
        }
        for (i, ((k, f), u)) in self.k.iter().zip(&self.f).zip(&self.u).enumerate() {
            if k.len() != nk || f.len() != nf || u.len() != nq {
                return Err(Error::Dimension(format!("record {i} does not match the sensor and query counts")));
            }
        }
        Ok(())
    }

    /// Records `range` as a new dataset with the same sensors.
    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            dim: self.dim,
            k_sensors: self.k_sensors.clone(),
            f_sensors: self.f_sensors.clone(),
            query_points: self.query_points.clone(),
            k: self.k[range.clone()].to_vec(),
            f: self.f[range.clone()].to_vec(),
            u: self.u[range].to_vec(),
            metadata: self.metadata.clone(),
        }
    }

    pub fn to_container(&self) -> Result<Container> {
        let mut c = Container::new(json!({ "kind": "dataset", "dim": self.dim, "info": self.metadata }));
        let flat = |rows: &[Vec<T>]| rows.iter().flatten().map(|v| v.to_f64_lossy()).collect::<Vec<f64>>();
        let n = self.len();
        for (name, rows, width) in [
            ("k_sensors", &self.k_sensors, self.dim),
            ("f_sensors", &self.f_sensors, self.dim),
            ("query_points", &self.query_points, self.dim),
        ] {
            c.push(Tensor::new(name, vec![rows.len(), width], flat(rows))?);
        }
        c.push(Tensor::new("k", vec![n, self.k_sensors.len()], flat(&self.k))?);
        c.push(Tensor::new("f", vec![n, self.f_sensors.len()], flat(&self.f))?);
        c.push(Tensor::new("u", vec![n, self.query_points.len()], flat(&self.u))?);
        Ok(c)
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let meta = &c.metadata;
        if meta.get("kind").and_then(Value::as_str) != Some("dataset") {
            return Err(Error::Format("container does not hold a dataset".into()));
        }
        let dim = meta.get("dim").and_then(Value::as_u64).ok_or_else(|| Error::Format("missing 'dim'".into()))? as usize;
        let rows = |name: &str, width: Option<usize>| -> Result<Vec<Vec<T>>> {
            let t = c.get(name)?;
            if t.shape.len() != 2 || width.is_some_and(|w| t.shape[1] != w) {
                return Err(Error::Format(format!("tensor '{name}' has shape {:?}", t.shape)));
            }
            let w = t.shape[1].max(1);
            Ok(t.data.chunks(w).take(t.shape[0]).map(|r| r.iter().map(|&v| T::lit(v)).collect()).collect())
        };
        let k_sensors = rows("k_sensors", Some(dim))?;
        let f_sensors = rows("f_sensors", Some(dim))?;
        let query_points = rows("query_points", Some(dim))?;
        let d = Self {
            dim,
            k: rows("k", Some(k_sensors.len()))?,
            f: rows("f", Some(f_sensors.len()))?,
            u: rows("u", Some(query_points.len()))?,
            k_sensors,
            f_sensors,
            query_points,
            metadata: meta.get("info").cloned().unwrap_or(Value::Null),
        };
        d.validate()?;
        Ok(d)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_container()?.save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_container(&Container::load(path)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FailurePolicy {
    #[default]
    Abort,
    Skip,
}

/// Recipe for [`generate_dataset`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub dim: usize,
    /// Interior nodes per axis of the grid the reference solutions are computed on.
    pub fine_n: usize,
    /// Sensor lattice points per axis, boundary included.
    pub sensors: usize,
    /// Interior nodes per axis of the query grid.
    pub query_n: usize,
    pub gp_k: GpSpec,
    pub gp_f: GpSpec,
    /// Boundary data in 2-d; homogeneous when absent.
    pub gp_g: Option<GpSpec>,
    pub n_records: usize,
    pub seed: u64,
    pub positivity_floor: f64,
    pub mg_tol: f64,
    pub on_failure: FailurePolicy,
}

impl DatasetConfig {
    /// 1-d recipe: 50 sensors, solutions on 255 interior nodes, queries at
    /// the 48 interior nodes that coincide with the inner sensors.
    pub fn default_1d(n_records: usize, seed: u64) -> Self {
        Self {
            dim: 1,
            fine_n: 255,
            sensors: 50,
            query_n: 48,
            gp_k: GpSpec::rbf(1.0, 0.2, 0.1, 0),
            gp_f: GpSpec::rbf(0.0, 1.0, 0.1, 1),
            gp_g: None,
            n_records,
            seed,
            positivity_floor: DEFAULT_POSITIVITY_FLOOR,
            mg_tol: 1e-10,
            on_failure: FailurePolicy::Abort,
        }
    }

    /// 2-d recipe with length scale 0.2 and a 100 x 100 sensor lattice.
    pub fn default_2d(n_records: usize, seed: u64) -> Self {
        Self {
            dim: 2,
            fine_n: 511,
            sensors: 100,
            query_n: 98,
            gp_k: GpSpec::rbf(1.0, 0.2, 0.2, 0),
            gp_f: GpSpec::rbf(0.0, 1.0, 0.2, 1),
            gp_g: None,
            n_records,
            seed,
            positivity_floor: DEFAULT_POSITIVITY_FLOOR,
            mg_tol: 1e-10,
            on_failure: FailurePolicy::Abort,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim != 1 && self.dim != 2 {
            return Err(Error::InvalidArgument(format!("dim must be 1 or 2, got {}", self.dim)));
        }
        if self.sensors < 3 || self.query_n < 1 {
            return Err(Error::InvalidArgument("need at least 3 sensors and 1 query node per axis".into()));
        }
        if self.fine_n + 1 < 4 * (self.sensors - 1) {
            return Err(Error::InvalidArgument(format!(
                "fine grid with {} cells per axis is coarser than 4x the sensor spacing",
                self.fine_n + 1
            )));
        }
        if self.gp_g.is_some() && self.dim != 2 {
            return Err(Error::InvalidArgument("boundary data is only supported in 2-d".into()));
        }
        self.gp_k.validate()?;
        self.gp_f.validate()?;
        if let Some(g) = &self.gp_g {
            g.validate()?;
        }
        if !(self.mg_tol > 0.0) || !(self.positivity_floor > 0.0) {
            return Err(Error::InvalidArgument("mg_tol and positivity_floor must be positive".into()));
        }
        Ok(())
    }

    pub fn query_grid<T: Scalar>(&self) -> Result<StructuredGrid<T>> {
        StructuredGrid::new(self.dim, self.query_n)
    }
}

/// Solves one record on the fine grid and samples the solution at the query
/// points. `f_samples` follows the dataset convention (boundary ring holds g
/// in 2-d when `with_boundary` is set).
pub fn solve_record<T: Scalar>(
    cfg: &DatasetConfig,
    k_samples: &[T],
    f_samples: &[T],
    with_boundary: bool,
    hierarchy_params: MgParams,
    record: usize,
) -> Result<Vec<T>> {
    let fine = StructuredGrid::<T>::new(cfg.dim, cfg.fine_n)?;
    let kfn = PiecewiseLinearFn::from_lattice(cfg.dim, cfg.sensors, k_samples.to_vec())?;
    let ffn_raw = PiecewiseLinearFn::from_lattice(cfg.dim, cfg.sensors, f_samples.to_vec())?;
    let m = cfg.sensors;
    // source: boundary ring of the sensor field replaced by its inward neighbour
    // when it carries boundary data
    let f_padded: Vec<T> = if with_boundary {
        let sg = *ffn_raw.grid();
        (0..sg.num_padded())
            .map(|p| {
                let (i, j) = sg.padded_to_axes(p);
                let (ci, cj) = (i.clamp(1, m - 2), j.clamp(1, m - 2));
                f_samples[sg.padded_index(ci, cj)]
            })
            .collect()
    } else {
        f_samples.to_vec()
    };
    let ffn = PiecewiseLinearFn::from_lattice(cfg.dim, m, f_padded)?;
    let k = |x: &[T]| kfn.eval(x).unwrap_or(T::nan());
    let f = |x: &[T]| ffn.eval(x).unwrap_or(T::nan());
    let h = MgHierarchy::build(&fine, k, hierarchy_params)?;
    let mut b = assemble_load(&fine, f)?.values;
    let mut lift = None;
    if with_boundary {
        // move the boundary data to the right-hand side through the interior
        // rows of the augmented operator
        let gfn = |t: T| {
            let (x, y) = boundary_point(t);
            ffn_raw.eval(&[x, y]).unwrap_or(T::nan())
        };
        let (aug, rhs) = assemble_augmented_2d(&fine, k, |_: &[T]| T::zero(), gfn)?;
        let gvals: Vec<T> = (0..fine.num_padded())
            .map(|p| if fine.is_boundary_padded(p) { rhs.values[p] } else { T::zero() })
            .collect();
        let coupling = aug.spmv(&gvals)?;
        for (kk, bk) in b.iter_mut().enumerate() {
            let (i, j) = fine.interior_to_padded(kk);
            *bk -= coupling[fine.padded_index(i, j)];
        }
        lift = Some(gvals);
    }
    let bnorm = crate::linalg::norm2(&b);
    let stop = StopRule::new(T::lit(cfg.mg_tol) * bnorm.max(T::min_positive_value()), 200)?;
    let trace = solve_multigrid(&h, &b, &vec![T::zero(); b.len()], &stop)?;
    if trace.status != SolveStatus::Converged {
        return Err(Error::NotConverged { record, residual: trace.final_residual().to_f64_lossy() });
    }
    let values = match lift {
        Some(mut g) => {
            for (kk, &v) in trace.solution.iter().enumerate() {
                let (i, j) = fine.interior_to_padded(kk);
                g[fine.padded_index(i, j)] = v;
            }
            g
        }
        None => PiecewiseLinearFn::from_interior(fine, &trace.solution, PaddingMode::Zero)?.padded_values().to_vec(),
    };
    let u = PiecewiseLinearFn::from_padded(fine, values)?;
    u.eval_many(&cfg.query_grid::<T>()?.interior_points())
}

/// Point on the unit-square boundary at parameter `t in [0,4)`.
pub fn boundary_point<T: Scalar>(t: T) -> (T, T) {
    let one = T::one();
    let t = t - (t / T::lit(4.0)).floor() * T::lit(4.0);
    if t < one {
        (t, T::zero())
    } else if t < T::lit(2.0) {
        (one, t - one)
    } else if t < T::lit(3.0) {
        (T::lit(3.0) - t, one)
    } else {
        (T::zero(), T::lit(4.0) - t)
    }
}

fn field_rng(spec: &GpSpec, seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(seed);
    rng
}

/// Samples `n_records` coefficient/source pairs, solves each on the fine
/// grid with multigrid and stores the solution at the query points.
///
/// Each field draws from its own generator keyed by the field's GP seed and
/// the dataset seed, so the output is a pure function of the config.
pub fn generate_dataset<T: Scalar>(cfg: &DatasetConfig) -> Result<(Dataset<T>, Vec<usize>)> {
    cfg.validate()?;
    let m = cfg.sensors;
    let sensors = sensor_lattice::<T>(cfg.dim, m);
    let (k_sampler, f_sampler) = if cfg.dim == 1 {
        (GpSampler::new(&cfg.gp_k, &sensors, DEFAULT_JITTER)?, GpSampler::new(&cfg.gp_f, &sensors, DEFAULT_JITTER)?)
    } else {
        (GpSampler::lattice_2d(&cfg.gp_k, m, DEFAULT_JITTER)?, GpSampler::lattice_2d(&cfg.gp_f, m, DEFAULT_JITTER)?)
    };
    let g_sampler = match &cfg.gp_g {
        Some(spec) => {
            let lattice = StructuredGrid::<T>::new(2, m - 2)?;
            let ring: Vec<usize> = (0..lattice.num_padded()).filter(|&p| lattice.is_boundary_padded(p)).collect();
            let ts: Vec<Vec<T>> = ring
                .iter()
                .map(|&p| {
                    let (i, j) = lattice.padded_to_axes(p);
                    vec![lattice.boundary_parameter(i, j).expect("ring node")]
                })
                .collect();
            Some((GpSampler::new(spec, &ts, DEFAULT_JITTER)?, ring))
        }
        None => None,
    };
    let mut rk = field_rng(&cfg.gp_k, cfg.seed);
    let mut rf = field_rng(&cfg.gp_f, cfg.seed);
    let mut rg = cfg.gp_g.as_ref().map(|s| field_rng(s, cfg.seed));
    let query_grid = cfg.query_grid::<T>()?;
    let params = MgParams::auto(&StructuredGrid::<T>::new(cfg.dim, cfg.fine_n)?, 3);
    let floor = T::lit(cfg.positivity_floor);
    let mut data = Dataset {
        dim: cfg.dim,
        k_sensors: sensors.clone(),
        f_sensors: sensors,
        query_points: query_grid.interior_points(),
        k: Vec::new(),
        f: Vec::new(),
        u: Vec::new(),
        metadata: Value::Null,
    };
    let mut skipped = Vec::new();
    let mut clamped = 0usize;
    for rec in 0..cfg.n_records {
        let (k, c) = positivity_guard(&k_sampler.draw(&mut rk), floor)?;
        clamped += c;
        let mut f = f_sampler.draw(&mut rf);
        if let (Some((gs, ring)), Some(rng)) = (&g_sampler, rg.as_mut()) {
            for (&p, v) in ring.iter().zip(gs.draw(rng)) {
                f[p] = v;
            }
        }
        match solve_record(cfg, &k, &f, g_sampler.is_some(), params, rec) {
            Ok(u) => {
                data.k.push(k);
                data.f.push(f);
                data.u.push(u);
            }
            Err(e @ Error::NotConverged { .. }) => match cfg.on_failure {
                FailurePolicy::Abort => return Err(e),
                FailurePolicy::Skip => skipped.push(rec),
            },
            Err(e) => return Err(e),
        }
    }
    data.metadata = json!({
        "config": serde_json::to_value(cfg)?,
        "clamped_k_samples": clamped,
        "skipped_records": skipped,
    });
    Ok((data, skipped))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn manufactured_record() {
        let cfg = DatasetConfig::default_1d(0, 0);
        let s = sensor_lattice::<f64>(1, cfg.sensors);
        let pi = std::f64::consts::PI;
        let k = vec![1.0; s.len()];
        let f: Vec<f64> = s.iter().map(|x| pi * pi * (pi * x[0]).sin()).collect();
        let g = StructuredGrid::<f64>::new_1d(cfg.fine_n).unwrap();
        let u = solve_record(&cfg, &k, &f, false, MgParams::auto(&g, 3), 0).unwrap();
        let q = cfg.query_grid::<f64>().unwrap().interior_points();
        let err = u.iter().zip(&q).map(|(v, x)| (v - (pi * x[0]).sin()).abs()).fold(0.0, f64::max);
        assert!(err < 1e-3, "max error {err}");
    }

    #[test]
    fn empty_dataset_roundtrips() {
        let (d, skipped) = generate_dataset::<f64>(&DatasetConfig::default_1d(0, 0)).unwrap();
        assert!(d.is_empty() && skipped.is_empty());
        let back = Dataset::<f64>::from_container(&d.to_container().unwrap()).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn small_dataset_is_deterministic() {
        let cfg = DatasetConfig::default_1d(2, 7);
        let (a, _) = generate_dataset::<f64>(&cfg).unwrap();
        let (b, _) = generate_dataset::<f64>(&cfg).unwrap();
        assert_eq!(a.to_container().unwrap().to_bytes().unwrap(), b.to_container().unwrap().to_bytes().unwrap());
        assert_eq!(a.len(), 2);
        assert_eq!(a.u[0].len(), 48);
        assert_ne!(a.f[0], a.f[1]);
    }

    #[test]
    fn boundary_walk() {
        assert_eq!(boundary_point(0.5f64), (0.5, 0.0));
        assert_eq!(boundary_point(1.5f64), (1.0, 0.5));
        assert_eq!(boundary_point(2.25f64), (0.75, 1.0));
        assert_eq!(boundary_point(3.5f64), (0.0, 0.5));
    }
}
