use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::container::{Container, Tensor};
use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::mionet::mlp::{Activation, Mlp};
use crate::scalar::Scalar;

/// Layer sizes of the three sub-networks. The forcing branch is always a
/// single linear layer `[sensors, p]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub branch_k: Vec<usize>,
    pub branch_f: Vec<usize>,
    pub trunk: Vec<usize>,
    pub activation: Activation,
}

impl Architecture {
    pub fn default_1d() -> Self {
        Self {
            branch_k: vec![50, 100, 100, 100],
            branch_f: vec![50, 100],
            trunk: vec![1, 100, 100, 100],
            activation: Activation::Tanh,
        }
    }

    pub fn default_2d() -> Self {
        Self {
            branch_k: vec![10_000, 500, 500, 500],
            branch_f: vec![10_000, 500],
            trunk: vec![2, 500, 500, 500],
            activation: Activation::Tanh,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let p = |d: &[usize]| d.last().copied().unwrap_or(0);
        if self.branch_k.len() < 2 || self.trunk.len() < 2 {
            return Err(Error::InvalidArgument("branch and trunk nets need at least one layer".into()));
        }
        if self.branch_f.len() != 2 {
            return Err(Error::InvalidArgument(format!(
                "the forcing branch must be one linear layer, got dims {:?}",
                self.branch_f
            )));
        }
        if p(&self.branch_k) != p(&self.branch_f) || p(&self.branch_k) != p(&self.trunk) {
            return Err(Error::InvalidArgument(format!(
                "branch and trunk output widths differ: {}, {}, {}",
                p(&self.branch_k),
                p(&self.branch_f),
                p(&self.trunk)
            )));
        }
        Ok(())
    }
}

/// `m` points per axis on the closed unit interval or square, x fastest.
pub fn sensor_lattice<T: Scalar>(dim: usize, m: usize) -> Vec<Vec<T>> {
    let c = |i: usize| T::from_count(i) / T::from_count(m.max(2) - 1);
    if dim == 1 {
        (0..m).map(|i| vec![c(i)]).collect()
    } else {
        (0..m * m).map(|k| vec![c(k % m), c(k / m)]).collect()
    }
}

/// Multiple-input operator network
/// `M(k, f)(y) = sum_j [B_k(k)]_j [B_f(f)]_j [T(y)]_j + b0`.
#[derive(Debug, Clone, PartialEq)]
pub struct MionetModel<T> {
    branch_k: Mlp<T>,
    branch_f: Mlp<T>,
    trunk: Mlp<T>,
    output_bias: T,
    k_sensors: Vec<Vec<T>>,
    f_sensors: Vec<Vec<T>>,
    /// Free-form run information (training options, dataset provenance).
    pub info: Map<String, Value>,
}

impl<T: Scalar> MionetModel<T> {
    /// Freshly initialized model with zero output bias.
    pub fn new(arch: &Architecture, k_sensors: Vec<Vec<T>>, f_sensors: Vec<Vec<T>>, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let branch_k = Mlp::new(&arch.branch_k, arch.activation, &mut rng)?;
        let branch_f = Mlp::new_linear(arch.branch_f[0], arch.branch_f[1], &mut rng)?;
        let trunk = Mlp::new(&arch.trunk, arch.activation, &mut rng)?;
        Self::from_parts(branch_k, branch_f, trunk, T::zero(), k_sensors, f_sensors)
    }

    pub fn from_parts(
        branch_k: Mlp<T>,
        branch_f: Mlp<T>,
        trunk: Mlp<T>,
        output_bias: T,
        k_sensors: Vec<Vec<T>>,
        f_sensors: Vec<Vec<T>>,
    ) -> Result<Self> {
        let p = branch_k.output_dim();
        if branch_f.output_dim() != p || trunk.output_dim() != p {
            return Err(Error::Dimension(format!(
                "branch and trunk output widths differ: {}, {}, {}",
                p,
                branch_f.output_dim(),
                trunk.output_dim()
            )));
        }
        if branch_k.input_dim() != k_sensors.len() || branch_f.input_dim() != f_sensors.len() {
            return Err(Error::Dimension(format!(
                "branch inputs ({}, {}) do not match sensor counts ({}, {})",
                branch_k.input_dim(),
                branch_f.input_dim(),
                k_sensors.len(),
                f_sensors.len()
            )));
        }
        let dim = trunk.input_dim();
        if k_sensors.iter().chain(&f_sensors).any(|s| s.len() != dim) {
            return Err(Error::Dimension(format!("sensor coordinates must have dimension {dim}")));
        }
        if !output_bias.is_finite() {
            return Err(Error::InvalidArgument("output bias must be finite".into()));
        }
        Ok(Self { branch_k, branch_f, trunk, output_bias, k_sensors, f_sensors, info: Map::new() })
    }

    pub fn branch_k(&self) -> &Mlp<T> {
        &self.branch_k
    }

    pub fn branch_f(&self) -> &Mlp<T> {
        &self.branch_f
    }

    pub fn trunk(&self) -> &Mlp<T> {
        &self.trunk
    }

    pub fn output_bias(&self) -> T {
        self.output_bias
    }

    pub fn k_sensors(&self) -> &[Vec<T>] {
        &self.k_sensors
    }

    pub fn f_sensors(&self) -> &[Vec<T>] {
        &self.f_sensors
    }

    /// Spatial dimension of query points.
    pub fn dim(&self) -> usize {
        self.trunk.input_dim()
    }

    /// Width `p` of the merged latent space.
    pub fn width(&self) -> usize {
        self.trunk.output_dim()
    }

    /// Linear in `f` with `M(k, 0) = 0`: a linear forcing branch and no output bias.
    pub fn is_solver_facing(&self) -> bool {
        self.branch_f.is_linear() && self.output_bias == T::zero()
    }

    pub fn num_params(&self) -> usize {
        self.branch_k.num_params() + self.branch_f.num_params() + self.trunk.num_params()
    }

    /// Trainable parameters: branch_k, branch_f, trunk.
    pub fn params(&self) -> Vec<T> {
        let mut p = Vec::with_capacity(self.num_params());
        self.branch_k.write_params(&mut p);
        self.branch_f.write_params(&mut p);
        self.trunk.write_params(&mut p);
        p
    }

    pub fn set_params(&mut self, p: &[T]) -> Result<()> {
        if p.len() != self.num_params() {
            return Err(Error::Dimension(format!("{} parameters for a model with {}", p.len(), self.num_params())));
        }
        let mut pos = self.branch_k.read_params(p);
        pos += self.branch_f.read_params(&p[pos..]);
        self.trunk.read_params(&p[pos..]);
        Ok(())
    }

    pub fn encode_k(&self, k_samples: &[T]) -> Result<Vec<T>> {
        self.branch_k.forward(k_samples)
    }

    pub fn encode_f(&self, f_samples: &[T]) -> Result<Vec<T>> {
        self.branch_f.forward(f_samples)
    }

    /// Trunk outputs, one row per query point.
    pub fn encode_queries(&self, query_points: &[Vec<T>]) -> Result<DenseMatrix<T>> {
        let dim = self.dim();
        let mut flat = Vec::with_capacity(query_points.len() * dim);
        for q in query_points {
            if q.len() != dim {
                return Err(Error::Dimension(format!("query point of dimension {}, expected {dim}", q.len())));
            }
            flat.extend_from_slice(q);
        }
        let x = DenseMatrix::from_vec(query_points.len(), dim, flat)?;
        Ok(self.trunk.forward_batch(&x)?.output().clone())
    }

    /// Merge of pre-computed encodings.
    pub fn merge(&self, bk: &[T], bf: &[T], trunk: &DenseMatrix<T>) -> Vec<T> {
        let c: Vec<T> = bk.iter().zip(bf).map(|(&a, &b)| a * b).collect();
        (0..trunk.nrows())
            .map(|q| {
                let mut acc = T::zero();
                for (&t, &cj) in trunk.row(q).iter().zip(&c) {
                    acc += t * cj;
                }
                acc + self.output_bias
            })
            .collect()
    }

    /// Model output at each query point.
    pub fn forward(&self, k_samples: &[T], f_samples: &[T], query_points: &[Vec<T>]) -> Result<Vec<T>> {
        if k_samples.len() != self.k_sensors.len() || f_samples.len() != self.f_sensors.len() {
            return Err(Error::Dimension(format!(
                "got ({}, {}) samples for ({}, {}) sensors",
                k_samples.len(),
                f_samples.len(),
                self.k_sensors.len(),
                self.f_sensors.len()
            )));
        }
        let bk = self.encode_k(k_samples)?;
        let bf = self.encode_f(f_samples)?;
        let tq = self.encode_queries(query_points)?;
        Ok(self.merge(&bk, &bf, &tq))
    }

    pub fn to_container(&self) -> Result<Container> {
        let f64s = |v: &[T]| v.iter().map(|x| x.to_f64_lossy()).collect::<Vec<f64>>();
        let mut meta = Map::new();
        meta.insert("kind".into(), json!("mionet"));
        let mut c = Container::default();
        for (name, net) in [("branch_k", &self.branch_k), ("branch_f", &self.branch_f), ("trunk", &self.trunk)] {
            meta.insert(
                name.into(),
                json!({
                    "dims": net.layer_dims(),
                    "activation": net.activation(),
                    "linear": net.is_linear(),
                    "bias": net.biases().iter().map(|b| b.is_some()).collect::<Vec<_>>(),
                }),
            );
            for (l, (w, b)) in net.weights().iter().zip(net.biases()).enumerate() {
                c.push(Tensor::new(format!("{name}.w{l}"), vec![w.nrows(), w.ncols()], f64s(w.as_slice()))?);
                if let Some(b) = b {
                    c.push(Tensor::new(format!("{name}.b{l}"), vec![b.len()], f64s(b))?);
                }
            }
        }
        c.push(Tensor::new("output_bias", vec![1], vec![self.output_bias.to_f64_lossy()])?);
        let dim = self.dim();
        for (name, s) in [("k_sensors", &self.k_sensors), ("f_sensors", &self.f_sensors)] {
            let flat: Vec<f64> = s.iter().flatten().map(|x| x.to_f64_lossy()).collect();
            c.push(Tensor::new(name, vec![s.len(), dim], flat)?);
        }
        meta.insert("info".into(), Value::Object(self.info.clone()));
        c.metadata = Value::Object(meta);
        Ok(c)
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        let meta = c.metadata.as_object().ok_or_else(|| Error::Format("metadata is not an object".into()))?;
        if meta.get("kind").and_then(Value::as_str) != Some("mionet") {
            return Err(Error::Format("container does not hold a MIONet model".into()));
        }
        let to_t = |v: &[f64]| v.iter().map(|&x| T::lit(x)).collect::<Vec<T>>();
        let net = |name: &str| -> Result<Mlp<T>> {
            #[derive(Deserialize)]
            struct NetMeta {
                dims: Vec<usize>,
                activation: Activation,
                linear: bool,
                bias: Vec<bool>,
            }
            let m: NetMeta = serde_json::from_value(
                meta.get(name).cloned().ok_or_else(|| Error::Format(format!("missing metadata for '{name}'")))?,
            )
            .map_err(|e| Error::Format(format!("metadata for '{name}': {e}")))?;
            if m.bias.len() + 1 != m.dims.len() {
                return Err(Error::Format(format!("metadata for '{name}' is inconsistent")));
            }
            let mut weights = Vec::new();
            let mut biases = Vec::new();
            for l in 0..m.bias.len() {
                let tn = format!("{name}.w{l}");
                let w = c.get(&tn)?;
                if w.shape != [m.dims[l + 1], m.dims[l]] {
                    return Err(Error::Format(format!(
                        "tensor '{tn}' has shape {:?}, architecture needs [{}, {}]",
                        w.shape,
                        m.dims[l + 1],
                        m.dims[l]
                    )));
                }
                weights.push(DenseMatrix::from_vec(m.dims[l + 1], m.dims[l], to_t(&w.data))?);
                biases.push(if m.bias[l] {
                    let tn = format!("{name}.b{l}");
                    let b = c.get(&tn)?;
                    if b.shape != [m.dims[l + 1]] {
                        return Err(Error::Format(format!("tensor '{tn}' has shape {:?}", b.shape)));
                    }
                    Some(to_t(&b.data))
                } else {
                    None
                });
            }
            Mlp::from_parts(weights, biases, m.activation, m.linear)
        };
        let branch_k = net("branch_k")?;
        let branch_f = net("branch_f")?;
        let trunk = net("trunk")?;
        let ob = c.get("output_bias")?;
        if ob.data.len() != 1 {
            return Err(Error::Format("tensor 'output_bias' must hold one value".into()));
        }
        let dim = trunk.input_dim();
        let sensors = |name: &str| -> Result<Vec<Vec<T>>> {
            let t = c.get(name)?;
            if t.shape.len() != 2 || t.shape[1] != dim {
                return Err(Error::Format(format!("tensor '{name}' has shape {:?}", t.shape)));
            }
            Ok(t.data.chunks(dim).map(to_t).collect())
        };
        let mut model = Self::from_parts(
            branch_k,
            branch_f,
            trunk,
            T::lit(ob.data[0]),
            sensors("k_sensors")?,
            sensors("f_sensors")?,
        )?;
        if let Some(Value::Object(info)) = meta.get("info") {
            model.info = info.clone();
        }
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_container()?.save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_container(&Container::load(path)?)
    }
}

/// Free-function forms.
pub fn save_weights<T: Scalar>(model: &MionetModel<T>, path: impl AsRef<Path>) -> Result<()> {
    model.save(path)
}

pub fn load_weights<T: Scalar>(path: impl AsRef<Path>) -> Result<MionetModel<T>> {
    MionetModel::load(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> MionetModel<f64> {
        let arch = Architecture {
            branch_k: vec![5, 8, 6],
            branch_f: vec![5, 6],
            trunk: vec![1, 8, 6],
            activation: Activation::Tanh,
        };
        MionetModel::new(&arch, sensor_lattice(1, 5), sensor_lattice(1, 5), seed).unwrap()
    }

    #[test]
    fn hand_built_unit_width_model() {
        let bk = Mlp::from_parts(
            vec![DenseMatrix::zeros(1, 2)],
            vec![Some(vec![2.0])],
            Activation::None,
            false,
        )
        .unwrap();
        let bf = Mlp::from_parts(vec![DenseMatrix::from_vec(1, 2, vec![1.0, 1.0]).unwrap()], vec![None], Activation::None, true)
            .unwrap();
        let tr = Mlp::from_parts(vec![DenseMatrix::zeros(1, 1)], vec![Some(vec![3.0])], Activation::None, false).unwrap();
        let s = vec![vec![0.0], vec![1.0]];
        let m = MionetModel::from_parts(bk, bf, tr, 0.0, s.clone(), s).unwrap();
        let out = m.forward(&[0.7, 1.3], &[1.0, 1.0], &[vec![0.0], vec![0.4], vec![1.0]]).unwrap();
        assert_eq!(out, vec![12.0; 3]);
    }

    #[test]
    fn zero_forcing_gives_zero() {
        let m = small(1);
        let out = m.forward(&[1.0, 0.9, 1.1, 1.2, 0.8], &[0.0; 5], &[vec![0.3], vec![0.5]]).unwrap();
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn linear_in_forcing() {
        let m = small(2);
        let k = [1.0, 0.9, 1.1, 1.2, 0.8];
        let q = sensor_lattice(1, 7);
        let f1 = [0.3, -1.0, 0.5, 2.0, 0.1];
        let f2 = [1.0, 0.0, -0.2, 0.4, 0.9];
        let mix: Vec<f64> = f1.iter().zip(&f2).map(|(a, b)| 2.0 * a - 3.0 * b).collect();
        let y1 = m.forward(&k, &f1, &q).unwrap();
        let y2 = m.forward(&k, &f2, &q).unwrap();
        let y = m.forward(&k, &mix, &q).unwrap();
        for i in 0..q.len() {
            let want = 2.0 * y1[i] - 3.0 * y2[i];
            assert!((y[i] - want).abs() <= 1e-12 * want.abs().max(1e-12));
        }
    }

    #[test]
    fn dimension_errors() {
        let m = small(3);
        assert!(m.forward(&[1.0; 4], &[0.0; 5], &[vec![0.5]]).is_err());
        assert!(m.forward(&[1.0; 5], &[0.0; 5], &[vec![0.5, 0.5]]).is_err());
        let arch = Architecture { branch_f: vec![5, 7], ..Architecture::default_1d() };
        assert!(arch.validate().is_err());
    }

    #[test]
    fn container_roundtrip() {
        let m = small(4);
        let back = MionetModel::<f64>::from_container(&m.to_container().unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
