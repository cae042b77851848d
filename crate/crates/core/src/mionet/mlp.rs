use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    None,
}

impl Activation {
    #[inline]
    fn apply<T: Scalar>(self, x: T) -> T {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(T::zero()),
            Activation::None => x,
        }
    }

    /// Derivative expressed through the activation output `y`.
    #[inline]
    fn grad_from_output<T: Scalar>(self, y: T) -> T {
        match self {
            Activation::Tanh => T::one() - y * y,
            Activation::Relu => {
                if y > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
            Activation::None => T::one(),
        }
    }
}

/// Fully connected network. The activation acts on hidden layers only; the
/// last layer is affine.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp<T> {
    layer_dims: Vec<usize>,
    /// `weights[l]` has shape `(dims[l+1], dims[l])`.
    weights: Vec<DenseMatrix<T>>,
    biases: Vec<Option<Vec<T>>>,
    activation: Activation,
    linear: bool,
}

/// Per-layer outputs kept for the backward pass; `outputs[0]` is the input.
#[derive(Debug, Clone)]
pub struct MlpCache<T> {
    outputs: Vec<DenseMatrix<T>>,
}

impl<T> MlpCache<T> {
    pub fn output(&self) -> &DenseMatrix<T> {
        self.outputs.last().expect("cache holds the input at least")
    }
}

impl<T: Scalar> Mlp<T> {
    /// Xavier-uniform weights and zero biases.
    pub fn new(layer_dims: &[usize], activation: Activation, rng: &mut ChaCha8Rng) -> Result<Self> {
        if layer_dims.len() < 2 || layer_dims.contains(&0) {
            return Err(Error::InvalidArgument(format!("invalid layer dimensions {layer_dims:?}")));
        }
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in layer_dims.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            weights.push(DenseMatrix::from_fn(fan_out, fan_in, |_, _| T::lit(rng.random_range(-a..a))));
            biases.push(Some(vec![T::zero(); fan_out]));
        }
        Ok(Self { layer_dims: layer_dims.to_vec(), weights, biases, activation, linear: false })
    }

    /// Single bias-free linear layer `in -> out`.
    pub fn new_linear(input: usize, output: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        let mut m = Self::new(&[input, output], Activation::None, rng)?;
        m.biases = vec![None];
        m.linear = true;
        Ok(m)
    }

    /// Assembles a network from explicit parameters.
    pub fn from_parts(
        weights: Vec<DenseMatrix<T>>,
        biases: Vec<Option<Vec<T>>>,
        activation: Activation,
        linear: bool,
    ) -> Result<Self> {
        if weights.is_empty() || weights.len() != biases.len() {
            return Err(Error::InvalidArgument("need one bias slot per weight matrix".into()));
        }
        let mut dims = vec![weights[0].ncols()];
        for (l, (w, b)) in weights.iter().zip(&biases).enumerate() {
            if w.ncols() != *dims.last().expect("non-empty") {
                return Err(Error::Dimension(format!("layer {l} expects {} inputs", w.ncols())));
            }
            if let Some(b) = b {
                if b.len() != w.nrows() {
                    return Err(Error::Dimension(format!("layer {l} bias has length {}", b.len())));
                }
            }
            dims.push(w.nrows());
        }
        if linear && (weights.len() != 1 || biases[0].is_some() || activation != Activation::None) {
            return Err(Error::InvalidArgument(
                "a linear network is one bias-free layer without activation".into(),
            ));
        }
        let m = Self { layer_dims: dims, weights, biases, activation, linear };
        if !m.all_finite() {
            return Err(Error::InvalidArgument("network parameters must be finite".into()));
        }
        Ok(m)
    }

    pub fn layer_dims(&self) -> &[usize] {
        &self.layer_dims
    }

    pub fn input_dim(&self) -> usize {
        self.layer_dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.layer_dims.last().expect("at least two dims")
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn is_linear(&self) -> bool {
        self.linear
    }

    pub fn weights(&self) -> &[DenseMatrix<T>] {
        &self.weights
    }

    pub fn biases(&self) -> &[Option<Vec<T>>] {
        &self.biases
    }

    pub fn all_finite(&self) -> bool {
        self.weights.iter().all(|w| w.as_slice().iter().all(|v| v.is_finite()))
            && self.biases.iter().flatten().all(|b| b.iter().all(|v| v.is_finite()))
    }

    pub fn num_params(&self) -> usize {
        self.weights.iter().map(|w| w.nrows() * w.ncols()).sum::<usize>()
            + self.biases.iter().flatten().map(|b| b.len()).sum::<usize>()
    }

    /// Appends parameters in layer order (weights row-major, then bias).
    pub fn write_params(&self, out: &mut Vec<T>) {
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w.as_slice());
            if let Some(b) = b {
                out.extend_from_slice(b);
            }
        }
    }

    /// Reads parameters in [`Mlp::write_params`] order; returns the count used.
    pub fn read_params(&mut self, src: &[T]) -> usize {
        let mut pos = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let len = w.nrows() * w.ncols();
            w.as_mut_slice().copy_from_slice(&src[pos..pos + len]);
            pos += len;
            if let Some(b) = b {
                let len = b.len();
                b.copy_from_slice(&src[pos..pos + len]);
                pos += len;
            }
        }
        pos
    }

    /// Batched forward pass on rows of `x` (shape `batch x input_dim`).
    pub fn forward_batch(&self, x: &DenseMatrix<T>) -> Result<MlpCache<T>> {
        if x.ncols() != self.input_dim() {
            return Err(Error::Dimension(format!(
                "network expects {} inputs, got {}",
                self.input_dim(),
                x.ncols()
            )));
        }
        let last = self.weights.len() - 1;
        let mut outputs = Vec::with_capacity(self.weights.len() + 1);
        outputs.push(x.clone());
        for (l, (w, b)) in self.weights.iter().zip(&self.biases).enumerate() {
            let input = outputs.last().expect("non-empty");
            let mut y = DenseMatrix::zeros(input.nrows(), w.nrows());
            for r in 0..input.nrows() {
                let xr = input.row(r);
                let yr = y.row_mut(r);
                for (o, yo) in yr.iter_mut().enumerate() {
                    let mut acc = b.as_ref().map_or(T::zero(), |b| b[o]);
                    for (&wv, &xv) in w.row(o).iter().zip(xr) {
                        acc += wv * xv;
                    }
                    *yo = if l < last { self.activation.apply(acc) } else { acc };
                }
            }
            outputs.push(y);
        }
        Ok(MlpCache { outputs })
    }

    /// Forward pass on a single input vector.
    pub fn forward(&self, x: &[T]) -> Result<Vec<T>> {
        let xm = DenseMatrix::from_vec(1, x.len(), x.to_vec())?;
        Ok(self.forward_batch(&xm)?.output().row(0).to_vec())
    }

    /// Backward pass. `dy` is the loss gradient w.r.t. the network output;
    /// parameter gradients are accumulated into `grad` (in parameter order).
    /// Returns the gradient w.r.t. the input only if `want_input` is set.
    pub fn backward(
        &self,
        cache: &MlpCache<T>,
        dy: DenseMatrix<T>,
        grad: &mut [T],
        want_input: bool,
    ) -> Option<DenseMatrix<T>> {
        // parameter offsets per layer
        let mut offsets = Vec::with_capacity(self.weights.len());
        let mut pos = 0;
        for (w, b) in self.weights.iter().zip(&self.biases) {
            offsets.push(pos);
            pos += w.nrows() * w.ncols() + b.as_ref().map_or(0, |b| b.len());
        }
        let last = self.weights.len() - 1;
        let mut delta = dy;
        for l in (0..self.weights.len()).rev() {
            let w = &self.weights[l];
            let out = &cache.outputs[l + 1];
            if l < last {
                for (d, &y) in delta.as_mut_slice().iter_mut().zip(out.as_slice()) {
                    *d *= self.activation.grad_from_output(y);
                }
            }
            let input = &cache.outputs[l];
            let (nout, nin) = (w.nrows(), w.ncols());
            let off = offsets[l];
            {
                let gw = &mut grad[off..off + nout * nin];
                for r in 0..delta.nrows() {
                    let xr = input.row(r);
                    for (o, &d) in delta.row(r).iter().enumerate() {
                        if d == T::zero() {
                            continue;
                        }
                        for (g, &xv) in gw[o * nin..(o + 1) * nin].iter_mut().zip(xr) {
                            *g += d * xv;
                        }
                    }
                }
            }
            if self.biases[l].is_some() {
                let gb = &mut grad[off + nout * nin..off + nout * nin + nout];
                for r in 0..delta.nrows() {
                    for (g, &d) in gb.iter_mut().zip(delta.row(r)) {
                        *g += d;
                    }
                }
            }
            if l == 0 && !want_input {
                return None;
            }
            let mut dx = DenseMatrix::zeros(delta.nrows(), nin);
            for r in 0..delta.nrows() {
                let dxr = dx.row_mut(r);
                for (o, &d) in delta.row(r).iter().enumerate() {
                    if d == T::zero() {
                        continue;
                    }
                    for (g, &wv) in dxr.iter_mut().zip(w.row(o)) {
                        *g += d * wv;
                    }
                }
            }
            delta = dx;
        }
        Some(delta)
    }
}
