use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::DenseMatrix;
use crate::mionet::dataset::Dataset;
use crate::mionet::model::MionetModel;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainOptions {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    /// Multiply the learning rate by `decay_factor` every `decay_every`
    /// epochs; `0` disables the schedule.
    pub decay_every: usize,
    pub decay_factor: f64,
    pub seed: u64,
    /// Run a finite-difference gradient check before training and abort if
    /// the error exceeds this value.
    pub grad_check_tol: Option<f64>,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 64,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            decay_every: 0,
            decay_factor: 0.5,
            seed: 0,
            grad_check_tol: Some(1e-4),
        }
    }
}

impl TrainOptions {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::InvalidArgument(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.adam_eps > 0.0) {
            return Err(Error::InvalidArgument("invalid moment parameters".into()));
        }
        if self.decay_every > 0 && !(self.decay_factor > 0.0 && self.decay_factor <= 1.0) {
            return Err(Error::InvalidArgument(format!("decay factor must lie in (0, 1], got {}", self.decay_factor)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean training loss of each epoch.
    pub loss_history: Vec<f64>,
    pub grad_check: Option<f64>,
    pub steps: usize,
}

fn check_compat<T: Scalar>(model: &MionetModel<T>, data: &Dataset<T>) -> Result<()> {
    data.validate()?;
    if data.k_sensors.len() != model.k_sensors().len()
        || data.f_sensors.len() != model.f_sensors().len()
        || data.dim != model.dim()
    {
        return Err(Error::Dimension(format!(
            "dataset ({}-d, {} + {} sensors) does not fit the model ({}-d, {} + {} sensors)",
            data.dim,
            data.k_sensors.len(),
            data.f_sensors.len(),
            model.dim(),
            model.k_sensors().len(),
            model.f_sensors().len()
        )));
    }
    Ok(())
}

fn rows_matrix<T: Scalar>(rows: &[&[T]], width: usize) -> Result<DenseMatrix<T>> {
    let mut flat = Vec::with_capacity(rows.len() * width);
    for r in rows {
        flat.extend_from_slice(r);
    }
    DenseMatrix::from_vec(rows.len(), width, flat)
}

/// Loss `scale * mean_b mean_q (pred - u)^2` over the records in `batch` and
/// its gradient w.r.t. [`MionetModel::params`].
pub fn loss_and_grad<T: Scalar>(
    model: &MionetModel<T>,
    data: &Dataset<T>,
    batch: &[usize],
    scale: T,
) -> Result<(T, Vec<T>)> {
    let b = batch.len();
    let q = data.query_points.len();
    if b == 0 || q == 0 {
        return Err(Error::InvalidArgument("empty batch or query set".into()));
    }
    let p = model.width();
    let xk = rows_matrix(&batch.iter().map(|&i| data.k[i].as_slice()).collect::<Vec<_>>(), data.k_sensors.len())?;
    let xf = rows_matrix(&batch.iter().map(|&i| data.f[i].as_slice()).collect::<Vec<_>>(), data.f_sensors.len())?;
    let xq = rows_matrix(&data.query_points.iter().map(|v| v.as_slice()).collect::<Vec<_>>(), data.dim)?;
    let ck = model.branch_k().forward_batch(&xk)?;
    let cf = model.branch_f().forward_batch(&xf)?;
    let ct = model.trunk().forward_batch(&xq)?;
    let (bk, bf, tq) = (ck.output(), cf.output(), ct.output());

    let c = DenseMatrix::from_fn(b, p, |r, j| bk[(r, j)] * bf[(r, j)]);
    let factor = T::lit(2.0) * scale / (T::from_count(b) * T::from_count(q));
    let mut loss = T::zero();
    let mut g = DenseMatrix::zeros(b, q);
    for r in 0..b {
        let u = &data.u[batch[r]];
        for qi in 0..q {
            let mut pred = model.output_bias();
            for (&cj, &tj) in c.row(r).iter().zip(tq.row(qi)) {
                pred += cj * tj;
            }
            let d = pred - u[qi];
            loss += d * d;
            g[(r, qi)] = d * factor;
        }
    }
    let loss = loss * scale / (T::from_count(b) * T::from_count(q));

    // dC = G T_q, dT_q = G^T C
    let mut dc = DenseMatrix::<T>::zeros(b, p);
    for r in 0..b {
        let dcr = dc.row_mut(r);
        for (qi, &gv) in g.row(r).iter().enumerate() {
            for (d, &t) in dcr.iter_mut().zip(tq.row(qi)) {
                *d += gv * t;
            }
        }
    }
    let mut dt = DenseMatrix::zeros(q, p);
    for r in 0..b {
        for (qi, &gv) in g.row(r).iter().enumerate() {
            for (d, &cv) in dt.row_mut(qi).iter_mut().zip(c.row(r)) {
                *d += gv * cv;
            }
        }
    }
    let dbk = DenseMatrix::from_fn(b, p, |r, j| dc[(r, j)] * bf[(r, j)]);
    let dbf = DenseMatrix::from_fn(b, p, |r, j| dc[(r, j)] * bk[(r, j)]);

    let nk = model.branch_k().num_params();
    let nf = model.branch_f().num_params();
    let mut grad = vec![T::zero(); model.num_params()];
    model.branch_k().backward(&ck, dbk, &mut grad[..nk], false);
    model.branch_f().backward(&cf, dbf, &mut grad[nk..nk + nf], false);
    model.trunk().backward(&ct, dt, &mut grad[nk + nf..], false);
    Ok((loss, grad))
}

/// Mean squared error over all records (scale 1).
pub fn dataset_loss<T: Scalar>(model: &MionetModel<T>, data: &Dataset<T>) -> Result<T> {
    if data.is_empty() {
        return Ok(T::zero());
    }
    let tq = model.encode_queries(&data.query_points)?;
    let mut total = T::zero();
    for i in 0..data.len() {
        let pred = model.merge(&model.encode_k(&data.k[i])?, &model.encode_f(&data.f[i])?, &tq);
        let se: T = pred.iter().zip(&data.u[i]).map(|(&a, &b)| (a - b) * (a - b)).sum();
        total += se / T::from_count(pred.len());
    }
    Ok(total / T::from_count(data.len()))
}

/// Mean over records of `||pred - u||_2 / ||u||_2`.
pub fn relative_l2_error<T: Scalar>(model: &MionetModel<T>, data: &Dataset<T>) -> Result<T> {
    if data.is_empty() {
        return Err(Error::InvalidArgument("relative error of an empty dataset".into()));
    }
    let tq = model.encode_queries(&data.query_points)?;
    let mut total = T::zero();
    for i in 0..data.len() {
        let pred = model.merge(&model.encode_k(&data.k[i])?, &model.encode_f(&data.f[i])?, &tq);
        let num: T = pred.iter().zip(&data.u[i]).map(|(&a, &b)| (a - b) * (a - b)).sum();
        let den: T = data.u[i].iter().map(|&b| b * b).sum();
        total += (num / den.max(T::min_positive_value())).sqrt();
    }
    Ok(total / T::from_count(data.len()))
}

/// Largest relative error between backprop and central differences over 100
/// randomly chosen parameters, for the loss of a single record.
pub fn grad_check<T: Scalar>(model: &MionetModel<T>, data: &Dataset<T>, record: usize, epsilon: f64, seed: u64) -> Result<f64> {
    check_compat(model, data)?;
    if record >= data.len() {
        return Err(Error::InvalidArgument(format!("record {record} out of range")));
    }
    if !(1e-7..=1e-4).contains(&epsilon) {
        return Err(Error::InvalidArgument(format!("epsilon must lie in [1e-7, 1e-4], got {epsilon}")));
    }
    let batch = [record];
    let (_, grad) = loss_and_grad(model, data, &batch, T::one())?;
    let params = model.params();
    let mut idx: Vec<usize> = (0..params.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    idx.truncate(100);
    let mut probe = model.clone();
    let eps = T::lit(epsilon);
    let mut worst = 0.0f64;
    for &i in &idx {
        let mut p = params.clone();
        p[i] = params[i] + eps;
        probe.set_params(&p)?;
        let up = loss_and_grad(&probe, data, &batch, T::one())?.0;
        p[i] = params[i] - eps;
        probe.set_params(&p)?;
        let dn = loss_and_grad(&probe, data, &batch, T::one())?.0;
        let fd = ((up - dn) / (eps + eps)).to_f64_lossy();
        let g = grad[i].to_f64_lossy();
        worst = worst.max((fd - g).abs() / g.abs().max(1e-8));
    }
    Ok(worst)
}

struct Adam<T> {
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Scalar> Adam<T> {
    fn new(n: usize) -> Self {
        Self { m: vec![T::zero(); n], v: vec![T::zero(); n], t: 0 }
    }

    fn step(&mut self, params: &mut [T], grad: &[T], lr: f64, opts: &TrainOptions) {
        self.t += 1;
        let (b1, b2) = (T::lit(opts.beta1), T::lit(opts.beta2));
        let one = T::one();
        let c1 = one - b1.powi(self.t);
        let c2 = one - b2.powi(self.t);
        let lr = T::lit(lr);
        let eps = T::lit(opts.adam_eps);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = b1 * self.m[i] + (one - b1) * g;
            self.v[i] = b2 * self.v[i] + (one - b2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= lr * mh / (vh.sqrt() + eps);
        }
    }
}

/// Mini-batch training of `model` on `data`; deterministic given `opts.seed`.
pub fn train<T: Scalar>(model: &mut MionetModel<T>, data: &Dataset<T>, opts: &TrainOptions) -> Result<TrainReport> {
    opts.validate()?;
    check_compat(model, data)?;
    if data.is_empty() {
        return Err(Error::InvalidArgument("cannot train on an empty dataset".into()));
    }
    let grad_check_value = match opts.grad_check_tol {
        Some(tol) => {
            let e = grad_check(model, data, 0, 1e-6, opts.seed)?;
            if e > tol {
                return Err(Error::GradientCheck(e));
            }
            Some(e)
        }
        None => None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut params = model.params();
    let mut adam = Adam::new(params.len());
    let mut history = Vec::with_capacity(opts.epochs);
    let mut steps = 0;
    let mut lr = opts.learning_rate;
    for epoch in 0..opts.epochs {
        if opts.decay_every > 0 && epoch > 0 && epoch % opts.decay_every == 0 {
            lr *= opts.decay_factor;
        }
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(opts.batch_size) {
            let (loss, grad) = loss_and_grad(model, data, chunk, T::one())?;
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss { step: steps });
            }
            epoch_loss += loss.to_f64_lossy() * chunk.len() as f64;
            adam.step(&mut params, &grad, lr, opts);
            model.set_params(&params)?;
            steps += 1;
        }
        history.push(epoch_loss / data.len() as f64);
    }
    Ok(TrainReport { loss_history: history, grad_check: grad_check_value, steps })
}
