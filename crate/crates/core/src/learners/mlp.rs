//! Multilayer perceptron trained by mini-batch gradient descent.
//!
//! Hidden layers use ReLU; the output is linear. Binary tasks are trained on
//! logits with the cross-entropy loss and `predict` returns logits. Inputs are
//! standardised with training statistics and regression targets are scaled
//! internally; predictions are mapped back to data units.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis, Zip};
use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Task};
use crate::error::{invalid, Error, Result};
use crate::learners::Learner;
use crate::rng::Stream;
use crate::stats::{bce_with_logit, sigmoid};

pub const LEARNING_RATE_GRID: [f64; 2] = [1e-2, 1e-3];
pub const L1_GRID: [f64; 2] = [0.0, 1e-2];
pub const L2_GRID: [f64; 2] = [0.0, 1e-1];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MlpConfig {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub l1: f64,
    pub l2: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    /// Share of the training rows held out for early stopping; 0 disables it.
    pub validation_fraction: f64,
    pub optimizer: Optimizer,
}

impl Default for MlpConfig {
    fn default() -> Self {
        MlpConfig {
            hidden: vec![32, 32],
            learning_rate: 1e-3,
            l1: 0.0,
            l2: 0.0,
            epochs: 200,
            batch_size: 64,
            patience: 20,
            validation_fraction: 0.2,
            optimizer: Optimizer::Adam,
        }
    }
}

impl MlpConfig {
    /// Learning rate × L1 × L2 grid around `self`.
    pub fn default_grid(&self) -> Vec<MlpConfig> {
        let mut grid = Vec::with_capacity(8);
        for lr in LEARNING_RATE_GRID {
            for l1 in L1_GRID {
                for l2 in L2_GRID {
                    grid.push(MlpConfig { learning_rate: lr, l1, l2, ..self.clone() });
                }
            }
        }
        grid
    }

    fn validate(&self) -> Result<()> {
        if self.hidden.contains(&0) {
            return invalid("hidden layer widths must be positive");
        }
        if !(self.learning_rate > 0.0) || self.l1 < 0.0 || self.l2 < 0.0 {
            return invalid("learning rate must be positive and penalties non-negative");
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return invalid("epochs and batch size must be positive");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return invalid("validation fraction must lie in [0, 1)");
        }
        Ok(())
    }
}

/// Fully connected layer, `out = input · w + b`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Dense {
    fn zeros_like(&self) -> Dense {
        Dense { w: Array2::zeros(self.w.raw_dim()), b: Array1::zeros(self.b.len()) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub layers: Vec<Dense>,
    pub task: Task,
    pub x_shift: Array1<f64>,
    pub x_scale: Array1<f64>,
    pub y_shift: f64,
    pub y_scale: f64,
    /// Training objective per completed epoch.
    pub history: Vec<f64>,
}

fn relu_inplace(a: &mut Array2<f64>) {
    a.mapv_inplace(|v| v.max(0.0));
}

impl Mlp {
    /// Network with random weights and identity standardisation.
    pub fn init(n_inputs: usize, hidden: &[usize], task: Task, stream: Stream) -> Result<Mlp> {
        if hidden.contains(&0) {
            return invalid("hidden layer widths must be positive");
        }
        let mut rng = stream.rng();
        let mut widths = vec![n_inputs];
        widths.extend_from_slice(hidden);
        widths.push(1);
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(l, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let gain = if l + 2 < widths.len() { 2.0 } else { 1.0 };
                let dist = Normal::new(0.0, (gain / fan_in.max(1) as f64).sqrt()).unwrap();
                Dense { w: Array2::from_shape_simple_fn((fan_in, fan_out), || dist.sample(&mut rng)), b: Array1::zeros(fan_out) }
            })
            .collect();
        Ok(Mlp {
            layers,
            task,
            x_shift: Array1::zeros(n_inputs),
            x_scale: Array1::ones(n_inputs),
            y_shift: 0.0,
            y_scale: 1.0,
            history: Vec::new(),
        })
    }

    pub fn n_inputs(&self) -> usize {
        self.layers[0].w.nrows()
    }

    fn standardize(&self, x: ArrayView2<f64>) -> Array2<f64> {
        let mut xs = x.to_owned();
        Zip::from(xs.rows_mut()).for_each(|mut row| {
            Zip::from(&mut row).and(&self.x_shift).and(&self.x_scale).for_each(|v, m, s| *v = (*v - m) / s);
        });
        xs
    }

    /// Raw network output for already-standardised inputs.
    pub fn forward(&self, xs: ArrayView2<f64>) -> Array1<f64> {
        let first = xs.dot(&self.layers[0].w) + &self.layers[0].b;
        self.forward_from_first(first)
    }

    fn forward_from_first(&self, mut a: Array2<f64>) -> Array1<f64> {
        for layer in &self.layers[1..] {
            relu_inplace(&mut a);
            a = a.dot(&layer.w) + &layer.b;
        }
        a.column(0).to_owned()
    }

    fn to_output_units(&self, raw: Array1<f64>) -> Array1<f64> {
        match self.task {
            Task::Regression => raw.mapv(|v| v * self.y_scale + self.y_shift),
            Task::Binary => raw,
        }
    }

    fn data_loss(&self, out: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
        let m = y.len() as f64;
        match self.task {
            Task::Regression => out.iter().zip(y).map(|(o, t)| (o - t) * (o - t)).sum::<f64>() / m,
            Task::Binary => out.iter().zip(y).map(|(&o, &t)| bce_with_logit(t, o)).sum::<f64>() / m,
        }
    }

    fn penalty(&self, l1: f64, l2: f64) -> f64 {
        if l1 == 0.0 && l2 == 0.0 {
            return 0.0;
        }
        self.layers.iter().map(|d| d.w.iter().map(|w| l1 * w.abs() + l2 * w * w).sum::<f64>()).sum()
    }

    /// Objective (mean data loss plus `l1‖W‖₁ + l2‖W‖₂²`) and its gradient
    /// with respect to every layer, evaluated on network-space inputs and
    /// targets (standardised features, scaled regression targets).
    pub fn objective_and_gradient(&self, xs: ArrayView2<f64>, ys: ArrayView1<f64>, l1: f64, l2: f64) -> (f64, Vec<Dense>) {
        let m = xs.nrows() as f64;
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut acts: Vec<Array2<f64>> = Vec::with_capacity(self.layers.len());
        let mut a = xs.to_owned();
        for (l, layer) in self.layers.iter().enumerate() {
            let z = a.dot(&layer.w) + &layer.b;
            acts.push(a);
            a = z.clone();
            if l + 1 < self.layers.len() {
                relu_inplace(&mut a);
            }
            pre.push(z);
        }
        let out = a.column(0);
        let loss = self.data_loss(out, ys) + self.penalty(l1, l2);
        let mut delta: Array2<f64> = match self.task {
            Task::Regression => Array2::from_shape_fn((out.len(), 1), |(i, _)| 2.0 * (out[i] - ys[i]) / m),
            Task::Binary => Array2::from_shape_fn((out.len(), 1), |(i, _)| (sigmoid(out[i]) - ys[i]) / m),
        };
        let mut grads: Vec<Dense> = self.layers.iter().map(Dense::zeros_like).collect();
        for l in (0..self.layers.len()).rev() {
            let g = &mut grads[l];
            g.w = acts[l].t().dot(&delta);
            g.b = delta.sum_axis(Axis(0));
            if l1 != 0.0 || l2 != 0.0 {
                Zip::from(&mut g.w).and(&self.layers[l].w).for_each(|gw, &w| {
                    let sign = if w == 0.0 { 0.0 } else { w.signum() };
                    *gw += l1 * sign + 2.0 * l2 * w;
                });
            }
            if l > 0 {
                let mut back = delta.dot(&self.layers[l].w.t());
                Zip::from(&mut back).and(&pre[l - 1]).for_each(|d, &z| {
                    if z <= 0.0 {
                        *d = 0.0;
                    }
                });
                delta = back;
            }
        }
        (loss, grads)
    }

    pub fn n_params(&self) -> usize {
        self.layers.iter().map(|d| d.w.len() + d.b.len()).sum()
    }

    /// Parameters in layer order, weights (row-major) before biases.
    pub fn flat_params(&self) -> Vec<f64> {
        flatten(&self.layers)
    }

    pub fn set_flat_params(&mut self, values: &[f64]) {
        assert_eq!(values.len(), self.n_params());
        let mut it = values.iter();
        for d in &mut self.layers {
            for w in d.w.iter_mut().chain(d.b.iter_mut()) {
                *w = *it.next().unwrap();
            }
        }
    }

    /// Mean data loss in data units: MSE for regression, cross-entropy on
    /// logits for binary targets.
    pub fn loss_on(&self, data: &Dataset) -> Result<f64> {
        let pred = self.predict(data.x())?;
        Ok(super::data_loss(data.task, pred.view(), data.y()))
    }
}

pub fn flatten(layers: &[Dense]) -> Vec<f64> {
    layers.iter().flat_map(|d| d.w.iter().chain(d.b.iter()).copied()).collect()
}

struct AdamState {
    m: Vec<Dense>,
    v: Vec<Dense>,
    t: i32,
}

fn apply_step(layers: &mut [Dense], grads: &[Dense], lr: f64, opt: &mut Option<AdamState>) {
    match opt {
        None => {
            for (d, g) in layers.iter_mut().zip(grads) {
                d.w.scaled_add(-lr, &g.w);
                d.b.scaled_add(-lr, &g.b);
            }
        }
        Some(st) => {
            const B1: f64 = 0.9;
            const B2: f64 = 0.999;
            const EPS: f64 = 1e-8;
            st.t += 1;
            let c1 = 1.0 - B1.powi(st.t);
            let c2 = 1.0 - B2.powi(st.t);
            let step = |p: &mut f64, g: f64, m: &mut f64, v: &mut f64| {
                *m = B1 * *m + (1.0 - B1) * g;
                *v = B2 * *v + (1.0 - B2) * g * g;
                *p -= lr * (*m / c1) / ((*v / c2).sqrt() + EPS);
            };
            for (((d, g), m), v) in layers.iter_mut().zip(grads).zip(st.m.iter_mut()).zip(st.v.iter_mut()) {
                Zip::from(&mut d.w).and(&g.w).and(&mut m.w).and(&mut v.w).for_each(|p, &g, m, v| step(p, g, m, v));
                Zip::from(&mut d.b).and(&g.b).and(&mut m.b).and(&mut v.b).for_each(|p, &g, m, v| step(p, g, m, v));
            }
        }
    }
}

pub fn fit_mlp(data: &Dataset, config: &MlpConfig, stream: Stream) -> Result<Mlp> {
    config.validate()?;
    let (n, p) = (data.n(), data.p());
    if n < 2 {
        return invalid("need at least two rows to train");
    }
    let mut model = Mlp::init(p, &config.hidden, data.task, stream.tagged("init"))?;
    let x = data.x();
    model.x_shift = x.mean_axis(Axis(0)).unwrap();
    model.x_scale = x.std_axis(Axis(0), 0.0).mapv(|s| if s > 1e-12 { s } else { 1.0 });
    if data.task == Task::Regression {
        model.y_shift = data.y.mean().unwrap();
        let sd = data.y.std(0.0);
        model.y_scale = if sd > 1e-12 { sd } else { 1.0 };
    }
    let xs = model.standardize(x);
    let ys = data.y.mapv(|v| (v - model.y_shift) / model.y_scale);

    let mut rng = stream.tagged("batches").rng();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let n_val = if config.validation_fraction > 0.0 && config.patience > 0 {
        ((n as f64 * config.validation_fraction).round() as usize).clamp(1, n - 1)
    } else {
        0
    };
    let (val_idx, train_idx) = order.split_at(n_val);
    let mut train_idx = train_idx.to_vec();
    let x_val = xs.select(Axis(0), val_idx);
    let y_val = ys.select(Axis(0), val_idx);
    let batch = config.batch_size.min(train_idx.len());

    let mut opt = match config.optimizer {
        Optimizer::Adam => Some(AdamState {
            m: model.layers.iter().map(Dense::zeros_like).collect(),
            v: model.layers.iter().map(Dense::zeros_like).collect(),
            t: 0,
        }),
        Optimizer::Sgd => None,
    };
    let mut best: Option<(f64, Vec<Dense>)> = None;
    let mut stale = 0;
    let mut last_finite = None;
    for epoch in 0..config.epochs {
        train_idx.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in train_idx.chunks(batch) {
            let xb = xs.select(Axis(0), chunk);
            let yb = ys.select(Axis(0), chunk);
            let (loss, grads) = model.objective_and_gradient(xb.view(), yb.view(), config.l1, config.l2);
            if !loss.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, last_finite });
            }
            total += loss * chunk.len() as f64;
            apply_step(&mut model.layers, &grads, config.learning_rate, &mut opt);
        }
        let epoch_loss = total / train_idx.len() as f64;
        last_finite = Some(epoch_loss);
        model.history.push(epoch_loss);
        if n_val > 0 {
            let val = model.data_loss(model.forward(x_val.view()).view(), y_val.view());
            if !val.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, last_finite });
            }
            if best.as_ref().is_none_or(|(b, _)| val < *b) {
                best = Some((val, model.layers.clone()));
                stale = 0;
            } else {
                stale += 1;
                if stale > config.patience {
                    break;
                }
            }
        }
    }
    if let Some((_, layers)) = best {
        model.layers = layers;
    }
    if model.layers.iter().any(|d| d.w.iter().chain(d.b.iter()).any(|v| !v.is_finite())) {
        return Err(Error::NonFiniteLoss { epoch: model.history.len(), last_finite });
    }
    Ok(model)
}

impl Learner for Mlp {
    fn task(&self) -> Task {
        self.task
    }

    fn n_features(&self) -> usize {
        self.n_inputs()
    }

    fn predict(&self, x: ArrayView2<f64>) -> Result<Array1<f64>> {
        if x.ncols() != self.n_inputs() {
            return Err(Error::DimensionMismatch { expected: self.n_inputs(), got: x.ncols() });
        }
        let xs = self.standardize(x);
        Ok(self.to_output_units(self.forward(xs.view())))
    }

    /// Column replacement only moves the first pre-activation along row `j`
    /// of the first weight matrix, so the base product is computed once.
    fn predict_with_columns(&self, x: ArrayView2<f64>, j: usize, columns: ArrayView2<f64>) -> Result<Array2<f64>> {
        let (n, p) = x.dim();
        if p != self.n_inputs() {
            return Err(Error::DimensionMismatch { expected: self.n_inputs(), got: p });
        }
        if j >= p {
            return invalid(format!("column {j} out of range for {p} features"));
        }
        if columns.nrows() != n {
            return Err(Error::DimensionMismatch { expected: n, got: columns.nrows() });
        }
        let n_var = columns.ncols();
        let xs = self.standardize(x);
        let first = &self.layers[0];
        let base = xs.dot(&first.w) + &first.b;
        let h = base.ncols();
        let wj = first.w.row(j);
        let scale = self.x_scale[j];
        let mut stacked = Array2::<f64>::zeros((n * n_var, h));
        for b in 0..n_var {
            let mut block = stacked.slice_mut(s![b * n..(b + 1) * n, ..]);
            block.assign(&base);
            for i in 0..n {
                let delta = (columns[[i, b]] - x[[i, j]]) / scale;
                if delta != 0.0 {
                    block.row_mut(i).scaled_add(delta, &wj);
                }
            }
        }
        let out = self.to_output_units(self.forward_from_first(stacked));
        Ok(Array2::from_shape_fn((n, n_var), |(i, b)| out[b * n + i]))
    }
}
