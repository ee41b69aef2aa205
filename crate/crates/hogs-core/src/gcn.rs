//! Two-layer graph convolutional network for scoring synthetic graphs.
//!
//! logits = A_hat * dropout(relu(A_hat * X * W1)) * W2, with A_hat the
//! symmetrically normalized adjacency (self-loops included) in CSR form.
//! Training minimizes softmax cross-entropy on the train nodes with AdamW
//! (decoupled weight decay) and early-stops on validation accuracy.
//!
//! `loss_and_grads` exposes the full regularized loss and its analytic
//! gradients so they can be verified against finite differences.

use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{Role, SplitAssignment};
use crate::error::{HogsError, Result};
use crate::rng::{stream_rng, StreamTag};
use crate::topology::SyntheticTopology;

/// Symmetric sparse matrix in compressed sparse row form.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let lo = self.indptr[i];
        let hi = self.indptr[i + 1];
        match self.indices[lo..hi].binary_search(&(j as u32)) {
            Ok(k) => self.values[lo + k],
            Err(_) => 0.0,
        }
    }

    /// Sparse-dense product `self * x`.
    pub fn mul_dense(&self, x: &ArrayView2<f64>) -> Array2<f64> {
        debug_assert_eq!(self.n, x.nrows());
        let mut out = Array2::zeros((self.n, x.ncols()));
        for i in 0..self.n {
            let mut row = out.row_mut(i);
            for k in self.indptr[i]..self.indptr[i + 1] {
                row.scaled_add(self.values[k], &x.row(self.indices[k] as usize));
            }
        }
        out
    }
}

/// Build `A_hat = D^{-1/2} (A + I) D^{-1/2}` for the synthetic edge set.
/// Isolated nodes keep a unit self-loop.
pub fn normalize_adjacency(topology: &SyntheticTopology, n: usize) -> Result<CsrMatrix> {
    let mut neighbors: Vec<Vec<u32>> = (0..n).map(|i| vec![i as u32]).collect();
    for &(i, j) in topology.edges() {
        if i as usize >= n || j as usize >= n {
            return Err(HogsError::Validation(format!(
                "edge ({i}, {j}) references a node >= {n}"
            )));
        }
        neighbors[i as usize].push(j);
        neighbors[j as usize].push(i);
    }
    let degrees: Vec<f64> = neighbors.iter().map(|l| l.len() as f64).collect();
    let inv_sqrt: Vec<f64> = degrees.iter().map(|&d| 1.0 / d.sqrt()).collect();

    let mut indptr = Vec::with_capacity(n + 1);
    let mut indices = Vec::new();
    let mut values = Vec::new();
    indptr.push(0);
    for (i, list) in neighbors.iter_mut().enumerate() {
        list.sort_unstable();
        for &j in list.iter() {
            indices.push(j);
            values.push(inv_sqrt[i] * inv_sqrt[j as usize]);
        }
        indptr.push(indices.len());
    }
    Ok(CsrMatrix {
        n,
        indptr,
        indices,
        values,
    })
}

/// Training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub hidden_dim: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-2,
            weight_decay: 5e-4,
            dropout: 0.5,
            hidden_dim: 16,
            max_epochs: 300,
            patience: 30,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.learning_rate < 0.0 || !self.learning_rate.is_finite() {
            return Err(HogsError::Config("learning_rate must be >= 0".into()));
        }
        if self.weight_decay < 0.0 || !self.weight_decay.is_finite() {
            return Err(HogsError::Config("weight_decay must be >= 0".into()));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(HogsError::Config("dropout must lie in [0, 1)".into()));
        }
        if self.hidden_dim == 0 || self.max_epochs == 0 || self.patience == 0 {
            return Err(HogsError::Config(
                "hidden_dim, max_epochs and patience must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// The two-layer GCN with its normalized-adjacency cache.
#[derive(Debug, Clone)]
pub struct GcnModel {
    pub w1: Array2<f64>,
    pub w2: Array2<f64>,
    pub hidden_dim: usize,
    pub dropout_rate: f64,
    adj: CsrMatrix,
}

fn glorot(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    Array2::from_shape_fn((rows, cols), |_| (rng.random::<f64>() * 2.0 - 1.0) * limit)
}

impl GcnModel {
    /// Glorot-initialized model over a normalized adjacency.
    pub fn init(
        adj: CsrMatrix,
        feature_dim: usize,
        class_count: usize,
        hidden_dim: usize,
        dropout_rate: f64,
        seed: u64,
    ) -> Self {
        let mut rng1 = stream_rng(seed, 0, StreamTag::GcnInit);
        let mut rng2 = stream_rng(seed, 1, StreamTag::GcnInit);
        Self {
            w1: glorot(feature_dim, hidden_dim, &mut rng1),
            w2: glorot(hidden_dim, class_count, &mut rng2),
            hidden_dim,
            dropout_rate,
            adj,
        }
    }

    pub fn adjacency(&self) -> &CsrMatrix {
        &self.adj
    }

    fn propagate_features(&self, features: &Array2<f64>) -> Result<Array2<f64>> {
        if features.nrows() != self.adj.n() {
            return Err(HogsError::Dimension {
                what: "feature matrix rows",
                expected: self.adj.n(),
                got: features.nrows(),
            });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(HogsError::Numeric("non-finite feature input".into()));
        }
        Ok(self.adj.mul_dense(&features.view()))
    }

    fn forward_from_ax(&self, ax: &Array2<f64>, dropout_mask: Option<&Array2<f64>>) -> Array2<f64> {
        let mut hidden = ax.dot(&self.w1);
        hidden.mapv_inplace(|v| v.max(0.0));
        if let Some(mask) = dropout_mask {
            hidden *= mask;
        }
        self.adj.mul_dense(&hidden.view()).dot(&self.w2)
    }

    /// Full forward pass. Dropout fires only when a dropout rng is supplied
    /// (train mode) and the rate is nonzero.
    pub fn forward(
        &self,
        features: &Array2<f64>,
        dropout_rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Array2<f64>> {
        let ax = self.propagate_features(features)?;
        let mask = match dropout_rng {
            Some(rng) if self.dropout_rate > 0.0 => {
                Some(sample_dropout_mask(ax.nrows(), self.hidden_dim, self.dropout_rate, rng))
            }
            _ => None,
        };
        Ok(self.forward_from_ax(&ax, mask.as_ref()))
    }

    /// Regularized loss and analytic gradients, dropout disabled:
    /// `L = CE(train rows) + l2/2 * (|W1|^2 + |W2|^2)`.
    pub fn loss_and_grads(
        &self,
        features: &Array2<f64>,
        labels: &[u32],
        train_mask: &[bool],
        l2: f64,
    ) -> Result<(f64, Array2<f64>, Array2<f64>)> {
        let ax = self.propagate_features(features)?;
        self.loss_and_grads_from_ax(&ax, labels, train_mask, None, l2)
    }

    fn loss_and_grads_from_ax(
        &self,
        ax: &Array2<f64>,
        labels: &[u32],
        train_mask: &[bool],
        dropout_mask: Option<&Array2<f64>>,
        l2: f64,
    ) -> Result<(f64, Array2<f64>, Array2<f64>)> {
        let n = ax.nrows();
        let n_train = train_mask.iter().filter(|m| **m).count();
        if n_train == 0 {
            return Err(HogsError::Config("no training nodes in split".into()));
        }

        // Forward, keeping intermediates for the backward pass.
        let pre_act = ax.dot(&self.w1);
        let mut hidden = pre_act.mapv(|v| v.max(0.0));
        if let Some(mask) = dropout_mask {
            hidden *= mask;
        }
        let agg_hidden = self.adj.mul_dense(&hidden.view());
        let logits = agg_hidden.dot(&self.w2);

        // Masked mean cross-entropy via a stable log-softmax.
        let mut d_logits = Array2::zeros(logits.raw_dim());
        let mut loss = 0.0;
        for i in 0..n {
            if !train_mask[i] {
                continue;
            }
            let row = logits.row(i);
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            loss -= (row[labels[i] as usize] - lse) / n_train as f64;
            for c in 0..row.len() {
                let p = (row[c] - lse).exp();
                let y = (labels[i] as usize == c) as u8 as f64;
                d_logits[[i, c]] = (p - y) / n_train as f64;
            }
        }
        loss += 0.5
            * l2
            * (self.w1.iter().map(|v| v * v).sum::<f64>()
                + self.w2.iter().map(|v| v * v).sum::<f64>());

        // Backward.
        let mut grad_w2 = agg_hidden.t().dot(&d_logits);
        let d_agg_hidden = d_logits.dot(&self.w2.t());
        let mut d_hidden = self.adj.mul_dense(&d_agg_hidden.view());
        if let Some(mask) = dropout_mask {
            d_hidden *= mask;
        }
        let d_pre_act = &d_hidden * &pre_act.mapv(|v| (v > 0.0) as u8 as f64);
        let mut grad_w1 = ax.t().dot(&d_pre_act);

        if l2 > 0.0 {
            grad_w1.scaled_add(l2, &self.w1);
            grad_w2.scaled_add(l2, &self.w2);
        }
        Ok((loss, grad_w1, grad_w2))
    }
}

fn sample_dropout_mask(
    rows: usize,
    cols: usize,
    rate: f64,
    rng: &mut ChaCha8Rng,
) -> Array2<f64> {
    let keep = 1.0 - rate;
    Array2::from_shape_fn((rows, cols), |_| {
        if rng.random::<f64>() < keep {
            1.0 / keep
        } else {
            0.0
        }
    })
}

/// Fraction of masked rows whose argmax logit matches the label.
/// Ties resolve to the lowest class index.
pub fn accuracy_from_logits(logits: &ArrayView2<f64>, labels: &[u32], mask: &[bool]) -> f64 {
    let mut hits = 0usize;
    let mut total = 0usize;
    for i in 0..logits.nrows() {
        if !mask[i] {
            continue;
        }
        total += 1;
        let row = logits.row(i);
        let mut best = 0usize;
        for c in 1..row.len() {
            if row[c] > row[best] {
                best = c;
            }
        }
        if best as u32 == labels[i] {
            hits += 1;
        }
    }
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

/// Outcome of one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMetrics {
    pub seed: u64,
    pub epochs_run: usize,
    pub best_val_acc: f64,
    pub test_acc: f64,
    pub wall_ms: u64,
}

struct AdamState {
    m: Array2<f64>,
    v: Array2<f64>,
}

impl AdamState {
    fn new(shape: (usize, usize)) -> Self {
        Self {
            m: Array2::zeros(shape),
            v: Array2::zeros(shape),
        }
    }

    fn step(&mut self, w: &mut Array2<f64>, grad: &Array2<f64>, lr: f64, t: usize) {
        const BETA1: f64 = 0.9;
        const BETA2: f64 = 0.999;
        const EPS: f64 = 1e-8;
        let bc1 = 1.0 - BETA1.powi(t as i32);
        let bc2 = 1.0 - BETA2.powi(t as i32);
        for ((w, g), (m, v)) in w
            .iter_mut()
            .zip(grad.iter())
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = BETA1 * *m + (1.0 - BETA1) * g;
            *v = BETA2 * *v + (1.0 - BETA2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *w -= lr * m_hat / (v_hat.sqrt() + EPS);
        }
    }
}

/// Train in place, early-stopping on validation accuracy, and restore the
/// best-validation checkpoint before computing the test accuracy.
pub fn train(
    model: &mut GcnModel,
    features: &Array2<f64>,
    labels: &[u32],
    split: &SplitAssignment,
    cfg: &TrainConfig,
) -> Result<TrainMetrics> {
    cfg.validate()?;
    if labels.len() != features.nrows() || split.len() != features.nrows() {
        return Err(HogsError::Dimension {
            what: "labels/split length",
            expected: features.nrows(),
            got: labels.len().min(split.len()),
        });
    }
    let start = std::time::Instant::now();
    let ax = model.propagate_features(features)?;
    let train_mask = split.mask(Role::Train);
    let val_mask = split.mask(Role::Validation);
    let test_mask = split.mask(Role::Test);

    let mut adam1 = AdamState::new((model.w1.nrows(), model.w1.ncols()));
    let mut adam2 = AdamState::new((model.w2.nrows(), model.w2.ncols()));
    let mut best_val = f64::NEG_INFINITY;
    let mut best_weights = (model.w1.clone(), model.w2.clone());
    let mut epochs_since_best = 0usize;
    let mut epochs_run = 0usize;

    for epoch in 0..cfg.max_epochs {
        epochs_run = epoch + 1;
        let mask = if cfg.dropout > 0.0 {
            let mut rng = stream_rng(cfg.seed, epoch as u64, StreamTag::Dropout);
            Some(sample_dropout_mask(
                ax.nrows(),
                model.hidden_dim,
                cfg.dropout,
                &mut rng,
            ))
        } else {
            None
        };
        let (loss, g1, g2) =
            model.loss_and_grads_from_ax(&ax, labels, &train_mask, mask.as_ref(), 0.0)?;
        if !loss.is_finite() {
            return Err(HogsError::Training {
                epoch,
                msg: format!("loss became {loss}"),
            });
        }
        let t = epoch + 1;
        adam1.step(&mut model.w1, &g1, cfg.learning_rate, t);
        adam2.step(&mut model.w2, &g2, cfg.learning_rate, t);
        if cfg.weight_decay > 0.0 {
            let decay = cfg.learning_rate * cfg.weight_decay;
            model.w1.mapv_inplace(|w| w - decay * w);
            model.w2.mapv_inplace(|w| w - decay * w);
        }

        let logits = model.forward_from_ax(&ax, None);
        let val_acc = accuracy_from_logits(&logits.view(), labels, &val_mask);
        if val_acc > best_val {
            best_val = val_acc;
            best_weights = (model.w1.clone(), model.w2.clone());
            epochs_since_best = 0;
        } else {
            epochs_since_best += 1;
            if epochs_since_best > cfg.patience {
                break;
            }
        }
    }

    model.w1 = best_weights.0;
    model.w2 = best_weights.1;
    let logits = model.forward_from_ax(&ax, None);
    Ok(TrainMetrics {
        seed: cfg.seed,
        epochs_run,
        best_val_acc: best_val.max(0.0),
        test_acc: accuracy_from_logits(&logits.view(), labels, &test_mask),
        wall_ms: start.elapsed().as_millis() as u64,
    })
}

/// Accuracy of a trained model on one split role.
pub fn evaluate(
    model: &GcnModel,
    features: &Array2<f64>,
    labels: &[u32],
    split: &SplitAssignment,
    role: Role,
) -> Result<f64> {
    let logits = model.forward(features, None)?;
    Ok(accuracy_from_logits(
        &logits.view(),
        labels,
        &split.mask(role),
    ))
}
