//! Probabilistic classifiers over fixed-length descriptors and stratified
//! cross-validation.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// A trained classifier returning one probability per class label.
pub trait ProbClassifier: Send + Sync {
    fn class_labels(&self) -> &[String];

    fn input_dim(&self) -> usize;

    /// Probabilities in label order. Inputs shorter than `input_dim` are
    /// zero-padded; longer inputs are rejected.
    fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>>;

    fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.predict_proba(x)?))
    }
}

/// Index of the largest entry; the lowest index wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftmaxConfig {
    /// L2 penalty on the weights, relative to the largest eigenvalue of the
    /// centred feature covariance.
    pub l2: f64,
    pub iterations: usize,
}

impl Default for SoftmaxConfig {
    fn default() -> Self {
        Self {
            l2: 1e-3,
            iterations: 300,
        }
    }
}

/// Multinomial logistic regression. `weights` is `n_classes x input_dim`,
/// row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxRegression {
    labels: Vec<String>,
    input_dim: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl SoftmaxRegression {
    pub fn from_parts(labels: Vec<String>, input_dim: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self> {
        if labels.is_empty() || bias.len() != labels.len() || weights.len() != labels.len() * input_dim {
            return Err(Error::InvalidParams(format!(
                "softmax model with {} labels, {} biases and {} weights for input size {input_dim}",
                labels.len(),
                bias.len(),
                weights.len()
            )));
        }
        Ok(Self {
            labels,
            input_dim,
            weights,
            bias,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.labels.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    /// Trains on the first `active_dim` features of each row; weights on the
    /// remaining features are zero.
    ///
    /// Gradient descent on the weights started from zero never leaves the row
    /// space of the centred design, so iterates are kept as `W = Xc^T A` and
    /// only the `n x n` Gram matrix is needed. Steps are Nesterov-accelerated
    /// with step `1/L` for the exact smoothness bound `L`.
    pub fn fit(
        rows: &[&[f64]],
        y: &[usize],
        labels: &[String],
        active_dim: usize,
        cfg: &SoftmaxConfig,
    ) -> Result<Self> {
        let n = rows.len();
        let n_classes = labels.len();
        if n == 0 || n_classes == 0 {
            return Err(Error::InsufficientData("no training samples or no classes".into()));
        }
        if y.len() != n {
            return Err(Error::DimensionMismatch {
                got: y.len(),
                expected: n,
            });
        }
        if let Some(&bad) = y.iter().find(|&&c| c >= n_classes) {
            return Err(Error::InvalidParams(format!("class index {bad} out of range")));
        }
        let input_dim = rows[0].len();
        if let Some(r) = rows.iter().find(|r| r.len() != input_dim) {
            return Err(Error::DimensionMismatch {
                got: r.len(),
                expected: input_dim,
            });
        }
        if active_dim > input_dim {
            return Err(Error::DimensionMismatch {
                got: active_dim,
                expected: input_dim,
            });
        }
        if !(cfg.l2 >= 0.0) || !cfg.l2.is_finite() {
            return Err(Error::InvalidParams(format!("l2 must be non-negative, got {}", cfg.l2)));
        }

        let nf = n as f64;
        let mut mean = vec![0.0; active_dim];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(&r[..active_dim]) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= nf);
        let xc = DMatrix::from_fn(n, active_dim, |i, j| rows[i][j] - mean[j]);
        let gram = &xc * xc.transpose();

        let lambda = top_eigenvalue(&gram) / nf;
        let l2 = cfg.l2 * lambda;
        // The bias enters through a constant feature of magnitude `c`, which
        // leaves the smoothness bound at that of the centred features.
        let (c, smooth) = if lambda > 0.0 { (lambda.sqrt(), lambda) } else { (1.0, 1.0) };
        let step = 1.0 / (0.5 * smooth + l2);

        let mut onehot = DMatrix::zeros(n, n_classes);
        for (i, &k) in y.iter().enumerate() {
            onehot[(i, k)] = 1.0;
        }

        let mut a = DMatrix::<f64>::zeros(n, n_classes);
        let mut beta = vec![0.0; n_classes];
        let mut a_prev = a.clone();
        let mut beta_prev = beta.clone();
        for it in 0..cfg.iterations {
            let momentum = it as f64 / (it as f64 + 3.0);
            let a_look = &a + (&a - &a_prev) * momentum;
            let beta_look: Vec<f64> = beta
                .iter()
                .zip(&beta_prev)
                .map(|(b, p)| b + momentum * (b - p))
                .collect();

            let mut resid = &gram * &a_look;
            for i in 0..n {
                let mut row: Vec<f64> = (0..n_classes).map(|k| resid[(i, k)] + c * beta_look[k]).collect();
                softmax_in_place(&mut row);
                for k in 0..n_classes {
                    resid[(i, k)] = (row[k] - onehot[(i, k)]) / nf;
                }
            }
            let grad_beta: Vec<f64> = (0..n_classes).map(|k| c * resid.column(k).sum()).collect();
            let grad_a = resid + &a_look * l2;

            a_prev = std::mem::replace(&mut a, a_look - grad_a * step);
            beta_prev = std::mem::replace(
                &mut beta,
                beta_look
                    .iter()
                    .zip(&grad_beta)
                    .map(|(b, g)| b - step * g)
                    .collect(),
            );
        }

        let w = xc.transpose() * &a;
        let mut weights = vec![0.0; n_classes * input_dim];
        let mut bias = vec![0.0; n_classes];
        for k in 0..n_classes {
            let mut shift = 0.0;
            for j in 0..active_dim {
                weights[k * input_dim + j] = w[(j, k)];
                shift += mean[j] * w[(j, k)];
            }
            bias[k] = c * beta[k] - shift;
        }
        Self::from_parts(labels.to_vec(), input_dim, weights, bias)
    }
}

impl ProbClassifier for SoftmaxRegression {
    fn class_labels(&self) -> &[String] {
        &self.labels
    }

    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() > self.input_dim {
            return Err(Error::DimensionMismatch {
                got: x.len(),
                expected: self.input_dim,
            });
        }
        let mut logits: Vec<f64> = self
            .bias
            .iter()
            .enumerate()
            .map(|(k, b)| {
                let row = &self.weights[k * self.input_dim..k * self.input_dim + x.len()];
                b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect();
        softmax_in_place(&mut logits);
        Ok(logits)
    }
}

fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in z.iter_mut() {
        *v /= total;
    }
}

/// Upper estimate of the largest eigenvalue of a symmetric positive
/// semi-definite matrix: power iteration inflated by 10%, never above the
/// trace.
fn top_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let n = m.nrows();
    let trace = m.trace();
    if n == 0 || trace <= 0.0 {
        return 0.0;
    }
    let mut v = nalgebra::DVector::from_fn(n, |i, _| 1.0 + 0.1 * (i % 7) as f64 + 0.01 * (i % 3) as f64);
    let mut estimate = 0.0;
    for _ in 0..60 {
        let next = m * &v;
        let norm = next.norm();
        if norm == 0.0 {
            break;
        }
        estimate = norm / v.norm();
        v = next / norm;
    }
    (estimate * 1.1).min(trace)
}

/// Fold number of every sample. Within each class the samples are shuffled
/// with `seed` and dealt round-robin, starting where the previous class
/// stopped.
pub fn stratified_folds(y: &[usize], k_folds: usize, seed: u64) -> Result<Vec<usize>> {
    if k_folds < 2 {
        return Err(Error::InvalidParams(format!("need at least 2 folds, got {k_folds}")));
    }
    let n_classes = y.iter().max().map_or(0, |m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); n_classes];
    for (i, &c) in y.iter().enumerate() {
        by_class[c].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![0; y.len()];
    let mut next = 0;
    for (c, members) in by_class.iter_mut().enumerate() {
        if members.is_empty() {
            continue;
        }
        if members.len() < k_folds {
            return Err(Error::InsufficientData(format!(
                "class {c} has {} samples, fewer than {k_folds} folds",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for &i in members.iter() {
            folds[i] = next % k_folds;
            next += 1;
        }
    }
    Ok(folds)
}

/// Accuracy of every class that occurs in `truth` (None otherwise) and their
/// mean.
pub fn per_class_accuracy(truth: &[usize], predicted: &[usize], n_classes: usize) -> (f64, Vec<Option<f64>>) {
    let mut hits = vec![0usize; n_classes];
    let mut totals = vec![0usize; n_classes];
    for (&t, &p) in truth.iter().zip(predicted) {
        totals[t] += 1;
        if t == p {
            hits[t] += 1;
        }
    }
    let per: Vec<Option<f64>> = hits
        .iter()
        .zip(&totals)
        .map(|(&h, &t)| (t > 0).then(|| h as f64 / t as f64))
        .collect();
    let present: Vec<f64> = per.iter().flatten().copied().collect();
    let mean = if present.is_empty() {
        0.0
    } else {
        present.iter().sum::<f64>() / present.len() as f64
    };
    (mean, per)
}

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossValReport {
    pub k_folds: usize,
    pub seed: u64,
    pub class_labels: Vec<String>,
    /// Mean per-class accuracy of each fold.
    pub fold_accuracy: Vec<f64>,
    /// Accuracy of each class averaged over the folds that contain it.
    pub per_class: Vec<f64>,
    pub mean: f64,
    pub std: f64,
}

impl CrossValReport {
    pub fn to_text(&self) -> String {
        let mut out = format!(
            "{}-fold accuracy {:.2} +/- {:.2} %\n",
            self.k_folds,
            100.0 * self.mean,
            100.0 * self.std
        );
        for (label, acc) in self.class_labels.iter().zip(&self.per_class) {
            out.push_str(&format!("  {label:<16} {:.2} %\n", 100.0 * acc));
        }
        out
    }
}

/// Runs `eval(train, test)` on each stratified fold. `eval` returns the
/// predicted class of every test index, in order.
pub fn crossval<F>(y: &[usize], class_labels: &[String], k_folds: usize, seed: u64, mut eval: F) -> Result<CrossValReport>
where
    F: FnMut(&[usize], &[usize]) -> Result<Vec<usize>>,
{
    let n_classes = class_labels.len();
    if y.iter().any(|&c| c >= n_classes) {
        return Err(Error::InvalidParams("class index out of range".into()));
    }
    let folds = stratified_folds(y, k_folds, seed)?;
    let mut fold_accuracy = Vec::with_capacity(k_folds);
    let mut class_sums = vec![0.0; n_classes];
    let mut class_counts = vec![0usize; n_classes];
    for f in 0..k_folds {
        let train: Vec<usize> = (0..y.len()).filter(|&i| folds[i] != f).collect();
        let test: Vec<usize> = (0..y.len()).filter(|&i| folds[i] == f).collect();
        let predicted = eval(&train, &test)?;
        if predicted.len() != test.len() {
            return Err(Error::DimensionMismatch {
                got: predicted.len(),
                expected: test.len(),
            });
        }
        let truth: Vec<usize> = test.iter().map(|&i| y[i]).collect();
        let (mean, per) = per_class_accuracy(&truth, &predicted, n_classes);
        fold_accuracy.push(mean);
        for (k, acc) in per.iter().enumerate() {
            if let Some(a) = acc {
                class_sums[k] += a;
                class_counts[k] += 1;
            }
        }
    }
    let per_class = class_sums
        .iter()
        .zip(&class_counts)
        .map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect();
    let (mean, std) = mean_std(&fold_accuracy);
    Ok(CrossValReport {
        k_folds,
        seed,
        class_labels: class_labels.to_vec(),
        fold_accuracy,
        per_class,
        mean,
        std,
    })
}

/// Cross-validates a softmax model trained on all features.
pub fn crossval_softmax(
    rows: &[&[f64]],
    y: &[usize],
    class_labels: &[String],
    k_folds: usize,
    seed: u64,
    cfg: &SoftmaxConfig,
) -> Result<CrossValReport> {
    let dim = rows.first().map_or(0, |r| r.len());
    crossval(y, class_labels, k_folds, seed, |train, test| {
        let tr_rows: Vec<&[f64]> = train.iter().map(|&i| rows[i]).collect();
        let tr_y: Vec<usize> = train.iter().map(|&i| y[i]).collect();
        let model = SoftmaxRegression::fit(&tr_rows, &tr_y, class_labels, dim, cfg)?;
        test.iter().map(|&i| model.predict(rows[i])).collect()
    })
}
