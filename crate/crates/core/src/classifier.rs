//! Multiclass logistic regression and the explicit chi-squared feature map.

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::linalg::{dot, log_sum_exp, softmax_in_place, Matrix};
use crate::rng::{self, Stream};

/// Per-class weights `W` (`M x D_in`) and biases.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierParams {
    pub weights: Matrix,
    pub biases: Vec<f64>,
}

impl ClassifierParams {
    pub fn zeros(classes: usize, input_dim: usize) -> Self {
        Self {
            weights: Matrix::zeros(classes, input_dim),
            biases: vec![0.0; classes],
        }
    }

    pub fn num_classes(&self) -> usize {
        self.biases.len()
    }

    pub fn input_dim(&self) -> usize {
        self.weights.cols()
    }

    fn check(&self, x: &[f64], y: Option<usize>) -> Result<()> {
        if self.weights.rows() != self.biases.len() {
            return Err(Error::Shape(format!(
                "{} weight rows but {} biases",
                self.weights.rows(),
                self.biases.len()
            )));
        }
        if x.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "classifier input has length {}, expected {}",
                x.len(),
                self.input_dim()
            )));
        }
        if let Some(y) = y {
            if y >= self.num_classes() {
                return Err(Error::InvalidArgument(format!(
                    "label {y} out of range for {} classes",
                    self.num_classes()
                )));
            }
        }
        Ok(())
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x, None)?;
        Ok(self.logits_unchecked(x))
    }

    fn logits_unchecked(&self, x: &[f64]) -> Vec<f64> {
        self.weights
            .iter_rows()
            .zip(&self.biases)
            .map(|(w, b)| dot(w, x) + b)
            .collect()
    }

    /// Class posterior `softmax(Wx + b)`.
    pub fn posterior(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut z = self.logits(x)?;
        softmax_in_place(&mut z);
        Ok(z)
    }

    /// Arg-max class, ties resolved toward the lowest index.
    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        let z = self.logits(x)?;
        Ok(argmax(&z))
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate().skip(1) {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Parameters of the chi-squared homogeneous kernel map.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureMapConfig {
    /// Number of frequency pairs `n`; each input coordinate maps to `2n + 1` outputs.
    pub order: usize,
    /// Sampling period `L` of the kernel spectrum.
    pub period: f64,
    /// Inputs are clamped at this value before the logarithm.
    pub floor: f64,
}

impl Default for FeatureMapConfig {
    fn default() -> Self {
        Self {
            order: 2,
            period: 0.5,
            floor: 1e-10,
        }
    }
}

impl FeatureMapConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "map period must be positive, got {}",
                self.period
            )));
        }
        if !(self.floor > 0.0 && self.floor.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "map floor must be positive, got {}",
                self.floor
            )));
        }
        Ok(())
    }

    pub fn output_len(&self, input_len: usize) -> usize {
        (2 * self.order + 1) * input_len
    }

    /// `sqrt(2 L kappa(jL))` for `j = 0..=n`, with the `j = 0` term lacking the 2.
    fn amplitudes(&self) -> Vec<f64> {
        (0..=self.order)
            .map(|j| {
                let w = j as f64 * self.period;
                let kappa = 1.0 / (std::f64::consts::PI * w).cosh();
                let mult = if j == 0 { 1.0 } else { 2.0 };
                (mult * self.period * kappa).sqrt()
            })
            .collect()
    }
}

fn check_nonnegative(x: &[f64]) -> Result<()> {
    for (index, &value) in x.iter().enumerate() {
        if !value.is_finite() {
            return Err(Error::NonFinite(format!("chi-squared map input at index {index}")));
        }
        if value < 0.0 {
            return Err(Error::NegativeInput { index, value });
        }
    }
    Ok(())
}

/// Explicit feature map whose inner products approximate `2xy / (x + y)`.
/// Coordinate `i` expands to `[psi_0, cos_1, sin_1, ..., cos_n, sin_n]` at
/// offset `i * (2n + 1)`.
pub fn chi2_map(x: &[f64], cfg: &FeatureMapConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    check_nonnegative(x)?;
    let amps = cfg.amplitudes();
    let mut out = Vec::with_capacity(cfg.output_len(x.len()));
    for &xi in x {
        let xt = xi.max(cfg.floor);
        let root = xt.sqrt();
        let lx = xt.ln();
        out.push(amps[0] * root);
        for (j, amp) in amps.iter().enumerate().skip(1) {
            let phase = j as f64 * cfg.period * lx;
            out.push(amp * root * phase.cos());
            out.push(amp * root * phase.sin());
        }
    }
    Ok(out)
}

/// Jacobian-transpose product of [`chi2_map`]. Coordinates at or below the
/// floor are constant in `x` and receive zero.
pub fn chi2_map_backward(x: &[f64], cfg: &FeatureMapConfig, upstream: &[f64]) -> Result<Vec<f64>> {
    cfg.validate()?;
    check_nonnegative(x)?;
    let width = 2 * cfg.order + 1;
    if upstream.len() != width * x.len() {
        return Err(Error::Shape(format!(
            "upstream has length {}, map output has {}",
            upstream.len(),
            width * x.len()
        )));
    }
    let amps = cfg.amplitudes();
    let mut out = vec![0.0; x.len()];
    for (i, &xi) in x.iter().enumerate() {
        if xi <= cfg.floor {
            continue;
        }
        let u = &upstream[i * width..(i + 1) * width];
        let root = xi.sqrt();
        let lx = xi.ln();
        // d/dx [a sqrt(x)] = a sqrt(x) / 2x
        let mut g = u[0] * amps[0] * root / (2.0 * xi);
        for (j, amp) in amps.iter().enumerate().skip(1) {
            let freq = j as f64 * cfg.period;
            let (s, c) = (freq * lx).sin_cos();
            let a = amp * root;
            let d_cos = a * (c / (2.0 * xi) - s * freq / xi);
            let d_sin = a * (s / (2.0 * xi) + c * freq / xi);
            g += u[2 * j - 1] * d_cos + u[2 * j] * d_sin;
        }
        out[i] = g;
    }
    Ok(out)
}

/// `-log softmax_y(Wx + b)`.
pub fn softmax_ce(x: &[f64], y: usize, params: &ClassifierParams) -> Result<f64> {
    params.check(x, Some(y))?;
    let z = params.logits_unchecked(x);
    Ok(log_sum_exp(&z) - z[y])
}

#[derive(Clone, Debug, PartialEq)]
pub struct CeGradients {
    pub loss: f64,
    pub d_weights: Matrix,
    pub d_biases: Vec<f64>,
    /// Gradient with respect to the classifier input.
    pub d_input: Vec<f64>,
}

pub fn softmax_ce_backward(x: &[f64], y: usize, params: &ClassifierParams) -> Result<CeGradients> {
    params.check(x, Some(y))?;
    let z = params.logits_unchecked(x);
    let loss = log_sum_exp(&z) - z[y];
    let mut p = z;
    softmax_in_place(&mut p);
    p[y] -= 1.0;
    let delta = p;

    let mut d_weights = Matrix::zeros(params.num_classes(), x.len());
    let mut d_input = vec![0.0; x.len()];
    for (m, &dm) in delta.iter().enumerate() {
        for ((dw, &xi), (dx, &w)) in d_weights
            .row_mut(m)
            .iter_mut()
            .zip(x)
            .zip(d_input.iter_mut().zip(params.weights.row(m)))
        {
            *dw = dm * xi;
            *dx += w * dm;
        }
    }
    Ok(CeGradients {
        loss,
        d_weights,
        d_biases: delta,
        d_input,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitOptions {
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct FitReport {
    pub params: ClassifierParams,
    /// Mean loss over the full dataset after each epoch.
    pub loss: Vec<f64>,
}

/// Mean cross-entropy over the rows of `design`.
pub fn mean_loss(design: &Matrix, labels: &[usize], params: &ClassifierParams) -> Result<f64> {
    let mut total = 0.0;
    for (x, &y) in design.iter_rows().zip(labels) {
        total += softmax_ce(x, y, params)?;
    }
    Ok(total / design.rows() as f64)
}

/// Minibatch SGD on the mean cross-entropy. Starts from `warm_start` or from
/// zero; stops after `epochs` or once an epoch improves the mean loss by less
/// than `1e-7`.
pub fn fit_classifier(
    design: &Matrix,
    labels: &[usize],
    classes: usize,
    opts: &FitOptions,
    warm_start: Option<ClassifierParams>,
) -> Result<FitReport> {
    const MIN_IMPROVEMENT: f64 = 1e-7;
    let n = design.rows();
    if n == 0 {
        return Err(Error::Empty("classifier training set".into()));
    }
    if labels.len() != n {
        return Err(Error::Shape(format!("{n} rows but {} labels", labels.len())));
    }
    if opts.batch == 0 {
        return Err(Error::InvalidArgument("batch size must be at least 1".into()));
    }
    if opts.lr.is_nan() || opts.lr <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "learning rate must be positive, got {}",
            opts.lr
        )));
    }
    let mut params = match warm_start {
        Some(p) => {
            if p.num_classes() != classes || p.input_dim() != design.cols() {
                return Err(Error::Shape(
                    "warm-start classifier does not match the design matrix".into(),
                ));
            }
            p
        }
        None => ClassifierParams::zeros(classes, design.cols()),
    };
    if opts.epochs == 0 {
        return Ok(FitReport {
            params,
            loss: Vec::new(),
        });
    }

    let mut rng = rng::stream(opts.seed, Stream::Classifier);
    let mut order: Vec<usize> = (0..n).collect();
    let mut history = Vec::with_capacity(opts.epochs);
    let mut previous = mean_loss(design, labels, &params)?;
    let mut grad_w = Matrix::zeros(classes, design.cols());
    let mut grad_b = vec![0.0; classes];
    for _ in 0..opts.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(opts.batch) {
            grad_w.scale(0.0);
            grad_b.iter_mut().for_each(|g| *g = 0.0);
            for &i in batch {
                let g = softmax_ce_backward(design.row(i), labels[i], &params)?;
                grad_w.add_scaled(1.0, &g.d_weights);
                for (a, b) in grad_b.iter_mut().zip(&g.d_biases) {
                    *a += b;
                }
            }
            let step = opts.lr / batch.len() as f64;
            params.weights.add_scaled(-step, &grad_w);
            for (b, g) in params.biases.iter_mut().zip(&grad_b) {
                *b -= step * g;
            }
        }
        let current = mean_loss(design, labels, &params)?;
        if !current.is_finite() {
            return Err(Error::Diverged(format!(
                "classifier loss became {current} at learning rate {}",
                opts.lr
            )));
        }
        history.push(current);
        if previous - current < MIN_IMPROVEMENT {
            break;
        }
        previous = current;
    }
    Ok(FitReport { params, loss: history })
}
