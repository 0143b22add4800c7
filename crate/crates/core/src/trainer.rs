//! Joint training of the aggregation parameters and the classifier.
//!
//! Three phases:
//!
//! 1. Initialize the codebook and precisions ([`crate::init`]), encode every
//!    training bag and fit the classifier on the frozen representation.
//! 2. Core loop: each step draws a training bag uniformly at random, draws a
//!    random subset of its descriptors, runs the forward pass
//!    (aggregate, optional chi-squared map, cross-entropy) and updates the
//!    classifier, the codebook and the log-precisions by plain SGD using
//!    gradients evaluated at the same parameter values.
//! 3. Freeze the encoder and fine-tune the classifier on full-bag
//!    representations, warm-started from the core loop's weights.
//!
//! An epoch is `ceil(N / batch)` core steps for `N` training bags.

use std::fmt::Write as _;

use rand::Rng as _;

use crate::classifier::{
    argmax, chi2_map, chi2_map_backward, fit_classifier, softmax_ce, softmax_ce_backward, ClassifierParams,
    FeatureMapConfig, FitOptions,
};
use crate::encoders::{aggregate, aggregate_rows, AggregatorParams, EncoderKind, FeatureBag};
use crate::error::{Error, Result};
use crate::gradients::{backward_rows, default_sample_size, sample_indices, ParamGradients};
use crate::init::{init_params, InitMode, InitOptions, DEFAULT_POOL_CAP};
use crate::linalg::Matrix;
use crate::rng::{self, Rng, Stream};

/// Abort once the epoch loss exceeds this multiple of its reference value.
const DIVERGENCE_FACTOR: f64 = 10.0;

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingConfig {
    pub kind: EncoderKind,
    pub k: usize,
    pub gamma: f64,
    pub init_mode: InitMode,
    pub lr_w: f64,
    pub lr_c: f64,
    pub lr_sigma: f64,
    /// Bags per core-loop step.
    pub batch_size: usize,
    /// Core-loop epochs.
    pub epochs: usize,
    /// Descriptors sampled per bag and step; `None` means `min(N_F, 1024)`.
    pub subsample: Option<usize>,
    pub sample_with_replacement: bool,
    pub use_chi2_map: bool,
    pub feature_map: FeatureMapConfig,
    pub init_classifier_epochs: usize,
    pub finetune_epochs: usize,
    pub pool_cap: usize,
    pub cluster_iters: usize,
    pub variance_floor: f64,
    pub seed: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            kind: EncoderKind::T1,
            k: 2,
            gamma: 1.0,
            init_mode: InitMode::KMeans,
            lr_w: 1e-2,
            lr_c: 1e-2,
            lr_sigma: 1e-3,
            batch_size: 1,
            epochs: 30,
            subsample: None,
            sample_with_replacement: false,
            use_chi2_map: true,
            feature_map: FeatureMapConfig::default(),
            init_classifier_epochs: 100,
            finetune_epochs: 100,
            pool_cap: DEFAULT_POOL_CAP,
            cluster_iters: 100,
            variance_floor: 1e-6,
            seed: 0,
        }
    }
}

impl TrainingConfig {
    /// Defaults for `kind`: the chi-squared map is only valid on the
    /// nonnegative bag-of-words/T1 outputs.
    pub fn for_kind(kind: EncoderKind) -> Self {
        Self {
            kind,
            use_chi2_map: kind.is_simplex(),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.k == 0 {
            return bad("K must be at least 1".into());
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return bad(format!("gamma must be positive, got {}", self.gamma));
        }
        for (name, lr) in [("lr_w", self.lr_w), ("lr_c", self.lr_c), ("lr_sigma", self.lr_sigma)] {
            if !(lr >= 0.0 && lr.is_finite()) {
                return bad(format!("{name} must be a nonnegative finite number, got {lr}"));
            }
        }
        if self.lr_w <= 0.0 {
            return bad("lr_w must be positive".into());
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1".into());
        }
        if self.subsample == Some(0) {
            return bad("subsample size must be at least 1".into());
        }
        if self.use_chi2_map && !self.kind.is_simplex() {
            return bad("the chi-squared map needs nonnegative input and cannot follow the T2 encoder".into());
        }
        if self.variance_floor.is_nan() || self.variance_floor <= 0.0 {
            return bad("variance floor must be positive".into());
        }
        self.feature_map.validate()
    }

    fn init_options(&self) -> InitOptions {
        InitOptions {
            mode: self.init_mode,
            k: self.k,
            pool_cap: self.pool_cap,
            kmeans_max_iters: self.cluster_iters,
            gmm_max_iters: self.cluster_iters,
            variance_floor: self.variance_floor,
            seed: self.seed,
            ..InitOptions::default()
        }
    }

    fn map(&self) -> Option<&FeatureMapConfig> {
        self.use_chi2_map.then_some(&self.feature_map)
    }

    fn learns_encoder(&self) -> bool {
        self.kind != EncoderKind::Bow && (self.lr_c > 0.0 || self.lr_sigma > 0.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub test_accuracy: Option<f64>,
}

/// Writes the metrics history as `epoch,train_loss,train_acc,test_acc`.
pub fn metrics_to_csv(metrics: &[EpochMetrics]) -> String {
    let mut out = String::from("epoch,train_loss,train_acc,test_acc\n");
    for m in metrics {
        let test = m.test_accuracy.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{},{}", m.epoch, m.train_loss, m.train_accuracy, test);
    }
    out
}

/// Parses the output of [`metrics_to_csv`].
pub fn metrics_from_csv(text: &str) -> Result<Vec<EpochMetrics>> {
    let mut lines = text.lines();
    match lines.next() {
        Some("epoch,train_loss,train_acc,test_acc") => {}
        other => {
            return Err(Error::InvalidArgument(format!("unexpected metrics header {other:?}")));
        }
    }
    let num = |s: &str, line: usize| {
        s.parse::<f64>()
            .map_err(|_| Error::InvalidArgument(format!("line {line}: bad number `{s}`")))
    };
    let mut out = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.is_empty()) {
        let lineno = i + 2;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 4 {
            return Err(Error::InvalidArgument(format!("line {lineno}: expected 4 fields")));
        }
        out.push(EpochMetrics {
            epoch: f[0]
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("line {lineno}: bad epoch `{}`", f[0])))?,
            train_loss: num(f[1], lineno)?,
            train_accuracy: num(f[2], lineno)?,
            test_accuracy: if f[3].is_empty() {
                None
            } else {
                Some(num(f[3], lineno)?)
            },
        });
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub params: AggregatorParams,
    pub classifier: ClassifierParams,
    pub config: TrainingConfig,
    pub metrics: Vec<EpochMetrics>,
}

impl TrainedModel {
    pub fn num_classes(&self) -> usize {
        self.classifier.num_classes()
    }

    /// Classifier input for one bag (full bag, no subsampling).
    pub fn represent(&self, bag: &FeatureBag) -> Result<Vec<f64>> {
        represent(bag, &self.params, self.config.map())
    }

    pub fn posterior(&self, bag: &FeatureBag) -> Result<Vec<f64>> {
        self.classifier.posterior(&self.represent(bag)?)
    }

    pub fn predict(&self, bag: &FeatureBag) -> Result<usize> {
        self.classifier.predict(&self.represent(bag)?)
    }

    /// Validates that the stored parts fit together.
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        let expected = match self.config.map() {
            Some(m) => m.output_len(self.params.output_len()),
            None => self.params.output_len(),
        };
        if self.classifier.input_dim() != expected || self.classifier.weights.rows() != self.classifier.biases.len() {
            return Err(Error::Shape(format!(
                "classifier expects {} inputs, encoder produces {expected}",
                self.classifier.input_dim()
            )));
        }
        Ok(())
    }
}

fn represent(bag: &FeatureBag, params: &AggregatorParams, map: Option<&FeatureMapConfig>) -> Result<Vec<f64>> {
    let r = aggregate(bag, params)?.into_vec();
    match map {
        Some(cfg) => chi2_map(&r, cfg),
        None => Ok(r),
    }
}

/// Design matrix of (optionally mapped) bag representations, one row per bag
/// in input order, plus the labels.
pub fn encode_dataset(
    bags: &[FeatureBag],
    params: &AggregatorParams,
    map: Option<&FeatureMapConfig>,
) -> Result<(Matrix, Vec<usize>)> {
    if bags.is_empty() {
        return Err(Error::Empty("no bags to encode".into()));
    }
    let mut rows = Vec::with_capacity(bags.len());
    for bag in bags {
        rows.push(represent(bag, params, map)?);
    }
    let labels = bags.iter().map(|b| b.label).collect();
    Ok((Matrix::from_rows(&rows)?, labels))
}

/// Fraction of bags whose arg-max posterior equals the label.
pub fn evaluate(model: &TrainedModel, bags: &[FeatureBag]) -> Result<f64> {
    evaluate_parts(&model.params, &model.classifier, model.config.map(), bags)
}

fn evaluate_parts(
    params: &AggregatorParams,
    classifier: &ClassifierParams,
    map: Option<&FeatureMapConfig>,
    bags: &[FeatureBag],
) -> Result<f64> {
    if bags.is_empty() {
        return Err(Error::Empty("no bags to evaluate".into()));
    }
    let mut correct = 0usize;
    for bag in bags {
        let x = represent(bag, params, map)?;
        if classifier.predict(&x)? == bag.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / bags.len() as f64)
}

/// Mean loss and accuracy over full-bag representations.
fn loss_and_accuracy(
    params: &AggregatorParams,
    classifier: &ClassifierParams,
    map: Option<&FeatureMapConfig>,
    bags: &[FeatureBag],
) -> Result<(f64, f64)> {
    let mut loss = 0.0;
    let mut correct = 0usize;
    for bag in bags {
        let x = represent(bag, params, map)?;
        let z = classifier.logits(&x)?;
        loss += softmax_ce(&x, bag.label, classifier)?;
        if argmax(&z) == bag.label {
            correct += 1;
        }
    }
    let n = bags.len() as f64;
    Ok((loss / n, correct as f64 / n))
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepReport {
    /// Training bags drawn this step.
    pub samples: Vec<usize>,
    /// Mean loss of the drawn bags before the update.
    pub loss: f64,
}

/// Stateful driver for the three training phases.
pub struct Trainer<'a> {
    config: TrainingConfig,
    train: &'a [FeatureBag],
    test: Option<&'a [FeatureBag]>,
    params: AggregatorParams,
    classifier: ClassifierParams,
    metrics: Vec<EpochMetrics>,
    step_rng: Rng,
    sample_rng: Rng,
    steps: usize,
    reference_loss: f64,
}

impl<'a> Trainer<'a> {
    /// Validates the inputs, initializes the encoder and fits the initial
    /// classifier. Records epoch 0 metrics.
    pub fn new(train: &'a [FeatureBag], test: Option<&'a [FeatureBag]>, config: TrainingConfig) -> Result<Self> {
        config.validate()?;
        let first = train.first().ok_or_else(|| Error::Empty("training set".into()))?;
        let dim = first.dim();
        for bag in train.iter().chain(test.unwrap_or_default()) {
            if bag.dim() != dim {
                return Err(Error::Shape(format!(
                    "bag `{}` has dimension {}, expected {dim}",
                    bag.id,
                    bag.dim()
                )));
            }
        }
        if test.is_some_and(<[FeatureBag]>::is_empty) {
            return Err(Error::Empty("test set".into()));
        }
        let classes = train
            .iter()
            .chain(test.unwrap_or_default())
            .map(|b| b.label)
            .max()
            .unwrap_or(0)
            + 1;
        let mut present = vec![false; classes];
        for b in train {
            present[b.label] = true;
        }
        if present.iter().filter(|&&p| p).count() < 2 {
            return Err(Error::InvalidArgument(
                "training set must contain at least two classes".into(),
            ));
        }

        let params = init_params(train, config.kind, config.gamma, &config.init_options())?;
        let (design, labels) = encode_dataset(train, &params, config.map())?;
        let fit = fit_classifier(
            &design,
            &labels,
            classes,
            &FitOptions {
                lr: config.lr_w,
                epochs: config.init_classifier_epochs,
                batch: config.batch_size,
                seed: config.seed,
            },
            None,
        )?;

        let mut trainer = Self {
            step_rng: rng::stream(config.seed, Stream::Trainer),
            sample_rng: rng::stream(config.seed, Stream::Subsample),
            config,
            train,
            test,
            params,
            classifier: fit.params,
            metrics: Vec::new(),
            steps: 0,
            reference_loss: 0.0,
        };
        let m = trainer.measure(0)?;
        trainer.reference_loss = m.train_loss.max((classes as f64).ln());
        trainer.metrics.push(m);
        Ok(trainer)
    }

    pub fn params(&self) -> &AggregatorParams {
        &self.params
    }

    pub fn classifier(&self) -> &ClassifierParams {
        &self.classifier
    }

    pub fn metrics(&self) -> &[EpochMetrics] {
        &self.metrics
    }

    pub fn config(&self) -> &TrainingConfig {
        &self.config
    }

    pub fn steps_per_epoch(&self) -> usize {
        self.train.len().div_ceil(self.config.batch_size)
    }

    fn measure(&self, epoch: usize) -> Result<EpochMetrics> {
        let map = self.config.map();
        let (train_loss, train_accuracy) = loss_and_accuracy(&self.params, &self.classifier, map, self.train)?;
        let test_accuracy = match self.test {
            Some(t) => Some(evaluate_parts(&self.params, &self.classifier, map, t)?),
            None => None,
        };
        Ok(EpochMetrics {
            epoch,
            train_loss,
            train_accuracy,
            test_accuracy,
        })
    }

    fn diverged(&self, what: String) -> Error {
        Error::Diverged(format!(
            "{what} at core step {} (lr_w = {}, lr_c = {}, lr_sigma = {})",
            self.steps, self.config.lr_w, self.config.lr_c, self.config.lr_sigma
        ))
    }

    /// One SGD step of the core loop.
    pub fn step(&mut self) -> Result<StepReport> {
        let b = self.config.batch_size;
        let n = self.train.len();
        let samples: Vec<usize> = (0..b).map(|_| self.step_rng.random_range(0..n)).collect();
        let learn_encoder = self.config.learns_encoder();
        let map = self.config.map().copied();

        let mut d_w = Matrix::zeros(self.classifier.num_classes(), self.classifier.input_dim());
        let mut d_b = vec![0.0; self.classifier.num_classes()];
        let mut d_theta = ParamGradients::zeros(self.params.num_codewords(), self.params.dim());
        let mut loss = 0.0;

        for &i in &samples {
            let bag = &self.train[i];
            let size = self.config.subsample.unwrap_or_else(|| default_sample_size(bag.len()));
            let indices = if !self.config.sample_with_replacement && size >= bag.len() {
                (0..bag.len()).collect()
            } else {
                sample_indices(
                    &mut self.sample_rng,
                    bag.len(),
                    size,
                    self.config.sample_with_replacement,
                )?
            };
            let r = aggregate_rows(bag, &self.params, &indices)?.into_vec();
            let x = match &map {
                Some(cfg) => chi2_map(&r, cfg)?,
                None => r.clone(),
            };
            let ce = softmax_ce_backward(&x, bag.label, &self.classifier)?;
            if !ce.loss.is_finite() {
                return Err(self.diverged(format!("loss is {} on bag `{}`", ce.loss, bag.id)));
            }
            loss += ce.loss;
            d_w.add_scaled(1.0, &ce.d_weights);
            for (a, g) in d_b.iter_mut().zip(&ce.d_biases) {
                *a += g;
            }
            if learn_encoder {
                let d_r = match &map {
                    Some(cfg) => chi2_map_backward(&r, cfg, &ce.d_input)?,
                    None => ce.d_input,
                };
                let g = backward_rows(bag, &self.params, &d_r, &indices)?;
                d_theta.add_scaled(1.0, &g);
            }
        }

        let inv = 1.0 / b as f64;
        let lr_w = self.config.lr_w * inv;
        self.classifier.weights.add_scaled(-lr_w, &d_w);
        for (bias, g) in self.classifier.biases.iter_mut().zip(&d_b) {
            *bias -= lr_w * g;
        }
        if learn_encoder {
            self.params
                .codebook
                .centers
                .add_scaled(-self.config.lr_c * inv, &d_theta.d_codebook);
            self.params
                .precisions
                .log_precisions
                .add_scaled(-self.config.lr_sigma * inv, &d_theta.d_log_precisions);
        }
        if !(self.params.codebook.centers.is_finite()
            && self.params.precisions.log_precisions.is_finite()
            && self.classifier.weights.is_finite())
        {
            return Err(self.diverged("parameters became non-finite".into()));
        }
        self.steps += 1;
        Ok(StepReport {
            samples,
            loss: loss * inv,
        })
    }

    /// Runs one epoch of core steps and records its metrics.
    pub fn run_epoch(&mut self) -> Result<EpochMetrics> {
        for _ in 0..self.steps_per_epoch() {
            self.step()?;
        }
        let m = self.measure(self.metrics.len())?;
        if !m.train_loss.is_finite() || m.train_loss > DIVERGENCE_FACTOR * self.reference_loss {
            return Err(self.diverged(format!(
                "epoch {} training loss {} exceeds {}x the reference {}",
                m.epoch, m.train_loss, DIVERGENCE_FACTOR, self.reference_loss
            )));
        }
        self.metrics.push(m.clone());
        Ok(m)
    }

    /// Freezes the encoder and fine-tunes the classifier from its current weights.
    pub fn finish(self) -> Result<TrainedModel> {
        let (design, labels) = encode_dataset(self.train, &self.params, self.config.map())?;
        let fit = fit_classifier(
            &design,
            &labels,
            self.classifier.num_classes(),
            &FitOptions {
                lr: self.config.lr_w,
                epochs: self.config.finetune_epochs,
                batch: self.config.batch_size,
                seed: self.config.seed.wrapping_add(1),
            },
            Some(self.classifier),
        )?;
        Ok(TrainedModel {
            params: self.params,
            classifier: fit.params,
            config: self.config,
            metrics: self.metrics,
        })
    }
}

/// Runs all three phases.
pub fn train(train: &[FeatureBag], test: Option<&[FeatureBag]>, config: &TrainingConfig) -> Result<TrainedModel> {
    let mut trainer = Trainer::new(train, test, config.clone())?;
    for _ in 0..config.epochs {
        trainer.run_epoch()?;
    }
    trainer.finish()
}
