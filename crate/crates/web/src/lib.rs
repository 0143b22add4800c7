//! Browser bindings for the 2-D synthetic demo.
//!
//! Three operations are exported: sampling a dataset, training a model while
//! recording the codebook after every epoch, and comparing the chi-squared
//! feature map against the exact kernel. Arrays cross the boundary flattened.

use featagg::classifier::{chi2_map, FeatureMapConfig};
use featagg::data::split;
use featagg::data::synthetic::{generate, SyntheticConfig, SyntheticKind};
use featagg::encoders::encode_t1;
use featagg::trainer::{evaluate, Trainer};
use featagg::{AggregatorParams, EncoderKind, FeatureBag, InitMode, TrainingConfig};
use wasm_bindgen::prelude::*;

const BAGS_PER_CLASS: usize = 60;
const FEATURES_PER_BAG: usize = 30;

fn dataset(name: &str, noise: f64, seed: u64) -> featagg::Result<Vec<FeatureBag>> {
    let cfg = SyntheticConfig {
        dataset: name.parse::<SyntheticKind>()?,
        bags_per_class: BAGS_PER_CLASS,
        features_per_bag: FEATURES_PER_BAG,
        noise,
        seed,
    };
    cfg.validate()?;
    Ok(generate(&cfg).bags)
}

/// `[x, y, label]` for every descriptor of every bag.
pub fn points(name: &str, noise: f64, seed: u64) -> featagg::Result<Vec<f64>> {
    let mut out = Vec::new();
    for bag in dataset(name, noise, seed)? {
        for r in bag.descriptors.iter_rows() {
            out.extend_from_slice(&[r[0], r[1], bag.label as f64]);
        }
    }
    Ok(out)
}

#[wasm_bindgen]
pub struct DemoRun {
    k: usize,
    codebooks: Vec<f64>,
    train_accuracy: Vec<f64>,
    test_accuracy: Vec<f64>,
    final_test_accuracy: f64,
    params: AggregatorParams,
}

#[wasm_bindgen]
impl DemoRun {
    pub fn k(&self) -> usize {
        self.k
    }

    /// Codebook after each epoch, epoch 0 first: `epochs + 1` blocks of `K * 2`.
    pub fn codebooks(&self) -> Vec<f64> {
        self.codebooks.clone()
    }

    pub fn train_accuracy(&self) -> Vec<f64> {
        self.train_accuracy.clone()
    }

    pub fn test_accuracy(&self) -> Vec<f64> {
        self.test_accuracy.clone()
    }

    /// Test accuracy after classifier fine-tuning.
    pub fn final_test_accuracy(&self) -> f64 {
        self.final_test_accuracy
    }

    /// Dominant codeword and its responsibility at each cell of a
    /// `resolution x resolution` grid over `[x0, x1] x [y0, y1]`, row-major
    /// from the top: `[k, weight]` pairs.
    pub fn responsibility_field(&self, x0: f64, x1: f64, y0: f64, y1: f64, resolution: usize) -> Vec<f64> {
        let mut out = Vec::with_capacity(resolution * resolution * 2);
        let step = |lo: f64, hi: f64, i: usize| lo + (hi - lo) * (i as f64 + 0.5) / resolution as f64;
        for row in 0..resolution {
            let y = step(y1, y0, row);
            for col in 0..resolution {
                let x = step(x0, x1, col);
                let w = encode_t1(&[x, y], &self.params).map(|e| e.values).unwrap_or_default();
                let (best, weight) =
                    w.iter().enumerate().fold(
                        (0, f64::NEG_INFINITY),
                        |acc, (k, &v)| if v > acc.1 { (k, v) } else { acc },
                    );
                out.extend_from_slice(&[best as f64, weight]);
            }
        }
        out
    }
}

/// Trains on a 60/40 split of a fresh dataset.
pub fn run(
    name: &str,
    k: usize,
    gamma: f64,
    init: &str,
    epochs: usize,
    noise: f64,
    seed: u64,
) -> featagg::Result<DemoRun> {
    let bags = dataset(name, noise, seed)?;
    let container = featagg::data::BagContainer::new(2, 2, bags)?;
    let (train, test) = split(&container, 0.6, seed, true)?;
    let config = TrainingConfig {
        k,
        gamma,
        init_mode: init.parse::<InitMode>()?,
        epochs,
        seed,
        ..TrainingConfig::for_kind(EncoderKind::T1)
    };
    let mut trainer = Trainer::new(&train.bags, Some(&test.bags), config)?;
    let mut codebooks = trainer.params().codebook.centers.as_slice().to_vec();
    for _ in 0..epochs {
        trainer.run_epoch()?;
        codebooks.extend_from_slice(trainer.params().codebook.centers.as_slice());
    }
    let train_accuracy = trainer.metrics().iter().map(|m| m.train_accuracy).collect();
    let test_accuracy = trainer
        .metrics()
        .iter()
        .map(|m| m.test_accuracy.unwrap_or(0.0))
        .collect();
    let model = trainer.finish()?;
    Ok(DemoRun {
        k,
        codebooks,
        train_accuracy,
        test_accuracy,
        final_test_accuracy: evaluate(&model, &test.bags)?,
        params: AggregatorParams::new(
            EncoderKind::T1,
            model.params.codebook.centers.clone(),
            model.params.precisions.log_precisions.clone(),
            model.params.gamma,
        )?,
    })
}

/// `[x, exact, approximate]` triples of the chi-squared kernel `k(x, y)` for
/// `samples` values of x in (0, 1].
pub fn chi2_curve(y: f64, order: usize, period: f64, samples: usize) -> featagg::Result<Vec<f64>> {
    let cfg = FeatureMapConfig {
        order,
        period,
        ..FeatureMapConfig::default()
    };
    cfg.validate()?;
    let py = chi2_map(&[y], &cfg)?;
    let mut out = Vec::with_capacity(samples * 3);
    for i in 1..=samples {
        let x = i as f64 / samples as f64;
        let px = chi2_map(&[x], &cfg)?;
        let approx: f64 = px.iter().zip(&py).map(|(a, b)| a * b).sum();
        let exact = if x + y > 0.0 { 2.0 * x * y / (x + y) } else { 0.0 };
        out.extend_from_slice(&[x, exact, approx]);
    }
    Ok(out)
}

fn js(e: featagg::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen(js_name = datasetPoints)]
pub fn dataset_points(name: &str, noise: f64, seed: u32) -> Result<Vec<f64>, JsError> {
    points(name, noise, seed as u64).map_err(js)
}

#[wasm_bindgen(js_name = trainDemo)]
pub fn train_demo(
    name: &str,
    k: usize,
    gamma: f64,
    init: &str,
    epochs: usize,
    noise: f64,
    seed: u32,
) -> Result<DemoRun, JsError> {
    run(name, k, gamma, init, epochs, noise, seed as u64).map_err(js)
}

#[wasm_bindgen(js_name = chi2Curve)]
pub fn chi2_curve_js(y: f64, order: usize, period: f64, samples: usize) -> Result<Vec<f64>, JsError> {
    chi2_curve(y, order, period, samples).map_err(js)
}
