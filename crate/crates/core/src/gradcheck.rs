//! Finite-difference check of the full training objective.
//!
//! Each trial builds a small random instance (D <= 5, K <= 4, N_F <= 6,
//! 2 to 4 classes) and compares the analytic gradients of
//! `cross_entropy(W map(aggregate(bag)) + b)` against central differences.
//! Errors are reported per parameter group as
//! `||analytic - numeric|| / max(||analytic||, ||numeric||)`, falling back to
//! the absolute difference when both norms are below `1e-10`.

use rand::Rng as _;

use crate::classifier::{
    chi2_map, chi2_map_backward, softmax_ce, softmax_ce_backward, ClassifierParams, FeatureMapConfig,
};
use crate::encoders::{aggregate, AggregatorParams, EncoderKind, FeatureBag};
use crate::error::{Error, Result};
use crate::gradients::{backward_aggregate, Subsample};
use crate::linalg::Matrix;
use crate::rng::{self, Rng, Stream};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradcheckOptions {
    pub kind: EncoderKind,
    pub trials: usize,
    pub seed: u64,
    pub use_chi2_map: bool,
    pub step: f64,
    /// Multiplies the analytic codebook gradient by `1 + perturb`. Zero in
    /// normal use; non-zero values exercise the harness itself.
    pub perturb: f64,
}

impl Default for GradcheckOptions {
    fn default() -> Self {
        Self {
            kind: EncoderKind::T1,
            trials: 100,
            seed: 0,
            use_chi2_map: true,
            step: 1e-6,
            perturb: 0.0,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct GradcheckReport {
    pub trials: usize,
    pub codebook: f64,
    pub log_precisions: f64,
    pub weights: f64,
    /// Gradient with respect to the aggregated representation (the map input).
    pub input: f64,
}

impl GradcheckReport {
    pub fn max_error(&self) -> f64 {
        self.codebook.max(self.log_precisions).max(self.weights).max(self.input)
    }
}

pub fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: f64 = analytic
        .iter()
        .zip(numeric)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let scale = norm(analytic).max(norm(numeric));
    if scale < 1e-10 {
        diff
    } else {
        diff / scale
    }
}

struct Instance {
    bag: FeatureBag,
    params: AggregatorParams,
    classifier: ClassifierParams,
    map: Option<FeatureMapConfig>,
}

impl Instance {
    fn random(rng: &mut Rng, kind: EncoderKind, map: Option<FeatureMapConfig>) -> Self {
        let d = rng.random_range(1..=5);
        let k = rng.random_range(1..=4);
        let n = rng.random_range(1..=6);
        let m = rng.random_range(2..=4);
        let mut uniform =
            |count: usize, lo: f64, hi: f64| -> Vec<f64> { (0..count).map(|_| rng.random_range(lo..hi)).collect() };
        let feats = Matrix::from_vec(n, d, uniform(n * d, -0.5, 0.5)).unwrap();
        let centers = Matrix::from_vec(k, d, uniform(k * d, -0.5, 0.5)).unwrap();
        let lp = Matrix::from_vec(k, d, uniform(k * d, -0.5, 0.5)).unwrap();
        let gamma = uniform(1, 0.2, 1.0)[0];
        let params = AggregatorParams::new(kind, centers, lp, gamma).unwrap();
        let r_len = params.output_len();
        let d_in = map.map_or(r_len, |c| c.output_len(r_len));
        let classifier = ClassifierParams {
            weights: Matrix::from_vec(m, d_in, uniform(m * d_in, -1.0, 1.0)).unwrap(),
            biases: uniform(m, -0.5, 0.5),
        };
        let label = (uniform(1, 0.0, m as f64)[0] as usize).min(m - 1);
        Self {
            bag: FeatureBag::new("gradcheck", label, feats).unwrap(),
            params,
            classifier,
            map,
        }
    }

    fn loss_from_input(&self, r: &[f64]) -> f64 {
        let x = match &self.map {
            Some(cfg) => chi2_map(r, cfg).unwrap(),
            None => r.to_vec(),
        };
        softmax_ce(&x, self.bag.label, &self.classifier).unwrap()
    }

    fn loss(&self, params: &AggregatorParams, classifier: &ClassifierParams) -> f64 {
        let r = aggregate(&self.bag, params).unwrap().into_vec();
        let x = match &self.map {
            Some(cfg) => chi2_map(&r, cfg).unwrap(),
            None => r,
        };
        softmax_ce(&x, self.bag.label, classifier).unwrap()
    }
}

fn central(step: f64, mut f: impl FnMut(f64) -> f64) -> f64 {
    (f(step) - f(-step)) / (2.0 * step)
}

/// Runs `opts.trials` random instances and reports the worst error per group.
pub fn run(opts: &GradcheckOptions) -> Result<GradcheckReport> {
    if opts.use_chi2_map && !opts.kind.is_simplex() {
        return Err(Error::InvalidArgument(
            "the chi-squared map needs nonnegative input and cannot follow the T2 encoder".into(),
        ));
    }
    let map = opts.use_chi2_map.then(FeatureMapConfig::default);
    let mut rng = rng::stream(opts.seed, Stream::Gradcheck);
    let mut report = GradcheckReport {
        trials: opts.trials,
        ..Default::default()
    };
    let h = opts.step;

    for _ in 0..opts.trials {
        let inst = Instance::random(&mut rng, opts.kind, map);

        // analytic
        let r = aggregate(&inst.bag, &inst.params)?.into_vec();
        let x = match &inst.map {
            Some(cfg) => chi2_map(&r, cfg)?,
            None => r.clone(),
        };
        let ce = softmax_ce_backward(&x, inst.bag.label, &inst.classifier)?;
        let d_r = match &inst.map {
            Some(cfg) => chi2_map_backward(&r, cfg, &ce.d_input)?,
            None => ce.d_input.clone(),
        };
        let mut theta = backward_aggregate(&inst.bag, &inst.params, &d_r, &Subsample::Full)?;
        theta.d_codebook.scale(1.0 + opts.perturb);

        // numeric
        let (k, d) = (inst.params.num_codewords(), inst.params.dim());
        let mut num_c = vec![0.0; k * d];
        let mut num_p = vec![0.0; k * d];
        for idx in 0..k * d {
            num_c[idx] = central(h, |e| {
                let mut p = inst.params.clone();
                p.codebook.centers.as_mut_slice()[idx] += e;
                inst.loss(&p, &inst.classifier)
            });
            num_p[idx] = central(h, |e| {
                let mut p = inst.params.clone();
                p.precisions.log_precisions.as_mut_slice()[idx] += e;
                inst.loss(&p, &inst.classifier)
            });
        }
        let mut num_w = Vec::new();
        let mut ana_w = ce.d_weights.as_slice().to_vec();
        ana_w.extend_from_slice(&ce.d_biases);
        for idx in 0..inst.classifier.weights.as_slice().len() {
            num_w.push(central(h, |e| {
                let mut c = inst.classifier.clone();
                c.weights.as_mut_slice()[idx] += e;
                inst.loss(&inst.params, &c)
            }));
        }
        for idx in 0..inst.classifier.biases.len() {
            num_w.push(central(h, |e| {
                let mut c = inst.classifier.clone();
                c.biases[idx] += e;
                inst.loss(&inst.params, &c)
            }));
        }
        let num_r: Vec<f64> = (0..r.len())
            .map(|idx| {
                central(h, |e| {
                    let mut v = r.clone();
                    v[idx] += e;
                    inst.loss_from_input(&v)
                })
            })
            .collect();

        report.codebook = report.codebook.max(relative_error(theta.d_codebook.as_slice(), &num_c));
        report.log_precisions = report
            .log_precisions
            .max(relative_error(theta.d_log_precisions.as_slice(), &num_p));
        report.weights = report.weights.max(relative_error(&ana_w, &num_w));
        report.input = report.input.max(relative_error(&d_r, &num_r));
    }
    Ok(report)
}
