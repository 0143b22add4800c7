//! Analytic backward pass through `aggregate(encode(.))`.
//!
//! For one descriptor `f` and upstream gradient `u` (shaped like the
//! encoding), let `a_k` be the log kernel responses, `w = softmax(a)` and
//! `r_k = f - c_k`. The scalar `L = <u, T(f)>` has
//!
//! * T1: `dL/da_k = w_k (u_k - sum_j u_j w_j)`
//! * T2: with `s_k = <u_k, r_k>`, `dL/da_k = w_k (s_k - sum_j w_j s_j)`,
//!   plus the direct residual term `-w_k u_k` on `c_k`.
//!
//! and `da_k/dc_kd = 2 gamma lambda_kd r_kd`,
//! `da_k/dlog(lambda_kd) = -gamma lambda_kd r_kd^2`.
//!
//! Per-descriptor terms are always accumulated in ascending index order so a
//! fixed seed reproduces gradients bit for bit.

use rand::seq::index;
use rand::Rng as _;

use crate::encoders::{responsibilities_into, AggregatorParams, EncoderKind, FeatureBag};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::{self, Rng, Stream};

/// Cap on the default per-step descriptor sample.
pub const DEFAULT_SAMPLE_CAP: usize = 1024;

#[derive(Clone, Debug, PartialEq)]
pub struct ParamGradients {
    pub d_codebook: Matrix,
    pub d_log_precisions: Matrix,
}

impl ParamGradients {
    pub fn zeros(k: usize, d: usize) -> Self {
        Self {
            d_codebook: Matrix::zeros(k, d),
            d_log_precisions: Matrix::zeros(k, d),
        }
    }

    pub fn scale(&mut self, alpha: f64) {
        self.d_codebook.scale(alpha);
        self.d_log_precisions.scale(alpha);
    }

    pub fn add_scaled(&mut self, alpha: f64, other: &ParamGradients) {
        self.d_codebook.add_scaled(alpha, &other.d_codebook);
        self.d_log_precisions.add_scaled(alpha, &other.d_log_precisions);
    }

    pub fn is_finite(&self) -> bool {
        self.d_codebook.is_finite() && self.d_log_precisions.is_finite()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SubsampleSpec {
    pub sample_size: usize,
    pub seed: u64,
    pub replacement: bool,
}

/// Which descriptors of a bag enter a gradient estimate.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Subsample {
    Full,
    Sample(SubsampleSpec),
}

/// `min(n_f, 1024)`.
pub fn default_sample_size(n_f: usize) -> usize {
    n_f.min(DEFAULT_SAMPLE_CAP)
}

/// Draws descriptor indices and sorts them ascending.
pub fn sample_indices(rng: &mut Rng, n_f: usize, size: usize, replacement: bool) -> Result<Vec<usize>> {
    if size == 0 {
        return Err(Error::Empty("descriptor sample of size 0".into()));
    }
    if n_f == 0 {
        return Err(Error::Empty("cannot sample from an empty bag".into()));
    }
    let mut idx = if replacement {
        (0..size).map(|_| rng.random_range(0..n_f)).collect::<Vec<_>>()
    } else {
        if size > n_f {
            return Err(Error::InvalidArgument(format!(
                "sample of {size} descriptors without replacement from a bag of {n_f}"
            )));
        }
        if size == n_f {
            (0..n_f).collect()
        } else {
            index::sample(rng, n_f, size).into_vec()
        }
    };
    idx.sort_unstable();
    Ok(idx)
}

/// Resolves a [`Subsample`] to concrete indices for a bag of `n_f` descriptors.
pub fn select_features(n_f: usize, sub: &Subsample) -> Result<Vec<usize>> {
    match sub {
        Subsample::Full => Ok((0..n_f).collect()),
        Subsample::Sample(spec) => {
            let mut rng = rng::stream(spec.seed, Stream::Subsample);
            sample_indices(&mut rng, n_f, spec.sample_size, spec.replacement)
        }
    }
}

/// Scratch buffers reused across descriptors.
struct Workspace {
    w: Vec<f64>,
    g: Vec<f64>,
}

impl Workspace {
    fn new(k: usize) -> Self {
        Self {
            w: vec![0.0; k],
            g: vec![0.0; k],
        }
    }
}

/// `grads += scale * d<upstream, T(f)>/dtheta`.
fn accumulate_backward(
    f: &[f64],
    params: &AggregatorParams,
    upstream: &[f64],
    scale: f64,
    ws: &mut Workspace,
    grads: &mut ParamGradients,
) {
    let k_total = params.num_codewords();
    let dim = params.dim();
    let gamma = params.gamma;
    let centers = &params.codebook.centers;
    responsibilities_into(f, params, &mut ws.w);

    // dL/da_k
    match params.kind {
        EncoderKind::Bow | EncoderKind::T1 => {
            let mean: f64 = ws.w.iter().zip(upstream).map(|(w, u)| w * u).sum();
            for ((g, w), u) in ws.g.iter_mut().zip(&ws.w).zip(upstream) {
                *g = w * (u - mean);
            }
        }
        EncoderKind::T2 => {
            for k in 0..k_total {
                let c = centers.row(k);
                let u = &upstream[k * dim..(k + 1) * dim];
                ws.g[k] = f.iter().zip(c).zip(u).map(|((fd, cd), ud)| (fd - cd) * ud).sum();
            }
            let mean: f64 = ws.w.iter().zip(&ws.g).map(|(w, s)| w * s).sum();
            for (g, w) in ws.g.iter_mut().zip(&ws.w) {
                *g = w * (*g - mean);
            }
        }
    }

    let learn_precisions = params.kind != EncoderKind::Bow;
    for k in 0..k_total {
        let gk = scale * ws.g[k];
        let c = centers.row(k);
        let dc = grads.d_codebook.row_mut(k);
        for d in 0..dim {
            let r = f[d] - c[d];
            let lam = params.precision(k, d);
            dc[d] += gk * 2.0 * gamma * lam * r;
            if params.kind == EncoderKind::T2 {
                dc[d] -= scale * ws.w[k] * upstream[k * dim + d];
            }
        }
        if learn_precisions {
            let dp = grads.d_log_precisions.row_mut(k);
            for d in 0..dim {
                let r = f[d] - c[d];
                dp[d] -= gk * gamma * params.precision(k, d) * r * r;
            }
        }
    }
}

fn check_upstream(params: &AggregatorParams, upstream: &[f64]) -> Result<()> {
    if upstream.len() != params.output_len() {
        return Err(Error::Shape(format!(
            "upstream gradient has length {}, encoder output has {}",
            upstream.len(),
            params.output_len()
        )));
    }
    if upstream.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("upstream gradient".into()));
    }
    Ok(())
}

/// Gradient of `<upstream, T(f)>` with respect to the codebook and the
/// log-precisions. Bag-of-words returns zero log-precision gradients.
pub fn backward_encode(f: &[f64], params: &AggregatorParams, upstream: &[f64]) -> Result<ParamGradients> {
    params.check_feature(f)?;
    check_upstream(params, upstream)?;
    let mut grads = ParamGradients::zeros(params.num_codewords(), params.dim());
    let mut ws = Workspace::new(params.num_codewords());
    accumulate_backward(f, params, upstream, 1.0, &mut ws, &mut grads);
    Ok(grads)
}

/// Gradient of `<upstream, aggregate_rows(bag, indices)>`: the mean of the
/// per-descriptor gradients over `indices`, summed in the order given.
pub fn backward_rows(
    bag: &FeatureBag,
    params: &AggregatorParams,
    upstream: &[f64],
    indices: &[usize],
) -> Result<ParamGradients> {
    check_upstream(params, upstream)?;
    if bag.dim() != params.dim() {
        return Err(Error::Shape(format!(
            "bag `{}` has dimension {}, codebook has {}",
            bag.id,
            bag.dim(),
            params.dim()
        )));
    }
    if indices.is_empty() {
        return Err(Error::Empty(format!("descriptor sample of bag `{}`", bag.id)));
    }
    if let Some(&bad) = indices.iter().find(|&&i| i >= bag.len()) {
        return Err(Error::InvalidArgument(format!(
            "descriptor index {bad} out of range for bag `{}`",
            bag.id
        )));
    }
    let mut grads = ParamGradients::zeros(params.num_codewords(), params.dim());
    let mut ws = Workspace::new(params.num_codewords());
    let scale = 1.0 / indices.len() as f64;
    for &n in indices {
        accumulate_backward(bag.feature(n), params, upstream, scale, &mut ws, &mut grads);
    }
    Ok(grads)
}

/// Exact (`Subsample::Full`) or subsampled estimate of the bag-level gradient.
pub fn backward_aggregate(
    bag: &FeatureBag,
    params: &AggregatorParams,
    upstream: &[f64],
    sub: &Subsample,
) -> Result<ParamGradients> {
    let indices = select_features(bag.len(), sub)?;
    backward_rows(bag, params, upstream, &indices)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoders::{aggregate_rows, encode};
    use proptest::prelude::*;

    const STEP: f64 = 1e-6;

    fn objective(bag: &FeatureBag, params: &AggregatorParams, upstream: &[f64]) -> f64 {
        let idx: Vec<usize> = (0..bag.len()).collect();
        let r = aggregate_rows(bag, params, &idx).unwrap().values;
        r.iter().zip(upstream).map(|(a, b)| a * b).sum()
    }

    /// Central differences of `objective` over every codebook and
    /// log-precision entry.
    fn numeric(bag: &FeatureBag, params: &AggregatorParams, upstream: &[f64]) -> ParamGradients {
        let (k, d) = (params.num_codewords(), params.dim());
        let mut out = ParamGradients::zeros(k, d);
        for i in 0..k {
            for j in 0..d {
                let mut p = params.clone();
                let base = p.codebook.centers.get(i, j);
                p.codebook.centers.set(i, j, base + STEP);
                let hi = objective(bag, &p, upstream);
                p.codebook.centers.set(i, j, base - STEP);
                let lo = objective(bag, &p, upstream);
                out.d_codebook.set(i, j, (hi - lo) / (2.0 * STEP));

                let mut p = params.clone();
                let base = p.precisions.log_precisions.get(i, j);
                p.precisions.log_precisions.set(i, j, base + STEP);
                let hi = objective(bag, &p, upstream);
                p.precisions.log_precisions.set(i, j, base - STEP);
                let lo = objective(bag, &p, upstream);
                out.d_log_precisions.set(i, j, (hi - lo) / (2.0 * STEP));
            }
        }
        out
    }

    fn rel_err(a: &Matrix, b: &Matrix) -> f64 {
        let diff: f64 = a
            .as_slice()
            .iter()
            .zip(b.as_slice())
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt();
        let na = a.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb = b.as_slice().iter().map(|x| x * x).sum::<f64>().sqrt();
        let scale = na.max(nb);
        if scale < 1e-10 {
            diff
        } else {
            diff / scale
        }
    }

    fn toy() -> (FeatureBag, AggregatorParams) {
        let c = Matrix::from_vec(2, 1, vec![0.0, 1.0]).unwrap();
        let p = AggregatorParams::with_identity(EncoderKind::T1, c, 1.0).unwrap();
        let bag = FeatureBag::new("f", 0, Matrix::from_vec(1, 1, vec![0.0]).unwrap()).unwrap();
        (bag, p)
    }

    #[test]
    fn zero_upstream_gives_zero() {
        let (bag, p) = toy();
        let g = backward_encode(bag.feature(0), &p, &[0.0, 0.0]).unwrap();
        assert!(g.d_codebook.as_slice().iter().all(|&v| v == 0.0));
        assert!(g.d_log_precisions.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_codeword_t1_has_no_gradient() {
        let c = Matrix::from_vec(1, 3, vec![0.2, -0.4, 1.0]).unwrap();
        let p = AggregatorParams::with_identity(EncoderKind::T1, c, 1.3).unwrap();
        let g = backward_encode(&[1.0, 2.0, 3.0], &p, &[4.2]).unwrap();
        assert!(g.d_codebook.as_slice().iter().all(|&v| v == 0.0));
        assert!(g.d_log_precisions.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn toy_codebook_gradient_matches_finite_differences() {
        let (bag, p) = toy();
        let up = [1.0, 0.0];
        let analytic = backward_encode(bag.feature(0), &p, &up).unwrap();
        let fd = numeric(&bag, &p, &up);
        assert!(rel_err(&analytic.d_codebook, &fd.d_codebook) < 1e-6);
        // hand value: w = (0.73106, 0.26894), g_1 = -w0 w1, d/dc_1 = g_1 * 2 * (0 - 1)
        let w1 = 1.0 / (1.0 + 1f64.exp());
        let w0 = 1.0 - w1;
        assert!((analytic.d_codebook.get(1, 0) - 2.0 * w0 * w1).abs() < 1e-12);
        assert_eq!(analytic.d_codebook.get(0, 0), 0.0);
    }

    #[test]
    fn constant_upstream_annihilated_for_t1() {
        let c = Matrix::from_rows(&[[0.0, 1.0], [2.0, -1.0], [0.5, 0.5]]).unwrap();
        let lp = Matrix::from_rows(&[[0.1, -0.3], [0.0, 0.4], [-0.2, 0.2]]).unwrap();
        let p = AggregatorParams::new(EncoderKind::T1, c, lp, 0.9).unwrap();
        let g = backward_encode(&[0.3, 0.1], &p, &[1.0, 1.0, 1.0]).unwrap();
        assert!(g.d_codebook.as_slice().iter().all(|v| v.abs() < 1e-15));
        assert!(g.d_log_precisions.as_slice().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn bow_has_no_precision_gradient() {
        let c = Matrix::from_rows(&[[0.0, 1.0], [2.0, -1.0]]).unwrap();
        let p = AggregatorParams::with_identity(EncoderKind::Bow, c, 0.9).unwrap();
        let g = backward_encode(&[0.3, 0.1], &p, &[1.0, -1.0]).unwrap();
        assert!(g.d_log_precisions.as_slice().iter().all(|&v| v == 0.0));
        assert!(g.d_codebook.as_slice().iter().any(|&v| v != 0.0));
    }

    #[test]
    fn upstream_shape_checked() {
        let (bag, p) = toy();
        assert!(matches!(
            backward_encode(bag.feature(0), &p, &[1.0]),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn full_on_single_feature_equals_backward_encode() {
        let (bag, p) = toy();
        let a = backward_aggregate(&bag, &p, &[0.3, -2.0], &Subsample::Full).unwrap();
        let b = backward_encode(bag.feature(0), &p, &[0.3, -2.0]).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn population_sample_is_bitwise_full() {
        let feats = Matrix::from_vec(7, 2, (0..14).map(|i| (i as f64 * 0.37).sin()).collect()).unwrap();
        let bag = FeatureBag::new("b", 0, feats).unwrap();
        let c = Matrix::from_rows(&[[0.0, 0.5], [-0.5, 0.2], [0.9, -0.9]]).unwrap();
        let p = AggregatorParams::with_identity(EncoderKind::T2, c, 1.5).unwrap();
        let up: Vec<f64> = (0..6).map(|i| i as f64 - 2.5).collect();
        let full = backward_aggregate(&bag, &p, &up, &Subsample::Full).unwrap();
        for seed in 0..5 {
            let sub = Subsample::Sample(SubsampleSpec {
                sample_size: 7,
                seed,
                replacement: false,
            });
            assert_eq!(backward_aggregate(&bag, &p, &up, &sub).unwrap(), full);
        }
    }

    #[test]
    fn sampling_errors() {
        let mut r = rng::stream(0, Stream::Subsample);
        assert!(sample_indices(&mut r, 5, 0, false).is_err());
        assert!(sample_indices(&mut r, 5, 6, false).is_err());
        let with = sample_indices(&mut r, 5, 9, true).unwrap();
        assert_eq!(with.len(), 9);
        assert!(with.windows(2).all(|w| w[0] <= w[1]));
        assert_eq!(default_sample_size(20_000), 1024);
        assert_eq!(default_sample_size(25), 25);
    }

    #[test]
    fn log_precision_gradient_matches_direct_precision_chain() {
        // d/dlog(lambda) = lambda * d/dlambda: differentiate in precision space
        let c = Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap();
        let lp = Matrix::from_rows(&[[0.3, -0.2], [0.1, 0.0]]).unwrap();
        let p = AggregatorParams::new(EncoderKind::T1, c, lp, 1.1).unwrap();
        let f = [0.4, 0.6];
        let up = [0.7, -0.2];
        let g = backward_encode(&f, &p, &up).unwrap();
        let eval = |lam: f64| {
            let mut q = p.clone();
            q.precisions.log_precisions.set(0, 1, lam.ln());
            let v = encode(&f, &q).unwrap().values;
            v[0] * up[0] + v[1] * up[1]
        };
        let lam = (-0.2f64).exp();
        let d_lam = (eval(lam + STEP) - eval(lam - STEP)) / (2.0 * STEP);
        assert!((g.d_log_precisions.get(0, 1) - lam * d_lam).abs() < 1e-8);
    }

    type Case = (
        EncoderKind,
        usize,
        usize,
        usize,
        Vec<f64>,
        Vec<f64>,
        Vec<f64>,
        Vec<f64>,
        f64,
    );

    fn random_case() -> impl Strategy<Value = Case> {
        (
            prop::sample::select(vec![EncoderKind::T1, EncoderKind::T2, EncoderKind::Bow]),
            1usize..=5,
            1usize..=4,
            1usize..=6,
        )
            .prop_flat_map(|(kind, d, k, n)| {
                let out = if kind == EncoderKind::T2 { k * d } else { k };
                (
                    Just(kind),
                    Just(d),
                    Just(k),
                    Just(n),
                    prop::collection::vec(-1.0f64..1.0, n * d),
                    prop::collection::vec(-1.0f64..1.0, k * d),
                    prop::collection::vec(-0.5f64..0.5, k * d),
                    prop::collection::vec(-1.0f64..1.0, out),
                    0.2f64..2.0,
                )
            })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]
        #[test]
        fn analytic_matches_finite_differences((kind, d, k, n, feats, c, lp, up, gamma) in random_case()) {
            let bag = FeatureBag::new("r", 0, Matrix::from_vec(n, d, feats).unwrap()).unwrap();
            let p = AggregatorParams::new(kind, Matrix::from_vec(k, d, c).unwrap(), Matrix::from_vec(k, d, lp).unwrap(), gamma).unwrap();
            let analytic = backward_aggregate(&bag, &p, &up, &Subsample::Full).unwrap();
            let fd = numeric(&bag, &p, &up);
            prop_assert!(rel_err(&analytic.d_codebook, &fd.d_codebook) < 1e-5);
            prop_assert!(rel_err(&analytic.d_log_precisions, &fd.d_log_precisions) < 1e-5);
        }
    }
}
