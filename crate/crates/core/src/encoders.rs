//! Forward evaluation of the aggregation family.
//!
//! Every encoder starts from the same kernel responses
//! `log D_k(f) = -gamma * sum_d lambda_kd (f_d - c_kd)^2`, where `lambda_kd`
//! is the diagonal precision of codeword `k`. The responses are normalized
//! with a log-sum-exp softmax:
//!
//! * [`EncoderKind::T1`] returns the normalized responses themselves (length `K`).
//! * [`EncoderKind::Bow`] is `T1` with every precision pinned to one, i.e. the
//!   Gaussian soft bag-of-words with Euclidean distance.
//! * [`EncoderKind::T2`] weights the residuals `f - c_k` by the normalized
//!   responses (soft VLAD, length `K * D`, block `k` at `[k*D, (k+1)*D)`).
//!
//! A bag is summarized by the arithmetic mean of its per-descriptor encodings.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::linalg::{softmax_in_place, Matrix};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EncoderKind {
    Bow,
    T1,
    T2,
}

impl EncoderKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EncoderKind::Bow => "bow",
            EncoderKind::T1 => "t1",
            EncoderKind::T2 => "t2",
        }
    }

    /// Whether the encoder output lies on the probability simplex.
    pub fn is_simplex(self) -> bool {
        !matches!(self, EncoderKind::T2)
    }
}

impl fmt::Display for EncoderKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EncoderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bow" => Ok(EncoderKind::Bow),
            "t1" => Ok(EncoderKind::T1),
            "t2" => Ok(EncoderKind::T2),
            other => Err(Error::InvalidArgument(format!("unknown encoder `{other}`"))),
        }
    }
}

/// One sample: a set of local descriptors (rows) and its class label.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureBag {
    pub id: String,
    pub label: usize,
    pub descriptors: Matrix,
}

impl FeatureBag {
    pub fn new(id: impl Into<String>, label: usize, descriptors: Matrix) -> Result<Self> {
        let id = id.into();
        if descriptors.rows() == 0 {
            return Err(Error::Empty(format!("bag `{id}` has no descriptors")));
        }
        if descriptors.cols() == 0 {
            return Err(Error::Shape(format!("bag `{id}` has zero-dimensional descriptors")));
        }
        if !descriptors.is_finite() {
            return Err(Error::NonFinite(format!("descriptors of bag `{id}`")));
        }
        Ok(Self { id, label, descriptors })
    }

    /// Number of descriptors `N_F`.
    pub fn len(&self) -> usize {
        self.descriptors.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.descriptors.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.descriptors.cols()
    }

    pub fn feature(&self, n: usize) -> &[f64] {
        self.descriptors.row(n)
    }
}

/// `K x D` matrix, row `k` is codeword `c_k`.
#[derive(Clone, Debug, PartialEq)]
pub struct Codebook {
    pub centers: Matrix,
}

/// `K x D` matrix of log diagonal precisions (log of the diagonal of the
/// inverse covariance). Exponentiating keeps every precision positive no
/// matter how the entries are updated.
#[derive(Clone, Debug, PartialEq)]
pub struct PrecisionBank {
    pub log_precisions: Matrix,
}

impl PrecisionBank {
    /// Identity covariances.
    pub fn identity(k: usize, d: usize) -> Self {
        Self {
            log_precisions: Matrix::zeros(k, d),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregatorParams {
    pub kind: EncoderKind,
    pub codebook: Codebook,
    pub precisions: PrecisionBank,
    pub gamma: f64,
}

impl AggregatorParams {
    pub fn new(kind: EncoderKind, centers: Matrix, log_precisions: Matrix, gamma: f64) -> Result<Self> {
        let params = Self {
            kind,
            codebook: Codebook { centers },
            precisions: PrecisionBank { log_precisions },
            gamma,
        };
        params.validate()?;
        Ok(params)
    }

    /// Parameters with identity covariances.
    pub fn with_identity(kind: EncoderKind, centers: Matrix, gamma: f64) -> Result<Self> {
        let lp = Matrix::zeros(centers.rows(), centers.cols());
        Self::new(kind, centers, lp, gamma)
    }

    pub fn validate(&self) -> Result<()> {
        let c = &self.codebook.centers;
        let p = &self.precisions.log_precisions;
        if c.rows() == 0 || c.cols() == 0 {
            return Err(Error::Empty("codebook has no codewords".into()));
        }
        if !c.same_shape(p) {
            return Err(Error::Shape(format!(
                "codebook is {}x{} but log-precisions are {}x{}",
                c.rows(),
                c.cols(),
                p.rows(),
                p.cols()
            )));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "gamma must be positive and finite, got {}",
                self.gamma
            )));
        }
        if !c.is_finite() {
            return Err(Error::NonFinite("codebook".into()));
        }
        if !p.is_finite() {
            return Err(Error::NonFinite("log-precisions".into()));
        }
        Ok(())
    }

    /// Codebook size `K`.
    pub fn num_codewords(&self) -> usize {
        self.codebook.centers.rows()
    }

    /// Descriptor dimension `D`.
    pub fn dim(&self) -> usize {
        self.codebook.centers.cols()
    }

    /// Length of one encoding.
    pub fn output_len(&self) -> usize {
        match self.kind {
            EncoderKind::Bow | EncoderKind::T1 => self.num_codewords(),
            EncoderKind::T2 => self.num_codewords() * self.dim(),
        }
    }

    /// Effective precision `lambda_kd`; bag-of-words ignores the stored bank.
    #[inline]
    pub(crate) fn precision(&self, k: usize, d: usize) -> f64 {
        match self.kind {
            EncoderKind::Bow => 1.0,
            _ => self.precisions.log_precisions.get(k, d).exp(),
        }
    }

    pub(crate) fn check_feature(&self, f: &[f64]) -> Result<()> {
        if f.len() != self.dim() {
            return Err(Error::Shape(format!(
                "feature has dimension {}, codebook has {}",
                f.len(),
                self.dim()
            )));
        }
        if f.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("feature".into()));
        }
        Ok(())
    }
}

/// A global (or per-descriptor) representation.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedVector {
    pub values: Vec<f64>,
}

impl EncodedVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }
}

impl AsRef<[f64]> for EncodedVector {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

/// `log D_k(f) = -gamma (f - c_k)^T Lambda_k (f - c_k)`.
pub fn kernel_log_response(f: &[f64], params: &AggregatorParams, k: usize) -> Result<f64> {
    params.check_feature(f)?;
    if k >= params.num_codewords() {
        return Err(Error::InvalidArgument(format!(
            "codeword index {k} out of range for K = {}",
            params.num_codewords()
        )));
    }
    Ok(log_response_unchecked(f, params, k))
}

#[inline]
fn log_response_unchecked(f: &[f64], params: &AggregatorParams, k: usize) -> f64 {
    let c = params.codebook.centers.row(k);
    let mut q = 0.0;
    for (d, (&fd, &cd)) in f.iter().zip(c).enumerate() {
        let r = fd - cd;
        q += params.precision(k, d) * r * r;
    }
    -params.gamma * q
}

/// Writes the normalized responses (responsibilities) of `f` into `out`.
pub(crate) fn responsibilities_into(f: &[f64], params: &AggregatorParams, out: &mut [f64]) {
    for (k, o) in out.iter_mut().enumerate() {
        *o = log_response_unchecked(f, params, k);
    }
    softmax_in_place(out);
}

/// Soft assignment of one descriptor (T1; bag-of-words when `kind` is `Bow`).
pub fn encode_t1(f: &[f64], params: &AggregatorParams) -> Result<EncodedVector> {
    if params.kind == EncoderKind::T2 {
        return Err(Error::InvalidArgument(
            "encode_t1 called with a T2 parameter set".into(),
        ));
    }
    params.check_feature(f)?;
    let mut values = vec![0.0; params.num_codewords()];
    responsibilities_into(f, params, &mut values);
    Ok(EncodedVector { values })
}

/// Soft VLAD of one descriptor.
pub fn encode_t2(f: &[f64], params: &AggregatorParams) -> Result<EncodedVector> {
    if params.kind != EncoderKind::T2 {
        return Err(Error::InvalidArgument(format!(
            "encode_t2 called with a {} parameter set",
            params.kind
        )));
    }
    params.check_feature(f)?;
    let mut values = vec![0.0; params.output_len()];
    let mut w = vec![0.0; params.num_codewords()];
    accumulate_encoding(f, params, 1.0, &mut w, &mut values);
    Ok(EncodedVector { values })
}

/// Dispatches on `params.kind`.
pub fn encode(f: &[f64], params: &AggregatorParams) -> Result<EncodedVector> {
    match params.kind {
        EncoderKind::Bow | EncoderKind::T1 => encode_t1(f, params),
        EncoderKind::T2 => encode_t2(f, params),
    }
}

/// `out += scale * T(f)`, using `w` (length K) as scratch for responsibilities.
fn accumulate_encoding(f: &[f64], params: &AggregatorParams, scale: f64, w: &mut [f64], out: &mut [f64]) {
    responsibilities_into(f, params, w);
    match params.kind {
        EncoderKind::Bow | EncoderKind::T1 => {
            for (o, &wk) in out.iter_mut().zip(w.iter()) {
                *o += scale * wk;
            }
        }
        EncoderKind::T2 => {
            let d = params.dim();
            for (k, &wk) in w.iter().enumerate() {
                let c = params.codebook.centers.row(k);
                let block = &mut out[k * d..(k + 1) * d];
                for ((o, &fd), &cd) in block.iter_mut().zip(f).zip(c) {
                    *o += scale * wk * (fd - cd);
                }
            }
        }
    }
}

fn check_bag(bag: &FeatureBag, params: &AggregatorParams) -> Result<()> {
    if bag.is_empty() {
        return Err(Error::Empty(format!("bag `{}`", bag.id)));
    }
    if bag.dim() != params.dim() {
        return Err(Error::Shape(format!(
            "bag `{}` has dimension {}, codebook has {}",
            bag.id,
            bag.dim(),
            params.dim()
        )));
    }
    Ok(())
}

/// Mean encoding over every descriptor of the bag.
pub fn aggregate(bag: &FeatureBag, params: &AggregatorParams) -> Result<EncodedVector> {
    check_bag(bag, params)?;
    let indices: Vec<usize> = (0..bag.len()).collect();
    aggregate_rows(bag, params, &indices)
}

/// Mean encoding over the descriptors at `indices` (duplicates count twice).
/// Terms are summed in the order given.
pub fn aggregate_rows(bag: &FeatureBag, params: &AggregatorParams, indices: &[usize]) -> Result<EncodedVector> {
    check_bag(bag, params)?;
    if indices.is_empty() {
        return Err(Error::Empty(format!("descriptor sample of bag `{}`", bag.id)));
    }
    if let Some(&bad) = indices.iter().find(|&&i| i >= bag.len()) {
        return Err(Error::InvalidArgument(format!(
            "descriptor index {bad} out of range for bag `{}` with {} descriptors",
            bag.id,
            bag.len()
        )));
    }
    let mut values = vec![0.0; params.output_len()];
    let mut w = vec![0.0; params.num_codewords()];
    for &n in indices {
        accumulate_encoding(bag.feature(n), params, 1.0, &mut w, &mut values);
    }
    let inv = 1.0 / indices.len() as f64;
    for v in &mut values {
        *v *= inv;
    }
    Ok(EncodedVector { values })
}
