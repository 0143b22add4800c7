//! Codebook and covariance initialization.
//!
//! Three strategies: codewords sampled from the training descriptors with
//! identity covariances, K-Means centers with identity covariances, or the
//! means and diagonal variances of a Gaussian mixture. Clustering runs on a
//! pooled random subset of descriptors.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use rand::Rng as _;

use crate::encoders::{AggregatorParams, EncoderKind, FeatureBag};
use crate::error::{Error, Result};
use crate::linalg::{log_sum_exp, Matrix};
use crate::rng::{self, Rng, Stream};

pub const DEFAULT_POOL_CAP: usize = 200_000;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum InitMode {
    Random,
    KMeans,
    Gmm,
}

impl InitMode {
    pub fn as_str(self) -> &'static str {
        match self {
            InitMode::Random => "random",
            InitMode::KMeans => "kmeans",
            InitMode::Gmm => "gmm",
        }
    }
}

impl fmt::Display for InitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "random" => Ok(InitMode::Random),
            "kmeans" => Ok(InitMode::KMeans),
            "gmm" => Ok(InitMode::Gmm),
            other => Err(Error::InvalidArgument(format!("unknown init mode `{other}`"))),
        }
    }
}

/// Descriptors drawn across bags, with `(bag index, row)` provenance.
#[derive(Clone, Debug, PartialEq)]
pub struct PooledFeatures {
    pub features: Matrix,
    pub provenance: Vec<(usize, usize)>,
}

impl PooledFeatures {
    pub fn len(&self) -> usize {
        self.features.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.features.rows() == 0
    }

    pub fn from_matrix(features: Matrix) -> Self {
        let provenance = (0..features.rows()).map(|r| (0, r)).collect();
        Self { features, provenance }
    }
}

/// Uniform random subset of at most `cap` descriptors across `bags`, kept in
/// their original order.
pub fn pool_features(bags: &[FeatureBag], k: usize, cap: usize, seed: u64) -> Result<PooledFeatures> {
    if cap < k {
        return Err(Error::InvalidArgument(format!(
            "pool cap {cap} is smaller than K = {k}"
        )));
    }
    let dim = bags
        .first()
        .map(FeatureBag::dim)
        .ok_or_else(|| Error::Empty("no bags to pool".into()))?;
    if let Some(b) = bags.iter().find(|b| b.dim() != dim) {
        return Err(Error::Shape(format!(
            "bag `{}` has dimension {}, expected {dim}",
            b.id,
            b.dim()
        )));
    }
    let total: usize = bags.iter().map(FeatureBag::len).sum();
    if total < k {
        return Err(Error::InvalidArgument(format!(
            "only {total} descriptors available for K = {k} codewords"
        )));
    }

    let chosen: Vec<usize> = if total <= cap {
        (0..total).collect()
    } else {
        let mut r = rng::stream(seed, Stream::Init);
        let mut v = index::sample(&mut r, total, cap).into_vec();
        v.sort_unstable();
        v
    };

    let mut data = Vec::with_capacity(chosen.len() * dim);
    let mut provenance = Vec::with_capacity(chosen.len());
    let mut bag = 0;
    let mut offset = 0;
    for flat in chosen {
        while flat >= offset + bags[bag].len() {
            offset += bags[bag].len();
            bag += 1;
        }
        let row = flat - offset;
        data.extend_from_slice(bags[bag].feature(row));
        provenance.push((bag, row));
    }
    Ok(PooledFeatures {
        features: Matrix::from_vec(provenance.len(), dim, data)?,
        provenance,
    })
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[derive(Clone, Debug)]
pub struct KMeansFit {
    pub centers: Matrix,
    pub assignments: Vec<usize>,
    /// Inertia after each assignment step.
    pub inertia: Vec<f64>,
}

/// k-means++ seeding: first center uniform, the rest proportional to the
/// squared distance to the nearest chosen center.
fn kmeans_plus_plus(points: &Matrix, k: usize, rng: &mut Rng) -> Matrix {
    let n = points.rows();
    let mut centers = Matrix::zeros(k, points.cols());
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    centers.row_mut(0).copy_from_slice(points.row(first));
    chosen[first] = true;
    let mut nearest: Vec<f64> = (0..n).map(|i| sq_dist(points.row(i), points.row(first))).collect();

    for c in 1..k {
        let total: f64 = nearest.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in nearest.iter().enumerate() {
                if d > 0.0 && target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            // rounding can run off the end onto a zero-weight point
            if nearest[pick] == 0.0 {
                pick = nearest.iter().rposition(|&d| d > 0.0).unwrap_or(pick);
            }
            pick
        } else {
            // every remaining point coincides with a center
            let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
            if free.is_empty() {
                rng.random_range(0..n)
            } else {
                free[rng.random_range(0..free.len())]
            }
        };
        chosen[pick] = true;
        centers.row_mut(c).copy_from_slice(points.row(pick));
        for (i, d) in nearest.iter_mut().enumerate() {
            *d = d.min(sq_dist(points.row(i), points.row(pick)));
        }
    }
    centers
}

fn assign(points: &Matrix, centers: &Matrix, assignments: &mut [usize], dists: &mut [f64]) {
    for (i, p) in points.iter_rows().enumerate() {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (c, center) in centers.iter_rows().enumerate() {
            let d = sq_dist(p, center);
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        assignments[i] = best;
        dists[i] = best_d;
    }
}

/// Moves each empty center onto the point farthest from its own center,
/// taken from a cluster that can spare it.
fn repair_empty(points: &Matrix, centers: &mut Matrix, assignments: &mut [usize], dists: &mut [f64]) {
    let k = centers.rows();
    let mut counts = vec![0usize; k];
    for &a in assignments.iter() {
        counts[a] += 1;
    }
    for c in 0..k {
        if counts[c] > 0 {
            continue;
        }
        let donor = (0..points.rows())
            .filter(|&i| counts[assignments[i]] > 1)
            .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)));
        let Some(i) = donor else { break };
        counts[assignments[i]] -= 1;
        counts[c] = 1;
        assignments[i] = c;
        dists[i] = 0.0;
        centers.row_mut(c).copy_from_slice(points.row(i));
    }
}

/// Lloyd iterations from k-means++ seeding. Stops after `max_iters`
/// assignment steps, when the inertia improves by less than `tol`, or when
/// the assignment stops changing.
pub fn kmeans(pool: &PooledFeatures, k: usize, max_iters: usize, tol: f64, seed: u64) -> Result<KMeansFit> {
    let points = &pool.features;
    let n = points.rows();
    if k == 0 {
        return Err(Error::InvalidArgument("K must be at least 1".into()));
    }
    if k > n {
        return Err(Error::InvalidArgument(format!(
            "K = {k} exceeds the {n} pooled descriptors"
        )));
    }
    let mut rng = rng::stream(seed, Stream::Init);
    let mut centers = kmeans_plus_plus(points, k, &mut rng);
    let mut assignments = vec![usize::MAX; n];
    let mut dists = vec![0.0; n];
    let mut inertia = Vec::new();
    let mut previous = vec![usize::MAX; n];

    for _ in 0..max_iters.max(1) {
        assign(points, &centers, &mut assignments, &mut dists);
        repair_empty(points, &mut centers, &mut assignments, &mut dists);
        let current: f64 = dists.iter().sum();
        let stalled = assignments == previous;
        let improved_little = inertia.last().is_some_and(|&last: &f64| last - current < tol);
        inertia.push(current);

        // means of the current assignment
        let mut sums = Matrix::zeros(k, points.cols());
        let mut counts = vec![0usize; k];
        for (i, &a) in assignments.iter().enumerate() {
            counts[a] += 1;
            for (s, v) in sums.row_mut(a).iter_mut().zip(points.row(i)) {
                *s += v;
            }
        }
        for (c, &count) in counts.iter().enumerate() {
            if count > 0 {
                let inv = 1.0 / count as f64;
                for (dst, s) in centers.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *dst = s * inv;
                }
            }
        }
        if stalled || improved_little {
            break;
        }
        previous.copy_from_slice(&assignments);
    }
    Ok(KMeansFit {
        centers,
        assignments,
        inertia,
    })
}

/// Diagonal-covariance Gaussian mixture.
#[derive(Clone, Debug, PartialEq)]
pub struct GmmModel {
    pub means: Matrix,
    pub variances: Matrix,
    pub weights: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct GmmFit {
    pub model: GmmModel,
    /// Total log-likelihood of the pool under the parameters entering each E-step.
    pub log_likelihood: Vec<f64>,
    /// Per-dimension variance floor actually applied.
    pub floor: Vec<f64>,
}

fn component_log_density(x: &[f64], mean: &[f64], var: &[f64]) -> f64 {
    const LN_2PI: f64 = 1.837_877_066_409_345_5;
    let mut acc = 0.0;
    for ((xd, md), vd) in x.iter().zip(mean).zip(var) {
        let r = xd - md;
        acc += LN_2PI + vd.ln() + r * r / vd;
    }
    -0.5 * acc
}

/// EM for a diagonal GMM, initialized from K-Means. `variance_floor` is
/// relative: each dimension's variance is clamped at
/// `variance_floor * pooled variance of that dimension`.
pub fn gmm(
    pool: &PooledFeatures,
    k: usize,
    max_iters: usize,
    tol: f64,
    variance_floor: f64,
    seed: u64,
) -> Result<GmmFit> {
    let points = &pool.features;
    let (n, dim) = (points.rows(), points.cols());
    if variance_floor.is_nan() || variance_floor <= 0.0 {
        return Err(Error::InvalidArgument("variance floor must be positive".into()));
    }
    let mut mean_all = vec![0.0; dim];
    for p in points.iter_rows() {
        for (m, v) in mean_all.iter_mut().zip(p) {
            *m += v / n as f64;
        }
    }
    let mut pooled_var = vec![0.0; dim];
    for p in points.iter_rows() {
        for ((s, v), m) in pooled_var.iter_mut().zip(p).zip(&mean_all) {
            *s += (v - m) * (v - m) / n as f64;
        }
    }
    if k > 1 && points.iter_rows().all(|p| p == points.row(0)) {
        return Err(Error::Degenerate(format!(
            "all {n} pooled descriptors are identical; cannot fit {k} components"
        )));
    }
    let init = kmeans(pool, k, 100, 1e-10, seed)?;
    let floor: Vec<f64> = pooled_var.iter().map(|v| (variance_floor * v).max(1e-12)).collect();

    let mut model = GmmModel {
        means: init.centers.clone(),
        variances: Matrix::zeros(k, dim),
        weights: vec![0.0; k],
    };
    {
        let mut counts = vec![0usize; k];
        for (i, &a) in init.assignments.iter().enumerate() {
            counts[a] += 1;
            let m = init.centers.row(a);
            for ((s, v), mu) in model.variances.row_mut(a).iter_mut().zip(points.row(i)).zip(m) {
                *s += (v - mu) * (v - mu);
            }
        }
        for (c, &count) in counts.iter().enumerate() {
            model.weights[c] = count as f64 / n as f64;
            for (d, s) in model.variances.row_mut(c).iter_mut().enumerate() {
                *s = if count > 0 { *s / count as f64 } else { pooled_var[d] };
                *s = s.max(floor[d]);
            }
        }
    }

    let mut resp = Matrix::zeros(n, k);
    let mut history = Vec::new();
    let mut log_terms = vec![0.0; k];
    for _ in 0..max_iters.max(1) {
        // E-step
        let mut ll = 0.0;
        for (i, x) in points.iter_rows().enumerate() {
            for (c, t) in log_terms.iter_mut().enumerate() {
                *t = model.weights[c].ln() + component_log_density(x, model.means.row(c), model.variances.row(c));
            }
            let lse = log_sum_exp(&log_terms);
            ll += lse;
            for (r, t) in resp.row_mut(i).iter_mut().zip(&log_terms) {
                *r = (t - lse).exp();
            }
        }
        let converged = history.last().is_some_and(|&last: &f64| ll - last < tol);
        history.push(ll);
        if converged {
            break;
        }

        // M-step
        for c in 0..k {
            let nk: f64 = (0..n).map(|i| resp.get(i, c)).sum();
            model.weights[c] = nk / n as f64;
            if nk <= 0.0 {
                continue;
            }
            let mut mu = vec![0.0; dim];
            for (i, x) in points.iter_rows().enumerate() {
                let r = resp.get(i, c);
                for (m, v) in mu.iter_mut().zip(x) {
                    *m += r * v;
                }
            }
            for m in &mut mu {
                *m /= nk;
            }
            let mut var = vec![0.0; dim];
            for (i, x) in points.iter_rows().enumerate() {
                let r = resp.get(i, c);
                for ((s, v), m) in var.iter_mut().zip(x).zip(&mu) {
                    *s += r * (v - m) * (v - m);
                }
            }
            for (d, s) in var.iter_mut().enumerate() {
                *s = (*s / nk).max(floor[d]);
            }
            model.means.row_mut(c).copy_from_slice(&mu);
            model.variances.row_mut(c).copy_from_slice(&var);
        }
        let total: f64 = model.weights.iter().sum();
        for w in &mut model.weights {
            *w /= total;
        }
    }
    Ok(GmmFit {
        model,
        log_likelihood: history,
        floor,
    })
}

/// Knobs for [`init_params`].
#[derive(Clone, Debug, PartialEq)]
pub struct InitOptions {
    pub mode: InitMode,
    pub k: usize,
    pub pool_cap: usize,
    pub kmeans_max_iters: usize,
    pub kmeans_tol: f64,
    pub gmm_max_iters: usize,
    pub gmm_tol: f64,
    pub variance_floor: f64,
    pub seed: u64,
}

impl Default for InitOptions {
    fn default() -> Self {
        Self {
            mode: InitMode::KMeans,
            k: 2,
            pool_cap: DEFAULT_POOL_CAP,
            kmeans_max_iters: 100,
            kmeans_tol: 1e-8,
            gmm_max_iters: 100,
            gmm_tol: 1e-6,
            variance_floor: 1e-6,
            seed: 0,
        }
    }
}

/// Initial aggregator parameters for `kind`. Bag-of-words always keeps
/// identity covariances.
pub fn init_params(bags: &[FeatureBag], kind: EncoderKind, gamma: f64, opts: &InitOptions) -> Result<AggregatorParams> {
    let pool = pool_features(bags, opts.k, opts.pool_cap, opts.seed)?;
    let dim = pool.features.cols();
    let (centers, log_precisions) = match opts.mode {
        InitMode::Random => {
            let mut r = rng::stream(opts.seed, Stream::Init);
            // skip past the draws used by pooling so the two are independent
            r.set_word_pos(1 << 40);
            let mut pick = index::sample(&mut r, pool.len(), opts.k).into_vec();
            pick.sort_unstable();
            let rows: Vec<&[f64]> = pick.iter().map(|&i| pool.features.row(i)).collect();
            (Matrix::from_rows(&rows)?, Matrix::zeros(opts.k, dim))
        }
        InitMode::KMeans => {
            let fit = kmeans(&pool, opts.k, opts.kmeans_max_iters, opts.kmeans_tol, opts.seed)?;
            (fit.centers, Matrix::zeros(opts.k, dim))
        }
        InitMode::Gmm => {
            let fit = gmm(
                &pool,
                opts.k,
                opts.gmm_max_iters,
                opts.gmm_tol,
                opts.variance_floor,
                opts.seed,
            )?;
            let mut lp = fit.model.variances.clone();
            for v in lp.as_mut_slice() {
                *v = -v.ln();
            }
            (fit.model.means, lp)
        }
    };
    let log_precisions = if kind == EncoderKind::Bow {
        Matrix::zeros(opts.k, dim)
    } else {
        log_precisions
    };
    AggregatorParams::new(kind, centers, log_precisions, gamma)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, Normal};

    fn bag(id: &str, rows: &[&[f64]]) -> FeatureBag {
        FeatureBag::new(id, 0, Matrix::from_rows(rows).unwrap()).unwrap()
    }

    fn line_pool(values: &[f64]) -> PooledFeatures {
        PooledFeatures::from_matrix(Matrix::from_vec(values.len(), 1, values.to_vec()).unwrap())
    }

    #[test]
    fn pool_keeps_everything_under_cap() {
        let bags = [bag("a", &[&[1.0], &[2.0]]), bag("b", &[&[3.0]])];
        let p = pool_features(&bags, 2, 10, 0).unwrap();
        assert_eq!(p.features.as_slice(), &[1.0, 2.0, 3.0]);
        assert_eq!(p.provenance, vec![(0, 0), (0, 1), (1, 0)]);
    }

    #[test]
    fn pool_forced_when_cap_equals_k() {
        let bags = [bag("a", &[&[1.0], &[2.0], &[3.0]])];
        let p = pool_features(&bags, 3, 3, 9).unwrap();
        assert_eq!(p.features.as_slice(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn pool_is_seed_deterministic() {
        let rows: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64]).collect();
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let bags = [bag("a", &refs), bag("b", &refs)];
        let a = pool_features(&bags, 2, 5, 7).unwrap();
        let b = pool_features(&bags, 2, 5, 7).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 5);
        for (i, &(bi, r)) in a.provenance.iter().enumerate() {
            assert_eq!(a.features.row(i), bags[bi].feature(r));
        }
    }

    #[test]
    fn pool_errors() {
        let bags = [bag("a", &[&[1.0]])];
        assert!(pool_features(&bags, 2, 10, 0).is_err());
        assert!(pool_features(&bags, 2, 1, 0).is_err());
        assert!(pool_features(&[], 1, 10, 0).is_err());
    }

    #[test]
    fn kmeans_k_equals_n() {
        let pool = line_pool(&[0.0, 3.0, -1.0, 7.5]);
        let fit = kmeans(&pool, 4, 50, 0.0, 3).unwrap();
        assert_eq!(*fit.inertia.last().unwrap(), 0.0);
        let mut c = fit.centers.into_vec();
        c.sort_by(f64::total_cmp);
        assert_eq!(c, vec![-1.0, 0.0, 3.0, 7.5]);
    }

    /// Best 2-partition of sorted 1-D points by exhaustive search.
    fn best_split(values: &[f64]) -> (f64, f64) {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let mean = |s: &[f64]| s.iter().sum::<f64>() / s.len() as f64;
        let cost = |s: &[f64]| {
            let m = mean(s);
            s.iter().map(|x| (x - m) * (x - m)).sum::<f64>()
        };
        (1..v.len())
            .map(|i| (cost(&v[..i]) + cost(&v[i..]), mean(&v[..i]), mean(&v[i..])))
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .map(|(_, a, b)| (a, b))
            .unwrap()
    }

    #[test]
    fn kmeans_two_clusters_match_exhaustive_optimum() {
        let values = [0.0, 0.1, 10.0, 10.1];
        let (lo, hi) = best_split(&values);
        assert!((lo - 0.05).abs() < 1e-12 && (hi - 10.05).abs() < 1e-12);
        for seed in 0..10 {
            let fit = kmeans(&line_pool(&values), 2, 50, 0.0, seed).unwrap();
            let mut c = fit.centers.into_vec();
            c.sort_by(f64::total_cmp);
            assert!((c[0] - lo).abs() < 1e-12 && (c[1] - hi).abs() < 1e-12);
        }
    }

    #[test]
    fn kmeans_single_center_is_mean() {
        let values = [1.0, 2.0, 4.0, 9.0];
        let fit = kmeans(&line_pool(&values), 1, 10, 0.0, 0).unwrap();
        assert!((fit.centers.get(0, 0) - 4.0).abs() < 1e-15);
    }

    #[test]
    fn kmeans_rejects_too_many_clusters() {
        assert!(kmeans(&line_pool(&[1.0, 2.0]), 3, 10, 0.0, 0).is_err());
    }

    #[test]
    fn kmeans_duplicates_every_center_owns_a_point() {
        let pool = line_pool(&[1.0, 1.0, 1.0, 1.0, 5.0]);
        let fit = kmeans(&pool, 3, 20, 0.0, 4).unwrap();
        let mut counts = [0; 3];
        for &a in &fit.assignments {
            counts[a] += 1;
        }
        assert!(counts.iter().all(|&c| c >= 1), "{counts:?}");
    }

    #[test]
    fn repair_moves_farthest_point() {
        let points = Matrix::from_vec(4, 1, vec![0.0, 0.1, 0.2, 9.0]).unwrap();
        let mut centers = Matrix::from_vec(2, 1, vec![0.0, 100.0]).unwrap();
        let mut a = vec![0; 4];
        let mut d = vec![0.0; 4];
        assign(&points, &centers, &mut a, &mut d);
        assert_eq!(a, vec![0, 0, 0, 0]);
        repair_empty(&points, &mut centers, &mut a, &mut d);
        assert_eq!(a, vec![0, 0, 0, 1]);
        assert_eq!(centers.get(1, 0), 9.0);
    }

    #[test]
    fn gmm_single_component_is_mle() {
        let values = [1.0, 2.0, 4.0, 9.0];
        let fit = gmm(&line_pool(&values), 1, 20, 1e-12, 1e-6, 0).unwrap();
        let mean = 4.0;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 4.0;
        assert!((fit.model.means.get(0, 0) - mean).abs() < 1e-12);
        assert!((fit.model.variances.get(0, 0) - var).abs() < 1e-12);
        assert!((fit.model.weights[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gmm_recovers_separated_blobs() {
        let mut r = rng::stream(11, Stream::Data);
        let noise = Normal::new(0.0, 1.0).unwrap();
        let truth = [[-6.0, 0.0], [6.0, 2.0]];
        let mut rows = Vec::new();
        for c in truth {
            for _ in 0..400 {
                rows.push(vec![c[0] + noise.sample(&mut r), c[1] + noise.sample(&mut r)]);
            }
        }
        let pool = PooledFeatures::from_matrix(Matrix::from_rows(&rows).unwrap());
        let fit = gmm(&pool, 2, 200, 1e-10, 1e-6, 5).unwrap();
        for t in truth {
            let closest = fit
                .model
                .means
                .iter_rows()
                .map(|m| sq_dist(m, &t).sqrt())
                .fold(f64::INFINITY, f64::min);
            assert!(closest < 0.1, "mean error {closest}");
        }
        let ll = &fit.log_likelihood;
        for w in ll.windows(2) {
            assert!(w[1] >= w[0] - 1e-9 * w[0].abs().max(1.0));
        }
        assert!((fit.model.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn gmm_degenerate_pool() {
        let pool = line_pool(&[2.0; 6]);
        assert!(matches!(gmm(&pool, 2, 10, 1e-9, 1e-6, 0), Err(Error::Degenerate(_))));
        let fit = gmm(&pool, 1, 10, 1e-9, 1e-6, 0).unwrap();
        assert_eq!(fit.model.means.get(0, 0), 2.0);
        assert!(fit.model.variances.get(0, 0) > 0.0);
    }

    fn two_bags() -> Vec<FeatureBag> {
        vec![
            bag("a", &[&[0.0, 0.0], &[0.1, 0.2], &[0.2, -0.1]]),
            bag("b", &[&[5.0, 5.0], &[5.2, 4.9], &[4.8, 5.1]]),
        ]
    }

    #[test]
    fn init_kmeans_has_identity_precisions() {
        let opts = InitOptions {
            mode: InitMode::KMeans,
            k: 2,
            ..Default::default()
        };
        let p = init_params(&two_bags(), EncoderKind::T1, 1.0, &opts).unwrap();
        assert!(p.precisions.log_precisions.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn init_gmm_maps_variances_to_log_precisions() {
        let opts = InitOptions {
            mode: InitMode::Gmm,
            k: 2,
            ..Default::default()
        };
        let bags = two_bags();
        let p = init_params(&bags, EncoderKind::T1, 1.0, &opts).unwrap();
        let pool = pool_features(&bags, 2, opts.pool_cap, 0).unwrap();
        let fit = gmm(&pool, 2, opts.gmm_max_iters, opts.gmm_tol, opts.variance_floor, 0).unwrap();
        for (lp, v) in p
            .precisions
            .log_precisions
            .as_slice()
            .iter()
            .zip(fit.model.variances.as_slice())
        {
            assert!((lp + v.ln()).abs() < 1e-15);
        }
        assert_eq!(-(1.0f64.ln()), 0.0);
    }

    #[test]
    fn init_random_rows_come_from_bags() {
        let bags = two_bags();
        for seed in 0..5 {
            let opts = InitOptions {
                mode: InitMode::Random,
                k: 3,
                seed,
                ..Default::default()
            };
            let p = init_params(&bags, EncoderKind::T2, 1.0, &opts).unwrap();
            for row in p.codebook.centers.iter_rows() {
                assert!(bags.iter().any(|b| b.descriptors.iter_rows().any(|r| r == row)));
            }
            assert!(p.precisions.log_precisions.as_slice().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn clustering_monotone_on_random_sets() {
        for seed in 0..20 {
            let mut r = rng::stream(seed, Stream::Data);
            let n = r.random_range(6..40);
            let d = r.random_range(1..4);
            let data: Vec<f64> = (0..n * d).map(|_| r.random_range(-3.0..3.0)).collect();
            let pool = PooledFeatures::from_matrix(Matrix::from_vec(n, d, data).unwrap());
            let k = r.random_range(1..5);
            let fit = kmeans(&pool, k, 100, 0.0, seed).unwrap();
            for w in fit.inertia.windows(2) {
                assert!(w[1] <= w[0] + 1e-12);
            }
        }
    }
}
