//! Elastic-net penalized logistic regression on all pairwise log-ratios.
//!
//! For two classes, `logit P(first class) = θ0 + Σ θ_jj′ ln(x_j / x_j′)` is
//! fitted by minimizing
//!
//! ```text
//! (1/n)·NLL(θ) + λ(1−α)/2·‖θ‖² + λα·‖θ‖₁
//! ```
//!
//! on internally standardized columns, with a proximal Newton scheme: each
//! outer step forms the IRLS quadratic approximation, solves it by cyclic
//! coordinate descent with soft-thresholding, and backtracks along the step so
//! the penalized objective never increases. The path is fitted from `λ_max`
//! downwards with warm starts. Coefficients are reported on the original scale.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::datamodel::Dataset;
use crate::par;
use crate::preprocess::{logratio_design, DesignMode, LogRatioDesign, PairIndex, DEFAULT_MAX_CELLS};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnetConfig {
    /// Mixing weight of the L1 part, in `[0, 1]`.
    pub alpha: f64,
    /// Strictly descending, non-negative. Generated when absent.
    pub lambda_path: Option<Vec<f64>>,
    pub nlambda: usize,
    pub lambda_min_ratio: f64,
    /// Outer (Newton) iterations per λ.
    pub max_iter: usize,
    /// Convergence threshold on the largest standardized coefficient change.
    pub tol: f64,
    /// 0 disables cross-validation.
    pub cv_folds: usize,
    pub seed: u64,
    pub workers: usize,
}

impl Default for EnetConfig {
    fn default() -> Self {
        EnetConfig {
            alpha: 0.5,
            lambda_path: None,
            nlambda: 100,
            lambda_min_ratio: 1e-3,
            max_iter: 100,
            tol: 1e-7,
            cv_folds: 0,
            seed: 0,
            workers: 0,
        }
    }
}

/// `α` used in the `λ_max` bound when the penalty is pure ridge.
pub const RIDGE_ALPHA_FLOOR: f64 = 1e-3;
const MAX_INNER_SWEEPS: usize = 10_000;
const MIN_WEIGHT: f64 = 1e-5;
const MAX_REFOLDS: usize = 10;

impl EnetConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        if let Some(path) = &self.lambda_path {
            if path.is_empty() {
                return Err(Error::Config("empty lambda path".into()));
            }
            if path.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
                return Err(Error::Config("lambda values must be finite and non-negative".into()));
            }
            if path.windows(2).any(|w| w[1] >= w[0]) {
                return Err(Error::Config("lambda path must be strictly descending".into()));
            }
        } else {
            if self.nlambda == 0 {
                return Err(Error::Config("nlambda must be positive".into()));
            }
            if !(self.lambda_min_ratio > 0.0 && self.lambda_min_ratio < 1.0) {
                return Err(Error::Config(format!(
                    "lambda-min-ratio must lie in (0, 1), got {}",
                    self.lambda_min_ratio
                )));
            }
        }
        if self.max_iter == 0 || self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::Config("max-iter and tol must be positive".into()));
        }
        if self.cv_folds == 1 {
            return Err(Error::Config("cv-folds must be 0 or at least 2".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairCoefficient {
    pub j: usize,
    pub j_prime: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnetFit {
    pub lambda: f64,
    pub alpha: f64,
    pub intercept: f64,
    /// Non-zero `θ_jj′` on the original log-ratio scale.
    pub theta: Vec<PairCoefficient>,
    pub nonzero_pairs: Vec<PairIndex>,
    /// Per-feature log-contrast weights `Σ_{j′>j} θ_jj′ − Σ_{j′<j} θ_j′j`.
    pub alpha_contrast: Vec<f64>,
    pub deviance: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Penalized objective after every accepted outer step, starting from the
    /// warm start.
    pub objective_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnetPath {
    pub feature_ids: Vec<String>,
    /// Class whose log-odds the model describes.
    pub positive_class: String,
    pub lambda_max: f64,
    /// Set when `α = 0` and `λ_max` used [`RIDGE_ALPHA_FLOOR`].
    pub lambda_max_fallback: bool,
    pub fits: Vec<EnetFit>,
}

/// Standardized view of a log-ratio design (population standard deviation).
struct Standardized<'a> {
    design: &'a LogRatioDesign,
    mean: Vec<f64>,
    sd: Vec<f64>,
    cache: Option<Vec<f64>>,
}

impl<'a> Standardized<'a> {
    fn new(design: &'a LogRatioDesign) -> Self {
        let n = design.n_rows();
        let p = design.n_columns();
        let mut mean = vec![0.0; p];
        let mut sd = vec![0.0; p];
        let mut buf = vec![0.0; n];
        let mut cache = design.is_materialized().then(|| Vec::with_capacity(n * p));
        for k in 0..p {
            design.column_into(k, &mut buf);
            let mu = buf.iter().sum::<f64>() / n as f64;
            let var = buf.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n as f64;
            let s = var.sqrt();
            // Columns that are constant up to rounding carry no information.
            let s = if s > 1e-12 * (1.0 + mu.abs()) { s } else { 0.0 };
            mean[k] = mu;
            sd[k] = s;
            if let Some(c) = cache.as_mut() {
                c.extend(buf.iter().map(|v| if s > 0.0 { (v - mu) / s } else { 0.0 }));
            }
        }
        Standardized {
            design,
            mean,
            sd,
            cache,
        }
    }

    fn n(&self) -> usize {
        self.design.n_rows()
    }

    fn p(&self) -> usize {
        self.sd.len()
    }

    fn column<'b>(&'b self, k: usize, buf: &'b mut [f64]) -> &'b [f64] {
        let n = self.n();
        if let Some(c) = &self.cache {
            return &c[k * n..(k + 1) * n];
        }
        self.design.column_into(k, buf);
        let (mu, s) = (self.mean[k], self.sd[k]);
        for v in buf.iter_mut() {
            *v = if s > 0.0 { (*v - mu) / s } else { 0.0 };
        }
        buf
    }

    fn linear_predictor(&self, b0: f64, beta: &[f64]) -> Vec<f64> {
        let mut eta = vec![b0; self.n()];
        let mut buf = vec![0.0; self.n()];
        for (k, &b) in beta.iter().enumerate() {
            if b != 0.0 {
                for (e, x) in eta.iter_mut().zip(self.column(k, &mut buf)) {
                    *e += b * x;
                }
            }
        }
        eta
    }

    /// `x̃_kᵀ(y − p)/n` for every column.
    fn score(&self, y: &[f64], eta: &[f64]) -> Vec<f64> {
        let n = self.n();
        let resid: Vec<f64> = y.iter().zip(eta).map(|(yi, e)| yi - sigmoid(*e)).collect();
        let mut buf = vec![0.0; n];
        (0..self.p())
            .map(|k| {
                let col = self.column(k, &mut buf);
                col.iter().zip(&resid).map(|(x, r)| x * r).sum::<f64>() / n as f64
            })
            .collect()
    }
}

fn sigmoid(e: f64) -> f64 {
    if e >= 0.0 {
        1.0 / (1.0 + (-e).exp())
    } else {
        let z = e.exp();
        z / (1.0 + z)
    }
}

fn softplus(e: f64) -> f64 {
    if e > 0.0 {
        e + (-e).exp().ln_1p()
    } else {
        e.exp().ln_1p()
    }
}

fn soft_threshold(g: f64, t: f64) -> f64 {
    if g > t {
        g - t
    } else if g < -t {
        g + t
    } else {
        0.0
    }
}

/// Binomial deviance `−2·loglik`.
fn deviance(eta: &[f64], y: &[f64]) -> f64 {
    2.0 * eta.iter().zip(y).map(|(e, yi)| softplus(*e) - yi * e).sum::<f64>()
}

fn objective(eta: &[f64], y: &[f64], beta: &[f64], l1: f64, l2: f64) -> f64 {
    let n = y.len() as f64;
    let (sq, abs) = beta.iter().fold((0.0, 0.0), |(s, a), b| (s + b * b, a + b.abs()));
    deviance(eta, y) / (2.0 * n) + 0.5 * l2 * sq + l1 * abs
}

struct Solution {
    converged: bool,
    iterations: usize,
    trace: Vec<f64>,
    eta: Vec<f64>,
}

/// Coordinate descent on the weighted least-squares subproblem. `r` holds
/// the working residual `z − η` and is kept current.
#[allow(clippy::too_many_arguments)]
fn coordinate_descent(
    x: &Standardized<'_>,
    w: &[f64],
    r: &mut [f64],
    b0: &mut f64,
    beta: &mut [f64],
    l1: f64,
    l2: f64,
    tol: f64,
) {
    let n = x.n();
    let nf = n as f64;
    let p = x.p();
    let sum_w: f64 = w.iter().sum();
    let mut xv = vec![f64::NAN; p];
    let mut buf = vec![0.0; n];

    let mut sweep = |coords: &mut dyn Iterator<Item = usize>, b0: &mut f64, beta: &mut [f64], r: &mut [f64]| {
        let shift = w.iter().zip(r.iter()).map(|(wi, ri)| wi * ri).sum::<f64>() / sum_w;
        *b0 += shift;
        for ri in r.iter_mut() {
            *ri -= shift;
        }
        let mut max_change = shift.abs();
        for k in coords {
            if x.sd[k] == 0.0 {
                continue;
            }
            let col = x.column(k, &mut buf);
            if xv[k].is_nan() {
                xv[k] = col.iter().zip(w).map(|(c, wi)| wi * c * c).sum::<f64>() / nf;
            }
            let denom = xv[k] + l2;
            if denom <= 0.0 {
                continue;
            }
            let old = beta[k];
            let g = col
                .iter()
                .zip(w)
                .zip(r.iter())
                .map(|((c, wi), ri)| wi * c * ri)
                .sum::<f64>()
                / nf
                + xv[k] * old;
            let new = soft_threshold(g, l1) / denom;
            if new != old {
                let d = new - old;
                for (ri, c) in r.iter_mut().zip(col) {
                    *ri -= d * c;
                }
                beta[k] = new;
                max_change = max_change.max(d.abs());
            }
        }
        max_change
    };

    let mut sweeps = 0;
    while sweeps < MAX_INNER_SWEEPS {
        sweeps += 1;
        if sweep(&mut (0..p), b0, beta, r) < tol {
            break;
        }
        let active: Vec<usize> = (0..p).filter(|&k| beta[k] != 0.0).collect();
        while sweeps < MAX_INNER_SWEEPS {
            sweeps += 1;
            if sweep(&mut active.iter().copied(), b0, beta, r) < tol {
                break;
            }
        }
    }
}

/// Fits one λ starting from (and updating) the warm start `(b0, beta)`.
#[allow(clippy::too_many_arguments)]
fn fit_lambda(
    x: &Standardized<'_>,
    y: &[f64],
    lambda: f64,
    alpha: f64,
    max_iter: usize,
    tol: f64,
    b0: &mut f64,
    beta: &mut [f64],
) -> Solution {
    let n = x.n();
    let l1 = lambda * alpha;
    let l2 = lambda * (1.0 - alpha);
    let mut eta = x.linear_predictor(*b0, beta);
    let mut trace = vec![objective(&eta, y, beta, l1, l2)];
    if beta.iter().all(|&b| b == 0.0) && null_is_optimal(x, y, &eta, l1) {
        return Solution {
            converged: true,
            iterations: 0,
            trace,
            eta,
        };
    }
    let mut converged = false;
    let mut iterations = 0;
    let mut w = vec![0.0; n];
    let mut r0 = vec![0.0; n];
    while iterations < max_iter {
        iterations += 1;
        for i in 0..n {
            let p = sigmoid(eta[i]);
            w[i] = (p * (1.0 - p)).max(MIN_WEIGHT);
            r0[i] = (y[i] - p) / w[i];
        }
        let mut r = r0.clone();
        let mut nb0 = *b0;
        let mut nbeta = beta.to_vec();
        coordinate_descent(x, &w, &mut r, &mut nb0, &mut nbeta, l1, l2, tol * 0.1);

        let d_eta: Vec<f64> = r0.iter().zip(&r).map(|(a, b)| a - b).collect();
        let step = nbeta
            .iter()
            .zip(beta.iter())
            .map(|(a, b)| (a - b).abs())
            .fold((nb0 - *b0).abs(), f64::max);
        let f_old = *trace.last().expect("trace starts non-empty");
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand_eta: Vec<f64> = eta.iter().zip(&d_eta).map(|(e, d)| e + t * d).collect();
            let cand_beta: Vec<f64> = beta.iter().zip(&nbeta).map(|(b, nb)| b + t * (nb - b)).collect();
            let f = objective(&cand_eta, y, &cand_beta, l1, l2);
            if f <= f_old {
                accepted = Some((cand_eta, cand_beta, f));
                break;
            }
            t *= 0.5;
        }
        let Some((cand_eta, cand_beta, f)) = accepted else {
            // No decrease along the Newton direction: numerically stationary.
            converged = step < tol.sqrt();
            break;
        };
        *b0 += t * (nb0 - *b0);
        beta.copy_from_slice(&cand_beta);
        eta = cand_eta;
        trace.push(f);
        if t * step < tol {
            converged = true;
            break;
        }
    }
    Solution {
        converged,
        iterations,
        trace,
        eta,
    }
}

/// KKT check for the all-zero solution, with the intercept at its optimum.
fn null_is_optimal(x: &Standardized<'_>, y: &[f64], eta: &[f64], l1: f64) -> bool {
    let n = y.len() as f64;
    let intercept_grad = y.iter().zip(eta).map(|(yi, e)| yi - sigmoid(*e)).sum::<f64>() / n;
    if intercept_grad.abs() > 1e-12 {
        return false;
    }
    let g = x.score(y, eta);
    g.iter().all(|v| v.abs() <= l1 * (1.0 + 1e-9))
}

fn lambda_max(x: &Standardized<'_>, y: &[f64], alpha: f64) -> f64 {
    let ybar = y.iter().sum::<f64>() / y.len() as f64;
    let b0 = (ybar / (1.0 - ybar)).ln();
    let eta = vec![b0; y.len()];
    let g = x.score(y, &eta);
    g.iter().fold(0.0, |a: f64, v| a.max(v.abs())) / alpha
}

fn lambda_sequence(lmax: f64, cfg: &EnetConfig) -> Vec<f64> {
    if let Some(path) = &cfg.lambda_path {
        return path.clone();
    }
    let k = cfg.nlambda;
    if k == 1 || lmax == 0.0 {
        return vec![lmax];
    }
    let lo = (lmax * cfg.lambda_min_ratio).ln();
    let hi = lmax.ln();
    (0..k)
        .map(|i| (hi + (lo - hi) * i as f64 / (k - 1) as f64).exp())
        .collect()
}

fn binary_response(ds: &Dataset) -> Result<Vec<f64>> {
    let labels = ds.labels();
    if labels.n_classes() != 2 {
        return Err(Error::Invalid(format!(
            "the penalized model needs exactly 2 classes, got {}",
            labels.n_classes()
        )));
    }
    Ok(labels.y().iter().map(|&c| if c == 0 { 1.0 } else { 0.0 }).collect())
}

struct RawPath {
    lambda_max: f64,
    fallback: bool,
    fits: Vec<EnetFit>,
}

fn fit_path_on(design: &LogRatioDesign, y: &[f64], lambdas: Option<&[f64]>, cfg: &EnetConfig) -> Result<RawPath> {
    let x = Standardized::new(design);
    let ybar = y.iter().sum::<f64>() / y.len() as f64;
    if ybar <= 0.0 || ybar >= 1.0 {
        return Err(Error::SingleClass("penalized fit needs both classes".into()));
    }
    let fallback = cfg.alpha == 0.0;
    let alpha_bound = if fallback { RIDGE_ALPHA_FLOOR } else { cfg.alpha };
    let lmax = lambda_max(&x, y, alpha_bound);
    let lambdas = match lambdas {
        Some(l) => l.to_vec(),
        None => lambda_sequence(lmax, cfg),
    };

    let m = design.n_features();
    let pairs = design.pairs();
    let mut b0 = (ybar / (1.0 - ybar)).ln();
    let mut beta = vec![0.0; x.p()];
    let mut fits = Vec::with_capacity(lambdas.len());
    for &lambda in &lambdas {
        let sol = fit_lambda(&x, y, lambda, cfg.alpha, cfg.max_iter, cfg.tol, &mut b0, &mut beta);
        if !sol.converged {
            log::warn!("elastic net did not converge at lambda = {lambda:e}");
        }
        let mut intercept = b0;
        let mut theta = Vec::new();
        let mut alpha_contrast = vec![0.0; m];
        for (k, &b) in beta.iter().enumerate() {
            if b != 0.0 {
                let value = b / x.sd[k];
                intercept -= value * x.mean[k];
                let p = pairs[k];
                theta.push(PairCoefficient {
                    j: p.j,
                    j_prime: p.j_prime,
                    value,
                });
                alpha_contrast[p.j] += value;
                alpha_contrast[p.j_prime] -= value;
            }
        }
        fits.push(EnetFit {
            lambda,
            alpha: cfg.alpha,
            intercept,
            nonzero_pairs: theta
                .iter()
                .map(|t| PairIndex {
                    j: t.j,
                    j_prime: t.j_prime,
                })
                .collect(),
            theta,
            alpha_contrast,
            deviance: deviance(&sol.eta, y),
            converged: sol.converged,
            iterations: sol.iterations,
            objective_trace: sol.trace,
        });
    }
    Ok(RawPath {
        lambda_max: lmax,
        fallback,
        fits,
    })
}

/// Fits the whole λ path on a two-class dataset. Covariates are not part of
/// the penalized model.
pub fn fit_enet_logistic(ds: &Dataset, cfg: &EnetConfig) -> Result<EnetPath> {
    cfg.validate()?;
    let y = binary_response(ds)?;
    let design = logratio_design(ds.composition(), DesignMode::Auto, DEFAULT_MAX_CELLS)?;
    let raw = fit_path_on(&design, &y, None, cfg)?;
    Ok(EnetPath {
        feature_ids: ds.composition().feature_ids().to_vec(),
        positive_class: ds.labels().class_names()[0].clone(),
        lambda_max: raw.lambda_max,
        lambda_max_fallback: raw.fallback,
        fits: raw.fits,
    })
}

/// Linear predictor of a fit on a composition's log-ratio design.
pub fn predict_link(fit: &EnetFit, design: &LogRatioDesign) -> Vec<f64> {
    let mut eta = vec![fit.intercept; design.n_rows()];
    let m = design.n_features();
    let mut buf = vec![0.0; design.n_rows()];
    for t in &fit.theta {
        let k = crate::preprocess::pair_position(
            PairIndex {
                j: t.j,
                j_prime: t.j_prime,
            },
            m,
        );
        design.column_into(k, &mut buf);
        for (e, x) in eta.iter_mut().zip(&buf) {
            *e += t.value * x;
        }
    }
    eta
}

/// Largest violation of the penalized stationarity conditions, on the
/// standardized scale: `|g_k| − λα` for zero coefficients and
/// `|g_k − λ(1−α)β̃_k − λα·sign(β̃_k)|` otherwise, where `g = x̃ᵀ(y − p)/n`.
pub fn kkt_max_violation(fit: &EnetFit, ds: &Dataset) -> Result<f64> {
    let y = binary_response(ds)?;
    let design = logratio_design(ds.composition(), DesignMode::Auto, DEFAULT_MAX_CELLS)?;
    let x = Standardized::new(&design);
    let m = design.n_features();
    let mut beta = vec![0.0; x.p()];
    for t in &fit.theta {
        let k = crate::preprocess::pair_position(
            PairIndex {
                j: t.j,
                j_prime: t.j_prime,
            },
            m,
        );
        beta[k] = t.value * x.sd[k];
    }
    let eta = predict_link(fit, &design);
    let g = x.score(&y, &eta);
    let l1 = fit.lambda * fit.alpha;
    let l2 = fit.lambda * (1.0 - fit.alpha);
    let mut worst = 0.0f64;
    for k in 0..x.p() {
        if x.sd[k] == 0.0 {
            continue;
        }
        let v = if beta[k] == 0.0 {
            g[k].abs() - l1
        } else {
            (g[k] - l2 * beta[k] - l1 * beta[k].signum()).abs()
        };
        worst = worst.max(v);
    }
    let intercept_grad = y.iter().zip(&eta).map(|(yi, e)| yi - sigmoid(*e)).sum::<f64>() / y.len() as f64;
    Ok(worst.max(intercept_grad.abs()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CvResult {
    pub folds: usize,
    pub lambdas: Vec<f64>,
    /// Mean held-out deviance per sample.
    pub mean_deviance: Vec<f64>,
    pub se_deviance: Vec<f64>,
    pub lambda_min: f64,
    pub lambda_1se: f64,
    pub index_min: usize,
    pub index_1se: usize,
    /// Fold assignments that were rejected before one passed.
    pub refolds: usize,
}

/// Stratified fold index for every sample, or `None` if some training or
/// held-out fold lacks a class.
fn assign_folds(y: &[f64], k: usize, rng: &mut ChaCha8Rng) -> Option<Vec<usize>> {
    let mut fold = vec![0; y.len()];
    let mut offset = 0;
    for class in [1.0, 0.0] {
        let mut members: Vec<usize> = (0..y.len()).filter(|&i| y[i] == class).collect();
        members.shuffle(rng);
        for (r, &i) in members.iter().enumerate() {
            fold[i] = (offset + r) % k;
        }
        offset += members.len();
    }
    let ok = (0..k).all(|f| {
        let mut held = [false; 2];
        let mut train = [false; 2];
        for (i, &fi) in fold.iter().enumerate() {
            let c = usize::from(y[i] == 1.0);
            if fi == f {
                held[c] = true;
            } else {
                train[c] = true;
            }
        }
        held == [true, true] && train == [true, true]
    });
    ok.then_some(fold)
}

/// Chooses `(index_min, index_1se)` from a CV curve over a descending λ path.
/// Ties go to the larger λ.
pub fn select_from_curve(mean: &[f64], se: &[f64]) -> Result<(usize, usize)> {
    if mean.is_empty() || mean.len() != se.len() {
        return Err(Error::Dimension("cross-validation curve is empty or ragged".into()));
    }
    let mut best = 0;
    for (i, &v) in mean.iter().enumerate() {
        if v < mean[best] {
            best = i;
        }
    }
    let bound = mean[best] + se[best];
    let one_se = (0..=best).find(|&i| mean[i] <= bound).unwrap_or(best);
    Ok((best, one_se))
}

/// Stratified K-fold cross-validated deviance along the path's λ values.
/// Returns `None` when `cfg.cv_folds == 0`.
pub fn cv_select_lambda(path: &EnetPath, ds: &Dataset, cfg: &EnetConfig) -> Result<Option<CvResult>> {
    if cfg.cv_folds == 0 {
        return Ok(None);
    }
    cfg.validate()?;
    let k = cfg.cv_folds;
    let y = binary_response(ds)?;
    if k > y.len() {
        return Err(Error::Config(format!("{k} folds for {} samples", y.len())));
    }
    let design = logratio_design(ds.composition(), DesignMode::Auto, DEFAULT_MAX_CELLS)?;
    let lambdas: Vec<f64> = path.fits.iter().map(|f| f.lambda).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut assignment = None;
    let mut refolds = 0;
    for _ in 0..MAX_REFOLDS {
        if let Some(f) = assign_folds(&y, k, &mut rng) {
            assignment = Some(f);
            break;
        }
        refolds += 1;
    }
    let Some(fold) = assignment else {
        return Err(Error::Invalid(format!(
            "could not form {k} folds that all contain both classes in {MAX_REFOLDS} attempts"
        )));
    };

    let per_fold = par::map_indexed(k, cfg.workers, |f| -> Result<Vec<f64>> {
        let train: Vec<usize> = (0..y.len()).filter(|&i| fold[i] != f).collect();
        let test: Vec<usize> = (0..y.len()).filter(|&i| fold[i] == f).collect();
        let y_train: Vec<f64> = train.iter().map(|&i| y[i]).collect();
        let y_test: Vec<f64> = test.iter().map(|&i| y[i]).collect();
        let raw = fit_path_on(&design.select_rows(&train), &y_train, Some(&lambdas), cfg)?;
        let test_design = design.select_rows(&test);
        Ok(raw
            .fits
            .iter()
            .map(|fit| deviance(&predict_link(fit, &test_design), &y_test) / test.len() as f64)
            .collect())
    });
    let per_fold = per_fold.into_iter().collect::<Result<Vec<_>>>()?;

    let kf = k as f64;
    let mut mean_deviance = Vec::with_capacity(lambdas.len());
    let mut se_deviance = Vec::with_capacity(lambdas.len());
    for l in 0..lambdas.len() {
        let vals: Vec<f64> = per_fold.iter().map(|f| f[l]).collect();
        let mu = vals.iter().sum::<f64>() / kf;
        let var = vals.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / (kf - 1.0);
        mean_deviance.push(mu);
        se_deviance.push((var / kf).sqrt());
    }
    let (index_min, index_1se) = select_from_curve(&mean_deviance, &se_deviance)?;
    Ok(Some(CvResult {
        folds: k,
        lambda_min: lambdas[index_min],
        lambda_1se: lambdas[index_1se],
        lambdas,
        mean_deviance,
        se_deviance,
        index_min,
        index_1se,
        refolds,
    }))
}

/// Support of a fit as feature-id pairs.
pub fn support_ids(path: &EnetPath, fit: &EnetFit) -> Vec<(String, String)> {
    fit.nonzero_pairs
        .iter()
        .map(|p| (path.feature_ids[p.j].clone(), path.feature_ids[p.j_prime].clone()))
        .collect()
}

/// Number of fits in which each pair is non-zero.
pub fn selection_counts(path: &EnetPath) -> BTreeMap<PairIndex, usize> {
    let mut out = BTreeMap::new();
    for fit in &path.fits {
        for &p in &fit.nonzero_pairs {
            *out.entry(p).or_insert(0) += 1;
        }
    }
    out
}
