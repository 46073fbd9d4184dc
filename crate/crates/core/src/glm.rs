//! Baseline-category multinomial logistic regression on one log-ratio plus
//! optional covariates, fitted by Newton–Raphson with step halving.
//!
//! For classes `c = 0..C−1` (the last class is the baseline),
//! `P(Y = c) ∝ exp(b0_c + b1_c·z + xᵀg_c)` with the baseline linear predictor
//! fixed at zero. The predictor and covariates are centred and scaled
//! internally; reported coefficients are on the original scale.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GlmOptions {
    pub max_iter: usize,
    /// Relative log-likelihood change below which the fit may stop.
    pub tol: f64,
    /// Largest gradient component allowed at convergence.
    pub grad_tol: f64,
    /// Any standardized slope or covariate coefficient beyond this magnitude
    /// is taken as (quasi-)complete separation and stops the fit.
    pub separation_threshold: f64,
}

impl Default for GlmOptions {
    fn default() -> Self {
        GlmOptions {
            max_iter: 100,
            tol: 1e-8,
            grad_tol: 1e-6,
            separation_threshold: 30.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GlmSpec<'a> {
    pub predictor: &'a [f64],
    pub covariates: ArrayView2<'a, f64>,
    /// Class index of every sample, `0..n_classes`.
    pub labels: &'a [usize],
    pub n_classes: usize,
    pub options: GlmOptions,
}

#[derive(Debug, Clone)]
pub struct GlmFit {
    /// `(C−1) × (2 + p)`: intercept, slope on the predictor, covariate
    /// coefficients, one row per non-baseline class.
    pub coefficients: Array2<f64>,
    pub fitted_probs: Array2<f64>,
    /// `ln` of `fitted_probs`, computed without cancellation. Preferred over
    /// the probabilities for ranking because it does not saturate at 1.
    pub log_probs: Array2<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub log_likelihood: f64,
    pub separation_flag: bool,
    /// Largest diagonal jitter added to the Newton system, 0 if none.
    pub ridge_jitter: f64,
    /// Max-norm of the score (standardized scale) at the returned iterate.
    pub gradient_max_norm: f64,
    /// Log-likelihood after each accepted step, starting at the initial value.
    pub ll_trace: Vec<f64>,
    /// Fewer samples than `C·(2+p)`.
    pub underdetermined: bool,
}

struct Column {
    values: Vec<f64>,
    /// Position among the `2 + p` reported columns.
    slot: usize,
    mean: f64,
    scale: f64,
}

struct Eval {
    ll: f64,
    /// n × C, row-major.
    log_probs: Vec<f64>,
}

fn standardize(values: &[f64], slot: usize) -> Option<Column> {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let scale = var.sqrt();
    if scale.is_nan() || scale <= 1e-12 * mean.abs().max(1.0) {
        return None;
    }
    Some(Column {
        values: values.iter().map(|v| (v - mean) / scale).collect(),
        slot,
        mean,
        scale,
    })
}

fn evaluate(cols: &[Column], beta: &[f64], labels: &[usize], n_classes: usize) -> Eval {
    let n = labels.len();
    let k = n_classes - 1;
    let d = cols.len() + 1;
    let mut log_probs = vec![0.0; n * n_classes];
    let mut eta = vec![0.0; k];
    let mut ll = 0.0;
    for i in 0..n {
        let mut mx = 0.0f64;
        for (c, e) in eta.iter_mut().enumerate() {
            let b = &beta[c * d..(c + 1) * d];
            let mut s = b[0];
            for (a, col) in cols.iter().enumerate() {
                s += b[a + 1] * col.values[i];
            }
            *e = s;
            mx = mx.max(s);
        }
        let mut acc = (-mx).exp();
        for e in &eta {
            acc += (e - mx).exp();
        }
        let lse = mx + acc.ln();
        let row = &mut log_probs[i * n_classes..(i + 1) * n_classes];
        for c in 0..k {
            row[c] = eta[c] - lse;
        }
        row[k] = -lse;
        ll += row[labels[i]];
    }
    Eval { ll, log_probs }
}

/// Score vector and negative Hessian of the log-likelihood.
fn score_and_information(
    cols: &[Column],
    ev: &Eval,
    labels: &[usize],
    n_classes: usize,
) -> (DVector<f64>, DMatrix<f64>) {
    let k = n_classes - 1;
    let d = cols.len() + 1;
    let q = k * d;
    let mut grad = DVector::zeros(q);
    let mut info = DMatrix::zeros(q, q);
    let mut x = vec![1.0; d];
    let mut p = vec![0.0; k];
    for (i, &label) in labels.iter().enumerate() {
        for (a, col) in cols.iter().enumerate() {
            x[a + 1] = col.values[i];
        }
        for (c, pc) in p.iter_mut().enumerate() {
            *pc = ev.log_probs[i * n_classes + c].exp();
        }
        for c in 0..k {
            let resid = f64::from(u8::from(label == c)) - p[c];
            for a in 0..d {
                grad[c * d + a] += x[a] * resid;
            }
            for c2 in c..k {
                let w = if c == c2 { p[c] * (1.0 - p[c]) } else { -p[c] * p[c2] };
                if w == 0.0 {
                    continue;
                }
                for a in 0..d {
                    let wa = w * x[a];
                    for b in 0..d {
                        info[(c * d + a, c2 * d + b)] += wa * x[b];
                    }
                }
            }
        }
    }
    for r in 0..q {
        for s in 0..r {
            info[(r, s)] = info[(s, r)];
        }
    }
    (grad, info)
}

fn newton_direction(info: &DMatrix<f64>, grad: &DVector<f64>, jitter_used: &mut f64) -> Option<DVector<f64>> {
    if let Some(ch) = info.clone().cholesky() {
        return Some(ch.solve(grad));
    }
    let scale = info.diagonal().iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let mut jitter = 1e-8;
    for _ in 0..12 {
        let mut m = info.clone();
        for r in 0..m.nrows() {
            m[(r, r)] += jitter * scale;
        }
        if let Some(ch) = m.cholesky() {
            *jitter_used = jitter_used.max(jitter * scale);
            return Some(ch.solve(grad));
        }
        jitter *= 10.0;
    }
    None
}

/// Maximum-likelihood fit of the baseline-category logit model.
///
/// Quasi-complete separation is not an error: the fit stops with
/// `separation_flag` set and the last iterate's probabilities, which still
/// order samples correctly for rank-based scoring.
pub fn fit_multinomial(spec: &GlmSpec<'_>) -> Result<GlmFit> {
    let n = spec.labels.len();
    let c = spec.n_classes;
    if c < 2 {
        return Err(Error::Invalid(format!("need at least 2 classes, got {c}")));
    }
    if spec.predictor.len() != n || spec.covariates.nrows() != n {
        return Err(Error::Dimension(format!(
            "{n} labels, {} predictor values, {} covariate rows",
            spec.predictor.len(),
            spec.covariates.nrows()
        )));
    }
    if spec.predictor.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite predictor value".into()));
    }
    let mut counts = vec![0usize; c];
    for &y in spec.labels {
        if y >= c {
            return Err(Error::Invalid(format!("label {y} out of range for {c} classes")));
        }
        counts[y] += 1;
    }
    if let Some(empty) = counts.iter().position(|&k| k == 0) {
        return Err(Error::EmptyClass(format!("class index {empty}")));
    }
    let p = spec.covariates.ncols();
    let opts = spec.options;

    let mut cols = Vec::with_capacity(1 + p);
    cols.extend(standardize(spec.predictor, 1));
    for a in 0..p {
        let v: Vec<f64> = spec.covariates.column(a).to_vec();
        cols.extend(standardize(&v, 2 + a));
    }
    let k = c - 1;
    let d = cols.len() + 1;

    let mut beta = vec![0.0; k * d];
    for cl in 0..k {
        beta[cl * d] = (counts[cl] as f64 / counts[k] as f64).ln();
    }
    let mut state = evaluate(&cols, &beta, spec.labels, c);
    let mut ll_trace = vec![state.ll];
    let mut converged = false;
    let mut separation = false;
    let mut jitter = 0.0;
    let mut iterations = 0;
    let mut prev_ll: Option<f64> = None;
    let mut grad_norm;

    loop {
        let (grad, info) = score_and_information(&cols, &state, spec.labels, c);
        grad_norm = grad.amax();
        let small_change = prev_ll.is_none_or(|prev| (state.ll - prev).abs() <= opts.tol * (prev.abs() + opts.tol));
        if grad_norm <= opts.grad_tol && small_change {
            converged = true;
            break;
        }
        if separation || iterations >= opts.max_iter {
            break;
        }
        let Some(step) = newton_direction(&info, &grad, &mut jitter) else {
            break;
        };
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..=20 {
            let cand: Vec<f64> = beta.iter().zip(step.iter()).map(|(b, s)| b + t * s).collect();
            let ev = evaluate(&cols, &cand, spec.labels, c);
            if ev.ll.is_finite() && ev.ll >= state.ll {
                accepted = Some((cand, ev));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, ev)) = accepted else {
            // No ascent possible at working precision.
            converged = grad_norm <= opts.grad_tol;
            break;
        };
        iterations += 1;
        prev_ll = Some(state.ll);
        beta = cand;
        state = ev;
        ll_trace.push(state.ll);
        separation = (0..k).any(|cl| {
            beta[cl * d + 1..(cl + 1) * d]
                .iter()
                .any(|b| b.abs() > opts.separation_threshold)
        });
    }
    if separation {
        converged = false;
    }

    let mut coefficients = Array2::zeros((k, 2 + p));
    for cl in 0..k {
        let b = &beta[cl * d..(cl + 1) * d];
        let mut intercept = b[0];
        for (a, col) in cols.iter().enumerate() {
            let slope = b[a + 1] / col.scale;
            coefficients[[cl, col.slot]] = slope;
            intercept -= slope * col.mean;
        }
        coefficients[[cl, 0]] = intercept;
    }
    let log_probs = Array2::from_shape_vec((n, c), state.log_probs).expect("n × C buffer");
    let fitted_probs = log_probs.mapv(f64::exp);

    Ok(GlmFit {
        coefficients,
        fitted_probs,
        log_probs,
        converged,
        iterations,
        log_likelihood: state.ll,
        separation_flag: separation,
        ridge_jitter: jitter,
        gradient_max_norm: grad_norm,
        ll_trace,
        underdetermined: n <= c * (2 + p),
    })
}

/// Fitted class probabilities, `n × C`.
pub fn class_scores(fit: &GlmFit) -> &Array2<f64> {
    &fit.fitted_probs
}

/// Probability of the first class, the positive class of a binary contrast.
pub fn binary_score(fit: &GlmFit) -> Vec<f64> {
    fit.fitted_probs.column(0).to_vec()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn fit(z: &[f64], x: &Array2<f64>, y: &[usize], c: usize) -> GlmFit {
        fit_multinomial(&GlmSpec {
            predictor: z,
            covariates: x.view(),
            labels: y,
            n_classes: c,
            options: GlmOptions::default(),
        })
        .unwrap()
    }

    fn no_cov(n: usize) -> Array2<f64> {
        Array2::zeros((n, 0))
    }

    /// Independent check: the score of the log-likelihood, by central
    /// differences on the original-scale coefficients.
    fn numeric_gradient(z: &[f64], y: &[usize], coef: &Array2<f64>) -> Vec<f64> {
        let ll = |b0: f64, b1: f64| -> f64 {
            z.iter()
                .zip(y)
                .map(|(zi, yi)| {
                    let eta = b0 + b1 * zi;
                    let lse = if eta > 0.0 {
                        eta + (-eta).exp().ln_1p()
                    } else {
                        eta.exp().ln_1p()
                    };
                    if *yi == 0 {
                        eta - lse
                    } else {
                        -lse
                    }
                })
                .sum()
        };
        let (b0, b1) = (coef[[0, 0]], coef[[0, 1]]);
        let h = 1e-6;
        vec![
            (ll(b0 + h, b1) - ll(b0 - h, b1)) / (2.0 * h),
            (ll(b0, b1 + h) - ll(b0, b1 - h)) / (2.0 * h),
        ]
    }

    #[test]
    fn separable_four_points() {
        let z = [-1.0, -0.5, 0.5, 1.0];
        let y = [0, 0, 1, 1];
        let f = fit(&z, &no_cov(4), &y, 2);
        assert!(f.separation_flag);
        assert!(!f.converged);
        let p: Vec<f64> = binary_score(&f);
        for w in p.windows(2) {
            assert!(w[0] > w[1], "class-0 probability must fall with z: {p:?}");
        }
        let lp = f.log_probs.column(0).to_vec();
        for w in lp.windows(2) {
            assert!(w[0] > w[1]);
        }
        // Not a stationary point: the likelihood keeps rising along the slope.
        let g = numeric_gradient(&z, &y, &f.coefficients);
        assert!(
            g[1] < 0.0,
            "slope gradient at separation should point further out: {g:?}"
        );
        assert!(g[1].abs() < 1e-3);
    }

    #[test]
    fn constant_predictor_gives_intercept_only() {
        let z = [2.0; 6];
        let y = [0, 0, 1, 1, 1, 1];
        let f = fit(&z, &no_cov(6), &y, 2);
        assert!(f.converged);
        assert_eq!(f.coefficients[[0, 1]], 0.0);
        assert!((f.coefficients[[0, 0]] - (2.0f64 / 4.0).ln()).abs() < 1e-12);
        let s = class_scores(&f);
        for r in s.rows() {
            assert_eq!(r.to_vec(), s.row(0).to_vec());
            assert!((r.sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn converged_fit_is_stationary() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 80;
        let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let y: Vec<usize> = z
            .iter()
            .map(|zi: &f64| usize::from(rng.random::<f64>() >= 1.0 / (1.0 + (-0.8 * zi).exp())))
            .collect();
        let f = fit(&z, &no_cov(n), &y, 2);
        assert!(f.converged && !f.separation_flag);
        assert!(f.gradient_max_norm <= 1e-6);
        let g = numeric_gradient(&z, &y, &f.coefficients);
        assert!(g.iter().all(|v| v.abs() < 1e-4), "{g:?}");
        for w in f.ll_trace.windows(2) {
            assert!(w[1] >= w[0]);
        }
        for r in f.fitted_probs.rows() {
            assert!((r.sum() - 1.0).abs() < 1e-10);
            assert!(r.iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }

    #[test]
    fn three_classes_with_covariate_and_baseline_relabel() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 150;
        let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut x = Array2::zeros((n, 1));
        let mut y = vec![0; n];
        for i in 0..n {
            x[[i, 0]] = StandardNormal.sample(&mut rng);
            let e0: f64 = 0.7 * z[i] + 0.3 * x[[i, 0]];
            let e1: f64 = -0.5 * z[i];
            let tot = 1.0 + e0.exp() + e1.exp();
            let u: f64 = rng.random();
            y[i] = if u < e0.exp() / tot {
                0
            } else if u < (e0.exp() + e1.exp()) / tot {
                1
            } else {
                2
            };
        }
        let f = fit(&z, &x, &y, 3);
        assert!(f.converged);
        assert_eq!(f.coefficients.dim(), (2, 3));

        // Swap the two non-baseline classes.
        let y2: Vec<usize> = y.iter().map(|&c| [1, 0, 2][c]).collect();
        let g = fit(&z, &x, &y2, 3);
        for i in 0..n {
            assert!((f.fitted_probs[[i, 0]] - g.fitted_probs[[i, 1]]).abs() < 1e-8);
            assert!((f.fitted_probs[[i, 1]] - g.fitted_probs[[i, 0]]).abs() < 1e-8);
            assert!((f.fitted_probs[[i, 2]] - g.fitted_probs[[i, 2]]).abs() < 1e-8);
        }
        assert!((f.coefficients[[0, 1]] - g.coefficients[[1, 1]]).abs() < 1e-6);
    }

    #[test]
    fn empty_class_and_bad_shapes() {
        let z = [0.0, 1.0, 2.0];
        assert!(matches!(
            fit_multinomial(&GlmSpec {
                predictor: &z,
                covariates: no_cov(3).view(),
                labels: &[0, 0, 0],
                n_classes: 2,
                options: GlmOptions::default(),
            }),
            Err(Error::EmptyClass(_))
        ));
        assert!(fit_multinomial(&GlmSpec {
            predictor: &z[..2],
            covariates: no_cov(3).view(),
            labels: &[0, 1, 0],
            n_classes: 2,
            options: GlmOptions::default(),
        })
        .is_err());
    }

    #[test]
    fn duplicated_covariate_uses_jitter() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 60;
        let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut x = Array2::zeros((n, 2));
        for i in 0..n {
            let v: f64 = StandardNormal.sample(&mut rng);
            x[[i, 0]] = v;
            x[[i, 1]] = v;
        }
        let y: Vec<usize> = (0..n)
            .map(|i| usize::from(z[i] + x[[i, 0]] + rng.random::<f64>() > 0.5))
            .collect();
        let f = fit(&z, &x, &y, 2);
        assert!(f.ridge_jitter > 0.0);
        assert!(f.fitted_probs.iter().all(|p| p.is_finite()));
    }
}
