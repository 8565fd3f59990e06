//! Logistic regression by iteratively reweighted least squares.
//!
//! Each iteration solves `(XᵀWX) δ = Xᵀ(y − μ)` with `W = diag(μ(1 − μ))`,
//! which is the Newton step for the canonical logit link. Steps are halved
//! whenever the log-likelihood would decrease. Standard errors come from the
//! inverse information at the estimate and intervals are Wald (±1.96·SE).

use serde::Serialize;

pub const MAX_ITERATIONS: usize = 50;
/// Convergence threshold on ‖score‖₂ / n.
pub const GRADIENT_TOLERANCE: f64 = 1e-12;
const Z_95: f64 = 1.96;
/// Coefficient magnitude treated as divergence when the fit fails to converge.
const DIVERGENCE_BOUND: f64 = 15.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RegressionError {
    #[error("outcome has a single value; nothing to fit")]
    DegenerateOutcome,
    #[error("outcome and predictor lengths differ ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("predictor contains a non-finite value at row {0}")]
    NonFinitePredictor(usize),
    #[error("information matrix is singular (constant or collinear predictors)")]
    Singular,
    #[error("complete or quasi-complete separation: coefficients diverge (max |β| = {max_abs_coefficient:.1} after {iterations} iterations)")]
    Separation {
        iterations: usize,
        max_abs_coefficient: f64,
    },
    #[error("IRLS did not converge in {iterations} iterations (‖score‖/n = {gradient_norm:e})")]
    NotConverged { iterations: usize, gradient_norm: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub odds_ratio: f64,
    pub odds_ratio_ci_low: f64,
    pub odds_ratio_ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionFit {
    pub n: usize,
    pub coefficients: Vec<Coefficient>,
    pub log_likelihood: f64,
    pub iterations: usize,
    /// ‖score‖₂ / n at the returned estimate.
    pub gradient_norm: f64,
    pub log_likelihood_trace: Vec<f64>,
}

impl RegressionFit {
    pub fn estimates(&self) -> Vec<f64> {
        self.coefficients.iter().map(|c| c.estimate).collect()
    }

    pub fn coefficient(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }
}

/// Fit `logit P(y) = β₀ + β₁·x`.
pub fn fit_logistic(outcome: &[bool], predictor: &[f64]) -> Result<RegressionFit, RegressionError> {
    if outcome.len() != predictor.len() {
        return Err(RegressionError::LengthMismatch(outcome.len(), predictor.len()));
    }
    if let Some(i) = predictor.iter().position(|x| !x.is_finite()) {
        return Err(RegressionError::NonFinitePredictor(i));
    }
    let design: Vec<Vec<f64>> = predictor.iter().map(|&x| vec![1.0, x]).collect();
    fit_design(outcome, &design, &["intercept", "ali"])
}

/// Fit with an explicit design matrix (rows of equal length, one name per column).
pub fn fit_design(
    outcome: &[bool],
    design: &[Vec<f64>],
    names: &[&str],
) -> Result<RegressionFit, RegressionError> {
    let n = outcome.len();
    if design.len() != n {
        return Err(RegressionError::LengthMismatch(n, design.len()));
    }
    let positives = outcome.iter().filter(|&&y| y).count();
    if positives == 0 || positives == n {
        return Err(RegressionError::DegenerateOutcome);
    }
    let p = names.len();
    let y: Vec<f64> = outcome.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();

    let mut beta = vec![0.0; p];
    let mut eval = evaluate(&y, design, &beta);
    let mut trace = vec![eval.log_likelihood];
    let mut iterations = 0;
    while eval.gradient_norm(n) >= GRADIENT_TOLERANCE && iterations < MAX_ITERATIONS {
        iterations += 1;
        let step = cholesky_solve(&eval.information, &eval.score).ok_or(RegressionError::Singular)?;
        let mut scale = 1.0;
        let mut next;
        loop {
            let candidate: Vec<f64> = beta.iter().zip(&step).map(|(b, s)| b + scale * s).collect();
            next = evaluate(&y, design, &candidate);
            // Near the optimum a full step moves the likelihood by less than its
            // rounding error, so only a real decrease triggers halving.
            let slack = 1e-12 * eval.log_likelihood.abs().max(1.0);
            if next.log_likelihood >= eval.log_likelihood - slack || scale < 1e-10 {
                beta = candidate;
                break;
            }
            scale *= 0.5;
        }
        eval = next;
        trace.push(eval.log_likelihood);
    }

    let gradient_norm = eval.gradient_norm(n);
    if gradient_norm >= GRADIENT_TOLERANCE {
        let max_abs = beta.iter().fold(0.0f64, |m, b| m.max(b.abs()));
        return Err(if max_abs > DIVERGENCE_BOUND {
            RegressionError::Separation {
                iterations,
                max_abs_coefficient: max_abs,
            }
        } else {
            RegressionError::NotConverged {
                iterations,
                gradient_norm,
            }
        });
    }

    // Under separation the score vanishes as |β| grows, so convergence alone
    // does not rule it out.
    let max_abs = beta.iter().fold(0.0f64, |m, b| m.max(b.abs()));
    if max_abs > DIVERGENCE_BOUND && eval.saturated {
        return Err(RegressionError::Separation {
            iterations,
            max_abs_coefficient: max_abs,
        });
    }

    let covariance = cholesky_inverse(&eval.information).ok_or(RegressionError::Singular)?;
    let coefficients = names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let se = covariance[j][j].sqrt();
            let est = beta[j];
            let (lo, hi) = (est - Z_95 * se, est + Z_95 * se);
            Coefficient {
                name: name.to_string(),
                estimate: est,
                std_error: se,
                ci_low: lo,
                ci_high: hi,
                odds_ratio: est.exp(),
                odds_ratio_ci_low: lo.exp(),
                odds_ratio_ci_high: hi.exp(),
            }
        })
        .collect();
    Ok(RegressionFit {
        n,
        coefficients,
        log_likelihood: eval.log_likelihood,
        iterations,
        gradient_norm,
        log_likelihood_trace: trace,
    })
}

struct Evaluation {
    log_likelihood: f64,
    score: Vec<f64>,
    information: Vec<Vec<f64>>,
    /// Some fitted probability is numerically 0 or 1.
    saturated: bool,
}

impl Evaluation {
    fn gradient_norm(&self, n: usize) -> f64 {
        self.score.iter().map(|g| g * g).sum::<f64>().sqrt() / n as f64
    }
}

#[allow(clippy::needless_range_loop)]
fn evaluate(y: &[f64], design: &[Vec<f64>], beta: &[f64]) -> Evaluation {
    let p = beta.len();
    let mut ll = 0.0;
    let mut score = vec![0.0; p];
    let mut info = vec![vec![0.0; p]; p];
    let mut saturated = false;
    for (row, &yi) in design.iter().zip(y) {
        let eta: f64 = row.iter().zip(beta).map(|(x, b)| x * b).sum();
        // log(1 + e^eta) without overflow
        let log1pexp = if eta > 0.0 {
            eta + (-eta).exp().ln_1p()
        } else {
            eta.exp().ln_1p()
        };
        ll += yi * eta - log1pexp;
        let mu = 1.0 / (1.0 + (-eta).exp());
        let w = mu * (1.0 - mu);
        saturated |= w < 1e-10;
        for j in 0..p {
            score[j] += row[j] * (yi - mu);
            for k in 0..=j {
                info[j][k] += w * row[j] * row[k];
            }
        }
    }
    for j in 0..p {
        for k in 0..j {
            info[k][j] = info[j][k];
        }
    }
    Evaluation {
        log_likelihood: ll,
        score,
        information: info,
        saturated,
    }
}

fn cholesky(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let p = a.len();
    let mut l = vec![vec![0.0; p]; p];
    for i in 0..p {
        for j in 0..=i {
            let s: f64 = (0..j).map(|k| l[i][k] * l[j][k]).sum();
            if i == j {
                let d = a[i][i] - s;
                if d <= 1e-300 || !d.is_finite() {
                    return None;
                }
                l[i][j] = d.sqrt();
            } else {
                l[i][j] = (a[i][j] - s) / l[j][j];
            }
        }
    }
    // Reject numerically singular matrices (e.g. a constant predictor column).
    let (min, max) = (0..p).fold((f64::INFINITY, 0.0f64), |(lo, hi), i| {
        (lo.min(l[i][i]), hi.max(l[i][i]))
    });
    (min / max > 1e-7).then_some(l)
}

fn solve_with(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let p = l.len();
    let mut z = vec![0.0; p];
    for i in 0..p {
        z[i] = (b[i] - (0..i).map(|k| l[i][k] * z[k]).sum::<f64>()) / l[i][i];
    }
    let mut x = vec![0.0; p];
    for i in (0..p).rev() {
        x[i] = (z[i] - (i + 1..p).map(|k| l[k][i] * x[k]).sum::<f64>()) / l[i][i];
    }
    x
}

fn cholesky_solve(a: &[Vec<f64>], b: &[f64]) -> Option<Vec<f64>> {
    cholesky(a).map(|l| solve_with(&l, b))
}

fn cholesky_inverse(a: &[Vec<f64>]) -> Option<Vec<Vec<f64>>> {
    let l = cholesky(a)?;
    let p = a.len();
    let cols: Vec<Vec<f64>> = (0..p)
        .map(|j| {
            let mut e = vec![0.0; p];
            e[j] = 1.0;
            solve_with(&l, &e)
        })
        .collect();
    Some((0..p).map(|i| (0..p).map(|j| cols[j][i]).collect()).collect())
}
