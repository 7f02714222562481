//! Finite-size scaling fits `p_L = A + B x (+ C x²)` with `x = d^{1/ν} (p - p_th)`.
//!
//! Weighted Levenberg-Marquardt with analytic derivatives, restarted from several `ν`. The
//! linear coefficients of each start come from a weighted linear solve at the starting `ν`
//! and `p_th`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::experiments::campaign::ResultRow;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitOrder {
    Linear,
    Quadratic,
}

impl std::str::FromStr for FitOrder {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "linear" => Ok(Self::Linear),
            "quadratic" => Ok(Self::Quadratic),
            other => Err(format!("unknown fit order '{other}' (expected linear or quadratic)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitPoint {
    pub d: usize,
    pub p: f64,
    pub p_l: f64,
    pub stderr: f64,
}

impl From<&ResultRow> for FitPoint {
    fn from(row: &ResultRow) -> Self {
        Self { d: row.d, p: row.p, p_l: row.p_l, stderr: row.stderr }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    pub order: FitOrder,
    pub d_min: usize,
    /// Keep only points with `|p - p_th|` within this radius of a first fit over all points.
    pub window: Option<f64>,
    pub nu_starts: Vec<f64>,
    pub max_iterations: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            order: FitOrder::Linear,
            d_min: 0,
            window: Some(0.01),
            nu_starts: vec![0.8, 1.0, 1.5, 2.0],
            max_iterations: 2000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FitError {
    #[error("need at least 2 distances with 3 or more error rates each, got {0}")]
    InsufficientData(String),
    #[error("point d={d} p={p} has non-positive stderr {stderr}")]
    BadStderr { d: usize, p: f64, stderr: f64 },
    #[error("no start converged within {iterations} iterations")]
    NonConvergence { iterations: usize },
    #[error("Jacobian is rank deficient at the optimum (condition {condition:e})")]
    RankDeficient { condition: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitParams {
    pub a: f64,
    pub b: f64,
    pub c: Option<f64>,
    pub nu: f64,
    pub p_th: f64,
}

impl FitParams {
    fn from_vec(order: FitOrder, v: &DVector<f64>) -> Self {
        match order {
            FitOrder::Linear => Self { a: v[0], b: v[1], c: None, nu: v[2], p_th: v[3] },
            FitOrder::Quadratic => Self { a: v[0], b: v[1], c: Some(v[2]), nu: v[3], p_th: v[4] },
        }
    }

    /// Model value at `(d, p)`.
    pub fn eval(&self, d: usize, p: f64) -> f64 {
        let x = (d as f64).powf(1.0 / self.nu) * (p - self.p_th);
        self.a + self.b * x + self.c.unwrap_or(0.0) * x * x
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub order: FitOrder,
    #[serde(flatten)]
    pub params: FitParams,
    /// One standard deviation from `(JᵀWJ)⁻¹`.
    pub uncertainties: FitParams,
    pub chi2: f64,
    /// Norm of the weighted residual vector.
    pub residual_norm: f64,
    pub points: usize,
    pub dof: isize,
    pub iterations: usize,
    pub p_range: (f64, f64),
    pub distances: Vec<usize>,
    /// `p_th` of the all-points fit that centred the window.
    pub initial_p_th: Option<f64>,
    pub window: Option<f64>,
}

fn check_points(points: &[FitPoint]) -> Result<(), FitError> {
    for pt in points {
        if pt.stderr.is_nan() || pt.stderr <= 0.0 {
            return Err(FitError::BadStderr { d: pt.d, p: pt.p, stderr: pt.stderr });
        }
    }
    let mut distances: Vec<usize> = points.iter().map(|p| p.d).collect();
    distances.sort_unstable();
    distances.dedup();
    let usable = distances
        .iter()
        .filter(|&&d| {
            let mut ps: Vec<u64> = points.iter().filter(|p| p.d == d).map(|p| p.p.to_bits()).collect();
            ps.sort_unstable();
            ps.dedup();
            ps.len() >= 3
        })
        .count();
    if usable < 2 {
        return Err(FitError::InsufficientData(format!("{} usable of {} distances", usable, distances.len())));
    }
    Ok(())
}

/// Fits the scaling ansatz to `points` with `d ≥ d_min`, then refits inside the window.
pub fn fit_threshold(points: &[FitPoint], options: &FitOptions) -> Result<FitResult, FitError> {
    let kept: Vec<FitPoint> = points.iter().copied().filter(|p| p.d >= options.d_min).collect();
    check_points(&kept)?;
    let full = fit_points(&kept, options)?;
    let Some(radius) = options.window else {
        return Ok(full);
    };
    let near: Vec<FitPoint> =
        kept.iter().copied().filter(|p| (p.p - full.params.p_th).abs() <= radius * (1.0 + 1e-9)).collect();
    check_points(&near)?;
    let mut result = fit_points(&near, options)?;
    result.initial_p_th = Some(full.params.p_th);
    result.window = Some(radius);
    Ok(result)
}

struct Problem<'a> {
    points: &'a [FitPoint],
    order: FitOrder,
}

impl Problem<'_> {
    fn n_params(&self) -> usize {
        match self.order {
            FitOrder::Linear => 4,
            FitOrder::Quadratic => 5,
        }
    }

    fn residuals(&self, theta: &DVector<f64>) -> DVector<f64> {
        let params = FitParams::from_vec(self.order, theta);
        DVector::from_iterator(self.points.len(), self.points.iter().map(|pt| (pt.p_l - params.eval(pt.d, pt.p)) / pt.stderr))
    }

    /// Jacobian of the model over stderr; the residual Jacobian is its negative.
    fn jacobian(&self, theta: &DVector<f64>) -> DMatrix<f64> {
        let params = FitParams::from_vec(self.order, theta);
        let n = self.n_params();
        let mut j = DMatrix::zeros(self.points.len(), n);
        for (i, pt) in self.points.iter().enumerate() {
            let ln_d = (pt.d as f64).ln();
            let scale = (ln_d / params.nu).exp();
            let x = scale * (pt.p - params.p_th);
            let c = params.c.unwrap_or(0.0);
            let df_dx = params.b + 2.0 * c * x;
            let mut row = vec![1.0, x];
            if self.order == FitOrder::Quadratic {
                row.push(x * x);
            }
            row.push(df_dx * x * (-ln_d / (params.nu * params.nu)));
            row.push(df_dx * -scale);
            for (k, v) in row.into_iter().enumerate() {
                j[(i, k)] = v / pt.stderr;
            }
        }
        j
    }

    /// Weighted linear least squares for the polynomial coefficients at fixed `ν`, `p_th`.
    fn linear_start(&self, nu: f64, p_th: f64) -> Option<DVector<f64>> {
        let k = if self.order == FitOrder::Quadratic { 3 } else { 2 };
        let mut a = DMatrix::zeros(self.points.len(), k);
        let mut y = DVector::zeros(self.points.len());
        for (i, pt) in self.points.iter().enumerate() {
            let x = (pt.d as f64).powf(1.0 / nu) * (pt.p - p_th);
            for (col, v) in [1.0, x, x * x].into_iter().take(k).enumerate() {
                a[(i, col)] = v / pt.stderr;
            }
            y[i] = pt.p_l / pt.stderr;
        }
        let coef = a.svd(true, true).solve(&y, 1e-14).ok()?;
        let mut theta = coef.iter().copied().collect::<Vec<_>>();
        theta.push(nu);
        theta.push(p_th);
        Some(DVector::from_vec(theta))
    }
}

struct Converged {
    theta: DVector<f64>,
    cost: f64,
    iterations: usize,
}

fn levenberg_marquardt(problem: &Problem, start: DVector<f64>, max_iterations: usize) -> Option<Converged> {
    let nu_index = problem.n_params() - 2;
    let mut theta = start;
    let mut r = problem.residuals(&theta);
    let mut cost = r.norm_squared();
    let mut lambda = 1e-3;
    for iteration in 1..=max_iterations {
        let j = problem.jacobian(&theta);
        let jtj = j.transpose() * &j;
        let jtr = j.transpose() * &r;
        if jtr.amax() <= 1e-13 * (1.0 + cost) || cost < 1e-28 {
            return Some(Converged { theta, cost, iterations: iteration });
        }
        loop {
            let mut damped = jtj.clone();
            for k in 0..damped.nrows() {
                damped[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let step = damped.cholesky().map(|c| c.solve(&jtr));
            let accepted = step.and_then(|step| {
                let trial = &theta + &step;
                if !(trial[nu_index] > 0.0) || trial.iter().any(|v| !v.is_finite()) {
                    return None;
                }
                let trial_r = problem.residuals(&trial);
                let trial_cost = trial_r.norm_squared();
                (trial_cost <= cost).then_some((trial, trial_r, trial_cost, step))
            });
            match accepted {
                Some((trial, trial_r, trial_cost, step)) => {
                    let relative = step.iter().zip(trial.iter()).map(|(s, t)| s.abs() / (t.abs() + 1e-12)).fold(0.0, f64::max);
                    let improvement = cost - trial_cost;
                    theta = trial;
                    r = trial_r;
                    cost = trial_cost;
                    lambda = (lambda / 10.0).max(1e-12);
                    if relative < 1e-12 || improvement <= 1e-15 * cost {
                        return Some(Converged { theta, cost, iterations: iteration });
                    }
                    break;
                }
                None => {
                    lambda *= 10.0;
                    if lambda > 1e16 {
                        return None;
                    }
                }
            }
        }
    }
    None
}

fn fit_points(points: &[FitPoint], options: &FitOptions) -> Result<FitResult, FitError> {
    let problem = Problem { points, order: options.order };
    let p_min = points.iter().map(|p| p.p).fold(f64::INFINITY, f64::min);
    let p_max = points.iter().map(|p| p.p).fold(f64::NEG_INFINITY, f64::max);
    let p_mid = 0.5 * (p_min + p_max);

    let best = options
        .nu_starts
        .iter()
        .filter_map(|&nu| problem.linear_start(nu, p_mid))
        .filter_map(|start| levenberg_marquardt(&problem, start, options.max_iterations))
        .min_by(|a, b| a.cost.total_cmp(&b.cost))
        .ok_or(FitError::NonConvergence { iterations: options.max_iterations })?;

    let j = problem.jacobian(&best.theta);
    let jtj = j.transpose() * &j;
    let singular = jtj.clone().svd(false, false).singular_values;
    let condition = singular.min() / singular.max();
    if !(condition > 1e-15) {
        return Err(FitError::RankDeficient { condition });
    }
    let covariance = jtj.try_inverse().ok_or(FitError::RankDeficient { condition })?;
    let sd = DVector::from_iterator(covariance.nrows(), (0..covariance.nrows()).map(|k| covariance[(k, k)].max(0.0).sqrt()));

    let mut distances: Vec<usize> = points.iter().map(|p| p.d).collect();
    distances.sort_unstable();
    distances.dedup();
    Ok(FitResult {
        order: options.order,
        params: FitParams::from_vec(options.order, &best.theta),
        uncertainties: FitParams::from_vec(options.order, &sd),
        chi2: best.cost,
        residual_norm: best.cost.sqrt(),
        points: points.len(),
        dof: points.len() as isize - problem.n_params() as isize,
        iterations: best.iterations,
        p_range: (p_min, p_max),
        distances,
        initial_p_th: None,
        window: None,
    })
}

/// Where `p_L(d_large) - p_L(d_small)` changes sign, from a weighted straight-line fit of the
/// difference over the error rates both distances share.
pub fn curve_crossing(points: &[FitPoint], d_small: usize, d_large: usize) -> Option<f64> {
    let mut xs = Vec::new();
    for a in points.iter().filter(|p| p.d == d_small) {
        if let Some(b) = points.iter().find(|b| b.d == d_large && b.p == a.p) {
            let var = a.stderr.powi(2) + b.stderr.powi(2);
            xs.push((a.p, b.p_l - a.p_l, 1.0 / var.max(1e-300)));
        }
    }
    if xs.len() < 2 {
        return None;
    }
    let sw: f64 = xs.iter().map(|x| x.2).sum();
    let mx = xs.iter().map(|x| x.2 * x.0).sum::<f64>() / sw;
    let my = xs.iter().map(|x| x.2 * x.1).sum::<f64>() / sw;
    let sxx: f64 = xs.iter().map(|x| x.2 * (x.0 - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().map(|x| x.2 * (x.0 - mx) * (x.1 - my)).sum();
    let slope = sxy / sxx;
    (slope != 0.0 && slope.is_finite()).then(|| mx - my / slope)
}

/// Noiseless points from `params` on a `(d, p)` grid, each with the given stderr.
pub fn synthetic_points(params: &FitParams, distances: &[usize], rates: &[f64], stderr: f64) -> Vec<FitPoint> {
    distances
        .iter()
        .flat_map(|&d| rates.iter().map(move |&p| FitPoint { d, p, p_l: params.eval(d, p), stderr }))
        .collect()
}
