//! L1-regularized logistic regression, fitted by accelerated proximal
//! gradient descent (FISTA) with backtracking line search and adaptive
//! restart. The intercept is not penalized. Regularization strength
//! follows the 1/(C n) convention.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::ids::IdsError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticParams {
    /// Inverse regularization strength; lambda = 1 / (c * n).
    pub c: f64,
    /// Convergence tolerance on the composite gradient's max-norm.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for LogisticParams {
    fn default() -> Self {
        LogisticParams {
            c: 100.0,
            tol: 1e-6,
            max_iter: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub intercept: f64,
    pub params: LogisticParams,
    pub iterations: usize,
    pub converged: bool,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Mean binary cross-entropy of the smooth part, numerically via
/// log(1+e^z) in its stable form.
fn smooth_loss(x: &Array2<f64>, y01: &[f64], w: &Array1<f64>, b: f64) -> f64 {
    let z = x.dot(w) + b;
    let n = y01.len() as f64;
    z.iter()
        .zip(y01)
        .map(|(&z, &y)| {
            // log(1 + e^z) - y z, stable for both signs of z.
            let softplus = if z > 0.0 {
                z + (-z).exp().ln_1p()
            } else {
                z.exp().ln_1p()
            };
            softplus - y * z
        })
        .sum::<f64>()
        / n
}

fn gradient(x: &Array2<f64>, y01: &[f64], w: &Array1<f64>, b: f64) -> (Array1<f64>, f64) {
    let n = y01.len() as f64;
    let z = x.dot(w) + b;
    let resid = Array1::from_iter(z.iter().zip(y01).map(|(&z, &y)| sigmoid(z) - y));
    let gw = x.t().dot(&resid) / n;
    let gb = resid.sum() / n;
    (gw, gb)
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

pub fn fit(x: &Array2<f64>, y: &[bool], params: &LogisticParams) -> Result<LogisticModel, IdsError> {
    if params.c <= 0.0 || params.tol <= 0.0 || params.max_iter == 0 {
        return Err(IdsError::BadHyperparameter(
            "logistic: c, tol and max_iter must be positive".into(),
        ));
    }
    let n = x.nrows();
    let d = x.ncols();
    let y01: Vec<f64> = y.iter().map(|&b| b as u8 as f64).collect();
    let lambda = 1.0 / (params.c * n as f64);

    let mut w = Array1::<f64>::zeros(d);
    let mut b = 0.0f64;
    // Extrapolated point the gradient step is taken from.
    let mut wy = w.clone();
    let mut by = b;
    let mut t = 1.0f64;
    let mut step = 1.0f64;
    let mut converged = false;
    let mut iterations = 0;
    let l1 = |w: &Array1<f64>| w.iter().map(|v| v.abs()).sum::<f64>();
    let mut objective = smooth_loss(x, &y01, &w, b) + lambda * l1(&w);
    for it in 0..params.max_iter {
        iterations = it + 1;
        let loss_y = smooth_loss(x, &y01, &wy, by);
        let (gw, gb) = gradient(x, &y01, &wy, by);
        // Backtrack until the quadratic upper bound holds at the
        // extrapolated point.
        let (w_new, b_new, loss_new) = loop {
            let w_try = Array1::from_iter(
                wy.iter()
                    .zip(gw.iter())
                    .map(|(&wi, &gi)| soft_threshold(wi - step * gi, step * lambda)),
            );
            let b_try = by - step * gb;
            let l_try = smooth_loss(x, &y01, &w_try, b_try);
            let dw = &w_try - &wy;
            let db = b_try - by;
            let lin: f64 = gw.dot(&dw) + gb * db;
            let quad = (dw.dot(&dw) + db * db) / (2.0 * step);
            if l_try <= loss_y + lin + quad + 1e-12 || step < 1e-12 {
                break (w_try, b_try, l_try);
            }
            step *= 0.5;
        };
        // Composite gradient: the generalized step direction over t.
        let gmax = w_new
            .iter()
            .zip(wy.iter())
            .map(|(&a, &o)| (a - o).abs())
            .fold((b_new - by).abs(), f64::max)
            / step;
        let objective_new = loss_new + lambda * l1(&w_new);
        if objective_new > objective {
            // Momentum overshot; restart from the plain gradient point.
            t = 1.0;
            wy = w_new.clone();
            by = b_new;
        } else {
            let t_next = (1.0 + (1.0 + 4.0 * t * t).sqrt()) / 2.0;
            let beta = (t - 1.0) / t_next;
            wy = &w_new + &((&w_new - &w) * beta);
            by = b_new + beta * (b_new - b);
            t = t_next;
        }
        w = w_new;
        b = b_new;
        objective = objective_new;
        if gmax <= params.tol {
            converged = true;
            break;
        }
        // Allow the step to grow back; backtracking will trim it.
        step *= 1.1;
    }
    Ok(LogisticModel {
        weights: w.to_vec(),
        intercept: b,
        params: params.clone(),
        iterations,
        converged,
    })
}

pub fn predict_scores(m: &LogisticModel, x: &Array2<f64>) -> Vec<f64> {
    let w = Array1::from_vec(m.weights.clone());
    (x.dot(&w) + m.intercept).iter().map(|&z| sigmoid(z)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::telemetry::rng::derive_rng;
    use ndarray::array;
    use rand::Rng;

    #[test]
    fn separable_data_is_learned() {
        let x = array![
            [-2.0, 0.1],
            [-1.5, -0.2],
            [-1.0, 0.3],
            [1.0, -0.1],
            [1.5, 0.2],
            [2.0, 0.0]
        ];
        let y = [false, false, false, true, true, true];
        let m = fit(&x, &y, &LogisticParams::default()).unwrap();
        assert!(m.converged);
        let s = predict_scores(&m, &x);
        for (i, &yi) in y.iter().enumerate() {
            assert_eq!(s[i] >= 0.5, yi, "row {i} score {}", s[i]);
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = derive_rng(3, 0, "lr-gradcheck");
        let n = 40;
        let d = 4;
        let mut x = Array2::<f64>::zeros((n, d));
        let mut y = vec![false; n];
        for i in 0..n {
            for j in 0..d {
                x[(i, j)] = rng.random_range(-2.0..2.0);
            }
            y[i] = rng.random_range(0.0..1.0) < 0.5;
        }
        let y01: Vec<f64> = y.iter().map(|&b| b as u8 as f64).collect();
        let w = Array1::from_iter((0..d).map(|_| rng.random_range(-1.0..1.0)));
        let b = 0.3;
        let (gw, gb) = gradient(&x, &y01, &w, b);
        let h = 1e-6;
        for j in 0..d {
            let mut wp = w.clone();
            let mut wm = w.clone();
            wp[j] += h;
            wm[j] -= h;
            let num = (smooth_loss(&x, &y01, &wp, b) - smooth_loss(&x, &y01, &wm, b)) / (2.0 * h);
            assert!((num - gw[j]).abs() < 1e-6, "dw[{j}]: {num} vs {}", gw[j]);
        }
        let num_b = (smooth_loss(&x, &y01, &w, b + h) - smooth_loss(&x, &y01, &w, b - h)) / (2.0 * h);
        assert!((num_b - gb).abs() < 1e-6);
    }

    #[test]
    fn l1_zeroes_an_irrelevant_feature() {
        let mut rng = derive_rng(4, 0, "lr-sparsity");
        let n = 400;
        let mut x = Array2::<f64>::zeros((n, 2));
        let mut y = vec![false; n];
        for i in 0..n {
            let informative = rng.random_range(-1.0..1.0);
            x[(i, 0)] = informative;
            x[(i, 1)] = rng.random_range(-1.0..1.0);
            y[i] = informative > 0.0;
        }
        // Strong penalty: small c.
        let m = fit(&x, &y, &LogisticParams { c: 0.02, ..Default::default() }).unwrap();
        assert_eq!(m.weights[1], 0.0, "noise weight {}", m.weights[1]);
        assert!(m.weights[0] > 0.0);
    }

    #[test]
    fn bad_params_rejected() {
        let x = array![[0.0], [1.0]];
        assert!(fit(&x, &[false, true], &LogisticParams { c: 0.0, ..Default::default() }).is_err());
    }
}
