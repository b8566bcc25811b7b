//! Feed-forward neural network: tanh hidden layers, a single sigmoid
//! output, mean binary cross-entropy with L2 weight decay, trained by
//! mini-batch Adam. The learning rate halves after two epochs without
//! meaningful improvement and training stops once it decays below a
//! floor, so epoch count adapts to the data.

use ndarray::{Array1, Array2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::ids::IdsError;
use crate::telemetry::rng::derive_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub hidden: Vec<usize>,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub batch_size: usize,
    /// L2 penalty weight on connection weights (biases excluded).
    pub alpha: f64,
    /// An epoch "improves" when loss drops below best by more than this.
    pub improvement_tol: f64,
    /// Stale epochs tolerated before the learning rate halves.
    pub patience: usize,
    pub min_learning_rate: f64,
    pub max_epochs: usize,
}

impl Default for MlpParams {
    fn default() -> Self {
        MlpParams {
            hidden: vec![50, 100, 50],
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            batch_size: 200,
            alpha: 1e-4,
            improvement_tol: 1e-4,
            patience: 2,
            min_learning_rate: 1e-6,
            max_epochs: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub layer_sizes: Vec<usize>,
    /// weights[l] has shape (layer_sizes[l], layer_sizes[l+1]).
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    pub params: MlpParams,
    pub epochs_run: usize,
    pub final_loss: f64,
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// log(1 + e^z), stable for both signs.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

struct Net {
    w: Vec<Array2<f64>>,
    b: Vec<Array1<f64>>,
}

impl Net {
    fn glorot(layer_sizes: &[usize], seed: u64) -> Net {
        let mut w = Vec::new();
        let mut b = Vec::new();
        for l in 0..layer_sizes.len() - 1 {
            let (fan_in, fan_out) = (layer_sizes[l], layer_sizes[l + 1]);
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let mut rng = derive_rng(seed, l as u64, "mlp-init");
            w.push(Array2::from_shape_fn((fan_in, fan_out), |_| {
                rng.random_range(-limit..limit)
            }));
            b.push(Array1::zeros(fan_out));
        }
        Net { w, b }
    }

    /// Activations per layer: index 0 is the input, the last entry is
    /// the output logit column (pre-sigmoid).
    fn forward(&self, x: &Array2<f64>) -> Vec<Array2<f64>> {
        let nl = self.w.len();
        let mut acts = Vec::with_capacity(nl + 1);
        acts.push(x.clone());
        for l in 0..nl {
            let mut z = acts[l].dot(&self.w[l]) + &self.b[l];
            if l + 1 < nl {
                z.mapv_inplace(f64::tanh);
            }
            acts.push(z);
        }
        acts
    }

    #[cfg(test)]
    fn loss(&self, x: &Array2<f64>, y01: &[f64], alpha: f64) -> f64 {
        let acts = self.forward(x);
        let logits = acts.last().unwrap();
        let n = y01.len() as f64;
        let bce: f64 = logits
            .column(0)
            .iter()
            .zip(y01)
            .map(|(&z, &y)| softplus(z) - y * z)
            .sum::<f64>()
            / n;
        let l2: f64 = self.w.iter().map(|w| w.iter().map(|v| v * v).sum::<f64>()).sum();
        bce + alpha * l2 / (2.0 * n)
    }

    /// Backprop gradients of `loss` for this batch, plus the loss.
    fn grads(
        &self,
        x: &Array2<f64>,
        y01: &[f64],
        alpha: f64,
    ) -> (Vec<Array2<f64>>, Vec<Array1<f64>>, f64) {
        let nl = self.w.len();
        let acts = self.forward(x);
        let logits = acts.last().unwrap();
        let n = y01.len() as f64;
        let bce: f64 = logits
            .column(0)
            .iter()
            .zip(y01)
            .map(|(&z, &y)| softplus(z) - y * z)
            .sum::<f64>()
            / n;
        let l2: f64 = self.w.iter().map(|w| w.iter().map(|v| v * v).sum::<f64>()).sum();
        let loss = bce + alpha * l2 / (2.0 * n);

        // d(mean BCE)/d(logit) = (sigmoid(z) - y) / n.
        let mut delta = Array2::from_shape_fn(logits.raw_dim(), |(i, _)| {
            (sigmoid(logits[(i, 0)]) - y01[i]) / n
        });
        let mut dw = vec![Array2::zeros((0, 0)); nl];
        let mut db = vec![Array1::zeros(0); nl];
        for l in (0..nl).rev() {
            dw[l] = acts[l].t().dot(&delta) + &(&self.w[l] * (alpha / n));
            db[l] = delta.sum_axis(Axis(0));
            if l > 0 {
                let back = delta.dot(&self.w[l].t());
                delta = back * &acts[l].mapv(|a| 1.0 - a * a);
            }
        }
        (dw, db, loss)
    }
}

struct Adam {
    m_w: Vec<Array2<f64>>,
    v_w: Vec<Array2<f64>>,
    m_b: Vec<Array1<f64>>,
    v_b: Vec<Array1<f64>>,
    t: i32,
}

impl Adam {
    fn new(net: &Net) -> Adam {
        Adam {
            m_w: net.w.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            v_w: net.w.iter().map(|w| Array2::zeros(w.raw_dim())).collect(),
            m_b: net.b.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
            v_b: net.b.iter().map(|b| Array1::zeros(b.raw_dim())).collect(),
            t: 0,
        }
    }

    fn step(&mut self, net: &mut Net, dw: &[Array2<f64>], db: &[Array1<f64>], lr: f64, p: &MlpParams) {
        self.t += 1;
        let c1 = 1.0 - p.beta1.powi(self.t);
        let c2 = 1.0 - p.beta2.powi(self.t);
        for l in 0..net.w.len() {
            self.m_w[l] = &self.m_w[l] * p.beta1 + &(&dw[l] * (1.0 - p.beta1));
            self.v_w[l] = &self.v_w[l] * p.beta2 + &(dw[l].mapv(|g| g * g) * (1.0 - p.beta2));
            let upd = (&self.m_w[l] / c1) / ((&self.v_w[l] / c2).mapv(f64::sqrt) + p.adam_eps);
            net.w[l] -= &(&upd * lr);
            self.m_b[l] = &self.m_b[l] * p.beta1 + &(&db[l] * (1.0 - p.beta1));
            self.v_b[l] = &self.v_b[l] * p.beta2 + &(db[l].mapv(|g| g * g) * (1.0 - p.beta2));
            let upd_b = (&self.m_b[l] / c1) / ((&self.v_b[l] / c2).mapv(f64::sqrt) + p.adam_eps);
            net.b[l] -= &(&upd_b * lr);
        }
    }
}

pub fn fit(
    x: &Array2<f64>,
    y: &[bool],
    params: &MlpParams,
    seed: u64,
) -> Result<MlpModel, IdsError> {
    if params.batch_size == 0
        || params.max_epochs == 0
        || params.learning_rate <= 0.0
        || params.hidden.is_empty()
        || params.hidden.contains(&0)
    {
        return Err(IdsError::BadHyperparameter(
            "mlp: need batch_size, max_epochs, learning_rate > 0 and nonempty hidden layers".into(),
        ));
    }
    let (n, d) = x.dim();
    let mut layer_sizes = vec![d];
    layer_sizes.extend_from_slice(&params.hidden);
    layer_sizes.push(1);

    let y01: Vec<f64> = y.iter().map(|&b| b as u8 as f64).collect();
    let mut net = Net::glorot(&layer_sizes, seed);
    let mut adam = Adam::new(&net);
    let mut lr = params.learning_rate;
    let mut best = f64::INFINITY;
    let mut stale = 0usize;
    let mut epochs_run = 0;
    let mut final_loss = f64::NAN;
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..params.max_epochs {
        epochs_run = epoch + 1;
        let mut rng = derive_rng(seed, epoch as u64, "mlp-shuffle");
        for i in (1..n).rev() {
            order.swap(i, rng.random_range(0..=i));
        }
        let mut loss_sum = 0.0;
        for chunk in order.chunks(params.batch_size) {
            let xb = x.select(Axis(0), chunk);
            let yb: Vec<f64> = chunk.iter().map(|&i| y01[i]).collect();
            let (dw, db, loss) = net.grads(&xb, &yb, params.alpha);
            adam.step(&mut net, &dw, &db, lr, params);
            loss_sum += loss * chunk.len() as f64;
        }
        let epoch_loss = loss_sum / n as f64;
        final_loss = epoch_loss;
        if epoch_loss < best - params.improvement_tol {
            best = epoch_loss;
            stale = 0;
        } else {
            best = best.min(epoch_loss);
            stale += 1;
            if stale >= params.patience {
                lr *= 0.5;
                stale = 0;
                if lr < params.min_learning_rate {
                    break;
                }
            }
        }
    }
    Ok(MlpModel {
        layer_sizes,
        weights: net.w,
        biases: net.b,
        params: params.clone(),
        epochs_run,
        final_loss,
    })
}

pub fn predict_scores(m: &MlpModel, x: &Array2<f64>) -> Vec<f64> {
    let net = Net {
        w: m.weights.clone(),
        b: m.biases.clone(),
    };
    let acts = net.forward(x);
    acts.last()
        .unwrap()
        .column(0)
        .iter()
        .map(|&z| sigmoid(z))
        .collect()
}

/// Penalized batch loss and its analytic gradients at the model's current
/// weights, exactly as the training loop consumes them. Callers can audit
/// the optimizer against finite differences of the returned loss.
pub fn batch_gradients(
    m: &MlpModel,
    x: &Array2<f64>,
    y: &[bool],
) -> (Vec<Array2<f64>>, Vec<Array1<f64>>, f64) {
    let net = Net {
        w: m.weights.clone(),
        b: m.biases.clone(),
    };
    let y01: Vec<f64> = y.iter().map(|&b| b as u8 as f64).collect();
    net.grads(x, &y01, m.params.alpha)
}
