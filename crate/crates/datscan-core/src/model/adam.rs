//! Adam optimizer.

use super::layers::ParamRef;
use ndarray::ArrayD;

/// Adam moment coefficients. `epsilon` is added *outside* the square
/// root in the update denominator.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default)]
pub struct AdamParams {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamParams {
    fn default() -> Self {
        AdamParams {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
        }
    }
}

impl AdamParams {
    pub fn validate(&self) -> Result<(), String> {
        for (name, b) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0..1.0).contains(&b) {
                return Err(format!("{name} must be in [0, 1), got {b}"));
            }
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(format!("epsilon must be positive, got {}", self.epsilon));
        }
        Ok(())
    }
}

/// Optimizer state: first and second moment estimates per tensor,
/// matched to the parameter list positionally. Build one optimizer per
/// training run, after any backbone freezing, so the tensor list is
/// stable.
pub struct Adam {
    params: AdamParams,
    t: i32,
    moments: Option<Vec<(ArrayD<f64>, ArrayD<f64>)>>,
}

impl Adam {
    pub fn new(params: AdamParams) -> Self {
        Adam {
            params,
            t: 0,
            moments: None,
        }
    }

    pub fn timestep(&self) -> i32 {
        self.t
    }

    /// One bias-corrected update of every tensor from its accumulated
    /// gradient.
    pub fn step(&mut self, tensors: &mut [ParamRef<'_>], lr: f64) {
        let moments = self.moments.get_or_insert_with(|| {
            tensors
                .iter()
                .map(|p| {
                    let dim = p.value.raw_dim();
                    (ArrayD::zeros(dim.clone()), ArrayD::zeros(dim))
                })
                .collect()
        });
        assert_eq!(
            moments.len(),
            tensors.len(),
            "parameter list changed size under the optimizer"
        );

        self.t += 1;
        let AdamParams {
            beta1,
            beta2,
            epsilon,
        } = self.params;
        let bc1 = 1.0 - beta1.powi(self.t);
        let bc2 = 1.0 - beta2.powi(self.t);

        for (p, (m, v)) in tensors.iter_mut().zip(moments.iter_mut()) {
            assert_eq!(
                m.shape(),
                p.value.shape(),
                "parameter {} changed shape under the optimizer",
                p.name
            );
            azip_update(m, v, p, beta1, beta2, bc1, bc2, lr, epsilon);
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn azip_update(
    m: &mut ArrayD<f64>,
    v: &mut ArrayD<f64>,
    p: &mut ParamRef<'_>,
    beta1: f64,
    beta2: f64,
    bc1: f64,
    bc2: f64,
    lr: f64,
    epsilon: f64,
) {
    ndarray::Zip::from(m)
        .and(v)
        .and(&mut p.value)
        .and(&p.grad)
        .for_each(|m, v, value, &g| {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *value -= lr * m_hat / (v_hat.sqrt() + epsilon);
        });
}
