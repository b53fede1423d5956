//! Adaptive-moment (Adam) optimizer.

use super::graph::Tensor;
use super::mlp::Parameters;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct OptState {
    pub step_count: u64,
    pub first_moment: Vec<Tensor>,
    pub second_moment: Vec<Tensor>,
    pub learning_rate: f64,
    pub moment_decays: (f64, f64),
    pub numerical_floor: f64,
}

impl OptState {
    pub fn new<P: Parameters + ?Sized>(params: &P, learning_rate: f64) -> Self {
        let zeros: Vec<Tensor> = params.tensors().iter().map(|t| Tensor::zeros(t.dim())).collect();
        Self {
            step_count: 0,
            first_moment: zeros.clone(),
            second_moment: zeros,
            learning_rate,
            moment_decays: (0.9, 0.999),
            numerical_floor: 1e-8,
        }
    }
}

/// One bias-corrected Adam step. Shapes and finiteness are checked before
/// anything is written, so a rejected step leaves `params` and `opt` intact.
pub fn optimizer_step<P: Parameters + ?Sized>(params: &mut P, grads: &[Tensor], opt: &mut OptState) -> Result<()> {
    let shapes: Vec<_> = params.tensors().iter().map(|t| t.dim()).collect();
    if grads.len() != shapes.len() || opt.first_moment.len() != shapes.len() || opt.second_moment.len() != shapes.len()
    {
        return Err(Error::Dimension {
            context: "optimizer tensor count",
            expected: shapes.len(),
            got: grads.len(),
        });
    }
    for (i, shape) in shapes.iter().enumerate() {
        if grads[i].dim() != *shape || opt.first_moment[i].dim() != *shape || opt.second_moment[i].dim() != *shape {
            return Err(Error::Graph(format!(
                "optimizer tensor {i}: parameter {:?}, gradient {:?}",
                shape,
                grads[i].dim()
            )));
        }
        if let Some(bad) = grads[i].iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!(
                "gradient tensor {i} contains {bad}; step skipped"
            )));
        }
    }

    opt.step_count += 1;
    let (b1, b2) = opt.moment_decays;
    let t = opt.step_count as i32;
    let c1 = 1.0 - b1.powi(t);
    let c2 = 1.0 - b2.powi(t);
    let lr = opt.learning_rate;
    let floor = opt.numerical_floor;

    for (((p, g), m), v) in params
        .tensors_mut()
        .into_iter()
        .zip(grads)
        .zip(opt.first_moment.iter_mut())
        .zip(opt.second_moment.iter_mut())
    {
        ndarray::Zip::from(p).and(g).and(m).and(v).for_each(|p, &g, m, v| {
            *m = b1 * *m + (1.0 - b1) * g;
            *v = b2 * *v + (1.0 - b2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= lr * m_hat / (v_hat.sqrt() + floor);
        });
    }
    Ok(())
}
