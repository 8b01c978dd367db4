//! Entropy-based loss terms for dense weight matrices and convolution
//! filters, in the raw `-log|·|` form and the bounded `1/(|·|+ε)` form, plus
//! their analytic gradients.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::entropy::square_part;
use crate::error::{dim_err, Error, Result};
use crate::tensor::{LogDet, Lu, Matrix};

pub const DEFAULT_EPSILON: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossForm {
    /// `-λ·log|x|`
    Log,
    /// `λ / (|x| + ε)`
    Reciprocal { epsilon: f64 },
}

impl Default for LossForm {
    fn default() -> Self {
        LossForm::Reciprocal {
            epsilon: DEFAULT_EPSILON,
        }
    }
}

impl LossForm {
    pub fn validate(&self) -> Result<()> {
        match *self {
            LossForm::Reciprocal { epsilon } if !(epsilon > 0.0 && epsilon.is_finite()) => Err(
                Error::InvalidArgument(format!("epsilon must be positive, got {epsilon}")),
            ),
            _ => Ok(()),
        }
    }
}

/// Per-layer and per-slice loss weights. Anything not listed falls back to
/// the global default; negative values are allowed.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LambdaSchedule {
    pub dense_default: f64,
    pub conv_default: f64,
    /// dense-layer ordinal → λ₁
    pub dense: BTreeMap<usize, f64>,
    /// (conv-layer ordinal, filter, input channel) → λ₂
    pub conv: BTreeMap<(usize, usize, usize), f64>,
}

impl LambdaSchedule {
    pub fn uniform(dense: f64, conv: f64) -> Self {
        Self {
            dense_default: dense,
            conv_default: conv,
            ..Default::default()
        }
    }

    pub fn dense_lambda(&self, layer: usize) -> f64 {
        self.dense.get(&layer).copied().unwrap_or(self.dense_default)
    }

    pub fn conv_lambda(&self, layer: usize, filter: usize, channel: usize) -> f64 {
        self.conv
            .get(&(layer, filter, channel))
            .copied()
            .unwrap_or(self.conv_default)
    }

    pub fn negated(&self) -> Self {
        Self {
            dense_default: -self.dense_default,
            conv_default: -self.conv_default,
            dense: self.dense.iter().map(|(&k, &v)| (k, -v)).collect(),
            conv: self.conv.iter().map(|(&k, &v)| (k, -v)).collect(),
        }
    }
}

/// One 2D kernel of a conv layer, keyed the way [`LambdaSchedule`] is.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterSlice {
    pub layer: usize,
    pub filter: usize,
    pub channel: usize,
    pub kernel: Matrix,
}

// ---------------------------------------------------------------------------
// scalar terms

fn log_term(lambda: f64, log_abs: f64) -> f64 {
    if lambda == 0.0 {
        0.0
    } else {
        -lambda * log_abs
    }
}

/// Loss contribution of one dense layer given `log|det W_s|`.
pub fn dense_term(logdet: LogDet, lambda: f64, form: LossForm) -> f64 {
    match form {
        LossForm::Log => log_term(lambda, logdet.log_abs),
        LossForm::Reciprocal { epsilon } => {
            if lambda == 0.0 {
                0.0
            } else {
                lambda / (logdet.abs_det() + epsilon)
            }
        }
    }
}

/// `∂term/∂W_s = factor · W_s⁻ᵀ`; returns the scalar `factor`, or `None`
/// when the gradient is defined to vanish (reciprocal form at a singular
/// square part).
pub fn dense_term_grad_factor(logdet: LogDet, lambda: f64, form: LossForm) -> Result<Option<f64>> {
    if lambda == 0.0 {
        return Ok(None);
    }
    match form {
        LossForm::Log => {
            if logdet.is_singular() {
                Err(Error::Singular(
                    "log-form dense entropy gradient at a singular square part".into(),
                ))
            } else {
                Ok(Some(-lambda))
            }
        }
        LossForm::Reciprocal { epsilon } => {
            if logdet.is_singular() {
                return Ok(None);
            }
            // |det| / (|det|+ε)², without overflowing for huge determinants
            let a = logdet.abs_det();
            let r = if a.is_infinite() {
                (-logdet.log_abs).exp()
            } else {
                a / ((a + epsilon) * (a + epsilon))
            };
            Ok(Some(-lambda * r))
        }
    }
}

/// Loss contribution of one filter slice from its upper-left element.
pub fn conv_term(c11: f64, lambda: f64, form: LossForm) -> f64 {
    match form {
        LossForm::Log => log_term(lambda, c11.abs().ln()),
        LossForm::Reciprocal { epsilon } => {
            if lambda == 0.0 {
                0.0
            } else {
                lambda / (c11.abs() + epsilon)
            }
        }
    }
}

/// `∂term/∂c₁₁`.
pub fn conv_term_grad(c11: f64, lambda: f64, form: LossForm) -> Result<f64> {
    if lambda == 0.0 {
        return Ok(0.0);
    }
    match form {
        LossForm::Log => {
            if c11 == 0.0 {
                Err(Error::Singular("log-form conv entropy gradient at c11 = 0".into()))
            } else {
                Ok(-lambda / c11)
            }
        }
        LossForm::Reciprocal { epsilon } => {
            if c11 == 0.0 {
                Ok(0.0)
            } else {
                let d = c11.abs() + epsilon;
                Ok(-lambda * c11.signum() / (d * d))
            }
        }
    }
}

// ---------------------------------------------------------------------------
// losses over whole parameter sets

/// `Σ_ℓ term(W_ℓ)`; `weights[ℓ]` is dense-layer ordinal `ℓ`.
pub fn dense_entropy_loss(weights: &[Matrix], schedule: &LambdaSchedule, form: LossForm) -> Result<f64> {
    let mut total = 0.0;
    for (l, w) in weights.iter().enumerate() {
        let lambda = schedule.dense_lambda(l);
        if lambda == 0.0 {
            if w.is_empty() {
                return Err(dim_err("empty weight matrix"));
            }
            continue;
        }
        let ld = Lu::factor(&square_part(w)?)?.logabsdet();
        total += dense_term(ld, lambda, form);
    }
    Ok(total)
}

/// Gradient of [`dense_entropy_loss`] with respect to every full weight
/// matrix; entries outside the square part are exactly zero.
pub fn dense_entropy_loss_grad(
    weights: &[Matrix],
    schedule: &LambdaSchedule,
    form: LossForm,
) -> Result<Vec<Matrix>> {
    weights
        .iter()
        .enumerate()
        .map(|(l, w)| {
            let mut g = Matrix::zeros(w.rows(), w.cols());
            let lambda = schedule.dense_lambda(l);
            if lambda == 0.0 {
                return Ok(g);
            }
            let lu = Lu::factor(&square_part(w)?)?;
            if let Some(f) = dense_term_grad_factor(lu.logabsdet(), lambda, form)? {
                let inv_t = lu.inverse_transpose()?;
                g.set_block(0, 0, &inv_t.scale(f))?;
            }
            Ok(g)
        })
        .collect()
}

pub fn conv_entropy_loss(filters: &[FilterSlice], schedule: &LambdaSchedule, form: LossForm) -> Result<f64> {
    let mut total = 0.0;
    for s in filters {
        if s.kernel.is_empty() {
            return Err(dim_err("empty filter slice"));
        }
        let lambda = schedule.conv_lambda(s.layer, s.filter, s.channel);
        total += conv_term(s.kernel[(0, 0)], lambda, form);
    }
    Ok(total)
}

/// Gradient per slice; only position (0, 0) is ever nonzero.
pub fn conv_entropy_loss_grad(
    filters: &[FilterSlice],
    schedule: &LambdaSchedule,
    form: LossForm,
) -> Result<Vec<Matrix>> {
    filters
        .iter()
        .map(|s| {
            if s.kernel.is_empty() {
                return Err(dim_err("empty filter slice"));
            }
            let mut g = Matrix::zeros(s.kernel.rows(), s.kernel.cols());
            let lambda = schedule.conv_lambda(s.layer, s.filter, s.channel);
            g[(0, 0)] = conv_term_grad(s.kernel[(0, 0)], lambda, form)?;
            Ok(g)
        })
        .collect()
}

/// `L_acc + L_dense + L_conv`, λ's folded into the entropy terms.
pub fn compound_loss(
    acc_loss: f64,
    weights: &[Matrix],
    filters: &[FilterSlice],
    schedule: &LambdaSchedule,
    form: LossForm,
) -> Result<f64> {
    Ok(acc_loss
        + dense_entropy_loss(weights, schedule, form)?
        + conv_entropy_loss(filters, schedule, form)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const RECIP: LossForm = LossForm::Reciprocal { epsilon: 1e-4 };

    fn w22() -> Matrix {
        Matrix::from_rows(&[[2.0, 1.0], [4.0, 3.0]])
    }

    fn slice(c11: f64) -> FilterSlice {
        FilterSlice {
            layer: 0,
            filter: 0,
            channel: 0,
            kernel: Matrix::from_rows(&[[c11, 0.3], [-0.7, 1.1]]),
        }
    }

    #[test]
    fn zero_schedule_is_zero_loss() {
        let s = LambdaSchedule::uniform(0.0, 0.0);
        assert_eq!(dense_entropy_loss(&[w22()], &s, LossForm::Log).unwrap(), 0.0);
        assert_eq!(conv_entropy_loss(&[slice(2.0)], &s, RECIP).unwrap(), 0.0);
        let g = dense_entropy_loss_grad(&[w22()], &s, LossForm::Log).unwrap();
        assert!(g[0].as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dense_forms() {
        let s = LambdaSchedule::uniform(1.0, 0.0);
        let log = dense_entropy_loss(&[w22()], &s, LossForm::Log).unwrap();
        assert_abs_diff_eq!(log, -0.693147, epsilon = 1e-6);
        let rec = dense_entropy_loss(&[w22()], &s, RECIP).unwrap();
        assert_abs_diff_eq!(rec, 1.0 / (2.0 + 1e-4), epsilon = 1e-12);
        assert_abs_diff_eq!(rec, 0.4999750, epsilon = 1e-7);
    }

    #[test]
    fn dense_log_gradient_values() {
        // -(W⁻¹)ᵀ with W⁻¹ = [[1.5, -0.5], [-2, 1]]
        let s = LambdaSchedule::uniform(1.0, 0.0);
        let g = dense_entropy_loss_grad(&[w22()], &s, LossForm::Log).unwrap();
        let expected = Matrix::from_rows(&[[-1.5, 2.0], [0.5, -1.0]]);
        assert!(g[0].max_abs_diff(&expected) < 1e-12);
    }

    #[test]
    fn wide_matrix_gradient_outside_square_part_is_zero() {
        let w = Matrix::from_rows(&[[2.0, 1.0, 5.0], [4.0, 3.0, -1.0]]);
        let s = LambdaSchedule::uniform(1.0, 0.0);
        for form in [LossForm::Log, RECIP] {
            let g = dense_entropy_loss_grad(&[w.clone()], &s, form).unwrap();
            assert_eq!(g[0][(0, 2)], 0.0);
            assert_eq!(g[0][(1, 2)], 0.0);
            assert!(g[0][(0, 0)] != 0.0);
        }
    }

    #[test]
    fn singular_square_part() {
        let w = Matrix::from_rows(&[[1.0, 2.0], [2.0, 4.0]]);
        let s = LambdaSchedule::uniform(1.0, 0.0);
        assert_eq!(dense_entropy_loss(&[w.clone()], &s, LossForm::Log).unwrap(), f64::INFINITY);
        assert_abs_diff_eq!(dense_entropy_loss(&[w.clone()], &s, RECIP).unwrap(), 1e4, epsilon = 1e-9);
        assert!(matches!(
            dense_entropy_loss_grad(&[w.clone()], &s, LossForm::Log),
            Err(Error::Singular(_))
        ));
        let g = dense_entropy_loss_grad(&[w], &s, RECIP).unwrap();
        assert!(g[0].as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn huge_determinant_does_not_produce_nan() {
        let w = Matrix::from_fn(3, 3, |i, j| if i == j { 1e200 } else { 0.0 });
        let s = LambdaSchedule::uniform(1.0, 0.0);
        let l = dense_entropy_loss(&[w.clone()], &s, RECIP).unwrap();
        assert_eq!(l, 0.0);
        let g = dense_entropy_loss_grad(&[w], &s, RECIP).unwrap();
        assert!(g[0].all_finite());
    }

    #[test]
    fn conv_forms() {
        let s = LambdaSchedule::uniform(0.0, 1.0);
        assert_abs_diff_eq!(
            conv_entropy_loss(&[slice(2.0)], &s, LossForm::Log).unwrap(),
            -2f64.ln(),
            epsilon = 1e-15
        );
        let pair = [slice(2.0), FilterSlice { filter: 1, ..slice(0.5) }];
        assert_abs_diff_eq!(conv_entropy_loss(&pair, &s, LossForm::Log).unwrap(), 0.0, epsilon = 1e-15);
        assert_eq!(conv_entropy_loss(&[slice(0.0)], &s, LossForm::Log).unwrap(), f64::INFINITY);
    }

    #[test]
    fn conv_gradients() {
        let s = LambdaSchedule::uniform(0.0, 1.0);
        let g = conv_entropy_loss_grad(&[slice(2.0)], &s, LossForm::Log).unwrap();
        assert_eq!(g[0], Matrix::from_rows(&[[-0.5, 0.0], [0.0, 0.0]]));
        let g = conv_entropy_loss_grad(&[slice(-1.0)], &s, RECIP).unwrap();
        assert_abs_diff_eq!(g[0][(0, 0)], 1.0 / (1.0f64 + 1e-4).powi(2), epsilon = 1e-15);
        let g = conv_entropy_loss_grad(&[slice(0.0)], &s, RECIP).unwrap();
        assert_eq!(g[0][(0, 0)], 0.0);
        assert!(conv_entropy_loss_grad(&[slice(0.0)], &s, LossForm::Log).is_err());
        let zero = LambdaSchedule::uniform(0.0, 0.0);
        let g = conv_entropy_loss_grad(&[slice(0.0)], &zero, LossForm::Log).unwrap();
        assert_eq!(g[0][(0, 0)], 0.0);
    }

    #[test]
    fn schedule_overrides_and_negation() {
        let mut s = LambdaSchedule::uniform(1.0, 2.0);
        s.dense.insert(1, -3.0);
        s.conv.insert((0, 1, 2), 0.5);
        assert_eq!(s.dense_lambda(0), 1.0);
        assert_eq!(s.dense_lambda(1), -3.0);
        assert_eq!(s.conv_lambda(0, 1, 2), 0.5);
        assert_eq!(s.conv_lambda(0, 1, 1), 2.0);
        let n = s.negated();
        assert_eq!(n.dense_lambda(1), 3.0);
        assert_eq!(n.conv_lambda(0, 1, 2), -0.5);
    }

    #[test]
    fn compound_is_sum() {
        let s = LambdaSchedule::uniform(1.0, 0.0);
        let l = compound_loss(1.0, &[w22()], &[], &s, LossForm::Log).unwrap();
        assert_abs_diff_eq!(l, 1.0 - 2f64.ln(), epsilon = 1e-12);
        let zero = LambdaSchedule::uniform(0.0, 0.0);
        assert_eq!(compound_loss(0.37, &[w22()], &[slice(3.0)], &zero, RECIP).unwrap(), 0.37);
    }

    #[test]
    fn invalid_epsilon() {
        assert!(LossForm::Reciprocal { epsilon: 0.0 }.validate().is_err());
        assert!(LossForm::default().validate().is_ok());
    }
}
