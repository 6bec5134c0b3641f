//! Covariance functions: a product of per-dimension squared-exponential
//! factors (objective and IR surrogates) and a product of Matérn-5/2 factors
//! scaled by a constant (feasibility-indicator surrogate).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::design::{DesignPoint, DesignSpace};
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error("lengthscale #{index} is not strictly positive ({value})")]
    NonPositiveLengthscale { index: usize, value: f64 },
    #[error("signal variance must be positive, got {0}")]
    NonPositiveVariance(f64),
    #[error("constant factor must be positive, got {0}")]
    NonPositiveConstant(f64),
    #[error("input has {got} dimensions, kernel expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    /// `σ² Π_d exp(-(x_d - y_d)² / 2ℓ_d²)`
    SeProduct,
    /// `c σ² Π_d m52(|x_d - y_d| / ℓ_d)`
    MaternProductConstant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct KernelSpec<T> {
    pub kind: KernelKind,
    pub lengthscales: Vec<T>,
    pub signal_variance: T,
    /// Only used by [`KernelKind::MaternProductConstant`].
    pub constant_value: T,
}

impl<T: Scalar> KernelSpec<T> {
    pub fn se_product(lengthscales: Vec<T>, signal_variance: T) -> Self {
        Self {
            kind: KernelKind::SeProduct,
            lengthscales,
            signal_variance,
            constant_value: T::one(),
        }
    }

    pub fn matern_product(lengthscales: Vec<T>, signal_variance: T, constant_value: T) -> Self {
        Self {
            kind: KernelKind::MaternProductConstant,
            lengthscales,
            signal_variance,
            constant_value,
        }
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn validate(&self) -> Result<(), KernelError> {
        for (index, &l) in self.lengthscales.iter().enumerate() {
            if !(l > T::zero()) || !l.is_finite() {
                return Err(KernelError::NonPositiveLengthscale { index, value: l.as_f64() });
            }
        }
        if !(self.signal_variance > T::zero()) {
            return Err(KernelError::NonPositiveVariance(self.signal_variance.as_f64()));
        }
        if self.kind == KernelKind::MaternProductConstant && !(self.constant_value > T::zero()) {
            return Err(KernelError::NonPositiveConstant(self.constant_value.as_f64()));
        }
        Ok(())
    }

    /// Prior variance `k(x, x)`.
    pub fn diag(&self) -> T {
        match self.kind {
            KernelKind::SeProduct => self.signal_variance,
            KernelKind::MaternProductConstant => self.signal_variance * self.constant_value,
        }
    }

    /// `k(x, y)` on already-normalized inputs. Does not re-validate; use
    /// [`kernel_eval`] for a checked call.
    pub fn eval(&self, x: &[T], y: &[T]) -> T {
        match self.kind {
            KernelKind::SeProduct => {
                let half = T::lit(0.5);
                let mut k = self.signal_variance;
                for ((&a, &b), &l) in x.iter().zip(y).zip(&self.lengthscales) {
                    let d = (a - b) / l;
                    k = k * (-half * d * d).exp();
                }
                k
            }
            KernelKind::MaternProductConstant => {
                let mut k = self.constant_value * self.signal_variance;
                for ((&a, &b), &l) in x.iter().zip(y).zip(&self.lengthscales) {
                    k = k * matern52((a - b).abs() / l);
                }
                k
            }
        }
    }

    /// Gram matrix, row-major, exactly symmetric.
    pub fn gram(&self, xs: &[Vec<T>]) -> Vec<Vec<T>> {
        let n = xs.len();
        let mut k = vec![vec![T::zero(); n]; n];
        for i in 0..n {
            k[i][i] = self.eval(&xs[i], &xs[i]);
            for j in 0..i {
                let v = self.eval(&xs[i], &xs[j]);
                k[i][j] = v;
                k[j][i] = v;
            }
        }
        k
    }
}

fn matern52<T: Scalar>(r: T) -> T {
    let s5 = T::lit(5.0_f64.sqrt());
    let sr = s5 * r;
    (T::one() + sr + T::lit(5.0 / 3.0) * r * r) * (-sr).exp()
}

/// Checked kernel evaluation on two designs, normalized onto the unit square
/// of `space` first.
pub fn kernel_eval<T: Scalar>(
    spec: &KernelSpec<T>,
    space: &DesignSpace,
    x: &DesignPoint,
    y: &DesignPoint,
) -> Result<T, KernelError> {
    spec.validate()?;
    if spec.dim() != 2 {
        return Err(KernelError::DimensionMismatch { expected: spec.dim(), got: 2 });
    }
    Ok(spec.eval(&space.features(x), &space.features(y)))
}
