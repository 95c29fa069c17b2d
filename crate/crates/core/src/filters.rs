//! State-space realizations of the filtering operators used by the observer
//! schemes: channel-wise `H(p)[.]` filtering of regressors, the
//! `W(p) = (p + lambda) H(p)` decomposition, and the time-varying matrix and
//! auxiliary augmentation filters.
//!
//! Filter state lives in the joint scenario state vector; the types here
//! describe realizations and expose pure derivative/output maps so all
//! couplings stay consistent within one integration step.

use nalgebra::{DMatrix, DVector, DVectorView, RowDVector};
use num_complex::Complex;

use crate::analysis::require_hurwitz;
use crate::error::{Error, Result};
use crate::poly;

/// Channel-wise realization of an asymptotically stable `H(p)`: each of the
/// `channels` inputs is filtered by an independent copy of `(F, b_f, c_f)`.
#[derive(Debug, Clone)]
pub struct LtiFilter {
    f: DMatrix<f64>,
    b: DVector<f64>,
    c: DVector<f64>,
    channels: usize,
}

impl LtiFilter {
    pub fn new(f: DMatrix<f64>, b: DVector<f64>, c: DVector<f64>, channels: usize) -> Result<Self> {
        let n = f.nrows();
        if f.ncols() != n || b.len() != n || c.len() != n {
            return Err(Error::Dimension(format!(
                "filter realization needs square F with matching b, c (n = {n})"
            )));
        }
        if channels == 0 {
            return Err(Error::Validation("filter needs at least one channel".into()));
        }
        require_hurwitz(&f)?;
        Ok(Self { f, b, c, channels })
    }

    pub fn order(&self) -> usize {
        self.f.nrows()
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    /// Total state dimension: order per channel.
    pub fn state_dim(&self) -> usize {
        self.order() * self.channels
    }

    pub fn f(&self) -> &DMatrix<f64> {
        &self.f
    }

    pub fn b(&self) -> &DVector<f64> {
        &self.b
    }

    pub fn c(&self) -> &DVector<f64> {
        &self.c
    }

    /// State derivative for all channels stacked channel-major.
    pub fn derivative(&self, state: DVectorView<f64>, inputs: &DVector<f64>) -> DVector<f64> {
        debug_assert_eq!(state.len(), self.state_dim());
        debug_assert_eq!(inputs.len(), self.channels);
        let n = self.order();
        let mut out = DVector::zeros(self.state_dim());
        for j in 0..self.channels {
            let xj = state.rows(j * n, n);
            let dxj = &self.f * xj + &self.b * inputs[j];
            out.rows_mut(j * n, n).copy_from(&dxj);
        }
        out
    }

    /// Filter outputs `c_f^T x_j`, one per channel.
    pub fn outputs(&self, state: DVectorView<f64>) -> DVector<f64> {
        let n = self.order();
        DVector::from_iterator(
            self.channels,
            (0..self.channels).map(|j| self.c.dot(&state.rows(j * n, n))),
        )
    }

    /// `H(s)` at a complex sample point.
    pub fn eval(&self, s: Complex<f64>) -> Complex<f64> {
        let (den, num) = poly::siso_transfer(&self.f, &self.b, &self.c);
        poly::eval_complex(&num, s) / poly::eval_complex(&den, s)
    }

    /// DC gain `H(0) = -c^T F^{-1} b`.
    pub fn dc_gain(&self) -> f64 {
        let f_inv = self.f.clone().try_inverse().expect("Hurwitz implies invertible");
        -self.c.dot(&(f_inv * &self.b))
    }
}

/// Realization of `W(p) = (p + lambda) H(p)` on top of the `H` realization.
///
/// The W output is formed from the H state flow algebraically,
/// `W[u] = c_f^T (F x + b_f u) + lambda c_f^T x`, never by numerical
/// differencing, so operator identities hold to integration accuracy.
#[derive(Debug, Clone)]
pub struct WDecomposition {
    h: LtiFilter,
    lambda: f64,
    relative_degree: usize,
}

impl WDecomposition {
    pub fn new(h: LtiFilter, lambda: f64) -> Result<Self> {
        if !(lambda > 0.0) {
            return Err(Error::Validation(format!(
                "lambda must be positive, got {lambda}"
            )));
        }
        let (den, num) = poly::siso_transfer(h.f(), h.b(), h.c());
        let relative_degree = match poly::degree(&num) {
            Some(d) => h.order() - d,
            None => {
                return Err(Error::Validation(
                    "H(p) is identically zero; cannot build W(p)".into(),
                ))
            }
        };
        debug_assert!(poly::degree(&den) == Some(h.order()));
        Ok(Self {
            h,
            lambda,
            relative_degree,
        })
    }

    pub fn h(&self) -> &LtiFilter {
        &self.h
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Pole excess of `H(p)`.
    pub fn relative_degree(&self) -> usize {
        self.relative_degree
    }

    /// Output row `c^T (F + lambda I)` of the W realization.
    pub fn output_row(&self) -> RowDVector<f64> {
        let n = self.h.order();
        self.h.c().transpose() * (self.h.f() + DMatrix::<f64>::identity(n, n) * self.lambda)
    }

    /// Direct feedthrough `c^T b` (nonzero only for relative degree 1).
    pub fn feedthrough(&self) -> f64 {
        self.h.c().dot(self.h.b())
    }

    /// `W[u]` for one channel given the H-filter state and the current input.
    pub fn output(&self, h_state: DVectorView<f64>, input: f64) -> f64 {
        let flow = self.h.f() * h_state + self.h.b() * input;
        self.h.c().dot(&flow) + self.lambda * self.h.c().dot(&h_state)
    }

    /// `W(s)` at a complex sample point.
    pub fn eval(&self, s: Complex<f64>) -> Complex<f64> {
        (s + self.lambda) * self.h.eval(s)
    }
}

/// Shape of the matrix regressor filter `Omega' = G(t) Omega + b phibar^T`,
/// `Omega` being n x m with one column per unknown parameter.
#[derive(Debug, Clone, Copy)]
pub struct MatrixRegressorFilter {
    pub n: usize,
    pub m: usize,
}

impl MatrixRegressorFilter {
    pub fn state_dim(&self) -> usize {
        self.n * self.m
    }

    pub fn derivative(
        &self,
        omega: &DMatrix<f64>,
        g_t: &DMatrix<f64>,
        b: &DVector<f64>,
        phibar: &DVector<f64>,
    ) -> DMatrix<f64> {
        debug_assert_eq!(omega.nrows(), self.n);
        debug_assert_eq!(omega.ncols(), self.m);
        g_t * omega + b * phibar.transpose()
    }

    /// Filtered regressor `omega = c^T Omega`.
    pub fn output(&self, omega: &DMatrix<f64>, c: &DVector<f64>) -> DVector<f64> {
        (c.transpose() * omega).transpose()
    }
}

/// Shape of the auxiliary filter `eta' = G(t) eta - Omega dtheta_hat/dt`.
///
/// `theta_hat_dot` must be the adaptation law's right-hand side at the same
/// instant, otherwise the auxiliary-error identity breaks.
#[derive(Debug, Clone, Copy)]
pub struct AuxiliaryFilter {
    pub n: usize,
}

impl AuxiliaryFilter {
    pub fn derivative(
        &self,
        eta: &DVector<f64>,
        g_t: &DMatrix<f64>,
        omega: &DMatrix<f64>,
        theta_hat_dot: &DVector<f64>,
    ) -> DVector<f64> {
        debug_assert_eq!(eta.len(), self.n);
        g_t * eta - omega * theta_hat_dot
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{rk4_step, FnOde};
    use approx::assert_relative_eq;

    fn first_order_lag() -> LtiFilter {
        // H(p) = 1/(p+1)
        LtiFilter::new(
            DMatrix::from_element(1, 1, -1.0),
            DVector::from_vec(vec![1.0]),
            DVector::from_vec(vec![1.0]),
            1,
        )
        .unwrap()
    }

    #[test]
    fn construction_rejects_non_hurwitz() {
        assert!(LtiFilter::new(
            DMatrix::from_element(1, 1, 1.0),
            DVector::from_vec(vec![1.0]),
            DVector::from_vec(vec![1.0]),
            1,
        )
        .is_err());
        assert!(LtiFilter::new(
            -DMatrix::<f64>::identity(2, 2),
            DVector::from_vec(vec![0.0, 1.0]),
            DVector::from_vec(vec![1.0, 0.0]),
            3,
        )
        .is_ok());
    }

    #[test]
    fn zero_input_zero_state_stays_zero() {
        let filt = first_order_lag();
        let state = DVector::zeros(1);
        let d = filt.derivative(state.rows(0, 1), &DVector::zeros(1));
        assert_eq!(d[0], 0.0);
        assert_eq!(filt.outputs(state.rows(0, 1))[0], 0.0);
    }

    #[test]
    fn constant_input_converges_to_dc_gain() {
        // H(p) = 2/(p+2): dc gain 1; drive with 3.0
        let filt = LtiFilter::new(
            DMatrix::from_element(1, 1, -2.0),
            DVector::from_vec(vec![2.0]),
            DVector::from_vec(vec![1.0]),
            1,
        )
        .unwrap();
        let sys = FnOde::new(1, |_t, x: &nalgebra::DVector<f64>, dx: &mut nalgebra::DVector<f64>| {
            dx.copy_from(&filt.derivative(x.rows(0, 1), &DVector::from_vec(vec![3.0])));
        });
        let mut x = DVector::zeros(1);
        let mut t = 0.0;
        while t < 10.0 {
            x = rk4_step(&sys, t, &x, 1e-3).unwrap();
            t += 1e-3;
        }
        let out = filt.outputs(x.rows(0, 1))[0];
        assert_relative_eq!(out, filt.dc_gain() * 3.0, epsilon = 1e-6);
    }

    #[test]
    fn exponential_input_matches_analytic_convolution() {
        // H(p) = 1/(p+1), u = e^{-2t}, zero state: y = e^{-t} - e^{-2t}.
        let filt = first_order_lag();
        let sys = FnOde::new(1, |t: f64, x: &nalgebra::DVector<f64>, dx: &mut nalgebra::DVector<f64>| {
            let u = DVector::from_vec(vec![(-2.0 * t).exp()]);
            dx.copy_from(&filt.derivative(x.rows(0, 1), &u));
        });
        let mut x = DVector::zeros(1);
        let mut t: f64 = 0.0;
        let h = 1e-3;
        while t < 3.0 - h / 2.0 {
            x = rk4_step(&sys, t, &x, h).unwrap();
            t += h;
        }
        let expected = (-t).exp() - (-2.0 * t).exp();
        assert_relative_eq!(filt.outputs(x.rows(0, 1))[0], expected, epsilon = 1e-6);
    }

    #[test]
    fn w_rational_identity_at_sample_point() {
        let h = LtiFilter::new(
            DMatrix::from_row_slice(2, 2, &[-2.0, 1.0, -1.0, 0.0]),
            DVector::from_vec(vec![0.0, 1.0]),
            DVector::from_vec(vec![1.0, 0.0]),
            1,
        )
        .unwrap();
        let w = WDecomposition::new(h, 0.7).unwrap();
        assert_eq!(w.relative_degree(), 2);
        for &s in &[Complex::new(1.0, 0.0), Complex::new(0.3, 2.0)] {
            let lhs = w.eval(s);
            let rhs = (s + w.lambda()) * w.h().eval(s);
            assert!((lhs - rhs).norm() < 1e-12);
        }
    }

    #[test]
    fn w_output_converges_to_w0_for_constant_input() {
        // W(0) = lambda H(0)
        let h = LtiFilter::new(
            DMatrix::from_row_slice(2, 2, &[-2.0, 1.0, -1.0, 0.0]),
            DVector::from_vec(vec![0.0, 1.0]),
            DVector::from_vec(vec![1.0, 0.0]),
            1,
        )
        .unwrap();
        let w = WDecomposition::new(h, 0.7).unwrap();
        let u = 2.5;
        let sys = FnOde::new(2, |_t, x: &nalgebra::DVector<f64>, dx: &mut nalgebra::DVector<f64>| {
            dx.copy_from(&w.h().derivative(x.rows(0, 2), &DVector::from_vec(vec![u])));
        });
        let mut x = DVector::zeros(2);
        let mut t = 0.0;
        while t < 25.0 {
            x = rk4_step(&sys, t, &x, 1e-3).unwrap();
            t += 1e-3;
        }
        let out = w.output(x.rows(0, 2), u);
        let expected = w.lambda() * w.h().dc_gain() * u;
        assert_relative_eq!(out, expected, epsilon = 1e-6);
        // Zero input, zero state stays zero.
        assert_eq!(w.output(DVector::zeros(2).rows(0, 2), 0.0), 0.0);
    }

    #[test]
    fn omega_filter_hand_values() {
        let filt = MatrixRegressorFilter { n: 3, m: 1 };
        let omega = DMatrix::<f64>::zeros(3, 1);
        let g = -DMatrix::<f64>::identity(3, 3);
        let b = DVector::from_vec(vec![0.0, 1.0, 0.0]);
        let phibar = DVector::from_vec(vec![2.0]);
        let d = filt.derivative(&omega, &g, &b, &phibar);
        assert_eq!(d.column(0), DVector::from_vec(vec![0.0, 2.0, 0.0]).column(0));

        let zero = filt.derivative(&omega, &g, &b, &DVector::zeros(1));
        assert!(zero.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn eta_filter_hand_values() {
        let filt = AuxiliaryFilter { n: 3 };
        let eta = DVector::zeros(3);
        let g = -DMatrix::<f64>::identity(3, 3);
        let omega = DMatrix::<f64>::identity(3, 3);
        let d = filt.derivative(&eta, &g, &omega, &DVector::from_vec(vec![1.0, 0.0, 0.0]));
        assert_eq!(d, DVector::from_vec(vec![-1.0, 0.0, 0.0]));
        // Frozen adaptation, eta at rest: stays at rest.
        let d0 = filt.derivative(&eta, &g, &omega, &DVector::zeros(3));
        assert!(d0.iter().all(|v| *v == 0.0));
    }
}
