//! High-order-tuner adaptive observer.
//!
//! The observer injects an adjustable feedback `nu = W(p)^{-1}[varpi^T
//! theta_hat]` with `W(p) = (p + lambda) H(p)` and `varpi = W(p)[phi]`. The
//! improper inverse (pole excess `-(r-1)`) is expanded as a polynomial part
//! plus a strictly proper tail; the polynomial part needs derivatives of
//! `varpi^T theta_hat` up to order `r - 1`, which are taken *algebraically*:
//! derivatives of `varpi` come from the filter realization states and
//! derivatives of `theta_hat` from the tuner states, never from numerical
//! differencing.
//!
//! The tuner integrates, per parameter, `psi_i' = varpi_i e`,
//! `eta_i' = (1 + mu varpi^T varpi)(Gamma eta_i + h psi_i)`,
//! `theta_hat_i' = l^T eta_i`, with `(l, Gamma, h)` a minimal realization of
//! `alpha(0)/alpha(p)` for a Hurwitz `alpha` of order `r - 2`. For `r <= 2`
//! no tuner filters are needed and the adaptation degenerates to
//! `theta_hat' = varpi e`.

use nalgebra::{DMatrix, DVector, DVectorView, RowDVector};
use num_complex::Complex;

use crate::analysis::{hot_mu_bound, require_hurwitz, transmission_zeros};
use crate::error::{Error, Result};
use crate::filters::{LtiFilter, WDecomposition};
use crate::plant::PlantStructure;
use crate::poly;

use super::{AdaptiveObserver, ObserverSignals};

const BINOM: [[f64; 4]; 4] = [
    [1.0, 0.0, 0.0, 0.0],
    [1.0, 1.0, 0.0, 0.0],
    [1.0, 2.0, 1.0, 0.0],
    [1.0, 3.0, 3.0, 1.0],
];

/// How `theta_hat` is formed from the tuner states.
///
/// `Derivative` integrates `theta_hat_i' = l^T eta_i` as printed in the
/// adaptation law; `Direct` reads `theta_hat_i = l^T eta_i` algebraically,
/// the variant some of the high-order-tuner literature uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TunerOutput {
    #[default]
    Derivative,
    Direct,
}

/// Per-parameter tuner realization `(l, Gamma, h)` of `alpha(0)/alpha(p)`
/// with `alpha(p) = (p + lambda_alpha)^{r-2}` in controllable canonical
/// form.
#[derive(Debug, Clone)]
pub struct Tuner {
    gamma_mat: DMatrix<f64>,
    h: DVector<f64>,
    l: DVector<f64>,
}

impl Tuner {
    pub fn new(order: usize, lambda_alpha: f64) -> Result<Self> {
        if order == 0 {
            return Err(Error::Validation(
                "tuner order must be at least 1 (relative degree >= 3)".into(),
            ));
        }
        if !(lambda_alpha > 0.0) {
            return Err(Error::Validation("tuner pole must be positive".into()));
        }
        // alpha(p) = (p + lambda_alpha)^order, monic ascending coefficients.
        let mut alpha = vec![1.0];
        for _ in 0..order {
            alpha = poly::mul(&alpha, &[lambda_alpha, 1.0]);
        }
        let mut gamma_mat = DMatrix::<f64>::zeros(order, order);
        for i in 0..order.saturating_sub(1) {
            gamma_mat[(i, i + 1)] = 1.0;
        }
        for j in 0..order {
            gamma_mat[(order - 1, j)] = -alpha[j];
        }
        let mut h = DVector::zeros(order);
        h[order - 1] = 1.0;
        let mut l = DVector::zeros(order);
        l[0] = alpha[0]; // alpha(0)
        require_hurwitz(&gamma_mat)?;
        Ok(Self { gamma_mat, h, l })
    }

    pub fn order(&self) -> usize {
        self.gamma_mat.nrows()
    }

    pub fn gamma_mat(&self) -> &DMatrix<f64> {
        &self.gamma_mat
    }

    pub fn h(&self) -> &DVector<f64> {
        &self.h
    }

    pub fn l(&self) -> &DVector<f64> {
        &self.l
    }

    /// `l^T (sI - Gamma)^{-1} h` at a complex sample point.
    pub fn transfer_eval(&self, s: Complex<f64>) -> Complex<f64> {
        let (den, num) = poly::siso_transfer(&self.gamma_mat, &self.h, &self.l);
        poly::eval_complex(&num, s) / poly::eval_complex(&den, s)
    }

    /// The Theorem-2 style gain bound for this realization.
    pub fn mu_bound(&self, lambda: f64) -> Result<f64> {
        hot_mu_bound(&self.gamma_mat, &self.l, &self.h, lambda)
    }
}

#[derive(Debug, Clone)]
pub struct HotObserver {
    structure: PlantStructure,
    k: DVector<f64>,
    f: DMatrix<f64>,
    regressor_filter: LtiFilter,
    w: WDecomposition,
    mu: f64,
    tuner: Option<Tuner>,
    mode: TunerOutput,
    r: usize,
    /// Rows `c^T (F + lambda I) F^s` for s = 0..r-1.
    c_w_rows: Vec<RowDVector<f64>>,
    /// Direct feedthrough of W (nonzero only for r = 1).
    d_w: f64,
    /// Coefficient of `phi` in the (r-1)-th derivative of `varpi`.
    markov_phi: f64,
    /// Polynomial part of `W(p)^{-1}`, ascending in the derivative order.
    quotient: Vec<f64>,
    /// Strictly proper tail of `W(p)^{-1}` (controllable canonical), if any.
    remainder: Option<(DMatrix<f64>, DVector<f64>, DVector<f64>)>,
    x_hat0: DVector<f64>,
    theta_hat0: DVector<f64>,
}

impl HotObserver {
    /// Builds the observer.
    ///
    /// Requirements: constant system matrix, `F = A - k c^T` Hurwitz, `H(p)`
    /// minimum phase (the inverse operator realization is a filter over the
    /// zeros of `W`). In strict mode `mu` must exceed the tuner gain bound.
    /// Exact algebraic derivative propagation limits the relative degree to
    /// 4 (3 in direct mode); beyond that the expansion would need
    /// derivatives of the measured error.
    pub fn new(
        structure: PlantStructure,
        k: DVector<f64>,
        lambda: f64,
        mu: f64,
        mode: TunerOutput,
        strict: bool,
    ) -> Result<Self> {
        let n = structure.n();
        let m = structure.m();
        let a = structure
            .a
            .constant()
            .ok_or_else(|| {
                Error::Validation(
                    "the high-order-tuner scheme needs a constant system matrix".into(),
                )
            })?
            .clone();
        if k.len() != n {
            return Err(Error::Dimension(format!(
                "injection gain has length {}, expected {n}",
                k.len()
            )));
        }
        if !(mu > 0.0) {
            return Err(Error::Validation(format!("mu must be positive, got {mu}")));
        }
        let f = &a - &k * structure.c.transpose();
        let regressor_filter = LtiFilter::new(f.clone(), structure.b.clone(), structure.c.clone(), m)?;
        let w = WDecomposition::new(
            LtiFilter::new(f.clone(), structure.b.clone(), structure.c.clone(), 1)?,
            lambda,
        )?;
        let r = w.relative_degree();
        let max_r = match mode {
            TunerOutput::Derivative => 4,
            TunerOutput::Direct => 3,
        };
        if r > max_r {
            return Err(Error::Validation(format!(
                "relative degree {r} exceeds the realizable derivative depth ({max_r}) \
                 for this tuner output mode"
            )));
        }
        if mode == TunerOutput::Direct && r <= 2 {
            return Err(Error::Validation(
                "direct tuner output needs tuner filters (relative degree >= 3)".into(),
            ));
        }
        if let Some(z) = transmission_zeros(&f, &structure.b, &structure.c)
            .iter()
            .find(|z| z.re >= 0.0)
        {
            return Err(Error::NotMinimumPhase { re: z.re, im: z.im });
        }

        // W(p)^{-1} = D_H / ((p + lambda) N_H) = quotient(p) + rem(p)/N_W(p)
        let (den_h, num_h) = poly::siso_transfer(&f, &structure.b, &structure.c);
        let n_w = poly::mul(&[lambda, 1.0], &num_h);
        let (quotient, rem) = poly::div_rem(&den_h, &n_w);
        debug_assert_eq!(quotient.len(), r);
        let remainder = if poly::is_zero(&rem) {
            None
        } else {
            let q = poly::degree(&n_w).unwrap();
            let lead = n_w[q];
            let mut a_rem = DMatrix::<f64>::zeros(q, q);
            for i in 0..q.saturating_sub(1) {
                a_rem[(i, i + 1)] = 1.0;
            }
            for j in 0..q {
                a_rem[(q - 1, j)] = -n_w[j] / lead;
            }
            require_hurwitz(&a_rem)?;
            let mut b_rem = DVector::zeros(q);
            b_rem[q - 1] = 1.0;
            let mut c_rem = DVector::zeros(q);
            for (j, coef) in rem.iter().enumerate() {
                c_rem[j] = coef / lead;
            }
            Some((a_rem, b_rem, c_rem))
        };

        let tuner = if r >= 3 {
            let tuner = Tuner::new(r - 2, lambda)?;
            if strict {
                let bound = tuner.mu_bound(lambda)?;
                if mu <= bound {
                    return Err(Error::Validation(format!(
                        "mu = {mu} does not exceed the tuner gain bound {bound:.6}"
                    )));
                }
            }
            Some(tuner)
        } else {
            None
        };

        let c_w = w.output_row();
        let mut c_w_rows = Vec::with_capacity(r);
        let mut row = c_w.clone();
        for _ in 0..r {
            c_w_rows.push(row.clone());
            row = &row * &f;
        }
        let d_w = w.feedthrough();
        let markov_phi = if r >= 2 {
            let mut row = c_w;
            for _ in 0..r - 2 {
                row = &row * &f;
            }
            (&row * &structure.b)[(0, 0)]
        } else {
            0.0
        };

        Ok(Self {
            x_hat0: DVector::zeros(n),
            theta_hat0: DVector::zeros(m),
            structure,
            k,
            f,
            regressor_filter,
            w,
            mu,
            tuner,
            mode,
            r,
            c_w_rows,
            d_w,
            markov_phi,
            quotient,
            remainder,
        })
    }

    pub fn with_initial(mut self, x_hat0: DVector<f64>, theta_hat0: DVector<f64>) -> Result<Self> {
        if x_hat0.len() != self.structure.n() || theta_hat0.len() != self.structure.m() {
            return Err(Error::Dimension("initial state sizes do not match".into()));
        }
        if self.mode == TunerOutput::Direct && theta_hat0.iter().any(|v| *v != 0.0) {
            return Err(Error::Validation(
                "direct tuner output derives theta_hat from the tuner state; \
                 a nonzero initial estimate is not representable"
                    .into(),
            ));
        }
        self.x_hat0 = x_hat0;
        self.theta_hat0 = theta_hat0;
        Ok(self)
    }

    pub fn relative_degree(&self) -> usize {
        self.r
    }

    pub fn w(&self) -> &WDecomposition {
        &self.w
    }

    pub fn tuner(&self) -> Option<&Tuner> {
        self.tuner.as_ref()
    }

    fn n(&self) -> usize {
        self.structure.n()
    }

    fn m(&self) -> usize {
        self.structure.m()
    }

    fn tuner_order(&self) -> usize {
        self.tuner.as_ref().map(|t| t.order()).unwrap_or(0)
    }

    fn has_theta_state(&self) -> bool {
        self.mode == TunerOutput::Derivative || self.tuner.is_none()
    }

    fn rem_dim(&self) -> usize {
        self.remainder.as_ref().map(|(a, _, _)| a.nrows()).unwrap_or(0)
    }

    // Layout: [x_hat (n) | theta_hat (m)? | W filter (n m) | psi (m)? |
    //          eta (m (r-2))? | remainder (q)?]
    fn off_theta(&self) -> usize {
        self.n()
    }

    fn off_xh(&self) -> usize {
        self.off_theta() + if self.has_theta_state() { self.m() } else { 0 }
    }

    fn off_psi(&self) -> usize {
        self.off_xh() + self.n() * self.m()
    }

    fn off_eta(&self) -> usize {
        self.off_psi() + if self.tuner.is_some() { self.m() } else { 0 }
    }

    fn off_rem(&self) -> usize {
        self.off_eta() + self.m() * self.tuner_order()
    }

    /// s-th derivative of `varpi_i`, algebraic in the filter state and the
    /// current regressor value.
    fn varpi_deriv(&self, s: usize, xh_i: DVectorView<f64>, phi_i: f64) -> f64 {
        let base = (&self.c_w_rows[s] * xh_i)[(0, 0)];
        if s == 0 {
            base + self.d_w * phi_i
        } else if s == self.r - 1 {
            base + self.markov_phi * phi_i
        } else {
            base
        }
    }

    /// Derivatives of `theta_hat` up to order `upto`, algebraic in the
    /// tuner states (repeated substitution of the tuner dynamics).
    fn theta_derivs(
        &self,
        state: DVectorView<f64>,
        varpi: &DVector<f64>,
        varpi_dot: &DVector<f64>,
        e: f64,
        upto: usize,
    ) -> Vec<DVector<f64>> {
        let m = self.m();
        let mut out: Vec<DVector<f64>> = Vec::with_capacity(upto + 1);
        match &self.tuner {
            None => {
                // Relative degree <= 2: theta_hat' = varpi e.
                out.push(DVector::from(state.rows(self.off_theta(), m)));
                if upto >= 1 {
                    out.push(varpi * e);
                }
                debug_assert!(upto <= 1);
            }
            Some(tuner) => {
                let ord = tuner.order();
                let g = 1.0 + self.mu * varpi.norm_squared();
                let g_dot = 2.0 * self.mu * varpi.dot(varpi_dot);
                let psi = state.rows(self.off_psi(), m);
                // Per-parameter L-projections of m_i = Gamma eta_i + h psi_i.
                let mut lm = DVector::zeros(m);
                let mut l_gamma_m = DVector::zeros(m);
                let mut l_eta = DVector::zeros(m);
                let lh = tuner.l().dot(tuner.h());
                let l_gamma = (tuner.l().transpose() * tuner.gamma_mat()).transpose();
                let l_gamma2 = (l_gamma.transpose() * tuner.gamma_mat()).transpose();
                for i in 0..m {
                    let eta_i = state.rows(self.off_eta() + i * ord, ord);
                    l_eta[i] = tuner.l().dot(&eta_i);
                    lm[i] = l_gamma.dot(&eta_i) + lh * psi[i];
                    l_gamma_m[i] = l_gamma2.dot(&eta_i) + l_gamma.dot(tuner.h()) * psi[i];
                }
                let chain: Vec<DVector<f64>> = match self.mode {
                    TunerOutput::Derivative => {
                        let mut c = vec![
                            DVector::from(state.rows(self.off_theta(), m)),
                            l_eta,
                        ];
                        if upto >= 2 {
                            c.push(&lm * g);
                        }
                        if upto >= 3 {
                            let mut d3 = DVector::zeros(m);
                            for i in 0..m {
                                d3[i] = g_dot * lm[i] + g * (g * l_gamma_m[i] + lh * varpi[i] * e);
                            }
                            c.push(d3);
                        }
                        c
                    }
                    TunerOutput::Direct => {
                        let mut c = vec![l_eta, &lm * g];
                        if upto >= 2 {
                            let mut d2 = DVector::zeros(m);
                            for i in 0..m {
                                d2[i] = g_dot * lm[i] + g * (g * l_gamma_m[i] + lh * varpi[i] * e);
                            }
                            c.push(d2);
                        }
                        c
                    }
                };
                out = chain;
            }
        }
        out.truncate(upto + 1);
        out
    }

    fn compute(&self, t: f64, state: DVectorView<f64>, y_r: f64) -> (ObserverSignals, DVector<f64>) {
        let n = self.n();
        let m = self.m();
        let x_hat = state.rows(0, n);
        let xh = state.rows(self.off_xh(), n * m);

        let phi = self.structure.phi.eval(t, y_r);
        let y_hat = self.structure.c.dot(&x_hat);
        let e = y_r - y_hat;

        let varpi = DVector::from_iterator(
            m,
            (0..m).map(|i| self.varpi_deriv(0, xh.rows(i * n, n), phi[i])),
        );
        let varpi_dot = if self.r >= 2 {
            DVector::from_iterator(
                m,
                (0..m).map(|i| self.varpi_deriv(1, xh.rows(i * n, n), phi[i])),
            )
        } else {
            DVector::zeros(m)
        };

        let theta_chain = self.theta_derivs(state, &varpi, &varpi_dot, e, self.r - 1);
        let theta_hat = theta_chain[0].clone();

        // u = varpi^T theta_hat and its derivatives by the Leibniz rule.
        let mut u_derivs = vec![0.0; self.r];
        for (j, u_j) in u_derivs.iter_mut().enumerate() {
            for s in 0..=j {
                for i in 0..m {
                    *u_j += BINOM[j][s]
                        * self.varpi_deriv(s, xh.rows(i * n, n), phi[i])
                        * theta_chain[j - s][i];
                }
            }
        }

        let mut nu: f64 = self
            .quotient
            .iter()
            .zip(u_derivs.iter())
            .map(|(q, u)| q * u)
            .sum();
        if let Some((_, _, c_rem)) = &self.remainder {
            nu += c_rem.dot(&state.rows(self.off_rem(), self.rem_dim()));
        }

        let x_hat_dot = self.structure.a.constant().unwrap() * x_hat
            + self.structure.phi0.eval(t, y_r)
            + &self.structure.b * nu
            + &self.k * e;

        let theta_hat_dot = if self.tuner.is_none() {
            &varpi * e
        } else {
            theta_chain[1].clone()
        };

        let mut d = DVector::zeros(self.state_dim());
        d.rows_mut(0, n).copy_from(&x_hat_dot);
        if self.has_theta_state() {
            d.rows_mut(self.off_theta(), m).copy_from(&theta_hat_dot);
        }
        d.rows_mut(self.off_xh(), n * m)
            .copy_from(&self.regressor_filter.derivative(xh, &phi));
        if let Some(tuner) = &self.tuner {
            let ord = tuner.order();
            let g = 1.0 + self.mu * varpi.norm_squared();
            let psi = state.rows(self.off_psi(), m);
            for i in 0..m {
                d[self.off_psi() + i] = varpi[i] * e;
                let eta_i = state.rows(self.off_eta() + i * ord, ord);
                let m_i = tuner.gamma_mat() * eta_i + tuner.h() * psi[i];
                d.rows_mut(self.off_eta() + i * ord, ord).copy_from(&(m_i * g));
            }
        }
        if let Some((a_rem, b_rem, _)) = &self.remainder {
            let q = self.rem_dim();
            let x_rem = state.rows(self.off_rem(), q);
            d.rows_mut(self.off_rem(), q)
                .copy_from(&(a_rem * x_rem + b_rem * u_derivs[0]));
        }

        let signals = ObserverSignals {
            y_hat,
            e,
            e_aug: e,
            x_hat: DVector::from(x_hat),
            theta_hat,
            theta_hat_dot,
            omega: varpi,
            nu: Some(nu),
        };
        (signals, d)
    }
}

impl AdaptiveObserver for HotObserver {
    fn structure(&self) -> &PlantStructure {
        &self.structure
    }

    fn state_dim(&self) -> usize {
        let (n, m) = (self.n(), self.m());
        let theta = if self.has_theta_state() { m } else { 0 };
        let tuner = if self.tuner.is_some() {
            m + m * self.tuner_order()
        } else {
            0
        };
        n + theta + n * m + tuner + self.rem_dim()
    }

    fn initial_state(&self) -> DVector<f64> {
        let mut s = DVector::zeros(self.state_dim());
        s.rows_mut(0, self.n()).copy_from(&self.x_hat0);
        if self.has_theta_state() {
            s.rows_mut(self.off_theta(), self.m()).copy_from(&self.theta_hat0);
        }
        s
    }

    fn derivative(&self, t: f64, state: DVectorView<f64>, y_r: f64) -> DVector<f64> {
        self.compute(t, state, y_r).1
    }

    fn signals(&self, t: f64, state: DVectorView<f64>, y_r: f64) -> ObserverSignals {
        self.compute(t, state, y_r).0
    }

    fn error_matrix(&self, _y_r: f64) -> DMatrix<f64> {
        self.f.clone()
    }

    fn injection_gain(&self, _y_r: f64) -> DVector<f64> {
        self.k.clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{Regressor, Signal, SystemMatrix};
    use approx::assert_relative_eq;

    fn sine_regressor() -> Regressor {
        Regressor::from_signals(vec![Signal::Sine {
            amplitude: 1.0,
            period: 2.0 * std::f64::consts::PI,
            offset: 0.0,
            phase: 0.0,
        }])
    }

    /// H(p) = 1/(p+1)^2 in observer canonical form, k = 0.
    fn structure_r2() -> PlantStructure {
        PlantStructure::new(
            SystemMatrix::Constant(DMatrix::from_row_slice(2, 2, &[-2.0, 1.0, -1.0, 0.0])),
            DVector::from_vec(vec![0.0, 1.0]),
            DVector::from_vec(vec![1.0, 0.0]),
            Regressor::zero(2),
            sine_regressor(),
        )
        .unwrap()
    }

    /// H(p) = 1/(p+1)^3 in observer canonical form, k = 0.
    pub(crate) fn structure_r3() -> PlantStructure {
        PlantStructure::new(
            SystemMatrix::Constant(DMatrix::from_row_slice(
                3,
                3,
                &[-3.0, 1.0, 0.0, -3.0, 0.0, 1.0, -1.0, 0.0, 0.0],
            )),
            DVector::from_vec(vec![0.0, 0.0, 1.0]),
            DVector::from_vec(vec![1.0, 0.0, 0.0]),
            Regressor::zero(3),
            sine_regressor(),
        )
        .unwrap()
    }

    #[test]
    fn relative_degrees_detected() {
        let obs = HotObserver::new(
            structure_r2(),
            DVector::zeros(2),
            1.0,
            1.0,
            TunerOutput::Derivative,
            false,
        )
        .unwrap();
        assert_eq!(obs.relative_degree(), 2);
        assert!(obs.tuner().is_none());

        let obs = HotObserver::new(
            structure_r3(),
            DVector::zeros(3),
            1.0,
            6.0,
            TunerOutput::Derivative,
            false,
        )
        .unwrap();
        assert_eq!(obs.relative_degree(), 3);
        assert_eq!(obs.tuner().unwrap().order(), 1);
    }

    #[test]
    fn strict_mode_enforces_gain_bound() {
        // Gamma = -1, l = h = 1, lambda = 1: bound = 3.
        let tuner = Tuner::new(1, 1.0).unwrap();
        assert_relative_eq!(tuner.mu_bound(1.0).unwrap(), 3.0, epsilon = 1e-12);

        let reject = HotObserver::new(
            structure_r3(),
            DVector::zeros(3),
            1.0,
            0.9 * 3.0,
            TunerOutput::Derivative,
            true,
        );
        assert!(reject.is_err());

        let accept = HotObserver::new(
            structure_r3(),
            DVector::zeros(3),
            1.0,
            2.0 * 3.0,
            TunerOutput::Derivative,
            true,
        );
        assert!(accept.is_ok());
    }

    #[test]
    fn tuner_realizes_alpha_ratio() {
        let tuner = Tuner::new(2, 1.5).unwrap();
        // alpha(p) = (p + 1.5)^2, so the transfer must equal 2.25/(p+1.5)^2.
        for &s in &[Complex::new(0.0, 1.0), Complex::new(2.0, -0.5)] {
            let expected = Complex::new(2.25, 0.0) / ((s + 1.5) * (s + 1.5));
            assert!((tuner.transfer_eval(s) - expected).norm() < 1e-10);
        }
    }

    #[test]
    fn zero_regressor_freezes_adaptation() {
        let s = PlantStructure::new(
            SystemMatrix::Constant(DMatrix::from_row_slice(
                3,
                3,
                &[-3.0, 1.0, 0.0, -3.0, 0.0, 1.0, -1.0, 0.0, 0.0],
            )),
            DVector::from_vec(vec![0.0, 0.0, 1.0]),
            DVector::from_vec(vec![1.0, 0.0, 0.0]),
            Regressor::zero(3),
            Regressor::zero(1),
        )
        .unwrap();
        let obs = HotObserver::new(s, DVector::zeros(3), 1.0, 6.0, TunerOutput::Derivative, false)
            .unwrap();
        let state = obs.initial_state();
        let d = obs.derivative(0.0, state.rows(0, obs.state_dim()), 0.7);
        // psi, eta, theta_hat derivatives all vanish without excitation.
        assert_eq!(d[obs.off_theta()], 0.0);
        assert_eq!(d[obs.off_psi()], 0.0);
        assert_eq!(d[obs.off_eta()], 0.0);
    }

    #[test]
    fn r1_needs_no_derivative_expansion() {
        // H(p) = 1/(p+1): relative degree 1, quotient is a constant.
        let s = PlantStructure::new(
            SystemMatrix::Constant(DMatrix::from_element(1, 1, -1.0)),
            DVector::from_vec(vec![1.0]),
            DVector::from_vec(vec![1.0]),
            Regressor::zero(1),
            sine_regressor(),
        )
        .unwrap();
        let obs =
            HotObserver::new(s, DVector::zeros(1), 2.0, 1.0, TunerOutput::Derivative, false)
                .unwrap();
        assert_eq!(obs.relative_degree(), 1);
        assert_eq!(obs.quotient.len(), 1);
    }

    #[test]
    fn steady_state_nu_matches_w_inverse_dc() {
        // Frozen tuner (eta = psi = 0) and W filter at its constant-input
        // steady state: nu must equal u / W(0) exactly.
        for lambda in [1.0, 2.0] {
            let obs = HotObserver::new(
                structure_r3(),
                DVector::zeros(3),
                lambda,
                6.0,
                TunerOutput::Derivative,
                false,
            )
            .unwrap();
            let phi_val = 0.8; // constant regressor value for this check
            let theta_val = 1.7;
            let f = obs.f.clone();
            let x_ss = -f.lu().solve(&(&obs.structure.b * phi_val)).unwrap();
            let mut state = obs.initial_state();
            state[obs.off_theta()] = theta_val;
            state.rows_mut(obs.off_xh(), 3).copy_from(&x_ss);
            let varpi = obs.varpi_deriv(0, state.rows(obs.off_xh(), 3), phi_val);
            let u = varpi * theta_val;
            if let Some((a_rem, b_rem, _)) = &obs.remainder {
                let x_rem = -a_rem.clone().lu().solve(&(b_rem * u)).unwrap();
                let q = x_rem.len();
                state.rows_mut(obs.off_rem(), q).copy_from(&x_rem);
            }
            // Constant regressor: a custom structure is needed for phi to be
            // constant, so call the derivative chain directly instead.
            let theta_chain = obs.theta_derivs(
                state.rows(0, obs.state_dim()),
                &DVector::from_vec(vec![varpi]),
                &DVector::zeros(1),
                0.0,
                obs.r - 1,
            );
            let mut u_derivs = vec![0.0; obs.r];
            for (j, u_j) in u_derivs.iter_mut().enumerate() {
                for s in 0..=j {
                    *u_j += BINOM[j][s]
                        * obs.varpi_deriv(s, state.rows(obs.off_xh(), 3), phi_val)
                        * theta_chain[j - s][0];
                }
            }
            let mut nu: f64 = obs
                .quotient
                .iter()
                .zip(u_derivs.iter())
                .map(|(q, u)| q * u)
                .sum();
            if let Some((_, _, c_rem)) = &obs.remainder {
                nu += c_rem.dot(&state.rows(obs.off_rem(), obs.rem_dim()));
            }
            let w0 = obs.w.eval(Complex::new(0.0, 0.0)).re;
            assert_relative_eq!(nu * w0, u, epsilon = 1e-9);
        }
    }
}
