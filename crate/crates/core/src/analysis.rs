//! Verification toolkit: persistent-excitation metric, Hurwitz and
//! minimum-phase checks, Lyapunov solves, the high-order-tuner gain bound,
//! residual-set bounds and the noise-propagation system used by the
//! robustness tests.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::plant::PlantStructure;
use crate::poly;

/// Result of the empirical persistent-excitation check: the smallest
/// windowed-Gram minimum eigenvalue observed over the series.
#[derive(Debug, Clone, Serialize)]
pub struct PeReport {
    /// Window length (time units).
    pub window: f64,
    /// Smallest minimum eigenvalue of the windowed Gram integral.
    pub alpha_hat: f64,
    /// Threshold used for the PE verdict.
    pub threshold: f64,
    pub is_pe: bool,
    pub windows_evaluated: usize,
}

/// Empirical persistent-excitation metric over uniformly sampled data.
///
/// For each window start the Gram integral of `f f^T` is accumulated by the
/// trapezoid rule and its minimum eigenvalue recorded; `alpha_hat` is the
/// minimum over all windows.
pub fn pe_metric(
    times: &[f64],
    samples: &[DVector<f64>],
    window: f64,
    stride: f64,
    threshold: f64,
) -> Result<PeReport> {
    if times.len() != samples.len() || times.len() < 2 {
        return Err(Error::Dimension(
            "need matching times/samples with at least two entries".into(),
        ));
    }
    if !(window > 0.0) {
        return Err(Error::Validation("PE window must be positive".into()));
    }
    let h = times[1] - times[0];
    let duration = times[times.len() - 1] - times[0];
    if duration + 1e-12 < window {
        return Err(Error::Validation(format!(
            "series duration {duration} is shorter than the PE window {window}"
        )));
    }
    let m = samples[0].len();
    let w = (window / h).round().max(1.0) as usize;
    let stride_samples = ((stride / h).round() as usize).max(1);

    let mut alpha_hat = f64::INFINITY;
    let mut windows = 0usize;
    let mut start = 0usize;
    while start + w < times.len() {
        let mut gram = DMatrix::<f64>::zeros(m, m);
        for i in start..=start + w {
            let weight = if i == start || i == start + w { 0.5 } else { 1.0 };
            gram.ger(h * weight, &samples[i], &samples[i], 1.0);
        }
        let min_eig = gram
            .symmetric_eigenvalues()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        alpha_hat = alpha_hat.min(min_eig);
        windows += 1;
        start += stride_samples;
    }
    // Clamp quadrature noise on exactly-zero signals.
    if alpha_hat.abs() < 1e-15 {
        alpha_hat = alpha_hat.max(0.0);
    }
    Ok(PeReport {
        window,
        alpha_hat,
        threshold,
        is_pe: alpha_hat >= threshold,
        windows_evaluated: windows,
    })
}

/// True iff every eigenvalue of `f` has strictly negative real part; also
/// returns the spectral abscissa.
pub fn hurwitz_check(f: &DMatrix<f64>) -> (bool, f64) {
    let eigs = f.complex_eigenvalues();
    let abscissa = eigs.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    (abscissa < 0.0, abscissa)
}

/// Returns `Ok(())` for a Hurwitz matrix, otherwise an error naming the
/// offending eigenvalue.
pub fn require_hurwitz(f: &DMatrix<f64>) -> Result<()> {
    let eigs = f.complex_eigenvalues();
    for z in eigs.iter() {
        if z.re >= 0.0 {
            return Err(Error::NotHurwitz { re: z.re, im: z.im });
        }
    }
    Ok(())
}

/// Transmission zeros of the SISO realization `(f, b, c)` after cancelling
/// common pole/zero pairs. Logs a warning if the realization was not
/// minimal.
pub fn transmission_zeros(
    f: &DMatrix<f64>,
    b: &DVector<f64>,
    c: &DVector<f64>,
) -> Vec<num_complex::Complex<f64>> {
    let (den, num) = poly::siso_transfer(f, b, c);
    let mut zeros = poly::roots(&num);
    let poles = poly::roots(&den);
    // Cancel coincident pole/zero pairs (non-minimal realization).
    let mut cancelled = 0usize;
    let mut remaining_poles = poles;
    zeros.retain(|z| {
        if let Some(idx) = remaining_poles
            .iter()
            .position(|p| (p - z).norm() < 1e-8 * (1.0 + z.norm()))
        {
            remaining_poles.swap_remove(idx);
            cancelled += 1;
            false
        } else {
            true
        }
    });
    if cancelled > 0 {
        log::warn!("realization is not minimal: cancelled {cancelled} pole/zero pair(s)");
    }
    zeros
}

/// True iff all transmission zeros of `c^T (pI - f)^{-1} b` lie strictly in
/// the open left half plane. A transfer function without zeros is minimum
/// phase by convention.
pub fn min_phase_check(f: &DMatrix<f64>, b: &DVector<f64>, c: &DVector<f64>) -> bool {
    transmission_zeros(f, b, c).iter().all(|z| z.re < 0.0)
}

/// Solves `F^T P + P F = -2 I` for the symmetric positive-definite `P`.
pub fn lyapunov_solve(f: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    require_hurwitz(f)?;
    let n = f.nrows();
    // vec(F^T P + P F) = (I (x) F^T + F^T (x) I) vec(P)
    let eye = DMatrix::<f64>::identity(n, n);
    let ft = f.transpose();
    let lhs = eye.kronecker(&ft) + ft.kronecker(&eye);
    let rhs = DVector::from_iterator(
        n * n,
        (0..n * n).map(|i| if i % (n + 1) == 0 { -2.0 } else { 0.0 }),
    );
    let sol = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Lyapunov("Kronecker system is singular".into()))?;
    let mut p = DMatrix::from_iterator(n, n, sol.iter().cloned());
    // Symmetrize away round-off.
    p = (&p + p.transpose()) * 0.5;
    let residual = (f.transpose() * &p + &p * f + DMatrix::<f64>::identity(n, n) * 2.0)
        .iter()
        .fold(0.0f64, |a, v| a.max(v.abs()));
    if residual > 1e-10 {
        return Err(Error::Lyapunov(format!("residual {residual:.3e} exceeds 1e-10")));
    }
    if nalgebra::Cholesky::new(p.clone()).is_none() {
        return Err(Error::Lyapunov("P is not positive definite".into()));
    }
    Ok(p)
}

/// Lower bound on the high-order-tuner gain:
/// `(3 / 4 lambda) (|l| + |P F^{-1} h|)^2` with `P` from [`lyapunov_solve`].
///
/// `f` here is the Hurwitz matrix of the tuner realization.
pub fn hot_mu_bound(f: &DMatrix<f64>, l: &DVector<f64>, h: &DVector<f64>, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0) {
        return Err(Error::Validation("lambda must be positive".into()));
    }
    if l.iter().all(|v| *v == 0.0) && h.iter().all(|v| *v == 0.0) {
        // Degenerate relative-degree <= 2 case: no tuner filters.
        return Ok(0.0);
    }
    let p = lyapunov_solve(f)?;
    let f_inv = f
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Lyapunov("Hurwitz matrix must be invertible".into()))?;
    let term = (&p * f_inv * h).norm();
    Ok(3.0 / (4.0 * lambda) * (l.norm() + term).powi(2))
}

/// The residual set bound for the robustified schemes:
/// `|theta_err|^2 <= max[(|theta| + 2 theta*)^2, gamma ||xi + xi_e||_inf^2 + |theta|^2]`.
#[derive(Debug, Clone, Serialize)]
pub struct ResidualBound {
    pub theta_norm: f64,
    pub theta_star: f64,
    pub gamma: f64,
    pub noise_sup: f64,
    pub bound: f64,
}

pub fn residual_bound(
    theta: &DVector<f64>,
    theta_star: f64,
    gamma: f64,
    noise_sup: f64,
) -> Result<ResidualBound> {
    if !(theta_star > 0.0) || !(gamma > 0.0) || !(noise_sup >= 0.0) {
        return Err(Error::Validation(
            "residual bound needs theta_star > 0, gamma > 0, noise_sup >= 0".into(),
        ));
    }
    let theta_norm = theta.norm();
    let first = (theta_norm + 2.0 * theta_star).powi(2);
    let second = gamma * noise_sup * noise_sup + theta_norm * theta_norm;
    Ok(ResidualBound {
        theta_norm,
        theta_star,
        gamma,
        noise_sup,
        bound: first.max(second),
    })
}

/// Co-integrated disturbance-propagation state: the output `xi_e = c^T Xi`
/// captures how channel noise enters the augmented error.
#[derive(Debug, Clone)]
pub struct DisturbancePropagator {
    receiver: PlantStructure,
}

impl DisturbancePropagator {
    pub fn new(receiver: PlantStructure) -> Self {
        Self { receiver }
    }

    pub fn dim(&self) -> usize {
        self.receiver.n()
    }

    /// Right-hand side of the propagator:
    /// `Xi' = M Xi + phi0(y) - phi0(y_r) + b (phi(y) - phi(y_r))^T theta - k xi`,
    /// plus `(A(y) - A(y_r)) x` when the receiver matrix is state-dependent.
    ///
    /// `err_matrix` is the observer's closed error matrix (`F`, or `G(y_r)`
    /// for the state-dependent scheme) and `k` the injection gain in use.
    #[allow(clippy::too_many_arguments)]
    pub fn derivative(
        &self,
        state: &DVector<f64>,
        err_matrix: &DMatrix<f64>,
        t: f64,
        y: f64,
        y_r: f64,
        theta: &DVector<f64>,
        k: &DVector<f64>,
        xi: f64,
        x_true: &DVector<f64>,
    ) -> DVector<f64> {
        let s = &self.receiver;
        let mut dx = err_matrix * state;
        dx += s.phi0.eval(t, y) - s.phi0.eval(t, y_r);
        dx += &s.b * (s.phi.eval(t, y) - s.phi.eval(t, y_r)).dot(theta);
        dx -= k * xi;
        if s.a.is_state_dependent() {
            dx += (s.a.eval(y) - s.a.eval(y_r)) * x_true;
        }
        dx
    }

    pub fn output(&self, state: &DVector<f64>) -> f64 {
        self.receiver.c.dot(state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn pe_of_zero_signal_is_zero() {
        let h = 1e-3;
        let n = 8000;
        let times: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
        let samples: Vec<DVector<f64>> = times.iter().map(|_| DVector::zeros(1)).collect();
        let report = pe_metric(&times, &samples, 2.0, 0.5, 1e-6).unwrap();
        assert_eq!(report.alpha_hat, 0.0);
        assert!(!report.is_pe);
    }

    #[test]
    fn pe_of_sine_is_pi_over_full_period() {
        // Step chosen so the window of one full period is a whole number of
        // samples; trapezoid quadrature is then exact to rounding.
        let h = 2.0 * std::f64::consts::PI / 6000.0;
        let n = 24001;
        let times: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
        let samples: Vec<DVector<f64>> = times
            .iter()
            .map(|&t| DVector::from_vec(vec![t.sin()]))
            .collect();
        let report = pe_metric(
            &times,
            &samples,
            2.0 * std::f64::consts::PI,
            std::f64::consts::PI / 2.0,
            1e-6,
        )
        .unwrap();
        assert!(
            (report.alpha_hat - std::f64::consts::PI).abs() < 1e-4,
            "alpha_hat = {}",
            report.alpha_hat
        );
        assert!(report.is_pe);
    }

    #[test]
    fn pe_of_constant_is_t_c_squared() {
        let h = 1e-3;
        let n = 5001;
        let times: Vec<f64> = (0..n).map(|i| i as f64 * h).collect();
        let samples: Vec<DVector<f64>> = times
            .iter()
            .map(|_| DVector::from_vec(vec![2.0]))
            .collect();
        let report = pe_metric(&times, &samples, 3.0, 1.0, 1e-6).unwrap();
        assert_relative_eq!(report.alpha_hat, 12.0, epsilon = 1e-9);
    }

    #[test]
    fn pe_rejects_short_series() {
        let times = vec![0.0, 0.1, 0.2];
        let samples = vec![DVector::zeros(1); 3];
        assert!(pe_metric(&times, &samples, 5.0, 1.0, 1e-6).is_err());
    }

    #[test]
    fn hurwitz_check_cases() {
        let neg_eye = DMatrix::<f64>::from_diagonal(&DVector::from_vec(vec![-1.0, -1.0]));
        let (ok, absc) = hurwitz_check(&neg_eye);
        assert!(ok);
        assert_relative_eq!(absc, -1.0, epsilon = 1e-12);

        let rotation = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]);
        let (ok, absc) = hurwitz_check(&rotation);
        assert!(!ok);
        assert!(absc.abs() < 1e-9);

        // Lorenz G at y = 0
        let g0 = DMatrix::from_row_slice(
            3,
            3,
            &[-10.0, 10.0, 0.0, -10.0, -1.0, 0.0, 0.0, 0.0, -8.0 / 3.0],
        );
        assert!(hurwitz_check(&g0).0);
    }

    #[test]
    fn min_phase_cases() {
        // H(p) = 1/(p+1): no zeros -> minimum phase.
        let f = DMatrix::from_element(1, 1, -1.0);
        let b = DVector::from_vec(vec![1.0]);
        let c = DVector::from_vec(vec![1.0]);
        assert!(min_phase_check(&f, &b, &c));

        // Controllable canonical (p - 1)/(p+1)^2: zero at +1 -> not min phase.
        let f = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -2.0]);
        let b = DVector::from_vec(vec![0.0, 1.0]);
        let c = DVector::from_vec(vec![-1.0, 1.0]);
        assert!(!min_phase_check(&f, &b, &c));

        // (p + 2)/(p+1)^2: zero at -2 -> minimum phase.
        let c = DVector::from_vec(vec![2.0, 1.0]);
        assert!(min_phase_check(&f, &b, &c));
    }

    #[test]
    fn lyapunov_scalar_and_diagonal() {
        let p = lyapunov_solve(&DMatrix::from_element(1, 1, -1.0)).unwrap();
        assert_relative_eq!(p[(0, 0)], 1.0, epsilon = 1e-12);

        let f = DMatrix::<f64>::from_diagonal(&DVector::from_vec(vec![-2.0, -2.0]));
        let p = lyapunov_solve(&f).unwrap();
        assert_relative_eq!(p[(0, 0)], 0.5, epsilon = 1e-12);
        assert_relative_eq!(p[(1, 1)], 0.5, epsilon = 1e-12);
        assert_relative_eq!(p[(0, 1)], 0.0, epsilon = 1e-12);

        assert!(lyapunov_solve(&DMatrix::from_element(1, 1, 1.0)).is_err());
    }

    #[test]
    fn lyapunov_random_hurwitz_residual() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let n = 4;
            let raw = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            // Shift the spectrum safely left.
            let f = raw - DMatrix::<f64>::identity(n, n) * 5.0;
            let p = lyapunov_solve(&f).unwrap();
            let residual = f.transpose() * &p + &p * &f + DMatrix::<f64>::identity(n, n) * 2.0;
            assert!(residual.iter().all(|v| v.abs() <= 1e-10));
        }
    }

    #[test]
    fn mu_bound_scalar_hand_value() {
        let f = DMatrix::from_element(1, 1, -1.0);
        let l = DVector::from_vec(vec![1.0]);
        let h = DVector::from_vec(vec![1.0]);
        let bound = hot_mu_bound(&f, &l, &h, 1.0).unwrap();
        assert_relative_eq!(bound, 3.0, epsilon = 1e-12);
        // Doubling lambda halves the bound.
        let bound2 = hot_mu_bound(&f, &l, &h, 2.0).unwrap();
        assert_relative_eq!(bound2, 1.5, epsilon = 1e-12);
        // Degenerate case l = h = 0.
        let zero = DVector::from_vec(vec![0.0]);
        assert_eq!(hot_mu_bound(&f, &zero, &zero, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn residual_bound_hand_values() {
        let theta = DVector::from_vec(vec![1.0]);
        let b = residual_bound(&theta, 1.0, 0.45, 0.0).unwrap();
        assert_relative_eq!(b.bound, 9.0, epsilon = 1e-12);

        let theta = DVector::from_vec(vec![2.0]);
        let b = residual_bound(&theta, 1.0, 0.45, 3.0).unwrap();
        assert_relative_eq!(b.bound, 16.0, epsilon = 1e-12);
    }

    #[test]
    fn residual_bound_monotone() {
        let base = residual_bound(&DVector::from_vec(vec![1.0]), 1.0, 0.5, 2.0)
            .unwrap()
            .bound;
        for (theta, star, gamma, sup) in [
            (1.5, 1.0, 0.5, 2.0),
            (1.0, 1.5, 0.5, 2.0),
            (1.0, 1.0, 0.9, 2.0),
            (1.0, 1.0, 0.5, 3.0),
        ] {
            let b = residual_bound(&DVector::from_vec(vec![theta]), star, gamma, sup)
                .unwrap()
                .bound;
            assert!(b >= base - 1e-12);
        }
    }
}
