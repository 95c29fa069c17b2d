//! Small real-polynomial toolbox used by the realization and analysis code.
//!
//! Polynomials are stored as ascending coefficient vectors:
//! `c[0] + c[1] p + c[2] p^2 + ...`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex;

/// Drop trailing coefficients that are negligible relative to the largest one.
pub fn trim(coeffs: &[f64]) -> Vec<f64> {
    let scale = coeffs.iter().fold(0.0f64, |a, c| a.max(c.abs()));
    let tol = scale * 1e-12;
    let mut out: Vec<f64> = coeffs.to_vec();
    while out.len() > 1 && out.last().map(|c| c.abs() <= tol).unwrap_or(false) {
        out.pop();
    }
    out
}

/// Degree of a trimmed polynomial; `None` for the zero polynomial.
pub fn degree(coeffs: &[f64]) -> Option<usize> {
    let t = trim(coeffs);
    if t.len() == 1 && t[0] == 0.0 {
        None
    } else {
        Some(t.len() - 1)
    }
}

pub fn is_zero(coeffs: &[f64]) -> bool {
    degree(coeffs).is_none()
}

/// Convolution product of two coefficient vectors.
pub fn mul(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; a.len() + b.len() - 1];
    for (i, &ai) in a.iter().enumerate() {
        for (j, &bj) in b.iter().enumerate() {
            out[i + j] += ai * bj;
        }
    }
    out
}

/// Euclidean division: `num = q * den + r` with `deg r < deg den`.
///
/// Panics if `den` is the zero polynomial.
pub fn div_rem(num: &[f64], den: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let den = trim(den);
    let dd = degree(&den).expect("division by zero polynomial");
    let lead = den[dd];
    let mut rem = trim(num);
    if rem.len() < den.len() {
        return (vec![0.0], rem);
    }
    let qdeg = rem.len() - den.len();
    let mut quot = vec![0.0; qdeg + 1];
    for k in (0..=qdeg).rev() {
        let coef = rem[k + dd] / lead;
        quot[k] = coef;
        for j in 0..=dd {
            rem[k + j] -= coef * den[j];
        }
    }
    rem.truncate(dd.max(1));
    (trim(&quot), trim(&rem))
}

/// Evaluate at a complex point.
pub fn eval_complex(coeffs: &[f64], s: Complex<f64>) -> Complex<f64> {
    let mut acc = Complex::new(0.0, 0.0);
    for &c in coeffs.iter().rev() {
        acc = acc * s + c;
    }
    acc
}

/// Roots of a polynomial via the companion-matrix eigenvalues.
pub fn roots(coeffs: &[f64]) -> Vec<Complex<f64>> {
    let c = trim(coeffs);
    let d = match degree(&c) {
        None | Some(0) => return Vec::new(),
        Some(d) => d,
    };
    let lead = c[d];
    let mut comp = DMatrix::<f64>::zeros(d, d);
    for i in 1..d {
        comp[(i, i - 1)] = 1.0;
    }
    for i in 0..d {
        comp[(i, d - 1)] = -c[i] / lead;
    }
    comp.complex_eigenvalues().iter().copied().collect()
}

/// Characteristic polynomial of `F` (monic, ascending) together with the
/// numerator of the scalar transfer function `c^T (pI - F)^{-1} b`, computed
/// by the Faddeev-LeVerrier recursion.
pub fn siso_transfer(f: &DMatrix<f64>, b: &DVector<f64>, c: &DVector<f64>) -> (Vec<f64>, Vec<f64>) {
    let n = f.nrows();
    assert_eq!(f.ncols(), n);
    assert_eq!(b.len(), n);
    assert_eq!(c.len(), n);
    // den(p) = p^n + a1 p^{n-1} + ... + an, adj(pI-F) = sum_k p^{n-k} B_k
    let mut den = vec![0.0; n + 1];
    den[n] = 1.0;
    let mut num = vec![0.0; n.max(1)];
    let mut bk = DMatrix::<f64>::identity(n, n);
    for k in 1..=n {
        num[n - k] = (c.transpose() * &bk * b)[(0, 0)];
        let fbk = f * &bk;
        let ak = -fbk.trace() / (k as f64);
        den[n - k] = ak;
        if k < n {
            bk = fbk + DMatrix::<f64>::identity(n, n) * ak;
        }
    }
    (den, trim(&num))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn division_reconstructs() {
        // (p+1)^3 / (p+1) = (p+1)^2 exactly
        let cube = mul(&[1.0, 1.0], &mul(&[1.0, 1.0], &[1.0, 1.0]));
        let (q, r) = div_rem(&cube, &[1.0, 1.0]);
        assert_eq!(q, vec![1.0, 2.0, 1.0]);
        assert!(is_zero(&r));

        // p^2 + 3p + 2 over p + 3: q = p, r = 2
        let (q, r) = div_rem(&[2.0, 3.0, 1.0], &[3.0, 1.0]);
        assert_eq!(q, vec![0.0, 1.0]);
        assert_eq!(r, vec![2.0]);
    }

    #[test]
    fn roots_of_quadratic() {
        // p^2 + 3p + 2 = (p+1)(p+2)
        let mut rs: Vec<f64> = roots(&[2.0, 3.0, 1.0]).iter().map(|z| z.re).collect();
        rs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_relative_eq!(rs[0], -2.0, epsilon = 1e-10);
        assert_relative_eq!(rs[1], -1.0, epsilon = 1e-10);
    }

    #[test]
    fn transfer_of_companion_realization() {
        // Observer-canonical (p+1)^2 with b = e2, c = e1 gives H = 1/(p+1)^2.
        let f = DMatrix::from_row_slice(2, 2, &[-2.0, 1.0, -1.0, 0.0]);
        let b = DVector::from_vec(vec![0.0, 1.0]);
        let c = DVector::from_vec(vec![1.0, 0.0]);
        let (den, num) = siso_transfer(&f, &b, &c);
        assert_relative_eq!(den[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(den[1], 2.0, epsilon = 1e-12);
        assert_relative_eq!(den[2], 1.0, epsilon = 1e-12);
        assert_eq!(degree(&num), Some(0));
        assert_relative_eq!(num[0], 1.0, epsilon = 1e-12);
    }
}
