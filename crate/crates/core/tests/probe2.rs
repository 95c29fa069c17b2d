// Scratch diagnostics for the high-order-tuner scheme (deleted before release).

use adapt_sync_core::numerics::{rk4_step, FnOde};
use adapt_sync_core::observers::{AdaptiveObserver, HotObserver, TunerOutput};
use adapt_sync_core::plant::{
    ParameterSignal, Plant, PlantStructure, Regressor, Signal, SystemMatrix,
};
use nalgebra::{DMatrix, DVector};

fn structure_r3() -> PlantStructure {
    PlantStructure::new(
        SystemMatrix::Constant(DMatrix::from_row_slice(
            3,
            3,
            &[-3.0, 1.0, 0.0, -3.0, 0.0, 1.0, -1.0, 0.0, 0.0],
        )),
        DVector::from_vec(vec![0.0, 0.0, 1.0]),
        DVector::from_vec(vec![1.0, 0.0, 0.0]),
        Regressor::zero(3),
        Regressor::from_signals(vec![Signal::Sine {
            amplitude: 1.0,
            period: 2.0 * std::f64::consts::PI,
            offset: 0.0,
            phase: 0.0,
        }]),
    )
    .unwrap()
}

#[test]
fn probe_hot_r3_oracle() {
    let theta = 1.0;
    let plant = Plant::new(structure_r3(), ParameterSignal::constant(&[theta])).unwrap();
    let mode = match std::env::var("PROBE_MODE").as_deref() {
        Ok("direct") => TunerOutput::Direct,
        _ => TunerOutput::Derivative,
    };
    let obs = HotObserver::new(structure_r3(), DVector::zeros(3), 1.0, 6.0, mode, false).unwrap();

    let n = 3;
    let odim = obs.state_dim();
    // layout: [x (3) | obs (odim) | x_wv (3) | z (1)]
    let off_obs = n;
    let off_wv = off_obs + odim;
    let off_z = off_wv + n;
    let dim = off_z + 1;

    let f = DMatrix::from_row_slice(3, 3, &[-3.0, 1.0, 0.0, -3.0, 0.0, 1.0, -1.0, 0.0, 0.0]);
    let b = DVector::from_vec(vec![0.0, 0.0, 1.0]);
    let c_w = {
        // c^T (F + I)
        let c = DVector::from_vec(vec![1.0, 0.0, 0.0]);
        (c.transpose() * (&f + DMatrix::<f64>::identity(3, 3))).transpose()
    };
    let lambda = 1.0;

    let sys = FnOde::new(dim, |t: f64, s: &DVector<f64>, ds: &mut DVector<f64>| {
        let x = DVector::from(s.rows(0, n));
        let y = x[0];
        ds.rows_mut(0, n).copy_from(&plant.derivative(t, &x));
        ds.rows_mut(off_obs, odim)
            .copy_from(&obs.derivative(t, s.rows(off_obs, odim), y));
        let sig = obs.signals(t, s.rows(off_obs, odim), y);
        let nu = sig.nu.unwrap();
        // W[nu] route: x_wv' = F x_wv + b nu, W-output = c_w x_wv
        let x_wv = DVector::from(s.rows(off_wv, n));
        ds.rows_mut(off_wv, n).copy_from(&(&f * &x_wv + &b * nu));
        let w_nu = c_w.dot(&x_wv);
        let varpi = sig.omega[0];
        ds[off_z] = -lambda * s[off_z] + (varpi * theta - w_nu);
    });

    let mut s = DVector::zeros(dim);
    let h = 1e-3;
    let mut t = 0.0;
    let mut worst: f64 = 0.0;
    let mut k = 0usize;
    while t < 40.0 {
        if k % 2000 == 0 {
            let sig = obs.signals(t, s.rows(off_obs, odim), s[0]);
            println!(
                "t={t:6.2} e={:+.4e} z={:+.4e} |e-z|={:.2e} theta_hat={:+.4e} nu={:+.4e} psi={:+.3e} eta={:+.3e}",
                sig.e,
                s[off_z],
                (sig.e - s[off_z]).abs(),
                sig.theta_hat[0],
                sig.nu.unwrap(),
                s[off_obs + odim - 2],
                s[off_obs + odim - 1],
            );
        }
        let sig = obs.signals(t, s.rows(off_obs, odim), s[0]);
        worst = worst.max((sig.e - s[off_z]).abs());
        s = rk4_step(&sys, t, &s, h).unwrap();
        t += h;
        k += 1;
        if s.iter().any(|v| v.abs() > 1e7) {
            println!("DIVERGED at t={t}");
            break;
        }
    }
    println!("max |e - z| = {worst:.3e}");
}
