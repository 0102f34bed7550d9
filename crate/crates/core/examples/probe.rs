// scratch diagnostics
use lobliq::fpt::*;
use num_complex::Complex64;

fn main() {
    // CF at s -> 0
    for (v, kappa, mu, theta) in [(1u32, 1.0, 1.0, 0.5), (3, 2.5, 0.2, 0.3), (7, 3.54, 0.17, 0.32)] {
        for s in [1e-9, 1e-6, 1e-3] {
            let got = laplace_fpt_b(v, kappa, mu, theta, Complex64::new(s, 0.0));
            println!("v={v} k={kappa} s={s:e}: {:?}", got.map(|c| c.re));
        }
    }
    // Euler accuracy for exp density
    let p = EulerParams::default();
    for t in [0.01, 0.1, 1.0, 5.0, 10.0] {
        let got = invert_at(|s| (s + 1.0).inv(), t, &p).unwrap();
        println!("t={t}: err={:e}", (got - (-t as f64).exp()).abs());
    }
    // contour sweep
    for a in [18.4, 21.0, 23.0, 25.0] {
        let p = EulerParams { contour: a, ..EulerParams::default() };
        let mut worst = 0.0f64;
        for i in 1..=1000 {
            let t = 0.01 + (10.0 - 0.01) * (i as f64) / 1000.0;
            let got = invert_at(|s| (s + 1.0).inv(), t, &p).unwrap();
            worst = worst.max((got - (-t).exp()).abs());
        }
        println!("A={a}: sup err={worst:e}");
    }
}
