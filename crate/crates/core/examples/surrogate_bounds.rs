//! The first-order bounds behind each block, checked on random points:
//! how far each sits from the function it bounds, and on which side.
//!
//!     cargo run --release --example surrogate_bounds

use isac_uav::channel::CVector;
use isac_uav::cvxcore::{taylor_convex_power, taylor_lower_quadratic, taylor_upper_logistic};
use isac_uav::rxbf::{mm_surrogate, quadratic_from_matrix};
use isac_uav::Complex;
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn crand(rng: &mut ChaCha8Rng, n: usize) -> CVector {
    CVector::from_fn(n, |_, _| {
        Complex::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    })
}

/// (max of bound - f, min of bound - f) over the draws.
fn report(name: &str, gaps: &[f64]) {
    let hi = gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = gaps.iter().copied().fold(f64::INFINITY, f64::min);
    println!("{name:<34} bound - f in [{lo:+.3e}, {hi:+.3e}]");
}

fn main() -> isac_uav::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let n = 4;
    let draws = 500;

    let a = crand(&mut rng, n);
    let x0 = crand(&mut rng, n);
    let lower = taylor_lower_quadratic(&a, &x0);
    let g: Vec<f64> = (0..draws)
        .map(|_| {
            let x = crand(&mut rng, n);
            lower.eval(&x) - a.dotc(&x).norm_sqr()
        })
        .collect();
    report("|a^H x|^2 tangent (minorant)", &g);

    let upper = taylor_upper_logistic(3.0)?;
    let g: Vec<f64> = (0..draws)
        .map(|_| {
            let v = rng.random_range(0.0..50.0);
            upper.eval(v) - (1.0 + v).log2()
        })
        .collect();
    report("log2(1+v) tangent at 3 (majorant)", &g);

    let pw = taylor_convex_power(20.0, -1.55)?;
    let g: Vec<f64> = (0..draws)
        .map(|_| {
            let z = rng.random_range(1.0..100.0);
            pw.eval(z) - z.powf(-1.55)
        })
        .collect();
    report("z^-1.55 tangent at 20 (minorant)", &g);

    let b = DMatrix::<Complex>::from_fn(n, 2, |_, _| {
        Complex::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
    });
    let q = quadratic_from_matrix(&b * b.adjoint());
    let u0 = crand(&mut rng, n).normalize();
    let mm = mm_surrogate(&q, &u0);
    let g: Vec<f64> = (0..draws)
        .map(|_| {
            let u = crand(&mut rng, n).normalize();
            mm.eval(&u) - q.value(&u)
        })
        .collect();
    report("u^H Omega u MM bound (minorant)", &g);
    println!("gap at expansion point: {:.1e}", (mm.eval(&u0) - q.value(&u0)).abs());
    Ok(())
}
