//! The nuisance learners on their own: ridge-stabilized IRLS for three
//! families, and boosted stumps layered on a GLM for a nonlinear signal.
//!
//!     cargo run --release --example glm_learners

use nested_iv::glm::{fit_learner, LearnerSpec};
use nested_iv::rng;
use rand::Rng;

fn main() -> nested_iv::Result<()> {
    let mut r = rng::stream(4, "example", 0);
    let n = 4000;
    let x: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..2.0)).collect();

    let y_lin: Vec<f64> = x.iter().map(|v| 1.0 + 0.5 * v + r.random_range(-0.5..0.5)).collect();
    let m = fit_learner(&x, 1, &y_lin, None, &LearnerSpec::gaussian())?;
    println!("gaussian coefficients {:?}", m.glm.coefficients);

    let y_bin: Vec<f64> = x
        .iter()
        .map(|v| f64::from(u8::from(r.random::<f64>() < 1.0 / (1.0 + (-(0.3 - 1.2 * v)).exp()))))
        .collect();
    let m = fit_learner(&x, 1, &y_bin, None, &LearnerSpec::logistic())?;
    println!("logistic coefficients {:?} after {} iterations", m.glm.coefficients, m.glm.iterations);

    let exposure: Vec<f64> = (0..n).map(|_| r.random_range(1.0..10.0)).collect();
    let log_exp: Vec<f64> = exposure.iter().map(|e| e.ln()).collect();
    let y_cnt: Vec<f64> = x
        .iter()
        .zip(&exposure)
        .map(|(v, e)| {
            // Knuth's method is fine for these small means.
            let lambda = e * (0.2 * v - 1.0).exp();
            let (l, mut k, mut p) = ((-lambda).exp(), 0.0, 1.0);
            loop {
                p *= r.random::<f64>();
                if p <= l {
                    break k;
                }
                k += 1.0;
            }
        })
        .collect();
    let m = fit_learner(&x, 1, &y_cnt, Some(&log_exp), &LearnerSpec::poisson())?;
    println!("poisson rate coefficients {:?}", m.glm.coefficients);

    let y_step: Vec<f64> = x.iter().map(|v| if *v > 0.5 { 2.0 } else { 0.0 } + r.random_range(-0.1..0.1)).collect();
    let plain = fit_learner(&x, 1, &y_step, None, &LearnerSpec::gaussian())?;
    let boosted = fit_learner(&x, 1, &y_step, None, &LearnerSpec::gaussian().with_boost(true))?;
    for v in [-1.0, 0.4, 0.6, 1.5] {
        println!("step at {v:+.1}: glm {:.2}, boosted {:.2}", plain.predict(&[v], 0.0), boosted.predict(&[v], 0.0));
    }
    Ok(())
}
