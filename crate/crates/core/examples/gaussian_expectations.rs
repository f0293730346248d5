//! Gaussian expectations of the gain functions by Gauss–Hermite quadrature,
//! including the score-weighted forms the limit equations use.
//!
//!     cargo run --release --example gaussian_expectations

use balnet::quadrature::{GaussHermiteRule, GaussianLaw, ScoreWeight};
use balnet::GainSpec;

fn main() -> balnet::Result<()> {
    let gain = GainSpec::tanh(1.0, 1.0, 0.0);
    let law = GaussianLaw::new(1.0, 2.0)?;

    println!("E[tanh(Y)], Y ~ N(1, 2), by rule order:");
    for order in [10, 40, 100, 200, 400] {
        let rule = GaussHermiteRule::new(order);
        println!("  p = {order:3}: {:.16}", rule.expect(&law, |y| gain.value(y)));
    }

    let rule = GaussHermiteRule::default();
    let d_mean = rule.expect_weighted(&law, |y| gain.value(y), ScoreWeight::ShiftOverV);
    let d_var = rule.expect_weighted(&law, |y| gain.value(y), ScoreWeight::VarianceScore);
    println!("d/dm E[tanh] = {d_mean:.12}  (E[tanh'] = {:.12})", rule.expect(&law, |y| gain.derivative(y)));
    println!("d/dV E[tanh] = {d_var:.12}  (E[tanh'']/2 = {:.12})", 0.5 * rule.expect(&law, |y| gain.second_derivative(y)));
    Ok(())
}
