//! Reference values the runner compares against: closed forms where they
//! exist, a binomial tree for the American put. All are computed at run time
//! from the pinned scenario parameters, never hard-coded.

use statrs::function::erf::erfc;

/// Standard normal CDF.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// European call value under lognormal dynamics.
pub fn black_scholes_call(s0: f64, strike: f64, r: f64, vol: f64, t: f64) -> f64 {
    let sq = vol * t.sqrt();
    let d1 = ((s0 / strike).ln() + (r + 0.5 * vol * vol) * t) / sq;
    s0 * norm_cdf(d1) - strike * (-r * t).exp() * norm_cdf(d1 - sq)
}

/// sigma(x) du/dx of the call value at time 0 and spot `s0`: the comparison
/// partner for the solver's gradient field.
pub fn black_scholes_call_grad(s0: f64, strike: f64, r: f64, vol: f64, t: f64) -> f64 {
    let sq = vol * t.sqrt();
    let d1 = ((s0 / strike).ln() + (r + 0.5 * vol * vol) * t) / sq;
    vol * s0 * norm_cdf(d1)
}

/// Cox-Ross-Rubinstein tree value of the American put.
pub fn binomial_american_put(s0: f64, strike: f64, r: f64, vol: f64, t: f64, steps: usize) -> f64 {
    let dt = t / steps as f64;
    let up = (vol * dt.sqrt()).exp();
    let down = 1.0 / up;
    let disc = (-r * dt).exp();
    let p = ((r * dt).exp() - down) / (up - down);
    let mut v: Vec<f64> = (0..=steps)
        .map(|j| (strike - s0 * up.powi(j as i32) * down.powi((steps - j) as i32)).max(0.0))
        .collect();
    for i in (0..steps).rev() {
        for j in 0..=i {
            let cont = disc * (p * v[j + 1] + (1.0 - p) * v[j]);
            let spot = s0 * up.powi(j as i32) * down.powi((i - j) as i32);
            v[j] = cont.max(strike - spot);
        }
    }
    v[0]
}

/// The unit Gaussian bump evolved for time `tau` under sigma^2 = 2:
/// convolution of exp(-x^2/2) with a centered Gaussian of variance 2 tau.
pub fn heat_bump(x: f64, tau: f64) -> f64 {
    let v = 1.0 + 2.0 * tau;
    (-(x * x) / (2.0 * v)).exp() / v.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn call_value_and_gradient_match_the_frozen_references() {
        assert!((black_scholes_call(100.0, 100.0, 0.05, 0.2, 1.0) - 10.450583572185565).abs() < 1e-12);
        assert!(
            (black_scholes_call_grad(100.0, 100.0, 0.05, 0.2, 1.0) - 12.736613023512382).abs()
                < 1e-12
        );
    }

    #[test]
    fn tree_value_matches_the_frozen_reference() {
        let v = binomial_american_put(100.0, 100.0, 0.06, 0.4, 0.5, 2000);
        assert!((v - 9.944369531486105).abs() < 1e-9, "tree {v}");
    }

    #[test]
    fn tree_respects_parity_bounds() {
        // American >= European; both bracket the payoff
        let amer = binomial_american_put(100.0, 100.0, 0.06, 0.4, 0.5, 500);
        let intrinsic: f64 = 0.0;
        assert!(amer >= intrinsic);
        // a put is worth less than its strike discounted
        assert!(amer < 100.0);
    }

    #[test]
    fn heat_bump_starts_at_the_terminal_data() {
        assert_eq!(heat_bump(0.3, 0.0), (-0.045f64).exp());
        assert!((heat_bump(0.0, 1.0) - 1.0 / 3.0f64.sqrt()).abs() < 1e-15);
    }
}
