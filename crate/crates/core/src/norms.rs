//! Weighted-norm quadrature and the two empirical diagnostics that probe
//! the solution space: the equivalence ratio between the plain weighted
//! norm of a test function and its flow-composed counterpart, and the
//! histogram estimate of the flow's weighted pushforward ratio. Both report
//! empirical bounds, never certified constants.

use crate::error::CoreError;
use crate::model::{DiffusionSpec, WeightSpec};
use crate::sde::{simulate_bundle, TimeGrid};
use crate::Result;

/// Scalar field tabulated on a time lattice times a space lattice,
/// time-major: `values[i * xs.len() + k]`.
#[derive(Debug, Clone)]
pub struct Field2d {
    pub ts: Vec<f64>,
    pub xs: Vec<f64>,
    pub values: Vec<f64>,
}

impl Field2d {
    pub fn new(ts: Vec<f64>, xs: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if ts.len() < 2 || xs.len() < 2 {
            return Err(CoreError::Grid(
                "field needs at least two knots per axis".into(),
            ));
        }
        if values.len() != ts.len() * xs.len() {
            return Err(CoreError::Shape(format!(
                "{} values for a {} x {} lattice",
                values.len(),
                ts.len(),
                xs.len()
            )));
        }
        for w in ts.windows(2) {
            if !(w[1] > w[0]) {
                return Err(CoreError::Grid("time knots must increase".into()));
            }
        }
        for w in xs.windows(2) {
            if !(w[1] > w[0]) {
                return Err(CoreError::Grid("space knots must increase".into()));
            }
        }
        Ok(Field2d { ts, xs, values })
    }

    pub fn from_fn(ts: Vec<f64>, xs: Vec<f64>, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let mut values = Vec::with_capacity(ts.len() * xs.len());
        for t in &ts {
            for x in &xs {
                values.push(f(*t, *x));
            }
        }
        Field2d::new(ts, xs, values)
    }

    #[inline]
    pub fn at(&self, i: usize, k: usize) -> f64 {
        self.values[i * self.xs.len() + k]
    }
}

fn trapezoid_weights(knots: &[f64]) -> Vec<f64> {
    let n = knots.len();
    let mut w = vec![0.0f64; n];
    for k in 0..n - 1 {
        let half = 0.5 * (knots[k + 1] - knots[k]);
        w[k] += half;
        w[k + 1] += half;
    }
    w
}

/// Squared weighted space-time norm: the trapezoid discretization of
/// `integral of (u^2 + du^2) rho(x) dx ds` over the fields' lattice. The
/// gradient field is expected to already carry its diffusion factor.
pub fn weighted_h_norm(u: &Field2d, du: &Field2d, weight: &WeightSpec) -> Result<f64> {
    if u.ts != du.ts || u.xs != du.xs {
        return Err(CoreError::Shape(
            "value and gradient fields live on different lattices".into(),
        ));
    }
    let wt = trapezoid_weights(&u.ts);
    let wx = trapezoid_weights(&u.xs);
    let mut acc = 0.0;
    for i in 0..u.ts.len() {
        let mut row = 0.0;
        for k in 0..u.xs.len() {
            let a = u.at(i, k);
            let b = du.at(i, k);
            row += wx[k] * weight.rho(&u.xs[k..=k]) * (a * a + b * b);
        }
        acc += wt[i] * row;
    }
    Ok(acc)
}

/// One-dimensional quadrature lattice for the norm diagnostics.
#[derive(Debug, Clone)]
pub struct NormLattice {
    pub x_lo: f64,
    pub x_hi: f64,
    /// Spatial node count, at least 2.
    pub n_space: usize,
    /// Time step count, at least 1.
    pub n_time: usize,
    pub horizon: f64,
}

impl NormLattice {
    pub fn nodes(&self) -> Vec<f64> {
        let dx = (self.x_hi - self.x_lo) / (self.n_space - 1) as f64;
        (0..self.n_space).map(|k| self.x_lo + k as f64 * dx).collect()
    }
}

/// Plain weighted norm of |psi| against its flow-composed counterpart.
#[derive(Debug, Clone)]
pub struct NormReport {
    /// Quadrature of `integral of |psi(s,x)| rho(x) dx ds`.
    pub plain: f64,
    /// Monte Carlo estimate of `integral of E|psi(s, X_s^x)| rho(x) dx ds`.
    pub composed: f64,
    pub ratio: f64,
    /// Standard error of the ratio; exactly 0 when every path aggregate
    /// coincides (deterministic flow).
    pub se: f64,
    /// Test-function identifier, echoed into reports.
    pub id: String,
}

/// Estimates the flow-composed weighted norm of a test function by
/// simulating paths from every lattice node and compares it with the plain
/// quadrature over the same lattice, so a frozen flow reproduces the plain
/// norm term by term.
pub fn equivalence_ratio(
    diffusion: &DiffusionSpec,
    weight: &WeightSpec,
    psi: impl Fn(f64, f64) -> f64,
    lattice: &NormLattice,
    paths_per_point: usize,
    seed: u64,
    id: &str,
) -> Result<NormReport> {
    if diffusion.dim != 1 {
        return Err(CoreError::Shape(format!(
            "norm diagnostics are one-dimensional, diffusion has d = {}",
            diffusion.dim
        )));
    }
    if lattice.n_space < 2 || lattice.n_time == 0 || !(lattice.horizon > 0.0) {
        return Err(CoreError::Grid("degenerate diagnostic lattice".into()));
    }
    if paths_per_point == 0 {
        return Err(CoreError::Shape("need at least one path per point".into()));
    }
    let xs = lattice.nodes();
    let grid = TimeGrid::uniform(lattice.horizon, lattice.n_time);
    let wt = trapezoid_weights(grid.knots());
    let wx = trapezoid_weights(&xs);

    let mut plain = 0.0;
    for (i, t) in grid.knots().iter().enumerate() {
        for (k, x) in xs.iter().enumerate() {
            plain += wt[i] * wx[k] * weight.rho(&xs[k..=k]) * psi(*t, *x).abs();
        }
    }
    if !(plain > 0.0) {
        return Err(CoreError::DegenerateTestFunction(format!(
            "plain weighted norm of {id} is {plain}"
        )));
    }

    let points: Vec<Vec<f64>> = xs.iter().map(|x| vec![*x]).collect();
    let bundle = simulate_bundle(diffusion, &grid, &points, paths_per_point, seed)?;

    // one aggregate per path index, summed across start points; paths with
    // the same index at different start points are independent, so the
    // aggregates are iid and carry the estimator's full variance
    let m_per = paths_per_point;
    let mut agg = vec![0.0f64; m_per];
    for (k, _) in xs.iter().enumerate() {
        let rho = weight.rho(&xs[k..=k]);
        for m in 0..m_per {
            let mut path_sum = 0.0;
            for (i, t) in grid.knots().iter().enumerate() {
                path_sum += wt[i] * psi(*t, bundle.state(k, m, i)[0]).abs();
            }
            agg[m] += wx[k] * rho * path_sum;
        }
    }
    let composed = agg.iter().sum::<f64>() / m_per as f64;
    let identical = agg.iter().all(|a| a.to_bits() == agg[0].to_bits());
    let se = if identical || m_per < 2 {
        0.0
    } else {
        let mean = composed;
        let var = agg.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>()
            / (m_per - 1) as f64;
        (var / m_per as f64).sqrt()
    };

    Ok(NormReport {
        plain,
        composed,
        ratio: composed / plain,
        se: se / plain,
        id: id.to_string(),
    })
}

/// Sampling plan for the pushforward histogram: paths start on a lattice
/// over [x_lo, x_hi] carrying weight mass rho(x) dx, run to the horizon,
/// and land in `bins` equal bins over [report_lo, report_hi].
#[derive(Debug, Clone)]
pub struct FlowSample {
    pub x_lo: f64,
    pub x_hi: f64,
    pub n_points: usize,
    pub paths_per_point: usize,
    pub n_steps: usize,
    pub horizon: f64,
    pub seed: u64,
    pub bins: usize,
    pub report_lo: f64,
    pub report_hi: f64,
}

/// Per-bin estimates of the weighted pushforward ratio.
#[derive(Debug, Clone)]
pub struct FlowDiagnostics {
    pub centers: Vec<f64>,
    /// Pushforward mass density over rho at each bin center.
    pub estimates: Vec<f64>,
    /// Bins no sample reached; excluded from min and max.
    pub empty: Vec<bool>,
    pub min: f64,
    pub max: f64,
}

/// Histogram change-of-variables estimate of the flow's density ratio: the
/// start measure rho(x) dx is pushed through x -> X_horizon and each bin's
/// mass density is divided by rho at the bin center.
pub fn flow_ratio_estimate(
    diffusion: &DiffusionSpec,
    weight: &WeightSpec,
    sample: &FlowSample,
) -> Result<FlowDiagnostics> {
    if diffusion.dim != 1 {
        return Err(CoreError::Shape(format!(
            "flow diagnostics are one-dimensional, diffusion has d = {}",
            diffusion.dim
        )));
    }
    if sample.n_points < 2 || sample.bins == 0 || sample.paths_per_point == 0 {
        return Err(CoreError::Shape("degenerate flow sampling plan".into()));
    }
    if !(sample.x_hi > sample.x_lo) || !(sample.report_hi > sample.report_lo) {
        return Err(CoreError::Grid("empty flow sampling interval".into()));
    }
    let dx = (sample.x_hi - sample.x_lo) / (sample.n_points - 1) as f64;
    let xs: Vec<f64> = (0..sample.n_points)
        .map(|k| sample.x_lo + k as f64 * dx)
        .collect();
    let wx = trapezoid_weights(&xs);
    let grid = TimeGrid::uniform(sample.horizon, sample.n_steps);
    let points: Vec<Vec<f64>> = xs.iter().map(|x| vec![*x]).collect();
    let bundle = simulate_bundle(
        diffusion,
        &grid,
        &points,
        sample.paths_per_point,
        sample.seed,
    )?;

    let bin_w = (sample.report_hi - sample.report_lo) / sample.bins as f64;
    let mut mass = vec![0.0f64; sample.bins];
    let mut hits = vec![0u64; sample.bins];
    let n = grid.n_steps();
    let m_per = sample.paths_per_point as f64;
    for (k, _) in xs.iter().enumerate() {
        let deposit = weight.rho(&xs[k..=k]) * wx[k] / m_per;
        for m in 0..sample.paths_per_point {
            let v = bundle.state(k, m, n)[0];
            if v >= sample.report_lo && v < sample.report_hi {
                let b = (((v - sample.report_lo) / bin_w) as usize).min(sample.bins - 1);
                mass[b] += deposit;
                hits[b] += 1;
            }
        }
    }

    let mut centers = Vec::with_capacity(sample.bins);
    let mut estimates = Vec::with_capacity(sample.bins);
    let mut empty = Vec::with_capacity(sample.bins);
    let mut min = f64::INFINITY;
    let mut max = f64::NEG_INFINITY;
    for b in 0..sample.bins {
        let c = sample.report_lo + (b as f64 + 0.5) * bin_w;
        centers.push(c);
        let is_empty = hits[b] == 0;
        empty.push(is_empty);
        let est = mass[b] / bin_w / weight.rho(&[c]);
        estimates.push(est);
        if !is_empty {
            min = min.min(est);
            max = max.max(est);
        }
    }
    if !min.is_finite() || !max.is_finite() {
        return Err(CoreError::DegenerateTestFunction(
            "no sample reached the reporting range".into(),
        ));
    }
    Ok(FlowDiagnostics {
        centers,
        estimates,
        empty,
        min,
        max,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
        let d = (hi - lo) / (n - 1) as f64;
        (0..n).map(|k| lo + k as f64 * d).collect()
    }

    #[test]
    fn unit_field_integrates_the_weight() {
        // rho = (1+|x|)^-2 on [-1,1] integrates to 1; constant-in-time field
        // over T = 1 keeps it there
        let ts = linspace(0.0, 1.0, 5);
        let xs = linspace(-1.0, 1.0, 2001);
        let u = Field2d::from_fn(ts.clone(), xs.clone(), |_, _| 1.0).unwrap();
        let du = Field2d::from_fn(ts, xs, |_, _| 0.0).unwrap();
        let n = weighted_h_norm(&u, &du, &WeightSpec::Polynomial { p: 2.0 }).unwrap();
        assert!((n - 1.0).abs() < 1e-6, "norm {n}");
    }

    #[test]
    fn zero_field_has_zero_norm_and_doubling_quadruples() {
        let ts = linspace(0.0, 1.0, 9);
        let xs = linspace(-2.0, 2.0, 41);
        let z = Field2d::from_fn(ts.clone(), xs.clone(), |_, _| 0.0).unwrap();
        assert_eq!(
            weighted_h_norm(&z, &z, &WeightSpec::Polynomial { p: 3.0 }).unwrap(),
            0.0
        );

        let u = Field2d::from_fn(ts.clone(), xs.clone(), |t, x| (x + t).sin()).unwrap();
        let du = Field2d::from_fn(ts.clone(), xs.clone(), |t, x| (x * t).cos()).unwrap();
        let u2 = Field2d::new(ts.clone(), xs.clone(), u.values.iter().map(|v| 2.0 * v).collect())
            .unwrap();
        let du2 =
            Field2d::new(ts, xs, du.values.iter().map(|v| 2.0 * v).collect()).unwrap();
        let w = WeightSpec::Polynomial { p: 3.0 };
        let n1 = weighted_h_norm(&u, &du, &w).unwrap();
        let n4 = weighted_h_norm(&u2, &du2, &w).unwrap();
        assert_eq!(n4.to_bits(), (4.0 * n1).to_bits());
    }

    #[test]
    fn norm_is_monotone_in_the_integrand() {
        let ts = linspace(0.0, 1.0, 7);
        let xs = linspace(-3.0, 3.0, 61);
        let small = Field2d::from_fn(ts.clone(), xs.clone(), |t, x| (x * t).sin()).unwrap();
        let big = Field2d::new(
            ts.clone(),
            xs.clone(),
            small.values.iter().map(|v| v.abs() + 0.5).collect(),
        )
        .unwrap();
        let z = Field2d::from_fn(ts, xs, |_, _| 0.0).unwrap();
        let w = WeightSpec::Polynomial { p: 4.0 };
        assert!(
            weighted_h_norm(&small, &z, &w).unwrap()
                <= weighted_h_norm(&big, &z, &w).unwrap()
        );
    }

    #[test]
    fn frozen_flow_ratio_is_one_with_no_variance() {
        let frozen = DiffusionSpec::scalar(|_, _| 0.0, |_, _| 0.0, 0.0, 0.0);
        let lattice = NormLattice {
            x_lo: -2.0,
            x_hi: 2.0,
            n_space: 41,
            n_time: 8,
            horizon: 1.0,
        };
        let report = equivalence_ratio(
            &frozen,
            &WeightSpec::Polynomial { p: 3.0 },
            |_t, x| if x.abs() <= 1.0 { 1.0 } else { 0.0 },
            &lattice,
            16,
            7,
            "box indicator",
        )
        .unwrap();
        assert!((report.ratio - 1.0).abs() < 1e-12, "ratio {}", report.ratio);
        assert_eq!(report.se, 0.0);
    }

    #[test]
    fn scaling_the_test_function_leaves_the_ratio_alone() {
        let brownian = DiffusionSpec::scalar(|_, _| 0.0, |_, _| 1.0, 0.0, 0.0);
        let lattice = NormLattice {
            x_lo: -4.0,
            x_hi: 4.0,
            n_space: 33,
            n_time: 8,
            horizon: 1.0,
        };
        let w = WeightSpec::Polynomial { p: 3.0 };
        let base = equivalence_ratio(
            &brownian,
            &w,
            |_t, x| (-x * x).exp(),
            &lattice,
            64,
            3,
            "gaussian",
        )
        .unwrap();
        let scaled = equivalence_ratio(
            &brownian,
            &w,
            |_t, x| 4.0 * (-x * x).exp(),
            &lattice,
            64,
            3,
            "gaussian x4",
        )
        .unwrap();
        assert_eq!(base.ratio.to_bits(), scaled.ratio.to_bits());
        assert_eq!(scaled.plain.to_bits(), (4.0 * base.plain).to_bits());
    }

    #[test]
    fn degenerate_test_function_is_rejected() {
        let brownian = DiffusionSpec::scalar(|_, _| 0.0, |_, _| 1.0, 0.0, 0.0);
        let lattice = NormLattice {
            x_lo: -1.0,
            x_hi: 1.0,
            n_space: 9,
            n_time: 4,
            horizon: 1.0,
        };
        let err = equivalence_ratio(
            &brownian,
            &WeightSpec::Polynomial { p: 3.0 },
            |_t, _x| 0.0,
            &lattice,
            8,
            1,
            "zero",
        );
        assert!(matches!(err, Err(CoreError::DegenerateTestFunction(_))));
    }

    #[test]
    fn ornstein_uhlenbeck_ratio_is_stable_across_seeds() {
        let ou = DiffusionSpec::scalar(|_, x| -x, |_, _| 1.0, 1.0, 0.0);
        let lattice = NormLattice {
            x_lo: -4.0,
            x_hi: 4.0,
            n_space: 81,
            n_time: 32,
            horizon: 1.0,
        };
        let w = WeightSpec::Polynomial { p: 3.0 };
        let ratios: Vec<f64> = [1u64, 2, 3]
            .iter()
            .map(|seed| {
                equivalence_ratio(
                    &ou,
                    &w,
                    |_t, x| if x.abs() <= 1.0 { 1.0 } else { 0.0 },
                    &lattice,
                    2000,
                    *seed,
                    "box indicator",
                )
                .unwrap()
                .ratio
            })
            .collect();
        for r in &ratios {
            assert!((0.1..=10.0).contains(r), "ratio {r} out of band");
        }
        for pair in ratios.windows(2) {
            assert!(
                (pair[0] - pair[1]).abs() / pair[0] < 0.10,
                "seed instability: {ratios:?}"
            );
        }
    }

    #[test]
    fn brownian_ratio_matches_gaussian_quadrature() {
        // E|psi(x + W_s)| for the box indicator is the Gaussian mass of
        // [-1,1] around x; compare the sampled ratio with that quadrature
        // on the same lattice
        let brownian = DiffusionSpec::scalar(|_, _| 0.0, |_, _| 1.0, 0.0, 0.0);
        let lattice = NormLattice {
            x_lo: -6.0,
            x_hi: 6.0,
            n_space: 121,
            n_time: 16,
            horizon: 1.0,
        };
        let w = WeightSpec::Polynomial { p: 3.0 };
        let report = equivalence_ratio(
            &brownian,
            &w,
            |_t, x| if x.abs() <= 1.0 { 1.0 } else { 0.0 },
            &lattice,
            4000,
            11,
            "box indicator",
        )
        .unwrap();

        let phi = |v: f64| 0.5 * statrs::function::erf::erfc(-v / std::f64::consts::SQRT_2);
        let xs = lattice.nodes();
        let wt = trapezoid_weights(&linspace(0.0, 1.0, lattice.n_time + 1));
        let wx = trapezoid_weights(&xs);
        let mut plain = 0.0;
        let mut composed = 0.0;
        for (i, wti) in wt.iter().enumerate() {
            let s = i as f64 / lattice.n_time as f64;
            for (k, x) in xs.iter().enumerate() {
                let rho = w.rho(&xs[k..=k]);
                let ind = if x.abs() <= 1.0 { 1.0 } else { 0.0 };
                plain += wti * wx[k] * rho * ind;
                let mass = if s == 0.0 {
                    ind
                } else {
                    let sd = s.sqrt();
                    phi((1.0 - x) / sd) - phi((-1.0 - x) / sd)
                };
                composed += wti * wx[k] * rho * mass;
            }
        }
        let oracle = composed / plain;
        assert!(
            (report.ratio - oracle).abs() <= 3.0 * report.se.max(1e-12),
            "ratio {} vs oracle {oracle} with se {}",
            report.ratio,
            report.se
        );
    }

    #[test]
    fn frozen_flow_histogram_is_flat() {
        let frozen = DiffusionSpec::scalar(|_, _| 0.0, |_, _| 0.0, 0.0, 0.0);
        let sample = FlowSample {
            x_lo: -2.5,
            x_hi: 2.5,
            n_points: 2001,
            paths_per_point: 1,
            n_steps: 4,
            horizon: 1.0,
            seed: 5,
            bins: 16,
            report_lo: -2.0,
            report_hi: 2.0,
        };
        let diag =
            flow_ratio_estimate(&frozen, &WeightSpec::Polynomial { p: 3.0 }, &sample).unwrap();
        for (b, est) in diag.estimates.iter().enumerate() {
            assert!(!diag.empty[b]);
            assert!((est - 1.0).abs() < 0.05, "bin {b}: {est}");
        }
        assert!(diag.min > 0.9 && diag.max < 1.1);
    }

    #[test]
    fn affine_flow_matches_the_change_of_variables() {
        // Euler with many steps approximates X = x e^{0.5}; the pushforward
        // of rho dx has density rho(v e^{-0.5}) e^{-0.5}
        let affine = DiffusionSpec::scalar(|_, x| 0.5 * x, |_, _| 0.0, 0.5, 0.0);
        let w = WeightSpec::Polynomial { p: 3.0 };
        let sample = FlowSample {
            x_lo: -2.0,
            x_hi: 2.0,
            n_points: 4001,
            paths_per_point: 1,
            n_steps: 400,
            horizon: 1.0,
            seed: 5,
            bins: 40,
            report_lo: -2.5,
            report_hi: 2.5,
        };
        let diag = flow_ratio_estimate(&affine, &w, &sample).unwrap();
        let j = (-0.5f64).exp();
        let oracle = |c: f64| w.rho(&[c * j]) * j / w.rho(&[c]);
        // frozen spot checks of the oracle formula itself
        assert!((oracle(0.0) - 0.6065306597126334).abs() < 1e-12);
        assert!((oracle(0.5) - 0.9247578145707518).abs() < 1e-12);
        assert!((oracle(1.0) - 1.170242028215661).abs() < 1e-12);
        assert!((oracle(2.0) - 1.510901598514524).abs() < 1e-12);
        for (b, est) in diag.estimates.iter().enumerate() {
            if diag.empty[b] {
                continue;
            }
            let want = oracle(diag.centers[b]);
            assert!(
                (est - want).abs() / want < 0.02,
                "bin {b} at {}: {est} vs {want}",
                diag.centers[b]
            );
        }
    }

    #[test]
    fn unreachable_bins_are_flagged_and_excluded() {
        let frozen = DiffusionSpec::scalar(|_, _| 0.0, |_, _| 0.0, 0.0, 0.0);
        let sample = FlowSample {
            x_lo: -1.0,
            x_hi: 1.0,
            n_points: 801,
            paths_per_point: 1,
            n_steps: 2,
            horizon: 1.0,
            seed: 2,
            bins: 12,
            report_lo: -3.0,
            report_hi: 3.0,
        };
        let diag =
            flow_ratio_estimate(&frozen, &WeightSpec::Polynomial { p: 3.0 }, &sample).unwrap();
        // bins entirely beyond the identity flow's range saw no sample
        for (b, c) in diag.centers.iter().enumerate() {
            if c.abs() > 1.6 {
                assert!(diag.empty[b], "bin at {c} should be empty");
            }
        }
        assert!(diag.empty.iter().any(|e| !*e));
        // fully covered bins sit near the density ratio 1 (the bins here
        // are wide, so the weight's curvature shows); the half-open bin
        // that catches only the lattice endpoint may hold a sliver of mass
        for (b, c) in diag.centers.iter().enumerate() {
            if c.abs() < 0.9 {
                assert!(
                    (diag.estimates[b] - 1.0).abs() < 0.15,
                    "bin at {c}: {}",
                    diag.estimates[b]
                );
            }
        }
        assert!(diag.min > 0.0 && diag.max < 1.2, "{} {}", diag.min, diag.max);
    }

    #[test]
    fn brownian_flow_ratio_stays_in_band() {
        let brownian = DiffusionSpec::scalar(|_, _| 0.0, |_, _| 1.0, 0.0, 0.0);
        let sample = FlowSample {
            x_lo: -6.0,
            x_hi: 6.0,
            n_points: 1201,
            paths_per_point: 200,
            n_steps: 8,
            horizon: 1.0,
            seed: 9,
            bins: 16,
            report_lo: -2.0,
            report_hi: 2.0,
        };
        let diag =
            flow_ratio_estimate(&brownian, &WeightSpec::Polynomial { p: 3.0 }, &sample).unwrap();
        assert!(diag.min > 0.2 && diag.max < 5.0, "{} {}", diag.min, diag.max);
        assert!(diag.estimates.iter().zip(&diag.empty).all(|(e, emp)| *emp || *e > 0.0));
    }
}
