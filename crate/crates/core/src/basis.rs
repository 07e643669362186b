//! Regression bases for conditional expectations: global polynomials of
//! bounded total degree on an affinely scaled box, piecewise-constant bins,
//! or piecewise-multilinear hat functions on a uniform grid. Fits go through
//! the normal equations with a truncated pseudo-inverse, so rank-deficient
//! designs (coincident points, empty bins) degrade gracefully and are
//! flagged instead of failing.

use crate::error::CoreError;
use crate::Result;
use nalgebra::{DMatrix, DVector};

/// Basis family plus an optional domain box. Without a box, the fit scales
/// to the sample range, which keeps scaled monomials well conditioned on
/// whatever the paths actually visited.
#[derive(Debug, Clone, PartialEq)]
pub enum BasisSpec {
    /// All monomials of total degree <= `degree` in the box-scaled
    /// coordinates.
    Polynomial {
        degree: usize,
        domain: Option<(Vec<f64>, Vec<f64>)>,
    },
    /// `bins` cells total, split evenly per dimension; prediction is the
    /// cell mean of the targets.
    PiecewiseConstant {
        bins: usize,
        domain: Option<(Vec<f64>, Vec<f64>)>,
    },
    /// Hat functions on the nodes of the same uniform grid; prediction is
    /// the multilinear interpolation of fitted nodal values. Reproduces
    /// affine functions exactly, so it fits kinked value functions without
    /// the cell-mean slope bias.
    PiecewiseLinear {
        bins: usize,
        domain: Option<(Vec<f64>, Vec<f64>)>,
    },
}

impl BasisSpec {
    /// Spec default: degree-4 polynomials in dimension 1, 64 cells above.
    pub fn default_for_dim(dim: usize) -> Self {
        if dim == 1 {
            BasisSpec::Polynomial {
                degree: 4,
                domain: None,
            }
        } else {
            BasisSpec::PiecewiseConstant {
                bins: 64,
                domain: None,
            }
        }
    }
}

/// Monomial exponent tuples with total degree <= degree, ordered by total
/// degree then lexicographically, so the constant term always comes first.
fn multi_indices(dim: usize, degree: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut cur = vec![0u32; dim];
    fn rec(out: &mut Vec<Vec<u32>>, cur: &mut Vec<u32>, pos: usize, left: u32) {
        if pos == cur.len() {
            out.push(cur.clone());
            return;
        }
        for e in 0..=left {
            cur[pos] = e;
            rec(out, cur, pos + 1, left - e);
        }
        cur[pos] = 0;
    }
    rec(&mut out, &mut cur, 0, degree as u32);
    out.sort_by_key(|e| (e.iter().sum::<u32>(), e.clone()));
    out
}

enum Fit {
    Poly {
        exps: Vec<Vec<u32>>,
        center: Vec<f64>,
        half: Vec<f64>,
        coeffs: Vec<f64>,
        pinv: DMatrix<f64>,
        sigma2: f64,
    },
    Bins {
        lo: Vec<f64>,
        width: Vec<f64>,
        per_dim: usize,
        sum: Vec<f64>,
        sum2: Vec<f64>,
        count: Vec<usize>,
    },
    Hats {
        lo: Vec<f64>,
        width: Vec<f64>,
        per_dim: usize,
        /// Fitted nodal values, row-major over `(per_dim + 1)^dim` nodes.
        coeffs: Vec<f64>,
        pinv: DMatrix<f64>,
        sigma2: f64,
    },
}

/// Per-dimension cell index and fractional offset of x on the uniform grid,
/// clamped so every point lands in an edge cell.
#[inline]
fn hat_cell(x: &[f64], lo: &[f64], width: &[f64], per_dim: usize, k: &mut [usize], f: &mut [f64]) {
    for c in 0..x.len() {
        let u = (x[c] - lo[c]) / width[c];
        let kc = (u.floor() as isize).clamp(0, per_dim as isize - 1) as usize;
        k[c] = kc;
        f[c] = (u - kc as f64).clamp(0.0, 1.0);
    }
}

/// Writes the nonzero hat features at the cell `(k, f)`: one
/// (node index, weight) pair per cell corner, weights summing to 1.
#[inline]
fn hat_features(k: &[usize], f: &[f64], per_dim: usize, out: &mut Vec<(usize, f64)>) {
    let d = k.len();
    let nodes = per_dim + 1;
    out.clear();
    for mask in 0..(1usize << d) {
        let mut idx = 0usize;
        let mut w = 1.0f64;
        for c in 0..d {
            let bit = (mask >> c) & 1;
            idx = idx * nodes + k[c] + bit;
            w *= if bit == 1 { f[c] } else { 1.0 - f[c] };
        }
        if w != 0.0 {
            out.push((idx, w));
        }
    }
}

/// A fitted conditional-expectation estimate: predicts the target mean and
/// its pointwise standard error at arbitrary x.
pub struct Regression {
    dim: usize,
    n: usize,
    fit: Fit,
    rank_deficient: bool,
}

impl Regression {
    pub fn rank_deficient(&self) -> bool {
        self.rank_deficient
    }

    pub fn n_samples(&self) -> usize {
        self.n
    }

    /// Coefficients in the scaled basis (polynomial) or the cell means
    /// (piecewise constant), for diagnostics and serialization.
    pub fn coefficients(&self) -> Vec<f64> {
        match &self.fit {
            Fit::Poly { coeffs, .. } => coeffs.clone(),
            Fit::Bins { sum, count, .. } => sum
                .iter()
                .zip(count)
                .map(|(s, c)| if *c > 0 { s / *c as f64 } else { 0.0 })
                .collect(),
            Fit::Hats { coeffs, .. } => coeffs.clone(),
        }
    }

    #[inline]
    pub fn predict(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.dim, "prediction point has wrong dimension");
        match &self.fit {
            Fit::Poly {
                exps,
                center,
                half,
                coeffs,
                ..
            } => {
                let mut acc = 0.0;
                for (e, c) in exps.iter().zip(coeffs) {
                    acc += c * monomial(x, e, center, half);
                }
                acc
            }
            Fit::Bins {
                lo,
                width,
                per_dim,
                sum,
                count,
                ..
            } => {
                let cell = cell_index(x, lo, width, *per_dim);
                if count[cell] > 0 {
                    sum[cell] / count[cell] as f64
                } else {
                    0.0
                }
            }
            Fit::Hats {
                lo,
                width,
                per_dim,
                coeffs,
                ..
            } => {
                let d = x.len();
                let mut k = [0usize; 8];
                let mut f = [0.0f64; 8];
                assert!(d <= 8, "hat basis supports at most 8 dimensions");
                hat_cell(x, lo, width, *per_dim, &mut k[..d], &mut f[..d]);
                let mut feats = Vec::with_capacity(1 << d);
                hat_features(&k[..d], &f[..d], *per_dim, &mut feats);
                feats.iter().map(|(idx, w)| coeffs[*idx] * w).sum()
            }
        }
    }

    /// Standard error of the predicted mean at x.
    pub fn predict_se(&self, x: &[f64]) -> f64 {
        match &self.fit {
            Fit::Poly {
                exps,
                center,
                half,
                pinv,
                sigma2,
                ..
            } => {
                let phi = DVector::from_iterator(
                    exps.len(),
                    exps.iter().map(|e| monomial(x, e, center, half)),
                );
                let lev = (phi.transpose() * pinv * &phi)[(0, 0)].max(0.0);
                (sigma2 * lev).sqrt()
            }
            Fit::Bins {
                lo,
                width,
                per_dim,
                sum,
                sum2,
                count,
            } => {
                let cell = cell_index(x, lo, width, *per_dim);
                let c = count[cell];
                if c < 2 {
                    return f64::INFINITY;
                }
                let mean = sum[cell] / c as f64;
                let var = ((sum2[cell] - sum[cell] * mean) / (c as f64 - 1.0)).max(0.0);
                (var / c as f64).sqrt()
            }
            Fit::Hats {
                lo,
                width,
                per_dim,
                pinv,
                sigma2,
                ..
            } => {
                let d = x.len();
                let mut k = [0usize; 8];
                let mut f = [0.0f64; 8];
                assert!(d <= 8, "hat basis supports at most 8 dimensions");
                hat_cell(x, lo, width, *per_dim, &mut k[..d], &mut f[..d]);
                let mut feats = Vec::with_capacity(1 << d);
                hat_features(&k[..d], &f[..d], *per_dim, &mut feats);
                let mut phi = DVector::<f64>::zeros(pinv.nrows());
                for (idx, w) in feats {
                    phi[idx] = w;
                }
                let lev = (phi.transpose() * pinv * &phi)[(0, 0)].max(0.0);
                (sigma2 * lev).sqrt()
            }
        }
    }
}

#[inline]
fn monomial(x: &[f64], exps: &[u32], center: &[f64], half: &[f64]) -> f64 {
    let mut v = 1.0;
    for c in 0..x.len() {
        let xt = (x[c] - center[c]) / half[c];
        v *= xt.powi(exps[c] as i32);
    }
    v
}

#[inline]
fn cell_index(x: &[f64], lo: &[f64], width: &[f64], per_dim: usize) -> usize {
    let mut idx = 0usize;
    for c in 0..x.len() {
        let mut k = ((x[c] - lo[c]) / width[c]).floor() as isize;
        // clamp into the edge cells so predictions exist everywhere
        k = k.clamp(0, per_dim as isize - 1);
        idx = idx * per_dim + k as usize;
    }
    idx
}

/// Least-squares fit of `targets` on the basis evaluated at `points`
/// (`n` rows of length `dim`, flattened row-major). Assembly and solve are
/// fully sequential, so results do not depend on thread count.
pub fn regress(basis: &BasisSpec, points: &[f64], dim: usize, targets: &[f64]) -> Result<Regression> {
    if dim == 0 || points.len() % dim != 0 {
        return Err(CoreError::Shape(format!(
            "point array length {} is not a multiple of dim {}",
            points.len(),
            dim
        )));
    }
    let n = points.len() / dim;
    if n == 0 || targets.len() != n {
        return Err(CoreError::Shape(format!(
            "have {n} points but {} targets",
            targets.len()
        )));
    }

    match basis {
        BasisSpec::Polynomial { degree, domain } => {
            let (center, half) = scaling(points, dim, n, domain);
            let exps = multi_indices(dim, *degree);
            let p = exps.len();
            let mut xtx = DMatrix::<f64>::zeros(p, p);
            let mut xty = DVector::<f64>::zeros(p);
            let mut phi = vec![0.0f64; p];
            for r in 0..n {
                let x = &points[r * dim..(r + 1) * dim];
                for (k, e) in exps.iter().enumerate() {
                    phi[k] = monomial(x, e, &center, &half);
                }
                for a in 0..p {
                    for b in a..p {
                        xtx[(a, b)] += phi[a] * phi[b];
                    }
                    xty[a] += phi[a] * targets[r];
                }
            }
            for a in 0..p {
                for b in 0..a {
                    xtx[(a, b)] = xtx[(b, a)];
                }
            }

            // Truncated pseudo-inverse of the (symmetric) normal matrix.
            let svd = xtx.clone().svd(true, true);
            let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
            let cutoff = smax * 1e-12;
            let rank = svd
                .singular_values
                .iter()
                .filter(|s| **s > cutoff)
                .count();
            let rank_deficient = rank < p;
            let pinv = svd
                .pseudo_inverse(cutoff)
                .map_err(|e| CoreError::Shape(format!("pseudo-inverse failed: {e}")))?;
            let coeffs_v = &pinv * &xty;

            // Residual variance with rank-adjusted degrees of freedom.
            let mut ss = 0.0;
            for r in 0..n {
                let x = &points[r * dim..(r + 1) * dim];
                let mut yhat = 0.0;
                for (k, e) in exps.iter().enumerate() {
                    yhat += coeffs_v[k] * monomial(x, e, &center, &half);
                }
                let res = targets[r] - yhat;
                ss += res * res;
            }
            let dof = (n.saturating_sub(rank)).max(1) as f64;
            let sigma2 = ss / dof;

            Ok(Regression {
                dim,
                n,
                rank_deficient,
                fit: Fit::Poly {
                    exps,
                    center,
                    half,
                    coeffs: coeffs_v.iter().cloned().collect(),
                    pinv,
                    sigma2,
                },
            })
        }
        BasisSpec::PiecewiseConstant { bins, domain } => {
            if *bins == 0 {
                return Err(CoreError::Shape("piecewise basis needs at least one bin".into()));
            }
            let per_dim = (*bins as f64).powf(1.0 / dim as f64).round().max(1.0) as usize;
            let cells = per_dim.pow(dim as u32);
            let (lo, hi) = bounds(points, dim, n, domain);
            let width: Vec<f64> = lo
                .iter()
                .zip(&hi)
                .map(|(l, h)| ((h - l) / per_dim as f64).max(f64::MIN_POSITIVE))
                .collect();
            let mut sum = vec![0.0f64; cells];
            let mut sum2 = vec![0.0f64; cells];
            let mut count = vec![0usize; cells];
            for r in 0..n {
                let x = &points[r * dim..(r + 1) * dim];
                let cell = cell_index(x, &lo, &width, per_dim);
                sum[cell] += targets[r];
                sum2[cell] += targets[r] * targets[r];
                count[cell] += 1;
            }
            let rank_deficient = count.iter().any(|c| *c == 0);
            Ok(Regression {
                dim,
                n,
                rank_deficient,
                fit: Fit::Bins {
                    lo,
                    width,
                    per_dim,
                    sum,
                    sum2,
                    count,
                },
            })
        }
        BasisSpec::PiecewiseLinear { bins, domain } => {
            if *bins == 0 {
                return Err(CoreError::Shape("piecewise basis needs at least one bin".into()));
            }
            if dim > 8 {
                return Err(CoreError::Shape(format!(
                    "hat basis supports at most 8 dimensions, got {dim}"
                )));
            }
            let per_dim = (*bins as f64).powf(1.0 / dim as f64).round().max(1.0) as usize;
            let p = (per_dim + 1).pow(dim as u32);
            let (lo, hi) = bounds(points, dim, n, domain);
            let width: Vec<f64> = lo
                .iter()
                .zip(&hi)
                .map(|(l, h)| ((h - l) / per_dim as f64).max(f64::MIN_POSITIVE))
                .collect();

            // at most 2^dim nonzero features per point, so assemble the
            // normal matrix from the sparse pairs instead of a dense row
            let mut xtx = DMatrix::<f64>::zeros(p, p);
            let mut xty = DVector::<f64>::zeros(p);
            let mut k = vec![0usize; dim];
            let mut f = vec![0.0f64; dim];
            let mut feats: Vec<(usize, f64)> = Vec::with_capacity(1 << dim);
            for r in 0..n {
                let x = &points[r * dim..(r + 1) * dim];
                hat_cell(x, &lo, &width, per_dim, &mut k, &mut f);
                hat_features(&k, &f, per_dim, &mut feats);
                for &(a, wa) in &feats {
                    xty[a] += wa * targets[r];
                    for &(b, wb) in &feats {
                        if b >= a {
                            xtx[(a, b)] += wa * wb;
                        }
                    }
                }
            }
            for a in 0..p {
                for b in 0..a {
                    xtx[(a, b)] = xtx[(b, a)];
                }
            }

            let svd = xtx.clone().svd(true, true);
            let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
            let cutoff = smax * 1e-12;
            let rank = svd
                .singular_values
                .iter()
                .filter(|s| **s > cutoff)
                .count();
            let rank_deficient = rank < p;
            let pinv = svd
                .pseudo_inverse(cutoff)
                .map_err(|e| CoreError::Shape(format!("pseudo-inverse failed: {e}")))?;
            let coeffs_v = &pinv * &xty;
            let coeffs: Vec<f64> = coeffs_v.iter().cloned().collect();

            let mut ss = 0.0;
            for r in 0..n {
                let x = &points[r * dim..(r + 1) * dim];
                hat_cell(x, &lo, &width, per_dim, &mut k, &mut f);
                hat_features(&k, &f, per_dim, &mut feats);
                let yhat: f64 = feats.iter().map(|(idx, w)| coeffs[*idx] * w).sum();
                let res = targets[r] - yhat;
                ss += res * res;
            }
            let dof = (n.saturating_sub(rank)).max(1) as f64;
            let sigma2 = ss / dof;

            Ok(Regression {
                dim,
                n,
                rank_deficient,
                fit: Fit::Hats {
                    lo,
                    width,
                    per_dim,
                    coeffs,
                    pinv,
                    sigma2,
                },
            })
        }
    }
}

fn bounds(
    points: &[f64],
    dim: usize,
    n: usize,
    domain: &Option<(Vec<f64>, Vec<f64>)>,
) -> (Vec<f64>, Vec<f64>) {
    if let Some((lo, hi)) = domain {
        return (lo.clone(), hi.clone());
    }
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for r in 0..n {
        for c in 0..dim {
            let v = points[r * dim + c];
            lo[c] = lo[c].min(v);
            hi[c] = hi[c].max(v);
        }
    }
    (lo, hi)
}

fn scaling(
    points: &[f64],
    dim: usize,
    n: usize,
    domain: &Option<(Vec<f64>, Vec<f64>)>,
) -> (Vec<f64>, Vec<f64>) {
    let (lo, hi) = bounds(points, dim, n, domain);
    let center: Vec<f64> = lo.iter().zip(&hi).map(|(l, h)| 0.5 * (l + h)).collect();
    let half: Vec<f64> = lo
        .iter()
        .zip(&hi)
        .map(|(l, h)| {
            let w = 0.5 * (h - l);
            if w > 0.0 {
                w
            } else {
                1.0
            }
        })
        .collect();
    (center, half)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;

    #[test]
    fn linear_fit_recovers_identity() {
        let basis = BasisSpec::Polynomial {
            degree: 1,
            domain: Some((vec![-1.0], vec![1.0])),
        };
        let xs: Vec<f64> = (0..100).map(|i| -1.0 + 2.0 * i as f64 / 99.0).collect();
        let reg = regress(&basis, &xs, 1, &xs).unwrap();
        let c = reg.coefficients();
        assert!(c[0].abs() < 1e-10, "intercept {}", c[0]);
        assert!((c[1] - 1.0).abs() < 1e-10, "slope {}", c[1]);
        assert!(!reg.rank_deficient());
        assert!((reg.predict(&[0.37]) - 0.37).abs() < 1e-10);
    }

    #[test]
    fn quadratic_coefficient_survives_noise() {
        let basis = BasisSpec::Polynomial {
            degree: 2,
            domain: Some((vec![-1.0], vec![1.0])),
        };
        let rng = CounterRng::new(2024, 0);
        let n = 10_000;
        let xs: Vec<f64> = (0..n).map(|i| -1.0 + 2.0 * i as f64 / (n - 1) as f64).collect();
        let ys: Vec<f64> = xs
            .iter()
            .enumerate()
            .map(|(i, x)| x * x + 0.01 * rng.normal(0, i as u64, 0, 0))
            .collect();
        let reg = regress(&basis, &xs, 1, &ys).unwrap();
        let c = reg.coefficients();
        assert!((c[2] - 1.0).abs() < 0.02, "quadratic coefficient {}", c[2]);
    }

    #[test]
    fn coincident_points_fall_back_to_the_mean() {
        let basis = BasisSpec::Polynomial {
            degree: 4,
            domain: None,
        };
        let xs = vec![2.5; 50];
        let ys: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let reg = regress(&basis, &xs, 1, &ys).unwrap();
        assert!(reg.rank_deficient());
        let mean = ys.iter().sum::<f64>() / 50.0;
        assert!((reg.predict(&[2.5]) - mean).abs() < 1e-8);
        // se of a plain mean: sd/sqrt(n)
        let sd = (ys.iter().map(|y| (y - mean) * (y - mean)).sum::<f64>() / 49.0).sqrt();
        let se = reg.predict_se(&[2.5]);
        assert!(
            (se - sd / 50.0f64.sqrt()).abs() / se < 0.05,
            "se {se} vs {}",
            sd / 50.0f64.sqrt()
        );
    }

    #[test]
    fn piecewise_bins_take_cell_means_and_flag_empties() {
        let basis = BasisSpec::PiecewiseConstant {
            bins: 4,
            domain: Some((vec![0.0], vec![4.0])),
        };
        // fill cells 0, 1, 3; cell 2 stays empty
        let xs = vec![0.5, 0.6, 1.5, 3.5, 3.6];
        let ys = vec![1.0, 3.0, 10.0, 7.0, 9.0];
        let reg = regress(&basis, &xs, 1, &ys).unwrap();
        assert!(reg.rank_deficient());
        assert!((reg.predict(&[0.1]) - 2.0).abs() < 1e-12);
        assert!((reg.predict(&[1.9]) - 10.0).abs() < 1e-12);
        assert!((reg.predict(&[3.9]) - 8.0).abs() < 1e-12);
        // clamped outside the domain
        assert!((reg.predict(&[-5.0]) - 2.0).abs() < 1e-12);
        assert!((reg.predict(&[99.0]) - 8.0).abs() < 1e-12);
    }

    #[test]
    fn multivariate_quadratic_is_exact() {
        let basis = BasisSpec::Polynomial {
            degree: 2,
            domain: Some((vec![-1.0, -1.0], vec![1.0, 1.0])),
        };
        let mut pts = Vec::new();
        let mut ys = Vec::new();
        for i in 0..21 {
            for j in 0..21 {
                let x = -1.0 + i as f64 / 10.0;
                let y = -1.0 + j as f64 / 10.0;
                pts.push(x);
                pts.push(y);
                ys.push(2.0 + x - y + 0.5 * x * y + x * x);
            }
        }
        let reg = regress(&basis, &pts, 2, &ys).unwrap();
        assert!(!reg.rank_deficient());
        for (x, y) in [(0.3, -0.7), (0.0, 0.0), (0.9, 0.9)] {
            let want = 2.0 + x - y + 0.5 * x * y + x * x;
            assert!((reg.predict(&[x, y]) - want).abs() < 1e-9);
        }
    }

    #[test]
    fn hat_basis_reproduces_affine_functions_exactly() {
        let basis = BasisSpec::PiecewiseLinear {
            bins: 8,
            domain: Some((vec![-1.0], vec![1.0])),
        };
        let xs: Vec<f64> = (0..200).map(|i| -1.0 + 2.0 * i as f64 / 199.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 - 2.0 * x).collect();
        let reg = regress(&basis, &xs, 1, &ys).unwrap();
        assert!(!reg.rank_deficient());
        for x in [-0.95, -0.3, 0.0, 0.417, 0.99] {
            assert!((reg.predict(&[x]) - (3.0 - 2.0 * x)).abs() < 1e-9);
        }
    }

    #[test]
    fn hat_basis_tracks_a_kink_where_polynomials_cannot() {
        let kink = |x: f64| (0.25 - x).max(0.0);
        let xs: Vec<f64> = (0..4000).map(|i| -1.0 + 2.0 * i as f64 / 3999.0).collect();
        let ys: Vec<f64> = xs.iter().map(|x| kink(*x)).collect();
        let hats = regress(
            &BasisSpec::PiecewiseLinear {
                bins: 64,
                domain: Some((vec![-1.0], vec![1.0])),
            },
            &xs,
            1,
            &ys,
        )
        .unwrap();
        let poly = regress(
            &BasisSpec::Polynomial {
                degree: 4,
                domain: Some((vec![-1.0], vec![1.0])),
            },
            &xs,
            1,
            &ys,
        )
        .unwrap();
        let sup = |reg: &Regression| {
            xs.iter()
                .map(|x| (reg.predict(&[*x]) - kink(*x)).abs())
                .fold(0.0f64, f64::max)
        };
        let (eh, ep) = (sup(&hats), sup(&poly));
        assert!(eh < 0.01, "hat sup error {eh}");
        assert!(ep > 5.0 * eh, "hat {eh} should beat degree-4 {ep} clearly");
    }

    #[test]
    fn hat_basis_flags_unsupported_nodes() {
        let basis = BasisSpec::PiecewiseLinear {
            bins: 4,
            domain: Some((vec![0.0], vec![4.0])),
        };
        // nothing lands in (2, 4], so the last node has no support
        let xs = vec![0.1, 0.9, 1.1, 1.9, 0.5];
        let ys = vec![1.0, 1.0, 2.0, 2.0, 1.0];
        let reg = regress(&basis, &xs, 1, &ys).unwrap();
        assert!(reg.rank_deficient());
        assert!(reg.predict(&[1.0]).is_finite());
    }

    #[test]
    fn hat_basis_interpolates_in_two_dimensions() {
        let basis = BasisSpec::PiecewiseLinear {
            bins: 16,
            domain: Some((vec![0.0, 0.0], vec![1.0, 1.0])),
        };
        let mut pts = Vec::new();
        let mut ys = Vec::new();
        for i in 0..40 {
            for j in 0..40 {
                let x = i as f64 / 39.0;
                let y = j as f64 / 39.0;
                pts.push(x);
                pts.push(y);
                // bilinear in each cell, so hats reproduce it exactly
                ys.push(1.0 + 2.0 * x - y);
            }
        }
        let reg = regress(&basis, &pts, 2, &ys).unwrap();
        for (x, y) in [(0.21, 0.77), (0.5, 0.5), (0.93, 0.08)] {
            let want = 1.0 + 2.0 * x - y;
            assert!((reg.predict(&[x, y]) - want).abs() < 1e-8);
        }
    }

    #[test]
    fn shape_errors_are_reported() {
        let basis = BasisSpec::default_for_dim(1);
        assert!(regress(&basis, &[1.0, 2.0], 1, &[1.0]).is_err());
        assert!(regress(&basis, &[1.0, 2.0, 3.0], 2, &[1.0]).is_err());
        assert!(regress(&basis, &[], 1, &[]).is_err());
    }
}
