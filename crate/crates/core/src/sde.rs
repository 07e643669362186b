//! Forward simulation: time grids and explicit Euler path bundles.
//!
//! A bundle holds J initial points with M paths each over N steps in
//! dimension d, plus the Brownian increments that drove them. Path (j, m) is
//! generated from counter-based draws keyed by (seed, stream, j, m, i, c),
//! so a bundle is bit-exactly reproducible from its header alone and the
//! parallel fill order is irrelevant.

use crate::error::CoreError;
use crate::model::DiffusionSpec;
use crate::rng::CounterRng;
use crate::Result;
use rayon::prelude::*;
use std::io::{Read, Write};
use std::path::Path;

/// Strictly increasing time knots starting at 0.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    knots: Vec<f64>,
}

impl TimeGrid {
    /// Uniform grid with `n_steps` steps over [0, horizon].
    pub fn uniform(horizon: f64, n_steps: usize) -> Self {
        assert!(n_steps >= 1, "a time grid needs at least one step");
        assert!(horizon > 0.0 && horizon.is_finite());
        let knots = (0..=n_steps)
            .map(|i| horizon * i as f64 / n_steps as f64)
            .collect();
        Self { knots }
    }

    /// Builds a grid from explicit knots; they must start at 0 and strictly
    /// increase.
    pub fn from_knots(knots: Vec<f64>) -> Result<Self> {
        if knots.len() < 2 {
            return Err(CoreError::Grid(format!(
                "need at least two knots, got {}",
                knots.len()
            )));
        }
        if knots[0] != 0.0 {
            return Err(CoreError::Grid(format!(
                "first knot must be 0, got {}",
                knots[0]
            )));
        }
        for w in knots.windows(2) {
            if !(w[1] > w[0]) || !w[1].is_finite() {
                return Err(CoreError::Grid(format!(
                    "knots must strictly increase, got {} then {}",
                    w[0], w[1]
                )));
            }
        }
        Ok(Self { knots })
    }

    #[inline]
    pub fn n_steps(&self) -> usize {
        self.knots.len() - 1
    }

    #[inline]
    pub fn knot(&self, i: usize) -> f64 {
        self.knots[i]
    }

    #[inline]
    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    #[inline]
    pub fn dt(&self, i: usize) -> f64 {
        self.knots[i + 1] - self.knots[i]
    }

    #[inline]
    pub fn horizon(&self) -> f64 {
        *self.knots.last().unwrap()
    }

    pub fn max_dt(&self) -> f64 {
        self.knots
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max)
    }

    /// The implicit y-step is uniquely solvable when
    /// `max_dt * max(mu, 0) < 1`; call this before a backward sweep.
    pub fn check_monotone_step(&self, mu: f64) -> Result<()> {
        let lhs = self.max_dt() * mu.max(0.0);
        if lhs < 1.0 {
            Ok(())
        } else {
            Err(CoreError::Grid(format!(
                "max step {} times positive monotonicity constant {} is {} >= 1; \
                 refine the grid or shift the driver",
                self.max_dt(),
                mu,
                lhs
            )))
        }
    }
}

/// Simulated forward paths plus their driving increments.
///
/// Layout is row-major over (j, m, i, c): the whole path (j, m) is one
/// contiguous block. States hold N+1 knots per path, increments N steps.
#[derive(Debug, Clone)]
pub struct PathBundle {
    pub grid: TimeGrid,
    pub initial_points: Vec<Vec<f64>>,
    pub paths_per_point: usize,
    pub dim: usize,
    pub seed: u64,
    pub stream: u64,
    states: Vec<f64>,
    increments: Vec<f64>,
}

impl PathBundle {
    #[inline]
    pub fn j_points(&self) -> usize {
        self.initial_points.len()
    }

    #[inline]
    fn state_offset(&self, j: usize, m: usize, i: usize) -> usize {
        (((j * self.paths_per_point) + m) * (self.grid.n_steps() + 1) + i) * self.dim
    }

    #[inline]
    fn incr_offset(&self, j: usize, m: usize, i: usize) -> usize {
        (((j * self.paths_per_point) + m) * self.grid.n_steps() + i) * self.dim
    }

    /// State X at knot i of path (j, m).
    #[inline]
    pub fn state(&self, j: usize, m: usize, i: usize) -> &[f64] {
        let o = self.state_offset(j, m, i);
        &self.states[o..o + self.dim]
    }

    /// Brownian increment over [t_i, t_{i+1}] of path (j, m).
    #[inline]
    pub fn increment(&self, j: usize, m: usize, i: usize) -> &[f64] {
        let o = self.incr_offset(j, m, i);
        &self.increments[o..o + self.dim]
    }

    /// Sanity check on the driving noise: at every step the sample mean of
    /// the increments over all J*M paths must have norm at most
    /// `5 sqrt(d dt_i / (J M))`.
    pub fn validate_increments(&self) -> Result<()> {
        let (jn, m, d) = (self.j_points(), self.paths_per_point, self.dim);
        let total = (jn * m) as f64;
        let mut mean = vec![0.0f64; d];
        for i in 0..self.grid.n_steps() {
            mean.iter_mut().for_each(|v| *v = 0.0);
            for j in 0..jn {
                for mm in 0..m {
                    let db = self.increment(j, mm, i);
                    for c in 0..d {
                        mean[c] += db[c];
                    }
                }
            }
            let norm = mean.iter().map(|v| v * v).sum::<f64>().sqrt() / total;
            let bound = 5.0 * (d as f64 * self.grid.dt(i) / total).sqrt();
            if norm > bound {
                return Err(CoreError::Grid(format!(
                    "increment mean norm {norm} at step {i} exceeds bound {bound}"
                )));
            }
        }
        Ok(())
    }

    /// Writes the bundle as flat little-endian binary: magic `PBND0001`,
    /// six u64 header words (d, J, M, N, seed, stream), then knots,
    /// initial points, states, and increments as f64.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
        w.write_all(b"PBND0001")?;
        for v in [
            self.dim as u64,
            self.j_points() as u64,
            self.paths_per_point as u64,
            self.grid.n_steps() as u64,
            self.seed,
            self.stream,
        ] {
            w.write_all(&v.to_le_bytes())?;
        }
        for k in self.grid.knots() {
            w.write_all(&k.to_le_bytes())?;
        }
        for p in &self.initial_points {
            for v in p {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        for v in &self.states {
            w.write_all(&v.to_le_bytes())?;
        }
        for v in &self.increments {
            w.write_all(&v.to_le_bytes())?;
        }
        Ok(())
    }

    /// Reads a bundle written by [`PathBundle::write_binary`].
    pub fn read_binary(path: &Path) -> Result<PathBundle> {
        let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != b"PBND0001" {
            return Err(CoreError::Shape(format!(
                "not a path bundle: bad magic {magic:?}"
            )));
        }
        let mut word = [0u8; 8];
        let mut header = [0u64; 6];
        for h in &mut header {
            r.read_exact(&mut word)?;
            *h = u64::from_le_bytes(word);
        }
        let [d, jn, m, n, seed, stream] = header;
        let (d, jn, m, n) = (d as usize, jn as usize, m as usize, n as usize);
        let mut read_f64s = |count: usize| -> Result<Vec<f64>> {
            let mut out = vec![0.0f64; count];
            let mut buf = [0u8; 8];
            for v in &mut out {
                r.read_exact(&mut buf)?;
                *v = f64::from_le_bytes(buf);
            }
            Ok(out)
        };
        let knots = read_f64s(n + 1)?;
        let flat_init = read_f64s(jn * d)?;
        let states = read_f64s(jn * m * (n + 1) * d)?;
        let increments = read_f64s(jn * m * n * d)?;
        Ok(PathBundle {
            grid: TimeGrid::from_knots(knots)?,
            initial_points: flat_init.chunks(d).map(|c| c.to_vec()).collect(),
            paths_per_point: m,
            dim: d,
            seed,
            stream,
            states,
            increments,
        })
    }
}

/// Simulates `paths_per_point` explicit Euler paths from each initial point:
/// `X_{i+1} = X_i + b(t_i, X_i) dt_i + sigma(t_i, X_i) dB_i`.
///
/// Fails with the exact (j, m, i) location if any state goes non-finite.
pub fn simulate_bundle(
    diffusion: &DiffusionSpec,
    grid: &TimeGrid,
    initial_points: &[Vec<f64>],
    paths_per_point: usize,
    seed: u64,
) -> Result<PathBundle> {
    simulate_bundle_stream(diffusion, grid, initial_points, paths_per_point, seed, 0)
}

/// [`simulate_bundle`] with an explicit sub-stream identifier, for callers
/// that need several independent bundles from one seed.
pub fn simulate_bundle_stream(
    diffusion: &DiffusionSpec,
    grid: &TimeGrid,
    initial_points: &[Vec<f64>],
    paths_per_point: usize,
    seed: u64,
    stream: u64,
) -> Result<PathBundle> {
    let d = diffusion.dim;
    if initial_points.is_empty() {
        return Err(CoreError::Shape("no initial points".into()));
    }
    if paths_per_point == 0 {
        return Err(CoreError::Shape("paths_per_point must be at least 1".into()));
    }
    if let Some(bad) = initial_points.iter().find(|p| p.len() != d) {
        return Err(CoreError::Shape(format!(
            "initial point {bad:?} does not have dimension {d}"
        )));
    }
    let jn = initial_points.len();
    let m = paths_per_point;
    let n = grid.n_steps();
    let rng = CounterRng::new(seed, stream);

    let mut states = vec![0.0f64; jn * m * (n + 1) * d];
    let mut increments = vec![0.0f64; jn * m * n * d];

    // One contiguous block per path; disjoint writes keep the fill
    // deterministic under any thread count.
    let bad = states
        .par_chunks_mut((n + 1) * d)
        .zip(increments.par_chunks_mut(n * d))
        .enumerate()
        .map(|(path_idx, (xs, dbs))| {
            let j = path_idx / m;
            let mm = path_idx % m;
            let x0 = &initial_points[j];
            xs[..d].copy_from_slice(x0);
            let mut drift = vec![0.0f64; d];
            let mut sig = vec![0.0f64; d * d];
            for i in 0..n {
                let t = grid.knot(i);
                let dt = grid.dt(i);
                let sqdt = dt.sqrt();
                let (cur, rest) = xs[i * d..].split_at_mut(d);
                let next = &mut rest[..d];
                let db = &mut dbs[i * d..(i + 1) * d];
                for c in 0..d {
                    db[c] = sqdt * rng.normal(j as u64, mm as u64, i as u64, c as u64);
                }
                diffusion.drift_at(t, cur, &mut drift);
                diffusion.diffusion_at(t, cur, &mut sig);
                for r in 0..d {
                    let mut v = cur[r] + drift[r] * dt;
                    for c in 0..d {
                        v += sig[r * d + c] * db[c];
                    }
                    next[r] = v;
                }
                if next.iter().any(|v| !v.is_finite()) {
                    return Some((j, mm, i + 1));
                }
            }
            None
        })
        .reduce(|| None, |a, b| match (a, b) {
            (Some(x), Some(y)) => Some(x.min(y)),
            (x, y) => x.or(y),
        });

    if let Some((j, m, i)) = bad {
        return Err(CoreError::NonFiniteState { j, m, i });
    }

    Ok(PathBundle {
        grid: grid.clone(),
        initial_points: initial_points.to_vec(),
        paths_per_point: m,
        dim: d,
        seed,
        stream,
        states,
        increments,
    })
}
