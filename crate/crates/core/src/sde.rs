//! Euler-Maruyama integration of the fixed-frame diffusion.
//!
//! Per path `i` and step `k`:
//!
//! ```text
//! X_{k+1}  = X_k + b₊(X_k, t_k) dt + σ(X_k, t_k) ΔW_k
//! M_{k+1}  = M_k + √r(X_k, t_k) ΔW_k          r = d<M>/dt
//! qv_{k+1} = qv_k + r(X_k, t_k) dt
//! ```
//!
//! Every path draws from its own ChaCha8 stream (`base_seed`, stream = path
//! index), so an ensemble is bit-identical for any number of worker threads.

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::local_coefficients;
use crate::vec3::{self, Vec3};
use crate::wave::{PhysicalConstants, WaveField};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    #[default]
    EulerMaruyama,
}

/// Source of the Wiener increments. The non-Gaussian modes exist to check
/// that the statistical suites can detect broken inputs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "mode")]
pub enum NoiseMode {
    #[default]
    Gaussian,
    /// All increments are zero.
    Zero,
    /// Component `to` copies component `from`.
    Duplicate { from: usize, to: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorConfig {
    pub dt: f64,
    pub n_steps: usize,
    pub n_paths: usize,
    pub base_seed: u64,
    #[serde(default)]
    pub scheme: Scheme,
    /// Keep every `stride`-th step. Must divide `n_steps`.
    #[serde(default = "default_stride")]
    pub stride: usize,
    #[serde(default)]
    pub noise: NoiseMode,
}

fn default_stride() -> usize {
    1
}

impl IntegratorConfig {
    pub fn new(dt: f64, n_steps: usize, n_paths: usize, base_seed: u64) -> Self {
        Self {
            dt,
            n_steps,
            n_paths,
            base_seed,
            scheme: Scheme::EulerMaruyama,
            stride: 1,
            noise: NoiseMode::Gaussian,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_noise(mut self, noise: NoiseMode) -> Self {
        self.noise = noise;
        self
    }

    pub fn horizon(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if self.n_paths == 0 {
            return bad("n_paths must be at least 1".into());
        }
        if self.stride == 0 || self.n_steps % self.stride != 0 {
            return bad(format!(
                "stride {} must be positive and divide n_steps {}",
                self.stride, self.n_steps
            ));
        }
        if let NoiseMode::Duplicate { from, to } = self.noise {
            if from > 2 || to > 2 || from == to {
                return bad(format!("invalid duplicate-noise components {from} -> {to}"));
            }
        }
        Ok(())
    }
}

/// Periodic cube `[0, side)³`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodicBox {
    pub side: f64,
}

impl PeriodicBox {
    pub fn new(side: f64) -> Result<Self> {
        if side.is_finite() && side > 0.0 {
            Ok(Self { side })
        } else {
            Err(Error::InvalidConfig(format!("box side must be positive, got {side}")))
        }
    }

    pub fn wrap_scalar(&self, x: f64) -> f64 {
        let w = x.rem_euclid(self.side);
        // rem_euclid can round up to `side` for tiny negative inputs
        if w >= self.side {
            0.0
        } else {
            w
        }
    }

    pub fn wrap(&self, x: &Vec3) -> Vec3 {
        [
            self.wrap_scalar(x[0]),
            self.wrap_scalar(x[1]),
            self.wrap_scalar(x[2]),
        ]
    }
}

pub type DensityFn = Arc<dyn Fn(&Vec3) -> f64 + Send + Sync>;

/// Law of `X(0)`.
#[derive(Clone)]
pub enum InitialSampler {
    PointMass(Vec3),
    /// Uniform on the periodic box.
    UniformBox,
    /// Rejection sampling on the periodic box from an unnormalized density
    /// bounded above by `bound`.
    Density { density: DensityFn, bound: f64 },
}

impl fmt::Debug for InitialSampler {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::PointMass(x) => f.debug_tuple("PointMass").field(x).finish(),
            Self::UniformBox => f.write_str("UniformBox"),
            Self::Density { bound, .. } => f.debug_struct("Density").field("bound", bound).finish(),
        }
    }
}

const MAX_REJECTIONS: usize = 1_000_000;

impl InitialSampler {
    /// Samples `ρ(·, 0)` of a wave field on the box.
    pub fn field_density(field: &WaveField) -> Self {
        let f = field.clone();
        Self::Density {
            bound: field.density_upper_bound(),
            density: Arc::new(move |x| {
                crate::wave::rho_and_current(&f, x, 0.0)
                    .map(|(rho, _)| rho.max(0.0))
                    .unwrap_or(0.0)
            }),
        }
    }

    fn needs_box(&self) -> bool {
        !matches!(self, Self::PointMass(_))
    }

    fn sample<R: Rng>(&self, rng: &mut R, domain: Option<&PeriodicBox>) -> Result<Vec3> {
        match self {
            Self::PointMass(x) => Ok(*x),
            Self::UniformBox => {
                let b = domain.ok_or_else(|| Error::InvalidConfig("uniform init needs a box".into()))?;
                Ok(std::array::from_fn(|_| rng.random::<f64>() * b.side))
            }
            Self::Density { density, bound } => {
                let b = domain.ok_or_else(|| Error::InvalidConfig("density init needs a box".into()))?;
                for _ in 0..MAX_REJECTIONS {
                    let x: Vec3 = std::array::from_fn(|_| rng.random::<f64>() * b.side);
                    if rng.random::<f64>() * bound < density(&x) {
                        return Ok(x);
                    }
                }
                Err(Error::InvalidConfig(
                    "rejection sampler failed; is the density positive on the box?".into(),
                ))
            }
        }
    }
}

/// A path that left the admissible region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathAbort {
    pub path: usize,
    pub step: usize,
    pub reason: String,
}

/// Simulated trajectories, stored path-major. Positions are kept unwrapped
/// so increments stay continuous; [`PathEnsemble::wrapped_state`] folds them
/// into the box.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    pub constants: PhysicalConstants,
    pub t_grid: Vec<f64>,
    pub path_ids: Vec<usize>,
    pub states: Vec<Vec3>,
    pub qv: Vec<f64>,
    pub martingale: Vec<Vec3>,
    /// Wiener increments over each retained interval; `dw[k]` drives `k → k+1`.
    pub dw: Vec<Vec3>,
    pub domain: Option<PeriodicBox>,
    pub aborted: Vec<PathAbort>,
}

/// Borrowed view of one path.
#[derive(Debug, Clone, Copy)]
pub struct PathView<'a> {
    pub id: usize,
    pub t: &'a [f64],
    pub states: &'a [Vec3],
    pub qv: &'a [f64],
    pub martingale: &'a [Vec3],
    pub dw: &'a [Vec3],
}

impl PathEnsemble {
    pub fn n_paths(&self) -> usize {
        self.path_ids.len()
    }

    pub fn n_points(&self) -> usize {
        self.t_grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.path_ids.is_empty()
    }

    pub fn path(&self, i: usize) -> PathView<'_> {
        let n = self.n_points();
        let r = i * n..(i + 1) * n;
        let rw = i * (n - 1)..(i + 1) * (n - 1);
        PathView {
            id: self.path_ids[i],
            t: &self.t_grid,
            states: &self.states[r.clone()],
            qv: &self.qv[r.clone()],
            martingale: &self.martingale[r],
            dw: &self.dw[rw],
        }
    }

    pub fn paths(&self) -> impl Iterator<Item = PathView<'_>> + '_ {
        (0..self.n_paths()).map(move |i| self.path(i))
    }

    pub fn state(&self, path: usize, k: usize) -> Vec3 {
        self.states[path * self.n_points() + k]
    }

    pub fn wrapped_state(&self, path: usize, k: usize) -> Vec3 {
        let x = self.state(path, k);
        match &self.domain {
            Some(b) => b.wrap(&x),
            None => x,
        }
    }

    /// Spacing of the retained grid.
    pub fn record_dt(&self) -> f64 {
        if self.t_grid.len() < 2 {
            0.0
        } else {
            self.t_grid[1] - self.t_grid[0]
        }
    }
}

struct PathData {
    states: Vec<Vec3>,
    qv: Vec<f64>,
    martingale: Vec<Vec3>,
    dw: Vec<Vec3>,
}

enum PathOutcome {
    Done(PathData),
    Aborted(PathAbort),
}

fn draw_increment<R: Rng>(rng: &mut R, sqrt_dt: f64, noise: NoiseMode) -> Vec3 {
    match noise {
        NoiseMode::Gaussian => std::array::from_fn(|_| sqrt_dt * rng.sample::<f64, _>(StandardNormal)),
        NoiseMode::Zero => [0.0; 3],
        NoiseMode::Duplicate { from, to } => {
            let mut w: Vec3 = std::array::from_fn(|_| sqrt_dt * rng.sample::<f64, _>(StandardNormal));
            w[to] = w[from];
            w
        }
    }
}

fn path_rng(base_seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(base_seed);
    rng.set_stream(path as u64);
    rng
}

fn simulate_path(
    field: &WaveField,
    init: &InitialSampler,
    cfg: &IntegratorConfig,
    domain: Option<&PeriodicBox>,
    path: usize,
) -> Result<PathOutcome> {
    let mut rng = path_rng(cfg.base_seed, path);
    let n_points = cfg.n_steps / cfg.stride + 1;
    let mut data = PathData {
        states: Vec::with_capacity(n_points),
        qv: Vec::with_capacity(n_points),
        martingale: Vec::with_capacity(n_points),
        dw: Vec::with_capacity(n_points - 1),
    };
    let mut x = init.sample(&mut rng, domain)?;
    let mut m = vec3::ZERO;
    let mut qv = 0.0;
    let mut dw_acc = vec3::ZERO;
    data.states.push(x);
    data.qv.push(qv);
    data.martingale.push(m);
    let sqrt_dt = cfg.dt.sqrt();
    let sqrt_hbar_over_m = (field.constants().hbar / field.constants().mass).sqrt();

    for k in 0..cfg.n_steps {
        let t = k as f64 * cfg.dt;
        let coeff = match local_coefficients(field, &x, t) {
            Ok(c) => c,
            Err(e @ (Error::NonAdmissiblePoint { .. } | Error::SingularNode { .. })) => {
                return Ok(PathOutcome::Aborted(PathAbort {
                    path,
                    step: k,
                    reason: e.to_string(),
                }));
            }
            Err(e) => return Err(e),
        };
        let dw = draw_increment(&mut rng, sqrt_dt, cfg.noise);
        let sigma = coeff.sigma2.sqrt();
        // σ/√(ħ/m) = √r
        let m_scale = sigma / sqrt_hbar_over_m;
        for i in 0..3 {
            x[i] += coeff.b_plus[i] * cfg.dt + sigma * dw[i];
            m[i] += m_scale * dw[i];
            dw_acc[i] += dw[i];
        }
        qv += coeff.rate * cfg.dt;
        if !vec3::is_finite(&x) || !qv.is_finite() {
            return Err(Error::NonFinite { path, step: k + 1 });
        }
        if (k + 1) % cfg.stride == 0 {
            data.states.push(x);
            data.qv.push(qv);
            data.martingale.push(m);
            data.dw.push(dw_acc);
            dw_acc = vec3::ZERO;
        }
    }
    Ok(PathOutcome::Done(data))
}

/// Integrates `cfg.n_paths` independent paths of the forward diffusion.
///
/// Paths that hit a non-admissible point or a node of the wave function are
/// dropped and listed in [`PathEnsemble::aborted`]; a non-finite state aborts
/// the whole run.
pub fn simulate_forward(
    field: &WaveField,
    init: &InitialSampler,
    cfg: &IntegratorConfig,
    domain: Option<PeriodicBox>,
) -> Result<PathEnsemble> {
    cfg.validate()?;
    if init.needs_box() && domain.is_none() {
        return Err(Error::InvalidConfig("initial law needs a periodic box".into()));
    }
    let run = |i: usize| simulate_path(field, init, cfg, domain.as_ref(), i);

    #[cfg(feature = "parallel")]
    let outcomes: Vec<Result<PathOutcome>> = {
        use rayon::prelude::*;
        (0..cfg.n_paths).into_par_iter().map(run).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let outcomes: Vec<Result<PathOutcome>> = (0..cfg.n_paths).map(run).collect();

    let n_points = cfg.n_steps / cfg.stride + 1;
    let record_dt = cfg.dt * cfg.stride as f64;
    let mut ens = PathEnsemble {
        constants: *field.constants(),
        t_grid: (0..n_points).map(|k| k as f64 * record_dt).collect(),
        path_ids: Vec::new(),
        states: Vec::new(),
        qv: Vec::new(),
        martingale: Vec::new(),
        dw: Vec::new(),
        domain,
        aborted: Vec::new(),
    };
    for (i, outcome) in outcomes.into_iter().enumerate() {
        match outcome? {
            PathOutcome::Done(d) => {
                ens.path_ids.push(i);
                ens.states.extend(d.states);
                ens.qv.extend(d.qv);
                ens.martingale.extend(d.martingale);
                ens.dw.extend(d.dw);
            }
            PathOutcome::Aborted(a) => ens.aborted.push(a),
        }
    }
    Ok(ens)
}

fn check_component(i: usize) -> Result<()> {
    if i < 3 {
        Ok(())
    } else {
        Err(Error::ComponentOutOfRange(i))
    }
}

fn running_products(ens: &PathEnsemble, i: usize, j: usize) -> Result<Vec<Vec<f64>>> {
    if ens.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    Ok(ens
        .paths()
        .map(|p| {
            let mut acc = 0.0;
            let mut out = Vec::with_capacity(p.martingale.len());
            out.push(0.0);
            for w in p.martingale.windows(2) {
                acc += (w[1][i] - w[0][i]) * (w[1][j] - w[0][j]);
                out.push(acc);
            }
            out
        })
        .collect())
}

/// Running `Σ (ΔMⁱ)²` along each path.
pub fn realized_quadratic_variation(ens: &PathEnsemble, component: usize) -> Result<Vec<Vec<f64>>> {
    check_component(component)?;
    running_products(ens, component, component)
}

/// Running `Σ ΔMⁱ ΔMʲ` along each path.
pub fn cross_variation(ens: &PathEnsemble, i: usize, j: usize) -> Result<Vec<Vec<f64>>> {
    check_component(i)?;
    check_component(j)?;
    if i == j {
        return Err(Error::SameComponent(i));
    }
    running_products(ens, i, j)
}

/// Equal-width bins along one coordinate axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpatialBins {
    pub axis: usize,
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl SpatialBins {
    /// Bins spanning the range of `values` (slightly widened).
    pub fn covering(axis: usize, values: impl IntoIterator<Item = f64>, n: usize) -> Self {
        let (lo, hi) = values
            .into_iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| (a.min(v), b.max(v)));
        let pad = 1e-9 * (hi - lo).abs().max(1.0);
        Self {
            axis,
            lo: lo - pad,
            hi: hi + pad,
            n,
        }
    }

    pub fn index(&self, v: f64) -> Option<usize> {
        if !(v >= self.lo && v < self.hi) || self.n == 0 {
            return None;
        }
        let i = ((v - self.lo) / (self.hi - self.lo) * self.n as f64) as usize;
        Some(i.min(self.n - 1))
    }

    pub fn center(&self, i: usize) -> f64 {
        self.lo + (i as f64 + 0.5) * (self.hi - self.lo) / self.n as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinEstimate {
    pub center: f64,
    pub count: usize,
    pub mean: Vec3,
    /// Standard error of `mean`, per component.
    pub stderr: Vec3,
}

/// Binned estimate of `E{ (X(t+dt) − X(t−dt)) / (2 dt) | X(t) }`, the
/// current velocity. Empty bins come back as `None`.
pub fn conditional_symmetric_increment(
    ens: &PathEnsemble,
    k: usize,
    bins: &SpatialBins,
) -> Result<Vec<Option<BinEstimate>>> {
    if ens.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    check_component(bins.axis)?;
    let len = ens.n_points();
    if k == 0 || k + 1 >= len {
        return Err(Error::NoNeighbours { index: k, len });
    }
    let dt = ens.t_grid[k + 1] - ens.t_grid[k];
    let mut sum = vec![vec3::ZERO; bins.n];
    let mut sum_sq = vec![vec3::ZERO; bins.n];
    let mut count = vec![0usize; bins.n];
    for p in 0..ens.n_paths() {
        let here = ens.wrapped_state(p, k);
        let Some(b) = bins.index(here[bins.axis]) else {
            continue;
        };
        let ds = vec3::scale(&vec3::sub(&ens.state(p, k + 1), &ens.state(p, k - 1)), 0.5 / dt);
        for i in 0..3 {
            sum[b][i] += ds[i];
            sum_sq[b][i] += ds[i] * ds[i];
        }
        count[b] += 1;
    }
    Ok((0..bins.n)
        .map(|b| {
            let n = count[b];
            if n == 0 {
                return None;
            }
            let nf = n as f64;
            let mean = vec3::scale(&sum[b], 1.0 / nf);
            let stderr = std::array::from_fn(|i| {
                if n < 2 {
                    f64::INFINITY
                } else {
                    let var = (sum_sq[b][i] - nf * mean[i] * mean[i]) / (nf - 1.0);
                    (var.max(0.0) / nf).sqrt()
                }
            });
            Some(BinEstimate {
                center: bins.center(b),
                count: n,
                mean,
                stderr,
            })
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wave::make_plane_wave;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn plane(p: Vec3) -> WaveField {
        make_plane_wave(p, PhysicalConstants::default()).unwrap()
    }

    fn mean_var(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        let s = v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
        (m, s)
    }

    #[test]
    fn config_validation() {
        assert!(IntegratorConfig::new(0.0, 10, 1, 0).validate().is_err());
        assert!(IntegratorConfig::new(0.1, 10, 0, 0).validate().is_err());
        assert!(IntegratorConfig::new(0.1, 10, 1, 0).with_stride(3).validate().is_err());
        assert!(IntegratorConfig::new(0.1, 10, 1, 0)
            .with_noise(NoiseMode::Duplicate { from: 1, to: 1 })
            .validate()
            .is_err());
        assert!(IntegratorConfig::new(0.1, 10, 1, 0).with_stride(5).validate().is_ok());
    }

    #[test]
    fn uniform_init_requires_box() {
        let cfg = IntegratorConfig::new(0.01, 2, 2, 1);
        let err = simulate_forward(&plane([0.0; 3]), &InitialSampler::UniformBox, &cfg, None);
        assert!(matches!(err, Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn rest_particle_variance() {
        let cfg = IntegratorConfig::new(1e-3, 1000, 20_000, 11).with_stride(1000);
        let ens = simulate_forward(&plane([0.0; 3]), &InitialSampler::PointMass([0.0; 3]), &cfg, None).unwrap();
        let x1: Vec<f64> = (0..ens.n_paths()).map(|p| ens.state(p, 1)[0]).collect();
        let (_, var) = mean_var(&x1);
        assert!((var - 1.0).abs() <= 3.0 * (2.0f64 / 19_999.0).sqrt(), "var {var}");
    }

    #[test]
    fn plane_wave_mean_and_constant_rate() {
        let cfg = IntegratorConfig::new(1e-3, 1000, 20_000, 12).with_stride(500);
        let ens =
            simulate_forward(&plane([1.0, 0.0, 0.0]), &InitialSampler::PointMass([0.0; 3]), &cfg, None).unwrap();
        let x1: Vec<f64> = (0..ens.n_paths()).map(|p| ens.state(p, 2)[0]).collect();
        let (mean, _) = mean_var(&x1);
        assert!((mean - FRAC_1_SQRT_2).abs() <= 3.0 * (FRAC_1_SQRT_2 / 20_000.0).sqrt());
        for p in ens.paths() {
            assert_abs_diff_eq!(p.qv[2], FRAC_1_SQRT_2, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_noise_gives_zero_realized_variation() {
        let cfg = IntegratorConfig::new(1e-2, 50, 3, 0).with_noise(NoiseMode::Zero);
        let ens = simulate_forward(&plane([1.0, 0.0, 0.0]), &InitialSampler::PointMass([0.0; 3]), &cfg, None).unwrap();
        for series in realized_quadratic_variation(&ens, 0).unwrap() {
            assert!(series.iter().all(|&v| v == 0.0));
        }
        // deterministic drift only
        assert_abs_diff_eq!(ens.state(0, 50)[0], 0.5 * FRAC_1_SQRT_2, epsilon = 1e-12);
    }

    #[test]
    fn realized_variation_tracks_proper_time() {
        let dt = 1e-3;
        for (p, target) in [([0.0; 3], 1.0), ([1.0, 0.0, 0.0], FRAC_1_SQRT_2)] {
            let cfg = IntegratorConfig::new(dt, 1000, 200, 3);
            let ens = simulate_forward(&plane(p), &InitialSampler::PointMass([0.0; 3]), &cfg, None).unwrap();
            let tol = 5.0 * (2.0 * dt).sqrt() * target;
            for c in 0..3 {
                for series in realized_quadratic_variation(&ens, c).unwrap() {
                    assert!((series[1000] - target).abs() <= tol);
                }
            }
        }
    }

    #[test]
    fn cross_variation_is_small_and_detects_duplication() {
        let dt = 1e-3;
        let cfg = IntegratorConfig::new(dt, 1000, 400, 5);
        let ens = simulate_forward(&plane([0.0; 3]), &InitialSampler::PointMass([0.0; 3]), &cfg, None).unwrap();
        let bound = 5.0 * (2.0 * dt).sqrt();
        let cv = cross_variation(&ens, 0, 1).unwrap();
        let inside = cv.iter().filter(|s| s[1000].abs() <= bound).count();
        assert!(inside as f64 >= 0.99 * cv.len() as f64);
        assert!(matches!(cross_variation(&ens, 2, 2), Err(Error::SameComponent(2))));

        let forced = cfg.with_noise(NoiseMode::Duplicate { from: 0, to: 1 });
        let ens = simulate_forward(&plane([0.0; 3]), &InitialSampler::PointMass([0.0; 3]), &forced, None).unwrap();
        let cv = cross_variation(&ens, 0, 1).unwrap();
        let qv = realized_quadratic_variation(&ens, 0).unwrap();
        for (a, b) in cv.iter().zip(&qv) {
            assert_abs_diff_eq!(a[1000], b[1000], epsilon = 1e-12);
        }
    }

    #[test]
    fn proper_time_never_exceeds_coordinate_time() {
        for p in [[0.0; 3], [1.0, 0.0, 0.0], [1.0, 1.0, 1.0]] {
            let cfg = IntegratorConfig::new(1e-2, 100, 20, 9);
            let ens = simulate_forward(&plane(p), &InitialSampler::PointMass([0.0; 3]), &cfg, None).unwrap();
            for path in ens.paths() {
                assert_eq!(path.qv[0], 0.0);
                for (q, t) in path.qv.iter().zip(path.t) {
                    assert!(*q <= *t + 1e-12);
                }
                assert!(path.qv.windows(2).all(|w| w[1] > w[0]));
            }
        }
    }

    #[test]
    fn symmetric_increment_recovers_current_velocity() {
        // the estimator targets v only when X(t) is distributed as ρ, i.e. uniform here
        let cfg = IntegratorConfig::new(1e-3, 10, 20_000, 21);
        let domain = PeriodicBox::new(1.0).unwrap();
        let ens = simulate_forward(&plane([1.0, 0.0, 0.0]), &InitialSampler::UniformBox, &cfg, Some(domain)).unwrap();
        let bins = SpatialBins { axis: 0, lo: 0.0, hi: 1.0, n: 3 };
        let est = conditional_symmetric_increment(&ens, 5, &bins).unwrap();
        for b in est.into_iter().flatten().filter(|b| b.count > 100) {
            assert!((b.mean[0] - FRAC_1_SQRT_2).abs() <= 3.0 * b.stderr[0] + 1e-12, "{b:?}");
            assert!(b.mean[1].abs() <= 3.0 * b.stderr[1]);
        }
        assert!(matches!(
            conditional_symmetric_increment(&ens, 0, &bins),
            Err(Error::NoNeighbours { .. })
        ));
    }

    #[test]
    fn periodic_box_wraps_into_range() {
        let b = PeriodicBox::new(2.0).unwrap();
        assert_eq!(b.wrap(&[-0.5, 2.5, 4.0]), [1.5, 0.5, 0.0]);
        assert!(b.wrap_scalar(-1e-18) < 2.0);
        let cfg = IntegratorConfig::new(1e-2, 100, 50, 2);
        let ens = simulate_forward(&plane([3.0, 0.0, 0.0]), &InitialSampler::UniformBox, &cfg, Some(b)).unwrap();
        for p in 0..ens.n_paths() {
            for k in 0..ens.n_points() {
                assert!(ens.wrapped_state(p, k).iter().all(|&v| (0.0..2.0).contains(&v)));
            }
        }
    }
}
