//! Random time change from coordinate time `t` to proper time `τ`.
//!
//! `T(τ) = inf{t ≥ 0 : <M>(t) ≥ τ}` is computed per path by piecewise-linear
//! inversion of the sampled quadratic variation. The τ-domain process is
//! `X̃(τ) = X(T(τ))`, driven by `W̃(τ) = M(T(τ))`, with constant diffusion
//! coefficient `ħ/m`.
//!
//! The imaginary fourth coordinate `x⁴ = ict` is carried as the real
//! `time_like = ct` under the metric `(+, +, +, −)`. Every contraction
//! `∇ν a · ∇ν b` therefore reads `∇a·∇b − (1/c²) ∂ₜa ∂ₜb` and the 4-Laplacian
//! reads `Δ − (1/c²) ∂ₜ²`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sde::PathEnsemble;
use crate::vec3::{self, Vec3};
use crate::wave::{PhysicalConstants, SpaceTimeGrid, WaveField, WaveSample};

/// Index `lo` and weight `w` with `qv(lo) + w (qv(lo+1) − qv(lo)) = τ`.
fn locate(qv: &[f64], tau: f64) -> Result<(usize, f64)> {
    let last = *qv.last().ok_or(Error::EmptyEnsemble)?;
    if !(tau >= 0.0) {
        return Err(Error::InvalidConfig(format!("proper time must be >= 0, got {tau}")));
    }
    if tau > last {
        return Err(Error::OutOfHorizon {
            tau,
            available: last,
        });
    }
    let j = qv.partition_point(|&q| q < tau);
    if j == 0 {
        return Ok((0, 0.0));
    }
    let lo = j - 1;
    Ok((lo, (tau - qv[lo]) / (qv[j] - qv[lo])))
}

/// `T(τ)` for one path, given its time grid and quadratic-variation series.
pub fn stopping_time(t_grid: &[f64], qv: &[f64], tau: f64) -> Result<f64> {
    let (lo, w) = locate(qv, tau)?;
    Ok(interp_scalar(t_grid, lo, w))
}

/// `<M>(t)` at an arbitrary time by linear interpolation.
pub fn qv_at(t_grid: &[f64], qv: &[f64], t: f64) -> Result<f64> {
    // `t_grid` is increasing, so the same inversion applies with roles swapped
    let (lo, w) = locate(t_grid, t)?;
    Ok(interp_scalar(qv, lo, w))
}

fn interp_scalar(v: &[f64], lo: usize, w: f64) -> f64 {
    if w == 0.0 {
        v[lo]
    } else {
        v[lo] + w * (v[lo + 1] - v[lo])
    }
}

fn interp_vec(v: &[Vec3], lo: usize, w: f64) -> Vec3 {
    if w == 0.0 {
        v[lo]
    } else {
        vec3::lerp(&v[lo], &v[lo + 1], w)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShortPathPolicy {
    /// Shrink `τ_max` to the smallest accumulated proper time in the ensemble.
    #[default]
    Truncate,
    /// Keep `τ_max` and drop the paths that do not reach it.
    Drop,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauGrid {
    pub dtau: f64,
    #[serde(default)]
    pub tau_max: Option<f64>,
    #[serde(default)]
    pub policy: ShortPathPolicy,
}

impl TauGrid {
    pub fn new(dtau: f64, tau_max: Option<f64>) -> Self {
        Self {
            dtau,
            tau_max,
            policy: ShortPathPolicy::Truncate,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeChangedEnsemble {
    pub constants: PhysicalConstants,
    pub tau_grid: Vec<f64>,
    pub path_ids: Vec<usize>,
    pub x_tilde: Vec<Vec3>,
    pub t_of_tau: Vec<f64>,
    /// `M(T(τ))` per path and τ.
    pub m_tilde: Vec<Vec3>,
    /// `M(T(τ_{k+1})) − M(T(τ_k))`, `n_tau − 1` per path.
    pub w_tilde_increments: Vec<Vec3>,
    /// Paths removed by [`ShortPathPolicy::Drop`].
    pub dropped: Vec<usize>,
}

impl TimeChangedEnsemble {
    pub fn n_paths(&self) -> usize {
        self.path_ids.len()
    }

    pub fn n_tau(&self) -> usize {
        self.tau_grid.len()
    }

    pub fn x_tilde_path(&self, i: usize) -> &[Vec3] {
        let n = self.n_tau();
        &self.x_tilde[i * n..(i + 1) * n]
    }

    pub fn t_of_tau_path(&self, i: usize) -> &[f64] {
        let n = self.n_tau();
        &self.t_of_tau[i * n..(i + 1) * n]
    }

    pub fn increments_path(&self, i: usize) -> &[Vec3] {
        let n = self.n_tau() - 1;
        &self.w_tilde_increments[i * n..(i + 1) * n]
    }

    /// Pooled increments of one component of `W̃`.
    pub fn component_increments(&self, component: usize) -> Result<Vec<f64>> {
        if component > 2 {
            return Err(Error::ComponentOutOfRange(component));
        }
        Ok(self.w_tilde_increments.iter().map(|w| w[component]).collect())
    }

    /// Per path, `Σ (ΔX̃ⁱ)²` over the first `upto` τ-steps.
    pub fn x_tilde_realized_qv(&self, component: usize, upto: usize) -> Result<Vec<f64>> {
        if component > 2 {
            return Err(Error::ComponentOutOfRange(component));
        }
        let upto = upto.min(self.n_tau() - 1);
        Ok((0..self.n_paths())
            .map(|i| {
                self.x_tilde_path(i)[..=upto]
                    .windows(2)
                    .map(|w| (w[1][component] - w[0][component]).powi(2))
                    .sum()
            })
            .collect())
    }
}

/// Applies `t → T(τ)` to every path of an ensemble.
pub fn time_change_ensemble(ens: &PathEnsemble, grid: &TauGrid) -> Result<TimeChangedEnsemble> {
    if ens.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    if !(grid.dtau.is_finite() && grid.dtau > 0.0) {
        return Err(Error::InvalidConfig(format!("dtau must be positive, got {}", grid.dtau)));
    }
    let reach: Vec<f64> = ens.paths().map(|p| *p.qv.last().unwrap_or(&0.0)).collect();
    let min_reach = reach.iter().copied().fold(f64::INFINITY, f64::min);
    let (tau_max, keep): (f64, Vec<usize>) = match grid.policy {
        ShortPathPolicy::Truncate => {
            let tau_max = grid.tau_max.map_or(min_reach, |t| t.min(min_reach));
            (tau_max, (0..ens.n_paths()).collect())
        }
        ShortPathPolicy::Drop => {
            let tau_max = grid.tau_max.ok_or_else(|| {
                Error::InvalidConfig("the drop policy needs an explicit tau_max".into())
            })?;
            (tau_max, (0..ens.n_paths()).filter(|&i| reach[i] >= tau_max).collect())
        }
    };
    if keep.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let n_tau = (tau_max / grid.dtau + 1e-9).floor() as usize + 1;
    let tau_grid: Vec<f64> = (0..n_tau).map(|k| (k as f64 * grid.dtau).min(tau_max)).collect();
    let mut kept = vec![false; ens.n_paths()];
    for &i in &keep {
        kept[i] = true;
    }

    let mut tc = TimeChangedEnsemble {
        constants: ens.constants,
        tau_grid,
        path_ids: Vec::with_capacity(keep.len()),
        x_tilde: Vec::with_capacity(keep.len() * n_tau),
        t_of_tau: Vec::with_capacity(keep.len() * n_tau),
        m_tilde: Vec::with_capacity(keep.len() * n_tau),
        w_tilde_increments: Vec::with_capacity(keep.len() * n_tau.saturating_sub(1)),
        dropped: (0..ens.n_paths())
            .filter(|&i| !kept[i])
            .map(|i| ens.path_ids[i])
            .collect(),
    };
    for &i in &keep {
        let p = ens.path(i);
        tc.path_ids.push(p.id);
        let start = tc.m_tilde.len();
        for &tau in &tc.tau_grid {
            let (lo, w) = locate(p.qv, tau)?;
            tc.t_of_tau.push(interp_scalar(p.t, lo, w));
            tc.x_tilde.push(interp_vec(p.states, lo, w));
            tc.m_tilde.push(interp_vec(p.martingale, lo, w));
        }
        for k in start + 1..tc.m_tilde.len() {
            tc.w_tilde_increments.push(vec3::sub(&tc.m_tilde[k], &tc.m_tilde[k - 1]));
        }
    }
    Ok(tc)
}

/// Worst `|<M>(T(τ)) − τ|` and `|T(<M>(t)) − t|` over all paths and grid points.
pub fn roundtrip_errors(ens: &PathEnsemble, tc: &TimeChangedEnsemble) -> Result<(f64, f64)> {
    let mut forward = 0.0f64;
    let mut backward = 0.0f64;
    let index: std::collections::HashMap<usize, usize> =
        ens.path_ids.iter().enumerate().map(|(i, id)| (*id, i)).collect();
    for (i, id) in tc.path_ids.iter().enumerate() {
        let p = index
            .get(id)
            .map(|&j| ens.path(j))
            .ok_or_else(|| Error::InvalidConfig(format!("path {id} missing from ensemble")))?;
        for (tau, t) in tc.tau_grid.iter().zip(tc.t_of_tau_path(i)) {
            forward = forward.max((qv_at(p.t, p.qv, *t)? - tau).abs());
        }
        for (t, q) in p.t.iter().zip(p.qv) {
            backward = backward.max((stopping_time(p.t, p.qv, *q)? - t).abs());
        }
    }
    Ok((forward, backward))
}

/// Worst deviation of the finite-difference `ΔT/Δτ` from
/// `−(1/mc²) ∂S/∂t` at `(X̃(τ), T(τ))`.
pub fn stopping_time_rate_residual(field: &WaveField, tc: &TimeChangedEnsemble) -> Result<f64> {
    let k = field.constants();
    let mut worst = 0.0f64;
    for i in 0..tc.n_paths() {
        let xs = tc.x_tilde_path(i);
        let ts = tc.t_of_tau_path(i);
        for j in 0..tc.n_tau() - 1 {
            let dtau = tc.tau_grid[j + 1] - tc.tau_grid[j];
            let estimate = (ts[j + 1] - ts[j]) / dtau;
            let sample = field.evaluate(&xs[j], ts[j])?;
            let exact = -sample.ds_dt() / (k.mass * k.c * k.c);
            worst = worst.max((estimate - exact).abs());
        }
    }
    Ok(worst)
}

/// Point of Minkowski space with real time-like component `ct`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourVector {
    pub spatial: Vec3,
    pub time_like: f64,
}

impl FourVector {
    pub fn minkowski_square(&self) -> f64 {
        vec3::dot(&self.spatial, &self.spatial) - self.time_like * self.time_like
    }
}

/// `X̃ν(τ) = (X̃(τ), c T(τ))` per path.
pub fn four_vector_process(tc: &TimeChangedEnsemble, constants: &PhysicalConstants) -> Vec<Vec<FourVector>> {
    (0..tc.n_paths())
        .map(|i| {
            tc.x_tilde_path(i)
                .iter()
                .zip(tc.t_of_tau_path(i))
                .map(|(x, t)| FourVector {
                    spatial: *x,
                    time_like: constants.c * t,
                })
                .collect()
        })
        .collect()
}

fn minkowski_dot(a: &[f64; 4], b: &[f64; 4], c: f64) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2] - a[3] * b[3] / (c * c)
}

fn box_operator(h: &[[f64; 4]; 4], c: f64) -> f64 {
    h[0][0] + h[1][1] + h[2][2] - h[3][3] / (c * c)
}

fn mass_shell_residual(s: &WaveSample, k: &PhysicalConstants) -> f64 {
    let mc = k.rest_momentum();
    (minkowski_dot(&s.grad_s, &s.grad_s, k.c) + mc * mc).abs()
}

/// `max |∇S·∇S − (1/c²)(∂S/∂t)² + m²c²|` over the given points.
pub fn minkowski_gradient_identity(field: &WaveField, points: &[(Vec3, f64)]) -> Result<f64> {
    let k = field.constants();
    points.iter().try_fold(0.0f64, |acc, (x, t)| {
        let s = field.evaluate(x, *t)?;
        Ok(acc.max(mass_shell_residual(&s, k)))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvariantMeasureReport {
    pub a11_residual_max: f64,
    pub a12_residual_max: f64,
    pub covariant_continuity_residual_max: f64,
    pub minkowski_gradient_norm_error_max: f64,
}

/// Pointwise residuals of the real and imaginary parts of the 4D
/// Klein-Gordon equation in polar form, and of `∇ν·(ρ̃ (1/m) ∇νS) = 0`
/// with `ρ̃ = |φ|²`.
pub fn invariant_measure_checks(field: &WaveField, grid: &SpaceTimeGrid) -> Result<InvariantMeasureReport> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("grid is empty".into()));
    }
    let k = field.constants();
    let (hbar, m, c) = (k.hbar, k.mass, k.c);
    let mut r = InvariantMeasureReport {
        a11_residual_max: 0.0,
        a12_residual_max: 0.0,
        covariant_continuity_residual_max: 0.0,
        minkowski_gradient_norm_error_max: 0.0,
    };
    for (x, t) in grid.nodes() {
        let s = field.evaluate(&x, t)?;
        let ss = minkowski_dot(&s.grad_s, &s.grad_s, c);
        let rr = minkowski_dot(&s.grad_r, &s.grad_r, c);
        let sr = minkowski_dot(&s.grad_s, &s.grad_r, c);
        let box_r = box_operator(&s.hess_r, c);
        let box_s = box_operator(&s.hess_s, c);
        let a11 = -ss / (2.0 * m) + hbar * hbar / (2.0 * m) * (rr + box_r) - m * c * c / 2.0;
        let a12 = sr / m + box_s / (2.0 * m);
        let rho = s.modulus_sq();
        let grad_rho: [f64; 4] = std::array::from_fn(|a| 2.0 * rho * s.grad_r[a]);
        let continuity = (minkowski_dot(&grad_rho, &s.grad_s, c) + rho * box_s) / m;
        r.a11_residual_max = r.a11_residual_max.max(a11.abs());
        r.a12_residual_max = r.a12_residual_max.max(a12.abs());
        r.covariant_continuity_residual_max = r.covariant_continuity_residual_max.max(continuity.abs());
        r.minkowski_gradient_norm_error_max =
            r.minkowski_gradient_norm_error_max.max(mass_shell_residual(&s, k));
    }
    Ok(r)
}

/// Smooth compactly supported test function on `(x¹, x², x³, t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TestFunction {
    Zero,
    /// `A Π_a β((y_a − center_a)/radius_a)` with `β(s) = exp(−1/(1 − s²))` on `|s| < 1`.
    SeparableBump {
        center: [f64; 4],
        radius: [f64; 4],
        amplitude: f64,
    },
}

/// `β`, `β'`, `β''` of the standard bump.
fn bump_1d(s: f64) -> [f64; 3] {
    if s.abs() >= 1.0 {
        return [0.0; 3];
    }
    let q = 1.0 - s * s;
    let b = (-1.0 / q).exp();
    let d1 = b * (-2.0 * s / (q * q));
    let d2 = b * (4.0 * s * s / q.powi(4) - 2.0 / (q * q) - 8.0 * s * s / q.powi(3));
    [b, d1, d2]
}

impl TestFunction {
    fn axis_table(&self, axis: usize, nodes: &[f64]) -> Vec<[f64; 3]> {
        match *self {
            TestFunction::Zero => vec![[0.0; 3]; nodes.len()],
            TestFunction::SeparableBump {
                center,
                radius,
                amplitude,
            } => nodes
                .iter()
                .map(|y| {
                    let [b, d1, d2] = bump_1d((y - center[axis]) / radius[axis]);
                    let a = if axis == 0 { amplitude } else { 1.0 };
                    let r = radius[axis];
                    [a * b, a * d1 / r, a * d2 / (r * r)]
                })
                .collect(),
        }
    }

    fn check_support(&self, lo: &[f64; 4], hi: &[f64; 4]) -> Result<()> {
        if let TestFunction::SeparableBump { center, radius, .. } = self {
            for a in 0..4 {
                if !(radius[a] > 0.0) || center[a] - radius[a] < lo[a] || center[a] + radius[a] > hi[a] {
                    return Err(Error::SupportViolation(format!(
                        "axis {a}: support [{}, {}] not inside [{}, {}]",
                        center[a] - radius[a],
                        center[a] + radius[a],
                        lo[a],
                        hi[a]
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureBox {
    pub lo: [f64; 4],
    pub hi: [f64; 4],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdjointQuadrature {
    pub lhs: f64,
    pub rhs: f64,
    /// `|⟨Lf, g⟩_μ + ⟨f, L₋g⟩_μ|`.
    pub defect: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdjointReport {
    pub coarse_n: usize,
    pub fine_n: usize,
    pub coarse: AdjointQuadrature,
    pub fine: AdjointQuadrature,
    /// Richardson estimate of the remaining quadrature error in `⟨Lf, g⟩_μ`.
    pub richardson_error: f64,
    /// `|⟨Lf, g⟩_μ − ⟨f, L₋g⟩_μ|` at the fine resolution, for reference.
    pub literal_sign_difference: f64,
}

impl AdjointReport {
    pub fn defect(&self) -> f64 {
        self.fine.defect
    }
}

fn adjoint_quadrature(
    field: &WaveField,
    f: &TestFunction,
    g: &TestFunction,
    bx: &QuadratureBox,
    n: usize,
) -> Result<AdjointQuadrature> {
    let k = field.constants();
    let (hbar, m, c) = (k.hbar, k.mass, k.c);
    let h: [f64; 4] = std::array::from_fn(|a| (bx.hi[a] - bx.lo[a]) / n as f64);
    let nodes: [Vec<f64>; 4] =
        std::array::from_fn(|a| (0..n).map(|i| bx.lo[a] + (i as f64 + 0.5) * h[a]).collect());
    let ft: [Vec<[f64; 3]>; 4] = std::array::from_fn(|a| f.axis_table(a, &nodes[a]));
    let gt: [Vec<[f64; 3]>; 4] = std::array::from_fn(|a| g.axis_table(a, &nodes[a]));
    let weight = h.iter().product::<f64>();
    let diffusion = hbar / m;

    let slab = |i0: usize| -> Result<(f64, f64)> {
        let mut lhs = 0.0;
        let mut rhs = 0.0;
        for i1 in 0..n {
            for i2 in 0..n {
                for i3 in 0..n {
                    let idx = [i0, i1, i2, i3];
                    let fa: [[f64; 3]; 4] = std::array::from_fn(|a| ft[a][idx[a]]);
                    let ga: [[f64; 3]; 4] = std::array::from_fn(|a| gt[a][idx[a]]);
                    let fv = fa.iter().map(|v| v[0]).product::<f64>();
                    let gv = ga.iter().map(|v| v[0]).product::<f64>();
                    if fv == 0.0 && gv == 0.0 {
                        continue;
                    }
                    // derivative along `a` (order `d`) of a separable product
                    let partial = |t: &[[f64; 3]; 4], a: usize, d: usize| -> f64 {
                        (0..4).map(|b| if b == a { t[b][d] } else { t[b][0] }).product()
                    };
                    let x = [nodes[0][i0], nodes[1][i1], nodes[2][i2]];
                    let t = nodes[3][i3];
                    let s = field.evaluate(&x, t)?;
                    let rho = s.modulus_sq();
                    let mut lf = 0.0;
                    let mut lg = 0.0;
                    for a in 0..4 {
                        let (drift_plus, drift_minus) = if a < 3 {
                            let cur = s.grad_s[a] / m;
                            let osm = diffusion * s.grad_r[a];
                            (cur + osm, cur - osm)
                        } else {
                            let cur = -s.grad_s[3] / (m * c * c);
                            (cur, cur)
                        };
                        lf += drift_plus * partial(&fa, a, 1);
                        lg += drift_minus * partial(&ga, a, 1);
                    }
                    let lap_f: f64 = (0..3).map(|a| partial(&fa, a, 2)).sum();
                    let lap_g: f64 = (0..3).map(|a| partial(&ga, a, 2)).sum();
                    lf += 0.5 * diffusion * lap_f;
                    lg -= 0.5 * diffusion * lap_g;
                    lhs += rho * lf * gv;
                    rhs += rho * fv * lg;
                }
            }
        }
        Ok((lhs, rhs))
    };

    #[cfg(feature = "parallel")]
    let parts: Vec<Result<(f64, f64)>> = {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(slab).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let parts: Vec<Result<(f64, f64)>> = (0..n).map(slab).collect();

    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for p in parts {
        let (l, r) = p?;
        lhs += l;
        rhs += r;
    }
    lhs *= weight;
    rhs *= weight;
    Ok(AdjointQuadrature {
        lhs,
        rhs,
        defect: (lhs + rhs).abs(),
    })
}

/// Compares `⟨Lf, g⟩_μ` with `⟨f, L₋g⟩_μ` on `μ = |φ|² dx dt`, where
///
/// ```text
/// L  = ((1/m)∇νS + Σ²∇νR)·∇ν + ½Σ²Δν
/// L₋ = ((1/m)∇νS − Σ²∇νR)·∇ν − ½Σ²Δν,     Σ² = diag(ħ/m, ħ/m, ħ/m, 0)
/// ```
///
/// `L₋` is the generator of the time-reversed motion written with backward
/// increments, so the μ-adjoint of `L` is `−L₋` and the defect is
/// `|⟨Lf, g⟩_μ + ⟨f, L₋g⟩_μ|`. Tensor-product midpoint quadrature at two
/// resolutions gives a Richardson error estimate.
pub fn generator_adjoint_check(
    field: &WaveField,
    f: &TestFunction,
    g: &TestFunction,
    bx: &QuadratureBox,
    coarse_n: usize,
    fine_n: usize,
) -> Result<AdjointReport> {
    if coarse_n == 0 || fine_n <= coarse_n {
        return Err(Error::InvalidConfig(format!(
            "need 0 < coarse ({coarse_n}) < fine ({fine_n}) resolution"
        )));
    }
    if (0..4).any(|a| !(bx.hi[a] > bx.lo[a])) {
        return Err(Error::InvalidConfig("quadrature box is degenerate".into()));
    }
    f.check_support(&bx.lo, &bx.hi)?;
    g.check_support(&bx.lo, &bx.hi)?;
    let coarse = adjoint_quadrature(field, f, g, bx, coarse_n)?;
    let fine = adjoint_quadrature(field, f, g, bx, fine_n)?;
    let ratio = (fine_n as f64 / coarse_n as f64).powi(2);
    Ok(AdjointReport {
        coarse_n,
        fine_n,
        coarse,
        fine,
        richardson_error: (fine.lhs - coarse.lhs).abs() / (ratio - 1.0),
        literal_sign_difference: (fine.lhs - fine.rhs).abs(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::{simulate_forward, InitialSampler, IntegratorConfig};
    use crate::wave::{make_plane_wave, superpose, PlaneWaveSpec};
    use approx::assert_abs_diff_eq;
    use num_complex::Complex64;
    use proptest::prelude::*;
    use std::f64::consts::SQRT_2;

    fn unit() -> PhysicalConstants {
        PhysicalConstants::default()
    }

    #[test]
    fn stopping_time_examples() {
        let dt = 1e-3;
        let t: Vec<f64> = (0..=1000).map(|k| k as f64 * dt).collect();
        let rate = 1.0 / SQRT_2;
        let mut qv = vec![0.0];
        for _ in 0..1000 {
            qv.push(qv.last().unwrap() + rate * dt);
        }
        assert_abs_diff_eq!(stopping_time(&t, &qv, 0.5).unwrap(), SQRT_2 * 0.5, epsilon = 1e-12);
        assert_eq!(stopping_time(&t, &qv, 0.0).unwrap(), 0.0);
        assert!(matches!(stopping_time(&t, &qv, 0.8), Err(Error::OutOfHorizon { .. })));

        let rest = t.clone();
        for tau in [0.0, 0.1234, 0.5, 1.0] {
            assert_abs_diff_eq!(stopping_time(&t, &rest, tau).unwrap(), tau, epsilon = 1e-12);
        }
    }

    proptest! {
        #[test]
        fn stopping_time_inverts_quadratic_variation(
            rates in proptest::collection::vec(0.05f64..1.0, 2..60),
            frac in 0.0f64..1.0,
        ) {
            let dt = 0.01;
            let t: Vec<f64> = (0..=rates.len()).map(|k| k as f64 * dt).collect();
            let mut qv = vec![0.0];
            for r in &rates {
                qv.push(qv.last().unwrap() + r * dt);
            }
            let tau = frac * qv.last().unwrap();
            let big_t = stopping_time(&t, &qv, tau).unwrap();
            prop_assert!((qv_at(&t, &qv, big_t).unwrap() - tau).abs() <= 1e-12);
            let tk = t[rates.len() / 2];
            prop_assert!((stopping_time(&t, &qv, qv_at(&t, &qv, tk).unwrap()).unwrap() - tk).abs() <= 1e-12);
            // monotone in τ
            let later = stopping_time(&t, &qv, (tau + 0.001).min(*qv.last().unwrap())).unwrap();
            prop_assert!(later >= big_t);
        }
    }

    #[test]
    fn plane_wave_time_change() {
        let field = make_plane_wave([1.0, 0.0, 0.0], unit()).unwrap();
        let dtau = 1e-3;
        let cfg = IntegratorConfig::new(dtau * SQRT_2, 400, 50, 4);
        let ens = simulate_forward(&field, &InitialSampler::PointMass([0.0; 3]), &cfg, None).unwrap();
        let tc = time_change_ensemble(&ens, &TauGrid::new(dtau, Some(0.3))).unwrap();
        assert_eq!(tc.n_tau(), 301);
        assert!(stopping_time_rate_residual(&field, &tc).unwrap() <= 1e-9);
        let (fwd, bwd) = roundtrip_errors(&ens, &tc).unwrap();
        assert!(fwd <= 2.0 * cfg.dt && bwd <= 2.0 * cfg.dt);
        for i in 0..tc.n_paths() {
            let ts = tc.t_of_tau_path(i);
            assert_eq!(ts[0], 0.0);
            assert!(ts.windows(2).all(|w| w[1] > w[0]));
        }
        let fv = four_vector_process(&tc, &unit());
        assert_abs_diff_eq!(fv[0][300].time_like, SQRT_2 * 0.3, epsilon = 1e-9);
    }

    #[test]
    fn drop_policy_reports_short_paths() {
        let field = make_plane_wave([1.0, 0.0, 0.0], unit()).unwrap();
        let ens = simulate_forward(
            &field,
            &InitialSampler::PointMass([0.0; 3]),
            &IntegratorConfig::new(0.01, 10, 3, 0),
            None,
        )
        .unwrap();
        let grid = TauGrid {
            dtau: 0.01,
            tau_max: Some(1.0),
            policy: ShortPathPolicy::Drop,
        };
        assert!(matches!(time_change_ensemble(&ens, &grid), Err(Error::EmptyEnsemble)));
        let truncated = time_change_ensemble(&ens, &TauGrid::new(0.01, Some(1.0))).unwrap();
        assert!(*truncated.tau_grid.last().unwrap() <= 0.1 / SQRT_2 + 1e-12);
        assert!(truncated.dropped.is_empty());
    }

    #[test]
    fn mass_shell_and_invariant_measure_for_plane_waves() {
        let grid = SpaceTimeGrid::cube(2.0, 4, 1.0, 4);
        for p in [[0.0; 3], [1.0, 0.0, 0.0], [1.0, 1.0, 1.0]] {
            let f = make_plane_wave(p, unit()).unwrap();
            let r = invariant_measure_checks(&f, &grid).unwrap();
            assert!(r.a11_residual_max <= 1e-12, "{r:?}");
            assert!(r.a12_residual_max <= 1e-12);
            assert!(r.covariant_continuity_residual_max <= 1e-12);
            assert!(r.minkowski_gradient_norm_error_max <= 1e-12);
        }
        let f = make_plane_wave([1.0, 0.0, 0.0], unit()).unwrap();
        let pts: Vec<_> = grid.nodes().collect();
        assert!(minkowski_gradient_identity(&f, &pts).unwrap() <= 1e-12);
    }

    #[test]
    fn superposition_satisfies_invariant_pdes_but_not_mass_shell() {
        let k = unit();
        let f = superpose(
            &[PlaneWaveSpec::new([1.0, 0.0, 0.0], k), PlaneWaveSpec::new([0.0, 1.0, 0.0], k)],
            &[Complex64::new(1.0, 0.0); 2],
        )
        .unwrap();
        let grid = SpaceTimeGrid::cube(1.0, 4, 1.0, 3);
        let r = invariant_measure_checks(&f, &grid).unwrap();
        // A11/A12 and covariant continuity follow from the (linear) KG equation
        assert!(r.a11_residual_max <= 1e-10, "{r:?}");
        assert!(r.a12_residual_max <= 1e-10);
        assert!(r.covariant_continuity_residual_max <= 1e-10);
        // ∇S = (½, ½, 0), ∂S/∂t = −√2: ½ − 2 + 1 = −½
        assert_abs_diff_eq!(r.minkowski_gradient_norm_error_max, 0.5, epsilon = 1e-10);
    }

    fn bump(center: [f64; 4], radius: f64) -> TestFunction {
        TestFunction::SeparableBump {
            center,
            radius: [radius; 4],
            amplitude: 1.0,
        }
    }

    fn unit_box() -> QuadratureBox {
        QuadratureBox {
            lo: [-1.0; 4],
            hi: [1.0; 4],
        }
    }

    #[test]
    fn bump_derivatives_match_finite_differences() {
        let h = 1e-5;
        for s in [-0.7, -0.2, 0.0, 0.35, 0.9] {
            let [_, d1, d2] = bump_1d(s);
            let fd1 = (bump_1d(s + h)[0] - bump_1d(s - h)[0]) / (2.0 * h);
            let fd2 = (bump_1d(s + h)[1] - bump_1d(s - h)[1]) / (2.0 * h);
            assert_abs_diff_eq!(d1, fd1, epsilon = 1e-7);
            assert_abs_diff_eq!(d2, fd2, epsilon = 1e-6);
        }
    }

    #[test]
    fn adjoint_defect_small_for_plane_wave() {
        let f = make_plane_wave([1.0, 0.0, 0.0], unit()).unwrap();
        let a = bump([0.0; 4], 1.0);
        let r = generator_adjoint_check(&f, &a, &a, &unit_box(), 32, 64).unwrap();
        assert!(r.defect() <= 1e-6, "{r:?}");
        // the literal sign comparison is off by 2⟨Lf, f⟩_μ, which is nonzero
        assert!(r.literal_sign_difference > 1e-3);
    }

    #[test]
    fn adjoint_with_zero_function_and_swap() {
        let f = make_plane_wave([0.5, -0.3, 0.2], unit()).unwrap();
        let a = bump([0.0; 4], 1.0);
        let b = bump([0.2, -0.1, 0.0, 0.1], 0.8);
        let zero = generator_adjoint_check(&f, &TestFunction::Zero, &a, &unit_box(), 8, 16).unwrap();
        assert_eq!(zero.fine.lhs, 0.0);
        assert_eq!(zero.fine.rhs, 0.0);
        let ab = generator_adjoint_check(&f, &a, &b, &unit_box(), 32, 64).unwrap();
        let ba = generator_adjoint_check(&f, &b, &a, &unit_box(), 32, 64).unwrap();
        assert!(ab.defect() <= 1e-6 && ba.defect() <= 1e-6);
        assert_abs_diff_eq!(ab.defect(), ba.defect(), epsilon = 1e-6);
    }

    #[test]
    fn adjoint_defect_small_for_superposition() {
        // nodes of this pair lie on x − y = ±π, outside the box
        let k = unit();
        let f = superpose(
            &[PlaneWaveSpec::new([1.0, 0.0, 0.0], k), PlaneWaveSpec::new([0.0, 1.0, 0.0], k)],
            &[Complex64::new(1.0, 0.0); 2],
        )
        .unwrap();
        let a = bump([0.0; 4], 1.0);
        let b = bump([0.1, 0.0, -0.1, 0.0], 0.9);
        let r = generator_adjoint_check(&f, &a, &b, &unit_box(), 32, 64).unwrap();
        assert!(r.defect() <= 1e-6, "{r:?}");
    }

    #[test]
    fn support_violation_is_reported() {
        let f = make_plane_wave([0.0; 3], unit()).unwrap();
        let wide = bump([0.5, 0.0, 0.0, 0.0], 1.0);
        assert!(matches!(
            generator_adjoint_check(&f, &wide, &wide, &unit_box(), 8, 16),
            Err(Error::SupportViolation(_))
        ));
    }
}
