//! One-dimensional periodic Fokker–Planck solver used to cross-check the
//! SDE histograms, plus the pointwise continuity residual of `(ρ, j)`.
//!
//! The update is in conservative flux form,
//! `ρᵢ ← ρᵢ − (dt/h)(F_{i+½} − F_{i−½})`, with a Lax–Wendroff advective
//! flux and a central diffusive flux for `½∂ₓ(σ²ρ)`. Telescoping fluxes make
//! discrete mass conservation exact up to rounding.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::local_coefficients;
use crate::wave::{SpaceTimeGrid, WaveField};

/// Diffusive stability factor: `dt ≤ 0.4 h² / max σ²`.
pub const DIFFUSIVE_CFL: f64 = 0.4;

/// Values below this count as genuine negativity rather than rounding.
pub const NEGATIVITY_TOLERANCE: f64 = -1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub length: f64,
    pub n_cells: usize,
    pub dt_pde: f64,
}

impl Grid1D {
    pub fn new(length: f64, n_cells: usize, dt_pde: f64) -> Result<Self> {
        let g = Self { length, n_cells, dt_pde };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length > 0.0 && self.length.is_finite()) || self.n_cells < 3 || !(self.dt_pde > 0.0) {
            return Err(Error::InvalidConfig(format!("bad 1D grid {self:?}")));
        }
        Ok(())
    }

    pub fn h(&self) -> f64 {
        self.length / self.n_cells as f64
    }

    pub fn center(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.h()
    }

    /// Largest step that satisfies both stability limits for the given bounds.
    pub fn stable_dt(&self, max_sigma2: f64, max_speed: f64) -> f64 {
        let h = self.h();
        let diff = if max_sigma2 > 0.0 { DIFFUSIVE_CFL * h * h / max_sigma2 } else { f64::INFINITY };
        let adv = if max_speed > 0.0 { h / max_speed } else { f64::INFINITY };
        diff.min(adv)
    }
}

/// Cell-centred density on `[0, length)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityField {
    pub length: f64,
    pub values: Vec<f64>,
}

impl DensityField {
    pub fn new(length: f64, values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::InvalidConfig("density values must be finite and nonnegative".into()));
        }
        if values.is_empty() || !(length > 0.0) {
            return Err(Error::InvalidConfig("empty density".into()));
        }
        Ok(Self { length, values })
    }

    /// Samples `f` at cell centres.
    pub fn from_fn(length: f64, n_cells: usize, f: impl Fn(f64) -> f64) -> Result<Self> {
        let h = length / n_cells as f64;
        Self::new(length, (0..n_cells).map(|i| f((i as f64 + 0.5) * h)).collect())
    }

    pub fn h(&self) -> f64 {
        self.length / self.values.len() as f64
    }

    pub fn centers(&self) -> impl Iterator<Item = f64> + '_ {
        let h = self.h();
        (0..self.values.len()).map(move |i| (i as f64 + 0.5) * h)
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.h()
    }

    /// `∫|ρ − f| dx` by the midpoint rule on this grid.
    pub fn l1_to(&self, f: impl Fn(f64) -> f64) -> f64 {
        let h = self.h();
        self.centers().zip(&self.values).map(|(x, v)| (v - f(x)).abs() * h).sum()
    }

    /// Integral over `bins` equal sub-intervals (cell count must be a multiple).
    pub fn coarsen(&self, bins: usize) -> Result<Vec<f64>> {
        let n = self.values.len();
        if bins == 0 || n % bins != 0 {
            return Err(Error::InvalidConfig(format!("{n} cells do not split into {bins} bins")));
        }
        let per = n / bins;
        let h = self.h();
        Ok(self.values.chunks(per).map(|c| c.iter().sum::<f64>() * h).collect())
    }
}

/// Drift and diffusion along the first axis.
#[derive(Debug, Clone)]
pub enum Coefficients1D {
    /// `b₊¹` and `σ²` of a wave field on the line `(x, y, z)` with `(y, z)` fixed.
    FromField { field: WaveField, transverse: [f64; 2] },
    Constant { b: f64, sigma2: f64 },
}

impl Coefficients1D {
    fn at(&self, x: f64, t: f64) -> Result<(f64, f64)> {
        match self {
            Self::Constant { b, sigma2 } => Ok((*b, *sigma2)),
            Self::FromField { field, transverse } => {
                let c = local_coefficients(field, &[x, transverse[0], transverse[1]], t)?;
                Ok((c.b_plus[0], c.sigma2))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpSnapshot {
    pub t: f64,
    pub density: DensityField,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpOutcome {
    pub snapshots: Vec<FpSnapshot>,
    pub steps: usize,
    /// Largest `|mass(t) − mass(0)| / mass(0)` seen over the run.
    pub mass_drift: f64,
    /// Most negative cell value, if any fell below the tolerance.
    pub negativity: Option<f64>,
}

impl FpOutcome {
    pub fn last(&self) -> &DensityField {
        &self.snapshots.last().expect("at least one snapshot").density
    }
}

struct Stepper<'a> {
    coeffs: &'a Coefficients1D,
    grid: Grid1D,
    b_face: Vec<f64>,
    s_cell: Vec<f64>,
    flux: Vec<f64>,
}

impl Stepper<'_> {
    fn step(&mut self, rho: &mut [f64], t: f64, dt: f64) -> Result<()> {
        let n = rho.len();
        let h = self.grid.h();
        for i in 0..n {
            let x = self.grid.center(i);
            self.s_cell[i] = self.coeffs.at(x, t)?.1;
            self.b_face[i] = self.coeffs.at(x + 0.5 * h, t)?.0;
        }
        let max_s = self.s_cell.iter().fold(0.0f64, |a, b| a.max(*b));
        let max_b = self.b_face.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        if max_s > 0.0 && dt > DIFFUSIVE_CFL * h * h / max_s * (1.0 + 1e-12) {
            return Err(Error::Cfl(format!(
                "dt = {dt} exceeds {DIFFUSIVE_CFL}·h²/σ² = {}",
                DIFFUSIVE_CFL * h * h / max_s
            )));
        }
        if max_b * dt > h * (1.0 + 1e-12) {
            return Err(Error::Cfl(format!("Courant number {} exceeds 1", max_b * dt / h)));
        }
        // flux[i] sits on the face between cells i and i+1
        for i in 0..n {
            let j = (i + 1) % n;
            let b = self.b_face[i];
            let adv = b * 0.5 * (rho[i] + rho[j]) - 0.5 * dt / h * b * b * (rho[j] - rho[i]);
            let diff = -0.5 * (self.s_cell[j] * rho[j] - self.s_cell[i] * rho[i]) / h;
            self.flux[i] = adv + diff;
        }
        let r = dt / h;
        for i in 0..n {
            let left = self.flux[(i + n - 1) % n];
            rho[i] -= r * (self.flux[i] - left);
        }
        if rho.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { path: 0, step: 0 });
        }
        Ok(())
    }
}

/// Evolves `init` from `t = 0`, recording the density at each requested time
/// (sorted ascending). Steps are shortened so each snapshot lands exactly.
pub fn evolve_fp_snapshots(
    coeffs: &Coefficients1D,
    init: &DensityField,
    grid: &Grid1D,
    times: &[f64],
) -> Result<FpOutcome> {
    grid.validate()?;
    if init.values.len() != grid.n_cells || (init.length - grid.length).abs() > 1e-12 * grid.length {
        return Err(Error::InvalidConfig("initial density does not match the grid".into()));
    }
    if times.is_empty() || times.iter().any(|t| !(*t >= 0.0)) || times.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidConfig("snapshot times must be nonnegative and sorted".into()));
    }
    let n = grid.n_cells;
    let mut stepper = Stepper {
        coeffs,
        grid: *grid,
        b_face: vec![0.0; n],
        s_cell: vec![0.0; n],
        flux: vec![0.0; n],
    };
    let mut rho = init.values.clone();
    let mass0 = init.mass();
    let mut t = 0.0;
    let mut steps = 0;
    let mut mass_drift = 0.0f64;
    let mut min_value = f64::INFINITY;
    let mut snapshots = Vec::with_capacity(times.len());
    for &target in times {
        let remaining = target - t;
        if remaining > 0.0 {
            let k = (remaining / grid.dt_pde).ceil().max(1.0) as usize;
            let dt = remaining / k as f64;
            for s in 0..k {
                stepper.step(&mut rho, t + s as f64 * dt, dt)?;
                steps += 1;
                let mass = rho.iter().sum::<f64>() * grid.h();
                mass_drift = mass_drift.max((mass - mass0).abs() / mass0);
                min_value = rho.iter().fold(min_value, |a, b| a.min(*b));
            }
            t = target;
        }
        snapshots.push(FpSnapshot {
            t,
            density: DensityField {
                length: grid.length,
                values: rho.clone(),
            },
        });
    }
    Ok(FpOutcome {
        snapshots,
        steps,
        mass_drift,
        negativity: (min_value < NEGATIVITY_TOLERANCE).then_some(min_value),
    })
}

pub fn evolve_fp(coeffs: &Coefficients1D, init: &DensityField, grid: &Grid1D, t_final: f64) -> Result<FpOutcome> {
    evolve_fp_snapshots(coeffs, init, grid, &[t_final])
}

/// Normal density with the given mean and variance, wrapped onto `[0, length)`.
pub fn wrapped_gaussian(x: f64, mean: f64, var: f64, length: f64) -> f64 {
    let sd = var.sqrt();
    let reach = (10.0 * sd / length).ceil() as i64 + 1;
    let norm = 1.0 / (2.0 * std::f64::consts::PI * var).sqrt();
    (-reach..=reach)
        .map(|k| {
            let d = x + k as f64 * length - mean;
            norm * (-0.5 * d * d / var).exp()
        })
        .sum()
}

/// `sup |∂ρ/∂t + ∇·j|` over the grid, using analytic field derivatives.
/// `current_scale` multiplies `j` (1 for the physical current; anything
/// else is a deliberately corrupted current for power checks).
pub fn continuity_residual(field: &WaveField, grid: &SpaceTimeGrid, current_scale: f64) -> Result<f64> {
    let k = field.constants();
    let c2 = k.c * k.c;
    let mut worst = 0.0f64;
    for (x, t) in grid.nodes() {
        let s = field.evaluate(&x, t)?;
        // ρ = e^{2R}(−S_t)/(mc²),  j = e^{2R}∇S/m
        let drho_dt = s.modulus_sq() * (-2.0 * s.grad_r[3] * s.grad_s[3] - s.hess_s[3][3]) / (k.mass * c2);
        let grad_r = s.spatial_grad_r();
        let grad_s = s.spatial_grad_s();
        let div_j = current_scale
            * s.modulus_sq()
            * (2.0 * crate::vec3::dot(&grad_r, &grad_s) + s.laplacian_s())
            / k.mass;
        worst = worst.max((drho_dt + div_j).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wave::{make_plane_wave, superpose, PhysicalConstants, PlaneWaveSpec};
    use num_complex::Complex64;
    use std::f64::consts::{FRAC_1_SQRT_2, PI};

    const L: f64 = 2.0 * PI;

    fn plane_coeffs() -> Coefficients1D {
        Coefficients1D::FromField {
            field: make_plane_wave([1.0, 0.0, 0.0], PhysicalConstants::default()).unwrap(),
            transverse: [0.0, 0.0],
        }
    }

    #[test]
    fn wrapped_gaussian_is_normalized() {
        for var in [0.01, 0.5, 10.0] {
            let mass: f64 = (0..4000).map(|i| wrapped_gaussian((i as f64 + 0.5) * L / 4000.0, 1.0, var, L)).sum::<f64>()
                * L
                / 4000.0;
            assert!((mass - 1.0).abs() < 1e-10, "{var}: {mass}");
        }
    }

    #[test]
    fn uniform_stays_uniform() {
        let grid = Grid1D::new(L, 128, 1e-3).unwrap();
        let init = DensityField::from_fn(L, 128, |_| 1.0 / L).unwrap();
        let out = evolve_fp(&plane_coeffs(), &init, &grid, 0.5).unwrap();
        for v in &out.last().values {
            assert!((v - 1.0 / L).abs() < 1e-13);
        }
        assert!(out.negativity.is_none());
    }

    #[test]
    fn advected_diffused_gaussian_matches_closed_form() {
        let (mu, s0) = (PI, 0.05);
        let exact = |x: f64| wrapped_gaussian(x, mu + FRAC_1_SQRT_2 * 0.5, s0 + FRAC_1_SQRT_2 * 0.5, L);
        let mut errors = Vec::new();
        for n in [128, 256, 512] {
            let h = L / n as f64;
            let grid = Grid1D::new(L, n, 0.4 * h * h / FRAC_1_SQRT_2).unwrap();
            let init = DensityField::from_fn(L, n, |x| wrapped_gaussian(x, mu, s0, L)).unwrap();
            let out = evolve_fp(&plane_coeffs(), &init, &grid, 0.5).unwrap();
            assert!(out.mass_drift <= 1e-10, "{}", out.mass_drift);
            errors.push(out.last().l1_to(exact));
        }
        assert!(errors[2] <= 1e-3, "{errors:?}");
        assert!(errors[0] / errors[1] >= 1.8 && errors[1] / errors[2] >= 1.8, "{errors:?}");
    }

    #[test]
    fn pure_advection_converges() {
        let b = FRAC_1_SQRT_2;
        let coeffs = Coefficients1D::Constant { b, sigma2: 0.0 };
        let init_fn = |x: f64| wrapped_gaussian(x, PI, 0.3, L);
        let mut errors = Vec::new();
        for n in [64, 128, 256] {
            let h = L / n as f64;
            let grid = Grid1D::new(L, n, 0.5 * h / b).unwrap();
            let init = DensityField::from_fn(L, n, init_fn).unwrap();
            let out = evolve_fp(&coeffs, &init, &grid, 1.0).unwrap();
            errors.push(out.last().l1_to(|x| wrapped_gaussian(x, PI + b, 0.3, L)));
        }
        assert!(errors[0] / errors[1] >= 1.8 && errors[1] / errors[2] >= 1.8, "{errors:?}");
    }

    #[test]
    fn cfl_violation_and_bad_input() {
        let grid = Grid1D::new(L, 64, 0.1).unwrap();
        let init = DensityField::from_fn(L, 64, |_| 1.0).unwrap();
        assert!(matches!(evolve_fp(&plane_coeffs(), &init, &grid, 0.5), Err(Error::Cfl(_))));
        assert!(DensityField::new(L, vec![1.0, -0.5]).is_err());
        let g = Grid1D::new(L, 32, 1e-3).unwrap();
        assert!(evolve_fp(&plane_coeffs(), &init, &g, 0.1).is_err());
    }

    #[test]
    fn snapshots_land_on_requested_times() {
        let grid = Grid1D::new(L, 64, 1e-3).unwrap();
        let init = DensityField::from_fn(L, 64, |x| wrapped_gaussian(x, 1.0, 0.2, L)).unwrap();
        let out = evolve_fp_snapshots(&plane_coeffs(), &init, &grid, &[0.0, 0.05, 0.1]).unwrap();
        let ts: Vec<f64> = out.snapshots.iter().map(|s| s.t).collect();
        assert_eq!(ts, vec![0.0, 0.05, 0.1]);
        assert_eq!(out.snapshots[0].density, init);
        let coarse = out.last().coarsen(8).unwrap();
        assert!((coarse.iter().sum::<f64>() - init.mass()).abs() < 1e-12);
    }

    #[test]
    fn continuity_holds_for_fields_and_fails_when_corrupted() {
        let k = PhysicalConstants::default();
        let grid = SpaceTimeGrid::cube(1.0, 5, 1.0, 3);
        let plane = make_plane_wave([1.0, 0.0, 0.0], k).unwrap();
        assert_eq!(continuity_residual(&plane, &grid, 1.0).unwrap(), 0.0);
        let pair = superpose(
            &[PlaneWaveSpec::new([1.0, 0.0, 0.0], k), PlaneWaveSpec::new([0.0, 2.0, 0.0], k)],
            &[Complex64::new(1.0, 0.0), Complex64::new(0.5, 0.0)],
        )
        .unwrap();
        assert!(continuity_residual(&pair, &grid, 1.0).unwrap() <= 1e-8);
        assert!(continuity_residual(&pair, &grid, 1.01).unwrap() > 1e-4);
    }
}
