//! Browser bindings: three operations backing `www/index.html`.
//!
//! Results cross the boundary as flat `Float64Array`s; each function
//! documents its layout.

use propertime::fokker_planck::{evolve_fp, wrapped_gaussian, Coefficients1D, DensityField, Grid1D};
use propertime::kinematics::local_coefficients;
use propertime::sde::{simulate_forward, InitialSampler, IntegratorConfig, PeriodicBox};
use propertime::stats::{bin_masses, knight_independence, wiener_check, MIN_SAMPLES};
use propertime::time_change::{time_change_ensemble, TauGrid};
use propertime::wave::{make_plane_wave, PhysicalConstants};
use propertime::WaveField;
use wasm_bindgen::prelude::*;

/// Upper limit on stored samples, to keep the page responsive.
const MAX_POINTS: usize = 2_000_000;

fn plane(px: f64, py: f64, pz: f64) -> Result<WaveField, String> {
    make_plane_wave([px, py, pz], PhysicalConstants::default()).map_err(|e| e.to_string())
}

fn budget(n_paths: usize, n_points: usize) -> Result<(), String> {
    if n_paths.saturating_mul(n_points) > MAX_POINTS {
        Err(format!("{n_paths} paths × {n_points} points exceeds the demo limit of {MAX_POINTS}"))
    } else {
        Ok(())
    }
}

/// Layout: `[n_points, rate, then per path and point: t, x1, x2, qv]`.
pub fn simulate_paths_inner(
    px: f64,
    py: f64,
    pz: f64,
    n_paths: usize,
    n_steps: usize,
    dt: f64,
    seed: u64,
) -> Result<Vec<f64>, String> {
    budget(n_paths, n_steps + 1)?;
    let field = plane(px, py, pz)?;
    let rate = local_coefficients(&field, &[0.0; 3], 0.0).map_err(|e| e.to_string())?.rate;
    let cfg = IntegratorConfig::new(dt, n_steps, n_paths, seed);
    let ens = simulate_forward(&field, &InitialSampler::PointMass([0.0; 3]), &cfg, None)
        .map_err(|e| e.to_string())?;
    let mut out = Vec::with_capacity(2 + 4 * ens.states.len());
    out.push(ens.n_points() as f64);
    out.push(rate);
    for p in ens.paths() {
        for k in 0..ens.n_points() {
            out.extend([p.t[k], p.states[k][0], p.states[k][1], p.qv[k]]);
        }
    }
    Ok(out)
}

/// Layout: `[n_tau, wiener_ratio, knight_ratio, then per path and τ-step:
/// τ, X̃¹, T]`. The ratios are the worst gate statistic over components or
/// pairs (≤ 1 passes) and are NaN when there are too few increments.
pub fn time_change_inner(
    px: f64,
    py: f64,
    pz: f64,
    n_paths: usize,
    dtau: f64,
    tau_max: f64,
    seed: u64,
) -> Result<Vec<f64>, String> {
    let field = plane(px, py, pz)?;
    let rate = local_coefficients(&field, &[0.0; 3], 0.0).map_err(|e| e.to_string())?.rate;
    // align the simulation grid with the τ-grid
    let dt = dtau / rate;
    let n_steps = (tau_max / dtau).ceil() as usize + 1;
    budget(n_paths, n_steps + 1)?;
    let cfg = IntegratorConfig::new(dt, n_steps, n_paths, seed);
    let ens = simulate_forward(&field, &InitialSampler::PointMass([0.0; 3]), &cfg, None)
        .map_err(|e| e.to_string())?;
    let tc = time_change_ensemble(&ens, &TauGrid::new(dtau, Some(tau_max))).map_err(|e| e.to_string())?;

    let enough = tc.w_tilde_increments.len() >= MIN_SAMPLES;
    let mut wiener = f64::NAN;
    let mut knight = f64::NAN;
    if enough {
        wiener = 0.0;
        knight = 0.0;
        for i in 0..3 {
            let inc = tc.component_increments(i).map_err(|e| e.to_string())?;
            wiener = f64::max(wiener, wiener_check(&inc, dtau).map_err(|e| e.to_string())?.statistic);
        }
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            knight = f64::max(knight, knight_independence(&tc, i, j).map_err(|e| e.to_string())?.statistic);
        }
    }
    let mut out = vec![tc.n_tau() as f64, wiener, knight];
    for i in 0..tc.n_paths() {
        for ((tau, x), t) in tc.tau_grid.iter().zip(tc.x_tilde_path(i)).zip(tc.t_of_tau_path(i)) {
            out.extend([*tau, x[0], *t]);
        }
    }
    Ok(out)
}

/// Wrapped-Gaussian experiment on `[0, 2π)`. Layout: `[bins, l1_sde,
/// l1_fp, histogram…, analytic…, fp…]`, each block holding `bins`
/// densities at the bin centres.
pub fn density_inner(px: f64, n_paths: usize, t: f64, bins: usize, seed: u64) -> Result<Vec<f64>, String> {
    if bins == 0 || 512 % bins != 0 {
        return Err("bins must divide 512".into());
    }
    budget(n_paths, 2)?;
    let side = 2.0 * std::f64::consts::PI;
    let (center, var0) = (side / 2.0, 0.05);
    let field = plane(px, 0.0, 0.0)?;
    let co = local_coefficients(&field, &[0.0; 3], 0.0).map_err(|e| e.to_string())?;
    let (b, s2) = (co.b_plus[0], co.sigma2);
    let exact = |x: f64| wrapped_gaussian(x, center + b * t, var0 + s2 * t, side);

    let n_steps = (t / 1e-3).ceil().max(1.0) as usize;
    let cfg = IntegratorConfig::new(t / n_steps as f64, n_steps, n_paths, seed).with_stride(n_steps);
    let init = InitialSampler::Density {
        density: std::sync::Arc::new(move |x: &[f64; 3]| wrapped_gaussian(x[0], center, var0, side)),
        bound: 1.01 * wrapped_gaussian(center, center, var0, side),
    };
    let ens = simulate_forward(&field, &init, &cfg, Some(PeriodicBox::new(side).map_err(|e| e.to_string())?))
        .map_err(|e| e.to_string())?;
    let width = side / bins as f64;
    let mut hist = vec![0.0; bins];
    for i in 0..ens.n_paths() {
        let x = ens.wrapped_state(i, 1)[0];
        hist[((x / width) as usize).min(bins - 1)] += 1.0 / (ens.n_paths() as f64 * width);
    }
    let analytic: Vec<f64> = bin_masses(exact, side, bins, 16).iter().map(|m| m / width).collect();

    let cells = 512;
    let h = side / cells as f64;
    let grid = Grid1D::new(side, cells, 0.39 * h * h / s2.max(1e-12)).map_err(|e| e.to_string())?;
    let rho0 = DensityField::from_fn(side, cells, |x| wrapped_gaussian(x, center, var0, side))
        .map_err(|e| e.to_string())?;
    let coeffs = Coefficients1D::FromField { field, transverse: [0.0, 0.0] };
    let fp = evolve_fp(&coeffs, &rho0, &grid, t).map_err(|e| e.to_string())?;
    let fp_bins: Vec<f64> = fp.last().coarsen(bins).map_err(|e| e.to_string())?.iter().map(|m| m / width).collect();

    let l1 = |a: &[f64]| a.iter().zip(&analytic).map(|(x, y)| (x - y).abs() * width).sum::<f64>();
    let mut out = vec![bins as f64, l1(&hist), l1(&fp_bins)];
    out.extend(hist);
    out.extend(&analytic);
    out.extend(fp_bins);
    Ok(out)
}

#[wasm_bindgen]
pub fn simulate_paths(px: f64, py: f64, pz: f64, n_paths: usize, n_steps: usize, dt: f64, seed: u32) -> Result<Vec<f64>, JsError> {
    simulate_paths_inner(px, py, pz, n_paths, n_steps, dt, seed.into()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn time_change(px: f64, py: f64, pz: f64, n_paths: usize, dtau: f64, tau_max: f64, seed: u32) -> Result<Vec<f64>, JsError> {
    time_change_inner(px, py, pz, n_paths, dtau, tau_max, seed.into()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn density(px: f64, n_paths: usize, t: f64, bins: usize, seed: u32) -> Result<Vec<f64>, JsError> {
    density_inner(px, n_paths, t, bins, seed.into()).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paths_layout_and_rate() {
        let out = simulate_paths_inner(1.0, 0.0, 0.0, 3, 10, 0.01, 1).unwrap();
        assert_eq!(out[0], 11.0);
        assert!((out[1] - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(out.len(), 2 + 3 * 11 * 4);
        // last qv of the first path
        let qv = out[2 + 10 * 4 + 3];
        assert!((qv - 0.1 * 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn time_change_passes_gates() {
        let out = time_change_inner(1.0, 0.0, 0.0, 100, 1e-3, 0.2, 3).unwrap();
        assert_eq!(out[0], 201.0);
        assert!(out[1] <= 1.0 && out[2] <= 1.0, "{} {}", out[1], out[2]);
        // T advances by √2 Δτ
        assert!((out[3 + 3 + 2] - 2f64.sqrt() * 1e-3).abs() < 1e-12);
        let small = time_change_inner(1.0, 0.0, 0.0, 2, 1e-3, 0.1, 3).unwrap();
        assert!(small[1].is_nan());
    }

    #[test]
    fn density_blocks_agree() {
        let out = density_inner(1.0, 5000, 0.5, 32, 4).unwrap();
        assert_eq!(out[0], 32.0);
        assert!(out[1] < 5.0 * (32.0f64 / 5000.0).sqrt(), "{}", out[1]);
        assert!(out[2] < 1e-3);
        assert_eq!(out.len(), 3 + 3 * 32);
        assert!(density_inner(1.0, 10, 0.5, 7, 4).is_err());
    }

    #[test]
    fn oversized_requests_are_refused() {
        assert!(simulate_paths_inner(0.0, 0.0, 0.0, 100_000, 1000, 1e-3, 0).is_err());
    }
}
