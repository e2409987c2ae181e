//! Statistical checks of the martingale, independence, density and
//! proper-time claims, each with a threshold taken from the null
//! distribution of its statistic (3σ gates, or `C = 5` for histogram L1).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::local_coefficients;
use crate::sde::{simulate_forward, InitialSampler, IntegratorConfig, PathEnsemble, SpatialBins};
use crate::time_change::TimeChangedEnsemble;
use crate::vec3;
use crate::wave::WaveField;

/// Minimum pooled sample size for the moment-based checks.
pub const MIN_SAMPLES: usize = 10_000;

/// Histogram L1 constant: `L1 ≤ C √(bins / N)`.
pub const HISTOGRAM_C: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub label: String,
    pub value: f64,
    pub threshold: f64,
    pub passed: bool,
}

impl Check {
    pub fn new(label: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            label: label.into(),
            value,
            threshold,
            passed: value <= threshold,
        }
    }
}

/// Outcome of one check. `passed ⇔ statistic ≤ threshold`; multi-part tests
/// report the worst `value / threshold` ratio against a threshold of 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub name: String,
    pub statistic: f64,
    pub threshold: f64,
    pub passed: bool,
    pub n_samples: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub checks: Vec<Check>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl TestReport {
    pub fn single(name: impl Into<String>, statistic: f64, threshold: f64, n_samples: usize) -> Self {
        Self {
            name: name.into(),
            statistic,
            threshold,
            passed: statistic <= threshold,
            n_samples,
            checks: Vec::new(),
            note: None,
        }
    }

    pub fn from_checks(name: impl Into<String>, checks: Vec<Check>, n_samples: usize) -> Self {
        let worst = checks
            .iter()
            .map(|c| {
                if c.threshold > 0.0 {
                    c.value / c.threshold
                } else if c.value <= 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            })
            .fold(0.0f64, |a, b| if b.is_nan() { f64::INFINITY } else { a.max(b) });
        Self {
            name: name.into(),
            statistic: worst,
            threshold: 1.0,
            passed: checks.iter().all(|c| c.passed),
            n_samples,
            checks,
            note: None,
        }
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }
}

fn moments(v: &[f64]) -> (f64, f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let (m2, m4) = v.iter().fold((0.0, 0.0), |(a, b), x| {
        let d = (x - mean) * (x - mean);
        (a + d, b + d * d)
    });
    let var = m2 / n;
    let kurt = if var > 0.0 { m4 / n / (var * var) - 3.0 } else { f64::NAN };
    (mean, var, kurt)
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return f64::NAN;
    }
    sab / (saa * sbb).sqrt()
}

fn require(n: usize) -> Result<()> {
    if n < MIN_SAMPLES {
        Err(Error::InsufficientSamples {
            needed: MIN_SAMPLES,
            got: n,
        })
    } else {
        Ok(())
    }
}

/// Increments `Δw` over steps of length `dtau` should be i.i.d. `N(0, dtau)`:
/// the standardized sample passes 3σ gates on mean, variance and excess kurtosis.
pub fn wiener_check(increments: &[f64], dtau: f64) -> Result<TestReport> {
    require(increments.len())?;
    if !(dtau > 0.0) {
        return Err(Error::InvalidConfig(format!("dtau must be positive, got {dtau}")));
    }
    let scale = dtau.sqrt();
    let z: Vec<f64> = increments.iter().map(|w| w / scale).collect();
    let n = z.len() as f64;
    let (mean, var, kurt) = moments(&z);
    let checks = vec![
        Check::new("|mean|", mean.abs(), 3.0 / n.sqrt()),
        Check::new("|var - 1|", (var - 1.0).abs(), 3.0 * (2.0 / n).sqrt()),
        Check::new("|excess kurtosis|", kurt.abs(), 3.0 * (24.0 / n).sqrt()),
    ];
    // NaN values never satisfy `<=`, so degenerate input fails
    Ok(TestReport::from_checks("wiener", checks, z.len()))
}

/// Uncorrelated raw and squared increments of two `W̃` components.
pub fn knight_independence_samples(a: &[f64], b: &[f64]) -> Result<TestReport> {
    if a.len() != b.len() {
        return Err(Error::InvalidConfig("paired samples differ in length".into()));
    }
    require(a.len())?;
    let gate = 3.0 / (a.len() as f64).sqrt();
    let a2: Vec<f64> = a.iter().map(|x| x * x).collect();
    let b2: Vec<f64> = b.iter().map(|x| x * x).collect();
    let checks = vec![
        Check::new("|corr(dw_i, dw_j)|", pearson(a, b).abs(), gate),
        Check::new("|corr(dw_i^2, dw_j^2)|", pearson(&a2, &b2).abs(), gate),
    ];
    Ok(TestReport::from_checks("knight", checks, a.len()))
}

pub fn knight_independence(tc: &TimeChangedEnsemble, i: usize, j: usize) -> Result<TestReport> {
    if i == j {
        return Err(Error::SameComponent(i));
    }
    let a = tc.component_increments(i)?;
    let b = tc.component_increments(j)?;
    let mut r = knight_independence_samples(&a, &b)?;
    r.name = format!("knight_{}{}", i + 1, j + 1);
    Ok(r)
}

/// Integrates `density` over `bins` equal cells of `[0, side)` with `sub`
/// midpoints per cell. The result need not be normalized.
pub fn bin_masses(density: impl Fn(f64) -> f64, side: f64, bins: usize, sub: usize) -> Vec<f64> {
    let h = side / (bins * sub) as f64;
    (0..bins)
        .map(|b| {
            (0..sub)
                .map(|s| density(((b * sub + s) as f64 + 0.5) * h) * h)
                .sum()
        })
        .collect()
}

/// Marginal of `ρ(·, t)` along `axis` on the periodic box, as bin masses.
pub fn field_bin_masses(
    field: &WaveField,
    side: f64,
    axis: usize,
    t: f64,
    bins: usize,
    transverse: usize,
) -> Result<Vec<f64>> {
    if axis > 2 {
        return Err(Error::ComponentOutOfRange(axis));
    }
    let sub = 4;
    let h = side / (bins * sub) as f64;
    let ht = side / transverse as f64;
    let mut out = vec![0.0; bins];
    for (b, mass) in out.iter_mut().enumerate() {
        for s in 0..sub {
            let along = ((b * sub + s) as f64 + 0.5) * h;
            for i in 0..transverse {
                for j in 0..transverse {
                    let mut x = [0.0; 3];
                    let others: Vec<usize> = (0..3).filter(|&a| a != axis).collect();
                    x[axis] = along;
                    x[others[0]] = (i as f64 + 0.5) * ht;
                    x[others[1]] = (j as f64 + 0.5) * ht;
                    let (rho, _) = crate::wave::rho_and_current(field, &x, t)?;
                    *mass += rho * h * ht * ht;
                }
            }
        }
    }
    Ok(out)
}

/// L1 distance between the normalized histogram of `samples` (coordinates
/// in `[0, side)`) and normalized target bin masses.
pub fn density_compare(samples: &[f64], side: f64, target_masses: &[f64]) -> Result<TestReport> {
    if samples.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let bins = target_masses.len();
    if bins == 0 {
        return Err(Error::InvalidConfig("need at least one bin".into()));
    }
    let total: f64 = target_masses.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidConfig("target density has no mass".into()));
    }
    let mut counts = vec![0usize; bins];
    for &x in samples {
        let b = ((x / side) * bins as f64).floor();
        if b >= 0.0 && (b as usize) < bins {
            counts[b as usize] += 1;
        }
    }
    let n = samples.len() as f64;
    let l1: f64 = counts
        .iter()
        .zip(target_masses)
        .map(|(&c, &m)| (c as f64 / n - m / total).abs())
        .sum();
    let threshold = HISTOGRAM_C * (bins as f64 / n).sqrt();
    Ok(TestReport::single("density", l1, threshold, samples.len()))
}

/// Histogram of the wrapped coordinate `axis` of every path at grid index `k`.
pub fn density_compare_ensemble(
    ens: &PathEnsemble,
    k: usize,
    axis: usize,
    target_masses: &[f64],
) -> Result<TestReport> {
    let side = ens
        .domain
        .ok_or_else(|| Error::InvalidConfig("density comparison needs a periodic box".into()))?
        .side;
    if axis > 2 {
        return Err(Error::ComponentOutOfRange(axis));
    }
    let samples: Vec<f64> = (0..ens.n_paths()).map(|p| ens.wrapped_state(p, k)[axis]).collect();
    density_compare(&samples, side, target_masses)
}

/// Compares `[Δ<M>]²` with `(1 − v̂·v̂/c²)(dt)²` in every occupied bin, where
/// `v̂` is the binned symmetric-increment velocity. The ensemble must be
/// distributed according to `ρ` for `v̂` to estimate the current drift.
pub fn pt3_check(ens: &PathEnsemble, k: usize, bins: &SpatialBins) -> Result<TestReport> {
    let est = crate::sde::conditional_symmetric_increment(ens, k, bins)?;
    let dt = ens.t_grid[k + 1] - ens.t_grid[k];
    let c2 = ens.constants.c * ens.constants.c;
    let mut dqv_sum = vec![0.0; bins.n];
    let mut dqv_count = vec![0usize; bins.n];
    for i in 0..ens.n_paths() {
        let here = ens.wrapped_state(i, k);
        if let Some(b) = bins.index(here[bins.axis]) {
            let qv = ens.path(i).qv;
            dqv_sum[b] += qv[k + 1] - qv[k];
            dqv_count[b] += 1;
        }
    }
    let mut checks = Vec::new();
    let mut skipped = 0;
    for (b, e) in est.iter().enumerate() {
        let Some(e) = e.filter(|e| e.count >= 2) else {
            skipped += 1;
            continue;
        };
        let dqv = dqv_sum[b] / dqv_count[b] as f64;
        let lhs = dqv * dqv;
        // |v̂|² overestimates |v|² by the summed squared standard errors
        let se2: f64 = e.stderr.iter().map(|s| s * s).sum();
        let v2 = vec3::dot(&e.mean, &e.mean) - se2;
        let rhs = (1.0 - v2 / c2) * dt * dt;
        let spread: f64 = (0..3)
            .map(|i| 2.0 * e.mean[i].abs() * e.stderr[i] + e.stderr[i] * e.stderr[i])
            .sum::<f64>()
            / c2;
        let rel_ci = spread / (1.0 - v2 / c2).abs();
        let rel_err = (lhs - rhs).abs() / rhs.abs();
        let tol = (5.0 * rel_ci).max(10.0 * dt);
        checks.push(Check::new(format!("bin@{:.4} rel err", e.center), rel_err, tol));
    }
    if checks.is_empty() {
        return Err(Error::EmptyEnsemble);
    }
    let r = TestReport::from_checks("pt3", checks, ens.n_paths());
    Ok(if skipped > 0 {
        r.with_note(format!("{skipped} sparse bins skipped"))
    } else {
        r
    })
}

/// Scales `ħ` by each factor and checks that the variance of `X¹(horizon)`
/// scales linearly (10 % relative) while proper time is unchanged (1e-10).
pub fn classical_limit_sweep(field: &WaveField, factors: &[f64], cfg: &IntegratorConfig) -> Result<TestReport> {
    if field.plane_wave_momentum().is_none() {
        return Err(Error::InvalidConfig("classical-limit sweep needs a plane wave".into()));
    }
    if factors.is_empty() {
        return Err(Error::InvalidConfig("no hbar factors given".into()));
    }
    let cfg = cfg.with_stride(cfg.n_steps.max(1));
    let horizon = cfg.horizon();
    let base = field.constants();
    let sigma2_base = local_coefficients(field, &[0.0; 3], 0.0)?.sigma2;
    let mut checks = Vec::new();
    let mut reference_qv: Option<Vec<f64>> = None;
    let mut qv_drift = 0.0f64;
    for &f in factors {
        let scaled = field.with_constants(base.with_hbar(base.hbar * f))?;
        let ens = simulate_forward(&scaled, &InitialSampler::PointMass([0.0; 3]), &cfg, None)?;
        let last = ens.n_points() - 1;
        let x1: Vec<f64> = (0..ens.n_paths()).map(|p| ens.state(p, last)[0]).collect();
        let n = x1.len() as f64;
        let mean = x1.iter().sum::<f64>() / n;
        let var = x1.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        let expected = f * sigma2_base * horizon;
        checks.push(Check::new(format!("hbar x{f}: var rel err"), (var - expected).abs() / expected, 0.1));
        let qv: Vec<f64> = ens.paths().map(|p| p.qv[last]).collect();
        match &reference_qv {
            None => reference_qv = Some(qv),
            Some(r) => {
                for (a, b) in r.iter().zip(&qv) {
                    qv_drift = qv_drift.max((a - b).abs());
                }
            }
        }
    }
    checks.push(Check::new("max |qv change| across factors", qv_drift, 1e-10));
    Ok(TestReport::from_checks("classical_limit", checks, cfg.n_paths))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::{NoiseMode, PeriodicBox};
    use crate::time_change::{time_change_ensemble, TauGrid};
    use crate::wave::{make_plane_wave, PhysicalConstants};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;
    use std::f64::consts::SQRT_2;

    fn plane(p: [f64; 3]) -> WaveField {
        make_plane_wave(p, PhysicalConstants::default()).unwrap()
    }

    fn gaussian(n: usize, sd: f64, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| sd * rng.sample::<f64, _>(StandardNormal)).collect()
    }

    #[test]
    fn wiener_check_accepts_gaussian_and_rejects_degenerate() {
        let dtau: f64 = 1e-3;
        let r = wiener_check(&gaussian(100_000, dtau.sqrt(), 1), dtau).unwrap();
        assert!(r.passed, "{r:?}");
        assert!((r.checks[0].threshold - 0.00949).abs() < 1e-5);
        assert!(!wiener_check(&vec![0.0; 20_000], dtau).unwrap().passed);
        assert!(matches!(
            wiener_check(&[0.1; 10], dtau),
            Err(Error::InsufficientSamples { .. })
        ));
    }

    #[test]
    fn wiener_check_flags_misscaled_increments() {
        // t-domain martingale increments have variance rate·dt, not dt
        let dt = 1e-3;
        let rate = 1.0 / SQRT_2;
        let r = wiener_check(&gaussian(100_000, (rate * dt).sqrt(), 2), dt).unwrap();
        assert!(!r.passed);
        assert!(!r.checks[1].passed);
    }

    #[test]
    fn knight_on_time_changed_plane_wave() {
        let field = plane([1.0, 0.0, 0.0]);
        let dtau = 1e-3;
        let cfg = IntegratorConfig::new(dtau * SQRT_2, 200, 60, 8);
        let ens = simulate_forward(&field, &InitialSampler::PointMass([0.0; 3]), &cfg, None).unwrap();
        let tc = time_change_ensemble(&ens, &TauGrid::new(dtau, None)).unwrap();
        assert!(tc.w_tilde_increments.len() >= MIN_SAMPLES);
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            assert!(knight_independence(&tc, i, j).unwrap().passed);
        }
        assert!(matches!(knight_independence(&tc, 1, 1), Err(Error::SameComponent(1))));

        let forced = cfg.with_noise(NoiseMode::Duplicate { from: 0, to: 1 });
        let ens = simulate_forward(&field, &InitialSampler::PointMass([0.0; 3]), &forced, None).unwrap();
        let tc = time_change_ensemble(&ens, &TauGrid::new(dtau, None)).unwrap();
        let r = knight_independence(&tc, 0, 1).unwrap();
        assert!(!r.passed);
        assert!(r.checks[0].value > 0.99);
    }

    #[test]
    fn uniform_density_on_box() {
        let side = 3.0;
        let field = plane([1.0, 0.0, 0.0]);
        let cfg = IntegratorConfig::new(1e-2, 50, 20_000, 3).with_stride(50);
        let ens = simulate_forward(&field, &InitialSampler::UniformBox, &cfg, Some(PeriodicBox::new(side).unwrap()))
            .unwrap();
        let target = field_bin_masses(&field, side, 0, 0.5, 64, 2).unwrap();
        let r = density_compare_ensemble(&ens, 1, 0, &target).unwrap();
        assert!((r.threshold - 0.2828).abs() < 1e-4);
        assert!(r.passed, "{r:?}");
        assert!(matches!(density_compare(&[], side, &target), Err(Error::EmptyEnsemble)));
    }

    #[test]
    fn wrapped_gaussian_from_point_mass() {
        let side = 2.0 * std::f64::consts::PI;
        let center = side / 2.0;
        let field = plane([0.0; 3]);
        let cfg = IntegratorConfig::new(1e-2, 50, 20_000, 4).with_stride(50);
        let ens = simulate_forward(
            &field,
            &InitialSampler::PointMass([center; 3]),
            &cfg,
            Some(PeriodicBox::new(side).unwrap()),
        )
        .unwrap();
        let var = 0.5;
        let target = bin_masses(
            |x| crate::fokker_planck::wrapped_gaussian(x, center, var, side),
            side,
            64,
            8,
        );
        assert!(density_compare_ensemble(&ens, 1, 0, &target).unwrap().passed);
        // a wrong variance is detected
        let wrong = bin_masses(
            |x| crate::fokker_planck::wrapped_gaussian(x, center, 4.0 * var, side),
            side,
            64,
            8,
        );
        assert!(!density_compare_ensemble(&ens, 1, 0, &wrong).unwrap().passed);
    }

    #[test]
    fn pt3_plane_wave_and_rest_particle() {
        let side = 1.0;
        let bins = SpatialBins { axis: 0, lo: 0.0, hi: side, n: 4 };
        for p in [[1.0, 0.0, 0.0], [0.0; 3]] {
            let cfg = IntegratorConfig::new(1e-3, 10, 20_000, 6);
            let ens = simulate_forward(&plane(p), &InitialSampler::UniformBox, &cfg, Some(PeriodicBox::new(side).unwrap()))
                .unwrap();
            let r = pt3_check(&ens, 5, &bins).unwrap();
            assert!(r.passed, "{p:?}: {r:?}");
        }
    }

    #[test]
    fn classical_limit() {
        let cfg = IntegratorConfig::new(1e-2, 100, 4000, 10);
        let r = classical_limit_sweep(&plane([1.0, 0.0, 0.0]), &[1.0, 0.1, 0.01], &cfg).unwrap();
        assert!(r.passed, "{r:?}");
        assert_eq!(r.checks.last().unwrap().value, 0.0);
    }
}
