//! Verification suites run by `verify`. Each returns one or more reports;
//! suites that need auxiliary simulations derive them from the config seed.

use propertime::config::{init_sampler, ExperimentConfig, InitSpec};
use propertime::fokker_planck::{evolve_fp_snapshots, wrapped_gaussian, Coefficients1D, DensityField, FpOutcome, Grid1D};
use propertime::kinematics::local_coefficients;
use propertime::sde::{simulate_forward, InitialSampler, IntegratorConfig, PathEnsemble, PeriodicBox, SpatialBins};
use propertime::stats::{
    bin_masses, classical_limit_sweep, density_compare, knight_independence, pt3_check, wiener_check, Check,
    TestReport,
};
use propertime::time_change::{
    generator_adjoint_check, invariant_measure_checks, minkowski_gradient_identity, roundtrip_errors,
    stopping_time_rate_residual, QuadratureBox, TestFunction, TimeChangedEnsemble,
};
use propertime::wave::SpaceTimeGrid;
use propertime::{Error, Result, WaveField};

pub const ALL: &[&str] = &[
    "wiener",
    "knight",
    "roundtrip",
    "tau_diffusion",
    "density",
    "pt3",
    "invariant_measure",
    "minkowski",
    "adjoint",
    "classical_limit",
    "fp",
];

/// Suites that only make sense for plane waves (closed-form comparisons).
const PLANE_WAVE_ONLY: &[&str] = &["density", "pt3", "classical_limit", "fp", "tau_diffusion"];

/// Suites that consume the τ-domain ensemble.
pub const NEEDS_TAU: &[&str] = &["wiener", "knight", "roundtrip", "tau_diffusion"];

pub fn parse_selection(only: Option<&str>, cfg: &ExperimentConfig) -> Result<Vec<String>> {
    let chosen: Vec<String> = match only {
        Some(list) => list.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect(),
        None if !cfg.suites.is_empty() => cfg.suites.clone(),
        None => ALL.iter().map(|s| s.to_string()).collect(),
    };
    if let Some(bad) = chosen.iter().find(|s| !ALL.contains(&s.as_str())) {
        return Err(Error::InvalidConfig(format!(
            "unknown suite {bad:?}; expected one of {}",
            ALL.join(", ")
        )));
    }
    Ok(chosen)
}

pub fn skip_reason(suite: &str, field: &WaveField) -> Option<&'static str> {
    (PLANE_WAVE_ONLY.contains(&suite) && field.plane_wave_momentum().is_none())
        .then_some("needs a plane-wave field")
}

pub struct Inputs<'a> {
    pub cfg: &'a ExperimentConfig,
    pub field: &'a WaveField,
    pub ens: Option<&'a PathEnsemble>,
    pub tc: Option<&'a TimeChangedEnsemble>,
}

pub fn run(suite: &str, inp: &Inputs) -> Result<Vec<TestReport>> {
    match suite {
        "wiener" => wiener(tc(inp)?),
        "knight" => knight(tc(inp)?),
        "roundtrip" => roundtrip(inp),
        "tau_diffusion" => tau_diffusion(tc(inp)?, inp.field),
        "density" => density(inp),
        "pt3" => pt3(inp),
        "invariant_measure" => invariant_measure(inp),
        "minkowski" => minkowski(inp),
        "adjoint" => adjoint(inp),
        "classical_limit" => classical(inp),
        "fp" => fp(inp).map(|(r, _)| r),
        other => Err(Error::InvalidConfig(format!("unknown suite {other}"))),
    }
}

fn tc<'a>(inp: &Inputs<'a>) -> Result<&'a TimeChangedEnsemble> {
    inp.tc
        .ok_or_else(|| Error::InvalidConfig("this suite needs a \"tau\" block in the config".into()))
}

fn wiener(tc: &TimeChangedEnsemble) -> Result<Vec<TestReport>> {
    let dtau = tc.tau_grid[1] - tc.tau_grid[0];
    (0..3)
        .map(|i| {
            let mut r = wiener_check(&tc.component_increments(i)?, dtau)?;
            r.name = format!("wiener_w{}", i + 1);
            Ok(r)
        })
        .collect()
}

fn knight(tc: &TimeChangedEnsemble) -> Result<Vec<TestReport>> {
    [(0, 1), (0, 2), (1, 2)]
        .into_iter()
        .map(|(i, j)| knight_independence(tc, i, j))
        .collect()
}

fn roundtrip(inp: &Inputs) -> Result<Vec<TestReport>> {
    let ens = inp.ens.ok_or(Error::EmptyEnsemble)?;
    let tc = tc(inp)?;
    let (fwd, bwd) = roundtrip_errors(ens, tc)?;
    let dt = ens.record_dt();
    let mut out = vec![TestReport::from_checks(
        "roundtrip",
        vec![
            Check::new("max |qv(T(tau)) - tau|", fwd, 2.0 * dt),
            Check::new("max |T(qv(t)) - t|", bwd, 2.0 * dt),
        ],
        tc.n_paths(),
    )];
    if inp.field.plane_wave_momentum().is_some() {
        out.push(TestReport::single(
            "stopping_time_rate",
            stopping_time_rate_residual(inp.field, tc)?,
            1e-3,
            tc.n_paths(),
        ));
    }
    Ok(out)
}

/// Realized QV of `X̃¹` over the whole τ-grid equals `(ħ/m) τ_max`, and the
/// mean τ-velocity equals the momentum over the mass.
fn tau_diffusion(tc: &TimeChangedEnsemble, field: &WaveField) -> Result<Vec<TestReport>> {
    let k = tc.constants;
    let last = tc.n_tau() - 1;
    let tau_max = tc.tau_grid[last];
    let dtau = tc.tau_grid[1] - tc.tau_grid[0];
    let expected_qv = k.hbar / k.mass * tau_max;
    let band = 5.0 * (2.0 * dtau * tau_max).sqrt();
    let qv = tc.x_tilde_realized_qv(0, last)?;
    let inside = qv.iter().filter(|q| (*q - expected_qv).abs() <= band).count();
    let frac_outside = 1.0 - inside as f64 / qv.len() as f64;

    let speeds: Vec<f64> = (0..tc.n_paths())
        .map(|i| {
            let x = tc.x_tilde_path(i);
            (x[last][0] - x[0][0]) / tau_max
        })
        .collect();
    let n = speeds.len() as f64;
    let mean = speeds.iter().sum::<f64>() / n;
    let sd = (speeds.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let report = |checks| TestReport::from_checks("tau_diffusion", checks, tc.n_paths());
    Ok(vec![report(vec![
        Check::new("fraction of paths outside QV band", frac_outside, 0.01),
        Check::new("|mean tau-velocity - expected|", (mean - expected_tau_velocity(field)?).abs(), 3.0 * sd / n.sqrt()),
    ])])
}

/// `b₊¹ / rate`, constant for plane waves.
fn expected_tau_velocity(field: &WaveField) -> Result<f64> {
    let c = local_coefficients(field, &[0.0; 3], 0.0)?;
    Ok(c.b_plus[0] / c.rate)
}

fn aux_config(base: &IntegratorConfig, dt: f64, n_steps: usize, n_paths: usize, stride: usize, salt: u64) -> IntegratorConfig {
    IntegratorConfig::new(dt, n_steps, n_paths, base.base_seed.wrapping_add(salt))
        .with_stride(stride)
        .with_noise(base.noise)
}

/// Steps of at most `dt` that land exactly on `t`.
fn fit_steps(t: f64, dt: f64) -> (f64, usize) {
    let n = (t / dt).ceil().max(1.0) as usize;
    (t / n as f64, n)
}

struct DensitySetup {
    side: f64,
    center: f64,
    var0: f64,
    t: f64,
    b: f64,
    sigma2: f64,
}

fn density_setup(inp: &Inputs) -> Result<DensitySetup> {
    let c = &inp.cfg.checks;
    let co = local_coefficients(inp.field, &[0.0; 3], 0.0)?;
    Ok(DensitySetup {
        side: c.density_box,
        center: c.density_box / 2.0,
        var0: c.density_init_var,
        t: c.density_time,
        b: co.b_plus[0],
        sigma2: co.sigma2,
    })
}

impl DensitySetup {
    fn analytic(&self, x: f64) -> f64 {
        wrapped_gaussian(x, self.center + self.b * self.t, self.var0 + self.sigma2 * self.t, self.side)
    }
}

/// FP evolution of the wrapped-Gaussian experiment; returns the reports and
/// the solver output (snapshots at 0, t/2 and t).
pub fn fp(inp: &Inputs) -> Result<(Vec<TestReport>, FpOutcome)> {
    let s = density_setup(inp)?;
    let cells = inp.cfg.checks.fp_cells;
    let grid0 = Grid1D::new(s.side, cells, 1.0)?;
    let dt = grid0.stable_dt(s.sigma2, s.b.abs()) * 0.99;
    let grid = Grid1D::new(s.side, cells, dt)?;
    let init = DensityField::from_fn(s.side, cells, |x| wrapped_gaussian(x, s.center, s.var0, s.side))?;
    let coeffs = Coefficients1D::FromField {
        field: inp.field.clone(),
        transverse: [0.0, 0.0],
    };
    let out = evolve_fp_snapshots(&coeffs, &init, &grid, &[0.0, 0.5 * s.t, s.t])?;
    let l1 = out.last().l1_to(|x| s.analytic(x));
    let mut checks = vec![
        Check::new("L1(FP, analytic)", l1, 1e-3),
        Check::new("relative mass drift", out.mass_drift, 1e-10),
    ];
    if let Some(neg) = out.negativity {
        checks.push(Check::new("negativity", -neg, 0.0));
    }
    Ok((vec![TestReport::from_checks("fp_vs_analytic", checks, cells)], out))
}

fn density(inp: &Inputs) -> Result<Vec<TestReport>> {
    let s = density_setup(inp)?;
    let c = &inp.cfg.checks;
    let (dt, n_steps) = fit_steps(s.t, inp.cfg.integrator.dt);
    let icfg = aux_config(&inp.cfg.integrator, dt, n_steps, c.aux_paths, n_steps, 0xD0);
    let sampler = init_sampler(
        &InitSpec::WrappedGaussian {
            center: s.center,
            var: s.var0,
        },
        inp.field,
        Some(s.side),
    );
    let ens = simulate_forward(inp.field, &sampler, &icfg, Some(PeriodicBox::new(s.side)?))?;
    let samples: Vec<f64> = (0..ens.n_paths()).map(|p| ens.wrapped_state(p, 1)[0]).collect();
    let target = bin_masses(|x| s.analytic(x), s.side, c.density_bins, 16);
    let mut vs_analytic = density_compare(&samples, s.side, &target)?;
    vs_analytic.name = "density_sde_vs_analytic".into();

    let (fp_reports, fp_out) = fp(inp)?;
    let fp_err = fp_reports[0].checks[0].value;
    let fp_masses = fp_out.last().coarsen(c.density_bins)?;
    let mut vs_fp = density_compare(&samples, s.side, &fp_masses)?;
    vs_fp.name = "density_sde_vs_fp".into();
    vs_fp.threshold += fp_err;
    vs_fp.passed = vs_fp.statistic <= vs_fp.threshold;
    Ok(vec![vs_analytic, vs_fp])
}

fn pt3(inp: &Inputs) -> Result<Vec<TestReport>> {
    let c = &inp.cfg.checks;
    let icfg = aux_config(&inp.cfg.integrator, inp.cfg.integrator.dt, c.pt3_steps, c.aux_paths, 1, 0x93);
    let ens = simulate_forward(
        inp.field,
        &InitialSampler::UniformBox,
        &icfg,
        Some(PeriodicBox::new(c.pt3_box)?),
    )?;
    let bins = SpatialBins {
        axis: 0,
        lo: 0.0,
        hi: c.pt3_box,
        n: c.pt3_bins,
    };
    Ok(vec![pt3_check(&ens, c.pt3_steps / 2, &bins)?])
}

fn invariant_grid(inp: &Inputs) -> SpaceTimeGrid {
    let a = &inp.cfg.admissibility;
    let n = inp.cfg.checks.invariant_grid_n;
    SpaceTimeGrid::cube(a.half_width, n, a.t_max, n)
}

fn invariant_measure(inp: &Inputs) -> Result<Vec<TestReport>> {
    let grid = invariant_grid(inp);
    let r = invariant_measure_checks(inp.field, &grid)?;
    Ok(vec![TestReport::from_checks(
        "invariant_measure",
        vec![
            Check::new("max |A11 residual|", r.a11_residual_max, 1e-12),
            Check::new("max |A12 residual|", r.a12_residual_max, 1e-12),
            Check::new("max |covariant continuity|", r.covariant_continuity_residual_max, 1e-12),
        ],
        grid.len(),
    )])
}

fn minkowski(inp: &Inputs) -> Result<Vec<TestReport>> {
    let n = inp.cfg.checks.mass_shell_points;
    let points = invariant_grid(inp).random_nodes(n, inp.cfg.integrator.base_seed);
    let worst = minkowski_gradient_identity(inp.field, &points)?;
    Ok(vec![TestReport::single("minkowski_mass_shell", worst, 1e-12, n)])
}

fn adjoint(inp: &Inputs) -> Result<Vec<TestReport>> {
    let c = &inp.cfg.checks;
    let f = TestFunction::SeparableBump {
        center: [0.0; 4],
        radius: [1.0; 4],
        amplitude: 1.0,
    };
    let g = TestFunction::SeparableBump {
        center: [0.2, -0.1, 0.0, 0.1],
        radius: [0.8; 4],
        amplitude: 1.0,
    };
    let bx = QuadratureBox {
        lo: [-1.0; 4],
        hi: [1.0; 4],
    };
    let r = generator_adjoint_check(inp.field, &f, &g, &bx, c.adjoint_coarse, c.adjoint_fine)?;
    Ok(vec![TestReport::from_checks(
        "adjoint",
        vec![
            Check::new("|<Lf,g> + <f,L-g>| (fine)", r.defect(), 1e-6),
            Check::new("Richardson error estimate", r.richardson_error, 1e-6),
        ],
        c.adjoint_fine.pow(4),
    )
    .with_note(format!(
        "coarse defect {:.3e}; literal-sign difference {:.3e}",
        r.coarse.defect, r.literal_sign_difference
    ))])
}

fn classical(inp: &Inputs) -> Result<Vec<TestReport>> {
    let c = &inp.cfg.checks;
    let (dt, n_steps) = fit_steps(1.0, c.classical_dt);
    let icfg = aux_config(&inp.cfg.integrator, dt, n_steps, c.classical_paths, 1, 0xC1);
    Ok(vec![classical_limit_sweep(inp.field, &c.hbar_factors, &icfg)?])
}
