use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use propertime::config::ExperimentConfig;
use propertime::export::{
    format_report_table, read_ensemble_csv, write_density_csv, write_ensemble_csv, write_reports_json,
    write_tau_csv, Manifest,
};
use propertime::sde::{simulate_forward, NoiseMode, PathEnsemble};
use propertime::stats::TestReport;
use propertime::time_change::{roundtrip_errors, stopping_time_rate_residual, time_change_ensemble};
use propertime::wave::check_admissibility;
use propertime::{Error, Result, WaveField};

use crate::suites::{self, Inputs};
use crate::Common;

pub const EXIT_OK: u8 = 0;
pub const EXIT_INADMISSIBLE: u8 = 2;
pub const EXIT_SUITE_FAILED: u8 = 3;

const DEFAULT_CONFIG: &str = include_str!("../../../configs/plane_wave.json");

const ENSEMBLE_FILE: &str = "ensemble.csv";
const TAU_FILE: &str = "tau.csv";
const REPORTS_FILE: &str = "reports.json";

struct Context {
    cfg: ExperimentConfig,
    field: WaveField,
    out: PathBuf,
}

impl Context {
    fn load(common: &Common) -> Result<Self> {
        let mut cfg = match &common.config {
            Some(path) => ExperimentConfig::load(path)
                .map_err(|e| Error::InvalidConfig(format!("{}: {e}", path.display())))?,
            None => ExperimentConfig::from_json(DEFAULT_CONFIG)?,
        };
        if let Some(seed) = common.seed {
            cfg.integrator.base_seed = seed;
        }
        if let Some(n) = common.paths {
            cfg.integrator.n_paths = n;
        }
        if let Some(out) = &common.out {
            cfg.output_dir = out.display().to_string();
        }
        cfg.validate()?;
        let field = cfg.field()?;
        let out = PathBuf::from(&cfg.output_dir);
        fs::create_dir_all(&out)?;
        Ok(Self { cfg, field, out })
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn create(&self, name: &str) -> Result<BufWriter<File>> {
        Ok(BufWriter::new(File::create(self.path(name))?))
    }

    fn manifest(&self, command: &str, ens: Option<&PathEnsemble>, outputs: &[&str]) -> Result<()> {
        let mut m = Manifest::new(command, self.cfg.integrator.base_seed, &self.cfg)?;
        if let Some(e) = ens {
            m.n_paths_completed = e.n_paths();
            m.n_paths_aborted = e.aborted.len();
        }
        m.outputs = outputs.iter().map(|s| s.to_string()).collect();
        let mut w = self.create(&format!("manifest.{command}.json"))?;
        m.write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    /// Returns an exit code when the run must stop at the gate.
    fn admissibility_gate(&self, force: bool) -> Result<Option<u8>> {
        let a = &self.cfg.admissibility;
        let report = check_admissibility(&self.field, &a.grid(), a.tol)?;
        let mut w = self.create("admissibility.json")?;
        serde_json::to_writer_pretty(&mut w, &report)?;
        w.flush()?;
        if report.admissible {
            return Ok(None);
        }
        eprintln!(
            "field is not admissible: phase-constraint residual {:.6e}, KG residual {:.3e}, min density {:.3e}, current-identity residual {:.3e} (tol {:e})",
            report.z0_residual_max, report.kg_residual_max, report.rho_min, report.j_identity_residual_max, a.tol
        );
        if force {
            eprintln!("continuing because --force was given; paths reaching non-admissible points are dropped");
            Ok(None)
        } else {
            Ok(Some(EXIT_INADMISSIBLE))
        }
    }

    fn simulate(&self) -> Result<PathEnsemble> {
        let ens = simulate_forward(
            &self.field,
            &self.cfg.sampler(&self.field),
            &self.cfg.integrator,
            self.cfg.periodic_box()?,
        )?;
        if !ens.aborted.is_empty() {
            eprintln!("{} of {} paths aborted", ens.aborted.len(), self.cfg.integrator.n_paths);
        }
        if ens.is_empty() {
            return Err(Error::EmptyEnsemble);
        }
        Ok(ens)
    }

    fn write_ensemble(&self, ens: &PathEnsemble) -> Result<()> {
        let mut w = self.create(ENSEMBLE_FILE)?;
        write_ensemble_csv(ens, &mut w)?;
        w.flush()?;
        Ok(())
    }

    fn read_ensemble(&self) -> Result<PathEnsemble> {
        let path = self.path(ENSEMBLE_FILE);
        let file = File::open(&path).map_err(|e| {
            Error::InvalidConfig(format!(
                "cannot open {} ({e}); run `propertime simulate` first or pass --simulate-first",
                path.display()
            ))
        })?;
        read_ensemble_csv(
            BufReader::new(file),
            &self.field,
            &self.cfg.integrator,
            self.cfg.periodic_box()?,
        )
    }

    /// Stored ensemble, or a fresh gated one. Fresh ensembles are written
    /// out only when `persist` is set, so test-mode runs never replace data.
    fn ensemble(&self, fresh: bool, force: bool, persist: bool) -> Result<std::result::Result<PathEnsemble, u8>> {
        if !fresh {
            return self.read_ensemble().map(Ok);
        }
        if let Some(code) = self.admissibility_gate(force)? {
            return Ok(Err(code));
        }
        let ens = self.simulate()?;
        if persist {
            self.write_ensemble(&ens)?;
        }
        Ok(Ok(ens))
    }
}

fn print_reports(reports: &[TestReport]) {
    print!("{}", format_report_table(reports));
}

fn exit_for(reports: &[TestReport]) -> u8 {
    if reports.iter().all(|r| r.passed) {
        EXIT_OK
    } else {
        EXIT_SUITE_FAILED
    }
}

pub fn simulate(common: &Common) -> Result<u8> {
    let ctx = Context::load(common)?;
    if let Some(code) = ctx.admissibility_gate(common.force)? {
        return Ok(code);
    }
    let ens = ctx.simulate()?;
    ctx.write_ensemble(&ens)?;
    ctx.manifest("simulate", Some(&ens), &[ENSEMBLE_FILE, "admissibility.json"])?;
    println!(
        "simulated {} paths to t = {} ({} points each); wrote {}",
        ens.n_paths(),
        ens.t_grid.last().copied().unwrap_or(0.0),
        ens.n_points(),
        ctx.path(ENSEMBLE_FILE).display()
    );
    Ok(EXIT_OK)
}

pub fn timechange(common: &Common) -> Result<u8> {
    let ctx = Context::load(common)?;
    let grid = ctx
        .cfg
        .tau
        .ok_or_else(|| Error::InvalidConfig("config has no \"tau\" block".into()))?;
    let ens = match ctx.ensemble(common.simulate_first, common.force, true)? {
        Ok(e) => e,
        Err(code) => return Ok(code),
    };
    let tc = time_change_ensemble(&ens, &grid)?;
    let mut w = ctx.create(TAU_FILE)?;
    write_tau_csv(&tc, &mut w)?;
    w.flush()?;
    let (fwd, bwd) = roundtrip_errors(&ens, &tc)?;
    let rate = if ctx.field.plane_wave_momentum().is_some() {
        Some(stopping_time_rate_residual(&ctx.field, &tc)?)
    } else {
        None
    };
    let summary = serde_json::json!({
        "tau_max": tc.tau_grid.last(),
        "n_tau": tc.n_tau(),
        "n_paths": tc.n_paths(),
        "dropped_paths": tc.dropped,
        "roundtrip_forward_max": fwd,
        "roundtrip_backward_max": bwd,
        "stopping_time_rate_residual_max": rate,
    });
    let mut w = ctx.create("tau_report.json")?;
    serde_json::to_writer_pretty(&mut w, &summary)?;
    w.flush()?;
    ctx.manifest("timechange", Some(&ens), &[TAU_FILE, "tau_report.json"])?;
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(EXIT_OK)
}

pub fn verify(common: &Common, only: Option<&str>, break_independence: bool) -> Result<u8> {
    let mut ctx = Context::load(common)?;
    let selected = suites::parse_selection(only, &ctx.cfg)?;
    let mut fresh = common.simulate_first;
    if break_independence {
        ctx.cfg.integrator.noise = NoiseMode::Duplicate { from: 0, to: 1 };
        fresh = true;
    }
    let needs_paths = selected.iter().any(|s| suites::NEEDS_TAU.contains(&s.as_str()));
    let ens = if needs_paths {
        match ctx.ensemble(fresh, common.force, !break_independence)? {
            Ok(e) => Some(e),
            Err(code) => return Ok(code),
        }
    } else {
        None
    };
    let tc = match (&ens, ctx.cfg.tau) {
        (Some(e), Some(grid)) => Some(time_change_ensemble(e, &grid)?),
        _ => None,
    };
    let inputs = Inputs {
        cfg: &ctx.cfg,
        field: &ctx.field,
        ens: ens.as_ref(),
        tc: tc.as_ref(),
    };
    let mut reports = Vec::new();
    for suite in &selected {
        if let Some(why) = suites::skip_reason(suite, &ctx.field) {
            eprintln!("skipping {suite}: {why}");
            continue;
        }
        reports.extend(suites::run(suite, &inputs)?);
    }
    let mut w = ctx.create(REPORTS_FILE)?;
    write_reports_json(&reports, &mut w)?;
    w.flush()?;
    ctx.manifest("verify", ens.as_ref(), &[REPORTS_FILE])?;
    print_reports(&reports);
    Ok(exit_for(&reports))
}

pub fn fpcheck(common: &Common) -> Result<u8> {
    let ctx = Context::load(common)?;
    if ctx.field.plane_wave_momentum().is_none() {
        return Err(Error::InvalidConfig("fpcheck needs a plane-wave field".into()));
    }
    let inputs = Inputs {
        cfg: &ctx.cfg,
        field: &ctx.field,
        ens: None,
        tc: None,
    };
    let (reports, out) = suites::fp(&inputs)?;
    let mut outputs = vec![String::from("fp_reports.json")];
    for snap in &out.snapshots {
        let name = format!("density_t{}.csv", snap.t);
        let mut w = ctx.create(&name)?;
        write_density_csv(&snap.density, &mut w)?;
        w.flush()?;
        outputs.push(name);
    }
    let mut w = ctx.create("fp_reports.json")?;
    write_reports_json(&reports, &mut w)?;
    w.flush()?;
    let names: Vec<&str> = outputs.iter().map(String::as_str).collect();
    ctx.manifest("fpcheck", None, &names)?;
    print_reports(&reports);
    Ok(exit_for(&reports))
}

pub fn report(common: &Common) -> Result<u8> {
    let ctx = Context::load(common)?;
    let path: &Path = &ctx.path(REPORTS_FILE);
    let reports: Vec<TestReport> = serde_json::from_reader(BufReader::new(
        File::open(path).map_err(|e| Error::InvalidConfig(format!("cannot open {}: {e}", path.display())))?,
    ))?;
    print_reports(&reports);
    for r in reports.iter().filter(|r| !r.passed) {
        for c in r.checks.iter().filter(|c| !c.passed) {
            println!("  {}: {} = {:.5e} > {:.5e}", r.name, c.label, c.value, c.threshold);
        }
    }
    Ok(exit_for(&reports))
}
