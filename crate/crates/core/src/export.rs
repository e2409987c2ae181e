//! File formats.
//!
//! | file | columns |
//! |------|---------|
//! | ensemble CSV | `path_id,t,x1,x2,x3,qv` — one row per path per retained step; positions folded into the box when there is one |
//! | τ-domain CSV | `path_id,tau,x1,x2,x3,T` |
//! | density CSV  | `cell_center,value` |
//! | reports JSON | array of [`TestReport`] |
//! | manifest JSON | [`Manifest`] |
//!
//! Floats are written with Rust's shortest round-trip formatting, so output is
//! a pure function of the data and reading a file back recovers it exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fokker_planck::DensityField;
use crate::kinematics::local_coefficients;
use crate::sde::{IntegratorConfig, PathEnsemble};
use crate::stats::TestReport;
use crate::time_change::TimeChangedEnsemble;
use crate::vec3::{self, Vec3};
use crate::wave::WaveField;

pub const ENSEMBLE_HEADER: [&str; 6] = ["path_id", "t", "x1", "x2", "x3", "qv"];
pub const TAU_HEADER: [&str; 6] = ["path_id", "tau", "x1", "x2", "x3", "T"];
pub const DENSITY_HEADER: [&str; 2] = ["cell_center", "value"];

/// Version string recorded in manifests; a `git describe` result can be
/// injected at build time through `PROPERTIME_GIT_DESCRIBE`.
pub fn version_string() -> String {
    match option_env!("PROPERTIME_GIT_DESCRIBE") {
        Some(d) => format!("propertime {} ({d})", env!("CARGO_PKG_VERSION")),
        None => format!("propertime {}", env!("CARGO_PKG_VERSION")),
    }
}

fn row<const N: usize>(w: &mut csv::Writer<impl Write>, fields: [String; N]) -> Result<()> {
    w.write_record(&fields)?;
    Ok(())
}

pub fn write_ensemble_csv(ens: &PathEnsemble, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(ENSEMBLE_HEADER)?;
    for (i, p) in ens.paths().enumerate() {
        for k in 0..ens.n_points() {
            let x = ens.wrapped_state(i, k);
            row(
                &mut w,
                [
                    p.id.to_string(),
                    p.t[k].to_string(),
                    x[0].to_string(),
                    x[1].to_string(),
                    x[2].to_string(),
                    p.qv[k].to_string(),
                ],
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_tau_csv(tc: &TimeChangedEnsemble, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TAU_HEADER)?;
    for i in 0..tc.n_paths() {
        let id = tc.path_ids[i].to_string();
        for ((tau, x), t) in tc.tau_grid.iter().zip(tc.x_tilde_path(i)).zip(tc.t_of_tau_path(i)) {
            row(
                &mut w,
                [
                    id.clone(),
                    tau.to_string(),
                    x[0].to_string(),
                    x[1].to_string(),
                    x[2].to_string(),
                    t.to_string(),
                ],
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_density_csv(density: &DensityField, out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(DENSITY_HEADER)?;
    for (x, v) in density.centers().zip(&density.values) {
        row(&mut w, [x.to_string(), v.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Deserialize)]
struct EnsembleRow {
    path_id: usize,
    t: f64,
    x1: f64,
    x2: f64,
    x3: f64,
    qv: f64,
}

/// Reads an ensemble CSV written by [`write_ensemble_csv`] and rebuilds the
/// Wiener and martingale increments from the positions:
/// `ΔW = (ΔX − b₊ dt)/σ` and `ΔM = √r ΔW`, both at the left endpoint.
/// This is exact only for unstrided output, so `cfg.stride` must be 1.
pub fn read_ensemble_csv(
    input: impl Read,
    field: &WaveField,
    cfg: &IntegratorConfig,
    domain: Option<crate::sde::PeriodicBox>,
) -> Result<PathEnsemble> {
    if cfg.stride != 1 {
        return Err(Error::InvalidConfig(
            "increments can only be rebuilt from unstrided output".into(),
        ));
    }
    let mut rows: BTreeMap<usize, Vec<EnsembleRow>> = BTreeMap::new();
    for r in csv::Reader::from_reader(input).deserialize() {
        let r: EnsembleRow = r?;
        rows.entry(r.path_id).or_default().push(r);
    }
    let first = rows.values().next().ok_or(Error::EmptyEnsemble)?;
    let t_grid: Vec<f64> = first.iter().map(|r| r.t).collect();
    let consts = *field.constants();
    let scale = (consts.hbar / consts.mass).sqrt();
    let mut ens = PathEnsemble {
        constants: consts,
        t_grid: t_grid.clone(),
        path_ids: Vec::new(),
        states: Vec::new(),
        qv: Vec::new(),
        martingale: Vec::new(),
        dw: Vec::new(),
        domain,
        aborted: Vec::new(),
    };
    for (id, path) in rows {
        if path.len() != t_grid.len() || path.iter().zip(&t_grid).any(|(r, t)| r.t != *t) {
            return Err(Error::InvalidConfig(format!("path {id} does not share the common time grid")));
        }
        let mut x: Vec3 = [path[0].x1, path[0].x2, path[0].x3];
        let mut m = vec3::ZERO;
        ens.states.push(x);
        ens.martingale.push(m);
        ens.qv.push(path[0].qv);
        for w in path.windows(2) {
            let dt = w[1].t - w[0].t;
            let raw = vec3::sub(&[w[1].x1, w[1].x2, w[1].x3], &[w[0].x1, w[0].x2, w[0].x3]);
            let dx: Vec3 = match &domain {
                // nearest image undoes the folding
                Some(b) => std::array::from_fn(|i| raw[i] - b.side * (raw[i] / b.side).round()),
                None => raw,
            };
            let c = local_coefficients(field, &x, w[0].t)?;
            let sigma = c.sigma2.sqrt();
            let dw: Vec3 = std::array::from_fn(|i| (dx[i] - c.b_plus[i] * dt) / sigma);
            let m_scale = sigma / scale;
            x = vec3::add(&x, &dx);
            m = vec3::add(&m, &vec3::scale(&dw, m_scale));
            ens.states.push(x);
            ens.martingale.push(m);
            ens.qv.push(w[1].qv);
            ens.dw.push(dw);
        }
        ens.path_ids.push(id);
    }
    Ok(ens)
}

/// Run record sufficient to repeat an experiment. The wall-clock stamp is the
/// only field that differs between otherwise identical runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub n_paths_completed: usize,
    pub n_paths_aborted: usize,
    pub outputs: Vec<String>,
    pub generated_at_unix: u64,
}

impl Manifest {
    pub fn new(command: &str, seed: u64, config: &impl Serialize) -> Result<Self> {
        Ok(Self {
            version: version_string(),
            command: command.to_string(),
            seed,
            config: serde_json::to_value(config)?,
            n_paths_completed: 0,
            n_paths_aborted: 0,
            outputs: Vec::new(),
            generated_at_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        })
    }

    pub fn write(&self, out: impl Write) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }
}

pub fn write_reports_json(reports: &[TestReport], out: impl Write) -> Result<()> {
    serde_json::to_writer_pretty(out, reports)?;
    Ok(())
}

/// Fixed-width summary, one line per report.
pub fn format_report_table(reports: &[TestReport]) -> String {
    let width = reports.iter().map(|r| r.name.len()).max().unwrap_or(4).max(4);
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<width$}  {:>6}  {:>12}  {:>12}  {:>9}",
        "test", "result", "statistic", "threshold", "n"
    );
    for r in reports {
        let _ = writeln!(
            s,
            "{:<width$}  {:>6}  {:>12.5e}  {:>12.5e}  {:>9}",
            r.name,
            if r.passed { "PASS" } else { "FAIL" },
            r.statistic,
            r.threshold,
            r.n_samples
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::{simulate_forward, InitialSampler, PeriodicBox};
    use crate::wave::{make_plane_wave, PhysicalConstants};

    fn small(domain: Option<PeriodicBox>) -> (WaveField, IntegratorConfig, PathEnsemble) {
        let field = make_plane_wave([1.0, 0.5, 0.0], PhysicalConstants::default()).unwrap();
        let cfg = IntegratorConfig::new(1e-2, 40, 5, 11);
        let init = if domain.is_some() {
            InitialSampler::UniformBox
        } else {
            InitialSampler::PointMass([0.0; 3])
        };
        let ens = simulate_forward(&field, &init, &cfg, domain).unwrap();
        (field, cfg, ens)
    }

    #[test]
    fn ensemble_csv_has_documented_shape() {
        let (_, _, ens) = small(None);
        let mut buf = Vec::new();
        write_ensemble_csv(&ens, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "path_id,t,x1,x2,x3,qv");
        assert_eq!(lines.count(), 5 * 41);
    }

    #[test]
    fn csv_roundtrip_rebuilds_increments() {
        for domain in [None, Some(PeriodicBox::new(3.0).unwrap())] {
            let (field, cfg, ens) = small(domain);
            let mut buf = Vec::new();
            write_ensemble_csv(&ens, &mut buf).unwrap();
            let back = read_ensemble_csv(buf.as_slice(), &field, &cfg, domain).unwrap();
            assert_eq!(back.path_ids, ens.path_ids);
            assert_eq!(back.qv, ens.qv);
            for (a, b) in back.dw.iter().zip(&ens.dw) {
                for i in 0..3 {
                    assert!((a[i] - b[i]).abs() < 1e-9, "{a:?} {b:?}");
                }
            }
            for (a, b) in back.martingale.iter().zip(&ens.martingale) {
                for i in 0..3 {
                    assert!((a[i] - b[i]).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn strided_output_cannot_be_rebuilt() {
        let (field, cfg, ens) = small(None);
        let mut buf = Vec::new();
        write_ensemble_csv(&ens, &mut buf).unwrap();
        let strided = cfg.with_stride(2);
        assert!(read_ensemble_csv(buf.as_slice(), &field, &strided, None).is_err());
    }

    #[test]
    fn density_csv_and_table() {
        let d = DensityField::new(1.0, vec![0.5, 1.5]).unwrap();
        let mut buf = Vec::new();
        write_density_csv(&d, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "cell_center,value\n0.25,0.5\n0.75,1.5\n");
        let table = format_report_table(&[TestReport::single("wiener", 0.5, 1.0, 10)]);
        assert!(table.contains("wiener") && table.contains("PASS"));
    }

    #[test]
    fn manifest_isolates_timestamp() {
        let a = Manifest::new("simulate", 3, &serde_json::json!({"k": 1})).unwrap();
        let mut b = a.clone();
        b.generated_at_unix += 100;
        let strip = |m: &Manifest| {
            let mut v = serde_json::to_value(m).unwrap();
            v.as_object_mut().unwrap().remove("generated_at_unix");
            v
        };
        assert_eq!(strip(&a), strip(&b));
    }
}
