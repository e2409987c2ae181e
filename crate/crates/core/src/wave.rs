//! Positive-energy Klein-Gordon solutions in polar form `φ = exp(R + iS/ħ)`.
//!
//! Plane waves are evaluated in closed form. Finite superpositions are
//! evaluated from the complex sum and its analytic derivatives, so the phase
//! gradient `∇S = ħ Im(∇φ/φ)` never involves finite differences or a global
//! phase unwrapping.
//!
//! Derivatives are taken in the real coordinates `(x¹, x², x³, t)`; index 3
//! of every gradient and Hessian is the time direction.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::vec3::{self, Vec3};

/// Relative modulus below which a superposition is treated as a node.
pub const NODE_THRESHOLD: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConstants {
    pub hbar: f64,
    pub mass: f64,
    pub c: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        Self {
            hbar: 1.0,
            mass: 1.0,
            c: 1.0,
        }
    }
}

impl PhysicalConstants {
    pub fn new(hbar: f64, mass: f64, c: f64) -> Result<Self> {
        let k = Self { hbar, mass, c };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if ok(self.hbar) && ok(self.mass) && ok(self.c) {
            Ok(())
        } else {
            Err(Error::InvalidConstants {
                hbar: self.hbar,
                mass: self.mass,
                c: self.c,
            })
        }
    }

    /// `mc`, the rest momentum.
    pub fn rest_momentum(&self) -> f64 {
        self.mass * self.c
    }

    /// `√(q·q + m²c²)`. Every mass-shell quantity in the crate goes through
    /// this one expression so that plane-wave residuals cancel exactly.
    pub fn shell_root(&self, q: &Vec3) -> f64 {
        let mc = self.rest_momentum();
        (vec3::dot(q, q) + mc * mc).sqrt()
    }

    /// Positive energy `p⁰ = c √(p·p + m²c²)`.
    pub fn energy(&self, p: &Vec3) -> f64 {
        self.c * self.shell_root(p)
    }

    pub fn with_hbar(&self, hbar: f64) -> Self {
        Self { hbar, ..*self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlaneWaveSpec {
    pub momentum: Vec3,
    pub constants: PhysicalConstants,
}

impl PlaneWaveSpec {
    pub fn new(momentum: Vec3, constants: PhysicalConstants) -> Self {
        Self {
            momentum,
            constants,
        }
    }

    pub fn energy(&self) -> f64 {
        self.constants.energy(&self.momentum)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaveKind {
    PlaneWave,
    Superposition,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Term {
    momentum: Vec3,
    energy: f64,
    weight: Complex64,
}

/// Everything the rest of the crate needs from `φ` at one space-time point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveSample {
    pub phi: Complex64,
    pub r: f64,
    /// Phase `S`; for superpositions it is `ħ arg φ` on the principal branch.
    pub s: f64,
    pub grad_r: [f64; 4],
    pub grad_s: [f64; 4],
    pub hess_r: [[f64; 4]; 4],
    pub hess_s: [[f64; 4]; 4],
    /// `Δφ − (1/c²) ∂²φ/∂t²`, computed directly from the complex field.
    pub wave_operator: Complex64,
}

impl WaveSample {
    pub fn spatial_grad_s(&self) -> Vec3 {
        [self.grad_s[0], self.grad_s[1], self.grad_s[2]]
    }

    pub fn spatial_grad_r(&self) -> Vec3 {
        [self.grad_r[0], self.grad_r[1], self.grad_r[2]]
    }

    pub fn ds_dt(&self) -> f64 {
        self.grad_s[3]
    }

    pub fn dr_dt(&self) -> f64 {
        self.grad_r[3]
    }

    /// `|φ|² = e^{2R}`.
    pub fn modulus_sq(&self) -> f64 {
        self.phi.norm_sqr()
    }

    pub fn laplacian_r(&self) -> f64 {
        self.hess_r[0][0] + self.hess_r[1][1] + self.hess_r[2][2]
    }

    pub fn laplacian_s(&self) -> f64 {
        self.hess_s[0][0] + self.hess_s[1][1] + self.hess_s[2][2]
    }
}

/// An evaluatable Klein-Gordon solution. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveField {
    constants: PhysicalConstants,
    kind: WaveKind,
    terms: Vec<Term>,
}

pub fn make_plane_wave(p: Vec3, constants: PhysicalConstants) -> Result<WaveField> {
    constants.validate()?;
    Ok(WaveField {
        constants,
        kind: WaveKind::PlaneWave,
        terms: vec![Term {
            momentum: p,
            energy: constants.energy(&p),
            weight: Complex64::new(1.0, 0.0),
        }],
    })
}

/// Numeric superposition `Σ wᵢ exp(i(pᵢ·x − pᵢ⁰t)/ħ)`.
pub fn superpose(waves: &[PlaneWaveSpec], weights: &[Complex64]) -> Result<WaveField> {
    let first = waves
        .first()
        .ok_or_else(|| Error::InvalidConfig("superposition needs at least one wave".into()))?;
    if waves.len() != weights.len() {
        return Err(Error::InvalidConfig(format!(
            "{} waves but {} weights",
            waves.len(),
            weights.len()
        )));
    }
    let constants = first.constants;
    constants.validate()?;
    if waves.iter().any(|w| w.constants != constants) {
        return Err(Error::InvalidConfig(
            "all superposed waves must share the same constants".into(),
        ));
    }
    if weights.iter().any(|w| !w.re.is_finite() || !w.im.is_finite()) {
        return Err(Error::InvalidConfig("weights must be finite".into()));
    }
    Ok(WaveField {
        constants,
        kind: WaveKind::Superposition,
        terms: waves
            .iter()
            .zip(weights)
            .map(|(w, &weight)| Term {
                momentum: w.momentum,
                energy: w.energy(),
                weight,
            })
            .collect(),
    })
}

impl WaveField {
    pub fn constants(&self) -> &PhysicalConstants {
        &self.constants
    }

    pub fn kind(&self) -> WaveKind {
        self.kind
    }

    /// Plane-wave momentum, if this field is an exact plane wave.
    pub fn plane_wave_momentum(&self) -> Option<Vec3> {
        match self.kind {
            WaveKind::PlaneWave => Some(self.terms[0].momentum),
            WaveKind::Superposition => None,
        }
    }

    /// Component waves and their complex weights.
    pub fn components(&self) -> Vec<(PlaneWaveSpec, Complex64)> {
        self.terms
            .iter()
            .map(|t| (PlaneWaveSpec::new(t.momentum, self.constants), t.weight))
            .collect()
    }

    /// Same wave content with different constants (energies recomputed).
    pub fn with_constants(&self, constants: PhysicalConstants) -> Result<Self> {
        constants.validate()?;
        Ok(Self {
            constants,
            kind: self.kind,
            terms: self
                .terms
                .iter()
                .map(|t| Term {
                    energy: constants.energy(&t.momentum),
                    ..*t
                })
                .collect(),
        })
    }

    /// Upper bound on `ρ = |φ|²(−∂S/∂t)/(mc²)`, used for rejection sampling.
    pub fn density_upper_bound(&self) -> f64 {
        let k = &self.constants;
        let amp: f64 = self.terms.iter().map(|t| t.weight.norm()).sum();
        let damp: f64 = self.terms.iter().map(|t| t.weight.norm() * t.energy).sum();
        amp * damp / (k.mass * k.c * k.c)
    }

    pub fn evaluate(&self, x: &Vec3, t: f64) -> Result<WaveSample> {
        match self.kind {
            WaveKind::PlaneWave => Ok(self.evaluate_plane(x, t)),
            WaveKind::Superposition => self.evaluate_sum(x, t),
        }
    }

    fn evaluate_plane(&self, x: &Vec3, t: f64) -> WaveSample {
        let term = &self.terms[0];
        let k = &self.constants;
        let p = &term.momentum;
        let s = vec3::dot(p, x) - term.energy * t;
        let phi = Complex64::from_polar(1.0, s / k.hbar);
        let wave_number_sq =
            (term.energy * term.energy / (k.c * k.c) - vec3::dot(p, p)) / (k.hbar * k.hbar);
        WaveSample {
            phi,
            r: 0.0,
            s,
            grad_r: [0.0; 4],
            grad_s: [p[0], p[1], p[2], -term.energy],
            hess_r: [[0.0; 4]; 4],
            hess_s: [[0.0; 4]; 4],
            wave_operator: phi * wave_number_sq,
        }
    }

    fn evaluate_sum(&self, x: &Vec3, t: f64) -> Result<WaveSample> {
        let k = &self.constants;
        let i = Complex64::i();
        let mut phi = Complex64::new(0.0, 0.0);
        let mut d1 = [Complex64::new(0.0, 0.0); 4];
        let mut d2 = [[Complex64::new(0.0, 0.0); 4]; 4];
        let mut scale = 0.0;
        for term in &self.terms {
            // wave vector in (x, t) coordinates
            let kv = [
                term.momentum[0] / k.hbar,
                term.momentum[1] / k.hbar,
                term.momentum[2] / k.hbar,
                -term.energy / k.hbar,
            ];
            let theta = kv[0] * x[0] + kv[1] * x[1] + kv[2] * x[2] + kv[3] * t;
            let e = term.weight * Complex64::from_polar(1.0, theta);
            phi += e;
            for a in 0..4 {
                d1[a] += e * i * kv[a];
                for b in 0..4 {
                    d2[a][b] -= e * (kv[a] * kv[b]);
                }
            }
            scale += term.weight.norm();
        }
        if phi.norm() <= NODE_THRESHOLD * scale {
            return Err(Error::SingularNode { x: *x, t });
        }
        let mut grad_r = [0.0; 4];
        let mut grad_s = [0.0; 4];
        let mut hess_r = [[0.0; 4]; 4];
        let mut hess_s = [[0.0; 4]; 4];
        let log_grad: [Complex64; 4] = std::array::from_fn(|a| d1[a] / phi);
        for a in 0..4 {
            grad_r[a] = log_grad[a].re;
            grad_s[a] = k.hbar * log_grad[a].im;
            for b in 0..4 {
                let h = d2[a][b] / phi - log_grad[a] * log_grad[b];
                hess_r[a][b] = h.re;
                hess_s[a][b] = k.hbar * h.im;
            }
        }
        Ok(WaveSample {
            phi,
            r: phi.norm().ln(),
            s: k.hbar * phi.arg(),
            grad_r,
            grad_s,
            hess_r,
            hess_s,
            wave_operator: d2[0][0] + d2[1][1] + d2[2][2] - d2[3][3] / (k.c * k.c),
        })
    }
}

/// `ρ = |φ|²(−∂S/∂t)/(mc²)` and `j = |φ|² ∇S/m` at one point.
pub fn rho_and_current(field: &WaveField, x: &Vec3, t: f64) -> Result<(f64, Vec3)> {
    let sample = field.evaluate(x, t)?;
    Ok(rho_and_current_of(&sample, field.constants()))
}

pub(crate) fn rho_and_current_of(sample: &WaveSample, k: &PhysicalConstants) -> (f64, Vec3) {
    let m2 = sample.modulus_sq();
    let rho = m2 * (-sample.ds_dt()) / (k.mass * k.c * k.c);
    let j = vec3::scale(&sample.spatial_grad_s(), m2 / k.mass);
    (rho, j)
}

/// Rectangular space-time lattice with inclusive end points on every axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimeGrid {
    pub lo: Vec3,
    pub hi: Vec3,
    pub n: [usize; 3],
    pub t_lo: f64,
    pub t_hi: f64,
    pub nt: usize,
}

impl SpaceTimeGrid {
    pub fn cube(half_width: f64, n: usize, t_hi: f64, nt: usize) -> Self {
        Self {
            lo: [-half_width; 3],
            hi: [half_width; 3],
            n: [n; 3],
            t_lo: 0.0,
            t_hi,
            nt,
        }
    }

    pub fn len(&self) -> usize {
        self.n.iter().product::<usize>() * self.nt
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn coord(lo: f64, hi: f64, n: usize, i: usize) -> f64 {
        if n <= 1 {
            lo
        } else {
            lo + (hi - lo) * i as f64 / (n - 1) as f64
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = (Vec3, f64)> + '_ {
        let [n0, n1, n2] = self.n;
        (0..self.nt).flat_map(move |it| {
            let t = Self::coord(self.t_lo, self.t_hi, self.nt, it);
            (0..n0).flat_map(move |i| {
                (0..n1).flat_map(move |j| {
                    (0..n2).map(move |l| {
                        (
                            [
                                Self::coord(self.lo[0], self.hi[0], n0, i),
                                Self::coord(self.lo[1], self.hi[1], n1, j),
                                Self::coord(self.lo[2], self.hi[2], n2, l),
                            ],
                            t,
                        )
                    })
                })
            })
        })
    }

    /// `n` points drawn uniformly from the grid's space-time box.
    pub fn random_nodes(&self, n: usize, seed: u64) -> Vec<(Vec3, f64)> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut u = |lo: f64, hi: f64| lo + (hi - lo) * rng.random::<f64>();
        (0..n)
            .map(|_| {
                let x = [u(self.lo[0], self.hi[0]), u(self.lo[1], self.hi[1]), u(self.lo[2], self.hi[2])];
                (x, u(self.t_lo, self.t_hi))
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub z0_residual_max: f64,
    pub kg_residual_max: f64,
    pub rho_min: f64,
    pub j_identity_residual_max: f64,
    pub admissible: bool,
}

/// Residuals of the phase constraint `∂S/∂t + c√(m²c² + ∇S·∇S) = 0`, of the
/// Klein-Gordon equation, of `ρ ≥ 0` and of `j·j − c²ρ² = −c²|φ|⁴`, as
/// maxima over every grid node.
pub fn check_admissibility(
    field: &WaveField,
    grid: &SpaceTimeGrid,
    tol: f64,
) -> Result<AdmissibilityReport> {
    if grid.is_empty() {
        return Err(Error::InvalidConfig("admissibility grid is empty".into()));
    }
    if !(tol >= 0.0) {
        return Err(Error::InvalidConfig(format!("tolerance must be >= 0, got {tol}")));
    }
    let k = field.constants();
    let mass_term = (k.rest_momentum() / k.hbar).powi(2);
    let mut report = AdmissibilityReport {
        z0_residual_max: 0.0,
        kg_residual_max: 0.0,
        rho_min: f64::INFINITY,
        j_identity_residual_max: 0.0,
        admissible: false,
    };
    for (x, t) in grid.nodes() {
        let sample = field.evaluate(&x, t)?;
        let root = k.shell_root(&sample.spatial_grad_s());
        let z0 = sample.ds_dt() + k.c * root;
        // j·j − c²ρ² + c²|φ|⁴ = (|φ|⁴/m²)(root − e)(root + e), e = −(∂S/∂t)/c
        let e = -sample.ds_dt() / k.c;
        let m2 = sample.modulus_sq();
        let j_identity = m2 * m2 / (k.mass * k.mass) * (root - e) * (root + e);
        let kg = (sample.wave_operator - sample.phi * mass_term).norm();
        let (rho, _) = rho_and_current_of(&sample, k);
        report.z0_residual_max = report.z0_residual_max.max(z0.abs());
        report.j_identity_residual_max = report.j_identity_residual_max.max(j_identity.abs());
        report.kg_residual_max = report.kg_residual_max.max(kg);
        report.rho_min = report.rho_min.min(rho);
    }
    report.admissible = report.z0_residual_max <= tol
        && report.rho_min >= -tol
        && report.j_identity_residual_max <= tol;
    Ok(report)
}
