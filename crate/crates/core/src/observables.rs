//! Mean position, drift speeds, Zitterbewegung fits and unit conversion.

use std::f64::consts::PI;

use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt};
use nalgebra::{DMatrix, DVector, Dyn, Owned, Vector5, U5};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::discrete::{ModelKind, SpinorField, WavepacketInit};
use crate::error::{invalid, Error, Result};
use crate::exact::GridWavefunction;

/// States with a well-defined `⟨x⟩` in lattice steps.
pub trait MeanPosition {
    fn mean_position(&self) -> f64;
}

impl MeanPosition for SpinorField {
    /// `Σ n (|c_n|² + |d_n|²) / Σ (|c_n|² + |d_n|²)`.
    fn mean_position(&self) -> f64 {
        let (num, den) = self
            .sites()
            .zip(self.density())
            .fold((0.0, 0.0), |(a, b), (n, p)| (a + n as f64 * p, b + p));
        if den == 0.0 {
            0.0
        } else {
            num / den
        }
    }
}

impl MeanPosition for GridWavefunction {
    /// `∫ x |ψ|² dx / ∫ |ψ|² dx`.
    fn mean_position(&self) -> f64 {
        let (num, den) = self.psi.iter().enumerate().fold((0.0, 0.0), |(a, b), (j, z)| {
            (a + self.grid.x(j) * z.norm_sqr(), b + z.norm_sqr())
        });
        if den == 0.0 {
            0.0
        } else {
            num / den
        }
    }
}

pub fn mean_position<S: MeanPosition>(state: &S) -> f64 {
    state.mean_position()
}

/// Coherence factor that scales the Zitterbewegung amplitude:
/// `a₊* a₋` for spinor-2 models and `a₊* b₋ + a₋* b₊` for spinor-4 models.
pub fn zb_presence(init: &WavepacketInit, kind: ModelKind) -> Complex64 {
    match kind {
        ModelKind::Spinor4Dirac | ModelKind::Spinor4Weyl => {
            init.a_plus.conj() * init.b_minus + init.a_minus.conj() * init.b_plus
        }
        ModelKind::Spinor2 | ModelKind::General => init.a_plus.conj() * init.a_minus,
    }
}

/// Coarse-grained density on integer sites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensitySnapshot {
    pub t: f64,
    pub x: Vec<f64>,
    pub rho: Vec<f64>,
}

impl DensitySnapshot {
    /// Site populations averaged over neighbouring pairs, which removes the
    /// even/odd modulation of two-sub-lattice packets.
    pub fn from_field(field: &SpinorField) -> Self {
        let rho = field.density();
        let x = field.sites().map(|n| n as f64).collect();
        Self {
            t: field.t,
            x,
            rho: pair_average(&rho),
        }
    }

    /// Probability per well, then pair-averaged like [`Self::from_field`].
    pub fn from_grid(psi: &GridWavefunction) -> Self {
        let ppw = psi.grid.points_per_well;
        let wells = 2 * psi.grid.half_width;
        let dx = psi.grid.dx();
        let half = ppw / 2;
        let mut rho = vec![0.0; wells];
        for (j, z) in psi.psi.iter().enumerate() {
            // well n covers centre ± half a step
            let w = ((j + half) / ppw).min(wells - 1);
            rho[w] += z.norm_sqr() * dx;
        }
        let x = (0..wells).map(|w| w as f64 - psi.grid.half_width as f64).collect();
        Self {
            t: psi.t,
            x,
            rho: pair_average(&rho),
        }
    }

    pub fn centroid(&self) -> f64 {
        let (a, b) = self
            .x
            .iter()
            .zip(&self.rho)
            .fold((0.0, 0.0), |(a, b), (x, r)| (a + x * r, b + r));
        a / b
    }

    /// First moments of the `x < 0` and `x > 0` halves; `x = 0` is shared equally.
    pub fn split_centroids(&self) -> (f64, f64) {
        let mut l = (0.0, 0.0);
        let mut r = (0.0, 0.0);
        for (&x, &p) in self.x.iter().zip(&self.rho) {
            let (wl, wr) = if x < 0.0 {
                (1.0, 0.0)
            } else if x > 0.0 {
                (0.0, 1.0)
            } else {
                (0.5, 0.5)
            };
            l = (l.0 + wl * x * p, l.1 + wl * p);
            r = (r.0 + wr * x * p, r.1 + wr * p);
        }
        (l.0 / l.1, r.0 / r.1)
    }

    /// Density at the split point over the smaller of the two side maxima.
    pub fn dip_ratio(&self) -> f64 {
        let mut left: f64 = 0.0;
        let mut right: f64 = 0.0;
        let mut centre = 0.0;
        let mut best = f64::INFINITY;
        for (&x, &p) in self.x.iter().zip(&self.rho) {
            if x < 0.0 {
                left = left.max(p);
            } else if x > 0.0 {
                right = right.max(p);
            }
            if x.abs() < best {
                best = x.abs();
                centre = p;
            }
        }
        let peak = left.min(right);
        if peak == 0.0 {
            f64::INFINITY
        } else {
            centre / peak
        }
    }

    pub fn is_bimodal(&self) -> bool {
        self.dip_ratio() < 0.5
    }
}

fn pair_average(rho: &[f64]) -> Vec<f64> {
    (0..rho.len())
        .map(|i| {
            let next = rho.get(i + 1).copied().unwrap_or(rho[i]);
            let prev = if i > 0 { rho[i - 1] } else { rho[i] };
            0.25 * prev + 0.5 * rho[i] + 0.25 * next
        })
        .collect()
}

/// Signed speeds `(left, right)` of the two packets between two snapshots.
///
/// The later snapshot must be bimodal; if the earlier one is not, both packets
/// are taken to start from its overall centroid.
pub fn drift_velocity(early: &DensitySnapshot, late: &DensitySnapshot) -> Result<(f64, f64)> {
    if !late.is_bimodal() {
        return Err(Error::NotBimodal);
    }
    let dt = late.t - early.t;
    if !(dt > 0.0) {
        return Err(invalid("snapshots", "later snapshot must have a larger time"));
    }
    let (l0, r0) = if early.is_bimodal() {
        early.split_centroids()
    } else {
        let c = early.centroid();
        (c, c)
    };
    let (l1, r1) = late.split_centroids();
    Ok(((l1 - l0) / dt, (r1 - r0) / dt))
}

/// Inputs that seed the Zitterbewegung fit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZbGuess {
    pub e0: f64,
    pub omega: f64,
    pub sigma: f64,
    pub omega_b: f64,
}

impl ZbGuess {
    /// `D = 4Ω²/(E0 σ²)`.
    pub fn diffusion(&self) -> f64 {
        4.0 * self.omega * self.omega / (self.e0 * self.sigma * self.sigma)
    }
}

/// Least-squares fit of `B + A (1 + D²t²)^{−1/4} cos(ωt + φ + ½ atan(Dt))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZbFit {
    pub amplitude: f64,
    /// `2π/ω` in Bloch periods.
    pub period: f64,
    pub angular_frequency: f64,
    pub damping_d: f64,
    pub phase: f64,
    pub offset: f64,
    pub r_squared: f64,
}

impl ZbFit {
    /// Amplitude envelope `(1 + D²t²)^{−1/4}`.
    pub fn envelope(&self, t: f64) -> f64 {
        (1.0 + (self.damping_d * t).powi(2)).powf(-0.25)
    }

    /// Squared envelope `(1 + D²t²)^{−1/2}`.
    pub fn envelope_squared(&self, t: f64) -> f64 {
        self.envelope(t).powi(2)
    }
}

/// Amplitudes below this many lattice steps count as no oscillation.
pub const OSCILLATION_FLOOR: f64 = 1e-3;

struct ZbProblem<'a> {
    t: &'a [f64],
    x: &'a [f64],
    p: Vector5<f64>,
}

impl ZbProblem<'_> {
    fn eval(p: &Vector5<f64>, t: f64) -> (f64, [f64; 5]) {
        let (b, a, w, ph, d) = (p[0], p[1], p[2], p[3], p[4]);
        let s = 1.0 + d * d * t * t;
        let env = s.powf(-0.25);
        let denv = -0.5 * d * t * t * s.powf(-1.25);
        // phase of the 1/sqrt(1 − iDt) prefactor
        let drift = 0.5 * (d * t).atan();
        let ddrift = 0.5 * t / s;
        let (sn, cs) = (w * t + ph + drift).sin_cos();
        (
            b + a * env * cs,
            [
                1.0,
                env * cs,
                -a * env * sn * t,
                -a * env * sn,
                a * cs * denv - a * env * sn * ddrift,
            ],
        )
    }
}

impl LeastSquaresProblem<f64, Dyn, U5> for ZbProblem<'_> {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, U5>;
    type ParameterStorage = Owned<f64, U5>;

    fn set_params(&mut self, p: &Vector5<f64>) {
        self.p = *p;
    }

    fn params(&self) -> Vector5<f64> {
        self.p
    }

    fn residuals(&self) -> Option<DVector<f64>> {
        Some(DVector::from_iterator(
            self.t.len(),
            self.t.iter().zip(self.x).map(|(&t, &x)| Self::eval(&self.p, t).0 - x),
        ))
    }

    fn jacobian(&self) -> Option<nalgebra::OMatrix<f64, Dyn, U5>> {
        let mut j = nalgebra::OMatrix::<f64, Dyn, U5>::zeros(self.t.len());
        for (i, &t) in self.t.iter().enumerate() {
            let (_, g) = Self::eval(&self.p, t);
            for k in 0..5 {
                j[(i, k)] = g[k];
            }
        }
        Some(j)
    }
}

/// Linear least squares of `B + B1 (t − t̄) + a cos ωt + b sin ωt`; returns `(a, b, residual rms)`.
fn sinusoid_lsq(times: &[f64], xs: &[f64], omega: f64) -> (f64, f64, f64) {
    let n = times.len();
    let tm = times.iter().sum::<f64>() / n as f64;
    let m = DMatrix::from_fn(n, 4, |i, k| {
        let t = times[i];
        match k {
            0 => 1.0,
            1 => t - tm,
            2 => (omega * t).cos(),
            _ => (omega * t).sin(),
        }
    });
    let y = DVector::from_column_slice(xs);
    let svd = m.clone().svd(true, true);
    let c = svd.solve(&y, 1e-12).unwrap_or_else(|_| DVector::zeros(4));
    let r = &m * &c - y;
    (c[2], c[3], (r.norm_squared() / n as f64).sqrt())
}

/// Amplitude of the best sinusoid at `omega` (with offset and linear trend) over a window.
pub fn local_amplitude(times: &[f64], xs: &[f64], omega: f64, t_lo: f64, t_hi: f64) -> f64 {
    let (t, x): (Vec<f64>, Vec<f64>) = times
        .iter()
        .zip(xs)
        .filter(|(t, _)| **t >= t_lo - 1e-9 && **t <= t_hi + 1e-9)
        .map(|(t, x)| (*t, *x))
        .unzip();
    if t.len() < 5 {
        return 0.0;
    }
    let (a, b, _) = sinusoid_lsq(&t, &x, omega);
    a.hypot(b)
}

/// Amplitude of the best sinusoid at `omega` over the whole series.
pub fn oscillation_amplitude(times: &[f64], xs: &[f64], omega: f64) -> f64 {
    let (a, b, _) = sinusoid_lsq(times, xs, omega);
    a.hypot(b)
}

/// Fit the damped Zitterbewegung form to a `⟨x⟩(t)` series.
///
/// The frequency is seeded by the strongest sinusoid within ±30% of `2E0`,
/// the damping by `4Ω²/(E0σ²)`. The series should cover at least three periods.
pub fn fit_zitterbewegung(times: &[f64], xs: &[f64], guess: ZbGuess) -> Result<ZbFit> {
    if times.len() != xs.len() || times.len() < 8 {
        return Err(invalid("series", "need at least 8 samples of equal length"));
    }
    if !(guess.e0 > 0.0) {
        return Err(invalid("e0", "must be positive"));
    }
    let w0 = 2.0 * guess.e0;
    let span = times[times.len() - 1] - times[0];
    if span * w0 < 2.0 * PI * 2.5 {
        return Err(invalid("series", "covers fewer than three oscillation periods"));
    }
    let mut best = (0.0, w0, 0.0, 0.0, 0.0);
    for i in 0..=240 {
        let w = w0 * (0.7 + 0.6 * i as f64 / 240.0);
        let (a, b, rms) = sinusoid_lsq(times, xs, w);
        let amp = a.hypot(b);
        if amp > best.0 {
            best = (amp, w, a, b, rms);
        }
    }
    let (peak, w, a, b, _) = best;
    let floor = OSCILLATION_FLOOR;
    if peak < floor {
        return Err(Error::NoOscillation { peak, floor });
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let start = Vector5::new(mean, peak, w, (-b).atan2(a), guess.diffusion().abs());
    let problem = ZbProblem {
        t: times,
        x: xs,
        p: start,
    };
    let (problem, report) = LevenbergMarquardt::new().with_patience(400).minimize(problem);
    if !report.termination.was_successful() {
        return Err(Error::FitFailed(format!("{:?}", report.termination)));
    }
    let mut p = problem.p;
    if p[1] < 0.0 {
        p[1] = -p[1];
        p[3] += PI;
    }
    let ss_res: f64 = times
        .iter()
        .zip(xs)
        .map(|(&t, &x)| (ZbProblem::eval(&p, t).0 - x).powi(2))
        .sum();
    let ss_tot: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
    let r2 = if ss_tot > 0.0 {
        (1.0 - ss_res / ss_tot).clamp(0.0, 1.0)
    } else {
        1.0
    };
    let omega = p[2].abs();
    Ok(ZbFit {
        amplitude: p[1],
        period: (2.0 * PI / omega) / (2.0 * PI / guess.omega_b),
        angular_frequency: omega,
        damping_d: p[4].abs(),
        phase: p[3].rem_euclid(2.0 * PI),
        offset: p[0],
        r_squared: r2,
    })
}

/// Reduced Planck constant, J·s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Atomic mass unit, kg.
pub const ATOMIC_MASS_UNIT: f64 = 1.660_539_066_60e-27;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub mass_kg: f64,
}

impl Atom {
    pub const CESIUM_133: Atom = Atom {
        mass_kg: 132.905_451_933 * ATOMIC_MASS_UNIT,
    };

    /// Recoil velocity `ħ k_L / M` with `k_L = 2π/λ_L`.
    pub fn recoil_velocity(&self, lambda_l: f64) -> f64 {
        HBAR * 2.0 * PI / (self.mass_kg * lambda_l)
    }
}

/// Effective Dirac mass and light speed of the lattice model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EffectiveConstants {
    /// `E0 / 4Ω²`, lattice units.
    pub m_bar: f64,
    /// `2|Ω|`, lattice steps per `ħ/E_R`.
    pub c_bar: f64,
    /// `(E0 / 2π²Ω²) M`, in units of the atom mass.
    pub m_bar_atom_masses: f64,
    /// `|Ω| 2π²ħ/(M λ_L)`, m/s.
    pub c_bar_si: f64,
    /// `c̄` over the recoil velocity; equals `π|Ω|` independently of `λ_L`.
    pub c_bar_recoil: f64,
}

pub fn effective_constants(e0: f64, omega: f64, atom: Atom, lambda_l: f64) -> Result<EffectiveConstants> {
    if omega == 0.0 {
        return Err(invalid("omega", "must be nonzero"));
    }
    if !(lambda_l > 0.0) {
        return Err(invalid("lambda_l", "must be positive"));
    }
    let w = omega.abs();
    let c_bar_si = w * 2.0 * PI * PI * HBAR / (atom.mass_kg * lambda_l);
    Ok(EffectiveConstants {
        m_bar: e0 / (4.0 * omega * omega),
        c_bar: 2.0 * w,
        m_bar_atom_masses: e0 / (2.0 * PI * PI * omega * omega),
        c_bar_si,
        c_bar_recoil: c_bar_si / atom.recoil_velocity(lambda_l),
    })
}
