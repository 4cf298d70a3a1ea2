//! Split-operator integration of `i∂tψ = [H0 + H̄(t)]ψ` on a periodic grid,
//! plus synthesis from and projection onto the Wannier-Stark ladder.
//!
//! The kinetic factor uses the Fourier symbol of the same finite-difference
//! stencil as [`crate::ws`], so ladder states are eigenstates of the engine's
//! `H0` up to splitting error.

use std::f64::consts::PI;
use std::io::{self, Write};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::couplings::ModulationSpec;
use crate::discrete::SpinorField;
use crate::error::{invalid, Error, Result};
use crate::ws::{kinetic_symbol, LatticeParams, Level, WsLadder};

/// Uniform periodic grid `x_j = −L + j·dx`, `j < 2·L·ppw`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridSpec {
    /// `L`, in wells.
    pub half_width: usize,
    pub points_per_well: usize,
}

impl GridSpec {
    pub fn new(half_width: usize, points_per_well: usize) -> Self {
        Self {
            half_width,
            points_per_well,
        }
    }

    pub fn len(&self) -> usize {
        2 * self.half_width * self.points_per_well
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.points_per_well as f64
    }

    pub fn x(&self, j: usize) -> f64 {
        -(self.half_width as f64) + j as f64 * self.dx()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.x(j)).collect()
    }

    /// Grid index of the centre of well `n`.
    pub fn well_index(&self, n: i64) -> i64 {
        (n + self.half_width as i64) * self.points_per_well as i64
    }
}

/// Wavefunction samples on a [`GridSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridWavefunction {
    pub grid: GridSpec,
    pub psi: Vec<Complex64>,
    pub t: f64,
}

impl GridWavefunction {
    pub fn zeros(grid: GridSpec) -> Self {
        Self {
            grid,
            psi: vec![Complex64::default(); grid.len()],
            t: 0.0,
        }
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(f64) -> Complex64) -> Self {
        Self {
            grid,
            psi: grid.points().into_iter().map(f).collect(),
            t: 0.0,
        }
    }

    /// `∫|ψ|² dx`.
    pub fn norm_sqr(&self) -> f64 {
        self.psi.iter().map(|z| z.norm_sqr()).sum::<f64>() * self.grid.dx()
    }

    pub fn normalize(&mut self) {
        let n = self.norm_sqr().sqrt();
        if n > 0.0 {
            self.psi.iter_mut().for_each(|z| *z /= n);
        }
    }

    pub fn density(&self) -> Vec<f64> {
        self.psi.iter().map(|z| z.norm_sqr()).collect()
    }

    /// Largest `|ψ|` at the first and last grid points.
    pub fn edge_amplitude(&self) -> f64 {
        self.psi[0].norm().max(self.psi[self.psi.len() - 1].norm())
    }

    /// `⟨f|ψ⟩` for a real state sampled on the ladder window and centred on well `n`.
    pub fn overlap_real(&self, state: &[f64], window_wells: usize, n: i64) -> Complex64 {
        let start = self.grid.well_index(n) - (window_wells * self.grid.points_per_well) as i64;
        let len = self.psi.len() as i64;
        let lo = (-start).max(0) as usize;
        let hi = ((len - start).min(state.len() as i64)).max(0) as usize;
        let mut acc = Complex64::default();
        for (j, &p) in state.iter().enumerate().take(hi).skip(lo) {
            acc += self.psi[(start + j as i64) as usize] * p;
        }
        acc * self.grid.dx()
    }

    /// `x Re ψ Im ψ |ψ|²` rows.
    pub fn write_rows<W: Write>(&self, mut out: W) -> io::Result<()> {
        for (j, z) in self.psi.iter().enumerate() {
            writeln!(out, "{:e}\t{:e}\t{:e}\t{:e}", self.grid.x(j), z.re, z.im, z.norm_sqr())?;
        }
        Ok(())
    }
}

/// Composition scheme of the split-step propagator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Splitting {
    /// Symmetric second-order splitting.
    #[default]
    Strang,
    /// Fourth-order triple-jump composition of Strang steps.
    Yoshida,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactConfig {
    pub dt: f64,
    pub splitting: Splitting,
    /// Multiply by a `sin²` ramp over the outer `absorber_fraction` of each side after every step.
    pub absorber: bool,
    pub absorber_fraction: f64,
}

impl ExactConfig {
    /// `steps_per_tb` steps per Bloch period.
    pub fn per_bloch_period(omega_b: f64, steps_per_tb: usize) -> Self {
        Self {
            dt: 2.0 * PI / omega_b / steps_per_tb as f64,
            splitting: Splitting::Strang,
            absorber: false,
            absorber_fraction: 0.05,
        }
    }

    pub fn with_splitting(mut self, splitting: Splitting) -> Self {
        self.splitting = splitting;
        self
    }

    pub fn with_absorber(mut self, on: bool) -> Self {
        self.absorber = on;
        self
    }
}

/// Default steps per Bloch period, enough to resolve `Δ + ω_B` twentyfold at `V1 = 6`.
pub const DEFAULT_STEPS_PER_TB: usize = 134;

struct Substep {
    tau: f64,
    kinetic: Vec<Complex64>,
    static_half: Vec<Complex64>,
}

pub struct ExactEngine {
    grid: GridSpec,
    spec: ModulationSpec,
    config: ExactConfig,
    substeps: Vec<Substep>,
    cos2: Vec<f64>,
    cos1: Vec<f64>,
    mask: Option<Vec<f64>>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch: Vec<Complex64>,
    mod_half: Vec<Complex64>,
}

impl std::fmt::Debug for ExactEngine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ExactEngine")
            .field("grid", &self.grid)
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

impl ExactEngine {
    /// Engine for `−V1 cos 2πx + F x + H̄(x, t)` on `grid`. Only the grid resolution of
    /// `lattice` is checked, so `V1 = 0` or `F = 0` are allowed here.
    pub fn new(lattice: &LatticeParams, spec: &ModulationSpec, grid: GridSpec, config: ExactConfig) -> Result<Self> {
        if grid.points_per_well != lattice.grid_points_per_well {
            return Err(invalid("grid", "points per well differ from the lattice parameters"));
        }
        if grid.half_width == 0 || grid.points_per_well < 2 {
            return Err(invalid("grid", "empty grid"));
        }
        if !(config.dt > 0.0) {
            return Err(invalid("dt", format!("must be positive, got {}", config.dt)));
        }
        spec.validate()?;
        let n = grid.len();
        let dx = grid.dx();
        let x = grid.points();
        let taus: Vec<f64> = match config.splitting {
            Splitting::Strang => vec![config.dt],
            Splitting::Yoshida => {
                let c = 2f64.powf(1.0 / 3.0);
                let w1 = 1.0 / (2.0 - c);
                let w0 = -c / (2.0 - c);
                vec![w1 * config.dt, w0 * config.dt, w1 * config.dt]
            }
        };
        let static_v: Vec<f64> = x
            .iter()
            .map(|&x| lattice.potential(x) + spec.vs_amp * (4.0 * PI * x).cos())
            .collect();
        let ks: Vec<f64> = (0..n)
            .map(|m| {
                let m = if m <= n / 2 { m as f64 } else { m as f64 - n as f64 };
                2.0 * PI * m / (n as f64 * dx)
            })
            .collect();
        let substeps = taus
            .iter()
            .map(|&tau| Substep {
                tau,
                kinetic: ks
                    .iter()
                    .map(|&k| Complex64::from_polar(1.0 / n as f64, -kinetic_symbol(k, dx) * tau))
                    .collect(),
                static_half: static_v
                    .iter()
                    .map(|&v| Complex64::from_polar(1.0, -0.5 * v * tau))
                    .collect(),
            })
            .collect();
        let period = 2 * grid.points_per_well;
        let cos2 = (0..period).map(|j| (2.0 * PI * x[j]).cos()).collect();
        let cos1 = (0..period).map(|j| (PI * x[j]).cos()).collect();
        let mask = config.absorber.then(|| {
            let width = (config.absorber_fraction * n as f64).max(1.0);
            (0..n)
                .map(|j| {
                    let d = j.min(n - 1 - j) as f64;
                    if d >= width {
                        1.0
                    } else {
                        (0.5 * PI * d / width).sin().powi(2)
                    }
                })
                .collect()
        });
        let mut planner = FftPlanner::new();
        Ok(Self {
            grid,
            spec: spec.clone(),
            config,
            substeps,
            cos2,
            cos1,
            mask,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
            scratch: vec![Complex64::default(); n],
            mod_half: vec![Complex64::default(); period],
        })
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn config(&self) -> ExactConfig {
        self.config
    }

    fn apply_potential(&mut self, psi: &mut [Complex64], sub: usize, t_mid: f64) {
        let (g1, g2) = self.spec.drive_factors(t_mid);
        let tau = self.substeps[sub].tau;
        for (j, m) in self.mod_half.iter_mut().enumerate() {
            *m = Complex64::from_polar(1.0, -0.5 * tau * (g1 * self.cos2[j] + g2 * self.cos1[j]));
        }
        let period = self.mod_half.len();
        let stat = &self.substeps[sub].static_half;
        for (chunk_i, chunk) in psi.chunks_mut(period).enumerate() {
            let base = chunk_i * period;
            for (j, z) in chunk.iter_mut().enumerate() {
                *z *= stat[base + j] * self.mod_half[j];
            }
        }
    }

    fn strang(&mut self, psi: &mut [Complex64], sub: usize, t0: f64) {
        let t_mid = t0 + 0.5 * self.substeps[sub].tau;
        self.apply_potential(psi, sub, t_mid);
        self.forward.process_with_scratch(psi, &mut self.scratch);
        for (z, k) in psi.iter_mut().zip(&self.substeps[sub].kinetic) {
            *z *= k;
        }
        self.inverse.process_with_scratch(psi, &mut self.scratch);
        self.apply_potential(psi, sub, t_mid);
    }

    /// Advance by one `dt`. Without an absorber a per-step norm change above
    /// `1e-3` is reported as [`Error::UnstableStep`].
    pub fn step(&mut self, psi: &mut GridWavefunction) -> Result<()> {
        if psi.grid != self.grid {
            return Err(invalid("psi", "wavefunction grid differs from engine grid"));
        }
        let before = if self.mask.is_none() { psi.norm_sqr() } else { 0.0 };
        let mut t = psi.t;
        for sub in 0..self.substeps.len() {
            self.strang(&mut psi.psi, sub, t);
            t += self.substeps[sub].tau;
        }
        psi.t += self.config.dt;
        if let Some(mask) = &self.mask {
            for (z, m) in psi.psi.iter_mut().zip(mask) {
                *z *= m;
            }
        } else {
            let change = (psi.norm_sqr() - before).abs();
            if !(change <= 1e-3) {
                return Err(Error::UnstableStep { t: psi.t, change });
            }
        }
        Ok(())
    }

    /// Integrate to `t_final`, calling `observe` at the start and every `stride` steps.
    pub fn evolve<F: FnMut(&GridWavefunction)>(
        &mut self,
        psi: &mut GridWavefunction,
        t_final: f64,
        stride: usize,
        mut observe: F,
    ) -> Result<()> {
        let stride = stride.max(1);
        let t0 = psi.t;
        let steps = ((t_final - t0) / self.config.dt).round().max(0.0) as usize;
        observe(psi);
        for s in 1..=steps {
            self.step(psi)?;
            psi.t = t0 + s as f64 * self.config.dt;
            if s % stride == 0 {
                observe(psi);
            }
        }
        Ok(())
    }
}

/// Evolve and keep a snapshot every `sample_every` time units (rounded to whole steps).
pub fn evolve_exact(
    psi: &GridWavefunction,
    params: &LatticeParams,
    spec: &ModulationSpec,
    t_final: f64,
    dt: f64,
    sample_every: f64,
) -> Result<Vec<GridWavefunction>> {
    let config = ExactConfig {
        dt,
        splitting: Splitting::Strang,
        absorber: false,
        absorber_fraction: 0.05,
    };
    let mut engine = ExactEngine::new(params, spec, psi.grid, config)?;
    let stride = (sample_every / dt).round().max(1.0) as usize;
    let mut out = Vec::new();
    let mut state = psi.clone();
    engine.evolve(&mut state, t_final, stride, |p| out.push(p.clone()))?;
    Ok(out)
}

/// `Ψ = Σ_n c_n e^{−iE_n^g t} φ_n^g + d_n e^{−iE_n^e t} φ_n^e`, normalized.
///
/// Every occupied site must have its well centre inside the grid; state
/// windows are clipped at the grid edges.
pub fn synthesize_from_spinor(field: &SpinorField, ladder: &WsLadder, grid: GridSpec) -> Result<GridWavefunction> {
    if grid.points_per_well != ladder.ppw() {
        return Err(invalid("grid", "points per well differ from the ladder"));
    }
    let limit = grid.half_width as i64 - 1;
    let mut out = GridWavefunction::zeros(grid);
    out.t = field.t;
    let w = ladder.window_wells * ladder.ppw();
    let len = out.psi.len() as i64;
    for (i, n) in field.sites().enumerate() {
        for (amp, level) in [(field.c[i], Level::Ground), (field.d[i], Level::Excited)] {
            if amp.norm_sqr() == 0.0 {
                continue;
            }
            if n.abs() > limit {
                return Err(Error::OutOfDomain { site: n, limit });
            }
            let a = amp * Complex64::from_polar(1.0, -ladder.energy(level, n) * field.t);
            let start = grid.well_index(n) - w as i64;
            for (j, &p) in ladder.state(level).iter().enumerate() {
                let g = start + j as i64;
                if (0..len).contains(&g) {
                    out.psi[g as usize] += a * p;
                }
            }
        }
    }
    out.normalize();
    Ok(out)
}

/// Amplitudes recovered from a grid state, with the weight left outside the ladder.
#[derive(Debug, Clone, PartialEq)]
pub struct Projection {
    pub field: SpinorField,
    /// `1 − Σ(|c_n|² + |d_n|²)`, so it also counts weight lost to the absorber.
    pub leakage: f64,
}

/// `c_n = ⟨φ_n^g|Ψ⟩ e^{iE_n^g t}`, `d_n = ⟨φ_n^e|Ψ⟩ e^{iE_n^e t}` on sites `first..first+len`.
pub fn project_to_ws(psi: &GridWavefunction, ladder: &WsLadder, first: i64, len: usize) -> Result<Projection> {
    if psi.grid.points_per_well != ladder.ppw() {
        return Err(invalid("grid", "points per well differ from the ladder"));
    }
    let mut field = SpinorField::zeros(first, len)?;
    field.t = psi.t;
    let limit = psi.grid.half_width as i64;
    for i in 0..len {
        let n = first + i as i64;
        if n.abs() >= limit {
            continue;
        }
        for level in Level::BOTH {
            let ov = psi.overlap_real(ladder.state(level), ladder.window_wells, n)
                * Complex64::from_polar(1.0, ladder.energy(level, n) * psi.t);
            match level {
                Level::Ground => field.c[i] = ov,
                Level::Excited => field.d[i] = ov,
            }
        }
    }
    let leakage = 1.0 - field.norm_sqr();
    Ok(Projection { field, leakage })
}

/// Reference energies as seen by a given propagator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub e_g: f64,
    pub e_e: f64,
}

impl Calibration {
    pub fn delta(&self) -> f64 {
        self.e_e - self.e_g
    }
}

/// Measure the quasi-energies of `φ_0^g` and `φ_0^e` under the undriven engine.
///
/// Splitting error shifts them by `O(dt²)` (about 1e-2 at the default step),
/// which matters when drives must hit `Δ` resonantly. Each state is propagated
/// for `periods` Bloch periods on a small absorbing grid and the phase of
/// `⟨φ|ψ(t)⟩` is fitted linearly.
pub fn calibrate(ladder: &WsLadder, config: ExactConfig, periods: usize) -> Result<Calibration> {
    let grid = GridSpec::new(ladder.window_wells + 8, ladder.ppw());
    let spec = ModulationSpec::new(ladder.omega_b, ladder.delta);
    let config = ExactConfig {
        absorber: true,
        ..config
    };
    let t_final = periods as f64 * 2.0 * PI / ladder.omega_b;
    let mut energies = [0.0; 2];
    for (slot, level) in Level::BOTH.into_iter().enumerate() {
        let mut field = SpinorField::zeros(0, 2)?;
        match level {
            Level::Ground => field.c[0] = Complex64::new(1.0, 0.0),
            Level::Excited => field.d[0] = Complex64::new(1.0, 0.0),
        }
        let mut psi = synthesize_from_spinor(&field, ladder, grid)?;
        let mut engine = ExactEngine::new(&ladder.params, &spec, grid, config)?;
        let state = ladder.state(level);
        let mut samples: Vec<(f64, f64)> = Vec::new();
        let mut last = 0.0;
        let mut unwrapped = 0.0;
        engine.evolve(&mut psi, t_final, 1, |p| {
            let ph = p.overlap_real(state, ladder.window_wells, 0).arg();
            if samples.is_empty() {
                unwrapped = ph;
            } else {
                let mut d = ph - last;
                d -= 2.0 * PI * (d / (2.0 * PI)).round();
                unwrapped += d;
            }
            last = ph;
            samples.push((p.t, unwrapped));
        })?;
        let n = samples.len() as f64;
        let (st, sp) = samples.iter().fold((0.0, 0.0), |(a, b), (t, p)| (a + t, b + p));
        let (mt, mp) = (st / n, sp / n);
        let (num, den) = samples.iter().fold((0.0, 0.0), |(a, b), (t, p)| {
            (a + (t - mt) * (p - mp), b + (t - mt) * (t - mt))
        });
        energies[slot] = -num / den;
    }
    Ok(Calibration {
        e_g: energies[0],
        e_e: energies[1],
    })
}
