//! Tight-binding dynamics of the site amplitudes `c_n` (ground ladder) and `d_n`
//! (excited ladder) in the frame co-rotating with the ladder energies.

use std::f64::consts::PI;
use std::io::{self, Write};
use std::sync::Arc;

use nalgebra::{Matrix2, Vector2};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::couplings::{Channel, CouplingTable, Parity};
use crate::error::{invalid, Error, Result};

/// Amplitude above which a boundary site counts as reached.
pub const EDGE_THRESHOLD: f64 = 1e-6;

/// Site amplitudes on `first..first + len`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinorField {
    pub first: i64,
    pub c: Vec<Complex64>,
    pub d: Vec<Complex64>,
    pub t: f64,
}

impl SpinorField {
    /// All-zero field; `first` and `len` must be even so both sub-lattices have `len/2` sites.
    pub fn zeros(first: i64, len: usize) -> Result<Self> {
        if first % 2 != 0 || !len.is_multiple_of(2) || len == 0 {
            return Err(invalid(
                "lattice",
                format!("first site and length must be even and nonzero, got {first} and {len}"),
            ));
        }
        Ok(Self {
            first,
            c: vec![Complex64::default(); len],
            d: vec![Complex64::default(); len],
            t: 0.0,
        })
    }

    /// Centred lattice `−len/2 .. len/2`.
    pub fn centered(len: usize) -> Result<Self> {
        Self::zeros(-(len as i64 / 2), len)
    }

    pub fn len(&self) -> usize {
        self.c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.c.is_empty()
    }

    pub fn last(&self) -> i64 {
        self.first + self.len() as i64 - 1
    }

    pub fn sites(&self) -> impl Iterator<Item = i64> + '_ {
        (0..self.len()).map(move |i| self.first + i as i64)
    }

    pub fn index(&self, n: i64) -> Option<usize> {
        let i = n - self.first;
        (0..self.len() as i64).contains(&i).then_some(i as usize)
    }

    pub fn c_at(&self, n: i64) -> Complex64 {
        self.index(n).map(|i| self.c[i]).unwrap_or_default()
    }

    pub fn d_at(&self, n: i64) -> Complex64 {
        self.index(n).map(|i| self.d[i]).unwrap_or_default()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.c.iter().chain(&self.d).map(|z| z.norm_sqr()).sum()
    }

    /// Site populations `|c_n|² + |d_n|²`.
    pub fn density(&self) -> Vec<f64> {
        self.c
            .iter()
            .zip(&self.d)
            .map(|(c, d)| c.norm_sqr() + d.norm_sqr())
            .collect()
    }

    pub fn boundary_amplitude(&self) -> f64 {
        let n = self.len() - 1;
        [self.c[0], self.c[n], self.d[0], self.d[n]]
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// Largest amplitude difference to another field on the same lattice.
    pub fn max_diff(&self, other: &SpinorField) -> f64 {
        self.c
            .iter()
            .zip(&other.c)
            .chain(self.d.iter().zip(&other.d))
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// `t n Re c Im c Re d Im d` rows for sites in `range`.
    pub fn write_rows<W: Write>(&self, mut out: W, range: Option<(i64, i64)>) -> io::Result<()> {
        let (lo, hi) = range.unwrap_or((self.first, self.last()));
        for n in lo.max(self.first)..=hi.min(self.last()) {
            let (c, d) = (self.c_at(n), self.d_at(n));
            writeln!(out, "{:e}\t{n}\t{:e}\t{:e}\t{:e}\t{:e}", self.t, c.re, c.im, d.re, d.im)?;
        }
        Ok(())
    }
}

/// Gaussian spinor packet `G(n) ∝ e^{−i n k0} e^{−n²/σ²}`.
///
/// `a_±` weight `c` on even/odd sites and `b_±` weight `d` on even/odd sites.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WavepacketInit {
    pub a_plus: Complex64,
    pub a_minus: Complex64,
    pub b_plus: Complex64,
    pub b_minus: Complex64,
    pub k0: f64,
    pub sigma: f64,
}

impl WavepacketInit {
    pub fn spinor2(a_plus: Complex64, a_minus: Complex64, k0: f64, sigma: f64) -> Self {
        Self {
            a_plus,
            a_minus,
            b_plus: Complex64::default(),
            b_minus: Complex64::default(),
            k0,
            sigma,
        }
    }

    pub fn spinor4(weights: [Complex64; 4], k0: f64, sigma: f64) -> Self {
        Self {
            a_plus: weights[0],
            a_minus: weights[1],
            b_plus: weights[2],
            b_minus: weights[3],
            k0,
            sigma,
        }
    }

    pub fn weights(&self) -> [Complex64; 4] {
        [self.a_plus, self.a_minus, self.b_plus, self.b_minus]
    }

    pub fn validate(&self) -> Result<()> {
        let w: f64 = self.weights().iter().map(|z| z.norm_sqr()).sum();
        if (w - 1.0).abs() > 1e-9 {
            return Err(invalid("packet weights", format!("must have unit norm, got {w}")));
        }
        if !(self.sigma >= 1.0) {
            return Err(invalid(
                "sigma",
                format!("must be at least one site, got {}", self.sigma),
            ));
        }
        Ok(())
    }
}

/// Sample the packet on a centred lattice of `n_sites` sites and normalize.
pub fn init_wavepacket(init: &WavepacketInit, n_sites: usize) -> Result<SpinorField> {
    init.validate()?;
    if 6.0 * init.sigma > n_sites as f64 {
        return Err(Error::PacketTooWide {
            sigma: init.sigma,
            sites: n_sites,
        });
    }
    let mut field = SpinorField::centered(n_sites)?;
    for i in 0..n_sites {
        let n = field.first + i as i64;
        let x = n as f64;
        let g = Complex64::from_polar((-x * x / (init.sigma * init.sigma)).exp(), -x * init.k0);
        let (a, b) = if n.rem_euclid(2) == 0 {
            (init.a_plus, init.b_plus)
        } else {
            (init.a_minus, init.b_minus)
        };
        field.c[i] = a * g;
        field.d[i] = b * g;
    }
    let norm = field.norm_sqr().sqrt();
    field.c.iter_mut().chain(field.d.iter_mut()).for_each(|z| *z /= norm);
    Ok(field)
}

/// Which reduction of the compiled table drives the amplitudes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// Every compiled channel.
    General,
    /// Ground ladder only; `d` stays zero.
    Spinor2,
    /// Both ladders, common on-site shift removed.
    Spinor4Dirac,
    /// As `Spinor4Dirac`; the name records the intended representation.
    Spinor4Weyl,
}

impl ModelKind {
    pub fn name(self) -> &'static str {
        match self {
            ModelKind::General => "general",
            ModelKind::Spinor2 => "spinor2",
            ModelKind::Spinor4Dirac => "spinor4-dirac",
            ModelKind::Spinor4Weyl => "spinor4-weyl",
        }
    }

    pub fn is_spinor4(self) -> bool {
        matches!(self, ModelKind::Spinor4Dirac | ModelKind::Spinor4Weyl)
    }
}

/// Coupling table reduced to what a model uses.
fn comps(f: &SpinorField, level: usize) -> &[Complex64] {
    if level == 0 {
        &f.c
    } else {
        &f.d
    }
}

pub fn reduce_table(table: &CouplingTable, kind: ModelKind) -> CouplingTable {
    match kind {
        ModelKind::General => table.clone(),
        ModelKind::Spinor2 => {
            let mut t = CouplingTable::zero(table.omega_b, table.delta);
            for p in [Parity::Even, Parity::Odd] {
                for r in -1..=1 {
                    t.set(p, r, Channel::GG, table.get(p, r, Channel::GG));
                }
            }
            t
        }
        ModelKind::Spinor4Dirac | ModelKind::Spinor4Weyl => table.without_diagonal_shift(table.mean_diagonal()),
    }
}

/// Fixed-step RK4 integrator for one reduced model.
#[derive(Debug, Clone)]
pub struct DiscreteModel {
    pub kind: ModelKind,
    table: CouplingTable,
    // [parity][channel][r + 1]
    coeff: [[[Complex64; 3]; 4]; 2],
    check_edges: bool,
}

impl DiscreteModel {
    pub fn new(table: &CouplingTable, kind: ModelKind) -> Self {
        let table = reduce_table(table, kind);
        let mut coeff = [[[Complex64::default(); 3]; 4]; 2];
        for (pi, p) in [Parity::Even, Parity::Odd].into_iter().enumerate() {
            for (ci, ch) in Channel::ALL.into_iter().enumerate() {
                for r in -1..=1 {
                    coeff[pi][ci][(r + 1) as usize] = table.get(p, r, ch);
                }
            }
        }
        Self {
            kind,
            table,
            coeff,
            check_edges: true,
        }
    }

    /// Disable the [`Error::EdgeLeak`] guard, e.g. for plane-wave tests.
    pub fn without_edge_check(mut self) -> Self {
        self.check_edges = false;
        self
    }

    pub fn table(&self) -> &CouplingTable {
        &self.table
    }

    /// Largest step allowed by the `dt·max|T| ≤ 0.05` margin.
    pub fn max_dt(&self) -> f64 {
        let m = self.table.max_abs();
        if m == 0.0 {
            f64::INFINITY
        } else {
            0.05 / m
        }
    }

    fn rhs(&self, first: i64, c: &[Complex64], d: &[Complex64], dc: &mut [Complex64], dd: &mut [Complex64]) {
        let len = c.len();
        let minus_i = Complex64::new(0.0, -1.0);
        for i in 0..len {
            let p = ((first + i as i64).rem_euclid(2)) as usize;
            let k = &self.coeff[p];
            let mut sc = Complex64::default();
            let mut sd = Complex64::default();
            for r in 0..3 {
                let j = i as i64 + r as i64 - 1;
                if j < 0 || j >= len as i64 {
                    continue;
                }
                let j = j as usize;
                sc += k[0][r] * c[j] + k[1][r] * d[j];
                sd += k[2][r] * c[j] + k[3][r] * d[j];
            }
            dc[i] = minus_i * sc;
            dd[i] = minus_i * sd;
        }
    }

    /// One RK4 step of length `dt`.
    pub fn step(&self, field: &mut SpinorField, dt: f64) -> Result<()> {
        if dt > self.max_dt() * (1.0 + 1e-12) {
            return Err(invalid(
                "dt",
                format!("{dt} exceeds stability margin {}", self.max_dt()),
            ));
        }
        let n = field.len();
        let zero = Complex64::default();
        let mut k = [
            [vec![zero; n], vec![zero; n]],
            [vec![zero; n], vec![zero; n]],
            [vec![zero; n], vec![zero; n]],
            [vec![zero; n], vec![zero; n]],
        ];
        let mut tc = vec![zero; n];
        let mut td = vec![zero; n];
        let weights = [0.5, 0.5, 1.0];
        {
            let [kc, kd] = &mut k[0];
            self.rhs(field.first, &field.c, &field.d, kc, kd);
        }
        for s in 0..3 {
            let h = weights[s] * dt;
            for i in 0..n {
                tc[i] = field.c[i] + k[s][0][i] * h;
                td[i] = field.d[i] + k[s][1][i] * h;
            }
            let [kc, kd] = &mut k[s + 1];
            self.rhs(field.first, &tc, &td, kc, kd);
        }
        for i in 0..n {
            field.c[i] += (k[0][0][i] + 2.0 * k[1][0][i] + 2.0 * k[2][0][i] + k[3][0][i]) * (dt / 6.0);
            field.d[i] += (k[0][1][i] + 2.0 * k[1][1][i] + 2.0 * k[2][1][i] + k[3][1][i]) * (dt / 6.0);
        }
        field.t += dt;
        if self.check_edges {
            let edge = field.boundary_amplitude();
            if edge > EDGE_THRESHOLD {
                return Err(Error::EdgeLeak {
                    t: field.t,
                    amplitude: edge,
                });
            }
        }
        Ok(())
    }

    /// Integrate to `t_final`, calling `observe` at `t = 0` and after every
    /// `stride` steps. The step count is `(t_final − t) / dt` rounded, so pick a
    /// `dt` that divides the span.
    pub fn evolve<F: FnMut(&SpinorField)>(
        &self,
        field: &mut SpinorField,
        t_final: f64,
        dt: f64,
        stride: usize,
        mut observe: F,
    ) -> Result<()> {
        let stride = stride.max(1);
        let steps = ((t_final - field.t) / dt).round().max(0.0) as usize;
        let t0 = field.t;
        observe(field);
        for s in 1..=steps {
            self.step(field, dt)?;
            // keep the clock exact rather than accumulated
            field.t = t0 + s as f64 * dt;
            if s % stride == 0 {
                observe(field);
            }
        }
        Ok(())
    }
}

/// Advance a copy of `field` by one step of model `kind`.
pub fn step_discrete(field: &SpinorField, table: &CouplingTable, kind: ModelKind, dt: f64) -> Result<SpinorField> {
    let mut out = field.clone();
    DiscreteModel::new(table, kind).step(&mut out, dt)?;
    Ok(out)
}

/// Sub-lattice Fourier components of a field.
///
/// `plus(k) = Σ_m e^{2imk} x_{2m}` and `minus(k) = Σ_m e^{i(2m+1)k} x_{2m+1}` for
/// `x ∈ {c, d}`, on `M = len/2` points `k = πj/M` in `(−π/2, π/2]`, sorted ascending.
/// Both components have period `π` in `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct KSpinor {
    pub first: i64,
    pub k: Vec<f64>,
    pub c_plus: Vec<Complex64>,
    pub c_minus: Vec<Complex64>,
    pub d_plus: Vec<Complex64>,
    pub d_minus: Vec<Complex64>,
    pub t: f64,
}

impl KSpinor {
    /// `(1/M) Σ_k (|plus|² + |minus|²)`, equal to the site-space norm.
    pub fn norm_sqr(&self) -> f64 {
        let m = self.k.len() as f64;
        self.c_plus
            .iter()
            .chain(&self.c_minus)
            .chain(&self.d_plus)
            .chain(&self.d_minus)
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            / m
    }
}

fn k_indices(m: usize) -> Vec<i64> {
    let lo = -((m as i64 + 1) / 2) + 1;
    (lo..lo + m as i64).collect()
}

struct SublatticeFft {
    m: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl SublatticeFft {
    fn new(m: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            m,
            forward: planner.plan_fft_forward(m),
            inverse: planner.plan_fft_inverse(m),
        }
    }

    /// `Σ_i e^{2πi j (m0 + i)/M} x_i` for the sorted `j` list.
    fn analyze(&self, x: Vec<Complex64>, m0: i64, js: &[i64]) -> Vec<Complex64> {
        let mut buf = x;
        self.inverse.process(&mut buf);
        js.iter()
            .map(|&j| {
                let phase = Complex64::from_polar(1.0, 2.0 * PI * (j * m0) as f64 / self.m as f64);
                buf[j.rem_euclid(self.m as i64) as usize] * phase
            })
            .collect()
    }

    fn synthesize(&self, xk: &[Complex64], m0: i64, js: &[i64]) -> Vec<Complex64> {
        let mut buf = vec![Complex64::default(); self.m];
        for (&j, &v) in js.iter().zip(xk) {
            let phase = Complex64::from_polar(1.0 / self.m as f64, -2.0 * PI * (j * m0) as f64 / self.m as f64);
            buf[j.rem_euclid(self.m as i64) as usize] = v * phase;
        }
        self.forward.process(&mut buf);
        buf
    }
}

pub fn to_kspace(field: &SpinorField) -> KSpinor {
    let m = field.len() / 2;
    let m0 = field.first / 2;
    let js = k_indices(m);
    let k: Vec<f64> = js.iter().map(|&j| PI * j as f64 / m as f64).collect();
    let fft = SublatticeFft::new(m);
    let split = |x: &[Complex64], odd: usize| -> Vec<Complex64> { x.iter().skip(odd).step_by(2).copied().collect() };
    let odd_phase = |v: Vec<Complex64>| -> Vec<Complex64> {
        v.into_iter()
            .zip(&k)
            .map(|(z, &k)| z * Complex64::from_polar(1.0, k))
            .collect()
    };
    KSpinor {
        first: field.first,
        c_plus: fft.analyze(split(&field.c, 0), m0, &js),
        c_minus: odd_phase(fft.analyze(split(&field.c, 1), m0, &js)),
        d_plus: fft.analyze(split(&field.d, 0), m0, &js),
        d_minus: odd_phase(fft.analyze(split(&field.d, 1), m0, &js)),
        k,
        t: field.t,
    }
}

pub fn from_kspace(ks: &KSpinor) -> SpinorField {
    let m = ks.k.len();
    let m0 = ks.first / 2;
    let js = k_indices(m);
    let fft = SublatticeFft::new(m);
    let unphase = |v: &[Complex64]| -> Vec<Complex64> {
        v.iter()
            .zip(&ks.k)
            .map(|(z, &k)| z * Complex64::from_polar(1.0, -k))
            .collect()
    };
    let cp = fft.synthesize(&ks.c_plus, m0, &js);
    let cm = fft.synthesize(&unphase(&ks.c_minus), m0, &js);
    let dp = fft.synthesize(&ks.d_plus, m0, &js);
    let dm = fft.synthesize(&unphase(&ks.d_minus), m0, &js);
    let mut c = Vec::with_capacity(2 * m);
    let mut d = Vec::with_capacity(2 * m);
    for i in 0..m {
        c.push(cp[i]);
        c.push(cm[i]);
        d.push(dp[i]);
        d.push(dm[i]);
    }
    SpinorField {
        first: ks.first,
        c,
        d,
        t: ks.t,
    }
}

/// 2×2 Bloch Hamiltonian acting on `(c_plus, c_minus)` for the ground-ladder model.
pub fn kblock_hamiltonian(table: &CouplingTable, k: f64) -> Matrix2<Complex64> {
    let e_m = Complex64::from_polar(1.0, -k);
    let e_p = Complex64::from_polar(1.0, k);
    let t = |p, r| table.get(p, r, Channel::GG);
    Matrix2::new(
        t(Parity::Even, 0),
        t(Parity::Even, 1) * e_m + t(Parity::Even, -1) * e_p,
        t(Parity::Odd, 1) * e_m + t(Parity::Odd, -1) * e_p,
        t(Parity::Odd, 0),
    )
}

/// Dispersion `ω_± = ±sqrt(E0² + 4Ω² sin²k)` and eigenspinors of the ground-ladder model.
#[derive(Debug, Clone, PartialEq)]
pub struct BandStructure {
    pub k: Vec<f64>,
    pub omega_plus: Vec<f64>,
    pub omega_minus: Vec<f64>,
    pub spinor_plus: Vec<Vector2<Complex64>>,
    pub spinor_minus: Vec<Vector2<Complex64>>,
}

impl BandStructure {
    pub fn write_table<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "# k\tomega_plus\tomega_minus")?;
        for ((k, p), m) in self.k.iter().zip(&self.omega_plus).zip(&self.omega_minus) {
            writeln!(out, "{k:e}\t{p:e}\t{m:e}")?;
        }
        Ok(())
    }
}

/// Bands of `H(k) = [[E0, −2iΩ sin k], [2iΩ sin k, −E0]]`.
///
/// Eigenspinors have a real non-negative first component. At a degenerate
/// point (`E0 = 0`, `sin k = 0`) the small-`k` limit `(1, ±i sgn Ω)/√2` is returned.
pub fn band_structure(e0: f64, omega: f64, k_samples: &[f64]) -> BandStructure {
    let mut out = BandStructure {
        k: k_samples.to_vec(),
        omega_plus: Vec::with_capacity(k_samples.len()),
        omega_minus: Vec::with_capacity(k_samples.len()),
        spinor_plus: Vec::with_capacity(k_samples.len()),
        spinor_minus: Vec::with_capacity(k_samples.len()),
    };
    for &k in k_samples {
        let h = 2.0 * omega * k.sin();
        let w = (e0 * e0 + h * h).sqrt();
        out.omega_plus.push(w);
        out.omega_minus.push(-w);
        out.spinor_plus.push(eigenspinor(e0, h, omega, w, 1.0));
        out.spinor_minus.push(eigenspinor(e0, h, omega, -w, -1.0));
    }
    out
}

fn eigenspinor(e0: f64, h: f64, omega: f64, w: f64, branch: f64) -> Vector2<Complex64> {
    let i = Complex64::i();
    if w == 0.0 {
        let s = if omega >= 0.0 { branch } else { -branch };
        return Vector2::new(Complex64::new(1.0, 0.0), i * s).unscale(2f64.sqrt());
    }
    // rows: (E0 − ω) u − i h v = 0 and i h u − (E0 + ω) v = 0
    let v = if (w + e0).abs() >= (w - e0).abs() {
        Vector2::new(Complex64::new(w + e0, 0.0), i * h)
    } else {
        Vector2::new(i * h, Complex64::new(e0 - w, 0.0))
    };
    let norm = v.norm();
    let phase = if v[0].norm() > 0.0 {
        v[0].conj() / v[0].norm()
    } else {
        Complex64::new(1.0, 0.0)
    };
    v * (phase / norm)
}

/// Smooth sub-lattice envelopes on the integer grid `first..=last`.
///
/// `c_plus` interpolates `c` on even sites, `c_minus` on odd sites (likewise for
/// `d`); missing points are filled by linear interpolation and the ends by the
/// nearest sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Envelopes {
    pub x: Vec<f64>,
    pub c_plus: Vec<Complex64>,
    pub c_minus: Vec<Complex64>,
    pub d_plus: Vec<Complex64>,
    pub d_minus: Vec<Complex64>,
}

impl Envelopes {
    /// `½ Σ_x (|c₊|² + |c₋|² + |d₊|² + |d₋|²)`: each sub-lattice sample stands for two grid points.
    pub fn norm_sqr(&self) -> f64 {
        0.5 * self
            .c_plus
            .iter()
            .chain(&self.c_minus)
            .chain(&self.d_plus)
            .chain(&self.d_minus)
            .map(|z| z.norm_sqr())
            .sum::<f64>()
    }
}

pub fn envelopes(field: &SpinorField) -> Envelopes {
    let interp = |src: &[Complex64], parity: i64| -> Vec<Complex64> {
        let n = src.len();
        (0..n)
            .map(|i| {
                let site = field.first + i as i64;
                if site.rem_euclid(2) == parity {
                    src[i]
                } else if i == 0 {
                    src[1]
                } else if i == n - 1 {
                    src[n - 2]
                } else {
                    0.5 * (src[i - 1] + src[i + 1])
                }
            })
            .collect()
    };
    Envelopes {
        x: field.sites().map(|n| n as f64).collect(),
        c_plus: interp(&field.c, 0),
        c_minus: interp(&field.c, 1),
        d_plus: interp(&field.d, 0),
        d_minus: interp(&field.d, 1),
    }
}

/// Relative residual of the continuum Dirac equation on a sampled history.
///
/// Each sub-lattice envelope `u_{a,p}` is required to satisfy
/// `i ∂t u_{a,p} = Σ_{b,r} T^{ab}_{p,r} (u_{b,p⊕r} + r ∂x u_{b,p⊕r})`, with the
/// right side evaluated by fourth-order interpolation and differentiation on
/// the sub-lattice samples and `∂t` by central differences between snapshots.
/// The norm of the mismatch is divided by the larger of the norms of the two
/// sides, so a static empty field returns 0. History snapshots must be equally
/// spaced in time.
pub fn continuum_residual(history: &[SpinorField], table: &CouplingTable, kind: ModelKind) -> f64 {
    if history.len() < 3 {
        return 0.0;
    }
    let table = reduce_table(table, kind);
    let h = history[1].t - history[0].t;
    let len = history[0].len();
    let first = history[0].first;
    let channel = |a: usize, b: usize| match (a, b) {
        (0, 0) => Channel::GG,
        (0, 1) => Channel::GE,
        (1, 0) => Channel::EG,
        _ => Channel::EE,
    };
    let mut mismatch = 0.0;
    let mut lhs_norm = 0.0;
    let mut rhs_norm = 0.0;
    let i = Complex64::i();
    for s in 1..history.len() - 1 {
        let f = &history[s];
        for level in 0..2 {
            let prev = comps(&history[s - 1], level);
            let next = comps(&history[s + 1], level);
            for idx in 4..len.saturating_sub(4) {
                let site = first + idx as i64;
                let parity = if site.rem_euclid(2) == 0 {
                    Parity::Even
                } else {
                    Parity::Odd
                };
                let lhs = i * (next[idx] - prev[idx]) / (2.0 * h);
                let mut rhs = Complex64::default();
                for b in 0..2 {
                    let u = comps(f, b);
                    // same sub-lattice, samples at idx ± 2, ± 4
                    let same_val = u[idx];
                    let same_der = (-u[idx + 4] + 8.0 * u[idx + 2] - 8.0 * u[idx - 2] + u[idx - 4]) / 24.0;
                    // other sub-lattice, staggered samples at idx ± 1, ± 3
                    let other_val = (9.0 * (u[idx + 1] + u[idx - 1]) - (u[idx + 3] + u[idx - 3])) / 16.0;
                    let other_der = (27.0 * (u[idx + 1] - u[idx - 1]) - (u[idx + 3] - u[idx - 3])) / 48.0;
                    for r in -1..=1i32 {
                        let t = table.get(parity, r, channel(level, b));
                        if t.norm() == 0.0 {
                            continue;
                        }
                        let (val, der) = if r == 0 {
                            (same_val, same_der)
                        } else {
                            (other_val, other_der)
                        };
                        rhs += t * (val + r as f64 * der);
                    }
                }
                mismatch += (lhs - rhs).norm_sqr();
                lhs_norm += lhs.norm_sqr();
                rhs_norm += rhs.norm_sqr();
            }
        }
    }
    let scale = lhs_norm.max(rhs_norm);
    if scale == 0.0 {
        0.0
    } else {
        (mismatch / scale).sqrt()
    }
}
