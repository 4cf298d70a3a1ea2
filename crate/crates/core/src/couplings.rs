//! Modulation spectra, overlap integrals and the resonant coupling table.
//!
//! The perturbation is `H̄(x,t) = −V1mod cos(2πx) f1(t) + V2mod cos(πx) f2(t) + Vs cos(4πx)`
//! with `f_α(t) = Σ A^{(α)}_{j,q} e^{i(jω_B + qΔ)t}`. After projecting on the ladder
//! and keeping resonant terms only, a site `n` couples to `n + r` through
//! coefficients that depend on `n` only through its parity.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::io::{self, Write};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ws::{shifted_overlap, Level, WsLadder};

/// Gap-to-Bloch-multiple distance below which compilation is refused.
pub const DEFAULT_RESONANCE_TOLERANCE: f64 = 0.05;

/// Index of one Fourier component `A^{(alpha)}_{j,q}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct DriveKey {
    pub alpha: u8,
    pub j: i32,
    pub q: i32,
}

impl DriveKey {
    pub fn new(alpha: u8, j: i32, q: i32) -> Self {
        Self { alpha, j, q }
    }

    fn partner(self) -> Self {
        Self {
            alpha: self.alpha,
            j: -self.j,
            q: -self.q,
        }
    }
}

/// Amplitude table of the two drives plus the static `cos 4πx` term.
///
/// The drive frequencies are built from `omega_b` and `delta`; when the exact
/// engine is used these should be the engine's own calibrated values.
#[derive(Debug, Clone, PartialEq)]
pub struct ModulationSpec {
    amps: BTreeMap<DriveKey, Complex64>,
    pub v1_mod: f64,
    pub v2_mod: f64,
    pub vs_amp: f64,
    pub omega_b: f64,
    pub delta: f64,
}

impl ModulationSpec {
    pub fn new(omega_b: f64, delta: f64) -> Self {
        Self {
            amps: BTreeMap::new(),
            v1_mod: 0.0,
            v2_mod: 0.0,
            vs_amp: 0.0,
            omega_b,
            delta,
        }
    }

    pub fn for_ladder(ladder: &WsLadder) -> Self {
        Self::new(ladder.omega_b, ladder.delta)
    }

    pub fn with_depths(mut self, v1_mod: f64, v2_mod: f64, vs_amp: f64) -> Self {
        self.v1_mod = v1_mod;
        self.v2_mod = v2_mod;
        self.vs_amp = vs_amp;
        self
    }

    /// Set `A^{(alpha)}_{j,q}` and its conjugate partner `A^{(alpha)}_{-j,-q}`.
    pub fn with_term(mut self, alpha: u8, j: i32, q: i32, amp: Complex64) -> Result<Self> {
        self.insert(alpha, j, q, amp)?;
        Ok(self)
    }

    pub fn insert(&mut self, alpha: u8, j: i32, q: i32, amp: Complex64) -> Result<()> {
        let key = DriveKey::new(alpha, j, q);
        check_key(key)?;
        if j == 0 && q == 0 && amp.im != 0.0 {
            return Err(Error::RealityViolation { alpha, j, q });
        }
        self.set_raw(key, amp);
        self.set_raw(key.partner(), amp.conj());
        Ok(())
    }

    fn set_raw(&mut self, key: DriveKey, amp: Complex64) {
        if amp == Complex64::new(0.0, 0.0) {
            self.amps.remove(&key);
        } else {
            self.amps.insert(key, amp);
        }
    }

    /// Stored amplitudes, including conjugate partners.
    pub fn terms(&self) -> impl Iterator<Item = (DriveKey, Complex64)> + '_ {
        self.amps.iter().map(|(k, v)| (*k, *v))
    }

    pub fn amplitude(&self, alpha: u8, j: i32, q: i32) -> Complex64 {
        self.amps.get(&DriveKey::new(alpha, j, q)).copied().unwrap_or_default()
    }

    pub fn is_static_free(&self) -> bool {
        self.amps.is_empty() && self.vs_amp == 0.0
    }

    pub fn validate(&self) -> Result<()> {
        for (&key, &amp) in &self.amps {
            check_key(key)?;
            let partner = self.amps.get(&key.partner()).copied().unwrap_or_default();
            if (partner - amp.conj()).norm() > 1e-14 * (1.0 + amp.norm()) {
                return Err(Error::RealityViolation {
                    alpha: key.alpha,
                    j: key.j,
                    q: key.q,
                });
            }
        }
        Ok(())
    }

    /// `f_alpha(t)`; real whenever the reality condition holds.
    pub fn drive(&self, alpha: u8, t: f64) -> Complex64 {
        self.amps
            .iter()
            .filter(|(k, _)| k.alpha == alpha)
            .map(|(k, a)| {
                let w = k.j as f64 * self.omega_b + k.q as f64 * self.delta;
                a * Complex64::from_polar(1.0, w * t)
            })
            .sum()
    }

    /// Prefactors `(g1, g2)` with `H̄ = g1 cos 2πx + g2 cos πx + Vs cos 4πx`.
    pub fn drive_factors(&self, t: f64) -> (f64, f64) {
        (-self.v1_mod * self.drive(1, t).re, self.v2_mod * self.drive(2, t).re)
    }
}

fn check_key(key: DriveKey) -> Result<()> {
    if !(key.alpha == 1 || key.alpha == 2) || !(-1..=1).contains(&key.q) {
        return Err(Error::RealityViolation {
            alpha: key.alpha,
            j: key.j,
            q: key.q,
        });
    }
    Ok(())
}

/// Samples of `H̄(x, t)` at the points `x`.
pub fn hbar_potential(spec: &ModulationSpec, x: &[f64], t: f64) -> Vec<f64> {
    let (g1, g2) = spec.drive_factors(t);
    x.iter()
        .map(|&x| g1 * (2.0 * PI * x).cos() + g2 * (PI * x).cos() + spec.vs_amp * (4.0 * PI * x).cos())
        .collect()
}

/// Range of raw neighbour distances kept in [`OverlapTable`].
pub const OVERLAP_REACH: i32 = 2;

/// `⟨φ_0^a| op |φ_r^b⟩` for `op ∈ {cos 2πx, cos πx}` and `|r| ≤ 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapTable {
    cos2pi: [[[f64; 5]; 2]; 2],
    cospi: [[[f64; 5]; 2]; 2],
    cos4pi: [f64; 2],
    /// `⟨φ_0^ℓ|V_S|φ_0^ℓ⟩` for ground and excited.
    pub vs_diag: [f64; 2],
}

fn level_index(l: Level) -> usize {
    match l {
        Level::Ground => 0,
        Level::Excited => 1,
    }
}

fn reach_index(r: i32) -> usize {
    assert!(r.abs() <= OVERLAP_REACH, "overlap distance {r} not tabulated");
    (r + OVERLAP_REACH) as usize
}

impl OverlapTable {
    pub fn cos2pi(&self, a: Level, b: Level, r: i32) -> f64 {
        self.cos2pi[level_index(a)][level_index(b)][reach_index(r)]
    }

    pub fn cospi(&self, a: Level, b: Level, r: i32) -> f64 {
        self.cospi[level_index(a)][level_index(b)][reach_index(r)]
    }

    /// `⟨φ_0^ℓ| cos 4πx |φ_0^ℓ⟩`.
    pub fn cos4pi(&self, l: Level) -> f64 {
        self.cos4pi[level_index(l)]
    }

    pub fn vs(&self, l: Level) -> f64 {
        self.vs_diag[level_index(l)]
    }

    /// Largest `|r| = 2` overlap, i.e. the size of what nearest-neighbour truncation drops.
    pub fn truncation_error(&self) -> f64 {
        let mut m: f64 = 0.0;
        for a in 0..2 {
            for b in 0..2 {
                for r in [0, 4] {
                    m = m.max(self.cos2pi[a][b][r].abs()).max(self.cospi[a][b][r].abs());
                }
            }
        }
        m
    }

    /// `operator a b r value` rows.
    pub fn write_table<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "# operator\ta\tb\tr\tvalue")?;
        for (name, table) in [("cos2pi", &self.cos2pi), ("cospi", &self.cospi)] {
            for a in Level::BOTH {
                for b in Level::BOTH {
                    for r in -OVERLAP_REACH..=OVERLAP_REACH {
                        let v = table[level_index(a)][level_index(b)][reach_index(r)];
                        writeln!(out, "{name}\t{}\t{}\t{r}\t{v:e}", a.label(), b.label())?;
                    }
                }
            }
        }
        for l in Level::BOTH {
            writeln!(out, "vs\t{0}\t{0}\t0\t{1:e}", l.label(), self.vs(l))?;
        }
        Ok(())
    }
}

/// Quadrature of all overlaps needed by [`compile_couplings`].
pub fn compute_overlaps(ladder: &WsLadder, spec: &ModulationSpec) -> Result<OverlapTable> {
    let ppw = ladder.ppw();
    if !ppw.is_multiple_of(2) {
        return Err(Error::GridMisaligned { points_per_well: ppw });
    }
    let dx = ladder.dx();
    let x = ladder.grid();
    let weighted = |f: fn(f64) -> f64, s: &[f64]| -> Vec<f64> { x.iter().zip(s).map(|(&x, p)| f(x) * p).collect() };
    let c2 = |x: f64| (2.0 * PI * x).cos();
    let c1 = |x: f64| (PI * x).cos();
    let c4 = |x: f64| (4.0 * PI * x).cos();

    let mut cos2pi = [[[0.0; 5]; 2]; 2];
    let mut cospi = [[[0.0; 5]; 2]; 2];
    for a in Level::BOTH {
        let w2 = weighted(c2, ladder.state(a));
        let w1 = weighted(c1, ladder.state(a));
        for b in Level::BOTH {
            let sb = ladder.state(b);
            for r in -OVERLAP_REACH..=OVERLAP_REACH {
                let off = r as i64 * ppw as i64;
                cos2pi[level_index(a)][level_index(b)][reach_index(r)] = shifted_overlap(&w2, sb, off, dx);
                cospi[level_index(a)][level_index(b)][reach_index(r)] = shifted_overlap(&w1, sb, off, dx);
            }
        }
    }
    let mut cos4pi = [0.0; 2];
    for l in Level::BOTH {
        let s = ladder.state(l);
        cos4pi[level_index(l)] = shifted_overlap(&weighted(c4, s), s, 0, dx);
    }
    Ok(OverlapTable {
        cos2pi,
        cospi,
        cos4pi,
        vs_diag: [spec.vs_amp * cos4pi[0], spec.vs_amp * cos4pi[1]],
    })
}

/// Row and column ladder of a coupling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Channel {
    GG,
    GE,
    EG,
    EE,
}

impl Channel {
    pub const ALL: [Channel; 4] = [Channel::GG, Channel::GE, Channel::EG, Channel::EE];

    pub fn levels(self) -> (Level, Level) {
        match self {
            Channel::GG => (Level::Ground, Level::Ground),
            Channel::GE => (Level::Ground, Level::Excited),
            Channel::EG => (Level::Excited, Level::Ground),
            Channel::EE => (Level::Excited, Level::Excited),
        }
    }

    /// Gap index `q` a drive term needs to be resonant in this channel.
    pub fn resonant_q(self) -> i32 {
        match self {
            Channel::GG | Channel::EE => 0,
            Channel::GE => 1,
            Channel::EG => -1,
        }
    }

    fn index(self) -> usize {
        self as usize
    }

    pub fn label(self) -> &'static str {
        match self {
            Channel::GG => "gg",
            Channel::GE => "ge",
            Channel::EG => "eg",
            Channel::EE => "ee",
        }
    }
}

/// Parity of a site index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Parity {
    Even,
    Odd,
}

impl Parity {
    pub fn of(n: i64) -> Self {
        if n.rem_euclid(2) == 0 {
            Parity::Even
        } else {
            Parity::Odd
        }
    }

    pub fn sign(self) -> f64 {
        match self {
            Parity::Even => 1.0,
            Parity::Odd => -1.0,
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// Resonant coefficients `T^{ab}_{n,r}`, `|r| ≤ 1`, of the discrete model
/// `i ċ_n = Σ_r T^{gg}_{n,r} c_{n+r} + T^{ge}_{n,r} d_{n+r}` (and likewise for `d_n`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CouplingTable {
    t: [[[Complex64; 3]; 4]; 2],
    pub omega_b: f64,
    pub delta: f64,
}

impl CouplingTable {
    pub fn zero(omega_b: f64, delta: f64) -> Self {
        Self {
            t: [[[Complex64::default(); 3]; 4]; 2],
            omega_b,
            delta,
        }
    }

    pub fn get(&self, parity: Parity, r: i32, channel: Channel) -> Complex64 {
        assert!(r.abs() <= 1, "only nearest neighbours are tabulated");
        self.t[parity.index()][channel.index()][(r + 1) as usize]
    }

    /// Coefficient for site `n`.
    pub fn at(&self, n: i64, r: i32, channel: Channel) -> Complex64 {
        self.get(Parity::of(n), r, channel)
    }

    pub fn set(&mut self, parity: Parity, r: i32, channel: Channel, value: Complex64) {
        assert!(r.abs() <= 1, "only nearest neighbours are tabulated");
        self.t[parity.index()][channel.index()][(r + 1) as usize] = value;
    }

    pub fn is_zero(&self) -> bool {
        self.t.iter().flatten().flatten().all(|z| z.norm() == 0.0)
    }

    pub fn max_abs(&self) -> f64 {
        self.t.iter().flatten().flatten().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Spinor-2 rest energy `E0 = T^{gg}_{even,0}`.
    pub fn spinor2_mass(&self) -> f64 {
        self.get(Parity::Even, 0, Channel::GG).re
    }

    /// Spinor-2 hopping `Ω2 = T^{gg}_{even,+1}` (real for real drive amplitudes).
    pub fn spinor2_hopping(&self) -> Complex64 {
        self.get(Parity::Even, 1, Channel::GG)
    }

    /// Spinor-4 rest energy `E0 = (T^{gg}_0 − T^{ee}_0) / 2`.
    pub fn spinor4_mass(&self) -> f64 {
        0.5 * (self.get(Parity::Even, 0, Channel::GG) - self.get(Parity::Even, 0, Channel::EE)).re
    }

    /// Spinor-4 hopping `Ω1` with `T^{ge}_{n,1} = iΩ1`.
    pub fn spinor4_hopping(&self) -> Complex64 {
        -Complex64::i() * self.get(Parity::Even, 1, Channel::GE)
    }

    /// Common diagonal shift `(T^{gg}_0 + T^{ee}_0) / 2` on even sites.
    pub fn mean_diagonal(&self) -> f64 {
        0.5 * (self.get(Parity::Even, 0, Channel::GG) + self.get(Parity::Even, 0, Channel::EE)).re
    }

    /// Copy with `shift` removed from every `gg`/`ee` on-site term.
    pub fn without_diagonal_shift(&self, shift: f64) -> Self {
        let mut out = self.clone();
        for p in [Parity::Even, Parity::Odd] {
            for ch in [Channel::GG, Channel::EE] {
                let v = out.get(p, 0, ch);
                out.set(p, 0, ch, v - shift);
            }
        }
        out
    }

    pub fn write_table<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "# parity\tr\tchannel\tre\tim")?;
        for (p, name) in [(Parity::Even, "even"), (Parity::Odd, "odd")] {
            for r in -1..=1 {
                for ch in Channel::ALL {
                    let z = self.get(p, r, ch);
                    writeln!(out, "{name}\t{r}\t{}\t{:e}\t{:e}", ch.label(), z.re, z.im)?;
                }
            }
        }
        Ok(())
    }
}

/// Compile the resonant nearest-neighbour table.
///
/// `T^{ab}_{n,r} = δ_{r0}δ_{ab}⟨V_S⟩_a − V1mod A^{(1)}_{r,q} C2^{ab}(r) + (−1)^n V2mod A^{(2)}_{r,q} C1^{ab}(r)`
/// where `q` is fixed by the channel and `C` are the tabulated overlaps.
pub fn compile_couplings(spec: &ModulationSpec, overlaps: &OverlapTable) -> Result<CouplingTable> {
    compile_couplings_with(spec, overlaps, DEFAULT_RESONANCE_TOLERANCE)
}

pub fn compile_couplings_with(spec: &ModulationSpec, overlaps: &OverlapTable, tolerance: f64) -> Result<CouplingTable> {
    spec.validate()?;
    for order in 0..=2 {
        if (spec.delta - order as f64 * spec.omega_b).abs() < tolerance {
            return Err(Error::ResonanceCollision {
                delta: spec.delta,
                order,
                tolerance,
            });
        }
    }
    let mut table = CouplingTable::zero(spec.omega_b, spec.delta);
    for parity in [Parity::Even, Parity::Odd] {
        for ch in Channel::ALL {
            let (a, b) = ch.levels();
            let q = ch.resonant_q();
            for r in -1..=1 {
                let mut v = spec.amplitude(1, r, q) * (-spec.v1_mod * overlaps.cos2pi(a, b, r))
                    + spec.amplitude(2, r, q) * (parity.sign() * spec.v2_mod * overlaps.cospi(a, b, r));
                if r == 0 && a == b {
                    v += overlaps.vs(a);
                }
                table.set(parity, r, ch, v);
            }
        }
    }
    Ok(table)
}

/// Which representation the balanced tuning targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Tuning {
    /// Inter-ladder hopping through the `cos 2πx` drive.
    Dirac,
    /// Inter-ladder hopping through the `cos πx` drive.
    Weyl,
}

/// Rescale `A_{1,−1}` so that the `ge` hops to `n ± 1` are exact opposites.
///
/// Dirac case: `A^{(1)}_{1,1} C2^{ge}(1) = −conj(A^{(1)}_{1,−1}) C2^{ge}(−1)`;
/// the Weyl case uses the `cos πx` overlaps and the second drive.
pub fn tune_balanced_amplitudes(
    spec: &ModulationSpec,
    overlaps: &OverlapTable,
    tuning: Tuning,
) -> Result<ModulationSpec> {
    let (alpha, plus, minus) = match tuning {
        Tuning::Dirac => (
            1,
            overlaps.cos2pi(Level::Ground, Level::Excited, 1),
            overlaps.cos2pi(Level::Ground, Level::Excited, -1),
        ),
        Tuning::Weyl => (
            2,
            overlaps.cospi(Level::Ground, Level::Excited, 1),
            overlaps.cospi(Level::Ground, Level::Excited, -1),
        ),
    };
    if minus.abs() < 1e-14 {
        return Err(Error::ZeroOverlap { which: "<g0|op|e(-1)>" });
    }
    if plus.abs() < 1e-14 {
        return Err(Error::ZeroOverlap { which: "<g0|op|e(+1)>" });
    }
    let a11 = spec.amplitude(alpha, 1, 1);
    let tuned = -a11.conj() * (plus / minus);
    spec.clone().with_term(alpha, 1, -1, tuned)
}

/// Residual of the balance condition, zero after tuning.
pub fn balance_residual(spec: &ModulationSpec, overlaps: &OverlapTable, tuning: Tuning) -> f64 {
    let (alpha, plus, minus) = match tuning {
        Tuning::Dirac => (
            1,
            overlaps.cos2pi(Level::Ground, Level::Excited, 1),
            overlaps.cos2pi(Level::Ground, Level::Excited, -1),
        ),
        Tuning::Weyl => (
            2,
            overlaps.cospi(Level::Ground, Level::Excited, 1),
            overlaps.cospi(Level::Ground, Level::Excited, -1),
        ),
    };
    (spec.amplitude(alpha, 1, 1) * plus + spec.amplitude(alpha, 1, -1).conj() * minus).norm()
}
