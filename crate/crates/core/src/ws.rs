//! Wannier-Stark states of the tilted lattice `p²/2m* − V1 cos 2πx + F x`.
//!
//! Lengths are in lattice steps, energies in recoil units, so the reduced
//! mass is fixed at `π²/2` and the Bloch frequency equals `F`.

use std::f64::consts::PI;
use std::io::{self, Write};

use nalgebra::{DMatrix, Matrix2, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Reduced mass in lattice units.
pub const M_STAR: f64 = PI * PI / 2.0;

/// Gaps closer than this to a multiple of `ω_B` are rejected.
pub const DEFAULT_DEGENERACY_TOLERANCE: f64 = 0.05;

/// Eighth-order central coefficients for the second derivative, offsets 0..=4.
pub const STENCIL: [f64; 5] = [-205.0 / 72.0, 8.0 / 5.0, -1.0 / 5.0, 8.0 / 315.0, -1.0 / 560.0];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatticeParams {
    pub v1: f64,
    pub f: f64,
    /// Wells on each side of the reference well covered by the solver window.
    pub domain_half_width: usize,
    pub grid_points_per_well: usize,
}

impl Default for LatticeParams {
    fn default() -> Self {
        Self {
            v1: 6.0,
            f: 1.0,
            domain_half_width: 10,
            grid_points_per_well: 32,
        }
    }
}

impl LatticeParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.v1 > 0.0) {
            return Err(invalid("v1", format!("must be positive, got {}", self.v1)));
        }
        if !(self.f > 0.0) {
            return Err(invalid("f", format!("must be positive, got {}", self.f)));
        }
        if self.grid_points_per_well < 32 {
            return Err(invalid(
                "grid_points_per_well",
                format!("need at least 32, got {}", self.grid_points_per_well),
            ));
        }
        if self.domain_half_width < 4 {
            return Err(invalid(
                "domain_half_width",
                format!("need at least 4, got {}", self.domain_half_width),
            ));
        }
        Ok(())
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.grid_points_per_well as f64
    }

    pub fn omega_b(&self) -> f64 {
        self.f
    }

    /// Static lattice potential `−V1 cos 2πx + F x`.
    pub fn potential(&self, x: f64) -> f64 {
        -self.v1 * (2.0 * PI * x).cos() + self.f * x
    }
}

/// Kinetic energy of a plane wave `e^{ikx}` under the solver's finite-difference stencil.
pub fn kinetic_symbol(k: f64, dx: f64) -> f64 {
    let mut lap = STENCIL[0];
    for (j, c) in STENCIL.iter().enumerate().skip(1) {
        lap += 2.0 * c * (j as f64 * k * dx).cos();
    }
    -lap / (2.0 * M_STAR * dx * dx)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Level {
    Ground,
    Excited,
}

impl Level {
    pub const BOTH: [Level; 2] = [Level::Ground, Level::Excited];

    pub fn label(self) -> &'static str {
        match self {
            Level::Ground => "g",
            Level::Excited => "e",
        }
    }
}

/// Reference-well states and the ladder they generate by translation.
///
/// The states are sampled on `x_j = (j − window_wells·ppw)·dx`, so index
/// `window_wells·ppw` is the centre of well 0. Translates are orthonormalized
/// (see [`solve_ws`]), which is why the window can be wider than the solver box.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WsLadder {
    pub params: LatticeParams,
    pub phi_g: Vec<f64>,
    pub phi_e: Vec<f64>,
    pub e_g: f64,
    pub delta: f64,
    pub omega_b: f64,
    pub window_wells: usize,
    /// Largest `‖Hv − λv‖∞` of the two selected eigenpairs.
    pub eigen_residual: f64,
    /// Largest off-diagonal overlap between raw translates before orthonormalization.
    pub raw_overlap: f64,
}

impl WsLadder {
    pub fn ppw(&self) -> usize {
        self.params.grid_points_per_well
    }

    pub fn dx(&self) -> f64 {
        self.params.dx()
    }

    pub fn len(&self) -> usize {
        self.phi_g.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phi_g.is_empty()
    }

    /// Index of `x = 0` in the sampled window.
    pub fn center_index(&self) -> usize {
        self.window_wells * self.ppw()
    }

    pub fn grid(&self) -> Vec<f64> {
        let c = self.center_index() as f64;
        (0..self.len()).map(|j| (j as f64 - c) * self.dx()).collect()
    }

    pub fn state(&self, level: Level) -> &[f64] {
        match level {
            Level::Ground => &self.phi_g,
            Level::Excited => &self.phi_e,
        }
    }

    pub fn e_e(&self) -> f64 {
        self.e_g + self.delta
    }

    /// `E_n^ℓ = E_0^ℓ + n ω_B`.
    pub fn energy(&self, level: Level, n: i64) -> f64 {
        let base = match level {
            Level::Ground => self.e_g,
            Level::Excited => self.e_e(),
        };
        base + n as f64 * self.omega_b
    }

    /// Copy with replaced reference energies, e.g. ones measured on a propagator.
    pub fn with_energies(&self, e_g: f64, delta: f64) -> Self {
        Self {
            e_g,
            delta,
            ..self.clone()
        }
    }

    /// `φ_n^ℓ` on the same window, shifted by whole wells.
    pub fn translate_state(&self, level: Level, n: i64) -> Result<Vec<f64>> {
        let limit = self.window_wells as i64 - 2;
        if n.abs() > limit {
            return Err(Error::OutOfDomain { site: n, limit });
        }
        Ok(shifted(self.state(level), n * self.ppw() as i64))
    }

    /// `⟨x⟩` of the reference state.
    pub fn mean_position(&self, level: Level) -> f64 {
        let dx = self.dx();
        self.grid()
            .iter()
            .zip(self.state(level))
            .map(|(x, p)| x * p * p * dx)
            .sum()
    }

    /// Probability outside wells −1, 0 and 1, i.e. beyond `|x| > 1.5`.
    pub fn outside_weight(&self, level: Level) -> f64 {
        let dx = self.dx();
        self.grid()
            .iter()
            .zip(self.state(level))
            .filter(|(x, _)| x.abs() > 1.5 + 1e-9)
            .map(|(_, p)| p * p * dx)
            .sum()
    }

    /// Two-column `x value` table of both reference states.
    pub fn write_table<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "# x\tphi_g\tphi_e")?;
        for ((x, g), e) in self.grid().iter().zip(&self.phi_g).zip(&self.phi_e) {
            writeln!(out, "{x:e}\t{g:e}\t{e:e}")?;
        }
        Ok(())
    }
}

/// Shift samples by `offset` grid points with zero fill.
pub(crate) fn shifted(v: &[f64], offset: i64) -> Vec<f64> {
    let n = v.len() as i64;
    (0..n)
        .map(|j| {
            let src = j - offset;
            if (0..n).contains(&src) {
                v[src as usize]
            } else {
                0.0
            }
        })
        .collect()
}

/// `Σ_j a[j]·b[j − offset]·dx`.
pub(crate) fn shifted_overlap(a: &[f64], b: &[f64], offset: i64, dx: f64) -> f64 {
    let n = a.len() as i64;
    let lo = offset.max(0);
    let hi = (n + offset).min(n);
    (lo..hi).map(|j| a[j as usize] * b[(j - offset) as usize]).sum::<f64>() * dx
}

/// Solve for the reference-well ladder centred on well 0.
pub fn solve_ws(params: &LatticeParams) -> Result<WsLadder> {
    solve_ws_centered(params, 0)
}

/// Solve with the box centred on `well`; energies are those of well `well`,
/// states are expressed relative to that well's centre.
pub fn solve_ws_centered(params: &LatticeParams, well: i64) -> Result<WsLadder> {
    params.validate()?;
    let ppw = params.grid_points_per_well;
    let hw = params.domain_half_width;
    let dx = params.dx();
    let n = 2 * hw * ppw + 1;
    let x: Vec<f64> = (0..n)
        .map(|j| well as f64 + (j as f64 - (hw * ppw) as f64) * dx)
        .collect();

    let scale = -1.0 / (2.0 * M_STAR * dx * dx);
    let mut h = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        h[(i, i)] = scale * STENCIL[0] + params.potential(x[i]);
        for (k, c) in STENCIL.iter().enumerate().skip(1) {
            if i + k < n {
                h[(i, i + k)] = scale * c;
                h[(i + k, i)] = scale * c;
            }
        }
    }
    let eig = SymmetricEigen::new(h.clone());

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut picked = Vec::with_capacity(2);
    for &i in &order {
        let v = eig.eigenvectors.column(i);
        let mean: f64 = x.iter().zip(v.iter()).map(|(x, p)| x * p * p).sum();
        let near: f64 = x
            .iter()
            .zip(v.iter())
            .filter(|(x, _)| (*x - well as f64).abs() <= 1.5)
            .map(|(_, p)| p * p)
            .sum();
        if (mean - well as f64).round() == 0.0 && near > 0.5 {
            // above 2·V1 the candidate is a box mode, not an excited well state
            if let Some(&g) = picked.first() {
                if eig.eigenvalues[i] - eig.eigenvalues[g] > 2.0 * params.v1 + params.f {
                    break;
                }
            }
            picked.push(i);
            if picked.len() == 2 {
                break;
            }
        }
    }
    if picked.len() < 2 {
        return Err(Error::NoBoundExcitedState {
            v1: params.v1,
            f: params.f,
        });
    }

    let mut residual: f64 = 0.0;
    let mut states = Vec::with_capacity(2);
    for &i in &picked {
        let v = eig.eigenvectors.column(i).into_owned();
        let r = &h * &v - eig.eigenvalues[i] * &v;
        residual = residual.max(r.amax());
        let norm = dx.sqrt();
        let mut s: Vec<f64> = v.iter().map(|p| p / norm).collect();
        let peak = s
            .iter()
            .copied()
            .fold(0.0_f64, |m, p| if p.abs() > m.abs() { p } else { m });
        if peak < 0.0 {
            s.iter_mut().for_each(|p| *p = -*p);
        }
        states.push(s);
    }
    let e_g = eig.eigenvalues[picked[0]];
    let delta = eig.eigenvalues[picked[1]] - e_g;
    let omega_b = params.omega_b();

    let multiple = (delta / omega_b).round() as i64;
    if (delta - multiple as f64 * omega_b).abs() < DEFAULT_DEGENERACY_TOLERANCE || delta <= omega_b {
        return Err(Error::DegenerateLadder {
            delta,
            multiple,
            tolerance: DEFAULT_DEGENERACY_TOLERANCE,
        });
    }

    let phi_e = states.pop().expect("two states");
    let phi_g = states.pop().expect("two states");
    let ortho = orthonormalize_translates(&phi_g, &phi_e, ppw, hw, dx);

    Ok(WsLadder {
        params: *params,
        phi_g: ortho.phi_g,
        phi_e: ortho.phi_e,
        e_g,
        delta,
        omega_b,
        window_wells: ortho.window_wells,
        eigen_residual: residual,
        raw_overlap: ortho.raw_overlap,
    })
}

struct Orthonormalized {
    phi_g: Vec<f64>,
    phi_e: Vec<f64>,
    window_wells: usize,
    raw_overlap: f64,
}

/// Symmetric (Löwdin) orthonormalization of the translate family `{φ^ℓ(x − n)}`.
///
/// The box eigenstates of the excited band carry a small continuum admixture, so
/// their translates overlap at the 1e-3 level. The Gram matrix is block Toeplitz
/// in the site index; its inverse square root is computed from the 2×2 symbol on
/// a periodic k grid and applied as a short convolution over translates.
fn orthonormalize_translates(phi_g: &[f64], phi_e: &[f64], ppw: usize, hw: usize, dx: f64) -> Orthonormalized {
    let states = [phi_g, phi_e];
    let reach = 2 * hw as i64;
    let mut gram = Vec::with_capacity((2 * reach + 1) as usize);
    let mut raw_overlap: f64 = 0.0;
    for d in -reach..=reach {
        let mut s = [[0.0; 2]; 2];
        for a in 0..2 {
            for b in 0..2 {
                s[a][b] = shifted_overlap(states[a], states[b], d * ppw as i64, dx);
                if d != 0 || a != b {
                    raw_overlap = raw_overlap.max(s[a][b].abs());
                }
            }
        }
        gram.push(s);
    }

    let kpts = (8 * (2 * reach + 1) as usize).next_power_of_two().max(256);
    let mut inv_sqrt = Vec::with_capacity(kpts);
    for j in 0..kpts {
        let k = 2.0 * PI * j as f64 / kpts as f64;
        let mut symbol = Matrix2::<Complex64>::zeros();
        for (i, s) in gram.iter().enumerate() {
            let d = i as i64 - reach;
            let phase = Complex64::from_polar(1.0, k * d as f64);
            for a in 0..2 {
                for b in 0..2 {
                    symbol[(a, b)] += s[a][b] * phase;
                }
            }
        }
        let eig = SymmetricEigen::new(symbol);
        let mut w = Matrix2::<Complex64>::zeros();
        for m in 0..2 {
            let v = eig.eigenvectors.column(m);
            let f = eig.eigenvalues[m].powf(-0.5);
            w += v * v.adjoint() * Complex64::new(f, 0.0);
        }
        inv_sqrt.push(w);
    }

    // Real-space coefficients w^{bc}(d), |d| < kpts/2.
    let half = (kpts / 2) as i64;
    let mut coeff = Vec::with_capacity(kpts);
    for d in -half + 1..half {
        let mut w = [[0.0; 2]; 2];
        for (j, sym) in inv_sqrt.iter().enumerate() {
            let k = 2.0 * PI * j as f64 / kpts as f64;
            let phase = Complex64::from_polar(1.0 / kpts as f64, -k * d as f64);
            for b in 0..2 {
                for c in 0..2 {
                    w[b][c] += (sym[(b, c)] * phase).re;
                }
            }
        }
        coeff.push((d, w));
    }
    let cutoff = 1e-13;
    let range = coeff
        .iter()
        .filter(|(d, w)| {
            let off = w
                .iter()
                .enumerate()
                .flat_map(|(b, row)| {
                    row.iter()
                        .enumerate()
                        .map(move |(c, v)| if b == c && *d == 0 { v - 1.0 } else { *v })
                })
                .fold(0.0_f64, |m, v| m.max(v.abs()));
            off > cutoff
        })
        .map(|(d, _)| d.abs())
        .max()
        .unwrap_or(0) as usize;

    let window_wells = hw + range;
    let len = 2 * window_wells * ppw + 1;
    let mut out = [vec![0.0; len], vec![0.0; len]];
    // φ̃^c(x) = Σ_n Σ_b w^{bc}(−n) φ^b(x − n)
    for (d, w) in &coeff {
        if d.unsigned_abs() as usize > range {
            continue;
        }
        let n = -*d;
        let start = ((window_wells as i64 - hw as i64 + n) * ppw as i64) as usize;
        for c in 0..2 {
            for b in 0..2 {
                let f = w[b][c];
                if f == 0.0 {
                    continue;
                }
                for (j, p) in states[b].iter().enumerate() {
                    out[c][start + j] += f * p;
                }
            }
        }
    }
    let [phi_g, phi_e] = out;
    Orthonormalized {
        phi_g,
        phi_e,
        window_wells,
        raw_overlap,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ladder() -> WsLadder {
        solve_ws(&LatticeParams::default()).unwrap()
    }

    #[test]
    fn stencil_is_consistent() {
        let sum: f64 = STENCIL[0] + 2.0 * STENCIL[1..].iter().sum::<f64>();
        assert!(sum.abs() < 1e-14);
        let second: f64 = 2.0 * STENCIL.iter().enumerate().map(|(j, c)| c * (j * j) as f64).sum::<f64>();
        assert!((second - 2.0).abs() < 1e-13);
    }

    #[test]
    fn kinetic_symbol_matches_parabola_at_small_k() {
        let dx = 1.0 / 32.0;
        let k = 3.0;
        let exact = k * k / (2.0 * M_STAR);
        assert!((kinetic_symbol(k, dx) - exact).abs() < 1e-10);
    }

    #[test]
    fn rejects_invalid_params() {
        let p = LatticeParams { v1: -1.0, ..LatticeParams::default() };
        assert!(matches!(solve_ws(&p), Err(Error::InvalidParameter { name: "v1", .. })));
        let p = LatticeParams { grid_points_per_well: 16, ..LatticeParams::default() };
        assert!(p.validate().is_err());
        let p = LatticeParams { domain_half_width: 3, ..LatticeParams::default() };
        assert!(p.validate().is_err());
    }

    #[test]
    fn shallow_lattice_has_no_excited_state() {
        let p = LatticeParams {
            v1: 0.3,
            ..LatticeParams::default()
        };
        assert!(matches!(solve_ws(&p), Err(Error::NoBoundExcitedState { .. })));
    }

    #[test]
    fn states_are_normalized_with_positive_peak() {
        let l = ladder();
        for level in Level::BOTH {
            let s = l.state(level);
            let norm: f64 = s.iter().map(|p| p * p).sum::<f64>() * l.dx();
            assert!((norm - 1.0).abs() < 1e-10);
            let peak = s
                .iter()
                .copied()
                .fold(0.0_f64, |m, p| if p.abs() > m.abs() { p } else { m });
            assert!(peak > 0.0);
        }
        let cross: f64 = l.phi_g.iter().zip(&l.phi_e).map(|(a, b)| a * b).sum::<f64>() * l.dx();
        assert!(cross.abs() < 1e-8);
        assert!(l.eigen_residual < 1e-10);
    }

    #[test]
    fn translation_identities() {
        let l = ladder();
        assert_eq!(l.translate_state(Level::Ground, 0).unwrap(), l.phi_g);
        let there = l.translate_state(Level::Excited, 1).unwrap();
        let back = shifted(&there, -(l.ppw() as i64));
        let err = back
            .iter()
            .zip(&l.phi_e)
            .take(l.len() - l.ppw())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(err < 1e-12);
        assert!((l.energy(Level::Ground, 4) - l.energy(Level::Ground, 3) - 1.0).abs() < 1e-15);
        let limit = l.window_wells as i64 - 2;
        assert!(matches!(
            l.translate_state(Level::Ground, limit + 1),
            Err(Error::OutOfDomain { .. })
        ));
    }
}
