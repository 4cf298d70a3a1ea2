mod common;

use std::f64::consts::PI;

use approx::assert_abs_diff_eq;
use nalgebra::Matrix2;
use num_complex::Complex64 as C;
use proptest::prelude::*;
use wsdirac::couplings::{
    compile_couplings, compute_overlaps, tune_balanced_amplitudes, Channel, CouplingTable, ModulationSpec, Parity,
    Tuning,
};
use wsdirac::discrete::{
    band_structure, continuum_residual, envelopes, from_kspace, init_wavepacket, kblock_hamiltonian, step_discrete,
    to_kspace, DiscreteModel, ModelKind, SpinorField, WavepacketInit,
};
use wsdirac::Error;

use common::{ladder, tb};

fn table(spec: &ModulationSpec) -> CouplingTable {
    compile_couplings(spec, &compute_overlaps(ladder(), spec).unwrap()).unwrap()
}

fn massless_table() -> CouplingTable {
    table(
        &ModulationSpec::for_ladder(ladder())
            .with_depths(0.0, 1.0, 0.0)
            .with_term(2, 1, 0, C::new(0.25, 0.0))
            .unwrap(),
    )
}

fn massive_table() -> CouplingTable {
    table(
        &ModulationSpec::for_ladder(ladder())
            .with_depths(0.0, 1.0, 0.0)
            .with_term(2, 1, 0, C::new(0.25, 0.0))
            .unwrap()
            .with_term(2, 0, 0, C::new(0.005, 0.0))
            .unwrap(),
    )
}

fn dirac4_table() -> CouplingTable {
    let spec = ModulationSpec::for_ladder(ladder())
        .with_depths(6.0, 0.0, 0.0)
        .with_term(1, 1, 1, C::new(0.0, -5.0e-3))
        .unwrap();
    let o = compute_overlaps(ladder(), &spec).unwrap();
    let tuned = tune_balanced_amplitudes(&spec, &o, Tuning::Dirac).unwrap();
    compile_couplings(&tuned, &o).unwrap()
}

fn weyl_table() -> CouplingTable {
    let spec = ModulationSpec::for_ladder(ladder())
        .with_depths(0.0, 1.0, 0.0)
        .with_term(2, 1, 1, C::new(0.0, 0.05))
        .unwrap();
    let o = compute_overlaps(ladder(), &spec).unwrap();
    let tuned = tune_balanced_amplitudes(&spec, &o, Tuning::Weyl).unwrap();
    compile_couplings(&tuned, &o).unwrap()
}

fn one() -> C {
    C::new(1.0, 0.0)
}

fn zero() -> C {
    C::default()
}

/// `exp(−iHt)` for a Hermitian 2×2 `H = a0 + a·σ`.
fn expm2(h: [[C; 2]; 2], t: f64) -> [[C; 2]; 2] {
    let a0 = 0.5 * (h[0][0] + h[1][1]).re;
    let az = 0.5 * (h[0][0] - h[1][1]).re;
    let ax = h[0][1].re;
    let ay = -h[0][1].im;
    let a = (ax * ax + ay * ay + az * az).sqrt();
    let ph = C::from_polar(1.0, -a0 * t);
    let (c, s) = ((a * t).cos(), if a == 0.0 { 0.0 } else { (a * t).sin() / a });
    let i = C::i();
    [
        [ph * (c - i * s * az), ph * (-i * s * C::new(ax, -ay))],
        [ph * (-i * s * C::new(ax, ay)), ph * (c + i * s * az)],
    ]
}

/// Bloch Hamiltonian for `c_{2m} = u e^{−2imk}`, `c_{2m+1} = v e^{−i(2m+1)k}` built by hand.
fn bloch(t: &CouplingTable, k: f64) -> [[C; 2]; 2] {
    let g = |p, r| t.get(p, r, Channel::GG);
    let fwd = C::from_polar(1.0, -k);
    let bwd = C::from_polar(1.0, k);
    [
        [g(Parity::Even, 0), g(Parity::Even, 1) * fwd + g(Parity::Even, -1) * bwd],
        [g(Parity::Odd, 1) * fwd + g(Parity::Odd, -1) * bwd, g(Parity::Odd, 0)],
    ]
}

#[test]
fn spinor2_packet_has_empty_odd_sites() {
    let f = init_wavepacket(&WavepacketInit::spinor2(one(), zero(), 0.0, 10.0), 1024).unwrap();
    for (i, n) in f.sites().enumerate() {
        if n % 2 != 0 {
            assert_eq!(f.c[i], zero());
        }
        assert_eq!(f.d[i], zero());
    }
    let c0 = f.c_at(0).re;
    for n in [2_i64, 10, 20] {
        let expect = c0 * (-(n * n) as f64 / 100.0).exp();
        assert_abs_diff_eq!(f.c_at(n).re, expect, epsilon = 1e-14);
        assert_abs_diff_eq!(f.c_at(-n).re, expect, epsilon = 1e-14);
    }
}

#[test]
fn symmetric_packet_is_centred() {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let f = init_wavepacket(
        &WavepacketInit::spinor2(C::new(s, 0.0), C::new(s, 0.0), 0.0, 10.0),
        1024,
    )
    .unwrap();
    let mean: f64 = f.sites().zip(f.density()).map(|(n, p)| n as f64 * p).sum();
    assert!(mean.abs() < 1e-6);
}

#[test]
fn packet_must_fit_lattice() {
    let init = WavepacketInit::spinor2(one(), zero(), 0.0, 20.0);
    assert!(matches!(init_wavepacket(&init, 100), Err(Error::PacketTooWide { .. })));
    let bad = WavepacketInit::spinor2(one(), one(), 0.0, 10.0);
    assert!(matches!(
        init_wavepacket(&bad, 1024),
        Err(Error::InvalidParameter { .. })
    ));
}

#[test]
fn zero_table_leaves_field_unchanged() {
    let f = init_wavepacket(&WavepacketInit::spinor2(one(), zero(), 0.3, 10.0), 256).unwrap();
    let t = CouplingTable::zero(1.0, 5.66);
    for dt in [0.01, 1.0, 100.0] {
        for kind in [ModelKind::General, ModelKind::Spinor2, ModelKind::Spinor4Dirac] {
            let out = step_discrete(&f, &t, kind, dt).unwrap();
            assert_eq!(out.c, f.c);
            assert_eq!(out.d, f.d);
        }
    }
}

#[test]
fn step_above_margin_is_rejected() {
    let t = massless_table();
    let m = DiscreteModel::new(&t, ModelKind::Spinor2);
    let mut f = init_wavepacket(&WavepacketInit::spinor2(one(), zero(), 0.0, 10.0), 256).unwrap();
    assert!(matches!(
        m.step(&mut f, 2.0 * m.max_dt()),
        Err(Error::InvalidParameter { .. })
    ));
}

#[test]
fn packet_at_edge_leaks() {
    let t = massless_table();
    let m = DiscreteModel::new(&t, ModelKind::Spinor2);
    let mut f = init_wavepacket(&WavepacketInit::spinor2(one(), zero(), 0.0, 10.0), 64).unwrap();
    let r = m.evolve(&mut f, 200.0 * tb(), 0.01 * tb(), 1000, |_| {});
    assert!(matches!(r, Err(Error::EdgeLeak { .. })));
}

#[test]
fn plane_wave_acquires_band_phase() {
    let t = massless_table();
    let omega = t.spinor2_hopping().re;
    let model = DiscreteModel::new(&t, ModelKind::Spinor2).without_edge_check();
    let len = 512;
    for k in [0.3, 1.1] {
        let h = bloch(&t, k);
        for branch in [1.0, -1.0] {
            let w = branch * 2.0 * (omega * k.sin()).abs();
            // eigenvector of [[0, b], [b*, 0]] for eigenvalue w
            let v = [one(), C::new(w, 0.0) / h[0][1]];
            let norm = (1.0 + v[1].norm_sqr()).sqrt();
            let mut f = SpinorField::centered(len).unwrap();
            for (i, n) in (f.first..=f.last()).enumerate() {
                let comp = if n.rem_euclid(2) == 0 { v[0] } else { v[1] };
                f.c[i] = comp / norm * C::from_polar(1.0, -k * n as f64);
            }
            let start = f.clone();
            model
                .evolve(&mut f, 10.0 * tb(), 0.01 * tb(), usize::MAX, |_| {})
                .unwrap();
            let phase = C::from_polar(1.0, -w * f.t);
            for n in -100..100 {
                let i = f.index(n).unwrap();
                assert!((f.c[i] - start.c[i] * phase).norm() < 1e-6, "k {k} n {n}");
            }
        }
    }
}

#[test]
fn kspace_of_single_site_is_flat() {
    let mut f = SpinorField::centered(64).unwrap();
    let i = f.index(0).unwrap();
    f.c[i] = one();
    let ks = to_kspace(&f);
    for z in &ks.c_plus {
        assert_abs_diff_eq!(z.norm(), 1.0, epsilon = 1e-14);
    }
    assert!(ks.c_minus.iter().all(|z| z.norm() < 1e-14));
}

#[test]
fn kspace_matches_direct_sum() {
    let f = init_wavepacket(
        &WavepacketInit::spinor4(
            [
                C::new(0.5, 0.1),
                C::new(-0.3, 0.4),
                C::new(0.2, 0.0),
                C::new(0.0, -0.45f64.sqrt()),
            ],
            0.4,
            6.0,
        ),
        96,
    )
    .unwrap();
    let ks = to_kspace(&f);
    for (ik, &k) in ks.k.iter().enumerate() {
        let mut cp = zero();
        let mut cm = zero();
        let mut dm = zero();
        for n in f.sites() {
            let e = C::from_polar(1.0, k * n as f64);
            if n.rem_euclid(2) == 0 {
                cp += e * f.c_at(n);
            } else {
                cm += e * f.c_at(n);
                dm += e * f.d_at(n);
            }
        }
        assert!((ks.c_plus[ik] - cp).norm() < 1e-12);
        assert!((ks.c_minus[ik] - cm).norm() < 1e-12);
        assert!((ks.d_minus[ik] - dm).norm() < 1e-12);
    }
}

#[test]
fn kspace_peak_at_carrier() {
    let f = init_wavepacket(&WavepacketInit::spinor2(one(), zero(), 0.3, 10.0), 1024).unwrap();
    let ks = to_kspace(&f);
    let (ipk, _) = ks
        .c_plus
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.norm().total_cmp(&b.1.norm()))
        .unwrap();
    let step = ks.k[1] - ks.k[0];
    assert!((ks.k[ipk] - 0.3).abs() <= step);
}

#[test]
fn dirac_point_and_band_values() {
    let b = band_structure(0.0, -5.4e-3, &[0.0, PI / 2.0]);
    assert_eq!(b.omega_plus[0], 0.0);
    assert_eq!(b.omega_minus[0], 0.0);
    assert_abs_diff_eq!(b.omega_plus[1], 1.08e-2, epsilon = 1e-15);
}

#[test]
fn massless_eigenspinors() {
    for omega in [-5.4e-3, 3e-3] {
        let ks = [-0.01, -1e-4, 1e-4, 0.01, 0.5];
        let b = band_structure(0.0, omega, &ks);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        for (i, &k) in ks.iter().enumerate() {
            let s = (omega * k).signum();
            let plus = b.spinor_plus[i];
            let minus = b.spinor_minus[i];
            assert!((plus[0] - C::new(r, 0.0)).norm() < 1e-10);
            assert!((plus[1] - C::new(0.0, s * r)).norm() < 1e-10);
            assert!((minus[1] - C::new(0.0, -s * r)).norm() < 1e-10);
        }
    }
}

#[test]
fn bands_are_pi_periodic_with_linear_slope() {
    let omega = -5.4e-3;
    let ks: Vec<f64> = (0..40).map(|j| -PI + 0.1 + j as f64 * 0.15).collect();
    let shifted: Vec<f64> = ks.iter().map(|k| k + PI).collect();
    let a = band_structure(2e-3, omega, &ks);
    let b = band_structure(2e-3, omega, &shifted);
    for i in 0..ks.len() {
        assert_abs_diff_eq!(a.omega_plus[i], -a.omega_minus[i]);
        assert_abs_diff_eq!(a.omega_plus[i], b.omega_plus[i], epsilon = 1e-15);
    }
    let h = 1e-7;
    let s = band_structure(0.0, omega, &[h]);
    assert_abs_diff_eq!(s.omega_plus[0] / h, 2.0 * omega.abs(), epsilon = 1e-9);
}

#[test]
fn kblock_agrees_with_hand_built_bloch_matrix() {
    for t in [massless_table(), massive_table()] {
        for k in [-1.3, -0.2, 0.0, 0.7, 1.5] {
            let m = kblock_hamiltonian(&t, k);
            let h = bloch(&t, k);
            for a in 0..2 {
                for b in 0..2 {
                    assert!((m[(a, b)] - h[a][b]).norm() < 1e-16);
                }
            }
        }
    }
}

#[test]
fn eigenspinors_solve_the_band_problem() {
    let t = massive_table();
    let e0 = t.spinor2_mass();
    let omega = t.spinor2_hopping().re;
    let ks: Vec<f64> = (0..25).map(|j| -1.5 + 0.125 * j as f64).collect();
    let b = band_structure(e0, omega, &ks);
    for (i, &k) in ks.iter().enumerate() {
        let h: Matrix2<C> = kblock_hamiltonian(&t, k);
        for (w, v) in [
            (b.omega_plus[i], b.spinor_plus[i]),
            (b.omega_minus[i], b.spinor_minus[i]),
        ] {
            let r = h * v - v * C::new(w, 0.0);
            assert!(r.norm() < 1e-10 * (1.0 + w.abs()));
            assert_abs_diff_eq!(v.norm(), 1.0, epsilon = 1e-12);
        }
    }
}

#[test]
fn kspace_evolution_matches_site_evolution() {
    let t = massive_table();
    let f0 = init_wavepacket(
        &WavepacketInit::spinor2(C::new(0.6, 0.0), C::new(0.0, 0.8), 0.2, 10.0),
        256,
    )
    .unwrap();
    let mut f = f0.clone();
    let model = DiscreteModel::new(&t, ModelKind::Spinor2);
    model
        .evolve(&mut f, 10.0 * tb(), 0.01 * tb(), usize::MAX, |_| {})
        .unwrap();
    let site_then_k = to_kspace(&f);

    let mut ks = to_kspace(&f0);
    for i in 0..ks.k.len() {
        let u = expm2(bloch(&t, ks.k[i]), f.t);
        let (p, m) = (ks.c_plus[i], ks.c_minus[i]);
        ks.c_plus[i] = u[0][0] * p + u[0][1] * m;
        ks.c_minus[i] = u[1][0] * p + u[1][1] * m;
    }
    let mut err: f64 = 0.0;
    for i in 0..ks.k.len() {
        err = err
            .max((ks.c_plus[i] - site_then_k.c_plus[i]).norm())
            .max((ks.c_minus[i] - site_then_k.c_minus[i]).norm());
    }
    // k-space amplitudes are O(σ); compare relative to that scale
    let scale = ks.c_plus.iter().map(|z| z.norm()).fold(0.0, f64::max);
    assert!(err / scale < 1e-6, "{}", err / scale);
}

#[test]
fn envelopes_split_sublattices() {
    let f = init_wavepacket(&WavepacketInit::spinor2(one(), zero(), 0.0, 10.0), 256).unwrap();
    let env = envelopes(&f);
    assert!(env.c_minus.iter().all(|z| z.norm() == 0.0));
    assert!(env.d_plus.iter().chain(&env.d_minus).all(|z| z.norm() == 0.0));
}

/// Least-squares fit of `ln|u| = a + b x + c x²`, returning the Gaussian width.
fn fitted_width(x: &[f64], u: &[C]) -> f64 {
    let peak = u.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let mut ata = nalgebra::Matrix3::<f64>::zeros();
    let mut atb = nalgebra::Vector3::<f64>::zeros();
    for (x, z) in x.iter().zip(u) {
        if z.norm() < 1e-3 * peak {
            continue;
        }
        let row = nalgebra::Vector3::new(1.0, *x, x * x);
        ata += row * row.transpose();
        atb += row * z.norm().ln();
    }
    let sol = ata.lu().solve(&atb).unwrap();
    (-1.0 / sol[2]).sqrt()
}

#[test]
fn envelopes_are_gaussian_of_packet_width() {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let f = init_wavepacket(&WavepacketInit::spinor2(C::new(s, 0.0), C::new(0.0, s), 0.0, 10.0), 512).unwrap();
    let env = envelopes(&f);
    for u in [&env.c_plus, &env.c_minus] {
        let w = fitted_width(&env.x, u);
        assert!((w - 10.0).abs() < 0.2, "{w}");
    }
    assert!((env.norm_sqr() - 1.0).abs() < 0.01);
}

fn residual_for(sigma: f64) -> f64 {
    let t = massless_table();
    let n = 1024;
    let mut f = init_wavepacket(&WavepacketInit::spinor2(one(), zero(), 0.0, sigma), n).unwrap();
    let model = DiscreteModel::new(&t, ModelKind::Spinor2);
    let mut hist = Vec::new();
    model
        .evolve(&mut f, 60.0 * tb(), 0.01 * tb(), 100, |f| hist.push(f.clone()))
        .unwrap();
    continuum_residual(&hist, &t, ModelKind::Spinor2)
}

#[test]
fn continuum_residual_is_small_for_broad_packets() {
    let wide = residual_for(20.0);
    let narrow = residual_for(10.0);
    assert!(wide < 0.05, "{wide}");
    let ratio = narrow / wide;
    assert!((3.0..5.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn continuum_residual_of_static_empty_field_is_zero() {
    let f = SpinorField::centered(64).unwrap();
    let hist = vec![f.clone(), f.clone(), f];
    assert_eq!(continuum_residual(&hist, &massless_table(), ModelKind::Spinor2), 0.0);
}

#[test]
fn norm_is_conserved_for_every_model() {
    let cases = [
        (massive_table(), ModelKind::Spinor2),
        (massive_table(), ModelKind::General),
        (dirac4_table(), ModelKind::Spinor4Dirac),
        (weyl_table(), ModelKind::Spinor4Weyl),
    ];
    for (t, kind) in cases {
        let h = 0.5;
        let init = WavepacketInit::spinor4(
            [C::new(h, 0.0), C::new(h, 0.0), C::new(h, 0.0), C::new(0.0, h)],
            0.0,
            10.0,
        );
        let mut f = init_wavepacket(&init, 1024).unwrap();
        let model = DiscreteModel::new(&t, kind);
        let dt = (0.01 * tb()).min(model.max_dt());
        model.evolve(&mut f, 300.0 * tb(), dt, usize::MAX, |_| {}).unwrap();
        assert!((f.norm_sqr() - 1.0).abs() < 1e-8, "{kind:?} {}", f.norm_sqr());
    }
}

#[test]
fn spinor2_runs_keep_excited_ladder_empty() {
    let t = dirac4_table();
    let mut f = init_wavepacket(&WavepacketInit::spinor2(one(), zero(), 0.0, 10.0), 256).unwrap();
    let model = DiscreteModel::new(&t, ModelKind::Spinor2);
    model
        .evolve(&mut f, 20.0 * tb(), 0.01 * tb(), usize::MAX, |_| {})
        .unwrap();
    assert!(f.d.iter().all(|z| *z == zero()));
}

#[test]
fn dirac_sublattices_decouple() {
    let t = dirac4_table();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    // c on even sites, d on odd sites
    let init = WavepacketInit::spinor4([C::new(s, 0.0), zero(), zero(), C::new(0.0, s)], 0.0, 10.0);
    let mut f = init_wavepacket(&init, 512).unwrap();
    let model = DiscreteModel::new(&t, ModelKind::Spinor4Dirac);
    model
        .evolve(&mut f, 300.0 * tb(), 0.01 * tb(), usize::MAX, |_| {})
        .unwrap();
    let mut leak: f64 = 0.0;
    for (i, n) in f.sites().enumerate() {
        if n.rem_euclid(2) == 0 {
            leak = leak.max(f.d[i].norm());
        } else {
            leak = leak.max(f.c[i].norm());
        }
    }
    assert!(leak < 1e-12, "{leak}");
}

#[test]
fn dirac_sublattice_pairs_are_degenerate() {
    let t = dirac4_table();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let len = 512;
    let mut a = init_wavepacket(
        &WavepacketInit::spinor4([C::new(s, 0.0), zero(), zero(), C::new(0.0, s)], 0.0, 10.0),
        len,
    )
    .unwrap();
    // the same envelope placed on the complementary sub-lattice (c odd, d even)
    let mut b = SpinorField::centered(len).unwrap();
    for i in 1..len {
        b.c[i] = a.c[i - 1];
        b.d[i] = a.d[i - 1];
    }
    let model = DiscreteModel::new(&t, ModelKind::Spinor4Dirac);
    model
        .evolve(&mut a, 200.0 * tb(), 0.01 * tb(), usize::MAX, |_| {})
        .unwrap();
    model
        .evolve(&mut b, 200.0 * tb(), 0.01 * tb(), usize::MAX, |_| {})
        .unwrap();
    let mut err: f64 = 0.0;
    for i in 1..len {
        err = err.max((b.c[i] - a.c[i - 1]).norm()).max((b.d[i] - a.d[i - 1]).norm());
    }
    assert!(err < 1e-10, "{err}");
}

fn displacement(t: &CouplingTable, weights: [C; 4]) -> f64 {
    let mut f = init_wavepacket(&WavepacketInit::spinor4(weights, 0.0, 10.0), 512).unwrap();
    let model = DiscreteModel::new(t, ModelKind::Spinor4Weyl);
    model
        .evolve(&mut f, 300.0 * tb(), 0.01 * tb(), usize::MAX, |_| {})
        .unwrap();
    f.sites().zip(f.density()).map(|(n, p)| n as f64 * p).sum()
}

#[test]
fn weyl_blocks_move_in_opposite_directions() {
    let t = weyl_table();
    let s = C::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    // (c+, d−) block and (d+, c−) block with the same envelope
    let first = displacement(&t, [s, zero(), zero(), s]);
    let second = displacement(&t, [zero(), s, s, zero()]);
    assert!(first.abs() > 1.0, "{first}");
    assert!(first * second < 0.0);
    assert!((first + second).abs() < 0.05 * first.abs());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn any_packet_is_normalized(
        w in prop::array::uniform4((-1.0..1.0f64, -1.0..1.0f64)),
        k0 in -1.5..1.5f64,
        sigma in 1.0..20.0f64,
    ) {
        let raw: Vec<C> = w.iter().map(|(a, b)| C::new(*a, *b)).collect();
        let norm = raw.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        prop_assume!(norm > 1e-3);
        let weights = [raw[0] / norm, raw[1] / norm, raw[2] / norm, raw[3] / norm];
        let f = init_wavepacket(&WavepacketInit::spinor4(weights, k0, sigma), 256).unwrap();
        prop_assert!((f.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kspace_round_trip_and_parseval(
        re in prop::collection::vec(-1.0..1.0f64, 64),
        im in prop::collection::vec(-1.0..1.0f64, 64),
        half_first in -40i64..40,
    ) {
        let mut f = SpinorField::zeros(2 * half_first, 32).unwrap();
        for i in 0..32 {
            f.c[i] = C::new(re[i], im[i]);
            f.d[i] = C::new(re[32 + i], im[32 + i]);
        }
        let ks = to_kspace(&f);
        prop_assert!((ks.norm_sqr() - f.norm_sqr()).abs() < 1e-10 * f.norm_sqr().max(1.0));
        let back = from_kspace(&ks);
        prop_assert!(back.max_diff(&f) < 1e-10);
    }
}
