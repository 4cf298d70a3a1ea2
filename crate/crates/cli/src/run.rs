//! Scenario pipeline: ladder, couplings, engines, analysis, tables.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use wsdirac::couplings::{compile_couplings, compute_overlaps, tune_balanced_amplitudes, CouplingTable};
use wsdirac::discrete::{band_structure, init_wavepacket, DiscreteModel, ModelKind, SpinorField};
use wsdirac::exact::{calibrate, project_to_ws, synthesize_from_spinor, ExactConfig, ExactEngine, GridSpec};
use wsdirac::observables::{
    drift_velocity, effective_constants, fit_zitterbewegung, mean_position, Atom, DensitySnapshot, ZbGuess,
    ATOMIC_MASS_UNIT,
};
use wsdirac::ws::{solve_ws, Level, WsLadder};

use crate::config::{AnalysisKind, ScenarioConfig, Tolerance};
use crate::error::{CliError, Result};
use crate::manifest::{FileEntry, RunManifest};

/// Leakage may dip by this much between samples and still count as monotone.
const LEAKAGE_SLACK: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Status {
    Pass,
    Fail,
    /// The metric was not produced by this run (engine not selected).
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub metric: String,
    pub value: Option<f64>,
    pub tolerance: Tolerance,
    pub status: Status,
}

/// Series of one engine at the output stride.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    /// Time in Bloch periods.
    pub t_tb: Vec<f64>,
    pub x_mean: Vec<f64>,
    pub norm: Vec<f64>,
    /// `1 − Σ(|c_n|² + |d_n|²)` against the unit initial norm, so weight taken
    /// by the absorber counts as leaked (exact engine only).
    pub leakage: Vec<f64>,
    /// Site amplitudes; for the exact engine these are projections.
    pub fields: Vec<SpinorField>,
    /// Coarse-grained densities used by the drift analysis.
    pub densities: Vec<DensitySnapshot>,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub config: ScenarioConfig,
    pub hash: String,
    pub metrics: BTreeMap<String, f64>,
    pub checks: Vec<Check>,
    pub notes: Vec<String>,
    pub ladder: WsLadder,
    pub table: CouplingTable,
    pub discrete: Option<Trajectory>,
    pub exact: Option<Trajectory>,
    /// `(file name, contents)` in write order.
    pub tables: Vec<(String, String)>,
}

impl Outcome {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.status != Status::Fail)
    }

    pub fn failed(&self) -> Vec<String> {
        self.checks
            .iter()
            .filter(|c| c.status == Status::Fail)
            .map(|c| c.metric.clone())
            .collect()
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        self.metrics.get(name).copied()
    }
}

/// Run the pipeline in memory.
pub fn simulate(config: &ScenarioConfig) -> Result<Outcome> {
    config.validate()?;
    let ctx = |source| CliError::Simulation {
        scenario: config.name.clone(),
        source,
    };
    let ladder = solve_ws(&config.lattice_params()).map_err(ctx)?;
    let untuned = config.modulation(ladder.omega_b, ladder.delta)?;
    let overlaps = compute_overlaps(&ladder, &untuned).map_err(ctx)?;
    let spec = match config.modulation.tune.tuning() {
        Some(t) => tune_balanced_amplitudes(&untuned, &overlaps, t).map_err(ctx)?,
        None => untuned,
    };
    let table = compile_couplings(&spec, &overlaps).map_err(ctx)?;
    let kind = config.run.model;
    let (e0, hopping) = if kind.is_spinor4() {
        (table.spinor4_mass(), table.spinor4_hopping().re)
    } else {
        (table.spinor2_mass(), table.spinor2_hopping().re)
    };
    let tb = 2.0 * PI / ladder.omega_b;

    let mut metrics = BTreeMap::new();
    let mut notes = Vec::new();
    metrics.insert("delta".to_string(), ladder.delta);
    metrics.insert(
        "overlap_g0_cospi_g1".into(),
        overlaps.cospi(Level::Ground, Level::Ground, 1),
    );
    metrics.insert("e0".into(), e0);
    metrics.insert("hopping".into(), hopping);

    let sites = 2 * config.lattice.half_width;
    let f0 = init_wavepacket(&config.wavepacket(), sites).map_err(ctx)?;

    let discrete = if config.run.engine.discrete() {
        Some(run_discrete(config, &table, kind, &f0, tb).map_err(ctx)?)
    } else {
        None
    };
    let exact = if config.run.engine.exact() {
        Some(run_exact(config, &ladder, &spec, &f0, tb, &mut notes).map_err(ctx)?)
    } else {
        None
    };

    for (label, tr) in [("discrete", &discrete), ("exact", &exact)] {
        let Some(tr) = tr else { continue };
        if label == "discrete" || !config.run.absorber {
            let drift = tr.norm.iter().map(|n| (n - 1.0).abs()).fold(0.0, f64::max);
            metrics.insert(format!("norm_drift_{label}"), drift);
        }
    }
    if let Some(ex) = &exact {
        let max = ex.leakage.iter().copied().fold(0.0, f64::max);
        let monotone = ex.leakage.windows(2).all(|w| w[1] >= w[0] - LEAKAGE_SLACK);
        metrics.insert("leakage_max_exact".into(), max);
        metrics.insert("leakage_monotone_exact".into(), if monotone { 1.0 } else { 0.0 });
    }
    if let (Some(d), Some(e)) = (&discrete, &exact) {
        let pd = d.fields.last().expect("at least one sample").density();
        let pe = e.fields.last().expect("at least one sample").density();
        let num: f64 = pe.iter().zip(&pd).map(|(a, b)| (a - b).powi(2)).sum();
        let den: f64 = pd.iter().map(|b| b * b).sum();
        metrics.insert("l2_density_final".into(), (num / den).sqrt());
        let n = d.x_mean.len().min(e.x_mean.len());
        let ms = (0..n).map(|i| (d.x_mean[i] - e.x_mean[i]).powi(2)).sum::<f64>() / n as f64;
        metrics.insert("xmean_rms_difference".into(), ms.sqrt());
    }

    let mut bands = None;
    match config.analysis.kind {
        AnalysisKind::None => {}
        AnalysisKind::Drift => {
            let from = config.analysis.drift_from_tb.unwrap_or(0.5 * config.run.t_final_tb);
            for (label, tr) in [("discrete", &discrete), ("exact", &exact)] {
                let Some(tr) = tr else { continue };
                let i = nearest(&tr.t_tb, from);
                match drift_velocity(&tr.densities[i], tr.densities.last().expect("samples")) {
                    Ok((l, r)) => {
                        metrics.insert(format!("drift_left_{label}"), l);
                        metrics.insert(format!("drift_right_{label}"), r);
                    }
                    Err(e) => notes.push(format!("{label} drift: {e}")),
                }
            }
        }
        AnalysisKind::Zitterbewegung => {
            let guess = ZbGuess {
                e0,
                omega: hopping,
                sigma: config.packet.sigma,
                omega_b: ladder.omega_b,
            };
            let t_zb = PI / e0.abs();
            for (label, tr) in [("discrete", &discrete), ("exact", &exact)] {
                let Some(tr) = tr else { continue };
                let t: Vec<f64> = tr.t_tb.iter().map(|t| t * tb).collect();
                match fit_zitterbewegung(&t, &tr.x_mean, guess) {
                    Ok(fit) => {
                        metrics.insert(format!("zb_period_tb_{label}"), fit.period);
                        metrics.insert(format!("zb_amplitude_{label}"), fit.amplitude);
                        metrics.insert(
                            format!("zb_attenuation_{label}"),
                            fit.envelope(config.analysis.attenuation_at_tzb * t_zb),
                        );
                        metrics.insert(format!("zb_r_squared_{label}"), fit.r_squared);
                    }
                    Err(wsdirac::Error::NoOscillation { peak, .. }) => {
                        metrics.insert(format!("zb_amplitude_{label}"), peak);
                        notes.push(format!("{label}: no oscillation above the floor (peak {peak:.3e})"));
                    }
                    Err(e) => notes.push(format!("{label} fit: {e}")),
                }
            }
        }
        AnalysisKind::Bands => {
            let m = config.analysis.band_samples;
            let ks: Vec<f64> = (1..=m).map(|j| -0.5 * PI + PI * j as f64 / m as f64).collect();
            let b = band_structure(e0, hopping, &ks);
            metrics.insert(
                "gap_at_zero".into(),
                2.0 * band_structure(e0, hopping, &[0.0]).omega_plus[0],
            );
            bands = Some(b);
        }
    }
    if e0 != 0.0 && hopping != 0.0 {
        let atom = Atom {
            mass_kg: config.analysis.atom_mass_amu * ATOMIC_MASS_UNIT,
        };
        let k = effective_constants(e0, hopping, atom, config.analysis.lambda_l_nm * 1e-9).map_err(ctx)?;
        metrics.insert("m_bar".into(), k.m_bar);
        metrics.insert("c_bar".into(), k.c_bar);
        metrics.insert("m_bar_atom_masses".into(), k.m_bar_atom_masses);
        metrics.insert("c_bar_recoil".into(), k.c_bar_recoil);
    }

    let checks = config
        .tolerances
        .iter()
        .map(|(name, tol)| {
            let value = metrics.get(name).copied();
            let status = match value {
                None if skipped(name, config) => Status::Skipped,
                None => Status::Fail,
                Some(v) if tol.accepts(v) => Status::Pass,
                Some(_) => Status::Fail,
            };
            Check {
                metric: name.clone(),
                value,
                tolerance: *tol,
                status,
            }
        })
        .collect();

    let hash = config.hash();
    let mut outcome = Outcome {
        config: config.clone(),
        hash,
        metrics,
        checks,
        notes,
        ladder,
        table,
        discrete,
        exact,
        tables: Vec::new(),
    };
    outcome.tables = render_tables(&outcome, &overlaps, bands.as_ref());
    Ok(outcome)
}

/// Metrics that belong to an engine the run did not use.
fn skipped(name: &str, config: &ScenarioConfig) -> bool {
    let e = config.run.engine;
    (name.ends_with("_exact") && !e.exact())
        || (name.ends_with("_discrete") && !e.discrete())
        || ((name == "l2_density_final" || name == "xmean_rms_difference") && !(e.exact() && e.discrete()))
}

fn nearest(ts: &[f64], t: f64) -> usize {
    ts.iter()
        .enumerate()
        .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
        .map_or(0, |(i, _)| i)
}

fn run_discrete(
    config: &ScenarioConfig,
    table: &CouplingTable,
    kind: ModelKind,
    f0: &SpinorField,
    tb: f64,
) -> wsdirac::Result<Trajectory> {
    let model = DiscreteModel::new(table, kind);
    let stride_t = config.run.stride_tb * tb;
    let mut per_stride = (config.run.stride_tb / config.run.dt_tb).round().max(1.0) as usize;
    while stride_t / per_stride as f64 > model.max_dt() {
        per_stride *= 2;
    }
    let dt = stride_t / per_stride as f64;
    let mut tr = Trajectory::default();
    let mut field = f0.clone();
    model.evolve(&mut field, config.run.t_final_tb * tb, dt, per_stride, |f| {
        tr.t_tb.push(f.t / tb);
        tr.x_mean.push(mean_position(f));
        tr.norm.push(f.norm_sqr());
        tr.fields.push(f.clone());
        tr.densities.push(DensitySnapshot::from_field(f));
    })?;
    Ok(tr)
}

fn run_exact(
    config: &ScenarioConfig,
    ladder: &WsLadder,
    spec: &wsdirac::couplings::ModulationSpec,
    f0: &SpinorField,
    tb: f64,
    notes: &mut Vec<String>,
) -> wsdirac::Result<Trajectory> {
    let hw = config.lattice.half_width;
    let grid = GridSpec::new(hw, ladder.ppw());
    let exact_cfg = ExactConfig::per_bloch_period(ladder.omega_b, config.run.steps_per_tb)
        .with_splitting(config.run.splitting)
        .with_absorber(config.run.absorber);
    let mut spec = spec.clone();
    let frame = if config.run.calibrate {
        let cal = calibrate(ladder, exact_cfg, 4)?;
        notes.push(format!(
            "exact engine calibrated: E_g {:.6e}, Delta {:.6e} (solver {:.6e}, {:.6e})",
            cal.e_g,
            cal.delta(),
            ladder.e_g,
            ladder.delta
        ));
        spec.delta = cal.delta();
        ladder.with_energies(cal.e_g, cal.delta())
    } else {
        ladder.clone()
    };
    // sites whose well centre is off the grid carry only Gaussian tails
    let mut seed = f0.clone();
    let limit = hw as i64 - 1;
    for i in 0..seed.len() {
        if (seed.first + i as i64).abs() > limit {
            seed.c[i] = Default::default();
            seed.d[i] = Default::default();
        }
    }
    let mut psi = synthesize_from_spinor(&seed, &frame, grid)?;
    let mut engine = ExactEngine::new(&ladder.params, &spec, grid, exact_cfg)?;
    let stride = (config.run.stride_tb * config.run.steps_per_tb as f64).round() as usize;
    let mut tr = Trajectory::default();
    let mut failure = None;
    engine.evolve(&mut psi, config.run.t_final_tb * tb, stride, |p| {
        if failure.is_some() {
            return;
        }
        match project_to_ws(p, &frame, f0.first, f0.len()) {
            Ok(pr) => {
                tr.t_tb.push(p.t / tb);
                tr.x_mean.push(mean_position(p));
                tr.norm.push(p.norm_sqr());
                tr.leakage.push(pr.leakage);
                tr.fields.push(pr.field);
                tr.densities.push(DensitySnapshot::from_grid(p));
            }
            Err(e) => failure = Some(e),
        }
    })?;
    match failure {
        Some(e) => Err(e),
        None => Ok(tr),
    }
}

fn header(o: &Outcome, columns: &str) -> String {
    format!(
        "# wsdirac {} scenario {} config {}\n# {columns}\n",
        env!("CARGO_PKG_VERSION"),
        o.config.name,
        o.hash
    )
}

fn render_tables(
    o: &Outcome,
    overlaps: &wsdirac::couplings::OverlapTable,
    bands: Option<&wsdirac::discrete::BandStructure>,
) -> Vec<(String, String)> {
    let mut out = Vec::new();
    let with_header = |columns: &str, body: Vec<u8>| header(o, columns) + &String::from_utf8(body).expect("utf8");

    let mut buf = Vec::new();
    o.ladder.write_table(&mut buf).expect("write to memory");
    out.push(("ladder.tsv".to_string(), with_header("Wannier-Stark ladder", buf)));
    let mut buf = Vec::new();
    overlaps.write_table(&mut buf).expect("write to memory");
    out.push(("overlaps.tsv".into(), with_header("overlap integrals", buf)));
    let mut buf = Vec::new();
    o.table.write_table(&mut buf).expect("write to memory");
    out.push(("couplings.tsv".into(), with_header("coupling table", buf)));

    let every = density_every(o);
    for (label, tr) in [("discrete", &o.discrete), ("exact", &o.exact)] {
        let Some(tr) = tr else { continue };
        let exact = label == "exact";
        let mut s = header(
            o,
            if exact {
                "t_tb\tx_mean\tnorm\tleakage"
            } else {
                "t_tb\tx_mean\tnorm"
            },
        );
        for i in 0..tr.t_tb.len() {
            let _ = write!(s, "{}\t{:.12e}\t{:.12e}", fmt_t(tr.t_tb[i]), tr.x_mean[i], tr.norm[i]);
            if exact {
                let _ = write!(s, "\t{:.12e}", tr.leakage[i]);
            }
            s.push('\n');
        }
        out.push((format!("trajectory_{label}.tsv"), s));

        let mut s = header(o, "t_tb\tn\tc_abs2\td_abs2");
        for (i, f) in tr.fields.iter().enumerate() {
            if i % every != 0 && i + 1 != tr.fields.len() {
                continue;
            }
            for (j, n) in f.sites().enumerate() {
                let _ = writeln!(
                    s,
                    "{}\t{n}\t{:.12e}\t{:.12e}",
                    fmt_t(tr.t_tb[i]),
                    f.c[j].norm_sqr(),
                    f.d[j].norm_sqr()
                );
            }
        }
        out.push((format!("density_{label}.tsv"), s));
    }

    if let Some(b) = bands {
        let mut buf = Vec::new();
        b.write_table(&mut buf).expect("write to memory");
        out.push(("bands.tsv".into(), with_header("band structure", buf)));
    }

    let mut s = header(o, "metric\tvalue\texpected\ttolerance\trel_error\tstatus");
    for c in &o.checks {
        let value = c.value.map_or("-".into(), |v| format!("{v:.6e}"));
        let expected = c.tolerance.expected.map_or("-".into(), |v| format!("{v:.6e}"));
        let rel = match (c.value, c.tolerance.expected) {
            (Some(v), Some(e)) if e != 0.0 => format!("{:.3e}", (v - e) / e.abs()),
            _ => "-".into(),
        };
        let status = match c.status {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::Skipped => "SKIP",
        };
        let _ = writeln!(s, "{}\t{value}\t{expected}\t{}\t{rel}\t{status}", c.metric, c.tolerance);
    }
    s.push_str("# all metrics\n");
    for (k, v) in &o.metrics {
        let _ = writeln!(s, "# {k}\t{v:.10e}");
    }
    for n in &o.notes {
        let _ = writeln!(s, "# note: {n}");
    }
    out.push(("report.tsv".into(), s));
    out
}

/// Stride between density blocks so that about ten are written.
fn density_every(o: &Outcome) -> usize {
    let samples = (o.config.run.t_final_tb / o.config.run.stride_tb).round().max(1.0);
    ((samples / 10.0).round() as usize).max(1)
}

fn fmt_t(t: f64) -> String {
    format!("{t:.6}")
}

/// Run, write every table under `out_dir`, and write `manifest.json` there.
pub fn run_scenario(config: &ScenarioConfig, out_dir: &Path) -> Result<(Outcome, RunManifest)> {
    let started = chrono::Utc::now();
    let outcome = simulate(config)?;
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let mut files = Vec::new();
    for (name, contents) in &outcome.tables {
        let path: PathBuf = out_dir.join(name);
        std::fs::write(&path, contents).map_err(|e| CliError::io(&path, e))?;
        files.push(FileEntry::of_bytes(name, contents.as_bytes()));
    }
    let manifest = RunManifest {
        scenario: config.name.clone(),
        config_hash: outcome.hash.clone(),
        software_version: env!("CARGO_PKG_VERSION").into(),
        started: started.to_rfc3339(),
        finished: chrono::Utc::now().to_rfc3339(),
        files,
        metrics: outcome.metrics.clone(),
        checks: outcome.checks.clone(),
        passed: outcome.passed(),
    };
    manifest.write(&out_dir.join(crate::manifest::MANIFEST_FILE))?;
    Ok((outcome, manifest))
}
