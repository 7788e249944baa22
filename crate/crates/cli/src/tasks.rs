use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;
use std::time::Duration;

use serde_json::{json, Value};
use skyrlab_core::dynamics::{
    evolve_schrodinger, gate_field, read_checkpoint, CheckpointSpec, DriveSpec, EvolveOptions, Gate, LogicalBasis,
    TrajectoryRecord,
};
use skyrlab_core::eigensolver::{dense_spectrum_with, lanczos_lowest_with, lowest_eigenpairs, EigenResult};
use skyrlab_core::lattice::{Boundary, SpinLattice};
use skyrlab_core::observables::{
    entanglement_entropy_mixture, onsite_energy_mixture, onsite_spin_mixture, scalar_chirality_mixture,
    skyrmion_radius, structure_factor_mixture, topological_charge, ChargeMode, SpinField,
};
use skyrlab_core::operators::{build_hamiltonian, LinearOperator, SparseOperator, StateVector, C64};
use skyrlab_core::sweep::{dmi_series, run_phase_diagram, write_phase_csv, SweepOptions};
use skyrlab_core::twolevel::{
    bell_circuit, evolve_lindblad, evolve_two_level, project_two_level, qubit_entropy, readout_rotation,
    DensityMatrix2, QubitSystem, ReadoutBasis, Vector2,
};
use skyrlab_core::SkyrError;

use crate::config::{
    DiagonalizeTask, DmiSeriesTask, DriveConfig, EvolveTask, GateMode, GateTask, InitialState, LindbladTask,
    QubitSource, QubitState, ReadoutTask, RunConfig, SolverMethod, SweepTask, TaskKind,
};
use crate::{finite_or_null, CliError, Summary};

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;
/// Steps per drive period when the drive sets the time step.
const STEPS_PER_DRIVE_PERIOD: f64 = 64.0;

pub(crate) fn execute(task: TaskKind, cfg: &RunConfig, lattice: &SpinLattice) -> Result<Summary, CliError> {
    let ctx = Ctx { cfg, lattice };
    match task {
        TaskKind::Diagonalize => diagonalize(&ctx, cfg.diagonalize.as_ref().unwrap()),
        TaskKind::Sweep => sweep(&ctx, cfg.sweep.as_ref().unwrap()),
        TaskKind::Evolve => evolve(&ctx, cfg.evolve.as_ref().unwrap()),
        TaskKind::Gate => gate(&ctx, cfg.gate.as_ref().unwrap()),
        TaskKind::Lindblad => lindblad(&ctx, cfg.lindblad.as_ref().unwrap()),
        TaskKind::Readout => readout(&ctx, cfg.readout.as_ref().unwrap()),
        TaskKind::DmiSeries => series(&ctx, cfg.dmi_series.as_ref().unwrap()),
    }
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    lattice: &'a SpinLattice,
}

impl Ctx<'_> {
    fn path(&self, name: &str) -> PathBuf {
        self.cfg.output.directory.join(name)
    }

    fn csv(&self, name: &str, f: impl FnOnce(BufWriter<File>) -> skyrlab_core::Result<()>) -> Result<(), CliError> {
        if self.cfg.output.csv() {
            f(BufWriter::new(File::create(self.path(name))?))?;
        }
        Ok(())
    }

    fn json(&self, name: &str, v: &Value) -> Result<(), CliError> {
        if self.cfg.output.json() {
            let text = serde_json::to_string_pretty(v).map_err(SkyrError::from)?;
            std::fs::write(self.path(name), text + "\n")?;
        }
        Ok(())
    }

    fn hamiltonian(&self) -> Result<SparseOperator, CliError> {
        Ok(build_hamiltonian(self.lattice, &self.cfg.params)?)
    }

    fn solve(&self, h: &SparseOperator, k: usize, method: SolverMethod) -> Result<EigenResult, CliError> {
        let opts = self.cfg.lanczos.options();
        let dim = h.dim();
        let k = k.min(dim);
        let bytes = 16usize.saturating_mul(dim).saturating_mul(k + 3);
        if method != SolverMethod::Dense && bytes > opts.memory_budget {
            return Err(CliError::Resource(format!(
                "{k} eigenpairs at dimension {dim} need about {bytes} bytes, over the budget of {}",
                opts.memory_budget
            )));
        }
        let seed = self.cfg.seed;
        Ok(match method {
            SolverMethod::Auto => lowest_eigenpairs(h, k, seed, &opts)?,
            SolverMethod::Lanczos => lanczos_lowest_with(h, k, seed, &opts)?,
            SolverMethod::Dense => dense_spectrum_with(h, opts.tol_degeneracy)?.truncated(k, opts.tol_degeneracy),
        })
    }
}

fn manifold(eigs: &EigenResult) -> Vec<StateVector> {
    eigs.degeneracy_groups[0]
        .iter()
        .map(|&i| eigs.eigenvectors[i].clone())
        .collect()
}

/// Distance from the ground level to the next distinct level.
fn level_gap(eigs: &EigenResult) -> Option<f64> {
    eigs.degeneracy_groups
        .get(1)
        .map(|g| eigs.eigenvalues[g[0]] - eigs.eigenvalues[0])
}

/// Winding along the diagonal path; `None` where a path spin vanishes.
fn path_charge(field: &SpinField, lattice: &SpinLattice, mode: ChargeMode) -> Result<Option<f64>, CliError> {
    let path = lattice.diagonal_path();
    if path.len() < 2 {
        return Ok(None);
    }
    match topological_charge(field, &path, mode) {
        Ok(q) => Ok(Some(q)),
        Err(SkyrError::DegenerateInput(_)) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

fn chirality(states: &[StateVector], lattice: &SpinLattice) -> Result<Option<f64>, CliError> {
    if lattice.triangles().is_empty() {
        return Ok(None);
    }
    Ok(Some(scalar_chirality_mixture(states, lattice)?))
}

/// The charge quoted in summaries: chirality on periodic lattices, path
/// winding on open ones.
fn headline_charge(
    states: &[StateVector],
    lattice: &SpinLattice,
    mode: ChargeMode,
) -> Result<(Option<f64>, Option<f64>, Option<f64>), CliError> {
    let field = onsite_spin_mixture(states, lattice)?;
    let qc = chirality(states, lattice)?;
    let qt = path_charge(&field, lattice, mode)?;
    let q = match lattice.boundary() {
        Boundary::Periodic => qc,
        Boundary::Open => qt,
    };
    Ok((q, qc, qt))
}

fn diagonalize(ctx: &Ctx, task: &DiagonalizeTask) -> Result<Summary, CliError> {
    let lattice = ctx.lattice;
    let h = ctx.hamiltonian()?;
    let eigs = ctx.solve(&h, task.n_eigenpairs, task.method)?;
    let ground = manifold(&eigs);
    let field = onsite_spin_mixture(&ground, lattice)?;
    let (q, qc, qt) = headline_charge(&ground, lattice, task.charge_mode)?;
    let entropy = if lattice.n_sites() > 1 {
        Some(entanglement_entropy_mixture(&ground, &task.partition.sites(lattice))?)
    } else {
        None
    };
    let energy = onsite_energy_mixture(&ground, lattice, &ctx.cfg.params)?;
    let radius = if lattice.boundary() == Boundary::Open {
        skyrmion_radius(&field, lattice)?
    } else {
        None
    };

    ctx.json(
        "spectrum.json",
        &json!({
            "eigenvalues": eigs.eigenvalues,
            "residuals": eigs.residuals,
            "degeneracy_groups": eigs.degeneracy_groups,
        }),
    )?;
    ctx.csv("spin_field.csv", |w| field.write_csv(lattice, w))?;
    if task.excited_fields {
        for (i, v) in eigs.eigenvectors.iter().enumerate() {
            let f = onsite_spin_mixture(std::slice::from_ref(v), lattice)?;
            ctx.csv(&format!("spin_field_{i}.csv"), |w| f.write_csv(lattice, w))?;
        }
    }
    ctx.csv("energy_density.csv", |w| write_site_values(lattice, "energy", &energy, w))?;
    if let Some(res) = task.structure_factor {
        let grid = structure_factor_mixture(&ground, lattice, res)?;
        ctx.csv("structure_factor.csv", |w| grid.write_csv(w))?;
    }
    let centre = lattice.center_index();
    let observables = json!({
        "Q_chirality": finite_or_null(qc),
        "Q_topological": finite_or_null(qt),
        "mean_sz": field.mean_sz(),
        "central_sz": field.spins[centre][2],
        "entropy_density": finite_or_null(entropy),
        "radius": finite_or_null(radius),
        "degeneracy": ground.len(),
    });
    ctx.json("observables.json", &observables)?;

    let mut s = Summary::new(TaskKind::Diagonalize, Some(eigs.ground_energy()), level_gap(&eigs), q);
    s.set("degeneracy", json!(ground.len()));
    s.set("eigenvalues", json!(eigs.eigenvalues));
    s.set("mean_sz", json!(field.mean_sz()));
    s.set("entropy_density", finite_or_null(entropy));
    Ok(s)
}

fn write_site_values<W: Write>(lattice: &SpinLattice, name: &str, values: &[f64], w: W) -> skyrlab_core::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["site", "x", "y", name]).map_err(csv_err)?;
    for (i, (p, v)) in lattice.positions().iter().zip(values).enumerate() {
        out.serialize((i, p[0], p[1], v)).map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> SkyrError {
    SkyrError::Io(std::io::Error::other(e))
}

fn sweep(ctx: &Ctx, task: &SweepTask) -> Result<Summary, CliError> {
    let cfg = ctx.cfg;
    let j_grid = task.j.values();
    let b_grid = task.b.values();
    let k = task.k.unwrap_or(cfg.params.k);
    let checkpoint = if task.checkpoint {
        let path = ctx.path("sweep_checkpoint.jsonl");
        guard_checkpoint(ctx, &path, &j_grid, &b_grid, k, task)?;
        Some(path)
    } else {
        None
    };
    let opts = SweepOptions {
        d: cfg.params.d,
        anisotropy_mode: cfg.params.anisotropy_mode,
        n_eigenpairs: task.n_eigenpairs,
        lanczos: cfg.lanczos.options(),
        seed: cfg.seed,
        thresholds: task.thresholds,
        partition: task.partition,
        charge_mode: task.charge_mode,
        workers: None,
        checkpoint,
    };
    let points = run_phase_diagram(ctx.lattice, &j_grid, &b_grid, k, &opts)?;
    ctx.csv("phase_diagram.csv", |w| write_phase_csv(&points, w))?;

    let mut phases: BTreeMap<String, usize> = BTreeMap::new();
    for p in &points {
        *phases.entry(p.phase.to_string()).or_default() += 1;
    }
    let failed: Vec<String> = points.iter().filter_map(|p| p.error.clone()).collect();
    let first = &points[0];
    let q = match ctx.lattice.boundary() {
        Boundary::Periodic => first.q_chirality,
        Boundary::Open => first.q_topological,
    };
    let mut s = Summary::new(TaskKind::Sweep, Some(first.ground_energy), None, Some(q));
    s.set("points", json!(points.len()));
    s.set("phases", json!(phases));
    s.set("failed", json!(failed.len()));
    if failed.len() == points.len() {
        // nothing usable: report the first failure as the run's error
        return Err(CliError::Core(SkyrError::Contract(format!("every sweep point failed: {}", failed[0]))));
    }
    Ok(s)
}

/// Discards a checkpoint written for a different grid or coupling set.
fn guard_checkpoint(
    ctx: &Ctx,
    path: &std::path::Path,
    j: &[f64],
    b: &[f64],
    k: f64,
    task: &SweepTask,
) -> Result<(), CliError> {
    let key = json!({
        "lattice": ctx.lattice.to_json(),
        "params": ctx.cfg.params,
        "J": j,
        "B": b,
        "K": k,
        "n_eigenpairs": task.n_eigenpairs,
        "thresholds": task.thresholds,
        "partition": task.partition,
        "charge_mode": task.charge_mode,
        "seed": ctx.cfg.seed,
    })
    .to_string();
    let key_path = path.with_extension("key");
    let stale = std::fs::read_to_string(&key_path).map(|k| k != key).unwrap_or(true);
    if stale {
        if path.exists() {
            std::fs::remove_file(path)?;
        }
        std::fs::write(&key_path, key)?;
    }
    Ok(())
}

fn qubit_frequency(eigs: &EigenResult, tol: f64) -> Result<f64, CliError> {
    if eigs.eigenvalues.len() < 2 {
        return Err(CliError::Config("drive frequency needs two eigenpairs".into()));
    }
    let w = eigs.eigenvalues[1] - eigs.eigenvalues[0];
    if w <= tol {
        return Err(SkyrError::NoIsolatedQubit { gap: w, tol }.into());
    }
    Ok(w)
}

fn logical_basis(eigs: &EigenResult) -> Result<Option<LogicalBasis>, CliError> {
    if eigs.eigenvectors.len() < 2 {
        return Ok(None);
    }
    Ok(Some(LogicalBasis::new(eigs.eigenvectors[0].clone(), eigs.eigenvectors[1].clone())?))
}

fn initial_state(init: &InitialState, eigs: &EigenResult, n_sites: usize) -> Result<StateVector, CliError> {
    Ok(match init {
        InitialState::Eigenstate { index } => eigs
            .eigenvectors
            .get(*index)
            .cloned()
            .ok_or_else(|| CliError::Config(format!("eigenstate {index} not computed; raise n_eigenpairs")))?,
        InitialState::AllUp => StateVector::all_up(n_sites),
        InitialState::Product { directions } => {
            if directions.len() != n_sites {
                return Err(CliError::Config(format!(
                    "product state lists {} directions for {n_sites} sites",
                    directions.len()
                )));
            }
            StateVector::product(n_sites, directions)?
        }
        InitialState::Logical { theta, phi } => {
            if eigs.eigenvectors.len() < 2 {
                return Err(CliError::Config("logical initial state needs two eigenpairs".into()));
            }
            let mut psi = eigs.eigenvectors[0].clone();
            for a in psi.amplitudes_mut() {
                *a *= (theta / 2.0).cos();
            }
            psi.axpy(C64::from_polar((theta / 2.0).sin(), *phi), &eigs.eigenvectors[1]);
            psi.normalize();
            psi
        }
    })
}

fn drive_spec(
    drive: &DriveConfig,
    eigs: &EigenResult,
    tol: f64,
) -> Result<DriveSpec, CliError> {
    let freq = |f: &Option<f64>| -> Result<f64, CliError> {
        match f {
            Some(w) => Ok(*w),
            None => qubit_frequency(eigs, tol),
        }
    };
    Ok(match drive {
        DriveConfig::None => DriveSpec::None,
        DriveConfig::Static { field, gyromagnetic } => DriveSpec::StaticField {
            field: *field,
            gyromagnetic: *gyromagnetic,
        },
        DriveConfig::Periodic {
            field,
            frequency,
            gyromagnetic,
        } => DriveSpec::PeriodicField {
            field: *field,
            frequency: freq(frequency)?,
            gyromagnetic: *gyromagnetic,
        },
        DriveConfig::GateField {
            gate,
            amplitude,
            frequency,
            gyromagnetic,
        } => gate_field(*gate, *amplitude, freq(frequency)?, *gyromagnetic)?,
        DriveConfig::Rank2 {
            gate,
            amplitude,
            frequency,
        } => DriveSpec::Rank2Gate {
            gate: *gate,
            amplitude: *amplitude,
            frequency: freq(frequency)?,
            basis: logical_basis(eigs)?.ok_or_else(|| CliError::Config("rank-2 drive needs two eigenpairs".into()))?,
        },
    })
}

fn evolve(ctx: &Ctx, task: &EvolveTask) -> Result<Summary, CliError> {
    let lattice = ctx.lattice;
    let tol = ctx.cfg.lanczos.options().tol_degeneracy;
    let h = ctx.hamiltonian()?;
    let eigs = ctx.solve(&h, task.n_eigenpairs, SolverMethod::Auto)?;
    let drive = drive_spec(&task.drive, &eigs, tol)?;
    let mut psi0 = initial_state(&task.initial, &eigs, lattice.n_sites())?;

    let mut opts = EvolveOptions::new(task.t_final, task.dt);
    opts.record.every = task.record_every;
    opts.record.lattice = Some(lattice.clone());
    if lattice.n_sites() > 1 {
        opts.record.entropy_partition = Some(task.partition.sites(lattice));
    }
    opts.record.charge = task.charge;
    opts.record.charge_mode = task.charge_mode;
    opts.record.logical = logical_basis(&eigs)?;
    let ckpt_path = ctx.path("evolve_state.bin");
    if let Some(secs) = task.checkpoint_seconds {
        opts.checkpoint = Some(CheckpointSpec {
            path: ckpt_path.clone(),
            interval: Duration::from_secs_f64(secs),
        });
    }
    if task.resume && ckpt_path.exists() {
        let (state, t) = read_checkpoint(&ckpt_path)?;
        if t >= task.t_final {
            return Err(CliError::Config(format!("checkpoint at t = {t} already reaches t_final")));
        }
        psi0 = state;
        opts.t_start = t;
    }

    let (rec, _) = evolve_schrodinger(&h, &drive, &psi0, &opts)?;
    ctx.csv("trajectory.csv", |w| rec.write_csv(w))?;
    if opts.record.logical.is_some() {
        ctx.json("bloch.json", &rec.bloch_json())?;
    }

    let last = rec.len() - 1;
    let max_entropy = rec.entropy.iter().cloned().filter(|x| x.is_finite()).fold(f64::NAN, f64::max);
    let mut s = Summary::new(
        TaskKind::Evolve,
        Some(eigs.ground_energy()),
        level_gap(&eigs),
        Some(rec.charge[last]),
    );
    s.set("t_final", json!(rec.times[last]));
    s.set("final_energy", finite_or_null(Some(rec.energy[last])));
    s.set("final_entropy", finite_or_null(Some(rec.entropy[last])));
    s.set("max_entropy", finite_or_null(Some(max_entropy)));
    s.set("final_p2", finite_or_null(Some(rec.p2[last])));
    Ok(s)
}

fn gate(ctx: &Ctx, task: &GateTask) -> Result<Summary, CliError> {
    let lattice = ctx.lattice;
    let tol = ctx.cfg.lanczos.options().tol_degeneracy;
    let h = ctx.hamiltonian()?;
    let eigs = ctx.solve(&h, task.n_eigenpairs, SolverMethod::Auto)?;
    let qubit = project_two_level(&eigs, tol)?;
    let omega = task.frequency.unwrap_or(qubit.omega0);
    let t_rabi = TWO_PI / task.amplitude.abs();
    let t_final = task.periods * t_rabi;
    let dt = (t_rabi / task.steps_per_period as f64).min(TWO_PI / omega / STEPS_PER_DRIVE_PERIOD);
    let basis = LogicalBasis::new(eigs.eigenvectors[0].clone(), eigs.eigenvectors[1].clone())?;
    let (q0, _, _) = headline_charge(&eigs.eigenvectors[..1], lattice, task.charge_mode)?;

    ctx.json(
        "qubit.json",
        &json!({
            "E1": qubit.e1,
            "E2": qubit.e2,
            "omega0": qubit.omega0,
            "anharmonicity": finite_or_null(qubit.anharmonicity()),
            "eigenvalues": eigs.eigenvalues,
            "drive_frequency": omega,
            "rabi_period": t_rabi,
            "dt": dt,
        }),
    )?;

    let mut per_gate = serde_json::Map::new();
    for &g in &task.gates {
        let two = evolve_two_level(&qubit, g, task.amplitude, omega, [C64::new(1.0, 0.0), C64::new(0.0, 0.0)], t_final, dt)?;
        let full = match task.mode {
            GateMode::TwoLevel => None,
            GateMode::Rank2 | GateMode::Field => {
                let drive = match task.mode {
                    GateMode::Rank2 => DriveSpec::Rank2Gate {
                        gate: g,
                        amplitude: task.amplitude,
                        frequency: omega,
                        basis: basis.clone(),
                    },
                    _ => gate_field(g, task.amplitude, omega, task.gyromagnetic)?,
                };
                let mut opts = EvolveOptions::new(t_final, dt);
                opts.record.every = task.record_every;
                opts.record.lattice = Some(lattice.clone());
                if lattice.n_sites() > 1 {
                    opts.record.entropy_partition = Some(task.partition.sites(lattice));
                }
                opts.record.charge = task.charge;
                opts.record.charge_mode = task.charge_mode;
                opts.record.logical = Some(basis.clone());
                Some(evolve_schrodinger(&h, &drive, basis.psi1(), &opts)?.0)
            }
        };
        let name = gate_tag(g);
        ctx.csv(&format!("two_level_{name}.csv"), |w| two.write_csv(w))?;
        let mut entry = serde_json::Map::new();
        let main = full.as_ref().unwrap_or(&two);
        entry.insert("max_p2_first_period".into(), json!(max_before(main, t_rabi)));
        if let Some(f) = &full {
            ctx.csv(&format!("trajectory_{name}.csv"), |w| f.write_csv(w))?;
            let max_leak = f.leakage.iter().cloned().fold(0.0, f64::max);
            entry.insert("max_leakage".into(), json!(max_leak));
            if task.compare_two_level {
                entry.insert("bloch_rms_deviation".into(), json!(bloch_rms(f, &two)));
            }
        }
        per_gate.insert(name.to_string(), Value::Object(entry));
    }

    let mut s = Summary::new(TaskKind::Gate, Some(eigs.ground_energy()), Some(qubit.omega0), q0);
    s.set("anharmonicity", finite_or_null(qubit.anharmonicity()));
    s.set("rabi_period", json!(t_rabi));
    s.set("gates", Value::Object(per_gate));
    Ok(s)
}

fn gate_tag(g: Gate) -> &'static str {
    match g {
        Gate::X => "X",
        Gate::Y => "Y",
        Gate::Z => "Z",
        Gate::Hadamard => "H",
    }
}

fn max_before(rec: &TrajectoryRecord, t_max: f64) -> f64 {
    rec.times
        .iter()
        .zip(&rec.p2)
        .filter(|(t, _)| **t <= t_max * (1.0 + 1e-12))
        .map(|(_, p)| *p)
        .fold(0.0, f64::max)
}

/// RMS distance between logical Bloch vectors, matching each full-space
/// sample with the two-level sample at the same step.
fn bloch_rms(full: &TrajectoryRecord, two: &TrajectoryRecord) -> f64 {
    let h = if two.times.len() > 1 { two.times[1] - two.times[0] } else { 1.0 };
    let mut acc = 0.0;
    let mut n = 0usize;
    for (t, r) in full.times.iter().zip(&full.bloch_logical) {
        let idx = (t / h).round() as usize;
        if let Some(q) = two.bloch_logical.get(idx) {
            acc += (0..3).map(|a| (r[a] - q[a]).powi(2)).sum::<f64>();
            n += 1;
        }
    }
    (acc / n.max(1) as f64).sqrt()
}

fn qubit_vector(s: QubitState) -> Vector2 {
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let c = |re: f64, im: f64| C64::new(re, im);
    match s {
        QubitState::Ground => [c(1.0, 0.0), c(0.0, 0.0)],
        QubitState::Excited => [c(0.0, 0.0), c(1.0, 0.0)],
        QubitState::Plus => [c(r, 0.0), c(r, 0.0)],
        QubitState::Minus => [c(r, 0.0), c(-r, 0.0)],
        QubitState::PlusI => [c(r, 0.0), c(0.0, r)],
        QubitState::MinusI => [c(r, 0.0), c(0.0, -r)],
    }
}

fn state_name(s: QubitState) -> &'static str {
    match s {
        QubitState::Ground => "ground",
        QubitState::Excited => "excited",
        QubitState::Plus => "plus",
        QubitState::Minus => "minus",
        QubitState::PlusI => "plus_i",
        QubitState::MinusI => "minus_i",
    }
}

fn lattice_qubit(ctx: &Ctx) -> Result<(QubitSystem, f64), CliError> {
    let h = ctx.hamiltonian()?;
    let eigs = ctx.solve(&h, 3, SolverMethod::Auto)?;
    let q = project_two_level(&eigs, ctx.cfg.lanczos.options().tol_degeneracy)?;
    Ok((q, eigs.ground_energy()))
}

fn lindblad(ctx: &Ctx, task: &LindbladTask) -> Result<Summary, CliError> {
    let qubit = match task.qubit {
        QubitSource::Levels { e1, e2 } => QubitSystem::new(e1, e2)?,
        QubitSource::Lattice(_) => lattice_qubit(ctx)?.0,
    };
    let omega = task.frequency.unwrap_or(qubit.omega0);
    let psi0 = qubit_vector(task.initial);
    let mut runs = Vec::new();
    for (i, d) in task.decoherence.iter().enumerate() {
        let rho0 = DensityMatrix2::pure(&psi0)?;
        let rec = evolve_lindblad(&qubit, task.gate, task.amplitude, omega, rho0, d.t1, d.t2, task.t_final, task.dt)?;
        ctx.csv(&format!("lindblad_{i}.csv"), |w| rec.write_csv(w))?;
        let last = rec.len() - 1;
        let mut entry = json!({
            "T1": d.t1,
            "T2": d.t2,
            "final_populations": [rec.p1[last], rec.p2[last]],
        });
        if task.amplitude == 0.0 {
            let relax = rec
                .times
                .iter()
                .zip(&rec.p2)
                .map(|(t, p)| (p - (-t / d.t1).exp() * rec.p2[0]).abs())
                .fold(0.0, f64::max);
            let coherence = rec
                .times
                .iter()
                .zip(&rec.bloch_logical)
                .map(|(t, r)| {
                    let c0 = 0.5 * (rec.bloch_logical[0][0].powi(2) + rec.bloch_logical[0][1].powi(2)).sqrt();
                    (0.5 * (r[0] * r[0] + r[1] * r[1]).sqrt() - c0 * (-t / d.t2).exp()).abs()
                })
                .fold(0.0, f64::max);
            entry["relaxation_error"] = json!(relax);
            entry["dephasing_error"] = json!(coherence);
        }
        runs.push(entry);
    }
    ctx.json("lindblad.json", &json!({ "omega0": qubit.omega0, "runs": runs }))?;
    let mut s = Summary::new(TaskKind::Lindblad, Some(qubit.e1), Some(qubit.omega0), None);
    s.set("runs", json!(runs));
    Ok(s)
}

fn readout(ctx: &Ctx, task: &ReadoutTask) -> Result<Summary, CliError> {
    let mut entries = Vec::new();
    let mut worst: f64 = 0.0;
    for &st in &task.states {
        let psi = qubit_vector(st);
        let (basis, pops, expected) = match st {
            QubitState::Plus => (Some(ReadoutBasis::X), readout_rotation(ReadoutBasis::X, &psi)?.1, [1.0, 0.0]),
            QubitState::Minus => (Some(ReadoutBasis::X), readout_rotation(ReadoutBasis::X, &psi)?.1, [0.0, 1.0]),
            QubitState::PlusI => (Some(ReadoutBasis::Y), readout_rotation(ReadoutBasis::Y, &psi)?.1, [1.0, 0.0]),
            QubitState::MinusI => (Some(ReadoutBasis::Y), readout_rotation(ReadoutBasis::Y, &psi)?.1, [0.0, 1.0]),
            QubitState::Ground => (None, [psi[0].norm_sqr(), psi[1].norm_sqr()], [1.0, 0.0]),
            QubitState::Excited => (None, [psi[0].norm_sqr(), psi[1].norm_sqr()], [0.0, 1.0]),
        };
        let err = (pops[0] - expected[0]).abs().max((pops[1] - expected[1]).abs());
        worst = worst.max(err);
        entries.push(json!({
            "state": state_name(st),
            "basis": basis.map(|b| json!(b)).unwrap_or(json!("Z_basis")),
            "populations": pops,
        }));
    }
    let mut s = Summary::new(TaskKind::Readout, None, None, None);
    let mut doc = json!({ "readout": entries });
    if task.bell {
        let v = bell_circuit();
        let amps: Vec<[f64; 2]> = v.iter().map(|c| [c.re, c.im]).collect();
        let entropy = qubit_entropy(&v);
        doc["bell"] = json!({ "amplitudes": amps, "entropy": entropy });
        s.set("bell_entropy", json!(entropy));
    }
    ctx.json("readout.json", &doc)?;
    s.set("max_population_error", json!(worst));
    Ok(s)
}

fn series(ctx: &Ctx, task: &DmiSeriesTask) -> Result<Summary, CliError> {
    let cfg = ctx.cfg;
    let opts = SweepOptions {
        anisotropy_mode: cfg.params.anisotropy_mode,
        lanczos: cfg.lanczos.options(),
        seed: cfg.seed,
        charge_mode: task.charge_mode,
        ..SweepOptions::default()
    };
    let points = dmi_series(ctx.lattice, &cfg.params, &task.d, &task.series, &opts)?;
    ctx.csv("dmi_series.csv", |w| {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["D", "ground_energy", "Q_topological", "radius", "entropy_rate", "decay_per_period", "error"])
            .map_err(csv_err)?;
        let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
        for p in &points {
            out.write_record([
                p.d.to_string(),
                p.ground_energy.to_string(),
                p.q_topological.to_string(),
                opt(p.radius),
                opt(p.entropy_rate),
                opt(p.decay_per_period),
                p.error.clone().unwrap_or_default(),
            ])
            .map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    })?;

    let all = |f: &dyn Fn(&skyrlab_core::sweep::SeriesPoint) -> Option<f64>| -> Option<Vec<f64>> {
        points.iter().map(f).collect()
    };
    let strictly_decreasing = |v: &[f64]| v.windows(2).all(|w| w[1] < w[0]);
    let non_decreasing = |v: &[f64]| v.windows(2).all(|w| w[1] >= w[0]);
    let mut s = Summary::new(
        TaskKind::DmiSeries,
        Some(points[0].ground_energy),
        None,
        Some(points[0].q_topological),
    );
    s.set("radius_decreasing", json!(all(&|p| p.radius).map(|v| strictly_decreasing(&v))));
    s.set("entropy_rate_non_decreasing", json!(all(&|p| p.entropy_rate).map(|v| non_decreasing(&v))));
    s.set("decay_non_decreasing", json!(all(&|p| p.decay_per_period).map(|v| non_decreasing(&v))));
    s.set("points", json!(points));
    Ok(s)
}
