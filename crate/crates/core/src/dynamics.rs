//! Time evolution of the many-body state.
//!
//! The Hamiltonian is `H(t) = H0 + f(t) V` where `V` is either the Zeeman
//! coupling of a drive field, `-γ B·Σ S_i`, or a rank-2 gate operator on the
//! logical subspace scaled by the drive amplitude. Stepping uses the
//! two-exponential commutator-free Magnus scheme of order four with the drive
//! sampled at the Gauss nodes of each step. Each exponential is applied by a
//! Taylor series split into substeps of bounded norm.

use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{contract, Result, SkyrError};
use crate::lattice::SpinLattice;
use crate::observables::{
    csv_err, entanglement_entropy_density, onsite_spin_expectation, scalar_chirality, topological_charge,
    ChargeMode,
};
use crate::operators::{
    axpy, dot, norm_sqr, pauli_expectation, total_spin_operator, Axis, LinearOperator, SparseOperator,
    StateVector, C64, ONE, ZERO,
};

const SQRT1_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Tolerance for the orthonormality of a logical basis.
pub const BASIS_TOL: f64 = 1e-8;

/// Norm drift beyond which a trajectory is abandoned.
pub const NORM_DRIFT_LIMIT: f64 = 1e-6;

/// Largest `‖τ M‖` bound handled by one Taylor substep.
const TAYLOR_THETA: f64 = 2.5;
const TAYLOR_MAX_TERMS: usize = 80;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Gate {
    X,
    Y,
    Z,
    #[serde(alias = "H", alias = "hadamard")]
    Hadamard,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::X, Gate::Y, Gate::Z, Gate::Hadamard];

    /// Standard 2×2 matrix, row-major.
    pub fn matrix(self) -> [[C64; 2]; 2] {
        let r = |x: f64| C64::new(x, 0.0);
        match self {
            Gate::X => [[ZERO, ONE], [ONE, ZERO]],
            Gate::Y => [[ZERO, C64::new(0.0, -1.0)], [C64::new(0.0, 1.0), ZERO]],
            Gate::Z => [[ONE, ZERO], [ZERO, r(-1.0)]],
            Gate::Hadamard => [[r(SQRT1_2), r(SQRT1_2)], [r(SQRT1_2), r(-SQRT1_2)]],
        }
    }

    /// Field direction of the matching precessional drive.
    pub fn axis(self) -> [f64; 3] {
        match self {
            Gate::X => [1.0, 0.0, 0.0],
            Gate::Y => [0.0, 1.0, 0.0],
            Gate::Z => [0.0, 0.0, 1.0],
            Gate::Hadamard => [SQRT1_2, 0.0, SQRT1_2],
        }
    }
}

impl fmt::Display for Gate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Gate::X => "X",
            Gate::Y => "Y",
            Gate::Z => "Z",
            Gate::Hadamard => "Hadamard",
        };
        f.write_str(s)
    }
}

impl FromStr for Gate {
    type Err = SkyrError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "x" => Ok(Gate::X),
            "y" => Ok(Gate::Y),
            "z" => Ok(Gate::Z),
            "h" | "hadamard" => Ok(Gate::Hadamard),
            other => Err(contract(format!("unknown gate '{other}'"))),
        }
    }
}

/// Orthonormal pair `|Ψ1⟩, |Ψ2⟩` spanning the logical qubit.
#[derive(Debug, Clone)]
pub struct LogicalBasis {
    psi1: StateVector,
    psi2: StateVector,
}

impl LogicalBasis {
    pub fn new(psi1: StateVector, psi2: StateVector) -> Result<Self> {
        if psi1.dim() != psi2.dim() {
            return Err(SkyrError::DimensionMismatch {
                expected: psi1.dim(),
                found: psi2.dim(),
            });
        }
        for (name, v) in [("psi1", &psi1), ("psi2", &psi2)] {
            if (v.norm() - 1.0).abs() > BASIS_TOL {
                return Err(contract(format!("{name} is not normalized (norm {})", v.norm())));
            }
        }
        let overlap = psi1.inner(&psi2).norm();
        if overlap > BASIS_TOL {
            return Err(contract(format!("logical states overlap by {overlap:e}")));
        }
        Ok(LogicalBasis { psi1, psi2 })
    }

    pub fn psi1(&self) -> &StateVector {
        &self.psi1
    }

    pub fn psi2(&self) -> &StateVector {
        &self.psi2
    }

    pub fn dim(&self) -> usize {
        self.psi1.dim()
    }

    /// `(⟨Ψ1|ψ⟩, ⟨Ψ2|ψ⟩)`.
    pub fn overlaps(&self, psi: &[C64]) -> (C64, C64) {
        (
            dot(self.psi1.amplitudes(), psi),
            dot(self.psi2.amplitudes(), psi),
        )
    }
}

/// A drive added to the static Hamiltonian.
#[derive(Debug, Clone)]
pub enum DriveSpec {
    None,
    /// Constant field `B`, coupling as `-γ B·Σ S_i`.
    StaticField { field: [f64; 3], gyromagnetic: f64 },
    /// Field `B cos(ωt)`.
    PeriodicField {
        field: [f64; 3],
        frequency: f64,
        gyromagnetic: f64,
    },
    /// `A cos(ωt) G` with `G` the rank-2 gate operator on the logical basis.
    Rank2Gate {
        gate: Gate,
        amplitude: f64,
        frequency: f64,
        basis: LogicalBasis,
    },
}

impl DriveSpec {
    pub fn validate(&self) -> Result<()> {
        let finite3 = |v: &[f64; 3]| v.iter().all(|x| x.is_finite());
        match self {
            DriveSpec::None => Ok(()),
            DriveSpec::StaticField { field, gyromagnetic } => {
                if !finite3(field) || !gyromagnetic.is_finite() {
                    return Err(contract("drive field must be finite"));
                }
                Ok(())
            }
            DriveSpec::PeriodicField {
                field,
                frequency,
                gyromagnetic,
            } => {
                if !finite3(field) || !gyromagnetic.is_finite() {
                    return Err(contract("drive field must be finite"));
                }
                positive_frequency(*frequency)
            }
            DriveSpec::Rank2Gate {
                amplitude, frequency, ..
            } => {
                if !amplitude.is_finite() {
                    return Err(contract("drive amplitude must be finite"));
                }
                positive_frequency(*frequency)
            }
        }
    }

    pub fn frequency(&self) -> Option<f64> {
        match self {
            DriveSpec::PeriodicField { frequency, .. } | DriveSpec::Rank2Gate { frequency, .. } => {
                Some(*frequency)
            }
            _ => None,
        }
    }

    pub fn basis(&self) -> Option<&LogicalBasis> {
        match self {
            DriveSpec::Rank2Gate { basis, .. } => Some(basis),
            _ => None,
        }
    }

    fn envelope(&self, t: f64) -> f64 {
        match self {
            DriveSpec::None => 0.0,
            DriveSpec::StaticField { .. } => 1.0,
            DriveSpec::PeriodicField { frequency, .. } | DriveSpec::Rank2Gate { frequency, .. } => {
                (frequency * t).cos()
            }
        }
    }
}

fn positive_frequency(w: f64) -> Result<()> {
    if w.is_finite() && w > 0.0 {
        Ok(())
    } else {
        Err(contract(format!("drive frequency must be positive, got {w}")))
    }
}

/// Periodic field that realizes `A cos(ωt) σ_n` on a spin-1/2:
/// `B(t) = -(2A/γ) cos(ωt) n̂`.
pub fn gate_field(gate: Gate, amplitude: f64, frequency: f64, gyromagnetic: f64) -> Result<DriveSpec> {
    if amplitude == 0.0 || !amplitude.is_finite() {
        return Err(contract("gate amplitude must be nonzero"));
    }
    if gyromagnetic == 0.0 || !gyromagnetic.is_finite() {
        return Err(contract("gyromagnetic ratio must be nonzero"));
    }
    positive_frequency(frequency)?;
    let scale = -2.0 * amplitude / gyromagnetic;
    let n = gate.axis();
    Ok(DriveSpec::PeriodicField {
        field: [scale * n[0], scale * n[1], scale * n[2]],
        frequency,
        gyromagnetic,
    })
}

/// `G = Σ g_ab |Ψa⟩⟨Ψb|` for the gate matrix `g`, applied through the two
/// stored vectors.
#[derive(Debug, Clone)]
pub struct Rank2Operator {
    basis: LogicalBasis,
    g: [[C64; 2]; 2],
}

impl Rank2Operator {
    pub fn basis(&self) -> &LogicalBasis {
        &self.basis
    }
}

impl LinearOperator for Rank2Operator {
    fn dim(&self) -> usize {
        self.basis.dim()
    }

    fn is_hermitian(&self) -> bool {
        true
    }

    fn apply_into(&self, input: &[C64], output: &mut [C64]) {
        let (c1, c2) = self.basis.overlaps(input);
        let a1 = self.g[0][0] * c1 + self.g[0][1] * c2;
        let a2 = self.g[1][0] * c1 + self.g[1][1] * c2;
        output.iter_mut().for_each(|o| *o = ZERO);
        axpy(output, a1, self.basis.psi1.amplitudes());
        axpy(output, a2, self.basis.psi2.amplitudes());
    }
}

pub fn full_gate_operator(gate: Gate, psi1: &StateVector, psi2: &StateVector) -> Result<Rank2Operator> {
    Ok(Rank2Operator {
        basis: LogicalBasis::new(psi1.clone(), psi2.clone())?,
        g: gate.matrix(),
    })
}

/// Logical Bloch vector from the overlaps with the two basis states. Its
/// length falls below one when `psi` leaks out of the subspace.
pub fn logical_bloch_vector(psi: &StateVector, psi1: &StateVector, psi2: &StateVector) -> [f64; 3] {
    let c1 = psi1.inner(psi);
    let c2 = psi2.inner(psi);
    bloch_from_overlaps(c1, c2)
}

pub(crate) fn bloch_from_overlaps(c1: C64, c2: C64) -> [f64; 3] {
    let r = c1.conj() * c2;
    [2.0 * r.re, 2.0 * r.im, c1.norm_sqr() - c2.norm_sqr()]
}

/// Which charge-like quantity to log per recorded step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChargeObservable {
    #[default]
    None,
    Chirality,
    Topological,
}

/// Observables logged along a trajectory.
#[derive(Debug, Clone)]
pub struct RecordSpec {
    /// Record every k-th integration step (and always the first and last).
    pub every: usize,
    /// Needed for the central spin, the charge and the default partition.
    pub lattice: Option<SpinLattice>,
    pub entropy_partition: Option<Vec<usize>>,
    pub charge: ChargeObservable,
    pub charge_mode: ChargeMode,
    /// Overrides the logical basis of a rank-2 drive for projections.
    pub logical: Option<LogicalBasis>,
}

impl Default for RecordSpec {
    fn default() -> Self {
        RecordSpec {
            every: 1,
            lattice: None,
            entropy_partition: None,
            charge: ChargeObservable::None,
            charge_mode: ChargeMode::default(),
            logical: None,
        }
    }
}

/// Periodic binary dump of the running state.
#[derive(Debug, Clone)]
pub struct CheckpointSpec {
    pub path: PathBuf,
    pub interval: Duration,
}

#[derive(Debug, Clone)]
pub struct EvolveOptions {
    pub t_start: f64,
    pub t_final: f64,
    pub dt: f64,
    pub record: RecordSpec,
    pub checkpoint: Option<CheckpointSpec>,
}

impl EvolveOptions {
    pub fn new(t_final: f64, dt: f64) -> Self {
        EvolveOptions {
            t_start: 0.0,
            t_final,
            dt,
            record: RecordSpec::default(),
            checkpoint: None,
        }
    }
}

/// Observables on the output grid. Entries that were not requested are NaN.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub times: Vec<f64>,
    pub bloch_logical: Vec<[f64; 3]>,
    pub central_spin: Vec<[f64; 3]>,
    pub energy: Vec<f64>,
    pub entropy: Vec<f64>,
    pub charge: Vec<f64>,
    pub p1: Vec<f64>,
    pub p2: Vec<f64>,
    pub leakage: Vec<f64>,
}

impl TrajectoryRecord {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record([
            "t", "rx", "ry", "rz", "Sx_c", "Sy_c", "Sz_c", "energy", "entropy", "Q", "p1", "p2", "leakage",
        ])
        .map_err(csv_err)?;
        for k in 0..self.len() {
            let r = self.bloch_logical[k];
            let s = self.central_spin[k];
            let row = [
                self.times[k],
                r[0],
                r[1],
                r[2],
                s[0],
                s[1],
                s[2],
                self.energy[k],
                self.entropy[k],
                self.charge[k],
                self.p1[k],
                self.p2[k],
                self.leakage[k],
            ];
            out.write_record(row.iter().map(|x| x.to_string())).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Logical Bloch trajectory as a JSON array of `[t, rx, ry, rz]`.
    pub fn bloch_json(&self) -> serde_json::Value {
        serde_json::Value::Array(
            self.times
                .iter()
                .zip(&self.bloch_logical)
                .map(|(t, r)| serde_json::json!([t, r[0], r[1], r[2]]))
                .collect(),
        )
    }
}

enum DriveOperator {
    None,
    Sparse(SparseOperator),
    Rank2(Rank2Operator),
}

impl DriveOperator {
    fn build(drive: &DriveSpec, n_sites: usize) -> Result<(Self, f64)> {
        Ok(match drive {
            DriveSpec::None => (DriveOperator::None, 0.0),
            DriveSpec::StaticField { field, gyromagnetic } | DriveSpec::PeriodicField { field, gyromagnetic, .. } => {
                let mut op = SparseOperator::from_terms(n_sites, Vec::new())?;
                for (axis, b) in [Axis::X, Axis::Y, Axis::Z].into_iter().zip(field) {
                    if *b != 0.0 {
                        let s = total_spin_operator(n_sites, axis)?;
                        op = op.plus(C64::new(-gyromagnetic * b, 0.0), &s)?;
                    }
                }
                let bound = op.norm_bound();
                (DriveOperator::Sparse(op), bound)
            }
            DriveSpec::Rank2Gate {
                gate,
                amplitude,
                basis,
                ..
            } => {
                if basis.dim() != 1 << n_sites {
                    return Err(SkyrError::DimensionMismatch {
                        expected: 1 << n_sites,
                        found: basis.dim(),
                    });
                }
                let g = gate.matrix().map(|row| row.map(|x| x * amplitude));
                let op = Rank2Operator {
                    basis: basis.clone(),
                    g,
                };
                (DriveOperator::Rank2(op), amplitude.abs())
            }
        })
    }

    fn op(&self) -> Option<&dyn LinearOperator> {
        match self {
            DriveOperator::None => None,
            DriveOperator::Sparse(s) => Some(s),
            DriveOperator::Rank2(r) => Some(r),
        }
    }
}

/// Applies `exp(-i τ (a H0 + b V))` in place.
struct Propagator<'a> {
    h0: &'a SparseOperator,
    h0_bound: f64,
    v: Option<&'a dyn LinearOperator>,
    v_bound: f64,
    term: Vec<C64>,
    next: Vec<C64>,
    scratch: Vec<C64>,
}

impl<'a> Propagator<'a> {
    /// `next = (a H0 + b V) term`.
    fn apply_m(&mut self, a: f64, b: f64) {
        self.h0.apply_into(&self.term, &mut self.next);
        if a != 1.0 {
            crate::operators::scale(&mut self.next, C64::new(a, 0.0));
        }
        if let Some(v) = self.v {
            if b != 0.0 {
                v.apply_into(&self.term, &mut self.scratch);
                axpy(&mut self.next, C64::new(b, 0.0), &self.scratch);
            }
        }
    }

    fn exp_step(&mut self, psi: &mut [C64], tau: f64, a: f64, b: f64) {
        let bound = tau * (a.abs() * self.h0_bound + b.abs() * self.v_bound);
        let substeps = ((bound / TAYLOR_THETA).ceil() as usize).max(1);
        let h = tau / substeps as f64;
        for _ in 0..substeps {
            self.term.copy_from_slice(psi);
            let psi_norm = norm_sqr(psi).sqrt();
            for k in 1..=TAYLOR_MAX_TERMS {
                self.apply_m(a, b);
                // term_k = (-i h / k) M term_{k-1}
                let f = C64::new(0.0, -h / k as f64);
                std::mem::swap(&mut self.term, &mut self.next);
                crate::operators::scale(&mut self.term, f);
                axpy(psi, ONE, &self.term);
                if norm_sqr(&self.term).sqrt() <= 1e-17 * psi_norm {
                    break;
                }
            }
        }
    }
}

/// Integrates `i dψ/dt = [H0 + H_drive(t)] ψ` from `t_start` to `t_final`.
/// Returns the recorded observables and the final state.
pub fn evolve_schrodinger(
    h0: &SparseOperator,
    drive: &DriveSpec,
    psi0: &StateVector,
    opts: &EvolveOptions,
) -> Result<(TrajectoryRecord, StateVector)> {
    drive.validate()?;
    if psi0.dim() != h0.dim() {
        return Err(SkyrError::DimensionMismatch {
            expected: h0.dim(),
            found: psi0.dim(),
        });
    }
    if !h0.is_hermitian() {
        return Err(contract("static Hamiltonian must be Hermitian"));
    }
    psi0.check_normalized(BASIS_TOL)?;
    let span = opts.t_final - opts.t_start;
    if !(opts.dt > 0.0 && opts.dt.is_finite() && span.is_finite() && span >= 0.0) {
        return Err(contract("need dt > 0 and t_final >= t_start"));
    }
    if opts.record.every == 0 {
        return Err(contract("record interval must be at least one step"));
    }
    let n_steps = ((span / opts.dt) - 1e-9).ceil().max(0.0) as usize;
    let dt = if n_steps > 0 { span / n_steps as f64 } else { opts.dt };
    if let Some(w) = drive.frequency() {
        let period = 2.0 * std::f64::consts::PI / w;
        if n_steps > 0 && dt > period / 40.0 * (1.0 + 1e-9) {
            return Err(contract(format!(
                "dt = {dt} resolves fewer than 40 steps per drive period {period}"
            )));
        }
    }

    let n_sites = psi0.n_sites();
    let (drive_op, v_bound) = DriveOperator::build(drive, n_sites)?;
    let dim = psi0.dim();
    let mut prop = Propagator {
        h0,
        h0_bound: h0.norm_bound(),
        v: drive_op.op(),
        v_bound,
        term: vec![ZERO; dim],
        next: vec![ZERO; dim],
        scratch: vec![ZERO; dim],
    };

    let recorder = Recorder::new(&opts.record, drive, n_sites)?;
    let mut record = TrajectoryRecord::default();
    let mut psi = psi0.amplitudes().to_vec();
    recorder.push(&mut record, h0, opts.t_start, &psi)?;

    // two-exponential fourth-order commutator-free Magnus
    let s3 = 3f64.sqrt();
    let (c1, c2) = (0.5 - s3 / 6.0, 0.5 + s3 / 6.0);
    let (a1, a2) = ((3.0 - 2.0 * s3) / 12.0, (3.0 + 2.0 * s3) / 12.0);

    let mut last_ckpt = Instant::now();
    for step in 0..n_steps {
        let t = opts.t_start + step as f64 * dt;
        let f1 = drive.envelope(t + c1 * dt);
        let f2 = drive.envelope(t + c2 * dt);
        prop.exp_step(&mut psi, dt, 0.5, a2 * f1 + a1 * f2);
        prop.exp_step(&mut psi, dt, 0.5, a1 * f1 + a2 * f2);

        let t_next = opts.t_start + (step + 1) as f64 * dt;
        let drift = (norm_sqr(&psi).sqrt() - 1.0).abs();
        if drift > NORM_DRIFT_LIMIT || !drift.is_finite() {
            return Err(SkyrError::IntegratorFailure { drift, time: t_next });
        }
        if (step + 1) % opts.record.every == 0 || step + 1 == n_steps {
            recorder.push(&mut record, h0, t_next, &psi)?;
        }
        if let Some(ck) = &opts.checkpoint {
            if last_ckpt.elapsed() >= ck.interval || step + 1 == n_steps {
                write_checkpoint(ck, &psi, t_next, step + 1)?;
                last_ckpt = Instant::now();
            }
        }
    }
    Ok((record, StateVector::from_amplitudes(psi)?))
}

fn write_checkpoint(ck: &CheckpointSpec, psi: &[C64], t: f64, step: usize) -> Result<()> {
    let state = StateVector::from_amplitudes(psi.to_vec())?;
    let tmp = ck.path.with_extension("tmp");
    state.save(&tmp)?;
    std::fs::rename(&tmp, &ck.path)?;
    let meta = serde_json::json!({ "t": t, "step": step });
    std::fs::write(ck.path.with_extension("json"), serde_json::to_vec(&meta)?)?;
    Ok(())
}

/// Reads a checkpoint written during `evolve_schrodinger`: the state and the
/// time it was taken at.
pub fn read_checkpoint(path: impl Into<PathBuf>) -> Result<(StateVector, f64)> {
    let path = path.into();
    let state = StateVector::load(&path)?;
    let meta: serde_json::Value = serde_json::from_slice(&std::fs::read(path.with_extension("json"))?)?;
    let t = meta["t"]
        .as_f64()
        .ok_or_else(|| contract("checkpoint metadata lacks a time"))?;
    Ok((state, t))
}

struct Recorder<'a> {
    spec: &'a RecordSpec,
    logical: Option<&'a LogicalBasis>,
    partition: Option<Vec<usize>>,
    path: Vec<usize>,
}

impl<'a> Recorder<'a> {
    fn new(spec: &'a RecordSpec, drive: &'a DriveSpec, n_sites: usize) -> Result<Self> {
        let logical = spec.logical.as_ref().or(drive.basis());
        if let Some(l) = logical {
            if l.dim() != 1 << n_sites {
                return Err(SkyrError::DimensionMismatch {
                    expected: 1 << n_sites,
                    found: l.dim(),
                });
            }
        }
        if let Some(lat) = &spec.lattice {
            if lat.n_sites() != n_sites {
                return Err(SkyrError::DimensionMismatch {
                    expected: n_sites,
                    found: lat.n_sites(),
                });
            }
        }
        if spec.charge != ChargeObservable::None && spec.lattice.is_none() {
            return Err(contract("charge recording needs the lattice"));
        }
        let partition = match (&spec.entropy_partition, &spec.lattice) {
            (Some(p), _) => Some(p.clone()),
            (None, Some(lat)) if lat.n_sites() > 1 => Some(vec![lat.center_index()]),
            (None, _) => None,
        };
        let path = spec.lattice.as_ref().map(|l| l.diagonal_path()).unwrap_or_default();
        Ok(Recorder {
            spec,
            logical,
            partition,
            path,
        })
    }

    fn push(&self, rec: &mut TrajectoryRecord, h0: &SparseOperator, t: f64, psi: &[C64]) -> Result<()> {
        let nan3 = [f64::NAN; 3];
        rec.times.push(t);

        let mut hpsi = vec![ZERO; psi.len()];
        h0.apply_into(psi, &mut hpsi);
        rec.energy.push(dot(psi, &hpsi).re);

        match self.logical {
            Some(basis) => {
                let (c1, c2) = basis.overlaps(psi);
                let (p1, p2) = (c1.norm_sqr(), c2.norm_sqr());
                rec.bloch_logical.push(bloch_from_overlaps(c1, c2));
                rec.p1.push(p1);
                rec.p2.push(p2);
                rec.leakage.push(norm_sqr(psi) - p1 - p2);
            }
            None => {
                rec.bloch_logical.push(nan3);
                rec.p1.push(f64::NAN);
                rec.p2.push(f64::NAN);
                rec.leakage.push(f64::NAN);
            }
        }

        let needs_state = self.partition.is_some() || self.spec.charge != ChargeObservable::None;
        let state = if needs_state {
            Some(StateVector::from_amplitudes(psi.to_vec())?)
        } else {
            None
        };

        match &self.spec.lattice {
            Some(lat) => {
                let c = lat.center_index();
                let s = [Axis::X, Axis::Y, Axis::Z].map(|a| {
                    let (x, z) = a.masks(c);
                    0.5 * pauli_expectation(psi, x, z).re
                });
                rec.central_spin.push(s);
            }
            None => rec.central_spin.push(nan3),
        }

        let entropy = match (&self.partition, &state) {
            (Some(p), Some(s)) => entanglement_entropy_density(s, p)?,
            _ => f64::NAN,
        };
        rec.entropy.push(entropy);

        let charge = match (self.spec.charge, &self.spec.lattice, &state) {
            (ChargeObservable::Chirality, Some(lat), Some(s)) => scalar_chirality(s, lat)?,
            (ChargeObservable::Topological, Some(lat), Some(s)) => {
                let field = onsite_spin_expectation(s, lat)?;
                topological_charge(&field, &self.path, self.spec.charge_mode)?
            }
            _ => f64::NAN,
        };
        rec.charge.push(charge);
        Ok(())
    }
}
