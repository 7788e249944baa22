//! Run configuration files.
//!
//! A config names one lattice, one coupling set and exactly one task block.
//! Unknown keys are rejected so typos surface as config errors.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use skyrlab_core::dynamics::{ChargeObservable, Gate};
use skyrlab_core::eigensolver::LanczosOptions;
use skyrlab_core::lattice::{build_parallelogram, build_triangular, Boundary, SpinLattice};
use skyrlab_core::observables::{ChargeMode, PartitionPreset};
use skyrlab_core::operators::CouplingParams;
use skyrlab_core::sweep::{linspace, PhaseThresholds, SeriesTask};

use crate::CliError;

/// Largest lattice the CLI will attempt; beyond this one state vector alone
/// exceeds a gigabyte.
pub const MAX_SITES: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Diagonalize,
    Sweep,
    Evolve,
    Gate,
    Lindblad,
    Readout,
    #[serde(alias = "dmi-series")]
    DmiSeries,
}

impl TaskKind {
    pub fn block_name(self) -> &'static str {
        match self {
            TaskKind::Diagonalize => "diagonalize",
            TaskKind::Sweep => "sweep",
            TaskKind::Evolve => "evolve",
            TaskKind::Gate => "gate",
            TaskKind::Lindblad => "lindblad",
            TaskKind::Readout => "readout",
            TaskKind::DmiSeries => "dmi_series",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub task: Option<TaskKind>,
    #[serde(default)]
    pub description: Option<String>,
    #[serde(default)]
    pub lattice: LatticeConfig,
    #[serde(default)]
    pub params: CouplingParams,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub workers: Option<usize>,
    #[serde(default)]
    pub lanczos: LanczosConfig,
    #[serde(default)]
    pub output: OutputConfig,

    #[serde(default)]
    pub diagonalize: Option<DiagonalizeTask>,
    #[serde(default)]
    pub sweep: Option<SweepTask>,
    #[serde(default)]
    pub evolve: Option<EvolveTask>,
    #[serde(default)]
    pub gate: Option<GateTask>,
    #[serde(default)]
    pub lindblad: Option<LindbladTask>,
    #[serde(default)]
    pub readout: Option<ReadoutTask>,
    #[serde(default)]
    pub dmi_series: Option<DmiSeriesTask>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    /// Rings around the centre of the hexagonal patch.
    #[serde(default)]
    pub n_shells: Option<usize>,
    #[serde(default = "default_boundary")]
    pub boundary: Boundary,
    /// `[rows, cols]` of an open parallelogram, used instead of `n_shells`.
    #[serde(default)]
    pub parallelogram: Option<[usize; 2]>,
}

fn default_boundary() -> Boundary {
    Boundary::Periodic
}

impl Default for LatticeConfig {
    fn default() -> Self {
        LatticeConfig {
            n_shells: Some(1),
            boundary: Boundary::Periodic,
            parallelogram: None,
        }
    }
}

impl LatticeConfig {
    pub fn n_sites(&self) -> Result<usize, CliError> {
        match (self.n_shells, self.parallelogram) {
            (Some(n), None) => Ok(3 * n * (n + 1) + 1),
            (None, Some([r, c])) => Ok(r * c),
            (Some(_), Some(_)) => Err(CliError::Config("lattice: give n_shells or parallelogram, not both".into())),
            (None, None) => Err(CliError::Config("lattice: n_shells or parallelogram required".into())),
        }
    }

    /// Builds the lattice, refusing sizes beyond [`MAX_SITES`].
    pub fn build(&self) -> Result<SpinLattice, CliError> {
        let n = self.n_sites()?;
        if n > MAX_SITES {
            return Err(CliError::Resource(format!(
                "{n} sites exceed the supported maximum of {MAX_SITES}"
            )));
        }
        match (self.n_shells, self.parallelogram) {
            (Some(s), None) => Ok(build_triangular(s, self.boundary)),
            (None, Some([r, c])) => {
                if self.boundary == Boundary::Periodic {
                    return Err(CliError::Config("parallelogram lattices are open; set boundary to OBC".into()));
                }
                build_parallelogram(r, c).map_err(|e| CliError::Config(e.to_string()))
            }
            _ => unreachable!("checked by n_sites"),
        }
    }
}

/// Eigensolver overrides; unset fields keep the library defaults.
#[derive(Debug, Clone, Copy, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LanczosConfig {
    pub tol: Option<f64>,
    pub tol_degeneracy: Option<f64>,
    pub max_krylov: Option<usize>,
    pub max_restarts: Option<usize>,
    pub memory_budget: Option<usize>,
}

impl LanczosConfig {
    pub fn options(&self) -> LanczosOptions {
        let d = LanczosOptions::default();
        LanczosOptions {
            tol: self.tol.unwrap_or(d.tol),
            tol_degeneracy: self.tol_degeneracy.unwrap_or(d.tol_degeneracy),
            max_krylov: self.max_krylov.unwrap_or(d.max_krylov),
            max_restarts: self.max_restarts.unwrap_or(d.max_restarts),
            memory_budget: self.memory_budget.unwrap_or(d.memory_budget),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_out_dir")]
    pub directory: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            directory: default_out_dir(),
            formats: default_formats(),
        }
    }
}

impl OutputConfig {
    pub fn csv(&self) -> bool {
        self.formats.contains(&Format::Csv)
    }

    pub fn json(&self) -> bool {
        self.formats.contains(&Format::Json)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverMethod {
    /// Dense for small spaces, Lanczos otherwise.
    #[default]
    Auto,
    Lanczos,
    Dense,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagonalizeTask {
    #[serde(default = "four")]
    pub n_eigenpairs: usize,
    #[serde(default)]
    pub method: SolverMethod,
    #[serde(default)]
    pub partition: PartitionPreset,
    #[serde(default)]
    pub charge_mode: ChargeMode,
    /// Grid points per axis of the structure factor; omitted skips it.
    #[serde(default)]
    pub structure_factor: Option<usize>,
    /// Also write every eigenvector's spin field.
    #[serde(default)]
    pub excited_fields: bool,
}

fn four() -> usize {
    4
}

/// A grid either listed outright or as an inclusive linear range.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum GridSpec {
    Values(Vec<f64>),
    Range { from: f64, to: f64, n: usize },
}

impl GridSpec {
    pub fn values(&self) -> Vec<f64> {
        match self {
            GridSpec::Values(v) => v.clone(),
            GridSpec::Range { from, to, n } => linspace(*from, *to, *n),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepTask {
    #[serde(rename = "J")]
    pub j: GridSpec,
    #[serde(rename = "B")]
    pub b: GridSpec,
    /// Anisotropy for the whole grid; defaults to `params.K`.
    #[serde(rename = "K", default)]
    pub k: Option<f64>,
    #[serde(default = "seven")]
    pub n_eigenpairs: usize,
    #[serde(default)]
    pub thresholds: PhaseThresholds,
    #[serde(default)]
    pub partition: PartitionPreset,
    #[serde(default)]
    pub charge_mode: ChargeMode,
    /// Keep a per-row checkpoint in the output directory.
    #[serde(default = "yes")]
    pub checkpoint: bool,
}

fn seven() -> usize {
    skyrlab_core::sweep::DEFAULT_EIGENPAIRS
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialState {
    /// The `index`-th eigenvector of the static Hamiltonian.
    Eigenstate {
        #[serde(default)]
        index: usize,
    },
    AllUp,
    /// A product state with one (unnormalized) spin direction per site.
    Product { directions: Vec<[f64; 3]> },
    /// `cos(θ/2)|ψ1⟩ + e^{iφ} sin(θ/2)|ψ2⟩` in the logical basis.
    Logical { theta: f64, phi: f64 },
}

impl Default for InitialState {
    fn default() -> Self {
        InitialState::Eigenstate { index: 0 }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DriveConfig {
    None,
    Static {
        field: [f64; 3],
        #[serde(default = "unit")]
        gyromagnetic: f64,
    },
    Periodic {
        field: [f64; 3],
        /// Defaults to the qubit frequency `E1 − E0`.
        #[serde(default)]
        frequency: Option<f64>,
        #[serde(default = "unit")]
        gyromagnetic: f64,
    },
    /// Precessional gate: a uniform field chosen so one spin feels `A cos(ωt) σ_n`.
    GateField {
        gate: Gate,
        amplitude: f64,
        #[serde(default)]
        frequency: Option<f64>,
        #[serde(default = "unit")]
        gyromagnetic: f64,
    },
    /// `A cos(ωt) Σ g_ab |ψa⟩⟨ψb|` built from the two lowest eigenvectors.
    Rank2 {
        gate: Gate,
        amplitude: f64,
        #[serde(default)]
        frequency: Option<f64>,
    },
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveTask {
    #[serde(default)]
    pub initial: InitialState,
    pub drive: DriveConfig,
    pub t_final: f64,
    pub dt: f64,
    #[serde(default = "one")]
    pub record_every: usize,
    #[serde(default)]
    pub charge: ChargeObservable,
    #[serde(default)]
    pub charge_mode: ChargeMode,
    #[serde(default)]
    pub partition: PartitionPreset,
    #[serde(default = "two")]
    pub n_eigenpairs: usize,
    /// Seconds between state checkpoints; omitted disables them.
    #[serde(default)]
    pub checkpoint_seconds: Option<f64>,
    /// Continue from the checkpoint in the output directory if one exists.
    #[serde(default)]
    pub resume: bool,
}

fn one() -> usize {
    1
}

fn two() -> usize {
    2
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateMode {
    /// Rank-2 drive in the full Hilbert space.
    #[default]
    Rank2,
    /// Uniform precessional field in the full Hilbert space.
    Field,
    /// Projected two-level model only.
    TwoLevel,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GateTask {
    pub gates: Vec<Gate>,
    #[serde(default)]
    pub mode: GateMode,
    pub amplitude: f64,
    /// Defaults to the qubit frequency `E1 − E0`.
    #[serde(default)]
    pub frequency: Option<f64>,
    #[serde(default = "unit")]
    pub gyromagnetic: f64,
    /// Run length in units of the Rabi period `2π/|A|`.
    #[serde(default = "unit")]
    pub periods: f64,
    /// Integration steps per Rabi period (raised if needed to resolve the drive).
    #[serde(default = "default_steps")]
    pub steps_per_period: usize,
    #[serde(default = "one")]
    pub record_every: usize,
    /// Also integrate the projected model and report the Bloch deviation.
    #[serde(default = "yes")]
    pub compare_two_level: bool,
    #[serde(default)]
    pub charge: ChargeObservable,
    #[serde(default)]
    pub charge_mode: ChargeMode,
    #[serde(default)]
    pub partition: PartitionPreset,
    #[serde(default = "three")]
    pub n_eigenpairs: usize,
}

fn default_steps() -> usize {
    2000
}

fn three() -> usize {
    3
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum QubitSource {
    /// Levels `E1 < E2` given outright.
    Levels {
        #[serde(rename = "E1")]
        e1: f64,
        #[serde(rename = "E2")]
        e2: f64,
    },
    /// The two lowest levels of the configured lattice.
    Lattice(LatticeQubit),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatticeQubit {
    Lattice,
}

impl Default for QubitSource {
    fn default() -> Self {
        QubitSource::Lattice(LatticeQubit::Lattice)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QubitState {
    #[default]
    Ground,
    Excited,
    Plus,
    Minus,
    PlusI,
    MinusI,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Decoherence {
    #[serde(rename = "T1")]
    pub t1: f64,
    #[serde(rename = "T2")]
    pub t2: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LindbladTask {
    #[serde(default)]
    pub qubit: QubitSource,
    #[serde(default = "default_gate")]
    pub gate: Gate,
    pub amplitude: f64,
    #[serde(default)]
    pub frequency: Option<f64>,
    #[serde(default)]
    pub initial: QubitState,
    /// One run per entry.
    pub decoherence: Vec<Decoherence>,
    pub t_final: f64,
    pub dt: f64,
}

fn default_gate() -> Gate {
    Gate::X
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadoutTask {
    #[serde(default = "default_readout_states")]
    pub states: Vec<QubitState>,
    #[serde(default = "yes")]
    pub bell: bool,
}

fn default_readout_states() -> Vec<QubitState> {
    vec![QubitState::Plus, QubitState::Minus, QubitState::PlusI, QubitState::MinusI]
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DmiSeriesTask {
    #[serde(rename = "D")]
    pub d: Vec<f64>,
    #[serde(default = "static_series")]
    pub series: SeriesTask,
    #[serde(default)]
    pub charge_mode: ChargeMode,
}

fn static_series() -> SeriesTask {
    SeriesTask::Static
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    fn present_blocks(&self) -> Vec<TaskKind> {
        let mut v = Vec::new();
        if self.diagonalize.is_some() {
            v.push(TaskKind::Diagonalize);
        }
        if self.sweep.is_some() {
            v.push(TaskKind::Sweep);
        }
        if self.evolve.is_some() {
            v.push(TaskKind::Evolve);
        }
        if self.gate.is_some() {
            v.push(TaskKind::Gate);
        }
        if self.lindblad.is_some() {
            v.push(TaskKind::Lindblad);
        }
        if self.readout.is_some() {
            v.push(TaskKind::Readout);
        }
        if self.dmi_series.is_some() {
            v.push(TaskKind::DmiSeries);
        }
        v
    }

    /// Checks the structural rules against the subcommand being run.
    pub fn validate(&self, requested: TaskKind) -> Result<(), CliError> {
        let blocks = self.present_blocks();
        if blocks.len() != 1 {
            let names: Vec<_> = blocks.iter().map(|b| b.block_name()).collect();
            return Err(CliError::Config(format!(
                "exactly one task block required, found {}: {names:?}",
                blocks.len()
            )));
        }
        if blocks[0] != requested {
            return Err(CliError::Config(format!(
                "subcommand expects a '{}' block but the config has '{}'",
                requested.block_name(),
                blocks[0].block_name()
            )));
        }
        if let Some(t) = self.task {
            if t != requested {
                return Err(CliError::Config(format!(
                    "config task '{}' does not match the subcommand",
                    t.block_name()
                )));
            }
        }
        self.lattice.n_sites()?;
        let p = &self.params;
        if !p.is_finite() {
            return Err(CliError::Config("params must be finite".into()));
        }
        if p.d < 0.0 {
            return Err(CliError::Config("D must be non-negative".into()));
        }
        if self.workers == Some(0) {
            return Err(CliError::Config("workers must be positive".into()));
        }
        if self.output.formats.is_empty() {
            return Err(CliError::Config("output.formats is empty".into()));
        }
        let positive = |name: &str, x: f64| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(CliError::Config(format!("{name} must be positive and finite")))
            }
        };
        match requested {
            TaskKind::Diagonalize => {
                let d = self.diagonalize.as_ref().unwrap();
                if d.n_eigenpairs == 0 {
                    return Err(CliError::Config("n_eigenpairs must be positive".into()));
                }
                if d.structure_factor == Some(0) {
                    return Err(CliError::Config("structure_factor resolution must be positive".into()));
                }
            }
            TaskKind::Sweep => {
                let s = self.sweep.as_ref().unwrap();
                if s.j.values().is_empty() || s.b.values().is_empty() {
                    return Err(CliError::Config("sweep grids must be nonempty".into()));
                }
                if s.n_eigenpairs == 0 {
                    return Err(CliError::Config("n_eigenpairs must be positive".into()));
                }
            }
            TaskKind::Evolve => {
                let e = self.evolve.as_ref().unwrap();
                positive("t_final", e.t_final)?;
                positive("dt", e.dt)?;
                if e.record_every == 0 {
                    return Err(CliError::Config("record_every must be positive".into()));
                }
                if let Some(s) = e.checkpoint_seconds {
                    positive("checkpoint_seconds", s)?;
                }
            }
            TaskKind::Gate => {
                let g = self.gate.as_ref().unwrap();
                if g.gates.is_empty() {
                    return Err(CliError::Config("gate list is empty".into()));
                }
                if g.amplitude == 0.0 || !g.amplitude.is_finite() {
                    return Err(CliError::Config("amplitude must be nonzero and finite".into()));
                }
                positive("periods", g.periods)?;
                if g.steps_per_period == 0 || g.record_every == 0 {
                    return Err(CliError::Config("steps_per_period and record_every must be positive".into()));
                }
                if g.n_eigenpairs < 2 {
                    return Err(CliError::Config("a qubit needs at least two eigenpairs".into()));
                }
            }
            TaskKind::Lindblad => {
                let l = self.lindblad.as_ref().unwrap();
                positive("t_final", l.t_final)?;
                positive("dt", l.dt)?;
                if l.decoherence.is_empty() {
                    return Err(CliError::Config("decoherence list is empty".into()));
                }
                for d in &l.decoherence {
                    if !(d.t1 > 0.0) || !(d.t2 > 0.0) || d.t2 > 2.0 * d.t1 {
                        return Err(CliError::Config(format!(
                            "need T1, T2 > 0 and T2 <= 2 T1 (got T1 = {}, T2 = {})",
                            d.t1, d.t2
                        )));
                    }
                }
            }
            TaskKind::Readout => {
                let r = self.readout.as_ref().unwrap();
                if r.states.is_empty() && !r.bell {
                    return Err(CliError::Config("readout has nothing to do".into()));
                }
            }
            TaskKind::DmiSeries => {
                let s = self.dmi_series.as_ref().unwrap();
                if s.d.is_empty() || s.d.iter().any(|&d| !(d > 0.0)) || s.d.windows(2).any(|w| w[1] <= w[0]) {
                    return Err(CliError::Config("D values must be positive and ascending".into()));
                }
            }
        }
        Ok(())
    }
}
