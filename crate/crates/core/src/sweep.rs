//! Phase diagrams over `(J, B)` and series over the DMI strength.
//!
//! Ground-state observables of a degenerate lowest level are evaluated on the
//! equal-weight mixture of the whole level, which makes them independent of
//! the basis the eigensolver happens to return.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{evolve_schrodinger, ChargeObservable, DriveSpec, EvolveOptions, Gate};
use crate::eigensolver::{lowest_eigenpairs, EigenResult, LanczosOptions};
use crate::error::{contract, Result, SkyrError};
use crate::lattice::{Boundary, SpinLattice};
use crate::observables::{
    csv_err, entanglement_entropy_mixture, onsite_spin_mixture, scalar_chirality_mixture, skyrmion_radius,
    topological_charge, ChargeMode, PartitionPreset,
};
use crate::operators::{build_hamiltonian, CouplingParams, StateVector};

/// Eigenpairs per point: one more than the six-fold helical degeneracy.
pub const DEFAULT_EIGENPAIRS: usize = 7;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    Helical,
    Skyrmion,
    FullyPolarized,
    Unclassified,
}

impl std::fmt::Display for Phase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Phase::Helical => "HS",
            Phase::Skyrmion => "SK",
            Phase::FullyPolarized => "FP",
            Phase::Unclassified => "UN",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseThresholds {
    pub eps_fp: f64,
    pub eps_sk: f64,
    /// Accepted topological charge window on open lattices.
    pub obc_window: [f64; 2],
}

impl Default for PhaseThresholds {
    fn default() -> Self {
        PhaseThresholds {
            eps_fp: 0.05,
            eps_sk: 0.1,
            obc_window: [0.8, 1.2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    #[serde(rename = "J")]
    pub j: f64,
    #[serde(rename = "B")]
    pub b: f64,
    #[serde(rename = "K")]
    pub k: f64,
    pub boundary: Boundary,
    pub q_chirality: f64,
    pub q_topological: f64,
    pub mean_sz: f64,
    pub central_sz: f64,
    pub entropy_density: f64,
    pub ground_energy: f64,
    pub degeneracy: usize,
    pub phase: Phase,
    /// Set when the point failed; observables are then NaN.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl PhasePoint {
    fn failed(j: f64, b: f64, k: f64, boundary: Boundary, err: &SkyrError) -> Self {
        PhasePoint {
            j,
            b,
            k,
            boundary,
            q_chirality: f64::NAN,
            q_topological: f64::NAN,
            mean_sz: f64::NAN,
            central_sz: f64::NAN,
            entropy_density: f64::NAN,
            ground_energy: f64::NAN,
            degeneracy: 0,
            phase: Phase::Unclassified,
            error: Some(err.to_string()),
        }
    }
}

pub fn classify_phase(p: &PhasePoint, th: &PhaseThresholds) -> Phase {
    if p.error.is_some() {
        return Phase::Unclassified;
    }
    match p.boundary {
        Boundary::Periodic => {
            let q = p.q_chirality;
            if p.mean_sz > 0.5 - th.eps_fp && q.abs() < th.eps_fp {
                Phase::FullyPolarized
            } else if (q - 0.5).abs() < th.eps_sk {
                Phase::Skyrmion
            } else if q < 0.5 - th.eps_sk && p.degeneracy > 1 {
                Phase::Helical
            } else {
                Phase::Unclassified
            }
        }
        Boundary::Open => {
            let q = p.q_topological;
            if q >= th.obc_window[0] && q <= th.obc_window[1] {
                Phase::Skyrmion
            } else if p.mean_sz > 0.5 - th.eps_fp {
                Phase::FullyPolarized
            } else {
                Phase::Unclassified
            }
        }
    }
}

/// Everything a sweep needs besides the grid itself.
#[derive(Debug, Clone)]
pub struct SweepOptions {
    pub d: f64,
    pub anisotropy_mode: crate::operators::AnisotropyMode,
    pub n_eigenpairs: usize,
    pub lanczos: LanczosOptions,
    pub seed: u64,
    pub thresholds: PhaseThresholds,
    pub partition: PartitionPreset,
    pub charge_mode: ChargeMode,
    /// Worker threads; `None` uses the global pool.
    pub workers: Option<usize>,
    /// JSON-lines file receiving each finished row; existing rows are reused.
    pub checkpoint: Option<PathBuf>,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            d: 1.0,
            anisotropy_mode: Default::default(),
            n_eigenpairs: DEFAULT_EIGENPAIRS,
            lanczos: LanczosOptions::default(),
            seed: 0,
            thresholds: PhaseThresholds::default(),
            partition: PartitionPreset::default(),
            charge_mode: ChargeMode::default(),
            workers: None,
            checkpoint: None,
        }
    }
}

/// Ground-state summary of one eigen-solve.
#[derive(Debug, Clone)]
pub struct GroundState {
    pub eigs: EigenResult,
    pub manifold: Vec<StateVector>,
}

impl GroundState {
    pub fn solve(lattice: &SpinLattice, params: &CouplingParams, k: usize, seed: u64, opts: &LanczosOptions) -> Result<Self> {
        let h = build_hamiltonian(lattice, params)?;
        let k = k.min(lattice.dim());
        let eigs = lowest_eigenpairs(&h, k, seed, opts)?;
        let manifold = eigs.degeneracy_groups[0]
            .iter()
            .map(|&i| eigs.eigenvectors[i].clone())
            .collect();
        Ok(GroundState { eigs, manifold })
    }
}

/// Observables of one parameter point on its ground manifold.
pub fn evaluate_point(lattice: &SpinLattice, params: &CouplingParams, opts: &SweepOptions) -> Result<PhasePoint> {
    let gs = GroundState::solve(lattice, params, opts.n_eigenpairs, opts.seed, &opts.lanczos)?;
    let field = onsite_spin_mixture(&gs.manifold, lattice)?;
    let q_chirality = if lattice.triangles().is_empty() {
        0.0
    } else {
        scalar_chirality_mixture(&gs.manifold, lattice)?
    };
    let q_topological = path_charge(&field, lattice, opts.charge_mode)?;
    let entropy_density = if lattice.n_sites() > 1 {
        entanglement_entropy_mixture(&gs.manifold, &opts.partition.sites(lattice))?
    } else {
        0.0
    };
    let mut p = PhasePoint {
        j: params.j,
        b: params.b[2],
        k: params.k,
        boundary: lattice.boundary(),
        q_chirality,
        q_topological,
        mean_sz: field.mean_sz(),
        central_sz: field.spins[lattice.center_index()][2],
        entropy_density,
        ground_energy: gs.eigs.ground_energy(),
        degeneracy: gs.manifold.len(),
        phase: Phase::Unclassified,
        error: None,
    };
    p.phase = classify_phase(&p, &opts.thresholds);
    Ok(p)
}

/// Charge along the diagonal path. A path site with vanishing spin carries
/// no texture and gives zero.
fn path_charge(field: &crate::observables::SpinField, lattice: &SpinLattice, mode: ChargeMode) -> Result<f64> {
    let path = lattice.diagonal_path();
    if path.len() < 2 {
        return Ok(0.0);
    }
    match topological_charge(field, &path, mode) {
        Err(SkyrError::DegenerateInput(_)) => Ok(0.0),
        other => other,
    }
}

fn check_grid(name: &str, g: &[f64]) -> Result<()> {
    if g.is_empty() {
        return Err(contract(format!("{name} grid is empty")));
    }
    if g.iter().any(|x| !x.is_finite()) || g.windows(2).any(|w| w[1] < w[0]) {
        return Err(contract(format!("{name} grid must be finite and sorted")));
    }
    Ok(())
}

/// Evenly spaced grid from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}

/// One eigen-solve per `(J, B)` point, rows over `J` and columns over `B`.
/// Output order is row-major whatever the worker count.
pub fn run_phase_diagram(
    lattice: &SpinLattice,
    j_grid: &[f64],
    b_grid: &[f64],
    k: f64,
    opts: &SweepOptions,
) -> Result<Vec<PhasePoint>> {
    check_grid("J", j_grid)?;
    check_grid("B", b_grid)?;
    let pool = match opts.workers {
        Some(0) => return Err(contract("worker count must be positive")),
        Some(n) => Some(
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| contract(format!("thread pool: {e}")))?,
        ),
        None => None,
    };

    let mut done: BTreeMap<usize, Vec<PhasePoint>> = BTreeMap::new();
    if let Some(path) = &opts.checkpoint {
        done = load_rows(path, j_grid, b_grid.len())?;
    }

    let row = |j: f64| -> Vec<PhasePoint> {
        b_grid
            .par_iter()
            .map(|&b| {
                let params = CouplingParams::new(j, opts.d, [0.0, 0.0, b], k).anisotropy(opts.anisotropy_mode);
                evaluate_point(lattice, &params, opts)
                    .unwrap_or_else(|e| PhasePoint::failed(j, b, k, lattice.boundary(), &e))
            })
            .collect()
    };

    let mut out = Vec::with_capacity(j_grid.len() * b_grid.len());
    for (r, &j) in j_grid.iter().enumerate() {
        if let Some(points) = done.remove(&r) {
            out.extend(points);
            continue;
        }
        let points = match &pool {
            Some(p) => p.install(|| row(j)),
            None => row(j),
        };
        if let Some(path) = &opts.checkpoint {
            append_row(path, r, &points)?;
        }
        out.extend(points);
    }
    Ok(out)
}

#[derive(Serialize, Deserialize)]
struct RowRecord {
    row: usize,
    points: Vec<PhasePoint>,
}

fn append_row(path: &Path, row: usize, points: &[PhasePoint]) -> Result<()> {
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    let rec = RowRecord {
        row,
        points: points.to_vec(),
    };
    serde_json::to_writer(&mut f, &rec)?;
    f.write_all(b"\n")?;
    f.sync_data()?;
    Ok(())
}

fn load_rows(path: &Path, j_grid: &[f64], n_cols: usize) -> Result<BTreeMap<usize, Vec<PhasePoint>>> {
    let mut rows = BTreeMap::new();
    let Ok(f) = File::open(path) else {
        return Ok(rows);
    };
    for line in BufReader::new(f).lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        // a torn final line from an interrupted run is skipped
        let Ok(rec) = serde_json::from_str::<RowRecord>(&line) else {
            continue;
        };
        let matches = rec.row < j_grid.len()
            && rec.points.len() == n_cols
            && rec.points.iter().all(|p| p.j == j_grid[rec.row]);
        if matches {
            rows.insert(rec.row, rec.points);
        }
    }
    Ok(rows)
}

/// CSV with one row per grid point.
pub fn write_phase_csv<W: Write>(points: &[PhasePoint], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record([
        "J", "B", "K", "boundary", "Q_chir", "Q_topo", "mean_Sz", "central_Sz", "S_ent", "E0", "degeneracy", "phase",
    ])
    .map_err(csv_err)?;
    for p in points {
        out.write_record([
            p.j.to_string(),
            p.b.to_string(),
            p.k.to_string(),
            p.boundary.to_string(),
            p.q_chirality.to_string(),
            p.q_topological.to_string(),
            p.mean_sz.to_string(),
            p.central_sz.to_string(),
            p.entropy_density.to_string(),
            p.ground_energy.to_string(),
            p.degeneracy.to_string(),
            p.phase.to_string(),
        ])
        .map_err(csv_err)?;
    }
    out.flush()?;
    Ok(())
}

/// Work repeated for each DMI strength in [`dmi_series`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SeriesTask {
    /// Ground state only: charge and radius.
    Static,
    /// Precession of the ground state under a constant field along the gate
    /// axis, tracking the central entropy and the `|⟨S_z⟩|` envelope.
    Precession {
        gate: Gate,
        field: f64,
        periods: usize,
        steps_per_period: usize,
        /// Fraction of the run used for the initial entropy slope.
        #[serde(default = "default_fit_fraction")]
        fit_fraction: f64,
    },
}

fn default_fit_fraction() -> f64 {
    0.25
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesPoint {
    #[serde(rename = "D")]
    pub d: f64,
    pub ground_energy: f64,
    pub q_topological: f64,
    pub radius: Option<f64>,
    pub entropy_rate: Option<f64>,
    /// Mean fractional loss of `|⟨S_z⟩|` per precession period.
    pub decay_per_period: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Repeats `task` for each `D`, all other couplings fixed.
pub fn dmi_series(
    lattice: &SpinLattice,
    base: &CouplingParams,
    d_values: &[f64],
    task: &SeriesTask,
    opts: &SweepOptions,
) -> Result<Vec<SeriesPoint>> {
    if d_values.is_empty() {
        return Err(contract("DMI series is empty"));
    }
    if d_values.iter().any(|&d| !(d > 0.0)) || d_values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(contract("DMI values must be positive and ascending"));
    }
    let run = || -> Vec<SeriesPoint> {
        d_values
            .par_iter()
            .map(|&d| {
                let params = CouplingParams { d, ..*base };
                series_point(lattice, &params, task, opts).unwrap_or_else(|e| SeriesPoint {
                    d,
                    ground_energy: f64::NAN,
                    q_topological: f64::NAN,
                    radius: None,
                    entropy_rate: None,
                    decay_per_period: None,
                    error: Some(e.to_string()),
                })
            })
            .collect()
    };
    Ok(match opts.workers {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| contract(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    })
}

fn series_point(lattice: &SpinLattice, params: &CouplingParams, task: &SeriesTask, opts: &SweepOptions) -> Result<SeriesPoint> {
    let gs = GroundState::solve(lattice, params, opts.n_eigenpairs.min(2), opts.seed, &opts.lanczos)?;
    let field = onsite_spin_mixture(&gs.manifold, lattice)?;
    let q_topological = path_charge(&field, lattice, opts.charge_mode)?;
    let radius = if lattice.boundary() == Boundary::Open {
        skyrmion_radius(&field, lattice)?
    } else {
        None
    };
    let mut point = SeriesPoint {
        d: params.d,
        ground_energy: gs.eigs.ground_energy(),
        q_topological,
        radius,
        entropy_rate: None,
        decay_per_period: None,
        error: None,
    };
    if let SeriesTask::Precession {
        gate,
        field,
        periods,
        steps_per_period,
        fit_fraction,
    } = task
    {
        let (rate, decay) = precession_metrics(lattice, params, &gs.manifold[0], *gate, *field, *periods, *steps_per_period, *fit_fraction)?;
        point.entropy_rate = Some(rate);
        point.decay_per_period = Some(decay);
    }
    Ok(point)
}

/// Initial entropy slope and per-period `|⟨S_z⟩|` decay under a constant
/// field of magnitude `field` along the gate axis.
#[allow(clippy::too_many_arguments)]
pub fn precession_metrics(
    lattice: &SpinLattice,
    params: &CouplingParams,
    psi0: &StateVector,
    gate: Gate,
    field: f64,
    periods: usize,
    steps_per_period: usize,
    fit_fraction: f64,
) -> Result<(f64, f64)> {
    if field == 0.0 || periods == 0 || steps_per_period == 0 {
        return Err(contract("precession needs a field, periods and steps"));
    }
    let h0 = build_hamiltonian(lattice, params)?;
    let n = gate.axis();
    let drive = DriveSpec::StaticField {
        field: [field * n[0], field * n[1], field * n[2]],
        gyromagnetic: 1.0,
    };
    let period = 2.0 * std::f64::consts::PI / field.abs();
    let dt = period / steps_per_period as f64;
    let mut opts = EvolveOptions::new(period * periods as f64, dt);
    opts.record.lattice = Some(lattice.clone());
    opts.record.charge = ChargeObservable::None;
    let (rec, _) = evolve_schrodinger(&h0, &drive, psi0, &opts)?;

    // least-squares slope of the entropy over the opening window
    let n_fit = ((rec.len() as f64 * fit_fraction).ceil() as usize).clamp(2, rec.len());
    let (ts, ss) = (&rec.times[..n_fit], &rec.entropy[..n_fit]);
    let tm = ts.iter().sum::<f64>() / n_fit as f64;
    let sm = ss.iter().sum::<f64>() / n_fit as f64;
    let cov: f64 = ts.iter().zip(ss).map(|(t, s)| (t - tm) * (s - sm)).sum();
    let var: f64 = ts.iter().map(|t| (t - tm).powi(2)).sum();
    let rate = if var > 0.0 { cov / var } else { 0.0 };

    // |⟨S_z⟩| of the central spin sampled once per period
    let envelope: Vec<f64> = (0..=periods)
        .map(|p| rec.central_spin[p * steps_per_period][2].abs())
        .collect();
    let first = envelope[0];
    let last = envelope[periods];
    let decay = if first > 0.0 && last > 0.0 {
        1.0 - (last / first).powf(1.0 / periods as f64)
    } else {
        1.0
    };
    Ok((rate, decay))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::build_triangular;

    fn point(q: f64, mean_sz: f64, deg: usize, boundary: Boundary, qt: f64) -> PhasePoint {
        PhasePoint {
            j: 0.5,
            b: 0.5,
            k: 0.0,
            boundary,
            q_chirality: q,
            q_topological: qt,
            mean_sz,
            central_sz: mean_sz,
            entropy_density: 0.0,
            ground_energy: -1.0,
            degeneracy: deg,
            phase: Phase::Unclassified,
            error: None,
        }
    }

    #[test]
    fn classification_rules() {
        let th = PhaseThresholds::default();
        let pbc = Boundary::Periodic;
        assert_eq!(classify_phase(&point(0.001, 0.5, 1, pbc, 0.0), &th), Phase::FullyPolarized);
        assert_eq!(classify_phase(&point(0.49, 0.3, 1, pbc, 0.0), &th), Phase::Skyrmion);
        assert_eq!(classify_phase(&point(0.2, 0.1, 6, pbc, 0.0), &th), Phase::Helical);
        assert_eq!(classify_phase(&point(0.2, 0.1, 1, pbc, 0.0), &th), Phase::Unclassified);
        let obc = Boundary::Open;
        assert_eq!(classify_phase(&point(0.0, 0.2, 1, obc, 1.0), &th), Phase::Skyrmion);
        assert_eq!(classify_phase(&point(0.0, 0.2, 1, obc, 0.5), &th), Phase::Unclassified);
    }

    #[test]
    fn saturated_point_is_fully_polarized() {
        let lat = build_triangular(1, Boundary::Periodic);
        let pts = run_phase_diagram(&lat, &[0.5], &[4.0], 0.0, &SweepOptions::default()).unwrap();
        let p = &pts[0];
        assert!(p.error.is_none());
        assert!((p.mean_sz - 0.5).abs() < 1e-6);
        assert!(p.q_chirality.abs() < 1e-6);
        assert!(p.entropy_density.abs() < 1e-6);
        assert_eq!(p.phase, Phase::FullyPolarized);
    }

    #[test]
    fn grid_order_and_errors() {
        let lat = build_triangular(1, Boundary::Open);
        let opts = SweepOptions::default();
        let pts = run_phase_diagram(&lat, &[0.1, 0.3], &[0.0, 0.5, 1.0], 0.0, &opts).unwrap();
        assert_eq!(pts.len(), 6);
        for (idx, p) in pts.iter().enumerate() {
            assert_eq!(p.j, [0.1, 0.3][idx / 3]);
            assert_eq!(p.b, [0.0, 0.5, 1.0][idx % 3]);
        }
        assert!(run_phase_diagram(&lat, &[], &[0.0], 0.0, &opts).is_err());
        assert!(run_phase_diagram(&lat, &[0.2, 0.1], &[0.0], 0.0, &opts).is_err());

        let bad = SweepOptions {
            n_eigenpairs: 0,
            ..SweepOptions::default()
        };
        let pts = run_phase_diagram(&lat, &[0.1], &[0.0], 0.0, &bad).unwrap();
        assert!(pts[0].error.is_some() && pts[0].ground_energy.is_nan());
    }

    #[test]
    fn checkpoint_rows_are_reused() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rows.jsonl");
        let lat = build_triangular(1, Boundary::Open);
        let opts = SweepOptions {
            checkpoint: Some(path.clone()),
            ..SweepOptions::default()
        };
        let first = run_phase_diagram(&lat, &[0.1, 0.2], &[0.0, 0.3], 0.0, &opts).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 2);
        let second = run_phase_diagram(&lat, &[0.1, 0.2], &[0.0, 0.3], 0.0, &opts).unwrap();
        assert_eq!(format!("{first:?}"), format!("{second:?}"));
        assert_eq!(std::fs::read_to_string(&path).unwrap().lines().count(), 2);
    }

    #[test]
    fn csv_header() {
        let mut buf = Vec::new();
        write_phase_csv(&[point(0.5, 0.2, 1, Boundary::Periodic, 0.0)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("J,B,K,boundary,Q_chir,Q_topo,mean_Sz,central_Sz,S_ent,E0,degeneracy,phase\n"));
        assert!(text.contains(",PBC,"));
    }

    #[test]
    fn single_element_series_matches_direct_run() {
        let lat = build_triangular(1, Boundary::Open);
        let base = CouplingParams::with_bz(0.04, 0.01, 0.02);
        let opts = SweepOptions::default();
        let series = dmi_series(&lat, &base, &[1.0], &SeriesTask::Static, &opts).unwrap();
        let direct = series_point(&lat, &base, &SeriesTask::Static, &opts).unwrap();
        assert_eq!(series[0], direct);
        assert!(dmi_series(&lat, &base, &[1.0, 0.5], &SeriesTask::Static, &opts).is_err());
        assert!(dmi_series(&lat, &base, &[0.0], &SeriesTask::Static, &opts).is_err());
    }

    #[test]
    fn linspace_endpoints() {
        assert_eq!(linspace(0.0, 1.0, 3), vec![0.0, 0.5, 1.0]);
        assert_eq!(linspace(2.0, 3.0, 1), vec![2.0]);
    }
}
