//! Static observables of many-body states.
//!
//! Spin expectations are in units where a single spin-1/2 ranges over
//! `[-1/2, 1/2]`. Chirality uses unit-normalized Pauli vectors and is averaged
//! over counter-clockwise elementary triangles.
//!
//! Functions taking a slice of states evaluate the equal-weight mixture of
//! those states. This is how a degenerate ground level is treated: the
//! `T → 0` limit of the thermal state, which does not depend on the basis the
//! eigensolver happened to return.

use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result, SkyrError};
use crate::lattice::{Boundary, SpinLattice};
use crate::operators::{bond_terms, pauli_expectation, site_terms, Axis, CouplingParams, StateVector, C64, ZERO};

/// Per-site `(⟨S_x⟩, ⟨S_y⟩, ⟨S_z⟩)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinField {
    pub spins: Vec<[f64; 3]>,
}

impl SpinField {
    pub fn uniform(n: usize, s: [f64; 3]) -> Self {
        SpinField { spins: vec![s; n] }
    }

    pub fn len(&self) -> usize {
        self.spins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.spins.is_empty()
    }

    pub fn sz(&self) -> Vec<f64> {
        self.spins.iter().map(|s| s[2]).collect()
    }

    pub fn mean_sz(&self) -> f64 {
        self.spins.iter().map(|s| s[2]).sum::<f64>() / self.spins.len() as f64
    }

    /// Writes `site,x,y,Sx,Sy,Sz` rows.
    pub fn write_csv<W: Write>(&self, lattice: &SpinLattice, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["site", "x", "y", "Sx", "Sy", "Sz"]).map_err(csv_err)?;
        for (i, (s, p)) in self.spins.iter().zip(lattice.positions()).enumerate() {
            out.serialize((i, p[0], p[1], s[0], s[1], s[2])).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> SkyrError {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => SkyrError::Io(io),
        other => SkyrError::Config(format!("csv: {other:?}")),
    }
}

fn check_state(state: &StateVector, lattice: &SpinLattice) -> Result<()> {
    if state.n_sites() != lattice.n_sites() {
        return Err(SkyrError::DimensionMismatch {
            expected: lattice.n_sites(),
            found: state.n_sites(),
        });
    }
    state.check_normalized(1e-9)
}

fn check_states(states: &[StateVector], lattice: &SpinLattice) -> Result<()> {
    if states.is_empty() {
        return Err(contract("empty state ensemble"));
    }
    states.iter().try_for_each(|s| check_state(s, lattice))
}

fn mean_over<F>(states: &[StateVector], f: F) -> f64
where
    F: Fn(&StateVector) -> f64,
{
    states.iter().map(f).sum::<f64>() / states.len() as f64
}

/// `⟨S_α^i⟩` for every site and axis.
pub fn onsite_spin_expectation(state: &StateVector, lattice: &SpinLattice) -> Result<SpinField> {
    onsite_spin_mixture(std::slice::from_ref(state), lattice)
}

/// Spin field of the equal-weight mixture of `states`.
pub fn onsite_spin_mixture(states: &[StateVector], lattice: &SpinLattice) -> Result<SpinField> {
    check_states(states, lattice)?;
    let spins = (0..lattice.n_sites())
        .map(|i| {
            let mut s = [0.0; 3];
            for (a, axis) in Axis::ALL.into_iter().enumerate() {
                let (x, z) = axis.masks(i);
                s[a] = 0.5 * mean_over(states, |st| pauli_expectation(st.amplitudes(), x, z).re);
            }
            s
        })
        .collect();
    Ok(SpinField { spins })
}

const LEVI_CIVITA: [(Axis, Axis, Axis, f64); 6] = [
    (Axis::X, Axis::Y, Axis::Z, 1.0),
    (Axis::Y, Axis::Z, Axis::X, 1.0),
    (Axis::Z, Axis::X, Axis::Y, 1.0),
    (Axis::X, Axis::Z, Axis::Y, -1.0),
    (Axis::Z, Axis::Y, Axis::X, -1.0),
    (Axis::Y, Axis::X, Axis::Z, -1.0),
];

fn triangle_chirality(amps: &[C64], [i, j, k]: [usize; 3]) -> f64 {
    LEVI_CIVITA
        .iter()
        .map(|&(a, b, c, sign)| {
            let (xa, za) = a.masks(i);
            let (xb, zb) = b.masks(j);
            let (xc, zc) = c.masks(k);
            sign * pauli_expectation(amps, xa | xb | xc, za | zb | zc).re
        })
        .sum()
}

/// `Q = (1/N_Δ) Σ_Δ ⟨σ_i · (σ_j × σ_k)⟩` over counter-clockwise triangles.
pub fn scalar_chirality(state: &StateVector, lattice: &SpinLattice) -> Result<f64> {
    scalar_chirality_mixture(std::slice::from_ref(state), lattice)
}

pub fn scalar_chirality_mixture(states: &[StateVector], lattice: &SpinLattice) -> Result<f64> {
    check_states(states, lattice)?;
    let tris = lattice.triangles();
    if tris.is_empty() {
        return Err(contract("lattice has no triangles for the chirality"));
    }
    let total = mean_over(states, |st| {
        tris.iter().map(|&t| triangle_chirality(st.amplitudes(), t)).sum()
    });
    Ok(total / tris.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChargeMode {
    /// Sum of rotation angles between consecutive path sites.
    #[default]
    PathAccumulated,
    /// Twice the angle between the first and last path site.
    Endpoints,
}

fn angle_between(a: [f64; 3], b: [f64; 3]) -> f64 {
    let na = (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt();
    let nb = (b[0] * b[0] + b[1] * b[1] + b[2] * b[2]).sqrt();
    let c = (a[0] * b[0] + a[1] * b[1] + a[2] * b[2]) / (na * nb);
    c.clamp(-1.0, 1.0).acos()
}

/// Winding of the spin field along `path`, in units of full turns.
pub fn topological_charge(field: &SpinField, path: &[usize], mode: ChargeMode) -> Result<f64> {
    if path.len() < 2 {
        return Err(contract("topological charge needs a path of at least two sites"));
    }
    for &p in path {
        let s = field.spins.get(p).ok_or(SkyrError::IndexOutOfRange {
            what: "path site",
            index: p,
            len: field.len(),
        })?;
        if s.iter().map(|x| x * x).sum::<f64>().sqrt() < 1e-12 {
            return Err(SkyrError::DegenerateInput(format!(
                "spin expectation vanishes on path site {p}"
            )));
        }
    }
    let tau = std::f64::consts::TAU;
    Ok(match mode {
        ChargeMode::PathAccumulated => {
            path.windows(2)
                .map(|w| angle_between(field.spins[w[0]], field.spins[w[1]]))
                .sum::<f64>()
                / tau
        }
        ChargeMode::Endpoints => {
            2.0 * angle_between(field.spins[path[0]], field.spins[path[path.len() - 1]]) / tau
        }
    })
}

/// `S_αβ(q)` on a uniform grid over `q_x/π, q_y/π ∈ [-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureFactorGrid {
    pub resolution: usize,
    /// Grid coordinates in units of π.
    pub axis: Vec<f64>,
    /// `values[iy * resolution + ix][3α + β]`.
    pub values: Vec<[C64; 9]>,
    pub cross_section: Vec<f64>,
}

impl StructureFactorGrid {
    pub fn index(&self, ix: usize, iy: usize) -> usize {
        iy * self.resolution + ix
    }

    pub fn q(&self, ix: usize, iy: usize) -> [f64; 2] {
        [self.axis[ix], self.axis[iy]]
    }

    pub fn component(&self, alpha: Axis, beta: Axis) -> Vec<C64> {
        let c = 3 * alpha as usize + beta as usize;
        self.values.iter().map(|v| v[c]).collect()
    }

    /// Writes `qx_over_pi,qy_over_pi`, the real parts of all nine
    /// components, then `cross_section`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let names = ["x", "y", "z"];
        let mut header = vec!["qx_over_pi".to_string(), "qy_over_pi".to_string()];
        for a in names {
            for b in names {
                header.push(format!("Re(S_{a}{b})"));
            }
        }
        header.push("cross_section".into());
        out.write_record(&header).map_err(csv_err)?;
        for iy in 0..self.resolution {
            for ix in 0..self.resolution {
                let i = self.index(ix, iy);
                let mut row = vec![self.axis[ix], self.axis[iy]];
                row.extend(self.values[i].iter().map(|c| c.re));
                row.push(self.cross_section.get(i).copied().unwrap_or(f64::NAN));
                out.serialize(row).map_err(csv_err)?;
            }
        }
        out.flush()?;
        Ok(())
    }
}

/// Symmetrized equal-time correlator `(⟨S_α^r S_β^r'⟩ + ⟨S_β^r' S_α^r⟩)/2`,
/// indexed `[r][r'][3α + β]`. Operators on distinct sites commute, so only the
/// on-site terms change: they become `δ_αβ / 4`.
pub fn spin_correlations(states: &[StateVector], lattice: &SpinLattice) -> Result<Vec<Vec<[f64; 9]>>> {
    check_states(states, lattice)?;
    let n = lattice.n_sites();
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|r| (r + 1..n).map(move |s| (r, s))).collect();
    let values: Vec<[f64; 9]> = pairs
        .par_iter()
        .map(|&(r, s)| {
            let mut c = [0.0; 9];
            for (a, ax) in Axis::ALL.into_iter().enumerate() {
                for (b, bx) in Axis::ALL.into_iter().enumerate() {
                    let (x1, z1) = ax.masks(r);
                    let (x2, z2) = bx.masks(s);
                    c[3 * a + b] =
                        0.25 * mean_over(states, |st| pauli_expectation(st.amplitudes(), x1 | x2, z1 | z2).re);
                }
            }
            c
        })
        .collect();
    let mut corr = vec![vec![[0.0; 9]; n]; n];
    for r in 0..n {
        corr[r][r] = [0.25, 0.0, 0.0, 0.0, 0.25, 0.0, 0.0, 0.0, 0.25];
    }
    for (&(r, s), c) in pairs.iter().zip(values) {
        corr[r][s] = c;
        for a in 0..3 {
            for b in 0..3 {
                corr[s][r][3 * b + a] = c[3 * a + b];
            }
        }
    }
    Ok(corr)
}

pub fn grid_axis(resolution: usize) -> Vec<f64> {
    (0..resolution)
        .map(|i| -1.0 + 2.0 * i as f64 / (resolution - 1) as f64)
        .collect()
}

/// `S_αβ(q) = Σ_{r,r'} e^{i q·(r' − r)} ⟨S_α^r S_β^r'⟩` plus the cross-section.
pub fn structure_factor(state: &StateVector, lattice: &SpinLattice, resolution: usize) -> Result<StructureFactorGrid> {
    structure_factor_mixture(std::slice::from_ref(state), lattice, resolution)
}

pub fn structure_factor_mixture(
    states: &[StateVector],
    lattice: &SpinLattice,
    resolution: usize,
) -> Result<StructureFactorGrid> {
    if resolution < 8 {
        return Err(contract(format!("grid resolution {resolution} below 8")));
    }
    let corr = spin_correlations(states, lattice)?;
    Ok(structure_factor_from_correlations(&corr, lattice, resolution))
}

pub fn structure_factor_from_correlations(
    corr: &[Vec<[f64; 9]>],
    lattice: &SpinLattice,
    resolution: usize,
) -> StructureFactorGrid {
    let axis = grid_axis(resolution);
    let pos = lattice.positions();
    let n = pos.len();
    let pi = std::f64::consts::PI;
    let values: Vec<[C64; 9]> = (0..resolution * resolution)
        .into_par_iter()
        .map(|idx| {
            let (qx, qy) = (pi * axis[idx % resolution], pi * axis[idx / resolution]);
            let phase: Vec<C64> = pos.iter().map(|p| C64::from_polar(1.0, qx * p[0] + qy * p[1])).collect();
            let mut acc = [ZERO; 9];
            for r in 0..n {
                for s in 0..n {
                    let e = phase[s] * phase[r].conj();
                    for (a, c) in acc.iter_mut().zip(&corr[r][s]) {
                        *a += e * c;
                    }
                }
            }
            acc
        })
        .collect();
    let mut grid = StructureFactorGrid {
        resolution,
        axis,
        values,
        cross_section: Vec::new(),
    };
    grid.cross_section = neutron_cross_section(&grid);
    grid
}

/// `dσ/dΩ ∝ Σ_αβ (δ_αβ − q̂_α q̂_β) S_αβ(q)` with `q_z = 0`, clamped to be
/// non-negative and scaled to a peak of 1.
pub fn neutron_cross_section(grid: &StructureFactorGrid) -> Vec<f64> {
    let r = grid.resolution;
    let mut out: Vec<f64> = (0..r * r)
        .map(|idx| {
            let [qx, qy] = grid.q(idx % r, idx / r);
            let qn = (qx * qx + qy * qy).sqrt();
            let qhat = if qn < 1e-12 { [0.0; 3] } else { [qx / qn, qy / qn, 0.0] };
            let s = &grid.values[idx];
            let mut total = 0.0;
            for a in 0..3 {
                for b in 0..3 {
                    let delta = if a == b { 1.0 } else { 0.0 };
                    total += (delta - qhat[a] * qhat[b]) * s[3 * a + b].re;
                }
            }
            total.max(0.0)
        })
        .collect();
    let peak = out.iter().cloned().fold(0.0, f64::max);
    if peak > 0.0 {
        out.iter_mut().for_each(|v| *v /= peak);
    }
    out
}

/// Named subsystems for entanglement entropy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionPreset {
    /// The central spin against the rest.
    #[default]
    CentralSpin,
    /// Sites up to and including the centre against the remainder.
    HalfSplit,
}

impl PartitionPreset {
    pub fn sites(self, lattice: &SpinLattice) -> Vec<usize> {
        let c = lattice.center_index();
        match self {
            PartitionPreset::CentralSpin => vec![c],
            PartitionPreset::HalfSplit => (0..=c).collect(),
        }
    }
}

fn subsystem_layout(subsystem: &[usize], n: usize) -> Result<(Vec<usize>, Vec<usize>)> {
    let mut a: Vec<usize> = subsystem.to_vec();
    a.sort_unstable();
    a.dedup();
    if a.len() != subsystem.len() {
        return Err(contract("subsystem lists a site twice"));
    }
    if let Some(&bad) = a.iter().find(|&&s| s >= n) {
        return Err(SkyrError::IndexOutOfRange {
            what: "subsystem site",
            index: bad,
            len: n,
        });
    }
    if a.is_empty() || a.len() == n {
        return Err(contract("subsystem must be a nonempty proper subset"));
    }
    let rest = (0..n).filter(|s| !a.contains(s)).collect();
    Ok((a, rest))
}

/// Scatter `bits` (indexed by position in `sites`) into a basis index.
fn deposit(bits: usize, sites: &[usize]) -> usize {
    sites
        .iter()
        .enumerate()
        .fold(0, |acc, (p, &s)| acc | ((bits >> p) & 1) << s)
}

/// Amplitudes reshaped to `M[a][b]` with `a` over `sites` and `b` over the rest.
fn bipartite_matrix(state: &StateVector, a: &[usize], b: &[usize]) -> DMatrix<C64> {
    let amps = state.amplitudes();
    let da = 1usize << a.len();
    let db = 1usize << b.len();
    let a_idx: Vec<usize> = (0..da).map(|x| deposit(x, a)).collect();
    let b_idx: Vec<usize> = (0..db).map(|y| deposit(y, b)).collect();
    DMatrix::from_fn(da, db, |i, j| amps[a_idx[i] | b_idx[j]])
}

/// `ρ_A` of the equal-weight mixture of `states`.
pub fn reduced_density_matrix(states: &[StateVector], subsystem: &[usize]) -> Result<DMatrix<C64>> {
    let n = states.first().ok_or_else(|| contract("empty state ensemble"))?.n_sites();
    let (a, b) = subsystem_layout(subsystem, n)?;
    let mut rho = DMatrix::<C64>::zeros(1 << a.len(), 1 << a.len());
    for st in states {
        st.check_normalized(1e-9)?;
        if st.n_sites() != n {
            return Err(SkyrError::DimensionMismatch {
                expected: n,
                found: st.n_sites(),
            });
        }
        let m = bipartite_matrix(st, &a, &b);
        rho += &m * m.adjoint();
    }
    rho /= C64::new(states.len() as f64, 0.0);
    Ok(rho)
}

/// `−Tr ρ ln ρ` of a Hermitian density matrix.
pub fn von_neumann_entropy(rho: &DMatrix<C64>) -> f64 {
    let eig = nalgebra::SymmetricEigen::new(rho.clone());
    eig.eigenvalues
        .iter()
        .filter(|&&p| p > 1e-15)
        .map(|&p| -p * p.ln())
        .sum()
}

/// `S_ent = −Tr[ρ_A ln ρ_A] / |A|`.
pub fn entanglement_entropy_density(state: &StateVector, subsystem: &[usize]) -> Result<f64> {
    let n = state.n_sites();
    let (a, b) = subsystem_layout(subsystem, n)?;
    // for a pure state the smaller side has the same spectrum and is cheaper
    let side: &[usize] = if a.len() <= b.len() { &a } else { &b };
    let rho = reduced_density_matrix(std::slice::from_ref(state), side)?;
    Ok(von_neumann_entropy(&rho) / a.len() as f64)
}

/// Entropy density of `ρ_A` taken from the mixture of `states`.
pub fn entanglement_entropy_mixture(states: &[StateVector], subsystem: &[usize]) -> Result<f64> {
    if states.len() == 1 {
        return entanglement_entropy_density(&states[0], subsystem);
    }
    let rho = reduced_density_matrix(states, subsystem)?;
    Ok(von_neumann_entropy(&rho) / subsystem.len() as f64)
}

/// Per-site energy: own Zeeman and anisotropy terms plus half of every bond
/// touching the site. Sums to `⟨H⟩`.
pub fn onsite_energy_density(state: &StateVector, lattice: &SpinLattice, params: &CouplingParams) -> Result<Vec<f64>> {
    onsite_energy_mixture(std::slice::from_ref(state), lattice, params)
}

pub fn onsite_energy_mixture(states: &[StateVector], lattice: &SpinLattice, params: &CouplingParams) -> Result<Vec<f64>> {
    check_states(states, lattice)?;
    let eval = |terms: Vec<crate::operators::PauliTerm>| -> f64 {
        mean_over(states, |st| {
            terms
                .iter()
                .map(|t| (t.coeff * pauli_expectation(st.amplitudes(), t.x, t.z)).re)
                .sum()
        })
    };
    let mut e: Vec<f64> = (0..lattice.n_sites()).map(|i| eval(site_terms(i, params))).collect();
    for b in lattice.bonds() {
        let v = eval(bond_terms(b.i, b.j, b.dmi, params));
        e[b.i] += 0.5 * v;
        e[b.j] += 0.5 * v;
    }
    Ok(e)
}

/// Smallest radius at which the angle-averaged, linearly interpolated
/// `⟨S_z⟩(r)` crosses zero, measured from the lattice centre.
pub fn skyrmion_radius(field: &SpinField, lattice: &SpinLattice) -> Result<Option<f64>> {
    if lattice.boundary() != Boundary::Open {
        return Err(contract("skyrmion radius is defined on open lattices"));
    }
    if field.len() != lattice.n_sites() {
        return Err(SkyrError::DimensionMismatch {
            expected: lattice.n_sites(),
            found: field.len(),
        });
    }
    let c = lattice.positions()[lattice.center_index()];
    let mut samples: Vec<(f64, f64)> = lattice
        .positions()
        .iter()
        .zip(&field.spins)
        .map(|(p, s)| (((p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)).sqrt(), s[2]))
        .collect();
    samples.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut bins: Vec<(f64, f64, usize)> = Vec::new();
    for (r, sz) in samples {
        match bins.last_mut() {
            Some(b) if (r - b.0).abs() < 1e-6 => {
                b.1 += sz;
                b.2 += 1;
            }
            _ => bins.push((r, sz, 1)),
        }
    }
    let profile: Vec<(f64, f64)> = bins.into_iter().map(|(r, s, k)| (r, s / k as f64)).collect();
    if profile[0].1 == 0.0 {
        return Ok(Some(profile[0].0));
    }
    for w in profile.windows(2) {
        let ((r0, s0), (r1, s1)) = (w[0], w[1]);
        if s1 == 0.0 {
            return Ok(Some(r1));
        }
        if s0.signum() != s1.signum() {
            return Ok(Some(r0 + (r1 - r0) * s0 / (s0 - s1)));
        }
    }
    Ok(None)
}
