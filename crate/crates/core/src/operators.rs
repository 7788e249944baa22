//! Many-body states and matrix-free operators on the `2^n` spin Hilbert space.
//!
//! Basis convention: site `i` occupies bit `i` of the basis index and a bit
//! value of 0 is spin up along `+z`. Spin operators are `S = σ/2` with `ħ = 1`.
//!
//! Operators are stored as sums of Pauli strings. A string is a pair of bit
//! masks `(x, z)` standing for the Hermitian product `i^{|x & z|} X^x Z^z`, so a
//! site with both bits set carries a `Y`. Acting on a basis ket,
//! `P |k⟩ = i^{|x & z|} (-1)^{|k & z|} |k ^ x⟩`, which keeps application to a
//! popcount and a table lookup per term.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result, SkyrError};
use crate::lattice::SpinLattice;

pub type C64 = Complex64;

pub(crate) const ZERO: C64 = C64::new(0.0, 0.0);
pub(crate) const ONE: C64 = C64::new(1.0, 0.0);
const I: C64 = C64::new(0.0, 1.0);

/// Below this dimension loops run on the calling thread.
pub(crate) const PAR_THRESHOLD: usize = 1 << 12;
const CHUNK: usize = 1 << 10;

/// Largest lattice the dense helpers will materialize.
pub const MAX_SITES: usize = 30;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

    pub(crate) fn masks(self, site: usize) -> (u64, u64) {
        let b = 1u64 << site;
        match self {
            Axis::X => (b, 0),
            Axis::Y => (b, b),
            Axis::Z => (0, b),
        }
    }
}

/// How the `K` coefficient enters the Hamiltonian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnisotropyMode {
    /// `K Σ_i (S_i^z)^2`, a constant `K n / 4` for spin-1/2.
    #[default]
    Onsite,
    /// `K Σ_<ij> S_i^z S_j^z` on every bond.
    Bond,
}

/// Couplings in units of the DMI strength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CouplingParams {
    #[serde(rename = "J")]
    pub j: f64,
    #[serde(rename = "D", default = "unit")]
    pub d: f64,
    #[serde(rename = "B", default)]
    pub b: [f64; 3],
    #[serde(rename = "K", default)]
    pub k: f64,
    #[serde(default)]
    pub anisotropy_mode: AnisotropyMode,
}

fn unit() -> f64 {
    1.0
}

impl Default for CouplingParams {
    fn default() -> Self {
        CouplingParams {
            j: 0.0,
            d: 1.0,
            b: [0.0; 3],
            k: 0.0,
            anisotropy_mode: AnisotropyMode::Onsite,
        }
    }
}

impl CouplingParams {
    pub fn new(j: f64, d: f64, b: [f64; 3], k: f64) -> Self {
        CouplingParams {
            j,
            d,
            b,
            k,
            anisotropy_mode: AnisotropyMode::Onsite,
        }
    }

    /// Field along `+z` only.
    pub fn with_bz(j: f64, bz: f64, k: f64) -> Self {
        Self::new(j, 1.0, [0.0, 0.0, bz], k)
    }

    pub fn anisotropy(mut self, mode: AnisotropyMode) -> Self {
        self.anisotropy_mode = mode;
        self
    }

    pub fn is_finite(&self) -> bool {
        self.j.is_finite()
            && self.d.is_finite()
            && self.k.is_finite()
            && self.b.iter().all(|x| x.is_finite())
    }
}

/// A state on `n_sites` spins with `2^n_sites` complex amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    n_sites: usize,
    amps: Vec<C64>,
}

impl StateVector {
    pub fn from_amplitudes(amps: Vec<C64>) -> Result<Self> {
        let dim = amps.len();
        if dim == 0 || !dim.is_power_of_two() {
            return Err(contract(format!("state length {dim} is not a power of two")));
        }
        Ok(StateVector {
            n_sites: dim.trailing_zeros() as usize,
            amps,
        })
    }

    pub fn zeros(n_sites: usize) -> Self {
        StateVector {
            n_sites,
            amps: vec![ZERO; 1 << n_sites],
        }
    }

    pub fn basis(n_sites: usize, index: usize) -> Result<Self> {
        let dim = 1usize << n_sites;
        if index >= dim {
            return Err(SkyrError::IndexOutOfRange {
                what: "basis",
                index,
                len: dim,
            });
        }
        let mut s = Self::zeros(n_sites);
        s.amps[index] = ONE;
        Ok(s)
    }

    /// Every spin along `+z`.
    pub fn all_up(n_sites: usize) -> Self {
        let mut s = Self::zeros(n_sites);
        s.amps[0] = ONE;
        s
    }

    /// Product state with every spin along the unit vector `dir`.
    pub fn product(n_sites: usize, dirs: &[[f64; 3]]) -> Result<Self> {
        if dirs.len() != n_sites {
            return Err(SkyrError::DimensionMismatch {
                expected: n_sites,
                found: dirs.len(),
            });
        }
        let spinors: Vec<[C64; 2]> = dirs.iter().map(|d| spinor(*d)).collect();
        let amps = (0..1usize << n_sites)
            .map(|k| {
                spinors
                    .iter()
                    .enumerate()
                    .fold(ONE, |acc, (i, s)| acc * s[(k >> i) & 1])
            })
            .collect();
        Ok(StateVector { n_sites, amps })
    }

    /// Normalized state with uniformly random real and imaginary parts.
    pub fn random<R: Rng + ?Sized>(n_sites: usize, rng: &mut R) -> Self {
        let amps = (0..1usize << n_sites)
            .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let mut s = StateVector { n_sites, amps };
        s.normalize();
        s
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    pub fn amplitudes_mut(&mut self) -> &mut [C64] {
        &mut self.amps
    }

    pub fn into_amplitudes(self) -> Vec<C64> {
        self.amps
    }

    pub fn norm(&self) -> f64 {
        norm_sqr(&self.amps).sqrt()
    }

    /// Rescales to unit norm and returns the previous norm.
    pub fn normalize(&mut self) -> f64 {
        let n = self.norm();
        if n > 0.0 {
            scale(&mut self.amps, C64::new(1.0 / n, 0.0));
        }
        n
    }

    /// `⟨self|other⟩`.
    pub fn inner(&self, other: &StateVector) -> C64 {
        dot(&self.amps, &other.amps)
    }

    /// `self += a * other`.
    pub fn axpy(&mut self, a: C64, other: &StateVector) {
        axpy(&mut self.amps, a, &other.amps);
    }

    pub fn check_normalized(&self, tol: f64) -> Result<()> {
        let n = self.norm();
        if (n - 1.0).abs() > tol {
            return Err(contract(format!("state norm {n} is not 1")));
        }
        Ok(())
    }

    /// Writes the dimension as a little-endian `u64`, then every amplitude as
    /// two little-endian `f64` (real, imaginary).
    pub fn write_checkpoint<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(&(self.amps.len() as u64).to_le_bytes())?;
        let mut buf = Vec::with_capacity(16 * self.amps.len());
        for a in &self.amps {
            buf.extend_from_slice(&a.re.to_le_bytes());
            buf.extend_from_slice(&a.im.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<Self> {
        let mut head = [0u8; 8];
        r.read_exact(&mut head)?;
        let dim = u64::from_le_bytes(head) as usize;
        if dim == 0 || !dim.is_power_of_two() || dim > 1 << MAX_SITES {
            return Err(contract(format!("checkpoint dimension {dim} is invalid")));
        }
        let mut buf = vec![0u8; 16 * dim];
        r.read_exact(&mut buf)?;
        let amps = buf
            .chunks_exact(16)
            .map(|c| {
                let re = f64::from_le_bytes(c[..8].try_into().unwrap());
                let im = f64::from_le_bytes(c[8..].try_into().unwrap());
                C64::new(re, im)
            })
            .collect();
        Self::from_amplitudes(amps)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_checkpoint(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_checkpoint(&mut BufReader::new(File::open(path)?))
    }
}

/// Spin-1/2 spinor along a Bloch direction, up component first.
fn spinor(d: [f64; 3]) -> [C64; 2] {
    let n = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
    let (x, y, z) = if n > 0.0 {
        (d[0] / n, d[1] / n, d[2] / n)
    } else {
        (0.0, 0.0, 1.0)
    };
    let theta = z.clamp(-1.0, 1.0).acos();
    let phi = y.atan2(x);
    [
        C64::new((theta / 2.0).cos(), 0.0),
        C64::from_polar((theta / 2.0).sin(), phi),
    ]
}

pub(crate) fn dot(a: &[C64], b: &[C64]) -> C64 {
    if a.len() < PAR_THRESHOLD {
        return a.iter().zip(b).map(|(x, y)| x.conj() * y).sum();
    }
    // chunked so the summation order does not depend on the thread count
    a.par_chunks(CHUNK)
        .zip(b.par_chunks(CHUNK))
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| p.conj() * q).sum::<C64>())
        .collect::<Vec<_>>()
        .into_iter()
        .sum()
}

pub(crate) fn norm_sqr(a: &[C64]) -> f64 {
    if a.len() < PAR_THRESHOLD {
        return a.iter().map(|x| x.norm_sqr()).sum();
    }
    a.par_chunks(CHUNK)
        .map(|x| x.iter().map(|p| p.norm_sqr()).sum::<f64>())
        .collect::<Vec<_>>()
        .into_iter()
        .sum()
}

pub(crate) fn axpy(y: &mut [C64], a: C64, x: &[C64]) {
    if y.len() < PAR_THRESHOLD {
        y.iter_mut().zip(x).for_each(|(p, q)| *p += a * q);
    } else {
        y.par_chunks_mut(CHUNK)
            .zip(x.par_chunks(CHUNK))
            .for_each(|(p, q)| p.iter_mut().zip(q).for_each(|(u, v)| *u += a * v));
    }
}

pub(crate) fn scale(y: &mut [C64], a: C64) {
    if y.len() < PAR_THRESHOLD {
        y.iter_mut().for_each(|p| *p *= a);
    } else {
        y.par_chunks_mut(CHUNK)
            .for_each(|p| p.iter_mut().for_each(|u| *u *= a));
    }
}

/// A linear map on the spin Hilbert space, applied without materializing it.
pub trait LinearOperator: Send + Sync {
    fn dim(&self) -> usize;

    fn is_hermitian(&self) -> bool;

    /// Overwrites `output` with `A · input`. Slices must both have length `dim`.
    fn apply_into(&self, input: &[C64], output: &mut [C64]);
}

/// `op · state` as a fresh vector.
pub fn apply(op: &dyn LinearOperator, state: &StateVector) -> Result<StateVector> {
    if state.dim() != op.dim() {
        return Err(SkyrError::DimensionMismatch {
            expected: op.dim(),
            found: state.dim(),
        });
    }
    let mut out = vec![ZERO; state.dim()];
    op.apply_into(state.amplitudes(), &mut out);
    StateVector::from_amplitudes(out)
}

/// `⟨ψ|A|ψ⟩`.
pub fn expectation(op: &dyn LinearOperator, state: &StateVector) -> Result<C64> {
    let a = apply(op, state)?;
    Ok(state.inner(&a))
}

/// Dense matrix of `op`, built column by column from basis vectors.
pub fn dense_matrix(op: &dyn LinearOperator) -> nalgebra::DMatrix<C64> {
    let dim = op.dim();
    let mut m = nalgebra::DMatrix::<C64>::zeros(dim, dim);
    let mut e = vec![ZERO; dim];
    let mut col = vec![ZERO; dim];
    for c in 0..dim {
        e[c] = ONE;
        op.apply_into(&e, &mut col);
        e[c] = ZERO;
        m.column_mut(c).copy_from_slice(&col);
    }
    m
}

/// Operator acting by a diagonal in the computational basis.
#[derive(Debug, Clone)]
pub struct DiagonalOperator {
    diag: Vec<C64>,
}

impl DiagonalOperator {
    pub fn new(diag: Vec<C64>) -> Self {
        DiagonalOperator { diag }
    }

    pub fn real(diag: &[f64]) -> Self {
        DiagonalOperator {
            diag: diag.iter().map(|&d| C64::new(d, 0.0)).collect(),
        }
    }
}

impl LinearOperator for DiagonalOperator {
    fn dim(&self) -> usize {
        self.diag.len()
    }

    fn is_hermitian(&self) -> bool {
        self.diag.iter().all(|d| d.im == 0.0)
    }

    fn apply_into(&self, input: &[C64], output: &mut [C64]) {
        for ((o, i), d) in output.iter_mut().zip(input).zip(&self.diag) {
            *o = d * i;
        }
    }
}

/// One Pauli string `i^{|x&z|} X^x Z^z` with its coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PauliTerm {
    pub x: u64,
    pub z: u64,
    pub coeff: C64,
}

impl PauliTerm {
    /// Product of single-site Paulis on distinct sites.
    pub fn new(coeff: C64, factors: &[(usize, Axis)]) -> Result<Self> {
        let (mut x, mut z) = (0u64, 0u64);
        for &(site, axis) in factors {
            if site >= MAX_SITES {
                return Err(SkyrError::IndexOutOfRange {
                    what: "site",
                    index: site,
                    len: MAX_SITES,
                });
            }
            let bit = 1u64 << site;
            if (x | z) & bit != 0 {
                return Err(contract(format!("site {site} repeated in Pauli string")));
            }
            let (ax, az) = axis.masks(site);
            x |= ax;
            z |= az;
        }
        Ok(PauliTerm { x, z, coeff })
    }

    /// Phase `i^{|x&z|} (-1)^{|k&z|}` for the basis ket `k`.
    #[inline]
    pub fn phase(x: u64, z: u64, k: u64) -> C64 {
        let base = match (x & z).count_ones() % 4 {
            0 => ONE,
            1 => I,
            2 => -ONE,
            _ => -I,
        };
        if (k & z).count_ones() % 2 == 1 {
            -base
        } else {
            base
        }
    }
}

/// `⟨ψ|P|ψ⟩` for a single Pauli string with unit coefficient.
pub fn pauli_expectation(state: &[C64], x: u64, z: u64) -> C64 {
    let y = (x & z).count_ones() % 4;
    let base = [ONE, I, -ONE, -I][y as usize];
    let body = |range: std::ops::Range<usize>| -> C64 {
        let mut acc = ZERO;
        for l in range {
            let k = l ^ x as usize;
            let t = state[l].conj() * state[k];
            if (k as u64 & z).count_ones() % 2 == 1 {
                acc -= t;
            } else {
                acc += t;
            }
        }
        acc
    };
    let dim = state.len();
    let sum = if dim < PAR_THRESHOLD {
        body(0..dim)
    } else {
        (0..dim.div_ceil(CHUNK))
            .into_par_iter()
            .map(|c| body(c * CHUNK..((c + 1) * CHUNK).min(dim)))
            .collect::<Vec<_>>()
            .into_iter()
            .sum()
    };
    base * sum
}

#[derive(Debug, Clone)]
struct FlipGroup {
    x: u64,
    /// `(z, coefficient with the i^{|x&z|} factor folded in)`
    terms: Vec<(u64, C64)>,
    /// Sites any `z` touches; the summed coefficient depends only on these bits.
    support: Vec<u32>,
    table: Vec<C64>,
}

/// Widest `z` support that still gets a lookup table.
const TABLE_BITS: usize = 10;

impl FlipGroup {
    fn build_table(&mut self) {
        let zs = self.terms.iter().fold(0u64, |acc, &(z, _)| acc | z);
        self.support = (0..64).filter(|b| zs >> b & 1 == 1).collect();
        if self.support.len() > TABLE_BITS {
            self.table.clear();
            return;
        }
        self.table = (0..1u64 << self.support.len())
            .map(|pattern| {
                let k = self
                    .support
                    .iter()
                    .enumerate()
                    .fold(0u64, |acc, (p, &b)| acc | ((pattern >> p) & 1) << b);
                self.terms
                    .iter()
                    .map(|&(z, c)| if (k & z).count_ones() & 1 == 1 { -c } else { c })
                    .sum()
            })
            .collect();
    }

    #[inline]
    fn coeff(&self, k: usize) -> C64 {
        self.terms
            .iter()
            .map(|&(z, c)| if (k as u64 & z).count_ones() & 1 == 1 { -c } else { c })
            .sum()
    }
}

/// Hermitian-or-not sum of Pauli strings on `n_sites` spins.
#[derive(Debug, Clone)]
pub struct SparseOperator {
    n_sites: usize,
    terms: Vec<PauliTerm>,
    diagonal: Vec<C64>,
    groups: Vec<FlipGroup>,
    hermitian: bool,
}

impl SparseOperator {
    pub fn from_terms(n_sites: usize, terms: Vec<PauliTerm>) -> Result<Self> {
        if n_sites > MAX_SITES {
            return Err(contract(format!("{n_sites} sites exceed the limit {MAX_SITES}")));
        }
        let mask = (1u64 << n_sites) - 1;
        if let Some(t) = terms.iter().find(|t| (t.x | t.z) & !mask != 0) {
            return Err(contract(format!(
                "Pauli string ({:#x}, {:#x}) acts outside {n_sites} sites",
                t.x, t.z
            )));
        }
        let mut merged: Vec<PauliTerm> = Vec::new();
        for t in terms {
            match merged.iter_mut().find(|m| m.x == t.x && m.z == t.z) {
                Some(m) => m.coeff += t.coeff,
                None => merged.push(t),
            }
        }
        merged.retain(|t| t.coeff != ZERO);
        let hermitian = merged.iter().all(|t| t.coeff.im.abs() <= 1e-14 * t.coeff.norm().max(1.0));

        let dim = 1usize << n_sites;
        let mut diagonal = vec![ZERO; dim];
        let mut groups: Vec<FlipGroup> = Vec::new();
        for t in &merged {
            if t.x == 0 {
                for (k, d) in diagonal.iter_mut().enumerate() {
                    *d += t.coeff * PauliTerm::phase(0, t.z, k as u64);
                }
                continue;
            }
            let folded = t.coeff * PauliTerm::phase(t.x, t.z, 0);
            match groups.iter_mut().find(|g| g.x == t.x) {
                Some(g) => g.terms.push((t.z, folded)),
                None => groups.push(FlipGroup {
                    x: t.x,
                    terms: vec![(t.z, folded)],
                    support: Vec::new(),
                    table: Vec::new(),
                }),
            }
        }
        groups.iter_mut().for_each(FlipGroup::build_table);
        Ok(SparseOperator {
            n_sites,
            terms: merged,
            diagonal,
            groups,
            hermitian,
        })
    }

    pub fn identity(n_sites: usize) -> Self {
        Self::from_terms(n_sites, vec![PauliTerm { x: 0, z: 0, coeff: ONE }])
            .expect("identity is valid")
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn terms(&self) -> &[PauliTerm] {
        &self.terms
    }

    /// Upper bound on the spectral norm: `Σ |c|` over the Pauli strings.
    pub fn norm_bound(&self) -> f64 {
        self.terms.iter().map(|t| t.coeff.norm()).sum()
    }

    /// `self + a · other` on the same number of sites.
    pub fn plus(&self, a: C64, other: &SparseOperator) -> Result<Self> {
        if self.n_sites != other.n_sites {
            return Err(SkyrError::DimensionMismatch {
                expected: self.n_sites,
                found: other.n_sites,
            });
        }
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().map(|t| PauliTerm {
            coeff: a * t.coeff,
            ..*t
        }));
        Self::from_terms(self.n_sites, terms)
    }

    fn fill(&self, input: &[C64], out: &mut [C64], offset: usize) {
        let n = out.len();
        for (o, (d, i)) in out
            .iter_mut()
            .zip(self.diagonal[offset..offset + n].iter().zip(&input[offset..offset + n]))
        {
            *o = d * i;
        }
        for g in &self.groups {
            let x = g.x as usize;
            match g.support.as_slice() {
                [] => {
                    let c = g.table[0];
                    for (idx, o) in out.iter_mut().enumerate() {
                        *o += c * input[(offset + idx) ^ x];
                    }
                }
                &[b] => {
                    let t = [g.table[0], g.table[1]];
                    for (idx, o) in out.iter_mut().enumerate() {
                        let k = (offset + idx) ^ x;
                        *o += t[(k >> b) & 1] * input[k];
                    }
                }
                &[b0, b1] => {
                    let t = [g.table[0], g.table[1], g.table[2], g.table[3]];
                    for (idx, o) in out.iter_mut().enumerate() {
                        let k = (offset + idx) ^ x;
                        *o += t[((k >> b0) & 1) | (((k >> b1) & 1) << 1)] * input[k];
                    }
                }
                bits if g.table.is_empty() => {
                    debug_assert!(bits.len() > TABLE_BITS);
                    for (idx, o) in out.iter_mut().enumerate() {
                        let k = (offset + idx) ^ x;
                        *o += g.coeff(k) * input[k];
                    }
                }
                bits => {
                    for (idx, o) in out.iter_mut().enumerate() {
                        let k = (offset + idx) ^ x;
                        let mut t = 0;
                        for (p, &b) in bits.iter().enumerate() {
                            t |= ((k >> b) & 1) << p;
                        }
                        *o += g.table[t] * input[k];
                    }
                }
            }
        }
    }
}

impl LinearOperator for SparseOperator {
    fn dim(&self) -> usize {
        1 << self.n_sites
    }

    fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    fn apply_into(&self, input: &[C64], output: &mut [C64]) {
        assert_eq!(input.len(), self.dim(), "input dimension");
        assert_eq!(output.len(), self.dim(), "output dimension");
        if output.len() < PAR_THRESHOLD {
            self.fill(input, output, 0);
        } else {
            output
                .par_chunks_mut(CHUNK)
                .enumerate()
                .for_each(|(c, out)| self.fill(input, out, c * CHUNK));
        }
    }
}

/// `S_axis` on one site, identity elsewhere.
pub fn site_spin_operator(n_sites: usize, site: usize, axis: Axis) -> Result<SparseOperator> {
    if site >= n_sites {
        return Err(SkyrError::IndexOutOfRange {
            what: "site",
            index: site,
            len: n_sites,
        });
    }
    let t = PauliTerm::new(C64::new(0.5, 0.0), &[(site, axis)])?;
    SparseOperator::from_terms(n_sites, vec![t])
}

/// Total `S_axis = Σ_i S_axis^i`.
pub fn total_spin_operator(n_sites: usize, axis: Axis) -> Result<SparseOperator> {
    let terms = (0..n_sites)
        .map(|s| PauliTerm::new(C64::new(0.5, 0.0), &[(s, axis)]))
        .collect::<Result<Vec<_>>>()?;
    SparseOperator::from_terms(n_sites, terms)
}

fn re(x: f64) -> C64 {
    C64::new(x, 0.0)
}

/// Pauli terms of one bond: exchange, DMI and (in bond mode) anisotropy.
pub(crate) fn bond_terms(i: usize, j: usize, dmi: [f64; 3], p: &CouplingParams) -> Vec<PauliTerm> {
    use Axis::*;
    let mut out = Vec::with_capacity(9);
    let mut push = |c: f64, a: Axis, b: Axis| {
        if c != 0.0 {
            out.push(PauliTerm::new(re(c), &[(i, a), (j, b)]).expect("distinct bond sites"));
        }
    };
    let jq = p.j / 4.0;
    push(jq, X, X);
    push(jq, Y, Y);
    push(jq, Z, Z);
    let dq = p.d / 4.0;
    // d · (S_i × S_j)
    push(dq * dmi[0], Y, Z);
    push(-dq * dmi[0], Z, Y);
    push(dq * dmi[1], Z, X);
    push(-dq * dmi[1], X, Z);
    push(dq * dmi[2], X, Y);
    push(-dq * dmi[2], Y, X);
    if p.anisotropy_mode == AnisotropyMode::Bond {
        push(p.k / 4.0, Z, Z);
    }
    out
}

/// Pauli terms attached to a single site: Zeeman and on-site anisotropy.
pub(crate) fn site_terms(i: usize, p: &CouplingParams) -> Vec<PauliTerm> {
    let mut out = Vec::with_capacity(4);
    for (axis, b) in Axis::ALL.into_iter().zip(p.b) {
        if b != 0.0 {
            out.push(PauliTerm::new(re(-b / 2.0), &[(i, axis)]).expect("valid site"));
        }
    }
    if p.anisotropy_mode == AnisotropyMode::Onsite && p.k != 0.0 {
        out.push(PauliTerm {
            x: 0,
            z: 0,
            coeff: re(p.k / 4.0),
        });
    }
    out
}

/// `H = Σ J S_i·S_j + Σ D d̂_ij·(S_i × S_j) − Σ B·S_i + anisotropy`.
pub fn build_hamiltonian(lattice: &SpinLattice, params: &CouplingParams) -> Result<SparseOperator> {
    if !params.is_finite() {
        return Err(contract("coupling parameters must be finite"));
    }
    let mut terms = Vec::new();
    for b in lattice.bonds() {
        terms.extend(bond_terms(b.i, b.j, b.dmi, params));
    }
    for i in 0..lattice.n_sites() {
        terms.extend(site_terms(i, params));
    }
    SparseOperator::from_terms(lattice.n_sites(), terms)
}
