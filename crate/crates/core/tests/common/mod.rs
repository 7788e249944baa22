//! Brute-force references built from explicit Kronecker products.

#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use skyrlab_core::lattice::SpinLattice;
use skyrlab_core::operators::{CouplingParams, StateVector, C64};

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

/// Spin-1/2 matrices `σ/2` for x, y, z.
pub fn spin_matrices() -> [DMatrix<C64>; 3] {
    let h = 0.5;
    [
        DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(h, 0.0), c(h, 0.0), c(0.0, 0.0)]),
        DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, -h), c(0.0, h), c(0.0, 0.0)]),
        DMatrix::from_row_slice(2, 2, &[c(h, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-h, 0.0)]),
    ]
}

/// `I ⊗ … ⊗ m ⊗ … ⊗ I` with site 0 as the least significant factor.
pub fn embed(m: &DMatrix<C64>, site: usize, n: usize) -> DMatrix<C64> {
    let id = DMatrix::<C64>::identity(2, 2);
    let mut out = DMatrix::<C64>::identity(1, 1);
    for s in (0..n).rev() {
        out = out.kronecker(if s == site { m } else { &id });
    }
    out
}

/// Two-site product `a_i b_j` as a single Kronecker chain.
pub fn embed_pair(a: &DMatrix<C64>, i: usize, b: &DMatrix<C64>, j: usize, n: usize) -> DMatrix<C64> {
    let id = DMatrix::<C64>::identity(2, 2);
    let mut out = DMatrix::<C64>::identity(1, 1);
    for s in (0..n).rev() {
        let f = if s == i {
            a
        } else if s == j {
            b
        } else {
            &id
        };
        out = out.kronecker(f);
    }
    out
}

pub fn site_ops(n: usize) -> Vec<[DMatrix<C64>; 3]> {
    let s = spin_matrices();
    (0..n)
        .map(|i| [embed(&s[0], i, n), embed(&s[1], i, n), embed(&s[2], i, n)])
        .collect()
}

/// Dense Hamiltonian assembled term by term from the lattice bonds.
pub fn dense_hamiltonian(lattice: &SpinLattice, p: &CouplingParams) -> DMatrix<C64> {
    let n = lattice.n_sites();
    let ops = site_ops(n);
    let sm = spin_matrices();
    let pair = |a: usize, i: usize, b: usize, j: usize| embed_pair(&sm[a], i, &sm[b], j, n);
    let dim = 1 << n;
    let mut h = DMatrix::<C64>::zeros(dim, dim);
    let r = |x: f64| c(x, 0.0);
    for bd in lattice.bonds() {
        let (i, j) = (bd.i, bd.j);
        for a in 0..3 {
            h += pair(a, i, a, j) * r(p.j);
        }
        // d · (S_i × S_j), component a = S_i^b S_j^c − S_i^c S_j^b
        for (a, b, cc) in [(0, 1, 2), (1, 2, 0), (2, 0, 1)] {
            h += (pair(b, i, cc, j) - pair(cc, i, b, j)) * r(p.d * bd.dmi[a]);
        }
        if matches!(p.anisotropy_mode, skyrlab_core::operators::AnisotropyMode::Bond) {
            h += pair(2, i, 2, j) * r(p.k);
        }
    }
    for s in &ops {
        for a in 0..3 {
            h -= &s[a] * r(p.b[a]);
        }
        if matches!(p.anisotropy_mode, skyrlab_core::operators::AnisotropyMode::Onsite) {
            // (S^z)^2 = 1/4 for spin-1/2
            h += DMatrix::<C64>::identity(dim, dim) * r(0.25 * p.k);
        }
    }
    h
}

pub fn to_dvec(psi: &StateVector) -> DVector<C64> {
    DVector::from_column_slice(psi.amplitudes())
}

pub fn sorted_eigenvalues(h: &DMatrix<C64>) -> Vec<f64> {
    let mut v: Vec<f64> = h.clone().symmetric_eigen().eigenvalues.iter().copied().collect();
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

/// `exp(-i H t)` through the Hermitian eigendecomposition.
pub fn propagator(h: &DMatrix<C64>, t: f64) -> DMatrix<C64> {
    let eig = h.clone().symmetric_eigen();
    let phases = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| C64::from_polar(1.0, -l * t)));
    &eig.eigenvectors * phases * eig.eigenvectors.adjoint()
}

/// `|⟨a|b⟩|` for normalized vectors.
pub fn overlap(a: &DVector<C64>, b: &DVector<C64>) -> f64 {
    a.dotc(b).norm()
}
