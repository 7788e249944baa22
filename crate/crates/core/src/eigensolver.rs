//! Lowest eigenpairs of Hermitian operators.
//!
//! [`lanczos_lowest`] runs thick-restart Lanczos with full (twice repeated)
//! Gram-Schmidt reorthogonalization. Converged pairs are locked and later runs
//! work in their orthogonal complement from fresh seeded start vectors. A
//! single Krylov sequence only ever sees one direction of an exactly
//! degenerate eigenspace, so the deflated runs are what recover the remaining
//! copies. Runs continue until one adds nothing below the current `k`-th level.
//!
//! [`dense_spectrum`] is the brute-force oracle for small spaces.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result, SkyrError};
use crate::operators::{axpy, norm_sqr, scale, LinearOperator, StateVector, C64, PAR_THRESHOLD, ZERO};

/// Largest dimension [`dense_spectrum`] accepts.
pub const DENSE_MAX_DIM: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LanczosOptions {
    /// Residual norm `‖H v − λ v‖` every returned pair must reach.
    pub tol: f64,
    /// Eigenvalues closer than this share a degeneracy group.
    pub tol_degeneracy: f64,
    pub max_krylov: usize,
    /// Restart cycles allowed per deflated run.
    pub max_restarts: usize,
    /// Upper bound on memory held by Krylov vectors, in bytes.
    pub memory_budget: usize,
}

impl Default for LanczosOptions {
    fn default() -> Self {
        LanczosOptions {
            tol: 1e-8,
            tol_degeneracy: 1e-6,
            max_krylov: 300,
            max_restarts: 2000,
            memory_budget: 1 << 30,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EigenResult {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: Vec<StateVector>,
    pub residuals: Vec<f64>,
    /// Index groups of pairs whose eigenvalues lie within `tol_degeneracy`.
    pub degeneracy_groups: Vec<Vec<usize>>,
}

impl EigenResult {
    pub fn ground_energy(&self) -> f64 {
        self.eigenvalues[0]
    }

    /// Size of the degeneracy group holding the lowest level.
    pub fn ground_degeneracy(&self) -> usize {
        self.degeneracy_groups.first().map_or(0, Vec::len)
    }

    /// Keeps only the lowest `k` pairs.
    pub fn truncated(mut self, k: usize, tol_degeneracy: f64) -> Self {
        self.eigenvalues.truncate(k);
        self.eigenvectors.truncate(k);
        self.residuals.truncate(k);
        self.degeneracy_groups = degeneracy_groups(&self.eigenvalues, tol_degeneracy);
        self
    }
}

/// Chains ascending eigenvalues into groups where neighbours differ by less
/// than `tol`.
pub fn degeneracy_groups(eigenvalues: &[f64], tol: f64) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = Vec::new();
    for (i, &e) in eigenvalues.iter().enumerate() {
        match groups.last_mut() {
            Some(g) if (e - eigenvalues[*g.last().unwrap()]).abs() < tol => g.push(i),
            _ => groups.push(vec![i]),
        }
    }
    groups
}

/// Full spectrum by dense Hermitian diagonalization.
pub fn dense_spectrum(op: &dyn LinearOperator) -> Result<EigenResult> {
    dense_spectrum_with(op, LanczosOptions::default().tol_degeneracy)
}

pub fn dense_spectrum_with(op: &dyn LinearOperator, tol_degeneracy: f64) -> Result<EigenResult> {
    let dim = op.dim();
    if dim > DENSE_MAX_DIM {
        return Err(SkyrError::TooLarge {
            dim,
            max: DENSE_MAX_DIM,
        });
    }
    if !op.is_hermitian() {
        return Err(contract("dense_spectrum needs a Hermitian operator"));
    }
    let m = crate::operators::dense_matrix(op);
    let eig = nalgebra::SymmetricEigen::new(m);
    let mut order: Vec<usize> = (0..dim).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eigenvalues: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let eigenvectors = order
        .iter()
        .map(|&i| StateVector::from_amplitudes(eig.eigenvectors.column(i).iter().copied().collect()))
        .collect::<Result<Vec<_>>>()?;
    let residuals = eigenvectors
        .iter()
        .zip(&eigenvalues)
        .map(|(v, &e)| residual(op, v.amplitudes(), e))
        .collect();
    Ok(EigenResult {
        degeneracy_groups: degeneracy_groups(&eigenvalues, tol_degeneracy),
        eigenvalues,
        eigenvectors,
        residuals,
    })
}

fn residual(op: &dyn LinearOperator, v: &[C64], lambda: f64) -> f64 {
    let mut w = vec![ZERO; v.len()];
    op.apply_into(v, &mut w);
    axpy(&mut w, C64::new(-lambda, 0.0), v);
    norm_sqr(&w).sqrt()
}

/// Dimension up to which [`lowest_eigenpairs`] diagonalizes densely.
pub const DENSE_PREFERRED_DIM: usize = 256;

/// Lowest `k` pairs, densely for small spaces and by Lanczos otherwise.
pub fn lowest_eigenpairs(op: &dyn LinearOperator, k: usize, seed: u64, opts: &LanczosOptions) -> Result<EigenResult> {
    if op.dim() <= DENSE_PREFERRED_DIM {
        if k == 0 || k > op.dim() {
            return Err(contract(format!("k = {k} outside 1..={}", op.dim())));
        }
        Ok(dense_spectrum_with(op, opts.tol_degeneracy)?.truncated(k, opts.tol_degeneracy))
    } else {
        lanczos_lowest_with(op, k, seed, opts)
    }
}

/// Lowest `k` eigenpairs with default options.
pub fn lanczos_lowest(op: &dyn LinearOperator, k: usize, tol: f64, seed: u64) -> Result<EigenResult> {
    let opts = LanczosOptions {
        tol,
        ..LanczosOptions::default()
    };
    lanczos_lowest_with(op, k, seed, &opts)
}

pub fn lanczos_lowest_with(
    op: &dyn LinearOperator,
    k: usize,
    seed: u64,
    opts: &LanczosOptions,
) -> Result<EigenResult> {
    if !op.is_hermitian() {
        return Err(contract("Lanczos needs a Hermitian operator"));
    }
    let dim = op.dim();
    if k == 0 || k > dim {
        return Err(contract(format!("k = {k} outside 1..={dim}")));
    }
    if !(opts.tol > 0.0) {
        return Err(contract("tolerance must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut locked: Vec<Vec<C64>> = Vec::new();
    let mut values: Vec<f64> = Vec::new();
    let mut resids: Vec<f64> = Vec::new();

    loop {
        let free = dim - locked.len();
        if free == 0 {
            break;
        }
        let want = k.min(free);
        let run = deflated_run(op, want, &locked, &mut rng, opts)?;
        // anything at or above the current k-th level adds nothing
        let ceiling = if values.len() >= k {
            let mut sorted = values.clone();
            sorted.sort_by(f64::total_cmp);
            Some(sorted[k - 1])
        } else {
            None
        };
        let mut added = 0;
        for (v, (e, r)) in run.vectors.into_iter().zip(run.values.into_iter().zip(run.residuals)) {
            let fresh = match ceiling {
                Some(c) => e < c - opts.tol_degeneracy.min(1e3 * opts.tol),
                None => true,
            };
            if fresh {
                locked.push(v);
                values.push(e);
                resids.push(r);
                added += 1;
            }
        }
        if values.len() >= k && added == 0 {
            break;
        }
    }

    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    order.truncate(k);
    let eigenvalues: Vec<f64> = order.iter().map(|&i| values[i]).collect();
    let residuals = order.iter().map(|&i| resids[i]).collect();
    let eigenvectors = order
        .iter()
        .map(|&i| StateVector::from_amplitudes(std::mem::take(&mut locked[i])))
        .collect::<Result<Vec<_>>>()?;
    Ok(EigenResult {
        degeneracy_groups: degeneracy_groups(&eigenvalues, opts.tol_degeneracy),
        eigenvalues,
        eigenvectors,
        residuals,
    })
}

struct RunOutput {
    values: Vec<f64>,
    vectors: Vec<Vec<C64>>,
    residuals: Vec<f64>,
}

const BLOCK: usize = 1 << 10;

fn chunk_count(dim: usize) -> usize {
    dim.div_ceil(BLOCK)
}

/// `⟨v_i|w⟩` for every `v_i`, one sweep over memory, fixed summation order.
fn block_dots(vecs: &[&[C64]], w: &[C64]) -> Vec<C64> {
    let dim = w.len();
    let partial = |c: usize| -> Vec<C64> {
        let r = c * BLOCK..((c + 1) * BLOCK).min(dim);
        vecs.iter()
            .map(|v| v[r.clone()].iter().zip(&w[r.clone()]).map(|(a, b)| a.conj() * b).sum())
            .collect()
    };
    let parts: Vec<Vec<C64>> = if dim < PAR_THRESHOLD {
        (0..chunk_count(dim)).map(partial).collect()
    } else {
        (0..chunk_count(dim)).into_par_iter().map(partial).collect()
    };
    let mut out = vec![ZERO; vecs.len()];
    for p in parts {
        for (o, x) in out.iter_mut().zip(p) {
            *o += x;
        }
    }
    out
}

/// `w -= Σ c_i v_i`.
fn block_subtract(w: &mut [C64], vecs: &[&[C64]], c: &[C64]) {
    let body = |ci: usize, wc: &mut [C64]| {
        let off = ci * BLOCK;
        for (v, &coef) in vecs.iter().zip(c) {
            for (x, y) in wc.iter_mut().zip(&v[off..]) {
                *x -= coef * y;
            }
        }
    };
    if w.len() < PAR_THRESHOLD {
        w.chunks_mut(BLOCK).enumerate().for_each(|(ci, wc)| body(ci, wc));
    } else {
        w.par_chunks_mut(BLOCK).enumerate().for_each(|(ci, wc)| body(ci, wc));
    }
}

/// Classical Gram-Schmidt applied twice. Returns the accumulated projection
/// coefficients in the order of `vecs`.
fn cgs2(w: &mut [C64], vecs: &[&[C64]]) -> Vec<C64> {
    let mut total = vec![ZERO; vecs.len()];
    if vecs.is_empty() {
        return total;
    }
    for _ in 0..2 {
        let c = block_dots(vecs, w);
        block_subtract(w, vecs, &c);
        for (t, x) in total.iter_mut().zip(c) {
            *t += x;
        }
    }
    total
}

/// Three-term step against the newest two basis vectors, then one full
/// classical Gram-Schmidt pass over `locked` and `basis`, repeated once more
/// when the pass removed a sizeable part of the vector. Returns coefficients
/// for `basis` only.
fn lanczos_orthogonalize(w: &mut [C64], locked: &[Vec<C64>], basis: &[Vec<C64>]) -> Vec<C64> {
    let j = basis.len();
    let mut coeffs = vec![ZERO; j];
    for i in (j.saturating_sub(2)..j).rev() {
        let c = crate::operators::dot(&basis[i], w);
        axpy(w, -c, &basis[i]);
        coeffs[i] += c;
    }
    let all = slices(locked, basis);
    for _ in 0..2 {
        let before = norm_sqr(w).sqrt();
        let c = block_dots(&all, w);
        block_subtract(w, &all, &c);
        for (t, x) in coeffs.iter_mut().zip(&c[locked.len()..]) {
            *t += x;
        }
        if norm_sqr(w).sqrt() > std::f64::consts::FRAC_1_SQRT_2 * before {
            break;
        }
    }
    coeffs
}

fn slices<'a>(a: &'a [Vec<C64>], b: &'a [Vec<C64>]) -> Vec<&'a [C64]> {
    a.iter().chain(b).map(Vec::as_slice).collect()
}

/// Random unit vector orthogonal to `locked` and `basis`.
fn fresh_direction<R: Rng>(dim: usize, locked: &[Vec<C64>], basis: &[Vec<C64>], rng: &mut R) -> Result<Vec<C64>> {
    for _ in 0..8 {
        let mut v: Vec<C64> = (0..dim)
            .map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
            .collect();
        let n0 = norm_sqr(&v).sqrt();
        cgs2(&mut v, &slices(locked, basis));
        let n = norm_sqr(&v).sqrt();
        if n > 1e-6 * n0 {
            scale(&mut v, C64::new(1.0 / n, 0.0));
            return Ok(v);
        }
    }
    Err(SkyrError::DegenerateInput("no direction left outside the Krylov basis".into()))
}

/// Columns `0..cols` of `basis · y`, as new vectors.
fn combine(basis: &[Vec<C64>], y: &DMatrix<C64>, cols: usize) -> Vec<Vec<C64>> {
    let dim = basis[0].len();
    let block = |c: usize| -> Vec<C64> {
        let r = c * BLOCK..((c + 1) * BLOCK).min(dim);
        let len = r.len();
        let mut out = vec![ZERO; cols * len];
        for (i, b) in basis.iter().enumerate() {
            let src = &b[r.clone()];
            for s in 0..cols {
                let coef = y[(i, s)];
                for (o, v) in out[s * len..(s + 1) * len].iter_mut().zip(src) {
                    *o += coef * v;
                }
            }
        }
        out
    };
    let blocks: Vec<Vec<C64>> = if dim < PAR_THRESHOLD {
        (0..chunk_count(dim)).map(block).collect()
    } else {
        (0..chunk_count(dim)).into_par_iter().map(block).collect()
    };
    let mut vectors = vec![Vec::with_capacity(dim); cols];
    for blk in blocks {
        let len = blk.len() / cols.max(1);
        for (s, v) in vectors.iter_mut().enumerate() {
            v.extend_from_slice(&blk[s * len..(s + 1) * len]);
        }
    }
    vectors
}

/// Thick-restart Lanczos for the `want` lowest pairs in the complement of
/// `locked`.
fn deflated_run<R: Rng>(
    op: &dyn LinearOperator,
    want: usize,
    locked: &[Vec<C64>],
    rng: &mut R,
    opts: &LanczosOptions,
) -> Result<RunOutput> {
    let dim = op.dim();
    let free = dim - locked.len();
    let by_memory = (opts.memory_budget / (16 * dim)).max(want + 2);
    let m = opts
        .max_krylov
        .min(by_memory)
        .min((4 * want).max(want + 30))
        .min(free)
        .max(want.min(free));
    let keep = if m > want { (want + (m - want) / 2).min(m - 1) } else { want };

    let mut basis: Vec<Vec<C64>> = vec![fresh_direction(dim, locked, &[], rng)?];
    let mut t = DMatrix::<C64>::zeros(m, m);
    let mut best = vec![f64::INFINITY; want];

    for _cycle in 0..opts.max_restarts {
        let mut residual_vec: Option<Vec<C64>> = None;
        let mut beta_last = 0.0;
        let start = basis.len() - 1;
        for j in start..m {
            let mut w = vec![ZERO; dim];
            op.apply_into(&basis[j], &mut w);
            let coeffs = lanczos_orthogonalize(&mut w, locked, &basis);
            for (i, c) in coeffs.into_iter().enumerate() {
                let c = if i == j { C64::new(c.re, 0.0) } else { c };
                t[(i, j)] = c;
                t[(j, i)] = c.conj();
            }
            let beta = norm_sqr(&w).sqrt();
            if j + 1 == m {
                beta_last = beta;
                residual_vec = Some(w);
                break;
            }
            let scale_ref = t[(j, j)].norm().max(1.0);
            if beta > 1e-12 * scale_ref {
                scale(&mut w, C64::new(1.0 / beta, 0.0));
                basis.push(w);
            } else {
                // invariant subspace: continue with an unrelated direction
                basis.push(fresh_direction(dim, locked, &basis, rng)?);
            }
        }

        let eig = nalgebra::SymmetricEigen::new(t.clone());
        let mut order: Vec<usize> = (0..m).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let theta: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        let y = DMatrix::from_fn(m, m, |r, c| eig.eigenvectors[(r, order[c])]);
        let estimates: Vec<f64> = (0..want).map(|s| beta_last * y[(m - 1, s)].norm()).collect();
        for (b, e) in best.iter_mut().zip(&estimates) {
            *b = b.min(*e);
        }

        let converged = estimates.iter().all(|&e| e < opts.tol) || m == free;
        if converged {
            let vectors = combine(&basis, &y, want);
            let residuals: Vec<f64> = vectors
                .iter()
                .zip(&theta)
                .map(|(v, &e)| residual(op, v, e))
                .collect();
            if residuals.iter().all(|&r| r < opts.tol) {
                return Ok(RunOutput {
                    values: theta[..want].to_vec(),
                    vectors,
                    residuals,
                });
            }
        }

        // thick restart on the lowest `keep` Ritz vectors plus the residual
        let Some(mut f) = residual_vec else {
            break;
        };
        let kept = combine(&basis, &y, keep);
        basis = kept;
        t.fill(ZERO);
        for s in 0..keep {
            t[(s, s)] = C64::new(theta[s], 0.0);
        }
        if beta_last > 1e-12 * theta[0].abs().max(1.0) {
            scale(&mut f, C64::new(1.0 / beta_last, 0.0));
            cgs2(&mut f, &slices(locked, &basis));
            let n = norm_sqr(&f).sqrt();
            scale(&mut f, C64::new(1.0 / n, 0.0));
            basis.push(f);
        } else {
            basis.push(fresh_direction(dim, locked, &basis, rng)?);
        }
    }
    Err(SkyrError::NotConverged {
        iterations: opts.max_restarts,
        residuals: best,
    })
}

/// Rayleigh quotient `⟨v|A|v⟩ / ⟨v|v⟩`.
pub fn rayleigh_quotient(op: &dyn LinearOperator, v: &StateVector) -> f64 {
    let mut w = vec![ZERO; v.dim()];
    op.apply_into(v.amplitudes(), &mut w);
    crate::operators::dot(v.amplitudes(), &w).re / norm_sqr(v.amplitudes())
}
