//! The projected qubit: two lowest eigenstates treated as `|0⟩, |1⟩`.
//!
//! Coherent driving uses `H(t) = diag(E1, E2) + A cos(ωt) G`. Open-system
//! evolution adds amplitude damping at rate `1/T1` and pure dephasing so that
//! coherences decay at `1/T2`. Two-qubit circuits are exact gate algebra.

use serde::{Deserialize, Serialize};

use crate::dynamics::{bloch_from_overlaps, Gate, TrajectoryRecord};
use crate::eigensolver::EigenResult;
use crate::error::{contract, Result, SkyrError};
use crate::operators::{C64, ONE, ZERO};

pub type Matrix2 = [[C64; 2]; 2];
pub type Vector2 = [C64; 2];

const I: C64 = C64::new(0.0, 1.0);

/// Internal step times the fastest rate in the problem.
const STEP_FRACTION: f64 = 0.02;
const RK4_STEP_FRACTION: f64 = 0.005;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QubitSystem {
    pub e1: f64,
    pub e2: f64,
    pub omega0: f64,
    /// `E3 - E2` when a third level was available.
    pub next_gap: Option<f64>,
    pub provenance: Option<String>,
}

impl QubitSystem {
    pub fn new(e1: f64, e2: f64) -> Result<Self> {
        if !(e1.is_finite() && e2.is_finite() && e2 > e1) {
            return Err(contract(format!("need E2 > E1, got E1 = {e1}, E2 = {e2}")));
        }
        Ok(QubitSystem {
            e1,
            e2,
            omega0: e2 - e1,
            next_gap: None,
            provenance: None,
        })
    }

    pub fn with_provenance(mut self, p: impl Into<String>) -> Self {
        self.provenance = Some(p.into());
        self
    }

    /// `(E3 - E2) - (E2 - E1)`, when known.
    pub fn anharmonicity(&self) -> Option<f64> {
        self.next_gap.map(|g| g - self.omega0)
    }
}

/// Takes the two lowest levels as the qubit. A lowest pair closer than
/// `tol_degeneracy` has no isolated qubit.
pub fn project_two_level(eigs: &EigenResult, tol_degeneracy: f64) -> Result<QubitSystem> {
    let e = &eigs.eigenvalues;
    if e.len() < 2 {
        return Err(contract("need at least two eigenpairs"));
    }
    let gap = e[1] - e[0];
    if gap <= tol_degeneracy {
        return Err(SkyrError::NoIsolatedQubit {
            gap,
            tol: tol_degeneracy,
        });
    }
    let mut q = QubitSystem::new(e[0], e[1])?;
    q.next_gap = e.get(2).map(|e3| e3 - e[1]);
    Ok(q)
}

pub fn gate_matrix(gate: Gate) -> Matrix2 {
    gate.matrix()
}

pub fn mat_mul(a: &Matrix2, b: &Matrix2) -> Matrix2 {
    let mut c = [[ZERO; 2]; 2];
    for r in 0..2 {
        for k in 0..2 {
            c[r][k] = a[r][0] * b[0][k] + a[r][1] * b[1][k];
        }
    }
    c
}

pub fn mat_vec(a: &Matrix2, v: &Vector2) -> Vector2 {
    [a[0][0] * v[0] + a[0][1] * v[1], a[1][0] * v[0] + a[1][1] * v[1]]
}

pub fn dagger(a: &Matrix2) -> Matrix2 {
    [
        [a[0][0].conj(), a[1][0].conj()],
        [a[0][1].conj(), a[1][1].conj()],
    ]
}

fn add(a: &Matrix2, b: &Matrix2, s: C64) -> Matrix2 {
    [
        [a[0][0] + s * b[0][0], a[0][1] + s * b[0][1]],
        [a[1][0] + s * b[1][0], a[1][1] + s * b[1][1]],
    ]
}

fn scaled(a: &Matrix2, s: C64) -> Matrix2 {
    a.map(|row| row.map(|x| s * x))
}

pub const IDENTITY: Matrix2 = [[ONE, ZERO], [ZERO, ONE]];

/// Largest entrywise difference after removing a global phase.
pub fn distance_up_to_phase(a: &Matrix2, b: &Matrix2) -> f64 {
    let tr: C64 = (0..2).map(|r| (0..2).map(|c| a[r][c].conj() * b[r][c]).sum::<C64>()).sum();
    let phase = if tr.norm() > 0.0 { tr / tr.norm() } else { ONE };
    let mut d: f64 = 0.0;
    for r in 0..2 {
        for c in 0..2 {
            d = d.max((a[r][c] * phase - b[r][c]).norm());
        }
    }
    d
}

/// `exp(-i τ h)` for Hermitian `h`, via `h = a0 + a·σ`.
pub fn exp_hermitian(h: &Matrix2, tau: f64) -> Matrix2 {
    let a0 = 0.5 * (h[0][0].re + h[1][1].re);
    let az = 0.5 * (h[0][0].re - h[1][1].re);
    let ax = h[1][0].re;
    let ay = h[1][0].im;
    let norm = (ax * ax + ay * ay + az * az).sqrt();
    let (s, c) = (tau * norm).sin_cos();
    let phase = C64::new(0.0, -tau * a0).exp();
    if norm == 0.0 {
        return scaled(&IDENTITY, phase);
    }
    let (nx, ny, nz) = (ax / norm, ay / norm, az / norm);
    // cos I - i sin (n·σ)
    let m = [
        [C64::new(c, -s * nz), C64::new(-s * ny, -s * nx)],
        [C64::new(s * ny, -s * nx), C64::new(c, s * nz)],
    ];
    scaled(&m, phase)
}

/// `R_n(θ) = exp(-i θ σ_n / 2)` about a Pauli axis.
pub fn rotation(gate: Gate, theta: f64) -> Matrix2 {
    exp_hermitian(&gate.matrix(), theta / 2.0)
}

/// `R_z(π/2) · R_axis(π/2) · R_z(π/2)`. With `axis = X` this equals the
/// Hadamard gate up to a global phase.
pub fn composite_hadamard(axis: Gate) -> Matrix2 {
    let rz = rotation(Gate::Z, std::f64::consts::FRAC_PI_2);
    let mid = rotation(axis, std::f64::consts::FRAC_PI_2);
    mat_mul(&rz, &mat_mul(&mid, &rz))
}

/// Rotating-frame Hamiltonian `Δ/2 σ_z + Ω_R/2 G`.
pub fn rwa_hamiltonian(detuning: f64, rabi: f64, gate: Gate) -> Matrix2 {
    let g = gate.matrix();
    let z = Gate::Z.matrix();
    add(
        &scaled(&z, C64::new(detuning / 2.0, 0.0)),
        &g,
        C64::new(rabi / 2.0, 0.0),
    )
}

/// π-pulse length `2π/(γ B0)` for a field amplitude `B0`.
pub fn pi_pulse_duration(b0: f64, gyromagnetic: f64) -> Result<f64> {
    let w = gyromagnetic * b0;
    if w == 0.0 || !w.is_finite() {
        return Err(contract("π pulse needs a nonzero field and gyromagnetic ratio"));
    }
    Ok(2.0 * std::f64::consts::PI / w.abs())
}

/// `P2(t) = sin²(A t / 2)` for a resonant drive of amplitude `A`.
pub fn rwa_excited_population(amplitude: f64, t: f64) -> f64 {
    (0.5 * amplitude * t).sin().powi(2)
}

/// Bloch vector `(2 Re ρ01, -2 Im ρ01, ρ00 - ρ11)` of a pure 2-vector.
pub fn bloch_vector(psi: &Vector2) -> [f64; 3] {
    bloch_from_overlaps(psi[0], psi[1])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DensityMatrix2 {
    pub rho: Matrix2,
}

impl DensityMatrix2 {
    pub fn new(rho: Matrix2) -> Result<Self> {
        let d = DensityMatrix2 { rho };
        d.check(1e-10)?;
        Ok(d)
    }

    pub fn pure(psi: &Vector2) -> Result<Self> {
        let n = psi[0].norm_sqr() + psi[1].norm_sqr();
        if (n - 1.0).abs() > 1e-10 {
            return Err(contract(format!("state not normalized (norm² {n})")));
        }
        let mut rho = [[ZERO; 2]; 2];
        for r in 0..2 {
            for c in 0..2 {
                rho[r][c] = psi[r] * psi[c].conj();
            }
        }
        Ok(DensityMatrix2 { rho })
    }

    pub fn trace(&self) -> f64 {
        self.rho[0][0].re + self.rho[1][1].re
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let a = self.rho[0][0].re;
        let d = self.rho[1][1].re;
        let b = self.rho[0][1].norm();
        0.5 * (a + d) - (0.25 * (a - d).powi(2) + b * b).sqrt()
    }

    pub fn check(&self, tol: f64) -> Result<()> {
        let herm = (self.rho[0][1] - self.rho[1][0].conj()).norm()
            + self.rho[0][0].im.abs()
            + self.rho[1][1].im.abs();
        if herm > tol {
            return Err(contract(format!("density matrix not Hermitian ({herm:e})")));
        }
        if (self.trace() - 1.0).abs() > tol {
            return Err(contract(format!("density matrix trace {}", self.trace())));
        }
        if self.min_eigenvalue() < -tol {
            return Err(contract(format!(
                "density matrix has negative eigenvalue {}",
                self.min_eigenvalue()
            )));
        }
        Ok(())
    }

    pub fn bloch(&self) -> [f64; 3] {
        let r01 = self.rho[0][1];
        [2.0 * r01.re, -2.0 * r01.im, self.rho[0][0].re - self.rho[1][1].re]
    }

    pub fn populations(&self) -> [f64; 2] {
        [self.rho[0][0].re, self.rho[1][1].re]
    }
}

fn drive_hamiltonian(qubit: &QubitSystem, g: &Matrix2, amplitude: f64, omega: f64, t: f64) -> Matrix2 {
    // energies measured from E1; a constant shift only changes a global phase
    let h0 = [[ZERO, ZERO], [ZERO, C64::new(qubit.omega0, 0.0)]];
    add(&h0, g, C64::new(amplitude * (omega * t).cos(), 0.0))
}

fn check_run(amplitude: f64, omega: f64, t_final: f64, dt: f64) -> Result<()> {
    if !(amplitude.is_finite() && omega.is_finite() && omega >= 0.0) {
        return Err(contract("drive amplitude and frequency must be finite, frequency ≥ 0"));
    }
    if !(dt > 0.0 && dt.is_finite() && t_final >= 0.0 && t_final.is_finite()) {
        return Err(contract("need dt > 0 and t_final ≥ 0"));
    }
    Ok(())
}

fn grid(t_final: f64, dt: f64) -> (usize, f64) {
    let n = ((t_final / dt) - 1e-9).ceil().max(0.0) as usize;
    let h = if n > 0 { t_final / n as f64 } else { dt };
    (n, h)
}

fn substeps(h: f64, rate: f64, fraction: f64) -> usize {
    ((h * rate / fraction).ceil() as usize).max(1)
}

fn push_pure(rec: &mut TrajectoryRecord, q: &QubitSystem, t: f64, psi: &Vector2) {
    let (p1, p2) = (psi[0].norm_sqr(), psi[1].norm_sqr());
    push_common(rec, t, bloch_vector(psi), [p1, p2], q.e1 * p1 + q.e2 * p2);
}

fn push_common(rec: &mut TrajectoryRecord, t: f64, r: [f64; 3], p: [f64; 2], energy: f64) {
    rec.times.push(t);
    rec.bloch_logical.push(r);
    rec.central_spin.push([f64::NAN; 3]);
    rec.energy.push(energy);
    rec.entropy.push(f64::NAN);
    rec.charge.push(f64::NAN);
    rec.p1.push(p[0]);
    rec.p2.push(p[1]);
    rec.leakage.push(1.0 - p[0] - p[1]);
}

/// Coherent evolution of the qubit under `diag(E1, E2) + A cos(ωt) G`,
/// recorded every `dt`.
#[allow(clippy::too_many_arguments)]
pub fn evolve_two_level(
    qubit: &QubitSystem,
    gate: Gate,
    amplitude: f64,
    omega: f64,
    psi0: Vector2,
    t_final: f64,
    dt: f64,
) -> Result<TrajectoryRecord> {
    check_run(amplitude, omega, t_final, dt)?;
    let norm = psi0[0].norm_sqr() + psi0[1].norm_sqr();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(contract(format!("initial state not normalized (norm² {norm})")));
    }
    let g = gate.matrix();
    let (n, h) = grid(t_final, dt);
    let sub = substeps(h, qubit.omega0.abs().max(amplitude.abs()).max(omega), STEP_FRACTION);
    let hs = h / sub as f64;
    let s3 = 3f64.sqrt();
    let (c1, c2) = (0.5 - s3 / 6.0, 0.5 + s3 / 6.0);
    let (a1, a2) = ((3.0 - 2.0 * s3) / 12.0, (3.0 + 2.0 * s3) / 12.0);

    let mut rec = TrajectoryRecord::default();
    let mut psi = psi0;
    push_pure(&mut rec, qubit, 0.0, &psi);
    for step in 0..n {
        for k in 0..sub {
            let t = step as f64 * h + k as f64 * hs;
            let h1 = drive_hamiltonian(qubit, &g, amplitude, omega, t + c1 * hs);
            let h2 = drive_hamiltonian(qubit, &g, amplitude, omega, t + c2 * hs);
            let first = add(&scaled(&h1, C64::new(a2, 0.0)), &h2, C64::new(a1, 0.0));
            let second = add(&scaled(&h1, C64::new(a1, 0.0)), &h2, C64::new(a2, 0.0));
            psi = mat_vec(&exp_hermitian(&first, hs), &psi);
            psi = mat_vec(&exp_hermitian(&second, hs), &psi);
        }
        push_pure(&mut rec, qubit, (step + 1) as f64 * h, &psi);
    }
    Ok(rec)
}

fn lindblad_rhs(h: &Matrix2, ops: &[Matrix2], rho: &Matrix2) -> Matrix2 {
    let hr = mat_mul(h, rho);
    let rh = mat_mul(rho, h);
    let mut out = add(&scaled(&hr, -I), &rh, I);
    for l in ops {
        let ld = dagger(l);
        let ldl = mat_mul(&ld, l);
        let jump = mat_mul(&mat_mul(l, rho), &ld);
        let anti = add(&mat_mul(&ldl, rho), &mat_mul(rho, &ldl), ONE);
        out = add(&out, &jump, ONE);
        out = add(&out, &anti, C64::new(-0.5, 0.0));
    }
    out
}

/// Decay rates `(γ1, γΦ)` with `γΦ = 1/T2 - 1/(2 T1)`. Infinite times give
/// zero rates.
pub fn decoherence_rates(t1: f64, t2: f64) -> Result<(f64, f64)> {
    if !(t1 > 0.0) || !(t2 > 0.0) {
        return Err(contract("T1 and T2 must be positive"));
    }
    if t2 > 2.0 * t1 {
        return Err(contract(format!(
            "T2 = {t2} exceeds 2 T1 = {}: negative dephasing rate",
            2.0 * t1
        )));
    }
    let g1 = 1.0 / t1;
    let gphi = (1.0 / t2 - 0.5 * g1).max(0.0);
    Ok((g1, gphi))
}

/// Lindblad evolution with relaxation `√γ1 |0⟩⟨1|` and dephasing
/// `√(γΦ/2) σ_z`, so that `|ρ01|` decays as `e^{-t/T2}` without drive.
#[allow(clippy::too_many_arguments)]
pub fn evolve_lindblad(
    qubit: &QubitSystem,
    gate: Gate,
    amplitude: f64,
    omega: f64,
    rho0: DensityMatrix2,
    t1: f64,
    t2: f64,
    t_final: f64,
    dt: f64,
) -> Result<TrajectoryRecord> {
    check_run(amplitude, omega, t_final, dt)?;
    rho0.check(1e-10)?;
    let (g1, gphi) = decoherence_rates(t1, t2)?;
    let mut ops = Vec::new();
    if g1 > 0.0 {
        ops.push([[ZERO, C64::new(g1.sqrt(), 0.0)], [ZERO, ZERO]]);
    }
    if gphi > 0.0 {
        ops.push(scaled(&Gate::Z.matrix(), C64::new((0.5 * gphi).sqrt(), 0.0)));
    }
    let g = gate.matrix();
    let (n, h) = grid(t_final, dt);
    let rate = qubit
        .omega0
        .abs()
        .max(amplitude.abs())
        .max(omega)
        .max(g1)
        .max(gphi);
    let sub = substeps(h, rate, RK4_STEP_FRACTION);
    let hs = h / sub as f64;

    let mut rec = TrajectoryRecord::default();
    let push = |rec: &mut TrajectoryRecord, t: f64, rho: &Matrix2| {
        let d = DensityMatrix2 { rho: *rho };
        let p = d.populations();
        push_common(rec, t, d.bloch(), p, qubit.e1 * p[0] + qubit.e2 * p[1]);
    };
    let mut rho = rho0.rho;
    push(&mut rec, 0.0, &rho);
    for step in 0..n {
        for k in 0..sub {
            let t = step as f64 * h + k as f64 * hs;
            let ham = |s: f64| drive_hamiltonian(qubit, &g, amplitude, omega, s);
            let k1 = lindblad_rhs(&ham(t), &ops, &rho);
            let k2 = lindblad_rhs(&ham(t + 0.5 * hs), &ops, &add(&rho, &k1, C64::new(0.5 * hs, 0.0)));
            let k3 = lindblad_rhs(&ham(t + 0.5 * hs), &ops, &add(&rho, &k2, C64::new(0.5 * hs, 0.0)));
            let k4 = lindblad_rhs(&ham(t + hs), &ops, &add(&rho, &k3, C64::new(hs, 0.0)));
            for r in 0..2 {
                for c in 0..2 {
                    rho[r][c] += (k1[r][c] + 2.0 * k2[r][c] + 2.0 * k3[r][c] + k4[r][c]) * (hs / 6.0);
                }
            }
            // keep exact Hermiticity against roundoff
            let off = 0.5 * (rho[0][1] + rho[1][0].conj());
            rho[0][1] = off;
            rho[1][0] = off.conj();
            rho[0][0].im = 0.0;
            rho[1][1].im = 0.0;
        }
        push(&mut rec, (step + 1) as f64 * h, &rho);
    }
    Ok(rec)
}

/// Rabi period of a resonant drive: `2π/A` from the rotating-wave picture,
/// refined by the first maximum of `P2(t)` in a direct simulation.
pub fn rabi_period(qubit: &QubitSystem, gate: Gate, amplitude: f64) -> Result<f64> {
    if amplitude == 0.0 || !amplitude.is_finite() {
        return Err(contract("Rabi period needs a nonzero amplitude"));
    }
    let t_rwa = 2.0 * std::f64::consts::PI / amplitude.abs();
    let drive_period = 2.0 * std::f64::consts::PI / qubit.omega0;
    let dt = (t_rwa / 2000.0).min(drive_period / 40.0);
    let rec = evolve_two_level(qubit, gate, amplitude, qubit.omega0, [ONE, ZERO], 0.75 * t_rwa, dt)?;
    // coarse envelope maximum, then a parabola through its neighbours
    let k = rec
        .p2
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(k, _)| k)
        .unwrap_or(0);
    if k == 0 || k + 1 >= rec.len() {
        return Ok(t_rwa);
    }
    let (y0, y1, y2) = (rec.p2[k - 1], rec.p2[k], rec.p2[k + 1]);
    let denom = y0 - 2.0 * y1 + y2;
    let shift = if denom.abs() > 0.0 { 0.5 * (y0 - y2) / denom } else { 0.0 };
    Ok(2.0 * (rec.times[k] + shift * dt))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReadoutBasis {
    #[serde(rename = "X_basis", alias = "x")]
    X,
    #[serde(rename = "Y_basis", alias = "y")]
    Y,
}

/// Rotates `psi` so the chosen basis maps onto `|0⟩, |1⟩` and returns the
/// rotated state with its populations. The X basis uses the Hadamard gate,
/// sending `|+⟩ → |0⟩`. The Y basis uses `R_x(π/2) = (1/√2)((1, -i), (-i, 1))`,
/// sending `|+i⟩ → |0⟩`.
pub fn readout_rotation(basis: ReadoutBasis, psi: &Vector2) -> Result<(Vector2, [f64; 2])> {
    let norm = psi[0].norm_sqr() + psi[1].norm_sqr();
    if (norm - 1.0).abs() > 1e-10 {
        return Err(contract(format!("state not normalized (norm² {norm})")));
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let m = match basis {
        ReadoutBasis::X => Gate::Hadamard.matrix(),
        ReadoutBasis::Y => [[C64::new(s, 0.0), C64::new(0.0, -s)], [C64::new(0.0, -s), C64::new(s, 0.0)]],
    };
    let out = mat_vec(&m, psi);
    Ok((out, [out[0].norm_sqr(), out[1].norm_sqr()]))
}

pub type Vector4 = [C64; 4];

/// `a ⊗ b` with the first factor as the high bit.
pub fn kron(a: &Matrix2, b: &Matrix2) -> [[C64; 4]; 4] {
    let mut m = [[ZERO; 4]; 4];
    for r in 0..4 {
        for c in 0..4 {
            m[r][c] = a[r >> 1][c >> 1] * b[r & 1][c & 1];
        }
    }
    m
}

pub fn apply4(m: &[[C64; 4]; 4], v: &Vector4) -> Vector4 {
    let mut out = [ZERO; 4];
    for r in 0..4 {
        out[r] = (0..4).map(|c| m[r][c] * v[c]).sum();
    }
    out
}

/// CNOT with the first qubit as control.
pub fn cnot() -> [[C64; 4]; 4] {
    let mut m = [[ZERO; 4]; 4];
    m[0][0] = ONE;
    m[1][1] = ONE;
    m[2][3] = ONE;
    m[3][2] = ONE;
    m
}

/// `CNOT · (H ⊗ I) |00⟩`.
pub fn bell_circuit() -> Vector4 {
    let start = [ONE, ZERO, ZERO, ZERO];
    let h = kron(&Gate::Hadamard.matrix(), &IDENTITY);
    apply4(&cnot(), &apply4(&h, &start))
}

/// Von Neumann entropy of the first qubit of a two-qubit pure state.
pub fn qubit_entropy(v: &Vector4) -> f64 {
    let off = v[0] * v[2].conj() + v[1] * v[3].conj();
    let rho = [
        [C64::new(v[0].norm_sqr() + v[1].norm_sqr(), 0.0), off],
        [off.conj(), C64::new(v[2].norm_sqr() + v[3].norm_sqr(), 0.0)],
    ];
    let d = DensityMatrix2 { rho };
    let lo = d.min_eigenvalue().max(0.0);
    let hi = (d.trace() - lo).max(0.0);
    [lo, hi]
        .iter()
        .filter(|&&p| p > 1e-300)
        .map(|&p| -p * p.ln())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn mat_close(a: &Matrix2, b: &Matrix2, tol: f64) -> bool {
        (0..2).all(|r| (0..2).all(|c| (a[r][c] - b[r][c]).norm() <= tol))
    }

    fn eigs(values: &[f64]) -> EigenResult {
        EigenResult {
            eigenvalues: values.to_vec(),
            eigenvectors: Vec::new(),
            residuals: vec![0.0; values.len()],
            degeneracy_groups: Vec::new(),
        }
    }

    #[test]
    fn projection_examples() {
        let q = project_two_level(&eigs(&[-1.0, -0.9, -0.5]), 1e-6).unwrap();
        assert!(close(q.omega0, 0.1, 1e-14));
        assert!(close(q.anharmonicity().unwrap(), 0.3, 1e-14));
        let err = project_two_level(&eigs(&[-1.0, -1.0, -1.0, -1.0, -1.0, -1.0, -0.5]), 1e-6);
        assert!(matches!(err, Err(SkyrError::NoIsolatedQubit { .. })));
        assert!(project_two_level(&eigs(&[-1.0]), 1e-6).is_err());
    }

    #[test]
    fn gate_algebra() {
        for g in Gate::ALL {
            let m = gate_matrix(g);
            assert!(mat_close(&mat_mul(&m, &dagger(&m)), &IDENTITY, 1e-12));
            assert!(mat_close(&mat_mul(&m, &m), &IDENTITY, 1e-12));
        }
        let xz = mat_mul(&gate_matrix(Gate::X), &gate_matrix(Gate::Z));
        assert!(mat_close(&xz, &scaled(&gate_matrix(Gate::Y), -I), 1e-15));
    }

    #[test]
    fn exponential_matches_series() {
        let h = [
            [C64::new(0.3, 0.0), C64::new(0.2, -0.7)],
            [C64::new(0.2, 0.7), C64::new(-1.1, 0.0)],
        ];
        let tau = 0.37;
        let mut sum = IDENTITY;
        let mut term = IDENTITY;
        for k in 1..40 {
            term = scaled(&mat_mul(&h, &term), C64::new(0.0, -tau / k as f64));
            sum = add(&sum, &term, ONE);
        }
        assert!(mat_close(&exp_hermitian(&h, tau), &sum, 1e-14));
    }

    #[test]
    fn composite_sequence() {
        let h = gate_matrix(Gate::Hadamard);
        assert!(distance_up_to_phase(&composite_hadamard(Gate::X), &h) < 1e-12);
        // a y-axis middle pulse gives a different unitary
        assert!(distance_up_to_phase(&composite_hadamard(Gate::Y), &h) > 0.1);
    }

    #[test]
    fn rwa_examples() {
        let h = rwa_hamiltonian(0.0, 1.0, Gate::X);
        assert!(mat_close(&h, &scaled(&gate_matrix(Gate::X), C64::new(0.5, 0.0)), 1e-15));
        let h = rwa_hamiltonian(2.0, 0.0, Gate::X);
        assert!(mat_close(&h, &gate_matrix(Gate::Z), 1e-15));
        assert!(close(pi_pulse_duration(2.0, 0.5).unwrap(), 2.0 * std::f64::consts::PI, 1e-15));
        assert!(pi_pulse_duration(0.0, 1.0).is_err());
    }

    #[test]
    fn stationary_without_drive() {
        let q = QubitSystem::new(-1.0, -0.9).unwrap();
        let rec = evolve_two_level(&q, Gate::X, 0.0, 0.1, [ONE, ZERO], 10.0, 0.1).unwrap();
        for r in &rec.bloch_logical {
            assert!(close(r[2], 1.0, 1e-14) && r[0].abs() < 1e-14);
        }
    }

    #[test]
    fn resonant_rabi_follows_rwa() {
        let q = QubitSystem::new(-1.0, 0.0).unwrap();
        let a = 0.05;
        let period = 2.0 * std::f64::consts::PI / a;
        let rec = evolve_two_level(&q, Gate::X, a, q.omega0, [ONE, ZERO], period, 0.05).unwrap();
        let rms = (rec
            .times
            .iter()
            .zip(&rec.p2)
            .map(|(&t, &p)| (p - rwa_excited_population(a, t)).powi(2))
            .sum::<f64>()
            / rec.len() as f64)
            .sqrt();
        assert!(rms < 0.02, "rms {rms}");
        let t = rabi_period(&q, Gate::X, a).unwrap();
        assert!((t / period - 1.0).abs() < 0.05, "period {t} vs {period}");
    }

    #[test]
    fn lindblad_closed_forms() {
        let q = QubitSystem::new(-1.0, 0.0).unwrap();
        let (t1, t2) = (10.0, 5.0);
        let excited = DensityMatrix2::pure(&[ZERO, ONE]).unwrap();
        let rec = evolve_lindblad(&q, Gate::X, 0.0, 1.0, excited, t1, t2, 20.0, 0.1).unwrap();
        for (t, p) in rec.times.iter().zip(&rec.p2) {
            assert!(close(*p, (-t / t1).exp(), 1e-9));
        }
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let plus = DensityMatrix2::pure(&[C64::new(s, 0.0), C64::new(s, 0.0)]).unwrap();
        let rec = evolve_lindblad(&q, Gate::X, 0.0, 1.0, plus, t1, t2, 20.0, 0.1).unwrap();
        for (t, r) in rec.times.iter().zip(&rec.bloch_logical) {
            let coherence = 0.5 * (r[0] * r[0] + r[1] * r[1]).sqrt();
            assert!(close(coherence, 0.5 * (-t / t2).exp(), 1e-9), "{t} {coherence} {}", 0.5 * (-t / t2).exp());
        }
        assert!(evolve_lindblad(&q, Gate::X, 0.0, 1.0, plus, 1.0, 2.5, 1.0, 0.1).is_err());
    }

    #[test]
    fn lindblad_without_decay_matches_pure_evolution() {
        let q = QubitSystem::new(-0.3, 0.2).unwrap();
        let psi0 = [ONE, ZERO];
        let pure = evolve_two_level(&q, Gate::Hadamard, 0.05, q.omega0, psi0, 40.0, 0.1).unwrap();
        let rho0 = DensityMatrix2::pure(&psi0).unwrap();
        let inf = f64::INFINITY;
        let mixed = evolve_lindblad(&q, Gate::Hadamard, 0.05, q.omega0, rho0, inf, inf, 40.0, 0.1).unwrap();
        for (a, b) in pure.bloch_logical.iter().zip(&mixed.bloch_logical) {
            for k in 0..3 {
                assert!(close(a[k], b[k], 1e-6));
            }
        }
    }

    #[test]
    fn readout_examples() {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let r = |v: Vector2, b| readout_rotation(b, &v).unwrap().1;
        let p = r([C64::new(s, 0.0), C64::new(s, 0.0)], ReadoutBasis::X);
        assert!(close(p[0], 1.0, 1e-12) && close(p[1], 0.0, 1e-12));
        let p = r([C64::new(s, 0.0), C64::new(-s, 0.0)], ReadoutBasis::X);
        assert!(close(p[1], 1.0, 1e-12));
        let p = r([C64::new(s, 0.0), C64::new(0.0, s)], ReadoutBasis::Y);
        assert!(close(p[0], 1.0, 1e-12));
        let p = r([C64::new(s, 0.0), C64::new(0.0, -s)], ReadoutBasis::Y);
        assert!(close(p[1], 1.0, 1e-12));
        // the opposite rotation sends |+i⟩ to |1⟩
        let minus = rotation(Gate::X, -std::f64::consts::FRAC_PI_2);
        let out = mat_vec(&minus, &[C64::new(s, 0.0), C64::new(0.0, s)]);
        assert!(close(out[1].norm_sqr(), 1.0, 1e-12));
        assert!((minus[0][1] - C64::new(0.0, s)).norm() < 1e-15);
    }

    #[test]
    fn bell_state() {
        let b = bell_circuit();
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let expect = [s, 0.0, 0.0, s];
        for k in 0..4 {
            assert!((b[k] - C64::new(expect[k], 0.0)).norm() < 1e-12);
        }
        assert!(close(qubit_entropy(&b), 2f64.ln(), 1e-12));
        let after_h = apply4(&kron(&gate_matrix(Gate::Hadamard), &IDENTITY), &[ONE, ZERO, ZERO, ZERO]);
        let twice = apply4(&cnot(), &apply4(&cnot(), &after_h));
        for k in 0..4 {
            assert!((twice[k] - after_h[k]).norm() < 1e-15);
        }
        assert!(close(qubit_entropy(&after_h), 0.0, 1e-12));
    }

    #[test]
    fn density_matrix_validation() {
        assert!(DensityMatrix2::new([[ONE, ZERO], [ZERO, ONE]]).is_err());
        assert!(DensityMatrix2::new([[ONE, ZERO], [ZERO, ZERO]]).is_ok());
        assert!(DensityMatrix2::new([[C64::new(0.5, 0.0), ONE], [ONE, C64::new(0.5, 0.0)]]).is_err());
    }
}
