// Copyright 2026 The qdswitch Authors
// SPDX-License-Identifier: Apache-2.0

//! Composite Hilbert space of the four-level dot and one truncated cavity mode.
//!
//! Basis states are `|level⟩ ⊗ |n⟩` with flat index `level * fock_dim + n`,
//! levels enumerated in [`LEVEL_ORDER`]. Everything is stored as dense complex
//! matrices; at the sizes used here (dimension ≤ 64) that is the fastest option.

use faer::complex_native::c64;
use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{invalid, Error, Result};

pub type CMatrix = DMatrix<Complex64>;

pub const ZERO: Complex64 = Complex64::new(0.0, 0.0);
pub const ONE: Complex64 = Complex64::new(1.0, 0.0);
pub const I: Complex64 = Complex64::new(0.0, 1.0);

/// Hermiticity tolerance on `max |ρ - ρ†|`.
pub const HERMITICITY_TOL: f64 = 1e-10;
/// Trace tolerance on `|Tr ρ - 1|`.
pub const TRACE_TOL: f64 = 1e-8;
/// Smallest eigenvalue accepted as positive semidefinite.
pub const POSITIVITY_TOL: f64 = 1e-9;
/// Default threshold on population outside the ground spin manifold.
pub const DEFAULT_LEAK_TOL: f64 = 1e-4;

/// Quantum-dot levels: the two electron spin ground states and two trions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum QdLevel {
    SpinUp,
    SpinDown,
    Trion1,
    Trion2,
}

pub const LEVEL_ORDER: [QdLevel; 4] = [QdLevel::SpinUp, QdLevel::SpinDown, QdLevel::Trion1, QdLevel::Trion2];

impl QdLevel {
    pub const fn index(self) -> usize {
        match self {
            QdLevel::SpinUp => 0,
            QdLevel::SpinDown => 1,
            QdLevel::Trion1 => 2,
            QdLevel::Trion2 => 3,
        }
    }

    pub const fn is_ground(self) -> bool {
        matches!(self, QdLevel::SpinUp | QdLevel::SpinDown)
    }
}

/// Optical transitions as `(ground, trion)` pairs.
///
/// σ1 is the transition resonant with the cavity; its ground state is spin-down,
/// the state the cavity reflects with low cross-polarized transmittance. σ2's
/// ground state (spin-up) carries the `-Δe` energy shift. σ1/σ4 share the g1
/// coupling and σ2/σ3 the g2 coupling.
pub const TRANSITIONS: [(QdLevel, QdLevel); 4] = [
    (QdLevel::SpinDown, QdLevel::Trion1),
    (QdLevel::SpinUp, QdLevel::Trion2),
    (QdLevel::SpinUp, QdLevel::Trion1),
    (QdLevel::SpinDown, QdLevel::Trion2),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HilbertSpace {
    fock_dim: usize,
}

impl HilbertSpace {
    pub const QD_DIM: usize = 4;

    /// Space with Fock levels `0..fock_dim`.
    pub fn new(fock_dim: usize) -> Result<Self> {
        if fock_dim < 2 {
            return Err(invalid(format!("fock_dim must be >= 2, got {fock_dim}")));
        }
        Ok(Self { fock_dim })
    }

    pub fn fock_dim(&self) -> usize {
        self.fock_dim
    }

    pub fn total_dim(&self) -> usize {
        Self::QD_DIM * self.fock_dim
    }

    pub fn index(&self, level: QdLevel, n: usize) -> usize {
        debug_assert!(n < self.fock_dim);
        level.index() * self.fock_dim + n
    }

    pub fn identity(&self) -> CMatrix {
        CMatrix::identity(self.total_dim(), self.total_dim())
    }

    /// `|a⟩⟨b| ⊗ I_fock`.
    pub fn qd_transition(&self, to: QdLevel, from: QdLevel) -> CMatrix {
        let mut m = qd_zero();
        m[(to.index(), from.index())] = ONE;
        kron(&m, &CMatrix::identity(self.fock_dim, self.fock_dim))
    }

    /// `I_qd ⊗ a`, truncated so that `a|n⟩ = √n |n-1⟩`.
    pub fn annihilation(&self) -> CMatrix {
        let mut a = CMatrix::zeros(self.fock_dim, self.fock_dim);
        for n in 1..self.fock_dim {
            a[(n - 1, n)] = Complex64::new((n as f64).sqrt(), 0.0);
        }
        kron(&CMatrix::identity(Self::QD_DIM, Self::QD_DIM), &a)
    }

    /// Photon-number expectation, reading only the diagonal.
    pub fn photon_number(&self, rho: &CMatrix) -> f64 {
        let mut acc = 0.0;
        for q in 0..Self::QD_DIM {
            for n in 1..self.fock_dim {
                let k = q * self.fock_dim + n;
                acc += n as f64 * rho[(k, k)].re;
            }
        }
        acc
    }

    /// Populations of the four dot levels (cavity traced out), in [`LEVEL_ORDER`].
    pub fn level_populations(&self, rho: &CMatrix) -> [f64; 4] {
        let mut pops = [0.0; 4];
        for (q, p) in pops.iter_mut().enumerate() {
            for n in 0..self.fock_dim {
                let k = q * self.fock_dim + n;
                *p += rho[(k, k)].re;
            }
        }
        pops
    }
}

fn qd_zero() -> CMatrix {
    CMatrix::zeros(HilbertSpace::QD_DIM, HilbertSpace::QD_DIM)
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &CMatrix, b: &CMatrix) -> CMatrix {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = CMatrix::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[(i, j)];
            if aij == ZERO {
                continue;
            }
            for k in 0..br {
                for l in 0..bc {
                    out[(i * br + k, j * bc + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

/// Lowering operators σ1..σ4 of the optical transitions and the cavity `a`.
#[derive(Debug, Clone)]
pub struct LoweringOperators {
    pub sigma: [CMatrix; 4],
    pub a: CMatrix,
}

pub fn lowering_operators(space: &HilbertSpace) -> LoweringOperators {
    let sigma = TRANSITIONS.map(|(ground, trion)| space.qd_transition(ground, trion));
    LoweringOperators { sigma, a: space.annihilation() }
}

/// A density matrix. Construction through [`DensityOp::new`] checks
/// Hermiticity, unit trace and positivity.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOp {
    matrix: CMatrix,
}

impl DensityOp {
    pub fn new(matrix: CMatrix) -> Result<Self> {
        let rho = Self::from_matrix_unchecked(matrix);
        rho.validate()?;
        Ok(rho)
    }

    /// Wraps a matrix without checks; integrator internals use this and
    /// validate explicitly at their check points.
    pub fn from_matrix_unchecked(matrix: CMatrix) -> Self {
        Self { matrix }
    }

    /// Pure state `|ψ⟩⟨ψ|`; `psi` is normalized first.
    pub fn pure(psi: &[Complex64]) -> Result<Self> {
        let norm: f64 = psi.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(invalid("zero state vector"));
        }
        let n = psi.len();
        let m = CMatrix::from_fn(n, n, |i, j| psi[i] * psi[j].conj() / (norm * norm));
        Self::new(m)
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn trace(&self) -> Complex64 {
        self.matrix.trace()
    }

    /// `Tr ρ²`.
    pub fn purity(&self) -> f64 {
        // Tr(ρρ) = Σ_ij ρ_ij ρ_ji = Σ_ij |ρ_ij|² for Hermitian ρ
        self.matrix.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn hermiticity_error(&self) -> f64 {
        hermiticity_error(&self.matrix)
    }

    /// Smallest eigenvalue of the Hermitian part.
    ///
    /// Nearly pure states carry entries down to the subnormal range; the
    /// nalgebra eigensolver overflows on some of them, so this uses faer's
    /// self-adjoint solver instead.
    pub fn min_eigenvalue(&self) -> f64 {
        let m = &self.matrix;
        let n = m.nrows();
        let herm = faer::Mat::<c64>::from_fn(n, n, |i, j| {
            let z = 0.5 * (m[(i, j)] + m[(j, i)].conj());
            c64::new(z.re, z.im)
        });
        herm.selfadjoint_eigenvalues(faer::Side::Lower).into_iter().fold(f64::INFINITY, f64::min)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.matrix.is_square() {
            return Err(invalid("density matrix must be square"));
        }
        let herm = self.hermiticity_error();
        if herm >= HERMITICITY_TOL {
            return Err(invalid(format!("density matrix not Hermitian (error {herm:.3e})")));
        }
        let tr = self.trace();
        if (tr - ONE).norm() >= TRACE_TOL {
            return Err(invalid(format!("density matrix trace {tr} differs from 1")));
        }
        let min_eig = self.min_eigenvalue();
        if min_eig <= -POSITIVITY_TOL {
            return Err(invalid(format!("density matrix not positive (min eigenvalue {min_eig:.3e})")));
        }
        Ok(())
    }
}

pub fn hermiticity_error(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Reduced spin state together with the population that was discarded.
#[derive(Debug, Clone)]
pub struct SpinReduction {
    /// 2×2 state in the `{SpinUp, SpinDown}` basis, unit trace.
    pub spin: DensityOp,
    /// Population in trion levels or in states with cavity photons.
    pub leaked: f64,
}

/// Traces out the cavity, projects onto the ground spin manifold and
/// renormalizes.
///
/// The discarded population counts trion occupation and any ground-state
/// population with photons still in the cavity. A leak at or above
/// `leak_tol` is an error; pass `leak_tol = f64::INFINITY` to take the plain
/// partial trace of an arbitrary state.
pub fn partial_trace_to_spin(rho: &DensityOp, space: &HilbertSpace, leak_tol: f64) -> Result<SpinReduction> {
    if rho.dim() != space.total_dim() {
        return Err(invalid(format!(
            "state dimension {} does not match space dimension {}",
            rho.dim(),
            space.total_dim()
        )));
    }
    let m = rho.matrix();
    let ground = [QdLevel::SpinUp, QdLevel::SpinDown];
    let mut block = CMatrix::zeros(2, 2);
    for (bi, &li) in ground.iter().enumerate() {
        for (bj, &lj) in ground.iter().enumerate() {
            for n in 0..space.fock_dim() {
                block[(bi, bj)] += m[(space.index(li, n), space.index(lj, n))];
            }
        }
    }
    let vacuum_ground: f64 = ground.iter().map(|&l| m[(space.index(l, 0), space.index(l, 0))].re).sum();
    let leaked = (m.trace().re - vacuum_ground).max(0.0);
    if leaked >= leak_tol {
        return Err(Error::ResidualExcitation { leaked, threshold: leak_tol });
    }
    let kept = block.trace().re;
    if kept <= 0.0 {
        return Err(invalid("no population in the ground spin manifold"));
    }
    block /= Complex64::new(kept, 0.0);
    // symmetrize rounding noise before validating
    let block = (&block + block.adjoint()) * Complex64::new(0.5, 0.0);
    Ok(SpinReduction { spin: DensityOp::new(block)?, leaked })
}

/// Length of the Bloch vector of a 2×2 state, `√max(0, 2 Tr ρ² − 1)`.
pub fn bloch_length(spin: &DensityOp) -> f64 {
    (2.0 * spin.purity() - 1.0).max(0.0).sqrt()
}
