//! Decomposition of mode-mixing unitaries into planar meshes of
//! Mach-Zehnder cells acting on adjacent rails.
//!
//! A cell on rails `(m, m+1)` realizes the 2x2 unitary
//!
//! ```text
//! A(delta, gamma) = [ cos(delta) e^{-i gamma}   sin(delta) ]
//!                   [ -sin(delta) e^{-i gamma}  cos(delta) ]
//! ```
//!
//! which is a phase `gamma` on the first rail followed by a mixer with
//! cross-coupling `sin^2(delta)`. Any N x N unitary factors as
//! `D * A_K ... A_1` with `D` a layer of output phases; the two supported
//! schemes differ in the mesh shape (triangular vs rectangular) but share
//! the same cell convention.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::circuit::{CircuitElement, ElementKind};
use crate::error::{Error, Result};
use crate::gaussian::C64;
use crate::linalg::{unitarity_defect, CMat};

/// Acceptable distance from exact unitarity for decomposition inputs.
pub const UNITARY_TOL: f64 = 1e-8;

/// Mesh geometry used by [`mesh_decompose`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum MeshScheme {
    /// Rectangular mesh: minimal depth, cells nulled by alternating
    /// column and row operations along anti-diagonals.
    #[default]
    Rectangular,
    /// Triangular mesh: rows nulled top-down, right-to-left.
    Triangular,
}

/// One programmed cell: rails `(pair, pair + 1)`, mixer setting
/// `internal_phi = 2 delta`, input phase `external_theta = gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshCell {
    pub pair: usize,
    pub internal_phi: f64,
    pub external_theta: f64,
}

/// A factored unitary: cells in application order plus one output phase per
/// rail, applied after all cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeshDecomposition {
    pub n: usize,
    pub scheme: MeshScheme,
    pub cells: Vec<MeshCell>,
    pub output_phases: Vec<f64>,
}

impl MeshDecomposition {
    /// Rebuilds the N x N unitary this decomposition encodes.
    pub fn reconstruct(&self) -> CMat {
        let mut m = CMat::identity(self.n, self.n);
        for cell in &self.cells {
            left_apply_cell(&mut m, cell);
        }
        for (i, theta) in self.output_phases.iter().enumerate() {
            let ph = C64::new(0.0, -theta).exp();
            for j in 0..self.n {
                m[(i, j)] *= ph;
            }
        }
        m
    }

    /// Emits the decomposition as circuit elements, with rail `k` of the
    /// mesh mapped to program mode `mode_offset + k`.
    pub fn elements(&self, mode_offset: usize) -> Vec<CircuitElement> {
        let mut out = Vec::with_capacity(self.cells.len() + self.n);
        for cell in &self.cells {
            out.push(CircuitElement::new(ElementKind::Mzi {
                internal_phi: cell.internal_phi,
                external_theta: cell.external_theta,
                modes: (mode_offset + cell.pair, mode_offset + cell.pair + 1),
            }));
        }
        for (i, theta) in self.output_phases.iter().enumerate() {
            out.push(CircuitElement::new(ElementKind::PhaseShift {
                theta: *theta,
                mode: mode_offset + i,
            }));
        }
        out
    }
}

/// Applies `A(cell)` on rails `(pair, pair+1)` by left-multiplication.
fn left_apply_cell(m: &mut CMat, cell: &MeshCell) {
    let delta = cell.internal_phi / 2.0;
    let (s, c) = delta.sin_cos();
    let ph = C64::new(0.0, -cell.external_theta).exp();
    let (i, j) = (cell.pair, cell.pair + 1);
    for col in 0..m.ncols() {
        let top = m[(i, col)];
        let bot = m[(j, col)];
        m[(i, col)] = c * ph * top + s * bot;
        m[(j, col)] = -s * ph * top + c * bot;
    }
}

/// A recorded nulling operation: parameters of the `A(delta, gamma)` cell
/// that (inverted) undoes it.
#[derive(Debug, Clone, Copy)]
struct NullOp {
    pair: usize,
    delta: f64,
    gamma: f64,
}

/// Right-multiplies the work matrix by `A(delta, gamma)^dagger` on columns
/// `(pair, pair+1)`.
fn right_apply_dagger(m: &mut CMat, op: &NullOp) {
    let (s, c) = op.delta.sin_cos();
    let ph = C64::new(0.0, op.gamma).exp();
    let (i, j) = (op.pair, op.pair + 1);
    for row in 0..m.nrows() {
        let left = m[(row, i)];
        let right = m[(row, j)];
        m[(row, i)] = c * ph * left + s * right;
        m[(row, j)] = -s * ph * left + c * right;
    }
}

/// Left-multiplies the work matrix by `A(delta, gamma)` on rows
/// `(pair, pair+1)`.
fn left_apply(m: &mut CMat, op: &NullOp) {
    let (s, c) = op.delta.sin_cos();
    let ph = C64::new(0.0, -op.gamma).exp();
    let (i, j) = (op.pair, op.pair + 1);
    for col in 0..m.ncols() {
        let top = m[(i, col)];
        let bot = m[(j, col)];
        m[(i, col)] = c * ph * top + s * bot;
        m[(j, col)] = -s * ph * top + c * bot;
    }
}

fn arg_or_zero(z: C64) -> f64 {
    if z.norm() == 0.0 {
        0.0
    } else {
        z.arg()
    }
}

/// Wraps an angle to `[0, 2 pi)`.
fn wrap_2pi(theta: f64) -> f64 {
    theta.rem_euclid(2.0 * PI)
}

/// Factors a unitary into the chosen mesh. Cells are returned in
/// application order; output phases come last.
pub fn mesh_decompose(zeta: &CMat, scheme: MeshScheme) -> Result<MeshDecomposition> {
    let n = zeta.nrows();
    if n == 0 {
        return Err(Error::ZeroModes);
    }
    if zeta.ncols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            actual: zeta.ncols(),
        });
    }
    let defect = unitarity_defect(zeta);
    if defect > UNITARY_TOL {
        return Err(Error::NotUnitary { defect });
    }
    match scheme {
        MeshScheme::Triangular => decompose_triangular(zeta),
        MeshScheme::Rectangular => decompose_rectangular(zeta),
    }
}

/// Triangular scheme: for each row top-down, null entries right-to-left
/// with column operations. Each operation `M = A^dagger` satisfies
/// `zeta M_1 ... M_K = D`, so `zeta = D A_K ... A_1` and the collected
/// cells are already in application order.
fn decompose_triangular(zeta: &CMat) -> Result<MeshDecomposition> {
    let n = zeta.nrows();
    let mut work = zeta.clone();
    let mut cells = Vec::with_capacity(n * (n - 1) / 2);
    for r in 0..n.saturating_sub(1) {
        for c in (r + 1..n).rev() {
            // null work[r, c] against work[r, c-1] using columns (c-1, c)
            let a = work[(r, c - 1)];
            let b = work[(r, c)];
            let op = NullOp {
                pair: c - 1,
                delta: f64::atan2(b.norm(), a.norm()),
                gamma: arg_or_zero(b * a.conj()),
            };
            right_apply_dagger(&mut work, &op);
            cells.push(MeshCell {
                pair: op.pair,
                internal_phi: 2.0 * op.delta,
                external_theta: wrap_2pi(op.gamma),
            });
        }
    }
    let output_phases = diagonal_phases(&work)?;
    Ok(MeshDecomposition {
        n,
        scheme: MeshScheme::Triangular,
        cells,
        output_phases,
    })
}

/// Rectangular scheme: anti-diagonals of the lower triangle are nulled in
/// sweeps, odd sweeps by column operations from the right, even sweeps by
/// row operations from the left, giving `L_p ... L_1 zeta R_1 ... R_q = D`.
/// The left factors are then commuted through `D` to put every cell on the
/// input side of the phase layer.
fn decompose_rectangular(zeta: &CMat) -> Result<MeshDecomposition> {
    let n = zeta.nrows();
    let mut work = zeta.clone();
    let mut right_ops = Vec::new();
    let mut left_ops = Vec::new();
    for k in 1..n {
        if k % 2 == 1 {
            for j in 0..k {
                // null work[n-1-j, k-1-j] against the column to its right
                let (r, c) = (n - 1 - j, k - 1 - j);
                let a = work[(r, c)];
                let b = work[(r, c + 1)];
                let op = NullOp {
                    pair: c,
                    delta: f64::atan2(a.norm(), b.norm()),
                    gamma: arg_or_zero(-b * a.conj()),
                };
                right_apply_dagger(&mut work, &op);
                right_ops.push(op);
            }
        } else {
            for j in 1..=k {
                // null work[n+j-k-1, j-1] against the row above it
                let (r, c) = (n + j - k - 1, j - 1);
                let x = work[(r - 1, c)];
                let y = work[(r, c)];
                let op = NullOp {
                    pair: r - 1,
                    delta: f64::atan2(y.norm(), x.norm()),
                    gamma: -arg_or_zero(y * x.conj()),
                };
                left_apply(&mut work, &op);
                left_ops.push(op);
            }
        }
    }
    let mut phases = diagonal_phases_raw(&work)?;
    let mut cells: Vec<MeshCell> = right_ops
        .iter()
        .map(|op| MeshCell {
            pair: op.pair,
            internal_phi: 2.0 * op.delta,
            external_theta: wrap_2pi(op.gamma),
        })
        .collect();
    // Walk each left factor through the phase layer, last collected first:
    // A^dagger(d, g) diag(e^{ia}, e^{ib}) = diag(e^{i(g+b+pi)}, e^{ib})
    //                                       A(d, b - a + pi).
    for op in left_ops.iter().rev() {
        let (m, m1) = (op.pair, op.pair + 1);
        let (a, b) = (phases[m], phases[m1]);
        if op.delta == 0.0 {
            // bar cell: its phase commutes straight into the layer
            phases[m] = op.gamma + a;
            cells.push(MeshCell {
                pair: op.pair,
                internal_phi: 0.0,
                external_theta: 0.0,
            });
        } else {
            phases[m] = op.gamma + b + PI;
            cells.push(MeshCell {
                pair: op.pair,
                internal_phi: 2.0 * op.delta,
                external_theta: wrap_2pi(b - a + PI),
            });
        }
    }
    let output_phases = phases.iter().map(|a| wrap_2pi(-a)).collect();
    Ok(MeshDecomposition {
        n,
        scheme: MeshScheme::Rectangular,
        cells,
        output_phases,
    })
}

/// Arguments of the diagonal of a matrix that should be a unit-modulus
/// diagonal; errors if residual off-diagonal weight remains.
fn diagonal_phases_raw(work: &CMat) -> Result<Vec<f64>> {
    let n = work.nrows();
    for i in 0..n {
        for j in 0..n {
            if i != j && work[(i, j)].norm() > 1e-7 {
                return Err(Error::Numerical(format!(
                    "mesh nulling left residual {:.3e} at ({i}, {j})",
                    work[(i, j)].norm()
                )));
            }
        }
    }
    Ok((0..n).map(|i| work[(i, i)].arg()).collect())
}

/// Output phase settings realizing the diagonal: `P(theta) = e^{-i theta}`
/// means `theta = -arg(D_ii)`.
fn diagonal_phases(work: &CMat) -> Result<Vec<f64>> {
    Ok(diagonal_phases_raw(work)?
        .iter()
        .map(|a| wrap_2pi(-a))
        .collect())
}
