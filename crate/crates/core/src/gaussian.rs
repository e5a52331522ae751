//! Phase-space representation of multimode Gaussian states and the
//! symplectic maps that optical elements apply to them.
//!
//! Quadratures are ordered `x1, p1, x2, p2, ...` and the vacuum has
//! covariance `I/2` (so `<dX^2> = <dP^2> = 1/2` at `r = 0`).

use nalgebra::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{symplectic_eigenvalues, symplecticity_defect, RMat, RVec};

pub type C64 = Complex<f64>;

/// Tolerance for symplecticity and symmetry defects of constructed maps.
pub const SYMPLECTIC_TOL: f64 = 1e-10;
/// Slack allowed below the uncertainty bound `nu >= 1/2`.
pub const UNCERTAINTY_TOL: f64 = 1e-9;

/// A Gaussian state: quadrature mean vector and covariance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    n_modes: usize,
    mean: RVec,
    cov: RMat,
}

impl GaussianState {
    /// Vacuum in `n_modes` modes: zero mean, covariance `I/2`.
    pub fn vacuum(n_modes: usize) -> Result<Self> {
        if n_modes == 0 {
            return Err(Error::ZeroModes);
        }
        Ok(Self {
            n_modes,
            mean: RVec::zeros(2 * n_modes),
            cov: RMat::identity(2 * n_modes, 2 * n_modes) * 0.5,
        })
    }

    /// Builds a state from raw moments, validating shape, symmetry and the
    /// uncertainty relation.
    pub fn from_parts(mean: RVec, cov: RMat) -> Result<Self> {
        let dim = mean.len();
        if dim == 0 || dim % 2 != 0 {
            return Err(Error::DimensionMismatch {
                expected: dim + dim % 2,
                actual: dim,
            });
        }
        if cov.nrows() != dim || cov.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: cov.nrows().max(cov.ncols()),
            });
        }
        let defect = (&cov - cov.transpose()).amax();
        if defect > SYMPLECTIC_TOL {
            return Err(Error::NotSymmetric { defect });
        }
        let state = Self {
            n_modes: dim / 2,
            mean,
            cov: symmetrize(&cov),
        };
        state.validate()?;
        Ok(state)
    }

    /// Checks the uncertainty relation: all symplectic eigenvalues of the
    /// covariance must be at least `1/2` up to tolerance.
    pub fn validate(&self) -> Result<()> {
        let nus = symplectic_eigenvalues(&self.cov);
        let nu_min = nus.iter().cloned().fold(f64::INFINITY, f64::min);
        if nu_min < 0.5 - UNCERTAINTY_TOL {
            return Err(Error::UncertaintyViolation { nu_min });
        }
        Ok(())
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn mean(&self) -> &RVec {
        &self.mean
    }

    pub fn cov(&self) -> &RMat {
        &self.cov
    }

    /// `det(2 cov)`, equal to 1 for pure states and larger for mixed ones.
    pub fn purity_det(&self) -> f64 {
        (self.cov.clone() * 2.0).determinant()
    }

    /// Mean photon number of one mode.
    pub fn mode_photon_number(&self, mode: usize) -> Result<f64> {
        self.check_mode(mode)?;
        let (x, p) = (2 * mode, 2 * mode + 1);
        let var = self.cov[(x, x)] + self.cov[(p, p)];
        let amp = self.mean[x].powi(2) + self.mean[p].powi(2);
        Ok((var - 1.0 + amp) / 2.0)
    }

    /// Keeps only the listed modes (partial trace over the rest).
    pub fn reduced(&self, keep: &[usize]) -> Result<Self> {
        for &m in keep {
            self.check_mode(m)?;
        }
        let idx: Vec<usize> = keep.iter().flat_map(|&m| [2 * m, 2 * m + 1]).collect();
        let mean = RVec::from_fn(idx.len(), |i, _| self.mean[idx[i]]);
        let cov = RMat::from_fn(idx.len(), idx.len(), |i, j| self.cov[(idx[i], idx[j])]);
        Ok(Self {
            n_modes: keep.len(),
            mean,
            cov,
        })
    }

    /// Wigner function value at a phase-space point.
    pub fn wigner(&self, point: &RVec) -> Result<f64> {
        let dim = 2 * self.n_modes;
        if point.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                actual: point.len(),
            });
        }
        let chol = self
            .cov
            .clone()
            .cholesky()
            .ok_or(Error::SingularCovariance)?;
        let delta = point - &self.mean;
        let quad = delta.dot(&chol.solve(&delta));
        let det = chol.determinant();
        Ok((-0.5 * quad).exp() / ((2.0 * std::f64::consts::PI).powi(self.n_modes as i32) * det.sqrt()))
    }

    fn check_mode(&self, mode: usize) -> Result<()> {
        if mode >= self.n_modes {
            return Err(Error::ModeOutOfRange {
                mode,
                n_modes: self.n_modes,
            });
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct GaussianStateRepr {
    n_modes: usize,
    mean: Vec<f64>,
    cov: Vec<Vec<f64>>,
}

impl Serialize for GaussianState {
    fn serialize<S: serde::Serializer>(&self, ser: S) -> std::result::Result<S::Ok, S::Error> {
        let dim = 2 * self.n_modes;
        GaussianStateRepr {
            n_modes: self.n_modes,
            mean: self.mean.iter().cloned().collect(),
            cov: (0..dim)
                .map(|r| (0..dim).map(|c| self.cov[(r, c)]).collect())
                .collect(),
        }
        .serialize(ser)
    }
}

impl<'de> Deserialize<'de> for GaussianState {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let repr = GaussianStateRepr::deserialize(de)?;
        let dim = 2 * repr.n_modes;
        if repr.mean.len() != dim || repr.cov.len() != dim || repr.cov.iter().any(|r| r.len() != dim)
        {
            return Err(serde::de::Error::custom(format!(
                "moment shapes do not match {} modes",
                repr.n_modes
            )));
        }
        let mean = RVec::from_vec(repr.mean);
        let cov = RMat::from_fn(dim, dim, |r, c| repr.cov[r][c]);
        GaussianState::from_parts(mean, cov).map_err(serde::de::Error::custom)
    }
}

/// A Gaussian unitary in phase space: `mean -> S mean + shift`,
/// `cov -> S cov S^T`.
#[derive(Debug, Clone)]
pub struct SymplecticOp {
    matrix: RMat,
    shift: RVec,
}

impl SymplecticOp {
    /// Wraps a raw symplectic matrix and shift, validating symplecticity.
    pub fn new(matrix: RMat, shift: RVec) -> Result<Self> {
        let dim = matrix.nrows();
        if dim == 0 || dim % 2 != 0 || matrix.ncols() != dim || shift.len() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim.max(2),
                actual: matrix.ncols().max(shift.len()),
            });
        }
        let defect = symplecticity_defect(&matrix);
        if defect > SYMPLECTIC_TOL {
            return Err(Error::Numerical(format!(
                "matrix is not symplectic (defect {defect:.3e})"
            )));
        }
        Ok(Self { matrix, shift })
    }

    pub fn identity(n_modes: usize) -> Self {
        Self {
            matrix: RMat::identity(2 * n_modes, 2 * n_modes),
            shift: RVec::zeros(2 * n_modes),
        }
    }

    /// Single-mode squeezer with squeezing `r >= 0` along an axis rotated by
    /// `phi`: at `phi = 0` the x variance becomes `e^{-2r}/2` on vacuum.
    pub fn squeezer(r: f64, phi: f64, mode: usize, n_modes: usize) -> Result<Self> {
        if r < 0.0 {
            return Err(Error::NegativeSqueezing(r));
        }
        check_mode(mode, n_modes)?;
        let (s, c) = phi.sin_cos();
        // R_ccw(phi) diag(e^-r, e^r) R_ccw(phi)^T
        let (em, ep) = ((-r).exp(), r.exp());
        let block = [
            [c * c * em + s * s * ep, c * s * (em - ep)],
            [c * s * (em - ep), s * s * em + c * c * ep],
        ];
        Ok(Self::from_mode_block(&block, mode, n_modes))
    }

    /// Clockwise rotation of one mode's (x, p) plane; on mode operators this
    /// is `a -> e^{-i theta} a`.
    pub fn rotation(theta: f64, mode: usize, n_modes: usize) -> Result<Self> {
        check_mode(mode, n_modes)?;
        let (s, c) = theta.sin_cos();
        let block = [[c, s], [-s, c]];
        Ok(Self::from_mode_block(&block, mode, n_modes))
    }

    /// Two-mode mixer with cross-coupling power `eta`: mode matrix
    /// `[[sqrt(1-eta), sqrt(eta)], [-sqrt(eta), sqrt(1-eta)]]` (real, no
    /// cross phases). `eta = 1` exchanges the modes up to sign.
    pub fn beamsplitter(eta: f64, modes: (usize, usize), n_modes: usize) -> Result<Self> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::OutOfRange {
                name: "eta",
                value: eta,
                lo: 0.0,
                hi: 1.0,
            });
        }
        let (j, k) = modes;
        check_mode(j, n_modes)?;
        check_mode(k, n_modes)?;
        if j == k {
            return Err(Error::DegenerateModePair(j, k));
        }
        let c = (1.0 - eta).sqrt();
        let s = eta.sqrt();
        let mut m = RMat::identity(2 * n_modes, 2 * n_modes);
        for q in 0..2 {
            m[(2 * j + q, 2 * j + q)] = c;
            m[(2 * j + q, 2 * k + q)] = s;
            m[(2 * k + q, 2 * j + q)] = -s;
            m[(2 * k + q, 2 * k + q)] = c;
        }
        Ok(Self {
            matrix: m,
            shift: RVec::zeros(2 * n_modes),
        })
    }

    /// Displacement by a complex amplitude per mode; a coherent state `|a>`
    /// has mean `(sqrt(2) Re a, sqrt(2) Im a)`.
    pub fn displacement(alphas: &[C64]) -> Self {
        let n = alphas.len();
        let mut shift = RVec::zeros(2 * n);
        for (k, a) in alphas.iter().enumerate() {
            shift[2 * k] = std::f64::consts::SQRT_2 * a.re;
            shift[2 * k + 1] = std::f64::consts::SQRT_2 * a.im;
        }
        Self {
            matrix: RMat::identity(2 * n, 2 * n),
            shift,
        }
    }

    /// Displacement of a single mode inside a larger register.
    pub fn displacement_mode(alpha: C64, mode: usize, n_modes: usize) -> Result<Self> {
        check_mode(mode, n_modes)?;
        let mut alphas = vec![C64::new(0.0, 0.0); n_modes];
        alphas[mode] = alpha;
        Ok(Self::displacement(&alphas))
    }

    /// `other` after `self` (i.e. `other . self` as maps).
    pub fn then(&self, other: &SymplecticOp) -> Result<SymplecticOp> {
        if other.matrix.nrows() != self.matrix.nrows() {
            return Err(Error::DimensionMismatch {
                expected: self.matrix.nrows(),
                actual: other.matrix.nrows(),
            });
        }
        Ok(SymplecticOp {
            matrix: &other.matrix * &self.matrix,
            shift: &other.matrix * &self.shift + &other.shift,
        })
    }

    pub fn matrix(&self) -> &RMat {
        &self.matrix
    }

    pub fn shift(&self) -> &RVec {
        &self.shift
    }

    /// Applies the map to a state, re-symmetrizing the covariance.
    pub fn apply(&self, state: &GaussianState) -> Result<GaussianState> {
        if self.matrix.nrows() != 2 * state.n_modes {
            return Err(Error::DimensionMismatch {
                expected: 2 * state.n_modes,
                actual: self.matrix.nrows(),
            });
        }
        let mean = &self.matrix * &state.mean + &self.shift;
        let cov = symmetrize(&(&self.matrix * &state.cov * self.matrix.transpose()));
        Ok(GaussianState {
            n_modes: state.n_modes,
            mean,
            cov,
        })
    }

    fn from_mode_block(block: &[[f64; 2]; 2], mode: usize, n_modes: usize) -> Self {
        let mut m = RMat::identity(2 * n_modes, 2 * n_modes);
        for r in 0..2 {
            for c in 0..2 {
                m[(2 * mode + r, 2 * mode + c)] = block[r][c];
            }
        }
        Self {
            matrix: m,
            shift: RVec::zeros(2 * n_modes),
        }
    }
}

fn check_mode(mode: usize, n_modes: usize) -> Result<()> {
    if mode >= n_modes {
        return Err(Error::ModeOutOfRange { mode, n_modes });
    }
    Ok(())
}

fn symmetrize(m: &RMat) -> RMat {
    (m + m.transpose()) * 0.5
}

/// Pure loss with intensity transmission `tau` on one mode: the mean scales
/// by `sqrt(tau)` and the covariance relaxes toward vacuum.
pub fn loss_channel(state: &GaussianState, tau: f64, mode: usize) -> Result<GaussianState> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::OutOfRange {
            name: "tau",
            value: tau,
            lo: 0.0,
            hi: 1.0,
        });
    }
    if mode >= state.n_modes {
        return Err(Error::ModeOutOfRange {
            mode,
            n_modes: state.n_modes,
        });
    }
    let rt = tau.sqrt();
    let (x, p) = (2 * mode, 2 * mode + 1);
    let mut mean = state.mean.clone();
    mean[x] *= rt;
    mean[p] *= rt;
    let mut cov = state.cov.clone();
    for q in [x, p] {
        for c in 0..cov.ncols() {
            cov[(q, c)] *= rt;
        }
        for r in 0..cov.nrows() {
            cov[(r, q)] *= rt;
        }
    }
    cov[(x, x)] += (1.0 - tau) * 0.5;
    cov[(p, p)] += (1.0 - tau) * 0.5;
    Ok(GaussianState {
        n_modes: state.n_modes,
        mean,
        cov: symmetrize(&cov),
    })
}

/// Uhlmann fidelity of a pure Gaussian target against an arbitrary Gaussian
/// state, via the closed-form overlap
/// `exp(-delta^T (s1+s2)^{-1} delta / 2) / sqrt(det(s1+s2))`.
pub fn fidelity(pure_target: &GaussianState, actual: &GaussianState) -> Result<f64> {
    if pure_target.n_modes != actual.n_modes {
        return Err(Error::DimensionMismatch {
            expected: 2 * pure_target.n_modes,
            actual: 2 * actual.n_modes,
        });
    }
    let det = pure_target.purity_det();
    if (det - 1.0).abs() > 1e-6 {
        return Err(Error::NotPure { det });
    }
    let sum = &pure_target.cov + &actual.cov;
    let chol = sum.cholesky().ok_or(Error::SingularCovariance)?;
    let delta = &pure_target.mean - &actual.mean;
    let quad = delta.dot(&chol.solve(&delta));
    Ok(((-0.5 * quad).exp() / chol.determinant().sqrt()).clamp(0.0, 1.0))
}

/// Squeezing strength in dB: `20 r log10(e)`.
pub fn squeezing_db(r: f64) -> f64 {
    20.0 * r * std::f64::consts::LOG10_E
}

/// Inverse of [`squeezing_db`].
pub fn db_to_r(db: f64) -> f64 {
    db / (20.0 * std::f64::consts::LOG10_E)
}

/// Measurable squeezing left after transmitting an `s0_db` squeezed mode
/// through intensity transmission `t`, in positive dB:
/// `-10 log10(t 10^{-s0/10} + 1 - t)`. The `t = 0` and `t = 1` limits are
/// returned exactly.
pub fn squeezing_after_loss(s0_db: f64, t: f64) -> Result<f64> {
    if s0_db < 0.0 {
        return Err(Error::OutOfRange {
            name: "s0_db",
            value: s0_db,
            lo: 0.0,
            hi: f64::INFINITY,
        });
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::OutOfRange {
            name: "transmission",
            value: t,
            lo: 0.0,
            hi: 1.0,
        });
    }
    if t == 0.0 {
        return Ok(0.0);
    }
    if t == 1.0 {
        return Ok(s0_db);
    }
    Ok(-10.0 * (t * 10f64.powf(-s0_db / 10.0) + (1.0 - t)).log10())
}

/// Evaluation grid for Wigner slices: `n` points from `lo` to `hi`
/// inclusive.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
}

impl GridSpec {
    pub fn points(&self) -> Vec<f64> {
        if self.n == 1 {
            return vec![self.lo];
        }
        let step = (self.hi - self.lo) / (self.n - 1) as f64;
        (0..self.n).map(|i| self.lo + step * i as f64).collect()
    }
}

/// A two-axis Wigner slice: `values[row * cols + col]` is the Wigner function
/// at `axis_i = xs[col]`, `axis_j = ys[row]`, other quadratures held at the
/// base point.
#[derive(Debug, Clone)]
pub struct WignerSlice {
    pub axis_i: usize,
    pub axis_j: usize,
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub values: Vec<f64>,
}

/// Evaluates the Wigner function on a grid over two quadrature axes, holding
/// the remaining quadratures at `base` (which may be the state mean).
pub fn wigner_slice(
    state: &GaussianState,
    axes: (usize, usize),
    base: &RVec,
    grid_i: GridSpec,
    grid_j: GridSpec,
) -> Result<WignerSlice> {
    let dim = 2 * state.n_modes();
    let (ai, aj) = axes;
    if ai == aj {
        return Err(Error::DegenerateModePair(ai, aj));
    }
    if ai >= dim || aj >= dim || base.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: base.len().max(ai + 1).max(aj + 1),
        });
    }
    if grid_i.n < 2 || grid_j.n < 2 {
        return Err(Error::Numerical("wigner grid must have at least 2 points per axis".into()));
    }
    let xs = grid_i.points();
    let ys = grid_j.points();
    let mut values = Vec::with_capacity(xs.len() * ys.len());
    let mut point = base.clone();
    for &y in &ys {
        for &x in &xs {
            point[ai] = x;
            point[aj] = y;
            values.push(state.wigner(&point)?);
        }
    }
    Ok(WignerSlice {
        axis_i: ai,
        axis_j: aj,
        xs,
        ys,
        values,
    })
}
