//! Compilation of pure Gaussian targets into circuit programs: factor the
//! covariance into per-mode squeezers plus a mode-mixing unitary, realize
//! the unitary as a cell mesh, and realize the displacement by skimming a
//! strong ancilla beam onto the signal rails through weak couplers.

use nalgebra::SymmetricEigen;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::circuit::{
    apply_loss_model, simulate, AncillaInjection, CircuitElement, CircuitProgram, ElementKind,
    LossModel, VoltageFrame, DEFAULT_ALPHA0, ETA_MAX, R_MAX,
};
use crate::error::{Error, Result};
use crate::gaussian::{fidelity, C64, GaussianState, SymplecticOp};
use crate::linalg::{
    embed_unitary, extract_unitary, symplectic_form, symplecticity_defect, unitarity_defect, CMat,
    RMat, RVec,
};
use crate::mesh::{mesh_decompose, MeshScheme};

/// Serializes `Vec<C64>` as a list of `[re, im]` pairs.
mod complex_vec {
    use super::C64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[C64], ser: S) -> Result<S::Ok, S::Error> {
        v.iter()
            .map(|z| [z.re, z.im])
            .collect::<Vec<_>>()
            .serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<Vec<C64>, D::Error> {
        Ok(Vec::<[f64; 2]>::deserialize(de)?
            .into_iter()
            .map(|[re, im]| C64::new(re, im))
            .collect())
    }
}

/// Serializes a complex matrix as nested rows of `[re, im]` pairs.
mod complex_mat {
    use super::{C64, CMat};
    use serde::{de::Error as _, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &CMat, ser: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<[f64; 2]>> = (0..m.nrows())
            .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
            .collect();
        rows.serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<CMat, D::Error> {
        let rows = Vec::<Vec<[f64; 2]>>::deserialize(de)?;
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(D::Error::custom("matrix rows must all have equal length"));
        }
        Ok(CMat::from_fn(n, n, |i, j| {
            C64::new(rows[i][j][0], rows[i][j][1])
        }))
    }
}

/// A pure Gaussian target in factored form: per-mode displacements `alpha`,
/// a mode-mixing unitary `zeta`, and per-mode squeeze strengths `r` (axis
/// along x), composed as displace(alpha) * mix(zeta) * squeeze(r) |vac>.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GaussianTarget {
    pub n_modes: usize,
    #[serde(with = "complex_vec")]
    pub alpha: Vec<C64>,
    #[serde(with = "complex_mat")]
    pub zeta: CMat,
    pub r: Vec<f64>,
}

impl GaussianTarget {
    pub fn validate(&self) -> Result<()> {
        if self.n_modes == 0 {
            return Err(Error::ZeroModes);
        }
        for (name, len) in [("alpha", self.alpha.len()), ("r", self.r.len())] {
            if len != self.n_modes {
                let _ = name;
                return Err(Error::DimensionMismatch {
                    expected: self.n_modes,
                    actual: len,
                });
            }
        }
        if self.zeta.nrows() != self.n_modes || self.zeta.ncols() != self.n_modes {
            return Err(Error::DimensionMismatch {
                expected: self.n_modes,
                actual: self.zeta.nrows(),
            });
        }
        for &r in &self.r {
            if r < 0.0 {
                return Err(Error::NegativeSqueezing(r));
            }
        }
        let defect = unitarity_defect(&self.zeta);
        if defect > 1e-8 {
            return Err(Error::NotUnitary { defect });
        }
        Ok(())
    }

    /// Synthesizes the target state.
    pub fn state(&self) -> Result<GaussianState> {
        self.validate()?;
        let n = self.n_modes;
        let mut state = GaussianState::vacuum(n)?;
        for (k, &r) in self.r.iter().enumerate() {
            state = SymplecticOp::squeezer(r, 0.0, k, n)?.apply(&state)?;
        }
        state = SymplecticOp::new(embed_unitary(&self.zeta), RVec::zeros(2 * n))?.apply(&state)?;
        SymplecticOp::displacement(&self.alpha).apply(&state)
    }
}

/// Eigenvalues of `2 cov` this close to 1 are treated as unsqueezed modes.
const UNIT_EIGEN_TOL: f64 = 1e-7;
/// Acceptable distance of `det(2 cov)` from 1 for a pure state.
const PURITY_TOL: f64 = 1e-6;

/// Factors a pure Gaussian state into squeezers, a mixing unitary and
/// displacements. Squeeze strengths come out descending, unsqueezed modes
/// last. The factoring is unique only up to gauge on degenerate strengths;
/// resynthesizing through [`GaussianTarget::state`] always reproduces the
/// input state.
pub fn decompose_pure_state(state: &GaussianState) -> Result<GaussianTarget> {
    let n = state.n_modes();
    let g = state.cov() * 2.0;
    let det = state.purity_det();
    if (det - 1.0).abs() > PURITY_TOL {
        return Err(Error::NotPure { det });
    }
    let omega = symplectic_form(n);
    let eigen = SymmetricEigen::new(g.clone());

    // split the spectrum: lambda < 1 are squeezed-axis directions, their
    // partners at 1/lambda are derived as -omega v, the rest sit at 1
    let mut order: Vec<usize> = (0..2 * n).collect();
    order.sort_by(|&a, &b| {
        eigen.eigenvalues[a]
            .partial_cmp(&eigen.eigenvalues[b])
            .unwrap()
    });
    let mut squeezed: Vec<(f64, RVec)> = Vec::new();
    let mut bucket: Vec<RVec> = Vec::new();
    let mut n_large = 0usize;
    for &i in &order {
        let lam = eigen.eigenvalues[i];
        let v: RVec = eigen.eigenvectors.column(i).into();
        if lam < 1.0 - UNIT_EIGEN_TOL {
            squeezed.push((lam, v));
        } else if lam > 1.0 + UNIT_EIGEN_TOL {
            n_large += 1;
        } else {
            bucket.push(v);
        }
    }
    if n_large != squeezed.len() || bucket.len() + 2 * squeezed.len() != 2 * n {
        return Err(Error::Numerical(format!(
            "eigenvalues of a pure covariance must pair as (x, 1/x): \
             {} below 1, {} above 1, {} near 1",
            squeezed.len(),
            n_large,
            bucket.len()
        )));
    }

    let mut o = RMat::zeros(2 * n, 2 * n);
    let mut r = Vec::with_capacity(n);
    for (k, (lam, v)) in squeezed.iter().enumerate() {
        r.push(-0.5 * lam.ln());
        let p = -(&omega * v);
        o.column_mut(2 * k).copy_from(v);
        o.column_mut(2 * k + 1).copy_from(&p);
    }
    // unsqueezed subspace: pair the remaining directions symplectically
    let mut k = squeezed.len();
    while !bucket.is_empty() {
        if k >= n {
            return Err(Error::Numerical(
                "unsqueezed subspace pairing overran the mode count".into(),
            ));
        }
        let u = bucket.remove(0);
        let w = -(&omega * &u);
        o.column_mut(2 * k).copy_from(&u);
        o.column_mut(2 * k + 1).copy_from(&w);
        r.push(0.0);
        k += 1;
        // re-orthonormalize the rest against the chosen pair, dropping the
        // one dependent direction the pair consumed
        let mut next: Vec<RVec> = Vec::with_capacity(bucket.len().saturating_sub(1));
        for mut b in bucket {
            b -= b.dot(&w) * &w;
            for a in &next {
                let coeff = b.dot(a);
                b -= coeff * a;
            }
            let norm = b.norm();
            if norm > 1e-6 {
                next.push(b / norm);
            }
        }
        bucket = next;
    }
    if k != n {
        return Err(Error::Numerical(
            "unsqueezed subspace pairing lost a direction".into(),
        ));
    }

    let sdef = symplecticity_defect(&o);
    if sdef > 1e-6 {
        return Err(Error::Numerical(format!(
            "recovered mode basis is not symplectic (defect {sdef:.3e})"
        )));
    }
    let zeta = extract_unitary(&o, 1e-6)?;

    // defensive: the factors must rebuild the covariance
    let d = RMat::from_fn(2 * n, 2 * n, |i, j| {
        if i != j {
            0.0
        } else {
            let rk = r[i / 2];
            if i % 2 == 0 {
                (-2.0 * rk).exp()
            } else {
                (2.0 * rk).exp()
            }
        }
    });
    let rebuilt = &o * d * o.transpose();
    let resid = (&rebuilt - &g).amax();
    if resid > 1e-5 {
        return Err(Error::Numerical(format!(
            "covariance refactoring residual {resid:.3e}"
        )));
    }

    let alpha = (0..n)
        .map(|j| C64::new(state.mean()[2 * j], state.mean()[2 * j + 1]) / 2f64.sqrt())
        .collect();
    Ok(GaussianTarget {
        n_modes: n,
        alpha,
        zeta,
        r,
    })
}

/// One displacement stage: beam phase `chi` and skim coupling `eta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CascadeStage {
    pub chi: f64,
    pub eta: f64,
}

/// Solved displacement cascade: per-stage settings plus the beam amplitude
/// left on the exit rail.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadeSolution {
    pub stages: Vec<CascadeStage>,
    pub final_beam: C64,
}

/// Wraps an angle to `(-pi, pi]`.
fn wrap_pm_pi(theta: f64) -> f64 {
    let t = theta.rem_euclid(2.0 * PI);
    if t > PI {
        t - 2.0 * PI
    } else {
        t
    }
}

/// Solves the stage settings that deposit displacement `alpha[k]` on signal
/// rail `k` from a beam of amplitude `alpha0`. Stage `k` phases the beam by
/// `chi_k` and skims `sqrt(eta_k)` of it onto the signal; the rest crosses
/// to the next rail with a sign flip, so the running beam amplitude obeys
/// `beta_k = -sqrt(1 - eta_k) e^{-i chi_k} beta_{k-1}`.
pub fn solve_cascade(alpha: &[C64], alpha0: f64) -> Result<CascadeSolution> {
    if alpha0 < 0.0 {
        return Err(Error::OutOfRange {
            name: "alpha0",
            value: alpha0,
            lo: 0.0,
            hi: f64::INFINITY,
        });
    }
    let mut beam = C64::new(alpha0, 0.0);
    let mut stages = Vec::with_capacity(alpha.len());
    for (k, &a) in alpha.iter().enumerate() {
        let need = a.norm();
        let have = beam.norm();
        if need == 0.0 {
            stages.push(CascadeStage { chi: 0.0, eta: 0.0 });
            beam = -beam;
            continue;
        }
        if need > have {
            return Err(Error::CascadeInfeasible {
                stage: k + 1,
                required: need,
                available: have,
            });
        }
        let eta = (need / have).powi(2);
        let chi = wrap_pm_pi(beam.arg() - a.arg());
        stages.push(CascadeStage { chi, eta });
        beam = -(1.0 - eta).sqrt() * C64::new(0.0, -chi).exp() * beam;
    }
    Ok(CascadeSolution {
        stages,
        final_beam: beam,
    })
}

/// Fidelity targets with tabulated skim budgets.
const ETA_BUDGET_TABLE: [(f64, (f64, f64, f64)); 2] = [
    (0.95, (-30.35, 0.39, 16.11)),
    (0.98, (-40.61, 0.29, 22.15)),
];

/// Largest skim coupling, in dB, that keeps the compiled state's fidelity
/// at or above `level` for squeeze strengths up to `r_max`. The bound
/// follows the fitted power law `a r^b + c`.
pub fn eta_budget_db(r_max: f64, level: f64) -> Result<f64> {
    if r_max < 0.0 {
        return Err(Error::NegativeSqueezing(r_max));
    }
    for (lvl, (a, b, c)) in ETA_BUDGET_TABLE {
        if (level - lvl).abs() < 1e-12 {
            return Ok(a * r_max.powf(b) + c);
        }
    }
    Err(Error::UnsupportedFidelityLevel(level))
}

/// Compilation settings.
#[derive(Debug, Clone)]
pub struct CompileOptions {
    /// Ancilla beam amplitude (real).
    pub alpha0: f64,
    /// Mesh geometry for the mixing unitary.
    pub scheme: MeshScheme,
    /// When set, check every skim coupling against the fidelity budget for
    /// this level and warn on violations.
    pub fidelity_level: Option<f64>,
    /// When set and nonzero, also emit a loss-inserted program with the
    /// skim couplings re-tuned to restore the nominal output displacement.
    pub loss: Option<LossModel>,
}

impl Default for CompileOptions {
    fn default() -> Self {
        Self {
            alpha0: DEFAULT_ALPHA0,
            scheme: MeshScheme::Rectangular,
            fidelity_level: None,
            loss: None,
        }
    }
}

/// Summary quantities of a compilation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompileMetadata {
    pub n_modes: usize,
    pub squeeze: Vec<f64>,
    pub cascade: Vec<CascadeStage>,
    pub alpha0: f64,
    pub mesh_cells: usize,
    /// Fidelity of the lossless program output against the target.
    pub achieved_fidelity: f64,
    pub eta_budget_level: Option<f64>,
    pub eta_budget_db: Option<f64>,
}

/// A compiled target: the nominal program, optionally its loss-compensated
/// variant, chip voltages when the target fits the two-mode chip, and any
/// feasibility warnings raised along the way.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CompiledProgram {
    pub program: CircuitProgram,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lossy_program: Option<CircuitProgram>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub voltages: Option<VoltageFrame>,
    pub warnings: Vec<String>,
    pub metadata: CompileMetadata,
}

/// Compiles a target into a program on `n_modes + 1` rails: the beam enters
/// rail 0, signals are prepared on rails 1..=n and exit on rails 0..n, the
/// depleted beam exits on the last rail.
pub fn compile(target: &GaussianTarget, opts: &CompileOptions) -> Result<CompiledProgram> {
    target.validate()?;
    let n = target.n_modes;
    let mut warnings = Vec::new();

    let mesh = mesh_decompose(&target.zeta, opts.scheme)?;
    let cascade = solve_cascade(&target.alpha, opts.alpha0)?;

    let mut program = CircuitProgram::new(n + 1);
    for (k, &r) in target.r.iter().enumerate() {
        program.elements.push(CircuitElement::labeled(
            ElementKind::Squeezer {
                r,
                phi: 0.0,
                mode: k + 1,
            },
            format!("sq_{}", k + 1),
        ));
    }
    for (i, el) in mesh.elements(1).into_iter().enumerate() {
        let label = match el.kind {
            ElementKind::Mzi { .. } => format!("mesh_{}", i + 1),
            _ => format!("out_phase_{}", i + 1 - mesh.cells.len()),
        };
        program.elements.push(CircuitElement { label: Some(label), ..el });
    }
    for (k, stage) in cascade.stages.iter().enumerate() {
        program.elements.push(CircuitElement::labeled(
            ElementKind::PhaseShift {
                theta: stage.chi,
                mode: k,
            },
            format!("disp_phase_{}", k + 1),
        ));
        program.elements.push(CircuitElement::labeled(
            ElementKind::BeamSplitter {
                eta: 1.0 - stage.eta,
                modes: (k, k + 1),
            },
            format!("disp_coupler_{}", k + 1),
        ));
    }
    program.ancilla = Some(AncillaInjection {
        mode: 0,
        alpha: C64::new(opts.alpha0, 0.0),
    });

    let voltages = if n == 2 {
        match solve_two_mode_voltages(target, &cascade, opts.alpha0) {
            Ok(frame) => Some(frame),
            Err(e) => {
                warnings.push(format!("target does not fit the two-mode chip: {e}"));
                None
            }
        }
    } else {
        None
    };

    let sim = simulate(&program)?;
    let reduced = sim.reduced.as_ref().expect("compiled programs have an ancilla");
    let achieved_fidelity = fidelity(&target.state()?, reduced)?;

    let mut eta_budget = None;
    if let Some(level) = opts.fidelity_level {
        let r_max = target.r.iter().cloned().fold(0.0, f64::max);
        let budget_db = eta_budget_db(r_max, level)?;
        eta_budget = Some(budget_db);
        let limit = 10f64.powf(budget_db / 10.0);
        for (k, stage) in cascade.stages.iter().enumerate() {
            if stage.eta > limit {
                warnings.push(format!(
                    "stage {} skim coupling {:.3e} exceeds the {:.0}% fidelity budget \
                     {:.3e} ({:.2} dB); expected fidelity {:.6}",
                    k + 1,
                    stage.eta,
                    level * 100.0,
                    limit,
                    budget_db,
                    achieved_fidelity
                ));
            }
        }
    }

    let lossy_program = match &opts.loss {
        Some(model) if !model.is_zero() => {
            let lossy = apply_loss_model(&program, model)?;
            Some(compensate_displacement_for_loss(&lossy)?)
        }
        _ => None,
    };

    Ok(CompiledProgram {
        program,
        lossy_program,
        voltages,
        warnings,
        metadata: CompileMetadata {
            n_modes: n,
            squeeze: target.r.clone(),
            cascade: cascade.stages.clone(),
            alpha0: opts.alpha0,
            mesh_cells: mesh.cells.len(),
            achieved_fidelity,
            eta_budget_level: opts.fidelity_level,
            eta_budget_db: eta_budget,
        },
    })
}

/// Solves the chip electrode frame realizing a two-mode target. The chip
/// mixes through a single cell `B(delta)` framed by output phases, so the
/// target unitary is factored as `P(theta) B(delta) Q` with `Q` diagonal;
/// `Q` commutes into the squeezers as an axis shift (squeezers are
/// half-turn periodic in the axis).
fn solve_two_mode_voltages(
    target: &GaussianTarget,
    cascade: &CascadeSolution,
    alpha0: f64,
) -> Result<VoltageFrame> {
    let zeta = &target.zeta;
    let tol = 1e-12;
    let (z11, z21) = (zeta[(0, 0)], zeta[(1, 0)]);
    let delta = f64::atan2(z21.norm(), z11.norm());
    let (theta1, theta2) = if z21.norm() < tol || z11.norm() < tol {
        (0.0, 0.0)
    } else {
        let d = wrap_pm_pi((-z21 / z11).arg());
        if d >= 0.0 {
            (d, 0.0)
        } else {
            (0.0, -d)
        }
    };

    // Q = B(delta)^{-1} P(theta)^{-1} zeta must come out diagonal
    let (s, c) = delta.sin_cos();
    let b_inv = CMat::from_row_slice(
        2,
        2,
        &[
            C64::new(c, 0.0),
            C64::new(-s, 0.0),
            C64::new(s, 0.0),
            C64::new(c, 0.0),
        ],
    );
    let p_inv = CMat::from_diagonal(&nalgebra::DVector::from_vec(vec![
        C64::new(0.0, theta1).exp(),
        C64::new(0.0, theta2).exp(),
    ]));
    let q = b_inv * p_inv * zeta;
    let off = q[(0, 1)].norm().max(q[(1, 0)].norm());
    if off > 1e-9 {
        return Err(Error::Numerical(format!(
            "two-mode factoring left off-diagonal residual {off:.3e}"
        )));
    }
    let phi1 = q[(0, 0)].arg().rem_euclid(PI);
    let phi2 = q[(1, 1)].arg().rem_euclid(PI);

    if cascade.stages.len() != 2 {
        return Err(Error::NoCascadeStage);
    }
    let frame = VoltageFrame {
        v1: target.r[0] / R_MAX,
        v2: phi1 / PI,
        v3: target.r[1] / R_MAX,
        v4: phi2 / PI,
        v5: c * c,
        v6: theta1 / PI,
        v7: theta2 / PI,
        v8: cascade.stages[0].chi / PI,
        v9: cascade.stages[0].eta / ETA_MAX,
        v10: cascade.stages[1].chi / PI,
        v11: cascade.stages[1].eta / ETA_MAX,
        alpha0_mag: alpha0,
    };
    frame.validate()?;
    Ok(frame)
}

const COMPENSATE_MAX_ITER: usize = 200;
const COMPENSATE_TOL: f64 = 1e-12;

/// Re-tunes the skim couplings of a loss-bearing program so the output
/// displacement magnitudes match the nominal (lossless) program. Loss
/// factors are positive reals, so phases survive untouched and magnitude
/// scaling suffices. The nominal coupling of each stage is recorded in the
/// coupler label (`disp_coupler_k@<eta>`), making the operation idempotent;
/// unannotated programs are treated as nominal and get annotated.
pub fn compensate_displacement_for_loss(program: &CircuitProgram) -> Result<CircuitProgram> {
    program.validate()?;
    // locate cascade couplers and their nominal couplings
    let mut couplers: Vec<(usize, usize, f64)> = Vec::new(); // (element index, stage, nominal eta)
    for (i, el) in program.elements.iter().enumerate() {
        let Some(label) = &el.label else { continue };
        let Some(rest) = label.strip_prefix("disp_coupler_") else {
            continue;
        };
        let ElementKind::BeamSplitter { eta, .. } = el.kind else {
            continue;
        };
        let (stage_str, nominal) = match rest.split_once('@') {
            Some((s, e)) => {
                let parsed = e.parse::<f64>().map_err(|_| {
                    Error::Numerical(format!("unparseable nominal coupling in label {label:?}"))
                })?;
                (s, parsed)
            }
            None => (rest, 1.0 - eta),
        };
        let stage: usize = stage_str
            .parse()
            .map_err(|_| Error::Numerical(format!("unparseable stage in label {label:?}")))?;
        couplers.push((i, stage, nominal));
    }
    if couplers.is_empty() {
        return Err(Error::NoCascadeStage);
    }
    couplers.sort_by_key(|&(_, stage, _)| stage);

    // nominal reference: strip loss, restore nominal couplings
    let mut nominal = CircuitProgram {
        n_modes: program.n_modes,
        elements: program
            .elements
            .iter()
            .filter(|el| !matches!(el.kind, ElementKind::Loss { .. }))
            .cloned()
            .collect(),
        ancilla: program.ancilla.clone(),
    };
    for el in nominal.elements.iter_mut() {
        let Some(label) = &el.label else { continue };
        let Some(rest) = label.strip_prefix("disp_coupler_") else {
            continue;
        };
        let stage: usize = rest.split('@').next().unwrap().parse().unwrap();
        let &(_, _, nom) = couplers
            .iter()
            .find(|&&(_, s, _)| s == stage)
            .expect("stage collected above");
        if let ElementKind::BeamSplitter { eta, .. } = &mut el.kind {
            *eta = 1.0 - nom;
        }
    }
    let target_mean = simulate(&nominal)?.state.mean().clone();
    // signal k (stage k) exits on rail k-1
    let amp = |mean: &RVec, stage: usize| -> f64 {
        let rail = stage - 1;
        C64::new(mean[2 * rail], mean[2 * rail + 1]).norm()
    };

    let mut out = program.clone();
    for &(i, stage, nominal) in &couplers {
        out.elements[i].label = Some(format!("disp_coupler_{stage}@{nominal:e}"));
    }
    let mut residual = f64::INFINITY;
    for _ in 0..COMPENSATE_MAX_ITER {
        let mean = simulate(&out)?.state.mean().clone();
        residual = 0.0;
        for &(i, stage, _) in &couplers {
            let t = amp(&target_mean, stage);
            if t == 0.0 {
                continue;
            }
            let m = amp(&mean, stage);
            if m == 0.0 {
                return Err(Error::Numerical(format!(
                    "stage {stage} output vanished; cannot scale toward {t:.3e}"
                )));
            }
            residual = residual.max((m / t - 1.0).abs());
            let ElementKind::BeamSplitter { eta, .. } = &mut out.elements[i].kind else {
                unreachable!("couplers are beamsplitters");
            };
            let new_skim = (1.0 - *eta) * (t / m).powi(2);
            if new_skim > 1.0 {
                return Err(Error::CompensationInfeasible {
                    stage,
                    eta: new_skim,
                });
            }
            *eta = 1.0 - new_skim;
        }
        if residual < COMPENSATE_TOL {
            return Ok(out);
        }
    }
    Err(Error::CompensationDiverged { residual })
}
