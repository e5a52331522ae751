//! Circuit programs: sequences of optical elements applied to vacuum, the
//! two-mode chip layout driven by normalized electrode voltages, and the
//! waveguide loss model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{suggest_cutoff, FockState};
use crate::gaussian::{loss_channel, C64, GaussianState, SymplecticOp};
use crate::linalg::{RMat, RVec};

/// Serializes complex scalars as `[re, im]` pairs.
mod complex_pair {
    use super::C64;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(z: &C64, ser: S) -> Result<S::Ok, S::Error> {
        [z.re, z.im].serialize(ser)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(de: D) -> Result<C64, D::Error> {
        let [re, im] = <[f64; 2]>::deserialize(de)?;
        Ok(C64::new(re, im))
    }
}

/// Largest squeezing parameter the squeezer electrodes reach at full drive.
pub const R_MAX: f64 = 1.0;
/// Largest cross-coupling the displacement couplers reach at full drive.
pub const ETA_MAX: f64 = 0.0125;
/// Default ancilla beam amplitude.
pub const DEFAULT_ALPHA0: f64 = 40.0;

/// One optical element. Mode indices are 0-based positions in the register.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum ElementKind {
    /// Single-mode squeezer: strength `r >= 0`, axis `phi`.
    Squeezer { r: f64, phi: f64, mode: usize },
    /// Single-mode phase shift `a -> e^{-i theta} a`.
    PhaseShift { theta: f64, mode: usize },
    /// Two-mode mixer with cross-coupling power `eta`.
    BeamSplitter { eta: f64, modes: (usize, usize) },
    /// Mach-Zehnder cell: phase `external_theta` on the first listed mode,
    /// then a mixer at `eta = sin^2(internal_phi / 2)`.
    #[serde(rename = "MZI")]
    Mzi {
        internal_phi: f64,
        external_theta: f64,
        modes: (usize, usize),
    },
    /// Pure loss with intensity transmission `tau` on one mode.
    Loss { tau: f64, mode: usize },
    /// Ideal displacement of one mode.
    Displace {
        #[serde(with = "complex_pair")]
        alpha: C64,
        mode: usize,
    },
}

impl ElementKind {
    /// Mixing power of a Mach-Zehnder cell at internal phase `phi`.
    pub fn mzi_eta(internal_phi: f64) -> f64 {
        (internal_phi / 2.0).sin().powi(2)
    }

    /// Internal phase realizing mixing power `eta`.
    pub fn mzi_internal_phi(eta: f64) -> f64 {
        2.0 * eta.sqrt().asin()
    }
}

/// An element plus an optional free-form label used to identify circuit
/// sections (for example the displacement cascade stages).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitElement {
    #[serde(flatten)]
    pub kind: ElementKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
}

impl CircuitElement {
    pub fn new(kind: ElementKind) -> Self {
        Self { kind, label: None }
    }

    pub fn labeled(kind: ElementKind, label: impl Into<String>) -> Self {
        Self {
            kind,
            label: Some(label.into()),
        }
    }
}

/// Strong coherent beam fed into one input port before the elements run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AncillaInjection {
    pub mode: usize,
    #[serde(with = "complex_pair")]
    pub alpha: C64,
}

/// A full program: register width, element sequence, optional ancilla beam.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitProgram {
    pub n_modes: usize,
    pub elements: Vec<CircuitElement>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ancilla: Option<AncillaInjection>,
}

impl CircuitProgram {
    pub fn new(n_modes: usize) -> Self {
        Self {
            n_modes,
            elements: Vec::new(),
            ancilla: None,
        }
    }

    /// Checks every element against the register width and parameter ranges.
    pub fn validate(&self) -> Result<()> {
        if self.n_modes == 0 {
            return Err(Error::ZeroModes);
        }
        let check = |mode: usize| -> Result<()> {
            if mode >= self.n_modes {
                return Err(Error::ModeOutOfRange {
                    mode,
                    n_modes: self.n_modes,
                });
            }
            Ok(())
        };
        for el in &self.elements {
            match &el.kind {
                ElementKind::Squeezer { r, mode, .. } => {
                    check(*mode)?;
                    if *r < 0.0 {
                        return Err(Error::NegativeSqueezing(*r));
                    }
                }
                ElementKind::PhaseShift { mode, .. } => check(*mode)?,
                ElementKind::BeamSplitter { eta, modes } => {
                    check(modes.0)?;
                    check(modes.1)?;
                    if modes.0 == modes.1 {
                        return Err(Error::DegenerateModePair(modes.0, modes.1));
                    }
                    if !(0.0..=1.0).contains(eta) {
                        return Err(Error::OutOfRange {
                            name: "eta",
                            value: *eta,
                            lo: 0.0,
                            hi: 1.0,
                        });
                    }
                }
                ElementKind::Mzi { modes, .. } => {
                    check(modes.0)?;
                    check(modes.1)?;
                    if modes.0 == modes.1 {
                        return Err(Error::DegenerateModePair(modes.0, modes.1));
                    }
                }
                ElementKind::Loss { tau, mode } => {
                    check(*mode)?;
                    if !(0.0..=1.0).contains(tau) {
                        return Err(Error::OutOfRange {
                            name: "tau",
                            value: *tau,
                            lo: 0.0,
                            hi: 1.0,
                        });
                    }
                }
                ElementKind::Displace { mode, .. } => check(*mode)?,
            }
        }
        if let Some(a) = &self.ancilla {
            check(a.mode)?;
        }
        Ok(())
    }

    /// Count of elements of each loss-relevant class, used by tests and the
    /// loss bookkeeping.
    pub fn element_counts(&self) -> ElementCounts {
        let mut c = ElementCounts::default();
        for el in &self.elements {
            match el.kind {
                ElementKind::Squeezer { .. } => c.squeezers += 1,
                ElementKind::PhaseShift { .. } => c.phase_shifters += 1,
                ElementKind::BeamSplitter { .. } => c.beamsplitters += 1,
                ElementKind::Mzi { .. } => c.mzis += 1,
                ElementKind::Loss { .. } => c.losses += 1,
                ElementKind::Displace { .. } => c.displacements += 1,
            }
        }
        c
    }
}

#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct ElementCounts {
    pub squeezers: usize,
    pub phase_shifters: usize,
    pub beamsplitters: usize,
    pub mzis: usize,
    pub losses: usize,
    pub displacements: usize,
}

/// Normalized electrode settings of the two-mode chip. All voltages are
/// dimensionless: squeezer drives and phase drives live in `[0, 1]`
/// (`[-1, 1]` for the displacement phases), see `voltage_to_params` for the
/// physical mapping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VoltageFrame {
    #[serde(default)]
    pub v1: f64,
    #[serde(default)]
    pub v2: f64,
    #[serde(default)]
    pub v3: f64,
    #[serde(default)]
    pub v4: f64,
    #[serde(default)]
    pub v5: f64,
    #[serde(default)]
    pub v6: f64,
    #[serde(default)]
    pub v7: f64,
    #[serde(default)]
    pub v8: f64,
    #[serde(default)]
    pub v9: f64,
    #[serde(default)]
    pub v10: f64,
    #[serde(default)]
    pub v11: f64,
    #[serde(rename = "alpha0", default = "default_alpha0")]
    pub alpha0_mag: f64,
}

fn default_alpha0() -> f64 {
    DEFAULT_ALPHA0
}

impl Default for VoltageFrame {
    fn default() -> Self {
        Self {
            v1: 0.0,
            v2: 0.0,
            v3: 0.0,
            v4: 0.0,
            v5: 0.0,
            v6: 0.0,
            v7: 0.0,
            v8: 0.0,
            v9: 0.0,
            v10: 0.0,
            v11: 0.0,
            alpha0_mag: DEFAULT_ALPHA0,
        }
    }
}

impl VoltageFrame {
    pub fn validate(&self) -> Result<()> {
        let unit = [
            ("v1", self.v1),
            ("v2", self.v2),
            ("v3", self.v3),
            ("v4", self.v4),
            ("v5", self.v5),
            ("v6", self.v6),
            ("v7", self.v7),
            ("v9", self.v9),
            ("v11", self.v11),
        ];
        for (name, v) in unit {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::OutOfRange {
                    name,
                    value: v,
                    lo: 0.0,
                    hi: 1.0,
                });
            }
        }
        for (name, v) in [("v8", self.v8), ("v10", self.v10)] {
            if !(-1.0..=1.0).contains(&v) {
                return Err(Error::OutOfRange {
                    name,
                    value: v,
                    lo: -1.0,
                    hi: 1.0,
                });
            }
        }
        if self.alpha0_mag < 0.0 {
            return Err(Error::OutOfRange {
                name: "alpha0",
                value: self.alpha0_mag,
                lo: 0.0,
                hi: f64::INFINITY,
            });
        }
        Ok(())
    }
}

/// Physical settings of the two-mode chip, in element units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChipParams {
    pub r1: f64,
    pub phi1: f64,
    pub r2: f64,
    pub phi2: f64,
    /// Cross-coupling power of the mixing cell.
    pub eta_mix: f64,
    pub theta1: f64,
    pub theta2: f64,
    /// Displacement stage 1: beam phase and coupler strength.
    pub chi1: f64,
    pub eta1: f64,
    /// Displacement stage 2.
    pub chi2: f64,
    pub eta2: f64,
    pub alpha0: C64,
}

/// Linear voltage-to-parameter map of the chip electrodes:
/// `r = v * R_MAX`, phases scale by `pi`, the mixing cell uses
/// `eta = 1 - v5`, and the weak displacement couplers use `eta = v * ETA_MAX`.
pub fn voltage_to_params(frame: &VoltageFrame) -> Result<ChipParams> {
    frame.validate()?;
    Ok(ChipParams {
        r1: frame.v1 * R_MAX,
        phi1: frame.v2 * std::f64::consts::PI,
        r2: frame.v3 * R_MAX,
        phi2: frame.v4 * std::f64::consts::PI,
        eta_mix: 1.0 - frame.v5,
        theta1: frame.v6 * std::f64::consts::PI,
        theta2: frame.v7 * std::f64::consts::PI,
        chi1: frame.v8 * std::f64::consts::PI,
        eta1: frame.v9 * ETA_MAX,
        chi2: frame.v10 * std::f64::consts::PI,
        eta2: frame.v11 * ETA_MAX,
        alpha0: C64::new(frame.alpha0_mag, 0.0),
    })
}

/// Inverse of [`voltage_to_params`]; fails if any setting is outside the
/// electrode ranges.
pub fn params_to_voltages(p: &ChipParams) -> Result<VoltageFrame> {
    use std::f64::consts::PI;
    let frame = VoltageFrame {
        v1: p.r1 / R_MAX,
        v2: p.phi1 / PI,
        v3: p.r2 / R_MAX,
        v4: p.phi2 / PI,
        v5: 1.0 - p.eta_mix,
        v6: p.theta1 / PI,
        v7: p.theta2 / PI,
        v8: p.chi1 / PI,
        v9: p.eta1 / ETA_MAX,
        v10: p.chi2 / PI,
        v11: p.eta2 / ETA_MAX,
        alpha0_mag: p.alpha0.norm(),
    };
    frame.validate()?;
    Ok(frame)
}

/// Builds the three-rail program realized by the two-mode chip: two
/// squeezers, a mixing cell, two output phases, and a two-stage displacement
/// cascade fed by the ancilla beam on rail 0. Signals exit on rails 0 and 1,
/// the ancilla on rail 2.
pub fn build_two_mode_chip(frame: &VoltageFrame) -> Result<CircuitProgram> {
    let p = voltage_to_params(frame)?;
    let elements = vec![
        CircuitElement::labeled(
            ElementKind::Squeezer {
                r: p.r1,
                phi: p.phi1,
                mode: 1,
            },
            "sq_1",
        ),
        CircuitElement::labeled(
            ElementKind::Squeezer {
                r: p.r2,
                phi: p.phi2,
                mode: 2,
            },
            "sq_2",
        ),
        CircuitElement::labeled(
            ElementKind::Mzi {
                internal_phi: ElementKind::mzi_internal_phi(p.eta_mix),
                external_theta: 0.0,
                modes: (1, 2),
            },
            "mix",
        ),
        CircuitElement::labeled(
            ElementKind::PhaseShift {
                theta: p.theta1,
                mode: 1,
            },
            "out_phase_1",
        ),
        CircuitElement::labeled(
            ElementKind::PhaseShift {
                theta: p.theta2,
                mode: 2,
            },
            "out_phase_2",
        ),
        CircuitElement::labeled(
            ElementKind::PhaseShift {
                theta: p.chi1,
                mode: 0,
            },
            "disp_phase_1",
        ),
        CircuitElement::labeled(
            ElementKind::BeamSplitter {
                eta: 1.0 - p.eta1,
                modes: (0, 1),
            },
            "disp_coupler_1",
        ),
        CircuitElement::labeled(
            ElementKind::PhaseShift {
                theta: p.chi2,
                mode: 1,
            },
            "disp_phase_2",
        ),
        CircuitElement::labeled(
            ElementKind::BeamSplitter {
                eta: 1.0 - p.eta2,
                modes: (1, 2),
            },
            "disp_coupler_2",
        ),
    ];
    Ok(CircuitProgram {
        n_modes: 3,
        elements,
        ancilla: Some(AncillaInjection {
            mode: 0,
            alpha: p.alpha0,
        }),
    })
}

/// The pure two-mode state a voltage frame aims for: squeezers, mixing cell
/// and output phases applied exactly, with the cascade displacements
/// injected ideally (no skim noise, no beam depletion of the signals).
/// The actual chip output approaches this as the skim couplings shrink.
pub fn two_mode_chip_target(frame: &VoltageFrame) -> Result<GaussianState> {
    let p = voltage_to_params(frame)?;
    let mut state = GaussianState::vacuum(2)?;
    state = SymplecticOp::squeezer(p.r1, p.phi1, 0, 2)?.apply(&state)?;
    state = SymplecticOp::squeezer(p.r2, p.phi2, 1, 2)?.apply(&state)?;
    state = SymplecticOp::beamsplitter(p.eta_mix, (0, 1), 2)?.apply(&state)?;
    state = SymplecticOp::rotation(p.theta1, 0, 2)?.apply(&state)?;
    state = SymplecticOp::rotation(p.theta2, 1, 2)?.apply(&state)?;
    let beam1 = C64::new(0.0, -p.chi1).exp() * p.alpha0;
    let alpha1 = p.eta1.sqrt() * beam1;
    let beam2 = C64::new(0.0, -p.chi2).exp() * (-(1.0 - p.eta1).sqrt() * beam1);
    let alpha2 = p.eta2.sqrt() * beam2;
    SymplecticOp::displacement(&[alpha1, alpha2]).apply(&state)
}

/// Per-element-class insertion loss in dB.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossModel {
    #[serde(default)]
    pub mzi_loss_db: f64,
    #[serde(default)]
    pub phase_shifter_loss_db: f64,
    #[serde(default)]
    pub coupler_loss_db: f64,
    #[serde(default)]
    pub squeezer_loss_db: f64,
}

/// Fraction of the full cell loss assigned to each standalone coupler and
/// phase shifter when scaling a loss model from a single cell figure.
pub const DEFAULT_CELL_PART_FRACTION: f64 = 1.0 / 3.0;

impl LossModel {
    pub fn zero() -> Self {
        Self {
            mzi_loss_db: 0.0,
            phase_shifter_loss_db: 0.0,
            coupler_loss_db: 0.0,
            squeezer_loss_db: 0.0,
        }
    }

    /// Derives all element losses from a Mach-Zehnder cell loss figure:
    /// standalone couplers, phase shifters and squeezers each get
    /// `fraction * mzi_db` (a cell being two couplers and one shifter).
    pub fn scaled_from_mzi(mzi_db: f64, fraction: f64) -> Self {
        Self {
            mzi_loss_db: mzi_db,
            phase_shifter_loss_db: fraction * mzi_db,
            coupler_loss_db: fraction * mzi_db,
            squeezer_loss_db: fraction * mzi_db,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("mzi_loss_db", self.mzi_loss_db),
            ("phase_shifter_loss_db", self.phase_shifter_loss_db),
            ("coupler_loss_db", self.coupler_loss_db),
            ("squeezer_loss_db", self.squeezer_loss_db),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::OutOfRange {
                    name,
                    value: v,
                    lo: 0.0,
                    hi: f64::INFINITY,
                });
            }
        }
        Ok(())
    }

    pub fn is_zero(&self) -> bool {
        self.mzi_loss_db == 0.0
            && self.phase_shifter_loss_db == 0.0
            && self.coupler_loss_db == 0.0
            && self.squeezer_loss_db == 0.0
    }
}

/// Intensity transmission of a `db` insertion loss.
pub fn db_to_transmission(db: f64) -> f64 {
    10f64.powf(-db / 10.0)
}

/// Inserts loss elements around the program's elements: single-mode loss
/// after each squeezer and phase shifter, and loss on both modes before and
/// after each two-mode element (half its dB figure on each side). Zero-dB
/// classes insert nothing, so a zero model returns the program unchanged.
pub fn apply_loss_model(program: &CircuitProgram, model: &LossModel) -> Result<CircuitProgram> {
    program.validate()?;
    model.validate()?;
    let mut out = CircuitProgram {
        n_modes: program.n_modes,
        elements: Vec::with_capacity(program.elements.len() * 3),
        ancilla: program.ancilla.clone(),
    };
    let push_loss = |elements: &mut Vec<CircuitElement>, db: f64, mode: usize| {
        if db > 0.0 {
            elements.push(CircuitElement::labeled(
                ElementKind::Loss {
                    tau: db_to_transmission(db),
                    mode,
                },
                "model_loss",
            ));
        }
    };
    for el in &program.elements {
        match &el.kind {
            ElementKind::Squeezer { mode, .. } => {
                out.elements.push(el.clone());
                push_loss(&mut out.elements, model.squeezer_loss_db, *mode);
            }
            ElementKind::PhaseShift { mode, .. } => {
                out.elements.push(el.clone());
                push_loss(&mut out.elements, model.phase_shifter_loss_db, *mode);
            }
            ElementKind::BeamSplitter { modes, .. } => {
                let half = model.coupler_loss_db / 2.0;
                push_loss(&mut out.elements, half, modes.0);
                push_loss(&mut out.elements, half, modes.1);
                out.elements.push(el.clone());
                push_loss(&mut out.elements, half, modes.0);
                push_loss(&mut out.elements, half, modes.1);
            }
            ElementKind::Mzi { modes, .. } => {
                let half = model.mzi_loss_db / 2.0;
                push_loss(&mut out.elements, half, modes.0);
                push_loss(&mut out.elements, half, modes.1);
                out.elements.push(el.clone());
                push_loss(&mut out.elements, half, modes.0);
                push_loss(&mut out.elements, half, modes.1);
            }
            ElementKind::Loss { .. } | ElementKind::Displace { .. } => {
                out.elements.push(el.clone());
            }
        }
    }
    Ok(out)
}

/// Result of running a program: the full register state, the signal-only
/// state when an ancilla was injected (the standard displacement cascade
/// leaves the beam on the highest rail, which is dropped), and optionally
/// the independent photon-basis run.
#[derive(Debug, Clone)]
pub struct SimulationOutput {
    pub state: GaussianState,
    pub reduced: Option<GaussianState>,
    pub fock: Option<FockOutput>,
}

/// Photon-basis cross-check results.
#[derive(Debug, Clone)]
pub struct FockOutput {
    pub cutoff: usize,
    pub state: FockState,
    pub mean: RVec,
    pub cov: RMat,
}

/// Runs the program on vacuum in the phase-space representation.
pub fn simulate(program: &CircuitProgram) -> Result<SimulationOutput> {
    program.validate()?;
    let mut state = GaussianState::vacuum(program.n_modes)?;
    if let Some(a) = &program.ancilla {
        state = SymplecticOp::displacement_mode(a.alpha, a.mode, program.n_modes)?.apply(&state)?;
    }
    for el in &program.elements {
        state = apply_element(&state, &el.kind, program.n_modes)?;
    }
    let reduced = if program.ancilla.is_some() && program.n_modes > 1 {
        let keep: Vec<usize> = (0..program.n_modes - 1).collect();
        Some(state.reduced(&keep)?)
    } else {
        None
    };
    Ok(SimulationOutput {
        state,
        reduced,
        fock: None,
    })
}

/// Runs the program both in phase space and in the truncated photon basis.
/// The photon-basis path rejects loss elements; `cutoff` defaults to the
/// smallest size the input-tail heuristic accepts.
pub fn simulate_with_oracle(
    program: &CircuitProgram,
    cutoff: Option<usize>,
    tail_tol: f64,
) -> Result<SimulationOutput> {
    let mut out = simulate(program)?;
    let cutoff = match cutoff {
        Some(c) => c,
        None => suggest_cutoff(&photon_budget(program), 1e-8),
    };
    let mut f = FockState::vacuum(program.n_modes, cutoff)?.with_tail_tol(tail_tol);
    if let Some(a) = &program.ancilla {
        f.displace(a.alpha, a.mode)?;
    }
    for el in &program.elements {
        match &el.kind {
            ElementKind::Squeezer { r, phi, mode } => f.squeeze(*r, *phi, *mode)?,
            ElementKind::PhaseShift { theta, mode } => f.phase(*theta, *mode)?,
            ElementKind::BeamSplitter { eta, modes } => f.beamsplitter(*eta, *modes)?,
            ElementKind::Mzi {
                internal_phi,
                external_theta,
                modes,
            } => {
                f.phase(*external_theta, modes.0)?;
                f.beamsplitter(ElementKind::mzi_eta(*internal_phi), *modes)?;
            }
            ElementKind::Displace { alpha, mode } => f.displace(*alpha, *mode)?,
            ElementKind::Loss { .. } => {
                return Err(Error::FockEnvelope(
                    "loss elements are not representable in the photon-basis path".into(),
                ))
            }
        }
    }
    let (mean, cov) = f.moments();
    out.fock = Some(FockOutput {
        cutoff,
        state: f,
        mean,
        cov,
    });
    Ok(out)
}

/// Rough per-mode squeeze and displacement budget used to size the photon
/// basis.
fn photon_budget(program: &CircuitProgram) -> Vec<(f64, f64)> {
    let mut budget = vec![(0.0f64, 0.0f64); program.n_modes];
    if let Some(a) = &program.ancilla {
        budget[a.mode].1 += a.alpha.norm();
    }
    for el in &program.elements {
        match &el.kind {
            ElementKind::Squeezer { r, mode, .. } => budget[*mode].0 += r.abs(),
            ElementKind::Displace { alpha, mode } => budget[*mode].1 += alpha.norm(),
            // mixing can move any amplitude between the two rails
            ElementKind::BeamSplitter { modes, .. } | ElementKind::Mzi { modes, .. } => {
                let r = budget[modes.0].0.max(budget[modes.1].0);
                let a = budget[modes.0].1.max(budget[modes.1].1);
                budget[modes.0] = (r, a);
                budget[modes.1] = (r, a);
            }
            _ => {}
        }
    }
    budget
}

fn apply_element(
    state: &GaussianState,
    kind: &ElementKind,
    n_modes: usize,
) -> Result<GaussianState> {
    match kind {
        ElementKind::Squeezer { r, phi, mode } => {
            SymplecticOp::squeezer(*r, *phi, *mode, n_modes)?.apply(state)
        }
        ElementKind::PhaseShift { theta, mode } => {
            SymplecticOp::rotation(*theta, *mode, n_modes)?.apply(state)
        }
        ElementKind::BeamSplitter { eta, modes } => {
            SymplecticOp::beamsplitter(*eta, *modes, n_modes)?.apply(state)
        }
        ElementKind::Mzi {
            internal_phi,
            external_theta,
            modes,
        } => {
            let phase = SymplecticOp::rotation(*external_theta, modes.0, n_modes)?;
            let mix = SymplecticOp::beamsplitter(ElementKind::mzi_eta(*internal_phi), *modes, n_modes)?;
            phase.then(&mix)?.apply(state)
        }
        ElementKind::Loss { tau, mode } => loss_channel(state, *tau, *mode),
        ElementKind::Displace { alpha, mode } => {
            SymplecticOp::displacement_mode(*alpha, *mode, n_modes)?.apply(state)
        }
    }
}

/// Mean photon number leaking out of the ancilla exit port when the beam is
/// off: run with `alpha0 = 0` and read the energy left on the signal rails'
/// companion port.
pub fn leakage_estimate(program: &CircuitProgram) -> Result<f64> {
    let mut dark = program.clone();
    if let Some(a) = &mut dark.ancilla {
        a.alpha = C64::new(0.0, 0.0);
    }
    let out = simulate(&dark)?;
    out.state.mode_photon_number(program.n_modes - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn all_zero_frame_yields_vacuum_signals() {
        let frame = VoltageFrame::default();
        let program = build_two_mode_chip(&frame).unwrap();
        let out = simulate(&program).unwrap();
        let red = out.reduced.unwrap();
        assert_eq!(red.n_modes(), 2);
        assert!(red.mean().amax() < 1e-9);
        let vac = GaussianState::vacuum(2).unwrap();
        assert!((red.cov() - vac.cov()).amax() < 1e-12);
        // the beam leaves on the last rail with its full amplitude
        let exit = out.state.mode_photon_number(2).unwrap();
        assert_abs_diff_eq!(exit, 1600.0, epsilon = 1e-6);
    }

    #[test]
    fn voltage_round_trip_is_identity() {
        let frame = VoltageFrame {
            v1: 0.3,
            v2: 0.9,
            v3: 0.7,
            v4: 0.2,
            v5: 0.4,
            v6: 0.8,
            v7: 0.1,
            v8: -0.6,
            v9: 0.5,
            v10: 1.0,
            v11: 0.25,
            alpha0_mag: 12.0,
        };
        let p = voltage_to_params(&frame).unwrap();
        let back = params_to_voltages(&p).unwrap();
        for (a, b) in [
            (frame.v1, back.v1),
            (frame.v2, back.v2),
            (frame.v3, back.v3),
            (frame.v4, back.v4),
            (frame.v5, back.v5),
            (frame.v6, back.v6),
            (frame.v7, back.v7),
            (frame.v8, back.v8),
            (frame.v9, back.v9),
            (frame.v10, back.v10),
            (frame.v11, back.v11),
            (frame.alpha0_mag, back.alpha0_mag),
        ] {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        assert!(voltage_to_params(&VoltageFrame {
            v5: 1.4,
            ..VoltageFrame::default()
        })
        .is_err());
    }

    #[test]
    fn chip_displacement_stage_lands_on_signal_rail() {
        // weak coupler moves sqrt(eta) alpha0 onto the signal
        let frame = VoltageFrame {
            v9: 0.8,
            ..VoltageFrame::default()
        };
        let program = build_two_mode_chip(&frame).unwrap();
        let out = simulate(&program).unwrap();
        let red = out.reduced.unwrap();
        let expect = (0.8 * ETA_MAX).sqrt() * 40.0 * std::f64::consts::SQRT_2;
        assert_abs_diff_eq!(red.mean()[0], expect, epsilon = 1e-9);
        assert_abs_diff_eq!(red.mean()[1], 0.0, epsilon = 1e-12);
        // signal two untouched
        assert_abs_diff_eq!(red.mean()[2], 0.0, epsilon = 1e-12);
    }

    #[test]
    fn chip_target_matches_chip_output_up_to_skim_noise() {
        let frame = VoltageFrame {
            v1: 0.8,
            v4: 0.5,
            v5: 0.5,
            v9: 0.0125,
            v10: 1.0,
            v11: 0.012501953430223474,
            ..VoltageFrame::default()
        };
        let target = two_mode_chip_target(&frame).unwrap();
        let out = simulate(&build_two_mode_chip(&frame).unwrap()).unwrap();
        let red = out.reduced.unwrap();
        // displacements are deposited exactly; covariance differs at O(eta)
        assert!((target.mean() - red.mean()).amax() < 1e-9);
        assert!((target.cov() - red.cov()).amax() < 1e-2);
        let f = crate::gaussian::fidelity(&target, &red).unwrap();
        assert!(f > 0.999 && f < 1.0, "fidelity {f}");
    }

    #[test]
    fn mzi_cell_equals_phase_then_mixer() {
        let program = {
            let mut p = CircuitProgram::new(2);
            p.elements.push(CircuitElement::new(ElementKind::Squeezer {
                r: 0.4,
                phi: 0.0,
                mode: 0,
            }));
            p.elements.push(CircuitElement::new(ElementKind::Mzi {
                internal_phi: 1.3,
                external_theta: 0.7,
                modes: (0, 1),
            }));
            p
        };
        let split = {
            let mut p = CircuitProgram::new(2);
            p.elements.push(CircuitElement::new(ElementKind::Squeezer {
                r: 0.4,
                phi: 0.0,
                mode: 0,
            }));
            p.elements.push(CircuitElement::new(ElementKind::PhaseShift {
                theta: 0.7,
                mode: 0,
            }));
            p.elements.push(CircuitElement::new(ElementKind::BeamSplitter {
                eta: (1.3f64 / 2.0).sin().powi(2),
                modes: (0, 1),
            }));
            p
        };
        let a = simulate(&program).unwrap().state;
        let b = simulate(&split).unwrap().state;
        assert!((a.cov() - b.cov()).amax() < 1e-12);
    }

    #[test]
    fn loss_model_insertion_counts_follow_element_classes() {
        let frame = VoltageFrame {
            v1: 0.5,
            v3: 0.5,
            v5: 0.5,
            v9: 0.5,
            v11: 0.5,
            ..VoltageFrame::default()
        };
        let program = build_two_mode_chip(&frame).unwrap();
        let model = LossModel::scaled_from_mzi(2.2, DEFAULT_CELL_PART_FRACTION);
        let lossy = apply_loss_model(&program, &model).unwrap();
        let base = program.element_counts();
        let counts = lossy.element_counts();
        assert_eq!(
            counts.losses,
            base.squeezers + base.phase_shifters + 4 * (base.beamsplitters + base.mzis)
        );
        // non-loss elements unchanged
        assert_eq!(counts.squeezers, base.squeezers);
        assert_eq!(counts.mzis, base.mzis);
    }

    #[test]
    fn zero_loss_model_is_identity_on_programs_and_states() {
        let frame = VoltageFrame {
            v1: 0.9,
            v2: 0.3,
            v5: 0.4,
            v9: 0.7,
            ..VoltageFrame::default()
        };
        let program = build_two_mode_chip(&frame).unwrap();
        let lossy = apply_loss_model(&program, &LossModel::zero()).unwrap();
        assert_eq!(program, lossy);
        let a = simulate(&program).unwrap().state;
        let b = simulate(&lossy).unwrap().state;
        assert_eq!(a.mean(), b.mean());
        assert_eq!(a.cov(), b.cov());
    }

    #[test]
    fn loss_makes_purity_determinant_grow_monotonically() {
        let frame = VoltageFrame {
            v1: 0.8,
            v3: 0.6,
            v4: 0.5,
            v5: 0.5,
            v9: 0.4,
            v11: 0.4,
            ..VoltageFrame::default()
        };
        let program = build_two_mode_chip(&frame).unwrap();
        // weak-loss regime: mixedness grows with the loss figure (strong loss
        // eventually drags states back toward vacuum, so no global claim)
        let mut last = 0.0;
        for db in [0.0, 0.02, 0.05, 0.2, 0.5] {
            let model = LossModel::scaled_from_mzi(db, DEFAULT_CELL_PART_FRACTION);
            let lossy = apply_loss_model(&program, &model).unwrap();
            let det = simulate(&lossy).unwrap().reduced.unwrap().purity_det();
            assert!(
                det >= last - 1e-12,
                "purity determinant shrank: {det} after {last} at {db} dB"
            );
            if db > 0.0 {
                assert!(det > 1.0 + 1e-9, "no mixedness at {db} dB");
            }
            last = det;
        }
    }

    #[test]
    fn single_stage_leakage_matches_closed_form() {
        // one signal mode, squeezer, one cascade stage, dark ancilla
        let eta = 0.01;
        let r = 1.0;
        let mut program = CircuitProgram::new(2);
        program.elements.push(CircuitElement::new(ElementKind::Squeezer {
            r,
            phi: 0.0,
            mode: 1,
        }));
        program.elements.push(CircuitElement::labeled(
            ElementKind::PhaseShift { theta: 0.0, mode: 0 },
            "disp_phase_1",
        ));
        program.elements.push(CircuitElement::labeled(
            ElementKind::BeamSplitter {
                eta: 1.0 - eta,
                modes: (0, 1),
            },
            "disp_coupler_1",
        ));
        program.ancilla = Some(AncillaInjection {
            mode: 0,
            alpha: c(5.0, 0.0),
        });
        let leak = leakage_estimate(&program).unwrap();
        assert_abs_diff_eq!(leak, 0.013810978455418154, epsilon = 1e-12);
        // leakage scales linearly in eta within 2 percent
        let mut scaled = program.clone();
        scaled.elements[2].kind = ElementKind::BeamSplitter {
            eta: 1.0 - eta / 10.0,
            modes: (0, 1),
        };
        let leak10 = leakage_estimate(&scaled).unwrap();
        assert!((leak / leak10 / 10.0 - 1.0).abs() < 0.02);
    }

    #[test]
    fn oracle_path_agrees_with_phase_space_for_small_programs() {
        let mut program = CircuitProgram::new(2);
        program.elements.push(CircuitElement::new(ElementKind::Squeezer {
            r: 0.5,
            phi: 0.4,
            mode: 0,
        }));
        program.elements.push(CircuitElement::new(ElementKind::Displace {
            alpha: c(0.4, -0.3),
            mode: 1,
        }));
        program.elements.push(CircuitElement::new(ElementKind::Mzi {
            internal_phi: 0.9,
            external_theta: 1.7,
            modes: (0, 1),
        }));
        let out = simulate_with_oracle(&program, None, 1e-7).unwrap();
        let fock = out.fock.unwrap();
        assert!((&fock.mean - out.state.mean()).amax() < 1e-6);
        assert!((&fock.cov - out.state.cov()).amax() < 1e-6);
    }

    #[test]
    fn oracle_path_rejects_loss_elements() {
        let mut program = CircuitProgram::new(1);
        program.elements.push(CircuitElement::new(ElementKind::Loss {
            tau: 0.9,
            mode: 0,
        }));
        assert!(matches!(
            simulate_with_oracle(&program, Some(8), 1e-8),
            Err(Error::FockEnvelope(_))
        ));
    }

    #[test]
    fn program_json_round_trip_preserves_structure() {
        let frame = VoltageFrame {
            v1: 0.5,
            v5: 0.25,
            v9: 0.125,
            ..VoltageFrame::default()
        };
        let program = build_two_mode_chip(&frame).unwrap();
        let text = serde_json::to_string_pretty(&program).unwrap();
        let back: CircuitProgram = serde_json::from_str(&text).unwrap();
        assert_eq!(program, back);
        // spot-check the JSON shape
        assert!(text.contains("\"kind\": \"Squeezer\""));
        assert!(text.contains("\"kind\": \"MZI\""));
        assert!(text.contains("\"ancilla\""));
    }

    #[test]
    fn voltage_frame_json_uses_alpha0_key_with_default() {
        let parsed: VoltageFrame = serde_json::from_str(r#"{"v1": 0.5}"#).unwrap();
        assert_eq!(parsed.v1, 0.5);
        assert_eq!(parsed.alpha0_mag, DEFAULT_ALPHA0);
        let text = serde_json::to_string(&VoltageFrame::default()).unwrap();
        assert!(text.contains("\"alpha0\":40.0"));
    }

    #[test]
    fn validate_rejects_out_of_register_modes() {
        let mut program = CircuitProgram::new(2);
        program.elements.push(CircuitElement::new(ElementKind::PhaseShift {
            theta: 0.1,
            mode: 5,
        }));
        assert!(matches!(
            simulate(&program),
            Err(Error::ModeOutOfRange { mode: 5, n_modes: 2 })
        ));
    }
}
