//! Fidelity and loss analyses of beam-displaced squeezed states: fidelity
//! versus skim coupling, coupling thresholds for fidelity targets, power-law
//! fits of the threshold curve, and loss sweeps over the two-mode chip.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::circuit::{
    apply_loss_model, build_two_mode_chip, simulate, two_mode_chip_target, AncillaInjection,
    CircuitElement, CircuitProgram, ElementKind, LossModel, VoltageFrame,
    DEFAULT_CELL_PART_FRACTION,
};
use crate::compiler::compensate_displacement_for_loss;
use crate::error::{Error, Result};
use crate::gaussian::{fidelity, C64, GaussianState, SymplecticOp};

/// A tabulated sweep: ordered metadata, column names, and numeric rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub label: String,
    pub metadata: Vec<(String, String)>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl SweepResult {
    /// Renders the sweep as CSV with `#`-prefixed metadata comments.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("# label: {}\n", self.label));
        for (k, v) in &self.metadata {
            out.push_str(&format!("# {k}: {v}\n"));
        }
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let idx = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[idx]).collect())
    }
}

/// Builds the one-signal skim stage at coupling `eta`, beam amplitude
/// chosen so the deposited displacement is exactly `alpha`: the signal is
/// squeezed by `r` on rail 1 and exits on rail 0, the beam exits on rail 1.
fn skim_stage_program(r: f64, alpha: f64, eta: f64) -> Result<(CircuitProgram, f64)> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::OutOfRange {
            name: "eta",
            value: eta,
            lo: 0.0,
            hi: 1.0,
        });
    }
    let alpha0 = alpha / eta.sqrt();
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
        alpha: C64::new(alpha0, 0.0),
    });
    Ok((program, alpha0))
}

/// Fidelity of the joint skim-stage output (signal plus depleted beam)
/// against the ideal pair: displaced squeezed signal and the coherent beam
/// remainder. Displacements come out exact, so the loss is purely the
/// beam's vacuum noise skimmed onto the squeezed quadratures; the result
/// does not depend on `alpha`.
pub fn displacement_fidelity_point(r: f64, alpha: f64, eta: f64) -> Result<f64> {
    let (program, alpha0) = skim_stage_program(r, alpha, eta)?;
    let out = simulate(&program)?;
    let mut ideal = GaussianState::vacuum(2)?;
    ideal = SymplecticOp::squeezer(r, 0.0, 0, 2)?.apply(&ideal)?;
    ideal = SymplecticOp::displacement(&[
        C64::new(alpha, 0.0),
        C64::new(-(1.0 - eta).sqrt() * alpha0, 0.0),
    ])
    .apply(&ideal)?;
    fidelity(&ideal, &out.state)
}

/// Sweeps [`displacement_fidelity_point`] over a coupling grid.
pub fn displacement_fidelity_curve(r: f64, alpha: f64, etas: &[f64]) -> Result<SweepResult> {
    let rows: Vec<Vec<f64>> = etas
        .par_iter()
        .map(|&eta| {
            let f = displacement_fidelity_point(r, alpha, eta)?;
            Ok(vec![eta, 10.0 * eta.log10(), f, 1.0 - f])
        })
        .collect::<Result<_>>()?;
    Ok(SweepResult {
        label: "displacement_fidelity_curve".into(),
        metadata: vec![
            ("r".into(), format!("{r}")),
            ("alpha".into(), format!("{alpha}")),
            ("beam".into(), "alpha / sqrt(eta)".into()),
        ],
        columns: vec![
            "eta".into(),
            "eta_db".into(),
            "fidelity".into(),
            "infidelity".into(),
        ],
        rows,
    })
}

/// Coupling bracket for threshold bisection, in dB.
const THRESHOLD_BRACKET_DB: (f64, f64) = (-80.0, 0.0);
/// Largest acceptable fidelity miss at a bisected threshold.
const THRESHOLD_ENDPOINT_TOL: f64 = 1e-4;

/// Finds the skim coupling, in dB, at which the fidelity crosses `level`,
/// by bisection on the log axis to within `tol_db`.
pub fn eta_threshold_db(r: f64, level: f64, tol_db: f64) -> Result<f64> {
    if !(0.0 < level && level < 1.0) {
        return Err(Error::OutOfRange {
            name: "level",
            value: level,
            lo: 0.0,
            hi: 1.0,
        });
    }
    if tol_db <= 0.0 {
        return Err(Error::OutOfRange {
            name: "tol_db",
            value: tol_db,
            lo: 0.0,
            hi: f64::INFINITY,
        });
    }
    let f_at = |db: f64| displacement_fidelity_point(r, 0.5, 10f64.powf(db / 10.0));
    let (mut lo, mut hi) = THRESHOLD_BRACKET_DB;
    let f_lo = f_at(lo)?;
    let f_hi = f_at(hi)?;
    if f_lo < level || f_hi >= level {
        return Err(Error::BisectionFailed(format!(
            "level {level} not bracketed: fidelity runs {f_lo:.6} at {lo} dB \
             to {f_hi:.6} at {hi} dB"
        )));
    }
    while hi - lo > tol_db {
        let mid = 0.5 * (lo + hi);
        if f_at(mid)? >= level {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let root = 0.5 * (lo + hi);
    let miss = (f_at(root)? - level).abs();
    if miss > THRESHOLD_ENDPOINT_TOL {
        return Err(Error::BisectionFailed(format!(
            "fidelity at the bisected point misses the level by {miss:.2e}"
        )));
    }
    Ok(root)
}

/// A fitted threshold curve `eta_db(r) = a r^b + c` with its data.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundFit {
    pub level: f64,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// Largest absolute misfit over the data, in dB.
    pub max_residual_db: f64,
    pub r: Vec<f64>,
    pub threshold_db: Vec<f64>,
}

impl BoundFit {
    pub fn predict(&self, r: f64) -> f64 {
        self.a * r.powf(self.b) + self.c
    }

    pub fn sweep(&self) -> SweepResult {
        let rows = self
            .r
            .iter()
            .zip(&self.threshold_db)
            .map(|(&r, &t)| vec![r, t, self.predict(r), t - self.predict(r)])
            .collect();
        SweepResult {
            label: "threshold_fit".into(),
            metadata: vec![
                ("level".into(), format!("{}", self.level)),
                ("a".into(), format!("{:.16e}", self.a)),
                ("b".into(), format!("{:.16e}", self.b)),
                ("c".into(), format!("{:.16e}", self.c)),
                (
                    "max_residual_db".into(),
                    format!("{:.16e}", self.max_residual_db),
                ),
            ],
            columns: vec![
                "r".into(),
                "threshold_db".into(),
                "fit_db".into(),
                "residual_db".into(),
            ],
            rows,
        }
    }
}

/// Least-squares `(a, c)` for fixed exponent `b`; returns the pair and the
/// sum of squared residuals.
fn fit_linear_part(rs: &[f64], ys: &[f64], b: f64) -> (f64, f64, f64) {
    let xs: Vec<f64> = rs.iter().map(|r| r.powf(b)).collect();
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sy: f64 = ys.iter().sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let det = n * sxx - sx * sx;
    let a = (n * sxy - sx * sy) / det;
    let c = (sy - a * sx) / n;
    let sse = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (a * x + c - y).powi(2))
        .sum();
    (a, c, sse)
}

/// Fits `a r^b + c` to bisected thresholds over the given strengths:
/// profile the exponent on a coarse grid, then refine by ternary search.
pub fn fit_bound_constants(level: f64, rs: &[f64], bisect_tol_db: f64) -> Result<BoundFit> {
    if rs.len() < 3 {
        return Err(Error::Numerical(
            "power-law fit needs at least three strengths".into(),
        ));
    }
    let ys: Vec<f64> = rs
        .par_iter()
        .map(|&r| eta_threshold_db(r, level, bisect_tol_db))
        .collect::<Result<_>>()?;

    let mut best = (f64::INFINITY, 0.0);
    let mut b = 0.05;
    while b <= 3.0 {
        let (_, _, sse) = fit_linear_part(rs, &ys, b);
        if sse < best.0 {
            best = (sse, b);
        }
        b += 0.05;
    }
    let (mut lo, mut hi) = (best.1 - 0.05, best.1 + 0.05);
    for _ in 0..80 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if fit_linear_part(rs, &ys, m1).2 < fit_linear_part(rs, &ys, m2).2 {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    let b = 0.5 * (lo + hi);
    let (a, c, _) = fit_linear_part(rs, &ys, b);
    let max_residual_db = rs
        .iter()
        .zip(&ys)
        .map(|(&r, &y)| (a * r.powf(b) + c - y).abs())
        .fold(0.0, f64::max);
    Ok(BoundFit {
        level,
        a,
        b,
        c,
        max_residual_db,
        r: rs.to_vec(),
        threshold_db: ys,
    })
}

/// The chip frame used by the loss sweep: both squeezers driven at `r`
/// (axes a quarter turn apart), a balanced mixing cell, and the cascade
/// depositing 0.5 on each signal from a beam of 40.
pub fn loss_sweep_frame(r: f64) -> VoltageFrame {
    VoltageFrame {
        v1: r,
        v2: 0.0,
        v3: r,
        v4: 0.5,
        v5: 0.5,
        v6: 0.0,
        v7: 0.0,
        v8: 0.0,
        v9: 0.0125,
        v10: 1.0,
        v11: 0.012501953430223474,
        ..VoltageFrame::default()
    }
}

/// Sweeps the per-cell insertion loss over `mzi_dbs` for the chip at
/// `frame`, scoring the signal pair against the frame's ideal target both
/// with and without re-tuning the skim couplings. Standalone couplers,
/// shifters and squeezers carry `part_fraction` of the cell loss.
pub fn loss_fidelity_sweep(
    frame: &VoltageFrame,
    mzi_dbs: &[f64],
    part_fraction: f64,
) -> Result<SweepResult> {
    let ideal = two_mode_chip_target(frame)?;
    let program = build_two_mode_chip(frame)?;
    let rows: Vec<Vec<f64>> = mzi_dbs
        .par_iter()
        .map(|&db| {
            let model = LossModel::scaled_from_mzi(db, part_fraction);
            let lossy = apply_loss_model(&program, &model)?;
            let raw = simulate(&lossy)?.reduced.expect("chip has an ancilla");
            let f_raw = fidelity(&ideal, &raw)?;
            let tuned_program = compensate_displacement_for_loss(&lossy)?;
            let tuned = simulate(&tuned_program)?.reduced.expect("chip has an ancilla");
            let f_tuned = fidelity(&ideal, &tuned)?;
            Ok(vec![db, f_raw, f_tuned, tuned.purity_det()])
        })
        .collect::<Result<_>>()?;
    Ok(SweepResult {
        label: "loss_fidelity_sweep".into(),
        metadata: vec![
            ("v1".into(), format!("{}", frame.v1)),
            ("v3".into(), format!("{}", frame.v3)),
            ("part_fraction".into(), format!("{part_fraction}")),
            ("alpha0".into(), format!("{}", frame.alpha0_mag)),
        ],
        columns: vec![
            "mzi_loss_db".into(),
            "fidelity".into(),
            "fidelity_compensated".into(),
            "purity_det".into(),
        ],
        rows,
    })
}

/// Convenience: the loss sweep on the standard frame with the default
/// loss split.
pub fn default_loss_sweep(r: f64, mzi_dbs: &[f64]) -> Result<SweepResult> {
    loss_fidelity_sweep(&loss_sweep_frame(r), mzi_dbs, DEFAULT_CELL_PART_FRACTION)
}

/// Fidelity of the standard chip against its ideal target over a squeezing
/// grid, one column per insertion-loss level. With `mitigate` the skim
/// couplings are re-tuned at each point before scoring.
pub fn loss_fidelity_grid(
    rs: &[f64],
    mzi_dbs: &[f64],
    part_fraction: f64,
    mitigate: bool,
) -> Result<SweepResult> {
    let rows: Vec<Vec<f64>> = rs
        .par_iter()
        .map(|&r| {
            let frame = loss_sweep_frame(r);
            let ideal = two_mode_chip_target(&frame)?;
            let program = build_two_mode_chip(&frame)?;
            let mut row = Vec::with_capacity(1 + mzi_dbs.len());
            row.push(r);
            for &db in mzi_dbs {
                let model = LossModel::scaled_from_mzi(db, part_fraction);
                let mut lossy = apply_loss_model(&program, &model)?;
                if mitigate {
                    lossy = compensate_displacement_for_loss(&lossy)?;
                }
                let out = simulate(&lossy)?.reduced.expect("chip has an ancilla");
                row.push(fidelity(&ideal, &out)?);
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let mut columns = vec!["r".to_string()];
    columns.extend(mzi_dbs.iter().map(|db| format!("fidelity_at_{db}_db")));
    Ok(SweepResult {
        label: "loss_fidelity_grid".into(),
        metadata: vec![
            ("part_fraction".into(), format!("{part_fraction}")),
            ("mitigate".into(), format!("{mitigate}")),
        ],
        columns,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn fidelity_curve_matches_reference_points() {
        // strongest squeezing the threshold study uses
        for (eta, expect) in [
            (1e-4, 0.9992543462574791),
            (1e-3, 0.9925931689563818),
            (1e-2, 0.9305606212775553),
        ] {
            let f = displacement_fidelity_point(1.73, 0.5, eta).unwrap();
            assert_abs_diff_eq!(f, expect, epsilon = 1e-12);
        }
    }

    #[test]
    fn fidelity_is_displacement_independent_and_one_without_squeezing() {
        let a = displacement_fidelity_point(1.0, 0.2, 1e-3).unwrap();
        let b = displacement_fidelity_point(1.0, 2.0, 1e-3).unwrap();
        assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        let f = displacement_fidelity_point(0.0, 0.5, 1e-2).unwrap();
        assert_abs_diff_eq!(f, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn infidelity_scales_linearly_in_the_coupling() {
        for (r, expect_slope) in [(0.5, 0.9998938802308971), (1.0, 0.9994605868151157)] {
            let f1 = displacement_fidelity_point(r, 0.5, 1e-4).unwrap();
            let f2 = displacement_fidelity_point(r, 0.5, 1e-3).unwrap();
            let slope = ((1.0 - f2) / (1.0 - f1)).log10();
            assert_abs_diff_eq!(slope, expect_slope, epsilon = 1e-6);
        }
    }

    #[test]
    fn thresholds_match_reference_bisections() {
        let t95 = eta_threshold_db(1.73, 0.95, 1e-6).unwrap();
        assert_abs_diff_eq!(t95, -21.516147570259715, epsilon = 1e-4);
        let t98 = eta_threshold_db(1.73, 0.98, 1e-6).unwrap();
        assert_abs_diff_eq!(t98, -25.630572361016522, epsilon = 1e-4);
        // coarse tolerance stays within its granularity
        let coarse = eta_threshold_db(1.73, 0.95, 0.01).unwrap();
        assert!((coarse - t95).abs() < 0.01);
    }

    #[test]
    fn threshold_rejects_unsqueezed_input() {
        assert!(matches!(
            eta_threshold_db(0.0, 0.95, 0.01),
            Err(Error::BisectionFailed(_))
        ));
    }

    #[test]
    fn fitted_constants_reproduce_their_thresholds() {
        let rs: Vec<f64> = (3..=18).map(|i| i as f64 / 10.0).collect();
        let fit = fit_bound_constants(0.95, &rs, 1e-4).unwrap();
        assert!(
            fit.max_residual_db < 0.5,
            "fit residual {} dB",
            fit.max_residual_db
        );
        assert!(fit.a < 0.0 && fit.b > 0.0, "a = {}, b = {}", fit.a, fit.b);
        // fit extrapolates to the strong-squeezing threshold
        let t = eta_threshold_db(1.73, 0.95, 1e-4).unwrap();
        assert!((fit.predict(1.73) - t).abs() < 0.5);
    }

    #[test]
    fn loss_sweep_orders_fidelities_and_rewards_compensation() {
        let sweep = default_loss_sweep(0.8, &[0.0, 0.5, 1.0, 2.2]).unwrap();
        let f_raw = sweep.column("fidelity").unwrap();
        let f_tuned = sweep.column("fidelity_compensated").unwrap();
        for (a, b) in f_raw.iter().zip(&f_tuned) {
            assert!(b >= &(a - 1e-12), "compensation hurt: {a} -> {b}");
        }
        // fidelity falls with loss on both paths
        for w in f_tuned.windows(2) {
            assert!(w[1] < w[0]);
        }
        // no loss: compensation is a no-op and the only cost is skim noise
        assert_abs_diff_eq!(f_raw[0], f_tuned[0], epsilon = 1e-12);
        assert!(f_raw[0] > 0.995 && f_raw[0] < 1.0);
        // with loss the uncompensated gap is material
        assert!(f_tuned[3] - f_raw[3] > 1e-4);
    }

    #[test]
    fn csv_rendering_is_deterministic_and_parseable() {
        let sweep = SweepResult {
            label: "demo".into(),
            metadata: vec![("k".into(), "v".into())],
            columns: vec!["x".into(), "y".into()],
            rows: vec![vec![1.0, 0.5], vec![2.0, 0.25]],
        };
        let csv = sweep.to_csv();
        assert!(csv.starts_with("# label: demo\n# k: v\nx,y\n"));
        assert!(csv.contains("1.0000000000000000e0,5.0000000000000000e-1"));
        let again = sweep.to_csv();
        assert_eq!(csv, again);
    }

    #[test]
    fn loss_grid_is_monotone_in_squeezing_and_loss() {
        let rs = [0.3, 0.65, 1.0];
        let dbs = [0.0, 0.5, 2.2];
        let raw = loss_fidelity_grid(&rs, &dbs, DEFAULT_CELL_PART_FRACTION, false).unwrap();
        let tuned = loss_fidelity_grid(&rs, &dbs, DEFAULT_CELL_PART_FRACTION, true).unwrap();
        assert_eq!(raw.columns[1], "fidelity_at_0_db");
        for (rr, tr) in raw.rows.iter().zip(&tuned.rows) {
            // zero loss leaves only skim noise on both paths
            assert!(rr[1] > 0.99 && rr[1] <= 1.0);
            assert_abs_diff_eq!(rr[1], tr[1], epsilon = 1e-12);
            for col in 1..rr.len() {
                assert!(tr[col] >= rr[col] - 1e-12, "mitigation hurt at {col}");
            }
            // fidelity falls with loss along each row
            for col in 2..rr.len() {
                assert!(rr[col] < rr[col - 1]);
                assert!(tr[col] < tr[col - 1]);
            }
        }
        // and with squeezing down each lossy column
        for col in 2..=3 {
            for pair in tuned.rows.windows(2) {
                assert!(pair[1][col] < pair[0][col]);
            }
        }
    }
}
