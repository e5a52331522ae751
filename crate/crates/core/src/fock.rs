//! Truncated Fock-space simulation used as an independent cross-check of the
//! phase-space code path.
//!
//! States are dense tensors over photon numbers `0..cutoff` per mode.
//! Squeezing and displacement are built by exponentiating their generators in
//! a padded space and projecting back, so their matrix elements inside the
//! cutoff are accurate; mixing and phases conserve photon number and are
//! applied exactly. Lost norm is tracked and bounded by `tail_tol`.

use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::gaussian::C64;
use crate::linalg::{CMat, RMat, RVec};

/// Most modes the dense representation accepts.
pub const FOCK_MAX_MODES: usize = 4;
/// Largest per-mode dimension accepted.
pub const FOCK_MAX_CUTOFF: usize = 64;
/// Cap on total tensor size (`cutoff^n_modes`).
pub const FOCK_MAX_ENTRIES: usize = 1 << 22;
/// Default bound on cumulative truncation-induced norm loss.
pub const DEFAULT_TAIL_TOL: f64 = 1e-8;

/// A pure state in the truncated Fock basis. Amplitudes are stored densely,
/// mode 0 having the largest stride.
#[derive(Debug, Clone)]
pub struct FockState {
    n_modes: usize,
    cutoff: usize,
    tail_tol: f64,
    amps: Vec<C64>,
}

impl FockState {
    /// Vacuum state; `cutoff` is the exclusive photon-number bound per mode.
    pub fn vacuum(n_modes: usize, cutoff: usize) -> Result<Self> {
        if n_modes == 0 {
            return Err(Error::ZeroModes);
        }
        if cutoff < 2 {
            return Err(Error::FockEnvelope(format!("cutoff {cutoff} < 2")));
        }
        if n_modes > FOCK_MAX_MODES || cutoff > FOCK_MAX_CUTOFF {
            return Err(Error::FockEnvelope(format!(
                "{n_modes} modes at cutoff {cutoff} exceeds the {FOCK_MAX_MODES} mode / {FOCK_MAX_CUTOFF} cutoff envelope"
            )));
        }
        let entries = cutoff.pow(n_modes as u32);
        if entries > FOCK_MAX_ENTRIES {
            return Err(Error::FockEnvelope(format!(
                "tensor of {entries} entries exceeds the {FOCK_MAX_ENTRIES} entry envelope"
            )));
        }
        let mut amps = vec![C64::new(0.0, 0.0); entries];
        amps[0] = C64::new(1.0, 0.0);
        Ok(Self {
            n_modes,
            cutoff,
            tail_tol: DEFAULT_TAIL_TOL,
            amps,
        })
    }

    /// Replaces the allowed truncation budget.
    pub fn with_tail_tol(mut self, tol: f64) -> Self {
        self.tail_tol = tol;
        self
    }

    pub fn n_modes(&self) -> usize {
        self.n_modes
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amps
    }

    /// Amplitude of one occupation-number basis state.
    pub fn amplitude(&self, occupation: &[usize]) -> Result<C64> {
        if occupation.len() != self.n_modes {
            return Err(Error::DimensionMismatch {
                expected: self.n_modes,
                actual: occupation.len(),
            });
        }
        let mut idx = 0;
        for &n in occupation {
            if n >= self.cutoff {
                return Err(Error::FockEnvelope(format!(
                    "occupation {n} outside cutoff {}",
                    self.cutoff
                )));
            }
            idx = idx * self.cutoff + n;
        }
        Ok(self.amps[idx])
    }

    pub fn norm_sq(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum()
    }

    fn stride(&self, mode: usize) -> usize {
        self.cutoff.pow((self.n_modes - 1 - mode) as u32)
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

    fn check_norm(&self) -> Result<()> {
        let tail = 1.0 - self.norm_sq();
        if tail > self.tail_tol {
            return Err(Error::TruncationTail {
                tail,
                tol: self.tail_tol,
                cutoff: self.cutoff,
            });
        }
        Ok(())
    }

    fn apply_single_mode(&mut self, op: &CMat, mode: usize) {
        let c = self.cutoff;
        let stride = self.stride(mode);
        let outer = self.amps.len() / (c * stride);
        let mut fiber = vec![C64::new(0.0, 0.0); c];
        for o in 0..outer {
            for i in 0..stride {
                let base = o * c * stride + i;
                for n in 0..c {
                    fiber[n] = self.amps[base + n * stride];
                }
                for m in 0..c {
                    let mut acc = C64::new(0.0, 0.0);
                    for n in 0..c {
                        acc += op[(m, n)] * fiber[n];
                    }
                    self.amps[base + m * stride] = acc;
                }
            }
        }
    }

    /// Squeezes one mode by `r` along the axis `phi`, matching the
    /// phase-space squeezer.
    pub fn squeeze(&mut self, r: f64, phi: f64, mode: usize) -> Result<()> {
        if r < 0.0 {
            return Err(Error::NegativeSqueezing(r));
        }
        self.check_mode(mode)?;
        let op = squeeze_matrix(r, phi, self.cutoff);
        self.apply_single_mode(&op, mode);
        self.check_norm()
    }

    /// Displaces one mode by a complex amplitude.
    pub fn displace(&mut self, alpha: C64, mode: usize) -> Result<()> {
        self.check_mode(mode)?;
        let op = displace_matrix(alpha, self.cutoff);
        self.apply_single_mode(&op, mode);
        self.check_norm()
    }

    /// Clockwise phase rotation `a -> e^{-i theta} a`, exact in this basis.
    pub fn phase(&mut self, theta: f64, mode: usize) -> Result<()> {
        self.check_mode(mode)?;
        let c = self.cutoff;
        let stride = self.stride(mode);
        let outer = self.amps.len() / (c * stride);
        let phases: Vec<C64> = (0..c)
            .map(|n| (-C64::i() * theta * n as f64).exp())
            .collect();
        for o in 0..outer {
            for i in 0..stride {
                let base = o * c * stride + i;
                for n in 0..c {
                    self.amps[base + n * stride] *= phases[n];
                }
            }
        }
        Ok(())
    }

    /// Two-mode mixing at cross-coupling power `eta`, applied exactly within
    /// each total-photon-number block (the mixer conserves photon number).
    pub fn beamsplitter(&mut self, eta: f64, modes: (usize, usize)) -> Result<()> {
        if !(0.0..=1.0).contains(&eta) {
            return Err(Error::OutOfRange {
                name: "eta",
                value: eta,
                lo: 0.0,
                hi: 1.0,
            });
        }
        let (j, k) = modes;
        self.check_mode(j)?;
        self.check_mode(k)?;
        if j == k {
            return Err(Error::DegenerateModePair(j, k));
        }
        let c = self.cutoff;
        let delta = eta.sqrt().asin();
        let blocks = mixer_blocks(delta, c);
        let sj = self.stride(j);
        let sk = self.stride(k);

        let others: Vec<usize> = (0..self.n_modes).filter(|m| *m != j && *m != k).collect();
        let mut counters = vec![0usize; others.len()];
        let mut slab = vec![C64::new(0.0, 0.0); c * c];
        loop {
            let base: usize = others
                .iter()
                .zip(&counters)
                .map(|(&m, &n)| n * self.stride(m))
                .sum();
            for a in 0..c {
                for b in 0..c {
                    slab[a * c + b] = self.amps[base + a * sj + b * sk];
                }
            }
            for (m, block) in blocks.iter().enumerate() {
                let lo = m.saturating_sub(c - 1);
                let size = block.nrows();
                if size < 2 {
                    continue;
                }
                let mut fiber = vec![C64::new(0.0, 0.0); size];
                for b in 0..size {
                    let nj = lo + b;
                    fiber[b] = slab[nj * c + (m - nj)];
                }
                for row in 0..size {
                    let mut acc = C64::new(0.0, 0.0);
                    for col in 0..size {
                        acc += block[(row, col)] * fiber[col];
                    }
                    let nj = lo + row;
                    slab[nj * c + (m - nj)] = acc;
                }
            }
            for a in 0..c {
                for b in 0..c {
                    self.amps[base + a * sj + b * sk] = slab[a * c + b];
                }
            }
            // odometer over the spectator modes
            let mut done = true;
            for d in (0..counters.len()).rev() {
                counters[d] += 1;
                if counters[d] < c {
                    done = false;
                    break;
                }
                counters[d] = 0;
            }
            if done || counters.is_empty() {
                break;
            }
        }
        Ok(())
    }

    /// Quadrature mean and covariance computed from first and second ladder
    /// moments of the (normalized) state.
    pub fn moments(&self) -> (RVec, RMat) {
        let n = self.n_modes;
        let c = self.cutoff;
        let norm = self.norm_sq();
        let mut first = vec![C64::new(0.0, 0.0); n];
        let mut sq = vec![C64::new(0.0, 0.0); n * n]; // <a_j a_k>
        let mut xc = vec![C64::new(0.0, 0.0); n * n]; // <a_j^dag a_k>

        let mut occ = vec![0usize; n];
        for (idx, amp) in self.amps.iter().enumerate() {
            if amp.norm_sqr() == 0.0 {
                continue;
            }
            let mut rem = idx;
            for m in (0..n).rev() {
                occ[m] = rem % c;
                rem /= c;
            }
            let conj = amp.conj();
            for j in 0..n {
                let sjd = self.stride(j);
                if occ[j] + 1 < c {
                    let up = ((occ[j] + 1) as f64).sqrt();
                    first[j] += conj * up * self.amps[idx + sjd];
                    for k in 0..n {
                        // <a_j a_k>: raise j then k relative to idx
                        if k == j {
                            if occ[j] + 2 < c {
                                let up2 = ((occ[j] + 2) as f64).sqrt();
                                sq[j * n + k] += conj * up * up2 * self.amps[idx + 2 * sjd];
                            }
                        } else {
                            let skd = self.stride(k);
                            if occ[k] + 1 < c {
                                let upk = ((occ[k] + 1) as f64).sqrt();
                                sq[j * n + k] += conj * up * upk * self.amps[idx + sjd + skd];
                            }
                        }
                    }
                }
                // <a_j^dag a_k> = sum conj((a_j psi)[m]) (a_k psi)[m]
                for k in 0..n {
                    if occ[j] + 1 < c && occ[k] + 1 < c && j != k {
                        let skd = self.stride(k);
                        let upj = ((occ[j] + 1) as f64).sqrt();
                        let upk = ((occ[k] + 1) as f64).sqrt();
                        xc[j * n + k] +=
                            (upj * self.amps[idx + sjd]).conj() * upk * self.amps[idx + skd];
                    }
                }
                // diagonal of <a_j^dag a_j> = n_j |amp|^2
                xc[j * n + j] += C64::new(occ[j] as f64 * amp.norm_sqr(), 0.0);
            }
        }
        for v in first.iter_mut() {
            *v /= norm;
        }
        for v in sq.iter_mut() {
            *v /= norm;
        }
        for v in xc.iter_mut() {
            *v /= norm;
        }

        let mut mean = RVec::zeros(2 * n);
        for j in 0..n {
            mean[2 * j] = std::f64::consts::SQRT_2 * first[j].re;
            mean[2 * j + 1] = std::f64::consts::SQRT_2 * first[j].im;
        }
        let mut cov = RMat::zeros(2 * n, 2 * n);
        for j in 0..n {
            for k in 0..n {
                let s = sq[j * n + k];
                let m = xc[j * n + k];
                let delta = if j == k { 0.5 } else { 0.0 };
                let (xj, pj) = (mean[2 * j], mean[2 * j + 1]);
                let (xk, pk) = (mean[2 * k], mean[2 * k + 1]);
                cov[(2 * j, 2 * k)] = s.re + m.re + delta - xj * xk;
                cov[(2 * j + 1, 2 * k + 1)] = m.re - s.re + delta - pj * pk;
                cov[(2 * j, 2 * k + 1)] = s.im + m.im - xj * pk;
                cov[(2 * j + 1, 2 * k)] = s.im - m.im - pj * xk;
            }
        }
        (mean, (cov.clone() + cov.transpose()) * 0.5)
    }

    /// Moments of the modes in `keep` after tracing out the others.
    pub fn reduced_moments(&self, keep: &[usize]) -> Result<(RVec, RMat)> {
        for &m in keep {
            self.check_mode(m)?;
        }
        let (mean, cov) = self.moments();
        let idx: Vec<usize> = keep.iter().flat_map(|&m| [2 * m, 2 * m + 1]).collect();
        let rmean = RVec::from_fn(idx.len(), |i, _| mean[idx[i]]);
        let rcov = RMat::from_fn(idx.len(), idx.len(), |i, j| cov[(idx[i], idx[j])]);
        Ok((rmean, rcov))
    }

    /// Moments of everything except `mode`.
    pub fn partial_trace_mode(&self, mode: usize) -> Result<(RVec, RMat)> {
        self.check_mode(mode)?;
        let keep: Vec<usize> = (0..self.n_modes).filter(|m| *m != mode).collect();
        if keep.is_empty() {
            return Err(Error::ZeroModes);
        }
        self.reduced_moments(&keep)
    }
}

/// Overlap fidelity `|<a|b>|^2` of two truncated pure states, normalized.
pub fn fock_fidelity(a: &FockState, b: &FockState) -> Result<f64> {
    if a.n_modes != b.n_modes || a.cutoff != b.cutoff {
        return Err(Error::DimensionMismatch {
            expected: a.amps.len(),
            actual: b.amps.len(),
        });
    }
    let mut ov = C64::new(0.0, 0.0);
    for (x, y) in a.amps.iter().zip(&b.amps) {
        ov += x.conj() * y;
    }
    Ok(ov.norm_sqr() / (a.norm_sq() * b.norm_sq()))
}

/// Exponential of an anti-Hermitian matrix via the Hermitian eigenbasis of
/// `i g`.
fn exp_antihermitian(g: &CMat) -> CMat {
    let h = g.map(|z| z * C64::i());
    let eig = SymmetricEigen::new(h);
    let d = eig.eigenvalues.len();
    let mut phases = DMatrix::<C64>::zeros(d, d);
    for i in 0..d {
        phases[(i, i)] = (-C64::i() * eig.eigenvalues[i]).exp();
    }
    &eig.eigenvectors * phases * eig.eigenvectors.adjoint()
}

fn padded_dim(cutoff: usize) -> usize {
    (2 * cutoff).clamp(cutoff + 16, 128).max(cutoff + 4)
}

/// Matrix of the squeeze unitary on `0..cutoff`, built in a padded space.
/// The squeeze axis convention matches the phase-space squeezer: `phi = 0`
/// shrinks x.
pub fn squeeze_matrix(r: f64, phi: f64, cutoff: usize) -> CMat {
    let d = padded_dim(cutoff);
    let xi = C64::from_polar(r, 2.0 * phi);
    let mut g = CMat::zeros(d, d);
    for n in 2..d {
        let amp = (n as f64 * (n - 1) as f64).sqrt();
        g[(n - 2, n)] += xi.conj() * (amp / 2.0);
        g[(n, n - 2)] -= xi * (amp / 2.0);
    }
    let u = exp_antihermitian(&g);
    u.view((0, 0), (cutoff, cutoff)).into_owned()
}

/// Matrix of the displacement unitary on `0..cutoff`.
pub fn displace_matrix(alpha: C64, cutoff: usize) -> CMat {
    let d = padded_dim(cutoff);
    let mut g = CMat::zeros(d, d);
    for n in 0..d - 1 {
        let amp = ((n + 1) as f64).sqrt();
        g[(n + 1, n)] += alpha * amp;
        g[(n, n + 1)] -= alpha.conj() * amp;
    }
    let u = exp_antihermitian(&g);
    u.view((0, 0), (cutoff, cutoff)).into_owned()
}

/// Real rotation blocks of the mixer, one per total photon number.
/// `blocks[m]` acts on occupations `(nj, m - nj)`.
fn mixer_blocks(delta: f64, cutoff: usize) -> Vec<RMat> {
    let mut out = Vec::with_capacity(2 * cutoff - 1);
    for m in 0..=(2 * (cutoff - 1)) {
        let lo = m.saturating_sub(cutoff - 1);
        let hi = m.min(cutoff - 1);
        let size = hi - lo + 1;
        if size < 2 {
            out.push(RMat::identity(size, size));
            continue;
        }
        // generator: G e_b = sqrt((nj+1)(m-nj)) e_{b+1} - sqrt(nj(m-nj+1)) e_{b-1}
        let mut g = CMat::zeros(size, size);
        for b in 0..size {
            let nj = lo + b;
            if b + 1 < size {
                g[(b + 1, b)] += C64::new(((nj + 1) as f64 * (m - nj) as f64).sqrt(), 0.0);
            }
            if b > 0 {
                g[(b - 1, b)] -= C64::new((nj as f64 * (m - nj + 1) as f64).sqrt(), 0.0);
            }
        }
        let u = exp_antihermitian(&(g * C64::new(delta, 0.0)));
        out.push(u.map(|z| z.re));
    }
    out
}

/// Smallest cutoff keeping the estimated photon-number tail of every mode's
/// squeezed plus coherent input below `tol`. The estimate convolves the
/// analytic squeezed-vacuum distribution with a Poisson distribution.
pub fn suggest_cutoff(mode_specs: &[(f64, f64)], tol: f64) -> usize {
    let mut needed = 2usize;
    for &(r, amp) in mode_specs {
        needed = needed.max(mode_cutoff(r.abs(), amp.abs(), tol));
    }
    needed
}

fn mode_cutoff(r: f64, amp: f64, tol: f64) -> usize {
    const M: usize = 512;
    // squeezed-vacuum photon distribution, even terms only
    let mut psq = vec![0.0f64; M];
    let t2 = r.tanh().powi(2);
    psq[0] = 1.0 / r.cosh();
    let mut even = psq[0];
    for m in 1..M / 2 {
        // P(2m)/P(2m-2) = t2 (2m-1)/(2m)
        even *= t2 * (2.0 * m as f64 - 1.0) / (2.0 * m as f64);
        psq[2 * m] = even;
    }
    // Poisson distribution of the coherent part
    let lam = amp * amp;
    let mut pco = vec![0.0f64; M];
    pco[0] = (-lam).exp();
    for n in 1..M {
        pco[n] = pco[n - 1] * lam / n as f64;
    }
    // independent-convolution estimate of the combined distribution
    let mut tail_from = vec![0.0f64; M + 1];
    let mut comb = vec![0.0f64; M];
    for n in 0..M {
        let mut acc = 0.0;
        for k in 0..=n {
            acc += psq[k] * pco[n - k];
        }
        comb[n] = acc;
    }
    for n in (0..M).rev() {
        tail_from[n] = tail_from[n + 1] + comb[n];
    }
    let total = tail_from[0];
    for c in 2..M {
        if tail_from[c] < tol * total {
            // margin: mid-circuit intermediate states spread a bit wider
            // than the final-state estimate
            return (c + 4).min(M);
        }
    }
    M
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{GaussianState, SymplecticOp};
    use approx::assert_abs_diff_eq;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn assert_moments_close(fock: &FockState, gauss: &GaussianState, tol: f64) {
        let (mean, cov) = fock.moments();
        assert!(
            (&mean - gauss.mean()).amax() < tol,
            "mean mismatch {:.3e}",
            (&mean - gauss.mean()).amax()
        );
        assert!(
            (&cov - gauss.cov()).amax() < tol,
            "cov mismatch {:.3e}",
            (&cov - gauss.cov()).amax()
        );
    }

    #[test]
    fn coherent_state_has_poisson_ground_amplitude() {
        let mut f = FockState::vacuum(1, 24).unwrap();
        f.displace(c(0.5, 0.0), 0).unwrap();
        let p0 = f.amplitude(&[0]).unwrap().norm_sqr();
        assert_abs_diff_eq!(p0, (-0.25f64).exp(), epsilon = 1e-10);
        assert_abs_diff_eq!(f.norm_sq(), 1.0, epsilon = 1e-10);
    }

    #[test]
    fn squeezed_vacuum_has_even_support_only() {
        let mut f = FockState::vacuum(1, 36).unwrap();
        f.squeeze(0.7, 0.3, 0).unwrap();
        for n in (1..36).step_by(2) {
            assert!(
                f.amplitude(&[n]).unwrap().norm() < 1e-10,
                "odd term {n} populated"
            );
        }
        let p0 = f.amplitude(&[0]).unwrap().norm_sqr();
        assert_abs_diff_eq!(p0, 1.0 / 0.7f64.cosh(), epsilon = 1e-9);
    }

    #[test]
    fn squeeze_moments_match_phase_space() {
        for (r, phi) in [(0.5, 0.0), (0.8, 0.7), (0.3, -1.2)] {
            let mut f = FockState::vacuum(1, 48).unwrap();
            f.squeeze(r, phi, 0).unwrap();
            let g = SymplecticOp::squeezer(r, phi, 0, 1)
                .unwrap()
                .apply(&GaussianState::vacuum(1).unwrap())
                .unwrap();
            assert_moments_close(&f, &g, 1e-7);
        }
    }

    #[test]
    fn displace_moments_match_phase_space() {
        let mut f = FockState::vacuum(1, 36).unwrap();
        f.displace(c(0.4, -0.6), 0).unwrap();
        let g = SymplecticOp::displacement(&[c(0.4, -0.6)])
            .apply(&GaussianState::vacuum(1).unwrap())
            .unwrap();
        assert_moments_close(&f, &g, 1e-8);
    }

    #[test]
    fn phase_moments_match_phase_space() {
        let mut f = FockState::vacuum(1, 36).unwrap();
        f.displace(c(0.7, 0.2), 0).unwrap();
        f.squeeze(0.4, 0.0, 0).unwrap();
        f.phase(1.1, 0).unwrap();
        let v = GaussianState::vacuum(1).unwrap();
        let g = SymplecticOp::displacement(&[c(0.7, 0.2)])
            .then(&SymplecticOp::squeezer(0.4, 0.0, 0, 1).unwrap())
            .unwrap()
            .then(&SymplecticOp::rotation(1.1, 0, 1).unwrap())
            .unwrap()
            .apply(&v)
            .unwrap();
        assert_moments_close(&f, &g, 1e-7);
    }

    #[test]
    fn mixer_moments_match_phase_space() {
        let mut f = FockState::vacuum(2, 30).unwrap();
        f.squeeze(0.6, 0.0, 0).unwrap();
        f.displace(c(0.3, 0.1), 1).unwrap();
        f.beamsplitter(0.3, (0, 1)).unwrap();
        let v = GaussianState::vacuum(2).unwrap();
        let g = SymplecticOp::squeezer(0.6, 0.0, 0, 2)
            .unwrap()
            .then(&SymplecticOp::displacement(&[c(0.0, 0.0), c(0.3, 0.1)]))
            .unwrap()
            .then(&SymplecticOp::beamsplitter(0.3, (0, 1), 2).unwrap())
            .unwrap()
            .apply(&v)
            .unwrap();
        assert_moments_close(&f, &g, 1e-7);
        assert_abs_diff_eq!(f.norm_sq(), 1.0, epsilon = 1e-8);
    }

    #[test]
    fn single_photon_splits_evenly_on_balanced_mixer() {
        let mut f = FockState::vacuum(2, 4).unwrap();
        f.amps[0] = c(0.0, 0.0);
        let idx_10 = f.cutoff; // |1, 0>
        f.amps[idx_10] = c(1.0, 0.0);
        f.beamsplitter(0.5, (0, 1)).unwrap();
        let a10 = f.amplitude(&[1, 0]).unwrap();
        let a01 = f.amplitude(&[0, 1]).unwrap();
        assert_abs_diff_eq!(a10.norm_sqr(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(a01.norm_sqr(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(f.norm_sq(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn overlap_fidelity_matches_coherent_formula() {
        let v = FockState::vacuum(1, 24).unwrap();
        let mut cstate = FockState::vacuum(1, 24).unwrap();
        cstate.displace(c(0.5, 0.0), 0).unwrap();
        assert_abs_diff_eq!(
            fock_fidelity(&v, &cstate).unwrap(),
            0.7788007830714049,
            epsilon = 1e-9
        );
        assert_abs_diff_eq!(fock_fidelity(&cstate, &cstate).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn traced_two_mode_squeezing_is_thermal() {
        let r = 0.6;
        let mut f = FockState::vacuum(2, 30).unwrap();
        f.squeeze(r, 0.0, 0).unwrap();
        f.squeeze(r, std::f64::consts::FRAC_PI_2, 1).unwrap();
        f.beamsplitter(0.5, (0, 1)).unwrap();
        let (mean, cov) = f.partial_trace_mode(1).unwrap();
        assert!(mean.amax() < 1e-9);
        assert_abs_diff_eq!(cov[(0, 0)], 0.9053277836621874, epsilon = 1e-7);
        assert_abs_diff_eq!(cov[(1, 1)], 0.9053277836621874, epsilon = 1e-7);
        assert!(cov[(0, 1)].abs() < 1e-9);
    }

    #[test]
    fn truncation_overflow_is_reported() {
        let mut f = FockState::vacuum(1, 6).unwrap();
        let err = f.squeeze(1.5, 0.0, 0).unwrap_err();
        assert!(matches!(err, Error::TruncationTail { .. }), "{err:?}");
    }

    #[test]
    fn envelope_limits_are_enforced() {
        assert!(FockState::vacuum(5, 8).is_err());
        assert!(FockState::vacuum(1, 1).is_err());
        assert!(FockState::vacuum(1, 100).is_err());
        assert!(FockState::vacuum(4, 48).is_err()); // 48^4 > entry cap
    }

    #[test]
    fn suggested_cutoff_is_sufficient_and_monotone() {
        let c1 = suggest_cutoff(&[(0.5, 0.5)], 1e-8);
        let c2 = suggest_cutoff(&[(1.0, 0.5)], 1e-8);
        assert!(c2 > c1);
        let mut f = FockState::vacuum(1, c1).unwrap();
        f.squeeze(0.5, 0.0, 0).unwrap();
        f.displace(c(0.5, 0.0), 0).unwrap();
        assert!(1.0 - f.norm_sq() < 1e-7);
    }
}
