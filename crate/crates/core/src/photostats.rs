//! Photocount statistics of light emerging from a single medium.
//!
//! A single-mode squeezed coherent state enters the medium in left mode
//! `m0`. The medium adds thermal (absorbing, `f >= 0`) or spontaneous
//! emission (amplifying, `f < 0`) noise with Bose–Einstein occupation `f`.
//! Photons are counted either directly, with efficiency `d` on a set of
//! outgoing modes, or after mixing one transmitted mode with a strong local
//! oscillator on a beam splitter of transmittance `κ` (homodyne detection).
//!
//! All counting statistics are narrowband: thermal contributions that do not
//! involve the squeezed light scale with detector bandwidth times counting
//! time and are reported separately by [`thermal_cumulant_densities`].

#[allow(unused_imports)]
use num_traits::Float as _;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64 as C64;

use crate::linalg::{CMatrix, Lu};
use crate::medium::{deviation_from_unitarity, ScatteringMatrix};
use crate::{Error, Result};

/// Squeezed coherent input `|α, ρ, φ>` in left mode `incident_mode`.
///
/// The squeeze operator maps `a -> a cosh ρ - a† e^{iφ} sinh ρ`, so a real
/// `α` with `φ = 0` is amplitude squeezed.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SqueezedInput {
    /// Coherent displacement.
    pub alpha: C64,
    /// Squeeze parameter, `ρ >= 0`.
    pub rho: f64,
    /// Squeeze phase.
    pub phi: f64,
    /// Left-side mode the light is injected into (0-based).
    pub incident_mode: usize,
}

impl SqueezedInput {
    /// Validated constructor.
    pub fn new(alpha: C64, rho: f64, phi: f64, incident_mode: usize) -> Result<Self> {
        let input = SqueezedInput {
            alpha,
            rho,
            phi,
            incident_mode,
        };
        input.validate()?;
        Ok(input)
    }

    /// Check parameter ranges.
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha.re.is_finite() && self.alpha.im.is_finite()) {
            return Err(Error::invalid("alpha", "must be finite"));
        }
        if !(self.rho >= 0.0 && self.rho.is_finite()) {
            return Err(Error::invalid("rho", "must be finite and >= 0"));
        }
        if !self.phi.is_finite() {
            return Err(Error::invalid("phi", "must be finite"));
        }
        Ok(())
    }

    /// Mean photon number `|α|² + sinh² ρ`.
    pub fn mean_photons(&self) -> f64 {
        self.alpha.norm_sqr() + self.rho.sinh().powi(2)
    }

    fn check_mode(&self, n_modes: usize) -> Result<()> {
        if self.incident_mode >= n_modes {
            return Err(Error::invalid("incident_mode", "must be below the mode count"));
        }
        Ok(())
    }
}

/// Fano factor `Var n / <n>` of the squeezed coherent state.
/// Bose–Einstein occupation `1/(e^x - 1)` at `x = ħω/kT`. Negative `x`
/// describes a population-inverted medium and gives `f < -1`.
pub fn bose_einstein(hbar_omega_over_kt: f64) -> Result<f64> {
    if hbar_omega_over_kt == 0.0 || hbar_omega_over_kt.is_nan() {
        return Err(Error::invalid("hbar_omega_over_kT", "must be nonzero"));
    }
    Ok(1.0 / libm::expm1(hbar_omega_over_kt))
}

/// Fano factor of the incident squeezed coherent state,
/// `1 + (Var n - <n>) / <n>` with `<n> = |α|² + sinh²ρ`.
pub fn fano_in_squeezed(input: &SqueezedInput) -> Result<f64> {
    input.validate()?;
    let mean = input.mean_photons();
    if mean == 0.0 {
        return Err(Error::ZeroMeanCount);
    }
    let (s, c) = (input.rho.sinh(), input.rho.cosh());
    let a2 = input.alpha.norm_sqr();
    let arg = 2.0 * input.alpha.arg() - input.phi;
    // Var n - <n> = |α|²(2 sinh²ρ - sinh 2ρ cos(2 arg α - φ)) + sinh²ρ cosh 2ρ.
    let excess = a2 * (2.0 * s * s - 2.0 * s * c * arg.cos()) + s * s * (2.0 * s * s + 1.0);
    Ok(1.0 + excess / mean)
}

/// Detector layout.
#[derive(Clone, Debug, PartialEq)]
pub struct DetectionConfig {
    /// Quantum efficiency `d ∈ [0, 1]`.
    pub efficiency: f64,
    /// Outgoing modes seen by the direct-detection photodetector, as indices
    /// into `0..2N` (left modes first).
    pub detected_modes: Vec<usize>,
    /// Transmittance `κ ∈ (0, 1)` of the homodyne beam splitter.
    pub coupling: f64,
    /// Transmitted (right-side) mode mixed with the local oscillator,
    /// 0-based within the right side.
    pub probe_mode: usize,
}

impl DetectionConfig {
    /// Direct detection of all transmitted modes, homodyne probe on right
    /// mode `probe_mode`.
    pub fn transmitted(n_modes: usize, efficiency: f64, coupling: f64, probe_mode: usize) -> Self {
        DetectionConfig {
            efficiency,
            detected_modes: (n_modes..2 * n_modes).collect(),
            coupling,
            probe_mode,
        }
    }

    /// Check ranges against a medium with `n_modes` modes per side.
    pub fn validate(&self, n_modes: usize) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::invalid("efficiency", "must lie in [0, 1]"));
        }
        if !(self.coupling > 0.0 && self.coupling < 1.0) {
            return Err(Error::invalid("coupling", "must lie in (0, 1)"));
        }
        if self.probe_mode >= n_modes {
            return Err(Error::invalid("probe_mode", "must be below the mode count"));
        }
        let mut seen = alloc::vec![false; 2 * n_modes];
        for &m in &self.detected_modes {
            if m >= 2 * n_modes {
                return Err(Error::invalid("detected_modes", "index outside 0..2N"));
            }
            if seen[m] {
                return Err(Error::invalid("detected_modes", "duplicate index"));
            }
            seen[m] = true;
        }
        Ok(())
    }

    fn weights(&self, n_modes: usize) -> Vec<f64> {
        let mut w = alloc::vec![0.0; 2 * n_modes];
        for &m in &self.detected_modes {
            w[m] = self.efficiency;
        }
        w
    }
}

/// First two factorial cumulants of the photocount.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cumulants {
    /// Mean count.
    pub k1: f64,
    /// Second factorial cumulant, `Var n - <n>`.
    pub k2: f64,
}

impl Cumulants {
    /// `1 + k2 / k1`.
    pub fn fano(&self) -> f64 {
        1.0 + self.k2 / self.k1
    }
}

/// A Fano factor split into its physical contributions:
/// `value = 1 + incident + beating + probe_phase`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FanoBreakdown {
    /// Total Fano factor.
    pub value: f64,
    /// Noise carried in by the squeezed light itself.
    pub incident: f64,
    /// Beating of the signal with thermal or spontaneous-emission noise.
    pub beating: f64,
    /// Phase-sensitive interference with the local oscillator (homodyne only).
    pub probe_phase: f64,
}

/// Mode sums needed by direct detection, for input in left mode `m0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct DirectSums {
    /// `[S† D S]_{m0 m0}`.
    pub(crate) transmission: f64,
    /// `[S† D Q D S]_{m0 m0}` with `Q = 1 - S S†`.
    pub(crate) beating: f64,
}

pub(crate) fn direct_sums(s: &ScatteringMatrix, q: &CMatrix, weights: &[f64], m0: usize) -> DirectSums {
    let col = s.column(m0);
    let v: Vec<C64> = col.iter().zip(weights).map(|(&z, &w)| z * w).collect();
    let transmission: f64 = col
        .iter()
        .zip(weights)
        .map(|(z, &w)| w * z.norm_sqr())
        .sum();
    let qv = q.mul_vec(&v);
    let beating = crate::linalg::inner(&v, &qv).re;
    DirectSums {
        transmission,
        beating,
    }
}

fn check_shapes(s: &ScatteringMatrix, input: &SqueezedInput, det: &DetectionConfig) -> Result<()> {
    input.validate()?;
    input.check_mode(s.n_modes())?;
    det.validate(s.n_modes())
}

/// Thermal (or spontaneous-emission) cumulants per unit bandwidth and counting
/// time, present even without input light: `(f tr DQ, f² tr (DQ)²)`.
pub fn thermal_cumulant_densities(
    s: &ScatteringMatrix,
    det: &DetectionConfig,
    occupation: f64,
) -> Result<(f64, f64)> {
    det.validate(s.n_modes())?;
    let q = deviation_from_unitarity(s);
    let w = det.weights(s.n_modes());
    let mut k1 = 0.0;
    let mut k2 = 0.0;
    for (i, &wi) in w.iter().enumerate() {
        if wi == 0.0 {
            continue;
        }
        k1 += wi * q[(i, i)].re;
        for (j, &wj) in w.iter().enumerate() {
            if wj != 0.0 {
                k2 += wi * wj * q[(i, j)].norm_sqr();
            }
        }
    }
    Ok((occupation * k1, occupation * occupation * k2))
}

/// Closed-form first two factorial cumulants of direct detection, including
/// the thermal densities.
pub fn direct_cumulants_squeezed(
    s: &ScatteringMatrix,
    input: &SqueezedInput,
    det: &DetectionConfig,
    occupation: f64,
) -> Result<Cumulants> {
    check_shapes(s, input, det)?;
    let (t1, t2) = thermal_cumulant_densities(s, det, occupation)?;
    let q = deviation_from_unitarity(s);
    let sums = direct_sums(s, &q, &det.weights(s.n_modes()), input.incident_mode);
    let mean_in = input.mean_photons();
    let excess_in = if mean_in > 0.0 {
        mean_in * (fano_in_squeezed(input)? - 1.0)
    } else {
        0.0
    };
    Ok(Cumulants {
        k1: t1 + mean_in * sums.transmission,
        k2: t2
            + 2.0 * occupation * mean_in * sums.beating
            + sums.transmission * sums.transmission * excess_in,
    })
}

/// Fano factor of direct detection,
/// `F = 1 + [S†DS](F_in - 1) + 2f [S†DQDS] / [S†DS]`.
pub fn fano_direct(
    s: &ScatteringMatrix,
    input: &SqueezedInput,
    det: &DetectionConfig,
    occupation: f64,
) -> Result<FanoBreakdown> {
    check_shapes(s, input, det)?;
    let q = deviation_from_unitarity(s);
    let sums = direct_sums(s, &q, &det.weights(s.n_modes()), input.incident_mode);
    if sums.transmission <= 0.0 {
        return Err(Error::ZeroTransmission);
    }
    let f_in = fano_in_squeezed(input)?;
    Ok(direct_breakdown(sums, f_in, occupation))
}

pub(crate) fn direct_breakdown(sums: DirectSums, f_in: f64, occupation: f64) -> FanoBreakdown {
    let incident = sums.transmission * (f_in - 1.0);
    let beating = 2.0 * occupation * sums.beating / sums.transmission;
    FanoBreakdown {
        value: 1.0 + incident + beating,
        incident,
        beating,
        probe_phase: 0.0,
    }
}

/// Per-medium quantities entering homodyne detection.
#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct HomodyneSums {
    /// `t_{n0 m0}`.
    pub(crate) t: C64,
    /// `(1 - r r† - t t†)_{n0 n0}`.
    pub(crate) q: f64,
}

pub(crate) fn homodyne_sums(s: &ScatteringMatrix, n0: usize, m0: usize) -> HomodyneSums {
    let t = s.t();
    let r = s.r();
    let row_t: f64 = t.row(n0).iter().map(|z| z.norm_sqr()).sum();
    let row_r: f64 = r.row(n0).iter().map(|z| z.norm_sqr()).sum();
    HomodyneSums {
        t: t[(n0, m0)],
        q: 1.0 - row_r - row_t,
    }
}

/// Fano factor of homodyne detection with local-oscillator phase `arg β`:
/// `F = 1 + 2dκ|t|² sinh²ρ + 2dκ f Q_{n0 n0} - dκ Re[e^{i(φ - 2 arg β)} t²] sinh 2ρ`.
pub fn fano_homodyne(
    s: &ScatteringMatrix,
    input: &SqueezedInput,
    det: &DetectionConfig,
    occupation: f64,
    arg_beta: f64,
) -> Result<FanoBreakdown> {
    check_shapes(s, input, det)?;
    let h = homodyne_sums(s, det.probe_mode, input.incident_mode);
    if h.t.norm_sqr() == 0.0 {
        return Err(Error::ZeroTransmission);
    }
    Ok(homodyne_breakdown(h, input, det, occupation, arg_beta))
}

pub(crate) fn homodyne_breakdown(
    h: HomodyneSums,
    input: &SqueezedInput,
    det: &DetectionConfig,
    occupation: f64,
    arg_beta: f64,
) -> FanoBreakdown {
    let dk = det.efficiency * det.coupling;
    let sh = input.rho.sinh();
    let incident = 2.0 * dk * h.t.norm_sqr() * sh * sh;
    let beating = 2.0 * dk * occupation * h.q;
    let probe_phase = -dk
        * (C64::from_polar(1.0, input.phi - 2.0 * arg_beta) * h.t * h.t).re
        * (2.0 * input.rho).sinh();
    FanoBreakdown {
        value: 1.0 + incident + beating + probe_phase,
        incident,
        beating,
        probe_phase,
    }
}

/// Reduce a probe phase to `[0, π)`; `arg β` enters only as `2 arg β`.
fn wrap_phase(x: f64) -> f64 {
    let r = x % PI;
    if r < 0.0 {
        r + PI
    } else {
        r
    }
}

/// Local-oscillator phase `φ/2 + arg t`, reduced to `[0, π)`, which
/// minimises the homodyne Fano factor.
pub fn optimal_probe_phase(t: C64, phi: f64) -> f64 {
    wrap_phase(0.5 * phi + t.arg())
}

/// Homodyne Fano factor at the optimal local-oscillator phase,
/// `1 - 2dκ|t|² e^{-ρ} sinh ρ + 2dκ f Q_{n0 n0}`, and that phase.
pub fn fano_homodyne_min(
    s: &ScatteringMatrix,
    input: &SqueezedInput,
    det: &DetectionConfig,
    occupation: f64,
) -> Result<(FanoBreakdown, f64)> {
    check_shapes(s, input, det)?;
    let h = homodyne_sums(s, det.probe_mode, input.incident_mode);
    if h.t.norm_sqr() == 0.0 {
        return Err(Error::ZeroTransmission);
    }
    let phase = optimal_probe_phase(h.t, input.phi);
    Ok((homodyne_min_breakdown(h, input, det, occupation), phase))
}

pub(crate) fn homodyne_min_breakdown(
    h: HomodyneSums,
    input: &SqueezedInput,
    det: &DetectionConfig,
    occupation: f64,
) -> FanoBreakdown {
    let dk = det.efficiency * det.coupling;
    let t2 = h.t.norm_sqr();
    let sh = input.rho.sinh();
    let incident = 2.0 * dk * t2 * sh * sh;
    let probe_phase = -dk * t2 * (2.0 * input.rho).sinh();
    let beating = 2.0 * dk * occupation * h.q;
    // Combined form avoids the cancellation between the first and last terms.
    let value = 1.0 - 2.0 * dk * t2 * (-input.rho).exp() * sh + beating;
    FanoBreakdown {
        value,
        incident,
        beating,
        probe_phase,
    }
}

/// Homodyne Fano factor sampled on a uniform grid of local-oscillator phases.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseScan {
    /// Grid phases `2π k / n`.
    pub phases: Vec<f64>,
    /// Fano factor at each phase.
    pub values: Vec<f64>,
    /// Smallest grid value.
    pub grid_min: f64,
    /// Minimum of the exact `cos 2θ` harmonic fitted to the grid.
    pub refined_min: f64,
    /// Phase in `[0, π)` of the refined minimum.
    pub refined_argmin: f64,
}

/// Scan the local-oscillator phase over `n_points` grid points.
///
/// The Fano factor is exactly `a + b cos 2θ + c sin 2θ` in the phase, so the
/// three Fourier coefficients of the grid (at least 3 points) determine the
/// minimum to roundoff.
pub fn phase_scan(
    s: &ScatteringMatrix,
    input: &SqueezedInput,
    det: &DetectionConfig,
    occupation: f64,
    n_points: usize,
) -> Result<PhaseScan> {
    if n_points < 3 {
        return Err(Error::invalid("n_points", "need at least 3 phases"));
    }
    check_shapes(s, input, det)?;
    let h = homodyne_sums(s, det.probe_mode, input.incident_mode);
    if h.t.norm_sqr() == 0.0 {
        return Err(Error::ZeroTransmission);
    }
    let phases: Vec<f64> = (0..n_points)
        .map(|k| 2.0 * PI * k as f64 / n_points as f64)
        .collect();
    let values: Vec<f64> = phases
        .iter()
        .map(|&p| homodyne_breakdown(h, input, det, occupation, p).value)
        .collect();
    let grid_min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let (refined_min, refined_argmin) = harmonic_minimum(&phases, &values);
    Ok(PhaseScan {
        phases,
        values,
        grid_min,
        refined_min,
        refined_argmin,
    })
}

/// Least-squares fit of `a + b cos 2θ + c sin 2θ` to uniformly spaced
/// samples; returns the fitted minimum and its phase in `[0, π)`.
fn harmonic_minimum(phases: &[f64], values: &[f64]) -> (f64, f64) {
    let n = phases.len() as f64;
    let mut a = 0.0;
    let mut b = 0.0;
    let mut c = 0.0;
    for (&p, &v) in phases.iter().zip(values) {
        a += v;
        b += v * (2.0 * p).cos();
        c += v * (2.0 * p).sin();
    }
    a /= n;
    b *= 2.0 / n;
    c *= 2.0 / n;
    let amp = b.hypot(c);
    let argmin = wrap_phase(0.5 * (c.atan2(b) + PI));
    (a - amp, argmin)
}

/// `m(z) = -z [S† (1 - z f D Q)⁻¹ D S]_{m0 m0}` for the detector `det`,
/// incident mode `m0` and occupation `f`. It is real for real `z`; an
/// imaginary residue above `1e-10` is reported as an error.
pub fn m_element(s: &ScatteringMatrix, m0: usize, det: &DetectionConfig, occupation: f64, z: f64) -> Result<f64> {
    let n = s.n_modes();
    det.validate(n)?;
    if m0 >= n {
        return Err(Error::invalid("incident_mode", "must be below the mode count"));
    }
    let q = deviation_from_unitarity(s);
    m_element_with(s, &q, &det.weights(n), m0, occupation, z)
}

fn m_element_with(
    s: &ScatteringMatrix,
    q: &CMatrix,
    weights: &[f64],
    m0: usize,
    occupation: f64,
    z: f64,
) -> Result<f64> {
    let dim = weights.len();
    let mut a = CMatrix::identity(dim);
    for i in 0..dim {
        for j in 0..dim {
            a[(i, j)] -= q[(i, j)] * (z * occupation * weights[i]);
        }
    }
    let lu = Lu::factor(a).map_err(|_| Error::SingularResolvent)?;
    let col = s.column(m0);
    let ds: Vec<C64> = col.iter().zip(weights).map(|(&c, &w)| c * w).collect();
    let x = lu.solve_vec(&ds);
    let val = -crate::linalg::inner(&col, &x) * z;
    if val.im.abs() > 1e-10 * (1.0 + val.re.abs()) {
        return Err(Error::invalid("z", "generating function left the real axis"));
    }
    Ok(val.re)
}

/// Cumulant generating function of direct detection,
///
/// `F(z) = -ln det(1 - z f D Q) - ½ ln(1 + 2m s² - m² s²)
///         - m|α|² (1 + m s [s + c cos(2 arg α - φ)]) / (1 + 2m s² - m² s²)`
///
/// with `s = sinh ρ`, `c = cosh ρ` and `m = m(z)` as in the code; its
/// derivatives at `z = 0` are the factorial cumulants.
pub fn log_generating_density_direct(
    s: &ScatteringMatrix,
    input: &SqueezedInput,
    det: &DetectionConfig,
    occupation: f64,
    z: f64,
) -> Result<f64> {
    check_shapes(s, input, det)?;
    let q = deviation_from_unitarity(s);
    let w = det.weights(s.n_modes());
    let spectrum = thermal_spectrum(&q, &w, occupation);
    log_generating_with(s, &q, &w, &spectrum, input, occupation, z)
}

/// Eigenvalues of `f D^½ Q D^½`, which share `det(1 - z f D Q)` with the
/// non-Hermitian product. Summing `ln(1 - z λ)` with `ln1p` keeps the
/// logarithm accurate to relative precision near `z = 0`, which the finite
/// differences need.
fn thermal_spectrum(q: &CMatrix, w: &[f64], occupation: f64) -> Vec<f64> {
    let dim = w.len();
    let root: Vec<f64> = w.iter().map(|x| x.sqrt()).collect();
    let b = CMatrix::from_fn(dim, dim, |i, j| q[(i, j)] * (occupation * root[i] * root[j]));
    crate::linalg::hermitian_eigenvalues(&b.hermitian_part())
}

fn log_generating_with(
    s: &ScatteringMatrix,
    q: &CMatrix,
    w: &[f64],
    spectrum: &[f64],
    input: &SqueezedInput,
    occupation: f64,
    z: f64,
) -> Result<f64> {
    let mut log_det = 0.0;
    for &l in spectrum {
        let x = -z * l;
        if !(x > -1.0) {
            return Err(Error::DomainError { value: 1.0 + x });
        }
        log_det += libm::log1p(x);
    }
    let m = m_element_with(s, q, w, input.incident_mode, occupation, z)?;
    let sh = input.rho.sinh();
    let ch = input.rho.cosh();
    let s2 = sh * sh;
    let excess = 2.0 * m * s2 - m * m * s2;
    if !(excess > -1.0) {
        return Err(Error::DomainError { value: 1.0 + excess });
    }
    let cos_term = (2.0 * input.alpha.arg() - input.phi).cos();
    let coherent = m * input.alpha.norm_sqr() * (1.0 + m * sh * (sh + ch * cos_term)) / (1.0 + excess);
    Ok(-log_det - 0.5 * libm::log1p(excess) - coherent)
}

/// Factorial cumulants `κ_1..κ_order` (order ≤ 4) from central finite
/// differences of [`log_generating_density_direct`], refined by two levels of
/// Richardson extrapolation.
///
/// Fails with [`Error::PrecisionLoss`] when the two best estimates disagree
/// by more than `1e-5` relative.
pub fn numeric_factorial_cumulants(
    order: usize,
    s: &ScatteringMatrix,
    input: &SqueezedInput,
    det: &DetectionConfig,
    occupation: f64,
) -> Result<Vec<f64>> {
    if !(1..=4).contains(&order) {
        return Err(Error::invalid("order", "must be between 1 and 4"));
    }
    check_shapes(s, input, det)?;
    let q = deviation_from_unitarity(s);
    let w = det.weights(s.n_modes());
    let spectrum = thermal_spectrum(&q, &w, occupation);
    let gf = |z: f64| log_generating_with(s, &q, &w, &spectrum, input, occupation, z);
    let f0 = gf(0.0)?;
    let mut out = Vec::with_capacity(order);
    for k in 1..=order {
        // Higher orders amplify roundoff as h^-k, so they need larger steps.
        let h0 = match k {
            1 | 2 => 1e-2,
            3 => 2e-2,
            _ => 4e-2,
        };
        let scale = 1.0 / (1.0 + input.mean_photons() + occupation.abs());
        let h0 = h0 * scale.max(1e-3);
        let mut d = [0.0; 3];
        for (level, di) in d.iter_mut().enumerate() {
            let h = h0 / (1u32 << level) as f64;
            *di = central_difference(k, h, f0, &gf)?;
        }
        let r1a = (4.0 * d[1] - d[0]) / 3.0;
        let r1b = (4.0 * d[2] - d[1]) / 3.0;
        let r2 = (16.0 * r1b - r1a) / 15.0;
        let disagreement = (r2 - r1b).abs() / r2.abs().max(1e-300);
        if disagreement > 1e-5 && (r2 - r1b).abs() > 1e-12 {
            return Err(Error::PrecisionLoss {
                order: k,
                disagreement,
            });
        }
        out.push(r2);
    }
    Ok(out)
}

fn central_difference(
    k: usize,
    h: f64,
    f0: f64,
    gf: &impl Fn(f64) -> Result<f64>,
) -> Result<f64> {
    Ok(match k {
        1 => (gf(h)? - gf(-h)?) / (2.0 * h),
        2 => (gf(h)? - 2.0 * f0 + gf(-h)?) / (h * h),
        3 => (gf(2.0 * h)? - 2.0 * gf(h)? + 2.0 * gf(-h)? - gf(-2.0 * h)?) / (2.0 * h * h * h),
        _ => {
            (gf(2.0 * h)? - 4.0 * gf(h)? + 6.0 * f0 - 4.0 * gf(-h)? + gf(-2.0 * h)?)
                / (h * h * h * h)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::medium::MediumKind;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn scalar_channel(t: C64, r: C64) -> ScatteringMatrix {
        let m = |x: C64| CMatrix::from_diagonal(&[x]);
        ScatteringMatrix::from_blocks(m(r), m(t), m(t), m(r), MediumKind::Absorbing)
    }

    #[test]
    fn fano_in_limits() {
        let coh = SqueezedInput::new(c(2.0, 1.0), 0.0, 0.3, 0).unwrap();
        assert_eq!(fano_in_squeezed(&coh).unwrap(), 1.0);
        let vac = SqueezedInput::new(c(0.0, 0.0), 0.7, 0.0, 0).unwrap();
        assert!((fano_in_squeezed(&vac).unwrap() - (1.0 + (1.4f64).cosh())).abs() < 1e-12);
        let bright = SqueezedInput::new(c(10.0, 0.0), 0.5, 0.0, 0).unwrap();
        assert!((fano_in_squeezed(&bright).unwrap() - (-1.0f64).exp()).abs() < 0.02);
        let vacuum = SqueezedInput::new(c(0.0, 0.0), 0.0, 0.0, 0).unwrap();
        assert_eq!(fano_in_squeezed(&vacuum), Err(Error::ZeroMeanCount));
    }

    #[test]
    fn bose_einstein_values() {
        assert!((bose_einstein(2f64.ln()).unwrap() - 1.0).abs() < 1e-15);
        assert!((bose_einstein(1001f64.ln()).unwrap() - 1e-3).abs() < 1e-15);
        assert!(bose_einstein(-1.0).unwrap() < -1.0);
        assert!(bose_einstein(0.0).is_err());
    }

    #[test]
    fn m_element_closed_forms() {
        let det = DetectionConfig::transmitted(1, 1.0, 0.5, 0);
        let lossy = scalar_channel(c(0.6f64.sqrt(), 0.0), c(0.0, 0.0));
        assert_eq!(m_element(&lossy, 0, &det, 0.1, 0.0).unwrap(), 0.0);
        let m = m_element(&lossy, 0, &det, 0.1, 0.3).unwrap();
        assert!((m + 0.3 * 0.6 / (1.0 - 0.3 * 0.4 * 0.1)).abs() < 1e-15);
        let lossless = scalar_channel(C64::from_polar(0.8, 0.3), C64::from_polar(0.6, 0.3 - core::f64::consts::FRAC_PI_2));
        let all = DetectionConfig {
            detected_modes: alloc::vec![0, 1],
            ..det.clone()
        };
        assert!((m_element(&lossless, 0, &all, 0.4, 0.7).unwrap() + 0.7).abs() < 1e-14);
        assert!(m_element(&lossy, 1, &det, 0.1, 0.3).is_err());
    }

    #[test]
    fn lossy_channel_direct_fano() {
        let s = scalar_channel(c(0.6f64.sqrt(), 0.0), c(0.0, 0.0));
        let input = SqueezedInput::new(c(1.0, 0.0), 0.3, 0.0, 0).unwrap();
        let det = DetectionConfig::transmitted(1, 1.0, 0.5, 0);
        let f_in = fano_in_squeezed(&input).unwrap();
        let out = fano_direct(&s, &input, &det, 0.2).unwrap();
        // Q = 0.4 on both outputs: beating = 2 f 0.6 0.4 / 0.6.
        let expected = 1.0 + 0.6 * (f_in - 1.0) + 2.0 * 0.2 * 0.4;
        assert!((out.value - expected).abs() < 1e-14);
    }

    #[test]
    fn homodyne_minimum_at_predicted_phase() {
        let s = scalar_channel(C64::from_polar(0.7, 0.4), c(0.0, 0.0));
        let input = SqueezedInput::new(c(1.0, 0.0), 0.6, 0.9, 0).unwrap();
        let det = DetectionConfig::transmitted(1, 0.8, 0.3, 0);
        let (best, phase) = fano_homodyne_min(&s, &input, &det, 0.05).unwrap();
        assert!((phase - (0.45 + 0.4)).abs() < 1e-15);
        let at = fano_homodyne(&s, &input, &det, 0.05, phase).unwrap();
        assert!((at.value - best.value).abs() < 1e-14);
        for k in 0..50 {
            let other = fano_homodyne(&s, &input, &det, 0.05, k as f64 * 0.13).unwrap();
            assert!(other.value >= best.value - 1e-14);
        }
    }

    #[test]
    fn harmonic_fit_recovers_exact_minimum() {
        let phases: Vec<f64> = (0..8).map(|k| 2.0 * PI * k as f64 / 8.0).collect();
        let values: Vec<f64> = phases.iter().map(|&p| 2.0 + 0.5 * (2.0 * (p - 0.3)).cos()).collect();
        let (min, arg) = harmonic_minimum(&phases, &values);
        assert!((min - 1.5).abs() < 1e-15);
        assert!((arg - (0.3 + PI / 2.0)).abs() < 1e-14);
    }

    #[test]
    fn cumulant_orders_one_and_two_match_closed_form() {
        let s = scalar_channel(C64::from_polar(0.8, 0.2), c(0.3, 0.1));
        let input = SqueezedInput::new(c(0.9, 0.4), 0.5, 0.3, 0).unwrap();
        let det = DetectionConfig::transmitted(1, 0.9, 0.5, 0);
        let exact = direct_cumulants_squeezed(&s, &input, &det, 0.3).unwrap();
        let num = numeric_factorial_cumulants(2, &s, &input, &det, 0.3).unwrap();
        assert!((num[0] / exact.k1 - 1.0).abs() < 1e-8);
        assert!((num[1] / exact.k2 - 1.0).abs() < 1e-7);
    }
}
