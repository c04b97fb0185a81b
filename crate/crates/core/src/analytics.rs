//! Closed-form ensemble averages of the Fano factor in the diffusive regime.
//!
//! Lengths enter through `s = L / ξ_a`, with `ξ_a` the absorption (or
//! amplification) length `sqrt(D τ)`, and through the ratio `l / ξ_a` of the
//! transport mean free path to `ξ_a`. The expressions hold for
//! `l ≪ ξ_a`, `l ≪ L ≪ N l` and, for gain, below the laser threshold
//! `s = π`. Amplifying formulas are the absorbing ones continued to
//! imaginary `ξ_a`.

#[allow(unused_imports)]
use num_traits::Float as _;
use core::f64::consts::PI;

use crate::{Error, Result};

/// Dimensionless geometry of a waveguide.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WaveguideRatios {
    /// `L / ξ_a`.
    pub s: f64,
    /// `l / ξ_a`.
    pub l_over_xi: f64,
    /// Number of propagating modes `N`.
    pub n_modes: usize,
}

impl WaveguideRatios {
    /// Validated constructor.
    pub fn new(s: f64, l_over_xi: f64, n_modes: usize) -> Result<Self> {
        let r = WaveguideRatios {
            s,
            l_over_xi,
            n_modes,
        };
        r.validate()?;
        Ok(r)
    }

    fn validate(&self) -> Result<()> {
        if !(self.s > 0.0 && self.s.is_finite()) {
            return Err(Error::invalid("s", "must be finite and > 0"));
        }
        if !(self.l_over_xi > 0.0 && self.l_over_xi.is_finite()) {
            return Err(Error::invalid("l_over_xi", "must be finite and > 0"));
        }
        if self.n_modes == 0 {
            return Err(Error::invalid("n_modes", "must be at least 1"));
        }
        Ok(())
    }

    /// Where the diffusive expressions are not expected to hold.
    pub fn validity(&self) -> Validity {
        Validity {
            short_medium: self.s <= self.l_over_xi,
            beyond_localization: self.s >= self.n_modes as f64 * self.l_over_xi,
        }
    }
}

/// Flags for parameters outside the regime of the diffusive formulas.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Validity {
    /// `L <= l`: not diffusive yet.
    pub short_medium: bool,
    /// `L >= N l`: localization corrections are no longer small.
    pub beyond_localization: bool,
}

impl Validity {
    /// No flag raised.
    pub fn is_clean(&self) -> bool {
        !self.short_medium && !self.beyond_localization
    }
}

/// An analytic value together with its validity flags.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AnalyticValue {
    /// The Fano factor.
    pub value: f64,
    /// Regime flags for the inputs.
    pub validity: Validity,
}

/// Local-oscillator phase convention for averaged homodyne formulas.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProbePhase {
    /// Phase re-optimised for every medium realization.
    Optimal,
    /// A fixed phase, uncorrelated with the random phase of `t`.
    Fixed,
}

fn check_physics(fano_in: f64, efficiency: f64) -> Result<()> {
    if !(fano_in >= 0.0 && fano_in.is_finite()) {
        return Err(Error::invalid("fano_in", "must be finite and >= 0"));
    }
    if !(0.0..=1.0).contains(&efficiency) {
        return Err(Error::invalid("efficiency", "must lie in [0, 1]"));
    }
    Ok(())
}

fn check_coupling(coupling: f64) -> Result<()> {
    if !(coupling > 0.0 && coupling < 1.0) {
        return Err(Error::invalid("coupling", "must lie in (0, 1)"));
    }
    Ok(())
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho >= 0.0 && rho.is_finite()) {
        return Err(Error::invalid("rho", "must be finite and >= 0"));
    }
    Ok(())
}

fn below_threshold(s: f64) -> Result<()> {
    if s >= PI {
        return Err(Error::ThresholdReached { s });
    }
    Ok(())
}

/// Taylor coefficients of the absorbing beating bracket in `s²`. The
/// series converges for `|s| < π`; 13 terms reach roundoff at `|s| = 0.5`.
const BRACKET_SERIES: [f64; 13] = [
    0.6666666666666666, // 2/3
    -0.1111111111111111, // -1/9
    0.016931216931216932, // 16/945
    -0.002447089947089947, // -37/15120
    0.00033897172786061675, // 2537/7484400
    -4.531115807570834e-05, // -740653/16345929600
    5.879506540882202e-06, // 48053/8172964800
    -7.44272303214167e-07, // -99273113/133382785536000
    9.228641063133172e-08, // 2946874793/31931838857318400
    -1.124529700826036e-08, // -1426103/126817726464000
    1.3500921933781809e-09, // 818029827709/605906642317616640000
    -1.6003953681119216e-10, // -3388485378527071/21172801709146795868160000
    1.876304334162434e-11, // 74674097017357/3979849945328345088000000
];

/// Below this `|s|` the closed forms lose digits to cancellation.
const SERIES_SWITCH: f64 = 0.5;

fn bracket_series(s2: f64, sign: f64) -> f64 {
    // B(s) = Σ c_k s^{2k+2}; the amplifying bracket is B(is).
    let mut acc = 0.0;
    let mut p = s2;
    for (k, &c) in BRACKET_SERIES.iter().enumerate() {
        let sgn = if k % 2 == 0 { 1.0 } else { sign };
        acc += sgn * c * p;
        p *= s2;
    }
    if sign < 0.0 {
        -acc
    } else {
        acc
    }
}

/// Bracket multiplying `d f / 2` in the averaged absorbing direct Fano factor,
/// `3 - (2s + coth s)/sinh s - (s coth s - 1)/sinh² s + s/sinh³ s`.
/// Rises from `2s²/3` at small `s` to 3.
pub fn absorbing_direct_bracket(s: f64) -> f64 {
    if s.abs() < SERIES_SWITCH {
        return bracket_series(s * s, 1.0);
    }
    let sh = s.sinh();
    let coth = 1.0 / s.tanh();
    3.0 - (2.0 * s + coth) / sh - (s * coth - 1.0) / (sh * sh) + s / (sh * sh * sh)
}

/// Amplifying counterpart, `3 - (2s - cot s)/sin s + (s cot s - 1)/sin² s
/// - s/sin³ s`; negative, diverging at `s = π`.
pub fn amplifying_direct_bracket(s: f64) -> f64 {
    if s.abs() < SERIES_SWITCH {
        return bracket_series(s * s, -1.0);
    }
    let sn = s.sin();
    let cot = s.cos() / sn;
    3.0 - (2.0 * s - cot) / sn + (s * cot - 1.0) / (sn * sn) - s / (sn * sn * sn)
}

/// `coth s - 1/sinh s = tanh(s/2)`, the beating factor of averaged
/// absorbing homodyne detection.
pub fn absorbing_homodyne_bracket(s: f64) -> f64 {
    (0.5 * s).tanh()
}

/// `cot s - 1/sin s = -tan(s/2)`, the amplifying counterpart.
pub fn amplifying_homodyne_bracket(s: f64) -> f64 {
    -(0.5 * s).tan()
}

/// Ensemble-averaged direct-detection Fano factor of an absorbing waveguide,
///
/// `F = 1 + (4 l d / 3 ξ_a sinh s)(F_in - 1) + (d f / 2) B(s)`
///
/// with `B` from [`absorbing_direct_bracket`]. Tends to `1 + 3 d f / 2` at
/// large `s`, independent of the input state.
pub fn fano_direct_absorbing_avg(
    ratios: &WaveguideRatios,
    fano_in: f64,
    efficiency: f64,
    occupation: f64,
) -> Result<AnalyticValue> {
    ratios.validate()?;
    check_physics(fano_in, efficiency)?;
    if !(occupation >= 0.0 && occupation.is_finite()) {
        return Err(Error::invalid("occupation", "must be finite and >= 0"));
    }
    let s = ratios.s;
    let incident = 4.0 * ratios.l_over_xi * efficiency / (3.0 * s.sinh()) * (fano_in - 1.0);
    let beating = 0.5 * efficiency * occupation * absorbing_direct_bracket(s);
    Ok(AnalyticValue {
        value: 1.0 + incident + beating,
        validity: ratios.validity(),
    })
}

/// Ensemble-averaged direct-detection Fano factor of an amplifying waveguide
/// below threshold,
///
/// `F = 1 + (4 l d / 3 ξ_a sin s)(F_in - 1) + (d f / 2) B_amp(s)`.
///
/// `f < 0`; `f = -1` is complete population inversion.
pub fn fano_direct_amplifying_avg(
    ratios: &WaveguideRatios,
    fano_in: f64,
    efficiency: f64,
    occupation: f64,
) -> Result<AnalyticValue> {
    ratios.validate()?;
    check_physics(fano_in, efficiency)?;
    if !(occupation < 0.0 && occupation.is_finite()) {
        return Err(Error::invalid("occupation", "must be finite and < 0"));
    }
    below_threshold(ratios.s)?;
    let s = ratios.s;
    let incident = 4.0 * ratios.l_over_xi * efficiency / (3.0 * s.sin()) * (fano_in - 1.0);
    let beating = 0.5 * efficiency * occupation * amplifying_direct_bracket(s);
    Ok(AnalyticValue {
        value: 1.0 + incident + beating,
        validity: ratios.validity(),
    })
}

fn squeeze_factor(rho: f64, phase: ProbePhase) -> f64 {
    match phase {
        ProbePhase::Optimal => (-rho).exp() * rho.sinh(),
        ProbePhase::Fixed => -rho.sinh() * rho.sinh(),
    }
}

/// Ensemble-averaged homodyne Fano factor of an absorbing waveguide,
///
/// `F = 1 - (8 l d κ / 3 N ξ_a sinh s) g(ρ) + (8 l d κ / 3 ξ_a) f tanh(s/2)`,
///
/// with `g = e^{-ρ} sinh ρ` at the optimal phase and `g = -sinh² ρ` for a
/// fixed phase.
pub fn fano_homodyne_absorbing_avg(
    ratios: &WaveguideRatios,
    rho: f64,
    efficiency: f64,
    coupling: f64,
    occupation: f64,
    phase: ProbePhase,
) -> Result<AnalyticValue> {
    ratios.validate()?;
    check_physics(1.0, efficiency)?;
    check_coupling(coupling)?;
    check_rho(rho)?;
    if !(occupation >= 0.0 && occupation.is_finite()) {
        return Err(Error::invalid("occupation", "must be finite and >= 0"));
    }
    let s = ratios.s;
    let pre = 8.0 * ratios.l_over_xi * efficiency * coupling / 3.0;
    let incident = -pre / (ratios.n_modes as f64 * s.sinh()) * squeeze_factor(rho, phase);
    let beating = pre * occupation * absorbing_homodyne_bracket(s);
    Ok(AnalyticValue {
        value: 1.0 + incident + beating,
        validity: ratios.validity(),
    })
}

/// Amplifying counterpart of [`fano_homodyne_absorbing_avg`] below
/// threshold: `sinh s -> sin s` and `tanh(s/2) -> -tan(s/2)`.
pub fn fano_homodyne_amplifying_avg(
    ratios: &WaveguideRatios,
    rho: f64,
    efficiency: f64,
    coupling: f64,
    occupation: f64,
    phase: ProbePhase,
) -> Result<AnalyticValue> {
    ratios.validate()?;
    check_physics(1.0, efficiency)?;
    check_coupling(coupling)?;
    check_rho(rho)?;
    if !(occupation < 0.0 && occupation.is_finite()) {
        return Err(Error::invalid("occupation", "must be finite and < 0"));
    }
    below_threshold(ratios.s)?;
    let s = ratios.s;
    let pre = 8.0 * ratios.l_over_xi * efficiency * coupling / 3.0;
    let incident = -pre / (ratios.n_modes as f64 * s.sin()) * squeeze_factor(rho, phase);
    let beating = pre * occupation * amplifying_homodyne_bracket(s);
    Ok(AnalyticValue {
        value: 1.0 + incident + beating,
        validity: ratios.validity(),
    })
}

/// Fano factors without a medium (`L = 0`, `S = 1` in the incident mode).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ZeroLengthLimits {
    /// `1 + d (F_in - 1)`.
    pub direct: f64,
    /// `1 - 2 d κ e^{-ρ} sinh ρ` when the probe mode is the incident mode,
    /// otherwise 1.
    pub homodyne_min: f64,
}

/// Fano factors of the bare detectors.
pub fn zero_length_limits(
    fano_in: f64,
    efficiency: f64,
    coupling: f64,
    rho: f64,
    probe_is_incident: bool,
) -> Result<ZeroLengthLimits> {
    check_physics(fano_in, efficiency)?;
    check_coupling(coupling)?;
    check_rho(rho)?;
    Ok(ZeroLengthLimits {
        direct: 1.0 + efficiency * (fano_in - 1.0),
        homodyne_min: if probe_is_incident {
            1.0 - 2.0 * efficiency * coupling * (-rho).exp() * rho.sinh()
        } else {
            1.0
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bracket_branches_agree_at_switch() {
        for s in [0.4999999, 0.5000001] {
            let series = bracket_series(s * s, 1.0);
            let sh = s.sinh();
            let coth = 1.0 / s.tanh();
            let direct =
                3.0 - (2.0 * s + coth) / sh - (s * coth - 1.0) / (sh * sh) + s / (sh * sh * sh);
            assert!((series / direct - 1.0).abs() < 1e-11);
            let amp_series = bracket_series(s * s, -1.0);
            let sn = s.sin();
            let cot = s.cos() / sn;
            let amp = 3.0 - (2.0 * s - cot) / sn + (s * cot - 1.0) / (sn * sn) - s / (sn * sn * sn);
            assert!((amp_series / amp - 1.0).abs() < 1e-11);
        }
    }

    #[test]
    fn threshold_is_rejected() {
        let r = WaveguideRatios::new(PI, 0.1, 10).unwrap();
        assert_eq!(
            fano_direct_amplifying_avg(&r, 1.0, 1.0, -1.0).unwrap_err(),
            Error::ThresholdReached { s: PI }
        );
    }

    #[test]
    fn validity_flags() {
        let r = WaveguideRatios::new(0.05, 0.1, 10).unwrap();
        assert!(r.validity().short_medium);
        let r = WaveguideRatios::new(1.5, 0.1, 10).unwrap();
        assert!(r.validity().beyond_localization);
        let r = WaveguideRatios::new(0.5, 0.1, 10).unwrap();
        assert!(r.validity().is_clean());
    }
}
