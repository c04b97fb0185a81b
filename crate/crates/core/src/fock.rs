//! Brute-force Fock-space photocount distributions for single-mode channels.
//!
//! These serve as an independent check of the closed-form cumulants in
//! [`crate::photostats`]: a squeezed coherent state is expanded in photon
//! number states, sent through a beam splitter (loss, with a thermal second
//! port) or a two-mode squeezer (phase-insensitive gain with an unexcited
//! idler), and counted.

#[allow(unused_imports)]
use num_traits::Float as _;
use alloc::vec;
use alloc::vec::Vec;

use num_complex::Complex64 as C64;

use crate::{Error, Result};

/// Largest tolerated probability outside the Fock cutoff.
pub const MAX_LEAKAGE: f64 = 1e-8;

/// Number-state amplitudes `c_0..c_{n_max}`.
#[derive(Clone, Debug, PartialEq)]
pub struct FockState {
    amplitudes: Vec<C64>,
}

impl FockState {
    /// Amplitudes in photon-number order.
    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    /// Highest photon number kept.
    pub fn n_max(&self) -> usize {
        self.amplitudes.len() - 1
    }

    /// `|c_n|²`.
    pub fn probabilities(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|c| c.norm_sqr()).collect()
    }

    /// `1 - Σ |c_n|²`.
    pub fn leakage(&self) -> f64 {
        1.0 - self.amplitudes.iter().map(|c| c.norm_sqr()).sum::<f64>()
    }
}

/// Smallest accepted cutoff for `|α, ρ>`, `4(|α|² + sinh²ρ) + 40`.
pub fn suggested_cutoff(alpha: C64, rho: f64) -> usize {
    let mean = alpha.norm_sqr() + rho.sinh().powi(2);
    (4.0 * mean).ceil() as usize + 40
}

/// Fock expansion of `D(α) S(ρ e^{iφ}) |0>`.
///
/// Uses the eigenvalue equation `(a cosh ρ + a† e^{iφ} sinh ρ)|ψ> = γ|ψ>`,
/// `γ = α cosh ρ + α* e^{iφ} sinh ρ`, which gives
/// `cosh ρ √(n+1) c_{n+1} = γ c_n - e^{iφ} sinh ρ √n c_{n-1}`, started from
/// `c_0 = exp(-|α|²/2 - α*² e^{iφ} tanh ρ / 2) / √cosh ρ`. The truncated
/// vector is renormalized after the leakage check.
pub fn squeezed_coherent_fock(alpha: C64, rho: f64, phi: f64, n_max: usize) -> Result<FockState> {
    if !(rho >= 0.0 && rho.is_finite()) {
        return Err(Error::invalid("rho", "must be finite and >= 0"));
    }
    if !(alpha.re.is_finite() && alpha.im.is_finite() && phi.is_finite()) {
        return Err(Error::invalid("alpha", "must be finite"));
    }
    if n_max < suggested_cutoff(alpha, rho) {
        return Err(Error::invalid("n_max", "must be at least 4(|alpha|^2 + sinh^2 rho) + 40"));
    }
    let (sh, ch) = (rho.sinh(), rho.cosh());
    let e_phi = C64::from_polar(1.0, phi);
    let gamma = alpha * ch + alpha.conj() * e_phi * sh;
    let exponent = -0.5 * alpha.norm_sqr() - 0.5 * alpha.conj() * alpha.conj() * e_phi * rho.tanh();
    let c0 = exponent.exp() / ch.sqrt();
    let mut c = vec![C64::new(0.0, 0.0); n_max + 1];
    c[0] = c0;
    for n in 0..n_max {
        let prev = if n == 0 { C64::new(0.0, 0.0) } else { c[n - 1] };
        c[n + 1] = (gamma * c[n] - e_phi * sh * (n as f64).sqrt() * prev) / (ch * ((n + 1) as f64).sqrt());
    }
    let mut state = FockState { amplitudes: c };
    let leaked = state.leakage();
    if leaked > MAX_LEAKAGE {
        return Err(Error::TruncationLeak { leaked });
    }
    let norm = 1.0 / (1.0 - leaked).sqrt();
    state.amplitudes.iter_mut().for_each(|z| *z *= norm);
    Ok(state)
}

/// Photocount distribution and its first two factorial cumulants.
#[derive(Clone, Debug, PartialEq)]
pub struct PhotonStatistics {
    /// `P(p)` for `p = 0, 1, ...`.
    pub distribution: Vec<f64>,
    /// Mean count.
    pub k1: f64,
    /// Second factorial cumulant.
    pub k2: f64,
    /// Fano factor `1 + k2 / k1`.
    pub fano: f64,
}

impl PhotonStatistics {
    fn from_distribution(distribution: Vec<f64>) -> Result<Self> {
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for (p, &w) in distribution.iter().enumerate() {
            let p = p as f64;
            m1 += p * w;
            m2 += p * (p - 1.0) * w;
        }
        if m1 == 0.0 {
            return Err(Error::ZeroMeanCount);
        }
        let k2 = m2 - m1 * m1;
        Ok(PhotonStatistics {
            distribution,
            k1: m1,
            k2,
            fano: 1.0 + k2 / m1,
        })
    }
}

/// Apply `x a† + y b†` to `Σ_j v_j |j, T-j>` (total `T = v.len() - 1`).
fn create(v: &[C64], x: C64, y: C64) -> Vec<C64> {
    let total = v.len() - 1;
    let mut out = vec![C64::new(0.0, 0.0); total + 2];
    for (j, &vj) in v.iter().enumerate() {
        out[j + 1] += x * ((j + 1) as f64).sqrt() * vj;
        out[j] += y * ((total - j + 1) as f64).sqrt() * vj;
    }
    out
}

/// Thermal weights `f^k / (1+f)^{k+1}` until the remaining tail is below
/// `1e-15`.
fn thermal_weights(f: f64) -> Vec<f64> {
    if f == 0.0 {
        return vec![1.0];
    }
    let ratio = f / (1.0 + f);
    let mut w = Vec::new();
    let mut wk = 1.0 / (1.0 + f);
    let mut tail = 1.0;
    while tail > 1e-15 {
        w.push(wk);
        tail -= wk;
        wk *= ratio;
        if w.len() > 10_000 {
            break;
        }
    }
    w
}

/// Photocounts behind a beam splitter of amplitude transmission `t`
/// whose second input port carries thermal light with occupation `f_env`.
///
/// The distribution is phase insensitive, so only `|t|` and `|c_n|²` enter:
/// `P(p) = Σ_k w_k Σ_n |c_n|² |<p, n+k-p| U |n, k>|²`.
pub fn lossy_channel_photostats(state: &FockState, t: C64, f_env: f64) -> Result<PhotonStatistics> {
    let transmittance = t.norm_sqr();
    if !(transmittance <= 1.0 + 1e-15) {
        return Err(Error::invalid("t", "must satisfy |t| <= 1"));
    }
    let transmittance = transmittance.min(1.0);
    if !(f_env >= 0.0 && f_env.is_finite()) {
        return Err(Error::invalid("f_env", "must be finite and >= 0"));
    }
    let t = C64::new(transmittance.sqrt(), 0.0);
    let u = C64::new((1.0 - transmittance).sqrt(), 0.0);
    let probs = state.probabilities();
    let weights = thermal_weights(f_env);
    let n_max = state.n_max();
    let mut dist = vec![0.0; n_max + weights.len() + 1];
    for (k, &wk) in weights.iter().enumerate() {
        // U|0,k> from k applications of U b† U† = -u* a† + t* b†.
        let mut v = vec![C64::new(1.0, 0.0)];
        for step in 1..=k {
            v = create(&v, -u.conj(), t.conj());
            let norm = 1.0 / (step as f64).sqrt();
            v.iter_mut().for_each(|z| *z *= norm);
        }
        for (n, &pn) in probs.iter().enumerate() {
            if n > 0 {
                v = create(&v, t, u);
                let norm = 1.0 / (n as f64).sqrt();
                v.iter_mut().for_each(|z| *z *= norm);
            }
            if pn == 0.0 {
                continue;
            }
            for (p, z) in v.iter().enumerate() {
                dist[p] += wk * pn * z.norm_sqr();
            }
        }
    }
    PhotonStatistics::from_distribution(dist)
}

/// Photocounts behind a phase-insensitive amplifier of amplitude gain `g`,
/// `a_out = g a + √(|g|² - 1) c†`, with the idler in vacuum (complete
/// inversion).
///
/// With `|g| = cosh r` the two-mode squeezer maps `|n, 0>` onto
/// `Σ_q A_{nq} |n+q, q>` with
/// `|A_{nq}|² = C(n+q, q) tanh^{2q} r / cosh^{2(n+1)} r`. Different `n` end
/// in orthogonal idler states, so the count distribution is a mixture of
/// these negative-binomial rows weighted by `|c_n|²`. The rows are built by
/// the all-positive recursion `|A_{n,q+1}|² = |A_{nq}|² (n+q+1)/(q+1) tanh² r`.
pub fn amplifying_channel_photostats(state: &FockState, g: C64) -> Result<PhotonStatistics> {
    let gain = g.norm_sqr();
    if !(gain >= 1.0 - 1e-15 && gain.is_finite()) {
        return Err(Error::invalid("g", "must be finite with |g| >= 1"));
    }
    let gain = gain.max(1.0);
    let th2 = (gain - 1.0) / gain;
    let n_max = state.n_max();
    // Row n has mean n + (n+1)(G-1) and a tail falling like th^{2q}; keep
    // the dropped mass of the widest row far below MAX_LEAKAGE.
    let tail = if th2 > 0.0 { (46.0 / -th2.ln()).ceil() as usize } else { 0 };
    let q_max = (gain * (n_max + 1) as f64).ceil() as usize + tail + 40;
    let probs = state.probabilities();
    let mut dist = vec![0.0; n_max + q_max + 1];
    let mut row0 = 1.0 / gain;
    for (n, &pn) in probs.iter().enumerate() {
        if n > 0 {
            row0 /= gain;
        }
        if pn == 0.0 {
            continue;
        }
        let mut w = row0;
        for q in 0..=q_max {
            dist[n + q] += pn * w;
            w *= th2 * (n + q + 1) as f64 / (q + 1) as f64;
        }
    }
    PhotonStatistics::from_distribution(dist)
}

/// Binomial thinning of a photocount distribution by a loss with vacuum
/// in the second port.
pub fn attenuate(stats: &PhotonStatistics, transmittance: f64) -> Result<PhotonStatistics> {
    if !(0.0..=1.0).contains(&transmittance) {
        return Err(Error::invalid("transmittance", "must lie in [0, 1]"));
    }
    let len = stats.distribution.len();
    let mut out = vec![0.0; len];
    for (m, &pm) in stats.distribution.iter().enumerate() {
        if pm == 0.0 {
            continue;
        }
        // Binomial(m, η) via the stable multiplicative recursion.
        let mut b = (1.0 - transmittance).powi(m as i32);
        if transmittance == 1.0 {
            out[m] += pm;
            continue;
        }
        let ratio = transmittance / (1.0 - transmittance);
        for p in 0..=m {
            out[p] += pm * b;
            b *= ratio * (m - p) as f64 / (p + 1) as f64;
        }
    }
    PhotonStatistics::from_distribution(out)
}

/// Occupation `f` of a single-mode amplifying channel equivalent to an
/// amplifier of gain `g` followed by a loss `η` with vacuum input
/// (`η g > 1`): `f = -η (g - 1) / (η g - 1) <= -1`.
pub fn amplifier_then_loss_occupation(gain: f64, transmittance: f64) -> Result<f64> {
    let total = gain * transmittance;
    if !(total > 1.0) {
        return Err(Error::invalid("gain", "net gain must exceed one"));
    }
    Ok(-transmittance * (gain - 1.0) / (total - 1.0))
}
