//! Random multimode waveguides as scattering matrices.
//!
//! A waveguide with `N` propagating modes on each side is described by the
//! `2N x 2N` matrix
//!
//! ```text
//!     S = | r'  t' |      a_out = S a_in,
//!         | t   r  |
//! ```
//!
//! where indices `0..N` are left-side modes and `N..2N` right-side modes.
//! `t` carries light from left to right, `r'` reflects light incident from the
//! left, and `t'`, `r` do the same for light incident from the right.
//!
//! Disordered media are grown period by period: a thin random scattering
//! slice followed by a short stretch of free propagation with uniform
//! absorption or gain. Pieces are joined with the Redheffer star product.

#[allow(unused_imports)]
use num_traits::Float as _;
use alloc::vec::Vec;
use core::f64::consts::PI;

use num_complex::Complex64 as C64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::linalg::{self, gemm, CMatrix, Op};
use crate::seed::derive_seed;
use crate::{Error, Result};

/// Tolerance on the spectral invariants of a composite (`σ ≤ 1 + tol` etc.).
pub const INVARIANT_TOLERANCE: f64 = 1e-10;

/// Condition number of `1 - r_A r'_B` above which a star product is refused.
pub const MAX_CAVITY_CONDITION: f64 = 1e12;

/// Whether a medium conserves, absorbs or amplifies light.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum MediumKind {
    /// Lossless: `S` is unitary.
    Passive,
    /// Lossy: all singular values of `S` are at most one.
    Absorbing,
    /// Gain: all singular values of `S` are at least one.
    Amplifying,
}

impl MediumKind {
    /// `+1` absorbing, `-1` amplifying, `0` passive.
    pub fn from_sign(sign: i32) -> Result<Self> {
        match sign {
            1 => Ok(MediumKind::Absorbing),
            -1 => Ok(MediumKind::Amplifying),
            0 => Ok(MediumKind::Passive),
            _ => Err(Error::invalid("loss_gain_sign", "must be +1, -1 or 0")),
        }
    }

    /// Inverse of [`MediumKind::from_sign`].
    pub fn sign(self) -> i32 {
        match self {
            MediumKind::Absorbing => 1,
            MediumKind::Amplifying => -1,
            MediumKind::Passive => 0,
        }
    }

    fn combine(self, other: MediumKind) -> Result<MediumKind> {
        use MediumKind::*;
        match (self, other) {
            (a, b) if a == b => Ok(a),
            (Passive, b) => Ok(b),
            (a, Passive) => Ok(a),
            _ => Err(Error::invalid(
                "medium",
                "cannot compose absorbing and amplifying pieces",
            )),
        }
    }
}

/// Scattering matrix of a two-sided waveguide, stored as its four blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct ScatteringMatrix {
    r_prime: CMatrix,
    t_prime: CMatrix,
    t: CMatrix,
    r: CMatrix,
    kind: MediumKind,
}

impl ScatteringMatrix {
    /// Assemble from blocks, checking shapes and the invariant of `kind`.
    pub fn new(
        r_prime: CMatrix,
        t_prime: CMatrix,
        t: CMatrix,
        r: CMatrix,
        kind: MediumKind,
    ) -> Result<Self> {
        let n = r_prime.rows();
        for (name, m) in [("r'", &r_prime), ("t'", &t_prime), ("t", &t), ("r", &r)] {
            if m.rows() != n || m.cols() != n {
                return Err(Error::invalid(name, "all four blocks must be N x N"));
            }
        }
        if n == 0 {
            return Err(Error::invalid("n_modes", "must be at least 1"));
        }
        let s = ScatteringMatrix::from_blocks(r_prime, t_prime, t, r, kind);
        s.check_invariant()?;
        Ok(s)
    }

    /// Split a full `2N x 2N` matrix into blocks and validate it.
    pub fn from_full(s: &CMatrix, kind: MediumKind) -> Result<Self> {
        if !s.is_square() || s.rows() % 2 != 0 {
            return Err(Error::invalid("s", "must be 2N x 2N"));
        }
        let n = s.rows() / 2;
        Self::new(
            s.block(0, 0, n, n),
            s.block(0, n, n, n),
            s.block(n, 0, n, n),
            s.block(n, n, n, n),
            kind,
        )
    }

    pub(crate) fn from_blocks(
        r_prime: CMatrix,
        t_prime: CMatrix,
        t: CMatrix,
        r: CMatrix,
        kind: MediumKind,
    ) -> Self {
        ScatteringMatrix {
            r_prime,
            t_prime,
            t,
            r,
            kind,
        }
    }

    /// Perfect transmission without reflection, the neutral element of the
    /// star product.
    pub fn identity_transmission(n_modes: usize) -> Self {
        let z = CMatrix::zeros(n_modes, n_modes);
        let one = CMatrix::identity(n_modes);
        Self::from_blocks(z.clone(), one.clone(), one, z, MediumKind::Passive)
    }

    /// Modes per side.
    pub fn n_modes(&self) -> usize {
        self.t.rows()
    }

    /// Medium kind the matrix was built or validated as.
    pub fn kind(&self) -> MediumKind {
        self.kind
    }

    /// Reflection of light incident from the left.
    pub fn r_prime(&self) -> &CMatrix {
        &self.r_prime
    }

    /// Transmission of light incident from the right.
    pub fn t_prime(&self) -> &CMatrix {
        &self.t_prime
    }

    /// Transmission of light incident from the left.
    pub fn t(&self) -> &CMatrix {
        &self.t
    }

    /// Reflection of light incident from the right.
    pub fn r(&self) -> &CMatrix {
        &self.r
    }

    /// The full `2N x 2N` matrix.
    pub fn full(&self) -> CMatrix {
        let n = self.n_modes();
        let mut s = CMatrix::zeros(2 * n, 2 * n);
        s.set_block(0, 0, &self.r_prime);
        s.set_block(0, n, &self.t_prime);
        s.set_block(n, 0, &self.t);
        s.set_block(n, n, &self.r);
        s
    }

    /// Column `j` of the full matrix: the outgoing amplitudes for unit input
    /// in mode `j`.
    pub fn column(&self, j: usize) -> Vec<C64> {
        let n = self.n_modes();
        assert!(j < 2 * n);
        let (upper, lower) = if j < n {
            (&self.r_prime, &self.t)
        } else {
            (&self.t_prime, &self.r)
        };
        let c = j % n;
        (0..n)
            .map(|i| upper[(i, c)])
            .chain((0..n).map(|i| lower[(i, c)]))
            .collect()
    }

    /// Check the spectral invariant of the stored kind.
    pub fn check_invariant(&self) -> Result<()> {
        let q = deviation_from_unitarity(self);
        let tol = 2.0 * INVARIANT_TOLERANCE;
        let contraction = || linalg::is_positive_semidefinite(&q, tol);
        let expansion = || {
            let mut neg = q.clone();
            neg.scale(C64::new(-1.0, 0.0));
            linalg::is_positive_semidefinite(&neg, tol)
        };
        match self.kind {
            MediumKind::Absorbing if !contraction() => Err(Error::InvariantViolation {
                kind: MediumKind::Absorbing,
            }),
            MediumKind::Amplifying if !expansion() => Err(Error::GainPositivityViolation {
                margin: INVARIANT_TOLERANCE,
            }),
            MediumKind::Passive if !(contraction() && expansion()) => {
                Err(Error::InvariantViolation {
                    kind: MediumKind::Passive,
                })
            }
            _ => Ok(()),
        }
    }

    /// Multiply on the right by a reflectionless, diagonal transmission
    /// piece with `t = t' = diag(d)`.
    fn append_diagonal_transmission(&mut self, d: &[C64]) {
        let n = self.n_modes();
        for i in 0..n {
            for j in 0..n {
                self.t[(i, j)] *= d[i];
                self.r[(i, j)] *= d[i] * d[j];
                self.t_prime[(i, j)] *= d[j];
            }
        }
    }
}

/// `Q = 1 - S S†`: positive semidefinite for absorbing media, negative
/// semidefinite for amplifying ones and zero for passive ones.
pub fn deviation_from_unitarity(s: &ScatteringMatrix) -> CMatrix {
    let full = s.full();
    let mut q = CMatrix::identity(full.rows());
    gemm(
        C64::new(-1.0, 0.0),
        &full,
        Op::None,
        &full,
        Op::Adjoint,
        C64::new(1.0, 0.0),
        &mut q,
    );
    q.hermitian_part()
}

/// Redheffer star product: the scattering matrix of `a` followed (to its
/// right) by `b`, summing all multiple reflections between them.
pub fn star_compose(a: &ScatteringMatrix, b: &ScatteringMatrix) -> Result<ScatteringMatrix> {
    let n = a.n_modes();
    if b.n_modes() != n {
        return Err(Error::ModeMismatch {
            left: n,
            right: b.n_modes(),
        });
    }
    let kind = a.kind.combine(b.kind)?;
    let one = C64::new(1.0, 0.0);
    let zero = C64::new(0.0, 0.0);

    let mut g = CMatrix::identity(n);
    gemm(-one, &a.r, Op::None, &b.r_prime, Op::None, one, &mut g);
    let (lu, condition) = linalg::condition_number_1(&g);
    let lu = match lu {
        Some(lu) if condition <= MAX_CAVITY_CONDITION => lu,
        _ => return Err(Error::NearSingularCavity { condition }),
    };

    // Solve G [X | Z] = [t_A | r_A t'_B].
    let mut rhs = CMatrix::zeros(n, 2 * n);
    rhs.set_block(0, 0, &a.t);
    rhs.set_block(0, n, &a.r.matmul(&b.t_prime));
    lu.solve_in_place(&mut rhs);
    let xz = rhs;

    // t'_A r'_B [X | Z] serves both r'_AB and t'_AB.
    let tr = a.t_prime.matmul(&b.r_prime);
    let mut tr_xz = CMatrix::zeros(n, 2 * n);
    gemm(one, &tr, Op::None, &xz, Op::None, zero, &mut tr_xz);
    let mut t_xz = CMatrix::zeros(n, 2 * n);
    gemm(one, &b.t, Op::None, &xz, Op::None, zero, &mut t_xz);

    let t = t_xz.block(0, 0, n, n);
    let r = b.r.add(&t_xz.block(0, n, n, n));
    let r_prime = a.r_prime.add(&tr_xz.block(0, 0, n, n));
    let mut t_prime = tr_xz.block(0, n, n, n);
    gemm(one, &a.t_prime, Op::None, &b.t_prime, Op::None, one, &mut t_prime);

    Ok(ScatteringMatrix::from_blocks(r_prime, t_prime, t, r, kind))
}

/// Draw a `2N x 2N` Hermitian matrix from the Gaussian unitary ensemble with
/// entry variance `1/(2N)`.
pub fn sample_gue<R: Rng + ?Sized>(n_modes: usize, rng: &mut R) -> CMatrix {
    let dim = 2 * n_modes;
    let var = 1.0 / dim as f64;
    let sd_diag = var.sqrt();
    let sd_part = (var / 2.0).sqrt();
    let mut k = CMatrix::zeros(dim, dim);
    for i in 0..dim {
        let d: f64 = rng.sample(StandardNormal);
        k[(i, i)] = C64::new(sd_diag * d, 0.0);
        for j in i + 1..dim {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            let z = C64::new(sd_part * re, sd_part * im);
            k[(i, j)] = z;
            k[(j, i)] = z.conj();
        }
    }
    k
}

/// A thin passive scatterer `Σ · exp(iεK)` with `K` from [`sample_gue`] and
/// `Σ` the identity-transmission matrix, so that `ε = 0` is perfectly
/// transparent and the reflectance per slice grows as `ε²/2`.
pub fn sample_slice<R: Rng + ?Sized>(
    n_modes: usize,
    scatter_strength: f64,
    rng: &mut R,
) -> Result<ScatteringMatrix> {
    if n_modes == 0 {
        return Err(Error::invalid("n_modes", "must be at least 1"));
    }
    if !(scatter_strength >= 0.0 && scatter_strength.is_finite()) {
        return Err(Error::invalid("scatter_strength", "must be finite and >= 0"));
    }
    let k = sample_gue(n_modes, rng);
    let e = linalg::exp_i_hermitian(&k, scatter_strength);
    let n = n_modes;
    // Σ swaps the two row blocks of E.
    Ok(ScatteringMatrix::from_blocks(
        e.block(n, 0, n, n),
        e.block(n, n, n, n),
        e.block(0, 0, n, n),
        e.block(0, n, n, n),
        MediumKind::Passive,
    ))
}

fn propagation_diagonal<R: Rng + ?Sized>(
    n_modes: usize,
    kind: MediumKind,
    abs_or_gain_length: f64,
    rng: &mut R,
) -> Vec<C64> {
    let amplitude = match kind {
        MediumKind::Passive => 1.0,
        MediumKind::Absorbing => (-0.5 / abs_or_gain_length).exp(),
        MediumKind::Amplifying => (0.5 / abs_or_gain_length).exp(),
    };
    (0..n_modes)
        .map(|_| C64::from_polar(amplitude, 2.0 * PI * rng.gen::<f64>()))
        .collect()
}

/// Free propagation over one slice spacing: no reflection, random phases
/// `θ_n`, and intensity attenuation (or gain) `exp(∓1/ℓ)`.
pub fn propagation_unit<R: Rng + ?Sized>(
    n_modes: usize,
    kind: MediumKind,
    abs_or_gain_length: f64,
    rng: &mut R,
) -> Result<ScatteringMatrix> {
    if n_modes == 0 {
        return Err(Error::invalid("n_modes", "must be at least 1"));
    }
    if kind != MediumKind::Passive && !(abs_or_gain_length > 0.0) {
        return Err(Error::invalid("abs_or_gain_length", "must be > 0"));
    }
    let d = propagation_diagonal(n_modes, kind, abs_or_gain_length, rng);
    let t = CMatrix::from_diagonal(&d);
    let z = CMatrix::zeros(n_modes, n_modes);
    Ok(ScatteringMatrix::from_blocks(
        z.clone(),
        t.clone(),
        t,
        z,
        kind,
    ))
}

/// Parameters of a random waveguide.
#[derive(Clone, Debug, PartialEq)]
pub struct MediumSpec {
    /// Propagating modes per side.
    pub n_modes: usize,
    /// Number of slice-plus-propagation periods.
    pub length: usize,
    /// Slice strength `ε`.
    pub scatter_strength: f64,
    /// Intensity absorption (or gain) length `ℓ` in slice spacings.
    /// Ignored for passive media.
    pub abs_or_gain_length: f64,
    /// Absorbing, amplifying or passive.
    pub kind: MediumKind,
    /// Bose–Einstein occupation of the medium: `f >= 0` for absorbing media,
    /// `f < 0` for amplifying ones (`-1` is complete inversion).
    pub occupation: f64,
    /// Seed of the medium's random stream.
    pub seed: u64,
}

impl MediumSpec {
    /// Check ranges of all fields.
    pub fn validate(&self) -> Result<()> {
        if self.n_modes == 0 {
            return Err(Error::invalid("n_modes", "must be at least 1"));
        }
        if !(self.scatter_strength >= 0.0 && self.scatter_strength.is_finite()) {
            return Err(Error::invalid("scatter_strength", "must be finite and >= 0"));
        }
        if self.kind != MediumKind::Passive
            && !(self.abs_or_gain_length > 0.0 && !self.abs_or_gain_length.is_nan())
        {
            return Err(Error::invalid("abs_or_gain_length", "must be > 0"));
        }
        if !self.occupation.is_finite() {
            return Err(Error::invalid("occupation", "must be finite"));
        }
        match self.kind {
            MediumKind::Amplifying if self.occupation >= 0.0 => Err(Error::invalid(
                "occupation",
                "an amplifying medium has negative occupation (f <= -1 for a population-inverted medium)",
            )),
            MediumKind::Absorbing | MediumKind::Passive if self.occupation < 0.0 => Err(
                Error::invalid("occupation", "must be >= 0 for absorbing or passive media"),
            ),
            _ => Ok(()),
        }
    }
}

/// Grows a medium one period at a time, so that several lengths can be read
/// off a single realization.
#[derive(Clone, Debug)]
pub struct MediumBuilder {
    n_modes: usize,
    scatter_strength: f64,
    abs_or_gain_length: f64,
    kind: MediumKind,
    rng: ChaCha8Rng,
    composite: ScatteringMatrix,
    periods: usize,
}

impl MediumBuilder {
    /// Start from an empty (identity-transmission) medium. `spec.length` is
    /// ignored.
    pub fn new(spec: &MediumSpec) -> Result<Self> {
        spec.validate()?;
        Ok(MediumBuilder {
            n_modes: spec.n_modes,
            scatter_strength: spec.scatter_strength,
            abs_or_gain_length: spec.abs_or_gain_length,
            kind: spec.kind,
            rng: ChaCha8Rng::seed_from_u64(spec.seed),
            composite: ScatteringMatrix::identity_transmission(spec.n_modes),
            periods: 0,
        })
    }

    /// Periods built so far.
    pub fn periods(&self) -> usize {
        self.periods
    }

    /// Append one slice and one propagation unit.
    pub fn advance(&mut self) -> Result<()> {
        let slice = sample_slice(self.n_modes, self.scatter_strength, &mut self.rng)?;
        let d = propagation_diagonal(
            self.n_modes,
            self.kind,
            self.abs_or_gain_length,
            &mut self.rng,
        );
        let mut next = if self.periods == 0 {
            slice
        } else {
            star_compose(&self.composite, &slice)?
        };
        next.kind = self.kind;
        next.append_diagonal_transmission(&d);
        self.composite = next;
        self.periods += 1;
        Ok(())
    }

    /// Advance until `periods` periods are built.
    pub fn advance_to(&mut self, periods: usize) -> Result<()> {
        while self.periods < periods {
            self.advance()?;
        }
        Ok(())
    }

    /// The current composite, without validation.
    pub fn current(&self) -> &ScatteringMatrix {
        &self.composite
    }

    /// The current composite after checking its spectral invariant.
    pub fn snapshot(&self) -> Result<ScatteringMatrix> {
        self.composite.check_invariant()?;
        Ok(self.composite.clone())
    }
}

/// Build the scattering matrix of a random medium. Identical specs give
/// bitwise identical results.
pub fn build_medium(spec: &MediumSpec) -> Result<ScatteringMatrix> {
    let mut b = MediumBuilder::new(spec)?;
    b.advance_to(spec.length)?;
    b.snapshot()
}

/// Result of an Ohm's-law fit `N / <T> = 1 + L / l`.
#[derive(Clone, Debug, PartialEq)]
pub struct MeanFreePathFit {
    /// Mean free path in slice spacings (`∞` without scattering).
    pub mean_free_path: f64,
    /// Jackknife standard error of `mean_free_path`.
    pub stderr: f64,
    /// `(L, N/<T>)` for every calibration length.
    pub points: Vec<(usize, f64)>,
    /// Largest relative residual of the fit.
    pub max_relative_residual: f64,
}

/// Total transmission `tr(t†t)` of one passive realization, read off at each
/// of the (ascending) `lengths`.
pub fn passive_transmissions(
    n_modes: usize,
    scatter_strength: f64,
    lengths: &[usize],
    seed: u64,
) -> Result<Vec<f64>> {
    let spec = MediumSpec {
        n_modes,
        length: 0,
        scatter_strength,
        abs_or_gain_length: 1.0,
        kind: MediumKind::Passive,
        occupation: 0.0,
        seed,
    };
    let mut b = MediumBuilder::new(&spec)?;
    let mut out = Vec::with_capacity(lengths.len());
    for &l in lengths {
        b.advance_to(l)?;
        let t = b.current().t();
        out.push(t.frobenius_norm().powi(2));
    }
    Ok(out)
}

fn check_calibration_lengths(lengths: &[usize]) -> Result<()> {
    if lengths.len() < 3 {
        return Err(Error::invalid("lengths", "need at least three lengths"));
    }
    if lengths.windows(2).any(|w| w[0] >= w[1]) || lengths[0] == 0 {
        return Err(Error::invalid("lengths", "must be positive and strictly increasing"));
    }
    if lengths[lengths.len() - 1] < 4 * lengths[0] {
        return Err(Error::invalid("lengths", "must span at least a factor of 4"));
    }
    Ok(())
}

fn ohm_slope(lengths: &[usize], n_modes: usize, mean_t: &[f64]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (&l, &t) in lengths.iter().zip(mean_t) {
        let l = l as f64;
        num += l * (n_modes as f64 / t - 1.0);
        den += l * l;
    }
    num / den
}

/// Fit `N/<T> = 1 + L/l` to per-sample transmissions
/// (`per_sample[k][i]` is sample `k` at `lengths[i]`).
pub fn fit_mean_free_path(
    n_modes: usize,
    lengths: &[usize],
    per_sample: &[Vec<f64>],
) -> Result<MeanFreePathFit> {
    check_calibration_lengths(lengths)?;
    let m = per_sample.len();
    if m < 2 {
        return Err(Error::invalid("samples_per_length", "need at least two samples"));
    }
    let nl = lengths.len();
    let mut sums = alloc::vec![0.0; nl];
    for s in per_sample {
        for (acc, &t) in sums.iter_mut().zip(s) {
            *acc += t;
        }
    }
    let means: Vec<f64> = sums.iter().map(|s| s / m as f64).collect();
    let slope = ohm_slope(lengths, n_modes, &means);

    // Jackknife over samples; lengths share samples, so naive per-length
    // errors would miss their correlation.
    let mut loo = Vec::with_capacity(m);
    for s in per_sample {
        let means_k: Vec<f64> = sums
            .iter()
            .zip(s)
            .map(|(&tot, &t)| (tot - t) / (m - 1) as f64)
            .collect();
        loo.push(ohm_slope(lengths, n_modes, &means_k));
    }
    let loo_mean = loo.iter().sum::<f64>() / m as f64;
    let var = loo.iter().map(|x| (x - loo_mean).powi(2)).sum::<f64>() * (m - 1) as f64 / m as f64;
    let slope_err = var.sqrt();

    let points: Vec<(usize, f64)> = lengths
        .iter()
        .zip(&means)
        .map(|(&l, &t)| (l, n_modes as f64 / t))
        .collect();
    let max_relative_residual = points
        .iter()
        .map(|&(l, y)| ((1.0 + slope * l as f64) - y).abs() / y)
        .fold(0.0, f64::max);
    if !(max_relative_residual <= 0.1) {
        return Err(Error::FitFailed {
            residual: max_relative_residual,
        });
    }
    let (mean_free_path, stderr) = if slope > 0.0 {
        (1.0 / slope, slope_err / (slope * slope))
    } else {
        (f64::INFINITY, f64::INFINITY)
    };
    Ok(MeanFreePathFit {
        mean_free_path,
        stderr,
        points,
        max_relative_residual,
    })
}

/// Calibrate the mean free path of passive media with slice strength `ε`
/// from the Ohm's-law scaling of the average transmission. Each sample is
/// grown once and read off at every length.
pub fn calibrate_mean_free_path(
    n_modes: usize,
    scatter_strength: f64,
    lengths: &[usize],
    samples_per_length: usize,
    seed: u64,
) -> Result<MeanFreePathFit> {
    check_calibration_lengths(lengths)?;
    let per_sample = (0..samples_per_length)
        .map(|k| passive_transmissions(n_modes, scatter_strength, lengths, derive_seed(seed, k as u64)))
        .collect::<Result<Vec<_>>>()?;
    fit_mean_free_path(n_modes, lengths, &per_sample)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn scalar(t: f64, r: f64, kind: MediumKind) -> ScatteringMatrix {
        let m = |x: f64| CMatrix::from_diagonal(&[c(x, 0.0)]);
        ScatteringMatrix::from_blocks(m(r), m(t), m(t), m(r), kind)
    }

    #[test]
    fn identity_is_neutral() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s = sample_slice(3, 0.4, &mut rng).unwrap();
        let id = ScatteringMatrix::identity_transmission(3);
        let left = star_compose(&id, &s).unwrap();
        let right = star_compose(&s, &id).unwrap();
        assert!(left.full().sub(&s.full()).max_abs() < 1e-15);
        assert!(right.full().sub(&s.full()).max_abs() < 1e-15);
    }

    #[test]
    fn lossy_scalar_slabs_multiply() {
        let a = scalar(0.5f64.sqrt(), 0.0, MediumKind::Absorbing);
        let ab = star_compose(&a, &a).unwrap();
        assert!((ab.t()[(0, 0)].norm_sqr() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn fabry_perot_sum() {
        // Two lossless mirrors with real r, t: t_AB = t^2 / (1 - r^2).
        let t = 0.6;
        let r = 0.8;
        let mut a = scalar(t, r, MediumKind::Passive);
        a.r_prime = CMatrix::from_diagonal(&[c(-r, 0.0)]);
        let mut b = scalar(t, r, MediumKind::Passive);
        b.r = CMatrix::from_diagonal(&[c(-r, 0.0)]);
        assert!(a.check_invariant().is_ok() && b.check_invariant().is_ok());
        let ab = star_compose(&a, &b).unwrap();
        let expected = t * t / (1.0 - r * r);
        assert!((ab.t()[(0, 0)] - c(expected, 0.0)).norm() < 1e-14);
        assert!(ab.check_invariant().is_ok());
    }

    #[test]
    fn perfect_mirrors_trap_light() {
        let m = scalar(0.0, 1.0, MediumKind::Passive);
        let err = star_compose(&m, &m).unwrap_err();
        assert!(matches!(err, Error::NearSingularCavity { .. }));
    }

    #[test]
    fn mismatched_modes_are_rejected() {
        let a = ScatteringMatrix::identity_transmission(2);
        let b = ScatteringMatrix::identity_transmission(3);
        assert_eq!(
            star_compose(&a, &b).unwrap_err(),
            Error::ModeMismatch { left: 2, right: 3 }
        );
    }

    #[test]
    fn zero_strength_slice_is_transparent() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = sample_slice(4, 0.0, &mut rng).unwrap();
        assert_eq!(s.full(), ScatteringMatrix::identity_transmission(4).full());
    }

    #[test]
    fn slice_reflectance_grows_quadratically() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let eps = 0.05;
        let n = 6;
        let mut acc = 0.0;
        let trials = 200;
        for _ in 0..trials {
            let s = sample_slice(n, eps, &mut rng).unwrap();
            acc += s.r_prime().frobenius_norm().powi(2) / n as f64;
        }
        let p = acc / trials as f64;
        assert!((p / (eps * eps / 2.0) - 1.0).abs() < 0.05, "p = {p}");
    }

    #[test]
    fn deviation_of_scalar_channel() {
        let t = 0.6f64.sqrt();
        let s = scalar(t, 0.0, MediumKind::Absorbing);
        let q = deviation_from_unitarity(&s);
        assert!((q[(0, 0)] - c(0.4, 0.0)).norm() < 1e-15);
        assert!((q[(1, 1)] - c(0.4, 0.0)).norm() < 1e-15);
        assert!(q[(0, 1)].norm() < 1e-15);
    }

    #[test]
    fn zero_length_medium_is_identity() {
        let spec = MediumSpec {
            n_modes: 3,
            length: 0,
            scatter_strength: 0.3,
            abs_or_gain_length: 10.0,
            kind: MediumKind::Absorbing,
            occupation: 0.1,
            seed: 9,
        };
        let s = build_medium(&spec).unwrap();
        assert_eq!(s.full(), ScatteringMatrix::identity_transmission(3).full());
    }

    #[test]
    fn invariant_checks_catch_wrong_kind() {
        let gain = scalar(1.2, 0.0, MediumKind::Absorbing);
        assert!(matches!(
            gain.check_invariant(),
            Err(Error::InvariantViolation { .. })
        ));
        let loss = scalar(0.9, 0.0, MediumKind::Amplifying);
        assert!(matches!(
            loss.check_invariant(),
            Err(Error::GainPositivityViolation { .. })
        ));
    }

    #[test]
    fn occupation_sign_follows_medium_kind() {
        let mut spec = MediumSpec {
            n_modes: 2,
            length: 1,
            scatter_strength: 0.1,
            abs_or_gain_length: 10.0,
            kind: MediumKind::Amplifying,
            occupation: -1.0,
            seed: 0,
        };
        assert!(spec.validate().is_ok());
        spec.occupation = -3.0;
        assert!(spec.validate().is_ok());
        spec.occupation = 0.5;
        assert!(spec.validate().is_err());
        spec.kind = MediumKind::Absorbing;
        assert!(spec.validate().is_ok());
    }

    #[test]
    fn calibration_rejects_short_span() {
        let err = calibrate_mean_free_path(2, 0.3, &[10, 20, 30], 4, 1).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument { name: "lengths", .. }));
    }
}
