//! Monte Carlo averages of the Fano factor over random media.
//!
//! Every sample `k` is an independent medium grown from the seed
//! `derive_seed(master, k)`, so results do not depend on how samples are
//! scheduled. Per-sample reductions ([`SampleRecord`]) are kept separate from
//! the final estimate so that one set of media can serve several input
//! states, and so that callers can evaluate samples in parallel.
//!
//! The reported average is a ratio of ensemble means,
//! `1 + <[S†DS]>(F_in - 1) + 2f <[S†DQDS]> / <[S†DS]>`, which is what the
//! closed-form averages describe; the mean of per-sample Fano factors is
//! returned alongside as a diagnostic.

#[allow(unused_imports)]
use num_traits::Float as _;
use alloc::vec::Vec;

use num_complex::Complex64 as C64;

use crate::linalg::{self, CMatrix};
use crate::medium::{deviation_from_unitarity, MediumBuilder, MediumKind, MediumSpec, ScatteringMatrix};
use crate::photostats::{self, DetectionConfig, FanoBreakdown, SqueezedInput};
use crate::seed::derive_seed;
use crate::{Error, Result};

/// Ohm's-law fits give `N/<T> = 1 + L/l_fit`, while the diffusion result is
/// `<T>/N = 4 l / 3 L`; the transport mean free path is therefore
/// `l = 3 l_fit / 4`.
pub const TRANSPORT_PER_FIT_LENGTH: f64 = 0.75;

/// Maps the dimensionless length `s = L/ξ_a` of the diffusive formulas onto
/// the slice model.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiffusiveScale {
    /// Mean free path from [`crate::medium::calibrate_mean_free_path`], in
    /// slice spacings.
    pub fit_mean_free_path: f64,
    /// Target `l / ξ_a`.
    pub l_over_xi: f64,
}

impl DiffusiveScale {
    /// Validated constructor.
    pub fn new(fit_mean_free_path: f64, l_over_xi: f64) -> Result<Self> {
        if !(fit_mean_free_path > 0.0 && fit_mean_free_path.is_finite()) {
            return Err(Error::invalid("mean_free_path", "must be finite and > 0"));
        }
        if !(l_over_xi > 0.0 && l_over_xi.is_finite()) {
            return Err(Error::invalid("l_over_xi", "must be finite and > 0"));
        }
        Ok(DiffusiveScale {
            fit_mean_free_path,
            l_over_xi,
        })
    }

    /// Transport mean free path `l` in slice spacings.
    pub fn transport_mean_free_path(&self) -> f64 {
        TRANSPORT_PER_FIT_LENGTH * self.fit_mean_free_path
    }

    /// `ξ_a` in slice spacings.
    pub fn xi(&self) -> f64 {
        self.transport_mean_free_path() / self.l_over_xi
    }

    /// Periods to build for a target `s`.
    ///
    /// Reflection at the open ends adds one fitted mean free path to the
    /// length seen by diffusion (`N/<T> = (L + l_fit)/l_fit`), so the medium
    /// is built `l_fit` shorter than `s ξ_a`. Returns 0 when `s ξ_a < l_fit`.
    pub fn periods_for(&self, s: f64) -> usize {
        let l = s * self.xi() - self.fit_mean_free_path;
        if l <= 0.0 {
            0
        } else {
            libm::round(l) as usize
        }
    }

    /// `s` actually realized by `periods` periods.
    pub fn effective_s(&self, periods: usize) -> f64 {
        (periods as f64 + self.fit_mean_free_path) / self.xi()
    }

    /// Intensity absorption or gain length per slice spacing that gives the
    /// slab the decay (or oscillation) rate `1/ξ_a`.
    ///
    /// A slice of reflectance `p = 1/(1 + l_fit)` followed by an intensity
    /// factor `a` has flux transfer-matrix trace
    /// `((1-2p) a + 1/a) / (1-p)`; setting it to `2 cosh(1/ξ_a)` (absorbing)
    /// or `2 cos(1/ξ_a)` (amplifying) fixes `a`. For `ξ_a ≫ l` this tends to
    /// `2 ξ_a² / l_fit`.
    pub fn abs_or_gain_length(&self, kind: MediumKind) -> Result<f64> {
        let p = 1.0 / (1.0 + self.fit_mean_free_path);
        let kappa = 1.0 / self.xi();
        let h = match kind {
            MediumKind::Absorbing => kappa.cosh(),
            MediumKind::Amplifying => kappa.cos(),
            MediumKind::Passive => return Ok(f64::INFINITY),
        };
        let disc = (1.0 - p) * (1.0 - p) * h * h - (1.0 - 2.0 * p);
        if !(disc >= 0.0) || p >= 0.5 {
            return Err(Error::invalid(
                "l_over_xi",
                "gain length shorter than the slice model can represent",
            ));
        }
        let a = ((1.0 - p) * h - disc.sqrt()) / (1.0 - 2.0 * p);
        Ok((1.0 / a.ln()).abs())
    }

    /// A medium spec of kind `kind` realizing `s`.
    pub fn medium_spec(
        &self,
        n_modes: usize,
        scatter_strength: f64,
        kind: MediumKind,
        s: f64,
        occupation: f64,
        seed: u64,
    ) -> Result<MediumSpec> {
        let spec = MediumSpec {
            n_modes,
            length: self.periods_for(s),
            scatter_strength,
            abs_or_gain_length: self.abs_or_gain_length(kind)?,
            kind,
            occupation,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// How to collapse samples into one Fano factor.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AveragingMode {
    /// Average numerator and denominator separately (the convention of the
    /// closed-form averages).
    RatioOfMeans,
    /// Average the per-sample Fano factors.
    MeanOfRatios,
}

/// Which detection scheme to average.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Scheme {
    /// Direct photodetection.
    Direct,
    /// Homodyne detection with the phase re-optimised per medium.
    HomodyneOptimal,
    /// Homodyne detection at a fixed local-oscillator phase.
    HomodyneFixed {
        /// `arg β`.
        arg_beta: f64,
    },
}

/// Ensemble options.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnsembleOptions {
    /// Detection scheme.
    pub scheme: Scheme,
    /// Reported estimator.
    pub averaging: AveragingMode,
    /// Average over the incident mode (direct detection) or replace `|t|²`
    /// by `tr(t t†)/N²` (homodyne), as the closed forms assume.
    pub mode_average: bool,
    /// Keep per-sample Fano factors in the result.
    pub keep_per_sample: bool,
    /// Incident Fano factor for direct detection. Direct detection sees the
    /// input only through `F_in`, so any value `>= 0` (including number
    /// states, `F_in = 0`) may be given; `None` takes it from the squeezed
    /// input.
    pub fano_in: Option<f64>,
}

impl Default for EnsembleOptions {
    fn default() -> Self {
        EnsembleOptions {
            scheme: Scheme::Direct,
            averaging: AveragingMode::RatioOfMeans,
            mode_average: true,
            keep_per_sample: false,
            fano_in: None,
        }
    }
}

/// Everything the estimators need from one medium.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SampleRecord {
    /// `[S†DS]_{m0 m0}`, or its average over incident modes.
    pub transmission: f64,
    /// `[S†DQDS]_{m0 m0}`, or its average over incident modes.
    pub beating: f64,
    /// `t_{n0 m0}`.
    pub t: C64,
    /// `|t_{n0 m0}|²`, or `tr(t t†)/N²`.
    pub homodyne_transmission: f64,
    /// `(1 - r r† - t t†)_{n0 n0}`.
    pub homodyne_beating: f64,
}

/// Reduce one medium to a [`SampleRecord`]. Only the incident mode of
/// `input` is used.
pub fn sample_record(
    s: &ScatteringMatrix,
    input: &SqueezedInput,
    det: &DetectionConfig,
    mode_average: bool,
) -> Result<SampleRecord> {
    let n = s.n_modes();
    det.validate(n)?;
    if input.incident_mode >= n {
        return Err(Error::invalid("incident_mode", "must be below the mode count"));
    }
    let q = deviation_from_unitarity(s);
    let mut weights = alloc::vec![0.0; 2 * n];
    for &m in &det.detected_modes {
        weights[m] = det.efficiency;
    }
    let (transmission, beating) = if mode_average {
        let full = s.full();
        let left = full.block(0, 0, 2 * n, n);
        let mut v = left;
        for i in 0..2 * n {
            for z in v.row_mut(i) {
                *z *= weights[i];
            }
        }
        let transmission = {
            let mut acc = 0.0;
            for i in 0..2 * n {
                for z in full.row(i)[..n].iter() {
                    acc += weights[i] * z.norm_sqr();
                }
            }
            acc / n as f64
        };
        let qv = q.matmul(&v);
        let tr: f64 = v
            .as_slice()
            .iter()
            .zip(qv.as_slice())
            .map(|(a, b)| (a.conj() * b).re)
            .sum();
        (transmission, tr / n as f64)
    } else {
        let sums = photostats::direct_sums(s, &q, &weights, input.incident_mode);
        (sums.transmission, sums.beating)
    };
    let h = photostats::homodyne_sums(s, det.probe_mode, input.incident_mode);
    let homodyne_transmission = if mode_average {
        s.t().frobenius_norm().powi(2) / (n * n) as f64
    } else {
        h.t.norm_sqr()
    };
    Ok(SampleRecord {
        transmission,
        beating,
        t: h.t,
        homodyne_transmission,
        homodyne_beating: h.q,
    })
}

/// Ensemble estimate of a Fano factor.
#[derive(Clone, Debug, PartialEq)]
pub struct EnsembleResult {
    /// Estimate selected by [`EnsembleOptions::averaging`].
    pub mean_fano: f64,
    /// Standard error of `mean_fano` (jackknife for the ratio estimator).
    pub stderr: f64,
    /// Ratio-of-means estimate.
    pub ratio_of_means: f64,
    /// Mean of per-sample Fano factors.
    pub mean_of_ratios: f64,
    /// Contributions to the ratio-of-means estimate.
    pub terms: FanoBreakdown,
    /// Samples that entered the average.
    pub n_used: usize,
    /// Samples rejected as above threshold or numerically singular.
    pub n_skipped: usize,
    /// Per-sample Fano factors, if requested.
    pub per_sample: Option<Vec<f64>>,
}

/// Records of the samples that survived, plus the count of rejected ones.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SampleSet {
    /// Surviving samples in seed order.
    pub records: Vec<SampleRecord>,
    /// Rejected samples.
    pub skipped: usize,
}

fn is_skippable(e: &Error) -> bool {
    matches!(
        e,
        Error::NearSingularCavity { .. } | Error::GainPositivityViolation { .. }
    )
}

impl SampleSet {
    /// Collect sample outcomes; near-singular cavities and gain-positivity
    /// failures are counted and skipped, other errors are returned.
    pub fn from_outcomes<I: IntoIterator<Item = Result<SampleRecord>>>(outcomes: I) -> Result<Self> {
        let mut set = SampleSet::default();
        for o in outcomes {
            match o {
                Ok(r) => set.records.push(r),
                Err(e) if is_skippable(&e) => set.skipped += 1,
                Err(e) => return Err(e),
            }
        }
        Ok(set)
    }

    /// Fano-factor estimate for `input` with medium occupation `f`.
    pub fn estimate(
        &self,
        input: &SqueezedInput,
        det: &DetectionConfig,
        occupation: f64,
        options: &EnsembleOptions,
    ) -> Result<EnsembleResult> {
        let m = self.records.len();
        if m == 0 {
            return Err(Error::AllSamplesAboveThreshold {
                n_samples: self.skipped,
            });
        }
        let f_in = match options.scheme {
            Scheme::Direct => match options.fano_in {
                Some(f) if f >= 0.0 && f.is_finite() => f,
                Some(_) => return Err(Error::invalid("fano_in", "must be finite and >= 0")),
                None => photostats::fano_in_squeezed(input)?,
            },
            _ => 1.0,
        };
        let dk = det.efficiency * det.coupling;
        let rho = input.rho;
        let sh = rho.sinh();
        let rot = C64::from_polar(1.0, input.phi);

        // Per-sample observables whose means define the estimate.
        let (a, b, c): (Vec<f64>, Vec<f64>, Vec<f64>) = match options.scheme {
            Scheme::Direct => (
                self.records.iter().map(|r| r.transmission).collect(),
                self.records.iter().map(|r| r.beating).collect(),
                Vec::new(),
            ),
            Scheme::HomodyneOptimal => (
                self.records.iter().map(|r| r.homodyne_transmission).collect(),
                self.records.iter().map(|r| r.homodyne_beating).collect(),
                Vec::new(),
            ),
            Scheme::HomodyneFixed { arg_beta } => {
                let lo = rot * C64::from_polar(1.0, -2.0 * arg_beta);
                (
                    self.records.iter().map(|r| r.homodyne_transmission).collect(),
                    self.records.iter().map(|r| r.homodyne_beating).collect(),
                    self.records.iter().map(|r| (lo * r.t * r.t).re).collect(),
                )
            }
        };

        let combine = |ma: f64, mb: f64, mc: f64| -> FanoBreakdown {
            match options.scheme {
                Scheme::Direct => {
                    let incident = ma * (f_in - 1.0);
                    let beating = 2.0 * occupation * mb / ma;
                    FanoBreakdown {
                        value: 1.0 + incident + beating,
                        incident,
                        beating,
                        probe_phase: 0.0,
                    }
                }
                Scheme::HomodyneOptimal => {
                    let beating = 2.0 * dk * occupation * mb;
                    FanoBreakdown {
                        value: 1.0 - 2.0 * dk * ma * (-rho).exp() * sh + beating,
                        incident: 2.0 * dk * ma * sh * sh,
                        beating,
                        probe_phase: -dk * ma * (2.0 * rho).sinh(),
                    }
                }
                Scheme::HomodyneFixed { .. } => {
                    let incident = 2.0 * dk * ma * sh * sh;
                    let beating = 2.0 * dk * occupation * mb;
                    let probe_phase = -dk * mc * (2.0 * rho).sinh();
                    FanoBreakdown {
                        value: 1.0 + incident + beating + probe_phase,
                        incident,
                        beating,
                        probe_phase,
                    }
                }
            }
        };

        let ma = running_mean(&a);
        let mb = running_mean(&b);
        let mc = if c.is_empty() { 0.0 } else { running_mean(&c) };
        if matches!(options.scheme, Scheme::Direct) && !(ma > 0.0) {
            return Err(Error::ZeroMeanCount);
        }
        let terms = combine(ma, mb, mc);

        // Jackknife: leave-one-out means as shifts of the full mean, so that
        // identical samples give exactly zero spread.
        let jk_stderr = if m > 1 {
            let k = (m - 1) as f64;
            let loo: Vec<f64> = (0..m)
                .map(|i| {
                    let la = ma - (a[i] - ma) / k;
                    let lb = mb - (b[i] - mb) / k;
                    let lc = if c.is_empty() { 0.0 } else { mc - (c[i] - mc) / k };
                    combine(la, lb, lc).value
                })
                .collect();
            let center = running_mean(&loo);
            let var = loo.iter().map(|x| (x - center) * (x - center)).sum::<f64>() * k / m as f64;
            var.sqrt()
        } else {
            f64::NAN
        };

        let per_sample: Vec<f64> = (0..m)
            .map(|i| {
                let ci = if c.is_empty() { 0.0 } else { c[i] };
                combine(a[i], b[i], ci).value
            })
            .collect();
        let mean_of_ratios = running_mean(&per_sample);
        let mor_stderr = if m > 1 {
            let var = per_sample
                .iter()
                .map(|x| (x - mean_of_ratios) * (x - mean_of_ratios))
                .sum::<f64>()
                / (m - 1) as f64;
            (var / m as f64).sqrt()
        } else {
            f64::NAN
        };

        let (mean_fano, stderr) = match options.averaging {
            AveragingMode::RatioOfMeans => (terms.value, jk_stderr),
            AveragingMode::MeanOfRatios => (mean_of_ratios, mor_stderr),
        };
        Ok(EnsembleResult {
            mean_fano,
            stderr,
            ratio_of_means: terms.value,
            mean_of_ratios,
            terms,
            n_used: m,
            n_skipped: self.skipped,
            per_sample: options.keep_per_sample.then_some(per_sample),
        })
    }
}

/// Mean by running update; exact when all values are equal.
fn running_mean(x: &[f64]) -> f64 {
    let mut mean = 0.0;
    for (i, &v) in x.iter().enumerate() {
        mean += (v - mean) / (i + 1) as f64;
    }
    mean
}

/// Build sample `k` of the ensemble and reduce it.
pub fn evaluate_sample(
    medium: &MediumSpec,
    master_seed: u64,
    k: u64,
    input: &SqueezedInput,
    det: &DetectionConfig,
    mode_average: bool,
) -> Result<SampleRecord> {
    let spec = MediumSpec {
        seed: derive_seed(master_seed, k),
        ..medium.clone()
    };
    let s = crate::medium::build_medium(&spec)?;
    sample_record(&s, input, det, mode_average)
}

/// Grow sample `k` once and reduce it at every length in `lengths`
/// (ascending). After a failure at some length, all longer lengths report
/// the same failure.
pub fn evaluate_sample_sweep(
    medium: &MediumSpec,
    lengths: &[usize],
    master_seed: u64,
    k: u64,
    input: &SqueezedInput,
    det: &DetectionConfig,
    mode_average: bool,
) -> Vec<Result<SampleRecord>> {
    let spec = MediumSpec {
        seed: derive_seed(master_seed, k),
        ..medium.clone()
    };
    let mut out = Vec::with_capacity(lengths.len());
    let mut builder = match MediumBuilder::new(&spec) {
        Ok(b) => b,
        Err(e) => {
            out.resize(lengths.len(), Err(e));
            return out;
        }
    };
    let mut failure: Option<Error> = None;
    for &l in lengths {
        if let Some(e) = &failure {
            out.push(Err(e.clone()));
            continue;
        }
        let rec = builder
            .advance_to(l)
            .and_then(|_| builder.snapshot())
            .and_then(|s| sample_record(&s, input, det, mode_average));
        if let Err(e) = &rec {
            failure = Some(e.clone());
        }
        out.push(rec);
    }
    out
}

fn check_lengths(lengths: &[usize]) -> Result<()> {
    if lengths.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::invalid("lengths", "must be non-decreasing"));
    }
    Ok(())
}

/// A standard error needs at least two samples.
fn check_samples(n_samples: usize) -> Result<()> {
    if n_samples < 2 {
        return Err(Error::invalid("n_samples", "must be at least 2"));
    }
    Ok(())
}

/// Evaluates samples `0..n` and returns their outcomes in index order.
/// Implementations may run the closure concurrently; results must not
/// depend on scheduling.
pub trait SampleMap {
    /// `(0..n).map(f)` collected in order.
    fn map_samples<T: Send, F: Fn(u64) -> T + Sync>(&self, n: usize, f: F) -> Vec<T>;
}

/// Evaluates samples one after another.
#[derive(Clone, Copy, Debug, Default)]
pub struct Sequential;

impl SampleMap for Sequential {
    fn map_samples<T: Send, F: Fn(u64) -> T + Sync>(&self, n: usize, f: F) -> Vec<T> {
        (0..n as u64).map(f).collect()
    }
}

/// Ensemble average over `n_samples` media.
pub fn run_ensemble(
    medium: &MediumSpec,
    input: &SqueezedInput,
    det: &DetectionConfig,
    options: &EnsembleOptions,
    n_samples: usize,
    master_seed: u64,
) -> Result<EnsembleResult> {
    run_ensemble_on(&Sequential, medium, input, det, options, n_samples, master_seed)
}

/// [`run_ensemble`] with samples evaluated by `exec`.
pub fn run_ensemble_on<E: SampleMap>(
    exec: &E,
    medium: &MediumSpec,
    input: &SqueezedInput,
    det: &DetectionConfig,
    options: &EnsembleOptions,
    n_samples: usize,
    master_seed: u64,
) -> Result<EnsembleResult> {
    medium.validate()?;
    input.validate()?;
    det.validate(medium.n_modes)?;
    check_samples(n_samples)?;
    let outcomes = exec.map_samples(n_samples, |k| {
        evaluate_sample(medium, master_seed, k, input, det, options.mode_average)
    });
    let set = SampleSet::from_outcomes(outcomes)?;
    set.estimate(input, det, medium.occupation, options)
}

/// One length of a sweep.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepPoint {
    /// Periods.
    pub length: usize,
    /// Estimate at this length, or why none exists.
    pub result: Result<EnsembleResult>,
}

/// Sample sets for every length of a sweep from per-sample outcomes
/// (`outcomes[k][i]` is sample `k` at length `i`).
pub fn collect_sweep(n_lengths: usize, outcomes: Vec<Vec<Result<SampleRecord>>>) -> Result<Vec<SampleSet>> {
    let mut sets = alloc::vec![SampleSet::default(); n_lengths];
    for per_sample in outcomes {
        for (set, o) in sets.iter_mut().zip(per_sample) {
            match o {
                Ok(r) => set.records.push(r),
                Err(e) if is_skippable(&e) => set.skipped += 1,
                Err(e) => return Err(e),
            }
        }
    }
    Ok(sets)
}

/// Ensemble averages at several lengths, reusing each medium for all of
/// them (common random numbers make the curve smooth in `L`).
pub fn sweep_lengths(
    medium: &MediumSpec,
    lengths: &[usize],
    input: &SqueezedInput,
    det: &DetectionConfig,
    options: &EnsembleOptions,
    n_samples: usize,
    master_seed: u64,
) -> Result<Vec<SweepPoint>> {
    sweep_lengths_on(&Sequential, medium, lengths, input, det, options, n_samples, master_seed)
}

/// [`sweep_lengths`] with samples evaluated by `exec`.
#[allow(clippy::too_many_arguments)]
pub fn sweep_lengths_on<E: SampleMap>(
    exec: &E,
    medium: &MediumSpec,
    lengths: &[usize],
    input: &SqueezedInput,
    det: &DetectionConfig,
    options: &EnsembleOptions,
    n_samples: usize,
    master_seed: u64,
) -> Result<Vec<SweepPoint>> {
    medium.validate()?;
    input.validate()?;
    det.validate(medium.n_modes)?;
    check_lengths(lengths)?;
    check_samples(n_samples)?;
    let outcomes = exec.map_samples(n_samples, |k| {
        evaluate_sample_sweep(medium, lengths, master_seed, k, input, det, options.mode_average)
    });
    let sets = collect_sweep(lengths.len(), outcomes)?;
    Ok(lengths
        .iter()
        .zip(sets)
        .map(|(&length, set)| SweepPoint {
            length,
            result: set.estimate(input, det, medium.occupation, options),
        })
        .collect())
}

/// One point of a sweep in the diffusive length `s`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffusiveSweepPoint {
    /// Requested `s`.
    pub s: f64,
    /// `s` realized by the rounded number of periods.
    pub effective_s: f64,
    /// Periods built.
    pub length: usize,
    /// Estimate, or why none exists.
    pub result: Result<EnsembleResult>,
}

/// [`sweep_lengths`] over ascending `s_values`, mapped onto periods by
/// `scale`. `base` supplies everything except the length; its absorption or
/// gain length should come from [`DiffusiveScale::medium_spec`].
#[allow(clippy::too_many_arguments)]
pub fn sweep_s(
    scale: &DiffusiveScale,
    base: &MediumSpec,
    s_values: &[f64],
    input: &SqueezedInput,
    det: &DetectionConfig,
    options: &EnsembleOptions,
    n_samples: usize,
    master_seed: u64,
) -> Result<Vec<DiffusiveSweepPoint>> {
    sweep_s_on(&Sequential, scale, base, s_values, input, det, options, n_samples, master_seed)
}

/// [`sweep_s`] with samples evaluated by `exec`.
#[allow(clippy::too_many_arguments)]
pub fn sweep_s_on<E: SampleMap>(
    exec: &E,
    scale: &DiffusiveScale,
    base: &MediumSpec,
    s_values: &[f64],
    input: &SqueezedInput,
    det: &DetectionConfig,
    options: &EnsembleOptions,
    n_samples: usize,
    master_seed: u64,
) -> Result<Vec<DiffusiveSweepPoint>> {
    if s_values.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(Error::invalid("s_values", "must be finite and >= 0"));
    }
    if s_values.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::invalid("s_values", "must be sorted ascending"));
    }
    let lengths: Vec<usize> = s_values.iter().map(|&s| scale.periods_for(s)).collect();
    let points = sweep_lengths_on(exec, base, &lengths, input, det, options, n_samples, master_seed)?;
    Ok(s_values
        .iter()
        .zip(points)
        .map(|(&s, p)| DiffusiveSweepPoint {
            s,
            effective_s: scale.effective_s(p.length),
            length: p.length,
            result: p.result,
        })
        .collect())
}

/// Largest singular value of a matrix; used to report how far a composite
/// is from the contraction bound.
pub fn largest_singular_value(m: &CMatrix) -> f64 {
    linalg::singular_values(m).first().copied().unwrap_or(0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::zero_length_limits;

    fn spec(kind: MediumKind, length: usize, occupation: f64) -> MediumSpec {
        MediumSpec {
            n_modes: 3,
            length,
            scatter_strength: 0.3,
            abs_or_gain_length: 40.0,
            kind,
            occupation,
            seed: 0,
        }
    }

    #[test]
    fn zero_length_reproduces_bare_detector() {
        let input = SqueezedInput::new(C64::new(1.2, 0.0), 0.4, 0.0, 1).unwrap();
        let det = DetectionConfig::transmitted(3, 0.8, 0.4, 1);
        let f_in = photostats::fano_in_squeezed(&input).unwrap();
        let limits = zero_length_limits(f_in, 0.8, 0.4, 0.4, true).unwrap();
        let direct = EnsembleOptions {
            mode_average: false,
            ..Default::default()
        };
        let res = run_ensemble(&spec(MediumKind::Absorbing, 0, 0.1), &input, &det, &direct, 7, 1).unwrap();
        assert_eq!(res.mean_fano, limits.direct);
        assert_eq!(res.stderr, 0.0);
        let homo = EnsembleOptions {
            scheme: Scheme::HomodyneOptimal,
            ..direct
        };
        let res = run_ensemble(&spec(MediumKind::Absorbing, 0, 0.1), &input, &det, &homo, 7, 1).unwrap();
        assert_eq!(res.mean_fano, limits.homodyne_min);
    }

    #[test]
    fn results_do_not_depend_on_sample_order() {
        let input = SqueezedInput::new(C64::new(1.0, 0.0), 0.3, 0.0, 0).unwrap();
        let det = DetectionConfig::transmitted(3, 1.0, 0.5, 0);
        let m = spec(MediumKind::Absorbing, 12, 0.01);
        let opts = EnsembleOptions::default();
        let a = run_ensemble(&m, &input, &det, &opts, 6, 77).unwrap();
        let mut recs: Vec<_> = (0..6u64)
            .rev()
            .map(|k| evaluate_sample(&m, 77, k, &input, &det, true))
            .collect();
        recs.reverse();
        let b = SampleSet::from_outcomes(recs).unwrap().estimate(&input, &det, 0.01, &opts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sweep_matches_individual_runs() {
        let input = SqueezedInput::new(C64::new(1.0, 0.0), 0.3, 0.0, 0).unwrap();
        let det = DetectionConfig::transmitted(3, 1.0, 0.5, 0);
        let m = spec(MediumKind::Absorbing, 0, 0.01);
        let opts = EnsembleOptions::default();
        let sweep = sweep_lengths(&m, &[3, 8], &input, &det, &opts, 4, 5).unwrap();
        let single = run_ensemble(&MediumSpec { length: 8, ..m }, &input, &det, &opts, 4, 5).unwrap();
        assert_eq!(sweep[1].result.as_ref().unwrap(), &single);
    }

    #[test]
    fn s_sweep_allows_repeated_lengths() {
        let input = SqueezedInput::new(C64::new(1.0, 0.0), 0.3, 0.0, 0).unwrap();
        let det = DetectionConfig::transmitted(3, 1.0, 0.5, 0);
        let scale = DiffusiveScale::new(4.0, 0.5).unwrap();
        let base = scale.medium_spec(3, 0.3, MediumKind::Absorbing, 0.0, 0.01, 0).unwrap();
        let pts = sweep_s(&scale, &base, &[0.1, 0.2, 1.5], &input, &det, &Default::default(), 3, 9).unwrap();
        assert_eq!(pts[0].length, 0);
        assert_eq!(pts[0].result, pts[1].result);
        assert_eq!(pts[2].length, 5);
        assert!(sweep_s(&scale, &base, &[1.0, 0.5], &input, &det, &Default::default(), 3, 9).is_err());
        assert!(run_ensemble(&base, &input, &det, &Default::default(), 1, 9).is_err());
    }

    #[test]
    fn diffusive_scale_lengths() {
        let sc = DiffusiveScale::new(20.0, 0.1).unwrap();
        assert!((sc.xi() - 150.0).abs() < 1e-12);
        assert_eq!(sc.periods_for(1.0), 130);
        assert!((sc.effective_s(130) - 1.0).abs() < 1e-12);
        assert_eq!(sc.periods_for(0.1), 0);
        let la = sc.abs_or_gain_length(MediumKind::Absorbing).unwrap();
        let lg = sc.abs_or_gain_length(MediumKind::Amplifying).unwrap();
        let continuum = 2.0 * 150.0f64.powi(2) / 20.0;
        assert!((la / continuum - 1.0).abs() < 0.02);
        assert!((lg / continuum - 1.0).abs() < 0.02);
    }
}
