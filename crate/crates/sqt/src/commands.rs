//! Subcommands: parameter schemas, orchestration and output tables.

use std::fmt;

use serde_json::{json, Map, Value};
use sqt_core::analytics::{
    fano_direct_absorbing_avg, fano_direct_amplifying_avg, fano_homodyne_absorbing_avg,
    fano_homodyne_amplifying_avg, zero_length_limits, AnalyticValue, ProbePhase, Validity,
    WaveguideRatios,
};
use sqt_core::ensemble::{
    sweep_lengths_on, AveragingMode, DiffusiveScale, EnsembleOptions, EnsembleResult, SampleMap, Scheme,
};
use sqt_core::medium::{build_medium, MeanFreePathFit, MediumKind, MediumSpec};
use sqt_core::photostats::{
    fano_homodyne_min, fano_in_squeezed, phase_scan, DetectionConfig, SqueezedInput,
};
use sqt_core::seed::derive_seed;
use sqt_core::{Complex64, Error};

use crate::config::{Config, ConfigError, Key};
use crate::runner::{calibrate, diffusive_sample_sets, Pool};
use crate::table::Table;
use crate::validate;

/// Why a command stopped.
#[derive(Debug)]
pub enum CmdError {
    /// Bad configuration (exit 2).
    Config(ConfigError),
    /// The physics layer refused the computation, e.g. at the laser
    /// threshold (exit 3).
    Physics(Error),
    /// A validation check failed (exit 4).
    Validation(String),
    /// Anything else, e.g. output could not be written (exit 1).
    Io(anyhow::Error),
}

impl CmdError {
    /// Process exit code.
    pub fn exit_code(&self) -> i32 {
        match self {
            CmdError::Config(_) => 2,
            CmdError::Physics(_) => 3,
            CmdError::Validation(_) => 4,
            CmdError::Io(_) => 1,
        }
    }
}

impl fmt::Display for CmdError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CmdError::Config(e) => write!(f, "configuration error: {e}"),
            CmdError::Physics(e) => write!(f, "physics error: {e}"),
            CmdError::Validation(m) => write!(f, "validation failed: {m}"),
            CmdError::Io(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<ConfigError> for CmdError {
    fn from(e: ConfigError) -> Self {
        CmdError::Config(e)
    }
}

/// Parameter errors from the physics layer are reported against the config
/// key of the same name.
fn physics(cfg: &Config) -> impl Fn(Error) -> CmdError + '_ {
    move |e| match e {
        Error::InvalidArgument { name, reason } => CmdError::Config(cfg.error(name, reason)),
        e @ Error::ModeMismatch { .. } => CmdError::Config(cfg.error("n_modes", e.to_string())),
        e => CmdError::Physics(e),
    }
}

/// A command's result: a table plus metadata for headers and JSON.
#[derive(Clone, Debug, PartialEq)]
pub struct Output {
    /// Data rows.
    pub table: Table,
    /// Derived quantities worth recording (calibrated lengths, timings, ...).
    pub metadata: Map<String, Value>,
    /// Set when the command ran but its checks failed.
    pub failure: Option<String>,
}

impl Output {
    fn new(table: Table) -> Self {
        Output {
            table,
            metadata: Map::new(),
            failure: None,
        }
    }
}

/// A subcommand.
pub struct CommandSpec {
    /// Name on the command line.
    pub name: &'static str,
    /// One-line description.
    pub about: &'static str,
    /// Config key filled by a leading bare word, if any.
    pub positional: Option<&'static str>,
    /// Keys the command understands.
    pub keys: fn() -> Vec<Key>,
    /// Entry point.
    pub run: fn(&Config, &Pool) -> Result<Output, CmdError>,
}

/// Every subcommand.
pub const COMMANDS: &[CommandSpec] = &[
    CommandSpec {
        name: "fano-direct",
        about: "Ensemble-averaged direct-detection Fano factor, Monte Carlo and closed form",
        positional: None,
        keys: fano_direct_keys,
        run: cmd_fano_direct,
    },
    CommandSpec {
        name: "fano-homodyne",
        about: "Homodyne Fano factor at the optimal or a fixed probe phase, or a phase scan",
        positional: Some("mode"),
        keys: fano_homodyne_keys,
        run: cmd_fano_homodyne,
    },
    CommandSpec {
        name: "sweep",
        about: "Ensemble averages over a list of medium lengths in slices",
        positional: None,
        keys: sweep_keys,
        run: cmd_sweep,
    },
    CommandSpec {
        name: "figure3",
        about: "Direct-detection curve families versus length (absorbing and amplifying)",
        positional: None,
        keys: figure3_keys,
        run: cmd_figure3,
    },
    CommandSpec {
        name: "figure4",
        about: "Homodyne curve families versus length (absorbing and amplifying)",
        positional: None,
        keys: figure4_keys,
        run: cmd_figure4,
    },
    CommandSpec {
        name: "calibrate",
        about: "Fit the mean free path of the slice model from Ohm's-law scaling",
        positional: None,
        keys: calibrate_keys,
        run: cmd_calibrate,
    },
    CommandSpec {
        name: "validate",
        about: "Run the self-check suite (fast or full)",
        positional: Some("level"),
        keys: validate_keys,
        run: cmd_validate,
    },
];

/// Look up a subcommand.
pub fn find(name: &str) -> Option<&'static CommandSpec> {
    COMMANDS.iter().find(|c| c.name == name)
}

const OUTPUT_KEYS: &[Key] = &[
    Key::unrecorded("out", "-", "CSV output path (`-` for stdout)"),
    Key::unrecorded("json", "", "optional JSON output path"),
    Key::unrecorded("threads", "0", "worker threads (0 = all cores)"),
];

const MEDIUM_KEYS: &[Key] = &[
    Key::new("n_modes", "10", "propagating modes N"),
    Key::new("scatter_strength", "0.31", "slice disorder strength"),
    Key::new("medium", "absorbing", "absorbing, amplifying or passive"),
    Key::new("occupation", "auto", "occupation f (auto: 1e-3 absorbing, -1 amplifying)"),
    Key::new("l_over_xi", "0.1", "transport mean free path over absorption length"),
    Key::new("mean_free_path", "auto", "fitted mean free path in slices, or auto to calibrate"),
    Key::new("calib_lengths", "20,40,80,160", "calibration lengths in slices"),
    Key::new("calib_samples", "60", "calibration samples"),
];

const INPUT_KEYS: &[Key] = &[
    Key::new("alpha_re", "1", "coherent amplitude, real part"),
    Key::new("alpha_im", "0", "coherent amplitude, imaginary part"),
    Key::new("rho", "0", "squeezing parameter"),
    Key::new("phi", "0", "squeezing phase"),
    Key::new("incident_mode", "0", "incident mode m0"),
];

const DETECTION_KEYS: &[Key] = &[
    Key::new("efficiency", "1", "detector efficiency d"),
    Key::new("coupling", "0.5", "homodyne coupling kappa"),
    Key::new("probe_mode", "0", "homodyne probe mode n0"),
];

const ENSEMBLE_KEYS: &[Key] = &[
    Key::new("n_samples", "500", "disorder realizations"),
    Key::new("seed", "0", "master seed (SQT_SEED overrides the file value)"),
    Key::new("mode_average", "true", "average over incident modes as the closed forms do"),
    Key::new("averaging", "ratio_of_means", "ratio_of_means or mean_of_ratios"),
];

fn keys(groups: &[&[Key]], extra: &[Key]) -> Vec<Key> {
    groups.iter().flat_map(|g| g.iter().copied()).chain(extra.iter().copied()).collect()
}

fn fano_direct_keys() -> Vec<Key> {
    keys(
        &[MEDIUM_KEYS, INPUT_KEYS, DETECTION_KEYS, ENSEMBLE_KEYS, OUTPUT_KEYS],
        &[
            Key::new("s", "0.5,1,2", "lengths L/xi_a, ascending"),
            Key::new("fano_in", "1", "incident Fano factor, or auto from the squeezed input"),
        ],
    )
}

fn fano_homodyne_keys() -> Vec<Key> {
    keys(
        &[MEDIUM_KEYS, INPUT_KEYS, DETECTION_KEYS, ENSEMBLE_KEYS, OUTPUT_KEYS],
        &[
            Key::new("mode", "min", "min, fixed or scan"),
            Key::new("s", "0.5,1,2", "lengths L/xi_a, ascending"),
            Key::new("arg_beta", "0", "fixed local-oscillator phase"),
            Key::new("n_phases", "64", "scan grid size"),
            Key::new("n_media", "1", "media to scan"),
        ],
    )
}

fn sweep_keys() -> Vec<Key> {
    keys(
        &[MEDIUM_KEYS, INPUT_KEYS, DETECTION_KEYS, ENSEMBLE_KEYS, OUTPUT_KEYS],
        &[
            Key::new("lengths", "0,20,40,80,160", "medium lengths in slices, non-decreasing"),
            Key::new("abs_or_gain_length", "auto", "slice absorption/gain length, or auto from l_over_xi"),
            Key::new("scheme", "direct", "direct, homodyne_min or homodyne_fixed"),
            Key::new("arg_beta", "0", "local-oscillator phase for homodyne_fixed"),
            Key::new("fano_in", "1", "incident Fano factor, or auto from the squeezed input"),
        ],
    )
}

const FIGURE_KEYS: &[Key] = &[
    Key::new("l_over_xi", "0.1", "transport mean free path over absorption length"),
    Key::new("efficiency", "1", "detector efficiency d"),
    Key::new("f_absorbing", "1e-3", "occupation of the absorbing panel"),
    Key::new("f_amplifying", "-1", "occupation of the amplifying panel"),
    Key::new("s_step", "0.01", "grid spacing in s"),
    Key::new(
        "extrapolate_below",
        "2",
        "medium length in mean free paths below which curves are extrapolated to L = 0",
    ),
    Key::new("s_max_absorbing", "5", "largest s of the absorbing panel"),
    Key::new("s_max_amplifying", "3.13", "largest s of the amplifying panel (curves stop at threshold)"),
    Key::new("n_modes", "10", "modes N (validity flags, homodyne formulas, Monte Carlo)"),
    Key::new("monte_carlo", "false", "overlay Monte Carlo points"),
    Key::new("mc_s", "0.5,1,2", "Monte Carlo lengths L/xi_a"),
    Key::new("n_samples", "200", "Monte Carlo realizations"),
    Key::new("seed", "0", "master seed"),
    Key::new("scatter_strength", "0.31", "slice disorder strength"),
    Key::new("mean_free_path", "auto", "fitted mean free path in slices, or auto"),
    Key::new("calib_lengths", "20,40,80,160", "calibration lengths in slices"),
    Key::new("calib_samples", "60", "calibration samples"),
];

fn figure3_keys() -> Vec<Key> {
    keys(&[FIGURE_KEYS, OUTPUT_KEYS], &[Key::new("fano_in", "0:3:0.5", "incident Fano factors")])
}

fn figure4_keys() -> Vec<Key> {
    keys(
        &[FIGURE_KEYS, OUTPUT_KEYS],
        &[
            Key::new("rho", "0:1:0.25", "squeezing parameters"),
            Key::new("coupling", "0.5", "homodyne coupling kappa"),
            Key::new("incident_mode", "0", "incident mode m0"),
            Key::new("probe_mode", "0", "probe mode n0"),
            Key::new("probe_phase", "optimal", "optimal or fixed"),
        ],
    )
}

fn calibrate_keys() -> Vec<Key> {
    keys(
        &[OUTPUT_KEYS],
        &[
            Key::new("n_modes", "10", "propagating modes N"),
            Key::new("scatter_strength", "0.31", "slice disorder strength"),
            Key::new("calib_lengths", "20,40,80,160", "lengths in slices"),
            Key::new("calib_samples", "200", "samples"),
            Key::new("seed", "0", "master seed"),
        ],
    )
}

fn validate_keys() -> Vec<Key> {
    keys(
        &[OUTPUT_KEYS],
        &[
            Key::new("level", "fast", "fast or full"),
            Key::new("seed", "0", "master seed for randomized checks"),
            Key::unrecorded("inject_fault", "", "corrupt a formula to test the suite itself"),
        ],
    )
}

// ---------------------------------------------------------------------------
// Shared parameter handling

fn medium_kind(cfg: &Config) -> Result<MediumKind, CmdError> {
    Ok(match cfg.choice("medium", &["absorbing", "amplifying", "passive"])? {
        "absorbing" => MediumKind::Absorbing,
        "amplifying" => MediumKind::Amplifying,
        _ => MediumKind::Passive,
    })
}

fn occupation(cfg: &Config, kind: MediumKind) -> Result<f64, CmdError> {
    let f = match cfg.f64_or_auto("occupation")? {
        Some(f) => f,
        None => match kind {
            MediumKind::Absorbing => 1e-3,
            MediumKind::Amplifying => -1.0,
            MediumKind::Passive => 0.0,
        },
    };
    let ok = match kind {
        MediumKind::Absorbing => f >= 0.0,
        MediumKind::Amplifying => f < 0.0,
        MediumKind::Passive => f == 0.0,
    };
    if !ok {
        return Err(cfg
            .error("occupation", "must be >= 0 for absorbing, < 0 for amplifying and 0 for passive media")
            .into());
    }
    Ok(f)
}

fn squeezed_input(cfg: &Config) -> Result<SqueezedInput, CmdError> {
    let alpha = Complex64::new(cfg.f64("alpha_re")?, cfg.f64("alpha_im")?);
    SqueezedInput::new(alpha, cfg.f64("rho")?, cfg.f64("phi")?, cfg.usize("incident_mode")?).map_err(physics(cfg))
}

fn detection(cfg: &Config, n_modes: usize) -> Result<DetectionConfig, CmdError> {
    let det = DetectionConfig::transmitted(
        n_modes,
        cfg.f64("efficiency")?,
        cfg.f64("coupling")?,
        cfg.usize("probe_mode")?,
    );
    det.validate(n_modes).map_err(physics(cfg))?;
    Ok(det)
}

fn options(cfg: &Config, scheme: Scheme, fano_in: Option<f64>) -> Result<EnsembleOptions, CmdError> {
    let averaging = match cfg.choice("averaging", &["ratio_of_means", "mean_of_ratios"])? {
        "ratio_of_means" => AveragingMode::RatioOfMeans,
        _ => AveragingMode::MeanOfRatios,
    };
    Ok(EnsembleOptions {
        scheme,
        averaging,
        mode_average: cfg.bool("mode_average")?,
        keep_per_sample: false,
        fano_in,
    })
}

fn fano_in(cfg: &Config, input: &SqueezedInput) -> Result<f64, CmdError> {
    match cfg.f64_or_auto("fano_in")? {
        Some(f) if f >= 0.0 => Ok(f),
        Some(_) => Err(cfg.error("fano_in", "must be >= 0").into()),
        None => fano_in_squeezed(input).map_err(physics(cfg)),
    }
}

fn n_modes(cfg: &Config) -> Result<usize, CmdError> {
    let n = cfg.usize("n_modes")?;
    if n == 0 {
        return Err(cfg.error("n_modes", "must be at least 1").into());
    }
    Ok(n)
}

/// The diffusive length scale, calibrating the mean free path if asked.
/// Parse the ensemble keys up front so that a typo is reported before a
/// calibration that may take minutes.
fn preflight(cfg: &Config) -> Result<(), CmdError> {
    for key in ["n_samples", "calib_samples"] {
        if cfg.has(key) {
            cfg.usize(key)?;
        }
    }
    for key in ["scatter_strength", "arg_beta"] {
        if cfg.has(key) {
            cfg.f64(key)?;
        }
    }
    if cfg.has("seed") {
        cfg.u64("seed")?;
    }
    if cfg.has("mode_average") {
        cfg.bool("mode_average")?;
    }
    if cfg.has("averaging") {
        cfg.choice("averaging", &["ratio_of_means", "mean_of_ratios"])?;
    }
    Ok(())
}

fn diffusive_scale(cfg: &Config, pool: &Pool, n_modes: usize, meta: &mut Map<String, Value>) -> Result<DiffusiveScale, CmdError> {
    preflight(cfg)?;
    let l_fit = match cfg.f64_or_auto("mean_free_path")? {
        Some(l) => l,
        None => {
            let fit = run_calibration(cfg, pool, n_modes)?;
            meta.insert("calibration_stderr".into(), json!(fit.stderr));
            meta.insert("calibration_residual".into(), json!(fit.max_relative_residual));
            fit.mean_free_path
        }
    };
    let scale = DiffusiveScale::new(l_fit, cfg.f64("l_over_xi")?).map_err(physics(cfg))?;
    meta.insert("mean_free_path_fit".into(), json!(l_fit));
    meta.insert("transport_mean_free_path".into(), json!(scale.transport_mean_free_path()));
    meta.insert("xi".into(), json!(scale.xi()));
    Ok(scale)
}

fn run_calibration(cfg: &Config, pool: &Pool, n_modes: usize) -> Result<MeanFreePathFit, CmdError> {
    let lengths = cfg.usize_list("calib_lengths")?;
    let samples = cfg.usize("calib_samples")?;
    calibrate(pool, n_modes, cfg.f64("scatter_strength")?, &lengths, samples, cfg.u64("seed")?)
        .map_err(|e| match e {
            Error::InvalidArgument { reason, .. } => CmdError::Config(cfg.error("calib_lengths", reason)),
            e => CmdError::Physics(e),
        })
}

fn validity_label(v: Validity) -> &'static str {
    if v.short_medium {
        "short"
    } else if v.beyond_localization {
        "localized"
    } else {
        "ok"
    }
}

fn ascending(cfg: &Config, key: &str, v: &[f64]) -> Result<(), CmdError> {
    if v.iter().any(|&x| x < 0.0) || v.windows(2).any(|w| w[0] > w[1]) {
        return Err(cfg.error(key, "must be >= 0 and ascending").into());
    }
    Ok(())
}

/// `s` of a medium of `length` slices; an empty medium has `s = 0`.
fn realized_s(scale: &DiffusiveScale, length: usize) -> f64 {
    if length == 0 {
        0.0
    } else {
        scale.effective_s(length)
    }
}

fn ensemble_cells(r: &Result<EnsembleResult, Error>) -> Result<(f64, f64, usize), Error> {
    let r = r.as_ref().map_err(Clone::clone)?;
    Ok((r.mean_fano, r.stderr, r.n_skipped))
}

// ---------------------------------------------------------------------------
// fano-direct

/// Closed-form direct-detection average; `s = 0` is the bare detector.
fn direct_analytic(kind: MediumKind, s: f64, l_over_xi: f64, n: usize, f_in: f64, d: f64, f: f64) -> Result<(f64, &'static str), Error> {
    if s == 0.0 || kind == MediumKind::Passive {
        let z = zero_length_limits(f_in, d, 0.5, 0.0, true)?;
        return Ok((z.direct, if s == 0.0 { "zero_length" } else { "passive" }));
    }
    let w = WaveguideRatios::new(s, l_over_xi, n)?;
    let v: AnalyticValue = match kind {
        MediumKind::Amplifying => fano_direct_amplifying_avg(&w, f_in, d, f)?,
        _ => fano_direct_absorbing_avg(&w, f_in, d, f)?,
    };
    Ok((v.value, validity_label(v.validity)))
}

fn cmd_fano_direct(cfg: &Config, pool: &Pool) -> Result<Output, CmdError> {
    let n = n_modes(cfg)?;
    let kind = medium_kind(cfg)?;
    let f = occupation(cfg, kind)?;
    let input = squeezed_input(cfg)?;
    let f_in = fano_in(cfg, &input)?;
    let det = detection(cfg, n)?;
    let s_values = cfg.f64_list("s")?;
    ascending(cfg, "s", &s_values)?;
    let mut meta = Map::new();
    let scale = diffusive_scale(cfg, pool, n, &mut meta)?;
    let base = MediumSpec {
        n_modes: n,
        length: 0,
        scatter_strength: cfg.f64("scatter_strength")?,
        abs_or_gain_length: scale.abs_or_gain_length(kind).map_err(physics(cfg))?,
        kind,
        occupation: f,
        seed: 0,
    };
    meta.insert("abs_or_gain_length".into(), json!(base.abs_or_gain_length));
    meta.insert("fano_in".into(), json!(f_in));
    let opts = options(cfg, Scheme::Direct, Some(f_in))?;
    let (lengths, sets) = diffusive_sample_sets(
        pool,
        &scale,
        &base,
        &s_values,
        &input,
        &det,
        opts.mode_average,
        cfg.usize("n_samples")?,
        cfg.u64("seed")?,
    )
    .map_err(physics(cfg))?;

    let mut table = Table::new(&[
        "s", "effective_s", "length", "n_modes", "fano_mc", "stderr", "fano_analytic", "n_skipped", "validity",
    ]);
    for ((&s, &length), set) in s_values.iter().zip(&lengths).zip(&sets) {
        let r = set.estimate(&input, &det, f, &opts).map_err(physics(cfg))?;
        let s_eff = realized_s(&scale, length);
        let (analytic, validity) =
            direct_analytic(kind, s_eff, scale.l_over_xi, n, f_in, det.efficiency, f).map_err(physics(cfg))?;
        table.push(vec![
            s.into(),
            s_eff.into(),
            length.into(),
            n.into(),
            r.mean_fano.into(),
            r.stderr.into(),
            analytic.into(),
            r.n_skipped.into(),
            validity.into(),
        ]);
    }
    let mut out = Output::new(table);
    out.metadata = meta;
    Ok(out)
}

// ---------------------------------------------------------------------------
// fano-homodyne

#[allow(clippy::too_many_arguments)]
fn homodyne_analytic(
    kind: MediumKind,
    s: f64,
    l_over_xi: f64,
    n: usize,
    rho: f64,
    det: &DetectionConfig,
    f: f64,
    phase: ProbePhase,
    probe_is_incident: bool,
) -> Result<(f64, &'static str), Error> {
    if s == 0.0 || kind == MediumKind::Passive {
        let z = zero_length_limits(1.0, det.efficiency, det.coupling, rho, probe_is_incident)?;
        return Ok((z.homodyne_min, if s == 0.0 { "zero_length" } else { "passive" }));
    }
    let w = WaveguideRatios::new(s, l_over_xi, n)?;
    let v = match kind {
        MediumKind::Amplifying => fano_homodyne_amplifying_avg(&w, rho, det.efficiency, det.coupling, f, phase)?,
        _ => fano_homodyne_absorbing_avg(&w, rho, det.efficiency, det.coupling, f, phase)?,
    };
    Ok((v.value, validity_label(v.validity)))
}

fn cmd_fano_homodyne(cfg: &Config, pool: &Pool) -> Result<Output, CmdError> {
    let mode = cfg.choice("mode", &["min", "fixed", "scan"])?;
    let n = n_modes(cfg)?;
    let kind = medium_kind(cfg)?;
    let f = occupation(cfg, kind)?;
    let input = squeezed_input(cfg)?;
    let det = detection(cfg, n)?;
    let s_values = cfg.f64_list("s")?;
    ascending(cfg, "s", &s_values)?;
    let mut meta = Map::new();
    let scale = diffusive_scale(cfg, pool, n, &mut meta)?;
    let base = MediumSpec {
        n_modes: n,
        length: 0,
        scatter_strength: cfg.f64("scatter_strength")?,
        abs_or_gain_length: scale.abs_or_gain_length(kind).map_err(physics(cfg))?,
        kind,
        occupation: f,
        seed: 0,
    };
    meta.insert("abs_or_gain_length".into(), json!(base.abs_or_gain_length));
    if mode == "scan" {
        return homodyne_scan(cfg, pool, &scale, base, &input, &det, &s_values, meta);
    }
    let (scheme, phase) = if mode == "min" {
        (Scheme::HomodyneOptimal, ProbePhase::Optimal)
    } else {
        (
            Scheme::HomodyneFixed {
                arg_beta: cfg.f64("arg_beta")?,
            },
            ProbePhase::Fixed,
        )
    };
    let opts = options(cfg, scheme, None)?;
    let (lengths, sets) = diffusive_sample_sets(
        pool,
        &scale,
        &base,
        &s_values,
        &input,
        &det,
        opts.mode_average,
        cfg.usize("n_samples")?,
        cfg.u64("seed")?,
    )
    .map_err(physics(cfg))?;
    let probe_is_incident = det.probe_mode == input.incident_mode;
    let mut table = Table::new(&[
        "s", "effective_s", "length", "n_modes", "rho", "fano_mc", "stderr", "fano_analytic", "n_skipped", "validity",
    ]);
    for ((&s, &length), set) in s_values.iter().zip(&lengths).zip(&sets) {
        let r = set.estimate(&input, &det, f, &opts).map_err(physics(cfg))?;
        let s_eff = realized_s(&scale, length);
        let (analytic, validity) =
            homodyne_analytic(kind, s_eff, scale.l_over_xi, n, input.rho, &det, f, phase, probe_is_incident)
                .map_err(physics(cfg))?;
        table.push(vec![
            s.into(),
            s_eff.into(),
            length.into(),
            n.into(),
            input.rho.into(),
            r.mean_fano.into(),
            r.stderr.into(),
            analytic.into(),
            r.n_skipped.into(),
            validity.into(),
        ]);
    }
    let mut out = Output::new(table);
    out.metadata = meta;
    Ok(out)
}

/// One row per length, medium and grid phase; `scan_min` is the minimum of
/// the harmonic fitted to the grid and `fano_min` the closed-form minimum.
#[allow(clippy::too_many_arguments)]
fn homodyne_scan(
    cfg: &Config,
    pool: &Pool,
    scale: &DiffusiveScale,
    base: MediumSpec,
    input: &SqueezedInput,
    det: &DetectionConfig,
    s_values: &[f64],
    mut meta: Map<String, Value>,
) -> Result<Output, CmdError> {
    let n_phases = cfg.usize("n_phases")?;
    let n_media = cfg.usize("n_media")?;
    let seed = cfg.u64("seed")?;
    let mut table = Table::new(&[
        "s",
        "effective_s",
        "sample",
        "phase",
        "fano",
        "scan_min",
        "fano_min",
        "scan_argmin",
        "optimal_phase",
    ]);
    let mut worst: f64 = 0.0;
    for &s in s_values {
        let spec = MediumSpec {
            length: scale.periods_for(s),
            ..base.clone()
        };
        spec.validate().map_err(physics(cfg))?;
        let f = spec.occupation;
        let s_eff = realized_s(scale, spec.length);
        // Each medium is seeded by its index, so the same media appear at
        // every length only in the sense of sharing seeds.
        let results = pool.map_samples(n_media, |k| {
            let m = build_medium(&MediumSpec {
                seed: derive_seed(seed, k),
                ..spec.clone()
            })?;
            let scan = phase_scan(&m, input, det, f, n_phases)?;
            let (min, phase) = fano_homodyne_min(&m, input, det, f)?;
            Ok::<_, Error>((scan, min.value, phase))
        });
        for (k, r) in results.into_iter().enumerate() {
            let (scan, min, phase) = r.map_err(physics(cfg))?;
            worst = worst.max((scan.refined_min - min).abs());
            for (&p, &v) in scan.phases.iter().zip(&scan.values) {
                table.push(vec![
                    s.into(),
                    s_eff.into(),
                    k.into(),
                    p.into(),
                    v.into(),
                    scan.refined_min.into(),
                    min.into(),
                    scan.refined_argmin.into(),
                    phase.into(),
                ]);
            }
        }
    }
    meta.insert("max_scan_min_discrepancy".into(), json!(worst));
    let mut out = Output::new(table);
    out.metadata = meta;
    Ok(out)
}

// ---------------------------------------------------------------------------
// sweep

fn cmd_sweep(cfg: &Config, pool: &Pool) -> Result<Output, CmdError> {
    let n = n_modes(cfg)?;
    let kind = medium_kind(cfg)?;
    let f = occupation(cfg, kind)?;
    let input = squeezed_input(cfg)?;
    let det = detection(cfg, n)?;
    let lengths = cfg.usize_list("lengths")?;
    let mut meta = Map::new();
    let scale = diffusive_scale(cfg, pool, n, &mut meta)?;
    let abs_or_gain_length = match cfg.f64_or_auto("abs_or_gain_length")? {
        Some(l) => l,
        None => scale.abs_or_gain_length(kind).map_err(physics(cfg))?,
    };
    meta.insert("abs_or_gain_length".into(), json!(abs_or_gain_length));
    let (scheme, f_in) = match cfg.choice("scheme", &["direct", "homodyne_min", "homodyne_fixed"])? {
        "direct" => (Scheme::Direct, Some(fano_in(cfg, &input)?)),
        "homodyne_min" => (Scheme::HomodyneOptimal, None),
        _ => (
            Scheme::HomodyneFixed {
                arg_beta: cfg.f64("arg_beta")?,
            },
            None,
        ),
    };
    let opts = options(cfg, scheme, f_in)?;
    let spec = MediumSpec {
        n_modes: n,
        length: 0,
        scatter_strength: cfg.f64("scatter_strength")?,
        abs_or_gain_length,
        kind,
        occupation: f,
        seed: 0,
    };
    let points = sweep_lengths_on(
        pool,
        &spec,
        &lengths,
        &input,
        &det,
        &opts,
        cfg.usize("n_samples")?,
        cfg.u64("seed")?,
    )
    .map_err(physics(cfg))?;
    let mut table = Table::new(&[
        "length",
        "effective_s",
        "fano",
        "stderr",
        "ratio_of_means",
        "mean_of_ratios",
        "n_used",
        "n_skipped",
        "error",
    ]);
    for p in points {
        let s_eff = realized_s(&scale, p.length);
        match p.result {
            Ok(r) => table.push(vec![
                p.length.into(),
                s_eff.into(),
                r.mean_fano.into(),
                r.stderr.into(),
                r.ratio_of_means.into(),
                r.mean_of_ratios.into(),
                r.n_used.into(),
                r.n_skipped.into(),
                "".into(),
            ]),
            Err(e) => {
                let skipped = match e {
                    Error::AllSamplesAboveThreshold { n_samples } => n_samples,
                    _ => 0,
                };
                table.push(vec![
                    p.length.into(),
                    s_eff.into(),
                    f64::NAN.into(),
                    f64::NAN.into(),
                    f64::NAN.into(),
                    f64::NAN.into(),
                    0usize.into(),
                    skipped.into(),
                    e.to_string().into(),
                ])
            }
        }
    }
    let mut out = Output::new(table);
    out.metadata = meta;
    Ok(out)
}

// ---------------------------------------------------------------------------
// figures

/// Columns of both figure tables; `family` is `F_in` (figure 3) or `ρ`
/// (figure 4).
pub const FIGURE_COLUMNS: [&str; 8] = ["panel", "family", "s", "fano", "kind", "stderr", "n_skipped", "validity"];

fn s_grid(cfg: &Config, max_key: &str) -> Result<Vec<f64>, CmdError> {
    let step = cfg.f64("s_step")?;
    let max = cfg.f64(max_key)?;
    if !(step > 0.0) || !(max > 0.0) {
        return Err(cfg.error(max_key, "s_step and the panel range must be > 0").into());
    }
    let count = (max / step + 1e-9).floor() as usize;
    if count > 1_000_000 {
        return Err(cfg.error("s_step", "grid too fine").into());
    }
    Ok((0..=count).map(|k| k as f64 * step).collect())
}

/// One curve: the formula for `s >= s_switch`, a straight line from the
/// bare detector value at `s = 0` below that, and nothing past the
/// threshold. The formulas hold for `L >> l` only; at `L = l` the incident
/// term alone is `4/3 (F_in - 1)` and can push the Fano factor negative.
/// Returns `(s, value, kind, validity)` rows and the `s` at which the curve
/// was cut off, if it was.
fn curve(
    grid: &[f64],
    s_switch: f64,
    zero: f64,
    formula: &dyn Fn(f64) -> Result<AnalyticValue, Error>,
) -> Result<(Vec<(f64, f64, &'static str, &'static str)>, Option<f64>), Error> {
    let anchor = formula(s_switch)?.value;
    let mut rows = Vec::with_capacity(grid.len());
    for &s in grid {
        if s < s_switch {
            let v = zero + (anchor - zero) * s / s_switch;
            rows.push((s, v, "extrapolated", if s == 0.0 { "zero_length" } else { "short" }));
            continue;
        }
        match formula(s) {
            Ok(v) => rows.push((s, v.value, "analytic", validity_label(v.validity))),
            Err(Error::ThresholdReached { s }) => return Ok((rows, Some(s))),
            Err(e) => return Err(e),
        }
    }
    Ok((rows, None))
}

/// `s` below which figure curves are extrapolated.
fn extrapolation_switch(cfg: &Config, l_over_xi: f64) -> Result<f64, CmdError> {
    let k = cfg.f64("extrapolate_below")?;
    if !(k > 0.0 && k.is_finite()) {
        return Err(cfg.error("extrapolate_below", "must be > 0").into());
    }
    if !(l_over_xi > 0.0 && l_over_xi.is_finite()) {
        return Err(cfg.error("l_over_xi", "must be > 0").into());
    }
    Ok(k * l_over_xi)
}

fn panels(cfg: &Config) -> Result<[(&'static str, MediumKind, f64, Vec<f64>); 2], CmdError> {
    let f_abs = cfg.f64("f_absorbing")?;
    let f_amp = cfg.f64("f_amplifying")?;
    if f_abs < 0.0 {
        return Err(cfg.error("f_absorbing", "must be >= 0").into());
    }
    if f_amp >= 0.0 {
        return Err(cfg.error("f_amplifying", "must be < 0").into());
    }
    Ok([
        ("amplifying", MediumKind::Amplifying, f_amp, s_grid(cfg, "s_max_amplifying")?),
        ("absorbing", MediumKind::Absorbing, f_abs, s_grid(cfg, "s_max_absorbing")?),
    ])
}

struct McOverlay {
    scale: DiffusiveScale,
    s_values: Vec<f64>,
    n_samples: usize,
    seed: u64,
    scatter_strength: f64,
}

fn mc_overlay(cfg: &Config, pool: &Pool, n: usize, meta: &mut Map<String, Value>) -> Result<Option<McOverlay>, CmdError> {
    if !cfg.bool("monte_carlo")? {
        return Ok(None);
    }
    let s_values = cfg.f64_list("mc_s")?;
    ascending(cfg, "mc_s", &s_values)?;
    Ok(Some(McOverlay {
        scale: diffusive_scale(cfg, pool, n, meta)?,
        s_values,
        n_samples: cfg.usize("n_samples")?,
        seed: cfg.u64("seed")?,
        scatter_strength: cfg.f64("scatter_strength")?,
    }))
}

impl McOverlay {
    /// Sample sets per `s` for one panel.
    fn sets(
        &self,
        cfg: &Config,
        pool: &Pool,
        n: usize,
        kind: MediumKind,
        f: f64,
        input: &SqueezedInput,
        det: &DetectionConfig,
    ) -> Result<(Vec<usize>, Vec<sqt_core::ensemble::SampleSet>), CmdError> {
        let base = MediumSpec {
            n_modes: n,
            length: 0,
            scatter_strength: self.scatter_strength,
            abs_or_gain_length: self.scale.abs_or_gain_length(kind).map_err(physics(cfg))?,
            kind,
            occupation: f,
            seed: 0,
        };
        diffusive_sample_sets(pool, &self.scale, &base, &self.s_values, input, det, true, self.n_samples, self.seed)
            .map_err(physics(cfg))
    }

    fn push_rows(
        &self,
        table: &mut Table,
        panel: &str,
        family: f64,
        lengths: &[usize],
        sets: &[sqt_core::ensemble::SampleSet],
        estimate: &dyn Fn(&sqt_core::ensemble::SampleSet) -> Result<EnsembleResult, Error>,
    ) -> Result<(), Error> {
        for (&length, set) in lengths.iter().zip(sets) {
            let r = estimate(set);
            let s = realized_s(&self.scale, length);
            let (v, e, k) = match ensemble_cells(&r) {
                Ok(x) => x,
                Err(Error::AllSamplesAboveThreshold { n_samples }) => (f64::NAN, f64::NAN, n_samples),
                Err(e) => return Err(e),
            };
            table.push(vec![
                panel.into(),
                family.into(),
                s.into(),
                v.into(),
                "monte_carlo".into(),
                e.into(),
                k.into(),
                "".into(),
            ]);
        }
        Ok(())
    }
}

fn push_curve(table: &mut Table, panel: &str, family: f64, rows: Vec<(f64, f64, &'static str, &'static str)>) {
    for (s, v, kind, validity) in rows {
        table.push(vec![
            panel.into(),
            family.into(),
            s.into(),
            v.into(),
            kind.into(),
            f64::NAN.into(),
            0usize.into(),
            validity.into(),
        ]);
    }
}

fn cmd_figure3(cfg: &Config, pool: &Pool) -> Result<Output, CmdError> {
    let l_over_xi = cfg.f64("l_over_xi")?;
    let s_switch = extrapolation_switch(cfg, l_over_xi)?;
    let d = cfg.f64("efficiency")?;
    let n = n_modes(cfg)?;
    let f_ins = cfg.f64_list("fano_in")?;
    let mut meta = Map::new();
    let mc = mc_overlay(cfg, pool, n, &mut meta)?;
    let mut table = Table::new(&FIGURE_COLUMNS);
    let mut cutoffs = Map::new();
    for (panel, kind, f, grid) in panels(cfg)? {
        for &f_in in &f_ins {
            let zero = zero_length_limits(f_in, d, 0.5, 0.0, true).map_err(physics(cfg))?.direct;
            let formula = |s: f64| -> Result<AnalyticValue, Error> {
                let w = WaveguideRatios::new(s, l_over_xi, n)?;
                match kind {
                    MediumKind::Amplifying => fano_direct_amplifying_avg(&w, f_in, d, f),
                    _ => fano_direct_absorbing_avg(&w, f_in, d, f),
                }
            };
            let (rows, cut) = curve(&grid, s_switch, zero, &formula).map_err(physics(cfg))?;
            if let Some(s) = cut {
                cutoffs.insert(format!("{panel}/{f_in}"), json!(s));
            }
            push_curve(&mut table, panel, f_in, rows);
        }
        if let Some(mc) = &mc {
            let input = SqueezedInput::new(Complex64::new(1.0, 0.0), 0.0, 0.0, 0).map_err(physics(cfg))?;
            let det = DetectionConfig::transmitted(n, d, 0.5, 0);
            let (lengths, sets) = mc.sets(cfg, pool, n, kind, f, &input, &det)?;
            for &f_in in &f_ins {
                let opts = EnsembleOptions {
                    fano_in: Some(f_in),
                    ..EnsembleOptions::default()
                };
                mc.push_rows(&mut table, panel, f_in, &lengths, &sets, &|set| set.estimate(&input, &det, f, &opts))
                    .map_err(physics(cfg))?;
            }
        }
    }
    let mut out = Output::new(table);
    if !cutoffs.is_empty() {
        meta.insert("threshold_cutoffs".into(), Value::Object(cutoffs));
    }
    out.metadata = meta;
    Ok(out)
}

fn cmd_figure4(cfg: &Config, pool: &Pool) -> Result<Output, CmdError> {
    let l_over_xi = cfg.f64("l_over_xi")?;
    let s_switch = extrapolation_switch(cfg, l_over_xi)?;
    let n = n_modes(cfg)?;
    let rhos = cfg.f64_list("rho")?;
    let m0 = cfg.usize("incident_mode")?;
    let n0 = cfg.usize("probe_mode")?;
    if m0 >= n {
        return Err(cfg.error("incident_mode", "must be below n_modes").into());
    }
    let det = DetectionConfig::transmitted(n, cfg.f64("efficiency")?, cfg.f64("coupling")?, n0);
    det.validate(n).map_err(physics(cfg))?;
    let (phase, scheme) = match cfg.choice("probe_phase", &["optimal", "fixed"])? {
        "optimal" => (ProbePhase::Optimal, Scheme::HomodyneOptimal),
        _ => (ProbePhase::Fixed, Scheme::HomodyneFixed { arg_beta: 0.0 }),
    };
    let mut meta = Map::new();
    let mc = mc_overlay(cfg, pool, n, &mut meta)?;
    let mut table = Table::new(&FIGURE_COLUMNS);
    let mut cutoffs = Map::new();
    for (panel, kind, f, grid) in panels(cfg)? {
        for &rho in &rhos {
            let zero = zero_length_limits(1.0, det.efficiency, det.coupling, rho, n0 == m0)
                .map_err(physics(cfg))?
                .homodyne_min;
            let formula = |s: f64| -> Result<AnalyticValue, Error> {
                let w = WaveguideRatios::new(s, l_over_xi, n)?;
                match kind {
                    MediumKind::Amplifying => {
                        fano_homodyne_amplifying_avg(&w, rho, det.efficiency, det.coupling, f, phase)
                    }
                    _ => fano_homodyne_absorbing_avg(&w, rho, det.efficiency, det.coupling, f, phase),
                }
            };
            let (rows, cut) = curve(&grid, s_switch, zero, &formula).map_err(physics(cfg))?;
            if let Some(s) = cut {
                cutoffs.insert(format!("{panel}/{rho}"), json!(s));
            }
            push_curve(&mut table, panel, rho, rows);
        }
        if let Some(mc) = &mc {
            let probe = SqueezedInput::new(Complex64::new(1.0, 0.0), 0.0, 0.0, m0).map_err(physics(cfg))?;
            let (lengths, sets) = mc.sets(cfg, pool, n, kind, f, &probe, &det)?;
            let opts = EnsembleOptions {
                scheme,
                ..EnsembleOptions::default()
            };
            for &rho in &rhos {
                let input = SqueezedInput::new(Complex64::new(1.0, 0.0), rho, 0.0, m0).map_err(physics(cfg))?;
                mc.push_rows(&mut table, panel, rho, &lengths, &sets, &|set| set.estimate(&input, &det, f, &opts))
                    .map_err(physics(cfg))?;
            }
        }
    }
    let mut out = Output::new(table);
    if !cutoffs.is_empty() {
        meta.insert("threshold_cutoffs".into(), Value::Object(cutoffs));
    }
    out.metadata = meta;
    Ok(out)
}

// ---------------------------------------------------------------------------
// calibrate

fn cmd_calibrate(cfg: &Config, pool: &Pool) -> Result<Output, CmdError> {
    let n = n_modes(cfg)?;
    let fit = run_calibration(cfg, pool, n)?;
    let mut table = Table::new(&["length", "n_over_t", "fit"]);
    for &(l, y) in &fit.points {
        table.push(vec![l.into(), y.into(), (1.0 + l as f64 / fit.mean_free_path).into()]);
    }
    let mut out = Output::new(table);
    out.metadata.insert("mean_free_path_fit".into(), json!(fit.mean_free_path));
    out.metadata.insert("stderr".into(), json!(fit.stderr));
    out.metadata.insert(
        "transport_mean_free_path".into(),
        json!(sqt_core::ensemble::TRANSPORT_PER_FIT_LENGTH * fit.mean_free_path),
    );
    out.metadata.insert("max_relative_residual".into(), json!(fit.max_relative_residual));
    Ok(out)
}

// ---------------------------------------------------------------------------
// validate

fn cmd_validate(cfg: &Config, pool: &Pool) -> Result<Output, CmdError> {
    let level = match cfg.choice("level", &["fast", "full"])? {
        "fast" => validate::Level::Fast,
        _ => validate::Level::Full,
    };
    let fault = match cfg.raw("inject_fault") {
        None => None,
        Some("direct_bracket") => Some(validate::Fault::DirectBracket),
        Some(_) => return Err(cfg.error("inject_fault", "expected direct_bracket").into()),
    };
    let checks = validate::run(level, fault, pool, cfg.u64("seed")?);
    let mut table = Table::new(&["check", "passed", "detail", "seconds"]);
    let mut failed = Vec::new();
    for c in &checks {
        eprintln!("{} {:<28} {:>8.2}s  {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.seconds, c.detail);
        if !c.passed {
            failed.push(c.name);
        }
        table.push(vec![c.name.into(), c.passed.into(), c.detail.clone().into(), c.seconds.into()]);
    }
    let mut out = Output::new(table);
    out.metadata.insert("checks".into(), json!(checks.len()));
    out.metadata.insert("failed".into(), json!(failed.len()));
    if !failed.is_empty() {
        out.failure = Some(format!("{} of {} checks failed: {}", failed.len(), checks.len(), failed.join(", ")));
    }
    Ok(out)
}
