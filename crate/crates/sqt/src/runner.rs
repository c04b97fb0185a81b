//! Parallel evaluation of ensembles on a rayon thread pool.
//!
//! Samples are independent and seeded by index, and results are collected
//! in index order, so output does not depend on the number of threads.

use rayon::prelude::*;
use sqt_core::ensemble::{
    collect_sweep, evaluate_sample_sweep, DiffusiveScale, SampleMap, SampleSet,
};
use sqt_core::medium::{fit_mean_free_path, passive_transmissions, MeanFreePathFit, MediumSpec};
use sqt_core::photostats::{DetectionConfig, SqueezedInput};
use sqt_core::seed::derive_seed;

/// A worker pool; `threads = 0` uses every core.
pub struct Pool {
    pool: rayon::ThreadPool,
}

impl Pool {
    /// Build a pool with at most `threads` workers.
    pub fn new(threads: usize) -> anyhow::Result<Self> {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build()?;
        Ok(Pool { pool })
    }

    /// Number of workers.
    pub fn threads(&self) -> usize {
        self.pool.current_num_threads()
    }
}

impl SampleMap for Pool {
    fn map_samples<T: Send, F: Fn(u64) -> T + Sync>(&self, n: usize, f: F) -> Vec<T> {
        let f = &f;
        self.pool.install(|| (0..n as u64).into_par_iter().map(f).collect())
    }
}

/// Mean-free-path calibration with samples spread over `exec`; identical to
/// [`sqt_core::medium::calibrate_mean_free_path`] for the same arguments.
pub fn calibrate<E: SampleMap>(
    exec: &E,
    n_modes: usize,
    scatter_strength: f64,
    lengths: &[usize],
    samples: usize,
    seed: u64,
) -> sqt_core::Result<MeanFreePathFit> {
    let per_sample = exec
        .map_samples(samples, |k| {
            passive_transmissions(n_modes, scatter_strength, lengths, derive_seed(seed, k))
        })
        .into_iter()
        .collect::<sqt_core::Result<Vec<_>>>()?;
    fit_mean_free_path(n_modes, lengths, &per_sample)
}

/// Sample sets at each `s` of a diffusive sweep. Direct-detection estimates
/// for several incident Fano factors can be formed from one set of media.
#[allow(clippy::too_many_arguments)]
pub fn diffusive_sample_sets<E: SampleMap>(
    exec: &E,
    scale: &DiffusiveScale,
    base: &MediumSpec,
    s_values: &[f64],
    input: &SqueezedInput,
    det: &DetectionConfig,
    mode_average: bool,
    n_samples: usize,
    master_seed: u64,
) -> sqt_core::Result<(Vec<usize>, Vec<SampleSet>)> {
    base.validate()?;
    input.validate()?;
    det.validate(base.n_modes)?;
    if n_samples < 2 {
        return Err(sqt_core::Error::InvalidArgument {
            name: "n_samples",
            reason: "must be at least 2".into(),
        });
    }
    let lengths: Vec<usize> = s_values.iter().map(|&s| scale.periods_for(s)).collect();
    if lengths.windows(2).any(|w| w[0] > w[1]) {
        return Err(sqt_core::Error::InvalidArgument {
            name: "s",
            reason: "must be sorted ascending".into(),
        });
    }
    let outcomes = exec.map_samples(n_samples, |k| {
        evaluate_sample_sweep(base, &lengths, master_seed, k, input, det, mode_average)
    });
    let sets = collect_sweep(lengths.len(), outcomes)?;
    Ok((lengths, sets))
}

#[cfg(test)]
mod tests {
    use super::*;
    use sqt_core::ensemble::{run_ensemble, run_ensemble_on, EnsembleOptions};
    use sqt_core::medium::{calibrate_mean_free_path, MediumKind};
    use sqt_core::Complex64;

    #[test]
    fn parallel_results_equal_sequential_bits() {
        let spec = MediumSpec {
            n_modes: 3,
            length: 12,
            scatter_strength: 0.4,
            abs_or_gain_length: 30.0,
            kind: MediumKind::Absorbing,
            occupation: 0.1,
            seed: 0,
        };
        let input = SqueezedInput::new(Complex64::new(1.0, 0.2), 0.3, 0.1, 0).unwrap();
        let det = DetectionConfig::transmitted(3, 0.8, 0.5, 0);
        let opts = EnsembleOptions::default();
        let seq = run_ensemble(&spec, &input, &det, &opts, 40, 7).unwrap();
        for threads in [1, 3] {
            let par = run_ensemble_on(&Pool::new(threads).unwrap(), &spec, &input, &det, &opts, 40, 7).unwrap();
            assert_eq!(par, seq);
        }
    }

    #[test]
    fn parallel_calibration_matches_core() {
        let lengths = [4, 8, 16];
        let a = calibrate(&Pool::new(2).unwrap(), 3, 0.6, &lengths, 8, 5).unwrap();
        let b = calibrate_mean_free_path(3, 0.6, &lengths, 8, 5).unwrap();
        assert_eq!(a, b);
    }
}
