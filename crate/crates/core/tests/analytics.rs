//! Closed-form averages against values frozen from 40-digit evaluations and
//! against their own analytic continuation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sqt_core::analytics::*;
use sqt_core::{Complex64 as C64, Error};

fn ratios(s: f64) -> WaveguideRatios {
    WaveguideRatios::new(s, 0.1, 10).unwrap()
}

// 40-digit reference values of the direct-detection brackets.
const ABSORBING_BRACKET: [(f64, f64); 7] = [
    (1e-3, 6.6666655555557249e-7),
    (0.01, 6.6665555572486528e-5),
    (0.1, 0.0066555724623354392),
    (0.3, 0.059112184281363424),
    (1.0, 0.57033856059168084),
    (3.0, 2.2836596320048357),
    (12.0, 2.9996927877212841),
];

const AMPLIFYING_BRACKET: [(f64, f64); 7] = [
    (1e-3, -6.6666677777779471e-7),
    (0.05, -0.0016673613757569982),
    (0.3, -0.060912505436673104),
    (1.0, -0.79754709638392938),
    (2.0, -6.8789749981242916),
    (3.0, -2263.6983309780529),
    (3.1, -87506.818499140664),
];

#[test]
fn brackets_match_reference_values() {
    for (s, v) in ABSORBING_BRACKET {
        assert!((absorbing_direct_bracket(s) / v - 1.0).abs() < 1e-13, "s={s}");
    }
    for (s, v) in AMPLIFYING_BRACKET {
        // Near s = π the bracket is a difference of O(1/sin³ s) terms.
        let tol = if s > 2.5 { 1e-11 } else { 1e-13 };
        assert!((amplifying_direct_bracket(s) / v - 1.0).abs() < tol, "s={s}");
    }
}

#[test]
fn direct_fixtures() {
    let abs = fano_direct_absorbing_avg(&ratios(1.0), 1.0, 1.0, 1e-3).unwrap();
    assert!((abs.value - 1.0002851692802958).abs() < 1e-15);
    let amp = fano_direct_amplifying_avg(&ratios(1.0), 0.0, 1.0, -1.0).unwrap();
    assert!((amp.value - 1.2403208674215485).abs() < 1e-14);
}

#[test]
fn homodyne_fixtures() {
    let w = ratios(1.0);
    let fixed = fano_homodyne_absorbing_avg(&w, 0.5, 1.0, 0.5, 1e-3, ProbePhase::Fixed).unwrap();
    let min = fano_homodyne_absorbing_avg(&w, 0.5, 1.0, 0.5, 1e-3, ProbePhase::Optimal).unwrap();
    assert!((fixed.value - 1.0031423966693681).abs() < 1e-15);
    assert!((min.value - 0.9964757300027014).abs() < 1e-15);
    for phase in [ProbePhase::Fixed, ProbePhase::Optimal] {
        let v = fano_homodyne_absorbing_avg(&w, 0.0, 1.0, 0.5, 0.0, phase).unwrap();
        assert_eq!(v.value, 1.0);
    }
}

#[test]
fn unit_input_without_noise_is_poissonian() {
    for s in [0.2, 1.0, 2.5] {
        let a = fano_direct_absorbing_avg(&ratios(s), 1.0, 0.7, 0.0).unwrap();
        let g = fano_direct_amplifying_avg(&ratios(s), 1.0, 0.7, -1e-300).unwrap();
        assert_eq!(a.value, 1.0);
        assert!((g.value - 1.0).abs() < 1e-15);
    }
}

#[test]
fn strong_absorption_forgets_the_input_state() {
    let f0 = fano_direct_absorbing_avg(&ratios(12.0), 0.0, 1.0, 1e-3).unwrap().value;
    let f3 = fano_direct_absorbing_avg(&ratios(12.0), 3.0, 1.0, 1e-3).unwrap().value;
    assert!((f0 - f3).abs() < 1e-5);
}

#[test]
fn threshold_divergence() {
    let near = fano_direct_amplifying_avg(&ratios(std::f64::consts::PI - 1e-3), 0.0, 1.0, -1.0).unwrap();
    assert!(near.value > 1e3);
    let at = fano_direct_amplifying_avg(&ratios(std::f64::consts::PI), 0.0, 1.0, -1.0);
    assert!(matches!(at, Err(Error::ThresholdReached { .. })));
}

/// Past the location of its minimum the inverted-medium curve rises
/// monotonically to the threshold, for every input state.
#[test]
fn amplifying_curves_rise_monotonically_towards_threshold() {
    let grid: Vec<f64> = (1..3140).map(|k| k as f64 * 1e-3).collect();
    for f_in in [0.0, 0.5, 1.0, 2.0, 3.0] {
        let vals: Vec<f64> = grid
            .iter()
            .map(|&s| fano_direct_amplifying_avg(&ratios(s), f_in, 1.0, -1.0).unwrap().value)
            .collect();
        let argmin = vals
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .unwrap()
            .0;
        assert!(argmin < vals.len() / 2, "F_in={f_in}: minimum at s={}", grid[argmin]);
        assert!(vals[argmin..].windows(2).all(|w| w[1] > w[0]), "F_in={f_in}");
    }
}

/// `B_amp(s) = B_abs(i s)` and `cot s - 1/sin s = i (coth - 1/sinh)(i s)`,
/// evaluated in complex arithmetic from the absorbing expressions.
#[test]
fn amplifying_brackets_are_continued_absorbing_ones() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let i = C64::new(0.0, 1.0);
    for _ in 0..20 {
        let s: f64 = rng.gen_range(0.15..3.0);
        let z = i * s;
        let (sh, coth) = (z.sinh(), z.cosh() / z.sinh());
        let direct = 3.0 - (2.0 * z + coth) / sh - (z * coth - 1.0) / (sh * sh) + z / (sh * sh * sh);
        assert!(direct.im.abs() < 1e-12 * direct.norm());
        assert!((direct.re / amplifying_direct_bracket(s) - 1.0).abs() < 1e-12, "s={s}");
        let homo = i * (coth - 1.0 / sh);
        assert!((homo.re - amplifying_homodyne_bracket(s)).abs() < 1e-12 * (1.0 + homo.norm()));
        // The absorbing homodyne bracket in its long form.
        let (hs, ct) = (s.sinh(), 1.0 / s.tanh());
        assert!((absorbing_homodyne_bracket(s) - (ct - 1.0 / hs)).abs() < 1e-14);
    }
}

#[test]
fn fixed_phase_never_beats_the_optimal_phase() {
    // Expected physically but not proven; checked on a grid.
    let mut violations = Vec::new();
    for si in 1..=30 {
        let s = si as f64 * 0.1;
        for ri in 0..=8 {
            let rho = ri as f64 * 0.25;
            let w = ratios(s);
            let fixed = fano_homodyne_absorbing_avg(&w, rho, 1.0, 0.5, 1e-3, ProbePhase::Fixed).unwrap();
            let min = fano_homodyne_absorbing_avg(&w, rho, 1.0, 0.5, 1e-3, ProbePhase::Optimal).unwrap();
            if fixed.value < min.value - 1e-15 {
                violations.push((s, rho));
            }
            let fixed = fano_homodyne_amplifying_avg(&w, rho, 1.0, 0.5, -1.0, ProbePhase::Fixed).unwrap();
            let min = fano_homodyne_amplifying_avg(&w, rho, 1.0, 0.5, -1.0, ProbePhase::Optimal).unwrap();
            if fixed.value < min.value - 1e-15 {
                violations.push((s, rho));
            }
        }
    }
    assert!(violations.is_empty(), "{violations:?}");
}

#[test]
fn amplifying_homodyne_beating_at_complete_inversion() {
    let w = ratios(2.0);
    let v = fano_homodyne_amplifying_avg(&w, 0.0, 1.0, 0.5, -1.0, ProbePhase::Optimal).unwrap();
    let pre = 8.0 * 0.1 * 0.5 / 3.0;
    assert!((v.value - 1.0 - pre * 1.0f64.tan()).abs() < 1e-14);
}

#[test]
fn zero_length() {
    let z = zero_length_limits(0.0, 1.0, 0.5, 1.0, true).unwrap();
    assert_eq!(z.direct, 0.0);
    assert!((z.homodyne_min - (1.0 - (-1.0f64).exp() * 1.0f64.sinh())).abs() < 1e-15);
    assert_eq!(zero_length_limits(0.0, 1.0, 0.5, 1.0, false).unwrap().homodyne_min, 1.0);
}
