//! Physicality of composed random media.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sqt_core::linalg::singular_values;
use sqt_core::medium::*;
use sqt_core::seed::derive_seed;

fn spec(n: usize, length: usize, kind: MediumKind, seed: u64) -> MediumSpec {
    MediumSpec {
        n_modes: n,
        length,
        scatter_strength: 0.31,
        abs_or_gain_length: 15.0,
        kind,
        occupation: if kind == MediumKind::Amplifying { -1.0 } else { 0.0 },
        seed,
    }
}

#[test]
fn absorbing_composites_are_contractions() {
    let mut worst: f64 = 0.0;
    for k in 0..1000u64 {
        let n = 1 + (k % 6) as usize;
        let len = 1 + (k % 23) as usize;
        let s = build_medium(&spec(n, len, MediumKind::Absorbing, derive_seed(3, k))).unwrap();
        worst = worst.max(singular_values(&s.full())[0]);
    }
    assert!(worst <= 1.0 + 1e-10, "{worst}");
}

#[test]
fn thousand_passive_star_products_stay_unitary() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut s = sample_slice(10, 0.31, &mut rng).unwrap();
    for _ in 0..999 {
        let next = sample_slice(10, 0.31, &mut rng).unwrap();
        s = star_compose(&s, &next).unwrap();
    }
    let sv = singular_values(&s.full());
    let dev = sv.iter().map(|x| (x - 1.0).abs()).fold(0.0, f64::max);
    assert!(dev < 1e-9, "{dev}");
}

#[test]
fn identical_specs_give_identical_bits() {
    for kind in [MediumKind::Passive, MediumKind::Absorbing, MediumKind::Amplifying] {
        let sp = spec(7, 40, kind, 1234);
        let a = build_medium(&sp).unwrap();
        let b = build_medium(&sp).unwrap();
        let bits = |m: &ScatteringMatrix| -> Vec<u64> {
            m.full().as_slice().iter().flat_map(|z| [z.re.to_bits(), z.im.to_bits()]).collect()
        };
        assert_eq!(bits(&a), bits(&b));
    }
}

#[test]
fn amplifying_composites_below_threshold_amplify() {
    for k in 0..50u64 {
        let s = build_medium(&spec(4, 30, MediumKind::Amplifying, derive_seed(9, k))).unwrap();
        let sv = singular_values(&s.full());
        assert!(*sv.last().unwrap() >= 1.0 - 1e-10);
    }
}

#[test]
fn passive_resistance_grows_linearly() {
    let fit = calibrate_mean_free_path(10, 0.31, &[20, 40, 80, 160], 60, 5).unwrap();
    assert!(fit.max_relative_residual < 0.1, "{fit:?}");
    assert!(fit.mean_free_path > 15.0 && fit.mean_free_path < 26.0, "{fit:?}");
}
