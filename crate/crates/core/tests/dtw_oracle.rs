use avsync::align::{asynchrony_score, dtw, dtw_banded, warp_function, WarpRule};
use avsync::mel::{MelParams, MelSpectrogram};
use proptest::prelude::*;

fn spec(values: Vec<f64>, n: usize, bands: usize) -> MelSpectrogram {
    let params = MelParams { n_bands: bands, ..Default::default() };
    MelSpectrogram::from_log_energies(values, n, params, 16000).unwrap()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Cheapest monotone path by exhaustive enumeration.
fn enumerate(a: &MelSpectrogram, b: &MelSpectrogram) -> f64 {
    fn go(a: &MelSpectrogram, b: &MelSpectrogram, i: usize, j: usize, acc: f64) -> f64 {
        let acc = dist(a.frame(i), b.frame(j)) + acc;
        if i + 1 == a.n_frames() && j + 1 == b.n_frames() {
            return acc;
        }
        let mut best = f64::INFINITY;
        if i + 1 < a.n_frames() && j + 1 < b.n_frames() {
            best = best.min(go(a, b, i + 1, j + 1, acc));
        }
        if i + 1 < a.n_frames() {
            best = best.min(go(a, b, i + 1, j, acc));
        }
        if j + 1 < b.n_frames() {
            best = best.min(go(a, b, i, j + 1, acc));
        }
        best
    }
    go(a, b, 0, 0, 0.0)
}

fn pair() -> impl Strategy<Value = (MelSpectrogram, MelSpectrogram)> {
    (1usize..=6, 1usize..=6, 2usize..=4).prop_flat_map(|(n, m, bands)| {
        (
            prop::collection::vec(-3.0f64..3.0, n * bands),
            prop::collection::vec(-3.0f64..3.0, m * bands),
        )
            .prop_map(move |(x, y)| (spec(x, n, bands), spec(y, m, bands)))
    })
}

proptest! {
    #[test]
    fn cost_matches_enumeration((a, b) in pair()) {
        let r = dtw(&a, &b).unwrap();
        prop_assert_eq!(r.cost, enumerate(&a, &b));
    }

    #[test]
    fn path_is_monotone_and_spans((a, b) in pair()) {
        let r = dtw(&a, &b).unwrap();
        let p = r.path.pairs();
        prop_assert_eq!(p[0], (0, 0));
        prop_assert_eq!(*p.last().unwrap(), (a.n_frames() - 1, b.n_frames() - 1));
        for w in p.windows(2) {
            let step = (w[1].0 - w[0].0, w[1].1 - w[0].1);
            prop_assert!(matches!(step, (1, 1) | (1, 0) | (0, 1)));
        }
    }

    #[test]
    fn wide_band_equals_unconstrained((a, b) in pair()) {
        let full = dtw(&a, &b).unwrap();
        let banded = dtw_banded(&a, &b, Some(16)).unwrap();
        prop_assert_eq!(full.cost, banded.cost);
    }
}

#[test]
fn self_alignment_is_diagonal_with_zero_asynchrony() {
    let values: Vec<f64> = (0..24).map(|k| ((k * 7) % 5) as f64).collect();
    let a = spec(values, 8, 3);
    let r = dtw(&a, &a).unwrap();
    assert!(r.path.is_diagonal());
    assert_eq!(r.cost, 0.0);
    let wp = warp_function(&r.path, 8, WarpRule::default()).unwrap();
    let s = asynchrony_score(&wp, a.hop()).unwrap();
    assert_eq!(s.frames, 0.0);
}
