//! Dynamic time warping between mel spectrograms and the RMS asynchrony score
//! derived from the warping path.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mel::MelSpectrogram;

/// DTW correspondence as `(n, m)` pairs: `n` indexes the original, `m` the recording.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WarpPath {
    pairs: Vec<(usize, usize)>,
}

impl WarpPath {
    /// Validates the endpoints and the step set {(1,1), (1,0), (0,1)}.
    pub fn new(pairs: Vec<(usize, usize)>) -> Result<Self> {
        if pairs.first() != Some(&(0, 0)) {
            return Err(Error::Argument("warp path must start at (0, 0)".into()));
        }
        for w in pairs.windows(2) {
            let (dn, dm) = (w[1].0.wrapping_sub(w[0].0), w[1].1.wrapping_sub(w[0].1));
            if !matches!((dn, dm), (1, 1) | (1, 0) | (0, 1)) {
                return Err(Error::Argument(format!(
                    "illegal step {:?} -> {:?}",
                    w[0], w[1]
                )));
            }
        }
        Ok(WarpPath { pairs })
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    /// `(N, M)`: one past the final pair.
    pub fn extent(&self) -> (usize, usize) {
        let &(n, m) = self.pairs.last().expect("paths are never empty");
        (n + 1, m + 1)
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn is_diagonal(&self) -> bool {
        self.pairs.iter().all(|&(n, m)| n == m)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WarpRule {
    /// Mean of all recording frames matched to `n`.
    #[default]
    Mean,
    First,
    Last,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DtwConfig {
    /// Sakoe-Chiba half width in frames; `None` searches the full grid.
    pub band: Option<usize>,
    pub warp_rule: WarpRule,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtwResult {
    pub path: WarpPath,
    pub cost: f64,
}

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// DTW over an arbitrary frame distance; the building block behind [`dtw`].
///
/// Backtracking prefers the diagonal predecessor on ties, then the one that
/// advanced only `n`.
pub fn dtw_with<D>(n: usize, m: usize, band: Option<usize>, dist: D) -> Result<DtwResult>
where
    D: Fn(usize, usize) -> f64,
{
    if n == 0 || m == 0 {
        return Err(Error::Argument("DTW needs non-empty sequences".into()));
    }
    let width = band.map(|w| w.max(n.abs_diff(m)));
    let inside = |i: usize, j: usize| width.is_none_or(|w| i.abs_diff(j) <= w);

    let mut acc = vec![f64::INFINITY; n * m];
    for i in 0..n {
        for j in 0..m {
            if !inside(i, j) {
                continue;
            }
            let d = dist(i, j);
            let best = if i == 0 && j == 0 {
                0.0
            } else {
                let diag = if i > 0 && j > 0 { acc[(i - 1) * m + j - 1] } else { f64::INFINITY };
                let up = if i > 0 { acc[(i - 1) * m + j] } else { f64::INFINITY };
                let left = if j > 0 { acc[i * m + j - 1] } else { f64::INFINITY };
                diag.min(up).min(left)
            };
            acc[i * m + j] = d + best;
        }
    }

    let cost = acc[n * m - 1];
    let mut pairs = vec![(n - 1, m - 1)];
    let (mut i, mut j) = (n - 1, m - 1);
    while (i, j) != (0, 0) {
        let diag = if i > 0 && j > 0 { acc[(i - 1) * m + j - 1] } else { f64::INFINITY };
        let up = if i > 0 { acc[(i - 1) * m + j] } else { f64::INFINITY };
        let left = if j > 0 { acc[i * m + j - 1] } else { f64::INFINITY };
        if diag <= up && diag <= left {
            i -= 1;
            j -= 1;
        } else if up <= left {
            i -= 1;
        } else {
            j -= 1;
        }
        pairs.push((i, j));
    }
    pairs.reverse();
    Ok(DtwResult {
        path: WarpPath { pairs },
        cost,
    })
}

fn check_compatible(a: &MelSpectrogram, b: &MelSpectrogram) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Argument("empty spectrogram".into()));
    }
    if a.n_bands() != b.n_bands() {
        return Err(Error::Argument(format!(
            "band counts differ: {} vs {}",
            a.n_bands(),
            b.n_bands()
        )));
    }
    if a.hop() != b.hop() {
        return Err(Error::Argument(format!(
            "frame shifts differ: {} vs {}",
            a.hop(),
            b.hop()
        )));
    }
    Ok(())
}

/// Minimum-cost alignment under Euclidean frame distance, unconstrained.
pub fn dtw(a: &MelSpectrogram, b: &MelSpectrogram) -> Result<DtwResult> {
    dtw_banded(a, b, None)
}

pub fn dtw_banded(a: &MelSpectrogram, b: &MelSpectrogram, band: Option<usize>) -> Result<DtwResult> {
    check_compatible(a, b)?;
    dtw_with(a.n_frames(), b.n_frames(), band, |i, j| {
        euclidean(a.frame(i), b.frame(j))
    })
}

/// Collapse a path to one matched recording position per original frame.
pub fn warp_function(path: &WarpPath, n: usize, rule: WarpRule) -> Result<Vec<f64>> {
    if path.extent().0 != n {
        return Err(Error::Argument(format!(
            "path covers {} original frames, expected {n}",
            path.extent().0
        )));
    }
    let mut out = Vec::with_capacity(n);
    let mut k = 0;
    let pairs = path.pairs();
    while k < pairs.len() {
        let i = pairs[k].0;
        let start = k;
        while k < pairs.len() && pairs[k].0 == i {
            k += 1;
        }
        let run = &pairs[start..k];
        let v = match rule {
            WarpRule::Mean => run.iter().map(|p| p.1 as f64).sum::<f64>() / run.len() as f64,
            WarpRule::First => run[0].1 as f64,
            WarpRule::Last => run[run.len() - 1].1 as f64,
        };
        out.push(v);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Asynchrony {
    pub frames: f64,
    pub seconds: f64,
}

/// RMS of `wp(n) - n`, in frames and in seconds (`frames * hop`).
pub fn asynchrony_score(wp: &[f64], hop: f64) -> Result<Asynchrony> {
    if wp.is_empty() {
        return Err(Error::Argument("empty warp function".into()));
    }
    let ms = wp
        .iter()
        .enumerate()
        .map(|(n, w)| (w - n as f64).powi(2))
        .sum::<f64>()
        / wp.len() as f64;
    let frames = ms.sqrt();
    Ok(Asynchrony {
        frames,
        seconds: frames * hop,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentResult {
    pub path: WarpPath,
    pub cost: f64,
    pub warp_fn: Vec<f64>,
    pub async_frames: f64,
    pub async_seconds: f64,
}

pub fn align_with(a: &MelSpectrogram, b: &MelSpectrogram, config: &DtwConfig) -> Result<AlignmentResult> {
    let DtwResult { path, cost } = dtw_banded(a, b, config.band)?;
    let warp_fn = warp_function(&path, a.n_frames(), config.warp_rule)?;
    let score = asynchrony_score(&warp_fn, a.hop())?;
    Ok(AlignmentResult {
        path,
        cost,
        warp_fn,
        async_frames: score.frames,
        async_seconds: score.seconds,
    })
}

/// Align `recording` against `original` with default settings.
pub fn align(original: &MelSpectrogram, recording: &MelSpectrogram) -> Result<AlignmentResult> {
    align_with(original, recording, &DtwConfig::default())
}

/// Candidate offsets for [`find_best_offset`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OffsetSearch {
    /// Most negative offset in seconds (≤ 0).
    pub min: f64,
    /// Most positive offset in seconds (≥ 0).
    pub max: f64,
    /// Spacing of candidates in hops.
    pub step: usize,
}

impl Default for OffsetSearch {
    fn default() -> Self {
        OffsetSearch {
            min: -2.0,
            max: 2.0,
            step: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffsetCorrection {
    /// Applied shift in hops; negative drops leading recording frames.
    pub offset_hops: i64,
    pub offset_seconds: f64,
    pub alignment: AlignmentResult,
}

/// Search whole-hop shifts of `take` for the one minimizing the asynchrony score.
///
/// Ties go to the smallest magnitude, then to the negative shift.
pub fn find_best_offset(
    original: &MelSpectrogram,
    take: &MelSpectrogram,
    search: &OffsetSearch,
    config: &DtwConfig,
) -> Result<OffsetCorrection> {
    check_compatible(original, take)?;
    if !(search.min <= 0.0 && search.max >= 0.0) {
        return Err(Error::Argument("offset search range must contain 0".into()));
    }
    if search.step == 0 {
        return Err(Error::Argument("offset step must be at least one hop".into()));
    }
    let hop = original.hop();
    let step = search.step as i64;
    // small epsilon so that e.g. 2.0 s / 0.023 s includes the boundary hop
    let lo = ((search.min / hop) - 1e-9).ceil() as i64 / step;
    let hi = ((search.max / hop) + 1e-9).floor() as i64 / step;

    // visit candidates in tie-break order: 0, -1, +1, -2, +2, ...
    let mut order: Vec<i64> = (lo..=hi).map(|k| k * step).collect();
    order.sort_by_key(|&d| (d.abs(), d > 0));

    let mut best: Option<OffsetCorrection> = None;
    for delta in order {
        let shifted = take.shifted(delta);
        if shifted.is_empty() {
            continue;
        }
        let alignment = align_with(original, &shifted, config)?;
        if best
            .as_ref()
            .is_none_or(|b| alignment.async_frames < b.alignment.async_frames)
        {
            best = Some(OffsetCorrection {
                offset_hops: delta,
                offset_seconds: delta as f64 * hop,
                alignment,
            });
        }
    }
    best.ok_or_else(|| Error::DegenerateInput("no admissible offset leaves a non-empty take".into()))
}
