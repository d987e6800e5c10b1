//! Cosine matching, score-level fusion, fusion-weight calibration and
//! multi-probe max fusion.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::templates::{Modality, Template};

pub const DEFAULT_OPERATING_FAR: f64 = 0.01;
pub const DEFAULT_GRID_STEP: f64 = 0.01;
pub const CALIBRATION_OBJECTIVE: &str = "vr_at_far";

const WEIGHT_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreKind {
    Shape,
    Colour,
    Fused,
}

impl From<Modality> for ScoreKind {
    fn from(m: Modality) -> Self {
        match m {
            Modality::Shape => ScoreKind::Shape,
            Modality::Colour => ScoreKind::Colour,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchScore {
    pub value: f64,
    pub kind: ScoreKind,
}

/// Dot product with `f64` accumulation in index order.
///
/// The fixed summation order makes the result exactly symmetric in its
/// arguments. `-0.0` is folded to `+0.0` so ranking ties are well defined.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        acc += f64::from(*x) * f64::from(*y);
    }
    acc + 0.0
}

/// Cosine similarity of two unit-length templates of the same modality.
pub fn cosine_match(a: &Template, b: &Template) -> Result<MatchScore> {
    if a.modality() != b.modality() {
        return Err(Error::ModalityMismatch {
            expected: a.modality(),
            found: b.modality(),
        });
    }
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    if !a.is_normalized() || !b.is_normalized() {
        return Err(Error::NotNormalized);
    }
    Ok(MatchScore {
        value: dot(a.values(), b.values()),
        kind: a.modality().into(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    WeightedSum,
    PlainSum,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub objective: String,
    pub operating_far: f64,
    pub calibration_set_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionWeights {
    pub w_shape: f64,
    pub w_colour: f64,
    pub mode: FusionMode,
    pub calibration: Calibration,
}

impl FusionWeights {
    /// Uncalibrated weighted sum with `w_colour = 1 - w_shape`.
    pub fn weighted(w_shape: f64) -> Result<Self> {
        let w = FusionWeights {
            w_shape,
            w_colour: 1.0 - w_shape,
            mode: FusionMode::WeightedSum,
            calibration: Calibration {
                objective: "manual".into(),
                operating_far: DEFAULT_OPERATING_FAR,
                calibration_set_id: String::new(),
            },
        };
        w.validate()?;
        Ok(w)
    }

    /// Plain sum of both scores, for modalities with similar score distributions.
    pub fn plain_sum() -> Self {
        FusionWeights {
            w_shape: 1.0,
            w_colour: 1.0,
            mode: FusionMode::PlainSum,
            calibration: Calibration {
                objective: "manual".into(),
                operating_far: DEFAULT_OPERATING_FAR,
                calibration_set_id: String::new(),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.mode {
            FusionMode::WeightedSum => {
                for (name, w) in [("w_shape", self.w_shape), ("w_colour", self.w_colour)] {
                    if !(0.0..=1.0).contains(&w) {
                        return Err(Error::InvalidWeights(format!(
                            "{name} = {w} outside [0, 1]"
                        )));
                    }
                }
                if (self.w_shape + self.w_colour - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
                    return Err(Error::InvalidWeights(format!(
                        "weights sum to {}, expected 1",
                        self.w_shape + self.w_colour
                    )));
                }
            }
            FusionMode::PlainSum => {
                if self.w_shape != 1.0 || self.w_colour != 1.0 {
                    return Err(Error::InvalidWeights(
                        "plain-sum fusion requires both weights = 1".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

impl fmt::Display for FusionWeights {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.mode {
            FusionMode::WeightedSum => {
                write!(
                    f,
                    "weighted(shape={}, colour={})",
                    self.w_shape, self.w_colour
                )
            }
            FusionMode::PlainSum => f.write_str("plain_sum"),
        }
    }
}

pub fn fuse(shape_score: f64, colour_score: f64, w: &FusionWeights) -> Result<f64> {
    if !shape_score.is_finite() || !colour_score.is_finite() {
        return Err(Error::NonFinite(format!(
            "fusion inputs ({shape_score}, {colour_score})"
        )));
    }
    Ok(fuse_unchecked(shape_score, colour_score, w))
}

#[inline]
pub(crate) fn fuse_unchecked(shape_score: f64, colour_score: f64, w: &FusionWeights) -> f64 {
    match w.mode {
        FusionMode::WeightedSum => w.w_shape * shape_score + w.w_colour * colour_score,
        FusionMode::PlainSum => shape_score + colour_score,
    }
}

/// Maximum over the scores one gallery entry receives from several probes.
pub fn multi_probe_score(probe_scores: &[f64]) -> Result<f64> {
    let (first, rest) = probe_scores.split_first().ok_or(Error::EmptyProbeSet)?;
    let mut best = *first;
    for &s in probe_scores {
        if !s.is_finite() {
            return Err(Error::NonFinite(format!("probe score {s}")));
        }
    }
    for &s in rest {
        if s > best {
            best = s;
        }
    }
    Ok(best)
}

/// Number of genuine scores accepted at the most permissive threshold whose
/// false acceptance rate stays at or below `far`.
///
/// Thresholds follow the `score >= t` convention and are taken from the
/// observed scores (plus +∞), so the count is the number of genuine scores
/// strictly above the impostor score that would push FAR over the limit.
/// `impostor_desc` must be sorted in descending order.
pub(crate) fn genuine_accepted_at_far(genuine: &[f64], impostor_desc: &[f64], far: f64) -> usize {
    let n_imp = impostor_desc.len() as f64;
    // Largest impostor count c with c / n_imp <= far.
    let mut allowed = (far * n_imp).floor() as usize;
    while allowed > 0 && allowed as f64 / n_imp > far {
        allowed -= 1;
    }
    while allowed < impostor_desc.len() && (allowed + 1) as f64 / n_imp <= far {
        allowed += 1;
    }
    if allowed >= impostor_desc.len() {
        return genuine.len();
    }
    let cut = impostor_desc[allowed];
    genuine.iter().filter(|&&g| g > cut).count()
}

fn sort_desc(v: &mut [f64]) {
    v.sort_unstable_by(|a, b| b.partial_cmp(a).unwrap_or(Ordering::Equal));
}

/// Grid values `0, step, 2·step, …, 1`.
pub fn weight_grid(grid_step: f64) -> Result<Vec<f64>> {
    if !(grid_step > 0.0 && grid_step <= 0.5) {
        return Err(Error::InvalidGridStep(grid_step));
    }
    let n = (1.0 / grid_step + 1e-9).floor() as usize;
    if ((n as f64) * grid_step - 1.0).abs() <= 1e-9 {
        // Step divides 1: i / n keeps grid points like 0.83 exact.
        return Ok((0..=n).map(|i| i as f64 / n as f64).collect());
    }
    let mut grid: Vec<f64> = (0..=n).map(|i| i as f64 * grid_step).collect();
    grid.push(1.0);
    Ok(grid)
}

/// Grid search for the weighted-sum fusion weights that maximize the
/// verification rate at `FAR <= operating_far` on the supplied pairs.
///
/// Ties go to the larger shape weight.
pub fn calibrate_weights(
    genuine_pairs: &[(f64, f64)],
    impostor_pairs: &[(f64, f64)],
    operating_far: f64,
    grid_step: f64,
    calibration_set_id: &str,
) -> Result<FusionWeights> {
    if genuine_pairs.is_empty() || impostor_pairs.is_empty() {
        return Err(Error::EmptyCalibrationSet);
    }
    if !(operating_far > 0.0 && operating_far < 1.0) {
        return Err(Error::InvalidFar(operating_far));
    }
    let grid = weight_grid(grid_step)?;
    for &(s, c) in genuine_pairs.iter().chain(impostor_pairs) {
        if !s.is_finite() || !c.is_finite() {
            return Err(Error::NonFinite(format!("calibration pair ({s}, {c})")));
        }
    }

    let mut best_w = 0.0;
    let mut best_count = 0usize;
    let mut genuine = vec![0.0; genuine_pairs.len()];
    let mut impostor = vec![0.0; impostor_pairs.len()];
    for (i, &w_shape) in grid.iter().enumerate() {
        let w_colour = 1.0 - w_shape;
        for (dst, &(s, c)) in genuine.iter_mut().zip(genuine_pairs) {
            *dst = w_shape * s + w_colour * c;
        }
        for (dst, &(s, c)) in impostor.iter_mut().zip(impostor_pairs) {
            *dst = w_shape * s + w_colour * c;
        }
        sort_desc(&mut impostor);
        let count = genuine_accepted_at_far(&genuine, &impostor, operating_far);
        if i == 0 || count >= best_count {
            best_count = count;
            best_w = w_shape;
        }
    }

    Ok(FusionWeights {
        w_shape: best_w,
        w_colour: 1.0 - best_w,
        mode: FusionMode::WeightedSum,
        calibration: Calibration {
            objective: CALIBRATION_OBJECTIVE.into(),
            operating_far,
            calibration_set_id: calibration_set_id.into(),
        },
    })
}
