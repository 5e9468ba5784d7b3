//! Score-to-masking-probability functions and their calibration.
//!
//! Three families (step, linear, exponential) map a task score in [0, 10]
//! to a masking probability; one free scale parameter per family is solved
//! by monotone bisection so the token-weighted expected mask rate over a
//! score sample hits the target. A fourth family, `random_baseline`, gives
//! every word the target rate and backs the random masking baselines.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_TARGET_RATE: f64 = 0.15;
pub const DEFAULT_TOLERANCE: f64 = 0.002;
/// Linear family pivot: scores at the pivot extremity get probability 0.
pub const DEFAULT_LINEAR_PIVOT: f64 = 5.0;
/// Exponential family shape (the exponent rate on the extremity).
pub const DEFAULT_EXP_SHAPE: f64 = 0.5;
const MAX_BISECTION_STEPS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskFamily {
    Step,
    Linear,
    Exponential,
    RandomBaseline,
}

impl MaskFamily {
    pub fn name(self) -> &'static str {
        match self {
            MaskFamily::Step => "step",
            MaskFamily::Linear => "linear",
            MaskFamily::Exponential => "exponential",
            MaskFamily::RandomBaseline => "random_baseline",
        }
    }
}

impl clap::ValueEnum for MaskFamily {
    fn value_variants<'a>() -> &'a [Self] {
        &[
            MaskFamily::Step,
            MaskFamily::Linear,
            MaskFamily::Exponential,
            MaskFamily::RandomBaseline,
        ]
    }

    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        Some(clap::builder::PossibleValue::new(self.name()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sidedness {
    /// Mask both extremes of the score scale.
    TwoSided,
    /// Mask only scores near 10.
    OneSidedHi,
    /// Mask only scores near 0.
    OneSidedLo,
}

impl Sidedness {
    pub fn name(self) -> &'static str {
        match self {
            Sidedness::TwoSided => "two_sided",
            Sidedness::OneSidedHi => "one_sided_hi",
            Sidedness::OneSidedLo => "one_sided_lo",
        }
    }
}

impl clap::ValueEnum for Sidedness {
    fn value_variants<'a>() -> &'a [Self] {
        &[
            Sidedness::TwoSided,
            Sidedness::OneSidedHi,
            Sidedness::OneSidedLo,
        ]
    }

    fn to_possible_value(&self) -> Option<clap::builder::PossibleValue> {
        Some(clap::builder::PossibleValue::new(self.name()))
    }
}

/// Score at which masking probability is minimal; the default score for
/// words without embeddings so they are never preferentially masked.
pub fn neutral_score(sidedness: Sidedness) -> f64 {
    match sidedness {
        Sidedness::TwoSided => 5.0,
        Sidedness::OneSidedHi => 0.0,
        Sidedness::OneSidedLo => 10.0,
    }
}

/// How extreme a score is for the chosen sidedness.
pub fn extremity(s: f64, sidedness: Sidedness) -> f64 {
    match sidedness {
        Sidedness::TwoSided => s.max(10.0 - s),
        Sidedness::OneSidedHi => s,
        Sidedness::OneSidedLo => 10.0 - s,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaskFnConfig {
    pub family: MaskFamily,
    pub sidedness: Sidedness,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub target_rate: f64,
}

impl MaskFnConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::InvalidMaskConfig(msg));
        if !(self.target_rate.is_finite() && 0.0 < self.target_rate && self.target_rate < 1.0) {
            return fail(format!("target_rate must be in (0, 1), got {}", self.target_rate));
        }
        match self.family {
            MaskFamily::Step => {
                if !(self.alpha.is_finite() && (0.0..=5.0).contains(&self.alpha)) {
                    return fail(format!("step alpha must be in [0, 5], got {}", self.alpha));
                }
            }
            MaskFamily::Linear => {
                if !(self.beta.is_finite() && self.beta > 0.0) {
                    return fail(format!("linear beta must be positive, got {}", self.beta));
                }
                if !self.alpha.is_finite() {
                    return fail(format!("linear alpha must be finite, got {}", self.alpha));
                }
            }
            MaskFamily::Exponential => {
                if !(self.alpha.is_finite() && self.alpha > 0.0 && self.alpha <= 20.0) {
                    return fail(format!(
                        "exponential alpha must be in (0, 20], got {}",
                        self.alpha
                    ));
                }
                if !(self.gamma.is_finite() && self.gamma > 0.0) {
                    return fail(format!(
                        "exponential gamma must be positive, got {}",
                        self.gamma
                    ));
                }
                if !self.beta.is_finite() {
                    return fail(format!("exponential beta must be finite, got {}", self.beta));
                }
            }
            MaskFamily::RandomBaseline => {}
        }
        Ok(())
    }

    /// Masking probability for score `s`, clamped to [0, 1].
    pub fn probability(&self, s: f64) -> Result<f64> {
        if !s.is_finite() {
            return Err(Error::NonFiniteScore(s));
        }
        let p = match self.family {
            MaskFamily::Step => {
                let masked = match self.sidedness {
                    Sidedness::TwoSided => s <= self.alpha || s >= 10.0 - self.alpha,
                    Sidedness::OneSidedHi => s >= 10.0 - self.alpha,
                    Sidedness::OneSidedLo => s <= self.alpha,
                };
                if masked {
                    1.0
                } else {
                    0.0
                }
            }
            MaskFamily::Linear => {
                let m = extremity(s, self.sidedness);
                ((m - self.alpha) / self.beta).clamp(0.0, 1.0)
            }
            MaskFamily::Exponential => {
                let m = extremity(s, self.sidedness);
                (((self.alpha * m).exp() - self.beta.exp()) / self.gamma).clamp(0.0, 1.0)
            }
            MaskFamily::RandomBaseline => self.target_rate,
        };
        Ok(p)
    }

    /// The target-rate baseline config that masks every word with the same
    /// probability.
    pub fn random_baseline(target_rate: f64) -> MaskFnConfig {
        MaskFnConfig {
            family: MaskFamily::RandomBaseline,
            sidedness: Sidedness::TwoSided,
            alpha: 0.0,
            beta: 0.0,
            gamma: 0.0,
            target_rate,
        }
    }
}

/// Scores with token-frequency weights; the calibration expectation runs
/// over this sample.
#[derive(Debug, Clone, Default)]
pub struct ScoreSample {
    entries: Vec<(f64, f64)>,
    total_weight: f64,
}

impl ScoreSample {
    pub fn new() -> Self {
        ScoreSample::default()
    }

    pub fn push(&mut self, score: f64, weight: f64) -> Result<()> {
        if !(score.is_finite() && (0.0..=10.0).contains(&score)) {
            return Err(Error::Config(format!(
                "sample score must be in [0, 10], got {score}"
            )));
        }
        if !(weight.is_finite() && weight > 0.0) {
            return Err(Error::Config(format!(
                "sample weight must be positive, got {weight}"
            )));
        }
        self.entries.push((score, weight));
        self.total_weight += weight;
        Ok(())
    }

    pub fn from_scores<I: IntoIterator<Item = f64>>(scores: I) -> Result<Self> {
        let mut sample = ScoreSample::new();
        for s in scores {
            sample.push(s, 1.0)?;
        }
        Ok(sample)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    pub fn iter(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.entries.iter().copied()
    }
}

/// Token-weighted expected mask rate of `cfg` over the sample.
pub fn expected_mask_rate(cfg: &MaskFnConfig, sample: &ScoreSample) -> Result<f64> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    let mut acc = 0.0;
    for (score, weight) in sample.iter() {
        acc += weight * cfg.probability(score)?;
    }
    Ok(acc / sample.total_weight())
}

/// Shape constants held fixed during calibration.
#[derive(Debug, Clone, Copy)]
pub struct FixedShape {
    /// Linear family: extremity at which probability starts rising.
    pub linear_pivot: f64,
    /// Exponential family: exponent rate; the offset is tied to 5x this so
    /// a neutral score maps to probability 0.
    pub exp_shape: f64,
}

impl Default for FixedShape {
    fn default() -> Self {
        FixedShape {
            linear_pivot: DEFAULT_LINEAR_PIVOT,
            exp_shape: DEFAULT_EXP_SHAPE,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CalibrationReport {
    pub solved_parameter: &'static str,
    pub solved_value: f64,
    pub achieved_rate: f64,
    pub iterations: usize,
    pub sample_size: usize,
}

/// Solve the family's free scale parameter so the expected mask rate over
/// `sample` lands within `tolerance` of `target_rate`.
pub fn calibrate(
    family: MaskFamily,
    sidedness: Sidedness,
    fixed: FixedShape,
    sample: &ScoreSample,
    target_rate: f64,
    tolerance: f64,
) -> Result<(MaskFnConfig, CalibrationReport)> {
    if sample.is_empty() {
        return Err(Error::EmptySample);
    }
    if !(target_rate.is_finite() && 0.0 < target_rate && target_rate < 1.0) {
        return Err(Error::Config(format!(
            "target_rate must be in (0, 1), got {target_rate}"
        )));
    }
    if !(tolerance.is_finite() && tolerance > 0.0) {
        return Err(Error::Config(format!(
            "tolerance must be positive, got {tolerance}"
        )));
    }

    let report = |cfg: &MaskFnConfig, param: &'static str, value: f64, rate: f64, iters: usize| {
        let _ = cfg;
        CalibrationReport {
            solved_parameter: param,
            solved_value: value,
            achieved_rate: rate,
            iterations: iters,
            sample_size: sample.len(),
        }
    };

    match family {
        MaskFamily::RandomBaseline => {
            let cfg = MaskFnConfig::random_baseline(target_rate);
            let rate = expected_mask_rate(&cfg, sample)?;
            let rep = report(&cfg, "target_rate", target_rate, rate, 0);
            Ok((cfg, rep))
        }
        MaskFamily::Step => {
            let cfg_at = |alpha: f64| MaskFnConfig {
                family,
                sidedness,
                alpha,
                beta: 0.0,
                gamma: 0.0,
                target_rate,
            };
            let rate_at = |alpha: f64| expected_mask_rate(&cfg_at(alpha), sample);
            let solved = bisect_increasing(0.0, 5.0, target_rate, tolerance, &rate_at)?;
            let cfg = cfg_at(solved.value);
            let rep = report(&cfg, "alpha", solved.value, solved.rate, solved.iterations);
            Ok((cfg, rep))
        }
        MaskFamily::Linear => {
            let cfg_at = |beta: f64| MaskFnConfig {
                family,
                sidedness,
                alpha: fixed.linear_pivot,
                beta,
                gamma: 0.0,
                target_rate,
            };
            cfg_at(1.0).validate()?;
            let rate_at = |beta: f64| expected_mask_rate(&cfg_at(beta), sample);
            let solved = bisect_decreasing(target_rate, tolerance, &rate_at)?;
            let cfg = cfg_at(solved.value);
            let rep = report(&cfg, "beta", solved.value, solved.rate, solved.iterations);
            Ok((cfg, rep))
        }
        MaskFamily::Exponential => {
            let cfg_at = |gamma: f64| MaskFnConfig {
                family,
                sidedness,
                alpha: fixed.exp_shape,
                beta: 5.0 * fixed.exp_shape,
                gamma,
                target_rate,
            };
            cfg_at(1.0).validate()?;
            let rate_at = |gamma: f64| expected_mask_rate(&cfg_at(gamma), sample);
            let solved = bisect_decreasing(target_rate, tolerance, &rate_at)?;
            let cfg = cfg_at(solved.value);
            let rep = report(&cfg, "gamma", solved.value, solved.rate, solved.iterations);
            Ok((cfg, rep))
        }
    }
}

struct Solved {
    value: f64,
    rate: f64,
    iterations: usize,
}

/// Bisection on a bounded parameter with non-decreasing rate.
fn bisect_increasing(
    lo: f64,
    hi: f64,
    target: f64,
    tolerance: f64,
    rate_at: &dyn Fn(f64) -> Result<f64>,
) -> Result<Solved> {
    let r_lo = rate_at(lo)?;
    if (r_lo - target).abs() <= tolerance {
        return Ok(Solved {
            value: lo,
            rate: r_lo,
            iterations: 0,
        });
    }
    let r_hi = rate_at(hi)?;
    if (r_hi - target).abs() <= tolerance {
        return Ok(Solved {
            value: hi,
            rate: r_hi,
            iterations: 0,
        });
    }
    if target < r_lo || target > r_hi {
        return Err(Error::UnreachableTargetRate {
            target,
            lo: r_lo,
            hi: r_hi,
        });
    }
    let (mut lo, mut hi) = (lo, hi);
    let (mut r_lo, mut r_hi) = (r_lo, r_hi);
    for step in 1..=MAX_BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        let r_mid = rate_at(mid)?;
        if (r_mid - target).abs() <= tolerance {
            return Ok(Solved {
                value: mid,
                rate: r_mid,
                iterations: step,
            });
        }
        if r_mid < target {
            lo = mid;
            r_lo = r_mid;
        } else {
            hi = mid;
            r_hi = r_mid;
        }
    }
    Err(Error::UnreachableTargetRate {
        target,
        lo: r_lo,
        hi: r_hi,
    })
}

/// Bracket by doubling/halving from 1.0, then bisect. Rate must be
/// non-increasing in the parameter; the parameter lives in (0, inf).
fn bisect_decreasing(
    target: f64,
    tolerance: f64,
    rate_at: &dyn Fn(f64) -> Result<f64>,
) -> Result<Solved> {
    // Walk down until the rate reaches the target: this end has the
    // highest reachable rate.
    let mut lo = 1.0f64;
    let mut r_lo = rate_at(lo)?;
    let mut iterations = 1usize;
    while r_lo < target {
        if lo < 1e-300 {
            // Rate is still short of the target with the parameter at the
            // bottom of the float range: report the reachable band.
            return Err(Error::UnreachableTargetRate {
                target,
                lo: 0.0,
                hi: r_lo,
            });
        }
        lo /= 2.0;
        r_lo = rate_at(lo)?;
        iterations += 1;
    }
    if (r_lo - target).abs() <= tolerance {
        return Ok(Solved {
            value: lo,
            rate: r_lo,
            iterations,
        });
    }
    // Walk up until the rate drops to the target.
    let mut hi = lo;
    let mut r_hi = r_lo;
    while r_hi > target {
        if hi > 1e300 {
            return Err(Error::UnreachableTargetRate {
                target,
                lo: r_hi,
                hi: r_lo,
            });
        }
        hi *= 2.0;
        r_hi = rate_at(hi)?;
        iterations += 1;
    }
    if (r_hi - target).abs() <= tolerance {
        return Ok(Solved {
            value: hi,
            rate: r_hi,
            iterations,
        });
    }
    for _ in 0..MAX_BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        let r_mid = rate_at(mid)?;
        iterations += 1;
        if (r_mid - target).abs() <= tolerance {
            return Ok(Solved {
                value: mid,
                rate: r_mid,
                iterations,
            });
        }
        if r_mid > target {
            lo = mid;
            r_lo = r_mid;
        } else {
            hi = mid;
            r_hi = r_mid;
        }
    }
    Err(Error::UnreachableTargetRate {
        target,
        lo: r_hi,
        hi: r_lo,
    })
}
