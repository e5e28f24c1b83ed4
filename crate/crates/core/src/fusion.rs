//! Decision-level fusion of per-window class posteriors.
//!
//! Three rules combine the posteriors of the windows in a segment:
//! majority vote over window argmaxes, the product rule (computed as a sum of
//! logs), and the sum rule. Every rule breaks ties toward the lowest class id.
//!
//! Per-class sums are taken over values sorted in ascending order, so scores
//! are bit-identical for any ordering of the input windows.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::classifier::ClassPosterior;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FusionMethod {
    MajorityVote,
    BayesianProduct,
    SumOfPosteriors,
}

impl FusionMethod {
    pub const ALL: [FusionMethod; 3] = [
        FusionMethod::MajorityVote,
        FusionMethod::BayesianProduct,
        FusionMethod::SumOfPosteriors,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FusionMethod::MajorityVote => "majority",
            FusionMethod::BayesianProduct => "bayesian",
            FusionMethod::SumOfPosteriors => "sum",
        }
    }
}

impl fmt::Display for FusionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FusionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "majority" => Ok(FusionMethod::MajorityVote),
            "bayesian" => Ok(FusionMethod::BayesianProduct),
            "sum" => Ok(FusionMethod::SumOfPosteriors),
            other => Err(Error::Config(format!(
                "unknown fusion method `{other}` (expected majority, bayesian or sum)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FusionDecision {
    pub method: FusionMethod,
    /// 1-based class id.
    pub chosen_class: usize,
    /// Vote counts, log-product scores or summed probabilities, by class.
    pub scores: Vec<f64>,
    pub window_count: usize,
}

impl FusionDecision {
    pub fn chosen_index(&self) -> usize {
        self.chosen_class - 1
    }
}

/// Index of the maximum, lowest index on ties. `-inf` entries never win
/// unless every entry is `-inf`, in which case `None` is returned.
pub fn argmax(values: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, &v) in values.iter().enumerate() {
        if v == f64::NEG_INFINITY {
            continue;
        }
        match best {
            Some(b) if values[b] >= v => {}
            _ => best = Some(i),
        }
    }
    best
}

fn check(posteriors: &[ClassPosterior]) -> Result<usize> {
    let first = posteriors.first().ok_or(Error::EmptyPosteriors)?;
    let classes = first.len();
    if let Some(p) = posteriors.iter().find(|p| p.len() != classes) {
        return Err(Error::InvalidPosterior(format!(
            "posteriors over {} and {} classes mixed",
            classes,
            p.len()
        )));
    }
    Ok(classes)
}

fn sorted_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(f64::total_cmp);
    terms.iter().sum()
}

fn per_class_sum(posteriors: &[ClassPosterior], classes: usize, f: impl Fn(f64) -> f64) -> Vec<f64> {
    (0..classes)
        .map(|i| sorted_sum(posteriors.iter().map(|p| f(p.probs()[i])).collect()))
        .collect()
}

fn decision(method: FusionMethod, scores: Vec<f64>, window_count: usize) -> Result<FusionDecision> {
    let best = argmax(&scores).ok_or(Error::DegeneratePosteriors)?;
    Ok(FusionDecision {
        method,
        chosen_class: best + 1,
        scores,
        window_count,
    })
}

/// Each window votes for its most probable class.
pub fn fuse_majority(posteriors: &[ClassPosterior]) -> Result<FusionDecision> {
    let classes = check(posteriors)?;
    let mut votes = vec![0.0; classes];
    for p in posteriors {
        votes[p.argmax()] += 1.0;
    }
    decision(FusionMethod::MajorityVote, votes, posteriors.len())
}

/// Product rule in log space: score = sum over windows of `ln(p + epsilon)`.
/// With `epsilon = 0` a single zero-probability window rules a class out.
pub fn fuse_bayesian(posteriors: &[ClassPosterior], epsilon: f64) -> Result<FusionDecision> {
    let classes = check(posteriors)?;
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidPosterior(format!(
            "smoothing epsilon must be non-negative, got {epsilon}"
        )));
    }
    let scores = per_class_sum(posteriors, classes, |p| (p + epsilon).ln());
    decision(FusionMethod::BayesianProduct, scores, posteriors.len())
}

/// Sum rule: score = sum over windows of `p`.
pub fn fuse_sum(posteriors: &[ClassPosterior]) -> Result<FusionDecision> {
    let classes = check(posteriors)?;
    let scores = per_class_sum(posteriors, classes, |p| p);
    decision(FusionMethod::SumOfPosteriors, scores, posteriors.len())
}

pub fn fuse(method: FusionMethod, posteriors: &[ClassPosterior], epsilon: f64) -> Result<FusionDecision> {
    match method {
        FusionMethod::MajorityVote => fuse_majority(posteriors),
        FusionMethod::BayesianProduct => fuse_bayesian(posteriors, epsilon),
        FusionMethod::SumOfPosteriors => fuse_sum(posteriors),
    }
}
