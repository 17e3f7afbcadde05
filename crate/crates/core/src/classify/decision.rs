use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::softmax::softmax;
use crate::backend::BackendError;
use crate::error::{Error, Result};

pub const DEFAULT_HYPOTHESIS_TEMPLATE: &str = "This text is about {label}.";

/// Ordered candidate labels. Order breaks ties: the first label with the
/// highest probability wins.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct LabelSet(Vec<String>);

impl Default for LabelSet {
    fn default() -> Self {
        Self(
            ["Invoice", "Form", "Letter", "Report"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        )
    }
}

impl LabelSet {
    pub fn new<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let set = Self(labels.into_iter().map(Into::into).collect());
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        if self.0.is_empty() {
            return Err(Error::NoLabels);
        }
        for (i, l) in self.0.iter().enumerate() {
            if l.trim().is_empty() {
                return Err(Error::Config("labels must be non-empty strings".into()));
            }
            if self.0[..i].contains(l) {
                return Err(Error::DuplicateLabel(l.clone()));
            }
        }
        Ok(())
    }

    pub fn as_slice(&self) -> &[String] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Entailment / neutral / contradiction logits for one premise-hypothesis pair.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NliScore {
    pub entail: f64,
    pub neutral: f64,
    pub contradict: f64,
}

impl NliScore {
    pub const fn new(entail: f64, neutral: f64, contradict: f64) -> Self {
        Self {
            entail,
            neutral,
            contradict,
        }
    }

    /// Probability of entailment after a softmax over the three logits.
    pub fn entailment_probability(&self) -> Result<f64> {
        Ok(softmax(&[self.entail, self.neutral, self.contradict])?[0])
    }
}

/// Natural-language-inference scorer.
pub trait NliScorer {
    fn name(&self) -> &str;

    fn score(&mut self, premise: &str, hypothesis: &str) -> Result<NliScore, BackendError>;

    /// Scores every hypothesis against one premise, in input order.
    fn score_all(
        &mut self,
        premise: &str,
        hypotheses: &[String],
    ) -> Result<Vec<NliScore>, BackendError> {
        hypotheses.iter().map(|h| self.score(premise, h)).collect()
    }
}

impl<T: NliScorer + ?Sized> NliScorer for alloc::boxed::Box<T> {
    fn name(&self) -> &str {
        (**self).name()
    }
    fn score(&mut self, premise: &str, hypothesis: &str) -> Result<NliScore, BackendError> {
        (**self).score(premise, hypothesis)
    }
    fn score_all(
        &mut self,
        premise: &str,
        hypotheses: &[String],
    ) -> Result<Vec<NliScore>, BackendError> {
        (**self).score_all(premise, hypotheses)
    }
}

/// Outcome of a zero-shot decision: normalized per-label probabilities in
/// label order, the winning label, and the premise that was scored.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ClassDecision {
    pub labels: Vec<String>,
    pub probs: Vec<f64>,
    pub label: String,
    pub premise: String,
}

impl ClassDecision {
    pub fn prob_of(&self, label: &str) -> Option<f64> {
        self.labels
            .iter()
            .position(|l| l == label)
            .map(|i| self.probs[i])
    }
}

/// Scores one hypothesis per label, converts each to an entailment
/// probability, normalizes across labels and picks the first maximum.
pub fn zero_shot_classify<S: NliScorer + ?Sized>(
    premise: &str,
    labels: &LabelSet,
    template: &str,
    scorer: &mut S,
) -> Result<ClassDecision> {
    labels.validate()?;
    let hypotheses: Vec<String> = labels
        .as_slice()
        .iter()
        .map(|l| template.replace("{label}", l))
        .collect();
    let scores = scorer.score_all(premise, &hypotheses)?;
    if scores.len() != hypotheses.len() {
        return Err(BackendError::protocol(
            scorer.name(),
            alloc::format!(
                "{} scores for {} hypotheses",
                scores.len(),
                hypotheses.len()
            ),
        )
        .into());
    }
    let entail = scores
        .iter()
        .map(NliScore::entailment_probability)
        .collect::<Result<Vec<f64>>>()?;
    let total: f64 = entail.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateDecision);
    }
    let probs: Vec<f64> = entail.iter().map(|e| e / total).collect();
    let mut best = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > probs[best] {
            best = i;
        }
    }
    Ok(ClassDecision {
        labels: labels.as_slice().to_vec(),
        label: labels.as_slice()[best].clone(),
        probs,
        premise: premise.into(),
    })
}
