//! Zero-shot document labelling through an entailment scorer.

mod decision;
mod keyword;
mod premise;
mod recognizer;
mod softmax;

pub use decision::{
    zero_shot_classify, ClassDecision, LabelSet, NliScore, NliScorer, DEFAULT_HYPOTHESIS_TEMPLATE,
};
pub use keyword::{KeywordScorer, KeywordTable, DEFAULT_KEYWORDS};
pub use premise::assemble_premise;
pub use recognizer::{NullRecognizer, RecognizerBackend};
pub use softmax::softmax;
