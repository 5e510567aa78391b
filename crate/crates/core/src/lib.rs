//! Persona-grounded survey datasets: question bank, persona store, chat
//! record assembly and splitting, a chat-completion client, evaluation
//! metrics and report tables.

pub mod apportion;
pub mod dataset;
pub mod eval;
pub mod generation;
pub mod jsonl;
pub mod persona;
pub mod question_bank;
pub mod report;
pub mod rng;

// mdbook cannot link against this crate, so the guide's snippets run here.
// One item per chapter keeps failures traceable.
#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/inputs.md")]
    struct Inputs;
    #[doc = include_str!("../../../book/src/datasets.md")]
    struct Datasets;
    #[doc = include_str!("../../../book/src/generation.md")]
    struct Generation;
    #[doc = include_str!("../../../book/src/metrics.md")]
    struct Metrics;
    #[doc = include_str!("../../../book/src/reports.md")]
    struct Reports;
    #[doc = include_str!("../../../book/src/training.md")]
    struct Training;
}
