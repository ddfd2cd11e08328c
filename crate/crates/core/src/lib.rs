//! Markov-mixture models of eye-fixation sequences.
//!
//! Fixations on an image are clustered into salient regions, and a
//! subject's scanpath is scored by how much better a Markov chain over
//! those regions explains it than independent draws from a single
//! location density. The crate also carries the supporting statistics
//! (saccade lengths, rank tests, duration correlation), a ROC classifier
//! over Bayes factors, and a simulator with known ground truth.

pub mod classify;
pub mod clustering;
pub mod data;
pub mod density;
pub mod error;
pub mod markov;
pub mod rng;
pub mod simulate;
pub mod stats;

pub use data::{ColourScheme, Dataset, FixationRecord, FixationSequence, Point, SubjectId};
pub use error::{Error, Result};
