//! Teacher labeling, ensemble selection and evaluation for clinical
//! named-entity recognition with token-level IO tags.

pub mod corpus;
pub mod costing;
pub mod ensemble;
pub mod evaluation;
pub mod spanlab;
pub mod teachers;

pub use corpus::{Document, Split};
pub use ensemble::{Combo, ComboResult, Labelings};
pub use evaluation::{ConfusionCounts, MetricsReport};
pub use spanlab::{EntitySpan, Label, LabelClass, Token, TokenLabelSequence};
pub use teachers::{TeacherId, TeacherRecord};
