//! Binary class label shared by every pipeline stage.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

/// Diagnostic class of a subject. `Pd` is the positive class throughout
/// the evaluation code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ClassLabel {
    Control,
    Pd,
}

impl ClassLabel {
    /// Both labels in a fixed order (`Control`, `Pd`). Iteration over
    /// classes always uses this order so seeded shuffles stay stable.
    pub const ALL: [ClassLabel; 2] = [ClassLabel::Control, ClassLabel::Pd];

    /// Directory / file-format name of the class (`"control"` / `"pd"`).
    pub fn as_str(self) -> &'static str {
        match self {
            ClassLabel::Control => "control",
            ClassLabel::Pd => "pd",
        }
    }

    /// True for the positive (PD) class.
    pub fn is_positive(self) -> bool {
        matches!(self, ClassLabel::Pd)
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Error returned when a string is not a recognized class name.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown class label {0:?} (expected \"pd\" or \"control\")")]
pub struct ParseLabelError(pub String);

impl FromStr for ClassLabel {
    type Err = ParseLabelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "pd" => Ok(ClassLabel::Pd),
            "control" => Ok(ClassLabel::Control),
            other => Err(ParseLabelError(other.to_string())),
        }
    }
}
