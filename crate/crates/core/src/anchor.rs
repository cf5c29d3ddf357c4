use std::fmt;

use serde::{Deserialize, Serialize};

/// One-based anchor (base station) identifier.
///
/// `AnchorId(0)` is reserved for estimates that do not belong to a single
/// anchor, such as the output of the early-fusion model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AnchorId(pub u16);

impl AnchorId {
    pub const JOINT: AnchorId = AnchorId(0);

    pub fn from_index(index: usize) -> Self {
        AnchorId(index as u16 + 1)
    }

    /// Zero-based position in the environment's anchor list.
    pub fn index(self) -> Option<usize> {
        (self.0 as usize).checked_sub(1)
    }
}

impl fmt::Display for AnchorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}
