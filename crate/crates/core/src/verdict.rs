use serde::{Deserialize, Serialize};

/// Accept/Reject decision: a distillation label or a critic verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Accept,
    Reject,
}

impl Verdict {
    /// Training label: Accept maps to 1, Reject to 0.
    pub fn as_label(self) -> u8 {
        match self {
            Verdict::Accept => 1,
            Verdict::Reject => 0,
        }
    }

    pub fn from_label(label: u8) -> Option<Self> {
        match label {
            1 => Some(Verdict::Accept),
            0 => Some(Verdict::Reject),
            _ => None,
        }
    }

    pub fn is_accept(self) -> bool {
        self == Verdict::Accept
    }
}
