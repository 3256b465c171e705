//! Target-existence gating policy.
//!
//! Judges vote on whether the referred object appears in the video. Under the
//! default unanimous policy an expression is declared null-target only when at
//! least two judges answered and every one of them said absent. A judge that
//! failed counts as "present" (fail-open): a wrong mask costs J&F on one
//! expression, a wrong null wipes out a target.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// What one judge said about the target.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictOutcome {
    Present,
    Absent,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub judge_id: String,
    pub outcome: VerdictOutcome,
    pub latency_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub raw_response: Option<String>,
}

impl JudgeVerdict {
    pub fn answered(
        judge_id: impl Into<String>,
        present: bool,
        latency_ms: u64,
        raw_response: Option<String>,
    ) -> Self {
        Self {
            judge_id: judge_id.into(),
            outcome: if present {
                VerdictOutcome::Present
            } else {
                VerdictOutcome::Absent
            },
            latency_ms,
            raw_response,
        }
    }

    /// A failed judge call; `diagnostic` says why.
    pub fn error(judge_id: impl Into<String>, latency_ms: u64, diagnostic: impl Into<String>) -> Self {
        Self {
            judge_id: judge_id.into(),
            outcome: VerdictOutcome::Error,
            latency_ms,
            raw_response: Some(diagnostic.into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GateOutcome {
    Proceed,
    NullTarget,
}

/// How verdicts combine into a gate outcome.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Consensus {
    /// Every verdict absent, at least two of them.
    #[default]
    Unanimous,
    /// Strictly more than half of the counted verdicts absent, at least two counted.
    Majority,
    /// The first judge alone decides.
    Single,
}

impl core::str::FromStr for Consensus {
    type Err = String;

    fn from_str(s: &str) -> core::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "unanimous" => Ok(Self::Unanimous),
            "majority" => Ok(Self::Majority),
            "single" => Ok(Self::Single),
            other => Err(alloc::format!(
                "unknown consensus '{other}' (expected unanimous, majority or single)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GatePolicy {
    pub consensus: Consensus,
    /// Any error verdict forces `Proceed`. When off, errors abstain.
    pub fail_open: bool,
}

impl Default for GatePolicy {
    fn default() -> Self {
        Self {
            consensus: Consensus::Unanimous,
            fail_open: true,
        }
    }
}

impl GatePolicy {
    pub fn decide(&self, verdicts: &[VerdictOutcome]) -> Result<GateOutcome> {
        if verdicts.is_empty() {
            return Err(Error::NoVerdicts);
        }
        let errors = verdicts.iter().filter(|v| **v == VerdictOutcome::Error).count();
        if self.fail_open && errors > 0 && self.consensus != Consensus::Single {
            return Ok(GateOutcome::Proceed);
        }
        let absent = verdicts.iter().filter(|v| **v == VerdictOutcome::Absent).count();
        let counted = verdicts.len() - errors;
        let null = match self.consensus {
            Consensus::Unanimous => counted >= 2 && absent == counted,
            Consensus::Majority => counted >= 2 && 2 * absent > counted,
            Consensus::Single => verdicts[0] == VerdictOutcome::Absent,
        };
        Ok(if null {
            GateOutcome::NullTarget
        } else {
            GateOutcome::Proceed
        })
    }
}

/// Unanimous-absent, fail-open decision over a verdict list.
pub fn decide(verdicts: &[JudgeVerdict]) -> Result<GateOutcome> {
    let outcomes: Vec<VerdictOutcome> = verdicts.iter().map(|v| v.outcome).collect();
    GatePolicy::default().decide(&outcomes)
}

/// The verdicts for one expression and what the gate made of them.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GateDecision {
    pub expression_id: String,
    pub verdicts: Vec<JudgeVerdict>,
    pub outcome: GateOutcome,
}

impl GateDecision {
    pub fn new(
        expression_id: impl Into<String>,
        verdicts: Vec<JudgeVerdict>,
        policy: &GatePolicy,
    ) -> Result<Self> {
        let outcomes: Vec<VerdictOutcome> = verdicts.iter().map(|v| v.outcome).collect();
        let outcome = policy.decide(&outcomes)?;
        Ok(Self {
            expression_id: expression_id.into(),
            verdicts,
            outcome,
        })
    }

    /// A pass-through decision for runs with the gate switched off.
    pub fn bypassed(expression_id: impl Into<String>) -> Self {
        Self {
            expression_id: expression_id.into(),
            verdicts: Vec::new(),
            outcome: GateOutcome::Proceed,
        }
    }

    pub fn is_null_target(&self) -> bool {
        self.outcome == GateOutcome::NullTarget
    }
}

/// Default judge prompt. `{expression}` is replaced by the query text.
pub const DEFAULT_PROMPT_TEMPLATE: &str = "You are shown frames sampled in temporal order from one video. \
Does the object described by the expression \"{expression}\" appear anywhere in the video? \
Answer with a single word: PRESENT or ABSENT.";

pub fn render_prompt(template: &str, expression: &str) -> String {
    template.replace("{expression}", expression)
}

/// Reads a one-word PRESENT/ABSENT reply, case-insensitively. Anything else is
/// `None` and should become an error verdict.
pub fn parse_reply(reply: &str) -> Option<bool> {
    let word = reply
        .trim()
        .trim_matches(|c: char| c.is_ascii_punctuation() || c.is_whitespace());
    if word.eq_ignore_ascii_case("present") {
        Some(true)
    } else if word.eq_ignore_ascii_case("absent") {
        Some(false)
    } else {
        None
    }
}

/// At most `max_frames` indices spread evenly over `len` frames, in order:
/// `floor(i * len / n)` for `n = min(len, max_frames)`.
pub fn subsample_indices(len: usize, max_frames: usize) -> Vec<usize> {
    let n = len.min(max_frames.max(1));
    (0..n).map(|i| i * len / n).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use VerdictOutcome::{Absent, Present};
    const ERR: VerdictOutcome = VerdictOutcome::Error;

    fn unanimous(v: &[VerdictOutcome]) -> GateOutcome {
        GatePolicy::default().decide(v).unwrap()
    }

    #[test]
    fn unanimous_pairs() {
        assert_eq!(unanimous(&[Absent, Absent]), GateOutcome::NullTarget);
        assert_eq!(unanimous(&[Absent, Present]), GateOutcome::Proceed);
        assert_eq!(unanimous(&[Absent, ERR]), GateOutcome::Proceed);
        assert_eq!(unanimous(&[Present, Present]), GateOutcome::Proceed);
        assert_eq!(unanimous(&[Absent]), GateOutcome::Proceed);
        assert_eq!(GatePolicy::default().decide(&[]), Err(Error::NoVerdicts));
    }

    #[test]
    fn decide_on_full_verdicts() {
        let v = vec![
            JudgeVerdict::answered("a", false, 3, None),
            JudgeVerdict::answered("b", false, 5, Some("ABSENT".into())),
        ];
        assert_eq!(decide(&v), Ok(GateOutcome::NullTarget));
        assert_eq!(decide(&[]), Err(Error::NoVerdicts));
    }

    #[test]
    fn majority_and_single() {
        let majority = GatePolicy {
            consensus: Consensus::Majority,
            fail_open: true,
        };
        assert_eq!(majority.decide(&[Absent, Absent, Present]), Ok(GateOutcome::NullTarget));
        assert_eq!(majority.decide(&[Absent, Present]), Ok(GateOutcome::Proceed));
        assert_eq!(majority.decide(&[Absent, Absent, ERR]), Ok(GateOutcome::Proceed));

        let single = GatePolicy {
            consensus: Consensus::Single,
            fail_open: true,
        };
        assert_eq!(single.decide(&[Absent, Present]), Ok(GateOutcome::NullTarget));
        assert_eq!(single.decide(&[ERR, Absent]), Ok(GateOutcome::Proceed));
    }

    #[test]
    fn errors_abstain_when_not_fail_open() {
        let strict = GatePolicy {
            consensus: Consensus::Unanimous,
            fail_open: false,
        };
        assert_eq!(strict.decide(&[Absent, Absent, ERR]), Ok(GateOutcome::NullTarget));
        assert_eq!(strict.decide(&[Absent, ERR]), Ok(GateOutcome::Proceed));
    }

    #[test]
    fn consensus_parse() {
        assert_eq!("Unanimous".parse(), Ok(Consensus::Unanimous));
        assert_eq!("majority".parse(), Ok(Consensus::Majority));
        assert!("most".parse::<Consensus>().is_err());
    }

    #[test]
    fn reply_parsing() {
        assert_eq!(parse_reply("PRESENT"), Some(true));
        assert_eq!(parse_reply("  absent.\n"), Some(false));
        assert_eq!(parse_reply("Absent"), Some(false));
        assert_eq!(parse_reply("probably absent"), None);
        assert_eq!(parse_reply(""), None);
    }

    #[test]
    fn prompt_rendering() {
        let p = render_prompt("find {expression} now", "the red car");
        assert_eq!(p, "find the red car now");
        assert!(render_prompt(DEFAULT_PROMPT_TEMPLATE, "x").contains("\"x\""));
    }

    #[test]
    fn subsampling() {
        assert_eq!(subsample_indices(100, 100), (0..100).collect::<Vec<_>>());
        assert_eq!(subsample_indices(100, 10), (0..10).map(|i| i * 10).collect::<Vec<_>>());
        assert_eq!(subsample_indices(3, 10), vec![0, 1, 2]);
        assert_eq!(subsample_indices(5, 0), vec![0]);
    }
}
