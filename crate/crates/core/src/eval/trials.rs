use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trial {
    pub target: bool,
    pub enroll: String,
    pub test: String,
}

/// Lines of `1|0 <enroll_id> <test_id>`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TrialList {
    pub trials: Vec<Trial>,
}

impl TrialList {
    pub fn parse(text: &str) -> Result<Self> {
        let mut trials = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            let target = match parts.as_slice() {
                ["1", _, _] => true,
                ["0", _, _] => false,
                _ => {
                    return Err(Error::format(
                        "trial list",
                        format!("line {}: expected `1|0 enroll test`, got `{line}`", n + 1),
                    ))
                }
            };
            trials.push(Trial {
                target,
                enroll: parts[1].to_string(),
                test: parts[2].to_string(),
            });
        }
        Ok(TrialList { trials })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::parse(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for t in &self.trials {
            let _ = writeln!(s, "{} {} {}", u8::from(t.target), t.enroll, t.test);
        }
        s
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    pub fn labels(&self) -> Vec<bool> {
        self.trials.iter().map(|t| t.target).collect()
    }

    /// Every unordered pair of distinct utterances, labelled by speaker.
    pub fn all_pairs<'a>(utts: impl IntoIterator<Item = (&'a str, usize)>) -> Self {
        let utts: Vec<(&str, usize)> = utts.into_iter().collect();
        let mut trials = Vec::new();
        for (i, a) in utts.iter().enumerate() {
            for b in &utts[i + 1..] {
                trials.push(Trial {
                    target: a.1 == b.1,
                    enroll: a.0.to_string(),
                    test: b.0.to_string(),
                });
            }
        }
        TrialList { trials }
    }
}

/// One `<enroll_id> <test_id> <score>` line per trial, in trial order.
pub fn format_scores(trials: &TrialList, scores: &[f64]) -> String {
    let mut s = String::new();
    for (t, sc) in trials.trials.iter().zip(scores) {
        let _ = writeln!(s, "{} {} {sc:.6}", t.enroll, t.test);
    }
    s
}
