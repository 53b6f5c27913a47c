//! Confusion matrix and the F1(pos,neg) score: the mean of the positive
//! and negative class F1. Neutral enters only through the pos/neg
//! precision denominators.

use std::fmt::Write as _;
use std::ops::AddAssign;

use crate::error::{Error, Result};
use crate::pipeline::Sentiment;

/// Rows are gold classes, columns predictions (negative, neutral, positive).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: [[u64; 3]; 3],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl ConfusionMatrix {
    pub fn from_counts(counts: [[u64; 3]; 3]) -> Self {
        ConfusionMatrix { counts }
    }

    pub fn accumulate(pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut cm = ConfusionMatrix::default();
        for (gold, pred) in pairs {
            cm.add(gold, pred)?;
        }
        Ok(cm)
    }

    pub fn add(&mut self, gold: usize, predicted: usize) -> Result<()> {
        if gold > 2 || predicted > 2 {
            return Err(Error::invalid(format!("class pair ({gold}, {predicted}) out of range")));
        }
        self.counts[gold][predicted] += 1;
        Ok(())
    }

    pub fn counts(&self) -> &[[u64; 3]; 3] {
        &self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn class_score(&self, class: usize) -> ClassScore {
        let tp = self.counts[class][class];
        let predicted: u64 = (0..3).map(|g| self.counts[g][class]).sum();
        let actual: u64 = self.counts[class].iter().sum();
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, actual);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        ClassScore { precision, recall, f1 }
    }

    pub fn f1_pn(&self) -> f64 {
        let neg = self.class_score(Sentiment::Negative.index()).f1;
        let pos = self.class_score(Sentiment::Positive.index()).f1;
        (neg + pos) / 2.0
    }

    /// Per-class P/R/F1, the matrix and a final `f1_pn=` line.
    pub fn report(&self) -> String {
        let mut out = String::from("class\tprecision\trecall\tf1\n");
        for s in Sentiment::ALL {
            let c = self.class_score(s.index());
            writeln!(out, "{s}\t{:.4}\t{:.4}\t{:.4}", c.precision, c.recall, c.f1).unwrap();
        }
        out.push_str("confusion (rows=gold, cols=predicted)\n\tnegative\tneutral\tpositive\n");
        for s in Sentiment::ALL {
            let r = &self.counts[s.index()];
            writeln!(out, "{s}\t{}\t{}\t{}", r[0], r[1], r[2]).unwrap();
        }
        writeln!(out, "f1_pn={:.4}", self.f1_pn()).unwrap();
        out
    }
}

impl AddAssign for ConfusionMatrix {
    fn add_assign(&mut self, rhs: Self) {
        for (a, b) in self.counts.iter_mut().flatten().zip(rhs.counts.iter().flatten()) {
            *a += b;
        }
    }
}
