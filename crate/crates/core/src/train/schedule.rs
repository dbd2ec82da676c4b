//! Training schedules over a window of trainable iterations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    OneShot,
    IterByIter,
    MultiLoss,
    BlockWise,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleSpec {
    pub kind: ScheduleKind,
    /// New iterations per block (block-wise only).
    #[serde(default = "one")]
    pub delta1: usize,
    /// Previously trained iterations retrained with each block.
    #[serde(default)]
    pub delta2: usize,
    #[serde(default = "default_epochs")]
    pub epochs_per_stage: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
}

fn one() -> usize {
    1
}

fn default_epochs() -> usize {
    100
}

fn default_batch() -> usize {
    500
}

/// One training block: iterations `lo..=hi` receive updates, the loss is
/// read at every iteration of `loss_at`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    pub lo: usize,
    pub hi: usize,
    pub loss_at: Vec<usize>,
}

impl ScheduleSpec {
    pub fn new(kind: ScheduleKind) -> Self {
        Self {
            kind,
            delta1: 1,
            delta2: 0,
            epochs_per_stage: default_epochs(),
            batch_size: default_batch(),
        }
    }

    pub fn block_wise(delta1: usize, delta2: usize) -> Self {
        Self {
            delta1,
            delta2,
            ..Self::new(ScheduleKind::BlockWise)
        }
    }

    /// Blocks covering the absolute iteration window `first..=last`.
    pub fn blocks(&self, first: usize, last: usize) -> Result<Vec<Block>> {
        if first == 0 || last < first {
            return Err(Error::Config(format!("empty training window {first}..={last}")));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        let len = last - first + 1;
        let at = |rel: usize| first + rel - 1;
        Ok(match self.kind {
            ScheduleKind::OneShot => vec![Block {
                lo: first,
                hi: last,
                loss_at: vec![last],
            }],
            ScheduleKind::MultiLoss => vec![Block {
                lo: first,
                hi: last,
                loss_at: (first..=last).collect(),
            }],
            ScheduleKind::IterByIter => (first..=last)
                .map(|l| Block {
                    lo: l,
                    hi: l,
                    loss_at: vec![l],
                })
                .collect(),
            ScheduleKind::BlockWise => {
                if self.delta1 == 0 {
                    return Err(Error::Config("delta1 must be at least 1".into()));
                }
                if self.delta1 + self.delta2 > len {
                    return Err(Error::Config(format!(
                        "schedule exceeds stage length: delta1 {} + delta2 {} > {len}",
                        self.delta1, self.delta2
                    )));
                }
                let stages = len.div_ceil(self.delta1);
                (1..=stages)
                    .map(|s| {
                        let hi = (s * self.delta1).min(len);
                        let lo = ((s - 1) * self.delta1).saturating_sub(self.delta2) + 1;
                        Block {
                            lo: at(lo),
                            hi: at(hi),
                            loss_at: vec![at(hi)],
                        }
                    })
                    .collect()
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sliding_blocks() {
        let b = ScheduleSpec::block_wise(5, 10).blocks(21, 50).unwrap();
        let spans: Vec<_> = b.iter().map(|b| (b.lo, b.hi)).collect();
        assert_eq!(spans, vec![(21, 25), (21, 30), (21, 35), (26, 40), (31, 45), (36, 50)]);
        assert!(b.iter().all(|b| b.loss_at == vec![b.hi]));
    }

    #[test]
    fn special_cases_agree() {
        let one = ScheduleSpec::new(ScheduleKind::OneShot).blocks(3, 12).unwrap();
        assert_eq!(one, ScheduleSpec::block_wise(10, 0).blocks(3, 12).unwrap());
        let ibi = ScheduleSpec::new(ScheduleKind::IterByIter).blocks(3, 12).unwrap();
        assert_eq!(ibi, ScheduleSpec::block_wise(1, 0).blocks(3, 12).unwrap());
        let ml = ScheduleSpec::new(ScheduleKind::MultiLoss).blocks(1, 4).unwrap();
        assert_eq!(ml[0].loss_at, vec![1, 2, 3, 4]);
    }

    #[test]
    fn rejects_oversized() {
        assert!(ScheduleSpec::block_wise(20, 11).blocks(1, 30).is_err());
        assert!(ScheduleSpec::block_wise(0, 0).blocks(1, 30).is_err());
        assert!(ScheduleSpec::block_wise(7, 0).blocks(1, 30).is_ok());
    }
}
