use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{InstructionRecord, PromptedExample, Split, Task};
use crate::corpus::Language;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatios {
    pub train: f64,
    pub dev: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        SplitRatios {
            train: 0.8,
            dev: 0.1,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    /// Proportions of the released dataset: 148M / 65M / 55M samples.
    pub fn released() -> Self {
        let total = 148.0 + 65.0 + 55.0;
        SplitRatios {
            train: 148.0 / total,
            dev: 65.0 / total,
            test: 55.0 / total,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.train, self.dev, self.test];
        if all.iter().any(|r| !(*r >= 0.0 && r.is_finite())) || (all.iter().sum::<f64>() - 1.0).abs() > 1e-6 {
            return Err(Error::ConfigInvalid(format!(
                "split ratios must be non-negative and sum to 1, got {}/{}/{}",
                self.train, self.dev, self.test
            )));
        }
        Ok(())
    }

    /// `(train, dev, test)` sizes for `n` records: train and dev are
    /// rounded, test takes the remainder.
    pub fn sizes(&self, n: usize) -> (usize, usize, usize) {
        let train = ((n as f64 * self.train).round() as usize).min(n);
        let dev = ((n as f64 * self.dev).round() as usize).min(n - train);
        (train, dev, n - train - dev)
    }
}

impl FromStr for SplitRatios {
    type Err = Error;

    /// `released`, or three comma-separated numbers.
    fn from_str(s: &str) -> Result<Self> {
        if s == "released" {
            return Ok(Self::released());
        }
        let parts: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::ConfigInvalid(format!("bad split ratios {s:?}")))?;
        let [train, dev, test] = parts[..] else {
            return Err(Error::ConfigInvalid(format!("expected three split ratios, got {s:?}")));
        };
        let r = SplitRatios { train, dev, test };
        r.validate()?;
        Ok(r)
    }
}

/// Sample counts per African language, plus MT records counted once more
/// under English, the pivot language.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InstructStats {
    pub per_language: BTreeMap<Language, u64>,
    pub english_pivot: u64,
    pub per_split: BTreeMap<Split, u64>,
    pub per_task: BTreeMap<Task, u64>,
}

impl InstructStats {
    pub fn from_records<'a>(records: impl IntoIterator<Item = &'a InstructionRecord>) -> Self {
        let mut s = InstructStats::default();
        for r in records {
            *s.per_language.entry(r.language).or_default() += 1;
            *s.per_split.entry(r.split).or_default() += 1;
            *s.per_task.entry(r.task).or_default() += 1;
            if r.task == Task::Mt {
                s.english_pivot += 1;
            }
        }
        s
    }

    /// Rows: the five African languages, then English.
    pub fn rows(&self) -> Vec<(&'static str, u64)> {
        let mut rows: Vec<(&'static str, u64)> = Language::AFRICAN
            .iter()
            .map(|l| (l.name(), self.per_language.get(l).copied().unwrap_or(0)))
            .collect();
        rows.push((Language::Eng.name(), self.english_pivot));
        rows
    }

    pub fn render_table(&self) -> String {
        let rows = self.rows();
        let w = rows
            .iter()
            .map(|(_, c)| c.to_string().len())
            .max()
            .unwrap_or(0)
            .max("Number of samples".len());
        let mut s = String::new();
        writeln!(s, "{:<10} | {:>w$}", "Language", "Number of samples").unwrap();
        writeln!(s, "{}", "-".repeat(13 + w)).unwrap();
        for (name, c) in rows {
            writeln!(s, "{name:<10} | {c:>w$}").unwrap();
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InstructDataset {
    /// Train records first, then dev, then test; shuffled within each.
    pub records: Vec<InstructionRecord>,
    pub stats: InstructStats,
}

impl InstructDataset {
    pub fn split(&self, which: Split) -> impl Iterator<Item = &InstructionRecord> {
        self.records.iter().filter(move |r| r.split == which)
    }
}

/// Shuffles all examples with a seeded Fisher-Yates pass and cuts the
/// result into train, dev and test.
pub fn merge_and_split(examples: Vec<PromptedExample>, ratios: SplitRatios, seed: u64) -> Result<InstructDataset> {
    ratios.validate()?;
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (train, dev, _) = ratios.sizes(examples.len());
    let mut slots: Vec<Option<PromptedExample>> = examples.into_iter().map(Some).collect();
    let records: Vec<InstructionRecord> = order
        .iter()
        .enumerate()
        .map(|(pos, &i)| {
            let split = if pos < train {
                Split::Train
            } else if pos < train + dev {
                Split::Dev
            } else {
                Split::Test
            };
            InstructionRecord::from_example(slots[i].take().expect("each index once"), split)
        })
        .collect();
    let stats = InstructStats::from_records(&records);
    Ok(InstructDataset { records, stats })
}
