//! Wall-clock timing of aggregation rules.

use std::time::Instant;

use byzsgd::rng::{substream, Purpose};
use byzsgd::{AggregationRule, Error, GradientBatch, Result};
use rand::Rng;
use rand_distr::StandardNormal;

/// A rule as named on the command line: `mean`, `krum`, `multi-krum`,
/// `trmean`, `phocas`, optionally with an explicit parameter (`trmean:0`).
/// Without one, Krum uses `q = (m-3)/2` and the trimmed rules
/// `b = (m-3)/2`, the same fault budget.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchRule {
    pub name: String,
    pub param: Option<usize>,
}

impl BenchRule {
    pub fn parse(text: &str) -> Result<Self> {
        let (name, param) = match text.split_once(':') {
            Some((n, p)) => (
                n,
                Some(p.parse().map_err(|_| Error::InvalidInput(format!("bad rule parameter in `{text}`")))?),
            ),
            None => (text, None),
        };
        AggregationRule::from_name(name, Some(0), Some(0), None)?;
        Ok(Self {
            name: name.to_string(),
            param,
        })
    }

    pub fn label(&self) -> String {
        match self.param {
            Some(p) => format!("{}:{p}", self.name),
            None => self.name.clone(),
        }
    }

    pub fn for_workers(&self, m: usize) -> Result<AggregationRule> {
        let budget = self.param.unwrap_or(m.saturating_sub(3) / 2);
        AggregationRule::from_name(&self.name, Some(budget), Some(budget), None)
    }
}

/// Gaussian batch for timing.
pub fn random_batch(m: usize, d: usize, seed: u64) -> GradientBatch {
    let mut rng = substream(seed, Purpose::Data, &[m as u64, d as u64]);
    let data = (0..m * d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    GradientBatch::from_flat(data, m, d).expect("consistent shape")
}

/// Median wall time in nanoseconds of `reps` applications of `rule`.
pub fn median_ns(rule: &AggregationRule, batch: &GradientBatch, reps: usize) -> Result<u64> {
    rule.validate(batch.m())?;
    let mut times = Vec::with_capacity(reps.max(1));
    for _ in 0..reps.max(1) {
        let start = Instant::now();
        let out = rule.apply(batch)?;
        times.push(start.elapsed().as_nanos() as u64);
        std::hint::black_box(out);
    }
    times.sort_unstable();
    Ok(times[times.len() / 2])
}

/// One timing per `(rule, m)` cell at dimension `d`.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub rule: String,
    pub m: usize,
    pub d: usize,
    pub median_ns: u64,
}

pub fn run(rules: &[BenchRule], ms: &[usize], d: usize, reps: usize, seed: u64) -> Result<Vec<BenchRow>> {
    if rules.is_empty() || ms.is_empty() || d == 0 {
        return Err(Error::InvalidInput("bench grid is empty".into()));
    }
    let mut rows = Vec::new();
    for &m in ms {
        let batch = random_batch(m, d, seed);
        for r in rules {
            rows.push(BenchRow {
                rule: r.label(),
                m,
                d,
                median_ns: median_ns(&r.for_workers(m)?, &batch, reps)?,
            });
        }
    }
    Ok(rows)
}

pub fn to_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("rule,m,d,median_ns\n");
    for r in rows {
        out.push_str(&format!("{},{},{},{}\n", r.rule, r.m, r.d, r.median_ns));
    }
    out
}
