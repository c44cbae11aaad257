//! Synchronous parameter-server SGD.
//!
//! Each round every worker draws a fresh batch from its own keyed random
//! stream and computes a gradient at the shared iterate; the attack
//! corrupts the batch of gradients, the rule aggregates it and the server
//! takes one step.

mod data;
pub mod mnist;
mod model;

use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::aggregation::{mean, AggregationRule};
use crate::attacks::AttackSpec;
use crate::batch::GradientBatch;
use crate::error::{Error, Result};
use crate::rng::{substream, Purpose};

pub use data::{DataConfig, DataSource, Generator};
pub use model::{LossKind, Model, ModelSpec, Samples};

/// Everything needed to reproduce a run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingConfig {
    pub workers: usize,
    pub rounds: usize,
    pub gamma: f64,
    pub seed: u64,
    /// Rounds between test evaluations; 0 evaluates only after the last
    /// round. Ignored by models without a test set.
    pub eval_every: usize,
    pub rule: AggregationRule,
    pub attack: AttackSpec,
    pub model: ModelSpec,
    pub data: DataConfig,
    /// Permute the workers after the attack, every round.
    pub shuffle_workers: bool,
    /// Measure aggregation wall time. Off by default so metric streams are
    /// byte-reproducible.
    pub record_timing: bool,
}

/// Metrics for one round.
#[derive(Debug, Clone, PartialEq)]
pub struct RoundRecord {
    /// 1-based round index.
    pub round: usize,
    /// Mean loss of this round's worker batches at the pre-step iterate.
    pub train_loss: f64,
    /// Accuracy of the post-step iterate on the test set.
    pub test_accuracy: Option<f64>,
    /// `|aggregate - mean of the uncorrupted gradients|`.
    pub agg_deviation: f64,
    /// `|x - x*|` after the step (quadratic model only).
    pub dist_to_opt: Option<f64>,
    pub agg_time_ns: Option<u64>,
}

/// `x - gamma * aggregated`.
pub fn sgd_step(x: &[f64], aggregated: &[f64], gamma: f64) -> Result<Vec<f64>> {
    if x.len() != aggregated.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: aggregated.len(),
        });
    }
    Ok(x.iter().zip(aggregated).map(|(a, g)| a - gamma * g).collect())
}

/// Mean per-sample gradient of `model` at `x`.
pub fn worker_gradient(model: &Model, x: &[f64], samples: &Samples) -> Result<Vec<f64>> {
    model.gradient(x, samples)
}

/// Fraction of `test` rows whose predicted class matches the label.
pub fn evaluate(model: &Model, x: &[f64], test: &Samples) -> Result<f64> {
    if test.is_empty() {
        return Err(Error::invalid("empty test set"));
    }
    if x.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            actual: x.len(),
        });
    }
    let correct = (0..test.len())
        .filter(|&i| model.predict(x, test.row(i)) == test.labels[i])
        .count();
    Ok(correct as f64 / test.len() as f64)
}

/// A validated configuration with its model and data source built.
#[derive(Debug, Clone)]
pub struct Simulation {
    pub config: TrainingConfig,
    pub model: Model,
    pub data: DataSource,
}

impl Simulation {
    pub fn new(config: TrainingConfig) -> Result<Self> {
        if config.workers == 0 {
            return Err(Error::invalid("need at least one worker"));
        }
        if config.rounds == 0 {
            return Err(Error::invalid("need at least one round"));
        }
        if !(config.gamma > 0.0 && config.gamma.is_finite()) {
            return Err(Error::invalid(format!("gamma must be positive, got {}", config.gamma)));
        }
        if config.data.batch_size == 0 {
            return Err(Error::invalid("batch_size must be >= 1"));
        }
        let noise_dim = match &config.model {
            ModelSpec::Quadratic { dim, .. } => *dim,
            _ => 0,
        };
        let data = DataSource::build(&config.data.generator, noise_dim)?;
        let model = Model::from_spec(&config.model, data.features(), data.classes())?;
        if model.input_dim() != data.features() {
            return Err(Error::DimensionMismatch {
                expected: model.input_dim(),
                actual: data.features(),
            });
        }
        Ok(Self { config, model, data })
    }

    /// Runs all rounds.
    pub fn run(&self) -> Result<Vec<RoundRecord>> {
        self.run_observed(|_, _| {})
    }

    /// Runs all rounds, calling `observe(t, x_t)` for every iterate
    /// `t = 0..=rounds`.
    pub fn run_observed(&self, mut observe: impl FnMut(usize, &[f64])) -> Result<Vec<RoundRecord>> {
        let cfg = &self.config;
        let m = cfg.workers;
        let mut x = self.model.init(cfg.seed);
        let mut records = Vec::with_capacity(cfg.rounds);
        for t in 0..cfg.rounds {
            observe(t, &x);
            let round = t + 1;
            let at_round = |e: Error| Error::Round {
                round,
                source: Box::new(e),
            };
            let per_worker: Vec<(Vec<f64>, f64)> = (0..m)
                .into_par_iter()
                .map(|w| {
                    let mut rng = substream(cfg.seed, Purpose::Data, &[t as u64, w as u64]);
                    let samples = self.data.draw(&mut rng, cfg.data.batch_size);
                    Ok((self.model.gradient(&x, &samples)?, self.model.loss(&x, &samples)?))
                })
                .collect::<Result<_>>()
                .map_err(at_round)?;
            let train_loss = per_worker.iter().fold(0.0, |a, (_, l)| a + l) / m as f64;
            let rows: Vec<&[f64]> = per_worker.iter().map(|(g, _)| g.as_slice()).collect();
            let clean = GradientBatch::from_rows(&rows).map_err(at_round)?;
            let honest_mean = mean(&clean);

            let mut attack_rng = substream(cfg.seed, Purpose::Attack, &[cfg.attack.seed, t as u64]);
            let (mut corrupted, _) = cfg.attack.apply(&clean, &mut attack_rng).map_err(at_round)?;
            if cfg.shuffle_workers {
                let mut perm: Vec<usize> = (0..m).collect();
                perm.shuffle(&mut substream(cfg.seed, Purpose::Shuffle, &[t as u64]));
                corrupted = corrupted.permute_rows(&perm).map_err(at_round)?;
            }

            let start = Instant::now();
            let out = cfg.rule.apply(&corrupted).map_err(at_round)?;
            let elapsed = start.elapsed().as_nanos() as u64;

            let agg_deviation = model::sq_dist(&out.vector, &honest_mean).sqrt();
            x = sgd_step(&x, &out.vector, cfg.gamma).map_err(at_round)?;

            let evaluate_now = round == cfg.rounds || (cfg.eval_every > 0 && round % cfg.eval_every == 0);
            let test_accuracy = match self.data.test_set() {
                Some(test) if evaluate_now => Some(evaluate(&self.model, &x, test).map_err(at_round)?),
                _ => None,
            };
            records.push(RoundRecord {
                round,
                train_loss,
                test_accuracy,
                agg_deviation,
                dist_to_opt: self.model.optimum().map(|s| model::sq_dist(&x, s).sqrt()),
                agg_time_ns: cfg.record_timing.then_some(elapsed),
            });
        }
        observe(cfg.rounds, &x);
        Ok(records)
    }

    /// Smoothness constant of the objective: exact for the quadratic,
    /// a Hessian bound from `samples` draws for the logistic model and the
    /// largest gradient-difference ratio over random probes around the
    /// initial point for the MLP.
    pub fn smoothness(&self, samples: usize) -> f64 {
        if let Some(l) = self.model.smoothness {
            return l;
        }
        let mut rng = substream(self.config.seed, Purpose::TestSet, &[1]);
        let pool = self.data.draw(&mut rng, samples.max(1));
        match self.model.kind {
            LossKind::Logistic => Model::logistic_smoothness(&pool),
            _ => {
                use rand_distr::{Distribution, StandardNormal};
                let x0 = self.model.init(self.config.seed);
                let mut best: f64 = 0.0;
                for _ in 0..20 {
                    let dir: Vec<f64> = (0..x0.len()).map(|_| StandardNormal.sample(&mut rng)).collect();
                    let norm = model::dot(&dir, &dir).sqrt();
                    let y: Vec<f64> = x0.iter().zip(&dir).map(|(a, u)| a + 1e-3 * u / norm).collect();
                    let (Ok(ga), Ok(gb)) = (self.model.gradient(&x0, &pool), self.model.gradient(&y, &pool)) else {
                        continue;
                    };
                    best = best.max(model::sq_dist(&ga, &gb).sqrt() / 1e-3);
                }
                best
            }
        }
    }
}

/// Builds and runs a configuration.
pub fn run_experiment(config: TrainingConfig) -> Result<Vec<RoundRecord>> {
    Simulation::new(config)?.run()
}
