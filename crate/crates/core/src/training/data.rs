//! Sample generators: quadratic gradient noise, Gaussian blobs and IDX
//! image files.

use std::path::PathBuf;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::mnist;
use super::model::Samples;
use crate::error::{Error, Result};
use crate::rng::{substream, Purpose};

/// Data section of an experiment config.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub generator: Generator,
    /// Fresh samples each worker draws per round.
    #[serde(default = "default_batch")]
    pub batch_size: usize,
}

fn default_batch() -> usize {
    32
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Generator {
    /// Per-worker gradient noise with total variance `variance` after
    /// averaging a batch.
    QuadraticNoise { variance: f64 },
    /// Isotropic Gaussian clusters around seeded random centers.
    GaussianBlobs {
        classes: usize,
        features: usize,
        spread: f64,
        #[serde(default = "default_center_scale")]
        center_scale: f64,
        #[serde(default = "default_test_size")]
        test_size: usize,
        /// Fixes the centers and the test set independently of the run seed.
        #[serde(default)]
        seed: u64,
    },
    /// IDX image and label files; without a test pair the last
    /// `test_size` training images are held out.
    MnistIdx {
        images: PathBuf,
        labels: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        test_images: Option<PathBuf>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        test_labels: Option<PathBuf>,
        #[serde(default = "default_test_size")]
        test_size: usize,
    },
}

fn default_center_scale() -> f64 {
    1.0
}

fn default_test_size() -> usize {
    2000
}

fn gauss<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// A ready-to-sample data source.
#[derive(Debug, Clone)]
pub enum DataSource {
    Noise {
        dim: usize,
        variance: f64,
    },
    Blobs {
        centers: Vec<f64>,
        classes: usize,
        features: usize,
        spread: f64,
        test: Samples,
    },
    Pool {
        train: Samples,
        test: Samples,
        classes: usize,
    },
}

impl DataSource {
    /// Materializes a generator. `noise_dim` is the parameter dimension
    /// used by the quadratic-noise generator.
    pub fn build(generator: &Generator, noise_dim: usize) -> Result<Self> {
        match generator {
            Generator::QuadraticNoise { variance } => {
                if !(*variance >= 0.0 && variance.is_finite()) {
                    return Err(Error::invalid(format!("variance must be finite and >= 0, got {variance}")));
                }
                Ok(DataSource::Noise {
                    dim: noise_dim,
                    variance: *variance,
                })
            }
            Generator::GaussianBlobs {
                classes,
                features,
                spread,
                center_scale,
                test_size,
                seed,
            } => {
                if *classes < 2 || *features == 0 || *test_size == 0 {
                    return Err(Error::invalid("blobs need >= 2 classes, >= 1 feature and a nonempty test set"));
                }
                let mut rng = substream(*seed, Purpose::Centers, &[]);
                let centers = (0..classes * features)
                    .map(|_| center_scale * gauss(&mut rng))
                    .collect();
                let mut source = DataSource::Blobs {
                    centers,
                    classes: *classes,
                    features: *features,
                    spread: *spread,
                    test: Samples::new(vec![], vec![], *features)?,
                };
                let test = source.draw(&mut substream(*seed, Purpose::TestSet, &[]), *test_size);
                if let DataSource::Blobs { test: t, .. } = &mut source {
                    *t = test;
                }
                Ok(source)
            }
            Generator::MnistIdx {
                images,
                labels,
                test_images,
                test_labels,
                test_size,
            } => {
                let (pixels, dim, labs) = mnist::load(images, labels)?;
                let all = Samples::new(pixels, labs, dim)?;
                let (train, test) = match (test_images, test_labels) {
                    (Some(ti), Some(tl)) => {
                        let (p, d, l) = mnist::load(ti, tl)?;
                        if d != dim {
                            return Err(Error::DimensionMismatch { expected: dim, actual: d });
                        }
                        (all, Samples::new(p, l, d)?)
                    }
                    (None, None) => {
                        if *test_size == 0 || *test_size >= all.len() {
                            return Err(Error::invalid("test_size must leave training images"));
                        }
                        let cut = all.len() - test_size;
                        (all.slice(0..cut), all.slice(cut..all.len()))
                    }
                    _ => return Err(Error::invalid("test_images and test_labels go together")),
                };
                let classes = train.labels.iter().chain(&test.labels).max().map_or(0, |&c| c + 1).max(2);
                Ok(DataSource::Pool { train, test, classes })
            }
        }
    }

    /// Width of a sample row.
    pub fn features(&self) -> usize {
        match self {
            DataSource::Noise { dim, .. } => *dim,
            DataSource::Blobs { features, .. } => *features,
            DataSource::Pool { train, .. } => train.dim,
        }
    }

    pub fn classes(&self) -> usize {
        match self {
            DataSource::Noise { .. } => 0,
            DataSource::Blobs { classes, .. } | DataSource::Pool { classes, .. } => *classes,
        }
    }

    pub fn test_set(&self) -> Option<&Samples> {
        match self {
            DataSource::Noise { .. } => None,
            DataSource::Blobs { test, .. } | DataSource::Pool { test, .. } => Some(test),
        }
    }

    /// Draws `n` i.i.d. samples.
    ///
    /// Quadratic noise rows have per-coordinate variance `variance * n / dim`
    /// so that the mean of the `n` rows has total variance `variance`.
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Samples {
        match self {
            DataSource::Noise { dim, variance } => {
                let std = (variance * n as f64 / *dim as f64).sqrt();
                let features = (0..n * dim)
                    .map(|_| std * gauss(rng))
                    .collect();
                Samples {
                    features,
                    labels: vec![0; n],
                    dim: *dim,
                }
            }
            DataSource::Blobs {
                centers,
                classes,
                features,
                spread,
                ..
            } => {
                let mut out = Vec::with_capacity(n * features);
                let mut labels = Vec::with_capacity(n);
                for _ in 0..n {
                    let y = rng.random_range(0..*classes);
                    let c = &centers[y * features..(y + 1) * features];
                    out.extend(c.iter().map(|&v| v + spread * gauss(rng)));
                    labels.push(y);
                }
                Samples {
                    features: out,
                    labels,
                    dim: *features,
                }
            }
            DataSource::Pool { train, .. } => {
                let mut out = Vec::with_capacity(n * train.dim);
                let mut labels = Vec::with_capacity(n);
                for _ in 0..n {
                    let i = rng.random_range(0..train.len());
                    out.extend_from_slice(train.row(i));
                    labels.push(train.labels[i]);
                }
                Samples {
                    features: out,
                    labels,
                    dim: train.dim,
                }
            }
        }
    }
}
