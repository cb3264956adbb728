//! Sketch category classifier supplying the θ reward.

use std::path::Path;

use rand::seq::SliceRandom;
use serde::Serialize;
use sketchnet::{
    cross_entropy_loss, softmax, AdamHyper, AdamState, Architecture, Checkpoint, CheckpointMeta, Input, ModelKind,
    Network,
};

use crate::canvas::Canvas;
use crate::config::Config;
use crate::error::{Error, Result};
use crate::quickdraw::{rasterize_sketch, CategoryData};
use crate::rng::{derive_seed, rng_for};

const INIT_TAG: u64 = 0xc1;
const SHUFFLE_TAG: u64 = 0xc2;
const EVAL_BATCH: usize = 128;

#[derive(Debug, Clone)]
pub struct Classifier {
    pub network: Network<f32>,
    pub categories: Vec<String>,
}

/// `softmax(logits)[category]`.
pub fn theta_from_logits(logits: &[f32], category: usize) -> Result<f64> {
    if category >= logits.len() {
        return Err(Error::Contract(format!(
            "category {category} outside {} classes",
            logits.len()
        )));
    }
    Ok(f64::from(softmax(logits)[category]))
}

impl Classifier {
    pub fn new(categories: Vec<String>, seed: u64) -> Result<Self> {
        if categories.len() < 2 {
            return Err(Error::Config(format!(
                "a classifier needs at least 2 categories, got {}",
                categories.len()
            )));
        }
        let arch = Architecture::classifier(categories.len());
        Ok(Self {
            network: Network::init(arch, derive_seed(seed, INIT_TAG, 0)),
            categories,
        })
    }

    pub fn from_checkpoint(ck: Checkpoint) -> Result<Self> {
        if ck.kind() != ModelKind::Classifier {
            return Err(Error::Net(sketchnet::NetError::Shape("not a classifier checkpoint".into())));
        }
        Ok(Self {
            network: ck.network,
            categories: ck.meta.categories,
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(Checkpoint::load(path, Some(ModelKind::Classifier))?)
    }

    pub fn category_index(&self, name: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == name)
    }

    /// Logits for a batch of canvases.
    pub fn logits_batch(&self, canvases: &[&Canvas]) -> Result<Vec<f32>> {
        let mut pixels = Vec::with_capacity(canvases.iter().map(|c| c.pixels().len()).sum());
        for c in canvases {
            pixels.extend_from_slice(c.pixels());
        }
        Ok(self.network.predict(&Input {
            batch: canvases.len(),
            global: &pixels,
            local: &[],
        })?)
    }

    pub fn logits(&self, canvas: &Canvas) -> Result<Vec<f32>> {
        self.logits_batch(&[canvas])
    }

    /// Probability of `category` for `canvas`.
    pub fn theta(&self, canvas: &Canvas, category: usize) -> Result<f64> {
        if category >= self.categories.len() {
            return Err(Error::Contract(format!(
                "category {category} outside the {}-category roster",
                self.categories.len()
            )));
        }
        theta_from_logits(&self.logits(canvas)?, category)
    }

    /// Fraction of `examples` whose argmax matches the label.
    pub fn accuracy(&self, examples: &[LabelledCanvas]) -> Result<f64> {
        if examples.is_empty() {
            return Ok(0.0);
        }
        let c = self.categories.len();
        let mut correct = 0;
        for chunk in examples.chunks(EVAL_BATCH) {
            let canvases: Vec<&Canvas> = chunk.iter().map(|e| &e.canvas).collect();
            let logits = self.logits_batch(&canvases)?;
            for (e, row) in chunk.iter().zip(logits.chunks(c)) {
                correct += usize::from(crate::dqn::policy::argmax(row) == e.label);
            }
        }
        Ok(correct as f64 / examples.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelledCanvas {
    pub canvas: Canvas,
    pub label: usize,
}

/// Rasterized train splits of `categories`, labelled by roster position.
pub fn rasterize_train_splits(categories: &[CategoryData], size: usize) -> Vec<LabelledCanvas> {
    categories
        .iter()
        .enumerate()
        .flat_map(|(label, cat)| {
            cat.train.iter().map(move |r| LabelledCanvas {
                canvas: rasterize_sketch(r, size),
                label,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClassifierEpochLog {
    pub epoch: u64,
    pub loss: f64,
    pub heldout_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct ClassifierRun {
    pub classifier: Classifier,
    pub adam: AdamState<f32>,
    pub initial_accuracy: f64,
    pub log: Vec<ClassifierEpochLog>,
    pub heldout: usize,
}

impl ClassifierRun {
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint::new(
            self.classifier.network.clone(),
            self.adam.clone(),
            CheckpointMeta {
                step: self.log.len() as u64,
                rng: serde_json::json!({ "seed_stream": "derived", "epochs": self.log.len() }),
                categories: self.classifier.categories.clone(),
            },
        )
    }
}

/// Mini-batch cross-entropy training with Adam. A seeded shuffle holds out
/// `classifier_heldout_fraction` of the examples for accuracy.
pub fn train_classifier(
    examples: &[LabelledCanvas],
    categories: Vec<String>,
    cfg: &Config,
    mut on_epoch: impl FnMut(&ClassifierEpochLog),
) -> Result<ClassifierRun> {
    let mut classifier = Classifier::new(categories, cfg.seed)?;
    let c = classifier.categories.len();
    if let Some(bad) = examples.iter().find(|e| e.label >= c) {
        return Err(Error::Contract(format!("label {} outside {c} categories", bad.label)));
    }
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut rng = rng_for(cfg.seed, SHUFFLE_TAG, 0);
    order.shuffle(&mut rng);
    let n_heldout = (examples.len() as f64 * cfg.classifier_heldout_fraction).round() as usize;
    let (heldout_idx, train_idx) = order.split_at(n_heldout);
    let heldout: Vec<LabelledCanvas> = heldout_idx.iter().map(|&i| examples[i].clone()).collect();
    let mut train_idx = train_idx.to_vec();

    let mut adam = AdamState::new(&classifier.network, AdamHyper::default());
    let initial_accuracy = classifier.accuracy(&heldout)?;
    let mut log = Vec::new();
    let plane = cfg.canvas_size * cfg.canvas_size;
    for epoch in 0..cfg.classifier_epochs {
        train_idx.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for batch in train_idx.chunks(cfg.classifier_batch_size) {
            let mut pixels = Vec::with_capacity(batch.len() * plane);
            for &i in batch {
                pixels.extend_from_slice(examples[i].canvas.pixels());
            }
            let input = Input {
                batch: batch.len(),
                global: &pixels,
                local: &[],
            };
            let cache = classifier.network.forward(&input)?;
            let scale = 1.0 / batch.len() as f32;
            let mut grad_out = Vec::with_capacity(batch.len() * c);
            let mut batch_loss = 0.0f64;
            for (&i, row) in batch.iter().zip(cache.output().chunks(c)) {
                let (loss, grad) = cross_entropy_loss(row, examples[i].label)?;
                batch_loss += f64::from(loss);
                grad_out.extend(grad.into_iter().map(|g| g * scale));
            }
            if !batch_loss.is_finite() {
                return Err(Error::TrainingFault(format!("non-finite classifier loss in epoch {epoch}")));
            }
            let grads = classifier.network.backward(&cache, &grad_out)?;
            adam.update(&mut classifier.network, &grads, cfg.classifier_learning_rate)?;
            loss_sum += batch_loss;
        }
        let entry = ClassifierEpochLog {
            epoch,
            loss: loss_sum / train_idx.len().max(1) as f64,
            heldout_accuracy: classifier.accuracy(&heldout)?,
        };
        on_epoch(&entry);
        log.push(entry);
    }
    Ok(ClassifierRun {
        classifier,
        adam,
        initial_accuracy,
        log,
        heldout: heldout.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn roster() -> Vec<String> {
        crate::quickdraw::TRAIN_CATEGORIES.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn zero_network_gives_uniform_theta() {
        let mut cls = Classifier::new(roster(), 0).unwrap();
        cls.network = Network::zeros(Architecture::classifier(8));
        let blank = Canvas::new(84);
        let t = cls.theta(&blank, 3).unwrap();
        assert!((t - 0.125).abs() < 1e-7);
        assert!(matches!(cls.theta(&blank, 8), Err(Error::Contract(_))));
    }

    #[test]
    fn theta_saturates_sums_to_one_and_ignores_shifts() {
        let mut logits = vec![0.0f32; 8];
        logits[2] = 1000.0;
        assert!((theta_from_logits(&logits, 2).unwrap() - 1.0).abs() < 1e-9);
        let logits = [0.3f32, -1.2, 2.5, 0.0, 0.7, -0.4, 1.1, 0.9];
        let total: f64 = (0..8).map(|c| theta_from_logits(&logits, c).unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-6);
        let shifted: Vec<f32> = logits.iter().map(|v| v + 50.0).collect();
        for c in 0..8 {
            let a = theta_from_logits(&logits, c).unwrap();
            let b = theta_from_logits(&shifted, c).unwrap();
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn blank_canvas_theta_is_finite() {
        let cls = Classifier::new(roster(), 5).unwrap();
        let blank = Canvas::new(84);
        let total: f64 = (0..8).map(|c| cls.theta(&blank, c).unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-6);
    }

    #[test]
    fn fewer_than_two_categories_is_a_config_error() {
        assert!(matches!(Classifier::new(vec!["book".into()], 0), Err(Error::Config(_))));
        let cfg = Config::default();
        assert!(matches!(
            train_classifier(&[], vec!["book".into()], &cfg, |_| {}),
            Err(Error::Config(_))
        ));
    }
}
