//! Cross-validated recognition accuracy on a generated dataset.
//!
//! Training views are split into stratified folds by class. Every fold trains
//! a library on the remaining views and scores the held-out views unoccluded,
//! the occluded probes derived from those same views, and every object of
//! every test sequence.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::classifier::{mean_std, per_class_accuracy, stratified_folds};
use crate::datagen::render::render_depth;
use crate::datagen::suite::Dataset;
use crate::error::{Error, Result};
use crate::library::{prepare_views, train_from_prepared, ModelLibrary, TrainConfig, TrainingView};
use crate::recognition::{recognize, Observation, RecognitionConfig};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub train: TrainConfig,
    pub recognition: RecognitionConfig,
    pub folds: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::default(),
            recognition: RecognitionConfig::default(),
            folds: 5,
            seed: 0,
        }
    }
}

impl EvalConfig {
    /// Training settings taken from an existing library.
    pub fn from_library(lib: &ModelLibrary) -> Self {
        let train = TrainConfig {
            slice: lib.slice_params,
            alpha: lib.alpha,
            essential: lib.essential,
            pi_grid: (lib.pi_params.rows, lib.pi_params.cols),
            weighting: lib.pi_params.weighting,
            train_scale: lib.train_scale,
            ..TrainConfig::default()
        };
        Self {
            train,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalRow {
    pub name: String,
    /// Mean per-class accuracy of each fold, in percent.
    pub fold_accuracy: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    /// Objects scored per fold, summed over folds.
    pub instances: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub suite: String,
    pub folds: usize,
    pub seed: u64,
    pub class_labels: Vec<String>,
    pub rows: Vec<EvalRow>,
}

impl EvalReport {
    pub fn row(&self, name: &str) -> Option<&EvalRow> {
        self.rows.iter().find(|r| r.name == name)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "suite {}  {}-fold  seed {}  {} classes\n",
            self.suite,
            self.folds,
            self.seed,
            self.class_labels.len()
        );
        let _ = writeln!(out, "{:<16} {:>9} {:>8} {:>10}", "sequence", "mean %", "std %", "instances");
        for r in &self.rows {
            let _ = writeln!(out, "{:<16} {:>9.2} {:>8.2} {:>10}", r.name, r.mean, r.std, r.instances);
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// An object to recognize together with its true class index.
struct Target {
    truth: usize,
    observation: Observation,
}

fn score(lib: &ModelLibrary, targets: &[&Target], cfg: &RecognitionConfig) -> Result<(f64, usize)> {
    let predicted = targets
        .par_iter()
        .map(|t| {
            let r = recognize(&t.observation, lib, cfg)?;
            Ok(lib.class_labels.iter().position(|l| *l == r.label).expect("label from library"))
        })
        .collect::<Result<Vec<usize>>>()?;
    let truth: Vec<usize> = targets.iter().map(|t| t.truth).collect();
    let (mean, _) = per_class_accuracy(&truth, &predicted, lib.class_labels.len());
    Ok((100.0 * mean, targets.len()))
}

pub fn evaluate(data: &Dataset, cfg: &EvalConfig) -> Result<EvalReport> {
    if data.train.is_empty() {
        return Err(Error::InsufficientData("dataset has no training views".into()));
    }
    let mut labels: Vec<String> = data.train.iter().map(|t| t.label.clone()).collect();
    labels.sort();
    labels.dedup();
    let class_of = |label: &str| labels.iter().position(|l| l == label);

    let views: Vec<TrainingView> = data
        .train
        .iter()
        .map(|t| TrainingView {
            cloud: t.cloud.clone(),
            label: t.label.clone(),
        })
        .collect();
    let y: Vec<usize> = views.iter().map(|v| class_of(&v.label).expect("own label")).collect();
    let folds = stratified_folds(&y, cfg.folds, cfg.seed)?;
    let prepared = prepare_views(&views, &cfg.train)?;

    let heldout: Vec<Target> = views
        .iter()
        .zip(&y)
        .map(|(v, &c)| Target {
            truth: c,
            observation: Observation::unoccluded(1, v.cloud.clone()),
        })
        .collect();

    // Probes score in the fold of the view they were derived from.
    let probes: Vec<(usize, Target)> = data
        .probes
        .par_iter()
        .filter_map(|p| {
            let view = data
                .train
                .iter()
                .position(|t| t.label == p.label && t.view_index == p.view_index)?;
            Some((view, p))
        })
        .map(|(view, p)| {
            let scene = render_depth(&p.spec)?;
            let observation = Observation::from_scene(&scene, p.target_id, &cfg.recognition)?;
            Ok((
                folds[view],
                Target {
                    truth: y[view],
                    observation,
                },
            ))
        })
        .collect::<Result<_>>()?;

    let sequences: Vec<(String, Vec<Target>)> = data
        .sequences
        .iter()
        .map(|seq| {
            let targets = seq
                .scenes
                .iter()
                .flat_map(|sc| sc.truth.iter().map(move |t| (sc, t)))
                .filter(|(sc, t)| sc.scene.pixel_count(t.id) > 0)
                .filter_map(|(sc, t)| class_of(&t.label).map(|c| (sc, t, c)))
                .map(|(sc, t, c)| {
                    Ok(Target {
                        truth: c,
                        observation: Observation::from_scene(&sc.scene, t.id, &cfg.recognition)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((seq.name(), targets))
        })
        .collect::<Result<_>>()?;

    let probe_name = format!("heldout-occ{:.0}", 100.0 * data.config.probe_fraction);
    let mut names = vec!["heldout".to_string()];
    if !probes.is_empty() {
        names.push(probe_name);
    }
    names.extend(sequences.iter().map(|(n, _)| n.clone()));
    let mut per_row: Vec<(Vec<f64>, usize)> = vec![(Vec::new(), 0); names.len()];

    for f in 0..cfg.folds {
        let train: Vec<_> = prepared
            .iter()
            .zip(&folds)
            .filter(|(_, &k)| k != f)
            .map(|(p, _)| p.clone())
            .collect();
        let lib = train_from_prepared(&train, &cfg.train)?;
        let mut results = Vec::with_capacity(names.len());
        let test: Vec<&Target> = heldout.iter().zip(&folds).filter(|(_, &k)| k == f).map(|(t, _)| t).collect();
        results.push(score(&lib, &test, &cfg.recognition)?);
        if !probes.is_empty() {
            let test: Vec<&Target> = probes.iter().filter(|(k, _)| *k == f).map(|(_, t)| t).collect();
            results.push(score(&lib, &test, &cfg.recognition)?);
        }
        for (_, targets) in &sequences {
            let test: Vec<&Target> = targets.iter().collect();
            results.push(score(&lib, &test, &cfg.recognition)?);
        }
        for ((accs, count), (acc, n)) in per_row.iter_mut().zip(results) {
            accs.push(acc);
            *count += n;
        }
    }

    let rows = names
        .into_iter()
        .zip(per_row)
        .map(|(name, (fold_accuracy, instances))| {
            let (mean, std) = mean_std(&fold_accuracy);
            EvalRow {
                name,
                fold_accuracy,
                mean,
                std,
                instances,
            }
        })
        .collect();
    Ok(EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        suite: data.suite.name().to_string(),
        folds: cfg.folds,
        seed: cfg.seed,
        class_labels: labels,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::suite::{generate, DataConfig, Suite};

    #[test]
    fn report_has_a_row_per_sequence_and_is_deterministic() {
        let data = generate(
            Suite::Cuboidal,
            &DataConfig {
                n_dirs: 5,
                sequence_sizes: vec![2, 3],
                scenes_per_sequence: 1,
                ..DataConfig::default()
            },
        )
        .unwrap();
        let cfg = EvalConfig {
            folds: 2,
            train: TrainConfig {
                softmax: crate::classifier::SoftmaxConfig {
                    iterations: 40,
                    ..Default::default()
                },
                ..TrainConfig::default()
            },
            ..EvalConfig::default()
        };
        let report = evaluate(&data, &cfg).unwrap();
        let names: Vec<&str> = report.rows.iter().map(|r| r.name.as_str()).collect();
        assert_eq!(names, ["heldout", "heldout-occ30", "seq_2", "seq_3"]);
        for r in &report.rows {
            assert_eq!(r.fold_accuracy.len(), 2);
            assert!(r.fold_accuracy.iter().all(|a| (0.0..=100.0).contains(a)));
        }
        assert_eq!(evaluate(&data, &cfg).unwrap().to_json(), report.to_json());
    }

    #[test]
    fn empty_dataset_is_insufficient() {
        let mut data = generate(
            Suite::Curved,
            &DataConfig {
                n_dirs: 1,
                sequence_sizes: vec![],
                ..DataConfig::default()
            },
        )
        .unwrap();
        data.train.clear();
        assert!(matches!(evaluate(&data, &EvalConfig::default()), Err(Error::InsufficientData(_))));
    }
}
