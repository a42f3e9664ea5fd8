//! Premise-grouped batching, AdamW optimization, checkpointing and evaluation.

mod optim;

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use optim::{clip_global_norm, global_norm, AdamW};

use crate::autodiff::{Array, Tape};
use crate::error::{Error, Result};
use crate::explain::{extract_explanations, ExtractionMode};
use crate::graph::FuseOptions;
use crate::interchange::{DocSlot, EmbeddingTable, Explanation, Instance, Label};
use crate::metrics::{classification_metrics, jaccard, ClassificationReport, TextOverlap};
use crate::model::{forward_group, predict, prepare_group, GroupMasks, ModelConfig, ParameterStore, PreparedGroup};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    /// Premise groups per optimizer step.
    pub batch_groups: usize,
    pub epochs: usize,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm cap; `None` disables clipping.
    pub clip_norm: Option<f64>,
    /// Stop after this many epochs without a dev macro-F1 improvement.
    pub patience: Option<usize>,
    pub seed: u64,
    pub delta: f64,
    pub leaves_only: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-5,
            batch_groups: 16,
            epochs: 20,
            weight_decay: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            clip_norm: Some(1.0),
            patience: None,
            seed: 0,
            delta: crate::graph::DEFAULT_DELTA,
            leaves_only: false,
        }
    }
}

impl TrainConfig {
    pub fn fuse_options(&self) -> FuseOptions {
        FuseOptions { delta: self.delta, leaves_only: self.leaves_only }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr >= 0.0) {
            return Err(Error::InvalidArgument(format!("lr must be finite and ≥ 0, got {}", self.lr)));
        }
        if self.batch_groups == 0 || self.epochs == 0 {
            return Err(Error::InvalidArgument("batch_groups and epochs must be at least 1".into()));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::InvalidArgument(format!("delta must lie in (0, 1], got {}", self.delta)));
        }
        Ok(())
    }
}

/// Instances sharing a premise, by position in the dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSpec {
    pub group_id: String,
    pub members: Vec<usize>,
    /// Exactly one hypothesis per label.
    pub complete: bool,
}

/// Groups instances by `group_id`, in order of first appearance. Incomplete groups
/// are kept (they still feed classification) and reported with a warning.
pub fn group_instances(dataset: &[Instance]) -> Vec<GroupSpec> {
    let mut order: Vec<String> = Vec::new();
    let mut members: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, inst) in dataset.iter().enumerate() {
        let e = members.entry(&inst.group_id).or_default();
        if e.is_empty() {
            order.push(inst.group_id.clone());
        }
        e.push(i);
    }
    order
        .into_iter()
        .map(|g| {
            let m = members.remove(g.as_str()).unwrap_or_default();
            let labels: Vec<Label> = m.iter().map(|&i| dataset[i].label).collect();
            let complete = labels.len() == 3 && Label::ALL.iter().all(|l| labels.contains(l));
            if !complete {
                log::warn!(
                    "group {g} has labels {:?}; excluded from the triplet term",
                    labels.iter().map(|l| l.name()).collect::<Vec<_>>()
                );
            }
            GroupSpec { group_id: g, members: m, complete }
        })
        .collect()
}

/// Shuffled group indices for one epoch, chunked into batches.
pub fn make_batches(groups: usize, batch_groups: usize, seed: u64, epoch: usize) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..groups).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    idx.shuffle(&mut rng);
    idx.chunks(batch_groups.max(1)).map(<[usize]>::to_vec).collect()
}

/// Builds the graphs of every premise group.
pub fn prepare_dataset(dataset: &[Instance], table: &EmbeddingTable, fuse: FuseOptions) -> Result<Vec<PreparedGroup>> {
    group_instances(dataset)
        .par_iter()
        .map(|g| prepare_group(dataset, &g.members, table, fuse))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub l_exp: f64,
    pub l_cls: f64,
    pub l_trip: f64,
    pub total: f64,
    pub dev_macro_f1: f64,
}

impl EpochLog {
    pub const CSV_HEADER: &'static str = "epoch,l_exp,l_cls,l_trip,total,dev_macro_f1";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.epoch, self.l_exp, self.l_cls, self.l_trip, self.total, self.dev_macro_f1
        )
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrainReport {
    pub history: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_dev_macro_f1: f64,
    pub best_checkpoint: Option<PathBuf>,
    pub wall_clock_secs: f64,
    pub early_stopped: bool,
}

/// Where training writes its artifacts; all optional.
#[derive(Debug, Clone, Default)]
pub struct TrainOutputs {
    /// Best-dev checkpoint.
    pub checkpoint: Option<PathBuf>,
    /// Per-epoch CSV log.
    pub log: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, Default)]
struct GroupLoss {
    l_exp: f64,
    l_cls: f64,
    l_trip: f64,
    total: f64,
}

fn group_step(store: &ParameterStore, group: &PreparedGroup, masks: &GroupMasks) -> Result<(GroupLoss, Vec<Array>)> {
    let mut tape = Tape::new();
    let p = store.bind_for(&mut tape, &group.relations())?;
    let out = forward_group(&mut tape, &p, group, masks)?;
    let loss = GroupLoss {
        l_exp: tape.value(out.l_exp).item(),
        l_cls: tape.value(out.l_cls).item(),
        l_trip: tape.value(out.l_trip).item(),
        total: tape.value(out.total).item(),
    };
    if !loss.total.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite loss in group {}: l_exp={} l_cls={} l_trip={}",
            group.group_id, loss.l_exp, loss.l_cls, loss.l_trip
        )));
    }
    let grads = tape.backward(out.total)?;
    let g = p.gradients(&grads, store.arrays());
    tape.reset();
    Ok((loss, g))
}

fn mask_seed(seed: u64, epoch: usize, group: usize) -> u64 {
    seed.wrapping_mul(0x2545_F491_4F6C_DD1D)
        ^ (epoch as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (group as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9)
}

/// Trains from a fresh initialization seeded by `cfg.seed`.
pub fn train(
    dataset: &[Instance],
    table: &EmbeddingTable,
    model_cfg: &ModelConfig,
    cfg: &TrainConfig,
    dev: Option<(&[Instance], &EmbeddingTable)>,
    outputs: &TrainOutputs,
) -> Result<(ParameterStore, TrainReport)> {
    let store = ParameterStore::init(model_cfg, cfg.seed)?;
    train_from(store, dataset, table, cfg, dev, outputs)
}

/// Trains starting from `store`. Without `dev`, the training set doubles as dev set.
pub fn train_from(
    mut store: ParameterStore,
    dataset: &[Instance],
    table: &EmbeddingTable,
    cfg: &TrainConfig,
    dev: Option<(&[Instance], &EmbeddingTable)>,
    outputs: &TrainOutputs,
) -> Result<(ParameterStore, TrainReport)> {
    cfg.validate()?;
    if table.dim() != store.config().d_in {
        return Err(Error::Dimension {
            name: "embedding width".into(),
            expected: store.config().d_in,
            found: table.dim(),
        });
    }
    let started = Instant::now();
    let fuse = cfg.fuse_options();
    let groups = prepare_dataset(dataset, table, fuse)?;
    if groups.is_empty() {
        return Err(Error::InvalidArgument("training set is empty".into()));
    }
    let (dev_data, dev_table) = match dev {
        Some(d) => d,
        None => {
            log::warn!("no dev set given; evaluating on the training set");
            (dataset, table)
        }
    };
    let dev_groups = prepare_dataset(dev_data, dev_table, fuse)?;

    let mut log_file = match &outputs.log {
        Some(path) => {
            let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
            writeln!(f, "{}", EpochLog::CSV_HEADER).map_err(|e| Error::io(path, e))?;
            Some((path.clone(), f))
        }
        None => None,
    };

    let mut opt = AdamW::new(&store, cfg);
    let mut report = TrainReport { best_dev_macro_f1: f64::NEG_INFINITY, ..TrainReport::default() };
    let mut since_best = 0;
    for epoch in 1..=cfg.epochs {
        let mut sums = GroupLoss::default();
        for batch in make_batches(groups.len(), cfg.batch_groups, cfg.seed, epoch) {
            let results: Vec<Result<(GroupLoss, Vec<Array>)>> = batch
                .par_iter()
                .map(|&g| {
                    let mut rng = ChaCha8Rng::seed_from_u64(mask_seed(cfg.seed, epoch, g));
                    let masks = GroupMasks::sample(&groups[g], store.config(), &mut rng);
                    group_step(&store, &groups[g], &masks)
                })
                .collect();
            let mut acc: Option<Vec<Array>> = None;
            for r in results {
                let (loss, grads) = r?;
                sums.l_exp += loss.l_exp;
                sums.l_cls += loss.l_cls;
                sums.l_trip += loss.l_trip;
                sums.total += loss.total;
                match &mut acc {
                    Some(a) => a.iter_mut().zip(&grads).for_each(|(x, g)| x.add_assign(g)),
                    None => acc = Some(grads),
                }
            }
            let mut grads = acc.expect("non-empty batch");
            let inv = 1.0 / batch.len() as f64;
            grads.iter_mut().for_each(|g| g.scale_in_place(inv));
            let norm = global_norm(&grads);
            if !norm.is_finite() {
                return Err(Error::Numeric(format!("non-finite gradient norm at epoch {epoch}")));
            }
            if let Some(c) = cfg.clip_norm {
                clip_global_norm(&mut grads, c);
            }
            opt.step(&mut store, &grads);
        }
        let n = groups.len() as f64;
        let eval = evaluate_prepared(&store, dev_data, &dev_groups, ExtractionMode::default())?;
        let entry = EpochLog {
            epoch,
            l_exp: sums.l_exp / n,
            l_cls: sums.l_cls / n,
            l_trip: sums.l_trip / n,
            total: sums.total / n,
            dev_macro_f1: eval.classification.macro_avg.f1,
        };
        log::info!("{}", entry.csv_row());
        if let Some((path, f)) = &mut log_file {
            writeln!(f, "{}", entry.csv_row()).map_err(|e| Error::io(path.as_path(), e))?;
        }
        report.history.push(entry);
        if entry.dev_macro_f1 > report.best_dev_macro_f1 {
            report.best_dev_macro_f1 = entry.dev_macro_f1;
            report.best_epoch = epoch;
            since_best = 0;
            if let Some(path) = &outputs.checkpoint {
                store.save(path)?;
                report.best_checkpoint = Some(path.clone());
            }
        } else {
            since_best += 1;
            if cfg.patience.is_some_and(|p| since_best >= p) {
                report.early_stopped = true;
                break;
            }
        }
    }
    report.wall_clock_secs = started.elapsed().as_secs_f64();
    Ok((store, report))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub id: String,
    pub gold: Label,
    pub pred: Label,
    pub probabilities: [f64; 3],
    pub selected_edus: Explanation,
    /// Leaf probabilities per document.
    pub leaf_scores: [Vec<f64>; 2],
    pub selected_text: [String; 2],
    /// Premise-to-representation distances, present when the group is complete.
    #[serde(skip)]
    pub distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExplanationSummary {
    /// Mean Jaccard of selected vs gold (slot, ordinal) sets.
    pub mean_jaccard: f64,
    /// Mean over instances with a non-empty gold explanation.
    pub overlap: TextOverlap,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub classification: ClassificationReport,
    pub explanation: ExplanationSummary,
    /// Groups with all three labels where d(a,p) < d(a,neu) < d(a,n), over complete groups.
    pub triplet_ordering: Option<f64>,
    pub predictions: Vec<Prediction>,
}

pub(crate) fn explanation_pairs(e: &Explanation) -> BTreeSet<(u8, usize)> {
    e.doc1.iter().map(|&o| (0, o)).chain(e.doc2.iter().map(|&o| (1, o))).collect()
}

/// Evaluates without dropout and without ever running a backward pass.
pub fn evaluate(
    store: &ParameterStore,
    dataset: &[Instance],
    table: &EmbeddingTable,
    fuse: FuseOptions,
    mode: ExtractionMode,
) -> Result<EvalReport> {
    if table.dim() != store.config().d_in {
        return Err(Error::Dimension {
            name: "embedding width".into(),
            expected: store.config().d_in,
            found: table.dim(),
        });
    }
    let groups = prepare_dataset(dataset, table, fuse)?;
    evaluate_prepared(store, dataset, &groups, mode)
}

fn evaluate_prepared(
    store: &ParameterStore,
    dataset: &[Instance],
    groups: &[PreparedGroup],
    mode: ExtractionMode,
) -> Result<EvalReport> {
    mode.validate()?;
    let per_group: Vec<Result<(Vec<(usize, Prediction)>, Option<bool>)>> = groups
        .par_iter()
        .map(|group| {
            let mut tape = Tape::inference();
            let p = store.bind_for(&mut tape, &group.relations())?;
            let out = forward_group(&mut tape, &p, group, &GroupMasks::none())?;
            let anchor = tape.value(out.anchor).clone();
            let mut preds = Vec::with_capacity(group.hypotheses.len());
            let mut dists = Vec::with_capacity(group.hypotheses.len());
            for (h, (hf, &idx)) in group.hypotheses.iter().zip(out.hypotheses.iter().zip(&group.instance_indices)) {
                let probs = tape.value(hf.probs).data().to_vec();
                let scores = tape.value(hf.leaf_scores).data().to_vec();
                let (s1, s2) = scores.split_at(group.leaf_counts[0]);
                let inst = &dataset[idx];
                let ex = extract_explanations([s1.to_vec(), s2.to_vec()], mode, &inst.doc1, &inst.doc2);
                let rep = tape.value(hf.rep);
                let d = rep
                    .data()
                    .iter()
                    .zip(anchor.data())
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum::<f64>()
                    .sqrt();
                dists.push(d);
                preds.push((
                    idx,
                    Prediction {
                        id: h.id.clone(),
                        gold: h.label,
                        pred: predict(&probs),
                        probabilities: [probs[0], probs[1], probs[2]],
                        selected_edus: ex.selected,
                        leaf_scores: ex.scores,
                        selected_text: ex.text,
                        distance: Some(d),
                    },
                ));
            }
            let ordered = group.triplet.map(|[e, n, c]| dists[e] < dists[n] && dists[n] < dists[c]);
            Ok((preds, ordered))
        })
        .collect();

    let mut all: Vec<(usize, Prediction)> = Vec::with_capacity(dataset.len());
    let mut ordered = Vec::new();
    for r in per_group {
        let (p, o) = r?;
        all.extend(p);
        ordered.extend(o);
    }
    all.sort_by_key(|(i, _)| *i);
    let predictions: Vec<Prediction> = all.into_iter().map(|(_, p)| p).collect();

    let (classification, explanation) = score_predictions(dataset, &predictions)?;
    let triplet_ordering = if ordered.is_empty() {
        None
    } else {
        Some(ordered.iter().filter(|&&o| o).count() as f64 / ordered.len() as f64)
    };
    Ok(EvalReport { classification, explanation, triplet_ordering, predictions })
}

/// Classification and explanation scores of `predictions` against the gold
/// instances with the same ids.
pub fn score_predictions(dataset: &[Instance], predictions: &[Prediction]) -> Result<(ClassificationReport, ExplanationSummary)> {
    let preds: Vec<usize> = predictions.iter().map(|p| p.pred.index()).collect();
    let golds: Vec<usize> = predictions.iter().map(|p| p.gold.index()).collect();
    let classification = classification_metrics(&preds, &golds, 3)?;

    let by_id: BTreeMap<&str, &Instance> = dataset.iter().map(|i| (i.id.as_str(), i)).collect();
    let mut jac = 0.0;
    let mut overlaps = Vec::new();
    for p in predictions {
        let inst = by_id
            .get(p.id.as_str())
            .ok_or_else(|| Error::validation(p.id.as_str(), "prediction for an id missing from the gold data"))?;
        jac += jaccard(&explanation_pairs(&p.selected_edus), &explanation_pairs(&inst.explanation));
        let gold_text = [DocSlot::Doc1, DocSlot::Doc2]
            .map(|s| inst.doc(s).text_of(inst.explanation.get(s)))
            .join(" ");
        let cand = p.selected_text.join(" ");
        if let Some(o) = TextOverlap::of_texts(&cand, &gold_text) {
            overlaps.push(o);
        }
    }
    let explanation = ExplanationSummary {
        mean_jaccard: jac / predictions.len().max(1) as f64,
        overlap: TextOverlap::mean(&overlaps),
    };
    Ok((classification, explanation))
}

/// Writes one JSON object per prediction: id, gold, pred, probabilities, selected_edus.
pub fn write_predictions(path: &Path, predictions: &[Prediction]) -> Result<()> {
    let mut out = String::new();
    for p in predictions {
        let v = serde_json::json!({
            "id": p.id,
            "gold": p.gold.name(),
            "pred": p.pred.name(),
            "probabilities": p.probabilities,
            "selected_edus": {
                "doc1": p.selected_edus.doc1,
                "doc2": p.selected_edus.doc2,
            },
        });
        out.push_str(&v.to_string());
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}

#[derive(Deserialize)]
struct PredictionLine {
    id: String,
    gold: String,
    pred: String,
    #[serde(default)]
    probabilities: Option<[f64; 3]>,
    selected_edus: SelectedLine,
}

#[derive(Deserialize)]
struct SelectedLine {
    doc1: BTreeSet<usize>,
    doc2: BTreeSet<usize>,
}

/// Reads a prediction dump back, resolving selected texts against `dataset`.
/// The gold label of every line must agree with the dataset.
pub fn load_predictions(path: &Path, dataset: &[Instance]) -> Result<Vec<Prediction>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let by_id: BTreeMap<&str, &Instance> = dataset.iter().map(|i| (i.id.as_str(), i)).collect();
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse { line: n + 1, message };
        let raw: PredictionLine = serde_json::from_str(line).map_err(|e| parse_err(e.to_string()))?;
        let gold: Label = raw.gold.parse().map_err(parse_err)?;
        let pred: Label = raw.pred.parse().map_err(parse_err)?;
        let inst = by_id
            .get(raw.id.as_str())
            .ok_or_else(|| Error::validation(raw.id.as_str(), "prediction for an id missing from the gold data"))?;
        if inst.label != gold {
            return Err(Error::validation(
                raw.id.as_str(),
                format!("gold label {gold} in predictions, {} in the data", inst.label),
            ));
        }
        let selected = Explanation { doc1: raw.selected_edus.doc1, doc2: raw.selected_edus.doc2 };
        let selected_text = [inst.doc1.text_of(&selected.doc1), inst.doc2.text_of(&selected.doc2)];
        out.push(Prediction {
            id: raw.id,
            gold,
            pred,
            probabilities: raw.probabilities.unwrap_or([0.0; 3]),
            selected_edus: selected,
            leaf_scores: [Vec::new(), Vec::new()],
            selected_text,
            distance: None,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests;
