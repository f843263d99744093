//! The joint reconstruction training loop.
//!
//! Each step draws a token-budgeted batch of adjacent-sentence pairs and,
//! for every enabled task, corrupts the target with that task's function,
//! computes true add/delete rates between the corrupted input and the clean
//! target, samples covering conditioning ranges, and accumulates the
//! teacher-forced cross-entropy. The step loss is the equally weighted sum
//! of the enabled task losses. Everything draws from streams derived from
//! (seed, task, step), so a task's loss at a given step does not depend on
//! which other tasks are enabled — ablations are config values.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusRecord, ExamplePair, Vocab};
use crate::corruption::{
    apply_noise, compute_rates, sample_noise_probs, sample_tuning_ranges, NoiseToggles,
    TuningRanges,
};
use crate::error::{RestyleError, Result};
use crate::model::{DecodeOptions, Model, ModelConfig, TrainItem};
use crate::rng::stream;
use crate::TokenSeq;

/// The three reconstruction tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    /// Denoising: drop/replace/shuffle noise on the target.
    N,
    /// Back-translation: the current model regenerates the target under a
    /// random context's style.
    Bt,
    /// Noisy back-translation: noise first, then the BT forward pass.
    Nbt,
}

impl Task {
    fn tag(self) -> &'static str {
        match self {
            Task::N => "n",
            Task::Bt => "bt",
            Task::Nbt => "nbt",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Enabled tasks; the final loss is their equally weighted sum.
    pub tasks: Vec<Task>,
    /// Noise sub-types sampled by the N and NBT tasks.
    #[serde(default)]
    pub noise: NoiseToggles,
    pub steps: usize,
    pub tokens_per_batch: usize,
    pub learning_rate: f64,
    pub seed: u64,
    #[serde(default)]
    pub model: ModelConfig,
    /// When false, conditioning ranges are fixed at zero everywhere
    /// (the "-tunable" ablation).
    #[serde(default = "default_true")]
    pub tunable_ranges: bool,
    /// Feed random rather than zero rates to the BT forward pass.
    #[serde(default)]
    pub bt_random_rates: bool,
    #[serde(default = "default_log_every")]
    pub log_every: usize,
}

fn default_true() -> bool {
    true
}

fn default_log_every() -> usize {
    100
}

impl Default for TrainConfig {
    /// Desk-scale defaults: the paper-shaped task mix (N + NBT with drop and
    /// replace noise) at a size that trains in minutes.
    fn default() -> Self {
        TrainConfig {
            tasks: vec![Task::N, Task::Nbt],
            noise: NoiseToggles::default(),
            steps: 2000,
            tokens_per_batch: 4096,
            learning_rate: 1e-3,
            seed: 0,
            model: ModelConfig::default(),
            tunable_ranges: true,
            bt_random_rates: false,
            log_every: 100,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tasks.is_empty() {
            return Err(RestyleError::Config("tasks must be non-empty".into()));
        }
        if self.tokens_per_batch == 0 {
            return Err(RestyleError::Config("tokens_per_batch must be positive".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(RestyleError::Config("learning_rate must be positive".into()));
        }
        self.model.validate()
    }

    pub fn load(path: &std::path::Path) -> Result<TrainConfig> {
        let text = std::fs::read_to_string(path)?;
        let config: TrainConfig = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }
}

/// Per-step metrics, one JSON object per line when serialized.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StepMetrics {
    pub step: usize,
    pub task_losses: BTreeMap<String, f64>,
    pub total_loss: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSummary {
    pub steps: usize,
    pub pairs_used: usize,
    pub pairs_skipped: usize,
    pub vocab_size: usize,
    pub final_loss: Option<f64>,
}

pub struct TrainOutcome {
    pub model: Model,
    pub summary: TrainSummary,
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: usize,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(len: usize) -> Adam {
        Adam { m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        self.t += 1;
        let bc1 = 1.0 - Self::BETA1.powi(self.t as i32);
        let bc2 = 1.0 - Self::BETA2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * g;
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * g * g;
            let m_hat = self.m[i] / bc1;
            let v_hat = self.v[i] / bc2;
            params[i] -= lr * m_hat / (v_hat.sqrt() + Self::EPS);
        }
    }
}

/// Tokenizes records into training pairs, dropping any that would not fit
/// the model (empty sides, overlong context or target).
fn prepare_pairs(
    records: &[CorpusRecord],
    vocab: &Vocab,
    max_seq_len: usize,
) -> (Vec<ExamplePair>, usize) {
    let mut pairs = Vec::with_capacity(records.len());
    let mut skipped = 0;
    for record in records {
        match ExamplePair::from_record(record, vocab) {
            Ok(pair)
                if pair.context.len() <= max_seq_len
                    && pair.target.len() + 1 <= max_seq_len =>
            {
                pairs.push(pair);
            }
            _ => skipped += 1,
        }
    }
    (pairs, skipped)
}

/// Trains a fresh model on adjacent-sentence records. Style ids on the
/// records are ignored entirely. `on_metrics` fires every `log_every` steps
/// and on the final step.
pub fn train(
    config: &TrainConfig,
    records: &[CorpusRecord],
    mut on_metrics: impl FnMut(&StepMetrics),
) -> Result<TrainOutcome> {
    config.validate()?;
    if records.is_empty() {
        return Err(RestyleError::EmptyInput);
    }
    let texts = records
        .iter()
        .flat_map(|r| [r.context.as_str(), r.target.as_str()]);
    let vocab = Vocab::build(texts, config.model.vocab_size);
    let (pairs, skipped) = prepare_pairs(records, &vocab, config.model.max_seq_len);
    if pairs.is_empty() {
        return Err(RestyleError::Config("no usable training pairs".into()));
    }
    let mut model = Model::new(config.model, vocab, config.seed)?;
    let mut adam = Adam::new(model.params().total_len());
    let mut grads = model.grads_buffer();
    let mut final_loss = None;

    for step in 0..config.steps {
        let batch = draw_batch(&pairs, config, step);
        grads.reset();
        let mut task_losses = BTreeMap::new();
        let mut total = 0.0;
        for &task in &config.tasks {
            let items = build_task_items(&model, &pairs, &batch, task, config, step)?;
            let loss = model.batch_loss(&items, Some(&mut grads))?;
            task_losses.insert(task.tag().to_string(), loss);
            total += loss;
        }
        if !total.is_finite() {
            return Err(RestyleError::Diverged { step });
        }
        adam.step(model.params_mut().data_mut(), grads.data(), config.learning_rate);
        final_loss = Some(total);
        if step % config.log_every == 0 || step + 1 == config.steps {
            on_metrics(&StepMetrics { step, task_losses, total_loss: total });
        }
    }

    let summary = TrainSummary {
        steps: config.steps,
        pairs_used: pairs.len(),
        pairs_skipped: skipped,
        vocab_size: model.vocab().size(),
        final_loss,
    };
    Ok(TrainOutcome { model, summary })
}

/// Uniformly draws pair indices until the target-token budget is met.
fn draw_batch(pairs: &[ExamplePair], config: &TrainConfig, step: usize) -> Vec<usize> {
    use rand::Rng;
    let mut rng = stream(config.seed, &["batch".into(), step.into()]);
    let mut indices = Vec::new();
    let mut tokens = 0;
    while tokens < config.tokens_per_batch {
        let idx = rng.random_range(0..pairs.len());
        tokens += pairs[idx].target.len() + 1;
        indices.push(idx);
    }
    indices
}

/// Corrupts one batch for one task. All randomness for (task, step) comes
/// from a single stream consumed in a fixed order: per-example noise and
/// partner draws first, then the batched generation pass (BT/NBT), then
/// per-example range sampling.
fn build_task_items(
    model: &Model,
    pairs: &[ExamplePair],
    batch: &[usize],
    task: Task,
    config: &TrainConfig,
    step: usize,
) -> Result<Vec<TrainItem>> {
    use rand::Rng;
    let mut rng = stream(config.seed, &["task".into(), task.tag().into(), step.into()]);
    let batch_pairs: Vec<&ExamplePair> = batch.iter().map(|&i| &pairs[i]).collect();

    let corrupted: Vec<TokenSeq> = match task {
        Task::N => batch_pairs
            .iter()
            .map(|pair| {
                let spec = sample_noise_probs(&config.noise, &mut rng);
                let partner = &pairs[rng.random_range(0..pairs.len())].target;
                apply_noise(&pair.target, &spec, partner, &mut rng)
            })
            .collect(),
        Task::Bt | Task::Nbt => {
            let mut inputs = Vec::with_capacity(batch_pairs.len());
            let mut contexts = Vec::with_capacity(batch_pairs.len());
            let mut conds = Vec::with_capacity(batch_pairs.len());
            for pair in &batch_pairs {
                let noised = if task == Task::Nbt {
                    let spec = sample_noise_probs(&config.noise, &mut rng);
                    let partner = &pairs[rng.random_range(0..pairs.len())].target;
                    apply_noise(&pair.target, &spec, partner, &mut rng)
                } else {
                    pair.target.clone()
                };
                let context = pairs[rng.random_range(0..pairs.len())].target.clone();
                let cond = if config.bt_random_rates {
                    let rates = crate::corruption::RateStats {
                        add_rate: rng.random_range(0.0..=1.0),
                        delete_rate: rng.random_range(0.0..=1.0),
                    };
                    sample_tuning_ranges(&rates, &mut rng).conditioning()
                } else {
                    TuningRanges::ZERO.conditioning()
                };
                inputs.push(noised);
                contexts.push(context);
                conds.push(cond);
            }
            let opts = DecodeOptions::sample(1.0, model.config().max_seq_len);
            model.generate_styled_batch(&inputs, &contexts, &conds, &opts, &mut rng)?
        }
    };

    Ok(batch_pairs
        .iter()
        .zip(corrupted)
        .map(|(pair, inp)| {
            let ranges = if config.tunable_ranges {
                let rates = compute_rates(&inp, &pair.target);
                sample_tuning_ranges(&rates, &mut rng)
            } else {
                TuningRanges::ZERO
            };
            TrainItem {
                ctx: pair.context.clone(),
                inp,
                tgt: pair.target.clone(),
                cond: ranges.conditioning(),
            }
        })
        .collect())
}

/// Held-out evaluation report: deterministic teacher-forced denoising loss.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HeldoutReport {
    pub pairs: usize,
    pub loss: f64,
    /// ln(vocab_size): the uniform-prediction baseline.
    pub uniform_baseline: f64,
}

/// Teacher-forced N-task loss on held-out pairs with a fixed noise seed.
/// No parameters change; two calls produce identical reports.
pub fn evaluate_heldout(
    model: &Model,
    heldout: &[CorpusRecord],
    noise: &NoiseToggles,
    seed: u64,
) -> Result<HeldoutReport> {
    use rand::Rng;
    let (pairs, _) = prepare_pairs(heldout, model.vocab(), model.config().max_seq_len);
    if pairs.is_empty() {
        return Err(RestyleError::Config("no usable held-out pairs".into()));
    }
    let mut rng = stream(seed, &["heldout".into()]);
    let items: Vec<TrainItem> = pairs
        .iter()
        .map(|pair| {
            let spec = sample_noise_probs(noise, &mut rng);
            let partner = &pairs[rng.random_range(0..pairs.len())].target;
            let inp = apply_noise(&pair.target, &spec, partner, &mut rng);
            let rates = compute_rates(&inp, &pair.target);
            let ranges = sample_tuning_ranges(&rates, &mut rng);
            TrainItem {
                ctx: pair.context.clone(),
                inp,
                tgt: pair.target.clone(),
                cond: ranges.conditioning(),
            }
        })
        .collect();

    // Token-weighted mean over chunks, combined exactly.
    let mut weighted = 0.0;
    let mut tokens = 0usize;
    for chunk in items.chunks(64) {
        let loss = model.batch_loss(chunk, None)?;
        let chunk_tokens: usize = chunk.iter().map(|i| i.tgt.len() + 1).sum();
        weighted += loss * chunk_tokens as f64;
        tokens += chunk_tokens;
    }
    Ok(HeldoutReport {
        pairs: pairs.len(),
        loss: weighted / tokens as f64,
        uniform_baseline: (model.config().vocab_size as f64).ln(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_records(n: usize) -> Vec<CorpusRecord> {
        // A deterministic pseudo-corpus of two-sentence "documents".
        let words = ["red", "blue", "green", "stone", "river", "cloud", "bird", "tree"];
        (0..n)
            .map(|i| {
                let pick = |k: usize| words[(i * 7 + k * 3) % words.len()];
                CorpusRecord {
                    context: format!("{} {} {} .", pick(0), pick(1), pick(2)),
                    target: format!("{} {} {} {} .", pick(3), pick(4), pick(5), pick(6)),
                    style_id: None,
                }
            })
            .collect()
    }

    fn tiny_config(tasks: Vec<Task>, steps: usize) -> TrainConfig {
        TrainConfig {
            tasks,
            steps,
            tokens_per_batch: 64,
            learning_rate: 1e-3,
            seed: 7,
            model: ModelConfig {
                d_model: 16,
                num_layers: 1,
                num_heads: 2,
                ffn_dim: 32,
                vocab_size: 64,
                max_seq_len: 16,
            },
            ..TrainConfig::default()
        }
    }

    #[test]
    fn zero_steps_returns_initialization() {
        let records = tiny_records(20);
        let config = tiny_config(vec![Task::N], 0);
        let out = train(&config, &records, |_| {}).unwrap();
        let fresh = Model::new(config.model, out.model.vocab().clone(), config.seed).unwrap();
        assert_eq!(out.model.params().data(), fresh.params().data());
        assert_eq!(out.summary.final_loss, None);
    }

    #[test]
    fn training_is_bit_reproducible() {
        let records = tiny_records(24);
        let config = tiny_config(vec![Task::N, Task::Nbt], 3);
        let mut losses_a = Vec::new();
        let a = train(&config, &records, |m| losses_a.push(m.total_loss)).unwrap();
        let mut losses_b = Vec::new();
        let b = train(&config, &records, |m| losses_b.push(m.total_loss)).unwrap();
        assert_eq!(losses_a, losses_b);
        assert_eq!(a.model.params().data(), b.model.params().data());
    }

    #[test]
    fn task_losses_decompose_across_configs() {
        let records = tiny_records(24);
        let both = tiny_config(vec![Task::N, Task::Nbt], 1);
        let mut metrics_both = Vec::new();
        train(&both, &records, |m| metrics_both.push(m.clone())).unwrap();
        let n_only = tiny_config(vec![Task::N], 1);
        let mut metrics_n = Vec::new();
        train(&n_only, &records, |m| metrics_n.push(m.clone())).unwrap();
        let nbt_only = tiny_config(vec![Task::Nbt], 1);
        let mut metrics_nbt = Vec::new();
        train(&nbt_only, &records, |m| metrics_nbt.push(m.clone())).unwrap();

        let joint = &metrics_both[0];
        assert_eq!(joint.task_losses["n"], metrics_n[0].task_losses["n"]);
        assert_eq!(joint.task_losses["nbt"], metrics_nbt[0].task_losses["nbt"]);
        let sum: f64 = joint.task_losses.values().sum();
        assert!((joint.total_loss - sum).abs() < 1e-12);
    }

    #[test]
    fn ablation_task_sets_complete() {
        let records = tiny_records(16);
        for tasks in [vec![Task::N, Task::Bt], vec![Task::Nbt]] {
            let config = tiny_config(tasks, 2);
            train(&config, &records, |_| {}).unwrap();
        }
    }

    #[test]
    fn untunable_config_trains_with_zero_ranges() {
        let records = tiny_records(16);
        let mut config = tiny_config(vec![Task::N], 2);
        config.tunable_ranges = false;
        train(&config, &records, |_| {}).unwrap();
    }

    #[test]
    fn bt_random_rates_variant_completes() {
        let records = tiny_records(16);
        let mut config = tiny_config(vec![Task::N, Task::Bt], 2);
        config.bt_random_rates = true;
        train(&config, &records, |_| {}).unwrap();
    }

    #[test]
    fn n_task_loss_trends_down() {
        let records = tiny_records(40);
        let mut config = tiny_config(vec![Task::N], 60);
        config.log_every = 1;
        config.learning_rate = 3e-3;
        let mut losses = Vec::new();
        train(&config, &records, |m| losses.push(m.task_losses["n"])).unwrap();
        let early: f64 = losses[..10].iter().sum::<f64>() / 10.0;
        let late: f64 = losses[losses.len() - 10..].iter().sum::<f64>() / 10.0;
        assert!(late < early, "early {early}, late {late}");
    }

    #[test]
    fn divergence_guard_fires() {
        let records = tiny_records(16);
        let mut config = tiny_config(vec![Task::N], 50);
        // Layer norm re-normalizes merely huge parameters, so the blowup must
        // overflow f64 multiplication to actually produce a non-finite loss.
        config.learning_rate = 1e200;
        match train(&config, &records, |_| {}) {
            Err(RestyleError::Diverged { .. }) => {}
            other => panic!("expected divergence, got {:?}", other.map(|_| ()).err()),
        }
    }

    #[test]
    fn encoder_and_extractor_diverge_after_one_step() {
        let records = tiny_records(20);
        let config = tiny_config(vec![Task::N], 1);
        let out = train(&config, &records, |_| {}).unwrap();
        let params = out.model.params();
        let mut any_diff = false;
        for entry in params.entries() {
            if let Some(suffix) = entry.name.strip_prefix("encoder.") {
                let twin = params.id_by_name(&format!("extractor.{suffix}")).unwrap();
                let twin_entry = params.entry(twin);
                let a = &params.data()[entry.offset..entry.offset + entry.len()];
                let b = &params.data()[twin_entry.offset..twin_entry.offset + twin_entry.len()];
                if a != b {
                    any_diff = true;
                }
            }
        }
        assert!(any_diff, "stacks must untie after the first optimizer step");
    }

    #[test]
    fn heldout_report_is_deterministic_and_near_uniform_at_init() {
        let records = tiny_records(30);
        let config = tiny_config(vec![Task::N], 0);
        let out = train(&config, &records, |_| {}).unwrap();
        let heldout = tiny_records(12);
        let a = evaluate_heldout(&out.model, &heldout, &config.noise, 3).unwrap();
        let b = evaluate_heldout(&out.model, &heldout, &config.noise, 3).unwrap();
        assert_eq!(a.loss, b.loss);
        assert!((a.loss - a.uniform_baseline).abs() / a.uniform_baseline < 0.10);
    }

    #[test]
    fn heldout_loss_improves_with_training() {
        let records = tiny_records(40);
        let heldout = tiny_records(12);
        let base = train(&tiny_config(vec![Task::N], 0), &records, |_| {}).unwrap();
        let before = evaluate_heldout(&base.model, &heldout, &NoiseToggles::default(), 3).unwrap();
        let mut config = tiny_config(vec![Task::N], 60);
        config.learning_rate = 3e-3;
        let trained = train(&config, &records, |_| {}).unwrap();
        let after = evaluate_heldout(&trained.model, &heldout, &NoiseToggles::default(), 3).unwrap();
        assert!(after.loss < before.loss, "{} !< {}", after.loss, before.loss);
    }
}
