//! Synchronous FedAvg over beam clients.
//!
//! Each round: sample available clients, broadcast the global
//! [`ParameterVector`], train locally (fresh Adam state per round,
//! chronological mini-batches), average the returned weights in client-id
//! order and evaluate the new global model on every client's test split.

mod report;

use std::collections::BTreeMap;

use log::{debug, info};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{chrono_split, make_windows, to_matrices, BeamSeries, Scaler, WindowedSample};
use crate::error::{Error, Result};
use crate::model::{count_parameters, Model, ModelConfig, ParameterVector};
use crate::numeric::{adam_step, clip_gradient_norm, mse_loss, AdamConfig, AdamState, Mode};
use crate::seed::derive_seed;
pub use report::{version_string, CsvDocument, ExperimentSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregation {
    /// Coordinate-wise arithmetic mean of participant weights.
    Uniform,
    /// Mean weighted by each participant's training-sample count.
    SampleWeighted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FederationConfig {
    pub rounds: usize,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub aggregation: Aggregation,
    /// Probability that a client participates in a round.
    pub availability_prob: f64,
    pub seed: u64,
    pub optimizer: AdamConfig,
    pub max_norm: f64,
    /// Train participants on a thread pool; results do not change.
    pub parallel_clients: bool,
}

impl Default for FederationConfig {
    fn default() -> Self {
        FederationConfig {
            rounds: 20,
            local_epochs: 5,
            batch_size: 16,
            aggregation: Aggregation::Uniform,
            availability_prob: 1.0,
            seed: 0,
            optimizer: AdamConfig::default(),
            max_norm: 1.0,
            parallel_clients: false,
        }
    }
}

impl FederationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rounds < 1 {
            return Err(Error::Config("federation.rounds must be at least 1".into()));
        }
        if self.local_epochs < 1 {
            return Err(Error::Config("federation.local_epochs must be at least 1".into()));
        }
        if self.batch_size < 1 {
            return Err(Error::Config("federation.batch_size must be at least 1".into()));
        }
        if !(self.availability_prob > 0.0 && self.availability_prob <= 1.0) {
            return Err(Error::Config(format!(
                "federation.availability_prob must lie in (0, 1], got {}",
                self.availability_prob
            )));
        }
        if !(self.max_norm > 0.0 && self.max_norm.is_finite()) {
            return Err(Error::Config(format!(
                "federation.max_norm must be positive, got {}",
                self.max_norm
            )));
        }
        self.optimizer
            .validate()
            .map_err(|e| Error::Config(format!("federation.optimizer: {e}")))
    }
}

/// One beam's local data, already windowed, split and scaled.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientState {
    pub client_id: String,
    pub train: Vec<WindowedSample>,
    pub test: Vec<WindowedSample>,
    pub scaler: Scaler,
    pub sample_count: usize,
}

impl ClientState {
    /// Windows a series, splits it chronologically and scales both parts
    /// with a scaler fitted on the training part.
    pub fn prepare(series: &BeamSeries, window: usize, train_fraction: f64) -> Result<ClientState> {
        let samples = make_windows(series, window)?;
        let (train, test) = chrono_split(&samples, train_fraction)?;
        let scaler = Scaler::fit(&train)?;
        let train = scaler.apply(&train)?;
        let test = scaler.apply(&test)?;
        Ok(ClientState {
            client_id: series.beam_id.clone(),
            sample_count: train.len(),
            train,
            test,
            scaler,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate {
    pub client_id: String,
    pub weights: ParameterVector,
    pub sample_count: usize,
    /// Sample-weighted mean MSE over the final local epoch.
    pub local_train_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundReport {
    /// 1-based.
    pub round_index: usize,
    pub participants: Vec<String>,
    pub avg_train_loss: f64,
    pub per_client_test_loss: BTreeMap<String, f64>,
    pub avg_test_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub model_config: ModelConfig,
    pub federation_config: FederationConfig,
    pub parameter_count: usize,
    pub dataset_digest: String,
    pub rounds: Vec<RoundReport>,
    pub final_avg_test_loss: f64,
    pub final_weights: ParameterVector,
}

/// Half-open ranges of consecutive mini-batches; the last may be short.
pub fn batch_ranges(n: usize, batch_size: usize) -> Vec<std::ops::Range<usize>> {
    (0..n.div_ceil(batch_size))
        .map(|b| b * batch_size..((b + 1) * batch_size).min(n))
        .collect()
}

/// Loads `global_weights`, runs `local_epochs` passes of
/// forward -> MSE -> backward -> clip -> Adam over chronological mini-batches.
pub fn local_train(
    client: &ClientState,
    global_weights: &ParameterVector,
    model_config: &ModelConfig,
    cfg: &FederationConfig,
    dropout_seed: u64,
) -> Result<ClientUpdate> {
    cfg.validate()?;
    if client.train.is_empty() {
        return Err(Error::Config(format!(
            "client {} has no training samples",
            client.client_id
        )));
    }
    let mut model = Model::build(model_config, 0)?;
    model.import_weights(global_weights)?;
    model.set_mode(Mode::Train);

    let batches = batch_ranges(client.train.len(), cfg.batch_size)
        .into_iter()
        .map(|r| to_matrices(&client.train[r]))
        .collect::<Result<Vec<_>>>()?;

    let mut params = global_weights.values().to_vec();
    let mut adam = AdamState::new(params.len(), cfg.optimizer);
    let mut rng = ChaCha8Rng::seed_from_u64(dropout_seed);
    let mut epoch_loss = 0.0;
    for epoch in 0..cfg.local_epochs {
        let mut weighted = 0.0;
        for (x, y) in &batches {
            let (loss, grads) = model.loss_and_gradient(x, y, &mut rng)?;
            if !loss.is_finite() {
                return Err(Error::Numeric(format!(
                    "client {} epoch {epoch}: training loss is {loss}",
                    client.client_id
                )));
            }
            weighted += loss * x.rows() as f64;
            let grads = clip_gradient_norm(grads, cfg.max_norm)?;
            adam_step(&mut params, &grads.flatten(), &mut adam)?;
            model.load_values(&params)?;
        }
        epoch_loss = weighted / client.train.len() as f64;
        debug!("client {} epoch {epoch}: loss {epoch_loss:.6}", client.client_id);
    }
    Ok(ClientUpdate {
        client_id: client.client_id.clone(),
        weights: global_weights.with_values(params)?,
        sample_count: client.sample_count,
        local_train_loss: epoch_loss,
    })
}

/// FedAvg of participant weights, summed in client-id order.
///
/// Uses the running-mean form `m += (v - m) · w / W_cum`, which returns
/// identical updates unchanged, and clamps each coordinate to the range
/// spanned by the updates.
pub fn aggregate(updates: &[ClientUpdate], scheme: Aggregation) -> Result<ParameterVector> {
    let Some(first) = updates.first() else {
        return Err(Error::Contract("aggregate needs at least one update".into()));
    };
    for u in updates {
        first.weights.check_compatible(&u.weights)?;
    }
    let mut ordered: Vec<&ClientUpdate> = updates.iter().collect();
    ordered.sort_by(|a, b| a.client_id.cmp(&b.client_id));

    let weight_of = |u: &ClientUpdate| match scheme {
        Aggregation::Uniform => 1.0,
        Aggregation::SampleWeighted => u.sample_count as f64,
    };
    if scheme == Aggregation::SampleWeighted && ordered.iter().all(|u| u.sample_count == 0) {
        return Err(Error::Contract(
            "sample-weighted aggregation with zero total samples".into(),
        ));
    }

    let mut mean = ordered[0].weights.values().to_vec();
    let mut lo = mean.clone();
    let mut hi = mean.clone();
    let mut cumulative = weight_of(ordered[0]);
    for u in &ordered[1..] {
        let w = weight_of(u);
        if w == 0.0 {
            continue;
        }
        if cumulative == 0.0 {
            mean.copy_from_slice(u.weights.values());
            cumulative = w;
        } else {
            cumulative += w;
            let t = w / cumulative;
            for (m, &v) in mean.iter_mut().zip(u.weights.values()) {
                *m += (v - *m) * t;
            }
        }
        for ((l, h), &v) in lo.iter_mut().zip(hi.iter_mut()).zip(u.weights.values()) {
            *l = l.min(v);
            *h = h.max(v);
        }
    }
    for ((m, &l), &h) in mean.iter_mut().zip(&lo).zip(&hi) {
        *m = m.clamp(l, h);
    }
    first.weights.with_values(mean)
}

/// Eval-mode MSE of `weights` on each client's test split, and their unweighted mean.
pub fn evaluate_global(
    weights: &ParameterVector,
    clients: &[ClientState],
    model_config: &ModelConfig,
) -> Result<(BTreeMap<String, f64>, f64)> {
    if clients.is_empty() {
        return Err(Error::Contract("evaluation needs at least one client".into()));
    }
    let mut model = Model::build(model_config, 0)?;
    model.import_weights(weights)?;
    let mut losses = BTreeMap::new();
    for c in clients {
        if c.test.is_empty() {
            return Err(Error::Config(format!("client {} has an empty test set", c.client_id)));
        }
        let (x, y) = to_matrices(&c.test)?;
        let (loss, _) = mse_loss(&model.predict(&x)?, &y)?;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("client {} test loss is {loss}", c.client_id)));
        }
        losses.insert(c.client_id.clone(), loss);
    }
    let avg = losses.values().sum::<f64>() / losses.len() as f64;
    Ok((losses, avg))
}

/// Seed of the dropout stream for one client in one round.
pub fn client_round_seed(base: u64, client_id: &str, round_index: usize) -> u64 {
    derive_seed(base, &format!("dropout/{client_id}"), &[round_index as u64])
}

/// Indices of clients participating in a round; at least one is always drawn.
pub fn sample_participants(n_clients: usize, availability_prob: f64, seed: u64, round_index: usize) -> Vec<usize> {
    if availability_prob >= 1.0 {
        return (0..n_clients).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "availability", &[round_index as u64]));
    loop {
        let picked: Vec<usize> = (0..n_clients)
            .filter(|_| rng.gen::<f64>() < availability_prob)
            .collect();
        if !picked.is_empty() || n_clients == 0 {
            return picked;
        }
    }
}

pub fn run_round(
    global_weights: &ParameterVector,
    clients: &[ClientState],
    model_config: &ModelConfig,
    cfg: &FederationConfig,
    round_index: usize,
) -> Result<(ParameterVector, RoundReport)> {
    if clients.is_empty() {
        return Err(Error::Config("a federated round needs at least one client".into()));
    }
    cfg.validate()?;
    let participants: Vec<&ClientState> =
        sample_participants(clients.len(), cfg.availability_prob, cfg.seed, round_index)
            .into_iter()
            .map(|i| &clients[i])
            .collect();

    let train_one = |c: &&ClientState| {
        let seed = client_round_seed(cfg.seed, &c.client_id, round_index);
        local_train(c, global_weights, model_config, cfg, seed)
    };
    let updates: Vec<ClientUpdate> = if cfg.parallel_clients {
        participants.par_iter().map(train_one).collect::<Result<_>>()?
    } else {
        participants.iter().map(train_one).collect::<Result<_>>()?
    };

    let new_weights = aggregate(&updates, cfg.aggregation)?;
    let (per_client_test_loss, avg_test_loss) = evaluate_global(&new_weights, clients, model_config)?;
    let avg_train_loss = updates.iter().map(|u| u.local_train_loss).sum::<f64>() / updates.len() as f64;
    let report = RoundReport {
        round_index,
        participants: updates.iter().map(|u| u.client_id.clone()).collect(),
        avg_train_loss,
        per_client_test_loss,
        avg_test_loss,
    };
    Ok((new_weights, report))
}

/// Builds the global model from `fed_config.seed` and runs all rounds.
pub fn run_experiment(
    model_config: &ModelConfig,
    fed_config: &FederationConfig,
    clients: &[ClientState],
) -> Result<ExperimentReport> {
    fed_config.validate()?;
    let mut weights = Model::build(model_config, fed_config.seed)?.export_weights();
    let mut rounds = Vec::with_capacity(fed_config.rounds);
    for round_index in 1..=fed_config.rounds {
        let (next, report) = run_round(&weights, clients, model_config, fed_config, round_index)?;
        info!(
            "{} round {round_index}/{}: train {:.6} test {:.6}",
            model_config.kind.label(),
            fed_config.rounds,
            report.avg_train_loss,
            report.avg_test_loss
        );
        weights = next;
        rounds.push(report);
    }
    let final_avg_test_loss = rounds.last().map_or(f64::NAN, |r| r.avg_test_loss);
    Ok(ExperimentReport {
        model_config: model_config.clone(),
        federation_config: fed_config.clone(),
        parameter_count: count_parameters(model_config)?,
        dataset_digest: dataset_digest(clients),
        rounds,
        final_avg_test_loss,
        final_weights: weights,
    })
}

/// SHA-256 over every client's scaled train/test samples, in client-id order.
pub fn dataset_digest(clients: &[ClientState]) -> String {
    let mut ordered: Vec<&ClientState> = clients.iter().collect();
    ordered.sort_by(|a, b| a.client_id.cmp(&b.client_id));
    let mut h = Sha256::new();
    for c in ordered {
        h.update((c.client_id.len() as u64).to_le_bytes());
        h.update(c.client_id.as_bytes());
        for split in [&c.train, &c.test] {
            h.update((split.len() as u64).to_le_bytes());
            for s in split.iter() {
                for v in s.features.iter().chain(&s.target) {
                    h.update(v.to_le_bytes());
                }
            }
        }
    }
    hex::encode(h.finalize())
}
