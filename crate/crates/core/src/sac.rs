//! Centralised Soft Actor-Critic: squashed-Gaussian actor, twin critics with
//! Polyak-averaged targets, a ring replay buffer, periodic batched updates,
//! and the deployment mode that keeps learning online from pre-trained
//! weights.

use std::fs;
use std::path::Path;

use ndarray::{concatenate, s, Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::agents::{BaselineAgent, RbcSchedule};
use crate::data::Dataset;
use crate::env::{observation_len, observation_names, simulate, ActionLayout, ActionVector, DistrictEnv, EnvConfig, EpisodeTrace, Observation};
use crate::metrics::{score, CostReport};
use crate::neural::{clamp_log_std, Adam, ForwardCache, Mlp, LOG_STD_MAX, LOG_STD_MIN, SQUASH_EPS};
use crate::reward::{reward, RewardConfig};

#[derive(Debug, thiserror::Error)]
pub enum SacError {
    #[error("replay buffer holds {have} transitions, minibatch needs {need}")]
    InsufficientData { have: usize, need: usize },
    #[error("district layout mismatch: agent expects {expected}, dataset has {found}")]
    LayoutMismatch { expected: String, found: String },
    #[error("invalid SAC config: {0}")]
    Config(String),
    #[error("transition does not fit the buffer: {0}")]
    Transition(String),
    #[error(transparent)]
    Neural(#[from] crate::neural::NeuralError),
    #[error(transparent)]
    Env(#[from] crate::env::EnvError),
    #[error(transparent)]
    Metrics(#[from] crate::metrics::MetricsError),
    #[error("checkpoint {path}: {detail}")]
    Checkpoint { path: String, detail: String },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = SacError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SacConfig {
    pub buffer_capacity: usize,
    pub minibatch: usize,
    pub gamma: f64,
    /// Entropy temperature, held fixed.
    pub alpha: f64,
    pub update_interval_steps: usize,
    pub learning_rate: f64,
    pub tau: f64,
    pub hidden: usize,
    pub hidden_layers: usize,
    pub gradient_updates_per_interval: usize,
    pub warmup_random_steps: usize,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self::training()
    }
}

impl SacConfig {
    /// Hyperparameters used while pre-training.
    pub fn training() -> Self {
        Self {
            buffer_capacity: 2_000_000,
            minibatch: 1024,
            gamma: 0.9,
            alpha: 0.2,
            update_interval_steps: 168,
            learning_rate: 5e-4,
            tau: 3e-3,
            hidden: 256,
            hidden_layers: 2,
            gradient_updates_per_interval: 168,
            warmup_random_steps: 168,
        }
    }

    /// Hyperparameters used when deploying a pre-trained agent.
    pub fn evaluation() -> Self {
        Self {
            minibatch: 64,
            learning_rate: 1e-4,
            ..Self::training()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let problem = if !(0.0..1.0).contains(&self.gamma) {
            "gamma must be in [0, 1)"
        } else if !(self.tau > 0.0 && self.tau <= 1.0) {
            "tau must be in (0, 1]"
        } else if self.minibatch == 0 || self.buffer_capacity < self.minibatch {
            "minibatch must be positive and no larger than the buffer"
        } else if self.update_interval_steps == 0 {
            "update_interval_steps must be positive"
        } else if self.hidden == 0 || self.hidden_layers == 0 {
            "hidden layer size and count must be positive"
        } else if !(self.learning_rate > 0.0 && self.alpha >= 0.0) {
            "learning_rate must be positive and alpha non-negative"
        } else {
            return Ok(());
        };
        Err(SacError::Config(problem.into()))
    }
}

/// One `(s, a, r, s', done)` tuple with normalised observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Vec<f64>,
    pub action: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f64>,
    pub done: bool,
}

/// Minibatch in matrix form.
#[derive(Debug, Clone)]
pub struct Batch {
    pub states: Array2<f64>,
    pub actions: Array2<f64>,
    pub rewards: Array1<f64>,
    pub next_states: Array2<f64>,
    pub dones: Array1<f64>,
}

/// Bounded ring of transitions; the oldest entry is overwritten once full.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    obs_dim: usize,
    act_dim: usize,
    states: Vec<f64>,
    actions: Vec<f64>,
    rewards: Vec<f64>,
    next_states: Vec<f64>,
    dones: Vec<bool>,
    cursor: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize, obs_dim: usize, act_dim: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            obs_dim,
            act_dim,
            states: Vec::new(),
            actions: Vec::new(),
            rewards: Vec::new(),
            next_states: Vec::new(),
            dones: Vec::new(),
            cursor: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) -> Result<()> {
        if t.state.len() != self.obs_dim || t.next_state.len() != self.obs_dim || t.action.len() != self.act_dim {
            return Err(SacError::Transition(format!(
                "expected obs {} / action {}, got {} / {} / {}",
                self.obs_dim,
                self.act_dim,
                t.state.len(),
                t.action.len(),
                t.next_state.len()
            )));
        }
        if !(-1.0..=1.0).contains(&t.reward) {
            return Err(SacError::Transition(format!("reward {} outside [-1, 1]", t.reward)));
        }
        if self.len() < self.capacity {
            self.states.extend(&t.state);
            self.actions.extend(&t.action);
            self.rewards.push(t.reward);
            self.next_states.extend(&t.next_state);
            self.dones.push(t.done);
        } else {
            let i = self.cursor;
            let (o, a) = (self.obs_dim, self.act_dim);
            self.states[i * o..(i + 1) * o].copy_from_slice(&t.state);
            self.actions[i * a..(i + 1) * a].copy_from_slice(&t.action);
            self.rewards[i] = t.reward;
            self.next_states[i * o..(i + 1) * o].copy_from_slice(&t.next_state);
            self.dones[i] = t.done;
        }
        self.cursor = (self.cursor + 1) % self.capacity;
        Ok(())
    }

    /// Transition at storage slot `i`.
    pub fn get(&self, i: usize) -> Option<Transition> {
        (i < self.len()).then(|| {
            let (o, a) = (self.obs_dim, self.act_dim);
            Transition {
                state: self.states[i * o..(i + 1) * o].to_vec(),
                action: self.actions[i * a..(i + 1) * a].to_vec(),
                reward: self.rewards[i],
                next_state: self.next_states[i * o..(i + 1) * o].to_vec(),
                done: self.dones[i],
            }
        })
    }

    pub fn iter(&self) -> impl Iterator<Item = Transition> + '_ {
        (0..self.len()).filter_map(|i| self.get(i))
    }

    /// Uniform sample with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, batch: usize, rng: &mut R) -> Result<Batch> {
        if self.len() < batch || batch == 0 {
            return Err(SacError::InsufficientData {
                have: self.len(),
                need: batch.max(1),
            });
        }
        let (o, a) = (self.obs_dim, self.act_dim);
        let mut states = Array2::zeros((batch, o));
        let mut actions = Array2::zeros((batch, a));
        let mut next_states = Array2::zeros((batch, o));
        let mut rewards = Array1::zeros(batch);
        let mut dones = Array1::zeros(batch);
        for row in 0..batch {
            let i = rng.random_range(0..self.len());
            for j in 0..o {
                states[[row, j]] = self.states[i * o + j];
                next_states[[row, j]] = self.next_states[i * o + j];
            }
            for j in 0..a {
                actions[[row, j]] = self.actions[i * a + j];
            }
            rewards[row] = self.rewards[i];
            dones[row] = if self.dones[i] { 1.0 } else { 0.0 };
        }
        Ok(Batch {
            states,
            actions,
            rewards,
            next_states,
            dones,
        })
    }
}

/// Per-entry min-max scaling to `[0, 1]`; constant entries map to 0.5.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservationScaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl ObservationScaler {
    /// Ranges from scanning every hour of the dataset; state-of-charge
    /// entries use their full `[0, 1]` range.
    pub fn from_dataset(dataset: &Dataset) -> Self {
        let len = observation_len(dataset);
        let mut min = vec![f64::INFINITY; len];
        let mut max = vec![f64::NEG_INFINITY; len];
        let env = DistrictEnv::new(dataset, EnvConfig::default()).expect("default config is valid");
        let state = env.state().clone();
        for t in 0..dataset.horizon() {
            let obs = crate::env::build_observation(&state, dataset, t);
            for (k, &v) in obs.values().iter().enumerate() {
                min[k] = min[k].min(v);
                max[k] = max[k].max(v);
            }
        }
        for (k, name) in observation_names(dataset).iter().enumerate() {
            if name.contains("storage_soc") {
                min[k] = 0.0;
                max[k] = 1.0;
            }
        }
        Self { min, max }
    }

    pub fn normalize(&self, raw: &Observation) -> Vec<f64> {
        raw.values()
            .iter()
            .zip(self.min.iter().zip(&self.max))
            .map(|(&v, (&lo, &hi))| if hi > lo { (v - lo) / (hi - lo) } else { 0.5 })
            .collect()
    }
}

/// Squashed-Gaussian policy evaluated on a batch, with what the backward
/// pass needs.
struct PolicyEval {
    actions: Array2<f64>,
    log_prob: Array1<f64>,
    noise: Array2<f64>,
    std: Array2<f64>,
    /// 1 where the raw log-std lies inside the clamp range.
    log_std_live: Array2<f64>,
    cache: ForwardCache,
}

fn evaluate_policy(actor: &Mlp, states: ArrayView2<f64>, noise: Array2<f64>) -> Result<PolicyEval> {
    let (out, cache) = actor.forward(states)?;
    let d = noise.ncols();
    if out.ncols() != 2 * d {
        return Err(crate::neural::NeuralError::ShapeMismatch(format!(
            "actor emits {} values, expected {}",
            out.ncols(),
            2 * d
        ))
        .into());
    }
    let batch = out.nrows();
    let half_log_two_pi = 0.5 * (2.0 * std::f64::consts::PI).ln();
    let mut actions = Array2::zeros((batch, d));
    let mut std = Array2::zeros((batch, d));
    let mut live = Array2::zeros((batch, d));
    let mut log_prob = Array1::zeros(batch);
    for i in 0..batch {
        let mut lp = 0.0;
        for j in 0..d {
            let raw = out[[i, d + j]];
            let ls = clamp_log_std(raw);
            let sd = ls.exp();
            let eps = noise[[i, j]];
            let a = (out[[i, j]] + sd * eps).tanh();
            lp += -0.5 * eps * eps - ls - half_log_two_pi - (1.0 - a * a + SQUASH_EPS).ln();
            actions[[i, j]] = a;
            std[[i, j]] = sd;
            live[[i, j]] = if raw > LOG_STD_MIN && raw < LOG_STD_MAX { 1.0 } else { 0.0 };
        }
        log_prob[i] = lp;
    }
    Ok(PolicyEval {
        actions,
        log_prob,
        noise,
        std,
        log_std_live: live,
        cache,
    })
}

impl PolicyEval {
    /// Gradient with respect to the actor output given `dL/da` and `dL/dlog_prob`.
    fn output_gradient(&self, d_action: ArrayView2<f64>, d_log_prob: ArrayView2<f64>) -> Array2<f64> {
        let (batch, d) = self.actions.dim();
        let mut grad = Array2::zeros((batch, 2 * d));
        for i in 0..batch {
            let dlp = d_log_prob[[i, 0]];
            for j in 0..d {
                let a = self.actions[[i, j]];
                let one_minus = 1.0 - a * a;
                let g_u = d_action[[i, j]] * one_minus + dlp * 2.0 * a * one_minus / (one_minus + SQUASH_EPS);
                grad[[i, j]] = g_u;
                grad[[i, d + j]] = (g_u * self.std[[i, j]] * self.noise[[i, j]] - dlp) * self.log_std_live[[i, j]];
            }
        }
        grad
    }
}

fn standard_normal<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Array2<f64> {
    Array2::from_shape_simple_fn((rows, cols), || rng.sample(StandardNormal))
}

/// Mean losses over the iterations of one [`update`] call.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LossDiagnostics {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub mean_log_prob: f64,
    pub iterations: usize,
}

/// Actor, twin critics, their targets, and the optimiser states.
#[derive(Debug, Clone, PartialEq)]
pub struct SacAgent {
    pub actor: Mlp,
    pub critics: [Mlp; 2],
    pub targets: [Mlp; 2],
    pub actor_opt: Adam,
    pub critic_opts: [Adam; 2],
    pub obs_dim: usize,
    pub act_dim: usize,
    /// Structural fingerprint of the district the agent was built for.
    pub district: Option<String>,
}

/// Per building: `p` if it has PV, `d` if it has DHW storage.
pub fn district_signature(dataset: &Dataset) -> String {
    dataset
        .buildings
        .iter()
        .map(|b| {
            let mut s = String::new();
            s.push(if b.has_pv() { 'p' } else { '-' });
            s.push(if b.has_dhw_storage() { 'd' } else { '-' });
            s
        })
        .collect::<Vec<_>>()
        .join(",")
}

impl SacAgent {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, act_dim: usize, config: &SacConfig, rng: &mut R) -> Self {
        let hidden = vec![config.hidden; config.hidden_layers];
        let sizes = |input: usize, output: usize| {
            let mut s = vec![input];
            s.extend(&hidden);
            s.push(output);
            s
        };
        let actor = Mlp::new(&sizes(obs_dim, 2 * act_dim), rng);
        let critic_sizes = sizes(obs_dim + act_dim, 1);
        let critics = [Mlp::new(&critic_sizes, rng), Mlp::new(&critic_sizes, rng)];
        let targets = critics.clone();
        Self {
            actor_opt: Adam::new(&actor, config.learning_rate),
            critic_opts: [
                Adam::new(&critics[0], config.learning_rate),
                Adam::new(&critics[1], config.learning_rate),
            ],
            actor,
            critics,
            targets,
            obs_dim,
            act_dim,
            district: None,
        }
    }

    /// Agent sized for a district.
    pub fn for_dataset<R: Rng + ?Sized>(dataset: &Dataset, config: &SacConfig, rng: &mut R) -> Self {
        let mut agent = Self::new(
            observation_len(dataset),
            ActionLayout::for_dataset(dataset).len(),
            config,
            rng,
        );
        agent.district = Some(district_signature(dataset));
        agent
    }

    pub fn check_layout(&self, dataset: &Dataset) -> Result<()> {
        let obs = observation_len(dataset);
        let act = ActionLayout::for_dataset(dataset).len();
        let sig = district_signature(dataset);
        let dims_ok = obs == self.obs_dim && act == self.act_dim;
        let sig_ok = self.district.as_ref().is_none_or(|s| *s == sig);
        if dims_ok && sig_ok {
            Ok(())
        } else {
            Err(SacError::LayoutMismatch {
                expected: format!(
                    "obs {} / actions {} [{}]",
                    self.obs_dim,
                    self.act_dim,
                    self.district.as_deref().unwrap_or("any")
                ),
                found: format!("obs {obs} / actions {act} [{sig}]"),
            })
        }
    }

    /// Sets the learning rate of every optimiser.
    pub fn set_learning_rate(&mut self, lr: f64) {
        self.actor_opt.learning_rate = lr;
        for opt in &mut self.critic_opts {
            opt.learning_rate = lr;
        }
    }

    /// Squashed mean and log-std of the policy at one normalised state.
    pub fn policy_head(&self, state: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        let out = self.actor.predict_one(state)?;
        let (mean, log_std) = out.split_at(self.act_dim);
        Ok((mean.to_vec(), log_std.iter().map(|&v| clamp_log_std(v)).collect()))
    }

    /// Samples an action, or returns `tanh(mean)` when `deterministic`.
    pub fn act<R: Rng + ?Sized>(&self, state: &[f64], rng: &mut R, deterministic: bool) -> Result<ActionVector> {
        let (mean, log_std) = self.policy_head(state)?;
        let values = if deterministic {
            mean.iter().map(|m| m.tanh()).collect()
        } else {
            let noise: Vec<f64> = (0..self.act_dim).map(|_| rng.sample(StandardNormal)).collect();
            crate::neural::squashed_gaussian_sample(&mean, &log_std, &noise).action
        };
        Ok(ActionVector::new(values))
    }

    /// Minimum of both critics at `(state, action)`.
    pub fn q_min(&self, state: &[f64], action: &[f64]) -> Result<f64> {
        let input: Vec<f64> = state.iter().chain(action).copied().collect();
        let q1 = self.critics[0].predict_one(&input)?[0];
        let q2 = self.critics[1].predict_one(&input)?[0];
        Ok(q1.min(q2))
    }

    /// Bootstrapped targets `r + gamma (1 - done) (min Q'(s', a') - alpha log pi(a'|s'))`
    /// with `a' = tanh(mean + std * noise)` drawn from the current actor.
    pub fn critic_target(&self, batch: &Batch, noise: Array2<f64>, config: &SacConfig) -> Result<Array1<f64>> {
        let next = evaluate_policy(&self.actor, batch.next_states.view(), noise)?;
        let input = concatenate![Axis(1), batch.next_states, next.actions];
        let q1 = self.targets[0].predict(input.view())?;
        let q2 = self.targets[1].predict(input.view())?;
        let mut y = Array1::zeros(batch.rewards.len());
        for i in 0..y.len() {
            let soft_value = q1[[i, 0]].min(q2[[i, 0]]) - config.alpha * next.log_prob[i];
            y[i] = batch.rewards[i] + config.gamma * (1.0 - batch.dones[i]) * soft_value;
        }
        Ok(y)
    }

    /// Mean-squared-error step of both critics toward `targets`. Returns the mean loss.
    fn critic_step(&mut self, batch: &Batch, targets: &Array1<f64>) -> Result<f64> {
        let input = concatenate![Axis(1), batch.states, batch.actions];
        let n = targets.len() as f64;
        let mut loss = 0.0;
        for k in 0..2 {
            let (q, cache) = self.critics[k].forward(input.view())?;
            let diff = &q.column(0) - targets;
            loss += diff.mapv(|v| v * v).sum() / n;
            let grad_out = diff.mapv(|v| 2.0 * v / n).insert_axis(Axis(1));
            let (grads, _) = self.critics[k].backward(&cache, grad_out.view())?;
            self.critic_opts[k].step(&mut self.critics[k], &grads)?;
        }
        Ok(loss / 2.0)
    }

    /// Actor loss `mean(alpha log pi(a|s) - min Q(s, a))` and its gradient
    /// with respect to the actor parameters, for reparameterised actions.
    pub fn actor_loss_and_gradient(
        &self,
        states: ArrayView2<f64>,
        noise: Array2<f64>,
        alpha: f64,
    ) -> Result<(f64, f64, crate::neural::Gradients)> {
        let batch = states.nrows();
        let n = batch as f64;
        let policy = evaluate_policy(&self.actor, states, noise)?;
        let input = concatenate![Axis(1), states, policy.actions];
        let (q1, cache1) = self.critics[0].forward(input.view())?;
        let (q2, cache2) = self.critics[1].forward(input.view())?;
        let mut d_q1 = Array2::zeros((batch, 1));
        let mut d_q2 = Array2::zeros((batch, 1));
        let mut loss = 0.0;
        for i in 0..batch {
            let (a, b) = (q1[[i, 0]], q2[[i, 0]]);
            if a <= b {
                d_q1[[i, 0]] = -1.0 / n;
            } else {
                d_q2[[i, 0]] = -1.0 / n;
            }
            loss += alpha * policy.log_prob[i] - a.min(b);
        }
        let d_in = self.critics[0].input_gradient(&cache1, d_q1.view())?
            + self.critics[1].input_gradient(&cache2, d_q2.view())?;
        let d_action = d_in.slice(s![.., self.obs_dim..]);
        let d_log_prob = Array2::from_elem((batch, 1), alpha / n);
        let grad_out = policy.output_gradient(d_action, d_log_prob.view());
        let (grads, _) = self.actor.backward(&policy.cache, grad_out.view())?;
        Ok((loss / n, policy.log_prob.mean().unwrap_or(0.0), grads))
    }

    pub fn soft_update_targets(&mut self, tau: f64) -> Result<()> {
        for k in 0..2 {
            self.targets[k].soft_update_from(&self.critics[k], tau)?;
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.actor.all_finite() && self.critics.iter().chain(&self.targets).all(Mlp::all_finite)
    }
}

/// Runs `config.gradient_updates_per_interval` SAC iterations.
pub fn update<R: Rng + ?Sized>(
    buffer: &ReplayBuffer,
    agent: &mut SacAgent,
    config: &SacConfig,
    rng: &mut R,
) -> Result<LossDiagnostics> {
    if buffer.len() < config.minibatch {
        return Err(SacError::InsufficientData {
            have: buffer.len(),
            need: config.minibatch,
        });
    }
    let mut diag = LossDiagnostics::default();
    for _ in 0..config.gradient_updates_per_interval {
        let batch = buffer.sample(config.minibatch, rng)?;
        let target_noise = standard_normal(config.minibatch, agent.act_dim, rng);
        let targets = agent.critic_target(&batch, target_noise, config)?;
        diag.critic_loss += agent.critic_step(&batch, &targets)?;

        let noise = standard_normal(config.minibatch, agent.act_dim, rng);
        let (actor_loss, mean_log_prob, grads) =
            agent.actor_loss_and_gradient(batch.states.view(), noise, config.alpha)?;
        agent.actor_opt.step(&mut agent.actor, &grads)?;
        diag.actor_loss += actor_loss;
        diag.mean_log_prob += mean_log_prob;

        agent.soft_update_targets(config.tau)?;
        diag.iterations += 1;
    }
    if diag.iterations > 0 {
        let n = diag.iterations as f64;
        diag.critic_loss /= n;
        diag.actor_loss /= n;
        diag.mean_log_prob /= n;
    }
    Ok(diag)
}

// ---------------------------------------------------------------------------
// Episode loop

/// Configuration shared by training and deployment runs.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunSettings {
    pub env: EnvConfig,
    pub reward: RewardConfig,
    pub rbc: RbcSchedule,
    pub sac: SacConfig,
}

/// Result of one SAC episode.
#[derive(Debug, Clone)]
pub struct EpisodeResult {
    pub episode: usize,
    pub report: CostReport,
    pub reward_sum: f64,
    pub trace: EpisodeTrace,
    pub last_update: Option<LossDiagnostics>,
}

/// Reference trace of the rule-based controller on a dataset.
pub fn baseline_trace(dataset: &Dataset, env: EnvConfig, default_rbc: &RbcSchedule) -> Result<EpisodeTrace> {
    let schedule = dataset.rbc_schedule.clone().unwrap_or_else(|| default_rbc.clone());
    let agent = BaselineAgent::Rbc(schedule);
    Ok(simulate(dataset, env, |t, hour, _, layout| agent.act(t, hour, layout))?)
}

/// Owns an agent, its replay buffer and random stream across episodes on one dataset.
#[derive(Debug)]
pub struct Trainer<'a> {
    dataset: &'a Dataset,
    settings: RunSettings,
    agent: SacAgent,
    buffer: ReplayBuffer,
    scaler: ObservationScaler,
    baseline: Vec<f64>,
    rng: ChaCha8Rng,
    global_step: usize,
    episodes_done: usize,
    deterministic_actions: bool,
}

impl<'a> Trainer<'a> {
    /// Fresh agent seeded from `seed`.
    pub fn new(dataset: &'a Dataset, settings: RunSettings, seed: u64) -> Result<Self> {
        settings.sac.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let agent = SacAgent::for_dataset(dataset, &settings.sac, &mut rng);
        Self::with_agent(dataset, settings, agent, rng, false)
    }

    /// Continues from a pre-trained agent; acts with the policy mean and
    /// keeps updating online.
    pub fn deploy(dataset: &'a Dataset, settings: RunSettings, mut agent: SacAgent, seed: u64) -> Result<Self> {
        settings.sac.validate()?;
        agent.check_layout(dataset)?;
        agent.set_learning_rate(settings.sac.learning_rate);
        let rng = ChaCha8Rng::seed_from_u64(seed);
        let mut trainer = Self::with_agent(dataset, settings, agent, rng, true)?;
        // the pre-trained policy acts from the first step
        trainer.settings.sac.warmup_random_steps = 0;
        Ok(trainer)
    }

    /// Resumes training an agent loaded from a checkpoint.
    pub fn resume(dataset: &'a Dataset, settings: RunSettings, agent: SacAgent, episodes_done: usize, seed: u64) -> Result<Self> {
        settings.sac.validate()?;
        agent.check_layout(dataset)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(episodes_done as u64);
        let mut trainer = Self::with_agent(dataset, settings, agent, rng, false)?;
        trainer.episodes_done = episodes_done;
        Ok(trainer)
    }

    fn with_agent(
        dataset: &'a Dataset,
        settings: RunSettings,
        agent: SacAgent,
        rng: ChaCha8Rng,
        deterministic_actions: bool,
    ) -> Result<Self> {
        agent.check_layout(dataset)?;
        settings.env.validate()?;
        settings.reward.validate().map_err(SacError::Config)?;
        let baseline = baseline_trace(dataset, settings.env, &settings.rbc)?.e_total;
        Ok(Self {
            dataset,
            buffer: ReplayBuffer::new(settings.sac.buffer_capacity, agent.obs_dim, agent.act_dim),
            scaler: ObservationScaler::from_dataset(dataset),
            settings,
            agent,
            baseline,
            rng,
            global_step: 0,
            episodes_done: 0,
            deterministic_actions,
        })
    }

    pub fn agent(&self) -> &SacAgent {
        &self.agent
    }

    pub fn into_agent(self) -> SacAgent {
        self.agent
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn episodes_done(&self) -> usize {
        self.episodes_done
    }

    pub fn baseline(&self) -> &[f64] {
        &self.baseline
    }

    /// Rolls out the current policy mean for one episode without learning.
    pub fn evaluate_greedy(&self) -> Result<(CostReport, EpisodeTrace)> {
        let mut failure = None;
        // deterministic actions draw no noise; the stream only satisfies the signature
        let mut unused = ChaCha8Rng::seed_from_u64(0);
        let trace = simulate(self.dataset, self.settings.env, |_, _, obs, layout| {
            let state = self.scaler.normalize(obs);
            match self.agent.act(&state, &mut unused, true) {
                Ok(a) => a,
                Err(e) => {
                    failure.get_or_insert(e);
                    ActionVector::new(vec![0.0; layout.len()])
                }
            }
        })?;
        if let Some(e) = failure {
            return Err(e);
        }
        let report = score(&trace.e_total, &self.baseline, &self.dataset.month_blocks())?;
        Ok((report, trace))
    }

    /// Simulates one full episode, learning as it goes, and scores it
    /// against the rule-based baseline.
    pub fn run_episode(&mut self) -> Result<EpisodeResult> {
        let sac = self.settings.sac.clone();
        let mut env = DistrictEnv::new(self.dataset, self.settings.env)?;
        let mut state = self.scaler.normalize(&env.reset());
        let mut trace = EpisodeTrace::default();
        let mut reward_sum = 0.0;
        let mut last_update = None;
        loop {
            let hour = env.hour();
            let action = if self.global_step < sac.warmup_random_steps {
                ActionVector::new((0..self.agent.act_dim).map(|_| self.rng.random_range(-1.0..=1.0)).collect())
            } else {
                self.agent.act(&state, &mut self.rng, self.deterministic_actions)?
            };
            let outcome = env.step(&action)?;
            let r = reward(outcome.e_total, &outcome.e_i, hour, &action, &self.settings.reward);
            reward_sum += r;
            let next_state = self.scaler.normalize(&outcome.observation);
            trace.record(&outcome, env.state());
            self.buffer.push(Transition {
                state: std::mem::replace(&mut state, next_state.clone()),
                action: action.into_inner(),
                reward: r,
                next_state,
                done: outcome.done,
            })?;
            self.global_step += 1;
            if self.global_step % sac.update_interval_steps == 0 && self.buffer.len() >= sac.minibatch {
                last_update = Some(update(&self.buffer, &mut self.agent, &sac, &mut self.rng)?);
            }
            if outcome.done {
                break;
            }
        }
        let report = score(&trace.e_total, &self.baseline, &self.dataset.month_blocks())?;
        self.episodes_done += 1;
        Ok(EpisodeResult {
            episode: self.episodes_done,
            report,
            reward_sum,
            trace,
            last_update,
        })
    }
}

/// Networks plus per-episode histories from [`train`].
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub agent: SacAgent,
    pub reports: Vec<CostReport>,
    pub reward_sums: Vec<f64>,
}

/// Trains a fresh agent for `episodes` full passes over `dataset`.
pub fn train(dataset: &Dataset, settings: &RunSettings, episodes: usize, seed: u64) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(dataset, settings.clone(), seed)?;
    let mut reports = Vec::with_capacity(episodes);
    let mut reward_sums = Vec::with_capacity(episodes);
    for _ in 0..episodes {
        let result = trainer.run_episode()?;
        log::info!("episode {}: reward {:.3}, {}", result.episode, result.reward_sum, result.report);
        reports.push(result.report);
        reward_sums.push(result.reward_sum);
    }
    Ok(TrainOutcome {
        agent: trainer.into_agent(),
        reports,
        reward_sums,
    })
}

/// Runs a pre-trained agent on a new dataset for `episodes`, adapting online.
pub fn deploy(agent: &SacAgent, dataset: &Dataset, settings: &RunSettings, episodes: usize, seed: u64) -> Result<Vec<CostReport>> {
    let mut trainer = Trainer::deploy(dataset, settings.clone(), agent.clone(), seed)?;
    (0..episodes).map(|_| trainer.run_episode().map(|r| r.report)).collect()
}

// ---------------------------------------------------------------------------
// Checkpoints

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub format_version: u32,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub district: Option<String>,
    pub episodes_completed: usize,
    pub seed: u64,
}

const NET_FILES: [&str; 5] = ["actor.bin", "critic_1.bin", "critic_2.bin", "target_1.bin", "target_2.bin"];
const OPT_FILES: [&str; 3] = ["actor_adam.bin", "critic_1_adam.bin", "critic_2_adam.bin"];
const META_FILE: &str = "meta.toml";

/// Writes every network and optimiser state into `dir`, replacing it atomically.
pub fn save_checkpoint(agent: &SacAgent, meta: &CheckpointMeta, dir: &Path) -> Result<()> {
    let parent = dir.parent().unwrap_or(Path::new("."));
    fs::create_dir_all(parent)?;
    let name = dir.file_name().and_then(|n| n.to_str()).unwrap_or("checkpoint");
    let staging = parent.join(format!(".{name}.partial"));
    if staging.exists() {
        fs::remove_dir_all(&staging)?;
    }
    fs::create_dir_all(&staging)?;
    let nets = [&agent.actor, &agent.critics[0], &agent.critics[1], &agent.targets[0], &agent.targets[1]];
    for (net, file) in nets.iter().zip(NET_FILES) {
        net.save(&staging.join(file))?;
    }
    let opts = [&agent.actor_opt, &agent.critic_opts[0], &agent.critic_opts[1]];
    for (opt, file) in opts.iter().zip(OPT_FILES) {
        opt.save(&staging.join(file))?;
    }
    let text = toml::to_string(meta).map_err(|e| SacError::Checkpoint {
        path: dir.display().to_string(),
        detail: e.to_string(),
    })?;
    fs::write(staging.join(META_FILE), text)?;
    if dir.exists() {
        fs::remove_dir_all(dir)?;
    }
    fs::rename(&staging, dir)?;
    Ok(())
}

pub fn load_checkpoint(dir: &Path) -> Result<(SacAgent, CheckpointMeta)> {
    let ctx = |detail: String| SacError::Checkpoint {
        path: dir.display().to_string(),
        detail,
    };
    let meta_path = dir.join(META_FILE);
    let text = fs::read_to_string(&meta_path).map_err(|e| ctx(format!("{}: {e}", meta_path.display())))?;
    let meta: CheckpointMeta = toml::from_str(&text).map_err(|e| ctx(e.to_string()))?;
    let load_net = |file: &str| Mlp::load(&dir.join(file)).map_err(|e| ctx(format!("{file}: {e}")));
    let load_opt = |file: &str| Adam::load(&dir.join(file)).map_err(|e| ctx(format!("{file}: {e}")));
    let agent = SacAgent {
        actor: load_net(NET_FILES[0])?,
        critics: [load_net(NET_FILES[1])?, load_net(NET_FILES[2])?],
        targets: [load_net(NET_FILES[3])?, load_net(NET_FILES[4])?],
        actor_opt: load_opt(OPT_FILES[0])?,
        critic_opts: [load_opt(OPT_FILES[1])?, load_opt(OPT_FILES[2])?],
        obs_dim: meta.obs_dim,
        act_dim: meta.act_dim,
        district: meta.district.clone(),
    };
    if agent.actor.input_size() != meta.obs_dim || agent.actor.output_size() != 2 * meta.act_dim {
        return Err(ctx("actor shape disagrees with meta.toml".into()));
    }
    for net in agent.critics.iter().chain(&agent.targets) {
        if net.input_size() != meta.obs_dim + meta.act_dim || net.output_size() != 1 {
            return Err(ctx("critic shape disagrees with meta.toml".into()));
        }
    }
    Ok((agent, meta))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn tiny_config() -> SacConfig {
        SacConfig {
            minibatch: 4,
            hidden: 8,
            buffer_capacity: 100,
            ..SacConfig::training()
        }
    }

    fn transition(tag: f64) -> Transition {
        Transition {
            state: vec![tag, tag],
            action: vec![0.0],
            reward: 0.5,
            next_state: vec![tag + 1.0, tag + 1.0],
            done: false,
        }
    }

    #[test]
    fn config_presets_and_validation() {
        let t = SacConfig::training();
        assert_eq!((t.minibatch, t.learning_rate), (1024, 5e-4));
        assert_eq!((t.buffer_capacity, t.gamma, t.alpha, t.update_interval_steps, t.tau, t.hidden), (2_000_000, 0.9, 0.2, 168, 3e-3, 256));
        let e = SacConfig::evaluation();
        assert_eq!((e.minibatch, e.learning_rate), (64, 1e-4));
        assert!(t.validate().is_ok() && e.validate().is_ok());
        for bad in [
            SacConfig { tau: 0.0, ..t.clone() },
            SacConfig { gamma: 1.0, ..t.clone() },
            SacConfig { minibatch: 0, ..t.clone() },
            SacConfig { buffer_capacity: 10, ..t.clone() },
        ] {
            assert!(matches!(bad.validate(), Err(SacError::Config(_))));
        }
    }

    #[test]
    fn buffer_overwrites_oldest() {
        let mut buf = ReplayBuffer::new(10, 2, 1);
        for i in 0..13 {
            buf.push(transition(i as f64)).unwrap();
        }
        assert_eq!(buf.len(), 10);
        let mut tags: Vec<f64> = buf.iter().map(|t| t.state[0]).collect();
        tags.sort_by(f64::total_cmp);
        assert_eq!(tags, (3..13).map(|i| i as f64).collect::<Vec<_>>());
    }

    #[test]
    fn buffer_rejects_bad_transitions() {
        let mut buf = ReplayBuffer::new(10, 2, 1);
        let mut t = transition(0.0);
        t.reward = 1.5;
        assert!(buf.push(t).is_err());
        let mut t = transition(0.0);
        t.action = vec![0.0, 0.0];
        assert!(buf.push(t).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(buf.sample(1, &mut rng), Err(SacError::InsufficientData { .. })));
    }

    #[test]
    fn scaler_examples() {
        let d = crate::data::generate_synthetic(2, 3, 1);
        let scaler = ObservationScaler::from_dataset(&d);
        let env = DistrictEnv::new(&d, EnvConfig::default()).unwrap();
        let obs = crate::env::build_observation(env.state(), &d, 12);
        let norm = scaler.normalize(&obs);
        assert!((norm[2] - 12.0 / 23.0).abs() < 1e-15);
        assert!((norm[2] - 0.5217).abs() < 1e-4);
        // month is constant over three days
        assert_eq!(norm[0], 0.5);
        let t_min = d.weather.t_out.iter().copied().fold(f64::INFINITY, f64::min);
        let at_min = d.weather.t_out.iter().position(|&v| v == t_min).unwrap();
        let obs = crate::env::build_observation(env.state(), &d, at_min);
        assert_eq!(scaler.normalize(&obs)[3], 0.0);
        let names = observation_names(&d);
        let soc = names.iter().position(|n| n.starts_with("cooling_storage_soc")).unwrap();
        assert_eq!((scaler.min[soc], scaler.max[soc]), (0.0, 1.0));
    }

    #[test]
    fn terminal_and_myopic_targets_equal_reward() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let config = tiny_config();
        let agent = SacAgent::new(2, 1, &config, &mut rng);
        let batch = Batch {
            states: array![[0.1, 0.2], [0.3, 0.4]],
            actions: array![[0.5], [-0.5]],
            rewards: array![0.7, -0.2],
            next_states: array![[0.2, 0.1], [0.9, 0.8]],
            dones: array![1.0, 1.0],
        };
        let y = agent.critic_target(&batch, array![[0.3], [-1.0]], &config).unwrap();
        assert_eq!(y, batch.rewards);
        let open = Batch {
            dones: array![0.0, 0.0],
            ..batch.clone()
        };
        let myopic = SacConfig { gamma: 0.0, ..config };
        let y = agent.critic_target(&open, array![[0.3], [-1.0]], &myopic).unwrap();
        assert_eq!(y, batch.rewards);
    }

    #[test]
    fn soft_update_with_unit_tau_copies() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut agent = SacAgent::new(3, 2, &tiny_config(), &mut rng);
        agent.critics[0] = Mlp::new(&[5, 8, 8, 1], &mut rng);
        assert_ne!(agent.targets[0], agent.critics[0]);
        agent.soft_update_targets(1.0).unwrap();
        assert_eq!(agent.targets, agent.critics);
    }

    #[test]
    fn update_needs_enough_data() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let config = tiny_config();
        let mut agent = SacAgent::new(2, 1, &config, &mut rng);
        let mut buf = ReplayBuffer::new(10, 2, 1);
        buf.push(transition(0.0)).unwrap();
        assert!(matches!(
            update(&buf, &mut agent, &config, &mut rng),
            Err(SacError::InsufficientData { have: 1, need: 4 })
        ));
    }

    #[test]
    fn layout_check() {
        let nine = crate::data::generate_synthetic(9, 2, 1);
        let eight = crate::data::generate_synthetic(8, 2, 1);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let agent = SacAgent::for_dataset(&nine, &tiny_config(), &mut rng);
        assert!(agent.check_layout(&nine).is_ok());
        assert!(matches!(agent.check_layout(&eight), Err(SacError::LayoutMismatch { .. })));
    }

    #[test]
    fn checkpoint_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let agent = SacAgent::new(4, 2, &tiny_config(), &mut rng);
        let meta = CheckpointMeta {
            format_version: 1,
            obs_dim: 4,
            act_dim: 2,
            district: Some("p-,--".into()),
            episodes_completed: 3,
            seed: 9,
        };
        let path = dir.path().join("latest");
        save_checkpoint(&agent, &meta, &path).unwrap();
        save_checkpoint(&agent, &meta, &path).unwrap();
        let (back, back_meta) = load_checkpoint(&path).unwrap();
        assert_eq!(back_meta, meta);
        assert_eq!(back.actor, agent.actor);
        assert_eq!(back.critics, agent.critics);
        assert_eq!(back.critic_opts, agent.critic_opts);
        assert!(load_checkpoint(&dir.path().join("missing")).is_err());
    }
}
