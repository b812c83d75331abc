//! Episode loop, training and greedy evaluation.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::agent::{
    bootstrap_targets, discretize, qtable_update, select_action, sync_target, td_update,
    EpsilonSchedule, QNetwork, QTable, ReplayBuffer, TargetRule, Transition,
};
use crate::gqn::{Gqn, GqnConfig};
use crate::math::round;
use crate::seed::{self, Stream};
use crate::tensornet::{copy_params, Optimizer, ParamSet};
use crate::world::{
    Action, Event, GraspWorld, ObjectKind, Observation, WorldConfig, WorldState, ACTION_COUNT,
};
use crate::{Error, Result};

/// Everything that happened after one environment step.
pub struct StepRecord<'a> {
    pub transition: &'a Transition<Observation>,
    pub state: &'a WorldState,
    pub next_state: &'a WorldState,
    pub event: Event,
}

/// Something that scores actions and may learn from the resulting steps.
pub trait Controller {
    fn q_values(&mut self, state: &WorldState, obs: &Observation) -> Result<Vec<f64>>;

    fn observe(&mut self, _step: StepRecord<'_>) -> Result<()> {
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct EpisodeResult {
    pub transitions: Vec<Transition<Observation>>,
    /// `steps + 1` states, starting with the reset state.
    pub states: Vec<WorldState>,
    pub events: Vec<Event>,
    pub total_return: f64,
    pub steps: u32,
    pub success: bool,
}

/// Plays one episode from `reset_seed` with ε-greedy action selection.
pub fn run_episode<C: Controller + ?Sized, R: Rng + ?Sized>(
    world: &GraspWorld,
    kind: ObjectKind,
    reset_seed: u64,
    controller: &mut C,
    epsilon: f64,
    rng: &mut R,
) -> Result<EpisodeResult> {
    let (mut state, obs) = world.reset(reset_seed, kind);
    let mut obs = Arc::new(obs);
    let mut result = EpisodeResult {
        transitions: Vec::new(),
        states: vec![state.clone()],
        events: Vec::new(),
        total_return: 0.0,
        steps: 0,
        success: false,
    };
    while !state.terminal {
        let q = controller.q_values(&state, &obs)?;
        let action = select_action(&q, epsilon, rng);
        let (next, outcome) = world.step(&state, Action::from_index(action).expect("action index"))?;
        let next_obs = Arc::new(world.observe(&next));
        let t = Transition {
            obs,
            action,
            reward: outcome.reward,
            next_obs: Arc::clone(&next_obs),
            terminal: outcome.terminal,
        };
        controller.observe(StepRecord {
            transition: &t,
            state: &state,
            next_state: &next,
            event: outcome.event,
        })?;
        result.total_return += outcome.reward;
        result.steps += 1;
        result.success |= outcome.event == Event::Success;
        result.events.push(outcome.event);
        result.transitions.push(t);
        result.states.push(next.clone());
        state = next;
        obs = next_obs;
    }
    Ok(result)
}

/// Scripted policy with access to the ground truth: breadth-first search over
/// the motion actions for the nearest pose from which closing succeeds.
#[derive(Clone, Debug)]
pub struct OraclePolicy {
    world: GraspWorld,
    plan: VecDeque<Action>,
}

impl OraclePolicy {
    pub fn new(world: GraspWorld) -> Self {
        Self {
            world,
            plan: VecDeque::new(),
        }
    }

    fn key(&self, s: &WorldState) -> (i64, i64, i64, i64) {
        let c = &self.world.config;
        let q = |v: f64, step: f64| round(v / step) as i64;
        (
            q(s.gripper.x, c.translation_step),
            q(s.gripper.y, c.translation_step),
            q(s.gripper.z, c.translation_step),
            q(s.gripper.yaw, c.rotation_step),
        )
    }

    /// Shortest action sequence ending in a successful close, if one exists
    /// within the remaining step budget.
    pub fn plan(&self, start: &WorldState) -> Option<Vec<Action>> {
        let mut parents: BTreeMap<(i64, i64, i64, i64), Option<((i64, i64, i64, i64), Action)>> =
            BTreeMap::new();
        let mut frontier = VecDeque::from([start.clone()]);
        parents.insert(self.key(start), None);
        while let Some(s) = frontier.pop_front() {
            if self.world.graspable(&s) {
                let mut actions = vec![Action::Close];
                let mut k = self.key(&s);
                while let Some(Some((prev, a))) = parents.get(&k) {
                    actions.push(*a);
                    k = *prev;
                }
                actions.reverse();
                return Some(actions);
            }
            if s.terminal {
                continue;
            }
            for &a in &Action::ALL[..ACTION_COUNT - 1] {
                let Ok((next, outcome)) = self.world.step(&s, a) else {
                    continue;
                };
                if outcome.event == Event::NotExecuted {
                    continue;
                }
                let k = self.key(&next);
                if parents.contains_key(&k) {
                    continue;
                }
                parents.insert(k, Some((self.key(&s), a)));
                frontier.push_back(next);
            }
        }
        None
    }
}

impl Controller for OraclePolicy {
    fn q_values(&mut self, state: &WorldState, _obs: &Observation) -> Result<Vec<f64>> {
        if state.step_count == 0 || self.plan.is_empty() {
            self.plan = self.plan(state).unwrap_or_default().into();
        }
        let action = self.plan.pop_front().unwrap_or(Action::Close);
        let mut q = vec![0.0; ACTION_COUNT];
        q[action.index()] = 1.0;
        Ok(q)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    QLearning,
    Dqn,
    Ddqn,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::QLearning => "qlearn",
            Algorithm::Dqn => "dqn",
            Algorithm::Ddqn => "ddqn",
        }
    }
}

impl core::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.name())
    }
}

impl core::str::FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "qlearn" => Ok(Algorithm::QLearning),
            "dqn" => Ok(Algorithm::Dqn),
            "ddqn" => Ok(Algorithm::Ddqn),
            _ => Err(Error::Config(alloc::format!("unknown algorithm `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    pub world: WorldConfig,
    pub network: GqnConfig,
    /// Each episode uses one of these, drawn uniformly.
    pub objects: Vec<ObjectKind>,
    pub episodes: usize,
    pub gamma: f64,
    pub epsilon: EpsilonSchedule,
    pub replay_capacity: usize,
    pub batch_size: usize,
    /// Environment steps between target-network copies.
    pub target_sync: u64,
    pub learning_rate: f64,
    /// Transitions collected before the first update.
    pub warmup: usize,
    /// Environment steps per gradient update.
    pub update_every: u64,
    /// Tabular learning rate.
    pub alpha: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Ddqn,
            world: WorldConfig::default(),
            network: GqnConfig::default(),
            objects: vec![ObjectKind::Cube],
            episodes: 2000,
            gamma: 0.9,
            epsilon: EpsilonSchedule::default(),
            replay_capacity: 20_000,
            batch_size: 32,
            target_sync: 200,
            learning_rate: 1e-4,
            warmup: 500,
            update_every: 1,
            alpha: 0.1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if !(0.0..1.0).contains(&self.gamma) {
            return bad("gamma must lie in [0, 1)");
        }
        if self.objects.is_empty() {
            return bad("at least one object kind is required");
        }
        if self.replay_capacity == 0 || self.batch_size == 0 || self.update_every == 0 {
            return bad("replay_capacity, batch_size and update_every must be positive");
        }
        if !(self.learning_rate > 0.0) || !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return bad("learning rates must be positive and alpha at most 1");
        }
        let e = &self.epsilon;
        if !(0.0..=1.0).contains(&e.start) || !(0.0..=1.0).contains(&e.end) || e.decay_fraction < 0.0 {
            return bad("epsilon values must lie in [0, 1]");
        }
        self.world.validate()?;
        if self.algorithm != Algorithm::QLearning {
            self.network.validate()?;
            if self.network.image_size != self.world.image_size {
                return bad("network and world image sizes differ");
            }
        }
        Ok(())
    }

    pub fn object_for_episode(&self, episode: usize) -> ObjectKind {
        if self.objects.len() == 1 {
            return self.objects[0];
        }
        let mut rng = seed::rng(self.seed, Stream::Object, episode as u64);
        self.objects[rng.gen_range(0..self.objects.len())]
    }
}

/// One row of the training log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpisodeLog {
    pub episode: usize,
    pub total_return: f64,
    pub steps: u32,
    pub success: bool,
    pub epsilon: f64,
    /// Mean TD loss of the updates made during the episode, 0 if none.
    pub loss: f64,
}

/// A trained action-value function.
#[derive(Clone, Debug, PartialEq)]
pub enum Model {
    Network { gqn: Gqn, params: ParamSet },
    Table(QTable),
}

impl Model {
    /// Bitwise equality of the stored values, ignoring optimizer state.
    pub fn bit_eq(&self, other: &Model) -> bool {
        match (self, other) {
            (Model::Network { gqn: a, params: p }, Model::Network { gqn: b, params: q }) => a == b && p.bit_eq(q),
            (Model::Table(a), Model::Table(b)) => a == b,
            _ => false,
        }
    }

    pub fn q_values(&self, state: &WorldState, obs: &Observation) -> Result<Vec<f64>> {
        match self {
            Model::Network { gqn, params } => Ok(gqn.q_rows(params, &[obs])?.remove(0)),
            Model::Table(t) => Ok(t.row(discretize(state))),
        }
    }
}

impl Controller for &Model {
    fn q_values(&mut self, state: &WorldState, obs: &Observation) -> Result<Vec<f64>> {
        Model::q_values(self, state, obs)
    }
}

struct DeepLearner {
    gqn: Gqn,
    rule: TargetRule,
    online: ParamSet,
    target: ParamSet,
    buffer: ReplayBuffer<Observation>,
    optimizer: Optimizer,
    sample_rng: ChaCha8Rng,
    gamma: f64,
    batch: usize,
    warmup: usize,
    update_every: u64,
    target_sync: u64,
    env_steps: u64,
    losses: Vec<f64>,
}

impl Controller for DeepLearner {
    fn q_values(&mut self, _state: &WorldState, obs: &Observation) -> Result<Vec<f64>> {
        Ok(self.gqn.q_rows(&self.online, &[obs])?.remove(0))
    }

    fn observe(&mut self, step: StepRecord<'_>) -> Result<()> {
        self.buffer.push(step.transition.clone());
        self.env_steps += 1;
        if self.buffer.len() >= self.warmup && self.env_steps.is_multiple_of(self.update_every) {
            let batch = self.buffer.sample(self.batch, &mut self.sample_rng)?;
            let y = bootstrap_targets(&self.gqn, self.rule, &batch, &self.online, &self.target, self.gamma)?;
            let loss = td_update(&self.gqn, &mut self.online, &batch, &y, &self.optimizer)?;
            self.losses.push(loss);
        }
        sync_target(&self.online, &mut self.target, self.env_steps, self.target_sync);
        Ok(())
    }
}

struct TabularLearner {
    table: QTable,
    alpha: f64,
    gamma: f64,
}

impl Controller for TabularLearner {
    fn q_values(&mut self, state: &WorldState, _obs: &Observation) -> Result<Vec<f64>> {
        Ok(self.table.row(discretize(state)))
    }

    fn observe(&mut self, step: StepRecord<'_>) -> Result<()> {
        let t = step.transition;
        qtable_update(
            &mut self.table,
            discretize(step.state),
            t.action,
            t.reward,
            discretize(step.next_state),
            t.terminal,
            self.alpha,
            self.gamma,
        );
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub log: Vec<EpisodeLog>,
    pub model: Model,
}

/// Trains from scratch; `progress` sees each log row as it is produced.
pub fn train(config: &TrainConfig, mut progress: impl FnMut(&EpisodeLog)) -> Result<TrainOutcome> {
    config.validate()?;
    let world = GraspWorld::new(config.world.clone())?;
    let mut policy_rng = seed::rng(config.seed, Stream::Policy, 0);
    let mut log = Vec::with_capacity(config.episodes);

    let mut record = |episode: usize, r: &EpisodeResult, epsilon: f64, losses: &[f64]| {
        let loss = if losses.is_empty() {
            0.0
        } else {
            losses.iter().sum::<f64>() / losses.len() as f64
        };
        let row = EpisodeLog {
            episode,
            total_return: r.total_return,
            steps: r.steps,
            success: r.success,
            epsilon,
            loss,
        };
        progress(&row);
        log.push(row);
    };

    let model = match config.algorithm {
        Algorithm::QLearning => {
            let mut learner = TabularLearner {
                table: QTable::new(ACTION_COUNT),
                alpha: config.alpha,
                gamma: config.gamma,
            };
            for episode in 0..config.episodes {
                let eps = config.epsilon.value(episode, config.episodes);
                let reset = seed::derive(config.seed, Stream::Episode, episode as u64);
                let kind = config.object_for_episode(episode);
                let r = run_episode(&world, kind, reset, &mut learner, eps, &mut policy_rng)?;
                record(episode, &r, eps, &[]);
            }
            Model::Table(learner.table)
        }
        Algorithm::Dqn | Algorithm::Ddqn => {
            let gqn = Gqn::new(config.network.clone())?;
            let online = gqn.build(seed::derive(config.seed, Stream::Init, 0))?;
            let mut learner = DeepLearner {
                target: copy_params(&online),
                online,
                gqn,
                rule: if config.algorithm == Algorithm::Dqn {
                    TargetRule::Dqn
                } else {
                    TargetRule::Ddqn
                },
                buffer: ReplayBuffer::new(config.replay_capacity),
                optimizer: Optimizer::adam(config.learning_rate),
                sample_rng: seed::rng(config.seed, Stream::Buffer, 0),
                gamma: config.gamma,
                batch: config.batch_size,
                warmup: config.warmup.max(1),
                update_every: config.update_every,
                target_sync: config.target_sync,
                env_steps: 0,
                losses: Vec::new(),
            };
            for episode in 0..config.episodes {
                let eps = config.epsilon.value(episode, config.episodes);
                let reset = seed::derive(config.seed, Stream::Episode, episode as u64);
                let kind = config.object_for_episode(episode);
                learner.losses.clear();
                let r = run_episode(&world, kind, reset, &mut learner, eps, &mut policy_rng)?;
                let losses = core::mem::take(&mut learner.losses);
                record(episode, &r, eps, &losses);
            }
            Model::Network {
                gqn: learner.gqn,
                params: learner.online,
            }
        }
    };
    Ok(TrainOutcome { log, model })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalReport {
    pub episodes: usize,
    pub success_rate: f64,
    pub mean_steps: f64,
    pub mean_return: f64,
}

/// Greedy rollouts on evaluation seeds that training never uses.
pub fn evaluate<C: Controller + ?Sized>(
    world: &GraspWorld,
    controller: &mut C,
    kind: ObjectKind,
    episodes: usize,
    seed: u64,
) -> Result<EvalReport> {
    let mut rng = seed::rng(seed, Stream::Policy, 1);
    let (mut wins, mut steps, mut ret) = (0usize, 0u64, 0.0);
    for i in 0..episodes {
        let reset = seed::derive(seed, Stream::Evaluation, i as u64);
        let r = run_episode(world, kind, reset, controller, 0.0, &mut rng)?;
        wins += r.success as usize;
        steps += u64::from(r.steps);
        ret += r.total_return;
    }
    let n = episodes.max(1) as f64;
    Ok(EvalReport {
        episodes,
        success_rate: wins as f64 / n,
        mean_steps: steps as f64 / n,
        mean_return: ret / n,
    })
}
