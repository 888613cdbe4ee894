//! Episodic simulator with a hidden per-episode reward context.

use std::io::Write;

use rand::Rng;

use crate::error::{Error, Result};
use crate::exact::{Policy, Step};
use crate::model::RmMdpModel;
use crate::rng::{stream, StreamRng};

/// Full record of one episode. `latent_context` is diagnostic output only;
/// learners see `steps`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Trajectory {
    pub steps: Vec<Step>,
    pub latent_context: u8,
}

impl Trajectory {
    pub fn total_reward(&self) -> u32 {
        self.steps.iter().map(|s| s.r as u32).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StepOutcome {
    pub reward: u8,
    pub next_state: usize,
}

#[derive(Clone, Debug)]
struct Phase {
    /// Steps taken so far in this episode.
    t: usize,
    s: usize,
    context: u8,
    rng: StreamRng,
}

/// Simulator for one model. Episode `k` draws all of its randomness from
/// `rng::stream(seed, k)`: first the context, then `s1`, then per step the
/// reward followed by the successor state.
#[derive(Clone, Debug)]
pub struct EnvInstance {
    model: RmMdpModel,
    seed: u64,
    episode_count: u64,
    phase: Option<Phase>,
}

pub(crate) fn sample_categorical(rng: &mut StreamRng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last_positive = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            last_positive = i;
            acc += p;
            if u < acc {
                return i;
            }
        }
    }
    last_positive
}

impl EnvInstance {
    pub fn new(model: RmMdpModel, seed: u64) -> Self {
        EnvInstance { model, seed, episode_count: 0, phase: None }
    }

    pub fn model(&self) -> &RmMdpModel {
        &self.model
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Number of episodes started so far.
    pub fn episode_count(&self) -> u64 {
        self.episode_count
    }

    /// Starts a new episode and returns `s1 ~ nu`.
    pub fn reset(&mut self) -> usize {
        let mut rng = stream(self.seed, self.episode_count);
        let context = if rng.random::<f64>() < self.model.weight { 1 } else { 2 };
        let s = sample_categorical(&mut rng, &self.model.initial);
        self.episode_count += 1;
        self.phase = Some(Phase { t: 0, s, context, rng });
        s
    }

    pub fn step(&mut self, action: usize) -> Result<StepOutcome> {
        let horizon = self.model.horizon;
        let phase = self.phase.as_mut().ok_or(Error::ResetRequired)?;
        if phase.t >= horizon {
            return Err(Error::SteppedPastHorizon { horizon });
        }
        if action >= self.model.actions {
            return Err(Error::InvalidParameter(format!(
                "action {action} out of range for A = {}",
                self.model.actions
            )));
        }
        let x = self.model.index(phase.s, action);
        let p = self.model.reward_mean(phase.context, x);
        let reward = u8::from(phase.rng.random::<f64>() < p);
        let next_state = sample_categorical(&mut phase.rng, self.model.next_state_probs(phase.s, action));
        phase.t += 1;
        phase.s = next_state;
        Ok(StepOutcome { reward, next_state })
    }

    /// Context of the running episode. Diagnostics only.
    pub fn revealed_context(&self) -> Option<u8> {
        self.phase.as_ref().map(|p| p.context)
    }

    /// Rolls out one full episode; the policy sees only the observed history.
    pub fn run_episode(&mut self, policy: &impl Policy) -> Result<Trajectory> {
        let mut s = self.reset();
        let mut steps = Vec::with_capacity(self.model.horizon);
        for _ in 0..self.model.horizon {
            let a = policy.act(&steps, s);
            let out = self.step(a)?;
            steps.push(Step { s, a, r: out.reward });
            s = out.next_state;
        }
        let latent_context = self.revealed_context().expect("episode in progress");
        Ok(Trajectory { steps, latent_context })
    }
}

/// CSV trajectory log with one row per step: `episode,t,s,a,r[,m]`.
/// `t` is 1-based; the `m` column is written only when the context is revealed.
pub struct TrajectoryLog<W: Write> {
    writer: csv::Writer<W>,
    reveal_context: bool,
}

impl<W: Write> TrajectoryLog<W> {
    pub fn new(inner: W, reveal_context: bool) -> Result<Self> {
        let mut writer = csv::Writer::from_writer(inner);
        if reveal_context {
            writer.write_record(["episode", "t", "s", "a", "r", "m"])?;
        } else {
            writer.write_record(["episode", "t", "s", "a", "r"])?;
        }
        Ok(TrajectoryLog { writer, reveal_context })
    }

    pub fn record(&mut self, episode: u64, trajectory: &Trajectory) -> Result<()> {
        for (t, st) in trajectory.steps.iter().enumerate() {
            let mut row = vec![
                episode.to_string(),
                (t + 1).to_string(),
                st.s.to_string(),
                st.a.to_string(),
                st.r.to_string(),
            ];
            if self.reveal_context {
                row.push(trajectory.latent_context.to_string());
            }
            self.writer.write_record(&row)?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<W> {
        self.writer.flush()?;
        self.writer.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}
