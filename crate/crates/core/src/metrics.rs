//! Path-efficiency metrics and reward decomposition.

use crate::error::{Error, Result};
use crate::qlearning::EpisodeTrace;

/// A trace split at its collisions: the pre-collision segment and one
/// post-collision segment per collision, each starting at the colliding step.
#[derive(Debug, Clone, PartialEq)]
pub struct DecomposedEpisode {
    pub pre_collision_reward: f64,
    pub post_collision_rewards: Vec<f64>,
    pub total_reward: f64,
    pub pre_collision_steps: usize,
    pub post_collision_steps: Vec<usize>,
}

impl DecomposedEpisode {
    pub fn recomposed_reward(&self) -> f64 {
        self.pre_collision_reward + self.post_collision_rewards.iter().sum::<f64>()
    }
}

pub fn decompose(trace: &EpisodeTrace) -> DecomposedEpisode {
    let mut pre_reward = 0.0;
    let mut pre_steps = 0;
    let mut post_rewards: Vec<f64> = Vec::with_capacity(trace.collision_count);
    let mut post_steps: Vec<usize> = Vec::with_capacity(trace.collision_count);
    for step in &trace.steps {
        if step.collided {
            post_rewards.push(0.0);
            post_steps.push(0);
        }
        match (post_rewards.last_mut(), post_steps.last_mut()) {
            (Some(r), Some(n)) => {
                *r += step.reward;
                *n += 1;
            }
            _ => {
                pre_reward += step.reward;
                pre_steps += 1;
            }
        }
    }
    DecomposedEpisode {
        pre_collision_reward: pre_reward,
        post_collision_rewards: post_rewards,
        total_reward: trace.total_reward,
        pre_collision_steps: pre_steps,
        post_collision_steps: post_steps,
    }
}

/// Optimal-to-final path-length ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OfprValue {
    pub value: f64,
    pub l_opt: usize,
    pub l_agent: usize,
    /// Goal not reached; `l_agent` is the truncated length.
    pub failed: bool,
}

pub fn ofpr(l_opt: usize, l_agent: usize) -> Result<OfprValue> {
    if l_opt == 0 {
        return Err(Error::Config("optimal path length must be at least 1".into()));
    }
    if l_agent < l_opt {
        return Err(Error::ShorterThanOptimal { l_opt, l_agent });
    }
    Ok(OfprValue {
        value: l_opt as f64 / l_agent as f64,
        l_opt,
        l_agent,
        failed: false,
    })
}

/// OFPR of a finished trace. A truncated trace is scored against its
/// length and flagged as failed.
pub fn trace_ofpr(l_opt: usize, trace: &EpisodeTrace) -> Result<OfprValue> {
    let mut v = ofpr(l_opt, trace.path_length.max(l_opt))?;
    v.failed = !trace.reached_goal;
    Ok(v)
}

pub fn delta_ck(t_ck: f64, l_ck: f64) -> f64 {
    t_ck - l_ck
}

/// Fraction of the Rand-to-P* gap closed by a causal-knowledge agent.
pub fn gap_closure(ofpr_rand: f64, ofpr_ck: f64, ofpr_pstar: f64) -> Result<f64> {
    let gap = ofpr_pstar - ofpr_rand;
    if gap.is_nan() || gap <= 0.0 {
        return Err(Error::DegenerateGap {
            rand: ofpr_rand,
            pstar: ofpr_pstar,
        });
    }
    Ok((ofpr_ck - ofpr_rand) / gap)
}

/// Mean, population standard deviation and failure count over episodes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OfprSummary {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
    pub failures: usize,
    /// Mean over goal-reaching episodes only; `None` if all failed.
    pub mean_successful: Option<f64>,
}

pub fn summarize(values: &[OfprValue]) -> OfprSummary {
    let n = values.len();
    let (mean, std) = mean_std(values.iter().map(|v| v.value));
    let ok: Vec<f64> = values.iter().filter(|v| !v.failed).map(|v| v.value).collect();
    OfprSummary {
        mean,
        std,
        n,
        failures: n - ok.len(),
        mean_successful: (!ok.is_empty()).then(|| ok.iter().sum::<f64>() / ok.len() as f64),
    }
}

pub fn mean_std(values: impl IntoIterator<Item = f64>) -> (f64, f64) {
    let xs: Vec<f64> = values.into_iter().collect();
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
