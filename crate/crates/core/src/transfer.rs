//! Zero-shot application of a teacher's lookup model.
//!
//! The learner follows its own frozen greedy policy. On a collision it
//! queries the model with the absolute collision context; a hit runs the
//! stored macro as one block, a miss (or a context already queried in this
//! episode) falls back to uniform-random moves until one succeeds. Neither
//! the Q-table nor the model is modified.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::discovery::CollisionContext;
use crate::error::{Error, Result};
use crate::estimator::{query, LookupModel};
use crate::grid::{Action, Cell, GridSpec};
use crate::metrics::{self, OfprSummary, OfprValue};
use crate::qlearning::{EpisodeTrace, QTable, TraceStep};
use crate::scenario::ObstacleScenario;
use crate::seed::episode_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MacroSource {
    Teacher,
    Fallback,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MacroInvocation {
    pub context: CollisionContext,
    pub source: MacroSource,
    pub executed: Vec<Action>,
    pub completed: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TransferTrace {
    pub trace: EpisodeTrace,
    pub invocations: Vec<MacroInvocation>,
    pub model_queries: usize,
    pub model_misses: usize,
}

struct Runner<'a> {
    grid: &'a GridSpec,
    out: TransferTrace,
    state: Cell,
    done: bool,
    max_steps: usize,
}

impl Runner<'_> {
    fn exhausted(&self) -> bool {
        self.done || self.out.trace.path_length >= self.max_steps
    }

    /// Takes one step; returns whether it collided.
    fn act(&mut self, action: Action) -> Result<bool> {
        let o = self.grid.step(self.state, action)?;
        self.out.trace.push(
            TraceStep {
                state: self.state,
                action,
                reward: o.reward,
                collided: o.collided,
                next_state: o.next_state,
            },
            o.done,
        );
        self.state = o.next_state;
        self.done = o.done;
        Ok(o.collided)
    }
}

pub fn run_episode_with_ck(
    grid: &GridSpec,
    qtable: &QTable,
    model: &LookupModel,
    fallback_seed: u64,
    max_steps: usize,
) -> Result<TransferTrace> {
    qtable.check_shape(grid)?;
    let mut rng = ChaCha8Rng::seed_from_u64(fallback_seed);
    let mut run = Runner {
        grid,
        out: TransferTrace::default(),
        state: grid.start(),
        done: false,
        max_steps,
    };
    let mut queried: HashSet<CollisionContext> = HashSet::new();
    let mut pending: Option<CollisionContext> = None;

    while !run.exhausted() {
        let Some(context) = pending.take() else {
            let action = qtable.greedy_action(run.state);
            let from = run.state;
            if run.act(action)? {
                pending = Some(CollisionContext {
                    state: from,
                    attempted: action,
                });
            }
            continue;
        };

        let recovery = if queried.insert(context) {
            run.out.model_queries += 1;
            let hit = query(model, &context);
            run.out.model_misses += usize::from(hit.is_none());
            hit
        } else {
            None
        };

        let mut executed = Vec::new();
        match recovery {
            Some(recovery) => {
                for &action in recovery.actions() {
                    if run.exhausted() {
                        break;
                    }
                    let from = run.state;
                    executed.push(action);
                    if run.act(action)? {
                        pending = Some(CollisionContext {
                            state: from,
                            attempted: action,
                        });
                        break;
                    }
                }
                let completed = pending.is_none() && executed.len() == recovery.len();
                run.out.invocations.push(MacroInvocation {
                    context,
                    source: MacroSource::Teacher,
                    executed,
                    completed,
                });
            }
            None => {
                let mut completed = false;
                while !run.exhausted() {
                    let action = Action::from_index(rng.gen_range(0..4));
                    executed.push(action);
                    if !run.act(action)? {
                        completed = true;
                        break;
                    }
                }
                run.out.invocations.push(MacroInvocation {
                    context,
                    source: MacroSource::Fallback,
                    executed,
                    completed,
                });
            }
        }
    }
    Ok(run.out)
}

/// A teacher model handed to a learner sharing the teacher's barrier layout.
#[derive(Debug, Clone, Copy)]
pub struct TransferAssignment<'a> {
    pub teacher_model: &'a LookupModel,
    pub learner_qtable: &'a QTable,
    pub learner_start: Cell,
    pub learner_goal: Cell,
    pub scenario_id: &'a str,
    pub scenario: &'a ObstacleScenario,
    pub width: usize,
    pub height: usize,
    /// Base of the per-episode fallback seeds.
    pub seed: u64,
    pub max_steps: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct InvocationStats {
    pub teacher: usize,
    pub teacher_completed: usize,
    pub fallback: usize,
    pub queries: usize,
    pub misses: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferEvaluation {
    /// Mean OFPR of the learner, i.e. `T_CK` for a teacher's model or
    /// `L_CK` for the learner's own.
    pub mean_ofpr: f64,
    pub per_episode: Vec<OfprValue>,
    pub summary: OfprSummary,
    pub stats: InvocationStats,
}

pub fn evaluate_transfer(assignment: &TransferAssignment<'_>, episodes: usize) -> Result<TransferEvaluation> {
    if episodes == 0 {
        return Err(Error::Config("transfer evaluation needs at least one episode".into()));
    }
    let a = assignment;
    let declared = &a.teacher_model.provenance.scenario;
    if !declared.is_empty() && declared != a.scenario_id {
        return Err(Error::Config(format!(
            "teacher model was fitted on {declared:?}, learner runs {:?}",
            a.scenario_id
        )));
    }
    let grid = a.scenario.grid(a.width, a.height, a.learner_start, a.learner_goal)?;
    let l_opt = grid.optimal_path_length();
    let mut per_episode = Vec::with_capacity(episodes);
    let mut stats = InvocationStats::default();
    for ep in 0..episodes {
        let t = run_episode_with_ck(&grid, a.learner_qtable, a.teacher_model, episode_seed(a.seed, ep), a.max_steps)?;
        per_episode.push(metrics::trace_ofpr(l_opt, &t.trace)?);
        stats.queries += t.model_queries;
        stats.misses += t.model_misses;
        for inv in &t.invocations {
            match inv.source {
                MacroSource::Teacher => {
                    stats.teacher += 1;
                    stats.teacher_completed += usize::from(inv.completed);
                }
                MacroSource::Fallback => stats.fallback += 1,
            }
        }
    }
    let summary = metrics::summarize(&per_episode);
    Ok(TransferEvaluation {
        mean_ofpr: summary.mean,
        per_episode,
        summary,
        stats,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discovery::RecoveryMacro;
    use crate::estimator::LookupEntry;
    use crate::qlearning::{train, LearningConfig};

    fn model_with(entries: &[(CollisionContext, &str)]) -> LookupModel {
        let mut m = LookupModel::default();
        for (c, s) in entries {
            let recovery: RecoveryMacro = s.parse().unwrap();
            m.entries.insert(
                *c,
                LookupEntry {
                    effect: recovery.len() as f64,
                    recovery,
                    support: 10,
                },
            );
        }
        m
    }

    /// 5x5, (0,2) -> (4,2), wall cell right above the goal.
    fn mini() -> (GridSpec, QTable) {
        let open = GridSpec::empty(5, 5, Cell::new(0, 2), Cell::new(4, 2)).unwrap();
        let q = train(&open, &LearningConfig { episodes: 800, ..Default::default() }).unwrap();
        (open.with_obstacles([Cell::new(3, 2)]).unwrap(), q)
    }

    fn bump() -> CollisionContext {
        CollisionContext {
            state: Cell::new(2, 2),
            attempted: Action::Down,
        }
    }

    #[test]
    fn covered_context_runs_one_teacher_macro() {
        let (grid, q) = mini();
        let model = model_with(&[(bump(), "RDDL")]);
        let t = run_episode_with_ck(&grid, &q, &model, 0, 100).unwrap();
        assert!(t.trace.reached_goal);
        assert_eq!(t.invocations.len(), 1);
        let inv = &t.invocations[0];
        assert_eq!(inv.source, MacroSource::Teacher);
        assert!(inv.completed);
        assert_eq!(inv.executed, model.entries[&bump()].recovery.actions());
        assert_eq!(t.trace.path_length, 2 + 1 + 4);
        assert_eq!(t.model_queries, 1);
        assert_eq!(t.model_misses, 0);
    }

    #[test]
    fn empty_model_matches_random_on_collision_policy() {
        let (grid, q) = mini();
        let empty = LookupModel::default();
        let t = run_episode_with_ck(&grid, &q, &empty, 42, 200).unwrap();
        assert!(t.invocations.iter().all(|i| i.source == MacroSource::Fallback));
        assert_eq!(t.model_queries, t.model_misses);

        // Replay: greedy until a collision, then the same seeded stream of
        // uniform moves until one succeeds.
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let mut state = grid.start();
        let mut expected = Vec::new();
        let mut recovering = false;
        while expected.len() < 200 && state != grid.goal() {
            let a = if recovering {
                Action::from_index(rng.gen_range(0..4))
            } else {
                q.greedy_action(state)
            };
            let o = grid.step(state, a).unwrap();
            expected.push(a);
            recovering = o.collided;
            state = o.next_state;
        }
        assert_eq!(t.trace.actions().collect::<Vec<_>>(), expected);
    }

    #[test]
    fn colliding_macro_is_aborted_and_requeried() {
        let (grid, q) = mini();
        // "DD" from (2,2) bumps the wall on its first action.
        let model = model_with(&[(bump(), "DD")]);
        let t = run_episode_with_ck(&grid, &q, &model, 3, 100).unwrap();
        let first = &t.invocations[0];
        assert_eq!(first.source, MacroSource::Teacher);
        assert!(!first.completed);
        assert_eq!(first.executed, vec![Action::Down]);
        // Same context again -> livelock guard sends it to the fallback.
        let second = &t.invocations[1];
        assert_eq!(second.context, bump());
        assert_eq!(second.source, MacroSource::Fallback);
        assert_eq!(t.model_misses, t.model_queries - 1);
    }

    #[test]
    fn no_collision_means_optimal_ofpr() {
        let open = GridSpec::empty(5, 5, Cell::new(0, 0), Cell::new(4, 4)).unwrap();
        let q = train(&open, &LearningConfig { episodes: 800, ..Default::default() }).unwrap();
        let scenario = ObstacleScenario::none();
        let model = LookupModel::default();
        let eval = evaluate_transfer(
            &TransferAssignment {
                teacher_model: &model,
                learner_qtable: &q,
                learner_start: Cell::new(0, 0),
                learner_goal: Cell::new(4, 4),
                scenario_id: "None",
                scenario: &scenario,
                width: 5,
                height: 5,
                seed: 1,
                max_steps: 100,
            },
            5,
        )
        .unwrap();
        assert_eq!(eval.mean_ofpr, 1.0);
        assert_eq!(eval.per_episode.len(), 5);
        assert_eq!(eval.stats, InvocationStats::default());
    }

    #[test]
    fn scenario_mismatch_is_rejected() {
        let q = QTable::zeros(5, 5);
        let scenario = ObstacleScenario::none();
        let model = LookupModel::default().with_provenance("Wall", "t");
        let res = evaluate_transfer(
            &TransferAssignment {
                teacher_model: &model,
                learner_qtable: &q,
                learner_start: Cell::new(0, 0),
                learner_goal: Cell::new(4, 4),
                scenario_id: "U",
                scenario: &scenario,
                width: 5,
                height: 5,
                seed: 1,
                max_steps: 10,
            },
            1,
        );
        assert!(res.is_err());
    }
}
