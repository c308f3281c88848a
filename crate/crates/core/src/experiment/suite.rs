//! Barrier x goal-scenario sweep.
//!
//! Per-stage seeds come from [`derive_seed`] keyed by the stage name, the
//! barrier id and the agent's endpoints, so each cell's numbers depend only
//! on its own identifiers and the master seed. Agents with identical
//! endpoints share pre-trained tables and lookup models; in particular a
//! learner whose endpoints equal its teacher's receives exactly its own
//! model.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estimator::{fit, EffectDataset, LookupModel};
use crate::experiment::config::{Baseline, BarrierSpec, Endpoints, GoalScenario, SuiteConfig};
use crate::experiment::plot;
use crate::experiment::results::{results_to_string, Metric, ResultRow};
use crate::grid::GridSpec;
use crate::metrics::{self, mean_std, OfprSummary, OfprValue};
use crate::qlearning::{greedy_coverage, greedy_is_optimal, run_policy, train, Policy, QTable};
use crate::scenario::ObstacleScenario;
use crate::seed::{derive_seed, episode_seed};
use crate::transfer::{evaluate_transfer, TransferAssignment, TransferEvaluation};

#[derive(Debug, Clone)]
pub struct TransferReport {
    pub pair_id: String,
    pub evaluation: TransferEvaluation,
    pub delta_mean: f64,
    pub delta_std: f64,
    pub gap_closure: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct CellReport {
    pub barrier: String,
    pub goal_scenario: String,
    pub l_opt: usize,
    pub rand: OfprSummary,
    pub pick: TransferEvaluation,
    pub pstar: OfprSummary,
    pub pstar_converged: bool,
    pub transfers: Vec<TransferReport>,
    pub notes: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct SuiteOutput {
    pub rows: Vec<ResultRow>,
    /// `(file stem, model)` in deterministic order.
    pub models: Vec<(String, LookupModel)>,
    pub cells: Vec<CellReport>,
    pub meta: String,
}

impl SuiteOutput {
    pub fn results_csv(&self) -> String {
        results_to_string(&self.rows)
    }

    /// Writes `results.csv`, `meta.txt`, `models/*.csv` and `figures/*.svg`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        let models_dir = dir.join("models");
        std::fs::create_dir_all(&models_dir).map_err(|e| Error::io(&models_dir, e))?;
        let write = |path: &Path, text: &str| std::fs::write(path, text).map_err(|e| Error::io(path, e));
        write(&dir.join("results.csv"), &self.results_csv())?;
        write(&dir.join("meta.txt"), &self.meta)?;
        for (stem, model) in &self.models {
            write(&models_dir.join(format!("{stem}.csv")), &model.to_csv())?;
        }
        plot::emit_plots(&self.rows, &dir.join("figures"))?;
        Ok(())
    }
}

type ModelKey = (String, Endpoints);

struct Shared<'a> {
    config: &'a SuiteConfig,
    scenarios: BTreeMap<String, ObstacleScenario>,
    pretrained: BTreeMap<Endpoints, QTable>,
    models: BTreeMap<ModelKey, LookupModel>,
}

struct Pretrained {
    table: QTable,
    converged: bool,
    coverage: f64,
}

fn pretrain(config: &SuiteConfig, agent: &Endpoints) -> Result<Pretrained> {
    let open = GridSpec::empty(config.grid.width, config.grid.height, agent.start, agent.goal)?;
    let seed = derive_seed(config.master_seed, "pretrain", &[&agent.id()]);
    let table = train(&open, &config.learning_config(seed))?;
    Ok(Pretrained {
        converged: greedy_is_optimal(&open, &table, config.grid.step_cap())?,
        coverage: greedy_coverage(&open, &table)?,
        table,
    })
}

fn fit_model(
    config: &SuiteConfig,
    barrier: &str,
    scenario: &ObstacleScenario,
    agent: &Endpoints,
    table: &QTable,
) -> Result<LookupModel> {
    let grid = scenario.grid(config.grid.width, config.grid.height, agent.start, agent.goal)?;
    let seed = derive_seed(config.master_seed, "discovery", &[barrier, &agent.id()]);
    let found = crate::discovery::discover(&grid, table, &config.discovery_config(seed))?;
    let dataset = EffectDataset::new(found.experiences, config.estimator.exclude_truncated);
    let model = match fit(&dataset, &config.estimator) {
        Ok(m) => m,
        Err(Error::EmptyDataset) => LookupModel {
            warnings: vec!["discovery produced no usable recovery records".into()],
            ..LookupModel::default()
        },
        Err(e) => return Err(e),
    };
    let mut model = model.with_provenance(barrier, agent.id());
    model.provenance.config_hash = config.estimator.digest();
    Ok(model)
}

fn run_cell(shared: &Shared<'_>, barrier: &BarrierSpec, goal: &GoalScenario) -> Result<CellReport> {
    let cfg = shared.config;
    let scenario = &shared.scenarios[&barrier.id];
    let learner = goal.learner;
    let grid = scenario.grid(cfg.grid.width, cfg.grid.height, learner.start, learner.goal)?;
    let l_opt = grid.optimal_path_length();
    let cap = cfg.grid.step_cap();
    let episodes = cfg.evaluation_episodes;
    let agent_id = learner.id();
    let mut notes = Vec::new();

    let rand_base = derive_seed(cfg.master_seed, "rand", &[&barrier.id, &agent_id]);
    let rand_values = (0..episodes)
        .map(|ep| {
            let trace = run_policy(&grid, Policy::UniformRandom(episode_seed(rand_base, ep)), cap)?;
            metrics::trace_ofpr(l_opt, &trace)
        })
        .collect::<Result<Vec<OfprValue>>>()?;
    let rand = metrics::summarize(&rand_values);

    let pstar_seed = derive_seed(cfg.master_seed, "pstar", &[&barrier.id, &agent_id]);
    let pstar_table = train(&grid, &cfg.learning_config(pstar_seed))?;
    let pstar_trace = run_policy(&grid, Policy::Greedy(&pstar_table), cap)?;
    let pstar_converged = pstar_trace.reached_goal && pstar_trace.path_length == l_opt;
    if !pstar_converged {
        notes.push(format!("P* greedy path {} vs optimal {l_opt}", pstar_trace.path_length));
    }
    // The greedy policy is deterministic, so every evaluation episode repeats it.
    let pstar_value = metrics::trace_ofpr(l_opt, &pstar_trace)?;
    let pstar = metrics::summarize(&vec![pstar_value; episodes]);

    let eval_seed = derive_seed(cfg.master_seed, "eval", &[&barrier.id, &agent_id]);
    let learner_qtable = &shared.pretrained[&learner];
    let assignment = |teacher_model| TransferAssignment {
        teacher_model,
        learner_qtable,
        learner_start: learner.start,
        learner_goal: learner.goal,
        scenario_id: &barrier.id,
        scenario,
        width: cfg.grid.width,
        height: cfg.grid.height,
        seed: eval_seed,
        max_steps: cap,
    };
    let own_model = &shared.models[&(barrier.id.clone(), learner)];
    if own_model.is_empty() {
        notes.push(format!("learner model for {agent_id} is empty"));
    }
    let pick = evaluate_transfer(&assignment(own_model), episodes)?;

    let mut transfers = Vec::new();
    for pair in cfg.transfers.iter().filter(|t| t.learner == goal.id) {
        let teacher = cfg.goal_scenario(&pair.teacher).expect("validated").teacher;
        let model = &shared.models[&(barrier.id.clone(), teacher)];
        let evaluation = evaluate_transfer(&assignment(model), episodes)?;
        let (delta_mean, delta_std) = mean_std(
            evaluation
                .per_episode
                .iter()
                .zip(&pick.per_episode)
                .map(|(t, l)| metrics::delta_ck(t.value, l.value)),
        );
        let gap_closure = match metrics::gap_closure(rand.mean, evaluation.mean_ofpr, pstar.mean) {
            Ok(g) => Some(g),
            Err(e) => {
                notes.push(format!("{}: {e}", pair.id()));
                None
            }
        };
        transfers.push(TransferReport {
            pair_id: pair.id(),
            evaluation,
            delta_mean,
            delta_std,
            gap_closure,
        });
    }

    Ok(CellReport {
        barrier: barrier.id.clone(),
        goal_scenario: goal.id.clone(),
        l_opt,
        rand,
        pick,
        pstar,
        pstar_converged,
        transfers,
        notes,
    })
}

fn cell_rows(cfg: &SuiteConfig, cell: &CellReport) -> Vec<ResultRow> {
    let row = |subject: &str, metric: Metric, mean: f64, std: f64, n: usize, failures: usize| ResultRow {
        barrier: cell.barrier.clone(),
        goal_scenario: cell.goal_scenario.clone(),
        subject: subject.to_string(),
        metric,
        mean,
        std,
        n,
        seed: cfg.master_seed,
        failures,
    };
    let mut rows = Vec::new();
    for b in &cfg.baselines {
        let s = match b {
            Baseline::Rand => &cell.rand,
            Baseline::PiCK => &cell.pick.summary,
            Baseline::PStar => &cell.pstar,
        };
        rows.push(row(b.name(), Metric::Ofpr, s.mean, s.std, s.n, s.failures));
    }
    for t in &cell.transfers {
        let s = &t.evaluation.summary;
        rows.push(row(&t.pair_id, Metric::DeltaCk, t.delta_mean, t.delta_std, s.n, s.failures));
        if let Some(g) = t.gap_closure {
            rows.push(row(&t.pair_id, Metric::GapClosure, g, 0.0, s.n, s.failures));
        }
    }
    rows
}

/// Runs the whole sweep on `jobs` worker threads (0 = rayon's default).
pub fn run_suite(config: &SuiteConfig, jobs: usize) -> Result<SuiteOutput> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    pool.install(|| run_suite_inner(config))
}

fn run_suite_inner(config: &SuiteConfig) -> Result<SuiteOutput> {
    let scenarios = config
        .barriers
        .iter()
        .map(|b| Ok((b.id.clone(), config.scenario(b)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;

    let agents: BTreeSet<Endpoints> = config
        .goal_scenarios
        .iter()
        .flat_map(|g| [g.teacher, g.learner])
        .collect();
    let agents: Vec<Endpoints> = agents.into_iter().collect();
    let trained = agents
        .par_iter()
        .map(|a| pretrain(config, a))
        .collect::<Result<Vec<_>>>()?;
    let mut pretrained = BTreeMap::new();
    let mut converged = Vec::new();
    for (agent, p) in agents.iter().zip(trained) {
        converged.push((agent.id(), p.converged, p.coverage));
        pretrained.insert(*agent, p.table);
    }

    let mut needed: BTreeSet<ModelKey> = BTreeSet::new();
    for b in &config.barriers {
        for g in &config.goal_scenarios {
            needed.insert((b.id.clone(), g.learner));
        }
        for t in &config.transfers {
            let teacher = config.goal_scenario(&t.teacher).expect("validated").teacher;
            needed.insert((b.id.clone(), teacher));
        }
    }
    let needed: Vec<ModelKey> = needed.into_iter().collect();
    let fitted = needed
        .par_iter()
        .map(|(barrier, agent)| fit_model(config, barrier, &scenarios[barrier], agent, &pretrained[agent]))
        .collect::<Result<Vec<_>>>()?;
    let models: BTreeMap<ModelKey, LookupModel> = needed.into_iter().zip(fitted).collect();

    let shared = Shared {
        config,
        scenarios,
        pretrained,
        models,
    };
    let cell_specs: Vec<(&BarrierSpec, &GoalScenario)> = config
        .barriers
        .iter()
        .flat_map(|b| config.goal_scenarios.iter().map(move |g| (b, g)))
        .collect();
    let cells = cell_specs
        .par_iter()
        .map(|(b, g)| run_cell(&shared, b, g))
        .collect::<Result<Vec<_>>>()?;

    let rows = cells.iter().flat_map(|c| cell_rows(config, c)).collect();
    let meta = render_meta(config, &converged, &shared.models, &cells);
    let models = shared
        .models
        .into_iter()
        .map(|((barrier, agent), m)| (format!("{barrier}__{}", agent.id()), m))
        .collect();
    Ok(SuiteOutput {
        rows,
        models,
        cells,
        meta,
    })
}

fn render_meta(
    config: &SuiteConfig,
    converged: &[(String, bool, f64)],
    models: &BTreeMap<ModelKey, LookupModel>,
    cells: &[CellReport],
) -> String {
    let mut m = String::new();
    let _ = writeln!(m, "config_hash={}", config.digest());
    let _ = writeln!(m, "crate={} {}", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION"));
    let _ = writeln!(m, "master_seed={}", config.master_seed);
    let _ = writeln!(m, "step_cap={}", config.grid.step_cap());
    for (agent, ok, coverage) in converged {
        let _ = writeln!(m, "pretrain.{agent}.converged={ok}");
        let _ = writeln!(m, "pretrain.{agent}.greedy_coverage={coverage:.4}");
    }
    for ((barrier, agent), model) in models {
        let _ = writeln!(m, "model.{barrier}.{}.entries={}", agent.id(), model.len());
        for w in &model.warnings {
            let _ = writeln!(m, "model.{barrier}.{}.warning={w}", agent.id());
        }
    }
    for c in cells {
        let key = format!("cell.{}.{}", c.barrier, c.goal_scenario);
        let _ = writeln!(m, "{key}.l_opt={}", c.l_opt);
        let _ = writeln!(m, "{key}.pstar_converged={}", c.pstar_converged);
        let _ = writeln!(
            m,
            "{key}.pick_mean_successful={}",
            c.pick.summary.mean_successful.map_or("-".to_string(), |v| format!("{v:.6}"))
        );
        let s = &c.pick.stats;
        let _ = writeln!(
            m,
            "{key}.pick_invocations=teacher:{} completed:{} fallback:{} queries:{} misses:{}",
            s.teacher, s.teacher_completed, s.fallback, s.queries, s.misses
        );
        for t in &c.transfers {
            let s = &t.evaluation.stats;
            let _ = writeln!(
                m,
                "{key}.transfer.{}.t_ck={:.6} invocations=teacher:{} completed:{} fallback:{} queries:{} misses:{}",
                t.pair_id, t.evaluation.mean_ofpr, s.teacher, s.teacher_completed, s.fallback, s.queries, s.misses
            );
        }
        for n in &c.notes {
            let _ = writeln!(m, "{key}.note={n}");
        }
    }
    m
}
