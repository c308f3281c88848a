//! Offline causal lookup-model fitting.
//!
//! Records are stratified on the collision context, which carries two of the
//! three confounders (state and attempted direction). Inside a stratum the
//! remaining confounder, prior path length, is handled either by linear
//! residualisation ([`Backend::StratifiedMean`]) or by a cross-fitted
//! orthogonal forest ([`Backend::DoublyRobustForest`]). Outcomes are expected
//! residual path lengths, so lower is better.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::discovery::{CollisionContext, RaExperience, RecoveryMacro, Terminal};
use crate::error::{Error, Result};
use crate::forest::{self, ForestParams};
use crate::grid::{Action, Cell};

const MODEL_MAGIC: &str = "# lookup_model v1";
const MODEL_HEADER: [&str; 6] = ["row", "col", "direction", "macro", "effect", "support"];

/// Records grouped by collision context.
#[derive(Debug, Clone)]
pub struct EffectDataset {
    records: Vec<RaExperience>,
    groups: BTreeMap<CollisionContext, Vec<usize>>,
}

impl EffectDataset {
    /// Indexes `records`, dropping `Truncated` ones when `exclude_truncated`.
    pub fn new(records: Vec<RaExperience>, exclude_truncated: bool) -> Self {
        let records: Vec<_> = records
            .into_iter()
            .filter(|r| !(exclude_truncated && r.terminal == Terminal::Truncated))
            .collect();
        let mut groups: BTreeMap<CollisionContext, Vec<usize>> = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            groups.entry(r.context).or_default().push(i);
        }
        EffectDataset { records, groups }
    }

    pub fn records(&self) -> &[RaExperience] {
        &self.records
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn contexts(&self) -> impl Iterator<Item = &CollisionContext> {
        self.groups.keys()
    }

    pub fn context_records(&self, context: &CollisionContext) -> impl Iterator<Item = &RaExperience> {
        self.groups
            .get(context)
            .into_iter()
            .flatten()
            .map(|&i| &self.records[i])
    }

    /// Distinct macros tried in `context` with their record counts.
    pub fn arms(&self, context: &CollisionContext) -> BTreeMap<&RecoveryMacro, usize> {
        let mut arms = BTreeMap::new();
        for r in self.context_records(context) {
            *arms.entry(&r.recovery).or_insert(0) += 1;
        }
        arms
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", deny_unknown_fields)]
pub enum Backend {
    StratifiedMean,
    DoublyRobustForest(ForestParams),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorConfig {
    pub backend: Backend,
    pub min_samples_per_arm: usize,
    /// Pseudo-count pulling an arm's stratum estimate toward the same
    /// macro's mean over all contexts.
    pub shrinkage_weight: f64,
    pub exclude_truncated: bool,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            backend: Backend::StratifiedMean,
            min_samples_per_arm: 10,
            shrinkage_weight: 1.0,
            exclude_truncated: true,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.shrinkage_weight.is_nan() || self.shrinkage_weight < 0.0 {
            return Err(Error::Config("shrinkage_weight must be >= 0".into()));
        }
        if self.min_samples_per_arm == 0 {
            return Err(Error::Config("min_samples_per_arm must be >= 1".into()));
        }
        if let Backend::DoublyRobustForest(p) = &self.backend {
            p.validate()?;
        }
        Ok(())
    }

    /// Short stable digest of the settings, stored in model provenance.
    pub fn digest(&self) -> String {
        short_hash(format!("{self:?}").as_bytes())
    }
}

pub(crate) fn short_hash(bytes: &[u8]) -> String {
    Sha256::digest(bytes)[..8].iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LookupEntry {
    pub recovery: RecoveryMacro,
    /// Estimated expected residual path length.
    pub effect: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Provenance {
    pub scenario: String,
    pub teacher: String,
    /// Unix seconds; suite runs leave it unset so model files are reproducible.
    pub fitted_at: Option<u64>,
    pub config_hash: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LookupModel {
    pub entries: BTreeMap<CollisionContext, LookupEntry>,
    pub provenance: Provenance,
    /// Non-fatal fit diagnostics, e.g. every context under-supported.
    pub warnings: Vec<String>,
}

impl LookupModel {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn with_provenance(mut self, scenario: impl Into<String>, teacher: impl Into<String>) -> Self {
        self.provenance.scenario = scenario.into();
        self.provenance.teacher = teacher.into();
        self
    }

    pub fn to_csv(&self) -> String {
        let p = &self.provenance;
        let mut out = format!(
            "{MODEL_MAGIC}\n# scenario={} teacher={} fitted_at={} config_hash={}\n",
            p.scenario,
            p.teacher,
            p.fitted_at.map_or_else(|| "-".to_string(), |t| t.to_string()),
            p.config_hash
        );
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(MODEL_HEADER).expect("in-memory write");
        for (ctx, e) in &self.entries {
            w.write_record([
                ctx.state.row.to_string(),
                ctx.state.col.to_string(),
                ctx.attempted.to_string(),
                e.recovery.to_string(),
                format!("{:.6}", e.effect),
                e.support.to_string(),
            ])
            .expect("in-memory write");
        }
        out.push_str(&String::from_utf8(w.into_inner().expect("in-memory flush")).expect("ascii csv"));
        out
    }

    pub fn write_csv<W: Write>(&self, mut writer: W) -> Result<()> {
        writer
            .write_all(self.to_csv().as_bytes())
            .map_err(|e| Error::io("<lookup model>", e))
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut reader = BufReader::new(reader);
        let mut line = String::new();
        let mut next_line = |reader: &mut BufReader<R>| -> Result<String> {
            line.clear();
            reader.read_line(&mut line).map_err(|e| Error::io("<lookup model>", e))?;
            Ok(line.trim_end().to_string())
        };
        let magic = next_line(&mut reader)?;
        if magic != MODEL_MAGIC {
            return Err(Error::Parse(format!("not a lookup model: {magic:?}")));
        }
        let meta = next_line(&mut reader)?;
        let mut provenance = Provenance::default();
        for kv in meta.trim_start_matches('#').split_whitespace() {
            let Some((k, v)) = kv.split_once('=') else {
                return Err(Error::Parse(format!("bad provenance field {kv:?}")));
            };
            match k {
                "scenario" => provenance.scenario = v.to_string(),
                "teacher" => provenance.teacher = v.to_string(),
                "config_hash" => provenance.config_hash = v.to_string(),
                "fitted_at" if v == "-" => provenance.fitted_at = None,
                "fitted_at" => {
                    provenance.fitted_at = Some(v.parse().map_err(|_| Error::Parse(format!("bad timestamp {v:?}")))?)
                }
                _ => return Err(Error::Parse(format!("unknown provenance key {k:?}"))),
            }
        }
        let mut rd = csv::Reader::from_reader(reader);
        if rd.headers()?.iter().ne(MODEL_HEADER) {
            return Err(Error::Parse("unexpected lookup model header".into()));
        }
        let num = |s: &str| s.parse::<usize>().map_err(|_| Error::Parse(format!("bad number {s:?}")));
        let mut entries = BTreeMap::new();
        for row in rd.records() {
            let row = row?;
            let attempted = row[2]
                .chars()
                .next()
                .and_then(Action::from_char)
                .ok_or_else(|| Error::Parse(format!("bad direction {:?}", &row[2])))?;
            let ctx = CollisionContext {
                state: Cell::new(num(&row[0])?, num(&row[1])?),
                attempted,
            };
            let entry = LookupEntry {
                recovery: row[3].parse()?,
                effect: row[4].parse().map_err(|_| Error::Parse(format!("bad effect {:?}", &row[4])))?,
                support: num(&row[5])?,
            };
            if entries.insert(ctx, entry).is_some() {
                return Err(Error::Parse(format!("duplicate context {ctx}")));
            }
        }
        Ok(LookupModel {
            entries,
            provenance,
            warnings: Vec::new(),
        })
    }
}

/// Exact-match lookup on (state, attempted direction).
pub fn query<'m>(model: &'m LookupModel, context: &CollisionContext) -> Option<&'m RecoveryMacro> {
    model.entries.get(context).map(|e| &e.recovery)
}

/// Point estimate of the expected residual path length after running
/// `recovery` in `context`. Never below the macro's own length.
pub fn estimate_effect(
    dataset: &EffectDataset,
    context: &CollisionContext,
    recovery: &RecoveryMacro,
    config: &EstimatorConfig,
) -> Result<f64> {
    config.validate()?;
    let support = dataset.context_records(context).filter(|r| &r.recovery == recovery).count();
    if support == 0 {
        return Err(Error::UnseenArm(context.to_string(), recovery.to_string()));
    }
    let raw = match &config.backend {
        Backend::StratifiedMean => stratified_estimate(dataset, context, recovery, config.shrinkage_weight),
        Backend::DoublyRobustForest(params) => forest_estimate(dataset, context, recovery, params),
    };
    Ok(raw.max(recovery.len() as f64))
}

fn stratified_estimate(dataset: &EffectDataset, context: &CollisionContext, recovery: &RecoveryMacro, shrinkage: f64) -> f64 {
    let recs: Vec<&RaExperience> = dataset.context_records(context).collect();
    let n_ctx = recs.len() as f64;
    let x_ctx = recs.iter().map(|r| r.prior_path_length as f64).sum::<f64>() / n_ctx;

    // Pooled within-arm slope of outcome on prior length.
    let mut by_arm: BTreeMap<&RecoveryMacro, Vec<(f64, f64)>> = BTreeMap::new();
    for r in &recs {
        by_arm
            .entry(&r.recovery)
            .or_default()
            .push((r.prior_path_length as f64, r.residual_path_length as f64));
    }
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for pts in by_arm.values() {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        for &(x, y) in pts {
            sxy += (x - mx) * (y - my);
            sxx += (x - mx) * (x - mx);
        }
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };

    let pts = &by_arm[recovery];
    let n = pts.len() as f64;
    let x_arm = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let y_arm = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let adjusted = y_arm - slope * (x_arm - x_ctx);
    if shrinkage == 0.0 {
        return adjusted;
    }

    let (sum, count) = dataset
        .records()
        .iter()
        .filter(|r| &r.recovery == recovery)
        .fold((0.0, 0usize), |(s, c), r| (s + r.residual_path_length as f64, c + 1));
    let global = sum / count as f64;
    (n * adjusted + shrinkage * global) / (n + shrinkage)
}

fn forest_estimate(dataset: &EffectDataset, context: &CollisionContext, recovery: &RecoveryMacro, params: &ForestParams) -> f64 {
    let recs: Vec<&RaExperience> = dataset.context_records(context).collect();
    let x: Vec<f64> = recs.iter().map(|r| r.prior_path_length as f64).collect();
    let y: Vec<f64> = recs.iter().map(|r| r.residual_path_length as f64).collect();
    let t: Vec<f64> = recs.iter().map(|r| f64::from(u8::from(&r.recovery == recovery))).collect();
    let seed = params.seed ^ u64::from_le_bytes(
        Sha256::digest(format!("{context}/{recovery}").as_bytes())[..8]
            .try_into()
            .expect("8 bytes"),
    );
    forest::treated_outcome(&x, &y, &t, params, seed)
}

// Estimates that differ only by rounding count as ties, so that shifting
// every outcome by a constant cannot flip the choice.
fn same_estimate(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

/// Builds the lookup model: per context, the sufficiently supported macro
/// with the lowest estimate. Ties go to the shorter macro, then to the
/// lexicographically smaller action string.
pub fn fit(dataset: &EffectDataset, config: &EstimatorConfig) -> Result<LookupModel> {
    config.validate()?;
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut model = LookupModel {
        provenance: Provenance {
            config_hash: config.digest(),
            ..Provenance::default()
        },
        ..LookupModel::default()
    };
    for context in dataset.contexts() {
        let mut best: Option<LookupEntry> = None;
        for (recovery, support) in dataset.arms(context) {
            if support < config.min_samples_per_arm {
                continue;
            }
            let effect = estimate_effect(dataset, context, recovery, config)?;
            let better = match &best {
                None => true,
                Some(b) if same_estimate(effect, b.effect) => {
                    (recovery.len(), recovery.to_string()) < (b.recovery.len(), b.recovery.to_string())
                }
                Some(b) => effect < b.effect,
            };
            if better {
                best = Some(LookupEntry {
                    recovery: recovery.clone(),
                    effect,
                    support,
                });
            }
        }
        if let Some(entry) = best {
            model.entries.insert(*context, entry);
        }
    }
    if model.is_empty() {
        let contexts: BTreeSet<_> = dataset.contexts().collect();
        model.warnings.push(format!(
            "all {} contexts are under-supported (min_samples_per_arm = {})",
            contexts.len(),
            config.min_samples_per_arm
        ));
    }
    Ok(model)
}
