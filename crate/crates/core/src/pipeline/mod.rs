//! File-based pipeline: configuration, artifacts and the commands that
//! chain world generation, unit construction, features, training,
//! evaluation and serving simulation.

pub mod checkpoint;
pub mod jsonl;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::features::{split_by_day, FeatureConfig, FeatureVocab, Featurizer, TrainingSample};
use crate::metrics::{domain_split_eval, EvalReport, ScoredSample};
use crate::models::{train, ModelKind, Network, NetworkConfig, TrainConfig};
use crate::sim::{
    run_ab_test, run_sessions, AbConfig, AbMode, AbReport, SessionOutcome, SimConfig,
};
use crate::synth::{
    generate_catalog, simulate_log, CatalogConfig, GroundTruth, LogConfig, SynthItem, SynthUser,
    World,
};
use crate::types::{Domain, InteractionEvent, UserId};
use crate::units::{InterestUnit, UnitConfig, UnitIndex, UnitSet};
use jsonl::{read_json, read_jsonl, write_json, write_jsonl, write_text};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedOverrides {
    pub world: Option<u64>,
    pub units: Option<u64>,
    pub model: Option<u64>,
    pub sim: Option<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WorldBlock {
    pub catalog: CatalogConfig,
    pub log: LogConfig,
}

/// Network shape and optimizer settings shared by every trained kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelBlock {
    pub kinds: Vec<ModelKind>,
    pub network: NetworkConfig,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub adagrad_decay: f64,
    pub adagrad_epsilon: f64,
    pub log_every: usize,
}

impl Default for ModelBlock {
    fn default() -> Self {
        let t = TrainConfig::default();
        ModelBlock {
            kinds: ModelKind::ALL.to_vec(),
            network: NetworkConfig::default(),
            learning_rate: t.learning_rate,
            batch_size: t.batch_size,
            epochs: t.epochs,
            adagrad_decay: t.adagrad_decay,
            adagrad_epsilon: t.adagrad_epsilon,
            log_every: t.log_every,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalBlock {
    /// Samples from this day on are held out; earlier days train.
    pub test_day: u32,
    pub base_model: ModelKind,
}

impl Default for EvalBlock {
    fn default() -> Self {
        EvalBlock {
            test_day: 8,
            base_model: ModelKind::Din,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateBlock {
    pub model: ModelKind,
}

impl Default for SimulateBlock {
    fn default() -> Self {
        SimulateBlock {
            model: ModelKind::IuBoosted,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AbBlock {
    pub model_a: ModelKind,
    pub model_b: ModelKind,
    pub split: f64,
    pub mode: AbMode,
}

impl Default for AbBlock {
    fn default() -> Self {
        let c = AbConfig::default();
        AbBlock {
            model_a: ModelKind::Din,
            model_b: ModelKind::IuBoosted,
            split: c.split,
            mode: c.mode,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Seed of every step without an entry in `seeds`.
    pub seed: u64,
    pub seeds: SeedOverrides,
    pub world: WorldBlock,
    pub units: UnitConfig,
    pub features: FeatureConfig,
    pub model: ModelBlock,
    pub eval: EvalBlock,
    pub simulate: SimulateBlock,
    pub sim: SimConfig,
    pub ab: AbBlock,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 1,
            seeds: SeedOverrides::default(),
            world: WorldBlock::default(),
            units: UnitConfig::default(),
            features: FeatureConfig::default(),
            model: ModelBlock::default(),
            eval: EvalBlock::default(),
            simulate: SimulateBlock::default(),
            sim: SimConfig::default(),
            ab: AbBlock::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    pub world: u64,
    pub units: u64,
    pub model: u64,
    pub sim: u64,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

impl PipelineConfig {
    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Schema {
            path: path.to_path_buf(),
            line: e.span().map_or(0, |s| line_of(text, s.start)),
            message: e.message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, path)
    }

    /// Replaces the base seed and drops per-step overrides.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.seeds = SeedOverrides::default();
        self
    }

    pub fn seeds(&self) -> Seeds {
        let s = &self.seeds;
        Seeds {
            world: s.world.unwrap_or(self.seed),
            units: s.units.unwrap_or(self.seed),
            model: s.model.unwrap_or(self.seed),
            sim: s.sim.unwrap_or(self.seed),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.world.catalog.validate()?;
        self.units.validate()?;
        self.features.validate()?;
        self.model.network.validate()?;
        self.train_config().validate()?;
        self.sim.validate()?;
        if self.model.kinds.is_empty() {
            return Err(Error::Config("model.kinds is empty".into()));
        }
        let horizon = self.world.log.horizon_days;
        if self.eval.test_day < 2 || self.eval.test_day > horizon {
            return Err(Error::Config(format!(
                "eval.test_day {} must lie in 2..={horizon}",
                self.eval.test_day
            )));
        }
        if self.sim.start_day < horizon {
            return Err(Error::Config(format!(
                "sim.start_day {} overlaps the {horizon}-day log",
                self.sim.start_day
            )));
        }
        for (what, k) in [
            ("eval.base_model", self.eval.base_model),
            ("simulate.model", self.simulate.model),
            ("ab.model_a", self.ab.model_a),
            ("ab.model_b", self.ab.model_b),
        ] {
            if !self.model.kinds.contains(&k) {
                return Err(Error::Config(format!(
                    "{what} {} is not in model.kinds",
                    k.name()
                )));
            }
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        let m = &self.model;
        TrainConfig {
            learning_rate: m.learning_rate,
            batch_size: m.batch_size,
            epochs: m.epochs,
            seed: self.seeds().model,
            adagrad_decay: m.adagrad_decay,
            adagrad_epsilon: m.adagrad_epsilon,
            log_every: m.log_every,
        }
    }

    /// SHA-256 over the canonical JSON form, hex encoded.
    pub fn digest(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}

/// Every file the pipeline reads or writes, relative to one output directory.
#[derive(Clone, Debug)]
pub struct Paths {
    pub out: PathBuf,
}

impl Paths {
    pub fn new(out: impl Into<PathBuf>) -> Self {
        Paths { out: out.into() }
    }

    fn file(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    pub fn catalog(&self) -> PathBuf {
        self.file("catalog.jsonl")
    }
    pub fn users(&self) -> PathBuf {
        self.file("users.jsonl")
    }
    pub fn ground_truth(&self) -> PathBuf {
        self.file("ground_truth.json")
    }
    pub fn events(&self) -> PathBuf {
        self.file("events.jsonl")
    }
    pub fn units(&self) -> PathBuf {
        self.file("units.jsonl")
    }
    pub fn features(&self) -> PathBuf {
        self.file("features.jsonl")
    }
    pub fn vocab(&self) -> PathBuf {
        self.file("vocab.json")
    }
    pub fn iu_stats(&self, day: u32) -> PathBuf {
        self.file(&format!("iu_stats_day{day}.jsonl"))
    }
    pub fn checkpoint(&self, kind: ModelKind) -> PathBuf {
        self.file(&format!("checkpoints/{}.iu4r", kind.name()))
    }
    pub fn loss_curve(&self) -> PathBuf {
        self.file("loss_curve.csv")
    }
    pub fn scored(&self) -> PathBuf {
        self.file("scored_samples.jsonl")
    }
    pub fn report(&self) -> PathBuf {
        self.file("report.json")
    }
    pub fn sim_events(&self) -> PathBuf {
        self.file("sim_events.jsonl")
    }
    pub fn sim_unit_pages(&self) -> PathBuf {
        self.file("sim_unit_pages.jsonl")
    }
    pub fn sim_report(&self) -> PathBuf {
        self.file("sim_report.json")
    }
    pub fn ab_report(&self) -> PathBuf {
        self.file("ab_report.json")
    }
    pub fn manifest(&self) -> PathBuf {
        self.file("manifest.json")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Synth,
    BuildIu,
    Featurize,
    Train,
    Eval,
    Simulate,
    AbTest,
}

impl Command {
    pub const ALL: [Command; 7] = [
        Command::Synth,
        Command::BuildIu,
        Command::Featurize,
        Command::Train,
        Command::Eval,
        Command::Simulate,
        Command::AbTest,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Command::Synth => "synth",
            Command::BuildIu => "build-iu",
            Command::Featurize => "featurize",
            Command::Train => "train",
            Command::Eval => "eval",
            Command::Simulate => "simulate",
            Command::AbTest => "ab-test",
        }
    }
}

/// Outputs of each command run in a directory, with the config they used.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub commands: BTreeMap<String, ManifestEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub config_digest: String,
    pub outputs: Vec<String>,
}

/// Scores of one model on one held-out impression.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoredRecord {
    pub model: ModelKind,
    pub user_id: UserId,
    pub score: f64,
    pub label: u8,
    pub domain: Domain,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportFile {
    pub config_digest: String,
    pub test_day: u32,
    pub train_samples: usize,
    pub eval: EvalReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimReportFile {
    pub config_digest: String,
    pub model: ModelKind,
    pub users: usize,
    pub outcome: SessionOutcome,
    pub overall: crate::sim::Counters,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbReportFile {
    pub config_digest: String,
    pub ab: AbReport,
}

/// Runs commands against one output directory.
pub struct Pipeline {
    pub cfg: PipelineConfig,
    pub paths: Paths,
    digest: String,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig, out: impl Into<PathBuf>) -> Result<Self> {
        cfg.validate()?;
        Ok(Pipeline {
            digest: cfg.digest(),
            cfg,
            paths: Paths::new(out),
        })
    }

    pub fn digest(&self) -> &str {
        &self.digest
    }

    pub fn run(&self, cmd: Command) -> Result<()> {
        let t = Instant::now();
        info!("{}: start", cmd.name());
        let outputs = match cmd {
            Command::Synth => self.synth()?,
            Command::BuildIu => self.build_iu()?,
            Command::Featurize => self.featurize()?,
            Command::Train => self.train()?,
            Command::Eval => self.eval()?,
            Command::Simulate => self.simulate()?,
            Command::AbTest => self.ab_test()?,
        };
        self.record(cmd, outputs)?;
        info!("{}: done in {:.1?}", cmd.name(), t.elapsed());
        Ok(())
    }

    pub fn run_all(&self) -> Result<()> {
        for c in Command::ALL {
            self.run(c)?;
        }
        Ok(())
    }

    fn record(&self, cmd: Command, outputs: Vec<PathBuf>) -> Result<()> {
        let path = self.paths.manifest();
        let mut m: Manifest = if path.exists() {
            read_json(&path, cmd.name())?
        } else {
            Manifest::default()
        };
        let outputs = outputs
            .iter()
            .map(|p| {
                p.strip_prefix(&self.paths.out)
                    .unwrap_or(p)
                    .display()
                    .to_string()
            })
            .collect();
        m.commands.insert(
            cmd.name().to_string(),
            ManifestEntry {
                config_digest: self.digest.clone(),
                outputs,
            },
        );
        write_json(&path, &m)
    }

    fn synth(&self) -> Result<Vec<PathBuf>> {
        let seed = self.cfg.seeds().world;
        let mut world = generate_catalog(&self.cfg.world.catalog, seed)?;
        let events = simulate_log(&mut world, &self.cfg.world.log, seed)?;
        info!(
            "synth: {} users, {} items, {} events",
            world.users.len(),
            world.items.len(),
            events.len()
        );
        let p = &self.paths;
        write_jsonl(&p.catalog(), &world.items)?;
        write_jsonl(&p.users(), &world.users)?;
        write_json(&p.ground_truth(), &world.truth)?;
        write_jsonl(&p.events(), &events)?;
        Ok(vec![p.catalog(), p.users(), p.ground_truth(), p.events()])
    }

    pub fn load_world(&self) -> Result<World> {
        let items: Vec<SynthItem> = read_jsonl(&self.paths.catalog(), "synth")?;
        let users: Vec<SynthUser> = read_jsonl(&self.paths.users(), "synth")?;
        let truth: GroundTruth = read_json(&self.paths.ground_truth(), "synth")?;
        for (i, it) in items.iter().enumerate() {
            if it.item_id as usize != i + 1 {
                return Err(Error::Schema {
                    path: self.paths.catalog(),
                    line: i + 1,
                    message: format!("item_id {} out of sequence", it.item_id),
                });
            }
        }
        for (i, u) in users.iter().enumerate() {
            if u.user_id as usize != i + 1 {
                return Err(Error::Schema {
                    path: self.paths.users(),
                    line: i + 1,
                    message: format!("user_id {} out of sequence", u.user_id),
                });
            }
        }
        Ok(World {
            users,
            items,
            truth,
        })
    }

    pub fn load_events(&self) -> Result<Vec<InteractionEvent>> {
        read_jsonl(&self.paths.events(), "synth")
    }

    fn build_iu(&self) -> Result<Vec<PathBuf>> {
        let items: Vec<SynthItem> = read_jsonl(&self.paths.catalog(), "synth")?;
        let index = UnitIndex::build(&items, &self.cfg.units, self.cfg.seeds().units)?;
        let set = index.unit_set()?;
        info!(
            "build-iu: {} units over {} items",
            set.units.len(),
            items.len()
        );
        write_jsonl(&self.paths.units(), &set.units)?;
        Ok(vec![self.paths.units()])
    }

    pub fn load_units(&self) -> Result<UnitSet> {
        let units: Vec<InterestUnit> = read_jsonl(&self.paths.units(), "build-iu")?;
        UnitSet::new(units)
    }

    /// Featurizer whose last snapshot covers the whole log.
    pub fn featurizer(
        &self,
        world: &World,
        units: &UnitSet,
        events: &[InteractionEvent],
    ) -> Result<Featurizer> {
        Featurizer::new(
            &world.items,
            world.users.len(),
            units,
            &self.cfg.units.precedence,
            events,
            self.cfg.world.log.horizon_days + 1,
            &self.cfg.features,
        )
    }

    fn featurize(&self) -> Result<Vec<PathBuf>> {
        let world = self.load_world()?;
        let units = self.load_units()?;
        let events = self.load_events()?;
        let fz = self.featurizer(&world, &units, &events)?;
        let samples = fz.build_samples(&events);
        info!("featurize: {} samples", samples.len());
        let p = &self.paths;
        write_jsonl(&p.features(), &samples)?;
        write_json(&p.vocab(), &fz.vocab)?;
        let mut out = vec![p.features(), p.vocab()];
        for (d, snap) in fz.snapshots().iter().enumerate().skip(1) {
            let path = p.iu_stats(d as u32);
            write_jsonl(&path, snap.stats.values())?;
            out.push(path);
        }
        Ok(out)
    }

    pub fn load_vocab(&self) -> Result<FeatureVocab> {
        read_json(&self.paths.vocab(), "featurize")
    }

    pub fn load_samples(&self) -> Result<(Vec<TrainingSample>, Vec<TrainingSample>)> {
        let samples: Vec<TrainingSample> = read_jsonl(&self.paths.features(), "featurize")?;
        Ok(split_by_day(samples, self.cfg.eval.test_day))
    }

    fn train(&self) -> Result<Vec<PathBuf>> {
        let vocab = self.load_vocab()?;
        let (train_s, _) = self.load_samples()?;
        let tc = self.cfg.train_config();
        let mut csv = String::from("model,step,loss\n");
        let mut out = Vec::new();
        for &kind in &self.cfg.model.kinds {
            let t = Instant::now();
            let mut net = Network::new(
                kind,
                &self.cfg.model.network,
                &vocab,
                self.cfg.seeds().model,
            )?;
            let curve = train(&mut net, &train_s, &tc)?;
            info!(
                "train: {} on {} samples, final loss {:.5} in {:.1?}",
                kind.name(),
                train_s.len(),
                curve.smoothed_tail(100).unwrap_or(f64::NAN),
                t.elapsed()
            );
            for (i, l) in curve.losses.iter().enumerate() {
                csv.push_str(&format!("{},{},{}\n", kind.name(), i + 1, l));
            }
            let path = self.paths.checkpoint(kind);
            checkpoint::save(&path, &net, &self.digest)?;
            out.push(path);
        }
        write_text(&self.paths.loss_curve(), &csv)?;
        out.push(self.paths.loss_curve());
        Ok(out)
    }

    pub fn load_model(&self, kind: ModelKind, vocab: &FeatureVocab) -> Result<Network> {
        checkpoint::load(
            &self.paths.checkpoint(kind),
            &self.cfg.model.network,
            vocab,
            &self.digest,
        )
    }

    fn eval(&self) -> Result<Vec<PathBuf>> {
        let vocab = self.load_vocab()?;
        let (train_s, test_s) = self.load_samples()?;
        let mut records = Vec::new();
        let mut per_model = Vec::new();
        for &kind in &self.cfg.model.kinds {
            let net = self.load_model(kind, &vocab)?;
            let mut scored = Vec::with_capacity(test_s.len());
            for s in &test_s {
                let score = net.predict_ctr(s.user_input(), s.target_input())?;
                scored.push(ScoredSample {
                    user_id: s.user_id,
                    score,
                    label: s.label,
                    domain: s.domain,
                });
                records.push(ScoredRecord {
                    model: kind,
                    user_id: s.user_id,
                    score,
                    label: s.label,
                    domain: s.domain,
                });
            }
            per_model.push((kind.name().to_string(), scored));
        }
        let eval = domain_split_eval(&per_model, self.cfg.eval.base_model.name())?;
        for r in &eval.rows {
            info!(
                "eval: {:>10} auc {:?} gauc {:?} iu {:?} normal {:?}",
                r.model, r.overall.auc, r.overall.gauc, r.iu.auc, r.normal.auc
            );
        }
        write_jsonl(&self.paths.scored(), &records)?;
        write_json(
            &self.paths.report(),
            &ReportFile {
                config_digest: self.digest.clone(),
                test_day: self.cfg.eval.test_day,
                train_samples: train_s.len(),
                eval,
            },
        )?;
        Ok(vec![self.paths.scored(), self.paths.report()])
    }

    fn serving_inputs(&self) -> Result<(World, UnitSet, Featurizer, FeatureVocab)> {
        let world = self.load_world()?;
        let units = self.load_units()?;
        let events = self.load_events()?;
        let fz = self.featurizer(&world, &units, &events)?;
        let vocab = self.load_vocab()?;
        if fz.vocab != vocab {
            return Err(Error::Config(format!(
                "{} does not match the current catalog and units; rerun featurize",
                self.paths.vocab().display()
            )));
        }
        Ok((world, units, fz, vocab))
    }

    fn simulate(&self) -> Result<Vec<PathBuf>> {
        let (world, units, fz, vocab) = self.serving_inputs()?;
        let kind = self.cfg.simulate.model;
        let net = self.load_model(kind, &vocab)?;
        let run = run_sessions(
            &world,
            &units,
            &fz,
            &net,
            &self.cfg.sim,
            self.cfg.seeds().sim,
        )?;
        info!(
            "simulate: {} events, {:?}",
            run.events.len(),
            run.outcome.overall()
        );
        write_jsonl(&self.paths.sim_events(), &run.events)?;
        write_jsonl(&self.paths.sim_unit_pages(), &run.unit_pages)?;
        write_json(
            &self.paths.sim_report(),
            &SimReportFile {
                config_digest: self.digest.clone(),
                model: kind,
                users: run.users,
                overall: run.outcome.overall(),
                outcome: run.outcome,
            },
        )?;
        Ok(vec![
            self.paths.sim_events(),
            self.paths.sim_unit_pages(),
            self.paths.sim_report(),
        ])
    }

    fn ab_test(&self) -> Result<Vec<PathBuf>> {
        let (world, units, fz, vocab) = self.serving_inputs()?;
        let ab = &self.cfg.ab;
        let a = self.load_model(ab.model_a, &vocab)?;
        let b = self.load_model(ab.model_b, &vocab)?;
        let report = run_ab_test(
            &world,
            &units,
            &fz,
            (ab.model_a.name(), &a),
            (ab.model_b.name(), &b),
            &self.cfg.sim,
            &AbConfig {
                split: ab.split,
                mode: ab.mode,
            },
            self.cfg.seeds().sim,
        )?;
        for r in &report.rows {
            info!(
                "ab-test: {:<20} ctr {:?} clicks {:?} bills {:?}",
                r.row, r.ctr_delta_pct, r.clicks_delta_pct, r.bills_delta_pct
            );
        }
        write_json(
            &self.paths.ab_report(),
            &AbReportFile {
                config_digest: self.digest.clone(),
                ab: report,
            },
        )?;
        Ok(vec![self.paths.ab_report()])
    }
}

#[cfg(test)]
mod tests;
