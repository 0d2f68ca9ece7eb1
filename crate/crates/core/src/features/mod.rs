//! Unit-level statistics, user-unit cross features and click sequences,
//! joined into per-impression training samples.

pub mod audit;
pub mod buckets;
pub mod cross;
pub mod sample;
pub mod sequence;
pub mod stats;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synth::SynthItem;
use crate::types::{
    day_of, day_start, Domain, EventKind, InteractionEvent, ItemId, IuId, Timestamp, UserId,
};
use crate::units::{resolve_item_iu, IuType, UnitSet};

pub use audit::{time_travel_audit, AuditReport};
pub use buckets::{count_bucket, log_bucket, recency_bucket, QuantileBuckets};
pub use cross::{accumulate_cross, cross_features, CrossIds, CrossTable, UserIuCross};
pub use sample::{
    FeatureVocab, ItemFeat, IuEntryFeat, TargetFeatures, TargetInput, TrainingSample, UserInput,
    STAT_FIELDS,
};
pub use sequence::{
    build_hier_iu_sequence, build_item_sequence, ClickIndex, HierIuClickSequence, HierIuEntry,
    ItemClickSequence,
};
pub use stats::{accumulate_iu_stats, IuStats};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub item_seq_max: usize,
    pub window_days: u32,
    pub iu_seq_max: usize,
    pub inner_max: usize,
    pub ratio_buckets: usize,
    /// Ratio buckets are fitted on the stats at the end of this day.
    pub fit_day: u32,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            item_seq_max: sequence::ITEM_SEQ_MAX,
            window_days: sequence::WINDOW_DAYS,
            iu_seq_max: sequence::IU_SEQ_MAX,
            inner_max: sequence::INNER_MAX,
            ratio_buckets: 10,
            fit_day: 1,
        }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.item_seq_max == 0 || self.iu_seq_max == 0 || self.inner_max == 0 {
            return Err(Error::Config(
                "feature sequence lengths must be positive".into(),
            ));
        }
        if self.window_days == 0 {
            return Err(Error::Config(
                "features.window_days must be positive".into(),
            ));
        }
        if self.ratio_buckets < 2 {
            return Err(Error::Config(
                "features.ratio_buckets must be at least 2".into(),
            ));
        }
        Ok(())
    }
}

/// Point-in-time unit statistics and cross table at a day boundary.
#[derive(Clone, Debug)]
pub struct DaySnapshot {
    pub as_of: Timestamp,
    pub stats: BTreeMap<IuId, IuStats>,
    pub cross: CrossTable,
}

pub fn iu_type_id(t: IuType) -> u32 {
    match t {
        IuType::Spu => 1,
        IuType::Image => 2,
        IuType::Semantic => 3,
    }
}

/// Everything needed to turn `(user, item, time)` into a [`TrainingSample`].
#[derive(Clone, Debug)]
pub struct Featurizer {
    pub cfg: FeatureConfig,
    item_side: Vec<[u32; 2]>,
    item_iu: HashMap<ItemId, IuId>,
    iu_side: HashMap<IuId, [u32; 2]>,
    clicks: ClickIndex,
    /// `snapshots[d - 1]` holds events before the start of day `d`.
    snapshots: Vec<DaySnapshot>,
    pub ctr_buckets: QuantileBuckets,
    pub vocab: FeatureVocab,
}

pub fn item_feat_of(item: &SynthItem) -> ItemFeat {
    ItemFeat {
        id: item.item_id,
        side: [item.category_id + 1, item.brand_id + 1],
    }
}

fn snapshot_pass(
    events: &[InteractionEvent],
    item_iu: &HashMap<ItemId, IuId>,
    days: u32,
) -> Vec<DaySnapshot> {
    let mut out = Vec::with_capacity(days as usize);
    let mut stats: BTreeMap<IuId, IuStats> = BTreeMap::new();
    let mut cross = CrossTable::new();
    let mut next = 0;
    for d in 1..=days {
        let as_of = day_start(d);
        while next < events.len() && events[next].ts < as_of {
            let e = &events[next];
            if let Some(&iu) = item_iu.get(&e.item_id) {
                stats
                    .entry(iu)
                    .or_insert(IuStats {
                        iu_id: iu,
                        ..Default::default()
                    })
                    .record(e.kind);
                if e.kind == EventKind::Click {
                    let c = cross.entry((e.user_id, iu)).or_default();
                    c.clicks += 1;
                    c.last_click = Some(c.last_click.map_or(e.ts, |t| t.max(e.ts)));
                }
            }
            next += 1;
        }
        out.push(DaySnapshot {
            as_of,
            stats: stats.clone(),
            cross: cross.clone(),
        });
    }
    out
}

impl Featurizer {
    /// `events` must be time ordered; snapshots are taken at the start of
    /// days `1..=days`.
    pub fn new(
        items: &[SynthItem],
        n_users: usize,
        units: &UnitSet,
        precedence: &[IuType],
        events: &[InteractionEvent],
        days: u32,
        cfg: &FeatureConfig,
    ) -> Result<Self> {
        cfg.validate()?;
        if days == 0 {
            return Err(Error::Config("featurizer needs at least one day".into()));
        }
        let n_items = items
            .iter()
            .map(|i| i.item_id)
            .chain(
                units
                    .units
                    .iter()
                    .flat_map(|u| u.member_item_ids.iter().copied()),
            )
            .max()
            .unwrap_or(0) as usize;
        let mut item_side = vec![[0u32; 2]; n_items + 1];
        let mut n_categories = 0;
        let mut n_brands = 0;
        for it in items {
            let f = item_feat_of(it);
            item_side[it.item_id as usize] = f.side;
            n_categories = n_categories.max(f.side[0] as usize);
            n_brands = n_brands.max(f.side[1] as usize);
        }
        // Unit members count even when they are no longer in the catalog.
        let item_iu: HashMap<ItemId, IuId> = items
            .iter()
            .map(|it| it.item_id)
            .chain(
                units
                    .units
                    .iter()
                    .flat_map(|u| u.member_item_ids.iter().copied()),
            )
            .filter_map(|id| resolve_item_iu(id, units, precedence).map(|u| (id, u)))
            .collect();
        let mut iu_side = HashMap::new();
        for u in &units.units {
            let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
            for &m in &u.member_item_ids {
                if let Some(side) = item_side.get(m as usize).filter(|s| s[0] != 0) {
                    *counts.entry(side[0]).or_default() += 1;
                }
            }
            let category = counts
                .iter()
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
                .map_or(0, |(&c, _)| c);
            iu_side.insert(u.iu_id, [iu_type_id(u.iu_type), category]);
        }

        let snapshots = snapshot_pass(events, &item_iu, days.max(cfg.fit_day + 1));
        let fit = &snapshots[cfg.fit_day as usize];
        let ctrs: Vec<f64> = fit.stats.values().filter_map(|s| s.ctr()).collect();
        let ctr_buckets = QuantileBuckets::fit(&ctrs, cfg.ratio_buckets);

        let log_vocab = buckets::LOG_BUCKETS + 1;
        let vocab = FeatureVocab {
            users: n_users + 1,
            items: n_items + 1,
            categories: n_categories + 1,
            brands: n_brands + 1,
            ius: units.max_id() as usize + 1,
            iu_types: 4,
            stats: [
                log_vocab,
                log_vocab,
                log_vocab,
                log_vocab,
                ctr_buckets.vocab(),
            ],
            cross: [buckets::COUNT_BUCKETS + 1, buckets::RECENCY_BUCKETS + 1],
            item_seq_max: cfg.item_seq_max,
            iu_seq_max: cfg.iu_seq_max,
            inner_max: cfg.inner_max,
        };
        Ok(Featurizer {
            cfg: cfg.clone(),
            item_side,
            item_iu,
            iu_side,
            clicks: ClickIndex::new(events),
            snapshots,
            ctr_buckets,
            vocab,
        })
    }

    pub fn item_iu(&self) -> &HashMap<ItemId, IuId> {
        &self.item_iu
    }

    pub fn iu_of(&self, item: ItemId) -> Option<IuId> {
        self.item_iu.get(&item).copied()
    }

    pub fn item_feat(&self, item: ItemId) -> ItemFeat {
        ItemFeat {
            id: item,
            side: self.item_side.get(item as usize).copied().unwrap_or([0, 0]),
        }
    }

    pub fn snapshots(&self) -> &[DaySnapshot] {
        &self.snapshots
    }

    /// Latest snapshot taken at or before `ts`.
    pub fn snapshot_for(&self, ts: Timestamp) -> &DaySnapshot {
        let d = (day_of(ts) as usize).clamp(1, self.snapshots.len());
        &self.snapshots[d - 1]
    }

    /// Appends a click made after construction, e.g. during simulation.
    pub fn record_click(&mut self, user: UserId, ts: Timestamp, item: ItemId) {
        self.clicks.push(user, ts, item);
    }

    pub fn stat_ids(&self, stats: Option<&IuStats>) -> [u32; STAT_FIELDS] {
        match stats {
            None => [
                log_bucket(0),
                log_bucket(0),
                log_bucket(0),
                log_bucket(0),
                self.ctr_buckets.bucket(None),
            ],
            Some(s) => [
                log_bucket(s.impressions),
                log_bucket(s.clicks),
                log_bucket(s.inquiries),
                log_bucket(s.transactions),
                self.ctr_buckets.bucket(s.ctr()),
            ],
        }
    }

    /// User context shared by every candidate scored at `ts`.
    pub fn user_context(&self, user: UserId, ts: Timestamp) -> UserContext {
        let seq = self
            .clicks
            .item_sequence(user, ts, self.cfg.window_days, self.cfg.item_seq_max);
        let hier = HierIuClickSequence::from_items(
            &seq,
            |i| self.iu_of(i),
            self.cfg.iu_seq_max,
            self.cfg.inner_max,
        );
        let iu_seq = hier
            .entries
            .iter()
            .map(|e| IuEntryFeat {
                iu_id: e.iu_id,
                side: self.iu_side.get(&e.iu_id).copied().unwrap_or([0, 0]),
                inner: e.items.iter().map(|&i| self.item_feat(i)).collect(),
            })
            .collect();
        UserContext {
            user_id: user,
            ts,
            item_seq: seq.items.iter().map(|&i| self.item_feat(i)).collect(),
            iu_seq,
            seq,
        }
    }

    pub fn target(&self, ctx: &UserContext, item: ItemId) -> TargetFeatures {
        let snap = self.snapshot_for(ctx.ts);
        let Some(u) = self.iu_of(item) else {
            return TargetFeatures {
                item: self.item_feat(item),
                iu_id: 0,
                iu_side: [0, 0],
                stats: [0; STAT_FIELDS],
                cross: [0, 0],
                iu_inner: Vec::new(),
            };
        };
        let c = cross_features(ctx.user_id, u, &snap.cross, ctx.ts);
        let iu_inner = ctx
            .seq
            .items
            .iter()
            .filter(|&&i| self.iu_of(i) == Some(u))
            .take(self.cfg.inner_max)
            .map(|&i| self.item_feat(i))
            .collect();
        TargetFeatures {
            item: self.item_feat(item),
            iu_id: u,
            iu_side: self.iu_side.get(&u).copied().unwrap_or([0, 0]),
            stats: self.stat_ids(snap.stats.get(&u)),
            cross: [c.count + 1, c.recency + 1],
            iu_inner,
        }
    }

    pub fn sample(
        &self,
        ctx: &UserContext,
        item: ItemId,
        label: u8,
        domain: Domain,
    ) -> TrainingSample {
        let t = self.target(ctx, item);
        TrainingSample {
            ts: ctx.ts,
            user_id: ctx.user_id,
            label,
            domain,
            snapshot: self.snapshot_for(ctx.ts).as_of,
            item: t.item,
            iu_id: t.iu_id,
            iu_side: t.iu_side,
            stats: t.stats,
            cross: t.cross,
            iu_inner: t.iu_inner,
            item_seq: ctx.item_seq.clone(),
            iu_seq: ctx.iu_seq.clone(),
        }
    }

    /// One sample per impression; the label is set by a later click of the
    /// same user on the same item before that pair's next impression.
    pub fn build_samples(&self, events: &[InteractionEvent]) -> Vec<TrainingSample> {
        let mut samples = Vec::new();
        let mut last: HashMap<(UserId, ItemId), usize> = HashMap::new();
        let mut ctx: Option<UserContext> = None;
        for e in events {
            match e.kind {
                EventKind::Impression => {
                    let reuse = matches!(&ctx, Some(c) if c.user_id == e.user_id && c.ts == e.ts);
                    if !reuse {
                        ctx = Some(self.user_context(e.user_id, e.ts));
                    }
                    let c = ctx.as_ref().expect("context set above");
                    last.insert((e.user_id, e.item_id), samples.len());
                    samples.push(self.sample(c, e.item_id, 0, e.surface.domain()));
                }
                EventKind::Click => {
                    if let Some(&idx) = last.get(&(e.user_id, e.item_id)) {
                        samples[idx].label = 1;
                    }
                }
                _ => {}
            }
        }
        samples
    }
}

/// Sequences of one user at one instant.
#[derive(Clone, Debug)]
pub struct UserContext {
    pub user_id: UserId,
    pub ts: Timestamp,
    pub seq: ItemClickSequence,
    pub item_seq: Vec<ItemFeat>,
    pub iu_seq: Vec<IuEntryFeat>,
}

/// Splits samples into days `< test_day` and exactly `test_day`.
pub fn split_by_day(
    samples: Vec<TrainingSample>,
    test_day: u32,
) -> (Vec<TrainingSample>, Vec<TrainingSample>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for s in samples {
        let d = day_of(s.ts);
        if d < test_day {
            train.push(s);
        } else if d == test_day {
            test.push(s);
        }
    }
    (train, test)
}
