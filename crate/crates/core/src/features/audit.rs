//! Independent replay that checks every sample feature came from the past.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::buckets::{count_bucket, recency_bucket};
use super::sample::{ItemFeat, TrainingSample};
use super::Featurizer;
use crate::types::{EventKind, InteractionEvent, ItemId, IuId, Timestamp, UserId, SECONDS_PER_DAY};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub samples: usize,
    pub violations: usize,
    /// First few violation messages.
    pub examples: Vec<String>,
}

impl AuditReport {
    fn flag(&mut self, msg: String) {
        self.violations += 1;
        if self.examples.len() < 20 {
            self.examples.push(msg);
        }
    }
}

#[derive(Default, Clone, Copy)]
struct Recount {
    impressions: u64,
    clicks: u64,
    inquiries: u64,
    transactions: u64,
}

/// Checks sequence entries against raw click events strictly before each
/// sample and statistics against a fresh recount up to the snapshot cutoff.
pub fn time_travel_audit(
    samples: &[TrainingSample],
    events: &[InteractionEvent],
    fz: &Featurizer,
) -> AuditReport {
    let mut report = AuditReport {
        samples: samples.len(),
        ..Default::default()
    };
    let mut clicks: HashMap<(UserId, ItemId), Vec<Timestamp>> = HashMap::new();
    for e in events {
        if e.kind == EventKind::Click {
            clicks.entry((e.user_id, e.item_id)).or_default().push(e.ts);
        }
    }
    for v in clicks.values_mut() {
        v.sort_unstable();
    }

    // Recounts keyed by snapshot cutoff.
    let mut cutoffs: Vec<Timestamp> = samples.iter().map(|s| s.snapshot).collect();
    cutoffs.sort_unstable();
    cutoffs.dedup();
    let mut recounts: HashMap<
        Timestamp,
        (
            HashMap<IuId, Recount>,
            HashMap<(UserId, IuId), (u64, Timestamp)>,
        ),
    > = HashMap::new();
    for &cut in &cutoffs {
        let mut stats: HashMap<IuId, Recount> = HashMap::new();
        let mut cross: HashMap<(UserId, IuId), (u64, Timestamp)> = HashMap::new();
        for e in events.iter().filter(|e| e.ts < cut) {
            let Some(iu) = fz.iu_of(e.item_id) else {
                continue;
            };
            let r = stats.entry(iu).or_default();
            match e.kind {
                EventKind::Impression => r.impressions += 1,
                EventKind::Click => {
                    r.clicks += 1;
                    let c = cross.entry((e.user_id, iu)).or_insert((0, e.ts));
                    c.0 += 1;
                    c.1 = c.1.max(e.ts);
                }
                EventKind::Inquiry => r.inquiries += 1,
                EventKind::Transaction => r.transactions += 1,
            }
        }
        recounts.insert(cut, (stats, cross));
    }

    let window = fz.cfg.window_days as Timestamp * SECONDS_PER_DAY;
    for (n, s) in samples.iter().enumerate() {
        let mut available: BTreeMap<ItemId, usize> = BTreeMap::new();
        for f in &s.item_seq {
            *available.entry(f.id).or_default() += 1;
        }
        if s.item_seq.len() > fz.cfg.item_seq_max {
            report.flag(format!(
                "sample {n}: item sequence of {} entries",
                s.item_seq.len()
            ));
        }
        for (&item, &count) in &available {
            let times = clicks
                .get(&(s.user_id, item))
                .map(Vec::as_slice)
                .unwrap_or(&[]);
            let lo = times.partition_point(|&t| t < s.ts - window);
            let hi = times.partition_point(|&t| t < s.ts);
            if hi - lo < count {
                report.flag(format!(
                    "sample {n}: item {item} not clicked {count} times before {}",
                    s.ts
                ));
            }
        }
        let contained = |list: &[ItemFeat], need_iu: IuId, what: &str, report: &mut AuditReport| {
            let mut left = available.clone();
            for f in list {
                match left.get_mut(&f.id) {
                    Some(c) if *c > 0 => *c -= 1,
                    _ => report.flag(format!(
                        "sample {n}: {what} item {} missing from item sequence",
                        f.id
                    )),
                }
                if fz.iu_of(f.id) != Some(need_iu) {
                    report.flag(format!(
                        "sample {n}: {what} item {} outside unit {need_iu}",
                        f.id
                    ));
                }
            }
        };
        if s.iu_seq.len() > fz.cfg.iu_seq_max {
            report.flag(format!("sample {n}: {} unit entries", s.iu_seq.len()));
        }
        let mut flat: BTreeMap<ItemId, usize> = BTreeMap::new();
        for e in &s.iu_seq {
            if e.inner.len() > fz.cfg.inner_max {
                report.flag(format!("sample {n}: inner list of {}", e.inner.len()));
            }
            contained(&e.inner, e.iu_id, "iu_seq", &mut report);
            for f in &e.inner {
                *flat.entry(f.id).or_default() += 1;
            }
        }
        for (item, c) in flat {
            if available.get(&item).copied().unwrap_or(0) < c {
                report.flag(format!(
                    "sample {n}: flattened unit sequence overuses item {item}"
                ));
            }
        }
        if s.iu_id != 0 {
            contained(&s.iu_inner, s.iu_id, "iu_inner", &mut report);
        }

        if s.snapshot > s.ts {
            report.flag(format!(
                "sample {n}: snapshot {} after sample time {}",
                s.snapshot, s.ts
            ));
        }
        if s.iu_id != 0 {
            let (stats, cross) = &recounts[&s.snapshot];
            let want = match stats.get(&s.iu_id) {
                None => fz.stat_ids(None),
                Some(r) => fz.stat_ids(Some(&super::IuStats {
                    iu_id: s.iu_id,
                    impressions: r.impressions,
                    clicks: r.clicks,
                    inquiries: r.inquiries,
                    transactions: r.transactions,
                })),
            };
            if want != s.stats {
                report.flag(format!(
                    "sample {n}: stats {:?} but recount gives {:?}",
                    s.stats, want
                ));
            }
            let (cnt, last) = match cross.get(&(s.user_id, s.iu_id)) {
                Some(&(c, t)) => (c, Some(t)),
                None => (0, None),
            };
            let want = [count_bucket(cnt) + 1, recency_bucket(last, s.ts) + 1];
            if want != s.cross {
                report.flag(format!(
                    "sample {n}: cross {:?} but recount gives {:?}",
                    s.cross, want
                ));
            }
        }
    }
    report
}
