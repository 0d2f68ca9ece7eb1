use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{IuType, UnitSet};
use crate::types::{EventKind, InteractionEvent, ItemId};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageRow {
    /// Unit type name, or "total" for the union of all types.
    pub label: String,
    pub unit_count: usize,
    /// Percent of catalog items that belong to a unit.
    pub product_coverage: f64,
    pub exposure: f64,
    pub click: f64,
    pub transaction: f64,
    pub ctr: Option<f64>,
    /// CTR of items outside this row's units.
    pub baseline_ctr: Option<f64>,
    pub ctr_vs_baseline: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub rows: Vec<CoverageRow>,
}

#[derive(Default, Clone, Copy)]
struct Counts {
    impressions: u64,
    clicks: u64,
    transactions: u64,
}

impl Counts {
    fn add(&mut self, kind: EventKind) {
        match kind {
            EventKind::Impression => self.impressions += 1,
            EventKind::Click => self.clicks += 1,
            EventKind::Transaction => self.transactions += 1,
            EventKind::Inquiry => {}
        }
    }

    fn ctr(&self) -> Option<f64> {
        (self.impressions > 0).then(|| self.clicks as f64 / self.impressions as f64)
    }
}

fn pct(part: u64, whole: u64) -> f64 {
    if whole == 0 {
        0.0
    } else {
        100.0 * part as f64 / whole as f64
    }
}

/// Per-type coverage and engagement shares over `catalog` and `events`.
///
/// Each row's CTR is compared with items outside that row's units.
pub fn coverage_report(
    units: &UnitSet,
    catalog: &[ItemId],
    events: &[InteractionEvent],
) -> CoverageReport {
    let members: Vec<HashSet<ItemId>> = IuType::ALL
        .iter()
        .map(|&t| {
            catalog
                .iter()
                .copied()
                .filter(|&i| units.unit_of(i, t).is_some())
                .collect()
        })
        .collect();
    let any: HashSet<ItemId> = members.iter().flatten().copied().collect();

    let mut all = Counts::default();
    let mut inside = [Counts::default(); 4];
    let mut outside = [Counts::default(); 4];
    for e in events {
        all.add(e.kind);
        for (t, set) in members.iter().chain(std::iter::once(&any)).enumerate() {
            if set.contains(&e.item_id) {
                inside[t].add(e.kind);
            } else {
                outside[t].add(e.kind);
            }
        }
    }

    let row = |label: &str, unit_count: usize, covered: usize, t: usize| {
        let c = inside[t];
        let ctr = c.ctr();
        let baseline_ctr = outside[t].ctr();
        CoverageRow {
            label: label.to_string(),
            unit_count,
            product_coverage: pct(covered as u64, catalog.len() as u64),
            exposure: pct(c.impressions, all.impressions),
            click: pct(c.clicks, all.clicks),
            transaction: pct(c.transactions, all.transactions),
            ctr,
            baseline_ctr,
            ctr_vs_baseline: match (ctr, baseline_ctr) {
                (Some(a), Some(b)) if b > 0.0 => Some(a / b),
                _ => None,
            },
        }
    };
    let mut rows: Vec<CoverageRow> = IuType::ALL
        .iter()
        .enumerate()
        .map(|(t, &ty)| row(ty.name(), units.of_type(ty).count(), members[t].len(), t))
        .collect();
    rows.push(row("total", units.units.len(), any.len(), 3));
    CoverageReport { rows }
}
