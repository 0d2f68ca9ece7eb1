use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::types::{EventKind, InteractionEvent, ItemId, IuId, Timestamp};

/// Behavior accumulated over every item that ever belonged to a unit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IuStats {
    pub iu_id: IuId,
    pub impressions: u64,
    pub clicks: u64,
    pub inquiries: u64,
    pub transactions: u64,
}

impl IuStats {
    pub fn record(&mut self, kind: EventKind) {
        match kind {
            EventKind::Impression => self.impressions += 1,
            EventKind::Click => self.clicks += 1,
            EventKind::Inquiry => self.inquiries += 1,
            EventKind::Transaction => self.transactions += 1,
        }
    }

    pub fn ctr(&self) -> Option<f64> {
        (self.impressions > 0).then(|| self.clicks as f64 / self.impressions as f64)
    }

    /// More clicks than impressions can happen with multi-surface logging.
    pub fn clicks_exceed_impressions(&self) -> bool {
        self.clicks > self.impressions
    }
}

/// Counters over events strictly before `as_of` whose item maps to a unit.
///
/// Only the item to unit mapping is consulted, never the live catalog, so
/// sold or deleted items keep contributing.
pub fn accumulate_iu_stats(
    events: &[InteractionEvent],
    item_iu: &HashMap<ItemId, IuId>,
    as_of: Timestamp,
) -> BTreeMap<IuId, IuStats> {
    let mut out: BTreeMap<IuId, IuStats> = BTreeMap::new();
    for e in events.iter().take_while(|e| e.ts < as_of) {
        if let Some(&iu) = item_iu.get(&e.item_id) {
            out.entry(iu)
                .or_insert(IuStats {
                    iu_id: iu,
                    ..IuStats::default()
                })
                .record(e.kind);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Surface;

    fn ev(ts: Timestamp, item: ItemId, kind: EventKind) -> InteractionEvent {
        InteractionEvent {
            ts,
            user_id: 1,
            item_id: item,
            kind,
            surface: Surface::Homepage,
        }
    }

    #[test]
    fn additive_over_members() {
        let mut events = Vec::new();
        for t in 0..3 {
            events.push(ev(t, 1, EventKind::Impression));
        }
        events.push(ev(3, 1, EventKind::Click));
        events.push(ev(4, 2, EventKind::Impression));
        events.push(ev(5, 2, EventKind::Impression));
        events.push(ev(6, 2, EventKind::Click));
        events.push(ev(7, 3, EventKind::Click));
        let map = HashMap::from([(1, 9), (2, 9)]);
        let stats = accumulate_iu_stats(&events, &map, 100);
        assert_eq!(stats.len(), 1);
        assert_eq!((stats[&9].impressions, stats[&9].clicks), (5, 2));
        assert_eq!(stats[&9].ctr(), Some(0.4));
    }

    #[test]
    fn cutoff_is_exclusive() {
        let events = vec![
            ev(0, 1, EventKind::Impression),
            ev(10, 1, EventKind::Impression),
        ];
        let stats = accumulate_iu_stats(&events, &HashMap::from([(1, 1)]), 10);
        assert_eq!(stats[&1].impressions, 1);
    }

    #[test]
    fn flags_click_surplus() {
        let s = IuStats {
            iu_id: 1,
            impressions: 1,
            clicks: 2,
            ..Default::default()
        };
        assert!(s.clicks_exceed_impressions());
        assert_eq!(IuStats::default().ctr(), None);
    }
}
