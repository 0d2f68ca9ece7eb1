use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::types::{EventKind, InteractionEvent, ItemId, IuId, Timestamp, UserId, SECONDS_PER_DAY};

pub const ITEM_SEQ_MAX: usize = 150;
pub const WINDOW_DAYS: u32 = 30;
pub const IU_SEQ_MAX: usize = 20;
pub const INNER_MAX: usize = 5;

/// Clicked items, newest first.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ItemClickSequence {
    pub items: Vec<ItemId>,
    pub times: Vec<Timestamp>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierIuEntry {
    pub iu_id: IuId,
    /// Newest first.
    pub items: Vec<ItemId>,
}

/// Units ordered by their latest click, newest first.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierIuClickSequence {
    pub entries: Vec<HierIuEntry>,
}

impl HierIuClickSequence {
    /// Builds from an item sequence that is already newest first.
    pub fn from_items(
        seq: &ItemClickSequence,
        resolve: impl Fn(ItemId) -> Option<IuId>,
        n: usize,
        inner: usize,
    ) -> Self {
        let mut entries: Vec<HierIuEntry> = Vec::new();
        let mut slot: HashMap<IuId, usize> = HashMap::new();
        for &item in &seq.items {
            let Some(iu) = resolve(item) else { continue };
            let idx = match slot.get(&iu) {
                Some(&i) => i,
                None => {
                    if entries.len() == n {
                        continue;
                    }
                    slot.insert(iu, entries.len());
                    entries.push(HierIuEntry {
                        iu_id: iu,
                        items: Vec::new(),
                    });
                    entries.len() - 1
                }
            };
            if entries[idx].items.len() < inner {
                entries[idx].items.push(item);
            }
        }
        HierIuClickSequence { entries }
    }
}

/// Per-user click timeline for repeated point-in-time queries.
#[derive(Clone, Debug, Default)]
pub struct ClickIndex {
    by_user: HashMap<UserId, Vec<(Timestamp, ItemId)>>,
}

impl ClickIndex {
    /// `events` must be time ordered.
    pub fn new(events: &[InteractionEvent]) -> Self {
        let mut by_user: HashMap<UserId, Vec<(Timestamp, ItemId)>> = HashMap::new();
        for e in events.iter().filter(|e| e.kind == EventKind::Click) {
            by_user
                .entry(e.user_id)
                .or_default()
                .push((e.ts, e.item_id));
        }
        ClickIndex { by_user }
    }

    pub fn push(&mut self, user: UserId, ts: Timestamp, item: ItemId) {
        let clicks = self.by_user.entry(user).or_default();
        let at = clicks.partition_point(|c| c.0 <= ts);
        clicks.insert(at, (ts, item));
    }

    /// Clicks in `[as_of - window, as_of)`, newest first, at most `max`.
    pub fn item_sequence(
        &self,
        user: UserId,
        as_of: Timestamp,
        window_days: u32,
        max: usize,
    ) -> ItemClickSequence {
        let Some(clicks) = self.by_user.get(&user) else {
            return ItemClickSequence::default();
        };
        let start = as_of - window_days as Timestamp * SECONDS_PER_DAY;
        let end = clicks.partition_point(|c| c.0 < as_of);
        let begin = clicks[..end].partition_point(|c| c.0 < start);
        let mut seq = ItemClickSequence::default();
        for &(ts, item) in clicks[begin..end].iter().rev().take(max) {
            seq.items.push(item);
            seq.times.push(ts);
        }
        seq
    }
}

pub fn build_item_sequence(
    events: &[InteractionEvent],
    user: UserId,
    as_of: Timestamp,
) -> ItemClickSequence {
    ClickIndex::new(events).item_sequence(user, as_of, WINDOW_DAYS, ITEM_SEQ_MAX)
}

pub fn build_hier_iu_sequence(
    events: &[InteractionEvent],
    user: UserId,
    item_iu: &HashMap<ItemId, IuId>,
    as_of: Timestamp,
    n: usize,
) -> HierIuClickSequence {
    let seq = build_item_sequence(events, user, as_of);
    HierIuClickSequence::from_items(&seq, |i| item_iu.get(&i).copied(), n, INNER_MAX)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Surface;

    fn click(ts: Timestamp, item: ItemId) -> InteractionEvent {
        InteractionEvent {
            ts,
            user_id: 1,
            item_id: item,
            kind: EventKind::Click,
            surface: Surface::Homepage,
        }
    }

    #[test]
    fn keeps_most_recent_150() {
        let events: Vec<_> = (0..200).map(|i| click(i, i as ItemId + 1)).collect();
        let seq = build_item_sequence(&events, 1, 1000);
        assert_eq!(seq.items.len(), 150);
        assert_eq!(seq.items[0], 200);
        assert_eq!(seq.items[149], 51);
    }

    #[test]
    fn no_clicks_is_empty() {
        assert!(build_item_sequence(&[], 1, 10).items.is_empty());
    }

    #[test]
    fn click_at_as_of_excluded() {
        let events = vec![click(5, 1), click(10, 2)];
        assert_eq!(build_item_sequence(&events, 1, 10).items, vec![1]);
    }

    #[test]
    fn window_start_inclusive() {
        let as_of = 40 * SECONDS_PER_DAY;
        let start = as_of - 30 * SECONDS_PER_DAY;
        let events = vec![click(start - 1, 1), click(start, 2)];
        assert_eq!(build_item_sequence(&events, 1, as_of).items, vec![2]);
    }

    #[test]
    fn one_unit_three_clicks() {
        let events = vec![click(1, 1), click(2, 2), click(3, 3)];
        let map = HashMap::from([(1, 7), (2, 7), (3, 7)]);
        let h = build_hier_iu_sequence(&events, 1, &map, 10, IU_SEQ_MAX);
        assert_eq!(
            h.entries,
            vec![HierIuEntry {
                iu_id: 7,
                items: vec![3, 2, 1]
            }]
        );
    }

    #[test]
    fn inner_capped_at_five() {
        let events: Vec<_> = (1..=7).map(|i| click(i, i as ItemId)).collect();
        let map: HashMap<_, _> = (1..=7).map(|i| (i, 4)).collect();
        let h = build_hier_iu_sequence(&events, 1, &map, 10, IU_SEQ_MAX);
        assert_eq!(h.entries[0].items, vec![7, 6, 5, 4, 3]);
    }

    #[test]
    fn recency_orders_units() {
        // u, then v, then u again
        let events = vec![click(1, 1), click(2, 2), click(3, 3)];
        let map = HashMap::from([(1, 10), (2, 20), (3, 10)]);
        let h = build_hier_iu_sequence(&events, 1, &map, 10, IU_SEQ_MAX);
        let order: Vec<_> = h.entries.iter().map(|e| e.iu_id).collect();
        assert_eq!(order, vec![10, 20]);
        assert_eq!(h.entries[0].items, vec![3, 1]);
    }

    #[test]
    fn unmapped_clicks_dropped_and_outer_capped() {
        let events: Vec<_> = (1..=6).map(|i| click(i, i as ItemId)).collect();
        let map: HashMap<_, _> = (1..=5).map(|i| (i, i * 100)).collect();
        let h = build_hier_iu_sequence(&events, 1, &map, 10, 2);
        let order: Vec<_> = h.entries.iter().map(|e| e.iu_id).collect();
        assert_eq!(order, vec![500, 400]);
    }
}
