use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::buckets::{count_bucket, recency_bucket};
use crate::types::{EventKind, InteractionEvent, ItemId, IuId, Timestamp, UserId};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserIuCross {
    pub clicks: u64,
    pub last_click: Option<Timestamp>,
}

/// Bucket ids for one (user, unit) pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CrossIds {
    pub count: u32,
    pub recency: u32,
}

pub type CrossTable = HashMap<(UserId, IuId), UserIuCross>;

/// Per (user, unit) click counts over events strictly before `as_of`.
pub fn accumulate_cross(
    events: &[InteractionEvent],
    item_iu: &HashMap<ItemId, IuId>,
    as_of: Timestamp,
) -> CrossTable {
    let mut out = CrossTable::new();
    for e in events.iter().take_while(|e| e.ts < as_of) {
        if e.kind != EventKind::Click {
            continue;
        }
        if let Some(&iu) = item_iu.get(&e.item_id) {
            let c = out.entry((e.user_id, iu)).or_default();
            c.clicks += 1;
            c.last_click = Some(c.last_click.map_or(e.ts, |t| t.max(e.ts)));
        }
    }
    out
}

pub fn cross_features(user: UserId, iu: IuId, table: &CrossTable, now: Timestamp) -> CrossIds {
    let c = table.get(&(user, iu)).copied().unwrap_or_default();
    CrossIds {
        count: count_bucket(c.clicks),
        recency: recency_bucket(c.last_click, now),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::buckets::RECENCY_NEVER;
    use crate::types::{Surface, SECONDS_PER_DAY};

    #[test]
    fn never_interacted() {
        let ids = cross_features(1, 2, &CrossTable::new(), 0);
        assert_eq!(
            ids,
            CrossIds {
                count: 0,
                recency: RECENCY_NEVER
            }
        );
    }

    #[test]
    fn counts_clicks_only() {
        let mk = |ts, kind| InteractionEvent {
            ts,
            user_id: 3,
            item_id: 7,
            kind,
            surface: Surface::Homepage,
        };
        let events: Vec<_> = (0..4)
            .map(|i| mk(i, EventKind::Click))
            .chain([mk(5, EventKind::Impression)])
            .collect();
        let table = accumulate_cross(&events, &HashMap::from([(7, 1)]), 10);
        assert_eq!(
            table[&(3, 1)],
            UserIuCross {
                clicks: 4,
                last_click: Some(3)
            }
        );
        let ids = cross_features(3, 1, &table, 3 + 2 * SECONDS_PER_DAY);
        assert_eq!(
            ids,
            CrossIds {
                count: 3,
                recency: 2
            }
        );
    }
}
