//! Discrete-event behavior simulation over a shared, limited inventory.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashSet};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::catalog::World;
use crate::error::{Error, Result};
use crate::rng::{derived_rng, seeded};
use crate::types::{
    EventKind, InteractionEvent, ItemId, Surface, Timestamp, UserId, SECONDS_PER_DAY,
    SECONDS_PER_HOUR,
};

const STREAM_SESSIONS: u64 = 11;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum ExposurePolicy {
    /// Each homepage slot shows a uniformly random available item.
    Uniform,
    /// Each slot shows the best of `pool` random available items under a
    /// noisy copy of the oracle; with probability `explore` it falls back to uniform.
    Greedy { pool: usize, explore: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LogConfig {
    pub horizon_days: u32,
    pub slots_per_session: usize,
    /// After a homepage click, chance that the user opens the related list of
    /// the item's (hidden) unit.
    pub related_page_prob: f64,
    pub related_page_size: usize,
    pub inquiry_prob: f64,
    /// Conditional on an inquiry.
    pub transaction_prob: f64,
    pub policy: ExposurePolicy,
}

impl Default for LogConfig {
    fn default() -> Self {
        Self {
            horizon_days: 8,
            slots_per_session: 8,
            related_page_prob: 0.5,
            related_page_size: 4,
            inquiry_prob: 0.4,
            transaction_prob: 0.5,
            policy: ExposurePolicy::Uniform,
        }
    }
}

/// Available-item index with O(1) insert/remove, overall and per hidden unit.
pub(crate) struct Inventory {
    available: Vec<ItemId>,
    pos: Vec<Option<usize>>,
    by_unit: Vec<Vec<ItemId>>,
    unit_pos: Vec<Option<usize>>,
    /// Items sorted by listing time, consumed by `advance_to`.
    pending: Vec<ItemId>,
    next_pending: usize,
}

impl Inventory {
    pub(crate) fn new(world: &World) -> Self {
        let n_units = world.truth.unit_centers.len();
        let mut pending: Vec<ItemId> = world
            .items
            .iter()
            .filter(|i| !i.sold)
            .map(|i| i.item_id)
            .collect();
        pending.sort_by_key(|&id| (world.item(id).list_time, id));
        Self {
            available: Vec::new(),
            pos: vec![None; world.items.len() + 1],
            by_unit: vec![Vec::new(); n_units],
            unit_pos: vec![None; world.items.len() + 1],
            pending,
            next_pending: 0,
        }
    }

    pub(crate) fn advance_to(&mut self, world: &World, t: Timestamp) {
        while self.next_pending < self.pending.len() {
            let id = self.pending[self.next_pending];
            let item = world.item(id);
            if item.list_time > t {
                break;
            }
            self.next_pending += 1;
            self.pos[id as usize] = Some(self.available.len());
            self.available.push(id);
            let unit = &mut self.by_unit[item.true_unit as usize];
            self.unit_pos[id as usize] = Some(unit.len());
            unit.push(id);
        }
    }

    pub(crate) fn remove(&mut self, world: &World, id: ItemId) {
        if let Some(p) = self.pos[id as usize].take() {
            let last = self.available.pop().expect("non-empty");
            if last != id {
                self.available[p] = last;
                self.pos[last as usize] = Some(p);
            }
        }
        if let Some(p) = self.unit_pos[id as usize].take() {
            let unit = &mut self.by_unit[world.item(id).true_unit as usize];
            let last = unit.pop().expect("non-empty");
            if last != id {
                unit[p] = last;
                self.unit_pos[last as usize] = Some(p);
            }
        }
    }

    pub(crate) fn available(&self) -> &[ItemId] {
        &self.available
    }

    pub(crate) fn unit_members(&self, unit: u32) -> &[ItemId] {
        &self.by_unit[unit as usize]
    }
}

struct Session {
    user: UserId,
    homepage_left: usize,
    related: Vec<ItemId>,
    shown: HashSet<ItemId>,
}

/// Outcome of showing one item: events appended, and whether it was clicked.
pub(crate) struct Funnel {
    pub inquiry_prob: f64,
    pub transaction_prob: f64,
}

impl Funnel {
    /// Emits impression → click → inquiry → transaction for one exposure,
    /// decrementing stock on a transaction. Returns `(clicked, end_time)`.
    pub(crate) fn expose(
        &self,
        world: &mut World,
        inventory: &mut Inventory,
        rng: &mut ChaCha8Rng,
        events: &mut Vec<InteractionEvent>,
        user: UserId,
        item: ItemId,
        surface: Surface,
        click_prob: f64,
        t: Timestamp,
    ) -> (bool, Timestamp) {
        let mut ts = t;
        let ev = |ts, kind| InteractionEvent {
            ts,
            user_id: user,
            item_id: item,
            kind,
            surface,
        };
        events.push(ev(ts, EventKind::Impression));
        if !rng.gen_bool(click_prob) {
            return (false, ts);
        }
        ts += rng.gen_range(1..=5);
        events.push(ev(ts, EventKind::Click));
        if rng.gen_bool(self.inquiry_prob) {
            ts += rng.gen_range(1..=5);
            events.push(ev(ts, EventKind::Inquiry));
            if rng.gen_bool(self.transaction_prob) {
                ts += rng.gen_range(1..=5);
                events.push(ev(ts, EventKind::Transaction));
                let it = &mut world.items[item as usize - 1];
                it.stock -= 1;
                if it.stock == 0 {
                    it.sold = true;
                    it.sold_time = Some(ts);
                    inventory.remove(world, item);
                }
            }
        }
        (true, ts)
    }
}

/// Session start times for every user and day, sorted by `(time, user)`.
pub(crate) fn session_starts(
    world: &World,
    first_day: u32,
    days: u32,
    seed: u64,
) -> Vec<(Timestamp, UserId)> {
    let mut starts = Vec::new();
    for u in &world.users {
        let mut r = derived_rng(seed, STREAM_SESSIONS, u.user_id as u64);
        let poisson = Poisson::new(u.activity_rate.max(1e-9)).expect("positive rate");
        for d in first_day..first_day + days {
            let n = poisson.sample(&mut r) as usize;
            let day0 = d as Timestamp * SECONDS_PER_DAY;
            for _ in 0..n {
                starts.push((
                    day0 + r.gen_range(0..SECONDS_PER_DAY - SECONDS_PER_HOUR),
                    u.user_id,
                ));
            }
        }
    }
    starts.sort_unstable();
    starts
}

fn pick_homepage_item(
    world: &World,
    inventory: &Inventory,
    rng: &mut ChaCha8Rng,
    policy: ExposurePolicy,
    user: UserId,
    shown: &HashSet<ItemId>,
) -> Option<ItemId> {
    let avail = inventory.available();
    if avail.is_empty() {
        return None;
    }
    let draw = |rng: &mut ChaCha8Rng| -> Option<ItemId> {
        (0..8)
            .map(|_| avail[rng.gen_range(0..avail.len())])
            .find(|id| !shown.contains(id))
    };
    match policy {
        ExposurePolicy::Uniform => draw(rng),
        ExposurePolicy::Greedy { pool, explore } => {
            if rng.gen_bool(explore.clamp(0.0, 1.0)) {
                return draw(rng);
            }
            let mut best = None;
            let mut best_score = f64::NEG_INFINITY;
            for _ in 0..pool.max(1) {
                if let Some(id) = draw(rng) {
                    let s = world.ctr(user, id).ln() + 0.5 * rng.gen_range(-1.0..1.0);
                    if s > best_score {
                        best_score = s;
                        best = Some(id);
                    }
                }
            }
            best
        }
    }
}

/// Simulates `cfg.horizon_days` of browsing on `world`, mutating stock and
/// sold flags. Returned events are sorted by timestamp.
pub fn simulate_log(
    world: &mut World,
    cfg: &LogConfig,
    seed: u64,
) -> Result<Vec<InteractionEvent>> {
    if cfg.horizon_days == 0 {
        return Err(Error::Config("horizon_days must be >= 1".into()));
    }
    let mut rng = seeded(seed);
    let funnel = Funnel {
        inquiry_prob: cfg.inquiry_prob,
        transaction_prob: cfg.transaction_prob,
    };
    let starts = session_starts(world, 0, cfg.horizon_days, seed);
    let mut sessions: Vec<Session> = starts
        .iter()
        .map(|&(_, user)| Session {
            user,
            homepage_left: cfg.slots_per_session,
            related: Vec::new(),
            shown: HashSet::new(),
        })
        .collect();
    // Each heap entry is the next step time of one session; popping in time
    // order keeps inventory decisions on one global clock.
    let mut heap: BinaryHeap<Reverse<(Timestamp, usize)>> = starts
        .iter()
        .enumerate()
        .map(|(i, &(t, _))| Reverse((t, i)))
        .collect();
    let mut inventory = Inventory::new(world);
    let mut events = Vec::new();

    while let Some(Reverse((t, idx))) = heap.pop() {
        inventory.advance_to(world, t);
        let user = sessions[idx].user;
        let (item, surface) = if let Some(id) = sessions[idx].related.pop() {
            if !world.item(id).is_available(t) {
                heap.push(Reverse((t + 1, idx)));
                continue;
            }
            (id, Surface::IuPage)
        } else if sessions[idx].homepage_left > 0 {
            sessions[idx].homepage_left -= 1;
            match pick_homepage_item(
                world,
                &inventory,
                &mut rng,
                cfg.policy,
                user,
                &sessions[idx].shown,
            ) {
                Some(id) => (id, Surface::Homepage),
                None => continue,
            }
        } else {
            continue;
        };
        sessions[idx].shown.insert(item);
        let p = world.ctr(user, item);
        let (clicked, end) = funnel.expose(
            world,
            &mut inventory,
            &mut rng,
            &mut events,
            user,
            item,
            surface,
            p,
            t,
        );
        if clicked && surface == Surface::Homepage && rng.gen_bool(cfg.related_page_prob) {
            let unit = world.item(item).true_unit;
            let mut members: Vec<ItemId> = inventory
                .unit_members(unit)
                .iter()
                .copied()
                .filter(|id| !sessions[idx].shown.contains(id))
                .collect();
            members.sort_unstable();
            members.shuffle(&mut rng);
            members.truncate(cfg.related_page_size);
            // popped from the back, so reverse to show in drawn order
            members.reverse();
            sessions[idx].related = members;
        }
        heap.push(Reverse((end + rng.gen_range(3..=15), idx)));
    }
    events.sort_by_key(|e| e.ts);
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::catalog::{generate_catalog, CatalogConfig, StockDistribution};
    use crate::types::day_of;
    use std::collections::HashMap;

    fn small_world(seed: u64) -> World {
        generate_catalog(
            &CatalogConfig {
                n_users: 60,
                n_items: 600,
                n_true_units: 30,
                ..CatalogConfig::default()
            },
            seed,
        )
        .unwrap()
    }

    #[test]
    fn deterministic_given_seed() {
        let mut a = small_world(1);
        let mut b = small_world(1);
        let ea = simulate_log(&mut a, &LogConfig::default(), 5).unwrap();
        let eb = simulate_log(&mut b, &LogConfig::default(), 5).unwrap();
        assert_eq!(ea, eb);
        assert_eq!(a, b);
    }

    #[test]
    fn inventory_conservation_and_ordering() {
        let mut w = small_world(2);
        let initial: Vec<u32> = w.items.iter().map(|i| i.stock).collect();
        let cfg = LogConfig {
            inquiry_prob: 0.9,
            transaction_prob: 0.9,
            ..LogConfig::default()
        };
        let events = simulate_log(&mut w, &cfg, 3).unwrap();
        assert!(events.windows(2).all(|p| p[0].ts <= p[1].ts));
        let mut txns: HashMap<ItemId, u32> = HashMap::new();
        let mut clicked: HashSet<(UserId, ItemId)> = HashSet::new();
        for e in &events {
            let item = w.item(e.item_id);
            match e.kind {
                EventKind::Click => {
                    clicked.insert((e.user_id, e.item_id));
                }
                EventKind::Transaction => {
                    assert!(clicked.contains(&(e.user_id, e.item_id)));
                    *txns.entry(e.item_id).or_default() += 1;
                }
                EventKind::Impression => {
                    assert!(e.ts >= item.list_time);
                    if let Some(s) = item.sold_time {
                        assert!(e.ts <= s, "impression of sold item");
                    }
                }
                _ => {}
            }
        }
        assert!(!txns.is_empty());
        for (id, n) in txns {
            assert!(n <= initial[id as usize - 1]);
        }
        for it in &w.items {
            if it.sold {
                assert!(it.sold_time.unwrap() >= it.list_time);
                assert_eq!(it.stock, 0);
            }
        }
    }

    #[test]
    fn single_stock_items_transact_at_most_once() {
        let mut w = generate_catalog(
            &CatalogConfig {
                n_users: 60,
                n_items: 300,
                n_true_units: 20,
                stock: StockDistribution::always_one(),
                ..CatalogConfig::default()
            },
            4,
        )
        .unwrap();
        let cfg = LogConfig {
            inquiry_prob: 1.0,
            transaction_prob: 1.0,
            ..LogConfig::default()
        };
        let events = simulate_log(&mut w, &cfg, 4).unwrap();
        let mut n: HashMap<ItemId, u32> = HashMap::new();
        for e in events.iter().filter(|e| e.kind == EventKind::Transaction) {
            *n.entry(e.item_id).or_default() += 1;
        }
        assert!(n.values().all(|&c| c == 1));
    }

    #[test]
    fn eight_days_partition_into_day_buckets() {
        let mut w = small_world(5);
        let events = simulate_log(&mut w, &LogConfig::default(), 6).unwrap();
        let mut buckets = [0usize; 8];
        for e in &events {
            let d = day_of(e.ts);
            assert!((1..=8).contains(&d));
            buckets[d as usize - 1] += 1;
        }
        assert_eq!(buckets.iter().sum::<usize>(), events.len());
        let train: usize = buckets[..7].iter().sum();
        assert!(train > 0 && buckets[7] > 0);
    }

    #[test]
    fn zero_horizon_rejected() {
        let mut w = small_world(1);
        assert!(simulate_log(
            &mut w,
            &LogConfig {
                horizon_days: 0,
                ..LogConfig::default()
            },
            1
        )
        .is_err());
    }

    #[test]
    fn empirical_click_rate_matches_oracle() {
        let mut w = small_world(8);
        w.items[0].stock = u32::MAX;
        let mut inv = Inventory::new(&w);
        inv.advance_to(&w, 0);
        let funnel = Funnel {
            inquiry_prob: 0.0,
            transaction_prob: 0.0,
        };
        let mut rng = seeded(42);
        let p = w.ctr(1, 1);
        let n = 20_000;
        let mut events = Vec::new();
        let mut clicks = 0usize;
        for _ in 0..n {
            let (c, _) = funnel.expose(
                &mut w,
                &mut inv,
                &mut rng,
                &mut events,
                1,
                1,
                Surface::Homepage,
                p,
                0,
            );
            clicks += c as usize;
        }
        let rate = clicks as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!(
            (rate - p).abs() < 3.0 * se,
            "rate {rate} oracle {p} se {se}"
        );
    }

    #[test]
    fn greedy_policy_raises_ctr() {
        let ctr = |policy| {
            let mut w = small_world(7);
            let events = simulate_log(
                &mut w,
                &LogConfig {
                    policy,
                    related_page_prob: 0.0,
                    ..LogConfig::default()
                },
                9,
            )
            .unwrap();
            let imp = events
                .iter()
                .filter(|e| e.kind == EventKind::Impression)
                .count() as f64;
            events.iter().filter(|e| e.kind == EventKind::Click).count() as f64 / imp
        };
        assert!(
            ctr(ExposurePolicy::Greedy {
                pool: 10,
                explore: 0.0
            }) > ctr(ExposurePolicy::Uniform)
        );
    }
}
