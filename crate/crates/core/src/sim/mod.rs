//! Two-stage serving simulation: a homepage that mixes interest-unit cards
//! with single items, and a ranked item list behind each card.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, HashSet, VecDeque};

use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{Featurizer, UserContext};
use crate::models::{Network, UserEncoding};
use crate::rng::{derived_rng, hash_u64};
use crate::synth::log::{session_starts, Funnel, Inventory};
use crate::synth::World;
use crate::types::{EventKind, InteractionEvent, ItemId, IuId, Surface, Timestamp, UserId};
use crate::units::UnitSet;

const STREAM_BEHAVIOR: u64 = 21;
const STREAM_ARM_B: u64 = 22;
const SALT_SPLIT: u64 = 0x5eed_ab;

/// Share of homepage slots reserved for interest-unit cards.
///
/// Slot `i` is a card slot when `floor((i + 1) * ratio)` steps up, which
/// spreads `floor(n * ratio)` card slots evenly over the first `n` slots.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MergePolicy {
    pub iu_slot_ratio: f64,
}

impl Default for MergePolicy {
    fn default() -> Self {
        MergePolicy {
            iu_slot_ratio: 0.13,
        }
    }
}

impl MergePolicy {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.iu_slot_ratio) {
            return Err(Error::Config(format!(
                "iu_slot_ratio {} outside [0, 1]",
                self.iu_slot_ratio
            )));
        }
        Ok(())
    }

    pub fn is_card_slot(&self, slot: usize) -> bool {
        let steps = |n: usize| (n as f64 * self.iu_slot_ratio + 1e-9).floor() as u64;
        steps(slot + 1) > steps(slot)
    }
}

/// How a card's score is derived from its unsold members' scores.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CardScore {
    #[default]
    Max,
    Mean,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Payload {
    /// `item_id` is the best-scored unsold member shown on the card.
    IuCard {
        iu_id: IuId,
        title: String,
        item_id: ItemId,
    },
    Item {
        item_id: ItemId,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomepageCard {
    pub slot: usize,
    pub payload: Payload,
    pub score: f64,
}

/// Click-probability estimates for one user at one moment.
pub trait Scorer {
    fn score(&mut self, item: ItemId) -> Result<f64>;
}

/// Scores with a trained network, encoding the user once.
pub struct ModelScorer<'a> {
    net: &'a Network,
    fz: &'a Featurizer,
    ctx: &'a UserContext,
    enc: UserEncoding<'a>,
    cache: HashMap<ItemId, f64>,
}

impl<'a> ModelScorer<'a> {
    pub fn new(net: &'a Network, fz: &'a Featurizer, ctx: &'a UserContext) -> Result<Self> {
        let enc = net.encode_user(crate::features::UserInput {
            user_id: ctx.user_id,
            item_seq: &ctx.item_seq,
            iu_seq: &ctx.iu_seq,
        })?;
        Ok(ModelScorer {
            net,
            fz,
            ctx,
            enc,
            cache: HashMap::new(),
        })
    }
}

impl Scorer for ModelScorer<'_> {
    fn score(&mut self, item: ItemId) -> Result<f64> {
        if let Some(&s) = self.cache.get(&item) {
            return Ok(s);
        }
        let t = self.fz.target(self.ctx, item);
        let s = self.net.predict(&self.enc, &t.input())?;
        self.cache.insert(item, s);
        Ok(s)
    }
}

/// A candidate card with its currently unsold members.
#[derive(Clone, Debug, PartialEq)]
pub struct IuCandidate {
    pub iu_id: IuId,
    pub title: String,
    pub members: Vec<ItemId>,
}

fn by_score_desc(a: &(f64, ItemId), b: &(f64, ItemId)) -> std::cmp::Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

/// Ranks items and cards separately and interleaves them into `page_size`
/// slots. When one list runs out the other fills the remaining slots.
pub fn stage_one_rank(
    scorer: &mut dyn Scorer,
    items: &[ItemId],
    ius: &[IuCandidate],
    policy: &MergePolicy,
    card_score: CardScore,
    page_size: usize,
) -> Result<Vec<HomepageCard>> {
    let mut cards: Vec<(f64, IuId, &IuCandidate, ItemId)> = Vec::new();
    for c in ius {
        let mut best: Option<(f64, ItemId)> = None;
        let mut sum = 0.0;
        for &m in &c.members {
            let s = scorer.score(m)?;
            sum += s;
            if best.is_none_or(|b| by_score_desc(&(s, m), &b).is_lt()) {
                best = Some((s, m));
            }
        }
        let Some((top, rep)) = best else { continue };
        let s = match card_score {
            CardScore::Max => top,
            CardScore::Mean => sum / c.members.len() as f64,
        };
        cards.push((s, c.iu_id, c, rep));
    }
    cards.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let on_cards: HashSet<ItemId> = cards.iter().map(|c| c.3).collect();

    let mut scored: Vec<(f64, ItemId)> = Vec::with_capacity(items.len());
    for &i in items {
        if !on_cards.contains(&i) {
            scored.push((scorer.score(i)?, i));
        }
    }
    scored.sort_by(by_score_desc);
    scored.dedup_by_key(|x| x.1);

    let mut page = Vec::with_capacity(page_size);
    let (mut ci, mut ii) = (0, 0);
    while page.len() < page_size && (ci < cards.len() || ii < scored.len()) {
        let slot = page.len();
        let want_card = policy.is_card_slot(slot);
        let take_card = (want_card && ci < cards.len()) || ii >= scored.len();
        if take_card {
            let (s, iu_id, c, rep) = cards[ci];
            ci += 1;
            page.push(HomepageCard {
                slot,
                payload: Payload::IuCard {
                    iu_id,
                    title: c.title.clone(),
                    item_id: rep,
                },
                score: s,
            });
        } else {
            let (s, item_id) = scored[ii];
            ii += 1;
            page.push(HomepageCard {
                slot,
                payload: Payload::Item { item_id },
                score: s,
            });
        }
    }
    Ok(page)
}

/// Unsold members of one unit, best first.
pub fn stage_two_rank(
    scorer: &mut dyn Scorer,
    unsold_members: &[ItemId],
) -> Result<Vec<(ItemId, f64)>> {
    let mut scored = Vec::with_capacity(unsold_members.len());
    for &m in unsold_members {
        scored.push((scorer.score(m)?, m));
    }
    scored.sort_by(by_score_desc);
    scored.dedup_by_key(|x| x.1);
    Ok(scored.into_iter().map(|(s, m)| (m, s)).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    /// 0-based day the experiment starts on (the day after the training log).
    pub start_day: u32,
    pub horizon_days: u32,
    pub page_size: usize,
    pub stage_two_page_size: usize,
    /// Mean of the geometric number of slots a user looks at per page.
    pub patience_mean: f64,
    pub item_candidates: usize,
    pub iu_candidates: usize,
    pub merge: MergePolicy,
    pub card_score: CardScore,
    pub inquiry_prob: f64,
    pub transaction_prob: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            start_day: 8,
            horizon_days: 7,
            page_size: 40,
            stage_two_page_size: 20,
            patience_mean: 20.0,
            item_candidates: 100,
            iu_candidates: 20,
            merge: MergePolicy::default(),
            card_score: CardScore::Max,
            inquiry_prob: 0.4,
            transaction_prob: 0.5,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        self.merge.validate()?;
        if !(self.patience_mean >= 1.0) {
            return Err(Error::Config(format!(
                "patience_mean {} must be >= 1",
                self.patience_mean
            )));
        }
        for (name, p) in [
            ("inquiry_prob", self.inquiry_prob),
            ("transaction_prob", self.transaction_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} {p} outside [0, 1]")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Counters {
    pub impressions: u64,
    pub clicks: u64,
    /// Bills.
    pub transactions: u64,
}

impl Counters {
    pub fn ctr(&self) -> Option<f64> {
        (self.impressions > 0).then(|| self.clicks as f64 / self.impressions as f64)
    }

    fn add(&mut self, o: &Counters) {
        self.impressions += o.impressions;
        self.clicks += o.clicks;
        self.transactions += o.transactions;
    }

    fn record(&mut self, kind: EventKind) {
        match kind {
            EventKind::Impression => self.impressions += 1,
            EventKind::Click => self.clicks += 1,
            EventKind::Transaction => self.transactions += 1,
            EventKind::Inquiry => {}
        }
    }
}

/// Counters split by surface: unit cards plus unit pages, and plain items.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionOutcome {
    pub interest_unit: Counters,
    pub general: Counters,
}

impl SessionOutcome {
    pub fn overall(&self) -> Counters {
        let mut c = self.interest_unit;
        c.add(&self.general);
        c
    }

    /// Recount from an event log.
    pub fn from_events(events: &[InteractionEvent]) -> Self {
        let mut o = SessionOutcome::default();
        for e in events {
            match e.surface {
                Surface::Homepage => o.general.record(e.kind),
                Surface::IuCard | Surface::IuPage => o.interest_unit.record(e.kind),
            }
        }
        o
    }
}

/// One opened stage-two page.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UnitPage {
    pub user_id: UserId,
    pub ts: Timestamp,
    pub iu_id: IuId,
    /// Ranked unsold members, best first.
    pub items: Vec<ItemId>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimRun {
    pub outcome: SessionOutcome,
    pub users: usize,
    pub events: Vec<InteractionEvent>,
    pub unit_pages: Vec<UnitPage>,
}

struct UnitMembers {
    ids: Vec<IuId>,
    members: HashMap<IuId, (String, Vec<ItemId>)>,
}

impl UnitMembers {
    fn new(units: &UnitSet) -> Self {
        UnitMembers {
            ids: units.units.iter().map(|u| u.iu_id).collect(),
            members: units
                .units
                .iter()
                .map(|u| (u.iu_id, (u.title.clone(), u.member_item_ids.clone())))
                .collect(),
        }
    }

    fn unsold(&self, world: &World, iu: IuId, t: Timestamp) -> Vec<ItemId> {
        self.members[&iu]
            .1
            .iter()
            .copied()
            .filter(|&i| world.item(i).is_available(t))
            .collect()
    }
}

struct Sim<'a> {
    world: World,
    inventory: Inventory,
    fz: Featurizer,
    net: &'a Network,
    units: UnitMembers,
    cfg: &'a SimConfig,
    funnel: Funnel,
    patience: Geometric,
    events: Vec<InteractionEvent>,
    unit_pages: Vec<UnitPage>,
}

impl Sim<'_> {
    fn candidates(&self, rng: &mut ChaCha8Rng, t: Timestamp) -> (Vec<ItemId>, Vec<IuCandidate>) {
        let avail = self.inventory.available();
        let n = self.cfg.item_candidates.min(avail.len());
        let mut items: Vec<ItemId> = sample_indices(rng, avail.len(), n)
            .iter()
            .map(|i| avail[i])
            .collect();
        items.sort_unstable();
        let mut ius = Vec::new();
        let ids = &self.units.ids;
        if !ids.is_empty() {
            for _ in 0..self.cfg.iu_candidates * 4 {
                if ius.len() == self.cfg.iu_candidates {
                    break;
                }
                let iu = ids[rng.gen_range(0..ids.len())];
                if ius.iter().any(|c: &IuCandidate| c.iu_id == iu) {
                    continue;
                }
                let members = self.units.unsold(&self.world, iu, t);
                if !members.is_empty() {
                    ius.push(IuCandidate {
                        iu_id: iu,
                        title: self.units.members[&iu].0.clone(),
                        members,
                    });
                }
            }
        }
        (items, ius)
    }

    fn depth(&self, rng: &mut ChaCha8Rng) -> usize {
        self.patience.sample(rng) as usize + 1
    }

    fn click(&mut self, user: UserId, ts: Timestamp, item: ItemId, clicked: bool) {
        if clicked {
            self.fz.record_click(user, ts, item);
        }
    }

    fn open(&mut self, user: UserId, start: Timestamp, rng: &mut ChaCha8Rng) -> Result<Visit> {
        let ctx = self.fz.user_context(user, start);
        let (items, ius) = self.candidates(rng, start);
        let page = {
            let mut scorer = ModelScorer::new(self.net, &self.fz, &ctx)?;
            stage_one_rank(
                &mut scorer,
                &items,
                &ius,
                &self.cfg.merge,
                self.cfg.card_score,
                self.cfg.page_size,
            )?
        };
        let depth = self.depth(rng).min(page.len());
        Ok(Visit {
            user,
            ctx,
            page,
            depth,
            next: 0,
            unit_page: VecDeque::new(),
        })
    }

    fn show(
        &mut self,
        v: &Visit,
        id: ItemId,
        surface: Surface,
        t: Timestamp,
        rng: &mut ChaCha8Rng,
    ) -> Timestamp {
        if !self.world.item(id).is_available(t) {
            return t;
        }
        let p = self.world.ctr(v.user, id);
        let (clicked, end) = self.funnel.expose(
            &mut self.world,
            &mut self.inventory,
            rng,
            &mut self.events,
            v.user,
            id,
            surface,
            p,
            t,
        );
        self.click(v.user, end, id, clicked);
        end
    }

    /// Shows the visit's next slot at `t`. Returns the time the user is done
    /// with it, or `None` when the visit is over.
    fn step(
        &mut self,
        v: &mut Visit,
        t: Timestamp,
        rng: &mut ChaCha8Rng,
    ) -> Result<Option<Timestamp>> {
        if let Some(id) = v.unit_page.pop_front() {
            return Ok(Some(self.show(v, id, Surface::IuPage, t, rng)));
        }
        if v.next >= v.depth {
            return Ok(None);
        }
        let card = v.page[v.next].payload.clone();
        v.next += 1;
        let (iu_id, item_id) = match card {
            Payload::Item { item_id } => {
                return Ok(Some(self.show(v, item_id, Surface::Homepage, t, rng)))
            }
            Payload::IuCard { iu_id, item_id, .. } => (iu_id, item_id),
        };
        let members = self.units.unsold(&self.world, iu_id, t);
        if members.is_empty() {
            return Ok(Some(t));
        }
        // The card is judged by the member the user likes most.
        let (p, preferred) = members
            .iter()
            .map(|&m| (self.world.ctr(v.user, m), m))
            .fold((f64::NEG_INFINITY, 0), |a, b| if b.0 > a.0 { b } else { a });
        let shown = if members.contains(&item_id) {
            item_id
        } else {
            preferred
        };
        let ev = |ts, kind| InteractionEvent {
            ts,
            user_id: v.user,
            item_id: shown,
            kind,
            surface: Surface::IuCard,
        };
        self.events.push(ev(t, EventKind::Impression));
        if !rng.gen_bool(p) {
            return Ok(Some(t));
        }
        let t = t + rng.gen_range(1..=5);
        self.events.push(ev(t, EventKind::Click));
        self.fz.record_click(v.user, t, shown);
        let ranked = {
            let mut scorer = ModelScorer::new(self.net, &self.fz, &v.ctx)?;
            stage_two_rank(&mut scorer, &members)?
        };
        self.unit_pages.push(UnitPage {
            user_id: v.user,
            ts: t,
            iu_id,
            items: ranked.iter().map(|r| r.0).collect(),
        });
        let depth = self
            .depth(rng)
            .min(ranked.len())
            .min(self.cfg.stage_two_page_size);
        v.unit_page = ranked[..depth].iter().map(|r| r.0).collect();
        Ok(Some(t))
    }
}

/// One session in progress.
struct Visit {
    user: UserId,
    ctx: UserContext,
    page: Vec<HomepageCard>,
    depth: usize,
    next: usize,
    unit_page: VecDeque<ItemId>,
}

/// Serves `cfg.horizon_days` of sessions for users accepted by `include`.
///
/// `world` and `fz` are cloned, so callers keep their pre-experiment state.
/// Behavior randomness is drawn per user from `(seed, stream)`.
pub fn run_sessions_with(
    world: &World,
    units: &UnitSet,
    fz: &Featurizer,
    net: &Network,
    cfg: &SimConfig,
    seed: u64,
    stream: u64,
    include: &dyn Fn(UserId) -> bool,
) -> Result<SimRun> {
    cfg.validate()?;
    let mut sim = Sim {
        world: world.clone(),
        inventory: Inventory::new(world),
        fz: fz.clone(),
        net,
        units: UnitMembers::new(units),
        cfg,
        funnel: Funnel {
            inquiry_prob: cfg.inquiry_prob,
            transaction_prob: cfg.transaction_prob,
        },
        patience: Geometric::new(1.0 / cfg.patience_mean)
            .map_err(|e| Error::Config(e.to_string()))?,
        events: Vec::new(),
        unit_pages: Vec::new(),
    };
    let users: HashSet<UserId> = world
        .users
        .iter()
        .map(|u| u.user_id)
        .filter(|&u| include(u))
        .collect();
    let mut rngs: HashMap<UserId, ChaCha8Rng> = HashMap::new();
    if cfg.horizon_days > 0 {
        let starts: Vec<(Timestamp, UserId)> =
            session_starts(world, cfg.start_day, cfg.horizon_days, seed)
                .into_iter()
                .filter(|s| users.contains(&s.1))
                .collect();
        let mut visits: Vec<Option<Visit>> = starts.iter().map(|_| None).collect();
        // Sessions advance one slot at a time on a global clock, so a sale is
        // seen by every later slot of every session.
        let mut heap: BinaryHeap<Reverse<(Timestamp, usize)>> = starts
            .iter()
            .enumerate()
            .map(|(i, &(t, _))| Reverse((t, i)))
            .collect();
        while let Some(Reverse((t, idx))) = heap.pop() {
            sim.inventory.advance_to(&sim.world, t);
            let user = starts[idx].1;
            let rng = rngs
                .entry(user)
                .or_insert_with(|| derived_rng(seed, stream, user as u64));
            let mut visit = match visits[idx].take() {
                Some(v) => v,
                None => {
                    let v = sim.open(user, t, rng)?;
                    let next = t + rng.gen_range(2..=10);
                    visits[idx] = Some(v);
                    heap.push(Reverse((next, idx)));
                    continue;
                }
            };
            if let Some(done) = sim.step(&mut visit, t, rng)? {
                heap.push(Reverse((done + rng.gen_range(2..=10), idx)));
                visits[idx] = Some(visit);
            }
        }
    }
    let mut events = std::mem::take(&mut sim.events);
    events.sort_by_key(|e| e.ts);
    Ok(SimRun {
        outcome: SessionOutcome::from_events(&events),
        users: users.len(),
        events,
        unit_pages: sim.unit_pages,
    })
}

pub fn run_sessions(
    world: &World,
    units: &UnitSet,
    fz: &Featurizer,
    net: &Network,
    cfg: &SimConfig,
    seed: u64,
) -> Result<SimRun> {
    run_sessions_with(world, units, fz, net, cfg, seed, STREAM_BEHAVIOR, &|_| true)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbMode {
    /// Users hash-partitioned between arms, independent behavior streams.
    #[default]
    Split,
    /// Every user served by both arms on separate inventory copies with the
    /// same behavior stream.
    Paired,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AbConfig {
    /// Fraction of users in arm B under `Split`.
    pub split: f64,
    pub mode: AbMode,
}

impl Default for AbConfig {
    fn default() -> Self {
        AbConfig {
            split: 0.5,
            mode: AbMode::Split,
        }
    }
}

/// Percent changes of B over A; `None` when A's value is zero or undefined.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbRow {
    pub row: String,
    pub ctr_delta_pct: Option<f64>,
    pub clicks_delta_pct: Option<f64>,
    pub bills_delta_pct: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbArm {
    pub model: String,
    pub users: usize,
    pub outcome: SessionOutcome,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AbReport {
    pub mode: AbMode,
    pub arm_a: AbArm,
    pub arm_b: AbArm,
    /// Overall, Interest Unit Rec, General Product Rec. Clicks and bills are
    /// compared per user.
    pub rows: Vec<AbRow>,
}

impl AbReport {
    pub fn row(&self, name: &str) -> Option<&AbRow> {
        self.rows.iter().find(|r| r.row == name)
    }
}

fn delta(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(a), Some(b)) if a != 0.0 => Some((b / a - 1.0) * 100.0),
        _ => None,
    }
}

fn compare(a: &AbArm, b: &AbArm) -> Vec<AbRow> {
    let rows = [
        ("overall", a.outcome.overall(), b.outcome.overall()),
        (
            "interest_unit_rec",
            a.outcome.interest_unit,
            b.outcome.interest_unit,
        ),
        ("general_product_rec", a.outcome.general, b.outcome.general),
    ];
    let (na, nb) = (a.users as f64, b.users as f64);
    rows.into_iter()
        .map(|(name, ca, cb)| AbRow {
            row: name.to_string(),
            ctr_delta_pct: delta(ca.ctr(), cb.ctr()),
            clicks_delta_pct: delta(Some(ca.clicks as f64 / na), Some(cb.clicks as f64 / nb)),
            bills_delta_pct: delta(
                Some(ca.transactions as f64 / na),
                Some(cb.transactions as f64 / nb),
            ),
        })
        .collect()
}

pub fn in_arm_b(seed: u64, user: UserId, split: f64) -> bool {
    (hash_u64(seed ^ SALT_SPLIT, user as u64) as f64 / u64::MAX as f64) < split
}

/// Serves arm A with `model_a` and arm B with `model_b` and reports B vs A.
#[allow(clippy::too_many_arguments)]
pub fn run_ab_test(
    world: &World,
    units: &UnitSet,
    fz: &Featurizer,
    model_a: (&str, &Network),
    model_b: (&str, &Network),
    sim: &SimConfig,
    ab: &AbConfig,
    seed: u64,
) -> Result<AbReport> {
    if !(0.0..=1.0).contains(&ab.split) {
        return Err(Error::Config(format!("split {} outside [0, 1]", ab.split)));
    }
    let (run_a, run_b) = match ab.mode {
        AbMode::Paired => (
            run_sessions_with(
                world,
                units,
                fz,
                model_a.1,
                sim,
                seed,
                STREAM_BEHAVIOR,
                &|_| true,
            )?,
            run_sessions_with(
                world,
                units,
                fz,
                model_b.1,
                sim,
                seed,
                STREAM_BEHAVIOR,
                &|_| true,
            )?,
        ),
        AbMode::Split => (
            run_sessions_with(
                world,
                units,
                fz,
                model_a.1,
                sim,
                seed,
                STREAM_BEHAVIOR,
                &|u| !in_arm_b(seed, u, ab.split),
            )?,
            run_sessions_with(world, units, fz, model_b.1, sim, seed, STREAM_ARM_B, &|u| {
                in_arm_b(seed, u, ab.split)
            })?,
        ),
    };
    if run_a.users == 0 || run_b.users == 0 {
        return Err(Error::Config(format!(
            "empty arm: {} users in A, {} in B",
            run_a.users, run_b.users
        )));
    }
    let arm_a = AbArm {
        model: model_a.0.to_string(),
        users: run_a.users,
        outcome: run_a.outcome,
    };
    let arm_b = AbArm {
        model: model_b.0.to_string(),
        users: run_b.users,
        outcome: run_b.outcome,
    };
    Ok(AbReport {
        mode: ab.mode,
        rows: compare(&arm_a, &arm_b),
        arm_a,
        arm_b,
    })
}
