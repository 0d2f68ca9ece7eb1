use serde::{Deserialize, Serialize};

pub type UserId = u32;
pub type ItemId = u32;
pub type IuId = u32;
/// Seconds since the start of the simulated horizon.
pub type Timestamp = i64;

pub const SECONDS_PER_HOUR: Timestamp = 3_600;
pub const SECONDS_PER_DAY: Timestamp = 86_400;

/// 1-based day index of a timestamp.
pub fn day_of(ts: Timestamp) -> u32 {
    (ts.div_euclid(SECONDS_PER_DAY) + 1) as u32
}

/// First second of 1-based `day`.
pub fn day_start(day: u32) -> Timestamp {
    (day as Timestamp - 1) * SECONDS_PER_DAY
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Impression,
    Click,
    Inquiry,
    Transaction,
}

/// Where an impression was served.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Surface {
    Homepage,
    /// An interest-unit card on the homepage.
    IuCard,
    /// The item list behind an interest unit.
    IuPage,
}

impl Surface {
    pub fn domain(self) -> Domain {
        match self {
            Surface::Homepage => Domain::Normal,
            Surface::IuCard | Surface::IuPage => Domain::Iu,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Iu,
    Normal,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InteractionEvent {
    pub ts: Timestamp,
    pub user_id: UserId,
    pub item_id: ItemId,
    pub kind: EventKind,
    pub surface: Surface,
}
