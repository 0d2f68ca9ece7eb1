use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Domain, ItemId, IuId, Timestamp, UserId};

/// Item id plus side ids `(category, brand)`, each shifted so 0 is padding.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[u32; 3]", into = "[u32; 3]")]
pub struct ItemFeat {
    pub id: ItemId,
    pub side: [u32; 2],
}

impl ItemFeat {
    pub const PAD: ItemFeat = ItemFeat {
        id: 0,
        side: [0, 0],
    };
}

impl From<[u32; 3]> for ItemFeat {
    fn from(v: [u32; 3]) -> Self {
        ItemFeat {
            id: v[0],
            side: [v[1], v[2]],
        }
    }
}

impl From<ItemFeat> for [u32; 3] {
    fn from(f: ItemFeat) -> Self {
        [f.id, f.side[0], f.side[1]]
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IuEntryFeat {
    pub iu_id: IuId,
    pub side: [u32; 2],
    pub inner: Vec<ItemFeat>,
}

/// Number of IU statistic fields: impressions, clicks, inquiries, transactions, ctr.
pub const STAT_FIELDS: usize = 5;

/// One impression with every feature id the rankers consume.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainingSample {
    pub ts: Timestamp,
    pub user_id: UserId,
    pub label: u8,
    pub domain: Domain,
    /// Cutoff of the statistics snapshot used for `stats` and `cross`.
    pub snapshot: Timestamp,
    pub item: ItemFeat,
    /// 0 when the item has no unit.
    pub iu_id: IuId,
    pub iu_side: [u32; 2],
    pub stats: [u32; STAT_FIELDS],
    pub cross: [u32; 2],
    /// The user's recent clicks inside the target unit, newest first.
    pub iu_inner: Vec<ItemFeat>,
    pub item_seq: Vec<ItemFeat>,
    pub iu_seq: Vec<IuEntryFeat>,
}

/// User-side model inputs.
#[derive(Clone, Copy, Debug)]
pub struct UserInput<'a> {
    pub user_id: UserId,
    pub item_seq: &'a [ItemFeat],
    pub iu_seq: &'a [IuEntryFeat],
}

/// Candidate-side model inputs.
#[derive(Clone, Copy, Debug)]
pub struct TargetInput<'a> {
    pub item: ItemFeat,
    pub iu_id: IuId,
    pub iu_side: [u32; 2],
    pub stats: [u32; STAT_FIELDS],
    pub cross: [u32; 2],
    pub iu_inner: &'a [ItemFeat],
}

/// Owned candidate features, as produced at serving time.
#[derive(Clone, Debug, PartialEq)]
pub struct TargetFeatures {
    pub item: ItemFeat,
    pub iu_id: IuId,
    pub iu_side: [u32; 2],
    pub stats: [u32; STAT_FIELDS],
    pub cross: [u32; 2],
    pub iu_inner: Vec<ItemFeat>,
}

impl TargetFeatures {
    pub fn input(&self) -> TargetInput<'_> {
        TargetInput {
            item: self.item,
            iu_id: self.iu_id,
            iu_side: self.iu_side,
            stats: self.stats,
            cross: self.cross,
            iu_inner: &self.iu_inner,
        }
    }
}

/// Vocabulary sizes (padding row included) of every id field.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FeatureVocab {
    pub users: usize,
    pub items: usize,
    pub categories: usize,
    pub brands: usize,
    pub ius: usize,
    pub iu_types: usize,
    pub stats: [usize; STAT_FIELDS],
    pub cross: [usize; 2],
    pub item_seq_max: usize,
    pub iu_seq_max: usize,
    pub inner_max: usize,
}

fn check_with(id: u32, vocab: usize, field: impl FnOnce() -> String) -> Result<()> {
    if id as usize >= vocab {
        Err(Error::MalformedSample(format!(
            "{} id {id} outside vocabulary of {vocab}",
            field()
        )))
    } else {
        Ok(())
    }
}

fn check(field: &str, id: u32, vocab: usize) -> Result<()> {
    check_with(id, vocab, || field.to_string())
}

fn check_item(field: &str, f: &ItemFeat, v: &FeatureVocab) -> Result<()> {
    check(field, f.id, v.items)?;
    check_with(f.side[0], v.categories, || format!("{field}.category"))?;
    check_with(f.side[1], v.brands, || format!("{field}.brand"))
}

impl TrainingSample {
    pub fn user_input(&self) -> UserInput<'_> {
        UserInput {
            user_id: self.user_id,
            item_seq: &self.item_seq,
            iu_seq: &self.iu_seq,
        }
    }

    pub fn target_input(&self) -> TargetInput<'_> {
        TargetInput {
            item: self.item,
            iu_id: self.iu_id,
            iu_side: self.iu_side,
            stats: self.stats,
            cross: self.cross,
            iu_inner: &self.iu_inner,
        }
    }

    pub fn validate(&self, v: &FeatureVocab) -> Result<()> {
        if self.label > 1 {
            return Err(Error::MalformedSample(format!(
                "label {} is not binary",
                self.label
            )));
        }
        self.user_input().validate(v)?;
        self.target_input().validate(v)
    }
}

impl UserInput<'_> {
    pub fn validate(&self, v: &FeatureVocab) -> Result<()> {
        check("user_id", self.user_id, v.users)?;
        if self.item_seq.len() > v.item_seq_max {
            return Err(Error::MalformedSample(format!(
                "item_seq has {} entries",
                self.item_seq.len()
            )));
        }
        for f in self.item_seq {
            check_item("item_seq", f, v)?;
        }
        if self.iu_seq.len() > v.iu_seq_max {
            return Err(Error::MalformedSample(format!(
                "iu_seq has {} entries",
                self.iu_seq.len()
            )));
        }
        for e in self.iu_seq {
            check("iu_seq.iu_id", e.iu_id, v.ius)?;
            check("iu_seq.side.type", e.side[0], v.iu_types)?;
            check("iu_seq.side.category", e.side[1], v.categories)?;
            if e.inner.len() > v.inner_max {
                return Err(Error::MalformedSample(format!(
                    "iu_seq inner list has {} entries",
                    e.inner.len()
                )));
            }
            for f in &e.inner {
                check_item("iu_seq.inner", f, v)?;
            }
        }
        Ok(())
    }
}

impl TargetInput<'_> {
    pub fn validate(&self, v: &FeatureVocab) -> Result<()> {
        check_item("item", &self.item, v)?;
        check("iu_id", self.iu_id, v.ius)?;
        check("iu_side.type", self.iu_side[0], v.iu_types)?;
        check("iu_side.category", self.iu_side[1], v.categories)?;
        for (i, (&s, &n)) in self.stats.iter().zip(&v.stats).enumerate() {
            check_with(s, n, || format!("stats[{i}]"))?;
        }
        check("cross.count", self.cross[0], v.cross[0])?;
        check("cross.recency", self.cross[1], v.cross[1])?;
        if self.iu_inner.len() > v.inner_max {
            return Err(Error::MalformedSample(format!(
                "iu_inner has {} entries",
                self.iu_inner.len()
            )));
        }
        for f in self.iu_inner {
            check_item("iu_inner", f, v)?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn item_feat_serializes_as_triple() {
        let f = ItemFeat {
            id: 4,
            side: [2, 9],
        };
        assert_eq!(serde_json::to_string(&f).unwrap(), "[4,2,9]");
        assert_eq!(serde_json::from_str::<ItemFeat>("[4,2,9]").unwrap(), f);
    }
}
