//! Interest units: SPU groups, image clusters and hierarchical semantic ids.

pub mod agreement;
pub mod coverage;
pub mod gsid;
pub mod kmeans;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::DenseMatrix;
use crate::synth::SynthItem;
use crate::types::{ItemId, IuId, Timestamp};

pub use agreement::adjusted_rand_index;
pub use coverage::{coverage_report, CoverageReport, CoverageRow};
pub use gsid::{
    assign_gsid, train_gsid_codebooks, Codebooks, GsidCode, GSID_CODEBOOK_SIZE, GSID_LEVELS,
};
pub use kmeans::{kmeans, nearest, KMeansFit};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IuType {
    Spu,
    Image,
    Semantic,
}

impl IuType {
    pub const ALL: [IuType; 3] = [IuType::Spu, IuType::Image, IuType::Semantic];

    pub fn name(self) -> &'static str {
        match self {
            IuType::Spu => "spu",
            IuType::Image => "image",
            IuType::Semantic => "semantic",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InterestUnit {
    pub iu_id: IuId,
    pub iu_type: IuType,
    pub title: String,
    /// Sorted ascending.
    pub member_item_ids: Vec<ItemId>,
    /// Semantic units carry their GSID prefix.
    pub gsid: Option<Vec<u8>>,
    /// Listing time of the member that brought the unit to its minimum size.
    pub creation_time: Timestamp,
}

/// Identity of a unit independent of its current members.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UnitKey {
    Spu(String),
    Image(usize),
    Semantic(Vec<u8>),
}

impl UnitKey {
    pub fn iu_type(&self) -> IuType {
        match self {
            UnitKey::Spu(_) => IuType::Spu,
            UnitKey::Image(_) => IuType::Image,
            UnitKey::Semantic(_) => IuType::Semantic,
        }
    }
}

/// Hands out ids in first-seen order and never reuses them.
#[derive(Clone, Debug, Default)]
pub struct UnitRegistry {
    ids: HashMap<UnitKey, IuId>,
    next: IuId,
}

impl UnitRegistry {
    pub fn new() -> Self {
        UnitRegistry {
            ids: HashMap::new(),
            next: 1,
        }
    }

    pub fn id_for(&mut self, key: &UnitKey) -> IuId {
        if let Some(&id) = self.ids.get(key) {
            return id;
        }
        let id = self.next;
        self.next += 1;
        self.ids.insert(key.clone(), id);
        id
    }

    pub fn get(&self, key: &UnitKey) -> Option<IuId> {
        self.ids.get(key).copied()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UnitConfig {
    pub min_members: usize,
    pub image_clusters: usize,
    pub max_iterations: usize,
    /// GSID prefix length that defines a semantic unit.
    pub semantic_level: usize,
    pub precedence: Vec<IuType>,
}

impl Default for UnitConfig {
    fn default() -> Self {
        UnitConfig {
            min_members: 2,
            image_clusters: 400,
            max_iterations: kmeans::DEFAULT_MAX_ITERATIONS,
            semantic_level: 2,
            precedence: vec![IuType::Spu, IuType::Image, IuType::Semantic],
        }
    }
}

impl UnitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.min_members == 0 {
            return Err(Error::Config("units.min_members must be at least 1".into()));
        }
        if self.image_clusters == 0 {
            return Err(Error::Config(
                "units.image_clusters must be at least 1".into(),
            ));
        }
        if self.semantic_level == 0 || self.semantic_level > GSID_LEVELS {
            return Err(Error::Config(format!(
                "units.semantic_level must be in 1..={GSID_LEVELS}"
            )));
        }
        let mut seen = self.precedence.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.precedence.len() {
            return Err(Error::Config("units.precedence lists a type twice".into()));
        }
        Ok(())
    }
}

fn normalize(s: &str) -> String {
    s.split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Normalized (category, brand, model) key, or `None` when any part is blank.
pub fn spu_key(item: &SynthItem) -> Option<String> {
    let a = &item.attributes;
    let parts = [
        normalize(&a.category),
        normalize(&a.brand),
        normalize(&a.model),
    ];
    if parts.iter().any(|p| p.is_empty()) {
        return None;
    }
    Some(parts.join("\u{1f}"))
}

fn dominant<'a>(values: impl Iterator<Item = &'a str>) -> String {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for v in values {
        *counts.entry(v).or_default() += 1;
    }
    let mut best: Option<(&str, usize)> = None;
    for (v, c) in counts {
        if best.is_none_or(|(_, bc)| c > bc) {
            best = Some((v, c));
        }
    }
    best.map(|(v, _)| v.to_string()).unwrap_or_default()
}

fn make_unit(
    iu_id: IuId,
    iu_type: IuType,
    members: &[&SynthItem],
    gsid: Option<Vec<u8>>,
    min_members: usize,
) -> InterestUnit {
    let mut ids: Vec<ItemId> = members.iter().map(|i| i.item_id).collect();
    ids.sort_unstable();
    let mut times: Vec<Timestamp> = members.iter().map(|i| i.list_time).collect();
    times.sort_unstable();
    let creation_time = times[min_members.min(times.len()) - 1];
    let category = dominant(members.iter().map(|i| i.attributes.category.as_str()));
    let brand = dominant(members.iter().map(|i| i.attributes.brand.as_str()));
    InterestUnit {
        iu_id,
        iu_type,
        title: format!("{}:{}/{}", iu_type.name(), category, brand),
        member_item_ids: ids,
        gsid,
        creation_time,
    }
}

fn units_from_groups(
    groups: BTreeMap<UnitKey, Vec<&SynthItem>>,
    min_members: usize,
    registry: &mut UnitRegistry,
) -> Vec<InterestUnit> {
    let mut units = Vec::new();
    for (key, members) in groups {
        if members.len() < min_members {
            continue;
        }
        let id = registry.id_for(&key);
        let gsid = match &key {
            UnitKey::Semantic(prefix) => Some(prefix.clone()),
            _ => None,
        };
        units.push(make_unit(id, key.iu_type(), &members, gsid, min_members));
    }
    units
}

/// Groups items by exact normalized attribute key.
pub fn build_spu_units(
    items: &[SynthItem],
    min_members: usize,
    registry: &mut UnitRegistry,
) -> Vec<InterestUnit> {
    let mut groups: BTreeMap<UnitKey, Vec<&SynthItem>> = BTreeMap::new();
    for item in items {
        if let Some(key) = spu_key(item) {
            groups.entry(UnitKey::Spu(key)).or_default().push(item);
        }
    }
    units_from_groups(groups, min_members, registry)
}

pub fn image_matrix(items: &[SynthItem]) -> Result<DenseMatrix> {
    let rows: Vec<Vec<f64>> = items.iter().map(|i| i.image.clone()).collect();
    DenseMatrix::from_rows(&rows)
}

pub fn text_matrix(items: &[SynthItem]) -> Result<DenseMatrix> {
    let rows: Vec<Vec<f64>> = items.iter().map(|i| i.text.clone()).collect();
    DenseMatrix::from_rows(&rows)
}

/// Image-cluster units plus the fitted centroids.
pub fn build_image_cluster_units(
    items: &[SynthItem],
    k: usize,
    seed: u64,
    cfg: &UnitConfig,
    registry: &mut UnitRegistry,
) -> Result<(Vec<InterestUnit>, DenseMatrix)> {
    if k > items.len() {
        return Err(Error::Config(format!(
            "image_clusters = {k} exceeds the {} items",
            items.len()
        )));
    }
    let data = image_matrix(items)?;
    let fit = kmeans(&data, k, seed, cfg.max_iterations)?;
    let mut groups: BTreeMap<UnitKey, Vec<&SynthItem>> = BTreeMap::new();
    for (item, &c) in items.iter().zip(&fit.assignments) {
        groups.entry(UnitKey::Image(c)).or_default().push(item);
    }
    Ok((
        units_from_groups(groups, cfg.min_members, registry),
        fit.centroids,
    ))
}

/// Semantic units grouped by GSID prefix of length `level`.
pub fn build_semantic_units(
    items: &[SynthItem],
    codes: &[GsidCode],
    level: usize,
    min_members: usize,
    registry: &mut UnitRegistry,
) -> Vec<InterestUnit> {
    let mut groups: BTreeMap<UnitKey, Vec<&SynthItem>> = BTreeMap::new();
    for (item, code) in items.iter().zip(codes) {
        groups
            .entry(UnitKey::Semantic(code.prefix(level)))
            .or_default()
            .push(item);
    }
    units_from_groups(groups, min_members, registry)
}

/// All constructed units with per-type item lookup.
#[derive(Clone, Debug)]
pub struct UnitSet {
    pub units: Vec<InterestUnit>,
    by_id: HashMap<IuId, usize>,
    item_unit: [HashMap<ItemId, IuId>; 3],
}

impl UnitSet {
    pub fn new(mut units: Vec<InterestUnit>) -> Result<Self> {
        units.sort_by_key(|u| u.iu_id);
        let mut by_id = HashMap::new();
        let mut item_unit: [HashMap<ItemId, IuId>; 3] = Default::default();
        for (idx, u) in units.iter().enumerate() {
            if u.iu_id == 0 {
                return Err(Error::Config("iu_id 0 is reserved".into()));
            }
            if u.member_item_ids.is_empty() {
                return Err(Error::Config(format!(
                    "interest unit {} has no members",
                    u.iu_id
                )));
            }
            if by_id.insert(u.iu_id, idx).is_some() {
                return Err(Error::Config(format!("duplicate iu_id {}", u.iu_id)));
            }
            for &item in &u.member_item_ids {
                if item_unit[u.iu_type.index()].insert(item, u.iu_id).is_some() {
                    return Err(Error::Config(format!(
                        "item {item} belongs to two {} units",
                        u.iu_type.name()
                    )));
                }
            }
        }
        Ok(UnitSet {
            units,
            by_id,
            item_unit,
        })
    }

    pub fn get(&self, iu_id: IuId) -> Option<&InterestUnit> {
        self.by_id.get(&iu_id).map(|&i| &self.units[i])
    }

    pub fn unit_of(&self, item: ItemId, iu_type: IuType) -> Option<IuId> {
        self.item_unit[iu_type.index()].get(&item).copied()
    }

    pub fn max_id(&self) -> IuId {
        self.units.last().map_or(0, |u| u.iu_id)
    }

    pub fn of_type(&self, iu_type: IuType) -> impl Iterator<Item = &InterestUnit> {
        self.units.iter().filter(move |u| u.iu_type == iu_type)
    }
}

/// The single unit used for modeling and serving, by first matching type.
pub fn resolve_item_iu(item: ItemId, units: &UnitSet, precedence: &[IuType]) -> Option<IuId> {
    precedence.iter().find_map(|&t| units.unit_of(item, t))
}

/// Fitted construction state; new items join existing units without
/// renumbering them.
#[derive(Clone, Debug)]
pub struct UnitIndex {
    pub cfg: UnitConfig,
    pub image_centroids: DenseMatrix,
    pub codebooks: Codebooks,
    registry: UnitRegistry,
    groups: BTreeMap<UnitKey, Vec<SynthItem>>,
    pub codes: HashMap<ItemId, GsidCode>,
}

impl UnitIndex {
    pub fn build(items: &[SynthItem], cfg: &UnitConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let (_, image_centroids) = build_image_cluster_units(
            items,
            cfg.image_clusters,
            seed ^ 0x1a,
            cfg,
            &mut UnitRegistry::new(),
        )?;
        let codebooks =
            train_gsid_codebooks(&text_matrix(items)?, seed ^ 0x2b, cfg.max_iterations)?;
        let mut index = UnitIndex {
            cfg: cfg.clone(),
            image_centroids,
            codebooks,
            registry: UnitRegistry::new(),
            groups: BTreeMap::new(),
            codes: HashMap::new(),
        };
        for item in items {
            index.insert(item);
        }
        index.register_eligible();
        Ok(index)
    }

    fn insert(&mut self, item: &SynthItem) {
        let code = assign_gsid(&item.text, &self.codebooks).0;
        let image = nearest(&self.image_centroids, &item.image).0;
        let mut keys = vec![
            UnitKey::Image(image),
            UnitKey::Semantic(code.prefix(self.cfg.semantic_level)),
        ];
        if let Some(k) = spu_key(item) {
            keys.push(UnitKey::Spu(k));
        }
        for key in keys {
            self.groups.entry(key).or_default().push(item.clone());
        }
        self.codes.insert(item.item_id, code);
    }

    // Ids follow type order then key order, so a fresh build is reproducible.
    fn register_eligible(&mut self) {
        for t in IuType::ALL {
            for (key, members) in &self.groups {
                if key.iu_type() == t && members.len() >= self.cfg.min_members {
                    self.registry.id_for(key);
                }
            }
        }
    }

    pub fn add_item(&mut self, item: &SynthItem) {
        self.insert(item);
        self.register_eligible();
    }

    /// Drops an item from every group. Unit ids stay reserved.
    pub fn remove_item(&mut self, item: ItemId) {
        for members in self.groups.values_mut() {
            members.retain(|m| m.item_id != item);
        }
        self.codes.remove(&item);
    }

    pub fn gsid(&self, item: ItemId) -> Option<GsidCode> {
        self.codes.get(&item).copied()
    }

    pub fn units(&self) -> Vec<InterestUnit> {
        let mut out = Vec::new();
        for (key, members) in &self.groups {
            if members.is_empty() || members.len() < self.cfg.min_members {
                continue;
            }
            let Some(id) = self.registry.get(key) else {
                continue;
            };
            let refs: Vec<&SynthItem> = members.iter().collect();
            let gsid = match key {
                UnitKey::Semantic(p) => Some(p.clone()),
                _ => None,
            };
            out.push(make_unit(
                id,
                key.iu_type(),
                &refs,
                gsid,
                self.cfg.min_members,
            ));
        }
        out.sort_by_key(|u| u.iu_id);
        out
    }

    pub fn unit_set(&self) -> Result<UnitSet> {
        UnitSet::new(self.units())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::Attributes;

    fn item(id: ItemId, category: &str, brand: &str, model: &str, image: Vec<f64>) -> SynthItem {
        SynthItem {
            item_id: id,
            seller_id: 1,
            true_unit: 0,
            category_id: 0,
            brand_id: 0,
            attributes: Attributes {
                category: category.into(),
                brand: brand.into(),
                model: model.into(),
            },
            text: image.clone(),
            image,
            residual: vec![],
            stock: 1,
            list_time: id as Timestamp,
            sold: false,
            sold_time: None,
        }
    }

    #[test]
    fn identical_keys_form_one_spu_unit() {
        let items = vec![
            item(1, "Phones", "Acme", "X 1", vec![0.0]),
            item(2, " phones", "ACME", "x  1 ", vec![0.0]),
            item(3, "phones", "acme", "x2", vec![0.0]),
        ];
        let units = build_spu_units(&items, 2, &mut UnitRegistry::new());
        assert_eq!(units.len(), 1);
        assert_eq!(units[0].member_item_ids, vec![1, 2]);
        assert_eq!(units[0].iu_type, IuType::Spu);
        assert_eq!(units[0].creation_time, 2);
    }

    #[test]
    fn unique_key_gets_no_unit() {
        let items = vec![
            item(1, "a", "b", "c", vec![0.0]),
            item(2, "a", "b", "d", vec![0.0]),
        ];
        assert!(build_spu_units(&items, 2, &mut UnitRegistry::new()).is_empty());
    }

    #[test]
    fn blank_model_never_groups() {
        let items = vec![
            item(1, "a", "b", "  ", vec![0.0]),
            item(2, "a", "b", "", vec![0.0]),
        ];
        assert!(build_spu_units(&items, 2, &mut UnitRegistry::new()).is_empty());
    }

    #[test]
    fn thirty_percent_on_ten_keys() {
        let mut items = Vec::new();
        for id in 1..=100u32 {
            let model = if id <= 30 {
                format!("shared-{}", id % 10)
            } else {
                format!("own-{id}")
            };
            items.push(item(id, "c", "b", &model, vec![0.0]));
        }
        let units = build_spu_units(&items, 2, &mut UnitRegistry::new());
        assert_eq!(units.len(), 10);
        let covered: usize = units.iter().map(|u| u.member_item_ids.len()).sum();
        assert_eq!(covered as f64 / items.len() as f64, 0.3);
    }

    #[test]
    fn title_uses_dominant_category_and_brand() {
        let items = vec![
            item(1, "shoes", "zeta", "m", vec![0.0]),
            item(2, "shoes", "alpha", "m", vec![0.0]),
        ];
        let (units, _) = build_image_cluster_units(
            &items,
            1,
            0,
            &UnitConfig::default(),
            &mut UnitRegistry::new(),
        )
        .unwrap();
        assert_eq!(units[0].title, "image:shoes/alpha");
    }

    #[test]
    fn image_k_one_gives_one_unit() {
        let items: Vec<_> = (1..=5)
            .map(|i| item(i, "c", "b", "", vec![i as f64, 0.0]))
            .collect();
        let (units, _) = build_image_cluster_units(
            &items,
            1,
            3,
            &UnitConfig::default(),
            &mut UnitRegistry::new(),
        )
        .unwrap();
        assert_eq!(units.len(), 1);
        assert_eq!(units[0].member_item_ids, vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn image_k_above_n_is_error() {
        let items: Vec<_> = (1..=3)
            .map(|i| item(i, "c", "b", "", vec![i as f64]))
            .collect();
        assert!(build_image_cluster_units(
            &items,
            4,
            3,
            &UnitConfig::default(),
            &mut UnitRegistry::new()
        )
        .is_err());
    }

    fn unit(id: IuId, t: IuType, members: Vec<ItemId>) -> InterestUnit {
        InterestUnit {
            iu_id: id,
            iu_type: t,
            title: String::new(),
            member_item_ids: members,
            gsid: None,
            creation_time: 0,
        }
    }

    #[test]
    fn precedence_resolution() {
        let set = UnitSet::new(vec![
            unit(1, IuType::Spu, vec![7]),
            unit(2, IuType::Semantic, vec![7, 8]),
        ])
        .unwrap();
        let default = UnitConfig::default().precedence;
        assert_eq!(resolve_item_iu(7, &set, &default), Some(1));
        assert_eq!(resolve_item_iu(8, &set, &default), Some(2));
        assert_eq!(resolve_item_iu(9, &set, &default), None);
        let reversed: Vec<_> = default.iter().rev().copied().collect();
        assert_eq!(resolve_item_iu(7, &set, &reversed), Some(2));
    }

    #[test]
    fn overlapping_units_of_one_type_rejected() {
        let err = UnitSet::new(vec![
            unit(1, IuType::Image, vec![1, 2]),
            unit(2, IuType::Image, vec![2]),
        ]);
        assert!(err.is_err());
    }

    #[test]
    fn registry_ids_are_stable() {
        let mut r = UnitRegistry::new();
        let a = r.id_for(&UnitKey::Image(3));
        let b = r.id_for(&UnitKey::Spu("x".into()));
        assert_eq!((a, b), (1, 2));
        assert_eq!(r.id_for(&UnitKey::Image(3)), 1);
    }

    #[test]
    fn config_validation() {
        let mut cfg = UnitConfig::default();
        cfg.precedence = vec![IuType::Spu, IuType::Spu];
        assert!(cfg.validate().is_err());
        let mut cfg = UnitConfig::default();
        cfg.semantic_level = 4;
        assert!(cfg.validate().is_err());
    }
}
