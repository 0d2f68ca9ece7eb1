use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{LogNormal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::{dot, sigmoid};
use crate::rng::{derived_rng, seeded};
use crate::types::{ItemId, Timestamp, UserId, SECONDS_PER_DAY, SECONDS_PER_HOUR};

const STREAM_ITEMS: u64 = 1;
const STREAM_USERS: u64 = 2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StockDistribution {
    /// Fraction of items listed with exactly one unit of stock.
    pub single_stock_fraction: f64,
    /// Multi-stock items draw uniformly from `2..=max_stock`.
    pub max_stock: u32,
}

impl Default for StockDistribution {
    fn default() -> Self {
        Self {
            single_stock_fraction: 0.8,
            max_stock: 5,
        }
    }
}

impl StockDistribution {
    pub fn always_one() -> Self {
        Self {
            single_stock_fraction: 1.0,
            max_stock: 1,
        }
    }
}

/// Coefficients of the click oracle
/// `sigmoid(alpha·<u, center> + beta·<u, residual> + bias)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CtrOracle {
    pub alpha: f64,
    pub beta: f64,
    pub bias: f64,
}

impl Default for CtrOracle {
    fn default() -> Self {
        Self {
            alpha: 1.5,
            beta: 1.0,
            bias: -2.6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CatalogConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub n_true_units: usize,
    pub latent_dim: usize,
    pub image_dim: usize,
    pub text_dim: usize,
    pub n_categories: usize,
    pub brands_per_category: usize,
    /// Units whose items carry a reliable model attribute.
    pub standard_unit_fraction: f64,
    pub stock: StockDistribution,
    /// Items live at time 0; the rest are listed uniformly over `listing_days`.
    pub initial_listing_fraction: f64,
    pub listing_days: u32,
    pub favorite_categories: usize,
    pub category_scale: f64,
    pub unit_scale: f64,
    pub residual_scale: f64,
    pub taste_norm: f64,
    pub favorite_strength: f64,
    pub user_noise: f64,
    pub image_center_scale: f64,
    pub image_noise: f64,
    pub text_category_scale: f64,
    pub text_unit_scale: f64,
    pub text_noise: f64,
    pub oracle: CtrOracle,
}

impl Default for CatalogConfig {
    fn default() -> Self {
        Self {
            n_users: 2_000,
            n_items: 20_000,
            n_true_units: 400,
            latent_dim: 16,
            image_dim: 16,
            text_dim: 16,
            n_categories: 20,
            brands_per_category: 8,
            standard_unit_fraction: 0.6,
            stock: StockDistribution::default(),
            initial_listing_fraction: 0.3,
            listing_days: 8,
            favorite_categories: 2,
            category_scale: 0.25,
            unit_scale: 0.3,
            residual_scale: 0.15,
            taste_norm: 1.5,
            favorite_strength: 1.5,
            user_noise: 0.25,
            image_center_scale: 3.0,
            image_noise: 0.5,
            text_category_scale: 2.0,
            text_unit_scale: 1.0,
            text_noise: 0.3,
            oracle: CtrOracle::default(),
        }
    }
}

impl CatalogConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.n_users == 0 {
            return bad("n_users must be positive");
        }
        if self.n_items == 0 {
            return bad("n_items must be positive");
        }
        if self.n_true_units == 0 || self.n_true_units > self.n_items {
            return bad("n_true_units must lie in 1..=n_items");
        }
        if self.latent_dim == 0 || self.image_dim == 0 || self.text_dim == 0 {
            return bad("vector dimensions must be positive");
        }
        if self.n_categories == 0 || self.brands_per_category == 0 {
            return bad("need at least one category and brand");
        }
        if !(0.0..=1.0).contains(&self.stock.single_stock_fraction) || self.stock.max_stock == 0 {
            return bad("stock distribution out of range");
        }
        if self.stock.single_stock_fraction < 1.0 && self.stock.max_stock < 2 {
            return bad("max_stock must be >= 2 when multi-stock items exist");
        }
        if self.listing_days == 0 {
            return bad("listing_days must be positive");
        }
        if self.favorite_categories > self.n_categories {
            return bad("favorite_categories exceeds n_categories");
        }
        Ok(())
    }
}

/// CPV-style structured attributes.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Attributes {
    pub category: String,
    pub brand: String,
    /// Free text; may be empty or seller-specific for non-standard goods.
    pub model: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthUser {
    pub user_id: UserId,
    pub latent: Vec<f64>,
    /// Expected sessions per day.
    pub activity_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthItem {
    pub item_id: ItemId,
    pub seller_id: u32,
    /// Hidden generating cluster.
    pub true_unit: u32,
    pub category_id: u32,
    pub brand_id: u32,
    pub attributes: Attributes,
    pub image: Vec<f64>,
    pub text: Vec<f64>,
    /// Item-specific latent offset from its unit center.
    pub residual: Vec<f64>,
    pub stock: u32,
    pub list_time: Timestamp,
    pub sold: bool,
    pub sold_time: Option<Timestamp>,
}

impl SynthItem {
    pub fn is_available(&self, t: Timestamp) -> bool {
        !self.sold && self.list_time <= t
    }
}

/// Hidden latent structure of the world.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruth {
    pub oracle: CtrOracle,
    pub unit_centers: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct World {
    pub users: Vec<SynthUser>,
    pub items: Vec<SynthItem>,
    pub truth: GroundTruth,
}

impl World {
    /// Items are stored densely with `item_id = index + 1`.
    pub fn item(&self, id: ItemId) -> &SynthItem {
        &self.items[id as usize - 1]
    }

    pub fn user(&self, id: UserId) -> &SynthUser {
        &self.users[id as usize - 1]
    }

    pub fn ctr(&self, user: UserId, item: ItemId) -> f64 {
        ground_truth_ctr(self.user(user), self.item(item), &self.truth)
    }
}

/// Click probability of `user` on `item` under the hidden oracle.
pub fn ground_truth_ctr(user: &SynthUser, item: &SynthItem, truth: &GroundTruth) -> f64 {
    let o = truth.oracle;
    let center = &truth.unit_centers[item.true_unit as usize];
    let z =
        o.alpha * dot(&user.latent, center) + o.beta * dot(&user.latent, &item.residual) + o.bias;
    // Keep strictly inside (0, 1) even when the logit saturates.
    sigmoid(z).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON)
}

fn normal_vec(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> Vec<f64> {
    (0..dim)
        .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn norm(v: &[f64]) -> f64 {
    dot(v, v).sqrt()
}

fn random_case(rng: &mut ChaCha8Rng, s: &str) -> String {
    let upper = rng.gen_bool(0.5);
    let padded = rng.gen_bool(0.3);
    let body = if upper {
        s.to_uppercase()
    } else {
        s.to_string()
    };
    if padded {
        format!("  {body} ")
    } else {
        body
    }
}

struct UnitSpec {
    category: u32,
    brand: u32,
    standard: bool,
    image_center: Vec<f64>,
    text_center: Vec<f64>,
}

/// Builds users and items deterministically from `seed`.
///
/// Per-item and per-user draws come from derived streams, so any shard of the
/// catalog can be regenerated independently.
pub fn generate_catalog(cfg: &CatalogConfig, seed: u64) -> Result<World> {
    cfg.validate()?;
    let mut rng = seeded(seed);
    let l = cfg.latent_dim;

    let category_centers: Vec<Vec<f64>> = (0..cfg.n_categories)
        .map(|_| normal_vec(&mut rng, l, cfg.category_scale))
        .collect();
    let category_text: Vec<Vec<f64>> = (0..cfg.n_categories)
        .map(|_| normal_vec(&mut rng, cfg.text_dim, cfg.text_category_scale))
        .collect();
    let mut taste = normal_vec(&mut rng, l, 1.0);
    let tn = norm(&taste).max(1e-12);
    taste.iter_mut().for_each(|v| *v *= cfg.taste_norm / tn);

    let mut unit_centers = Vec::with_capacity(cfg.n_true_units);
    let mut units = Vec::with_capacity(cfg.n_true_units);
    for _ in 0..cfg.n_true_units {
        let category = rng.gen_range(0..cfg.n_categories) as u32;
        let brand = category * cfg.brands_per_category as u32
            + rng.gen_range(0..cfg.brands_per_category) as u32;
        let offset = normal_vec(&mut rng, l, cfg.unit_scale);
        unit_centers.push(
            category_centers[category as usize]
                .iter()
                .zip(&offset)
                .map(|(a, b)| a + b)
                .collect(),
        );
        let text_offset = normal_vec(&mut rng, cfg.text_dim, cfg.text_unit_scale);
        units.push(UnitSpec {
            category,
            brand,
            standard: rng.gen_bool(cfg.standard_unit_fraction.clamp(0.0, 1.0)),
            image_center: normal_vec(&mut rng, cfg.image_dim, cfg.image_center_scale),
            text_center: category_text[category as usize]
                .iter()
                .zip(&text_offset)
                .map(|(a, b)| a + b)
                .collect(),
        });
    }
    let size_dist = LogNormal::new(0.0, 0.5).expect("valid lognormal");
    let weights: Vec<f64> = (0..cfg.n_true_units)
        .map(|_| size_dist.sample(&mut rng))
        .collect();
    let unit_picker = WeightedIndex::new(&weights).expect("positive weights");

    let listing_window = cfg.listing_days as Timestamp * SECONDS_PER_DAY - SECONDS_PER_HOUR;
    let n_sellers = (cfg.n_items / 4).max(1) as u32;
    let items = (0..cfg.n_items)
        .map(|idx| {
            let mut r = derived_rng(seed, STREAM_ITEMS, idx as u64);
            let item_id = idx as ItemId + 1;
            // Every unit gets at least one item; the rest follow the size weights.
            let unit = if idx < cfg.n_true_units {
                idx
            } else {
                unit_picker.sample(&mut r)
            };
            let spec = &units[unit];
            let model = if spec.standard {
                random_case(&mut r, &format!("model-{unit}"))
            } else {
                format!("listing #{item_id}")
            };
            let stock = if r.gen_bool(cfg.stock.single_stock_fraction) {
                1
            } else {
                r.gen_range(2..=cfg.stock.max_stock.max(2))
            };
            let list_time = if r.gen_bool(cfg.initial_listing_fraction.clamp(0.0, 1.0)) {
                0
            } else {
                r.gen_range(0..listing_window.max(1))
            };
            SynthItem {
                item_id,
                seller_id: r.gen_range(1..=n_sellers),
                true_unit: unit as u32,
                category_id: spec.category,
                brand_id: spec.brand,
                attributes: Attributes {
                    category: format!("category-{}", spec.category),
                    brand: format!("brand-{}", spec.brand),
                    model,
                },
                image: spec
                    .image_center
                    .iter()
                    .map(|c| c + cfg.image_noise * r.sample::<f64, _>(StandardNormal))
                    .collect(),
                text: spec
                    .text_center
                    .iter()
                    .map(|c| c + cfg.text_noise * r.sample::<f64, _>(StandardNormal))
                    .collect(),
                residual: normal_vec(&mut r, l, cfg.residual_scale),
                stock,
                list_time,
                sold: false,
                sold_time: None,
            }
        })
        .collect();

    let users = (0..cfg.n_users)
        .map(|idx| {
            let mut r = derived_rng(seed, STREAM_USERS, idx as u64);
            let mut latent: Vec<f64> = taste
                .iter()
                .zip(normal_vec(&mut r, l, cfg.user_noise))
                .map(|(a, b)| a + b)
                .collect();
            let favorites =
                rand::seq::index::sample(&mut r, cfg.n_categories, cfg.favorite_categories);
            for c in favorites.iter() {
                let center = &category_centers[c];
                let cn = norm(center).max(1e-12);
                for (v, x) in latent.iter_mut().zip(center) {
                    *v += cfg.favorite_strength * x / cn;
                }
            }
            let n = norm(&latent);
            if n > 10.0 {
                latent.iter_mut().for_each(|v| *v *= 10.0 / n);
            } else if n == 0.0 {
                latent[0] = 1e-3;
            }
            SynthUser {
                user_id: idx as UserId + 1,
                latent,
                activity_rate: r.gen_range(0.5..2.0),
            }
        })
        .collect();

    Ok(World {
        users,
        items,
        truth: GroundTruth {
            oracle: cfg.oracle,
            unit_centers,
        },
    })
}
