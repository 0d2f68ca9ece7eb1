//! AUC, GAUC and relative improvement, plus the per-domain report.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Domain, UserId};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoredSample {
    pub user_id: UserId,
    pub score: f64,
    pub label: u8,
    pub domain: Domain,
}

/// How a positive and a negative with equal scores are counted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieMode {
    /// Half a correctly ordered pair.
    #[default]
    Half,
    /// Not counted, the literal strict indicator.
    Strict,
}

fn check(pairs: &[(f64, u8)]) -> Result<(u64, u64)> {
    let mut pos = 0u64;
    for &(s, y) in pairs {
        if !s.is_finite() {
            return Err(Error::UndefinedMetric(format!("score {s} is not finite")));
        }
        if y > 1 {
            return Err(Error::UndefinedMetric(format!("label {y} is not binary")));
        }
        pos += y as u64;
    }
    let neg = pairs.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "auc needs both classes, got {pos} positives and {neg} negatives"
        )));
    }
    Ok((pos, neg))
}

/// Rank statistic over `(score, label)` pairs in O(n log n).
pub fn auc_pairs(pairs: &[(f64, u8)], ties: TieMode) -> Result<f64> {
    let (pos, neg) = check(pairs)?;
    let mut sorted = pairs.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Twice the number of correctly ordered pairs, counted exactly.
    let mut twice: u128 = 0;
    let mut neg_below: u128 = 0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        let (mut p, mut n) = (0u128, 0u128);
        while j < sorted.len() && sorted[j].0 == sorted[i].0 {
            if sorted[j].1 == 1 {
                p += 1;
            } else {
                n += 1;
            }
            j += 1;
        }
        twice += 2 * p * neg_below;
        if ties == TieMode::Half {
            twice += p * n;
        }
        neg_below += n;
        i = j;
    }
    Ok(twice as f64 / (2.0 * pos as f64 * neg as f64))
}

/// Enumerates every positive/negative pair.
pub fn auc_brute_force(pairs: &[(f64, u8)], ties: TieMode) -> Result<f64> {
    let (pos, neg) = check(pairs)?;
    let tie = match ties {
        TieMode::Half => 0.5,
        TieMode::Strict => 0.0,
    };
    let mut total = 0.0;
    for &(sp, yp) in pairs.iter().filter(|p| p.1 == 1) {
        for &(sn, _) in pairs.iter().filter(|p| p.1 == 0) {
            debug_assert_eq!(yp, 1);
            total += if sp > sn {
                1.0
            } else if sp == sn {
                tie
            } else {
                0.0
            };
        }
    }
    Ok(total / (pos as f64 * neg as f64))
}

fn pairs_of(samples: &[ScoredSample]) -> Vec<(f64, u8)> {
    samples.iter().map(|s| (s.score, s.label)).collect()
}

pub fn auc(samples: &[ScoredSample]) -> Result<f64> {
    auc_pairs(&pairs_of(samples), TieMode::Half)
}

/// Impression-weighted mean of per-user AUC over users with both classes.
pub fn gauc(samples: &[ScoredSample]) -> Result<f64> {
    gauc_with(samples, TieMode::Half)
}

pub fn gauc_with(samples: &[ScoredSample], ties: TieMode) -> Result<f64> {
    let mut by_user: BTreeMap<UserId, Vec<(f64, u8)>> = BTreeMap::new();
    for s in samples {
        by_user
            .entry(s.user_id)
            .or_default()
            .push((s.score, s.label));
    }
    let (mut num, mut den) = (0.0, 0.0);
    for pairs in by_user.values() {
        let pos = pairs.iter().filter(|p| p.1 == 1).count();
        if pos == 0 || pos == pairs.len() {
            continue;
        }
        let w = pairs.len() as f64;
        num += w * auc_pairs(pairs, ties)?;
        den += w;
    }
    if den == 0.0 {
        return Err(Error::UndefinedMetric(
            "no user has both positive and negative samples".into(),
        ));
    }
    Ok(num / den)
}

/// `((measured - 0.5) / (base - 0.5) - 1) * 100`.
pub fn rela_impr(measured: f64, base: f64) -> Result<f64> {
    if base == 0.5 {
        return Err(Error::UndefinedMetric(
            "relative improvement over a base AUC of 0.5".into(),
        ));
    }
    Ok(((measured - 0.5) / (base - 0.5) - 1.0) * 100.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OverallCell {
    pub auc: Option<f64>,
    pub gauc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainCell {
    pub auc: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelaImprCells {
    pub overall: Option<f64>,
    pub iu: Option<f64>,
    pub normal: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelRow {
    pub model: String,
    pub samples: usize,
    pub overall: OverallCell,
    pub iu: DomainCell,
    pub normal: DomainCell,
    /// Percent, against the report's base model.
    pub rela_impr: RelaImprCells,
}

/// Overall / Interest Unit / Normal Product table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub base_model: String,
    pub rows: Vec<ModelRow>,
}

impl EvalReport {
    pub fn row(&self, model: &str) -> Option<&ModelRow> {
        self.rows.iter().find(|r| r.model == model)
    }
}

fn domain_auc(samples: &[ScoredSample], d: Domain) -> Option<f64> {
    let part: Vec<ScoredSample> = samples.iter().filter(|s| s.domain == d).copied().collect();
    auc(&part).ok()
}

/// Scores each model's samples per domain; cells whose metric is undefined
/// are `None`.
pub fn domain_split_eval(
    models: &[(String, Vec<ScoredSample>)],
    base_model: &str,
) -> Result<EvalReport> {
    let mut rows: Vec<ModelRow> = models
        .iter()
        .map(|(name, s)| ModelRow {
            model: name.clone(),
            samples: s.len(),
            overall: OverallCell {
                auc: auc(s).ok(),
                gauc: gauc(s).ok(),
            },
            iu: DomainCell {
                auc: domain_auc(s, Domain::Iu),
            },
            normal: DomainCell {
                auc: domain_auc(s, Domain::Normal),
            },
            rela_impr: RelaImprCells {
                overall: None,
                iu: None,
                normal: None,
            },
        })
        .collect();
    let base = rows
        .iter()
        .find(|r| r.model == base_model)
        .cloned()
        .ok_or_else(|| Error::Config(format!("base model {base_model:?} was not evaluated")))?;
    let ri = |m: Option<f64>, b: Option<f64>| m.zip(b).and_then(|(m, b)| rela_impr(m, b).ok());
    for r in &mut rows {
        r.rela_impr = RelaImprCells {
            overall: ri(r.overall.auc, base.overall.auc),
            iu: ri(r.iu.auc, base.iu.auc),
            normal: ri(r.normal.auc, base.normal.auc),
        };
    }
    Ok(EvalReport {
        base_model: base_model.to_string(),
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(user: UserId, score: f64, label: u8) -> ScoredSample {
        ScoredSample {
            user_id: user,
            score,
            label,
            domain: Domain::Normal,
        }
    }

    #[test]
    fn auc_examples() {
        assert_eq!(
            auc_pairs(&[(0.9, 1), (0.8, 1), (0.3, 0)], TieMode::Half).unwrap(),
            1.0
        );
        assert_eq!(
            auc_pairs(&[(0.9, 1), (0.2, 1), (0.5, 0)], TieMode::Half).unwrap(),
            0.5
        );
        assert_eq!(
            auc_pairs(&[(0.5, 1), (0.5, 0)], TieMode::Half).unwrap(),
            0.5
        );
        assert_eq!(
            auc_pairs(&[(0.5, 1), (0.5, 0)], TieMode::Strict).unwrap(),
            0.0
        );
    }

    #[test]
    fn single_class_is_undefined() {
        assert!(matches!(
            auc_pairs(&[(0.1, 1), (0.2, 1)], TieMode::Half),
            Err(Error::UndefinedMetric(_))
        ));
        assert!(auc_pairs(&[], TieMode::Half).is_err());
        assert!(auc_pairs(&[(f64::NAN, 1), (0.2, 0)], TieMode::Half).is_err());
    }

    #[test]
    fn gauc_two_users() {
        let v = vec![
            s(1, 0.9, 1),
            s(1, 0.2, 0),
            s(1, 0.1, 0),
            s(2, 0.3, 1),
            s(2, 0.3, 0),
            s(3, 0.7, 1),
        ];
        assert_eq!(gauc(&v).unwrap(), 0.8);
        assert_eq!(gauc(&v[..3]).unwrap(), 1.0);
        assert!(gauc(&v[5..]).is_err());
    }

    #[test]
    fn rela_impr_values() {
        assert!((rela_impr(0.7411, 0.7366).unwrap() - 1.90).abs() < 0.01);
        assert!((rela_impr(0.7335, 0.7366).unwrap() + 1.31).abs() < 0.01);
        assert_eq!(rela_impr(0.7, 0.7).unwrap(), 0.0);
        assert!(rela_impr(0.7, 0.5).is_err());
    }

    #[test]
    fn report_cells() {
        let mut iu_only: Vec<ScoredSample> =
            vec![s(1, 0.9, 1), s(1, 0.1, 0), s(2, 0.4, 1), s(2, 0.6, 0)];
        for x in &mut iu_only {
            x.domain = Domain::Iu;
        }
        let rep = domain_split_eval(
            &[
                ("din".into(), iu_only.clone()),
                ("other".into(), iu_only.clone()),
            ],
            "din",
        )
        .unwrap();
        let din = rep.row("din").unwrap();
        assert_eq!(din.normal.auc, None);
        assert_eq!(din.overall.auc, din.iu.auc);
        assert_eq!(din.rela_impr.overall, Some(0.0));
        assert_eq!(din.rela_impr.normal, None);
        assert!(domain_split_eval(&[("a".into(), iu_only)], "din").is_err());
    }
}
