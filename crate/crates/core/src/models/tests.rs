use rand::Rng;

use super::*;
use crate::features::{FeatureVocab, ItemFeat, IuEntryFeat, TrainingSample};
use crate::numeric::{grad_check, Gradients, ParamKind};
use crate::rng::seeded;
use crate::types::Domain;

pub(crate) fn vocab() -> FeatureVocab {
    FeatureVocab {
        users: 6,
        items: 300,
        categories: 5,
        brands: 6,
        ius: 9,
        iu_types: 4,
        stats: [17, 17, 17, 17, 12],
        cross: [7, 6],
        item_seq_max: 150,
        iu_seq_max: 20,
        inner_max: 5,
    }
}

fn item(id: u32) -> ItemFeat {
    ItemFeat {
        id,
        side: [1 + id % 4, 1 + id % 5],
    }
}

pub(crate) fn sample(seed: u64) -> TrainingSample {
    let mut rng = seeded(seed);
    let seq: Vec<ItemFeat> = (0..rng.gen_range(2..7))
        .map(|_| item(rng.gen_range(1..300)))
        .collect();
    let iu_seq = vec![
        IuEntryFeat {
            iu_id: 3,
            side: [1, 2],
            inner: seq[..2].to_vec(),
        },
        IuEntryFeat {
            iu_id: 5,
            side: [3, 4],
            inner: vec![seq[1]],
        },
    ];
    TrainingSample {
        ts: 100,
        user_id: rng.gen_range(1..6),
        label: rng.gen_range(0..2),
        domain: Domain::Normal,
        snapshot: 0,
        item: item(rng.gen_range(1..300)),
        iu_id: 3,
        iu_side: [1, 2],
        stats: [2, 3, 1, 1, 4],
        cross: [2, 3],
        iu_inner: vec![seq[0]],
        item_seq: seq,
        iu_seq,
    }
}

fn perturbed(kind: ModelKind, seed: u64) -> Network {
    let mut net = Network::new(kind, &NetworkConfig::default(), &vocab(), seed).unwrap();
    let mut rng = seeded(seed + 1000);
    for id in net.params.ids().collect::<Vec<_>>() {
        let a = net.params.array(id);
        let emb = a.kind == ParamKind::Embedding;
        if !emb && !a.name.ends_with(".b") {
            continue;
        }
        let m = net.params.get_mut(id);
        let cols = m.cols();
        for (k, x) in m.data_mut().iter_mut().enumerate() {
            if !(emb && k < cols) {
                *x = rng.gen_range(-0.5..0.5);
            }
        }
    }
    net
}

#[test]
fn zero_final_layer_gives_half() {
    for kind in ModelKind::ALL {
        let mut net = Network::new(kind, &NetworkConfig::default(), &vocab(), 3).unwrap();
        let last = net.cfg.hidden.len();
        let w = net.params.id(&format!("mlp.{last}.w")).unwrap();
        net.params.get_mut(w).data_mut().fill(0.0);
        for s in 0..5 {
            let smp = sample(s);
            assert_eq!(
                net.predict_ctr(smp.user_input(), smp.target_input())
                    .unwrap(),
                0.5
            );
        }
    }
}

#[test]
fn nll_examples() {
    assert!((nll_loss(&[0.5, 0.5], &[1, 0]).unwrap() - 2f64.ln()).abs() < 1e-15);
    let perfect = nll_loss(&[1.0, 0.0], &[1, 0]).unwrap();
    assert!(perfect > 0.0 && perfect < 2e-7);
    let expected = -(0.8f64.ln() + 0.7f64.ln()) / 2.0;
    assert!((nll_loss(&[0.8, 0.3], &[1, 0]).unwrap() - expected).abs() < 1e-15);
    assert!((expected - 0.2899).abs() < 1e-4);
    assert!(matches!(nll_loss(&[], &[]), Err(crate::Error::EmptyBatch)));
}

#[test]
fn item_embedding_shape_and_padding() {
    let net = perturbed(ModelKind::IuBoosted, 1);
    let w = net.cfg.item_width();
    assert_eq!(net.embed_item(&ItemFeat::PAD).unwrap(), vec![0.0; w]);
    let a = net.embed_item(&item(7)).unwrap();
    assert_eq!(a.len(), w);
    assert_eq!(a, net.embed_item(&item(7)).unwrap());
    assert!(net.embed_item(&item(300)).is_err());
}

#[test]
fn iu_entry_inner_block() {
    let net = perturbed(ModelKind::IuBoosted, 2);
    let c = &net.cfg;
    let head = c.iu_id_dim + 2 * c.iu_side_dim;
    let empty = net.embed_iu_entry(3, [1, 2], &[]).unwrap();
    assert_eq!(empty.len(), c.iu_width());
    assert!(empty[head..].iter().all(|&x| x == 0.0));
    let one = net.embed_iu_entry(3, [1, 2], &[item(9)]).unwrap();
    assert_eq!(&one[head..], net.embed_item(&item(9)).unwrap().as_slice());
    let two = net.embed_iu_entry(3, [1, 2], &[item(9), item(9)]).unwrap();
    assert_eq!(one, two);
    assert_eq!(empty[..head], one[..head]);
}

#[test]
fn malformed_sample_names_field() {
    let net = perturbed(ModelKind::IuBoosted, 4);
    let mut s = sample(1);
    s.cross[1] = 99;
    let err = net
        .predict_ctr(s.user_input(), s.target_input())
        .unwrap_err()
        .to_string();
    assert!(err.contains("cross.recency"), "{err}");
    let mut s = sample(1);
    s.item_seq[0].side[1] = 50;
    let err = net
        .predict_ctr(s.user_input(), s.target_input())
        .unwrap_err()
        .to_string();
    assert!(err.contains("item_seq.brand"), "{err}");
}

#[test]
fn non_iu_kinds_have_no_iu_embedding() {
    let net = perturbed(ModelKind::Din, 4);
    assert!(net.embed_iu_entry(1, [1, 1], &[]).is_err());
    assert!(net.params.id("emb.iu").is_none());
    assert!(perturbed(ModelKind::Dnn, 4)
        .params
        .id("attn.item.wq")
        .is_none());
}

/// Central differences at eps 1e-5 carry about one ulp of the loss divided by
/// 2e-5, so the check runs where the loss is small (logit 5 on a positive).
pub(crate) fn confident_instance(
    kind: ModelKind,
    seed: u64,
    smp: &TrainingSample,
) -> (Network, TrainingSample) {
    let mut net = perturbed(kind, seed);
    let mut smp = smp.clone();
    smp.label = 1;
    let b = net
        .params
        .id(&format!("mlp.{}.b", net.cfg.hidden.len()))
        .unwrap();
    net.params.get_mut(b).data_mut()[0] = 0.0;
    let z = net
        .predict_ctr(smp.user_input(), smp.target_input())
        .unwrap();
    let logit = (z / (1.0 - z)).ln();
    net.params.get_mut(b).data_mut()[0] = 5.0 - logit;
    (net, smp)
}

fn check_gradients(kind: ModelKind, smp: &TrainingSample) {
    let (net, smp) = confident_instance(kind, 11, smp);
    let (cfg, v) = (net.cfg.clone(), net.vocab.clone());
    let loss = |p: &crate::numeric::ModelParams| {
        let n = Network::from_params(kind, &cfg, &v, p.clone())?;
        let mut g = Gradients::zeros_like(p);
        let l = n.accumulate(smp.user_input(), smp.target_input(), smp.label, 1.0, &mut g)?;
        Ok((l, g))
    };
    let report = grad_check(loss, &net.params, 1e-5).unwrap();
    assert!(
        report.max_error() < 1e-4,
        "{} worst {:?}",
        kind.name(),
        report.worst()
    );
}

#[test]
fn gradients_match_finite_differences() {
    for kind in ModelKind::ALL {
        for s in 0..5 {
            check_gradients(kind, &sample(s));
        }
    }
}

#[test]
fn gradients_with_empty_sequences() {
    let mut s = sample(8);
    s.item_seq.clear();
    s.iu_seq.clear();
    s.iu_inner.clear();
    for kind in ModelKind::ALL {
        check_gradients(kind, &s);
    }
}

#[test]
fn padding_entries_do_not_change_predictions() {
    for kind in ModelKind::ALL {
        let net = perturbed(kind, 21);
        for seed in 0..5 {
            let s = sample(seed);
            let base = net.predict_ctr(s.user_input(), s.target_input()).unwrap();
            let mut p = s.clone();
            p.item_seq.extend([ItemFeat::PAD; 3]);
            p.iu_seq.push(IuEntryFeat {
                iu_id: 0,
                side: [0, 0],
                inner: vec![ItemFeat::PAD],
            });
            p.iu_seq[0].inner.push(ItemFeat::PAD);
            p.iu_inner.push(ItemFeat::PAD);
            let padded = net.predict_ctr(p.user_input(), p.target_input()).unwrap();
            assert!(
                (base - padded).abs() <= 1e-12,
                "{} {base} {padded}",
                kind.name()
            );
        }
    }
}

#[test]
fn training_is_deterministic() {
    let data: Vec<_> = (0..64).map(sample).collect();
    let cfg = TrainConfig {
        batch_size: 16,
        epochs: 2,
        ..Default::default()
    };
    let run = || {
        let mut net =
            Network::new(ModelKind::IuBoosted, &NetworkConfig::default(), &vocab(), 5).unwrap();
        let curve = train(&mut net, &data, &cfg).unwrap();
        (net.params, curve)
    };
    let (a, ca) = run();
    let (b, cb) = run();
    assert_eq!(ca, cb);
    for (x, y) in a.arrays().iter().zip(b.arrays()) {
        assert!(x
            .value
            .data()
            .iter()
            .zip(y.value.data())
            .all(|(p, q)| p.to_bits() == q.to_bits()));
    }
}

#[test]
fn overfits_a_single_sample() {
    let mut one = sample(3);
    one.label = 1;
    let data = vec![one; 200];
    let cfg = TrainConfig {
        batch_size: 20,
        epochs: 50,
        log_every: 0,
        ..Default::default()
    };
    for kind in ModelKind::ALL {
        let mut net = Network::new(kind, &NetworkConfig::default(), &vocab(), 9).unwrap();
        let curve = train(&mut net, &data, &cfg).unwrap();
        assert!(curve.losses.len() <= 500);
        let last = *curve.losses.last().unwrap();
        assert!(last < 0.01, "{} final loss {last}", kind.name());
    }
}

#[test]
fn padding_rows_stay_zero_after_training() {
    let data: Vec<_> = (0..40).map(sample).collect();
    let mut net =
        Network::new(ModelKind::IuBoosted, &NetworkConfig::default(), &vocab(), 5).unwrap();
    train(
        &mut net,
        &data,
        &TrainConfig {
            batch_size: 8,
            ..Default::default()
        },
    )
    .unwrap();
    for a in net.params.arrays() {
        if a.kind == ParamKind::Embedding {
            assert!(a.value.row(0).iter().all(|&x| x == 0.0), "{}", a.name);
        }
    }
}

#[test]
fn rejects_bad_configs() {
    let bad = NetworkConfig {
        heads: 3,
        ..Default::default()
    };
    assert!(Network::new(ModelKind::Din, &bad, &vocab(), 1).is_err());
    let t = TrainConfig {
        batch_size: 0,
        ..Default::default()
    };
    let mut net = Network::new(ModelKind::Dnn, &NetworkConfig::default(), &vocab(), 1).unwrap();
    assert!(train(&mut net, &[sample(1)], &t).is_err());
    assert!(matches!(
        train(&mut net, &[], &TrainConfig::default()),
        Err(crate::Error::EmptyBatch)
    ));
}

#[test]
fn from_params_checks_layout() {
    let net = Network::new(ModelKind::Din, &NetworkConfig::default(), &vocab(), 1).unwrap();
    assert!(Network::from_params(
        ModelKind::IuBoosted,
        &net.cfg,
        &net.vocab,
        net.params.clone()
    )
    .is_err());
    assert!(Network::from_params(ModelKind::Din, &net.cfg, &net.vocab, net.params.clone()).is_ok());
}

#[test]
fn logit_loss_matches_probability_loss() {
    for &z in &[-20.0, -16.2, -3.0, -0.4, 0.0, 0.7, 5.0, 16.0, 30.0] {
        for y in [0u8, 1] {
            let (a, da) = nll_from_logit(z, y);
            let (b, db) = nll_term(crate::numeric::sigmoid(z), y);
            assert!(
                (a - b).abs() <= 1e-9 * b.max(1e-12) + 1e-15,
                "{z} {y} {a} {b}"
            );
            assert!((da - db).abs() < 1e-12, "{z} {y}");
        }
    }
}
