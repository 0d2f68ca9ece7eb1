use super::checkpoint::{read_checkpoint, write_checkpoint, MAGIC};
use super::*;
use crate::features::UserInput;

fn tiny() -> PipelineConfig {
    let mut c = PipelineConfig::default();
    c.seed = 3;
    c.world.catalog.n_users = 40;
    c.world.catalog.n_items = 600;
    c.world.catalog.n_true_units = 30;
    c.units.image_clusters = 30;
    c.model.batch_size = 64;
    c.sim.horizon_days = 1;
    c.sim.page_size = 20;
    c
}

#[test]
fn default_config_is_valid() {
    PipelineConfig::default().validate().unwrap();
    let text = toml::to_string(&PipelineConfig::default()).unwrap();
    let back = PipelineConfig::from_toml(&text, Path::new("x.toml")).unwrap();
    assert_eq!(back, PipelineConfig::default());
}

#[test]
fn shipped_config_matches_defaults() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/default.toml");
    let cfg = PipelineConfig::load(&path).unwrap();
    assert_eq!(cfg, PipelineConfig::default());
}

#[test]
fn unknown_key_reports_line() {
    let text = "seed = 2\n\n[model]\nepochs = 1\nlearning_rat = 0.1\n";
    match PipelineConfig::from_toml(text, Path::new("c.toml")) {
        Err(Error::Schema { line, message, .. }) => {
            assert_eq!(line, 5);
            assert!(message.contains("learning_rat"), "{message}");
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn inconsistent_config_is_rejected() {
    let mut c = PipelineConfig::default();
    c.sim.start_day = 3;
    assert!(c.validate().is_err());
    let mut c = PipelineConfig::default();
    c.model.kinds = vec![ModelKind::Dnn];
    assert!(c.validate().is_err());
    let mut c = PipelineConfig::default();
    c.eval.test_day = 9;
    assert!(c.validate().is_err());
}

#[test]
fn seed_override_and_digest() {
    let mut c = PipelineConfig::default();
    c.seeds.sim = Some(11);
    assert_eq!(c.seeds().sim, 11);
    assert_eq!(c.seeds().world, 1);
    let d = c.digest();
    assert_eq!(d.len(), 64);
    let o = c.clone().with_seed(5);
    assert_eq!(o.seeds().sim, 5);
    assert_ne!(o.digest(), d);
    assert_eq!(c.digest(), d);
}

#[test]
fn missing_inputs_name_producer() {
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::new(tiny(), dir.path()).unwrap();
    for (cmd, producer) in [
        (Command::BuildIu, "synth"),
        (Command::Featurize, "synth"),
        (Command::Train, "featurize"),
        (Command::Eval, "featurize"),
    ] {
        let err = p.run(cmd).unwrap_err();
        assert!(
            err.to_string().contains(&format!("run `{producer}` first")),
            "{cmd:?}: {err}"
        );
    }
}

#[test]
fn end_to_end_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let pa = Pipeline::new(tiny(), a.path()).unwrap();
    for c in [
        Command::Synth,
        Command::BuildIu,
        Command::Featurize,
        Command::Train,
    ] {
        pa.run(c).unwrap();
    }
    let err = pa.run(Command::Eval).err();
    assert!(err.is_none(), "{err:?}");
    std::fs::remove_file(pa.paths.checkpoint(ModelKind::Din)).unwrap();
    let err = pa.run(Command::Eval).unwrap_err();
    assert!(err.to_string().contains("run `train` first"), "{err}");
    pa.run(Command::Train).unwrap();
    pa.run(Command::Simulate).unwrap();
    pa.run(Command::AbTest).unwrap();

    let pb = Pipeline::new(tiny(), b.path()).unwrap();
    pb.run_all().unwrap();
    for name in [
        "catalog.jsonl",
        "events.jsonl",
        "units.jsonl",
        "features.jsonl",
        "iu_stats_day8.jsonl",
        "checkpoints/iu_boosted.iu4r",
        "loss_curve.csv",
        "scored_samples.jsonl",
        "report.json",
        "sim_events.jsonl",
        "ab_report.json",
        "manifest.json",
    ] {
        let x = std::fs::read(a.path().join(name)).unwrap();
        let y = std::fs::read(b.path().join(name)).unwrap();
        assert!(x == y, "{name} differs");
    }
    let rep: ReportFile = read_json(&pb.paths.report(), "eval").unwrap();
    assert_eq!(rep.config_digest, pb.digest());
    assert_eq!(rep.eval.rows.len(), 3);
    let ab: AbReportFile = read_json(&pb.paths.ab_report(), "ab-test").unwrap();
    assert_eq!(ab.ab.rows.len(), 3);
    let m: Manifest = read_json(&pb.paths.manifest(), "x").unwrap();
    assert_eq!(m.commands.len(), Command::ALL.len());
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = Pipeline::new(tiny(), dir.path()).unwrap();
    for c in [Command::Synth, Command::BuildIu, Command::Featurize] {
        p.run(c).unwrap();
    }
    let vocab = p.load_vocab().unwrap();
    let (train_s, _) = p.load_samples().unwrap();
    for kind in ModelKind::ALL {
        let mut net = Network::new(kind, &p.cfg.model.network, &vocab, 4).unwrap();
        train(&mut net, &train_s[..500], &TrainConfig::default()).unwrap();
        let path = p.paths.checkpoint(kind);
        checkpoint::save(&path, &net, p.digest()).unwrap();
        let back = p.load_model(kind, &vocab).unwrap();
        assert_eq!(back.kind, kind);
        for s in &train_s[..200] {
            let u = UserInput {
                user_id: s.user_id,
                item_seq: &s.item_seq,
                iu_seq: &s.iu_seq,
            };
            let e1 = net.encode_user(u).unwrap();
            let e2 = back.encode_user(u).unwrap();
            let a = net.logit(&e1, &s.target_input()).unwrap();
            let b = back.logit(&e2, &s.target_input()).unwrap();
            assert!((a - b).abs() <= 1e-5 * a.abs().max(1.0), "{a} vs {b}");
        }
        // A foreign digest only warns.
        checkpoint::load(&path, &p.cfg.model.network, &vocab, "other").unwrap();
    }
}

#[test]
fn checkpoint_bytes_are_validated() {
    let vocab = crate::features::FeatureVocab {
        users: 3,
        items: 5,
        categories: 2,
        brands: 2,
        ius: 2,
        iu_types: 4,
        stats: [3; 5],
        cross: [3, 3],
        item_seq_max: 4,
        iu_seq_max: 2,
        inner_max: 2,
    };
    let net = Network::new(ModelKind::Din, &NetworkConfig::default(), &vocab, 1).unwrap();
    let mut bytes = Vec::new();
    write_checkpoint(&mut bytes, net.kind, "abc", &net.params).unwrap();
    assert_eq!(&bytes[..4], MAGIC);
    let (h, arrays) = read_checkpoint(&bytes).unwrap();
    assert_eq!(h.kind, ModelKind::Din);
    assert_eq!(h.config_digest, "abc");
    assert_eq!(arrays.len(), net.params.len());
    assert_eq!(arrays[0].name, "emb.user");
    assert_eq!(arrays[0].dims, vec![3, 8]);

    assert!(read_checkpoint(&bytes[..bytes.len() - 1]).is_err());
    let mut extra = bytes.clone();
    extra.push(0);
    assert!(read_checkpoint(&extra).is_err());
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(read_checkpoint(&bad).is_err());
    let mut version = bytes;
    version[4] = 9;
    assert!(read_checkpoint(&version).is_err());
}
