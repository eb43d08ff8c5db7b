mod common;

use lumiprobe::image::Image;
use lumiprobe::loss::TrainProgress;
use lumiprobe::model::checkpoint;
use lumiprobe::model::*;
use lumiprobe::rng::derive_rng;
use lumiprobe::Error;
use rand::Rng;

fn small() -> NetworkConfig {
    NetworkConfig::reduced(0.125, (64, 48), 5)
}

fn shape_of(net: &Network, name: &str) -> (usize, usize, usize) {
    let (_, s) = net.layer_shapes().into_iter().find(|(n, _)| n == name).unwrap();
    (s.c, s.h, s.w)
}

#[test]
fn full_scale_shapes() {
    let net = Network::new(NetworkConfig::default()).unwrap();
    assert_eq!(shape_of(&net, "enc.conv1"), (64, 96, 128));
    assert_eq!(shape_of(&net, "enc.conv2"), (96, 48, 64));
    assert_eq!(shape_of(&net, "enc.res1"), (96, 48, 64));
    assert_eq!(shape_of(&net, "enc.res2"), (128, 24, 32));
    assert_eq!(shape_of(&net, "enc.res3"), (192, 12, 16));
    assert_eq!(shape_of(&net, "enc.res4"), (256, 6, 8));
    assert_eq!(shape_of(&net, "enc.fc"), (1024, 1, 1));
    assert_eq!(shape_of(&net, "mask.fc"), (256 * 4 * 8, 1, 1));
    assert_eq!(shape_of(&net, "mask.deconv5"), (32, 128, 256));
    assert_eq!(shape_of(&net, "mask.conv5"), (1, 128, 256));
    assert_eq!(shape_of(&net, "rgb.fc"), (192 * 4 * 8, 1, 1));
    assert_eq!(shape_of(&net, "rgb.deconv5"), (24, 128, 256));
    assert_eq!(shape_of(&net, "rgb.conv5"), (3, 128, 256));
}

#[test]
fn reduced_shapes_follow_ceil_channels() {
    let net = Network::new(small()).unwrap();
    assert_eq!(shape_of(&net, "enc.conv1"), (8, 24, 32));
    assert_eq!(shape_of(&net, "enc.conv2"), (12, 12, 16));
    assert_eq!(shape_of(&net, "enc.res2"), (16, 6, 8));
    assert_eq!(shape_of(&net, "enc.res3"), (24, 3, 4));
    assert_eq!(shape_of(&net, "enc.res4"), (32, 2, 2));
    assert_eq!(shape_of(&net, "enc.fc"), (128, 1, 1));
    assert_eq!(shape_of(&net, "mask.deconv1"), (32, 2, 4));
    assert_eq!(shape_of(&net, "mask.deconv5"), (4, 32, 64));
    assert_eq!(shape_of(&net, "rgb.deconv5"), (3, 32, 64));
    let p = net.predict(&Image::filled(64, 48, 3, 0.5)).unwrap();
    assert_eq!((p.aux.dims(), p.aux.channels()), ((64, 32), 1));
    assert_eq!((p.rgb.dims(), p.rgb.channels()), ((64, 32), 3));
}

#[test]
fn invalid_configs_rejected() {
    let mut cfg = small();
    cfg.output = (48, 24);
    assert!(matches!(Network::new(cfg).unwrap_err(), Error::Domain(_)));
    let mut cfg = small();
    cfg.width_multiplier = 0.0;
    assert!(matches!(Network::new(cfg).unwrap_err(), Error::Domain(_)));
    let mut cfg = small();
    cfg.use_batchnorm = true;
    assert!(matches!(Network::new(cfg).unwrap_err(), Error::Unsupported(_)));
    let net = Network::new(small()).unwrap();
    assert!(matches!(net.predict(&Image::new(32, 48, 3)).unwrap_err(), Error::Domain(_)));
}

#[test]
fn same_seed_same_parameters() {
    let a = Network::new(small()).unwrap();
    let b = Network::new(small()).unwrap();
    for (p, q) in a.params().iter().zip(b.params()) {
        assert_eq!(p.value, q.value);
    }
    let c = Network::new(NetworkConfig { seed: 6, ..small() }).unwrap();
    assert_ne!(a.group_hash(ParamGroup::Encoder), c.group_hash(ParamGroup::Encoder));
}

#[test]
fn zero_parameters_give_half_and_zero() {
    let mut net = Network::new(small()).unwrap();
    for p in net.params_mut() {
        p.value.fill(0.0);
    }
    let p = net.predict(&Image::filled(64, 48, 3, 0.7)).unwrap();
    assert!(p.aux.data().iter().all(|&v| v == 0.5));
    assert!(p.rgb.data().iter().all(|&v| v == 0.0));
}

#[test]
fn output_ranges_hold() {
    let net = Network::new(small()).unwrap();
    let mut rng = derive_rng(9, 0);
    for _ in 0..100 {
        let scale = rng.random_range(0.1..20.0);
        let x = Image::from_fn(64, 48, 3, |_, _, _| rng.random_range(-1.0..1.0) * scale);
        let p = net.predict(&x).unwrap();
        assert!(p.aux.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(p.rgb.data().iter().all(|&v| (-1.0..=1.0).contains(&v)));
    }
}

#[test]
fn fixed_batch_overfits() {
    let pairs = common::ldr_pairs(1, 4, 21);
    let mut net = Network::new(small()).unwrap();
    let mut adam = AdamState::new(&net, AdamConfig { lr: 1e-3, ..AdamConfig::default() });
    let inputs: Vec<Image> = pairs.iter().map(|p| p.input.clone()).collect();
    let targets: Vec<(&Image, &Image)> = pairs.iter().map(|p| (&p.target_rgb, &p.target_aux)).collect();
    // Fixed progress so the objective itself does not move.
    let fixed = TrainProgress::new(0.0);
    let mut losses = Vec::new();
    for _ in 0..51 {
        let mut prog = fixed;
        let r = train_step(&mut net, &inputs, &targets, &mut adam, &mut prog, LossMode::Ldr, 0.0).unwrap();
        losses.push(r.loss);
    }
    let decreasing = losses.windows(2).filter(|w| w[1] < w[0]).count();
    assert!(decreasing >= 45, "only {decreasing}/50 steps decreased: {losses:?}");
}

#[test]
fn zero_learning_rate_keeps_parameters() {
    let pairs = common::ldr_pairs(1, 2, 22);
    let mut net = Network::new(small()).unwrap();
    let before: Vec<Vec<f64>> = net.params().iter().map(|p| p.value.clone()).collect();
    let cfg = TrainConfig {
        steps: 3,
        batch_size: 2,
        adam: AdamConfig { lr: 0.0, ..AdamConfig::default() },
        ..TrainConfig::default()
    };
    let mut adam = AdamState::new(&net, cfg.adam);
    let mut prog = TrainProgress::default();
    train(&mut net, &pairs, &cfg, &mut adam, &mut prog, LossMode::Ldr, |_, _| {}).unwrap();
    for (p, b) in net.params().iter().zip(&before) {
        assert_eq!(&p.value, b);
    }
    assert!((prog.e - 3.0).abs() < 1e-12);
}

#[test]
fn training_is_deterministic() {
    let pairs = common::ldr_pairs(2, 2, 23);
    let cfg = TrainConfig {
        steps: 6,
        batch_size: 2,
        seed: 4,
        ..TrainConfig::default()
    };
    let run = || {
        let mut net = Network::new(small()).unwrap();
        let mut adam = AdamState::new(&net, cfg.adam);
        let mut prog = TrainProgress::default();
        let log = train(&mut net, &pairs, &cfg, &mut adam, &mut prog, LossMode::Ldr, |_, _| {}).unwrap();
        (log.losses, net.group_hash(ParamGroup::RgbHead))
    };
    assert_eq!(run(), run());
}

#[test]
fn finetune_contract() {
    let ldr = common::ldr_pairs(1, 2, 24);
    let hdr = common::hdr_pairs(1, 2, 24);
    let mut net = Network::new(small()).unwrap();
    let cfg = TrainConfig {
        steps: 4,
        batch_size: 2,
        ..TrainConfig::default()
    };
    let mut adam = AdamState::new(&net, cfg.adam);
    let mut prog = TrainProgress::default();
    train(&mut net, &ldr, &cfg, &mut adam, &mut prog, LossMode::Ldr, |_, _| {}).unwrap();
    let e_ldr = prog.e;
    let (w, _) = net.final_mask_params();
    let final_before = net.params()[w].value.clone();
    let mut probe = net.clone();
    probe.reinit_final_mask(cfg.seed ^ 0x68_6472);
    assert_ne!(probe.params()[w].value, final_before);
    let ft = TrainConfig { steps: 100, ..cfg };
    let report = finetune_hdr(&mut net, &hdr, &ft, &mut prog, |_, _| {}).unwrap();
    assert_eq!(report.encoder_hash_before, report.encoder_hash_after);
    assert_eq!(report.e_start, e_ldr);
    assert!(report.e_end > e_ldr);
    assert_eq!(net.config().aux_head, AuxHead::Intensity);
    assert_ne!(net.params()[w].value, final_before);
}

#[test]
fn checkpoint_round_trip() {
    let pairs = common::ldr_pairs(1, 2, 25);
    let mut net = Network::new(small()).unwrap();
    let cfg = TrainConfig {
        steps: 2,
        batch_size: 2,
        ..TrainConfig::default()
    };
    let mut adam = AdamState::new(&net, cfg.adam);
    let mut prog = TrainProgress::default();
    train(&mut net, &pairs, &cfg, &mut adam, &mut prog, LossMode::Ldr, |_, _| {}).unwrap();
    net.set_aux_head(AuxHead::Intensity);
    net.set_frozen(&[ParamGroup::Encoder]);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("net.ckpt");
    checkpoint::save(&path, &net, &prog, Some(&adam)).unwrap();
    let back = checkpoint::load(&path).unwrap();
    assert_eq!(back.progress, prog);
    assert_eq!(back.network.config(), net.config());
    assert_eq!(back.network.frozen(), net.frozen());
    for (p, q) in back.network.params().iter().zip(net.params()) {
        assert_eq!(p.name, q.name);
        for (a, b) in p.value.iter().zip(&q.value) {
            assert_eq!(*a, *b as f32 as f64);
        }
    }
    let a = back.adam.unwrap();
    assert_eq!(a.t, adam.t);
    assert_eq!(a.m.len(), adam.m.len());

    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(&bytes[..8], b"LUMICKPT");
    assert!(matches!(checkpoint::decode(&bytes[..bytes.len() - 1]).unwrap_err(), Error::Parse { .. }));
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(matches!(checkpoint::decode(&bad).unwrap_err(), Error::Parse { .. }));
}
