//! Finite-difference checks of every loss and layer gradient.

mod common;

use lumiprobe::image::Image;
use lumiprobe::model::{AuxHead, ParamGroup};

use common::fd::{self, SEEDS, TOL};

fn all_seeds(label: &str, f: impl Fn(u64) -> f64) {
    for seed in 0..SEEDS {
        let e = f(seed);
        assert!(e < TOL, "{label}, seed {seed}: relative error {e}");
    }
}

#[test]
fn conv_gradients() {
    all_seeds("conv", fd::conv);
}

#[test]
fn deconv_gradients() {
    all_seeds("deconv", fd::deconv);
}

#[test]
fn linear_gradients() {
    all_seeds("linear", fd::linear);
}

#[test]
fn activation_gradients() {
    all_seeds("activations", fd::activations);
}

#[test]
fn network_gradients() {
    for seed in 0..SEEDS {
        let (e, name) = fd::network(seed);
        assert!(e < TOL, "seed {seed}: {name} relative error {e}");
    }
}

#[test]
fn l2_and_cos_loss_gradients() {
    all_seeds("l2/cos", fd::base_losses);
}

#[test]
fn combined_loss_gradients() {
    all_seeds("ldr/hdr", fd::combined_losses);
}

#[test]
fn zero_upstream_gives_zero_gradients() {
    let mut net = fd::toy_net(1, AuxHead::Mask);
    let x = Image::filled(8, 8, 3, 0.3);
    net.forward(std::slice::from_ref(&x)).unwrap();
    net.backward(&[(Image::new(64, 32, 1), Image::new(64, 32, 3))]).unwrap();
    assert!(net.params().iter().all(|p| p.grad.iter().all(|&g| g == 0.0)));
}

#[test]
fn frozen_encoder_reports_zero_gradient() {
    let mut net = fd::toy_net(2, AuxHead::Mask);
    net.set_frozen(&[ParamGroup::Encoder]);
    let x = Image::filled(8, 8, 3, 0.3);
    net.forward(std::slice::from_ref(&x)).unwrap();
    net.backward(&[(Image::filled(64, 32, 1, 1.0), Image::filled(64, 32, 3, 1.0))]).unwrap();
    for p in net.params().iter().filter(|p| p.group == ParamGroup::Encoder) {
        assert!(p.grad.iter().all(|&g| g == 0.0), "{} has gradient while frozen", p.name);
    }
    assert!(net.params().iter().any(|p| p.group != ParamGroup::Encoder && p.grad.iter().any(|&g| g != 0.0)));
}

#[test]
fn backward_without_forward_is_state_error() {
    let mut net = fd::toy_net(3, AuxHead::Mask);
    let err = net.backward(&[(Image::new(64, 32, 1), Image::new(64, 32, 3))]).unwrap_err();
    assert!(matches!(err, lumiprobe::Error::State(_)));
}
