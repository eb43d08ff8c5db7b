//! Five-point central-difference gradient checks. Every routine returns
//! the worst relative error it saw.

use lumiprobe::geometry::solid_angles;
use lumiprobe::image::Image;
use lumiprobe::loss::{cos_loss, l2_loss, loss_hdr, loss_ldr, TrainProgress};
use lumiprobe::model::layers::*;
use lumiprobe::model::{AuxHead, Network, NetworkConfig};
use lumiprobe::rng::derive_rng;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub const SEEDS: u64 = 20;
/// Step sizes. The larger one can straddle an ELU kink, the smaller one
/// loses digits to cancellation; a coordinate passes if either agrees.
pub const STEPS: [f64; 2] = [1e-4, 2e-5];
pub const TOL: f64 = 1e-5;

/// Relative error with a small absolute floor so entries that are zero
/// analytically do not divide by round-off.
pub fn rel_err(a: f64, n: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(1e-4)
}

pub fn randn(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0) * scale).collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Compares `analytic` with numeric derivatives of `f` at `x` on at most
/// `samples` coordinates.
pub fn check(x: &mut [f64], analytic: &[f64], samples: usize, rng: &mut ChaCha8Rng, f: &mut dyn FnMut(&[f64]) -> f64) -> f64 {
    assert_eq!(x.len(), analytic.len(), "gradient length");
    let idx: Vec<usize> = if x.len() <= samples {
        (0..x.len()).collect()
    } else {
        (0..samples).map(|_| rng.random_range(0..x.len())).collect()
    };
    let mut worst: f64 = 0.0;
    for i in idx {
        let orig = x[i];
        let mut at = |d: f64| {
            x[i] = orig + d;
            f(x)
        };
        let mut best = f64::INFINITY;
        for h in STEPS {
            let (f2, f1, m1, m2) = (at(2.0 * h), at(h), at(-h), at(-2.0 * h));
            let num = (8.0 * (f1 - m1) - (f2 - m2)) / (12.0 * h);
            best = best.min(rel_err(analytic[i], num));
            if best < TOL {
                break;
            }
        }
        x[i] = orig;
        worst = worst.max(best);
    }
    worst
}

fn conv_case(seed: u64, input: Shape, cout: usize, k: usize, s: usize) -> f64 {
    let mut rng = derive_rng(seed, 1);
    let g = ConvGeom::same(input, cout, k, s);
    let mut x = randn(&mut rng, input.len(), 1.0);
    let mut w = randn(&mut rng, g.weight_len(), 0.5);
    let mut b = randn(&mut rng, cout, 0.5);
    let r = randn(&mut rng, g.output.len(), 1.0);
    let mut gw = vec![0.0; w.len()];
    let mut gb = vec![0.0; b.len()];
    let gx = conv2d_backward(&x, &w, &g, &r, Some((&mut gw, &mut gb)), true).unwrap();
    let (w0, b0, x0) = (w.clone(), b.clone(), x.clone());
    let ex = check(&mut x, &gx, 40, &mut rng, &mut |xv| dot(&r, &conv2d_forward(xv, &w0, &b0, &g)));
    let ew = check(&mut w, &gw, 40, &mut rng, &mut |wv| dot(&r, &conv2d_forward(&x0, wv, &b0, &g)));
    let eb = check(&mut b, &gb, 40, &mut rng, &mut |bv| dot(&r, &conv2d_forward(&x0, &w0, bv, &g)));
    ex.max(ew).max(eb)
}

/// Convolutions of every geometry the network uses, on 3-channel 8×8 toys.
pub fn conv(seed: u64) -> f64 {
    let s = Shape::new(3, 8, 8);
    [
        conv_case(seed, s, 4, 3, 1),
        conv_case(seed, s, 2, 4, 2),
        conv_case(seed, s, 2, 9, 2),
        conv_case(seed, s, 2, 5, 1),
        conv_case(seed, Shape::new(3, 7, 5), 2, 1, 2),
    ]
    .into_iter()
    .fold(0.0, f64::max)
}

pub fn deconv(seed: u64) -> f64 {
    let mut rng = derive_rng(seed, 2);
    let g = DeconvGeom::doubling(Shape::new(3, 8, 8), 2);
    let mut x = randn(&mut rng, g.input.len(), 1.0);
    let mut w = randn(&mut rng, g.weight_len(), 0.5);
    let mut b = randn(&mut rng, 2, 0.5);
    let r = randn(&mut rng, g.output.len(), 1.0);
    let mut gw = vec![0.0; w.len()];
    let mut gb = vec![0.0; 2];
    let gx = deconv2d_backward(&x, &w, &g, &r, Some((&mut gw, &mut gb)), true).unwrap();
    let (w0, b0, x0) = (w.clone(), b.clone(), x.clone());
    let ex = check(&mut x, &gx, 40, &mut rng, &mut |xv| dot(&r, &deconv2d_forward(xv, &w0, &b0, &g)));
    let ew = check(&mut w, &gw, 40, &mut rng, &mut |wv| dot(&r, &deconv2d_forward(&x0, wv, &b0, &g)));
    let eb = check(&mut b, &gb, 40, &mut rng, &mut |bv| dot(&r, &deconv2d_forward(&x0, &w0, bv, &g)));
    ex.max(ew).max(eb)
}

pub fn linear(seed: u64) -> f64 {
    let mut rng = derive_rng(seed, 3);
    let (n_in, n_out) = (3 * 8 * 8, 7);
    let mut x = randn(&mut rng, n_in, 1.0);
    let mut w = randn(&mut rng, n_in * n_out, 0.2);
    let mut b = randn(&mut rng, n_out, 0.5);
    let r = randn(&mut rng, n_out, 1.0);
    let mut gw = vec![0.0; w.len()];
    let mut gb = vec![0.0; n_out];
    let gx = linear_backward(&x, &w, &r, Some((&mut gw, &mut gb)), true).unwrap();
    let (w0, b0, x0) = (w.clone(), b.clone(), x.clone());
    let ex = check(&mut x, &gx, 40, &mut rng, &mut |xv| dot(&r, &linear_forward(xv, &w0, &b0)));
    let ew = check(&mut w, &gw, 40, &mut rng, &mut |wv| dot(&r, &linear_forward(&x0, wv, &b0)));
    let eb = check(&mut b, &gb, 40, &mut rng, &mut |bv| dot(&r, &linear_forward(&x0, &w0, bv)));
    ex.max(ew).max(eb)
}

pub fn activations(seed: u64) -> f64 {
    let mut rng = derive_rng(seed, 4);
    let mut worst: f64 = 0.0;
    for act in [Activation::Elu, Activation::Sigmoid, Activation::Tanh, Activation::Identity] {
        // Keep inputs off the ELU kink at 0.
        let mut x: Vec<f64> = randn(&mut rng, 192, 3.0)
            .into_iter()
            .map(|v| if v.abs() < 1e-3 { v + 0.01 } else { v })
            .collect();
        let r = randn(&mut rng, 192, 1.0);
        let gx = act.backward(&x, &r);
        worst = worst.max(check(&mut x, &gx, 192, &mut rng, &mut |xv| dot(&r, &act.forward(xv))));
    }
    worst
}

/// Smallest valid network: 8×8 input, 64×32 output, one-channel layers
/// where the multiplier allows, random biases.
pub fn toy_net(seed: u64, head: AuxHead) -> Network {
    let cfg = NetworkConfig {
        width_multiplier: 1.0 / 64.0,
        input: (8, 8),
        output: (64, 32),
        use_batchnorm: false,
        aux_head: head,
        seed,
    };
    let mut net = Network::new(cfg).unwrap();
    net.set_aux_head(head);
    let mut rng = derive_rng(seed, 5);
    for p in net.params_mut() {
        if p.name.ends_with(".bias") {
            for v in &mut p.value {
                *v = rng.random_range(-0.1..0.1);
            }
        }
    }
    net
}

/// Whole network (residual blocks, reshape, both heads), every parameter
/// tensor sampled. Returns the worst error and its tensor name.
pub fn network(seed: u64) -> (f64, String) {
    let head = if seed % 2 == 0 { AuxHead::Mask } else { AuxHead::Intensity };
    let mut net = toy_net(seed, head);
    let mut rng = derive_rng(seed, 6);
    let x = Image::from_vec(8, 8, 3, randn(&mut rng, 192, 1.0)).unwrap();
    let ra = Image::from_vec(64, 32, 1, randn(&mut rng, 64 * 32, 1.0)).unwrap();
    let rr = Image::from_vec(64, 32, 3, randn(&mut rng, 64 * 32 * 3, 1.0)).unwrap();
    net.forward(std::slice::from_ref(&x)).unwrap();
    net.zero_grad();
    net.backward(&[(ra.clone(), rr.clone())]).unwrap();
    let mut worst = (0.0, String::new());
    for pi in 0..net.params().len() {
        let grad = net.params()[pi].grad.clone();
        let mut vals = net.params()[pi].value.clone();
        let mut probe = net.clone();
        let e = check(&mut vals, &grad, 4, &mut rng, &mut |v| {
            probe.params_mut()[pi].value.copy_from_slice(v);
            let p = probe.predict(&x).unwrap();
            dot(p.aux.data(), ra.data()) + dot(p.rgb.data(), rr.data())
        });
        if e > worst.0 {
            worst = (e, net.params()[pi].name.clone());
        }
    }
    worst
}

fn rand_map(rng: &mut ChaCha8Rng, w: usize, h: usize, c: usize, lo: f64, hi: f64) -> Image {
    Image::from_fn(w, h, c, |_, _, _| rng.random_range(lo..hi))
}

fn image_check(y: &Image, g: &Image, rng: &mut ChaCha8Rng, f: &dyn Fn(&Image) -> f64) -> f64 {
    let mut v = y.data().to_vec();
    let (w, h, c) = (y.width(), y.height(), y.channels());
    check(&mut v, g.data(), 60, rng, &mut |d| f(&Image::from_vec(w, h, c, d.to_vec()).unwrap()))
}

/// Solid-angle L2 and cosine-filtered losses on their own.
pub fn base_losses(seed: u64) -> f64 {
    let (w, h) = (32, 16);
    let s = solid_angles(w, h).unwrap();
    let mut rng = derive_rng(seed, 7);
    let y = rand_map(&mut rng, w, h, 3, -1.0, 1.0);
    let t = rand_map(&mut rng, w, h, 3, -1.0, 1.0);
    let (_, g) = l2_loss(&y, &t, &s).unwrap();
    let e1 = image_check(&y, &g, &mut rng, &|v| l2_loss(v, &t, &s).unwrap().0);
    let ym = rand_map(&mut rng, w, h, 1, 0.0, 1.0);
    let tm = rand_map(&mut rng, w, h, 1, 0.0, 1.0);
    let prog = TrainProgress::new(seed as f64 * 0.5);
    let (_, g) = cos_loss(&ym, &tm, &prog).unwrap();
    let e2 = image_check(&ym, &g, &mut rng, &|v| cos_loss(v, &tm, &prog).unwrap().0);
    e1.max(e2)
}

/// The two-head LDR and HDR objectives, both heads.
pub fn combined_losses(seed: u64) -> f64 {
    let (w, h) = (32, 16);
    let mut rng = derive_rng(seed, 8);
    let yr = rand_map(&mut rng, w, h, 3, -1.0, 1.0);
    let tr = rand_map(&mut rng, w, h, 3, -1.0, 1.0);
    let ya = rand_map(&mut rng, w, h, 1, 0.0, 1.0);
    let ta = rand_map(&mut rng, w, h, 1, 0.0, 1.0);
    let prog = TrainProgress::new(seed as f64 * 0.3);
    let out = loss_ldr(&yr, &ya, &tr, &ta, &prog).unwrap();
    let mut worst = image_check(&yr, &out.grad_rgb, &mut rng, &|v| loss_ldr(v, &ya, &tr, &ta, &prog).unwrap().total);
    worst = worst.max(image_check(&ya, &out.grad_aux, &mut rng, &|v| loss_ldr(&yr, v, &tr, &ta, &prog).unwrap().total));
    let out = loss_hdr(&yr, &ya, &tr, &ta, &prog).unwrap();
    worst = worst.max(image_check(&yr, &out.grad_rgb, &mut rng, &|v| loss_hdr(v, &ya, &tr, &ta, &prog).unwrap().total));
    worst.max(image_check(&ya, &out.grad_aux, &mut rng, &|v| loss_hdr(&yr, v, &tr, &ta, &prog).unwrap().total))
}
