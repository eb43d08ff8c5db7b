//! Layer kernels on planar `[c, h, w]` buffers with their exact
//! reverse-mode derivatives.

use serde::{Deserialize, Serialize};

/// Planar feature-map shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Shape {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub fn new(c: usize, h: usize, w: usize) -> Self {
        Self { c, h, w }
    }

    pub fn len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Elu,
    Sigmoid,
    Tanh,
    Identity,
}

#[inline]
pub fn elu(x: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Elu => elu(x),
            Activation::Sigmoid => crate::detector::sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the input `x` and output `y`.
    #[inline]
    pub fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Elu => {
                if x >= 0.0 {
                    1.0
                } else {
                    y + 1.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Tanh => 1.0 - y * y,
            Activation::Identity => 1.0,
        }
    }

    pub fn forward(self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|&v| self.apply(v)).collect()
    }

    pub fn backward(self, x: &[f64], gy: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(gy)
            .map(|(&v, &g)| g * self.derivative(v, self.apply(v)))
            .collect()
    }
}

/// Convolution geometry. Weights are `[cout, cin, k, k]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvGeom {
    pub input: Shape,
    pub output: Shape,
    pub k: usize,
    pub stride: usize,
    pub pad_top: usize,
    pub pad_left: usize,
}

impl ConvGeom {
    /// "Same" convolution: output size `ceil(in / stride)`, padding split
    /// with the smaller half on top/left.
    pub fn same(input: Shape, cout: usize, k: usize, stride: usize) -> Self {
        let oh = input.h.div_ceil(stride);
        let ow = input.w.div_ceil(stride);
        let ph = ((oh - 1) * stride + k).saturating_sub(input.h);
        let pw = ((ow - 1) * stride + k).saturating_sub(input.w);
        Self {
            input,
            output: Shape::new(cout, oh, ow),
            k,
            stride,
            pad_top: ph / 2,
            pad_left: pw / 2,
        }
    }

    pub fn weight_len(&self) -> usize {
        self.output.c * self.input.c * self.k * self.k
    }

    pub fn fan_in(&self) -> usize {
        self.input.c * self.k * self.k
    }

    /// Output columns `ox` for which `ox·s + kx − pad` is inside the input.
    fn valid_range(n_out: usize, n_in: usize, s: usize, kk: usize, pad: usize) -> (usize, usize) {
        // ox·s + kk >= pad  and  ox·s + kk - pad < n_in
        let lo = if kk >= pad { 0 } else { (pad - kk).div_ceil(s) };
        let hi_excl = if n_in + pad > kk { (n_in + pad - kk).div_ceil(s) } else { 0 };
        (lo, hi_excl.min(n_out))
    }
}

pub fn conv2d_forward(x: &[f64], w: &[f64], b: &[f64], g: &ConvGeom) -> Vec<f64> {
    let (i, o, k, s) = (g.input, g.output, g.k, g.stride);
    let mut y = vec![0.0; o.len()];
    for oc in 0..o.c {
        let plane = &mut y[oc * o.h * o.w..(oc + 1) * o.h * o.w];
        plane.fill(b[oc]);
        for ic in 0..i.c {
            let xin = &x[ic * i.h * i.w..(ic + 1) * i.h * i.w];
            for ky in 0..k {
                let (y0, y1) = ConvGeom::valid_range(o.h, i.h, s, ky, g.pad_top);
                for kx in 0..k {
                    let wv = w[((oc * i.c + ic) * k + ky) * k + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    let (x0, x1) = ConvGeom::valid_range(o.w, i.w, s, kx, g.pad_left);
                    for oy in y0..y1 {
                        let iy = oy * s + ky - g.pad_top;
                        let row = &xin[iy * i.w..(iy + 1) * i.w];
                        let out = &mut plane[oy * o.w..(oy + 1) * o.w];
                        for ox in x0..x1 {
                            out[ox] += wv * row[ox * s + kx - g.pad_left];
                        }
                    }
                }
            }
        }
    }
    y
}

/// Accumulates weight and bias gradients; returns the input gradient
/// when `need_input` is set.
pub fn conv2d_backward(
    x: &[f64],
    w: &[f64],
    g: &ConvGeom,
    gy: &[f64],
    gw: Option<(&mut [f64], &mut [f64])>,
    need_input: bool,
) -> Option<Vec<f64>> {
    let (i, o, k, s) = (g.input, g.output, g.k, g.stride);
    if let Some((gw, gb)) = gw {
        for oc in 0..o.c {
            let gplane = &gy[oc * o.h * o.w..(oc + 1) * o.h * o.w];
            gb[oc] += gplane.iter().sum::<f64>();
            for ic in 0..i.c {
                let xin = &x[ic * i.h * i.w..(ic + 1) * i.h * i.w];
                for ky in 0..k {
                    let (y0, y1) = ConvGeom::valid_range(o.h, i.h, s, ky, g.pad_top);
                    for kx in 0..k {
                        let (x0, x1) = ConvGeom::valid_range(o.w, i.w, s, kx, g.pad_left);
                        let mut acc = 0.0;
                        for oy in y0..y1 {
                            let iy = oy * s + ky - g.pad_top;
                            let row = &xin[iy * i.w..(iy + 1) * i.w];
                            let grow = &gplane[oy * o.w..(oy + 1) * o.w];
                            for ox in x0..x1 {
                                acc += grow[ox] * row[ox * s + kx - g.pad_left];
                            }
                        }
                        gw[((oc * i.c + ic) * k + ky) * k + kx] += acc;
                    }
                }
            }
        }
    }
    if !need_input {
        return None;
    }
    let mut gx = vec![0.0; i.len()];
    for oc in 0..o.c {
        let gplane = &gy[oc * o.h * o.w..(oc + 1) * o.h * o.w];
        for ic in 0..i.c {
            let gin = &mut gx[ic * i.h * i.w..(ic + 1) * i.h * i.w];
            for ky in 0..k {
                let (y0, y1) = ConvGeom::valid_range(o.h, i.h, s, ky, g.pad_top);
                for kx in 0..k {
                    let wv = w[((oc * i.c + ic) * k + ky) * k + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    let (x0, x1) = ConvGeom::valid_range(o.w, i.w, s, kx, g.pad_left);
                    for oy in y0..y1 {
                        let iy = oy * s + ky - g.pad_top;
                        let grow = &gplane[oy * o.w..(oy + 1) * o.w];
                        let row = &mut gin[iy * i.w..(iy + 1) * i.w];
                        for ox in x0..x1 {
                            row[ox * s + kx - g.pad_left] += wv * grow[ox];
                        }
                    }
                }
            }
        }
    }
    Some(gx)
}

/// Transposed-convolution geometry. Weights are `[cin, cout, k, k]`;
/// output size is `(in − 1)·s + k − 2·pad`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeconvGeom {
    pub input: Shape,
    pub output: Shape,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

impl DeconvGeom {
    pub fn new(input: Shape, cout: usize, k: usize, stride: usize, pad: usize) -> Self {
        let oh = (input.h - 1) * stride + k - 2 * pad;
        let ow = (input.w - 1) * stride + k - 2 * pad;
        Self {
            input,
            output: Shape::new(cout, oh, ow),
            k,
            stride,
            pad,
        }
    }

    /// `k = 4, stride 2, pad 1`: exact doubling.
    pub fn doubling(input: Shape, cout: usize) -> Self {
        Self::new(input, cout, 4, 2, 1)
    }

    pub fn weight_len(&self) -> usize {
        self.input.c * self.output.c * self.k * self.k
    }

    pub fn fan_in(&self) -> usize {
        (self.input.c * self.k * self.k / (self.stride * self.stride)).max(1)
    }
}

pub fn deconv2d_forward(x: &[f64], w: &[f64], b: &[f64], g: &DeconvGeom) -> Vec<f64> {
    let (i, o, k, s) = (g.input, g.output, g.k, g.stride);
    let mut y = vec![0.0; o.len()];
    for oc in 0..o.c {
        y[oc * o.h * o.w..(oc + 1) * o.h * o.w].fill(b[oc]);
    }
    for ic in 0..i.c {
        let xin = &x[ic * i.h * i.w..(ic + 1) * i.h * i.w];
        for oc in 0..o.c {
            let plane = &mut y[oc * o.h * o.w..(oc + 1) * o.h * o.w];
            for ky in 0..k {
                let (y0, y1) = ConvGeom::valid_range(i.h, o.h, s, ky, g.pad);
                for kx in 0..k {
                    let wv = w[((ic * o.c + oc) * k + ky) * k + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    let (x0, x1) = ConvGeom::valid_range(i.w, o.w, s, kx, g.pad);
                    for iy in y0..y1 {
                        let oy = iy * s + ky - g.pad;
                        let row = &xin[iy * i.w..(iy + 1) * i.w];
                        let out = &mut plane[oy * o.w..(oy + 1) * o.w];
                        for ix in x0..x1 {
                            out[ix * s + kx - g.pad] += wv * row[ix];
                        }
                    }
                }
            }
        }
    }
    y
}

pub fn deconv2d_backward(
    x: &[f64],
    w: &[f64],
    g: &DeconvGeom,
    gy: &[f64],
    gw: Option<(&mut [f64], &mut [f64])>,
    need_input: bool,
) -> Option<Vec<f64>> {
    let (i, o, k, s) = (g.input, g.output, g.k, g.stride);
    if let Some((gw, gb)) = gw {
        for oc in 0..o.c {
            gb[oc] += gy[oc * o.h * o.w..(oc + 1) * o.h * o.w].iter().sum::<f64>();
        }
        for ic in 0..i.c {
            let xin = &x[ic * i.h * i.w..(ic + 1) * i.h * i.w];
            for oc in 0..o.c {
                let gplane = &gy[oc * o.h * o.w..(oc + 1) * o.h * o.w];
                for ky in 0..k {
                    let (y0, y1) = ConvGeom::valid_range(i.h, o.h, s, ky, g.pad);
                    for kx in 0..k {
                        let (x0, x1) = ConvGeom::valid_range(i.w, o.w, s, kx, g.pad);
                        let mut acc = 0.0;
                        for iy in y0..y1 {
                            let oy = iy * s + ky - g.pad;
                            let row = &xin[iy * i.w..(iy + 1) * i.w];
                            let grow = &gplane[oy * o.w..(oy + 1) * o.w];
                            for ix in x0..x1 {
                                acc += row[ix] * grow[ix * s + kx - g.pad];
                            }
                        }
                        gw[((ic * o.c + oc) * k + ky) * k + kx] += acc;
                    }
                }
            }
        }
    }
    if !need_input {
        return None;
    }
    let mut gx = vec![0.0; i.len()];
    for ic in 0..i.c {
        let gin = &mut gx[ic * i.h * i.w..(ic + 1) * i.h * i.w];
        for oc in 0..o.c {
            let gplane = &gy[oc * o.h * o.w..(oc + 1) * o.h * o.w];
            for ky in 0..k {
                let (y0, y1) = ConvGeom::valid_range(i.h, o.h, s, ky, g.pad);
                for kx in 0..k {
                    let wv = w[((ic * o.c + oc) * k + ky) * k + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    let (x0, x1) = ConvGeom::valid_range(i.w, o.w, s, kx, g.pad);
                    for iy in y0..y1 {
                        let oy = iy * s + ky - g.pad;
                        let grow = &gplane[oy * o.w..(oy + 1) * o.w];
                        let row = &mut gin[iy * i.w..(iy + 1) * i.w];
                        for ix in x0..x1 {
                            row[ix] += wv * grow[ix * s + kx - g.pad];
                        }
                    }
                }
            }
        }
    }
    Some(gx)
}

/// `y = W x + b` with `W` stored `[out, in]`.
pub fn linear_forward(x: &[f64], w: &[f64], b: &[f64]) -> Vec<f64> {
    let n_in = x.len();
    b.iter()
        .enumerate()
        .map(|(o, &bo)| bo + w[o * n_in..(o + 1) * n_in].iter().zip(x).map(|(a, c)| a * c).sum::<f64>())
        .collect()
}

pub fn linear_backward(
    x: &[f64],
    w: &[f64],
    gy: &[f64],
    gw: Option<(&mut [f64], &mut [f64])>,
    need_input: bool,
) -> Option<Vec<f64>> {
    let n_in = x.len();
    if let Some((gw, gb)) = gw {
        for (o, &g) in gy.iter().enumerate() {
            gb[o] += g;
            if g != 0.0 {
                for (d, &xi) in gw[o * n_in..(o + 1) * n_in].iter_mut().zip(x) {
                    *d += g * xi;
                }
            }
        }
    }
    if !need_input {
        return None;
    }
    let mut gx = vec![0.0; n_in];
    for (o, &g) in gy.iter().enumerate() {
        if g != 0.0 {
            for (d, &wi) in gx.iter_mut().zip(&w[o * n_in..(o + 1) * n_in]) {
                *d += g * wi;
            }
        }
    }
    Some(gx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn elu_values() {
        assert_eq!(elu(0.0), 0.0);
        assert_eq!(elu(1.0), 1.0);
        assert!((elu(-1e3) + 1.0).abs() < 1e-15);
    }

    #[test]
    fn same_conv_output_is_ceil() {
        let g = ConvGeom::same(Shape::new(3, 3, 5), 2, 4, 2);
        assert_eq!((g.output.h, g.output.w), (2, 3));
        let g = ConvGeom::same(Shape::new(3, 48, 64), 8, 9, 2);
        assert_eq!((g.output.h, g.output.w), (24, 32));
    }

    #[test]
    fn deconv_doubles() {
        let g = DeconvGeom::doubling(Shape::new(4, 3, 5), 2);
        assert_eq!((g.output.h, g.output.w), (6, 10));
    }

    #[test]
    fn identity_conv() {
        let g = ConvGeom::same(Shape::new(1, 4, 4), 1, 3, 1);
        let mut w = vec![0.0; 9];
        w[4] = 1.0;
        let x: Vec<f64> = (0..16).map(|v| v as f64).collect();
        assert_eq!(conv2d_forward(&x, &w, &[0.0], &g), x);
    }
}
