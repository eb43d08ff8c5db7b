//! Plain in-memory raster types shared by every module.

use crate::error::{Error, Result};

/// Row-major, channel-interleaved floating point raster.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize) -> Self {
        Self::filled(width, height, channels, 0.0)
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: f64) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![value; width * height * channels],
        }
    }

    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height * channels {
            return Err(Error::dims(format!(
                "buffer of {} values does not match {width}x{height}x{channels}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            data,
        })
    }

    /// Builds an image by evaluating `f(x, y, c)` at every sample.
    pub fn from_fn(
        width: usize,
        height: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(width * height * channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    data.push(f(x, y, c));
                }
            }
        }
        Self {
            width,
            height,
            channels,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        (y * self.width + x) * self.channels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> f64 {
        self.data[self.index(x, y) + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: f64) {
        let i = self.index(x, y) + c;
        self.data[i] = v;
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> &[f64] {
        let i = self.index(x, y);
        &self.data[i..i + self.channels]
    }

    #[inline]
    pub fn pixel_mut(&mut self, x: usize, y: usize) -> &mut [f64] {
        let i = self.index(x, y);
        let c = self.channels;
        &mut self.data[i..i + c]
    }

    /// Rec. 601 luma for RGB input; single-channel images are copied.
    pub fn to_gray(&self) -> Image {
        if self.channels == 1 {
            return self.clone();
        }
        let data = self
            .data
            .chunks_exact(self.channels)
            .map(|p| {
                if p.len() >= 3 {
                    0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]
                } else {
                    p.iter().sum::<f64>() / p.len() as f64
                }
            })
            .collect();
        Image {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }

    /// Broadcasts a single-channel image to `channels` channels.
    pub fn broadcast(&self, channels: usize) -> Image {
        assert_eq!(self.channels, 1, "broadcast expects a single-channel image");
        let mut data = Vec::with_capacity(self.data.len() * channels);
        for &v in &self.data {
            data.extend(std::iter::repeat_n(v, channels));
        }
        Image {
            width: self.width,
            height: self.height,
            channels,
            data,
        }
    }

    pub fn channel(&self, c: usize) -> Image {
        let data = self
            .data
            .chunks_exact(self.channels)
            .map(|p| p[c])
            .collect();
        Image {
            width: self.width,
            height: self.height,
            channels: 1,
            data,
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().sum::<f64>() / self.data.len() as f64
    }

    pub fn channel_means(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.channels];
        for p in self.data.chunks_exact(self.channels) {
            for (s, v) in sums.iter_mut().zip(p) {
                *s += v;
            }
        }
        let n = (self.width * self.height).max(1) as f64;
        sums.into_iter().map(|s| s / n).collect()
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Channel-planar copy (C×H×W), the layout used by the network.
    pub fn to_planar(&self) -> Vec<f64> {
        let n = self.width * self.height;
        let mut out = vec![0.0; n * self.channels];
        for (i, p) in self.data.chunks_exact(self.channels).enumerate() {
            for (c, v) in p.iter().enumerate() {
                out[c * n + i] = *v;
            }
        }
        out
    }

    pub fn from_planar(width: usize, height: usize, channels: usize, planar: &[f64]) -> Result<Image> {
        let n = width * height;
        if planar.len() != n * channels {
            return Err(Error::dims(format!(
                "planar buffer of {} values does not match {width}x{height}x{channels}",
                planar.len()
            )));
        }
        let mut data = vec![0.0; n * channels];
        for c in 0..channels {
            for i in 0..n {
                data[i * channels + c] = planar[c * n + i];
            }
        }
        Ok(Image {
            width,
            height,
            channels,
            data,
        })
    }
}

/// Boolean per-pixel mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::dims(format!(
                "mask buffer of {} values does not match {width}x{height}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    /// Thresholds a single-channel map with `value >= threshold`.
    pub fn threshold(map: &Image, threshold: f64) -> BinaryMask {
        assert_eq!(map.channels(), 1, "threshold expects a single-channel map");
        BinaryMask {
            width: map.width(),
            height: map.height(),
            data: map.data().iter().map(|&v| v >= threshold).collect(),
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    #[inline]
    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }

    pub fn to_image(&self) -> Image {
        Image::from_vec(
            self.width,
            self.height,
            1,
            self.data.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect(),
        )
        .expect("mask dims are consistent")
    }

    /// Intersection over union; two empty masks score 1.
    pub fn iou(&self, other: &BinaryMask) -> f64 {
        assert_eq!(self.dims(), other.dims(), "iou of masks with different dims");
        let mut inter = 0usize;
        let mut union = 0usize;
        for (&a, &b) in self.data.iter().zip(&other.data) {
            inter += (a && b) as usize;
            union += (a || b) as usize;
        }
        if union == 0 {
            1.0
        } else {
            inter as f64 / union as f64
        }
    }
}

/// Connected components of a mask. Label 0 is background; components are
/// numbered from 1 in raster order of their first pixel.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Components {
    pub labels: Vec<u32>,
    pub count: usize,
}

impl BinaryMask {
    /// Labels connected components with 4- or 8-connectivity, optionally
    /// wrapping across the left/right image edge.
    pub fn components(&self, eight: bool, wrap: bool) -> Components {
        let (w, h) = (self.width, self.height);
        let mut labels = vec![0u32; w * h];
        let mut count = 0usize;
        let mut stack = Vec::new();
        let offsets: &[(isize, isize)] = if eight {
            &[(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)]
        } else {
            &[(0, -1), (-1, 0), (1, 0), (0, 1)]
        };
        for start in 0..w * h {
            if !self.data[start] || labels[start] != 0 {
                continue;
            }
            count += 1;
            let id = count as u32;
            labels[start] = id;
            stack.push(start);
            while let Some(i) = stack.pop() {
                let (x, y) = ((i % w) as isize, (i / w) as isize);
                for &(dx, dy) in offsets {
                    let ny = y + dy;
                    if ny < 0 || ny >= h as isize {
                        continue;
                    }
                    let mut nx = x + dx;
                    if nx < 0 || nx >= w as isize {
                        if !wrap {
                            continue;
                        }
                        nx = nx.rem_euclid(w as isize);
                    }
                    let j = ny as usize * w + nx as usize;
                    if self.data[j] && labels[j] == 0 {
                        labels[j] = id;
                        stack.push(j);
                    }
                }
            }
        }
        Components { labels, count }
    }
}

/// Linearly interpolated percentile, `q` in `[0, 1]`. Sorts `values`.
pub fn percentile(values: &mut [f64], q: f64) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_unstable_by(|a, b| a.total_cmp(b));
    let pos = q.clamp(0.0, 1.0) * (values.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    values[lo] + (values[hi] - values[lo]) * (pos - lo as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planar_round_trip() {
        let img = Image::from_fn(3, 2, 3, |x, y, c| (x * 100 + y * 10 + c) as f64);
        let planar = img.to_planar();
        assert_eq!(planar[0], 0.0);
        assert_eq!(planar[6], 1.0);
        assert_eq!(Image::from_planar(3, 2, 3, &planar).unwrap(), img);
    }

    #[test]
    fn iou_of_empty_masks_is_one() {
        let a = BinaryMask::new(4, 2);
        assert_eq!(a.iou(&a.clone()), 1.0);
        let mut b = a.clone();
        b.set(1, 1, true);
        assert_eq!(a.iou(&b), 0.0);
    }

    #[test]
    fn components_wrap_the_seam() {
        let mut m = BinaryMask::new(8, 4);
        m.set(0, 1, true);
        m.set(7, 2, true);
        assert_eq!(m.components(true, true).count, 1);
        assert_eq!(m.components(true, false).count, 2);
        assert_eq!(m.components(false, true).count, 2);
    }

    #[test]
    fn percentile_interpolates() {
        let mut v = vec![4.0, 1.0, 3.0, 2.0];
        assert_eq!(percentile(&mut v, 0.5), 2.5);
        assert_eq!(percentile(&mut v, 1.0), 4.0);
    }

    #[test]
    fn buffer_size_checked() {
        assert!(Image::from_vec(2, 2, 3, vec![0.0; 11]).is_err());
        assert!(BinaryMask::from_vec(2, 2, vec![false; 3]).is_err());
    }
}
