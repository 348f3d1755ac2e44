use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::rasters::{BinaryMask, LabelMap, MultiChannelRaster};

/// A rasterized object: flat pixel indices on an `size x size` grid.
pub(super) struct Shape {
    size: usize,
    pixels: Vec<usize>,
}

impl Shape {
    pub fn draw_into(&self, mask: &mut BinaryMask) {
        for &p in &self.pixels {
            mask.bits[p] = true;
        }
    }

    /// True when any pixel lies within Chebyshev distance `gap` of a set pixel.
    pub fn hits(&self, mask: &BinaryMask, gap: usize) -> bool {
        let s = self.size as isize;
        let g = gap as isize;
        self.pixels.iter().any(|&p| {
            let (y, x) = ((p / self.size) as isize, (p % self.size) as isize);
            (y - g..=y + g).any(|ny| {
                (x - g..=x + g).any(|nx| ny >= 0 && nx >= 0 && ny < s && nx < s && mask.bits[(ny * s + nx) as usize])
            })
        })
    }

    pub fn inside(&self, mask: &BinaryMask) -> bool {
        self.pixels.iter().all(|&p| mask.bits[p])
    }
}

pub(super) struct Canvas {
    size: usize,
    labels: Vec<u8>,
    colors: Vec<[f32; 3]>,
}

impl Canvas {
    pub fn new(size: usize, ground: [f32; 3]) -> Self {
        Self { size, labels: vec![0; size * size], colors: vec![ground; size * size] }
    }

    pub fn paint(&mut self, shape: &Shape, class: u8, color: [f32; 3], keep: impl Fn(usize, usize) -> bool) {
        for &p in &shape.pixels {
            if keep(p / self.size, p % self.size) {
                self.labels[p] = class;
                self.colors[p] = color;
            }
        }
    }

    pub fn labels(&self) -> LabelMap {
        LabelMap { height: self.size, width: self.size, values: self.labels.clone() }
    }

    fn collect(&self, test: impl Fn(f64, f64) -> bool, y0: f64, y1: f64, x0: f64, x1: f64) -> Vec<usize> {
        let s = self.size;
        let clamp = |v: f64| (v.max(0.0) as usize).min(s - 1);
        let mut pixels = Vec::new();
        for y in clamp(y0.floor())..=clamp(y1.ceil()) {
            for x in clamp(x0.floor())..=clamp(x1.ceil()) {
                if test(y as f64, x as f64) {
                    pixels.push(y * s + x);
                }
            }
        }
        pixels
    }

    pub fn random_ellipse(&self, rng: &mut ChaCha8Rng, [rmin, rmax]: [usize; 2]) -> Shape {
        let cy = rng.random_range(0..self.size) as f64;
        let cx = rng.random_range(0..self.size) as f64;
        let a = rng.random_range(rmin..=rmax) as f64;
        let b = rng.random_range(rmin..=rmax) as f64;
        let theta: f64 = rng.random_range(0.0..std::f64::consts::PI);
        let (sn, cs) = theta.sin_cos();
        let r = a.max(b);
        let pixels = self.collect(
            |y, x| {
                let (dy, dx) = (y - cy, x - cx);
                let u = (dx * cs + dy * sn) / a;
                let v = (-dx * sn + dy * cs) / b;
                u * u + v * v <= 1.0
            },
            cy - r,
            cy + r,
            cx - r,
            cx + r,
        );
        Shape { size: self.size, pixels }
    }

    /// Axis-aligned `h x w` rectangle placed fully inside the canvas.
    pub fn random_rect(&self, rng: &mut ChaCha8Rng, h: usize, w: usize) -> Shape {
        let (h, w) = (h.min(self.size), w.min(self.size));
        let y0 = rng.random_range(0..=self.size - h);
        let x0 = rng.random_range(0..=self.size - w);
        let pixels = (y0..y0 + h).flat_map(|y| (x0..x0 + w).map(move |x| (y, x))).map(|(y, x)| y * self.size + x);
        Shape { size: self.size, pixels: pixels.collect() }
    }

    /// Two-segment polyline between points on distinct borders, widened to `width`.
    pub fn random_road(&self, rng: &mut ChaCha8Rng, width: usize) -> Shape {
        let s = (self.size - 1) as f64;
        let edge_point = |edge: usize, rng: &mut ChaCha8Rng| {
            let t = rng.random_range(0.1..0.9) * s;
            match edge {
                0 => (0.0, t),
                1 => (t, s),
                2 => (s, t),
                _ => (t, 0.0),
            }
        };
        let e1 = rng.random_range(0..4usize);
        let e2 = (e1 + rng.random_range(1..4usize)) % 4;
        let p0 = edge_point(e1, rng);
        let p2 = edge_point(e2, rng);
        let p1 = (rng.random_range(0.25..0.75) * s, rng.random_range(0.25..0.75) * s);
        let half = width as f64 / 2.0;
        let near = |y: f64, x: f64| seg_dist((y, x), p0, p1) <= half || seg_dist((y, x), p1, p2) <= half;
        let pixels = self.collect(near, 0.0, s, 0.0, s);
        Shape { size: self.size, pixels }
    }

    /// Optical raster: object colors under a linear illumination gradient
    /// plus per-pixel Gaussian noise, clamped to `[0, 1]`. Channels beyond
    /// the third are fixed mixtures of the visible ones.
    pub fn render(&self, rng: &mut ChaCha8Rng, channels: usize, sigma: f32, illumination: f32) -> MultiChannelRaster {
        let s = self.size;
        let plane = s * s;
        let gy = rng.random_range(-1.0..=1.0f32) * illumination;
        let gx = rng.random_range(-1.0..=1.0f32) * illumination;
        let noise = Normal::new(0.0f32, sigma.max(1e-12)).unwrap();
        let mut out = MultiChannelRaster::zeros(channels, s, s);
        for c in 0..channels {
            let mix = channel_mix(c);
            for p in 0..plane {
                let (y, x) = ((p / s) as f32 / s as f32 - 0.5, (p % s) as f32 / s as f32 - 0.5);
                let col = self.colors[p];
                let base = mix[0] * col[0] + mix[1] * col[1] + mix[2] * col[2];
                let n = if sigma > 0.0 { noise.sample(rng) } else { 0.0 };
                out.data[c * plane + p] = (base * (1.0 + gy * y + gx * x) + n).clamp(0.0, 1.0);
            }
        }
        out
    }
}

fn channel_mix(c: usize) -> [f32; 3] {
    match c {
        0 => [1.0, 0.0, 0.0],
        1 => [0.0, 1.0, 0.0],
        2 => [0.0, 0.0, 1.0],
        _ => {
            let w = [(c as f32 * 0.37).fract() + 0.1, (c as f32 * 0.61).fract() + 0.1, (c as f32 * 0.13).fract() + 0.1];
            let sum = w[0] + w[1] + w[2];
            w.map(|v| v / sum)
        }
    }
}

fn seg_dist(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (vy, vx) = (b.0 - a.0, b.1 - a.1);
    let len2 = vy * vy + vx * vx;
    let t = if len2 == 0.0 { 0.0 } else { (((p.0 - a.0) * vy + (p.1 - a.1) * vx) / len2).clamp(0.0, 1.0) };
    let (dy, dx) = (p.0 - a.0 - t * vy, p.1 - a.1 - t * vx);
    (dy * dy + dx * dx).sqrt()
}
