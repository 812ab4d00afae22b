//! Elementary image transformations and their composition into chains.
//!
//! Geometric transforms sample bilinearly with a constant-zero border and act
//! about the image centre `((w - 1) / 2, (h - 1) / 2)`. Every output is clamped
//! to [0, 1].

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;

use crate::error::{Error, Result};
use crate::image::ImageTensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum TransformKind {
    Rotation,
    Translation,
    Scale,
    Shear,
    Blur,
    Contrast,
}

impl TransformKind {
    pub const ALL: [TransformKind; 6] = [
        TransformKind::Rotation,
        TransformKind::Translation,
        TransformKind::Scale,
        TransformKind::Shear,
        TransformKind::Blur,
        TransformKind::Contrast,
    ];

    pub fn arity(self) -> usize {
        match self {
            TransformKind::Rotation | TransformKind::Contrast => 1,
            _ => 2,
        }
    }

    /// Parameters under which the transform leaves every image unchanged.
    pub fn identity_params(self) -> [f64; 2] {
        match self {
            TransformKind::Rotation | TransformKind::Translation | TransformKind::Shear | TransformKind::Blur => {
                [0.0, 0.0]
            }
            TransformKind::Scale => [1.0, 1.0],
            TransformKind::Contrast => [1.0, 0.0],
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            TransformKind::Rotation => "rotation",
            TransformKind::Translation => "translation",
            TransformKind::Scale => "scale",
            TransformKind::Shear => "shear",
            TransformKind::Blur => "blur",
            TransformKind::Contrast => "contrast",
        }
    }
}

/// One parameterised transformation. Inactive ("nullified") specs are the
/// identity. Unused parameter slots are kept at zero.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(
    feature = "serde",
    derive(serde::Serialize, serde::Deserialize),
    serde(try_from = "SpecRepr", into = "SpecRepr")
)]
pub struct TransformSpec {
    pub kind: TransformKind,
    params: [f64; 2],
    pub active: bool,
}

#[cfg(feature = "serde")]
#[derive(serde::Serialize, serde::Deserialize)]
struct SpecRepr {
    kind: TransformKind,
    params: Vec<f64>,
    active: bool,
}

#[cfg(feature = "serde")]
impl From<TransformSpec> for SpecRepr {
    fn from(s: TransformSpec) -> Self {
        SpecRepr {
            kind: s.kind,
            params: s.params().to_vec(),
            active: s.active,
        }
    }
}

#[cfg(feature = "serde")]
impl TryFrom<SpecRepr> for TransformSpec {
    type Error = Error;

    fn try_from(r: SpecRepr) -> Result<Self> {
        let mut spec = TransformSpec::new(r.kind, &r.params)?;
        spec.active = r.active;
        Ok(spec)
    }
}

impl TransformSpec {
    pub fn new(kind: TransformKind, params: &[f64]) -> Result<Self> {
        if params.len() != kind.arity() {
            return Err(Error::InvalidArgument(format!(
                "{} takes {} parameter(s), got {}",
                kind.name(),
                kind.arity(),
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidArgument("non-finite transform parameter".into()));
        }
        let mut stored = [0.0; 2];
        stored[..params.len()].copy_from_slice(params);
        Ok(Self {
            kind,
            params: stored,
            active: true,
        })
    }

    pub fn identity(kind: TransformKind) -> Self {
        Self {
            kind,
            params: kind.identity_params(),
            active: true,
        }
    }

    pub fn params(&self) -> &[f64] {
        &self.params[..self.kind.arity()]
    }

    pub fn nullified(mut self) -> Self {
        self.active = false;
        self
    }

    /// True when applying this spec cannot change any image.
    pub fn is_identity(&self) -> bool {
        !self.active || self.params == self.kind.identity_params() || self.rounds_to_identity()
    }

    fn rounds_to_identity(&self) -> bool {
        self.kind == TransformKind::Translation
            && libm::round(self.params[0]) == 0.0
            && libm::round(self.params[1]) == 0.0
    }

    /// Bit-level key for caching results per spec.
    pub(crate) fn key(&self) -> (u8, u64, u64, bool) {
        (
            self.kind as u8,
            self.params[0].to_bits(),
            self.params[1].to_bits(),
            self.active,
        )
    }
}

/// Allowed `[lo, hi]` range of every transform parameter.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct BoundsTable {
    /// Degrees.
    pub rotation: [f64; 2],
    /// Pixels, (dx, dy).
    pub translation: [[f64; 2]; 2],
    pub scale: [[f64; 2]; 2],
    pub shear: [[f64; 2]; 2],
    /// Gaussian sigma, (x, y).
    pub blur: [[f64; 2]; 2],
    pub contrast: [f64; 2],
}

impl Default for BoundsTable {
    fn default() -> Self {
        Self {
            rotation: [-10.0, 10.0],
            translation: [[-2.0, 2.0], [-2.0, 2.0]],
            scale: [[0.9, 1.1], [0.9, 1.1]],
            shear: [[-0.1, 0.1], [-0.1, 0.1]],
            blur: [[0.0, 1.5], [0.0, 1.5]],
            contrast: [1.0, 2.0],
        }
    }
}

impl BoundsTable {
    pub fn ranges(&self, kind: TransformKind) -> &[[f64; 2]] {
        match kind {
            TransformKind::Rotation => core::slice::from_ref(&self.rotation),
            TransformKind::Translation => &self.translation,
            TransformKind::Scale => &self.scale,
            TransformKind::Shear => &self.shear,
            TransformKind::Blur => &self.blur,
            TransformKind::Contrast => core::slice::from_ref(&self.contrast),
        }
    }

    /// Checks that every range is finite and ordered, and that the ranges
    /// keep transforms well defined (positive scale, non-negative blur and
    /// contrast, invertible shear).
    pub fn validate(&self) -> Result<()> {
        for kind in TransformKind::ALL {
            for [lo, hi] in self.ranges(kind) {
                if !lo.is_finite() || !hi.is_finite() || lo > hi {
                    return Err(Error::InvalidArgument(format!(
                        "bad {} range [{lo}, {hi}]",
                        kind.name()
                    )));
                }
            }
        }
        let bad = |what: &str| Err(Error::InvalidArgument(format!("{what} range not allowed")));
        if self.scale.iter().any(|r| r[0] <= 0.0) {
            return bad("non-positive scale");
        }
        if self.blur.iter().any(|r| r[0] < 0.0) {
            return bad("negative blur");
        }
        if self.contrast[0] < 0.0 {
            return bad("negative contrast");
        }
        let max_shear = |r: &[f64; 2]| r[0].abs().max(r[1].abs());
        if max_shear(&self.shear[0]) * max_shear(&self.shear[1]) >= 1.0 {
            return bad("singular shear");
        }
        Ok(())
    }

    pub fn check(&self, spec: &TransformSpec) -> Result<()> {
        for (index, (&value, &[lo, hi])) in spec.params().iter().zip(self.ranges(spec.kind)).enumerate() {
            if !(lo..=hi).contains(&value) {
                return Err(Error::OutOfBounds {
                    kind: spec.kind,
                    index,
                    value,
                    lo,
                    hi,
                });
            }
        }
        Ok(())
    }

    /// Whether the identity parameters of `kind` fall inside the bounds.
    pub fn admits_identity(&self, kind: TransformKind) -> bool {
        self.check(&TransformSpec::identity(kind)).is_ok()
    }
}

/// Applies one spec after checking it against `bounds`.
pub fn apply(spec: &TransformSpec, image: &ImageTensor, bounds: &BoundsTable) -> Result<ImageTensor> {
    bounds.check(spec)?;
    Ok(render(spec, image))
}

/// Applies a spec without a bounds check.
pub fn render(spec: &TransformSpec, image: &ImageTensor) -> ImageTensor {
    if spec.is_identity() {
        return image.clone();
    }
    let [a, b] = spec.params;
    match spec.kind {
        TransformKind::Rotation => {
            let (s, c) = libm::sincos(a * PI / 180.0);
            affine_about_centre(image, [[c, s], [-s, c]])
        }
        TransformKind::Translation => translate(image, libm::round(a) as i64, libm::round(b) as i64),
        TransformKind::Scale => affine_about_centre(image, [[a, 0.0], [0.0, b]]),
        TransformKind::Shear => affine_about_centre(image, [[1.0, a], [b, 1.0]]),
        TransformKind::Blur => gaussian_blur(image, a, b),
        TransformKind::Contrast => map_pixels(image, |v| v * a),
    }
}

fn map_pixels(image: &ImageTensor, f: impl Fn(f64) -> f64) -> ImageTensor {
    let (h, w, c) = image.dims();
    ImageTensor::from_clamped(h, w, c, image.data().iter().map(|&v| f(v)).collect())
}

fn translate(image: &ImageTensor, dx: i64, dy: i64) -> ImageTensor {
    let (h, w, ch) = image.dims();
    ImageTensor::from_fn(h, w, ch, |y, x, c| {
        let sy = y as i64 - dy;
        let sx = x as i64 - dx;
        if (0..h as i64).contains(&sy) && (0..w as i64).contains(&sx) {
            image.get(sy as usize, sx as usize, c)
        } else {
            0.0
        }
    })
}

/// `forward` maps source offsets from the centre to destination offsets;
/// each destination pixel samples the inverse image of its position.
fn affine_about_centre(image: &ImageTensor, forward: [[f64; 2]; 2]) -> ImageTensor {
    let [[a, b], [c, d]] = forward;
    let det = a * d - b * c;
    let inv = [[d / det, -b / det], [-c / det, a / det]];
    let (h, w, ch) = image.dims();
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let mut data = Vec::with_capacity(image.len());
    for y in 0..h {
        for x in 0..w {
            let (px, py) = (x as f64 - cx, y as f64 - cy);
            let sx = inv[0][0] * px + inv[0][1] * py + cx;
            let sy = inv[1][0] * px + inv[1][1] * py + cy;
            for c in 0..ch {
                data.push(bilinear(image, sx, sy, c));
            }
        }
    }
    ImageTensor::from_clamped(h, w, ch, data)
}

fn bilinear(image: &ImageTensor, sx: f64, sy: f64, c: usize) -> f64 {
    let x0 = libm::floor(sx);
    let y0 = libm::floor(sy);
    let fx = sx - x0;
    let fy = sy - y0;
    let (h, w) = (image.height() as i64, image.width() as i64);
    let px = |y: i64, x: i64| {
        if (0..h).contains(&y) && (0..w).contains(&x) {
            image.get(y as usize, x as usize, c)
        } else {
            0.0
        }
    };
    let (x0, y0) = (x0 as i64, y0 as i64);
    let mut acc = 0.0;
    for (dy, wy) in [(0, 1.0 - fy), (1, fy)] {
        for (dx, wx) in [(0, 1.0 - fx), (1, fx)] {
            let wgt = wy * wx;
            if wgt != 0.0 {
                acc += wgt * px(y0 + dy, x0 + dx);
            }
        }
    }
    acc
}

/// Normalised Gaussian taps truncated at `ceil(3σ)`; `None` for σ = 0.
pub fn gaussian_kernel(sigma: f64) -> Option<Vec<f64>> {
    if sigma <= 0.0 {
        return None;
    }
    let half = libm::ceil(3.0 * sigma) as i64;
    let mut taps: Vec<f64> = (-half..=half)
        .map(|k| libm::exp(-((k * k) as f64) / (2.0 * sigma * sigma)))
        .collect();
    let sum: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= sum;
    }
    Some(taps)
}

fn gaussian_blur(image: &ImageTensor, sigma_x: f64, sigma_y: f64) -> ImageTensor {
    let (h, w, ch) = image.dims();
    let mut data = image.data().to_vec();
    if let Some(k) = gaussian_kernel(sigma_x) {
        data = convolve_axis(&data, h, w, ch, &k, true);
    }
    if let Some(k) = gaussian_kernel(sigma_y) {
        data = convolve_axis(&data, h, w, ch, &k, false);
    }
    ImageTensor::from_clamped(h, w, ch, data)
}

fn convolve_axis(data: &[f64], h: usize, w: usize, ch: usize, taps: &[f64], along_x: bool) -> Vec<f64> {
    let half = (taps.len() / 2) as i64;
    let mut out = vec![0.0; data.len()];
    for y in 0..h {
        for x in 0..w {
            for c in 0..ch {
                let mut acc = 0.0;
                for (t, k) in taps.iter().zip(-half..=half) {
                    let (sy, sx) = if along_x {
                        (y as i64, x as i64 + k)
                    } else {
                        (y as i64 + k, x as i64)
                    };
                    if (0..h as i64).contains(&sy) && (0..w as i64).contains(&sx) {
                        acc += t * data[(sy as usize * w + sx as usize) * ch + c];
                    }
                }
                out[(y * w + x) * ch + c] = acc;
            }
        }
    }
    out
}

/// A high-order relation: transforms applied left to right.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(try_from = "Vec<TransformSpec>", into = "Vec<TransformSpec>"))]
pub struct HmrChain {
    nodes: Vec<TransformSpec>,
}

impl TryFrom<Vec<TransformSpec>> for HmrChain {
    type Error = Error;

    fn try_from(nodes: Vec<TransformSpec>) -> Result<Self> {
        HmrChain::new(nodes)
    }
}

impl From<HmrChain> for Vec<TransformSpec> {
    fn from(c: HmrChain) -> Self {
        c.nodes
    }
}

impl HmrChain {
    pub fn new(nodes: Vec<TransformSpec>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::InvalidChain("chain needs at least one node".into()));
        }
        Ok(Self { nodes })
    }

    pub fn single(spec: TransformSpec) -> Self {
        Self { nodes: vec![spec] }
    }

    pub fn nodes(&self) -> &[TransformSpec] {
        &self.nodes
    }

    pub fn nodes_mut(&mut self) -> &mut [TransformSpec] {
        &mut self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn is_identity(&self) -> bool {
        self.nodes.iter().all(TransformSpec::is_identity)
    }

    pub fn active_count(&self) -> usize {
        self.nodes.iter().filter(|n| n.active).count()
    }

    pub fn validate(&self, max_depth: usize, bounds: &BoundsTable) -> Result<()> {
        if self.nodes.len() > max_depth {
            return Err(Error::InvalidChain(format!(
                "depth {} exceeds {max_depth}",
                self.nodes.len()
            )));
        }
        self.nodes.iter().try_for_each(|n| bounds.check(n))
    }

    pub(crate) fn key(&self) -> Vec<(u8, u64, u64, bool)> {
        self.nodes.iter().map(TransformSpec::key).collect()
    }
}

/// Applies the active nodes of `chain` in order.
pub fn apply_chain(chain: &HmrChain, image: &ImageTensor, bounds: &BoundsTable) -> Result<ImageTensor> {
    chain.nodes.iter().try_for_each(|n| bounds.check(n))?;
    Ok(render_chain(chain, image))
}

pub fn render_chain(chain: &HmrChain, image: &ImageTensor) -> ImageTensor {
    let mut current: Option<ImageTensor> = None;
    for node in chain.nodes.iter().filter(|n| !n.is_identity()) {
        current = Some(render(node, current.as_ref().unwrap_or(image)));
    }
    current.unwrap_or_else(|| image.clone())
}

/// Draws an active spec: kind uniform over all kinds unless given, each
/// parameter uniform over its range.
pub fn sample_spec<R: Rng + ?Sized>(kind: Option<TransformKind>, bounds: &BoundsTable, rng: &mut R) -> TransformSpec {
    let kind = kind.unwrap_or_else(|| TransformKind::ALL[rng.gen_range(0..TransformKind::ALL.len())]);
    let mut params = [0.0; 2];
    for (p, &[lo, hi]) in params.iter_mut().zip(bounds.ranges(kind)) {
        *p = if lo == hi { lo } else { lo + (hi - lo) * rng.gen::<f64>() };
    }
    TransformSpec {
        kind,
        params,
        active: true,
    }
}

/// Redraws the parameters of `spec` within bounds, keeping its kind.
pub fn resample_params<R: Rng + ?Sized>(spec: &TransformSpec, bounds: &BoundsTable, rng: &mut R) -> TransformSpec {
    let mut fresh = sample_spec(Some(spec.kind), bounds, rng);
    fresh.active = spec.active;
    fresh
}
