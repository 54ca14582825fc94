//! Gray-scale PGM images, inpainting masks and the mapping between the host
//! image and the rectangular working box around the damaged region.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{laplacian, BoundaryKind, Grid2D, ScalarField};
use crate::solver::{solve_poisson, LinearSettings};

pub const DEFAULT_BAND_WIDTH: usize = 3;

/// Mask pixels at or above this value are inpainted.
pub const MASK_THRESHOLD: f64 = 128.0;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("malformed PGM header: {0}")]
    MalformedHeader(String),
    #[error("unsupported maxval {0} (at most 255)")]
    UnsupportedMaxval(u32),
    #[error("truncated pixel data: expected {expected} samples, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("sample {value} exceeds maxval {maxval}")]
    SampleOutOfRange { value: u32, maxval: u32 },
    #[error("image dimensions {width}x{height} do not match {pixels} pixels")]
    BadDimensions {
        width: usize,
        height: usize,
        pixels: usize,
    },
    #[error("mask is {mask:?} but host image is {host:?}")]
    DimensionMismatch {
        mask: (usize, usize),
        host: (usize, usize),
    },
    #[error("empty mask")]
    EmptyMask,
    #[error("insufficient boundary band: mask must stay {band} pixels away from the image edge")]
    InsufficientBand { band: usize },
    #[error("band width must be at least 1")]
    ZeroBand,
    #[error("field is {got:?} but region box is {expected:?}")]
    RegionShape {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("harmonic initialisation failed: {0}")]
    Harmonic(String),
}

/// Gray image in native [0, 255] scale, row-major. Values are kept as
/// unclamped reals; clamping happens only on write.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>) -> Result<Self, ImageError> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(ImageError::BadDimensions {
                width,
                height,
                pixels: pixels.len(),
            });
        }
        Ok(Self {
            width,
            height,
            pixels,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut pixels = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                pixels.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            pixels,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.pixels[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        self.pixels[y * self.width + x] = v;
    }

    /// Bytes as written to a P5 payload.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.pixels.iter().map(|&v| quantize(v)).collect()
    }
}

/// Round half away from zero, then clamp to [0, 255].
pub fn quantize(v: f64) -> u8 {
    if v.is_nan() {
        return 0;
    }
    v.round().clamp(0.0, 255.0) as u8
}

struct HeaderCursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> HeaderCursor<'a> {
    fn skip_space_and_comments(&mut self) {
        while self.pos < self.data.len() {
            let c = self.data[self.pos];
            if c == b'#' {
                while self.pos < self.data.len() && self.data[self.pos] != b'\n' {
                    self.pos += 1;
                }
            } else if c.is_ascii_whitespace() {
                self.pos += 1;
            } else {
                break;
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<u32, ImageError> {
        self.skip_space_and_comments();
        let start = self.pos;
        while self.pos < self.data.len() && self.data[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(ImageError::MalformedHeader(format!("missing {what}")));
        }
        std::str::from_utf8(&self.data[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| ImageError::MalformedHeader(format!("bad {what}")))
    }
}

/// Decode a P2 or P5 PGM with maxval <= 255. Samples are rescaled to 0..255.
pub fn parse_pgm(data: &[u8]) -> Result<GrayImage, ImageError> {
    if data.len() < 2 || data[0] != b'P' || !(data[1] == b'2' || data[1] == b'5') {
        return Err(ImageError::MalformedHeader(
            "expected magic P2 or P5".to_string(),
        ));
    }
    let binary = data[1] == b'5';
    let mut cur = HeaderCursor { data, pos: 2 };
    let width = cur.number("width")? as usize;
    let height = cur.number("height")? as usize;
    let maxval = cur.number("maxval")?;
    if width == 0 || height == 0 {
        return Err(ImageError::MalformedHeader("zero dimension".to_string()));
    }
    if maxval == 0 {
        return Err(ImageError::MalformedHeader("zero maxval".to_string()));
    }
    if maxval > 255 {
        return Err(ImageError::UnsupportedMaxval(maxval));
    }
    let n = width * height;
    let scale = 255.0 / maxval as f64;
    let mut pixels = Vec::with_capacity(n);
    if binary {
        // exactly one whitespace byte separates maxval from the payload
        if cur.pos >= data.len() || !data[cur.pos].is_ascii_whitespace() {
            return Err(ImageError::Truncated {
                expected: n,
                found: 0,
            });
        }
        let payload = &data[cur.pos + 1..];
        if payload.len() < n {
            return Err(ImageError::Truncated {
                expected: n,
                found: payload.len(),
            });
        }
        for &b in &payload[..n] {
            if u32::from(b) > maxval {
                return Err(ImageError::SampleOutOfRange {
                    value: b.into(),
                    maxval,
                });
            }
            pixels.push(f64::from(b) * scale);
        }
    } else {
        for found in 0..n {
            cur.skip_space_and_comments();
            if cur.pos >= data.len() {
                return Err(ImageError::Truncated { expected: n, found });
            }
            let value = cur.number("sample")?;
            if value > maxval {
                return Err(ImageError::SampleOutOfRange { value, maxval });
            }
            pixels.push(value as f64 * scale);
        }
    }
    GrayImage::new(width, height, pixels)
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayImage, ImageError> {
    let path = path.as_ref();
    let data = fs::read(path).map_err(|source| ImageError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_pgm(&data)
}

/// Encode as binary P5 with maxval 255.
pub fn encode_pgm(image: &GrayImage) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", image.width, image.height).into_bytes();
    out.extend(image.to_bytes());
    out
}

pub fn write_pgm(image: &GrayImage, path: impl AsRef<Path>) -> Result<(), ImageError> {
    let path = path.as_ref();
    let io_err = |source| ImageError::Io {
        path: path.display().to_string(),
        source,
    };
    let mut f = fs::File::create(path).map_err(io_err)?;
    f.write_all(&encode_pgm(image)).map_err(io_err)
}

/// Initial guess for the unknown pixels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitMode {
    Zero,
    #[default]
    MeanOfBand,
    /// Discrete harmonic extension of the band data.
    Harmonic,
}

impl FromStr for InitMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "zero" => Ok(Self::Zero),
            "mean-of-band" | "mean_of_band" | "mean" => Ok(Self::MeanOfBand),
            "harmonic" => Ok(Self::Harmonic),
            other => Err(format!(
                "unknown init mode '{other}' (expected zero, mean-of-band or harmonic)"
            )),
        }
    }
}

impl fmt::Display for InitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Zero => "zero",
            Self::MeanOfBand => "mean-of-band",
            Self::Harmonic => "harmonic",
        })
    }
}

/// The damaged region and the rectangular working box around it.
///
/// The box is the tight bounding box of the mask grown by `band_width` on
/// every side. Every box pixel that is not in the mask is known data and acts
/// as Dirichlet boundary for the solver.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskRegion {
    x0: usize,
    y0: usize,
    width: usize,
    height: usize,
    omega_size: (usize, usize),
    band_width: usize,
    /// `[[i, j]]` over the box, `true` = unknown pixel.
    interior: Array2<bool>,
    /// Host values over the box; meaningful on known pixels only.
    boundary_values: Array2<f64>,
    host_dims: (usize, usize),
}

impl MaskRegion {
    /// Build from a host-sized boolean mask (`true` = inpaint), row-major.
    pub fn from_mask(
        mask: &[bool],
        host: &GrayImage,
        band_width: usize,
    ) -> Result<Self, ImageError> {
        if band_width == 0 {
            return Err(ImageError::ZeroBand);
        }
        let (w, h) = host.dims();
        if mask.len() != w * h {
            return Err(ImageError::DimensionMismatch {
                mask: (mask.len(), 1),
                host: (w, h),
            });
        }
        let mut bbox: Option<(usize, usize, usize, usize)> = None;
        for y in 0..h {
            for x in 0..w {
                if mask[y * w + x] {
                    bbox = Some(match bbox {
                        None => (x, y, x, y),
                        Some((a, b, c, d)) => (a.min(x), b.min(y), c.max(x), d.max(y)),
                    });
                }
            }
        }
        let (xmin, ymin, xmax, ymax) = bbox.ok_or(ImageError::EmptyMask)?;
        if xmin < band_width || ymin < band_width || xmax + band_width >= w || ymax + band_width >= h
        {
            return Err(ImageError::InsufficientBand { band: band_width });
        }
        let (x0, y0) = (xmin - band_width, ymin - band_width);
        let width = xmax - xmin + 1 + 2 * band_width;
        let height = ymax - ymin + 1 + 2 * band_width;
        let interior = Array2::from_shape_fn((width, height), |(i, j)| mask[(y0 + j) * w + x0 + i]);
        let boundary_values = Array2::from_shape_fn((width, height), |(i, j)| {
            if interior[[i, j]] {
                0.0
            } else {
                host.get(x0 + i, y0 + j)
            }
        });
        Ok(Self {
            x0,
            y0,
            width,
            height,
            omega_size: (xmax - xmin + 1, ymax - ymin + 1),
            band_width,
            interior,
            boundary_values,
            host_dims: (w, h),
        })
    }

    /// Rectangular hole of `w x h` pixels with top-left corner `(x, y)`.
    pub fn rectangle(
        host: &GrayImage,
        x: usize,
        y: usize,
        w: usize,
        h: usize,
        band_width: usize,
    ) -> Result<Self, ImageError> {
        let (hw, hh) = host.dims();
        let mut mask = vec![false; hw * hh];
        for yy in y..(y + h).min(hh) {
            for xx in x..(x + w).min(hw) {
                mask[yy * hw + xx] = true;
            }
        }
        Self::from_mask(&mask, host, band_width)
    }

    /// Box origin in host coordinates.
    pub fn origin(&self) -> (usize, usize) {
        (self.x0, self.y0)
    }

    /// Box extent `(width, height)` including the band.
    pub fn box_size(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Tight bounding box of the mask, `(N, M)`.
    pub fn omega_size(&self) -> (usize, usize) {
        self.omega_size
    }

    pub fn band_width(&self) -> usize {
        self.band_width
    }

    pub fn host_dims(&self) -> (usize, usize) {
        self.host_dims
    }

    pub fn interior(&self) -> &Array2<bool> {
        &self.interior
    }

    #[inline]
    pub fn is_interior(&self, i: usize, j: usize) -> bool {
        self.interior[[i, j]]
    }

    pub fn boundary_values(&self) -> &Array2<f64> {
        &self.boundary_values
    }

    pub fn interior_count(&self) -> usize {
        self.interior.iter().filter(|b| **b).count()
    }

    /// Pixel grid of the working box.
    pub fn grid(&self) -> Grid2D {
        Grid2D::pixels(self.width, self.height, BoundaryKind::Dirichlet)
            .expect("box is at least 3x3")
    }

    /// Host-coordinate mask, row-major.
    pub fn host_mask(&self) -> Vec<bool> {
        let (w, h) = self.host_dims;
        let mut m = vec![false; w * h];
        for ((i, j), &inside) in self.interior.indexed_iter() {
            if inside {
                m[(self.y0 + j) * w + self.x0 + i] = true;
            }
        }
        m
    }

    /// Mean of the known pixels in the box.
    pub fn band_mean(&self) -> f64 {
        let (sum, n) = self
            .interior
            .iter()
            .zip(self.boundary_values.iter())
            .filter(|(inside, _)| !**inside)
            .fold((0.0, 0usize), |(s, n), (_, v)| (s + v, n + 1));
        sum / n as f64
    }
}

/// Threshold a host-sized mask image: values >= 128 are inpainted.
pub fn mask_from_image(mask: &GrayImage) -> Vec<bool> {
    mask.pixels().iter().map(|&v| v >= MASK_THRESHOLD).collect()
}

pub fn load_mask(
    path: impl AsRef<Path>,
    host: &GrayImage,
    band_width: usize,
) -> Result<MaskRegion, ImageError> {
    let mask = read_pgm(path)?;
    if mask.dims() != host.dims() {
        return Err(ImageError::DimensionMismatch {
            mask: mask.dims(),
            host: host.dims(),
        });
    }
    MaskRegion::from_mask(&mask_from_image(&mask), host, band_width)
}

/// Laplacian of the known host data at a known pixel, falling back to a
/// one-sided second difference wherever the centred stencil would touch an
/// unknown pixel or leave the image.
fn known_laplacian(host: &GrayImage, mask: &[bool], x: usize, y: usize) -> f64 {
    let (w, h) = host.dims();
    let known = |xx: isize, yy: isize| -> Option<f64> {
        if xx < 0 || yy < 0 || xx as usize >= w || yy as usize >= h {
            return None;
        }
        let (xx, yy) = (xx as usize, yy as usize);
        if mask[yy * w + xx] {
            None
        } else {
            Some(host.get(xx, yy))
        }
    };
    let second = |dx: isize, dy: isize| -> f64 {
        let (x, y) = (x as isize, y as isize);
        let c = host.get(x as usize, y as usize);
        match (known(x + dx, y + dy), known(x - dx, y - dy)) {
            (Some(p), Some(m)) => p + m - 2.0 * c,
            (None, Some(m)) => known(x - 2 * dx, y - 2 * dy).map_or(0.0, |mm| c - 2.0 * m + mm),
            (Some(p), None) => known(x + 2 * dx, y + 2 * dy).map_or(0.0, |pp| pp - 2.0 * p + c),
            (None, None) => 0.0,
        }
    };
    second(1, 0) + second(0, 1)
}

/// Working-box fields at `t = 0`: intensity `I` (known pixels copied from the
/// host, unknown ones initialised per `init`) and vorticity `w`. On unknown
/// pixels `w = Lap I`; on known pixels `w` is the Laplacian of the known host
/// data and stays fixed for the whole solve.
pub fn extract_initial_state(
    host: &GrayImage,
    region: &MaskRegion,
    init: InitMode,
) -> Result<(ScalarField, ScalarField), ImageError> {
    let grid = region.grid();
    let fill = match init {
        InitMode::Zero => 0.0,
        InitMode::MeanOfBand | InitMode::Harmonic => region.band_mean(),
    };
    let mut intensity = ScalarField::from_fn(grid, |i, j| {
        if region.is_interior(i, j) {
            fill
        } else {
            region.boundary_values[[i, j]]
        }
    });
    if init == InitMode::Harmonic {
        let zero = ScalarField::zeros(grid);
        intensity = solve_poisson(&zero, region, &intensity, &LinearSettings::default())
            .map_err(|e| ImageError::Harmonic(e.to_string()))?;
    }
    let omega = initial_vorticity(host, region, &intensity)
        .map_err(|e| ImageError::Harmonic(e.to_string()))?;
    Ok((intensity, omega))
}

/// `Lap I` on unknown pixels, the frozen known-data Laplacian elsewhere.
pub fn initial_vorticity(
    host: &GrayImage,
    region: &MaskRegion,
    intensity: &ScalarField,
) -> Result<ScalarField, crate::grid::GridError> {
    let lap = laplacian(intensity)?;
    let mask = region.host_mask();
    let (x0, y0) = region.origin();
    Ok(ScalarField::from_fn(region.grid(), |i, j| {
        if region.is_interior(i, j) {
            lap.get(i, j)
        } else {
            known_laplacian(host, &mask, x0 + i, y0 + j)
        }
    }))
}

/// Copy the unknown pixels of `intensity` into a copy of `host`.
pub fn embed_region(
    host: &GrayImage,
    region: &MaskRegion,
    intensity: &ScalarField,
) -> Result<GrayImage, ImageError> {
    if intensity.grid().shape() != region.box_size() {
        return Err(ImageError::RegionShape {
            expected: region.box_size(),
            got: intensity.grid().shape(),
        });
    }
    if host.dims() != region.host_dims {
        return Err(ImageError::DimensionMismatch {
            mask: region.host_dims,
            host: host.dims(),
        });
    }
    let mut out = host.clone();
    let (x0, y0) = region.origin();
    for ((i, j), &inside) in region.interior.indexed_iter() {
        if inside {
            out.set(x0 + i, y0 + j, intensity.get(i, j));
        }
    }
    Ok(out)
}
