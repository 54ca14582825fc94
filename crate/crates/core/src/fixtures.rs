//! Deterministic synthetic test images: diagonal stripes with rectangular
//! holes of the two reference sizes (10x10 and 64x12).

use std::f64::consts::{SQRT_2, TAU};
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::imageio::{write_pgm, GrayImage, ImageError, MaskRegion, DEFAULT_BAND_WIDTH};

pub const STRIPE_WIDTH: usize = 96;
pub const STRIPE_HEIGHT: usize = 64;
pub const DEFAULT_SEED: u64 = 42;
/// Gray value written into the damaged pixels.
pub const DAMAGE_VALUE: f64 = 255.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StripeSpec {
    pub width: usize,
    pub height: usize,
    /// Stripe period in pixels, measured across the stripes.
    pub period: f64,
    pub amplitude: f64,
    pub phase: f64,
}

impl StripeSpec {
    /// Fixed geometry; only the phase is drawn from the seed.
    pub fn from_seed(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self {
            width: STRIPE_WIDTH,
            height: STRIPE_HEIGHT,
            period: 16.0,
            amplitude: 45.0,
            phase: rng.gen_range(0.0..TAU),
        }
    }

    pub fn render(&self) -> GrayImage {
        let k = TAU / self.period;
        GrayImage::from_fn(self.width, self.height, |x, y| {
            128.0 + self.amplitude * (k * (x + y) as f64 / SQRT_2 + self.phase).sin()
        })
    }
}

/// Which of the two reference holes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HoleSize {
    Small,
    Wide,
}

impl HoleSize {
    pub const ALL: [HoleSize; 2] = [HoleSize::Small, HoleSize::Wide];

    /// `(width, height)` of the hole in pixels.
    pub fn dims(self) -> (usize, usize) {
        match self {
            HoleSize::Small => (10, 10),
            HoleSize::Wide => (64, 12),
        }
    }

    pub fn tag(self) -> &'static str {
        match self {
            HoleSize::Small => "10x10",
            HoleSize::Wide => "64x12",
        }
    }

    /// Top-left corner of the centred hole.
    pub fn origin(self) -> (usize, usize) {
        let (w, h) = self.dims();
        ((STRIPE_WIDTH - w) / 2, (STRIPE_HEIGHT - h) / 2)
    }
}

/// One damaged test case.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub hole: HoleSize,
    pub original: GrayImage,
    pub damaged: GrayImage,
    /// Host-sized mask image: 255 inside the hole, 0 elsewhere.
    pub mask: GrayImage,
}

impl Fixture {
    pub fn new(seed: u64, hole: HoleSize) -> Self {
        let original = StripeSpec::from_seed(seed).render();
        let (x0, y0) = hole.origin();
        let (w, h) = hole.dims();
        let inside = |x: usize, y: usize| (x0..x0 + w).contains(&x) && (y0..y0 + h).contains(&y);
        let damaged = GrayImage::from_fn(original.width(), original.height(), |x, y| {
            if inside(x, y) {
                DAMAGE_VALUE
            } else {
                original.get(x, y)
            }
        });
        let mask = GrayImage::from_fn(original.width(), original.height(), |x, y| {
            if inside(x, y) {
                255.0
            } else {
                0.0
            }
        });
        Self {
            hole,
            original,
            damaged,
            mask,
        }
    }

    /// Region with the default band width.
    pub fn region(&self) -> MaskRegion {
        self.region_with_band(DEFAULT_BAND_WIDTH)
            .expect("fixture hole leaves room for the band")
    }

    pub fn region_with_band(&self, band: usize) -> Result<MaskRegion, ImageError> {
        let (x, y) = self.hole.origin();
        let (w, h) = self.hole.dims();
        MaskRegion::rectangle(&self.damaged, x, y, w, h, band)
    }
}

/// Paths written by [`make_fixtures`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FixturePaths {
    pub original: PathBuf,
    /// `(hole tag, damaged image, mask)` per hole size.
    pub cases: Vec<(String, PathBuf, PathBuf)>,
}

/// Write `stripes.pgm` plus `stripes_<tag>.pgm` / `mask_<tag>.pgm` for both
/// holes into `dir`.
pub fn make_fixtures(seed: u64, dir: impl AsRef<Path>) -> Result<FixturePaths, ImageError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|source| ImageError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let original = dir.join("stripes.pgm");
    write_pgm(&StripeSpec::from_seed(seed).render(), &original)?;
    let mut cases = Vec::new();
    for hole in HoleSize::ALL {
        let fx = Fixture::new(seed, hole);
        let img = dir.join(format!("stripes_{}.pgm", hole.tag()));
        let mask = dir.join(format!("mask_{}.pgm", hole.tag()));
        write_pgm(&fx.damaged, &img)?;
        write_pgm(&fx.mask, &mask)?;
        cases.push((hole.tag().to_string(), img, mask));
    }
    Ok(FixturePaths { original, cases })
}
