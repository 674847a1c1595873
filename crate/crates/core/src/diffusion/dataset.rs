//! Procedural 16×16 shape dataset with four classes.

use rand::{seq::SliceRandom, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::image::GrayImage;

pub const IMAGE_SIDE: usize = 16;
pub const PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;
pub const NUM_CLASSES: usize = 4;
pub const CLASS_NAMES: [&str; NUM_CLASSES] = ["disk", "square", "cross", "stripes"];

const CENTER_JITTER: f64 = 2.0;
const RADIUS_JITTER: f64 = 1.0;
const PIXEL_NOISE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ShapeClass {
    Disk,
    Square,
    Cross,
    Stripes,
}

impl ShapeClass {
    pub const ALL: [ShapeClass; NUM_CLASSES] = [
        ShapeClass::Disk,
        ShapeClass::Square,
        ShapeClass::Cross,
        ShapeClass::Stripes,
    ];

    pub fn from_label(label: usize) -> Option<Self> {
        Self::ALL.get(label).copied()
    }

    pub fn label(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        CLASS_NAMES[self.label()]
    }

    fn base_radius(self) -> f64 {
        match self {
            ShapeClass::Disk => 5.0,
            ShapeClass::Square => 4.0,
            ShapeClass::Cross => 5.5,
            ShapeClass::Stripes => 5.0,
        }
    }

    /// Whether offset `(dx, dy)` from the shape center is foreground.
    fn covers(self, dx: f64, dy: f64, r: f64) -> bool {
        match self {
            ShapeClass::Disk => dx * dx + dy * dy <= r * r,
            ShapeClass::Square => dx.abs() <= r && dy.abs() <= r,
            ShapeClass::Cross => {
                (dx.abs() <= 1.0 && dy.abs() <= r) || (dy.abs() <= 1.0 && dx.abs() <= r)
            }
            ShapeClass::Stripes => {
                dx.abs() <= r && dy.abs() <= r && ((dx + r) / 2.0).floor() as i64 % 2 == 0
            }
        }
    }
}

/// Renders one jittered shape: foreground `+1`, background `-1`, plus Gaussian
/// pixel noise, clamped to `[-1, 1]`.
pub fn render_shape(class: ShapeClass, rng: &mut impl Rng) -> GrayImage {
    let mid = IMAGE_SIDE as f64 / 2.0;
    let cx = mid + rng.random_range(-CENTER_JITTER..=CENTER_JITTER);
    let cy = mid + rng.random_range(-CENTER_JITTER..=CENTER_JITTER);
    let r = class.base_radius() + rng.random_range(-RADIUS_JITTER..=RADIUS_JITTER);
    let noise = Normal::new(0.0, PIXEL_NOISE).expect("valid sigma");
    let mut pixels = Vec::with_capacity(PIXELS);
    for y in 0..IMAGE_SIDE {
        for x in 0..IMAGE_SIDE {
            let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
            let base = if class.covers(dx, dy, r) { 1.0 } else { -1.0 };
            let v: f64 = base + noise.sample(rng);
            pixels.push(v.clamp(-1.0, 1.0));
        }
    }
    GrayImage::new(IMAGE_SIDE, IMAGE_SIDE, pixels).expect("fixed size")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeDataset {
    pub images: Vec<GrayImage>,
    pub labels: Vec<usize>,
    pub seed: u64,
    pub n_per_class: usize,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Renders `n_per_class` images per class, interleaved by class, then splits each
/// class 80/20 by position in a seeded shuffle (every fifth shuffled index is test).
pub fn gen_dataset(seed: u64, n_per_class: usize) -> ShapeDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut images = Vec::with_capacity(n_per_class * NUM_CLASSES);
    let mut labels = Vec::with_capacity(n_per_class * NUM_CLASSES);
    for _ in 0..n_per_class {
        for class in ShapeClass::ALL {
            images.push(render_shape(class, &mut rng));
            labels.push(class.label());
        }
    }
    let (train, test) = split(&labels, &mut rng);
    ShapeDataset {
        images,
        labels,
        seed,
        n_per_class,
        train,
        test,
    }
}

pub(crate) fn split(labels: &[usize], rng: &mut impl Rng) -> (Vec<usize>, Vec<usize>) {
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in 0..NUM_CLASSES {
        let mut members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        members.shuffle(rng);
        for (pos, idx) in members.into_iter().enumerate() {
            if pos % 5 == 4 {
                test.push(idx);
            } else {
                train.push(idx);
            }
        }
    }
    train.sort_unstable();
    test.sort_unstable();
    (train, test)
}

impl ShapeDataset {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn class_counts(&self) -> [usize; NUM_CLASSES] {
        let mut counts = [0; NUM_CLASSES];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    pub fn test_of_class(&self, label: usize) -> impl Iterator<Item = &GrayImage> + '_ {
        self.test
            .iter()
            .filter(move |&&i| self.labels[i] == label)
            .map(move |&i| &self.images[i])
    }
}
