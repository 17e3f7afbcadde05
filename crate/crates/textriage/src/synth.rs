//! Synthetic documents: dark blocks on white with known boxes.
//!
//! The corpus generator backs the detection benchmark; the four canned
//! fixtures back the classification examples and the default recognizer.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use textriage_core::{BBox, ImageBuffer, Point};

use crate::annotations::{AnnotationStore, Region};

pub const DEFAULT_SEED: u64 = 0x7e47_5eed;
pub const MIN_TEXT_HEIGHT: usize = 5;
pub const MAX_TEXT_HEIGHT: usize = 1024;

const MARGIN: usize = 8;
const MIN_GAP: usize = 4;
const PAGE_WIDTH: usize = 720;

#[derive(Debug, Clone)]
pub struct SyntheticDoc {
    pub image: ImageBuffer,
    pub boxes: Vec<BBox>,
}

impl SyntheticDoc {
    pub fn gt_polygons(&self) -> Vec<Vec<Point>> {
        self.boxes.iter().map(rect_polygon).collect()
    }
}

pub fn rect_polygon(b: &BBox) -> Vec<Point> {
    vec![
        Point::new(b.x, b.y),
        Point::new(b.right(), b.y),
        Point::new(b.right(), b.bottom()),
        Point::new(b.x, b.bottom()),
    ]
}

/// Paints `(x, y, w, h, value)` rectangles onto a white gray page.
pub fn render(
    width: usize,
    height: usize,
    blocks: &[(usize, usize, usize, usize, u8)],
) -> ImageBuffer {
    let mut data = vec![255u8; width * height];
    for &(x, y, w, h, v) in blocks {
        for row in y..y + h {
            data[row * width + x..row * width + x + w].fill(v);
        }
    }
    ImageBuffer::gray(width, height, data).expect("page dimensions are consistent")
}

fn log_uniform_height(rng: &mut impl Rng) -> usize {
    let (lo, hi) = (
        (MIN_TEXT_HEIGHT as f64).ln(),
        ((MAX_TEXT_HEIGHT + 1) as f64).ln(),
    );
    (rng.random_range(lo..hi).exp() as usize).clamp(MIN_TEXT_HEIGHT, MAX_TEXT_HEIGHT)
}

/// One page: blocks packed into shelves with random gaps of at least
/// `MIN_GAP` pixels, so no two blocks touch.
pub fn generate_doc(rng: &mut impl Rng) -> SyntheticDoc {
    let count = rng.random_range(3..=8);
    let usable = PAGE_WIDTH - 2 * MARGIN;
    let mut blocks = Vec::with_capacity(count);
    let (mut x, mut y, mut shelf) = (MARGIN, MARGIN, 0usize);
    for _ in 0..count {
        let h = log_uniform_height(rng);
        let w = ((h as f64 * rng.random_range(1.0..6.0)) as usize).clamp(MIN_TEXT_HEIGHT, usable);
        if x + w > PAGE_WIDTH - MARGIN {
            x = MARGIN;
            y += shelf + rng.random_range(MIN_GAP..=24);
            shelf = 0;
        }
        let dy = rng.random_range(0..=h / 8);
        let value = rng.random_range(0..=60u8);
        blocks.push((x, y + dy, w, h, value));
        shelf = shelf.max(h + dy);
        x += w + rng.random_range(MIN_GAP..=32);
    }
    let height = y + shelf + MARGIN;
    let image = render(PAGE_WIDTH, height, &blocks);
    let boxes = blocks
        .iter()
        .map(|&(x, y, w, h, _)| BBox::new(x as f64, y as f64, w as f64, h as f64))
        .collect();
    SyntheticDoc { image, boxes }
}

pub fn generate_corpus(seed: u64, count: usize) -> Vec<SyntheticDoc> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| generate_doc(&mut rng)).collect()
}

/// A canned page with annotated text lines.
#[derive(Debug, Clone)]
pub struct Fixture {
    pub name: &'static str,
    pub label: &'static str,
    pub image: ImageBuffer,
    pub regions: Vec<Region>,
}

const LINE_HEIGHT: usize = 14;
const CHAR_WIDTH: usize = 7;
const LINE_STEP: usize = 26;

// (label, lines); a line starting with '~' is printed faintly.
const FIXTURE_TEXT: [(&str, &str, &[&str]); 4] = [
    (
        "invoice",
        "Invoice",
        &[
            "INVOICE No. 2024-117",
            "Bill to: Harbor Supply Co.",
            "Item: printer paper x 40",
            "Item: toner cartridge x 3",
            "Amount due: 1,280.00",
            "~Payable within 30 days",
        ],
    ),
    (
        "form",
        "Form",
        &[
            "APPLICATION FORM",
            "Please fill in every field",
            "Name field: ________",
            "Checkbox: [ ] resident",
            "Checkbox: [ ] student",
            "~Office use only",
        ],
    ),
    (
        "letter",
        "Letter",
        &[
            "Dear Ms. Alvarez,",
            "Thank you for your visit",
            "last week. We enjoyed it.",
            "Kind regards to the team.",
            "Sincerely,",
            "~J. Moreau",
        ],
    ),
    (
        "report",
        "Report",
        &[
            "QUARTERLY REPORT",
            "Summary of the quarter",
            "Key findings: sales up 4%",
            "Costs flat versus plan",
            "Report prepared by finance",
            "~Page 1 of 1",
        ],
    ),
];

const FAINT: u8 = 120;

fn build_fixture(name: &'static str, label: &'static str, lines: &[&str]) -> Fixture {
    let width = 320;
    let height = 2 * MARGIN + 16 + LINE_STEP * lines.len();
    let mut blocks = Vec::new();
    let mut regions = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        let (text, value) = match line.strip_prefix('~') {
            Some(t) => (t, FAINT),
            None => (*line, 0),
        };
        let x = 24 + 6 * (i % 3);
        let y = MARGIN + 16 + LINE_STEP * i;
        let w = (CHAR_WIDTH * text.chars().count()).min(width - x - MARGIN);
        blocks.push((x, y, w, LINE_HEIGHT, value));
        regions.push(Region {
            bbox: BBox::new(x as f64, y as f64, w as f64, LINE_HEIGHT as f64),
            text: text.to_string(),
        });
    }
    Fixture {
        name,
        label,
        image: render(width, height, &blocks),
        regions,
    }
}

/// The four canned documents, one per default label.
pub fn fixtures() -> Vec<Fixture> {
    FIXTURE_TEXT
        .iter()
        .map(|(name, label, lines)| build_fixture(name, label, lines))
        .collect()
}

/// Annotations for the canned documents, used when no annotation source
/// is configured.
pub fn fixture_annotations() -> AnnotationStore {
    let mut store = AnnotationStore::default();
    for f in fixtures() {
        store.insert(&f.image, f.regions);
    }
    store
}
