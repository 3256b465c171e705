//! Synthetic MeViS-style dataset: moving coloured shapes with exact
//! palette-indexed annotations, referring expressions for each shape and
//! scripted no-target expressions naming shapes that never appear.
//!
//! Alongside the dataset the generator writes `judge_fixture.json`, the
//! verdicts a perfectly informed judge would give, for the mock judges.

use std::path::Path;

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rvos_core::Image;

use crate::dataset::{MetaExpression, MetaFile, MetaVideo, ANNOTATIONS_DIR, FRAMES_DIR, META_FILE, SCHEMA_VERSION};
use crate::error::Result;
use crate::imageio;
use crate::judge::{JudgeFixture, ScriptedVerdict, JUDGE_FIXTURE_FILE};

#[derive(Debug, Clone)]
pub struct FixtureOptions {
    pub seed: u64,
    pub videos: usize,
    pub width: usize,
    pub height: usize,
    /// Frame counts, cycled over the videos.
    pub lengths: Vec<usize>,
}

impl Default for FixtureOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            videos: 4,
            width: 64,
            height: 48,
            lengths: vec![120, 55, 30, 100],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Shape {
    Disk,
    Square,
}

impl Shape {
    fn name(self) -> &'static str {
        match self {
            Shape::Disk => "circle",
            Shape::Square => "square",
        }
    }
}

const COLORS: [(&str, [u8; 3]); 6] = [
    ("red", [220, 40, 40]),
    ("blue", [40, 70, 220]),
    ("yellow", [230, 210, 40]),
    ("green", [40, 180, 60]),
    ("magenta", [210, 50, 200]),
    ("orange", [240, 140, 30]),
];

/// Background, object 1, object 2.
const ANNOTATION_PALETTE: [u8; 9] = [0, 0, 0, 128, 0, 0, 0, 128, 0];

const ABSENT_SHAPES: [&str; 3] = ["triangle", "star", "hexagon"];

#[derive(Debug, Clone)]
struct Object {
    id: u8,
    shape: Shape,
    color: usize,
    radius: f64,
    pos: (f64, f64),
    vel: (f64, f64),
    bounce: bool,
}

impl Object {
    fn covers(&self, x: usize, y: usize) -> bool {
        let (dx, dy) = (x as f64 + 0.5 - self.pos.0, y as f64 + 0.5 - self.pos.1);
        match self.shape {
            Shape::Disk => dx * dx + dy * dy <= self.radius * self.radius,
            Shape::Square => dx.abs() <= self.radius && dy.abs() <= self.radius,
        }
    }

    fn step(&mut self, w: f64, h: f64) {
        self.pos.0 += self.vel.0;
        self.pos.1 += self.vel.1;
        if self.bounce {
            if self.pos.0 < self.radius || self.pos.0 > w - self.radius {
                self.vel.0 = -self.vel.0;
                self.pos.0 = self.pos.0.clamp(self.radius, w - self.radius);
            }
            if self.pos.1 < self.radius || self.pos.1 > h - self.radius {
                self.vel.1 = -self.vel.1;
                self.pos.1 = self.pos.1.clamp(self.radius, h - self.radius);
            }
        }
    }
}

/// Writes the dataset under `<root>/<split>`. Output is a pure function of
/// `opts`.
pub fn generate(root: &Path, split: &str, opts: &FixtureOptions) -> Result<()> {
    let split_dir = root.join(split);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let (w, h) = (opts.width, opts.height);
    let mut meta_videos = IndexMap::new();
    let mut verdicts = IndexMap::new();

    for v in 0..opts.videos {
        let video_id = format!("vid{v:03}");
        let len = opts.lengths[v % opts.lengths.len()].max(1);
        let first_color = rng.random_range(0..COLORS.len());
        let second_color = (first_color + rng.random_range(1..COLORS.len())) % COLORS.len();
        let shapes = if rng.random_bool(0.5) {
            [Shape::Disk, Shape::Square]
        } else {
            [Shape::Square, Shape::Disk]
        };
        let mut objects: Vec<Object> = [first_color, second_color]
            .into_iter()
            .zip(shapes)
            .enumerate()
            .map(|(i, (color, shape))| {
                let radius = rng.random_range(5.0..9.0);
                Object {
                    id: i as u8 + 1,
                    shape,
                    color,
                    radius,
                    pos: (
                        rng.random_range(radius..w as f64 - radius),
                        rng.random_range(radius..h as f64 - radius),
                    ),
                    vel: (rng.random_range(-1.5..1.5), rng.random_range(-1.0..1.0)),
                    bounce: true,
                }
            })
            .collect();
        // In the first video the second object drifts out of view, so its
        // expression has empty ground-truth frames.
        if v == 0 {
            objects[1].bounce = false;
            objects[1].vel = (w as f64 / (len as f64 * 0.6), 0.0);
        }

        let tint: [i16; 3] = [rng.random_range(-20..20), rng.random_range(-20..20), rng.random_range(-20..20)];
        let mut frame_names = Vec::with_capacity(len);
        for t in 0..len {
            let name = format!("{t:05}");
            let mut img = Image::new(w, h);
            let mut ids = vec![0u8; w * h];
            for y in 0..h {
                for x in 0..w {
                    let base = 90 + (x * 60 / w.max(1)) as i16 + (y * 40 / h.max(1)) as i16;
                    let noise: i16 = rng.random_range(-6..=6);
                    let px = tint.map(|c| (base + c + noise).clamp(0, 255) as u8);
                    img.put_pixel(x, y, px);
                    for o in &objects {
                        if o.covers(x, y) {
                            img.put_pixel(x, y, COLORS[o.color].1);
                            ids[y * w + x] = o.id;
                        }
                    }
                }
            }
            imageio::write_file(
                &split_dir.join(FRAMES_DIR).join(&video_id).join(format!("{name}.png")),
                &imageio::encode_rgb_png(&img),
            )?;
            imageio::write_file(
                &split_dir.join(ANNOTATIONS_DIR).join(&video_id).join(format!("{name}.png")),
                &imageio::encode_indexed_png(w, h, &ids, &ANNOTATION_PALETTE),
            )?;
            frame_names.push(name);
            for o in &mut objects {
                o.step(w as f64, h as f64);
            }
        }

        let mut expressions = IndexMap::new();
        for o in &objects {
            expressions.insert(
                (o.id - 1).to_string(),
                MetaExpression {
                    exp: format!("the {} {}", COLORS[o.color].0, o.shape.name()),
                    obj_id: vec![o.id as u32],
                },
            );
        }
        let unused = (0..COLORS.len())
            .find(|c| *c != first_color && *c != second_color)
            .expect("six colours, two used");
        expressions.insert(
            "2".into(),
            MetaExpression {
                exp: format!("the {} {}", COLORS[unused].0, ABSENT_SHAPES[v % ABSENT_SHAPES.len()]),
                obj_id: Vec::new(),
            },
        );
        if v % 2 == 1 {
            expressions.insert(
                "3".into(),
                MetaExpression {
                    exp: "both moving shapes".into(),
                    obj_id: vec![1, 2],
                },
            );
        }
        for (exp_id, e) in &expressions {
            verdicts.insert(
                crate::dataset::expression_id(&video_id, exp_id),
                ScriptedVerdict::Plain(if e.obj_id.is_empty() { "absent" } else { "present" }.into()),
            );
        }
        meta_videos.insert(video_id, MetaVideo { frames: frame_names, expressions });
    }

    let meta = MetaFile {
        schema_version: SCHEMA_VERSION,
        videos: meta_videos,
    };
    let mut text = serde_json::to_string_pretty(&meta).expect("meta serializes");
    text.push('\n');
    imageio::write_file(&split_dir.join(META_FILE), text.as_bytes())?;

    let fixture = JudgeFixture {
        schema_version: SCHEMA_VERSION,
        verdicts,
    };
    let mut text = serde_json::to_string_pretty(&fixture).expect("fixture serializes");
    text.push('\n');
    imageio::write_file(&split_dir.join(JUDGE_FIXTURE_FILE), text.as_bytes())
}
