//! Categorized detection image: detection boxes filled with an intensity
//! that grows with the object's collision-risk level.

use std::fmt::Write as _;
use std::path::Path;

use log::warn;

use crate::error::{Error, Result};
use crate::image::{Detection, GrayImage, RiskCategory};

/// Class vocabulary of the built-in simulator scenes.
pub const DEFAULT_CATEGORY_TABLE: &str = "\
# class            risk level (1 = lowest, 6 = highest)
person             6
pedestrian         6
cart               5
bicycle            5
chair              4
table              4
box                3
trash_bin          2
plant              2
cabinet            1
door               1
";

#[derive(Debug, Clone, PartialEq)]
pub struct CategoryMap {
    classes: Vec<(String, RiskCategory)>,
    default_category: RiskCategory,
    intensities: [u8; 6],
}

/// `round(255 * level / 6)`: 43, 85, 128, 170, 213, 255.
pub const DEFAULT_INTENSITIES: [u8; 6] = [43, 85, 128, 170, 213, 255];

impl Default for CategoryMap {
    fn default() -> Self {
        Self::parse(DEFAULT_CATEGORY_TABLE).expect("built-in table parses")
    }
}

impl CategoryMap {
    pub fn new(classes: Vec<(String, RiskCategory)>, default_category: RiskCategory) -> Self {
        Self { classes, default_category, intensities: DEFAULT_INTENSITIES }
    }

    /// Parses `class level` pairs, one per line; `#` starts a comment.
    pub fn parse(text: &str) -> Result<Self> {
        let mut classes = Vec::new();
        let mut offset = 0;
        for line in text.split_inclusive('\n') {
            let content = line.split('#').next().unwrap_or("").trim();
            if !content.is_empty() {
                let mut parts = content.split_whitespace();
                let (name, level) = (parts.next(), parts.next());
                let malformed = |message: String| Error::Malformed { format: "category table", offset, message };
                let (Some(name), Some(level), None) = (name, level, parts.next()) else {
                    return Err(malformed(format!("expected `class level`, got `{content}`")));
                };
                let level: u8 = level.parse().map_err(|_| malformed(format!("bad level `{level}`")))?;
                let cat = RiskCategory::new(level).map_err(|e| malformed(e.to_string()))?;
                classes.push((name.to_ascii_lowercase(), cat));
            }
            offset += line.len();
        }
        Ok(Self::new(classes, RiskCategory::new(3)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (name, cat) in &self.classes {
            let _ = writeln!(s, "{name} {}", cat.level());
        }
        s
    }

    pub fn with_default(mut self, default_category: RiskCategory) -> Self {
        self.default_category = default_category;
        self
    }

    pub fn default_category(&self) -> RiskCategory {
        self.default_category
    }

    pub fn lookup(&self, class_name: &str) -> Option<RiskCategory> {
        self.classes.iter().find(|(name, _)| name.eq_ignore_ascii_case(class_name)).map(|(_, c)| *c)
    }

    /// Table lookup; unknown classes fall back to the default category.
    pub fn categorize(&self, class_name: &str) -> RiskCategory {
        self.lookup(class_name).unwrap_or_else(|| {
            warn!("unknown detection class `{class_name}`, using level {}", self.default_category.level());
            self.default_category
        })
    }

    pub fn intensity(&self, category: RiskCategory) -> u8 {
        self.intensities[usize::from(category.level()) - 1]
    }
}

pub fn categorize(class_name: &str, map: &CategoryMap) -> RiskCategory {
    map.categorize(class_name)
}

/// Fills each box interior with its category intensity; overlaps keep the
/// highest risk. Background is `0`.
pub fn rasterize(dets: &[Detection], width: usize, height: usize, map: &CategoryMap) -> Result<GrayImage> {
    let mut img = GrayImage::zeros(width, height)?;
    for det in dets {
        det.bbox.validate(width, height)?;
    }
    let data = img.data_mut();
    for det in dets {
        let v = map.intensity(det.category);
        let b = det.bbox;
        for y in b.y_min as usize..b.y_max as usize {
            for px in &mut data[y * width + b.x_min as usize..y * width + b.x_max as usize] {
                *px = (*px).max(v);
            }
        }
    }
    Ok(img)
}
