//! Versioned file formats: annotations, manifests, interpretations, images.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::geometry::{ContourPrimitive, LocalRegionImage, PointKind, PointPrimitive, Primitive, PrimitiveType, RegionPrimitive, Vec2};
use crate::pipeline::{Assignment, Diagnostics, ModelSchema};

pub const FORMAT_VERSION: &str = "1.0";
const FORMAT_MAJOR: u32 = 1;

pub fn default_version() -> String {
    FORMAT_VERSION.to_string()
}

/// Rejects versions whose major component is not the supported one.
pub fn check_version(v: &str) -> Result<()> {
    let major = v.split('.').next().and_then(|m| m.parse::<u32>().ok());
    if major == Some(FORMAT_MAJOR) {
        Ok(())
    } else {
        Err(Error::FormatVersion { found: v.to_string(), expected: FORMAT_MAJOR })
    }
}

/// Parses versioned JSON, checking `format_version` before the body.
pub fn from_json_str<T: DeserializeOwned>(text: &str) -> Result<T> {
    let value: serde_json::Value = serde_json::from_str(text)?;
    match value.get("format_version") {
        Some(serde_json::Value::String(v)) => check_version(v)?,
        Some(other) => return Err(Error::FormatVersion { found: other.to_string(), expected: FORMAT_MAJOR }),
        None => return Err(Error::Parse("missing format_version".into())),
    }
    Ok(serde_json::from_value(value)?)
}

pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    from_json_str(&text).map_err(|e| match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(path, to_json_string(value)?).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Serialized form of one slot binding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BindingLiteral {
    pub slot_id: String,
    #[serde(rename = "type")]
    pub primitive_type: PrimitiveType,
    pub coords: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub closed: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strength: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<PointKind>,
}

impl BindingLiteral {
    pub fn from_primitive(slot_id: &str, p: &Primitive) -> Self {
        let coords = p.coordinates().iter().map(|v| [v.x, v.y]).collect();
        let (closed, strength, kind) = match p {
            Primitive::Point(pt) => (None, Some(pt.strength()), Some(pt.kind())),
            Primitive::Contour(c) => (Some(c.is_closed()), None, None),
            Primitive::Region(_) => (None, None, None),
        };
        Self { slot_id: slot_id.to_string(), primitive_type: p.primitive_type(), coords, closed, strength, kind }
    }

    pub fn to_primitive(&self) -> Result<Primitive> {
        let pts: Vec<Vec2> = self.coords.iter().map(|c| Vec2::new(c[0], c[1])).collect();
        if pts.iter().any(|p| !(0.0..=1.0).contains(&p.x) || !(0.0..=1.0).contains(&p.y)) {
            return Err(invalid(format!("slot `{}` has coordinates outside [0,1]", self.slot_id)));
        }
        Ok(match self.primitive_type {
            PrimitiveType::Point => {
                if pts.len() != 1 {
                    return Err(invalid(format!("point slot `{}` needs exactly one coordinate", self.slot_id)));
                }
                PointPrimitive::new(pts[0], self.kind.unwrap_or(PointKind::Generic), self.strength.unwrap_or(0.0))?.into()
            }
            PrimitiveType::Contour => ContourPrimitive::new(pts, self.closed.unwrap_or(false))?.into(),
            PrimitiveType::Region => RegionPrimitive::new(pts)?.into(),
        })
    }
}

/// Ground-truth slot labeling of one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnotationRecord {
    #[serde(default = "default_version")]
    pub format_version: String,
    pub image_id: String,
    pub schema_name: String,
    pub annotator: String,
    pub refined: bool,
    pub bindings: Vec<BindingLiteral>,
}

impl AnnotationRecord {
    pub fn from_assignment(image_id: &str, schema: &ModelSchema, a: &Assignment, annotator: &str) -> Self {
        let bindings = schema
            .slots
            .iter()
            .filter_map(|s| a.get(&s.id).map(|p| BindingLiteral::from_primitive(&s.id, p)))
            .collect();
        Self {
            format_version: default_version(),
            image_id: image_id.to_string(),
            schema_name: schema.class_name.clone(),
            annotator: annotator.to_string(),
            refined: false,
            bindings,
        }
    }

    /// Primitives in schema slot order, checking completeness and types.
    pub fn primitives(&self, schema: &ModelSchema) -> Result<Vec<Primitive>> {
        for b in &self.bindings {
            if schema.slot_index(&b.slot_id).is_none() {
                return Err(invalid(format!("annotation `{}` binds unknown slot `{}`", self.image_id, b.slot_id)));
            }
        }
        schema
            .slots
            .iter()
            .map(|slot| {
                let mut found = self.bindings.iter().filter(|b| b.slot_id == slot.id);
                let b = found.next().ok_or_else(|| Error::IncompleteAnnotation {
                    record: self.image_id.clone(),
                    slot: slot.id.clone(),
                })?;
                if found.next().is_some() {
                    return Err(invalid(format!("annotation `{}` binds slot `{}` twice", self.image_id, slot.id)));
                }
                if b.primitive_type != slot.primitive_type {
                    return Err(invalid(format!(
                        "annotation `{}`: slot `{}` expects a {}",
                        self.image_id, slot.id, slot.primitive_type
                    )));
                }
                b.to_primitive()
            })
            .collect()
    }

    pub fn to_assignment(&self, schema: &ModelSchema) -> Result<Assignment> {
        Assignment::from_slots(schema, self.primitives(schema)?, None)
    }

    pub fn validate(&self, schema: &ModelSchema) -> Result<()> {
        self.primitives(schema).map(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub annotation: Option<String>,
    pub label: Label,
    pub split: Split,
}

/// Dataset listing; paths are relative to the manifest's directory.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    #[serde(default = "default_version")]
    pub format_version: String,
    pub schema_name: String,
    pub entries: Vec<ManifestEntry>,
}

/// Output of `interpret` for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterpretationRecord {
    #[serde(default = "default_version")]
    pub format_version: String,
    pub image_id: String,
    pub score: Option<f64>,
    pub accepted: bool,
    pub bindings: Vec<BindingLiteral>,
    pub diagnostics: Diagnostics,
}

impl InterpretationRecord {
    /// The interpretation as an assignment (empty when none was found).
    pub fn to_assignment(&self, schema: &ModelSchema) -> Result<Assignment> {
        if self.bindings.is_empty() {
            return Ok(Assignment::default());
        }
        let mut a = Assignment { score: self.score, ..Default::default() };
        for b in &self.bindings {
            if schema.slot_index(&b.slot_id).is_none() {
                return Err(invalid(format!("unknown slot `{}`", b.slot_id)));
            }
            a.bindings.insert(b.slot_id.clone(), b.to_primitive()?);
        }
        Ok(a)
    }
}

/// Loads an 8-bit grayscale raster, mapping intensities by /255.
pub fn load_image(path: &Path, id: &str) -> Result<LocalRegionImage> {
    let img = image::open(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    let gray = img.to_luma8();
    let (w, h) = gray.dimensions();
    let data = gray.as_raw().iter().map(|&v| f64::from(v) / 255.0).collect();
    LocalRegionImage::new(id, w as usize, h as usize, data)
}

/// 8-bit encoding used when writing images.
pub fn image_bytes(img: &LocalRegionImage) -> Vec<u8> {
    img.intensities().iter().map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8).collect()
}

pub fn save_image(path: &Path, img: &LocalRegionImage) -> Result<()> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    image::save_buffer(path, &image_bytes(img), img.width() as u32, img.height() as u32, image::ExtendedColorType::L8)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// PNG encoding of an image, for serving over HTTP.
pub fn encode_png(img: &LocalRegionImage) -> Result<Vec<u8>> {
    let mut out = std::io::Cursor::new(Vec::new());
    image::write_buffer_with_format(
        &mut out,
        &image_bytes(img),
        img.width() as u32,
        img.height() as u32,
        image::ExtendedColorType::L8,
        image::ImageFormat::Png,
    )
    .map_err(|e| Error::Io(e.to_string()))?;
    Ok(out.into_inner())
}
