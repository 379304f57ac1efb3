//! Point cloud reading and writing: PLY (ascii and binary little-endian) and
//! plain XYZ text, plus the colored PLY used to visualise classifications.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::Vec3;

/// Per-point class. Raw label 3 (smooth edge) is folded into non-edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[repr(u8)]
pub enum ClassCode {
    NonEdge = 0,
    SharpEdge = 1,
    Boundary = 2,
}

impl ClassCode {
    pub const ALL: [ClassCode; 3] = [ClassCode::NonEdge, ClassCode::SharpEdge, ClassCode::Boundary];

    /// Maps a raw on-disk label to a class.
    pub fn from_raw(raw: i64) -> Option<ClassCode> {
        match raw {
            0 | 3 => Some(ClassCode::NonEdge),
            1 => Some(ClassCode::SharpEdge),
            2 => Some(ClassCode::Boundary),
            _ => None,
        }
    }

    pub fn from_index(i: usize) -> Option<ClassCode> {
        Self::ALL.get(i).copied()
    }

    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            ClassCode::NonEdge => "non-edge",
            ClassCode::SharpEdge => "sharp-edge",
            ClassCode::Boundary => "boundary",
        }
    }

    /// Display color: grey, red for sharp edges, green for boundaries.
    pub fn color(self) -> [u8; 3] {
        match self {
            ClassCode::NonEdge => [128, 128, 128],
            ClassCode::SharpEdge => [255, 0, 0],
            ClassCode::Boundary => [0, 255, 0],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    pub points: Vec<Vec3>,
    pub labels: Option<Vec<ClassCode>>,
}

impl PointCloud {
    pub fn new(points: Vec<Vec3>, labels: Option<Vec<ClassCode>>) -> Result<Self> {
        let cloud = PointCloud { points, labels };
        cloud.validate()?;
        Ok(cloud)
    }

    pub fn unlabeled(points: Vec<Vec3>) -> Result<Self> {
        Self::new(points, None)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::InvalidCloud("cloud has no points".into()));
        }
        if let Some(i) = self.points.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidCloud(format!("point {i} has a non-finite coordinate")));
        }
        if let Some(labels) = &self.labels {
            if labels.len() != self.points.len() {
                return Err(Error::InvalidCloud(format!(
                    "{} labels for {} points",
                    labels.len(),
                    self.points.len()
                )));
            }
        }
        Ok(())
    }

    /// Counts per class, indexed by class code.
    pub fn class_counts(&self) -> [usize; 3] {
        let mut counts = [0; 3];
        if let Some(labels) = &self.labels {
            for l in labels {
                counts[l.index()] += 1;
            }
        }
        counts
    }

    /// Appends another cloud. Labels are kept only if both sides have them.
    pub fn extend(&mut self, other: &PointCloud) {
        self.labels = match (self.labels.take(), &other.labels) {
            (Some(mut a), Some(b)) => {
                a.extend_from_slice(b);
                Some(a)
            }
            _ => None,
        };
        self.points.extend_from_slice(&other.points);
    }
}

/// Writes `bytes` to a sibling temporary file and renames it over `path`, so
/// readers never observe a partially written file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let file_name = path
        .file_name()
        .ok_or_else(|| Error::Config(format!("not a file path: {}", path.display())))?
        .to_string_lossy();
    let tmp = dir.join(format!(".{file_name}.tmp{}", std::process::id()));
    let result = (|| {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if let Err(e) = result {
        let _ = fs::remove_file(&tmp);
        return Err(Error::io(path, e));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// PLY
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlyFormat {
    Ascii,
    BinaryLittleEndian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ScalarType {
    I8,
    U8,
    I16,
    U16,
    I32,
    U32,
    F32,
    F64,
}

impl ScalarType {
    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "char" | "int8" => ScalarType::I8,
            "uchar" | "uint8" => ScalarType::U8,
            "short" | "int16" => ScalarType::I16,
            "ushort" | "uint16" => ScalarType::U16,
            "int" | "int32" => ScalarType::I32,
            "uint" | "uint32" => ScalarType::U32,
            "float" | "float32" => ScalarType::F32,
            "double" | "float64" => ScalarType::F64,
            _ => return None,
        })
    }

    fn size(self) -> usize {
        match self {
            ScalarType::I8 | ScalarType::U8 => 1,
            ScalarType::I16 | ScalarType::U16 => 2,
            ScalarType::I32 | ScalarType::U32 | ScalarType::F32 => 4,
            ScalarType::F64 => 8,
        }
    }

    fn is_float(self) -> bool {
        matches!(self, ScalarType::F32 | ScalarType::F64)
    }

    fn read_le(self, b: &[u8]) -> f64 {
        match self {
            ScalarType::I8 => b[0] as i8 as f64,
            ScalarType::U8 => b[0] as f64,
            ScalarType::I16 => i16::from_le_bytes([b[0], b[1]]) as f64,
            ScalarType::U16 => u16::from_le_bytes([b[0], b[1]]) as f64,
            ScalarType::I32 => i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            ScalarType::U32 => u32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            ScalarType::F32 => f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64,
            ScalarType::F64 => f64::from_le_bytes(b[..8].try_into().unwrap()),
        }
    }
}

#[derive(Debug, Clone)]
enum Property {
    Scalar { name: String, ty: ScalarType },
    List { count: ScalarType, item: ScalarType },
}

#[derive(Debug, Clone)]
struct Element {
    name: String,
    count: usize,
    properties: Vec<Property>,
}

#[derive(Debug)]
struct Header {
    format: PlyFormat,
    elements: Vec<Element>,
    body_offset: usize,
    /// Number of header lines, so ascii body errors can report file lines.
    header_lines: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header> {
    let mut offset = 0usize;
    let mut line_no = 0usize;
    let mut format = None;
    let mut elements: Vec<Element> = Vec::new();

    loop {
        let rest = &bytes[offset..];
        let Some(end) = rest.iter().position(|&b| b == b'\n') else {
            return Err(Error::parse_line(line_no + 1, "header is not terminated by end_header"));
        };
        line_no += 1;
        let raw = &rest[..end];
        offset += end + 1;
        let line = std::str::from_utf8(raw)
            .map_err(|_| Error::parse_line(line_no, "header line is not valid text"))?
            .trim_end_matches('\r')
            .trim();

        if line_no == 1 {
            if line != "ply" {
                return Err(Error::parse_line(1, "missing 'ply' magic"));
            }
            continue;
        }
        let mut tok = line.split_whitespace();
        match tok.next() {
            None => continue,
            Some("comment") | Some("obj_info") => continue,
            Some("format") => {
                format = Some(match tok.next() {
                    Some("ascii") => PlyFormat::Ascii,
                    Some("binary_little_endian") => PlyFormat::BinaryLittleEndian,
                    Some("binary_big_endian") => {
                        return Err(Error::parse_line(
                            line_no,
                            "binary_big_endian PLY is not supported; convert to little-endian or ascii",
                        ))
                    }
                    other => {
                        return Err(Error::parse_line(
                            line_no,
                            format!("unknown format {:?}", other.unwrap_or("")),
                        ))
                    }
                });
            }
            Some("element") => {
                let name = tok
                    .next()
                    .ok_or_else(|| Error::parse_line(line_no, "element without a name"))?;
                let count = tok
                    .next()
                    .and_then(|c| c.parse::<usize>().ok())
                    .ok_or_else(|| Error::parse_line(line_no, "element count is not a non-negative integer"))?;
                elements.push(Element {
                    name: name.to_string(),
                    count,
                    properties: Vec::new(),
                });
            }
            Some("property") => {
                let element = elements
                    .last_mut()
                    .ok_or_else(|| Error::parse_line(line_no, "property before any element"))?;
                let first = tok
                    .next()
                    .ok_or_else(|| Error::parse_line(line_no, "property without a type"))?;
                let bad_type = |t: &str| Error::parse_line(line_no, format!("unknown property type '{t}'"));
                if first == "list" {
                    let ct = tok.next().unwrap_or("");
                    let it = tok.next().unwrap_or("");
                    let count = ScalarType::parse(ct).ok_or_else(|| bad_type(ct))?;
                    let item = ScalarType::parse(it).ok_or_else(|| bad_type(it))?;
                    if count.is_float() {
                        return Err(Error::parse_line(line_no, "list count type must be an integer"));
                    }
                    tok.next()
                        .ok_or_else(|| Error::parse_line(line_no, "list property without a name"))?;
                    element.properties.push(Property::List { count, item });
                } else {
                    let ty = ScalarType::parse(first).ok_or_else(|| bad_type(first))?;
                    let name = tok
                        .next()
                        .ok_or_else(|| Error::parse_line(line_no, "property without a name"))?;
                    element.properties.push(Property::Scalar {
                        name: name.to_string(),
                        ty,
                    });
                }
            }
            Some("end_header") => break,
            Some(other) => {
                return Err(Error::parse_line(line_no, format!("unexpected header keyword '{other}'")));
            }
        }
    }

    let format = format.ok_or_else(|| Error::parse_line(line_no, "header has no format line"))?;
    Ok(Header {
        format,
        elements,
        body_offset: offset,
        header_lines: line_no,
    })
}

/// Column positions of the properties this reader cares about.
struct VertexLayout {
    xyz: [usize; 3],
    label: Option<usize>,
}

fn vertex_layout(element: &Element, header_lines: usize) -> Result<VertexLayout> {
    let find = |wanted: &str| {
        element.properties.iter().position(|p| match p {
            Property::Scalar { name, .. } => name == wanted,
            _ => false,
        })
    };
    let mut xyz = [0usize; 3];
    for (slot, axis) in xyz.iter_mut().zip(["x", "y", "z"]) {
        *slot = find(axis).ok_or_else(|| {
            Error::parse_line(header_lines, format!("vertex element has no '{axis}' property"))
        })?;
    }
    let label = element.properties.iter().position(|p| match p {
        Property::Scalar { name, .. } => {
            name.eq_ignore_ascii_case("label") || name.eq_ignore_ascii_case("class")
        }
        _ => false,
    });
    Ok(VertexLayout { xyz, label })
}

fn label_from_value(v: f64, location: impl Fn() -> Error) -> Result<ClassCode> {
    if v.fract() != 0.0 {
        return Err(location());
    }
    ClassCode::from_raw(v as i64).ok_or_else(location)
}

/// Parses PLY bytes into a point cloud.
pub fn parse_ply(bytes: &[u8]) -> Result<PointCloud> {
    let header = parse_header(bytes)?;
    let vertex_pos = header
        .elements
        .iter()
        .position(|e| e.name == "vertex")
        .ok_or_else(|| Error::parse_line(header.header_lines, "no vertex element"))?;
    let layout = vertex_layout(&header.elements[vertex_pos], header.header_lines)?;

    let body = &bytes[header.body_offset..];
    let (points, labels) = match header.format {
        PlyFormat::Ascii => parse_ascii_body(body, &header, vertex_pos, &layout)?,
        PlyFormat::BinaryLittleEndian => parse_binary_body(body, &header, vertex_pos, &layout)?,
    };
    PointCloud::new(points, labels)
}

type Body = (Vec<Vec3>, Option<Vec<ClassCode>>);

fn parse_ascii_body(body: &[u8], header: &Header, vertex_pos: usize, layout: &VertexLayout) -> Result<Body> {
    let text = std::str::from_utf8(body)
        .map_err(|e| Error::parse_byte((header.body_offset + e.valid_up_to()) as u64, "ascii body is not valid text"))?;
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (header.header_lines + i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty());
    let last_line = header.header_lines + text.lines().count();

    let mut points = Vec::new();
    let mut labels = layout.label.map(|_| Vec::new());

    for (ei, element) in header.elements.iter().enumerate() {
        for _ in 0..element.count {
            let (line_no, line) = lines
                .next()
                .ok_or_else(|| Error::parse_line(last_line + 1, format!("unexpected end of file in element '{}'", element.name)))?;
            if ei != vertex_pos {
                continue;
            }
            let mut values = Vec::with_capacity(element.properties.len());
            let mut tokens = line.split_whitespace();
            for prop in &element.properties {
                let mut next = || -> Result<f64> {
                    let t = tokens
                        .next()
                        .ok_or_else(|| Error::parse_line(line_no, "too few values on vertex line"))?;
                    t.parse::<f64>()
                        .map_err(|_| Error::parse_line(line_no, format!("'{t}' is not a number")))
                };
                match prop {
                    Property::Scalar { .. } => values.push(next()?),
                    Property::List { .. } => {
                        let n = next()?;
                        if n < 0.0 || n.fract() != 0.0 {
                            return Err(Error::parse_line(line_no, "invalid list length"));
                        }
                        for _ in 0..n as usize {
                            next()?;
                        }
                        values.push(f64::NAN);
                    }
                }
            }
            points.push(Vec3::new(values[layout.xyz[0]], values[layout.xyz[1]], values[layout.xyz[2]]));
            if let (Some(labels), Some(li)) = (labels.as_mut(), layout.label) {
                labels.push(label_from_value(values[li], || {
                    Error::parse_line(line_no, format!("invalid class label {}", values[li]))
                })?);
            }
        }
    }
    Ok((points, labels))
}

fn parse_binary_body(body: &[u8], header: &Header, vertex_pos: usize, layout: &VertexLayout) -> Result<Body> {
    let base = header.body_offset as u64;
    let mut pos = 0usize;
    let take = |pos: &mut usize, n: usize| -> Result<&[u8]> {
        if *pos + n > body.len() {
            return Err(Error::parse_byte(base + body.len() as u64, "truncated binary body"));
        }
        let s = &body[*pos..*pos + n];
        *pos += n;
        Ok(s)
    };

    let mut points = Vec::new();
    let mut labels = layout.label.map(|_| Vec::new());
    let mut values = Vec::new();

    for (ei, element) in header.elements.iter().enumerate() {
        let is_vertex = ei == vertex_pos;
        if is_vertex {
            points.reserve(element.count);
        }
        for _ in 0..element.count {
            values.clear();
            let record_start = base + pos as u64;
            for prop in &element.properties {
                match *prop {
                    Property::Scalar { ty, .. } => {
                        let b = take(&mut pos, ty.size())?;
                        values.push(ty.read_le(b));
                    }
                    Property::List { count, item } => {
                        let n = count.read_le(take(&mut pos, count.size())?);
                        if n < 0.0 {
                            return Err(Error::parse_byte(record_start, "negative list length"));
                        }
                        take(&mut pos, n as usize * item.size())?;
                        values.push(f64::NAN);
                    }
                }
            }
            if is_vertex {
                points.push(Vec3::new(values[layout.xyz[0]], values[layout.xyz[1]], values[layout.xyz[2]]));
                if let (Some(labels), Some(li)) = (labels.as_mut(), layout.label) {
                    let v = values[li];
                    labels.push(label_from_value(v, || {
                        Error::parse_byte(record_start, format!("invalid class label {v}"))
                    })?);
                }
            }
        }
    }
    Ok((points, labels))
}

pub fn read_ply(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_ply(&bytes)
}

/// Serializes a cloud as PLY with double-precision coordinates and an
/// optional uchar `label` property.
pub fn encode_ply(cloud: &PointCloud, format: PlyFormat) -> Vec<u8> {
    encode_vertices(cloud, None, format)
}

fn encode_vertices(cloud: &PointCloud, colors: Option<&[ClassCode]>, format: PlyFormat) -> Vec<u8> {
    let labels: Option<&[ClassCode]> = colors.or(cloud.labels.as_deref());
    let mut out = Vec::with_capacity(64 + cloud.len() * 32);
    let format_name = match format {
        PlyFormat::Ascii => "ascii",
        PlyFormat::BinaryLittleEndian => "binary_little_endian",
    };
    let mut header = format!("ply\nformat {format_name} 1.0\nelement vertex {}\n", cloud.len());
    header.push_str("property double x\nproperty double y\nproperty double z\n");
    if colors.is_some() {
        header.push_str("property uchar red\nproperty uchar green\nproperty uchar blue\n");
    }
    if labels.is_some() {
        header.push_str("property uchar label\n");
    }
    header.push_str("end_header\n");
    out.extend_from_slice(header.as_bytes());

    for (i, p) in cloud.points.iter().enumerate() {
        let class = labels.map(|l| l[i]);
        let color = colors.map(|c| c[i].color());
        match format {
            PlyFormat::Ascii => {
                let mut line = format!("{:?} {:?} {:?}", p.x(), p.y(), p.z());
                if let Some([r, g, b]) = color {
                    line.push_str(&format!(" {r} {g} {b}"));
                }
                if let Some(c) = class {
                    line.push_str(&format!(" {}", c as u8));
                }
                line.push('\n');
                out.extend_from_slice(line.as_bytes());
            }
            PlyFormat::BinaryLittleEndian => {
                for v in p.0 {
                    out.extend_from_slice(&v.to_le_bytes());
                }
                if let Some(rgb) = color {
                    out.extend_from_slice(&rgb);
                }
                if let Some(c) = class {
                    out.push(c as u8);
                }
            }
        }
    }
    out
}

pub fn write_ply(cloud: &PointCloud, path: impl AsRef<Path>, format: PlyFormat) -> Result<()> {
    write_atomic(path.as_ref(), &encode_ply(cloud, format))
}

/// Writes predictions as a binary PLY with x,y,z, red,green,blue, label.
pub fn write_classified_ply(cloud: &PointCloud, predictions: &[ClassCode], path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), &encode_classified_ply(cloud, predictions)?)
}

pub fn encode_classified_ply(cloud: &PointCloud, predictions: &[ClassCode]) -> Result<Vec<u8>> {
    if predictions.len() != cloud.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} points",
            predictions.len(),
            cloud.len()
        )));
    }
    Ok(encode_vertices(cloud, Some(predictions), PlyFormat::BinaryLittleEndian))
}

// ---------------------------------------------------------------------------
// XYZ
// ---------------------------------------------------------------------------

pub fn parse_xyz(text: &str) -> Result<PointCloud> {
    let mut points = Vec::new();
    let mut labels = Vec::new();
    let mut columns: Option<usize> = None;

    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() != 3 && tokens.len() != 4 {
            return Err(Error::parse_line(
                line_no,
                format!("expected 3 or 4 columns, found {}", tokens.len()),
            ));
        }
        match columns {
            None => columns = Some(tokens.len()),
            Some(c) if c != tokens.len() => {
                return Err(Error::parse_line(
                    line_no,
                    format!("inconsistent column count: {} after {c}", tokens.len()),
                ))
            }
            _ => {}
        }
        let mut xyz = [0.0; 3];
        for (slot, t) in xyz.iter_mut().zip(&tokens) {
            *slot = t
                .parse::<f64>()
                .map_err(|_| Error::parse_line(line_no, format!("'{t}' is not a number")))?;
        }
        points.push(Vec3(xyz));
        if tokens.len() == 4 {
            let raw = tokens[3]
                .parse::<i64>()
                .map_err(|_| Error::parse_line(line_no, format!("'{}' is not an integer label", tokens[3])))?;
            labels.push(
                ClassCode::from_raw(raw)
                    .ok_or_else(|| Error::parse_line(line_no, format!("invalid class label {raw}")))?,
            );
        }
    }
    if points.is_empty() {
        return Err(Error::parse_line(text.lines().count().max(1), "no points"));
    }
    let labels = (columns == Some(4)).then_some(labels);
    PointCloud::new(points, labels)
}

pub fn read_xyz(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_xyz(&text)
}

pub fn encode_xyz(cloud: &PointCloud) -> String {
    let mut out = String::with_capacity(cloud.len() * 40);
    for (i, p) in cloud.points.iter().enumerate() {
        out.push_str(&format!("{:?} {:?} {:?}", p.x(), p.y(), p.z()));
        if let Some(l) = &cloud.labels {
            out.push_str(&format!(" {}", l[i] as u8));
        }
        out.push('\n');
    }
    out
}

/// Reads a cloud, choosing the parser from the file extension
/// (`.ply`, otherwise XYZ text).
pub fn read_cloud(path: impl AsRef<Path>) -> Result<PointCloud> {
    let path = path.as_ref();
    let is_ply = path
        .extension()
        .map(|e| e.eq_ignore_ascii_case("ply"))
        .unwrap_or(false);
    if is_ply {
        read_ply(path)
    } else {
        read_xyz(path)
    }
}
