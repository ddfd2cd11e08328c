//! Fixation records, per-(subject, image) sequences and the dataset index.
//!
//! Raw data are delimiter-separated rows with eight columns, in order:
//! `x, y, duration_ms, fixation_index, subject, colour, image, orientation`.
//! Coordinates are planar and carried in whatever units the eye tracker used.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::BufRead;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A location on the viewing plane.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }
}

impl From<(f64, f64)> for Point {
    fn from((x, y): (f64, f64)) -> Self {
        Point { x, y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColourScheme {
    Normal,
    Abnormal,
    Grayscale,
}

impl ColourScheme {
    pub const ALL: [ColourScheme; 3] = [
        ColourScheme::Normal,
        ColourScheme::Abnormal,
        ColourScheme::Grayscale,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ColourScheme::Normal => "normal",
            ColourScheme::Abnormal => "abnormal",
            ColourScheme::Grayscale => "grayscale",
        }
    }

    /// Four-letter label used in comparison listings ("Norm", "Abno", "Gray").
    pub fn short(self) -> &'static str {
        match self {
            ColourScheme::Normal => "Norm",
            ColourScheme::Abnormal => "Abno",
            ColourScheme::Grayscale => "Gray",
        }
    }

    pub fn is_coloured(self) -> bool {
        !matches!(self, ColourScheme::Grayscale)
    }
}

impl fmt::Display for ColourScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ColourScheme {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "normal" => Ok(ColourScheme::Normal),
            "abnormal" => Ok(ColourScheme::Abnormal),
            "grayscale" => Ok(ColourScheme::Grayscale),
            _ => Err(s.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    Landscape,
    Portrait,
}

impl Orientation {
    pub fn as_str(self) -> &'static str {
        match self {
            Orientation::Landscape => "landscape",
            Orientation::Portrait => "portrait",
        }
    }
}

impl FromStr for Orientation {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "landscape" => Ok(Orientation::Landscape),
            "portrait" => Ok(Orientation::Portrait),
            _ => Err(s.to_string()),
        }
    }
}

/// Subject identifier such as `a5` or `n10`.
///
/// Ordering is natural: the alphabetic prefix compares lexically and a
/// trailing number numerically, so `n2 < n10`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SubjectId(pub String);

impl SubjectId {
    pub fn new(s: impl Into<String>) -> Self {
        SubjectId(s.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    fn split(&self) -> (&str, Option<u64>) {
        let s = self.0.as_str();
        let digits = s.len() - s.trim_end_matches(|c: char| c.is_ascii_digit()).len();
        if digits == 0 || digits > 18 {
            return (s, None);
        }
        let (head, tail) = s.split_at(s.len() - digits);
        (head, tail.parse().ok())
    }
}

impl Ord for SubjectId {
    fn cmp(&self, other: &Self) -> Ordering {
        let (ha, na) = self.split();
        let (hb, nb) = other.split();
        ha.cmp(hb)
            .then(na.cmp(&nb))
            .then_with(|| self.0.cmp(&other.0))
    }
}

impl PartialOrd for SubjectId {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for SubjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for SubjectId {
    fn from(s: &str) -> Self {
        SubjectId(s.to_string())
    }
}

/// One row of the raw fixation table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixationRecord {
    pub x: f64,
    pub y: f64,
    pub duration_ms: f64,
    pub fixation_index: u32,
    pub subject_id: SubjectId,
    pub colour_scheme: ColourScheme,
    pub image_id: u32,
    pub orientation: Orientation,
}

impl FixationRecord {
    pub fn point(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Delimiter {
    #[default]
    Comma,
    Whitespace,
}

/// How raw fixation text is laid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct IngestFormat {
    pub delimiter: Delimiter,
    pub header: bool,
}

const COLUMNS: [&str; 8] = [
    "x",
    "y",
    "duration_ms",
    "fixation_index",
    "subject",
    "colour",
    "image",
    "orientation",
];

fn parse_real(line: usize, field: &'static str, raw: &str) -> Result<f64> {
    let v: f64 = raw.parse().map_err(|_| Error::Malformed {
        line,
        field,
        message: format!("`{raw}` is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Malformed {
            line,
            field,
            message: format!("`{raw}` is not finite"),
        });
    }
    Ok(v)
}

fn parse_positive_int(line: usize, field: &'static str, raw: &str) -> Result<u32> {
    match raw.parse::<u32>() {
        Ok(v) if v >= 1 => Ok(v),
        _ => Err(Error::Malformed {
            line,
            field,
            message: format!("`{raw}` is not a positive integer"),
        }),
    }
}

/// Parses a single data row. `line` is 1-based and only used for errors.
pub fn parse_row(row: &str, line: usize, delimiter: Delimiter) -> Result<FixationRecord> {
    let fields: Vec<&str> = match delimiter {
        Delimiter::Comma => row.split(',').map(str::trim).collect(),
        Delimiter::Whitespace => row.split_whitespace().collect(),
    };
    if fields.len() != COLUMNS.len() {
        return Err(Error::Malformed {
            line,
            field: "row",
            message: format!("expected {} columns, found {}", COLUMNS.len(), fields.len()),
        });
    }
    let x = parse_real(line, COLUMNS[0], fields[0])?;
    let y = parse_real(line, COLUMNS[1], fields[1])?;
    let duration_ms = parse_real(line, COLUMNS[2], fields[2])?;
    if duration_ms <= 0.0 {
        return Err(Error::NonPositiveDuration { line });
    }
    let fixation_index = parse_positive_int(line, COLUMNS[3], fields[3])?;
    if fields[4].is_empty() {
        return Err(Error::Malformed {
            line,
            field: COLUMNS[4],
            message: "empty subject identifier".into(),
        });
    }
    let subject_id = SubjectId::new(fields[4]);
    let colour_scheme = fields[5].parse().map_err(|token| Error::UnknownToken {
        line,
        kind: "colour",
        token,
    })?;
    let image_id = parse_positive_int(line, COLUMNS[6], fields[6])?;
    let orientation = fields[7].parse().map_err(|token| Error::UnknownToken {
        line,
        kind: "orientation",
        token,
    })?;
    Ok(FixationRecord {
        x,
        y,
        duration_ms,
        fixation_index,
        subject_id,
        colour_scheme,
        image_id,
        orientation,
    })
}

/// Parses a whole text stream. Blank lines and lines starting with `#` are skipped.
pub fn parse_records<R: BufRead>(reader: R, format: IngestFormat) -> Result<Vec<FixationRecord>> {
    let mut records = Vec::new();
    let mut header_pending = format.header;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        if header_pending {
            header_pending = false;
            continue;
        }
        records.push(parse_row(trimmed, i + 1, format.delimiter)?);
    }
    Ok(records)
}

pub fn parse_str(text: &str, format: IngestFormat) -> Result<Vec<FixationRecord>> {
    parse_records(text.as_bytes(), format)
}

/// Formats a record as one row of the ingestion format.
pub fn format_record(record: &FixationRecord, delimiter: Delimiter) -> String {
    let sep = match delimiter {
        Delimiter::Comma => ", ",
        Delimiter::Whitespace => " ",
    };
    [
        record.x.to_string(),
        record.y.to_string(),
        record.duration_ms.to_string(),
        record.fixation_index.to_string(),
        record.subject_id.to_string(),
        record.colour_scheme.to_string(),
        record.image_id.to_string(),
        record.orientation.as_str().to_string(),
    ]
    .join(sep)
}

/// Writes records in the ingestion format, optionally preceded by a header line.
pub fn write_records<W: std::io::Write>(
    mut out: W,
    records: &[FixationRecord],
    format: IngestFormat,
) -> std::io::Result<()> {
    if format.header {
        let sep = match format.delimiter {
            Delimiter::Comma => ", ",
            Delimiter::Whitespace => " ",
        };
        writeln!(out, "{}", COLUMNS.join(sep))?;
    }
    for r in records {
        writeln!(out, "{}", format_record(r, format.delimiter))?;
    }
    Ok(())
}

/// Ordered fixations of one subject viewing one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixationSequence {
    pub subject_id: SubjectId,
    pub image_id: u32,
    pub colour_scheme: ColourScheme,
    pub orientation: Orientation,
    pub points: Vec<Point>,
    pub durations: Vec<f64>,
    /// Original fixation indices, strictly increasing.
    pub indices: Vec<u32>,
}

impl FixationSequence {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn validate(&self) -> Result<()> {
        if self.points.is_empty() {
            return Err(Error::InvalidArgument(format!(
                "empty sequence for subject {} image {}",
                self.subject_id, self.image_id
            )));
        }
        if self.points.len() != self.durations.len() || self.points.len() != self.indices.len() {
            return Err(Error::InvalidArgument(format!(
                "ragged sequence for subject {} image {}",
                self.subject_id, self.image_id
            )));
        }
        if let Some(w) = self.indices.windows(2).find(|w| w[0] >= w[1]) {
            return Err(Error::DuplicateFixation {
                subject: self.subject_id.to_string(),
                image: self.image_id,
                index: w[1],
            });
        }
        if self.durations.iter().any(|d| !(*d > 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "non-positive duration for subject {} image {}",
                self.subject_id, self.image_id
            )));
        }
        Ok(())
    }

    pub fn records(&self) -> impl Iterator<Item = FixationRecord> + '_ {
        self.points
            .iter()
            .zip(&self.durations)
            .zip(&self.indices)
            .map(move |((p, d), i)| FixationRecord {
                x: p.x,
                y: p.y,
                duration_ms: *d,
                fixation_index: *i,
                subject_id: self.subject_id.clone(),
                colour_scheme: self.colour_scheme,
                image_id: self.image_id,
                orientation: self.orientation,
            })
    }
}

/// All sequences, keyed by (image, subject).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    sequences: BTreeMap<(u32, SubjectId), FixationSequence>,
}

impl Dataset {
    /// Builds a dataset from already-grouped sequences.
    pub fn from_sequences(sequences: impl IntoIterator<Item = FixationSequence>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for s in sequences {
            s.validate()?;
            let key = (s.image_id, s.subject_id.clone());
            if map.contains_key(&key) {
                return Err(Error::InvalidArgument(format!(
                    "two sequences for subject {} on image {}",
                    key.1, key.0
                )));
            }
            map.insert(key, s);
        }
        Ok(Dataset { sequences: map })
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }

    /// Number of sequences.
    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn fixation_count(&self) -> usize {
        self.sequences.values().map(FixationSequence::len).sum()
    }

    /// Sequences ordered by image, then subject.
    pub fn sequences(&self) -> impl Iterator<Item = &FixationSequence> {
        self.sequences.values()
    }

    pub fn get(&self, image_id: u32, subject: &SubjectId) -> Option<&FixationSequence> {
        self.sequences.get(&(image_id, subject.clone()))
    }

    /// Sequences for one (image, scheme), ordered by subject.
    pub fn for_image(&self, image_id: u32, scheme: ColourScheme) -> Vec<&FixationSequence> {
        self.sequences
            .range((image_id, SubjectId::new(""))..)
            .take_while(|((img, _), _)| *img == image_id)
            .map(|(_, s)| s)
            .filter(|s| s.colour_scheme == scheme)
            .collect()
    }

    pub fn subjects_for(&self, image_id: u32, scheme: ColourScheme) -> Vec<&SubjectId> {
        self.for_image(image_id, scheme)
            .into_iter()
            .map(|s| &s.subject_id)
            .collect()
    }

    pub fn by_subject<'a>(&'a self, subject: &'a SubjectId) -> impl Iterator<Item = &'a FixationSequence> + 'a {
        self.sequences.values().filter(move |s| &s.subject_id == subject)
    }

    pub fn subjects(&self) -> BTreeSet<&SubjectId> {
        self.sequences.values().map(|s| &s.subject_id).collect()
    }

    /// Distinct (image, scheme) pairs present, in canonical order.
    pub fn image_schemes(&self) -> BTreeSet<(u32, ColourScheme)> {
        self.sequences
            .values()
            .map(|s| (s.image_id, s.colour_scheme))
            .collect()
    }

    pub fn schemes(&self) -> BTreeSet<ColourScheme> {
        self.sequences.values().map(|s| s.colour_scheme).collect()
    }

    /// Flattens back to records in canonical order.
    pub fn records(&self) -> Vec<FixationRecord> {
        self.canonical_order().flat_map(|s| s.records()).collect()
    }

    /// Sequences in the canonical layout order: image, scheme, subject.
    pub fn canonical_order(&self) -> impl Iterator<Item = &FixationSequence> {
        let mut v: Vec<&FixationSequence> = self.sequences.values().collect();
        v.sort_by(|a, b| {
            (a.image_id, a.colour_scheme, &a.subject_id).cmp(&(b.image_id, b.colour_scheme, &b.subject_id))
        });
        v.into_iter()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&CanonicalDataset::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: CanonicalDataset = serde_json::from_str(text)?;
        c.try_into()
    }
}

/// Partitions records by (subject, image), sorting each group by fixation index.
pub fn group_sequences(records: &[FixationRecord]) -> Result<Dataset> {
    let mut groups: BTreeMap<(u32, SubjectId), Vec<&FixationRecord>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.image_id, r.subject_id.clone()))
            .or_default()
            .push(r);
    }
    let mut sequences = Vec::with_capacity(groups.len());
    for ((image_id, subject_id), mut rows) in groups {
        rows.sort_by_key(|r| r.fixation_index);
        if let Some(w) = rows.windows(2).find(|w| w[0].fixation_index == w[1].fixation_index) {
            return Err(Error::DuplicateFixation {
                subject: subject_id.to_string(),
                image: image_id,
                index: w[0].fixation_index,
            });
        }
        let scheme = rows[0].colour_scheme;
        if rows.iter().any(|r| r.colour_scheme != scheme) {
            return Err(Error::InvalidArgument(format!(
                "subject {subject_id} on image {image_id} has rows under more than one colour scheme"
            )));
        }
        sequences.push(FixationSequence {
            subject_id,
            image_id,
            colour_scheme: scheme,
            orientation: rows[0].orientation,
            points: rows.iter().map(|r| r.point()).collect(),
            durations: rows.iter().map(|r| r.duration_ms).collect(),
            indices: rows.iter().map(|r| r.fixation_index).collect(),
        });
    }
    Dataset::from_sequences(sequences)
}

/// Leave-one-subject-out split for one (image, scheme).
#[derive(Debug, Clone)]
pub struct Split<'a> {
    pub train: Vec<&'a FixationSequence>,
    pub test: &'a FixationSequence,
}

pub fn split_train_test<'a>(
    dataset: &'a Dataset,
    image_id: u32,
    scheme: ColourScheme,
    test_subject: &SubjectId,
) -> Result<Split<'a>> {
    let all = dataset.for_image(image_id, scheme);
    let test = all
        .iter()
        .copied()
        .find(|s| &s.subject_id == test_subject)
        .ok_or_else(|| Error::MissingSubject {
            subject: test_subject.to_string(),
            image: image_id,
            scheme: scheme.to_string(),
        })?;
    let train = all
        .into_iter()
        .filter(|s| &s.subject_id != test_subject)
        .collect();
    Ok(Split { train, test })
}

// Canonical JSON layout: images -> schemes -> subjects -> fixations.

#[derive(Debug, Serialize, Deserialize)]
struct CanonicalDataset {
    images: Vec<CanonicalImage>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CanonicalImage {
    image_id: u32,
    schemes: Vec<CanonicalScheme>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CanonicalScheme {
    scheme: ColourScheme,
    subjects: Vec<CanonicalSubject>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CanonicalSubject {
    subject_id: SubjectId,
    orientation: Orientation,
    fixations: Vec<CanonicalFixation>,
}

#[derive(Debug, Serialize, Deserialize)]
struct CanonicalFixation {
    index: u32,
    x: f64,
    y: f64,
    duration_ms: f64,
}

impl From<&Dataset> for CanonicalDataset {
    fn from(d: &Dataset) -> Self {
        let mut images: Vec<CanonicalImage> = Vec::new();
        for s in d.canonical_order() {
            if images.last().map(|i| i.image_id) != Some(s.image_id) {
                images.push(CanonicalImage {
                    image_id: s.image_id,
                    schemes: Vec::new(),
                });
            }
            let img = images.last_mut().expect("pushed above");
            if img.schemes.last().map(|c| c.scheme) != Some(s.colour_scheme) {
                img.schemes.push(CanonicalScheme {
                    scheme: s.colour_scheme,
                    subjects: Vec::new(),
                });
            }
            let sch = img.schemes.last_mut().expect("pushed above");
            sch.subjects.push(CanonicalSubject {
                subject_id: s.subject_id.clone(),
                orientation: s.orientation,
                fixations: s
                    .points
                    .iter()
                    .zip(&s.durations)
                    .zip(&s.indices)
                    .map(|((p, d), i)| CanonicalFixation {
                        index: *i,
                        x: p.x,
                        y: p.y,
                        duration_ms: *d,
                    })
                    .collect(),
            });
        }
        CanonicalDataset { images }
    }
}

impl TryFrom<CanonicalDataset> for Dataset {
    type Error = Error;

    fn try_from(c: CanonicalDataset) -> Result<Self> {
        let mut seqs = Vec::new();
        for img in c.images {
            for sch in img.schemes {
                for sub in sch.subjects {
                    seqs.push(FixationSequence {
                        subject_id: sub.subject_id,
                        image_id: img.image_id,
                        colour_scheme: sch.scheme,
                        orientation: sub.orientation,
                        points: sub.fixations.iter().map(|f| Point::new(f.x, f.y)).collect(),
                        durations: sub.fixations.iter().map(|f| f.duration_ms).collect(),
                        indices: sub.fixations.iter().map(|f| f.index).collect(),
                    });
                }
            }
        }
        Dataset::from_sequences(seqs)
    }
}
