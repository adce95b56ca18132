use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

const HEADER: &str = "fedkan-parameters v1";

/// Name, shape and offset of one tensor inside a [`ParameterVector`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl SegmentSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn describe(&self) -> String {
        format!("{}{:?}", self.name, self.shape)
    }
}

/// Flat serialization of every trainable scalar of a model, split into
/// named segments in canonical (layer-ascending) order. This is the unit a
/// client sends to the server and the server broadcasts back.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector {
    layout: Vec<SegmentSpec>,
    values: Vec<f64>,
}

impl ParameterVector {
    /// Builds a vector from `(name, shape, values)` segments, assigning offsets.
    pub fn from_segments<I>(segments: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, Vec<usize>, Vec<f64>)>,
    {
        let mut layout = Vec::new();
        let mut values = Vec::new();
        for (name, shape, data) in segments {
            let spec = SegmentSpec {
                name,
                shape,
                offset: values.len(),
            };
            if spec.len() != data.len() {
                return Err(Error::Contract(format!(
                    "segment {} has shape {:?} but {} values",
                    spec.name,
                    spec.shape,
                    data.len()
                )));
            }
            if layout.iter().any(|s: &SegmentSpec| s.name == spec.name) {
                return Err(Error::Contract(format!("duplicate segment name {}", spec.name)));
            }
            values.extend(data);
            layout.push(spec);
        }
        Ok(ParameterVector { layout, values })
    }

    /// Same layout as `self` with the given flat values.
    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        if values.len() != self.values.len() {
            return Err(Error::Contract(format!(
                "parameter vector of length {} given {} values",
                self.values.len(),
                values.len()
            )));
        }
        Ok(ParameterVector {
            layout: self.layout.clone(),
            values,
        })
    }

    pub fn layout(&self) -> &[SegmentSpec] {
        &self.layout
    }

    pub fn total_len(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn segments(&self) -> impl Iterator<Item = (&SegmentSpec, &[f64])> {
        self.layout
            .iter()
            .map(move |s| (s, &self.values[s.offset..s.offset + s.len()]))
    }

    pub fn segment(&self, name: &str) -> Option<&[f64]> {
        self.segments().find(|(s, _)| s.name == name).map(|(_, v)| v)
    }

    pub fn segment_mut(&mut self, name: &str) -> Option<&mut [f64]> {
        let spec = self.layout.iter().find(|s| s.name == name)?;
        let range = spec.offset..spec.offset + spec.len();
        Some(&mut self.values[range])
    }

    /// Errors unless `other` has exactly the same segment names and shapes.
    pub fn check_compatible(&self, other: &ParameterVector) -> Result<()> {
        check_layouts(&self.layout, &other.layout)
    }

    /// Text form: header, config hash, segment table, one value per line.
    pub fn to_text(&self, config_hash: &str) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{HEADER}");
        let _ = writeln!(out, "config_hash {config_hash}");
        let _ = writeln!(out, "segments {}", self.layout.len());
        for s in &self.layout {
            let shape: Vec<String> = s.shape.iter().map(usize::to_string).collect();
            let _ = writeln!(out, "{} {} {}", s.name, shape.join("x"), s.offset);
        }
        let _ = writeln!(out, "values {}", self.values.len());
        for v in &self.values {
            let _ = writeln!(out, "{v:?}");
        }
        out
    }

    /// Parses [`ParameterVector::to_text`] output, returning the vector and its config hash.
    pub fn from_text(text: &str) -> Result<(Self, String)> {
        let mut lines = text.lines();
        let mut next = |what: &str| lines.next().ok_or_else(|| Error::Format(format!("missing {what}")));

        if next("header")? != HEADER {
            return Err(Error::Format(format!("expected header `{HEADER}`")));
        }
        let hash = keyed(next("config hash")?, "config_hash")?.to_string();
        let n_segments: usize = parse_num(keyed(next("segment count")?, "segments")?)?;
        let mut layout = Vec::with_capacity(n_segments);
        let mut expected_offset = 0;
        for _ in 0..n_segments {
            let line = next("segment entry")?;
            let parts: Vec<&str> = line.split(' ').collect();
            let [name, shape, offset] = parts[..] else {
                return Err(Error::Format(format!("bad segment entry `{line}`")));
            };
            let shape = shape.split('x').map(parse_num).collect::<Result<Vec<usize>>>()?;
            let offset: usize = parse_num(offset)?;
            if offset != expected_offset {
                return Err(Error::Format(format!(
                    "segment {name} at offset {offset}, expected {expected_offset}"
                )));
            }
            let spec = SegmentSpec {
                name: name.to_string(),
                shape,
                offset,
            };
            expected_offset += spec.len();
            layout.push(spec);
        }
        let total: usize = parse_num(keyed(next("value count")?, "values")?)?;
        if total != expected_offset {
            return Err(Error::Format(format!(
                "value count {total} disagrees with segment table ({expected_offset})"
            )));
        }
        let values = (0..total)
            .map(|_| {
                let line = next("value")?;
                line.parse::<f64>()
                    .map_err(|e| Error::Format(format!("bad value `{line}`: {e}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        let segments = layout.into_iter().map(|s| {
            let data = values[s.offset..s.offset + s.len()].to_vec();
            (s.name, s.shape, data)
        });
        let pv = ParameterVector::from_segments(segments).map_err(|e| Error::Format(e.to_string()))?;
        Ok((pv, hash))
    }

    pub fn write_file(&self, path: &Path, config_hash: &str) -> Result<()> {
        std::fs::write(path, self.to_text(config_hash)).map_err(|e| Error::io(path, e))
    }

    pub fn read_file(path: &Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

pub(crate) fn check_layouts(expected: &[SegmentSpec], found: &[SegmentSpec]) -> Result<()> {
    let same = expected.len() == found.len()
        && expected
            .iter()
            .zip(found)
            .all(|(a, b)| a.name == b.name && a.shape == b.shape);
    if same {
        return Ok(());
    }
    let describe = |l: &[SegmentSpec]| l.iter().map(SegmentSpec::describe).collect::<Vec<_>>().join(", ");
    Err(Error::IncompatibleWeights {
        expected: describe(expected),
        found: describe(found),
    })
}

fn keyed<'a>(line: &'a str, key: &str) -> Result<&'a str> {
    line.strip_prefix(key)
        .and_then(|rest| rest.strip_prefix(' '))
        .ok_or_else(|| Error::Format(format!("expected `{key} ...`, got `{line}`")))
}

fn parse_num(s: &str) -> Result<usize> {
    s.parse()
        .map_err(|_| Error::Format(format!("expected an integer, got `{s}`")))
}
