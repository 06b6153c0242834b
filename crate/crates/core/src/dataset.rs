//! On-disk container for encoded spike datasets.
//!
//! Layout: 8-byte magic `BISNNDS1`, little-endian u32 JSON header length,
//! JSON header, then one packed spike block per example (rows packed
//! LSB-first, each row padded to a whole byte). All examples share the
//! header's (t_steps, units) shape, so every block has the same size and the
//! payload needs no per-example framing.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{Example, ReadoutKind, Target};
use crate::spikes::SpikeTensor;

/// File magic for the spike dataset container.
pub const DATASET_MAGIC: [u8; 8] = *b"BISNNDS1";
/// Current header version.
pub const DATASET_VERSION: u32 = 1;

/// Per-example targets, homogeneous across the file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetBlock {
    Labels(Vec<usize>),
    Vectors(Vec<Vec<f64>>),
}

impl TargetBlock {
    pub fn len(&self) -> usize {
        match self {
            TargetBlock::Labels(v) => v.len(),
            TargetBlock::Vectors(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// JSON header describing the payload.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub version: u32,
    pub t_steps: usize,
    pub units: usize,
    pub kind: ReadoutKind,
    pub targets: TargetBlock,
    /// Free-form record of how the spikes were produced (encoder settings,
    /// source files, seeds). Not interpreted on load.
    #[serde(default)]
    pub encoding: serde_json::Value,
}

impl DatasetHeader {
    fn validate(&self) -> Result<()> {
        if self.version != DATASET_VERSION {
            return Err(Error::UnsupportedHeader(format!(
                "dataset version {} (supported: {DATASET_VERSION})",
                self.version
            )));
        }
        if self.t_steps == 0 || self.units == 0 {
            return Err(Error::Parse {
                offset: 0,
                message: "dataset header declares an empty spike shape".into(),
            });
        }
        let ok = matches!(
            (&self.kind, &self.targets),
            (ReadoutKind::Classification, TargetBlock::Labels(_))
                | (ReadoutKind::Regression, TargetBlock::Vectors(_))
        );
        if !ok {
            return Err(Error::Incompatible(
                "dataset target block does not match readout kind".into(),
            ));
        }
        if let TargetBlock::Vectors(vs) = &self.targets {
            if let Some(first) = vs.first() {
                if vs.iter().any(|v| v.len() != first.len()) {
                    return Err(Error::Incompatible(
                        "regression targets have mixed dimensions".into(),
                    ));
                }
            }
        }
        Ok(())
    }
}

fn targets_of(examples: &[Example], kind: ReadoutKind) -> Result<TargetBlock> {
    match kind {
        ReadoutKind::Classification => {
            let labels = examples
                .iter()
                .map(|e| match &e.target {
                    Target::Label(l) => Ok(*l),
                    Target::Vector(_) => Err(Error::Incompatible(
                        "vector target in a classification dataset".into(),
                    )),
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(TargetBlock::Labels(labels))
        }
        ReadoutKind::Regression => {
            let vectors = examples
                .iter()
                .map(|e| match &e.target {
                    Target::Vector(v) => Ok(v.clone()),
                    Target::Label(_) => Err(Error::Incompatible(
                        "label target in a regression dataset".into(),
                    )),
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(TargetBlock::Vectors(vectors))
        }
    }
}

/// Write examples (all sharing one spike shape) to `path`.
pub fn write_dataset(
    path: &Path,
    examples: &[Example],
    kind: ReadoutKind,
    encoding: serde_json::Value,
) -> Result<()> {
    let first = examples
        .first()
        .ok_or_else(|| Error::InvalidParam("refusing to write an empty dataset".into()))?;
    let (t_steps, units) = (first.spikes.t_steps(), first.spikes.units());
    if examples
        .iter()
        .any(|e| e.spikes.t_steps() != t_steps || e.spikes.units() != units)
    {
        return Err(Error::DimMismatch(
            "all examples in a dataset must share one spike shape".into(),
        ));
    }
    let header = DatasetHeader {
        version: DATASET_VERSION,
        t_steps,
        units,
        kind,
        targets: targets_of(examples, kind)?,
        encoding,
    };
    header.validate()?;
    let header_bytes = serde_json::to_vec(&header)?;
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&DATASET_MAGIC)?;
    w.write_all(&(header_bytes.len() as u32).to_le_bytes())?;
    w.write_all(&header_bytes)?;
    for e in examples {
        w.write_all(&e.spikes.pack_rows())?;
    }
    w.flush()?;
    Ok(())
}

/// Read a dataset written by [`write_dataset`].
pub fn read_dataset(path: &Path) -> Result<(DatasetHeader, Vec<Example>)> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(|_| Error::Parse {
        offset: 0,
        message: "file too short for dataset magic".into(),
    })?;
    if magic != DATASET_MAGIC {
        return Err(Error::UnsupportedHeader(format!(
            "bad dataset magic {:?}",
            String::from_utf8_lossy(&magic)
        )));
    }
    let mut len_bytes = [0u8; 4];
    r.read_exact(&mut len_bytes).map_err(|_| Error::Parse {
        offset: 8,
        message: "file too short for header length".into(),
    })?;
    let header_len = u32::from_le_bytes(len_bytes) as usize;
    let mut header_bytes = vec![0u8; header_len];
    r.read_exact(&mut header_bytes).map_err(|_| Error::Parse {
        offset: 12,
        message: "file too short for declared header".into(),
    })?;
    let header: DatasetHeader = serde_json::from_slice(&header_bytes)?;
    header.validate()?;

    let block = header.t_steps * header.units.div_ceil(8);
    let n = header.targets.len();
    let mut payload = Vec::new();
    r.read_to_end(&mut payload)?;
    if payload.len() != n * block {
        return Err(Error::Parse {
            offset: 12 + header_len,
            message: format!(
                "payload holds {} bytes but {} examples of {} bytes were declared",
                payload.len(),
                n,
                block
            ),
        });
    }
    let mut examples = Vec::with_capacity(n);
    for i in 0..n {
        let spikes =
            SpikeTensor::unpack_rows(header.t_steps, header.units, &payload[i * block..(i + 1) * block])?;
        let target = match &header.targets {
            TargetBlock::Labels(ls) => Target::Label(ls[i]),
            TargetBlock::Vectors(vs) => Target::Vector(vs[i].clone()),
        };
        examples.push(Example { spikes, target });
    }
    Ok((header, examples))
}
