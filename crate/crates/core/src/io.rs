//! Datum files: the datum JSON schema plus optional name, provenance note
//! and expected values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::datum::{validate, Datum};
use crate::error::{Error, Result};
use crate::library::{Expected, NamedDatum};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatumFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// Free-form comment on where the datum comes from.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provenance: Option<String>,
    #[serde(flatten)]
    pub datum: Datum<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expected: Option<Expected>,
}

impl From<NamedDatum<f64>> for DatumFile {
    fn from(nd: NamedDatum<f64>) -> Self {
        let provenance = nd.expected.as_ref().map(|e| {
            format!("generated by blscale ({}); bl_log known by {}", nd.name, e.provenance)
        });
        Self {
            name: Some(nd.name),
            provenance,
            datum: nd.datum,
            expected: nd.expected,
        }
    }
}

impl DatumFile {
    /// Parses a datum file; structural invariants are checked, so the
    /// returned datum is safe to hand to the flow.
    pub fn from_json(text: &str) -> Result<Self> {
        let file: Self = serde_json::from_str(text)?;
        file.check()?;
        Ok(file)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let file: Self = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        file.check()?;
        Ok(file)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        serde_json::to_writer_pretty(&mut w, self)?;
        writeln!(w)?;
        w.flush()?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    fn check(&self) -> Result<()> {
        let report = validate(&self.datum);
        if report.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidDatum(report))
        }
    }
}
