//! `FERR` version 1 field dumps.
//!
//! Layout, little-endian throughout: magic `FERR`, version `u16`, `n1 u32`,
//! `n2 u32`, `L f64`, `time f64`, `nfields u32`; then per field a `u16`
//! name length, the UTF-8 name, a `u8` component count and
//! `components × n1 × n2` physical samples as `f64`, row-major with `x2`
//! fastest.

use std::path::Path;

use ferro_core::solver::{FerroState, Snapshot};
use ferro_core::spectral::{forward_transform, inverse_transform};
use ferro_core::{Grid, PhysicalField, SpectralField};

use crate::CliError;

pub const MAGIC: &[u8; 4] = b"FERR";
pub const VERSION: u16 = 1;
const HEADER_BYTES: usize = 4 + 2 + 4 + 4 + 8 + 8 + 4;

#[derive(Debug, Clone, PartialEq)]
pub struct DumpField {
    pub name: String,
    pub components: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldDump {
    pub n1: usize,
    pub n2: usize,
    pub length: f64,
    pub time: f64,
    pub fields: Vec<DumpField>,
}

fn corrupt(msg: impl Into<String>) -> CliError {
    CliError::Dump(msg.into())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], CliError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| {
                corrupt(format!(
                    "truncated file: {what} needs {n} bytes at offset {}, {} remain",
                    self.pos,
                    self.bytes.len() - self.pos
                ))
            })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self, what: &str) -> Result<[u8; N], CliError> {
        Ok(self.take(N, what)?.try_into().expect("slice has length N"))
    }
}

impl FieldDump {
    pub fn grid(&self) -> Result<Grid, CliError> {
        Ok(Grid::new(self.n1, self.n2, self.length)?)
    }

    /// Exact size of the encoded file.
    pub fn encoded_len(&self) -> usize {
        HEADER_BYTES
            + self
                .fields
                .iter()
                .map(|f| 2 + f.name.len() + 1 + 8 * f.components.len() * self.n1 * self.n2)
                .sum::<usize>()
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, CliError> {
        let cells = self.n1 * self.n2;
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        let dim = |n: usize| u32::try_from(n).map_err(|_| corrupt(format!("grid size {n} exceeds u32")));
        out.extend_from_slice(&dim(self.n1)?.to_le_bytes());
        out.extend_from_slice(&dim(self.n2)?.to_le_bytes());
        out.extend_from_slice(&self.length.to_le_bytes());
        out.extend_from_slice(&self.time.to_le_bytes());
        out.extend_from_slice(&dim(self.fields.len())?.to_le_bytes());
        for f in &self.fields {
            let len = u16::try_from(f.name.len()).map_err(|_| corrupt("field name longer than 65535 bytes"))?;
            let ncomp = u8::try_from(f.components.len()).map_err(|_| corrupt("more than 255 components"))?;
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(f.name.as_bytes());
            out.push(ncomp);
            for c in &f.components {
                if c.len() != cells {
                    return Err(corrupt(format!(
                        "field `{}` has {} samples per component, the grid has {cells}",
                        f.name,
                        c.len()
                    )));
                }
                for v in c {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CliError> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4, "magic")?;
        if magic != MAGIC {
            return Err(corrupt(format!("bad magic {magic:?}, expected \"FERR\"")));
        }
        let version = u16::from_le_bytes(r.array("version")?);
        if version != VERSION {
            return Err(corrupt(format!(
                "unsupported version {version}, this reader handles {VERSION}"
            )));
        }
        let n1 = u32::from_le_bytes(r.array("n1")?) as usize;
        let n2 = u32::from_le_bytes(r.array("n2")?) as usize;
        let length = f64::from_le_bytes(r.array("L")?);
        let time = f64::from_le_bytes(r.array("time")?);
        let nfields = u32::from_le_bytes(r.array("nfields")?) as usize;
        let cells = n1.checked_mul(n2).ok_or_else(|| corrupt("grid size overflows"))?;
        let mut fields = Vec::new();
        for i in 0..nfields {
            let len = u16::from_le_bytes(r.array("name length")?) as usize;
            let name = std::str::from_utf8(r.take(len, "field name")?)
                .map_err(|_| corrupt(format!("field {i} name is not UTF-8")))?
                .to_string();
            let ncomp = r.take(1, "component count")?[0] as usize;
            let mut components = Vec::with_capacity(ncomp);
            for _ in 0..ncomp {
                let raw = r.take(8 * cells, &format!("samples of `{name}`"))?;
                components.push(
                    raw.chunks_exact(8)
                        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                        .collect(),
                );
            }
            fields.push(DumpField { name, components });
        }
        if r.pos != bytes.len() {
            return Err(corrupt(format!(
                "size mismatch: header describes {} bytes, file has {}",
                r.pos,
                bytes.len()
            )));
        }
        Ok(Self {
            n1,
            n2,
            length,
            time,
            fields,
        })
    }

    pub fn field(&self, name: &str) -> Result<&DumpField, CliError> {
        self.fields
            .iter()
            .find(|f| f.name == name)
            .ok_or_else(|| corrupt(format!("dump has no field `{name}`")))
    }

    /// Forward transform of a stored field; the dump must match `grid`.
    pub fn spectral_field(&self, name: &str, grid: &Grid) -> Result<SpectralField, CliError> {
        let g = self.grid()?;
        if g != *grid {
            return Err(corrupt(format!(
                "dump grid {}x{} (L = {}) differs from the configured grid {}x{} (L = {})",
                g.n1(),
                g.n2(),
                g.length(),
                grid.n1(),
                grid.n2(),
                grid.length()
            )));
        }
        let f = self.field(name)?;
        Ok(forward_transform(&PhysicalField::from_components(
            g,
            f.components.clone(),
        )?))
    }

    /// Velocity, micro-rotation and magnetization at the dump time.
    pub fn to_state(&self, grid: &Grid) -> Result<FerroState, CliError> {
        let u = self.spectral_field("u", grid)?;
        let omega = self.spectral_field("omega", grid)?;
        let m = self.spectral_field("M", grid)?;
        Ok(FerroState::new(self.time, u, omega, m)?)
    }

    pub fn from_fields(time: f64, fields: &[(&str, &SpectralField)]) -> Result<Self, CliError> {
        let g = *fields[0].1.grid();
        let mut out = Vec::with_capacity(fields.len());
        for (name, f) in fields {
            let phys = inverse_transform(f)?;
            out.push(DumpField {
                name: name.to_string(),
                components: phys.into_components(),
            });
        }
        Ok(Self {
            n1: g.n1(),
            n2: g.n2(),
            length: g.length(),
            time,
            fields: out,
        })
    }

    /// Fields `u`, `omega`, `M`, `H`, `F`.
    pub fn from_snapshot(s: &Snapshot) -> Result<Self, CliError> {
        let st = &s.state;
        Self::from_fields(
            st.t,
            &[
                ("u", &st.u),
                ("omega", &st.omega),
                ("M", &st.m),
                ("H", &s.h),
                ("F", &s.f),
            ],
        )
    }
}

pub fn write_dump(dump: &FieldDump, path: &Path) -> Result<(), CliError> {
    let bytes = dump.to_bytes()?;
    std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn read_dump(path: &Path) -> Result<FieldDump, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    FieldDump::from_bytes(&bytes).map_err(|e| match e {
        CliError::Dump(msg) => CliError::Dump(format!("{}: {msg}", path.display())),
        other => other,
    })
}
