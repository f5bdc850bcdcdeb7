//! Checkpoint container.
//!
//! Layout (little-endian): magic `LSGC`, version `u32`, entry count `u32`,
//! then per entry a `u16` name length, the UTF-8 name, a `u8` rank, `rank`
//! dimensions as `u64` and the `f32` data; the file ends with the CRC32 of
//! everything before it.
//!
//! Counters and text are stored as ordinary entries: a `u64` counter as
//! two 24-bit halves, text as one value per byte. Both are exact in `f32`.

use std::path::Path;

use super::CliError;
use crate::agents::ParamTree;
use crate::numerics::Tensor;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"LSGC";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Named tensors in insertion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Checkpoint {
    entries: Vec<(String, Tensor)>,
}

const HALF_BITS: u32 = 24;

impl Checkpoint {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[(String, Tensor)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    fn require(&self, name: &str) -> Result<&Tensor, CliError> {
        self.get(name)
            .ok_or_else(|| CliError::Checkpoint(format!("missing entry {name:?}")))
    }

    /// Adds or replaces `name`.
    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        let name = name.into();
        match self.entries.iter_mut().find(|(n, _)| *n == name) {
            Some(slot) => slot.1 = tensor,
            None => self.entries.push((name, tensor)),
        }
    }

    /// Every parameter of `tree`, named `prefix.<parameter>`.
    pub fn insert_tree<P: ParamTree>(&mut self, prefix: &str, tree: &P) {
        tree.visit(prefix, &mut |name, t| self.insert(name, t.clone()));
    }

    /// Overwrites every parameter of `tree` from `prefix.<parameter>`
    /// entries, which must exist with matching shapes.
    pub fn load_tree<P: ParamTree>(&self, prefix: &str, tree: &mut P) -> Result<(), CliError> {
        let mut failure = None;
        tree.visit_mut(prefix, &mut |name, t| {
            if failure.is_some() {
                return;
            }
            match self.get(&name) {
                Some(stored) if stored.shape() == t.shape() => *t = stored.clone(),
                Some(stored) => {
                    failure = Some(format!(
                        "entry {name:?} has shape {:?}, expected {:?}",
                        stored.shape(),
                        t.shape()
                    ))
                }
                None => failure = Some(format!("missing entry {name:?}")),
            }
        });
        failure.map_or(Ok(()), |m| Err(CliError::Checkpoint(m)))
    }

    pub fn insert_counter(&mut self, name: impl Into<String>, value: u64) {
        assert!(value < 1 << (2 * HALF_BITS), "counter {value} exceeds 48 bits");
        let mask = (1u64 << HALF_BITS) - 1;
        let halves = vec![(value >> HALF_BITS) as f32, (value & mask) as f32];
        self.insert(name, Tensor::from_parts(vec![2], halves));
    }

    pub fn counter(&self, name: &str) -> Result<u64, CliError> {
        let t = self.require(name)?;
        let valid = |v: f32| v >= 0.0 && v < (1u64 << HALF_BITS) as f32 && v.fract() == 0.0;
        match t.data() {
            [hi, lo] if t.shape() == [2] && valid(*hi) && valid(*lo) => {
                Ok(((*hi as u64) << HALF_BITS) | *lo as u64)
            }
            _ => Err(CliError::Checkpoint(format!("entry {name:?} is not a counter"))),
        }
    }

    pub fn insert_text(&mut self, name: impl Into<String>, text: &str) {
        let bytes: Vec<f32> = text.bytes().map(f32::from).collect();
        self.insert(name, Tensor::from_parts(vec![bytes.len()], bytes));
    }

    pub fn text(&self, name: &str) -> Result<String, CliError> {
        let t = self.require(name)?;
        let bytes: Option<Vec<u8>> = t
            .data()
            .iter()
            .map(|&v| (v.fract() == 0.0 && (0.0..256.0).contains(&v)).then_some(v as u8))
            .collect();
        bytes
            .and_then(|b| String::from_utf8(b).ok())
            .ok_or_else(|| CliError::Checkpoint(format!("entry {name:?} is not text")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (name, t) in &self.entries {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.shape().len() as u8);
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CliError> {
        let bad = |m: String| CliError::Checkpoint(m);
        if bytes.len() < 4 || &bytes[..4] != CHECKPOINT_MAGIC {
            return Err(bad("magic: not an LSGC checkpoint".into()));
        }
        if bytes.len() < 16 {
            return Err(bad(format!("crc: file truncated at {} bytes", bytes.len())));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("four bytes"));
        let computed = crc32fast::hash(body);
        if stored != computed {
            return Err(bad(format!("crc: stored {stored:08x}, computed {computed:08x}")));
        }
        let mut r = Reader { bytes: body, at: 4 };
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(bad(format!("version: {version}, expected {CHECKPOINT_VERSION}")));
        }
        let count = r.u32()? as usize;
        let mut entries = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let len = usize::from(r.u16()?);
            let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|_| bad("entry name: invalid UTF-8".into()))?;
            let rank = usize::from(r.take(1)?[0]);
            let shape = (0..rank)
                .map(|_| r.u64().map(|d| d as usize))
                .collect::<Result<Vec<_>, _>>()?;
            let n = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| bad(format!("entry {name:?}: shape overflows")))?;
            let raw = r.take(n.checked_mul(4).ok_or_else(|| bad(format!("entry {name:?}: shape overflows")))?)?;
            let data: Vec<f32> = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("four bytes"))).collect();
            let t = Tensor::new(shape, data).map_err(|e| bad(format!("entry {name:?}: {e}")))?;
            entries.push((name, t));
        }
        if r.at != body.len() {
            return Err(bad(format!("entries: {} trailing bytes", body.len() - r.at)));
        }
        Ok(Self { entries })
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CliError> {
        let end = self.at.checked_add(n).filter(|&e| e <= self.bytes.len());
        let Some(end) = end else {
            return Err(CliError::Checkpoint(format!("entries: unexpected end at byte {}", self.at)));
        };
        let s = &self.bytes[self.at..end];
        self.at = end;
        Ok(s)
    }

    fn u16(&mut self) -> Result<u16, CliError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("two bytes")))
    }

    fn u32(&mut self) -> Result<u32, CliError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("four bytes")))
    }

    fn u64(&mut self) -> Result<u64, CliError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("eight bytes")))
    }
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<(), CliError> {
    std::fs::write(path, checkpoint.to_bytes()).map_err(|e| CliError::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Checkpoint::from_bytes(&bytes).map_err(|e| match e {
        CliError::Checkpoint(m) => CliError::Checkpoint(format!("{}: {m}", path.display())),
        other => other,
    })
}
