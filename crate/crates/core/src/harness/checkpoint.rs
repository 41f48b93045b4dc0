//! Binary checkpoints.
//!
//! Layout (all integers little-endian):
//! `FHRL` | u32 format version | u64 config hash | u64 config text length |
//! config text | u32 block count | per block: u32 name length, name,
//! u64 value count, values as f64.
//!
//! Optimizer moments are not stored.

use std::io::{Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::agent::HierarchicalAgent;
use super::config::RunConfig;
use crate::error::{io_err, Error, Result};

pub const MAGIC: &[u8; 4] = b"FHRL";
pub const FORMAT_VERSION: u32 = 1;

/// Upper bound on any length field, to fail fast on garbage input.
const MAX_LEN: u64 = 1 << 32;

pub fn encode(cfg: &RunConfig, agent: &HierarchicalAgent) -> Vec<u8> {
    let text = cfg.to_text();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&cfg.hash().to_le_bytes());
    out.extend_from_slice(&(text.len() as u64).to_le_bytes());
    out.extend_from_slice(text.as_bytes());
    let modules = agent.named_modules();
    out.extend_from_slice(&(modules.len() as u32).to_le_bytes());
    for (name, module) in modules {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        let values = module.flat_params();
        out.extend_from_slice(&(values.len() as u64).to_le_bytes());
        for v in values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Checkpoint(format!("truncated while reading {what}")));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn len(&mut self, what: &str, wide: bool) -> Result<usize> {
        let n = if wide { self.u64(what)? } else { self.u32(what)? as u64 };
        if n > MAX_LEN {
            return Err(Error::Checkpoint(format!("implausible {what} {n}")));
        }
        Ok(n as usize)
    }
}

pub fn decode(bytes: &[u8]) -> Result<(RunConfig, HierarchicalAgent)> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Checkpoint("bad magic bytes".into()));
    }
    let version = r.u32("format version")?;
    if version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported format version {version}")));
    }
    let hash = r.u64("config hash")?;
    let text_len = r.len("config length", true)?;
    let text = std::str::from_utf8(r.take(text_len, "config text")?)
        .map_err(|_| Error::Checkpoint("config text is not UTF-8".into()))?;
    let cfg = RunConfig::parse(text, Path::new("<checkpoint>"))?;
    if cfg.hash() != hash {
        return Err(Error::Checkpoint("config hash mismatch".into()));
    }
    let mut agent = HierarchicalAgent::new(&cfg, &mut ChaCha8Rng::seed_from_u64(0))?;
    let expected: Vec<(String, usize)> = agent
        .named_modules()
        .into_iter()
        .map(|(n, m)| (n, m.num_params()))
        .collect();
    let count = r.u32("block count")? as usize;
    if count != expected.len() {
        return Err(Error::Checkpoint(format!(
            "expected {} parameter blocks, found {count}",
            expected.len()
        )));
    }
    let mut modules = agent.modules_mut();
    for ((name, size), module) in expected.iter().zip(modules.iter_mut()) {
        let name_len = r.len("block name length", false)?;
        let found = r.take(name_len, "block name")?;
        if found != name.as_bytes() {
            return Err(Error::Checkpoint(format!(
                "expected block {name}, found {}",
                String::from_utf8_lossy(found)
            )));
        }
        let n = r.len("block length", true)?;
        if n != *size {
            return Err(Error::Checkpoint(format!("block {name}: expected {size} values, found {n}")));
        }
        let raw = r.take(n * 8, "block values")?;
        let values: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        module.set_flat_params(&values)?;
    }
    if r.pos != bytes.len() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok((cfg, agent))
}

pub fn save(path: &Path, cfg: &RunConfig, agent: &HierarchicalAgent) -> Result<()> {
    let mut file = std::fs::File::create(path).map_err(io_err(path))?;
    file.write_all(&encode(cfg, agent)).map_err(io_err(path))
}

pub fn load(path: &Path) -> Result<(RunConfig, HierarchicalAgent)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(io_err(path))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trained_like() -> (RunConfig, HierarchicalAgent) {
        let mut cfg = RunConfig::default();
        cfg.other_width = 8;
        cfg.fdgm_actor_width = 6;
        cfg.a_z_state_dim = 3;
        let mut agent = HierarchicalAgent::new(&cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        // Make the zero-initialized flow outputs non-trivial.
        for (i, m) in agent.modules_mut().into_iter().enumerate() {
            let p: Vec<f64> = m.flat_params().iter().enumerate().map(|(j, v)| v + 1e-3 * ((i + j) % 7) as f64).collect();
            m.set_flat_params(&p).unwrap();
        }
        (cfg, agent)
    }

    #[test]
    fn save_load_save_is_byte_identical() {
        let (cfg, agent) = trained_like();
        let first = encode(&cfg, &agent);
        let (cfg2, agent2) = decode(&first).unwrap();
        assert_eq!(cfg2, cfg);
        assert_eq!(encode(&cfg2, &agent2), first);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.fhrl");
        save(&path, &cfg, &agent).unwrap();
        let (c3, a3) = load(&path).unwrap();
        assert_eq!(encode(&c3, &a3), first);
    }

    #[test]
    fn corruption_is_detected() {
        let (cfg, agent) = trained_like();
        let bytes = encode(&cfg, &agent);
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(decode(&bad), Err(Error::Checkpoint(_))));
        assert!(decode(&bytes[..bytes.len() - 3]).is_err());
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(decode(&bad).is_err());
        // Flip a byte of the config text; the hash no longer matches.
        let mut bad = bytes.clone();
        let i = bytes.windows(5).position(|w| w == b"c = 1").unwrap() + 4;
        bad[i] = b'2';
        assert!(decode(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(decode(&extra).is_err());
    }
}
