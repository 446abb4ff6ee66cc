//! Little-endian binary checkpoints: magic, version, network shape table,
//! raw 64-bit parameters, then standardizer and curriculum state.
//!
//! Saves are atomic (write to a sibling temp file, then rename), so an
//! interrupted save never leaves a corrupt checkpoint behind. Loads report
//! the exact byte offset of any truncation or decode failure.

use std::fs;
use std::path::Path;

use thiserror::Error;

use super::nn::MlpParams;
use super::ppo::Policies;
use super::standardizer::RunningStandardizer;
use crate::curriculum::CurriculumState;

const MAGIC: &[u8; 8] = b"BJMPCKPT";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("bad magic at byte 0 (not a checkpoint file)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),
    #[error("truncated checkpoint at byte {offset}: needed {needed} more bytes")]
    Truncated { offset: usize, needed: usize },
    #[error("malformed checkpoint at byte {offset}: {what}")]
    Malformed { offset: usize, what: String },
}

/// Everything needed to resume or fine-tune a run. Physical robot config is
/// deliberately NOT stored: loading a checkpoint under a modified config is
/// the morphology warm-start path.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub policies: Policies,
    /// Per-agent observation standardizers.
    pub obs_standardizers: [RunningStandardizer; 2],
    pub global_standardizer: RunningStandardizer,
    pub curriculum: CurriculumState,
    pub lr: f64,
}

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn new() -> Self {
        Writer { buf: Vec::new() }
    }

    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    fn f64s(&mut self, vs: &[f64]) {
        self.u64(vs.len() as u64);
        for &v in vs {
            self.f64(v);
        }
    }

    fn mlp(&mut self, p: &MlpParams) {
        self.u64(p.sizes.len() as u64);
        for &s in &p.sizes {
            self.u64(s as u64);
        }
        self.u32(u32::from(p.log_std.is_some()));
        for (w, b) in p.weights.iter().zip(&p.biases) {
            self.f64s(w);
            self.f64s(b);
        }
        if let Some(ls) = &p.log_std {
            self.f64s(ls);
        }
    }

    fn standardizer(&mut self, s: &RunningStandardizer) {
        let (count, mean, m2) = s.to_raw();
        self.u64(count);
        self.f64s(&mean);
        self.f64s(&m2);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.buf.len() {
            return Err(CheckpointError::Truncated {
                offset: self.pos,
                needed: self.pos + n - self.buf.len(),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self) -> Result<Vec<f64>, CheckpointError> {
        let n = self.u64()? as usize;
        if n > 100_000_000 {
            return Err(CheckpointError::Malformed {
                offset: self.pos - 8,
                what: format!("implausible vector length {n}"),
            });
        }
        (0..n).map(|_| self.f64()).collect()
    }

    fn mlp(&mut self) -> Result<MlpParams, CheckpointError> {
        let n_sizes = self.u64()? as usize;
        if !(2..=64).contains(&n_sizes) {
            return Err(CheckpointError::Malformed {
                offset: self.pos - 8,
                what: format!("implausible layer count {n_sizes}"),
            });
        }
        let sizes: Vec<usize> = (0..n_sizes)
            .map(|_| self.u64().map(|v| v as usize))
            .collect::<Result<_, _>>()?;
        let has_log_std = self.u32()? != 0;
        let mut weights = Vec::new();
        let mut biases = Vec::new();
        for w in sizes.windows(2) {
            let ws = self.f64s()?;
            let bs = self.f64s()?;
            if ws.len() != w[0] * w[1] || bs.len() != w[1] {
                return Err(CheckpointError::Malformed {
                    offset: self.pos,
                    what: "layer shape does not match shape table".into(),
                });
            }
            weights.push(ws);
            biases.push(bs);
        }
        let log_std = if has_log_std {
            let ls = self.f64s()?;
            if ls.len() != *sizes.last().unwrap() {
                return Err(CheckpointError::Malformed {
                    offset: self.pos,
                    what: "log_std length does not match output width".into(),
                });
            }
            Some(ls)
        } else {
            None
        };
        Ok(MlpParams {
            sizes,
            weights,
            biases,
            log_std,
        })
    }

    fn standardizer(&mut self) -> Result<RunningStandardizer, CheckpointError> {
        let count = self.u64()?;
        let mean = self.f64s()?;
        let m2 = self.f64s()?;
        if mean.len() != m2.len() {
            return Err(CheckpointError::Malformed {
                offset: self.pos,
                what: "standardizer moment lengths differ".into(),
            });
        }
        Ok(RunningStandardizer::from_raw(count, mean, m2))
    }
}

pub fn save_checkpoint(ckpt: &Checkpoint, path: &Path) -> Result<(), CheckpointError> {
    let mut w = Writer::new();
    w.buf.extend_from_slice(MAGIC);
    w.u32(VERSION);
    w.f64(ckpt.lr);
    for a in &ckpt.policies.actors {
        w.mlp(a);
    }
    for c in &ckpt.policies.critics {
        w.mlp(c);
    }
    for s in &ckpt.obs_standardizers {
        w.standardizer(s);
    }
    w.standardizer(&ckpt.global_standardizer);
    let cs = &ckpt.curriculum;
    w.u64(cs.global_step);
    w.u64(cs.success_count);
    w.u32(cs.target_stage);
    w.u32(cs.init_stage);
    w.u32(cs.delay_stage);
    w.u32(cs.flip_stage);
    w.f64(cs.unlocked_height_max);
    w.f64(cs.unlocked_offset_max);

    let io = |source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    };
    let tmp = path.with_extension("ckpt.tmp");
    fs::write(&tmp, &w.buf).map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let buf = fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut r = Reader { buf: &buf, pos: 0 };
    if r.take(8)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(CheckpointError::BadVersion(version));
    }
    let lr = r.f64()?;
    let actors = [r.mlp()?, r.mlp()?];
    let critics = [r.mlp()?, r.mlp()?];
    let obs_standardizers = [r.standardizer()?, r.standardizer()?];
    let global_standardizer = r.standardizer()?;
    let curriculum = CurriculumState {
        global_step: r.u64()?,
        success_count: r.u64()?,
        target_stage: r.u32()?,
        init_stage: r.u32()?,
        delay_stage: r.u32()?,
        flip_stage: r.u32()?,
        unlocked_height_max: r.f64()?,
        unlocked_offset_max: r.f64()?,
    };
    Ok(Checkpoint {
        policies: Policies { actors, critics },
        obs_standardizers,
        global_standardizer,
        curriculum,
        lr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn sample_checkpoint() -> Checkpoint {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let policies = Policies {
            actors: [
                MlpParams::new(&[14, 16, 4], true, &mut rng),
                MlpParams::new(&[14, 16, 4], true, &mut rng),
            ],
            critics: [
                MlpParams::new(&[30, 16, 1], false, &mut rng),
                MlpParams::new(&[30, 16, 1], false, &mut rng),
            ],
        };
        let mut s0 = RunningStandardizer::new(14);
        s0.update(&vec![0.5; 14]);
        s0.update(&vec![-0.25; 14]);
        let mut cur = CurriculumState::new(&crate::curriculum::CurriculumConfig::default());
        cur.global_step = 123_456;
        cur.success_count = 789;
        cur.init_stage = 3;
        Checkpoint {
            policies,
            obs_standardizers: [s0.clone(), RunningStandardizer::new(14)],
            global_standardizer: RunningStandardizer::new(30),
            curriculum: cur,
            lr: 3.25e-4,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("test.ckpt");
        let ckpt = sample_checkpoint();
        save_checkpoint(&ckpt, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        for i in 0..2 {
            assert_eq!(loaded.policies.actors[i], ckpt.policies.actors[i]);
            assert_eq!(loaded.policies.critics[i], ckpt.policies.critics[i]);
            assert_eq!(loaded.obs_standardizers[i], ckpt.obs_standardizers[i]);
        }
        assert_eq!(loaded.global_standardizer, ckpt.global_standardizer);
        assert_eq!(loaded.curriculum, ckpt.curriculum);
        assert_eq!(loaded.lr.to_bits(), ckpt.lr.to_bits());
    }

    #[test]
    fn truncated_file_reports_offset_and_loads_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trunc.ckpt");
        save_checkpoint(&sample_checkpoint(), &path).unwrap();
        let full = std::fs::read(&path).unwrap();
        std::fs::write(&path, &full[..full.len() / 2]).unwrap();
        match load_checkpoint(&path) {
            Err(CheckpointError::Truncated { offset, needed }) => {
                assert!(offset <= full.len() / 2);
                assert!(needed > 0);
            }
            other => panic!("expected truncation error, got {other:?}"),
        }
    }

    #[test]
    fn wrong_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.ckpt");
        std::fs::write(&path, b"NOTACKPTxxxxxxxxxxxx").unwrap();
        assert!(matches!(
            load_checkpoint(&path),
            Err(CheckpointError::BadMagic)
        ));
    }
}
