//! Versioned binary checkpoint ("FASC"): embedded configs, parameters and
//! optimizer moments as 64-bit little-endian floats, RNG stream positions,
//! and per-epoch history. Save -> load -> save is byte-identical, and a
//! resumed run reproduces the uninterrupted one bit-exactly.

use std::path::Path;

use fas_core::config::FasConfig;
use fas_core::matrix::Matrix;
use fas_core::optim::OptimizerState;
use fas_core::params::ParameterStore;
use fas_core::rng::StreamRng;
use fas_core::train::{EpochRecord, TrainConfig, TrainState};

use crate::error::{io_err, CliError, Result};

pub const MAGIC: [u8; 4] = *b"FASC";
pub const VERSION: u16 = 1;

struct Writer {
    buf: Vec<u8>,
}

impl Writer {
    fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn u128(&mut self, v: u128) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    fn bytes(&mut self, v: &[u8]) {
        self.u32(v.len() as u32);
        self.buf.extend_from_slice(v);
    }
    fn matrix(&mut self, m: &Matrix) {
        self.u32(m.rows() as u32);
        self.u32(m.cols() as u32);
        for &v in m.data() {
            self.f64(v);
        }
    }
    fn rng(&mut self, rng: &StreamRng) {
        let (seed, pos) = rng.state();
        self.buf.extend_from_slice(&seed);
        self.u128(pos);
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, field: &str) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(CliError::Data(format!(
                "{}: truncated while reading {field} (need {n} bytes at offset {})",
                self.path.display(),
                self.pos
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u16(&mut self, f: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, f)?.try_into().unwrap()))
    }
    fn u32(&mut self, f: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, f)?.try_into().unwrap()))
    }
    fn u64(&mut self, f: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, f)?.try_into().unwrap()))
    }
    fn u128(&mut self, f: &str) -> Result<u128> {
        Ok(u128::from_le_bytes(self.take(16, f)?.try_into().unwrap()))
    }
    fn f64(&mut self, f: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, f)?.try_into().unwrap()))
    }
    fn bytes(&mut self, f: &str) -> Result<&'a [u8]> {
        let n = self.u32(f)? as usize;
        self.take(n, f)
    }
    fn matrix(&mut self, f: &str) -> Result<Matrix> {
        let rows = self.u32(f)? as usize;
        let cols = self.u32(f)? as usize;
        let mut data = Vec::with_capacity(rows * cols);
        for _ in 0..rows * cols {
            data.push(self.f64(f)?);
        }
        Matrix::from_vec(rows, cols, data).map_err(CliError::from)
    }
    fn rng(&mut self, f: &str) -> Result<StreamRng> {
        let seed: [u8; 32] = self.take(32, f)?.try_into().unwrap();
        let pos = self.u128(f)?;
        Ok(StreamRng::restore(seed, pos))
    }
}

pub fn save_checkpoint(
    path: &Path,
    state: &TrainState,
    cfg: &FasConfig,
    tcfg: &TrainConfig,
) -> Result<()> {
    let mut w = Writer { buf: Vec::new() };
    w.buf.extend_from_slice(&MAGIC);
    w.u16(VERSION);
    let cfg_json = serde_json::to_vec(cfg)
        .map_err(|e| CliError::Data(format!("serializing model config: {e}")))?;
    w.bytes(&cfg_json);
    let tcfg_json = serde_json::to_vec(tcfg)
        .map_err(|e| CliError::Data(format!("serializing train config: {e}")))?;
    w.bytes(&tcfg_json);

    w.u64(state.epoch as u64);
    w.u64(state.global_step);

    w.u32(state.params.len() as u32);
    for (name, m) in state.params.iter() {
        w.bytes(name.as_bytes());
        w.matrix(m);
    }

    w.u64(state.opt.step);
    w.f64(state.opt.beta1);
    w.f64(state.opt.beta2);
    w.f64(state.opt.eps);
    w.f64(state.opt.weight_decay);
    for m in &state.opt.m {
        w.matrix(m);
    }
    for v in &state.opt.v {
        w.matrix(v);
    }

    w.rng(&state.shuffle_rng);
    w.rng(&state.dropout_rng);

    let hist_json = serde_json::to_vec(&state.history)
        .map_err(|e| CliError::Data(format!("serializing history: {e}")))?;
    w.bytes(&hist_json);

    std::fs::write(path, w.buf).map_err(|e| io_err(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<(TrainState, FasConfig, TrainConfig)> {
    let buf = std::fs::read(path).map_err(|e| io_err(path, e))?;
    let mut r = Reader { buf: &buf, pos: 0, path };

    let magic = r.take(4, "magic")?;
    if magic != MAGIC {
        return Err(CliError::Data(format!(
            "{}: bad magic {:?}, expected \"FASC\"",
            path.display(),
            magic
        )));
    }
    let version = r.u16("version")?;
    if version != VERSION {
        return Err(CliError::Data(format!(
            "{}: unsupported checkpoint version {version}, expected {VERSION}",
            path.display()
        )));
    }
    let cfg: FasConfig = serde_json::from_slice(r.bytes("model config")?)
        .map_err(|e| CliError::Data(format!("{}: embedded model config: {e}", path.display())))?;
    let tcfg: TrainConfig = serde_json::from_slice(r.bytes("train config")?)
        .map_err(|e| CliError::Data(format!("{}: embedded train config: {e}", path.display())))?;

    let epoch = r.u64("epoch")? as usize;
    let global_step = r.u64("global step")?;

    let n_params = r.u32("parameter count")? as usize;
    let mut params = ParameterStore::new();
    for _ in 0..n_params {
        let name = String::from_utf8(r.bytes("parameter name")?.to_vec())
            .map_err(|e| CliError::Data(format!("{}: parameter name: {e}", path.display())))?;
        let m = r.matrix("parameter values")?;
        params.insert(name, m);
    }

    let step = r.u64("optimizer step")?;
    let beta1 = r.f64("beta1")?;
    let beta2 = r.f64("beta2")?;
    let eps = r.f64("eps")?;
    let weight_decay = r.f64("weight decay")?;
    let mut opt = OptimizerState::new(&params, weight_decay);
    opt.step = step;
    opt.beta1 = beta1;
    opt.beta2 = beta2;
    opt.eps = eps;
    for i in 0..n_params {
        let m = r.matrix("first moment")?;
        if m.shape() != opt.m[i].shape() {
            return Err(CliError::Data(format!(
                "{}: first-moment shape {:?} does not match parameter '{}'",
                path.display(),
                m.shape(),
                params.names()[i]
            )));
        }
        opt.m[i] = m;
    }
    for i in 0..n_params {
        let v = r.matrix("second moment")?;
        if v.shape() != opt.v[i].shape() {
            return Err(CliError::Data(format!(
                "{}: second-moment shape {:?} does not match parameter '{}'",
                path.display(),
                v.shape(),
                params.names()[i]
            )));
        }
        opt.v[i] = v;
    }

    let shuffle_rng = r.rng("shuffle rng state")?;
    let dropout_rng = r.rng("dropout rng state")?;

    let history: Vec<EpochRecord> = serde_json::from_slice(r.bytes("history")?)
        .map_err(|e| CliError::Data(format!("{}: history: {e}", path.display())))?;

    if r.pos != buf.len() {
        return Err(CliError::Data(format!(
            "{}: {} trailing bytes after history",
            path.display(),
            buf.len() - r.pos
        )));
    }

    Ok((
        TrainState { params, opt, epoch, global_step, shuffle_rng, dropout_rng, history },
        cfg,
        tcfg,
    ))
}
