//! Parameter checkpoints: a JSON architecture header followed by the flat
//! parameter vector as little-endian 64-bit reals.
//!
//! Layout: 8-byte magic `FLTCKPT1`, u32 LE header length, UTF-8 JSON header
//! (`input_shape`, `layers`, `param_count`), then `param_count` f64 LE values.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::layer::LayerSpec;
use crate::nn::model::{Mode, Model};

const MAGIC: &[u8; 8] = b"FLTCKPT1";

#[derive(Serialize, Deserialize)]
struct Header {
    input_shape: Vec<usize>,
    layers: Vec<LayerSpec>,
    param_count: usize,
}

pub fn save(model: &Model, path: &Path) -> Result<()> {
    let header = Header {
        input_shape: model.input_shape.clone(),
        layers: model.layers.clone(),
        param_count: model.param_count(),
    };
    let header_bytes = serde_json::to_vec(&header)?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&(header_bytes.len() as u32).to_le_bytes()).map_err(io)?;
    w.write_all(&header_bytes).map_err(io)?;
    for v in model.flatten_params() {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Model> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let io = |e| Error::io(path, e);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(io)?;
    if &magic != MAGIC {
        return Err(Error::InvalidArgument(format!(
            "{} is not a checkpoint (bad magic)",
            path.display()
        )));
    }
    let mut len_bytes = [0u8; 4];
    r.read_exact(&mut len_bytes).map_err(io)?;
    let header_len = u32::from_le_bytes(len_bytes) as usize;
    let mut header_bytes = vec![0u8; header_len];
    r.read_exact(&mut header_bytes).map_err(io)?;
    let header: Header = serde_json::from_slice(&header_bytes)?;

    let mut model = Model::new(header.input_shape, header.layers, 0)?;
    if model.param_count() != header.param_count {
        return Err(Error::ParamLength {
            expected: model.param_count(),
            got: header.param_count,
        });
    }
    let mut flat = Vec::with_capacity(header.param_count);
    let mut buf = [0u8; 8];
    for _ in 0..header.param_count {
        r.read_exact(&mut buf).map_err(io)?;
        flat.push(f64::from_le_bytes(buf));
    }
    model.unflatten_params(&flat)?;
    model.set_mode(Mode::Eval);
    Ok(model)
}
