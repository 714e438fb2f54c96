//! Parameter checkpoint format.
//!
//! ```text
//! magic    b"OPN1"
//! u32      layer count (all networks, canonical order)
//! per layer:
//!   u32    rows (outputs)
//!   u32    cols (inputs)
//!   f64    weights, row-major, rows*cols values
//!   f64    biases, rows values
//! ```
//!
//! All integers and floats are little-endian. Network boundaries are not
//! stored; loading fills a template whose layer shapes must match exactly.

use std::io::{Read, Write};

use super::network::Layer;
use super::params::ModelParams;
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"OPN1";

pub fn write_checkpoint<W: Write>(params: &ModelParams, mut out: W) -> Result<()> {
    let layers: Vec<&Layer> = params.nets.iter().flat_map(|n| n.layers()).collect();
    out.write_all(CHECKPOINT_MAGIC)?;
    out.write_all(&(layers.len() as u32).to_le_bytes())?;
    for layer in layers {
        out.write_all(&(layer.outputs() as u32).to_le_bytes())?;
        out.write_all(&(layer.inputs() as u32).to_le_bytes())?;
        for w in layer.weights.iter() {
            out.write_all(&w.to_le_bytes())?;
        }
        for b in layer.bias.iter() {
            out.write_all(&b.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn checkpoint_bytes(params: &ModelParams) -> Vec<u8> {
    let mut buf = Vec::new();
    write_checkpoint(params, &mut buf).expect("writing to a Vec cannot fail");
    buf
}

/// Reads a checkpoint into a copy of `template`.
pub fn read_checkpoint<R: Read>(mut input: R, template: &ModelParams) -> Result<ModelParams> {
    let mut magic = [0u8; 4];
    input.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Format("checkpoint magic is not OPN1".into()));
    }
    let count = read_u32(&mut input)? as usize;
    let mut params = template.clone();
    let expected: usize = params.nets.iter().map(|n| n.layers().len()).sum();
    if count != expected {
        return Err(Error::Format(format!(
            "checkpoint has {count} layers, model expects {expected}"
        )));
    }
    for layer in params.nets.iter_mut().flat_map(|n| n.layers_mut().iter_mut()) {
        let rows = read_u32(&mut input)? as usize;
        let cols = read_u32(&mut input)? as usize;
        if rows != layer.outputs() || cols != layer.inputs() {
            return Err(Error::Format(format!(
                "layer shape {rows}x{cols} does not match model {}x{}",
                layer.outputs(),
                layer.inputs()
            )));
        }
        for w in layer.weights.iter_mut() {
            *w = read_f64(&mut input)?;
        }
        for b in layer.bias.iter_mut() {
            *b = read_f64(&mut input)?;
        }
    }
    if !params.is_finite() {
        return Err(Error::Format("checkpoint contains non-finite parameters".into()));
    }
    Ok(params)
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}
