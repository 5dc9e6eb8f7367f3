//! Binary network checkpoints: header, architecture string, dimensions, then
//! every parameter tensor in declaration order as little-endian `f64`.

use crate::binio::{Decoder, Encoder};
use crate::error::{Error, Result};
use crate::scalar::Real;

use super::arch::Architecture;
use super::network::Network;

const MAGIC: &[u8; 8] = b"ACNNCKPT";
const VERSION: u32 = 1;

/// `config_hash` identifies the configuration the network was trained with.
pub fn encode_checkpoint<T: Real>(network: &Network<T>, config_hash: &[u8; 32]) -> Vec<u8> {
    let mut enc = Encoder::new(MAGIC, VERSION);
    enc.bytes(config_hash);
    enc.str(&network.architecture().to_string());
    for dim in [
        network.input_dim(),
        network.output_dim(),
        network.orientations(),
        network.scales(),
    ] {
        enc.u64(dim as u64);
    }
    let tensors = network.tensors();
    enc.u64(tensors.len() as u64);
    for t in tensors {
        enc.u64(t.len() as u64);
        enc.f64s(t.iter().map(|v| v.as_f64()));
    }
    enc.finish()
}

/// Returns the network and the configuration hash stored with it.
pub fn decode_checkpoint<T: Real>(bytes: &[u8]) -> Result<(Network<T>, [u8; 32])> {
    let mut dec = Decoder::new(bytes, MAGIC, VERSION)?;
    let mut hash = [0u8; 32];
    hash.copy_from_slice(dec.bytes(32)?);
    let architecture: Architecture = dec.str()?.parse()?;
    let input_dim = dec.usize()?;
    let output_dim = dec.usize()?;
    let orientations = dec.usize()?;
    let scales = dec.usize()?;
    let mut network = Network::zeros(architecture, input_dim, output_dim, orientations, scales)?;
    if network.output_dim() != output_dim {
        return Err(Error::Format("checkpoint output dimension disagrees with its architecture".into()));
    }
    let count = dec.usize()?;
    let mut tensors = network.tensors_mut();
    if count != tensors.len() {
        return Err(Error::Format(format!(
            "checkpoint holds {count} tensors, architecture needs {}",
            tensors.len()
        )));
    }
    for (i, tensor) in tensors.iter_mut().enumerate() {
        let len = dec.usize()?;
        if len != tensor.len() {
            return Err(Error::Format(format!(
                "tensor {i} has {len} values, expected {}",
                tensor.len()
            )));
        }
        for (slot, v) in tensor.iter_mut().zip(dec.f64s(len)?) {
            if !v.is_finite() {
                return Err(Error::Format(format!("tensor {i} contains a non-finite value")));
            }
            *slot = T::lit(v);
        }
    }
    dec.finish()?;
    Ok((network, hash))
}
