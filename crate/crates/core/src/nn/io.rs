use std::path::Path;

use super::network::Network;
use super::topology::{ConvVariant, Topology};
use super::Scalar;
use crate::error::{Error, Result};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"MSSN";
pub const WEIGHTS_VERSION: u32 = 1;

/// Binary layout: magic, version, `n_l n_p n_c n_f`, hidden layer count and
/// widths (all little-endian u32), then every parameter as little-endian f32
/// in [`Network::params`] order.
pub fn encode_weights<T: Scalar>(net: &Network<T>) -> Vec<u8> {
    let t = &net.topology;
    let mut out = Vec::new();
    out.extend_from_slice(WEIGHTS_MAGIC);
    let mut u32s = vec![
        WEIGHTS_VERSION,
        t.n_l as u32,
        t.n_p as u32,
        t.n_c() as u32,
        t.n_f as u32,
        t.fc_hidden.len() as u32,
    ];
    u32s.extend(t.fc_hidden.iter().map(|&h| h as u32));
    for v in u32s {
        out.extend_from_slice(&v.to_le_bytes());
    }
    for p in net.params() {
        out.extend_from_slice(&(p.to_f64() as f32).to_le_bytes());
    }
    out
}

pub fn decode_weights(bytes: &[u8], source: &Path) -> Result<Network<f32>> {
    let err = |m: &str| Error::parse(source, m.to_string());
    if bytes.get(..4) != Some(WEIGHTS_MAGIC.as_slice()) {
        return Err(err("not a weights file (bad magic)"));
    }
    let mut pos = 4;
    let mut next = || -> Result<u32> {
        let b = bytes.get(pos..pos + 4).ok_or_else(|| err("truncated header"))?;
        pos += 4;
        Ok(u32::from_le_bytes(b.try_into().expect("4 bytes")))
    };
    let version = next()?;
    if version != WEIGHTS_VERSION {
        return Err(err(&format!("unsupported weights version {version}")));
    }
    let n_l = next()? as usize;
    let n_p = next()? as usize;
    let n_c = next()? as usize;
    let n_f = next()? as usize;
    let hidden_count = next()? as usize;
    if hidden_count > 64 {
        return Err(err("implausible hidden layer count"));
    }
    let hidden = (0..hidden_count).map(|_| next().map(|h| h as usize)).collect::<Result<Vec<_>>>()?;
    let variant = ConvVariant::from_n_c(n_c)?;
    let topology = Topology::new(n_l, n_p, variant, n_f)?.with_hidden(hidden)?;
    let n = topology.parameter_count();
    let raster = &bytes[pos..];
    if raster.len() != n * 4 {
        return Err(err(&format!(
            "expected {} parameter bytes for {topology}, found {}",
            n * 4,
            raster.len()
        )));
    }
    let values: Vec<f32> = raster
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    let mut net = Network::<f32>::zeros(&topology);
    net.set_params(&values)?;
    Ok(net)
}

pub fn save_weights<T: Scalar>(net: &Network<T>, path: &Path) -> Result<()> {
    std::fs::write(path, encode_weights(net)).map_err(|e| Error::io(path, e))
}

pub fn load_weights(path: &Path) -> Result<Network<f32>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_weights(&bytes, path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let t = Topology::new(2, 1, ConvVariant::Triple3, 3)
            .unwrap()
            .with_hidden(vec![5])
            .unwrap();
        let net = Network::<f32>::gaussian(&t, 0.2, 8);
        let bytes = encode_weights(&net);
        assert_eq!(&bytes[..4], b"MSSN");
        assert_eq!(decode_weights(&bytes, Path::new("mem")).unwrap(), net);
        assert!(decode_weights(&bytes[..bytes.len() - 1], Path::new("mem")).is_err());
        let mut bad = bytes.clone();
        bad[4] = 9;
        assert!(decode_weights(&bad, Path::new("mem")).is_err());
    }
}
