//! Named parameter arrays, seeded initialization, and the `.prm` container.
//!
//! `.prm` layout, all little-endian: magic `PRM1`, `u32` array count, then
//! per array: `u16` name length, UTF-8 name, `u8` ndim, `u32` dims, and the
//! IEEE-754 f64 payload in row-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{ArrayD, IxDyn};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::seeds;

use super::spec::ModelSpec;

const PRM_MAGIC: &[u8; 4] = b"PRM1";

/// Ordered collection of named parameter arrays.
#[derive(Clone, Debug)]
pub struct ParamStore {
    entries: Vec<(String, ArrayD<f64>)>,
}

/// Gradient arrays aligned index-for-index with a `ParamStore`.
#[derive(Clone, Debug)]
pub struct Gradients(pub Vec<ArrayD<f64>>);

impl Gradients {
    pub fn zeros_like(store: &ParamStore) -> Self {
        Gradients(
            store
                .entries
                .iter()
                .map(|(_, a)| ArrayD::zeros(a.raw_dim()))
                .collect(),
        )
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|a| a.iter().all(|v| v.is_finite()))
    }
}

impl ParamStore {
    /// Seeded Gaussian initialization following the per-layer fan-in rule of
    /// the spec; biases start at zero. Draw order is the declaration order,
    /// row-major within each array.
    pub fn init(spec: &ModelSpec, seed: u64) -> ParamStore {
        let mut rng = seeds::rng_from(seed);
        let mut entries = Vec::new();
        for (name, shape) in spec.array_shapes() {
            let std = spec.init_std(name);
            let array = if std > 0.0 {
                let len: usize = shape.iter().product();
                let data: Vec<f64> = (0..len)
                    .map(|_| {
                        let z: f64 = rng.sample(StandardNormal);
                        z * std
                    })
                    .collect();
                ArrayD::from_shape_vec(IxDyn(&shape), data).expect("shape matches data length")
            } else {
                ArrayD::zeros(IxDyn(&shape))
            };
            entries.push((name.to_string(), array));
        }
        ParamStore { entries }
    }

    pub fn from_entries(entries: Vec<(String, ArrayD<f64>)>) -> ParamStore {
        ParamStore { entries }
    }

    pub fn entries(&self) -> &[(String, ArrayD<f64>)] {
        &self.entries
    }

    pub fn arrays_mut(&mut self) -> impl Iterator<Item = &mut ArrayD<f64>> {
        self.entries.iter_mut().map(|(_, a)| a)
    }

    pub fn array(&self, name: &str) -> &ArrayD<f64> {
        self.entries
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, a)| a)
            .unwrap_or_else(|| panic!("no parameter array named '{name}'"))
    }

    pub fn array_mut(&mut self, name: &str) -> &mut ArrayD<f64> {
        self.entries
            .iter_mut()
            .find(|(n, _)| n == name)
            .map(|(_, a)| a)
            .unwrap_or_else(|| panic!("no parameter array named '{name}'"))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|(_, a)| a.iter().all(|v| v.is_finite()))
    }

    /// Sum of squared entries over all arrays (diagnostic for divergence).
    pub fn squared_norm(&self) -> f64 {
        self.entries
            .iter()
            .map(|(_, a)| a.iter().map(|v| v * v).sum::<f64>())
            .sum()
    }

    /// Checks that entry names and shapes match `spec` exactly.
    pub fn validate_shapes(&self, spec: &ModelSpec) -> Result<()> {
        let expected = spec.array_shapes();
        if expected.len() != self.entries.len() {
            return Err(Error::data(format!(
                "parameter store has {} arrays, architecture expects {}",
                self.entries.len(),
                expected.len()
            )));
        }
        for ((name, shape), (have_name, have)) in expected.iter().zip(&self.entries) {
            if name != have_name {
                return Err(Error::data(format!(
                    "parameter array '{have_name}' where '{name}' was expected"
                )));
            }
            if have.shape() != shape.as_slice() {
                return Err(Error::data(format!(
                    "parameter array '{name}' has shape {:?}, expected {shape:?}",
                    have.shape()
                )));
            }
        }
        Ok(())
    }
}

/// Write the parameter arrays to a `.prm` file.
pub fn save_params(store: &ParamStore, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    out.write_all(PRM_MAGIC)?;
    out.write_all(&(store.entries.len() as u32).to_le_bytes())?;
    for (name, array) in &store.entries {
        let name_bytes = name.as_bytes();
        out.write_all(&(name_bytes.len() as u16).to_le_bytes())?;
        out.write_all(name_bytes)?;
        out.write_all(&[array.ndim() as u8])?;
        for &d in array.shape() {
            out.write_all(&(d as u32).to_le_bytes())?;
        }
        // entries() never stores non-standard layouts, but stay defensive
        let standard = array.as_standard_layout();
        for v in standard.iter() {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Read a `.prm` file back into a parameter store.
pub fn load_params(path: &Path) -> Result<ParamStore> {
    let mut file = BufReader::new(File::open(path).map_err(|e| Error::format(path, format!("cannot open: {e}")))?);
    let mut magic = [0u8; 4];
    file.read_exact(&mut magic)
        .map_err(|_| Error::format(path, "file shorter than header"))?;
    if &magic != PRM_MAGIC {
        return Err(Error::format(path, format!("bad magic {magic:?}, expected \"PRM1\"")));
    }
    let mut count_bytes = [0u8; 4];
    file.read_exact(&mut count_bytes)
        .map_err(|_| Error::format(path, "file shorter than header"))?;
    let count = u32::from_le_bytes(count_bytes) as usize;

    let mut entries = Vec::with_capacity(count);
    for idx in 0..count {
        let mut len_bytes = [0u8; 2];
        file.read_exact(&mut len_bytes)
            .map_err(|_| Error::format(path, format!("truncated at array {idx} name length")))?;
        let name_len = u16::from_le_bytes(len_bytes) as usize;
        let mut name_bytes = vec![0u8; name_len];
        file.read_exact(&mut name_bytes)
            .map_err(|_| Error::format(path, format!("truncated at array {idx} name")))?;
        let name = String::from_utf8(name_bytes)
            .map_err(|_| Error::format(path, format!("array {idx} name is not UTF-8")))?;
        let mut ndim = [0u8; 1];
        file.read_exact(&mut ndim)
            .map_err(|_| Error::format(path, format!("truncated at '{name}' ndim")))?;
        let mut shape = Vec::with_capacity(ndim[0] as usize);
        for _ in 0..ndim[0] {
            let mut dim_bytes = [0u8; 4];
            file.read_exact(&mut dim_bytes)
                .map_err(|_| Error::format(path, format!("truncated at '{name}' dims")))?;
            shape.push(u32::from_le_bytes(dim_bytes) as usize);
        }
        let len: usize = shape.iter().product();
        let mut payload = vec![0u8; len * 8];
        file.read_exact(&mut payload)
            .map_err(|_| Error::format(path, format!("'{name}' payload shorter than {} bytes", len * 8)))?;
        let data: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        let array = ArrayD::from_shape_vec(IxDyn(&shape), data)
            .map_err(|e| Error::format(path, format!("'{name}' shape: {e}")))?;
        entries.push((name, array));
    }
    let mut trailing = Vec::new();
    file.read_to_end(&mut trailing)?;
    if !trailing.is_empty() {
        return Err(Error::format(path, format!("{} trailing bytes after last array", trailing.len())));
    }
    Ok(ParamStore { entries })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::spec::ModelKind;
    use tempfile::tempdir;

    #[test]
    fn init_shapes_match_spec() {
        let spec = ModelSpec::new(ModelKind::Ccnn, 9, 2);
        let store = ParamStore::init(&spec, 3);
        store.validate_shapes(&spec).unwrap();
        assert!(store.is_finite());
    }

    #[test]
    fn init_is_deterministic() {
        let spec = ModelSpec::new(ModelKind::Deep, 7, 1);
        let a = ParamStore::init(&spec, 42);
        let b = ParamStore::init(&spec, 42);
        for ((_, x), (_, y)) in a.entries().iter().zip(b.entries()) {
            for (u, v) in x.iter().zip(y.iter()) {
                assert_eq!(u.to_bits(), v.to_bits());
            }
        }
    }

    #[test]
    fn biases_start_at_zero() {
        let spec = ModelSpec::new(ModelKind::Simple, 6, 1);
        let store = ParamStore::init(&spec, 0);
        assert!(store.array("b1").iter().all(|&v| v == 0.0));
        assert!(store.array("b2").iter().all(|&v| v == 0.0));
    }

    #[test]
    fn prm_round_trips_bit_exactly() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.prm");
        let spec = ModelSpec::new(ModelKind::Ccnn, 5, 2);
        let store = ParamStore::init(&spec, 11);
        save_params(&store, &path).unwrap();
        let back = load_params(&path).unwrap();
        back.validate_shapes(&spec).unwrap();
        for ((na, a), (nb, b)) in store.entries().iter().zip(back.entries()) {
            assert_eq!(na, nb);
            for (x, y) in a.iter().zip(b.iter()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
    }

    #[test]
    fn prm_rejects_truncation() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("model.prm");
        let spec = ModelSpec::new(ModelKind::Simple, 4, 1);
        save_params(&ParamStore::init(&spec, 1), &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        assert!(load_params(&path).is_err());
    }
}
