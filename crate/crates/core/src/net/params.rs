use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{NetError, NetSpec};

const MAGIC: &[u8; 6] = b"NASPW1";

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub shape: Vec<usize>,
    /// Row-major values.
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn zeros(shape: &[usize]) -> Tensor {
        Tensor { shape: shape.to_vec(), data: vec![0.0; shape.iter().product()] }
    }
}

/// Named tensors in a fixed order, with a counter bumped on every update.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    tensors: Vec<(String, Tensor)>,
    pub version: u64,
}

impl ParamStore {
    pub fn insert(&mut self, name: &str, t: Tensor) {
        match self.tensors.iter_mut().find(|(n, _)| n == name) {
            Some(slot) => slot.1 = t,
            None => self.tensors.push((name.to_string(), t)),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.tensors.iter_mut().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.tensors.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Same names and shapes, all zero.
    pub fn zeros_like(&self) -> ParamStore {
        ParamStore {
            tensors: self.tensors.iter().map(|(n, t)| (n.clone(), Tensor::zeros(&t.shape))).collect(),
            version: 0,
        }
    }

    /// `self += scale * other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &ParamStore, scale: f64) {
        for ((_, a), (_, b)) in self.tensors.iter_mut().zip(&other.tensors) {
            a.data.iter_mut().zip(&b.data).for_each(|(x, y)| *x += scale * y);
        }
        self.version += 1;
    }

    /// All values, tensor after tensor.
    pub fn flat(&self) -> Vec<f64> {
        self.tensors.iter().flat_map(|(_, t)| t.data.iter().copied()).collect()
    }

    pub fn flat_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.tensors.iter_mut().flat_map(|(_, t)| t.data.iter_mut())
    }

    pub(super) fn sort_like(&mut self, other: &ParamStore) {
        self.tensors.sort_by_key(|(n, _)| other.tensors.iter().position(|(m, _)| m == n));
    }

    pub(super) fn check_shapes(&self, shapes: &[(String, Vec<usize>)]) -> Result<(), NetError> {
        if self.tensors.len() != shapes.len() {
            return Err(NetError::Mismatch(format!("expected {} tensors, found {}", shapes.len(), self.tensors.len())));
        }
        for (name, shape) in shapes {
            match self.get(name) {
                None => return Err(NetError::Mismatch(format!("missing tensor {name}"))),
                Some(t) if &t.shape != shape => {
                    return Err(NetError::Mismatch(format!("{name} has shape {:?}, expected {shape:?}", t.shape)))
                }
                Some(t) if t.data.iter().any(|v| !v.is_finite()) => return Err(NetError::NonFinite(name.clone())),
                Some(_) => {}
            }
        }
        Ok(())
    }
}

/// Writes the tensors in the NASPW1 format.
pub fn save_params(store: &ParamStore, path: &Path) -> Result<(), NetError> {
    let mut buf: Vec<u8> = MAGIC.to_vec();
    for (name, t) in &store.tensors {
        buf.write_u32::<LittleEndian>(name.len() as u32).expect("vec write");
        buf.extend_from_slice(name.as_bytes());
        buf.write_u32::<LittleEndian>(t.shape.len() as u32).expect("vec write");
        for &d in &t.shape {
            buf.write_u32::<LittleEndian>(d as u32).expect("vec write");
        }
        for &v in &t.data {
            buf.write_f64::<LittleEndian>(v).expect("vec write");
        }
    }
    fs::write(path, buf).map_err(|source| NetError::Io { path: path.display().to_string(), source })
}

/// Reads a NASPW1 file and checks it against the network.
pub fn load_params(path: &Path, spec: &NetSpec) -> Result<ParamStore, NetError> {
    let p = path.display().to_string();
    let bytes = fs::read(path).map_err(|source| NetError::Io { path: p.clone(), source })?;
    let store = parse(&bytes, &p)?;
    store.check_shapes(&spec.tensor_shapes())?;
    Ok(store)
}

fn parse(bytes: &[u8], path: &str) -> Result<ParamStore, NetError> {
    let err = |offset: u64, msg: &str| NetError::Format { path: path.to_string(), offset, msg: msg.to_string() };
    if bytes.len() < MAGIC.len() || !bytes.starts_with(b"NASPW") {
        return Err(err(0, "not a weight file"));
    }
    if &bytes[..MAGIC.len()] != MAGIC {
        return Err(err(5, &format!("unsupported version {:?}", String::from_utf8_lossy(&bytes[5..6]))));
    }
    let mut c = Cursor::new(&bytes[MAGIC.len()..]);
    let base = MAGIC.len() as u64;
    let mut store = ParamStore::default();
    while (c.position() as usize) < c.get_ref().len() {
        let at = base + c.position();
        let truncated = |_| err(at, "truncated record");
        let len = c.read_u32::<LittleEndian>().map_err(truncated)? as usize;
        let mut name = vec![0u8; len];
        c.read_exact(&mut name).map_err(truncated)?;
        let name = String::from_utf8(name).map_err(|_| err(at, "tensor name is not UTF-8"))?;
        let rank = c.read_u32::<LittleEndian>().map_err(truncated)? as usize;
        if rank > 8 {
            return Err(err(at, "implausible rank"));
        }
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(c.read_u32::<LittleEndian>().map_err(truncated)? as usize);
        }
        let count: usize = shape.iter().product();
        let left = c.get_ref().len() - c.position() as usize;
        if count.checked_mul(8).is_none_or(|b| b > left) {
            return Err(err(at, "truncated values"));
        }
        let mut data = Vec::with_capacity(count);
        for _ in 0..count {
            data.push(c.read_f64::<LittleEndian>().map_err(truncated)?);
        }
        if store.get(&name).is_some() {
            return Err(err(at, &format!("duplicate tensor {name}")));
        }
        store.insert(&name, Tensor { shape, data });
    }
    Ok(store)
}
