//! Binary checkpoint format.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "CFGP"  u32 version  u32 kind_len  kind (utf-8)  u32 block_count
//! per block: u32 name_len  name  u32 ndim  u64 dims[ndim]  f64 data[Π dims]
//! u32 crc32 of every preceding byte
//! ```
//!
//! Dense networks are stored as `{prefix}layer{i}.weight` `(out, in)`,
//! `{prefix}layer{i}.bias` `(out)` and `{prefix}activations` (one code per layer).

use std::path::Path;

use ndarray::{Array1, Array2};

use crate::diffusion::{Denoiser, OutputScaling, ProxyClassifier};
use crate::error::{Error, Result};
use crate::nn::{Activation, Dense, DenseNet};
use crate::policy::{Actor, ClassicalActor, Critic, HybridActor};
use crate::qsim::{VqcConfig, VqcParams};

pub const MAGIC: &[u8; 4] = b"CFGP";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub blocks: Vec<Block>,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| corrupt("truncated checkpoint"))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn string(&mut self) -> Result<String> {
        let n = self.u32()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| corrupt("name is not utf-8"))
    }
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u32).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

impl Checkpoint {
    pub fn new(kind: impl Into<String>) -> Self {
        Self {
            kind: kind.into(),
            blocks: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, data: Vec<f64>) {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        self.blocks.push(Block {
            name: name.into(),
            shape,
            data,
        });
    }

    pub fn block(&self, name: &str) -> Result<&Block> {
        self.blocks
            .iter()
            .find(|b| b.name == name)
            .ok_or_else(|| corrupt(format!("missing block {name:?}")))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        put_str(&mut out, &self.kind);
        out.extend_from_slice(&(self.blocks.len() as u32).to_le_bytes());
        for b in &self.blocks {
            put_str(&mut out, &b.name);
            out.extend_from_slice(&(b.shape.len() as u32).to_le_bytes());
            for &d in &b.shape {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
            for v in &b.data {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 8 {
            return Err(corrupt("file too short"));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("4 bytes"));
        if crc32fast::hash(body) != stored {
            return Err(corrupt("crc mismatch"));
        }
        let mut r = Reader { bytes: body, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(corrupt("bad magic"));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(corrupt(format!("unsupported format version {version}")));
        }
        let kind = r.string()?;
        let count = r.u32()? as usize;
        let mut blocks = Vec::new();
        for _ in 0..count {
            let name = r.string()?;
            let ndim = r.u32()? as usize;
            let mut shape = Vec::new();
            for _ in 0..ndim {
                shape.push(usize::try_from(r.u64()?).map_err(|_| corrupt("dimension overflow"))?);
            }
            let len = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| corrupt("dimension overflow"))?;
            let raw = r.take(len.checked_mul(8).ok_or_else(|| corrupt("dimension overflow"))?)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            blocks.push(Block { name, shape, data });
        }
        if r.pos != body.len() {
            return Err(corrupt("trailing bytes after last block"));
        }
        Ok(Self { kind, blocks })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)
            .map_err(|e| corrupt(format!("cannot read {}: {e}", path.display())))?;
        Self::from_bytes(&bytes).map_err(|e| corrupt(format!("{}: {e}", path.display())))
    }

    fn expect_kind(&self, kind: &str) -> Result<()> {
        if self.kind == kind {
            Ok(())
        } else {
            Err(corrupt(format!("expected a {kind:?} checkpoint, found {:?}", self.kind)))
        }
    }
}

fn activation_code(a: Activation) -> f64 {
    match a {
        Activation::Identity => 0.0,
        Activation::Tanh => 1.0,
        Activation::Relu => 2.0,
    }
}

fn activation_from_code(c: f64) -> Result<Activation> {
    match c {
        0.0 => Ok(Activation::Identity),
        1.0 => Ok(Activation::Tanh),
        2.0 => Ok(Activation::Relu),
        _ => Err(corrupt(format!("unknown activation code {c}"))),
    }
}

fn push_net(ck: &mut Checkpoint, net: &DenseNet, prefix: &str) {
    let codes: Vec<f64> = net.layers().iter().map(|l| activation_code(l.activation)).collect();
    ck.push(format!("{prefix}activations"), vec![codes.len()], codes);
    for (i, l) in net.layers().iter().enumerate() {
        let (o, n) = l.weight.dim();
        ck.push(format!("{prefix}layer{i}.weight"), vec![o, n], l.weight.iter().copied().collect());
        ck.push(format!("{prefix}layer{i}.bias"), vec![o], l.bias.to_vec());
    }
}

fn read_net(ck: &Checkpoint, prefix: &str) -> Result<DenseNet> {
    let codes = &ck.block(&format!("{prefix}activations"))?.data;
    let mut layers = Vec::with_capacity(codes.len());
    for (i, &c) in codes.iter().enumerate() {
        let w = ck.block(&format!("{prefix}layer{i}.weight"))?;
        let b = ck.block(&format!("{prefix}layer{i}.bias"))?;
        if w.shape.len() != 2 || b.shape.len() != 1 {
            return Err(corrupt(format!("{prefix}layer{i} has malformed shapes")));
        }
        let weight = Array2::from_shape_vec((w.shape[0], w.shape[1]), w.data.clone())
            .map_err(|e| corrupt(e.to_string()))?;
        layers.push(Dense {
            weight,
            bias: Array1::from(b.data.clone()),
            activation: activation_from_code(c)?,
        });
    }
    DenseNet::from_layers(layers)
}

/// Models that round-trip through a [`Checkpoint`].
pub trait Persist: Sized {
    fn to_checkpoint(&self) -> Checkpoint;
    fn from_checkpoint(ck: &Checkpoint) -> Result<Self>;

    fn save(&self, path: &Path) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

impl Persist for Denoiser {
    fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new("denoiser");
        push_net(&mut ck, &self.net, "net.");
        let (r, c) = self.embeddings.dim();
        ck.push("class_embeddings", vec![r, c], self.embeddings.iter().copied().collect());
        let table = self.scaling.table();
        ck.push("output_scaling", vec![table.len(), 3], table.iter().flatten().copied().collect());
        ck
    }

    fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind("denoiser")?;
        let e = ck.block("class_embeddings")?;
        if e.shape.len() != 2 {
            return Err(corrupt("class_embeddings must be 2-d"));
        }
        let emb = Array2::from_shape_vec((e.shape[0], e.shape[1]), e.data.clone())
            .map_err(|err| corrupt(err.to_string()))?;
        let sc = ck.block("output_scaling")?;
        if sc.shape.len() != 2 || sc.shape[1] != 3 {
            return Err(corrupt("output_scaling must be n×3"));
        }
        let table = sc.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
        Denoiser::from_parts(read_net(ck, "net.")?, emb, OutputScaling::from_table(table)?)
    }
}

impl Persist for ProxyClassifier {
    fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new("classifier");
        push_net(&mut ck, &self.net, "net.");
        ck
    }

    fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind("classifier")?;
        ProxyClassifier::from_net(read_net(ck, "net.")?)
    }
}

impl Persist for Critic {
    fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new("critic");
        push_net(&mut ck, &self.net, "net.");
        ck
    }

    fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        ck.expect_kind("critic")?;
        Critic::from_net(read_net(ck, "net.")?)
    }
}

impl Persist for Actor {
    fn to_checkpoint(&self) -> Checkpoint {
        match self {
            Actor::Hybrid(h) => {
                let mut ck = Checkpoint::new("actor.quantum");
                let c = h.vqc.config();
                ck.push("vqc.angles", vec![c.depth, 3, c.n_qubits], h.vqc.angles().to_vec());
                push_net(&mut ck, &h.head, "head.");
                ck
            }
            Actor::Classical(c) => {
                let mut ck = Checkpoint::new("actor.classical");
                push_net(&mut ck, &c.net, "net.");
                ck
            }
        }
    }

    fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        match ck.kind.as_str() {
            "actor.quantum" => {
                let a = ck.block("vqc.angles")?;
                if a.shape.len() != 3 || a.shape[1] != 3 {
                    return Err(corrupt("vqc.angles must have shape (depth, 3, n_qubits)"));
                }
                let config = VqcConfig {
                    n_qubits: a.shape[2],
                    depth: a.shape[0],
                };
                let vqc = VqcParams::from_angles(config, a.data.clone())?;
                Ok(Actor::Hybrid(HybridActor::from_parts(vqc, read_net(ck, "head.")?)?))
            }
            "actor.classical" => Ok(Actor::Classical(ClassicalActor::from_net(read_net(ck, "net.")?)?)),
            other => Err(corrupt(format!("expected an actor checkpoint, found {other:?}"))),
        }
    }
}
