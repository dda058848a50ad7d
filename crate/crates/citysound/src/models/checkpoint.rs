//! Binary model checkpoints.
//!
//! Layout: magic "CSNN" | version u32 | scheme name | input shape | time
//! downsample | seed | step | layer-spec table (trunk then heads) |
//! per-parameter blobs (value, Adam m/v, optional AMSGrad max; float32 LE) |
//! batch-norm running statistics. Loading rebuilds the network from the spec
//! table and seed, then overwrites its state, so a save/load round trip
//! reproduces predictions bit for bit.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::labels::LabelScheme;
use crate::models::train::TrainedModel;
use crate::nnet::{Layer, LayerSpec, Network, Real};

const MAGIC: &[u8; 4] = b"CSNN";
const VERSION: u32 = 1;

pub fn save_checkpoint<F: Real>(model: &TrainedModel<F>, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    wu32(&mut w, VERSION)?;

    let name = model.scheme.name().as_bytes();
    wu32(&mut w, name.len() as u32)?;
    w.write_all(name)?;

    let net = &model.network;
    for d in net.input_shape {
        wu32(&mut w, d as u32)?;
    }
    wu32(&mut w, model.time_downsample as u32)?;
    wu64(&mut w, net.seed)?;
    wu64(&mut w, net.step)?;

    wu32(&mut w, net.trunk.len() as u32)?;
    wu32(&mut w, net.heads.len() as u32)?;
    for head in &net.heads {
        wu32(&mut w, head.len() as u32)?;
    }
    for layer in net.layers() {
        write_spec(&mut w, &layer.spec())?;
    }

    for p in net.params() {
        wu32(&mut w, p.shape.len() as u32)?;
        for &d in &p.shape {
            wu32(&mut w, d as u32)?;
        }
        wf32s(&mut w, &p.value)?;
        wf32s(&mut w, &p.m)?;
        wf32s(&mut w, &p.v)?;
        w.write_all(&[u8::from(!p.v_max.is_empty())])?;
        if !p.v_max.is_empty() {
            wf32s(&mut w, &p.v_max)?;
        }
    }

    for layer in net.layers() {
        if let Layer::BatchNorm(bn) = layer {
            wf32s(&mut w, &bn.running_mean)?;
            wf32s(&mut w, &bn.running_var)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint<F: Real>(path: &Path) -> Result<TrainedModel<F>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    rx(&mut r, &mut magic, path)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("{}: not a model checkpoint", path.display())));
    }
    let version = ru32(&mut r, path)?;
    if version != VERSION {
        return Err(Error::Format(format!(
            "{}: checkpoint version {version}, expected {VERSION}",
            path.display()
        )));
    }

    let name_len = ru32(&mut r, path)? as usize;
    let mut name = vec![0u8; name_len];
    rx(&mut r, &mut name, path)?;
    let scheme: LabelScheme = String::from_utf8(name)
        .map_err(|_| Error::Format(format!("{}: scheme name not UTF-8", path.display())))?
        .parse()?;

    let input_shape = [
        ru32(&mut r, path)? as usize,
        ru32(&mut r, path)? as usize,
        ru32(&mut r, path)? as usize,
    ];
    let time_downsample = ru32(&mut r, path)? as usize;
    let seed = ru64(&mut r, path)?;
    let step = ru64(&mut r, path)?;

    let n_trunk = ru32(&mut r, path)? as usize;
    let n_heads = ru32(&mut r, path)? as usize;
    let mut head_lens = Vec::with_capacity(n_heads);
    for _ in 0..n_heads {
        head_lens.push(ru32(&mut r, path)? as usize);
    }
    let mut trunk = Vec::with_capacity(n_trunk);
    for _ in 0..n_trunk {
        trunk.push(read_spec(&mut r, path)?);
    }
    let mut heads = Vec::with_capacity(n_heads);
    for &len in &head_lens {
        let mut head = Vec::with_capacity(len);
        for _ in 0..len {
            head.push(read_spec(&mut r, path)?);
        }
        heads.push(head);
    }

    let mut network: Network<F> = Network::from_specs(input_shape, &trunk, &heads, seed)?;
    network.step = step;

    for p in network.params_mut() {
        let ndim = ru32(&mut r, path)? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(ru32(&mut r, path)? as usize);
        }
        if shape != p.shape {
            return Err(Error::Format(format!(
                "{}: stored parameter shape {shape:?} does not match architecture {:?}",
                path.display(),
                p.shape
            )));
        }
        rf32s(&mut r, &mut p.value, path)?;
        rf32s(&mut r, &mut p.m, path)?;
        rf32s(&mut r, &mut p.v, path)?;
        let mut flag = [0u8; 1];
        rx(&mut r, &mut flag, path)?;
        if flag[0] == 1 {
            p.v_max = vec![F::zero(); p.value.len()];
            let mut vmax = std::mem::take(&mut p.v_max);
            rf32s(&mut r, &mut vmax, path)?;
            p.v_max = vmax;
        }
    }

    for layer in network.layers_mut() {
        if let Layer::BatchNorm(bn) = layer {
            let mut mean = std::mem::take(&mut bn.running_mean);
            rf32s(&mut r, &mut mean, path)?;
            bn.running_mean = mean;
            let mut var = std::mem::take(&mut bn.running_var);
            rf32s(&mut r, &mut var, path)?;
            bn.running_var = var;
        }
    }

    Ok(TrainedModel {
        network,
        scheme,
        time_downsample,
        training_log: Vec::new(),
        aborted: None,
    })
}

fn write_spec<W: Write>(w: &mut W, spec: &LayerSpec) -> Result<()> {
    match *spec {
        LayerSpec::Conv2d { filters, kernel, stride } => {
            w.write_all(&[0])?;
            wu32(w, filters as u32)?;
            wu32(w, kernel.0 as u32)?;
            wu32(w, kernel.1 as u32)?;
            wu32(w, stride as u32)?;
        }
        LayerSpec::BatchNorm => w.write_all(&[1])?,
        LayerSpec::MaxPool2d { pool, stride } => {
            w.write_all(&[2])?;
            wu32(w, pool.0 as u32)?;
            wu32(w, pool.1 as u32)?;
            wu32(w, stride as u32)?;
        }
        LayerSpec::Dropout { rate } => {
            w.write_all(&[3])?;
            w.write_all(&rate.to_le_bytes())?;
        }
        LayerSpec::Flatten => w.write_all(&[4])?,
        LayerSpec::Dense { units } => {
            w.write_all(&[5])?;
            wu32(w, units as u32)?;
        }
        LayerSpec::Relu => w.write_all(&[6])?,
        LayerSpec::Softmax => w.write_all(&[7])?,
        LayerSpec::Sigmoid => w.write_all(&[8])?,
    }
    Ok(())
}

fn read_spec<R: Read>(r: &mut R, path: &Path) -> Result<LayerSpec> {
    let mut kind = [0u8; 1];
    rx(r, &mut kind, path)?;
    Ok(match kind[0] {
        0 => LayerSpec::Conv2d {
            filters: ru32(r, path)? as usize,
            kernel: (ru32(r, path)? as usize, ru32(r, path)? as usize),
            stride: ru32(r, path)? as usize,
        },
        1 => LayerSpec::BatchNorm,
        2 => LayerSpec::MaxPool2d {
            pool: (ru32(r, path)? as usize, ru32(r, path)? as usize),
            stride: ru32(r, path)? as usize,
        },
        3 => {
            let mut b = [0u8; 8];
            rx(r, &mut b, path)?;
            LayerSpec::Dropout { rate: f64::from_le_bytes(b) }
        }
        4 => LayerSpec::Flatten,
        5 => LayerSpec::Dense { units: ru32(r, path)? as usize },
        6 => LayerSpec::Relu,
        7 => LayerSpec::Softmax,
        8 => LayerSpec::Sigmoid,
        k => {
            return Err(Error::Format(format!(
                "{}: unknown layer kind {k} in checkpoint",
                path.display()
            )))
        }
    })
}

fn wu32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn wu64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn wf32s<W: Write, F: Real>(w: &mut W, vs: &[F]) -> Result<()> {
    for v in vs {
        w.write_all(&(v.to_f32().unwrap()).to_le_bytes())?;
    }
    Ok(())
}

fn ru32<R: Read>(r: &mut R, path: &Path) -> Result<u32> {
    let mut b = [0u8; 4];
    rx(r, &mut b, path)?;
    Ok(u32::from_le_bytes(b))
}

fn ru64<R: Read>(r: &mut R, path: &Path) -> Result<u64> {
    let mut b = [0u8; 8];
    rx(r, &mut b, path)?;
    Ok(u64::from_le_bytes(b))
}

fn rf32s<R: Read, F: Real>(r: &mut R, out: &mut [F], path: &Path) -> Result<()> {
    let mut buf = vec![0u8; out.len() * 4];
    rx(r, &mut buf, path)?;
    for (v, b) in out.iter_mut().zip(buf.chunks_exact(4)) {
        *v = F::from(f32::from_le_bytes(b.try_into().unwrap())).unwrap();
    }
    Ok(())
}

fn rx<R: Read>(r: &mut R, buf: &mut [u8], path: &Path) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Format(format!("{}: checkpoint truncated", path.display())))
}
