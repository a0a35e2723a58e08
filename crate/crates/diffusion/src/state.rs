//! Learned segment embeddings and cross-attention projections, plus their
//! checkpoint directory format.

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;
use smite_core::{get_f64, get_u32, put_f64, put_u32};

use crate::error::{DiffusionError, Result};

const EMB_MAGIC: &[u8; 4] = b"EMB1";
const CAD_MAGIC: &[u8; 4] = b"CAD1";

/// Key and value projections of one cross-attention layer, each
/// `text_dim × hidden`.
#[derive(Debug, Clone, PartialEq)]
pub struct CrossAttentionKv {
    pub to_k: Array2<f64>,
    pub to_v: Array2<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SegModelState {
    /// `(K+1) × text_dim`, row 0 is background.
    pub text_embeddings: Array2<f64>,
    /// Replacement key/value weights for every cross-attention layer.
    pub cross_attention: Vec<CrossAttentionKv>,
    pub base_model_id: String,
    /// Free-form description of the captured attention layers.
    pub capture: String,
}

impl SegModelState {
    pub fn num_segments(&self) -> u8 {
        (self.text_embeddings.nrows().saturating_sub(1)) as u8
    }

    pub fn text_dim(&self) -> usize {
        self.text_embeddings.ncols()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut w = BufWriter::new(fs::File::create(dir.join("embeddings.bin"))?);
        w.write_all(EMB_MAGIC)?;
        write_matrix(&mut w, &self.text_embeddings)?;
        w.flush()?;

        let mut w = BufWriter::new(fs::File::create(dir.join("ca_deltas.bin"))?);
        w.write_all(CAD_MAGIC)?;
        put_u32(&mut w, self.cross_attention.len() as u32)?;
        for layer in &self.cross_attention {
            write_matrix(&mut w, &layer.to_k)?;
            write_matrix(&mut w, &layer.to_v)?;
        }
        w.flush()?;

        let meta = format!(
            "base_model_id={}\nnum_segments={}\ntext_dim={}\ncross_layers={}\ncapture={}\n",
            self.base_model_id,
            self.num_segments(),
            self.text_dim(),
            self.cross_attention.len(),
            self.capture
        );
        fs::write(dir.join("meta.txt"), meta)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let meta = fs::read_to_string(dir.join("meta.txt"))?;
        let field = |key: &str| -> Result<String> {
            meta.lines()
                .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix('=')))
                .map(str::to_owned)
                .ok_or_else(|| DiffusionError::Checkpoint(format!("meta.txt lacks `{key}`")))
        };
        let base_model_id = field("base_model_id")?;
        let capture = field("capture").unwrap_or_default();
        let k: usize = field("num_segments")?
            .parse()
            .map_err(|_| DiffusionError::Checkpoint("num_segments is not an integer".into()))?;

        let mut r = BufReader::new(fs::File::open(dir.join("embeddings.bin"))?);
        expect_magic(&mut r, EMB_MAGIC, "embeddings.bin")?;
        let text_embeddings = read_matrix(&mut r)?;
        if text_embeddings.nrows() != k + 1 {
            return Err(DiffusionError::Checkpoint(format!(
                "{} embeddings for K = {k}",
                text_embeddings.nrows()
            )));
        }

        let mut r = BufReader::new(fs::File::open(dir.join("ca_deltas.bin"))?);
        expect_magic(&mut r, CAD_MAGIC, "ca_deltas.bin")?;
        let layers = get_u32(&mut r)? as usize;
        let mut cross_attention = Vec::with_capacity(layers);
        for _ in 0..layers {
            let to_k = read_matrix(&mut r)?;
            let to_v = read_matrix(&mut r)?;
            cross_attention.push(CrossAttentionKv { to_k, to_v });
        }
        Ok(SegModelState {
            text_embeddings,
            cross_attention,
            base_model_id,
            capture,
        })
    }
}

fn write_matrix(w: &mut impl Write, m: &Array2<f64>) -> std::io::Result<()> {
    put_u32(w, m.nrows() as u32)?;
    put_u32(w, m.ncols() as u32)?;
    for v in m.iter() {
        put_f64(w, *v)?;
    }
    Ok(())
}

fn read_matrix(r: &mut impl Read) -> Result<Array2<f64>> {
    let rows = get_u32(r)? as usize;
    let cols = get_u32(r)? as usize;
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        data.push(get_f64(r)?);
    }
    Array2::from_shape_vec((rows, cols), data).map_err(|e| DiffusionError::Checkpoint(e.to_string()))
}

fn expect_magic(r: &mut impl Read, magic: &[u8; 4], name: &str) -> Result<()> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    if &b != magic {
        return Err(DiffusionError::Checkpoint(format!("{name} has a bad header")));
    }
    Ok(())
}
