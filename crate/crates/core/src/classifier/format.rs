//! Binary model container.
//!
//! Layout (little-endian):
//! `b"QCLS"`, u32 version, u64 bucket_count, u32 embedding_dim,
//! f32 × bucket_count·embedding_dim input rows, f32 × 2·embedding_dim output
//! rows, u32 label count, labels as (u32 length, UTF-8 bytes), then the
//! training config hash as (u32 length, UTF-8 bytes).

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use super::{ClassifierError, ClassifierModel};

const MAGIC: &[u8; 4] = b"QCLS";
const VERSION: u32 = 1;

fn write_str<W: Write>(w: &mut W, s: &str) -> std::io::Result<()> {
    w.write_u32::<LittleEndian>(s.len() as u32)?;
    w.write_all(s.as_bytes())
}

fn read_str<R: Read>(r: &mut R) -> std::io::Result<String> {
    let n = r.read_u32::<LittleEndian>()? as usize;
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
}

impl ClassifierModel {
    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(VERSION)?;
        w.write_u64::<LittleEndian>(self.bucket_count as u64)?;
        w.write_u32::<LittleEndian>(self.embedding_dim as u32)?;
        for v in self.input.iter().chain(&self.output) {
            w.write_f32::<LittleEndian>(*v)?;
        }
        w.write_u32::<LittleEndian>(2)?;
        for l in &self.label_names {
            write_str(w, l)?;
        }
        write_str(w, &self.train_config_hash)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity((self.input.len() + self.output.len()) * 4 + 128);
        self.write_to(&mut buf).expect("writing to a Vec cannot fail");
        buf
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self, String> {
        let err = |e: std::io::Error| e.to_string();
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(err)?;
        if &magic != MAGIC {
            return Err("bad magic".into());
        }
        let version = r.read_u32::<LittleEndian>().map_err(err)?;
        if version != VERSION {
            return Err(format!("unsupported version {version}"));
        }
        let buckets = r.read_u64::<LittleEndian>().map_err(err)? as usize;
        let dim = r.read_u32::<LittleEndian>().map_err(err)? as usize;
        let n_in = buckets
            .checked_mul(dim)
            .filter(|n| *n < (1 << 34))
            .ok_or("implausible matrix size")?;
        let mut input = vec![0f32; n_in];
        r.read_f32_into::<LittleEndian>(&mut input).map_err(err)?;
        let mut output = vec![0f32; 2 * dim];
        r.read_f32_into::<LittleEndian>(&mut output).map_err(err)?;
        let labels = r.read_u32::<LittleEndian>().map_err(err)?;
        if labels != 2 {
            return Err(format!("expected 2 labels, found {labels}"));
        }
        let neg = read_str(r).map_err(err)?;
        let pos = read_str(r).map_err(err)?;
        let hash = read_str(r).map_err(err)?;
        ClassifierModel::from_parts(buckets, dim, input, output, [neg, pos], hash)
    }

    pub fn save(&self, path: &Path) -> Result<(), ClassifierError> {
        if let Some(dir) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| ClassifierError::io(dir, e))?;
        }
        let tmp: PathBuf = path.with_extension("partial");
        let f = File::create(&tmp).map_err(|e| ClassifierError::io(&tmp, e))?;
        let mut w = BufWriter::new(f);
        self.write_to(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| ClassifierError::io(&tmp, e))?;
        drop(w);
        std::fs::rename(&tmp, path).map_err(|e| ClassifierError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self, ClassifierError> {
        let f = File::open(path).map_err(|e| ClassifierError::io(path, e))?;
        ClassifierModel::read_from(&mut BufReader::new(f)).map_err(|reason| ClassifierError::BadModel {
            path: path.to_path_buf(),
            reason,
        })
    }
}
