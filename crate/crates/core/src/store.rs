//! File-backed simulated disk array.
//!
//! On-disk layout of an array directory:
//!
//! ```text
//! meta.json            array metadata (replaced atomically via rename)
//! journal.log          one tab-separated line per mutating operation
//! array.lock           advisory lock: exclusive for writers, shared for readers
//! disk-<id>/slot-<j>.bin  one block of exactly `block_size` bytes
//! ```
//!
//! `meta.json` is pretty-printed JSON with a trailing newline. All integers
//! are decimal; the random part of the generator is stored as
//! `{rows, cols, hex}` where `hex` is [`BitMatrix::to_hex`]. The stored
//! matrix is compared with the one regenerated from the seed and stable IDs
//! whenever the array is opened.
//!
//! One array holds one object (one stripe).

use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::code::{CodeMetrics, CodeSpec, Codeword, DecodeReport, Rbec, ScrubOutcome, XorCounter};
use crate::error::Error;
use crate::exec::Exec;
use crate::gf2::BitMatrix;
use crate::layout::ArrayGeometry;
use crate::randmat::DERIVATION_ID;

pub const META_FILE: &str = "meta.json";
pub const JOURNAL_FILE: &str = "journal.log";
pub const LOCK_FILE: &str = "array.lock";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Error, Debug)]
pub enum StoreError {
    #[error(transparent)]
    Code(#[from] Error),
    #[error("unrecoverable: {0}")]
    Unrecoverable(#[source] Error),
    #[error("io error at {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("directory {0} is not empty")]
    DirectoryNotEmpty(PathBuf),
    #[error("bad metadata: {0}")]
    Metadata(String),
    #[error("array is locked by another process")]
    Locked,
    #[error("array was opened read-only")]
    ReadOnly,
    #[error("unknown disk {0}")]
    UnknownDisk(u64),
    #[error("disk {0} is not an active data disk")]
    NotDataDisk(u64),
    #[error("disk {0} is not an active parity disk")]
    NotParityDisk(u64),
    #[error("cannot remove the last {0} disk")]
    LastDisk(&'static str),
    #[error("array is degraded (failed disks {0:?})")]
    Degraded(Vec<u64>),
    #[error("object of {len} bytes exceeds capacity of {capacity} bytes")]
    ObjectTooLarge { len: u64, capacity: u64 },
    #[error("object of {len} bytes would not fit the shrunk capacity of {capacity} bytes")]
    ObjectTooLargeAfterShrink { len: u64, capacity: u64 },
    #[error("array holds no object")]
    NoObject,
}

pub type StoreResult<T> = std::result::Result<T, StoreError>;

trait IoContext<T> {
    fn at(self, path: &Path) -> StoreResult<T>;
}

impl<T> IoContext<T> for io::Result<T> {
    fn at(self, path: &Path) -> StoreResult<T> {
        self.map_err(|source| StoreError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

fn unrecoverable(e: Error) -> StoreError {
    match e {
        Error::DecodeFailure { .. } | Error::InsufficientBlocks { .. } => StoreError::Unrecoverable(e),
        other => StoreError::Code(other),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiskRole {
    Data,
    Parity,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DiskStatus {
    Online,
    Failed,
    Removed,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiskRecord {
    pub disk_id: u64,
    pub role: DiskRole,
    /// Directory relative to the array root.
    pub path: String,
    pub status: DiskStatus,
    /// Block writes since the disk was created. Never decreases.
    pub write_counter: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixRecord {
    pub rows: usize,
    pub cols: usize,
    pub hex: String,
}

impl From<&BitMatrix> for MatrixRecord {
    fn from(m: &BitMatrix) -> Self {
        MatrixRecord {
            rows: m.rows(),
            cols: m.cols(),
            hex: m.to_hex(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArrayMetadata {
    pub format_version: u32,
    pub derivation_function_id: String,
    pub code: CodeSpec,
    pub geometry: ArrayGeometry,
    pub block_size: usize,
    /// `None` until an object has been stored.
    pub object_length: Option<u64>,
    pub disks: Vec<DiskRecord>,
    pub next_disk_id: u64,
    pub next_col_id: u64,
    pub next_row_id: u64,
    pub random_part: MatrixRecord,
}

impl ArrayMetadata {
    pub fn to_text(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("metadata serializes");
        s.push('\n');
        s
    }

    pub fn from_text(text: &str) -> StoreResult<ArrayMetadata> {
        let meta: ArrayMetadata =
            serde_json::from_str(text).map_err(|e| StoreError::Metadata(e.to_string()))?;
        meta.validate()?;
        Ok(meta)
    }

    fn active(&self, role: DiskRole) -> impl Iterator<Item = &DiskRecord> {
        self.disks
            .iter()
            .filter(move |d| d.role == role && d.status != DiskStatus::Removed)
    }

    pub fn capacity(&self) -> u64 {
        (self.geometry.k() * self.block_size) as u64
    }

    pub fn validate(&self) -> StoreResult<()> {
        let bad = |msg: String| Err(StoreError::Metadata(msg));
        if self.format_version != FORMAT_VERSION {
            return bad(format!("unsupported format version {}", self.format_version));
        }
        if self.derivation_function_id != DERIVATION_ID {
            return bad(format!(
                "derivation function {} is not {DERIVATION_ID}",
                self.derivation_function_id
            ));
        }
        self.code.validate()?;
        let g = self.geometry;
        ArrayGeometry::new(g.data_disks, g.parity_disks, g.strip_depth)?;
        if g.k() != self.code.k() || g.n() != self.code.n() {
            return bad(format!(
                "geometry gives (n={}, k={}) but code has (n={}, k={})",
                g.n(),
                g.k(),
                self.code.n(),
                self.code.k()
            ));
        }
        if self.active(DiskRole::Data).count() != g.data_disks
            || self.active(DiskRole::Parity).count() != g.parity_disks
        {
            return bad("disk registry disagrees with geometry".into());
        }
        if self.block_size == 0 {
            return bad("block size must be positive".into());
        }
        if let Some(len) = self.object_length {
            if len > self.capacity() {
                return bad(format!("object length {len} exceeds capacity {}", self.capacity()));
            }
        }
        let r = &self.random_part;
        let stored = BitMatrix::from_hex(r.rows, r.cols, &r.hex)?;
        let regenerated = crate::code::build_random_part(&self.code)?;
        if stored != regenerated {
            return bad("stored generator does not match the one derived from the seed".into());
        }
        Ok(())
    }
}

fn slot_file(disk_dir: &Path, slot: usize) -> PathBuf {
    disk_dir.join(format!("slot-{slot}.bin"))
}

fn split_object(object: &[u8], k: usize, block_size: usize) -> Vec<Vec<u8>> {
    (0..k)
        .map(|i| {
            let mut block = vec![0u8; block_size];
            let lo = (i * block_size).min(object.len());
            let hi = ((i + 1) * block_size).min(object.len());
            block[..hi - lo].copy_from_slice(&object[lo..hi]);
            block
        })
        .collect()
}

/// An open array directory.
#[derive(Debug)]
pub struct DiskArray {
    dir: PathBuf,
    meta: ArrayMetadata,
    code: Rbec,
    read_only: bool,
    _lock: File,
}

impl DiskArray {
    /// Creates a new array in `dir`, which must be absent or empty.
    pub fn init(dir: &Path, geometry: ArrayGeometry, block_size: usize, seed: u64) -> StoreResult<DiskArray> {
        if block_size == 0 {
            return Err(Error::InvalidDimension("block size must be positive".into()).into());
        }
        if dir.exists() && fs::read_dir(dir).at(dir)?.next().is_some() {
            return Err(StoreError::DirectoryNotEmpty(dir.to_path_buf()));
        }
        fs::create_dir_all(dir).at(dir)?;
        let lock = lock_file(dir, true)?;

        let code = CodeSpec::new(geometry.n(), geometry.k(), seed)?;
        let rbec = Rbec::new(code.clone())?;
        let disks: Vec<DiskRecord> = (0..geometry.disks() as u64)
            .map(|id| DiskRecord {
                disk_id: id,
                role: if geometry.is_data_disk(id as usize) { DiskRole::Data } else { DiskRole::Parity },
                path: format!("disk-{id}"),
                status: DiskStatus::Online,
                write_counter: 0,
            })
            .collect();
        for d in &disks {
            let p = dir.join(&d.path);
            fs::create_dir_all(&p).at(&p)?;
        }
        let meta = ArrayMetadata {
            format_version: FORMAT_VERSION,
            derivation_function_id: DERIVATION_ID.to_string(),
            next_disk_id: disks.len() as u64,
            next_col_id: code.k() as u64,
            next_row_id: (code.n() - code.k()) as u64,
            random_part: rbec.random_part().into(),
            code,
            geometry,
            block_size,
            object_length: None,
            disks,
        };
        let mut array = DiskArray {
            dir: dir.to_path_buf(),
            meta,
            code: rbec,
            read_only: false,
            _lock: lock,
        };
        array.save_meta()?;
        array.journal(
            "init",
            &format!(
                "data={} parity={} depth={} block_size={block_size} seed={seed}",
                geometry.data_disks, geometry.parity_disks, geometry.strip_depth
            ),
        )?;
        Ok(array)
    }

    /// Opens an existing array for writing (exclusive lock).
    pub fn open(dir: &Path) -> StoreResult<DiskArray> {
        DiskArray::open_with(dir, false)
    }

    /// Opens an existing array for reading (shared lock).
    pub fn open_read_only(dir: &Path) -> StoreResult<DiskArray> {
        DiskArray::open_with(dir, true)
    }

    fn open_with(dir: &Path, read_only: bool) -> StoreResult<DiskArray> {
        let lock = lock_file(dir, !read_only)?;
        let path = dir.join(META_FILE);
        let text = fs::read_to_string(&path).at(&path)?;
        let meta = ArrayMetadata::from_text(&text)?;
        let code = Rbec::new(meta.code.clone())?;
        Ok(DiskArray {
            dir: dir.to_path_buf(),
            meta,
            code,
            read_only,
            _lock: lock,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn metadata(&self) -> &ArrayMetadata {
        &self.meta
    }

    pub fn code(&self) -> &Rbec {
        &self.code
    }

    pub fn geometry(&self) -> ArrayGeometry {
        self.meta.geometry
    }

    pub fn metrics(&self) -> CodeMetrics {
        self.code.metrics()
    }

    pub fn disk(&self, id: u64) -> StoreResult<&DiskRecord> {
        self.meta
            .disks
            .iter()
            .find(|d| d.disk_id == id)
            .ok_or(StoreError::UnknownDisk(id))
    }

    pub fn data_disk_ids(&self) -> Vec<u64> {
        self.meta.active(DiskRole::Data).map(|d| d.disk_id).collect()
    }

    pub fn parity_disk_ids(&self) -> Vec<u64> {
        self.meta.active(DiskRole::Parity).map(|d| d.disk_id).collect()
    }

    /// Active disk IDs in grid order: data disks then parity disks.
    pub fn disk_order(&self) -> Vec<u64> {
        let mut ids = self.data_disk_ids();
        ids.extend(self.parity_disk_ids());
        ids
    }

    pub fn failed_disk_ids(&self) -> Vec<u64> {
        self.meta
            .disks
            .iter()
            .filter(|d| d.status == DiskStatus::Failed)
            .map(|d| d.disk_id)
            .collect()
    }

    pub fn write_counters(&self) -> Vec<(u64, u64)> {
        self.meta.disks.iter().map(|d| (d.disk_id, d.write_counter)).collect()
    }

    fn disk_dir(&self, id: u64) -> PathBuf {
        self.dir.join(format!("disk-{id}"))
    }

    fn record_mut(&mut self, id: u64) -> &mut DiskRecord {
        self.meta
            .disks
            .iter_mut()
            .find(|d| d.disk_id == id)
            .expect("disk id checked by caller")
    }

    fn ensure_writable(&self) -> StoreResult<()> {
        if self.read_only {
            Err(StoreError::ReadOnly)
        } else {
            Ok(())
        }
    }

    fn write_block(&mut self, id: u64, slot: usize, bytes: &[u8]) -> StoreResult<()> {
        let dir = self.disk_dir(id);
        fs::create_dir_all(&dir).at(&dir)?;
        let path = slot_file(&dir, slot);
        fs::write(&path, bytes).at(&path)?;
        self.record_mut(id).write_counter += 1;
        Ok(())
    }

    fn read_block(&self, id: u64, slot: usize) -> StoreResult<Vec<u8>> {
        let path = slot_file(&self.disk_dir(id), slot);
        let bytes = fs::read(&path).at(&path)?;
        if bytes.len() != self.meta.block_size {
            return Err(StoreError::Metadata(format!(
                "{} holds {} bytes, expected {}",
                path.display(),
                bytes.len(),
                self.meta.block_size
            )));
        }
        Ok(bytes)
    }

    fn clear_disk(&self, id: u64) -> StoreResult<()> {
        let dir = self.disk_dir(id);
        match fs::remove_dir_all(&dir) {
            Err(e) if e.kind() != io::ErrorKind::NotFound => return Err(e).at(&dir),
            _ => {}
        }
        Ok(())
    }

    fn save_meta(&mut self) -> StoreResult<()> {
        let path = self.dir.join(META_FILE);
        let tmp = self.dir.join(format!("{META_FILE}.tmp"));
        {
            let mut f = File::create(&tmp).at(&tmp)?;
            f.write_all(self.meta.to_text().as_bytes()).at(&tmp)?;
            f.sync_all().at(&tmp)?;
        }
        fs::rename(&tmp, &path).at(&path)?;
        if let Ok(d) = File::open(&self.dir) {
            let _ = d.sync_all();
        }
        Ok(())
    }

    fn journal(&self, op: &str, params: &str) -> StoreResult<()> {
        let path = self.dir.join(JOURNAL_FILE);
        let now = SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default();
        let mut f = OpenOptions::new().create(true).append(true).open(&path).at(&path)?;
        writeln!(f, "{}.{:03}\t{op}\t{params}", now.as_secs(), now.subsec_millis()).at(&path)
    }

    /// Replaces the code spec and geometry, keeping metadata consistent.
    fn set_code(&mut self, spec: CodeSpec, geometry: ArrayGeometry) -> StoreResult<()> {
        let code = Rbec::new(spec)?;
        self.meta.random_part = code.random_part().into();
        self.meta.code = code.spec().clone();
        self.meta.geometry = geometry;
        self.code = code;
        Ok(())
    }

    /// Reads every block on online disks; blocks on failed disks are absent.
    pub fn read_codeword(&self) -> StoreResult<Codeword> {
        let depth = self.meta.geometry.strip_depth;
        let mut blocks = Vec::with_capacity(self.code.n());
        for id in self.disk_order() {
            let online = self.disk(id)?.status == DiskStatus::Online;
            for slot in 0..depth {
                blocks.push(if online { Some(self.read_block(id, slot)?) } else { None });
            }
        }
        Ok(Codeword::new(self.code.k(), self.meta.block_size, blocks)?)
    }

    fn require_object(&self) -> StoreResult<u64> {
        self.meta.object_length.ok_or(StoreError::NoObject)
    }

    /// The `k` data blocks, read directly when every data disk is online and
    /// decoded from all online blocks otherwise.
    pub fn read_data_blocks(&self, exec: Exec, counter: &XorCounter) -> StoreResult<(Vec<Vec<u8>>, DecodeReport)> {
        self.require_object()?;
        let depth = self.meta.geometry.strip_depth;
        let data_ids = self.data_disk_ids();
        let healthy = data_ids
            .iter()
            .all(|&id| self.meta.disks.iter().any(|d| d.disk_id == id && d.status == DiskStatus::Online));
        if healthy {
            let mut blocks = Vec::with_capacity(self.code.k());
            for id in data_ids {
                for slot in 0..depth {
                    blocks.push(self.read_block(id, slot)?);
                }
            }
            let report = DecodeReport {
                fast_path: true,
                xor: counter.stats(),
                ..Default::default()
            };
            return Ok((blocks, report));
        }
        let word = self.read_codeword()?;
        self.code.decode_with(&word, exec, counter).map_err(unrecoverable)
    }

    pub fn get(&self) -> StoreResult<Vec<u8>> {
        Ok(self.get_with(Exec::default(), &XorCounter::new())?.0)
    }

    pub fn get_with(&self, exec: Exec, counter: &XorCounter) -> StoreResult<(Vec<u8>, DecodeReport)> {
        let len = self.require_object()?;
        let (blocks, report) = self.read_data_blocks(exec, counter)?;
        let mut object = blocks.concat();
        object.truncate(len as usize);
        Ok((object, report))
    }

    /// Writes the full codeword for `data` to every online disk.
    fn write_stripe(&mut self, data: &[Vec<u8>]) -> StoreResult<()> {
        let word = self.code.encode(data)?;
        let depth = self.meta.geometry.strip_depth;
        for (pos, id) in self.disk_order().into_iter().enumerate() {
            if self.disk(id)?.status != DiskStatus::Online {
                continue;
            }
            for slot in 0..depth {
                self.write_block(id, slot, word.block(pos * depth + slot).unwrap())?;
            }
        }
        Ok(())
    }

    pub fn put(&mut self, object: &[u8]) -> StoreResult<()> {
        self.ensure_writable()?;
        let failed = self.failed_disk_ids();
        if !failed.is_empty() {
            return Err(StoreError::Degraded(failed));
        }
        let capacity = self.meta.capacity();
        if object.len() as u64 > capacity {
            return Err(StoreError::ObjectTooLarge {
                len: object.len() as u64,
                capacity,
            });
        }
        let data = split_object(object, self.code.k(), self.meta.block_size);
        self.write_stripe(&data)?;
        self.meta.object_length = Some(object.len() as u64);
        self.save_meta()?;
        self.journal("put", &format!("len={}", object.len()))
    }

    fn active_record(&self, id: u64) -> StoreResult<&DiskRecord> {
        let d = self.disk(id)?;
        if d.status == DiskStatus::Removed {
            return Err(StoreError::UnknownDisk(id));
        }
        Ok(d)
    }

    /// Marks a disk failed and erases its blocks.
    pub fn fail_disk(&mut self, id: u64) -> StoreResult<()> {
        self.ensure_writable()?;
        self.active_record(id)?;
        self.clear_disk(id)?;
        self.record_mut(id).status = DiskStatus::Failed;
        self.save_meta()?;
        self.journal("fail", &format!("disk={id}"))
    }

    /// Recomputes a failed disk's blocks and brings it back online.
    pub fn repair_disk(&mut self, id: u64) -> StoreResult<()> {
        self.ensure_writable()?;
        if self.active_record(id)?.status == DiskStatus::Online {
            return Ok(());
        }
        if self.meta.object_length.is_some() {
            let (data, _) = self.read_data_blocks(Exec::default(), &XorCounter::new())?;
            let word = self.code.encode(&data)?;
            let depth = self.meta.geometry.strip_depth;
            let pos = self.disk_order().iter().position(|&d| d == id).unwrap();
            for slot in 0..depth {
                self.write_block(id, slot, word.block(pos * depth + slot).unwrap())?;
            }
        } else {
            let dir = self.disk_dir(id);
            fs::create_dir_all(&dir).at(&dir)?;
        }
        self.record_mut(id).status = DiskStatus::Online;
        self.save_meta()?;
        self.journal("repair", &format!("disk={id}"))
    }

    pub fn scrub(&self) -> StoreResult<ScrubOutcome> {
        self.require_object()?;
        let word = self.read_codeword()?;
        Ok(self.code.scrub(&word)?)
    }

    /// Drops a data disk: its generator rows and columns are retired, the
    /// object is re-split over the remaining data disks and every remaining
    /// strip is rewritten.
    pub fn remove_data_disk(&mut self, id: u64) -> StoreResult<()> {
        self.ensure_writable()?;
        let data_ids = self.data_disk_ids();
        let Some(pos) = data_ids.iter().position(|&d| d == id) else {
            self.disk(id)?;
            return Err(StoreError::NotDataDisk(id));
        };
        if data_ids.len() == 1 {
            return Err(StoreError::LastDisk("data"));
        }
        let g = self.meta.geometry;
        let shrunk = ArrayGeometry::new(g.data_disks - 1, g.parity_disks, g.strip_depth)?;
        let object = match self.meta.object_length {
            Some(_) => {
                let object = self.get()?;
                let capacity = (shrunk.k() * self.meta.block_size) as u64;
                if object.len() as u64 > capacity {
                    return Err(StoreError::ObjectTooLargeAfterShrink {
                        len: object.len() as u64,
                        capacity,
                    });
                }
                Some(object)
            }
            None => None,
        };

        let mut spec = self.meta.code.clone();
        spec.data_col_ids.drain(pos * g.strip_depth..(pos + 1) * g.strip_depth);
        self.set_code(spec, shrunk)?;
        self.clear_disk(id)?;
        self.record_mut(id).status = DiskStatus::Removed;
        if let Some(object) = object {
            let data = split_object(&object, self.code.k(), self.meta.block_size);
            self.write_stripe(&data)?;
        }
        self.save_meta()?;
        self.journal("remove-data", &format!("disk={id}"))
    }

    /// Adds a data disk with fresh column IDs and re-stripes the object.
    pub fn add_data_disk(&mut self) -> StoreResult<u64> {
        self.ensure_writable()?;
        let object = match self.meta.object_length {
            Some(_) => Some(self.get()?),
            None => None,
        };
        let g = self.meta.geometry;
        let grown = ArrayGeometry::new(g.data_disks + 1, g.parity_disks, g.strip_depth)?;
        let id = self.meta.next_disk_id;
        let first_col = self.meta.next_col_id;
        let mut spec = self.meta.code.clone();
        spec.data_col_ids.extend(first_col..first_col + g.strip_depth as u64);
        self.set_code(spec, grown)?;
        self.meta.next_disk_id += 1;
        self.meta.next_col_id += g.strip_depth as u64;
        self.meta.disks.push(DiskRecord {
            disk_id: id,
            role: DiskRole::Data,
            path: format!("disk-{id}"),
            status: DiskStatus::Online,
            write_counter: 0,
        });
        let dir = self.disk_dir(id);
        fs::create_dir_all(&dir).at(&dir)?;
        if let Some(object) = object {
            let data = split_object(&object, self.code.k(), self.meta.block_size);
            self.write_stripe(&data)?;
        }
        self.save_meta()?;
        self.journal("add-data", &format!("disk={id}"))?;
        Ok(id)
    }

    /// Drops a parity disk. Only the metadata changes.
    pub fn remove_parity_disk(&mut self, id: u64) -> StoreResult<()> {
        self.ensure_writable()?;
        let parity_ids = self.parity_disk_ids();
        let Some(pos) = parity_ids.iter().position(|&d| d == id) else {
            self.disk(id)?;
            return Err(StoreError::NotParityDisk(id));
        };
        if parity_ids.len() == 1 {
            return Err(StoreError::LastDisk("parity"));
        }
        let g = self.meta.geometry;
        let shrunk = ArrayGeometry::new(g.data_disks, g.parity_disks - 1, g.strip_depth)?;
        let mut spec = self.meta.code.clone();
        spec.parity_row_ids.drain(pos * g.strip_depth..(pos + 1) * g.strip_depth);
        self.set_code(spec, shrunk)?;
        self.clear_disk(id)?;
        self.record_mut(id).status = DiskStatus::Removed;
        self.save_meta()?;
        self.journal("remove-parity", &format!("disk={id}"))
    }

    /// Adds a parity disk with fresh row IDs; only the new disk is written.
    pub fn add_parity_disk(&mut self) -> StoreResult<u64> {
        self.ensure_writable()?;
        let data = match self.meta.object_length {
            Some(_) => Some(self.read_data_blocks(Exec::default(), &XorCounter::new())?.0),
            None => None,
        };
        let g = self.meta.geometry;
        let grown = ArrayGeometry::new(g.data_disks, g.parity_disks + 1, g.strip_depth)?;
        let id = self.meta.next_disk_id;
        let first_row = self.meta.next_row_id;
        let old_parity_rows = self.meta.code.parity_row_ids.len();
        let mut spec = self.meta.code.clone();
        spec.parity_row_ids.extend(first_row..first_row + g.strip_depth as u64);
        self.set_code(spec, grown)?;
        self.meta.next_disk_id += 1;
        self.meta.next_row_id += g.strip_depth as u64;
        self.meta.disks.push(DiskRecord {
            disk_id: id,
            role: DiskRole::Parity,
            path: format!("disk-{id}"),
            status: DiskStatus::Online,
            write_counter: 0,
        });
        let dir = self.disk_dir(id);
        fs::create_dir_all(&dir).at(&dir)?;
        if let Some(data) = data {
            let counter = XorCounter::new();
            for slot in 0..g.strip_depth {
                let block = self.code.parity_block(old_parity_rows + slot, &data, &counter);
                self.write_block(id, slot, &block)?;
            }
        }
        self.save_meta()?;
        self.journal("add-parity", &format!("disk={id}"))?;
        Ok(id)
    }
}

fn lock_file(dir: &Path, exclusive: bool) -> StoreResult<File> {
    let path = dir.join(LOCK_FILE);
    let f = OpenOptions::new()
        .create(true)
        .truncate(false)
        .write(true)
        .open(&path)
        .at(&path)?;
    let res = if exclusive { f.try_lock() } else { f.try_lock_shared() };
    match res {
        Ok(()) => Ok(f),
        Err(fs::TryLockError::WouldBlock) => Err(StoreError::Locked),
        Err(fs::TryLockError::Error(e)) => Err(e).at(&path),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::TempDir;

    fn example(dir: &Path) -> DiskArray {
        DiskArray::init(dir, ArrayGeometry::new(5, 3, 5).unwrap(), 16, 42).unwrap()
    }

    fn object(len: usize) -> Vec<u8> {
        (0..len).map(|i| (i * 31 + 7) as u8).collect()
    }

    #[test]
    fn init_matches_example_geometry() {
        let tmp = TempDir::new().unwrap();
        let a = example(tmp.path());
        assert_eq!((a.code().n(), a.code().k()), (40, 25));
        assert_eq!(a.disk_order(), (0..8).collect::<Vec<_>>());
        assert!(tmp.path().join("disk-7").is_dir());
        let g = a.code().generator().clone();
        drop(a);
        let a = DiskArray::open(tmp.path()).unwrap();
        assert_eq!(a.code().generator(), &g);
    }

    #[test]
    fn init_rejects_non_empty_dir() {
        let tmp = TempDir::new().unwrap();
        fs::write(tmp.path().join("junk"), b"x").unwrap();
        assert!(matches!(
            DiskArray::init(tmp.path(), ArrayGeometry::new(1, 1, 1).unwrap(), 4, 0),
            Err(StoreError::DirectoryNotEmpty(_))
        ));
    }

    #[test]
    fn minimal_array_round_trips() {
        let tmp = TempDir::new().unwrap();
        let mut a = DiskArray::init(tmp.path(), ArrayGeometry::new(1, 1, 1).unwrap(), 8, 1).unwrap();
        assert!(matches!(a.get(), Err(StoreError::NoObject)));
        a.put(b"hello").unwrap();
        assert_eq!(a.get().unwrap(), b"hello");
    }

    #[test]
    fn put_sizes() {
        let tmp = TempDir::new().unwrap();
        let mut a = example(tmp.path());
        a.put(&[]).unwrap();
        assert_eq!(a.get().unwrap(), Vec::<u8>::new());
        let word = a.read_codeword().unwrap();
        assert!(word.blocks().iter().flatten().all(|b| b.iter().all(|&x| x == 0)));

        let full = object(25 * 16);
        a.put(&full).unwrap();
        assert_eq!(a.get().unwrap(), full);
        assert!(matches!(
            a.put(&object(25 * 16 + 1)),
            Err(StoreError::ObjectTooLarge { len: 401, capacity: 400 })
        ));

        // Data strips hold the object verbatim.
        let obj = object(333);
        a.put(&obj).unwrap();
        let mut raw = Vec::new();
        for d in 0..5 {
            for s in 0..5 {
                raw.extend(fs::read(tmp.path().join(format!("disk-{d}/slot-{s}.bin"))).unwrap());
            }
        }
        assert_eq!(&raw[..333], &obj[..]);
        assert!(raw[333..].iter().all(|&b| b == 0));
    }

    #[test]
    fn fast_path_and_failure_recovery() {
        let tmp = TempDir::new().unwrap();
        let mut a = example(tmp.path());
        let obj = object(390);
        a.put(&obj).unwrap();
        let counter = XorCounter::new();
        let (got, report) = a.get_with(Exec::Sequential, &counter).unwrap();
        assert_eq!(got, obj);
        assert!(report.fast_path);
        assert_eq!(counter.stats().word_xors, 0);

        a.fail_disk(2).unwrap();
        assert!(!tmp.path().join("disk-2").exists());
        match a.get() {
            Ok(got) => assert_eq!(got, obj),
            Err(StoreError::Unrecoverable(_)) => {}
            Err(e) => panic!("{e}"),
        }
        assert!(matches!(a.put(&obj), Err(StoreError::Degraded(ids)) if ids == vec![2]));
    }

    #[test]
    fn repair_restores_parity_bytes() {
        let tmp = TempDir::new().unwrap();
        let mut a = example(tmp.path());
        a.put(&object(400)).unwrap();
        let snapshot: Vec<Vec<u8>> = (0..5).map(|s| a.read_block(6, s).unwrap()).collect();
        a.fail_disk(6).unwrap();
        a.repair_disk(6).unwrap();
        let after: Vec<Vec<u8>> = (0..5).map(|s| a.read_block(6, s).unwrap()).collect();
        assert_eq!(snapshot, after);
        assert_eq!(a.disk(6).unwrap().status, DiskStatus::Online);

        let before = a.write_counters();
        a.repair_disk(3).unwrap();
        assert_eq!(a.write_counters(), before);
        assert!(matches!(a.fail_disk(99), Err(StoreError::UnknownDisk(99))));
    }

    #[test]
    fn metadata_text_round_trips_byte_exactly() {
        let tmp = TempDir::new().unwrap();
        let mut a = example(tmp.path());
        a.put(&object(100)).unwrap();
        let text = fs::read_to_string(tmp.path().join(META_FILE)).unwrap();
        let meta = ArrayMetadata::from_text(&text).unwrap();
        assert_eq!(meta.to_text(), text);
        assert_eq!(&meta, a.metadata());
    }

    #[test]
    fn tampered_metadata_is_rejected() {
        let tmp = TempDir::new().unwrap();
        let a = example(tmp.path());
        let mut meta = a.metadata().clone();
        meta.code.seed ^= 1;
        assert!(matches!(meta.validate(), Err(StoreError::Metadata(_))));
        let mut meta = a.metadata().clone();
        meta.derivation_function_id = "other".into();
        assert!(meta.validate().is_err());
        let mut meta = a.metadata().clone();
        meta.geometry.data_disks = 4;
        assert!(meta.validate().is_err());
    }

    #[test]
    fn lock_excludes_second_writer() {
        let tmp = TempDir::new().unwrap();
        let a = example(tmp.path());
        assert!(matches!(DiskArray::open(tmp.path()), Err(StoreError::Locked)));
        assert!(matches!(DiskArray::open_read_only(tmp.path()), Err(StoreError::Locked)));
        drop(a);
        let r1 = DiskArray::open_read_only(tmp.path()).unwrap();
        let mut r2 = DiskArray::open_read_only(tmp.path()).unwrap();
        assert!(matches!(r2.put(b"x"), Err(StoreError::ReadOnly)));
        assert!(matches!(DiskArray::open(tmp.path()), Err(StoreError::Locked)));
        drop((r1, r2));
    }

    #[test]
    fn journal_records_mutations() {
        let tmp = TempDir::new().unwrap();
        let mut a = example(tmp.path());
        a.put(b"abc").unwrap();
        a.fail_disk(0).unwrap();
        let journal = fs::read_to_string(tmp.path().join(JOURNAL_FILE)).unwrap();
        let ops: Vec<&str> = journal.lines().map(|l| l.split('\t').nth(1).unwrap()).collect();
        assert_eq!(ops, vec!["init", "put", "fail"]);
    }

    #[test]
    fn expansion_refusals() {
        let tmp = TempDir::new().unwrap();
        let mut a = DiskArray::init(tmp.path(), ArrayGeometry::new(1, 1, 2).unwrap(), 4, 3).unwrap();
        assert!(matches!(a.remove_data_disk(0), Err(StoreError::LastDisk("data"))));
        assert!(matches!(a.remove_parity_disk(1), Err(StoreError::LastDisk("parity"))));
        assert!(matches!(a.remove_data_disk(1), Err(StoreError::NotDataDisk(1))));
        assert!(matches!(a.remove_parity_disk(0), Err(StoreError::NotParityDisk(0))));
        assert!(matches!(a.remove_parity_disk(7), Err(StoreError::UnknownDisk(7))));

        let id = a.add_data_disk().unwrap();
        a.put(&object(16)).unwrap();
        assert!(matches!(
            a.remove_data_disk(id),
            Err(StoreError::ObjectTooLargeAfterShrink { len: 16, capacity: 8 })
        ));
        assert_eq!(a.get().unwrap(), object(16));
    }

    #[test]
    fn smallest_expansions_round_trip() {
        let tmp = TempDir::new().unwrap();
        let mut a = DiskArray::init(tmp.path(), ArrayGeometry::new(2, 1, 1).unwrap(), 4, 5).unwrap();
        a.put(b"abcd").unwrap();
        a.remove_data_disk(1).unwrap();
        assert_eq!(a.geometry(), ArrayGeometry::new(1, 1, 1).unwrap());
        assert_eq!(a.get().unwrap(), b"abcd");
        let id = a.add_data_disk().unwrap();
        assert_eq!(id, 3);
        assert_eq!(a.geometry(), ArrayGeometry::new(2, 1, 1).unwrap());
        assert_eq!(a.get().unwrap(), b"abcd");
        assert_eq!(a.scrub().unwrap(), ScrubOutcome::Consistent);
        drop(a);
        let a = DiskArray::open(tmp.path()).unwrap();
        assert_eq!(a.get().unwrap(), b"abcd");
        assert_eq!(a.disk(1).unwrap().status, DiskStatus::Removed);
    }
}
