//! Placement of codeword elements on the disk grid.
//!
//! Data disks come first, then parity disks. Each disk holds `strip_depth`
//! consecutive elements, so element `e` lives on disk `e / strip_depth` at
//! slot `e % strip_depth`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub data_disks: usize,
    pub parity_disks: usize,
    pub strip_depth: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct GridAddress {
    pub disk_index: usize,
    pub slot_index: usize,
}

impl ArrayGeometry {
    pub fn new(data_disks: usize, parity_disks: usize, strip_depth: usize) -> Result<Self> {
        if data_disks == 0 || parity_disks == 0 || strip_depth == 0 {
            return Err(Error::InvalidDimension(format!(
                "geometry ({data_disks}, {parity_disks}, {strip_depth}) needs every count >= 1"
            )));
        }
        Ok(ArrayGeometry {
            data_disks,
            parity_disks,
            strip_depth,
        })
    }

    pub fn disks(&self) -> usize {
        self.data_disks + self.parity_disks
    }

    pub fn k(&self) -> usize {
        self.data_disks * self.strip_depth
    }

    pub fn n(&self) -> usize {
        self.disks() * self.strip_depth
    }

    pub fn is_data_disk(&self, disk_index: usize) -> bool {
        disk_index < self.data_disks
    }

    pub fn element_to_grid(&self, element: usize) -> Result<GridAddress> {
        if element >= self.n() {
            return Err(Error::IndexOutOfRange {
                index: element,
                limit: self.n(),
            });
        }
        Ok(GridAddress {
            disk_index: element / self.strip_depth,
            slot_index: element % self.strip_depth,
        })
    }

    pub fn grid_to_element(&self, addr: GridAddress) -> Result<usize> {
        if addr.disk_index >= self.disks() {
            return Err(Error::IndexOutOfRange {
                index: addr.disk_index,
                limit: self.disks(),
            });
        }
        if addr.slot_index >= self.strip_depth {
            return Err(Error::IndexOutOfRange {
                index: addr.slot_index,
                limit: self.strip_depth,
            });
        }
        Ok(addr.disk_index * self.strip_depth + addr.slot_index)
    }

    /// Element indices stored on `disk_index`, in slot order.
    pub fn disk_elements(&self, disk_index: usize) -> Result<std::ops::Range<usize>> {
        if disk_index >= self.disks() {
            return Err(Error::IndexOutOfRange {
                index: disk_index,
                limit: self.disks(),
            });
        }
        let start = disk_index * self.strip_depth;
        Ok(start..start + self.strip_depth)
    }
}
