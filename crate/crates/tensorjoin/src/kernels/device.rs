//! Simulated device memory. Copies physically move bytes into a separate
//! arena so movement time is measurable, a ledger records every transfer,
//! and residency is enforced against the configured budget.

use std::time::Instant;

use crate::error::{Error, Result};
use crate::kernels::precision::Precision;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CopyLedger {
    pub bytes_in: u64,
    pub bytes_out: u64,
    pub copies_in: u64,
    pub copies_out: u64,
}

#[derive(Debug)]
pub struct SimDevice {
    budget_bytes: usize,
    resident_bytes: usize,
    peak_resident_bytes: usize,
    arena: Vec<Option<Vec<f32>>>,
    free_slots: Vec<usize>,
    spare: Vec<f32>,
    pub ledger: CopyLedger,
    copy_seconds: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DeviceBuffer {
    slot: usize,
    accounted_bytes: usize,
}

pub fn accounted_bytes(elems: usize, precision: Precision) -> usize {
    (elems as f64 * precision.element_bytes()).ceil() as usize
}

impl SimDevice {
    pub fn new(budget_bytes: usize) -> Self {
        Self {
            budget_bytes,
            resident_bytes: 0,
            peak_resident_bytes: 0,
            arena: Vec::new(),
            free_slots: Vec::new(),
            spare: Vec::new(),
            ledger: CopyLedger::default(),
            copy_seconds: 0.0,
        }
    }

    pub fn budget_bytes(&self) -> usize {
        self.budget_bytes
    }

    pub fn resident_bytes(&self) -> usize {
        self.resident_bytes
    }

    pub fn peak_resident_bytes(&self) -> usize {
        self.peak_resident_bytes
    }

    /// Seconds spent in physical arena copies since the last reset.
    pub fn copy_seconds(&self) -> f64 {
        self.copy_seconds
    }

    pub fn reset_ledger(&mut self) {
        self.ledger = CopyLedger::default();
        self.copy_seconds = 0.0;
        self.peak_resident_bytes = self.resident_bytes;
    }

    fn reserve(&mut self, bytes: usize) -> Result<()> {
        if self.resident_bytes + bytes > self.budget_bytes {
            return Err(Error::Config(format!(
                "device residency {} + {} exceeds budget {}",
                self.resident_bytes, bytes, self.budget_bytes
            )));
        }
        self.resident_bytes += bytes;
        self.peak_resident_bytes = self.peak_resident_bytes.max(self.resident_bytes);
        Ok(())
    }

    /// Allocates a zeroed buffer on the device (no transfer recorded).
    pub fn alloc_zeroed(&mut self, elems: usize, precision: Precision) -> Result<DeviceBuffer> {
        let bytes = accounted_bytes(elems, precision);
        self.reserve(bytes)?;
        let slot = self.place(vec![0.0; elems]);
        Ok(DeviceBuffer {
            slot,
            accounted_bytes: bytes,
        })
    }

    /// Copies host data into device memory; the ledger records the
    /// accounted (storage-precision) byte volume. Freed arena buffers are
    /// recycled so steady-state copies do not reallocate.
    pub fn copy_in(&mut self, data: &[f32], precision: Precision) -> Result<DeviceBuffer> {
        let bytes = accounted_bytes(data.len(), precision);
        self.reserve(bytes)?;
        let mut stored = self.take_spare(data.len());
        let started = Instant::now();
        stored.clear();
        stored.extend_from_slice(data);
        self.copy_seconds += started.elapsed().as_secs_f64();
        self.ledger.bytes_in += bytes as u64;
        self.ledger.copies_in += 1;
        let slot = self.place(stored);
        Ok(DeviceBuffer {
            slot,
            accounted_bytes: bytes,
        })
    }

    pub fn copy_out(&mut self, buf: DeviceBuffer) -> Result<Vec<f32>> {
        let started = Instant::now();
        let data = self.arena[buf.slot]
            .as_ref()
            .ok_or_else(|| Error::Internal("copy_out of freed device buffer".into()))?
            .clone();
        self.copy_seconds += started.elapsed().as_secs_f64();
        self.ledger.bytes_out += buf.accounted_bytes as u64;
        self.ledger.copies_out += 1;
        Ok(data)
    }

    pub fn read(&self, buf: DeviceBuffer) -> Result<&[f32]> {
        self.arena[buf.slot]
            .as_deref()
            .ok_or_else(|| Error::Internal("read of freed device buffer".into()))
    }

    pub fn write(&mut self, buf: DeviceBuffer) -> Result<&mut [f32]> {
        self.arena[buf.slot]
            .as_deref_mut()
            .ok_or_else(|| Error::Internal("write to freed device buffer".into()))
    }

    pub fn free(&mut self, buf: DeviceBuffer) {
        if let Some(slot) = self.arena.get_mut(buf.slot) {
            if let Some(data) = slot.take() {
                self.resident_bytes -= buf.accounted_bytes;
                self.free_slots.push(buf.slot);
                if self.spare.capacity() < data.capacity() {
                    self.spare = data;
                }
            }
        }
    }

    /// Three distinct live buffers at once: two read panels and one
    /// accumulator (the blocked kernel's working set).
    pub fn panels(
        &mut self,
        a: DeviceBuffer,
        b: DeviceBuffer,
        c: DeviceBuffer,
    ) -> Result<(&[f32], &[f32], &mut [f32])> {
        let [sa, sb, sc] = self
            .arena
            .get_disjoint_mut([a.slot, b.slot, c.slot])
            .map_err(|_| Error::Internal("overlapping device buffer handles".into()))?;
        match (sa.as_deref(), sb.as_deref(), sc.as_deref_mut()) {
            (Some(a), Some(b), Some(c)) => Ok((a, b, c)),
            _ => Err(Error::Internal("freed device buffer in panel set".into())),
        }
    }

    fn take_spare(&mut self, len: usize) -> Vec<f32> {
        if self.spare.capacity() >= len {
            std::mem::take(&mut self.spare)
        } else {
            Vec::with_capacity(len)
        }
    }

    fn place(&mut self, data: Vec<f32>) -> usize {
        match self.free_slots.pop() {
            Some(slot) => {
                self.arena[slot] = Some(data);
                slot
            }
            None => {
                self.arena.push(Some(data));
                self.arena.len() - 1
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ledger_tracks_copies() {
        let mut dev = SimDevice::new(1 << 20);
        let buf = dev.copy_in(&[1.0; 256], Precision::F32).unwrap();
        assert_eq!(dev.ledger.bytes_in, 1024);
        assert_eq!(dev.resident_bytes(), 1024);
        let out = dev.copy_out(buf).unwrap();
        assert_eq!(out.len(), 256);
        assert_eq!(dev.ledger.bytes_out, 1024);
        dev.free(buf);
        assert_eq!(dev.resident_bytes(), 0);
    }

    #[test]
    fn residency_over_budget_fails() {
        let mut dev = SimDevice::new(100);
        assert!(dev.copy_in(&[0.0; 100], Precision::F32).is_err());
        assert_eq!(dev.resident_bytes(), 0);
    }

    #[test]
    fn half_precision_accounts_two_bytes_per_element() {
        let mut dev = SimDevice::new(1 << 20);
        dev.copy_in(&[1.0; 100], Precision::Half).unwrap();
        assert_eq!(dev.resident_bytes(), 200);
    }
}
