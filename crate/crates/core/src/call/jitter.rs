use std::collections::BTreeMap;

/// Reorders inbound frames by sequence number and releases one per tick
/// once `depth` frames have accumulated.
#[derive(Debug)]
pub struct JitterBuffer<T> {
    depth: usize,
    frames: BTreeMap<u64, T>,
    /// Extended sequence number of the next frame to release.
    next: Option<u64>,
    released: Option<u64>,
    last_ext: Option<u64>,
    primed: bool,
    pub late: u64,
    pub concealed: u64,
}

impl<T> JitterBuffer<T> {
    pub fn new(depth: usize) -> Self {
        JitterBuffer {
            depth: depth.max(1),
            frames: BTreeMap::new(),
            next: None,
            released: None,
            last_ext: None,
            primed: false,
            late: 0,
            concealed: 0,
        }
    }

    fn extend(&mut self, seq: u16) -> u64 {
        let ext = match self.last_ext {
            None => (1u64 << 16) + seq as u64,
            Some(last) => {
                let base = last & !0xFFFF;
                let candidates = [base.wrapping_sub(1 << 16), base, base + (1 << 16)];
                candidates
                    .into_iter()
                    .map(|b| b + seq as u64)
                    .min_by_key(|c| c.abs_diff(last))
                    .unwrap()
            }
        };
        if self.last_ext.is_none_or(|l| ext > l) {
            self.last_ext = Some(ext);
        }
        ext
    }

    pub fn push(&mut self, seq: u16, frame: T) {
        let ext = self.extend(seq);
        if self.released.is_some_and(|r| ext <= r) {
            self.late += 1;
            return;
        }
        self.frames.insert(ext, frame);
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Next frame for playout. `None` while priming or when drained;
    /// `Some(None)` when the expected frame is missing (conceal it).
    pub fn pop(&mut self) -> Option<Option<T>> {
        if !self.primed {
            if self.frames.len() < self.depth {
                return None;
            }
            self.primed = true;
            self.next = self.frames.keys().next().copied();
        }
        if self.frames.is_empty() {
            self.primed = false;
            return None;
        }
        let next = self.next?;
        self.next = Some(next + 1);
        self.released = Some(next);
        match self.frames.remove(&next) {
            Some(f) => Some(Some(f)),
            None => {
                self.concealed += 1;
                Some(None)
            }
        }
    }
}
