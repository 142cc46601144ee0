//! Key pools for the three links and the one-time-pad ledger.
//!
//! A pool holds QKD-derived key material for one link. User↔DC pools are
//! split into a user→DC half (query encryption) and a DC→user half
//! (answer encryption); the DC↔DC pool is used whole for mask material.
//! Every bit is handed out through a reservation, and a reservation can be
//! spent exactly once.

use std::collections::HashMap;
use std::fmt;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use crate::bits::BitString;
use crate::error::{Error, Result};

pub const POOL_MAGIC: &[u8; 4] = b"QKEY";
pub const POOL_VERSION: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PoolId {
    UserDc1,
    UserDc2,
    Dc1Dc2,
}

impl PoolId {
    pub const ALL: [PoolId; 3] = [PoolId::UserDc1, PoolId::UserDc2, PoolId::Dc1Dc2];

    pub fn name(self) -> &'static str {
        match self {
            PoolId::UserDc1 => "user-dc1",
            PoolId::UserDc2 => "user-dc2",
            PoolId::Dc1Dc2 => "dc1-dc2",
        }
    }

    fn code(self) -> u8 {
        match self {
            PoolId::UserDc1 => 1,
            PoolId::UserDc2 => 2,
            PoolId::Dc1Dc2 => 3,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            1 => Some(PoolId::UserDc1),
            2 => Some(PoolId::UserDc2),
            3 => Some(PoolId::Dc1Dc2),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    Whole,
    /// User → data centre.
    Send,
    /// Data centre → user.
    Receive,
}

impl Direction {
    fn code(self) -> u8 {
        match self {
            Direction::Whole => 0,
            Direction::Send => 1,
            Direction::Receive => 2,
        }
    }

    fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(Direction::Whole),
            1 => Some(Direction::Send),
            2 => Some(Direction::Receive),
            _ => None,
        }
    }

    fn suffix(self) -> &'static str {
        match self {
            Direction::Whole => "",
            Direction::Send => "/send",
            Direction::Receive => "/recv",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PoolKey {
    pub id: PoolId,
    pub direction: Direction,
}

impl PoolKey {
    pub fn new(id: PoolId, direction: Direction) -> Self {
        Self { id, direction }
    }

    fn parse(s: &str) -> Option<Self> {
        let (name, dir) = match s.split_once('/') {
            Some((n, "send")) => (n, Direction::Send),
            Some((n, "recv")) => (n, Direction::Receive),
            Some(_) => return None,
            None => (s, Direction::Whole),
        };
        let id = PoolId::ALL.into_iter().find(|p| p.name() == name)?;
        Some(Self { id, direction: dir })
    }
}

impl fmt::Display for PoolKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.id.name(), self.direction.suffix())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReservationState {
    Reserved,
    Used,
    Released,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Reservation {
    pub id: u64,
    pub ts: u64,
    pub session: String,
    pub offset: u64,
    pub bits: u64,
    pub purpose: String,
    pub used_bits: u64,
    pub state: ReservationState,
}

impl Reservation {
    fn end(&self) -> u64 {
        self.offset + self.bits
    }

    fn overlaps(&self, offset: u64, bits: u64) -> bool {
        bits > 0 && self.bits > 0 && offset < self.end() && self.offset < offset + bits
    }
}

/// Handle to a reserved key range. Immutable; spendable once.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct KeySlice {
    pub pool: PoolKey,
    pub id: u64,
    pub offset: u64,
    pub bits: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeyPool {
    key: PoolKey,
    material: BitString,
    /// Bits below this offset were retired before the pool was loaded.
    floor: u64,
    cursor: u64,
    reservations: Vec<Reservation>,
    next_id: u64,
}

pub fn create_pool(id: PoolId, material: &[u8]) -> Result<KeyPool> {
    if material.is_empty() {
        return Err(Error::Config(format!("empty key material for pool {}", id.name())));
    }
    Ok(KeyPool::from_bits(
        PoolKey::new(id, Direction::Whole),
        BitString::from_bytes(material, material.len() * 8),
    ))
}

impl KeyPool {
    pub fn from_bits(key: PoolKey, material: BitString) -> Self {
        Self {
            key,
            material,
            floor: 0,
            cursor: 0,
            reservations: Vec::new(),
            next_id: 0,
        }
    }

    pub fn key(&self) -> PoolKey {
        self.key
    }

    pub fn capacity_bits(&self) -> u64 {
        self.material.len() as u64
    }

    /// High-water mark of issued bits.
    pub fn consumed_bits(&self) -> u64 {
        self.cursor
    }

    pub fn remaining_bits(&self) -> u64 {
        self.capacity_bits() - self.cursor
    }

    pub fn reservations(&self) -> &[Reservation] {
        &self.reservations
    }

    /// Appends freshly provisioned material.
    pub fn provision(&mut self, more: &[u8]) -> Result<()> {
        if more.is_empty() {
            return Err(Error::Config("empty key material".into()));
        }
        if self.key.direction != Direction::Whole {
            return Err(Error::Config("provision the whole pool before partitioning".into()));
        }
        let mut w = crate::bits::BitWriter::new();
        w.push(&self.material);
        w.push(&BitString::from_bytes(more, more.len() * 8));
        self.material = w.finish();
        Ok(())
    }

    /// Splits a whole pool into its user→DC half `[0, ⌊N/2⌋)` and its
    /// DC→user half `[⌊N/2⌋, N)`. The pool must be unused.
    pub fn partition_directional(self) -> Result<(KeyPool, KeyPool)> {
        if self.key.direction != Direction::Whole {
            return Err(Error::Validation(format!("pool {} is already partitioned", self.key)));
        }
        if self.cursor != 0 || !self.reservations.is_empty() {
            return Err(Error::Validation(format!(
                "pool {} must be partitioned before use",
                self.key
            )));
        }
        let total = self.material.len();
        let first = total / 2;
        Ok((
            KeyPool::from_bits(
                PoolKey::new(self.key.id, Direction::Send),
                self.material.slice(0, first),
            ),
            KeyPool::from_bits(
                PoolKey::new(self.key.id, Direction::Receive),
                self.material.slice(first, total - first),
            ),
        ))
    }

    fn check_free(&self, offset: u64, bits: u64) -> Result<()> {
        let end = offset
            .checked_add(bits)
            .ok_or_else(|| Error::Validation("key range overflows".into()))?;
        if end > self.capacity_bits() {
            return Err(Error::BudgetExhausted {
                needed: bits,
                available: self.capacity_bits().saturating_sub(offset.max(self.cursor)),
            });
        }
        if offset < self.floor {
            return Err(Error::KeyReuse(format!(
                "{}: offset {offset} lies below retired watermark {}",
                self.key, self.floor
            )));
        }
        if let Some(r) = self.reservations.iter().find(|r| r.overlaps(offset, bits)) {
            return Err(Error::KeyReuse(format!(
                "{}: range {offset}+{bits} overlaps reservation {}+{} of session {}",
                self.key, r.offset, r.bits, r.session
            )));
        }
        Ok(())
    }

    fn insert(&mut self, ts: u64, session: &str, offset: u64, bits: u64, purpose: &str) -> KeySlice {
        let id = self.next_id;
        self.next_id += 1;
        self.reservations.push(Reservation {
            id,
            ts,
            session: session.to_string(),
            offset,
            bits,
            purpose: purpose.to_string(),
            used_bits: 0,
            state: ReservationState::Reserved,
        });
        self.cursor = self.cursor.max(offset + bits);
        KeySlice {
            pool: self.key,
            id,
            offset,
            bits,
        }
    }

    /// Reserves the next `bits` unissued bits.
    pub fn reserve_segment(&mut self, ts: u64, session: &str, bits: u64, purpose: &str) -> Result<KeySlice> {
        if bits > self.remaining_bits() {
            return Err(Error::BudgetExhausted {
                needed: bits,
                available: self.remaining_bits(),
            });
        }
        let offset = self.cursor;
        self.check_free(offset, bits)?;
        Ok(self.insert(ts, session, offset, bits, purpose))
    }

    /// Reserves an explicit range chosen by the peer.
    pub fn reserve_at(&mut self, ts: u64, session: &str, offset: u64, bits: u64, purpose: &str) -> Result<KeySlice> {
        self.check_free(offset, bits)?;
        Ok(self.insert(ts, session, offset, bits, purpose))
    }

    fn spend(&mut self, slice: &KeySlice, bits: u64) -> Result<BitString> {
        if slice.pool != self.key {
            return Err(Error::KeyReuse(format!(
                "slice from {} used on {}",
                slice.pool, self.key
            )));
        }
        let r = self
            .reservations
            .iter_mut()
            .find(|r| r.id == slice.id && r.offset == slice.offset && r.bits == slice.bits)
            .ok_or_else(|| Error::KeyReuse(format!("{}: slice {} was never reserved", self.key, slice.id)))?;
        match r.state {
            ReservationState::Reserved => {}
            ReservationState::Used => {
                return Err(Error::KeyReuse(format!(
                    "{}: slice at offset {} already spent by session {}",
                    self.key, r.offset, r.session
                )))
            }
            ReservationState::Released => {
                return Err(Error::KeyReuse(format!(
                    "{}: slice at offset {} was released",
                    self.key, r.offset
                )))
            }
        }
        if bits > r.bits {
            return Err(Error::Validation(format!(
                "slice holds {} bits, {} requested",
                r.bits, bits
            )));
        }
        r.state = ReservationState::Used;
        r.used_bits = bits;
        Ok(self.material.slice(slice.offset as usize, bits as usize))
    }

    /// XORs `data` with the slice's key bits and retires the slice.
    pub fn otp_apply(&mut self, data: &BitString, slice: &KeySlice) -> Result<BitString> {
        let key = self.spend(slice, data.len() as u64)?;
        Ok(data.xor(&key))
    }

    /// Hands out the first `bits` key bits of the slice as raw shared
    /// randomness and retires the slice.
    pub fn take_key(&mut self, slice: &KeySlice, bits: u64) -> Result<BitString> {
        self.spend(slice, bits)
    }

    /// Marks an unspent reservation as released. Its bits are never reissued.
    pub fn release(&mut self, slice: &KeySlice) -> bool {
        match self.reservations.iter_mut().find(|r| r.id == slice.id) {
            Some(r) if r.state == ReservationState::Reserved => {
                r.state = ReservationState::Released;
                true
            }
            _ => false,
        }
    }

    /// Re-inserts a reservation read back from a ledger. Overlaps are rejected.
    pub fn restore_reservation(&mut self, line: &LedgerLine) -> Result<()> {
        if line.pool != self.key {
            return Err(Error::Validation(format!(
                "ledger line for {} applied to {}",
                line.pool, self.key
            )));
        }
        if line.offset + line.bits > self.capacity_bits() {
            return Err(Error::Validation(format!(
                "ledger range {}+{} exceeds pool",
                line.offset, line.bits
            )));
        }
        if let Some(r) = self.reservations.iter().find(|r| r.overlaps(line.offset, line.bits)) {
            return Err(Error::Validation(format!(
                "ledger entry {}+{} overlaps {}+{}",
                line.offset, line.bits, r.offset, r.bits
            )));
        }
        let slice = self.insert(line.ts, &line.session, line.offset, line.bits, &line.purpose);
        let r = self
            .reservations
            .iter_mut()
            .find(|r| r.id == slice.id)
            .expect("just inserted");
        r.state = ReservationState::Used;
        r.used_bits = line.bits;
        Ok(())
    }

    /// Pool file: magic, version, pool id byte (low nibble link, high nibble
    /// direction), consumed offset (u64 BE), material bytes. A trailing
    /// partial byte is dropped.
    pub fn to_file_bytes(&self) -> Vec<u8> {
        let whole_bytes = self.material.len() / 8;
        let mut out = Vec::with_capacity(14 + whole_bytes);
        out.extend_from_slice(POOL_MAGIC);
        out.push(POOL_VERSION);
        out.push(self.key.id.code() | (self.key.direction.code() << 4));
        out.extend_from_slice(&self.cursor.min(whole_bytes as u64 * 8).to_be_bytes());
        out.extend_from_slice(&self.material.to_bytes()[..whole_bytes]);
        out
    }

    pub fn from_file_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 14 || &bytes[..4] != POOL_MAGIC {
            return Err(Error::Validation("not a key pool file (bad magic)".into()));
        }
        if bytes[4] != POOL_VERSION {
            return Err(Error::Validation(format!("unsupported pool file version {}", bytes[4])));
        }
        let id = PoolId::from_code(bytes[5] & 0x0f)
            .ok_or_else(|| Error::Validation(format!("unknown pool id {:#x}", bytes[5])))?;
        let direction = Direction::from_code(bytes[5] >> 4)
            .ok_or_else(|| Error::Validation(format!("unknown pool direction {:#x}", bytes[5])))?;
        let consumed = u64::from_be_bytes(bytes[6..14].try_into().expect("8 bytes"));
        let body = &bytes[14..];
        if body.is_empty() {
            return Err(Error::Config(format!("pool {} has no key material", id.name())));
        }
        let material = BitString::from_bytes(body, body.len() * 8);
        if consumed > material.len() as u64 {
            return Err(Error::Validation("consumed offset beyond pool capacity".into()));
        }
        let mut pool = KeyPool::from_bits(PoolKey::new(id, direction), material);
        pool.floor = consumed;
        pool.cursor = consumed;
        Ok(pool)
    }

    pub fn report(&self) -> LedgerReport {
        let sum =
            |st: ReservationState| -> u64 { self.reservations.iter().filter(|r| r.state == st).map(|r| r.bits).sum() };
        LedgerReport {
            pool: self.key,
            capacity_bits: self.capacity_bits(),
            consumed_bits: self.cursor,
            reserved_bits: self.reservations.iter().map(|r| r.bits).sum(),
            spent_bits: self.reservations.iter().map(|r| r.used_bits).sum(),
            released_bits: sum(ReservationState::Released),
            reservations: self.reservations.clone(),
        }
    }

    /// Checks the non-overlap invariant over every reservation.
    pub fn audit(&self) -> Result<()> {
        let mut spans: Vec<(u64, u64)> = self.reservations.iter().map(|r| (r.offset, r.end())).collect();
        spans.sort_unstable();
        for w in spans.windows(2) {
            if w[1].0 < w[0].1 {
                return Err(Error::KeyReuse(format!(
                    "{}: reservations {:?} and {:?} overlap",
                    self.key, w[0], w[1]
                )));
            }
        }
        if spans.last().is_some_and(|s| s.1 > self.capacity_bits()) {
            return Err(Error::KeyReuse(format!("{}: reservation beyond capacity", self.key)));
        }
        Ok(())
    }
}

/// One line of the append-only ledger file:
/// `<ts> <pool> <session> <offset> <bits> <purpose>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LedgerLine {
    pub ts: u64,
    pub pool: PoolKey,
    pub session: String,
    pub offset: u64,
    pub bits: u64,
    pub purpose: String,
}

impl LedgerLine {
    pub fn parse(line: &str) -> Result<Self> {
        let f: Vec<&str> = line.split_whitespace().collect();
        let bad = || Error::Validation(format!("malformed ledger line `{line}`"));
        if f.len() != 6 {
            return Err(bad());
        }
        Ok(Self {
            ts: f[0].parse().map_err(|_| bad())?,
            pool: PoolKey::parse(f[1]).ok_or_else(bad)?,
            session: f[2].to_string(),
            offset: f[3].parse().map_err(|_| bad())?,
            bits: f[4].parse().map_err(|_| bad())?,
            purpose: f[5].to_string(),
        })
    }
}

impl fmt::Display for LedgerLine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {} {} {} {} {}",
            self.ts, self.pool, self.session, self.offset, self.bits, self.purpose
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LedgerReport {
    pub pool: PoolKey,
    pub capacity_bits: u64,
    pub consumed_bits: u64,
    pub reserved_bits: u64,
    pub spent_bits: u64,
    pub released_bits: u64,
    pub reservations: Vec<Reservation>,
}

impl fmt::Display for LedgerReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "pool {}: capacity {} bits, issued {}, reserved {}, spent {}, released {}",
            self.pool, self.capacity_bits, self.consumed_bits, self.reserved_bits, self.spent_bits, self.released_bits
        )?;
        for r in &self.reservations {
            writeln!(
                f,
                "  [{}] session {} {} offset {} reserved {} spent {} ({:?})",
                r.ts, r.session, r.purpose, r.offset, r.bits, r.used_bits, r.state
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Default)]
struct StoreInner {
    pools: HashMap<PoolKey, KeyPool>,
    clock: u64,
    ledger: Vec<LedgerLine>,
    ledger_file: Option<PathBuf>,
}

/// One party's pools behind a single-writer lock.
#[derive(Debug, Default)]
pub struct KeyStore {
    inner: Mutex<StoreInner>,
}

impl KeyStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Mirrors every ledger line to an append-only file.
    pub fn with_ledger_file(self, path: impl Into<PathBuf>) -> Self {
        self.lock().ledger_file = Some(path.into());
        self
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, StoreInner> {
        self.inner.lock().unwrap_or_else(|p| p.into_inner())
    }

    /// Installs a pool; a whole user↔DC pool is partitioned on the way in.
    pub fn install(&self, pool: KeyPool) -> Result<()> {
        let mut g = self.lock();
        let parts = if pool.key.direction == Direction::Whole && pool.key.id != PoolId::Dc1Dc2 {
            let (s, r) = pool.partition_directional()?;
            vec![s, r]
        } else {
            vec![pool]
        };
        for p in parts {
            if g.pools.contains_key(&p.key) {
                return Err(Error::Config(format!("pool {} installed twice", p.key)));
            }
            g.pools.insert(p.key, p);
        }
        Ok(())
    }

    pub fn has_pool(&self, key: PoolKey) -> bool {
        self.lock().pools.contains_key(&key)
    }

    pub fn pool_keys(&self) -> Vec<PoolKey> {
        let mut v: Vec<_> = self.lock().pools.keys().copied().collect();
        v.sort();
        v
    }

    pub fn remaining_bits(&self, key: PoolKey) -> Result<u64> {
        self.with_pool(key, |p| Ok(p.remaining_bits()))
    }

    pub fn consumed_bits(&self, key: PoolKey) -> Result<u64> {
        self.with_pool(key, |p| Ok(p.consumed_bits()))
    }

    fn with_pool<T>(&self, key: PoolKey, f: impl FnOnce(&mut KeyPool) -> Result<T>) -> Result<T> {
        let mut g = self.lock();
        let pool = g
            .pools
            .get_mut(&key)
            .ok_or_else(|| Error::Protocol(format!("pool {key} not provisioned")))?;
        f(pool)
    }

    fn log(g: &mut StoreInner, line: LedgerLine) -> Result<()> {
        if let Some(path) = &g.ledger_file {
            let mut f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(path)
                .map_err(|e| Error::io(path, e))?;
            writeln!(f, "{line}").map_err(|e| Error::io(path, e))?;
        }
        g.ledger.push(line);
        Ok(())
    }

    fn reserve_with(
        &self,
        key: PoolKey,
        session: &str,
        bits: u64,
        purpose: &str,
        offset: Option<u64>,
    ) -> Result<KeySlice> {
        let mut g = self.lock();
        g.clock += 1;
        let ts = g.clock;
        let pool = g
            .pools
            .get_mut(&key)
            .ok_or_else(|| Error::Protocol(format!("pool {key} not provisioned")))?;
        let slice = match offset {
            Some(o) => pool.reserve_at(ts, session, o, bits, purpose)?,
            None => pool.reserve_segment(ts, session, bits, purpose)?,
        };
        let line = LedgerLine {
            ts,
            pool: key,
            session: session.to_string(),
            offset: slice.offset,
            bits,
            purpose: purpose.to_string(),
        };
        Self::log(&mut g, line)?;
        Ok(slice)
    }

    pub fn reserve_segment(&self, key: PoolKey, session: &str, bits: u64, purpose: &str) -> Result<KeySlice> {
        self.reserve_with(key, session, bits, purpose, None)
    }

    pub fn reserve_at(&self, key: PoolKey, session: &str, offset: u64, bits: u64, purpose: &str) -> Result<KeySlice> {
        self.reserve_with(key, session, bits, purpose, Some(offset))
    }

    pub fn otp_apply(&self, data: &BitString, slice: &KeySlice) -> Result<BitString> {
        self.with_pool(slice.pool, |p| p.otp_apply(data, slice))
    }

    pub fn take_key(&self, slice: &KeySlice, bits: u64) -> Result<BitString> {
        self.with_pool(slice.pool, |p| p.take_key(slice, bits))
    }

    /// Releases an unspent reservation; spent slices stay consumed.
    pub fn release(&self, slice: &KeySlice, session: &str) -> Result<bool> {
        let mut g = self.lock();
        g.clock += 1;
        let ts = g.clock;
        let pool = g
            .pools
            .get_mut(&slice.pool)
            .ok_or_else(|| Error::Protocol(format!("pool {} not provisioned", slice.pool)))?;
        let released = pool.release(slice);
        if released {
            let line = LedgerLine {
                ts,
                pool: slice.pool,
                session: session.to_string(),
                offset: slice.offset,
                bits: slice.bits,
                purpose: "released".into(),
            };
            Self::log(&mut g, line)?;
        }
        Ok(released)
    }

    pub fn ledger_report(&self, key: PoolKey) -> Result<LedgerReport> {
        self.with_pool(key, |p| Ok(p.report()))
    }

    pub fn ledger_lines(&self) -> Vec<LedgerLine> {
        self.lock().ledger.clone()
    }

    pub fn ledger_text(&self) -> String {
        self.lock().ledger.iter().map(|l| format!("{l}\n")).collect()
    }

    pub fn audit(&self) -> Result<()> {
        let g = self.lock();
        for p in g.pools.values() {
            p.audit()?;
        }
        Ok(())
    }

    pub fn pool_snapshot(&self, key: PoolKey) -> Result<KeyPool> {
        self.with_pool(key, |p| Ok(p.clone()))
    }

    /// Writes every pool as `<dir>/<link>[.send|.recv].qkey`.
    pub fn save_pools(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let g = self.lock();
        let mut out = Vec::new();
        let mut keys: Vec<_> = g.pools.keys().copied().collect();
        keys.sort();
        for k in keys {
            let path = dir.join(pool_file_name(k));
            fs::write(&path, g.pools[&k].to_file_bytes()).map_err(|e| Error::io(&path, e))?;
            out.push(path);
        }
        Ok(out)
    }
}

/// Loads every `*.qkey` file in `dir` into a fresh store.
pub fn open_pool_dir(dir: &Path) -> Result<KeyStore> {
    let store = KeyStore::new();
    let mut paths = Vec::new();
    for e in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = e.map_err(|e| Error::io(dir, e))?.path();
        if p.extension().is_some_and(|x| x == "qkey") {
            paths.push(p);
        }
    }
    if paths.is_empty() {
        return Err(Error::Config(format!("no key pools in {}", dir.display())));
    }
    paths.sort();
    for p in paths {
        store.install(read_pool_file(&p)?)?;
    }
    Ok(store)
}

pub fn pool_file_name(key: PoolKey) -> String {
    match key.direction {
        Direction::Whole => format!("{}.qkey", key.id.name()),
        Direction::Send => format!("{}.send.qkey", key.id.name()),
        Direction::Receive => format!("{}.recv.qkey", key.id.name()),
    }
}

pub fn read_pool_file(path: &Path) -> Result<KeyPool> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    KeyPool::from_file_bytes(&bytes)
}
