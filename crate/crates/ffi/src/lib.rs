//! C ABI over `spir-core`.
//!
//! Objects are opaque handles created by `*_new` and released by the
//! matching `*_free`. Every fallible call returns a [`SpirStatus`]; the
//! message for the last failure on the calling thread is available from
//! [`spir_last_error_message`].

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;
use std::sync::Arc;

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use spir_core::cube::{entries_from_bytes, DatabaseCube, Manifest};
use spir_core::net::{party_stores, SimDeployment, UserClient};
use spir_core::qkd::{finite_key_length, toeplitz_hash, EpsilonSet};
use spir_core::spir::required_key_budget;
use spir_core::{BitString, Error};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpirStatus {
    Ok = 0,
    Config = 2,
    Protocol = 3,
    BudgetExhausted = 4,
    Io = 5,
    InvalidArgument = 6,
    KeyReuse = 7,
    NullPointer = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

/// Database cube plus the true record lengths.
pub struct SpirCube {
    cube: DatabaseCube,
    manifest: Manifest,
}

/// Two simulated data centres and a user, provisioned with caller keys.
pub struct SpirSim {
    deployment: SimDeployment,
    client: UserClient,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> SpirStatus {
    match e {
        Error::Config(_) => SpirStatus::Config,
        Error::BudgetExhausted { .. } => SpirStatus::BudgetExhausted,
        Error::Io { .. } => SpirStatus::Io,
        Error::Range { .. } | Error::Validation(_) | Error::Domain(_) => SpirStatus::InvalidArgument,
        Error::KeyReuse(_) => SpirStatus::KeyReuse,
        Error::Framing(_) | Error::Protocol(_) | Error::LinkBlocked(_) | Error::Entropy(_) => SpirStatus::Protocol,
    }
}

enum Fail {
    Core(Error),
    Null(&'static str),
    Small { need: usize, have: usize },
}

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail::Core(e)
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> SpirStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SpirStatus::Ok,
        Ok(Err(Fail::Core(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Fail::Null(what))) => {
            set_error(format!("{what} is null"));
            SpirStatus::NullPointer
        }
        Ok(Err(Fail::Small { need, have })) => {
            set_error(format!("output buffer holds {have} bytes, {need} needed"));
            SpirStatus::BufferTooSmall
        }
        Err(_) => {
            set_error("internal panic".into());
            SpirStatus::Panic
        }
    }
}

fn nonnull<T>(p: *const T, what: &'static str) -> Result<(), Fail> {
    if p.is_null() {
        Err(Fail::Null(what))
    } else {
        Ok(())
    }
}

/// # Safety
/// `p` must be null only if `len` is 0, else valid for `len` reads.
unsafe fn bytes<'a>(p: *const u8, len: usize, what: &'static str) -> Result<&'a [u8], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    nonnull(p, what)?;
    Ok(slice::from_raw_parts(p, len))
}

/// Null-terminated library version. Static storage; do not free.
#[no_mangle]
pub extern "C" fn spir_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the last error message on this thread into `buf` (truncated and
/// always NUL-terminated when `cap > 0`). Returns the full message length
/// including the terminator, or 0 if there is none.
///
/// # Safety
/// `buf` must be valid for `cap` writes, or null with `cap == 0`.
#[no_mangle]
pub unsafe extern "C" fn spir_last_error_message(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let e = e.borrow();
        let Some(msg) = e.as_ref() else { return 0 };
        let b = msg.as_bytes_with_nul();
        if !buf.is_null() && cap > 0 {
            let k = (b.len() - 1).min(cap - 1);
            ptr::copy_nonoverlapping(b.as_ptr().cast::<c_char>(), buf, k);
            *buf.add(k) = 0;
        }
        b.len()
    })
}

/// Key bits one retrieval needs on each user↔DC link and on the DC↔DC link.
///
/// # Safety
/// Output pointers must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn spir_required_key_budget(
    n: usize,
    entry_bits: usize,
    user_dc_bits: *mut u64,
    dc_dc_bits: *mut u64,
) -> SpirStatus {
    guard(|| {
        nonnull(user_dc_bits, "user_dc_bits")?;
        nonnull(dc_dc_bits, "dc_dc_bits")?;
        if n == 0 || entry_bits == 0 {
            return Err(Error::Validation("n and entry_bits must be positive".into()).into());
        }
        let b = required_key_budget(n, entry_bits);
        *user_dc_bits = b.user_dc_bits;
        *dc_dc_bits = b.dc_dc_bits;
        Ok(())
    })
}

/// Finite-key length with the security parameter split equally.
///
/// # Safety
/// `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn spir_finite_key_length(
    n0: f64,
    n1: f64,
    e1: f64,
    leak_ec: f64,
    eps_sec: f64,
    eps_cor: f64,
    out: *mut u64,
) -> SpirStatus {
    guard(|| {
        nonnull(out, "out")?;
        let eps = EpsilonSet::split_equally(eps_sec, eps_cor);
        eps.validate()?;
        *out = finite_key_length(n0, n1, e1, leak_ec, &eps)?;
        Ok(())
    })
}

/// Toeplitz hash of `input_bits` bits down to `out_bits` bits. The seed
/// holds `input_bits + out_bits - 1` bits. Bits are packed LSB-first.
///
/// # Safety
/// Input buffers must hold the stated bit counts; `out` must be valid for
/// `out_cap` writes.
#[no_mangle]
pub unsafe extern "C" fn spir_toeplitz_hash(
    input: *const u8,
    input_bits: usize,
    seed: *const u8,
    seed_bits: usize,
    out_bits: usize,
    out: *mut u8,
    out_cap: usize,
) -> SpirStatus {
    guard(|| {
        let need = out_bits.div_ceil(8);
        if out_cap < need {
            return Err(Fail::Small { need, have: out_cap });
        }
        let inp = BitString::from_bytes(bytes(input, input_bits.div_ceil(8), "input")?, input_bits);
        let sd = BitString::from_bytes(bytes(seed, seed_bits.div_ceil(8), "seed")?, seed_bits);
        let h = toeplitz_hash(&inp, &sd, out_bits)?;
        if need > 0 {
            nonnull(out, "out")?;
            ptr::copy_nonoverlapping(h.to_bytes().as_ptr(), out, need);
        }
        Ok(())
    })
}

/// Builds a cube from `n` records stored back to back in `data`, record
/// `i` being `lens[i]` bytes.
///
/// # Safety
/// `lens` must hold `n` entries and `data` their sum in bytes; `out` must
/// be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn spir_cube_new(
    data: *const u8,
    lens: *const usize,
    n: usize,
    out: *mut *mut SpirCube,
) -> SpirStatus {
    guard(|| {
        nonnull(out, "out")?;
        nonnull(lens, "lens")?;
        let lens = slice::from_raw_parts(lens, n);
        let total = lens.iter().try_fold(0usize, |a, &l| a.checked_add(l));
        let total = total.ok_or_else(|| Error::Validation("record lengths overflow".into()))?;
        let all = bytes(data, total, "data")?;
        let mut at = 0;
        let named = lens
            .iter()
            .enumerate()
            .map(|(i, &l)| {
                let r = all[at..at + l].to_vec();
                at += l;
                (format!("record_{i}"), r)
            })
            .collect();
        let entries = entries_from_bytes(named)?;
        let cube = DatabaseCube::from_entries(&entries)?;
        *out = Box::into_raw(Box::new(SpirCube {
            cube,
            manifest: entries.manifest,
        }));
        Ok(())
    })
}

/// # Safety
/// `cube` must come from [`spir_cube_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn spir_cube_free(cube: *mut SpirCube) {
    if !cube.is_null() {
        drop(Box::from_raw(cube));
    }
}

/// Writes `n`, `L` (bits) and the cube side `m`.
///
/// # Safety
/// `cube` must be a live handle; outputs valid for writes.
#[no_mangle]
pub unsafe extern "C" fn spir_cube_shape(
    cube: *const SpirCube,
    n: *mut usize,
    entry_bits: *mut usize,
    side: *mut usize,
) -> SpirStatus {
    guard(|| {
        nonnull(cube, "cube")?;
        nonnull(n, "n")?;
        nonnull(entry_bits, "entry_bits")?;
        nonnull(side, "side")?;
        let c = &(*cube).cube;
        *n = c.n();
        *entry_bits = c.entry_bits();
        *side = c.side();
        Ok(())
    })
}

/// Starts two simulated data centres over a copy of `cube`, provisioned
/// with the given link keys.
///
/// # Safety
/// Key buffers must be valid for their lengths; `cube` a live handle;
/// `out` valid for writes.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn spir_sim_new(
    cube: *const SpirCube,
    user_dc1: *const u8,
    user_dc1_len: usize,
    user_dc2: *const u8,
    user_dc2_len: usize,
    dc_dc: *const u8,
    dc_dc_len: usize,
    out: *mut *mut SpirSim,
) -> SpirStatus {
    guard(|| {
        nonnull(cube, "cube")?;
        nonnull(out, "out")?;
        let c = &*cube;
        let (user, dcs) = party_stores(
            bytes(user_dc1, user_dc1_len, "user_dc1")?,
            bytes(user_dc2, user_dc2_len, "user_dc2")?,
            bytes(dc_dc, dc_dc_len, "dc_dc")?,
        )?;
        let deployment = SimDeployment::start(c.cube.clone(), dcs)?;
        let client = UserClient::new(Arc::new(user), c.cube.n(), c.cube.entry_bits()).with_manifest(c.manifest.clone());
        *out = Box::into_raw(Box::new(SpirSim { deployment, client }));
        Ok(())
    })
}

/// Retrieves record `index`. On success `*out_len` is the record length;
/// on `BUFFER_TOO_SMALL` it is the length needed (key bits are spent
/// either way).
///
/// # Safety
/// `sim` must be a live handle; `out` valid for `cap` writes; `out_len`
/// valid for writes.
#[no_mangle]
pub unsafe extern "C" fn spir_sim_retrieve(
    sim: *mut SpirSim,
    index: usize,
    seed: u64,
    out: *mut u8,
    cap: usize,
    out_len: *mut usize,
) -> SpirStatus {
    guard(|| {
        nonnull(sim, "sim")?;
        nonnull(out_len, "out_len")?;
        let s = &*sim;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let got = s.client.retrieve(index, &s.deployment.net, &mut rng)?;
        *out_len = got.bytes.len();
        if got.bytes.len() > cap {
            return Err(Fail::Small {
                need: got.bytes.len(),
                have: cap,
            });
        }
        if !got.bytes.is_empty() {
            nonnull(out, "out")?;
            ptr::copy_nonoverlapping(got.bytes.as_ptr(), out, got.bytes.len());
        }
        Ok(())
    })
}

/// Number of alarms the non-communication monitor has raised.
///
/// # Safety
/// `sim` must be a live handle; `count` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn spir_sim_alarm_count(sim: *const SpirSim, count: *mut usize) -> SpirStatus {
    guard(|| {
        nonnull(sim, "sim")?;
        nonnull(count, "count")?;
        *count = (*sim).deployment.net.alarms().len();
        Ok(())
    })
}

/// # Safety
/// `sim` must come from [`spir_sim_new`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn spir_sim_free(sim: *mut SpirSim) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}
