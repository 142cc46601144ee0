use std::ffi::CStr;
use std::ptr;

use spir_ffi::*;

fn last_error() -> String {
    let mut buf = [0 as std::ffi::c_char; 256];
    let n = unsafe { spir_last_error_message(buf.as_mut_ptr(), buf.len()) };
    assert!(n > 0);
    unsafe { CStr::from_ptr(buf.as_ptr()) }.to_string_lossy().into_owned()
}

fn keys(len: usize, seed: u8) -> Vec<u8> {
    (0..len)
        .map(|i| (i as u8).wrapping_mul(167).wrapping_add(seed).rotate_left(3) ^ (i >> 8) as u8)
        .collect()
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(spir_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn budget_matches_reference_shape() {
    let (mut u, mut d) = (0u64, 0u64);
    assert_eq!(
        unsafe { spir_required_key_budget(800, 4656, &mut u, &mut d) },
        SpirStatus::Ok
    );
    assert_eq!((u, d), (172_314, 465_600));
}

#[test]
fn null_outputs_are_rejected() {
    let mut d = 0u64;
    let s = unsafe { spir_required_key_budget(800, 4656, ptr::null_mut(), &mut d) };
    assert_eq!(s, SpirStatus::NullPointer);
    assert!(last_error().contains("user_dc_bits"));
}

#[test]
fn zero_shape_is_invalid() {
    let (mut u, mut d) = (0u64, 0u64);
    let s = unsafe { spir_required_key_budget(0, 8, &mut u, &mut d) };
    assert_eq!(s, SpirStatus::InvalidArgument);
}

#[test]
fn error_message_truncates_and_reports_length() {
    let mut d = 0u64;
    unsafe { spir_required_key_budget(1, 1, ptr::null_mut(), &mut d) };
    let full = unsafe { spir_last_error_message(ptr::null_mut(), 0) };
    let mut small = [1 as std::ffi::c_char; 4];
    let n = unsafe { spir_last_error_message(small.as_mut_ptr(), small.len()) };
    assert_eq!(n, full);
    assert_eq!(small[3], 0);
}

#[test]
fn finite_key_length_positive_and_rejects_bad_eps() {
    let mut l = 0u64;
    let s = unsafe { spir_finite_key_length(1e3, 1e7, 0.02, 1.2e6, 1e-10, 1e-15, &mut l) };
    assert_eq!(s, SpirStatus::Ok);
    assert!(l > 0);
    let s = unsafe { spir_finite_key_length(1e3, 1e7, 0.02, 1.2e6, -1.0, 1e-15, &mut l) };
    assert_ne!(s, SpirStatus::Ok);
}

#[test]
fn toeplitz_single_bit_matches_by_hand() {
    // 3-bit input, 1-bit output: row is seed bits 0..3 against input bits.
    let input = [0b101u8];
    let seed = [0b111u8];
    let mut out = [0u8; 1];
    let s = unsafe { spir_toeplitz_hash(input.as_ptr(), 3, seed.as_ptr(), 3, 1, out.as_mut_ptr(), 1) };
    assert_eq!(s, SpirStatus::Ok);
    assert_eq!(out[0], 0);
}

#[test]
fn toeplitz_linear_through_abi() {
    let (n, r) = (200usize, 37usize);
    let a = keys(n / 8 + 1, 1);
    let b = keys(n / 8 + 1, 9);
    let ab: Vec<u8> = a.iter().zip(&b).map(|(x, y)| x ^ y).collect();
    let seed = keys((n + r - 1).div_ceil(8), 4);
    let h = |inp: &[u8]| {
        let mut out = vec![0u8; r.div_ceil(8)];
        let s = unsafe {
            spir_toeplitz_hash(
                inp.as_ptr(),
                n,
                seed.as_ptr(),
                n + r - 1,
                r,
                out.as_mut_ptr(),
                out.len(),
            )
        };
        assert_eq!(s, SpirStatus::Ok);
        out
    };
    let (ha, hb, hab) = (h(&a), h(&b), h(&ab));
    let x: Vec<u8> = ha.iter().zip(&hb).map(|(x, y)| x ^ y).collect();
    assert_eq!(x, hab);
}

#[test]
fn toeplitz_small_buffer() {
    let mut out = [0u8; 1];
    let s = unsafe { spir_toeplitz_hash([0u8; 4].as_ptr(), 32, [0u8; 8].as_ptr(), 47, 16, out.as_mut_ptr(), 1) };
    assert_eq!(s, SpirStatus::BufferTooSmall);
}

#[test]
fn toeplitz_wrong_seed_length() {
    let mut out = [0u8; 2];
    let s = unsafe { spir_toeplitz_hash([0u8; 4].as_ptr(), 32, [0u8; 8].as_ptr(), 40, 16, out.as_mut_ptr(), 2) };
    assert_ne!(s, SpirStatus::Ok);
}

fn make_cube(records: &[Vec<u8>]) -> *mut SpirCube {
    let data: Vec<u8> = records.concat();
    let lens: Vec<usize> = records.iter().map(Vec::len).collect();
    let mut cube = ptr::null_mut();
    let s = unsafe { spir_cube_new(data.as_ptr(), lens.as_ptr(), lens.len(), &mut cube) };
    assert_eq!(s, SpirStatus::Ok, "{}", last_error());
    cube
}

#[test]
fn cube_shape() {
    let recs: Vec<Vec<u8>> = (0..10).map(|i| vec![i as u8; 3 + i % 3]).collect();
    let cube = make_cube(&recs);
    let (mut n, mut l, mut m) = (0, 0, 0);
    assert_eq!(unsafe { spir_cube_shape(cube, &mut n, &mut l, &mut m) }, SpirStatus::Ok);
    assert_eq!((n, l, m), (10, 40, 3));
    unsafe { spir_cube_free(cube) };
}

#[test]
fn empty_cube_rejected() {
    let mut cube = ptr::null_mut();
    let s = unsafe { spir_cube_new(ptr::null(), [0usize; 0].as_ptr(), 0, &mut cube) };
    assert_ne!(s, SpirStatus::Ok);
    assert!(cube.is_null());
}

#[test]
fn free_null_is_noop() {
    unsafe {
        spir_cube_free(ptr::null_mut());
        spir_sim_free(ptr::null_mut());
    }
}

#[test]
fn simulated_retrieval_round_trip() {
    let recs: Vec<Vec<u8>> = (0..20)
        .map(|i| (0..(5 + i % 4)).map(|j| (i * 31 + j * 7) as u8).collect())
        .collect();
    let cube = make_cube(&recs);
    let (u1, u2, dd) = (keys(8192, 1), keys(8192, 2), keys(8192, 3));
    let mut sim = ptr::null_mut();
    let s = unsafe {
        spir_sim_new(
            cube,
            u1.as_ptr(),
            u1.len(),
            u2.as_ptr(),
            u2.len(),
            dd.as_ptr(),
            dd.len(),
            &mut sim,
        )
    };
    assert_eq!(s, SpirStatus::Ok, "{}", last_error());
    for (x, rec) in recs.iter().enumerate().take(4) {
        let mut out = [0u8; 16];
        let mut len = 0usize;
        let s = unsafe { spir_sim_retrieve(sim, x * 5, x as u64, out.as_mut_ptr(), out.len(), &mut len) };
        assert_eq!(s, SpirStatus::Ok, "{}", last_error());
        assert_eq!(&out[..len], &recs[x * 5][..], "record {x} ({} bytes)", rec.len());
    }
    let mut small = [0u8; 1];
    let mut len = 0usize;
    let s = unsafe { spir_sim_retrieve(sim, 3, 99, small.as_mut_ptr(), 1, &mut len) };
    assert_eq!(s, SpirStatus::BufferTooSmall);
    assert_eq!(len, recs[3].len());
    let s = unsafe { spir_sim_retrieve(sim, 10_000, 1, small.as_mut_ptr(), 1, &mut len) };
    assert_eq!(s, SpirStatus::InvalidArgument);
    let mut alarms = 1usize;
    assert_eq!(unsafe { spir_sim_alarm_count(sim, &mut alarms) }, SpirStatus::Ok);
    assert_eq!(alarms, 0);
    unsafe {
        spir_sim_free(sim);
        spir_cube_free(cube);
    }
}

#[test]
fn sim_runs_out_of_keys() {
    let recs: Vec<Vec<u8>> = (0..8).map(|i| vec![i as u8; 4]).collect();
    let cube = make_cube(&recs);
    let (u1, u2, dd) = (keys(64, 1), keys(64, 2), keys(64, 3));
    let mut sim = ptr::null_mut();
    assert_eq!(
        unsafe {
            spir_sim_new(
                cube,
                u1.as_ptr(),
                u1.len(),
                u2.as_ptr(),
                u2.len(),
                dd.as_ptr(),
                dd.len(),
                &mut sim,
            )
        },
        SpirStatus::Ok
    );
    let mut out = [0u8; 8];
    let mut len = 0usize;
    let mut last = SpirStatus::Ok;
    for i in 0..64 {
        last = unsafe { spir_sim_retrieve(sim, i % 8, i as u64, out.as_mut_ptr(), out.len(), &mut len) };
        if last != SpirStatus::Ok {
            break;
        }
    }
    assert_eq!(last, SpirStatus::BudgetExhausted, "{}", last_error());
    unsafe {
        spir_sim_free(sim);
        spir_cube_free(cube);
    }
}
