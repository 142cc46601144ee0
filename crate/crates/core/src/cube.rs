//! Database cube: `n` records of `L` bits laid out in an `m × m × m` cube.
//!
//! Linear index `x = x1·m² + x2·m + x3` (row-major, 0-based). Cells at
//! indices `≥ n` are all-zero padding.

use std::fs;
use std::path::{Path, PathBuf};

use crate::bits::BitString;
use crate::error::{Error, Result};

pub const SNAPSHOT_MAGIC: &[u8; 4] = b"QCUB";
pub const SNAPSHOT_VERSION: u8 = 1;

/// Smallest `m` with `m³ ≥ n`, i.e. `⌈n^(1/3)⌉` without floating point.
pub fn side_length(n: usize) -> usize {
    let mut m = (n as f64).cbrt().round() as usize;
    while m.pow(3) < n {
        m += 1;
    }
    while m > 1 && (m - 1).pow(3) >= n {
        m -= 1;
    }
    m.max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CubeCoords(pub [usize; 3]);

impl CubeCoords {
    pub fn get(&self, dim: usize) -> usize {
        self.0[dim]
    }
}

pub fn index_to_coords(x: usize, m: usize) -> Result<CubeCoords> {
    let cells = m.pow(3);
    if x >= cells {
        return Err(Error::Range {
            what: "linear index",
            value: x as u64,
            limit: cells as u64,
        });
    }
    Ok(CubeCoords([x / (m * m), (x / m) % m, x % m]))
}

pub fn coords_to_index(c: CubeCoords, m: usize) -> Result<usize> {
    for &v in &c.0 {
        if v >= m {
            return Err(Error::Range {
                what: "cube coordinate",
                value: v as u64,
                limit: m as u64,
            });
        }
    }
    Ok(c.0[0] * m * m + c.0[1] * m + c.0[2])
}

/// One line of the public ingestion manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub index: usize,
    pub byte_len: usize,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Manifest {
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    /// `<index> <byte-length> <filename>` per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for e in &self.entries {
            s.push_str(&format!("{} {} {}\n", e.index, e.byte_len, e.name));
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.splitn(3, ' ');
            let bad = || {
                Error::Config(format!(
                    "manifest line {}: expected `<index> <byte-length> <filename>`",
                    lineno + 1
                ))
            };
            let index = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let byte_len = parts.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
            let name = parts.next().map(str::trim).filter(|s| !s.is_empty()).ok_or_else(bad)?;
            entries.push(ManifestEntry {
                index,
                byte_len,
                name: name.to_string(),
            });
        }
        for (i, e) in entries.iter().enumerate() {
            if e.index != i {
                return Err(Error::Config(format!(
                    "manifest indices must be 0..n in order; found {} at position {}",
                    e.index, i
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn byte_len(&self, index: usize) -> Option<usize> {
        self.entries.get(index).map(|e| e.byte_len)
    }
}

/// Records read from disk with their derived shape.
#[derive(Debug, Clone)]
pub struct LoadedEntries {
    pub records: Vec<BitString>,
    pub n: usize,
    pub entry_bits: usize,
    pub manifest: Manifest,
}

/// Pads raw records on the right to `8 × max length` bits.
pub fn entries_from_bytes(named: Vec<(String, Vec<u8>)>) -> Result<LoadedEntries> {
    if named.is_empty() {
        return Err(Error::Config("database source contains no records".into()));
    }
    let max_len = named.iter().map(|(_, b)| b.len()).max().unwrap_or(0);
    if max_len == 0 {
        return Err(Error::Config("all database records are empty".into()));
    }
    let entry_bits = 8 * max_len;
    let mut manifest = Manifest::default();
    let mut records = Vec::with_capacity(named.len());
    for (index, (name, bytes)) in named.into_iter().enumerate() {
        manifest.entries.push(ManifestEntry {
            index,
            byte_len: bytes.len(),
            name,
        });
        records.push(BitString::from_bytes(&bytes, entry_bits));
    }
    Ok(LoadedEntries {
        n: records.len(),
        records,
        entry_bits,
        manifest,
    })
}

/// Deterministic stand-in for a fingerprint collection: `n` records named
/// `fp_NNNN.bin`, the first exactly `max_bytes` long and the rest between
/// half and all of it.
pub fn synthetic_records(n: usize, max_bytes: usize, seed: u64) -> Vec<(String, Vec<u8>)> {
    use rand::{Rng, RngCore, SeedableRng};
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let len = if i == 0 {
                max_bytes
            } else {
                rng.gen_range(max_bytes.div_ceil(2)..=max_bytes)
            };
            let mut b = vec![0u8; len];
            rng.fill_bytes(&mut b);
            (format!("fp_{i:04}.bin"), b)
        })
        .collect()
}

/// Reads a directory (files in name order) or a manifest file.
pub fn load_entries(source: &Path) -> Result<LoadedEntries> {
    let meta = fs::metadata(source).map_err(|e| Error::io(source, e))?;
    let files: Vec<(String, PathBuf)> = if meta.is_dir() {
        let mut names = Vec::new();
        for entry in fs::read_dir(source).map_err(|e| Error::io(source, e))? {
            let entry = entry.map_err(|e| Error::io(source, e))?;
            if entry.file_type().map_err(|e| Error::io(entry.path(), e))?.is_file() {
                names.push(entry.file_name().to_string_lossy().into_owned());
            }
        }
        names.sort();
        names
            .into_iter()
            .map(|n| {
                let p = source.join(&n);
                (n, p)
            })
            .collect()
    } else {
        let text = fs::read_to_string(source).map_err(|e| Error::io(source, e))?;
        let manifest = Manifest::parse(&text)?;
        let base = source.parent().unwrap_or_else(|| Path::new("."));
        manifest
            .entries
            .into_iter()
            .map(|e| {
                let p = base.join(&e.name);
                (e.name, p)
            })
            .collect()
    };
    let mut named = Vec::with_capacity(files.len());
    for (name, path) in files {
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        named.push((name, bytes));
    }
    entries_from_bytes(named)
}

/// Immutable database cube.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatabaseCube {
    n: usize,
    entry_bits: usize,
    side: usize,
    cells: Vec<BitString>,
}

pub fn build_cube(records: Vec<BitString>, n: usize, entry_bits: usize) -> Result<DatabaseCube> {
    if n == 0 || entry_bits == 0 {
        return Err(Error::Validation("cube needs n >= 1 and L >= 1".into()));
    }
    if records.len() != n {
        return Err(Error::Validation(format!(
            "expected {n} records, got {}",
            records.len()
        )));
    }
    if let Some((i, r)) = records.iter().enumerate().find(|(_, r)| r.len() != entry_bits) {
        return Err(Error::Validation(format!(
            "record {i} has {} bits, expected {entry_bits}",
            r.len()
        )));
    }
    let side = side_length(n);
    let mut cells = records;
    cells.resize(side.pow(3), BitString::zeros(entry_bits));
    Ok(DatabaseCube {
        n,
        entry_bits,
        side,
        cells,
    })
}

impl DatabaseCube {
    pub fn from_entries(entries: &LoadedEntries) -> Result<Self> {
        build_cube(entries.records.clone(), entries.n, entries.entry_bits)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn entry_bits(&self) -> usize {
        self.entry_bits
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn cells(&self) -> &[BitString] {
        &self.cells
    }

    pub fn cell(&self, x: usize) -> &BitString {
        &self.cells[x]
    }

    pub fn cell_at(&self, c: CubeCoords) -> &BitString {
        let m = self.side;
        &self.cells[c.0[0] * m * m + c.0[1] * m + c.0[2]]
    }

    pub fn is_padding(&self, x: usize) -> bool {
        x >= self.n
    }

    fn check_vectors(&self, sets: &[&BitString; 3]) -> Result<()> {
        for (d, s) in sets.iter().enumerate() {
            if s.len() != self.side {
                return Err(Error::Validation(format!(
                    "membership vector {} has {} bits, cube side is {}",
                    d + 1,
                    s.len(),
                    self.side
                )));
            }
        }
        Ok(())
    }

    /// XOR of every cell `(i, j, k)` with `i ∈ T1, j ∈ T2, k ∈ T3`.
    pub fn subcube_xor(&self, t1: &BitString, t2: &BitString, t3: &BitString) -> Result<BitString> {
        self.check_vectors(&[t1, t2, t3])?;
        let m = self.side;
        let mut acc = BitString::zeros(self.entry_bits);
        let js: Vec<usize> = t2.iter_ones().collect();
        let ks: Vec<usize> = t3.iter_ones().collect();
        for i in t1.iter_ones() {
            for &j in &js {
                let row = (i * m + j) * m;
                for &k in &ks {
                    acc.xor_assign(&self.cells[row + k]);
                }
            }
        }
        Ok(acc)
    }

    pub fn to_snapshot(&self) -> Vec<u8> {
        let cell_bytes = self.entry_bits.div_ceil(8);
        let mut out = Vec::with_capacity(17 + self.cells.len() * cell_bytes);
        out.extend_from_slice(SNAPSHOT_MAGIC);
        out.push(SNAPSHOT_VERSION);
        out.extend_from_slice(&(self.n as u32).to_be_bytes());
        out.extend_from_slice(&(self.entry_bits as u32).to_be_bytes());
        out.extend_from_slice(&(self.side as u32).to_be_bytes());
        for c in &self.cells {
            out.extend_from_slice(&c.to_bytes());
        }
        out
    }

    pub fn from_snapshot(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 17 || &bytes[..4] != SNAPSHOT_MAGIC {
            return Err(Error::Validation("not a cube snapshot (bad magic)".into()));
        }
        if bytes[4] != SNAPSHOT_VERSION {
            return Err(Error::Validation(format!("unsupported snapshot version {}", bytes[4])));
        }
        let rd = |o: usize| u32::from_be_bytes(bytes[o..o + 4].try_into().expect("4 bytes")) as usize;
        let (n, entry_bits, side) = (rd(5), rd(9), rd(13));
        if n == 0 || entry_bits == 0 || side != side_length(n) {
            return Err(Error::Validation(format!(
                "inconsistent snapshot header n={n} L={entry_bits} m={side}"
            )));
        }
        let cell_bytes = entry_bits.div_ceil(8);
        let body = &bytes[17..];
        if body.len() != side.pow(3) * cell_bytes {
            return Err(Error::Validation(format!(
                "snapshot body has {} bytes, expected {}",
                body.len(),
                side.pow(3) * cell_bytes
            )));
        }
        let cells: Vec<BitString> = body
            .chunks(cell_bytes)
            .map(|c| BitString::from_bytes(c, entry_bits))
            .collect();
        if cells[n..].iter().any(|c| !c.is_zero()) {
            return Err(Error::Validation("snapshot padding cells are not zero".into()));
        }
        Ok(Self {
            n,
            entry_bits,
            side,
            cells,
        })
    }

    pub fn write_snapshot(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_snapshot()).map_err(|e| Error::io(path, e))
    }

    pub fn read_snapshot(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_snapshot(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    fn random_cube(n: usize, l: usize, seed: u64) -> DatabaseCube {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let recs = (0..n)
            .map(|_| BitString::from_bools(&(0..l).map(|_| rng.gen()).collect::<Vec<_>>()))
            .collect();
        build_cube(recs, n, l).unwrap()
    }

    #[test]
    fn coords_examples() {
        assert_eq!(index_to_coords(0, 10).unwrap(), CubeCoords([0, 0, 0]));
        assert_eq!(index_to_coords(799, 10).unwrap(), CubeCoords([7, 9, 9]));
        assert_eq!(index_to_coords(123, 10).unwrap(), CubeCoords([1, 2, 3]));
        assert_eq!(coords_to_index(CubeCoords([0, 0, 0]), 10).unwrap(), 0);
        assert_eq!(coords_to_index(CubeCoords([7, 9, 9]), 10).unwrap(), 799);
        assert!(matches!(index_to_coords(1000, 10), Err(Error::Range { .. })));
        assert!(matches!(
            coords_to_index(CubeCoords([0, 10, 0]), 10),
            Err(Error::Range { .. })
        ));
    }

    #[test]
    fn index_mapping_bijective_up_to_16() {
        for m in 1..=16 {
            let mut seen = vec![false; m * m * m];
            for (x, seen) in seen.iter_mut().enumerate() {
                let c = index_to_coords(x, m).unwrap();
                assert_eq!(coords_to_index(c, m).unwrap(), x);
                assert!(!*seen);
                *seen = true;
            }
        }
    }

    #[test]
    fn side_lengths() {
        assert_eq!(side_length(1), 1);
        assert_eq!(side_length(8), 2);
        assert_eq!(side_length(9), 3);
        assert_eq!(side_length(27), 3);
        assert_eq!(side_length(28), 4);
        assert_eq!(side_length(800), 10);
        assert_eq!(side_length(1000), 10);
        assert_eq!(side_length(1001), 11);
    }

    #[test]
    fn build_cube_padding_counts() {
        for (n, m, zeros) in [(800, 10, 200), (8, 2, 0), (9, 3, 18)] {
            let c = random_cube(n, 5, 1);
            assert_eq!(c.side(), m);
            assert_eq!(c.cells().len(), m * m * m);
            assert_eq!(c.cells().len() - n, zeros);
            assert!(c.cells()[n..].iter().all(BitString::is_zero));
        }
    }

    #[test]
    fn build_cube_rejects_mismatch() {
        let recs = vec![BitString::zeros(8), BitString::zeros(7)];
        assert!(matches!(build_cube(recs, 2, 8), Err(Error::Validation(_))));
        assert!(matches!(
            build_cube(vec![BitString::zeros(8)], 2, 8),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn padding_rule() {
        let e = entries_from_bytes(vec![
            ("a".into(), vec![0xaa]),
            ("b".into(), vec![1, 2]),
            ("c".into(), vec![3, 4, 5]),
        ])
        .unwrap();
        assert_eq!(e.entry_bits, 24);
        assert_eq!(e.records[0].to_bytes(), vec![0xaa, 0, 0]);
        assert_eq!(e.records[1].to_bytes(), vec![1, 2, 0]);
        assert_eq!(e.manifest.byte_len(1), Some(2));

        let single = entries_from_bytes(vec![("x".into(), vec![7])]).unwrap();
        assert_eq!((single.n, single.entry_bits), (1, 8));
        assert_eq!(DatabaseCube::from_entries(&single).unwrap().side(), 1);
        assert!(matches!(entries_from_bytes(vec![]), Err(Error::Config(_))));
    }

    #[test]
    fn subcube_xor_edges() {
        let c = random_cube(27, 13, 2);
        let m = c.side();
        let empty = BitString::zeros(m);
        let full = BitString::from_bools(&vec![true; m]);
        assert!(c.subcube_xor(&empty, &full, &full).unwrap().is_zero());
        let one = |p: usize| BitString::zeros(m).toggled(p);
        assert_eq!(
            &c.subcube_xor(&one(1), &one(2), &one(0)).unwrap(),
            c.cell_at(CubeCoords([1, 2, 0]))
        );
        assert!(c.subcube_xor(&BitString::zeros(m + 1), &full, &full).is_err());
    }

    #[test]
    fn subcube_xor_full_parity_m2() {
        for seed in 0..32 {
            let c = random_cube(8, 1, seed);
            let full = BitString::from_bools(&[true, true]);
            let mut parity = false;
            for x in 0..8 {
                parity ^= c.cell(x).get(0);
            }
            assert_eq!(c.subcube_xor(&full, &full, &full).unwrap().get(0), parity);
        }
    }

    #[test]
    fn subcube_xor_is_multilinear() {
        for m in 1..=3usize {
            let n = m.pow(3);
            for seed in 0..4 {
                let c = random_cube(n, 1, seed);
                for a in 0..(1u32 << m) {
                    for b in 0..(1u32 << m) {
                        for cc in 0..(1u32 << m) {
                            let v = |bits: u32| {
                                BitString::from_bools(&(0..m).map(|i| (bits >> i) & 1 == 1).collect::<Vec<_>>())
                            };
                            let (t1, t2, t3) = (v(a), v(b), v(cc));
                            for p in 0..m {
                                let lhs = c.subcube_xor(&t1.toggled(p), &t2, &t3).unwrap();
                                let rhs = c
                                    .subcube_xor(&t1, &t2, &t3)
                                    .unwrap()
                                    .xor(&c.subcube_xor(&BitString::zeros(m).toggled(p), &t2, &t3).unwrap());
                                assert_eq!(lhs, rhs);
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn snapshot_round_trip_and_rejects() {
        let c = random_cube(9, 19, 3);
        let bytes = c.to_snapshot();
        assert_eq!(&bytes[..4], b"QCUB");
        assert_eq!(bytes.len(), 17 + 27 * 3);
        assert_eq!(DatabaseCube::from_snapshot(&bytes).unwrap(), c);
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(DatabaseCube::from_snapshot(&bad).is_err());
        let mut bad = bytes.clone();
        *bad.last_mut().unwrap() = 1;
        assert!(DatabaseCube::from_snapshot(&bad).is_err());
        assert!(DatabaseCube::from_snapshot(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn manifest_round_trip_and_errors() {
        let e = entries_from_bytes(vec![("f one.bin".into(), vec![1]), ("g.bin".into(), vec![1, 2])]).unwrap();
        let text = e.manifest.to_text();
        assert_eq!(text, "0 1 f one.bin\n1 2 g.bin\n");
        assert_eq!(Manifest::parse(&text).unwrap(), e.manifest);
        assert!(Manifest::parse("0 x foo\n").is_err());
        assert!(Manifest::parse("1 3 foo\n").is_err());
    }

    #[test]
    fn load_from_directory_and_manifest() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("b.bin"), [1, 2, 3]).unwrap();
        fs::write(dir.path().join("a.bin"), [9]).unwrap();
        let e = load_entries(dir.path()).unwrap();
        assert_eq!(e.n, 2);
        assert_eq!(e.entry_bits, 24);
        assert_eq!(e.manifest.entries[0].name, "a.bin");
        let mpath = dir.path().join("db.manifest");
        fs::write(&mpath, "0 3 b.bin\n1 1 a.bin\n").unwrap();
        let e2 = load_entries(&mpath).unwrap();
        assert_eq!(e2.records[0].to_bytes(), vec![1, 2, 3]);
        fs::write(&mpath, "0 3 b.bin\n1 1 missing.bin\n").unwrap();
        match load_entries(&mpath) {
            Err(Error::Io { path, .. }) => assert!(path.ends_with("missing.bin")),
            other => panic!("expected io error, got {other:?}"),
        }
        let empty = tempfile::tempdir().unwrap();
        assert!(matches!(load_entries(empty.path()), Err(Error::Config(_))));
    }
}
