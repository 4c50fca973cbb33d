//! Binary cache for tokenized samples so large corpora don't pay the
//! normalize/tokenize cost twice. Little-endian, versioned, magic `XLTK`.

use super::{DataError, TokenizedSample};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"XLTK";
const VERSION: u16 = 1;

pub fn write_cache(
    path: &Path,
    samples: &[TokenizedSample],
    t_max: usize,
    t_char: usize,
) -> Result<(), DataError> {
    let io_err = |e: std::io::Error| DataError::Io {
        path: path.display().to_string(),
        source: e,
    };
    let mut w = BufWriter::new(std::fs::File::create(path).map_err(io_err)?);
    w.write_all(MAGIC).map_err(io_err)?;
    w.write_all(&VERSION.to_le_bytes()).map_err(io_err)?;
    w.write_all(&(t_max as u32).to_le_bytes()).map_err(io_err)?;
    w.write_all(&(t_char as u32).to_le_bytes()).map_err(io_err)?;
    w.write_all(&(samples.len() as u32).to_le_bytes())
        .map_err(io_err)?;
    for s in samples {
        debug_assert_eq!(s.word_ids.len(), t_max);
        debug_assert_eq!(s.char_ids.len(), t_char);
        w.write_all(&(s.word_len as u32).to_le_bytes()).map_err(io_err)?;
        w.write_all(&(s.char_len as u32).to_le_bytes()).map_err(io_err)?;
        w.write_all(&s.labels).map_err(io_err)?;
        for &id in &s.word_ids {
            w.write_all(&id.to_le_bytes()).map_err(io_err)?;
        }
        for &id in &s.char_ids {
            w.write_all(&id.to_le_bytes()).map_err(io_err)?;
        }
    }
    w.flush().map_err(io_err)
}

/// Read a cache written by [`write_cache`]. The stored widths must match the
/// requested ones — a cache from another configuration is an error, not a
/// silent reinterpretation.
pub fn read_cache(
    path: &Path,
    t_max: usize,
    t_char: usize,
) -> Result<Vec<TokenizedSample>, DataError> {
    let io_err = |e: std::io::Error| DataError::Io {
        path: path.display().to_string(),
        source: e,
    };
    let mut r = BufReader::new(std::fs::File::open(path).map_err(io_err)?);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != MAGIC {
        return Err(DataError::BadCache(format!("bad magic {magic:?}")));
    }
    let mut u16buf = [0u8; 2];
    r.read_exact(&mut u16buf).map_err(io_err)?;
    let version = u16::from_le_bytes(u16buf);
    if version != VERSION {
        return Err(DataError::BadCache(format!(
            "unsupported version {version}, expected {VERSION}"
        )));
    }
    let mut u32buf = [0u8; 4];
    let mut read_u32 = |r: &mut BufReader<std::fs::File>| -> Result<u32, DataError> {
        r.read_exact(&mut u32buf).map_err(|e| DataError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Ok(u32::from_le_bytes(u32buf))
    };
    let stored_t_max = read_u32(&mut r)? as usize;
    let stored_t_char = read_u32(&mut r)? as usize;
    if stored_t_max != t_max || stored_t_char != t_char {
        return Err(DataError::BadCache(format!(
            "cache widths ({stored_t_max},{stored_t_char}) differ from configured ({t_max},{t_char})"
        )));
    }
    let n = read_u32(&mut r)? as usize;

    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let word_len = read_u32(&mut r)? as usize;
        let char_len = read_u32(&mut r)? as usize;
        let mut labels = [0u8; 6];
        r.read_exact(&mut labels).map_err(io_err)?;
        let mut word_ids = vec![0u32; t_max];
        for id in &mut word_ids {
            let mut b = [0u8; 4];
            r.read_exact(&mut b).map_err(io_err)?;
            *id = u32::from_le_bytes(b);
        }
        let mut char_ids = vec![0u32; t_char];
        for id in &mut char_ids {
            let mut b = [0u8; 4];
            r.read_exact(&mut b).map_err(io_err)?;
            *id = u32::from_le_bytes(b);
        }
        out.push(TokenizedSample {
            word_ids,
            char_ids,
            word_len,
            char_len,
            labels,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(seed: u32, t_max: usize, t_char: usize) -> TokenizedSample {
        TokenizedSample {
            word_ids: (0..t_max as u32).map(|i| (i * 7 + seed) % 91).collect(),
            char_ids: (0..t_char as u32).map(|i| (i * 3 + seed) % 50).collect(),
            word_len: 4,
            char_len: 9,
            labels: [1, 0, 0, 1, 0, 0],
        }
    }

    #[test]
    fn roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.bin");
        let samples: Vec<_> = (0..5).map(|i| sample(i, 12, 30)).collect();
        write_cache(&p, &samples, 12, 30).unwrap();
        assert_eq!(read_cache(&p, 12, 30).unwrap(), samples);
    }

    #[test]
    fn width_mismatch_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.bin");
        write_cache(&p, &[sample(0, 12, 30)], 12, 30).unwrap();
        assert!(matches!(
            read_cache(&p, 16, 30),
            Err(DataError::BadCache(_))
        ));
    }

    #[test]
    fn bad_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.bin");
        std::fs::write(&p, b"NOPE else entirely").unwrap();
        assert!(matches!(
            read_cache(&p, 12, 30),
            Err(DataError::BadCache(_))
        ));
    }
}
