//! Feature dump files: one JSON header line `{"rows":T,"cols":C,"kind":...}`
//! followed by row-major little-endian f32 values.

use std::io::{BufRead, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Mel,
    Prosody,
}

#[derive(Serialize, Deserialize)]
struct Header {
    rows: usize,
    cols: usize,
    kind: FeatureKind,
}

pub fn write_feature_dump(out: &mut impl Write, m: &Matrix, kind: FeatureKind) -> Result<()> {
    let header = Header {
        rows: m.rows(),
        cols: m.cols(),
        kind,
    };
    let mut bytes = serde_json::to_vec(&header)?;
    bytes.push(b'\n');
    bytes.reserve(m.data().len() * 4);
    for &v in m.data() {
        bytes.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out.write_all(&bytes)
        .map_err(|e| Error::io(Path::new("<feature dump>"), e))
}

pub fn read_feature_dump(input: &mut impl BufRead) -> Result<(Matrix, FeatureKind)> {
    let mut line = Vec::new();
    input
        .read_until(b'\n', &mut line)
        .map_err(|e| Error::io(Path::new("<feature dump>"), e))?;
    if line.last() != Some(&b'\n') {
        return Err(Error::FeatureDump("missing header line".into()));
    }
    let header: Header = serde_json::from_slice(&line[..line.len() - 1])
        .map_err(|e| Error::FeatureDump(format!("bad header: {e}")))?;
    let mut body = Vec::new();
    input
        .read_to_end(&mut body)
        .map_err(|e| Error::io(Path::new("<feature dump>"), e))?;
    let expected = header.rows * header.cols * 4;
    if body.len() != expected {
        return Err(Error::FeatureDump(format!(
            "expected {expected} payload bytes, found {}",
            body.len()
        )));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Ok((Matrix::from_vec(header.rows, header.cols, data)?, header.kind))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_and_payload_layout() {
        let m = Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, -6.5]).unwrap();
        let mut buf = Vec::new();
        write_feature_dump(&mut buf, &m, FeatureKind::Prosody).unwrap();
        let header = b"{\"rows\":2,\"cols\":3,\"kind\":\"prosody\"}\n";
        assert_eq!(&buf[..header.len()], header);
        assert_eq!(buf.len(), header.len() + 24);
        assert_eq!(&buf[buf.len() - 4..], &(-6.5f32).to_le_bytes());
        let (back, kind) = read_feature_dump(&mut buf.as_slice()).unwrap();
        assert_eq!(kind, FeatureKind::Prosody);
        assert_eq!(back, m);
    }

    #[test]
    fn short_payload_is_rejected() {
        let mut buf = b"{\"rows\":2,\"cols\":1,\"kind\":\"mel\"}\n".to_vec();
        buf.extend_from_slice(&1.0f32.to_le_bytes());
        assert!(read_feature_dump(&mut buf.as_slice()).is_err());
    }
}
