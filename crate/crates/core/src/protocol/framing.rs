//! Length-prefixed frames: a 4-byte big-endian length followed by that many
//! bytes of UTF-8 JSON.

use std::io::{self, Read, Write};

use super::ProtocolError;

pub const MAX_FRAME_LEN: usize = 16 * 1024 * 1024;

pub fn frame(payload: &[u8]) -> Result<Vec<u8>, ProtocolError> {
    check_len(payload.len())?;
    let mut out = Vec::with_capacity(4 + payload.len());
    out.extend_from_slice(&(payload.len() as u32).to_be_bytes());
    out.extend_from_slice(payload);
    Ok(out)
}

fn check_len(len: usize) -> Result<(), ProtocolError> {
    if len == 0 {
        Err(ProtocolError::EmptyFrame)
    } else if len > MAX_FRAME_LEN {
        Err(ProtocolError::Oversize(len))
    } else {
        Ok(())
    }
}

pub fn write_frame<W: Write>(writer: &mut W, payload: &[u8]) -> Result<(), ProtocolError> {
    writer.write_all(&frame(payload)?)?;
    writer.flush()?;
    Ok(())
}

/// Reads one frame. Returns `Ok(None)` on a clean end of stream before the
/// first header byte.
pub fn read_frame<R: Read>(reader: &mut R) -> Result<Option<Vec<u8>>, ProtocolError> {
    let mut header = [0u8; 4];
    let mut filled = 0;
    while filled < header.len() {
        match reader.read(&mut header[filled..]) {
            Ok(0) if filled == 0 => return Ok(None),
            Ok(0) => return Err(ProtocolError::Truncated),
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    let len = u32::from_be_bytes(header) as usize;
    check_len(len)?;
    let mut payload = vec![0u8; len];
    reader.read_exact(&mut payload).map_err(|e| match e.kind() {
        io::ErrorKind::UnexpectedEof => ProtocolError::Truncated,
        _ => ProtocolError::Io(e.to_string()),
    })?;
    Ok(Some(payload))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Cursor;

    #[test]
    fn empty_object_frame_bytes() {
        assert_eq!(frame(b"{}").unwrap(), [0x00, 0x00, 0x00, 0x02, 0x7B, 0x7D]);
    }

    #[test]
    fn zero_length_is_rejected_both_ways() {
        assert_eq!(frame(b""), Err(ProtocolError::EmptyFrame));
        let mut cur = Cursor::new(vec![0, 0, 0, 0]);
        assert_eq!(read_frame(&mut cur), Err(ProtocolError::EmptyFrame));
    }

    #[test]
    fn oversize_is_rejected() {
        let big = vec![b' '; MAX_FRAME_LEN + 1];
        assert_eq!(frame(&big), Err(ProtocolError::Oversize(MAX_FRAME_LEN + 1)));
        let header = ((MAX_FRAME_LEN + 1) as u32).to_be_bytes();
        let mut cur = Cursor::new(header.to_vec());
        assert_eq!(read_frame(&mut cur), Err(ProtocolError::Oversize(MAX_FRAME_LEN + 1)));
        assert!(frame(&big[..MAX_FRAME_LEN]).is_ok());
    }

    #[test]
    fn truncated_streams() {
        let mut cur = Cursor::new(vec![0, 0]);
        assert_eq!(read_frame(&mut cur), Err(ProtocolError::Truncated));
        let mut cur = Cursor::new(vec![0, 0, 0, 5, b'{']);
        assert_eq!(read_frame(&mut cur), Err(ProtocolError::Truncated));
        let mut cur = Cursor::new(Vec::new());
        assert_eq!(read_frame(&mut cur), Ok(None));
    }

    #[test]
    fn back_to_back_frames() {
        let mut buf = Vec::new();
        write_frame(&mut buf, b"{\"a\":1}").unwrap();
        write_frame(&mut buf, b"[]").unwrap();
        let mut cur = Cursor::new(buf);
        assert_eq!(read_frame(&mut cur).unwrap().unwrap(), b"{\"a\":1}");
        assert_eq!(read_frame(&mut cur).unwrap().unwrap(), b"[]");
        assert_eq!(read_frame(&mut cur).unwrap(), None);
    }
}
