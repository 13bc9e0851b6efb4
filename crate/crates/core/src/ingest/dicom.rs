//! Just enough DICOM to pull pixels and rescale parameters out of an
//! uncompressed little-endian CT slice. Encapsulated (compressed) pixel
//! data and big-endian transfer syntaxes are rejected.

use std::path::Path;

use ndarray::Array2;

use super::{RawSlice, SliceMeta};
use crate::error::{Error, Result};

pub const IMPLICIT_VR_LITTLE_ENDIAN: &str = "1.2.840.10008.1.2";
pub const EXPLICIT_VR_LITTLE_ENDIAN: &str = "1.2.840.10008.1.2.1";

const TAG_TRANSFER_SYNTAX: (u16, u16) = (0x0002, 0x0010);
const TAG_PATIENT_ID: (u16, u16) = (0x0010, 0x0020);
const TAG_ROWS: (u16, u16) = (0x0028, 0x0010);
const TAG_COLUMNS: (u16, u16) = (0x0028, 0x0011);
const TAG_BITS_ALLOCATED: (u16, u16) = (0x0028, 0x0100);
const TAG_PIXEL_REPRESENTATION: (u16, u16) = (0x0028, 0x0103);
const TAG_RESCALE_INTERCEPT: (u16, u16) = (0x0028, 0x1052);
const TAG_RESCALE_SLOPE: (u16, u16) = (0x0028, 0x1053);
const TAG_PIXEL_DATA: (u16, u16) = (0x7FE0, 0x0010);
const TAG_ITEM: (u16, u16) = (0xFFFE, 0xE000);
const TAG_ITEM_END: (u16, u16) = (0xFFFE, 0xE00D);
const TAG_SEQUENCE_END: (u16, u16) = (0xFFFE, 0xE0DD);
const UNDEFINED_LENGTH: u32 = 0xFFFF_FFFF;

#[derive(Debug, Clone, PartialEq)]
pub struct DicomSlice {
    pub pixels: Array2<i16>,
    pub rescale_slope: f64,
    pub rescale_intercept: f64,
    pub patient_id: Option<String>,
}

impl DicomSlice {
    pub fn into_raw_slice(self, name: impl Into<String>, patient_random_id: u64, z_position: Option<f64>) -> RawSlice {
        RawSlice {
            name: name.into(),
            pixels: self.pixels,
            meta: SliceMeta {
                rescale_slope: self.rescale_slope,
                rescale_intercept: self.rescale_intercept,
                patient_random_id,
                z_position,
            },
        }
    }
}

pub fn read_dicom(path: &Path) -> Result<DicomSlice> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_dicom(&bytes).map_err(|reason| Error::format(path, reason))
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
    explicit: bool,
}

#[derive(Default)]
struct Fields<'a> {
    transfer_syntax: Option<String>,
    patient_id: Option<String>,
    rows: Option<u16>,
    columns: Option<u16>,
    bits_allocated: Option<u16>,
    pixel_representation: Option<u16>,
    intercept: Option<f64>,
    slope: Option<f64>,
    pixel_data: Option<&'a [u8]>,
}

fn has_long_length(vr: &[u8]) -> bool {
    matches!(vr, b"OB" | b"OD" | b"OF" | b"OL" | b"OV" | b"OW" | b"SQ" | b"SV" | b"UC" | b"UN" | b"UR" | b"UT" | b"UV")
}

fn text(value: &[u8]) -> String {
    String::from_utf8_lossy(value).trim_matches(|c: char| c == '\0' || c.is_whitespace()).to_string()
}

fn us(value: &[u8]) -> std::result::Result<u16, String> {
    value.get(..2).map(|b| u16::from_le_bytes([b[0], b[1]])).ok_or_else(|| "short US value".to_string())
}

fn ds(value: &[u8]) -> std::result::Result<f64, String> {
    let t = text(value);
    // multi-valued DS: first value applies
    let first = t.split('\\').next().unwrap_or("");
    first.trim().parse().map_err(|_| format!("invalid decimal string {t:?}"))
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or("unexpected end of file")?;
        let out = &self.buf[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u16(&mut self) -> std::result::Result<u16, String> {
        let b = self.take(2)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self) -> std::result::Result<u32, String> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn peek_group(&self) -> Option<u16> {
        self.buf.get(self.pos..self.pos + 2).map(|b| u16::from_le_bytes([b[0], b[1]]))
    }

    /// Tag, VR (if explicit) and value length of the next element.
    fn header(&mut self) -> std::result::Result<((u16, u16), Option<[u8; 2]>, u32), String> {
        let tag = (self.u16()?, self.u16()?);
        if tag.0 == 0xFFFE {
            return Ok((tag, None, self.u32()?));
        }
        if self.explicit {
            let vr = self.take(2)?;
            let vr = [vr[0], vr[1]];
            let len = if has_long_length(&vr) {
                self.take(2)?;
                self.u32()?
            } else {
                self.u16()? as u32
            };
            Ok((tag, Some(vr), len))
        } else {
            Ok((tag, None, self.u32()?))
        }
    }

    /// Skips items of a sequence of undefined length through its delimiter.
    fn skip_undefined_sequence(&mut self) -> std::result::Result<(), String> {
        loop {
            let (tag, _, len) = self.header()?;
            match tag {
                TAG_SEQUENCE_END => return Ok(()),
                TAG_ITEM if len == UNDEFINED_LENGTH => self.skip_until(TAG_ITEM_END)?,
                TAG_ITEM => {
                    self.take(len as usize)?;
                }
                other => return Err(format!("unexpected tag {other:04X?} inside sequence")),
            }
        }
    }

    /// Skips nested elements until the given delimiter tag.
    fn skip_until(&mut self, delimiter: (u16, u16)) -> std::result::Result<(), String> {
        loop {
            let (tag, _, len) = self.header()?;
            if tag == delimiter {
                return Ok(());
            }
            if len == UNDEFINED_LENGTH {
                self.skip_undefined_sequence()?;
            } else {
                self.take(len as usize)?;
            }
        }
    }

    fn read_elements(&mut self, fields: &mut Fields<'a>, stop_after_meta: bool) -> std::result::Result<(), String> {
        while self.pos < self.buf.len() {
            if stop_after_meta && self.peek_group() != Some(0x0002) {
                return Ok(());
            }
            let (tag, vr, len) = self.header()?;
            if len == UNDEFINED_LENGTH {
                if tag == TAG_PIXEL_DATA {
                    return Err("encapsulated (compressed) pixel data is not supported".into());
                }
                if vr.is_some_and(|v| &v != b"SQ" && &v != b"UN") {
                    return Err(format!("undefined length on non-sequence element {tag:04X?}"));
                }
                self.skip_undefined_sequence()?;
                continue;
            }
            let value = self.take(len as usize)?;
            match tag {
                TAG_TRANSFER_SYNTAX => fields.transfer_syntax = Some(text(value)),
                TAG_PATIENT_ID => fields.patient_id = Some(text(value)),
                TAG_ROWS => fields.rows = Some(us(value)?),
                TAG_COLUMNS => fields.columns = Some(us(value)?),
                TAG_BITS_ALLOCATED => fields.bits_allocated = Some(us(value)?),
                TAG_PIXEL_REPRESENTATION => fields.pixel_representation = Some(us(value)?),
                TAG_RESCALE_INTERCEPT => fields.intercept = Some(ds(value)?),
                TAG_RESCALE_SLOPE => fields.slope = Some(ds(value)?),
                TAG_PIXEL_DATA => {
                    fields.pixel_data = Some(value);
                    return Ok(());
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Parses a Part-10 file image held in memory.
pub fn parse_dicom(bytes: &[u8]) -> std::result::Result<DicomSlice, String> {
    if bytes.len() < 132 || &bytes[128..132] != b"DICM" {
        return Err("missing DICM preamble".into());
    }
    let mut fields = Fields::default();
    let mut cursor = Cursor { buf: bytes, pos: 132, explicit: true };
    cursor.read_elements(&mut fields, true)?;
    let syntax = fields.transfer_syntax.clone().ok_or("missing transfer syntax")?;
    cursor.explicit = match syntax.as_str() {
        EXPLICIT_VR_LITTLE_ENDIAN => true,
        IMPLICIT_VR_LITTLE_ENDIAN => false,
        other => return Err(format!("unsupported transfer syntax {other} (only uncompressed little endian)")),
    };
    cursor.read_elements(&mut fields, false)?;

    let rows = fields.rows.ok_or("missing Rows")? as usize;
    let cols = fields.columns.ok_or("missing Columns")? as usize;
    let bits = fields.bits_allocated.unwrap_or(16);
    if bits != 16 {
        return Err(format!("only 16-bit pixels are supported, got {bits}"));
    }
    let data = fields.pixel_data.ok_or("missing PixelData")?;
    if data.len() < rows * cols * 2 {
        return Err(format!("PixelData holds {} bytes, {}x{} pixels need {}", data.len(), rows, cols, rows * cols * 2));
    }
    let signed = fields.pixel_representation.unwrap_or(0) == 1;
    let mut pixels = Vec::with_capacity(rows * cols);
    for b in data[..rows * cols * 2].chunks_exact(2) {
        let raw = [b[0], b[1]];
        let v = if signed {
            i16::from_le_bytes(raw)
        } else {
            i16::try_from(u16::from_le_bytes(raw)).map_err(|_| "unsigned pixel exceeds int16 range".to_string())?
        };
        pixels.push(v);
    }
    Ok(DicomSlice {
        pixels: Array2::from_shape_vec((rows, cols), pixels).expect("size checked"),
        rescale_slope: fields.slope.unwrap_or(1.0),
        rescale_intercept: fields.intercept.unwrap_or(0.0),
        patient_id: fields.patient_id,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn explicit(out: &mut Vec<u8>, tag: (u16, u16), vr: &[u8; 2], value: &[u8]) {
        out.extend_from_slice(&tag.0.to_le_bytes());
        out.extend_from_slice(&tag.1.to_le_bytes());
        out.extend_from_slice(vr);
        if has_long_length(vr) {
            out.extend_from_slice(&[0, 0]);
            out.extend_from_slice(&(value.len() as u32).to_le_bytes());
        } else {
            out.extend_from_slice(&(value.len() as u16).to_le_bytes());
        }
        out.extend_from_slice(value);
    }

    fn implicit(out: &mut Vec<u8>, tag: (u16, u16), value: &[u8]) {
        out.extend_from_slice(&tag.0.to_le_bytes());
        out.extend_from_slice(&tag.1.to_le_bytes());
        out.extend_from_slice(&(value.len() as u32).to_le_bytes());
        out.extend_from_slice(value);
    }

    fn raw_tag(out: &mut Vec<u8>, tag: (u16, u16), len: u32) {
        out.extend_from_slice(&tag.0.to_le_bytes());
        out.extend_from_slice(&tag.1.to_le_bytes());
        out.extend_from_slice(&len.to_le_bytes());
    }

    fn header(syntax: &str) -> Vec<u8> {
        let mut out = vec![0u8; 128];
        out.extend_from_slice(b"DICM");
        let mut uid = syntax.as_bytes().to_vec();
        if uid.len() % 2 == 1 {
            uid.push(0);
        }
        explicit(&mut out, TAG_TRANSFER_SYNTAX, b"UI", &uid);
        out
    }

    fn pixels(rows: usize, cols: usize) -> Vec<u8> {
        (0..rows * cols).flat_map(|i| ((i % 3000) as i16 - 1000).to_le_bytes()).collect()
    }

    #[test]
    fn explicit_vr_with_nested_sequence() {
        let mut f = header(EXPLICIT_VR_LITTLE_ENDIAN);
        explicit(&mut f, TAG_PATIENT_ID, b"LO", b"LIDC-IDRI-0001");
        // undefined-length sequence with one undefined-length item
        f.extend_from_slice(&0x0008u16.to_le_bytes());
        f.extend_from_slice(&0x1140u16.to_le_bytes());
        f.extend_from_slice(b"SQ\0\0");
        f.extend_from_slice(&UNDEFINED_LENGTH.to_le_bytes());
        raw_tag(&mut f, TAG_ITEM, UNDEFINED_LENGTH);
        explicit(&mut f, (0x0008, 0x1150), b"UI", b"1.2.3\0");
        raw_tag(&mut f, TAG_ITEM_END, 0);
        raw_tag(&mut f, TAG_SEQUENCE_END, 0);
        explicit(&mut f, TAG_ROWS, b"US", &4u16.to_le_bytes());
        explicit(&mut f, TAG_COLUMNS, b"US", &3u16.to_le_bytes());
        explicit(&mut f, TAG_BITS_ALLOCATED, b"US", &16u16.to_le_bytes());
        explicit(&mut f, TAG_PIXEL_REPRESENTATION, b"US", &1u16.to_le_bytes());
        explicit(&mut f, TAG_RESCALE_INTERCEPT, b"DS", b"-1024 ");
        explicit(&mut f, TAG_RESCALE_SLOPE, b"DS", b"1 ");
        explicit(&mut f, TAG_PIXEL_DATA, b"OW", &pixels(4, 3));
        let d = parse_dicom(&f).unwrap();
        assert_eq!(d.pixels.dim(), (4, 3));
        assert_eq!(d.pixels[[0, 0]], -1000);
        assert_eq!(d.pixels[[1, 2]], -995);
        assert_eq!(d.rescale_intercept, -1024.0);
        assert_eq!(d.rescale_slope, 1.0);
        assert_eq!(d.patient_id.as_deref(), Some("LIDC-IDRI-0001"));
    }

    #[test]
    fn implicit_vr_defaults() {
        let mut f = header(IMPLICIT_VR_LITTLE_ENDIAN);
        implicit(&mut f, TAG_ROWS, &2u16.to_le_bytes());
        implicit(&mut f, TAG_COLUMNS, &2u16.to_le_bytes());
        implicit(&mut f, TAG_PIXEL_DATA, &[1, 0, 2, 0, 3, 0, 4, 0]);
        let d = parse_dicom(&f).unwrap();
        assert_eq!(d.pixels.iter().copied().collect::<Vec<_>>(), vec![1, 2, 3, 4]);
        assert_eq!(d.rescale_slope, 1.0);
        assert_eq!(d.rescale_intercept, 0.0);
        let raw = d.into_raw_slice("s", 3, None);
        assert_eq!(raw.meta.patient_random_id, 3);
    }

    #[test]
    fn compressed_syntax_is_rejected() {
        let f = header("1.2.840.10008.1.2.4.70");
        assert!(parse_dicom(&f).unwrap_err().contains("unsupported transfer syntax"));
    }

    #[test]
    fn encapsulated_pixels_are_rejected() {
        let mut f = header(EXPLICIT_VR_LITTLE_ENDIAN);
        explicit(&mut f, TAG_ROWS, b"US", &2u16.to_le_bytes());
        explicit(&mut f, TAG_COLUMNS, b"US", &2u16.to_le_bytes());
        f.extend_from_slice(&0x7FE0u16.to_le_bytes());
        f.extend_from_slice(&0x0010u16.to_le_bytes());
        f.extend_from_slice(b"OB\0\0");
        f.extend_from_slice(&UNDEFINED_LENGTH.to_le_bytes());
        assert!(parse_dicom(&f).unwrap_err().contains("compressed"));
    }

    #[test]
    fn garbage_is_rejected() {
        assert!(parse_dicom(b"not a dicom file").is_err());
        let mut f = header(EXPLICIT_VR_LITTLE_ENDIAN);
        explicit(&mut f, TAG_ROWS, b"US", &2u16.to_le_bytes());
        f.extend_from_slice(&[0x28, 0x00]);
        assert!(parse_dicom(&f).is_err());
    }
}
