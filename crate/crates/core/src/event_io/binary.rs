use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};

use crate::error::{Error, ParseError, Result};
use crate::model::{Event, Micros, Polarity, SensorGeometry};

pub const EVENT_MAGIC: &[u8; 8] = b"ESTRTEV1";
pub const EVENT_HEADER_LEN: usize = 32;
pub const EVENT_RECORD_LEN: usize = 16;
const CHECKSUM_OFFSET: usize = 28;
const CSV_HEADER: &str = "t,x,y,p";

/// A decoded event file.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    pub width: u16,
    pub height: u16,
    pub t_origin: Micros,
    pub events: Vec<Event>,
}

// Header layout (little-endian):
//   0..8   magic
//   8..10  width     10..12 height
//   12..20 t_origin  20..28 event_count
//   28..32 CRC-32 over bytes 0..28 and the whole payload
fn encode_header(width: u16, height: u16, t_origin: Micros, count: u64) -> [u8; EVENT_HEADER_LEN] {
    let mut h = [0u8; EVENT_HEADER_LEN];
    h[0..8].copy_from_slice(EVENT_MAGIC);
    h[8..10].copy_from_slice(&width.to_le_bytes());
    h[10..12].copy_from_slice(&height.to_le_bytes());
    h[12..20].copy_from_slice(&t_origin.to_le_bytes());
    h[20..28].copy_from_slice(&count.to_le_bytes());
    h
}

fn encode_record(e: &Event) -> [u8; EVENT_RECORD_LEN] {
    let mut r = [0u8; EVENT_RECORD_LEN];
    r[0..8].copy_from_slice(&e.t.to_le_bytes());
    r[8..10].copy_from_slice(&e.x.to_le_bytes());
    r[10..12].copy_from_slice(&e.y.to_le_bytes());
    r[12] = e.polarity.as_i8() as u8;
    r
}

fn check_writable(events: &[Event], geom: &SensorGeometry) -> Result<()> {
    for (i, w) in events.windows(2).enumerate() {
        if w[1].t < w[0].t {
            return Err(Error::Contract(format!("events not sorted by t at index {}", i + 1)));
        }
    }
    if let Some((i, e)) = events.iter().enumerate().find(|(_, e)| e.x >= geom.width || e.y >= geom.height) {
        return Err(Error::Contract(format!("event {i} at ({}, {}) is outside the sensor", e.x, e.y)));
    }
    Ok(())
}

/// Writes the native container: a 32-byte header then one 16-byte record
/// per event. Returns the number of records written.
pub fn write_events<W: Write>(events: &[Event], sink: W, geom: &SensorGeometry, t_origin: Micros) -> Result<u64> {
    check_writable(events, geom)?;
    let count = events.len() as u64;
    let mut header = encode_header(geom.width, geom.height, t_origin, count);

    let mut hasher = crc32fast::Hasher::new();
    hasher.update(&header[..CHECKSUM_OFFSET]);
    for e in events {
        hasher.update(&encode_record(e));
    }
    header[CHECKSUM_OFFSET..].copy_from_slice(&hasher.finalize().to_le_bytes());

    let mut out = BufWriter::new(sink);
    out.write_all(&header)?;
    for e in events {
        out.write_all(&encode_record(e))?;
    }
    out.flush()?;
    Ok(count)
}

/// Writes the `t,x,y,p` interchange format.
pub fn write_events_csv<W: Write>(events: &[Event], sink: W, geom: &SensorGeometry) -> Result<u64> {
    check_writable(events, geom)?;
    let mut out = BufWriter::new(sink);
    writeln!(out, "{CSV_HEADER}")?;
    for e in events {
        writeln!(out, "{},{},{},{}", e.t, e.x, e.y, e.polarity.as_i8())?;
    }
    out.flush()?;
    Ok(events.len() as u64)
}

/// Fills `buf` completely, returning how many bytes were read before EOF.
fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match r.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

/// Reads either the native container or the CSV interchange format,
/// chosen by the first bytes of `source`. CSV input is bounds-checked
/// against `geom`; native input must declare the same dimensions.
pub fn read_events<R: Read>(source: R, geom: &SensorGeometry) -> Result<EventStream> {
    let mut reader = BufReader::new(source);
    let head = reader.fill_buf()?;
    if head.is_empty() {
        return Err(ParseError::at_byte(0, "empty input").into());
    }
    if head[0] == EVENT_MAGIC[0] {
        read_native(reader, geom)
    } else if head.starts_with(b"t,") {
        read_csv(reader, geom)
    } else {
        Err(ParseError::at_byte(0, "unrecognized header: expected magic ESTRTEV1 or `t,x,y,p`").into())
    }
}

fn read_native<R: Read>(mut reader: R, geom: &SensorGeometry) -> Result<EventStream> {
    let mut header = [0u8; EVENT_HEADER_LEN];
    let got = read_full(&mut reader, &mut header)?;
    if header[..got.min(8)] != EVENT_MAGIC[..got.min(8)] {
        return Err(ParseError::at_byte(0, "bad magic").into());
    }
    if got < EVENT_HEADER_LEN {
        return Err(ParseError::at_byte(got as u64, "truncated header").into());
    }
    let width = u16::from_le_bytes([header[8], header[9]]);
    let height = u16::from_le_bytes([header[10], header[11]]);
    let t_origin = u64::from_le_bytes(header[12..20].try_into().unwrap());
    let count = u64::from_le_bytes(header[20..28].try_into().unwrap());
    let stored_crc = u32::from_le_bytes(header[28..32].try_into().unwrap());
    if width != geom.width || height != geom.height {
        return Err(ParseError::at_byte(
            8,
            format!("sensor {width}x{height} does not match expected {}x{}", geom.width, geom.height),
        )
        .into());
    }

    let mut hasher = crc32fast::Hasher::new();
    hasher.update(&header[..CHECKSUM_OFFSET]);
    let mut events = Vec::with_capacity(count.min(1 << 20) as usize);
    let mut rec = [0u8; EVENT_RECORD_LEN];
    let mut prev_t = 0u64;
    for i in 0..count {
        let base = EVENT_HEADER_LEN as u64 + i * EVENT_RECORD_LEN as u64;
        let n = read_full(&mut reader, &mut rec)?;
        if n < EVENT_RECORD_LEN {
            return Err(ParseError::at_byte(base + n as u64, format!("truncated record {}", i + 1)).into());
        }
        hasher.update(&rec);
        let t = u64::from_le_bytes(rec[0..8].try_into().unwrap());
        let x = u16::from_le_bytes([rec[8], rec[9]]);
        let y = u16::from_le_bytes([rec[10], rec[11]]);
        let record_no = i + 1;
        if t < prev_t {
            return Err(ParseError::at_byte(base, format!("record {record_no}: timestamp decreases")).into());
        }
        if x >= width {
            return Err(ParseError::at_byte(base + 8, format!("record {record_no}: x={x} out of bounds")).into());
        }
        if y >= height {
            return Err(ParseError::at_byte(base + 10, format!("record {record_no}: y={y} out of bounds")).into());
        }
        let polarity = Polarity::from_i8(rec[12] as i8).ok_or_else(|| {
            ParseError::at_byte(base + 12, format!("record {record_no}: invalid polarity {}", rec[12] as i8))
        })?;
        if rec[13..16] != [0, 0, 0] {
            return Err(ParseError::at_byte(base + 13, format!("record {record_no}: nonzero padding")).into());
        }
        prev_t = t;
        events.push(Event { t, x, y, polarity });
    }
    let end = EVENT_HEADER_LEN as u64 + count * EVENT_RECORD_LEN as u64;
    let mut probe = [0u8; 1];
    if read_full(&mut reader, &mut probe)? != 0 {
        return Err(ParseError::at_byte(end, "trailing bytes after declared event_count").into());
    }
    if hasher.finalize() != stored_crc {
        return Err(ParseError::at_byte(CHECKSUM_OFFSET as u64, "checksum mismatch").into());
    }
    Ok(EventStream { width, height, t_origin, events })
}

fn read_csv<R: Read>(reader: R, geom: &SensorGeometry) -> Result<EventStream> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| ParseError::at_line(1, e.to_string()))?.clone();
    let expected = ["t", "x", "y", "p"];
    if headers.len() != 4 || headers.iter().zip(expected).any(|(h, e)| h != e) {
        return Err(ParseError::at_line(1, format!("expected header `{CSV_HEADER}`")).into());
    }
    let mut events = Vec::new();
    let mut prev_t = 0u64;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            ParseError::at_line(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize, name: &str| -> Result<i64> {
            rec.get(i)
                .and_then(|s| s.parse::<i64>().ok())
                .ok_or_else(|| ParseError::at_line(line, format!("field `{name}` is not an integer")).into())
        };
        let t = field(0, "t")?;
        let x = field(1, "x")?;
        let y = field(2, "y")?;
        let p = field(3, "p")?;
        if t < 0 || (t as u64) < prev_t {
            return Err(ParseError::at_line(line, "timestamp negative or decreasing").into());
        }
        if !geom.contains(x, y) {
            return Err(ParseError::at_line(line, format!("({x}, {y}) out of bounds")).into());
        }
        let polarity = i8::try_from(p)
            .ok()
            .and_then(Polarity::from_i8)
            .ok_or_else(|| ParseError::at_line(line, format!("invalid polarity {p}")))?;
        prev_t = t as u64;
        events.push(Event { t: t as u64, x: x as u16, y: y as u16, polarity });
    }
    Ok(EventStream { width: geom.width, height: geom.height, t_origin: 0, events })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::Location;

    fn geom() -> SensorGeometry {
        SensorGeometry::default()
    }

    fn sample() -> Vec<Event> {
        vec![
            Event::new(5, 3, 4, Polarity::Positive),
            Event::new(5, 10, 4, Polarity::Negative),
            Event::new(900, 1279, 719, Polarity::Positive),
        ]
    }

    fn parse_err(bytes: &[u8]) -> ParseError {
        match read_events(bytes, &geom()) {
            Err(Error::Parse(p)) => p,
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_header_only() {
        let mut buf = Vec::new();
        assert_eq!(write_events(&[], &mut buf, &geom(), 0).unwrap(), 0);
        assert_eq!(buf.len(), 32);
        assert!(read_events(&buf[..], &geom()).unwrap().events.is_empty());
    }

    #[test]
    fn single_event_size() {
        let mut buf = Vec::new();
        write_events(&[Event::new(5, 3, 4, Polarity::Positive)], &mut buf, &geom(), 0).unwrap();
        assert_eq!(buf.len(), 32 + 16);
    }

    #[test]
    fn round_trip_native_and_csv() {
        let ev = sample();
        let mut buf = Vec::new();
        write_events(&ev, &mut buf, &geom(), 77).unwrap();
        let back = read_events(&buf[..], &geom()).unwrap();
        assert_eq!(back.events, ev);
        assert_eq!(back.t_origin, 77);

        let mut csv = Vec::new();
        write_events_csv(&ev, &mut csv, &geom()).unwrap();
        assert_eq!(read_events(&csv[..], &geom()).unwrap().events, ev);
    }

    #[test]
    fn out_of_bounds_x_reported_at_record_three() {
        let ev = sample();
        let mut buf = Vec::new();
        write_events(&ev, &mut buf, &geom(), 0).unwrap();
        // x of record 3 -> 1280
        let off = 32 + 2 * 16 + 8;
        buf[off..off + 2].copy_from_slice(&1280u16.to_le_bytes());
        let err = parse_err(&buf);
        assert_eq!(err.location, Location::Byte(off as u64));
        assert!(err.message.contains("record 3"), "{}", err.message);
    }

    #[test]
    fn bad_magic_truncation_and_decreasing_t() {
        let mut buf = Vec::new();
        write_events(&sample(), &mut buf, &geom(), 0).unwrap();

        let mut bad = buf.clone();
        bad[1] = b'X';
        assert_eq!(parse_err(&bad).location, Location::Byte(0));

        let cut = &buf[..buf.len() - 5];
        assert_eq!(parse_err(cut).location, Location::Byte(cut.len() as u64));

        let mut dec = buf.clone();
        dec[32 + 16..32 + 24].copy_from_slice(&1u64.to_le_bytes());
        assert!(parse_err(&dec).message.contains("decreases"));

        let mut trailing = buf.clone();
        trailing.push(0);
        assert!(parse_err(&trailing).message.contains("trailing"));
    }

    #[test]
    fn payload_flip_caught_by_checksum() {
        let mut buf = Vec::new();
        write_events(&sample(), &mut buf, &geom(), 0).unwrap();
        buf[32] ^= 0x01; // t of record 1: 5 -> 4, still sorted
        let err = parse_err(&buf);
        assert_eq!(err.location, Location::Byte(28));
    }

    #[test]
    fn writer_rejects_unsorted_and_out_of_bounds() {
        let mut ev = sample();
        ev.swap(0, 2);
        assert!(matches!(write_events(&ev, Vec::new(), &geom(), 0), Err(Error::Contract(_))));
        let oob = vec![Event::new(0, 1280, 0, Polarity::Positive)];
        assert!(matches!(write_events(&oob, Vec::new(), &geom(), 0), Err(Error::Contract(_))));
    }

    #[test]
    fn csv_errors_have_line_numbers() {
        let text = "t,x,y,p\n0,1,1,1\n5,2,2,0\n";
        let err = parse_err(text.as_bytes());
        assert_eq!(err.location, Location::Line(3));
        let text = "t,x,y,p\n10,1,1,1\n5,2,2,1\n";
        assert_eq!(parse_err(text.as_bytes()).location, Location::Line(3));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_events() -> impl Strategy<Value = Vec<Event>> {
            prop::collection::vec((0u64..1_000_000, 0u16..1280, 0u16..720, any::<bool>()), 0..200).prop_map(|v| {
                let mut ev: Vec<Event> = v
                    .into_iter()
                    .map(|(t, x, y, p)| Event::new(t, x, y, if p { Polarity::Positive } else { Polarity::Negative }))
                    .collect();
                ev.sort();
                ev
            })
        }

        proptest! {
            #[test]
            fn native_round_trip_is_identity(ev in arb_events(), origin in any::<u64>()) {
                let mut buf = Vec::new();
                write_events(&ev, &mut buf, &geom(), origin).unwrap();
                let back = read_events(&buf[..], &geom()).unwrap();
                prop_assert_eq!(&back.events, &ev);
                let mut again = Vec::new();
                write_events(&back.events, &mut again, &geom(), back.t_origin).unwrap();
                prop_assert_eq!(buf, again);
            }

            #[test]
            fn accepted_output_is_sorted(bytes in prop::collection::vec(any::<u8>(), 0..400)) {
                let mut data = Vec::new();
                write_events(&[], &mut data, &geom(), 0).unwrap();
                data.truncate(20);
                data.extend_from_slice(&((bytes.len() / 16) as u64).to_le_bytes());
                data.extend_from_slice(&[0; 4]);
                data.extend_from_slice(&bytes);
                if let Ok(s) = read_events(&data[..], &geom()) {
                    prop_assert!(s.events.windows(2).all(|w| w[0].t <= w[1].t));
                }
            }
        }
    }
}
