//! Wire framing and message codec shared by the two-party protocols and the
//! server-aided submission path.
//!
//! Frame layout: 4-byte big-endian payload length, 1-byte message tag,
//! payload. Group elements travel in fixed-length canonical encodings; the
//! element length is carried per batch so both group instantiations share
//! one codec.

use std::io::{Read, Write};
use std::sync::mpsc::{channel, Receiver, Sender};

use super::PsiError;

pub const TAG_HELLO: u8 = 1;
pub const TAG_BLINDED_BATCH: u8 = 2;
pub const TAG_RESPONSE_BATCH: u8 = 3;
pub const TAG_RECORD_BATCH: u8 = 4;
pub const TAG_ABORT: u8 = 5;
pub const TAG_SUBMISSION: u8 = 6;
pub const TAG_BUFFER_DELIVERY: u8 = 7;

pub const PROTOCOL_PSI_CA: u8 = 1;
pub const PROTOCOL_PSI_DT: u8 = 2;

/// Abort reason codes.
pub const ABORT_UNEXPECTED: u8 = 1;
pub const ABORT_MALFORMED: u8 = 2;
pub const ABORT_ENCODING: u8 = 3;

/// Frames larger than this are rejected before allocation.
const MAX_FRAME: usize = 1 << 30;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    Hello { set_size: u32, protocol: u8, group: u8 },
    /// Client-blinded group elements, in input order.
    BlindedBatch { elements: Vec<Vec<u8>> },
    /// Server response: re-blinded elements plus (for PSI-CA) the server's
    /// own masked-element tags.
    ResponseBatch { elements: Vec<Vec<u8>>, tags: Vec<[u8; 32]> },
    /// Keyed records: 16-byte lookup tag and an AEAD ciphertext each.
    RecordBatch { records: Vec<([u8; 16], Vec<u8>)> },
    Abort { reason: u8 },
    /// Server-aided submission: org id, then (label, ciphertext) pairs.
    Submission { org: String, entries: Vec<([u8; 16], Vec<u8>)> },
    /// Server-aided delivery: peer org id, then (own-label index,
    /// peer ciphertext) pairs.
    BufferDelivery { peer: String, entries: Vec<(u32, Vec<u8>)> },
}

impl Message {
    pub fn tag(&self) -> u8 {
        match self {
            Message::Hello { .. } => TAG_HELLO,
            Message::BlindedBatch { .. } => TAG_BLINDED_BATCH,
            Message::ResponseBatch { .. } => TAG_RESPONSE_BATCH,
            Message::RecordBatch { .. } => TAG_RECORD_BATCH,
            Message::Abort { .. } => TAG_ABORT,
            Message::Submission { .. } => TAG_SUBMISSION,
            Message::BufferDelivery { .. } => TAG_BUFFER_DELIVERY,
        }
    }

    pub fn name(&self) -> &'static str {
        tag_name(self.tag())
    }
}

pub fn tag_name(tag: u8) -> &'static str {
    match tag {
        TAG_HELLO => "HELLO",
        TAG_BLINDED_BATCH => "BLINDED_BATCH",
        TAG_RESPONSE_BATCH => "RESPONSE_BATCH",
        TAG_RECORD_BATCH => "RECORD_BATCH",
        TAG_ABORT => "ABORT",
        TAG_SUBMISSION => "SUBMISSION",
        TAG_BUFFER_DELIVERY => "BUFFER_DELIVERY",
        _ => "UNKNOWN",
    }
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_be_bytes());
}

fn put_elements(out: &mut Vec<u8>, elements: &[Vec<u8>]) {
    put_u32(out, elements.len() as u32);
    let elem_len = elements.first().map(|e| e.len()).unwrap_or(0);
    put_u32(out, elem_len as u32);
    for e in elements {
        debug_assert_eq!(e.len(), elem_len, "elements must be fixed-length");
        out.extend_from_slice(e);
    }
}

fn encode_payload(msg: &Message) -> Vec<u8> {
    let mut out = Vec::new();
    match msg {
        Message::Hello { set_size, protocol, group } => {
            put_u32(&mut out, *set_size);
            out.push(*protocol);
            out.push(*group);
        }
        Message::BlindedBatch { elements } => put_elements(&mut out, elements),
        Message::ResponseBatch { elements, tags } => {
            put_elements(&mut out, elements);
            put_u32(&mut out, tags.len() as u32);
            for t in tags {
                out.extend_from_slice(t);
            }
        }
        Message::RecordBatch { records } => {
            put_u32(&mut out, records.len() as u32);
            for (tag, ct) in records {
                out.extend_from_slice(tag);
                put_u32(&mut out, ct.len() as u32);
                out.extend_from_slice(ct);
            }
        }
        Message::Abort { reason } => out.push(*reason),
        Message::Submission { org, entries } => {
            put_u32(&mut out, org.len() as u32);
            out.extend_from_slice(org.as_bytes());
            put_u32(&mut out, entries.len() as u32);
            for (label, ct) in entries {
                out.extend_from_slice(label);
                put_u32(&mut out, ct.len() as u32);
                out.extend_from_slice(ct);
            }
        }
        Message::BufferDelivery { peer, entries } => {
            put_u32(&mut out, peer.len() as u32);
            out.extend_from_slice(peer.as_bytes());
            put_u32(&mut out, entries.len() as u32);
            for (index, ct) in entries {
                put_u32(&mut out, *index);
                put_u32(&mut out, ct.len() as u32);
                out.extend_from_slice(ct);
            }
        }
    }
    out
}

/// Encode to a full frame: length, tag, payload.
pub fn encode_frame(msg: &Message) -> Vec<u8> {
    let payload = encode_payload(msg);
    let mut frame = Vec::with_capacity(5 + payload.len());
    put_u32(&mut frame, payload.len() as u32);
    frame.push(msg.tag());
    frame.extend_from_slice(&payload);
    frame
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], PsiError> {
        if self.pos + n > self.bytes.len() {
            return Err(PsiError::Malformed("payload truncated"));
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn u32(&mut self) -> Result<u32, PsiError> {
        Ok(u32::from_be_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u8(&mut self) -> Result<u8, PsiError> {
        Ok(self.take(1)?[0])
    }

    fn bounded_count(&mut self, unit: usize) -> Result<usize, PsiError> {
        let count = self.u32()? as usize;
        if count.saturating_mul(unit.max(1)) > self.bytes.len() {
            return Err(PsiError::Malformed("count exceeds payload"));
        }
        Ok(count)
    }

    fn elements(&mut self) -> Result<Vec<Vec<u8>>, PsiError> {
        let count = self.u32()? as usize;
        let elem_len = self.u32()? as usize;
        if count > 0 && elem_len == 0 {
            return Err(PsiError::Malformed("zero-length elements"));
        }
        if count.saturating_mul(elem_len) > self.bytes.len() {
            return Err(PsiError::Malformed("element batch exceeds payload"));
        }
        (0..count).map(|_| Ok(self.take(elem_len)?.to_vec())).collect()
    }

    fn finish(&self) -> Result<(), PsiError> {
        if self.pos == self.bytes.len() {
            Ok(())
        } else {
            Err(PsiError::Malformed("trailing bytes in payload"))
        }
    }
}

/// Decode one payload against its tag.
pub fn decode_payload(tag: u8, payload: &[u8]) -> Result<Message, PsiError> {
    let mut cur = Cursor { bytes: payload, pos: 0 };
    let msg = match tag {
        TAG_HELLO => Message::Hello {
            set_size: cur.u32()?,
            protocol: cur.u8()?,
            group: cur.u8()?,
        },
        TAG_BLINDED_BATCH => Message::BlindedBatch { elements: cur.elements()? },
        TAG_RESPONSE_BATCH => {
            let elements = cur.elements()?;
            let count = cur.bounded_count(32)?;
            let tags = (0..count)
                .map(|_| Ok(<[u8; 32]>::try_from(cur.take(32)?).unwrap()))
                .collect::<Result<Vec<_>, PsiError>>()?;
            Message::ResponseBatch { elements, tags }
        }
        TAG_RECORD_BATCH => {
            let count = cur.bounded_count(16)?;
            let records = (0..count)
                .map(|_| {
                    let tag = <[u8; 16]>::try_from(cur.take(16)?).unwrap();
                    let len = cur.u32()? as usize;
                    Ok((tag, cur.take(len)?.to_vec()))
                })
                .collect::<Result<Vec<_>, PsiError>>()?;
            Message::RecordBatch { records }
        }
        TAG_ABORT => Message::Abort { reason: cur.u8()? },
        TAG_SUBMISSION => {
            let org_len = cur.u32()? as usize;
            let org = String::from_utf8(cur.take(org_len)?.to_vec())
                .map_err(|_| PsiError::Malformed("org id is not utf-8"))?;
            let count = cur.bounded_count(16)?;
            let entries = (0..count)
                .map(|_| {
                    let label = <[u8; 16]>::try_from(cur.take(16)?).unwrap();
                    let len = cur.u32()? as usize;
                    Ok((label, cur.take(len)?.to_vec()))
                })
                .collect::<Result<Vec<_>, PsiError>>()?;
            Message::Submission { org, entries }
        }
        TAG_BUFFER_DELIVERY => {
            let peer_len = cur.u32()? as usize;
            let peer = String::from_utf8(cur.take(peer_len)?.to_vec())
                .map_err(|_| PsiError::Malformed("org id is not utf-8"))?;
            let count = cur.bounded_count(8)?;
            let entries = (0..count)
                .map(|_| {
                    let index = cur.u32()?;
                    let len = cur.u32()? as usize;
                    Ok((index, cur.take(len)?.to_vec()))
                })
                .collect::<Result<Vec<_>, PsiError>>()?;
            Message::BufferDelivery { peer, entries }
        }
        _ => return Err(PsiError::Malformed("unknown message tag")),
    };
    cur.finish()?;
    Ok(msg)
}

/// Decode a whole frame (as produced by [`encode_frame`]).
pub fn decode_frame(frame: &[u8]) -> Result<Message, PsiError> {
    if frame.len() < 5 {
        return Err(PsiError::Malformed("frame too short"));
    }
    let len = u32::from_be_bytes(frame[..4].try_into().unwrap()) as usize;
    if frame.len() != 5 + len {
        return Err(PsiError::Malformed("frame length mismatch"));
    }
    decode_payload(frame[4], &frame[5..])
}

/// A message transport with byte accounting.
pub trait Channel {
    fn send(&mut self, msg: &Message) -> Result<(), PsiError>;
    fn recv(&mut self) -> Result<Message, PsiError>;
    fn bytes_sent(&self) -> u64;
    fn bytes_received(&self) -> u64;
}

/// Framed transport over any `Read + Write` stream (e.g. a TCP socket).
pub struct StreamChannel<S> {
    stream: S,
    sent: u64,
    received: u64,
}

impl<S: Read + Write> StreamChannel<S> {
    pub fn new(stream: S) -> Self {
        StreamChannel { stream, sent: 0, received: 0 }
    }
}

impl<S: Read + Write> Channel for StreamChannel<S> {
    fn send(&mut self, msg: &Message) -> Result<(), PsiError> {
        let frame = encode_frame(msg);
        self.stream.write_all(&frame)?;
        self.stream.flush()?;
        self.sent += frame.len() as u64;
        Ok(())
    }

    fn recv(&mut self) -> Result<Message, PsiError> {
        let mut header = [0u8; 5];
        self.stream.read_exact(&mut header)?;
        let len = u32::from_be_bytes(header[..4].try_into().unwrap()) as usize;
        if len > MAX_FRAME {
            return Err(PsiError::Malformed("frame exceeds size limit"));
        }
        let mut payload = vec![0u8; len];
        self.stream.read_exact(&mut payload)?;
        self.received += 5 + len as u64;
        let msg = decode_payload(header[4], &payload)?;
        if let Message::Abort { reason } = msg {
            return Err(PsiError::Abort(reason));
        }
        Ok(msg)
    }

    fn bytes_sent(&self) -> u64 {
        self.sent
    }

    fn bytes_received(&self) -> u64 {
        self.received
    }
}

/// In-process transport: messages are encoded to frames (so byte counts and
/// the codec match the wire exactly) and passed over mpsc queues.
pub struct PairedChannel {
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
    sent: u64,
    received: u64,
}

/// Two connected in-process endpoints.
pub fn paired() -> (PairedChannel, PairedChannel) {
    let (tx_a, rx_b) = channel();
    let (tx_b, rx_a) = channel();
    (
        PairedChannel { tx: tx_a, rx: rx_a, sent: 0, received: 0 },
        PairedChannel { tx: tx_b, rx: rx_b, sent: 0, received: 0 },
    )
}

impl Channel for PairedChannel {
    fn send(&mut self, msg: &Message) -> Result<(), PsiError> {
        let frame = encode_frame(msg);
        self.sent += frame.len() as u64;
        self.tx.send(frame).map_err(|_| PsiError::ChannelClosed)
    }

    fn recv(&mut self) -> Result<Message, PsiError> {
        let frame = self.rx.recv().map_err(|_| PsiError::ChannelClosed)?;
        self.received += frame.len() as u64;
        let msg = decode_frame(&frame)?;
        if let Message::Abort { reason } = msg {
            return Err(PsiError::Abort(reason));
        }
        Ok(msg)
    }

    fn bytes_sent(&self) -> u64 {
        self.sent
    }

    fn bytes_received(&self) -> u64 {
        self.received
    }
}

/// Best-effort abort notification before bailing out of a session.
pub fn send_abort<C: Channel>(channel: &mut C, reason: u8) {
    let _ = channel.send(&Message::Abort { reason });
}
