//! Network PDU with the priority class carried inside the former SEQ field.
//!
//! Wire layout (all multi-octet fields big-endian):
//!
//! | Offset | Size | Field                                         |
//! | ------ | ---- | --------------------------------------------- |
//! | 0      | 1    | TTL (low 7 bits, top bit reserved, always 0)   |
//! | 1      | 3    | priority (octet 1) followed by SEQ (octets 2-3)|
//! | 4      | 2    | SRC, unicast element address                  |
//! | 6      | 2    | DST, unicast or group address                 |
//! | 8      | 0-11 | payload                                       |
//!
//! IVI/NID/CTL and the NetMIC of the full mesh network PDU are not carried.
use std::fmt;

use thiserror::Error;

/// Fixed header length preceding the payload.
pub const HEADER_LEN: usize = 8;
/// Largest payload of an unsegmented data packet.
pub const MAX_PAYLOAD: usize = 11;
pub const MAX_TTL: u8 = 127;
/// Largest value of the packed 24-bit SEQ+priority field.
pub const SEQ_FIELD_MAX: u32 = 0x00FF_FFFF;

/// Priority value meaning the sender attached no explicit priority.
pub const NO_PRIORITY: u8 = 0;

/// 16-bit mesh address.
#[derive(Copy, Clone, Hash, Debug, Ord, PartialOrd, Eq, PartialEq)]
pub struct Address(pub u16);

impl Address {
    pub const UNASSIGNED: Address = Address(0);
    pub const GROUP_START: u16 = 0xC000;

    pub fn is_unicast(self) -> bool {
        (1..=0x7FFF).contains(&self.0)
    }

    pub fn is_group(self) -> bool {
        self.0 >= Self::GROUP_START
    }

    /// Valid as a destination: unicast or group.
    pub fn is_destination(self) -> bool {
        self.is_unicast() || self.is_group()
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{:04X}", self.0)
    }
}

impl From<u16> for Address {
    fn from(v: u16) -> Self {
        Address(v)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PduError {
    #[error("packed SEQ field 0x{0:X} exceeds 24 bits")]
    FieldOutOfRange(u32),
    #[error("invalid {field}: {value}")]
    InvalidField { field: &'static str, value: String },
    #[error("truncated PDU: {0} octets, need at least {HEADER_LEN}")]
    Truncated(usize),
    #[error("payload of {0} octets exceeds the {MAX_PAYLOAD}-octet unsegmented limit")]
    PayloadTooLong(usize),
}

/// Packs a 16-bit sequence number and an 8-bit priority into the 24-bit SEQ
/// field. Priority takes the most significant octet.
pub fn pack_seq_priority(seq: u16, priority: u8) -> u32 {
    (u32::from(priority) << 16) | u32::from(seq)
}

pub fn unpack_seq_priority(field: u32) -> Result<(u16, u8), PduError> {
    if field > SEQ_FIELD_MAX {
        return Err(PduError::FieldOutOfRange(field));
    }
    Ok(((field & 0xFFFF) as u16, (field >> 16) as u8))
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct NetworkPdu {
    pub src: Address,
    pub dst: Address,
    pub ttl: u8,
    pub seq: u16,
    pub priority: u8,
    pub payload: Vec<u8>,
}

impl NetworkPdu {
    pub fn validate(&self) -> Result<(), PduError> {
        if !self.src.is_unicast() {
            return Err(PduError::InvalidField {
                field: "src",
                value: self.src.to_string(),
            });
        }
        if !self.dst.is_destination() {
            return Err(PduError::InvalidField {
                field: "dst",
                value: self.dst.to_string(),
            });
        }
        if self.ttl > MAX_TTL {
            return Err(PduError::InvalidField {
                field: "ttl",
                value: self.ttl.to_string(),
            });
        }
        if self.payload.len() > MAX_PAYLOAD {
            return Err(PduError::PayloadTooLong(self.payload.len()));
        }
        Ok(())
    }

    /// Copy of this PDU as a relay forwards it.
    pub fn relayed(&self) -> NetworkPdu {
        NetworkPdu {
            ttl: self.ttl.saturating_sub(1),
            ..self.clone()
        }
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.payload.len()
    }
}

pub fn encode_network_pdu(pdu: &NetworkPdu) -> Result<Vec<u8>, PduError> {
    pdu.validate()?;
    let mut out = Vec::with_capacity(pdu.encoded_len());
    out.push(pdu.ttl & 0x7F);
    let field = pack_seq_priority(pdu.seq, pdu.priority);
    out.extend_from_slice(&field.to_be_bytes()[1..]);
    out.extend_from_slice(&pdu.src.0.to_be_bytes());
    out.extend_from_slice(&pdu.dst.0.to_be_bytes());
    out.extend_from_slice(&pdu.payload);
    Ok(out)
}

pub fn decode_network_pdu(bytes: &[u8]) -> Result<NetworkPdu, PduError> {
    if bytes.len() < HEADER_LEN {
        return Err(PduError::Truncated(bytes.len()));
    }
    let payload = &bytes[HEADER_LEN..];
    if payload.len() > MAX_PAYLOAD {
        return Err(PduError::PayloadTooLong(payload.len()));
    }
    if bytes[0] & 0x80 != 0 {
        return Err(PduError::InvalidField {
            field: "ttl",
            value: format!("reserved bit set in 0x{:02X}", bytes[0]),
        });
    }
    let field = u32::from_be_bytes([0, bytes[1], bytes[2], bytes[3]]);
    let (seq, priority) = unpack_seq_priority(field)?;
    let pdu = NetworkPdu {
        ttl: bytes[0],
        seq,
        priority,
        src: Address(u16::from_be_bytes([bytes[4], bytes[5]])),
        dst: Address(u16::from_be_bytes([bytes[6], bytes[7]])),
        payload: payload.to_vec(),
    };
    pdu.validate()?;
    Ok(pdu)
}
