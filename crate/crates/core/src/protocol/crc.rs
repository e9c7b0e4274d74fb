use crate::codec::Message;

/// Width of the CRC tag in bits.
pub const CRC_BITS: u32 = 32;

/// CRC-32 (IEEE 802.3: poly 0x04C11DB7, reflected, init and xor-out
/// 0xFFFFFFFF) of the message packed MSB-first into bytes.
pub fn crc_tag(message: &Message) -> u32 {
    crc32fast::hash(&message.to_bytes())
}
