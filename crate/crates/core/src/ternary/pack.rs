//! 2-bit trit packing: `00` = 0, `01` = +1, `10` = -1, `11` reserved.
//! Four trits per byte, first trit in the low bits.

use super::TernaryError;

pub fn packed_len(n: usize) -> usize {
    n.div_ceil(4)
}

pub fn pack_trits(trits: &[i8]) -> Result<Vec<u8>, TernaryError> {
    let mut out = vec![0u8; packed_len(trits.len())];
    for (i, &t) in trits.iter().enumerate() {
        let code = match t {
            0 => 0b00,
            1 => 0b01,
            -1 => 0b10,
            other => return Err(TernaryError::InvalidTrit(other)),
        };
        out[i / 4] |= code << (2 * (i % 4));
    }
    Ok(out)
}

pub fn unpack_trits(bytes: &[u8], n: usize) -> Result<Vec<i8>, TernaryError> {
    let expected = packed_len(n);
    if bytes.len() != expected {
        return Err(TernaryError::PackedLength { got: bytes.len(), expected });
    }
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let code = (bytes[i / 4] >> (2 * (i % 4))) & 0b11;
        out.push(match code {
            0b00 => 0,
            0b01 => 1,
            0b10 => -1,
            _ => return Err(TernaryError::ReservedCode { byte: i / 4, slot: i % 4 }),
        });
    }
    if n % 4 != 0 && bytes[n / 4] >> (2 * (n % 4)) != 0 {
        return Err(TernaryError::Padding);
    }
    Ok(out)
}
