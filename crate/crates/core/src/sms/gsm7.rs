//! GSM 7-bit default alphabet, its extension table and septet packing.

use super::SmsError;

/// Escape septet that selects the extension table for the next septet.
pub const ESCAPE: u8 = 0x1B;

/// Default alphabet, indexed by septet value. `ESCAPE` maps to a placeholder.
const DEFAULT_TABLE: [char; 128] = [
    '@', '£', '$', '¥', 'è', 'é', 'ù', 'ì', 'ò', 'Ç', '\n', 'Ø', 'ø', '\r', 'Å', 'å', //
    'Δ', '_', 'Φ', 'Γ', 'Λ', 'Ω', 'Π', 'Ψ', 'Σ', 'Θ', 'Ξ', '\u{1b}', 'Æ', 'æ', 'ß', 'É', //
    ' ', '!', '"', '#', '¤', '%', '&', '\'', '(', ')', '*', '+', ',', '-', '.', '/', //
    '0', '1', '2', '3', '4', '5', '6', '7', '8', '9', ':', ';', '<', '=', '>', '?', //
    '¡', 'A', 'B', 'C', 'D', 'E', 'F', 'G', 'H', 'I', 'J', 'K', 'L', 'M', 'N', 'O', //
    'P', 'Q', 'R', 'S', 'T', 'U', 'V', 'W', 'X', 'Y', 'Z', 'Ä', 'Ö', 'Ñ', 'Ü', '§', //
    '¿', 'a', 'b', 'c', 'd', 'e', 'f', 'g', 'h', 'i', 'j', 'k', 'l', 'm', 'n', 'o', //
    'p', 'q', 'r', 's', 't', 'u', 'v', 'w', 'x', 'y', 'z', 'ä', 'ö', 'ñ', 'ü', 'à', //
];

/// Extension table entries as (septet after ESC, char).
const EXTENSION_TABLE: [(u8, char); 10] = [
    (0x0A, '\u{0c}'),
    (0x14, '^'),
    (0x28, '{'),
    (0x29, '}'),
    (0x2F, '\\'),
    (0x3C, '['),
    (0x3D, '~'),
    (0x3E, ']'),
    (0x40, '|'),
    (0x65, '€'),
];

/// Septet code(s) for one character: one for the default table, two for
/// extension characters.
pub fn char_to_septets(c: char) -> Option<([u8; 2], usize)> {
    if c != '\u{1b}' {
        if let Some(pos) = DEFAULT_TABLE.iter().position(|&d| d == c) {
            return Some(([pos as u8, 0], 1));
        }
    }
    EXTENSION_TABLE
        .iter()
        .find(|(_, e)| *e == c)
        .map(|(code, _)| ([ESCAPE, *code], 2))
}

/// Number of septets `c` costs, or `None` if it is not representable.
pub fn septet_cost(c: char) -> Option<usize> {
    char_to_septets(c).map(|(_, n)| n)
}

pub fn is_gsm7(text: &str) -> bool {
    text.chars().all(|c| char_to_septets(c).is_some())
}

/// Maps text to septet codes (not yet packed).
pub fn encode_septets(text: &str) -> Result<Vec<u8>, SmsError> {
    let mut out = Vec::with_capacity(text.len());
    for c in text.chars() {
        let (codes, n) = char_to_septets(c).ok_or(SmsError::UnmappableCharacter(c))?;
        out.extend_from_slice(&codes[..n]);
    }
    Ok(out)
}

/// Maps septet codes back to text. An escape followed by an unknown code
/// falls back to the default-table character; a trailing escape is dropped.
pub fn decode_septets(codes: &[u8]) -> String {
    let mut out = String::with_capacity(codes.len());
    let mut iter = codes.iter().map(|c| c & 0x7F);
    while let Some(code) = iter.next() {
        if code == ESCAPE {
            match iter.next() {
                Some(ext) => {
                    let c = EXTENSION_TABLE
                        .iter()
                        .find(|(k, _)| *k == ext)
                        .map(|(_, c)| *c)
                        .unwrap_or(DEFAULT_TABLE[ext as usize]);
                    out.push(c);
                }
                None => break,
            }
        } else {
            out.push(DEFAULT_TABLE[code as usize]);
        }
    }
    out
}

/// Packed length in octets for `septets` septets preceded by `fill_bits`.
pub fn packed_len(septets: usize, fill_bits: usize) -> usize {
    (septets * 7 + fill_bits).div_ceil(8)
}

/// Packs septet codes LSB-first, optionally preceded by `fill_bits` zero bits
/// (used to align text after a user data header).
pub fn pack_septets(codes: &[u8], fill_bits: usize) -> Vec<u8> {
    let mut out = vec![0u8; packed_len(codes.len(), fill_bits)];
    let mut bit = fill_bits;
    for &code in codes {
        let code = (code & 0x7F) as u16;
        let byte = bit / 8;
        let shift = bit % 8;
        let word = code << shift;
        out[byte] |= word as u8;
        if shift > 1 {
            out[byte + 1] |= (word >> 8) as u8;
        }
        bit += 7;
    }
    out
}

/// Inverse of [`pack_septets`]. The caller guarantees `packed` is long enough.
pub fn unpack_septets(packed: &[u8], septets: usize, fill_bits: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(septets);
    let mut bit = fill_bits;
    for _ in 0..septets {
        let byte = bit / 8;
        let shift = bit % 8;
        let lo = packed.get(byte).copied().unwrap_or(0) as u16;
        let hi = packed.get(byte + 1).copied().unwrap_or(0) as u16;
        out.push((((hi << 8 | lo) >> shift) & 0x7F) as u8);
        bit += 7;
    }
    out
}

/// Packs text into GSM 7-bit octets. Returns the packed bytes and the number of
/// septets (extension characters count twice).
pub fn pack_gsm7(text: &str) -> Result<(Vec<u8>, usize), SmsError> {
    let codes = encode_septets(text)?;
    Ok((pack_septets(&codes, 0), codes.len()))
}

/// Unpacks `septets` septets from `packed`, which must be exactly
/// `ceil(7 * septets / 8)` octets long.
pub fn unpack_gsm7(packed: &[u8], septets: usize) -> Result<String, SmsError> {
    let expected = packed_len(septets, 0);
    if packed.len() != expected {
        return Err(SmsError::LengthMismatch {
            expected,
            actual: packed.len(),
        });
    }
    Ok(decode_septets(&unpack_septets(packed, septets, 0)))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Reference packer: pushes each septet LSB-first into a bit vector and
    /// reads octets back out. Deliberately naive.
    fn oracle_pack(codes: &[u8]) -> Vec<u8> {
        let mut bits = Vec::new();
        for &c in codes {
            for i in 0..7 {
                bits.push((c >> i) & 1);
            }
        }
        while bits.len() % 8 != 0 {
            bits.push(0);
        }
        bits.chunks(8)
            .map(|chunk| chunk.iter().enumerate().map(|(i, b)| b << i).sum())
            .collect()
    }

    #[test]
    fn single_septet_passes_through() {
        assert_eq!(pack_gsm7("A").unwrap(), (vec![0x41], 1));
        assert_eq!(unpack_gsm7(&[0x41], 1).unwrap(), "A");
    }

    #[test]
    fn empty_text() {
        assert_eq!(pack_gsm7("").unwrap(), (vec![], 0));
        assert_eq!(unpack_gsm7(&[], 0).unwrap(), "");
    }

    #[test]
    fn hellohello_frozen_vector() {
        let codes = encode_septets("hellohello").unwrap();
        let expected = oracle_pack(&codes);
        assert_eq!(
            expected,
            [0xE8, 0x32, 0x9B, 0xFD, 0x46, 0x97, 0xD9, 0xEC, 0x37]
        );
        assert_eq!(pack_gsm7("hellohello").unwrap(), (expected, 10));
    }

    #[test]
    fn seven_septets_do_not_decode_trailing_fill_as_at_sign() {
        let (packed, n) = pack_gsm7("ABCDEFG").unwrap();
        assert_eq!(packed, oracle_pack(&encode_septets("ABCDEFG").unwrap()));
        assert_eq!(packed.len(), 7);
        assert_eq!(packed[6] >> 1, 0);
        assert_eq!(unpack_gsm7(&packed, n).unwrap(), "ABCDEFG");
    }

    #[test]
    fn extension_characters_cost_two_septets() {
        let (_, n) = pack_gsm7("€[]").unwrap();
        assert_eq!(n, 6);
        let (packed, n) = pack_gsm7("a€b{}").unwrap();
        assert_eq!(unpack_gsm7(&packed, n).unwrap(), "a€b{}");
    }

    #[test]
    fn unmappable_character_is_rejected() {
        assert_eq!(
            pack_gsm7("π").unwrap_err(),
            SmsError::UnmappableCharacter('π')
        );
    }

    #[test]
    fn length_mismatch_is_rejected() {
        assert!(matches!(
            unpack_gsm7(&[0x41, 0x00], 1),
            Err(SmsError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn fill_bits_shift_the_stream() {
        let codes = encode_septets("hello").unwrap();
        let packed = pack_septets(&codes, 1);
        assert_eq!(unpack_septets(&packed, 5, 1), codes);
    }

    #[test]
    fn matches_oracle_for_all_lengths() {
        let alphabet: Vec<u8> = (0u8..128).filter(|&c| c != ESCAPE).collect();
        for len in 0..=160usize {
            let codes: Vec<u8> = (0..len)
                .map(|i| alphabet[(i * 37 + len) % alphabet.len()])
                .collect();
            assert_eq!(pack_septets(&codes, 0), oracle_pack(&codes), "len {len}");
        }
    }
}
