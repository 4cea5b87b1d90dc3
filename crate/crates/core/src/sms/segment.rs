use super::gsm7;
use super::pdu::{Alphabet, ConcatHeader, MAX_GSM7_SEPTETS, MAX_UCS2_UNITS};

/// Text capacity of one segment once the 6-octet concatenation header is in.
pub const GSM7_SEGMENT_SEPTETS: usize = 153;
pub const UCS2_SEGMENT_UNITS: usize = 67;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub text: String,
    pub udh: Option<ConcatHeader>,
}

/// Splits `text` into SMS-sized parts. Text that fits a single message yields
/// one segment without a header; otherwise every part carries a concatenation
/// header with `reference`. Extension characters and surrogate pairs are never
/// split across parts. Gsm7 falls back to UCS-2 sizing for unmappable text.
pub fn segment(text: &str, alphabet: Alphabet, reference: u8) -> Vec<Segment> {
    let cost = |c: char| -> usize {
        match alphabet {
            Alphabet::Gsm7 => gsm7::septet_cost(c).unwrap_or(1),
            _ => c.len_utf16(),
        }
    };
    let (single, per_part) = match alphabet {
        Alphabet::Gsm7 => (MAX_GSM7_SEPTETS, GSM7_SEGMENT_SEPTETS),
        _ => (MAX_UCS2_UNITS, UCS2_SEGMENT_UNITS),
    };
    let total: usize = text.chars().map(cost).sum();
    if total <= single {
        return vec![Segment {
            text: text.to_owned(),
            udh: None,
        }];
    }

    let mut parts: Vec<String> = Vec::new();
    let mut current = String::new();
    let mut used = 0;
    for c in text.chars() {
        let n = cost(c);
        if used + n > per_part {
            parts.push(std::mem::take(&mut current));
            used = 0;
        }
        current.push(c);
        used += n;
    }
    parts.push(current);

    // more than 255 parts cannot be numbered; the tail is folded into the last
    let count = parts.len().min(255);
    if parts.len() > 255 {
        let tail: String = parts.drain(255..).collect();
        parts[254].push_str(&tail);
    }
    parts
        .into_iter()
        .enumerate()
        .map(|(i, text)| Segment {
            text,
            udh: Some(ConcatHeader {
                reference,
                total: count as u8,
                seq: (i + 1) as u8,
            }),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn septets(s: &str) -> usize {
        gsm7::encode_septets(s).unwrap().len()
    }

    #[test]
    fn fits_in_one() {
        let segs = segment(&"a".repeat(160), Alphabet::Gsm7, 1);
        assert_eq!(segs.len(), 1);
        assert!(segs[0].udh.is_none());
    }

    #[test]
    fn one_over_splits_153_plus_8() {
        let text = "b".repeat(161);
        let segs = segment(&text, Alphabet::Gsm7, 9);
        assert_eq!(segs.len(), 2);
        assert_eq!(septets(&segs[0].text), 153);
        assert_eq!(septets(&segs[1].text), 8);
        assert_eq!(
            segs[0].udh,
            Some(ConcatHeader {
                reference: 9,
                total: 2,
                seq: 1
            })
        );
        assert_eq!(
            segs[1].udh,
            Some(ConcatHeader {
                reference: 9,
                total: 2,
                seq: 2
            })
        );
    }

    #[test]
    fn empty_text_is_one_empty_segment() {
        assert_eq!(
            segment("", Alphabet::Gsm7, 0),
            vec![Segment {
                text: String::new(),
                udh: None
            }]
        );
    }

    #[test]
    fn escape_pairs_stay_together() {
        let text = format!("{}€", "a".repeat(152));
        let text = format!("{text}{}", "z".repeat(10));
        let segs = segment(&text, Alphabet::Gsm7, 0);
        assert_eq!(segs[0].text, "a".repeat(152));
        assert!(segs[1].text.starts_with('€'));
    }

    #[test]
    fn ucs2_limits() {
        assert_eq!(segment(&"π".repeat(70), Alphabet::Ucs2, 0).len(), 1);
        let segs = segment(&"π".repeat(71), Alphabet::Ucs2, 0);
        assert_eq!(segs.len(), 2);
        assert_eq!(segs[0].text.chars().count(), 67);
    }
}
