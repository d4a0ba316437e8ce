//! Output character set: 27 transcript symbols (a-z plus space) and the CTC
//! blank at index 0, for 28 output units in total.

/// Index of the CTC blank symbol.
pub const BLANK: usize = 0;

/// Index of the space character.
pub const SPACE: usize = 27;

/// Total number of output units including blank.
pub const CHARSET_SIZE: usize = 28;

/// Maps a transcript character to its index (1..=27). Blank is 0 and has no
/// character.
pub fn index_of(c: char) -> Option<usize> {
    match c {
        'a'..='z' => Some(c as usize - 'a' as usize + 1),
        ' ' => Some(SPACE),
        _ => None,
    }
}

/// Maps a non-blank index back to its character.
pub fn char_of(index: usize) -> Option<char> {
    match index {
        1..=26 => Some((b'a' + (index - 1) as u8) as char),
        SPACE => Some(' '),
        _ => None,
    }
}

/// Encodes a transcript into label indices. Characters outside the charset
/// are skipped.
pub fn encode(text: &str) -> Vec<usize> {
    text.chars().filter_map(index_of).collect()
}

/// Decodes label indices into a transcript string, skipping blanks and
/// out-of-range indices.
pub fn decode(labels: &[usize]) -> String {
    labels.iter().filter_map(|&i| char_of(i)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_all_symbols() {
        for i in 1..CHARSET_SIZE {
            let c = char_of(i).unwrap();
            assert_eq!(index_of(c), Some(i));
        }
        assert_eq!(char_of(BLANK), None);
        assert_eq!(char_of(CHARSET_SIZE), None);
    }

    #[test]
    fn encode_decode_sentence() {
        let text = "bin blue at f nine now";
        let labels = encode(text);
        assert_eq!(decode(&labels), text);
        assert!(labels.iter().all(|&l| l != BLANK && l < CHARSET_SIZE));
    }

    #[test]
    fn unknown_chars_skipped() {
        assert_eq!(decode(&encode("a-b?c")), "abc");
    }
}
