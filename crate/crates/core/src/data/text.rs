use super::DataError;

/// Token alphabet; a symbol's index is its position here.
pub const ALPHABET: &str = "abcdefghijklmnopqrstuvwxyz '";

/// Lowercases `text` and maps each character to its [`ALPHABET`] index.
pub fn tokenize(text: &str) -> Result<Vec<usize>, DataError> {
    if text.is_empty() {
        return Err(DataError::Invalid("cannot tokenize empty text".into()));
    }
    text.chars()
        .flat_map(char::to_lowercase)
        .map(|c| match c {
            'a'..='z' => Ok(c as usize - 'a' as usize),
            ' ' => Ok(26),
            '\'' => Ok(27),
            other => Err(DataError::Tokenize(other)),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn table_lookup() {
        assert_eq!(tokenize("Hey").unwrap(), vec![7, 4, 24]);
        assert_eq!(tokenize("a").unwrap(), vec![0]);
        assert_eq!(tokenize("don't stop").unwrap().len(), 10);
        for (i, c) in ALPHABET.chars().enumerate() {
            assert_eq!(tokenize(&c.to_string()).unwrap(), vec![i]);
        }
    }

    #[test]
    fn rejects_unknown_characters() {
        assert!(matches!(tokenize("ok#1"), Err(DataError::Tokenize('#'))));
        assert!(tokenize("").is_err());
    }

    proptest! {
        #[test]
        fn case_insensitive(s in "[a-zA-Z' ]{1,20}") {
            prop_assert_eq!(tokenize(&s).unwrap(), tokenize(&s.to_lowercase()).unwrap());
        }
    }
}
