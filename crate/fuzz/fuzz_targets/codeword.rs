#![no_main]

use libfuzzer_sys::fuzz_target;
use qfusion::quantizer::{codeword_of, index_of};
use qfusion::Codeword;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(word) = text.parse::<Codeword>() else { return };
    assert_eq!(word.to_string(), text.trim());
    assert_eq!(codeword_of(index_of(word), word.len()), word);
});
