#![no_main]

use libfuzzer_sys::fuzz_target;
use qfusion::DesignResult;

fuzz_target!(|data: &[u8]| {
    let Ok(r) = serde_json::from_slice::<DesignResult>(data) else { return };
    let text = serde_json::to_string(&r).unwrap();
    let back: DesignResult = serde_json::from_str(&text).unwrap();
    assert_eq!(back.spec, r.spec);
    assert_eq!(back.are.is_finite(), r.are.is_finite());
});
