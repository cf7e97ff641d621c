#![no_main]

use libfuzzer_sys::fuzz_target;
use qfusion::QuantizerSpec;

fuzz_target!(|data: &[u8]| {
    let Ok(spec) = serde_json::from_slice::<QuantizerSpec>(data) else { return };
    let back: QuantizerSpec = serde_json::to_string(&spec).unwrap().parse().unwrap();
    assert_eq!(back, spec);
    let t = spec.thresholds();
    assert_eq!(t.len(), spec.levels() - 1);
    for y in [-1e9, -1.0, 0.0, 0.5, 2.0, 1e9, t[0], t[t.len() - 1]] {
        let i = spec.quantize(y);
        assert!((i.get() as usize) <= spec.levels());
    }
});
