#![no_main]

use libfuzzer_sys::fuzz_target;
use qfusion::ExperimentConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let Ok(cfg) = text.parse::<ExperimentConfig>() else { return };
    // Anything accepted must survive a roundtrip and keep its hash.
    let again: ExperimentConfig = serde_json::to_string(&cfg).unwrap().parse().unwrap();
    assert_eq!(cfg.hash(), again.hash());
    let _ = cfg.system.base().unwrap();
    assert!(!cfg.detector_labels().is_empty());
});
