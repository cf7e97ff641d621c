#![no_main]

use libfuzzer_sys::fuzz_target;
use qfusion::detector::lmpt_statistic;
use qfusion::{CodeIndex, DetectorTables};

// Input: a JSON table, a NUL byte, then one byte per sensor report.
fuzz_target!(|data: &[u8]| {
    let split = data.iter().position(|&b| b == 0).unwrap_or(data.len());
    let Ok(tables) = serde_json::from_slice::<DetectorTables>(&data[..split]) else { return };
    let reports = data.get(split + 1..).unwrap_or(&[]);
    let received: Vec<CodeIndex> =
        reports.iter().filter_map(|&b| CodeIndex::new(u32::from(b) + 1, 8).ok()).collect();
    let _ = lmpt_statistic(&tables, &received);
});
