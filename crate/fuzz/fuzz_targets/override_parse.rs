#![no_main]

use ergcbf::sim::{parse_override, Scenario, PAPER_2DOF};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let overrides: Vec<_> = text.lines().filter_map(|l| parse_override(l).ok()).collect();
    let _ = Scenario::parse_with_overrides(PAPER_2DOF, &overrides);
});
