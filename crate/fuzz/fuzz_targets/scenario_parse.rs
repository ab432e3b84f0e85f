#![no_main]

use ergcbf::sim::{Scenario, ScenarioFile};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    let _ = ScenarioFile::parse(text);
    let _ = Scenario::parse(text);
});
