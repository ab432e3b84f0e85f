#![no_main]

use ergcbf::sim::TrajectoryLog;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(log) = TrajectoryLog::read_csv(data) else { return };
    // Whatever parses must survive a write/read cycle unchanged.
    let text = log.to_csv_string();
    let back = TrajectoryLog::read_csv(text.as_bytes()).expect("written log parses");
    assert_eq!(back.to_csv_string(), text);
});
