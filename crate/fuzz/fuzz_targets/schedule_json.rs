#![no_main]

use libfuzzer_sys::fuzz_target;
use mrsi_cs::model::SamplingSchedule;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(s) = SamplingSchedule::from_json(text) {
        let json = s.to_json().expect("schedule serializes");
        let again = SamplingSchedule::from_json(&json).expect("schedule round trip");
        assert_eq!(again, s);
    }
});
