#![no_main]

use libfuzzer_sys::fuzz_target;
use mrsi_cs::model::AcquisitionGeometry;
use mrsi_cs::sampling::{build_schedule, SamplerConfig};

fuzz_target!(|data: &[u8]| {
    let Ok(config) = serde_json::from_slice::<SamplerConfig>(data) else {
        return;
    };
    if config.n_points > 1 << 14 || config.gaps.iter().any(|g| g.length > 1 << 14) {
        return;
    }
    let geometry = AcquisitionGeometry::new(vec![8, 8], 8, 16).unwrap();
    if let Ok(schedule) = build_schedule(&config, &geometry) {
        assert_eq!(schedule.n_acquired(), config.n_points);
        schedule
            .validate_against(&geometry)
            .expect("built schedule fits its geometry");
    }
});
