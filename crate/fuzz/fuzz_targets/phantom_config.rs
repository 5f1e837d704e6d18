#![no_main]

use libfuzzer_sys::fuzz_target;
use mrsi_cs::phantom::{make_base_spectra, make_phantom, PhantomConfig};

fuzz_target!(|data: &[u8]| {
    let Ok(config) = serde_json::from_slice::<PhantomConfig>(data) else {
        return;
    };
    if config.validate().is_err() {
        return;
    }
    // Skip configs that would allocate more than a few MB.
    let voxels = config
        .geometry
        .spatial_dims
        .iter()
        .try_fold(1usize, |a, &d| a.checked_mul(d));
    let spectral = config
        .geometry
        .spectral_evolution_points
        .checked_mul(config.geometry.readout_points);
    match (voxels, spectral) {
        (Some(v), Some(s))
            if v.saturating_mul(config.frames)
                .saturating_mul(config.substances.len())
                <= 1 << 18
                && s.saturating_mul(config.substances.len()) <= 1 << 16 => {}
        _ => return,
    }
    if let Ok(x) = make_phantom(&config) {
        assert_eq!(x.n_frames(), config.frames);
    }
    let _ = make_base_spectra(&config);
});
