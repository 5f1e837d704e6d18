#![no_main]

use libfuzzer_sys::fuzz_target;
use mrsi_cs::tensor::Tensor;

fuzz_target!(|data: &[u8]| {
    if let Ok(t) = Tensor::decode(data) {
        // Anything that decodes must survive a round trip unchanged.
        let bytes = t.encode();
        let again = Tensor::decode(&bytes).expect("re-decode of encoded tensor");
        assert_eq!(again.encode(), bytes);
        assert_eq!(again.dims(), t.dims());
    }
});
