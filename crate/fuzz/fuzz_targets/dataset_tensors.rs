#![no_main]

use libfuzzer_sys::fuzz_target;
use mrsi_cs::model::{
    BaseSpectraSet, DftSign, Frame, SamplePoint, SamplingSchedule, SignalSet, SubstanceDistribution,
};
use mrsi_cs::tensor::Tensor;

fuzz_target!(|data: &[u8]| {
    let Ok(t) = Tensor::decode(data) else { return };

    if let Ok(x) = SubstanceDistribution::from_tensor(t.clone()) {
        let _ = x.to_tensor().encode();
    }
    if let Ok(b) = BaseSpectraSet::from_tensor(t.clone(), None, DftSign::Inverse) {
        let _ = b.to_tensor();
    }

    // Signals are only meaningful against a schedule; use a small fixed one.
    let schedule = SamplingSchedule::new(
        4.0,
        vec![
            Frame::Acquired(vec![SamplePoint::new(1, vec![1, 1])]),
            Frame::Gap,
            Frame::Acquired(vec![SamplePoint::new(2, vec![2, 1])]),
        ],
    )
    .unwrap();
    if let Ok(s) = SignalSet::from_tensor(t, &schedule, 4) {
        let back = s.to_tensor(&schedule, 4).expect("signals re-encode");
        let again = SignalSet::from_tensor(back, &schedule, 4).expect("signals round trip");
        assert_eq!(again.frames().len(), s.frames().len());
    }
});
