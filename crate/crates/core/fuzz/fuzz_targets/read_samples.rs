#![no_main]

use libfuzzer_sys::fuzz_target;
use stockout::io::read_samples;
use stockout::model::{ChoiceSpec, ModelSpec};
use stockout::RateModel;

fuzz_target!(|data: &[u8]| {
    let spec = ModelSpec::new(RateModel::homogeneous(), ChoiceSpec::Exogenous { segments: 1 }, 2, 1).unwrap();
    let names = spec.natural_names(&["1".into()], &["a".into(), "b".into()]);
    if let Ok((samples, _)) = read_samples(data, &spec, &names) {
        assert!(samples.merged().all(|d| d.len() == names.len()));
    }
});
