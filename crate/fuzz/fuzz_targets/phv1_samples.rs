#![no_main]

use attractor_lab::store::{decode_phase_vector, decode_samples, encode_samples};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(samples) = decode_samples(data) {
        // accepted streams are canonical
        assert_eq!(encode_samples(&samples), data);
        if samples.len() == 1 {
            assert_eq!(decode_phase_vector(data).unwrap(), samples[0]);
        }
    }
    if let Ok(v) = decode_phase_vector(data) {
        assert_eq!(encode_samples(std::slice::from_ref(&v)), data);
    }
});
