#![no_main]
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    afpgnn_fuzz::embeddings_bin(data);
});
