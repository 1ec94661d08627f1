#![no_main]

use libfuzzer_sys::fuzz_target;
use vidscript::tensor_io::{matrix_to_bytes, read_matrix, read_matrix_auto, Dtype};

fuzz_target!(|data: &[u8]| {
    if let Ok(m) = read_matrix_auto(data) {
        let bytes = matrix_to_bytes(&m, Dtype::F64);
        assert_eq!(read_matrix(&bytes).expect("written containers read back"), m);
    }
});
