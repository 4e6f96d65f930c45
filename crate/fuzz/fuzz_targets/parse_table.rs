#![no_main]

use coglasso::io::parse_table;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    // detected and fixed delimiters, with and without a header row
    for delimiter in [None, Some(b','), Some(b'\t')] {
        for header in [true, false] {
            if let Ok(t) = parse_table(data, delimiter, header, "fuzz") {
                assert_eq!(t.labels.len(), t.data.ncols());
                assert!(t.data.iter().all(|v| v.is_finite()));
            }
        }
    }
});
