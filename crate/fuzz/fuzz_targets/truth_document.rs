#![no_main]

use coglasso::io::TruthDocument;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(doc) = TruthDocument::from_json(data) {
        let _ = doc.adjacency();
    }
});
