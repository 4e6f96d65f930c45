#![no_main]

use coglasso::io::FitDocument;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(doc) = FitDocument::from_json(data) {
        let fit = doc.to_fit().expect("from_json already validated the document");
        let _ = FitDocument::new(&fit, doc.labels.clone(), doc.provenance.clone());
    }
});
