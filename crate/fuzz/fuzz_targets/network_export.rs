#![no_main]

use coglasso::io::{ExportFormat, NetworkExport};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &str| {
    if let Ok(net) = NetworkExport::from_json(data) {
        let _ = net.adjacency();
        for format in [ExportFormat::EdgeList, ExportFormat::GraphMl, ExportFormat::Json] {
            let _ = net.render(format);
        }
    }
});
