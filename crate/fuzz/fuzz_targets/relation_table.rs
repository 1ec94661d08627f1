#![no_main]

use libfuzzer_sys::fuzz_target;
use vidscript::reorder::{best_ordering, PairwiseRelationTable};

fuzz_target!(|data: &[u8]| {
    let Ok(line) = std::str::from_utf8(data) else { return };
    if let Ok(table) = PairwiseRelationTable::parse_line(line) {
        if table.n <= 6 {
            let _ = best_ordering(&table);
            let _ = best_ordering(&table.to_two_way());
        }
    }
});
