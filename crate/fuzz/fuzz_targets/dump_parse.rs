#![no_main]

use libfuzzer_sys::fuzz_target;
use symabs::abstraction::{parse_dump, write_dump};

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(abs) = parse_dump(text) {
            // whatever parses must survive a round trip unchanged
            let again = parse_dump(&write_dump(&abs)).expect("re-parse of written dump");
            assert_eq!(abs, again);
        }
    }
});
