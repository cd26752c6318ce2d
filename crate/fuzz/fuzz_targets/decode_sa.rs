#![no_main]

use libfuzzer_sys::fuzz_target;
use osp::codec::SaMessage;

fuzz_target!(|data: &[u8]| {
    if let Ok(msg) = SaMessage::decode(data) {
        let bytes = msg.encode().expect("decoded message re-encodes");
        assert_eq!(bytes, data);
    }
});
