#![no_main]

use libfuzzer_sys::fuzz_target;
use osp::codec::WireMessage;

fuzz_target!(|data: &[u8]| {
    // Any input must either decode or fail cleanly; on success the message
    // must re-encode to the exact input bytes.
    if let Ok(msg) = WireMessage::decode(data) {
        let bytes = msg.encode().expect("decoded message re-encodes");
        assert_eq!(bytes, data);
    }
});
