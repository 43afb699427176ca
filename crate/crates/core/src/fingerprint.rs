//! Content hashes of fitted artifacts, used by the leakage guard.

use serde::Serialize;
use sha2::{Digest, Sha256};

pub struct Fingerprinter(Sha256);

impl Default for Fingerprinter {
    fn default() -> Self {
        Fingerprinter(Sha256::new())
    }
}

impl Fingerprinter {
    pub fn bytes(&mut self, b: &[u8]) -> &mut Self {
        self.0.update(b);
        self
    }

    pub fn u64(&mut self, v: u64) -> &mut Self {
        self.bytes(&v.to_le_bytes())
    }

    pub fn f64(&mut self, v: f64) -> &mut Self {
        self.u64(v.to_bits())
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, value: &T) -> &mut Self {
        let encoded = serde_json::to_vec(value).expect("artifact serializes to JSON");
        self.u64(encoded.len() as u64).bytes(&encoded)
    }

    pub fn hex(self) -> String {
        self.0.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

pub fn of_json<T: Serialize + ?Sized>(value: &T) -> String {
    let mut f = Fingerprinter::default();
    f.json(value);
    f.hex()
}
