use super::store::{LabelSnapshot, LabeledPixel};

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn pixel_hash(image_id: &str, x: u32, y: u32) -> u64 {
    let mut h = FNV_OFFSET;
    let bytes = image_id.bytes().chain([0xff]).chain(x.to_le_bytes()).chain(y.to_le_bytes());
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    // splitmix64 finalizer
    h ^= h >> 30;
    h = h.wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h ^= h >> 27;
    h = h.wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

/// Whether a pixel is held out for validation (about one in ten, fixed per pixel).
pub fn is_validation(image_id: &str, x: u32, y: u32) -> bool {
    pixel_hash(image_id, x, y).is_multiple_of(10)
}

/// `(train, validation)` partition of the labeled pixels.
pub fn build_validation_split(snapshot: &LabelSnapshot) -> (Vec<LabeledPixel>, Vec<LabeledPixel>) {
    snapshot.pixels.iter().cloned().partition(|p| !is_validation(&p.image_id, p.x, p.y))
}
