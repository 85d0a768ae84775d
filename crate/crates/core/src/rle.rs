//! Run-length text encoding of binary masks.
//!
//! Row-major scan, alternating run lengths of 0-pixels and 1-pixels,
//! always starting with a (possibly zero-length) run of 0s, joined by
//! commas. A 2x3 mask `0 1 1 / 1 0 0` encodes as `"1,3,2"`. Runs sum to
//! `height * width`; a mask with no pixels encodes as `"0"`.

use crate::error::{Error, Result};
use crate::types::BinaryMask;

pub fn encode(mask: &BinaryMask) -> String {
    let mut runs = Vec::new();
    let mut current = false;
    let mut len = 0usize;
    for &v in mask.data() {
        if v == current {
            len += 1;
        } else {
            runs.push(len);
            current = v;
            len = 1;
        }
    }
    runs.push(len);
    runs.iter()
        .map(usize::to_string)
        .collect::<Vec<_>>()
        .join(",")
}

pub fn decode(text: &str, height: usize, width: usize) -> Result<BinaryMask> {
    let mut data = Vec::with_capacity(height * width);
    let mut value = false;
    for part in text.split(',') {
        let n: usize = part
            .trim()
            .parse()
            .map_err(|_| Error::InvalidArgument(format!("bad run length `{part}`")))?;
        if data.len() + n > height * width {
            return Err(Error::InvalidArgument(format!(
                "runs exceed {height}x{width} pixels"
            )));
        }
        data.extend(std::iter::repeat(value).take(n));
        value = !value;
    }
    if data.len() != height * width {
        return Err(Error::InvalidArgument(format!(
            "runs cover {} of {} pixels",
            data.len(),
            height * width
        )));
    }
    BinaryMask::from_vec(height, width, data)
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    #[test]
    fn documented_examples() {
        let m = BinaryMask::from_ascii(".##\n#..");
        assert_eq!(encode(&m), "1,3,2");
        assert_eq!(encode(&BinaryMask::filled(2, 2)), "0,4");
        assert_eq!(encode(&BinaryMask::new(2, 2)), "4");
        assert_eq!(encode(&BinaryMask::new(0, 0)), "0");
        assert!(decode("1,3", 2, 3).is_err());
        assert!(decode("1,3,9", 2, 3).is_err());
        assert!(decode("a", 2, 3).is_err());
    }

    proptest! {
        #[test]
        fn round_trip(h in 0..8usize, w in 1..8usize, bits in any::<u64>()) {
            let m = BinaryMask::from_fn(h, w, |r, c| (bits >> ((r * w + c) % 64)) & 1 == 1);
            prop_assert_eq!(decode(&encode(&m), h, w).unwrap(), m);
        }
    }
}
