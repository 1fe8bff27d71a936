//! CSV and 8-bit PGM export of BEV rasters (row `v`, column `u`).

use std::fmt::Write as _;

use crate::voxel::BevExtent;

/// `h` lines of `w` comma-separated values.
pub fn to_csv(values: &[f64], extent: BevExtent) -> String {
    let mut s = String::new();
    for row in values.chunks(extent.w as usize) {
        for (i, v) in row.iter().enumerate() {
            if i > 0 {
                s.push(',');
            }
            let _ = write!(s, "{v}");
        }
        s.push('\n');
    }
    s
}

/// Binary PGM; each value is clamped to `[0, 1]` and scaled by 255.
pub fn to_pgm(values: &[f64], extent: BevExtent) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", extent.w, extent.h).into_bytes();
    out.extend(
        values
            .iter()
            .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layouts() {
        let e = BevExtent::new(3, 2);
        let vals = [0.0, 0.5, 1.0, 2.0, -1.0, 0.25];
        assert_eq!(to_csv(&vals, e), "0,0.5,1\n2,-1,0.25\n");
        let pgm = to_pgm(&vals, e);
        assert!(pgm.starts_with(b"P5\n3 2\n255\n"));
        assert_eq!(&pgm[pgm.len() - 6..], &[0, 128, 255, 255, 0, 64]);
    }
}
