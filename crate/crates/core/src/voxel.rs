//! Occupancy grids over the normalized object frame and the binvox format.
//!
//! The grid covers `[-0.5, 0.5]^3` with `resolution` cells per axis. A cell is
//! occupied when its center lies inside some primitive. Grid axes are the
//! object axes (`z` up). Storage follows binvox order: `y` varies fastest,
//! then `z`, then `x`, i.e. `index = x * d^2 + z * d + y`.

use std::fmt::Write as _;

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::model::PrimitiveObject;

pub const DEFAULT_RESOLUTION: usize = 32;
const BOUNDS_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGrid {
    resolution: usize,
    bits: Vec<bool>,
    translate: [f64; 3],
    scale: f64,
}

impl VoxelGrid {
    pub fn empty(resolution: usize) -> Result<Self> {
        if resolution == 0 || !resolution.is_power_of_two() || resolution > 1024 {
            return Err(Error::domain(format!(
                "grid resolution {resolution} must be a power of two in 1..=1024"
            )));
        }
        Ok(VoxelGrid {
            resolution,
            bits: vec![false; resolution.pow(3)],
            translate: [-0.5; 3],
            scale: 1.0,
        })
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn cell_size(&self) -> f64 {
        self.scale / self.resolution as f64
    }

    pub fn translate(&self) -> [f64; 3] {
        self.translate
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn index(&self, x: usize, y: usize, z: usize) -> usize {
        let d = self.resolution;
        x * d * d + z * d + y
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.bits[self.index(x, y, z)]
    }

    pub fn set(&mut self, x: usize, y: usize, z: usize, value: bool) {
        let i = self.index(x, y, z);
        self.bits[i] = value;
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn occupied_count(&self) -> usize {
        self.bits.iter().filter(|b| **b).count()
    }

    /// Center of cell `(x, y, z)` in object coordinates.
    pub fn cell_center(&self, x: usize, y: usize, z: usize) -> Vector3<f64> {
        let h = self.cell_size();
        Vector3::new(
            self.translate[0] + (x as f64 + 0.5) * h,
            self.translate[1] + (y as f64 + 0.5) * h,
            self.translate[2] + (z as f64 + 0.5) * h,
        )
    }

    /// Cell coordinate along one axis of an object-frame value.
    pub fn cell_coordinate(&self, axis: usize, value: f64) -> f64 {
        (value - self.translate[axis]) / self.cell_size()
    }

    /// Iterate occupied cells as `(x, y, z)`.
    pub fn occupied(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let d = self.resolution;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, b)| **b)
            .map(move |(i, _)| (i / (d * d), i % d, (i / d) % d))
    }
}

/// Voxelize an object with the cell-center rule.
pub fn voxelize(object: &PrimitiveObject, resolution: usize) -> Result<VoxelGrid> {
    let mut grid = VoxelGrid::empty(resolution)?;
    let (lo, hi) = object.bounds();
    if lo.min() < -0.5 - BOUNDS_TOLERANCE || hi.max() > 0.5 + BOUNDS_TOLERANCE {
        return Err(Error::domain(format!(
            "object bounds [{lo:?}, {hi:?}] exceed the unit cube"
        )));
    }
    let d = resolution as f64;
    // Cells whose centers can fall in [lo, hi].
    let cell_range = |lo: f64, hi: f64| {
        let a = ((lo + 0.5) * d - 0.5).ceil().max(0.0) as usize;
        let b = ((hi + 0.5) * d - 0.5).floor().min(d - 1.0);
        if b < 0.0 {
            (1, 0)
        } else {
            (a, b as usize)
        }
    };
    for prim in object.primitives() {
        let (plo, phi) = prim.bounds();
        let (x0, x1) = cell_range(plo.x, phi.x);
        let (y0, y1) = cell_range(plo.y, phi.y);
        let (z0, z1) = cell_range(plo.z, phi.z);
        for x in x0..=x1 {
            for z in z0..=z1 {
                for y in y0..=y1 {
                    if prim.contains(&grid.cell_center(x, y, z)) {
                        grid.set(x, y, z, true);
                    }
                }
            }
        }
    }
    Ok(grid)
}

/// Serialize as binvox with maximal runs.
pub fn write_binvox(grid: &VoxelGrid) -> Vec<u8> {
    let d = grid.resolution;
    let mut header = String::new();
    writeln!(header, "#binvox 1").unwrap();
    writeln!(header, "dim {d} {d} {d}").unwrap();
    let [tx, ty, tz] = grid.translate;
    writeln!(header, "translate {tx} {ty} {tz}").unwrap();
    writeln!(header, "scale {}", grid.scale).unwrap();
    writeln!(header, "data").unwrap();
    let mut out = header.into_bytes();
    let mut iter = grid.bits.iter().peekable();
    while let Some(&value) = iter.next() {
        let mut count: u8 = 1;
        while count < u8::MAX && iter.peek() == Some(&&value) {
            iter.next();
            count += 1;
        }
        out.push(value as u8);
        out.push(count);
    }
    out
}

fn parse_err(offset: usize, reason: impl Into<String>) -> Error {
    Error::Parse {
        offset,
        reason: reason.into(),
    }
}

/// Parse a binvox stream; any legal run-length encoding is accepted.
pub fn read_binvox(bytes: &[u8]) -> Result<VoxelGrid> {
    let mut pos = 0;
    let next_line = |pos: &mut usize| -> Result<(usize, String)> {
        let start = *pos;
        let end = bytes[start..]
            .iter()
            .position(|b| *b == b'\n')
            .map(|i| start + i)
            .ok_or_else(|| parse_err(start, "unterminated header line"))?;
        *pos = end + 1;
        let line = std::str::from_utf8(&bytes[start..end])
            .map_err(|_| parse_err(start, "header is not valid UTF-8"))?;
        Ok((start, line.trim_end_matches('\r').to_string()))
    };

    let (offset, magic) = next_line(&mut pos)?;
    if !magic.starts_with("#binvox") {
        return Err(parse_err(offset, format!("bad magic {magic:?}")));
    }
    let mut dim: Option<[usize; 3]> = None;
    let mut translate = [0.0; 3];
    let mut scale = 1.0;
    loop {
        let (offset, line) = next_line(&mut pos)?;
        let mut fields = line.split_whitespace();
        match fields.next() {
            Some("data") => break,
            Some("dim") => {
                let v: Vec<usize> = fields
                    .map(|f| f.parse().map_err(|_| parse_err(offset, format!("bad dim {f:?}"))))
                    .collect::<Result<_>>()?;
                if v.len() != 3 {
                    return Err(parse_err(offset, "dim needs three values"));
                }
                dim = Some([v[0], v[1], v[2]]);
            }
            Some("translate") => {
                let v: Vec<f64> = fields
                    .map(|f| {
                        f.parse()
                            .map_err(|_| parse_err(offset, format!("bad translate {f:?}")))
                    })
                    .collect::<Result<_>>()?;
                if v.len() != 3 {
                    return Err(parse_err(offset, "translate needs three values"));
                }
                translate = [v[0], v[1], v[2]];
            }
            Some("scale") => {
                let f = fields.next().unwrap_or("");
                scale = f
                    .parse()
                    .map_err(|_| parse_err(offset, format!("bad scale {f:?}")))?;
            }
            Some(other) => return Err(parse_err(offset, format!("unknown header keyword {other:?}"))),
            None => return Err(parse_err(offset, "empty header line")),
        }
    }
    let [dx, dy, dz] = dim.ok_or_else(|| parse_err(pos, "missing dim line"))?;
    if dx != dy || dy != dz {
        return Err(parse_err(pos, format!("non-cubic dim {dx} {dy} {dz}")));
    }
    let mut grid = VoxelGrid::empty(dx).map_err(|e| parse_err(pos, e.to_string()))?;
    grid.translate = translate;
    grid.scale = scale;

    let total = grid.bits.len();
    let mut filled = 0;
    while filled < total {
        if pos + 1 >= bytes.len() {
            return Err(parse_err(
                pos,
                format!("truncated run-length data: {filled} of {total} voxels"),
            ));
        }
        let (value, count) = (bytes[pos], bytes[pos + 1] as usize);
        if value > 1 {
            return Err(parse_err(pos, format!("voxel value {value} is not 0 or 1")));
        }
        if filled + count > total {
            return Err(parse_err(pos, format!("run overflows grid of {total} voxels")));
        }
        grid.bits[filled..filled + count].fill(value == 1);
        filled += count;
        pos += 2;
    }
    if pos != bytes.len() {
        return Err(parse_err(pos, "trailing bytes after voxel data"));
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Primitive;
    use nalgebra::UnitQuaternion;
    use proptest::prelude::*;

    fn object(prims: Vec<Primitive>) -> PrimitiveObject {
        PrimitiveObject::new(prims).unwrap()
    }

    #[test]
    fn full_cube_fills_grid() {
        let grid = voxelize(&object(vec![Primitive::cuboid([1.0; 3], [0.0; 3]).unwrap()]), 32).unwrap();
        assert_eq!(grid.occupied_count(), 32768);
    }

    #[test]
    fn half_cube_fills_half() {
        let half = Primitive::cuboid([1.0, 1.0, 0.5], [0.0, 0.0, -0.25]).unwrap();
        let grid = voxelize(&object(vec![half]), 32).unwrap();
        assert_eq!(grid.occupied_count(), 16384);
        assert!(grid.get(5, 7, 15));
        assert!(!grid.get(5, 7, 16));
    }

    #[test]
    fn rotated_full_cube_about_z_by_90_degrees_is_unchanged() {
        let p = Primitive::new(
            Vector3::repeat(1.0),
            Vector3::zeros(),
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), std::f64::consts::FRAC_PI_2),
            None,
        )
        .unwrap();
        let grid = voxelize(&object(vec![p]), 32).unwrap();
        assert!(grid.occupied_count() >= 32 * 32 * 31);
    }

    #[test]
    fn outside_unit_cube_is_rejected() {
        let p = Primitive::cuboid([0.5, 0.5, 0.5], [0.4, 0.0, 0.0]).unwrap();
        assert!(matches!(voxelize(&object(vec![p]), 32), Err(Error::Domain(_))));
    }

    #[test]
    fn empty_grid_rle() {
        let bytes = write_binvox(&VoxelGrid::empty(32).unwrap());
        let header = b"#binvox 1\ndim 32 32 32\ntranslate -0.5 -0.5 -0.5\nscale 1\ndata\n";
        assert!(bytes.starts_with(header));
        let body = &bytes[header.len()..];
        let runs: Vec<(u8, u8)> = body.chunks(2).map(|c| (c[0], c[1])).collect();
        assert!(runs.iter().all(|(v, _)| *v == 0));
        assert_eq!(runs.iter().map(|(_, c)| *c as usize).sum::<usize>(), 32768);
        assert_eq!(runs.len(), 129);
        assert!(runs[..128].iter().all(|(_, c)| *c == 255));
    }

    #[test]
    fn single_cell_index_order() {
        let mut grid = VoxelGrid::empty(32).unwrap();
        // (x, z, y) = (0, 0, 1) is index 1.
        grid.set(0, 1, 0, true);
        assert_eq!(grid.index(0, 1, 0), 1);
        let bytes = write_binvox(&grid);
        let start = bytes.windows(5).position(|w| w == b"data\n").unwrap() + 5;
        assert_eq!(&bytes[start..start + 6], &[0, 1, 1, 1, 0, 255]);
        assert_eq!(read_binvox(&bytes).unwrap(), grid);
    }

    #[test]
    fn reader_accepts_non_maximal_runs() {
        let mut bytes = b"#binvox 1\ndim 8 8 8\ntranslate -0.5 -0.5 -0.5\nscale 1\ndata\n".to_vec();
        for _ in 0..512 {
            bytes.extend_from_slice(&[1, 1]);
        }
        let grid = read_binvox(&bytes).unwrap();
        assert_eq!(grid.occupied_count(), 512);
        assert!(write_binvox(&grid).len() < bytes.len());
    }

    #[test]
    fn malformed_inputs_report_offsets() {
        let good = write_binvox(&VoxelGrid::empty(8).unwrap());
        let truncated = &good[..good.len() - 1];
        match read_binvox(truncated) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, good.len() - 2),
            other => panic!("{other:?}"),
        }
        assert!(matches!(read_binvox(b"#vox\n"), Err(Error::Parse { offset: 0, .. })));
        let bad_dim = b"#binvox 1\ndim 8 8 4\ndata\n";
        assert!(read_binvox(bad_dim).is_err());
        let overflow = b"#binvox 1\ndim 1 1 1\ndata\n\x00\x02";
        assert!(read_binvox(overflow).is_err());
    }

    proptest! {
        #[test]
        fn binvox_round_trip(seed in any::<u64>(), density in 0.0f64..1.0) {
            let mut grid = VoxelGrid::empty(16).unwrap();
            let mut s = seed;
            for i in 0..grid.bits.len() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                grid.bits[i] = ((s >> 11) as f64 / (1u64 << 53) as f64) < density;
            }
            let bytes = write_binvox(&grid);
            let back = read_binvox(&bytes).unwrap();
            prop_assert_eq!(&back, &grid);
            prop_assert_eq!(write_binvox(&back), bytes);
        }

        #[test]
        fn adding_a_primitive_never_clears_cells(
            a in (0.05f64..0.4, 0.05f64..0.4, 0.05f64..0.4, -0.2f64..0.2, -0.2f64..0.2, -0.2f64..0.2),
            b in (0.05f64..0.4, 0.05f64..0.4, 0.05f64..0.4, -0.2f64..0.2, -0.2f64..0.2, -0.2f64..0.2),
        ) {
            let pa = Primitive::cuboid([a.0, a.1, a.2], [a.3, a.4, a.5]).unwrap();
            let pb = Primitive::cuboid([b.0, b.1, b.2], [b.3, b.4, b.5]).unwrap();
            let one = voxelize(&object(vec![pa.clone()]), 32).unwrap();
            let two = voxelize(&object(vec![pa, pb]), 32).unwrap();
            for (x, y) in one.bits().iter().zip(two.bits()) {
                prop_assert!(!*x || *y);
            }
        }
    }
}
