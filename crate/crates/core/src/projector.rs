//! Discrete parallel-beam ray transform (Joseph's method) and its adjoint.
//!
//! A beam whose direction is closer to the image's y axis is sampled once per
//! pixel row, at the point where it crosses the row's center line; the image
//! is interpolated linearly between the two neighbouring pixel centers of
//! that row (edge-clamped inside the square, zero outside) and the samples
//! are weighted by the path length per row, `h / |cos φ|`. Beams closer to
//! the x axis are handled the same way column by column. [`back_project`]
//! applies the exact transpose of that sum, so the adjoint identity holds to
//! rounding error. [`back_project_linear`] is the pixel-driven smearing used
//! by filtered back-projection.

use ndarray::Array2;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{ImageGrid, ScanGeometry};
use crate::image::{Image, ImageUnit, Sinogram, SinogramUnit};

/// How the beams of one angle cross the image lines (rows or columns).
///
/// On line `j` the beam through detector `k` sits at the fractional pixel
/// index `offset - j·slope + k·step` along the line.
#[derive(Debug, Clone, Copy)]
struct LineWalk {
    /// Lines are image columns rather than rows.
    by_columns: bool,
    offset: f64,
    slope: f64,
    step: f64,
    weight: f64,
}

impl LineWalk {
    fn new(grid: &ImageGrid, geom: &ScanGeometry, phi: f64) -> Self {
        let (sin, cos) = phi.sin_cos();
        let by_columns = sin.abs() > cos.abs();
        // (alpha, beta): beam equation x·cos + y·sin = s solved for the cross coordinate
        let (alpha, beta) = if by_columns { (sin, cos) } else { (cos, sin) };
        let h = grid.pixel_pitch();
        let e = grid.extent();
        let s0 = geom.detector_positions()[0];
        let q0 = -e + 0.5 * h;
        // cross = (s - q_j·beta) / alpha, index = (cross + e) / h - 1/2
        Self {
            by_columns,
            offset: (s0 - q0 * beta) / (alpha * h) + e / h - 0.5,
            slope: beta / alpha,
            step: geom.detector_pitch() / (alpha * h),
            weight: h / alpha.abs(),
        }
    }

    /// Interpolation base and fraction at index `u`, `None` outside the square.
    #[inline(always)]
    fn locate(u: f64, n: usize) -> Option<(usize, f64)> {
        let last = (n - 1) as f64;
        if !(u >= -0.5 && u <= last + 0.5) {
            return None;
        }
        let uc = u.clamp(0.0, last);
        let c = (uc as usize).min(n.saturating_sub(2));
        Some((c, uc - c as f64))
    }

    #[inline(always)]
    fn position(&self, line: usize, k: usize) -> f64 {
        self.offset - line as f64 * self.slope + k as f64 * self.step
    }

    /// Adds the weighted samples of `line` to every detector of `out`.
    #[inline]
    fn gather(&self, line: usize, values: &[f64], out: &mut [f64]) {
        let n = values.len();
        if n == 1 {
            for (k, o) in out.iter_mut().enumerate() {
                if Self::locate(self.position(line, k), 1).is_some() {
                    *o += self.weight * values[0];
                }
            }
            return;
        }
        for (k, o) in out.iter_mut().enumerate() {
            if let Some((c, f)) = Self::locate(self.position(line, k), n) {
                *o += self.weight * ((1.0 - f) * values[c] + f * values[c + 1]);
            }
        }
    }

    /// Transpose of [`LineWalk::gather`]: spreads detector values onto `line`.
    #[inline]
    fn scatter(&self, line: usize, data: &[f64], values: &mut [f64]) {
        let n = values.len();
        for (k, &y) in data.iter().enumerate() {
            if y == 0.0 {
                continue;
            }
            if let Some((c, f)) = Self::locate(self.position(line, k), n) {
                let a = self.weight * y;
                if n == 1 {
                    values[0] += a;
                } else {
                    values[c] += a * (1.0 - f);
                    values[c + 1] += a * f;
                }
            }
        }
    }
}

fn check_square(grid: &ImageGrid) -> Result<()> {
    if grid.width() != grid.height() {
        return Err(Error::Config(format!("projector needs a square grid, got {:?}", grid.shape())));
    }
    Ok(())
}

/// Line integrals of `image` along every beam of `geom`.
pub fn forward_project(image: &Image, geom: &ScanGeometry) -> Result<Sinogram> {
    if image.unit() == ImageUnit::Hu {
        return Err(Error::Contract("forward projection expects attenuation, not HU".into()));
    }
    let grid = image.grid();
    check_square(grid)?;
    let n = grid.width();
    let rows = image.values().as_standard_layout();
    let rows = rows.as_slice().expect("standard layout");
    let columns = image.values().t().as_standard_layout().into_owned();
    let columns = columns.as_slice().expect("standard layout");
    let (na, nd) = geom.shape();
    let mut out = vec![0.0; na * nd];
    out.par_chunks_mut(nd).zip(geom.angles().par_iter()).for_each(|(row, &phi)| {
        let walk = LineWalk::new(grid, geom, phi);
        let lines = if walk.by_columns { columns } else { rows };
        for (j, line) in lines.chunks_exact(n).enumerate() {
            walk.gather(j, line, row);
        }
    });
    let values = Array2::from_shape_vec((na, nd), out).expect("shape");
    Sinogram::new(geom.clone(), values, SinogramUnit::LineIntegral)
}

/// Exact transpose of [`forward_project`] onto `grid`.
///
/// Parallel over image rows (for row-wise angles) and columns (for
/// column-wise angles); each line accumulates its angles in a fixed order,
/// so the result does not depend on the thread count.
pub fn back_project(sino: &Sinogram, geom: &ScanGeometry, grid: &ImageGrid) -> Result<Image> {
    check_sinogram(sino, geom)?;
    check_square(grid)?;
    let n = grid.width();
    let (_, nd) = geom.shape();
    let data = sino.values().as_standard_layout();
    let data = data.as_slice().expect("standard layout");
    let walks: Vec<LineWalk> = geom.angles().iter().map(|&phi| LineWalk::new(grid, geom, phi)).collect();
    let spread = |by_columns: bool| {
        let mut acc = vec![0.0; n * n];
        acc.par_chunks_mut(n).enumerate().for_each(|(j, line)| {
            for (i, walk) in walks.iter().enumerate() {
                if walk.by_columns == by_columns {
                    walk.scatter(j, &data[i * nd..(i + 1) * nd], line);
                }
            }
        });
        Array2::from_shape_vec((n, n), acc).expect("shape")
    };
    let from_rows = spread(false);
    let from_columns = spread(true);
    let values = from_rows + from_columns.t();
    Image::new(*grid, values, ImageUnit::Dimensionless)
}

/// Pixel-driven back-projection: every pixel accumulates, over all angles,
/// the sinogram row linearly interpolated at `s = p·ω(φ)`. Beams off the
/// detector contribute zero. No angular weight is applied.
pub fn back_project_linear(sino: &Sinogram, geom: &ScanGeometry, grid: &ImageGrid) -> Result<Image> {
    check_sinogram(sino, geom)?;
    let (na, nd) = geom.shape();
    let data = sino.values().as_standard_layout();
    let data = data.as_slice().expect("standard layout");
    let trig: Vec<(f64, f64)> = geom.angles().iter().map(|phi| phi.sin_cos()).collect();
    let inv_pitch = 1.0 / geom.detector_pitch();
    let center = (nd as f64 - 1.0) / 2.0;
    let width = grid.width();
    let mut out = vec![0.0; width * grid.height()];
    out.par_chunks_mut(width).enumerate().for_each(|(row, line)| {
        for (col, cell) in line.iter_mut().enumerate() {
            let [x, y] = grid.pixel_center(row, col);
            let mut acc = 0.0;
            for (i, &(sin, cos)) in trig.iter().enumerate() {
                let u = (x * cos + y * sin) * inv_pitch + center;
                let k = u.floor();
                if k < -1.0 || k >= nd as f64 {
                    continue;
                }
                let f = u - k;
                let k = k as isize;
                let base = i * nd;
                if k >= 0 {
                    acc += (1.0 - f) * data[base + k as usize];
                }
                if k + 1 < nd as isize {
                    acc += f * data[base + (k + 1) as usize];
                }
            }
            *cell = acc;
        }
    });
    debug_assert_eq!(na, trig.len());
    let values = Array2::from_shape_vec(grid.shape(), out).expect("shape");
    Image::new(*grid, values, ImageUnit::Dimensionless)
}

fn check_sinogram(sino: &Sinogram, geom: &ScanGeometry) -> Result<()> {
    if sino.values().dim() != geom.shape() {
        return Err(Error::Config(format!(
            "sinogram shape {:?} does not match geometry {:?}",
            sino.values().dim(),
            geom.shape()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{omega, ScanGeometry};
    use crate::rng::SliceRng;

    fn small_setup() -> (ImageGrid, ScanGeometry) {
        let grid = ImageGrid::square(48, 0.13).unwrap();
        let geom = ScanGeometry::covering(0.13, 40, 69).unwrap();
        (grid, geom)
    }

    fn random_image(grid: ImageGrid, rng: &mut SliceRng) -> Image {
        let v = Array2::from_shape_fn(grid.shape(), |_| rng.uniform() - 0.5);
        Image::new(grid, v, ImageUnit::Dimensionless).unwrap()
    }

    fn random_sinogram(geom: &ScanGeometry, rng: &mut SliceRng) -> Sinogram {
        let v = Array2::from_shape_fn(geom.shape(), |_| rng.uniform() - 0.5);
        Sinogram::new(geom.clone(), v, SinogramUnit::LineIntegral).unwrap()
    }

    #[test]
    fn zero_in_zero_out() {
        let (grid, geom) = small_setup();
        let sino = forward_project(&Image::zeros(grid, ImageUnit::MuPerM), &geom).unwrap();
        assert!(sino.values().iter().all(|&v| v == 0.0));
        let img = back_project(&Sinogram::zeros(geom.clone(), SinogramUnit::LineIntegral), &geom, &grid).unwrap();
        assert!(img.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_image_gives_chord_lengths() {
        let grid = ImageGrid::square(32, 1.0).unwrap();
        let geom = ScanGeometry::covering(1.0, 8, 33).unwrap();
        let img = Image::from_fn(grid, ImageUnit::Dimensionless, |_, _| 1.0);
        let sino = forward_project(&img, &geom).unwrap();
        // at φ = π/16 (first midpoint angle) the central beam crosses the square on a chord 2/cos φ
        let phi = geom.angles()[0];
        let expected = 2.0 / phi.cos();
        assert!((sino.values()[[0, 16]] - expected).abs() < 1e-12);
    }

    #[test]
    fn hu_images_are_rejected() {
        let (grid, geom) = small_setup();
        assert!(forward_project(&Image::zeros(grid, ImageUnit::Hu), &geom).is_err());
    }

    #[test]
    fn adjoint_identity_holds_to_rounding() {
        let (grid, geom) = small_setup();
        let mut rng = SliceRng::from_seed_u64(11);
        for _ in 0..3 {
            let x = random_image(grid, &mut rng);
            let y = random_sinogram(&geom, &mut rng);
            let ax = forward_project(&x, &geom).unwrap();
            let aty = back_project(&y, &geom, &grid).unwrap();
            let lhs = (ax.values() * y.values()).sum();
            let rhs = (x.values() * aty.values()).sum();
            let scale = ax.values().mapv(|v| v * v).sum().sqrt() * y.values().mapv(|v| v * v).sum().sqrt();
            assert!((lhs - rhs).abs() / scale < 1e-12, "{lhs} vs {rhs}");
        }
    }

    #[test]
    fn linearity() {
        let (grid, geom) = small_setup();
        let mut rng = SliceRng::from_seed_u64(5);
        let x = random_image(grid, &mut rng);
        let z = random_image(grid, &mut rng);
        let combo = Image::new(grid, x.values() * 2.5 - z.values() * 0.75, ImageUnit::Dimensionless).unwrap();
        let lhs = forward_project(&combo, &geom).unwrap();
        let rhs = forward_project(&x, &geom).unwrap().values() * 2.5 - forward_project(&z, &geom).unwrap().values() * 0.75;
        let num = (lhs.values() - &rhs).mapv(|v| v * v).sum().sqrt();
        let den = rhs.mapv(|v| v * v).sum().sqrt();
        assert!(num / den < 1e-10);
    }

    #[test]
    fn beams_off_the_square_are_zero() {
        let grid = ImageGrid::square(16, 1.0).unwrap();
        // detector twice as wide as the diagonal: outer beams miss the square
        let geom = ScanGeometry::parallel(12, 41, 2.0 * std::f64::consts::SQRT_2).unwrap();
        let img = Image::from_fn(grid, ImageUnit::Dimensionless, |_, _| 1.0);
        let sino = forward_project(&img, &geom).unwrap();
        for (k, &s) in geom.detector_positions().iter().enumerate() {
            if s.abs() > std::f64::consts::SQRT_2 {
                assert!(sino.values().column(k).iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn impulse_back_projects_onto_a_strip() {
        let (grid, geom) = small_setup();
        let (ai, dk) = (7, 40);
        let mut v = Array2::zeros(geom.shape());
        v[[ai, dk]] = 1.0;
        let sino = Sinogram::new(geom.clone(), v, SinogramUnit::LineIntegral).unwrap();
        let img = back_project(&sino, &geom, &grid).unwrap();
        let w = omega(geom.angles()[ai]);
        let s = geom.detector_positions()[dk];
        let h = grid.pixel_pitch();
        let mut hits = 0;
        for ((r, c), &val) in img.values().indexed_iter() {
            let [x, y] = grid.pixel_center(r, c);
            let dist = (x * w[0] + y * w[1] - s).abs();
            if val != 0.0 {
                hits += 1;
                assert!(dist <= h + 1e-12, "pixel off strip at distance {dist}");
            }
        }
        assert!(hits >= grid.width());
    }

    #[test]
    fn linear_back_projection_of_constant_rows() {
        let grid = ImageGrid::square(16, 1.0).unwrap();
        let geom = ScanGeometry::covering(1.0, 10, 31).unwrap();
        let sino = Sinogram::new(geom.clone(), Array2::from_elem(geom.shape(), 1.0), SinogramUnit::LineIntegral).unwrap();
        let img = back_project_linear(&sino, &geom, &grid).unwrap();
        // every pixel center projects inside the detector, so it sums one per angle
        assert!(img.values().iter().all(|&v| (v - 10.0).abs() < 1e-12));
    }

    #[test]
    fn shape_mismatch_is_a_config_error() {
        let (grid, geom) = small_setup();
        let other = ScanGeometry::covering(0.13, 41, 69).unwrap();
        let sino = Sinogram::zeros(other, SinogramUnit::LineIntegral);
        assert!(matches!(back_project(&sino, &geom, &grid), Err(Error::Config(_))));
        assert!(matches!(back_project_linear(&sino, &geom, &grid), Err(Error::Config(_))));
    }
}
