//! Statistical shape and appearance models: PCA construction with variance
//! retention, project-out inverse-compositional fitting, sub-model
//! decomposition, and per-resolution feature extraction.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{Error, Result};
use crate::geometry::{
    align_similarity, procrustes_align, triangulate, warp_to_reference, ReferenceFrame, Shape,
    SimilarityTransform, TextureVector,
};
use crate::imaging::{degrade, Image, Resolution};

// ---------------------------------------------------------------------------
// PCA
// ---------------------------------------------------------------------------

/// A PCA basis: data mean, orthonormal modes as matrix columns, and the
/// per-mode variances in descending order.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct PcaModel {
    pub mean: DVector<f64>,
    pub modes: DMatrix<f64>,
    pub eigenvalues: Vec<f64>,
    /// Trace of the sample covariance (the variance total the retention
    /// fraction refers to).
    pub total_variance: f64,
}

impl PcaModel {
    pub fn n_modes(&self) -> usize {
        self.modes.ncols()
    }

    /// Projects a sample onto the modes: `U^T (x - mean)`.
    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        self.modes.tr_mul(&(x - &self.mean))
    }

    /// Reconstructs a sample from parameters: `mean + U p`.
    pub fn reconstruct(&self, p: &DVector<f64>) -> DVector<f64> {
        &self.mean + &self.modes * p
    }
}

/// PCA by eigen-decomposition of the Gram matrix (samples are always far
/// fewer than texture dimensions here). Keeps the smallest mode count whose
/// cumulative eigenvalue fraction reaches `retain`, never fewer than one.
///
/// Mode signs follow the largest-magnitude-component-positive convention so
/// results do not depend on the eigensolver.
pub fn pca(data: &[DVector<f64>], retain: f64) -> Result<PcaModel> {
    let n = data.len();
    if n < 2 {
        return Err(Error::Model(format!("PCA needs at least 2 samples, got {n}")));
    }
    if !(retain > 0.0 && retain <= 1.0) {
        return Err(Error::Model(format!("retain fraction {retain} outside (0, 1]")));
    }
    let dim = data[0].len();
    if data.iter().any(|d| d.len() != dim) {
        return Err(Error::Model("inconsistent sample dimensions".into()));
    }
    let mut mean = DVector::zeros(dim);
    for d in data {
        mean += d;
    }
    mean /= n as f64;
    let centered: Vec<DVector<f64>> = data.iter().map(|d| d - &mean).collect();
    let denom = (n - 1) as f64;
    let total_variance: f64 = centered.iter().map(|c| c.norm_squared()).sum::<f64>() / denom;
    if total_variance <= 1e-20 {
        return Err(Error::NoVariance);
    }
    let mut gram = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = centered[i].dot(&centered[j]) / denom;
            gram[(i, j)] = v;
            gram[(j, i)] = v;
        }
    }
    let eig = gram.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        eig.eigenvalues[b]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    let max_eig = eig.eigenvalues[order[0]];
    let mut eigenvalues: Vec<f64> = Vec::new();
    let mut cols: Vec<DVector<f64>> = Vec::new();
    for &idx in &order {
        let lam = eig.eigenvalues[idx];
        if lam <= max_eig * 1e-10 || lam <= 0.0 {
            break;
        }
        let mut u = DVector::zeros(dim);
        for (i, c) in centered.iter().enumerate() {
            u.axpy(eig.eigenvectors[(i, idx)], c, 1.0);
        }
        let norm = u.norm();
        if norm <= 0.0 {
            break;
        }
        u /= norm;
        let mut best = 0;
        for (i, v) in u.iter().enumerate() {
            if v.abs() > u[best].abs() {
                best = i;
            }
        }
        if u[best] < 0.0 {
            u.neg_mut();
        }
        eigenvalues.push(lam);
        cols.push(u);
    }
    // retention rule
    let mut k = 1;
    let mut cum = eigenvalues[0];
    while k < eigenvalues.len() && cum / total_variance < retain {
        cum += eigenvalues[k];
        k += 1;
    }
    eigenvalues.truncate(k);
    cols.truncate(k);
    let modes = DMatrix::from_columns(&cols);
    Ok(PcaModel {
        mean,
        modes,
        eigenvalues,
        total_variance,
    })
}

// ---------------------------------------------------------------------------
// Shape and appearance models
// ---------------------------------------------------------------------------

/// PCA of Procrustes-aligned landmark shapes.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ShapeModel {
    pub pca: PcaModel,
    pub retained_fraction: f64,
}

impl ShapeModel {
    /// The mean shape in the normalized (Procrustes) frame.
    pub fn mean_shape(&self) -> Shape {
        Shape::from_vec(self.pca.mean.as_slice()).expect("even length by construction")
    }

    pub fn n_modes(&self) -> usize {
        self.pca.n_modes()
    }
}

/// PCA of shape-normalized textures over a fixed mask.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct AppearanceModel {
    pub pca: PcaModel,
    pub retained_fraction: f64,
}

impl AppearanceModel {
    pub fn n_modes(&self) -> usize {
        self.pca.n_modes()
    }
}

/// Builds the shape PCA from Procrustes-aligned shapes.
pub fn build_shape_model(aligned: &[Shape], retain: f64) -> Result<ShapeModel> {
    if aligned.len() < 2 {
        return Err(Error::Model(format!(
            "shape model needs at least 2 shapes, got {}",
            aligned.len()
        )));
    }
    let data: Vec<DVector<f64>> = aligned
        .iter()
        .map(|s| DVector::from_vec(s.to_vec()))
        .collect();
    Ok(ShapeModel {
        pca: pca(&data, retain)?,
        retained_fraction: retain,
    })
}

/// Warps each frame to the reference and builds the appearance PCA.
pub fn build_appearance_model(
    frames: &[(Image, Shape)],
    reference: &ReferenceFrame,
    retain: f64,
) -> Result<AppearanceModel> {
    if frames.len() < 2 {
        return Err(Error::Model(format!(
            "appearance model needs at least 2 frames, got {}",
            frames.len()
        )));
    }
    let data: Vec<DVector<f64>> = frames
        .iter()
        .map(|(img, shape)| {
            Ok(DVector::from_vec(
                warp_to_reference(img, shape, reference)?.values,
            ))
        })
        .collect::<Result<_>>()?;
    Ok(AppearanceModel {
        pca: pca(&data, retain)?,
        retained_fraction: retain,
    })
}

/// A combined model of shape and appearance.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct Aam {
    pub shape_model: ShapeModel,
    pub appearance_model: AppearanceModel,
    pub reference: ReferenceFrame,
    pub native_resolution: Resolution,
    /// Mean pixel scale of the training shapes; maps normalized-frame
    /// displacements to reference pixels.
    pub scale: f64,
    /// Indices of the lip landmarks within this model's topology.
    pub lip_indices: Vec<usize>,
}

impl Aam {
    pub fn n_landmarks(&self) -> usize {
        self.reference.reference.len()
    }

    /// Reference-frame vertex positions at shape parameters `p`.
    pub fn ref_vertices(&self, p: &DVector<f64>) -> Shape {
        let disp = &self.shape_model.pca.modes * p;
        let pts: Vec<(f64, f64)> = self
            .reference
            .reference
            .points()
            .iter()
            .enumerate()
            .map(|(k, &(x, y))| {
                (
                    x + self.scale * disp[2 * k],
                    y + self.scale * disp[2 * k + 1],
                )
            })
            .collect();
        Shape::new(pts).expect("finite by construction")
    }

    /// Image-frame shape for a similarity pose and shape parameters.
    pub fn instance_shape(&self, pose: &SimilarityTransform, p: &DVector<f64>) -> Shape {
        pose.apply_shape(&self.ref_vertices(p))
    }

    /// Shape parameters of an image-frame shape: Procrustes-normalize it
    /// against the model mean and project onto the shape modes. Identical
    /// input gives bitwise identical output.
    pub fn project_shape(&self, shape: &Shape) -> Result<(SimilarityTransform, DVector<f64>)> {
        let mut p = DVector::zeros(self.shape_model.n_modes());
        let mut pose = SimilarityTransform::identity();
        for _ in 0..3 {
            let model_pts = self.ref_vertices(&p);
            pose = align_similarity(&model_pts, shape)?;
            let back = pose.inverse().apply_shape(shape);
            let mut d = DVector::from_vec(back.to_vec());
            d -= DVector::from_vec(self.reference.reference.to_vec());
            p = self.shape_model.pca.modes.tr_mul(&d) / self.scale;
        }
        Ok((pose, p))
    }

    /// Appearance parameters of a texture under the native basis.
    pub fn project_texture(&self, tex: &TextureVector) -> DVector<f64> {
        self.appearance_model
            .pca
            .project(&DVector::from_vec(tex.values.clone()))
    }
}

/// Builds a combined model from landmarked key frames.
///
/// The reference shape is the Procrustes mean mapped back to the native
/// pixel scale (the mean of the training shapes' RMS radii) so texture
/// sampling density matches the native frames.
pub fn build_aam(
    frames: &[(Image, Shape)],
    retain: f64,
    native: Resolution,
    lip_indices: Vec<usize>,
) -> Result<Aam> {
    if frames.len() < 2 {
        return Err(Error::Model(format!(
            "model build needs at least 2 key frames, got {}",
            frames.len()
        )));
    }
    let shapes: Vec<Shape> = frames.iter().map(|(_, s)| s.clone()).collect();
    let (aligned, _) = procrustes_align(&shapes)?;
    let shape_model = build_shape_model(&aligned, retain)?;
    let scale = shapes.iter().map(Shape::rms_radius).sum::<f64>() / shapes.len() as f64;
    let mean = shape_model.mean_shape();
    let margin = 4.0;
    let scaled: Vec<(f64, f64)> = mean
        .points()
        .iter()
        .map(|&(x, y)| (x * scale, y * scale))
        .collect();
    let (min_x, min_y) = scaled.iter().fold((f64::INFINITY, f64::INFINITY), |a, p| {
        (a.0.min(p.0), a.1.min(p.1))
    });
    let reference_shape = Shape::new(
        scaled
            .iter()
            .map(|&(x, y)| (x - min_x + margin, y - min_y + margin))
            .collect(),
    )?;
    let tri = triangulate(&reference_shape)?;
    let reference = ReferenceFrame::build(reference_shape, tri)?;
    let appearance_model = build_appearance_model(frames, &reference, retain)?;
    Ok(Aam {
        shape_model,
        appearance_model,
        reference,
        native_resolution: native,
        scale,
        lip_indices,
    })
}

/// Rebuilds shape and appearance PCA restricted to a landmark subset (the
/// lips, say) from the same training frames.
pub fn extract_sub_model(
    aam: &Aam,
    indices: &[usize],
    frames: &[(Image, Shape)],
) -> Result<Aam> {
    if indices.len() < 3 {
        return Err(Error::Model(format!(
            "sub-model needs at least 3 landmarks, got {}",
            indices.len()
        )));
    }
    let mut seen = std::collections::HashSet::new();
    for &i in indices {
        if i >= aam.n_landmarks() {
            return Err(Error::Model(format!("landmark index {i} out of range")));
        }
        if !seen.insert(i) {
            return Err(Error::Model(format!("duplicate landmark index {i}")));
        }
    }
    let sub_frames: Vec<(Image, Shape)> = frames
        .iter()
        .map(|(img, s)| Ok((img.clone(), s.subset(indices)?)))
        .collect::<Result<_>>()?;
    let sub_lips: Vec<usize> = indices
        .iter()
        .enumerate()
        .filter(|(_, &orig)| aam.lip_indices.contains(&orig))
        .map(|(new, _)| new)
        .collect();
    build_aam(
        &sub_frames,
        aam.shape_model.retained_fraction,
        aam.native_resolution,
        sub_lips,
    )
}

// ---------------------------------------------------------------------------
// Texture rasters
// ---------------------------------------------------------------------------

/// A texture vector placed on its reference-frame pixel grid, with holes
/// filled by neighbor dilation so bilinear sampling and gradients behave at
/// the mesh boundary.
#[derive(Debug, Clone)]
pub struct TextureRaster {
    pub x0: i32,
    pub y0: i32,
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl TextureRaster {
    pub fn from_texture(frame: &ReferenceFrame, values: &[f64]) -> TextureRaster {
        let min_x = frame.pixels.iter().map(|p| p.0).min().unwrap();
        let max_x = frame.pixels.iter().map(|p| p.0).max().unwrap();
        let min_y = frame.pixels.iter().map(|p| p.1).min().unwrap();
        let max_y = frame.pixels.iter().map(|p| p.1).max().unwrap();
        let width = (max_x - min_x + 1) as usize;
        let height = (max_y - min_y + 1) as usize;
        let mut grid = vec![f64::NAN; width * height];
        for (k, &(x, y)) in frame.pixels.iter().enumerate() {
            grid[(y - min_y) as usize * width + (x - min_x) as usize] = values[k];
        }
        // dilate until every cell is filled
        loop {
            let mut filled_any = false;
            let mut next = grid.clone();
            for y in 0..height {
                for x in 0..width {
                    if !grid[y * width + x].is_nan() {
                        continue;
                    }
                    let mut sum = 0.0;
                    let mut cnt = 0;
                    for (dx, dy) in [(-1i32, 0i32), (1, 0), (0, -1), (0, 1)] {
                        let nx = x as i32 + dx;
                        let ny = y as i32 + dy;
                        if nx < 0 || ny < 0 || nx >= width as i32 || ny >= height as i32 {
                            continue;
                        }
                        let v = grid[ny as usize * width + nx as usize];
                        if !v.is_nan() {
                            sum += v;
                            cnt += 1;
                        }
                    }
                    if cnt > 0 {
                        next[y * width + x] = sum / cnt as f64;
                        filled_any = true;
                    }
                }
            }
            grid = next;
            if !filled_any {
                break;
            }
        }
        for v in &mut grid {
            if v.is_nan() {
                *v = 0.0;
            }
        }
        TextureRaster {
            x0: min_x,
            y0: min_y,
            width,
            height,
            values: grid,
        }
    }

    #[inline]
    fn at(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    /// Bilinear sample in reference coordinates, clamped at the raster edges.
    pub fn sample(&self, x: f64, y: f64) -> f64 {
        let fx = x - self.x0 as f64;
        let fy = y - self.y0 as f64;
        let x0 = fx.floor() as isize;
        let y0 = fy.floor() as isize;
        let tx = fx - x0 as f64;
        let ty = fy - y0 as f64;
        let cx0 = x0.clamp(0, self.width as isize - 1) as usize;
        let cx1 = (x0 + 1).clamp(0, self.width as isize - 1) as usize;
        let cy0 = y0.clamp(0, self.height as isize - 1) as usize;
        let cy1 = (y0 + 1).clamp(0, self.height as isize - 1) as usize;
        let top = self.at(cx0, cy0) + (self.at(cx1, cy0) - self.at(cx0, cy0)) * tx;
        let bot = self.at(cx0, cy1) + (self.at(cx1, cy1) - self.at(cx0, cy1)) * tx;
        top + (bot - top) * ty
    }

    /// Central-difference gradient at a mask pixel (one-sided at borders).
    fn gradient(&self, x: i32, y: i32) -> (f64, f64) {
        let xi = (x - self.x0) as usize;
        let yi = (y - self.y0) as usize;
        let gx = {
            let lo = xi.saturating_sub(1);
            let hi = (xi + 1).min(self.width - 1);
            if hi == lo {
                0.0
            } else {
                (self.at(hi, yi) - self.at(lo, yi)) / (hi - lo) as f64
            }
        };
        let gy = {
            let lo = yi.saturating_sub(1);
            let hi = (yi + 1).min(self.height - 1);
            if hi == lo {
                0.0
            } else {
                (self.at(xi, hi) - self.at(xi, lo)) / (hi - lo) as f64
            }
        };
        (gx, gy)
    }
}

// ---------------------------------------------------------------------------
// Inverse-compositional fitting
// ---------------------------------------------------------------------------

/// Warp parameters: a 4-parameter global similarity about the reference
/// centroid composed with the shape modes. The warp is linear in all of
/// them at fixed barycentric coordinates.
#[derive(Debug, Clone)]
pub struct WarpParams {
    /// scale/rotation pair: the linear part is `[[1+a, -b], [b, 1+a]]`
    pub a: f64,
    pub b: f64,
    pub tx: f64,
    pub ty: f64,
    pub shape: DVector<f64>,
}

impl WarpParams {
    pub fn identity(n_modes: usize) -> Self {
        WarpParams {
            a: 0.0,
            b: 0.0,
            tx: 0.0,
            ty: 0.0,
            shape: DVector::zeros(n_modes),
        }
    }

    pub fn n_params(&self) -> usize {
        4 + self.shape.len()
    }
}

fn reference_centroid(aam: &Aam) -> (f64, f64) {
    aam.reference.reference.centroid()
}

/// Vertex positions under the parametric warp (similarity about the
/// reference centroid applied to the mode-displaced reference vertices).
pub fn warp_vertices(aam: &Aam, params: &WarpParams) -> Shape {
    let base = aam.ref_vertices(&params.shape);
    let (cx, cy) = reference_centroid(aam);
    let pts = base
        .points()
        .iter()
        .map(|&(x, y)| {
            let (dx, dy) = (x - cx, y - cy);
            (
                cx + (1.0 + params.a) * dx - params.b * dy + params.tx,
                cy + params.b * dx + (1.0 + params.a) * dy + params.ty,
            )
        })
        .collect();
    Shape::new(pts).expect("finite by construction")
}

/// Image position of mask pixel `k` under the parametric warp.
pub fn warp_point(aam: &Aam, params: &WarpParams, k: usize) -> (f64, f64) {
    let verts = warp_vertices(aam, params);
    aam.reference.map_pixel(k, &verts)
}

/// Analytic Jacobian of [`warp_point`] with respect to all parameters:
/// a `2 x (4 + s)` matrix in row-major pairs.
pub fn warp_jacobian(aam: &Aam, params: &WarpParams, k: usize) -> DMatrix<f64> {
    let n_p = params.shape.len();
    let mut jac = DMatrix::zeros(2, 4 + n_p);
    let t = aam.reference.triangulation.triangles[aam.reference.tri_of[k] as usize];
    let w = aam.reference.bary[k];
    let base = aam.ref_vertices(&params.shape);
    let (cx, cy) = reference_centroid(aam);
    let m11 = 1.0 + params.a;
    let m12 = -params.b;
    let m21 = params.b;
    let m22 = 1.0 + params.a;
    for (vi, &wi) in t.iter().zip(w.iter()) {
        let (x, y) = base.points()[*vi];
        let (dx, dy) = (x - cx, y - cy);
        // d/da, d/db, d/dtx, d/dty
        jac[(0, 0)] += wi * dx;
        jac[(1, 0)] += wi * dy;
        jac[(0, 1)] += wi * -dy;
        jac[(1, 1)] += wi * dx;
        jac[(0, 2)] += wi;
        jac[(1, 3)] += wi;
        // shape modes, through the similarity linear part
        for m in 0..n_p {
            let ux = aam.scale * aam.shape_model.pca.modes[(2 * vi, m)];
            let uy = aam.scale * aam.shape_model.pca.modes[(2 * vi + 1, m)];
            jac[(0, 4 + m)] += wi * (m11 * ux + m12 * uy);
            jac[(1, 4 + m)] += wi * (m21 * ux + m22 * uy);
        }
    }
    jac
}

/// Precomputed quantities for project-out inverse-compositional fitting.
pub struct Fitter<'a> {
    aam: &'a Aam,
    /// steepest-descent images with the appearance subspace projected out
    pub(crate) sd_po: DMatrix<f64>,
    pub(crate) chol: Cholesky<f64, Dyn>,
    /// per-vertex 2-vectors of each parameter's incremental displacement
    basis: DMatrix<f64>,
}

impl<'a> Fitter<'a> {
    pub fn new(aam: &'a Aam) -> Result<Self> {
        let n_modes = aam.shape_model.n_modes();
        let n_params = 4 + n_modes;
        let n_verts = aam.n_landmarks();
        let (cx, cy) = reference_centroid(aam);
        // incremental displacement basis at the identity warp
        let mut basis = DMatrix::zeros(2 * n_verts, n_params);
        for (k, &(x, y)) in aam.reference.reference.points().iter().enumerate() {
            let (dx, dy) = (x - cx, y - cy);
            basis[(2 * k, 0)] = dx;
            basis[(2 * k + 1, 0)] = dy;
            basis[(2 * k, 1)] = -dy;
            basis[(2 * k + 1, 1)] = dx;
            basis[(2 * k, 2)] = 1.0;
            basis[(2 * k + 1, 3)] = 1.0;
            for m in 0..n_modes {
                basis[(2 * k, 4 + m)] = aam.scale * aam.shape_model.pca.modes[(2 * k, m)];
                basis[(2 * k + 1, 4 + m)] =
                    aam.scale * aam.shape_model.pca.modes[(2 * k + 1, m)];
            }
        }
        // template gradient
        let raster =
            TextureRaster::from_texture(&aam.reference, aam.appearance_model.pca.mean.as_slice());
        let mask_len = aam.reference.mask_len();
        let mut sd = DMatrix::zeros(mask_len, n_params);
        for k in 0..mask_len {
            let (px, py) = aam.reference.pixels[k];
            let (gx, gy) = raster.gradient(px, py);
            let t = aam.reference.triangulation.triangles[aam.reference.tri_of[k] as usize];
            let w = aam.reference.bary[k];
            for j in 0..n_params {
                let mut jx = 0.0;
                let mut jy = 0.0;
                for (vi, &wi) in t.iter().zip(w.iter()) {
                    jx += wi * basis[(2 * vi, j)];
                    jy += wi * basis[(2 * vi + 1, j)];
                }
                sd[(k, j)] = gx * jx + gy * jy;
            }
        }
        // project out the appearance subspace
        let a = &aam.appearance_model.pca.modes;
        let sd_po = &sd - a * a.tr_mul(&sd);
        let hessian = sd_po.tr_mul(&sd_po);
        let chol = Cholesky::new(hessian).ok_or(Error::SingularHessian)?;
        Ok(Fitter {
            aam,
            sd_po,
            chol,
            basis,
        })
    }

    /// One inverse-compositional update step: solve for the incremental
    /// parameters, invert them to first order, and push the perturbed
    /// reference vertices through the current warp.
    fn compose(&self, current: &Shape, delta: &DVector<f64>) -> Shape {
        let aam = self.aam;
        let disp = &self.basis * delta;
        let pts: Vec<(f64, f64)> = aam
            .reference
            .reference
            .points()
            .iter()
            .enumerate()
            .map(|(k, &(x, y))| {
                let p = (x - disp[2 * k], y - disp[2 * k + 1]);
                aam.reference.map_point(p, current)
            })
            .collect();
        Shape::new(pts).expect("finite by construction")
    }

    pub fn fit(
        &self,
        image: &Image,
        init_shape: &Shape,
        max_iters: usize,
        tol: f64,
    ) -> Result<FitResult> {
        let aam = self.aam;
        if init_shape.len() != aam.n_landmarks() {
            return Err(Error::Fit(format!(
                "init shape has {} landmarks, model has {}",
                init_shape.len(),
                aam.n_landmarks()
            )));
        }
        let (w, h) = (image.width() as f64, image.height() as f64);
        if init_shape
            .points()
            .iter()
            .any(|&(x, y)| x < 0.0 || y < 0.0 || x > w - 1.0 || y > h - 1.0)
        {
            return Err(Error::Fit("init shape out of image bounds".into()));
        }
        let mask_len = aam.reference.mask_len() as f64;
        let a_modes = &aam.appearance_model.pca.modes;
        let a0 = &aam.appearance_model.pca.mean;
        let n_params = 4 + aam.shape_model.n_modes();

        let (mut pose, mut p) = aam.project_shape(init_shape)?;
        let mut monotone = true;
        let mut prev_residual = f64::INFINITY;
        let mut converged = false;
        let mut iterations = 0;
        for _ in 0..max_iters {
            let current = aam.instance_shape(&pose, &p);
            let tex = warp_to_reference(image, &current, &aam.reference)?;
            let e = DVector::from_vec(tex.values) - a0;
            let e_proj = &e - a_modes * a_modes.tr_mul(&e);
            let residual = e_proj.norm() / mask_len.sqrt();
            if residual > prev_residual + 1e-9 {
                monotone = false;
            }
            prev_residual = residual;

            let rhs = self.sd_po.tr_mul(&e);
            let delta = self.chol.solve(&rhs);
            if !delta.iter().all(|v| v.is_finite()) {
                return Err(Error::SingularHessian);
            }
            iterations += 1;
            let new_shape = self.compose(&current, &delta);
            let (new_pose, new_p) = aam.project_shape(&new_shape)?;
            pose = new_pose;
            p = new_p;
            let step = (delta.norm_squared() / n_params as f64).sqrt();
            if step < tol {
                converged = true;
                break;
            }
        }
        let fitted_shape = aam.instance_shape(&pose, &p);
        let tex = warp_to_reference(image, &fitted_shape, &aam.reference)?;
        let e = DVector::from_vec(tex.values.clone()) - a0;
        let appearance_params = a_modes.tr_mul(&e);
        let e_proj = &e - a_modes * &appearance_params;
        let residual_rms = e_proj.norm() / mask_len.sqrt();
        if residual_rms > prev_residual + 1e-9 {
            monotone = false;
        }
        Ok(FitResult {
            shape_params: p,
            appearance_params,
            fitted_shape,
            residual_rms,
            converged: converged && monotone,
            iterations,
        })
    }
}

/// Result of inverse-compositional fitting.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub shape_params: DVector<f64>,
    pub appearance_params: DVector<f64>,
    /// Fitted landmark positions in image coordinates.
    pub fitted_shape: Shape,
    /// RMS of the residual orthogonal to the appearance subspace.
    pub residual_rms: f64,
    pub converged: bool,
    pub iterations: usize,
}

/// Convenience wrapper that builds the fitter for a single call.
pub fn fit(
    aam: &Aam,
    image: &Image,
    init_shape: &Shape,
    max_iters: usize,
    tol: f64,
) -> Result<FitResult> {
    Fitter::new(aam)?.fit(image, init_shape, max_iters, tol)
}

/// Renders a model instance into an image: pixels inside the instance mesh
/// sample the model texture `mean + U lambda`; everything else takes the
/// background intensity.
pub fn synthesize(
    aam: &Aam,
    pose: &SimilarityTransform,
    p: &DVector<f64>,
    lambda: &DVector<f64>,
    size: Resolution,
    background: f32,
) -> Result<Image> {
    let tex = aam.appearance_model.pca.reconstruct(lambda);
    let raster = TextureRaster::from_texture(&aam.reference, tex.as_slice());
    let shape = aam.instance_shape(pose, p);
    let mut data = vec![background; size.width * size.height];
    let tris = &aam.reference.triangulation.triangles;
    // precompute image-frame triangle corners and barycentric denominators
    let mut corners = Vec::with_capacity(tris.len());
    for t in tris {
        let a = shape.points()[t[0]];
        let b = shape.points()[t[1]];
        let c = shape.points()[t[2]];
        let denom = (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0);
        if denom.abs() < 1e-12 {
            return Err(Error::Fit("degenerate triangle in instance mesh".into()));
        }
        corners.push((a, b, c, denom));
    }
    // paint the mesh plus a small extrapolated margin so that bilinear
    // samples taken near the mesh boundary during fitting see model texture
    // rather than background
    let margin = 3.0;
    let (bb_min_x, bb_min_y, bb_max_x, bb_max_y) = shape.bounding_box();
    let x_lo = (bb_min_x - margin).floor().max(0.0) as usize;
    let x_hi = ((bb_max_x + margin).ceil() as usize).min(size.width - 1);
    let y_lo = (bb_min_y - margin).floor().max(0.0) as usize;
    let y_hi = ((bb_max_y + margin).ceil() as usize).min(size.height - 1);
    for y in y_lo..=y_hi {
        for x in x_lo..=x_hi {
            let px = x as f64;
            let py = y as f64;
            // containing triangle, or the least-outside one
            let mut best: Option<(f64, usize, [f64; 3])> = None;
            for (ti, &(a, b, c, denom)) in corners.iter().enumerate() {
                let wa = ((b.0 - px) * (c.1 - py) - (b.1 - py) * (c.0 - px)) / denom;
                let wb = ((c.0 - px) * (a.1 - py) - (c.1 - py) * (a.0 - px)) / denom;
                let wc = 1.0 - wa - wb;
                let neg = (-wa).max(0.0) + (-wb).max(0.0) + (-wc).max(0.0);
                match best {
                    Some((bn, _, _)) if bn <= neg => {}
                    _ => best = Some((neg, ti, [wa, wb, wc])),
                }
                if neg == 0.0 {
                    break;
                }
            }
            let (neg, ti, w) = best.unwrap();
            // barycentric distance limit keeps far-field extrapolation out
            if neg > 0.5 {
                continue;
            }
            let t = tris[ti];
            let ra = aam.reference.reference.points()[t[0]];
            let rb = aam.reference.reference.points()[t[1]];
            let rc = aam.reference.reference.points()[t[2]];
            let rx = w[0] * ra.0 + w[1] * rb.0 + w[2] * rc.0;
            let ry = w[0] * ra.1 + w[1] * rb.1 + w[2] * rc.1;
            data[y * size.width + x] = raster.sample(rx, ry).clamp(0.0, 1.0) as f32;
        }
    }
    Image::new(size.width, size.height, data)
}

/// Like [`synthesize`], then refines the painted pixels so that sampling the
/// image back through the warp reproduces the model texture almost exactly:
/// for every mask pixel `x`, `bilinear(I, W(x)) = (mean + U lambda)(x)` to
/// solver precision. Used to build zero-residual fitting targets.
pub fn synthesize_exact(
    aam: &Aam,
    pose: &SimilarityTransform,
    p: &DVector<f64>,
    lambda: &DVector<f64>,
    size: Resolution,
    background: f32,
) -> Result<Image> {
    let base = synthesize(aam, pose, p, lambda, size, background)?;
    let tex = aam.appearance_model.pca.reconstruct(lambda);
    let shape = aam.instance_shape(pose, p);
    let (w, h) = (size.width, size.height);
    let mut pixels: Vec<f64> = base.data().iter().map(|&v| v as f64).collect();
    // bilinear stencils of every mask pixel
    let mut stencils = Vec::with_capacity(aam.reference.mask_len());
    for k in 0..aam.reference.mask_len() {
        let (x, y) = aam.reference.map_pixel(k, &shape);
        if x < 1.0 || y < 1.0 || x > (w - 2) as f64 || y > (h - 2) as f64 {
            return Err(Error::Fit(
                "instance mesh too close to the image border for exact synthesis".into(),
            ));
        }
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let tx = x - x0 as f64;
        let ty = y - y0 as f64;
        let weights = [
            (y0 * w + x0, (1.0 - tx) * (1.0 - ty)),
            (y0 * w + x0 + 1, tx * (1.0 - ty)),
            ((y0 + 1) * w + x0, (1.0 - tx) * ty),
            ((y0 + 1) * w + x0 + 1, tx * ty),
        ];
        stencils.push((weights, tex[k]));
    }
    // Kaczmarz sweeps; the forward painting is already close
    for _ in 0..400 {
        let mut worst = 0.0f64;
        for (weights, target) in &stencils {
            let mut val = 0.0;
            let mut wsq = 0.0;
            for &(idx, wt) in weights {
                val += wt * pixels[idx];
                wsq += wt * wt;
            }
            let r = target - val;
            worst = worst.max(r.abs());
            let scale = r / wsq;
            for &(idx, wt) in weights {
                pixels[idx] += wt * scale;
            }
        }
        if worst < 1e-12 {
            break;
        }
    }
    let data: Vec<f32> = pixels.iter().map(|&v| v.clamp(0.0, 1.0) as f32).collect();
    Image::new(w, h, data)
}

// ---------------------------------------------------------------------------
// Per-resolution feature extraction
// ---------------------------------------------------------------------------

/// Which appearance basis degraded textures project onto.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AppearanceBasis {
    /// Rebuild the basis from degraded key frames at every resolution, with
    /// the mode count frozen to the native model's count.
    PerResolution,
    /// Project degraded textures onto the native basis.
    Native,
}

impl Default for AppearanceBasis {
    fn default() -> Self {
        AppearanceBasis::PerResolution
    }
}

/// The appearance basis used at one ladder resolution.
#[derive(Debug, Clone)]
pub struct ResolutionBasis {
    pub target: Resolution,
    pub mean: DVector<f64>,
    /// `mask x m`; columns beyond the degraded rank are zero so the feature
    /// dimension stays constant across the sweep.
    pub modes: DMatrix<f64>,
}

impl ResolutionBasis {
    pub fn project(&self, tex: &TextureVector) -> DVector<f64> {
        self.modes
            .tr_mul(&(DVector::from_vec(tex.values.clone()) - &self.mean))
    }
}

/// Builds the appearance basis for one target resolution from the degraded
/// key frames. At the native resolution (or in `Native` mode) this is
/// exactly the native model basis.
pub fn build_resolution_basis(
    aam: &Aam,
    key_frames: &[(Image, Shape)],
    target: Resolution,
    mode: AppearanceBasis,
) -> Result<ResolutionBasis> {
    let native_pca = &aam.appearance_model.pca;
    if mode == AppearanceBasis::Native || target == aam.native_resolution {
        return Ok(ResolutionBasis {
            target,
            mean: native_pca.mean.clone(),
            modes: native_pca.modes.clone(),
        });
    }
    let m = native_pca.n_modes();
    let textures: Vec<DVector<f64>> = key_frames
        .iter()
        .map(|(img, shape)| {
            let degraded = degrade(img, target)?;
            Ok(DVector::from_vec(
                warp_to_reference(&degraded, shape, &aam.reference)?.values,
            ))
        })
        .collect::<Result<_>>()?;
    let degraded_pca = pca(&textures, 1.0)?;
    let mask = aam.reference.mask_len();
    let mut modes = DMatrix::zeros(mask, m);
    for j in 0..m.min(degraded_pca.n_modes()) {
        modes.set_column(j, &degraded_pca.modes.column(j));
    }
    Ok(ResolutionBasis {
        target,
        mean: degraded_pca.mean,
        modes,
    })
}

/// One frame's features: shape parameters plus appearance parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub shape: Vec<f64>,
    pub appearance: Vec<f64>,
}

/// Extracts per-frame features at one target resolution.
///
/// Shape parameters come from the native-resolution fitted shapes, so they
/// are identical at every target; appearance parameters project the texture
/// of the degraded frame, sampled at the native fitted shape, onto the
/// resolution basis.
pub fn features_for_sequence(
    aam: &Aam,
    basis: &ResolutionBasis,
    frames: &[Image],
    fitted_shapes: &[Shape],
    target: Resolution,
) -> Result<Vec<FeatureVector>> {
    if frames.len() != fitted_shapes.len() {
        return Err(Error::Model(format!(
            "{} frames but {} fitted shapes",
            frames.len(),
            fitted_shapes.len()
        )));
    }
    if basis.target != target {
        return Err(Error::Model(format!(
            "basis built for {} used at {target}",
            basis.target
        )));
    }
    frames
        .iter()
        .zip(fitted_shapes.iter())
        .map(|(frame, shape)| {
            let (_, p) = aam.project_shape(shape)?;
            let degraded = degrade(frame, target)?;
            let tex = warp_to_reference(&degraded, shape, &aam.reference)?;
            let lambda = basis.project(&tex);
            Ok(FeatureVector {
                shape: p.as_slice().to_vec(),
                appearance: lambda.as_slice().to_vec(),
            })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Model container
// ---------------------------------------------------------------------------

/// The on-disk model container: the full-face model, the lips sub-model, and
/// the landmark bookkeeping needed to use them.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub full: Aam,
    pub lips: Aam,
    /// Indices of the lip landmarks within the full topology.
    pub lip_indices: Vec<usize>,
}

pub const MODEL_FORMAT: &str = "lipres-aam";
pub const MODEL_VERSION: u32 = 1;

impl ModelFile {
    pub fn new(full: Aam, lips: Aam, lip_indices: Vec<usize>) -> Self {
        ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            full,
            lips,
            lip_indices,
        }
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let json = serde_json::to_string(self)
            .map_err(|e| Error::Model(format!("serialize model: {e}")))?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &std::path::Path) -> Result<ModelFile> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: ModelFile = serde_json::from_str(&text)
            .map_err(|e| Error::Model(format!("parse model: {e}")))?;
        if model.format != MODEL_FORMAT {
            return Err(Error::Model(format!(
                "unexpected model format '{}'",
                model.format
            )));
        }
        if model.version != MODEL_VERSION {
            return Err(Error::Model(format!(
                "unsupported model version {}",
                model.version
            )));
        }
        Ok(model)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Eight-landmark blob with two deformation directions, rendered over a
    /// smooth intensity field. Small enough that every test stays fast.
    fn fixture_frames(n: usize) -> Vec<(Image, Shape)> {
        let base = [
            (20.0, 20.0),
            (60.0, 18.0),
            (64.0, 58.0),
            (22.0, 62.0),
            (32.0, 34.0),
            (50.0, 32.0),
            (48.0, 48.0),
            (33.0, 49.0),
        ];
        // direction 1: widen; direction 2: open the inner quad vertically
        let d1 = [
            (-1.0, 0.0),
            (1.0, 0.0),
            (1.0, 0.0),
            (-1.0, 0.0),
            (-0.4, 0.0),
            (0.4, 0.0),
            (0.4, 0.0),
            (-0.4, 0.0),
        ];
        let d2 = [
            (0.0, -0.3),
            (0.0, -0.3),
            (0.0, 0.5),
            (0.0, 0.5),
            (0.0, -1.0),
            (0.0, -1.0),
            (0.0, 1.0),
            (0.0, 1.0),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        (0..n)
            .map(|i| {
                let t1 = (i as f64 / n as f64 - 0.5) * 4.0;
                let t2 = ((i * 7 % n) as f64 / n as f64 - 0.5) * 3.0;
                let pts: Vec<(f64, f64)> = base
                    .iter()
                    .zip(d1.iter())
                    .zip(d2.iter())
                    .map(|((&(x, y), &(ax, ay)), &(bx, by))| {
                        (x + t1 * ax + t2 * bx, y + t1 * ay + t2 * by)
                    })
                    .collect();
                let shape = Shape::new(pts).unwrap();
                let bright = 0.1 * rng.gen::<f32>();
                let data: Vec<f32> = (0..84 * 84)
                    .map(|k| {
                        let (x, y) = ((k % 84) as f32, (k / 84) as f32);
                        (0.25 + 0.004 * x + 0.003 * y
                            + 0.15 * ((x - 42.0) / 30.0).tanh() * ((y - 40.0) / 28.0).tanh()
                            + bright)
                            .clamp(0.0, 1.0)
                    })
                    .collect();
                (Image::new(84, 84, data).unwrap(), shape)
            })
            .collect()
    }

    fn fixture_aam() -> Aam {
        let frames = fixture_frames(8);
        build_aam(
            &frames,
            0.98,
            Resolution::new(84, 84).unwrap(),
            vec![4, 5, 6, 7],
        )
        .unwrap()
    }

    #[test]
    fn modes_are_orthonormal() {
        let aam = fixture_aam();
        for pca in [&aam.shape_model.pca, &aam.appearance_model.pca] {
            let gram = pca.modes.tr_mul(&pca.modes);
            for i in 0..gram.nrows() {
                for j in 0..gram.ncols() {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!(
                        (gram[(i, j)] - expect).abs() < 1e-9,
                        "gram[{i},{j}] = {}",
                        gram[(i, j)]
                    );
                }
            }
        }
        // eigenvalues descending
        for pca in [&aam.shape_model.pca, &aam.appearance_model.pca] {
            for w in pca.eigenvalues.windows(2) {
                assert!(w[0] >= w[1]);
            }
        }
    }

    #[test]
    fn rank_one_shape_data_gives_one_mode() {
        let base = Shape::new(vec![
            (0.0, 0.0),
            (10.0, 1.0),
            (9.0, 9.0),
            (1.0, 10.0),
        ])
        .unwrap();
        let d = [(1.0, 0.5), (-0.5, 0.3), (0.2, -1.0), (-0.7, 0.2)];
        let shapes: Vec<Shape> = [-2.0f64, -1.0, 0.0, 1.0, 2.0]
            .iter()
            .map(|&t| {
                Shape::new(
                    base.points()
                        .iter()
                        .zip(d.iter())
                        .map(|(&(x, y), &(dx, dy))| (x + 0.05 * t * dx, y + 0.05 * t * dy))
                        .collect(),
                )
                .unwrap()
            })
            .collect();
        // feed raw shapes to PCA directly (no alignment) to keep d exact
        let data: Vec<DVector<f64>> = shapes
            .iter()
            .map(|s| DVector::from_vec(s.to_vec()))
            .collect();
        let model = pca(&data, 0.95).unwrap();
        assert_eq!(model.n_modes(), 1);
        let dir = DVector::from_vec(d.iter().flat_map(|&(x, y)| [x, y]).collect::<Vec<_>>());
        let unit = &dir / dir.norm();
        let dot = model.modes.column(0).dot(&unit).abs();
        assert!((dot - 1.0).abs() < 1e-9, "mode not parallel to d: |dot|={dot}");
    }

    #[test]
    fn identical_shapes_report_no_variance() {
        let s = Shape::new(vec![(0.0, 0.0), (5.0, 1.0), (3.0, 6.0)]).unwrap();
        let shapes = vec![s; 5];
        let (aligned, _) = procrustes_align(&shapes).unwrap();
        assert!(matches!(
            build_shape_model(&aligned, 0.95),
            Err(Error::NoVariance)
        ));
    }

    #[test]
    fn full_retention_keeps_full_rank() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let data: Vec<DVector<f64>> = (0..5)
            .map(|_| DVector::from_fn(8, |_, _| rng.gen::<f64>()))
            .collect();
        let model = pca(&data, 1.0).unwrap();
        assert_eq!(model.n_modes(), 4); // rank n-1
    }

    #[test]
    fn two_textures_give_one_mode_and_average_mean() {
        let a = DVector::from_vec(vec![0.0, 0.2, 0.4, 0.6]);
        let b = DVector::from_vec(vec![0.4, 0.2, 0.0, 0.8]);
        let model = pca(&[a.clone(), b.clone()], 0.95).unwrap();
        assert_eq!(model.n_modes(), 1);
        let mean = (&a + &b) / 2.0;
        assert!((&model.mean - mean).norm() < 1e-12);
    }

    #[test]
    fn reconstruction_error_bounded_by_dropped_variance() {
        let frames = fixture_frames(8);
        let shapes: Vec<Shape> = frames.iter().map(|(_, s)| s.clone()).collect();
        let (aligned, _) = procrustes_align(&shapes).unwrap();
        let retain = 0.9;
        let model = build_shape_model(&aligned, retain).unwrap();
        let n = aligned.len() as f64;
        for s in &aligned {
            let x = DVector::from_vec(s.to_vec());
            let recon = model.pca.reconstruct(&model.pca.project(&x));
            let err = (x - recon).norm_squared();
            // total squared residual across samples is (n-1) * dropped variance
            let dropped = model.pca.total_variance
                - model.pca.eigenvalues.iter().sum::<f64>();
            assert!(err <= dropped.max(0.0) * (n - 1.0) + 1e-9, "err {err}");
        }
    }

    #[test]
    fn warp_jacobian_matches_finite_differences() {
        let aam = fixture_aam();
        let n_modes = aam.shape_model.n_modes();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let step = 1e-5;
        for _ in 0..10 {
            let params = WarpParams {
                a: rng.gen_range(-0.1..0.1),
                b: rng.gen_range(-0.1..0.1),
                tx: rng.gen_range(-3.0..3.0),
                ty: rng.gen_range(-3.0..3.0),
                shape: DVector::from_fn(n_modes, |_, _| rng.gen_range(-0.05..0.05)),
            };
            let k = rng.gen_range(0..aam.reference.mask_len());
            let jac = warp_jacobian(&aam, &params, k);
            for j in 0..params.n_params() {
                let mut plus = params.clone();
                let mut minus = params.clone();
                match j {
                    0 => {
                        plus.a += step;
                        minus.a -= step;
                    }
                    1 => {
                        plus.b += step;
                        minus.b -= step;
                    }
                    2 => {
                        plus.tx += step;
                        minus.tx -= step;
                    }
                    3 => {
                        plus.ty += step;
                        minus.ty -= step;
                    }
                    _ => {
                        plus.shape[j - 4] += step;
                        minus.shape[j - 4] -= step;
                    }
                }
                let pp = warp_point(&aam, &plus, k);
                let pm = warp_point(&aam, &minus, k);
                let fd = ((pp.0 - pm.0) / (2.0 * step), (pp.1 - pm.1) / (2.0 * step));
                assert!(
                    (jac[(0, j)] - fd.0).abs() < 1e-4 && (jac[(1, j)] - fd.1).abs() < 1e-4,
                    "param {j}: analytic ({}, {}) vs fd {fd:?}",
                    jac[(0, j)],
                    jac[(1, j)]
                );
            }
        }
    }

    #[test]
    fn fit_recovers_synthesized_instance() {
        let aam = fixture_aam();
        let n_modes = aam.shape_model.n_modes();
        let std0 = aam.shape_model.pca.eigenvalues[0].sqrt();
        let mut p_true = DVector::zeros(n_modes);
        p_true[0] = 0.4 * std0;
        let mut lambda = DVector::zeros(aam.appearance_model.n_modes());
        if lambda.len() > 1 {
            lambda[1] = 0.3 * aam.appearance_model.pca.eigenvalues[1].sqrt();
        }
        let pose = SimilarityTransform {
            scale: 1.03,
            rotation: 0.02,
            translation: (1.5, -1.0),
        };
        let img = synthesize_exact(
            &aam,
            &pose,
            &p_true,
            &lambda,
            Resolution::new(96, 96).unwrap(),
            0.25,
        )
        .unwrap();
        let truth = aam.instance_shape(&pose, &p_true);

        // the warped texture must reproduce the model instance
        let tex = warp_to_reference(&img, &truth, &aam.reference).unwrap();
        let want = aam.appearance_model.pca.reconstruct(&lambda);
        let resid = (DVector::from_vec(tex.values) - &want).norm()
            / (aam.reference.mask_len() as f64).sqrt();
        assert!(resid < 1e-6, "exact synthesis residual {resid}");

        // exact init: fixed point
        let fitter = Fitter::new(&aam).unwrap();
        let res = fitter.fit(&img, &truth, 30, 1e-7).unwrap();
        assert!(res.converged, "did not converge from ground truth");
        let err = (&res.shape_params - &p_true).norm() / (n_modes as f64).sqrt();
        assert!(err < 1e-5, "param error {err}");

        // perturbed init: 20% of mode-1 std along mode 1
        let mut p_init = p_true.clone();
        p_init[0] += 0.2 * std0;
        let init_shape = aam.instance_shape(&pose, &p_init);
        let res = fitter.fit(&img, &init_shape, 60, 1e-7).unwrap();
        assert!(res.converged, "did not converge from perturbed init");
        let err = (&res.shape_params - &p_true).norm() / (n_modes as f64).sqrt();
        assert!(err < 1e-3 * std0, "param error {err} vs std {std0}");
        assert!(res.residual_rms < 1e-4);
    }

    #[test]
    fn fit_on_blank_image_does_not_crash() {
        let aam = fixture_aam();
        let img = Image::constant(84, 84, 0.0).unwrap();
        let init = aam.instance_shape(
            &SimilarityTransform::identity(),
            &DVector::zeros(aam.shape_model.n_modes()),
        );
        let res = fit(&aam, &img, &init, 10, 1e-8).unwrap();
        assert!(!res.converged || res.residual_rms >= 0.0);
    }

    #[test]
    fn fit_rejects_out_of_bounds_init() {
        let aam = fixture_aam();
        let init = Shape::new(
            aam.reference
                .reference
                .points()
                .iter()
                .map(|&(x, y)| (x + 500.0, y))
                .collect(),
        )
        .unwrap();
        let img = Image::constant(84, 84, 0.5).unwrap();
        assert!(fit(&aam, &img, &init, 10, 1e-8).is_err());
    }

    #[test]
    fn sub_model_of_all_landmarks_matches_full_rebuild() {
        let frames = fixture_frames(8);
        let aam = fixture_aam();
        let all: Vec<usize> = (0..aam.n_landmarks()).collect();
        let sub = extract_sub_model(&aam, &all, &frames).unwrap();
        assert_eq!(sub.shape_model.n_modes(), aam.shape_model.n_modes());
        for (a, b) in sub
            .shape_model
            .pca
            .eigenvalues
            .iter()
            .zip(aam.shape_model.pca.eigenvalues.iter())
        {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn sub_model_has_no_more_modes_than_full() {
        let frames = fixture_frames(8);
        let aam = fixture_aam();
        let sub = extract_sub_model(&aam, &[4, 5, 6, 7], &frames).unwrap();
        assert!(sub.shape_model.n_modes() <= aam.shape_model.n_modes());
        assert_eq!(sub.lip_indices, vec![0, 1, 2, 3]);
    }

    #[test]
    fn sub_model_needs_three_landmarks() {
        let frames = fixture_frames(8);
        let aam = fixture_aam();
        assert!(extract_sub_model(&aam, &[0, 1], &frames).is_err());
    }

    #[test]
    fn native_features_match_native_model_exactly() {
        let frames = fixture_frames(8);
        let aam = fixture_aam();
        let native = aam.native_resolution;
        let basis = build_resolution_basis(&aam, &frames, native, AppearanceBasis::PerResolution)
            .unwrap();
        let images: Vec<Image> = frames.iter().map(|(i, _)| i.clone()).collect();
        let shapes: Vec<Shape> = frames.iter().map(|(_, s)| s.clone()).collect();
        let feats = features_for_sequence(&aam, &basis, &images, &shapes, native).unwrap();
        for ((img, shape), f) in frames.iter().zip(feats.iter()) {
            let tex = warp_to_reference(img, shape, &aam.reference).unwrap();
            let lambda = aam.project_texture(&tex);
            assert_eq!(f.appearance, lambda.as_slice().to_vec());
        }
    }

    #[test]
    fn shape_features_identical_across_targets() {
        let frames = fixture_frames(8);
        let aam = fixture_aam();
        let images: Vec<Image> = frames.iter().map(|(i, _)| i.clone()).collect();
        let shapes: Vec<Shape> = frames.iter().map(|(_, s)| s.clone()).collect();
        let t1 = aam.native_resolution;
        let t2 = Resolution::new(28, 28).unwrap();
        let b1 =
            build_resolution_basis(&aam, &frames, t1, AppearanceBasis::PerResolution).unwrap();
        let b2 =
            build_resolution_basis(&aam, &frames, t2, AppearanceBasis::PerResolution).unwrap();
        let f1 = features_for_sequence(&aam, &b1, &images, &shapes, t1).unwrap();
        let f2 = features_for_sequence(&aam, &b2, &images, &shapes, t2).unwrap();
        for (a, b) in f1.iter().zip(f2.iter()) {
            assert_eq!(a.shape, b.shape, "shape features must be bitwise equal");
            assert_ne!(a.appearance, b.appearance);
        }
        // feature dimension constant across the sweep
        assert_eq!(f1[0].appearance.len(), f2[0].appearance.len());
    }

    #[test]
    fn projecting_mean_texture_gives_zero_appearance() {
        let aam = fixture_aam();
        let tex = TextureVector {
            values: aam.appearance_model.pca.mean.as_slice().to_vec(),
        };
        let lambda = aam.project_texture(&tex);
        assert!(lambda.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn model_file_round_trip() {
        let frames = fixture_frames(8);
        let aam = fixture_aam();
        let lips = extract_sub_model(&aam, &[4, 5, 6, 7], &frames).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let file = ModelFile::new(aam.clone(), lips, vec![4, 5, 6, 7]);
        file.save(&path).unwrap();
        let back = ModelFile::load(&path).unwrap();
        assert_eq!(back.version, MODEL_VERSION);
        assert_eq!(back.full.n_landmarks(), aam.n_landmarks());
        assert_eq!(
            back.full.shape_model.pca.eigenvalues,
            aam.shape_model.pca.eigenvalues
        );
    }
}
