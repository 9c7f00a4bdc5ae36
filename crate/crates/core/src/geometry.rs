//! Landmark shapes, Procrustes alignment, Delaunay triangulation, and the
//! piecewise-affine warp that shape-normalizes images onto a reference mesh.

use crate::error::{Error, Result};
use crate::imaging::Image;

/// An ordered list of 2-D landmark positions in sub-pixel coordinates.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Shape {
    points: Vec<(f64, f64)>,
}

impl Shape {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::Shape("non-finite landmark coordinate".into()));
        }
        Ok(Shape { points })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn centroid(&self) -> (f64, f64) {
        let n = self.points.len() as f64;
        let (sx, sy) = self
            .points
            .iter()
            .fold((0.0, 0.0), |(ax, ay), (x, y)| (ax + x, ay + y));
        (sx / n, sy / n)
    }

    /// Root-mean-square radius about the centroid.
    pub fn rms_radius(&self) -> f64 {
        let (cx, cy) = self.centroid();
        let ss: f64 = self
            .points
            .iter()
            .map(|(x, y)| (x - cx).powi(2) + (y - cy).powi(2))
            .sum();
        (ss / self.points.len() as f64).sqrt()
    }

    /// Centroid moved to the origin and RMS radius scaled to one.
    pub fn normalized(&self) -> Result<Shape> {
        let (cx, cy) = self.centroid();
        let r = self.rms_radius();
        if r <= 0.0 {
            return Err(Error::Shape("shape has all points coincident".into()));
        }
        Shape::new(
            self.points
                .iter()
                .map(|(x, y)| ((x - cx) / r, (y - cy) / r))
                .collect(),
        )
    }

    /// Flattens to `[x0, y0, x1, y1, ...]`.
    pub fn to_vec(&self) -> Vec<f64> {
        self.points.iter().flat_map(|&(x, y)| [x, y]).collect()
    }

    pub fn from_vec(v: &[f64]) -> Result<Shape> {
        if v.len() % 2 != 0 {
            return Err(Error::Shape("odd coordinate count".into()));
        }
        Shape::new(v.chunks_exact(2).map(|c| (c[0], c[1])).collect())
    }

    /// Restricts the shape to the given landmark indices, in order.
    pub fn subset(&self, indices: &[usize]) -> Result<Shape> {
        let mut pts = Vec::with_capacity(indices.len());
        for &i in indices {
            pts.push(
                *self
                    .points
                    .get(i)
                    .ok_or_else(|| Error::Shape(format!("landmark index {i} out of range")))?,
            );
        }
        Shape::new(pts)
    }

    pub fn bounding_box(&self) -> (f64, f64, f64, f64) {
        let mut min_x = f64::INFINITY;
        let mut min_y = f64::INFINITY;
        let mut max_x = f64::NEG_INFINITY;
        let mut max_y = f64::NEG_INFINITY;
        for &(x, y) in &self.points {
            min_x = min_x.min(x);
            min_y = min_y.min(y);
            max_x = max_x.max(x);
            max_y = max_y.max(y);
        }
        (min_x, min_y, max_x, max_y)
    }
}

/// A positive-scale rotation plus translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimilarityTransform {
    pub scale: f64,
    pub rotation: f64,
    pub translation: (f64, f64),
}

impl SimilarityTransform {
    pub fn identity() -> Self {
        SimilarityTransform {
            scale: 1.0,
            rotation: 0.0,
            translation: (0.0, 0.0),
        }
    }

    pub fn apply(&self, (x, y): (f64, f64)) -> (f64, f64) {
        let (s, c) = self.rotation.sin_cos();
        let (a, b) = (self.scale * c, self.scale * s);
        (
            a * x - b * y + self.translation.0,
            b * x + a * y + self.translation.1,
        )
    }

    pub fn apply_shape(&self, shape: &Shape) -> Shape {
        Shape {
            points: shape.points.iter().map(|&p| self.apply(p)).collect(),
        }
    }

    pub fn inverse(&self) -> SimilarityTransform {
        let inv_scale = 1.0 / self.scale;
        let rot = -self.rotation;
        let (s, c) = rot.sin_cos();
        let (tx, ty) = self.translation;
        SimilarityTransform {
            scale: inv_scale,
            rotation: rot,
            translation: (
                -inv_scale * (c * tx - s * ty),
                -inv_scale * (s * tx + c * ty),
            ),
        }
    }
}

/// Least-squares similarity transform mapping `from` onto `to`.
pub fn align_similarity(from: &Shape, to: &Shape) -> Result<SimilarityTransform> {
    if from.len() != to.len() {
        return Err(Error::Shape(format!(
            "point count mismatch: {} vs {}",
            from.len(),
            to.len()
        )));
    }
    if from.is_empty() {
        return Err(Error::Shape("empty shape".into()));
    }
    let (cfx, cfy) = from.centroid();
    let (ctx_, cty) = to.centroid();
    // complex least squares: w = sum(conj(b) * a) / sum(|b|^2)
    let mut num_re = 0.0;
    let mut num_im = 0.0;
    let mut den = 0.0;
    for (&(bx, by), &(ax, ay)) in from.points.iter().zip(to.points.iter()) {
        let (bx, by) = (bx - cfx, by - cfy);
        let (ax, ay) = (ax - ctx_, ay - cty);
        num_re += bx * ax + by * ay;
        num_im += bx * ay - by * ax;
        den += bx * bx + by * by;
    }
    if den <= 0.0 {
        return Err(Error::Shape("shape has all points coincident".into()));
    }
    let wr = num_re / den;
    let wi = num_im / den;
    let scale = (wr * wr + wi * wi).sqrt();
    if scale <= 0.0 {
        return Err(Error::Shape("degenerate similarity (zero scale)".into()));
    }
    let rotation = wi.atan2(wr);
    // translation maps the rotated/scaled `from` centroid onto the `to` centroid
    let tx = ctx_ - (wr * cfx - wi * cfy);
    let ty = cty - (wi * cfx + wr * cfy);
    Ok(SimilarityTransform {
        scale,
        rotation,
        translation: (tx, ty),
    })
}

/// Rotates a normalized mean shape into a canonical orientation so that the
/// Procrustes result does not depend on the pose of the input shapes.
fn canonicalize_orientation(mean: &Shape) -> Shape {
    let sxx: f64 = mean.points.iter().map(|(x, y)| x * x - y * y).sum();
    let sxy: f64 = mean.points.iter().map(|(x, y)| 2.0 * x * y).sum();
    let mut shape = mean.clone();
    if sxx.hypot(sxy) > 1e-12 {
        let theta = 0.5 * sxy.atan2(sxx);
        let rot = SimilarityTransform {
            scale: 1.0,
            rotation: -theta,
            translation: (0.0, 0.0),
        };
        shape = rot.apply_shape(&shape);
    }
    // resolve the 180-degree ambiguity with third moments
    let mx: f64 = shape.points.iter().map(|(x, _)| x.powi(3)).sum();
    let my: f64 = shape.points.iter().map(|(_, y)| y.powi(3)).sum();
    let flip = if mx.abs() > 1e-9 {
        mx < 0.0
    } else if my.abs() > 1e-9 {
        my < 0.0
    } else {
        false
    };
    if flip {
        let rot = SimilarityTransform {
            scale: 1.0,
            rotation: std::f64::consts::PI,
            translation: (0.0, 0.0),
        };
        shape = rot.apply_shape(&shape);
    }
    shape
}

/// Generalized Procrustes alignment.
///
/// Iteratively aligns every shape to the running mean by the least-squares
/// similarity transform, re-estimates the mean, and normalizes it to centroid
/// `(0, 0)` and unit RMS radius, until the mean moves less than `1e-8` or 100
/// iterations pass. The converged mean is put in a canonical orientation.
pub fn procrustes_align(shapes: &[Shape]) -> Result<(Vec<Shape>, Shape)> {
    let first = shapes
        .first()
        .ok_or_else(|| Error::Shape("no shapes to align".into()))?;
    let n_points = first.len();
    if n_points < 3 {
        return Err(Error::Shape(format!(
            "need at least 3 landmarks, got {n_points}"
        )));
    }
    for s in shapes {
        if s.len() != n_points {
            return Err(Error::Shape(format!(
                "point count mismatch: {} vs {}",
                s.len(),
                n_points
            )));
        }
    }
    let mut mean = first.normalized()?;
    let mut aligned: Vec<Shape> = Vec::new();
    for _ in 0..100 {
        aligned = shapes
            .iter()
            .map(|s| Ok(align_similarity(s, &mean)?.apply_shape(s)))
            .collect::<Result<_>>()?;
        let mut pts = vec![(0.0, 0.0); n_points];
        for s in &aligned {
            for (acc, &(x, y)) in pts.iter_mut().zip(s.points.iter()) {
                acc.0 += x;
                acc.1 += y;
            }
        }
        let inv = 1.0 / shapes.len() as f64;
        for p in &mut pts {
            p.0 *= inv;
            p.1 *= inv;
        }
        let new_mean = Shape { points: pts }.normalized()?;
        let moved: f64 = new_mean
            .points
            .iter()
            .zip(mean.points.iter())
            .map(|(a, b)| (a.0 - b.0).powi(2) + (a.1 - b.1).powi(2))
            .sum::<f64>()
            .sqrt();
        mean = new_mean;
        if moved < 1e-8 {
            break;
        }
    }
    mean = canonicalize_orientation(&mean);
    let aligned = shapes
        .iter()
        .map(|s| Ok(align_similarity(s, &mean)?.apply_shape(s)))
        .collect::<Result<Vec<_>>>()?;
    Ok((aligned, mean))
}

// ---------------------------------------------------------------------------
// Delaunay triangulation
// ---------------------------------------------------------------------------

/// Index triples into a landmark list, forming a mesh over a reference shape.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Triangulation {
    pub triangles: Vec<[usize; 3]>,
}

fn orient2d(a: (f64, f64), b: (f64, f64), c: (f64, f64)) -> f64 {
    (b.0 - a.0) * (c.1 - a.1) - (b.1 - a.1) * (c.0 - a.0)
}

/// Positive when `d` lies inside the circumcircle of CCW triangle `(a, b, c)`.
fn incircle(a: (f64, f64), b: (f64, f64), c: (f64, f64), d: (f64, f64)) -> f64 {
    let (ax, ay) = (a.0 - d.0, a.1 - d.1);
    let (bx, by) = (b.0 - d.0, b.1 - d.1);
    let (cx, cy) = (c.0 - d.0, c.1 - d.1);
    let a2 = ax * ax + ay * ay;
    let b2 = bx * bx + by * by;
    let c2 = cx * cx + cy * cy;
    ax * (by * c2 - b2 * cy) - ay * (bx * c2 - b2 * cx) + a2 * (bx * cy - by * cx)
}

const COCIRCULAR_EPS: f64 = 1e-9;

/// Delaunay triangulation of the landmarks by Bowyer-Watson insertion.
///
/// Deterministic for fixed input: points are inserted in index order and
/// co-circular ties are resolved by preferring the diagonal that contains the
/// lowest landmark index.
pub fn triangulate(reference: &Shape) -> Result<Triangulation> {
    let n = reference.len();
    if n < 3 {
        return Err(Error::Triangulation(format!(
            "need at least 3 points, got {n}"
        )));
    }
    // scale into a unit box so the predicates run at a consistent magnitude
    let (min_x, min_y, max_x, max_y) = reference.bounding_box();
    let span = (max_x - min_x).max(max_y - min_y);
    if span <= 0.0 {
        return Err(Error::Triangulation("all points coincident".into()));
    }
    let pts: Vec<(f64, f64)> = reference
        .points
        .iter()
        .map(|&(x, y)| ((x - min_x) / span, (y - min_y) / span))
        .collect();

    let collinear = pts
        .iter()
        .all(|&p| orient2d(pts[0], *pts.last().unwrap(), p).abs() < 1e-12)
        && {
            // check against every pair with the first point to be safe
            let mut all = true;
            'outer: for i in 1..n {
                for j in (i + 1)..n {
                    if orient2d(pts[0], pts[i], pts[j]).abs() > 1e-12 {
                        all = false;
                        break 'outer;
                    }
                }
            }
            all
        };
    if collinear {
        return Err(Error::Triangulation("all points collinear".into()));
    }

    // super-triangle well outside the unit box
    let m = 64.0;
    let mut all_pts = pts.clone();
    all_pts.push((-m, -m));
    all_pts.push((m + 1.0, -m));
    all_pts.push((0.5, m + 1.0));
    let (s0, s1, s2) = (n, n + 1, n + 2);

    // triangles stored CCW
    let mut tris: Vec<[usize; 3]> = vec![[s0, s1, s2]];
    for p in 0..n {
        let point = all_pts[p];
        let mut bad: Vec<usize> = Vec::new();
        for (ti, t) in tris.iter().enumerate() {
            if incircle(all_pts[t[0]], all_pts[t[1]], all_pts[t[2]], point) > COCIRCULAR_EPS {
                bad.push(ti);
            }
        }
        // boundary = edges of bad triangles not shared between two bad triangles
        let mut edges: Vec<(usize, usize)> = Vec::new();
        for &ti in &bad {
            let t = tris[ti];
            for k in 0..3 {
                let e = (t[k], t[(k + 1) % 3]);
                // shared edges appear reversed in the neighbor
                if let Some(pos) = edges.iter().position(|&(a, b)| a == e.1 && b == e.0) {
                    edges.remove(pos);
                } else {
                    edges.push(e);
                }
            }
        }
        for i in bad.into_iter().rev() {
            tris.swap_remove(i);
        }
        for (a, b) in edges {
            // keep CCW orientation
            if orient2d(all_pts[a], all_pts[b], point) > 0.0 {
                tris.push([a, b, p]);
            } else {
                tris.push([b, a, p]);
            }
        }
    }
    tris.retain(|t| t.iter().all(|&v| v < n));
    if tris.is_empty() {
        return Err(Error::Triangulation("triangulation came up empty".into()));
    }

    canonical_cocircular_flips(&mut tris, &pts);

    // canonical triangle vertex order (lowest index first, orientation kept)
    // and canonical triangle list order
    for t in &mut tris {
        let min_pos = (0..3).min_by_key(|&i| t[i]).unwrap();
        t.rotate_left(min_pos);
    }
    tris.sort();

    let tri = Triangulation { triangles: tris };
    validate_triangulation(&tri, reference)?;
    Ok(tri)
}

/// For every interior edge whose two triangles are co-circular, select the
/// diagonal containing the lowest landmark index of the quad.
fn canonical_cocircular_flips(tris: &mut Vec<[usize; 3]>, pts: &[(f64, f64)]) {
    for _ in 0..tris.len() * 3 {
        let mut flipped = false;
        'search: for i in 0..tris.len() {
            for j in (i + 1)..tris.len() {
                let (ti, tj) = (tris[i], tris[j]);
                let shared: Vec<usize> =
                    ti.iter().filter(|v| tj.contains(v)).copied().collect();
                if shared.len() != 2 {
                    continue;
                }
                let pi = *ti.iter().find(|v| !shared.contains(v)).unwrap();
                let pj = *tj.iter().find(|v| !shared.contains(v)).unwrap();
                let det = incircle(pts[ti[0]], pts[ti[1]], pts[ti[2]], pts[pj]);
                if det.abs() > COCIRCULAR_EPS {
                    continue;
                }
                // co-circular quad; the quad is convex, so both diagonals work
                let quad_min = shared
                    .iter()
                    .chain([pi, pj].iter())
                    .copied()
                    .min()
                    .unwrap();
                if shared.contains(&quad_min) {
                    continue; // current diagonal already contains the minimum
                }
                // flip to diagonal (pi, pj)
                let t1 = ccw([pi, pj, shared[0]], pts);
                let t2 = ccw([pj, pi, shared[1]], pts);
                tris[i] = t1;
                tris[j] = t2;
                flipped = true;
                break 'search;
            }
        }
        if !flipped {
            break;
        }
    }
}

fn ccw(mut t: [usize; 3], pts: &[(f64, f64)]) -> [usize; 3] {
    if orient2d(pts[t[0]], pts[t[1]], pts[t[2]]) < 0.0 {
        t.swap(1, 2);
    }
    t
}

fn validate_triangulation(tri: &Triangulation, reference: &Shape) -> Result<()> {
    let n = reference.len();
    let mut used = vec![false; n];
    for t in &tri.triangles {
        for &v in t {
            if v >= n {
                return Err(Error::Triangulation(format!("index {v} out of range")));
            }
            used[v] = true;
        }
        let area = orient2d(
            reference.points[t[0]],
            reference.points[t[1]],
            reference.points[t[2]],
        ) / 2.0;
        if area.abs() < 1e-12 * reference.rms_radius().powi(2) {
            return Err(Error::Triangulation(format!(
                "degenerate triangle {t:?} on the reference shape"
            )));
        }
    }
    if let Some(i) = used.iter().position(|u| !u) {
        return Err(Error::Triangulation(format!(
            "landmark {i} appears in no triangle"
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Piecewise-affine warping
// ---------------------------------------------------------------------------

/// Intensities sampled at the fixed reference-frame pixel positions.
#[derive(Debug, Clone, PartialEq)]
pub struct TextureVector {
    pub values: Vec<f64>,
}

/// The fixed sampling domain of a model: integer pixel centers inside the
/// reference mesh, each with its containing triangle and barycentric
/// coordinates precomputed.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct ReferenceFrame {
    pub reference: Shape,
    pub triangulation: Triangulation,
    /// Mask pixel positions `(x, y)` in reference coordinates.
    pub pixels: Vec<(i32, i32)>,
    /// Index into `triangulation.triangles` for every mask pixel.
    pub tri_of: Vec<u32>,
    /// Barycentric coordinates of every mask pixel in its triangle.
    pub bary: Vec<[f64; 3]>,
}

/// Barycentric coordinates of `p` in triangle `(a, b, c)`.
fn barycentric(
    p: (f64, f64),
    a: (f64, f64),
    b: (f64, f64),
    c: (f64, f64),
) -> Option<[f64; 3]> {
    let denom = orient2d(a, b, c);
    if denom.abs() < 1e-12 {
        return None;
    }
    let alpha = orient2d(p, b, c) / denom;
    let beta = orient2d(a, p, c) / denom;
    let gamma = 1.0 - alpha - beta;
    Some([alpha, beta, gamma])
}

impl ReferenceFrame {
    /// Fixes the sampling mask: integer pixel centers inside the mesh of
    /// `reference`, claimed by the lowest-index containing triangle.
    pub fn build(reference: Shape, triangulation: Triangulation) -> Result<Self> {
        validate_triangulation(&triangulation, &reference)?;
        let mut pixels = Vec::new();
        let mut tri_of = Vec::new();
        let mut bary = Vec::new();
        let mut claimed = std::collections::HashMap::new();
        for (ti, t) in triangulation.triangles.iter().enumerate() {
            let a = reference.points[t[0]];
            let b = reference.points[t[1]];
            let c = reference.points[t[2]];
            let min_x = a.0.min(b.0).min(c.0).ceil() as i32;
            let max_x = a.0.max(b.0).max(c.0).floor() as i32;
            let min_y = a.1.min(b.1).min(c.1).ceil() as i32;
            let max_y = a.1.max(b.1).max(c.1).floor() as i32;
            for y in min_y..=max_y {
                for x in min_x..=max_x {
                    if claimed.contains_key(&(x, y)) {
                        continue;
                    }
                    let p = (x as f64, y as f64);
                    if let Some(w) = barycentric(p, a, b, c) {
                        if w.iter().all(|&v| v >= -1e-9) {
                            claimed.insert((x, y), (ti as u32, w));
                        }
                    }
                }
            }
        }
        let mut keys: Vec<(i32, i32)> = claimed.keys().copied().collect();
        keys.sort_by_key(|&(x, y)| (y, x));
        for k in keys {
            let (ti, w) = claimed[&k];
            pixels.push(k);
            tri_of.push(ti);
            bary.push(w);
        }
        if pixels.is_empty() {
            return Err(Error::Triangulation(
                "reference mesh contains no pixel centers".into(),
            ));
        }
        Ok(ReferenceFrame {
            reference,
            triangulation,
            pixels,
            tri_of,
            bary,
        })
    }

    pub fn mask_len(&self) -> usize {
        self.pixels.len()
    }

    /// Maps a mask pixel to image coordinates under `shape`.
    #[inline]
    pub fn map_pixel(&self, k: usize, shape: &Shape) -> (f64, f64) {
        let t = self.triangulation.triangles[self.tri_of[k] as usize];
        let w = self.bary[k];
        let a = shape.points[t[0]];
        let b = shape.points[t[1]];
        let c = shape.points[t[2]];
        (
            w[0] * a.0 + w[1] * b.0 + w[2] * c.0,
            w[0] * a.1 + w[1] * b.1 + w[2] * c.1,
        )
    }

    /// Maps an arbitrary reference-frame point to image coordinates under
    /// `shape`. Points outside the mesh use the nearest triangle's affine map.
    pub fn map_point(&self, p: (f64, f64), shape: &Shape) -> (f64, f64) {
        let tris = &self.triangulation.triangles;
        let mut best: Option<(f64, [f64; 3], usize)> = None;
        for (ti, t) in tris.iter().enumerate() {
            let a = self.reference.points[t[0]];
            let b = self.reference.points[t[1]];
            let c = self.reference.points[t[2]];
            if let Some(w) = barycentric(p, a, b, c) {
                let neg = w.iter().map(|v| (-v).max(0.0)).sum::<f64>();
                if neg == 0.0 {
                    best = Some((0.0, w, ti));
                    break;
                }
                match best {
                    Some((bn, _, _)) if bn <= neg => {}
                    _ => best = Some((neg, w, ti)),
                }
            }
        }
        let (_, w, ti) = best.expect("triangulation validated non-degenerate");
        let t = tris[ti];
        let a = shape.points[t[0]];
        let b = shape.points[t[1]];
        let c = shape.points[t[2]];
        (
            w[0] * a.0 + w[1] * b.0 + w[2] * c.0,
            w[0] * a.1 + w[1] * b.1 + w[2] * c.1,
        )
    }
}

/// Samples `img` at every mask pixel of `frame` warped through `shape`,
/// producing a shape-normalized texture. Out-of-bounds samples clamp.
pub fn warp_to_reference(img: &Image, shape: &Shape, frame: &ReferenceFrame) -> Result<TextureVector> {
    if shape.len() != frame.reference.len() {
        return Err(Error::Shape(format!(
            "shape has {} landmarks, reference has {}",
            shape.len(),
            frame.reference.len()
        )));
    }
    let mut values = Vec::with_capacity(frame.mask_len());
    for k in 0..frame.mask_len() {
        let (x, y) = frame.map_pixel(k, shape);
        values.push(img.sample_bilinear(x, y) as f64);
    }
    Ok(TextureVector { values })
}

/// Convenience wrapper that builds the reference frame on the fly.
pub fn warp_to_reference_with(
    img: &Image,
    shape: &Shape,
    reference: &Shape,
    tri: &Triangulation,
) -> Result<TextureVector> {
    let frame = ReferenceFrame::build(reference.clone(), tri.clone())?;
    warp_to_reference(img, shape, &frame)
}

// ---------------------------------------------------------------------------
// Landmark (pts) files
// ---------------------------------------------------------------------------

/// Reads a plain-text landmark file: a `n_points: K` header then `K` lines
/// of `x y` in frame pixel coordinates.
pub fn load_pts(path: &std::path::Path) -> Result<Shape> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_pts(&text).map_err(|e| match e {
        Error::Shape(msg) => Error::Shape(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse_pts(text: &str) -> Result<Shape> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::Shape("empty pts file".into()))?;
    let count: usize = header
        .trim()
        .strip_prefix("n_points:")
        .map(str::trim)
        .ok_or_else(|| Error::Shape(format!("bad pts header '{header}'")))?
        .parse()
        .map_err(|_| Error::Shape(format!("bad pts header '{header}'")))?;
    let mut points = Vec::with_capacity(count);
    for line in lines {
        let mut it = line.split_whitespace();
        let x: f64 = it
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::Shape(format!("bad pts line '{line}'")))?;
        let y: f64 = it
            .next()
            .and_then(|t| t.parse().ok())
            .ok_or_else(|| Error::Shape(format!("bad pts line '{line}'")))?;
        points.push((x, y));
    }
    if points.len() != count {
        return Err(Error::Shape(format!(
            "pts file declares {count} points but has {}",
            points.len()
        )));
    }
    Shape::new(points)
}

pub fn save_pts(shape: &Shape, path: &std::path::Path) -> Result<()> {
    let mut out = format!("n_points: {}\n", shape.len());
    for &(x, y) in shape.points() {
        out.push_str(&format!("{x:.6} {y:.6}\n"));
    }
    std::fs::write(path, out).map_err(|e| Error::io(path, e))
}
