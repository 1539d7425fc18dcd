//! Spatial embeddings from geo-located point features.
//!
//! Around each risk location we span a regular `q x q` grid, attach to every
//! cell the feature vector of its nearest source point (a Voronoi-style
//! stand-in for polygon base territories, with a distance cutoff), and stack
//! the result into a `q x q x p` data cuboid. A convolutional autoencoder
//! trained over the cuboids yields the spatial embedding; a mask channel
//! (on by default) lets the encoder tell "no data within the cutoff" apart
//! from a zero-valued feature.
//!
//! Coordinates are planar; project before loading.

use std::fmt::Write as _;

use crate::autoencode::{conv_ae_fit, AutoencoderSpec, ConvAeSpec, ConvStage};
use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::evaluate::cosine;
use crate::nn::{Activation, Network, TrainConfig};
use crate::serial::{fmt_f64, parse_f64};
use crate::tensor::Tensor;

/// One geo-located observation: planar coordinates plus its feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct GeoPoint {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub features: Vec<f64>,
}

/// A point pattern with per-point features of a common length.
#[derive(Debug, Clone, PartialEq)]
pub struct GeoPointSet {
    points: Vec<GeoPoint>,
    feature_names: Vec<String>,
}

impl GeoPointSet {
    pub fn new(points: Vec<GeoPoint>, feature_names: Vec<String>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::argument("point set must not be empty"));
        }
        let p = feature_names.len();
        for (i, pt) in points.iter().enumerate() {
            if pt.features.len() != p {
                return Err(Error::shape(format!(
                    "point {:?} has {} features, expected {p}",
                    pt.id,
                    pt.features.len()
                )));
            }
            if !pt.x.is_finite() || !pt.y.is_finite() {
                return Err(Error::domain(format!("point {:?} has non-finite coordinates", pt.id)));
            }
            if points[..i].iter().any(|other| other.id == pt.id) {
                return Err(Error::argument(format!("duplicate point id {:?}", pt.id)));
            }
        }
        Ok(GeoPointSet { points, feature_names })
    }

    pub fn points(&self) -> &[GeoPoint] {
        &self.points
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_names.len()
    }

    /// Bounding-box diagonal / 64: the default grid spacing for a dataset.
    pub fn default_spacing(&self) -> f64 {
        let (mut xmin, mut xmax) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY);
        for pt in &self.points {
            xmin = xmin.min(pt.x);
            xmax = xmax.max(pt.x);
            ymin = ymin.min(pt.y);
            ymax = ymax.max(pt.y);
        }
        let diag = ((xmax - xmin).powi(2) + (ymax - ymin).powi(2)).sqrt();
        if diag > 0.0 {
            diag / 64.0
        } else {
            1.0
        }
    }

    /// CSV with header `id,x,y,f1,...,fp`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,x,y");
        for name in &self.feature_names {
            let _ = write!(out, ",{name}");
        }
        out.push('\n');
        for pt in &self.points {
            let _ = write!(out, "{},{},{}", pt.id, fmt_f64(pt.x), fmt_f64(pt.y));
            for f in &pt.features {
                let _ = write!(out, ",{}", fmt_f64(*f));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (hln, header) = lines.next().ok_or_else(|| Error::parse(1, "empty geo file"))?;
        let columns: Vec<&str> = header.trim().split(',').collect();
        if columns.len() < 3 || columns[0] != "id" || columns[1] != "x" || columns[2] != "y" {
            return Err(Error::parse(hln, "header must start with id,x,y"));
        }
        let feature_names: Vec<String> = columns[3..].iter().map(|s| (*s).to_owned()).collect();
        let p = feature_names.len();
        let mut points = Vec::new();
        for (ln, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.trim().split(',').collect();
            if fields.len() != 3 + p {
                return Err(Error::parse(ln, format!("expected {} fields, got {}", 3 + p, fields.len())));
            }
            points.push(GeoPoint {
                id: fields[0].to_owned(),
                x: parse_f64(fields[1], ln)?,
                y: parse_f64(fields[2], ln)?,
                features: fields[3..].iter().map(|t| parse_f64(t, ln)).collect::<Result<_>>()?,
            });
        }
        GeoPointSet::new(points, feature_names)
    }
}

/// A regular odd-sided lattice of cell coordinates centered on a risk
/// location. Cell `(i, j)` sits at `center + ((i - (q-1)/2), (j - (q-1)/2)) * spacing`.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborGrid {
    pub center: (f64, f64),
    pub q: usize,
    pub spacing: f64,
    cells: Vec<(f64, f64)>,
}

impl NeighborGrid {
    /// Cells in row-major order, `q * q` of them.
    pub fn cells(&self) -> &[(f64, f64)] {
        &self.cells
    }
}

/// Spans the `q x q` grid around a center. `q` must be odd so the center is
/// itself a cell.
pub fn span_grid(center: (f64, f64), q: usize, spacing: f64) -> Result<NeighborGrid> {
    if q == 0 || q % 2 == 0 {
        return Err(Error::argument(format!("grid side must be odd and positive, got {q}")));
    }
    if !spacing.is_finite() || spacing <= 0.0 {
        return Err(Error::argument(format!("grid spacing must be positive, got {spacing}")));
    }
    let half = (q as isize - 1) / 2;
    let mut cells = Vec::with_capacity(q * q);
    for i in 0..q as isize {
        for j in 0..q as isize {
            cells.push((
                center.0 + (i - half) as f64 * spacing,
                center.1 + (j - half) as f64 * spacing,
            ));
        }
    }
    Ok(NeighborGrid { center, q, spacing, cells })
}

/// A `q x q x c` feature grid around one risk location. With the mask channel
/// enabled, channel `p` (the last) is 1 where a source supplied features and
/// 0 where the cell fell outside the cutoff.
#[derive(Debug, Clone, PartialEq)]
pub struct DataCuboid {
    pub values: Tensor,
    pub source_id: String,
}

/// Fills a grid's cells from the nearest source point (Euclidean distance,
/// ties to the lexicographically lowest id). Cells farther than `cutoff` from
/// every source get zero features and, when enabled, mask 0.
pub fn attach_features(
    grid: &NeighborGrid,
    pts: &GeoPointSet,
    cutoff: f64,
    mask_channel: bool,
    source_id: impl Into<String>,
) -> Result<DataCuboid> {
    if !cutoff.is_finite() || cutoff < 0.0 {
        return Err(Error::argument(format!("cutoff must be non-negative, got {cutoff}")));
    }
    let p = pts.feature_dim();
    let channels = p + usize::from(mask_channel);
    let q = grid.q;
    let mut values = vec![0.0; q * q * channels];
    for (cell_idx, &(cx, cy)) in grid.cells().iter().enumerate() {
        let mut best: Option<(&GeoPoint, f64)> = None;
        for pt in pts.points() {
            let d2 = (pt.x - cx).powi(2) + (pt.y - cy).powi(2);
            best = match best {
                None => Some((pt, d2)),
                Some((bpt, bd2)) => {
                    if d2 < bd2 || (d2 == bd2 && pt.id < bpt.id) {
                        Some((pt, d2))
                    } else {
                        Some((bpt, bd2))
                    }
                }
            };
        }
        let (pt, d2) = best.expect("point set is non-empty");
        if d2.sqrt() <= cutoff {
            let base = cell_idx * channels;
            values[base..base + p].copy_from_slice(&pt.features);
            if mask_channel {
                values[base + p] = 1.0;
            }
        }
    }
    Ok(DataCuboid {
        values: Tensor::new(vec![q, q, channels], values)?,
        source_id: source_id.into(),
    })
}

/// Standardizes every channel to mean 0 / population stddev 1 across all
/// cells of all cuboids (constant channels become zeros with stddev recorded
/// as 1). Returns the rescaled cuboids and the per-channel statistics.
pub fn standardize_cuboids(cuboids: &[DataCuboid]) -> Result<(Vec<DataCuboid>, Vec<f64>, Vec<f64>)> {
    if cuboids.is_empty() {
        return Err(Error::argument("no cuboids to standardize"));
    }
    let shape = cuboids[0].values.shape().to_vec();
    if cuboids.iter().any(|c| c.values.shape() != shape) {
        return Err(Error::shape("cuboids must share one shape"));
    }
    let channels = shape[2];
    let cells_per = shape[0] * shape[1];
    let total = (cells_per * cuboids.len()) as f64;

    let mut means = vec![0.0; channels];
    for cuboid in cuboids {
        for (idx, v) in cuboid.values.data().iter().enumerate() {
            means[idx % channels] += v;
        }
    }
    for m in &mut means {
        *m /= total;
    }
    let mut stds = vec![0.0; channels];
    for cuboid in cuboids {
        for (idx, v) in cuboid.values.data().iter().enumerate() {
            let d = v - means[idx % channels];
            stds[idx % channels] += d * d;
        }
    }
    for s in &mut stds {
        *s = (*s / total).sqrt();
        if *s == 0.0 {
            *s = 1.0;
        }
    }
    let rescaled = cuboids
        .iter()
        .map(|cuboid| {
            let data: Vec<f64> = cuboid
                .values
                .data()
                .iter()
                .enumerate()
                .map(|(idx, v)| (v - means[idx % channels]) / stds[idx % channels])
                .collect();
            Ok(DataCuboid {
                values: Tensor::new(shape.clone(), data)?,
                source_id: cuboid.source_id.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((rescaled, means, stds))
}

/// Default encoder stages for cuboid autoencoders: two 3x3 convolutions of 8
/// channels each, no pooling (grids are small and usually odd-sided).
pub fn default_crae_stages() -> Vec<ConvStage> {
    vec![
        ConvStage { filter_size: 3, filters: 8, pool: false },
        ConvStage { filter_size: 3, filters: 8, pool: false },
    ]
}

/// Trains the regional convolutional autoencoder over (already standardized)
/// cuboids and returns the encoder plus the per-epoch loss history.
pub fn crae_fit(
    cuboids: &[DataCuboid],
    bottleneck: usize,
    stages: &[ConvStage],
    cfg: &TrainConfig,
) -> Result<(Network, Vec<f64>)> {
    if cuboids.is_empty() {
        return Err(Error::argument("crae_fit: no cuboids"));
    }
    let shape = cuboids[0].values.shape();
    if cuboids.iter().any(|c| c.values.shape() != shape) {
        return Err(Error::shape("cuboids must share one shape"));
    }
    let spec = AutoencoderSpec::Conv(ConvAeSpec {
        input_shape: [shape[0], shape[1], shape[2]],
        stages: stages.to_vec(),
        bottleneck,
        activation: Activation::Tanh,
        output_activation: Activation::Identity,
    });
    let grids: Vec<Tensor> = cuboids.iter().map(|c| c.values.clone()).collect();
    let (encoder, _, history) = conv_ae_fit(&grids, &spec, cfg)?;
    Ok((encoder, history))
}

/// Embedding of one cuboid under a trained encoder.
pub fn crae_embed(encoder: &Network, cuboid: &DataCuboid) -> Result<Vec<f64>> {
    let emb = encoder.extract_embedding(encoder.layers().len() - 1, &cuboid.values)?;
    Ok(emb.data().to_vec())
}

/// Spatial smoothness of an embedding field: the mean, over all points, of
/// the mean cosine similarity between a point's embedding and those of its
/// `k` spatially nearest neighbors. Higher is smoother; identical embeddings
/// score exactly 1.
pub fn smoothness_score(table: &EmbeddingTable, coords: &[(f64, f64)], k: usize) -> Result<f64> {
    let n = table.len();
    if coords.len() != n {
        return Err(Error::argument(format!("{} coordinates for {n} embeddings", coords.len())));
    }
    if k == 0 || k >= n {
        return Err(Error::argument(format!("neighbor count {k} out of range 1..{n}")));
    }
    let rows: Vec<&[f64]> = table.iter().map(|(_, row)| row).collect();
    let ids = table.ids();
    let mut total = 0.0;
    for i in 0..n {
        let mut by_distance: Vec<(usize, f64)> = (0..n)
            .filter(|&j| j != i)
            .map(|j| {
                let d2 = (coords[i].0 - coords[j].0).powi(2) + (coords[i].1 - coords[j].1).powi(2);
                (j, d2)
            })
            .collect();
        by_distance.sort_by(|(ja, da), (jb, db)| da.partial_cmp(db).unwrap().then(ja.cmp(jb)));
        let mut acc = 0.0;
        for &(j, _) in by_distance.iter().take(k) {
            acc += cosine(rows[i], rows[j])
                .map_err(|e| Error::domain(format!("embedding {:?} or {:?}: {e}", ids[i], ids[j])))?;
        }
        total += acc / k as f64;
    }
    Ok(total / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simple_points() -> GeoPointSet {
        GeoPointSet::new(
            vec![
                GeoPoint { id: "a".into(), x: -1.0, y: 0.0, features: vec![1.0, 10.0] },
                GeoPoint { id: "b".into(), x: 1.0, y: 0.0, features: vec![2.0, 20.0] },
            ],
            vec!["f1".into(), "f2".into()],
        )
        .unwrap()
    }

    #[test]
    fn grid_of_one_is_the_center() {
        let g = span_grid((2.5, -3.0), 1, 0.7).unwrap();
        assert_eq!(g.cells(), &[(2.5, -3.0)]);
    }

    #[test]
    fn grid_enumeration_oracle() {
        let g = span_grid((0.0, 0.0), 3, 1.0).unwrap();
        assert_eq!(g.cells().len(), 9);
        assert_eq!(g.cells()[0], (-1.0, -1.0));
        assert_eq!(g.cells()[4], (0.0, 0.0));
        assert_eq!(g.cells()[8], (1.0, 1.0));
    }

    #[test]
    fn grid_size_is_q_squared_and_even_q_rejected() {
        for q in [1usize, 3, 5, 7] {
            assert_eq!(span_grid((0.0, 0.0), q, 0.5).unwrap().cells().len(), q * q);
        }
        assert!(span_grid((0.0, 0.0), 4, 0.5).is_err());
        assert!(span_grid((0.0, 0.0), 3, 0.0).is_err());
    }

    #[test]
    fn single_source_fills_every_cell_within_cutoff() {
        let pts = GeoPointSet::new(
            vec![GeoPoint { id: "only".into(), x: 0.0, y: 0.0, features: vec![3.0] }],
            vec!["f".into()],
        )
        .unwrap();
        let grid = span_grid((0.0, 0.0), 3, 1.0).unwrap();
        let cuboid = attach_features(&grid, &pts, 100.0, true, "only").unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(cuboid.values.at3(i, j, 0), 3.0);
                assert_eq!(cuboid.values.at3(i, j, 1), 1.0);
            }
        }
    }

    #[test]
    fn two_sources_split_along_the_bisector() {
        let pts = simple_points();
        let grid = span_grid((0.0, 0.0), 5, 0.5).unwrap();
        let cuboid = attach_features(&grid, &pts, 100.0, false, "c").unwrap();
        for (idx, &(cx, _)) in grid.cells().iter().enumerate() {
            let (i, j) = (idx / 5, idx % 5);
            let expected = if cx < 0.0 {
                1.0
            } else if cx > 0.0 {
                2.0
            } else {
                1.0 // on the bisector both are equidistant; "a" < "b"
            };
            assert_eq!(cuboid.values.at3(i, j, 0), expected, "cell ({i},{j}) at x={cx}");
        }
    }

    #[test]
    fn zero_cutoff_yields_empty_mask() {
        let pts = simple_points();
        let grid = span_grid((10.0, 10.0), 3, 1.0).unwrap();
        let cuboid = attach_features(&grid, &pts, 0.0, true, "c").unwrap();
        assert!(cuboid.values.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn standardize_cuboids_centers_each_channel() {
        let pts = simple_points();
        let grid_a = span_grid((-1.0, 0.0), 3, 0.25).unwrap();
        let grid_b = span_grid((1.0, 0.0), 3, 0.25).unwrap();
        let cuboids = vec![
            attach_features(&grid_a, &pts, 10.0, true, "a").unwrap(),
            attach_features(&grid_b, &pts, 10.0, true, "b").unwrap(),
        ];
        let (rescaled, _, _) = standardize_cuboids(&cuboids).unwrap();
        let channels = rescaled[0].values.shape()[2];
        for ch in 0..channels {
            let mut mean = 0.0;
            let mut count = 0.0;
            for c in &rescaled {
                for (idx, v) in c.values.data().iter().enumerate() {
                    if idx % channels == ch {
                        mean += v;
                        count += 1.0;
                    }
                }
            }
            assert!((mean / count).abs() < 1e-8, "channel {ch}");
        }
    }

    #[test]
    fn identical_embeddings_have_smoothness_one() {
        let mut table = EmbeddingTable::new(3).unwrap();
        let coords: Vec<(f64, f64)> = (0..6).map(|i| (i as f64, 0.0)).collect();
        for i in 0..6 {
            table.insert(format!("p{i}"), vec![0.5, -1.0, 2.0]).unwrap();
        }
        let score = smoothness_score(&table, &coords, 2).unwrap();
        assert!((score - 1.0).abs() < 1e-12);
    }

    #[test]
    fn geo_csv_roundtrip() {
        let pts = simple_points();
        let text = pts.to_csv();
        let back = GeoPointSet::from_csv(&text).unwrap();
        assert_eq!(pts, back);
    }

    #[test]
    fn geo_csv_bad_row_reports_line() {
        let err = GeoPointSet::from_csv("id,x,y,f\np1,0.0,0.0,1.0\np2,0.0,oops,1.0\n").unwrap_err();
        assert!(err.to_string().contains("line 3"), "{err}");
    }
}
