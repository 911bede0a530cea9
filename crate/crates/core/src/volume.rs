//! Dense volumes on the voxel grid and the edge convention shared by every
//! algorithm in the crate.
//!
//! Voxels are stored in C order (x fastest, z slowest). An edge volume holds
//! three channels, one per axis; channel `c` at voxel `v` is the edge between
//! `v` and its predecessor along axis `c`. Entries whose predecessor lies
//! outside the volume are inert.

use std::fmt;

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Shape3 {
    pub z: usize,
    pub y: usize,
    pub x: usize,
}

impl fmt::Display for Shape3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}x{}", self.z, self.y, self.x)
    }
}

impl Shape3 {
    pub fn new(z: usize, y: usize, x: usize) -> Result<Self> {
        if z == 0 || y == 0 || x == 0 {
            return Err(Error::InvalidShape([z, y, x]));
        }
        z.checked_mul(y)
            .and_then(|zy| zy.checked_mul(x))
            .and_then(|n| n.checked_mul(3))
            .ok_or(Error::InvalidShape([z, y, x]))?;
        Ok(Shape3 { z, y, x })
    }

    pub fn dims(&self) -> [usize; 3] {
        [self.z, self.y, self.x]
    }

    /// Number of voxels.
    pub fn len(&self) -> usize {
        self.z * self.y * self.x
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, z: usize, y: usize, x: usize) -> usize {
        (z * self.y + y) * self.x + x
    }

    #[inline]
    pub fn coords(&self, index: usize) -> [usize; 3] {
        let x = index % self.x;
        let rest = index / self.x;
        [rest / self.y, rest % self.y, x]
    }

    /// Linear offset between a voxel and its successor along `axis`.
    #[inline]
    pub fn stride(&self, axis: Axis) -> usize {
        match axis {
            Axis::Z => self.y * self.x,
            Axis::Y => self.x,
            Axis::X => 1,
        }
    }

    /// The neighbor preceding `voxel` along `axis`, if inside the volume.
    #[inline]
    pub fn predecessor(&self, voxel: usize, axis: Axis) -> Option<usize> {
        let c = self.coords(voxel)[axis.channel()];
        (c > 0).then(|| voxel - self.stride(axis))
    }

    /// Number of in-bounds 6-connected edges.
    pub fn edge_count(&self) -> usize {
        let [z, y, x] = self.dims();
        (z - 1) * y * x + z * (y - 1) * x + z * y * (x - 1)
    }

    /// Iterates all in-bounds edges as `(edge, predecessor, voxel)` in
    /// ascending [`EdgeId::flat`] order.
    pub fn edges(&self) -> impl Iterator<Item = (EdgeId, usize, usize)> + '_ {
        Axis::ALL.into_iter().flat_map(move |axis| {
            (0..self.len()).filter_map(move |voxel| {
                self.predecessor(voxel, axis)
                    .map(|pred| (EdgeId { voxel, axis }, pred, voxel))
            })
        })
    }

    /// Calls `f(voxel, neighbor, edge_flat_index)` for each in-bounds edge
    /// incident to `voxel` (up to six).
    #[inline]
    pub(crate) fn for_each_incident(&self, voxel: usize, mut f: impl FnMut(usize, usize)) {
        let n = self.len();
        let c = self.coords(voxel);
        for axis in Axis::ALL {
            let a = axis.channel();
            let stride = self.stride(axis);
            if c[a] > 0 {
                f(voxel - stride, a * n + voxel);
            }
            if c[a] + 1 < self.dims()[a] {
                f(voxel + stride, a * n + voxel + stride);
            }
        }
    }

    fn check(&self, other: Shape3) -> Result<()> {
        if *self == other {
            Ok(())
        } else {
            Err(Error::ShapeMismatch { left: *self, right: other })
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Axis {
    Z = 0,
    Y = 1,
    X = 2,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::Z, Axis::Y, Axis::X];

    pub fn channel(self) -> usize {
        self as usize
    }

    pub fn from_channel(channel: usize) -> Option<Axis> {
        Axis::ALL.get(channel).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::Z => "z",
            Axis::Y => "y",
            Axis::X => "x",
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One stored edge entry: a voxel and the axis towards its predecessor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EdgeId {
    pub voxel: usize,
    pub axis: Axis,
}

impl EdgeId {
    pub fn new(voxel: usize, axis: Axis) -> Self {
        EdgeId { voxel, axis }
    }

    /// Index into the channel-major edge storage (`axis * voxels + voxel`).
    /// Edge ordering used for tie-breaking follows this index.
    pub fn flat(&self, shape: Shape3) -> usize {
        self.axis.channel() * shape.len() + self.voxel
    }

    pub fn from_flat(flat: usize, shape: Shape3) -> Option<EdgeId> {
        let n = shape.len();
        let axis = Axis::from_channel(flat / n)?;
        Some(EdgeId { voxel: flat % n, axis })
    }

    pub fn is_valid(&self, shape: Shape3) -> bool {
        self.voxel < shape.len() && shape.predecessor(self.voxel, self.axis).is_some()
    }
}

/// The two voxels (as `[z, y, x]`) joined by `edge`, predecessor first.
pub fn edge_endpoints(edge: EdgeId, shape: Shape3) -> Result<([usize; 3], [usize; 3])> {
    let out_of_bounds = || Error::EdgeOutOfBounds {
        voxel: if edge.voxel < shape.len() {
            shape.coords(edge.voxel)
        } else {
            [usize::MAX; 3]
        },
        axis: edge.axis.name(),
        shape,
    };
    if edge.voxel >= shape.len() {
        return Err(out_of_bounds());
    }
    let pred = shape.predecessor(edge.voxel, edge.axis).ok_or_else(out_of_bounds)?;
    Ok((shape.coords(pred), shape.coords(edge.voxel)))
}

/// Voxel-wise labels; 0 is background.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelVolume {
    shape: Shape3,
    data: Vec<u64>,
}

impl LabelVolume {
    pub fn new(shape: Shape3, data: Vec<u64>) -> Result<Self> {
        if data.len() != shape.len() {
            return Err(Error::DataLength { shape, expected: shape.len(), found: data.len() });
        }
        Ok(LabelVolume { shape, data })
    }

    pub fn zeros(shape: Shape3) -> Self {
        LabelVolume { shape, data: vec![0; shape.len()] }
    }

    pub fn shape(&self) -> Shape3 {
        self.shape
    }

    pub fn data(&self) -> &[u64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<u64> {
        self.data
    }

    pub fn get(&self, z: usize, y: usize, x: usize) -> u64 {
        self.data[self.shape.index(z, y, x)]
    }

    pub fn check_shape(&self, other: Shape3) -> Result<()> {
        self.shape.check(other)
    }

    /// Distinct nonzero labels in ascending order.
    pub fn labels(&self) -> Vec<u64> {
        let mut labels: Vec<u64> = self.data.iter().copied().filter(|&l| l != 0).collect();
        labels.sort_unstable();
        labels.dedup();
        labels
    }
}

/// Three channels of per-edge values with no range constraint (gradients).
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeVolume<F> {
    shape: Shape3,
    data: Vec<F>,
}

impl<F: Real> EdgeVolume<F> {
    pub fn new(shape: Shape3, data: Vec<F>) -> Result<Self> {
        if data.len() != 3 * shape.len() {
            return Err(Error::DataLength { shape, expected: 3 * shape.len(), found: data.len() });
        }
        Ok(EdgeVolume { shape, data })
    }

    pub fn zeros(shape: Shape3) -> Self {
        EdgeVolume { shape, data: vec![F::zero(); 3 * shape.len()] }
    }

    pub fn shape(&self) -> Shape3 {
        self.shape
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn get(&self, edge: EdgeId) -> F {
        self.data[edge.flat(self.shape)]
    }

    pub fn channel(&self, axis: Axis) -> &[F] {
        let n = self.shape.len();
        &self.data[axis.channel() * n..(axis.channel() + 1) * n]
    }

    /// Converts every entry to another scalar type.
    pub fn cast<G: Real>(&self) -> EdgeVolume<G> {
        EdgeVolume {
            shape: self.shape,
            data: self.data.iter().map(|&v| G::from_f64_lossy(v.as_f64())).collect(),
        }
    }
}

/// Predicted affinities, every entry in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffinityVolume<F>(EdgeVolume<F>);

impl<F: Real> AffinityVolume<F> {
    pub fn new(shape: Shape3, data: Vec<F>) -> Result<Self> {
        let edges = EdgeVolume::new(shape, data)?;
        Self::from_edges(edges)
    }

    pub fn from_edges(edges: EdgeVolume<F>) -> Result<Self> {
        if let Some((index, value)) =
            edges.data.iter().enumerate().find(|(_, &v)| !(v >= F::zero() && v <= F::one()))
        {
            return Err(Error::AffinityOutOfRange { index, value: value.as_f64() });
        }
        Ok(AffinityVolume(edges))
    }

    /// Builds a volume by evaluating `f(edge, predecessor, voxel)` on every
    /// in-bounds edge; face entries are zero.
    pub fn from_fn(shape: Shape3, mut f: impl FnMut(EdgeId, usize, usize) -> F) -> Result<Self> {
        let mut data = vec![F::zero(); 3 * shape.len()];
        for (edge, u, v) in shape.edges() {
            data[edge.flat(shape)] = f(edge, u, v);
        }
        Self::new(shape, data)
    }

    pub fn constant(shape: Shape3, value: F) -> Result<Self> {
        Self::from_fn(shape, |_, _, _| value)
    }

    pub fn shape(&self) -> Shape3 {
        self.0.shape
    }

    pub fn data(&self) -> &[F] {
        &self.0.data
    }

    pub fn get(&self, edge: EdgeId) -> F {
        self.0.get(edge)
    }

    pub fn channel(&self, axis: Axis) -> &[F] {
        self.0.channel(axis)
    }

    pub fn as_edges(&self) -> &EdgeVolume<F> {
        &self.0
    }

    pub fn into_edges(self) -> EdgeVolume<F> {
        self.0
    }

    pub fn check_shape(&self, other: Shape3) -> Result<()> {
        self.0.shape.check(other)
    }

    pub fn cast<G: Real>(&self) -> AffinityVolume<G> {
        AffinityVolume(self.0.cast())
    }
}
