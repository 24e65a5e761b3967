//! Structured box mesh and the 1-D element ordering used for partitioning.
//!
//! The domain is a single axis-aligned box cut into a regular grid of
//! hexahedral elements. Partitioning works on a one-dimensional ordering of
//! those elements; contiguous runs of the ordering become per-rank slabs, so
//! the ordering is built by recursive coordinate bisection to keep runs
//! spatially compact.

use crate::error::{Error, Result};

/// 1-based index of an element in the global 1-D ordering.
///
/// Valid values are `1..=nelgt`. Position in the ordering and index coincide
/// once `order_elements` has run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GlobalElementIndex(pub u32);

impl GlobalElementIndex {
    #[inline]
    pub fn get(self) -> u32 {
        self.0
    }

    /// 0-based position in the ordering.
    #[inline]
    pub fn pos(self) -> usize {
        (self.0 - 1) as usize
    }
}

impl std::fmt::Display for GlobalElementIndex {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.0.fmt(f)
    }
}

/// Regular hexahedral mesh over one axis-aligned box.
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    pub extent_lo: [f64; 3],
    pub extent_hi: [f64; 3],
    pub elems_per_axis: [usize; 3],
    /// Grid points per axis within each element (>= 2).
    pub n_per_axis: usize,
    /// ordering[p] = (i, j, k) cell occupying 1-D position p.
    ordering: Vec<[usize; 3]>,
    /// Inverse permutation: raster cell index -> 0-based ordering position.
    position_of: Vec<u32>,
}

impl Mesh {
    /// Total number of elements.
    #[inline]
    pub fn nelgt(&self) -> usize {
        self.elems_per_axis[0] * self.elems_per_axis[1] * self.elems_per_axis[2]
    }

    /// Cell width along each axis.
    pub fn cell_widths(&self) -> [f64; 3] {
        let mut w = [0.0; 3];
        for a in 0..3 {
            w[a] = (self.extent_hi[a] - self.extent_lo[a]) / self.elems_per_axis[a] as f64;
        }
        w
    }

    #[inline]
    fn raster_index(&self, cell: [usize; 3]) -> usize {
        cell[0] + self.elems_per_axis[0] * (cell[1] + self.elems_per_axis[1] * cell[2])
    }

    /// Structured (i, j, k) cell occupying ordering position `id`.
    pub fn cell_of(&self, id: GlobalElementIndex) -> [usize; 3] {
        self.ordering[id.pos()]
    }

    /// Index of the element covering `cell`.
    pub fn id_of_cell(&self, cell: [usize; 3]) -> GlobalElementIndex {
        GlobalElementIndex(self.position_of[self.raster_index(cell)] + 1)
    }

    /// Lower corner of an element's box.
    pub fn cell_lo(&self, id: GlobalElementIndex) -> [f64; 3] {
        let cell = self.cell_of(id);
        let w = self.cell_widths();
        let mut lo = [0.0; 3];
        for a in 0..3 {
            lo[a] = self.extent_lo[a] + cell[a] as f64 * w[a];
        }
        lo
    }

    /// Center point of an element's box.
    pub fn cell_center(&self, id: GlobalElementIndex) -> [f64; 3] {
        let cell = self.cell_of(id);
        let w = self.cell_widths();
        let mut c = [0.0; 3];
        for a in 0..3 {
            c[a] = self.extent_lo[a] + (cell[a] as f64 + 0.5) * w[a];
        }
        c
    }

    /// True if `point` lies within the closed domain box.
    pub fn contains(&self, point: [f64; 3]) -> bool {
        (0..3).all(|a| point[a] >= self.extent_lo[a] && point[a] <= self.extent_hi[a])
    }

    /// Clamp a point into the closed domain box.
    pub fn clamp(&self, point: [f64; 3]) -> [f64; 3] {
        let mut p = point;
        for a in 0..3 {
            p[a] = p[a].clamp(self.extent_lo[a], self.extent_hi[a]);
        }
        p
    }

    /// The full ordering as cells, for inspection and tests.
    pub fn ordering(&self) -> &[[usize; 3]] {
        &self.ordering
    }
}

/// Build a mesh with the identity (raster, x-fastest) ordering.
///
/// `order_elements` replaces the ordering with the bisection one; callers that
/// only need binning can use the mesh as built.
pub fn build_mesh(
    extent_lo: [f64; 3],
    extent_hi: [f64; 3],
    elems_per_axis: [usize; 3],
    n_per_axis: usize,
) -> Result<Mesh> {
    for a in 0..3 {
        if elems_per_axis[a] == 0 {
            return Err(Error::invalid(format!(
                "elems_per_axis[{a}] must be >= 1, got 0"
            )));
        }
        if !(extent_hi[a] > extent_lo[a]) {
            return Err(Error::invalid(format!(
                "extent_hi[{a}] = {} must exceed extent_lo[{a}] = {}",
                extent_hi[a], extent_lo[a]
            )));
        }
    }
    if n_per_axis < 2 {
        return Err(Error::invalid(format!(
            "n_per_axis must be >= 2, got {n_per_axis}"
        )));
    }
    let nelgt = elems_per_axis[0] * elems_per_axis[1] * elems_per_axis[2];
    let mut ordering = Vec::with_capacity(nelgt);
    for k in 0..elems_per_axis[2] {
        for j in 0..elems_per_axis[1] {
            for i in 0..elems_per_axis[0] {
                ordering.push([i, j, k]);
            }
        }
    }
    let mut mesh = Mesh {
        extent_lo,
        extent_hi,
        elems_per_axis,
        n_per_axis,
        ordering,
        position_of: Vec::new(),
    };
    rebuild_inverse(&mut mesh);
    Ok(mesh)
}

fn rebuild_inverse(mesh: &mut Mesh) {
    let mut inv = vec![0u32; mesh.nelgt()];
    for (pos, cell) in mesh.ordering.iter().enumerate() {
        inv[cell[0] + mesh.elems_per_axis[0] * (cell[1] + mesh.elems_per_axis[1] * cell[2])] =
            pos as u32;
    }
    mesh.position_of = inv;
}

/// Replace the ordering with a recursive-coordinate-bisection one.
///
/// Each cell box splits along its longest axis (ties broken x, y, z), the left
/// half taking the ceiling of the count; halves are emitted left then right.
/// Purely index-based, so the result is deterministic for a given shape.
pub fn order_elements(mesh: &Mesh) -> Mesh {
    let mut ordering = Vec::with_capacity(mesh.nelgt());
    let full = [
        (0, mesh.elems_per_axis[0]),
        (0, mesh.elems_per_axis[1]),
        (0, mesh.elems_per_axis[2]),
    ];
    bisect(full, &mut ordering);
    let mut out = mesh.clone();
    out.ordering = ordering;
    rebuild_inverse(&mut out);
    out
}

fn bisect(box_: [(usize, usize); 3], out: &mut Vec<[usize; 3]>) {
    let lens = [
        box_[0].1 - box_[0].0,
        box_[1].1 - box_[1].0,
        box_[2].1 - box_[2].0,
    ];
    if lens[0] * lens[1] * lens[2] == 1 {
        out.push([box_[0].0, box_[1].0, box_[2].0]);
        return;
    }
    // Longest axis wins; on ties the lowest axis index does.
    let mut axis = 0;
    for a in 1..3 {
        if lens[a] > lens[axis] {
            axis = a;
        }
    }
    let (start, end) = box_[axis];
    let mid = start + lens[axis].div_ceil(2);
    let mut left = box_;
    left[axis] = (start, mid);
    let mut right = box_;
    right[axis] = (mid, end);
    bisect(left, out);
    bisect(right, out);
}

/// Element whose box contains `point`.
///
/// Points on an internal face belong to the higher-coordinate cell; the
/// domain's own upper boundary belongs to the last cell. Points outside the
/// closed box are an error (the simulation clamps before calling).
pub fn locate_element(mesh: &Mesh, point: [f64; 3]) -> Result<GlobalElementIndex> {
    if !mesh.contains(point) {
        return Err(Error::OutOfDomain(point[0], point[1], point[2]));
    }
    let w = mesh.cell_widths();
    let mut cell = [0usize; 3];
    for a in 0..3 {
        let n = mesh.elems_per_axis[a];
        let est = ((point[a] - mesh.extent_lo[a]) / w[a]).floor();
        let mut i = (est.max(0.0) as usize).min(n - 1);
        // Settle boundary rounding against the face coordinates themselves:
        // a face at lo + i*w belongs to cell i.
        while i + 1 < n && point[a] >= mesh.extent_lo[a] + (i + 1) as f64 * w[a] {
            i += 1;
        }
        while i > 0 && point[a] < mesh.extent_lo[a] + i as f64 * w[a] {
            i -= 1;
        }
        cell[a] = i;
    }
    Ok(mesh.id_of_cell(cell))
}
