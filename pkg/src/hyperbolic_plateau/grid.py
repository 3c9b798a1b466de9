"""Uniform Cartesian discretisation of the level set domain {ubar > eps} with cut cells.

Derivatives are linear in the nodal values, so each one is stored as a sparse
operator plus a constant vector carrying the Dirichlet data eps^2 at the
crossings. Applying ``D @ v + c`` reproduces the stencil at every node.
"""

import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import sparse
from scipy.optimize import brentq
from scipy.sparse.csgraph import connected_components
from scipy.spatial import ConvexHull, QhullError
from scipy.spatial.distance import pdist

from .families import Dome
from .models import ArgumentError, DomainError, NodeTag
from .voper import VJet

logger = logging.getLogger(__name__)

# Gradient norm below which a crossing is treated as a critical point of ubar.
CRITICAL_GRADIENT = 1e-10


@dataclass
class SubsolutionSpec:
    """A subsolution family together with the box that contains its support."""

    ubar: Dome
    domain_box: Tuple[Tuple[float, ...], Tuple[float, ...]]

    @property
    def n(self) -> int:
        return len(self.domain_box[0])

    @property
    def peak(self) -> float:
        """Maximum of ubar; sampled on a fine lattice when the family has no closed form."""
        peak = getattr(self.ubar, "peak", None)
        if peak is not None:
            return float(peak)
        lo, hi = (np.asarray(b, dtype=float) for b in self.domain_box)
        axes = [np.linspace(lo[a], hi[a], 201) for a in range(self.n)]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        return float(self.ubar.value(mesh).max())


class _CriticalLevel(Exception):
    """Internal signal that a crossing landed on a critical point of ubar."""


@dataclass
class GridDomain:
    """Frozen discretisation of Omega_eps.

    Unknowns are the nodes with ubar > eps in C order. ``cut[i, a, 0]`` and
    ``cut[i, a, 1]`` are the fractions theta in (0, 1] towards the minus and
    plus neighbour along axis a; 1.0 means the neighbour is inside.
    """

    sub: SubsolutionSpec
    eps: float
    h: float
    lower: np.ndarray
    shape: Tuple[int, ...]
    tags: np.ndarray
    index: np.ndarray
    nodes: np.ndarray
    coords: np.ndarray
    cut: np.ndarray
    is_cut: np.ndarray
    crossings: np.ndarray
    crossing_normals: np.ndarray
    crossing_nodes: np.ndarray
    ubar_values: np.ndarray
    n_components: int
    d1: List[sparse.csr_matrix] = field(repr=False)
    c1: List[np.ndarray] = field(repr=False)
    d2: Dict[Tuple[int, int], sparse.csr_matrix] = field(repr=False)
    c2: Dict[Tuple[int, int], np.ndarray] = field(repr=False)
    requested_eps: Optional[float] = None

    @property
    def n(self) -> int:
        return self.coords.shape[1]

    @property
    def size(self) -> int:
        return self.coords.shape[0]

    @property
    def boundary_value(self) -> float:
        return self.eps * self.eps

    @property
    def node_tags(self) -> np.ndarray:
        return self.tags.ravel()[self.nodes]

    @property
    def interior(self) -> np.ndarray:
        return self.node_tags == NodeTag.INTERIOR

    @property
    def boundary_adjacent(self) -> np.ndarray:
        return self.node_tags == NodeTag.BOUNDARY_ADJACENT

    def lattice_point(self, multi: Sequence[int]) -> np.ndarray:
        return self.lower + self.h * np.asarray(multi, dtype=float)

    def unknown(self, node: Union[int, Sequence[int]]) -> int:
        """Unknown index of a lattice node given as a multi-index or flat lattice index."""
        if isinstance(node, (int, np.integer)):
            flat = int(node)
        else:
            flat = int(np.ravel_multi_index(tuple(int(i) for i in node), self.shape))
        return int(self.index[flat])

    def deep_interior(self, depth: int = 1) -> np.ndarray:
        """Nodes whose axis neighbours up to ``depth`` steps away are all INTERIOR."""
        flags = self.interior.copy()
        tags = self.tags
        multi = np.array(np.unravel_index(self.nodes, self.shape))
        for a in range(self.n):
            for step in range(-depth, depth + 1):
                nb = multi.copy()
                nb[a] = nb[a] + step
                valid = (nb[a] >= 0) & (nb[a] < self.shape[a])
                ok = np.zeros(self.size, dtype=bool)
                clipped = tuple(np.clip(nb[i], 0, self.shape[i] - 1) for i in range(self.n))
                flat = np.ravel_multi_index(clipped, self.shape)
                ok[valid] = tags.ravel()[flat[valid]] == NodeTag.INTERIOR
                flags &= ok
        return flags

    @property
    def diameter(self) -> float:
        """Euclidean diameter of the crossing samples of Gamma_eps."""
        pts = self.crossings
        if len(pts) < 2:
            return 0.0
        try:
            pts = pts[ConvexHull(pts).vertices]
        except QhullError:  # degenerate hull, use every sample
            pass
        return float(pdist(pts).max())


@dataclass
class ScalarField:
    """Nodal values on a GridDomain with the Dirichlet trace on Gamma_eps."""

    domain: GridDomain
    values: np.ndarray
    name: str = "v"

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=float).reshape(-1)
        if self.values.size != self.domain.size:
            raise ArgumentError(
                f"field '{self.name}' has {self.values.size} values for {self.domain.size} nodes"
            )
        if not np.all(np.isfinite(self.values)):
            raise ArgumentError(f"field '{self.name}' has non-finite values")

    def boundary_trace(self) -> Tuple[np.ndarray, np.ndarray]:
        """Crossing points of Gamma_eps and the Dirichlet values imposed there."""
        value = self.domain.boundary_value if self.name == "v" else self.domain.eps
        return self.domain.crossings, np.full(len(self.domain.crossings), value)

    def height(self) -> "ScalarField":
        """u = sqrt(v)."""
        if self.name != "v":
            raise ArgumentError(f"height() needs a 'v' field, got '{self.name}'")
        return ScalarField(self.domain, np.sqrt(np.maximum(self.values, 0.0)), "u")


def _lattice(box, h: float) -> Tuple[np.ndarray, Tuple[int, ...], np.ndarray]:
    lo = np.asarray(box[0], dtype=float)
    hi = np.asarray(box[1], dtype=float)
    shape = tuple(int(round((hi[a] - lo[a]) / h)) + 1 for a in range(lo.size))
    if min(shape) < 3:
        raise DomainError(f"spacing h={h} leaves fewer than 3 nodes along an axis")
    axes = [lo[a] + h * np.arange(shape[a]) for a in range(lo.size)]
    mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    return lo, shape, mesh


def build_domain(sub: SubsolutionSpec, eps: float, h: float) -> GridDomain:
    """Discretise Omega_eps = {ubar > eps} on a lattice of spacing h.

    A crossing on a critical point of ubar perturbs eps by 1e-8 (1 + eps) once.

    Args:
        sub: Subsolution and bounding box
        eps: Level, below max ubar
        h: Lattice spacing

    Returns:
        GridDomain

    Raises:
        DomainError: On an empty domain, a box that cuts Omega_eps, or a repeated critical level
    """
    if h <= 0:
        raise ArgumentError(f"spacing h must be positive, got {h}")
    if eps <= 0:
        raise ArgumentError(f"eps must be positive, got {eps}")
    if eps >= sub.peak:
        raise DomainError(f"eps={eps} is not below max ubar={sub.peak}")
    try:
        return _build(sub, eps, h)
    except _CriticalLevel:
        retry = eps + 1e-8 * (1.0 + eps)
        logger.warning("critical point of ubar on level %.12g; retrying at %.12g", eps, retry)
        try:
            domain = _build(sub, retry, h)
        except _CriticalLevel:
            raise DomainError(f"level {eps} stays critical after perturbation")
        domain.requested_eps = eps
        return domain


def _build(sub: SubsolutionSpec, eps: float, h: float) -> GridDomain:
    lo, shape, mesh = _lattice(sub.domain_box, h)
    n = lo.size
    ub = sub.ubar.value(mesh)
    inside = ub > eps
    if not inside.any():
        raise DomainError(f"Omega_eps is empty at eps={eps}, h={h}")

    inside_flat = inside.ravel()
    nodes = np.flatnonzero(inside_flat)
    N = nodes.size
    index = np.full(inside_flat.size, -1, dtype=np.int64)
    index[nodes] = np.arange(N)
    coords = mesh.reshape(-1, n)[nodes]
    multi = np.array(np.unravel_index(nodes, shape))

    cut = np.ones((N, n, 2))
    is_cut = np.zeros((N, n, 2), dtype=bool)
    neighbour = np.full((N, n, 2), -1, dtype=np.int64)
    crossings, normals, owners = [], [], []

    for a in range(n):
        for side, step in ((0, -1), (1, 1)):
            nb = multi.copy()
            nb[a] = nb[a] + step
            if np.any((nb[a] < 0) | (nb[a] >= shape[a])):
                raise DomainError("the domain box does not contain Omega_eps; enlarge the box")
            nb_flat = np.ravel_multi_index(tuple(nb), shape)
            nb_inside = inside_flat[nb_flat]
            neighbour[nb_inside, a, side] = index[nb_flat[nb_inside]]
            direction = np.zeros(n)
            direction[a] = step * h
            for i in np.flatnonzero(~nb_inside):
                x0 = coords[i]
                s = brentq(lambda s_: float(sub.ubar.value(x0 + s_ * direction)) - eps, 0.0, 1.0,
                           xtol=1e-10)
                point = x0 + s * direction
                grad = np.asarray(sub.ubar.gradient(point), dtype=float)
                norm = float(np.linalg.norm(grad))
                if norm < CRITICAL_GRADIENT:
                    raise _CriticalLevel()
                cut[i, a, side] = s
                is_cut[i, a, side] = True
                crossings.append(point)
                normals.append(-grad / norm)
                owners.append(i)

    tags = np.full(inside_flat.size, NodeTag.EXTERIOR, dtype=np.int8)
    boundary = is_cut.any(axis=(1, 2))
    tags[nodes] = np.where(boundary, NodeTag.BOUNDARY_ADJACENT, NodeTag.INTERIOR)

    n_components = _count_components(neighbour, N)
    if n_components > 1:
        logger.warning("Omega_eps at eps=%.6g has %d components", eps, n_components)

    bval = eps * eps
    d1, c1, d2, c2 = _derivative_operators(
        n, h, shape, multi, inside_flat, index, neighbour, cut, bval
    )
    return GridDomain(
        sub=sub,
        eps=eps,
        h=h,
        lower=lo,
        shape=shape,
        tags=tags.reshape(shape),
        index=index,
        nodes=nodes,
        coords=coords,
        cut=cut,
        is_cut=is_cut,
        crossings=np.array(crossings).reshape(-1, n),
        crossing_normals=np.array(normals).reshape(-1, n),
        crossing_nodes=np.array(owners, dtype=np.int64),
        ubar_values=ub.ravel()[nodes],
        n_components=n_components,
        d1=d1,
        c1=c1,
        d2=d2,
        c2=c2,
    )


def _count_components(neighbour: np.ndarray, N: int) -> int:
    rows, cols = [], []
    for a in range(neighbour.shape[1]):
        j = neighbour[:, a, 1]
        ok = j >= 0
        rows.append(np.flatnonzero(ok))
        cols.append(j[ok])
    rows = np.concatenate(rows) if rows else np.array([], dtype=int)
    cols = np.concatenate(cols) if cols else np.array([], dtype=int)
    adjacency = sparse.coo_matrix((np.ones(rows.size), (rows, cols)), shape=(N, N))
    count, _ = connected_components(adjacency, directed=False)
    return int(count)


class _Stencil:
    """Accumulates COO triplets and a constant vector for one operator."""

    def __init__(self, N: int):
        self.N = N
        self.rows: List[np.ndarray] = []
        self.cols: List[np.ndarray] = []
        self.vals: List[np.ndarray] = []
        self.const = np.zeros(N)

    def add(self, rows, cols, vals) -> None:
        self.rows.append(np.atleast_1d(rows))
        self.cols.append(np.atleast_1d(cols))
        self.vals.append(np.atleast_1d(np.asarray(vals, dtype=float)))

    def add_term(self, rows, neighbour, weight, bval) -> None:
        """Weight on the neighbour if it is an unknown, on the boundary value otherwise."""
        known = neighbour >= 0
        self.add(rows[known], neighbour[known], weight[known])
        np.add.at(self.const, rows[~known], weight[~known] * bval)

    def matrix(self) -> sparse.csr_matrix:
        rows = np.concatenate(self.rows) if self.rows else np.array([], dtype=int)
        cols = np.concatenate(self.cols) if self.cols else np.array([], dtype=int)
        vals = np.concatenate(self.vals) if self.vals else np.array([])
        return sparse.coo_matrix((vals, (rows, cols)), shape=(self.N, self.N)).tocsr()


def _derivative_operators(n, h, shape, multi, inside_flat, index, neighbour, cut, bval):
    N = multi.shape[1]
    rows = np.arange(N)
    d1, c1, d2, c2 = [], [], {}, {}

    for a in range(n):
        hm = cut[:, a, 0] * h
        hp = cut[:, a, 1] * h
        jm = neighbour[:, a, 0]
        jp = neighbour[:, a, 1]

        first = _Stencil(N)
        first.add(rows, rows, (hp - hm) / (hp * hm))
        first.add_term(rows, jp, hm / (hp * (hp + hm)), bval)
        first.add_term(rows, jm, -hp / (hm * (hp + hm)), bval)
        d1.append(first.matrix())
        c1.append(first.const)

        second = _Stencil(N)
        second.add(rows, rows, -2.0 / (hp * hm))
        second.add_term(rows, jp, 2.0 / (hp * (hp + hm)), bval)
        second.add_term(rows, jm, 2.0 / (hm * (hp + hm)), bval)
        d2[(a, a)] = second.matrix()
        c2[(a, a)] = second.const

    for a, b in itertools.combinations(range(n), 2):
        mixed = _mixed_operator(a, b, h, shape, multi, inside_flat, index, neighbour, cut, bval)
        d2[(a, b)] = mixed.matrix()
        c2[(a, b)] = mixed.const
        d2[(b, a)] = d2[(a, b)]
        c2[(b, a)] = c2[(a, b)]
    return d1, c1, d2, c2


def _corner(a, b, sa, sb, shape, multi, inside_flat, index) -> np.ndarray:
    """Unknown index of the diagonal neighbour (sa, sb) in plane (a, b), -1 if outside."""
    nb = multi.copy()
    nb[a] = nb[a] + sa
    nb[b] = nb[b] + sb
    valid = (nb[a] >= 0) & (nb[a] < shape[a]) & (nb[b] >= 0) & (nb[b] < shape[b])
    out = np.full(multi.shape[1], -1, dtype=np.int64)
    flat = np.ravel_multi_index(
        tuple(np.clip(nb[i], 0, shape[i] - 1) for i in range(len(shape))), shape
    )
    ok = valid & inside_flat[flat]
    out[ok] = index[flat[ok]]
    return out


def _mixed_operator(a, b, h, shape, multi, inside_flat, index, neighbour, cut, bval) -> _Stencil:
    N = multi.shape[1]
    stencil = _Stencil(N)
    corners = {
        (sa, sb): _corner(a, b, sa, sb, shape, multi, inside_flat, index)
        for sa in (-1, 1)
        for sb in (-1, 1)
    }
    full = np.all([c >= 0 for c in corners.values()], axis=0)

    # standard 4-point cross
    rows = np.flatnonzero(full)
    for (sa, sb), c in corners.items():
        stencil.add(rows, c[rows], np.full(rows.size, sa * sb / (4.0 * h * h)))

    side = {-1: 0, 1: 1}
    fallback_fits = 0
    for i in np.flatnonzero(~full):
        quadrants = []
        for (sa, sb), c in corners.items():
            ja = neighbour[i, a, side[sa]]
            jb = neighbour[i, b, side[sb]]
            if c[i] >= 0 and ja >= 0 and jb >= 0:
                quadrants.append((sa * sb, c[i], ja, jb))
        if quadrants:
            wgt = 1.0 / (len(quadrants) * h * h)
            for sign, jc, ja, jb in quadrants:
                stencil.add([i, i, i, i], [jc, ja, jb, i],
                            [sign * wgt, -sign * wgt, -sign * wgt, sign * wgt])
            continue
        fallback_fits += 1
        _least_squares_mixed(stencil, i, a, b, h, neighbour, cut, corners, bval)
    if fallback_fits:
        logger.debug("mixed derivative (%d,%d): %d least-squares fallback nodes", a, b, fallback_fits)
    return stencil


def _least_squares_mixed(stencil, i, a, b, h, neighbour, cut, corners, bval) -> None:
    """Mixed derivative from a quadratic fit through the in-plane stencil and crossings."""
    pts: List[Tuple[float, float]] = [(0.0, 0.0)]
    cols: List[int] = [i]
    for axis, pos in ((a, 0), (b, 1)):
        for s, sgn in ((0, -1.0), (1, 1.0)):
            offset = [0.0, 0.0]
            offset[pos] = sgn * cut[i, axis, s] * h
            pts.append((offset[0], offset[1]))
            cols.append(int(neighbour[i, axis, s]))
    for (sa, sb), c in corners.items():
        if c[i] >= 0:
            pts.append((sa * h, sb * h))
            cols.append(int(c[i]))
    P = np.array(pts)
    design = np.column_stack(
        [np.ones(len(P)), P[:, 0], P[:, 1], 0.5 * P[:, 0] ** 2, P[:, 0] * P[:, 1], 0.5 * P[:, 1] ** 2]
    )
    weights = np.linalg.pinv(design)[4]
    for w, j in zip(weights, cols):
        if j >= 0:
            stencil.add([i], [j], [w])
        else:
            stencil.const[i] += w * bval


def field_jets(domain: GridDomain, values: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Gradients (N, n) and Hessians (N, n, n) of a nodal field at every unknown."""
    n = domain.n
    values = np.asarray(values, dtype=float)
    dv = np.column_stack([domain.d1[a] @ values + domain.c1[a] for a in range(n)])
    d2v = np.empty((domain.size, n, n))
    for a in range(n):
        for b in range(a, n):
            col = domain.d2[(a, b)] @ values + domain.c2[(a, b)]
            d2v[:, a, b] = col
            d2v[:, b, a] = col
    return dv, d2v


def fd_jet(field: ScalarField, node: Union[int, Sequence[int]]) -> VJet:
    """Finite-difference jet of a v-field at one lattice node.

    Args:
        field: Nodal values of v
        node: Lattice multi-index, or flat lattice index

    Returns:
        VJet at the node

    Raises:
        ArgumentError: If the node is exterior
    """
    domain = field.domain
    i = domain.unknown(node)
    if i < 0:
        raise ArgumentError(f"node {node} is exterior to Omega_eps")
    n = domain.n
    values = field.values
    dv = np.array([domain.d1[a][i] @ values + domain.c1[a][i] for a in range(n)]).reshape(n)
    d2v = np.empty((n, n))
    for a in range(n):
        for b in range(a, n):
            row = domain.d2[(a, b)][i] @ values
            d2v[a, b] = d2v[b, a] = row[0] + domain.c2[(a, b)][i]
    return VJet(v=values[i], dv=dv, d2v=d2v)


def lattice_node(domain: GridDomain, i: int) -> Tuple[int, ...]:
    """Lattice multi-index of unknown i."""
    return tuple(int(c) for c in np.unravel_index(domain.nodes[i], domain.shape))
