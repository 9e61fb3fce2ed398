"""Structured lattices over chart domains with finite-difference calculus.

A Grid is a uniform lattice in chart coordinates.  Nodes are classified
interior / boundary / exterior so that every interior node's full 3^n
second-order stencil lies in interior-or-boundary; boundary nodes carry
Dirichlet values sampled at their exact chart coordinates (grid-aligned
staircase, no cut cells).

Derivatives are central second order.  The covariant Hessian is
Hess_ij = d_ij - Gamma_ij^k d_k; the convexity matrix Hess + u sigma has a
second route through the product u_tilde = mu u evaluated with analytic chart
derivatives, identical in the discrete jet up to rounding.
"""

import itertools
from dataclasses import dataclass, field as dc_field

import numpy as np

from . import charts as ch
from .errors import AssemblyError

INTERIOR, BOUNDARY, EXTERIOR = 0, 1, 2
_CLASS_NAMES = {INTERIOR: "interior", BOUNDARY: "boundary", EXTERIOR: "exterior"}
_CLASS_IDS = {v: k for k, v in _CLASS_NAMES.items()}


@dataclass
class Grid:
    """Immutable after construction; see build_cap_domain / build_from_mask."""

    chart: ch.Chart
    h: float
    origin: np.ndarray            # chart coordinates of lattice index (0,...,0)
    lattice_shape: tuple
    status: np.ndarray            # (lattice_shape) int classification
    node_index: np.ndarray        # (N, n) lattice multi-indices of non-exterior nodes
    node_class: np.ndarray        # (N,) INTERIOR/BOUNDARY
    coords: np.ndarray            # (N, n) chart coordinates
    id_grid: np.ndarray           # lattice -> node id or -1
    interior_ids: np.ndarray      # (N_int,)
    boundary_ids: np.ndarray      # (N_bnd,)
    box: np.ndarray               # (N_int, 3^n) node ids of the full stencil box
    _jet_cache: dict = dc_field(default_factory=dict, repr=False)

    @property
    def dim(self):
        return self.chart.dim

    @property
    def n_nodes(self):
        return self.node_class.shape[0]

    @property
    def n_interior(self):
        return self.interior_ids.shape[0]

    def interior_coords(self):
        return self.coords[self.interior_ids]

    def boundary_ring_mask(self):
        """Interior nodes whose stencil box touches a boundary node."""
        return np.any(self.node_class[self.box] == BOUNDARY, axis=1)


def _offsets(n):
    return np.array(list(itertools.product((-1, 0, 1), repeat=n)), dtype=int)


def _classify(inside, n):
    """Interior = inside with full box inside; boundary = inside box-neighbors of interior."""
    interior = inside.copy()
    for off in _offsets(n):
        if np.all(off == 0):
            continue
        interior &= np.roll(inside, shift=tuple(-off), axis=tuple(range(n)))
    # np.roll wraps around; strip the outermost layer to be safe
    edge = np.zeros_like(interior)
    sl = tuple(slice(1, -1) for _ in range(n))
    edge[sl] = True
    interior &= edge
    near_interior = np.zeros_like(interior)
    for off in _offsets(n):
        near_interior |= np.roll(interior, shift=tuple(off), axis=tuple(range(n)))
    boundary = inside & near_interior & ~interior
    status = np.full(inside.shape, EXTERIOR, dtype=int)
    status[interior] = INTERIOR
    status[boundary] = BOUNDARY
    return status


def _finalize(chart, h, origin, status):
    n = chart.dim
    non_ext = status != EXTERIOR
    node_index = np.argwhere(non_ext)
    node_class = status[non_ext]
    coords = origin + node_index * h
    id_grid = np.full(status.shape, -1, dtype=int)
    id_grid[tuple(node_index.T)] = np.arange(node_index.shape[0])
    interior_ids = np.flatnonzero(node_class == INTERIOR)
    boundary_ids = np.flatnonzero(node_class == BOUNDARY)
    if interior_ids.size == 0:
        raise AssemblyError("domain has no interior nodes at this resolution; decrease h")
    offs = _offsets(n)
    box = np.empty((interior_ids.size, offs.shape[0]), dtype=int)
    int_idx = node_index[interior_ids]
    for j, off in enumerate(offs):
        box[:, j] = id_grid[tuple((int_idx + off).T)]
    if np.any(box < 0):
        bad = interior_ids[np.argwhere(box < 0)[0, 0]]
        raise AssemblyError(f"stencil of interior node {bad} leaves the classified domain")
    return Grid(
        chart=chart,
        h=float(h),
        origin=np.asarray(origin, dtype=float),
        lattice_shape=status.shape,
        status=status,
        node_index=node_index,
        node_class=node_class,
        coords=coords,
        id_grid=id_grid,
        interior_ids=interior_ids,
        boundary_ids=boundary_ids,
        box=box,
    )


def build_cap_domain(theta0, h, n=2, center=None) -> Grid:
    """Grid over the geodesic cap dist(z, center) < theta0 in its gnomonic chart.

    theta0 >= pi/2 is rejected: the domain may not contain a hemisphere.
    The inside test runs on the integer lattice (|index|^2 against (r/h)^2),
    so the classification inherits every lattice symmetry of the disk; nodes
    landing exactly on the circle are excluded deterministically.
    """
    r = ch.cap_radius_in_chart(theta0)
    chart = ch.gnomonic_chart(n, center)
    m = int(np.ceil(r / h)) + 2
    origin = np.full(n, -m * h)
    axes = [np.arange(2 * m + 1) - m] * n
    idx = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    rr2 = np.sum(idx * idx, axis=-1)
    inside = rr2 < (r / h) ** 2 - 1e-9
    return _finalize(chart, h, origin, _classify(inside, n))


def build_from_mask(mask, h, origin, chart=None, max_radius=None) -> Grid:
    """Grid from a boolean lattice mask (True = inside Omega).

    When max_radius is given, every inside node must satisfy |y| < max_radius
    (containment in the declared chart disk) or the mask is rejected.
    """
    mask = np.asarray(mask, dtype=bool)
    n = mask.ndim
    if chart is None:
        chart = ch.gnomonic_chart(n)
    if chart.dim != n:
        raise ValueError(f"mask dimension {n} does not match chart dimension {chart.dim}")
    origin = np.asarray(origin, dtype=float)
    # pad one cell so classification never touches the array edge
    padded = np.pad(mask, 1)
    origin = origin - h
    if max_radius is not None:
        idx = np.argwhere(padded)
        y = origin + idx * h
        rr = np.sqrt(np.sum(y * y, axis=-1))
        if np.any(rr >= max_radius):
            worst = float(rr.max())
            raise ValueError(
                f"mask node at |y|={worst:.6g} outside the chart disk of radius {max_radius:.6g}"
            )
    return _finalize(chart, float(h), origin, _classify(padded, n))


# ---------------------------------------------------------------------------
# fields


@dataclass
class GraphField:
    """Scalar field on a grid in one representation: values per non-exterior node."""

    grid: Grid
    values: np.ndarray
    representation: str  # "rho" | "u" | "v"

    def __post_init__(self):
        if self.representation not in ("rho", "u", "v"):
            raise ValueError(f"unknown representation {self.representation!r}")
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n_nodes,):
            raise ValueError(
                f"field has {self.values.shape} values for {self.grid.n_nodes} nodes"
            )

    def copy_with(self, values=None, representation=None):
        return GraphField(
            self.grid,
            self.values.copy() if values is None else values,
            self.representation if representation is None else representation,
        )


def field_from_function(grid, fn, representation):
    """Sample fn(coords (N, n)) -> (N,) at every non-exterior node."""
    return GraphField(grid, np.asarray(fn(grid.coords), dtype=float), representation)


# ---------------------------------------------------------------------------
# finite differences

def _jet_weights(grid):
    """First/second-derivative stencil weights over the 3^n box; cached per grid."""
    key = "jet_weights"
    if key in grid._jet_cache:
        return grid._jet_cache[key]
    n = grid.dim
    h = grid.h
    offs = _offsets(n)
    pos = {tuple(o): j for j, o in enumerate(offs)}
    m = offs.shape[0]
    W1 = np.zeros((n, m))
    W2 = np.zeros((n, n, m))
    for k in range(n):
        ep = [0] * n
        ep[k] = 1
        em = [0] * n
        em[k] = -1
        W1[k, pos[tuple(ep)]] = 0.5 / h
        W1[k, pos[tuple(em)]] = -0.5 / h
        W2[k, k, pos[tuple(ep)]] += 1.0 / h**2
        W2[k, k, pos[tuple(em)]] += 1.0 / h**2
        W2[k, k, pos[tuple([0] * n)]] += -2.0 / h**2
    for k in range(n):
        for l in range(k + 1, n):
            for sk, sl in itertools.product((-1, 1), repeat=2):
                o = [0] * n
                o[k] = sk
                o[l] = sl
                W2[k, l, pos[tuple(o)]] = sk * sl * 0.25 / h**2
                W2[l, k, pos[tuple(o)]] = sk * sl * 0.25 / h**2
    grid._jet_cache[key] = (W1, W2)
    return W1, W2


def fd_jets(grid, values):
    """(value, grad, second partials) at all interior nodes; plain coordinate jets.

    Differences are taken against the center value: every weight row sums to
    zero, so this changes nothing analytically but makes derivatives of
    constant fields vanish identically (even under FMA contraction).
    """
    values = np.asarray(values, dtype=float)
    vbox = values[grid.box]
    W1, W2 = _jet_weights(grid)
    center = vbox[:, grid.box.shape[1] // 2].copy()
    vbox = vbox - center[:, None]
    grad = vbox @ W1.T
    hess = np.einsum("nm,klm->nkl", vbox, W2)
    return center, grad, hess


def chart_quantities(grid):
    """sigma, sigma_inv, mu, Gamma, B = sigma^{-1/2} at interior nodes; cached."""
    key = "chart_quantities"
    if key in grid._jet_cache:
        return grid._jet_cache[key]
    y = grid.interior_coords()
    sigma, sigma_inv, mu = ch.chart_metric(grid.chart, y)
    gamma = ch.christoffel(grid.chart, y)
    B = ch.inv_sqrt_metric(grid.chart, y)
    grid._jet_cache[key] = (sigma, sigma_inv, mu, gamma, B)
    return grid._jet_cache[key]


def covariant_jets(grid, values):
    """(value, coordinate grad, covariant Hessian) at all interior nodes."""
    val, grad, hess = fd_jets(grid, values)
    _, _, _, gamma, _ = chart_quantities(grid)
    hess_cov = hess - np.einsum("nijk,nk->nij", gamma, grad)
    return val, grad, hess_cov


def frame_jets(grid, values):
    """(value, frame grad, frame covariant Hessian): orthonormal components."""
    val, grad, hess_cov = covariant_jets(grid, values)
    _, _, _, _, B = chart_quantities(grid)
    p = np.einsum("nij,nj->ni", B, grad)
    r = np.einsum("nia,nab,nbj->nij", B, hess_cov, B)
    return val, p, r


def gradient(grid, values):
    """Coordinate gradient at interior nodes."""
    return fd_jets(grid, values)[1]


def gradient_norm_sq(grid, values):
    """|grad u|^2 = sigma^{kl} u_k u_l at interior nodes."""
    grad = gradient(grid, values)
    _, sigma_inv, _, _, _ = chart_quantities(grid)
    return np.einsum("nk,nkl,nl->n", grad, sigma_inv, grad)


def covariant_hessian(grid, values):
    """Covariant Hessian (coordinate components) at all interior nodes."""
    return covariant_jets(grid, values)[2]


def convexity_matrix(grid, values_u):
    """Hess u + u sigma at interior nodes (coordinate components), direct route."""
    val, _, hess_cov = covariant_jets(grid, values_u)
    sigma, _, _, _, _ = chart_quantities(grid)
    return hess_cov + val[:, None, None] * sigma


def convexity_matrix_fast(grid, values_u):
    """Same matrix through u_tilde = mu u with analytic chart derivatives.

    Expands the u_tilde jets by the product rule using exact derivatives of mu,
    so the result equals the direct route on identical FD jets up to rounding.
    Gnomonic: (Hess u + u sigma)_ij = u_tilde_ij / mu.
    Plane:    ... = u_tilde_ij / mu + (2 delta_ij/mu^2)(u_tilde - x . D u_tilde).
    """
    val, grad, hess = fd_jets(grid, values_u)
    y = grid.interior_coords()
    n = grid.dim
    if grid.chart.kind == ch.GNOMONIC:
        mu = np.sqrt(1.0 + np.sum(y * y, axis=-1))
        dmu = y / mu[:, None]
        d2mu = np.eye(n) / mu[:, None, None] - np.einsum("ni,nj->nij", y, y) / mu[:, None, None] ** 3
        tu_hess = (
            d2mu * val[:, None, None]
            + np.einsum("ni,nj->nij", dmu, grad)
            + np.einsum("ni,nj->nij", grad, dmu)
            + mu[:, None, None] * hess
        )
        return tu_hess / mu[:, None, None]
    mu = 4.0 + np.sum(y * y, axis=-1)
    dmu = 2.0 * y
    tu = mu * val
    tu_grad = dmu * val[:, None] + mu[:, None] * grad
    tu_hess = (
        2.0 * np.eye(n) * val[:, None, None]
        + np.einsum("ni,nj->nij", dmu, grad)
        + np.einsum("ni,nj->nij", grad, dmu)
        + mu[:, None, None] * hess
    )
    corr = (tu - np.einsum("ni,ni->n", y, tu_grad)) * 2.0 / (mu * mu)
    return tu_hess / mu[:, None, None] + corr[:, None, None] * np.eye(n)


# per-node views of the batched operators (node must be interior)

def covariant_hessian_at(field: "GraphField", node) -> np.ndarray:
    """Covariant Hessian at one interior node of a field."""
    return covariant_hessian(field.grid, field.values)[interior_slot(field.grid, node)]


def convexity_matrix_at(field: "GraphField", node) -> np.ndarray:
    """Hess u + u sigma at one interior node; field must be in u-representation."""
    if field.representation != "u":
        raise ValueError("convexity matrix is defined for u-representation fields")
    return convexity_matrix(field.grid, field.values)[interior_slot(field.grid, node)]


def gradient_at(field: "GraphField", node) -> np.ndarray:
    return gradient(field.grid, field.values)[interior_slot(field.grid, node)]


def gradient_norm_sq_at(field: "GraphField", node) -> float:
    return float(gradient_norm_sq(field.grid, field.values)[interior_slot(field.grid, node)])


def boundary_gradient_estimate(grid, values):
    """Coordinate gradient at boundary nodes, one-sided where needed.

    First-order accurate; used by diagnostics that need the boundary trace of
    gradient quantities.  Axes with no available neighbor contribute zero.
    """
    n = grid.dim
    h = grid.h
    out = np.zeros((grid.boundary_ids.size, n))
    shape = np.array(grid.lattice_shape)
    for j, b in enumerate(grid.boundary_ids):
        idx = grid.node_index[b]
        for k in range(n):
            ip = idx.copy()
            ip[k] += 1
            im = idx.copy()
            im[k] -= 1
            idp = grid.id_grid[tuple(ip)] if np.all((ip >= 0) & (ip < shape)) else -1
            idm = grid.id_grid[tuple(im)] if np.all((im >= 0) & (im < shape)) else -1
            if idp >= 0 and idm >= 0:
                out[j, k] = (values[idp] - values[idm]) / (2.0 * h)
            elif idp >= 0:
                out[j, k] = (values[idp] - values[b]) / h
            elif idm >= 0:
                out[j, k] = (values[b] - values[idm]) / h
    return out


def interior_slot(grid, node_id):
    """Position of a node id within the interior arrays; error if not interior."""
    pos = np.searchsorted(grid.interior_ids, node_id)
    if pos >= grid.interior_ids.size or grid.interior_ids[pos] != node_id:
        raise AssemblyError(f"node {node_id} is not interior; stencil operations undefined there")
    return int(pos)


# ---------------------------------------------------------------------------
# serialization

def save_grid(path, grid, field=None, space_form=None):
    """Plain-text grid (+ optional field) file; format documented in the README."""
    rep = field.representation if field is not None else "none"
    vals = field.values if field is not None else np.full(grid.n_nodes, np.nan)
    lines = ["# weingarten grid v1"]
    lines.append(f"chart {grid.chart.kind}")
    lines.append("center " + " ".join(repr(float(c)) for c in grid.chart.center))
    lines.append(f"dim {grid.dim}")
    lines.append(f"h {grid.h!r}")
    lines.append("origin " + " ".join(repr(float(c)) for c in grid.origin))
    lines.append("lattice " + " ".join(str(s) for s in grid.lattice_shape))
    if space_form is not None:
        lines.append(f"space_form {int(space_form)}")
    lines.append(f"representation {rep}")
    lines.append(f"nodes {grid.n_nodes}")
    for i in range(grid.n_nodes):
        idx = " ".join(str(int(v)) for v in grid.node_index[i])
        yc = " ".join(repr(float(v)) for v in grid.coords[i])
        lines.append(
            f"{i} {idx} {_CLASS_NAMES[int(grid.node_class[i])]} {yc} {float(vals[i])!r}"
        )
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_grid(path):
    """Inverse of save_grid.  Returns (grid, field_or_None, space_form_or_None)."""
    with open(path) as fh:
        raw = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
    header = {}
    i = 0
    while i < len(raw):
        keyword = raw[i].split()[0]
        if keyword[0].isdigit() or keyword[0] == "-":
            break
        parts = raw[i].split()
        header[parts[0]] = parts[1:]
        i += 1
    n = int(header["dim"][0])
    kind = header["chart"][0]
    center = np.array([float(v) for v in header["center"]])
    chart = ch.Chart(kind, n, center)
    h = float(header["h"][0])
    origin = np.array([float(v) for v in header["origin"]])
    shape = tuple(int(v) for v in header["lattice"])
    n_nodes = int(header["nodes"][0])
    rep = header.get("representation", ["none"])[0]
    sf = int(header["space_form"][0]) if "space_form" in header else None
    status = np.full(shape, EXTERIOR, dtype=int)
    values = np.empty(n_nodes)
    rows = raw[i:]
    if len(rows) != n_nodes:
        raise AssemblyError(f"grid file lists {len(rows)} nodes, header says {n_nodes}")
    for row in rows:
        parts = row.split()
        nid = int(parts[0])
        idx = tuple(int(v) for v in parts[1 : 1 + n])
        klass = parts[1 + n]
        values[nid] = float(parts[2 + 2 * n])
        status[idx] = _CLASS_IDS[klass]
    grid = _finalize(chart, h, origin, status)
    field = None
    if rep != "none":
        field = GraphField(grid, values, rep)
    return grid, field, sf
