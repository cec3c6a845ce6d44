"""2-D thermal-fin benchmark: P1 finite elements with affine parameter dependence.

Geometry: a vertical post of width 1 carrying ``subfins`` pairs of horizontal
arms (thickness 0.5, gap 0.5, arm length 2 each side).  Heat enters through
the root segment at the bottom of the post and leaves through the exterior
boundary by convection (Biot number).  The bilinear form splits as

    a(u, v; mu) = sum_q theta_q(mu) a_q(u, v)

with one stiffness block per conductivity region (post + each subfin pair)
and one boundary-mass block, so every theta_q is affine in mu and all second
parameter derivatives of the operator vanish.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import DimensionMismatch, MeshTooCoarse, SolveFailure
from .numerics import InnerProduct
from .parameters import ParameterDomain, fin_domain, fin_reference


@dataclass(frozen=True)
class FinGeometry:
    """Rectilinear fin proportions; every length is a multiple of the grid pitch."""

    post_width: float = 1.0
    arm_length: float = 2.0
    fin_thickness: float = 0.5
    fin_gap: float = 0.5
    root_offset: float = 1.0  # distance from the root to the first subfin


@dataclass
class AffineTheta:
    """Affine coefficient functions theta_q(mu) and their exact gradients.

    ``conductivity_map[q]`` gives the parameter index driving block q, or -1
    when the block coefficient is frozen at one.  The last block is the
    boundary-mass block driven by the Biot number (last parameter).
    """

    conductivity_map: np.ndarray
    p: int

    @property
    def count(self):
        return self.conductivity_map.size

    def evaluate(self, mu):
        mu = np.asarray(mu, dtype=float)
        if mu.size != self.p:
            raise DimensionMismatch(f"expected {self.p} parameters, got {mu.size}")
        theta = np.ones(self.count)
        active = self.conductivity_map >= 0
        theta[active] = mu[self.conductivity_map[active]]
        return theta

    def gradient(self, mu):
        """d theta_q / d mu_i as a (Q, p) matrix (constant: thetas are affine)."""
        grad = np.zeros((self.count, self.p))
        for q, idx in enumerate(self.conductivity_map):
            if idx >= 0:
                grad[q, idx] = 1.0
        return grad


@dataclass
class HighFidelityModel:
    """Affine-decomposed discrete operator with its metric and mesh metadata."""

    affine_matrices: list
    theta: AffineTheta
    rhs: np.ndarray
    metric: InnerProduct
    reference_parameter: np.ndarray
    domain: ParameterDomain
    dof_count: int
    nodes: np.ndarray = None
    triangles: np.ndarray = None
    regions: np.ndarray = None
    _factor_cache: dict = field(default_factory=dict, repr=False)

    def assemble(self, mu):
        theta = self.theta.evaluate(mu)
        A = theta[0] * self.affine_matrices[0]
        for coeff, block in zip(theta[1:], self.affine_matrices[1:]):
            A = A + coeff * block
        return A

    def _factorize(self, mu):
        key = np.asarray(mu, dtype=float).tobytes()
        solver = self._factor_cache.get(key)
        if solver is None:
            try:
                solver = spla.splu(sp.csc_matrix(self.assemble(mu)))
            except RuntimeError as exc:
                raise SolveFailure(f"factorization failed at mu={mu}: {exc}") from exc
            if len(self._factor_cache) > 8:
                self._factor_cache.clear()
            self._factor_cache[key] = solver
        return solver

    def solve(self, mu, rhs=None):
        b = self.rhs if rhs is None else rhs
        lu = self._factorize(mu)
        u = lu.solve(b)
        scale = np.linalg.norm(b)
        residual = np.linalg.norm(self.assemble(mu) @ u - b)
        if not np.isfinite(residual) or residual > 1e-10 * max(scale, 1e-300):
            raise SolveFailure(
                f"solve at mu={mu} left residual {residual:.3e} (rhs scale {scale:.3e})"
            )
        return u


def _structured_fin_mesh(subfins, density, geometry):
    g = geometry
    h = 1.0 / density
    widths = [g.post_width / 2, g.arm_length, g.fin_thickness, g.fin_gap, g.root_offset]
    if any(abs(round(w * density) - w * density) > 1e-9 for w in widths):
        raise MeshTooCoarse(
            f"density {density} does not align with the fin proportions; "
            "use a multiple of 2"
        )
    half_w = g.post_width / 2 + g.arm_length
    height = g.root_offset + subfins * g.fin_thickness + (subfins - 1) * g.fin_gap
    nx, ny = round(2 * half_w * density), round(height * density)

    def region_of(xc, yc):
        if abs(xc) <= g.post_width / 2:
            return 0 if 0 <= yc <= height else -1
        if abs(xc) > half_w:
            return -1
        period = g.fin_thickness + g.fin_gap
        band = (yc - g.root_offset) / period
        i = int(np.floor(band))
        if i < 0 or i >= subfins:
            return -1
        return i + 1 if (yc - g.root_offset) - i * period <= g.fin_thickness else -1

    # grid squares -> two triangles each, kept only when inside the domain
    node_id = -np.ones((nx + 1, ny + 1), dtype=int)
    tris, regions = [], []
    for ix in range(nx):
        for iy in range(ny):
            xc = -half_w + (ix + 0.5) * h
            yc = (iy + 0.5) * h
            reg = region_of(xc, yc)
            if reg < 0:
                continue
            corners = [(ix, iy), (ix + 1, iy), (ix + 1, iy + 1), (ix, iy + 1)]
            for c in corners:
                if node_id[c] < 0:
                    node_id[c] = 0
            tris.append([corners[0], corners[1], corners[2]])
            tris.append([corners[0], corners[2], corners[3]])
            regions.extend([reg, reg])
    counts = np.bincount(regions, minlength=subfins + 1)
    if np.any(counts == 0):
        raise MeshTooCoarse(f"regions without elements at density {density}: {counts}")

    used = np.argwhere(node_id >= 0)
    node_id[tuple(used.T)] = np.arange(len(used))
    nodes = np.column_stack([-half_w + used[:, 0] * h, used[:, 1] * h])
    triangles = np.array(
        [[node_id[a], node_id[b], node_id[c]] for a, b, c in tris], dtype=int
    )
    return nodes, triangles, np.asarray(regions, dtype=int), h


def _stiffness_blocks(nodes, triangles, regions, n_regions):
    x = nodes[triangles, 0]
    y = nodes[triangles, 1]
    b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    c = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    area = 0.5 * (b[:, 0] * c[:, 1] - b[:, 1] * c[:, 0])
    local = (b[:, :, None] * b[:, None, :] + c[:, :, None] * c[:, None, :]) / (
        4.0 * area[:, None, None]
    )
    rows = np.repeat(triangles, 3, axis=1).ravel()
    cols = np.tile(triangles, (1, 3)).ravel()
    n = len(nodes)
    blocks = []
    for reg in range(n_regions):
        mask = regions == reg
        vals = np.where(mask[:, None, None], local, 0.0).ravel()
        blocks.append(sp.csr_matrix((vals, (rows, cols)), shape=(n, n)))
    return blocks


def _boundary_edges(triangles):
    edges = {}
    for tri in triangles:
        for a, b in ((tri[0], tri[1]), (tri[1], tri[2]), (tri[2], tri[0])):
            key = (min(a, b), max(a, b))
            edges[key] = edges.get(key, 0) + 1
    return [e for e, count in edges.items() if count == 1]


def build_thermal_fin(subfins=4, mesh_density=8, p=None, reference=None,
                      domain=None, geometry=FinGeometry()):
    """Assemble the fin model with ``subfins`` arm pairs at the given density.

    Parameters drive the model as k_i = mu_i for i = 1..p-1 (remaining
    subfin conductivities frozen at 1) and Biot = mu_p.  The metric is the
    bilinear form evaluated at the reference parameter.
    """
    if subfins < 1:
        raise MeshTooCoarse("need at least one subfin pair")
    if mesh_density < 2:
        raise MeshTooCoarse("mesh density below 2 elements per unit")
    if p is None:
        p = subfins + 1 if reference is None else len(reference)
    if p < 1 or p - 1 > subfins:
        raise DimensionMismatch(f"p={p} requires between 0 and {subfins} varying conductivities")
    reference = fin_reference(p) if reference is None else np.asarray(reference, float)
    domain = fin_domain(p) if domain is None else domain

    nodes, triangles, regions, h = _structured_fin_mesh(subfins, mesh_density, geometry)
    blocks = _stiffness_blocks(nodes, triangles, regions, subfins + 1)

    n = len(nodes)
    root_rows, root_vals = [], []
    ext_rows, ext_cols, ext_vals = [], [], []
    for a, b in _boundary_edges(triangles):
        xa, ya = nodes[a]
        xb, yb = nodes[b]
        length = float(np.hypot(xb - xa, yb - ya))
        on_root = ya == 0.0 and yb == 0.0 and abs(xa) <= geometry.post_width / 2 + 1e-12 \
            and abs(xb) <= geometry.post_width / 2 + 1e-12
        if on_root:
            root_rows.extend([a, b])
            root_vals.extend([length / 2, length / 2])
        else:
            ext_rows.extend([a, a, b, b])
            ext_cols.extend([a, b, a, b])
            ext_vals.extend([length / 3, length / 6, length / 6, length / 3])
    rhs = np.zeros(n)
    np.add.at(rhs, root_rows, root_vals)
    boundary_mass = sp.csr_matrix((ext_vals, (ext_rows, ext_cols)), shape=(n, n))

    conductivity_map = np.full(subfins + 2, -1, dtype=int)
    for i in range(1, p):  # subfin i driven by mu_i for i <= p-1
        conductivity_map[i] = i - 1
    conductivity_map[subfins + 1] = p - 1  # Biot drives the boundary block
    theta = AffineTheta(conductivity_map=conductivity_map, p=p)

    affine = blocks + [boundary_mass]
    theta_ref = theta.evaluate(reference)
    metric_matrix = sum(t * A for t, A in zip(theta_ref, affine))
    metric = InnerProduct(sp.csr_matrix(metric_matrix))

    return HighFidelityModel(
        affine_matrices=affine,
        theta=theta,
        rhs=rhs,
        metric=metric,
        reference_parameter=reference,
        domain=domain,
        dof_count=n,
        nodes=nodes,
        triangles=triangles,
        regions=regions,
    )


def assemble_direct(model, mu):
    """Reassemble A(mu) from scratch with coefficients baked in (test oracle)."""
    theta = model.theta.evaluate(mu)
    region_coeff = theta[model.regions]
    x = model.nodes[model.triangles, 0]
    y = model.nodes[model.triangles, 1]
    b = np.stack([y[:, 1] - y[:, 2], y[:, 2] - y[:, 0], y[:, 0] - y[:, 1]], axis=1)
    c = np.stack([x[:, 2] - x[:, 1], x[:, 0] - x[:, 2], x[:, 1] - x[:, 0]], axis=1)
    area = 0.5 * (b[:, 0] * c[:, 1] - b[:, 1] * c[:, 0])
    local = region_coeff[:, None, None] * (
        b[:, :, None] * b[:, None, :] + c[:, :, None] * c[:, None, :]
    ) / (4.0 * area[:, None, None])
    rows = np.repeat(model.triangles, 3, axis=1).ravel()
    cols = np.tile(model.triangles, (1, 3)).ravel()
    n = model.dof_count
    stiffness = sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))
    return stiffness + theta[-1] * model.affine_matrices[-1]


def solve_high_fidelity(model, mu):
    """High-fidelity solution u(mu); residual verified to 1e-10 relative."""
    return model.solve(mu)


def solve_sensitivity(model, mu, i, u):
    """First parameter sensitivity du/dmu_i at mu, given the solution u there."""
    grad = model.theta.gradient(mu)[:, i]
    if not np.any(grad):
        return np.zeros_like(u)
    rhs = np.zeros_like(u)
    for dq, block in zip(grad, model.affine_matrices):
        if dq != 0.0:
            rhs -= dq * (block @ u)
    lu = model._factorize(mu)
    du = lu.solve(rhs)
    if not np.all(np.isfinite(du)):
        raise SolveFailure(f"sensitivity solve failed at mu={mu}, i={i}")
    return du


def solve_second_sensitivity(model, mu, i, j, du_i, du_j):
    """Second sensitivity; exploits that every theta_q is affine in mu."""
    grad = model.theta.gradient(mu)
    rhs = np.zeros(model.dof_count)
    for q, block in enumerate(model.affine_matrices):
        if grad[q, i] != 0.0:
            rhs -= grad[q, i] * (block @ du_j)
        if grad[q, j] != 0.0:
            rhs -= grad[q, j] * (block @ du_i)
    lu = model._factorize(mu)
    d2u = lu.solve(rhs)
    if not np.all(np.isfinite(d2u)):
        raise SolveFailure(f"second sensitivity solve failed at mu={mu}, ({i},{j})")
    return d2u
