"""P1 Galerkin assembly on triangles.

Every nonlinear coefficient is evaluated at quadrature points of the
P1-interpolated iterate.  Element contributions are scattered into a fixed
CSR sparsity pattern with ``np.bincount``, so summation order and hence the
assembled values are deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .mesh import DirichletFixed, DirichletTransient, Mesh, NeumannNoFlow


@dataclass(frozen=True)
class QuadratureRule:
    """Barycentric points (Q, 3) and weights (Q,) summing to 1."""

    points: np.ndarray
    weights: np.ndarray
    degree: int


def dunavant4() -> QuadratureRule:
    """Six-point degree-4 rule (Dunavant 1985)."""
    a = 0.445948490915964886318329253883
    b = 0.091576213509770743459571463402
    wa = 0.223381589678011465944640848076
    wb = 0.109951743655321867388692484590
    pts = np.array([
        [a, a, 1 - 2 * a],
        [a, 1 - 2 * a, a],
        [1 - 2 * a, a, a],
        [b, b, 1 - 2 * b],
        [b, 1 - 2 * b, b],
        [1 - 2 * b, b, b],
    ])
    w = np.array([wa, wa, wa, wb, wb, wb])
    return QuadratureRule(pts, w, 4)


class SingularSystemError(RuntimeError):
    pass


@dataclass
class AssembledSystem:
    """Linear system restricted to the free (non-Dirichlet) nodes."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    dirichlet_values: dict
    free: np.ndarray
    dirichlet_nodes: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    dirichlet_array: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def expand(self, x_free: np.ndarray, n_nodes: int) -> np.ndarray:
        """Full nodal vector from the free-node solution plus Dirichlet data."""
        out = np.empty(n_nodes)
        out[self.free] = x_free
        out[self.dirichlet_nodes] = self.dirichlet_array
        return out


class P1Space:
    """Precomputed element geometry and sparsity pattern for one mesh."""

    def __init__(self, mesh: Mesh, rule: QuadratureRule | None = None):
        self.mesh = mesh
        self.rule = rule or dunavant4()
        tri = mesh.triangles
        p = mesh.nodes[tri]  # (E, 3, 2)
        area = mesh.signed_areas
        if np.any(area <= 0):
            raise ValueError("mesh has non-positive triangle areas")
        self.area = area
        # grad(lambda_k) for barycentric lambda_k: rotate opposite edge by 90 degrees
        e0 = p[:, 2] - p[:, 1]
        e1 = p[:, 0] - p[:, 2]
        e2 = p[:, 1] - p[:, 0]
        edges = np.stack([e0, e1, e2], axis=1)  # (E, 3, 2)
        self.grads = np.stack([-edges[..., 1], edges[..., 0]], axis=-1) / (2.0 * area[:, None, None])
        self.phi = self.rule.points  # (Q, 3): basis values at quadrature points
        self.wq = self.rule.weights
        self.qpoints = np.einsum("qk,ekd->eqd", self.phi, p)  # (E, Q, 2)

        n = mesh.n_nodes
        rows = np.repeat(tri, 3, axis=1).ravel()
        cols = np.tile(tri, (1, 3)).ravel()
        keys = rows * n + cols
        uniq, inv = np.unique(keys, return_inverse=True)
        self._scatter = inv
        self._indices = (uniq % n).astype(np.int32)
        self._indptr = np.searchsorted(uniq // n, np.arange(n + 1)).astype(np.int32)
        self._nnz = len(uniq)

    # -- helpers ---------------------------------------------------------
    def at_quadrature(self, coef) -> np.ndarray:
        """Values (E, Q) of the P1 field with nodal coefficients ``coef``."""
        coef = np.asarray(coef, dtype=float)
        return coef[self.mesh.triangles] @ self.phi.T

    def gradient(self, coef) -> np.ndarray:
        coef = np.asarray(coef, dtype=float)
        return np.einsum("ek,ekd->ed", coef[self.mesh.triangles], self.grads)

    def weight_at_quadrature(self, w) -> np.ndarray:
        """Normalize a weight given as scalar, (E, Q) array, nodal vector or
        callable ``w(x, z)`` to an (E, Q) array."""
        E, Q = len(self.area), len(self.wq)
        if callable(w):
            return np.broadcast_to(
                np.asarray(w(self.qpoints[..., 0], self.qpoints[..., 1]), dtype=float), (E, Q)
            )
        w = np.asarray(w, dtype=float)
        if w.ndim == 0:
            return np.full((E, Q), float(w))
        if w.shape == (E, Q):
            return w
        if w.shape == (self.mesh.n_nodes,):
            return self.at_quadrature(w)
        raise ValueError(f"cannot interpret weight of shape {w.shape}")

    def _matrix(self, local: np.ndarray) -> sp.csr_matrix:
        data = np.bincount(self._scatter, weights=local.ravel(), minlength=self._nnz)
        n = self.mesh.n_nodes
        return sp.csr_matrix((data, self._indices.copy(), self._indptr.copy()), shape=(n, n))

    def _vector(self, local: np.ndarray) -> np.ndarray:
        return np.bincount(
            self.mesh.triangles.ravel(), weights=local.ravel(), minlength=self.mesh.n_nodes
        )

    # -- forms -----------------------------------------------------------
    def weighted_mass(self, w=1.0) -> sp.csr_matrix:
        wq = self.weight_at_quadrature(w) * self.wq * self.area[:, None]
        local = np.einsum("eq,qa,qb->eab", wq, self.phi, self.phi)
        return self._matrix(local)

    def weighted_stiffness(self, k=1.0) -> sp.csr_matrix:
        kbar = (self.weight_at_quadrature(k) * self.wq).sum(axis=1) * self.area
        local = kbar[:, None, None] * np.einsum("ead,ebd->eab", self.grads, self.grads)
        return self._matrix(local)

    def gravity(self, k=1.0) -> np.ndarray:
        kbar = (self.weight_at_quadrature(k) * self.wq).sum(axis=1) * self.area
        return self._vector(kbar[:, None] * self.grads[..., 1])

    def newton_advection(self, kprime, psi) -> sp.csr_matrix:
        """N_ab = int K'(psi) (grad psi + e_z) . grad(phi_a) phi_b."""
        kq = self.weight_at_quadrature(kprime) * self.wq * self.area[:, None]
        flux = self.gradient(psi)
        flux[:, 1] += 1.0
        proj = np.einsum("ed,ead->ea", flux, self.grads)  # (E, 3) test side
        trial = kq @ self.phi  # (E, 3): int K' phi_b
        local = proj[:, :, None] * trial[:, None, :]
        return self._matrix(local)

    def load(self, values) -> np.ndarray:
        """b_a = int v phi_a for a weight ``values`` (see weight_at_quadrature)."""
        vq = self.weight_at_quadrature(values) * self.wq * self.area[:, None]
        return self._vector(vq @ self.phi)

    def theta_load(self, theta, psi) -> np.ndarray:
        return self.load(np.asarray(theta(self.at_quadrature(psi)), dtype=float))

    def source(self, f, t: float) -> np.ndarray:
        if f is None:
            return np.zeros(self.mesh.n_nodes)
        x, z = self.qpoints[..., 0], self.qpoints[..., 1]
        vals = np.broadcast_to(np.asarray(f(x, z, t), dtype=float), x.shape)
        return self.load(vals)


def p1_space(mesh: Mesh) -> P1Space:
    """Cached :class:`P1Space` for ``mesh``."""
    space = mesh._cache.get("p1")
    if space is None:
        space = mesh._cache["p1"] = P1Space(mesh)
    return space


def _space(mesh_or_space) -> P1Space:
    return mesh_or_space if isinstance(mesh_or_space, P1Space) else p1_space(mesh_or_space)


def assemble_weighted_mass(mesh, w=1.0):
    return _space(mesh).weighted_mass(w)


def assemble_weighted_stiffness(mesh, k=1.0):
    return _space(mesh).weighted_stiffness(k)


def assemble_gravity(mesh, k=1.0):
    return _space(mesh).gravity(k)


def assemble_newton_advection(mesh, kprime, psi):
    return _space(mesh).newton_advection(kprime, psi)


def assemble_theta_load(mesh, theta, psi):
    return _space(mesh).theta_load(theta, psi)


def assemble_source(mesh, f, t):
    return _space(mesh).source(f, t)


# -- Dirichlet data ------------------------------------------------------


def dirichlet_data(mesh: Mesh, t: float = 0.0, profiles: dict | None = None):
    """Nodes carrying Dirichlet data at time ``t`` and their values.

    A node touched by a Dirichlet edge is Dirichlet even if it also touches
    a no-flow edge.  Two different Dirichlet tags on one node must agree in
    value, otherwise ValueError is raised.
    """
    profiles = profiles or {}
    x, z = mesh.x, mesh.z
    values: dict[int, float] = {}
    owner: dict[int, object] = {}
    for (a, b), tag in zip(mesh.boundary_edges, mesh.tags):
        if isinstance(tag, NeumannNoFlow):
            continue
        nodes = np.array([a, b])
        if isinstance(tag, DirichletFixed):
            vals = tag.evaluate(x[nodes], z[nodes])
        elif isinstance(tag, DirichletTransient):
            try:
                prof = profiles[tag.profile]
            except KeyError:
                raise KeyError(f"no transient profile named {tag.profile!r}") from None
            vals = np.broadcast_to(np.asarray(prof(x[nodes], z[nodes], t), dtype=float), (2,))
        else:
            raise TypeError(f"unknown boundary tag {tag!r}")
        for node, v in zip(nodes.tolist(), vals.tolist()):
            if node in values and owner[node] != tag and abs(values[node] - v) > 1e-12:
                raise ValueError(
                    f"node {node} has conflicting Dirichlet tags {owner[node]!r} and {tag!r}"
                )
            values[node] = v
            owner.setdefault(node, tag)
    nodes = np.array(sorted(values), dtype=np.int64)
    return nodes, np.array([values[k] for k in nodes.tolist()], dtype=float)


def apply_dirichlet(matrix, rhs, mesh: Mesh, t: float = 0.0, profiles: dict | None = None,
                    dirichlet=None) -> AssembledSystem:
    """Eliminate Dirichlet nodes by lifting: A_ff x_f = b_f - A_fD psi_D."""
    if dirichlet is None:
        dirichlet = dirichlet_data(mesh, t, profiles)
    d_nodes, d_vals = dirichlet
    if len(d_nodes) == 0:
        raise SingularSystemError("no Dirichlet nodes: the pure-Neumann system is singular")
    n = mesh.n_nodes
    mask = np.ones(n, dtype=bool)
    mask[d_nodes] = False
    free = np.flatnonzero(mask)
    A = sp.csr_matrix(matrix)
    A_f = A[free]
    rhs_f = np.asarray(rhs, dtype=float)[free] - A_f[:, d_nodes] @ d_vals
    A_ff = A_f[:, free].tocsr()
    A_ff.sort_indices()
    return AssembledSystem(
        matrix=A_ff,
        rhs=rhs_f,
        dirichlet_values=dict(zip(d_nodes.tolist(), d_vals.tolist())),
        free=free,
        dirichlet_nodes=d_nodes,
        dirichlet_array=d_vals,
    )
