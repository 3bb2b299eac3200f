"""Collocation BEM for the interior Laplace Neumann problem.

The potential is represented as a single layer u(x) = int_S G(x, y)
gamma(y) dS(y) with a continuous piecewise-linear density on the panel
mesh.  Collocating the flux at the mesh nodes gives, at a node x_j of
the outer boundary with outward normal n(x_j),

    -1/2 gamma(x_j) + sum_panels int K(x_j, y) gamma(y) dS(y) = b(x_j),

the -1/2 being the interior limit of the adjoint double layer.  Closed
interfaces listed after the outer boundary are treated as insulators
(zero flux from the domain side); since their outward normals point
into the domain the jump term flips to +1/2 and the right-hand side is
zero there.

Off-diagonal entries come from the exact closed forms (vectorized over
panels, with the scalar path as fallback for flagged pairs).  Panels
incident to the collocation node -- where the flat-panel integral
diverges -- route to a pluggable singular-integral strategy: the
curvature-corrected closed form (QSA), zero, or one-point quadrature at
the flat or surface-projected centroid.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .batch import (
    FOUR_PI,
    g_panel_entries,
    k_panel_entries,
    k_row_sums,
    panel_frames,
    tangent_frames,
)
from .curvature import (
    FundamentalForm,
    estimate_fundamental_forms,
    estimate_normals,
    shape_operator,
    sphere_probe,
    torus_probe,
)
from .errors import ConvergenceFailure, DivergentIntegral
from .geometry import Panel, Target, rotation_to_z
from .mesh_io import SurfaceMesh, generate_sphere_mesh, generate_torus_mesh
from .panel_integrals import PanelPolynomial, integrate_g_panel, integrate_k_panel
from .qsa import foot_point, qsa_on_boundary

_HATS = [PanelPolynomial.linear(np.eye(3)[j]) for j in range(3)]
_PAIR_BUDGET = 150_000  # rows x panels per vectorized block


class SingularStrategy(Enum):
    """How to integrate K over panels incident to the collocation node."""

    QSA = "qsa"
    Zero = "zero"
    Centroid = "centroid"
    CentroidStar = "centroid_star"


class Regularization(Enum):
    """Rank-one gauge fix for the floating potential constant."""

    PinNode = "pin_node"
    MeanZero = "mean_zero"


@dataclass
class BemSystem:
    """Dense collocation system; row/column order follows the mesh nodes,
    meshes concatenated in the order given (offsets marks each start)."""

    matrix: np.ndarray
    rhs: np.ndarray
    offsets: tuple
    meshes: list = field(repr=False)

    @property
    def n(self) -> int:
        return len(self.rhs)


def kernel_k(x, n, y):
    """Pointwise K(x, y) = (x - y).n(x) / (4 pi |x - y|^3)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    diff = x - y
    r = np.linalg.norm(diff)
    return float(diff @ np.asarray(n, dtype=float)) / (FOUR_PI * r ** 3)


def nodal_areas(mesh: SurfaceMesh) -> np.ndarray:
    """One third of the incident panel area per node (hat-function mass)."""
    v = mesh.nodes[mesh.triangles]
    areas = 0.5 * np.linalg.norm(
        np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]), axis=1)
    out = np.zeros(len(mesh.nodes))
    np.add.at(out, mesh.triangles.ravel(),
              np.repeat(areas / 3.0, 3))
    return out


def _as_mesh_list(meshes):
    if isinstance(meshes, SurfaceMesh):
        return [meshes]
    return list(meshes)


class _Assembly:
    """Concatenated node/panel tables shared by the assembly loops."""

    def __init__(self, meshes, normals=None):
        self.meshes = _as_mesh_list(meshes)
        offs, nodes, nrms = [], [], []
        tris, mesh_id = [], []
        at = 0
        for m, mesh in enumerate(self.meshes):
            offs.append(at)
            nodes.append(mesh.nodes)
            got = None if normals is None else normals[m]
            nrms.append(estimate_normals(mesh) if got is None
                        else np.asarray(got, dtype=float))
            tris.append(mesh.triangles + at)
            mesh_id.append(np.full(len(mesh.triangles), m))
            at += len(mesh.nodes)
        self.offsets = tuple(offs)
        self.nodes = np.concatenate(nodes)
        self.normals = np.concatenate(nrms)
        self.tris = np.concatenate(tris)
        self.mesh_id = np.concatenate(mesh_id)
        self.verts = self.nodes[self.tris]
        self.frames = panel_frames(self.verts)
        self.areas = 0.5 * np.linalg.norm(
            np.cross(self.verts[:, 1] - self.verts[:, 0],
                     self.verts[:, 2] - self.verts[:, 0]), axis=1)
        self.centroids = self.verts.mean(axis=1)
        self.incident = [[] for _ in range(len(self.nodes))]
        for p, tri in enumerate(self.tris):
            for v in tri:
                self.incident[v].append(p)

    def mesh_of_node(self, i):
        m = np.searchsorted(self.offsets, i, side="right") - 1
        return int(m)

    def row_blocks(self):
        blk = max(1, _PAIR_BUDGET // max(len(self.tris), 1))
        for start in range(0, len(self.nodes), blk):
            yield start, min(start + blk, len(self.nodes))


def _node_form(forms, asm, i):
    m = asm.mesh_of_node(i)
    if forms is None or forms[m] is None:
        raise DivergentIntegral(
            "missing curvature data: this strategy needs per-node "
            "fundamental forms (or a surface probe)")
    return forms[m][i - asm.offsets[m]]


def _patch_projection(x, normal, form, centroid):
    """Project a panel centroid onto the node's osculating quadratic."""
    b1, b2 = form.basis
    rel = centroid - x
    s1 = float(rel @ b1)
    s2 = float(rel @ b2)
    height = 0.5 * (form.k11 * s1 * s1 + 2.0 * form.k12 * s1 * s2
                    + form.k22 * s2 * s2)
    return x + s1 * b1 + s2 * b2 + height * np.asarray(normal, dtype=float)


def _strategy_hat_values(strategy, asm, i, p, forms, probes):
    """The three vertex-hat integrals of an incident (or divergent) panel."""
    x = asm.nodes[i]
    n = asm.normals[i]
    if strategy is SingularStrategy.Zero:
        return np.zeros(3)
    if strategy is SingularStrategy.Centroid:
        k = kernel_k(x, n, asm.centroids[p])
        return np.full(3, k * asm.areas[p] / 3.0)
    if strategy is SingularStrategy.CentroidStar:
        m = asm.mesh_of_node(i)
        probe = None if probes is None else probes[m]
        if probe is not None:
            star, _ = foot_point(probe, asm.centroids[p])
        else:
            star = _patch_projection(x, n, _node_form(forms, asm, i),
                                     asm.centroids[p])
        k = kernel_k(x, n, star)
        return np.full(3, k * asm.areas[p] / 3.0)
    form = _node_form(forms, asm, i)
    panel = Panel(*asm.verts[p])
    target = Target(x, n)
    return np.array([qsa_on_boundary(panel, target, form, h) for h in _HATS])


def assemble(meshes, strategy=SingularStrategy.QSA, forms=None, *,
             normals=None, probes=None, neumann_bc=None,
             row_block=None) -> BemSystem:
    """Dense collocation matrix and right-hand side.

    meshes: one SurfaceMesh or a list; the first is the outer boundary
    (jump -1/2, Neumann data `neumann_bc`), later ones are enclosed
    insulating interfaces (+1/2 jump, zero flux).  forms/normals/probes
    are per-mesh lists; normals default to the angle-weighted estimate.
    Incident and flat-singular panels route through `strategy`.
    """
    asm = _Assembly(meshes, normals)
    if strategy is SingularStrategy.QSA and forms is None:
        raise DivergentIntegral(
            "missing curvature data: QSA assembly needs per-node forms")
    if strategy is SingularStrategy.CentroidStar and forms is None \
            and probes is None:
        raise DivergentIntegral(
            "CentroidStar needs a surface probe or fitted patch forms")
    n_nodes = len(asm.nodes)
    matrix = np.zeros((n_nodes, n_nodes))
    blk = row_block or None
    for start, stop in (asm.row_blocks() if blk is None else
                        [(s, min(s + blk, n_nodes))
                         for s in range(0, n_nodes, blk)]):
        vals, fb = k_panel_entries(asm.nodes[start:stop],
                                   asm.normals[start:stop],
                                   asm.verts, frames=asm.frames)
        for i in range(start, stop):
            v = vals[i - start]
            flagged = fb[i - start].copy()
            inc = asm.incident[i]
            flagged[inc] = False
            target = Target(asm.nodes[i], asm.normals[i])
            for p in np.nonzero(flagged)[0]:
                panel = Panel(*asm.verts[p])
                try:
                    v[p] = [integrate_k_panel(panel, target, h)
                            for h in _HATS]
                except DivergentIntegral:
                    v[p] = _strategy_hat_values(strategy, asm, i, int(p),
                                                forms, probes)
            for p in inc:
                v[p] = _strategy_hat_values(strategy, asm, i, p,
                                            forms, probes)
            matrix[i] = np.bincount(asm.tris.ravel(), weights=v.ravel(),
                                    minlength=n_nodes)
    for i in range(n_nodes):
        matrix[i, i] += -0.5 if asm.mesh_of_node(i) == 0 else 0.5
    rhs = np.zeros(n_nodes)
    if neumann_bc is not None:
        head = len(asm.meshes[0].nodes)
        rhs[:head] = [float(neumann_bc(x)) for x in asm.meshes[0].nodes]
    return BemSystem(matrix, rhs, asm.offsets, asm.meshes)


def sphere_forms(mesh: SurfaceMesh, radius=None):
    """Analytic fundamental forms of a centered sphere mesh (-1/R times I)."""
    r = float(np.mean(np.linalg.norm(mesh.nodes, axis=1))) if radius is None \
        else float(radius)
    n = mesh.nodes / np.linalg.norm(mesh.nodes, axis=1, keepdims=True)
    t1, t2 = tangent_frames(n)
    return [FundamentalForm(-1.0 / r, 0.0, -1.0 / r,
                            np.vstack([t1[i], t2[i]]))
            for i in range(len(mesh.nodes))]


def probe_forms(probe, points, normals):
    """Per-node fundamental forms from an implicit-surface probe."""
    out = []
    for x, n in zip(np.asarray(points, dtype=float),
                    np.asarray(normals, dtype=float)):
        shape = shape_operator(probe, x)
        basis = rotation_to_z(n)[:2]
        k = basis @ shape @ basis.T
        out.append(FundamentalForm(k[0, 0], 0.5 * (k[0, 1] + k[1, 0]),
                                   k[1, 1], basis.copy()))
    return out


def identity_row_parts(mesh: SurfaceMesh, normals=None):
    """Strategy-independent pieces of the closed-surface Gauss identity.

    Returns (base, pending, normals): base[i] holds the non-incident
    sum of int K dS over panels, pending[i] lists the panel ids whose
    value depends on the singular strategy (the incident set, plus any
    pair whose flat frame is singular for that node).
    """
    asm = _Assembly(mesh, None if normals is None else [normals])
    n_nodes = len(asm.nodes)
    base = np.zeros(n_nodes)
    pending = [list(asm.incident[i]) for i in range(n_nodes)]
    for start, stop in asm.row_blocks():
        sums, fb = k_row_sums(asm.nodes[start:stop], asm.normals[start:stop],
                              asm.verts, frames=asm.frames)
        for i in range(start, stop):
            row = sums[i - start]
            flagged = fb[i - start].copy()
            flagged[asm.incident[i]] = False
            row[asm.incident[i]] = 0.0
            target = Target(asm.nodes[i], asm.normals[i])
            for p in np.nonzero(flagged)[0]:
                row[p] = 0.0
                try:
                    row[p] = integrate_k_panel(Panel(*asm.verts[p]), target)
                except DivergentIntegral:
                    pending[i].append(int(p))
            base[i] = row.sum()
    return base, pending, asm.normals


def sphere_identity_test(mesh: SurfaceMesh, strategy, forms=None,
                         normals=None, parts=None):
    """Per-node relative error of sum_panels int K dS against 0.5.

    The exact value for a target on a closed surface with outward normal
    is +1/2 (half the solid angle seen from the surface).  Returns
    (max_error, per_node_errors).  `parts` accepts the output of
    identity_row_parts to share the strategy-independent work.
    """
    if parts is None:
        parts = identity_row_parts(mesh, normals)
    base, pending, nrm = parts
    if forms is None:
        forms = sphere_forms(mesh)
    asm = _Assembly(mesh, [nrm])
    totals = base.copy()
    const = PanelPolynomial.constant(1.0)
    for i in range(len(totals)):
        x, n = asm.nodes[i], nrm[i]
        for p in pending[i]:
            if strategy is SingularStrategy.Zero:
                continue
            if strategy is SingularStrategy.Centroid:
                totals[i] += kernel_k(x, n, asm.centroids[p]) * asm.areas[p]
            elif strategy is SingularStrategy.CentroidStar:
                star = _patch_projection(x, n, forms[i], asm.centroids[p])
                totals[i] += kernel_k(x, n, star) * asm.areas[p]
            else:
                totals[i] += qsa_on_boundary(Panel(*asm.verts[p]),
                                             Target(x, n), forms[i], const)
    errors = np.abs(totals - 0.5) / 0.5
    return float(errors.max()), errors


def solve(system: BemSystem, regularization=Regularization.PinNode):
    """Density gamma from a dense LU solve with a rank-one gauge fix.

    The pure-Neumann operator has a one-dimensional kernel (the
    equilibrium density), so one scalar constraint is appended through a
    bordered square system.  PinNode pins the mean over nodes of the
    single-layer potential to zero; MeanZero pins the area-weighted mean
    of gamma itself.
    """
    a = system.matrix
    b = system.rhs
    n = system.n
    if regularization is Regularization.MeanZero:
        weights = np.concatenate([nodal_areas(m) for m in system.meshes])
    else:
        gmat = single_layer_matrix(system.meshes)
        weights = gmat.mean(axis=0)
    scale = np.abs(weights).sum() / n
    bordered = np.zeros((n + 1, n + 1))
    bordered[:n, :n] = a
    bordered[:n, n] = 1.0
    bordered[n, :n] = weights / scale
    try:
        sol = np.linalg.solve(bordered, np.concatenate([b, [0.0]]))
    except np.linalg.LinAlgError as exc:
        raise ConvergenceFailure(
            "singular collocation matrix after regularization") from exc
    return sol[:n]


def single_layer_matrix(meshes, row_block=None):
    """Dense matrix of int G(x_i, y) hat_j(y) dS at the mesh nodes."""
    asm = _Assembly(meshes)
    n_nodes = len(asm.nodes)
    out = np.zeros((n_nodes, n_nodes))
    for start, stop in asm.row_blocks():
        vals, fb = g_panel_entries(asm.nodes[start:stop], asm.verts,
                                   frames=asm.frames)
        for i in range(start, stop):
            v = vals[i - start]
            target = Target(asm.nodes[i])
            for p in np.nonzero(fb[i - start])[0]:
                v[p] = [integrate_g_panel(Panel(*asm.verts[p]), target, h)
                        for h in _HATS]
            out[i] = np.bincount(asm.tris.ravel(), weights=v.ravel(),
                                 minlength=n_nodes)
    return out


def evaluate_potential(meshes, gamma, points, row_block=None):
    """u(x) = int G gamma dS at arbitrary points via the closed forms."""
    asm = _Assembly(meshes)
    gamma = np.asarray(gamma, dtype=float)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    u = np.zeros(len(points))
    blk = row_block or max(1, _PAIR_BUDGET // max(len(asm.tris), 1))
    gamma_tri = gamma[asm.tris]      # (P, 3)
    for start in range(0, len(points), blk):
        stop = min(start + blk, len(points))
        vals, fb = g_panel_entries(points[start:stop], asm.verts,
                                   frames=asm.frames)
        for j in np.nonzero(fb.any(axis=1))[0]:
            target = Target(points[start + j])
            for p in np.nonzero(fb[j])[0]:
                vals[j, p] = [integrate_g_panel(Panel(*asm.verts[p]),
                                                target, h) for h in _HATS]
        u[start:stop] = np.einsum("bpm,pm->b", vals, gamma_tri)
    return u


def potential_gradient(meshes, gamma, points, row_block=None):
    """grad u of the single layer at points off the panel surfaces.

    Exact for the discrete layer: d_k u = sum_panels int (x - y).e_k /
    (4 pi r^3) gamma(y) dS is the K engine evaluated with the basis
    vectors in place of the target normal, so no finite differencing is
    involved.  Points on the layer itself have no single-sided value.
    """
    asm = _Assembly(meshes)
    gamma_tri = np.asarray(gamma, dtype=float)[asm.tris]
    points = np.atleast_2d(np.asarray(points, dtype=float))
    m = len(points)
    targets = np.repeat(points, 3, axis=0)
    directions = np.tile(np.eye(3), (m, 1))
    out = np.zeros(3 * m)
    blk = row_block or max(1, _PAIR_BUDGET // max(len(asm.tris), 1))
    for start in range(0, 3 * m, blk):
        stop = min(start + blk, 3 * m)
        vals, fb = k_panel_entries(targets[start:stop],
                                   directions[start:stop],
                                   asm.verts, frames=asm.frames)
        for j in np.nonzero(fb.any(axis=1))[0]:
            t = Target(targets[start + j], directions[start + j])
            for p in np.nonzero(fb[j])[0]:
                vals[j, p] = [integrate_k_panel(Panel(*asm.verts[p]), t, h)
                              for h in _HATS]
        out[start:stop] = np.einsum("bpm,pm->b", vals, gamma_tri)
    return out.reshape(m, 3)


def enclosing_flux(meshes, gamma, radius=0.7, center=None, n=400):
    """Net flux of grad u through a sphere, by golden-spiral quadrature.

    Zero (to discretization error) whenever the sphere encloses only
    insulating interfaces, since u is harmonic between the layers.
    """
    center = np.zeros(3) if center is None else np.asarray(center, dtype=float)
    golden = np.pi * (3.0 - np.sqrt(5.0))
    i = np.arange(n)
    z = 1.0 - (2.0 * i + 1.0) / n
    rho = np.sqrt(np.maximum(0.0, 1.0 - z * z))
    dirs = np.column_stack([rho * np.cos(golden * i),
                            rho * np.sin(golden * i), z])
    grad = potential_gradient(meshes, gamma, center + radius * dirs)
    return float((grad * dirs).sum(1).mean() * 4.0 * np.pi * radius ** 2)


def torus_flux_diagnostic(meshes, gamma, probe, mesh_index=1, n_samples=80):
    """Normal-flux leakage through an insulating interface.

    Samples the interface at panel-centroid projections onto the true
    surface (strictly off the flat discrete layer, so the gradient there
    is single-valued), and reports |grad u . n| against the field.  The
    per-point ratio |grad u . n| / |grad u| blows up at flow stagnation
    points where the whole field vanishes, so the stable figure of merit
    scales by the strongest sampled field instead.
    """
    meshes = _as_mesh_list(meshes)
    surf = meshes[mesh_index]
    step = max(1, surf.n_triangles // n_samples)
    sel = np.arange(0, surf.n_triangles, step)[:n_samples]
    cents = surf.nodes[surf.triangles[sel]].mean(axis=1)
    stars = np.array([foot_point(probe, c)[0] for c in cents])
    nstar = np.array([probe.gradient(x) for x in stars])
    nstar /= np.linalg.norm(nstar, axis=1, keepdims=True)
    grad = potential_gradient(meshes, gamma, stars)
    normal_flux = np.abs((grad * nstar).sum(1))
    mag = np.linalg.norm(grad, axis=1)
    return {
        "points": stars,
        "grad": grad,
        "normal_flux": normal_flux,
        "field_scale_ratio": normal_flux / mag.max(),
        "per_point_ratio": normal_flux / mag,
    }


def sphere_neumann_problem(subdivisions=4, strategy=SingularStrategy.QSA):
    """Unit-sphere Neumann problem with du/dn = x1 (exact interior u = x1)."""
    mesh = generate_sphere_mesh(subdivisions)
    normals = mesh.nodes / np.linalg.norm(mesh.nodes, axis=1, keepdims=True)
    forms = sphere_forms(mesh, radius=1.0)
    system = assemble([mesh], strategy, [forms], normals=[normals],
                      neumann_bc=lambda x: x[0])
    return mesh, system


def torus_in_sphere_problem(subdivisions=4, n_u=48, n_v=24,
                            major=0.4, minor=0.2,
                            strategy=SingularStrategy.QSA):
    """Insulating torus inside the unit sphere, driven by b = cos(phi).

    Returns (meshes, system, probes): the sphere carries the Neumann data
    b(x) = x1/|(x1, x2)| and the torus rows enforce zero flux from the
    domain side.
    """
    sphere = generate_sphere_mesh(subdivisions)
    torus = generate_torus_mesh(major, minor, n_u, n_v)
    s_norm = sphere.nodes / np.linalg.norm(sphere.nodes, axis=1, keepdims=True)
    t_probe = torus_probe(major, minor)
    t_norm = np.array([t_probe.gradient(x) for x in torus.nodes])
    t_norm /= np.linalg.norm(t_norm, axis=1, keepdims=True)
    forms = [sphere_forms(sphere, radius=1.0),
             probe_forms(t_probe, torus.nodes, t_norm)]
    probes = [sphere_probe(1.0), t_probe]

    def bc(x):
        rho = np.hypot(x[0], x[1])
        return x[0] / rho if rho > 1e-12 else 0.0

    system = assemble([sphere, torus], strategy, forms,
                      normals=[s_norm, t_norm], probes=probes,
                      neumann_bc=bc)
    return [sphere, torus], system, probes


def export_solution(path, meshes, gamma, probes=None, u=None):
    """JSON dump of the solved state: nodes, gamma, probe points, u."""
    meshes = _as_mesh_list(meshes)
    nodes = np.concatenate([m.nodes for m in meshes])
    payload = {
        "nodes": np.asarray(nodes, dtype=float).tolist(),
        "gamma": np.asarray(gamma, dtype=float).tolist(),
        "probes": [] if probes is None
        else np.asarray(probes, dtype=float).tolist(),
        "u": [] if u is None else np.asarray(u, dtype=float).tolist(),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh)
