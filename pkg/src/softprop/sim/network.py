"""Viscoelastic element network and its quasi-static solver.

Elements
--------
* axial springs on every scaffold edge, strain ``|x_b - x_a| - L0`` (mm);
* joint springs between the far ends of every non-collinear edge pair
  meeting at a node (flexure joints get their own, softer scale);
* affine bending terms ``sum_i w_i x_i`` that vanish at rest: straightness of
  consecutive beam nodes and planarity of the marker plate.

All elements share one normalised relaxation kernel (``E_rel(0) = 1``) scaled
by a per-element stiffness in N/mm, so the whole network relaxes like the
kernel under held deformation. Each time step solves for equilibrium with a
line-searched Newton method on the incremental potential, then advances the
internal Maxwell variables with the exact exponential recurrence.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from ..errors import GeometryError, SolverError
from ..viscoelastic import Mode, PAPER_RELAXATION, PronySeries, branch_factors
from .scaffold import PolyhedralScaffold

DEFAULT_GROUP_SCALES = {
    "beam_axial": 2000.0,
    "beam_bend": 1.0,
    "ring_axial": 200.0,
    "plate_axial": 200.0,
    "plate_flat": 50.0,
    "base_axial": 200.0,
    "ridge_axial": 2000.0,
    "joint": 1.0,
    "flexure": 0.2,
}
# band multipliers from ``profiles.calibrate`` on the default scaffold
CALIBRATED_LAYER_SCALES = {1: 0.45, 2: 0.489, 3: 0.504}


def normalized_kernel(p: PronySeries = PAPER_RELAXATION) -> PronySeries:
    if p.mode is not Mode.RELAXATION:
        raise ValueError("element kernel must be a Relaxation series")
    return p.scaled(1.0 / p.instantaneous)


@dataclass
class Load:
    """Boundary condition for one solve.

    ``points`` is a list of material points, each a ``(node_ids, weights)``
    pair interpolating along a beam. ``kind`` is ``"probe"`` (rigid indenter
    along ``direction`` whose face sits at ``value`` mm along that axis) or
    ``"force"`` (dead load of ``value`` N along ``direction`` shared equally by
    the points). ``kind="none"`` applies nothing.
    """

    kind: str = "none"
    points: list = field(default_factory=list)
    direction: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))
    value: float = 0.0
    probe_origin: float = 0.0  # probe face coordinate at zero depth
    friction: Optional[float] = None  # overrides the network coefficient (rollers: 0)

    def weight_matrix(self, n_nodes):
        W = np.zeros((len(self.points), n_nodes))
        for r, (ids, ws) in enumerate(self.points):
            W[r, ids] = ws
        return W


@dataclass
class SimFrame:
    time: float
    node_positions: np.ndarray
    marker_pose_true: np.ndarray  # (Dx, Dy, Dz mm, Drx, Dry, Drz deg)
    reaction_wrench: np.ndarray  # (Fx, Fy, Fz N, Tx, Ty, Tz Nm)
    contact_force: float
    probe_position: float
    residual: float = 0.0
    external_force: np.ndarray = field(default_factory=lambda: np.zeros(3))
    marker_rotation: Optional[np.ndarray] = None
    marker_translation: Optional[np.ndarray] = None


def kabsch(P0, P):
    """Least-squares rigid transform with ``P ~= R @ (P0 - c0) + c``."""
    c0, c = P0.mean(axis=0), P.mean(axis=0)
    H = (P0 - c0).T @ (P - c)
    U, _, Vt = np.linalg.svd(H)
    d = np.sign(np.linalg.det(Vt.T @ U.T))
    D = np.diag([1.0, 1.0, d])
    R = Vt.T @ D @ U.T
    return R, c0, c


def pose_vector(R, dt_vec):
    from ..vision import rotation_to_euler_deg

    return np.concatenate([dt_vec, rotation_to_euler_deg(R)])


class ElementNetwork:
    """Node/element network with per-element viscoelastic state.

    Positions are in mm, forces in N. The network is mutated by
    :meth:`solve`; use :meth:`clone` for independent runs.
    """

    def __init__(
        self,
        scaffold: PolyhedralScaffold,
        kernel: PronySeries = PAPER_RELAXATION,
        group_scales: Optional[dict] = None,
        layer_scales: Optional[dict] = None,
        contact_stiffness: float = 50.0,
        friction: float = 0.0,
        tol: float = 1e-8,
        max_iter: int = 100,
    ):
        self.scaffold = scaffold
        self.kernel = normalized_kernel(kernel)
        self.group_scales = dict(DEFAULT_GROUP_SCALES)
        if group_scales:
            unknown = set(group_scales) - set(DEFAULT_GROUP_SCALES)
            if unknown:
                raise KeyError(f"unknown element groups {sorted(unknown)}")
            self.group_scales.update(group_scales)
        # multiplier on every element whose nodes lie in a given layer band
        # (None -> calibrated defaults, {} -> all ones)
        if layer_scales is None:
            layer_scales = CALIBRATED_LAYER_SCALES
        self.layer_scales = {int(k): float(v) for k, v in layer_scales.items()}
        self.contact_stiffness = float(contact_stiffness)
        self.friction = float(friction)
        self.tol = tol
        self.max_iter = max_iter
        self.X0 = scaffold.nodes.copy()
        self.N = len(self.X0)
        fixed = np.zeros(self.N, dtype=bool)
        fixed[scaffold.base_nodes] = True
        self.fixed = fixed
        self.free_dofs = np.flatnonzero(np.repeat(~fixed, 3))
        self.marker_node_set = list(scaffold.plate_nodes)
        self._build_elements()
        self.reset()

    # ------------------------------------------------------------------ setup
    def _build_elements(self):
        sc = self.scaffold
        X = self.X0
        pairs, pair_group = [], []
        plate_e = set(sc.plate_edges)
        ring_e = {e for ids in sc.ring_edges.values() for e in ids}
        base_set = set(sc.base_nodes)
        for ei, (a, b) in enumerate(sc.edges):
            if a in base_set and b in base_set:
                continue  # both ends clamped: carries no load
            if ei in plate_e:
                g = "plate_axial"
            elif ei in ring_e:
                g = "plate_axial" if a in sc.plate_nodes and b in sc.plate_nodes and self._is_plate_ring(ei) else "ring_axial"
            elif sc.node_layer[a] == sc.layer_count + 1 and sc.node_layer[b] == sc.layer_count + 1:
                g = "ridge_axial"
            else:
                g = "beam_axial"
            pairs.append((a, b))
            pair_group.append(g)

        # joint springs across every non-collinear edge pair sharing a node
        adj = {i: [] for i in range(self.N)}
        for ei, (a, b) in enumerate(sc.edges):
            adj[a].append((b, ei))
            adj[b].append((a, ei))
        affine, affine_group = [], []
        beam_interior = {}
        for beam in sc.beams:
            for k in range(1, len(beam.nodes) - 1):
                beam_interior[beam.nodes[k]] = (beam.nodes[k - 1], beam.nodes[k + 1])
        for node in range(self.N):
            nbrs = adj[node]
            for i in range(len(nbrs)):
                for j in range(i + 1, len(nbrs)):
                    (na, ea), (nc, ec) = nbrs[i], nbrs[j]
                    if self.fixed[na] and self.fixed[nc]:
                        continue
                    u = X[na] - X[node]
                    v = X[nc] - X[node]
                    cosang = u @ v / (np.linalg.norm(u) * np.linalg.norm(v))
                    if cosang < -1 + 1e-9:
                        continue  # collinear: handled by a bending term
                    flex = ea in sc.flexure_edges or ec in sc.flexure_edges
                    if ea in plate_e or ec in plate_e:
                        continue
                    pairs.append((na, nc))
                    pair_group.append("flexure" if flex else "joint")
        for node, (a, c) in beam_interior.items():
            la = np.linalg.norm(X[node] - X[a])
            lc = np.linalg.norm(X[c] - X[node])
            s = la / (la + lc)
            affine.append(([a, node, c, a], [1 - s, -1.0, s, 0.0]))
            affine_group.append("beam_bend")
        pn = sc.plate_nodes
        if len(pn) == 4:
            P = X[pn]
            A = np.vstack([P.T, np.ones(4)])
            w = np.linalg.svd(A)[2][-1]
            w = w / np.max(np.abs(w))
            affine.append((list(pn), list(w)))
            affine_group.append("plate_flat")

        self.pair_a = np.array([p[0] for p in pairs], dtype=int)
        self.pair_b = np.array([p[1] for p in pairs], dtype=int)
        self.pair_group = np.array(pair_group)
        self.pair_L0 = np.linalg.norm(X[self.pair_b] - X[self.pair_a], axis=1)
        self.aff_idx = np.array([a[0] for a in affine], dtype=int).reshape(-1, 4)
        self.aff_w = np.array([a[1] for a in affine], dtype=float).reshape(-1, 4)
        self.aff_group = np.array(affine_group)
        self._refresh_scales()

    def _is_plate_ring(self, ei):
        a, b = self.scaffold.edges[ei]
        return self.scaffold.node_layer[a] == 1 and self.scaffold.node_layer[b] == 1 and ei in self.scaffold.ring_edges.get(1, [])

    def _element_layer(self, nodes):
        lay = self.scaffold.node_layer[np.asarray(nodes)]
        return int(lay.max())

    def _refresh_scales(self):
        gs = self.group_scales
        ls = self.layer_scales
        self.pair_c = np.array([gs[g] for g in self.pair_group], dtype=float)
        self.aff_c = np.array([gs[g] for g in self.aff_group], dtype=float)
        if ls:
            for i in range(len(self.pair_c)):
                self.pair_c[i] *= ls.get(self._element_layer([self.pair_a[i], self.pair_b[i]]), 1.0)
            for i in range(len(self.aff_c)):
                nodes = self.aff_idx[i][self.aff_w[i] != 0]
                self.aff_c[i] *= ls.get(self._element_layer(nodes), 1.0)
        self._hess_cache = {}
        self._pair_index_cache = None

    def set_scales(self, group_scales=None, layer_scales=None):
        if group_scales:
            self.group_scales.update(group_scales)
        if layer_scales is not None:
            self.layer_scales = {int(k): float(v) for k, v in layer_scales.items()}
        self._refresh_scales()

    @property
    def element_models(self):
        """Per-element Prony series (kernel scaled by the element stiffness)."""
        return [self.kernel.scaled(c) for c in np.concatenate([self.pair_c, self.aff_c])]

    @property
    def rest_lengths(self):
        return self.pair_L0.copy()

    def reset(self):
        nb = self.kernel.n_branches
        self.X = self.X0.copy()
        self.time = 0.0
        self.q_pair = np.zeros((len(self.pair_a), nb))
        self.g_pair = np.zeros(len(self.pair_a))
        self.q_aff = np.zeros((len(self.aff_idx), nb, 3))
        self.g_aff = np.zeros((len(self.aff_idx), 3))
        self._stick = {}
        self.last_load_value = 0.0
        self.last_load_kind = "none"

    def snapshot(self):
        return (self.X.copy(), self.q_pair.copy(), self.g_pair.copy(), self.q_aff.copy(), self.g_aff.copy(), self.time, dict(self._stick))

    def restore(self, snap):
        self.X, self.q_pair, self.g_pair, self.q_aff, self.g_aff, self.time, self._stick = snap

    def clone(self) -> "ElementNetwork":
        return copy.deepcopy(self)

    def transformed(self, R, t=np.zeros(3)) -> "ElementNetwork":
        """Copy of the network rigidly moved by ``x -> R x + t`` (states included)."""
        other = self.clone()
        R = np.asarray(R, float)
        other.X0 = self.X0 @ R.T + t
        other.X = self.X @ R.T + t
        other.q_aff = np.einsum("ij,ebj->ebi", R, self.q_aff)
        other.g_aff = self.g_aff @ R.T
        other.frame_R = R @ getattr(self, "frame_R", np.eye(3))
        other.frame_t = R @ getattr(self, "frame_t", np.zeros(3)) + t
        return other

    # -------------------------------------------------------------- mechanics
    def _kernel_terms(self, dt):
        decay, gain = branch_factors(self.kernel, dt)
        k = np.asarray(self.kernel.branch_coeffs)
        k_eff = self.kernel.base + float(np.sum(k * gain))
        return decay, gain, k, k_eff

    def _history(self, dt):
        decay, gain, k, k_eff = self._kernel_terms(dt)
        h_pair = self.q_pair @ decay - self.g_pair * float(np.sum(k * gain))
        h_aff = np.einsum("ebj,b->ej", self.q_aff, decay) - self.g_aff * float(np.sum(k * gain))
        return k_eff, h_pair, h_aff

    def _affine_hessian(self, k_eff):
        key = round(k_eff, 15)
        H = self._hess_cache.get(key)
        if H is None:
            n3 = 3 * self.N
            H = np.zeros((n3, n3))
            for idx, w, c in zip(self.aff_idx, self.aff_w, self.aff_c):
                for i in range(4):
                    for j in range(4):
                        if w[i] == 0 or w[j] == 0:
                            continue
                        H[3 * idx[i] : 3 * idx[i] + 3, 3 * idx[j] : 3 * idx[j] + 3] += c * k_eff * w[i] * w[j] * np.eye(3)
            self._hess_cache[key] = H
        return H

    def _pair_indices(self):
        if self._pair_index_cache is None:
            dofs = np.concatenate(
                [3 * self.pair_a[:, None] + np.arange(3), 3 * self.pair_b[:, None] + np.arange(3)], axis=1
            )
            n3 = 3 * self.N
            self._pair_index_cache = (dofs[:, :, None] * n3 + dofs[:, None, :]).ravel()
        return self._pair_index_cache

    def _affine_g(self, X):
        return np.einsum("ek,ekj->ej", self.aff_w, X[self.aff_idx])

    def _internal(self, X, k_eff, h_pair, h_aff, need_hess=True):
        """Internal energy, gradient (N, 3) and optionally the Hessian."""
        d = X[self.pair_b] - X[self.pair_a]
        length = np.linalg.norm(d, axis=1)
        if np.any(length <= 1e-9 * self.pair_L0):
            raise GeometryError("element inverted (non-positive length)")
        g = length - self.pair_L0
        c = self.pair_c
        f = c * (k_eff * g + h_pair)
        energy = float(np.sum(c * (0.5 * k_eff * g * g + h_pair * g)))
        u = d / length[:, None]
        grad = np.zeros_like(X)
        fu = f[:, None] * u
        np.add.at(grad, self.pair_b, fu)
        np.add.at(grad, self.pair_a, -fu)

        ga = self._affine_g(X)
        if len(ga):
            sa = self.aff_c[:, None] * (k_eff * ga + h_aff)
            energy += float(np.sum(self.aff_c[:, None] * (0.5 * k_eff * ga * ga + h_aff * ga)))
            contrib = self.aff_w[:, :, None] * sa[:, None, :]
            np.add.at(grad, self.aff_idx, contrib)
        if not need_hess:
            return energy, grad, None
        # pair Hessian blocks
        uu = u[:, :, None] * u[:, None, :]
        eye = np.eye(3)[None]
        K = (c * k_eff)[:, None, None] * uu + (f / length)[:, None, None] * (eye - uu)
        blocks = np.empty((len(K), 6, 6))
        blocks[:, :3, :3] = K
        blocks[:, 3:, 3:] = K
        blocks[:, :3, 3:] = -K
        blocks[:, 3:, :3] = -K
        n3 = 3 * self.N
        H = np.bincount(self._pair_indices(), weights=blocks.ravel(), minlength=n3 * n3).reshape(n3, n3)
        H += self._affine_hessian(k_eff)
        return energy, grad, H

    def _external(self, X, load: Load, W, need_hess=True):
        """Energy, gradient and Hessian of the load terms."""
        grad = np.zeros_like(X)
        if load.kind == "none" or not load.points:
            return 0.0, grad, None, np.zeros(3), np.zeros(len(load.points))
        n = np.asarray(load.direction, float)
        xm = W @ X
        if load.kind == "force":
            per = load.value / len(load.points)
            fpt = np.full(len(load.points), per)
            grad -= W.T @ (fpt[:, None] * n[None, :])
            energy = -float(np.sum(per * (xm @ n)))
            return energy, grad, None, n * load.value, fpt
        if load.kind != "probe":
            raise ValueError(f"unknown load kind {load.kind!r}")
        kp = self.contact_stiffness
        pen = np.maximum(load.value + load.probe_origin - xm @ n, 0.0)
        energy = float(0.5 * kp * np.sum(pen * pen))
        fpt = kp * pen
        grad -= W.T @ (fpt[:, None] * n[None, :])
        H = None
        if need_hess:
            active = pen > 0
            Wa = W[active]
            H = kp * np.kron(Wa.T @ Wa, np.outer(n, n))
        return energy, grad, H, n * float(np.sum(fpt)), fpt

    def _friction_forces(self, X, load, W, fpt):
        """Lagged Coulomb friction on probe contacts (stick anchors + slip cap)."""
        mu = self.friction if load.friction is None else load.friction
        if mu <= 0 or load.kind != "probe":
            return np.zeros_like(X)
        n = np.asarray(load.direction, float)
        kt = self.contact_stiffness
        out = np.zeros_like(X)
        xm = W @ X
        for r in range(len(load.points)):
            if fpt[r] <= 0:
                self._stick.pop(r, None)
                continue
            anchor = self._stick.setdefault(r, xm[r].copy())
            rel = xm[r] - anchor
            rel -= (rel @ n) * n
            ft = -kt * rel
            cap = mu * fpt[r]
            norm = np.linalg.norm(ft)
            if norm > cap:
                ft *= cap / norm
                self._stick[r] = xm[r] + ft / kt  # slide the anchor
            out += np.outer(W[r], ft)
        return out

    def solve(self, load: Load, dt: float, time: Optional[float] = None) -> SimFrame:
        """Equilibrium for ``load`` after advancing by ``dt``; states are committed."""
        if not dt > 0:
            raise ValueError("dt must be positive")
        W = load.weight_matrix(self.N) if load.points else np.zeros((0, self.N))
        k_eff, h_pair, h_aff = self._history(dt)
        X, residual = self._newton(load, W, k_eff, h_pair, h_aff)
        self._commit(X, dt)
        self.time = self.time + dt if time is None else time
        return self._frame(load, W, residual)

    def _newton(self, load, W, k_eff, h_pair, h_aff):
        free = self.free_dofs
        X = self.X.copy()
        f_fric = self._friction_forces(X, load, W, self._external(X, load, W, False)[4])

        def total(Xc, need_hess=True):
            e1, g1, H1 = self._internal(Xc, k_eff, h_pair, h_aff, need_hess)
            e2, g2, H2, _, _ = self._external(Xc, load, W, need_hess)
            e = e1 + e2 - float(np.sum(f_fric * Xc))
            g = g1 + g2 - f_fric
            H = None
            if need_hess:
                H = H1 if H2 is None else H1 + H2
            return e, g, H

        e, g, H = total(X)
        gf = g.ravel()[free]
        res = float(np.linalg.norm(gf))
        for _ in range(self.max_iter):
            if res < self.tol:
                return X, res
            Hf = H[np.ix_(free, free)]
            step, shifted = self._newton_step(Hf, gf)
            # backtracking line search on the incremental potential
            alpha = 1.0
            slope = float(gf @ step)
            accepted = False
            for _ls in range(30):
                Xn = X.copy()
                Xn.ravel()[free] += alpha * step
                try:
                    en, gn, Hn = total(Xn)
                except GeometryError:
                    alpha *= 0.5
                    continue
                gnf = gn.ravel()[free]
                resn = float(np.linalg.norm(gnf))
                if en <= e + 1e-4 * alpha * slope or resn < 0.9 * res:
                    accepted = True
                    break
                alpha *= 0.5
            if accepted and shifted and alpha == 1.0:
                # negative curvature: stretch the step while the potential keeps falling
                for _ls in range(6):
                    alpha *= 2.0
                    Xt = X.copy()
                    Xt.ravel()[free] += alpha * step
                    try:
                        et, gt, Ht = total(Xt)
                    except GeometryError:
                        break
                    if et >= en:
                        break
                    Xn, en, gn, Hn = Xt, et, gt, Ht
                    gnf = gn.ravel()[free]
                    resn = float(np.linalg.norm(gnf))
            if not accepted:
                # the predicted decrease is below energy round-off: nothing left to gain
                if -slope <= 64 * np.finfo(float).eps * max(1.0, abs(e)):
                    return X, res
                break
            X, e, g, H, gf, res = Xn, en, gn, Hn, gnf, resn
        if res < self.tol:
            return X, res
        raise SolverError(f"Newton did not converge (residual {res:.3e} N)", best=X, residual=res)

    @staticmethod
    def _newton_step(Hf, gf):
        shift = 0.0
        scale = float(np.mean(np.abs(np.diag(Hf)))) or 1.0
        for _ in range(20):
            try:
                cf = cho_factor(Hf + shift * np.eye(len(Hf)), check_finite=False)
                return -cho_solve(cf, gf, check_finite=False), shift > 0
            except LinAlgError:
                shift = max(shift * 10.0, 1e-8 * scale)
        return -gf / scale, True

    def _commit(self, X, dt):
        decay, gain, k, _ = self._kernel_terms(dt)
        d = X[self.pair_b] - X[self.pair_a]
        g = np.linalg.norm(d, axis=1) - self.pair_L0
        self.q_pair = self.q_pair * decay + (g - self.g_pair)[:, None] * (k * gain)
        self.g_pair = g
        ga = self._affine_g(X)
        self.q_aff = self.q_aff * decay[None, :, None] + (ga - self.g_aff)[:, None, :] * (k * gain)[None, :, None]
        self.g_aff = ga
        self.X = X

    # ---------------------------------------------------------------- outputs
    def internal_forces(self, X=None):
        """Gradient of the committed internal energy at ``X`` (N, 3)."""
        X = self.X if X is None else X
        # state already committed: evaluate stress directly from q and g
        d = X[self.pair_b] - X[self.pair_a]
        length = np.linalg.norm(d, axis=1)
        g = length - self.pair_L0
        f = self.pair_c * (self.kernel.base * g + self.q_pair.sum(axis=1))
        fu = f[:, None] * d / length[:, None]
        grad = np.zeros_like(X)
        np.add.at(grad, self.pair_b, fu)
        np.add.at(grad, self.pair_a, -fu)
        if len(self.aff_idx):
            ga = self._affine_g(X)
            sa = self.aff_c[:, None] * (self.kernel.base * ga + self.q_aff.sum(axis=1))
            np.add.at(grad, self.aff_idx, self.aff_w[:, :, None] * sa[:, None, :])
        return grad

    def base_frame(self):
        return getattr(self, "frame_R", np.eye(3)), getattr(self, "frame_t", np.zeros(3))

    def reaction_wrench(self):
        """Load carried into the clamped base: force (N) and moment about the base origin (Nm)."""
        R, t = self.base_frame()
        grad = self.internal_forces()
        fb = -grad[self.fixed]
        rb = self.X[self.fixed] - t
        F = fb.sum(axis=0)
        T = np.cross(rb, fb).sum(axis=0) / 1000.0
        return np.concatenate([F, T])

    def marker_pose(self):
        R_frame, t_frame = self.base_frame()
        if len(self.marker_node_set) < 3:
            return np.zeros(6), np.eye(3), np.zeros(3)
        P0 = self.X0[self.marker_node_set]
        P = self.X[self.marker_node_set]
        R, c0, c = kabsch(P0, P)
        # express in the network's own base frame
        R_local = R_frame.T @ R @ R_frame
        d_local = R_frame.T @ (c - c0)
        return pose_vector(R_local, d_local), R, c - c0

    def _frame(self, load, W, residual):
        _, _, _, fext, fpt = self._external(self.X, load, W, False)
        pose, R, dvec = self.marker_pose()
        probe_pos = load.value if load.kind == "probe" else float(np.mean(W @ self.X @ load.direction) - load.probe_origin) if load.points else 0.0
        return SimFrame(
            time=self.time,
            node_positions=self.X.copy(),
            marker_pose_true=pose,
            reaction_wrench=self.reaction_wrench(),
            contact_force=float(np.sum(fpt)),
            probe_position=float(probe_pos),
            residual=residual,
            external_force=fext,
            marker_rotation=R,
            marker_translation=dvec,
        )

    def stiffness_matrix(self, dt=1e9):
        """Tangent stiffness on the free DOFs at the current configuration."""
        k_eff, h_pair, h_aff = self._history(dt)
        _, _, H = self._internal(self.X, k_eff, h_pair, h_aff)
        return H[np.ix_(self.free_dofs, self.free_dofs)]


def solve_quasistatic(net: ElementNetwork, load: Load, dt: float, max_splits: int = 4) -> SimFrame:
    """Solve one step; on Newton failure retry with the step split in halves.

    Sub-steps interpolate the load value linearly between the last committed
    value and the requested one, each advancing half the time.
    """

    def attempt(v_from, v_to, step_dt, depth):
        ld = copy.copy(load)
        ld.value = v_to
        snapshot = net.snapshot()
        try:
            return net.solve(ld, step_dt)
        except SolverError:
            if depth >= max_splits:
                raise
            net.restore(snapshot)
            mid = 0.5 * (v_from + v_to)
            attempt(v_from, mid, step_dt / 2, depth + 1)
            return attempt(mid, v_to, step_dt / 2, depth + 1)

    start = net.last_load_value if net.last_load_kind == load.kind else 0.0
    frame = attempt(start, load.value, dt, 0)
    net.last_load_value = load.value
    net.last_load_kind = load.kind
    return frame
