"""KAN and MLP solution ansatzes with spatial jets and parameter Jacobians.

A :class:`Network` only describes structure; trainable values live in a flat
float64 parameter vector so the time integrator can treat them as a state.
Layer ``l`` of a KAN stores an ``(n_out, n_in, G + k + 2)`` block whose last
axis holds the spline coefficients followed by the base scale ``w_b`` and the
spline scale ``w_s`` of that edge. An MLP layer stores ``W`` then ``b``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .splines import DomainError, KnotVector, basis_functions, make_knots

KAN = "kan"
MLP = "mlp"
IDENTITY = "identity"
PERIODIC = "periodic"


@dataclass
class JetValue:
    """A value with its gradient and pure second derivatives.

    ``value`` has shape ``S``; ``grad`` and ``second`` have shape ``S + (d,)``.
    ``hessian`` (``S + (d, d)``) is only filled when cross terms are requested.
    """

    value: np.ndarray
    grad: np.ndarray
    second: np.ndarray
    hessian: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.grad.shape[-1]

    @property
    def laplacian(self) -> np.ndarray:
        return self.second.sum(axis=-1)


@dataclass
class EdgeFunction:
    coef: np.ndarray
    w_base: float = 1.0
    w_spline: float = 1.0


@dataclass
class KanLayer:
    n_in: int
    n_out: int
    edges: list[list[EdgeFunction]]
    knots: KnotVector


def silu(x):
    return x / (1.0 + np.exp(-x))


def _silu_jet(x):
    sig = 1.0 / (1.0 + np.exp(-x))
    s = x * sig
    ds = sig + s * (1.0 - sig)
    d2s = sig * (1.0 - sig) * (2.0 + x * (1.0 - 2.0 * sig))
    return s, ds, d2s


def edge_eval(e: EdgeFunction, knots: KnotVector, x: JetValue) -> JetValue:
    """Jet of ``w_b * silu(x) + w_s * sum_i c_i B_i(x)`` by the chain rule."""
    coef = np.asarray(e.coef, dtype=float)
    if coef.shape != (knots.n_basis,):
        raise DomainError(f"edge needs {knots.n_basis} coefficients, got {coef.shape}")
    z = np.asarray(x.value, dtype=float)
    B, dB, d2B = basis_functions(knots, z, derivatives=2)
    s, ds, d2s = _silu_jet(z)
    f = e.w_base * s + e.w_spline * (B @ coef)
    df = e.w_base * ds + e.w_spline * (dB @ coef)
    d2f = e.w_base * d2s + e.w_spline * (d2B @ coef)
    grad = df[..., None] * x.grad
    second = d2f[..., None] * x.grad**2 + df[..., None] * x.second
    hess = None
    if x.hessian is not None:
        g = x.grad
        hess = d2f[..., None, None] * g[..., :, None] * g[..., None, :] + df[..., None, None] * x.hessian
    return JetValue(f, grad, second, hess)


@dataclass(frozen=True)
class Network:
    """Layered ansatz ``x -> u`` with a fixed parameter layout.

    ``widths`` are the user-facing widths ``[d, n_1, ..., n_L]``; with the
    periodic embedding each input coordinate becomes a (sin, cos) pair so the
    first layer sees ``2 d`` features.
    """

    widths: tuple[int, ...]
    backend: str = KAN
    embedding: str = PERIODIC
    half_period: float = 1.0
    order: int = 3
    grid: int = 8
    domain: tuple[float, float] = (-1.0, 1.0)
    hidden_domain: tuple[float, float] | None = None
    edge_scales: bool = True

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if len(self.widths) < 2 or min(self.widths) < 1:
            raise DomainError(f"invalid widths {self.widths}")
        if self.backend not in (KAN, MLP):
            raise DomainError(f"unknown backend {self.backend!r}")
        if self.embedding not in (IDENTITY, PERIODIC):
            raise DomainError(f"unknown embedding {self.embedding!r}")
        if self.half_period <= 0:
            raise DomainError("half_period must be positive")
        if self.backend == KAN:
            self.knots  # validates order / grid / domain

    @property
    def dim(self) -> int:
        return self.widths[0]

    @property
    def n_outputs(self) -> int:
        return self.widths[-1]

    @cached_property
    def layer_widths(self) -> tuple[int, ...]:
        n0 = 2 * self.widths[0] if self.embedding == PERIODIC else self.widths[0]
        return (n0,) + self.widths[1:]

    @cached_property
    def knots(self) -> list[KnotVector]:
        if self.backend != KAN:
            return []
        hidden = self.hidden_domain or self.domain
        first = (-1.0, 1.0) if self.embedding == PERIODIC else self.domain
        doms = [first] + [hidden] * (len(self.layer_widths) - 2)
        return [make_knots(lo, hi, self.grid, self.order) for lo, hi in doms]

    @cached_property
    def n_basis(self) -> int:
        return self.grid + self.order

    @cached_property
    def layer_shapes(self) -> list[tuple[tuple[int, ...], ...]]:
        lw = self.layer_widths
        shapes = []
        for n_in, n_out in zip(lw[:-1], lw[1:]):
            if self.backend == KAN:
                per_edge = self.n_basis + (2 if self.edge_scales else 0)
                shapes.append(((n_out, n_in, per_edge),))
            else:
                shapes.append(((n_out, n_in), (n_out,)))
        return shapes

    @cached_property
    def _offsets(self) -> list[list[tuple[int, int, tuple[int, ...]]]]:
        pos, out = 0, []
        for shapes in self.layer_shapes:
            entries = []
            for shp in shapes:
                size = int(np.prod(shp))
                entries.append((pos, pos + size, shp))
                pos += size
            out.append(entries)
        return out

    @cached_property
    def n_params(self) -> int:
        return self._offsets[-1][-1][1]

    def unflatten(self, params: np.ndarray) -> list[list[np.ndarray]]:
        """Per-layer array views into ``params`` (no copies)."""
        params = np.asarray(params, dtype=float)
        if params.shape != (self.n_params,):
            raise DomainError(f"expected {self.n_params} parameters, got {params.shape}")
        return [[params[a:b].reshape(shp) for a, b, shp in layer] for layer in self._offsets]

    def flatten(self, layers: list[list[np.ndarray]]) -> np.ndarray:
        flat = np.empty(self.n_params)
        for entries, arrays in zip(self._offsets, layers):
            for (a, b, shp), arr in zip(entries, arrays):
                flat[a:b] = np.asarray(arr, dtype=float).reshape(-1)
        return flat

    def kan_layers(self, params: np.ndarray) -> list[KanLayer]:
        """Object view of a KAN parameter vector, edge by edge."""
        if self.backend != KAN:
            raise DomainError("kan_layers needs the KAN backend")
        nb = self.n_basis
        layers = []
        for (block,), kv in zip(self.unflatten(params), self.knots):
            n_out, n_in, _ = block.shape
            edges = [
                [
                    EdgeFunction(
                        block[o, i, :nb].copy(),
                        float(block[o, i, nb]) if self.edge_scales else 0.0,
                        float(block[o, i, nb + 1]) if self.edge_scales else 1.0,
                    )
                    for i in range(n_in)
                ]
                for o in range(n_out)
            ]
            layers.append(KanLayer(n_in, n_out, edges, kv))
        return layers


def init_params(net: Network, seed: int = 0) -> np.ndarray:
    """Seeded initial parameters.

    KAN: coefficients ~ U(-0.1, 0.1) / sqrt(G + k), ``w_b = w_s = 1``.
    MLP: Glorot-normal weights, zero biases.
    """
    rng = np.random.default_rng(seed)
    layers = []
    for shapes in net.layer_shapes:
        if net.backend == KAN:
            (shp,) = shapes
            block = np.empty(shp)
            nb = net.n_basis
            block[..., :nb] = rng.uniform(-0.1, 0.1, shp[:2] + (nb,)) / np.sqrt(nb)
            if net.edge_scales:
                block[..., nb:] = 1.0
            layers.append([block])
        else:
            (n_out, n_in), _ = shapes
            W = rng.normal(0.0, np.sqrt(2.0 / (n_in + n_out)), (n_out, n_in))
            layers.append([W, np.zeros(n_out)])
    return net.flatten(layers)


def _pairs(d: int, full: bool) -> tuple[np.ndarray, np.ndarray]:
    if full:
        a, b = np.meshgrid(np.arange(d), np.arange(d), indexing="ij")
        return a.ravel(), b.ravel()
    return np.arange(d), np.arange(d)


def _as_points(net: Network, x) -> tuple[np.ndarray, bool]:
    X = np.asarray(x, dtype=float)
    # a scalar, or a length-d vector when d > 1, is a single point
    single = X.ndim == 0 or (X.ndim == 1 and net.dim > 1)
    if X.ndim == 0:
        X = X.reshape(1, 1)
    elif X.ndim == 1:
        X = X.reshape(1, -1) if single else X.reshape(-1, 1)
    if X.ndim != 2 or X.shape[1] != net.dim:
        raise DomainError(f"points must have dimension {net.dim}, got shape {np.shape(x)}")
    return X, single


def _embed(net: Network, X: np.ndarray, pa, pb, order: int):
    P, d = X.shape
    m = len(pa)
    if net.embedding == IDENTITY:
        val = X.copy()
        grad = np.broadcast_to(np.eye(d), (P, d, d)).copy() if order else None
        sec = np.zeros((P, d, m)) if order >= 2 else None
        return val, grad, sec
    w = np.pi / net.half_period
    s, c = np.sin(w * X), np.cos(w * X)
    val = np.empty((P, 2 * d))
    val[:, 0::2], val[:, 1::2] = s, c
    grad = sec = None
    if order:
        grad = np.zeros((P, 2 * d, d))
        idx = np.arange(d)
        grad[:, 2 * idx, idx] = w * c
        grad[:, 2 * idx + 1, idx] = -w * s
    if order >= 2:
        sec = np.zeros((P, 2 * d, m))
        for j, (a, b) in enumerate(zip(pa, pb)):
            if a == b:
                sec[:, 2 * a, j] = -w * w * s[:, a]
                sec[:, 2 * a + 1, j] = -w * w * c[:, a]
    return val, grad, sec


def _contract(bases, coef):
    """``sum_b bases[p, i, b] coef[o, i, b]`` as ``(P, o, i)``, batched over edges inputs ``i``."""
    return np.matmul(bases.transpose(1, 0, 2), coef.transpose(1, 2, 0)).transpose(1, 2, 0)


def _kan_layer(block, kv, nb, scales, z, grad, sec, pa, pb, order, tape):
    need = max(order, 1 if tape is not None else 0)
    bases = basis_functions(kv, z, derivatives=min(need, 2))
    coef = block[..., :nb]
    P = z.shape[0]
    # one batched product for the spline and its derivatives
    stacked = _contract(np.concatenate(bases, axis=0), coef)
    spl = stacked[:P]
    if scales:
        wb, ws = block[..., nb], block[..., nb + 1]
        s, ds, d2s = _silu_jet(z)
        phi = wb * s[:, None, :] + ws * spl
    else:
        phi = spl
    out = phi.sum(axis=-1)
    dphi = d2phi = None
    if need >= 1:
        dspl = stacked[P:2 * P]
        dphi = wb * ds[:, None, :] + ws * dspl if scales else dspl
    if order >= 2:
        d2spl = stacked[2 * P:]
        d2phi = wb * d2s[:, None, :] + ws * d2spl if scales else d2spl
    g_out = np.matmul(dphi, grad) if order >= 1 else None
    s_out = None
    if order >= 2:
        gg = grad[:, :, pa] * grad[:, :, pb]
        s_out = np.matmul(d2phi, gg) + np.matmul(dphi, sec)
    if tape is not None:
        tape.append((bases[0], s if scales else None, spl, dphi))
    return out, g_out, s_out


def _mlp_layer(W, b, last, g, grad, sec, pa, pb, order, tape):
    pre = g @ W.T + b
    gp = np.einsum("oi,pid->pod", W, grad) if order >= 1 else None
    sp = np.einsum("oi,pim->pom", W, sec) if order >= 2 else None
    if last:
        if tape is not None:
            tape.append((g, np.ones_like(pre)))
        return pre, gp, sp
    t = np.tanh(pre)
    dt = 1.0 - t * t
    g_out = dt[..., None] * gp if order >= 1 else None
    s_out = None
    if order >= 2:
        d2t = -2.0 * t * dt
        s_out = d2t[..., None] * gp[:, :, pa] * gp[:, :, pb] + dt[..., None] * sp
    if tape is not None:
        tape.append((g, dt))
    return t, g_out, s_out


def _forward(net: Network, params, X, order: int, hessian: bool = False, tape=None):
    pa, pb = _pairs(net.dim, hessian)
    layers = net.unflatten(params)
    z, grad, sec = _embed(net, X, pa, pb, order)
    for li, arrays in enumerate(layers):
        if net.backend == KAN:
            z, grad, sec = _kan_layer(
                arrays[0], net.knots[li], net.n_basis, net.edge_scales, z, grad, sec, pa, pb, order, tape
            )
        else:
            W, b = arrays
            last = li == len(layers) - 1
            z, grad, sec = _mlp_layer(W, b, last, z, grad, sec, pa, pb, order, tape)
    return z, grad, sec


def _jet_from(net: Network, val, grad, sec, hessian: bool) -> JetValue:
    d = net.dim
    if hessian:
        H = sec.reshape(sec.shape[:-1] + (d, d))
        return JetValue(val, grad, np.diagonal(H, axis1=-2, axis2=-1).copy(), H)
    return JetValue(val, grad, sec)


def network_forward(net: Network, params, x) -> np.ndarray:
    """Outputs at one point ``(n_out,)`` or at many points ``(P, n_out)``."""
    X, single = _as_points(net, x)
    out, _, _ = _forward(net, params, X, order=0)
    return out[0] if single else out


def network_forward_jet(net: Network, params, x, hessian: bool = False) -> JetValue:
    """Outputs with first and pure second spatial derivatives.

    Shapes are ``(P, n_out)``, ``(P, n_out, d)``, ``(P, n_out, d)``; with
    ``hessian=True`` the full ``(P, n_out, d, d)`` Hessian is attached too.
    """
    X, single = _as_points(net, x)
    val, grad, sec = _forward(net, params, X, order=2, hessian=hessian)
    jet = _jet_from(net, val, grad, sec, hessian)
    if single:
        jet = JetValue(jet.value[0], jet.grad[0], jet.second[0], None if jet.hessian is None else jet.hessian[0])
    return jet


def _backprop(net: Network, params, tape, P: int) -> np.ndarray:
    q = net.n_outputs
    J = np.empty((P, q, net.n_params))
    adj = np.broadcast_to(np.eye(q), (P, q, q))
    layers = net.unflatten(params)
    nb = net.n_basis
    for li in range(len(layers) - 1, -1, -1):
        entries = net._offsets[li]
        if net.backend == KAN:
            block = layers[li][0]
            B, s, spl, dphi = tape[li]
            a, b, shp = entries[0]
            n_out, n_in, per_edge = shp
            # splitting the contiguous last axis is always a view into J
            Jl = J[:, :, a:b].reshape(P, q, n_out, n_in, per_edge)
            if net.edge_scales:
                ws = block[..., nb + 1]
                Jl[..., :nb] = (adj[:, :, :, None] * ws)[..., None] * B[:, None, None, :, :]
                Jl[..., nb] = adj[:, :, :, None] * s[:, None, None, :]
                Jl[..., nb + 1] = adj[:, :, :, None] * spl[:, None, :, :]
            else:
                Jl[...] = adj[:, :, :, None, None] * B[:, None, None, :, :]
            adj = np.matmul(adj, dphi)
        else:
            W, _ = layers[li]
            g, dt = tape[li]
            adj_pre = adj * dt[:, None, :]
            (aw, bw, (n_out, n_in)), (ab, bb, _) = entries
            J[:, :, aw:bw] = (adj_pre[:, :, :, None] * g[:, None, None, :]).reshape(P, q, -1)
            J[:, :, ab:bb] = adj_pre
            adj = adj_pre @ W
    return J.reshape(P * q, net.n_params)


def param_jacobian(net: Network, params, points) -> np.ndarray:
    """``d u_out(x_p) / d params`` with rows ordered (point, output)."""
    X, _ = _as_points(net, points)
    if X.shape[0] == 0:
        raise DomainError("empty collocation set")
    tape = []
    _forward(net, params, X, order=0, tape=tape)
    return _backprop(net, params, tape, X.shape[0])


def evaluate(net: Network, params, points, hessian: bool = False) -> tuple[JetValue, np.ndarray]:
    """Jets and the value Jacobian from one shared forward pass."""
    X, _ = _as_points(net, points)
    if X.shape[0] == 0:
        raise DomainError("empty collocation set")
    tape = []
    val, grad, sec = _forward(net, params, X, order=2, hessian=hessian, tape=tape)
    return _jet_from(net, val, grad, sec, hessian), _backprop(net, params, tape, X.shape[0])
