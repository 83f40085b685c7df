"""Desk-scale objectives with controllable layer-wise smoothness.

Three problem families share one duck-typed interface (``b``, ``shapes``,
``f_star``, ``value_and_grad(layers)``):

* ``SeparableQuadratic`` -- per-layer quadratics with no cross terms; the
  curvature may be a scalar per layer or an elementwise weight array, so the
  per-layer Hessian spectrum (and hence the slack in the descent inequality)
  is fully controllable while f* = 0 stays exact.
* ``CoupledQuadratic`` -- adjacent layers coupled through fixed linear maps,
  which makes the layer-wise constants genuinely depend on which other layers
  move; constants come from block operator norms of the assembled Hessian.
* ``TinyMlp`` -- a small dense network with manual backpropagation, a
  truncated backward pass (gradients only for layers >= s), and a
  frozen-prefix forward cache that counts multiply-accumulate operations.

``stoch_grad`` adds zero-mean Gaussian noise scaled so that the expected
squared Frobenius noise norm per layer equals sigma_i^2.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .costmodel import SmoothnessTable, TableMode
from .geometry import NormKind
from .sampling import EpochShiftRpt, FullNetwork, PartitionedSubmodel, Rpt, SamplingScheme

__all__ = [
    "SeparableQuadratic",
    "CoupledQuadratic",
    "TinyMlp",
    "NoiseSpec",
    "CachedForward",
    "value_and_grad",
    "stoch_grad",
    "smoothness_constants",
]


def _as_layer_list(arrays: Sequence[np.ndarray]) -> list[np.ndarray]:
    return [np.asarray(a, dtype=float) for a in arrays]


class SeparableQuadratic:
    """f(X) = sum_i 1/2 <W_i * (X_i - A_i), X_i - A_i> with elementwise weights.

    ``curvatures[i]`` may be a positive scalar (the classic a_i/2 ||X_i - A_i||^2
    layer) or an array of positive entry weights matching the layer shape.
    The minimum is X = A with f* = 0.
    """

    def __init__(self, targets: Sequence[np.ndarray], curvatures: Sequence) -> None:
        self.targets = _as_layer_list(targets)
        if len(curvatures) != len(self.targets):
            raise ValueError("one curvature per layer required")
        self.weights = []
        for a, w in zip(self.targets, curvatures):
            warr = np.broadcast_to(np.asarray(w, dtype=float), a.shape).copy()
            if np.any(warr <= 0.0):
                raise ValueError("curvatures must be positive")
            self.weights.append(warr)
        self.f_star = 0.0

    @property
    def b(self) -> int:
        return len(self.targets)

    @property
    def shapes(self) -> list[tuple[int, int]]:
        return [a.shape for a in self.targets]

    def value_and_grad(self, layers: Sequence[np.ndarray]) -> tuple[float, list[np.ndarray]]:
        layers = _as_layer_list(layers)
        if [x.shape for x in layers] != self.shapes:
            raise ValueError("layer shapes do not match the problem")
        val = 0.0
        grads = []
        for x, a, w in zip(layers, self.targets, self.weights):
            e = x - a
            val += 0.5 * float(np.sum(w * e * e))
            grads.append(w * e)
        return val, grads

    def layer_l0(self, i: int) -> float:
        """Exact Euclidean-norm curvature bound for layer i (1-based): max weight."""
        return float(self.weights[i - 1].max())


class CoupledQuadratic:
    """Adjacent-layer coupled quadratic with exact subset-dependent constants.

    f(X) = sum_i a_i/2 ||X_i - A_i||_F^2
         + coupling * sum_{i<b} <vec(X_i - A_i), R_i vec(X_{i+1} - A_{i+1})>
         + <tilt, vec(X - A)>

    The coupling maps R_i are normalized to unit operator norm, so the overall
    Hessian is block tridiagonal with off-diagonal blocks of norm ``coupling``.
    Positive semidefiniteness is checked at construction; f* comes from a
    direct linear solve on the assembled (desk-scale) Hessian.
    """

    def __init__(
        self,
        targets: Sequence[np.ndarray],
        curvatures: Sequence[float],
        coupling: float,
        coupling_maps: Sequence[np.ndarray] | None = None,
        tilt: Sequence[np.ndarray] | None = None,
        rng: np.random.Generator | None = None,
    ) -> None:
        self.targets = _as_layer_list(targets)
        self.curvatures = [float(a) for a in curvatures]
        if len(self.curvatures) != self.b or any(a <= 0 for a in self.curvatures):
            raise ValueError("need one positive curvature per layer")
        self.coupling = float(coupling)
        dims = [a.size for a in self.targets]
        if coupling_maps is None:
            rng = rng or np.random.default_rng(0)
            coupling_maps = [
                rng.standard_normal((dims[i], dims[i + 1])) for i in range(self.b - 1)
            ]
        self.maps = []
        for i, r in enumerate(coupling_maps):
            r = np.asarray(r, dtype=float)
            if r.shape != (dims[i], dims[i + 1]):
                raise ValueError(f"coupling map {i} has wrong shape")
            op = np.linalg.norm(r, 2)
            self.maps.append(r / op if op > 0 else r)
        self.tilt = None
        if tilt is not None:
            self.tilt = _as_layer_list(tilt)
            if [t.shape for t in self.tilt] != self.shapes:
                raise ValueError("tilt shapes must match layer shapes")

        self._hessian = self._assemble_hessian()
        eigmin = float(np.linalg.eigvalsh(self._hessian).min())
        if eigmin < -1e-10:
            raise ValueError(f"Hessian not PSD (min eigenvalue {eigmin:.3e}); reduce coupling")
        if self.tilt is None:
            self.f_star = 0.0
        else:
            t = np.concatenate([x.ravel() for x in self.tilt])
            zstar = np.linalg.lstsq(self._hessian, -t, rcond=None)[0]
            self.f_star = float(0.5 * zstar @ self._hessian @ zstar + t @ zstar)

    @property
    def b(self) -> int:
        return len(self.targets)

    @property
    def shapes(self) -> list[tuple[int, int]]:
        return [a.shape for a in self.targets]

    def _assemble_hessian(self) -> np.ndarray:
        dims = [a.size for a in self.targets]
        offs = np.concatenate([[0], np.cumsum(dims)])
        h = np.zeros((offs[-1], offs[-1]))
        for i, a in enumerate(self.curvatures):
            h[offs[i] : offs[i + 1], offs[i] : offs[i + 1]] = a * np.eye(dims[i])
        for i, r in enumerate(self.maps):
            blk = self.coupling * r
            h[offs[i] : offs[i + 1], offs[i + 1] : offs[i + 2]] = blk
            h[offs[i + 1] : offs[i + 2], offs[i] : offs[i + 1]] = blk.T
        return h

    def value_and_grad(self, layers: Sequence[np.ndarray]) -> tuple[float, list[np.ndarray]]:
        layers = _as_layer_list(layers)
        if [x.shape for x in layers] != self.shapes:
            raise ValueError("layer shapes do not match the problem")
        errs = [(x - a).ravel() for x, a in zip(layers, self.targets)]
        val = 0.5 * sum(self.curvatures[i] * float(e @ e) for i, e in enumerate(errs))
        gvecs = [self.curvatures[i] * e for i, e in enumerate(errs)]
        for i, r in enumerate(self.maps):
            cross = self.coupling * float(errs[i] @ (r @ errs[i + 1]))
            val += cross
            gvecs[i] = gvecs[i] + self.coupling * (r @ errs[i + 1])
            gvecs[i + 1] = gvecs[i + 1] + self.coupling * (r.T @ errs[i])
        if self.tilt is not None:
            for i, t in enumerate(self.tilt):
                val += float(t.ravel() @ errs[i])
                gvecs[i] = gvecs[i] + t.ravel()
        grads = [g.reshape(self.shapes[i]) for i, g in enumerate(gvecs)]
        return float(val), grads

    def block_norm(self, i: int, j: int) -> float:
        """Operator norm of Hessian block (i, j), 1-based."""
        if i == j:
            return self.curvatures[i - 1]
        if abs(i - j) == 1:
            return abs(self.coupling)  # maps are unit-norm
        return 0.0

    def layer_l0(self, i: int, active: frozenset[int]) -> float:
        """Valid Euclidean constant for layer i over a set: sum of its block norms in S.

        For symmetric H and any perturbation supported on S,
        <G, H G> <= sum_{i in S} (sum_{j in S} ||H_ij||) ||G_i||^2, so these
        row sums of block operator norms certify the layer-wise bound; they
        shrink as the active set shrinks (nested-set monotonicity).
        """
        return sum(self.block_norm(i, j) for j in active)


@dataclass(frozen=True)
class NoiseSpec:
    """Per-layer additive Gaussian gradient noise with E||noise_i||_F^2 = sigma_i^2."""

    sigmas: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "sigmas", tuple(float(s) for s in self.sigmas))
        if any(s < 0 for s in self.sigmas):
            raise ValueError("sigmas must be >= 0")


@dataclass(frozen=True)
class CachedForward:
    loss: float
    macs: int
    used_cache: bool
    cache_invalid: bool


class TinyMlp:
    """Dense network with manual backprop, truncated backward, and prefix caching.

    Layer l computes z_l = W_l a_{l-1}; hidden layers apply tanh (default) or
    relu, the last layer is linear, and the loss is mean squared error against
    the stored targets over the in-memory batch.  tanh keeps finite-difference
    checks clean; relu is available with looser tolerances near kinks.
    """

    def __init__(
        self,
        weights: Sequence[np.ndarray],
        inputs: np.ndarray,
        targets: np.ndarray,
        activation: str = "tanh",
    ) -> None:
        self.weights = _as_layer_list(weights)
        self.inputs = np.asarray(inputs, dtype=float)
        self.targets_out = np.asarray(targets, dtype=float)
        if activation not in ("tanh", "relu"):
            raise ValueError("activation must be 'tanh' or 'relu'")
        self.activation = activation
        for l in range(1, self.b):
            if self.weights[l].shape[1] != self.weights[l - 1].shape[0]:
                raise ValueError(f"layer {l + 1} input dim mismatch")
        if self.weights[0].shape[1] != self.inputs.shape[0]:
            raise ValueError("first layer does not match input dimension")
        if self.targets_out.shape != (self.weights[-1].shape[0], self.inputs.shape[1]):
            raise ValueError("targets shape must be (out_dim, n_samples)")
        self.f_star = 0.0  # MSE lower bound; not attained in general
        self._cache: dict | None = None

    @staticmethod
    def synthetic(
        layer_sizes: Sequence[int],
        n_samples: int = 64,
        n_clusters: int = 3,
        activation: str = "tanh",
        seed: int = 0,
        weight_scale: float = 0.5,
    ) -> "TinyMlp":
        """Hermetic instance: Gaussian-cluster inputs and targets from the seed."""
        rng = np.random.default_rng(seed)
        d0, dout = layer_sizes[0], layer_sizes[-1]
        centers = rng.standard_normal((n_clusters, d0)) * 2.0
        labels = rng.integers(0, n_clusters, size=n_samples)
        x = centers[labels].T + 0.3 * rng.standard_normal((d0, n_samples))
        y = rng.standard_normal((n_clusters, dout))[labels].T
        weights = [
            weight_scale
            * rng.standard_normal((layer_sizes[l + 1], layer_sizes[l]))
            / np.sqrt(layer_sizes[l])
            for l in range(len(layer_sizes) - 1)
        ]
        return TinyMlp(weights, x, y, activation)

    @property
    def b(self) -> int:
        return len(self.weights)

    @property
    def shapes(self) -> list[tuple[int, int]]:
        return [w.shape for w in self.weights]

    def _phi(self, z: np.ndarray) -> np.ndarray:
        return np.tanh(z) if self.activation == "tanh" else np.maximum(z, 0.0)

    def _phi_prime(self, z: np.ndarray) -> np.ndarray:
        if self.activation == "tanh":
            t = np.tanh(z)
            return 1.0 - t * t
        return (z > 0.0).astype(float)

    def _forward(self, weights, macs=None):
        """Returns (pre-activations z_1..z_b, activations a_0..a_{b-1})."""
        acts = [self.inputs]
        zs = []
        for l, w in enumerate(weights):
            z = w @ acts[-1]
            if macs is not None:
                macs[0] += w.shape[0] * w.shape[1] * acts[-1].shape[1]
            zs.append(z)
            if l < len(weights) - 1:
                acts.append(self._phi(z))
        return zs, acts

    def value_and_grad(self, layers: Sequence[np.ndarray]) -> tuple[float, list[np.ndarray]]:
        val, grads = self._value_and_grad_from(layers, 1)
        return val, grads

    def truncated_grad(
        self, layers: Sequence[np.ndarray], first_layer: int
    ) -> tuple[float, list[np.ndarray]]:
        """Loss and gradients for layers >= first_layer (1-based); prefix gradients skipped.

        Backpropagation runs from the output down to ``first_layer`` only; the
        computed slices are bit-identical to the full pass because the shared
        recursion is evaluated in the same order.
        """
        return self._value_and_grad_from(layers, first_layer)

    def _value_and_grad_from(self, layers, first_layer):
        weights = _as_layer_list(layers)
        if [w.shape for w in weights] != self.shapes:
            raise ValueError("layer shapes do not match the network")
        n = self.inputs.shape[1]
        zs, acts = self._forward(weights)
        loss = 0.5 * float(np.sum((zs[-1] - self.targets_out) ** 2)) / n
        grads: list[np.ndarray | None] = [None] * self.b
        delta = (zs[-1] - self.targets_out) / n
        for l in range(self.b, 0, -1):
            grads[l - 1] = delta @ acts[l - 1].T
            if l - 1 < first_layer:
                break
            delta = (weights[l - 1].T @ delta) * self._phi_prime(zs[l - 2])
        return loss, [g for g in grads[first_layer - 1 :]] if first_layer > 1 else grads

    def forward_with_cache(
        self, layers: Sequence[np.ndarray], frozen_prefix: int
    ) -> CachedForward:
        """Forward pass reusing cached activations for an unchanged frozen prefix.

        ``frozen_prefix`` is the number of leading layers whose weights (and the
        batch) are unchanged since the cached pass.  Valid reuse recomputes only
        from layer frozen_prefix + 1 on; a stale cache (changed prefix weight or
        no prior pass) triggers a full recompute with a warning.  Only the
        full-batch setting is cached: with fresh batches the prefix would be
        stale by construction.
        """
        weights = _as_layer_list(layers)
        if [w.shape for w in weights] != self.shapes:
            raise ValueError("layer shapes do not match the network")
        if not 0 <= frozen_prefix < self.b:
            raise ValueError("frozen_prefix must be in [0, b)")
        macs = [0]
        used_cache = False
        invalid = False
        acts = None
        if frozen_prefix > 0:
            cache = self._cache
            if cache is None:
                invalid = True
            elif len(cache["acts"]) < frozen_prefix + 1:
                invalid = True
            else:
                for l in range(frozen_prefix):
                    if not np.array_equal(cache["weights"][l], weights[l]):
                        invalid = True
                        break
            if invalid:
                warnings.warn(
                    "frozen-prefix cache invalid (missing or prefix changed); "
                    "recomputing the full forward pass",
                    stacklevel=2,
                )
            else:
                acts = cache["acts"][: frozen_prefix + 1]
                used_cache = True

        if acts is None:
            acts = [self.inputs]
            start = 0
        else:
            acts = list(acts)
            start = frozen_prefix
        z = None
        for l in range(start, self.b):
            z = weights[l] @ acts[-1]
            macs[0] += weights[l].shape[0] * weights[l].shape[1] * acts[-1].shape[1]
            if l < self.b - 1:
                acts.append(self._phi(z))
        n = self.inputs.shape[1]
        loss = 0.5 * float(np.sum((z - self.targets_out) ** 2)) / n
        macs[0] += z.size  # loss reduction
        self._cache = {"acts": acts, "weights": [w.copy() for w in weights]}
        return CachedForward(loss, macs[0], used_cache, invalid)


# ---------------------------------------------------------------------------
# Free-function oracles
# ---------------------------------------------------------------------------

def value_and_grad(problem, layers: Sequence[np.ndarray]) -> tuple[float, list[np.ndarray]]:
    """Exact value and per-layer gradients of any problem."""
    return problem.value_and_grad(layers)


def stoch_grad(
    problem,
    layers: Sequence[np.ndarray],
    noise: NoiseSpec | None,
    rng: np.random.Generator,
) -> list[np.ndarray]:
    """Unbiased stochastic gradient: exact gradient plus per-layer Gaussian noise."""
    _, grads = problem.value_and_grad(layers)
    if noise is None:
        return grads
    if len(noise.sigmas) != len(grads):
        raise ValueError("need one sigma per layer")
    out = []
    for g, sigma in zip(grads, noise.sigmas):
        if sigma == 0.0:
            out.append(g)
        else:
            scale = sigma / np.sqrt(g.size)
            out.append(g + scale * rng.standard_normal(g.shape))
    return out


def smoothness_constants(
    problem,
    scheme: SamplingScheme,
    norms: Sequence[NormKind],
    with_l1_zeros: bool = False,
    secant_samples: int = 200,
    secant_seed: int = 0,
) -> SmoothnessTable:
    """Layer-wise constants for the sets the scheme can activate.

    Exact for quadratics: separable problems have subset-independent constants
    (max curvature weight); coupled problems use block-operator-norm row sums.
    Spectral-norm layers multiply the Euclidean constant by min(m, n), the
    exact worst-case Frobenius-to-spectral ratio (tight for scalar-curvature
    separable layers).  TinyMlp constants are sampled-secant upper estimates
    and the table is flagged approximate.  ``with_l1_zeros`` attaches an
    all-zero L1 map so generalized-smooth policies degrade to the smooth ones.
    """
    b = problem.b
    norms = list(norms)
    if len(norms) != b:
        raise ValueError("need one norm kind per layer")
    spectral_factor = [
        min(problem.shapes[i]) if norms[i] == NormKind.SPECTRAL else 1.0 for i in range(b)
    ]

    if isinstance(scheme, PartitionedSubmodel):
        mode = TableMode.PARTITION
        keyed_sets = {
            k: blk for k, blk in enumerate(scheme.blocks, start=1)
        }
    elif isinstance(scheme, (Rpt, FullNetwork, EpochShiftRpt)):
        mode = TableMode.RPT_CUTOFF
        keyed_sets = {s: frozenset(range(s, b + 1)) for s in range(1, b + 1)}
    else:
        raise ValueError(
            "constants are tabulated for RPT-style or partitioned schemes only"
        )

    approximate = False
    l0: dict[tuple[int, int], float] = {}
    if isinstance(problem, SeparableQuadratic):
        for key, active in keyed_sets.items():
            for i in active:
                l0[(i, key)] = problem.layer_l0(i) * spectral_factor[i - 1]
    elif isinstance(problem, CoupledQuadratic):
        for key, active in keyed_sets.items():
            for i in active:
                l0[(i, key)] = problem.layer_l0(i, active) * spectral_factor[i - 1]
    elif isinstance(problem, TinyMlp):
        approximate = True
        est = _mlp_secant_estimates(problem, secant_samples, secant_seed)
        for key, active in keyed_sets.items():
            for i in active:
                l0[(i, key)] = est[i - 1] * spectral_factor[i - 1]
    else:
        raise TypeError(f"no constant rule for {type(problem).__name__}")

    l1 = {k: 0.0 for k in l0} if with_l1_zeros else None
    return SmoothnessTable(mode, b, l0, l1, approximate)


def _mlp_secant_estimates(mlp: TinyMlp, samples: int, seed: int) -> np.ndarray:
    """Per-layer curvature upper estimates from random secants around the weights.

    Single-layer perturbations only; a 1.5x safety factor absorbs the sampling
    gap.  Upper estimate, not a certificate.
    """
    rng = np.random.default_rng(seed)
    est = np.zeros(mlp.b)
    base = [w.copy() for w in mlp.weights]
    for _ in range(samples):
        i = int(rng.integers(0, mlp.b))
        x = [w + 0.2 * rng.standard_normal(w.shape) for w in base]
        gamma = rng.standard_normal(base[i].shape)
        gamma *= 0.1 / np.linalg.norm(gamma)
        f0, g0 = mlp.value_and_grad(x)
        xp = [w.copy() for w in x]
        xp[i] = xp[i] + gamma
        f1, _ = mlp.value_and_grad(xp)
        gap = f1 - f0 - float(np.sum(g0[i] * gamma))
        est[i] = max(est[i], 2.0 * gap / float(np.sum(gamma * gamma)))
    return np.maximum(est, 1e-8) * 1.5
