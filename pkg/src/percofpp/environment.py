"""Coupled random environments on the edges of Z^d.

Every edge e carries two uniforms (U_e, V_e), realized lazily by a stateless
splitmix-style hash of (master seed, edge coordinates, stream tag). The same
edge therefore gets the same pair in any window and on any platform, and the
weight at parameter p is the deterministic function

    tau_e(p) = quantile_F(V_e)  if U_e <= p  else  +inf,

so environments at different p are coupled through common uniforms and weights
are pointwise non-increasing in p. Weights capped at M replace +inf (and any
larger value) by M. An edge is p-open iff U_e <= p and q-open iff additionally
its weight is at most the threshold lambda, which makes the q-open edge
density exactly p * F([0, lambda]).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Optional, Tuple

import numpy as np

from .lattice import BoxRegion, CanonicalEdge, Site, grid_coords

_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_PHI = np.uint64(0x9E3779B97F4A7C15)
_COORD_OFFSET = np.uint64(1) << np.uint64(31)

# stream tags
TAG_U = 0  # openness uniform
TAG_V = 1  # weight-magnitude uniform
TAG_REPLICA = 2  # replica seed derivation
TAG_FIELD = 3  # synthetic per-edge indicator fields
TAG_RESAMPLE = 4  # independent redraws for single-edge resampling

# critical bond-percolation densities used for configuration validation
P_CRITICAL = {2: 0.5, 3: 0.2488}


def _mix64(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.uint64)
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def prf_hash(seed: int, words) -> np.ndarray:
    """Stateless hash of (seed, words...) -> uint64, vectorized over words.

    Each entry of `words` is an integer array (or scalar); arrays broadcast.
    """
    with np.errstate(over="ignore"):
        h = _mix64(np.uint64(seed & 0xFFFFFFFFFFFFFFFF) ^ _PHI)
        for w in words:
            w = np.asarray(w)
            if w.dtype != np.uint64:
                w = w.astype(np.int64).astype(np.uint64)
            h = _mix64((h ^ w) * _PHI)
    return h


def uniform_from_hash(h: np.ndarray) -> np.ndarray:
    """Map uint64 hashes to doubles in the open interval (0, 1)."""
    return ((h >> np.uint64(11)).astype(np.float64) + 0.5) * (2.0 ** -53)


def edge_uniforms(seed: int, lowers: np.ndarray, axes, tag: int) -> np.ndarray:
    """Uniforms for edges given by geometric lower endpoints and axes."""
    lowers = np.asarray(lowers, dtype=np.int64)
    if lowers.ndim == 1:
        lowers = lowers[None, :]
    with np.errstate(over="ignore"):
        words = [lowers[:, k].astype(np.uint64) + _COORD_OFFSET for k in range(lowers.shape[1])]
    words.append(np.asarray(axes, dtype=np.int64))
    words.append(np.uint64(tag))
    return uniform_from_hash(prf_hash(seed, words))


def derive_seed(master_seed: int, index: int) -> int:
    """Deterministic replica seed: independent stream per replica index."""
    return int(prf_hash(master_seed, [np.int64(index), np.uint64(TAG_REPLICA)]))


class WeightLaw:
    """Distribution F of the finite part of the edge weights.

    Supported kinds: a point mass (`dirac`), a finite atom list (`atoms`), and
    a uniform interval (`uniform`). The quantile is the left-continuous
    generalized inverse quantile(u) = inf{x : F(x) >= u}, which makes
    P(quantile(V) <= lambda) = F([0, lambda]) exact even at atoms.
    """

    def __init__(self, kind: str, values=None, masses=None, a=None, b=None):
        self.kind = kind
        if kind == "dirac":
            self.values = np.asarray([float(values)], dtype=np.float64)
            self.masses = np.asarray([1.0], dtype=np.float64)
        elif kind == "atoms":
            order = np.argsort(np.asarray(values, dtype=np.float64), kind="stable")
            self.values = np.asarray(values, dtype=np.float64)[order]
            self.masses = np.asarray(masses, dtype=np.float64)[order]
            if len(self.values) == 0:
                raise ValueError("atom law needs at least one atom")
            if np.any(self.masses <= 0):
                raise ValueError("atom masses must be positive")
            if abs(self.masses.sum() - 1.0) > 1e-12:
                raise ValueError("atom masses must sum to 1")
            if np.any(self.values < 0):
                raise ValueError("weights must be nonnegative")
            if len(np.unique(self.values)) != len(self.values):
                raise ValueError("duplicate atom values")
        elif kind == "uniform":
            self.a = float(a)
            self.b = float(b)
            if not (0 <= self.a < self.b):
                raise ValueError("uniform law needs 0 <= a < b")
        else:
            raise ValueError(f"unknown law kind: {kind}")

    @classmethod
    def dirac(cls, value: float) -> "WeightLaw":
        return cls("dirac", values=value)

    @classmethod
    def atoms(cls, pairs) -> "WeightLaw":
        vals = [v for v, _ in pairs]
        mass = [m for _, m in pairs]
        return cls("atoms", values=vals, masses=mass)

    @classmethod
    def uniform(cls, a: float, b: float) -> "WeightLaw":
        return cls("uniform", a=a, b=b)

    @classmethod
    def parse(cls, text: str) -> "WeightLaw":
        """Parse 'dirac:V', 'atoms:V1:M1,V2:M2,...', or 'uniform:A:B'."""
        parts = text.strip().split(":")
        kind = parts[0]
        try:
            if kind == "dirac" and len(parts) == 2:
                return cls.dirac(float(parts[1]))
            if kind == "uniform" and len(parts) == 3:
                return cls.uniform(float(parts[1]), float(parts[2]))
            if kind == "atoms" and len(parts) >= 2:
                pairs = []
                for chunk in ":".join(parts[1:]).split(","):
                    v, m = chunk.split(":")
                    pairs.append((float(v), float(m)))
                return cls.atoms(pairs)
        except (ValueError, IndexError) as exc:
            raise ValueError(f"cannot parse weight law '{text}': {exc}") from None
        raise ValueError(f"cannot parse weight law '{text}'")

    def spec_string(self) -> str:
        if self.kind == "dirac":
            return f"dirac:{float(self.values[0])!r}"
        if self.kind == "atoms":
            inner = ",".join(
                f"{float(v)!r}:{float(m)!r}"
                for v, m in zip(self.values, self.masses)
            )
            return f"atoms:{inner}"
        return f"uniform:{float(self.a)!r}:{float(self.b)!r}"

    @property
    def is_discrete(self) -> bool:
        return self.kind in ("dirac", "atoms")

    def quantile(self, u: np.ndarray) -> np.ndarray:
        """Left-continuous inverse: quantile(u) = inf{x : F(x) >= u}."""
        u = np.asarray(u, dtype=np.float64)
        if self.kind == "uniform":
            return self.a + (self.b - self.a) * u
        cum = np.cumsum(self.masses)
        idx = np.searchsorted(cum, u, side="left")
        idx = np.minimum(idx, len(self.values) - 1)
        return self.values[idx]

    def mass_at_most(self, x: float) -> float:
        """F([0, x]) (F lives on [0, inf))."""
        if self.kind == "uniform":
            return float(min(max((x - self.a) / (self.b - self.a), 0.0), 1.0))
        return float(self.masses[self.values <= x].sum())

    def mass_at_zero(self) -> float:
        return self.mass_at_most(0.0)

    def support_max(self) -> float:
        if self.kind == "uniform":
            return self.b
        return float(self.values[-1])


def lambda_for(law: WeightLaw, p0: float, delta0: float, d: int) -> float:
    """Smallest threshold with F([0, lambda]) >= max(q0/p0, 1 - delta0).

    q0 = (p0 + p_c(d)) / 2, so the induced q = p * F([0,lambda]) satisfies
    q0 <= q <= p <= q + delta0 for all p in [p0, 1].
    """
    pc = P_CRITICAL[d]
    if not (pc < p0 <= 1):
        raise ValueError(f"p0 must lie in ({pc}, 1] for d={d}")
    q0 = (p0 + pc) / 2.0
    target = max(q0 / p0, 1.0 - delta0)
    if target > 1.0:
        raise ValueError("infeasible threshold: q0/p0 > 1")
    if law.kind == "uniform":
        return law.a + (law.b - law.a) * target
    cum = np.cumsum(law.masses)
    idx = int(np.searchsorted(cum, target - 1e-15, side="left"))
    idx = min(idx, len(law.values) - 1)
    return float(law.values[idx])


@dataclass
class EnvironmentParams:
    """Percolation/weight parameters for one environment family.

    p is the live openness density; p0 <= p is the floor used to fix the
    q-threshold lambda once per family, so scans over p share one lambda.
    """

    d: int
    law: WeightLaw
    p: float
    p0: Optional[float] = None
    delta0: float = 0.05
    lam: Optional[float] = None
    cap: Optional[float] = None

    def __post_init__(self):
        if self.d not in P_CRITICAL:
            raise ValueError(f"unsupported dimension {self.d}")
        if self.p0 is None:
            self.p0 = self.p
        if not (0 <= self.p <= 1):
            raise ValueError("p must lie in [0, 1]")
        if self.lam is None:
            self.lam = lambda_for(self.law, self.p0, self.delta0, self.d)
        # regime check q0 <= q <= p <= q + delta0: out of regime is legal
        # (lambda overrides, exploratory p) but worth flagging
        q = self.q
        if q < self.q0 - 1e-12 or self.p > q + self.delta0 + 1e-12:
            warnings.warn(
                f"(p, q) = ({self.p:.4f}, {q:.4f}) outside the regime "
                f"q0 <= q <= p <= q + delta0 (q0 = {self.q0:.4f}, "
                f"delta0 = {self.delta0})",
                RuntimeWarning,
                stacklevel=2,
            )

    @property
    def p_critical(self) -> float:
        return P_CRITICAL[self.d]

    @property
    def q(self) -> float:
        return self.p * self.law.mass_at_most(self.lam)

    @property
    def q0(self) -> float:
        return (self.p0 + self.p_critical) / 2.0

    def validate(self) -> None:
        """Raise unless supercritical with F(0) below criticality."""
        pc = self.p_critical
        if not (self.p > pc):
            raise ValueError(f"p={self.p} must exceed p_c({self.d})={pc}")
        if not (self.p0 > pc):
            raise ValueError(f"p0={self.p0} must exceed p_c({self.d})={pc}")
        if self.p < self.p0:
            raise ValueError("p must be >= p0")
        if not (self.law.mass_at_zero() < pc):
            raise ValueError("F(0) must be below the critical density")
        if self.q <= pc:
            raise ValueError(
                f"q={self.q:.4f} not supercritical; raise p or loosen delta0"
            )

    def with_p(self, p: float) -> "EnvironmentParams":
        return EnvironmentParams(
            d=self.d, law=self.law, p=p, p0=self.p0, delta0=self.delta0,
            lam=self.lam, cap=self.cap,
        )


@dataclass
class CoupledEnvironment:
    """Lazy coupled environment over the edges of a window box."""

    window: BoxRegion
    seed: int
    law: WeightLaw

    @property
    def d(self) -> int:
        return self.window.d

    def _check_edge(self, e: CanonicalEdge) -> None:
        pts = np.asarray([e.x, e.y], dtype=np.int64)
        if not self.window.contains(pts).all():
            raise ValueError(f"edge {e.x}-{e.y} outside window {self.window}")

    def uniform_pair(self, e: CanonicalEdge) -> Tuple[float, float]:
        """The coupled uniforms (U_e, V_e) of a single edge."""
        self._check_edge(e)
        low = np.asarray([e.lower()], dtype=np.int64)
        ax = np.asarray([e.axis], dtype=np.int64)
        u = edge_uniforms(self.seed, low, ax, TAG_U)[0]
        v = edge_uniforms(self.seed, low, ax, TAG_V)[0]
        return float(u), float(v)

    def weight(self, e: CanonicalEdge, p: float, cap: Optional[float] = None) -> float:
        """Weight of one edge at openness p, optionally capped at `cap`."""
        u, v = self.uniform_pair(e)
        if u <= p:
            w = float(self.law.quantile(np.asarray([v]))[0])
        else:
            w = math.inf
        if cap is not None:
            w = min(w, cap)
        return w

    def is_p_open(self, e: CanonicalEdge, p: float) -> bool:
        u, _ = self.uniform_pair(e)
        return u <= p

    def is_q_open(self, e: CanonicalEdge, p: float, lam: float) -> bool:
        u, v = self.uniform_pair(e)
        if u > p:
            return False
        return float(self.law.quantile(np.asarray([v]))[0]) <= lam

    # ---- bulk interface over dense sub-boxes ----

    def _uniform_grid_raw(self, lo: Site, dims: Site, tag: int) -> np.ndarray:
        """(d, nv) uniforms for edges (v, v + e_k); the last slice along each
        axis is padded (those edges leave the box and are masked by callers)."""
        return _uniform_grid_cached(self.seed, lo, dims, tag)

    def uniform_grids(self, lo: Site, dims: Site) -> Tuple[np.ndarray, np.ndarray]:
        return (
            self._uniform_grid_raw(lo, dims, TAG_U),
            self._uniform_grid_raw(lo, dims, TAG_V),
        )

    def auxiliary_grid(self, lo: Site, dims: Site, tag: int = TAG_FIELD) -> np.ndarray:
        """(d, nv) uniforms from an auxiliary stream, independent of the
        weight-defining (U, V) pair; used for synthetic per-edge fields."""
        if tag in (TAG_U, TAG_V):
            raise ValueError("auxiliary streams must not alias the weight streams")
        return self._uniform_grid_raw(lo, dims, tag)

    def weight_grid(
        self, lo: Site, dims: Site, p: float, cap: Optional[float] = None
    ) -> np.ndarray:
        """(d, nv) weights for edges (v, v + e_k) inside the dense box.

        Edges whose upper endpoint leaves the box get +inf so no kernel can
        use them; window membership is the caller's concern.
        """
        gu, gv = self.uniform_grids(lo, dims)
        w = self.law.quantile(gv)
        w = np.where(gu <= p, w, np.inf)
        if cap is not None:
            w = np.minimum(w, cap)
        _pad_external(w, dims)
        return w

    def open_grid(
        self, lo: Site, dims: Site, p: float, lam: Optional[float] = None
    ) -> np.ndarray:
        """(d, nv) openness flags: p-open, or q-open when lam is given."""
        gu, gv = self.uniform_grids(lo, dims)
        flags = gu <= p
        if lam is not None:
            flags &= self.law.quantile(gv) <= lam
        d = len(dims)
        for k in range(d):
            flags[k].reshape(dims)[_last_slice(d, k)] = False
        return flags


def _last_slice(d: int, axis: int):
    idx = [slice(None)] * d
    idx[axis] = -1
    return tuple(idx)


def _pad_external(w: np.ndarray, dims: Site) -> None:
    d = len(dims)
    for k in range(d):
        w[k].reshape(dims)[_last_slice(d, k)] = np.inf


@lru_cache(maxsize=32)
def _uniform_grid_cached(seed: int, lo: Site, dims: Site, tag: int) -> np.ndarray:
    pts = grid_coords(lo, dims)
    nv = len(pts)
    d = len(dims)
    out = np.empty((d, nv), dtype=np.float64)
    for k in range(d):
        out[k] = edge_uniforms(seed, pts, np.full(nv, k, dtype=np.int64), tag)
    out.setflags(write=False)
    return out
