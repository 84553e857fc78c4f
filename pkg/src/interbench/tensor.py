"""Dense linear-algebra substrate: seeded streams, init, allocation accounting, grad checks.

A "matrix" throughout the package is a 2-D ``numpy.ndarray`` laid out row-major
with one example per row.
"""

from __future__ import annotations

import contextvars
import hashlib
import math
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .errors import ConfigError, StabilityError, UsageError

DEFAULT_DTYPE = np.float64

_MASK64 = (1 << 64) - 1


def _label_key(seed: int, label: str) -> int:
    digest = hashlib.sha256(f"{seed & _MASK64}:{label}".encode()).digest()
    return int.from_bytes(digest[:16], "little")


@dataclass(frozen=True)
class RngState:
    """Counter-based random stream.

    ``(seed, position)`` fully determines the next draw. ``split(label)`` derives a
    child stream from ``(seed, label)`` only, so the order in which siblings are
    consumed never changes their contents.
    """

    seed: int
    position: int = 0
    label: str = ""

    def split(self, label: str) -> "RngState":
        child = f"{self.label}/{label}" if self.label else label
        return RngState(self.seed, 0, child)

    def generator(self, counter: int | None = None) -> np.random.Generator:
        """Return a numpy Generator positioned at ``counter`` (default: ``position``).

        Distinct counters select non-overlapping Philox sub-streams, which is how
        per-row or per-session generation stays order-independent.
        """
        key = _label_key(self.seed, self.label)
        pos = self.position if counter is None else counter
        bitgen = np.random.Philox(
            key=np.array([key & _MASK64, key >> 64], dtype=np.uint64),
            counter=np.array([0, pos & _MASK64, 0, 0], dtype=np.uint64),
        )
        return np.random.Generator(bitgen)

    def advance(self, n: int = 1) -> "RngState":
        return RngState(self.seed, self.position + n, self.label)


def as_rng(seed_or_rng: int | RngState) -> RngState:
    if isinstance(seed_or_rng, RngState):
        return seed_or_rng
    return RngState(int(seed_or_rng))


# ---------------------------------------------------------------- accounting


@dataclass(frozen=True)
class AllocStats:
    live_bytes: int
    peak_bytes: int
    budget_bytes: int | None

    @property
    def peak_pct(self) -> float:
        if not self.budget_bytes:
            raise ConfigError("budget_bytes is not set")
        return 100.0 * self.peak_bytes / self.budget_bytes


class AllocScope:
    """Logical byte accounting for one experiment.

    Arrays are held by identity with a reference count, so a tensor cached by two
    blocks (the shared cross-layer input, say) is charged once.
    """

    def __init__(self, budget_bytes: int | None = None):
        self.budget_bytes = budget_bytes
        self.live_bytes = 0
        self.peak_bytes = 0
        self._held: dict[int, list] = {}

    def _bump(self, nbytes: int) -> None:
        self.live_bytes += nbytes
        if self.live_bytes > self.peak_bytes:
            self.peak_bytes = self.live_bytes

    def alloc(self, nbytes: int) -> None:
        self._bump(int(nbytes))

    def free(self, nbytes: int) -> None:
        self.live_bytes -= int(nbytes)
        if self.live_bytes < 0:
            raise UsageError("freed more bytes than were allocated")

    def hold(self, arr: np.ndarray) -> None:
        entry = self._held.get(id(arr))
        if entry is not None and entry[0] is arr:
            entry[1] += 1
            return
        self._held[id(arr)] = [arr, 1]
        self._bump(arr.nbytes)

    def drop(self, arr: np.ndarray) -> None:
        entry = self._held.get(id(arr))
        if entry is None or entry[0] is not arr:
            return
        entry[1] -= 1
        if entry[1] == 0:
            del self._held[id(arr)]
            self.live_bytes -= arr.nbytes

    def track(self, arr: np.ndarray) -> np.ndarray:
        """Charge ``arr`` until it is garbage collected."""
        import weakref

        self._bump(arr.nbytes)
        weakref.finalize(arr, self.free, arr.nbytes)
        return arr

    def snapshot(self) -> AllocStats:
        return AllocStats(self.live_bytes, self.peak_bytes, self.budget_bytes)


_SCOPE: contextvars.ContextVar[AllocScope | None] = contextvars.ContextVar(
    "interbench_alloc_scope", default=None
)


@contextmanager
def alloc_scope(budget_bytes: int | None = None) -> Iterator[AllocScope]:
    scope = AllocScope(budget_bytes)
    token = _SCOPE.set(scope)
    try:
        yield scope
    finally:
        _SCOPE.reset(token)


def current_scope() -> AllocScope | None:
    return _SCOPE.get()


def alloc_snapshot() -> AllocStats:
    scope = _SCOPE.get()
    if scope is None:
        raise UsageError("alloc_snapshot() called outside an alloc_scope")
    return scope.snapshot()


# ---------------------------------------------------------------- ops


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ConfigError(f"matmul dimension mismatch: {a.shape} x {b.shape}")
    out = a @ b
    scope = _SCOPE.get()
    if scope is not None:
        scope.track(out)
    return out


def init_param(
    rows: int,
    cols: int,
    scheme: str,
    rng: RngState,
    dtype=DEFAULT_DTYPE,
    fan_in: int | None = None,
    fan_out: int | None = None,
) -> np.ndarray:
    """Initialize a ``rows x cols`` parameter.

    Bounds use ``rows + cols`` (xavier) and ``rows`` (he) unless explicit fans are
    passed; weight matrices here are stored ``(in, out)`` so the defaults match the
    usual fan conventions.
    """
    if rows < 1 or cols < 1:
        raise ConfigError(f"parameter shape must be positive, got {rows}x{cols}")
    if scheme == "zeros":
        return np.zeros((rows, cols), dtype=dtype)
    fi = rows if fan_in is None else fan_in
    fo = cols if fan_out is None else fan_out
    if scheme == "xavier-uniform":
        bound = math.sqrt(6.0 / (fi + fo))
    elif scheme == "he-uniform":
        bound = math.sqrt(6.0 / fi)
    else:
        raise ConfigError(f"unknown init scheme {scheme!r}")
    draw = rng.generator().uniform(-bound, bound, size=(rows, cols))
    return draw.astype(dtype, copy=False)


def grad_check(block, x: np.ndarray, ctx: np.ndarray | None = None, eps: float = 1e-5, seed: int = 0) -> float:
    """Max relative error between the analytic backward and central differences.

    The scalar objective is ``sum(R * block(x, ctx))`` for a fixed random ``R``.
    Every parameter entry and every input entry (and ``ctx`` when given) is probed.
    """
    if not 1e-6 <= eps <= 1e-4:
        raise UsageError(f"eps must lie in [1e-6, 1e-4], got {eps}")
    x = np.array(x, dtype=np.float64)
    ctx = None if ctx is None else np.array(ctx, dtype=np.float64)
    for _, p, _ in block.named_parameters():
        if p.dtype != np.float64:
            raise UsageError("grad_check needs a block built in 64-bit mode")

    block.train(True)
    out = block.forward(x, ctx)
    if not np.all(np.isfinite(out)):
        raise StabilityError("non-finite forward output during grad_check")
    proj = np.random.default_rng(seed).standard_normal(out.shape)
    block.zero_grad()
    gx, gctx = block.backward(proj)
    analytic = [(p, g.copy()) for _, p, g in block.named_parameters()]
    analytic.append((x, gx))
    if ctx is not None:
        analytic.append((ctx, gctx if gctx is not None else np.zeros_like(ctx)))

    def objective() -> float:
        block.train(False)
        try:
            return float(np.sum(proj * block.forward(x, ctx)))
        finally:
            block.train(True)

    worst = 0.0
    for target, grad in analytic:
        flat = target.reshape(-1)
        gflat = grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            fp = objective()
            flat[i] = orig - eps
            fm = objective()
            flat[i] = orig
            numeric = (fp - fm) / (2 * eps)
            denom = max(abs(gflat[i]), abs(numeric), 1e-8)
            worst = max(worst, abs(gflat[i] - numeric) / denom)
    return worst
