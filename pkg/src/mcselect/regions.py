"""Target regions in response space.

Every region is a closed subset ``R`` of ``R^d`` and answers four queries:
membership, interior membership, distance from a point to the complement
``R^c``, and a fixed point on the boundary.  All queries accept either a
single point (shape ``(d,)``; a scalar is allowed when ``d == 1``) or a batch
of points (shape ``(n, d)``) and return a scalar or a length-``n`` array
accordingly.

Boundary membership uses exact float comparisons.  Round inputs yourself if
they went through a lossy transformation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "TargetRegion",
    "Orthant",
    "Ball",
    "BallComplement",
    "OrthantComplement",
    "HalfLine",
    "SUPPORTED_NORMS",
    "parse_region_spec",
    "format_region_spec",
]

SUPPORTED_NORMS = (1.0, 2.0, np.inf)


def _check_norm(norm_p) -> float:
    norm_p = float(norm_p)
    if norm_p not in SUPPORTED_NORMS:
        raise ValueError(f"unsupported norm {norm_p!r}; use 1, 2 or inf")
    return norm_p


def _vector(values, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(values, dtype=float))
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"{name} must be a non-empty vector")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")
    arr = arr.copy()
    arr.flags.writeable = False
    return arr


class _SphereMixin:
    """Shared geometry for the two ball-shaped regions.

    ``center + radius * e_1`` is usually not at computed distance exactly
    ``radius`` from the center, so rows bitwise equal to that canonical
    boundary point are classified as boundary explicitly.
    """

    center: np.ndarray
    radius: float

    @property
    def dim(self) -> int:
        return self.center.size

    def _init_sphere(self):
        object.__setattr__(self, "center", _vector(self.center, "center"))
        radius = float(self.radius)
        if not (np.isfinite(radius) and radius > 0):
            raise ValueError("radius must be positive and finite")
        object.__setattr__(self, "radius", radius)
        point = self.center.copy()
        point[0] += radius
        point.flags.writeable = False
        object.__setattr__(self, "_boundary", point)

    def _norms(self, y):
        return np.linalg.norm(y - self.center, axis=1)

    def _is_canonical(self, y):
        return np.all(y == self._boundary, axis=1)

    def boundary_point(self):
        return self._boundary.copy()


class TargetRegion:
    """Base class for closed target regions.

    Subclasses implement the batched kernels ``_contains``, ``_interior`` and
    ``_dist`` on an ``(n, d)`` array; the public methods handle shapes.
    """

    kind: str = ""

    @property
    def dim(self) -> int:
        raise NotImplementedError

    def _points(self, y) -> tuple[np.ndarray, bool]:
        arr = np.asarray(y, dtype=float)
        single = arr.ndim <= 1
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ValueError(f"expected a point or a 2-D batch, got shape {arr.shape}")
        if arr.shape[1] != self.dim:
            raise ValueError(
                f"dimension mismatch: region has d={self.dim}, got {arr.shape[1]}"
            )
        return arr, single

    @staticmethod
    def _out(values: np.ndarray, single: bool):
        return values[0].item() if single else values

    def contains(self, y):
        """True where ``y`` lies in the closed region (boundary included)."""
        arr, single = self._points(y)
        return self._out(self._contains(arr), single)

    def interior_contains(self, y):
        """True where ``y`` lies strictly inside the region."""
        arr, single = self._points(y)
        return self._out(self._interior(arr), single)

    def dist_to_complement(self, z, norm_p=2):
        """Distance ``inf_{s in R^c} ||z - s||_p``; zero outside or on the boundary."""
        arr, single = self._points(z)
        return self._out(self._dist(arr, _check_norm(norm_p)), single)

    def boundary_point(self) -> np.ndarray:
        """A fixed, deterministic point on the boundary of the region."""
        raise NotImplementedError

    def _contains(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _interior(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _dist(self, z: np.ndarray, norm_p: float) -> np.ndarray:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Orthant(TargetRegion):
    """``{y : y_k >= c_k for all k}``."""

    cutoffs: np.ndarray
    kind: str = field(default="orthant", init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "cutoffs", _vector(self.cutoffs, "cutoffs"))

    @property
    def dim(self) -> int:
        return self.cutoffs.size

    def _contains(self, y):
        return np.all(y >= self.cutoffs, axis=1)

    def _interior(self, y):
        return np.all(y > self.cutoffs, axis=1)

    def _dist(self, z, norm_p):
        # Leaving the orthant along a single axis is optimal for every p-norm.
        return np.maximum(0.0, np.min(z - self.cutoffs, axis=1))

    def boundary_point(self):
        return self.cutoffs.copy()


@dataclass(frozen=True, eq=False)
class OrthantComplement(TargetRegion):
    """Closure of ``{y : y_k < c_k for some k}``, i.e. ``{y : y_k <= c_k for some k}``."""

    cutoffs: np.ndarray
    kind: str = field(default="orthant_complement", init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "cutoffs", _vector(self.cutoffs, "cutoffs"))

    @property
    def dim(self) -> int:
        return self.cutoffs.size

    def _contains(self, y):
        return np.any(y <= self.cutoffs, axis=1)

    def _interior(self, y):
        return np.any(y < self.cutoffs, axis=1)

    def _dist(self, z, norm_p):
        gap = np.maximum(0.0, self.cutoffs - z)
        return np.linalg.norm(gap, ord=norm_p, axis=1)

    def boundary_point(self):
        return self.cutoffs.copy()


@dataclass(frozen=True, eq=False)
class Ball(_SphereMixin, TargetRegion):
    """``{y : ||y - center||_2 <= radius}``."""

    center: np.ndarray
    radius: float
    kind: str = field(default="ball", init=False, repr=False)

    def __post_init__(self):
        self._init_sphere()

    def _contains(self, y):
        return (self._norms(y) <= self.radius) | self._is_canonical(y)

    def _interior(self, y):
        return (self._norms(y) < self.radius) & ~self._is_canonical(y)

    def _dist(self, z, norm_p):
        if norm_p != 2.0:
            raise ValueError("ball regions only support the Euclidean norm")
        dist = np.maximum(0.0, self.radius - self._norms(z))
        return np.where(self._is_canonical(z), 0.0, dist)


@dataclass(frozen=True, eq=False)
class BallComplement(_SphereMixin, TargetRegion):
    """``{y : ||y - center||_2 >= radius}``."""

    center: np.ndarray
    radius: float
    kind: str = field(default="ball_complement", init=False, repr=False)

    def __post_init__(self):
        self._init_sphere()

    def _contains(self, y):
        return (self._norms(y) >= self.radius) | self._is_canonical(y)

    def _interior(self, y):
        return (self._norms(y) > self.radius) & ~self._is_canonical(y)

    def _dist(self, z, norm_p):
        if norm_p != 2.0:
            raise ValueError("ball regions only support the Euclidean norm")
        dist = np.maximum(0.0, self._norms(z) - self.radius)
        return np.where(self._is_canonical(z), 0.0, dist)


@dataclass(frozen=True, eq=False)
class HalfLine(TargetRegion):
    """Univariate ``[cutoff, +inf)``."""

    cutoff: float
    kind: str = field(default="halfline", init=False, repr=False)

    def __post_init__(self):
        cutoff = float(self.cutoff)
        if not np.isfinite(cutoff):
            raise ValueError("cutoff must be finite")
        object.__setattr__(self, "cutoff", cutoff)

    @property
    def dim(self) -> int:
        return 1

    def _contains(self, y):
        return y[:, 0] >= self.cutoff

    def _interior(self, y):
        return y[:, 0] > self.cutoff

    def _dist(self, z, norm_p):
        return np.maximum(0.0, z[:, 0] - self.cutoff)

    def boundary_point(self):
        return np.array([self.cutoff])


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def parse_region_spec(text: str) -> TargetRegion:
    """Parse the ``key=value`` region format.

    Example::

        kind=ball
        center=2,2
        radius=1.5

    Lines starting with ``#`` and blank lines are ignored.
    """
    entries: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        entries[key] = value
    kind = entries.get("kind")
    try:
        if kind in ("orthant", "orthant_complement"):
            cls = Orthant if kind == "orthant" else OrthantComplement
            return cls(_floats(entries["cutoffs"]))
        if kind in ("ball", "ball_complement"):
            cls = Ball if kind == "ball" else BallComplement
            return cls(_floats(entries["center"]), float(entries["radius"]))
        if kind == "halfline":
            key = "cutoff" if "cutoff" in entries else "cutoffs"
            (cutoff,) = _floats(entries[key])
            return HalfLine(cutoff)
    except KeyError as exc:
        raise ValueError(f"region kind {kind!r} needs key {exc.args[0]!r}") from None
    raise ValueError(f"unknown region kind {kind!r}")


def format_region_spec(region: TargetRegion) -> str:
    """Inverse of :func:`parse_region_spec`."""
    join = lambda v: ",".join(repr(float(x)) for x in v)  # noqa: E731
    if isinstance(region, (Orthant, OrthantComplement)):
        body = f"cutoffs={join(region.cutoffs)}"
    elif isinstance(region, (Ball, BallComplement)):
        body = f"center={join(region.center)}\nradius={region.radius!r}"
    elif isinstance(region, HalfLine):
        body = f"cutoff={region.cutoff!r}"
    else:
        raise TypeError(f"cannot format {type(region).__name__}")
    return f"kind={region.kind}\n{body}\n"
