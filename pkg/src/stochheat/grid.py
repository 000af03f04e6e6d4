"""Truncated space-time lattice, fields on it, and weighted sup norms.

The unbounded spatial domain is replaced by the periodic box ``[-L, L)^d``
sampled at ``N`` points per dimension. Time runs over ``M + 1`` levels
``t_k = k * dt`` with ``dt = T / M``. Statistics are read on the centered
observation window ``[-L/2, L/2]^d``.
"""

from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

ROLES = ("u", "v", "z", "Z", "U0", "noise-increment", "generic")

_MAGIC = b"SHEF"
_HEADER = struct.Struct("<4sIIIIdd16s")


@dataclass(frozen=True)
class GridSpec:
    """Space-time lattice on the periodic box ``[-L, L)^d`` and ``[0, T]``."""

    d: int = 1
    L: float = 32.0
    N: int = 1024
    T: float = 1.0
    M: int = 1000

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ValueError(f"spatial dimension must be 1 or 2, got {self.d}")
        if self.N < 8 or self.N & (self.N - 1):
            raise ValueError(f"N must be a power of two >= 8, got {self.N}")
        if not self.L > 0:
            raise ValueError(f"L must be positive, got {self.L}")
        if not self.T > 0:
            raise ValueError(f"T must be positive, got {self.T}")
        if self.M < 1:
            raise ValueError(f"M must be >= 1, got {self.M}")

    @property
    def dx(self) -> float:
        return 2.0 * self.L / self.N

    @property
    def dt(self) -> float:
        return self.T / self.M

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.N,) * self.d

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.M + 1)

    @property
    def axis(self) -> np.ndarray:
        """1-d coordinates ``-L + j dx`` shared by every dimension."""
        return -self.L + self.dx * np.arange(self.N)

    def coords(self) -> np.ndarray:
        """Point coordinates, shape ``(d, N, ..., N)``."""
        return np.stack(np.meshgrid(*([self.axis] * self.d), indexing="ij"))

    def window_mask(self) -> np.ndarray:
        """Boolean mask of the observation window ``[-L/2, L/2]^d``."""
        inside = np.abs(self.axis) <= self.L / 2 + 1e-12
        masks = np.meshgrid(*([inside] * self.d), indexing="ij")
        return np.logical_and.reduce(masks)

    def window_slices(self) -> tuple[slice, ...]:
        idx = np.nonzero(np.abs(self.axis) <= self.L / 2 + 1e-12)[0]
        return (slice(idx[0], idx[-1] + 1),) * self.d

    def index_of(self, point: Sequence[float]) -> tuple[int, ...]:
        """Nearest lattice multi-index of a point inside the box."""
        point = np.atleast_1d(np.asarray(point, dtype=float))
        j = np.rint((point + self.L) / self.dx).astype(int) % self.N
        return tuple(int(v) for v in j)

    def with_horizon(self, T: float, M: int) -> "GridSpec":
        return GridSpec(d=self.d, L=self.L, N=self.N, T=T, M=M)

    def default_centers(self, per_dim: int = 3) -> list[tuple[float, ...]]:
        """A ``per_dim^d`` lattice of window points, snapped to the grid."""
        offsets = np.linspace(-self.L / 4, self.L / 4, per_dim) if per_dim > 1 else np.zeros(1)
        offsets = self.axis[[self.index_of([o])[0] for o in offsets]]
        mesh = np.meshgrid(*([offsets] * self.d), indexing="ij")
        return [tuple(float(m.flat[i]) for m in mesh) for i in range(mesh[0].size)]


@dataclass(frozen=True)
class WeightParams:
    """Weight ``1 + |x - x0|^theta`` (or its smooth variant) centered at ``x0``."""

    theta: float
    x0: tuple[float, ...] = (0.0,)
    smooth: bool = False

    def __post_init__(self):
        if not self.theta > 0:
            raise ValueError(f"theta must be positive, got {self.theta}")
        object.__setattr__(self, "x0", tuple(float(v) for v in np.atleast_1d(self.x0)))


def weight(wp: WeightParams, x) -> np.ndarray | float:
    """Evaluate the weight at ``x``.

    ``x`` is a point of length ``d`` or an array of points with the
    coordinate axis first, as returned by :meth:`GridSpec.coords`.
    """
    x = np.asarray(x, dtype=float)
    x0 = np.asarray(wp.x0, dtype=float).reshape((-1,) + (1,) * (x.ndim - 1))
    if x.ndim == 0:
        x = x.reshape(1)
    r2 = np.sum((x - x0) ** 2, axis=0)
    if wp.smooth:
        out = (1.0 + r2) ** (wp.theta / 2.0)
    else:
        out = 1.0 + np.sqrt(r2) ** wp.theta
    return float(out) if np.ndim(out) == 0 else out


def weight_on_grid(grid: GridSpec, wp: WeightParams) -> np.ndarray:
    return weight(wp, grid.coords())


def weight_equivalence_constant(grid: GridSpec, theta: float, x0=None) -> float:
    """Smallest ``C`` with smooth/plain weight ratio in ``[1/C, C]`` on the grid."""
    x0 = tuple(x0) if x0 is not None else (0.0,) * grid.d
    plain = weight_on_grid(grid, WeightParams(theta, x0))
    smooth = weight_on_grid(grid, WeightParams(theta, x0, smooth=True))
    ratio = smooth / plain
    return float(max(ratio.max(), 1.0 / ratio.min()))


@dataclass(frozen=True, eq=False)
class SpaceTimeField:
    """Scalar field on the lattice; ``values`` has shape ``(M + 1, N, ..., N)``."""

    grid: GridSpec
    values: np.ndarray
    role: str = "generic"

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")
        v = np.asarray(self.values, dtype=float)
        expected = (self.grid.M + 1,) + self.grid.shape
        if v.shape != expected:
            raise ValueError(f"values shape {v.shape} does not match grid {expected}")
        if not np.all(np.isfinite(v)):
            raise ValueError("field contains non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, grid: GridSpec, role: str = "generic") -> "SpaceTimeField":
        return cls(grid, np.zeros((grid.M + 1,) + grid.shape), role)

    @classmethod
    def constant(cls, grid: GridSpec, c: float, role: str = "generic") -> "SpaceTimeField":
        return cls(grid, np.full((grid.M + 1,) + grid.shape, float(c)), role)

    def __sub__(self, other: "SpaceTimeField") -> "SpaceTimeField":
        return SpaceTimeField(self.grid, self.values - other.values)

    def __add__(self, other: "SpaceTimeField") -> "SpaceTimeField":
        return SpaceTimeField(self.grid, self.values + other.values)

    def scaled(self, c: float) -> "SpaceTimeField":
        return SpaceTimeField(self.grid, c * self.values, self.role)

    def at(self, k: int) -> np.ndarray:
        return self.values[k]

    def window(self) -> np.ndarray:
        return self.values[(slice(None),) + self.grid.window_slices()]


def _time_slice(grid: GridSpec, time_range) -> slice:
    if time_range is None:
        return slice(0, grid.M + 1)
    if isinstance(time_range, slice):
        sl = time_range
    else:
        k0, k1 = time_range
        sl = slice(k0, k1)
    if len(range(grid.M + 1)[sl]) == 0:
        raise ValueError("empty time range")
    return sl


def weighted_sup_norm(
    f: SpaceTimeField | np.ndarray,
    wp: WeightParams,
    time_range=None,
    grid: GridSpec | None = None,
    window: bool = False,
) -> float:
    """``max_t max_x |f(t, x)| / weight(x)`` over the lattice.

    ``time_range`` is a ``(k0, k1)`` pair of time indices (half open) or a
    slice; ``None`` means all levels. With ``window=True`` only points in the
    observation window contribute.
    """
    if isinstance(f, SpaceTimeField):
        grid, values = f.grid, f.values
    else:
        values = np.asarray(f)
    sl = _time_slice(grid, time_range)
    w = weight_on_grid(grid, wp)
    spatial_sup = np.max(np.abs(values[sl]), axis=0)
    ratio = spatial_sup / w
    if window:
        ratio = ratio[grid.window_slices()]
    return float(np.max(ratio))


def sup_over_centers(
    f: SpaceTimeField,
    theta: float,
    centers: Iterable[Sequence[float]],
    p: float,
    window: bool = False,
) -> float:
    """Largest ``weighted_sup_norm ** p`` over a finite set of centers."""
    centers = list(centers)
    if not centers:
        raise ValueError("centers must be nonempty")
    return max(
        weighted_sup_norm(f, WeightParams(theta, tuple(c)), window=window) ** p for c in centers
    )


def batch_weighted_sup(
    values: np.ndarray, grid: GridSpec, theta: float, centers, window: bool = False
) -> np.ndarray:
    """Weighted sup norms for a batch of space-time arrays.

    ``values`` has shape ``(B, M + 1, N, ..., N)`` (or ``(B, N, ..., N)`` for
    spatial fields); the result has shape ``(B, len(centers))``.
    """
    spatial_ndim = grid.d
    lead = values.ndim - spatial_ndim
    spatial_sup = np.max(np.abs(values), axis=tuple(range(1, lead))) if lead > 1 else np.abs(values)
    if window:
        spatial_sup = spatial_sup[(slice(None),) + grid.window_slices()]
        coords = grid.coords()[(slice(None),) + grid.window_slices()]
    else:
        coords = grid.coords()
    out = np.empty((values.shape[0], len(centers)))
    flat = spatial_sup.reshape(values.shape[0], -1)
    for j, c in enumerate(centers):
        w = weight(WeightParams(theta, tuple(c)), coords).reshape(-1)
        out[:, j] = np.max(flat / w, axis=1)
    return out


# -- serialization ---------------------------------------------------------


def save_field(f: SpaceTimeField, path) -> None:
    """Binary container: fixed header then row-major little-endian float64."""
    role = f.role.encode("ascii").ljust(16, b"\0")
    g = f.grid
    header = _HEADER.pack(_MAGIC, 1, g.d, g.N, g.M, g.L, g.T, role)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())


def load_field(path) -> SpaceTimeField:
    with open(path, "rb") as fh:
        raw = fh.read()
    magic, version, d, N, M, L, T, role = _HEADER.unpack_from(raw)
    if magic != _MAGIC or version != 1:
        raise ValueError(f"{path}: not a field container")
    grid = GridSpec(d=d, L=L, N=N, T=T, M=M)
    count = (M + 1) * N**d
    values = np.frombuffer(raw, dtype="<f8", count=count, offset=_HEADER.size)
    values = values.reshape((M + 1,) + grid.shape).astype(float)
    return SpaceTimeField(grid, values, role.rstrip(b"\0").decode("ascii"))


def field_to_csv(f: SpaceTimeField, path=None) -> str:
    """Long-format CSV ``t, x1[, x2], value``; meant for small grids."""
    g = f.grid
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["t"] + [f"x{i + 1}" for i in range(g.d)] + ["value"])
    coords = g.coords().reshape(g.d, -1)
    for k, t in enumerate(g.times):
        flat = f.values[k].reshape(-1)
        for j in range(flat.size):
            w.writerow([repr(float(t))] + [repr(float(c)) for c in coords[:, j]] + [repr(float(flat[j]))])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def field_from_csv(grid: GridSpec, path, role: str = "generic") -> SpaceTimeField:
    rows = list(csv.reader(Path(path).read_text().splitlines()))[1:]
    values = np.array([float(r[-1]) for r in rows]).reshape((grid.M + 1,) + grid.shape)
    return SpaceTimeField(grid, values, role)
