"""Deterministic two-sided Wiener increment generation.

Increments are the stored primitive. Each fine-cell increment is a pure
function of (seed, path_index, component, absolute cell index): a Philox
counter-based stream is keyed per (seed, path_index, component, grid mode)
and indexed by the absolute cell position, so extending the window (larger
pull-back times) or changing the generation order never disturbs existing
values. Gaussians come from one uniform per cell via the inverse normal CDF.

Two grid modes:
  * dyadic: cell width 2^-L; supports coarse/fine coupling, every coarse
    Brownian increment is the exact partial sum of fine increments.
  * uniform: arbitrary cell width dt (e.g. 0.1); no refinement, used for the
    qualitative fixed-stepsize experiments.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

__all__ = [
    "WienerGrid",
    "ShiftedView",
    "WindowError",
    "generate",
    "generate_uniform",
    "coarse_increment",
    "shift_view",
    "dump_path",
    "load_path",
]

# Cell positions are offset by 2^62 blocks-worth of draws so that negative
# absolute indices (pull-back windows) map to valid Philox counters.
_POSITION_OFFSET = 1 << 62


class WindowError(ValueError):
    """Requested cells are misaligned or fall outside the generated window."""


def _mix64(z: int) -> int:
    # splitmix64 finalizer
    z = (z + 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & 0xFFFFFFFFFFFFFFFF
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & 0xFFFFFFFFFFFFFFFF
    return z ^ (z >> 31)


def _stream_key(seed: int, path_index: int, component: int, mode_salt: int):
    k0 = _mix64(seed & 0xFFFFFFFFFFFFFFFF)
    k1 = _mix64(k0 ^ _mix64(path_index) ^ _mix64(component + 0x1000) ^ _mix64(mode_salt))
    return [k0, k1]


def _raw_normals(seed, path_index, component, mode_salt, first_cell, n_cells):
    """Standard normal draws for absolute cells [first_cell, first_cell + n_cells)."""
    p0 = first_cell + _POSITION_OFFSET
    if p0 < 0:
        raise WindowError("cell index below supported range")
    b0, lane0 = divmod(p0, 4)
    n_blocks = (p0 + n_cells - b0 * 4 + 3) // 4
    bg = np.random.Philox(
        key=_stream_key(seed, path_index, component, mode_salt),
        counter=[b0 & 0xFFFFFFFFFFFFFFFF, b0 >> 64, 0, 0],
    )
    raw = bg.random_raw(n_blocks * 4)[lane0 : lane0 + n_cells]
    # strictly inside (0, 1) so ndtri stays finite
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * (2.0**-53)
    return ndtri(u)


def _cell_salt(fine_level, cell_width):
    # distinct streams for distinct grid resolutions
    if fine_level is not None:
        return fine_level
    return 0x5A5A0000 ^ struct.unpack("<Q", struct.pack("<d", cell_width))[0] & 0xFFFFFFFF


@dataclass(frozen=True)
class WienerGrid:
    """Seeded two-sided Brownian increments over one window.

    Immutable; `increments` has shape (n_cells, noise_dim), cell j covering
    [t_min + j*h, t_min + (j+1)*h] with h = cell_width.
    """

    seed: int
    path_index: int
    noise_dim: int
    cell_width: float
    t_min: float
    t_max: float
    increments: np.ndarray
    fine_level: int | None = None

    @property
    def n_cells(self) -> int:
        return self.increments.shape[0]

    def cell_index(self, t: float) -> int:
        """Absolute (window-independent) index of the cell starting at t."""
        i = round(t / self.cell_width)
        if abs(i * self.cell_width - t) > 1e-9 * max(1.0, abs(t)):
            raise WindowError(f"time {t} is not aligned to cell width {self.cell_width}")
        return i

    def step_increments(self, t_start: float, n_steps: int, dt: float) -> np.ndarray:
        """Brownian increments over n_steps consecutive cells of width dt.

        dt must be an integer multiple of the fine cell width; each coarse
        increment is the exact sum of the fine increments it spans.
        """
        q = round(dt / self.cell_width)
        if q < 1 or abs(q * self.cell_width - dt) > 1e-9 * dt:
            raise WindowError(f"dt {dt} is not a multiple of cell width {self.cell_width}")
        i0 = self.cell_index(t_start)
        base = self.cell_index(self.t_min)
        j0 = i0 - base
        j1 = j0 + n_steps * q
        if j0 < 0 or j1 > self.n_cells:
            raise WindowError(
                f"cells [{t_start}, {t_start + n_steps * dt}] outside window "
                f"[{self.t_min}, {self.t_max}]"
            )
        fine = self.increments[j0:j1]
        if q == 1:
            return fine
        if q & (q - 1) == 0:
            # pairwise tree fold: the sum over a cell is bit-for-bit the sum
            # of its two half-cell sums, so dyadic coarsening telescopes
            # exactly across every level
            out = fine
            while out.shape[0] > n_steps:
                out = out.reshape(-1, 2, self.noise_dim).sum(axis=1)
            return out
        return fine.reshape(n_steps, q, self.noise_dim).sum(axis=1)


@dataclass(frozen=True)
class ShiftedView:
    """Wiener shift: sampling at [a, b] reads the base increments at [a+shift, b+shift]."""

    base: WienerGrid
    shift: float

    def __post_init__(self):
        h = self.base.cell_width
        if abs(round(self.shift / h) * h - self.shift) > 1e-9 * max(1.0, abs(self.shift)):
            raise WindowError(f"shift {self.shift} is not a multiple of cell width {h}")

    @property
    def noise_dim(self) -> int:
        return self.base.noise_dim

    @property
    def cell_width(self) -> float:
        return self.base.cell_width

    def step_increments(self, t_start: float, n_steps: int, dt: float) -> np.ndarray:
        return self.base.step_increments(t_start + self.shift, n_steps, dt)


def generate(
    seed: int,
    path_index: int,
    fine_level: int,
    window: tuple[float, float],
    noise_dim: int,
) -> WienerGrid:
    """Dyadic grid: fine cells of width 2^-fine_level over the window."""
    if not (0 <= fine_level <= 30):
        raise WindowError(f"fine_level must be in [0, 30], got {fine_level}")
    h = 2.0**-fine_level
    return _generate(seed, path_index, h, window, noise_dim, fine_level)


def generate_uniform(
    seed: int,
    path_index: int,
    dt: float,
    window: tuple[float, float],
    noise_dim: int,
) -> WienerGrid:
    """Uniform grid with cell width dt; no coarse/fine refinement available."""
    if dt <= 0.0:
        raise WindowError("dt must be positive")
    return _generate(seed, path_index, dt, window, noise_dim, None)


def _generate(seed, path_index, h, window, noise_dim, fine_level):
    t_min, t_max = window
    i0 = round(t_min / h)
    i1 = round(t_max / h)
    if abs(i0 * h - t_min) > 1e-9 * max(1.0, abs(t_min)) or abs(
        i1 * h - t_max
    ) > 1e-9 * max(1.0, abs(t_max)):
        raise WindowError(f"window {window} endpoints must be multiples of {h}")
    if i1 <= i0:
        raise WindowError(f"window {window} must have positive length")
    if noise_dim < 1:
        raise WindowError("noise_dim must be >= 1")
    n = i1 - i0
    salt = _cell_salt(fine_level, h)
    scale = np.sqrt(h)
    incs = np.empty((n, noise_dim))
    for comp in range(noise_dim):
        incs[:, comp] = scale * _raw_normals(seed, path_index, comp, salt, i0, n)
    incs.setflags(write=False)
    return WienerGrid(
        seed=seed,
        path_index=path_index,
        noise_dim=noise_dim,
        cell_width=h,
        t_min=i0 * h,
        t_max=i1 * h,
        increments=incs,
        fine_level=fine_level,
    )


def coarse_increment(grid: WienerGrid, coarse_level: int, cell_index: int) -> np.ndarray:
    """Brownian increment over coarse cell [i*2^-c, (i+1)*2^-c] as exact fine sums."""
    if grid.fine_level is None:
        raise WindowError("coarse_increment requires a dyadic grid")
    if coarse_level > grid.fine_level:
        raise WindowError(
            f"coarse_level {coarse_level} exceeds fine_level {grid.fine_level}"
        )
    dt = 2.0**-coarse_level
    return grid.step_increments(cell_index * dt, 1, dt)[0]


def shift_view(grid: WienerGrid | ShiftedView, shift: float) -> ShiftedView:
    """View of the noise under the Wiener shift by `shift` (a grid multiple)."""
    if isinstance(grid, ShiftedView):
        return ShiftedView(grid.base, grid.shift + shift)
    return ShiftedView(grid, shift)


_DUMP_MAGIC = b"RPSDEW1\x00"


def dump_path(grid: WienerGrid, path) -> None:
    """Binary dump for cross-implementation comparison.

    Header: magic, seed, path_index, noise_dim, fine_level (-1 if uniform),
    cell_width, t_min, t_max, n_cells; payload: little-endian float64
    increments in cell-major order.
    """
    with open(path, "wb") as fh:
        fh.write(_DUMP_MAGIC)
        fh.write(
            struct.pack(
                "<qqqq3dq",
                grid.seed,
                grid.path_index,
                grid.noise_dim,
                -1 if grid.fine_level is None else grid.fine_level,
                grid.cell_width,
                grid.t_min,
                grid.t_max,
                grid.n_cells,
            )
        )
        fh.write(np.ascontiguousarray(grid.increments, dtype="<f8").tobytes())


def load_path(path) -> WienerGrid:
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _DUMP_MAGIC:
            raise ValueError("not a Wiener path dump")
        seed, path_index, noise_dim, level, h, t_min, t_max, n = struct.unpack(
            "<qqqq3dq", fh.read(8 * 8)
        )
        incs = np.frombuffer(fh.read(n * noise_dim * 8), dtype="<f8").reshape(n, noise_dim)
    incs = incs.copy()
    incs.setflags(write=False)
    return WienerGrid(
        seed=seed,
        path_index=path_index,
        noise_dim=noise_dim,
        cell_width=h,
        t_min=t_min,
        t_max=t_max,
        increments=incs,
        fine_level=None if level < 0 else level,
    )
