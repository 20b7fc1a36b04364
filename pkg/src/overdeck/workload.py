"""Synthetic stencil + column-physics application.

Only iteration and byte counts are produced here; nothing numerical is solved.
Arrays are indexed ``[y, x]`` with row 0 at the top of the domain.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .model import BYTES_PER_VALUE

PATTERNS = ("uniform", "static_node0", "upper_half_heavy")


class WorkloadError(ValueError):
    pass


@dataclass(frozen=True)
class Domain:
    nx: int
    ny: int
    nz: int
    fields: int

    def __post_init__(self):
        for name in ("nx", "ny", "nz", "fields"):
            if getattr(self, name) < 1:
                raise WorkloadError(f"domain {name} must be >= 1")

    @property
    def columns(self) -> int:
        return self.nx * self.ny


@dataclass(frozen=True)
class SubDomain:
    owner_vp: int
    x_range: tuple[int, int]
    y_range: tuple[int, int]
    domain: Domain

    @property
    def width(self) -> int:
        return self.x_range[1] - self.x_range[0]

    @property
    def height(self) -> int:
        return self.y_range[1] - self.y_range[0]

    @property
    def cells(self) -> int:
        return self.width * self.height

    @property
    def boundary_cells(self) -> int:
        """Cells on faces shared with another sub-domain."""
        (x0, x1), (y0, y1) = self.x_range, self.y_range
        d = self.domain
        return (
            self.width * ((y0 > 0) + (y1 < d.ny))
            + self.height * ((x0 > 0) + (x1 < d.nx))
        )

    @property
    def perimeter_cells(self) -> int:
        # lateral boundary conditions are evaluated on every side, physical or not
        if self.cells == 0:
            return 0
        return 2 * (self.width + self.height)

    def footprint_bytes(self) -> int:
        return self.cells * self.domain.nz * self.domain.fields * BYTES_PER_VALUE


@dataclass(frozen=True)
class KernelWork:
    work_items: float
    serial_depth: float

    def __post_init__(self):
        if self.work_items < 0 or self.serial_depth < 0:
            raise WorkloadError("kernel work must be non-negative")

    @property
    def iterations(self) -> float:
        return self.work_items * self.serial_depth

    @property
    def is_empty(self) -> bool:
        return self.work_items == 0 or self.serial_depth == 0


@dataclass(frozen=True, eq=False)
class LoadField:
    """Per-column multiplier on the vertical physics trip count."""

    c: np.ndarray

    def __post_init__(self):
        arr = np.array(self.c, dtype=float)
        if arr.ndim != 2:
            raise WorkloadError("load field must be 2-D (ny, nx)")
        if np.any(arr < 1):
            raise WorkloadError("load field values must be >= 1")
        arr.setflags(write=False)
        object.__setattr__(self, "c", arr)

    def __eq__(self, other):
        return isinstance(other, LoadField) and np.array_equal(self.c, other.c)

    @property
    def shape(self) -> tuple[int, int]:
        return self.c.shape

    def region_sum(self, sub: SubDomain) -> float:
        (x0, x1), (y0, y1) = sub.x_range, sub.y_range
        return float(self.c[y0:y1, x0:x1].sum())

    def region_mean(self, sub: SubDomain) -> float:
        if sub.cells == 0:
            return 0.0
        return self.region_sum(sub) / sub.cells


def _split(n: int, k: int) -> list[tuple[int, int]]:
    base, extra = divmod(n, k)
    bounds, start = [], 0
    for i in range(k):
        size = base + (1 if i < extra else 0)
        bounds.append((start, start + size))
        start += size
    return bounds


def decompose_1d(domain: Domain, k: int) -> list[SubDomain]:
    """Horizontal strips along Y, strip 0 at the top."""
    if k < 1:
        raise WorkloadError("need at least one sub-domain")
    if k > domain.ny:
        raise WorkloadError(f"cannot cut ny={domain.ny} rows into {k} strips")
    return [
        SubDomain(vp, (0, domain.nx), yr, domain)
        for vp, yr in enumerate(_split(domain.ny, k))
    ]


def decompose_2d(domain: Domain, kx: int, ky: int) -> list[SubDomain]:
    """Rectangular tiles in row-major VP order (x varies fastest)."""
    if kx < 1 or ky < 1:
        raise WorkloadError("tile counts must be >= 1")
    if kx > domain.nx or ky > domain.ny:
        raise WorkloadError(
            f"{kx}x{ky} tiles do not fit a {domain.nx}x{domain.ny} domain"
        )
    xs, ys = _split(domain.nx, kx), _split(domain.ny, ky)
    subs = []
    for jy, yr in enumerate(ys):
        for ix, xr in enumerate(xs):
            subs.append(SubDomain(jy * kx + ix, xr, yr, domain))
    return subs


def init_load_field(
    domain: Domain,
    pattern: str,
    heavy_value: float = 2.0,
    light_value: float = 1.0,
    heavy_subdomains: Sequence[SubDomain] = (),
) -> LoadField:
    if pattern not in PATTERNS:
        raise WorkloadError(f"unknown load pattern {pattern!r}")
    if not heavy_value >= light_value >= 1:
        raise WorkloadError("require heavy_value >= light_value >= 1")
    c = np.full((domain.ny, domain.nx), float(light_value))
    if pattern == "upper_half_heavy":
        c[: domain.ny // 2, :] = heavy_value
    elif pattern == "static_node0":
        for sub in heavy_subdomains:
            (x0, x1), (y0, y1) = sub.x_range, sub.y_range
            c[y0:y1, x0:x1] = heavy_value
    return LoadField(c)


def advect_load_field(field: LoadField, shift_rows: int) -> LoadField:
    """Shift the field downwards (increasing y) with periodic wrap."""
    ny = field.shape[0]
    if not 0 <= shift_rows <= ny:
        raise WorkloadError(f"shift_rows must lie in [0, {ny}]")
    return LoadField(np.roll(field.c, shift_rows, axis=0))


def physics_work(sub: SubDomain, field: LoadField, mzp: int | None = None) -> KernelWork:
    """Column physics: one serial vertical sweep of ``mzp*C - 1`` steps per column."""
    if sub.cells == 0:
        return KernelWork(0, 0)
    mzp = sub.domain.nz if mzp is None else mzp
    total = mzp * field.region_sum(sub) - sub.cells
    return KernelWork(sub.cells, total / sub.cells)


def jacobi_work(sub: SubDomain, fields: int, nz: int | None = None) -> KernelWork:
    nz = sub.domain.nz if nz is None else nz
    return KernelWork(sub.cells * nz * fields, 1)


def boundary_work(sub: SubDomain, fields: int, nz: int | None = None) -> KernelWork:
    nz = sub.domain.nz if nz is None else nz
    return KernelWork(sub.perimeter_cells * nz * fields, 1)


def halo_bytes(sub: SubDomain, fields: int, nz: int | None = None) -> int:
    nz = sub.domain.nz if nz is None else nz
    return sub.boundary_cells * nz * fields * BYTES_PER_VALUE


def class_labels(subs: Sequence[SubDomain], field: LoadField) -> list[str]:
    """'H' for sub-domains whose mean multiplier is above the field minimum."""
    floor = float(field.c.min())
    return ["H" if field.region_mean(s) > floor else "L" for s in subs]
