"""Discrete multi-dimensional task spaces.

A task space is the Cartesian product of categorical dimensions and
continuous ranges split into equal-width bins. Cells are numbered in
row-major order over the dimension list, last dimension fastest.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping, Sequence

import numpy as np


@dataclass(frozen=True)
class Dimension:
    """One axis of a task space.

    Exactly one of ``options`` (categorical) or ``bins`` (continuous) is set.
    Use :meth:`categorical` / :meth:`continuous` rather than the raw
    constructor.
    """

    name: str
    options: tuple[str, ...] | None = None
    lo: float = 0.0
    hi: float = 0.0
    bins: int = 0
    symmetric_sign: bool = False

    def __post_init__(self) -> None:
        if self.options is not None:
            if len(self.options) == 0:
                raise ValueError(f"categorical dimension {self.name!r} has no options")
            if len(set(self.options)) != len(self.options):
                raise ValueError(f"categorical dimension {self.name!r} has duplicate labels")
            if self.bins:
                raise ValueError(f"dimension {self.name!r} cannot be both categorical and continuous")
            return
        if int(self.bins) != self.bins or self.bins < 1:
            raise ValueError(f"continuous dimension {self.name!r} needs bins >= 1, got {self.bins}")
        if not (np.isfinite(self.lo) and np.isfinite(self.hi)) or not self.lo < self.hi:
            raise ValueError(f"continuous dimension {self.name!r} needs lo < hi, got [{self.lo}, {self.hi}]")

    @classmethod
    def categorical(cls, name: str, options: Sequence[str]) -> "Dimension":
        return cls(name=name, options=tuple(str(o) for o in options))

    @classmethod
    def continuous(
        cls, name: str, lo: float, hi: float, bins: int, symmetric_sign: bool = False
    ) -> "Dimension":
        return cls(name=name, lo=float(lo), hi=float(hi), bins=int(bins), symmetric_sign=symmetric_sign)

    @property
    def is_categorical(self) -> bool:
        return self.options is not None

    @property
    def cardinality(self) -> int:
        return len(self.options) if self.options is not None else self.bins

    @property
    def width(self) -> float:
        return (self.hi - self.lo) / self.bins

    def bin_edges(self, i: int) -> tuple[float, float]:
        """Sub-interval of bin ``i``; half-open except the last, which is closed."""
        if self.is_categorical:
            raise TypeError(f"dimension {self.name!r} is categorical")
        if not 0 <= i < self.bins:
            raise IndexError(f"bin {i} out of range for {self.name!r} ({self.bins} bins)")
        a = self.lo + i * (self.hi - self.lo) / self.bins
        b = self.hi if i == self.bins - 1 else self.lo + (i + 1) * (self.hi - self.lo) / self.bins
        return a, b

    def contains(self, i: int, value: float) -> bool:
        a, b = self.bin_edges(i)
        return a <= value < b or (i == self.bins - 1 and value == b)


@dataclass(frozen=True)
class TaskInstance:
    index: int
    coords: tuple[int, ...]


class TaskSpace:
    """Immutable discrete task grid.

    ``primary`` names the continuous dimension a range-growing schedule
    acts on; it defaults to the first continuous dimension, if any.
    """

    def __init__(self, dimensions: Sequence[Dimension], primary: str | None = None):
        if len(dimensions) == 0:
            raise ValueError("task space needs at least one dimension")
        names = [d.name for d in dimensions]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate dimension names: {names}")
        self._dims = tuple(dimensions)
        self._shape = tuple(d.cardinality for d in dimensions)
        self._size = int(np.prod(self._shape, dtype=np.int64))
        if primary is None:
            primary = next((d.name for d in dimensions if not d.is_categorical), None)
        elif primary not in names or self.dimension(primary).is_categorical:
            raise ValueError(f"primary dimension {primary!r} must name a continuous dimension")
        self._primary = primary

    @property
    def dimensions(self) -> tuple[Dimension, ...]:
        return self._dims

    @property
    def shape(self) -> tuple[int, ...]:
        return self._shape

    @property
    def size(self) -> int:
        return self._size

    @property
    def primary(self) -> str | None:
        return self._primary

    def __len__(self) -> int:
        return self._size

    def __repr__(self) -> str:
        dims = ", ".join(f"{d.name}[{d.cardinality}]" for d in self._dims)
        return f"TaskSpace({dims}, size={self._size})"

    def dimension(self, name: str) -> Dimension:
        for d in self._dims:
            if d.name == name:
                return d
        raise KeyError(name)

    def axis(self, name: str) -> int:
        for k, d in enumerate(self._dims):
            if d.name == name:
                return k
        raise KeyError(name)

    def index_of(self, coords: Sequence[int]) -> int:
        if len(coords) != len(self._shape):
            raise ValueError(f"expected {len(self._shape)} coordinates, got {len(coords)}")
        index = 0
        for c, n, d in zip(coords, self._shape, self._dims):
            if int(c) != c or not 0 <= c < n:
                raise IndexError(f"coordinate {c} out of range for {d.name!r} (cardinality {n})")
            index = index * n + int(c)
        return index

    def coords_of(self, index: int) -> tuple[int, ...]:
        if int(index) != index or not 0 <= index < self._size:
            raise IndexError(f"task index {index} out of range [0, {self._size})")
        index = int(index)
        coords = []
        for n in reversed(self._shape):
            index, c = divmod(index, n)
            coords.append(c)
        return tuple(reversed(coords))

    def instance(self, index: int) -> TaskInstance:
        return TaskInstance(int(index), self.coords_of(index))

    def describe(self, index: int) -> dict[str, Any]:
        """Human-readable cell label: option name or ``(a, b)`` interval per dimension."""
        out: dict[str, Any] = {}
        for c, d in zip(self.coords_of(index), self._dims):
            out[d.name] = d.options[c] if d.is_categorical else d.bin_edges(c)
        return out

    def draw_params(self, instance: TaskInstance, rng: np.random.Generator) -> dict[str, Any]:
        """Concrete task parameters for one episode.

        Continuous values are uniform inside the cell's sub-interval, then
        negated with probability 1/2 on symmetric dimensions.
        """
        if instance.coords != self.coords_of(instance.index):
            raise ValueError(f"{instance} does not belong to {self!r}")
        params: dict[str, Any] = {}
        for c, d in zip(instance.coords, self._dims):
            if d.is_categorical:
                params[d.name] = d.options[c]
                continue
            a, b = d.bin_edges(c)
            value = float(rng.uniform(a, b))
            if d.symmetric_sign and rng.random() < 0.5:
                value = -value
            params[d.name] = value
        return params


def build_space(dims: Sequence[Dimension], primary: str | None = None) -> TaskSpace:
    return TaskSpace(dims, primary=primary)


def dimension_from_mapping(mapping: Mapping[str, Any]) -> Dimension:
    if "options" in mapping:
        return Dimension.categorical(mapping["name"], mapping["options"])
    return Dimension.continuous(
        mapping["name"], mapping["lo"], mapping["hi"], mapping["bins"], mapping.get("symmetric_sign", False)
    )


# Task-space constructions from the locomotion experiments.

def velocity8_space() -> TaskSpace:
    """|v_x*| in [0, 4] m/s, eight 0.5 m/s bins, sign drawn per episode."""
    return build_space([Dimension.continuous("vx", 0.0, 4.0, 8, symmetric_sign=True)])


TERRAIN_TYPES = ("stairs_down", "stairs_up", "slope_up", "slope_down", "rough", "flat")


def terrain6_space() -> TaskSpace:
    return build_space([Dimension.categorical("terrain", TERRAIN_TYPES)])


def scaled600_space() -> TaskSpace:
    """5 linear-velocity x 6 yaw-rate levels x 5 terrain types x 4 terrain levels."""
    return build_space(
        [
            Dimension.continuous("vx", 0.0, 2.5, 5, symmetric_sign=True),
            Dimension.continuous("wz", 0.0, 3.0, 6, symmetric_sign=True),
            Dimension.categorical("terrain", TERRAIN_TYPES[:5]),
            Dimension.categorical("level", ("0", "1", "2", "3")),
        ]
    )
