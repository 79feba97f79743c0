"""The augmented inference vector and its block layout.

The sampler works on a flat vector; everything else wants named blocks.
Flat ordering is fixed as: occupancy, independent flows, CO2 initials,
resistances, capacitances, temperature initials, CO2 noise scales,
temperature noise scales.  For the 8-zone benchmark with 5 independent
flows and 19 thermal edges this gives 8+5+8+19+8+8+8+8 = 72 coordinates.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .network import TreeCotree, ZoneNetwork

BLOCK_NAMES = ("occupancy", "flows", "co2_init", "resistances",
               "capacitances", "temp_init", "sigma_co2", "sigma_temp")

_PREFIX = {"occupancy": "occ", "flows": "q", "co2_init": "c0",
           "resistances": "R", "capacitances": "C", "temp_init": "T0",
           "sigma_co2": "sigma_co2", "sigma_temp": "sigma_temp"}


@dataclass(frozen=True)
class BlockLayout:
    """Slices of the flat parameter vector, derived from the network shape."""

    interior_ids: tuple[str, ...]
    flow_ids: tuple[str, ...]
    thermal_ids: tuple[str, ...]

    @classmethod
    def for_network(cls, network: ZoneNetwork, decomp: TreeCotree) -> "BlockLayout":
        return cls(interior_ids=network.interior_ids,
                   flow_ids=decomp.cotree_edges,
                   thermal_ids=tuple(e.id for e in network.thermal_edges))

    def block_sizes(self) -> dict[str, int]:
        n_int = len(self.interior_ids)
        return {
            "occupancy": n_int,
            "flows": len(self.flow_ids),
            "co2_init": n_int,
            "resistances": len(self.thermal_ids),
            "capacitances": n_int,
            "temp_init": n_int,
            "sigma_co2": n_int,
            "sigma_temp": n_int,
        }

    def slices(self) -> dict[str, slice]:
        out = {}
        offset = 0
        for name, size in self.block_sizes().items():
            out[name] = slice(offset, offset + size)
            offset += size
        return out

    @property
    def dim(self) -> int:
        return sum(self.block_sizes().values())

    def coordinate_names(self) -> list[str]:
        labels = {
            "occupancy": self.interior_ids, "flows": self.flow_ids,
            "co2_init": self.interior_ids, "resistances": self.thermal_ids,
            "capacitances": self.interior_ids, "temp_init": self.interior_ids,
            "sigma_co2": self.interior_ids, "sigma_temp": self.interior_ids,
        }
        names = []
        for block in BLOCK_NAMES:
            names.extend(f"{_PREFIX[block]}[{lab}]" for lab in labels[block])
        return names


@dataclass(frozen=True)
class ParameterVector:
    """Named view of one point in parameter space."""

    layout: BlockLayout
    occupancy: np.ndarray
    flows: np.ndarray
    co2_init: np.ndarray
    resistances: np.ndarray
    capacitances: np.ndarray
    temp_init: np.ndarray
    sigma_co2: np.ndarray
    sigma_temp: np.ndarray

    def __post_init__(self):
        sizes = self.layout.block_sizes()
        for name in BLOCK_NAMES:
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != (sizes[name],):
                raise ValueError(
                    f"block {name!r}: expected shape ({sizes[name]},), got {arr.shape}")
            object.__setattr__(self, name, arr)

    @classmethod
    def from_flat(cls, layout: BlockLayout, flat) -> "ParameterVector":
        flat = np.asarray(flat, dtype=float)
        if flat.shape != (layout.dim,):
            raise ValueError(f"expected flat vector of length {layout.dim}, "
                             f"got shape {flat.shape}")
        sl = layout.slices()
        return cls(layout=layout,
                   **{name: flat[sl[name]].copy() for name in BLOCK_NAMES})

    def flat(self) -> np.ndarray:
        return np.concatenate([getattr(self, name) for name in BLOCK_NAMES])
