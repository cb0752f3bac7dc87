"""Refractive-index tables and fiber index relations.

The default table ships as ``data/materials.json`` and maps a material id to
a list of rows ``{wavelength_nm, temperature, n_re, n_im}``. Dielectrics are
stored with ``n_im = 0``; gold carries a complex index.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Mapping

import numpy as np

TEMPERATURES = ("300K", "4K")

# short aliases accepted by ``lookup``
ALIASES = {
    "gold": "Au",
    "InGaAs-36%": "InGaAs-36",
    "InGaAs-29.3%": "InGaAs-29.3",
    "InGaAs-29%": "InGaAs-29.3",
    "InGaAs-10%": "InGaAs-10",
    "IPS": "IP-S",
    "polymer": "IP-S",
    "core": "fiber-core",
    "cladding": "fiber-cladding",
}

# constant-index background media that need no table entry
CONSTANTS = {"air": 1.0 + 0.0j, "vacuum": 1.0 + 0.0j}


class MaterialError(KeyError):
    """Unknown material or wavelength outside the tabulated span."""

    def __str__(self) -> str:  # KeyError quotes its message otherwise
        return str(self.args[0]) if self.args else ""


@dataclass(frozen=True)
class MaterialTable:
    """Immutable index table keyed by (material, wavelength, temperature)."""

    entries: Mapping[tuple[str, float, str], complex] = field(repr=False)

    def __post_init__(self):
        for (mat, wl, temp), n in self.entries.items():
            if temp not in TEMPERATURES:
                raise ValueError(f"unknown temperature tag {temp!r} for {mat}")
            if not (np.isfinite(n.real) and np.isfinite(n.imag)) or wl <= 0:
                raise ValueError(f"invalid entry for {mat} at {wl} nm")
            if n.imag < 0:
                raise ValueError(f"{mat}: negative extinction is not passive")
            if n.imag == 0 and n.real < 1:
                raise ValueError(f"{mat}: dielectric index below 1")

    @classmethod
    def from_rows(cls, rows: Mapping[str, list]) -> "MaterialTable":
        entries = {}
        for mat, lst in rows.items():
            for row in lst:
                key = (mat, float(row["wavelength_nm"]), str(row["temperature"]))
                entries[key] = complex(row["n_re"], row.get("n_im", 0.0))
        return cls(entries)

    @classmethod
    def from_json(cls, path: str | Path) -> "MaterialTable":
        with open(path) as fh:
            return cls.from_rows(json.load(fh))

    @classmethod
    def default(cls) -> "MaterialTable":
        ref = resources.files("qdcouple") / "data" / "materials.json"
        return cls.from_rows(json.loads(ref.read_text()))

    def merged(self, overrides: Mapping[str, list] | "MaterialTable") -> "MaterialTable":
        """Return a new table with override rows replacing matching keys."""
        if not isinstance(overrides, MaterialTable):
            overrides = MaterialTable.from_rows(overrides)
        entries = dict(self.entries)
        entries.update(overrides.entries)
        return MaterialTable(entries)

    @property
    def materials(self) -> list[str]:
        return sorted({k[0] for k in self.entries})

    def span(self, material: str, temperature: str = "4K") -> tuple[float, float]:
        wl, _ = self._rows(material, temperature)
        return float(wl[0]), float(wl[-1])

    def _rows(self, material: str, temperature: str):
        mat = ALIASES.get(material, material)
        rows = sorted((wl, n) for (m, wl, t), n in self.entries.items()
                      if m == mat and t == temperature)
        if not rows:
            if any(k[0] == mat for k in self.entries):
                raise MaterialError(f"no {temperature} data for material {material!r}")
            raise MaterialError(f"unknown material {material!r}")
        wl = np.array([r[0] for r in rows])
        n = np.array([r[1] for r in rows], dtype=complex)
        return wl, n

    def lookup(self, material: str, wavelength: float, temperature: str = "4K",
               clamp_nm: float = 0.0) -> complex:
        """Complex refractive index at ``wavelength`` (nm).

        Table wavelengths return the stored value exactly; in between the
        index is linearly interpolated. Wavelengths outside the table raise
        ``MaterialError`` unless they lie within ``clamp_nm`` of the nearest
        edge, in which case the edge value is returned.
        """
        if material in CONSTANTS:
            return CONSTANTS[material]
        if temperature not in TEMPERATURES:
            raise MaterialError(f"unknown temperature tag {temperature!r}")
        if not math.isfinite(wavelength):
            raise MaterialError(f"non-finite wavelength {wavelength!r}")
        wl, n = self._rows(material, temperature)
        hit = np.nonzero(wl == wavelength)[0]
        if hit.size:
            return complex(n[hit[0]])
        lo, hi = wl[0], wl[-1]
        if wavelength < lo or wavelength > hi:
            edge = 0 if wavelength < lo else -1
            if abs(wavelength - wl[edge]) <= clamp_nm:
                return complex(n[edge])
            raise MaterialError(
                f"{material}: wavelength {wavelength} nm outside tabulated span "
                f"[{lo:g}, {hi:g}] nm")
        k = int(np.searchsorted(wl, wavelength))
        t = (wavelength - wl[k - 1]) / (wl[k] - wl[k - 1])
        return complex((1 - t) * n[k - 1] + t * n[k])

    def permittivity(self, material: str, wavelength: float, temperature: str = "4K",
                     clamp_nm: float = 0.0) -> complex:
        return self.lookup(material, wavelength, temperature, clamp_nm) ** 2


def load_materials(path: str | Path | None = None,
                   overrides: Mapping[str, list] | None = None) -> MaterialTable:
    """Default table, or the one at ``path``, with optional row overrides."""
    table = MaterialTable.from_json(path) if path else MaterialTable.default()
    return table.merged(overrides) if overrides else table


def core_index(na: float, n_cladding: float) -> float:
    """Core index of a step-index fiber from its NA and cladding index."""
    if not (math.isfinite(na) and math.isfinite(n_cladding)):
        raise ValueError("core_index needs finite inputs")
    if na <= 0:
        raise ValueError(f"numerical aperture must be positive, got {na}")
    if na >= n_cladding:
        raise ValueError("numerical aperture must be below the cladding index")
    return math.sqrt(na * na + n_cladding * n_cladding)


def numerical_aperture(n_core: float, n_cladding: float) -> float:
    if n_core <= n_cladding:
        raise ValueError("core index must exceed cladding index")
    return math.sqrt((n_core - n_cladding) * (n_core + n_cladding))


@dataclass(frozen=True)
class FiberSpec:
    """Step-index fiber at one wavelength. Lengths in micrometres."""

    name: str
    na: float
    n_cladding: float
    n_core: float
    core_radius: float
    design_wavelengths: tuple[float, ...]
    na_model: str = "datasheet"

    def __post_init__(self):
        if self.core_radius <= 0:
            raise ValueError("core radius must be positive")
        if abs(self.na ** 2 - (self.n_core ** 2 - self.n_cladding ** 2)) > 1e-9:
            raise ValueError("NA inconsistent with core and cladding indices")

    def v_number(self, wavelength_nm: float) -> float:
        return 2 * math.pi * self.core_radius * self.na / (wavelength_nm * 1e-3)


# nominal datasheet geometry; the NA of SMF-28 has two selectable models
FIBERS = {
    "780HP": dict(core_radius=2.2, na=0.1027, design_wavelengths=(930.0,)),
    "SMF28": dict(core_radius=4.1, na=0.14, design_wavelengths=(1310.0, 1550.0),
                  cutoff_nm=1260.0),
}
FIBER_ALIASES = {"780-HP": "780HP", "780hp": "780HP", "SMF-28": "SMF28", "smf28": "SMF28",
                 "smf-28": "SMF28"}
LP11_CUTOFF = 2.404825557695773


def fiber_for_wavelength(wavelength: float) -> str:
    """Fiber preset associated with a design wavelength."""
    for name, d in FIBERS.items():
        if any(abs(wavelength - w) < 1e-9 for w in d["design_wavelengths"]):
            return name
    raise MaterialError(f"no fiber associated with {wavelength} nm")


def fiber_spec(name: str, wavelength: float, table: MaterialTable | None = None,
               na_model: str = "cutoff-matched", temperature: str = "4K") -> FiberSpec:
    """Build a ``FiberSpec`` from a preset name at ``wavelength`` (nm).

    ``na_model`` selects the datasheet NA or, for fibers that declare a
    single-mode cutoff, the NA that puts the LP11 cutoff at that wavelength
    for the nominal core radius. Fibers without a cutoff use the datasheet
    value under either model.
    """
    key = FIBER_ALIASES.get(name, name)
    if key not in FIBERS:
        raise MaterialError(f"unknown fiber preset {name!r}")
    if na_model not in ("datasheet", "cutoff-matched"):
        raise ValueError(f"unknown NA model {na_model!r}")
    d = FIBERS[key]
    table = table or MaterialTable.default()
    n_cl = table.lookup("fiber-cladding", wavelength, temperature).real
    na = d["na"]
    model = "datasheet"
    if na_model == "cutoff-matched" and "cutoff_nm" in d:
        na = LP11_CUTOFF * d["cutoff_nm"] * 1e-3 / (2 * math.pi * d["core_radius"])
        model = "cutoff-matched"
    return FiberSpec(name=key, na=na, n_cladding=n_cl, n_core=core_index(na, n_cl),
                     core_radius=d["core_radius"],
                     design_wavelengths=tuple(d["design_wavelengths"]), na_model=model)
