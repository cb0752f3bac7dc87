"""Device parameterizations and axisymmetric permittivity maps.

All lengths are in nm. The vertical coordinate z has its origin at the top
of the substrate (bottom of the first grown layer) and points towards the
air side. The structure is described by painted primitives on the (r, z)
half plane; ``build`` samples them on a staggered grid with per-component
subpixel averaging.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from typing import ClassVar, Sequence

import numpy as np

from .materials import MaterialTable

SEMICONDUCTORS = frozenset({"GaAs", "AlAs", "InGaAs-10", "InGaAs-36", "InGaAs-29.3"})
BUFFER_LAYERS = (("InGaAs-10", 30.0), ("InGaAs-36", 130.0))
CAP = "InGaAs-29.3"


class GeometryError(ValueError):
    """Invalid device parameters or a domain that cannot be built."""


def lens_sag(k: float, R: float, r):
    """Sag of a conic surface with conic constant ``k`` and vertex radius ``R``."""
    r = np.asarray(r, dtype=float)
    c = 1.0 / R
    arg = 1 - (1 + k) * c * c * r * r
    if np.any(arg < -1e-12):
        raise GeometryError("radial coordinate beyond the conic's valid aperture")
    return c * r * r / (1 + np.sqrt(np.clip(arg, 0, None)))


# ---------------------------------------------------------------------------
# parameter sets


@dataclass(frozen=True)
class DeviceParams:
    """Common base; subclasses carry the family-specific lengths (nm)."""

    family: ClassVar[str] = ""
    wavelength: float = 930.0

    def validate(self) -> None:
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, float) and f.name not in ("dipole_z", "conic_constant"):
                if not math.isfinite(v) or v <= 0:
                    raise GeometryError(f"{self.family}.{f.name} must be > 0, got {v}")

    def to_dict(self) -> dict:
        return {"family": self.family, **asdict(self)}

    def replace(self, **kw) -> "DeviceParams":
        d = asdict(self)
        d.update(kw)
        return type(self)(**d)


@dataclass(frozen=True)
class Micromesa(DeviceParams):
    family: ClassVar[str] = "micromesa"
    radius: float = 370.9
    height: float = 858.5
    spacer: float = 207.1
    dipole_z: float = 429.3
    dbr_pairs: int = 25


@dataclass(frozen=True)
class Microlens(DeviceParams):
    family: ClassVar[str] = "microlens"
    conic_constant: float = 0.0
    radius_of_curvature: float = 1214.0
    diameter: float = 2424.0
    spacer: float = 202.0
    dipole_z: float = 0.0

    def validate(self) -> None:
        super().validate()
        c = 1 / self.radius_of_curvature
        if 1 - (1 + self.conic_constant) * (c * self.diameter / 2) ** 2 < -1e-12:
            raise GeometryError("lens diameter exceeds the conic's valid aperture "
                                "(diameter <= 2 * radius_of_curvature for k = 0)")


@dataclass(frozen=True)
class CBG(DeviceParams):
    family: ClassVar[str] = "cbg"
    height: float = 157.8
    central_disk_radius: float = 388.8
    grating_period: float = 346.0
    trench_width: float = 75.0
    sio2_thickness: float = 200.4
    n_rings: int = 6
    dipole_z: float | None = None

    def validate(self) -> None:
        super().validate()
        if self.trench_width >= self.grating_period:
            raise GeometryError("trench_width must be smaller than grating_period")
        if self.n_rings < 0:
            raise GeometryError("n_rings must be >= 0")

    @property
    def dipole_height(self) -> float:
        return self.height / 2 if self.dipole_z is None else self.dipole_z


@dataclass(frozen=True)
class Micropillar(DeviceParams):
    family: ClassVar[str] = "micropillar"
    radius: float = 1398.0
    cavity_height: float = 274.9
    n_pairs_bottom: int = 35
    n_pairs_top: int = 17
    dipole_z: float | None = None

    def validate(self) -> None:
        super().validate()
        if self.n_pairs_bottom < 0 or self.n_pairs_top < 0:
            raise GeometryError("DBR pair counts must be >= 0")

    @property
    def dipole_height(self) -> float:
        return self.cavity_height / 2 if self.dipole_z is None else self.dipole_z


FAMILIES = {c.family: c for c in (Micromesa, Microlens, CBG, Micropillar)}


def params_from_dict(d: dict) -> DeviceParams:
    d = dict(d)
    fam = d.pop("family", None)
    if fam not in FAMILIES:
        raise GeometryError(f"unknown device family {fam!r}")
    cls = FAMILIES[fam]
    known = {f.name for f in fields(cls)}
    extra = set(d) - known
    if extra:
        raise GeometryError(f"unknown {fam} parameter(s): {sorted(extra)}")
    for k, v in d.items():
        if isinstance(v, (int, float)) and k not in ("n_rings", "dbr_pairs", "n_pairs_bottom",
                                                      "n_pairs_top"):
            d[k] = float(v)
    p = cls(**d)
    p.validate()
    return p


def load_presets() -> dict[str, DeviceParams]:
    ref = resources.files("qdcouple") / "data" / "devices.json"
    return {k: params_from_dict(v) for k, v in json.loads(ref.read_text()).items()}


def preset(name: str) -> DeviceParams:
    presets = load_presets()
    if name not in presets:
        raise KeyError(f"unknown device preset {name!r}; known: {sorted(presets)}")
    return presets[name]


# ---------------------------------------------------------------------------
# structure primitives


@dataclass(frozen=True)
class Box:
    """Material filling r0 <= r < r1, z0 <= z < z1."""

    material: str
    r0: float
    r1: float
    z0: float
    z1: float

    def paint(self, ids, r, z, code):
        mr = (r >= self.r0) & (r < self.r1)
        mz = (z >= self.z0) & (z < self.z1)
        ids[np.ix_(mr, mz)] = code[self.material]


@dataclass(frozen=True)
class Stack:
    """Horizontal layers (bounds ascending) within r0 <= r < r1."""

    materials: tuple
    bounds: tuple
    r0: float = 0.0
    r1: float = math.inf

    def paint(self, ids, r, z, code):
        b = np.asarray(self.bounds)
        mr = (r >= self.r0) & (r < self.r1)
        mz = (z >= b[0]) & (z < b[-1])
        k = np.clip(np.searchsorted(b, z, side="right") - 1, 0, len(self.materials) - 1)
        col = np.array([code[m] for m in self.materials], dtype=ids.dtype)[k]
        sub = ids[np.ix_(mr, mz)]
        sub[:] = col[mz][None, :]
        ids[np.ix_(mr, mz)] = sub


@dataclass(frozen=True)
class Dome:
    """Solid of revolution z_base <= z < z_base + height - sag(r) for r < r_edge."""

    material: str
    z_base: float
    r_edge: float
    conic: float
    roc: float

    @property
    def height(self) -> float:
        return float(lens_sag(self.conic, self.roc, self.r_edge))

    def paint(self, ids, r, z, code):
        mr = r < self.r_edge
        if not mr.any():
            return
        top = self.z_base + self.height - lens_sag(self.conic, self.roc, r[mr])
        inside = (z[None, :] >= self.z_base) & (z[None, :] < top[:, None])
        sub = ids[mr]
        sub[inside] = code[self.material]
        ids[mr] = sub


@dataclass(frozen=True)
class Structure:
    """Painted primitives over a background, plus bookkeeping for the grid."""

    primitives: tuple
    background: str = "air"
    z_bottom: float = 0.0  # lowest designed interface (top of substrate or mirror)
    z_top: float = 0.0  # highest material point
    r_extent: float = 0.0  # lateral size of the designed features
    dipole_z: float = 0.0
    axis_layers: tuple = ()  # (material, z0, z1) along r = 0, bottom to top
    label: str = ""

    def materials(self) -> list[str]:
        out = [self.background]
        for p in self.primitives:
            ms = p.materials if isinstance(p, Stack) else (p.material,)
            out += [m for m in ms if m not in out]
        return out

    def material_ids(self, r, z, code) -> np.ndarray:
        ids = np.full((len(r), len(z)), code[self.background], dtype=np.int16)
        for p in self.primitives:
            p.paint(ids, np.asarray(r), np.asarray(z), code)
        return ids

    def material_at(self, r: float, z: float) -> str:
        mats = self.materials()
        code = {m: i for i, m in enumerate(mats)}
        return mats[int(self.material_ids(np.array([r]), np.array([z]), code)[0, 0])]


def _dbr(n_pairs: int, first: str, second: str, nf: float, ns: float, wavelength: float,
         z0: float):
    mats, bounds = [], [z0]
    for _ in range(n_pairs):
        for m, n in ((first, nf), (second, ns)):
            mats.append(m)
            bounds.append(bounds[-1] + wavelength / (4 * n))
    return mats, bounds


def _semiconductor_body(thickness: float, wavelength: float, main: str = "GaAs"):
    """Layers of a semiconductor slab; telecom devices start with the buffer."""
    if wavelength < 1450:
        return [(main, thickness)]
    buf = sum(t for _, t in BUFFER_LAYERS)
    if thickness < buf:
        raise GeometryError(f"semiconductor body of {thickness} nm cannot hold the "
                            f"{buf:g} nm metamorphic buffer")
    return [*BUFFER_LAYERS, (CAP, thickness - buf)]


def host_material(wavelength: float) -> str:
    return "GaAs" if wavelength < 1450 else CAP


def device_structure(params: DeviceParams, materials: MaterialTable,
                     temperature: str = "4K", gold_thickness: float = 150.0) -> Structure:
    """Assemble the painted structure of a device family."""
    params.validate()
    lam = params.wavelength
    n = {m: materials.lookup(m, lam, temperature).real for m in ("GaAs", "AlAs")}
    host = host_material(lam)
    inf = math.inf
    prims: list = []
    axis: list = []

    def add_layers(layers, z, r1=inf):
        mats = [m for m, _ in layers]
        bounds = [z]
        for _, t in layers:
            bounds.append(bounds[-1] + t)
        prims.append(Stack(tuple(mats), tuple(bounds), 0.0, r1))
        return mats, bounds

    def record(mats, bounds):
        axis.extend((m, bounds[i], bounds[i + 1]) for i, m in enumerate(mats))

    if isinstance(params, (Micromesa, Micropillar)):
        # substrate below z = 0 is GaAs. The mesa mirror follows the growth
        # order (AlAs first, GaAs last); the pillar mirror ends in AlAs so
        # that the GaAs cavity is bounded by low-index layers on both sides.
        r_sub = inf
        prims.append(Box("GaAs", 0.0, inf, -inf, 0.0))
        if isinstance(params, Micromesa):
            mats, bounds = _dbr(params.dbr_pairs, "AlAs", "GaAs", n["AlAs"], n["GaAs"], lam, 0.0)
        else:
            mats, bounds = _dbr(params.n_pairs_bottom, "GaAs", "AlAs", n["GaAs"], n["AlAs"],
                                lam, 0.0)
        if isinstance(params, Micromesa):
            prims.append(Stack(tuple(mats), tuple(bounds), 0.0, r_sub))
            record(mats, bounds)
            z = bounds[-1]
            m2, b2 = add_layers(_semiconductor_body(params.spacer, lam), z)
            record(m2, b2)
            z_mesa = b2[-1]
            prims.append(Box(host, 0.0, params.radius, z_mesa, z_mesa + params.height))
            axis.append((host, z_mesa, z_mesa + params.height))
            z_top = z_mesa + params.height
            dip = z_mesa + params.dipole_z
            r_ext = params.radius
        else:
            R = params.radius
            cav = _semiconductor_body(params.cavity_height, lam)
            layers = list(zip(mats, np.diff(bounds)))
            z_cav = bounds[-1]
            layers += cav
            top_mats, top_bounds = _dbr(params.n_pairs_top, "AlAs", "GaAs", n["AlAs"],
                                        n["GaAs"], lam, 0.0)
            layers += list(zip(top_mats, np.diff(top_bounds)))
            m2, b2 = add_layers(layers, 0.0, R)
            record(m2, b2)
            z_top = b2[-1]
            # etched fully down to the substrate and planarized to the pillar top
            prims.append(Box("BCB", R, inf, 0.0, z_top))
            dip = z_cav + params.dipole_height
            r_ext = R
        z_bottom = 0.0
    elif isinstance(params, Microlens):
        prims.append(Box("Au", 0.0, inf, -inf, 0.0))
        axis.append(("Au", -gold_thickness, 0.0))
        m2, b2 = add_layers(_semiconductor_body(params.spacer, lam), 0.0)
        record(m2, b2)
        z_base = b2[-1]
        dome = Dome(host, z_base, params.diameter / 2, params.conic_constant,
                    params.radius_of_curvature)
        prims.append(dome)
        axis.append((host, z_base, z_base + dome.height))
        z_top = z_base + dome.height
        dip = z_base + params.dipole_z
        r_ext = params.diameter / 2
        z_bottom = 0.0
    elif isinstance(params, CBG):
        prims.append(Box("Au", 0.0, inf, -inf, 0.0))
        axis.append(("Au", -gold_thickness, 0.0))
        prims.append(Box("SiO2", 0.0, inf, 0.0, params.sio2_thickness))
        axis.append(("SiO2", 0.0, params.sio2_thickness))
        z_m = params.sio2_thickness
        m2, b2 = add_layers(_semiconductor_body(params.height, lam), z_m)
        record(m2, b2)
        z_top = b2[-1]
        for k in range(params.n_rings):
            r0 = params.central_disk_radius + k * params.grating_period
            prims.append(Box("air", r0, r0 + params.trench_width, z_m, z_top))
        dip = z_m + params.dipole_height
        r_ext = params.central_disk_radius + params.n_rings * params.grating_period
        z_bottom = 0.0
    else:
        raise GeometryError(f"unsupported parameter type {type(params).__name__}")

    s = Structure(tuple(prims), "air", z_bottom, z_top, r_ext, dip, tuple(axis),
                  label=f"{params.family}-{lam:g}")
    mat = s.material_at(0.0, dip)
    if mat not in SEMICONDUCTORS:
        raise GeometryError(f"dipole at z = {dip:.2f} nm lies in {mat}, not in a semiconductor")
    return s


# ---------------------------------------------------------------------------
# permittivity map


@dataclass(frozen=True)
class PermittivityMap:
    """Staggered-grid permittivity of one axisymmetric structure.

    Node (i, j) sits at r = i*dr, z = z0 + j*dz. Component locations follow
    the cylindrical Yee cell: E_r at (i+1/2, j), E_phi at (i, j), E_z at
    (i, j+1/2). Each component carries its own averaged permittivity.
    """

    wavelength: float
    dr: float
    dz: float
    nr: int
    nz: int
    z0: float
    eps_r: np.ndarray = field(repr=False)
    eps_phi: np.ndarray = field(repr=False)
    eps_z: np.ndarray = field(repr=False)
    pml_r: int
    pml_zlo: int
    pml_zhi: int
    dipole_index: int
    monitor_index: int
    host_eps: complex
    structure_top: float
    r_extent: float
    pec_index: int | None = None
    semiconductor_fraction: np.ndarray | None = field(default=None, repr=False)
    label: str = ""
    grid_wavelength: float = 0.0
    resolution: float = 0.0

    @property
    def eps(self) -> np.ndarray:
        """Node-centered (cell-averaged) permittivity."""
        return self.eps_phi

    @property
    def shape(self) -> tuple[int, int]:
        return self.nr, self.nz

    @property
    def r_nodes(self) -> np.ndarray:
        return np.arange(self.nr) * self.dr

    @property
    def z_nodes(self) -> np.ndarray:
        return self.z0 + np.arange(self.nz) * self.dz

    @property
    def dipole_z(self) -> float:
        return self.z0 + self.dipole_index * self.dz

    @property
    def monitor_z(self) -> float:
        return self.z0 + self.monitor_index * self.dz

    @property
    def r_max(self) -> float:
        """Outer radius of the physical (non-absorbing) region."""
        return (self.nr - self.pml_r) * self.dr

    @property
    def extents(self) -> tuple[float, float, float]:
        return self.nr * self.dr, self.z0, self.z0 + (self.nz - 1) * self.dz

    @property
    def n_unknowns(self) -> int:
        return 3 * self.nr * self.nz

    def material_volume(self, r_max: float, z_lo: float, z_hi: float) -> float:
        """Semiconductor volume (nm^3) inside r < r_max, z_lo <= z < z_hi."""
        if self.semiconductor_fraction is None:
            raise ValueError("map carries no material fractions")
        r = self.r_nodes
        a = np.clip(r - self.dr / 2, 0, r_max)
        b = np.clip(r + self.dr / 2, 0, r_max)
        area = np.pi * (b ** 2 - a ** 2)
        z = self.z_nodes
        h = np.clip(np.minimum(z + self.dz / 2, z_hi) - np.maximum(z - self.dz / 2, z_lo), 0,
                    None)
        return float(area @ self.semiconductor_fraction @ h)


def _block(a: np.ndarray, s: int, axis: int, mode: str) -> np.ndarray:
    """Reduce consecutive groups of ``s`` samples along ``axis``."""
    shp = list(a.shape)
    shp[axis] //= s
    shp.insert(axis + 1, s)
    a = a.reshape(shp)
    if mode == "mean":
        return a.mean(axis=axis + 1)
    return 1.0 / (1.0 / a).mean(axis=axis + 1)


def sample_structure(structure: Structure, eps_of: dict, nr: int, nz: int, dr: float, dz: float,
                     z0: float, subsample: int = 4, smoothing: bool = True, chunk: int = 48):
    """Per-component averaged permittivities on the staggered grid.

    E_phi averages arithmetically over its dual cell, E_r harmonically in r
    and arithmetic in z, E_z the other way round. Dual cells that touch a
    metal take the value at the component position instead: averaging a
    negative and a positive permittivity can produce near-zero cells that
    support spurious resonances.
    """
    s = subsample if smoothing else 2
    if s % 2:
        raise ValueError("subsample must be even")
    mats = list(eps_of)
    code = {m: i for i, m in enumerate(mats)}
    eps_table = np.array([eps_of[m] for m in mats], dtype=complex)
    metal = np.array([v.real < 0 for v in eps_table])
    semi = np.array([m in SEMICONDUCTORS for m in mats])
    h = s // 2
    # fine sample offsets: E_phi cell of node i covers samples [i*s, i*s + s)
    zf = z0 - dz / 2 + (np.arange((nz + 1) * s) + 0.5) * dz / s
    out_r = np.empty((nr, nz), complex)
    out_p = np.empty((nr, nz), complex)
    out_z = np.empty((nr, nz), complex)
    frac = np.empty((nr, nz), np.float32)
    for i0 in range(0, nr, chunk):
        i1 = min(nr, i0 + chunk)
        rf = -dr / 2 + (np.arange(i0 * s, (i1 + 1) * s) + 0.5) * dr / s
        ids = structure.material_ids(np.abs(rf), zf, code)
        eps = eps_table[ids]
        met = metal[ids]
        n_i = i1 - i0
        if not smoothing:
            # centre sample of each dual cell (staircase)
            out_p[i0:i1] = eps[h:n_i * s:s, h:nz * s:s]
            out_r[i0:i1] = eps[s:n_i * s + s:s, h:nz * s:s]
            out_z[i0:i1] = eps[h:n_i * s:s, s:nz * s + s:s]
        else:
            def touches_metal(m):
                return _block(_block(m.astype(float), s, 0, "mean"), s, 1, "mean") > 0

            e_p = eps[: n_i * s, : nz * s]
            ar = _block(_block(e_p, s, 0, "mean"), s, 1, "mean")
            point = eps[h:n_i * s:s, h:nz * s:s]
            out_p[i0:i1] = np.where(touches_metal(met[: n_i * s, : nz * s]), point, ar)
            e_r = eps[h: h + n_i * s, : nz * s]
            harm = _block(_block(e_r, s, 0, "harm"), s, 1, "mean")
            point = eps[s:n_i * s + s:s, h:nz * s:s]
            out_r[i0:i1] = np.where(touches_metal(met[h: h + n_i * s, : nz * s]), point, harm)
            e_z = eps[: n_i * s, h: h + nz * s]
            harm = _block(_block(e_z, s, 1, "harm"), s, 0, "mean")
            point = eps[h:n_i * s:s, s:nz * s + s:s]
            out_z[i0:i1] = np.where(touches_metal(met[: n_i * s, h: h + nz * s]), point, harm)
        frac[i0:i1] = _block(_block(semi[ids[: n_i * s, : nz * s]].astype(np.float32), s, 0,
                                    "mean"), s, 1, "mean")
    return out_r, out_p, out_z, frac


def build_map(structure: Structure, materials: MaterialTable | None, wavelength: float,
              resolution: float = 40.0, *, grid_wavelength: float | None = None,
              eps_override: dict | None = None, temperature: str = "4K",
              air_height: float = 4000.0, lateral_margin: float | None = None,
              substrate_depth: float = 200.0, pml_thickness: float | None = None,
              monitor_offset: float | None = None, smoothing: bool = True,
              subsample: int = 4, max_unknowns: int = 12_000_000, clamp_nm: float = 25.0,
              pec_z: float | None = None, n_max: float | None = None) -> PermittivityMap:
    """Sample ``structure`` on a uniform staggered grid.

    Parameters
    ----------
    resolution : float
        Cells per wavelength in the highest-index dielectric, evaluated at
        ``grid_wavelength`` (defaults to ``wavelength``), so that a sweep keeps
        one grid while the indices follow the solve wavelength.
    pml_thickness : float, optional
        Absorbing-layer thickness in nm; defaults to one wavelength in the
        highest-index dielectric.
    monitor_offset : float, optional
        Height of the monitor plane above ``structure.z_top``; one vacuum
        wavelength by default.
    lateral_margin : float, optional
        Air or substrate beyond ``structure.r_extent`` before the radial
        absorbing layer; two wavelengths by default, which keeps the monitor
        plane wide enough for the far-field transform.
    pec_z : float, optional
        Perfect electric mirror filling everything at or below this height.
    """
    if resolution < 10:
        raise GeometryError(f"resolution must be >= 10 cells per wavelength, got {resolution}")
    grid_wavelength = grid_wavelength or wavelength
    mats = structure.materials()
    eps_of = {}
    for m in mats:
        if eps_override and m in eps_override:
            eps_of[m] = complex(eps_override[m])
        elif m in ("air", "vacuum"):
            eps_of[m] = 1.0 + 0j
        else:
            eps_of[m] = materials.permittivity(m, wavelength, temperature, clamp_nm)
    if n_max is None:
        n_grid = []
        for m in mats:
            if eps_override and m in eps_override:
                n_grid.append(np.sqrt(complex(eps_override[m])).real)
            elif m in ("air", "vacuum"):
                n_grid.append(1.0)
            else:
                n_grid.append(materials.lookup(m, grid_wavelength, temperature, clamp_nm).real)
        diel = [n for m, n in zip(mats, n_grid) if eps_of[m].real > 0]
        n_max = max(diel)
    d = grid_wavelength / (n_max * resolution)
    if pml_thickness is None:
        pml_thickness = grid_wavelength / n_max
    npml = max(8, int(round(pml_thickness / d)))
    monitor_offset = grid_wavelength if monitor_offset is None else monitor_offset
    lateral_margin = 2 * grid_wavelength if lateral_margin is None else lateral_margin

    z_d = structure.dipole_z
    z_lo = structure.z_bottom - substrate_depth - npml * d
    if pec_z is not None:
        z_lo = pec_z - d
    z_hi = structure.z_top + air_height + npml * d
    j_d = int(math.ceil((z_d - z_lo) / d - 1e-9))
    z0 = z_d - j_d * d
    nz = int(math.ceil((z_hi - z0) / d)) + 1
    r_hi = structure.r_extent + lateral_margin
    nr = int(math.ceil(r_hi / d)) + npml
    if 3 * nr * nz > max_unknowns:
        raise GeometryError(f"domain of {nr} x {nz} cells ({3 * nr * nz} unknowns) exceeds the "
                            f"configured maximum of {max_unknowns} unknowns")
    j_m = int(round((structure.z_top + monitor_offset - z0) / d))
    pec_index = None
    if pec_z is not None:
        pec_index = int(round((pec_z - z0) / d))
        if abs(z0 + pec_index * d - pec_z) > 1e-6 * d:
            raise GeometryError("mirror plane must fall on a grid node; choose the dipole "
                                "height as a multiple of the cell size")
    er, ep, ez, frac = sample_structure(structure, eps_of, nr, nz, d, d, z0, subsample,
                                        smoothing)
    npml_lo = 0 if pec_z is not None else npml
    host = eps_of[structure.material_at(0.0, z_d)]
    for a in (er, ep, ez, frac):
        a.setflags(write=False)
    return PermittivityMap(
        wavelength=wavelength, dr=d, dz=d, nr=nr, nz=nz, z0=z0, eps_r=er, eps_phi=ep, eps_z=ez,
        pml_r=npml, pml_zlo=npml_lo, pml_zhi=npml, dipole_index=j_d, monitor_index=j_m,
        host_eps=host, structure_top=structure.z_top, r_extent=structure.r_extent,
        pec_index=pec_index, semiconductor_fraction=frac, label=structure.label,
        grid_wavelength=grid_wavelength, resolution=resolution)


def build(params: DeviceParams, materials: MaterialTable | None = None, resolution: float = 40.0,
          **kw) -> PermittivityMap:
    """Permittivity map of a device preset at its design wavelength.

    Keyword arguments are passed to ``build_map``; ``wavelength`` may be
    given to evaluate indices at another wavelength on the design grid.
    """
    materials = materials or MaterialTable.default()
    temperature = kw.pop("temperature", "4K")
    gold = kw.pop("gold_thickness", 150.0)
    s = device_structure(params, materials, temperature, gold)
    wavelength = kw.pop("wavelength", params.wavelength)
    kw.setdefault("grid_wavelength", params.wavelength)
    return build_map(s, materials, wavelength, resolution, temperature=temperature, **kw)


def homogeneous_structure(material: str = "air", dipole_z: float = 0.0,
                          half_height: float = 0.0, radius: float = 0.0) -> Structure:
    """Unbounded medium around a dipole at ``dipole_z``.

    The structure occupies ``half_height`` above and below the dipole; the
    domain margins are set by the ``build_map`` arguments.
    """
    return Structure((), material, dipole_z - half_height, dipole_z + half_height,
                     radius, dipole_z, ((material, -math.inf, math.inf),),
                     label=f"homogeneous-{material}")


def planar_structure(layers: Sequence[tuple[str, float]], dipole_z: float,
                     substrate: str = "GaAs", ambient: str = "air") -> Structure:
    """Radially invariant stack on ``substrate``; layers listed bottom to top."""
    mats = [m for m, _ in layers]
    bounds = [0.0]
    for _, t in layers:
        bounds.append(bounds[-1] + t)
    prims = [Box(substrate, 0.0, math.inf, -math.inf, 0.0)]
    if layers:
        prims.append(Stack(tuple(mats), tuple(bounds)))
    axis = tuple((m, bounds[i], bounds[i + 1]) for i, m in enumerate(mats))
    return Structure(tuple(prims), ambient, 0.0, bounds[-1], 0.0, dipole_z, axis,
                     label="planar")
