"""Free-space and single-lens coupling chain from the emitter to a fiber facet.

The chain carries two scalar transverse components on a square grid and
propagates them with the angular-spectrum method. The emitted field enters
as a plane-wave spectrum built from the far-field amplitudes of the solver
solution, so the power per direction equals the rigorous result. The
printed lens is a thin element: a phase screen plus local-angle Fresnel
transmission at the air/polymer surface, with everything outside the
aperture discarded.

Lengths on the grid are in micrometres, lens parameters in millimetres and
wavelengths in nanometres. A field's power is sum |E|^2 dA over both
components, normalized so that the dipole's total power is 1.
"""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field, replace
from importlib import resources

import numpy as np

from .farfield import FarField
from .fiber import GuidedMode, overlap
from .materials import MaterialTable

log = logging.getLogger(__name__)

FIBER_RADIUS_MM = 0.0625  # the lens is printed on a 125 um fiber


class ChainError(RuntimeError):
    """A propagation stage failed; ``stage`` names it."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage


class AliasingError(ValueError):
    """Field content at the grid's Nyquist edge; pad or refine the grid."""


@dataclass(frozen=True)
class AsphericLens:
    """Even asphere printed in polymer on the fiber facet (lengths in mm)."""

    vertex_radius: float
    conic_constant: float
    a2: float
    a4: float
    lens_length: float
    n_polymer: float
    distance_to_source: float
    aperture: float = FIBER_RADIUS_MM

    def __post_init__(self):
        if self.aperture <= 0 or self.lens_length <= 0:
            raise ValueError("aperture and lens length must be positive")
        if self.n_polymer < 1:
            raise ValueError("polymer index must be >= 1")
        if self.distance_to_source < 0:
            raise ValueError("distance to source must be non-negative")


def sag(lens: AsphericLens, r) -> np.ndarray:
    """Surface height z(r) in mm.

    z = c r^2 / (1 + sqrt(1 - (1 + kappa) c^2 r^2)) + a2 r^2 + a4 r^4.
    """
    r = np.asarray(r, float)
    if np.any(np.abs(r) > lens.aperture * (1 + 1e-12)):
        raise ValueError(f"radius beyond the lens aperture {lens.aperture} mm")
    c = 0.0 if math.isinf(lens.vertex_radius) else 1 / lens.vertex_radius
    arg = 1 - (1 + lens.conic_constant) * c * c * r * r
    if np.any(arg < 0):
        raise ValueError("sag undefined: square-root argument negative inside the aperture")
    return c * r * r / (1 + np.sqrt(arg)) + lens.a2 * r ** 2 + lens.a4 * r ** 4


def sag_slope(lens: AsphericLens, r) -> np.ndarray:
    """dz/dr in mm/mm."""
    r = np.asarray(r, float)
    c = 0.0 if math.isinf(lens.vertex_radius) else 1 / lens.vertex_radius
    arg = 1 - (1 + lens.conic_constant) * c * c * r * r
    return c * r / np.sqrt(arg) + 2 * lens.a2 * r + 4 * lens.a4 * r ** 3


def load_lens(name: str, materials: MaterialTable | None = None, temperature: str = "300K",
              **overrides) -> AsphericLens:
    """Lens preset from the bundled table, with optional field overrides."""
    table = json.loads(resources.files("qdcouple").joinpath("data/lenses.json").read_text())
    name = table["_aliases"].get(name, name)
    if name not in table or name.startswith("_"):
        known = sorted(k for k in table if not k.startswith("_"))
        raise KeyError(f"unknown lens preset {name!r}; known: {known}")
    d = dict(table[name])
    materials = materials or MaterialTable.default()
    n = materials.lookup("IP-S", d["wavelength"], temperature).real
    kw = dict(vertex_radius=d["vertex_radius"], conic_constant=d["conic_constant"], a2=d["a2"],
              a4=d["a4"], lens_length=d["lens_length"], n_polymer=n,
              distance_to_source=d["distance_to_source"])
    kw.update(overrides)
    return AsphericLens(**kw)


def lens_presets() -> dict:
    table = json.loads(resources.files("qdcouple").joinpath("data/lenses.json").read_text())
    return {k: v for k, v in table.items() if not k.startswith("_")}


@dataclass(frozen=True)
class Grid:
    """Square n x n grid of spacing dx (um), centred on the axis."""

    n: int
    dx: float

    @property
    def x(self) -> np.ndarray:
        return (np.arange(self.n) - self.n // 2) * self.dx

    @property
    def half_width(self) -> float:
        return self.n // 2 * self.dx

    @property
    def k(self) -> np.ndarray:
        """Angular spatial frequencies in FFT order (rad/um)."""
        return 2 * math.pi * np.fft.fftfreq(self.n, self.dx)

    def radius(self) -> np.ndarray:
        X, Y = np.meshgrid(self.x, self.x)
        return np.hypot(X, Y)


@dataclass(frozen=True)
class PropagatedField:
    """Transverse field (x and y components) on a plane.

    ``components`` has shape (2, n, n), indexed [component, y, x]. ``z`` is
    the plane position in um, ``n_medium`` the refractive index there.
    """

    components: np.ndarray = field(repr=False)
    grid: Grid
    z: float
    wavelength: float
    n_medium: float = 1.0

    @property
    def power(self) -> float:
        return float(np.sum(np.abs(self.components) ** 2) * self.grid.dx ** 2)

    @property
    def ex(self) -> np.ndarray:
        return self.components[0]

    @property
    def ey(self) -> np.ndarray:
        return self.components[1]


def _edge_fraction(spec: np.ndarray, grid: Grid, band: float = 0.9) -> float:
    kmax = math.pi / grid.dx
    k = np.abs(grid.k)
    edge = (k[None, :] > band * kmax) | (k[:, None] > band * kmax)
    p = np.abs(spec) ** 2
    total = p.sum()
    return float(p[..., edge].sum() / total) if total > 0 else 0.0


def propagate(src: PropagatedField, distance: float, wavelength: float | None = None,
              n_medium: float | None = None, alias_tol: float = 1e-4) -> PropagatedField:
    """Angular-spectrum propagation over ``distance`` um in a uniform medium.

    Evanescent components decay with the exact transfer function. Raises
    ``AliasingError`` when more than ``alias_tol`` of the power sits in the
    outer tenth of the spatial-frequency band.
    """
    wl = src.wavelength if wavelength is None else wavelength
    n = src.n_medium if n_medium is None else n_medium
    if distance == 0:
        return replace(src, n_medium=n)
    g = src.grid
    spec = np.fft.fft2(src.components, axes=(-2, -1))
    frac = _edge_fraction(spec, g)
    if frac > alias_tol:
        raise AliasingError(f"{frac:.2e} of the power lies at the grid's frequency edge; "
                            "refine dx or pad the grid")
    k = 2 * math.pi * n / (wl * 1e-3)
    KX, KY = np.meshgrid(g.k, g.k)
    kz = np.sqrt((k * k - KX ** 2 - KY ** 2).astype(complex))
    spec *= np.exp(1j * kz * distance)
    out = np.fft.ifft2(spec, axes=(-2, -1))
    return PropagatedField(out, g, src.z + distance, wl, n)


def _fresnel_power(n1: float, n2: float, cos_i: np.ndarray):
    """Power transmission (s, p) from medium n1 into n2."""
    sin_t = n1 / n2 * np.sqrt(np.clip(1 - cos_i ** 2, 0, 1))
    cos_t = np.sqrt((1 - sin_t ** 2).astype(complex))
    rs = (n1 * cos_i - n2 * cos_t) / (n1 * cos_i + n2 * cos_t)
    rp = (n2 * cos_i - n1 * cos_t) / (n2 * cos_i + n1 * cos_t)
    return 1 - np.abs(rs) ** 2, 1 - np.abs(rp) ** 2


def _apply_fresnel(comp: np.ndarray, ts: np.ndarray, tp: np.ndarray, phi: np.ndarray):
    """Scale radial (p) and azimuthal (s) parts by the amplitude factors."""
    c, s = np.cos(phi), np.sin(phi)
    er = comp[0] * c + comp[1] * s
    ea = -comp[0] * s + comp[1] * c
    er = er * np.sqrt(tp)
    ea = ea * np.sqrt(ts)
    return np.stack([er * c - ea * s, er * s + ea * c])


@dataclass(frozen=True)
class LensTransmission:
    field: PropagatedField
    clipped: float  # power fraction outside the aperture
    reflected: float  # power fraction reflected at the surface


def apply_lens(fld: PropagatedField, lens: AsphericLens) -> LensTransmission:
    """Thin-element lens at the vertex plane.

    Phase screen exp(-i k (n - 1) z(r)) (constant offsets dropped), Fresnel
    power transmission at the local incidence angle between the surface
    normal and the ray direction taken from the local phase gradient, and an
    opaque stop at the aperture radius. The outgoing field is in the polymer.
    """
    g = fld.grid
    p_in = fld.power
    X, Y = np.meshgrid(g.x, g.x)
    r = np.hypot(X, Y)
    phi = np.arctan2(Y, X)
    ap = lens.aperture * 1e3
    # a stop narrower than one cell passes nothing the grid can represent
    inside = r <= ap if ap >= g.dx else np.zeros_like(r, bool)
    comp = np.where(inside, fld.components, 0)
    p_ap = float(np.sum(np.abs(comp) ** 2) * g.dx ** 2)
    clipped = 1 - p_ap / p_in if p_in > 0 else 0.0
    if clipped > 0.5:
        log.warning("%.0f%% of the field power misses the lens aperture", 100 * clipped)
    rr = np.where(inside, r, 0) * 1e-3
    z = sag(lens, rr) * 1e3
    slope = sag_slope(lens, rr)
    # local propagation direction from the phase gradient of the field
    k = 2 * math.pi * fld.n_medium / (fld.wavelength * 1e-3)
    gy, gx = np.gradient(comp, g.dx, axis=(-2, -1))
    dens = np.sum(np.abs(comp) ** 2, axis=0)
    safe = np.where(dens > 0, dens, 1.0)
    kx = np.sum(np.imag(np.conj(comp) * gx), axis=0) / safe
    ky = np.sum(np.imag(np.conj(comp) * gy), axis=0) / safe
    sx, sy = np.clip(kx / k, -1, 1), np.clip(ky / k, -1, 1)
    sz = np.sqrt(np.clip(1 - sx ** 2 - sy ** 2, 0, 1))
    # surface normal pointing into the polymer
    nx, ny = -slope * np.cos(phi), -slope * np.sin(phi)
    cos_i = (sx * nx + sy * ny + sz) / np.sqrt(1 + slope ** 2)
    ts, tp = _fresnel_power(fld.n_medium, lens.n_polymer, np.abs(cos_i))
    comp = _apply_fresnel(comp, ts, tp, phi)
    p_t = float(np.sum(np.abs(comp) ** 2) * g.dx ** 2)
    k0 = 2 * math.pi / (fld.wavelength * 1e-3)
    comp = comp * np.exp(-1j * k0 * (lens.n_polymer - fld.n_medium) * z)
    out = PropagatedField(np.where(inside, comp, 0), g, fld.z, fld.wavelength, lens.n_polymer)
    reflected = (p_ap - p_t) / p_in if p_in > 0 else 0.0
    return LensTransmission(out, clipped, reflected)


def interface(fld: PropagatedField, n2: float) -> tuple[PropagatedField, float]:
    """Flat interface at normal incidence; returns (field, reflected fraction)."""
    n1 = fld.n_medium
    t = 4 * n1 * n2 / (n1 + n2) ** 2
    return PropagatedField(fld.components * math.sqrt(t), fld.grid, fld.z, fld.wavelength, n2), 1 - t


def default_grid(wavelength: float, lens: AsphericLens | None = None, n: int = 1024) -> Grid:
    """Grid covering the lens aperture with margin, sampled below lambda/4."""
    half = 1.6 * (lens.aperture if lens else FIBER_RADIUS_MM) * 1e3
    dx = 2 * half / n
    if dx > wavelength * 1e-3 / 3:
        raise ValueError(f"{n} points cannot resolve a {2 * half:.0f} um window at {wavelength} nm")
    return Grid(n, dx)


def source_field(ff: FarField, grid: Grid, z: float = 0.0, na_max: float | None = None,
                 z_ref: float = 0.0) -> PropagatedField:
    """Emitted field at the plane ``z`` (um) from the far-field amplitudes.

    Each plane wave gets the transverse polarization of the far field,
    E_theta along the azimuthal radial direction and E_phi along phi, so
    its power equals the radiated power in that direction. Directions with
    sin(theta) > ``na_max`` are dropped. The result is scaled to carry the
    exact fraction of the total power radiated within ``na_max``. ``z`` and
    ``z_ref`` (the origin of the far-field phase, in um) fix the plane.
    """
    k = 2 * math.pi / (ff.wavelength * 1e-3)
    na_max = 1.0 if na_max is None else na_max
    KX, KY = np.meshgrid(grid.k, grid.k)
    kt = np.hypot(KX, KY)
    s = kt / k
    keep = s < min(na_max, 1 - 1e-9)
    theta = np.arcsin(np.where(keep, s, 0))
    phi = np.arctan2(KY, KX)
    a = np.interp(theta, ff.theta, ff.a.real) + 1j * np.interp(theta, ff.theta, ff.a.imag)
    b = np.interp(theta, ff.theta, ff.b.real) + 1j * np.interp(theta, ff.theta, ff.b.imag)
    e_t = 2 * a * np.cos(phi)
    e_p = 2j * b * np.sin(phi)
    ex = e_t * np.cos(phi) - e_p * np.sin(phi)
    ey = e_t * np.sin(phi) + e_p * np.cos(phi)
    kz = np.sqrt(np.maximum(k * k - kt * kt, 1e-30))
    # U dOmega = U dkx dky / (k kz)
    w = np.where(keep, 1 / np.sqrt(kz), 0) * np.exp(1j * kz * (z - z_ref))
    spec = np.stack([ex * w, ey * w])
    # spectrum is in FFT order; move the origin to the grid centre
    comp = np.fft.fftshift(np.fft.ifft2(spec, axes=(-2, -1)), axes=(-2, -1))
    fld = PropagatedField(comp, grid, z, ff.wavelength, 1.0)
    target = ff.power_within(math.asin(min(na_max, 1.0))) / ff.p_total
    p = fld.power
    if p == 0:
        raise ChainError("source", "far field carries no power")
    return PropagatedField(comp * math.sqrt(target / p), grid, z, ff.wavelength, 1.0)


def gaussian_field(grid: Grid, wavelength: float, waist: float, z: float = 0.0,
                   power: float = 1.0) -> PropagatedField:
    """x-polarized Gaussian with its waist (um) at the plane."""
    X, Y = np.meshgrid(grid.x, grid.x)
    e = np.exp(-(X ** 2 + Y ** 2) / waist ** 2).astype(complex)
    comp = np.stack([e, np.zeros_like(e)])
    f = PropagatedField(comp, grid, z, wavelength)
    return PropagatedField(comp * math.sqrt(power / f.power), grid, z, wavelength)


def beam_radius(fld: PropagatedField) -> float:
    """Second-moment radius w = 2 sqrt(<x^2>) of the intensity, in um."""
    I = np.sum(np.abs(fld.components) ** 2, axis=0)
    x = fld.grid.x
    return 2 * math.sqrt(float(np.sum(I * x[None, :] ** 2) / np.sum(I)))


@dataclass(frozen=True)
class ChainResult:
    """Stage-by-stage power bookkeeping of one coupling chain.

    ``stages`` maps stage name to its power transmission; their product is
    ``facet_power``. ``eta_total`` = facet_power * facet_overlap.
    """

    eta_total: float
    facet_overlap: float
    facet_power: float
    stages: dict
    distance: float
    facet_field: PropagatedField | None = field(default=None, repr=False)

    @property
    def stage_product(self) -> float:
        return float(np.prod(list(self.stages.values())))


def total_efficiency(ff: FarField, lens: AsphericLens, mode: GuidedMode, n_cladding: float,
                     grid: Grid | None = None, z_source: float = 0.0,
                     keep_field: bool = False) -> ChainResult:
    """Fraction of the dipole power coupled into the fiber's LP01 mode.

    Stages: upward emission within the grid's reach, free space to the lens
    vertex, the lens surface and stop, propagation through the polymer to the
    facet, the polymer/fiber interface, and the mode overlap. ``z_source`` is
    the emitter height in the far-field coordinates (um); the lens distance
    is measured from the emitter.
    """
    if abs(ff.wavelength - mode.wavelength) > 1e-6:
        raise ChainError("setup", f"far field at {ff.wavelength} nm but fiber mode at "
                         f"{mode.wavelength} nm")
    grid = grid or default_grid(ff.wavelength, lens)
    d = lens.distance_to_source * 1e3
    stages = {}
    # directions that would leave the window before the lens plane cannot reach the aperture
    reach = grid.half_width * 0.95
    na_grid = math.sin(math.atan2(reach, d)) if d > 0 else 1.0
    try:
        src = source_field(ff, grid, z=z_source, na_max=na_grid, z_ref=0.0)
    except Exception as exc:
        raise ChainError("source", str(exc)) from exc
    stages["emission"] = src.power
    try:
        at_lens = propagate(src, d)
    except Exception as exc:
        raise ChainError("free-space", str(exc)) from exc
    stages["free_space"] = at_lens.power / src.power
    lt = apply_lens(at_lens, lens)
    stages["aperture"] = 1 - lt.clipped
    stages["lens_surface"] = lt.field.power / (at_lens.power * (1 - lt.clipped)) \
        if lt.clipped < 1 else 0.0
    try:
        at_facet = propagate(lt.field, lens.lens_length * 1e3)
    except Exception as exc:
        raise ChainError("polymer", str(exc)) from exc
    stages["polymer"] = at_facet.power / lt.field.power if lt.field.power > 0 else 0.0
    into_fiber, refl = interface(at_facet, n_cladding)
    stages["facet_interface"] = 1 - refl
    p = into_fiber.power
    if p > 0:
        x = grid.x
        eta_c = overlap(into_fiber.ex, x, x, mode, ey=into_fiber.ey)
    else:
        eta_c = 0.0
    return ChainResult(eta_total=p * eta_c, facet_overlap=eta_c, facet_power=p, stages=stages,
                       distance=lens.distance_to_source * 1e3,
                       facet_field=into_fiber if keep_field else None)


@dataclass(frozen=True)
class ScanRow:
    distance: float  # um
    eta_total: float
    db: float


def scan_distance(ff: FarField, lens: AsphericLens, mode: GuidedMode, n_cladding: float,
                  distances, grid: Grid | None = None, z_source: float = 0.0) -> list[ScanRow]:
    """eta_total against lens-to-emitter distance (um) with the dB drop from the maximum."""
    distances = [float(d) for d in distances]
    if len(distances) < 3:
        raise ValueError("a distance scan needs at least three points")
    eta = [total_efficiency(ff, replace(lens, distance_to_source=d * 1e-3), mode, n_cladding,
                            grid, z_source).eta_total for d in distances]
    best = max(eta)
    return [ScanRow(d, e, 10 * math.log10(e / best) if e > 0 and best > 0 else float("-inf"))
            for d, e in zip(distances, eta)]


def write_scan_csv(rows: list[ScanRow], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["distance_um", "eta_total", "relative_db"])
        for r in rows:
            w.writerow([f"{r.distance:.4f}", f"{r.eta_total:.8f}", f"{r.db:.6f}"])


def write_facet_csv(fld: PropagatedField, path, half_width: float = 15.0) -> None:
    """x and y cuts through the facet intensity, peak-normalized."""
    I = np.sum(np.abs(fld.components) ** 2, axis=0)
    c = fld.grid.n // 2
    x = fld.grid.x
    sel = np.abs(x) <= half_width
    peak = max(I.max(), 1e-300)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["position_um", "I_x_cut", "I_y_cut"])
        for xi, a, b in zip(x[sel], I[c, sel] / peak, I[sel, c] / peak):
            w.writerow([f"{xi:.4f}", f"{a:.8e}", f"{b:.8e}"])
