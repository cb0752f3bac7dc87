"""Device evaluation: build, solve, far field and fiber coupling."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import beam, farfield, fiber, geometry, solver
from .geometry import DeviceParams
from .materials import MaterialTable, fiber_for_wavelength, fiber_spec

log = logging.getLogger(__name__)

# cells per wavelength in the highest-index material
DEFAULT_RESOLUTION = {"micromesa": 40.0, "microlens": 40.0, "cbg": 30.0, "micropillar": 30.0}
# half-width of the initial resonance bracket relative to the design wavelength
RESONANCE_SPAN = {"cbg": 3.2e-3, "micropillar": 1.1e-3}


@dataclass(frozen=True)
class Emission:
    """What the coupling chain needs from a solved device."""

    far: farfield.FarField = field(repr=False)
    z_dipole_um: float
    design_wavelength: float

    @property
    def wavelength(self) -> float:
        return self.far.wavelength


@dataclass(frozen=True)
class DeviceResult:
    """Figures of merit of one device at one wavelength."""

    params: DeviceParams
    wavelength: float
    purcell: float
    eta: dict  # NA -> extraction efficiency
    half_angles: dict
    solution: solver.FieldSolution = field(repr=False)
    far: farfield.FarField = field(repr=False)
    resonance: solver.Resonance | None = field(default=None, repr=False)
    timings: dict = field(default_factory=dict)

    @property
    def z_dipole_um(self) -> float:
        return self.solution.pmap.dipole_z * 1e-3

    @property
    def emission(self) -> Emission:
        return Emission(self.far, self.z_dipole_um, self.params.wavelength)

    def summary(self) -> dict:
        out = {"family": self.params.family, "design_wavelength": self.params.wavelength,
               "wavelength": self.wavelength, "purcell": self.purcell,
               "eta_ext_na04": self.eta.get(0.4), "eta_ext_na08": self.eta.get(0.8),
               "half_angle_phi0": self.half_angles["phi0"],
               "half_angle_phi90": self.half_angles["phi90"],
               "half_angle_average": self.half_angles["average"],
               "half_angle_quality": self.half_angles["quality"],
               "p_monitor_fraction": self.solution.p_monitor / self.solution.p_total,
               "residual": self.solution.residual, "backend": self.solution.backend}
        if self.resonance is not None:
            out["resonance_fwhm_nm"] = self.resonance.fwhm
            out["resonance_converged"] = self.resonance.converged
        return out


def default_resolution(params: DeviceParams) -> float:
    return DEFAULT_RESOLUTION.get(params.family, 40.0)


def evaluate_device(params: DeviceParams, materials: MaterialTable | None = None,
                    resolution: float | None = None, wavelength: float | None = None,
                    opts: solver.SolverOptions | None = None, track_resonance: bool | None = None,
                    nas=(0.4, 0.8), map_kw: dict | None = None) -> DeviceResult:
    """Solve a device and post-process its far field.

    Cavity families (CBG, micropillar) are evaluated at the resonance found
    near the design wavelength unless ``track_resonance`` is False or an
    explicit ``wavelength`` is given. The grid always follows the design
    wavelength.
    """
    materials = materials or MaterialTable.default()
    resolution = resolution or default_resolution(params)
    opts = opts or solver.SolverOptions()
    map_kw = dict(map_kw or {})
    timings = {}
    t0 = time.perf_counter()
    if track_resonance is None:
        track_resonance = wavelength is None and params.family in RESONANCE_SPAN

    def make(wl):
        return geometry.build(params, materials, resolution=resolution, wavelength=wl, **map_kw)

    res = None
    if track_resonance:
        span = RESONANCE_SPAN.get(params.family, 2e-3) * params.wavelength
        res = solver.find_resonance(make, params.wavelength, span, opts)
        sol, pb, wl = res.solution, res.bulk_power, res.wavelength
    else:
        wl = wavelength or params.wavelength
        sol = solver.solve(make(wl), opts=opts)
        pb = solver.bulk_power(sol.pmap, opts)
    timings["solve"] = time.perf_counter() - t0
    t1 = time.perf_counter()
    ff = farfield.transform(sol)
    eta = {na: farfield.extraction_efficiency(ff, na) for na in nas}
    ha = farfield.half_angles(ff)
    timings["farfield"] = time.perf_counter() - t1
    return DeviceResult(params=params, wavelength=wl, purcell=sol.p_total / pb, eta=eta,
                        half_angles=ha, solution=sol, far=ff, resonance=res, timings=timings)


@dataclass(frozen=True)
class SweepPoint:
    wavelength: float
    purcell: float
    eta: float


def sweep(params: DeviceParams, wavelengths, materials: MaterialTable | None = None,
          resolution: float | None = None, opts: solver.SolverOptions | None = None,
          na: float = 0.4) -> list[SweepPoint]:
    """Purcell factor and extraction against wavelength on the design grid.

    Indices follow the solve wavelength within the table's clamp window.
    """
    out = []
    for wl in wavelengths:
        r = evaluate_device(params, materials, resolution, wavelength=float(wl), opts=opts,
                            track_resonance=False, nas=(na,))
        out.append(SweepPoint(float(wl), r.purcell, r.eta[na]))
    return out


def _mode(src: Emission, fiber_name: str | None, materials, na_model: str):
    materials = materials or MaterialTable.default()
    fiber_name = fiber_name or fiber_for_wavelength(src.design_wavelength)
    spec = fiber_spec(fiber_name, src.wavelength, materials, na_model=na_model)
    return fiber.fundamental(spec, src.wavelength), spec


def couple(src: Emission | DeviceResult, lens: beam.AsphericLens, fiber_name: str | None = None,
           materials: MaterialTable | None = None, na_model: str = "cutoff-matched",
           grid: beam.Grid | None = None, keep_field: bool = False) -> beam.ChainResult:
    """Coupling chain from a solved device into the fiber's LP01 mode."""
    src = src.emission if isinstance(src, DeviceResult) else src
    mode, spec = _mode(src, fiber_name, materials, na_model)
    return beam.total_efficiency(src.far, lens, mode, spec.n_cladding, grid=grid,
                                 z_source=src.z_dipole_um, keep_field=keep_field)


def scan(src: Emission | DeviceResult, lens: beam.AsphericLens, distances_um,
         fiber_name: str | None = None, materials: MaterialTable | None = None,
         na_model: str = "cutoff-matched", grid: beam.Grid | None = None) -> list[beam.ScanRow]:
    """eta_total against the lens-to-emitter distance (um)."""
    src = src.emission if isinstance(src, DeviceResult) else src
    mode, spec = _mode(src, fiber_name, materials, na_model)
    return beam.scan_distance(src.far, lens, mode, spec.n_cladding, distances_um, grid=grid,
                              z_source=src.z_dipole_um)


def pillar_fwhm(result: DeviceResult, materials: MaterialTable | None = None,
                n_points: int = 7, opts: solver.SolverOptions | None = None) -> tuple[float, str]:
    """FWHM of the Purcell peak from a sweep over resonance +- 2 fitted half-widths."""
    if result.resonance is None:
        raise ValueError("device was not evaluated at a tracked resonance")
    r = result.resonance
    wls = np.linspace(r.wavelength - 2 * r.half_width, r.wavelength + 2 * r.half_width, n_points)
    pts = sweep(result.params, wls, materials, result.solution.pmap.resolution, opts)
    return solver.fwhm([p.wavelength for p in pts], [p.purcell for p in pts])


__all__ = ["Emission", "DeviceResult", "evaluate_device", "sweep", "SweepPoint", "couple", "scan",
           "pillar_fwhm", "DEFAULT_RESOLUTION"]
