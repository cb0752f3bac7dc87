"""Frequency-domain Maxwell solver for axisymmetric structures.

Units: lengths in nm, c = mu0 = eps0 = 1, omega = k0 = 2 pi / lambda, time
dependence exp(-i omega t). Each azimuthal harmonic m solves

    curl curl E - k0^2 eps E = i k0 J

on a cylindrical Yee grid (see ``geometry.PermittivityMap``). An x-oriented
dipole on the axis excites m = +1 and m = -1; the two are mirror images
(E_r, E_z unchanged, E_phi reversed), so only m = +1 is solved and

    E_r = 2 E_r1 cos(phi),  E_phi = 2i E_phi1 sin(phi),  E_z = 2 E_z1 cos(phi).

The operator is made complex symmetric by the substitution E_phi = i u_phi
and a row scaling with the stretched-coordinate volume weights, which lets
the direct solver work on one triangle.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from . import geometry
from .geometry import PermittivityMap
from .linsolve import LinearSolverError, factorize

log = logging.getLogger(__name__)

COMPONENTS = ("Er", "Ephi", "Ez", "Hr", "Hphi", "Hz")


class SolverError(RuntimeError):
    """Numerical failure of a field solve."""


class SourceError(ValueError):
    """Invalid source placement or resolution."""


@dataclass(frozen=True)
class DipoleSource:
    """Horizontal (x) point dipole on the axis at height ``z`` (nm)."""

    z: float
    wavelength: float
    moment: complex = 1.0
    orientation: str = "x"


@dataclass(frozen=True)
class SolverOptions:
    residual_tol: float = 1e-8
    min_cells_per_wavelength: float = 10.0
    backend: str = "auto"  # auto | pardiso | superlu | iterative
    pml_reflection: float = 1e-6
    both_harmonics: bool = False
    symmetry_tol: float = 1e-6
    core_mb: float | None = None


@dataclass(frozen=True)
class MonitorRecord:
    """Tangential m = +1 fields on the monitor plane (physical region only).

    E_r and H_phi are sampled at r_half, E_phi and H_r at r_node; H is
    averaged from the two neighbouring half planes so all four share z.
    """

    z: float
    r_half: np.ndarray
    r_node: np.ndarray
    Er: np.ndarray
    Ephi: np.ndarray
    Hr: np.ndarray
    Hphi: np.ndarray
    n_medium: float = 1.0


@dataclass(frozen=True)
class FieldSolution:
    """m = +1 field of an x dipole plus power diagnostics.

    ``fields`` maps component names to (nr, nz) arrays on their Yee
    positions. ``p_total`` and ``p_monitor`` refer to the full x dipole.
    """

    pmap: PermittivityMap
    source: DipoleSource
    fields: dict = field(repr=False)
    p_total: float
    p_monitor: float
    monitor: MonitorRecord = field(repr=False)
    residual: float
    timings: dict = field(default_factory=dict)
    backend: str = ""
    symmetry_error: float | None = None
    m: int = 1

    @property
    def wavelength(self) -> float:
        return self.pmap.wavelength

    def harmonic(self, m: int) -> dict:
        """Field components of harmonic ``m`` in {+1, -1}."""
        if m == self.m:
            return self.fields
        if m == -self.m:
            return mirror_harmonic(self.fields)
        raise ValueError("an x dipole only excites m = +1 and m = -1")


def mirror_harmonic(f: dict) -> dict:
    """Map the m = +1 solution to m = -1 (reflection y -> -y)."""
    return {"Er": f["Er"], "Ephi": -f["Ephi"], "Ez": f["Ez"],
            "Hr": -f["Hr"], "Hphi": f["Hphi"], "Hz": -f["Hz"]}


# ---------------------------------------------------------------------------
# operator assembly


def _d_fwd(n, h):
    """node -> half: (f[j+1] - f[j]) / h with f[n] = 0."""
    return sp.diags([-np.ones(n), np.ones(n - 1)], [0, 1], shape=(n, n)) / h


def _d_bwd(n, h):
    """half -> node: (g[j] - g[j-1]) / h with g[-1] = 0."""
    return sp.diags([np.ones(n), -np.ones(n - 1)], [0, -1], shape=(n, n)) / h


@dataclass
class _Stretch:
    s_rn: np.ndarray
    s_rh: np.ndarray
    rt_n: np.ndarray
    rt_h: np.ndarray
    s_zn: np.ndarray
    s_zh: np.ndarray


def _stretch(pm: PermittivityMap, k0: float, R: float) -> _Stretch:
    nr, nz, d = pm.nr, pm.nz, pm.dr
    lnr = math.log(1 / R)
    r_n = np.arange(nr) * d
    r_h = (np.arange(nr) + 0.5) * d
    if pm.pml_r:
        L = pm.pml_r * d
        x0 = (nr - pm.pml_r) * d
        sig = 4 * lnr / (2 * k0 * L)

        def s(x):
            return 1 + 1j * sig * np.clip((x - x0) / L, 0, None) ** 3

        def rt(x):
            return x + 1j * sig * L * np.clip((x - x0) / L, 0, None) ** 4 / 4

        s_rn, s_rh, rt_n, rt_h = s(r_n), s(r_h), rt(r_n), rt(r_h)
    else:
        s_rn = np.ones(nr, complex)
        s_rh = np.ones(nr, complex)
        rt_n, rt_h = r_n.astype(complex), r_h.astype(complex)
    z_n = np.arange(nz) * d
    z_h = (np.arange(nz) + 0.5) * d

    def sz(z):
        out = np.ones_like(z, dtype=complex)
        if pm.pml_zlo:
            L = pm.pml_zlo * d
            dd = np.clip((L - z) / L, 0, None)
            out = out + 1j * (4 * lnr / (2 * k0 * L)) * dd ** 3
        if pm.pml_zhi:
            L = pm.pml_zhi * d
            dd = np.clip((z - (nz * d - L)) / L, 0, None)
            out = out + 1j * (4 * lnr / (2 * k0 * L)) * dd ** 3
        return out

    return _Stretch(s_rn, s_rh, rt_n, rt_h, sz(z_n), sz(z_h))


def curl_operators(pm: PermittivityMap, k0: float, m: int, R: float = 1e-6):
    """Sparse curl matrices (CE: E -> H, CH: H -> curl H) and stretch data.

    Vectors stack the (r, phi, z) components, each flattened as i*nz + j.
    """
    nr, nz, d = pm.nr, pm.nz, pm.dr
    st = _stretch(pm, k0, R)
    Ir, Iz = sp.identity(nr), sp.identity(nz)
    Dzf = sp.diags(1 / st.s_zh) @ _d_fwd(nz, d)
    Dzb = sp.diags(1 / st.s_zn) @ _d_bwd(nz, d)
    Drf = sp.diags(1 / st.s_rh) @ _d_fwd(nr, d)

    def kz(A):
        return sp.kron(Ir, A)

    def kr(A):
        return sp.kron(A, Iz)

    def dg(v):
        return sp.diags(np.repeat(v, nz))

    im = 1j * m
    inv_rn = np.zeros(nr, complex)
    inv_rn[1:] = 1 / st.rt_n[1:]
    axis_off = np.ones(nr)
    axis_off[0] = 0.0
    # H = CE E
    CE = sp.bmat([
        [None, dg(axis_off) @ -kz(Dzf), dg(im * inv_rn)],
        [kz(Dzf), None, -kr(Drf)],
        [dg(-im / st.rt_h), dg(1 / st.rt_h) @ kr(Drf) @ dg(st.rt_n), None],
    ], format="csr")
    # curl H
    Drb_ax = (sp.diags(1 / st.s_rn) @ _d_bwd(nr, d)).astype(complex).tolil()
    Drb_ax[0, :] = 0
    M = (sp.diags(inv_rn) @ (sp.diags(1 / st.s_rn) @ _d_bwd(nr, d)) @ sp.diags(st.rt_h)).tolil()
    M[0, :] = 0
    if m == 0:
        M[0, 0] = 4 / d  # disk rule for E_z on the axis
    CH = sp.bmat([
        [None, -kz(Dzb), dg(im / st.rt_h)],
        [dg(axis_off) @ kz(Dzb), None, -kr(Drb_ax.tocsr())],
        [dg(-im * inv_rn), kr(M.tocsr()), None],
    ], format="csr")
    return CE, CH, st


def _weights(pm: PermittivityMap, st: _Stretch, m: int) -> np.ndarray:
    """Row weights making the scaled operator complex symmetric."""
    wr = np.outer(st.rt_h * st.s_rh, st.s_zn).ravel()
    wn = st.rt_n * st.s_rn
    wphi = np.outer(wn, st.s_zn).ravel()
    wz_r = wn.copy()
    if m == 0:
        wz_r[0] = pm.dr / 8
    wz = np.outer(wz_r, st.s_zh).ravel()
    return np.concatenate([wr, wphi, wz])


def _keep_mask(pm: PermittivityMap, m: int) -> np.ndarray:
    nr, nz = pm.nr, pm.nz
    keep = np.ones((3, nr, nz), bool)
    if m != 0:
        keep[1, 0, :] = False  # E_phi on the axis
        keep[2, 0, :] = False  # E_z on the axis
    else:
        keep[0, :, :] = True
        keep[1, 0, :] = False
    if pm.pec_index is not None:
        p = pm.pec_index
        keep[0, :, : p + 1] = False
        keep[1, :, : p + 1] = False
        keep[2, :, :p] = False
    return keep.ravel()


def assemble(pm: PermittivityMap, m: int = 1, R: float = 1e-6):
    """Scaled symmetric system matrix restricted to active unknowns.

    Returns (S, keep, CE, weights, Tc) where the physical field is
    ``E[keep] = Tc[keep] * x`` for ``S x = weights[keep] * conj(Tc[keep]) * (i k0 J)``.
    """
    k0 = 2 * math.pi / pm.wavelength
    CE, CH, st = curl_operators(pm, k0, m, R)
    eps = np.concatenate([pm.eps_r.ravel(), pm.eps_phi.ravel(), pm.eps_z.ravel()])
    A = (CH @ CE - k0 ** 2 * sp.diags(eps)).tocsr()
    n = pm.nr * pm.nz
    Tc = np.concatenate([np.ones(n), 1j * np.ones(n), np.ones(n)])
    W = _weights(pm, st, m)
    keep = _keep_mask(pm, m)
    S = (sp.diags(W * np.conj(Tc)) @ A @ sp.diags(Tc)).tocsr()
    S = S[keep][:, keep]
    return S, keep, CE, W, Tc


# ---------------------------------------------------------------------------
# solve


def _check_source(pm: PermittivityMap, src: DipoleSource, opts: SolverOptions) -> None:
    if src.orientation != "x":
        raise SourceError("only in-plane (x) dipoles are supported")
    if abs(src.wavelength - pm.wavelength) > 1e-9 * pm.wavelength:
        raise SourceError("source and map wavelengths differ")
    if abs(src.z - pm.dipole_z) > 1e-6 * pm.dz:
        raise SourceError(f"source at z = {src.z} nm is not the map's dipole node "
                          f"(z = {pm.dipole_z} nm)")
    n_all = np.sqrt(np.concatenate([pm.eps_phi.ravel(), pm.eps_r.ravel()]))
    n_max = float(np.max(n_all.real[np.real(n_all ** 2) > 0]))
    cells = pm.wavelength / (n_max * pm.dr)
    if cells < opts.min_cells_per_wavelength - 1e-9:
        raise SourceError(f"grid resolves lambda/n_max with {cells:.1f} cells, below the "
                          f"required {opts.min_cells_per_wavelength}")
    lam_host = pm.wavelength / math.sqrt(pm.host_eps.real)
    j = pm.dipole_index
    if pm.pml_zlo and (j - pm.pml_zlo) * pm.dz < lam_host - 1e-9:
        raise SourceError("dipole closer than one wavelength to the lower absorbing layer")
    if pm.pml_zhi and (pm.nz - pm.pml_zhi - j) * pm.dz < lam_host - 1e-9:
        raise SourceError("dipole closer than one wavelength to the upper absorbing layer")
    if pm.pml_r and (pm.nr - pm.pml_r) * pm.dr < lam_host - 1e-9:
        raise SourceError("dipole closer than one wavelength to the radial absorbing layer")
    if pm.pec_index is not None and j <= pm.pec_index:
        raise SourceError("dipole inside the perfect mirror")


def _fields_from_vector(pm: PermittivityMap, e: np.ndarray, CE, k0: float) -> dict:
    n = pm.nr * pm.nz
    h = CE @ e / (1j * k0)
    shp = (pm.nr, pm.nz)
    return {"Er": e[:n].reshape(shp), "Ephi": e[n:2 * n].reshape(shp),
            "Ez": e[2 * n:].reshape(shp), "Hr": h[:n].reshape(shp),
            "Hphi": h[n:2 * n].reshape(shp), "Hz": h[2 * n:].reshape(shp)}


def plane_flux(pm: PermittivityMap, f: dict, j: int, i_max: int | None = None) -> float:
    """Upward power of the x dipole through the plane between E-node row ``j``
    and the H half-row j + 1/2, for r < i_max * dr."""
    i_max = pm.nr - pm.pml_r if i_max is None else i_max
    d = pm.dr
    r_h = (np.arange(i_max) + 0.5) * d
    r_n = np.arange(i_max) * d
    s = np.sum(f["Er"][:i_max, j] * np.conj(f["Hphi"][:i_max, j]) * r_h) \
        - np.sum(f["Ephi"][:i_max, j] * np.conj(f["Hr"][:i_max, j]) * r_n)
    return float(2 * math.pi * (s * d).real)


def box_flux(sol: "FieldSolution", i_side: int, j_lo: int, j_hi: int) -> float:
    """Net outward power of the x dipole through a closed cylinder.

    The cylinder holds the E_phi nodes i <= i_side, j_lo <= j <= j_hi (and
    the E_r, E_z unknowns between them). The flux is the boundary remainder
    of the discrete Poynting theorem: each H unknown whose curl stencil is
    cut by the surface is paired with the curl of the enclosed E field, which
    makes the result exact for the discretized equations.
    """
    pm, f = sol.pmap, sol.fields
    if not (0 < i_side < pm.nr - pm.pml_r and pm.pml_zlo < j_lo < j_hi < pm.nz - pm.pml_zhi):
        raise ValueError("box must lie inside the physical region")
    k0 = 2 * math.pi / pm.wavelength
    CE, _, _ = curl_operators(pm, k0, sol.m)
    inside = np.zeros((3, pm.nr, pm.nz), bool)
    inside[0, :i_side, j_lo:j_hi + 1] = True
    inside[1, :i_side + 1, j_lo:j_hi + 1] = True
    inside[2, :i_side + 1, j_lo:j_hi] = True
    e = np.concatenate([f["Er"].ravel(), f["Ephi"].ravel(), f["Ez"].ravel()])
    h = np.concatenate([f["Hr"].ravel(), f["Hphi"].ravel(), f["Hz"].ravel()])
    ce_in = CE @ np.where(inside.ravel(), e, 0)
    ce = 1j * k0 * h
    cut = (np.abs(ce_in - ce) > 1e-12 * np.abs(ce).max()) & (ce_in != 0)
    d = pm.dr
    r_n, r_h = np.arange(pm.nr) * d, (np.arange(pm.nr) + 0.5) * d
    w = 2 * math.pi * d * d * np.concatenate([np.repeat(r_n, pm.nz), np.repeat(r_h, pm.nz),
                                               np.repeat(r_h, pm.nz)])
    return float(-np.sum(w[cut] * h[cut] * np.conj(ce_in[cut])).real)


def _monitor(pm: PermittivityMap, f: dict) -> MonitorRecord:
    j = pm.monitor_index
    i_max = pm.nr - pm.pml_r
    d = pm.dr
    n_med = float(np.sqrt(pm.eps_phi[min(i_max - 1, 1), j]).real)
    return MonitorRecord(
        z=pm.monitor_z, r_half=(np.arange(i_max) + 0.5) * d, r_node=np.arange(i_max) * d,
        Er=f["Er"][:i_max, j].copy(), Ephi=f["Ephi"][:i_max, j].copy(),
        Hr=0.5 * (f["Hr"][:i_max, j] + f["Hr"][:i_max, j - 1]),
        Hphi=0.5 * (f["Hphi"][:i_max, j] + f["Hphi"][:i_max, j - 1]), n_medium=n_med)


def solve_harmonic(pm: PermittivityMap, m: int, moment: complex = 1.0,
                   opts: SolverOptions | None = None, current: np.ndarray | None = None):
    """Solve one harmonic; returns (fields, residual, info).

    By default the source is the on-axis x dipole of strength ``moment``.
    ``current`` replaces it by an arbitrary current density (A/nm^2, stacked
    r, phi, z components on the E positions, flattened like the fields).
    """
    opts = opts or SolverOptions()
    k0 = 2 * math.pi / pm.wavelength
    t0 = time.perf_counter()
    S, keep, CE, W, Tc = assemble(pm, m, opts.pml_reflection)
    n = pm.nr * pm.nz
    vol = math.pi * pm.dr ** 2 * pm.dz
    if current is None:
        if m == 0:
            raise SourceError("the x dipole has no m = 0 component")
        rhs = np.zeros(3 * n, complex)
        rhs[pm.dipole_index] = 1j * k0 * moment / vol  # J_r at (1/2, j)
    else:
        current = np.asarray(current, complex).ravel()
        if current.shape != (3 * n,):
            raise SourceError("current must hold three components per grid node")
        if np.any(current[~keep] != 0):
            raise SourceError("current placed on a removed unknown (axis or mirror)")
        rhs = 1j * k0 * current
    b = (W * np.conj(Tc) * rhs)[keep]
    t1 = time.perf_counter()
    try:
        lu = factorize(S, opts.backend, opts.core_mb)
    except (LinearSolverError, MemoryError) as exc:
        raise SolverError(f"factorization failed: {exc}") from exc
    t2 = time.perf_counter()
    try:
        x = lu.solve(b)
    except LinearSolverError as exc:
        raise SolverError(str(exc)) from exc
    finally:
        backend = type(lu).__name__
        fnnz = getattr(lu, "factor_nnz", 0)
        lu.free()
    t3 = time.perf_counter()
    res = float(np.linalg.norm(S @ x - b) / np.linalg.norm(b))
    if not np.all(np.isfinite(x)):
        raise SolverError("non-finite field values")
    e = np.zeros(3 * n, complex)
    e[keep] = Tc[keep] * x
    f = _fields_from_vector(pm, e, CE, k0)
    info = {"assemble": t1 - t0, "factor": t2 - t1, "solve": t3 - t2, "unknowns": int(keep.sum()),
            "backend": backend, "factor_nnz": fnnz, "source_volume": vol}
    return f, res, info


def solve(pm: PermittivityMap, src: DipoleSource | None = None,
          opts: SolverOptions | None = None) -> FieldSolution:
    """Field of an x dipole at the map's dipole node.

    Raises
    ------
    SourceError
        Bad placement or insufficient resolution.
    SolverError
        Linear-solver failure or residual above ``opts.residual_tol``.
    """
    opts = opts or SolverOptions()
    src = src or DipoleSource(pm.dipole_z, pm.wavelength)
    _check_source(pm, src, opts)
    f, res, info = solve_harmonic(pm, 1, src.moment, opts)
    if res > opts.residual_tol:
        raise SolverError(f"relative residual {res:.2e} exceeds tolerance {opts.residual_tol:.1e}")
    sym_err = None
    if opts.both_harmonics:
        g, res2, _ = solve_harmonic(pm, -1, src.moment, opts)
        mirrored = mirror_harmonic(f)
        scale = max(np.abs(f["Er"]).max(), 1e-300)
        sym_err = max(float(np.abs(g[c] - mirrored[c]).max() / scale) for c in COMPONENTS[:3])
        if sym_err > opts.symmetry_tol:
            log.warning("m = +1/-1 mirror check failed (%.2e); using both solutions", sym_err)
    j = pm.dipole_index
    # -1/2 Re(E . J*) V for each of the two harmonics
    p_total = float(-(f["Er"][0, j] * np.conj(src.moment)).real)
    p_mon = plane_flux(pm, f, pm.monitor_index)
    mon = _monitor(pm, f)
    for a in f.values():
        a.setflags(write=False)
    timings = {k: info[k] for k in ("assemble", "factor", "solve")}
    timings["unknowns"] = info["unknowns"]
    return FieldSolution(pmap=pm, source=src, fields=f, p_total=p_total, p_monitor=p_mon,
                         monitor=mon, residual=res, timings=timings, backend=info["backend"],
                         symmetry_error=sym_err)


def purcell(sol: FieldSolution, bulk_power: float) -> float:
    """Purcell factor P_total / P_bulk."""
    if not bulk_power > 0:
        raise ValueError(f"bulk power must be positive, got {bulk_power}")
    return sol.p_total / bulk_power


def free_space_power(wavelength: float, n: float = 1.0, moment: complex = 1.0) -> float:
    """Analytic power of a point dipole in an unbounded medium of index n."""
    k0 = 2 * math.pi / wavelength
    return n * k0 ** 2 * abs(moment) ** 2 / (12 * math.pi)


def homogeneous_map(eps: complex, wavelength: float, dr: float, margin: float | None = None,
                    pml_cells: int | None = None) -> PermittivityMap:
    """Map of an unbounded medium with the given cell size, dipole centred."""
    n = math.sqrt(complex(eps).real)
    margin = margin if margin is not None else 1.25 * wavelength / n
    pml_cells = pml_cells or max(8, int(round(wavelength / n / dr)))
    s = geometry.homogeneous_structure("medium", 0.0)
    res = wavelength / (n * dr)
    return geometry.build_map(s, None, wavelength, res, eps_override={"medium": eps},
                              air_height=margin, substrate_depth=margin, lateral_margin=margin,
                              pml_thickness=pml_cells * dr, monitor_offset=margin / 2,
                              smoothing=False)


@lru_cache(maxsize=64)
def _bulk_power_cached(eps: complex, wavelength: float, dr: float, backend: str) -> float:
    pm = homogeneous_map(eps, wavelength, dr)
    sol = solve(pm, opts=SolverOptions(backend=backend))
    return sol.p_total


def bulk_power(pm: PermittivityMap, opts: SolverOptions | None = None) -> float:
    """Numerical dipole power in the homogeneous host medium on the same grid."""
    opts = opts or SolverOptions()
    return _bulk_power_cached(complex(pm.host_eps), float(pm.wavelength), float(pm.dr),
                              opts.backend)


@dataclass(frozen=True)
class Resonance:
    """Cavity resonance located by rational fitting of the source response.

    ``half_width`` is |Im| of the fitted pole in nm, so the Lorentzian FWHM
    of the Purcell peak is twice that.
    """

    wavelength: float
    half_width: float
    purcell: float
    solution: FieldSolution = field(repr=False)
    bulk_power: float = 0.0
    samples: tuple = ()
    converged: bool = True

    @property
    def fwhm(self) -> float:
        return 2 * self.half_width


def fit_pole(wl: np.ndarray, g: np.ndarray, center: float | None = None):
    """Least-squares fit g = (p0 + p1 x + p2 x^2) / (x - q), x = wl - center.

    Returns the complex pole position in wavelength units.
    """
    wl = np.asarray(wl, float)
    g = np.asarray(g, complex)
    if wl.size < 4:
        raise ValueError("pole fit needs at least four samples")
    center = float(np.mean(wl)) if center is None else center
    scale = max(float(np.ptp(wl)), 1e-9)
    x = (wl - center) / scale
    # g x = p0 + p1 x + p2 x^2 + q g
    A = np.column_stack([np.ones_like(x), x, x * x, g]).astype(complex)
    w = 1 / np.maximum(np.abs(g), 1e-300)
    sol, *_ = np.linalg.lstsq(A * w[:, None], g * x * w, rcond=None)
    return center + sol[3] * scale


def find_resonance(make_map, guess: float, span: float, opts: SolverOptions | None = None,
                   max_solves: int = 14, tol: float = 0.05, window: float = 3.0) -> Resonance:
    """Locate the Purcell resonance nearest ``guess`` (nm).

    ``make_map(wavelength)`` returns the permittivity map at that wavelength
    on a fixed grid. The complex source field is sampled at five points over
    ``guess +- span`` and fitted with a single pole; new samples are placed at
    the pole and one half-width either side until the estimate moves by less
    than ``tol`` half-widths. The search is confined to ``guess +- window*span``.
    """
    opts = opts or SolverOptions()
    cache: dict[float, tuple] = {}

    def evaluate(wl: float):
        wl = round(float(wl), 9)
        if wl not in cache:
            pm = make_map(wl)
            sol = solve(pm, opts=opts)
            pb = bulk_power(pm, opts)
            cache[wl] = (sol, pb)
        return cache[wl]

    lo, hi = guess - window * span, guess + window * span
    for wl in guess + span * np.array([-1.0, -0.5, 0.0, 0.5, 1.0]):
        evaluate(wl)
    est, hw, converged = guess, span, False
    while True:
        wls = np.array(sorted(cache))
        # fit with the samples nearest the current estimate
        near = wls[np.argsort(np.abs(wls - est))[:6]]
        g = [cache[round(float(w), 9)][0].fields["Er"][0, cache[round(float(w), 9)][0].pmap.dipole_index]
             for w in near]
        q = fit_pole(near, g)
        new, hw = float(np.clip(q.real, lo, hi)), max(abs(q.imag), 1e-6)
        moved = abs(new - est)
        est = new
        have = min(abs(w - est) for w in cache)
        if moved < tol * hw and have < tol * hw:
            converged = True
            break
        if len(cache) >= max_solves:
            break
        for wl in (est, est - hw, est + hw):
            if len(cache) < max_solves and min(abs(w - wl) for w in cache) > 0.25 * tol * hw:
                evaluate(wl)
    sol, pb = evaluate(est)
    samples = tuple((w, cache[w][0].p_total / cache[w][1]) for w in sorted(cache))
    if not converged:
        log.warning("resonance search stopped after %d solves (estimate %.4f nm)", len(cache), est)
    return Resonance(wavelength=est, half_width=hw, purcell=sol.p_total / pb, solution=sol,
                     bulk_power=pb, samples=samples, converged=converged)


def fwhm(x, y) -> tuple[float, str]:
    """Full width at half maximum of sampled y(x) by linear interpolation.

    Returns (width, status) with status "ok", "broadband" (no half-maximum
    crossing on at least one side of the peak) or "not-measurable" (fewer
    than three samples).
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if x.size < 3:
        return float("nan"), "not-measurable"
    order = np.argsort(x)
    x, y = x[order], y[order]
    k = int(np.argmax(y))
    half = 0.5 * y[k]
    left = np.nonzero(y[:k] < half)[0]
    right = np.nonzero(y[k:] < half)[0]
    if left.size == 0 or right.size == 0:
        return float("nan"), "broadband"
    i = int(left[-1])
    xl = x[i] + (half - y[i]) / (y[i + 1] - y[i]) * (x[i + 1] - x[i])
    j = k + int(right[0])
    xr = x[j - 1] + (y[j - 1] - half) / (y[j - 1] - y[j]) * (x[j] - x[j - 1])
    return float(xr - xl), "ok"


def intensity(sol: FieldSolution) -> np.ndarray:
    """Azimuthally averaged |E|^2 of the x dipole at the grid nodes."""
    f = sol.fields
    er = np.abs(f["Er"]) ** 2
    er_n = er.copy()
    er_n[1:] = 0.5 * (er[1:] + er[:-1])
    ez = np.abs(f["Ez"]) ** 2
    ez_n = ez.copy()
    ez_n[:, 1:] = 0.5 * (ez[:, 1:] + ez[:, :-1])
    return 2 * (er_n + np.abs(f["Ephi"]) ** 2 + ez_n)


def dump_field_csv(sol: FieldSolution, path, stride: int = 1) -> None:
    """Write r, z, |E|^2 rows over the physical region."""
    pm = sol.pmap
    I = intensity(sol)
    i1 = pm.nr - pm.pml_r
    j0, j1 = pm.pml_zlo, pm.nz - pm.pml_zhi
    r = pm.r_nodes[:i1:stride]
    z = pm.z_nodes[j0:j1:stride]
    vals = I[:i1:stride, j0:j1:stride]
    R, Z = np.meshgrid(r, z, indexing="ij")
    np.savetxt(path, np.column_stack([R.ravel(), Z.ravel(), vals.ravel()]), delimiter=",",
               header="r_nm,z_nm,E2", comments="", fmt="%.6g")
