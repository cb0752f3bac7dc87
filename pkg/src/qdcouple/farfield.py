"""Near-to-far-field transform for the axisymmetric dipole solutions.

Tangential fields on a surface in air are replaced by equivalent currents
J = n x H and M = -n x E. For a harmonic exp(i m phi) the azimuthal part of
the radiation integral is a Bessel function,

    int exp(i n phi') exp(-i x cos(phi - phi')) dphi' = 2 pi (-i)^n J_n(x) exp(i n phi),

so each surface ring contributes through J_{m-1}, J_m and J_{m+1}. With the
mirror relation between m = +1 and m = -1 the x-dipole pattern is

    E_theta = 2 a(theta) cos(phi),   E_phi = 2i b(theta) sin(phi).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import special
from scipy.integrate import cumulative_trapezoid

from .solver import FieldSolution

N_THETA = 721
N_PHI = 72


class FarFieldError(ValueError):
    """Invalid monitor surface or angular grid."""


@dataclass(frozen=True)
class FarField:
    """Angular power density of an x dipole over the upper hemisphere.

    ``U`` has shape (n_theta, n_phi) in power per steradian. ``a`` and ``b``
    are the theta and phi amplitude functions of the m = +1 harmonic, from
    which ``U`` is exact at any phi.
    """

    theta: np.ndarray = field(repr=False)
    phi: np.ndarray = field(repr=False)
    U: np.ndarray = field(repr=False)
    a: np.ndarray = field(repr=False)
    b: np.ndarray = field(repr=False)
    p_total: float
    wavelength: float
    scale: float = 1.0

    def cut(self, phi: float) -> np.ndarray:
        """U(theta) at azimuth ``phi`` (rad)."""
        return self.scale * 4 * (np.abs(self.a) ** 2 * math.cos(phi) ** 2
                                 + np.abs(self.b) ** 2 * math.sin(phi) ** 2)

    @property
    def radial_density(self) -> np.ndarray:
        """phi-integrated power per unit theta, dP/dtheta."""
        return self.scale * 4 * math.pi * (np.abs(self.a) ** 2 + np.abs(self.b) ** 2) \
            * np.sin(self.theta)

    def power_within(self, theta_max: float) -> float:
        cum = cumulative_trapezoid(self.radial_density, self.theta, initial=0.0)
        return float(np.interp(theta_max, self.theta, cum))

    @property
    def hemisphere_power(self) -> float:
        return self.power_within(self.theta[-1])


@dataclass(frozen=True)
class _Samples:
    """Current samples of one component: positions, quadrature weights, values."""

    comp: str  # "r", "phi" or "z"
    rho: np.ndarray
    z: np.ndarray
    w: np.ndarray
    val: np.ndarray


def _plane(sol: FieldSolution, j: int, sign: int, i_max: int | None = None):
    """Equivalent currents on the z-plane through E-node row j.

    sign = +1 for an upward normal, -1 for a downward one. H is averaged
    onto the E row from the neighbouring half rows.
    """
    pm, f = sol.pmap, sol.fields
    i_max = pm.nr - pm.pml_r if i_max is None else i_max
    d = pm.dr
    r_h = (np.arange(i_max) + 0.5) * d
    r_n = np.arange(i_max) * d
    z = pm.z0 + j * d
    Er, Ep = f["Er"][:i_max, j], f["Ephi"][:i_max, j]
    Hr = 0.5 * (f["Hr"][:i_max, j] + f["Hr"][:i_max, j - 1])
    Hp = 0.5 * (f["Hphi"][:i_max, j] + f["Hphi"][:i_max, j - 1])
    zz = np.full(i_max, z)
    wh, wn = r_h * d, r_n * d
    J = [_Samples("r", r_h, zz, wh, -sign * Hp), _Samples("phi", r_n, zz, wn, sign * Hr)]
    M = [_Samples("r", r_n, zz, wn, sign * Ep), _Samples("phi", r_h, zz, wh, -sign * Er)]
    return J, M


def _cylinder(sol: FieldSolution, i: int, j_lo: int, j_hi: int):
    """Equivalent currents on the cylinder r = (i + 1/2) dr, rows j_lo..j_hi."""
    pm, f = sol.pmap, sol.fields
    d = pm.dr
    R = (i + 0.5) * d
    jn = np.arange(j_lo, j_hi + 1)
    jh = np.arange(j_lo, j_hi)
    zn = pm.z0 + jn * d
    zh = pm.z0 + (jh + 0.5) * d
    wn = np.full(jn.size, R * d)
    wn[[0, -1]] *= 0.5
    wh = np.full(jh.size, R * d)
    Ep = 0.5 * (f["Ephi"][i, jn] + f["Ephi"][i + 1, jn])
    Ez = 0.5 * (f["Ez"][i, jh] + f["Ez"][i + 1, jh])
    Hz = f["Hz"][i, jn]
    Hp = f["Hphi"][i, jh]
    rn, rh = np.full(jn.size, R), np.full(jh.size, R)
    J = [_Samples("phi", rn, zn, wn, -Hz), _Samples("z", rh, zh, wh, Hp)]
    M = [_Samples("phi", rh, zh, wh, Ez), _Samples("z", rn, zn, wn, -Ep)]
    return J, M


def _radiation(samples: list, k: float, theta: np.ndarray, m: int):
    """(N_theta, N_phi) at phi = 0 of one harmonic's current samples."""
    st, ct = np.sin(theta)[:, None], np.cos(theta)[:, None]
    Np = np.zeros(theta.size, complex)
    Nm = np.zeros(theta.size, complex)
    Nz = np.zeros(theta.size, complex)
    for s in samples:
        x = k * s.rho[None, :] * st
        ph = np.exp(-1j * k * s.z[None, :] * ct) * s.w[None, :]
        v = s.val[None, :]
        if s.comp in ("r", "phi"):
            c = 1.0 if s.comp == "r" else 1j
            Np += 2 * np.pi * (-1j) ** (m + 1) * np.sum(c * v * special.jv(m + 1, x) * ph, axis=1)
            Nm += 2 * np.pi * (-1j) ** (m - 1) * np.sum(c.conjugate() * v
                                                      * special.jv(m - 1, x) * ph, axis=1)
        else:
            Nz += 2 * np.pi * (-1j) ** m * np.sum(v * special.jv(m, x) * ph, axis=1)
    Nx = 0.5 * (Np + Nm)
    Ny = (Np - Nm) / 2j
    th = theta
    return Nx * np.cos(th) - Nz * np.sin(th), Ny


def _check_air(sol: FieldSolution, rows) -> None:
    pm = sol.pmap
    i_max = pm.nr - pm.pml_r
    for j in rows:
        for eps in (pm.eps_r, pm.eps_phi):
            if np.any(np.abs(eps[:i_max, j] - 1) > 1e-12):
                raise FarFieldError(f"monitor row z = {pm.z0 + j * pm.dz:.1f} nm "
                                    "intersects material; the transform needs homogeneous air")


def transform(sol: FieldSolution, n_theta: int = N_THETA, n_phi: int = N_PHI,
              box: tuple[int, int, int] | None = None) -> FarField:
    """Far field above the structure from the recorded monitor plane.

    Parameters
    ----------
    box : (i_side, j_lo, j_hi), optional
        Use a closed cylinder instead of the monitor plane (all of it must be
        in air). Intended for free-space checks.
    """
    if n_theta < 180:
        raise FarFieldError(f"theta grid of {n_theta} samples is too coarse (need >= 180)")
    pm = sol.pmap
    k = 2 * math.pi / pm.wavelength
    theta = np.linspace(0, math.pi / 2, n_theta)
    if box is None:
        j = pm.monitor_index
        _check_air(sol, (j - 1, j))
        J, M = _plane(sol, j, +1)
    else:
        i, j_lo, j_hi = box
        if not (0 < i < pm.nr - pm.pml_r - 1 and pm.pml_zlo < j_lo < j_hi < pm.nz - pm.pml_zhi):
            raise FarFieldError("closed surface must lie inside the physical region")
        _check_air(sol, range(j_lo - 1, j_hi + 1))
        Jt, Mt = _plane(sol, j_hi, +1, i + 1)
        Jb, Mb = _plane(sol, j_lo, -1, i + 1)
        Js, Ms = _cylinder(sol, i, j_lo, j_hi)
        J, M = Jt + Jb + Js, Mt + Mb + Ms
    Nt, Nf = _radiation(J, k, theta, sol.m)
    Lt, Lf = _radiation(M, k, theta, sol.m)
    a = Nt + Lf
    b = Nf - Lt
    scale = k * k / (32 * math.pi ** 2)
    phi = np.linspace(0, 2 * math.pi, n_phi, endpoint=False)
    U = scale * 4 * (np.abs(a[:, None]) ** 2 * np.cos(phi) ** 2
                     + np.abs(b[:, None]) ** 2 * np.sin(phi) ** 2)
    return FarField(theta=theta, phi=phi, U=U, a=a, b=b, p_total=sol.p_total,
                    wavelength=pm.wavelength, scale=scale)


def extraction_efficiency(ff: FarField, na: float) -> float:
    """Fraction of the dipole power radiated into the cone sin(theta) <= NA."""
    if not 0 < na <= 1:
        raise ValueError(f"NA must lie in (0, 1], got {na}")
    return ff.power_within(math.asin(na)) / ff.p_total


@dataclass(frozen=True)
class HalfAngle:
    """1/e^2 half-angle of a far-field cut, in degrees."""

    value: float
    phi: float
    quality: str = "ok"  # ok | non-monotone | no-crossing


def half_angle(ff: FarField, phi: float) -> HalfAngle:
    """Smallest theta where U(theta, phi) drops to 1/e^2 of U(0, phi).

    Lobes that rise above the on-axis value before the crossing, or come
    back above the threshold after it, carry quality "non-monotone".
    """
    u = ff.cut(phi)
    if not u[0] > 0:
        raise FarFieldError("on-axis intensity is zero; the half-angle is undefined")
    y = u / u[0]
    thr = math.exp(-2)
    below = np.nonzero(y < thr)[0]
    if below.size == 0:
        return HalfAngle(float("nan"), phi, "no-crossing")
    i = int(below[0])
    t0, t1 = ff.theta[i - 1], ff.theta[i]
    th = t0 + (y[i - 1] - thr) / (y[i - 1] - y[i]) * (t1 - t0)
    quality = "ok"
    if np.max(y[:i]) > 1 + 1e-3 or np.any(y[i:] > thr * (1 + 1e-3)):
        quality = "non-monotone"
    return HalfAngle(math.degrees(th), phi, quality)


def half_angles(ff: FarField) -> dict:
    """Half-angles at phi = 0 and 90 degrees and their average."""
    h0, h90 = half_angle(ff, 0.0), half_angle(ff, math.pi / 2)
    quality = "ok" if h0.quality == h90.quality == "ok" else "non-monotone"
    return {"phi0": h0.value, "phi90": h90.value, "average": 0.5 * (h0.value + h90.value),
            "quality": quality}


def write_cuts_csv(ff: FarField, path) -> None:
    """theta (deg) against peak-normalized U at phi = 0 and 90 degrees."""
    c0, c90 = ff.cut(0.0), ff.cut(math.pi / 2)
    peak = max(c0.max(), c90.max(), 1e-300)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["theta_deg", "U_phi0", "U_phi90"])
        for t, a, b in zip(np.degrees(ff.theta), c0 / peak, c90 / peak):
            w.writerow([f"{t:.4f}", f"{a:.8e}", f"{b:.8e}"])


def dipole_pattern(theta: np.ndarray, phi: float, wavelength: float, moment: complex = 1.0,
                   n: float = 1.0) -> np.ndarray:
    """Analytic U of an x dipole in a homogeneous medium."""
    k0 = 2 * math.pi / wavelength
    return n * k0 ** 2 * abs(moment) ** 2 / (32 * math.pi ** 2) * \
        (1 - np.sin(theta) ** 2 * math.cos(phi) ** 2)


def save_npz(ff: FarField, path, **meta) -> None:
    """Store the amplitude functions; ``meta`` values must be scalars."""
    np.savez(path, theta=ff.theta, phi=ff.phi, a=ff.a, b=ff.b, p_total=ff.p_total,
             wavelength=ff.wavelength, scale=ff.scale,
             **{f"meta_{k}": np.asarray(v) for k, v in meta.items()})


def load_npz(path) -> tuple[FarField, dict]:
    d = np.load(path)
    theta, phi, a, b = d["theta"], d["phi"], d["a"], d["b"]
    scale = float(d["scale"])
    U = scale * 4 * (np.abs(a[:, None]) ** 2 * np.cos(phi) ** 2
                     + np.abs(b[:, None]) ** 2 * np.sin(phi) ** 2)
    ff = FarField(theta=theta, phi=phi, U=U, a=a, b=b, p_total=float(d["p_total"]),
                  wavelength=float(d["wavelength"]), scale=scale)
    meta = {k[5:]: d[k].item() for k in d.files if k.startswith("meta_")}
    return ff, meta
