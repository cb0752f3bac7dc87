"""LP modes of weakly guiding step-index fibers and mode overlap integrals.

In the weak-guidance limit the transverse field of mode LP_lm is

    psi(r, phi) = J_l(u r / a) / J_l(u)   (r < a)
                = K_l(w r / a) / K_l(w)   (r > a)

times cos(l phi) or sin(l phi), with u^2 + w^2 = V^2 and the eigenvalue
equation u J_{l+1}(u) / J_l(u) = w K_{l+1}(w) / K_l(w). Lengths are in
micrometres, wavelengths in nanometres.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, special

from .materials import LP11_CUTOFF, FiberSpec


class FiberError(ValueError):
    """No guided mode, or an incident field grid that cannot be overlapped."""


@dataclass(frozen=True)
class GuidedMode:
    """One polarization and parity of a guided LP mode.

    ``psi`` is normalized to unit power, integral |psi|^2 dA = 1.
    """

    fiber: FiberSpec
    wavelength: float
    l: int
    m: int
    u: float
    w: float
    n_eff: float
    polarization: str = "x"  # x | y
    parity: str = "cos"  # cos | sin, irrelevant for l = 0

    @property
    def label(self) -> str:
        return f"LP{self.l}{self.m}"

    @property
    def v(self) -> float:
        return math.hypot(self.u, self.w)

    @property
    def _norm(self) -> float:
        u, w, l, a = self.u, self.w, self.l, self.fiber.core_radius
        core = 0.5 * a * a * (special.jv(l, u) ** 2 - special.jv(l - 1, u) * special.jv(l + 1, u)) \
            / special.jv(l, u) ** 2
        clad = 0.5 * a * a * (special.kv(l - 1, w) * special.kv(l + 1, w) - special.kv(l, w) ** 2) \
            / special.kv(l, w) ** 2
        ang = 2 * math.pi if l == 0 else math.pi
        return 1 / math.sqrt(ang * (core + clad))

    def radial(self, r: np.ndarray) -> np.ndarray:
        """Unit-power radial profile (angular factor excluded)."""
        r = np.asarray(r, float)
        a = self.fiber.core_radius
        out = np.empty_like(r)
        inside = r < a
        out[inside] = special.jv(self.l, self.u * r[inside] / a) / special.jv(self.l, self.u)
        # scaled Bessel functions avoid underflow far in the cladding
        ro = r[~inside]
        out[~inside] = special.kve(self.l, self.w * ro / a) / special.kve(self.l, self.w) \
            * np.exp(-self.w * (ro / a - 1))
        return self._norm * out

    def radial_derivative(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, float)
        a = self.fiber.core_radius
        l, u, w = self.l, self.u, self.w
        out = np.empty_like(r)
        inside = r < a
        out[inside] = u / a * special.jvp(l, u * r[inside] / a) / special.jv(l, u)
        out[~inside] = w / a * special.kvp(l, w * r[~inside] / a) / special.kv(l, w)
        return self._norm * out

    def field(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """psi on the grid of 1D coordinate vectors x and y (shape (ny, nx))."""
        X, Y = np.meshgrid(np.asarray(x, float), np.asarray(y, float))
        psi = self.radial(np.hypot(X, Y))
        if self.l:
            phi = np.arctan2(Y, X)
            psi = psi * (np.cos(self.l * phi) if self.parity == "cos" else np.sin(self.l * phi))
        return psi


def _eigen(l: int, u: float, v: float) -> float:
    """Pole-free form of the LP eigenvalue equation."""
    w = math.sqrt(max(v * v - u * u, 0.0))
    if w == 0:
        ratio = 2 * l if l else 0.0  # limit of w K_{l+1}(w) / K_l(w) as w -> 0
    else:
        ratio = w * special.kve(l + 1, w) / special.kve(l, w)
    return u * special.jv(l + 1, u) - ratio * special.jv(l, u)


def cutoffs(l: int, v_max: float) -> list[float]:
    """Cutoff V-numbers of LP_l1, LP_l2, ... below ``v_max``."""
    if l == 0:
        cuts = [0.0] + list(special.jn_zeros(1, max(1, int(v_max / math.pi) + 2)))
    else:
        cuts = list(special.jn_zeros(l - 1, max(1, int(v_max / math.pi) + 2)))
    return [c for c in cuts if c < v_max]


def expected_mode_count(v: float) -> int:
    """Number of LP_lm (without polarization or parity degeneracy) guided at V."""
    n, l = 0, 0
    while True:
        k = len(cutoffs(l, v))
        if k == 0:
            return n
        n += k
        l += 1


def solve_modes(fiber: FiberSpec, wavelength: float, samples: int = 4000) -> list[GuidedMode]:
    """All guided LP modes, each listed for x and y polarization.

    Modes with l > 0 appear with both cos and sin parity. Roots of the
    eigenvalue equation are bracketed on a fine grid in u and refined with
    Brent's method.
    """
    if not (wavelength > 0 and math.isfinite(wavelength)):
        raise FiberError(f"invalid wavelength {wavelength}")
    v = fiber.v_number(wavelength)
    if not v > 0:
        raise FiberError(f"V-number {v} gives no guided mode; check the fiber indices")
    modes: list[GuidedMode] = []
    l = 0
    while True:
        # u = V (w = 0) closes the last bracket; LP01 sits there at small V
        us = np.linspace(0, v, samples + 1)[1:]
        g = np.array([_eigen(l, u, v) for u in us])
        idx = np.nonzero(np.sign(g[:-1]) * np.sign(g[1:]) < 0)[0]
        roots = [optimize.brentq(lambda u: _eigen(l, u, v), us[i], us[i + 1], xtol=1e-15,
                                 rtol=4 * np.finfo(float).eps) for i in idx]
        roots = [u for u in roots if v * v - u * u > 0]
        if not roots:
            break
        for mi, u in enumerate(roots, start=1):
            w = math.sqrt(v * v - u * u)
            b = (w / v) ** 2
            n_eff = math.sqrt(fiber.n_cladding ** 2 + b * (fiber.n_core ** 2 - fiber.n_cladding ** 2))
            for pol in ("x", "y"):
                for parity in (("cos",) if l == 0 else ("cos", "sin")):
                    modes.append(GuidedMode(fiber, wavelength, l, mi, u, w, n_eff, pol, parity))
        l += 1
    if not modes:
        raise FiberError(f"no guided mode at V = {v:.4g}")
    return modes


def fundamental(fiber: FiberSpec, wavelength: float) -> GuidedMode:
    """x-polarized LP01."""
    return next(m for m in solve_modes(fiber, wavelength) if m.l == 0 and m.m == 1)


def marcuse_radius(fiber: FiberSpec, wavelength: float) -> float:
    """Gaussian mode-field radius from the Marcuse fit, in micrometres."""
    v = fiber.v_number(wavelength)
    return fiber.core_radius * (0.65 + 1.619 * v ** -1.5 + 2.879 * v ** -6)


def overlap(ex: np.ndarray, x: np.ndarray, y: np.ndarray, mode: GuidedMode,
            ey: np.ndarray | None = None, min_capture: float = 0.999) -> float:
    """Power coupling efficiency of a transverse field into a mode.

    Both polarizations of the mode are summed: the x component of the
    incident field couples to the x-polarized mode and the y component to
    the y-polarized one. ``ex`` and ``ey`` have shape (len(y), len(x)) on a
    uniform grid.
    """
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    ex = np.asarray(ex, complex)
    ey = np.zeros_like(ex) if ey is None else np.asarray(ey, complex)
    if ex.shape != (y.size, x.size) or ey.shape != ex.shape:
        raise FiberError("field shape does not match the coordinate vectors")
    dx, dy = x[1] - x[0], y[1] - y[0]
    dA = dx * dy
    psi = mode.field(x, y)
    captured = float(np.sum(psi ** 2) * dA)
    if captured < min_capture:
        need = 3 * marcuse_radius(mode.fiber, mode.wavelength)
        raise FiberError(f"grid captures only {captured:.5f} of the mode power; "
                         f"extend it to at least +-{need:.2f} um around the core")
    p_inc = float(np.sum(np.abs(ex) ** 2 + np.abs(ey) ** 2) * dA)
    if p_inc == 0:
        return 0.0
    p_mode = float(np.sum(psi ** 2) * dA)
    cx = np.sum(ex * psi) * dA
    cy = np.sum(ey * psi) * dA
    return float((abs(cx) ** 2 + abs(cy) ** 2) / (p_inc * p_mode))


def gaussian(x: np.ndarray, y: np.ndarray, waist: float, x0: float = 0.0,
             y0: float = 0.0) -> np.ndarray:
    """Unit-power Gaussian exp(-r^2 / w^2) on a grid."""
    X, Y = np.meshgrid(x, y)
    return math.sqrt(2 / math.pi) / waist * np.exp(-((X - x0) ** 2 + (Y - y0) ** 2) / waist ** 2)


def gaussian_overlap(w1: float, w2: float) -> float:
    """Closed-form power overlap of two co-centred Gaussians."""
    return (2 * w1 * w2 / (w1 * w1 + w2 * w2)) ** 2


def write_profile_csv(mode: GuidedMode, path, r_max: float | None = None, n: int = 400) -> None:
    r_max = 4 * mode.fiber.core_radius if r_max is None else r_max
    r = np.linspace(0, r_max, n)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["r_um", "psi"])
        for ri, p in zip(r, mode.radial(r)):
            wr.writerow([f"{ri:.6f}", f"{p:.10e}"])


__all__ = ["FiberError", "GuidedMode", "solve_modes", "fundamental", "overlap", "cutoffs",
           "expected_mode_count", "marcuse_radius", "gaussian", "gaussian_overlap",
           "write_profile_csv", "LP11_CUTOFF"]
