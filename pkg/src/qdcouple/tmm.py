"""Planar multilayer optics: reflectivity and dipole emission rates.

Layers are listed from the ambient (top) towards the substrate (bottom).
Lengths are in nm. A substrate index of ``PEC`` (infinity) models a
perfect electric mirror. Amplitude conventions follow the common
E-field form, in which a perfect conductor has r_s = -1 and r_p = +1.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

PEC = math.inf


class IntegrationWarning(UserWarning):
    """The k-parallel quadrature did not reach the requested tolerance."""


@dataclass(frozen=True)
class LayerStack:
    """Planar stack between a semi-infinite ambient and substrate.

    Parameters
    ----------
    indices, thicknesses : sequences
        Complex refractive index and thickness (nm) per layer, listed from
        the ambient side.
    n_ambient, n_substrate : complex
        Indices of the bounding half spaces. ``n_substrate = PEC`` gives a
        perfect electric mirror.
    wavelength : float
        Vacuum wavelength in nm.
    angle : float
        Incidence angle in the ambient (rad).
    polarization : {"s", "p"}
    """

    indices: tuple = ()
    thicknesses: tuple = ()
    n_ambient: complex = 1.0
    n_substrate: complex = 1.0
    wavelength: float = 1000.0
    angle: float = 0.0
    polarization: str = "s"

    def __post_init__(self):
        object.__setattr__(self, "indices", tuple(complex(n) for n in self.indices))
        object.__setattr__(self, "thicknesses", tuple(float(d) for d in self.thicknesses))
        if len(self.indices) != len(self.thicknesses):
            raise ValueError("indices and thicknesses differ in length")
        if any(d < 0 or not math.isfinite(d) for d in self.thicknesses):
            raise ValueError("layer thicknesses must be finite and >= 0")
        if self.polarization not in ("s", "p"):
            raise ValueError(f"polarization must be 's' or 'p', got {self.polarization!r}")
        if not self.wavelength > 0:
            raise ValueError("wavelength must be positive")

    def with_(self, **kw) -> "LayerStack":
        d = dict(indices=self.indices, thicknesses=self.thicknesses, n_ambient=self.n_ambient,
                 n_substrate=self.n_substrate, wavelength=self.wavelength, angle=self.angle,
                 polarization=self.polarization)
        d.update(kw)
        return LayerStack(**d)


def _kz(n, kpar):
    """Normal wavevector component with Im >= 0 (decaying/outgoing)."""
    kz = np.sqrt(np.asarray(n, dtype=complex) ** 2 - kpar ** 2)
    flip = (kz.imag < 0) | ((kz.imag == 0) & (kz.real < 0))
    return np.where(flip, -kz, kz)


def _fresnel(n1, n2, kz1, kz2, pol):
    if pol == "s":
        return (kz1 - kz2) / (kz1 + kz2)
    return (n2 ** 2 * kz1 - n1 ** 2 * kz2) / (n2 ** 2 * kz1 + n1 ** 2 * kz2)


def _reflection(n_inc, indices, thicknesses, n_exit, kpar, pol):
    """Reflection coefficient seen from ``n_inc`` (arrays over ``kpar``).

    ``kpar`` is in units of the vacuum wavenumber; thicknesses in units of
    1/k0. Uses the bottom-up Airy recursion, stable for evanescent layers.
    """
    kpar = np.asarray(kpar, dtype=complex)
    keep = [i for i, d in enumerate(thicknesses) if d > 0]
    ns = [n_inc] + [indices[i] for i in keep]
    ds = [0.0] + [thicknesses[i] for i in keep]
    kzs = [_kz(n, kpar) for n in ns]
    if n_exit == PEC:
        r = np.full(kpar.shape, -1.0 if pol == "s" else 1.0, dtype=complex)
    else:
        r = _fresnel(ns[-1], n_exit, kzs[-1], _kz(n_exit, kpar), pol)
    for j in range(len(ns) - 1, 0, -1):
        ph = np.exp(2j * kzs[j] * ds[j])
        rij = _fresnel(ns[j - 1], ns[j], kzs[j - 1], kzs[j], pol)
        r = (rij + r * ph) / (1 + rij * r * ph)
    return r


def amplitudes(stack: LayerStack) -> tuple[complex, complex]:
    """Amplitude reflection and transmission (r, t) from the characteristic matrices."""
    k0 = 2 * math.pi / stack.wavelength
    na = complex(stack.n_ambient)
    kpar = na * math.sin(stack.angle)
    if stack.n_substrate == PEC:
        r = complex(_reflection(na, stack.indices, np.array(stack.thicknesses) * k0,
                                PEC, kpar, stack.polarization))
        return r, 0j
    layers = [(n, d) for n, d in zip(stack.indices, stack.thicknesses) if d > 0]
    ns = [na, *(n for n, _ in layers), complex(stack.n_substrate)]
    kz = [complex(_kz(n, kpar)) for n in ns]
    pol = stack.polarization

    def interface(i):
        n1, n2, k1, k2 = ns[i], ns[i + 1], kz[i], kz[i + 1]
        r = _fresnel(n1, n2, k1, k2, pol)
        if pol == "s":
            t = 2 * k1 / (k1 + k2)
        else:
            t = 2 * n1 * n2 * k1 / (n2 ** 2 * k1 + n1 ** 2 * k2)
        return r, t

    r01, t01 = interface(0)
    m = np.array([[1, r01], [r01, 1]], dtype=complex) / t01
    for i, (_, d) in enumerate(layers, start=1):
        delta = kz[i] * d * k0
        ri, ti = interface(i)
        prop = np.array([[np.exp(-1j * delta), 0], [0, np.exp(1j * delta)]])
        m = m @ prop @ (np.array([[1, ri], [ri, 1]], dtype=complex) / ti)
    return complex(m[1, 0] / m[0, 0]), complex(1 / m[0, 0])


def reflectivity(stack: LayerStack) -> tuple[float, float]:
    """Power reflectance and transmittance (R, T) of ``stack``."""
    r, t = amplitudes(stack)
    R = abs(r) ** 2
    if stack.n_substrate == PEC:
        return R, 0.0
    na, ns = complex(stack.n_ambient), complex(stack.n_substrate)
    kpar = na * math.sin(stack.angle)
    kza, kzs = complex(_kz(na, kpar)), complex(_kz(ns, kpar))
    if stack.polarization == "s":
        T = abs(t) ** 2 * kzs.real / kza.real
    else:
        T = abs(t) ** 2 * (np.conj(ns) * kzs / ns).real / (np.conj(na) * kza / na).real
    return float(R), float(T)


def quarter_wave_peak(n_ambient: float, n_substrate: float, n_first: float,
                      n_second: float, pairs: int) -> float:
    """Closed-form peak reflectance of ``pairs`` quarter-wave (first, second) pairs.

    ``n_first`` is the layer adjacent to the ambient.
    """
    y = n_substrate * (n_first / n_second) ** (2 * pairs)
    return ((n_ambient - y) / (n_ambient + y)) ** 2


def quarter_wave_stack(n_first: complex, n_second: complex, pairs: int,
                       wavelength: float) -> tuple[list[complex], list[float]]:
    """Layer lists for ``pairs`` quarter-wave pairs at ``wavelength``."""
    idx, th = [], []
    for _ in range(pairs):
        for n in (n_first, n_second):
            idx.append(complex(n))
            th.append(wavelength / (4 * complex(n).real))
    return idx, th


def stopband(stack: LayerStack, wavelengths) -> np.ndarray:
    """Reflectance of a fixed stack across ``wavelengths`` (indices held fixed)."""
    return np.array([reflectivity(stack.with_(wavelength=float(w)))[0] for w in wavelengths])


# ---------------------------------------------------------------------------
# dipole emission


def dipole_rate_mirror(d: float, wavelength: float, n: float = 1.0,
                       orientation: str = "horizontal") -> float:
    """Emission rate of a dipole at height ``d`` above a perfect electric mirror.

    Normalized to the rate in the unbounded medium of index ``n``; closed
    form of the image-dipole interaction with x = 2 n k0 d.
    """
    x = 2 * n * (2 * math.pi / wavelength) * d
    if orientation == "horizontal":
        if x < 0.05:
            return x * x / 5 - 3 * x ** 4 / 280
        h = math.sin(x) / x + math.cos(x) / x ** 2 - math.sin(x) / x ** 3
        return 1 - 1.5 * h
    if orientation == "vertical":
        if x < 0.05:
            return 2 - x * x / 5
        return 1 + 3 * (math.sin(x) / x ** 3 - math.cos(x) / x ** 2)
    raise ValueError(f"unknown orientation {orientation!r}")


@dataclass
class RateResult:
    rate: float
    abserr: float
    points: list = field(default_factory=list)


def _locate_dipole(stack: LayerStack, z: float):
    """Split the stack at the dipole height ``z`` (0 at the ambient interface,
    positive into the ambient). Returns (layer index or -1 for ambient,
    distance to the upper interface, distance to the lower interface)."""
    if z >= 0:
        return -1, math.inf, z
    depth = -z
    top = 0.0
    for i, d in enumerate(stack.thicknesses):
        if depth <= top + d and d > 0:
            return i, depth - top, top + d - depth
        top += d
    return len(stack.thicknesses), depth - top, math.inf


def dipole_rate_layered(stack: LayerStack, z: float, orientation: str = "horizontal",
                        rtol: float = 1e-8, return_error: bool = False):
    """Normalized emission rate of a point dipole inside a planar stack.

    Parameters
    ----------
    stack : LayerStack
        Only ``indices``, ``thicknesses``, the bounding indices and
        ``wavelength`` are used.
    z : float
        Dipole height in nm with 0 at the ambient/first-layer interface,
        positive into the ambient and negative into the stack.
    orientation : {"horizontal", "vertical"}

    Returns
    -------
    float
        Rate divided by the rate in the unbounded dipole medium. With
        ``return_error`` a ``RateResult`` carrying the quadrature error.

    Notes
    -----
    The in-plane wavevector integral over u = k_par/k1 runs along a
    contour below the real axis up to u = X, beyond every guided or
    surface-wave pole, which keeps narrow resonances and branch points off
    the path. The remaining evanescent tail uses s = sqrt(u^2 - 1) and is
    truncated where the integrand has decayed by 1e-10.
    """
    if orientation not in ("horizontal", "vertical"):
        raise ValueError(f"unknown orientation {orientation!r}")
    k0 = 2 * math.pi / stack.wavelength
    j, za, zb = _locate_dipole(stack, z)
    ns = [complex(stack.n_ambient), *stack.indices, stack.n_substrate]
    n1 = ns[j + 1]
    if n1 == PEC:
        raise ValueError("dipole inside the perfect mirror")
    if abs(n1.imag) > 0:
        raise ValueError("dipole must sit in a lossless layer")
    n1 = n1.real
    k1 = n1 * k0
    th = np.array(stack.thicknesses) * k0
    # stacks seen from the dipole layer
    if j >= 0:
        up_idx = list(stack.indices[:j])[::-1]
        up_th = list(th[:j])[::-1]
        up = (up_idx, up_th, complex(stack.n_ambient))
    else:
        up = None
    if j < len(stack.indices):
        dn = (list(stack.indices[j + 1:]), list(th[j + 1:]), stack.n_substrate)
    else:
        dn = None
    za_k, zb_k = za * k0, zb * k0
    dlay = th[j] if 0 <= j < len(th) else math.inf

    def refl(side, kpar, pol):
        if side is None:
            return np.zeros_like(kpar, dtype=complex)
        return _reflection(n1, side[0], side[1], side[2], kpar, pol)

    def bracket(u, l):
        kpar = u * n1
        e_a = np.exp(2j * n1 * l * za_k) if np.isfinite(za_k) else 0.0
        e_b = np.exp(2j * n1 * l * zb_k) if np.isfinite(zb_k) else 0.0
        e_d = np.exp(2j * n1 * l * dlay) if np.isfinite(dlay) else 0.0
        rpa, rpb = refl(up, kpar, "p"), refl(dn, kpar, "p")
        fp_den = 1 - rpa * rpb * e_d
        if orientation == "vertical":
            return 1.5 * u * u * (1 + rpa * e_a) * (1 + rpb * e_b) / fp_den
        rsa, rsb = refl(up, kpar, "s"), refl(dn, kpar, "s")
        fs = (1 + rsa * e_a) * (1 + rsb * e_b) / (1 - rsa * rsb * e_d)
        fp = (1 - rpa * e_a) * (1 - rpb * e_b) / fp_den
        return 0.75 * (fs + l * l * fp)

    def f_u(u):
        u = np.asarray(u, complex)
        l = np.sqrt(1 - u * u)
        l = np.where(l.imag < 0, -l, l)
        return u / l * bracket(u, l)

    # guided and surface-wave poles sit on (or just above) the real u axis;
    # the contour dips into the lower half plane, where the integrand is
    # analytic on the decaying sheet, and rejoins the axis at u = X
    n_re = [abs(complex(n).real) for n in ns if n != PEC]
    X = 1.5 * max(1.0, max(n_re) / n1) + 0.25
    depth = 0.2

    def f_path(t):
        u = t - 1j * depth * np.sin(np.pi * t / X)
        du = 1 - 1j * depth * np.pi / X * np.cos(np.pi * t / X)
        return (f_u(u) * du).real

    # evanescent tail: l = i s, (u/l) du = -i ds
    def f_evan(s):
        u = np.sqrt(1 + s * s)
        return (-1j * bracket(np.asarray(u, complex), np.asarray(1j * s, complex))).real

    pts = [min(X / 2, 1.0)]
    val1, err1 = integrate.quad(f_path, 0, X, limit=2000, epsabs=0, epsrel=rtol)
    zmin = min(za_k, zb_k) * n1
    smax = math.log(1e10) / (2 * zmin) if zmin > 0 else 1e3
    s0 = math.sqrt(X * X - 1)
    val2, err2 = 0.0, 0.0
    if smax > s0:
        val2, err2 = integrate.quad(f_evan, s0, smax, limit=2000, epsabs=0, epsrel=rtol)
    rate = val1 + val2
    err = err1 + err2
    if err > max(1e-6, 100 * rtol) * max(abs(rate), 1e-30):
        warnings.warn(f"k-parallel quadrature reached only {err:.2e} absolute error",
                      IntegrationWarning, stacklevel=2)
    if return_error:
        return RateResult(rate, err, pts)
    return rate
