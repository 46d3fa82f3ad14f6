"""Light-field geometry and sub-site dependent transition moments.

Vectors are plain length-3 numpy arrays (complex where the quantity can be
complex).  Moments carry arbitrary units; the magnetic moment is stored
already multiplied by ``n/c`` so that it adds directly to the electric one.
"""

from dataclasses import dataclass

import numpy as np

UNIT_TOL = 1e-12
TRANSVERSE_TOL = 1e-10

SUBSITES = (+1, -1)


def as_vec3(v, dtype=complex) -> np.ndarray:
    arr = np.asarray(v, dtype=dtype)
    if arr.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("vector components must be finite")
    return arr


def _check_unit(v, name, tol=UNIT_TOL):
    norm = np.sqrt(np.sum(np.abs(v) ** 2))
    if abs(norm - 1.0) > tol:
        raise ValueError(f"{name} must be unit-normalized (|{name}| = {norm!r})")


def _check_parity(site):
    if site not in SUBSITES:
        raise ValueError(f"sub-site parity must be +1 or -1, got {site!r}")


@dataclass(frozen=True)
class DipoleSet:
    """Electric (``d``) and scaled magnetic (``m``) transition moments.

    ``m`` is the magnetic matrix element times ``n/c``.  ``n`` is kept for
    bookkeeping only.
    """

    d: np.ndarray
    m: np.ndarray
    n: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "d", as_vec3(self.d))
        object.__setattr__(self, "m", as_vec3(self.m))
        if self.n < 1.0:
            raise ValueError("refractive index must be >= 1")
        if not (np.any(self.d != 0) or np.any(self.m != 0)):
            raise ValueError("at least one of d, m must be nonzero")

    @classmethod
    def from_unscaled(cls, d, m_ba, n, c=1.0):
        """Build from a bare magnetic matrix element, folding in ``n/c``."""
        return cls(d=d, m=(n / c) * as_vec3(m_ba), n=n)


@dataclass(frozen=True)
class LightField:
    epsilon: np.ndarray
    khat: np.ndarray
    E0: float = 1.0
    omega0: float = 0.0  # carrier; never enters the rotating-frame dynamics

    def __post_init__(self):
        eps = as_vec3(self.epsilon)
        khat = as_vec3(self.khat, dtype=float)
        _check_unit(eps, "epsilon", tol=TRANSVERSE_TOL)
        _check_unit(khat, "khat", tol=TRANSVERSE_TOL)
        if abs(np.dot(eps, khat)) > TRANSVERSE_TOL:
            raise ValueError("polarization must be transverse to khat")
        object.__setattr__(self, "epsilon", eps)
        object.__setattr__(self, "khat", khat)


def total_moment(dip: DipoleSet, khat, site: int) -> np.ndarray:
    """Combined moment ``parity*d + m x khat`` seen by light along ``khat``.

    The electric part is odd under inversion, the magnetic part even, so
    the two sub-sites differ whenever both are present.  Reversing ``khat``
    flips only the magnetic contribution.
    """
    _check_parity(site)
    khat = as_vec3(khat, dtype=float)
    _check_unit(khat, "khat")
    return site * dip.d + np.cross(dip.m, khat)


def rabi_frequency(mu, epsilon, E0: float) -> complex:
    """Complex Rabi frequency ``E0 * (mu . epsilon)`` (no conjugation)."""
    mu = as_vec3(mu)
    epsilon = as_vec3(epsilon)
    _check_unit(epsilon, "epsilon", tol=TRANSVERSE_TOL)
    return complex(E0 * np.dot(mu, epsilon))


def site_moments(dip: DipoleSet, khat) -> dict:
    return {site: total_moment(dip, khat, site) for site in SUBSITES}


def _format_component(z):
    z = complex(z)
    if z.imag == 0:
        return f"{z.real:.9g}"
    return f"{z.real:.9g}{z.imag:+.9g}j"


def format_vector(v) -> str:
    """Comma-separated components, 9 significant digits; inverse of :func:`parse_vector`."""
    return ", ".join(_format_component(z) for z in np.asarray(v).ravel())


def parse_vector(text) -> np.ndarray:
    parts = [p.strip().replace(" ", "") for p in str(text).split(",")]
    if len(parts) != 3 or not all(parts):
        raise ValueError(f"expected three comma-separated components, got {text!r}")
    return np.array([complex(p) for p in parts])
