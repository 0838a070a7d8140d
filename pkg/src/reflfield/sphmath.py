"""Spherical harmonics, concentration attenuation, and reflection geometry.

Two independent evaluation routes are kept on purpose and cross-checked in
tests:

* a float64 associated-Legendre recurrence route (`eval_sh`, `sh_basis`),
  used by oracles and verification, and
* a Cartesian polynomial route (`ide_tape`, `directional_encoding_tape`)
  whose z-polynomial coefficients are computed once per degree, used for the
  differentiable encoding inside the model.

Harmonics are complex, orthonormal, with Condon-Shortley phase; components
are emitted per (degree, order) as real part then, for order > 0, imaginary
part. The attenuation family A_l is available as a quadrature-exact oracle,
an extended-precision closed form (tests only), and the smooth exponential
approximation used in training.
"""

from __future__ import annotations

import math
from typing import NamedTuple, Sequence

import numpy as np

from . import autodiff as ad

DEFAULT_DEGREES = (1, 2, 4)

_GL128_NODES, _GL128_WEIGHTS = np.polynomial.legendre.leggauss(128)
# Beyond this many decay lengths the integrand tail is below 1e-26.
_DECAY_SPAN = 60.0


def validate_degrees(degrees: Sequence[int]) -> tuple[int, ...]:
    degrees = tuple(int(l) for l in degrees)
    if not degrees:
        raise ValueError("degree list must be non-empty")
    if any(l < 1 for l in degrees):
        raise ValueError(f"degrees must all be >= 1, got {degrees}")
    if any(b <= a for a, b in zip(degrees, degrees[1:])):
        raise ValueError(f"degrees must be strictly increasing, got {degrees}")
    return degrees


def sh_index_list(degrees: Sequence[int]) -> list[tuple[int, int]]:
    """(degree, order) pairs in emission order."""
    return [(l, m) for l in validate_degrees(degrees) for m in range(l + 1)]


def ide_length(degrees: Sequence[int]) -> int:
    return sum(2 * l + 1 for l in validate_degrees(degrees))


def component_degrees(degrees: Sequence[int]) -> np.ndarray:
    """Degree of each emitted component (imaginary parts repeat their degree)."""
    out = []
    for l, m in sh_index_list(degrees):
        out.append(l)
        if m > 0:
            out.append(l)
    return np.asarray(out)


def unit(v: np.ndarray, eps: float = 1e-20) -> np.ndarray:
    """v / sqrt(|v|^2 + eps) along the last axis."""
    v = np.asarray(v, dtype=np.float64)
    norm = np.sqrt(np.sum(v * v, axis=-1, keepdims=True) + eps)
    return v / norm


def reflect(wo, n):
    """Mirror wo about n: 2 (wo.n) n - wo.

    Works on numpy arrays of shape (..., 3) and on tape tensors alike, and is
    differentiable in both arguments in the tensor case.
    """
    d = (wo * n).sum(axis=-1, keepdims=True)
    return (2.0 * d) * n - wo


def orthonormal_basis(axis: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Two unit vectors completing `axis` to a right-handed frame (t1, t2, axis)."""
    a = unit(axis)
    helper = np.where(
        np.abs(a[..., :1]) <= 0.9,
        np.array([1.0, 0.0, 0.0]),
        np.array([0.0, 1.0, 0.0]),
    )
    t1 = unit(np.cross(a, helper))
    t2 = np.cross(a, t1)
    return t1, t2


# ---- Legendre and spherical harmonics (recurrence route) -----------------


def eval_legendre(ell: int, u) -> np.ndarray:
    """P_ell(u) by the three-term recurrence."""
    if ell < 0:
        raise ValueError(f"degree must be >= 0, got {ell}")
    u = np.asarray(u, dtype=np.float64)
    p_prev = np.ones_like(u)
    if ell == 0:
        return p_prev
    p = u.copy()
    for k in range(1, ell):
        p, p_prev = ((2 * k + 1) * u * p - k * p_prev) / (k + 1), p
    return p


def _double_factorial(n: int) -> int:
    out = 1
    while n > 1:
        out *= n
        n -= 2
    return out


def _assoc_legendre(l: int, m: int, x: np.ndarray) -> np.ndarray:
    """P_l^m(x) with Condon-Shortley phase, by upward recurrence in l."""
    x = np.asarray(x, dtype=np.float64)
    somx2 = np.sqrt(np.maximum(1.0 - x * x, 0.0))
    pmm = ((-1.0) ** m) * _double_factorial(2 * m - 1) * somx2**m
    if l == m:
        return pmm
    pmmp1 = x * (2 * m + 1) * pmm
    if l == m + 1:
        return pmmp1
    for ll in range(m + 2, l + 1):
        pmm, pmmp1 = pmmp1, (x * (2 * ll - 1) * pmmp1 - (ll + m - 1) * pmm) / (ll - m)
    return pmmp1


def _sh_normalization(l: int, m: int) -> float:
    return math.sqrt(
        (2 * l + 1) * math.factorial(l - m) / (4.0 * math.pi * math.factorial(l + m))
    )


def eval_sh(ell: int, m: int, direction) -> tuple[float, float]:
    """Real and imaginary parts of Y_ell^m at a unit direction."""
    if ell < 1 or m < 0 or m > ell:
        raise ValueError(f"invalid spherical harmonic index (l={ell}, m={m})")
    d = np.asarray(direction, dtype=np.float64)
    z = d[..., 2]
    phi = np.arctan2(d[..., 1], d[..., 0])
    base = _sh_normalization(ell, m) * _assoc_legendre(ell, m, z)
    return float(base * np.cos(m * phi)), float(base * np.sin(m * phi))


def sh_basis(dirs: np.ndarray, degrees: Sequence[int] = DEFAULT_DEGREES) -> np.ndarray:
    """All components for unit dirs (..., 3), in emission order: (..., C)."""
    dirs = np.asarray(dirs, dtype=np.float64)
    z = dirs[..., 2]
    phi = np.arctan2(dirs[..., 1], dirs[..., 0])
    cols = []
    for l, m in sh_index_list(degrees):
        base = _sh_normalization(l, m) * _assoc_legendre(l, m, z)
        cols.append(base * np.cos(m * phi))
        if m > 0:
            cols.append(base * np.sin(m * phi))
    return np.stack(cols, axis=-1)


# ---- attenuation family --------------------------------------------------


def _validate_kappa(kappa) -> None:
    if not np.all(np.asarray(kappa) > 0):
        raise ValueError(f"concentration must be > 0, got {kappa}")


def attenuation_exact(ell: int, kappa: float) -> float:
    """Expected P_ell under a concentration-kappa axis distribution.

    Defined by A_l = kappa/(2 sinh kappa) * int_{-1}^{1} P_l(u) e^{kappa u} du
    and evaluated by 128-point Gauss-Legendre quadrature of that integral
    under the exact substitution t = kappa (1 - u), which turns it into the
    ratio of two decaying integrals A_l = int P_l(1 - t/kappa) e^-t dt /
    int e^-t dt over t in [0, min(2 kappa, 60)]. The ratio form keeps A_0
    identically 1 and stays accurate for large kappa, where the integrand of
    the raw form concentrates at u = 1 and overflows.
    """
    if ell < 0:
        raise ValueError(f"degree must be >= 0, got {ell}")
    _validate_kappa(kappa)
    kappa = float(kappa)
    span = min(2.0 * kappa, _DECAY_SPAN)
    t = 0.5 * span * (_GL128_NODES + 1.0)
    w = 0.5 * span * _GL128_WEIGHTS
    decay = w * np.exp(-t)
    u = 1.0 - t / kappa
    ratio = float(
        np.sum(eval_legendre(ell, u) * decay) / np.sum(np.ones_like(u) * decay)
    )
    # The true value lies in (0, 1]; quadrature rounding can land a hair
    # outside when the value underflows toward zero.
    return min(max(ratio, 0.0), 1.0)


def attenuation_closed_form(ell: int, kappa: float, dps: int = 60) -> float:
    """Finite closed form of A_ell, evaluated in extended precision.

    The alternating sum cancels catastrophically in float64 for large kappa,
    so this route exists for verification only; `attenuation_exact` is the
    production oracle.
    """
    import mpmath

    if ell < 0:
        raise ValueError(f"degree must be >= 0, got {ell}")
    _validate_kappa(kappa)
    with mpmath.workdps(dps):
        k = mpmath.mpf(kappa)
        total = mpmath.mpf(0)
        for i in range(ell + 1):
            comb = (
                mpmath.factorial(2 * ell - i)
                / (mpmath.factorial(i) * mpmath.factorial(ell - i))
            )
            b = k**i if i % 2 == 0 else k**i * mpmath.coth(k)
            total += comb * mpmath.mpf(-2) ** (i - ell) * b
        return float(k ** (-ell) * total)


def attenuation_approx(ell: int, kappa) -> np.ndarray:
    """Smooth training-time approximation exp(-l(l+1) / (2 kappa))."""
    if ell < 0:
        raise ValueError(f"degree must be >= 0, got {ell}")
    _validate_kappa(kappa)
    kappa = np.asarray(kappa, dtype=np.float64)
    out = np.exp(-ell * (ell + 1) / (2.0 * kappa))
    return out if out.ndim else float(out)


# ---- encodings (oracle route) -------------------------------------------


def ide(wr, kappa, degrees: Sequence[int] = DEFAULT_DEGREES) -> np.ndarray:
    """Attenuated directional encoding: per component A_l(kappa) * Y_l^m(wr).

    Uses the training-time exponential attenuation. `wr` is (..., 3); `kappa`
    is a positive scalar or an array broadcastable to wr's leading shape.
    """
    _validate_kappa(kappa)
    base = sh_basis(wr, degrees)
    ls = component_degrees(degrees)
    kappa = np.asarray(kappa, dtype=np.float64)[..., None]
    atten = np.exp(-ls * (ls + 1) / (2.0 * kappa))
    return base * atten


def directional_encoding(wr, degrees: Sequence[int] = DEFAULT_DEGREES) -> np.ndarray:
    """Unattenuated spherical-harmonic encoding (all attenuations = 1)."""
    return sh_basis(wr, degrees)


def vmf_expected_sh(
    mean, kappa, degrees: Sequence[int] = DEFAULT_DEGREES
) -> np.ndarray:
    """Closed-form expectation of the harmonic basis under vMF(mean, kappa).

    Componentwise A_l(kappa) * Y_l^m(mean) with the quadrature-exact
    attenuation; the Monte-Carlo estimate `mc_sh_expectation` must agree with
    this within sampling error.
    """
    base = sh_basis(mean, degrees)
    atten = np.array(
        [attenuation_exact(int(l), kappa) for l in component_degrees(degrees)]
    )
    return base * atten


# ---- von Mises-Fisher sampling ------------------------------------------


def sample_vmf(
    rng: np.random.Generator, mean, kappa: float, n: int
) -> np.ndarray:
    """n i.i.d. unit samples from vMF(mean, kappa); kappa = 0 is uniform.

    Inverse-CDF on the cosine about the mean plus a uniform azimuth.
    """
    if kappa < 0:
        raise ValueError(f"concentration must be >= 0, got {kappa}")
    mean = unit(mean)
    if n == 0:
        return np.zeros((0, 3))
    u = rng.random(n)
    if kappa == 0.0:
        w = 2.0 * u - 1.0
    else:
        arg = u + (1.0 - u) * np.exp(-2.0 * kappa)
        w = 1.0 + np.log(np.maximum(arg, 1e-300)) / kappa
        w = np.clip(w, -1.0, 1.0)
    phi = 2.0 * np.pi * rng.random(n)
    s = np.sqrt(np.maximum(1.0 - w * w, 0.0))
    t1, t2 = orthonormal_basis(mean)
    return (
        (s * np.cos(phi))[:, None] * t1
        + (s * np.sin(phi))[:, None] * t2
        + w[:, None] * mean
    )


class MCEstimate(NamedTuple):
    real: float
    imag: float
    real_se: float
    imag_se: float


def mc_sh_expectation(
    rng: np.random.Generator, mean, kappa: float, ell: int, m: int, n: int
) -> MCEstimate:
    """Monte-Carlo estimate of E[Y_ell^m] under vMF(mean, kappa), with
    standard errors of the mean."""
    _validate_kappa(kappa)
    samples = sample_vmf(rng, mean, kappa, n)
    z = samples[:, 2]
    phi = np.arctan2(samples[:, 1], samples[:, 0])
    base = _sh_normalization(ell, m) * _assoc_legendre(ell, m, z)
    re = base * np.cos(m * phi)
    im = base * np.sin(m * phi)
    return MCEstimate(
        float(re.mean()),
        float(im.mean()),
        float(re.std(ddof=1) / math.sqrt(n)),
        float(im.std(ddof=1) / math.sqrt(n)),
    )


def mc_basis_expectation(
    rng: np.random.Generator,
    mean,
    kappa: float,
    n: int,
    degrees: Sequence[int] = DEFAULT_DEGREES,
) -> tuple[np.ndarray, np.ndarray]:
    """Monte-Carlo estimate of the expected harmonic basis under
    vMF(mean, kappa), every component evaluated on one shared sample set.

    Returns (estimates, standard errors), each of shape (C,) in emission
    order. Sharing the samples across components is what makes checking the
    whole encoding at large n affordable; the per-component estimates are
    correlated but individually unbiased, and each standard error is the
    plain sample-mean error for that component.
    """
    _validate_kappa(kappa)
    if n < 2:
        raise ValueError(f"need at least 2 samples, got {n}")
    samples = sample_vmf(rng, mean, kappa, n)
    values = sh_basis(samples, degrees)
    return (
        values.mean(axis=0),
        values.std(axis=0, ddof=1) / math.sqrt(n),
    )


# ---- polynomial route (differentiable encoding) --------------------------


def _generalized_binomial(a: float, k: int) -> float:
    out = 1.0
    for i in range(k):
        out *= (a - i) / (k - i)
    return out


def _assoc_legendre_poly_coeff(l: int, m: int, k: int) -> float:
    """Coefficient of z^k in P_l^m(z) / (1 - z^2)^{m/2}."""
    return (
        (-1.0) ** m
        * 2.0**l
        * math.factorial(l)
        / math.factorial(k)
        / math.factorial(l - k - m)
        * _generalized_binomial((l + k + m - 1) / 2.0, l)
    )


def _sh_poly_coeffs(l: int, m: int) -> list[tuple[int, float]]:
    """Nonzero (power, coefficient) pairs of the z-polynomial of Y_l^m,
    normalization folded in."""
    norm = _sh_normalization(l, m)
    out = []
    for k in range(l - m + 1):
        c = norm * _assoc_legendre_poly_coeff(l, m, k)
        if c != 0.0:
            out.append((k, c))
    return out


def ide_tape(
    dirs: ad.Tensor,
    kappa_inv: ad.Tensor | None,
    degrees: Sequence[int] = DEFAULT_DEGREES,
) -> ad.Tensor:
    """Differentiable encoding of unit dirs (n, 3) on the tape.

    `kappa_inv` is the reciprocal concentration (n, 1); None means no
    attenuation (every A_l = 1). Component order matches `sh_basis`.
    """
    degrees = validate_degrees(degrees)
    max_l = degrees[-1]
    x = ad.slice_last(dirs, 0, 1)
    y = ad.slice_last(dirs, 1, 2)
    z = ad.slice_last(dirs, 2, 3)

    zpow: list[ad.Tensor | None] = [None, z]
    for _ in range(2, max_l + 1):
        zpow.append(ad.mul(zpow[-1], z))

    # Real/imaginary parts of (x + i y)^m, built incrementally.
    re_pow: list[ad.Tensor | None] = [None, x]
    im_pow: list[ad.Tensor | None] = [None, y]
    for _ in range(2, max_l + 1):
        re_pow.append(ad.sub(ad.mul(re_pow[-1], x), ad.mul(im_pow[-1], y)))
        im_pow.append(ad.add(ad.mul(re_pow[-2], y), ad.mul(im_pow[-1], x)))

    atten: dict[int, ad.Tensor] = {}
    if kappa_inv is not None:
        for l in degrees:
            atten[l] = ad.texp(ad.mul(kappa_inv, -0.5 * l * (l + 1)))

    cols: list[ad.Tensor] = []
    for l, m in sh_index_list(degrees):
        poly: ad.Tensor | None = None
        for k, c in _sh_poly_coeffs(l, m):
            term = ad.constant(np.full((1, 1), c, dtype=dirs.values.dtype))
            term = term if k == 0 else ad.mul(zpow[k], c)
            poly = term if poly is None else ad.add(poly, term)
        parts = [poly] if m == 0 else [ad.mul(poly, re_pow[m]), ad.mul(poly, im_pow[m])]
        for part in parts:
            if part.values.shape[0] == 1 and dirs.values.shape[0] != 1:
                # Degree-zero polynomial: broadcast up to the batch.
                part = ad.add(ad.mul(z, 0.0), part)
            cols.append(part if l not in atten else ad.mul(part, atten[l]))
    return ad.concat(cols, axis=-1)


def directional_encoding_tape(
    dirs: ad.Tensor, degrees: Sequence[int] = DEFAULT_DEGREES
) -> ad.Tensor:
    """`ide_tape` with all attenuations fixed to 1."""
    return ide_tape(dirs, None, degrees)
