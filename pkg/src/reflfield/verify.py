"""Self-verification suites: math identities, sampling, gradients, quadrature.

Each suite returns a row with its worst observed error and threshold, so the
CLI and service can render a table and exit nonzero on any failure. Suites
are sized to finish in seconds; the full-strength statistical versions live
in the acceptance tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import field as fd
from . import losses as ls
from . import renderer as rd
from . import sphmath as sm


@dataclass
class SuiteResult:
    name: str
    cases: int
    worst: float
    threshold: float

    @property
    def ok(self) -> bool:
        return self.worst <= self.threshold

    def line(self) -> str:
        status = "pass" if self.ok else "FAIL"
        return (
            f"{self.name:<28} cases {self.cases:>5}  worst {self.worst:.3e}  "
            f"limit {self.threshold:.1e}  {status}"
        )


def suite_attenuation_recurrence() -> SuiteResult:
    """A_l = A_{l-2} - (2l-1)/kappa * A_{l-1}, plus the l=0,1 anchors."""
    worst = 0.0
    cases = 0
    for kappa in (0.1, 1.0, 10.0, 100.0):
        a = [sm.attenuation_exact(ell, kappa) for ell in range(9)]
        worst = max(worst, abs(a[0] - 1.0))
        worst = max(worst, abs(a[1] - (1.0 / np.tanh(kappa) - 1.0 / kappa)))
        for ell in range(2, 9):
            worst = max(worst, abs(a[ell] - (a[ell - 2] - (2 * ell - 1) / kappa * a[ell - 1])))
            cases += 1
        cases += 2
    return SuiteResult("attenuation_recurrence", cases, worst, 1e-8)


def suite_attenuation_closed_form() -> SuiteResult:
    """Quadrature route vs the analytic finite sum (high-precision)."""
    worst = 0.0
    cases = 0
    for kappa in (0.5, 2.0, 10.0, 50.0):
        for ell in range(0, 7):
            got = sm.attenuation_exact(ell, kappa)
            ref = sm.attenuation_closed_form(ell, kappa)
            worst = max(worst, abs(got - ref))
            cases += 1
    return SuiteResult("attenuation_closed_form", cases, worst, 1e-6)


def suite_vmf_expectation(seed: int = 20240817) -> SuiteResult:
    """MC harmonic averages under vMF vs exact attenuation, in standard errors.

    Reduced-size version of the acceptance check (fewer draws and samples);
    the threshold is in sigma units.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    cases = 0
    for _ in range(6):
        mean = sm.unit(rng.normal(size=3))
        kappa = float(np.exp(rng.uniform(np.log(0.5), np.log(500.0))))
        for ell in sm.DEFAULT_DEGREES:
            atten = sm.attenuation_exact(ell, kappa)
            for m in range(ell + 1):
                exact_re, exact_im = sm.eval_sh(ell, m, mean)
                est = sm.mc_sh_expectation(rng, mean, kappa, ell, m, 20000)
                worst = max(
                    worst, abs(est.real - atten * exact_re) / max(est.real_se, 1e-12)
                )
                cases += 1
                if m > 0:
                    worst = max(
                        worst,
                        abs(est.imag - atten * exact_im) / max(est.imag_se, 1e-12),
                    )
                    cases += 1
    return SuiteResult("vmf_mc_expectation", cases, worst, 4.5)


def _loss_gradcheck() -> tuple[float, int]:
    cfg = fd.FieldConfig(
        spatial_depth=2, spatial_width=10, directional_depth=2,
        directional_width=10, pe_levels=2, sh_degrees=(1, 2), bottleneck_width=4,
    )
    params = fd.ModelParams.create(np.random.default_rng(11), cfg, dtype=np.float64)
    rays = rd.RayBatch(
        np.array([[0.2, 0.0, 4.0], [0.0, -0.3, 4.0]]),
        sm.unit(np.array([[0.05, 0.0, -1.0], [0.0, 0.05, -1.0]])),
    )
    samples = rd.stratified_samples(2, 4, 2.0, 6.0, rng=None)
    target = np.random.default_rng(12).uniform(size=(2, 3))
    lw = ls.LossWeights()

    def run():
        out = rd.render_rays(params, cfg, rays, samples, mode="eval")
        return ls.total_loss(out, target, lw)

    worst = 0.0
    checked = 0
    for term in ("data", "predicted_normal", "orientation", "total"):
        L = getattr(run(), term)
        for p in params.parameters():
            p.grad = None
        L.backward()
        for p in params.parameters():
            if p.grad is None:
                continue
            num = ad.numeric_gradient(
                lambda: float(getattr(run(), term).values), p.values, h=1e-6
            )
            denom = max(1.0, float(np.max(np.abs(p.grad) + np.abs(num))))
            worst = max(worst, float(np.max(np.abs(p.grad - num))) / denom)
            checked += 1
    return worst, checked


def suite_autodiff_gradcheck() -> SuiteResult:
    """Finite differences vs the tape on each loss term end to end."""
    worst, cases = _loss_gradcheck()
    return SuiteResult("autodiff_gradcheck", cases, worst, 1e-3)


def suite_quadrature_invariants(seed: int = 7) -> SuiteResult:
    """Weights in [0,1], sums <= 1, and the hand-computed case."""
    rng = np.random.default_rng(seed)
    tau = rng.exponential(1.0, size=(2000, 8))
    deltas = rng.uniform(0.05, 0.5, size=(2000, 8))
    w = rd.quadrature_weights(tau, deltas).values
    worst = max(
        float(np.max(-w, initial=0.0)),
        float(np.max(w - 1.0, initial=0.0)),
        float(np.max(w.sum(axis=1) - 1.0, initial=0.0)),
    )
    worst = max(worst, 0.0)
    hand = rd.quadrature_weights(
        np.array([[1.0, 2.0]]), np.array([[1.0, 1.0]])
    ).values[0]
    expect = np.array([1.0 - np.exp(-1.0), np.exp(-1.0) * (1.0 - np.exp(-2.0))])
    worst = max(worst, float(np.max(np.abs(hand - expect))))
    return SuiteResult("quadrature_invariants", 2001, worst, 1e-6)


ALL_SUITES = (
    suite_attenuation_recurrence,
    suite_attenuation_closed_form,
    suite_vmf_expectation,
    suite_autodiff_gradcheck,
    suite_quadrature_invariants,
)


def run_all() -> list[SuiteResult]:
    return [suite() for suite in ALL_SUITES]
