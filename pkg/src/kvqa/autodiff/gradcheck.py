"""Finite-difference verification of the reverse pass.

The numeric side uses central differences and never touches the adjoint
rules, so it stays an independent oracle for the analytic gradients. Points
where the one-sided differences disagree (kinks of relu/max at ties) are
reported as excluded rather than failed: the derivative is not defined
there and the comparison would be meaningless.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import ParamStore

ACTIVE_FLOOR = 1e-8  # below this |analytic| + |numeric| the point is ignored
KINK_RATIO = 1e-2    # one-sided difference gap (relative) that flags a kink


@dataclass
class ParamReport:
    name: str
    max_rel_error: float
    checked: int
    excluded_kinks: int
    inactive: int


@dataclass
class GradCheckReport:
    """Per-parameter worst relative errors for one loss function."""

    params: list[ParamReport] = field(default_factory=list)

    @property
    def max_rel_error(self) -> float:
        errs = [p.max_rel_error for p in self.params if p.checked > 0]
        return max(errs) if errs else 0.0

    def passed(self, tolerance: float) -> bool:
        return self.max_rel_error < tolerance

    def summary(self) -> str:
        lines = [
            f"{p.name}: max_rel_error={p.max_rel_error:.3e} "
            f"(checked={p.checked}, kinks={p.excluded_kinks}, inactive={p.inactive})"
            for p in self.params
        ]
        lines.append(f"overall max_rel_error={self.max_rel_error:.3e}")
        return "\n".join(lines)


def numeric_gradient(loss_fn, param, h: float = 1e-5):
    """Central-difference gradient of ``loss_fn()`` w.r.t. one parameter.

    Perturbs the parameter buffer in place and restores it; ``loss_fn``
    must recompute the forward pass from the live parameter values.
    """
    flat = param.data.reshape(-1)
    grad = np.zeros_like(flat)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + h
        f_plus = float(loss_fn().data)
        flat[k] = orig - h
        f_minus = float(loss_fn().data)
        flat[k] = orig
        grad[k] = (f_plus - f_minus) / (2.0 * h)
    return grad.reshape(param.data.shape)


def grad_check(loss_fn, params: ParamStore, h: float = 1e-5,
               detect_kinks: bool = True,
               active_floor: float = ACTIVE_FLOOR) -> GradCheckReport:
    """Compare analytic gradients of ``loss_fn`` against central differences.

    ``loss_fn`` must rebuild the forward graph from the current parameter
    values on every call and return a scalar tensor. Run this in 64-bit mode
    with dropout disabled; in 32-bit the difference quotient itself loses
    most of its digits.

    Coordinates whose combined |analytic| + |numeric| magnitude falls below
    ``active_floor`` are reported as inactive rather than compared: the
    difference quotient carries roundoff noise of roughly eps * |loss| / h,
    and a relative comparison below that noise measures the arithmetic, not
    the gradients. For a composite graph with a loss of order one, a floor
    near ``eps * |loss| / (h * tolerance)`` keeps roundoff out of the verdict.
    """
    params.zero_grad()
    loss = loss_fn()
    loss.backward()
    analytic = params.gradients()
    f0 = float(loss.data)

    report = GradCheckReport()
    for name, param in params.items():
        a = analytic[name].reshape(-1)
        flat = param.data.reshape(-1)
        max_err = 0.0
        checked = excluded = inactive = 0
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + h
            f_plus = float(loss_fn().data)
            flat[k] = orig - h
            f_minus = float(loss_fn().data)
            flat[k] = orig
            numeric = (f_plus - f_minus) / (2.0 * h)
            if detect_kinks:
                d_fwd = (f_plus - f0) / h
                d_bwd = (f0 - f_minus) / h
                gap = abs(d_fwd - d_bwd)
                scale = max(abs(d_fwd), abs(d_bwd), 1.0)
                if gap > KINK_RATIO * scale:
                    excluded += 1
                    continue
            denom = abs(a[k]) + abs(numeric)
            if denom <= active_floor:
                inactive += 1
                continue
            err = abs(a[k] - numeric) / denom
            checked += 1
            if err > max_err:
                max_err = err
        report.params.append(ParamReport(name, max_err, checked, excluded, inactive))
    return report
