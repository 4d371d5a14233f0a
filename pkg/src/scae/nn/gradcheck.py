"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from typing import Callable

import numpy as np

from ..tensor import Xoshiro256
from .layers import Dropout, Layer
from .losses import mse_loss


class GradcheckError(ArithmeticError):
    pass


def _dropouts(module) -> list[Dropout]:
    if isinstance(module, Dropout):
        return [module]
    found = []
    for child in getattr(module, "layers", ()):
        found.extend(_dropouts(child))
    return found


def _relative(analytic: np.ndarray, numeric: np.ndarray, floor: float) -> float:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom)) if analytic.size else 0.0


def gradcheck_detail(
    module: Layer,
    x: np.ndarray,
    eps: float = 1e-5,
    *,
    target: np.ndarray | None = None,
    training: bool = False,
    seed: int = 0,
    floor: float = 1e-6,
    max_coords: int | None = None,
) -> dict[str, float]:
    """Worst relative error per checked array (``"input"`` plus every param).

    The scalar objective is ``mse(module(x), target) + penalty`` when a target
    is given, otherwise ``sum(r * module(x)) + penalty`` for a fixed random
    projection ``r``. Projection differences are formed on the outputs before
    summing, which keeps rounding noise far below the gradient scale.
    ``floor`` bounds the denominator so near-zero gradients compare in
    absolute terms. Run modules in float64.
    """
    x = np.array(x, dtype=np.float64)
    rng = Xoshiro256(seed)
    drops = _dropouts(module)
    drop_states = [d.rng.state for d in drops]

    def run(inp):
        for d, st in zip(drops, drop_states):
            d.rng = Xoshiro256.from_state(st)
        # copy: reshaping layers return views of the input being perturbed in place
        y = np.array(module.forward(inp, training))
        if not np.all(np.isfinite(y)):
            raise GradcheckError("non-finite forward output")
        return y, module.penalty

    y, _ = run(x)
    if target is None:
        r = rng.normal(y.shape)
        dy = r
    else:
        _, dy = mse_loss(y, target)
    dx = module.backward(dy)
    analytic = {"input": dx, **{k: g.copy() for k, g in module.grads.items()}}

    def objective_delta(plus, minus):
        y_p, pen_p = plus
        y_m, pen_m = minus
        if target is None:
            return float(np.sum(r * (y_p - y_m))) + (pen_p - pen_m)
        # mse(y_p) - mse(y_m) without the cancellation of subtracting two sums
        return float(np.mean((y_p - y_m) * (y_p + y_m - 2 * target))) + (pen_p - pen_m)

    arrays: dict[str, np.ndarray] = {"input": x, **module.params}
    pick = Xoshiro256(seed + 1)
    errors = {}
    for name, arr in arrays.items():
        flat = arr.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = np.sort(pick.permutation(flat.size)[:max_coords])
        numeric = np.empty(coords.size)
        for j, c in enumerate(coords):
            orig = flat[c]
            hi, lo = orig + eps, orig - eps
            flat[c] = hi
            plus = run(x)
            flat[c] = lo
            minus = run(x)
            flat[c] = orig
            numeric[j] = objective_delta(plus, minus) / (hi - lo)
        if not np.all(np.isfinite(numeric)):
            raise GradcheckError(f"non-finite finite difference for {name}")
        errors[name] = _relative(analytic[name].reshape(-1)[coords], numeric, floor)
    run(x)
    return errors


def gradcheck(module: Layer, x: np.ndarray, eps: float = 1e-5, **kwargs) -> float:
    """Worst relative error of the analytic gradient over input and params."""
    return max(gradcheck_detail(module, x, eps, **kwargs).values())


def gradcheck_function(f: Callable[[np.ndarray], float], grad: np.ndarray, x: np.ndarray,
                       eps: float = 1e-5, floor: float = 1e-6) -> float:
    """Compare ``grad`` with central differences of a scalar function ``f``."""
    x = np.array(x, dtype=np.float64)
    flat = x.reshape(-1)
    numeric = np.empty(flat.size)
    for c in range(flat.size):
        orig = flat[c]
        hi, lo = orig + eps, orig - eps
        flat[c] = hi
        fp = f(x)
        flat[c] = lo
        fm = f(x)
        flat[c] = orig
        numeric[c] = (fp - fm) / (hi - lo)
    return _relative(np.asarray(grad, dtype=np.float64).reshape(-1), numeric, floor)
