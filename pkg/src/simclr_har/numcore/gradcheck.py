from dataclasses import dataclass, field

import numpy as np


class NonFiniteError(ArithmeticError):
    """Raised when a checked function produces NaN or Inf."""


@dataclass
class GradCheckReport:
    max_rel_error: float
    tolerance: float
    per_param: dict = field(default_factory=dict)
    n_coords: int = 0

    @property
    def passed(self):
        return self.max_rel_error < self.tolerance


def relative_error(analytic, numeric, floor=1e-6):
    return np.abs(analytic - numeric) / np.maximum(
        np.maximum(np.abs(analytic), np.abs(numeric)), floor)


def grad_check(fn, params, analytic, epsilon=1e-5, tolerance=1e-4,
               max_coords=None, rng=None, floor=1e-6):
    """Compare ``analytic`` gradients against central differences of ``fn``.

    ``fn(params) -> float`` is evaluated with each coordinate of each array in
    ``params`` nudged by ``+-epsilon`` (arrays are restored afterwards).
    ``params`` should be float64. When ``max_coords`` is set, at most that many
    coordinates per array are sampled with ``rng``.
    """
    per_param = {}
    total = 0
    for name, p in params.items():
        if p.dtype != np.float64:
            raise TypeError(f"{name}: gradient checks require float64, got {p.dtype}")
        flat = p.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            rng = rng if rng is not None else np.random.default_rng(0)
            coords = rng.choice(flat.size, size=max_coords, replace=False)
        a = np.asarray(analytic[name]).reshape(-1)[coords]
        numeric = np.empty(len(coords))
        for j, c in enumerate(coords):
            orig = flat[c]
            flat[c] = orig + epsilon
            f_plus = fn(params)
            flat[c] = orig - epsilon
            f_minus = fn(params)
            flat[c] = orig
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise NonFiniteError(f"non-finite output while perturbing {name}[{c}]")
            numeric[j] = (f_plus - f_minus) / (2 * epsilon)
        err = relative_error(a, numeric, floor)
        per_param[name] = float(err.max()) if err.size else 0.0
        total += len(coords)
    worst = max(per_param.values(), default=0.0)
    return GradCheckReport(worst, tolerance, per_param, total)
