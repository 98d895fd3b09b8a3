"""Stochastic signal transformations for tri-axial sensor windows.

Every transform maps a ``[L, 3]`` window to a new ``[L, 3]`` array and never
mutates its input. Random draws come from an explicit ``numpy`` Generator;
each transform also accepts its random parameters directly so callers (and
tests) can pin them.
"""

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline


class TransformError(ValueError):
    """Raised for windows a transform cannot handle or bad pipeline specs."""


class TransformKind(enum.Enum):
    IDENTITY = "identity"
    NOISE = "noise"
    SCALE = "scale"
    ROTATE3D = "rotate"
    INVERT = "invert"
    TIME_REVERSE = "reverse"
    PERMUTE = "permute"
    TIME_WARP = "warp"
    CHANNEL_SHUFFLE = "shuffle"


ALL_KINDS = tuple(TransformKind)


@dataclass(frozen=True)
class TransformParams:
    noise_sigma: float = 0.05
    scale_sigma: float = 0.1
    permute_segments: int = 4
    warp_knots: int = 4
    warp_sigma: float = 0.2

    def __post_init__(self):
        if self.noise_sigma < 0 or self.scale_sigma < 0 or self.warp_sigma < 0:
            raise TransformError("transform sigmas must be non-negative")
        if self.permute_segments < 2:
            raise TransformError("permute_segments must be >= 2")
        if self.warp_knots < 2:
            raise TransformError("warp_knots must be >= 2")


def rng_stream(base_seed, *indices):
    """Counter-based generator keyed by ``(base_seed, *indices)``.

    The same key always yields the same draws, regardless of call order.
    """
    seq = np.random.SeedSequence(int(base_seed), spawn_key=tuple(int(i) for i in indices))
    return np.random.Generator(np.random.Philox(seq))


def derive_seed(base_seed, *indices):
    """Mix ``base_seed`` and ``indices`` into a fresh 63-bit seed."""
    seq = np.random.SeedSequence(int(base_seed), spawn_key=tuple(int(i) for i in indices))
    return int(seq.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def _check_window(w, channels=None):
    if w.ndim != 2:
        raise TransformError(f"window must be 2-D [time, channels], got {w.shape}")
    if channels is not None and w.shape[1] != channels:
        raise TransformError(f"expected {channels} channels, got {w.shape[1]}")


# --------------------------------------------------------------------------
# Individual transforms
# --------------------------------------------------------------------------

def t_noise(w, rng=None, sigma=0.05, noise=None):
    """Add i.i.d. zero-mean Gaussian noise."""
    _check_window(w)
    if noise is None:
        noise = rng.normal(0.0, sigma, size=w.shape)
    return (w + noise).astype(w.dtype, copy=False)


def t_scale(w, rng=None, sigma=0.1, factors=None):
    """Multiply each channel by its own factor drawn from N(1, sigma^2)."""
    _check_window(w)
    if factors is None:
        factors = rng.normal(1.0, sigma, size=w.shape[1])
    return (w * np.asarray(factors)[None, :]).astype(w.dtype, copy=False)


def rotation_matrix(axis, angle):
    """Rodrigues' formula for a rotation of ``angle`` radians about ``axis``."""
    u = np.asarray(axis, dtype=np.float64)
    u = u / np.linalg.norm(u)
    k = np.array([[0.0, -u[2], u[1]],
                  [u[2], 0.0, -u[0]],
                  [-u[1], u[0], 0.0]])
    return np.eye(3) + np.sin(angle) * k + (1.0 - np.cos(angle)) * (k @ k)


def t_rotate(w, rng=None, axis=None, angle=None):
    """Rotate every timestep's 3-vector by one random rotation."""
    _check_window(w, 3)
    if axis is None:
        axis = rng.standard_normal(3)
    if angle is None:
        angle = rng.uniform(0.0, 2.0 * np.pi)
    r = rotation_matrix(axis, angle)
    return (w @ r.T).astype(w.dtype, copy=False)


def t_invert(w, rng=None):
    _check_window(w)
    return -w


def t_time_reverse(w, rng=None):
    _check_window(w)
    return w[::-1].copy()


def t_permute(w, rng=None, n_segments=4, order=None):
    """Cut the window into ``n_segments`` contiguous pieces and shuffle them.

    Pieces have length ``L // n_segments``; the last one takes the remainder.
    """
    _check_window(w)
    length = w.shape[0]
    if length < n_segments:
        raise TransformError(f"window of length {length} cannot be cut into {n_segments} segments")
    if order is None:
        order = rng.permutation(n_segments)
    seg = length // n_segments
    bounds = [i * seg for i in range(n_segments)] + [length]
    pieces = [w[bounds[i]:bounds[i + 1]] for i in range(n_segments)]
    return np.concatenate([pieces[i] for i in order], axis=0)


def t_time_warp(w, rng=None, n_knots=4, sigma=0.2, knots=None, min_speed=0.1):
    """Resample the window along a smoothly varying time axis.

    Knot speeds (drawn from N(1, sigma^2) unless given) sit at equally spaced
    positions; a natural cubic spline through them is the local speed of
    time. Its cumulative sum, rescaled to ``[0, L - 1]``, is the warped clock,
    and each channel is linearly interpolated at the inverse warp.
    """
    _check_window(w)
    length = w.shape[0]
    if length < 8:
        raise TransformError(f"time warp needs at least 8 timesteps, got {length}")
    if knots is None:
        knots = rng.normal(1.0, sigma, size=n_knots)
    knots = np.maximum(np.asarray(knots, dtype=np.float64), min_speed)
    t = np.arange(length, dtype=np.float64)
    knot_pos = np.linspace(0.0, length - 1, len(knots))
    speed = np.maximum(CubicSpline(knot_pos, knots, bc_type="natural")(t), min_speed)
    clock = np.cumsum(speed)
    clock = (clock - clock[0]) * ((length - 1) / (clock[-1] - clock[0]))
    source = np.interp(t, clock, t)
    out = np.empty_like(w)
    for c in range(w.shape[1]):
        out[:, c] = np.interp(source, t, w[:, c])
    return out


def t_channel_shuffle(w, rng=None, perm=None):
    """Reorder the channels by a uniform random permutation (identity allowed)."""
    _check_window(w, 3)
    if perm is None:
        perm = rng.permutation(3)
    return w[:, np.asarray(perm)]


def apply_transform(kind, w, rng, params=TransformParams()):
    if kind is TransformKind.IDENTITY:
        return w.copy()
    if kind is TransformKind.NOISE:
        return t_noise(w, rng, sigma=params.noise_sigma)
    if kind is TransformKind.SCALE:
        return t_scale(w, rng, sigma=params.scale_sigma)
    if kind is TransformKind.ROTATE3D:
        return t_rotate(w, rng)
    if kind is TransformKind.INVERT:
        return t_invert(w)
    if kind is TransformKind.TIME_REVERSE:
        return t_time_reverse(w)
    if kind is TransformKind.PERMUTE:
        return t_permute(w, rng, n_segments=params.permute_segments)
    if kind is TransformKind.TIME_WARP:
        return t_time_warp(w, rng, n_knots=params.warp_knots, sigma=params.warp_sigma)
    if kind is TransformKind.CHANNEL_SHUFFLE:
        return t_channel_shuffle(w, rng)
    raise TransformError(f"unknown transform kind {kind!r}")


# --------------------------------------------------------------------------
# Pipelines
# --------------------------------------------------------------------------

def parse_kind(name):
    try:
        return TransformKind(name.strip().lower())
    except ValueError:
        valid = ", ".join(k.value for k in ALL_KINDS)
        raise TransformError(f"unknown transform {name.strip()!r} (valid: {valid})") from None


def parse_pipeline_spec(spec):
    """``"shuffle,permute"`` -> ``(CHANNEL_SHUFFLE, PERMUTE)``. Empty string -> ``()``."""
    if spec is None or not spec.strip():
        return ()
    return tuple(parse_kind(tok) for tok in spec.split(","))


def format_pipeline_spec(stages):
    return ",".join(k.value for k in stages) or "identity"


@dataclass(frozen=True)
class TransformPipeline:
    """Ordered transform stages plus the base seed for their random streams.

    The stream for a stage is ``rng_stream(seed, window_index, view_index,
    stage_index)``, where ``stage_index`` counts only non-identity stages so
    that identity stages are exact no-ops.
    """

    stages: tuple = ()
    seed: int = 0
    params: TransformParams = field(default_factory=TransformParams)

    @classmethod
    def from_spec(cls, spec, seed=0, params=None):
        return cls(parse_pipeline_spec(spec), seed, params or TransformParams())

    @property
    def active_stages(self):
        return tuple(k for k in self.stages if k is not TransformKind.IDENTITY)

    @property
    def spec(self):
        return format_pipeline_spec(self.stages)

    def reseeded(self, seed):
        return TransformPipeline(self.stages, seed, self.params)


def apply_pipeline(pipeline, w, window_index, view_index):
    out = w
    for stage_index, kind in enumerate(pipeline.active_stages):
        rng = rng_stream(pipeline.seed, window_index, view_index, stage_index)
        out = apply_transform(kind, out, rng, pipeline.params)
    if out is w:
        out = w.copy()
    return out


def two_views(pipeline, batch, window_indices=None):
    """Two independently transformed copies of each window in ``batch`` [B, L, C]."""
    if window_indices is None:
        window_indices = range(len(batch))
    view_a = np.empty_like(batch)
    view_b = np.empty_like(batch)
    for i, idx in enumerate(window_indices):
        view_a[i] = apply_pipeline(pipeline, batch[i], idx, 0)
        view_b[i] = apply_pipeline(pipeline, batch[i], idx, 1)
    return view_a, view_b
