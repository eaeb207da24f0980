"""Track description, interpolation and collocation mesh generation.

A track is a closed circuit sampled along its centerline arc length:
curvature kappa(s) and the lateral corridor widths to the left and right of
the centerline. Multi-lap horizons reuse the samples periodically.

The collocation mesh is curvature adaptive: fine spacing where the car turns,
coarse spacing on straights, graded monotone transitions where the two meet,
and a repair pass that keeps adjacent steps within a bounded ratio.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, InputError

__all__ = [
    "Track",
    "Mesh",
    "MeshOptions",
    "load_track",
    "save_track",
    "generate_oval",
    "generate_mesh",
]

TRACK_HEADER = ("s_m", "kappa_1pm", "n_left_m", "n_right_m")

# curvature closure mismatch tolerated between first and last sample [1/m]
CLOSURE_TOL = 1e-6


@dataclass(frozen=True)
class Track:
    """Closed circuit sampled along centerline arc length.

    The final sample must sit at s = lap_length and describe the same point
    as s = 0, so interpolation can wrap cleanly across the start line.
    """

    s: np.ndarray        # sample positions [m], s[0] = 0, strictly increasing
    kappa: np.ndarray    # centerline curvature [1/m], left turn positive
    n_left: np.ndarray   # corridor width left of centerline [m]
    n_right: np.ndarray  # corridor width right of centerline [m]
    name: str = "track"

    def __post_init__(self):
        arrays = (self.s, self.kappa, self.n_left, self.n_right)
        if len({a.shape for a in arrays}) != 1 or self.s.ndim != 1:
            raise DataError("track columns must be equal-length 1-d arrays")
        if self.s.size < 4:
            raise DataError("track needs at least 4 samples")
        if self.s[0] != 0.0:
            raise DataError("track samples must start at s = 0")
        if not (np.diff(self.s) > 0.0).all():
            raise DataError("track sample positions must be strictly increasing")
        if (self.n_left <= 0.0).any() or (self.n_right <= 0.0).any():
            raise DataError("corridor widths must be positive")
        if abs(self.kappa[0] - self.kappa[-1]) > CLOSURE_TOL:
            raise DataError(
                "track is not closed: curvature mismatch "
                f"{abs(self.kappa[0] - self.kappa[-1]):.3e} between first and "
                "last sample")

    @property
    def lap_length(self):
        """Centerline length of one lap [m]."""
        return float(self.s[-1])

    def _wrap(self, s_query):
        s_mod = np.mod(s_query, self.lap_length)
        return s_mod

    def kappa_at(self, s_query):
        """Curvature at arbitrary s, periodic across laps [1/m]."""
        return np.interp(self._wrap(s_query), self.s, self.kappa)

    def width_at(self, s_query):
        """Corridor widths (left, right) at arbitrary s [m]."""
        s_mod = self._wrap(s_query)
        return (np.interp(s_mod, self.s, self.n_left),
                np.interp(s_mod, self.s, self.n_right))


def load_track(path):
    """Read a track from delimited text with the canonical header."""
    try:
        fh = open(path, "r", newline="")
    except OSError as exc:
        raise InputError(f"cannot open track file {path}: {exc}") from exc
    with fh:
        rows = [r for r in csv.reader(fh)
                if r and not r[0].lstrip().startswith("#")]
    if not rows:
        raise DataError(f"track file {path} is empty")
    header = tuple(h.strip().lower() for h in rows[0])
    if header != TRACK_HEADER:
        raise DataError(
            f"track file {path} must start with header {','.join(TRACK_HEADER)}")
    try:
        data = np.array([[float(v) for v in r] for r in rows[1:]])
    except ValueError as exc:
        raise DataError(f"malformed track row in {path}: {exc}") from exc
    if data.ndim != 2 or data.shape[1] != 4:
        raise DataError(f"track file {path} must have 4 columns per row")
    # the file carries signed corridor bounds (n positive toward the left,
    # so the right bound is negative); internally both are stored as
    # positive distances from the centerline
    if (data[:, 3] >= data[:, 2]).any():
        raise DataError(
            f"track file {path}: right bound must lie below left bound")
    import os
    name = os.path.splitext(os.path.basename(path))[0]
    return Track(s=data[:, 0], kappa=data[:, 1],
                 n_left=data[:, 2], n_right=-data[:, 3], name=name)


def save_track(path, track):
    """Write a track with the canonical header (right bound signed)."""
    with open(path, "w", newline="") as fh:
        fh.write(",".join(TRACK_HEADER) + "\n")
        for row in zip(track.s, track.kappa, track.n_left, -track.n_right):
            fh.write(",".join(f"{v:.12g}" for v in row) + "\n")


def generate_oval(straight=200.0, arc=100.0, width=4.0, ds=1.0, blend=15.0):
    """Synthetic closed oval: two straights and two constant-radius turns.

    Lap length is 2*(straight + arc). Each arc holds a constant curvature
    over its full length; curvature ramps linearly to zero over blend metres
    of the adjoining straights (transition curves, as on real circuits), so
    each straight carries a turn-out and a turn-in ramp at its ends. The
    per-turn heading change integrates to exactly pi via
    kappa_max = pi/(arc + blend). The lap reference s=0 sits mid-straight,
    away from any transition. Constant corridor width both sides.
    """
    if not 0.0 < blend < 0.5 * straight:
        raise DataError("oval blend must lie in (0, straight/2)")
    lap = 2.0 * (straight + arc)
    kappa_max = np.pi / (arc + blend)
    arc_starts = (0.5 * straight, 1.5 * straight + arc)
    knots, values = [0.0], [0.0]
    for t in arc_starts:
        knots += [t - blend, t, t + arc, t + arc + blend]
        values += [0.0, kappa_max, kappa_max, 0.0]
    n = int(round(lap / ds))
    s = np.union1d(np.linspace(0.0, lap, n + 1), np.asarray(knots))
    kappa = np.interp(s, knots, values)
    widths = np.full_like(s, width)
    return Track(s=s, kappa=kappa, n_left=widths.copy(),
                 n_right=widths.copy(), name="oval")


@dataclass(frozen=True)
class MeshOptions:
    """Spacing rule for the curvature-adaptive collocation mesh."""

    ds_fine: float = 3.0         # step inside high-curvature regions [m]
    ds_coarse: float = 9.0       # step elsewhere [m]
    kappa_threshold: float = 0.01    # |kappa| at or above this is "turning" [1/m]
    max_step_ratio: float = 3.0  # allowed ratio between adjacent steps
    # geometric growth of the graded transition a coarse region runs where it
    # meets a fine one; the short leading steps resolve the yaw settling layer
    # right after a curvature change, which coarse steps would otherwise smear
    blend_ratio: float = 1.5

    def __post_init__(self):
        if not 0.0 < self.ds_fine <= self.ds_coarse:
            raise DataError("need 0 < ds_fine <= ds_coarse")
        if self.kappa_threshold <= 0.0 or self.max_step_ratio < 1.0:
            raise DataError("mesh threshold and step ratio must be positive")
        if not 1.0 < self.blend_ratio <= self.max_step_ratio:
            raise DataError("blend_ratio must lie in (1, max_step_ratio]")


# inset for sampling curvature just inside an interval end [m]: keeps a node
# sitting exactly on a curvature kink from smearing the far side's slope into
# the neighbouring interval, yet far below any resolved feature
KAPPA_EDGE_EPS = 1e-4


@dataclass(frozen=True)
class Mesh:
    """Collocation mesh over a multi-lap horizon.

    kappa holds the nodal samples used for reporting. Collocation instead
    uses kappa_left/kappa_right, the curvature a hair inside each interval
    end: where a curvature step sits exactly on a node, the neighbouring
    intervals then integrate their own side of the step instead of smearing
    the other side's value across the interval.
    """

    s: np.ndarray        # node positions [m] over [0, lap_count*lap_length]
    kappa: np.ndarray    # centerline curvature at the nodes [1/m]
    kappa_left: np.ndarray   # curvature just inside each interval start [1/m]
    kappa_right: np.ndarray  # curvature just inside each interval end [1/m]
    n_left: np.ndarray   # corridor width left at the nodes [m]
    n_right: np.ndarray  # corridor width right at the nodes [m]
    lap_length: float
    lap_count: int
    options: MeshOptions = field(default_factory=MeshOptions)

    @property
    def n_nodes(self):
        return int(self.s.size)

    @property
    def n_intervals(self):
        return int(self.s.size - 1)

    @property
    def h(self):
        """Interval lengths [m]."""
        return np.diff(self.s)

    @property
    def total_length(self):
        return float(self.s[-1])


def _kink_samples(track):
    """Sample indices where the curvature slope changes direction or rate.

    Collocation intervals should not straddle such points, so they become
    region boundaries. The relative test keeps smoothly sampled curvature
    (slope drifting a little every sample) from fragmenting the lap.
    """
    slope = np.diff(track.kappa) / np.diff(track.s)
    jump = np.abs(np.diff(slope))
    return np.nonzero(jump > 0.25 * (np.abs(slope[1:]) + np.abs(slope[:-1]))
                      + 1e-12)[0] + 1


def _lap_regions(track, opts):
    """Maximal smooth pieces of one lap, classified fine or coarse.

    The lap splits at curvature-slope kinks and at |kappa| = threshold
    crossings, so each piece lies entirely on one side of the spacing rule:
    fine where |kappa| >= threshold, coarse elsewhere. Returns a list of
    (s_start, s_end, fine).
    """
    thr = opts.kappa_threshold
    s, kap = track.s, track.kappa
    # augment the samples with kappa zero crossings so |kappa| is piecewise
    # linear on the augmented grid, then locate its threshold crossings
    zc = kap[:-1] * kap[1:] < 0.0
    s_zero = s[:-1][zc] - kap[:-1][zc] * np.diff(s)[zc] / np.diff(kap)[zc]
    s_aug = np.union1d(s, s_zero)
    mag = np.abs(np.interp(s_aug, s, kap))
    d = mag - thr
    tc = d[:-1] * d[1:] < 0.0
    s_thr = s_aug[:-1][tc] - d[:-1][tc] * np.diff(s_aug)[tc] / np.diff(d)[tc]

    edges = np.concatenate([s[[0, -1]], s[_kink_samples(track)], s_thr])
    edges = np.unique(np.round(edges, 9))
    out = []
    for a, b in zip(edges[:-1], edges[1:]):
        mid = abs(float(np.interp(0.5 * (a + b), s, kap)))
        out.append((float(a), float(b), bool(mid >= thr)))
    return out


def _blend_steps(opts):
    """Graded step ladder from ds_fine up to (under) ds_coarse."""
    steps, h = [opts.ds_fine], opts.ds_fine * opts.blend_ratio
    while h < opts.ds_coarse * 0.999:
        steps.append(h)
        h *= opts.blend_ratio
    return steps


def _coarse_steps(length, lead, trail, opts):
    """Step sequence for one coarse region with monotone end transitions.

    Where the region meets a fine neighbour (lead/trail flags) it starts at
    ds_fine and grows geometrically; the middle runs uniform near ds_coarse.
    Transition steps are dropped outermost-first when the region is too short
    to carry them.
    """
    up = _blend_steps(opts) if lead else []
    dn = _blend_steps(opts) if trail else []
    while True:
        rem = length - sum(up) - sum(dn)
        if rem >= opts.ds_coarse or (not up and not dn):
            if rem > 0.0:
                m = max(1, int(round(rem / opts.ds_coarse)))
                h_mid = rem / m
                lo = max(up[-1] if up else h_mid, dn[-1] if dn else h_mid)
                good = (h_mid <= opts.max_step_ratio * min(
                    up[-1] if up else h_mid, dn[-1] if dn else h_mid)
                    and h_mid >= lo / opts.max_step_ratio)
                if good:
                    return up + [h_mid] * m + dn[::-1]
        if len(up) >= len(dn) and up:
            up.pop()
        elif dn:
            dn.pop()
        else:
            m = max(1, int(round(length / opts.ds_coarse)))
            return [length / m] * m


def _split_repair(steps, ratio_max):
    """Split the longer member of offending adjacent pairs until bounded.

    The lap wraps, so the first/last pair counts too. Splitting halves the
    longer step, which strictly shrinks the offender, so the loop terminates.
    """
    steps = list(steps)
    guard = 0
    while guard < 10000:
        n = len(steps)
        worst = None
        for i in range(n):
            j = (i + 1) % n
            hi, lo = max(steps[i], steps[j]), min(steps[i], steps[j])
            if hi / lo > ratio_max * (1.0 + 1e-9):
                worst = i if steps[i] > steps[j] else j
                break
        if worst is None:
            return steps
        steps[worst: worst + 1] = [0.5 * steps[worst]] * 2
        guard += 1
    raise DataError("mesh repair failed to bound adjacent step ratios")


def generate_mesh(track, lap_count, options=None):
    """Build the curvature-adaptive collocation mesh for a lap horizon.

    One lap is partitioned into fine and coarse regions by the curvature
    threshold. Fine regions get uniform ds_fine intervals (snapped); coarse
    regions run uniform near ds_coarse but grade monotonically down to
    ds_fine where they border a fine region, so curvature changes land on
    short intervals. The lap pattern repeats lap_count times.
    """
    if lap_count < 1:
        raise DataError("lap_count must be at least 1")
    opts = options or MeshOptions()
    regions = _lap_regions(track, opts)
    n_reg = len(regions)
    step_seq = []
    for i, (a, b, f) in enumerate(regions):
        length = b - a
        if f:
            m = max(1, int(round(length / opts.ds_fine)))
            step_seq.append([length / m] * m)
        else:
            lead = regions[(i - 1) % n_reg][2]
            trail = regions[(i + 1) % n_reg][2]
            step_seq.append(_coarse_steps(length, lead, trail, opts))
    flat = _split_repair([h for seq in step_seq for h in seq],
                         opts.max_step_ratio)
    lap_nodes = np.concatenate([[0.0], np.cumsum(flat)[:-1]])
    lap = track.lap_length
    s = np.concatenate([lap_nodes + k * lap for k in range(lap_count)]
                       + [np.array([lap_count * lap])])
    widths = track.width_at(s)
    mesh = Mesh(s=s, kappa=track.kappa_at(s),
                kappa_left=track.kappa_at(s[:-1] + KAPPA_EDGE_EPS),
                kappa_right=track.kappa_at(s[1:] - KAPPA_EDGE_EPS),
                n_left=widths[0],
                n_right=widths[1], lap_length=lap, lap_count=int(lap_count),
                options=opts)
    h = mesh.h
    if (h <= 0.0).any():
        raise DataError("mesh generation produced a non-increasing node set")
    ratio = np.maximum(h[1:] / h[:-1], h[:-1] / h[1:])
    if (ratio > opts.max_step_ratio * (1.0 + 1e-6)).any():
        raise DataError("mesh repair failed to bound adjacent step ratios")
    return mesh
