"""Independent planar orbit tracer for quasiperiodic functions.

A periodic field on the n-torus (n = 2, 3 or 4) restricted to an affine
plane gives a quasiperiodic function of two variables; its level curves are
the planar orbits.  This module traces those curves directly with a
predictor-corrector walker and classifies them as closed, open (with a
fitted asymptotic direction and measured strip width), or undetermined.
It shares no machinery with the mesh/homology pipeline, so its verdicts
second-source the topological labels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi
STEP_MIN = 1e-4
STEP_MAX = 1e-2
DEFAULT_MAX_ARC = 200.0
DEGENERATE_FACTOR = 1e-8
LEVEL_TOL_FACTOR = 1e-6


class PlanarError(ValueError):
    pass


class DegenerateStartError(PlanarError):
    pass


@dataclass(frozen=True)
class PlaneEmbedding:
    """Affine embedding of a plane (or line) into R^n, psi(x) = offset + B x.

    ``basis`` holds one or two ambient vectors; with two they must be
    orthonormal (so plane coordinates are isometric and strip widths are in
    true units).  A single basis vector defines a line restriction and may
    have any nonzero length (it is a parametrization, not an isometry).
    """

    basis: tuple
    offset: tuple

    def __post_init__(self):
        b = np.asarray(self.basis, dtype=float)
        if b.ndim != 2 or b.shape[0] not in (1, 2) or b.shape[1] not in (2, 3, 4):
            raise PlanarError(f"basis must be 1 or 2 vectors in R^2..R^4, got {b.shape}")
        if len(self.offset) != b.shape[1]:
            raise PlanarError("offset dimension does not match the basis")
        if b.shape[0] == 2:
            gram = b @ b.T
            if np.max(np.abs(gram - np.eye(2))) > 1e-12:
                raise PlanarError("plane basis must be orthonormal to 1e-12")
        elif not np.linalg.norm(b[0]) > 0:
            raise PlanarError("line basis vector must be nonzero")
        object.__setattr__(self, "basis", tuple(tuple(float(x) for x in row) for row in b))
        object.__setattr__(self, "offset", tuple(float(x) for x in self.offset))

    @property
    def ambient_dimension(self) -> int:
        return len(self.offset)

    @property
    def normal(self):
        """Unit normal for a plane in R^3."""
        b = np.asarray(self.basis)
        if b.shape != (2, 3):
            raise PlanarError("normal is defined for planes in R^3 only")
        n = np.cross(b[0], b[1])
        return n / np.linalg.norm(n)

    def point(self, xy):
        b = np.asarray(self.basis)
        return np.asarray(self.offset) + np.asarray(xy, dtype=float) @ b

    @staticmethod
    def from_normal(normal, offset=None) -> "PlaneEmbedding":
        """Deterministic orthonormal basis of the plane orthogonal to
        ``normal`` in R^3 (the axis least aligned with the normal seeds
        Gram-Schmidt, so equal inputs give equal embeddings)."""
        n = np.asarray(normal, dtype=float)
        if n.shape != (3,) or not np.linalg.norm(n) > 0:
            raise PlanarError(f"invalid normal {normal!r}")
        n = n / np.linalg.norm(n)
        seed = np.zeros(3)
        seed[int(np.argmin(np.abs(n)))] = 1.0
        e1 = seed - (seed @ n) * n
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(n, e1)
        off = (0.0, 0.0, 0.0) if offset is None else tuple(float(x) for x in offset)
        return PlaneEmbedding((tuple(e1), tuple(e2)), off)


class PlanarField:
    """Restriction q(x) = F(psi(x)) of a periodic field to an affine plane.

    Values and gradients come from the chain rule applied term by term, so
    they are exact up to float rounding (no sampling or interpolation).
    """

    def __init__(self, fld, embedding: PlaneEmbedding):
        if fld.dimension != embedding.ambient_dimension:
            raise PlanarError(
                f"field dimension {fld.dimension} != embedding dimension "
                f"{embedding.ambient_dimension}")
        self.field = fld
        self.embedding = embedding
        freqs = np.asarray([t.frequency for t in fld.terms], dtype=float)
        b = np.asarray(embedding.basis)
        self._amps = np.asarray([t.amplitude for t in fld.terms])
        self._phases = np.asarray([t.phase for t in fld.terms])
        self._proj = freqs @ b.T                    # (terms, k)
        self._base = freqs @ np.asarray(embedding.offset)

    @property
    def amplitude_sum(self) -> float:
        return self.field.amplitude_sum

    @property
    def k(self) -> int:
        return self._proj.shape[1]

    def _angles(self, xy):
        xy = np.asarray(xy, dtype=float)
        return TWO_PI * (self._base + xy @ self._proj.T) + self._phases

    def value(self, xy) -> float:
        return float(np.sum(self._amps * np.cos(self._angles(xy))))

    def gradient(self, xy):
        s = self._amps * np.sin(self._angles(xy))
        return -TWO_PI * (s @ self._proj)

    def __call__(self, xy):
        return self.value(xy)


def restrict(fld, embedding: PlaneEmbedding) -> PlanarField:
    """Planar (or line) restriction handle with exact value and gradient."""
    return PlanarField(fld, embedding)


@dataclass(frozen=True)
class Verdict:
    kind: str                 # "closed" | "open" | "undetermined"
    direction: tuple = None   # unit 2-vector for open orbits
    strip_width: float = None
    reason: str = ""


@dataclass
class Orbit:
    points: np.ndarray
    level: float
    verdict: Verdict

    @property
    def arc_length(self) -> float:
        d = np.diff(self.points, axis=0)
        return float(np.sqrt((d * d).sum(axis=1)).sum())


def _project_to_level(handle, xy, level, tol, max_iter=40):
    """Newton steps along the gradient onto {q = level}."""
    x = np.asarray(xy, dtype=float)
    for _ in range(max_iter):
        r = handle.value(x) - level
        if abs(r) <= tol:
            return x
        g = handle.gradient(x)
        g2 = float(g @ g)
        if g2 < (DEGENERATE_FACTOR * handle.amplitude_sum) ** 2:
            raise DegenerateStartError("gradient vanished while projecting onto the level set")
        x = x - (r / g2) * g
    raise PlanarError("could not project the start point onto the level set")


def _tangent(handle, x, amp):
    g = handle.gradient(x)
    gn = float(np.hypot(g[0], g[1]))
    if gn < DEGENERATE_FACTOR * amp:
        return None, gn
    return np.array([-g[1], g[0]]) / gn, gn


def trace_orbit(handle: PlanarField, level: float, start, max_arc=DEFAULT_MAX_ARC,
                step_max=STEP_MAX, _closure=True) -> Orbit:
    """Trace the level curve of a planar restriction through ``start``.

    Predictor-corrector continuation perpendicular to the gradient, with
    curvature-adaptive steps in [1e-4, 1e-2].  Closed: the trace re-enters
    a 2-step ball around the start with tangent within 10 degrees of the
    initial one.  Open: the arc budget ends with a linear drift fitted over
    the last half and a transverse spread below 3 periods that stops
    growing over the final third.  Anything else is Undetermined.
    """
    if handle.k != 2:
        raise PlanarError("orbit tracing needs a 2d restriction")
    amp = handle.amplitude_sum
    level = float(level)
    level_tol = LEVEL_TOL_FACTOR * max(amp, 1.0)
    x = _project_to_level(handle, start, level, 0.01 * level_tol)
    t0, gn = _tangent(handle, x, amp)
    if t0 is None:
        raise DegenerateStartError(
            f"start gradient {gn:.3e} below {DEGENERATE_FACTOR:.0e} * amplitude")

    pts = [x.copy()]
    arc = 0.0
    step = STEP_MIN * 10
    tang = t0
    # closure arms only after the trace has clearly left the start's
    # neighborhood, so the first few steps never look like a return
    escape_radius = 5 * step_max
    armed = False
    while arc < max_arc:
        # midpoint predictor
        xm = x + 0.5 * step * tang
        tm, _ = _tangent(handle, xm, amp)
        if tm is None:
            return Orbit(np.asarray(pts), level,
                         Verdict("undetermined", reason="hit a critical region"))
        if tm @ tang < 0:
            tm = -tm
        xn = x + step * tm
        # corrector: pull back onto the level set
        try:
            xn = _project_to_level(handle, xn, level, 0.01 * level_tol, max_iter=8)
        except PlanarError:
            return Orbit(np.asarray(pts), level,
                         Verdict("undetermined", reason="corrector lost the level set"))
        tn, _ = _tangent(handle, xn, amp)
        if tn is None:
            return Orbit(np.asarray(pts), level,
                         Verdict("undetermined", reason="hit a critical region"))
        if tn @ tm < 0:
            tn = -tn
        # curvature-adaptive step: aim for ~0.2 rad of turning per step
        turn = math.acos(min(1.0, max(-1.0, float(tn @ tang))))
        arc += step
        step = min(step_max, max(STEP_MIN, step * (0.2 / max(turn, 1e-3)) ** 0.5))
        x, tang = xn, tn
        pts.append(x.copy())
        if _closure:
            d = x - pts[0]
            d2 = float(d @ d)
            if not armed:
                armed = d2 > escape_radius ** 2
            elif d2 < (2 * step) ** 2 and float(tang @ t0) > math.cos(math.radians(10)):
                return Orbit(np.asarray(pts), level, Verdict("closed"))
    return _classify_open(np.asarray(pts), level, amp)


def _classify_open(pts, level, amp) -> Orbit:
    """Fit a drift line over the last half; apply the finite-strip test."""
    n = len(pts)
    if n < 16:
        return Orbit(pts, level, Verdict("undetermined", reason="trace too short"))
    tail = pts[n // 2:]
    d = tail[-1] - tail[0]
    span = float(np.hypot(d[0], d[1]))
    if span < 1.0:
        return Orbit(pts, level,
                     Verdict("undetermined", reason="no net drift at budget end"))
    # least-squares direction: principal axis of the tail
    c = tail - tail.mean(axis=0)
    cov = c.T @ c
    w, v = np.linalg.eigh(cov)
    direction = v[:, int(np.argmax(w))]
    if direction @ d < 0:
        direction = -direction
    normal = np.array([-direction[1], direction[0]])
    dev = (pts - pts[0]) @ normal
    width = float(dev.max() - dev.min())
    if width > 3.0:
        return Orbit(pts, level,
                     Verdict("undetermined",
                             reason=f"transverse spread {width:.2f} exceeds 3 periods"))
    running = np.maximum.accumulate(np.abs(dev - dev.mean()))
    third = running[2 * n // 3]
    if running[-1] > third + 0.5:
        return Orbit(pts, level,
                     Verdict("undetermined", reason="strip still widening at budget end"))
    return Orbit(pts, level,
                 Verdict("open", tuple(float(x) for x in direction), width))


@dataclass
class ChaosProbeReport:
    arc_lengths: list
    spreads: list
    exponent: float
    start: tuple

    def __post_init__(self):
        assert all(s >= 0 for s in self.spreads)
        assert all(b >= a for a, b in zip(self.spreads, self.spreads[1:]))


def chaos_probe(handle: PlanarField, level: float, starts, arc_budgets) -> ChaosProbeReport:
    """Transverse spread growth of the longest non-closed trace.

    Each start is traced once to the largest budget with closure detection
    off; the trace of greatest arc length is measured: for every budget the
    running maximum transverse deviation from the trace's own drift line,
    and the log-log growth exponent of spread versus arc length.  This is a
    report, not a verdict: no finite trace can certify chaotic wandering.
    """
    budgets = sorted(float(b) for b in arc_budgets)
    if len(budgets) < 2:
        raise PlanarError("need at least two arc budgets")
    best = None
    degenerate = 0
    for s in starts:
        try:
            orbit = trace_orbit(handle, level, s, max_arc=budgets[-1], _closure=False)
        except DegenerateStartError:
            degenerate += 1
            continue
        if best is None or orbit.arc_length > best.arc_length:
            best = orbit
    if best is None:
        raise PlanarError(f"all {degenerate} starts were degenerate")
    pts = best.points
    seg = np.sqrt((np.diff(pts, axis=0) ** 2).sum(axis=1))
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    d = pts[-1] - pts[0]
    nd = float(np.hypot(d[0], d[1]))
    if nd > 1e-9:
        direction = d / nd
    else:
        direction = np.array([1.0, 0.0])
    normal = np.array([-direction[1], direction[0]])
    dev = np.abs((pts - pts[0]) @ normal)
    running = np.maximum.accumulate(dev)
    spreads = []
    for b in budgets:
        i = int(np.searchsorted(arc, min(b, arc[-1])))
        i = min(max(i, 1), len(running) - 1)
        spreads.append(float(running[i]))
    logs = np.log(np.maximum(spreads, 1e-12))
    logb = np.log(budgets)
    exponent = float(np.polyfit(logb, logs, 1)[0]) if len(set(spreads)) > 1 else 0.0
    return ChaosProbeReport(budgets, spreads, exponent,
                            tuple(float(x) for x in pts[0]))
