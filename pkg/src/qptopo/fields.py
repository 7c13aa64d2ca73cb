"""Periodic scalar fields given as finite Fourier (cosine) series.

All fields live on the unit torus T^n = R^n / Z^n, n in {2, 3, 4}: each term
is ``amplitude * cos(2*pi*<freq, x> + phase)`` with an integer frequency
vector, so evaluation is exactly invariant under integer translations.
Keeping the representation closed under products, restrictions and circle
averages is what makes the rest of the pipeline (meshing, tracing,
averaging) possible without ever sampling an opaque callable.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

TWO_PI = 2.0 * math.pi


class FieldError(ValueError):
    """Malformed field data or arguments inconsistent with a field."""


class ParseError(FieldError):
    """Model file could not be parsed; carries a 1-based line number."""

    def __init__(self, message, lineno=None):
        self.lineno = lineno
        if lineno is not None:
            message = f"line {lineno}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class FourierTerm:
    """One cosine term: amplitude * cos(2*pi*<frequency, x> + phase)."""

    frequency: tuple[int, ...]
    amplitude: float
    phase: float = 0.0

    def __post_init__(self):
        if not all(isinstance(f, int) for f in self.frequency):
            raise FieldError(f"frequency must be integer, got {self.frequency}")
        if not math.isfinite(self.amplitude):
            raise FieldError("amplitude must be finite")
        # normalize the phase into [0, 2*pi)
        object.__setattr__(self, "phase", float(self.phase) % TWO_PI)
        object.__setattr__(self, "amplitude", float(self.amplitude))
        object.__setattr__(self, "frequency", tuple(int(f) for f in self.frequency))


@dataclass(frozen=True)
class PeriodicField:
    """A real trigonometric polynomial on T^n (n = 2, 3 or 4)."""

    dimension: int
    terms: tuple[FourierTerm, ...]
    name: str = ""

    def __post_init__(self):
        if self.dimension not in (2, 3, 4):
            raise FieldError(f"dimension must be 2, 3 or 4, got {self.dimension}")
        terms = tuple(self.terms)
        for t in terms:
            if len(t.frequency) != self.dimension:
                raise FieldError(
                    f"term frequency {t.frequency} does not match dimension {self.dimension}"
                )
        object.__setattr__(self, "terms", terms)

    @property
    def amplitude_sum(self) -> float:
        """Upper bound for |F|: the sum of |amplitude| over all terms."""
        return sum(abs(t.amplitude) for t in self.terms)

    def __call__(self, point):
        return evaluate(self, point)


def evaluate(field: PeriodicField, point) -> float:
    """Evaluate the field at a point (exactly 1-periodic in each coordinate)."""
    p = np.asarray(point, dtype=float)
    if p.shape != (field.dimension,):
        raise FieldError(
            f"point has shape {p.shape}, field dimension is {field.dimension}"
        )
    total = 0.0
    for t in field.terms:
        total += t.amplitude * math.cos(TWO_PI * float(np.dot(t.frequency, p)) + t.phase)
    return total


def gradient(field: PeriodicField, point) -> np.ndarray:
    """Term-wise analytic gradient of the field at a point."""
    p = np.asarray(point, dtype=float)
    if p.shape != (field.dimension,):
        raise FieldError(
            f"point has shape {p.shape}, field dimension is {field.dimension}"
        )
    g = np.zeros(field.dimension)
    for t in field.terms:
        s = -t.amplitude * TWO_PI * math.sin(TWO_PI * float(np.dot(t.frequency, p)) + t.phase)
        g += s * np.asarray(t.frequency, dtype=float)
    return g


def evaluate_grid(field: PeriodicField, resolution: int) -> np.ndarray:
    """Sample a 3d field on the uniform N^3 grid over the fundamental cell.

    Grid point (i, j, k) is (i, j, k) / N; index N wraps to 0, so the array
    already contains everything needed for periodic meshing.
    """
    if field.dimension != 3:
        raise FieldError("grid sampling is implemented for 3d fields only")
    ax = np.arange(resolution) / resolution
    x, y, z = np.meshgrid(ax, ax, ax, indexing="ij")
    out = np.zeros((resolution,) * 3)
    for t in field.terms:
        f1, f2, f3 = t.frequency
        out += t.amplitude * np.cos(TWO_PI * (f1 * x + f2 * y + f3 * z) + t.phase)
    return out


# ---------------------------------------------------------------------------
# model registry and file format
# ---------------------------------------------------------------------------

def _c3() -> PeriodicField:
    terms = tuple(
        FourierTerm(tuple(int(i == k) for i in range(3)), 1.0) for k in range(3)
    )
    return PeriodicField(3, terms, name="c3")


def _d4() -> PeriodicField:
    # cos A cos B = (cos(A - B) + cos(A + B)) / 2 applied to the three
    # pairwise products of coordinate cosines.
    freqs = [(1, -1, 0), (1, 1, 0), (0, 1, -1), (0, 1, 1), (-1, 0, 1), (1, 0, 1)]
    terms = tuple(FourierTerm(f, 0.5) for f in freqs)
    return PeriodicField(3, terms, name="d4")


_BUILTINS = {"c3": _c3, "d4": _d4}
_EXTRA_MODELS: dict[str, PeriodicField] = {}


def register_model(name: str, field: PeriodicField) -> None:
    """Register a user-supplied field under a name (overrides nothing builtin)."""
    if name in _BUILTINS:
        raise FieldError(f"cannot override builtin model {name!r}")
    _EXTRA_MODELS[name] = field


def available_models() -> list[str]:
    return sorted(_BUILTINS) + sorted(_EXTRA_MODELS)


def builtin_model(name: str) -> PeriodicField:
    if name in _BUILTINS:
        return _BUILTINS[name]()
    if name in _EXTRA_MODELS:
        return _EXTRA_MODELS[name]
    raise KeyError(
        f"unknown model {name!r}; available: {', '.join(available_models())}"
    )


_DIM_RE = re.compile(r"^\s*dim\s*=\s*(\d+)\s*$")
_INT_RE = re.compile(r"^[+-]?\d+$")


def _looks_like_int(token: str) -> bool:
    return _INT_RE.match(token) is not None


def parse_model(text: str, name: str = "") -> PeriodicField:
    """Parse the model file format.

    One term per line: ``m1 m2 m3  amplitude  phase`` (parentheses and commas
    around the frequency tolerated), ``#`` comments, and a ``dim = n`` header
    line. An empty term list gives the constant-zero field.
    """
    dim = None
    terms = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = _DIM_RE.match(line)
        if m:
            if dim is not None:
                raise ParseError("duplicate dim header", lineno)
            dim = int(m.group(1))
            if dim not in (2, 3, 4):
                raise ParseError(f"dim must be 2, 3 or 4, got {dim}", lineno)
            continue
        tokens = line.replace("(", " ").replace(")", " ").replace(",", " ").split()
        if len(tokens) < 3:
            raise ParseError(f"expected 'm1 .. mn amplitude [phase]', got {line!r}", lineno)
        if dim is not None:
            nfreq = dim
        else:
            # no dim header yet: frequency components are the maximal run of
            # integer-looking tokens, leaving at least the amplitude.  When
            # every token looks like an integer the last one is read as the
            # amplitude (no phase).
            nfreq = 0
            while nfreq < len(tokens) - 1 and _looks_like_int(tokens[nfreq]):
                nfreq += 1
        if len(tokens) - nfreq not in (1, 2):
            raise ParseError(f"expected 'm1 .. mn amplitude [phase]', got {line!r}", lineno)
        freq_tokens, tail = tokens[:nfreq], tokens[nfreq:]
        try:
            amplitude = float(tail[0])
            phase = float(tail[1]) if len(tail) == 2 else 0.0
        except ValueError:
            raise ParseError(f"bad amplitude or phase in {line!r}", lineno) from None
        freq = []
        for tok in freq_tokens:
            try:
                f = int(tok)
            except ValueError:
                raise ParseError(f"non-integer frequency component {tok!r}", lineno) from None
            freq.append(f)
        if dim is None:
            dim = len(freq)
            if dim not in (2, 3, 4):
                raise ParseError(f"frequency vector of length {dim} unsupported", lineno)
        if len(freq) != dim:
            raise ParseError(
                f"frequency {tuple(freq)} has {len(freq)} components, expected {dim}", lineno
            )
        try:
            terms.append(FourierTerm(tuple(freq), amplitude, phase))
        except FieldError as exc:
            raise ParseError(str(exc), lineno) from None
    if dim is None:
        dim = 3
    return PeriodicField(dim, tuple(terms), name=name)


def serialize_model(field: PeriodicField) -> str:
    lines = [f"dim = {field.dimension}"]
    for t in field.terms:
        freq = " ".join(str(f) for f in t.frequency)
        lines.append(f"{freq}  {t.amplitude!r}  {t.phase!r}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# lattices
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LatticeBasis:
    """Direct lattice l1,l2,l3 and its reciprocal a1,a2,a3 (hbar = 1 units)."""

    l1: tuple[float, float, float]
    l2: tuple[float, float, float]
    l3: tuple[float, float, float]
    a1: tuple[float, float, float] = field(default=(0.0, 0.0, 0.0))
    a2: tuple[float, float, float] = field(default=(0.0, 0.0, 0.0))
    a3: tuple[float, float, float] = field(default=(0.0, 0.0, 0.0))


def reciprocal_basis(l1, l2, l3) -> LatticeBasis:
    """Reciprocal lattice basis: a_i = 2*pi (l_j x l_k) / (l1, l2, l3)."""
    l1 = np.asarray(l1, dtype=float)
    l2 = np.asarray(l2, dtype=float)
    l3 = np.asarray(l3, dtype=float)
    volume = float(np.dot(l1, np.cross(l2, l3)))
    if abs(volume) <= 1e-12:
        raise np.linalg.LinAlgError("direct lattice basis is (numerically) degenerate")
    a1 = TWO_PI * np.cross(l2, l3) / volume
    a2 = TWO_PI * np.cross(l3, l1) / volume
    a3 = TWO_PI * np.cross(l1, l2) / volume
    return LatticeBasis(
        tuple(l1), tuple(l2), tuple(l3), tuple(a1), tuple(a2), tuple(a3)
    )


# ---------------------------------------------------------------------------
# cyclotron averaging (2d fields)
# ---------------------------------------------------------------------------

def _circle_average_factor(freq_norm: float, radius: float) -> float:
    """Mean of cos(2*pi*r*|f|*cos(theta)) over the circle, by quadrature.

    This is the factor by which averaging over a circle of the given radius
    scales a cosine term of frequency norm |f|.  Computed by adaptive
    quadrature (not via Bessel routines) so the module stays self-contained.
    """
    if freq_norm == 0.0 or radius == 0.0:
        return 1.0
    w = TWO_PI * radius * freq_norm
    val, _err = quad(lambda th: math.cos(w * math.cos(th)), 0.0, TWO_PI,
                     epsabs=1e-12, epsrel=1e-12, limit=200)
    return val / TWO_PI


def cyclotron_average(field: PeriodicField, radius: float) -> PeriodicField:
    """Average a 2d field over circles of the given radius.

    Acts as a Fourier multiplier: each term keeps its frequency and phase and
    its amplitude is scaled by the circle-average factor, so the result has
    the same quasiperiodic frequency set (possibly with zeroed terms).
    """
    if field.dimension != 2:
        raise FieldError("cyclotron averaging is defined for 2d fields")
    if not math.isfinite(radius) or radius < 0:
        raise FieldError("radius must be finite and >= 0")
    terms = []
    for t in field.terms:
        norm = math.hypot(*t.frequency)
        factor = _circle_average_factor(norm, radius)
        terms.append(FourierTerm(t.frequency, t.amplitude * factor, t.phase))
    return PeriodicField(2, tuple(terms), name=field.name)
