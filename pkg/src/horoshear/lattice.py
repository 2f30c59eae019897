"""The compact quotient M = Gamma \\ SL(2, R).

A :class:`FuchsianGroupModel` carries a symmetric generating set of a
co-compact Fuchsian group.  Points of M are coset representatives reduced into
the Dirichlet domain centered at ``center`` by greedy descent: apply any
generator that strictly brings the image of i closer to the center.

The default group is the genus-two Bolza surface group, generated by the
conjugates R^k T R^-k (k = 0..3) and their inverses of the hyperbolic element
T = [[1 + sqrt 2, sqrt(2 + 2 sqrt 2)], [sqrt(2 + 2 sqrt 2), 1 + sqrt 2]], with R
the rotation by pi/4 about i.  Its Dirichlet domain at i is the regular
octagon with interior angles pi/4 and hyperbolic area 4 pi.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from decimal import Decimal
from functools import cached_property
from pathlib import Path

import numpy as np

from . import _kernels
from .lie import AlgebraVector, check_unimodular, exp_algebra, inverse

MAX_ITER = 10_000
DISCRETENESS_TOL = 1e-3


class ReductionError(RuntimeError):
    """Greedy reduction did not terminate within the iteration cap."""


class SamplingError(RuntimeError):
    """Rejection sampling accepted too small a fraction of candidates."""


class LatticeError(ValueError):
    """The generator set failed a determinant, closure or discreteness check."""


def rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])


def translation_to(z: complex) -> np.ndarray:
    """The element n(x) a(y) sending i to z = x + iy."""
    y = z.imag
    if y <= 0:
        raise ValueError("point must lie in the upper half-plane")
    r = math.sqrt(y)
    return np.array([[r, z.real / r], [0.0, 1.0 / r]])


def mobius(g: np.ndarray, z: complex) -> complex:
    """(az + b) / (cz + d)."""
    den = g[1, 0] * z + g[1, 1]
    if abs(den) < 1e-30:
        raise ValueError("Mobius transformation is numerically singular at z")
    return (g[0, 0] * z + g[0, 1]) / den


def hyp_dist(z: complex, w: complex) -> float:
    """Hyperbolic distance in the upper half-plane."""
    if z.imag <= 0 or w.imag <= 0:
        raise ValueError("points must lie in the upper half-plane")
    # cosh d - 1 = |z - w|^2 / (2 Im z Im w); asinh form keeps precision near 0
    return 2.0 * math.asinh(abs(z - w) / (2.0 * math.sqrt(z.imag * w.imag)))


def center_distance(g: np.ndarray) -> float:
    """dist(g.i, i), computed from the matrix entries."""
    return float(_kernels.center_distance(g[0, 0], g[0, 1], g[1, 0], g[1, 1]))


@dataclass(frozen=True)
class Bounding:
    """Region containing the Dirichlet domain, used for rejection sampling.

    ``kind="disk"`` is the hyperbolic disk of ``radius`` about the center;
    ``kind="box"`` is the half-plane rectangle ``box = (x0, x1, y0, y1)``.
    """

    kind: str = "disk"
    radius: float = 2.46
    box: tuple[float, float, float, float] | None = None

    def area(self) -> float:
        if self.kind == "disk":
            return 2 * math.pi * (math.cosh(self.radius) - 1)
        x0, x1, y0, y1 = self.box
        return (x1 - x0) * (1 / y0 - 1 / y1)

    def max_distance(self, center: complex) -> float:
        """Largest distance from ``center`` to a point of the region."""
        if self.kind == "disk":
            return self.radius
        x0, x1, y0, y1 = self.box
        return max(hyp_dist(complex(x, y), center) for x in (x0, x1) for y in (y0, y1))


@dataclass(frozen=True)
class FuchsianGroupModel:
    generators: np.ndarray
    center: complex = 1j
    label: str = "custom"
    bounding: Bounding = field(default_factory=Bounding)
    area: float | None = None
    max_iter: int = MAX_ITER

    def __post_init__(self):
        gens = np.array(self.generators, dtype=float)
        if gens.ndim != 3 or gens.shape[1:] != (2, 2):
            raise LatticeError("generators must be an array of 2x2 matrices")
        object.__setattr__(self, "generators", gens)

    @cached_property
    def _frame(self) -> np.ndarray:
        return translation_to(self.center)

    @cached_property
    def _kernel_generators(self) -> np.ndarray:
        # conjugate so that the kernels can always measure distances to i
        m = self._frame
        mi = inverse(m)
        return np.ascontiguousarray(np.array([mi @ g @ m for g in self.generators]))

    @property
    def genus_area(self) -> float:
        if self.area is None:
            raise LatticeError("surface area unknown for this group; set `area`")
        return self.area

    @property
    def volume(self) -> float:
        """Haar volume of M with the normalization dx dy dtheta / y**2."""
        return 2 * math.pi * self.genus_area

    @property
    def domain_radius(self) -> float:
        return self.bounding.max_distance(self.center)

    def validate(self, probe_length: int = 4) -> float:
        """Check determinants, inverse closure and discreteness.

        Returns the smallest displacement of the center by a non-identity
        element of the word ball of the given length.
        """
        for k, g in enumerate(self.generators):
            try:
                check_unimodular(g)
            except ValueError as exc:
                raise LatticeError(f"generator {k}: {exc}") from None
        for k, g in enumerate(self.generators):
            gi = inverse(g)
            if not any(np.abs(gi - h).max() < 1e-9 for h in self.generators):
                raise LatticeError(f"generator {k} has no inverse in the generating set")
        shortest = discreteness_probe(self, probe_length)
        if shortest < DISCRETENESS_TOL:
            raise LatticeError(f"non-identity element moves the center by only {shortest:.3g}")
        return shortest

    def to_json(self) -> dict:
        return {
            "label": self.label,
            "generators": [[[repr(float(e)) for e in row] for row in g] for g in self.generators],
            "center": [repr(self.center.real), repr(self.center.imag)],
            "bounding": _bounding_to_json(self.bounding),
            "area": self.area,
        }


def _bounding_to_json(b: Bounding) -> dict:
    if b.kind == "disk":
        return {"kind": "disk", "radius": b.radius}
    return {"kind": "box", "box": list(b.box)}


def group_from_json(data: dict) -> FuchsianGroupModel:
    """Build a group from the JSON schema; matrix entries may be decimal strings."""
    gens = np.array([[[float(Decimal(str(e))) for e in row] for row in g]
                     for g in data["generators"]])
    cx, cy = data.get("center", ["0", "1"])
    center = complex(float(Decimal(str(cx))), float(Decimal(str(cy))))
    b = data.get("bounding", {"kind": "disk", "radius": 2.46})
    if b["kind"] == "disk":
        bounding = Bounding("disk", float(b["radius"]))
    elif b["kind"] == "box":
        bounding = Bounding("box", box=tuple(float(e) for e in b["box"]))
    else:
        raise LatticeError(f"unknown bounding kind {b['kind']!r}")
    return FuchsianGroupModel(gens, center=center, label=data.get("label", "custom"),
                              bounding=bounding, area=data.get("area"))


def load_group(path: str | Path) -> FuchsianGroupModel:
    with open(path) as fh:
        return group_from_json(json.load(fh))


def bolza_generators() -> np.ndarray:
    r2 = math.sqrt(2.0)
    T = np.array([[1 + r2, math.sqrt(2 + 2 * r2)], [math.sqrt(2 + 2 * r2), 1 + r2]])
    gens = []
    for k in range(4):
        Rk = rotation(k * math.pi / 8)
        gens.append(Rk @ T @ inverse(Rk))
    return np.array(gens + [inverse(g) for g in gens])


def bolza_group() -> FuchsianGroupModel:
    """Genus-two Bolza group; octagon circumradius is acosh(3 + 2 sqrt 2) ~ 2.4485."""
    return FuchsianGroupModel(bolza_generators(), center=1j, label="bolza",
                              bounding=Bounding("disk", 2.46), area=4 * math.pi)


# ---------------------------------------------------------------------------
# word balls

def word_ball(group: FuchsianGroupModel, length: int) -> np.ndarray:
    """Distinct group elements of word length <= ``length`` (identity first)."""
    elements = [np.eye(2)]
    keys = {_key(np.eye(2))}
    frontier = [np.eye(2)]
    for _ in range(length):
        nxt = []
        for g in frontier:
            for h in group.generators:
                e = h @ g
                k = _key(e)
                if k not in keys:
                    keys.add(k)
                    elements.append(e)
                    nxt.append(e)
        frontier = nxt
    return np.array(elements)


def _key(g: np.ndarray) -> tuple:
    return tuple(np.round(g.ravel(), 6))


def discreteness_probe(group: FuchsianGroupModel, length: int = 4) -> float:
    m = translation_to(group.center)
    mi = inverse(m)
    best = math.inf
    for g in word_ball(group, length)[1:]:
        if np.abs(g - np.eye(2)).max() < 1e-9:
            continue
        best = min(best, center_distance(mi @ g @ m))
    return best


# ---------------------------------------------------------------------------
# points of M

@dataclass(frozen=True)
class QuotientPoint:
    """A reduced coset representative; ``word`` lists generator indices applied."""

    rep: np.ndarray
    word: tuple[int, ...] = ()

    def center_image(self) -> complex:
        return mobius(self.rep, 1j)


def _dist_to_center(g: np.ndarray, m_inv: np.ndarray) -> float:
    return center_distance(m_inv @ g)


def reduce(g: np.ndarray, group: FuchsianGroupModel) -> QuotientPoint:
    """Greedy descent into the Dirichlet domain, recording the word used."""
    check_unimodular(g)
    m_inv = inverse(translation_to(group.center))
    rep = np.array(g, dtype=float)
    word = []
    dist = _dist_to_center(rep, m_inv)
    for _ in range(group.max_iter):
        cands = [_dist_to_center(h @ rep, m_inv) for h in group.generators]
        k = int(np.argmin(cands))
        if not cands[k] < dist - _kernels.REDUCE_TOL:
            return QuotientPoint(rep, tuple(word))
        rep = group.generators[k] @ rep
        dist = cands[k]
        word.append(k)
    raise ReductionError(f"reduction exceeded {group.max_iter} iterations")


def reduce_many(mats: np.ndarray, group: FuchsianGroupModel) -> np.ndarray:
    """Vectorized :func:`reduce` returning only the representatives."""
    m = group._frame
    mi = inverse(m)
    conj = np.einsum("ij,njk->nik", mi, np.asarray(mats, dtype=float))
    out, steps = _kernels.reduce_many(np.ascontiguousarray(conj), group._kernel_generators,
                                      group.max_iter)
    if (steps < 0).any():
        raise ReductionError(f"reduction exceeded {group.max_iter} iterations")
    return np.einsum("ij,njk->nik", m, out)


def dirichlet_margin(rep: np.ndarray, group: FuchsianGroupModel, elements=None) -> float:
    """min over elements gamma of dist(gamma rep.i, c) - dist(rep.i, c).

    Non-negative (up to round-off) exactly when rep satisfies the Dirichlet
    condition against ``elements`` (default: the generators).
    """
    m_inv = inverse(translation_to(group.center))
    if elements is None:
        elements = group.generators
    d0 = _dist_to_center(rep, m_inv)
    return min(_dist_to_center(g @ rep, m_inv) - d0 for g in elements
               if np.abs(g - np.eye(2)).max() > 1e-9)


def coset_distance(p: QuotientPoint, q: QuotientPoint, group: FuchsianGroupModel) -> float:
    """Entrywise distance between representatives, modulo one generator step.

    Points on a domain wall have two valid representatives related by a
    generator; comparing against those keeps the check well defined there.
    """
    best = np.abs(p.rep - q.rep).max()
    for h in group.generators:
        best = min(best, np.abs(p.rep - h @ q.rep).max())
    return float(best)


def flow_step(W: AlgebraVector, max_displacement: float = 1.0) -> float:
    """Largest power-of-two step tau <= 1 with dist(exp(tau W) i, i) <= max_displacement."""
    tau = 1.0
    while center_distance(exp_algebra(W, tau)) > max_displacement or \
            center_distance(exp_algebra(W, -tau)) > max_displacement:
        tau /= 2
    return tau


def quotient_flow(p: QuotientPoint, W: AlgebraVector, t: float,
                  group: FuchsianGroupModel) -> QuotientPoint:
    """The homogeneous flow p -> p exp(tW) on M, reduced after every bounded step."""
    if t == 0:
        return p
    tau = flow_step(W)
    n = max(1, math.ceil(abs(t) / tau))
    step = exp_algebra(W, t / n)
    rep = p.rep
    word = list(p.word)
    for _ in range(n):
        q = reduce(rep @ step, group)
        rep = q.rep
        word.extend(q.word)
    return QuotientPoint(rep, tuple(word))


# ---------------------------------------------------------------------------
# Haar measure

def _candidates(group: FuchsianGroupModel, rng: np.random.Generator, n: int) -> np.ndarray:
    b = group.bounding
    theta = rng.random(n) * 2 * math.pi
    if b.kind == "disk":
        u, phi = rng.random(n), rng.random(n) * 2 * math.pi
        r = np.arccosh(1 + u * (math.cosh(b.radius) - 1))
        e = np.exp(r / 2)
        # k(phi/2) a(r) k(theta): a point at distance r in direction phi, frame theta
        cp, sp = np.cos(phi / 2), np.sin(phi / 2)
        a0, b0, c0, d0 = cp * e, -sp / e, sp * e, cp / e
    else:
        x0, x1, y0, y1 = b.box
        x = x0 + (x1 - x0) * rng.random(n)
        y = 1 / (1 / y1 + (1 / y0 - 1 / y1) * rng.random(n))
        ry = np.sqrt(y)
        a0, b0, c0, d0 = ry, x / ry, np.zeros(n), 1 / ry
    ct, st = np.cos(theta), np.sin(theta)
    mats = np.empty((n, 2, 2))
    mats[:, 0, 0] = a0 * ct + b0 * st
    mats[:, 0, 1] = -a0 * st + b0 * ct
    mats[:, 1, 0] = c0 * ct + d0 * st
    mats[:, 1, 1] = -c0 * st + d0 * ct
    if b.kind == "disk":
        mats = np.einsum("ij,njk->nik", group._frame, mats)
    return mats


def in_domain(mats: np.ndarray, group: FuchsianGroupModel) -> np.ndarray:
    """True where no generator brings the center image strictly closer to the center."""
    mi = inverse(group._frame)
    conj = np.einsum("ij,njk->nik", mi, mats)
    d0 = _dist_batch(conj)
    ok = np.ones(len(mats), dtype=bool)
    for h in group._kernel_generators:
        ok &= _dist_batch(np.einsum("ij,njk->nik", h, conj)) >= d0 - _kernels.REDUCE_TOL
    return ok


def _dist_batch(m: np.ndarray) -> np.ndarray:
    q = (m[:, 0, 0] - m[:, 1, 1]) ** 2 + (m[:, 0, 1] + m[:, 1, 0]) ** 2
    return 2 * np.arcsinh(0.5 * np.sqrt(q))


def haar_sample_many(group: FuchsianGroupModel, rng: np.random.Generator, n: int,
                     batch: int = 200_000, min_acceptance: float = 0.01) -> np.ndarray:
    """``n`` representatives distributed by normalized Haar measure on M."""
    out = []
    have = 0
    tried = accepted = 0
    while have < n:
        m = min(batch, max(1024, 3 * (n - have)))
        mats = _candidates(group, rng, m)
        ok = in_domain(mats, group)
        tried += m
        accepted += int(ok.sum())
        if tried >= 10_000 and accepted < min_acceptance * tried:
            raise SamplingError(f"acceptance rate {accepted / tried:.4f} below floor "
                                f"{min_acceptance}; bounding region is likely wrong")
        out.append(mats[ok])
        have += int(ok.sum())
    return np.concatenate(out)[:n]


def haar_sample(group: FuchsianGroupModel, rng: np.random.Generator) -> QuotientPoint:
    return QuotientPoint(haar_sample_many(group, rng, 1, batch=1024)[0])


def domain_area_estimate(group: FuchsianGroupModel, rng: np.random.Generator,
                         n: int = 1_000_000, batch: int = 200_000) -> tuple[float, float]:
    """Hyperbolic area of the Dirichlet domain by rejection, with standard error."""
    hits = 0
    done = 0
    while done < n:
        m = min(batch, n - done)
        hits += int(in_domain(_candidates(group, rng, m), group).sum())
        done += m
    frac = hits / n
    area = group.bounding.area()
    return frac * area, area * math.sqrt(frac * (1 - frac) / n)


def frame_angle(g: np.ndarray) -> float:
    """theta in the Iwasawa decomposition g = n(x) a(y) k(theta), in [0, 2 pi)."""
    # bottom row of n a k(theta) is (1/sqrt y)(sin theta, cos theta)
    return math.atan2(g[1, 0], g[1, 1]) % (2 * math.pi)
