"""Genus-2 surface group acting on the disc, realized by the regular octagon.

Side pairings of the regular hyperbolic octagon (all interior angles pi/4)
give four generators a, b, c, d satisfying the single relator

    a b a^-1 b^-1 c d c^-1 d^-1 = id.

Words are tuples of signed generator indices: +1..+4 for a..d, negatives for
inverses.  The octagon is the Dirichlet domain of the origin for the eight
side-pairing maps, which is what makes greedy fundamental-domain reduction
terminate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .hyperbolic import (
    BoundaryPoint,
    DiscPoint,
    HyperbolicGeodesic,
    MobiusMap,
    angle_gap,
    apply_mobius,
    apply_mobius_polar,
    geodesic_through,
    geodesic_through_points,
    identity_residual,
    project_polar,
)

GroupWord = tuple[int, ...]

GEN_NAMES = {1: "a", -1: "a^-1", 2: "b", -2: "b^-1", 3: "c", -3: "c^-1", 4: "d", -4: "d^-1"}

MAX_BALL_RADIUS = 8


class GroupError(ValueError):
    """Invalid surface-group input."""


class NotHyperbolicError(GroupError):
    """Map has no pair of boundary fixed points (elliptic or identity input)."""


class ReductionError(GroupError):
    """Fundamental-domain reduction failed to terminate."""


def word_name(w: GroupWord) -> str:
    return " ".join(GEN_NAMES[x] for x in w) if w else "id"


def free_reduce(letters) -> GroupWord:
    out: list[int] = []
    for x in letters:
        if out and out[-1] == -x:
            out.pop()
        else:
            out.append(int(x))
    return tuple(out)


def is_reduced(w) -> bool:
    return all(w[i] != -w[i + 1] for i in range(len(w) - 1))


@dataclass(frozen=True)
class GeneratorSet:
    """Octagon side-pairing generators with their inverses and the octagon data."""

    maps: dict
    circumradius: float
    inradius: float
    vertices: tuple
    side_geodesics: tuple
    side_signs: tuple
    relator_residual: float

    def gen(self, idx: int) -> MobiusMap:
        return self.maps[idx]

    @property
    def generators(self) -> list[MobiusMap]:
        return [self.maps[i] for i in (1, 2, 3, 4)]

    def all_maps(self) -> list[tuple[int, MobiusMap]]:
        return [(i, self.maps[i]) for i in self.signed_indices()]

    def gen_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """(a, b) coefficient arrays for the eight maps, in signed_indices order."""
        ms = [m for _, m in self.all_maps()]
        return np.array([m.a for m in ms]), np.array([m.b for m in ms])

    @staticmethod
    def signed_indices() -> tuple[int, ...]:
        return (1, -1, 2, -2, 3, -3, 4, -4)

    def contains_in_domain(self, theta, rho, tol: float = 1e-9):
        """Vectorized closed-octagon membership via the 8 side half-planes."""
        theta = np.asarray(theta, dtype=float)
        inside = np.ones(theta.shape, dtype=bool)
        for geo, sign in zip(self.side_geodesics, self.side_signs):
            _, n = project_polar(geo, theta, rho)
            inside &= sign * n >= -tol
        return inside


def _pair_map(p: DiscPoint, q: DiscPoint, p2: DiscPoint, q2: DiscPoint) -> MobiusMap:
    """Unique orientation-preserving isometry with p -> p2 and q -> q2."""

    def align(u: DiscPoint, v: DiscPoint) -> MobiusMap:
        t = MobiusMap.translation_to_origin(u)
        w = apply_mobius(t, v)
        return MobiusMap.rotation(-w.theta).compose(t)

    return align(p2, q2).inverse().compose(align(p, q))


def build_octagon_group() -> GeneratorSet:
    """Side-pairing generators of the regular octagon with vertex angles pi/4.

    Boundary edges e_k join vertex k to k+1 (ccw); the pairing identifies
    e_{k+2} (reversed) with e_k within each half of the octagon.  Taking the
    inverses of the b and d pairings turns the vertex-cycle relation into the
    canonical relator a b a^-1 b^-1 c d c^-1 d^-1 = id, verified numerically.
    """
    r_circ = math.acosh(3.0 + 2.0 * math.sqrt(2.0))  # cosh R = cot^2(pi/8)
    verts = tuple(DiscPoint(math.pi * k / 4.0, r_circ) for k in range(8))

    def v(k):
        return verts[k % 8]

    a = _pair_map(v(3), v(2), v(0), v(1))
    b = _pair_map(v(4), v(3), v(1), v(2)).inverse()
    c = _pair_map(v(7), v(6), v(4), v(5))
    d = _pair_map(v(0), v(7), v(5), v(6)).inverse()

    maps = {1: a, -1: a.inverse(), 2: b, -2: b.inverse(), 3: c, -3: c.inverse(), 4: d, -4: d.inverse()}

    rel = MobiusMap.identity()
    for idx in (1, 2, -1, -2, 3, 4, -3, -4):
        rel = rel.compose(maps[idx])
    residual = identity_residual(rel)
    if residual > 1e-9:
        raise GroupError(f"octagon construction failed: relator residual {residual}")

    sides = tuple(geodesic_through_points(v(k), v(k + 1)) for k in range(8))
    signs = []
    for geo in sides:
        _, n = project_polar(geo, 0.0, 0.0)
        signs.append(1.0 if float(n) >= 0 else -1.0)
    r_in = math.atanh(math.tanh(r_circ) * math.cos(math.pi / 8.0))
    return GeneratorSet(
        maps=maps,
        circumradius=r_circ,
        inradius=r_in,
        vertices=verts,
        side_geodesics=sides,
        side_signs=tuple(signs),
        relator_residual=residual,
    )


def evaluate_word(w: GroupWord, gens: GeneratorSet) -> MobiusMap:
    """Composition with w[0] outermost, so evaluate(uv) = evaluate(u) o evaluate(v)."""
    if not is_reduced(w):
        raise GroupError(f"word {w} is not freely reduced")
    m = MobiusMap.identity()
    for idx in w:
        m = m.compose(gens.gen(idx))
    return m


class _DedupIndex:
    """Hash-bucket index of Mobius coefficients modulo sign, tolerance 1e-8."""

    SCALE = 1e6  # bucket width 1e-6 >> dedup tolerance

    def __init__(self):
        self._buckets: dict[tuple, list[tuple[complex, complex]]] = {}

    @staticmethod
    def _canon(a: complex, b: complex) -> tuple[complex, complex]:
        if a.real < 0 or (abs(a.real) < 1e-12 and a.imag < 0):
            return -a, -b
        return a, b

    def add(self, a: complex, b: complex) -> bool:
        """Insert; returns True if the element was new."""
        a, b = self._canon(a, b)
        kr = (a.real * self.SCALE, a.imag * self.SCALE, b.real * self.SCALE, b.imag * self.SCALE)
        key0 = tuple(int(math.floor(x)) for x in kr)
        for da in (0, 1):
            for db in (0, 1):
                for dc in (0, 1):
                    for dd in (0, 1):
                        key = (key0[0] + da, key0[1] + db, key0[2] + dc, key0[3] + dd)
                        for ea, eb in self._buckets.get(key, ()):
                            if abs(ea - a) + abs(eb - b) < 1e-8:
                                return False
        # register in all buckets the point is within tolerance of
        for da in (0, 1):
            for db in (0, 1):
                for dc in (0, 1):
                    for dd in (0, 1):
                        key = (key0[0] + da, key0[1] + db, key0[2] + dc, key0[3] + dd)
                        self._buckets.setdefault(key, []).append((a, b))
        return True


def enumerate_ball(L: int, gens: GeneratorSet) -> list[tuple[GroupWord, MobiusMap]]:
    """All group elements with a representative word of length <= L.

    Freely reduced words are generated breadth-first in shortlex order and
    deduplicated geometrically (matrices equal within 1e-8 modulo sign, which
    at desk scale only happens through the surface-group relator).  The
    shortlex-least representative of each element is kept.
    """
    if L < 0:
        raise GroupError("negative radius")
    if L > MAX_BALL_RADIUS:
        raise GroupError(f"ball radius {L} exceeds desk-scale limit {MAX_BALL_RADIUS}")

    letter_order = gens.signed_indices()
    ga, gb = gens.gen_arrays()

    seen = _DedupIndex()
    seen.add(1.0 + 0j, 0.0j)
    out: list[tuple[GroupWord, MobiusMap]] = [((), MobiusMap.identity())]
    frontier: list[tuple[GroupWord, complex, complex]] = [((), 1.0 + 0j, 0.0j)]
    for _ in range(L):
        new_frontier: list[tuple[GroupWord, complex, complex]] = []
        for w, wa, wb in frontier:
            for pos, idx in enumerate(letter_order):
                if w and w[-1] == -idx:
                    continue
                na = wa * complex(ga[pos]) + wb * complex(gb[pos]).conjugate()
                nb = wa * complex(gb[pos]) + wb * complex(ga[pos]).conjugate()
                nrm = math.sqrt(abs(abs(na) ** 2 - abs(nb) ** 2))
                na, nb = na / nrm, nb / nrm
                if seen.add(na, nb):
                    nw = w + (idx,)
                    new_frontier.append((nw, na, nb))
                    out.append((nw, MobiusMap(na, nb)))
        frontier = new_frontier
    return out


def fixed_points(m: MobiusMap) -> tuple[BoundaryPoint, BoundaryPoint]:
    """(attracting, repelling) boundary fixed points of a hyperbolic map.

    Solves conj(b) z^2 + (conj(a) - a) z - b = 0 on |z| = 1; the attracting
    root is the one where |m'(z)| = |conj(b) z + conj(a)|^-2 exceeds ... is
    the root with |conj(b) z + conj(a)| < 1.
    """
    if m.trace_size() <= 2.0 + 1e-12:
        raise NotHyperbolicError(
            "map is not hyperbolic (elliptic or identity input); "
            "parabolic elements cannot occur in a cocompact torsion-free group"
        )
    if abs(m.b) < 1e-15:
        raise NotHyperbolicError("map fixes the origin; no boundary axis")
    rad = math.sqrt(max(abs(m.b) ** 2 - m.a.imag**2, 0.0))
    roots = [(1j * m.a.imag + rad) / np.conj(m.b), (1j * m.a.imag - rad) / np.conj(m.b)]
    derivs = [abs(np.conj(m.b) * z + np.conj(m.a)) for z in roots]
    i_att = 0 if derivs[0] > derivs[1] else 1  # |m'| = 1/|den|^2 < 1 attracts
    xi_att = BoundaryPoint(float(np.angle(roots[i_att])))
    xi_rep = BoundaryPoint(float(np.angle(roots[1 - i_att])))
    return xi_att, xi_rep


def fixed_angles_batch(a_arr: np.ndarray, b_arr: np.ndarray) -> np.ndarray:
    """Both fixed angles for arrays of hyperbolic maps; shape (n, 2)."""
    rad = np.sqrt(np.maximum(np.abs(b_arr) ** 2 - a_arr.imag**2, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        z1 = (1j * a_arr.imag + rad) / np.conj(b_arr)
        z2 = (1j * a_arr.imag - rad) / np.conj(b_arr)
    return np.stack([np.mod(np.angle(z1), 2 * math.pi), np.mod(np.angle(z2), 2 * math.pi)], axis=1)


@dataclass(frozen=True)
class AxisData:
    """Axis of a hyperbolic element: boundary fixed points and invariant geodesic."""

    word: GroupWord
    xi_attract: BoundaryPoint
    xi_repel: BoundaryPoint
    axis: HyperbolicGeodesic
    translation_length: float
    invariance_residual: float


def axis_of(m: MobiusMap, word: GroupWord = ()) -> AxisData:
    """Invariant geodesic oriented toward the attracting fixed point.

    translation_length = 2 arccosh(|Re a|), the displacement along the axis
    and the minimum of d_g(p, m p) over the disc.
    """
    xi_a, xi_r = fixed_points(m)
    axis = geodesic_through(xi_r, xi_a)
    ell = 2.0 * math.acosh(max(m.trace_size() / 2.0, 1.0))
    ts = np.linspace(-3.0, 3.0, 7)
    th, rho = axis.points_at(ts)
    th2, rho2 = apply_mobius_polar(m.a, m.b, th, rho)
    _, n = project_polar(axis, th2, rho2)
    return AxisData(
        word=word,
        xi_attract=xi_a,
        xi_repel=xi_r,
        axis=axis,
        translation_length=ell,
        invariance_residual=float(np.max(np.abs(n))),
    )


class BallCache:
    """Shared enumeration cache: balls of several radii plus derived arrays."""

    def __init__(self, gens: GeneratorSet):
        self.gens = gens
        self._balls: dict[int, list[tuple[GroupWord, MobiusMap]]] = {}
        self._fixed: dict[int, tuple[list[GroupWord], np.ndarray, np.ndarray]] = {}

    def ball(self, L: int) -> list[tuple[GroupWord, MobiusMap]]:
        if L not in self._balls:
            self._balls[L] = enumerate_ball(L, self.gens)
        return self._balls[L]

    def orbit_of_origin(self, L: int) -> tuple[np.ndarray, np.ndarray]:
        """Polar coordinates of the origin's orbit under the ball of radius L."""
        ball = self.ball(L)
        zs = np.array([m.b / np.conj(m.a) for _, m in ball])
        rho = 2.0 * np.arctanh(np.minimum(np.abs(zs), 1.0 - 1e-16))
        return np.mod(np.angle(zs), 2 * math.pi), rho

    def fixed_angle_table(self, L: int):
        """(words, fixed angles (n,2), hyperbolic mask) for the ball of radius L."""
        if L not in self._fixed:
            ball = self.ball(L)
            words = [w for w, _ in ball]
            a_arr = np.array([m.a for _, m in ball])
            b_arr = np.array([m.b for _, m in ball])
            hyp = (2.0 * np.abs(a_arr.real) > 2.0 + 1e-12) & (np.abs(b_arr) > 1e-15)
            angles = fixed_angles_batch(a_arr, b_arr)
            self._fixed[L] = (words, angles, hyp)
        return self._fixed[L]


def is_fixed_direction(
    xi: BoundaryPoint, L: int, tol: float, gens: GeneratorSet, cache: BallCache | None = None
) -> GroupWord | None:
    """Witness word of length <= L fixing the direction within tol, else None.

    Semi-decision: absence of a witness up to length L does not prove the
    direction lies outside Fix(Gamma); callers use "none at L=6, tol=1e-4"
    as the working notion of a non-fixed test direction.
    """
    words, angles, hyp = (cache or BallCache(gens)).fixed_angle_table(L)
    gaps = np.minimum(angle_gap(angles[:, 0], xi.xi), angle_gap(angles[:, 1], xi.xi))
    hits = np.flatnonzero(hyp & (gaps <= tol))
    best: GroupWord | None = None
    for i in hits:
        w = words[i]
        if w and (best is None or (len(w), w) < (len(best), best)):
            best = w
    return best


def batch_reduce(theta, rho, gens: GeneratorSet, collect_words: bool = False, collect_maps: bool = False):
    """Vectorized greedy reduction of many points into the octagon.

    Returns (theta0, rho0), optionally extended with per-point words and the
    accumulated map coefficients (A, B) with map(point) = reduced point.
    Points already within the in-radius are inside the octagon and are left
    untouched.
    """
    theta = np.array(theta, dtype=float)
    rho = np.array(rho, dtype=float)
    ga, gb = gens.gen_arrays()
    idxs = gens.signed_indices()
    words = [[] for _ in range(theta.size)] if collect_words else None
    if collect_maps:
        acc_a = np.ones(theta.shape, dtype=complex)
        acc_b = np.zeros(theta.shape, dtype=complex)
    limit = int(10 * max(float(np.max(rho, initial=0.0)), 4.0))
    active = rho > gens.inradius - 1e-12
    steps = 0
    while np.any(active):
        if steps > limit:
            raise ReductionError("greedy reduction did not terminate")
        steps += 1
        act_idx = np.flatnonzero(active)
        th_act, rho_act = theta[act_idx], rho[act_idx]
        best_rho = rho_act.copy()
        best_th = th_act.copy()
        best_k = np.full(th_act.shape, -1)
        for k in range(8):
            th_k, rho_k = apply_mobius_polar(ga[k], gb[k], th_act, rho_act)
            better = rho_k < best_rho - 1e-13
            best_rho = np.where(better, rho_k, best_rho)
            best_th = np.where(better, th_k, best_th)
            best_k = np.where(better, k, best_k)
        theta[act_idx] = best_th
        rho[act_idx] = best_rho
        if collect_words:
            for j, k in zip(act_idx, best_k):
                if k >= 0:
                    words[j].append(idxs[int(k)])
        if collect_maps:
            moved = act_idx[best_k >= 0]
            kk = best_k[best_k >= 0]
            # compose the chosen generator onto the accumulated map: W <- g o W
            a_old, b_old = acc_a[moved], acc_b[moved]
            acc_a[moved] = ga[kk] * a_old + gb[kk] * np.conj(b_old)
            acc_b[moved] = ga[kk] * b_old + gb[kk] * np.conj(a_old)
        active[act_idx] = best_k >= 0
    out = [theta, rho]
    if collect_words:
        out.append(words)
    if collect_maps:
        out.extend([acc_a, acc_b])
    return tuple(out)


def reduce_to_domain(p: DiscPoint, gens: GeneratorSet) -> tuple[GroupWord, DiscPoint]:
    """Greedy side-pairing reduction of p into the closed fundamental octagon.

    Returns the accumulated word w with evaluate(w)(p) = p0.  For points
    x_k marching toward a boundary direction, the words returned are the
    positive-sequence diagnostic tau_k.
    """
    if p.rho > 28.0:
        raise ReductionError("reduction requires rho <= R_MAX - 2")
    theta, rho, words = batch_reduce(np.array([p.theta]), np.array([p.rho]), gens, collect_words=True)
    p0 = DiscPoint(float(theta[0]), float(rho[0]))
    if not gens.contains_in_domain(np.array([p0.theta]), np.array([p0.rho]), tol=1e-9)[0]:
        raise ReductionError("reduced point not in the fundamental domain")
    return free_reduce(reversed(words[0])), p0
