"""Exact enumeration over the four-node model C -> Y -> X <- Z.

All probabilities are :class:`fractions.Fraction`, so conditional independence
is checked by exact equality.
"""

import itertools
from dataclasses import dataclass
from fractions import Fraction

from .errors import DomainError

VARIABLES = ("C", "Z", "Y", "X")


class ValidationError(DomainError):
    pass


@dataclass
class DiscreteJoint:
    p_c: dict  # c -> P(C=c)
    p_z: dict  # z -> P(Z=z)
    p_y_given_c: dict  # c -> {y: P(Y=y | C=c)}
    p_x_given_yz: dict  # (y, z) -> {x: P(X=x | Y=y, Z=z)}

    def supports(self):
        ys = sorted({y for row in self.p_y_given_c.values() for y in row})
        xs = sorted({x for row in self.p_x_given_yz.values() for x in row})
        return {"C": sorted(self.p_c), "Z": sorted(self.p_z), "Y": ys, "X": xs}

    def validate(self):
        _check_row(self.p_c, "P(C)")
        _check_row(self.p_z, "P(Z)")
        for c in self.p_c:
            if c not in self.p_y_given_c:
                raise ValidationError(f"P(Y|C={c}) missing")
            _check_row(self.p_y_given_c[c], f"P(Y|C={c})")
        ys = self.supports()["Y"]
        for y, z in itertools.product(ys, self.p_z):
            if (y, z) not in self.p_x_given_yz:
                raise ValidationError(f"P(X|Y={y},Z={z}) missing")
            _check_row(self.p_x_given_yz[(y, z)], f"P(X|Y={y},Z={z})")
        return self


def _check_row(row, name):
    for v in row.values():
        if not isinstance(v, (Fraction, int)):
            raise ValidationError(f"{name}: probabilities must be exact rationals, got {type(v).__name__}")
        if v < 0 or v > 1:
            raise ValidationError(f"{name}: probability {v} outside [0, 1]")
    if sum(row.values(), Fraction(0)) != 1:
        raise ValidationError(f"{name} sums to {sum(row.values(), Fraction(0))}, not 1")


def from_masks(p_c, p_z, y_of_c, masks):
    """Build the joint for a deterministic C -> Y map and uniform mask choice.

    ``masks[z]`` lists the masks available when Z = z; each mask is a dict
    sending a clean image y to the observed image x.
    """
    p_y = {c: {y_of_c[c]: Fraction(1)} for c in p_c}
    p_x = {}
    for z, options in masks.items():
        for y in set(y_of_c.values()):
            row = {}
            for mask in options:
                row[mask[y]] = row.get(mask[y], Fraction(0)) + Fraction(1, len(options))
            p_x[(y, z)] = row
    return DiscreteJoint(dict(p_c), dict(p_z), p_y, p_x).validate()


def joint(dj):
    """{(c, z, y, x): P} over the positive-probability assignments."""
    dj.validate()
    table = {}
    for c, pc in dj.p_c.items():
        for z, pz in dj.p_z.items():
            for y, py in dj.p_y_given_c[c].items():
                for x, px in dj.p_x_given_yz[(y, z)].items():
                    p = Fraction(pc) * pz * py * px
                    if p:
                        key = (c, z, y, x)
                        table[key] = table.get(key, Fraction(0)) + p
    return table


def _index(names):
    return [VARIABLES.index(n) for n in names]


def condition(dj, evidence, over=("C", "Z")):
    """Exact P(over | evidence), zero entries included, keyed by value tuples."""
    over = (over,) if isinstance(over, str) else tuple(over)
    table = joint(dj)
    ev = [(VARIABLES.index(k), v) for k, v in evidence.items()]
    kept = {k: p for k, p in table.items() if all(k[i] == v for i, v in ev)}
    mass = sum(kept.values(), Fraction(0))
    if mass == 0:
        raise DomainError(f"evidence {evidence} has probability zero")
    sup = dj.supports()
    out = {vals: Fraction(0) for vals in itertools.product(*(sup[n] for n in over))}
    idx = _index(over)
    for k, p in kept.items():
        out[tuple(k[i] for i in idx)] += p / mass
    return out


def check_ci(dj, a, b, given=None):
    """True iff P(A, B | given) = P(A | given) P(B | given) exactly."""
    given = given or {}
    a = (a,) if isinstance(a, str) else tuple(a)
    b = (b,) if isinstance(b, str) else tuple(b)
    pab = condition(dj, given, a + b)
    pa = condition(dj, given, a)
    pb = condition(dj, given, b)
    na = len(a)
    return all(p == pa[key[:na]] * pb[key[na:]] for key, p in pab.items())


def appendix_instance():
    """Three clean images, Z ~ Bernoulli(1/2), four masks per value of Z.

    Mask images are labelled by integers. The maps are chosen so that the
    number of masks sending (Y, Z) to X = 4 is 3 for (1, 1), 2 for (2, 0) and
    3 for (2, 1), which fixes every conditional given X = 4.
    """
    third, half = Fraction(1, 3), Fraction(1, 2)
    masks = {
        0: [
            {1: 5, 2: 4, 3: 6},
            {1: 5, 2: 4, 3: 6},
            {1: 1, 2: 2, 3: 3},
            {1: 1, 2: 2, 3: 3},
        ],
        1: [
            {1: 4, 2: 4, 3: 7},
            {1: 4, 2: 4, 3: 7},
            {1: 4, 2: 4, 3: 7},
            {1: 1, 2: 2, 3: 3},
        ],
    }
    return from_masks({1: third, 2: third, 3: third}, {0: half, 1: half}, {1: 1, 2: 2, 3: 3}, masks)


def dsep_holds_everywhere(dj):
    """Check C _||_ Z | X = x, Y = y at every positive-probability (x, y)."""
    pairs = {(k[3], k[2]) for k in joint(dj)}
    return all(check_ci(dj, "C", "Z", {"X": x, "Y": y}) for x, y in sorted(pairs))


def random_instance(rng, max_c=4, max_z=3, max_x=5, n_masks=4, deterministic_y=True):
    """A random small model with the two-stage structure and rational CPTs."""

    def simplex(values):
        w = [int(rng.integers(1, 6)) for _ in values]
        total = sum(w)
        return {v: Fraction(wi, total) for v, wi in zip(values, w)}

    cs = list(range(1, int(rng.integers(2, max_c + 1)) + 1))
    zs = list(range(int(rng.integers(2, max_z + 1))))
    ys = list(range(1, int(rng.integers(1, len(cs) + 1)) + 1))
    xs = list(range(1, max_x + 1))
    if deterministic_y:
        p_y = {c: {int(rng.choice(ys)): Fraction(1)} for c in cs}
    else:
        p_y = {c: simplex(ys) for c in cs}
    used_y = sorted({y for row in p_y.values() for y in row})
    p_x = {}
    for z in zs:
        masks = [{y: int(rng.choice(xs)) for y in used_y} for _ in range(n_masks)]
        weights = simplex(range(n_masks))
        for y in used_y:
            row = {}
            for w, mask in zip(weights.values(), masks):
                row[mask[y]] = row.get(mask[y], Fraction(0)) + w
            p_x[(y, z)] = row
    return DiscreteJoint(simplex(cs), simplex(zs), p_y, p_x).validate()


def format_table(table):
    return [{"values": list(k), "p": str(v)} for k, v in table.items()]


def demo_report():
    dj = appendix_instance()
    return {
        "P(C,Z|X=4)": format_table(condition(dj, {"X": 4}, ("C", "Z"))),
        "P(C|X=4)": format_table(condition(dj, {"X": 4}, ("C",))),
        "P(Z|X=4)": format_table(condition(dj, {"X": 4}, ("Z",))),
        "P(C,Z|X=4,Y=1)": format_table(condition(dj, {"X": 4, "Y": 1}, ("C", "Z"))),
        "P(C|X=4,Y=1)": format_table(condition(dj, {"X": 4, "Y": 1}, ("C",))),
        "P(Z|X=4,Y=1)": format_table(condition(dj, {"X": 4, "Y": 1}, ("Z",))),
        "C_indep_Z_given_X=4": check_ci(dj, "C", "Z", {"X": 4}),
        "C_indep_Z_given_X=4,Y=1": check_ci(dj, "C", "Z", {"X": 4, "Y": 1}),
    }
