"""Second-order forward-mode derivatives ("jets") in the plane coordinates.

A :class:`Jet2` carries a value together with its first and second partial
derivatives with respect to the computational coordinates (xi, eta).
Arithmetic propagates all six fields exactly (product rule and chain rule
up to second order), so any composition of jets yields the exact
derivatives of the composed function.  The mixed partial is stored once;
symmetry of second derivatives holds by construction.

Instances are immutable and safe to share between threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = ["Jet2", "constant", "variable", "tanh"]


@dataclass(frozen=True)
class Jet2:
    v: float
    d_xi: float = 0.0
    d_eta: float = 0.0
    d_xixi: float = 0.0
    d_xieta: float = 0.0
    d_etaeta: float = 0.0

    def __add__(self, other: "Jet2 | float") -> "Jet2":
        if not isinstance(other, Jet2):
            return Jet2(self.v + other, self.d_xi, self.d_eta,
                        self.d_xixi, self.d_xieta, self.d_etaeta)
        return Jet2(
            self.v + other.v,
            self.d_xi + other.d_xi,
            self.d_eta + other.d_eta,
            self.d_xixi + other.d_xixi,
            self.d_xieta + other.d_xieta,
            self.d_etaeta + other.d_etaeta,
        )

    __radd__ = __add__

    def __neg__(self) -> "Jet2":
        return Jet2(-self.v, -self.d_xi, -self.d_eta,
                    -self.d_xixi, -self.d_xieta, -self.d_etaeta)

    def __sub__(self, other: "Jet2 | float") -> "Jet2":
        if not isinstance(other, Jet2):
            return self + (-other)
        return self + (-other)

    def __rsub__(self, other: float) -> "Jet2":
        return (-self) + other

    def scale(self, c: float) -> "Jet2":
        return Jet2(c * self.v, c * self.d_xi, c * self.d_eta,
                    c * self.d_xixi, c * self.d_xieta, c * self.d_etaeta)

    def __mul__(self, other: "Jet2 | float") -> "Jet2":
        if not isinstance(other, Jet2):
            return self.scale(other)
        a, b = self, other
        return Jet2(
            a.v * b.v,
            a.d_xi * b.v + a.v * b.d_xi,
            a.d_eta * b.v + a.v * b.d_eta,
            a.d_xixi * b.v + 2.0 * a.d_xi * b.d_xi + a.v * b.d_xixi,
            a.d_xieta * b.v + a.d_xi * b.d_eta + a.d_eta * b.d_xi + a.v * b.d_xieta,
            a.d_etaeta * b.v + 2.0 * a.d_eta * b.d_eta + a.v * b.d_etaeta,
        )

    def __rmul__(self, other: float) -> "Jet2":
        return self.scale(other)

    def tanh(self) -> "Jet2":
        # s' = 1 - s^2 and s'' = -2 s (1 - s^2), chained to second order.
        s = math.tanh(self.v)
        s1 = 1.0 - s * s
        s2 = -2.0 * s * s1
        return Jet2(
            s,
            s1 * self.d_xi,
            s1 * self.d_eta,
            s2 * self.d_xi * self.d_xi + s1 * self.d_xixi,
            s2 * self.d_xi * self.d_eta + s1 * self.d_xieta,
            s2 * self.d_eta * self.d_eta + s1 * self.d_etaeta,
        )


def constant(c: float) -> Jet2:
    """A jet with value c and all derivatives zero."""
    return Jet2(float(c))


def variable(axis: str, value: float) -> Jet2:
    """The coordinate jet for one of the two axes.

    ``variable("xi", v)`` has d_xi = 1; ``variable("eta", v)`` has d_eta = 1.
    All second derivatives are zero.
    """
    if axis == "xi":
        return Jet2(float(value), d_xi=1.0)
    if axis == "eta":
        return Jet2(float(value), d_eta=1.0)
    raise ValueError(f"unknown axis {axis!r}, expected 'xi' or 'eta'")


def tanh(j: Jet2) -> Jet2:
    return j.tanh()
