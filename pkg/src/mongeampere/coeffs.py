"""Coefficient sets of second-order operators sum a_ij d_ij + sum a_i d_i + a."""

from dataclasses import dataclass, replace

import numpy as np

from .grid import ScalarField, diff

NAMES = ("a11", "a12", "a22", "a1", "a2", "a")


@dataclass(frozen=True, eq=False)
class CoefficientSet:
    a11: ScalarField
    a12: ScalarField
    a22: ScalarField
    a1: ScalarField
    a2: ScalarField
    a: ScalarField
    lambda_budget: float = float("nan")

    @property
    def grid(self):
        return self.a11.grid

    def items(self):
        return [(n, getattr(self, n)) for n in NAMES]

    def arrays(self):
        return {n: getattr(self, n).values for n in NAMES}

    def map(self, fn):
        return replace(self, **{n: fn(n, getattr(self, n)) for n in NAMES})

    def __add__(self, other):
        return self.map(lambda n, f: f + getattr(other, n))

    @classmethod
    def from_arrays(cls, grid, lambda_budget=float("nan"), **arrs):
        vals = {n: ScalarField(grid, np.broadcast_to(arrs.get(n, 0.0), grid.shape)) for n in NAMES}
        return cls(lambda_budget=lambda_budget, **vals)

    @classmethod
    def gallerstedt(cls, grid):
        """The unperturbed principal part -y^2 d_xx + d_yy."""
        _, Y = grid.mesh()
        return cls.from_arrays(grid, a11=-Y ** 2, a22=1.0)

    def apply(self, u):
        """L u by second-order differences (sum convention: mixed term counted twice)."""
        d = lambda ax, ay: diff(u, ax, ay).values
        c = self.arrays()
        out = (c["a11"] * d(2, 0) + 2 * c["a12"] * d(1, 1) + c["a22"] * d(0, 2)
               + c["a1"] * d(1, 0) + c["a2"] * d(0, 1) + c["a"] * u.values)
        return ScalarField(u.grid, out)

    def perturbation_sup(self):
        """sup of the deviation from the Gallerstedt principal part."""
        _, Y = self.grid.mesh()
        dev = [np.abs(self.a11.values + Y ** 2), np.abs(self.a22.values - 1.0),
               np.abs(self.a12.values), np.abs(self.a1.values), np.abs(self.a2.values),
               np.abs(self.a.values)]
        return float(max(d.max() for d in dev))

