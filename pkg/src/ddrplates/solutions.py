"""Manufactured solutions of the clamped plate problem on the unit square.

    sigma + A HESS u = 0,   -DIV VDIV sigma = f,   u = 0 on the boundary.
"""
import math

import numpy as np

from .errors import ConfigError
from .polycalc import FunctionField

PI = math.pi


class TrigSolution:
    """u = sin(pi x1) sin(pi x2) for a constant material."""

    name = 'trig'

    def __init__(self, material):
        self.material = material
        stiffness = material.stiffness
        self.u_field = FunctionField(1, self._u, self._u_gradient, self._u_hessian, name='u')
        self.sigma = FunctionField(
            3,
            lambda p: -stiffness @ self._second(p),
            lambda p: -np.einsum('cd,dxq->cxq', stiffness, self._third(p)),
            lambda p: -np.einsum('cd,dxyq->cxyq', stiffness, self._fourth(p)),
            name='sigma',
        )

    @staticmethod
    def _trig(points):
        x = PI * np.atleast_2d(points)
        return np.sin(x[:, 0]), np.cos(x[:, 0]), np.sin(x[:, 1]), np.cos(x[:, 1])

    def _u(self, points):
        s1, _, s2, _ = self._trig(points)
        return (s1 * s2)[None]

    def _u_gradient(self, points):
        s1, c1, s2, c2 = self._trig(points)
        return PI * np.stack([c1 * s2, s1 * c2])[None]

    def _u_hessian(self, points):
        u11, u12, u22 = self._second(points)
        return np.stack([np.stack([u11, u12]), np.stack([u12, u22])])[None]

    def _second(self, points):
        """(u_11, u_12, u_22)."""
        s1, c1, s2, c2 = self._trig(points)
        return PI ** 2 * np.stack([-s1 * s2, c1 * c2, -s1 * s2])

    def _third(self, points):
        """Gradients of (u_11, u_12, u_22), shape (3, 2, n)."""
        s1, c1, s2, c2 = self._trig(points)
        u111, u112 = -c1 * s2, -s1 * c2
        u122, u222 = -c1 * s2, -s1 * c2
        return PI ** 3 * np.stack([np.stack([u111, u112]), np.stack([u112, u122]), np.stack([u122, u222])])

    def _fourth(self, points):
        """Hessians of (u_11, u_12, u_22), shape (3, 2, 2, n)."""
        s1, c1, s2, c2 = self._trig(points)
        ss, cc = s1 * s2, c1 * c2
        u1111, u1112, u1122, u1222, u2222 = ss, -cc, ss, -cc, ss

        def hess(a, b, c):
            return np.stack([np.stack([a, b]), np.stack([b, c])])

        return PI ** 4 * np.stack([hess(u1111, u1112, u1122), hess(u1112, u1122, u1222), hess(u1122, u1222, u2222)])

    def load(self, points):
        s1, _, s2, _ = self._trig(points)
        return 4.0 * PI ** 4 * self.material.D * s1 * s2

    def normal_derivative(self, points, normals):
        grad = self._u_gradient(points)[0]
        return np.einsum('dq,qd->q', grad, np.broadcast_to(normals, (grad.shape[1], 2)))


class ZeroSolution:
    name = 'zero'

    def __init__(self, material):
        self.material = material
        self.u_field = FunctionField(1, self._zeros(1), self._zeros(1, 2), self._zeros(1, 2, 2), name='u')
        self.sigma = FunctionField(3, self._zeros(3), self._zeros(3, 2), self._zeros(3, 2, 2), name='sigma')

    @staticmethod
    def _zeros(*shape):
        return lambda p: np.zeros(shape + (len(np.atleast_2d(p)),))

    def load(self, points):
        return np.zeros(len(np.atleast_2d(points)))

    def normal_derivative(self, points, normals):
        return np.zeros(len(np.atleast_2d(points)))


SOLUTIONS = {
    'trig': TrigSolution,
    'zero': ZeroSolution,
}


def get_solution(name, material):
    try:
        return SOLUTIONS[name](material)
    except KeyError:
        raise ConfigError(f'Unknown solution {name!r}; known: {sorted(SOLUTIONS)}') from None
