"""Reference values for the unit tests, computed independently of the C++ code.

Run: python3 tests/oracle/compute_oracles.py
"""
import math

import numpy as np
from scipy.integrate import quad
from scipy.linalg import expm

MASK = (1 << 64) - 1


class MT19937_64:
    """Straight transcription of the 64-bit Mersenne Twister."""

    def __init__(self, seed):
        self.mt = [0] * 312
        self.mt[0] = seed & MASK
        for i in range(1, 312):
            self.mt[i] = (6364136223846793005 * (self.mt[i - 1] ^ (self.mt[i - 1] >> 62)) + i) & MASK
        self.idx = 312

    def _twist(self):
        for i in range(312):
            x = (self.mt[i] & 0xFFFFFFFF80000000) | (self.mt[(i + 1) % 312] & 0x7FFFFFFF)
            xa = x >> 1
            if x & 1:
                xa ^= 0xB5026F5AA96619E9
            self.mt[i] = self.mt[(i + 156) % 312] ^ xa
        self.idx = 0

    def __call__(self):
        if self.idx >= 312:
            self._twist()
        y = self.mt[self.idx]
        self.idx += 1
        y ^= (y >> 29) & 0x5555555555555555
        y ^= (y << 17) & 0x71D67FFFEDA60000
        y ^= (y << 37) & 0xFFF7EEE000000000
        y ^= y >> 43
        return y & MASK


def splitmix(z):
    z = (z + 0x9E3779B97F4A7C15) & MASK
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK
    return z ^ (z >> 31)


def uniform(eng, lo, hi):
    return lo + (hi - lo) * ((eng() >> 11) * 2.0**-53)


def mlp_1_16_1(seed, x):
    eng = MT19937_64(splitmix(seed))
    w1 = [uniform(eng, -1.0, 1.0) for _ in range(16)]
    b = 1.0 / math.sqrt(16)
    w2 = [uniform(eng, -b, b) for _ in range(16)]
    return sum(w2[j] * math.tanh(w1[j] * x) for j in range(16))


def cartpole(s, F, g=9.8, mc=1.0, mp=0.1, l=0.5):
    x, xd, th, thd = s
    m = mc + mp
    tmp = (-F - mp * l * thd**2 * math.sin(th)) / m
    thdd = (g * math.sin(th) + math.cos(th) * tmp) / (l * (4.0 / 3.0 - mp * math.cos(th) ** 2 / m))
    xdd = (F + mp * l * (thd**2 * math.sin(th) - thdd * math.cos(th))) / m
    return (xd, xdd, thd, thdd)


def main():
    ref = MT19937_64(5489)
    for _ in range(9999):
        ref()
    assert ref() == 9981545732273789042, "mt19937_64 transcription is wrong"

    print("mlp 1-16-1 seed 7 x=0.5: %.17g" % mlp_1_16_1(7, 0.5))

    A = np.array([[0.0, 1.0], [1.0, 0.0]])
    B = np.array([[1.0], [0.0]])
    print("expm(A):", expm(A).tolist())
    W = np.zeros((2, 2))
    for i in range(2):
        for j in range(2):
            W[i, j] = quad(lambda t: (expm(A * t) @ B @ B.T @ expm(A.T * t))[i, j], 0, 1, epsabs=1e-14)[0]
    print("gramian T=1:", W.tolist())
    print("closed form:", [0.25 * math.sinh(2) + 0.5, 0.25 * (math.cosh(2) - 1), 0.25 * math.sinh(2) - 0.5])

    for s, F in [((0, 0, 0, 0), 1.1), ((0, 0, 0.1, 0), 0.0), ((0.3, -0.2, 0.4, 1.5), -2.0)]:
        print("cartpole", s, F, "->", ["%.17g" % v for v in cartpole(s, F)])

    print("exp(-1) = %.17g" % math.exp(-1))
    print("e - 1 = %.17g" % (math.e - 1))

    # Straight line from 0 to (1,-1) on 5 grid points, integral loss against (1,-1):
    # mean over points and coordinates of squared distance.
    pts = [(k / 4, -k / 4) for k in range(5)]
    print("line integral loss:", sum((p[0] - 1) ** 2 + (p[1] + 1) ** 2 for p in pts) / (5 * 2))

    # Dynamics loss of two short 1-D trajectories.
    a = [0.0, 1.0, 2.0]
    b = [0.5, 0.5, 4.0]
    print("short mse:", sum((x - y) ** 2 for x, y in zip(a, b)) / 3)


if __name__ == "__main__":
    main()
