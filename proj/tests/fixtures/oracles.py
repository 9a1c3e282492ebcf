"""Independent reference computations used to freeze expected test values.

Run from the repository root:  python3 tests/fixtures/oracles.py
"""

import math

M64 = (1 << 64) - 1


class MT19937_64:
    def __init__(self, seed):
        self.mt = [0] * 312
        self.mt[0] = seed & M64
        for i in range(1, 312):
            prev = self.mt[i - 1]
            self.mt[i] = (6364136223846793005 * (prev ^ (prev >> 62)) + i) & M64
        self.index = 312

    def _twist(self):
        upper, lower = 0xFFFFFFFF80000000, 0x7FFFFFFF
        for i in range(312):
            x = (self.mt[i] & upper) | (self.mt[(i + 1) % 312] & lower)
            xa = x >> 1
            if x & 1:
                xa ^= 0xB5026F5AA96619E9
            self.mt[i] = self.mt[(i + 156) % 312] ^ xa
        self.index = 0

    def __call__(self):
        if self.index >= 312:
            self._twist()
        x = self.mt[self.index]
        self.index += 1
        x ^= (x >> 29) & 0x5555555555555555
        x ^= (x << 17) & 0x71D67FFFEDA60000
        x ^= (x << 37) & 0xFFF7EEE000000000
        x ^= x >> 43
        return x & M64


def uniform_below(rng, bound):
    limit = M64 - (M64 % bound + 1) % bound
    while True:
        x = rng()
        if x <= limit:
            return x % bound


def sample_indices(total, n, seed):
    rng = MT19937_64(seed)
    idx = list(range(total))
    for i in range(n):
        j = i + uniform_below(rng, total - i)
        idx[i], idx[j] = idx[j], idx[i]
    return sorted(idx[:n])


def blend(inp, color, alpha, coverage):
    a = alpha * coverage
    return math.floor(a * color + (1 - a) * inp + 0.5)


if __name__ == "__main__":
    r = MT19937_64(5489)
    for _ in range(9999):
        r()
    assert r() == 9981545732273789042, "mt19937_64 reference check failed"
    print("sample(300 -> 100, seed 7):", sample_indices(300, 100, 7))
    print("blend(255, 0, 0.5, 1):", blend(255, 0, 0.5, 1.0))
    print("blend(255, 255, 0.5, 1):", blend(255, 255, 0.5, 1.0))
    print("blend(200, 10, 0.8, 0.25):", blend(200, 10, 0.8, 0.25))
