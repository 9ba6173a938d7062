"""xoshiro256** generator seeded through splitmix64.

Every random draw in the package goes through this class so that streams
are reproducible from a 64-bit seed independent of numpy's generators.
"""

import math

_MASK = (1 << 64) - 1


def _rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & _MASK


def splitmix64(state):
    """Advance a splitmix64 state; returns (new_state, output)."""
    state = (state + 0x9E3779B97F4A7C15) & _MASK
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK
    return state, z ^ (z >> 31)


class Xoshiro256:
    """xoshiro256** with the conversions used throughout the package.

    * ``random()``: top 53 bits scaled into [0, 1).
    * ``below(n)``: ``floor(random() * n)``.
    * ``normal()``: Box-Muller cosine branch, one normal per two uniforms.
    """

    def __init__(self, seed=0):
        sm = int(seed) & _MASK
        state = []
        for _ in range(4):
            sm, out = splitmix64(sm)
            state.append(out)
        self._s = state

    @classmethod
    def from_state(cls, state):
        if len(state) != 4 or not any(state):
            raise ValueError("state must be four 64-bit words, not all zero")
        rng = cls.__new__(cls)
        rng._s = [int(w) & _MASK for w in state]
        return rng

    @property
    def state(self):
        return tuple(self._s)

    def next_u64(self):
        s0, s1, s2, s3 = self._s
        result = (_rotl((s1 * 5) & _MASK, 7) * 9) & _MASK
        t = (s1 << 17) & _MASK
        s2 ^= s0
        s3 ^= s1
        s1 ^= s2
        s0 ^= s3
        s2 ^= t
        s3 = _rotl(s3, 45)
        self._s = [s0, s1, s2, s3]
        return result

    def random(self):
        return (self.next_u64() >> 11) * (1.0 / 9007199254740992.0)

    def uniform(self, low, high):
        return low + (high - low) * self.random()

    def below(self, n):
        if n <= 0:
            raise ValueError("n must be positive")
        return int(self.random() * n)

    def normal(self, mean=0.0, std=1.0):
        u1 = 1.0 - self.random()  # (0, 1]
        u2 = self.random()
        return mean + std * math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)

    def normals(self, n, std=1.0):
        return [self.normal(0.0, std) for _ in range(n)]

    def shuffle(self, items):
        """In-place Fisher-Yates, walking from the end."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]
        return items

    def sample(self, items, k):
        """k distinct elements, in draw order (partial Fisher-Yates from the front)."""
        pool = list(items)
        if k > len(pool):
            raise ValueError("sample larger than population")
        for i in range(k):
            j = i + self.below(len(pool) - i)
            pool[i], pool[j] = pool[j], pool[i]
        return pool[:k]

    def spawn(self):
        """Independent child generator seeded from this stream."""
        return Xoshiro256(self.next_u64())
