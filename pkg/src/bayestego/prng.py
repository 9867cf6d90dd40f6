"""xoshiro256** seeded through splitmix64.

Port of the public-domain reference implementations by Blackman and Vigna
(https://prng.di.unimi.it/xoshiro256starstar.c, splitmix64.c). Used wherever
the encoder and decoder must draw the same random numbers, so the output
sequence is part of the stego format and must never change.
"""

MASK64 = 0xFFFFFFFFFFFFFFFF


def _rotl(x, k):
    return ((x << k) | (x >> (64 - k))) & MASK64


class SplitMix64:
    def __init__(self, seed):
        self.state = seed & MASK64

    def next(self):
        self.state = (self.state + 0x9E3779B97F4A7C15) & MASK64
        z = self.state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
        return z ^ (z >> 31)


class Xoshiro256:
    """xoshiro256** generator.

    Parameters
    ----------
    seed : int
        64-bit seed, expanded to the 256-bit state with splitmix64.
    state : sequence of 4 ints, optional
        Raw state; overrides ``seed``. Must not be all zero.
    """

    def __init__(self, seed=0, state=None):
        if state is None:
            sm = SplitMix64(seed)
            state = [sm.next() for _ in range(4)]
        state = [int(s) & MASK64 for s in state]
        if len(state) != 4 or not any(state):
            raise ValueError("xoshiro256 state must be four words, not all zero")
        self.s = state

    def next_u64(self):
        s = self.s
        result = (_rotl((s[1] * 5) & MASK64, 7) * 9) & MASK64
        t = (s[1] << 17) & MASK64
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def random(self):
        """Uniform double in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * (1.0 / 9007199254740992.0)

    def bernoulli(self, n, p_one):
        """``n`` draws, each 1 with probability ``p_one``; returned as a list."""
        return [1 if self.random() < p_one else 0 for _ in range(n)]

    def randbelow(self, n):
        """Unbiased integer in [0, n) by rejection on the top bits."""
        if n <= 0:
            raise ValueError("n must be positive")
        k = n.bit_length()
        while True:
            r = self.next_u64() >> (64 - k)
            if r < n:
                return r

    def permutation(self, n):
        """Fisher-Yates shuffle of ``range(n)``."""
        perm = list(range(n))
        for i in range(n - 1, 0, -1):
            j = self.randbelow(i + 1)
            perm[i], perm[j] = perm[j], perm[i]
        return perm
