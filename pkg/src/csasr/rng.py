"""Portable deterministic random numbers.

Everything random in this package (corpus synthesis, parameter init, batch
order) flows through ``Rng``, a counter-mode splitmix64 generator (Steele,
Lea & Flood, "Fast splittable pseudorandom number generators", OOPSLA 2014).
The n-th raw draw of a stream is::

    mix64(seed + (n + 1) * 0x9E3779B97F4A7C15)   (mod 2**64)

where ``mix64`` is the splitmix64 finalizer. Because the state is a plain
counter, blocks of draws vectorize with numpy uint64 arithmetic and the
stream is bit-identical on any platform. Substreams are derived by mixing a
64-bit key into the seed, so e.g. the train/test splits of a corpus consume
independent streams of the same run seed.

Derived quantities are fixed too: doubles in [0, 1) take the top 53 bits of
a draw; normals come from Box-Muller pairs; bounded ints use rejection
sampling to stay unbiased.
"""

import numpy as np

_GOLDEN = 0x9E3779B97F4A7C15
_MASK = (1 << 64) - 1


def mix64(x: int) -> int:
    """splitmix64 finalizer on a 64-bit integer."""
    x &= _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def _mix64_array(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
        return x ^ (x >> np.uint64(31))


class Rng:
    """Counter-mode splitmix64 stream."""

    def __init__(self, seed: int, key: int = 0):
        self.seed = mix64((seed & _MASK) ^ mix64(key & _MASK))
        self.counter = 0

    def substream(self, key: int) -> "Rng":
        """Independent child stream; deterministic in (seed, key) only."""
        return Rng(self.seed, key)

    def next_u64(self) -> int:
        self.counter += 1
        return mix64((self.seed + self.counter * _GOLDEN) & _MASK)

    def _block(self, n: int) -> np.ndarray:
        """Next n raw draws as a uint64 array (vectorized counter advance)."""
        idx = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        self.counter += n
        with np.errstate(over="ignore"):
            states = np.uint64(self.seed) + idx * np.uint64(_GOLDEN)
        return _mix64_array(states)

    def uniform(self, lo: float = 0.0, hi: float = 1.0, size=None):
        """Doubles in [lo, hi) from the top 53 bits of each draw."""
        if size is None:
            u = (self.next_u64() >> 11) * 2.0**-53
            return lo + (hi - lo) * u
        n = int(np.prod(size))
        u = (self._block(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        return (lo + (hi - lo) * u).reshape(size)

    def normal(self, mu: float = 0.0, sigma: float = 1.0, size=None):
        """Box-Muller normals; each pair of outputs consumes two draws."""
        scalar = size is None
        n = 1 if scalar else int(np.prod(size))
        m = n + (n & 1)
        raw = (self._block(2 * m) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        u1 = raw[:m] + 2.0**-54  # keep log() finite
        u2 = raw[m:]
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.concatenate([r * np.cos(2.0 * np.pi * u2), r * np.sin(2.0 * np.pi * u2)])[:n]
        out = mu + sigma * z
        return float(out[0]) if scalar else out.reshape(size)

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi] inclusive, via rejection sampling."""
        if hi < lo:
            raise ValueError(f"randint: empty range [{lo}, {hi}]")
        span = hi - lo + 1
        bound = (1 << 64) - ((1 << 64) % span)
        while True:
            x = self.next_u64()
            if x < bound:
                return lo + x % span

    def choice(self, items):
        return items[self.randint(0, len(items) - 1)]

    def shuffle(self, items: list) -> None:
        """In-place Fisher-Yates."""
        for i in range(len(items) - 1, 0, -1):
            j = self.randint(0, i)
            items[i], items[j] = items[j], items[i]
