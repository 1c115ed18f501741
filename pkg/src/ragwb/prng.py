"""Portable deterministic random numbers for shuffles and splits.

Dataset splits and benchmark presentation orders must reproduce exactly
across machines, Python versions, and reimplementations in other
languages, so this module pins one fully specified generator instead of
relying on ``random.Random`` internals.

The algorithm, end to end:

* Seeding: the 64-bit seed is passed through one splitmix64 step
  (state advance by 0x9E3779B97F4A7C15, then the xor-shift/multiply
  finalizer with constants 0xBF58476D1CE4E5B9 and 0x94D049BB133111EB).
  A zero result is replaced by 0x9E3779B97F4A7C15, since the xorshift
  state must be nonzero.
* Stream: xorshift64* — state updates ``x ^= x >> 12``,
  ``x ^= x << 25``, ``x ^= x >> 27`` (all modulo 2**64); each output is
  ``state * 0x2545F4914F6CDD1D`` modulo 2**64.
* Bounded draw: ``below(n)`` is the high 64 bits of ``output * n``
  (multiply-shift; no rejection loop).
* Shuffle: Fisher-Yates from the last index down, swapping ``i`` with
  ``below(i + 1)``.

Anything in the workbench that needs randomness derives from this
generator and a caller-supplied seed.
"""

from __future__ import annotations

from typing import MutableSequence

_MASK64 = (1 << 64) - 1
_SPLITMIX_GAMMA = 0x9E3779B97F4A7C15


def splitmix64(x: int) -> int:
    """One splitmix64 output for state *x* (also used as a seed mixer)."""
    z = (x + _SPLITMIX_GAMMA) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def fnv1a64(data: bytes | str) -> int:
    """64-bit FNV-1a hash, used to fold string labels into seeds."""
    if isinstance(data, str):
        data = data.encode("utf-8")
    h = 0xCBF29CE484222325
    for byte in data:
        h ^= byte
        h = (h * 0x100000001B3) & _MASK64
    return h


def derive_seed(seed: int, label: str) -> int:
    """Mix a run seed with a string label into an independent sub-seed.

    Used to give every benchmark question its own shuffle stream that
    does not depend on processing order.
    """
    return splitmix64((seed & _MASK64) ^ fnv1a64(label.encode("utf-8")))


class Xorshift64Star:
    """xorshift64* generator seeded via splitmix64 (see module docstring)."""

    def __init__(self, seed: int):
        state = splitmix64(seed & _MASK64)
        self._state = state if state != 0 else _SPLITMIX_GAMMA

    def next_u64(self) -> int:
        x = self._state
        x ^= x >> 12
        x = (x ^ (x << 25)) & _MASK64
        x ^= x >> 27
        self._state = x
        return (x * 0x2545F4914F6CDD1D) & _MASK64

    def below(self, n: int) -> int:
        """Uniform-ish draw in [0, n) via the multiply-shift reduction."""
        if n <= 0:
            raise ValueError("bound must be positive")
        return (self.next_u64() * n) >> 64

    def shuffle(self, items: MutableSequence) -> None:
        """In-place Fisher-Yates shuffle."""
        for i in range(len(items) - 1, 0, -1):
            j = self.below(i + 1)
            items[i], items[j] = items[j], items[i]
