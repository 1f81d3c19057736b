"""Counter-based uniform streams shared by both kernel backends.

Each rollout gets its own splitmix64 stream keyed from (seed, step, draw,
rollout index). Streams advance one 64-bit state increment per token, so a
rollout's randomness is independent of how many other rollouts are drawn
alongside it and of backend vectorization order.
"""

# splitmix64 constants
GOLDEN = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB
MASK64 = 0xFFFFFFFFFFFFFFFF

# (z >> 11) spans [0, 2^53); scaling by 2^-53 gives a uniform in [0, 1)
INV_2_53 = 1.0 / 9007199254740992.0


def mix64(z: int) -> int:
    z &= MASK64
    z ^= z >> 30
    z = (z * MIX1) & MASK64
    z ^= z >> 27
    z = (z * MIX2) & MASK64
    z ^= z >> 31
    return z


def derive_key(seed: int, *parts: int) -> int:
    """Fold integer components into one decorrelated 64-bit stream key."""
    h = mix64((seed + GOLDEN) & MASK64)
    for p in parts:
        h = mix64((h ^ ((p + GOLDEN) & MASK64)) & MASK64)
    return h
