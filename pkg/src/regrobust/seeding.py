"""Deterministic seed derivation for independent RNG streams.

Every stage of an experiment (init, shuffling, penalty sampling, retrain
seeds, search trials) gets its own stream derived from the master seed and a
string label, so stages can be reordered or parallelized without changing
results.
"""
import hashlib


def derive_seed(master: int, *labels) -> int:
    """Hash master seed and labels into a 64-bit seed.

    Stable across runs, platforms, and Python versions (uses sha256, not
    ``hash``).
    """
    key = "/".join([str(int(master))] + [str(l) for l in labels])
    digest = hashlib.sha256(key.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big")
