"""Counter-based random streams keyed by (seed, index).

Every eigenmode of a simulated field and every Monte Carlo replication owns
its own Philox stream, so results never depend on how work is scheduled.
"""

import os
import logging

import numpy as np

logger = logging.getLogger(__name__)

SEED_MAX = 2**64 - 1
THREADS_ENV = "SPDEVOL_THREADS"


def check_seed(seed):
    """Validate a 64-bit unsigned seed"""
    if isinstance(seed, bool) or not isinstance(seed, (int, np.integer)):
        raise ValueError(f"Seed must be an integer, got {seed!r}")
    if not 0 <= int(seed) <= SEED_MAX:
        raise ValueError(f"Seed must be a 64-bit unsigned integer, got {seed}")
    return int(seed)


def mode_stream(seed, k):
    """Random stream for eigenmode k of the field generated from seed"""
    sequence = np.random.SeedSequence(check_seed(seed), spawn_key=(int(k),))
    return np.random.Generator(np.random.Philox(sequence))


def replication_seed(seed, r):
    """Derive the 64-bit field seed of replication r"""
    sequence = np.random.SeedSequence(check_seed(seed), spawn_key=(int(r),))
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def worker_count(requested=None):
    """Number of workers, capped by SPDEVOL_THREADS when set"""
    count = requested if requested is not None else (os.cpu_count() or 1)
    cap = os.environ.get(THREADS_ENV)
    if cap:
        try:
            count = min(count, int(cap))
        except ValueError:
            logger.warning(f"Ignoring non-integer {THREADS_ENV}={cap!r}")
    return max(1, int(count))
