"""Counter-based random streams for reproducible parallel generation.

Every random decision in the pipeline draws from a Philox generator keyed
by (master_seed, subject, iteration, sample, stage).  Streams with distinct
keys are statistically independent, and a stream's output depends only on
its key — never on evaluation order or thread count — so batches and
samples can be generated concurrently without changing a single byte of
output.
"""

import hashlib

import numpy as np

# Stage labels for the per-draw substreams.  Values are part of the
# reproducibility contract: changing them changes every generated sample.
STAGE_DEFORM = 1
STAGE_PATCH = 2
STAGE_CONTRAST = 3
STAGE_BIAS = 4
STAGE_GAMMA = 5
STAGE_NOISE = 6
STAGE_MIXUP = 7

_BATCH_LEVEL = 0xFFFF  # sample slot for draws shared by a whole batch


def stable_hash(text: str) -> int:
    """Platform-independent 64-bit hash of a string (unlike builtin hash)."""
    digest = hashlib.blake2s(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def stream(master_seed: int, *key: int) -> np.random.Generator:
    """Return the Philox generator for one (seed, *key) stream."""
    entropy = [int(master_seed) & 0xFFFFFFFFFFFFFFFF] + [int(k) & 0xFFFFFFFFFFFFFFFF for k in key]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy)))


def batch_stream(master_seed: int, subject_id: str, iteration: int, stage: int) -> np.random.Generator:
    """Stream for a draw shared across a whole intra-subject batch."""
    return stream(master_seed, stable_hash(subject_id), iteration, _BATCH_LEVEL, stage)


def sample_stream(master_seed: int, subject_id: str, iteration: int,
                  sample: int, stage: int) -> np.random.Generator:
    """Stream for one sample's draw at one pipeline stage."""
    return stream(master_seed, stable_hash(subject_id), iteration, sample, stage)
