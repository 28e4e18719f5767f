"""Counter-based random streams.

Every random draw in the package comes from a Philox generator whose 128-bit
key is built from ``(seed, purpose, a, b)``. A stream depends only on its key,
never on which thread, process or host consumed earlier streams, which is what
makes the samplers reproducible under any scheduling of the mutation work.
"""

import numpy as np

# purpose tags, top byte of the second key word
PRIOR = 1
RESAMPLE = 2
MUTATE = 3
CHAIN = 4
PREDICTIVE = 5
SYNTH = 6

_MASK28 = (1 << 28) - 1
_MASK64 = (1 << 64) - 1


def stream_key(seed, purpose, a=0, b=0):
    """Pack the stream coordinates into a Philox key ``[k0, k1]``.

    ``a`` and ``b`` must fit in 28 bits (particle ids and step counters do).
    """
    if not (0 <= a <= _MASK28 and 0 <= b <= _MASK28):
        raise ValueError(f"stream coordinates out of range: a={a}, b={b}")
    if not 0 <= purpose < 256:
        raise ValueError(f"purpose tag out of range: {purpose}")
    k1 = (purpose << 56) | (b << 28) | a
    return [int(seed) & _MASK64, k1]


def stream(seed, purpose, a=0, b=0):
    """Return an independent :class:`numpy.random.Generator` for the key."""
    return np.random.Generator(np.random.Philox(key=stream_key(seed, purpose, a, b)))


def particle_stream(seed, particle_id, step_index):
    """Stream used to mutate one particle during one tempering step."""
    return stream(seed, MUTATE, int(particle_id), int(step_index))
