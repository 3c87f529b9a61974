"""Counter-addressed random streams.

Every random draw in a run is produced by a Philox4x64 generator whose counter
encodes (lane, member, iteration) and whose key is the run seed. A draw is
therefore a pure function of (seed, address), which is what makes runs
bit-identical across worker counts: workers never share generator state, they
address disjoint streams.

Lanes keep unrelated consumers out of each other's streams.
"""

import numpy as np

PROPOSAL_LANE = 0
RESAMPLER_LANE = 1
INIT_LANE = 2
MH_LANE = 3


def fresh_stream(seed, lane, member, iteration):
    """A brand-new Generator for the given address. Thread-safe."""
    bit_gen = np.random.Philox(
        counter=[0, lane, member, iteration], key=np.uint64(seed)
    )
    return np.random.Generator(bit_gen)


class StreamFactory:
    """Cheap sequential access to addressed streams.

    Reassigning the counter through the state dict is ~4x faster than
    constructing a fresh Philox/Generator pair and produces bit-identical
    draws (the buffer is invalidated by setting buffer_pos past the end).
    The returned Generator is a shared object: draw from it immediately and
    do not hold a reference across stream() calls. Not thread-safe; threaded
    callers use fresh_stream, which yields the same bits.
    """

    def __init__(self, seed):
        self.seed = int(seed)
        self._bit_gen = np.random.Philox(key=np.uint64(self.seed))
        self._gen = np.random.Generator(self._bit_gen)

    def stream(self, lane, member, iteration):
        state = self._bit_gen.state
        state["state"]["counter"] = np.array(
            [0, lane, member, iteration], dtype=np.uint64
        )
        state["buffer_pos"] = 4
        state["has_uint32"] = 0
        state["uinteger"] = 0
        self._bit_gen.state = state
        return self._gen
