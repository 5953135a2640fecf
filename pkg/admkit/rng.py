import numpy as np

STREAMS = {
    "simulate": 0,
    "fit": 1,
    "oracle": 2,
    "reliability": 3,
    "calibrate": 4,
    "pilot": 5,
    "dump": 6,
}


def substream(seed: int, name: str, *counters: int) -> np.random.Generator:
    key = (STREAMS[name], *(int(c) for c in counters))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=key)))
