"""Counter-based random streams for reproducible parallel simulation.

Every stream is a Philox generator keyed by the user seed plus a tuple of
integers naming the work item, so a replicate draws the same numbers no matter
which worker runs it or in which order.
"""

import numpy as np

TRIAL_STREAM = 0
EXTERNAL_STREAM = 1
MODEL_STREAM = 2


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for ``(seed, *key)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(entropy=seed, spawn_key=key)))


class ScenarioStreams:
    """Named streams of one simulation scenario.

    Args:
        seed: User seed (64-bit).
        case_index: 0-based index of the data-generating case.
    """

    def __init__(self, seed: int, case_index: int):
        self.seed = int(seed)
        self.case_index = int(case_index)

    def replicate(self, effect_index: int, n: int, replicate: int) -> np.random.Generator:
        return stream(self.seed, TRIAL_STREAM, self.case_index, effect_index, n, replicate)

    def external(self) -> np.random.Generator:
        """The external cohort is drawn once per case and shared by every replicate."""
        return stream(self.seed, EXTERNAL_STREAM, self.case_index)

    def model_seed(self) -> int:
        """Integer random_state for the prognostic forest."""
        seq = np.random.SeedSequence(entropy=self.seed, spawn_key=(MODEL_STREAM, self.case_index))
        return int(seq.generate_state(1, dtype=np.uint32)[0])
