"""Per-trial outcomes shared by every strategy."""

from __future__ import annotations

from dataclasses import dataclass

DEFAULT_MAX_SAMPLES = 10_000_000


@dataclass(frozen=True)
class TrialRecord:
    """One simulated search.

    ``tau0`` counts scanning (or single-strategy) samples and ``tau1`` the
    refinement samples; ``n_switches`` counts sequences or groups abandoned.
    """

    strategy: str
    tau0: int
    tau1: int
    n_switches: int
    claim_correct: bool
    truncated: bool = False
    seed: int = 0

    def __post_init__(self):
        if min(self.tau0, self.tau1, self.n_switches) < 0:
            raise ValueError("trial counts must be nonnegative")

    @property
    def tau(self) -> int:
        return self.tau0 + self.tau1
