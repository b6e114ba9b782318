"""Software model of the physical tap: loss, attachment gaps, dB budgets.

The measured effects being modelled: attaching the tap does not impair
link reliability beyond baseline (0-2 lost round trips per 10,000), so
loss is a single Bernoulli parameter; detaching/re-attaching the probe
leaves observation gaps during which frames pass unseen; and the tap
loads the pair by about 1.46 dB, which must fit in the 14.6 dB insertion
loss budget of a 100BASE-T link segment together with the cable's own
attenuation.
"""

from __future__ import annotations

import enum
import math
import random
from dataclasses import dataclass, field
from typing import Sequence

from .capture import FrameStream, Terminal, TerminalKind, _Finished
from .frames import CapturedFrame

ALLOWED_INSERTION_LOSS_DB = 14.6

# TIA/EIA-568-B.2 maximum insertion loss per 100 m at 16 MHz.
CABLE_LOSS_DB_PER_100M = {"Cat3": 13.1, "Cat5e": 8.2}

# A passing budget with less headroom than this is flagged marginal:
# component tolerances and connector losses can plausibly eat it.
MARGINAL_HEADROOM_DB = 1.0


class TapModelError(Exception):
    code = "TapModelError"


class NonPositiveVoltageError(TapModelError):
    code = "NonPositiveVoltage"


class CableCategory(enum.Enum):
    CAT3 = "Cat3"
    CAT5E = "Cat5e"

    @property
    def loss_db_per_100m(self) -> float:
        return CABLE_LOSS_DB_PER_100M[self.value]


def attenuation_db(v_tapped: float, v_baseline: float) -> float:
    """Attenuation of the tapped signal relative to baseline, in dB.

    Negative values mean the tap loads the line (20*log10 of the voltage
    ratio).
    """
    if v_tapped <= 0 or v_baseline <= 0:
        raise NonPositiveVoltageError("voltages must be positive")
    return 20.0 * math.log10(v_tapped / v_baseline)


@dataclass(frozen=True)
class LossBudget:
    cable_category: CableCategory
    length_m: float
    tap_loss_db: float
    allowed_db: float = ALLOWED_INSERTION_LOSS_DB

    def __post_init__(self) -> None:
        if self.length_m <= 0:
            raise ValueError("cable length must be positive")


@dataclass(frozen=True)
class BudgetResult:
    passed: bool
    margin_db: float
    marginal: bool

    def __str__(self) -> str:
        verdict = "pass" if self.passed else "fail"
        if self.marginal:
            verdict += " (marginal)"
        return f"{verdict}, margin {self.margin_db:+.2f} dB"


def budget_check(budget: LossBudget) -> BudgetResult:
    """Check cable attenuation plus tap loss against the allowed budget.

    tap_loss_db may be given with either sign; only its magnitude is a
    loss.
    """
    cable_loss = budget.cable_category.loss_db_per_100m * budget.length_m / 100.0
    margin = budget.allowed_db - (cable_loss + abs(budget.tap_loss_db))
    passed = margin >= 0
    return BudgetResult(passed=passed, margin_db=margin,
                        marginal=passed and margin < MARGINAL_HEADROOM_DB)


@dataclass(frozen=True)
class TapLossProfile:
    """Loss behaviour of one tap attachment.

    ``observation_gaps`` are half-open [start_ns, end_ns) intervals of
    capture offsets during which the tap sees nothing (the probe was
    detached); they must be ordered and non-overlapping.
    """

    link_loss_probability: float = 0.0
    observation_gaps: tuple[tuple[int, int], ...] = ()
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.link_loss_probability <= 1.0:
            raise ValueError("loss probability must be within [0, 1]")
        previous_end = None
        for start, end in self.observation_gaps:
            if end <= start:
                raise ValueError(f"empty or inverted gap ({start}, {end})")
            if previous_end is not None and start < previous_end:
                raise ValueError("gaps must be ordered and non-overlapping")
            previous_end = end

    @classmethod
    def from_document(cls, doc: dict) -> "TapLossProfile":
        return cls(
            link_loss_probability=float(doc.get("link_loss_probability", 0.0)),
            observation_gaps=tuple(
                (int(start), int(end)) for start, end in doc.get("observation_gaps", [])
            ),
            rng_seed=int(doc.get("rng_seed", 0)),
        )

    def to_document(self) -> dict:
        return {
            "link_loss_probability": self.link_loss_probability,
            "observation_gaps": [list(gap) for gap in self.observation_gaps],
            "rng_seed": self.rng_seed,
        }

    def in_gap(self, offset_ns: int) -> bool:
        for start, end in self.observation_gaps:
            if start <= offset_ns < end:
                return True
            if offset_ns < start:
                return False
        return False


def alternating_gaps(duration_ns: int, alternations: int,
                     start_attached: bool = True) -> tuple[tuple[int, int], ...]:
    """Gap pattern for an intermittently attached probe.

    ``alternations`` attach/detach transitions split the duration into
    alternations+1 equal intervals; every other interval is a gap.
    """
    if duration_ns <= 0 or alternations < 1:
        return ()
    intervals = alternations + 1
    boundaries = [duration_ns * i // intervals for i in range(intervals + 1)]
    first_gap = 1 if start_attached else 0
    return tuple(
        (boundaries[i], boundaries[i + 1]) for i in range(first_gap, intervals, 2)
    )


class TappedFrameStream(FrameStream):
    """A frame stream as seen through a lossy, intermittently attached tap.

    One uniform draw is taken per input frame regardless of gaps, so the
    drop pattern for a given seed is independent of the gap schedule.
    Ordering is preserved and frames are never duplicated.
    """

    def __init__(self, inner: FrameStream, profile: TapLossProfile):
        super().__init__()
        self._inner = inner
        self._profile = profile
        self._rng = random.Random(profile.rng_seed)

    def _produce(self) -> CapturedFrame:
        for frame in self._inner:
            lost = self._rng.random() < self._profile.link_loss_probability
            if lost or self._profile.in_gap(frame.capture_offset_ns):
                continue
            return frame
        raise _Finished(self._inner.terminal or Terminal(TerminalKind.END_OF_FILE))

    def stop(self) -> None:
        self._inner.stop()
        super().stop()


def apply_tap(stream: FrameStream, profile: TapLossProfile) -> FrameStream:
    """View ``stream`` through the tap's loss model (deterministic per seed)."""
    return TappedFrameStream(stream, profile)


def icmp_experiment(sent: int, profile: TapLossProfile) -> int:
    """Reproduce the ping experiment: ``sent`` echo round trips over the
    tapped link, each request and each reply independently subject to the
    link loss probability. Returns the number of replies received.

    Observation gaps model capture misses, not link behaviour, so they
    do not affect this experiment.
    """
    rng = random.Random(profile.rng_seed)
    p = profile.link_loss_probability
    received = 0
    for _ in range(sent):
        request_lost = rng.random() < p
        reply_lost = rng.random() < p
        if not request_lost and not reply_lost:
            received += 1
    return received
