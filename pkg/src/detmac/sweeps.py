"""Parameter sweeps built on top of the engine.

Two experiments matter enough to get first-class drivers: the association
latency sweep (a joining device synchronizes on a beacon and requests through
its pre-allocated slot; latency must stay inside an analytic window) and the
capture threshold sweep (two leaves of mutually distant stars transmit
simultaneously; each coordinator's decode success flips exactly at the
capture margin).  Both are deterministic given a seed, and both return
plot-ready rows rather than plots.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .core import Role, slot_ticks, superframe_ticks
from .engine import (
    FlowSpec,
    GtsSpec,
    MetricsBundle,
    NodeSpec,
    PdsSpec,
    RadioSpec,
    Scenario,
    SgtsSpec,
    latency_histogram,
    run,
)

UNIFORM = "uniform"


def association_bounds(bo: int, pds_level: int) -> tuple[int, int]:
    """Inclusive latency window, in ticks, for association through a PDS.

    The joiner needs at most one full beacon period to synchronize, waits for
    its reserved slot (once per 2**level superframes), and hears the response
    in the parent's next beacon: never faster than 17 slots, never slower
    than 16 * (2**level + 1) slots.
    """
    ticks = slot_ticks(bo)
    return 17 * ticks, 16 * ((1 << pds_level) + 1) * ticks


@dataclass
class AssociationSweepResult:
    pds_level: int
    bo: int
    trials: int
    samples: list[int]
    bound_lo: int
    bound_hi: int
    violations: int
    histogram: list[tuple[int, int, int, float]]

    def spread(self) -> int:
        return max(self.samples) - min(self.samples) if self.samples else 0


def _join_scenario(bo: int, level: int, nmax: int, seed: int) -> Scenario:
    return Scenario(
        nodes=[NodeSpec(0, Role.SUPERCOORDINATOR),
               NodeSpec(1, Role.COORDINATOR, 0)],
        bo=bo,
        nmax=nmax,
        pds=[PdsSpec(1, level)],
        power_on={1: UNIFORM},
        seed=seed,
        duration_sf=(1 << nmax) + (1 << level) + 3,
        stop_when_associated=True,
    )


def sweep_association(levels=(0, 1, 2, 3), bo: int = 3, trials: int = 1000,
                      seed: int = 0, nmax: int = 3) -> list[AssociationSweepResult]:
    """Measure association latency over uniformly random power-on instants."""
    out = []
    for level in levels:
        lo, hi = association_bounds(bo, level)
        samples: list[int] = []
        for t in range(trials):
            trial_seed = seed * 1_000_003 + level * 65_537 + t
            m = run(_join_scenario(bo, level, nmax, trial_seed))
            assert len(m.latencies) == 1, "join run must produce one sample"
            samples.append(m.latencies[0].latency_ticks)
        violations = sum(1 for s in samples if not lo <= s <= hi)
        out.append(AssociationSweepResult(
            level, bo, trials, samples, lo, hi, violations,
            latency_histogram(samples, superframe_ticks(bo))))
    return out


@dataclass
class CapturePoint:
    delta_db: float
    success_rate_c1: float
    success_rate_c2: float


def capture_scenario(delta_db: float, margin_db: float = 10.0,
                     bias_db: float = 0.0, noise_sigma_db: float = 0.0,
                     loss: str = "ideal", error_rate: float = 0.0,
                     seed: int = 0, superframes: int = 8) -> Scenario:
    """Two stars, one shared slot: node 3 serves star 1, node 4 serves star 2.

    `delta_db` is the received-power advantage of node 3's frames over node
    4's, applied symmetrically at both coordinators (as if node 3 simply
    transmitted louder).  Every superframe each leaf transmits once alone in
    its own slot and once simultaneously in the shared slot.
    """
    base = -55.0
    return Scenario(
        nodes=[NodeSpec(0, Role.SUPERCOORDINATOR),
               NodeSpec(1, Role.COORDINATOR, 0),
               NodeSpec(2, Role.COORDINATOR, 0),
               NodeSpec(3, Role.LEAF, 1),
               NodeSpec(4, Role.LEAF, 2)],
        bo=3,
        gts=[GtsSpec(3), GtsSpec(4)],
        sgts=[SgtsSpec(3, 4)],
        flows=[FlowSpec(3), FlowSpec(4)],
        radio=RadioSpec(
            default_dbm=base,
            entries=((3, 1, base + delta_db), (4, 1, base),
                     (3, 2, base + delta_db), (4, 2, base)),
            capture_margin_db=margin_db,
            sync_offset_bias_db=bias_db,
            loss=loss,
            error_rate=error_rate,
            noise_sigma_db=noise_sigma_db),
        seed=seed,
        duration_sf=superframes,
    )


def sweep_capture(delta_min: float = -30.0, delta_max: float = 30.0,
                  step: float = 1.0, trials: int = 8, margin_db: float = 10.0,
                  bias_db: float = 0.0, noise_sigma_db: float = 0.0,
                  loss: str = "ideal", error_rate: float = 0.0,
                  seed: int = 0) -> list[CapturePoint]:
    """Simultaneous-transmission success rates across a power-difference sweep."""
    if step <= 0:
        raise ValueError("step must be positive")
    points = []
    count = int(round((delta_max - delta_min) / step))
    for i in range(count + 1):
        delta = delta_min + i * step
        sc = capture_scenario(delta, margin_db, bias_db, noise_sigma_db,
                              loss, error_rate, seed + i, superframes=trials)
        m = run(sc)
        shared = [a for a in _shared_slots(sc, m)]
        assert len(shared) == 1, "capture scenario must have one shared slot"
        slot = shared[0]
        sent_1 = m.tx_counts.get((3, slot), 0)
        sent_2 = m.tx_counts.get((4, slot), 0)
        assert sent_1 == trials and sent_2 == trials, \
            "both leaves must transmit in every shared instance"
        points.append(CapturePoint(
            delta,
            m.decode_counts.get((1, 3, slot), 0) / trials,
            m.decode_counts.get((2, 4, slot), 0) / trials))
    return points


def _shared_slots(sc: Scenario, m: MetricsBundle) -> list[int]:
    if m.utilization is None:
        return []
    return sorted({slot for _, slot, category, _ in m.utilization.instances
                   if category == "sgts"})


# -- contention baseline -------------------------------------------------------


def baseline_scenario(with_pds: bool, leaves: int = 10,
                      cap_slots: tuple[int, ...] = (1, 2, 3, 4),
                      bo: int = 3, seed: int = 0,
                      duration_sf: int = 400,
                      power_on_slot: int | None = None) -> Scenario:
    """One star, many joiners: contention association vs. deterministic PDS.

    With `power_on_slot` every leaf powers on in the same slot (batch
    arrival — the worst case for contention); otherwise each draws its own
    uniform instant.  Without PDS every association request fights through
    slotted CSMA/CA in the CAP; with PDS each leaf holds its own level-0
    slot and the whole join is collision-free.
    """
    nodes = [NodeSpec(0, Role.SUPERCOORDINATOR), NodeSpec(1, Role.COORDINATOR, 0)]
    nodes += [NodeSpec(2 + i, Role.LEAF, 1) for i in range(leaves)]
    when: int | str = (UNIFORM if power_on_slot is None
                       else power_on_slot * slot_ticks(bo))
    return Scenario(
        nodes=nodes,
        bo=bo,
        cap_slots=cap_slots,
        pds=[PdsSpec(2 + i, 0) for i in range(leaves)] if with_pds else [],
        power_on={2 + i: when for i in range(leaves)},
        seed=seed,
        duration_sf=duration_sf,
        stop_when_associated=True,
    )


@dataclass
class BaselineContrast:
    csma_samples: list[int]
    pds_samples: list[int]
    csma_failures: int
    csma_collisions: int
    pds_collisions: int
    pds_bound_hi: int
    incomplete_csma: int


def baseline_contrast(runs: int = 100, leaves: int = 10,
                      cap_slots: tuple[int, ...] = (1, 2, 3, 4),
                      bo: int = 3, seed: int = 0) -> BaselineContrast:
    """Run the contention and PDS variants over many seeds and pool samples.

    Each run powers every leaf on in the same uniformly drawn slot, so both
    variants face an identical batch arrival.
    """
    csma_samples: list[int] = []
    pds_samples: list[int] = []
    failures = collisions = pds_collisions = incomplete = 0
    arrivals = random.Random(f"{seed}:baseline")
    arrival_window_slots = 128  # one default hypercycle of slots
    for r in range(runs):
        at = arrivals.randrange(arrival_window_slots)
        m = run(baseline_scenario(False, leaves, cap_slots, bo,
                                  seed * 99_991 + r, power_on_slot=at))
        csma_samples.extend(s.latency_ticks for s in m.latencies)
        incomplete += leaves - len(m.latencies)
        failures += m.counters["csma_failures"]
        collisions += m.counters["collided"]
        p = run(baseline_scenario(True, leaves, cap_slots, bo,
                                  seed * 99_991 + r, duration_sf=24,
                                  power_on_slot=at))
        assert len(p.latencies) == leaves, "PDS joins must all complete"
        pds_samples.extend(s.latency_ticks for s in p.latencies)
        pds_collisions += p.counters["collided"]
    _, hi = association_bounds(bo, 0)
    return BaselineContrast(csma_samples, pds_samples, failures, collisions,
                            pds_collisions, hi, incomplete)
