"""Deterministic one-way network emulator: delay, jitter, loss, reordering.

A Link runs on a virtual clock supplied by the caller (``now`` arguments),
which keeps every experiment reproducible and fast; live sessions map wall
time onto the same interface.  Each link owns an independent seeded
generator, so the DT1->DT2 and DT2->DT1 directions never share entropy.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class LinkConfig:
    one_way_delay: float = 0.0  # seconds, = RTT/2
    jitter_stddev: float = 0.0  # seconds, half-normal added to the base delay
    loss_probability: float = 0.0
    seed: int = 0
    reorder_allowed: bool = False

    def __post_init__(self):
        if self.one_way_delay < 0 or self.jitter_stddev < 0:
            raise ValueError("delay and jitter must be nonnegative")
        if not 0.0 <= self.loss_probability <= 1.0:
            raise ValueError("loss_probability must be in [0, 1]")


@dataclass
class InFlightDatagram:
    payload: bytes
    submit_time: float
    delivery_time: float
    dropped: bool


class Link:
    """One direction of an emulated network path."""

    def __init__(self, config: LinkConfig):
        self.config = config
        self._rng = np.random.Generator(np.random.PCG64(config.seed))
        self._heap: list[tuple[float, int, bytes]] = []
        self._counter = 0
        self._last_now = -np.inf
        self._last_scheduled = -np.inf
        self.submitted = 0
        self.delivered = 0
        self.dropped = 0
        self.bytes_submitted = 0

    def _check_clock(self, now: float) -> None:
        if now < self._last_now:
            raise ValueError(f"clock moved backwards: {now} < {self._last_now}")
        self._last_now = now

    def submit(self, payload: bytes, now: float) -> InFlightDatagram:
        """Schedule one datagram; the drop decision is made immediately."""
        self._check_clock(now)
        self.submitted += 1
        self.bytes_submitted += len(payload)
        cfg = self.config
        if self._rng.random() < cfg.loss_probability:
            self.dropped += 1
            return InFlightDatagram(payload, now, now, dropped=True)
        delivery = now + cfg.one_way_delay
        if cfg.jitter_stddev > 0:
            delivery += max(0.0, self._rng.normal(0.0, cfg.jitter_stddev))
        if not cfg.reorder_allowed and delivery < self._last_scheduled:
            delivery = self._last_scheduled  # FIFO clamp
        self._last_scheduled = delivery
        heapq.heappush(self._heap, (delivery, self._counter, payload))
        self._counter += 1
        return InFlightDatagram(payload, now, delivery, dropped=False)

    def drain(self, now: float) -> list[bytes]:
        """All payloads whose delivery time has passed, in delivery order."""
        self._check_clock(now)
        out = []
        while self._heap and self._heap[0][0] <= now:
            _, _, payload = heapq.heappop(self._heap)
            out.append(payload)
        self.delivered += len(out)
        return out

    @property
    def in_flight(self) -> int:
        return len(self._heap)

    def adopt_in_flight(self, old: "Link") -> None:
        """Take over another link's scheduled datagrams (live reconfiguration)."""
        self._heap = list(old._heap)
        heapq.heapify(self._heap)
        self._counter = old._counter
        self._last_now = max(self._last_now, old._last_now)
        self._last_scheduled = old._last_scheduled
        self.submitted += old.submitted
        self.delivered += old.delivered
        self.dropped += old.dropped
        self.bytes_submitted += old.bytes_submitted


def link_pair(rtt: float, *, jitter: float = 0.0, loss: float = 0.0,
              seed: int = 0, reorder: bool = False) -> tuple[Link, Link]:
    """Forward/return links sharing one RTT; seeds are derived per direction."""
    fwd, ret = np.random.SeedSequence(seed).spawn(2)
    mk = lambda ss: Link(LinkConfig(rtt / 2.0, jitter, loss, int(ss.generate_state(1)[0]), reorder))
    return mk(fwd), mk(ret)
