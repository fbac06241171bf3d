"""Fault events, uniform space/time schedules and in-trial injection."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from ..errors import InvalidValueError
from ..qnn.network import NetworkModel
from .address import BitAddressSpace, build_address_space, flip_bit, inject_mbu

MODES = ("SEU", "MBU")


def normalize_mode(mode: str) -> str:
    m = str(mode).upper()
    if m not in MODES:
        raise InvalidValueError(f"unknown fault mode {mode!r}")
    return m


@dataclass(frozen=True)
class FaultEvent:
    mode: str
    domain: str
    layer: int
    bit_index: int
    time: int


@dataclass(frozen=True)
class FaultSchedule:
    space: BitAddressSpace
    events: tuple[FaultEvent, ...]
    batch_size: int

    def __len__(self):
        return len(self.events)

    def times(self) -> np.ndarray:
        return np.array([e.time for e in self.events], dtype=np.int64)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["event_index", "mode", "domain", "scope", "bit_index", "time"])
            for i, e in enumerate(self.events):
                w.writerow([i, e.mode, e.domain, e.layer, e.bit_index, e.time])


def schedule_uniform(space: BitAddressSpace, n_faults: int, batch_size: int, mode: str,
                     rng: np.random.Generator) -> FaultSchedule:
    """``n_faults`` events with i.i.d. uniform bit addresses and image times, sorted by time."""
    mode = normalize_mode(mode)
    if n_faults < 0:
        raise InvalidValueError("fault count must be non-negative")
    if batch_size < 1:
        raise InvalidValueError("batch size must be at least 1")
    if n_faults and space.size == 0:
        raise InvalidValueError("cannot schedule faults in an empty address space")
    bits = rng.integers(0, space.size, n_faults) if n_faults else np.zeros(0, dtype=np.int64)
    times = rng.integers(0, batch_size, n_faults) if n_faults else np.zeros(0, dtype=np.int64)
    order = np.argsort(times, kind="stable")
    events = tuple(FaultEvent(mode, space.domain, space.layer, int(bits[i]), int(times[i])) for i in order)
    return FaultSchedule(space, events, batch_size)


def schedule_in_layer(net: NetworkModel, layer_k: int, domain: str, n_faults: int, batch_size: int,
                      mode: str, rng: np.random.Generator) -> FaultSchedule:
    if layer_k < 1:
        raise InvalidValueError("in-layer scope needs a layer number >= 1")
    space = build_address_space(net, domain, layer_k)
    return schedule_uniform(space, n_faults, batch_size, mode, rng)


def apply_event(net: NetworkModel, space: BitAddressSpace, event: FaultEvent) -> None:
    if event.mode == "SEU":
        flip_bit(net, space, event.bit_index)
    else:
        inject_mbu(net, space, event.bit_index)


class Injection:
    """Applies a schedule to one network as the batch advances.

    Faults accumulate: once applied, an event's corruption stays until
    :meth:`revert` undoes every applied event (each flip is an involution).
    """

    def __init__(self, net: NetworkModel, schedule: FaultSchedule):
        self.net = net
        self.schedule = schedule
        self.applied = 0
        self._last_t = -1

    def apply_due_events(self, t: int) -> int:
        """Apply every pending event with ``time <= t``; returns how many were applied."""
        if t < self._last_t:
            raise InvalidValueError(f"time went backwards ({t} < {self._last_t})")
        self._last_t = t
        events = self.schedule.events
        start = self.applied
        while self.applied < len(events) and events[self.applied].time <= t:
            apply_event(self.net, self.schedule.space, events[self.applied])
            self.applied += 1
        return self.applied - start

    def revert(self) -> None:
        for e in reversed(self.schedule.events[:self.applied]):
            apply_event(self.net, self.schedule.space, e)
        self.applied = 0
        self._last_t = -1


def apply_due_events(injection: Injection, t: int) -> int:
    return injection.apply_due_events(t)
