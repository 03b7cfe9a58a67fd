"""Two-cylinder material-transfer plant.

Cylinder 2 lifts an arriving box; cylinder 1 pushes it off the raised
plate; both return home.  Positions are held in integer milli-units so
stroke arithmetic is exact.  Retracting cylinder 2 while a box is still on
the plate drops the box: the hazard flag latches for the rest of the run.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import IntEnum

FULL = 1000  # milli-position of a fully extended cylinder


class Command(IntEnum):
    HOLD = 0
    EXTEND = 1
    RETRACT = 2


@dataclass
class CommandWrite:
    time: int
    cylinder: int
    command: Command
    changed: bool


class Plant:
    def __init__(self, rate_per_tick: float = 0.1):
        self.rate_milli = round(rate_per_tick * FULL)
        if self.rate_milli <= 0:
            raise ValueError("cylinder rate must be positive")
        self.cyl1 = 0
        self.cyl2 = 0
        self.cmd1 = Command.HOLD
        self.cmd2 = Command.HOLD
        self.box_present = False
        self.box_pushed_off = False
        self.hazard = False
        self.hazard_time: int | None = None
        self.boxes_arrived = 0
        self.boxes_skipped = 0
        self.writes: list[CommandWrite] = []
        self.samples: list[tuple[int, int, int, bool, bool, bool]] = []

    # -- actuation ----------------------------------------------------------

    def set_command(self, cylinder: int, command: Command, now: int) -> None:
        current = self.cmd1 if cylinder == 1 else self.cmd2
        changed = command != current
        self.writes.append(CommandWrite(now, cylinder, command, changed))
        if not changed:
            return
        if cylinder == 1:
            self.cmd1 = command
        else:
            if (command is Command.RETRACT and self.box_present
                    and not self.box_pushed_off and not self.hazard):
                # Box dropped mid-lift: permanent damage, box leaves the plate.
                self.hazard = True
                self.hazard_time = now
                self.box_present = False
            self.cmd2 = command

    # -- physics ------------------------------------------------------------

    @staticmethod
    def _move(pos: int, cmd: Command, step: int) -> int:
        if cmd is Command.EXTEND:
            return min(FULL, pos + step)
        if cmd is Command.RETRACT:
            return max(0, pos - step)
        return pos

    def step(self, now: int) -> None:
        """Advance one tick of motion, then evaluate the push-off predicate."""
        self.cyl1 = self._move(self.cyl1, self.cmd1, self.rate_milli)
        self.cyl2 = self._move(self.cyl2, self.cmd2, self.rate_milli)
        if self.cyl1 == FULL and self.cyl2 == FULL and self.box_present:
            self.box_pushed_off = True
            self.box_present = False

    def try_box_arrival(self, now: int) -> bool:
        """A new box lands only on an empty, lowered plate."""
        if self.box_present or self.cyl2 != 0:
            self.boxes_skipped += 1
            return False
        self.box_present = True
        self.box_pushed_off = False
        self.boxes_arrived += 1
        return True

    def sample(self, now: int) -> None:
        self.samples.append((now, self.cyl1, self.cyl2,
                             self.box_present, self.box_pushed_off, self.hazard))

    # -- sensors ------------------------------------------------------------

    def sensor_box(self) -> bool:
        return self.box_present

    def sensor_box_top(self) -> bool:
        return self.cyl2 == FULL and self.box_present

    def sensor_cyl1_end(self) -> bool:
        return self.cyl1 == FULL

    @property
    def cyl1_pos(self) -> float:
        return self.cyl1 / FULL

    @property
    def cyl2_pos(self) -> float:
        return self.cyl2 / FULL


def completed_cycles(samples: list[tuple]) -> list[int]:
    """Timestamps where both cylinders return home with the box pushed off."""
    done: list[int] = []
    prev_home = False
    for t, c1, c2, _bp, pushed, _hz in samples:
        home = c1 == 0 and c2 == 0 and pushed
        if home and not prev_home:
            done.append(t)
        prev_home = home
    return done
