"""Firmware emulator for one link: handshake client, bang-bang servo control
with closed-loop profiles, battery drain and the low-battery death sequence.

The emulator is sans-io: it consumes inbound bytes and a time source and
produces outbound bytes, so the same state machine runs against real sockets,
in-process pipes, or a virtual clock in tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

from .magnets import FULL_RETRACTION, activation_from_retraction
from .rmlp import (
    Command,
    FrameError,
    FramePackage,
    FrameParser,
    Hello,
    Opcode,
    ServoSelect,
    TimeEpoch,
    Update,
    encode,
)
from .rmlp import FLAG_DEAD, FLAG_MOVING_A, FLAG_MOVING_B
from .rmlp import FLAG_RETRACTED_A, FLAG_RETRACTED_B
from .sim.world import MAX_STROKE

UPDATE_PERIOD = 0.1  # seconds between Update packages
EPOCH_TIMEOUT = 10.0  # give up waiting for the Time Epoch after this long
CRAWL_CYCLE_TIME = 36.0
CRAWL_AMPLITUDE = 0.055


@dataclass
class ServoController:
    """Bang-bang actuator: full speed or hold, gated by a 5 mm deadband.

    Motion starts only when the error exceeds the deadband, then runs at
    full speed until the target is reached or crossed (at most one tick of
    overshoot), mirroring the physical motor's threshold behavior.
    """

    actual_ext: float = 0.0
    commanded_target: float = 0.0
    max_speed: float = 0.005  # m/s; 75 mm stroke in 15 s
    deadband: float = 0.005
    max_stroke: float = MAX_STROKE
    moving: bool = False

    def set_target(self, target: float) -> None:
        self.commanded_target = min(max(target, 0.0), self.max_stroke)


def bang_bang_step(servo: ServoController, dt: float) -> ServoController:
    """Advance the servo one tick; returns the same (mutated) controller."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    err = servo.commanded_target - servo.actual_ext
    if not servo.moving:
        if abs(err) <= servo.deadband:
            return servo
        servo.moving = True
    if err == 0.0:
        servo.moving = False
        return servo
    step = servo.max_speed * dt
    if step >= abs(err):
        # full-speed tick reaches or crosses the target: at most one tick of
        # overshoot, then hold
        servo.moving = False
    servo.actual_ext += math.copysign(step, err)
    servo.actual_ext = min(max(servo.actual_ext, 0.0), servo.max_stroke)
    return servo


@dataclass
class MotionProfile:
    """Time-parameterized target source for closed-loop execution."""

    kind: str  # step | ramp | sinusoid
    start_time: float
    duration: float
    start_value: float = 0.0
    end_value: float = 0.0
    center: float = 0.0
    amplitude: float = 0.0
    period: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in ("step", "ramp", "sinusoid"):
            raise ValueError(f"unknown profile kind {self.kind!r}")
        if self.duration < 0:
            raise ValueError("duration must be >= 0")


def closed_loop_execute(profile: MotionProfile, t_now: float) -> float:
    """Profile value at t_now, clamped to the profile window ends."""
    t = min(max(t_now - profile.start_time, 0.0), profile.duration)
    if profile.kind == "step":
        return profile.end_value
    if profile.kind == "ramp":
        if profile.duration == 0:
            return profile.end_value
        f = t / profile.duration
        return profile.start_value + (profile.end_value - profile.start_value) * f
    # sinusoid
    if profile.period <= 0:
        return profile.center
    return profile.center + profile.amplitude * math.sin(
        2 * math.pi * t / profile.period
    )


@dataclass
class BatteryModel:
    """Linear drain, faster while a servo is moving; death below threshold."""

    voltage: float = 8.4
    idle_drain_per_min: float = 0.01
    moving_drain_per_min: float = 0.1
    critical_threshold: float = 6.4

    def drain(self, dt: float, moving: bool) -> None:
        rate = self.moving_drain_per_min if moving else self.idle_drain_per_min
        self.voltage = max(0.0, self.voltage - rate * dt / 60.0)

    @property
    def critical(self) -> bool:
        return self.voltage < self.critical_threshold


class Phase(str, Enum):
    CONNECTING = "connecting"
    HELLO_SENT = "hello_sent"
    RUNNING = "running"
    DEAD_RUNNING = "dead"  # death sequence active; session stays up


def battery_and_death_step(firmware: "LinkFirmware", dt: float) -> "LinkFirmware":
    """Drain the battery and run the death sequence when it goes critical.

    Once dead the link is absorbing: servos drive to zero, both magnets
    retract to zero activation, and commands are ignored.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    moving = firmware.servo_a.moving or firmware.servo_b.moving
    firmware.battery.drain(dt, moving)
    if firmware.battery.critical and not firmware.dead:
        firmware.trigger_death()
    if firmware.dead:
        bang_bang_step(firmware.servo_a, dt)
        bang_bang_step(firmware.servo_b, dt)
        for idx in (0, 1):
            delta = firmware.retraction_target[idx] - firmware.retraction[idx]
            step = firmware.retraction_speed * dt
            if abs(delta) <= step:
                firmware.retraction[idx] = firmware.retraction_target[idx]
            else:
                firmware.retraction[idx] += math.copysign(step, delta)
    return firmware


_CRAWL_PHASES = (  # (duration, target_front, target_back)
    (11.0, CRAWL_AMPLITUDE, 0.0),
    (11.0, 0.0, CRAWL_AMPLITUDE),
    (11.0, 0.0, 0.0),
    (3.0, 0.0, 0.0),
)
assert abs(sum(p[0] for p in _CRAWL_PHASES) - CRAWL_CYCLE_TIME) < 1e-9


class LinkFirmware:
    """Control loop state for one emulated link."""

    def __init__(
        self,
        device_id: int,
        battery: Optional[BatteryModel] = None,
        update_period: float = UPDATE_PERIOD,
        epoch_timeout: float = EPOCH_TIMEOUT,
    ):
        self.device_id = device_id
        self.servo_a = ServoController()
        self.servo_b = ServoController()
        self.battery = battery or BatteryModel()
        self.update_period = update_period
        self.epoch_timeout = epoch_timeout
        self.phase = Phase.CONNECTING
        self.clock_offset: Optional[float] = None
        self.dead = False
        self.retraction = [0.0, 0.0]  # actual magnet retraction per end
        self.retraction_target = [0.0, 0.0]
        self.retraction_speed = 0.005
        self.profiles: list[Optional[MotionProfile]] = [None, None]
        self.crawl_direction: Optional[int] = None
        self.crawl_started_at = 0.0
        self._parser = FrameParser()
        self._hello_time: Optional[float] = None
        self._next_update: Optional[float] = None
        self._last_time: Optional[float] = None

    # --- session ----------------------------------------------------------

    def on_connected(self, now: float) -> bytes:
        self.phase = Phase.HELLO_SENT
        self._hello_time = now
        self._parser = FrameParser()
        return encode(Hello(self.device_id))

    def needs_reconnect(self, now: float) -> bool:
        return (
            self.phase == Phase.HELLO_SENT
            and self._hello_time is not None
            and now - self._hello_time > self.epoch_timeout
        )

    def on_bytes(self, data: bytes, now: float) -> bytes:
        out = b""
        for event in self._parser.feed(data):
            if isinstance(event, FrameError):
                continue  # malformed inbound packages are discarded
            pkg = event.package
            if isinstance(pkg, TimeEpoch) and self.phase == Phase.HELLO_SENT:
                self.clock_offset = pkg.unix_seconds - now
                self.phase = Phase.RUNNING
                self._next_update = now
            elif isinstance(pkg, Command):
                self._execute(pkg, now)
        return out

    # --- command execution --------------------------------------------------

    def _selected(self, servo_select: int) -> list[int]:
        if servo_select == ServoSelect.A:
            return [0]
        if servo_select == ServoSelect.B:
            return [1]
        return [0, 1]

    def _servo(self, index: int) -> ServoController:
        return self.servo_a if index == 0 else self.servo_b

    def _execute(self, cmd: Command, now: float) -> None:
        if self.dead:
            return  # the dead state is absorbing
        opcode = cmd.opcode
        target = cmd.target_tenths_mm / 10_000.0  # tenths of mm -> meters
        duration = cmd.duration_ds / 10.0
        if opcode == Opcode.STOP:
            self.crawl_direction = None
            for idx in (0, 1):
                self.profiles[idx] = None
                servo = self._servo(idx)
                servo.set_target(servo.actual_ext)
                servo.moving = False
        elif opcode == Opcode.SET_TARGET:
            for idx in self._selected(cmd.servo_select):
                servo = self._servo(idx)
                if duration <= 0:
                    self.profiles[idx] = MotionProfile(
                        "step", now, 0.0, end_value=target
                    )
                else:
                    self.profiles[idx] = MotionProfile(
                        "ramp", now, duration,
                        start_value=servo.actual_ext, end_value=target,
                    )
        elif opcode == Opcode.CRAWL_START:
            direction = 0 if cmd.servo_select == ServoSelect.A else 1
            self.crawl_direction = direction
            self.crawl_started_at = now
            self.profiles = [None, None]
        elif opcode == Opcode.CRAWL_STOP:
            self.crawl_direction = None
        elif opcode == Opcode.RETRACT_MAGNET:
            for idx in self._selected(cmd.servo_select):
                self.retraction_target[idx] = FULL_RETRACTION
        elif opcode == Opcode.EXTEND_MAGNET:
            for idx in self._selected(cmd.servo_select):
                self.retraction_target[idx] = 0.0
        elif opcode == Opcode.DIE:
            self.trigger_death()

    def trigger_death(self) -> None:
        """Fully contract and detach: the programmed shutdown sequence."""
        self.dead = True
        self.phase = Phase.DEAD_RUNNING
        self.crawl_direction = None
        self.profiles = [None, None]
        self.servo_a.set_target(0.0)
        self.servo_b.set_target(0.0)
        self.retraction_target = [FULL_RETRACTION, FULL_RETRACTION]

    # --- periodic work ------------------------------------------------------

    def _crawl_targets(self, now: float) -> tuple[float, float]:
        t = (now - self.crawl_started_at) % CRAWL_CYCLE_TIME
        elapsed = 0.0
        for duration, front, back in _CRAWL_PHASES:
            if t < elapsed + duration:
                if self.crawl_direction == 0:
                    return front, back
                return back, front
            elapsed += duration
        return 0.0, 0.0

    def tick(self, now: float, dt: float) -> bytes:
        """Advance actuators, battery and death state; emit due Updates."""
        if self._last_time is not None and now < self._last_time:
            raise ValueError("time went backwards")
        self._last_time = now

        if not self.dead:
            if self.crawl_direction is not None:
                ta, tb = self._crawl_targets(now)
                self.servo_a.set_target(ta)
                self.servo_b.set_target(tb)
            else:
                for idx in (0, 1):
                    profile = self.profiles[idx]
                    if profile is not None:
                        self._servo(idx).set_target(
                            closed_loop_execute(profile, now)
                        )
        bang_bang_step(self.servo_a, dt)
        bang_bang_step(self.servo_b, dt)
        for idx in (0, 1):
            delta = self.retraction_target[idx] - self.retraction[idx]
            step = self.retraction_speed * dt
            if abs(delta) <= step:
                self.retraction[idx] = self.retraction_target[idx]
            else:
                self.retraction[idx] += math.copysign(step, delta)

        moving = self.servo_a.moving or self.servo_b.moving
        self.battery.drain(dt, moving)
        if self.battery.critical and not self.dead:
            self.trigger_death()

        if self.phase in (Phase.RUNNING, Phase.DEAD_RUNNING):
            if self._next_update is not None and now >= self._next_update:
                self._next_update += self.update_period
                return encode(self.make_update())
        return b""

    # --- observable state -----------------------------------------------------

    def activation(self, end: int) -> float:
        return activation_from_retraction(self.retraction[end])

    def make_update(self) -> Update:
        flags = 0
        if self.dead:
            flags |= FLAG_DEAD
        if self.servo_a.moving:
            flags |= FLAG_MOVING_A
        if self.servo_b.moving:
            flags |= FLAG_MOVING_B
        if self.activation(0) == 0.0:
            flags |= FLAG_RETRACTED_A
        if self.activation(1) == 0.0:
            flags |= FLAG_RETRACTED_B
        return Update(
            servo_a_tenths_mm=round(self.servo_a.actual_ext * 10_000),
            servo_b_tenths_mm=round(self.servo_b.actual_ext * 10_000),
            battery_centivolts=round(self.battery.voltage * 100),
            flags=flags,
        )
