"""Integrated serve mode: physics world, firmware emulators, command server,
gait controllers and the teleop bridge in one paced loop.

The stepping loop is single-threaded; the network layers only enqueue
commands toward it and receive immutable snapshots from it.
"""

from __future__ import annotations

import queue
import threading
import time
from dataclasses import dataclass
from typing import Optional

from .bridge import TeleopBridge, snapshot_message
from .firmware import LinkFirmware
from .gaits import GaitScript, _phase_commands, compile_gait, topple_script
from .morphology import default_catalog, match_morphology, structure_graph_from_scene, wl_hash
from .rmlp import (
    FLAG_RETRACTED_A,
    FLAG_RETRACTED_B,
    Command,
    Opcode,
    ServoSelect,
    encode,
)
from .server import RmlpServer
from .sim.world import MAX_STROKE, SimWorld
from .structures import RoleAssignment
from .teleop import TeleopCommand, parse_teleop

PRESET_DIRECTIONS = {0: "forward", 1: "right", 2: "left"}


@dataclass
class ActiveScript:
    script: GaitScript
    roles: RoleAssignment
    phase_index: int = -1
    phase_end: float = 0.0
    cycles_left: int = 0


class ServeRuntime:
    """Owns the world and executes teleop plus scripted control."""

    def __init__(
        self,
        world: SimWorld,
        roles: Optional[RoleAssignment] = None,
        rmlp_port: int = 0,
        ws_port: int = 0,
        host: str = "127.0.0.1",
        speed: float = 1.0,
        snapshot_hz: float = 20.0,
        session_timeout: float = 10.0,
    ):
        self.world = world
        self.roles = roles
        self.speed = speed
        self.snapshot_period = 1.0 / snapshot_hz
        self.catalog = default_catalog()
        self.server = RmlpServer(host=host, port=rmlp_port, timeout=session_timeout)
        self.bridge = TeleopBridge(host=host, port=ws_port, on_keys=self._on_keys)
        self.firmwares: dict[int, LinkFirmware] = {}
        for link_id in world.link_ids:
            fw = LinkFirmware(link_id)
            state = world.link_state(link_id)
            fw.servo_a.actual_ext = state.servo_a_ext
            fw.servo_b.actual_ext = state.servo_b_ext
            fw.servo_a.set_target(state.servo_a_ext)
            fw.servo_b.set_target(state.servo_b_ext)
            self.firmwares[link_id] = fw
        self._commands: "queue.Queue[TeleopCommand]" = queue.Queue()
        self.crawl_mode = False
        self.crawl_direction = 0
        self.active_script: Optional[ActiveScript] = None
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None
        self.control_steps = 10  # physics steps per control tick

    # --- lifecycle --------------------------------------------------------

    def start(self) -> "ServeRuntime":
        self.server.start()
        self.bridge.start()
        self._thread = threading.Thread(target=self._loop, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._stop.set()
        if self._thread:
            self._thread.join(timeout=3.0)
        self.bridge.stop()
        self.server.stop()

    # --- teleop intake ------------------------------------------------------

    def _on_keys(self, keys, msg) -> None:
        command = parse_teleop(keys, self.crawl_mode)
        self._commands.put(command)

    def inject_keys(self, keys) -> None:
        """Inject a key chord as if typed at the terminal."""
        self._commands.put(parse_teleop(keys, self.crawl_mode))

    # --- execution ----------------------------------------------------------

    def _ordinal_to_link(self, ordinal: int) -> Optional[int]:
        ids = sorted(self.firmwares)
        if 1 <= ordinal <= len(ids):
            return ids[ordinal - 1]
        return None

    def _selected_links(self, command: TeleopCommand) -> list[int]:
        if not command.selection:
            return sorted(self.firmwares)
        out = []
        for ordinal in sorted(command.selection):
            link = self._ordinal_to_link(ordinal)
            if link is not None:
                out.append(link)
        return out

    def _servo_select(self, command: TeleopCommand) -> int:
        return {"A": ServoSelect.A, "B": ServoSelect.B, "both": ServoSelect.BOTH}[
            command.servo_select
        ]

    def _send_to_links(self, link_ids, wire_command: Command) -> None:
        payload = encode(wire_command)
        now = self.world.sim_time
        for link_id in link_ids:
            fw = self.firmwares.get(link_id)
            if fw is not None:
                fw.on_bytes(payload, now)

    def _apply_teleop(self, command: TeleopCommand) -> None:
        target_full = round(MAX_STROKE * 10_000)
        if command.action == "none":
            return
        if command.action == "crawl_mode_toggle":
            self.crawl_mode = not self.crawl_mode
            return
        if command.action == "crawl_direction":
            self.crawl_direction = command.direction or 0
            return
        if command.action == "crawl_toggle":
            select = ServoSelect.A if self.crawl_direction == 0 else ServoSelect.B
            for link_id in self._selected_links(command):
                fw = self.firmwares[link_id]
                opcode = (
                    Opcode.CRAWL_STOP
                    if fw.crawl_direction is not None
                    else Opcode.CRAWL_START
                )
                self._send_to_links([link_id], Command(opcode, select, 0, 0))
            return
        if command.action == "stop":
            self.active_script = None
            self._send_to_links(
                sorted(self.firmwares), Command(Opcode.STOP, ServoSelect.BOTH, 0, 0)
            )
            self.server.send_command(
                "all", Command(Opcode.STOP, ServoSelect.BOTH, 0, 0)
            )
            return
        if command.action == "full_contract_all":
            self._send_to_links(
                sorted(self.firmwares),
                Command(Opcode.SET_TARGET, ServoSelect.BOTH, 0, 0),
            )
            return
        if command.action == "full_expand_all":
            self._send_to_links(
                sorted(self.firmwares),
                Command(Opcode.SET_TARGET, ServoSelect.BOTH, target_full, 0),
            )
            return
        if command.action == "expand":
            self._send_to_links(
                self._selected_links(command),
                Command(Opcode.SET_TARGET, self._servo_select(command), target_full, 0),
            )
            return
        if command.action == "contract":
            self._send_to_links(
                self._selected_links(command),
                Command(Opcode.SET_TARGET, self._servo_select(command), 0, 0),
            )
            return
        if command.action == "ratchet_reset":
            self.active_script = None
            return
        if command.action == "preset":
            self._start_preset(command)

    def _start_preset(self, command: TeleopCommand) -> None:
        if self.roles is None:
            return
        preset = command.preset
        roles = self.roles
        try:
            if preset == "topple":
                direction = PRESET_DIRECTIONS.get(command.variant, "forward")
                script = topple_script(roles, direction)
            elif preset == "rotate ccw":
                script = compile_gait(roles.topology, roles, "rotate_ccw")
            elif preset == "rotate cw":
                script = compile_gait(roles.topology, roles, "rotate_cw")
            else:
                topology = {
                    "triangle crawl": "triangle",
                    "tetrahedron crawl": "tetrahedron",
                    "diamond crawl": "diamond-with-tail",
                    "ratchet crawl": "ratchet tetrahedron",
                }.get(preset)
                if topology is None or topology != roles.topology:
                    return
                script = compile_gait(topology, roles)
        except ValueError:
            return
        self.active_script = ActiveScript(
            script=script, roles=roles, cycles_left=1
        )

    def _advance_script(self) -> None:
        active = self.active_script
        if active is None:
            return
        now = self.world.sim_time
        if active.phase_index >= 0 and now < active.phase_end - 1e-9:
            return
        active.phase_index += 1
        if active.phase_index >= len(active.script.phases):
            if active.cycles_left > 1:
                active.cycles_left -= 1
                active.phase_index = 0
            else:
                self.active_script = None
                return
        phase = active.script.phases[active.phase_index]
        active.phase_end = now + phase.duration
        for link_id, wire_command in _phase_commands(phase, active.roles):
            self._send_to_links([link_id], wire_command)

    def _apply_network_updates(self) -> None:
        """Mirror servo state reported by TCP-connected links into the world."""
        for entry in self.server.registry.entries():
            update = entry.session.latest_update
            if update is None or entry.device_id not in self.world._index:
                continue
            if entry.device_id in self.firmwares:
                continue  # in-process emulation owns this link
            ext_a = min(update.servo_a_tenths_mm / 10_000.0, MAX_STROKE)
            ext_b = min(update.servo_b_tenths_mm / 10_000.0, MAX_STROKE)
            self.world.set_extensions(entry.device_id, ext_a, ext_b)
            act_a = 0.0 if update.flags & FLAG_RETRACTED_A else 1.0
            act_b = 0.0 if update.flags & FLAG_RETRACTED_B else 1.0
            self.world.set_activations(entry.device_id, act_a, act_b)

    def step_once(self) -> None:
        """One control tick: teleop, scripts, firmware, physics."""
        while True:
            try:
                command = self._commands.get_nowait()
            except queue.Empty:
                break
            self._apply_teleop(command)
        self._advance_script()
        control_dt = self.control_steps * self.world.config.timestep
        now = self.world.sim_time
        for link_id, fw in self.firmwares.items():
            fw.tick(now, control_dt)
            self.world.set_extensions(
                link_id, fw.servo_a.actual_ext, fw.servo_b.actual_ext
            )
            self.world.set_activations(link_id, fw.activation(0), fw.activation(1))
        self._apply_network_updates()
        self.world.step_magnets(self.control_steps)

    def snapshot_text(self) -> str:
        snap = self.world.snapshot()
        graph = structure_graph_from_scene(self.world.tip_positions())
        names = match_morphology(graph, self.catalog)
        digest = wl_hash(graph).canonical
        return snapshot_message(snap, names, digest)

    def _loop(self) -> None:
        control_dt = self.control_steps * self.world.config.timestep
        next_snapshot = self.world.sim_time
        next_wall = 0.0
        while not self._stop.is_set():
            wall_start = time.monotonic()
            self.step_once()
            # snapshot cadence follows sim time but is capped in wall time so
            # accelerated runs do not flood the wire
            if self.world.sim_time >= next_snapshot and wall_start >= next_wall:
                self.bridge.broadcast(self.snapshot_text())
                next_snapshot = self.world.sim_time + self.snapshot_period
                next_wall = wall_start + 1.0 / 30.0
            budget = control_dt / self.speed - (time.monotonic() - wall_start)
            if budget > 0:
                time.sleep(budget)
