"""Socket runner for the firmware emulator: one thread per emulated link.

Connects, performs the handshake, then ticks the firmware on a wall-clock
cadence; reconnects when the transport drops or the epoch never arrives.
"""

from __future__ import annotations

import socket
import threading
import time
from typing import Optional

from .firmware import LinkFirmware


class LinkClient:
    """Runs one LinkFirmware against a TCP server."""

    def __init__(
        self,
        device_id: int,
        host: str = "127.0.0.1",
        port: int = 9700,
        tick_period: float = 0.05,
        firmware: Optional[LinkFirmware] = None,
        reconnect_delay: float = 0.5,
    ):
        self.firmware = firmware or LinkFirmware(device_id)
        self.host = host
        self.port = port
        self.tick_period = tick_period
        self.reconnect_delay = reconnect_delay
        self._stop = threading.Event()
        self._thread: Optional[threading.Thread] = None
        self.connects = 0

    @property
    def device_id(self) -> int:
        return self.firmware.device_id

    def start(self) -> "LinkClient":
        self._thread = threading.Thread(target=self._run, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._stop.set()
        if self._thread:
            self._thread.join(timeout=2.0)

    def _run(self) -> None:
        while not self._stop.is_set():
            try:
                self._session()
            except OSError:
                pass
            if not self._stop.is_set():
                time.sleep(self.reconnect_delay)

    def _session(self) -> None:
        with socket.create_connection((self.host, self.port), timeout=2.0) as conn:
            conn.settimeout(self.tick_period)
            self.connects += 1
            now = time.monotonic()
            conn.sendall(self.firmware.on_connected(now))
            last = now
            while not self._stop.is_set():
                try:
                    data = conn.recv(4096)
                    if not data:
                        return
                except socket.timeout:
                    data = b""
                now = time.monotonic()
                if data:
                    reply = self.firmware.on_bytes(data, now)
                    if reply:
                        conn.sendall(reply)
                if now - last >= self.tick_period:
                    out = self.firmware.tick(now, now - last)
                    last = now
                    if out:
                        conn.sendall(out)
                if self.firmware.needs_reconnect(now):
                    return
