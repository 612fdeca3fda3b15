"""Control server: listener, per-link sessions, shared epoch, command fan-out.

Session protocol (one per connection): receive Hello with the device id,
answer with the Time Epoch (the server start time, the shared reference
clock), then consume Updates; a session closes after 10 seconds of silence
or on disconnect.  Per connection one thread only reads from the socket
while writers serialize through a lock, so reads and writes never race.

The protocol state machine is sans-io (ServerSession) and is also used
directly with a virtual clock in tests.
"""

from __future__ import annotations

import socket
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Optional

from .rmlp import (
    Command,
    FrameError,
    FramePackage,
    FrameParser,
    Hello,
    TimeEpoch,
    Update,
    encode,
)

SESSION_TIMEOUT = 10.0


@dataclass
class SessionEvents:
    """Callbacks a session raises toward the registry/host."""

    on_hello: Callable = lambda session: None
    on_update: Callable = lambda session, update: None
    on_close: Callable = lambda session: None


class ServerSession:
    """Sans-io per-link session state machine."""

    def __init__(
        self,
        epoch_unix: int,
        now: float,
        timeout: float = SESSION_TIMEOUT,
        events: Optional[SessionEvents] = None,
    ):
        self.epoch_unix = epoch_unix
        self.timeout = timeout
        self.events = events or SessionEvents()
        self.phase = "awaiting_hello"
        self.device_id: Optional[int] = None
        self.epoch_sent = False
        self.last_rx = now
        self.latest_update: Optional[Update] = None
        self.rejected_frames = 0
        self._parser = FrameParser()

    def on_bytes(self, data: bytes, now: float) -> bytes:
        """Consume inbound bytes; returns bytes to send back."""
        if self.phase == "closed":
            return b""
        self.last_rx = now
        out = b""
        for event in self._parser.feed(data):
            if isinstance(event, FrameError):
                # bad checksum: discard; the sender repeats the package
                self.rejected_frames += 1
                continue
            pkg = event.package
            if isinstance(pkg, Hello) and self.phase == "awaiting_hello":
                self.device_id = pkg.device_id
                self.phase = "running"
                self.epoch_sent = True
                out += encode(TimeEpoch(self.epoch_unix))
                self.events.on_hello(self)
            elif isinstance(pkg, Update) and self.phase == "running":
                self.latest_update = pkg
                self.events.on_update(self, pkg)
        return out

    def poll(self, now: float) -> bool:
        """Returns True while the session should stay open."""
        if self.phase == "closed":
            return False
        if now - self.last_rx > self.timeout:
            self.close()
            return False
        return True

    def close(self) -> None:
        if self.phase != "closed":
            self.phase = "closed"
            self.events.on_close(self)


@dataclass
class LinkEntry:
    device_id: int
    session: ServerSession
    send: Callable[[bytes], None]
    ordinal: int = 0


class LinkRegistry:
    """device_id -> live session, with contiguous ascending-id ordinals."""

    def __init__(self):
        self._lock = threading.Lock()
        self._entries: dict[int, LinkEntry] = {}

    def register(self, entry: LinkEntry) -> Optional[LinkEntry]:
        """Insert; returns a superseded older entry for the same id, if any."""
        with self._lock:
            old = self._entries.get(entry.device_id)
            self._entries[entry.device_id] = entry
            self._renumber()
        return old

    def remove(self, session: ServerSession) -> None:
        with self._lock:
            for device_id, entry in list(self._entries.items()):
                if entry.session is session:
                    del self._entries[device_id]
            self._renumber()

    def _renumber(self) -> None:
        for ordinal, device_id in enumerate(sorted(self._entries), start=1):
            self._entries[device_id].ordinal = ordinal

    def by_ordinal(self, ordinal: int) -> Optional[LinkEntry]:
        with self._lock:
            for entry in self._entries.values():
                if entry.ordinal == ordinal:
                    return entry
        return None

    def entries(self) -> list[LinkEntry]:
        with self._lock:
            return sorted(self._entries.values(), key=lambda e: e.ordinal)

    def ordinals(self) -> dict[int, int]:
        with self._lock:
            return {e.ordinal: e.device_id for e in self._entries.values()}

    def __len__(self) -> int:
        with self._lock:
            return len(self._entries)


@dataclass
class Delivery:
    ordinal: int
    device_id: Optional[int]
    ok: bool
    error: str = ""


class RmlpServer:
    """Threaded TCP host for link sessions."""

    def __init__(
        self,
        host: str = "127.0.0.1",
        port: int = 0,
        timeout: float = SESSION_TIMEOUT,
        epoch_unix: Optional[int] = None,
    ):
        self.host = host
        self.port = port
        self.timeout = timeout
        self.epoch_unix = int(time.time()) if epoch_unix is None else epoch_unix
        self.registry = LinkRegistry()
        self._listener: Optional[socket.socket] = None
        self._threads: list[threading.Thread] = []
        self._stop = threading.Event()

    def start(self) -> "RmlpServer":
        listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        listener.bind((self.host, self.port))
        listener.listen(16)
        listener.settimeout(0.2)
        self.port = listener.getsockname()[1]
        self._listener = listener
        thread = threading.Thread(target=self._accept_loop, daemon=True)
        thread.start()
        self._threads.append(thread)
        return self

    def stop(self) -> None:
        self._stop.set()
        if self._listener:
            self._listener.close()
        for thread in self._threads:
            thread.join(timeout=2.0)

    def _accept_loop(self) -> None:
        while not self._stop.is_set():
            try:
                conn, _ = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            thread = threading.Thread(
                target=self._handle, args=(conn,), daemon=True
            )
            thread.start()
            self._threads.append(thread)

    def _handle(self, conn: socket.socket) -> None:
        conn.settimeout(0.2)
        write_lock = threading.Lock()

        def send(data: bytes) -> None:
            with write_lock:
                conn.sendall(data)

        session = ServerSession(self.epoch_unix, time.monotonic(), self.timeout)

        def on_hello(sess: ServerSession) -> None:
            old = self.registry.register(
                LinkEntry(sess.device_id, sess, send)
            )
            if old is not None and old.session is not sess:
                old.session.close()  # newer connection supersedes

        session.events = SessionEvents(on_hello=on_hello)
        try:
            while not self._stop.is_set() and session.poll(time.monotonic()):
                try:
                    data = conn.recv(4096)
                except socket.timeout:
                    continue
                except OSError:
                    break
                if not data:
                    break
                reply = session.on_bytes(data, time.monotonic())
                if reply:
                    try:
                        send(reply)
                    except OSError:
                        break
        finally:
            session.close()
            self.registry.remove(session)
            try:
                conn.close()
            except OSError:
                pass

    # --- command fan-out ----------------------------------------------------

    def send_command(
        self, selection, command: Command, repeats: int = 1
    ) -> list[Delivery]:
        """Encode and write a Command to each selected ordinal.

        ``selection`` is an iterable of ordinals or "all"; per-target results
        are reported rather than raised.  ``repeats`` resends the package
        (commands carry absolute targets, so duplicates are harmless); over a
        reliable stream checksum rejections cannot occur, so the retry knob
        exists for lossy transports only.
        """
        if selection == "all":
            targets = [e.ordinal for e in self.registry.entries()]
        else:
            targets = sorted(set(selection))
        payload = encode(command) * max(1, repeats)
        report = []
        for ordinal in targets:
            entry = self.registry.by_ordinal(ordinal)
            if entry is None:
                report.append(Delivery(ordinal, None, False, "unknown ordinal"))
                continue
            if entry.session.phase != "running":
                report.append(
                    Delivery(ordinal, entry.device_id, False, "session closed")
                )
                continue
            try:
                entry.send(payload)
                report.append(Delivery(ordinal, entry.device_id, True))
            except OSError as exc:
                report.append(
                    Delivery(ordinal, entry.device_id, False, str(exc))
                )
        return report
