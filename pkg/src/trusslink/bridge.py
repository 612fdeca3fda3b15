"""WebSocket bridge: live world snapshots out, teleop key chords in.

Implements the server side of RFC 6455 over plain sockets (handshake,
masked client frames, text payloads) so a browser can connect directly.
Snapshots are JSON text messages with a versioned schema; inbound messages
are teleop commands in the shared key-chord grammar.  Malformed inbound
messages get an error reply and the connection stays up.
"""

from __future__ import annotations

import base64
import hashlib
import json
import socket
import struct
import threading
from typing import Callable, Optional

SCHEMA_VERSION = 1
_WS_GUID = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11"

OP_TEXT = 0x1
OP_CLOSE = 0x8
OP_PING = 0x9
OP_PONG = 0xA


def accept_key(client_key: str) -> str:
    digest = hashlib.sha1((client_key + _WS_GUID).encode()).digest()
    return base64.b64encode(digest).decode()


def encode_text_frame(payload: str) -> bytes:
    data = payload.encode()
    length = len(data)
    if length < 126:
        header = struct.pack("!BB", 0x80 | OP_TEXT, length)
    elif length < 1 << 16:
        header = struct.pack("!BBH", 0x80 | OP_TEXT, 126, length)
    else:
        header = struct.pack("!BBQ", 0x80 | OP_TEXT, 127, length)
    return header + data


class FrameReader:
    """Incremental websocket frame parser (client-to-server, masked)."""

    def __init__(self):
        self._buf = bytearray()

    def feed(self, data: bytes) -> list[tuple[int, bytes]]:
        self._buf.extend(data)
        frames = []
        while True:
            parsed = self._try_parse()
            if parsed is None:
                return frames
            frames.append(parsed)

    def _try_parse(self) -> Optional[tuple[int, bytes]]:
        buf = self._buf
        if len(buf) < 2:
            return None
        opcode = buf[0] & 0x0F
        masked = bool(buf[1] & 0x80)
        length = buf[1] & 0x7F
        offset = 2
        if length == 126:
            if len(buf) < 4:
                return None
            length = struct.unpack_from("!H", buf, 2)[0]
            offset = 4
        elif length == 127:
            if len(buf) < 10:
                return None
            length = struct.unpack_from("!Q", buf, 2)[0]
            offset = 10
        mask = b"\x00" * 4
        if masked:
            if len(buf) < offset + 4:
                return None
            mask = bytes(buf[offset : offset + 4])
            offset += 4
        if len(buf) < offset + length:
            return None
        payload = bytes(
            b ^ mask[i % 4] for i, b in enumerate(buf[offset : offset + length])
        )
        del buf[: offset + length]
        return opcode, payload


def snapshot_message(world_snapshot, morphology_names, morphology_hash) -> str:
    """Serialize a world snapshot to the documented wire schema."""
    links = []
    for st in world_snapshot.links:
        links.append(
            {
                "id": st.link_id,
                "a": [round(float(v), 6) for v in st.end_a_pos],
                "b": [round(float(v), 6) for v in st.end_b_pos],
                "center": [round(float(v), 6) for v in st.center_pos],
                "ext": [round(st.servo_a_ext, 6), round(st.servo_b_ext, 6)],
                "act": [round(st.magnet_activation_a, 4), round(st.magnet_activation_b, 4)],
            }
        )
    return json.dumps(
        {
            "v": SCHEMA_VERSION,
            "type": "snapshot",
            "sim_time": round(world_snapshot.sim_time, 6),
            "links": links,
            "attachments": [list(p) for p in world_snapshot.attachments],
            "morphology": {
                "names": sorted(morphology_names),
                "hash": morphology_hash,
            },
        },
        separators=(",", ":"),
        sort_keys=True,
    )


def parse_snapshot(text: str) -> dict:
    data = json.loads(text)
    if data.get("v") != SCHEMA_VERSION:
        raise ValueError(f"schema version mismatch: {data.get('v')}")
    if data.get("type") != "snapshot":
        raise ValueError(f"not a snapshot: {data.get('type')}")
    return data


class TeleopBridge:
    """Accepts UI clients, broadcasts snapshots, forwards teleop commands."""

    def __init__(
        self,
        host: str = "127.0.0.1",
        port: int = 0,
        on_keys: Optional[Callable[[list, dict], None]] = None,
    ):
        self.host = host
        self.port = port
        self.on_keys = on_keys or (lambda keys, msg: None)
        self._clients: list[tuple[socket.socket, threading.Lock]] = []
        self._clients_lock = threading.Lock()
        self._listener: Optional[socket.socket] = None
        self._stop = threading.Event()
        self._threads: list[threading.Thread] = []

    def start(self) -> "TeleopBridge":
        listener = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
        listener.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        listener.bind((self.host, self.port))
        listener.listen(8)
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
        with self._clients_lock:
            for conn, _ in self._clients:
                try:
                    conn.close()
                except OSError:
                    pass
            self._clients.clear()
        for thread in self._threads:
            thread.join(timeout=2.0)

    @property
    def client_count(self) -> int:
        with self._clients_lock:
            return len(self._clients)

    def _accept_loop(self) -> None:
        while not self._stop.is_set():
            try:
                conn, _ = self._listener.accept()
            except socket.timeout:
                continue
            except OSError:
                break
            thread = threading.Thread(target=self._handle, args=(conn,), daemon=True)
            thread.start()
            self._threads.append(thread)

    def _handshake(self, conn: socket.socket) -> bool:
        conn.settimeout(2.0)
        request = b""
        while b"\r\n\r\n" not in request:
            chunk = conn.recv(2048)
            if not chunk:
                return False
            request += chunk
            if len(request) > 65536:
                return False
        key = None
        for line in request.split(b"\r\n"):
            if line.lower().startswith(b"sec-websocket-key:"):
                key = line.split(b":", 1)[1].strip().decode()
        if key is None:
            conn.sendall(b"HTTP/1.1 400 Bad Request\r\n\r\n")
            return False
        response = (
            "HTTP/1.1 101 Switching Protocols\r\n"
            "Upgrade: websocket\r\n"
            "Connection: Upgrade\r\n"
            f"Sec-WebSocket-Accept: {accept_key(key)}\r\n\r\n"
        )
        conn.sendall(response.encode())
        return True

    def _handle(self, conn: socket.socket) -> None:
        try:
            if not self._handshake(conn):
                conn.close()
                return
        except OSError:
            return
        lock = threading.Lock()
        with self._clients_lock:
            self._clients.append((conn, lock))
        reader = FrameReader()
        conn.settimeout(0.2)
        try:
            while not self._stop.is_set():
                try:
                    data = conn.recv(4096)
                except socket.timeout:
                    continue
                except OSError:
                    break
                if not data:
                    break
                for opcode, payload in reader.feed(data):
                    if opcode == OP_CLOSE:
                        return
                    if opcode == OP_PING:
                        with lock:
                            conn.sendall(
                                struct.pack("!BB", 0x80 | OP_PONG, len(payload))
                                + payload
                            )
                        continue
                    if opcode != OP_TEXT:
                        continue
                    self._handle_message(conn, lock, payload)
        finally:
            with self._clients_lock:
                self._clients = [
                    (c, l) for c, l in self._clients if c is not conn
                ]
            try:
                conn.close()
            except OSError:
                pass

    def _handle_message(self, conn, lock, payload: bytes) -> None:
        try:
            msg = json.loads(payload.decode())
            if msg.get("v") != SCHEMA_VERSION:
                raise ValueError("schema version mismatch")
            if msg.get("type") != "keys":
                raise ValueError(f"unknown message type {msg.get('type')!r}")
            keys = msg.get("keys")
            if not isinstance(keys, list):
                raise ValueError("keys must be a list")
        except (ValueError, UnicodeDecodeError) as exc:
            reply = json.dumps(
                {"v": SCHEMA_VERSION, "type": "error", "message": str(exc)}
            )
            try:
                with lock:
                    conn.sendall(encode_text_frame(reply))
            except OSError:
                pass
            return
        self.on_keys(keys, msg)

    def broadcast(self, text: str) -> None:
        """Send one text message to every connected client."""
        frame = encode_text_frame(text)
        with self._clients_lock:
            clients = list(self._clients)
        for conn, lock in clients:
            try:
                with lock:
                    conn.sendall(frame)
            except OSError:
                pass
