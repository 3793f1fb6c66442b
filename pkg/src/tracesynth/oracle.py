"""Per-call coverage oracles.

``SimulatedOracle`` is a deterministic toy kernel: each call earns its base
coverage, a bonus for every explicit producer that ran *before* it, and a bonus
for every implicitly related call anywhere else in the trace. ``RemoteOracle``
speaks the length-prefixed JSON protocol to a fuzzer-side agent; ``MockServer``
is that agent backed by the simulator.
"""

from __future__ import annotations

import json
import logging
import socket
import socketserver
import struct
import threading
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np

from .trace import Trace, TraceError, _check_ids
from .universe import SyscallUniverse

log = logging.getLogger(__name__)

PROTOCOL_VERSION = 1
HEADER = struct.Struct(">I")
MAX_MESSAGE_SIZE = 16 * 1024 * 1024
BRUTE_FORCE_LIMIT = 10**7


class OracleError(RuntimeError):
    pass


class ProtocolError(OracleError):
    """The peer sent something that violates wire protocol v1."""


class RemoteEvaluationError(OracleError):
    """The remote fuzzer reported that it could not evaluate the trace."""


class SearchSpaceTooLarge(OracleError):
    pass


@dataclass(frozen=True)
class CoverageReport:
    per_call: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "per_call", tuple(int(c) for c in self.per_call))

    @property
    def total(self) -> int:
        return sum(self.per_call)

    def __len__(self) -> int:
        return len(self.per_call)


@dataclass(frozen=True)
class OracleConfig:
    explicit_bonus: int = 30
    implicit_bonus: int = 30
    saturation_cap: int = 10_000
    noise_amplitude: int = 0
    rng_seed: int = 0

    def __post_init__(self):
        if self.explicit_bonus < 1 or self.implicit_bonus < 1:
            raise ValueError("bonuses must be positive")
        if self.saturation_cap < 1:
            raise ValueError("saturation_cap must be positive")
        if self.noise_amplitude < 0:
            raise ValueError("noise_amplitude must be nonnegative")


class Oracle(Protocol):
    def evaluate(self, trace: Trace) -> CoverageReport: ...


def _dependency_matrices(universe: SyscallUniverse) -> tuple[np.ndarray, np.ndarray]:
    n = universe.n
    explicit = np.zeros((n, n), dtype=np.int64)
    implicit = np.zeros((n, n), dtype=np.int64)
    for p, c in universe.deps.explicit:
        explicit[p, c] = 1
    for a, b in universe.deps.implicit:
        implicit[a, b] = implicit[b, a] = 1
    return explicit, implicit


def coverage_matrix(
    traces: np.ndarray,
    base: np.ndarray,
    explicit: np.ndarray,
    implicit: np.ndarray,
    config: OracleConfig,
) -> np.ndarray:
    """Noise-free per-call coverage for a ``(M, L)`` block of traces."""
    m, length = traces.shape
    cov = base[traces].astype(np.int64)
    for j in range(length):
        cj = traces[:, j]
        exp_hits = np.zeros(m, dtype=np.int64)
        imp_hits = np.zeros(m, dtype=np.int64)
        for i in range(length):
            if i == j:
                continue
            ci = traces[:, i]
            if i < j:
                exp_hits += explicit[ci, cj]
            imp_hits += implicit[ci, cj]
        cov[:, j] += config.explicit_bonus * exp_hits + config.implicit_bonus * imp_hits
    return np.maximum(np.minimum(cov, config.saturation_cap), 1)


def evaluate(
    trace: Sequence[int],
    universe: SyscallUniverse,
    config: OracleConfig,
    rng: np.random.Generator | None = None,
) -> CoverageReport:
    """Simulated per-call coverage. With ``noise_amplitude > 0`` the noise is
    drawn from ``rng`` (a fresh generator seeded by ``config.rng_seed`` if none
    is given, which makes the call a pure function)."""
    _check_ids(trace, universe.n)
    explicit, implicit = _dependency_matrices(universe)
    cov = coverage_matrix(
        np.asarray([trace], dtype=np.int64), universe.base_coverage, explicit, implicit, config
    )[0]
    if config.noise_amplitude:
        rng = rng if rng is not None else np.random.default_rng(config.rng_seed)
        a = config.noise_amplitude
        cov = np.maximum(cov + rng.integers(-a, a + 1, size=cov.shape), 1)
    return CoverageReport(tuple(cov.tolist()))


class SimulatedOracle:
    """Stateful wrapper that keeps one noise stream across evaluations."""

    def __init__(self, universe: SyscallUniverse, config: OracleConfig | None = None):
        self.universe = universe
        self.config = config or OracleConfig()
        self._explicit, self._implicit = _dependency_matrices(universe)
        self._base = universe.base_coverage
        self._rng = np.random.default_rng(self.config.rng_seed)
        self._lock = threading.Lock()
        self.calls = 0

    def evaluate(self, trace: Sequence[int]) -> CoverageReport:
        _check_ids(trace, self.universe.n)
        cov = coverage_matrix(
            np.asarray([trace], dtype=np.int64),
            self._base,
            self._explicit,
            self._implicit,
            self.config,
        )[0]
        with self._lock:
            self.calls += 1
            if self.config.noise_amplitude:
                a = self.config.noise_amplitude
                cov = np.maximum(cov + self._rng.integers(-a, a + 1, size=cov.shape), 1)
        return CoverageReport(tuple(cov.tolist()))


def brute_force_best_trace(
    universe: SyscallUniverse, config: OracleConfig, length: int, chunk: int = 1 << 16
) -> tuple[Trace, int]:
    """Exhaustive search for the noise-free best trace; ties go to the
    lexicographically smallest id sequence."""
    n = universe.n
    space = n**length
    if space > BRUTE_FORCE_LIMIT:
        raise SearchSpaceTooLarge(f"{n}^{length} = {space} traces exceeds {BRUTE_FORCE_LIMIT}")
    explicit, implicit = _dependency_matrices(universe)
    base = universe.base_coverage
    powers = n ** np.arange(length - 1, -1, -1, dtype=np.int64)
    best_total, best_idx = -1, -1
    for start in range(0, space, chunk):
        idx = np.arange(start, min(start + chunk, space), dtype=np.int64)
        traces = (idx[:, None] // powers) % n
        totals = coverage_matrix(traces, base, explicit, implicit, config).sum(axis=1)
        k = int(np.argmax(totals))
        if totals[k] > best_total:
            best_total, best_idx = int(totals[k]), int(idx[k])
    trace = tuple(int(d) for d in (best_idx // powers) % n)
    return trace, best_total


# --- wire protocol v1 ------------------------------------------------------


def _recv_exact(sock: socket.socket, size: int) -> bytes:
    buf = bytearray()
    while len(buf) < size:
        chunk = sock.recv(size - len(buf))
        if not chunk:
            raise ConnectionError("peer closed the connection")
        buf += chunk
    return bytes(buf)


def send_message(sock: socket.socket, obj: dict) -> None:
    payload = json.dumps(obj, separators=(",", ":")).encode("utf-8")
    sock.sendall(HEADER.pack(len(payload)) + payload)


def recv_frame(sock: socket.socket) -> bytes:
    (size,) = HEADER.unpack(_recv_exact(sock, HEADER.size))
    if size > MAX_MESSAGE_SIZE:
        raise ProtocolError(f"message of {size} bytes exceeds {MAX_MESSAGE_SIZE}")
    return _recv_exact(sock, size)


def decode_payload(payload: bytes) -> dict:
    try:
        obj = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ProtocolError(f"undecodable payload: {exc}") from None
    if not isinstance(obj, dict):
        raise ProtocolError("payload is not an object")
    if obj.get("v") != PROTOCOL_VERSION:
        raise ProtocolError(f"unsupported protocol version {obj.get('v')!r}")
    return obj


def _is_u64(x) -> bool:
    return isinstance(x, int) and not isinstance(x, bool) and 0 <= x < 2**64


def parse_endpoint(endpoint: str) -> tuple[str, int]:
    host, sep, port = endpoint.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"endpoint {endpoint!r} is not HOST:PORT")
    return host or "127.0.0.1", int(port)


class RemoteOracle:
    """Client side of the fuzzer agent protocol. One request in flight per
    connection; open several clients for parallel evaluation."""

    def __init__(self, endpoint: str, universe: SyscallUniverse, timeout: float = 30.0):
        self.universe = universe
        self.timeout = timeout
        self._next_id = 1
        self._sock: socket.socket | None = socket.create_connection(
            parse_endpoint(endpoint), timeout=timeout
        )
        self._sock.settimeout(timeout)

    def close(self) -> None:
        if self._sock is not None:
            self._sock.close()
            self._sock = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def evaluate(self, trace: Sequence[int]) -> CoverageReport:
        if self._sock is None:
            raise OracleError("connection is closed")
        _check_ids(trace, self.universe.n)
        req_id = self._next_id
        self._next_id += 1
        request = {
            "v": PROTOCOL_VERSION,
            "type": "eval",
            "id": req_id,
            "trace": [self.universe.name_of(c) for c in trace],
        }
        try:
            send_message(self._sock, request)
            reply = decode_payload(recv_frame(self._sock))
            return self._check_reply(reply, req_id, len(trace))
        except ProtocolError:
            # stream position is unknown after a bad frame
            self.close()
            raise

    @staticmethod
    def _check_reply(reply: dict, req_id: int, length: int) -> CoverageReport:
        if reply.get("id") != req_id:
            raise ProtocolError(f"reply id {reply.get('id')!r} does not match request {req_id}")
        kind = reply.get("type")
        if kind == "error":
            raise RemoteEvaluationError(str(reply.get("msg", "")))
        if kind != "coverage":
            raise ProtocolError(f"unexpected reply type {kind!r}")
        per_call = reply.get("per_call")
        if not isinstance(per_call, list) or not all(_is_u64(c) for c in per_call):
            raise ProtocolError("per_call must be a list of unsigned integers")
        if len(per_call) != length:
            raise ProtocolError(f"per_call has {len(per_call)} entries, trace has {length}")
        return CoverageReport(tuple(per_call))


class _Handler(socketserver.BaseRequestHandler):
    def handle(self):
        server: MockServer = self.server.owner  # type: ignore[attr-defined]
        sock = self.request
        sock.settimeout(None)
        while True:
            try:
                payload = recv_frame(sock)
            except ConnectionError:
                return
            except ProtocolError as exc:
                send_message(sock, {"v": PROTOCOL_VERSION, "type": "error", "id": 0, "msg": str(exc)})
                return
            send_message(sock, server.handle_payload(payload))


class _ThreadingServer(socketserver.ThreadingTCPServer):
    allow_reuse_address = True
    daemon_threads = True


class MockServer:
    """Fuzzer-agent stand-in serving protocol v1 over a ``SimulatedOracle``."""

    def __init__(self, oracle: SimulatedOracle, host: str = "127.0.0.1", port: int = 0):
        self.oracle = oracle
        self._server = _ThreadingServer((host, port), _Handler)
        self._server.owner = self  # type: ignore[attr-defined]
        self._thread: threading.Thread | None = None

    @property
    def address(self) -> tuple[str, int]:
        return self._server.server_address[:2]

    @property
    def endpoint(self) -> str:
        host, port = self.address
        return f"{host}:{port}"

    def handle_payload(self, payload: bytes) -> dict:
        req_id = 0
        try:
            req = decode_payload(payload)
            req_id = req.get("id", 0)
            if not _is_u64(req_id):
                req_id = 0
                raise ProtocolError("request id must be an unsigned integer")
            if req.get("type") != "eval":
                raise ProtocolError(f"unknown request type {req.get('type')!r}")
            names = req.get("trace")
            if not isinstance(names, list) or not names:
                raise ProtocolError("trace must be a nonempty list of names")
            trace = tuple(self.oracle.universe.index(str(nm)) for nm in names)
            report = self.oracle.evaluate(trace)
        except (ProtocolError, ValueError, TraceError) as exc:
            log.info("request %s rejected: %s", req_id, exc)
            return {"v": PROTOCOL_VERSION, "type": "error", "id": req_id, "msg": str(exc)}
        log.debug("request %s: %s -> %s", req_id, names, report.per_call)
        return {
            "v": PROTOCOL_VERSION,
            "type": "coverage",
            "id": req_id,
            "per_call": list(report.per_call),
        }

    def serve_forever(self) -> None:
        log.info("mock fuzzer agent listening on %s", self.endpoint)
        self._server.serve_forever()

    def start(self) -> "MockServer":
        self._thread = threading.Thread(target=self._server.serve_forever, daemon=True)
        self._thread.start()
        return self

    def shutdown(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        if self._thread is not None:
            self._thread.join()

    def __enter__(self):
        return self.start()

    def __exit__(self, *exc):
        self.shutdown()
