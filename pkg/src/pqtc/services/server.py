"""Threaded framed-message server shared by the verifier and the agent."""

from __future__ import annotations

import errno
import logging
import socketserver
import threading
from typing import Callable

from ..attestation.messages import ErrorMessage
from ..attestation.wire import MAX_FRAME, Channel, parse_address
from ..errors import AddressInUse, DecodeError, PqtcError

log = logging.getLogger(__name__)

Handler = Callable[[object], object]


def error_reply(exc: BaseException) -> ErrorMessage:
    return ErrorMessage(type(exc).__name__, str(exc))


class _Server(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True


class ServiceHandle:
    """A running server; ``address`` is the bound host:port."""

    def __init__(self, server: _Server, thread: threading.Thread):
        self._server = server
        self.thread = thread
        host, port = server.server_address[:2]
        self.address = f"{host}:{port}"

    def shutdown(self) -> None:
        self._server.shutdown()
        self._server.server_close()
        self.thread.join(timeout=5)

    def wait(self) -> None:
        self.thread.join()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.shutdown()


def serve(address: str, handler: Handler, max_size: int = MAX_FRAME) -> ServiceHandle:
    """Serve ``handler`` on ``address`` (port 0 picks a free port)."""

    class _Conn(socketserver.BaseRequestHandler):
        def handle(self):
            chan = Channel(self.request, max_size=max_size)
            while True:
                try:
                    msg = chan.recv()
                except DecodeError as exc:
                    # peer closed, or sent garbage; either way the session ends
                    if "closed" not in str(exc):
                        self._reply(chan, error_reply(exc))
                    return
                except OSError:
                    return
                try:
                    reply = handler(msg)
                except PqtcError as exc:
                    reply = error_reply(exc)
                except Exception as exc:  # keep serving other sessions
                    log.exception("handler failed")
                    reply = error_reply(exc)
                if not self._reply(chan, reply):
                    return

        @staticmethod
        def _reply(chan, reply) -> bool:
            try:
                chan.send(reply)
                return True
            except OSError:
                return False

    try:
        server = _Server(parse_address(address), _Conn)
    except OSError as exc:
        if exc.errno == errno.EADDRINUSE:
            raise AddressInUse(f"{address} is already in use") from exc
        raise
    thread = threading.Thread(target=server.serve_forever, args=(0.1,), name=f"pqtc-{address}", daemon=True)
    thread.start()
    return ServiceHandle(server, thread)
