"""Reference server for the "tgrpo-policy/1" remote policy protocol."""

from .server import PROTOCOL_VERSION, make_server, serve
from .stub import stub_choice, stub_response

__version__ = "0.1.0"
