"""Serve an image classifier behind the oracle wire protocol."""

from .models import EchoModel, Preprocess, UniformModel, load_model
from .protocol import ProtocolError, decode_request, encode_error, encode_reply
from .server import Bridge, BridgeConfig, serve

__version__ = "0.1.0"
