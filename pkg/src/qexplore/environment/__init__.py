from .base import GUIEnvironment
from .conformance import check_environment
from .manifest import BUNDLED, EnvironmentManifest, ElementSpec, ScreenSpec, bundled_path, load_manifest
from .remote import AdapterServer, RemoteEnvironment
from .simulator import Simulator

__all__ = [
    "AdapterServer",
    "BUNDLED",
    "ElementSpec",
    "EnvironmentManifest",
    "GUIEnvironment",
    "RemoteEnvironment",
    "ScreenSpec",
    "Simulator",
    "bundled_path",
    "check_environment",
    "load_manifest",
]
