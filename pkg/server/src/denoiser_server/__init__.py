"""Out-of-process denoiser host for the DNZ1 framed tensor protocol."""

from .models import convert_eps_to_x0, load_model
from .server import DenoiserServer, ServerConfig

__version__ = "0.1.0"
