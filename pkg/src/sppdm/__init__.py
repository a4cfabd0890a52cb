"""Stochastic proximal primal-dual methods with momentum for decentralized consensus optimization."""
from ._backend import BACKEND, available_backends
from .errors import *  # noqa: F401,F403
from .graph import *  # noqa: F401,F403
from .metrics import *  # noqa: F401,F403
from .netsim import *  # noqa: F401,F403
from .oracles import *  # noqa: F401,F403
from .solver import *  # noqa: F401,F403

__version__ = "0.1.0"
