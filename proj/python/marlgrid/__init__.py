from ._marlgrid import *  # noqa: F401,F403
from ._marlgrid import __doc__, __version__  # noqa: F401
