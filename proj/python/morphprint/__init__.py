from ._morphprint import *  # noqa: F401,F403
from ._morphprint import __version__  # noqa: F401
