from .tensor_core import *
from .moments import *
from .irreducible import *
from .patterns import *
from .independence import *
from .basis_builder import *
from .formula import *
from .catalog import *
from .basis_cache import *
from .config import *

__version__ = "0.1.0.dev0"
