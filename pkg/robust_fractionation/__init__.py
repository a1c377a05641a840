"""Safe MILP approximations of distributionally robust indicator constraints."""
from .errors import *
from .models import *
from .solver import *
from .verification import *

__version__ = "0.1.0"
