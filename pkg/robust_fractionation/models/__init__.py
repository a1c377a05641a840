"""Ambiguity sets, dual blocks and the application models built from them."""
from .ambiguity import *
from .dualblock import *
from .chroma_model import *
from .var_model import *
from .generic_model import *
