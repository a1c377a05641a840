"""Separation process data package."""
from .peg_separation import *
