"""Utility functions package."""
from .calculations import *
