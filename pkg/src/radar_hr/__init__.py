"""Contactless heart-rate estimation from 60 GHz FMCW radar micro-motions."""

__version__ = "0.1.0"
