"""Reflected SDEs and oblique-derivative PDEs in time-dependent domains."""
