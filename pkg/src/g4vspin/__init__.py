"""Microwave spin control of group-IV vacancy centers in diamond.

Static spectra, the reduced qubit drive model, exact gate simulation and
optical/phonon initialization rates, plus a sweep CLI.
"""
__version__ = "0.1.0"
