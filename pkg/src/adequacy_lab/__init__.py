"""Latent-space test adequacy toolkit for DNN classifiers."""

__version__ = "0.1.0"
