"""Comparing the latent geometry of neural forecasters of dynamical systems.

Submodules
----------
dynsys
    Reference systems, an adaptive integrator, normalized datasets and windows.
autodiff
    A small reverse-mode tape with an Adam optimizer.
forecasters
    Encoder-propagator-decoder models, the echo-state baseline and training.
relgeom
    Anchor-based relative embeddings, alignment scores and comparators.
stitching
    Relative-space forecasters and encoder/decoder swap grids.
cli
    The ``latent-atlas`` experiment pipeline.
"""

__version__ = "0.1.0"
