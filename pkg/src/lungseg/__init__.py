"""Lung segmentation on chest radiographs.

Three approaches over one IO/metrics substrate: Otsu thresholding with
connected-component analysis, marker-based watershed, and a from-scratch
UNet trained with k-fold cross-validation on an 8:1:1 split.
"""

from . import backend, classical, imgio, metrics, phantom, tensorcore, unet

__version__ = "0.1.0"

__all__ = ["backend", "classical", "imgio", "metrics", "phantom",
           "tensorcore", "unet", "__version__"]
