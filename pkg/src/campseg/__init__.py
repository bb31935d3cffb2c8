"""Dwelling-footprint extraction toolkit.

Pipeline stages: synthetic scene generation, overlapped tiling, upscaling
(nearest / bilinear / learned super-resolution), adapter fine-tuning on a
frozen transformer backbone, overlap-stitched inference, pixelwise accuracy
metrics, and export of predicted masks as georeferenced Shapefiles.
"""

from .raster import RasterGrid, GeoTransform, identity_transform

__all__ = ["RasterGrid", "GeoTransform", "identity_transform"]
__version__ = "0.1.0"
