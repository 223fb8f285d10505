"""Voxel-wise texture segmentation and stratification of dental resorption lesions."""

__version__ = "0.1.0"
