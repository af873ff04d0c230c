"""Visual transformation telling: reason and describe the change between adjacent images.

A sample is a sequence of N+1 states (images, consumed here as embedding
vectors) plus N transformation descriptions. The package covers the whole
pipeline at desk scale: building samples from segment-annotated videos,
synthetic data with a known ground truth, the TTNet encoder-decoder model,
training, generation, captioning metrics, and diagnostic evaluation suites.
"""

__version__ = "0.1.0"
