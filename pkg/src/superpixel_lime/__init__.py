"""superpixel-lime: LIME for images, its closed-form limit explanations, and integrated-gradients checks."""

__version__ = "0.1.0"
