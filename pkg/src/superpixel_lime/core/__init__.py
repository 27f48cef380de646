"""Core modules: image, imageio, segmentation, blackbox, explainer, coefficients, limits, gradients, experiments, selftest."""
