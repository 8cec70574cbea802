"""Video GANs whose frame latents come from discrete, ODE or SDE temporal generators."""

__version__ = "0.1.0"
