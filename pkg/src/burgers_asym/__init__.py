"""Large-time asymptotics of the convection-diffusion equation ``u_t - Lap u = a . grad(u^2)``."""

__version__ = "0.1.0"
