"""maskfill: schema-scaffolded decoding for a small masked diffusion text model."""

__version__ = "0.1.0"
