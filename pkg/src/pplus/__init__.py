"""Per-layer textual conditioning (P+) on a toy text-to-image diffusion model."""

__version__ = "0.1.0"
