"""Single-view silhouette-supervised 3D mesh reconstruction.

An auto-encoder maps a silhouette image to a 512-d shape code, a
generator deforms an icosphere from that code, and a differentiable
soft rasterizer projects the mesh back onto the image so the silhouette
itself supervises training.  An adversarial viewpoint discriminator
pushes the codes toward pose invariance.
"""

__version__ = "0.1.0"
