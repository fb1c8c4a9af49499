"""Generative motion estimation toolkit.

Subpackages are plain modules, imported lazily by callers:

- ``se3``: quaternion rotations, relative poses, exp/log maps, motion states
- ``vfnet``: small MLP vector field with analytic gradients and text checkpoints
- ``flowmatch``: linear-path flow matching loss and Adam training loop
- ``sampler``: fixed-step ODE solvers and repeated-sample pose estimation
- ``synthworld``: synthetic trajectories, condition encodings, dataset files
- ``trajeval``: trajectory composition, alignment, ATE, TUM/KITTI formats
- ``cli``: the ``motionflow`` command line front end
"""

__version__ = "0.1.0"
