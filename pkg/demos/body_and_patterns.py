"""
Body model and movement patterns
================================

Build the 16-segment body, look at its mass properties, then decompose a
synthetic recording into movement patterns and rebuild poses from them.
"""

import numpy as np

from bodyflight.body import JOINT_NAMES, default_body_config, mass_properties, mirror_pose, standard_neutral_pose
from bodyflight.motion import MotionDataset
from bodyflight.pca import decompose_dataset, mask_component, top_dofs

config = default_body_config()
neutral = standard_neutral_pose()

mp = mass_properties(config, neutral)
print("cog [m]", np.round(mp.cog, 4))
print("principal inertia [kg m^2]", np.round(np.linalg.eigvalsh(mp.inertia), 3))

# a symmetric pose keeps the cog on the sagittal plane, an asymmetric one does not
arm = 3 * JOINT_NAMES.index("shoulder_l")
pose = neutral.copy()
pose[arm] += 0.4
print("lateral cog, left arm swung:", mass_properties(config, pose).cog[1])
print("lateral cog, mirrored:      ", mass_properties(config, mirror_pose(pose)).cog[1])

# two minutes at 240 Hz: three joint patterns with decreasing strength
rng = np.random.default_rng(0)
t = np.arange(0, 120, 1 / 240)
modes = rng.standard_normal((3, 45)) * 0.05
signals = np.stack([np.sin(2 * np.pi * 0.3 * t), 0.5 * np.sin(2 * np.pi * 0.8 * t), 0.2 * np.cos(1.1 * t)])
ds = MotionDataset.from_poses(neutral + signals.T @ modes, 240.0)

dec = decompose_dataset(ds)
print("normalized eigenvalues", np.round(dec.normalized_eigenvalues[:5], 4))
print("dominant components", dec.dominant())
print("full reconstruction error", np.max(np.abs(dec.reconstruct(45) - ds.poses)))

first = dec.component(1)
print("joints moved most by component 1", top_dofs(first, 6))
legs_only = mask_component(first, list(range(28, 46)), renormalize=True)
print("leg-only variant norm", np.linalg.norm(legs_only))
