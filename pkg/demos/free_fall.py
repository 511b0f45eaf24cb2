"""
Free fall and turning
=====================

Calibrate drag to a 60 m/s terminal speed, drop the neutral body from rest,
then hold an asymmetric hip pose and watch it settle into a steady turn.
"""

import numpy as np

from bodyflight.body import JOINT_NAMES, default_body_config, standard_neutral_pose
from bodyflight.freefall import ConstantPose, SinePattern, calibrate_drag, initial_state, simulate

config = default_body_config()
neutral = standard_neutral_pose()

config, c = calibrate_drag(config, neutral, target=60.0)
print("fitted c_drag_max", c)

drop = simulate(ConstantPose(neutral), 30.0, init=initial_state(speed=0.0), config=config, record_poses=False)
for t in (1, 5, 10, 30):
    k = int(round(t / drop.dt))
    print(f"t={t:2d} s  vertical speed {drop.vertical_speed[k]:6.2f} m/s")

hip = neutral.copy()
hip[3 * JOINT_NAMES.index("hip_l")] += 0.15
turn = simulate(ConstantPose(hip), 20.0, config=config, record_poses=False)
print("yaw rate after 20 s [rad/s]", turn.yaw_rate[-1])

# a sinusoidal pattern gives a yaw rate oscillating at the same frequency
rng = np.random.default_rng(3)
pattern = rng.standard_normal(45)
pattern /= np.linalg.norm(pattern)
wave = simulate(SinePattern(neutral, pattern, 0.2, 0.5), 20.0, config=config, record_poses=False)
y = wave.yaw_rate[len(wave) // 2:]
freqs = np.fft.rfftfreq(len(y), wave.dt)
print("dominant yaw frequency [Hz]", freqs[np.argmax(np.abs(np.fft.rfft(y - y.mean())))])

try:
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(2, 1, sharex=True)
    ax[0].plot(drop.time, drop.vertical_speed)
    ax[0].set_ylabel("vertical speed [m/s]")
    ax[1].plot(turn.time, turn.yaw_rate)
    ax[1].set_ylabel("yaw rate [rad/s]")
    ax[1].set_xlabel("t [s]")
    fig.savefig("free_fall.png")
except ImportError:
    pass
