"""
Frequency response and margins
==============================

Measure Bode data by sinusoidal excitation, first on a known plant and then
on the body driven by a hip pattern, and read off stability margins.
"""

import numpy as np

from bodyflight.body import default_body_config, standard_neutral_pose
from bodyflight.freqresp import (
    FrequencyResponse,
    PatternPlant,
    frequency_response,
    linearity_check,
    margins,
    second_order_plant,
    step_response,
)

plant = second_order_plant(2.0, 0.2)
grid = np.logspace(-1, 1, 15)
fr = frequency_response(plant, grid=grid)
exact = plant.transfer(grid)
print("worst gain error", np.max(np.abs(fr.gain / np.abs(exact) - 1)))
print("worst phase error [deg]", np.max(np.abs(np.degrees(np.angle(fr.complex() / exact)))))

triple = FrequencyResponse.from_transfer_function([1], [1, 3, 3, 1], np.logspace(-2, 2, 400))
rep = margins(triple)
print(f"1/(s+1)^3: gain margin {rep.gain_margin_db:.2f} dB at {rep.phase_crossover_rad_s:.3f} rad/s")

config = default_body_config()
neutral = standard_neutral_pose()
hip = np.zeros(45)
hip[27] = 1.0
body = PatternPlant.skydiver(config, neutral, hip)
coarse = np.logspace(-0.5, 1, 6)
bode = frequency_response(body, amplitude=0.05, grid=coarse, cycles=4)
for w, g, p in zip(bode.omega, bode.gain_db, bode.phase_deg):
    print(f"omega {w:6.3f}  gain {g:7.2f} dB  phase {p:8.2f} deg")

lin = linearity_check(body, [0.025, 0.05], grid=coarse[:3], cycles=4)
print("gain spread across amplitudes [dB]", lin.max_gain_deviation_db)

step = step_response(body, 0.05, duration=10.0)
print("step features", step.features)
