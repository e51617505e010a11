"""Distill a teacher into the three student sizes and compare action PDFs.

Uses a fast smoke-sized teacher; the full pipeline is
``ladistill reproduce-paper`` (or ``run_reproduction(ReproduceConfig())``).
"""

import numpy as np

from ladistill.distill import argmax_agreement, distill, gen_dataset
from ladistill.evalkit import GreedyPolicy, action_pdf, evaluate, js_divergence, relative_gain, scenario_suite
from ladistill.linksim import RandomizationRanges
from ladistill.net import STUDENT_DIMS, param_count
from ladistill.rl import TrainerConfig, train_teacher

teacher = train_teacher(
    TrainerConfig(total_env_steps=20_000, dims=STUDENT_DIMS["4x64"], batch_size=64, learning_rate=1e-3)
).net

train = gen_dataset(teacher, RandomizationRanges(), 40_000, seed=1)
held_out = gen_dataset(teacher, RandomizationRanges(), 5_000, seed=2)
students = {}
for size, dims in STUDENT_DIMS.items():
    students[size] = distill(train, dims, epochs=10, seed=0)
    print(f"{size}: {param_count(dims):6d} params, argmax agreement {argmax_agreement(students[size], held_out):.3f}")

# %%
bench = scenario_suite()["MIMO"]
ref = evaluate(GreedyPolicy(teacher), bench, n_episodes=1000, seed=bench.seed)
p_teacher = action_pdf(GreedyPolicy(teacher), bench, 5000, seed=bench.seed + 1)
for size, net in students.items():
    c = relative_gain(evaluate(GreedyPolicy(net), bench, n_episodes=1000, seed=bench.seed), ref)
    js = js_divergence(p_teacher, action_pdf(GreedyPolicy(net), bench, 5000, seed=bench.seed + 1))
    print(f"{size}: dT={c.delta_t:+.2f}%  dBLER={c.delta_bler:+.2f}%  dr={c.delta_r:+.2f}%  JS={js:.4f}")
print("teacher modal MCS:", int(np.argmax(p_teacher)))
