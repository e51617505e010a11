"""Train a small DQN teacher under domain randomization and compare it with OLLA.

The budget here is tiny (seconds) so the teacher is far from the
reproduction profile; increase ``STEPS`` for a stronger policy.
"""

import time

from ladistill.baseline import OllaPolicy
from ladistill.evalkit import GreedyPolicy, evaluate, scenario_suite
from ladistill.net import STUDENT_DIMS
from ladistill.rl import TrainerConfig, train_teacher

STEPS = 30_000

config = TrainerConfig(
    total_env_steps=STEPS,
    dims=STUDENT_DIMS["4x64"],
    batch_size=64,
    learning_rate=1e-3,
    n_actors=4,
    seed=0,
)
t0 = time.perf_counter()
run = train_teacher(config)
print(f"trained {run.env_steps} env steps / {run.grad_steps} gradient steps in {time.perf_counter() - t0:.1f}s")
for row in run.log[:: max(1, len(run.log) // 6)]:
    print(row)

# %%
for name, bench in scenario_suite().items():
    t = evaluate(GreedyPolicy(run.net), bench, n_episodes=1000, seed=bench.seed)
    o = evaluate(OllaPolicy(), bench, n_episodes=1000, seed=bench.seed)
    print(f"{name:6s} teacher T={t.mean_ue_throughput:.3f} r={t.mean_episodic_reward:.3f} | "
          f"olla T={o.mean_ue_throughput:.3f} r={o.mean_episodic_reward:.3f}")
