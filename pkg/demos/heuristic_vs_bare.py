"""Scripted low-level policy with and without a heuristic scene-graph controller.

Prints reward fractions over a few held-out scenes for each transfer task.
Runs in well under a minute.

    python3 demos/heuristic_vs_bare.py [n_scenes]
"""

import sys

import numpy as np

from asif.harness.oracle import oracle_policy
from asif.hierarchy import HeuristicController, NoOpController, eval_seeds, evaluate_agent
from asif.kinds import TaskKind
from asif.tasks import SceneConfig


def main(n: int = 20) -> None:
    cfg = SceneConfig.reduced()
    seeds = eval_seeds(n)
    print(f"{'task':<16}{'heuristic':>10}{'bare':>8}")
    for task in (TaskKind.EDIT_TRANSFER, TaskKind.ADD_TRANSFER, TaskKind.DELETE_TRANSFER):
        ctl = np.mean(evaluate_agent(HeuristicController(task.family), oracle_policy, task, seeds, cfg))
        bare = np.mean(evaluate_agent(NoOpController(), oracle_policy, task, seeds, cfg))
        print(f"{task.value:<16}{ctl:>10.3f}{bare:>8.3f}")


if __name__ == "__main__":
    main(int(sys.argv[1]) if len(sys.argv) > 1 else 20)
