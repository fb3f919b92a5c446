"""Run the four-task suite and write per-episode and summary CSVs.

    python scripts/eval_suite.py --episodes 100 --seed 0 --out results/suite
"""
import argparse
import time

from homemanip.sim.runner import evaluate, summary_text, write_eval
from homemanip.task import Task


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--episodes", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="results/suite")
    args = p.parse_args()

    summaries = []
    for task in Task:
        t0 = time.perf_counter()
        summaries.append(evaluate(task, args.episodes, args.seed))
        print(f"{task.value}: {time.perf_counter() - t0:.1f}s")
    paths = write_eval(summaries, args.out)
    print()
    print(summary_text(summaries), end="")
    rates = {s.task: s.rate for s in summaries}
    print(f"\ndrawer >= door: {rates[Task.OPEN_DRAWER] >= rates[Task.OPEN_DOOR]}")
    mean_steps = {s.task: s.mean_steps for s in summaries}
    print(f"door takes more steps than drawer: {mean_steps[Task.OPEN_DOOR] > mean_steps[Task.OPEN_DRAWER]}")
    print(f"wrote {', '.join(str(v) for v in paths.values())}")


if __name__ == "__main__":
    main()
