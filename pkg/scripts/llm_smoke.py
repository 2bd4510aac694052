"""Manual smoke check of the evolution loop against a live LLM endpoint.

Reads EVOCAF_LLM_BASE_URL, EVOCAF_LLM_API_KEY and EVOCAF_LLM_MODEL, runs a
two-individual population for one generation on a single cheap fitness case
and asserts that at least one valid program was admitted and that every LLM
request appears in the audit log. Not part of the test suite: it costs money
and its outcome depends on the model.

    python scripts/llm_smoke.py [run_dir]
"""

import json
import math
import sys
import tempfile
from pathlib import Path

from evocaf.evolve import EvolveConfig, Evolver, FitnessCase
from evocaf.llm import HttpProvider

REQUIRED_FIELDS = {"kind", "system_prompt", "user_prompt", "response", "outcome"}


class CountingProvider:
    def __init__(self, inner):
        self.inner, self.requests = inner, 0

    def complete(self, req):
        self.requests += 1
        return self.inner.complete(req)


def smoke(provider, run_dir) -> dict:
    cfg = EvolveConfig(
        pop_size=2,
        generations=1,
        parents_per_offspring=2,
        fitness_instances=(FitnessCase("ackley2", 0, 10.0),),
        init_attempts_per_slot=3,
    )
    counting = CountingProvider(provider)
    ev = Evolver(cfg, counting, Path(run_dir))
    pop = ev.initial_population()
    ev.step(pop)
    admitted = [i for i in pop.individuals if math.isfinite(i.fitness)]
    log = [json.loads(l) for l in (Path(run_dir) / "llm_log.jsonl").read_text().splitlines()]
    assert admitted, "no valid program was admitted"
    assert len(log) == counting.requests, f"{counting.requests} requests but {len(log)} log entries"
    for entry in log:
        missing = REQUIRED_FIELDS - set(entry)
        assert not missing, f"log entry lacks {sorted(missing)}"
    return {"admitted": len(admitted), "requests": counting.requests, "best": pop.best.fitness}


def main(argv=None):
    argv = sys.argv[1:] if argv is None else argv
    run_dir = Path(argv[0]) if argv else Path(tempfile.mkdtemp(prefix="evocaf_smoke_"))
    result = smoke(HttpProvider(), run_dir)
    print(f"ok: {result['admitted']} admitted from {result['requests']} requests, best fitness "
          f"{result['best']:.4f}; audit log in {run_dir}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
