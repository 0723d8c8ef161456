"""Built-in suites that need no scenario file."""
import logging
from typing import List, Tuple

from src.commands.context import RunContext
from src.commands.router import CommandRouter
from src.demo import run_demo
from src.exports import write_table_csv
from src.schemas import AnalysisRecord
from src.selftest import run_selftest

logger = logging.getLogger(__name__)

suite_router = CommandRouter(tags=["suites"])


@suite_router.command("demo", "worked examples against their closed-form values", needs_scenario=False)
def run_demo_suite(ctx: RunContext) -> Tuple[List[AnalysisRecord], bool]:
    rows = run_demo()
    table = write_table_csv(ctx.output("demo_table.csv"), rows)
    passed = all(row.passed for row in rows)
    logger.info("demo: %d of %d rows passed", sum(row.passed for row in rows), len(rows))
    record = AnalysisRecord(name="demo", kind="demo", outputs=[table.name],
                            report={"rows": [row.model_dump() for row in rows], "passed": passed})
    return [record], passed


@suite_router.command("selftest", "oracle-equivalence property suites", needs_scenario=False)
def run_selftest_suite(ctx: RunContext) -> Tuple[List[AnalysisRecord], bool]:
    results = run_selftest(ctx.settings.seed or 0)
    table = write_table_csv(ctx.output("selftest.csv"), results)
    passed = all(r.passed for r in results)
    records = [AnalysisRecord(name=r.suite, kind="selftest", outputs=[table.name], report=r.model_dump())
               for r in results]
    return records, passed
