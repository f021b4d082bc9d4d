from cli.commands import ConfigCommand
from cli.exceptions import CliError
from cli.serializers import SelftestSerializer
from cli.services.selftest import run_selftest


class Command(ConfigCommand):
    help = "Run the gradient, degeneracy and projection invariant suites; exit 0 only if all pass."
    serializer_class = SelftestSerializer

    def run(self, data):
        results = run_selftest(data["seed"])
        for result in results:
            self.stdout.write(f"{'PASS' if result.passed else 'FAIL'} {result.name}: {result.detail}")
        failed = [result.name for result in results if not result.passed]
        if failed:
            raise CliError(f"{len(failed)} of {len(results)} checks failed: {', '.join(failed)}")
        self.stdout.write(f"All {len(results)} checks passed")
