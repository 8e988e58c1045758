from django.core.management.base import BaseCommand, CommandError

from core.repositories import RoundResultRepository
from core.services import ConfigService, SimulationService

from ._options import add_config_arguments, collect_overrides


class Command(BaseCommand):
    help = 'Run the fog federated-learning experiment and export its artifacts'

    def add_arguments(self, parser):
        add_config_arguments(parser)

    def handle(self, *args, **options):
        resolved, error = ConfigService.resolve(options.get('config'), collect_overrides(options))
        if error:
            raise CommandError(error, returncode=2)

        run, error = SimulationService.run_simulation(resolved)
        if error:
            raise CommandError(error, returncode=1)

        self.stdout.write('client_count  avg_local  global  difference')
        for result in RoundResultRepository.get_final_rounds(run):
            self.stdout.write(
                f'{result.client_count:>12}  {result.average_local_accuracy:.4f}'
                f'     {result.global_accuracy:.4f}  {result.accuracy_gap:+.4f}'
            )
        self.stdout.write(self.style.SUCCESS(
            f"Run {run.pk} completed: {len(run.artifacts)} artifacts in {run.out_dir}"
        ))
